//! Flow table (CSV) and boundary (GeoJSON) ingestion.
//!
//! The flow table's first row holds destination ids, its first column origin
//! ids, and every other cell a flow value. The corner cell is ignored.
//! Boundaries are a GeoJSON FeatureCollection; each feature carries its id
//! in `properties.id` (falling back to the feature-level `id`).

use std::collections::{BTreeSet, HashMap};
use std::str::FromStr;

use geojson::{GeoJson, GeometryValue};

use super::{FlowDataset, Region};
use crate::error::{Error, Result};
use crate::geometry::{Point, Polygon, Rect};

#[derive(Clone, Debug, PartialEq)]
pub struct FlowTable {
    pub origin_ids: Vec<String>,
    pub destination_ids: Vec<String>,
    pub flows: Vec<Vec<f64>>,
}

pub fn parse_flow_csv(bytes: &[u8]) -> Result<FlowTable> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(bytes);
    let mut records = reader.records();
    let header = records
        .next()
        .ok_or_else(|| Error::Validation("flow table is empty".into()))?
        .map_err(|e| Error::Validation(format!("flow table: {e}")))?;
    let destination_ids: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    if destination_ids.is_empty() {
        return Err(Error::Validation("flow table has no destination columns".into()));
    }

    let mut origin_ids = Vec::new();
    let mut flows = Vec::new();
    for (line, rec) in records.enumerate() {
        let rec = rec.map_err(|e| Error::Validation(format!("flow table: {e}")))?;
        let mut cells = rec.iter();
        let id = cells.next().unwrap_or_default().to_string();
        let row = cells
            .map(|c| {
                c.parse::<f64>().map_err(|_| {
                    Error::Validation(format!("row {} ({id}): {c:?} is not a number", line + 2))
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        if row.len() != destination_ids.len() {
            return Err(Error::Validation(format!(
                "row {} ({id}) has {} values, expected {}",
                line + 2,
                row.len(),
                destination_ids.len()
            )));
        }
        if let Some(v) = row.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::Validation(format!("row {id}: flow {v} is negative or not finite")));
        }
        origin_ids.push(id);
        flows.push(row);
    }
    if origin_ids.is_empty() {
        return Err(Error::Validation("flow table has no origin rows".into()));
    }
    Ok(FlowTable {
        origin_ids,
        destination_ids,
        flows,
    })
}

/// One boundary feature in source (longitude, latitude) coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryFeature {
    pub id: String,
    pub name: String,
    pub ring: Vec<(f64, f64)>,
}

fn ring_area(ring: &[Vec<f64>]) -> f64 {
    let n = ring.len();
    (0..n)
        .map(|i| {
            let (a, b) = (&ring[i], &ring[(i + 1) % n]);
            a[0] * b[1] - b[0] * a[1]
        })
        .sum::<f64>()
        .abs()
}

pub fn parse_boundaries(bytes: &[u8]) -> Result<Vec<BoundaryFeature>> {
    let text = std::str::from_utf8(bytes)
        .map_err(|e| Error::Validation(format!("boundaries are not UTF-8: {e}")))?;
    let gj = GeoJson::from_str(text).map_err(|e| Error::Validation(format!("boundaries: {e}")))?;
    let GeoJson::FeatureCollection(fc) = gj else {
        return Err(Error::Validation("boundaries must be a FeatureCollection".into()));
    };

    let mut out = Vec::with_capacity(fc.features.len());
    for (k, f) in fc.features.into_iter().enumerate() {
        let prop = |key: &str| {
            f.properties
                .as_ref()
                .and_then(|p| p.get(key))
                .and_then(|v| match v {
                    serde_json::Value::String(s) => Some(s.clone()),
                    serde_json::Value::Number(n) => Some(n.to_string()),
                    _ => None,
                })
        };
        let id = prop("id")
            .or_else(|| {
                f.id.as_ref().map(|id| match id {
                    geojson::feature::Id::String(s) => s.clone(),
                    geojson::feature::Id::Number(n) => n.to_string(),
                })
            })
            .ok_or_else(|| Error::Validation(format!("feature #{k} has no id")))?;
        let name = prop("name").unwrap_or_else(|| id.clone());

        let positions: Vec<Vec<f64>> = match f.geometry.map(|g| g.value) {
            Some(GeometryValue::Polygon { coordinates }) => coordinates
                .into_iter()
                .next()
                .map(|ring| ring.iter().map(|p| p.as_slice().to_vec()).collect())
                .unwrap_or_default(),
            // Multi-part regions keep their largest part.
            Some(GeometryValue::MultiPolygon { coordinates }) => coordinates
                .into_iter()
                .filter_map(|poly| poly.into_iter().next())
                .map(|ring| ring.iter().map(|p| p.as_slice().to_vec()).collect::<Vec<_>>())
                .max_by(|a, b| ring_area(a).total_cmp(&ring_area(b)))
                .unwrap_or_default(),
            other => {
                return Err(Error::Geometry(format!(
                    "feature {id}: expected Polygon or MultiPolygon, got {}",
                    other.map(|v| v.type_name()).unwrap_or("no geometry")
                )))
            }
        };
        if positions.iter().any(|p| p.len() < 2) {
            return Err(Error::Geometry(format!("feature {id}: malformed position")));
        }
        out.push(BoundaryFeature {
            id,
            name,
            ring: positions.iter().map(|p| (p[0], p[1])).collect(),
        });
    }
    Ok(out)
}

/// Equirectangular projection scaled (uniformly) to fit a panel box.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Projection {
    pub panel: Rect,
    pub padding: f64,
}

impl Default for Projection {
    fn default() -> Self {
        Projection {
            panel: Rect::new(Point::new(0.0, 0.0), Point::new(400.0, 300.0)),
            padding: 12.0,
        }
    }
}

impl Projection {
    pub fn with_panel(width: f64, height: f64) -> Self {
        Projection {
            panel: Rect::new(Point::new(0.0, 0.0), Point::new(width, height)),
            ..Default::default()
        }
    }

    /// Projects every ring jointly so relative sizes are preserved.
    pub fn project(&self, rings: &[Vec<(f64, f64)>]) -> Result<Vec<Vec<Point>>> {
        let all = rings.iter().flatten();
        let (mut lon0, mut lon1, mut lat0, mut lat1) =
            (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for &(lon, lat) in all {
            if !lon.is_finite() || !lat.is_finite() {
                return Err(Error::Geometry("non-finite coordinate".into()));
            }
            lon0 = lon0.min(lon);
            lon1 = lon1.max(lon);
            lat0 = lat0.min(lat);
            lat1 = lat1.max(lat);
        }
        if !(lon1 > lon0 && lat1 > lat0) {
            return Err(Error::Geometry("boundaries have an empty extent".into()));
        }
        let parallel = (0.5 * (lat0 + lat1)).to_radians().cos().max(1e-6);
        let (w, h) = ((lon1 - lon0) * parallel, lat1 - lat0);
        let avail_w = (self.panel.width() - 2.0 * self.padding).max(1e-9);
        let avail_h = (self.panel.height() - 2.0 * self.padding).max(1e-9);
        let scale = (avail_w / w).min(avail_h / h);
        let ox = self.panel.min.x + self.padding + 0.5 * (avail_w - w * scale);
        let oy = self.panel.min.y + self.padding + 0.5 * (avail_h - h * scale);
        Ok(rings
            .iter()
            .map(|ring| {
                ring.iter()
                    .map(|&(lon, lat)| {
                        Point::new(ox + (lon - lon0) * parallel * scale, oy + (lat - lat0) * scale)
                    })
                    .collect()
            })
            .collect())
    }
}

fn unmatched(csv_ids: &BTreeSet<&str>, feature_ids: &BTreeSet<&str>) -> Vec<String> {
    csv_ids
        .symmetric_difference(feature_ids)
        .map(|s| s.to_string())
        .collect()
}

fn regions_for(features: &[BoundaryFeature], projection: &Projection) -> Result<HashMap<String, Region>> {
    let rings: Vec<Vec<(f64, f64)>> = features.iter().map(|f| f.ring.clone()).collect();
    let projected = projection.project(&rings)?;
    features
        .iter()
        .zip(projected)
        .map(|(f, ring)| Ok((f.id.clone(), Region::new(f.id.clone(), f.name.clone(), Polygon::new(ring))?)))
        .collect()
}

fn check_unique(features: &[BoundaryFeature]) -> Result<()> {
    let mut seen = BTreeSet::new();
    for f in features {
        if !seen.insert(f.id.as_str()) {
            return Err(Error::Validation(format!("duplicate boundary feature id {}", f.id)));
        }
    }
    Ok(())
}

/// Single-geography ingestion: every CSV id must name a boundary feature and
/// every feature must appear in the table. When the row and column id sets
/// coincide, columns are reordered to follow the rows.
pub fn load_dataset(flow_csv: &[u8], boundaries: &[u8], projection: &Projection) -> Result<FlowDataset> {
    let mut table = parse_flow_csv(flow_csv)?;
    let features = parse_boundaries(boundaries)?;
    check_unique(&features)?;

    let csv_ids: BTreeSet<&str> = table
        .origin_ids
        .iter()
        .chain(&table.destination_ids)
        .map(String::as_str)
        .collect();
    let feature_ids: BTreeSet<&str> = features.iter().map(|f| f.id.as_str()).collect();
    let missing = unmatched(&csv_ids, &feature_ids);
    if !missing.is_empty() {
        return Err(Error::Ingest { unmatched: missing });
    }

    let rows: BTreeSet<&String> = table.origin_ids.iter().collect();
    let cols: BTreeSet<&String> = table.destination_ids.iter().collect();
    if rows == cols && table.origin_ids != table.destination_ids {
        let col_of: HashMap<&String, usize> = table
            .destination_ids
            .iter()
            .enumerate()
            .map(|(j, id)| (id, j))
            .collect();
        let order: Vec<usize> = table.origin_ids.iter().map(|id| col_of[id]).collect();
        table.flows = table
            .flows
            .iter()
            .map(|row| order.iter().map(|&j| row[j]).collect())
            .collect();
        table.destination_ids = table.origin_ids.clone();
    }

    let regions = regions_for(&features, projection)?;
    let pick = |ids: &[String]| ids.iter().map(|id| regions[id].clone()).collect::<Vec<_>>();
    FlowDataset::new(pick(&table.origin_ids), pick(&table.destination_ids), table.flows)
}

/// Two-geography ingestion: rows name origin features, columns destination
/// features; each side is projected into its own panel.
pub fn load_two_sided(
    flow_csv: &[u8],
    origin_boundaries: &[u8],
    destination_boundaries: &[u8],
    projection: &Projection,
) -> Result<FlowDataset> {
    let table = parse_flow_csv(flow_csv)?;
    let of = parse_boundaries(origin_boundaries)?;
    let df = parse_boundaries(destination_boundaries)?;
    check_unique(&of)?;
    check_unique(&df)?;

    let mut missing = unmatched(
        &table.origin_ids.iter().map(String::as_str).collect(),
        &of.iter().map(|f| f.id.as_str()).collect(),
    );
    missing.extend(unmatched(
        &table.destination_ids.iter().map(String::as_str).collect(),
        &df.iter().map(|f| f.id.as_str()).collect(),
    ));
    if !missing.is_empty() {
        missing.sort();
        missing.dedup();
        return Err(Error::Ingest { unmatched: missing });
    }

    let origin_regions = regions_for(&of, projection)?;
    let dest_regions = regions_for(&df, projection)?;
    FlowDataset::new(
        table.origin_ids.iter().map(|id| origin_regions[id].clone()).collect(),
        table.destination_ids.iter().map(|id| dest_regions[id].clone()).collect(),
        table.flows,
    )
}
