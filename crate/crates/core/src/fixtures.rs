//! Synthetic countries for tests, benchmarks and the shipped sample files.
//!
//! Regions are cells of a jittered grid. Neighbouring cells share their
//! corner and edge-midpoint vertices exactly, so adjacency (and therefore
//! aggregation contiguity) behaves like a real map. Flows follow a gravity
//! model with a few zeros sprinkled in.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::flow_model::{FlowDataset, Region};
use crate::geometry::{Point, Polygon};

pub const AU: [&str; 8] = ["WA", "NT", "SA", "QLD", "NSW", "ACT", "VIC", "TAS"];

pub const DE: [&str; 16] = [
    "SH", "HH", "MV", "HB", "NI", "BE", "BB", "ST", "NW", "HE", "TH", "SN", "RP", "SL", "BW", "BY",
];

pub const NZ: [&str; 16] = [
    "NTL", "AUK", "WKO", "BOP", "GIS", "TKI", "HKB", "MWT", "WGN", "NSN", "TAS", "MBH", "WTC", "CAN",
    "OTA", "STL",
];

pub const CN: [&str; 34] = [
    "HL", "JL", "NM", "LN", "XJ", "GS", "NX", "SX", "HE", "BJ", "TJ", "SD", "QH", "SN", "HA", "JS",
    "XZ", "SC", "CQ", "HB", "AH", "SH", "YN", "GZ", "HN", "JX", "ZJ", "GX", "GD", "FJ", "TW", "HI",
    "HK", "MO",
];

pub const US: [&str; 51] = [
    "WA", "MT", "ND", "MN", "WI", "MI", "VT", "NH", "ME", "OR", "ID", "WY", "SD", "IA", "IL", "IN",
    "OH", "NY", "MA", "CA", "NV", "UT", "NE", "MO", "KY", "WV", "PA", "NJ", "CT", "RI", "AZ", "CO",
    "KS", "AR", "TN", "VA", "MD", "DE", "DC", "NM", "OK", "LA", "MS", "AL", "NC", "SC", "TX", "GA",
    "FL", "AK", "HI",
];

/// Region codes for one of the sample countries, by code.
pub fn country_ids(code: &str) -> Option<&'static [&'static str]> {
    match code {
        "AU" => Some(&AU),
        "DE" => Some(&DE),
        "NZ" => Some(&NZ),
        "CN" => Some(&CN),
        "US" => Some(&US),
        _ => None,
    }
}

/// Ids for `n` regions: a sample country's codes when one has exactly
/// `n` regions, otherwise `R01`, `R02`, ...
pub fn ids_for(n: usize) -> Vec<String> {
    for code in ["AU", "DE", "CN", "US"] {
        let ids = country_ids(code).expect("known code");
        if ids.len() == n {
            return ids.iter().map(|s| s.to_string()).collect();
        }
    }
    (1..=n).map(|i| format!("R{i:02}")).collect()
}

/// Size of the drawing area the synthetic maps fill, in pixels.
pub const MAP_WIDTH: f64 = 360.0;
pub const MAP_HEIGHT: f64 = 280.0;

fn grid_shape(n: usize) -> (usize, usize) {
    let aspect = MAP_WIDTH / MAP_HEIGHT;
    let cols = ((n as f64 * aspect).sqrt().ceil() as usize).max(1);
    let rows = n.div_ceil(cols);
    (cols, rows)
}

/// `n` grid cells as octagons: jittered corners plus a jittered midpoint
/// on every edge. Cells are taken row by row from the top.
pub fn grid_regions(ids: &[String], seed: u64) -> Result<Vec<Region>> {
    let n = ids.len();
    let (cols, rows) = grid_shape(n);
    let (w, h) = (MAP_WIDTH / cols as f64, MAP_HEIGHT / rows as f64);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut jitter = |scale: f64| (rng.random::<f64>() - 0.5) * 2.0 * scale;

    let mut corner = vec![vec![Point::new(0.0, 0.0); cols + 1]; rows + 1];
    for (r, line) in corner.iter_mut().enumerate() {
        for (c, p) in line.iter_mut().enumerate() {
            let inner_x = c > 0 && c < cols;
            let inner_y = r > 0 && r < rows;
            let dx = if inner_x { jitter(0.22 * w) } else { 0.0 };
            let dy = if inner_y { jitter(0.22 * h) } else { 0.0 };
            *p = Point::new(c as f64 * w + dx, MAP_HEIGHT - r as f64 * h + dy);
        }
    }
    // Midpoints of horizontal edges (between corners (r, c) and (r, c+1))
    // move vertically; those of vertical edges move horizontally.
    let mut h_mid = vec![vec![Point::new(0.0, 0.0); cols]; rows + 1];
    for (r, line) in h_mid.iter_mut().enumerate() {
        for (c, p) in line.iter_mut().enumerate() {
            let m = corner[r][c].midpoint(corner[r][c + 1]);
            let dy = if r > 0 && r < rows { jitter(0.12 * h) } else { 0.0 };
            *p = m.translate(0.0, dy);
        }
    }
    let mut v_mid = vec![vec![Point::new(0.0, 0.0); cols + 1]; rows];
    for (r, line) in v_mid.iter_mut().enumerate() {
        for (c, p) in line.iter_mut().enumerate() {
            let m = corner[r][c].midpoint(corner[r + 1][c]);
            let dx = if c > 0 && c < cols { jitter(0.12 * w) } else { 0.0 };
            *p = m.translate(dx, 0.0);
        }
    }

    ids.iter()
        .enumerate()
        .map(|(k, id)| {
            let (r, c) = (k / cols, k % cols);
            // Counter-clockwise from the bottom-left corner.
            let ring = vec![
                corner[r + 1][c],
                h_mid[r + 1][c],
                corner[r + 1][c + 1],
                v_mid[r][c + 1],
                corner[r][c + 1],
                h_mid[r][c],
                corner[r][c],
                v_mid[r][c],
            ];
            Region::new(id.clone(), id.clone(), Polygon::new(ring))
        })
        .collect()
}

/// Gravity flows between region anchors: mass product over squared
/// distance, scaled so the largest flow is about 10 000. Roughly one flow
/// in ten is zero, always including at least one off-diagonal pair.
pub fn gravity_flows(origins: &[Region], destinations: &[Region], seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9E37_79B9_7F4A_7C15);
    let mass = |rng: &mut ChaCha8Rng| (rng.random::<f64>() * 3.0).exp();
    let om: Vec<f64> = origins.iter().map(|_| mass(&mut rng)).collect();
    let dm: Vec<f64> = destinations.iter().map(|_| mass(&mut rng)).collect();
    let scale = 0.15 * MAP_WIDTH.hypot(MAP_HEIGHT);
    let mut flows: Vec<Vec<f64>> = origins
        .iter()
        .enumerate()
        .map(|(i, o)| {
            destinations
                .iter()
                .enumerate()
                .map(|(j, d)| {
                    let dist = o.anchor().distance(d.anchor()) / scale;
                    let v = om[i] * dm[j] / (1.0 + dist).powi(2);
                    if rng.random::<f64>() < 0.1 {
                        0.0
                    } else {
                        v
                    }
                })
                .collect()
        })
        .collect();
    let max = flows.iter().flatten().copied().fold(0.0, f64::max);
    for row in &mut flows {
        for v in row.iter_mut() {
            *v = (*v / max * 10_000.0).round();
        }
    }
    let (m, n) = (origins.len(), destinations.len());
    if m * n > 1 && !flows.iter().flatten().any(|&v| v == 0.0) {
        // Smallest pair that is not the single largest flow.
        let (i, j) = (0..m)
            .flat_map(|i| (0..n).map(move |j| (i, j)))
            .filter(|&(i, j)| m == 1 || n == 1 || i != j)
            .min_by(|a, b| flows[a.0][a.1].total_cmp(&flows[b.0][b.1]))
            .expect("at least two cells");
        flows[i][j] = 0.0;
    }
    if !flows.iter().flatten().any(|&v| v > 0.0) {
        flows[0][0] = 1.0;
    }
    flows
}

/// Same-country dataset with `n` synthetic regions.
pub fn synthetic_country(n: usize, seed: u64) -> Result<FlowDataset> {
    let regions = grid_regions(&ids_for(n), seed)?;
    let flows = gravity_flows(&regions, &regions, seed);
    FlowDataset::new(regions.clone(), regions, flows)
}

/// Flows from one synthetic country to another.
pub fn synthetic_pair(m: usize, n: usize, seed: u64) -> Result<FlowDataset> {
    let origin_ids: Vec<String> = ids_for(m).into_iter().map(|s| format!("O-{s}")).collect();
    let dest_ids: Vec<String> = ids_for(n).into_iter().map(|s| format!("D-{s}")).collect();
    let origins = grid_regions(&origin_ids, seed)?;
    let destinations = grid_regions(&dest_ids, seed.wrapping_add(1))?;
    let flows = gravity_flows(&origins, &destinations, seed);
    FlowDataset::new(origins, destinations, flows)
}

/// Synthetic country whose sites are moved so that many leader diagonals
/// nearly coincide: each site is pulled onto one of a few shared diagonal
/// lines (of slope +1 or -1), plus a fraction of a pixel of noise.
pub fn adversarial_country(n: usize, seed: u64) -> Result<FlowDataset> {
    let plain = grid_regions(&ids_for(n), seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xADE5_A21A);
    let spacing = 30.0;
    let regions = plain
        .into_iter()
        .map(|r| {
            let up = rng.random::<bool>();
            let noise = (rng.random::<f64>() - 0.5) * 0.4;
            let a = r.anchor();
            // Intercept of the diagonal through the anchor, snapped.
            let c = if up { a.y - a.x } else { a.y + a.x };
            let target = (c / spacing).round() * spacing + noise;
            let shift = target - c;
            // Slide perpendicular to the diagonal: half in x, half in y.
            let moved = if up {
                Point::new(a.x - shift / 2.0, a.y + shift / 2.0)
            } else {
                Point::new(a.x + shift / 2.0, a.y + shift / 2.0)
            };
            let anchor = if r.boundary().boundary_distance(moved) > 2.0 && r.boundary().contains(moved) {
                moved
            } else {
                a
            };
            Region::with_anchor(r.id(), r.name(), r.boundary().clone(), anchor)
        })
        .collect::<Result<Vec<_>>>()?;
    let flows = gravity_flows(&regions, &regions, seed);
    FlowDataset::new(regions.clone(), regions, flows)
}

/// Flow table as CSV: header `origin,<dest ids>`, one row per origin.
pub fn to_csv(dataset: &FlowDataset) -> String {
    let mut out = String::from("origin");
    for d in dataset.destinations() {
        out.push(',');
        out.push_str(d.id());
    }
    out.push('\n');
    for (i, o) in dataset.origins().iter().enumerate() {
        out.push_str(o.id());
        for v in dataset.row(i) {
            out.push(',');
            out.push_str(&format!("{v}"));
        }
        out.push('\n');
    }
    out
}

/// Regions as a GeoJSON FeatureCollection. Pixel coordinates are mapped
/// to degrees (`x / 10 + lon0`, `y / 10 + lat0`) so the files look like
/// ordinary lon/lat data.
pub fn to_geojson(regions: &[Region], lon0: f64, lat0: f64) -> String {
    let features: Vec<serde_json::Value> = regions
        .iter()
        .map(|r| {
            let mut ring: Vec<[f64; 2]> = r
                .boundary()
                .vertices()
                .iter()
                .map(|p| [round6(p.x / 10.0 + lon0), round6(p.y / 10.0 + lat0)])
                .collect();
            ring.push(ring[0]);
            serde_json::json!({
                "type": "Feature",
                "properties": { "id": r.id(), "name": r.name() },
                "geometry": { "type": "Polygon", "coordinates": [ring] },
            })
        })
        .collect();
    let doc = serde_json::json!({ "type": "FeatureCollection", "features": features });
    serde_json::to_string_pretty(&doc).expect("plain JSON values")
}

fn round6(v: f64) -> f64 {
    (v * 1e6).round() / 1e6
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_regions_share_edges() {
        let regions = grid_regions(&ids_for(16), 7).unwrap();
        // Cell 0 and its right neighbour share three vertices.
        let a = regions[0].boundary().vertices();
        let b = regions[1].boundary().vertices();
        let shared = a.iter().filter(|p| b.contains(p)).count();
        assert_eq!(shared, 3);
        assert!(regions[0].boundary().boundary_gap(regions[1].boundary()) < 1e-9);
    }

    #[test]
    fn sizes_and_ids() {
        for (n, first) in [(8, "WA"), (16, "SH"), (34, "HL"), (51, "WA"), (5, "R01")] {
            let d = synthetic_country(n, 1).unwrap();
            assert_eq!(d.m(), n);
            assert_eq!(d.origins()[0].id(), first);
            assert!(d.is_same_country());
        }
    }

    #[test]
    fn flows_have_zero_and_max() {
        let d = synthetic_country(8, 3).unwrap();
        let flat: Vec<f64> = d.flows().into_iter().flatten().collect();
        assert!(flat.contains(&0.0));
        assert_eq!(d.max_flow(), 10_000.0);
    }

    #[test]
    fn deterministic_per_seed() {
        assert_eq!(synthetic_country(16, 5).unwrap(), synthetic_country(16, 5).unwrap());
        assert_ne!(synthetic_country(16, 5).unwrap(), synthetic_country(16, 6).unwrap());
    }

    #[test]
    fn adversarial_sites_stay_inside() {
        let d = adversarial_country(34, 2).unwrap();
        for r in d.origins() {
            assert!(r.boundary().contains(r.anchor()));
        }
    }

    #[test]
    fn csv_round_trip() {
        let d = synthetic_country(8, 1).unwrap();
        let table = crate::flow_model::parse_flow_csv(to_csv(&d).as_bytes()).unwrap();
        assert_eq!(table.flows, d.flows());
    }
}
