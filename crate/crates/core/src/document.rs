//! The layout as JSON, for clients that draw it themselves.
//!
//! Coordinates are in the pixel frame of the rendered SVG: origin at the
//! top-left of the canvas, y growing downwards. Every drawable carries the
//! same element id the renderer gives it, so a client can match the two.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::assembler::{LayoutMode, MapTrixLayout, PerSide};
use crate::geometry::{Point, Rect};
use crate::labeller::GradientSign;
use crate::refiner::{Outcome, RefinedLayoutDelta};

pub const DOCUMENT_VERSION: u32 = 1;

pub type Xy = [f64; 2];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayoutDocument {
    pub version: u32,
    pub mode: LayoutMode,
    pub canvas: Size,
    pub panels: PerSide<Frame>,
    pub matrix: MatrixDoc,
    pub ordering: OrderingDoc,
    pub regions: PerSide<Vec<RegionDoc>>,
    pub leaders: PerSide<Vec<LeaderDoc>>,
    /// Row-major in dataset order.
    pub cells: Vec<CellDoc>,
    pub max_flow: f64,
    pub refinement: PerSide<Option<RefinementDoc>>,
    /// Ids of leader pairs that cross.
    pub crossings: PerSide<Vec<[String; 2]>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Size {
    pub width: f64,
    pub height: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub x: f64,
    pub y: f64,
    pub width: f64,
    pub height: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatrixDoc {
    pub center: Xy,
    pub cell_size: f64,
    pub rotation_deg: f64,
    pub rows: usize,
    pub cols: usize,
    pub separator_every: usize,
    /// Port of each row slot, top to bottom.
    pub row_ports: Vec<Xy>,
    pub col_ports: Vec<Xy>,
    pub separators: Vec<[Xy; 2]>,
}

/// Region ids per row and column slot, top to bottom.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrderingDoc {
    pub rows: Vec<String>,
    pub cols: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionDoc {
    pub id: String,
    pub element: String,
    pub name: String,
    pub polygon: Vec<Xy>,
    pub site: Xy,
    /// Out-total for origins, in-total for destinations.
    pub total: f64,
    pub radius: f64,
    /// Grey level in [0, 1].
    pub shade: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LeaderDoc {
    pub element: String,
    pub region: String,
    /// Row (or column) slot the leader ends at.
    pub slot: usize,
    pub gradient: GradientSign,
    /// Site, bend, port, matrix edge; repeated points dropped.
    pub points: Vec<Xy>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellDoc {
    pub element: String,
    pub origin: String,
    pub destination: String,
    pub value: f64,
    pub color: String,
    pub polygon: [Xy; 4],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RefinementDoc {
    pub outcome: Outcome,
    pub objective: f64,
    pub anchor_objective: f64,
    pub p_centre: f64,
    pub p_sep: f64,
    pub min_separation_before: Option<f64>,
    pub min_separation_after: Option<f64>,
}

impl RefinementDoc {
    fn new(delta: &RefinedLayoutDelta) -> Self {
        let min = |f: fn(&crate::refiner::Separation) -> f64| delta.separations.iter().map(f).reduce(f64::min);
        RefinementDoc {
            outcome: delta.outcome.clone(),
            objective: delta.objective,
            anchor_objective: delta.anchor_objective,
            p_centre: delta.p_centre,
            p_sep: delta.p_sep,
            min_separation_before: min(|s| s.initial),
            min_separation_after: min(|s| s.value),
        }
    }
}

impl LayoutDocument {
    pub fn new(layout: &MapTrixLayout) -> Self {
        let canvas = layout.canvas;
        let xy = |p: Point| -> Xy { [p.x - canvas.min.x, canvas.max.y - p.y] };
        let frame = |r: Rect| Frame {
            x: r.min.x - canvas.min.x,
            y: canvas.max.y - r.max.y,
            width: r.width(),
            height: r.height(),
        };
        let ds = &layout.dataset;
        let g = &layout.matrix;

        let (row_seps, col_seps) = g.separators();
        let matrix = MatrixDoc {
            center: xy(g.center),
            cell_size: g.cell_size,
            rotation_deg: g.rotation_deg,
            rows: g.rows,
            cols: g.cols,
            separator_every: g.separator_every,
            row_ports: g.row_ports.iter().map(|p| xy(p.position)).collect(),
            col_ports: g.col_ports.iter().map(|p| xy(p.position)).collect(),
            separators: row_seps.into_iter().chain(col_seps).map(|(a, b)| [xy(a), xy(b)]).collect(),
        };

        let ordering = OrderingDoc {
            rows: layout.ordering.rows.iter().map(|&i| ds.origins()[i].id().to_string()).collect(),
            cols: layout.ordering.cols.iter().map(|&j| ds.destinations()[j].id().to_string()).collect(),
        };

        let side = |tag: &str, origin: bool| {
            let (regions, routes, totals, radii, shades) = if origin {
                (
                    &layout.regions.origin,
                    &layout.leaders.origin,
                    ds.totals_out(),
                    &layout.glyphs.origin,
                    &layout.label_shades.origin,
                )
            } else {
                (
                    &layout.regions.destination,
                    &layout.leaders.destination,
                    ds.totals_in(),
                    &layout.glyphs.destination,
                    &layout.label_shades.destination,
                )
            };
            let slots = if origin { &layout.ordering.rows } else { &layout.ordering.cols };
            let mut slot_of = vec![0; slots.len()];
            for (slot, &i) in slots.iter().enumerate() {
                slot_of[i] = slot;
            }
            let region_docs = regions
                .iter()
                .zip(routes)
                .enumerate()
                .map(|(i, (region, route))| RegionDoc {
                    id: region.id().to_string(),
                    element: format!("region-{tag}-{}", region.id()),
                    name: region.name().to_string(),
                    polygon: region.boundary().vertices().iter().map(|&p| xy(p)).collect(),
                    site: xy(route.site),
                    total: totals[i],
                    radius: radii[i],
                    shade: shades[i],
                })
                .collect::<Vec<_>>();
            let leader_docs = regions
                .iter()
                .zip(routes)
                .enumerate()
                .map(|(i, (region, route))| {
                    let mut points: Vec<Xy> = Vec::with_capacity(4);
                    for p in route.points() {
                        let p = xy(p);
                        if points.last() != Some(&p) {
                            points.push(p);
                        }
                    }
                    LeaderDoc {
                        element: format!("leader-{tag}-{}", region.id()),
                        region: region.id().to_string(),
                        slot: slot_of[i],
                        gradient: route.gradient_sign,
                        points,
                    }
                })
                .collect::<Vec<_>>();
            (region_docs, leader_docs)
        };
        let (origin_regions, origin_leaders) = side("o", true);
        let (dest_regions, dest_leaders) = side("d", false);

        let mut row_slot = vec![0; ds.m()];
        for (r, &i) in layout.ordering.rows.iter().enumerate() {
            row_slot[i] = r;
        }
        let mut col_slot = vec![0; ds.n()];
        for (q, &j) in layout.ordering.cols.iter().enumerate() {
            col_slot[j] = q;
        }
        let mut cells = Vec::with_capacity(ds.m() * ds.n());
        for (i, o) in ds.origins().iter().enumerate() {
            for (j, d) in ds.destinations().iter().enumerate() {
                cells.push(CellDoc {
                    element: format!("cell-{}-{}", o.id(), d.id()),
                    origin: o.id().to_string(),
                    destination: d.id().to_string(),
                    value: ds.flow(i, j),
                    color: layout.cell_colors[i][j].clone(),
                    polygon: g.cell_polygon(row_slot[i], col_slot[j]).map(xy),
                });
            }
        }

        let crossing_ids = |pairs: &[(usize, usize)], origin: bool| {
            let regions = if origin { ds.origins() } else { ds.destinations() };
            pairs
                .iter()
                .map(|&(a, b)| [regions[a].id().to_string(), regions[b].id().to_string()])
                .collect()
        };

        LayoutDocument {
            version: DOCUMENT_VERSION,
            mode: layout.mode,
            canvas: Size {
                width: canvas.width(),
                height: canvas.height(),
            },
            panels: PerSide {
                origin: frame(layout.panels.origin),
                destination: frame(layout.panels.destination),
            },
            matrix,
            ordering,
            regions: PerSide {
                origin: origin_regions,
                destination: dest_regions,
            },
            leaders: PerSide {
                origin: origin_leaders,
                destination: dest_leaders,
            },
            cells,
            max_flow: ds.max_flow(),
            refinement: PerSide {
                origin: layout.refinement.origin.as_ref().map(RefinementDoc::new),
                destination: layout.refinement.destination.as_ref().map(RefinementDoc::new),
            },
            crossings: PerSide {
                origin: crossing_ids(&layout.crossings.origin, true),
                destination: crossing_ids(&layout.crossings.destination, false),
            },
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("layout document serializes")
    }

    /// SHA-256 of the compact JSON, hex encoded. Equal layouts hash equal.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_json().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::assembler::{layout, LayoutConfig};
    use crate::fixtures::synthetic_country;

    #[test]
    fn counts_and_ids() {
        let l = layout(Arc::new(synthetic_country(8, 1).unwrap()), &LayoutConfig::default()).unwrap();
        let doc = LayoutDocument::new(&l);
        assert_eq!(doc.leaders.origin.len() + doc.leaders.destination.len(), 16);
        assert_eq!(doc.cells.len(), 64);
        assert_eq!(doc.ordering.rows, doc.ordering.cols);
        assert!(doc.leaders.origin[0].element.starts_with("leader-o-"));
        let first = &doc.cells[0];
        assert_eq!(first.element, format!("cell-{}-{}", first.origin, first.destination));
    }

    #[test]
    fn points_are_inside_the_canvas() {
        let l = layout(Arc::new(synthetic_country(16, 2).unwrap()), &LayoutConfig::default()).unwrap();
        let doc = LayoutDocument::new(&l);
        let inside = |p: &Xy| (0.0..=doc.canvas.width).contains(&p[0]) && (0.0..=doc.canvas.height).contains(&p[1]);
        assert!(doc.leaders.origin.iter().flat_map(|l| &l.points).all(inside));
        assert!(doc.cells.iter().flat_map(|c| &c.polygon).all(inside));
    }

    #[test]
    fn hash_is_stable_and_round_trips() {
        let ds = Arc::new(synthetic_country(8, 3).unwrap());
        let a = LayoutDocument::new(&layout(ds.clone(), &LayoutConfig::default()).unwrap());
        let b = LayoutDocument::new(&layout(ds, &LayoutConfig::default()).unwrap());
        assert_eq!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
        let back: LayoutDocument = serde_json::from_str(&a.to_json()).unwrap();
        assert_eq!(back, a);
    }
}
