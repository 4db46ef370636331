//! Full MapTrix layout: the origin map above the destination map, the OD
//! matrix rotated by 45° to their right, rows on its upper-left edge and
//! columns on its lower-left edge, and one leader per region on each side.

use std::collections::hash_map::DefaultHasher;
use std::collections::HashMap;
use std::hash::{Hash, Hasher};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow_model::{aggregate, filter_by_range, FlowDataset, Region};
use crate::geometry::{Point, Rect};
use crate::labeller::{
    assign_ports, route_all, verify_crossing_free, LabellingConfig, LeaderRoute, Port, Side,
};
use crate::refiner::{grow_rectangle, refine_in, RefinedLayoutDelta, RefinementConfig};
use crate::render::{circle_radius, color_for_flow, StyleSpec};
use crate::selection::SelectionState;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LayoutMode {
    /// Origins and destinations are the same regions; rows and columns
    /// share one ordering.
    SameCountry,
    /// Independent orderings per side.
    TwoCountry,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LayoutConfig {
    /// Gradient of leader diagonals.
    pub k: f64,
    pub refinement: RefinementConfig,
    /// Skip the QP stage and keep sites at their anchors.
    pub refine: bool,
    /// Fixed distance from the map panels to the port line. When unset the
    /// gap is chosen so every leader can reach its port.
    pub gutter: Option<f64>,
    pub min_gutter: f64,
    /// Distance from the port line to the matrix's left corner.
    pub port_offset: f64,
    pub margin: f64,
    pub separator_every: usize,
    pub style: StyleSpec,
}

impl Default for LayoutConfig {
    fn default() -> Self {
        LayoutConfig {
            k: 1.0,
            refinement: RefinementConfig::default(),
            refine: true,
            gutter: None,
            min_gutter: 24.0,
            port_offset: 12.0,
            margin: 16.0,
            separator_every: 5,
            style: StyleSpec::default(),
        }
    }
}

impl LayoutConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.k > 0.0 && self.k.is_finite()) {
            return Err(Error::Validation(format!("k must be > 0, got {}", self.k)));
        }
        self.refinement.validate()?;
        if self.separator_every < 2 {
            return Err(Error::Validation("separator_every must be >= 2".into()));
        }
        for (name, v) in [
            ("min_gutter", self.min_gutter),
            ("port_offset", self.port_offset),
            ("margin", self.margin),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Validation(format!("{name} must be >= 0, got {v}")));
            }
        }
        if let Some(g) = self.gutter {
            if !(g > 0.0 && g.is_finite()) {
                return Err(Error::Validation(format!("gutter must be > 0, got {g}")));
            }
        }
        self.style.validate()
    }
}

/// The rotated matrix. `left` is the corner facing the maps; rows run
/// from the upper-left edge, columns from the lower-left edge. Every cell
/// is a square of side `cell_size` turned by 45°, so it spans
/// `cell_size / √2` per axis step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatrixGeometry {
    pub center: Point,
    pub left: Point,
    pub cell_size: f64,
    pub rotation_deg: f64,
    pub rows: usize,
    pub cols: usize,
    pub row_ports: Vec<Port>,
    pub col_ports: Vec<Port>,
    pub separator_every: usize,
}

impl MatrixGeometry {
    pub fn new(left: Point, rows: usize, cols: usize, cell_size: f64, port_line_x: f64, separator_every: usize) -> Self {
        let h = cell_size / std::f64::consts::SQRT_2;
        let row_ports = (0..rows)
            .map(|r| {
                let t = (rows - r) as f64 - 0.5;
                let edge = Point::new(left.x + t * h, left.y + t * h);
                Port {
                    index: r,
                    position: Point::new(port_line_x, edge.y),
                    edge_point: edge,
                    side: Side::Origin,
                }
            })
            .collect();
        let col_ports = (0..cols)
            .map(|q| {
                let t = q as f64 + 0.5;
                let edge = Point::new(left.x + t * h, left.y - t * h);
                Port {
                    index: q,
                    position: Point::new(port_line_x, edge.y),
                    edge_point: edge,
                    side: Side::Destination,
                }
            })
            .collect();
        let mut g = MatrixGeometry {
            center: left,
            left,
            cell_size,
            rotation_deg: 45.0,
            rows,
            cols,
            row_ports,
            col_ports,
            separator_every,
        };
        g.center = g.grid_point(rows as f64 / 2.0, cols as f64 / 2.0);
        g
    }

    /// Half-diagonal of a cell.
    pub fn step(&self) -> f64 {
        self.cell_size / std::f64::consts::SQRT_2
    }

    /// Point `a` cells up the row edge and `b` cells down the column edge
    /// from the left corner.
    pub fn grid_point(&self, a: f64, b: f64) -> Point {
        let h = self.step();
        Point::new(self.left.x + (a + b) * h, self.left.y + (a - b) * h)
    }

    pub fn top(&self) -> Point {
        self.grid_point(self.rows as f64, 0.0)
    }

    pub fn bottom(&self) -> Point {
        self.grid_point(0.0, self.cols as f64)
    }

    pub fn right(&self) -> Point {
        self.grid_point(self.rows as f64, self.cols as f64)
    }

    /// Corners of cell (row, col): left, top, right, bottom.
    pub fn cell_polygon(&self, row: usize, col: usize) -> [Point; 4] {
        let a = (self.rows - row) as f64;
        let b = col as f64;
        [
            self.grid_point(a - 1.0, b),
            self.grid_point(a, b),
            self.grid_point(a, b + 1.0),
            self.grid_point(a - 1.0, b + 1.0),
        ]
    }

    pub fn cell_center(&self, row: usize, col: usize) -> Point {
        self.grid_point((self.rows - row) as f64 - 0.5, col as f64 + 0.5)
    }

    /// Boundary lines drawn bold: after every `separator_every` rows (or
    /// columns), excluding the outer edges. Each is a pair of end points.
    pub fn separators(&self) -> (Vec<(Point, Point)>, Vec<(Point, Point)>) {
        let (m, n) = (self.rows as f64, self.cols as f64);
        let rows = (1..self.rows)
            .filter(|r| r % self.separator_every == 0)
            .map(|r| {
                let a = m - r as f64;
                (self.grid_point(a, 0.0), self.grid_point(a, n))
            })
            .collect();
        let cols = (1..self.cols)
            .filter(|q| q % self.separator_every == 0)
            .map(|q| (self.grid_point(0.0, q as f64), self.grid_point(m, q as f64)))
            .collect();
        (rows, cols)
    }
}

/// Region index shown at each row and column.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ordering {
    pub rows: Vec<usize>,
    pub cols: Vec<usize>,
}

/// Per-side value, origin first.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerSide<T> {
    pub origin: T,
    pub destination: T,
}

/// Grown site rectangles keyed by region id and geometry, in source
/// coordinates, shared between a layout and its relayouts.
#[derive(Debug, Default)]
pub struct RectCache {
    rects: Mutex<HashMap<(String, u64), Rect>>,
}

impl RectCache {
    fn key(region: &Region) -> (String, u64) {
        let mut h = DefaultHasher::new();
        for v in region.boundary().vertices() {
            v.x.to_bits().hash(&mut h);
            v.y.to_bits().hash(&mut h);
        }
        region.anchor().x.to_bits().hash(&mut h);
        region.anchor().y.to_bits().hash(&mut h);
        (region.id().to_string(), h.finish())
    }

    fn get_or_grow(&self, region: &Region, tol: f64) -> Result<Rect> {
        let key = Self::key(region);
        if let Some(r) = self.rects.lock().expect("rect cache poisoned").get(&key) {
            return Ok(*r);
        }
        let rect = grow_rectangle(region, region.anchor(), tol)?;
        self.rects.lock().expect("rect cache poisoned").insert(key, rect);
        Ok(rect)
    }

    pub fn len(&self) -> usize {
        self.rects.lock().expect("rect cache poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Debug)]
pub struct MapTrixLayout {
    /// Dataset as loaded, before any selection.
    pub source: Arc<FlowDataset>,
    /// Dataset shown, after filtering and aggregation.
    pub dataset: Arc<FlowDataset>,
    pub mode: LayoutMode,
    pub config: LayoutConfig,
    pub selection: SelectionState,
    pub canvas: Rect,
    pub panels: PerSide<Rect>,
    /// Regions moved into their panels, in dataset order.
    pub regions: PerSide<Vec<Region>>,
    pub matrix: MatrixGeometry,
    pub ordering: Ordering,
    /// Leader of each region, in dataset order.
    pub leaders: PerSide<Vec<LeaderRoute>>,
    pub refinement: PerSide<Option<RefinedLayoutDelta>>,
    /// Leader pairs that cross; empty unless the mirrored ordering could
    /// not be routed cleanly on the destination side.
    pub crossings: PerSide<Vec<(usize, usize)>>,
    /// Circle radius per region: total out for origins, total in for
    /// destinations.
    pub glyphs: PerSide<Vec<f64>>,
    /// Grey level in [0, 1] per region, proportional to its total.
    pub label_shades: PerSide<Vec<f64>>,
    /// Fill of cell (origin, destination), indexed by dataset order.
    pub cell_colors: Vec<Vec<String>>,
    pub(crate) cache: Arc<RectCache>,
}

impl MapTrixLayout {
    pub fn origin_leaders(&self) -> &[LeaderRoute] {
        &self.leaders.origin
    }

    pub fn dest_leaders(&self) -> &[LeaderRoute] {
        &self.leaders.destination
    }

    pub fn leader_count(&self) -> usize {
        self.leaders.origin.len() + self.leaders.destination.len()
    }

    pub fn rect_cache(&self) -> &RectCache {
        &self.cache
    }
}

fn bbox_of(regions: &[Region]) -> Rect {
    regions
        .iter()
        .map(|r| r.boundary().bbox())
        .reduce(|a, b| a.union(&b))
        .expect("non-empty region list")
}

fn ranked(order_of: &[usize]) -> Vec<usize> {
    let mut by_slot = vec![0; order_of.len()];
    for (item, &slot) in order_of.iter().enumerate() {
        by_slot[slot] = item;
    }
    by_slot
}

/// Lays out a dataset whose origins and destinations are the same regions.
/// The ordering found on the origin map is reused for the columns.
pub fn layout(dataset: Arc<FlowDataset>, config: &LayoutConfig) -> Result<MapTrixLayout> {
    build(dataset.clone(), dataset, LayoutMode::SameCountry, config, SelectionState::default(), Arc::default())
}

/// Lays out flows between two different region sets with independent row
/// and column orderings.
pub fn layout_two_country(dataset: Arc<FlowDataset>, config: &LayoutConfig) -> Result<MapTrixLayout> {
    build(dataset.clone(), dataset, LayoutMode::TwoCountry, config, SelectionState::default(), Arc::default())
}

/// Applies a selection to the layout's source dataset and lays out the
/// result. Grown site rectangles are reused from earlier layouts.
pub fn relayout(layout: &MapTrixLayout, selection: &SelectionState) -> Result<MapTrixLayout> {
    selection.validate()?;
    let mut shown = (*layout.source).clone();
    if !selection.groups.is_empty() {
        shown = aggregate(&shown, &selection.groups)?;
    }
    if let Some((lo, hi)) = selection.range {
        shown = filter_by_range(&shown, lo, hi)?.dataset;
    }
    let dataset = if selection.groups.is_empty() && selection.range.is_none() {
        layout.source.clone()
    } else {
        Arc::new(shown)
    };
    build(
        layout.source.clone(),
        dataset,
        layout.mode,
        &layout.config,
        selection.layout_key(),
        layout.cache.clone(),
    )
}

fn build(
    source: Arc<FlowDataset>,
    dataset: Arc<FlowDataset>,
    mode: LayoutMode,
    config: &LayoutConfig,
    selection: SelectionState,
    cache: Arc<RectCache>,
) -> Result<MapTrixLayout> {
    config.validate()?;
    let (m, n) = (dataset.m(), dataset.n());
    if m == 0 || n == 0 {
        return Err(Error::Validation(format!("nothing to lay out: {m} origins, {n} destinations")));
    }
    if mode == LayoutMode::SameCountry && !dataset.is_same_country() {
        return Err(Error::Mode(format!(
            "same-country layout needs identical origin and destination ids ({m} vs {n} regions)"
        )));
    }

    // Panels: origin map directly above the destination map, both as tall
    // as the taller of the two maps; the left matrix corner sits at the
    // seam so each edge spans its panel when M = N.
    let (ob, db) = (bbox_of(dataset.origins()), bbox_of(dataset.destinations()));
    let panel_h = ob.height().max(db.height());
    let panel_w = ob.width().max(db.width());
    let margin = config.margin;
    let seam = margin + panel_h;
    let place = |regions: &[Region], bb: Rect, bottom: f64| -> Vec<Region> {
        let dx = margin + 0.5 * (panel_w - bb.width()) - bb.min.x;
        let dy = bottom + 0.5 * (panel_h - bb.height()) - bb.min.y;
        regions.iter().map(|r| r.translated(dx, dy)).collect()
    };
    let origins = place(dataset.origins(), ob, seam);
    let destinations = place(dataset.destinations(), db, margin);
    let panels = PerSide {
        origin: Rect::new(Point::new(margin, seam), Point::new(margin + panel_w, seam + panel_h)),
        destination: Rect::new(Point::new(margin, margin), Point::new(margin + panel_w, seam)),
    };

    let step = panel_h / m.max(n) as f64;
    let cell_size = step * std::f64::consts::SQRT_2;
    let row_y = |r: usize| seam + ((m - r) as f64 - 0.5) * step;
    let col_y = |q: usize| seam - (q as f64 + 0.5) * step;

    let panel_right = margin + panel_w;
    let port_line_x = match config.gutter {
        Some(g) => panel_right + g,
        None => {
            // Far enough right that any site reaches any port of its side.
            let need = |regions: &[Region], top: f64, bottom: f64| {
                regions
                    .iter()
                    .map(|r| {
                        let a = r.anchor();
                        a.x + (top - a.y).abs().max((a.y - bottom).abs()) / config.k
                    })
                    .fold(f64::NEG_INFINITY, f64::max)
            };
            let reach = need(&origins, row_y(0), row_y(m - 1)).max(need(&destinations, col_y(0), col_y(n - 1)));
            (panel_right + config.min_gutter).max(reach + 0.25 * config.min_gutter)
        }
    };
    let left = Point::new(port_line_x + config.port_offset, seam);
    let matrix = MatrixGeometry::new(left, m, n, cell_size, port_line_x, config.separator_every);
    let labelling = LabellingConfig {
        k: config.k,
        port_spacing: step,
        port_line_x,
    };

    let origin_sites: Vec<Point> = origins.iter().map(Region::anchor).collect();
    let dest_sites: Vec<Point> = destinations.iter().map(Region::anchor).collect();
    let origin_assign = assign_ports(&origin_sites, &matrix.row_ports, &labelling)?;
    let origin_routes = route_all(&origin_sites, &matrix.row_ports, &origin_assign.port_of, &labelling)?;
    let rows = ranked(&origin_assign.port_of);
    let (dest_port_of, cols) = match mode {
        LayoutMode::SameCountry => (origin_assign.port_of.clone(), rows.clone()),
        LayoutMode::TwoCountry => {
            let a = assign_ports(&dest_sites, &matrix.col_ports, &labelling)?;
            let cols = ranked(&a.port_of);
            (a.port_of, cols)
        }
    };
    let dest_routes = route_all(&dest_sites, &matrix.col_ports, &dest_port_of, &labelling)?;
    let dest_crossings = verify_crossing_free(&dest_routes);

    let refine_side = |routes: Vec<LeaderRoute>,
                       placed: &[Region],
                       raw: &[Region],
                       crossings: &[(usize, usize)]|
     -> Result<(Vec<LeaderRoute>, Option<RefinedLayoutDelta>)> {
        if !config.refine || !crossings.is_empty() {
            return Ok((routes, None));
        }
        let grown = placed
            .iter()
            .zip(raw)
            .map(|(p, r)| {
                let rect = cache.get_or_grow(r, config.refinement.rect_tol)?;
                let shift = p.anchor().x - r.anchor().x;
                let lift = p.anchor().y - r.anchor().y;
                Ok(Rect::new(rect.min.translate(shift, lift), rect.max.translate(shift, lift)))
            })
            .collect::<Result<Vec<_>>>()?;
        let out = refine_in(&routes, placed, &grown, &labelling, &config.refinement)?;
        Ok((out.routes, Some(out.delta)))
    };
    let (origin_routes, origin_delta) = refine_side(origin_routes, &origins, dataset.origins(), &[])?;
    let (dest_routes, dest_delta) =
        refine_side(dest_routes, &destinations, dataset.destinations(), &dest_crossings)?;

    let totals_out = dataset.totals_out();
    let totals_in = dataset.totals_in();
    let max_total = totals_out
        .iter()
        .chain(totals_in)
        .copied()
        .fold(0.0, f64::max);
    let style = &config.style;
    let glyphs = PerSide {
        origin: totals_out.iter().map(|&t| circle_radius(t, max_total, style)).collect(),
        destination: totals_in.iter().map(|&t| circle_radius(t, max_total, style)).collect(),
    };
    let shade = |t: f64| if max_total > 0.0 { t / max_total } else { 0.0 };
    let label_shades = PerSide {
        origin: totals_out.iter().map(|&t| shade(t)).collect(),
        destination: totals_in.iter().map(|&t| shade(t)).collect(),
    };
    let max_flow = dataset.max_flow();
    let cell_colors = (0..m)
        .map(|i| {
            dataset
                .row(i)
                .iter()
                .map(|&v| color_for_flow(v, max_flow, style).map(|c| c.hex()))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;

    let canvas = Rect::new(
        Point::new(0.0, 0.0),
        Point::new(matrix.right().x + margin, (seam + panel_h).max(matrix.top().y) + margin),
    );
    let canvas = canvas.union(&Rect::point(Point::new(0.0, matrix.bottom().y - margin)));

    Ok(MapTrixLayout {
        source,
        dataset,
        mode,
        config: config.clone(),
        selection,
        canvas,
        panels,
        regions: PerSide {
            origin: origins,
            destination: destinations,
        },
        matrix,
        ordering: Ordering { rows, cols },
        leaders: PerSide {
            origin: origin_routes,
            destination: dest_routes,
        },
        refinement: PerSide {
            origin: origin_delta,
            destination: dest_delta,
        },
        crossings: PerSide {
            origin: Vec::new(),
            destination: dest_crossings,
        },
        glyphs,
        label_shades,
        cell_colors,
        cache,
    })
}
