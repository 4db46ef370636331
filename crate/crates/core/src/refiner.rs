//! Second layout stage: move each connection site inside a rectangle of its
//! region so that parallel leader diagonals are spread evenly, without
//! changing the port assignment or introducing crossings.
//!
//! The stage builds a convex QP over site coordinates `(l_x, l_y)` and one
//! separation variable `d_j` per adjacent pair of same-band leaders:
//!
//! ```text
//! minimise  Σ (l_x − c_x)² + (l_y − c_y)²  +  w · Σ (d_j − D)²
//! ```
//!
//! where `c` are the initial sites and `D` is the largest initial
//! separation. Beyond the rectangle, separation, ordering and band-line
//! constraints, every pair of leaders gets a linear condition that keeps it
//! from meeting (see [`build_program`]), so any feasible point routes
//! without crossings.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow_model::Region;
use crate::geometry::{Point, Rect};
use crate::labeller::{
    partition_bands, route_leader, verify_crossing_free, Bands, GradientSign, LabellingConfig,
    LeaderRoute,
};
use crate::qp::{self, QpProblem, QpStatus};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RefinementConfig {
    /// Weight of the separation term.
    pub w: f64,
    /// Minimum distance from a site to any other leader.
    pub d_b: f64,
    /// Minimum distance from a site to a band separating line.
    pub d_lc: f64,
    /// Lower bound on the separation of adjacent parallel diagonals.
    pub epsilon_order: f64,
    /// Resolution of the rectangle-growing binary search.
    pub rect_tol: f64,
    /// Rectangles shrink by this much so sites stay off region boundaries.
    pub rect_inset: f64,
}

impl Default for RefinementConfig {
    fn default() -> Self {
        RefinementConfig {
            w: 1.0,
            d_b: 6.0,
            d_lc: 4.0,
            epsilon_order: 0.5,
            rect_tol: 0.1,
            rect_inset: 1.0,
        }
    }
}

impl RefinementConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("d_b", self.d_b),
            ("d_lc", self.d_lc),
            ("epsilon_order", self.epsilon_order),
            ("rect_tol", self.rect_tol),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Validation(format!("{name} must be > 0, got {v}")));
            }
        }
        if !(self.w >= 0.0 && self.w.is_finite()) {
            return Err(Error::Validation(format!("w must be >= 0, got {}", self.w)));
        }
        if !(self.rect_inset >= 0.0 && self.rect_inset.is_finite()) {
            return Err(Error::Validation(format!("rect_inset must be >= 0, got {}", self.rect_inset)));
        }
        Ok(())
    }
}

/// Largest feasible value in `[lo, hi]` of a monotone predicate, to within
/// `tol`, and whether `hi` itself was feasible. `ok(lo)` must hold.
fn grow_search(ok: impl Fn(f64) -> bool, lo: f64, hi: f64, tol: f64) -> (f64, bool) {
    if ok(hi) {
        return (hi, true);
    }
    let (mut lo, mut hi) = (lo, hi);
    while hi - lo >= tol {
        let mid = 0.5 * (lo + hi);
        if ok(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (lo, false)
}

/// Axis-aligned rectangle centred on `anchor` and inside the region,
/// grown by alternating binary searches on the half-width and half-height.
/// Each round may grow a dimension by at most the other one's extent (or
/// 5% of the region's bounding-box diagonal, whichever is larger); growing
/// stops once neither search reaches its cap and a round adds less than
/// `tol` to both.
pub fn grow_rectangle(region: &Region, anchor: Point, tol: f64) -> Result<Rect> {
    if !(tol > 0.0 && tol.is_finite()) {
        return Err(Error::Validation(format!("tol must be > 0, got {tol}")));
    }
    let poly = region.boundary();
    if !poly.contains(anchor) {
        return Err(Error::Geometry(format!(
            "anchor ({}, {}) is not inside region {}",
            anchor.x,
            anchor.y,
            region.id()
        )));
    }
    let base = 0.05 * poly.bbox().diagonal();
    let fits = |hw: f64, hh: f64| poly.contains_rect(&Rect::centered(anchor, hw, hh));
    let (mut hw, mut hh) = (0.0f64, 0.0f64);
    loop {
        let (nw, open_w) = grow_search(|v| fits(v, hh), hw, hw + hh.max(base), tol);
        let (nh, open_h) = grow_search(|v| fits(nw, v), hh, hh + nw.max(base), tol);
        let grew = open_w || open_h || nw - hw >= tol || nh - hh >= tol;
        hw = nw;
        hh = nh;
        if !grew {
            break;
        }
    }
    Ok(Rect::centered(anchor, hw, hh))
}

/// Feasible region for one site. Infinite bounds serialize as `null`.
#[derive(Clone, Debug, PartialEq)]
pub struct SiteRect {
    pub region_id: String,
    pub rect: Rect,
    /// Highest point of the nearest leader below the rectangle over its
    /// x-range, or −∞.
    pub y_lo: f64,
    /// Lowest point of the nearest leader above the rectangle, or +∞.
    pub y_hi: f64,
    pub margin: f64,
    /// Pruning left no room; the site is pinned to its anchor.
    pub degenerate: bool,
}

impl SiteRect {
    pub fn top_left(&self) -> Point {
        Point::new(self.rect.min.x, self.rect.max.y)
    }

    pub fn bottom_right(&self) -> Point {
        Point::new(self.rect.max.x, self.rect.min.y)
    }

    /// Allowed `l_y` interval: the rectangle intersected with the band
    /// `(y_lo + margin, y_hi − margin)`.
    pub fn y_bounds(&self) -> (f64, f64) {
        (
            self.rect.min.y.max(self.y_lo + self.margin),
            self.rect.max.y.min(self.y_hi - self.margin),
        )
    }
}

fn serialize_bound<S: serde::Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_some(v)
    } else {
        s.serialize_none()
    }
}

/// Shrinks a rectangle on one side so it keeps `d_b` from segment `a–b`
/// while still containing `anchor`. Tries each side and keeps the
/// largest result.
fn cut_away(r: Rect, anchor: Point, a: Point, b: Point, d_b: f64) -> Option<Rect> {
    let clear = |c: &Rect| c.distance_to_segment(a, b) >= d_b;
    let bisect = |keep: f64, far: f64, make: &dyn Fn(f64) -> Rect| -> Option<Rect> {
        if !clear(&make(keep)) {
            return None;
        }
        // `keep` is clear, `far` is not.
        let (mut good, mut bad) = (keep, far);
        for _ in 0..48 {
            let mid = 0.5 * (good + bad);
            if clear(&make(mid)) {
                good = mid;
            } else {
                bad = mid;
            }
        }
        Some(make(good))
    };
    let candidates = [
        bisect(anchor.y, r.max.y, &|v| Rect::new(r.min, Point::new(r.max.x, v))),
        bisect(anchor.y, r.min.y, &|v| Rect::new(Point::new(r.min.x, v), r.max)),
        bisect(anchor.x, r.min.x, &|v| Rect::new(Point::new(v, r.min.y), r.max)),
        bisect(anchor.x, r.max.x, &|v| Rect::new(r.min, Point::new(v, r.max.y))),
    ];
    candidates
        .into_iter()
        .flatten()
        .fold(None, |best: Option<Rect>, c| match best {
            Some(b) if b.area() >= c.area() => Some(b),
            _ => Some(c),
        })
}

/// Vertical extent of segment `a–b` over `x ∈ [x0, x1]`, if it spans any of it.
fn y_extent_over(a: Point, b: Point, x0: f64, x1: f64) -> Option<(f64, f64)> {
    let (lo_x, hi_x) = (a.x.min(b.x), a.x.max(b.x));
    if hi_x < x0 || lo_x > x1 {
        return None;
    }
    if a.x == b.x {
        return Some((a.y.min(b.y), a.y.max(b.y)));
    }
    let at = |x: f64| a.y + (b.y - a.y) * (x - a.x) / (b.x - a.x);
    let (ya, yb) = (at(lo_x.max(x0)), at(hi_x.min(x1)));
    Some((ya.min(yb), ya.max(yb)))
}

/// Shrinks `rect` until every point is at least `d_b` from every foreign
/// leader, then records the nearest leaders above and below over the
/// rectangle's x-range. Falls back to the anchor alone when no cut keeps
/// the anchor clear.
pub fn prune_rectangle(
    region_id: &str,
    rect: Rect,
    own_route: &LeaderRoute,
    foreign_routes: &[LeaderRoute],
    d_b: f64,
) -> SiteRect {
    let anchor = own_route.site;
    let mut r = rect;
    for route in foreign_routes {
        for (a, b) in route.segments() {
            if r.distance_to_segment(a, b) >= d_b {
                continue;
            }
            match cut_away(r, anchor, a, b, d_b) {
                Some(c) => r = c,
                None => {
                    return SiteRect {
                        region_id: region_id.to_string(),
                        rect: Rect::point(anchor),
                        y_lo: f64::NEG_INFINITY,
                        y_hi: f64::INFINITY,
                        margin: d_b,
                        degenerate: true,
                    }
                }
            }
        }
    }

    let (mut y_lo, mut y_hi) = (f64::NEG_INFINITY, f64::INFINITY);
    for route in foreign_routes {
        for (a, b) in route.segments() {
            if let Some((lo, hi)) = y_extent_over(a, b, r.min.x, r.max.x) {
                if lo >= r.max.y {
                    y_hi = y_hi.min(lo);
                } else if hi <= r.min.y {
                    y_lo = y_lo.max(hi);
                }
            }
        }
    }
    SiteRect {
        region_id: region_id.to_string(),
        rect: r,
        y_lo,
        y_hi,
        margin: d_b,
        degenerate: false,
    }
}

/// Position of each variable in the QP vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VariableIndex {
    pub sites: usize,
    pub pairs: usize,
}

impl VariableIndex {
    pub fn lx(&self, site: usize) -> usize {
        2 * site
    }

    pub fn ly(&self, site: usize) -> usize {
        2 * site + 1
    }

    pub fn d(&self, pair: usize) -> usize {
        2 * self.sites + pair
    }

    pub fn len(&self) -> usize {
        2 * self.sites + self.pairs
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// What a constraint row encodes, for diagnostics.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Constraint {
    RectXMax { site: usize },
    RectXMin { site: usize },
    RectYMax { site: usize },
    RectYMin { site: usize },
    SeparationUpper { pair: usize },
    SeparationLower { pair: usize },
    Order { pair: usize },
    BandLine { site: usize, line: usize },
    KeepSign { site: usize },
    Reach { site: usize },
    PairOrder { upper: usize, lower: usize },
    ClearBelow { site: usize },
    ClearAbove { site: usize },
    OppositeBands { upper: usize, lower: usize },
}

impl fmt::Display for Constraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Constraint::RectXMax { site } => write!(f, "site {site}: right edge of rectangle"),
            Constraint::RectXMin { site } => write!(f, "site {site}: left edge of rectangle"),
            Constraint::RectYMax { site } => write!(f, "site {site}: top of rectangle / leader above"),
            Constraint::RectYMin { site } => write!(f, "site {site}: bottom of rectangle / leader below"),
            Constraint::SeparationUpper { pair } | Constraint::SeparationLower { pair } => {
                write!(f, "pair {pair}: separation definition")
            }
            Constraint::Order { pair } => write!(f, "pair {pair}: minimum separation"),
            Constraint::BandLine { site, line } => write!(f, "site {site}: band line {line}"),
            Constraint::KeepSign { site } => write!(f, "site {site}: diagonal direction"),
            Constraint::Reach { site } => write!(f, "site {site}: diagonal must reach port height before the port line"),
            Constraint::PairOrder { upper, lower } => write!(f, "sites {upper}/{lower}: diagonal order"),
            Constraint::ClearBelow { site } => write!(f, "site {site}: stays above lower leaders"),
            Constraint::ClearAbove { site } => write!(f, "site {site}: stays below upper leaders"),
            Constraint::OppositeBands { upper, lower } => {
                write!(f, "sites {upper}/{lower}: opposite diagonals keep apart")
            }
        }
    }
}

/// Adjacent leaders of one band, `upper` above `lower` in port order.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeparationPair {
    pub upper: usize,
    pub lower: usize,
    pub sign: GradientSign,
}

/// Signed distance between the parallel diagonals through `upper` and
/// `lower`; positive when their order matches the port order.
pub fn separation(upper: Point, lower: Point, sign: GradientSign, k: f64) -> f64 {
    let s = sign.signum();
    (s * k * lower.x - lower.y - s * k * upper.x + upper.y) / (k * k + 1.0).sqrt()
}

/// Coefficients of [`separation`] on `(x_upper, y_upper, x_lower, y_lower)`.
fn separation_coeffs(sign: GradientSign, k: f64) -> [f64; 4] {
    let s = sign.signum();
    let r = (k * k + 1.0).sqrt();
    [-s * k / r, 1.0 / r, s * k / r, -1.0 / r]
}

#[derive(Clone, Debug, PartialEq)]
pub struct Program {
    pub problem: QpProblem,
    pub index: VariableIndex,
    pub pairs: Vec<SeparationPair>,
    pub rows: Vec<Constraint>,
    pub anchors: Vec<Point>,
    /// Separations at the anchors.
    pub initial: Vec<f64>,
    /// Target separation `D`.
    pub target: f64,
    pub w: f64,
    /// Sites whose position is fixed.
    pub pinned: Vec<bool>,
}

impl Program {
    /// Separation term and centring term at a QP vector.
    pub fn breakdown(&self, x: &DVector<f64>) -> (f64, f64) {
        let i = self.index;
        let centre = self
            .anchors
            .iter()
            .enumerate()
            .map(|(s, a)| (x[i.lx(s)] - a.x).powi(2) + (x[i.ly(s)] - a.y).powi(2))
            .sum();
        let sep = (0..self.pairs.len())
            .map(|j| (x[i.d(j)] - self.target).powi(2))
            .sum();
        (centre, sep)
    }

    pub fn goal(&self, x: &DVector<f64>) -> f64 {
        let (c, s) = self.breakdown(x);
        c + self.w * s
    }
}

struct Rows {
    entries: Vec<Vec<(usize, f64)>>,
    rhs: Vec<f64>,
    what: Vec<Constraint>,
}

impl Rows {
    fn push(&mut self, what: Constraint, entries: Vec<(usize, f64)>, rhs: f64) {
        self.entries.push(entries);
        self.rhs.push(rhs);
        self.what.push(what);
    }
}

/// Builds the refinement QP for one side's leaders. Rows, in order:
///
/// * rectangle bounds (the y-bounds also keep `margin` from the nearest
///   leaders above and below);
/// * `d_j` defined from the sites (as two opposing inequalities);
/// * `d_j ≥ floor_j`, where the floor is `epsilon_order` raised to the
///   smallest initial separation and capped at the pair's own initial
///   value, so the minimum never shrinks and the initial sites stay
///   feasible;
/// * sites keep `d_lc` from each separating line between vertically
///   separable bands;
/// * every site keeps its diagonal direction and reaches its port height
///   before the port line;
/// * every other pair of leaders that could meet keeps its initial
///   arrangement: parallel diagonals stay ordered, leaders whose vertical
///   ranges are disjoint stay disjoint. Pairs with no safe linear
///   condition are pinned.
pub fn build_program(
    routes: &[LeaderRoute],
    rects: &[SiteRect],
    bands: &Bands,
    labelling: &LabellingConfig,
    config: &RefinementConfig,
) -> Result<Program> {
    config.validate()?;
    labelling.validate()?;
    let n = routes.len();
    if n == 0 {
        return Err(Error::Validation("no leaders to refine".into()));
    }
    if rects.len() != n {
        return Err(Error::Validation(format!("{} rectangles for {n} leaders", rects.len())));
    }
    let k = labelling.k;
    let eps = config.epsilon_order;
    let anchors: Vec<Point> = routes.iter().map(|r| r.site).collect();
    let port_y = |i: usize| routes[i].port.position.y;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&i| routes[i].port.index);

    let mut pairs = Vec::new();
    for band in &bands.bands {
        for w in band.routes.windows(2) {
            pairs.push(SeparationPair {
                upper: w[0],
                lower: w[1],
                sign: band.sign,
            });
        }
    }
    let index = VariableIndex {
        sites: n,
        pairs: pairs.len(),
    };
    let initial: Vec<f64> = pairs
        .iter()
        .map(|p| separation(anchors[p.upper], anchors[p.lower], p.sign, k))
        .collect();
    let target = initial.iter().copied().fold(f64::NEG_INFINITY, f64::max).max(0.0);
    let min_initial = initial.iter().copied().fold(f64::INFINITY, f64::min);

    // Pairwise conditions, decided at the anchors.
    let mut pinned: Vec<bool> = rects.iter().map(|r| r.degenerate).collect();
    let mut pair_rows: Vec<(Constraint, Vec<(usize, f64)>, f64)> = Vec::new();
    let mut clear_below: Vec<Option<f64>> = vec![None; n];
    let mut clear_above: Vec<Option<f64>> = vec![None; n];
    let adjacent: std::collections::HashSet<(usize, usize)> =
        pairs.iter().map(|p| (p.upper, p.lower)).collect();
    for (oa, &a) in order.iter().enumerate() {
        for &b in &order[oa + 1..] {
            let (sa, sb) = (routes[a].gradient_sign, routes[b].gradient_sign);
            let (ya, yb) = (anchors[a].y, anchors[b].y);
            match (sa, sb) {
                (GradientSign::Up, GradientSign::Up) | (GradientSign::Down, GradientSign::Down) => {
                    let disjoint_gap = if sa == GradientSign::Up {
                        ya - port_y(b)
                    } else {
                        port_y(a) - yb
                    };
                    if disjoint_gap > 0.0 {
                        if sa == GradientSign::Up {
                            // y_a ≥ min(p_b + ε, y_a0)
                            let bound = (port_y(b) + eps).min(ya);
                            clear_below[a] = Some(clear_below[a].map_or(bound, |v: f64| v.max(bound)));
                        } else {
                            // y_b ≤ max(p_a − ε, y_b0)
                            let bound = (port_y(a) - eps).max(yb);
                            clear_above[b] = Some(clear_above[b].map_or(bound, |v: f64| v.min(bound)));
                        }
                        continue;
                    }
                    let d0 = separation(anchors[a], anchors[b], sa, k);
                    if d0 <= 0.0 {
                        pinned[a] = true;
                        pinned[b] = true;
                    } else if !adjacent.contains(&(a, b)) {
                        let [xa, ya_c, xb, yb_c] = separation_coeffs(sa, k);
                        let i = index;
                        pair_rows.push((
                            Constraint::PairOrder { upper: a, lower: b },
                            vec![
                                (i.lx(a), -xa),
                                (i.ly(a), -ya_c),
                                (i.lx(b), -xb),
                                (i.ly(b), -yb_c),
                            ],
                            -d0.min(eps),
                        ));
                    }
                }
                (GradientSign::Up, GradientSign::Down) => {
                    if ya > yb {
                        // y_b − y_a ≤ −min(ε, gap)
                        pair_rows.push((
                            Constraint::OppositeBands { upper: a, lower: b },
                            vec![(index.ly(b), 1.0), (index.ly(a), -1.0)],
                            -(ya - yb).min(eps),
                        ));
                    } else {
                        pinned[a] = true;
                        pinned[b] = true;
                    }
                }
                // Down above Up: the vertical ranges never overlap while
                // both keep their direction.
                (GradientSign::Down, GradientSign::Up) => {}
            }
        }
    }

    let mut rows = Rows {
        entries: Vec::new(),
        rhs: Vec::new(),
        what: Vec::new(),
    };
    for site in 0..n {
        let (lx, ly) = (index.lx(site), index.ly(site));
        let a = anchors[site];
        let (x_lo, x_hi, y_lo, y_hi) = if pinned[site] {
            (a.x, a.x, a.y, a.y)
        } else {
            let r = &rects[site];
            let (ylo, yhi) = r.y_bounds();
            // The anchor is inside by construction; guard against rounding.
            (
                r.rect.min.x.min(a.x),
                r.rect.max.x.max(a.x),
                ylo.min(a.y),
                yhi.max(a.y),
            )
        };
        rows.push(Constraint::RectXMax { site }, vec![(lx, 1.0)], x_hi);
        rows.push(Constraint::RectXMin { site }, vec![(lx, -1.0)], -x_lo);
        rows.push(Constraint::RectYMax { site }, vec![(ly, 1.0)], y_hi);
        rows.push(Constraint::RectYMin { site }, vec![(ly, -1.0)], -y_lo);
    }

    for (j, p) in pairs.iter().enumerate() {
        let [xa, ya, xb, yb] = separation_coeffs(p.sign, k);
        let (u, l) = (p.upper, p.lower);
        let def = vec![
            (index.lx(u), xa),
            (index.ly(u), ya),
            (index.lx(l), xb),
            (index.ly(l), yb),
        ];
        // d_j − sep ≤ 0 and sep − d_j ≤ 0
        let mut upper: Vec<(usize, f64)> = def.iter().map(|&(c, v)| (c, -v)).collect();
        upper.push((index.d(j), 1.0));
        rows.push(Constraint::SeparationUpper { pair: j }, upper, 0.0);
        let mut lower = def;
        lower.push((index.d(j), -1.0));
        rows.push(Constraint::SeparationLower { pair: j }, lower, 0.0);

        let floor = eps.max(min_initial).min(initial[j]);
        rows.push(Constraint::Order { pair: j }, vec![(index.d(j), -1.0)], -floor);
    }

    for (line_no, line) in bands.lines.iter().enumerate() {
        if !line.separable {
            continue;
        }
        let above = &bands.bands[line_no].routes;
        let below = &bands.bands[line_no + 1].routes;
        let gap = above.iter().map(|&r| anchors[r].y).fold(f64::INFINITY, f64::min)
            - below.iter().map(|&r| anchors[r].y).fold(f64::NEG_INFINITY, f64::max);
        let keep = config.d_lc.min(0.5 * gap);
        for &site in above {
            rows.push(
                Constraint::BandLine { site, line: line_no },
                vec![(index.ly(site), -1.0)],
                -(line.y + keep),
            );
        }
        for &site in below {
            rows.push(
                Constraint::BandLine { site, line: line_no },
                vec![(index.ly(site), 1.0)],
                line.y - keep,
            );
        }
    }

    for site in 0..n {
        let (lx, ly) = (index.lx(site), index.ly(site));
        let route = &routes[site];
        let (p, xp) = (route.port.position.y, route.port.position.x);
        let a = anchors[site];
        match route.gradient_sign {
            GradientSign::Up => {
                rows.push(Constraint::KeepSign { site }, vec![(ly, 1.0)], p);
                // x − y/k ≤ X − p/k, with a hair of room when available.
                let rhs = xp - p / k;
                let slack = rhs - (a.x - a.y / k);
                rows.push(
                    Constraint::Reach { site },
                    vec![(lx, 1.0), (ly, -1.0 / k)],
                    rhs - (1e-7 * (1.0 + xp.abs())).min(slack.max(0.0)),
                );
            }
            GradientSign::Down => {
                rows.push(Constraint::KeepSign { site }, vec![(ly, -1.0)], -p);
                let rhs = xp + p / k;
                let slack = rhs - (a.x + a.y / k);
                rows.push(
                    Constraint::Reach { site },
                    vec![(lx, 1.0), (ly, 1.0 / k)],
                    rhs - (1e-7 * (1.0 + xp.abs())).min(slack.max(0.0)),
                );
            }
        }
        if let Some(bound) = clear_below[site] {
            rows.push(Constraint::ClearBelow { site }, vec![(ly, -1.0)], -bound);
        }
        if let Some(bound) = clear_above[site] {
            rows.push(Constraint::ClearAbove { site }, vec![(ly, 1.0)], bound);
        }
    }
    for (what, entries, rhs) in pair_rows {
        rows.push(what, entries, rhs);
    }

    let nv = index.len();
    let m = rows.rhs.len();
    let mut a = DMatrix::<f64>::zeros(m, nv);
    for (r, entries) in rows.entries.iter().enumerate() {
        for &(c, v) in entries {
            a[(r, c)] += v;
        }
    }
    let mut q = DMatrix::<f64>::zeros(nv, nv);
    let mut c = DVector::<f64>::zeros(nv);
    let mut x0 = DVector::<f64>::zeros(nv);
    for (s, p) in anchors.iter().enumerate() {
        q[(index.lx(s), index.lx(s))] = 2.0;
        q[(index.ly(s), index.ly(s))] = 2.0;
        c[index.lx(s)] = -2.0 * p.x;
        c[index.ly(s)] = -2.0 * p.y;
        x0[index.lx(s)] = p.x;
        x0[index.ly(s)] = p.y;
    }
    for j in 0..pairs.len() {
        q[(index.d(j), index.d(j))] = 2.0 * config.w;
        c[index.d(j)] = -2.0 * config.w * target;
        x0[index.d(j)] = initial[j];
    }

    Ok(Program {
        problem: QpProblem::new(q, c, a, DVector::from_vec(rows.rhs)).with_start(x0),
        index,
        pairs,
        rows: rows.what,
        anchors,
        initial,
        target,
        w: config.w,
        pinned,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Separation {
    pub upper: usize,
    pub lower: usize,
    /// Gradient of the band the pair belongs to.
    pub sign: GradientSign,
    pub initial: f64,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Outcome {
    Refined {
        iterations: usize,
    },
    /// Sites were left at their anchors.
    Fallback { reason: String, clashing: Vec<String> },
}

/// Refined sites and the numbers behind them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RefinedLayoutDelta {
    pub sites: Vec<Point>,
    pub separations: Vec<Separation>,
    pub target: f64,
    pub p_centre: f64,
    pub p_sep: f64,
    pub objective: f64,
    /// Objective with every site at its anchor.
    pub anchor_objective: f64,
    #[serde(skip)]
    pub rects: Vec<SiteRect>,
    pub outcome: Outcome,
}

impl RefinedLayoutDelta {
    /// One JSON object per line: a summary record, then one per separation.
    pub fn diagnostics_jsonl(&self) -> String {
        let mut out = serde_json::json!({
            "record": "objective",
            "p_centre": self.p_centre,
            "p_sep": self.p_sep,
            "objective": self.objective,
            "anchor_objective": self.anchor_objective,
            "target": self.target,
            "outcome": self.outcome,
        })
        .to_string();
        out.push('\n');
        for (j, s) in self.separations.iter().enumerate() {
            out.push_str(
                &serde_json::json!({
                    "record": "separation",
                    "pair": j,
                    "upper": s.upper,
                    "lower": s.lower,
                    "sign": s.sign,
                    "initial": s.initial,
                    "value": s.value,
                })
                .to_string(),
            );
            out.push('\n');
        }
        out
    }
}

impl Serialize for SiteRect {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        struct Bound(f64);
        impl Serialize for Bound {
            fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
                serialize_bound(&self.0, s)
            }
        }
        let mut st = s.serialize_struct("SiteRect", 6)?;
        st.serialize_field("region_id", &self.region_id)?;
        st.serialize_field("rect", &self.rect)?;
        st.serialize_field("y_lo", &Bound(self.y_lo))?;
        st.serialize_field("y_hi", &Bound(self.y_hi))?;
        st.serialize_field("margin", &self.margin)?;
        st.serialize_field("degenerate", &self.degenerate)?;
        st.end()
    }
}

/// Refined leaders plus the record of how they were obtained.
#[derive(Clone, Debug, PartialEq)]
pub struct Refinement {
    pub routes: Vec<LeaderRoute>,
    pub delta: RefinedLayoutDelta,
}

/// Grows the site rectangle of every region around its route's site.
pub fn grow_all(routes: &[LeaderRoute], regions: &[Region], tol: f64) -> Result<Vec<Rect>> {
    routes
        .iter()
        .zip(regions)
        .map(|(r, g)| grow_rectangle(g, r.site, tol))
        .collect()
}

/// Full refinement: grow, prune, partition, solve, re-route.
pub fn refine(
    routes: &[LeaderRoute],
    regions: &[Region],
    labelling: &LabellingConfig,
    config: &RefinementConfig,
) -> Result<Refinement> {
    config.validate()?;
    let grown = grow_all(routes, regions, config.rect_tol)?;
    refine_in(routes, regions, &grown, labelling, config)
}

/// Refinement with rectangles already grown (one per route, around the
/// route's site).
pub fn refine_in(
    routes: &[LeaderRoute],
    regions: &[Region],
    grown: &[Rect],
    labelling: &LabellingConfig,
    config: &RefinementConfig,
) -> Result<Refinement> {
    config.validate()?;
    let n = routes.len();
    if n == 0 {
        return Err(Error::Validation("no leaders to refine".into()));
    }
    if regions.len() != n || grown.len() != n {
        return Err(Error::Validation(format!(
            "{n} leaders but {} regions and {} rectangles",
            regions.len(),
            grown.len()
        )));
    }
    let rects: Vec<SiteRect> = (0..n)
        .map(|i| {
            let foreign: Vec<LeaderRoute> = routes
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, r)| *r)
                .collect();
            prune_rectangle(
                regions[i].id(),
                grown[i].inset(config.rect_inset),
                &routes[i],
                &foreign,
                config.d_b,
            )
        })
        .collect();
    let bands = partition_bands(routes);
    let program = build_program(routes, &rects, &bands, labelling, config)?;
    let anchor_x = program.problem.x0.clone();
    let anchor_objective = program.goal(&anchor_x);

    let fallback = |reason: String, clashing: Vec<String>| -> Refinement {
        let (p_centre, p_sep) = program.breakdown(&anchor_x);
        Refinement {
            routes: routes.to_vec(),
            delta: RefinedLayoutDelta {
                sites: program.anchors.clone(),
                separations: program
                    .pairs
                    .iter()
                    .zip(&program.initial)
                    .map(|(p, &d)| Separation {
                        upper: p.upper,
                        lower: p.lower,
                        sign: p.sign,
                        initial: d,
                        value: d,
                    })
                    .collect(),
                target: program.target,
                p_centre,
                p_sep,
                objective: anchor_objective,
                anchor_objective,
                rects: rects.clone(),
                outcome: Outcome::Fallback { reason, clashing },
            },
        }
    };

    let solution = qp::solve_default(&program.problem)?;
    match solution.status {
        QpStatus::Optimal => {}
        QpStatus::Infeasible { row } => {
            return Ok(fallback(
                "constraints are infeasible".into(),
                vec![program.rows[row].to_string()],
            ))
        }
        other => return Ok(fallback(format!("solver stopped: {other:?}"), vec![])),
    }
    let x = &solution.x;
    let index = program.index;
    let sites: Vec<Point> = (0..n)
        .map(|i| Point::new(x[index.lx(i)], x[index.ly(i)]))
        .collect();

    let mut refined = Vec::with_capacity(n);
    for (i, &site) in sites.iter().enumerate() {
        if !regions[i].boundary().contains(site) {
            return Ok(fallback(format!("site {i} left its region"), vec![]));
        }
        match route_leader(site, routes[i].port, labelling) {
            Ok(r) => refined.push(r),
            Err(e) => return Ok(fallback(format!("site {i} cannot be routed: {e}"), vec![])),
        }
    }
    let crossings = verify_crossing_free(&refined);
    if !crossings.is_empty() {
        let clashing = crossings.iter().map(|(a, b)| format!("leaders {a} and {b} cross")).collect();
        return Ok(fallback("refined leaders cross".into(), clashing));
    }

    let (p_centre, p_sep) = program.breakdown(x);
    Ok(Refinement {
        routes: refined,
        delta: RefinedLayoutDelta {
            separations: program
                .pairs
                .iter()
                .enumerate()
                .map(|(j, p)| Separation {
                    upper: p.upper,
                    lower: p.lower,
                    sign: p.sign,
                    initial: program.initial[j],
                    value: x[index.d(j)],
                })
                .collect(),
            sites,
            target: program.target,
            p_centre,
            p_sep,
            objective: p_centre + config.w * p_sep,
            anchor_objective,
            rects,
            outcome: Outcome::Refined {
                iterations: solution.iterations,
            },
        },
    })
}
