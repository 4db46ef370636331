//! One-sided boundary labelling: match map sites to matrix ports and route
//! each pair with a fixed-gradient diagonal followed by a horizontal run.
//!
//! Ports sit on a vertical port line to the right of the map. A route
//! leaves its site along a diagonal of slope `±k`, turns horizontal at the
//! port's height, reaches the port line, and continues horizontally to the
//! port's point on the (rotated) matrix edge.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{segments_intersect, Point};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Origin,
    Destination,
}

/// Fixed leader endpoint. `index` counts from the top of the edge.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Port {
    pub index: usize,
    /// Point on the vertical port line.
    pub position: Point,
    /// Where the horizontal run meets the matrix edge; equal to `position`
    /// when the matrix edge is the port line itself.
    pub edge_point: Point,
    pub side: Side,
}

impl Port {
    pub fn new(index: usize, position: Point, side: Side) -> Self {
        Port {
            index,
            position,
            edge_point: position,
            side,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GradientSign {
    Up,
    Down,
}

impl GradientSign {
    /// +1 for up, -1 for down.
    pub fn signum(self) -> f64 {
        match self {
            GradientSign::Up => 1.0,
            GradientSign::Down => -1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LeaderRoute {
    pub site: Point,
    pub bend: Point,
    pub port: Port,
    pub gradient_sign: GradientSign,
}

impl LeaderRoute {
    /// Polyline vertices from site to matrix edge.
    pub fn points(&self) -> [Point; 4] {
        [self.site, self.bend, self.port.position, self.port.edge_point]
    }

    /// Non-degenerate segments of the polyline.
    pub fn segments(&self) -> impl Iterator<Item = (Point, Point)> {
        let p = self.points();
        (0..3).map(move |i| (p[i], p[i + 1])).filter(|(a, b)| a != b)
    }

    pub fn length(&self) -> f64 {
        self.segments().map(|(a, b)| a.distance(b)).sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabellingConfig {
    /// Gradient of the diagonals.
    pub k: f64,
    pub port_spacing: f64,
    pub port_line_x: f64,
}

impl LabellingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.k > 0.0 && self.k.is_finite()) {
            return Err(Error::Validation(format!("gradient k must be > 0, got {}", self.k)));
        }
        if !(self.port_spacing > 0.0 && self.port_spacing.is_finite()) {
            return Err(Error::Validation(format!(
                "port spacing must be > 0, got {}",
                self.port_spacing
            )));
        }
        if !self.port_line_x.is_finite() {
            return Err(Error::Validation("port line x must be finite".into()));
        }
        Ok(())
    }
}

/// Routes `site` to `port`: diagonal of slope `±k` from the site up to the
/// port's height, then horizontal.
pub fn route_leader(site: Point, port: Port, config: &LabellingConfig) -> Result<LeaderRoute> {
    config.validate()?;
    if !site.is_finite() {
        return Err(Error::Validation("site coordinates must be finite".into()));
    }
    let room = port.position.x - site.x;
    if !(room > 0.0) {
        return Err(Error::Validation(format!(
            "site x {} is not left of the port line at {}",
            site.x, port.position.x
        )));
    }
    let rise = (port.position.y - site.y).abs();
    let run = rise / config.k;
    if run > room {
        return Err(Error::SteepLeader { min_k: rise / room });
    }
    Ok(LeaderRoute {
        site,
        bend: Point::new(site.x + run, port.position.y),
        port,
        gradient_sign: if site.y <= port.position.y {
            GradientSign::Up
        } else {
            GradientSign::Down
        },
    })
}

/// True when the two polylines touch or cross anywhere.
pub fn routes_cross(a: &LeaderRoute, b: &LeaderRoute) -> bool {
    a.segments()
        .any(|(a0, a1)| b.segments().any(|(b0, b1)| segments_intersect(a0, a1, b0, b1)))
}

/// All crossing route pairs `(i, j)` with `i < j`, each reported once.
pub fn verify_crossing_free(routes: &[LeaderRoute]) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for i in 0..routes.len() {
        for j in (i + 1)..routes.len() {
            if routes_cross(&routes[i], &routes[j]) {
                out.push((i, j));
            }
        }
    }
    out
}

/// Result of [`assign_ports`]: `port_of[s]` is the index (into the `ports`
/// slice) assigned to site `s`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Assignment {
    pub port_of: Vec<usize>,
    pub repair_swaps: usize,
    /// Swaps alone did not remove every crossing and the sweep decided.
    pub swept: bool,
}

/// Site indices ordered top to bottom; ties by x, then input position.
pub fn y_order(sites: &[Point]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..sites.len()).collect();
    order.sort_by(|&a, &b| {
        sites[b]
            .y
            .total_cmp(&sites[a].y)
            .then(sites[a].x.total_cmp(&sites[b].x))
            .then(a.cmp(&b))
    });
    order
}

fn port_order(ports: &[Port]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..ports.len()).collect();
    order.sort_by(|&a, &b| {
        ports[b]
            .position
            .y
            .total_cmp(&ports[a].position.y)
            .then(a.cmp(&b))
    });
    order
}

struct Repair<'a> {
    sites: &'a [Point],
    ports: &'a [Port],
    config: &'a LabellingConfig,
    port_of: Vec<usize>,
    routes: Vec<LeaderRoute>,
}

impl Repair<'_> {
    fn crossings_with(&self, s: usize, route: &LeaderRoute, skip: usize) -> usize {
        (0..self.routes.len())
            .filter(|&t| t != s && t != skip && routes_cross(route, &self.routes[t]))
            .count()
    }

    /// Crossing-count change if sites `a` and `b` exchange ports, or `None`
    /// when either new route is infeasible.
    fn swap_delta(&self, a: usize, b: usize) -> Option<(i64, LeaderRoute, LeaderRoute)> {
        let ra = route_leader(self.sites[a], self.ports[self.port_of[b]], self.config).ok()?;
        let rb = route_leader(self.sites[b], self.ports[self.port_of[a]], self.config).ok()?;
        let before = self.crossings_with(a, &self.routes[a], b)
            + self.crossings_with(b, &self.routes[b], a)
            + usize::from(routes_cross(&self.routes[a], &self.routes[b]));
        let after = self.crossings_with(a, &ra, b)
            + self.crossings_with(b, &rb, a)
            + usize::from(routes_cross(&ra, &rb));
        Some((after as i64 - before as i64, ra, rb))
    }

    fn apply(&mut self, a: usize, b: usize, ra: LeaderRoute, rb: LeaderRoute) {
        self.port_of.swap(a, b);
        self.routes[a] = ra;
        self.routes[b] = rb;
    }

    /// Best strictly-improving swap among the given candidate pairs.
    fn best_swap(
        &self,
        pairs: impl Iterator<Item = (usize, usize)>,
    ) -> Option<(usize, usize, LeaderRoute, LeaderRoute)> {
        let mut best: Option<(i64, usize, usize, LeaderRoute, LeaderRoute)> = None;
        for (a, b) in pairs {
            if let Some((delta, ra, rb)) = self.swap_delta(a, b) {
                if delta < 0 && best.as_ref().is_none_or(|x| delta < x.0) {
                    best = Some((delta, a, b, ra, rb));
                }
            }
        }
        best.map(|(_, a, b, ra, rb)| (a, b, ra, rb))
    }
}

/// Height at `x` of a leader leaving `site` towards height `p`.
fn leader_height(site: Point, p: f64, x: f64, k: f64) -> f64 {
    let travel = k * (x - site.x);
    if site.y <= p {
        (site.y + travel).min(p)
    } else {
        (site.y - travel).max(p)
    }
}

/// Top-down sweep over the ports. Two leaders cross exactly when, at the
/// x of the right-hand site, the leader bound for the higher port is not
/// strictly above the other. Each port therefore takes a site that every
/// remaining site can stay below: sites to its right must lie under its
/// leader, and sites to its left must pass under it even when bound for
/// the next port down. Among safe sites the highest wins.
fn sweep(sites: &[Point], ports: &[Port], config: &LabellingConfig) -> Option<Vec<usize>> {
    let k = config.k;
    let order = port_order(ports);
    let mut remaining = y_order(sites);
    let mut port_of = vec![0; sites.len()];
    for (slot, &port) in order.iter().enumerate() {
        let p = ports[port].position.y;
        let next = order.get(slot + 1).map(|&q| ports[q].position.y);
        let safe = |s: usize| {
            let site = sites[s];
            route_leader(site, ports[port], config).is_ok()
                && remaining.iter().all(|&t| {
                    let other = sites[t];
                    if t == s {
                        true
                    } else if other.x >= site.x {
                        other.y < leader_height(site, p, other.x, k)
                    } else {
                        next.is_none_or(|q| leader_height(other, q, site.x, k) < site.y)
                    }
                })
        };
        let pick = remaining.iter().position(|&s| safe(s))?;
        port_of[remaining.remove(pick)] = port;
    }
    Some(port_of)
}

/// Matches sites to ports: the i-th site from the top takes the i-th port
/// from the top, then adjacent port swaps (in port order) that strictly
/// reduce the number of crossing route pairs are applied while any helps.
/// If crossings remain after that, the assignment is rebuilt by a
/// top-down sweep that only ever places a leader no later leader has to
/// cross.
pub fn assign_ports(sites: &[Point], ports: &[Port], config: &LabellingConfig) -> Result<Assignment> {
    config.validate()?;
    if sites.len() != ports.len() {
        return Err(Error::Validation(format!(
            "{} sites but {} ports",
            sites.len(),
            ports.len()
        )));
    }
    if let Some(s) = sites.iter().find(|s| !(s.x < config.port_line_x)) {
        return Err(Error::Validation(format!(
            "site ({}, {}) is not left of the port line at {}",
            s.x, s.y, config.port_line_x
        )));
    }
    let order = y_order(sites);
    for w in order.windows(2) {
        if sites[w[0]] == sites[w[1]] {
            let (first, second) = (w[0].min(w[1]), w[0].max(w[1]));
            return Err(Error::DegenerateSite { first, second });
        }
    }

    let mut port_of = vec![0; sites.len()];
    for (&s, p) in order.iter().zip(port_order(ports)) {
        port_of[s] = p;
    }
    let mut routes = Vec::with_capacity(sites.len());
    let mut steepest: Option<f64> = None;
    for (s, &p) in port_of.iter().enumerate() {
        match route_leader(sites[s], ports[p], config) {
            Ok(r) => routes.push(r),
            Err(Error::SteepLeader { min_k }) => {
                steepest = Some(steepest.map_or(min_k, |m: f64| m.max(min_k)));
            }
            Err(e) => return Err(e),
        }
    }
    if let Some(min_k) = steepest {
        return Err(Error::SteepLeader { min_k });
    }

    let mut repair = Repair {
        sites,
        ports,
        config,
        port_of,
        routes,
    };
    let mut swaps = 0;
    let mut remaining = verify_crossing_free(&repair.routes).len();
    while remaining > 0 {
        // Sites ordered by their current port, top to bottom.
        let mut by_port: Vec<usize> = (0..sites.len()).collect();
        by_port.sort_by(|&a, &b| {
            ports[repair.port_of[b]]
                .position
                .y
                .total_cmp(&ports[repair.port_of[a]].position.y)
        });
        let adjacent = by_port.windows(2).map(|w| (w[0], w[1]));
        let Some((a, b, ra, rb)) = repair.best_swap(adjacent) else {
            break;
        };
        repair.apply(a, b, ra, rb);
        swaps += 1;
        remaining = verify_crossing_free(&repair.routes).len();
    }
    if remaining == 0 {
        return Ok(Assignment {
            port_of: repair.port_of,
            repair_swaps: swaps,
            swept: false,
        });
    }
    let port_of = sweep(sites, ports, config).ok_or(Error::CrossingRepair { remaining })?;
    let routes = route_all(sites, ports, &port_of, config)?;
    let left = verify_crossing_free(&routes).len();
    if left > 0 {
        return Err(Error::CrossingRepair { remaining: left });
    }
    Ok(Assignment {
        port_of,
        repair_swaps: swaps,
        swept: true,
    })
}

/// Routes every site to its assigned port.
pub fn route_all(
    sites: &[Point],
    ports: &[Port],
    port_of: &[usize],
    config: &LabellingConfig,
) -> Result<Vec<LeaderRoute>> {
    sites
        .iter()
        .zip(port_of)
        .map(|(&s, &p)| route_leader(s, ports[p], config))
        .collect()
}

/// Maximal run of consecutive routes (in port order) sharing a gradient
/// sign. `routes` holds indices into the slice given to [`partition_bands`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub sign: GradientSign,
    pub routes: Vec<usize>,
}

/// Horizontal line between two adjacent bands. `separable` is false when
/// the bands' site ranges overlap vertically, in which case no site can
/// keep to its own side of the line.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BandLine {
    pub y: f64,
    pub separable: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bands {
    pub bands: Vec<Band>,
    /// `lines[i]` separates `bands[i]` (above) from `bands[i + 1]`.
    pub lines: Vec<BandLine>,
}

impl Bands {
    /// Band index of every route.
    pub fn band_of(&self, n_routes: usize) -> Vec<usize> {
        let mut out = vec![0; n_routes];
        for (b, band) in self.bands.iter().enumerate() {
            for &r in &band.routes {
                out[r] = b;
            }
        }
        out
    }
}

/// Splits routes (taken in port order, top first) into bands of equal
/// gradient sign and places a line midway between each adjacent pair: the
/// lowest site of the upper band and the highest site of the lower band.
pub fn partition_bands(routes: &[LeaderRoute]) -> Bands {
    let mut order: Vec<usize> = (0..routes.len()).collect();
    order.sort_by_key(|&r| routes[r].port.index);

    let mut bands: Vec<Band> = Vec::new();
    for r in order {
        match bands.last_mut() {
            Some(b) if b.sign == routes[r].gradient_sign => b.routes.push(r),
            _ => bands.push(Band {
                sign: routes[r].gradient_sign,
                routes: vec![r],
            }),
        }
    }
    let lines = bands
        .windows(2)
        .map(|w| {
            let above = w[0]
                .routes
                .iter()
                .map(|&r| routes[r].site.y)
                .fold(f64::INFINITY, f64::min);
            let below = w[1]
                .routes
                .iter()
                .map(|&r| routes[r].site.y)
                .fold(f64::NEG_INFINITY, f64::max);
            BandLine {
                y: 0.5 * (above + below),
                separable: above > below,
            }
        })
        .collect();
    Bands { bands, lines }
}
