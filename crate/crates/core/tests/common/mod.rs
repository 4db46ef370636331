//! Independent oracles shared by the integration suites.
#![allow(dead_code)]

use maptrix::qp::QpProblem;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random strictly convex QP with a known strictly feasible point.
/// Constraint rows have unit norm and every constraint has slack in
/// [0.1, 1] at the returned point.
pub fn random_qp(seed: u64, n: usize, m: usize) -> (QpProblem, DVector<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut g = |scale: f64| rng.random_range(-scale..scale);
    let mhalf = DMatrix::from_fn(n, n, |_, _| g(1.0));
    let q = mhalf.transpose() * &mhalf + DMatrix::identity(n, n) * 0.5;
    let c = DVector::from_fn(n, |_, _| g(4.0));
    let mut a = DMatrix::from_fn(m, n, |_, _| g(1.0));
    for i in 0..m {
        let norm = a.row(i).norm();
        a.row_mut(i).scale_mut(1.0 / norm);
    }
    let xf = DVector::from_fn(n, |_, _| g(1.0));
    let slack = DVector::from_fn(m, |_, _| 0.1 + 0.9 * g(1.0).abs());
    let b = &a * &xf + slack;
    (QpProblem::new(q, c, a, b), xf)
}

/// Projected-gradient (accelerated, with restarts) on the Lagrangian dual.
/// Returns the best dual value found, a lower bound on the optimum that
/// converges to it.
pub fn dual_reference(p: &QpProblem, iterations: usize) -> f64 {
    let h = p.q.clone().try_inverse().expect("reference needs positive definite Q");
    let aha = &p.a * &h * p.a.transpose();
    let lip = aha.symmetric_eigenvalues().max().max(1e-12);
    let m = p.m();
    let primal = |lam: &DVector<f64>| -(&h * (&p.c + p.a.transpose() * lam));
    let dual = |lam: &DVector<f64>| {
        let x = primal(lam);
        p.objective(&x) + lam.dot(&(&p.a * &x - &p.b))
    };

    let mut lam = DVector::<f64>::zeros(m);
    let mut y = lam.clone();
    let mut t = 1.0f64;
    let mut best = dual(&lam);
    let mut last = best;
    for _ in 0..iterations {
        let x = primal(&y);
        let grad = &p.a * &x - &p.b;
        let next = (&y + grad / lip).map(|v| v.max(0.0));
        let value = dual(&next);
        if value < last {
            // Restart momentum when the dual value drops.
            t = 1.0;
            y = lam.clone();
            continue;
        }
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        y = &next + (&next - &lam) * ((t - 1.0) / t_next);
        lam = next;
        t = t_next;
        last = value;
        best = best.max(value);
    }
    best
}

/// Uniform samples from a box around `center`, kept only when feasible.
pub fn feasible_samples(p: &QpProblem, center: &DVector<f64>, count: usize, seed: u64) -> Vec<DVector<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = p.n();
    let mut radius = 2.0;
    let mut out = Vec::with_capacity(count);
    let mut tries = 0usize;
    while out.len() < count {
        let x = center + DVector::from_fn(n, |_, _| rng.random_range(-radius..radius));
        tries += 1;
        if p.max_violation(&x) <= 0.0 {
            out.push(x);
        } else if tries.is_multiple_of(2000) && out.len() * 50 < tries {
            radius *= 0.5;
        }
    }
    out
}

/// Brute-force segment intersection (closed segments, collinear overlap
/// included), written independently of the crate's geometry.
pub fn segments_touch(a: [(f64, f64); 2], b: [(f64, f64); 2]) -> bool {
    fn cross(o: (f64, f64), p: (f64, f64), q: (f64, f64)) -> f64 {
        (p.0 - o.0) * (q.1 - o.1) - (p.1 - o.1) * (q.0 - o.0)
    }
    fn within(p: (f64, f64), s: [(f64, f64); 2]) -> bool {
        p.0 >= s[0].0.min(s[1].0) && p.0 <= s[0].0.max(s[1].0) && p.1 >= s[0].1.min(s[1].1) && p.1 <= s[0].1.max(s[1].1)
    }
    let d1 = cross(b[0], b[1], a[0]);
    let d2 = cross(b[0], b[1], a[1]);
    let d3 = cross(a[0], a[1], b[0]);
    let d4 = cross(a[0], a[1], b[1]);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0)) {
        return true;
    }
    (d1 == 0.0 && within(a[0], b))
        || (d2 == 0.0 && within(a[1], b))
        || (d3 == 0.0 && within(b[0], a))
        || (d4 == 0.0 && within(b[1], a))
}

/// Polyline vertices of a leader, repeated points dropped.
pub fn polyline(route: &maptrix::labeller::LeaderRoute) -> Vec<(f64, f64)> {
    let mut out: Vec<(f64, f64)> = Vec::new();
    for p in route.points() {
        if out.last() != Some(&(p.x, p.y)) {
            out.push((p.x, p.y));
        }
    }
    out
}

/// Every pair of leaders whose polylines meet, by exhaustive segment tests.
pub fn crossing_pairs(routes: &[maptrix::labeller::LeaderRoute]) -> Vec<(usize, usize)> {
    let lines: Vec<Vec<(f64, f64)>> = routes.iter().map(polyline).collect();
    let mut out = Vec::new();
    for i in 0..lines.len() {
        for j in (i + 1)..lines.len() {
            let hit = lines[i].windows(2).any(|a| {
                lines[j]
                    .windows(2)
                    .any(|b| segments_touch([a[0], a[1]], [b[0], b[1]]))
            });
            if hit {
                out.push((i, j));
            }
        }
    }
    out
}

/// Even-odd ray casting; points on the boundary count as outside.
pub fn strictly_inside(p: (f64, f64), ring: &[(f64, f64)]) -> bool {
    let n = ring.len();
    for i in 0..n {
        let (a, b) = (ring[i], ring[(i + 1) % n]);
        let cross = (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0);
        let on = cross == 0.0
            && p.0 >= a.0.min(b.0)
            && p.0 <= a.0.max(b.0)
            && p.1 >= a.1.min(b.1)
            && p.1 <= a.1.max(b.1);
        if on {
            return false;
        }
    }
    let mut inside = false;
    for i in 0..n {
        let (a, b) = (ring[i], ring[(i + 1) % n]);
        if (a.1 > p.1) != (b.1 > p.1) {
            let x = a.0 + (p.1 - a.1) * (b.0 - a.0) / (b.1 - a.1);
            if p.0 < x {
                inside = !inside;
            }
        }
    }
    inside
}

pub fn ring_of(region: &maptrix::flow_model::Region) -> Vec<(f64, f64)> {
    region.boundary().vertices().iter().map(|p| (p.x, p.y)).collect()
}

/// Perpendicular distance between the two parallel lines of slope `slope`
/// through `p` and `q`.
pub fn parallel_line_distance(p: (f64, f64), q: (f64, f64), slope: f64) -> f64 {
    let (cp, cq) = (p.1 - slope * p.0, q.1 - slope * q.0);
    (cp - cq).abs() / (1.0 + slope * slope).sqrt()
}
