//! Dense convex quadratic programming:
//!
//! ```text
//! minimise ½ xᵀQx + cᵀx   subject to   Ax ≤ b
//! ```
//!
//! with `Q` symmetric positive semidefinite, solved by a primal active-set
//! method. When `Q` is positive definite the equality-constrained
//! subproblems use the range-space (Schur complement) form, with the
//! Cholesky factor of `A_W Q⁻¹ A_Wᵀ` updated as constraints enter and leave
//! the working set. Semidefinite problems fall back to a null-space method
//! that handles directions of zero curvature. An infeasible start triggers
//! a phase-one linear program that either finds a feasible point or names
//! the constraint most responsible for infeasibility.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

pub const DEFAULT_TOL: f64 = 1e-8;

pub fn default_max_iter(n: usize, m: usize) -> usize {
    10 * (n + m)
}

#[derive(Clone, Debug, PartialEq)]
pub struct QpProblem {
    pub q: DMatrix<f64>,
    pub c: DVector<f64>,
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    /// Starting point; need not be feasible.
    pub x0: DVector<f64>,
}

impl QpProblem {
    /// Problem starting from the origin.
    pub fn new(q: DMatrix<f64>, c: DVector<f64>, a: DMatrix<f64>, b: DVector<f64>) -> Self {
        let n = c.len();
        QpProblem {
            q,
            c,
            a,
            b,
            x0: DVector::zeros(n),
        }
    }

    pub fn with_start(mut self, x0: DVector<f64>) -> Self {
        self.x0 = x0;
        self
    }

    pub fn n(&self) -> usize {
        self.c.len()
    }

    pub fn m(&self) -> usize {
        self.b.len()
    }

    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.q * x)) + self.c.dot(x)
    }

    /// Largest amount by which `x` violates a constraint (0 when feasible).
    pub fn max_violation(&self, x: &DVector<f64>) -> f64 {
        (&self.a * x - &self.b).iter().fold(0.0, |m, &v| m.max(v))
    }

    /// Componentwise feasibility with the solver's tolerance convention.
    pub fn is_feasible(&self, x: &DVector<f64>, tol: f64) -> bool {
        let ax = &self.a * x;
        (0..self.m()).all(|i| ax[i] <= self.b[i] + tol * (1.0 + self.b[i].abs()))
    }

    pub fn validate(&self) -> Result<()> {
        let (n, m) = (self.n(), self.m());
        if self.q.shape() != (n, n) || self.a.shape() != (m, n) || self.x0.len() != n {
            return Err(Error::Qp(format!(
                "inconsistent dimensions: Q {:?}, c {}, A {:?}, b {}, x0 {}",
                self.q.shape(),
                n,
                self.a.shape(),
                m,
                self.x0.len()
            )));
        }
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        if !(finite(self.q.as_slice())
            && finite(self.c.as_slice())
            && finite(self.a.as_slice())
            && finite(self.b.as_slice())
            && finite(self.x0.as_slice()))
        {
            return Err(Error::Qp("problem data must be finite".into()));
        }
        for i in 0..n {
            for j in (i + 1)..n {
                if (self.q[(i, j)] - self.q[(j, i)]).abs() > 1e-12 {
                    return Err(Error::Qp(format!("Q is not symmetric at ({i}, {j})")));
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QpStatus {
    Optimal,
    MaxIter,
    /// No point satisfies every constraint; `row` is the constraint with the
    /// largest weight in the phase-one certificate.
    Infeasible { row: usize },
    /// The objective decreases without bound along a feasible ray.
    Unbounded,
}

#[derive(Clone, Debug, PartialEq)]
pub struct QpSolution {
    pub x: DVector<f64>,
    pub status: QpStatus,
    pub objective: f64,
    pub iterations: usize,
    /// Working set at termination.
    pub active: Vec<usize>,
    /// One multiplier per constraint; zero outside the working set.
    pub multipliers: DVector<f64>,
    /// Infinity norm of `Qx + c + Aᵀλ`.
    pub kkt_residual: f64,
}

pub fn solve_default(problem: &QpProblem) -> Result<QpSolution> {
    solve(problem, DEFAULT_TOL, default_max_iter(problem.n(), problem.m()))
}

pub fn solve(problem: &QpProblem, tol: f64, max_iter: usize) -> Result<QpSolution> {
    if !(tol > 0.0 && tol.is_finite()) {
        return Err(Error::Qp(format!("tolerance must be > 0, got {tol}")));
    }
    problem.validate()?;
    let rows = Rows::new(&problem.a);

    let mut iterations = 0;
    let start = if problem.is_feasible(&problem.x0, tol) {
        problem.x0.clone()
    } else {
        match phase_one(problem, &rows, tol, max_iter) {
            PhaseOne::Feasible(x, it) => {
                iterations += it;
                x
            }
            PhaseOne::Infeasible(row, it) => {
                let x = problem.x0.clone();
                return Ok(finish(problem, x, QpStatus::Infeasible { row }, iterations + it, vec![], vec![]));
            }
            PhaseOne::Stalled(x, it) => {
                return Ok(finish(problem, x, QpStatus::MaxIter, iterations + it, vec![], vec![]));
            }
        }
    };

    let mut solver = ActiveSet::new(&problem.q, &problem.c, &rows, &problem.b, tol);
    let (x, status, it) = solver.run(start, max_iter.saturating_sub(iterations).max(1));
    let (active, lambda) = solver.final_multipliers(&x);
    Ok(finish(problem, x, status, iterations + it, active, lambda))
}

fn finish(
    problem: &QpProblem,
    x: DVector<f64>,
    status: QpStatus,
    iterations: usize,
    active: Vec<usize>,
    lambda: Vec<f64>,
) -> QpSolution {
    let mut multipliers = DVector::zeros(problem.m());
    for (&i, &l) in active.iter().zip(&lambda) {
        multipliers[i] = l;
    }
    let residual = &problem.q * &x + &problem.c + problem.a.transpose() * &multipliers;
    QpSolution {
        objective: problem.objective(&x),
        kkt_residual: residual.amax(),
        x,
        status,
        iterations,
        active,
        multipliers,
    }
}

/// Constraint rows in sparse form; layout programs have a handful of
/// non-zeros per row.
struct Rows {
    sparse: Vec<Vec<(usize, f64)>>,
    norms: Vec<f64>,
}

impl Rows {
    fn new(a: &DMatrix<f64>) -> Self {
        let sparse: Vec<Vec<(usize, f64)>> = (0..a.nrows())
            .map(|i| {
                (0..a.ncols())
                    .filter(|&j| a[(i, j)] != 0.0)
                    .map(|j| (j, a[(i, j)]))
                    .collect()
            })
            .collect();
        let norms = sparse
            .iter()
            .map(|r| r.iter().map(|(_, v)| v * v).sum::<f64>().sqrt())
            .collect();
        Rows { sparse, norms }
    }

    fn dot(&self, i: usize, v: &[f64]) -> f64 {
        self.sparse[i].iter().map(|&(j, a)| a * v[j]).sum()
    }

    fn len(&self) -> usize {
        self.sparse.len()
    }
}

/// Metric used for the working-set Gram matrix `A_W M A_Wᵀ`: `Q⁻¹` in the
/// range-space method, the identity in the null-space method.
enum Metric {
    Identity,
    Diagonal(Vec<f64>),
    Dense(DMatrix<f64>),
}

impl Metric {
    fn apply_row(&self, row: &[(usize, f64)], n: usize) -> Vec<f64> {
        let mut out = vec![0.0; n];
        match self {
            Metric::Identity => {
                for &(j, a) in row {
                    out[j] = a;
                }
            }
            Metric::Diagonal(d) => {
                for &(j, a) in row {
                    out[j] = d[j] * a;
                }
            }
            Metric::Dense(h) => {
                for &(j, a) in row {
                    for (i, o) in out.iter_mut().enumerate() {
                        *o += h[(i, j)] * a;
                    }
                }
            }
        }
        out
    }

    fn apply(&self, v: &[f64]) -> Vec<f64> {
        match self {
            Metric::Identity => v.to_vec(),
            Metric::Diagonal(d) => v.iter().zip(d).map(|(a, b)| a * b).collect(),
            Metric::Dense(h) => (h * DVector::from_column_slice(v)).as_slice().to_vec(),
        }
    }
}

/// `Q⁻¹` when `Q` is safely positive definite.
fn inverse_metric(q: &DMatrix<f64>) -> Option<Metric> {
    let n = q.nrows();
    if n == 0 {
        return Some(Metric::Identity);
    }
    let diagonal = (0..n).all(|i| (0..n).all(|j| i == j || q[(i, j)] == 0.0));
    let dmax = (0..n).map(|i| q[(i, i)].abs()).fold(0.0, f64::max);
    if diagonal {
        let ok = (0..n).all(|i| q[(i, i)] > 1e-10 * dmax.max(1e-300));
        return ok.then(|| Metric::Diagonal((0..n).map(|i| 1.0 / q[(i, i)]).collect()));
    }
    let chol = Cholesky::new(q.clone())?;
    let l = chol.l_dirty();
    let (lo, hi) = (0..n).fold((f64::INFINITY, 0.0f64), |(lo, hi), i| {
        (lo.min(l[(i, i)]), hi.max(l[(i, i)]))
    });
    if lo * lo <= 1e-10 * hi * hi {
        return None;
    }
    Some(Metric::Dense(chol.inverse()))
}

/// Working set with the Cholesky factor of its Gram matrix `A_W M A_Wᵀ`.
struct WorkingSet {
    rows: Vec<usize>,
    /// `M a_w` for every working row.
    mapped: Vec<Vec<f64>>,
    /// Dense lower-triangular factor, one row per working constraint.
    chol: Vec<Vec<f64>>,
}

impl WorkingSet {
    fn new() -> Self {
        WorkingSet {
            rows: Vec::new(),
            mapped: Vec::new(),
            chol: Vec::new(),
        }
    }

    fn len(&self) -> usize {
        self.rows.len()
    }

    /// Appends row `i` unless it is (numerically) dependent on the set.
    fn add(&mut self, i: usize, rows: &Rows, metric: &Metric, n: usize) -> bool {
        let y = metric.apply_row(&rows.sparse[i], n);
        let sigma = rows.dot(i, &y);
        let s: Vec<f64> = self.mapped.iter().map(|yj| rows.dot(i, yj)).collect();
        let l = self.forward(&s);
        let delta2 = sigma - l.iter().map(|v| v * v).sum::<f64>();
        if !(delta2 > 1e-10 * sigma.abs()) || sigma <= 0.0 {
            return false;
        }
        let k = self.len();
        for row in &mut self.chol {
            row.push(0.0);
        }
        let mut new_row = l;
        new_row.push(delta2.sqrt());
        debug_assert_eq!(new_row.len(), k + 1);
        self.chol.push(new_row);
        self.rows.push(i);
        self.mapped.push(y);
        true
    }

    /// Drops the `k`-th working constraint, restoring triangularity with
    /// Givens rotations.
    fn remove(&mut self, k: usize) {
        self.rows.remove(k);
        self.mapped.remove(k);
        self.chol.remove(k);
        let s = self.chol.len();
        for r in k..s {
            let (a, b) = (self.chol[r][r], self.chol[r][r + 1]);
            let h = a.hypot(b);
            if h == 0.0 {
                continue;
            }
            let (c, sn) = (a / h, b / h);
            for row in &mut self.chol[r..] {
                let (x, y) = (row[r], row[r + 1]);
                row[r] = c * x + sn * y;
                row[r + 1] = -sn * x + c * y;
            }
        }
        for row in &mut self.chol {
            row.pop();
        }
    }

    fn forward(&self, rhs: &[f64]) -> Vec<f64> {
        let mut out = rhs.to_vec();
        for i in 0..out.len() {
            let mut v = out[i];
            for j in 0..i {
                v -= self.chol[i][j] * out[j];
            }
            out[i] = v / self.chol[i][i];
        }
        out
    }

    fn backward(&self, rhs: &[f64]) -> Vec<f64> {
        let mut out = rhs.to_vec();
        for i in (0..out.len()).rev() {
            let mut v = out[i];
            for j in (i + 1)..out.len() {
                v -= self.chol[j][i] * out[j];
            }
            out[i] = v / self.chol[i][i];
        }
        out
    }

    /// Solves `(A_W M A_Wᵀ) z = rhs`.
    fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        self.backward(&self.forward(rhs))
    }
}

enum Direction {
    /// Newton step of the equality-constrained subproblem, with its
    /// multipliers when the range-space form produced them.
    Step(Vec<f64>, Option<Vec<f64>>),
    /// Descent direction of zero curvature.
    Ray(Vec<f64>),
}

struct ActiveSet<'a> {
    q: &'a DMatrix<f64>,
    c: &'a DVector<f64>,
    rows: &'a Rows,
    b: &'a DVector<f64>,
    tol: f64,
    metric: Metric,
    range_space: bool,
    working: WorkingSet,
    in_working: Vec<bool>,
    parked: Vec<bool>,
}

impl<'a> ActiveSet<'a> {
    fn new(q: &'a DMatrix<f64>, c: &'a DVector<f64>, rows: &'a Rows, b: &'a DVector<f64>, tol: f64) -> Self {
        let (metric, range_space) = match inverse_metric(q) {
            Some(m) => (m, true),
            None => (Metric::Identity, false),
        };
        ActiveSet {
            q,
            c,
            rows,
            b,
            tol,
            metric,
            range_space,
            working: WorkingSet::new(),
            in_working: vec![false; rows.len()],
            parked: vec![false; rows.len()],
        }
    }

    fn n(&self) -> usize {
        self.c.len()
    }

    fn gradient(&self, x: &DVector<f64>) -> Vec<f64> {
        (self.q * x + self.c).as_slice().to_vec()
    }

    fn add(&mut self, i: usize) -> bool {
        let ok = self.working.add(i, self.rows, &self.metric, self.n());
        if ok {
            self.in_working[i] = true;
        }
        ok
    }

    fn remove(&mut self, k: usize) {
        self.in_working[self.working.rows[k]] = false;
        self.working.remove(k);
        self.parked.fill(false);
    }

    fn direction(&self, g: &[f64]) -> Direction {
        if self.range_space {
            let hg = self.metric.apply(g);
            let r: Vec<f64> = self.working.rows.iter().map(|&i| self.rows.dot(i, &hg)).collect();
            let lambda: Vec<f64> = self.working.solve(&r).iter().map(|v| -v).collect();
            let mut p: Vec<f64> = hg.iter().map(|v| -v).collect();
            for (l, y) in lambda.iter().zip(&self.working.mapped) {
                for (pi, yi) in p.iter_mut().zip(y) {
                    *pi -= l * yi;
                }
            }
            Direction::Step(p, Some(lambda))
        } else {
            self.null_space_direction(g)
        }
    }

    fn null_space_direction(&self, g: &[f64]) -> Direction {
        let n = self.n();
        // Projector onto the null space of A_W.
        let mut proj = DMatrix::<f64>::identity(n, n);
        if self.working.len() > 0 {
            let k = self.working.len();
            let mut aw = DMatrix::<f64>::zeros(k, n);
            for (r, &i) in self.working.rows.iter().enumerate() {
                for &(j, v) in &self.rows.sparse[i] {
                    aw[(r, j)] = v;
                }
            }
            // (A_W A_Wᵀ)⁻¹ A_W, column by column.
            let mut g_inv_aw = DMatrix::<f64>::zeros(k, n);
            for j in 0..n {
                let col: Vec<f64> = (0..k).map(|r| aw[(r, j)]).collect();
                let z = self.working.solve(&col);
                for r in 0..k {
                    g_inv_aw[(r, j)] = z[r];
                }
            }
            proj -= aw.transpose() * g_inv_aw;
        }
        let eig = SymmetricEigen::new(proj);
        let basis: Vec<usize> = (0..n).filter(|&i| eig.eigenvalues[i] > 0.5).collect();
        if basis.is_empty() {
            return Direction::Step(vec![0.0; n], None);
        }
        let z = DMatrix::from_fn(n, basis.len(), |i, j| eig.eigenvectors[(i, basis[j])]);
        let gv = DVector::from_column_slice(g);
        let hz = z.transpose() * self.q * &z;
        let gz = z.transpose() * &gv;
        let heig = SymmetricEigen::new(hz);
        let scale = self.q.amax().max(1.0);
        let flat = |l: f64| l <= 1e-10 * scale;

        let mut ray = DVector::<f64>::zeros(basis.len());
        let mut step = DVector::<f64>::zeros(basis.len());
        for (k, &lam) in heig.eigenvalues.iter().enumerate() {
            let v = heig.eigenvectors.column(k);
            let coef = v.dot(&gz);
            if flat(lam) {
                ray -= coef * v;
            } else {
                step -= (coef / lam) * v;
            }
        }
        if ray.amax() > self.tol * gv.amax().max(1.0) {
            Direction::Ray((&z * ray).as_slice().to_vec())
        } else {
            Direction::Step((&z * step).as_slice().to_vec(), None)
        }
    }

    /// Least-squares multipliers for `g + A_Wᵀ λ = 0`.
    fn multipliers(&self, g: &[f64]) -> Vec<f64> {
        if self.range_space {
            let hg = self.metric.apply(g);
            let r: Vec<f64> = self.working.rows.iter().map(|&i| self.rows.dot(i, &hg)).collect();
            return self.working.solve(&r).iter().map(|v| -v).collect();
        }
        let r: Vec<f64> = self.working.rows.iter().map(|&i| self.rows.dot(i, g)).collect();
        self.working.solve(&r).iter().map(|v| -v).collect()
    }

    /// Longest step along `p` (capped at `cap`) and the blocking row.
    fn ratio_test(&self, x: &[f64], p: &[f64], cap: f64) -> (f64, Option<usize>) {
        let pnorm = p.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let mut best = (cap, None);
        for i in 0..self.rows.len() {
            if self.in_working[i] || self.parked[i] {
                continue;
            }
            let ap = self.rows.dot(i, p);
            if ap <= 1e-13 * self.rows.norms[i] * pnorm {
                continue;
            }
            let slack = (self.b[i] - self.rows.dot(i, x)).max(0.0);
            let t = slack / ap;
            if t < best.0 {
                best = (t, Some(i));
            }
        }
        best
    }

    fn run(&mut self, mut x: DVector<f64>, max_iter: usize) -> (DVector<f64>, QpStatus, usize) {
        let mut iter = 0;
        loop {
            if iter >= max_iter {
                return (x, QpStatus::MaxIter, iter);
            }
            iter += 1;
            let g = self.gradient(&x);
            let gscale = g.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
            let xscale = x.amax().max(1.0);
            let (p, ray, lambda) = match self.direction(&g) {
                Direction::Step(p, l) => (p, false, l),
                Direction::Ray(p) => (p, true, None),
            };
            let pmax = p.iter().fold(0.0f64, |m, v| m.max(v.abs()));

            if !ray && pmax <= self.tol * xscale {
                let lambda = match lambda {
                    Some(l) => l,
                    None => self.multipliers(&g),
                };
                let worst = lambda
                    .iter()
                    .enumerate()
                    .min_by(|a, b| a.1.total_cmp(b.1).then(a.0.cmp(&b.0)));
                match worst {
                    Some((k, &l)) if l < -self.tol * gscale => {
                        self.remove(k);
                        continue;
                    }
                    _ => return (x, QpStatus::Optimal, iter),
                }
            }

            let cap = if ray { f64::INFINITY } else { 1.0 };
            let (alpha, blocking) = self.ratio_test(x.as_slice(), &p, cap);
            if alpha.is_infinite() {
                return (x, QpStatus::Unbounded, iter);
            }
            for (xi, pi) in x.iter_mut().zip(&p) {
                *xi += alpha * pi;
            }
            if let Some(i) = blocking {
                if !self.add(i) {
                    // Dependent on the working set, so it stays satisfied
                    // (up to rounding) until a row leaves.
                    self.parked[i] = true;
                }
            }
        }
    }

    fn final_multipliers(&self, x: &DVector<f64>) -> (Vec<usize>, Vec<f64>) {
        let g = self.gradient(x);
        (self.working.rows.clone(), self.multipliers(&g))
    }
}

enum PhaseOne {
    Feasible(DVector<f64>, usize),
    Infeasible(usize, usize),
    Stalled(DVector<f64>, usize),
}

/// minimise t subject to Ax − t ≤ b, t ≥ 0, starting from (x0, max violation).
fn phase_one(problem: &QpProblem, rows: &Rows, tol: f64, max_iter: usize) -> PhaseOne {
    let (n, m) = (problem.n(), problem.m());
    let q = DMatrix::<f64>::zeros(n + 1, n + 1);
    let mut c = DVector::<f64>::zeros(n + 1);
    c[n] = 1.0;
    let mut a = DMatrix::<f64>::zeros(m + 1, n + 1);
    for i in 0..m {
        for &(j, v) in &rows.sparse[i] {
            a[(i, j)] = v;
        }
        a[(i, n)] = -1.0;
    }
    a[(m, n)] = -1.0;
    let mut b = DVector::<f64>::zeros(m + 1);
    b.rows_mut(0, m).copy_from(&problem.b);

    let mut start = DVector::<f64>::zeros(n + 1);
    start.rows_mut(0, n).copy_from(&problem.x0);
    start[n] = problem.max_violation(&problem.x0);

    let lp_rows = Rows::new(&a);
    let mut lp = ActiveSet::new(&q, &c, &lp_rows, &b, tol);
    let (z, status, iters) = lp.run(start, max_iter.max(1));
    let x = z.rows(0, n).into_owned();
    if problem.is_feasible(&x, tol) {
        return PhaseOne::Feasible(x, iters);
    }
    if status != QpStatus::Optimal {
        return PhaseOne::Stalled(x, iters);
    }
    let (active, lambda) = lp.final_multipliers(&z);
    let row = active
        .iter()
        .zip(&lambda)
        .filter(|(&i, _)| i < m)
        .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(a.0)))
        .map(|(&i, _)| i)
        .unwrap_or_else(|| {
            // Fall back to the most violated row.
            let ax = &problem.a * &x;
            (0..m)
                .max_by(|&i, &j| (ax[i] - problem.b[i]).total_cmp(&(ax[j] - problem.b[j])))
                .unwrap_or(0)
        });
    PhaseOne::Infeasible(row, iters)
}
