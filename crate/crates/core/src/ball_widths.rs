//! Kolmogorov widths `d_n(B_p^m, ℓ_q^m)` of finite-dimensional unit balls.
//!
//! Three estimates are provided:
//!
//! * [`phi_gluskin`], the two-branch order formula `Φ(m, n, p, q)`;
//! * [`coordinate_subspace_bound`], the exact worst-case error of the
//!   coordinate subspace `span{e_1..e_n}`, a certified upper bound;
//! * [`ball_width_bruteforce`], a direct search over `n`-dimensional
//!   subspaces for small `m`.
//!
//! The brute-force search writes the width of a fixed subspace `L` as
//! `sup_{x ∈ B_p} dist_q(x, L)`. The distance is a convex problem solved
//! exactly (`q = 2`), by Newton-reweighted least squares (`1 < q < ∞`) or
//! by vertex enumeration of the `ℓ_1` regression polytope (`q = 1`). The
//! supremum of this convex function over the ball is attained at extreme
//! points: for `p = 1` only `±e_i` are checked, otherwise conditional
//! gradient ascent runs from many boundary starts. The outer
//! minimization over subspaces uses BFGS on a soft-max of the distances
//! from a working set of near-maximizers, refreshed between stages.

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stream_rng;

/// An `ℓ_p` exponent in `[1, ∞]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Exponent {
    Finite(f64),
    Infinity,
}

impl Exponent {
    /// `1/p`, zero for `p = ∞`.
    pub fn recip(self) -> f64 {
        match self {
            Exponent::Finite(p) => 1.0 / p,
            Exponent::Infinity => 0.0,
        }
    }

    pub fn finite(self) -> Option<f64> {
        match self {
            Exponent::Finite(p) => Some(p),
            Exponent::Infinity => None,
        }
    }

    pub fn value(self) -> f64 {
        self.finite().unwrap_or(f64::INFINITY)
    }
}

impl From<f64> for Exponent {
    fn from(p: f64) -> Self {
        if p == f64::INFINITY {
            Exponent::Infinity
        } else {
            Exponent::Finite(p)
        }
    }
}

impl std::fmt::Display for Exponent {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Exponent::Finite(p) => write!(f, "{p}"),
            Exponent::Infinity => write!(f, "inf"),
        }
    }
}

/// Width problem for `B_p^m` in `ℓ_q^m` with subspaces of dimension `n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BallWidthInstance {
    pub m: usize,
    pub n: usize,
    pub p: Exponent,
    pub q: Exponent,
}

impl BallWidthInstance {
    pub fn new(m: usize, n: usize, p: impl Into<Exponent>, q: impl Into<Exponent>) -> Result<Self> {
        let (p, q) = (p.into(), q.into());
        if m == 0 {
            return Err(Error::InvalidInstance("ambient dimension must be positive".into()));
        }
        if n > m {
            return Err(Error::InvalidInstance(format!("subspace dimension {n} exceeds m = {m}")));
        }
        for e in [p, q] {
            if let Exponent::Finite(v) = e {
                if !(v.is_finite() && v >= 1.0) {
                    return Err(Error::InvalidExponent(v));
                }
            }
        }
        Ok(Self { m, n, p, q })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundDirection {
    UpperBound,
    LowerBound,
    TwoSided,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WidthMethod {
    GluskinFormula,
    CoordinateSubspace,
    BruteForce,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WidthDiagnostics {
    pub restarts: usize,
    /// Best value over the random restarts alone.
    pub best: f64,
    pub median: f64,
    /// Value of the coordinate subspace under the same inner estimator.
    pub coordinate_candidate: f64,
    /// Restarts whose final stage met the BFGS tolerance.
    pub converged_restarts: usize,
    /// The reported subspace came from a converged search.
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WidthEstimate {
    pub value: f64,
    pub direction: BoundDirection,
    pub method: WidthMethod,
    pub diagnostics: Option<WidthDiagnostics>,
    /// Orthonormal basis of the reported subspace, one column per entry.
    pub basis: Vec<Vec<f64>>,
}

/// `Φ(m, n, p, q)`.
///
/// For `2 <= p < q <= ∞` this is `(min{1, m^{1/q} n^{-1/2}})^{(1/p-1/q)/(1/2-1/q)}`;
/// for `1 <= p < 2 <= q <= ∞` it is
/// `max{m^{1/q-1/p}, min{1, m^{1/q} n^{-1/2}} (1 - n/m)^{1/2}}`.
/// `n = 0` clamps the inner minimum to 1.
pub fn phi_gluskin(inst: &BallWidthInstance) -> Result<f64> {
    let (m, n) = (inst.m, inst.n);
    if m <= n {
        return Err(Error::InvalidInstance(format!("Φ needs m > n, got m = {m}, n = {n}")));
    }
    let (ip, iq) = (inst.p.recip(), inst.q.recip());
    let pv = inst.p.value();
    let qv = inst.q.value();
    let clamp = if n == 0 {
        1.0
    } else {
        (m as f64).powf(iq) / (n as f64).sqrt()
    }
    .min(1.0);
    if pv >= 2.0 && pv < qv {
        Ok(clamp.powf((ip - iq) / (0.5 - iq)))
    } else if (1.0..2.0).contains(&pv) && qv >= 2.0 {
        let first = (m as f64).powf(iq - ip);
        let second = clamp * (1.0 - n as f64 / m as f64).sqrt();
        Ok(first.max(second))
    } else {
        Err(Error::OutOfBranch { p: pv, q: qv })
    }
}

/// `sup_{x ∈ B_p^m} dist_q(x, span{e_1..e_n})`.
pub fn coordinate_subspace_bound(inst: &BallWidthInstance) -> f64 {
    if inst.n == inst.m {
        return 0.0;
    }
    let (ip, iq) = (inst.p.recip(), inst.q.recip());
    if iq > ip {
        ((inst.m - inst.n) as f64).powf(iq - ip)
    } else {
        1.0
    }
}

/// Tuning of [`ball_width_bruteforce_with`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BruteForceOptions {
    pub restarts: usize,
    /// Boundary starts for the inner supremum when `p > 1`.
    pub inner_starts: usize,
    /// Guard on the ambient dimension.
    pub max_dim: usize,
    /// Soft-max exponents of the outer stages.
    pub softmax_stages: Vec<f64>,
    pub bfgs_iterations: usize,
    /// Number of near-maximizers kept in the working set.
    pub working_set: usize,
}

impl Default for BruteForceOptions {
    fn default() -> Self {
        Self {
            restarts: 64,
            inner_starts: 256,
            max_dim: 8,
            softmax_stages: vec![8.0, 64.0, 512.0, 4096.0, 16384.0],
            bfgs_iterations: 200,
            working_set: 24,
        }
    }
}

/// Brute-force width with default options and the given restart count.
pub fn ball_width_bruteforce(
    inst: &BallWidthInstance,
    restarts: usize,
    seed: u64,
) -> Result<WidthEstimate> {
    let opts = BruteForceOptions {
        restarts,
        ..BruteForceOptions::default()
    };
    ball_width_bruteforce_with(inst, &opts, seed)
}

/// Minimizes the worst-case `ℓ_q` distance from `B_p^m` over subspaces.
///
/// The reported value is always an upper estimate attained by an explicit
/// subspace, never worse than the coordinate subspace, which is one of the
/// candidates. Restart `i` draws from stream `i + 1` of `seed`.
pub fn ball_width_bruteforce_with(
    inst: &BallWidthInstance,
    opts: &BruteForceOptions,
    seed: u64,
) -> Result<WidthEstimate> {
    if inst.m > opts.max_dim {
        return Err(Error::DimensionGuard {
            m: inst.m,
            max: opts.max_dim,
        });
    }
    let (Some(p), Some(q)) = (inst.p.finite(), inst.q.finite()) else {
        return Err(Error::InvalidInstance(
            "brute force supports finite exponents only".into(),
        ));
    };
    let geo = Geometry {
        m: inst.m,
        n: inst.n,
        p,
        q,
    };
    let coordinate = DMatrix::<f64>::identity(geo.m, geo.n);
    if geo.n == geo.m {
        return Ok(WidthEstimate {
            value: 0.0,
            direction: BoundDirection::TwoSided,
            method: WidthMethod::BruteForce,
            diagnostics: None,
            basis: columns(&coordinate),
        });
    }
    let mut base_rng = stream_rng(seed, 0);
    let coord_sup = geo.inner_sup(&coordinate, &[], opts.inner_starts, &mut base_rng);
    if geo.n == 0 {
        return Ok(WidthEstimate {
            value: coord_sup.value,
            direction: BoundDirection::UpperBound,
            method: WidthMethod::BruteForce,
            diagnostics: Some(WidthDiagnostics {
                restarts: 0,
                best: coord_sup.value,
                median: coord_sup.value,
                coordinate_candidate: coord_sup.value,
                converged_restarts: 0,
                converged: true,
            }),
            basis: Vec::new(),
        });
    }

    let runs: Vec<RestartResult> = (0..opts.restarts)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(seed, i as u64 + 1);
            geo.restart(opts, &mut rng)
        })
        .collect();

    let mut best_value = coord_sup.value;
    let mut best_frame = coordinate;
    let mut converged = true;
    for run in &runs {
        if run.value < best_value {
            best_value = run.value;
            best_frame = run.frame.clone();
            converged = run.converged;
        }
    }
    let mut values: Vec<f64> = runs.iter().map(|r| r.value).collect();
    values.sort_by(f64::total_cmp);
    let median = if values.is_empty() {
        f64::NAN
    } else {
        values[values.len() / 2]
    };
    Ok(WidthEstimate {
        value: best_value,
        direction: BoundDirection::UpperBound,
        method: WidthMethod::BruteForce,
        diagnostics: Some(WidthDiagnostics {
            restarts: runs.len(),
            best: values.first().copied().unwrap_or(f64::NAN),
            median,
            coordinate_candidate: coord_sup.value,
            converged_restarts: runs.iter().filter(|r| r.converged).count(),
            converged,
        }),
        basis: columns(&best_frame),
    })
}

fn columns(a: &DMatrix<f64>) -> Vec<Vec<f64>> {
    a.column_iter().map(|c| c.iter().copied().collect()).collect()
}

/// Worst-case distance of the ball `B_p^m` from the span of `frame`
/// (`m × n`, any basis), estimated as [`ball_width_bruteforce`] does for its
/// final value.
pub fn subspace_deviation(frame: &DMatrix<f64>, p: f64, q: f64, starts: usize, seed: u64) -> f64 {
    let geo = Geometry {
        m: frame.nrows(),
        n: frame.ncols(),
        p,
        q,
    };
    let mut rng = stream_rng(seed, 0);
    geo.inner_sup(frame, &[], starts, &mut rng).value
}

/// Distance from `x` to the span of `frame` in `ℓ_q`, with the dual vector.
pub fn subspace_distance(frame: &DMatrix<f64>, x: &DVector<f64>, q: f64) -> f64 {
    distance(frame, x, q).dist
}

struct RestartResult {
    value: f64,
    frame: DMatrix<f64>,
    converged: bool,
}

struct Geometry {
    m: usize,
    n: usize,
    p: f64,
    q: f64,
}

struct Projection {
    dist: f64,
    coeffs: DVector<f64>,
    /// Norming functional of the residual; annihilates the subspace.
    dual: DVector<f64>,
}

struct InnerSup {
    value: f64,
    /// Distinct local maximizers, best first.
    points: Vec<(f64, DVector<f64>)>,
}

fn lq_norm(v: &DVector<f64>, q: f64) -> f64 {
    if q == 2.0 {
        v.norm()
    } else if q == 1.0 {
        v.iter().map(|x| x.abs()).sum()
    } else {
        v.iter().map(|x| x.abs().powf(q)).sum::<f64>().powf(1.0 / q)
    }
}

/// Gradient of `‖·‖_q` at `r` (a norming functional for `q = 1`).
fn norm_gradient(r: &DVector<f64>, q: f64) -> DVector<f64> {
    let nr = lq_norm(r, q);
    if nr == 0.0 {
        return DVector::zeros(r.len());
    }
    if q == 2.0 {
        r / nr
    } else if q == 1.0 {
        r.map(f64::signum)
    } else {
        r.map(|v| v.signum() * (v.abs() / nr).powf(q - 1.0))
    }
}

fn least_squares(a: &DMatrix<f64>, x: &DVector<f64>) -> DVector<f64> {
    let gram = a.transpose() * a;
    let rhs = a.transpose() * x;
    match gram.clone().cholesky() {
        Some(ch) => ch.solve(&rhs),
        None => a.clone().svd(true, true).solve(x, 1e-14).expect("svd solve"),
    }
}

fn distance(a: &DMatrix<f64>, x: &DVector<f64>, q: f64) -> Projection {
    let n = a.ncols();
    if n == 0 {
        return Projection {
            dist: lq_norm(x, q),
            coeffs: DVector::zeros(0),
            dual: norm_gradient(x, q),
        };
    }
    if q == 1.0 {
        return l1_distance(a, x);
    }
    let mut c = least_squares(a, x);
    let mut r = x - a * &c;
    if q == 2.0 {
        return Projection {
            dist: r.norm(),
            dual: norm_gradient(&r, 2.0),
            coeffs: c,
        };
    }
    let xnorm = x.amax();
    let power = |r: &DVector<f64>| r.iter().map(|v| v.abs().powf(q)).sum::<f64>();
    let mut obj = power(&r);
    for _ in 0..100 {
        let rmax = r.amax();
        if rmax <= 1e-15 * xnorm {
            break;
        }
        let floor = 1e-12 * rmax;
        let w = r.map(|v| v.abs().max(floor).powf(q - 2.0));
        let g = r.map(|v| v.signum() * v.abs().powf(q - 1.0));
        let mut h = DMatrix::zeros(n, n);
        for i in 0..a.nrows() {
            let row = a.row(i);
            h += row.transpose() * row * w[i];
        }
        let rhs = a.transpose() * &g;
        let step = match h.cholesky() {
            Some(ch) => ch.solve(&rhs) / (q - 1.0),
            None => break,
        };
        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..50 {
            let trial_c = &c + &step * alpha;
            let trial_r = x - a * &trial_c;
            let trial_obj = power(&trial_r);
            if trial_obj <= obj {
                let rel = (obj - trial_obj) / obj.max(f64::MIN_POSITIVE);
                c = trial_c;
                r = trial_r;
                obj = trial_obj;
                accepted = rel > 1e-14;
                break;
            }
            alpha *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    Projection {
        dist: obj.powf(1.0 / q),
        dual: norm_gradient(&r, q),
        coeffs: c,
    }
}

/// Visits every `n`-subset of `0..m` in lexicographic order.
fn for_each_subset(m: usize, n: usize, mut f: impl FnMut(&[usize])) {
    let mut idx: Vec<usize> = (0..n).collect();
    loop {
        f(&idx);
        let mut i = n;
        loop {
            if i == 0 {
                return;
            }
            i -= 1;
            if idx[i] != i + m - n {
                break;
            }
            if i == 0 {
                return;
            }
        }
        if idx[i] == i + m - n {
            return;
        }
        idx[i] += 1;
        for j in i + 1..n {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// `ℓ_1` regression by enumerating basic solutions: some optimum
/// interpolates `x` on `n` coordinates.
fn l1_distance(a: &DMatrix<f64>, x: &DVector<f64>) -> Projection {
    let (m, n) = (a.nrows(), a.ncols());
    let mut best: Option<(f64, DVector<f64>, Vec<usize>)> = None;
    for_each_subset(m, n, |rows| {
        let sub = a.select_rows(rows.iter());
        let rhs = DVector::from_iterator(n, rows.iter().map(|&i| x[i]));
        let Some(lu) = sub.lu().solve(&rhs) else {
            return;
        };
        if lu.iter().any(|v| !v.is_finite()) {
            return;
        }
        let d = lq_norm(&(x - a * &lu), 1.0);
        if best.as_ref().is_none_or(|(bd, _, _)| d < *bd) {
            best = Some((d, lu, rows.to_vec()));
        }
    });
    let (dist, coeffs, rows) = best.expect("an orthonormal frame has an invertible n×n minor");
    let r = x - a * &coeffs;
    // Dual certificate: signs off the basis, completed so that Aᵀy = 0.
    let mut y = DVector::zeros(m);
    let mut in_basis = vec![false; m];
    for &i in &rows {
        in_basis[i] = true;
    }
    for i in 0..m {
        if !in_basis[i] {
            y[i] = r[i].signum();
        }
    }
    let sub_t = a.select_rows(rows.iter()).transpose();
    let rhs = -(a.transpose() * &y);
    if let Some(ys) = sub_t.lu().solve(&rhs) {
        for (k, &i) in rows.iter().enumerate() {
            y[i] = ys[k].clamp(-1.0, 1.0);
        }
    }
    Projection { dist, coeffs, dual: y }
}

/// `argmax_{‖x‖_p <= 1} ⟨y, x⟩`.
fn dual_maximizer(y: &DVector<f64>, p: f64) -> DVector<f64> {
    if p == 2.0 {
        return y / y.norm();
    }
    let pc = p / (p - 1.0);
    let x = y.map(|v| v.signum() * v.abs().powf(pc - 1.0));
    let nx = lq_norm(&x, p);
    x / nx
}

fn random_sphere_point(m: usize, p: f64, rng: &mut impl rand::Rng) -> DVector<f64> {
    loop {
        let x = DVector::from_iterator(m, (0..m).map(|_| StandardNormal.sample(rng)));
        let nx = lq_norm(&x, p);
        if nx > 0.0 {
            return x / nx;
        }
    }
}

fn same_point(a: &DVector<f64>, b: &DVector<f64>) -> bool {
    (a - b).amax() < 1e-6 || (a + b).amax() < 1e-6
}

impl Geometry {
    fn unit(&self, i: usize) -> DVector<f64> {
        let mut e = DVector::zeros(self.m);
        e[i] = 1.0;
        e
    }

    /// Conditional gradient ascent of `dist_q(·, L)` on the `ℓ_p` sphere.
    /// Each step maximizes the linearization, which for a convex function
    /// never decreases the value.
    fn ascend(&self, a: &DMatrix<f64>, x0: DVector<f64>) -> (f64, DVector<f64>) {
        let mut x = x0;
        let mut proj = distance(a, &x, self.q);
        for _ in 0..200 {
            if proj.dual.amax() == 0.0 {
                break;
            }
            let next = dual_maximizer(&proj.dual, self.p);
            let next_proj = distance(a, &next, self.q);
            if next_proj.dist <= proj.dist * (1.0 + 1e-13) {
                if next_proj.dist > proj.dist {
                    x = next;
                    proj = next_proj;
                }
                break;
            }
            x = next;
            proj = next_proj;
        }
        (proj.dist, x)
    }

    fn inner_sup(
        &self,
        a: &DMatrix<f64>,
        warm: &[DVector<f64>],
        starts: usize,
        rng: &mut impl rand::Rng,
    ) -> InnerSup {
        let mut found: Vec<(f64, DVector<f64>)> = Vec::new();
        if self.p == 1.0 {
            for i in 0..self.m {
                let e = self.unit(i);
                found.push((distance(a, &e, self.q).dist, e));
            }
        } else {
            let mut seeds: Vec<DVector<f64>> = (0..self.m).map(|i| self.unit(i)).collect();
            seeds.extend(warm.iter().cloned());
            while seeds.len() < starts.max(self.m) {
                seeds.push(random_sphere_point(self.m, self.p, rng));
            }
            for s in seeds {
                let (v, x) = self.ascend(a, s);
                if !found.iter().any(|(_, y)| same_point(&x, y)) {
                    found.push((v, x));
                }
            }
        }
        found.sort_by(|l, r| r.0.total_cmp(&l.0));
        InnerSup {
            value: found.first().map_or(0.0, |f| f.0),
            points: found,
        }
    }

    /// Soft-max of the working-set distances and its gradient in `vec(A)`.
    fn softmax_objective(
        &self,
        a: &DMatrix<f64>,
        working: &[DVector<f64>],
        s: f64,
    ) -> (f64, DMatrix<f64>) {
        let projs: Vec<Projection> = working.iter().map(|x| distance(a, x, self.q)).collect();
        let gmax = projs.iter().fold(0.0f64, |m, p| m.max(p.dist));
        if gmax == 0.0 {
            return (0.0, DMatrix::zeros(self.m, self.n));
        }
        let sum: f64 = projs.iter().map(|p| (p.dist / gmax).powf(s)).sum();
        let value = gmax * sum.powf(1.0 / s);
        let mut grad = DMatrix::zeros(self.m, self.n);
        for pr in &projs {
            let weight = (pr.dist / value).powf(s - 1.0);
            if weight > 1e-300 {
                grad -= &pr.dual * pr.coeffs.transpose() * weight;
            }
        }
        (value, grad)
    }

    fn restart(&self, opts: &BruteForceOptions, rng: &mut impl rand::Rng) -> RestartResult {
        let raw = DMatrix::from_fn(self.m, self.n, |_, _| StandardNormal.sample(rng));
        let mut a = orthonormalize(&raw);
        let sup = self.inner_sup(&a, &[], opts.inner_starts, rng);
        let mut working: Vec<DVector<f64>> = Vec::new();
        merge_working(&mut working, &sup.points, opts.working_set);
        let mut best = (sup.value, a.clone());
        let mut converged = false;
        for &s in &opts.softmax_stages {
            let (next, ok) = bfgs(
                |mat| self.softmax_objective(mat, &working, s),
                &a,
                opts.bfgs_iterations,
            );
            converged = ok;
            a = orthonormalize(&next);
            let warm: Vec<DVector<f64>> = working.clone();
            let sup = self.inner_sup(&a, &warm, opts.inner_starts, rng);
            merge_working(&mut working, &sup.points, opts.working_set);
            if sup.value < best.0 {
                best = (sup.value, a.clone());
            }
        }
        RestartResult {
            value: best.0,
            frame: best.1,
            converged,
        }
    }
}

fn merge_working(working: &mut Vec<DVector<f64>>, points: &[(f64, DVector<f64>)], cap: usize) {
    let take = cap.div_ceil(2).max(1);
    for (_, x) in points.iter().take(take) {
        if !working.iter().any(|y| same_point(x, y)) {
            working.push(x.clone());
        }
    }
    if working.len() > cap {
        let drop = working.len() - cap;
        working.drain(..drop);
    }
}

fn orthonormalize(a: &DMatrix<f64>) -> DMatrix<f64> {
    a.clone().qr().q()
}

/// BFGS with Armijo backtracking over matrix-valued arguments.
/// Returns the final point and whether the tolerance was met.
fn bfgs(
    f: impl Fn(&DMatrix<f64>) -> (f64, DMatrix<f64>),
    x0: &DMatrix<f64>,
    max_iter: usize,
) -> (DMatrix<f64>, bool) {
    let (rows, cols) = x0.shape();
    let dim = rows * cols;
    let flat = |m: &DMatrix<f64>| DVector::from_column_slice(m.as_slice());
    let shape = |v: &DVector<f64>| DMatrix::from_column_slice(rows, cols, v.as_slice());
    let mut x = flat(x0);
    let (mut fx, g) = f(x0);
    let mut g = flat(&g);
    let mut hinv = DMatrix::<f64>::identity(dim, dim);
    let mut stall = 0;
    for _ in 0..max_iter {
        if g.norm() <= 1e-12 * (1.0 + fx.abs()) {
            return (shape(&x), true);
        }
        let mut d = -(&hinv * &g);
        if d.dot(&g) >= 0.0 {
            hinv = DMatrix::identity(dim, dim);
            d = -g.clone();
        }
        let slope = d.dot(&g);
        let mut alpha = 1.0;
        let mut step = None;
        for _ in 0..50 {
            let xt = &x + &d * alpha;
            let (ft, gt) = f(&shape(&xt));
            if ft <= fx + 1e-4 * alpha * slope {
                step = Some((xt, ft, flat(&gt)));
                break;
            }
            alpha *= 0.5;
        }
        let Some((xn, fnew, gn)) = step else {
            return (shape(&x), true);
        };
        let s = &xn - &x;
        let y = &gn - &g;
        let sy = s.dot(&y);
        if sy > 1e-16 * s.norm() * y.norm() {
            let rho = 1.0 / sy;
            let hy = &hinv * &y;
            let yhy = y.dot(&hy);
            hinv += (&s * s.transpose()) * (rho * rho * yhy + rho)
                - (&hy * s.transpose() + &s * hy.transpose()) * rho;
        }
        let rel = (fx - fnew).abs() / fx.abs().max(f64::MIN_POSITIVE);
        x = xn;
        fx = fnew;
        g = gn;
        if rel < 1e-14 {
            stall += 1;
            if stall >= 3 {
                return (shape(&x), true);
            }
        } else {
            stall = 0;
        }
    }
    (shape(&x), false)
}
