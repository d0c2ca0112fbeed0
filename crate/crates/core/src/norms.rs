//! `L_p` norms by periodic quadrature, best approximation from `𝒯_n` in
//! `L_q`, and the Marcinkiewicz–Zygmund sampling map.

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result, SolverDiagnostics};
use crate::fourier::{analyze, default_grid_size, real_dft, GridFunction, TrigPoly};
use crate::stream_rng;

/// Cap on the grid used by adaptive quadrature.
pub const MAX_QUADRATURE_GRID: usize = 1 << 16;
const QUADRATURE_REL_TOL: f64 = 1e-10;

const SOLVER_REL_TOL: f64 = 1e-10;
const SOLVER_MAX_ITER: usize = 500;

fn check_exponent(p: f64) -> Result<()> {
    if p.is_finite() && p >= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidExponent(p))
    }
}

fn trapezoid_power_sum(samples: &[f64], p: f64) -> f64 {
    if p == 2.0 {
        samples.iter().map(|v| v * v).sum()
    } else {
        samples.iter().map(|v| v.abs().powf(p)).sum()
    }
}

/// `‖f‖_p = (∫_0^{2π} |f|^p dx)^{1/p}` by the trapezoidal rule on the grid.
pub fn lp_norm(f: &GridFunction, p: f64) -> Result<f64> {
    check_exponent(p)?;
    Ok((trapezoid_power_sum(f.samples(), p) * f.spacing()).powf(1.0 / p))
}

/// `‖t‖_p` of a trigonometric polynomial.
///
/// For even integer `p` the grid is chosen so that the quadrature is exact;
/// otherwise the grid is doubled until the norm changes by less than
/// `1e-10` relative, up to [`MAX_QUADRATURE_GRID`] points.
pub fn poly_lp_norm(t: &TrigPoly, p: f64) -> Result<f64> {
    check_exponent(p)?;
    let base = default_grid_size(t.degree());
    if p.fract() == 0.0 && (p as u64).is_multiple_of(2) {
        let exact = (p as usize) * t.degree() + 1;
        return lp_norm(&t.sample(base.max(exact)), p);
    }
    let mut n_grid = base;
    let mut prev = lp_norm(&t.sample(n_grid), p)?;
    while n_grid < MAX_QUADRATURE_GRID {
        n_grid = (2 * n_grid).min(MAX_QUADRATURE_GRID);
        let next = lp_norm(&t.sample(n_grid), p)?;
        let settled = (next - prev).abs() <= QUADRATURE_REL_TOL * next.abs();
        prev = next;
        if settled {
            break;
        }
    }
    Ok(prev)
}

/// Result of [`best_approx`].
#[derive(Debug, Clone, PartialEq)]
pub struct BestApproximation {
    /// `min_{t ∈ 𝒯_n} ‖f − t‖_q` on the grid of `f`.
    pub error: f64,
    pub argmin: TrigPoly,
    pub iterations: usize,
}

/// Weighted sums `Σ_j w_j cos(s x_j)` and `Σ_j w_j sin(s x_j)` for all `s`.
struct WeightSpectrum {
    cos: Vec<f64>,
    sin: Vec<f64>,
}

impl WeightSpectrum {
    fn new(w: &[f64]) -> Self {
        let spec = real_dft(w);
        Self {
            cos: spec.iter().map(|z| z.re).collect(),
            sin: spec.iter().map(|z| -z.im).collect(),
        }
    }

    fn c(&self, s: i64) -> f64 {
        self.cos[s.unsigned_abs() as usize % self.cos.len()]
    }

    fn s(&self, s: i64) -> f64 {
        let v = self.sin[s.unsigned_abs() as usize % self.sin.len()];
        if s < 0 {
            -v
        } else {
            v
        }
    }
}

/// Projection of `g` onto the basis `[1, cos kx, sin kx]`: `Σ_j g_j · basis(x_j)`.
fn basis_moments(g: &[f64], n: usize) -> DVector<f64> {
    let spec = WeightSpectrum::new(g);
    let mut v = DVector::zeros(2 * n + 1);
    v[0] = spec.c(0);
    for k in 1..=n {
        v[k] = spec.c(k as i64);
        v[n + k] = spec.s(k as i64);
    }
    v
}

/// Gram matrix `Bᵀ diag(w) B` for the basis `[1, cos kx, sin kx]`, assembled
/// from the Fourier sums of `w` by product-to-sum identities.
fn weighted_gram(w: &[f64], n: usize) -> DMatrix<f64> {
    let spec = WeightSpectrum::new(w);
    let dim = 2 * n + 1;
    let mut g = DMatrix::zeros(dim, dim);
    g[(0, 0)] = spec.c(0);
    for k in 1..=n {
        let ki = k as i64;
        g[(0, k)] = spec.c(ki);
        g[(0, n + k)] = spec.s(ki);
        for l in 1..=n {
            let li = l as i64;
            g[(k, l)] = 0.5 * (spec.c(ki - li) + spec.c(ki + li));
            g[(n + k, n + l)] = 0.5 * (spec.c(ki - li) - spec.c(ki + li));
            g[(k, n + l)] = 0.5 * (spec.s(li + ki) + spec.s(li - ki));
        }
    }
    for i in 0..dim {
        for j in 0..i {
            g[(i, j)] = g[(j, i)];
        }
    }
    g
}

fn solve_spd(mut g: DMatrix<f64>, rhs: &DVector<f64>) -> Option<DVector<f64>> {
    if let Some(ch) = g.clone().cholesky() {
        return Some(ch.solve(rhs));
    }
    let ridge = 1e-12 * g.trace().abs().max(f64::MIN_POSITIVE) / g.nrows() as f64;
    for i in 0..g.nrows() {
        g[(i, i)] += ridge;
    }
    g.cholesky().map(|ch| ch.solve(rhs))
}

/// Best approximation of `f` by `𝒯_n` in the discrete `L_q` norm of its grid.
///
/// Starts from the Fourier partial sum, which is already optimal for `q = 2`,
/// and runs damped reweighted least squares: each step solves the weighted
/// normal equations with weights `|r|^{q-2}` (the Newton system of
/// `Σ|r|^q`) and backtracks until the objective decreases.
pub fn best_approx(f: &GridFunction, n: usize, q: f64) -> Result<BestApproximation> {
    if !(q.is_finite() && q > 1.0) {
        return Err(Error::InvalidExponent(q));
    }
    let start = analyze(f, n)?;
    if q == 2.0 {
        return partial_sum_solution(f, start);
    }
    irls(f, n, q, start)
}

/// The q = 2 path through the Fourier partial sum.
pub fn best_approx_l2(f: &GridFunction, n: usize) -> Result<BestApproximation> {
    let start = analyze(f, n)?;
    partial_sum_solution(f, start)
}

/// Forces the iterative solver, including at `q = 2`.
pub fn best_approx_iterative(f: &GridFunction, n: usize, q: f64) -> Result<BestApproximation> {
    if !(q.is_finite() && q > 1.0) {
        return Err(Error::InvalidExponent(q));
    }
    let start = analyze(f, n)?;
    irls(f, n, q, start)
}

fn residual(f: &GridFunction, t: &TrigPoly) -> Vec<f64> {
    let ts = t.sample(f.len());
    f.samples().iter().zip(ts.samples()).map(|(a, b)| a - b).collect()
}

fn partial_sum_solution(f: &GridFunction, argmin: TrigPoly) -> Result<BestApproximation> {
    let r = residual(f, &argmin);
    let error = (trapezoid_power_sum(&r, 2.0) * f.spacing()).sqrt();
    Ok(BestApproximation {
        error,
        argmin,
        iterations: 0,
    })
}

fn irls(f: &GridFunction, n: usize, q: f64, start: TrigPoly) -> Result<BestApproximation> {
    let h = f.spacing();
    let scale = f.samples().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let objective = |r: &[f64]| trapezoid_power_sum(r, q) * h;
    let mut coeffs = DVector::from_vec(start.to_vec());
    let mut r = residual(f, &start);
    let mut obj = objective(&r);
    let mut last_rel_change = f64::INFINITY;

    for iter in 1..=SOLVER_MAX_ITER {
        let rmax = r.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if rmax <= 1e-14 * scale.max(f64::MIN_POSITIVE) || obj == 0.0 {
            return Ok(finish(coeffs, 0.0f64.max(obj).powf(1.0 / q), iter - 1));
        }
        let floor = 1e-12 * rmax;
        let w: Vec<f64> = r.iter().map(|v| v.abs().max(floor).powf(q - 2.0)).collect();
        let g: Vec<f64> = r.iter().map(|v| v.signum() * v.abs().powf(q - 1.0)).collect();
        let gram = weighted_gram(&w, n);
        let rhs = basis_moments(&g, n);
        let Some(step) = solve_spd(gram, &rhs) else {
            break;
        };
        let step = step / (q - 1.0);
        let step_poly = TrigPoly::from_vec(step.as_slice())?;
        let step_samples = step_poly.sample(f.len());

        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let trial: Vec<f64> = r
                .iter()
                .zip(step_samples.samples())
                .map(|(ri, si)| ri - alpha * si)
                .collect();
            let trial_obj = objective(&trial);
            if trial_obj <= obj {
                accepted = Some((trial, trial_obj));
                break;
            }
            alpha *= 0.5;
        }
        let Some((trial, trial_obj)) = accepted else {
            // No descent along the Newton direction: stationary to roundoff.
            return Ok(finish(coeffs, obj.powf(1.0 / q), iter));
        };
        let old_err = obj.powf(1.0 / q);
        let new_err = trial_obj.powf(1.0 / q);
        coeffs += step * alpha;
        r = trial;
        obj = trial_obj;
        last_rel_change = (old_err - new_err) / old_err;
        if last_rel_change < SOLVER_REL_TOL {
            return Ok(finish(coeffs, new_err, iter));
        }
    }
    Err(Error::NonConvergence(SolverDiagnostics {
        iterations: SOLVER_MAX_ITER,
        last_rel_change,
        objective: obj.powf(1.0 / q),
    }))
}

fn finish(coeffs: DVector<f64>, error: f64, iterations: usize) -> BestApproximation {
    BestApproximation {
        error,
        argmin: TrigPoly::from_vec(coeffs.as_slice()).expect("odd-length coefficient vector"),
        iterations,
    }
}

/// Values of a degree-`m` polynomial at `2πk/(2m+1)`, `k = 1..2m+1`, with
/// the weight `m^{-1/p}` of the discrete Marcinkiewicz–Zygmund norm.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiscretizedPoly {
    values: Vec<f64>,
    scale: f64,
    p: f64,
}

impl DiscretizedPoly {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    /// `m` recovered from the sample count.
    pub fn degree(&self) -> usize {
        (self.values.len() - 1) / 2
    }

    /// `(m^{-1} Σ |t(x_k)|^p)^{1/p}`.
    pub fn scaled_norm(&self) -> f64 {
        self.scale * trapezoid_power_sum(&self.values, self.p).powf(1.0 / self.p)
    }
}

pub fn mz_sample(t: &TrigPoly, p: f64) -> Result<DiscretizedPoly> {
    let m = t.degree();
    if m == 0 {
        return Err(Error::DegreeZero);
    }
    if !(p.is_finite() && p > 1.0) {
        return Err(Error::InvalidExponent(p));
    }
    let count = 2 * m + 1;
    let step = 2.0 * std::f64::consts::PI / count as f64;
    let values = (1..=count).map(|k| t.eval(step * k as f64)).collect();
    Ok(DiscretizedPoly {
        values,
        scale: (m as f64).powf(-1.0 / p),
        p,
    })
}

/// Extremes of `scaled discrete norm / ‖t‖_p` over random polynomials.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MzStats {
    pub min_ratio: f64,
    pub max_ratio: f64,
}

impl MzStats {
    pub fn spread(&self) -> f64 {
        self.max_ratio / self.min_ratio
    }
}

/// Random degree-`m` polynomial with coefficient vector uniform on the unit
/// sphere of `R^{2m+1}`.
pub fn random_sphere_poly(m: usize, rng: &mut impl rand::Rng) -> TrigPoly {
    let mut v: Vec<f64> = (0..2 * m + 1).map(|_| StandardNormal.sample(rng)).collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x /= norm);
    TrigPoly::from_vec(&v).expect("odd length")
}

/// Trial `i` draws from stream `i` of the seeded generator, so the result
/// does not depend on the thread count.
pub fn mz_ratio_stats(m: usize, p: f64, trials: usize, seed: u64) -> Result<MzStats> {
    if trials == 0 {
        return Err(Error::InvalidArgument("mz_ratio_stats needs at least one trial".into()));
    }
    let ratios: Vec<f64> = (0..trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(seed, i as u64);
            let t = random_sphere_poly(m, &mut rng);
            Ok(mz_sample(&t, p)?.scaled_norm() / poly_lp_norm(&t, p)?)
        })
        .collect::<Result<_>>()?;
    Ok(MzStats {
        min_ratio: ratios.iter().copied().fold(f64::INFINITY, f64::min),
        max_ratio: ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn random_poly(deg: usize, rng: &mut impl Rng) -> TrigPoly {
        TrigPoly::new(
            rng.random_range(-1.0..1.0),
            (0..deg).map(|_| rng.random_range(-1.0..1.0)).collect(),
            (0..deg).map(|_| rng.random_range(-1.0..1.0)).collect(),
        )
        .unwrap()
    }

    #[test]
    fn norm_examples() {
        let one = GridFunction::from_fn(256, |_| 1.0);
        assert!((lp_norm(&one, 2.0).unwrap() - (2.0 * PI).sqrt()).abs() < 1e-13);
        let c = GridFunction::from_fn(256, f64::cos);
        assert!((lp_norm(&c, 2.0).unwrap() - PI.sqrt()).abs() < 1e-13);
        // |cos| has kinks; the adaptive polynomial path resolves it.
        let l1 = poly_lp_norm(&TrigPoly::cos(1), 1.0).unwrap();
        assert!((l1 - 4.0).abs() < 1e-8, "{l1}");
        assert!(matches!(lp_norm(&c, 0.5), Err(Error::InvalidExponent(_))));
    }

    #[test]
    fn even_exponent_is_exact() {
        // ∫ cos⁴ = 3π/4.
        let v = poly_lp_norm(&TrigPoly::cos(3), 4.0).unwrap();
        assert!((v.powi(4) - 0.75 * PI).abs() < 1e-13);
    }

    #[test]
    fn best_approx_orthogonal_mode() {
        let n = 5;
        // The grid is invariant under shifts by π/(n+1), so 0 stays optimal
        // for the discrete norm as well.
        let f = TrigPoly::cos(n + 1).sample(16 * 2 * (n + 1));
        for q in [2.0, 1.5, 3.0] {
            let res = best_approx(&f, n, q).unwrap();
            let expected = lp_norm(&f, q).unwrap();
            assert!((res.error - expected).abs() < 1e-8 * expected, "q={q}: {}", res.error);
            if q == 2.0 {
                assert!((res.error - PI.sqrt()).abs() < 1e-12);
                assert!(res.argmin.max_coeff_diff(&TrigPoly::zero(n)) < 1e-14);
            }
        }
    }

    #[test]
    fn best_approx_member_of_subspace() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let t = random_poly(6, &mut rng);
        for q in [1.3, 2.0, 4.0] {
            let res = best_approx(&t.sample(64), 6, q).unwrap();
            assert!(res.error < 1e-12);
            assert!(res.argmin.max_coeff_diff(&t) < 1e-12);
        }
    }

    #[test]
    fn best_approx_parseval_tail() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let t = random_poly(20, &mut rng);
        let res = best_approx(&t.sample_default(), 10, 2.0).unwrap();
        let tail = (PI * t.harmonic_energy(11)).sqrt();
        assert!((res.error - tail).abs() < 1e-8 * tail);
    }

    #[test]
    fn iterative_path_agrees_at_q2() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let t = random_poly(16, &mut rng);
        let f = t.sample_default();
        let direct = best_approx_l2(&f, 7).unwrap();
        let iter = best_approx_iterative(&f, 7, 2.0).unwrap();
        assert!((direct.error - iter.error).abs() <= 1e-7 * direct.error);
    }

    #[test]
    fn general_q_beats_partial_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let t = random_poly(12, &mut rng);
        let f = t.sample_default();
        for q in [1.2, 1.5, 3.0, 6.0] {
            let opt = best_approx(&f, 4, q).unwrap();
            let partial = lp_norm(&t.sub(&t.truncate(4)).sample(f.len()), q).unwrap();
            assert!(opt.error <= partial * (1.0 + 1e-12));
            // Stationarity: perturbing the minimizer never helps.
            for k in 0..9 {
                let mut v = opt.argmin.to_vec();
                v[k] += 1e-4;
                let bumped = TrigPoly::from_vec(&v).unwrap();
                let e = lp_norm(&t.sub(&bumped).sample(f.len()), q).unwrap();
                assert!(e >= opt.error * (1.0 - 1e-12));
            }
        }
    }

    #[test]
    fn best_approx_rejects_bad_input() {
        let f = TrigPoly::cos(2).sample(9);
        assert!(matches!(best_approx(&f, 5, 2.0), Err(Error::GridTooCoarse { .. })));
        assert!(matches!(best_approx(&f, 1, 1.0), Err(Error::InvalidExponent(_))));
    }

    #[test]
    fn mz_examples() {
        let one = TrigPoly::new(1.0, vec![0.0], vec![0.0]).unwrap();
        let d = mz_sample(&one, 2.0).unwrap();
        assert!(d.values().iter().all(|v| (v - 1.0).abs() < 1e-15));
        assert!((d.scaled_norm() - 3f64.sqrt()).abs() < 1e-14);
        let c = mz_sample(&TrigPoly::cos(1), 2.0).unwrap();
        assert!((c.scaled_norm().powi(2) - 1.5).abs() < 1e-14);
        assert!(matches!(mz_sample(&TrigPoly::constant(1.0), 2.0), Err(Error::DegreeZero)));
    }

    #[test]
    fn mz_permutation_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let t = random_poly(5, &mut rng);
        let d = mz_sample(&t, 3.0).unwrap();
        let mut shuffled = d.clone();
        shuffled.values.reverse();
        shuffled.values.rotate_left(3);
        assert!((d.scaled_norm() - shuffled.scaled_norm()).abs() < 1e-14);
    }

    #[test]
    fn mz_stats_deterministic() {
        let a = mz_ratio_stats(1, 2.0, 1, 42).unwrap();
        let b = mz_ratio_stats(1, 2.0, 1, 42).unwrap();
        assert_eq!(a, b);
        assert!(mz_ratio_stats(1, 2.0, 0, 42).is_err());
    }

    #[test]
    fn mz_stats_p2_constant() {
        for m in [3, 17] {
            let s = mz_ratio_stats(m, 2.0, 50, 7).unwrap();
            assert!(s.spread() - 1.0 < 1e-6);
            // Discrete Parseval: ratio² = (2m+1)/(2πm).
            let exact = ((2 * m + 1) as f64 / (2.0 * PI * m as f64)).sqrt();
            assert!((s.min_ratio - exact).abs() < 1e-10);
        }
    }

    #[test]
    fn mz_stats_p3_bounded() {
        let s4 = mz_ratio_stats(4, 3.0, 100, 1).unwrap();
        let s64 = mz_ratio_stats(64, 3.0, 100, 1).unwrap();
        assert!(s4.spread() <= 10.0 && s64.spread() <= 10.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn holder_consistency(seed in any::<u64>(), p in 1.0f64..4.0, dq in 0.1f64..3.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let f = random_poly(10, &mut rng).sample(256);
            let q = p + dq;
            let lhs = lp_norm(&f, p).unwrap();
            let rhs = (2.0 * PI).powf(1.0 / p - 1.0 / q) * lp_norm(&f, q).unwrap();
            prop_assert!(lhs <= rhs * (1.0 + 1e-12));
        }

        #[test]
        fn best_approx_monotone_in_n(seed in any::<u64>(), q in 1.2f64..5.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let f = random_poly(10, &mut rng).sample(128);
            let mut prev = f64::INFINITY;
            for n in 0..=10 {
                let e = best_approx(&f, n, q).unwrap().error;
                prop_assert!(e <= prev * (1.0 + 1e-9));
                prev = e;
            }
            prop_assert!(prev < 1e-10);
        }
    }
}
