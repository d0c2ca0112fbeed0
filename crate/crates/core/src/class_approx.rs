//! Approximation of convolution classes `K∗U_p` by `𝒯_n` and the
//! lower-bound chain `d_n ≥ (ln m)^{-γ} Φ(m, n, p, q)` with `m ≈ n^{q/2}`.

use rayon::prelude::*;
use serde::Serialize;

use crate::ball_widths::{phi_gluskin, BallWidthInstance};
use crate::error::{Error, Result};
use crate::fourier::{
    analyze, convolution_constant, convolve_poly, default_grid_size, DecayFamily, GridFunction,
    MultiplierKernel, TrigPoly,
};
use crate::norms::{best_approx, lp_norm, poly_lp_norm, random_sphere_poly};
use crate::stream_rng;

/// `E_n(K∗U_2, L_2) = c · sup_{k>n} λ_k`.
pub fn en_exact_l2(kernel: &MultiplierKernel, n: usize) -> Result<f64> {
    let trunc = kernel.truncation();
    if n >= trunc {
        return Err(Error::TruncationExceeded {
            degree: n,
            truncation: trunc,
        });
    }
    let sup = (n + 1..=trunc).map(|k| kernel.lambda(k)).fold(0.0, f64::max);
    Ok(convolution_constant() * sup)
}

/// Result of [`en_lower_search`].
#[derive(Debug, Clone, PartialEq)]
pub struct LowerSearch {
    /// Best `inf_{t ∈ 𝒯_n} ‖K∗φ − t‖_q` found, with `‖φ‖_p = 1`.
    pub value: f64,
    pub argmax: TrigPoly,
    pub evaluations: usize,
    /// Candidates dropped because the inner solver did not converge.
    pub skipped: usize,
    /// True when the budget ran out before the ascent step size collapsed.
    pub budget_exhausted: bool,
}

const HARMONIC_CANDIDATES: usize = 4;
const MIN_STEP: f64 = 1e-6;

/// Lower estimate of `E_n(K∗U_p, L_q)` by a seeded candidate search.
///
/// Candidates are taken in a fixed order: single harmonics of degree
/// `n+1..n+4`, then alternately random polynomials and perturbations of the
/// current best, each normalized in `L_p`. A larger budget evaluates a
/// superset of candidates, so the value is nondecreasing in `budget`.
pub fn en_lower_search(
    kernel: &MultiplierKernel,
    p: f64,
    q: f64,
    n: usize,
    budget: usize,
    seed: u64,
) -> Result<LowerSearch> {
    for e in [p, q] {
        if !(e.is_finite() && e > 1.0) {
            return Err(Error::InvalidExponent(e));
        }
    }
    let top = 2 * n + 8;
    let evaluate = |phi: &TrigPoly| -> Result<Option<(f64, TrigPoly)>> {
        let norm = poly_lp_norm(phi, p)?;
        if norm.is_nan() || norm <= 0.0 {
            return Ok(None);
        }
        let phi = phi.scale(1.0 / norm);
        let f = convolve_poly(kernel, &phi)?;
        let deg = f.degree().max(n + 1);
        let grid = f.with_degree(deg).sample(default_grid_size(deg));
        match best_approx(&grid, n, q) {
            Ok(b) => Ok(Some((b.error, phi))),
            Err(Error::NonConvergence(_)) => Ok(None),
            Err(e) => Err(e),
        }
    };
    let high_random = |stream: u64| {
        let mut rng = stream_rng(seed, stream);
        let v = random_sphere_poly(top - n, &mut rng).to_vec();
        // Coefficients n+1..top only; lower harmonics are approximated exactly.
        let k = top - n;
        let mut a = vec![0.0; top];
        let mut b = vec![0.0; top];
        a[n..].copy_from_slice(&v[1..=k]);
        b[n..].copy_from_slice(&v[k + 1..]);
        TrigPoly::new(0.0, a, b).expect("equal lengths")
    };

    let mut best = LowerSearch {
        value: 0.0,
        argmax: TrigPoly::cos(n + 1),
        evaluations: 0,
        skipped: 0,
        budget_exhausted: true,
    };
    let consider = |cand: Option<(f64, TrigPoly)>, best: &mut LowerSearch| -> bool {
        best.evaluations += 1;
        match cand {
            Some((v, phi)) if v > best.value => {
                best.value = v;
                best.argmax = phi;
                true
            }
            Some(_) => false,
            None => {
                best.skipped += 1;
                false
            }
        }
    };

    let mut step = 0.5;
    for i in 0..budget {
        let cand = if i < 2 * HARMONIC_CANDIDATES {
            let k = n + 1 + i / 2;
            if i % 2 == 0 {
                TrigPoly::cos(k)
            } else {
                TrigPoly::sin(k)
            }
        } else if i % 2 == 0 {
            high_random(i as u64)
        } else {
            let dir = high_random(i as u64);
            let base = best.argmax.with_degree(top);
            let base_norm = base.l2_norm_sq().sqrt().max(f64::MIN_POSITIVE);
            let dir_norm = dir.l2_norm_sq().sqrt().max(f64::MIN_POSITIVE);
            let t = TrigPoly::from_vec(
                &base
                    .to_vec()
                    .iter()
                    .zip(dir.to_vec())
                    .map(|(x, d)| x + step * base_norm / dir_norm * d)
                    .collect::<Vec<_>>(),
            )?;
            let improved = consider(evaluate(&t)?, &mut best);
            step = if improved { (step * 1.5).min(1.0) } else { step * 0.8 };
            if step < MIN_STEP {
                best.budget_exhausted = false;
                break;
            }
            continue;
        };
        consider(evaluate(&cand)?, &mut best);
    }
    Ok(best)
}

/// One evaluation of the lower-bound chain.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PipelineReport {
    pub n: usize,
    pub m_chosen: usize,
    /// `(ln m)^{-γ}`.
    pub log_factor: f64,
    pub phi_value: f64,
    /// `log_factor · phi_value`; constants are not tracked.
    pub lower_bound: f64,
    /// Reference order `(ln n)^{-γ}` of the upper bound.
    pub upper_estimate: f64,
    pub notes: String,
}

/// Largest ambient dimension the pipeline will select.
pub const MAX_PIPELINE_M: usize = 1_000_000;

/// `ceil(n^{q/2})`, snapping values within roundoff of an integer, and at
/// least `n + 1`.
fn auto_m(n: usize, q: f64) -> usize {
    let v = (n as f64).powf(q / 2.0);
    let r = v.round();
    let m = if (v - r).abs() <= 1e-9 * v { r } else { v.ceil() };
    (m as usize).max(n + 1)
}

/// Lower bound `(ln m)^{-γ} Φ(m, n, p, q)` for the log-decay class.
///
/// Branches: `2 <= p < q` and `1 < p < 2 <= q`; the Euclidean case
/// `p = q = 2` uses the exact width `d_n(B_2^m, ℓ_2^m) = 1`.
pub fn lower_bound_pipeline(
    gamma: f64,
    p: f64,
    q: f64,
    n: usize,
    m_override: Option<usize>,
) -> Result<PipelineReport> {
    if !(gamma.is_finite() && gamma >= 0.0) {
        return Err(Error::InvalidArgument(format!("gamma must be >= 0, got {gamma}")));
    }
    if n < 2 {
        return Err(Error::InvalidArgument(format!("pipeline needs n >= 2, got {n}")));
    }
    let euclidean = p == 2.0 && q == 2.0;
    let in_branch = q.is_finite() && ((2.0..q).contains(&p) || (p > 1.0 && p < 2.0 && q >= 2.0));
    if !(euclidean || in_branch) {
        return Err(Error::OutOfBranch { p, q });
    }
    let mut notes = Vec::new();
    let m = match m_override {
        Some(m) if m <= n => {
            return Err(Error::InvalidArgument(format!("m = {m} must exceed n = {n}")));
        }
        Some(m) => {
            notes.push("m set by caller".to_string());
            m
        }
        None => {
            let m = auto_m(n, q);
            if m > MAX_PIPELINE_M {
                log::warn!("m = {m} for n = {n}, q = {q} capped at {MAX_PIPELINE_M}");
                notes.push(format!("m = {m} capped at {MAX_PIPELINE_M}"));
                MAX_PIPELINE_M
            } else {
                m
            }
        }
    };
    let phi_value = if euclidean {
        notes.push("Euclidean ball width".to_string());
        1.0
    } else {
        phi_gluskin(&BallWidthInstance::new(m, n, p, q)?)?
    };
    let log_factor = (m as f64).ln().powf(-gamma);
    Ok(PipelineReport {
        n,
        m_chosen: m,
        log_factor,
        phi_value,
        lower_bound: log_factor * phi_value,
        upper_estimate: (n as f64).ln().powf(-gamma),
        notes: notes.join("; "),
    })
}

/// Source of the upper value in a [`GapRow`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum UpperSource {
    /// `en_exact_l2` of the class kernel.
    ExactL2,
    /// The recorded order `(ln n)^{-γ}`.
    CatalogRate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum GapVerdict {
    OrderConsistent,
    NotOrderConsistent,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GapOptions {
    /// Largest admissible max/min ratio across `n`.
    pub threshold: f64,
    /// Budget of the `en_lower_search` floor for `p, q ≠ 2`; `None` skips it.
    pub search_budget: Option<usize>,
    pub seed: u64,
}

impl Default for GapOptions {
    fn default() -> Self {
        Self {
            threshold: 4.0,
            search_budget: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GapRow {
    pub n: usize,
    pub pipeline: PipelineReport,
    pub upper: f64,
    pub upper_source: UpperSource,
    /// Searched lower estimate of `E_n`, when requested.
    pub search_floor: Option<f64>,
    /// `upper / lower_bound`.
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GapReport {
    pub gamma: f64,
    pub p: f64,
    pub q: f64,
    pub rows: Vec<GapRow>,
    pub spread: f64,
    pub threshold: f64,
    /// Smallest `C` with `lower_bound <= C · upper` on every row.
    pub fitted_constant: f64,
    pub verdict: GapVerdict,
}

/// Pairs the upper value of `E_n` for `λ_k = k^{-(1/p-1/q)_+} (ln(k+1))^{-γ}`
/// with the pipeline lower bound over `n_list`.
pub fn optimality_gap(
    gamma: f64,
    p: f64,
    q: f64,
    n_list: &[usize],
    opts: &GapOptions,
) -> Result<GapReport> {
    if n_list.is_empty() {
        return Err(Error::InvalidArgument("n_list must not be empty".into()));
    }
    if n_list.windows(2).any(|w| w[1] <= w[0]) || n_list[0] < 4 {
        return Err(Error::InvalidArgument(
            "n_list must be strictly increasing with entries >= 4".into(),
        ));
    }
    let rho = (1.0 / p - 1.0 / q).max(0.0);
    let kernel = MultiplierKernel::new(DecayFamily::PolyLog { rho, gamma }, 0.0)?;
    let exact = p == 2.0 && q == 2.0;
    let rows: Vec<GapRow> = n_list
        .par_iter()
        .map(|&n| {
            let pipeline = lower_bound_pipeline(gamma, p, q, n, None)?;
            let (upper, upper_source, search_floor) = if exact {
                (en_exact_l2(&kernel, n)?, UpperSource::ExactL2, None)
            } else {
                let floor = match opts.search_budget {
                    Some(b) => Some(en_lower_search(&kernel, p, q, n, b, opts.seed)?.value),
                    None => None,
                };
                (pipeline.upper_estimate, UpperSource::CatalogRate, floor)
            };
            let ratio = upper / pipeline.lower_bound;
            Ok(GapRow {
                n,
                pipeline,
                upper,
                upper_source,
                search_floor,
                ratio,
            })
        })
        .collect::<Result<_>>()?;
    let max = rows.iter().map(|r| r.ratio).fold(f64::NEG_INFINITY, f64::max);
    let min = rows.iter().map(|r| r.ratio).fold(f64::INFINITY, f64::min);
    let spread = max / min;
    let fitted_constant = 1.0 / min;
    let verdict = if spread.is_finite() && min > 0.0 && spread <= opts.threshold {
        GapVerdict::OrderConsistent
    } else {
        GapVerdict::NotOrderConsistent
    };
    Ok(GapReport {
        gamma,
        p,
        q,
        rows,
        spread,
        threshold: opts.threshold,
        fitted_constant,
        verdict,
    })
}

/// Empirical `C_q ≥ ‖S_m f‖_q / ‖f‖_q` for one degree.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProjectionRecord {
    pub m: usize,
    pub q: f64,
    pub constant: f64,
}

/// Largest observed `‖S_m f‖_q / ‖f‖_q` over random polynomials of degree
/// `4m`, a square wave and a sawtooth, for each `m` in `degrees`.
pub fn projection_constants(
    q: f64,
    degrees: &[usize],
    samples: usize,
    seed: u64,
) -> Result<Vec<ProjectionRecord>> {
    degrees
        .par_iter()
        .map(|&m| {
            let n_grid = (64 * (m + 1)).max(1024);
            let mut funcs = vec![
                GridFunction::from_fn(n_grid, |x| x.sin().signum()),
                GridFunction::from_fn(n_grid, |x| x - std::f64::consts::PI),
            ];
            for i in 0..samples {
                let mut rng = stream_rng(seed, (m * samples + i) as u64);
                funcs.push(random_sphere_poly(4 * m, &mut rng).sample(n_grid));
            }
            let mut constant: f64 = 0.0;
            for f in &funcs {
                let sm = analyze(f, m)?.sample(n_grid);
                constant = constant.max(lp_norm(&sm, q)? / lp_norm(f, q)?);
            }
            Ok(ProjectionRecord { m, q, constant })
        })
        .collect()
}
