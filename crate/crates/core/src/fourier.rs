//! Trigonometric polynomials, grid sampling, Fourier multipliers and
//! periodic convolution on the circle `[0, 2π)`.
//!
//! Coefficients follow the real convention
//! `t(x) = a0 + Σ_{k=1}^{n} (a_k cos kx + b_k sin kx)`.
//! Grid quadrature uses the uniform points `x_j = 2πj/N`, on which the
//! trapezoidal rule is exact for trigonometric polynomials of degree `< N`.

use std::cell::RefCell;
use std::f64::consts::PI;
use std::sync::{Arc, OnceLock};

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn forward_plan(len: usize) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| p.borrow_mut().plan_fft_forward(len))
}

fn inverse_plan(len: usize) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| p.borrow_mut().plan_fft_inverse(len))
}

/// Unnormalized forward DFT `F_k = Σ_j f_j e^{-2πijk/N}` of real samples.
pub(crate) fn real_dft(samples: &[f64]) -> Vec<Complex64> {
    let mut buf: Vec<Complex64> = samples.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    forward_plan(buf.len()).process(&mut buf);
    buf
}

/// Default grid size for sampling a polynomial of the given degree.
pub fn default_grid_size(degree: usize) -> usize {
    256usize.max(8 * (degree + 1))
}

/// Element of `𝒯_n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrigPoly {
    a0: f64,
    a: Vec<f64>,
    b: Vec<f64>,
}

impl TrigPoly {
    pub fn new(a0: f64, a: Vec<f64>, b: Vec<f64>) -> Result<Self> {
        if a.len() != b.len() {
            return Err(Error::CoefficientLength {
                cos: a.len(),
                sin: b.len(),
            });
        }
        Ok(Self { a0, a, b })
    }

    pub fn zero(degree: usize) -> Self {
        Self {
            a0: 0.0,
            a: vec![0.0; degree],
            b: vec![0.0; degree],
        }
    }

    pub fn constant(value: f64) -> Self {
        Self {
            a0: value,
            a: Vec::new(),
            b: Vec::new(),
        }
    }

    /// `cos kx` as a polynomial of degree `k`.
    pub fn cos(k: usize) -> Self {
        let mut t = Self::zero(k);
        if k == 0 {
            t.a0 = 1.0;
        } else {
            t.a[k - 1] = 1.0;
        }
        t
    }

    /// `sin kx` as a polynomial of degree `k` (`k >= 1`).
    pub fn sin(k: usize) -> Self {
        assert!(k >= 1, "sin 0x is the zero function");
        let mut t = Self::zero(k);
        t.b[k - 1] = 1.0;
        t
    }

    pub fn degree(&self) -> usize {
        self.a.len()
    }

    pub fn a0(&self) -> f64 {
        self.a0
    }

    /// Cosine coefficients `a_1..a_n`.
    pub fn a(&self) -> &[f64] {
        &self.a
    }

    /// Sine coefficients `b_1..b_n`.
    pub fn b(&self) -> &[f64] {
        &self.b
    }

    /// `(a_k, b_k)` for `k >= 1`, zero above the degree.
    pub fn harmonic(&self, k: usize) -> (f64, f64) {
        if k == 0 || k > self.degree() {
            (0.0, 0.0)
        } else {
            (self.a[k - 1], self.b[k - 1])
        }
    }

    /// Evaluates the polynomial, generating `cos kx, sin kx` by rotation.
    pub fn eval(&self, x: f64) -> f64 {
        let (s1, c1) = x.sin_cos();
        let (mut c, mut s) = (1.0f64, 0.0f64);
        let mut acc = self.a0;
        for (ak, bk) in self.a.iter().zip(&self.b) {
            let next_c = c * c1 - s * s1;
            s = s * c1 + c * s1;
            c = next_c;
            acc += ak * c + bk * s;
        }
        acc
    }

    /// Samples on the uniform grid of `n_grid` points.
    pub fn sample(&self, n_grid: usize) -> GridFunction {
        assert!(n_grid >= 1, "grid needs at least one point");
        let mut spec = vec![Complex64::new(0.0, 0.0); n_grid];
        spec[0].re += self.a0;
        for k in 1..=self.degree() {
            let (ak, bk) = (self.a[k - 1], self.b[k - 1]);
            let pos = k % n_grid;
            let neg = (n_grid - pos) % n_grid;
            spec[pos] += Complex64::new(0.5 * ak, -0.5 * bk);
            spec[neg] += Complex64::new(0.5 * ak, 0.5 * bk);
        }
        inverse_plan(n_grid).process(&mut spec);
        GridFunction {
            samples: spec.into_iter().map(|z| z.re).collect(),
        }
    }

    /// Samples on [`default_grid_size`] points.
    pub fn sample_default(&self) -> GridFunction {
        self.sample(default_grid_size(self.degree()))
    }

    /// `‖t‖_2² = 2π a0² + π Σ (a_k² + b_k²)` on the unnormalized circle.
    pub fn l2_norm_sq(&self) -> f64 {
        2.0 * PI * self.a0 * self.a0 + PI * self.harmonic_energy(1)
    }

    /// `Σ_{k >= from} (a_k² + b_k²)`.
    pub fn harmonic_energy(&self, from: usize) -> f64 {
        let start = from.max(1);
        (start..=self.degree())
            .map(|k| {
                let (ak, bk) = self.harmonic(k);
                ak * ak + bk * bk
            })
            .sum()
    }

    /// Keeps harmonics up to `n` (the partial sum `S_n`).
    pub fn truncate(&self, n: usize) -> Self {
        let d = n.min(self.degree());
        Self {
            a0: self.a0,
            a: self.a[..d].to_vec(),
            b: self.b[..d].to_vec(),
        }
    }

    /// Pads with zero harmonics (or truncates) to exactly `degree`.
    pub fn with_degree(&self, degree: usize) -> Self {
        let mut t = self.truncate(degree);
        t.a.resize(degree, 0.0);
        t.b.resize(degree, 0.0);
        t
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            a0: self.a0 * s,
            a: self.a.iter().map(|v| v * s).collect(),
            b: self.b.iter().map(|v| v * s).collect(),
        }
    }

    /// `self - other`, padded to the larger degree.
    pub fn sub(&self, other: &Self) -> Self {
        let d = self.degree().max(other.degree());
        let mut out = self.with_degree(d);
        out.a0 -= other.a0;
        for k in 1..=other.degree() {
            out.a[k - 1] -= other.a[k - 1];
            out.b[k - 1] -= other.b[k - 1];
        }
        out
    }

    /// Largest absolute coefficient difference, padding with zeros.
    pub fn max_coeff_diff(&self, other: &Self) -> f64 {
        let diff = self.sub(other);
        diff.a
            .iter()
            .chain(&diff.b)
            .fold(diff.a0.abs(), |m, v| m.max(v.abs()))
    }

    /// Real coefficient vector `[a0, a_1.., b_1..]`.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(2 * self.degree() + 1);
        v.push(self.a0);
        v.extend_from_slice(&self.a);
        v.extend_from_slice(&self.b);
        v
    }

    /// Inverse of [`TrigPoly::to_vec`]; the length must be odd.
    pub fn from_vec(v: &[f64]) -> Result<Self> {
        if v.is_empty() || v.len().is_multiple_of(2) {
            return Err(Error::InvalidArgument(format!(
                "coefficient vector of length {} is not 2n+1",
                v.len()
            )));
        }
        let n = (v.len() - 1) / 2;
        Ok(Self {
            a0: v[0],
            a: v[1..=n].to_vec(),
            b: v[n + 1..].to_vec(),
        })
    }
}

/// Samples of a function on the uniform grid `x_j = 2πj/N`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridFunction {
    samples: Vec<f64>,
}

impl GridFunction {
    pub fn new(samples: Vec<f64>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidArgument("grid needs at least one point".into()));
        }
        Ok(Self { samples })
    }

    pub fn from_fn(n_grid: usize, f: impl Fn(f64) -> f64) -> Self {
        assert!(n_grid >= 1, "grid needs at least one point");
        let h = 2.0 * PI / n_grid as f64;
        Self {
            samples: (0..n_grid).map(|j| f(h * j as f64)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn spacing(&self) -> f64 {
        2.0 * PI / self.len() as f64
    }

    pub fn point(&self, j: usize) -> f64 {
        self.spacing() * j as f64
    }

    /// Largest degree that is resolved without aliasing.
    pub fn max_degree(&self) -> usize {
        (self.len() - 1) / 2
    }
}

/// Degree-`m` discrete Fourier partial sum of `f` (the projection `S_m`).
pub fn analyze(f: &GridFunction, m: usize) -> Result<TrigPoly> {
    let n_grid = f.len();
    if n_grid < 2 * m + 1 {
        return Err(Error::GridTooCoarse {
            grid: n_grid,
            degree: m,
            needed: 2 * m + 1,
        });
    }
    let spec = real_dft(f.samples());
    let scale = 2.0 / n_grid as f64;
    Ok(TrigPoly {
        a0: spec[0].re / n_grid as f64,
        a: (1..=m).map(|k| scale * spec[k].re).collect(),
        b: (1..=m).map(|k| -scale * spec[k].im).collect(),
    })
}

/// Decay law of the multiplier sequence `λ_k`, `k >= 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DecayFamily {
    /// `λ_k = k^{-r}`.
    Polynomial { r: f64 },
    /// `λ_k = k^{-rho} (ln(k+1))^{-gamma}`.
    PolyLog { rho: f64, gamma: f64 },
    /// `λ_k = exp(-mu k^r)`.
    Exponential { mu: f64, r: f64 },
    /// Explicit `λ_1..λ_N`; zero beyond the table.
    Table { values: Vec<f64> },
}

impl DecayFamily {
    fn raw(&self, k: usize) -> f64 {
        let kf = k as f64;
        match self {
            DecayFamily::Polynomial { r } => kf.powf(-r),
            DecayFamily::PolyLog { rho, gamma } => kf.powf(-rho) * (kf + 1.0).ln().powf(-gamma),
            DecayFamily::Exponential { mu, r } => (-mu * kf.powf(*r)).exp(),
            DecayFamily::Table { values } => values.get(k - 1).copied().unwrap_or(0.0),
        }
    }
}

/// Upper limit on the kernel truncation for slowly decaying families.
pub const MAX_TRUNCATION: usize = 4096;
const TRUNCATION_REL_TOL: f64 = 1e-14;

/// A multiplier sequence with its phase `β`; defines `Λ_β U_p` and the
/// kernel `K(x) = Σ λ_k cos(kx − βπ/2)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiplierKernel {
    family: DecayFamily,
    beta: f64,
    truncation: usize,
}

impl MultiplierKernel {
    /// Builds the kernel with the default truncation: the first `N` with
    /// `λ_{N+1} < 1e-14 λ_1`, capped at [`MAX_TRUNCATION`]; tables keep
    /// their own length.
    pub fn new(family: DecayFamily, beta: f64) -> Result<Self> {
        let bad = |msg: &str| Err(Error::InvalidKernel(msg.to_string()));
        if !beta.is_finite() {
            return bad("phase must be finite");
        }
        let truncation = match &family {
            DecayFamily::Polynomial { r } => {
                if !(r.is_finite() && *r >= 0.0) {
                    return bad("polynomial decay needs r >= 0");
                }
                default_truncation(&family)
            }
            DecayFamily::PolyLog { rho, gamma } => {
                if !(rho.is_finite() && gamma.is_finite() && *rho >= 0.0 && *gamma >= 0.0) {
                    return bad("poly-log decay needs rho >= 0 and gamma >= 0");
                }
                default_truncation(&family)
            }
            DecayFamily::Exponential { mu, r } => {
                if !(mu.is_finite() && r.is_finite() && *mu > 0.0 && *r > 0.0) {
                    return bad("exponential decay needs mu > 0 and r > 0");
                }
                default_truncation(&family)
            }
            DecayFamily::Table { values } => {
                if values.is_empty() {
                    return bad("table must not be empty");
                }
                if values.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
                    return bad("table entries must be positive and finite");
                }
                values.len()
            }
        };
        Ok(Self {
            family,
            beta,
            truncation,
        })
    }

    /// Overrides the truncation. Tables cannot be extended past their length.
    pub fn with_truncation(mut self, truncation: usize) -> Result<Self> {
        if truncation == 0 {
            return Err(Error::InvalidKernel("truncation must be positive".into()));
        }
        if let DecayFamily::Table { values } = &self.family {
            if truncation > values.len() {
                return Err(Error::InvalidKernel(format!(
                    "table of length {} cannot be truncated at {truncation}",
                    values.len()
                )));
            }
        }
        self.truncation = truncation;
        Ok(self)
    }

    pub fn family(&self) -> &DecayFamily {
        &self.family
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn truncation(&self) -> usize {
        self.truncation
    }

    /// Phase angle `θ = βπ/2`.
    pub fn phase(&self) -> f64 {
        self.beta * PI / 2.0
    }

    /// `λ_k` for `1 <= k <= truncation`, zero otherwise.
    pub fn lambda(&self, k: usize) -> f64 {
        if k == 0 || k > self.truncation {
            0.0
        } else {
            self.family.raw(k)
        }
    }

    /// True for the three parametric families, whose `λ_k` never increase.
    pub fn is_monotone(&self) -> bool {
        !matches!(self.family, DecayFamily::Table { .. })
    }
}

fn default_truncation(family: &DecayFamily) -> usize {
    let first = family.raw(1);
    (1..MAX_TRUNCATION)
        .find(|&n| family.raw(n + 1) < TRUNCATION_REL_TOL * first)
        .unwrap_or(MAX_TRUNCATION)
}

/// Whether the constant term survives a multiplier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ConstantTerm {
    #[default]
    Drop,
    Keep,
}

/// Applies `Λ_β` to `phi`, dropping the constant term.
pub fn apply_multiplier(kernel: &MultiplierKernel, phi: &TrigPoly) -> Result<TrigPoly> {
    apply_multiplier_with(kernel, phi, ConstantTerm::Drop)
}

/// Applies `Λ_β`: harmonic `k` is scaled by `λ_k` and rotated by `βπ/2`.
pub fn apply_multiplier_with(
    kernel: &MultiplierKernel,
    phi: &TrigPoly,
    constant: ConstantTerm,
) -> Result<TrigPoly> {
    if phi.degree() > kernel.truncation() {
        return Err(Error::TruncationExceeded {
            degree: phi.degree(),
            truncation: kernel.truncation(),
        });
    }
    let (sin_t, cos_t) = kernel.phase().sin_cos();
    let mut a = Vec::with_capacity(phi.degree());
    let mut b = Vec::with_capacity(phi.degree());
    for k in 1..=phi.degree() {
        let lam = kernel.lambda(k);
        let (ak, bk) = phi.harmonic(k);
        a.push(lam * (ak * cos_t - bk * sin_t));
        b.push(lam * (ak * sin_t + bk * cos_t));
    }
    let a0 = match constant {
        ConstantTerm::Drop => 0.0,
        ConstantTerm::Keep => phi.a0(),
    };
    Ok(TrigPoly { a0, a, b })
}

/// The truncated kernel series as a polynomial of degree `truncation`.
pub fn kernel_poly(kernel: &MultiplierKernel) -> TrigPoly {
    let (sin_t, cos_t) = kernel.phase().sin_cos();
    let lams: Vec<f64> = (1..=kernel.truncation()).map(|k| kernel.lambda(k)).collect();
    TrigPoly {
        a0: 0.0,
        a: lams.iter().map(|l| l * cos_t).collect(),
        b: lams.iter().map(|l| l * sin_t).collect(),
    }
}

/// Grid samples of `K(x) = Σ_{k=1}^{truncation} λ_k cos(kx − βπ/2)`.
pub fn synthesize_kernel(kernel: &MultiplierKernel, n_grid: usize) -> Result<GridFunction> {
    let needed = 2 * kernel.truncation() + 1;
    if n_grid < needed {
        return Err(Error::GridTooCoarse {
            grid: n_grid,
            degree: kernel.truncation(),
            needed,
        });
    }
    Ok(kernel_poly(kernel).sample(n_grid))
}

/// Periodic convolution `(1/2π) ∫ K(x − y) φ(y) dy` by the trapezoidal rule,
/// evaluated through the DFT.
pub fn convolve(kernel: &GridFunction, phi: &GridFunction) -> Result<GridFunction> {
    if kernel.len() != phi.len() {
        return Err(Error::GridMismatch {
            left: kernel.len(),
            right: phi.len(),
        });
    }
    let n_grid = kernel.len();
    let kh = real_dft(kernel.samples());
    let mut prod: Vec<Complex64> = real_dft(phi.samples())
        .into_iter()
        .zip(kh)
        .map(|(p, k)| p * k)
        .collect();
    inverse_plan(n_grid).process(&mut prod);
    let norm = (n_grid as f64).powi(2);
    Ok(GridFunction {
        samples: prod.into_iter().map(|z| z.re / norm).collect(),
    })
}

/// The constant `c` with `K∗φ = c · Λ_β φ` on harmonics `k >= 1`.
///
/// Determined once by direct quadrature of `(1/2π) ∫ K(x − y) φ(y) dy` on two
/// independent harmonic pairs; the two readings must agree.
pub fn convolution_constant() -> f64 {
    static CONSTANT: OnceLock<f64> = OnceLock::new();
    *CONSTANT.get_or_init(|| {
        let direct = |kfun: &dyn Fn(f64) -> f64, phi: &dyn Fn(f64) -> f64, x: f64| {
            let n = 64;
            let h = 2.0 * PI / n as f64;
            (0..n)
                .map(|j| {
                    let y = h * j as f64;
                    kfun(x - y) * phi(y)
                })
                .sum::<f64>()
                / n as f64
        };
        // K = cos x, φ = cos x: Λφ = cos x, equal to 1 at x = 0.
        let c1 = direct(&|x: f64| x.cos(), &|x: f64| x.cos(), 0.0);
        // K = cos 3x, φ = sin 3x: Λφ = sin 3x, equal to 1 at x = π/6.
        let c2 = direct(&|x: f64| (3.0 * x).cos(), &|x: f64| (3.0 * x).sin(), PI / 6.0);
        assert!(
            (c1 - c2).abs() < 1e-12,
            "convolution constant is inconsistent: {c1} vs {c2}"
        );
        c1
    })
}

/// `K∗φ` computed in coefficient space, `c · Λ_β φ`.
pub fn convolve_poly(kernel: &MultiplierKernel, phi: &TrigPoly) -> Result<TrigPoly> {
    let lam_phi = apply_multiplier(kernel, &phi.truncate(kernel.truncation()))?;
    Ok(lam_phi.scale(convolution_constant()))
}
