//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.

use std::f64::consts::PI;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::Rng;
use rayon::prelude::*;
use widthlab::{
    ball_width_bruteforce, ball_width_bruteforce_with, best_approx, coordinate_subspace_bound,
    en_exact_l2, fit_rate, lower_bound_pipeline, mz_ratio_stats, optimality_gap,
    optimality_verdict, phi_gluskin, stream_rng, BallWidthInstance, BruteForceOptions,
    ClassFamily, DecayFamily, Exponent, GapOptions, MultiplierKernel, RateFamily, RateModel,
    TrigPoly,
};

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within_budget(t: Duration, limit_s: f64) -> Result<(), String> {
    ensure(t.as_secs_f64() < limit_s, || {
        format!("runtime {:.1}s exceeds {limit_s}s", t.as_secs_f64())
    })
}

fn parseval_oracle() -> Check {
    let t0 = Instant::now();
    let mut worst: f64 = 0.0;
    for i in 0..50 {
        let mut rng = stream_rng(1001, i);
        let mut coef = || (0..32).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<f64>>();
        let (a, b) = (coef(), coef());
        let t = TrigPoly::new(0.3, a.clone(), b.clone()).map_err(|e| e.to_string())?;
        let f = t.sample(512);
        for n in [0usize, 8, 16] {
            let tail: f64 = (n..32).map(|k| a[k] * a[k] + b[k] * b[k]).sum();
            let oracle = (PI * tail).sqrt();
            let got = best_approx(&f, n, 2.0).map_err(|e| e.to_string())?.error;
            worst = worst.max((got - oracle).abs() / oracle);
        }
    }
    ensure(worst <= 1e-8, || format!("max relative error {worst:.3e}"))?;
    within_budget(t0.elapsed(), 10.0)?;
    Ok(format!("max relative error {worst:.1e}"))
}

fn euclidean_width() -> Check {
    let t0 = Instant::now();
    let mut worst: f64 = 0.0;
    for n in 0..=4 {
        let inst = BallWidthInstance::new(5, n, 2.0, 2.0).map_err(|e| e.to_string())?;
        let w = ball_width_bruteforce(&inst, 8, 21).map_err(|e| e.to_string())?;
        worst = worst.max((w.value - 1.0).abs());
    }
    ensure(worst <= 1e-6, || format!("max |d_n - 1| = {worst:.3e}"))?;
    let full = BallWidthInstance::new(5, 5, 2.0, 2.0).map_err(|e| e.to_string())?;
    let zero = ball_width_bruteforce(&full, 8, 21).map_err(|e| e.to_string())?.value;
    ensure(zero == 0.0, || format!("d_5 = {zero}"))?;
    within_budget(t0.elapsed(), 30.0)?;
    Ok(format!("max |d_n - 1| = {worst:.1e}, d_5 = 0"))
}

/// `min_u max_i sqrt(1 - u_i^2)` over unit directions `u` on an angular grid.
fn angular_grid_oracle(step: f64) -> f64 {
    let nt = (0.5 * PI / step).ceil() as usize;
    let np = (2.0 * PI / step).ceil() as usize;
    (0..=nt)
        .into_par_iter()
        .map(|i| {
            let th = (i as f64 * step).min(0.5 * PI);
            let (st, ct) = th.sin_cos();
            let mut best = f64::INFINITY;
            for j in 0..np {
                let (sp, cp) = (j as f64 * step).sin_cos();
                let u = [st * cp, st * sp, ct];
                let worst = u.iter().map(|x| (1.0 - x * x).max(0.0).sqrt()).fold(0.0, f64::max);
                best = best.min(worst);
            }
            best
        })
        .reduce(|| f64::INFINITY, f64::min)
}

fn small_instance_oracle() -> Check {
    let t0 = Instant::now();
    let inst = BallWidthInstance::new(3, 1, 1.0, 2.0).map_err(|e| e.to_string())?;
    let w = ball_width_bruteforce(&inst, 16, 5).map_err(|e| e.to_string())?.value;
    let oracle = angular_grid_oracle(1e-3);
    ensure((w - oracle).abs() <= 1e-3, || format!("brute force {w:.6} vs grid {oracle:.6}"))?;
    within_budget(t0.elapsed(), 60.0)?;
    Ok(format!("brute force {w:.6}, grid oracle {oracle:.6}"))
}

fn domination() -> Check {
    let opts = BruteForceOptions {
        restarts: 2,
        inner_starts: 16,
        softmax_stages: vec![8.0, 64.0, 512.0],
        bfgs_iterations: 60,
        working_set: 12,
        ..BruteForceOptions::default()
    };
    let exps = [1.0, 1.5, 2.0, 3.0];
    let mut cases = Vec::new();
    for m in 1..=6 {
        for n in 0..m {
            for &p in &exps {
                for &q in &exps {
                    cases.push((m, n, p, q));
                }
            }
        }
    }
    let violations: Vec<String> = cases
        .par_iter()
        .filter_map(|&(m, n, p, q)| {
            let inst = BallWidthInstance::new(m, n, p, q).ok()?;
            let bound = coordinate_subspace_bound(&inst);
            match ball_width_bruteforce_with(&inst, &opts, 3) {
                Ok(w) if w.value <= bound + 1e-6 => None,
                Ok(w) => Some(format!("({m},{n},{p},{q}): {} > {bound}", w.value)),
                Err(e) => Some(format!("({m},{n},{p},{q}): {e}")),
            }
        })
        .collect();
    ensure(violations.is_empty(), || {
        format!("{} violations, first: {}", violations.len(), violations[0])
    })?;
    Ok(format!("{} instances, zero violations", cases.len()))
}

fn phi_identities() -> Check {
    let mut checked = 0;
    for &(p, q) in &[(2.0, 3.0), (2.0, 4.0), (2.5, 6.0), (3.0, 4.0), (2.0, f64::INFINITY)] {
        for n in 1..=12usize {
            let need = (n as f64).powf(if q == f64::INFINITY { 0.0 } else { q / 2.0 });
            for m in (n + 1)..=(n + 1).max(need.ceil() as usize + 20) {
                if (m as f64) < need {
                    continue;
                }
                let phi = phi_gluskin(&BallWidthInstance::new(m, n, p, q).map_err(|e| e.to_string())?)
                    .map_err(|e| e.to_string())?;
                if q == f64::INFINITY {
                    continue;
                }
                ensure((phi - 1.0).abs() <= 1e-12, || format!("Φ({m},{n},{p},{q}) = {phi}"))?;
                checked += 1;
            }
        }
    }
    let phi_a = phi_gluskin(&BallWidthInstance::new(16, 4, 2.0, Exponent::Infinity).map_err(|e| e.to_string())?)
        .map_err(|e| e.to_string())?;
    ensure((phi_a - 0.5).abs() <= 1e-12, || format!("Φ(16,4,2,∞) = {phi_a}"))?;
    let phi_b = phi_gluskin(&BallWidthInstance::new(9, 3, 1.0, 2.0).map_err(|e| e.to_string())?)
        .map_err(|e| e.to_string())?;
    let expected = (2.0f64 / 3.0).sqrt();
    ensure((phi_b - expected).abs() <= 1e-12, || format!("Φ(9,3,1,2) = {phi_b}"))?;
    Ok(format!("{checked} clamp cases, Φ(16,4,2,∞) = {phi_a}, Φ(9,3,1,2) = {phi_b:.12}"))
}

fn theorem_l2() -> Check {
    let t0 = Instant::now();
    let kernel = MultiplierKernel::new(DecayFamily::PolyLog { rho: 0.0, gamma: 1.0 }, 0.0)
        .map_err(|e| e.to_string())?;
    let ns: Vec<usize> = (3..=10).map(|k| 1 << k).collect();
    let ratios: Vec<f64> = ns
        .iter()
        .map(|&n| en_exact_l2(&kernel, n).map(|e| e * (n as f64).ln()))
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    let spread = ratios.iter().copied().fold(0.0, f64::max) / ratios.iter().copied().fold(f64::INFINITY, f64::min);
    ensure(spread <= 1.5, || format!("E_n ln n spread {spread:.4}"))?;
    let gap = optimality_gap(1.0, 2.0, 2.0, &ns, &GapOptions::default()).map_err(|e| e.to_string())?;
    let c = gap.fitted_constant;
    for row in &gap.rows {
        ensure(row.pipeline.lower_bound <= c * row.upper * (1.0 + 1e-12), || {
            format!("n = {}: lower {} > C·E_n", row.n, row.pipeline.lower_bound)
        })?;
    }
    ensure(gap.spread <= 4.0, || format!("lower/upper ratio spread {:.3}", gap.spread))?;
    within_budget(t0.elapsed(), 120.0)?;
    Ok(format!("E_n ln n spread {spread:.4}, C = {c:.4}, lower/upper spread {:.4}", gap.spread))
}

fn pipeline_identity() -> Check {
    let mut worst: f64 = 0.0;
    for gamma in [0.5, 1.0, 2.0] {
        for n in [8usize, 32, 128] {
            let r = lower_bound_pipeline(gamma, 2.0, 4.0, n, None).map_err(|e| e.to_string())?;
            ensure(r.m_chosen == n * n, || format!("n = {n}: m = {}", r.m_chosen))?;
            let v = r.lower_bound * ((n * n) as f64).ln().powf(gamma);
            worst = worst.max((v - 1.0).abs());
        }
    }
    ensure(worst <= 1e-12, || format!("max deviation {worst:.3e}"))?;
    Ok(format!("max deviation {worst:.1e}"))
}

fn mz_stability() -> Check {
    let t0 = Instant::now();
    let degrees: Vec<usize> = (2..=7).map(|k| 1 << k).collect();
    let mut notes = Vec::new();
    for p in [1.5, 2.0, 3.0] {
        let spreads: Vec<f64> = degrees
            .iter()
            .map(|&m| mz_ratio_stats(m, p, 200, 8).map(|s| s.spread()))
            .collect::<Result<_, _>>()
            .map_err(|e| e.to_string())?;
        let cross = spreads.iter().copied().fold(0.0, f64::max) / spreads.iter().copied().fold(f64::INFINITY, f64::min);
        let limit = if p == 2.0 { 1.0 + 1e-6 } else { 2.0 };
        ensure(cross <= limit, || format!("p = {p}: cross-degree spread {cross:.6}"))?;
        notes.push(format!("p={p}: {cross:.4}"));
    }
    within_budget(t0.elapsed(), 120.0)?;
    Ok(notes.join(", "))
}

fn rel_close(x: f64, y: f64) -> bool {
    (x - y).abs() <= 0.05 * y.abs().max(0.05)
}

fn synthetic_suite() -> Vec<RateModel> {
    let mut v = Vec::new();
    for (i, a) in [0.5, 0.75, 1.0, 1.25, 1.5, 1.75, 2.0, 2.5, 3.0, 4.0].into_iter().enumerate() {
        v.push(RateModel {
            family: RateFamily::Poly { a },
            c: 0.5 + 0.3 * i as f64,
        });
    }
    for (a, g) in [(0.0, 1.0), (0.0, 2.0), (0.0, 0.5), (0.5, 1.0), (0.5, 2.0), (1.0, 1.0), (1.0, 3.0), (1.5, 0.5), (2.0, 1.5), (0.25, 1.0)] {
        v.push(RateModel {
            family: RateFamily::PolyLogRate { a, g },
            c: 1.0,
        });
    }
    for (mu, r, b) in [
        (0.5, 0.5, 0.0),
        (1.0, 0.5, 0.25),
        (0.2, 1.0, 0.0),
        (1.0, 1.0, -1.0),
        (0.3, 0.75, 0.5),
        (0.1, 1.5, 0.0),
        (0.05, 2.0, 0.0),
        (2.0, 0.3, 0.0),
        (0.5, 1.25, 1.0),
        (0.8, 0.6, -0.5),
    ] {
        v.push(RateModel {
            family: RateFamily::ExpRate { mu, r, b },
            c: 2.0,
        });
    }
    v
}

fn sample_grid(model: &RateModel) -> Vec<f64> {
    match model.family {
        RateFamily::ExpRate { mu, r, .. } => {
            // Keep exp(-mu n^r) well inside double range.
            let top = (300.0 / mu).powf(1.0 / r).min(1024.0);
            (0..16).map(|i| (8.0 * (top / 8.0).powf(i as f64 / 15.0)).round()).collect()
        }
        _ => (0..16).map(|i| (8.0 * 128f64.powf(i as f64 / 15.0)).round()).collect(),
    }
}

fn family_matches(fit: &RateFamily, truth: &RateFamily) -> bool {
    match (fit, truth) {
        (RateFamily::Poly { a }, RateFamily::Poly { a: a0 }) => rel_close(*a, *a0),
        (RateFamily::PolyLogRate { a, g }, RateFamily::PolyLogRate { a: a0, g: g0 }) => {
            rel_close(*a, *a0) && rel_close(*g, *g0)
        }
        (RateFamily::ExpRate { mu, r, b }, RateFamily::ExpRate { mu: m0, r: r0, b: b0 }) => {
            rel_close(*mu, *m0) && rel_close(*r, *r0) && rel_close(*b, *b0)
        }
        _ => false,
    }
}

fn fit_recovery() -> Check {
    let suite = synthetic_suite();
    let mut wrong = Vec::new();
    for model in &suite {
        let mut ns = sample_grid(model);
        ns.dedup();
        let pts: Vec<(f64, f64)> = ns.iter().map(|&n| (n, model.eval(n))).collect();
        match fit_rate(&pts) {
            Ok(f) if family_matches(&f.model.family, &model.family) && rel_close(f.model.c, model.c) => {}
            Ok(f) => wrong.push(format!("{model} fitted as {}", f.model)),
            Err(e) => wrong.push(format!("{model}: {e}")),
        }
    }
    ensure(wrong.is_empty(), || format!("{} misfits, first: {}", wrong.len(), wrong[0]))?;
    let kernel = MultiplierKernel::new(DecayFamily::Polynomial { r: 2.0 }, 2.0).map_err(|e| e.to_string())?;
    let pts: Vec<(f64, f64)> = (8..=512)
        .map(|n| en_exact_l2(&kernel, n).map(|e| (n as f64, e)))
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    let f = fit_rate(&pts).map_err(|e| e.to_string())?;
    let RateFamily::Poly { a } = f.model.family else {
        return Err(format!("Sobolev sequence fitted as {}", f.model));
    };
    ensure((a - 2.0).abs() <= 0.05, || format!("Sobolev exponent {a}"))?;
    Ok(format!("{}/{} cases recovered, Sobolev a = {a:.4}", suite.len(), suite.len()))
}

fn catalog_golden() -> Check {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/catalog_verdicts.csv");
    let mut rdr = csv::Reader::from_path(&path).map_err(|e| e.to_string())?;
    let mut cells = 0;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| e.to_string())?;
        let num = |i: usize| rec[i].parse::<f64>().map_err(|e| format!("{rec:?}: {e}"));
        let family = match &rec[0] {
            "sobolev" => ClassFamily::Sobolev { r: num(1)? },
            "exponential" => ClassFamily::Exponential { mu: num(2)?, r: num(1)? },
            "log-decay" => ClassFamily::TheoremPolyLog { gamma: num(3)? },
            other => return Err(format!("unknown family {other}")),
        };
        let (p, q) = (num(4)?, num(5)?);
        let v = optimality_verdict(&family, p, q).map_err(|e| format!("{family:?} p={p} q={q}: {e}"))?;
        ensure(v.optimal.to_string() == rec[6], || {
            format!("{family:?} p={p} q={q}: {} expected {}", v.optimal, &rec[6])
        })?;
        cells += 1;
    }
    ensure(cells == 40, || format!("golden file has {cells} cells"))?;
    Ok(format!("{cells} cells match"))
}

fn run_cli(dir: &Path, args: &[&str]) -> Result<(Vec<u8>, Vec<u8>), String> {
    let status = Command::new(env!("CARGO_BIN_EXE_widthlab"))
        .args(args)
        .arg("--out")
        .arg(dir)
        .env_remove("WIDTHLAB_THREADS")
        .status()
        .map_err(|e| e.to_string())?;
    ensure(status.code() == Some(0), || format!("{args:?} exited with {status}"))?;
    let read = |f: &str| std::fs::read(dir.join(f)).map_err(|e| format!("{f}: {e}"));
    Ok((read("results.csv")?, read("report.json")?))
}

fn determinism() -> Check {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let runs: [&[&str]; 6] = [
        &["pipeline", "--gamma", "1", "--p", "2", "--q", "4", "--n", "8,16,32", "--search-budget", "6", "--seed", "4"],
        &["approx", "--kernel", "polynomial", "--r", "1", "--beta", "1", "--p", "1.5", "--q", "3", "--n", "2,4,8", "--budget", "12", "--seed", "9"],
        &["widths", "--m", "4", "--p", "1.5", "--q", "3", "--restarts", "4", "--seed", "2"],
        &["mz", "--p", "1.5,3", "--m", "4,8", "--trials", "40", "--seed", "5"],
        &["catalog"],
        &["approx", "--kernel", "poly-log", "--gamma", "1", "--n", "8,16,32,64,128,256", "--budget", "6"],
    ];
    for (i, args) in runs.iter().enumerate() {
        let a = run_cli(&tmp.path().join(format!("{i}a")), args)?;
        let b = run_cli(&tmp.path().join(format!("{i}b")), &[&["--threads", "1"], *args].concat())?;
        ensure(a == b, || format!("{args:?} outputs differ between runs"))?;
    }
    let empty = tmp.path().join("empty");
    let cfg = tmp.path().join("empty.json");
    std::fs::write(
        &cfg,
        r#"{"experiment": {"command": "pipeline", "gamma": 1, "p": 2, "q": 4, "n_list": []}}"#,
    )
    .map_err(|e| e.to_string())?;
    let status = Command::new(env!("CARGO_BIN_EXE_widthlab"))
        .args(["--config", cfg.to_str().unwrap(), "--out", empty.to_str().unwrap()])
        .status()
        .map_err(|e| e.to_string())?;
    ensure(status.code() == Some(2) && !empty.exists(), || {
        format!("empty n_list: {status}, output exists: {}", empty.exists())
    })?;
    Ok(format!("{} commands byte-identical across runs and thread counts", runs.len()))
}

type Criterion = (&'static str, fn() -> Check);

fn main() {
    let criteria: [Criterion; 11] = [
        ("Parseval best-approximation oracle", parseval_oracle),
        ("Euclidean ball width", euclidean_width),
        ("brute force vs angular grid at m = 3", small_instance_oracle),
        ("domination by the coordinate subspace", domination),
        ("Φ identities", phi_identities),
        ("log-decay class at p = q = 2", theorem_l2),
        ("pipeline log identity", pipeline_identity),
        ("sampling-ratio stability", mz_stability),
        ("rate-fit recovery", fit_recovery),
        ("catalog verdicts", catalog_golden),
        ("CLI determinism", determinism),
    ];
    let t0 = Instant::now();
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = check();
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("[PASS] {:>2} {name}: {detail} ({secs:.1}s)", i + 1),
            Err(detail) => {
                failed += 1;
                println!("[FAIL] {:>2} {name}: {detail} ({secs:.1}s)", i + 1);
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed in {:.1}s",
        criteria.len() - failed,
        t0.elapsed().as_secs_f64()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
