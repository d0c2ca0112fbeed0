//! One runner per subcommand; each returns its table, summary and plot.

use std::path::Path;

use rayon::prelude::*;
use serde_json::{json, Value};
use widthlab::{
    ball_width_bruteforce_with, catalog_entry, coordinate_subspace_bound, en_exact_l2,
    en_lower_search, fit_rate, lower_bound_pipeline, mz_ratio_stats, optimality_gap, phi_gluskin,
    standard_catalog, BallWidthInstance, BruteForceOptions, CatalogEntry, ClassFamily,
    GapOptions, RateFamily, RateFit,
};

use crate::config::{
    ApproxConfig, CatalogConfig, Experiment, ExperimentConfig, FitConfig, MzConfig,
    PipelineConfig, WidthsConfig,
};
use crate::plot::{Plot, Series};
use crate::CliError;

/// Everything a run produces before anything is written.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
    pub summary: Value,
    pub flags: Vec<String>,
    pub nonconverged: bool,
    pub plot: Option<Plot>,
}

impl Outcome {
    fn new(header: Vec<&'static str>) -> Self {
        Self {
            header,
            rows: Vec::new(),
            summary: Value::Null,
            flags: Vec::new(),
            nonconverged: false,
            plot: None,
        }
    }
}

/// 17 significant digits.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn run(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    match &cfg.experiment {
        Experiment::Approx(c) => approx(c, cfg.seed),
        Experiment::Widths(c) => widths(c, cfg.seed),
        Experiment::Pipeline(c) => pipeline(c, cfg.seed),
        Experiment::Catalog(c) => Ok(catalog(c)),
        Experiment::Fit(c) => fit(c),
        Experiment::Mz(c) => mz(c, cfg.seed),
    }
}

fn model_json(fit: &RateFit) -> Value {
    json!({
        "rate": fit.model.to_string(),
        "family": fit.model.family,
        "c": fit.model.c,
        "residual": fit.residual,
        "candidates": fit.candidates.iter().map(|(m, r)| json!({
            "family": m.family.tag(),
            "rate": m.to_string(),
            "c": m.c,
            "residual": r,
        })).collect::<Vec<_>>(),
    })
}

fn try_fit(points: &[(f64, f64)], flags: &mut Vec<String>) -> Value {
    match fit_rate(points) {
        Ok(f) => model_json(&f),
        Err(e) => {
            flags.push(format!("no rate fit: {e}"));
            Value::Null
        }
    }
}

fn approx(c: &ApproxConfig, seed: u64) -> Result<Outcome, CliError> {
    let kernel = c.kernel.build()?;
    let exact = c.p == 2.0 && c.q == 2.0;
    let per_n: Vec<_> = c
        .n_list
        .par_iter()
        .map(|&n| {
            let e = if exact && n < kernel.truncation() {
                Some(en_exact_l2(&kernel, n)?)
            } else {
                None
            };
            let s = en_lower_search(&kernel, c.p, c.q, n, c.budget, seed)?;
            Ok((n, e, s))
        })
        .collect::<widthlab::Result<_>>()?;

    let mut out = Outcome::new(vec!["n", "quantity", "value"]);
    let mut exact_pts = Vec::new();
    let mut search_pts = Vec::new();
    let mut rows_json = Vec::new();
    for (n, e, s) in &per_n {
        if let Some(e) = e {
            out.rows.push(vec![n.to_string(), "en_exact_l2".into(), num(*e)]);
            exact_pts.push((*n as f64, *e));
        }
        out.rows.push(vec![n.to_string(), "en_lower_search".into(), num(s.value)]);
        out.rows.push(vec![n.to_string(), "candidates_skipped".into(), num(s.skipped as f64)]);
        search_pts.push((*n as f64, s.value));
        if s.skipped > 0 {
            out.flags.push(format!("n = {n}: {} of {} candidates did not converge", s.skipped, s.evaluations));
        }
        if s.skipped == s.evaluations {
            out.nonconverged = true;
        }
        rows_json.push(json!({
            "n": n,
            "en_exact_l2": e,
            "en_lower_search": s.value,
            "evaluations": s.evaluations,
            "skipped": s.skipped,
            "budget_exhausted": s.budget_exhausted,
        }));
    }
    let fitted = if exact_pts.is_empty() { &search_pts } else { &exact_pts };
    let rate = try_fit(fitted, &mut out.flags);
    out.summary = json!({
        "truncation": kernel.truncation(),
        "rows": rows_json,
        "fitted_rate": rate,
        "fitted_quantity": if exact_pts.is_empty() { "en_lower_search" } else { "en_exact_l2" },
    });
    let mut series = Vec::new();
    if !exact_pts.is_empty() {
        series.push(Series { label: "E_n (exact, L2)".into(), points: exact_pts });
    }
    series.push(Series { label: "E_n search".into(), points: search_pts });
    out.plot = Some(Plot {
        title: format!("E_n, p = {}, q = {}", c.p, c.q),
        x_label: "n".into(),
        y_label: "error".into(),
        series,
    });
    Ok(out)
}

fn widths(c: &WidthsConfig, seed: u64) -> Result<Outcome, CliError> {
    let ns: Vec<usize> = if c.n_list.is_empty() {
        (0..=c.m).collect()
    } else {
        c.n_list.clone()
    };
    let opts = BruteForceOptions {
        restarts: c.restarts,
        inner_starts: c.inner_starts,
        ..BruteForceOptions::default()
    };
    let finite = c.p.0.finite().is_some() && c.q.0.finite().is_some();
    let run_bf = c.bruteforce && finite && c.m <= opts.max_dim;
    let mut out = Outcome::new(vec!["m", "n", "p", "q", "quantity", "value"]);
    if c.bruteforce && !run_bf {
        out.flags.push(format!(
            "brute force skipped (needs finite exponents and m <= {})",
            opts.max_dim
        ));
    }
    let (ps, qs) = (c.p.to_string(), c.q.to_string());
    let mut rows_json = Vec::new();
    for &n in &ns {
        let inst = BallWidthInstance::new(c.m, n, c.p.0, c.q.0)?;
        let mut row = |quantity: &str, v: f64| {
            out.rows.push(vec![
                c.m.to_string(),
                n.to_string(),
                ps.clone(),
                qs.clone(),
                quantity.to_string(),
                num(v),
            ])
        };
        let coord = coordinate_subspace_bound(&inst);
        row("coordinate_bound", coord);
        let phi = if n < c.m { phi_gluskin(&inst).ok() } else { None };
        if let Some(phi) = phi {
            row("phi_gluskin", phi);
        }
        let bf = if run_bf {
            let w = ball_width_bruteforce_with(&inst, &opts, seed)?;
            row("bruteforce", w.value);
            if let Some(d) = &w.diagnostics {
                row("bruteforce_median", d.median);
                if !d.converged {
                    out.flags.push(format!("n = {n}: best subspace came from an unconverged restart"));
                }
            }
            Some(w)
        } else {
            None
        };
        rows_json.push(json!({
            "n": n,
            "coordinate_bound": coord,
            "phi_gluskin": phi,
            "bruteforce": bf,
        }));
    }
    out.summary = json!({ "m": c.m, "p": c.p, "q": c.q, "rows": rows_json });
    Ok(out)
}

fn pipeline(c: &PipelineConfig, seed: u64) -> Result<Outcome, CliError> {
    let mut out = Outcome::new(vec!["n", "quantity", "value"]);
    let gap_ready = c.m.is_none() && c.n_list[0] >= 4;
    let mut lower_pts = Vec::new();
    let mut upper_pts = Vec::new();
    if gap_ready {
        let opts = GapOptions {
            threshold: c.threshold,
            search_budget: (c.search_budget > 0).then_some(c.search_budget),
            seed,
        };
        let gap = optimality_gap(c.gamma, c.p, c.q, &c.n_list, &opts)?;
        for r in &gap.rows {
            let n = r.n.to_string();
            let pr = &r.pipeline;
            let mut push = |q: &str, v: f64| out.rows.push(vec![n.clone(), q.to_string(), num(v)]);
            push("m", pr.m_chosen as f64);
            push("log_factor", pr.log_factor);
            push("phi", pr.phi_value);
            push("lower_bound", pr.lower_bound);
            push("upper_estimate", pr.upper_estimate);
            push("upper", r.upper);
            if let Some(f) = r.search_floor {
                push("search_floor", f);
            }
            push("ratio", r.ratio);
            lower_pts.push((r.n as f64, pr.lower_bound));
            upper_pts.push((r.n as f64, r.upper));
            if !pr.notes.is_empty() {
                out.flags.push(format!("n = {}: {}", r.n, pr.notes));
            }
        }
        out.summary = json!({
            "verdict": gap.verdict,
            "spread": gap.spread,
            "threshold": gap.threshold,
            "fitted_constant": gap.fitted_constant,
            "upper_source": gap.rows[0].upper_source,
            "rows": gap.rows,
        });
    } else {
        out.flags.push("optimality gap skipped (needs automatic m and n >= 4)".into());
        let reports = c
            .n_list
            .iter()
            .map(|&n| lower_bound_pipeline(c.gamma, c.p, c.q, n, c.m))
            .collect::<widthlab::Result<Vec<_>>>()?;
        for pr in &reports {
            let n = pr.n.to_string();
            let mut push = |q: &str, v: f64| out.rows.push(vec![n.clone(), q.to_string(), num(v)]);
            push("m", pr.m_chosen as f64);
            push("log_factor", pr.log_factor);
            push("phi", pr.phi_value);
            push("lower_bound", pr.lower_bound);
            push("upper_estimate", pr.upper_estimate);
            lower_pts.push((pr.n as f64, pr.lower_bound));
            upper_pts.push((pr.n as f64, pr.upper_estimate));
        }
        out.summary = json!({ "rows": reports });
    }
    out.plot = Some(Plot {
        title: format!("lower bound chain, gamma = {}, p = {}, q = {}", c.gamma, c.p, c.q),
        x_label: "n".into(),
        y_label: "value".into(),
        series: vec![
            Series { label: "lower bound".into(), points: lower_pts },
            Series { label: "upper".into(), points: upper_pts },
        ],
    });
    Ok(out)
}

fn class_params(f: &ClassFamily) -> (&'static str, String) {
    match f {
        ClassFamily::Sobolev { r } => ("sobolev", format!("r={r}")),
        ClassFamily::Exponential { mu, r } => ("exponential", format!("mu={mu};r={r}")),
        ClassFamily::TheoremPolyLog { gamma } => ("log-decay", format!("gamma={gamma}")),
    }
}

fn catalog(c: &CatalogConfig) -> Outcome {
    let exps = [1.5, 2.0, 3.0, 4.0];
    let entries: Vec<CatalogEntry> = match (c.class, c.p, c.q) {
        (None, None, None) => standard_catalog(),
        (class, p, q) => {
            let classes: Vec<ClassFamily> = match class {
                Some(f) => vec![f],
                None => standard_catalog()
                    .iter()
                    .map(|e| match e {
                        CatalogEntry::Covered(r) => r.family,
                        CatalogEntry::Uncovered { family, .. } => *family,
                    })
                    .fold(Vec::new(), |mut acc, f| {
                        if !acc.contains(&f) {
                            acc.push(f);
                        }
                        acc
                    }),
            };
            let ps = p.map_or(exps.to_vec(), |p| vec![p]);
            let qs = q.map_or(exps.to_vec(), |q| vec![q]);
            let mut v = Vec::new();
            for f in &classes {
                for &p in &ps {
                    for &q in &qs {
                        v.push(catalog_entry(*f, p, q));
                    }
                }
            }
            v
        }
    };
    let mut out = Outcome::new(vec![
        "family", "params", "p", "q", "regime", "width_rate", "en_rate", "verdict", "critical_beta",
        "anchor", "flags",
    ]);
    for e in &entries {
        let row = match e {
            CatalogEntry::Covered(r) => {
                let (fam, params) = class_params(&r.family);
                vec![
                    fam.into(),
                    params,
                    r.p.to_string(),
                    r.q.to_string(),
                    r.regime.clone(),
                    r.width_rate.clone(),
                    r.en_rate.clone(),
                    r.verdict.clone(),
                    r.critical_beta.map(num).unwrap_or_default(),
                    r.anchor.clone(),
                    r.flags.join("; "),
                ]
            }
            CatalogEntry::Uncovered {
                family,
                p,
                q,
                uncovered,
            } => {
                let (fam, params) = class_params(family);
                vec![
                    fam.into(),
                    params,
                    p.to_string(),
                    q.to_string(),
                    "uncovered".into(),
                    String::new(),
                    String::new(),
                    String::new(),
                    String::new(),
                    String::new(),
                    uncovered.clone(),
                ]
            }
        };
        out.rows.push(row);
    }
    let mut summary = json!({ "entries": entries });
    if let [CatalogEntry::Covered(r)] = entries.as_slice() {
        summary["verdict"] = json!(r.verdict);
        summary["width_rate"] = json!(r.width_rate);
        summary["en_rate"] = json!(r.en_rate);
    }
    out.summary = summary;
    out
}

fn read_points(path: &Path) -> Result<Vec<(f64, f64)>, CliError> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| match e.kind() {
        csv::ErrorKind::Io(_) => CliError::Io(format!("{}: {e}", path.display())),
        _ => CliError::Config(format!("{}: {e}", path.display())),
    })?;
    let mut points = Vec::new();
    for rec in rdr.deserialize::<(f64, f64)>() {
        points.push(rec.map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?);
    }
    Ok(points)
}

fn fit(c: &FitConfig) -> Result<Outcome, CliError> {
    let points = match c {
        FitConfig::Points { points } => points.clone(),
        FitConfig::Csv { path } => read_points(path)?,
        FitConfig::ExactL2 { kernel, n_list } => {
            let k = kernel.build()?;
            n_list
                .iter()
                .map(|&n| Ok((n as f64, en_exact_l2(&k, n)?)))
                .collect::<widthlab::Result<_>>()?
        }
    };
    let f = fit_rate(&points)?;
    let mut out = Outcome::new(vec!["n", "quantity", "value"]);
    let mut fitted = Vec::new();
    for &(n, v) in &points {
        out.rows.push(vec![num(n), "observed".into(), num(v)]);
        out.rows.push(vec![num(n), "fitted".into(), num(f.model.eval(n))]);
        fitted.push((n, f.model.eval(n)));
    }
    if matches!(f.model.family, RateFamily::ExpRate { .. }) {
        out.flags.push("exponential fit: r is grid-refined, not exact".into());
    }
    out.summary = model_json(&f);
    out.plot = Some(Plot {
        title: format!("fit: {}", f.model),
        x_label: "n".into(),
        y_label: "value".into(),
        series: vec![
            Series { label: "observed".into(), points },
            Series { label: "fitted".into(), points: fitted },
        ],
    });
    Ok(out)
}

fn mz(c: &MzConfig, seed: u64) -> Result<Outcome, CliError> {
    let mut out = Outcome::new(vec!["m", "p", "quantity", "value"]);
    let mut per_p = Vec::new();
    let mut series = Vec::new();
    for &p in &c.p_list {
        let stats = c
            .m_list
            .iter()
            .map(|&m| mz_ratio_stats(m, p, c.trials, seed).map(|s| (m, s)))
            .collect::<widthlab::Result<Vec<_>>>()?;
        let mut pts = Vec::new();
        for (m, s) in &stats {
            let ms = m.to_string();
            let ps = p.to_string();
            for (q, v) in [("min_ratio", s.min_ratio), ("max_ratio", s.max_ratio), ("spread", s.spread())] {
                out.rows.push(vec![ms.clone(), ps.clone(), q.into(), num(v)]);
            }
            pts.push((*m as f64, s.spread()));
        }
        let spreads: Vec<f64> = stats.iter().map(|(_, s)| s.spread()).collect();
        let hi = spreads.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lo = spreads.iter().copied().fold(f64::INFINITY, f64::min);
        per_p.push(json!({
            "p": p,
            "c1": stats.iter().map(|(_, s)| s.min_ratio).fold(f64::INFINITY, f64::min),
            "c2": stats.iter().map(|(_, s)| s.max_ratio).fold(f64::NEG_INFINITY, f64::max),
            "cross_degree_spread": hi / lo,
        }));
        series.push(Series { label: format!("p = {p}"), points: pts });
    }
    out.summary = json!({ "trials": c.trials, "per_p": per_p });
    out.plot = Some(Plot {
        title: "max/min sampling ratio".into(),
        x_label: "degree m".into(),
        y_label: "spread".into(),
        series,
    });
    Ok(out)
}
