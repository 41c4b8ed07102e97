use std::path::Path;

use super::config::{DensitySpec, ExperimentConfig};
use super::output::{fmt_f64, Csv};
use super::CliError;
use crate::asymptotics::{b_constant, fit_rate, knots_for_accuracy, RateFit};
use crate::design::{self, check_condition, generate_knots, Design, DensityKind};
use crate::error::Error;
use crate::kernel::CovarianceModel;
use crate::qmerror::{norm_error_with, pointwise_error_with, sweep_with, SweepRow};
use crate::spline::SplineScheme;

/// Rejects schemes that need derivatives the model cannot supply.
pub fn validate_scheme(model: &CovarianceModel, scheme: &SplineScheme) -> Result<(), CliError> {
    let max = model.max_deriv_order();
    if scheme.r_k() > max {
        return Err(CliError::Config(format!(
            "scheme ({}, {}) samples derivatives of order {} but {} provides up to {max}",
            scheme.q(),
            scheme.k(),
            scheme.r_k(),
            model.name()
        )));
    }
    if scheme.r_q() > 0 {
        if let Err(Error::Singularity { .. }) = model.cov(0.0, 0.5, scheme.r_q(), 0) {
            return Err(CliError::Config(format!(
                "{} has no derivatives at t = 0; use q = 1",
                model.name()
            )));
        }
    }
    Ok(())
}

pub fn knots_csv(design: &Design) -> String {
    let mut csv = Csv::new(&["i", "t_i"]);
    for (i, &t) in design.knots().iter().enumerate() {
        csv.row([i.to_string(), fmt_f64(t)]);
    }
    csv.as_str().to_string()
}

pub fn knots(cfg: &ExperimentConfig) -> Result<String, CliError> {
    let n = cfg.require_n()?;
    let density = match cfg.density {
        DensitySpec::Power(_) => cfg.density(&default_model(cfg)?)?,
        DensitySpec::Optimal => cfg.density(&cfg.model()?)?,
    };
    Ok(knots_csv(&generate_knots(&density, n)?))
}

/// Power densities do not need a model; fall back to Brownian motion.
fn default_model(cfg: &ExperimentConfig) -> Result<CovarianceModel, CliError> {
    match cfg.model {
        Some(_) => cfg.model(),
        None => crate::kernel::make_model(crate::kernel::ModelKind::Fbm { hurst: 0.5 }).map_err(CliError::from),
    }
}

pub fn error(cfg: &ExperimentConfig) -> Result<String, CliError> {
    let model = cfg.model()?;
    let scheme = cfg.scheme()?;
    validate_scheme(&model, &scheme)?;
    let n = cfg.require_n()?;
    let design = generate_knots(&cfg.density(&model)?, n)?;
    if let Some(t) = cfg.t {
        if !(0.0..=1.0).contains(&t) {
            return Err(CliError::Config(format!("t = {t} outside [0, 1]")));
        }
        let e = pointwise_error_with(&model, &design, &scheme, t, cfg.precision)?;
        let mut csv = Csv::new(&["t", "error", "variance_part"]);
        csv.row([fmt_f64(t), fmt_f64(e.value), fmt_f64(e.variance)]);
        return Ok(csv.as_str().to_string());
    }
    let r = norm_error_with(&model, &design, &scheme, cfg.p, cfg.precision)?;
    let mut csv = Csv::new(&["n", "p", "error", "diag_panels", "diag_est_err", "flagged"]);
    csv.row([
        n.to_string(),
        cfg.p.to_string(),
        fmt_f64(r.value),
        r.diagnostics.panels.to_string(),
        fmt_f64(r.diagnostics.est_rel_err),
        r.diagnostics.flagged.to_string(),
    ]);
    Ok(csv.as_str().to_string())
}

/// `n,error,scaled_error,diag_panels,diag_est_err`; failed rows are `NA`.
pub fn sweep_csv(rows: &[SweepRow], order: f64) -> String {
    let mut csv = Csv::new(&["n", "error", "scaled_error", "diag_panels", "diag_est_err"]);
    for row in rows {
        match &row.result {
            Ok(r) => csv.row([
                row.n.to_string(),
                fmt_f64(r.value),
                fmt_f64((row.n as f64).powf(order) * r.value),
                r.diagnostics.panels.to_string(),
                fmt_f64(r.diagnostics.est_rel_err),
            ]),
            Err(_) => csv.row([row.n.to_string(), "NA".into(), "NA".into(), "NA".into(), "NA".into()]),
        }
    }
    csv.as_str().to_string()
}

pub fn warn_failed_rows(rows: &[SweepRow]) {
    for row in rows {
        match &row.result {
            Err(e) => eprintln!("warning: n = {}: {e}", row.n),
            Ok(r) if r.diagnostics.flagged => eprintln!(
                "warning: n = {}: diagnostics flagged (est. rel. error {}, min deficit {})",
                row.n, r.diagnostics.est_rel_err, r.diagnostics.min_deficit
            ),
            Ok(_) => {}
        }
    }
}

pub fn run_sweep(cfg: &ExperimentConfig) -> Result<(Vec<SweepRow>, f64), CliError> {
    let model = cfg.model()?;
    let scheme = cfg.scheme()?;
    validate_scheme(&model, &scheme)?;
    let n_list = cfg.require_n_list()?;
    let density = cfg.density(&model)?;
    let rows = sweep_with(&model, &density, &scheme, cfg.p, &n_list, cfg.precision)?;
    warn_failed_rows(&rows);
    Ok((rows, cfg.order(&model)))
}

pub fn sweep(cfg: &ExperimentConfig) -> Result<String, CliError> {
    let (rows, order) = run_sweep(cfg)?;
    Ok(sweep_csv(&rows, order))
}

pub fn table_of(rows: &[SweepRow]) -> Vec<(usize, f64)> {
    rows.iter()
        .filter_map(|r| r.result.as_ref().ok().map(|v| (r.n, v.value)))
        .collect()
}

/// `(n, error)` pairs from a sweep CSV; `NA` rows are skipped.
pub fn read_sweep_csv(path: &Path) -> Result<Vec<(usize, f64)>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap_or("").split(',').map(str::trim).collect();
    let col = |name: &str| {
        header
            .iter()
            .position(|h| *h == name)
            .ok_or_else(|| CliError::Config(format!("{}: no `{name}` column", path.display())))
    };
    let (ni, ei) = (col("n")?, col("error")?);
    let mut out = Vec::new();
    for (k, line) in lines.enumerate() {
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        let bad = || CliError::Config(format!("{}:{}: malformed row", path.display(), k + 2));
        let (n, e) = (f.get(ni).ok_or_else(bad)?, f.get(ei).ok_or_else(bad)?);
        if *e == "NA" {
            continue;
        }
        out.push((n.parse().map_err(|_| bad())?, e.parse().map_err(|_| bad())?));
    }
    Ok(out)
}

pub fn fit_row(label: &str, fit: &RateFit, knots: Option<usize>) -> Vec<String> {
    vec![
        label.to_string(),
        fmt_f64(fit.log_c),
        fmt_f64(fit.constant()),
        fmt_f64(fit.rho),
        fmt_f64(fit.r_squared),
        fit.n_min.to_string(),
        fit.n_max.to_string(),
        fit.points.to_string(),
        knots.map_or_else(|| "NA".to_string(), |k| k.to_string()),
    ]
}

pub const FIT_HEADER: &[&str] = &["label", "log_c", "C", "rho", "r_squared", "n_min", "n_max", "points", "knots_for_epsilon"];

pub fn fit(cfg: &ExperimentConfig) -> Result<String, CliError> {
    let table = match &cfg.input {
        Some(path) => read_sweep_csv(path)?,
        None => table_of(&run_sweep(cfg)?.0),
    };
    let fit = fit_rate(&table, cfg.fit)?;
    let knots = cfg.epsilon.map(|eps| knots_for_accuracy(&fit, eps)).transpose()?;
    let mut csv = Csv::new(FIT_HEADER);
    csv.row(fit_row("fit", &fit, knots));
    Ok(csv.as_str().to_string())
}

pub fn bconst(cfg: &ExperimentConfig) -> Result<String, CliError> {
    let m = cfg.m.ok_or_else(|| CliError::Config("missing key `m`".into()))?;
    let beta = cfg.beta.ok_or_else(|| CliError::Config("missing key `beta`".into()))?;
    let b = b_constant(m, beta, cfg.k, cfg.p).map_err(|e| match e {
        Error::UnsupportedConstant { .. } => CliError::Config(e.to_string()),
        other => CliError::Compute(other),
    })?;
    let mut csv = Csv::new(&["m", "beta", "k", "p", "value", "method"]);
    csv.row([
        m.to_string(),
        fmt_f64(beta),
        cfg.k.to_string(),
        cfg.p.to_string(),
        fmt_f64(b.value),
        b.method.to_string(),
    ]);
    Ok(csv.as_str().to_string())
}

pub fn optimal_density(cfg: &ExperimentConfig) -> Result<String, CliError> {
    let model = cfg.model()?;
    let order = cfg.order(&model);
    let mut c = cfg.clone();
    c.density = DensitySpec::Optimal;
    let h = c.density(&model)?;
    let gamma = 1.0 / (order + cfg.p.reciprocal());
    let mut csv = Csv::new(&["quantity", "value"]);
    let kind = match h.kind() {
        DensityKind::Power { .. } => "power",
        DensityKind::Tabulated(_) => "tabulated",
        DensityKind::ClosedForm { .. } => "closed-form",
    };
    csv.row(["kind".into(), kind.into()]);
    csv.row(["order".into(), fmt_f64(order)]);
    csv.row(["gamma".into(), fmt_f64(gamma)]);
    csv.row(["near_zero_lambda".into(), fmt_f64(h.near_zero_power_index())]);
    for j in [0, 1, 2, 4, 8, 16, 32] {
        let t = 2f64.powi(-j);
        csv.row([format!("h({})", fmt_f64(t)), fmt_f64(h.h(t))]);
    }
    if let Some(n) = cfg.n {
        let d = generate_knots(&h, n)?;
        for (i, t) in d.knots().iter().enumerate() {
            csv.row([format!("t_{i}"), fmt_f64(*t)]);
        }
    }
    Ok(csv.as_str().to_string())
}

pub fn check_conditions(cfg: &ExperimentConfig) -> Result<String, CliError> {
    let model = cfg.model()?;
    let DensitySpec::Power(lambda) = cfg.density else {
        return Err(CliError::Config("condition checks need a power density (`lambda=...`)".into()));
    };
    let density = design::GeneratingDensity::power(lambda)?;
    let v = check_condition(model.profile(), &density, cfg.p, cfg.variant, cfg.k)?;
    let mut csv = Csv::new(&["quantity", "value"]);
    csv.row(["lambda".into(), fmt_f64(lambda)]);
    csv.row(["satisfied".into(), v.satisfied.to_string()]);
    csv.row(["threshold".into(), fmt_f64(v.threshold)]);
    csv.row(["rate_threshold".into(), fmt_f64(v.rate_threshold)]);
    csv.row(["integrability_threshold".into(), fmt_f64(v.integrability_threshold)]);
    csv.row(["detail".into(), v.detail]);
    Ok(csv.as_str().to_string())
}

pub fn intermediate_design(cfg: &ExperimentConfig) -> Result<String, CliError> {
    let model = cfg.model()?;
    let kappa = cfg.kappa.ok_or_else(|| CliError::Config("missing key `kappa`".into()))?;
    let n = cfg.require_n()?;
    let d = design::intermediate_design(model.profile(), kappa, n, cfg.p).map_err(|e| match e {
        Error::InvalidArgument(_) => CliError::Config(e.to_string()),
        other => CliError::Compute(other),
    })?;
    Ok(knots_csv(&d))
}
