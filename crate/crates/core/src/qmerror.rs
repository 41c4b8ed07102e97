//! Exact pointwise q.m. error of `H_{q,k}` interpolation from the covariance
//! bilinear form, and its `L^p` / sup norms over [0, 1].

use rayon::prelude::*;

use crate::dd::Dd;
use crate::design::{generate_knots, Design, GeneratingDensity};
use crate::error::{Error, Result};
use crate::kernel::CovarianceModel;
use crate::norm::NormOrder;
use crate::quadrature::{golden_max, GaussLegendre};
use crate::spline::{local_weights, SplineScheme};

/// Arithmetic used for the bilinear form.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Precision {
    /// Double-double kernels and accumulation.
    #[default]
    Extended,
    /// Kernels rounded to `f64`, plain accumulation.
    Double,
}

/// Variance deficits below this are reported.
pub const DEFICIT_WARN: f64 = -1e-20;
const QUAD_RTOL: f64 = 1e-7;
const MAX_LEVELS: usize = 48;
const SCAN_POINTS: usize = 33;
const GOLDEN_RTOL: f64 = 1e-10;
const FLAG_RTOL: f64 = 1e-4;

/// `e_n(t)` together with the variance part before clamping.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointError {
    pub value: f64,
    pub variance: f64,
}

/// Precomputed data of one interval: sampled functionals and their Gram
/// matrix.
struct IntervalForm<'a> {
    model: &'a CovarianceModel,
    a: f64,
    b: f64,
    degree: usize,
    taus: Vec<(f64, usize)>,
    gram: Vec<Dd>,
    mean_at_taus: Vec<f64>,
    precision: Precision,
}

impl<'a> IntervalForm<'a> {
    fn new(model: &'a CovarianceModel, design: &Design, scheme: &SplineScheme, j: usize, precision: Precision) -> Result<Self> {
        let (a, b) = design.interval(j);
        let degree = scheme.degree_on(j);
        let r = (degree - 1) / 2;
        // same ordering as local_weights: order-major, left side first
        let taus: Vec<(f64, usize)> = (0..=r).flat_map(|d| [(a, d), (b, d)]).collect();
        let m = taus.len();
        let mut gram = vec![Dd::ZERO; m * m];
        for x in 0..m {
            for y in x..m {
                let (tx, dx) = taus[x];
                let (ty, dy) = taus[y];
                let v = round(model.cov(tx, ty, dx, dy)?, precision);
                gram[x * m + y] = v;
                gram[y * m + x] = v;
            }
        }
        let mean_at_taus = if model.has_mean() {
            taus.iter().map(|&(x, d)| model.mean(x, d)).collect()
        } else {
            Vec::new()
        };
        Ok(IntervalForm {
            model,
            a,
            b,
            degree,
            taus,
            gram,
            mean_at_taus,
            precision,
        })
    }

    fn eval(&self, t: f64) -> Result<PointError> {
        if t <= self.a || t >= self.b {
            return Ok(PointError { value: 0.0, variance: 0.0 });
        }
        let w = local_weights(self.degree, self.a, self.b, t);
        let m = self.taus.len();
        let diag = self.model.cov(t, t, 0, 0)?;
        let mut cross = Vec::with_capacity(m);
        for &(x, d) in &self.taus {
            cross.push(round(self.model.cov(t, x, 0, d)?, self.precision));
        }
        let variance = match self.precision {
            Precision::Extended => {
                let mut acc = diag;
                for x in 0..m {
                    let wx = w[x].2;
                    let mut row = Dd::ZERO;
                    for y in 0..m {
                        row += w[y].2 * self.gram[x * m + y];
                    }
                    acc += wx * (row - cross[x].mul_pow2(2.0));
                }
                acc.to_f64()
            }
            Precision::Double => {
                let wf: Vec<f64> = w.iter().map(|e| e.2.to_f64()).collect();
                let mut acc = diag.to_f64();
                for x in 0..m {
                    let mut row = 0.0;
                    for y in 0..m {
                        row += wf[y] * self.gram[x * m + y].to_f64();
                    }
                    acc += wf[x] * (row - 2.0 * cross[x].to_f64());
                }
                acc
            }
        };
        let bias = if self.mean_at_taus.is_empty() {
            0.0
        } else {
            let fit: f64 = w.iter().zip(&self.mean_at_taus).map(|(e, f)| e.2.to_f64() * f).sum();
            self.model.mean(t, 0) - fit
        };
        Ok(PointError {
            value: (variance.max(0.0) + bias * bias).sqrt(),
            variance,
        })
    }
}

fn round(v: Dd, precision: Precision) -> Dd {
    match precision {
        Precision::Extended => v,
        Precision::Double => Dd::from(v.to_f64()),
    }
}

fn check_orders(model: &CovarianceModel, scheme: &SplineScheme) -> Result<()> {
    let need = scheme.r_k();
    let max = model.max_deriv_order();
    if need > max {
        return Err(Error::OrderExceeded { i: need, j: need, max });
    }
    Ok(())
}

/// `e_n(t) = ||X(t) - H_{q,k}(X, T_n)(t)||`.
pub fn pointwise_error(model: &CovarianceModel, design: &Design, scheme: &SplineScheme, t: f64) -> Result<f64> {
    pointwise_error_with(model, design, scheme, t, Precision::Extended).map(|e| e.value)
}

pub fn pointwise_error_with(
    model: &CovarianceModel,
    design: &Design,
    scheme: &SplineScheme,
    t: f64,
    precision: Precision,
) -> Result<PointError> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::Domain(t));
    }
    check_orders(model, scheme)?;
    IntervalForm::new(model, design, scheme, design.locate(t), precision)?.eval(t)
}

/// Samples of `e_n` on an equispaced grid per interval (knots included).
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorCurve {
    pub samples: Vec<(f64, f64)>,
    pub scheme: SplineScheme,
    pub n: usize,
    pub model: String,
}

pub fn error_curve(
    model: &CovarianceModel,
    design: &Design,
    scheme: &SplineScheme,
    per_interval: usize,
) -> Result<ErrorCurve> {
    check_orders(model, scheme)?;
    let per = per_interval.max(1);
    let chunks: Vec<Result<Vec<(f64, f64)>>> = (1..=design.n())
        .into_par_iter()
        .map(|j| {
            let form = IntervalForm::new(model, design, scheme, j, Precision::Extended)?;
            let (a, b) = (form.a, form.b);
            (0..per)
                .map(|i| {
                    let t = if i == 0 { a } else { a + (b - a) * i as f64 / per as f64 };
                    form.eval(t).map(|e| (t, e.value))
                })
                .collect()
        })
        .collect();
    let mut samples = Vec::with_capacity(design.n() * per + 1);
    for c in chunks {
        samples.extend(c?);
    }
    samples.push((1.0, 0.0));
    Ok(ErrorCurve {
        samples,
        scheme: *scheme,
        n: design.n(),
        model: model.name().to_string(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct NormDiagnostics {
    /// Quadrature panels (p < ∞) or refined maximization brackets (p = ∞).
    pub panels: usize,
    /// Estimated relative numerical error of the value.
    pub est_rel_err: f64,
    /// Smallest variance part seen before clamping (0 when none negative).
    pub min_deficit: f64,
    /// Set when an interval did not converge, the error estimate exceeds
    /// 1e-4, or a deficit fell below [`DEFICIT_WARN`].
    pub flagged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormResult {
    pub value: f64,
    pub p: NormOrder,
    pub diagnostics: NormDiagnostics,
}

struct IntervalNorm {
    /// ∫ e^p (p finite) or max e (p = ∞)
    value: f64,
    abs_err: f64,
    panels: usize,
    min_deficit: f64,
    converged: bool,
}

pub fn norm_error(model: &CovarianceModel, design: &Design, scheme: &SplineScheme, p: NormOrder) -> Result<NormResult> {
    norm_error_with(model, design, scheme, p, Precision::Extended)
}

pub fn norm_error_with(
    model: &CovarianceModel,
    design: &Design,
    scheme: &SplineScheme,
    p: NormOrder,
    precision: Precision,
) -> Result<NormResult> {
    check_orders(model, scheme)?;
    let parts: Vec<Result<IntervalNorm>> = (1..=design.n())
        .into_par_iter()
        .map(|j| {
            let form = IntervalForm::new(model, design, scheme, j, precision)?;
            match p {
                NormOrder::Finite(p) => integrate_interval(&form, p),
                NormOrder::Infinity => maximize_interval(&form),
            }
        })
        .collect();

    // fixed-order reduction
    let mut diag = NormDiagnostics::default();
    let mut total = 0.0;
    let mut err = 0.0;
    let mut comp = 0.0;
    for part in parts {
        let part = part?;
        diag.panels += part.panels;
        diag.min_deficit = diag.min_deficit.min(part.min_deficit);
        diag.flagged |= !part.converged;
        match p {
            NormOrder::Finite(_) => {
                let y = part.value - comp;
                let s = total + y;
                comp = (s - total) - y;
                total = s;
                err += part.abs_err;
            }
            NormOrder::Infinity => {
                if part.value > total {
                    total = part.value;
                    err = part.abs_err;
                }
            }
        }
    }
    let value = match p {
        NormOrder::Finite(p) => total.max(0.0).powf(1.0 / p),
        NormOrder::Infinity => total,
    };
    diag.est_rel_err = match p {
        // relative error of ∫ e^p shrinks by 1/p under the root
        NormOrder::Finite(p) if total > 0.0 => err / total / p,
        NormOrder::Infinity if total > 0.0 => err / total,
        _ => 0.0,
    };
    diag.flagged |= diag.est_rel_err > FLAG_RTOL || diag.min_deficit < DEFICIT_WARN;
    Ok(NormResult { value, p, diagnostics: diag })
}

/// 16-point Gauss–Legendre on panels that are halved toward both interval
/// ends, where `e_n` has its algebraic singularities.
fn integrate_interval(form: &IntervalForm<'_>, p: f64) -> Result<IntervalNorm> {
    let gl = GaussLegendre::cached(16);
    let (a, b) = (form.a, form.b);
    let h = b - a;
    let mut min_deficit = 0.0f64;
    let mut panel = |lo: f64, hi: f64| -> Result<f64> {
        let mut acc = 0.0;
        for (x, w) in gl.mapped(lo, hi) {
            let e = form.eval(x)?;
            min_deficit = min_deficit.min(e.variance);
            acc += w * e.value.powf(p);
        }
        Ok(acc)
    };
    // level L: panels [a, a+h/2^L], [a+h/2^k, a+h/2^{k-1}] for k = 2..=L, mirrored
    let mid = a + 0.5 * h;
    let mut interior = 0.0;
    let mut left = panel(a, mid)?;
    let mut right = panel(mid, b)?;
    let mut prev = left + right;
    let mut converged = false;
    let mut abs_err = 0.0;
    let mut level = 1;
    while level < MAX_LEVELS {
        level += 1;
        let w = h / 2f64.powi(level as i32);
        let (l0, l1) = (panel(a, a + w)?, panel(a + w, a + 2.0 * w)?);
        let (r0, r1) = (panel(b - w, b)?, panel(b - 2.0 * w, b - w)?);
        interior += l1 + r1;
        left = l0;
        right = r0;
        let cur = interior + left + right;
        abs_err = (cur - prev).abs();
        prev = cur;
        if level >= 3 && abs_err <= QUAD_RTOL * cur.abs() {
            converged = true;
            break;
        }
        if cur == 0.0 && level >= 3 {
            converged = true;
            break;
        }
    }
    Ok(IntervalNorm {
        value: prev,
        abs_err,
        panels: 2 * level,
        min_deficit,
        converged,
    })
}

/// 33-point scan, then golden section on `e^2` around the best scan point.
fn maximize_interval(form: &IntervalForm<'_>) -> Result<IntervalNorm> {
    let (a, b) = (form.a, form.b);
    let h = b - a;
    let step = h / (SCAN_POINTS - 1) as f64;
    let mut min_deficit = 0.0f64;
    let mut best = (0usize, -1.0f64);
    for i in 1..SCAN_POINTS - 1 {
        let e = form.eval(a + step * i as f64)?;
        min_deficit = min_deficit.min(e.variance);
        let sq = e.value * e.value;
        if sq > best.1 {
            best = (i, sq);
        }
    }
    let lo = a + step * (best.0 - 1) as f64;
    let hi = a + step * (best.0 + 1) as f64;
    let (_, sq, spread) = golden_max(lo, hi, GOLDEN_RTOL * h, |x| {
        let e = form.eval(x)?;
        min_deficit = min_deficit.min(e.variance);
        Ok::<f64, Error>(e.value * e.value)
    })?;
    let sq = sq.max(best.1);
    let value = sq.sqrt();
    Ok(IntervalNorm {
        value,
        abs_err: if value > 0.0 { 0.5 * spread / value } else { 0.0 },
        panels: 1,
        min_deficit,
        converged: true,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub n: usize,
    pub result: Result<NormResult>,
}

/// `norm_error` over `generate_knots(density, n)` for each `n`.
pub fn sweep(
    model: &CovarianceModel,
    density: &GeneratingDensity,
    scheme: &SplineScheme,
    p: NormOrder,
    n_list: &[usize],
) -> Result<Vec<SweepRow>> {
    sweep_with(model, density, scheme, p, n_list, Precision::Extended)
}

pub fn sweep_with(
    model: &CovarianceModel,
    density: &GeneratingDensity,
    scheme: &SplineScheme,
    p: NormOrder,
    n_list: &[usize],
    precision: Precision,
) -> Result<Vec<SweepRow>> {
    if n_list.is_empty() {
        return Err(Error::InvalidArgument("empty n list".into()));
    }
    if n_list.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument("n list must be strictly increasing".into()));
    }
    Ok(n_list
        .iter()
        .map(|&n| SweepRow {
            n,
            result: generate_knots(density, n).and_then(|d| norm_error_with(model, &d, scheme, p, precision)),
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::make_model;

    fn model(s: &str) -> CovarianceModel {
        make_model(s.parse().unwrap()).unwrap()
    }

    fn lin() -> SplineScheme {
        SplineScheme::uniform(1).unwrap()
    }

    #[test]
    fn brownian_bridge_midpoint() {
        let d = Design::new(vec![0.0, 1.0]).unwrap();
        let e = pointwise_error(&model("fbm(0.5)"), &d, &lin(), 0.5).unwrap();
        assert!((e - 0.5).abs() < 1e-15);
    }

    #[test]
    fn fbm_08_midpoint() {
        let d = Design::new(vec![0.0, 1.0]).unwrap();
        let x = 0.5f64.powf(1.6);
        let want = (x - 0.5 * (x + 1.0 - x) + 0.25).sqrt();
        let e = pointwise_error(&model("fbm(0.8)"), &d, &lin(), 0.5).unwrap();
        assert!((e - want).abs() < 1e-14);
        assert!((e - 0.2827).abs() < 1e-4);
    }

    #[test]
    fn zero_at_knots() {
        let d = Design::new(vec![0.0, 0.1, 0.35, 0.7, 1.0]).unwrap();
        for (m, k) in [("fbm(0.3)", 1), ("time_changed_fbm(0.8)", 1), ("integrated_fbm(1,0.6)", 3)] {
            let s = SplineScheme::uniform(k).unwrap();
            for &t in d.knots() {
                assert!(pointwise_error(&model(m), &d, &s, t).unwrap() <= 1e-9);
            }
        }
    }

    #[test]
    fn norms_for_brownian_motion() {
        let d = Design::new(vec![0.0, 1.0]).unwrap();
        let bm = model("fbm(0.5)");
        let sup = norm_error(&bm, &d, &lin(), NormOrder::Infinity).unwrap();
        assert!((sup.value - 0.5).abs() < 1e-12);
        let l2 = norm_error(&bm, &d, &lin(), NormOrder::Finite(2.0)).unwrap();
        assert!((l2.value - 1.0 / 6f64.sqrt()).abs() < 1e-12);
        assert!(!l2.diagnostics.flagged);
    }

    #[test]
    fn cubic_needs_extended_precision() {
        // smooth process, fine mesh: e^2 ~ 1e-22 against O(1) terms
        let m = model("distorted_stationary(0.9)");
        let s = SplineScheme::new(1, 3).unwrap();
        let d = Design::uniform(256).unwrap();
        let t = 0.5 + 0.5 / 256.0;
        let ext = pointwise_error_with(&m, &d, &s, t, Precision::Extended).unwrap();
        let dbl = pointwise_error_with(&m, &d, &s, t, Precision::Double).unwrap();
        assert!(ext.variance > 0.0);
        assert!(ext.value < 1e-9);
        assert!((dbl.variance - ext.variance).abs() > 10.0 * ext.variance);
    }

    #[test]
    fn singular_first_knot_with_cubic_first_piece() {
        let m = model("distorted_stationary(0.9)");
        let d = Design::uniform(4).unwrap();
        let s = SplineScheme::uniform(3).unwrap();
        assert!(matches!(pointwise_error(&m, &d, &s, 0.1), Err(Error::Singularity { .. })));
        let ok = SplineScheme::new(1, 3).unwrap();
        assert!(pointwise_error(&m, &d, &ok, 0.1).is_ok());
    }

    #[test]
    fn order_exceeded() {
        let d = Design::uniform(4).unwrap();
        let s = SplineScheme::uniform(3).unwrap();
        assert!(matches!(
            pointwise_error(&model("fbm(0.5)"), &d, &s, 0.3),
            Err(Error::OrderExceeded { .. })
        ));
    }

    #[test]
    fn mean_adds_bias() {
        use std::sync::Arc;
        let m = model("fbm(0.5)").with_mean(Arc::new(|t: f64, j: usize| match j {
            0 => t * t,
            1 => 2.0 * t,
            _ => 2.0,
        }));
        let d = Design::new(vec![0.0, 1.0]).unwrap();
        // bias of linear interpolation of t^2 at 1/2 is -1/4
        let e = pointwise_error(&m, &d, &lin(), 0.5).unwrap();
        assert!((e - (0.25f64 + 0.0625).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn sweep_single_row_matches_norm() {
        let m = model("time_changed_fbm(0.8)");
        let dens = GeneratingDensity::power(2.1).unwrap();
        let rows = sweep(&m, &dens, &lin(), NormOrder::Infinity, &[32]).unwrap();
        let direct = norm_error(&m, &generate_knots(&dens, 32).unwrap(), &lin(), NormOrder::Infinity).unwrap();
        assert_eq!(rows[0].result.as_ref().unwrap().value.to_bits(), direct.value.to_bits());
        assert!(sweep(&m, &dens, &lin(), NormOrder::Infinity, &[8, 8]).is_err());
    }

    #[test]
    fn uniform_time_changed_constant() {
        // n^0.4 e_n is exactly constant by self-similarity
        let m = model("time_changed_fbm(0.8)");
        let mut vals = Vec::new();
        for n in [16, 64] {
            let d = Design::uniform(n).unwrap();
            let v = norm_error(&m, &d, &lin(), NormOrder::Infinity).unwrap().value;
            vals.push(v * (n as f64).powf(0.4));
        }
        assert!((vals[0] - vals[1]).abs() < 1e-8);
        assert!((vals[0] - 0.3774).abs() < 5e-4);
    }
}
