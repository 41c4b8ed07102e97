//! Universal remainder constants `b^{m,β}_{k,p}`, local stationarity
//! functions, optimal densities, asymptotic error constants, and log-log
//! rate fits.

use std::fmt;

use statrs::function::beta::ln_beta;

use crate::dd::Dd;
use crate::design::{Design, GeneratingDensity};
use crate::error::{Error, Result};
use crate::kernel::{make_model, CovarianceModel, LocalFn, ModelKind};
use crate::norm::NormOrder;
use crate::qmerror::norm_error;
use crate::quadrature::{golden_max, GaussLegendre};
use crate::spline::SplineScheme;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BMethod {
    ClosedForm,
    Quadrature,
}

impl fmt::Display for BMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BMethod::ClosedForm => "closed-form",
            BMethod::Quadrature => "quadrature",
        })
    }
}

/// `b^{m,β}_{k,p}`: the `L^p` norm on [0, 1] of the two-point `H_k`
/// remainder of the m-fold integrated fBm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BConstant {
    pub m: usize,
    pub beta: f64,
    pub k: usize,
    pub p: NormOrder,
    pub value: f64,
    pub method: BMethod,
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|v| v as f64).product()
}

/// Closed form when `β = 1` and `m = k`, otherwise quadrature.
pub fn b_constant(m: usize, beta: f64, k: usize, p: NormOrder) -> Result<BConstant> {
    if beta == 1.0 && m == k {
        b_constant_closed_form(k, p)
    } else {
        b_constant_quadrature(m, beta, k, p)
    }
}

/// `B(p(k+1)/2+1, p(k+1)/2+1)^{1/p} / (k+1)!`, or `2^{-(k+1)} / (k+1)!` for p = ∞.
pub fn b_constant_closed_form(k: usize, p: NormOrder) -> Result<BConstant> {
    if k % 2 == 0 || k > 5 {
        return Err(Error::UnsupportedConstant { m: k, beta: 1.0, k });
    }
    let kp1 = (k + 1) as f64;
    let value = match p {
        NormOrder::Finite(p) => {
            let a = p * kp1 / 2.0 + 1.0;
            (ln_beta(a, a) / p).exp() / factorial(k + 1)
        }
        NormOrder::Infinity => 2f64.powf(-kp1) / factorial(k + 1),
    };
    Ok(BConstant {
        m: k,
        beta: 1.0,
        k,
        p,
        value,
        method: BMethod::ClosedForm,
    })
}

/// Norm of the exact remainder variance of `integrated_fbm(m, β)` on the
/// single-interval design (0, 1). Supports m ∈ {0, 1}, k ∈ {1, 3} with
/// `(k-1)/2 <= m`, β ∈ (0, 1].
pub fn b_constant_quadrature(m: usize, beta: f64, k: usize, p: NormOrder) -> Result<BConstant> {
    let supported = m <= 1 && (k == 1 || k == 3) && (k - 1) / 2 <= m && beta > 0.0 && beta <= 1.0;
    if !supported {
        return Err(Error::UnsupportedConstant { m, beta, k });
    }
    let model = make_model(ModelKind::IntegratedFbm { m, hurst: beta })?;
    let design = Design::new(vec![0.0, 1.0])?;
    let scheme = SplineScheme::uniform(k)?;
    let res = norm_error(&model, &design, &scheme, p)?;
    Ok(BConstant {
        m,
        beta,
        k,
        p,
        value: res.value,
        method: BMethod::Quadrature,
    })
}

/// Local stationarity function `c(t)`: `||X^{(m+1)}(t)||^2` when the model
/// has that derivative, otherwise the increment ladder.
pub fn local_stationarity(model: &CovarianceModel, m: usize, t: f64, beta: f64) -> Result<f64> {
    if !(t > 0.0 && t <= 1.0) {
        return Err(Error::Domain(t));
    }
    if model.max_deriv_order() > m {
        return model.cov(t, t, m + 1, m + 1).map(Dd::to_f64);
    }
    stationarity_ladder(model, m, t, beta)
}

/// `lim ||X^{(m)}(t+s) - X^{(m)}(t)||^2 / |s|^{2β}` from `s = 2^{-j}`,
/// j = 1..=20, with one O(s) Richardson step (backward steps near t = 1).
pub fn stationarity_ladder(model: &CovarianceModel, m: usize, t: f64, beta: f64) -> Result<f64> {
    if !(t > 0.0 && t <= 1.0) {
        return Err(Error::Domain(t));
    }
    let mut ratios = Vec::with_capacity(20);
    for j in 1..=20 {
        let s = 2f64.powi(-j);
        let u = if t + s <= 1.0 { t + s } else { t - s };
        let step = (u - t).abs();
        let inc = model.cov(u, u, m, m)? - model.cov(u, t, m, m)?.mul_pow2(2.0) + model.cov(t, t, m, m)?;
        ratios.push(inc.to_f64() / step.powf(2.0 * beta));
    }
    let rich: Vec<f64> = ratios.windows(2).map(|w| 2.0 * w[1] - w[0]).collect();
    let last = rich[rich.len() - 1];
    let prev = rich[rich.len() - 2];
    let spread = (last - prev).abs() / last.abs().max(f64::MIN_POSITIVE);
    if !last.is_finite() || spread > 1e-3 {
        return Err(Error::Estimation(format!(
            "increment ladder at t = {t} did not settle: {prev} vs {last}"
        )));
    }
    Ok(last)
}

/// `h* ∝ c^{γ/2}` with `γ = 1 / (order + 1/p)`.
pub fn optimal_density(c_fn: &LocalFn, order: f64, p: NormOrder) -> Result<GeneratingDensity> {
    let gamma = 1.0 / (order + p.reciprocal());
    match c_fn {
        LocalFn::PowerLaw { index, .. } => {
            let a = index * gamma / 2.0;
            if a <= -1.0 {
                return Err(Error::NonIntegrable(format!("c^(γ/2) behaves like t^{a} near 0")));
            }
            GeneratingDensity::power(1.0 / (1.0 + a))
        }
        LocalFn::General(f) => {
            let f = f.clone();
            GeneratingDensity::tabulated(move |t| f(t).powf(gamma / 2.0))
        }
    }
}

const TAIL_RTOL: f64 = 1e-6;
const DIVERGENCE_LIMIT: f64 = 1e6;
const MAX_PANELS: usize = 1000;
const STABLE_PANELS: usize = 10;

/// `b · ||c^{1/2} h^{-order}||_p` on (0, 1] over dyadic panels
/// `[2^{-j-1}, 2^{-j}]`, integrated or maximized in `ln t`.
pub fn asymptotic_constant(
    b: &BConstant,
    c_fn: &LocalFn,
    density: &GeneratingDensity,
    p: NormOrder,
    order: f64,
) -> Result<f64> {
    let phi = |t: f64| c_fn.eval(t).sqrt() * density.h(t).powf(-order);
    let norm = match p {
        NormOrder::Finite(p) => dyadic_integral(|t| phi(t).powf(p))?.powf(1.0 / p),
        NormOrder::Infinity => dyadic_max(phi)?,
    };
    if !norm.is_finite() {
        return Err(Error::DivergentNorm("non-finite integrand".into()));
    }
    Ok(b.value * norm)
}

fn dyadic_integral<F: Fn(f64) -> f64>(f: F) -> Result<f64> {
    let gl = GaussLegendre::cached(16);
    let mut total = 0.0;
    let mut first = 0.0;
    let mut prev_piece: Option<f64> = None;
    let mut prev_estimate: Option<f64> = None;
    for j in 0..MAX_PANELS {
        let hi = 2f64.powi(-(j as i32));
        let lo = 0.5 * hi;
        let piece = gl.integrate(lo.ln(), hi.ln(), |x| {
            let t = x.exp();
            f(t) * t
        });
        if !piece.is_finite() {
            return Err(Error::DivergentNorm(format!("integrand not finite near t = {lo}")));
        }
        total += piece;
        if j == 0 {
            first = piece;
        }
        if total > DIVERGENCE_LIMIT * first {
            return Err(Error::DivergentNorm(format!(
                "partial integral exceeds {DIVERGENCE_LIMIT} times its value on [1/2, 1]"
            )));
        }
        // geometric tail from the ratio of successive panels
        let ratio = match prev_piece {
            Some(q) if q > 0.0 => piece / q,
            Some(_) => 0.0,
            None => f64::NAN,
        };
        prev_piece = Some(piece);
        if !(ratio < 1.0) {
            prev_estimate = None;
            continue;
        }
        let estimate = total + piece * ratio / (1.0 - ratio);
        if let Some(e) = prev_estimate {
            if j >= 4 && (estimate - e).abs() <= TAIL_RTOL * estimate {
                return Ok(estimate);
            }
        }
        prev_estimate = Some(estimate);
    }
    Err(Error::DivergentNorm(format!("no convergence within {MAX_PANELS} dyadic panels")))
}

fn dyadic_max<F: Fn(f64) -> f64>(f: F) -> Result<f64> {
    let mut best = f64::NEG_INFINITY;
    let mut first = 0.0;
    let mut stable = 0;
    for j in 0..MAX_PANELS {
        let hi = 2f64.powi(-(j as i32));
        let (a, b) = ((0.5 * hi).ln(), hi.ln());
        let g = |x: f64| f(x.exp());
        let mut scan_best = (0usize, f64::NEG_INFINITY);
        for i in 0..33 {
            let v = g(a + (b - a) * i as f64 / 32.0);
            if !v.is_finite() {
                return Err(Error::DivergentNorm(format!("integrand not finite near t = {}", hi)));
            }
            if v > scan_best.1 {
                scan_best = (i, v);
            }
        }
        let lo = a + (b - a) * scan_best.0.saturating_sub(1) as f64 / 32.0;
        let up = a + (b - a) * (scan_best.0 + 1).min(32) as f64 / 32.0;
        let (_, refined, _) = golden_max::<_, Error>(lo, up, 1e-10 * (b - a), |x| Ok(g(x)))?;
        let panel_max = refined.max(scan_best.1);
        if j == 0 {
            first = panel_max;
        }
        if panel_max > DIVERGENCE_LIMIT * first {
            return Err(Error::DivergentNorm(format!("sup exceeds {DIVERGENCE_LIMIT} times its value on [1/2, 1]")));
        }
        if panel_max > best * (1.0 + TAIL_RTOL) || best == f64::NEG_INFINITY {
            stable = 0;
        } else {
            stable += 1;
        }
        best = best.max(panel_max);
        if stable >= STABLE_PANELS {
            return Ok(best);
        }
    }
    Err(Error::DivergentNorm(format!("sup not stable within {MAX_PANELS} dyadic panels")))
}

/// Rows used by [`fit_rate`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FitRange {
    /// The largest `max(ceil(len/2), 4)` values of n.
    #[default]
    UpperHalf,
    Full,
}

/// `e_n ≈ C n^{-rho}` from ordinary least squares of `ln e` on `ln n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateFit {
    pub log_c: f64,
    pub rho: f64,
    pub r_squared: f64,
    pub n_min: usize,
    pub n_max: usize,
    pub points: usize,
}

impl RateFit {
    pub fn constant(&self) -> f64 {
        self.log_c.exp()
    }
}

pub fn fit_rate(table: &[(usize, f64)], range: FitRange) -> Result<RateFit> {
    if table.len() < 4 {
        return Err(Error::DegenerateFit(format!("{} rows, need at least 4", table.len())));
    }
    if let Some(&(n, e)) = table.iter().find(|(n, e)| *n == 0 || !(*e > 0.0 && e.is_finite())) {
        return Err(Error::DegenerateFit(format!("row n = {n} has error {e}")));
    }
    let mut rows = table.to_vec();
    rows.sort_by_key(|r| r.0);
    let used = match range {
        FitRange::Full => &rows[..],
        FitRange::UpperHalf => {
            let keep = rows.len().div_ceil(2).max(4);
            &rows[rows.len() - keep..]
        }
    };
    let pts: Vec<(f64, f64)> = used.iter().map(|&(n, e)| ((n as f64).ln(), e.ln())).collect();
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::DegenerateFit("all n identical".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = pts.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
    let r_squared = if syy > 0.0 { (1.0 - ss_res / syy).clamp(0.0, 1.0) } else { 1.0 };
    Ok(RateFit {
        log_c: intercept,
        rho: -slope,
        r_squared,
        n_min: used[0].0,
        n_max: used[used.len() - 1].0,
        points: used.len(),
    })
}

/// `ceil((C/ε)^{1/ρ})`.
pub fn knots_for_accuracy(fit: &RateFit, epsilon: f64) -> Result<usize> {
    if !(epsilon > 0.0) {
        return Err(Error::InvalidArgument(format!("epsilon = {epsilon} must be positive")));
    }
    if !(fit.rho > 0.0) {
        return Err(Error::InvalidArgument(format!("fitted rate {} is not positive", fit.rho)));
    }
    let x = ((fit.log_c - epsilon.ln()) / fit.rho).exp();
    let r = x.round();
    let n = if (x - r).abs() <= 1e-9 * r.max(1.0) { r } else { x.ceil() };
    Ok(n.max(1.0) as usize)
}
