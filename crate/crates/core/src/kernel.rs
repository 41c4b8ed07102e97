//! Second-order process models: mean, covariance and mixed partial
//! derivatives of the covariance, plus the smoothness data the design and
//! asymptotics modules need.
//!
//! All covariances are evaluated in double-double arithmetic. Error formulas
//! for cubic schemes on fine meshes cancel O(1) terms down to ~1e-22, so a
//! kernel rounded to `f64` would leave nothing but noise.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::dd::Dd;
use crate::error::{Error, Result};

/// Mean function `f^{(j)}(t)`.
pub type MeanFn = Arc<dyn Fn(f64, usize) -> f64 + Send + Sync>;

/// A covariance kernel with mixed partials `∂^{i+j} r(s,t) / ∂s^i ∂t^j`.
///
/// `cov` is only called with arguments already validated by
/// [`CovarianceModel::cov`]: both points in [0, 1], orders within
/// `max_deriv_order`, and `is_singular` false.
pub trait Kernel: Send + Sync {
    fn cov(&self, s: f64, t: f64, i: usize, j: usize) -> Dd;

    fn max_deriv_order(&self) -> usize;

    fn is_singular(&self, _s: f64, _t: f64, _i: usize, _j: usize) -> bool {
        false
    }
}

/// A positive function on (0, 1], either an explicit power law
/// `coef * t^index` or an arbitrary callable.
#[derive(Clone)]
pub enum LocalFn {
    PowerLaw { coef: f64, index: f64 },
    General(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl LocalFn {
    pub fn constant(c: f64) -> Self {
        LocalFn::PowerLaw { coef: c, index: 0.0 }
    }

    pub fn general<F: Fn(f64) -> f64 + Send + Sync + 'static>(f: F) -> Self {
        LocalFn::General(Arc::new(f))
    }

    pub fn eval(&self, t: f64) -> f64 {
        match self {
            LocalFn::PowerLaw { coef, index } => coef * t.powf(*index),
            LocalFn::General(f) => f(t),
        }
    }

    /// Leading power law `(coef, index)` as t → 0+. Exact for
    /// [`LocalFn::PowerLaw`]; fitted from the log-slope at t = 1e-10 and
    /// 1e-12 otherwise.
    pub fn power_law_near_zero(&self) -> (f64, f64) {
        match self {
            LocalFn::PowerLaw { coef, index } => (*coef, *index),
            LocalFn::General(f) => {
                let (t1, t2) = (1e-10, 1e-12);
                let (f1, f2) = (f(t1), f(t2));
                let index = (f2 / f1).ln() / (t2 / t1).ln();
                (f2 / t2.powf(index), index)
            }
        }
    }

    pub fn is_power_law(&self) -> bool {
        matches!(self, LocalFn::PowerLaw { .. })
    }
}

impl fmt::Debug for LocalFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LocalFn::PowerLaw { coef, index } => write!(f, "{coef}*t^{index}"),
            LocalFn::General(_) => write!(f, "<fn>"),
        }
    }
}

/// Global Hölder data `(l, alpha, M)`, local order `(m, beta)`, mean
/// smoothness `theta`, and the local stationarity / local Hölder functions.
#[derive(Debug, Clone)]
pub struct SmoothnessProfile {
    pub l: usize,
    pub alpha: f64,
    pub big_m: f64,
    pub m: usize,
    pub beta: f64,
    pub theta: f64,
    pub c_fn: Option<LocalFn>,
    pub v_fn: Option<LocalFn>,
}

impl SmoothnessProfile {
    pub fn global_order(&self) -> f64 {
        self.l as f64 + self.alpha
    }

    pub fn local_order(&self) -> f64 {
        self.m as f64 + self.beta
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidParameter(msg.to_string()));
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return bad("alpha must lie in (0, 1]");
        }
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return bad("beta must lie in (0, 1]");
        }
        if !(self.theta > 0.0 && self.theta <= 1.0) {
            return bad("theta must lie in (0, 1]");
        }
        if self.big_m <= 0.0 {
            return bad("M must be positive");
        }
        if self.global_order() > self.local_order() + 1e-12 {
            return bad("l + alpha must not exceed m + beta");
        }
        Ok(())
    }
}

/// Built-in process families.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ModelKind {
    Fbm { hurst: f64 },
    IntegratedFbm { m: usize, hurst: f64 },
    TimeChangedFbm { hurst: f64 },
    DistortedStationary { eta: f64 },
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelKind::Fbm { hurst } => write!(f, "fbm({hurst})"),
            ModelKind::IntegratedFbm { m, hurst } => write!(f, "integrated_fbm({m},{hurst})"),
            ModelKind::TimeChangedFbm { hurst } => write!(f, "time_changed_fbm({hurst})"),
            ModelKind::DistortedStationary { eta } => write!(f, "distorted_stationary({eta})"),
        }
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    /// Parses `fbm(0.5)`, `integrated_fbm(1,0.8)`, `time_changed_fbm(0.8)`,
    /// `distorted_stationary(0.9)`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (name, args) = match s.find('(') {
            Some(pos) if s.ends_with(')') => (&s[..pos], &s[pos + 1..s.len() - 1]),
            _ => return Err(Error::UnknownModel(s.to_string())),
        };
        let args: Vec<&str> = args.split(',').map(str::trim).collect();
        let num = |k: usize| -> Result<f64> {
            args.get(k)
                .and_then(|a| a.parse::<f64>().ok())
                .ok_or_else(|| Error::InvalidParameter(format!("bad arguments in `{s}`")))
        };
        let kind = match (name.trim(), args.len()) {
            ("fbm", 1) => ModelKind::Fbm { hurst: num(0)? },
            ("time_changed_fbm", 1) => ModelKind::TimeChangedFbm { hurst: num(0)? },
            ("distorted_stationary", 1) => ModelKind::DistortedStationary { eta: num(0)? },
            ("integrated_fbm", 2) => {
                let m = args[0]
                    .parse::<usize>()
                    .map_err(|_| Error::InvalidParameter(format!("bad order in `{s}`")))?;
                ModelKind::IntegratedFbm { m, hurst: num(1)? }
            }
            _ => return Err(Error::UnknownModel(s.to_string())),
        };
        Ok(kind)
    }
}

/// Mean, covariance and smoothness data of a second-order process on [0, 1].
#[derive(Clone)]
pub struct CovarianceModel {
    name: String,
    kernel: Arc<dyn Kernel>,
    mean: Option<MeanFn>,
    profile: SmoothnessProfile,
}

impl fmt::Debug for CovarianceModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CovarianceModel")
            .field("name", &self.name)
            .field("max_deriv_order", &self.kernel.max_deriv_order())
            .field("has_mean", &self.mean.is_some())
            .field("profile", &self.profile)
            .finish()
    }
}

impl CovarianceModel {
    pub fn custom(name: impl Into<String>, kernel: Arc<dyn Kernel>, profile: SmoothnessProfile) -> Self {
        CovarianceModel {
            name: name.into(),
            kernel,
            mean: None,
            profile,
        }
    }

    pub fn with_mean(mut self, mean: MeanFn) -> Self {
        self.mean = Some(mean);
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn profile(&self) -> &SmoothnessProfile {
        &self.profile
    }

    pub fn max_deriv_order(&self) -> usize {
        self.kernel.max_deriv_order()
    }

    pub fn has_mean(&self) -> bool {
        self.mean.is_some()
    }

    /// `f^{(j)}(t)`; identically zero when no mean was attached.
    pub fn mean(&self, t: f64, j: usize) -> f64 {
        self.mean.as_ref().map_or(0.0, |f| f(t, j))
    }

    /// Checked evaluation of the mixed partial in double-double.
    pub fn cov(&self, s: f64, t: f64, i: usize, j: usize) -> Result<Dd> {
        for x in [s, t] {
            if !(0.0..=1.0).contains(&x) {
                return Err(Error::Domain(x));
            }
        }
        let max = self.kernel.max_deriv_order();
        if i > max || j > max {
            return Err(Error::OrderExceeded { i, j, max });
        }
        if self.kernel.is_singular(s, t, i, j) {
            return Err(Error::Singularity { s, t, i, j });
        }
        Ok(self.kernel.cov(s, t, i, j))
    }
}

/// `∂^{i+j} r(s,t) / ∂s^i ∂t^j` rounded to `f64`.
pub fn eval_cov(model: &CovarianceModel, s: f64, t: f64, i: usize, j: usize) -> Result<f64> {
    model.cov(s, t, i, j).map(Dd::to_f64)
}

pub fn make_model(kind: ModelKind) -> Result<CovarianceModel> {
    let hurst_ok = |b: f64| {
        if b > 0.0 && b <= 1.0 {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("Hurst parameter {b} not in (0, 1]")))
        }
    };
    let model = match kind {
        ModelKind::Fbm { hurst } => {
            hurst_ok(hurst)?;
            CovarianceModel::custom(
                kind.to_string(),
                Arc::new(FbmKernel { h: 2.0 * hurst }),
                SmoothnessProfile {
                    l: 0,
                    alpha: hurst,
                    big_m: 1.0,
                    m: 0,
                    beta: hurst,
                    theta: 1.0,
                    c_fn: Some(LocalFn::constant(1.0)),
                    v_fn: Some(LocalFn::constant(1.0)),
                },
            )
        }
        ModelKind::IntegratedFbm { m, hurst } => {
            hurst_ok(hurst)?;
            if m > 6 {
                return Err(Error::InvalidParameter(format!("integration order {m} > 6")));
            }
            CovarianceModel::custom(
                kind.to_string(),
                Arc::new(IntegratedFbmKernel::new(m, hurst)),
                SmoothnessProfile {
                    l: m,
                    alpha: hurst,
                    big_m: 1.0,
                    m,
                    beta: hurst,
                    theta: 1.0,
                    c_fn: Some(LocalFn::constant(1.0)),
                    v_fn: Some(LocalFn::constant(1.0)),
                },
            )
        }
        ModelKind::TimeChangedFbm { hurst } => {
            hurst_ok(hurst)?;
            let c = LocalFn::PowerLaw {
                coef: 4f64.powf(-hurst),
                index: -hurst,
            };
            CovarianceModel::custom(
                kind.to_string(),
                Arc::new(TimeChangedFbmKernel { beta: hurst }),
                SmoothnessProfile {
                    l: 0,
                    alpha: hurst / 2.0,
                    big_m: 1.0,
                    m: 0,
                    beta: hurst,
                    theta: 1.0,
                    c_fn: Some(c.clone()),
                    v_fn: Some(c),
                },
            )
        }
        ModelKind::DistortedStationary { eta } => {
            if !(eta > 0.0 && eta < 1.0) {
                return Err(Error::InvalidParameter(format!("eta = {eta} not in (0, 1)")));
            }
            let kernel = Arc::new(DistortedStationaryKernel { eta });
            let k2 = kernel.clone();
            // c_3(t) = ||X''''(t)||^2
            let c3 = LocalFn::general(move |t| k2.cov(t, t, 4, 4).to_f64());
            CovarianceModel::custom(
                kind.to_string(),
                kernel,
                SmoothnessProfile {
                    l: 0,
                    alpha: eta,
                    big_m: 1.0,
                    m: 3,
                    beta: 1.0,
                    theta: 1.0,
                    c_fn: Some(c3),
                    v_fn: None,
                },
            )
        }
    };
    model.profile.validate()?;
    Ok(model)
}

/// Fractional Brownian motion, `r = (s^h + t^h - |s-t|^h) / 2` with h = 2β.
struct FbmKernel {
    h: f64,
}

impl Kernel for FbmKernel {
    fn cov(&self, s: f64, t: f64, _i: usize, _j: usize) -> Dd {
        let d = Dd::diff(s, t).abs();
        (Dd::from(s).powf(self.h) + Dd::from(t).powf(self.h) - d.powf(self.h)).mul_pow2(0.5)
    }

    fn max_deriv_order(&self) -> usize {
        0
    }
}

/// `X(t) = B(sqrt t)`: `r = (s^β + t^β - |√s - √t|^{2β}) / 2`.
struct TimeChangedFbmKernel {
    beta: f64,
}

impl Kernel for TimeChangedFbmKernel {
    fn cov(&self, s: f64, t: f64, _i: usize, _j: usize) -> Dd {
        let a = Dd::from(s).powf(self.beta) + Dd::from(t).powf(self.beta);
        if s == t {
            return a.mul_pow2(0.5);
        }
        // √s - √t = (s - t) / (√s + √t) avoids the cancellation
        let gap = Dd::diff(s, t).abs() / (Dd::from(s).sqrt() + Dd::from(t).sqrt());
        (a - gap.powf(2.0 * self.beta)).mul_pow2(0.5)
    }

    fn max_deriv_order(&self) -> usize {
        0
    }
}

/// m-fold integrated fBm. With `r_{a,b} = I_s^a I_t^b r_B`, the mixed
/// partial of order (i, j) is `r_{m-i, m-j}`, computed in closed form from
/// the iterated antiderivatives `A_k(x) = sgn(x)^k |x|^{h+k} / ((h+1)...(h+k))`
/// of `|x|^h` with the Taylor corrections that enforce zero initial values.
struct IntegratedFbmKernel {
    m: usize,
    h: f64,
    /// (h+1)(h+2)...(h+k) for k = 0..=2m
    rising: Vec<Dd>,
    factorial: Vec<f64>,
}

impl IntegratedFbmKernel {
    fn new(m: usize, hurst: f64) -> Self {
        let h = 2.0 * hurst;
        let mut rising = vec![Dd::ONE];
        for k in 1..=2 * m {
            let prev = rising[k - 1];
            rising.push(prev * Dd::from(h + k as f64));
        }
        let mut factorial = vec![1.0];
        for k in 1..=2 * m {
            factorial.push(factorial[k - 1] * k as f64);
        }
        IntegratedFbmKernel {
            m,
            h,
            rising,
            factorial,
        }
    }

    /// A_k(x) given |x|^h precomputed.
    fn antideriv(&self, k: usize, x: Dd, abs_pow_h: Dd) -> Dd {
        if x.is_zero() {
            return Dd::ZERO;
        }
        let ax = x.abs();
        let mut v = abs_pow_h * ax.powi(k as u32) / self.rising[k];
        if x.is_sign_negative() && k % 2 == 1 {
            v = -v;
        }
        v
    }

    fn r_ab(&self, s: f64, t: f64, a: usize, b: usize) -> Dd {
        let sd = Dd::from(s);
        let td = Dd::from(t);
        let s_h = sd.powf(self.h);
        let t_h = td.powf(self.h);
        let x = Dd::diff(s, t);
        let x_h = x.abs().powf(self.h);

        let term1 = s_h * sd.powi(a as u32) / self.rising[a] * td.powi(b as u32) / self.factorial[b];
        let term2 = t_h * td.powi(b as u32) / self.rising[b] * sd.powi(a as u32) / self.factorial[a];

        let mut k = self.antideriv(a + b, x, x_h);
        for j in 0..b {
            let mut c = self.antideriv(a + b - j, sd, s_h) * td.powi(j as u32) / self.factorial[j];
            if j % 2 == 1 {
                c = -c;
            }
            k -= c;
        }
        let neg_t = -td;
        for i in 0..a {
            k -= self.antideriv(a + b - i, neg_t, t_h) * sd.powi(i as u32) / self.factorial[i];
        }
        if b % 2 == 1 {
            k = -k;
        }
        (term1 + term2 - k).mul_pow2(0.5)
    }
}

impl Kernel for IntegratedFbmKernel {
    fn cov(&self, s: f64, t: f64, i: usize, j: usize) -> Dd {
        self.r_ab(s, t, self.m - i, self.m - j)
    }

    fn max_deriv_order(&self) -> usize {
        self.m
    }
}

/// `X(t) = t^η Y(t)` with `Y` stationary, `r_Y(s,t) = exp(-(s-t)^2)`.
struct DistortedStationaryKernel {
    eta: f64,
}

impl DistortedStationaryKernel {
    /// d-th derivative of `s^η` given `s^η`.
    fn power_deriv(&self, s: Dd, s_eta: Dd, d: usize) -> Dd {
        if d == 0 {
            return s_eta;
        }
        let mut falling = 1.0;
        for q in 0..d {
            falling *= self.eta - q as f64;
        }
        s_eta / s.powi(d as u32) * falling
    }
}

const BINOM: [[f64; 5]; 5] = [
    [1.0, 0.0, 0.0, 0.0, 0.0],
    [1.0, 1.0, 0.0, 0.0, 0.0],
    [1.0, 2.0, 1.0, 0.0, 0.0],
    [1.0, 3.0, 3.0, 1.0, 0.0],
    [1.0, 4.0, 6.0, 4.0, 1.0],
];

impl Kernel for DistortedStationaryKernel {
    fn cov(&self, s: f64, t: f64, i: usize, j: usize) -> Dd {
        let sd = Dd::from(s);
        let td = Dd::from(t);
        let s_eta = sd.powf(self.eta);
        let t_eta = td.powf(self.eta);
        let x = Dd::diff(s, t);
        let gauss = (-x.sqr()).exp();

        // physicists' Hermite polynomials H_0..H_{i+j} at x
        let mut herm = [Dd::ZERO; 9];
        herm[0] = Dd::ONE;
        if i + j >= 1 {
            herm[1] = x.mul_pow2(2.0);
        }
        for n in 1..(i + j) {
            herm[n + 1] = x.mul_pow2(2.0) * herm[n] - herm[n - 1] * (2.0 * n as f64);
        }

        let mut acc = Dd::ZERO;
        for p in 0..=i {
            let ds = self.power_deriv(sd, s_eta, i - p);
            for q in 0..=j {
                let dt = self.power_deriv(td, t_eta, j - q);
                let mut term = ds * dt * herm[p + q] * (BINOM[i][p] * BINOM[j][q]);
                if p % 2 == 1 {
                    term = -term;
                }
                acc += term;
            }
        }
        acc * gauss
    }

    fn max_deriv_order(&self) -> usize {
        4
    }

    fn is_singular(&self, s: f64, t: f64, i: usize, j: usize) -> bool {
        (s == 0.0 && i > 0) || (t == 0.0 && j > 0)
    }
}
