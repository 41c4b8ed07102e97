//! Sampling designs: generating densities and their quantile knots,
//! admissibility checks for power densities, and greedy designs attaining
//! intermediate rates.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::kernel::{LocalFn, SmoothnessProfile};
use crate::norm::NormOrder;
use crate::quadrature::GaussLegendre;

/// Strictly increasing knots `0 = t_0 < ... < t_n = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    knots: Vec<f64>,
}

impl Design {
    pub fn new(knots: Vec<f64>) -> Result<Self> {
        if knots.len() < 2 {
            return Err(Error::InvalidDesign("need at least two knots".into()));
        }
        if knots[0] != 0.0 || *knots.last().unwrap() != 1.0 {
            return Err(Error::InvalidDesign("knots must start at 0 and end at 1".into()));
        }
        if let Some(w) = knots.windows(2).position(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidDesign(format!(
                "knots not strictly increasing at index {}: {} >= {}",
                w + 1,
                knots[w],
                knots[w + 1]
            )));
        }
        Ok(Design { knots })
    }

    pub fn uniform(n: usize) -> Result<Self> {
        generate_knots(&GeneratingDensity::power(1.0)?, n)
    }

    /// Number of intervals.
    pub fn n(&self) -> usize {
        self.knots.len() - 1
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    /// Endpoints of interval `j` (1-based).
    pub fn interval(&self, j: usize) -> (f64, f64) {
        (self.knots[j - 1], self.knots[j])
    }

    /// Interval containing `t`: `(t_{j-1}, t_j]`, with `t = 0` in interval 1.
    pub fn locate(&self, t: f64) -> usize {
        self.knots.partition_point(|&x| x < t).clamp(1, self.n())
    }

    pub fn lengths(&self) -> impl Iterator<Item = f64> + '_ {
        self.knots.windows(2).map(|w| w[1] - w[0])
    }

    pub fn max_gap(&self) -> f64 {
        self.lengths().fold(0.0, f64::max)
    }
}

/// `coefficient * s^rho`, an upper bound near 0 for a regularly varying
/// function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegularVaryingBound {
    pub rho: f64,
    pub coefficient: f64,
}

impl RegularVaryingBound {
    pub fn eval(&self, s: f64) -> f64 {
        self.coefficient * s.powf(self.rho)
    }
}

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum DensityKind {
    /// `h(t) = t^{1/λ - 1} / λ`, knots `(i/n)^λ`.
    Power { lambda: f64 },
    /// Normalized from an unnormalized positive function through a
    /// log-spaced cumulative table.
    Tabulated(Arc<TabulatedDensity>),
    /// User-supplied `h`, `H` and `G`.
    ClosedForm { h: ScalarFn, cdf: ScalarFn, quantile: ScalarFn },
}

/// Density `h` on (0, 1] with cumulative `H` and quantile `G = H^{-1}`.
#[derive(Clone)]
pub struct GeneratingDensity {
    kind: DensityKind,
}

impl fmt::Debug for GeneratingDensity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            DensityKind::Power { lambda } => write!(f, "power({lambda})"),
            DensityKind::Tabulated(t) => write!(f, "tabulated(tail index {})", t.tail_index),
            DensityKind::ClosedForm { .. } => write!(f, "closed-form"),
        }
    }
}

impl GeneratingDensity {
    pub fn power(lambda: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::Density(format!("power index {lambda} must be positive")));
        }
        Ok(GeneratingDensity {
            kind: DensityKind::Power { lambda },
        })
    }

    /// Normalizes `h_unnormalized` over (0, 1].
    pub fn tabulated<F: Fn(f64) -> f64 + Send + Sync + 'static>(h_unnormalized: F) -> Result<Self> {
        let table = TabulatedDensity::new(Arc::new(h_unnormalized))?;
        Ok(GeneratingDensity {
            kind: DensityKind::Tabulated(Arc::new(table)),
        })
    }

    pub fn closed_form<H, C, G>(h: H, cdf: C, quantile: G) -> Self
    where
        H: Fn(f64) -> f64 + Send + Sync + 'static,
        C: Fn(f64) -> f64 + Send + Sync + 'static,
        G: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        GeneratingDensity {
            kind: DensityKind::ClosedForm {
                h: Arc::new(h),
                cdf: Arc::new(cdf),
                quantile: Arc::new(quantile),
            },
        }
    }

    pub fn kind(&self) -> &DensityKind {
        &self.kind
    }

    pub fn power_index(&self) -> Option<f64> {
        match self.kind {
            DensityKind::Power { lambda } => Some(lambda),
            _ => None,
        }
    }

    pub fn label(&self) -> String {
        match &self.kind {
            DensityKind::Power { lambda } => format!("power({lambda})"),
            DensityKind::Tabulated(_) => "tabulated".into(),
            DensityKind::ClosedForm { .. } => "closed-form".into(),
        }
    }

    pub fn h(&self, t: f64) -> f64 {
        match &self.kind {
            DensityKind::Power { lambda } => t.powf(1.0 / lambda - 1.0) / lambda,
            DensityKind::Tabulated(tab) => tab.h(t),
            DensityKind::ClosedForm { h, .. } => h(t),
        }
    }

    /// Cumulative `H(t)`.
    pub fn cdf(&self, t: f64) -> f64 {
        let t = t.clamp(0.0, 1.0);
        match &self.kind {
            DensityKind::Power { lambda } => t.powf(1.0 / lambda),
            DensityKind::Tabulated(tab) => tab.cdf(t),
            DensityKind::ClosedForm { cdf, .. } => cdf(t),
        }
    }

    /// Quantile `G(u) = H^{-1}(u)`.
    pub fn quantile(&self, u: f64) -> f64 {
        let u = u.clamp(0.0, 1.0);
        match &self.kind {
            DensityKind::Power { lambda } => u.powf(*lambda),
            DensityKind::Tabulated(tab) => tab.quantile(u),
            DensityKind::ClosedForm { quantile, .. } => quantile(u),
        }
    }

    /// Quantile density `g(s) = G'(s) = 1 / h(G(s))`.
    pub fn quantile_density(&self, s: f64) -> f64 {
        match &self.kind {
            DensityKind::Power { lambda } => lambda * s.powf(lambda - 1.0),
            _ => {
                let t = self.quantile(s);
                if t == 0.0 {
                    0.0
                } else {
                    1.0 / self.h(t)
                }
            }
        }
    }

    /// Power index λ of the density near 0 (`h(t) ~ c t^{1/λ - 1}`).
    pub fn near_zero_power_index(&self) -> f64 {
        match &self.kind {
            DensityKind::Power { lambda } => *lambda,
            DensityKind::Tabulated(tab) => 1.0 / (1.0 + tab.tail_index),
            DensityKind::ClosedForm { h, .. } => {
                let (t1, t2) = (1e-10, 1e-12);
                let a = (h(t2) / h(t1)).ln() / (t2 / t1).ln();
                1.0 / (1.0 + a)
            }
        }
    }

    /// Bound `r(s) = λ s^{λ-1}` on the quantile density; power densities only.
    pub fn quantile_density_bound(&self) -> Option<RegularVaryingBound> {
        self.power_index().map(|lambda| RegularVaryingBound {
            rho: lambda - 1.0,
            coefficient: lambda,
        })
    }
}

/// Cumulative table of an unnormalized density on a log-spaced grid from
/// 1e-24 to 1; below the grid the density is continued by its local power law.
pub struct TabulatedDensity {
    h_raw: ScalarFn,
    grid: Vec<f64>,
    /// unnormalized mass below each grid point
    cum: Vec<f64>,
    total: f64,
    tail_index: f64,
    tail_h0: f64,
}

const TABLE_POINTS: usize = 2048;
const TABLE_TMIN: f64 = 1e-24;

impl TabulatedDensity {
    fn new(h_raw: ScalarFn) -> Result<Self> {
        let log_min = TABLE_TMIN.ln();
        let mut grid: Vec<f64> = (0..TABLE_POINTS)
            .map(|k| (log_min * (1.0 - k as f64 / (TABLE_POINTS - 1) as f64)).exp())
            .collect();
        grid[TABLE_POINTS - 1] = 1.0;
        for &t in &grid {
            let v = h_raw(t);
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Density(format!("density is not positive at t = {t}: {v}")));
            }
        }
        let h0 = h_raw(grid[0]);
        let tail_index = (h_raw(grid[1]) / h0).ln() / (grid[1] / grid[0]).ln();
        if tail_index <= -1.0 {
            return Err(Error::NonIntegrable(format!("density behaves like t^{tail_index} near 0")));
        }
        let mut cum = Vec::with_capacity(TABLE_POINTS);
        let mut acc = h0 * grid[0] / (1.0 + tail_index);
        let mut comp = 0.0;
        cum.push(acc);
        for w in grid.windows(2) {
            let piece = log_segment_integral(&*h_raw, w[0], w[1]);
            // Neumaier summation
            let t = acc + piece;
            if acc.abs() >= piece.abs() {
                comp += (acc - t) + piece;
            } else {
                comp += (piece - t) + acc;
            }
            acc = t;
            cum.push(acc + comp);
        }
        let total = *cum.last().unwrap();
        Ok(TabulatedDensity {
            h_raw,
            grid,
            cum,
            total,
            tail_index,
            tail_h0: h0,
        })
    }

    /// Normalizing constant `∫_0^1 h_raw`.
    pub fn normalizer(&self) -> f64 {
        self.total
    }

    pub fn tail_index(&self) -> f64 {
        self.tail_index
    }

    fn h(&self, t: f64) -> f64 {
        (self.h_raw)(t) / self.total
    }

    fn raw_cdf(&self, t: f64) -> f64 {
        let t0 = self.grid[0];
        if t <= t0 {
            return self.cum[0] * (t / t0).powf(1.0 + self.tail_index);
        }
        let k = self.grid.partition_point(|&g| g <= t) - 1;
        if k >= TABLE_POINTS - 1 {
            return self.total;
        }
        self.cum[k] + log_segment_integral(&*self.h_raw, self.grid[k], t)
    }

    fn cdf(&self, t: f64) -> f64 {
        (self.raw_cdf(t) / self.total).min(1.0)
    }

    fn quantile(&self, u: f64) -> f64 {
        if u <= 0.0 {
            return 0.0;
        }
        if u >= 1.0 {
            return 1.0;
        }
        let target = u * self.total;
        if target <= self.cum[0] {
            let t0 = self.grid[0];
            return t0 * (target / self.cum[0]).powf(1.0 / (1.0 + self.tail_index));
        }
        let k = self.cum.partition_point(|&c| c <= target) - 1;
        let (mut lo, mut hi) = (self.grid[k], self.grid[(k + 1).min(TABLE_POINTS - 1)]);
        // log-linear initial guess inside the bracket
        let frac = (target - self.cum[k]) / (self.cum[k + 1] - self.cum[k]);
        let mut t = lo * (hi / lo).powf(frac);
        for _ in 0..100 {
            let f = self.raw_cdf(t) - target;
            if f.abs() <= 1e-15 * self.total {
                break;
            }
            if f > 0.0 {
                hi = t;
            } else {
                lo = t;
            }
            let newton = t - f / (self.h_raw)(t);
            t = if newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
            if hi - lo <= 4.0 * f64::EPSILON * hi {
                break;
            }
        }
        t
    }

    #[allow(dead_code)]
    fn tail_h0(&self) -> f64 {
        self.tail_h0
    }
}

/// `∫_a^b f(t) dt` by 16-point Gauss–Legendre in `x = ln t`.
fn log_segment_integral(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    let gl = GaussLegendre::cached(16);
    gl.integrate(a.ln(), b.ln(), |x| {
        let t = x.exp();
        f(t) * t
    })
}

/// Quantile knots `t_i = G(i/n)`.
pub fn generate_knots(density: &GeneratingDensity, n: usize) -> Result<Design> {
    if n == 0 {
        return Err(Error::InvalidArgument("n must be >= 1".into()));
    }
    let nf = n as f64;
    let mut knots = Vec::with_capacity(n + 1);
    knots.push(0.0);
    for i in 1..n {
        let u = i as f64 / nf;
        let t = match density.kind() {
            DensityKind::Power { lambda } => u.powf(*lambda),
            _ => density.quantile(u),
        };
        knots.push(t);
    }
    knots.push(1.0);
    Design::new(knots).map_err(|e| Error::Density(format!("quantile knots are not admissible: {e}")))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConditionVariant {
    /// Local order `m + β` with the local Hölder function `V`.
    C,
    /// Spline-limited order `k + 1` with `c_k = ||X^{(k+1)}||^2`.
    CPrime,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionVerdict {
    pub satisfied: bool,
    /// Minimal admissible power index (strict).
    pub threshold: f64,
    /// From the growth condition on the quantile density.
    pub rate_threshold: f64,
    /// From the integrability (or vanishing) of `V^{1/2} r(H)^{order}`.
    pub integrability_threshold: f64,
    pub quantile_bound: RegularVaryingBound,
    pub local_bound: RegularVaryingBound,
    pub detail: String,
}

/// Relative slack under which `λ` counts as sitting on the threshold.
const THRESHOLD_SLACK: f64 = 1e-12;

/// Admissibility of a power density for the rate `n^{-order}`.
pub fn check_condition(
    profile: &SmoothnessProfile,
    density: &GeneratingDensity,
    p: NormOrder,
    variant: ConditionVariant,
    k: usize,
) -> Result<ConditionVerdict> {
    let lambda = density.power_index().ok_or_else(|| {
        Error::Undecidable(format!("density {} is not a power density", density.label()))
    })?;
    let mut notes = Vec::new();
    let (order, local) = match variant {
        ConditionVariant::C => {
            let v = match (&profile.v_fn, &profile.c_fn) {
                (Some(v), _) => v,
                (None, Some(c)) => {
                    notes.push("V taken as c".to_string());
                    c
                }
                (None, None) => return Err(Error::IncompleteProfile("neither V nor c is available".into())),
            };
            (profile.local_order(), v)
        }
        ConditionVariant::CPrime => {
            let c = profile
                .c_fn
                .as_ref()
                .ok_or_else(|| Error::IncompleteProfile("c_k is not available".into()))?;
            (k as f64 + 1.0, c)
        }
    };
    let (coef, index) = local.power_law_near_zero();
    if !local.is_power_law() {
        notes.push(format!("local function fitted as {coef:.6}*t^{index:.6}"));
    }
    let theta = -index / 2.0;
    let ip = p.reciprocal();
    let global = profile.global_order() + ip;
    let rate_threshold = order / global;
    // order (1 - 1/λ) - θ must exceed -1/p (p finite) or 0 (p = ∞)
    let room = 1.0 - (theta - ip) / order;
    let integrability_threshold = if room > 0.0 { 1.0 / room } else { f64::INFINITY };
    let threshold = rate_threshold.max(integrability_threshold);
    let satisfied = lambda > threshold * (1.0 + THRESHOLD_SLACK);
    notes.insert(
        0,
        format!(
            "lambda = {lambda}, rate threshold = {rate_threshold}, integrability threshold = {integrability_threshold}"
        ),
    );
    Ok(ConditionVerdict {
        satisfied,
        threshold,
        rate_threshold,
        integrability_threshold,
        quantile_bound: density.quantile_density_bound().expect("power density"),
        local_bound: RegularVaryingBound {
            rho: -theta * lambda,
            coefficient: coef.sqrt(),
        },
        detail: notes.join("; "),
    })
}

/// Sufficient condition for the optimal density `h* ∝ c^{γ/2}` to be
/// admissible when `c(t) ~ C t^{-2θ}`:
/// `(1 - (l+α+1/p)/(m+β)) / γ < θ < 1/γ`, `γ = 1/(m+β+1/p)`.
pub fn optimal_density_admissible(profile: &SmoothnessProfile, p: NormOrder) -> Result<bool> {
    let c = profile
        .c_fn
        .as_ref()
        .ok_or_else(|| Error::IncompleteProfile("c is not available".into()))?;
    let (_, index) = c.power_law_near_zero();
    let theta = -index / 2.0;
    let ip = p.reciprocal();
    let inv_gamma = profile.local_order() + ip;
    let lower = (1.0 - (profile.global_order() + ip) / profile.local_order()) * inv_gamma;
    Ok(lower < theta && theta < inv_gamma)
}

struct StepBounds {
    first: f64,
    exponent: f64,
    scale: f64,
    v: LocalFn,
}

impl StepBounds {
    fn new(profile: &SmoothnessProfile, kappa: f64, n: usize, p: NormOrder) -> Result<Self> {
        let v = profile
            .v_fn
            .clone()
            .or_else(|| profile.c_fn.clone())
            .ok_or_else(|| Error::IncompleteProfile("V is not available".into()))?;
        let ip = p.reciprocal();
        let a = profile.global_order() + ip;
        let b = profile.local_order() + ip;
        let nf = n as f64;
        Ok(StepBounds {
            first: profile.big_m.powf(-1.0 / a) * nf.powf(-kappa / a),
            exponent: -1.0 / (2.0 * b),
            scale: nf.powf(-kappa / b),
            v,
        })
    }

    /// Bound on `h_j` given `t_{j-1}`.
    fn step(&self, t_prev: f64) -> f64 {
        self.v.eval(t_prev).powf(self.exponent) * self.scale
    }

    /// Greedy left-to-right knots, or `None` when 1 is not reached in `n` steps.
    fn greedy(&self, n: usize) -> Option<Vec<f64>> {
        let mut knots = vec![0.0, self.first.min(1.0)];
        while *knots.last().unwrap() < 1.0 {
            if knots.len() > n {
                return None;
            }
            let t = *knots.last().unwrap();
            knots.push((t + self.step(t)).min(1.0));
        }
        Some(knots)
    }
}

/// Upper bounds on every interval length of `design` for the
/// intermediate-rate construction: `(h_j, bound_j)` for j = 1..n.
pub fn intermediate_bounds(
    profile: &SmoothnessProfile,
    kappa: f64,
    p: NormOrder,
    design: &Design,
) -> Result<Vec<(f64, f64)>> {
    let b = StepBounds::new(profile, kappa, design.n(), p)?;
    Ok(design
        .knots()
        .windows(2)
        .enumerate()
        .map(|(i, w)| {
            let bound = if i == 0 { b.first } else { b.step(w[0]) };
            (w[1] - w[0], bound)
        })
        .collect())
}

#[derive(PartialEq)]
struct Gap {
    len: f64,
    start: f64,
    end: f64,
}

impl Eq for Gap {}

impl PartialOrd for Gap {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Gap {
    // longest first; ties go to the leftmost gap
    fn cmp(&self, other: &Self) -> Ordering {
        self.len
            .total_cmp(&other.len)
            .then_with(|| other.start.total_cmp(&self.start))
    }
}

/// Greedy design with `h_1 <= M^{-1/(l+α+1/p)} n^{-κ/(l+α+1/p)}` and
/// `h_j <= V(t_{j-1})^{-1/(2(m+β+1/p))} n^{-κ/(m+β+1/p)}`. Surplus knots
/// bisect the longest gaps after the first interval.
pub fn intermediate_design(profile: &SmoothnessProfile, kappa: f64, n: usize, p: NormOrder) -> Result<Design> {
    if n == 0 {
        return Err(Error::InvalidArgument("n must be >= 1".into()));
    }
    let lo = profile.global_order();
    let hi = profile.local_order();
    if kappa < lo - 1e-12 || kappa > hi + 1e-12 {
        return Err(Error::InvalidArgument(format!("kappa = {kappa} outside [{lo}, {hi}]")));
    }
    let bounds = StepBounds::new(profile, kappa, n, p)?;
    let mut prev = f64::INFINITY;
    for k in 0..=200 {
        let t = 10f64.powf(-6.0 * (1.0 - k as f64 / 200.0));
        let v = bounds.v.eval(t);
        if v > prev * (1.0 + 1e-12) {
            return Err(Error::InvalidArgument("V must be nonincreasing".into()));
        }
        prev = v;
    }

    let Some(knots) = bounds.greedy(n) else {
        return Err(Error::Infeasible {
            n,
            min_n: minimal_feasible_n(profile, kappa, n, p)?,
        });
    };

    let mut heap: BinaryHeap<Gap> = knots
        .windows(2)
        .skip(1)
        .map(|w| Gap {
            len: w[1] - w[0],
            start: w[0],
            end: w[1],
        })
        .collect();
    let mut first = (knots[0], knots[1]);
    let mut extra = Vec::new();
    for _ in 0..(n - (knots.len() - 1)) {
        match heap.pop() {
            Some(g) => {
                let mid = 0.5 * (g.start + g.end);
                extra.push(mid);
                heap.push(Gap { len: mid - g.start, start: g.start, end: mid });
                heap.push(Gap { len: g.end - mid, start: mid, end: g.end });
            }
            None => {
                // only the first interval exists
                let mid = 0.5 * (first.0 + first.1);
                extra.push(mid);
                heap.push(Gap { len: first.1 - mid, start: mid, end: first.1 });
                first = (first.0, mid);
            }
        }
    }
    let mut all = knots;
    all.extend(extra);
    all.sort_by(f64::total_cmp);
    let design = Design::new(all)?;
    let violated = intermediate_bounds(profile, kappa, p, &design)?
        .into_iter()
        .position(|(h, b)| h > b * (1.0 + 1e-12));
    if let Some(j) = violated {
        return Err(Error::InvalidDesign(format!("refined design violates the bound on interval {}", j + 1)));
    }
    Ok(design)
}

/// Smallest `n' > n` whose greedy construction reaches 1, searched up to 2^22.
fn minimal_feasible_n(profile: &SmoothnessProfile, kappa: f64, n: usize, p: NormOrder) -> Result<Option<usize>> {
    let feasible = |m: usize| -> Result<bool> { Ok(StepBounds::new(profile, kappa, m, p)?.greedy(m).is_some()) };
    let cap = 1usize << 22;
    let mut lo = n;
    let mut hi = n.max(1) * 2;
    while !feasible(hi)? {
        lo = hi;
        hi *= 2;
        if hi > cap {
            return Ok(None);
        }
    }
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if feasible(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(Some(hi))
}
