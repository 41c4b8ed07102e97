//! Flat `key=value` experiment configuration.

use std::path::{Path, PathBuf};

use super::CliError;
use crate::asymptotics::{optimal_density, FitRange};
use crate::design::{ConditionVariant, GeneratingDensity};
use crate::kernel::{make_model, CovarianceModel, ModelKind};
use crate::norm::NormOrder;
use crate::qmerror::Precision;
use crate::spline::SplineScheme;

pub const KEYS: &[&str] = &[
    "model", "q", "k", "density", "lambda", "p", "n", "n_list", "order", "output", "precision", "fit", "kappa",
    "epsilon", "variant", "t", "m", "beta", "threads", "input", "out_dir",
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DensitySpec {
    Power(f64),
    Optimal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub model: Option<ModelKind>,
    pub q: Option<usize>,
    pub k: usize,
    pub density: DensitySpec,
    pub p: NormOrder,
    pub n: Option<usize>,
    pub n_list: Option<Vec<usize>>,
    pub order: Option<f64>,
    pub output: Option<PathBuf>,
    pub precision: Precision,
    pub fit: FitRange,
    pub kappa: Option<f64>,
    pub epsilon: Option<f64>,
    pub variant: ConditionVariant,
    pub t: Option<f64>,
    pub m: Option<usize>,
    pub beta: Option<f64>,
    pub threads: Option<usize>,
    pub input: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            model: None,
            q: None,
            k: 1,
            density: DensitySpec::Power(1.0),
            p: NormOrder::Infinity,
            n: None,
            n_list: None,
            order: None,
            output: None,
            precision: Precision::Extended,
            fit: FitRange::UpperHalf,
            kappa: None,
            epsilon: None,
            variant: ConditionVariant::C,
            t: None,
            m: None,
            beta: None,
            threads: None,
            input: None,
            out_dir: None,
        }
    }
}

fn bad(key: &str, value: &str, why: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{key}={value}: {why}"))
}

fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, CliError>
where
    T::Err: std::fmt::Display,
{
    value.parse::<T>().map_err(|e| bad(key, value, e))
}

impl ExperimentConfig {
    /// Config file (if any) followed by command-line overrides.
    pub fn load(file: Option<&Path>, overrides: &[String]) -> Result<Self, CliError> {
        let mut cfg = ExperimentConfig::default();
        if let Some(path) = file {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
            for (lineno, line) in text.lines().enumerate() {
                let line = line.split('#').next().unwrap_or("").trim();
                if line.is_empty() {
                    continue;
                }
                cfg.apply(line)
                    .map_err(|e| CliError::Config(format!("{}:{}: {e}", path.display(), lineno + 1)))?;
            }
        }
        for item in overrides {
            cfg.apply(item)?;
        }
        Ok(cfg)
    }

    pub fn apply(&mut self, item: &str) -> Result<(), CliError> {
        let (key, value) = item
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("expected key=value, got `{item}`")))?;
        let (key, value) = (key.trim(), value.trim());
        match key {
            "model" => self.model = Some(value.parse().map_err(|e| bad(key, value, e))?),
            "q" => self.q = Some(num(key, value)?),
            "k" => self.k = num(key, value)?,
            "density" => {
                self.density = match value {
                    "optimal" => DensitySpec::Optimal,
                    "power" => match self.density {
                        DensitySpec::Power(l) => DensitySpec::Power(l),
                        DensitySpec::Optimal => DensitySpec::Power(1.0),
                    },
                    other => return Err(bad(key, other, "expected `power` or `optimal`")),
                }
            }
            "lambda" => {
                let l: f64 = num(key, value)?;
                if !(l > 0.0 && l.is_finite()) {
                    return Err(bad(key, value, "must be positive"));
                }
                self.density = DensitySpec::Power(l);
            }
            "p" => self.p = value.parse().map_err(|e| bad(key, value, e))?,
            "n" => self.n = Some(positive(key, value)?),
            "n_list" => self.n_list = Some(parse_n_list(value).map_err(|e| bad(key, value, e))?),
            "order" => self.order = Some(num(key, value)?),
            "output" => self.output = Some(PathBuf::from(value)),
            "precision" => {
                self.precision = match value {
                    "extended" => Precision::Extended,
                    "double" => Precision::Double,
                    other => return Err(bad(key, other, "expected `extended` or `double`")),
                }
            }
            "fit" => {
                self.fit = match value {
                    "half" => FitRange::UpperHalf,
                    "full" => FitRange::Full,
                    other => return Err(bad(key, other, "expected `half` or `full`")),
                }
            }
            "kappa" => self.kappa = Some(num(key, value)?),
            "epsilon" => self.epsilon = Some(num(key, value)?),
            "variant" => {
                self.variant = match value {
                    "C" | "c" => ConditionVariant::C,
                    "C'" | "c'" | "Cprime" | "cprime" => ConditionVariant::CPrime,
                    other => return Err(bad(key, other, "expected `C` or `C'`")),
                }
            }
            "t" => self.t = Some(num(key, value)?),
            "m" => self.m = Some(num(key, value)?),
            "beta" => self.beta = Some(num(key, value)?),
            "threads" => self.threads = Some(positive(key, value)?),
            "input" => self.input = Some(PathBuf::from(value)),
            "out_dir" => self.out_dir = Some(PathBuf::from(value)),
            other => {
                return Err(CliError::Config(format!(
                    "unknown key `{other}` (known: {})",
                    KEYS.join(", ")
                )))
            }
        }
        Ok(())
    }

    pub fn model(&self) -> Result<CovarianceModel, CliError> {
        let kind = self.model.ok_or_else(|| CliError::Config("missing key `model`".into()))?;
        make_model(kind).map_err(|e| CliError::Config(format!("model: {e}")))
    }

    pub fn scheme(&self) -> Result<SplineScheme, CliError> {
        SplineScheme::new(self.q.unwrap_or(self.k), self.k).map_err(|e| CliError::Config(format!("scheme: {e}")))
    }

    /// Declared theoretical order: `order` if set, else `min(m+β, k+1)`.
    pub fn order(&self, model: &CovarianceModel) -> f64 {
        self.order
            .unwrap_or_else(|| model.profile().local_order().min(self.k as f64 + 1.0))
    }

    pub fn density(&self, model: &CovarianceModel) -> Result<GeneratingDensity, CliError> {
        match self.density {
            DensitySpec::Power(l) => GeneratingDensity::power(l).map_err(|e| CliError::Config(e.to_string())),
            DensitySpec::Optimal => {
                let c = model
                    .profile()
                    .c_fn
                    .as_ref()
                    .ok_or_else(|| CliError::Config("model has no local stationarity function".into()))?;
                optimal_density(c, self.order(model), self.p).map_err(|e| CliError::Config(format!("density: {e}")))
            }
        }
    }

    pub fn require_n(&self) -> Result<usize, CliError> {
        self.n.ok_or_else(|| CliError::Config("missing key `n`".into()))
    }

    pub fn require_n_list(&self) -> Result<Vec<usize>, CliError> {
        let list = self
            .n_list
            .clone()
            .or_else(|| self.n.map(|n| vec![n]))
            .ok_or_else(|| CliError::Config("missing key `n_list`".into()))?;
        if list.windows(2).any(|w| w[0] >= w[1]) {
            return Err(CliError::Config("n_list must be strictly increasing".into()));
        }
        Ok(list)
    }
}

fn positive(key: &str, value: &str) -> Result<usize, CliError> {
    let n: usize = num(key, value)?;
    if n == 0 {
        return Err(bad(key, value, "must be >= 1"));
    }
    Ok(n)
}

/// `16,32,64` or a doubling range `16..512`.
pub fn parse_n_list(value: &str) -> Result<Vec<usize>, String> {
    if let Some((a, b)) = value.split_once("..") {
        let a: usize = a.trim().parse().map_err(|e| format!("{e}"))?;
        let b: usize = b.trim().parse().map_err(|e| format!("{e}"))?;
        if a == 0 || b < a {
            return Err("range must satisfy 1 <= start <= end".into());
        }
        let mut out = vec![];
        let mut n = a;
        while n <= b {
            out.push(n);
            n *= 2;
        }
        return Ok(out);
    }
    let list: Vec<usize> = value
        .split(',')
        .map(|s| s.trim().parse::<usize>().map_err(|e| format!("`{s}`: {e}")))
        .collect::<Result<_, _>>()?;
    if list.is_empty() || list.contains(&0) {
        return Err("entries must be >= 1".into());
    }
    Ok(list)
}
