use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Step-size schedule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Schedule {
    Constant { eta0: f64 },
    /// `η₀ / factor^⌊epoch / period_epochs⌋`
    StageDecay {
        eta0: f64,
        factor: f64,
        period_epochs: usize,
    },
    /// `η₀ (1 + cos(π t / T)) / 2`, held at 0 after `T`.
    Cosine { eta0: f64, total_steps: usize },
}

impl Schedule {
    pub fn constant(eta0: f64) -> Self {
        Schedule::Constant { eta0 }
    }

    pub fn eta0(&self) -> f64 {
        match *self {
            Schedule::Constant { eta0 } | Schedule::StageDecay { eta0, .. } | Schedule::Cosine { eta0, .. } => eta0,
        }
    }

    /// Step size at `step` (0-based) when an epoch has `steps_per_epoch` steps.
    pub fn eta(&self, step: usize, steps_per_epoch: usize) -> f64 {
        match *self {
            Schedule::Constant { eta0 } => eta0,
            Schedule::StageDecay {
                eta0,
                factor,
                period_epochs,
            } => {
                let epoch = step / steps_per_epoch.max(1);
                let stage = epoch / period_epochs.max(1);
                eta0 / factor.powi(stage as i32)
            }
            Schedule::Cosine { eta0, total_steps } => {
                let t = step.min(total_steps) as f64;
                eta0 * (1.0 + (PI * t / total_steps.max(1) as f64).cos()) / 2.0
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let eta0 = self.eta0();
        if !(eta0 > 0.0 && eta0.is_finite()) {
            return Err(Error::config(format!("initial step size must be positive, got {eta0}")));
        }
        match *self {
            Schedule::StageDecay {
                factor,
                period_epochs,
                ..
            } if !(factor >= 1.0 && factor.is_finite()) || period_epochs == 0 => Err(Error::config(
                "stage decay needs a factor ≥ 1 and a positive period",
            )),
            Schedule::Cosine { total_steps: 0, .. } => Err(Error::config("cosine schedule needs total_steps > 0")),
            _ => Ok(()),
        }
    }

    /// Parses `constant`, `stage:<factor>:<period_epochs>` or
    /// `cosine[:<total_steps>]` with the given `eta0`; a cosine schedule
    /// without an explicit length spans `default_total` steps.
    pub fn parse(spec: &str, eta0: f64, default_total: usize) -> Result<Self> {
        let parts: Vec<&str> = spec.trim().split(':').map(str::trim).collect();
        let num = |s: &str| -> Result<f64> {
            s.parse()
                .map_err(|_| Error::config(format!("schedule parameter `{s}` is not a number")))
        };
        let int = |s: &str| -> Result<usize> {
            s.parse()
                .map_err(|_| Error::config(format!("schedule parameter `{s}` is not an integer")))
        };
        let sched = match parts.as_slice() {
            ["constant"] => Schedule::Constant { eta0 },
            ["stage", factor, period] => Schedule::StageDecay {
                eta0,
                factor: num(factor)?,
                period_epochs: int(period)?,
            },
            ["cosine"] => Schedule::Cosine {
                eta0,
                total_steps: default_total,
            },
            ["cosine", total] => Schedule::Cosine {
                eta0,
                total_steps: int(total)?,
            },
            _ => return Err(Error::config(format!("unknown schedule `{spec}`"))),
        };
        sched.validate()?;
        Ok(sched)
    }
}

impl fmt::Display for Schedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Schedule::Constant { .. } => write!(f, "constant"),
            Schedule::StageDecay {
                factor,
                period_epochs,
                ..
            } => write!(f, "stage:{factor}:{period_epochs}"),
            Schedule::Cosine { total_steps, .. } => write!(f, "cosine:{total_steps}"),
        }
    }
}

impl FromStr for Schedule {
    type Err = Error;

    /// `<eta0>/<schedule>`, e.g. `0.1/stage:10:30`.
    fn from_str(s: &str) -> Result<Self> {
        let (eta, rest) = s
            .split_once('/')
            .ok_or_else(|| Error::config(format!("expected `<eta0>/<schedule>`, got `{s}`")))?;
        let eta0: f64 = eta
            .trim()
            .parse()
            .map_err(|_| Error::config(format!("`{eta}` is not a step size")))?;
        Schedule::parse(rest, eta0, 1)
    }
}
