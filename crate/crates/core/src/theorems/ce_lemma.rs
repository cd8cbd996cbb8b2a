use rand::Rng as _;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::Serialize;

use super::verdict::{Report, Verdict};
use crate::error::{Error, Result};
use super::compact::CE_LIPSCHITZ as CE_GRAD_BOUND;
use crate::objectives::cross_entropy;
use crate::rng::Rng;

/// Relative slack for rounding in the value and Lipschitz checks.
const ROUNDING: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CeLemmaConfig {
    pub classes: Vec<usize>,
    pub trials: usize,
    pub max_c: f64,
    pub seed: u64,
}

impl Default for CeLemmaConfig {
    fn default() -> Self {
        Self {
            classes: vec![2, 10],
            trials: 10_000,
            max_c: 20.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CeLemmaReport {
    pub config: CeLemmaConfig,
    pub value_violations: usize,
    pub gradient_violations: usize,
    pub lipschitz_violations: usize,
    /// Largest `|ℓ| / (c + log d)`.
    pub max_value_ratio: f64,
    pub max_gradient_norm: f64,
    /// Largest `|ℓ(x) − ℓ(x′)| / ‖x − x′‖`.
    pub max_lipschitz_ratio: f64,
    pub verdict: Verdict,
}

impl Report for CeLemmaReport {
    fn name(&self) -> &'static str {
        "celemma"
    }

    fn verdict(&self) -> Verdict {
        self.verdict
    }

    fn summary(&self) -> String {
        format!(
            "{} cross-entropy lemma: {} trials; value ratio {:.6} ≤ 1, gradient norm {:.6} ≤ √2, Lipschitz ratio {:.6} ≤ √2; violations {}/{}/{}",
            self.verdict,
            self.config.trials,
            self.max_value_ratio,
            self.max_gradient_norm,
            self.max_lipschitz_ratio,
            self.value_violations,
            self.gradient_violations,
            self.lipschitz_violations
        )
    }
}

/// Randomized check of the cross-entropy bounds: `|ℓ| ≤ c + log d` when the
/// logit spread is at most `c`, `‖∇ℓ‖ ≤ √2`, and `√2`-Lipschitz in the logits.
pub fn check_ce_lemma(config: &CeLemmaConfig, rng: &mut Rng) -> Result<CeLemmaReport> {
    if config.trials == 0 || config.classes.is_empty() || config.classes.iter().any(|&d| d < 2) {
        return Err(Error::rejected("need at least one trial and class counts ≥ 2"));
    }
    if !(config.max_c > 0.0) {
        return Err(Error::rejected("the logit spread bound must be positive"));
    }
    let offset = Normal::new(0.0, 10.0).expect("valid normal");
    let mut r = CeLemmaReport {
        config: config.clone(),
        value_violations: 0,
        gradient_violations: 0,
        lipschitz_violations: 0,
        max_value_ratio: 0.0,
        max_gradient_norm: 0.0,
        max_lipschitz_ratio: 0.0,
        verdict: Verdict::Pass,
    };
    for trial in 0..config.trials {
        let d = config.classes[trial % config.classes.len()];
        let c = config.max_c * (1.0 - rng.gen::<f64>());
        let base: f64 = offset.sample(rng);
        let x: Vec<f64> = (0..d).map(|_| base + c * rng.gen::<f64>()).collect();
        let y = rng.gen_range(0..d);
        let (value, grad) = cross_entropy(&x, y)?;
        let bound = c + (d as f64).ln();
        r.max_value_ratio = r.max_value_ratio.max(value.abs() / bound);
        r.value_violations += usize::from(value.abs() > bound * (1.0 + ROUNDING));
        let gn = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        r.max_gradient_norm = r.max_gradient_norm.max(gn);
        r.gradient_violations += usize::from(gn > CE_GRAD_BOUND + 1e-9);

        let scale: f64 = 10f64.powf(rng.gen_range(-3.0..1.0));
        let x2: Vec<f64> = x.iter().map(|v| v + scale * Distribution::<f64>::sample(&StandardNormal, rng)).collect();
        let (value2, _) = cross_entropy(&x2, y)?;
        let dist = x.iter().zip(&x2).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        if dist > 0.0 {
            let diff = (value - value2).abs();
            r.max_lipschitz_ratio = r.max_lipschitz_ratio.max(diff / dist);
            let slack = ROUNDING * value.abs().max(value2.abs()).max(1.0);
            r.lipschitz_violations += usize::from(diff > CE_GRAD_BOUND * dist + slack);
        }
    }
    r.verdict = Verdict::from_bool(r.value_violations + r.gradient_violations + r.lipschitz_violations == 0);
    Ok(r)
}
