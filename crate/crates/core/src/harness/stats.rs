//! Paired relative deltas with normal-approximation confidence intervals.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairedDelta {
    pub n: usize,
    /// Relative change of the arm mean over the control mean (0.01 = +1%).
    pub delta: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// Two-sided p-value for "no relative change".
    pub p_value: f64,
}

impl PairedDelta {
    pub fn ci_width(&self) -> f64 {
        self.ci_high - self.ci_low
    }

    pub fn excludes_zero(&self) -> bool {
        self.ci_low > 0.0 || self.ci_high < 0.0
    }

    pub fn significant(&self, alpha: f64) -> bool {
        self.p_value < alpha
    }
}

fn standard_normal() -> Normal {
    Normal::standard()
}

/// Two-sided critical value for a `level` confidence interval.
pub fn z_critical(level: f64) -> f64 {
    standard_normal().inverse_cdf(0.5 + level / 2.0)
}

/// Relative change `mean(arm) / mean(control) - 1` over per-user pairs.
///
/// The ratio of means is used rather than a mean of per-user ratios so users
/// with a zero control value still count. Its standard error comes from the
/// linearized residuals `(a_i - R c_i) / mean(control)`.
pub fn paired_delta(control: &[f64], arm: &[f64]) -> Result<PairedDelta> {
    if control.len() != arm.len() {
        return Err(Error::LengthMismatch {
            control: control.len(),
            arm: arm.len(),
        });
    }
    let n = control.len();
    if n == 0 {
        return Err(Error::InvalidConfig(
            "paired delta needs at least one pair".into(),
        ));
    }
    let nf = n as f64;
    let c_mean = control.iter().sum::<f64>() / nf;
    let a_mean = arm.iter().sum::<f64>() / nf;
    if c_mean == 0.0 {
        return Err(Error::ZeroControlMean);
    }
    let ratio = a_mean / c_mean;
    let delta = ratio - 1.0;
    let resid: Vec<f64> = control
        .iter()
        .zip(arm)
        .map(|(c, a)| (a - ratio * c) / c_mean)
        .collect();
    let se = if n > 1 {
        let m = resid.iter().sum::<f64>() / nf;
        let var = resid.iter().map(|e| (e - m).powi(2)).sum::<f64>() / (nf - 1.0);
        (var / nf).sqrt()
    } else {
        0.0
    };
    let half = z_critical(0.95) * se;
    let p_value = if se > 0.0 {
        2.0 * standard_normal().cdf(-(delta / se).abs())
    } else if delta == 0.0 {
        1.0
    } else {
        0.0
    };
    Ok(PairedDelta {
        n,
        delta,
        ci_low: delta - half,
        ci_high: delta + half,
        p_value,
    })
}
