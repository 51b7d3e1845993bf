//! Effectiveness metrics for counterfactual generators.
//!
//! Two headline numbers compare a trained generator ("proposed") against the
//! naive baseline of re-rolling the original policy:
//!
//! * `rho_plus`: fraction of test trajectories for which a method found at
//!   least one positive counterfactual.
//! * `rho_adv`: among trajectories where either method found a positive
//!   counterfactual, the fraction where the proposed method is advantageous
//!   — its reward-gain ratio `phi_G` exceeds its distance ratio `phi_D`
//!   versus the baseline, i.e. the extra reward outweighs the extra action
//!   deviation.

use serde::{Deserialize, Serialize};

use crate::cfgen::CfResult;
use crate::error::{Error, Result};

/// Per-test-trajectory best positive counterfactual (or none) for one method.
#[derive(Debug, Clone, Default)]
pub struct MethodEval {
    pub best: Vec<Option<CfResult>>,
}

impl MethodEval {
    pub fn len(&self) -> usize {
        self.best.len()
    }

    pub fn is_empty(&self) -> bool {
        self.best.is_empty()
    }

    pub fn positives(&self) -> usize {
        self.best.iter().filter(|b| b.is_some()).count()
    }
}

/// Fraction of test trajectories with a positive counterfactual.
pub fn rho_plus(eval: &MethodEval, n_test: usize) -> Result<f64> {
    if n_test == 0 {
        return Err(Error::InvalidValue("rho_plus needs n_test >= 1".into()));
    }
    if eval.len() != n_test {
        return Err(Error::LengthMismatch { left: eval.len(), right: n_test });
    }
    Ok(eval.positives() as f64 / n_test as f64)
}

/// Threshold below which ratio denominators are treated as zero.
const EPS_GUARD: f64 = 1e-9;

/// Guarded ratio: a denominator that is zero for practical purposes makes
/// the ratio +infinity, so comparisons resolve by the surviving side
/// (`inf > finite` is true, `inf > inf` is false).
fn guarded_ratio(num: f64, den: f64) -> f64 {
    if den.abs() < EPS_GUARD {
        f64::INFINITY
    } else {
        num / den
    }
}

/// The advantage comparison for one trajectory where both methods found a
/// positive counterfactual. Returns `(phi_g, phi_d, advantageous)`.
pub fn advantage_detail(best_p: &CfResult, best_b: &CfResult) -> Result<(f64, f64, bool)> {
    if !best_p.positive || !best_b.positive {
        return Err(Error::InvalidValue("advantage test needs positive counterfactuals".into()));
    }
    let g_obs = best_p.return_observed;
    let phi_g = guarded_ratio(best_p.return_cf - g_obs, best_b.return_cf - g_obs);
    let phi_d = guarded_ratio(best_p.distance, best_b.distance);
    Ok((phi_g, phi_d, phi_g > phi_d))
}

/// `phi_G > phi_D`: does the proposed method's reward gain outweigh its
/// extra action distance relative to the baseline?
pub fn advantage_test(best_p: &CfResult, best_b: &CfResult) -> Result<bool> {
    advantage_detail(best_p, best_b).map(|(_, _, adv)| adv)
}

/// Per-trajectory row of the metrics report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetailRow {
    pub trajectory: usize,
    pub return_observed: Option<f64>,
    pub proposed_return: Option<f64>,
    pub proposed_distance: Option<f64>,
    pub baseline_return: Option<f64>,
    pub baseline_distance: Option<f64>,
    pub phi_g: Option<f64>,
    pub phi_d: Option<f64>,
    /// None when neither method found a positive counterfactual.
    pub advantageous: Option<bool>,
}

/// Denominator bookkeeping, reported so alternative conventions can be
/// recomputed from the raw counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Counts {
    pub n_test: usize,
    pub proposed_positive: usize,
    pub baseline_positive: usize,
    pub both_positive: usize,
    pub either_positive: usize,
    pub advantageous: usize,
}

/// Advantage percentage over all trajectories where at least one method has
/// a positive counterfactual. Proposed-only positives count as advantageous;
/// baseline-only positives count against. `None` when no trajectory
/// qualifies (undefined, distinct from 0).
pub fn rho_adv(
    eval_p: &MethodEval,
    eval_b: &MethodEval,
) -> Result<(Option<f64>, Counts, Vec<DetailRow>)> {
    if eval_p.len() != eval_b.len() {
        return Err(Error::LengthMismatch { left: eval_p.len(), right: eval_b.len() });
    }
    let mut counts = Counts { n_test: eval_p.len(), ..Counts::default() };
    let mut details = Vec::with_capacity(eval_p.len());
    for (i, (p, b)) in eval_p.best.iter().zip(&eval_b.best).enumerate() {
        let mut row = DetailRow {
            trajectory: i,
            return_observed: None,
            proposed_return: None,
            proposed_distance: None,
            baseline_return: None,
            baseline_distance: None,
            phi_g: None,
            phi_d: None,
            advantageous: None,
        };
        if let Some(p) = p {
            counts.proposed_positive += 1;
            row.return_observed = Some(p.return_observed);
            row.proposed_return = Some(p.return_cf);
            row.proposed_distance = Some(p.distance);
        }
        if let Some(b) = b {
            counts.baseline_positive += 1;
            row.return_observed.get_or_insert(b.return_observed);
            row.baseline_return = Some(b.return_cf);
            row.baseline_distance = Some(b.distance);
        }
        match (p, b) {
            (Some(p), Some(b)) => {
                counts.both_positive += 1;
                counts.either_positive += 1;
                let (phi_g, phi_d, adv) = advantage_detail(p, b)?;
                row.phi_g = Some(phi_g);
                row.phi_d = Some(phi_d);
                row.advantageous = Some(adv);
                if adv {
                    counts.advantageous += 1;
                }
            }
            (Some(_), None) => {
                counts.either_positive += 1;
                counts.advantageous += 1;
                row.advantageous = Some(true);
            }
            (None, Some(_)) => {
                counts.either_positive += 1;
                row.advantageous = Some(false);
            }
            (None, None) => {}
        }
        details.push(row);
    }
    let rho = (counts.either_positive > 0)
        .then(|| counts.advantageous as f64 / counts.either_positive as f64);
    Ok((rho, counts, details))
}

/// Full evaluation report for one trained generator vs the baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub rho_plus_proposed: f64,
    pub rho_plus_baseline: f64,
    /// None (serialized as null) when no trajectory had a positive
    /// counterfactual from either method.
    pub rho_adv: Option<f64>,
    pub counts: Counts,
    pub details: Vec<DetailRow>,
}

impl MetricsReport {
    pub fn build(eval_p: &MethodEval, eval_b: &MethodEval) -> Result<Self> {
        let n = eval_p.len();
        let (adv, counts, details) = rho_adv(eval_p, eval_b)?;
        Ok(Self {
            rho_plus_proposed: rho_plus(eval_p, n)?,
            rho_plus_baseline: rho_plus(eval_b, n)?,
            rho_adv: adv,
            counts,
            details,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}
