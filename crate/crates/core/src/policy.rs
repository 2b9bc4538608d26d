//! The selection agent: a two-action linear softmax policy, its rule-boosted
//! variant, sampling, REINFORCE updates and the delayed-copy soft update.
//!
//! Action `0` discards the candidate, action `1` retains it. Row 0 of the
//! weight matrix produces the discard logit, row 1 the retain logit.

use std::fs;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{all_finite, axpy, dot, softmax, Matrix};

pub const DISCARD: u8 = 0;
pub const SELECT: u8 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct PolicyParams {
    /// `2 × d_state`
    pub weight: Matrix,
    pub bias: [f64; 2],
}

/// Same shape as the parameters; also used for gradients.
pub type PolicyGradient = PolicyParams;

impl PolicyParams {
    pub fn zeros(d_state: usize) -> Self {
        PolicyParams {
            weight: Matrix::zeros(2, d_state),
            bias: [0.0; 2],
        }
    }

    pub fn d_state(&self) -> usize {
        self.weight.cols()
    }

    pub fn is_finite(&self) -> bool {
        all_finite(self.weight.as_slice()) && all_finite(&self.bias)
    }

    fn check(&self, state: &[f64]) -> Result<()> {
        if state.len() != self.d_state() {
            return Err(Error::dim("policy state", self.d_state(), state.len()));
        }
        Ok(())
    }

    /// `self += scale · other`
    pub fn axpy(&mut self, scale: f64, other: &PolicyGradient) {
        axpy(scale, other.weight.as_slice(), self.weight.as_mut_slice());
        axpy(scale, &other.bias, &mut self.bias);
    }

    /// `(discard, select)` logits.
    pub fn logits(&self, state: &[f64]) -> Result<[f64; 2]> {
        self.check(state)?;
        Ok([
            dot(self.weight.row(0), state) + self.bias[0],
            dot(self.weight.row(1), state) + self.bias[1],
        ])
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ActionDistribution {
    pub p_discard: f64,
    pub p_select: f64,
}

impl ActionDistribution {
    pub fn from_select(p_select: f64) -> Self {
        ActionDistribution {
            p_discard: 1.0 - p_select,
            p_select,
        }
    }

    pub fn prob(&self, action: u8) -> f64 {
        if action == SELECT {
            self.p_select
        } else {
            self.p_discard
        }
    }
}

pub fn action_distribution(state: &[f64], params: &PolicyParams) -> Result<ActionDistribution> {
    let p = softmax(&params.logits(state)?);
    Ok(ActionDistribution {
        p_discard: p[0],
        p_select: p[1],
    })
}

/// Rule-regularized policy `π·exp(λ(𝟙[a=1] − 1)) / Z`.
///
/// `strength = 1` is the transform applied to rule-matched candidates; `0` is
/// the identity.
pub fn pr_transform_with_strength(dist: ActionDistribution, strength: f64) -> ActionDistribution {
    let discard = dist.p_discard * (-strength).exp();
    let z = dist.p_select + discard;
    ActionDistribution {
        p_discard: discard / z,
        p_select: dist.p_select / z,
    }
}

pub fn pr_transform(dist: ActionDistribution) -> ActionDistribution {
    pr_transform_with_strength(dist, 1.0)
}

/// Returns 1 iff one uniform draw `u ∈ [0,1)` satisfies `u < p_select`.
pub fn sample_action<R: Rng + ?Sized>(dist: &ActionDistribution, rng: &mut R) -> u8 {
    let u: f64 = rng.random();
    if u < dist.p_select {
        SELECT
    } else {
        DISCARD
    }
}

/// `∇ log π(action | state)` for the linear softmax policy.
pub fn grad_log_policy(state: &[f64], action: u8, params: &PolicyParams) -> Result<PolicyGradient> {
    let dist = action_distribution(state, params)?;
    Ok(softmax_score_gradient(state, action, &dist))
}

/// `(one_hot(action) − probs) ⊗ state`, with `probs` taken from `dist`.
///
/// The boosted policy is the base softmax with the retain logit raised by the
/// transform strength, so with `dist = pr_transform(π)` this is `∇ log π_r`.
pub fn softmax_score_gradient(state: &[f64], action: u8, dist: &ActionDistribution) -> PolicyGradient {
    let mut residual = [-dist.p_discard, -dist.p_select];
    residual[usize::from(action == SELECT)] += 1.0;
    let mut g = PolicyParams::zeros(state.len());
    g.weight.add_outer(1.0, &residual, state);
    g.bias = residual;
    g
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryStep {
    pub state: Vec<f64>,
    pub action: u8,
    /// Whether the action was sampled from the rule-regularized policy.
    pub used_pr: bool,
    /// Probability of `action` under the policy it was sampled from.
    pub behavior_prob: f64,
    pub log_prob_grad: PolicyGradient,
}

/// `θ + lr · Σ_i R_i ∇ log π(a_i | s_i)`. No baseline.
pub fn reinforce_update(
    params: &PolicyParams,
    steps: &[TrajectoryStep],
    rewards: &[f64],
    lr: f64,
) -> Result<PolicyParams> {
    if steps.len() != rewards.len() {
        return Err(Error::Argument(format!(
            "{} trajectory steps but {} rewards",
            steps.len(),
            rewards.len()
        )));
    }
    if !(lr >= 0.0 && lr.is_finite()) {
        return Err(Error::Argument(format!("policy learning rate {lr}")));
    }
    let mut out = params.clone();
    for (step, &r) in steps.iter().zip(rewards) {
        if step.log_prob_grad.d_state() != params.d_state() {
            return Err(Error::dim(
                "trajectory gradient",
                params.d_state(),
                step.log_prob_grad.d_state(),
            ));
        }
        out.axpy(lr * r, &step.log_prob_grad);
    }
    Ok(out)
}

/// `τ · live + (1 − τ) · delayed`
pub fn soft_update(live: &PolicyParams, delayed: &PolicyParams, tau: f64) -> Result<PolicyParams> {
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(Error::Argument(format!("tau must be in (0, 1], got {tau}")));
    }
    if live.d_state() != delayed.d_state() {
        return Err(Error::dim("soft update", live.d_state(), delayed.d_state()));
    }
    let mix = |l: f64, d: f64| tau * l + (1.0 - tau) * d;
    let mut out = delayed.clone();
    for (o, l) in out.weight.as_mut_slice().iter_mut().zip(live.weight.as_slice()) {
        *o = mix(*l, *o);
    }
    for (o, l) in out.bias.iter_mut().zip(live.bias) {
        *o = mix(l, *o);
    }
    Ok(out)
}

pub const CHECKPOINT_VERSION: &str = "1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyCheckpoint {
    pub format_version: String,
    pub d_state: usize,
    pub d_s: usize,
    pub d_e: usize,
    pub weight: Vec<Vec<f64>>,
    pub bias: [f64; 2],
}

impl PolicyCheckpoint {
    pub fn new(params: &PolicyParams, d_s: usize, d_e: usize) -> Self {
        PolicyCheckpoint {
            format_version: CHECKPOINT_VERSION.into(),
            d_state: params.d_state(),
            d_s,
            d_e,
            weight: params.weight.to_rows(),
            bias: params.bias,
        }
    }

    pub fn params(&self) -> Result<PolicyParams> {
        let weight = Matrix::from_rows(self.weight.clone())?;
        if weight.rows() != 2 {
            return Err(Error::Validation(format!(
                "policy checkpoint has {} weight rows, expected 2",
                weight.rows()
            )));
        }
        if weight.cols() != self.d_state || self.d_state != crate::encoder::state_dim(self.d_s, self.d_e) {
            return Err(Error::dim("policy checkpoint", self.d_state, weight.cols()));
        }
        Ok(PolicyParams {
            weight,
            bias: self.bias,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, serde_json::to_string_pretty(self)? + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}
