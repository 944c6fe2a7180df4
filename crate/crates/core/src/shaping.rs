//! Compression-aware GRPO advantage shaping, evaluated over rollout records.
//!
//! Each rollout pairs a full-context (teacher) reward with a compressed-context
//! (student) reward. The relative reward drop under compression boosts the
//! group-normalized advantage of rollouts that were already favourable, and
//! the shaped advantage replaces the plain one inside the clipped objective.
//!
//! Log-probabilities are sequence-level scalars; nothing here differentiates
//! through a model, though [`loss_gradient`] gives the closed-form derivative
//! of the objective with respect to each rollout's current log-probability.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Added to the group standard deviation before dividing.
pub const ADVANTAGE_EPS: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RolloutRecord {
    pub reward_full: f64,
    pub reward_comp: f64,
    pub logprob_new: f64,
    pub logprob_old: f64,
    pub logprob_ref: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RolloutGroup {
    pub rollouts: Vec<RolloutRecord>,
}

impl RolloutGroup {
    pub fn new(rollouts: Vec<RolloutRecord>) -> Result<Self> {
        let group = RolloutGroup { rollouts };
        group.validate()?;
        Ok(group)
    }

    pub fn validate(&self) -> Result<()> {
        if self.rollouts.len() < 2 {
            return Err(Error::invalid(format!(
                "a rollout group needs at least 2 rollouts, got {}",
                self.rollouts.len()
            )));
        }
        for (i, r) in self.rollouts.iter().enumerate() {
            let fields = [
                r.reward_full,
                r.reward_comp,
                r.logprob_new,
                r.logprob_old,
                r.logprob_ref,
            ];
            if fields.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid(format!(
                    "rollout {i} has a non-finite field"
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.rollouts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rollouts.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarcConfig {
    pub tau: f64,
    pub lambda_shape: f64,
    pub epsilon_clip: f64,
    pub beta_kl: f64,
}

impl Default for MarcConfig {
    fn default() -> Self {
        MarcConfig {
            tau: 1e-4,
            lambda_shape: 1.0,
            epsilon_clip: 0.2,
            beta_kl: 0.04,
        }
    }
}

impl MarcConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::invalid(format!(
                "tau must be positive, got {}",
                self.tau
            )));
        }
        if !(self.lambda_shape >= 0.0 && self.lambda_shape.is_finite()) {
            return Err(Error::invalid(format!(
                "lambda must be non-negative, got {}",
                self.lambda_shape
            )));
        }
        if !(self.epsilon_clip > 0.0 && self.epsilon_clip < 1.0) {
            return Err(Error::invalid(format!(
                "epsilon must lie in (0, 1), got {}",
                self.epsilon_clip
            )));
        }
        if !(self.beta_kl >= 0.0 && self.beta_kl.is_finite()) {
            return Err(Error::invalid(format!(
                "beta must be non-negative, got {}",
                self.beta_kl
            )));
        }
        Ok(())
    }
}

/// Relative reward drop caused by compression, zero when compression helps.
pub fn degradation(reward_full: f64, reward_comp: f64, tau: f64) -> f64 {
    (reward_full - reward_comp).max(0.0) / (reward_full.abs() + tau)
}

/// Group-normalized advantages with the population standard deviation.
pub fn grpo_advantages(rewards: &[f64]) -> Vec<f64> {
    // identical rewards carry no signal; the float mean may not be exact
    if rewards.windows(2).all(|w| w[0] == w[1]) {
        return vec![0.0; rewards.len()];
    }
    let n = rewards.len() as f64;
    let mean = rewards.iter().sum::<f64>() / n;
    let var = rewards.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    rewards
        .iter()
        .map(|r| (r - mean) / (std + ADVANTAGE_EPS))
        .collect()
}

pub fn distill_weight(advantage: f64, delta: f64) -> f64 {
    advantage.max(0.0) * delta
}

pub fn shaped_advantage(advantage: f64, weight: f64, lambda_shape: f64) -> f64 {
    advantage + lambda_shape * weight
}

pub fn clipped_ratio(logprob_new: f64, logprob_old: f64, epsilon_clip: f64) -> f64 {
    (logprob_new - logprob_old)
        .exp()
        .clamp(1.0 - epsilon_clip, 1.0 + epsilon_clip)
}

/// Non-negative KL estimator `exp(x) − x − 1` with `x = ref − new`.
pub fn kl_estimate(logprob_new: f64, logprob_ref: f64) -> f64 {
    let x = logprob_ref - logprob_new;
    x.exp() - x - 1.0
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RolloutDiagnostics {
    pub advantage: f64,
    pub delta: f64,
    pub weight: f64,
    pub shaped_advantage: f64,
    pub ratio: f64,
    pub kl: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CgrpoOutput {
    pub loss: f64,
    pub rollouts: Vec<RolloutDiagnostics>,
}

/// `mean(ρ_i·Ã_i) − β·mean(KL_i)` over one group, plus per-rollout terms.
///
/// Advantages come from the compressed-branch rewards; the full-context
/// reward only feeds the degradation term of its paired rollout.
pub fn cgrpo_loss(group: &RolloutGroup, config: &MarcConfig) -> Result<CgrpoOutput> {
    group.validate()?;
    config.validate()?;
    let comp: Vec<f64> = group.rollouts.iter().map(|r| r.reward_comp).collect();
    let advantages = grpo_advantages(&comp);

    let rollouts: Vec<RolloutDiagnostics> = group
        .rollouts
        .iter()
        .zip(advantages)
        .map(|(r, advantage)| {
            let delta = degradation(r.reward_full, r.reward_comp, config.tau);
            let weight = distill_weight(advantage, delta);
            RolloutDiagnostics {
                advantage,
                delta,
                weight,
                shaped_advantage: shaped_advantage(advantage, weight, config.lambda_shape),
                ratio: clipped_ratio(r.logprob_new, r.logprob_old, config.epsilon_clip),
                kl: kl_estimate(r.logprob_new, r.logprob_ref),
            }
        })
        .collect();

    let g = rollouts.len() as f64;
    let surrogate = rollouts
        .iter()
        .map(|d| d.ratio * d.shaped_advantage)
        .sum::<f64>()
        / g;
    let kl = rollouts.iter().map(|d| d.kl).sum::<f64>() / g;
    Ok(CgrpoOutput {
        loss: surrogate - config.beta_kl * kl,
        rollouts,
    })
}

/// Derivative of [`cgrpo_loss`] with respect to each `logprob_new`.
///
/// The ratio term contributes `Ã_i·ρ_i/G` strictly inside the clip band and
/// nothing once clipped; the KL term contributes `−β(1 − exp(ref − new))/G`.
pub fn loss_gradient(group: &RolloutGroup, config: &MarcConfig) -> Result<Vec<f64>> {
    let out = cgrpo_loss(group, config)?;
    let g = group.len() as f64;
    Ok(group
        .rollouts
        .iter()
        .zip(&out.rollouts)
        .map(|(r, d)| {
            let raw = (r.logprob_new - r.logprob_old).exp();
            let inside = raw > 1.0 - config.epsilon_clip && raw < 1.0 + config.epsilon_clip;
            let ratio_term = if inside {
                d.shaped_advantage * raw / g
            } else {
                0.0
            };
            let kl_term = -config.beta_kl * (1.0 - (r.logprob_ref - r.logprob_new).exp()) / g;
            ratio_term + kl_term
        })
        .collect())
}
