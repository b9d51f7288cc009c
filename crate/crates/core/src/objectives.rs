//! Pure-function objective math: group-relative advantages, the clipped
//! surrogate with its KL estimator, token-entropy regularizers, the
//! think/action information bottleneck, and the MoE router losses and
//! balance metric. No autograd, no parameter updates; every function just
//! evaluates its formula.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Degenerate-group guard for advantage standardization.
pub const DEFAULT_EPS_STD: f64 = 1e-8;
/// Out-of-band entropy penalty.
pub const DEFAULT_RHO: f64 = -0.2;
/// Exploitation-compression trade-off weight.
pub const DEFAULT_GAMMA: f64 = 1.0;
/// Default decay for the running entropy means.
pub const DEFAULT_ENTROPY_EMA_DECAY: f64 = 0.99;
/// Default coefficient of the global load-balancing loss.
pub const DEFAULT_AUX_LOSS_COEFF: f64 = 1e-4;
/// Default coefficient of the router z-loss.
pub const DEFAULT_Z_LOSS_COEFF: f64 = 5e-4;
/// Default weight of every reward component.
pub const DEFAULT_REWARD_WEIGHT: f64 = 1.0;

#[derive(Debug, Error, PartialEq)]
pub enum ObjectiveError {
    #[error("advantage groups need at least 2 rewards, got {0}")]
    GroupTooSmall(usize),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("entropy series is empty")]
    EmptySeries,
    #[error("alpha bands must satisfy low_think < low_action < 1 < high_action < high_think")]
    BadAlphaOrdering,
    #[error("lambda weights must lie in (0, 1), got {0}")]
    LambdaOutOfRange(f64),
    #[error("dispatch fractions must sum to 1 (sum = {0})")]
    NotNormalized(f64),
    #[error("total expert load is zero")]
    ZeroLoad,
}

/// Group-standardized advantages: `(r_i - mean) / std` with the
/// population standard deviation. Groups with `std < eps_std` yield all
/// zeros instead of dividing by ~0.
pub fn group_advantage(rewards: &[f64], eps_std: f64) -> Result<Vec<f64>, ObjectiveError> {
    if rewards.len() < 2 {
        return Err(ObjectiveError::GroupTooSmall(rewards.len()));
    }
    let n = rewards.len() as f64;
    let mean = rewards.iter().sum::<f64>() / n;
    let var = rewards.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    if std < eps_std {
        return Ok(vec![0.0; rewards.len()]);
    }
    Ok(rewards.iter().map(|r| (r - mean) / std).collect())
}

/// Per-token KL estimator `exp(l) - l - 1` for `l = log(pi_ref / pi)`,
/// averaged over tokens. Nonnegative, zero iff every log-ratio is zero.
pub fn kl_estimate(log_ratios: &[f64]) -> f64 {
    if log_ratios.is_empty() {
        return 0.0;
    }
    log_ratios.iter().map(|l| l.exp() - l - 1.0).sum::<f64>() / log_ratios.len() as f64
}

/// Clipped-surrogate objective: token-mean of
/// `min(r * A, clip(r, 1-eps, 1+eps) * A)` per sample, then group mean,
/// minus `beta * kl`.
pub fn grpo_objective(
    ratios: &[Vec<f64>],
    advantages: &[f64],
    eps_clip: f64,
    beta: f64,
    kl: f64,
) -> Result<f64, ObjectiveError> {
    if ratios.len() != advantages.len() {
        return Err(ObjectiveError::ShapeMismatch(format!(
            "{} ratio sequences vs {} advantages",
            ratios.len(),
            advantages.len()
        )));
    }
    if ratios.is_empty() {
        return Err(ObjectiveError::ShapeMismatch("empty group".into()));
    }
    let mut group_sum = 0.0;
    for (tokens, advantage) in ratios.iter().zip(advantages) {
        if tokens.is_empty() {
            return Err(ObjectiveError::ShapeMismatch(
                "a sample has no token ratios".into(),
            ));
        }
        let token_mean = tokens
            .iter()
            .map(|r| {
                let clipped = r.clamp(1.0 - eps_clip, 1.0 + eps_clip);
                (r * advantage).min(clipped * advantage)
            })
            .sum::<f64>()
            / tokens.len() as f64;
        group_sum += token_mean;
    }
    Ok(group_sum / ratios.len() as f64 - beta * kl)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Segment {
    Think,
    Action,
    Other,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TokenEntropy {
    pub entropy: f64,
    pub segment: Segment,
}

/// Per-token entropies of a batch, nested as batch -> step -> token so
/// the objectives can reproduce the exact nesting of their means.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct TokenEntropySeries {
    pub episodes: Vec<Vec<Vec<TokenEntropy>>>,
}

impl TokenEntropySeries {
    fn is_empty(&self) -> bool {
        self.episodes.is_empty()
            || self.episodes.iter().all(|steps| {
                steps.is_empty() || steps.iter().all(|tokens| tokens.is_empty())
            })
    }
}

fn nested_mean(series: &TokenEntropySeries, value: impl Fn(&TokenEntropy) -> f64) -> f64 {
    // mean over batch of (mean over steps of (mean over tokens)); empty
    // steps and episodes are skipped rather than treated as zero
    let mut batch_sum = 0.0;
    let mut batch_count = 0usize;
    for steps in &series.episodes {
        let mut step_sum = 0.0;
        let mut step_count = 0usize;
        for tokens in steps {
            if tokens.is_empty() {
                continue;
            }
            let token_mean =
                tokens.iter().map(&value).sum::<f64>() / tokens.len() as f64;
            step_sum += token_mean;
            step_count += 1;
        }
        if step_count > 0 {
            batch_sum += step_sum / step_count as f64;
            batch_count += 1;
        }
    }
    if batch_count == 0 {
        0.0
    } else {
        batch_sum / batch_count as f64
    }
}

/// Token-entropy regularizer: the nested batch/step/token mean of token
/// entropies (not a flat token mean).
pub fn token_entropy_objective(series: &TokenEntropySeries) -> Result<f64, ObjectiveError> {
    if series.is_empty() {
        return Err(ObjectiveError::EmptySeries);
    }
    Ok(nested_mean(series, |t| t.entropy))
}

/// Band configuration for the think/action entropy smoothing penalty.
/// The running means are supplied by the caller (see
/// [`EntropyRunningMeans`] for the default update rule).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SmoothingConfig {
    pub alpha_low_think: f64,
    pub alpha_high_think: f64,
    pub alpha_low_action: f64,
    pub alpha_high_action: f64,
    pub rho: f64,
    pub mean_think: f64,
    pub mean_action: f64,
}

impl SmoothingConfig {
    pub fn validate(&self) -> Result<(), ObjectiveError> {
        let ordered = self.alpha_low_think < self.alpha_low_action
            && self.alpha_low_action < 1.0
            && 1.0 < self.alpha_high_action
            && self.alpha_high_action < self.alpha_high_think;
        if ordered {
            Ok(())
        } else {
            Err(ObjectiveError::BadAlphaOrdering)
        }
    }
}

/// Think/action entropy smoothing: a token inside its segment's band
/// contributes 0; every out-of-band or unlabeled token contributes the
/// penalty `rho`. Aggregated with the same nested means as the
/// token-entropy objective.
pub fn smoothing_objective(
    series: &TokenEntropySeries,
    config: &SmoothingConfig,
) -> Result<f64, ObjectiveError> {
    config.validate()?;
    if series.is_empty() {
        return Err(ObjectiveError::EmptySeries);
    }
    let penalty = |token: &TokenEntropy| -> f64 {
        let in_band = match token.segment {
            Segment::Think => {
                token.entropy >= config.alpha_low_think * config.mean_think
                    && token.entropy <= config.alpha_high_think * config.mean_think
            }
            Segment::Action => {
                token.entropy >= config.alpha_low_action * config.mean_action
                    && token.entropy <= config.alpha_high_action * config.mean_action
            }
            Segment::Other => false,
        };
        if in_band {
            0.0
        } else {
            config.rho
        }
    };
    Ok(nested_mean(series, penalty))
}

/// Exponential-moving-average tracker for the historical think/action
/// entropy means consumed by [`smoothing_objective`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EntropyRunningMeans {
    pub think: f64,
    pub action: f64,
    pub decay: f64,
}

impl Default for EntropyRunningMeans {
    fn default() -> Self {
        Self {
            think: 0.0,
            action: 0.0,
            decay: DEFAULT_ENTROPY_EMA_DECAY,
        }
    }
}

impl EntropyRunningMeans {
    pub fn update(&mut self, segment: Segment, observed_mean: f64) {
        let slot = match segment {
            Segment::Think => &mut self.think,
            Segment::Action => &mut self.action,
            Segment::Other => return,
        };
        if *slot == 0.0 {
            *slot = observed_mean;
        } else {
            *slot = self.decay * *slot + (1.0 - self.decay) * observed_mean;
        }
    }
}

/// Information-bottleneck regularizer: `gamma * H(think|prompt) -
/// H(action|think)`. The additive constant of the derivation is dropped;
/// only the optimizable part is returned.
pub fn ib_objective(h_think_given_prompt: f64, h_action_given_think: f64, gamma: f64) -> f64 {
    gamma * h_think_given_prompt - h_action_given_think
}

/// Combined objective: the clipped-surrogate value plus the weighted
/// regularizers. Every lambda must lie strictly inside (0, 1).
pub fn combined_objective(
    j_grpo: f64,
    j_token: f64,
    j_smooth: f64,
    j_ib: f64,
    lambda1: f64,
    lambda2: f64,
    lambda3: f64,
) -> Result<f64, ObjectiveError> {
    for lambda in [lambda1, lambda2, lambda3] {
        if !(lambda > 0.0 && lambda < 1.0) {
            return Err(ObjectiveError::LambdaOutOfRange(lambda));
        }
    }
    Ok(j_grpo + lambda1 * j_token + lambda2 * j_smooth + lambda3 * j_ib)
}

/// Global-batch load-balancing loss: `N_E * sum_i f_i * P_i` over the
/// dispatch fractions and mean gate probabilities.
pub fn lbl_global(dispatch_fractions: &[f64], mean_gate_probs: &[f64]) -> Result<f64, ObjectiveError> {
    if dispatch_fractions.len() != mean_gate_probs.len() {
        return Err(ObjectiveError::ShapeMismatch(format!(
            "{} fractions vs {} probabilities",
            dispatch_fractions.len(),
            mean_gate_probs.len()
        )));
    }
    let sum: f64 = dispatch_fractions.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(ObjectiveError::NotNormalized(sum));
    }
    let n = dispatch_fractions.len() as f64;
    Ok(n * dispatch_fractions
        .iter()
        .zip(mean_gate_probs)
        .map(|(f, p)| f * p)
        .sum::<f64>())
}

/// Router z-loss: mean over tokens of the squared log-sum-exp of the
/// router logits, computed with the stable shifted form.
pub fn z_loss(logits: &[Vec<f64>]) -> f64 {
    if logits.is_empty() {
        return 0.0;
    }
    let mut total = 0.0;
    for row in logits {
        if row.is_empty() {
            continue;
        }
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|m| (m - max).exp()).sum::<f64>().ln();
        total += lse * lse;
    }
    total / logits.len() as f64
}

/// Batch load-imbalance metric: `(max_i Load_i - mean) / mean` where the
/// mean is the ideal per-expert load under perfect balance.
pub fn max_vio(loads: &[f64]) -> Result<f64, ObjectiveError> {
    let total: f64 = loads.iter().sum();
    if loads.is_empty() || total <= 0.0 {
        return Err(ObjectiveError::ZeroLoad);
    }
    let mean = total / loads.len() as f64;
    let max = loads.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok((max - mean) / mean)
}
