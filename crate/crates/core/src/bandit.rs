//! Layer selection as a non-stationary multi-armed bandit.
//!
//! Each layer is an arm. Its value is an exponential moving average of the
//! reward `|ĝ_scalar|` observed on steps where it was active. The policy mixes
//! a temperature softmax over the values with a uniform floor, and `K`
//! layers are drawn with replacement from it every step.

use rand::Rng;
use serde::Deserialize;

use crate::error::{Error, Result};

/// Bandit hyperparameters. Defaults: `ρ = 0.2, τ = 0.6, γ = 0.1, α = 0.1,
/// C = 4`.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BanditConfig {
    /// Sampling ratio in `(0, 1]`.
    pub rho: f64,
    /// Softmax temperature, `> 0`.
    pub tau: f64,
    /// Uniform exploration mix in `[0, 1]`.
    pub gamma: f64,
    /// EMA factor in `(0, 1]`.
    pub alpha: f64,
    /// IPW clipping threshold, `≥ 1`. `f64::INFINITY` disables clipping.
    pub clip: f64,
}

impl Default for BanditConfig {
    fn default() -> Self {
        Self {
            rho: 0.2,
            tau: 0.6,
            gamma: 0.1,
            alpha: 0.1,
            clip: 4.0,
        }
    }
}

impl BanditConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0 && self.rho <= 1.0) {
            return Err(Error::config(format!("rho = {} violates ρ ∈ (0,1]", self.rho)));
        }
        if !(self.tau > 0.0) || self.tau.is_nan() {
            return Err(Error::config(format!("tau = {} violates τ > 0", self.tau)));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::config(format!("gamma = {} violates γ ∈ [0,1]", self.gamma)));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::config(format!("alpha = {} violates α ∈ (0,1]", self.alpha)));
        }
        if !(self.clip >= 1.0) {
            return Err(Error::config(format!("clip = {} violates C ≥ 1", self.clip)));
        }
        Ok(())
    }

    /// Number of draws per step, `max(1, ⌊ρL⌋)`.
    pub fn draws(&self, num_layers: usize) -> usize {
        k_draws(self.rho, num_layers)
    }
}

/// `max(1, ⌊ρL⌋)`.
pub fn k_draws(rho: f64, num_layers: usize) -> usize {
    ((rho * num_layers as f64).floor() as usize).max(1)
}

/// `p = (1 − γ)·softmax(q/τ) + γ/L`.
///
/// The max of `q/τ` is subtracted before exponentiation. Every entry is at
/// least `γ/L` exactly: the softmax term is non-negative and IEEE addition
/// is monotone. A single arm always gets probability exactly 1.
pub fn sampling_probs(q: &[f64], cfg: &BanditConfig) -> Result<Vec<f64>> {
    if !(cfg.tau > 0.0) {
        return Err(Error::domain(format!("temperature must be positive, got {}", cfg.tau)));
    }
    if let Some(i) = q.iter().position(|v| !v.is_finite()) {
        return Err(Error::numeric(format!("value estimate for layer {i} is {}", q[i])));
    }
    let l = q.len();
    if l == 0 {
        return Err(Error::domain("no layers"));
    }
    if l == 1 {
        return Ok(vec![1.0]);
    }
    let scaled: Vec<f64> = q.iter().map(|v| v / cfg.tau).collect();
    let max = scaled.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scaled.iter().map(|s| (s - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    let floor = cfg.gamma / l as f64;
    Ok(exps.iter().map(|e| (1.0 - cfg.gamma) * (e / z) + floor).collect())
}

/// Per-run bandit state.
#[derive(Debug, Clone, PartialEq)]
pub struct BanditState {
    pub q_values: Vec<f64>,
    pub probs: Vec<f64>,
    pub step: usize,
}

impl BanditState {
    /// Zero values and the corresponding (uniform) policy.
    pub fn new(num_layers: usize, cfg: &BanditConfig) -> Result<Self> {
        let q_values = vec![0.0; num_layers];
        let probs = sampling_probs(&q_values, cfg)?;
        Ok(Self {
            q_values,
            probs,
            step: 0,
        })
    }

    /// Recomputes `probs` from the current values.
    pub fn refresh_probs(&mut self, cfg: &BanditConfig) -> Result<()> {
        self.probs = sampling_probs(&self.q_values, cfg)?;
        Ok(())
    }
}

/// `Q_l ← (1 − α)Q_l + α·reward` for every active layer. Inactive layers keep
/// their value.
pub fn update_reward(state: &mut BanditState, active: &[usize], reward: f64, cfg: &BanditConfig) -> Result<()> {
    if !(reward >= 0.0) {
        return Err(Error::domain(format!("reward must be a non-negative magnitude, got {reward}")));
    }
    for &l in active {
        let q = &mut state.q_values[l];
        *q = (1.0 - cfg.alpha) * *q + cfg.alpha * reward;
    }
    state.step += 1;
    Ok(())
}

/// Outcome of `K` categorical draws with replacement.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SampleDraw {
    pub k_draws: usize,
    /// Multiplicity `n_l` of every layer.
    pub counts: Vec<u32>,
    /// Layers with `n_l > 0`, ascending.
    pub active: Vec<usize>,
}

impl SampleDraw {
    /// Every layer once: the dense configuration.
    pub fn dense(num_layers: usize) -> Self {
        Self {
            k_draws: num_layers,
            counts: vec![1; num_layers],
            active: (0..num_layers).collect(),
        }
    }

    pub fn from_counts(counts: Vec<u32>) -> Self {
        let k_draws = counts.iter().map(|&c| c as usize).sum();
        let active = counts
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(l, _)| l)
            .collect();
        Self {
            k_draws,
            counts,
            active,
        }
    }
}

/// Draws `K = max(1, ⌊ρL⌋)` layers from `p` with replacement.
pub fn resample<R: Rng + ?Sized>(p: &[f64], cfg: &BanditConfig, rng: &mut R) -> SampleDraw {
    multinomial_counts(p, cfg.draws(p.len()), rng)
}

/// `k` independent categorical draws from `p` by inverse CDF.
pub fn multinomial_counts<R: Rng + ?Sized>(p: &[f64], k: usize, rng: &mut R) -> SampleDraw {
    let mut counts = vec![0u32; p.len()];
    multinomial_into(p, k, rng, &mut counts);
    SampleDraw::from_counts(counts)
}

/// Allocation-free form of [`multinomial_counts`]: overwrites `counts`.
pub fn multinomial_into<R: Rng + ?Sized>(p: &[f64], k: usize, rng: &mut R, counts: &mut [u32]) {
    debug_assert_eq!(p.len(), counts.len());
    counts.iter_mut().for_each(|c| *c = 0);
    let total: f64 = p.iter().sum();
    for _ in 0..k {
        let u = rng.random::<f64>() * total;
        let mut acc = 0.0;
        let mut pick = p.len() - 1;
        for (l, &pl) in p.iter().enumerate() {
            acc += pl;
            if u < acc {
                pick = l;
                break;
            }
        }
        // rounding can leave u ≥ Σp; fall back to the last arm with mass
        if u >= acc {
            pick = p.iter().rposition(|&x| x > 0.0).unwrap_or(pick);
        }
        counts[pick] += 1;
    }
}
