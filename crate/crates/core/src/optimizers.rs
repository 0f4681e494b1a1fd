//! Training loops: dense MeZO, AdaLeZO and the uniform random-sparse
//! ablation, with per-phase wall-clock instrumentation.
//!
//! Every step follows the same three phases:
//!
//! 1. perturb `+μ`, evaluate `L₊`, perturb `−2μ`, evaluate `L₋`, perturb `+μ`
//!    to restore;
//! 2. regenerate the same noise and apply the update;
//! 3. (AdaLeZO only) feed `|ĝ_scalar|` to the bandit and draw the next
//!    active set.
//!
//! All three phases key the noise on the same per-step seed
//! `s_t = mix(master_seed, t)`.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use crate::bandit::{resample, sampling_probs, update_reward, BanditConfig, BanditState, SampleDraw};
use crate::error::{Error, Result};
use crate::estimator::{dense_estimate_apply, projected_scalar, sparse_update, ScalarGrad, SparseGradSpec};
use crate::objectives::Objective;
use crate::param_store::{perturb_all, perturb_layers, LayeredParams, NoiseStream};
use crate::seeds::{mix, TAG_BATCH, TAG_SAMPLER, TAG_STEP};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Mezo,
    Adalezo,
    RandomSparse,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Mezo => "mezo",
            Method::Adalezo => "adalezo",
            Method::RandomSparse => "random_sparse",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Learning-rate schedule.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LrSchedule {
    /// `η_t = η`.
    #[default]
    Constant,
    /// `η_t = η / √T` for a run of `T` steps.
    InvSqrtSteps,
}

/// Which data the two probe evaluations of a step see.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BatchMode {
    /// The full data set every step.
    #[default]
    Full,
    /// A fresh minibatch per step, shared by `L₊` and `L₋`.
    Resampled,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub method: Method,
    pub steps: usize,
    pub eta: f64,
    pub mu: f64,
    pub bandit: BanditConfig,
    pub master_seed: u64,
    pub record_probs: bool,
    pub record_oracle_corr: bool,
    pub eval_every: usize,
    pub schedule: LrSchedule,
    pub batch: BatchMode,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            method: Method::Adalezo,
            steps: 1000,
            eta: 1e-3,
            mu: 1e-3,
            bandit: BanditConfig::default(),
            master_seed: 0,
            record_probs: false,
            record_oracle_corr: false,
            eval_every: 10,
            schedule: LrSchedule::Constant,
            batch: BatchMode::Full,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::config("steps must be at least 1"));
        }
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::config(format!("eta = {} violates η > 0", self.eta)));
        }
        if !(self.mu > 0.0 && self.mu.is_finite()) {
            return Err(Error::config(format!("mu = {} violates μ > 0", self.mu)));
        }
        if self.eval_every == 0 {
            return Err(Error::config("eval_every must be at least 1"));
        }
        self.bandit.validate()
    }

    /// Learning rate actually applied at every step.
    pub fn effective_eta(&self) -> f64 {
        match self.schedule {
            LrSchedule::Constant => self.eta,
            LrSchedule::InvSqrtSteps => self.eta / (self.steps as f64).sqrt(),
        }
    }

    /// `s_t`, the base noise seed of step `t`.
    pub fn step_seed(&self, t: usize) -> u64 {
        mix(mix(self.master_seed, TAG_STEP), t as u64)
    }

    fn batch_seed(&self, t: usize) -> Option<u64> {
        match self.batch {
            BatchMode::Full => None,
            BatchMode::Resampled => Some(mix(mix(self.master_seed, TAG_BATCH), t as u64)),
        }
    }

    /// Sparse methods at `ρ = 1` run in dense mode: every layer exactly once
    /// with unit weight, instead of a with-replacement draw.
    pub fn dense_mode(&self) -> bool {
        self.method != Method::Mezo && self.bandit.rho >= 1.0
    }
}

/// What happened in one step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    pub step: usize,
    pub loss_plus: f64,
    pub loss_minus: f64,
    pub scalar_grad: f64,
    pub noise_seed: u64,
    pub active: Vec<usize>,
    pub counts: Vec<u32>,
    /// Policy the step's draw came from, when `record_probs` is set.
    pub probs: Option<Vec<f64>>,
    pub t_perturb: f64,
    pub t_forward: f64,
    pub t_update: f64,
    /// Unperturbed loss after the update, on evaluation steps.
    pub loss: Option<f64>,
}

impl StepReport {
    pub fn step_time(&self) -> f64 {
        self.t_perturb + self.t_forward + self.t_update
    }

    /// Equality on everything except wall-clock fields.
    pub fn same_outcome(&self, other: &Self) -> bool {
        self.step == other.step
            && self.loss_plus.to_bits() == other.loss_plus.to_bits()
            && self.loss_minus.to_bits() == other.loss_minus.to_bits()
            && self.scalar_grad.to_bits() == other.scalar_grad.to_bits()
            && self.noise_seed == other.noise_seed
            && self.active == other.active
            && self.counts == other.counts
            && self.probs == other.probs
            && self.loss.map(f64::to_bits) == other.loss.map(f64::to_bits)
    }
}

/// Noise-consuming phases of a step, for seed-discipline checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    PerturbPlus,
    PerturbMinus,
    Restore,
    Update,
}

/// Mutable optimizer state for one run.
#[derive(Debug, Clone)]
pub struct Optimizer {
    cfg: RunConfig,
    num_layers: usize,
    bandit: BanditState,
    draw: SampleDraw,
    draw_probs: Vec<f64>,
    sampler: ChaCha8Rng,
    phase_log: Option<Vec<(usize, Phase, u64)>>,
}

impl Optimizer {
    /// Validates `cfg` and performs the initial draw from the uniform policy.
    pub fn new(cfg: RunConfig, num_layers: usize) -> Result<Self> {
        cfg.validate()?;
        if num_layers == 0 {
            return Err(Error::domain("no layers"));
        }
        let bandit = BanditState::new(num_layers, &cfg.bandit)?;
        let mut sampler = ChaCha8Rng::seed_from_u64(mix(cfg.master_seed, TAG_SAMPLER));
        let draw_probs = match cfg.method {
            Method::RandomSparse => uniform(num_layers),
            _ => bandit.probs.clone(),
        };
        let draw = if cfg.method == Method::Mezo || cfg.dense_mode() {
            SampleDraw::dense(num_layers)
        } else {
            resample(&draw_probs, &cfg.bandit, &mut sampler)
        };
        Ok(Self {
            cfg,
            num_layers,
            bandit,
            draw,
            draw_probs,
            sampler,
            phase_log: None,
        })
    }

    pub fn config(&self) -> &RunConfig {
        &self.cfg
    }

    pub fn bandit(&self) -> &BanditState {
        &self.bandit
    }

    /// The draw the next step will use.
    pub fn current_draw(&self) -> &SampleDraw {
        &self.draw
    }

    /// The policy that produced [`Self::current_draw`].
    pub fn current_probs(&self) -> &[f64] {
        &self.draw_probs
    }

    /// Starts logging `(step, phase, seed)` for every noise-consuming phase.
    pub fn record_phases(&mut self) {
        self.phase_log = Some(Vec::new());
    }

    pub fn phase_log(&self) -> &[(usize, Phase, u64)] {
        self.phase_log.as_deref().unwrap_or(&[])
    }

    fn log(&mut self, t: usize, phase: Phase, seed: u64) {
        if let Some(log) = &mut self.phase_log {
            log.push((t, phase, seed));
        }
    }

    /// Runs one step of the configured method.
    pub fn step<O: Objective + ?Sized>(&mut self, params: &mut LayeredParams, obj: &O, t: usize) -> Result<StepReport> {
        match self.cfg.method {
            Method::Mezo => self.mezo_step(params, obj, t),
            Method::Adalezo => self.adalezo_step(params, obj, t),
            Method::RandomSparse => self.random_sparse_step(params, obj, t),
        }
    }

    /// Perturb / evaluate / restore. `active = None` perturbs every layer.
    fn probe<O: Objective + ?Sized>(
        &mut self,
        params: &mut LayeredParams,
        obj: &O,
        t: usize,
        active: Option<&[usize]>,
    ) -> Result<(ScalarGrad, u64, f64, f64)> {
        let mu = self.cfg.mu;
        let seed = self.cfg.step_seed(t);
        let stream = NoiseStream::new(seed);
        let batch = self.cfg.batch_seed(t);
        let eval = |p: &LayeredParams| match batch {
            Some(b) => obj.batch_loss(p, b),
            None => obj.loss(p),
        };
        let perturb = |p: &mut LayeredParams, scale: f64| match active {
            Some(a) => perturb_layers(p, a, scale, stream),
            None => perturb_all(p, scale, stream),
        };

        let mut t_perturb = 0.0;
        let mut t_forward = 0.0;

        let clock = Instant::now();
        perturb(params, mu);
        t_perturb += clock.elapsed().as_secs_f64();
        self.log(t, Phase::PerturbPlus, seed);

        let clock = Instant::now();
        let loss_plus = eval(params);
        t_forward += clock.elapsed().as_secs_f64();

        let clock = Instant::now();
        perturb(params, -2.0 * mu);
        t_perturb += clock.elapsed().as_secs_f64();
        self.log(t, Phase::PerturbMinus, seed);

        let clock = Instant::now();
        let loss_minus = eval(params);
        t_forward += clock.elapsed().as_secs_f64();

        let clock = Instant::now();
        perturb(params, mu);
        t_perturb += clock.elapsed().as_secs_f64();
        self.log(t, Phase::Restore, seed);

        let scalar = projected_scalar(loss_plus, loss_minus, mu).map_err(|e| Error::Aborted {
            step: t,
            reason: e.to_string(),
        })?;
        Ok((scalar, seed, t_perturb, t_forward))
    }

    /// Dense SPSA step over all parameters.
    pub fn mezo_step<O: Objective + ?Sized>(&mut self, params: &mut LayeredParams, obj: &O, t: usize) -> Result<StepReport> {
        let (scalar, seed, t_perturb, t_forward) = self.probe(params, obj, t, None)?;
        let clock = Instant::now();
        dense_estimate_apply(params, &scalar, self.cfg.effective_eta(), NoiseStream::new(seed));
        let t_update = clock.elapsed().as_secs_f64();
        self.log(t, Phase::Update, seed);
        Ok(StepReport {
            step: t,
            loss_plus: scalar.loss_plus,
            loss_minus: scalar.loss_minus,
            scalar_grad: scalar.value,
            noise_seed: seed,
            active: (0..self.num_layers).collect(),
            counts: vec![1; self.num_layers],
            probs: self.cfg.record_probs.then(|| uniform(self.num_layers)),
            t_perturb,
            t_forward,
            t_update,
            loss: None,
        })
    }

    /// One step of Algorithm-1 style adaptive layer selection.
    pub fn adalezo_step<O: Objective + ?Sized>(&mut self, params: &mut LayeredParams, obj: &O, t: usize) -> Result<StepReport> {
        self.sparse_step(params, obj, t, true)
    }

    /// Same sparsity budget as AdaLeZO, uniform policy, no learning.
    pub fn random_sparse_step<O: Objective + ?Sized>(
        &mut self,
        params: &mut LayeredParams,
        obj: &O,
        t: usize,
    ) -> Result<StepReport> {
        self.sparse_step(params, obj, t, false)
    }

    fn sparse_step<O: Objective + ?Sized>(
        &mut self,
        params: &mut LayeredParams,
        obj: &O,
        t: usize,
        adaptive: bool,
    ) -> Result<StepReport> {
        let draw = std::mem::replace(&mut self.draw, SampleDraw::dense(0));
        let probs = std::mem::take(&mut self.draw_probs);
        let dense = self.cfg.dense_mode();

        let (scalar, seed, t_perturb, t_forward) = self.probe(params, obj, t, Some(&draw.active))?;

        let clock = Instant::now();
        let spec = if dense {
            SparseGradSpec::dense(self.num_layers, scalar, seed)
        } else {
            SparseGradSpec::new(&draw, &probs, self.cfg.bandit.clip, scalar, seed)?
        };
        sparse_update(params, &spec, self.cfg.effective_eta(), NoiseStream::new(seed));
        self.log(t, Phase::Update, seed);

        let next_probs = if adaptive {
            update_reward(&mut self.bandit, &draw.active, scalar.value.abs(), &self.cfg.bandit)?;
            self.bandit.refresh_probs(&self.cfg.bandit).map_err(|e| Error::Aborted {
                step: t,
                reason: e.to_string(),
            })?;
            self.bandit.probs.clone()
        } else {
            uniform(self.num_layers)
        };
        let next_draw = if dense {
            SampleDraw::dense(self.num_layers)
        } else {
            resample(&next_probs, &self.cfg.bandit, &mut self.sampler)
        };
        let t_update = clock.elapsed().as_secs_f64();

        let report = StepReport {
            step: t,
            loss_plus: scalar.loss_plus,
            loss_minus: scalar.loss_minus,
            scalar_grad: scalar.value,
            noise_seed: seed,
            active: draw.active,
            counts: draw.counts,
            probs: self.cfg.record_probs.then_some(probs),
            t_perturb,
            t_forward,
            t_update,
            loss: None,
        };
        self.draw = next_draw;
        self.draw_probs = next_probs;
        Ok(report)
    }
}

fn uniform(num_layers: usize) -> Vec<f64> {
    let cfg = BanditConfig {
        gamma: 1.0,
        ..BanditConfig::default()
    };
    sampling_probs(&vec![0.0; num_layers], &cfg).expect("finite zeros")
}

/// Result of a full run.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub config: RunConfig,
    pub initial_loss: f64,
    pub reports: Vec<StepReport>,
    pub params: LayeredParams,
}

impl RunOutput {
    /// Last evaluated loss.
    pub fn final_loss(&self) -> f64 {
        self.reports
            .iter()
            .rev()
            .find_map(|r| r.loss)
            .unwrap_or(self.initial_loss)
    }

    pub fn total_time(&self) -> f64 {
        self.reports.iter().map(StepReport::step_time).sum()
    }
}

/// Runs `cfg.steps` steps from `init`.
pub fn run<O: Objective + ?Sized>(obj: &O, init: LayeredParams, cfg: &RunConfig) -> Result<RunOutput> {
    run_observed(obj, init, cfg, |_, _| {})
}

/// [`run`] with a callback after every step, seeing the post-update
/// parameters. The callback is outside the timed region.
pub fn run_observed<O, F>(obj: &O, init: LayeredParams, cfg: &RunConfig, mut observe: F) -> Result<RunOutput>
where
    O: Objective + ?Sized,
    F: FnMut(&LayeredParams, &StepReport),
{
    if init.layer_sizes() != obj.layer_sizes() {
        return Err(Error::Dimension {
            expected: obj.total_dim(),
            got: init.total_dim(),
        });
    }
    let mut params = init;
    let mut opt = Optimizer::new(cfg.clone(), params.num_layers())?;
    let initial_loss = obj.loss(&params);
    let mut reports = Vec::with_capacity(cfg.steps);
    for t in 0..cfg.steps {
        let mut report = opt.step(&mut params, obj, t)?;
        if (t + 1) % cfg.eval_every == 0 || t + 1 == cfg.steps {
            let loss = obj.loss(&params);
            if !loss.is_finite() {
                return Err(Error::Aborted {
                    step: t,
                    reason: format!("loss became {loss}"),
                });
            }
            report.loss = Some(loss);
        }
        observe(&params, &report);
        reports.push(report);
    }
    Ok(RunOutput {
        config: cfg.clone(),
        initial_loss,
        reports,
        params,
    })
}
