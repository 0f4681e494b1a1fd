//! Statistical checks of the sparse estimator and the optimizers.
//!
//! Every check returns [`ValidationReport`]s whose pass flag is computed from
//! `(estimate, bound, std_err)` by a [`Criterion`]. Tolerances:
//!
//! * analytic vs analytic: absolute `1e-12`;
//! * Monte Carlo vs analytic: 4 standard errors;
//! * Monte Carlo vs Monte Carlo: 5% relative, at `≥ 10^6` trials.
//!
//! Monte Carlo work is chunked with per-chunk seeds (see [`crate::exec`]), so
//! every report is reproducible and identical under sequential or parallel
//! execution.

use std::collections::HashMap;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{Binomial, Discrete};

use crate::bandit::{k_draws, multinomial_into, sampling_probs, BanditConfig, SampleDraw};
use crate::error::{Error, Result};
use crate::estimator::ipw_weight;
use crate::exec::{pairwise_reduce, Exec};
use crate::objectives::{smoothed_grad_mc_with, GradientOracle, Objective, ProbeObjective, QuadraticHetero, SmoothedGradient};
use crate::optimizers::{run, run_observed, LrSchedule, Method, Optimizer, RunConfig, RunOutput};
use crate::param_store::{perturb_layers, LayeredParams, NoiseStream};
use crate::seeds::mix;
use crate::stats::{chi_square_homogeneity, median, pearson, sign_test_p, Moments, Scalar};

/// How a report's pass flag is derived.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Criterion {
    /// `|estimate − bound| ≤ tol`.
    Absolute(f64),
    /// `|estimate − bound| ≤ k·se`.
    WithinSe(f64),
    /// `|estimate − bound| ≤ rel·|bound|`.
    Relative(f64),
    /// `estimate ≤ bound + k·se`.
    AtMost(f64),
    /// `estimate ≥ bound`.
    AtLeast,
}

impl Criterion {
    pub fn passes(self, estimate: f64, bound: f64, se: f64) -> bool {
        if estimate.is_nan() || bound.is_nan() {
            return false;
        }
        match self {
            Criterion::Absolute(tol) => (estimate - bound).abs() <= tol,
            Criterion::WithinSe(k) => (estimate - bound).abs() <= k * se,
            Criterion::Relative(rel) => (estimate - bound).abs() <= rel * bound.abs(),
            Criterion::AtMost(k) => estimate <= bound + k * se,
            Criterion::AtLeast => estimate >= bound,
        }
    }
}

/// Outcome of one check.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub claim: String,
    /// Theoretical value or bound.
    pub bound: f64,
    pub estimate: f64,
    pub std_err: f64,
    pub n_trials: u64,
    pub pass: bool,
    /// Measured estimator variance, for checks that relate to the
    /// convergence bound.
    pub variance_sigma2: Option<f64>,
    pub detail: String,
}

impl ValidationReport {
    pub fn new(claim: impl Into<String>, bound: f64, estimate: f64, std_err: f64, n_trials: u64, criterion: Criterion) -> Self {
        Self {
            claim: claim.into(),
            bound,
            estimate,
            std_err,
            n_trials,
            pass: criterion.passes(estimate, bound, std_err),
            variance_sigma2: None,
            detail: String::new(),
        }
    }

    pub fn with_detail(mut self, detail: impl Into<String>) -> Self {
        self.detail = detail.into();
        self
    }

    /// A pass/fail report for a boolean property.
    pub fn flag(claim: impl Into<String>, ok: bool, n_trials: u64, detail: impl Into<String>) -> Self {
        let v = if ok { 1.0 } else { 0.0 };
        Self::new(claim, 1.0, v, 0.0, n_trials, Criterion::Absolute(0.0)).with_detail(detail)
    }
}

/// `claim_id,bound,estimate,se,n,pass`.
pub const VALIDATION_HEADER: [&str; 6] = ["claim_id", "bound", "estimate", "se", "n", "pass"];

pub fn write_reports<W: Write>(w: W, reports: &[ValidationReport]) -> Result<()> {
    let mut csv = csv::Writer::from_writer(w);
    csv.write_record(VALIDATION_HEADER)?;
    for r in reports {
        csv.write_record([
            r.claim.clone(),
            fmt_f64(r.bound),
            fmt_f64(r.estimate),
            fmt_f64(r.std_err),
            r.n_trials.to_string(),
            r.pass.to_string(),
        ])?;
    }
    csv.flush()?;
    Ok(())
}

pub(crate) fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        format!("{v:e}")
    }
}

const CHUNK: usize = 4096;

fn chunk_rng(seed: u64, chunk: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix(seed, chunk as u64))
}

fn check_distribution(p: &[f64]) -> Result<()> {
    if p.is_empty() {
        return Err(Error::domain("empty distribution"));
    }
    if p.iter().any(|&x| !(x > 0.0 && x <= 1.0)) {
        return Err(Error::domain("every probability must lie in (0,1]"));
    }
    let s: f64 = p.iter().sum();
    if (s - 1.0).abs() > 1e-9 {
        return Err(Error::domain(format!("probabilities sum to {s}")));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Closed forms

/// `E[n_l]` from the Binomial(K, p) pmf, summed term by term.
pub fn binomial_mean_by_pmf(k: usize, p: f64) -> f64 {
    let b = Binomial::new(p, k as u64).expect("valid binomial");
    (0..=k as u64).map(|n| n as f64 * b.pmf(n)).sum()
}

/// `E[n_l²]` from the pmf.
pub fn binomial_second_moment_by_pmf(k: usize, p: f64) -> f64 {
    let b = Binomial::new(p, k as u64).expect("valid binomial");
    (0..=k as u64).map(|n| (n * n) as f64 * b.pmf(n)).sum()
}

/// Conditional mean of the sparse estimator given the dense ZO gradient
/// `ghat`: `w_l · E[n_l] · ĝ^(l)` with `E[n_l]` taken from the pmf.
pub fn conditional_mean(ghat: &LayeredParams, probs: &[f64], k: usize, clip: f64) -> Result<LayeredParams> {
    let mut out = ghat.clone();
    for (l, &p) in probs.iter().enumerate() {
        let m = ipw_weight(k, p, clip)? * binomial_mean_by_pmf(k, p);
        out.layer_mut(l).iter_mut().for_each(|x| *x *= m);
    }
    Ok(out)
}

/// Closed-form clipping bias `(1 − min(1, C·K·p_l)) · ĝ^(l)` per layer.
pub fn clipping_bias_closed_form(ghat: &LayeredParams, probs: &[f64], k: usize, clip: f64) -> LayeredParams {
    let mut out = ghat.clone();
    for (l, &p) in probs.iter().enumerate() {
        let f = 1.0 - (clip * k as f64 * p).min(1.0);
        out.layer_mut(l).iter_mut().for_each(|x| *x *= f);
    }
    out
}

/// `G · Σ_{l : p_l < 1/(CK)} (1 − C·K·p_l)`.
pub fn bias_bound(probs: &[f64], k: usize, clip: f64, grad_bound: f64) -> f64 {
    let thresh = 1.0 / (clip * k as f64);
    grad_bound
        * probs
            .iter()
            .filter(|&&p| p < thresh)
            .map(|&p| 1.0 - clip * k as f64 * p)
            .sum::<f64>()
}

/// `(1/K) Σ_l v_l (1/p_l − 1)`. Layers with `v_l = 0` contribute nothing.
pub fn variance_formula(v: &[f64], p: &[f64], k: usize) -> f64 {
    v.iter()
        .zip(p)
        .filter(|(vl, _)| **vl != 0.0)
        .map(|(vl, pl)| vl * (1.0 / pl - 1.0))
        .sum::<f64>()
        / k as f64
}

/// `p*_l ∝ √v_l`.
pub fn optimal_probs(v: &[f64]) -> Vec<f64> {
    let s: f64 = v.iter().map(|x| x.sqrt()).sum();
    v.iter().map(|x| x.sqrt() / s).collect()
}

/// `(1/K) [(Σ √v_l)² − Σ v_l]`, the variance at `p*`.
pub fn optimal_variance(v: &[f64], k: usize) -> f64 {
    let s: f64 = v.iter().map(|x| x.sqrt()).sum();
    (s * s - v.iter().sum::<f64>()) / k as f64
}

/// `𝓜_l = w_l² · E[n_l²]` with the exact Binomial second moment
/// `Kp(1 − p) + K²p²`.
pub fn second_moment_multiplier(p: f64, k: usize, clip: f64) -> f64 {
    let kf = k as f64;
    let w = (1.0 / (kf * p)).min(clip);
    w * w * (kf * p * (1.0 - p) + kf * kf * p * p)
}

// ---------------------------------------------------------------------------
// Estimator checks

/// What the assembled estimator is compared against.
#[derive(Debug, Clone, Copy)]
pub enum Reference<'a> {
    /// An exactly known gradient (e.g. the analytic gradient of a quadratic,
    /// where smoothing changes nothing).
    Exact(&'a LayeredParams),
    /// A Monte Carlo estimate of the smoothed gradient.
    Smoothed(&'a SmoothedGradient),
}

/// Fixed sampling policy for estimator checks.
#[derive(Debug, Clone)]
pub struct SamplingSetup {
    pub probs: Vec<f64>,
    pub k: usize,
    pub clip: f64,
}

impl SamplingSetup {
    pub fn new(probs: Vec<f64>, k: usize, clip: f64) -> Result<Self> {
        check_distribution(&probs)?;
        if k == 0 {
            return Err(Error::domain("k must be at least 1"));
        }
        Ok(Self { probs, k, clip })
    }

    /// The policy a bandit with values `q` would use, `K = max(1, ⌊ρL⌋)`.
    pub fn from_bandit(q: &[f64], cfg: &BanditConfig) -> Result<Self> {
        let probs = sampling_probs(q, cfg)?;
        Self::new(probs, k_draws(cfg.rho, q.len()), cfg.clip)
    }
}

/// Two-level Monte Carlo of the full sparse estimator: the outer loop draws
/// the probe noise `z`, the inner loop draws active sets with the fixed
/// policy, and each inner sample runs the real perturb / evaluate / restore
/// sequence on the active layers. The per-`z` inner means are i.i.d., so the
/// standard error comes from the outer level.
///
/// Reports the largest coordinate-wise `|mean − reference| / se`; passes at 4.
#[allow(clippy::too_many_arguments)]
pub fn check_unbiasedness<O: Objective + ?Sized>(
    obj: &O,
    params: &LayeredParams,
    mu: f64,
    setup: &SamplingSetup,
    reference: Reference<'_>,
    n_z: usize,
    n_s: usize,
    seed: u64,
    exec: Exec,
) -> Result<ValidationReport> {
    if setup.probs.len() != params.num_layers() {
        return Err(Error::Dimension {
            expected: params.num_layers(),
            got: setup.probs.len(),
        });
    }
    let weights: Vec<f64> = setup
        .probs
        .iter()
        .map(|&p| ipw_weight(setup.k, p, setup.clip))
        .collect::<Result<_>>()?;
    let dim = params.total_dim();
    let sizes = params.layer_sizes();
    let outer_chunk = 16;
    let chunks = exec.map_chunks(n_z, outer_chunk, |c, n| {
        let mut outer = Moments::new(dim);
        let mut scratch = params.clone();
        let mut inner = vec![0.0; dim];
        let mut counts = vec![0u32; sizes.len()];
        let mut noise: Vec<Vec<f64>> = Vec::with_capacity(sizes.len());
        let mut rng = chunk_rng(seed ^ 0xA5A5, c);
        for j in 0..n {
            let z_seed = mix(seed, (c * outer_chunk + j) as u64);
            let stream = NoiseStream::new(z_seed);
            noise.clear();
            noise.extend(sizes.iter().enumerate().map(|(l, &d)| stream.gaussian_noise(l, d)));
            inner.iter_mut().for_each(|x| *x = 0.0);
            for _ in 0..n_s {
                multinomial_into(&setup.probs, setup.k, &mut rng, &mut counts);
                let active: Vec<usize> = (0..sizes.len()).filter(|&l| counts[l] > 0).collect();
                scratch.as_flat_mut().copy_from_slice(params.as_flat());
                perturb_layers(&mut scratch, &active, mu, stream);
                let lp = obj.loss(&scratch);
                perturb_layers(&mut scratch, &active, -2.0 * mu, stream);
                let lm = obj.loss(&scratch);
                let scalar = (lp - lm) / (2.0 * mu);
                let mut off = 0;
                for (l, &d) in sizes.iter().enumerate() {
                    if counts[l] > 0 {
                        let coef = scalar * weights[l] * counts[l] as f64;
                        for (x, z) in inner[off..off + d].iter_mut().zip(&noise[l]) {
                            *x += coef * z;
                        }
                    }
                    off += d;
                }
            }
            inner.iter_mut().for_each(|x| *x /= n_s as f64);
            outer.push(&inner);
        }
        outer
    });
    let m = pairwise_reduce(chunks, Moments::merge).ok_or_else(|| Error::domain("n_z must be positive"))?;
    let se = m.std_err();
    let (target, target_se): (&[f64], Option<&[f64]>) = match reference {
        Reference::Exact(g) => (g.as_flat(), None),
        Reference::Smoothed(s) => (s.mean.as_flat(), Some(s.std_err.as_flat())),
    };
    let mut worst = 0.0f64;
    let mut worst_i = 0;
    for i in 0..dim {
        let s_ref = target_se.map_or(0.0, |s| s[i]);
        let s = (se[i] * se[i] + s_ref * s_ref).sqrt();
        let zscore = if s > 0.0 {
            (m.mean()[i] - target[i]).abs() / s
        } else if m.mean()[i] == target[i] {
            0.0
        } else {
            f64::INFINITY
        };
        if zscore > worst {
            worst = zscore;
            worst_i = i;
        }
    }
    Ok(ValidationReport::new("unbiasedness", 4.0, worst, 0.0, (n_z * n_s) as u64, Criterion::AtMost(0.0)).with_detail(
        format!(
            "max |mean - ref| / se over {dim} coords = {worst:.3} at coord {worst_i} (mean {:.6}, ref {:.6}, se {:.3e})",
            m.mean()[worst_i],
            target[worst_i],
            se[worst_i]
        ),
    ))
}

/// With `C = ∞` the conditional mean of the estimator given `z` equals the
/// dense ZO gradient exactly: `E[n_l] = K·p_l` cancels `1/(K·p_l)`. Checked
/// with `E[n_l]` summed from the Binomial pmf.
pub fn check_conditional_unbiasedness(ghat: &LayeredParams, probs: &[f64], k: usize) -> Result<ValidationReport> {
    let mean = conditional_mean(ghat, probs, k, f64::INFINITY)?;
    let err = max_abs_diff(mean.as_flat(), ghat.as_flat());
    Ok(
        ValidationReport::new("unbiasedness_conditional", 0.0, err, 0.0, 0, Criterion::Absolute(1e-12))
            .with_detail(format!("max |E[g~ | z] - g_zo| = {err:.3e}")),
    )
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Per-layer multipliers `m_l = w_l · n_l` of one draw.
fn multipliers(counts: &[u32], weights: &[f64], out: &mut [f64]) {
    for ((o, &c), &w) in out.iter_mut().zip(counts).zip(weights) {
        *o = w * c as f64;
    }
}

/// Empirical total variance of `X_l = √v_l · n_l / (K p_l)` against
/// `(1/K) Σ v_l (1/p_l − 1)`. Passes within 5% relative. The standard error
/// is from the spread of per-chunk estimates.
pub fn check_variance(v: &[f64], p: &[f64], k: usize, n_trials: usize, seed: u64, exec: Exec) -> Result<ValidationReport> {
    check_distribution(p)?;
    if v.len() != p.len() || v.iter().any(|&x| !(x >= 0.0)) {
        return Err(Error::domain("v must be non-negative and match p"));
    }
    let weights: Vec<f64> = p.iter().map(|&pl| 1.0 / (k as f64 * pl)).collect();
    let sqrt_v: Vec<f64> = v.iter().map(|x| x.sqrt()).collect();
    let l = p.len();
    let chunks = exec.map_chunks(n_trials, CHUNK, |c, n| {
        let mut rng = chunk_rng(seed, c);
        let mut counts = vec![0u32; l];
        let mut x = vec![0.0; l];
        let mut acc = Moments::new(l);
        for _ in 0..n {
            multinomial_into(p, k, &mut rng, &mut counts);
            multipliers(&counts, &weights, &mut x);
            x.iter_mut().zip(&sqrt_v).for_each(|(a, s)| *a *= s);
            acc.push(&x);
        }
        acc
    });
    let per_chunk: Vec<f64> = chunks.iter().map(|m| m.variance().iter().sum()).collect();
    let m = pairwise_reduce(chunks, Moments::merge).ok_or_else(|| Error::domain("n_trials must be positive"))?;
    let estimate: f64 = m.variance().iter().sum();
    let se = batch_se(&per_chunk);
    let formula = variance_formula(v, p, k);
    Ok(
        ValidationReport::new("variance_formula", formula, estimate, se, n_trials as u64, Criterion::Relative(0.05))
            .with_detail(format!("rel err {:.3e}", rel_err(estimate, formula))),
    )
}

fn rel_err(a: f64, b: f64) -> f64 {
    if b == 0.0 {
        a.abs()
    } else {
        (a - b).abs() / b.abs()
    }
}

fn batch_se(values: &[f64]) -> f64 {
    let mut s = Scalar::default();
    values.iter().for_each(|&v| s.push(v));
    if values.len() < 2 {
        return f64::NAN;
    }
    s.std_err()
}

/// `p* ∝ √v` beats every alternative and matches the Cauchy–Schwarz closed
/// form to 1e-12 (relative to `Σ v`).
pub fn check_variance_optimality(v: &[f64], k: usize, n_alternatives: usize, seed: u64) -> Result<ValidationReport> {
    if v.is_empty() || v.iter().any(|&x| !(x > 0.0)) {
        return Err(Error::domain("v must be strictly positive"));
    }
    let p_star = optimal_probs(v);
    let at_star = variance_formula(v, &p_star, k);
    let closed = optimal_variance(v, k);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut beaten = 0usize;
    let mut margin = f64::INFINITY;
    for _ in 0..n_alternatives {
        let alt = random_distribution(v.len(), &mut rng);
        let va = variance_formula(v, &alt, k);
        margin = margin.min(va - at_star);
        if at_star <= va {
            beaten += 1;
        }
    }
    let scale = v.iter().sum::<f64>().max(1.0);
    let gap = (at_star - closed).abs() / scale;
    let ok = gap <= 1e-12 && beaten == n_alternatives;
    Ok(ValidationReport::new("variance_optimality", closed, at_star, 0.0, n_alternatives as u64, Criterion::Absolute(1e-12 * scale))
        .with_detail(format!(
            "V(p*) - closed form = {gap:.3e} (scaled); p* no worse than {beaten}/{n_alternatives} alternatives, min margin {margin:.3e}"
        ))
        .and_flag(ok))
}

impl ValidationReport {
    fn and_flag(mut self, ok: bool) -> Self {
        self.pass &= ok;
        self
    }
}

/// Exponential spacings normalized: uniform on the simplex, floored away
/// from zero so every layer stays selectable.
pub fn random_distribution<R: Rng + ?Sized>(l: usize, rng: &mut R) -> Vec<f64> {
    let raw: Vec<f64> = (0..l).map(|_| -(1.0 - rng.random::<f64>()).ln() + 1e-3).collect();
    let s: f64 = raw.iter().sum();
    raw.iter().map(|x| x / s).collect()
}

/// Largest `𝓜_l` over a grid of `p ∈ (0, 1]`, against `C + 1`.
pub fn check_multiplier_grid(k: usize, clip: f64, n_grid: usize) -> ValidationReport {
    let worst = (1..=n_grid)
        .map(|i| second_moment_multiplier(i as f64 / n_grid as f64, k, clip))
        .fold(0.0, f64::max);
    ValidationReport::new(format!("second_moment_multiplier:C={clip}"), clip + 1.0, worst, 0.0, n_grid as u64, Criterion::AtMost(0.0))
        .with_detail(format!("max multiplier over {n_grid} grid points, K = {k}"))
}

/// Empirical `E‖g̃‖² = E[Σ_l (w_l n_l)² v_l]` against `(C + 1) Σ v_l`.
pub fn check_second_moment(
    v: &[f64],
    p: &[f64],
    k: usize,
    clip: f64,
    n_trials: usize,
    seed: u64,
    exec: Exec,
) -> Result<ValidationReport> {
    check_distribution(p)?;
    let weights: Vec<f64> = p.iter().map(|&pl| ipw_weight(k, pl, clip)).collect::<Result<_>>()?;
    let l = p.len();
    let chunks = exec.map_chunks(n_trials, CHUNK, |c, n| {
        let mut rng = chunk_rng(seed, c);
        let mut counts = vec![0u32; l];
        let mut x = vec![0.0; l];
        let mut acc = Scalar::default();
        for _ in 0..n {
            multinomial_into(p, k, &mut rng, &mut counts);
            multipliers(&counts, &weights, &mut x);
            acc.push(x.iter().zip(v).map(|(m, vl)| m * m * vl).sum());
        }
        acc
    });
    let s = pairwise_reduce(chunks, Scalar::merge).ok_or_else(|| Error::domain("n_trials must be positive"))?;
    let bound = (clip + 1.0) * v.iter().sum::<f64>();
    let analytic: f64 = p
        .iter()
        .zip(v)
        .map(|(&pl, vl)| second_moment_multiplier(pl, k, clip) * vl)
        .sum();
    Ok(
        ValidationReport::new(format!("second_moment_cap:C={clip}"), bound, s.mean(), s.std_err(), n_trials as u64, Criterion::AtMost(4.0))
            .with_detail(format!("exact second moment {analytic:.6e}")),
    )
}

/// Clipping bias: exact (pmf route vs closed form), the `G`-bound, zero when
/// nothing is clipped, and optionally a Monte Carlo confirmation.
#[allow(clippy::too_many_arguments)]
pub fn check_bias_bound(
    ghat: &LayeredParams,
    p: &[f64],
    k: usize,
    clip: f64,
    grad_bound: f64,
    mc: Option<(usize, u64)>,
    exec: Exec,
) -> Result<Vec<ValidationReport>> {
    check_distribution(p)?;
    let max_layer = ghat.layer_norms().into_iter().fold(0.0, f64::max);
    if grad_bound < max_layer {
        return Err(Error::domain(format!("G = {grad_bound} is below the largest layer norm {max_layer}")));
    }
    let expected = conditional_mean(ghat, p, k, clip)?;
    let mut via_pmf = ghat.clone();
    via_pmf
        .as_flat_mut()
        .iter_mut()
        .zip(expected.as_flat())
        .for_each(|(g, e)| *g -= e);
    let closed = clipping_bias_closed_form(ghat, p, k, clip);
    let route_gap = max_abs_diff(via_pmf.as_flat(), closed.as_flat());
    let bias_norm = closed.norm_sq().sqrt();
    let bound = bias_bound(p, k, clip, grad_bound);
    let nothing_clipped = p.iter().all(|&pl| pl >= 1.0 / (clip * k as f64));

    let mut out = vec![
        ValidationReport::new("bias_exact", 0.0, route_gap, 0.0, 0, Criterion::Absolute(1e-12))
            .with_detail("pmf-summed E[g~] vs closed-form (1 - min(1, CKp)) g"),
        ValidationReport::new("bias_bound", bound, bias_norm, 0.0, 0, Criterion::AtMost(0.0)).with_detail(format!(
            "||bias|| vs G * sum over clipped layers; nothing clipped: {nothing_clipped}"
        )),
    ];
    if nothing_clipped {
        out.push(
            ValidationReport::new("bias_zero_unclipped", 0.0, bias_norm, 0.0, 0, Criterion::Absolute(0.0))
                .with_detail("all p_l >= 1/(CK)"),
        );
    }
    if let Some((n_trials, seed)) = mc {
        let weights: Vec<f64> = p.iter().map(|&pl| ipw_weight(k, pl, clip)).collect::<Result<_>>()?;
        let l = p.len();
        let chunks = exec.map_chunks(n_trials, CHUNK, |c, n| {
            let mut rng = chunk_rng(seed, c);
            let mut counts = vec![0u32; l];
            let mut x = vec![0.0; l];
            let mut acc = Moments::new(l);
            for _ in 0..n {
                multinomial_into(p, k, &mut rng, &mut counts);
                multipliers(&counts, &weights, &mut x);
                acc.push(&x);
            }
            acc
        });
        let m = pairwise_reduce(chunks, Moments::merge).ok_or_else(|| Error::domain("n_trials must be positive"))?;
        // E[g~^(l)] = E[m_l] ĝ^(l): bias norm² = Σ (1 − E[m_l])² ‖ĝ^(l)‖²
        let norms = ghat.layer_norms();
        let mc_bias = m
            .mean()
            .iter()
            .zip(&norms)
            .map(|(em, g)| ((1.0 - em) * g).powi(2))
            .sum::<f64>()
            .sqrt();
        // delta-method SE of the norm
        let se = if mc_bias > 0.0 {
            m.mean()
                .iter()
                .zip(m.std_err())
                .zip(&norms)
                .map(|((em, s), g)| ((1.0 - em) * g * g * s / mc_bias).powi(2))
                .sum::<f64>()
                .sqrt()
        } else {
            m.std_err().iter().zip(&norms).map(|(s, g)| (s * g).powi(2)).sum::<f64>().sqrt()
        };
        out.push(
            ValidationReport::new("bias_mc", bias_norm, mc_bias, se, n_trials as u64, Criterion::WithinSe(4.0))
                .with_detail("Monte Carlo ||E[g~] - g|| vs analytic"),
        );
    }
    Ok(out)
}

/// Cross-validates the Monte Carlo machinery: for random `(p, K, C)`
/// instances the sampled mean and second moment of every multiplier
/// `w_l n_l` agree with the exact Binomial values within 4 SE.
pub fn check_mc_cross_validation(n_instances: usize, n_trials: usize, seed: u64, exec: Exec) -> Result<ValidationReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for inst in 0..n_instances {
        let l = rng.random_range(2..=12);
        let k = rng.random_range(1..=l);
        let clip = [1.0, 2.0, 4.0, 16.0, f64::INFINITY][rng.random_range(0..5)];
        let p = random_distribution(l, &mut rng);
        let weights: Vec<f64> = p.iter().map(|&pl| ipw_weight(k, pl, clip)).collect::<Result<_>>()?;
        let inst_seed = mix(seed, inst as u64);
        let chunks = exec.map_chunks(n_trials, CHUNK, |c, n| {
            let mut r = chunk_rng(inst_seed, c);
            let mut counts = vec![0u32; l];
            let mut x = vec![0.0; 2 * l];
            let mut acc = Moments::new(2 * l);
            for _ in 0..n {
                multinomial_into(&p, k, &mut r, &mut counts);
                for i in 0..l {
                    let m = weights[i] * counts[i] as f64;
                    x[i] = m;
                    x[l + i] = m * m;
                }
                acc.push(&x);
            }
            acc
        });
        let m = pairwise_reduce(chunks, Moments::merge).expect("n_trials >= 1");
        let se = m.std_err();
        for i in 0..l {
            let exact_mean = weights[i] * binomial_mean_by_pmf(k, p[i]);
            let exact_m2 = weights[i] * weights[i] * binomial_second_moment_by_pmf(k, p[i]);
            for (est, ex, s) in [(m.mean()[i], exact_mean, se[i]), (m.mean()[l + i], exact_m2, se[l + i])] {
                if s > 0.0 {
                    worst = worst.max((est - ex).abs() / s);
                }
            }
        }
    }
    Ok(
        ValidationReport::new("mc_cross_validation", 4.0, worst, 0.0, (n_instances * n_trials) as u64, Criterion::AtMost(0.0))
            .with_detail(format!("max z-score over {n_instances} random instances")),
    )
}

/// `‖∇f_μ − ∇f‖` from Monte Carlo smoothing against `μ d L_g / 2 + 3 SE`.
pub fn check_smoothing_gap<O: GradientOracle + ?Sized>(
    oracle: &O,
    params: &LayeredParams,
    mu: f64,
    smoothness_lg: f64,
    n_mc: usize,
    seed: u64,
    exec: Exec,
) -> Result<ValidationReport> {
    let sg = smoothed_grad_mc_with(oracle, params, mu, n_mc, seed, exec)?;
    let g = oracle.oracle_grad(params);
    let gap = sg
        .mean
        .as_flat()
        .iter()
        .zip(g.as_flat())
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        .sqrt();
    let se = sg.std_err.norm_sq().sqrt();
    let bound = sg.gap_bound(smoothness_lg);
    Ok(
        ValidationReport::new("smoothing_gap", bound, gap, se, n_mc as u64, Criterion::AtMost(3.0))
            .with_detail(format!("mu = {mu:e}, L_g = {smoothness_lg:.4}")),
    )
}

/// Gap between subspace smoothing (noise on `active` layers only) and full
/// smoothing, restricted to the active coordinates:
/// `‖E[∇_S f(θ + μ z_S)] − E[∇_S f(θ + μ z)]‖` with common noise.
///
/// Only the trend is checked: `gap(μ)/μ` at smaller `μ` must not exceed its
/// value at the largest `μ` (by more than 3 SE), so the gap shrinks at least
/// linearly.
pub fn check_subspace_smoothing<O: GradientOracle + ?Sized>(
    oracle: &O,
    params: &LayeredParams,
    active: &[usize],
    mus: &[f64],
    n_mc: usize,
    seed: u64,
    exec: Exec,
) -> Result<ValidationReport> {
    if mus.len() < 2 || mus.iter().any(|&m| !(m > 0.0)) || mus.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::domain("mus must be positive, decreasing and at least two"));
    }
    if n_mc == 0 || active.is_empty() || active.iter().any(|&l| l >= params.num_layers()) {
        return Err(Error::domain("need n_mc >= 1 and valid active layers"));
    }
    let idx: Vec<usize> = active
        .iter()
        .flat_map(|&l| {
            let off: usize = (0..l).map(|j| params.layer_size(j)).sum();
            off..off + params.layer_size(l)
        })
        .collect();
    let mut gaps = Vec::with_capacity(mus.len());
    for &mu in mus {
        let chunks = exec.map_chunks(n_mc, CHUNK, |c, n| {
            let mut acc = Moments::new(idx.len());
            let mut sub = params.clone();
            let mut full = params.clone();
            let mut diff = vec![0.0; idx.len()];
            for k in 0..n {
                let stream = NoiseStream::new(mix(seed, (c * CHUNK + k) as u64));
                sub.as_flat_mut().copy_from_slice(params.as_flat());
                full.as_flat_mut().copy_from_slice(params.as_flat());
                perturb_layers(&mut sub, active, mu, stream);
                crate::param_store::perturb_all(&mut full, mu, stream);
                let (gs, gf) = (oracle.oracle_grad(&sub), oracle.oracle_grad(&full));
                for (d, &i) in diff.iter_mut().zip(&idx) {
                    *d = gs.as_flat()[i] - gf.as_flat()[i];
                }
                acc.push(&diff);
            }
            acc
        });
        let m = pairwise_reduce(chunks, Moments::merge).expect("n_mc >= 1");
        let norm = m.mean().iter().map(|x| x * x).sum::<f64>().sqrt();
        // delta method for the norm of a mean vector
        let se = m
            .mean()
            .iter()
            .zip(m.std_err())
            .map(|(x, s)| (x * s).powi(2))
            .sum::<f64>()
            .sqrt()
            / norm.max(1e-300);
        gaps.push((mu, norm, se));
    }
    let (mu0, g0, se0) = gaps[0];
    let (mut worst, mut worst_se) = (f64::NEG_INFINITY, 0.0);
    for &(mu, g, se) in &gaps[1..] {
        let r = (g / mu) / (g0 / mu0);
        if r > worst {
            worst = r;
            worst_se = r * ((se / g).powi(2) + (se0 / g0).powi(2)).sqrt();
        }
    }
    let trail: Vec<String> = gaps.iter().map(|(mu, g, _)| format!("{mu:e}:{g:.3e}")).collect();
    Ok(
        ValidationReport::new("subspace_smoothing", 1.0, worst, worst_se, n_mc as u64, Criterion::AtMost(3.0))
            .with_detail(format!("max (gap/mu) relative to mu = {mu0:e}; gaps {}", trail.join(" "))),
    )
}

// ---------------------------------------------------------------------------
// Optimizer-level checks

/// Active-set frequencies of AdaLeZO with `γ = 1` against Random Sparse
/// (different seeds), two-sample chi-square; passes at `p > 0.01`.
pub fn check_gamma_one_matches_random(num_layers: usize, rho: f64, steps: usize, seed: u64) -> Result<ValidationReport> {
    let obj = ProbeObjective::even(num_layers * 2, num_layers, 0)?;
    let init = LayeredParams::gaussian(obj.layer_sizes(), 1.0, NoiseStream::new(seed))?;
    let bandit = BanditConfig {
        rho,
        gamma: 1.0,
        ..BanditConfig::default()
    };
    let base = RunConfig {
        steps,
        eta: 1e-3,
        bandit,
        eval_every: steps,
        ..RunConfig::default()
    };
    let ada = RunConfig {
        method: Method::Adalezo,
        master_seed: mix(seed, 1),
        ..base.clone()
    };
    let rnd = RunConfig {
        method: Method::RandomSparse,
        master_seed: mix(seed, 2),
        ..base
    };
    let a = active_set_histogram(&run(&obj, init.clone(), &ada)?);
    let b = active_set_histogram(&run(&obj, init, &rnd)?);
    let mut keys: Vec<&Vec<usize>> = a.keys().chain(b.keys()).collect();
    keys.sort();
    keys.dedup();
    let ca: Vec<u64> = keys.iter().map(|k| *a.get(*k).unwrap_or(&0)).collect();
    let cb: Vec<u64> = keys.iter().map(|k| *b.get(*k).unwrap_or(&0)).collect();
    let res = chi_square_homogeneity(&ca, &cb, 10).ok_or_else(|| Error::domain("too few categories for chi-square"))?;
    Ok(
        ValidationReport::new("degeneracy_gamma_one", 0.01, res.p_value, 0.0, steps as u64, Criterion::AtLeast).with_detail(
            format!("chi2 = {:.2}, dof = {}, {} distinct active sets", res.statistic, res.dof, keys.len()),
        ),
    )
}

fn active_set_histogram(out: &RunOutput) -> HashMap<Vec<usize>, u64> {
    let mut h = HashMap::new();
    for r in &out.reports {
        *h.entry(r.active.clone()).or_insert(0) += 1;
    }
    h
}

fn bitwise_same(a: &RunOutput, b: &RunOutput) -> bool {
    a.params.as_flat().iter().map(|x| x.to_bits()).eq(b.params.as_flat().iter().map(|x| x.to_bits()))
        && a.reports.len() == b.reports.len()
        && a.reports.iter().zip(&b.reports).all(|(x, y)| {
            x.loss_plus.to_bits() == y.loss_plus.to_bits()
                && x.loss_minus.to_bits() == y.loss_minus.to_bits()
                && x.scalar_grad.to_bits() == y.scalar_grad.to_bits()
                && x.loss.map(f64::to_bits) == y.loss.map(f64::to_bits)
        })
}

/// One-layer AdaLeZO reproduces MeZO bit for bit.
pub fn check_single_layer_matches_mezo(steps: usize, seed: u64) -> Result<ValidationReport> {
    let obj = QuadraticHetero::new(vec![1.5], vec![7])?;
    let init = LayeredParams::gaussian(&[7], 1.0, NoiseStream::new(seed))?;
    let base = RunConfig {
        steps,
        eta: 0.01,
        master_seed: seed,
        eval_every: 1,
        ..RunConfig::default()
    };
    let mezo = run(&obj, init.clone(), &RunConfig { method: Method::Mezo, ..base.clone() })?;
    let ada = run(&obj, init, &RunConfig { method: Method::Adalezo, ..base })?;
    Ok(ValidationReport::flag(
        "degeneracy_single_layer",
        bitwise_same(&mezo, &ada),
        steps as u64,
        "L = 1 AdaLeZO vs MeZO, losses and parameters bitwise",
    ))
}

/// `ρ = 1` dense mode (sparse code path, every layer once, unit weight)
/// reproduces the MeZO fast path bit for bit.
pub fn check_dense_mode_matches_mezo(steps: usize, seed: u64) -> Result<ValidationReport> {
    let obj = QuadraticHetero::new(vec![0.5, 1.0, 2.0, 4.0], vec![3, 5, 2, 6])?;
    let init = LayeredParams::gaussian(obj.layer_sizes(), 1.0, NoiseStream::new(seed))?;
    let bandit = BanditConfig {
        rho: 1.0,
        ..BanditConfig::default()
    };
    let base = RunConfig {
        steps,
        eta: 0.01,
        bandit,
        master_seed: seed,
        eval_every: 1,
        ..RunConfig::default()
    };
    let mezo = run(&obj, init.clone(), &RunConfig { method: Method::Mezo, ..base.clone() })?;
    let ada = run(&obj, init.clone(), &RunConfig { method: Method::Adalezo, ..base.clone() })?;
    let rnd = run(&obj, init, &RunConfig { method: Method::RandomSparse, ..base })?;
    Ok(ValidationReport::flag(
        "degeneracy_dense_mode",
        bitwise_same(&mezo, &ada) && bitwise_same(&mezo, &rnd),
        steps as u64,
        "rho = 1 sparse path vs MeZO fast path, bitwise",
    ))
}

/// Two runs of the same configuration give bit-identical trajectories.
pub fn check_determinism<O: Objective + ?Sized>(obj: &O, init: &LayeredParams, cfg: &RunConfig) -> Result<ValidationReport> {
    let a = run(obj, init.clone(), cfg)?;
    let b = run(obj, init.clone(), cfg)?;
    let same = bitwise_same(&a, &b) && a.reports.iter().zip(&b.reports).all(|(x, y)| x.same_outcome(y));
    Ok(ValidationReport::flag(
        format!("determinism:{}", cfg.method),
        same,
        cfg.steps as u64,
        "repeat run, bitwise",
    ))
}

/// The `+μ, −2μ, +μ` cycle leaves inactive layers bit-identical and active
/// coordinates within `4 ε (|θ_i| + μ |z_i|)`. Reports the worst ratio of
/// drift to tolerance.
pub fn check_restore(sizes: &[usize], active: &[usize], mu: f64, trials: usize, seed: u64) -> Result<ValidationReport> {
    let mut worst = 0.0f64;
    let mut inactive_ok = true;
    for k in 0..trials {
        let orig = LayeredParams::gaussian(sizes, 2.0, NoiseStream::new(mix(seed, k as u64)))?;
        let stream = NoiseStream::new(mix(seed ^ 0xFEED, k as u64));
        let mut p = orig.clone();
        perturb_layers(&mut p, active, mu, stream);
        perturb_layers(&mut p, active, -2.0 * mu, stream);
        perturb_layers(&mut p, active, mu, stream);
        for (l, &n) in sizes.iter().enumerate() {
            if active.contains(&l) {
                let z = stream.gaussian_noise(l, n);
                for ((a, b), zi) in p.layer(l).iter().zip(orig.layer(l)).zip(z) {
                    let tol = 4.0 * f64::EPSILON * (b.abs() + mu * zi.abs());
                    worst = worst.max((a - b).abs() / tol);
                }
            } else {
                inactive_ok &= p.layer(l).iter().zip(orig.layer(l)).all(|(a, b)| a.to_bits() == b.to_bits());
            }
        }
    }
    Ok(
        ValidationReport::new("restore", 1.0, worst, 0.0, trials as u64, Criterion::AtMost(0.0))
            .with_detail(format!("max drift / tolerance; inactive layers bit-identical: {inactive_ok}"))
            .and_flag(inactive_ok),
    )
}

/// A quadratic in which `n_hot` of `num_layers` layers carry `hot_mass` of
/// the squared initial gradient norm. Hot and cold layers have their own
/// curvature; the split of gradient mass is set through the initial layer
/// norms, so with equal curvatures it persists along the whole expected
/// trajectory.
#[derive(Debug, Clone)]
pub struct HeteroQuadratic {
    pub objective: QuadraticHetero,
    pub init: LayeredParams,
    pub hot_layers: Vec<usize>,
}

impl HeteroQuadratic {
    pub fn new(
        num_layers: usize,
        per_layer: usize,
        n_hot: usize,
        hot_mass: f64,
        (hot_curv, cold_curv): (f64, f64),
        init_seed: u64,
    ) -> Result<Self> {
        if n_hot == 0 || n_hot >= num_layers || !(hot_mass > 0.0 && hot_mass < 1.0) {
            return Err(Error::domain("need 0 < n_hot < L and hot mass in (0,1)"));
        }
        let n_cold = (num_layers - n_hot) as f64;
        // hot ‖θ_l‖² = d_l; cold r² from n_h a_h² d_l / (n_h a_h² d_l + n_c a_c² r²) = m
        let hot_sq = per_layer as f64;
        let cold_sq = n_hot as f64 * hot_curv * hot_curv * hot_sq * (1.0 - hot_mass) / (hot_mass * n_cold * cold_curv * cold_curv);
        // spread hot layers through the stack
        let hot_layers: Vec<usize> = (0..n_hot).map(|i| (2 * i + 1) * num_layers / (2 * n_hot)).collect();
        let is_hot = |l: usize| hot_layers.contains(&l);
        let scales: Vec<f64> = (0..num_layers)
            .map(|l| if is_hot(l) { hot_curv } else { cold_curv })
            .collect();
        let sizes = vec![per_layer; num_layers];
        let objective = QuadraticHetero::new(scales, sizes.clone())?;
        let mut init = LayeredParams::gaussian(&sizes, 1.0, NoiseStream::new(init_seed))?;
        for l in 0..num_layers {
            let n = init.layer(l).iter().map(|x| x * x).sum::<f64>().sqrt();
            let target = if is_hot(l) { hot_sq } else { cold_sq }.sqrt();
            init.layer_mut(l).iter_mut().for_each(|x| *x *= target / n);
        }
        Ok(Self {
            objective,
            init,
            hot_layers,
        })
    }

    /// The 16-layer, d = 160 instance with 3 layers carrying 95% of the mass.
    pub fn standard(init_seed: u64) -> Self {
        Self::new(16, 10, 3, 0.95, HETERO_CURVATURES, init_seed).expect("valid standard instance")
    }

    pub fn hot_fraction(&self, params: &LayeredParams) -> f64 {
        let g = self.objective.oracle_grad(params);
        let norms = g.layer_norms();
        let total: f64 = norms.iter().map(|n| n * n).sum();
        self.hot_layers.iter().map(|&l| norms[l] * norms[l]).sum::<f64>() / total
    }
}

/// Mean `‖g̃ − ∇f‖²` over single-probe estimates at `params`, using the real
/// step code with `η = 1` on scratch copies. For objectives where the
/// estimator is unbiased this is its variance.
pub fn estimator_variance_at<O: GradientOracle + ?Sized>(
    obj: &O,
    params: &LayeredParams,
    cfg: &RunConfig,
    n: usize,
    seed: u64,
    exec: Exec,
) -> Result<f64> {
    let g = obj.oracle_grad(params);
    let probe_cfg = RunConfig {
        eta: 1.0,
        schedule: LrSchedule::Constant,
        steps: 1,
        ..cfg.clone()
    };
    let per_trial = exec.map(n, |i| -> Result<f64> {
        let mut c = probe_cfg.clone();
        c.master_seed = mix(seed, i as u64);
        let mut opt = Optimizer::new(c, params.num_layers())?;
        let mut p = params.clone();
        opt.step(&mut p, obj, 0)?;
        Ok(params
            .as_flat()
            .iter()
            .zip(p.as_flat())
            .zip(g.as_flat())
            .map(|((a, b), gi)| (a - b - gi).powi(2))
            .sum())
    });
    let vals: Vec<f64> = per_trial.into_iter().collect::<Result<_>>()?;
    Ok(vals.iter().sum::<f64>() / n as f64)
}

/// Mean `‖∇f(θ_T)‖²` over seeds against a tenth of `‖∇f(θ_0)‖²`, per method.
pub fn check_convergence<O: GradientOracle + ?Sized>(
    obj: &O,
    init: &LayeredParams,
    configs: &[RunConfig],
    seeds: &[u64],
    exec: Exec,
) -> Result<Vec<ValidationReport>> {
    let g0 = obj.oracle_grad(init).norm_sq();
    let mut out = Vec::new();
    for cfg in configs {
        let finals = exec.map(seeds.len(), |i| -> Result<f64> {
            let c = RunConfig {
                master_seed: seeds[i],
                ..cfg.clone()
            };
            let o = run(obj, init.clone(), &c)?;
            Ok(obj.oracle_grad(&o.params).norm_sq())
        });
        let finals: Vec<f64> = finals.into_iter().collect::<Result<_>>()?;
        let mut s = Scalar::default();
        finals.iter().for_each(|&v| s.push(v));
        let sigma2 = estimator_variance_at(obj, init, cfg, 2000, mix(seeds[0], 99), exec)?;
        let mut r = ValidationReport::new(
            format!("convergence:{}", cfg.method),
            0.1 * g0,
            s.mean(),
            s.std_err(),
            (cfg.steps * seeds.len()) as u64,
            Criterion::AtMost(0.0),
        )
        .with_detail(format!(
            "eta_eff = {:.3e}, T = {}, |grad f(theta_0)|^2 = {g0:.4e}, ratio = {:.4}",
            cfg.effective_eta(),
            cfg.steps,
            s.mean() / g0
        ));
        r.variance_sigma2 = Some(sigma2);
        out.push(r);
    }
    Ok(out)
}

/// Final losses of two configurations on matched seeds, and the number of
/// seeds where the first is strictly lower. One-sided sign test.
pub fn check_adaptive_advantage<O: Objective + ?Sized>(
    obj: &O,
    init: &LayeredParams,
    adaptive: &RunConfig,
    baseline: &RunConfig,
    seeds: &[u64],
    min_wins: usize,
    exec: Exec,
) -> Result<ValidationReport> {
    if adaptive.steps != baseline.steps {
        return Err(Error::domain("both methods need the same forward-pass budget"));
    }
    let pairs = exec.map(seeds.len(), |i| -> Result<(f64, f64)> {
        let a = run(obj, init.clone(), &RunConfig { master_seed: seeds[i], ..adaptive.clone() })?;
        let b = run(obj, init.clone(), &RunConfig { master_seed: seeds[i], ..baseline.clone() })?;
        Ok((a.final_loss(), b.final_loss()))
    });
    let pairs: Vec<(f64, f64)> = pairs.into_iter().collect::<Result<_>>()?;
    let wins = pairs.iter().filter(|(a, b)| a < b).count();
    let p = sign_test_p(wins as u64, pairs.len() as u64);
    let mean_a = pairs.iter().map(|x| x.0).sum::<f64>() / pairs.len() as f64;
    let mean_b = pairs.iter().map(|x| x.1).sum::<f64>() / pairs.len() as f64;
    Ok(ValidationReport::new(
        "adaptive_advantage",
        min_wins as f64,
        wins as f64,
        0.0,
        seeds.len() as u64,
        Criterion::AtLeast,
    )
    .with_detail(format!(
        "wins {wins}/{}, sign-test p = {p:.4}, mean final loss {mean_a:.4e} vs {mean_b:.4e}",
        pairs.len()
    ))
    .and_flag(p < 0.05))
}

/// Correlation between sampling probabilities and oracle gradient norms at
/// one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrelationReport {
    pub step: usize,
    /// Pearson r of `p_t` and `‖∇^(l) f(θ_t)‖`; `None` if either is constant.
    pub instantaneous: Option<f64>,
    /// Pearson r of `p̄_t = mean_{s≤t} p_s` and the time-averaged norms.
    pub cumulative: Option<f64>,
}

/// Instantaneous and cumulative correlations along a trajectory.
/// `probs[t]` and `norms[t]` must refer to the same `θ_t`.
pub fn track_correlation(probs: &[Vec<f64>], norms: &[Vec<f64>]) -> Result<Vec<CorrelationReport>> {
    if probs.len() != norms.len() {
        return Err(Error::Dimension {
            expected: probs.len(),
            got: norms.len(),
        });
    }
    let Some(first) = probs.first() else {
        return Ok(Vec::new());
    };
    let l = first.len();
    let mut sum_p = vec![0.0; l];
    let mut sum_n = vec![0.0; l];
    let mut out = Vec::with_capacity(probs.len());
    for (t, (p, n)) in probs.iter().zip(norms).enumerate() {
        sum_p.iter_mut().zip(p).for_each(|(s, x)| *s += x);
        sum_n.iter_mut().zip(n).for_each(|(s, x)| *s += x);
        out.push(CorrelationReport {
            step: t,
            instantaneous: pearson(p, n),
            cumulative: pearson(&sum_p, &sum_n),
        });
    }
    Ok(out)
}

/// Runs `cfg` (with probability recording forced on) and tracks the
/// correlation against the oracle's per-layer gradient norms.
pub fn run_with_correlation<O: GradientOracle + ?Sized>(
    oracle: &O,
    init: LayeredParams,
    cfg: &RunConfig,
) -> Result<(RunOutput, Vec<CorrelationReport>)> {
    let cfg = RunConfig {
        record_probs: true,
        ..cfg.clone()
    };
    let mut norms = vec![oracle.oracle_grad(&init).layer_norms()];
    let out = run_observed(oracle, init, &cfg, |p, _| {
        norms.push(oracle.oracle_grad(p).layer_norms());
    })?;
    norms.pop();
    let probs: Vec<Vec<f64>> = out
        .reports
        .iter()
        .map(|r| r.probs.clone().expect("probabilities recorded"))
        .collect();
    let corr = track_correlation(&probs, &norms)?;
    Ok((out, corr))
}

/// Median (over seeds) cumulative correlation at `late_step` must exceed
/// `threshold` and the median at `early_step`.
pub fn check_correlation_recovery<O: GradientOracle + ?Sized>(
    oracle: &O,
    init: &LayeredParams,
    cfg: &RunConfig,
    seeds: &[u64],
    early_step: usize,
    threshold: f64,
    exec: Exec,
) -> Result<Vec<ValidationReport>> {
    let late_step = cfg.steps - 1;
    if early_step >= late_step {
        return Err(Error::domain("early step must precede the end of the run"));
    }
    let per_seed = exec.map(seeds.len(), |i| -> Result<(f64, f64)> {
        let c = RunConfig {
            master_seed: seeds[i],
            ..cfg.clone()
        };
        let (_, corr) = run_with_correlation(oracle, init.clone(), &c)?;
        let at = |t: usize| corr[t].cumulative.unwrap_or(f64::NAN);
        Ok((at(early_step), at(late_step)))
    });
    let per_seed: Vec<(f64, f64)> = per_seed.into_iter().collect::<Result<_>>()?;
    let early = median(&per_seed.iter().map(|x| x.0).collect::<Vec<_>>()).unwrap_or(f64::NAN);
    let late = median(&per_seed.iter().map(|x| x.1).collect::<Vec<_>>()).unwrap_or(f64::NAN);
    Ok(vec![
        ValidationReport::new("correlation_recovery:level", threshold, late, 0.0, seeds.len() as u64, Criterion::AtLeast)
            .with_detail(format!("median cumulative r at step {}", late_step + 1)),
        ValidationReport::new("correlation_recovery:growth", early, late, 0.0, seeds.len() as u64, Criterion::AtLeast)
            .with_detail(format!("median cumulative r at step {} vs step {}", late_step + 1, early_step + 1)),
    ])
}

/// Median per-step perturbation + update time of AdaLeZO over MeZO's on a
/// forward pass that costs next to nothing.
pub fn check_overhead_ratio(total_dim: usize, num_layers: usize, rho: f64, steps: usize, max_ratio: f64, seed: u64) -> Result<ValidationReport> {
    let obj = ProbeObjective::even(total_dim, num_layers, 0)?;
    // a non-zero point so that L₊ ≠ L₋ and every update does real work
    let init = LayeredParams::gaussian(obj.layer_sizes(), 1.0, NoiseStream::new(seed))?;
    let base = RunConfig {
        steps,
        eta: 1e-6,
        master_seed: seed,
        eval_every: steps,
        bandit: BanditConfig {
            rho,
            ..BanditConfig::default()
        },
        ..RunConfig::default()
    };
    let overhead = |m: Method| -> Result<f64> {
        let out = run(&obj, init.clone(), &RunConfig { method: m, ..base.clone() })?;
        let v: Vec<f64> = out.reports.iter().map(|r| r.t_perturb + r.t_update).collect();
        Ok(median(&v).unwrap_or(f64::NAN))
    };
    // warm caches and page in the parameter buffer once
    overhead(Method::Mezo)?;
    let mezo = overhead(Method::Mezo)?;
    let ada = overhead(Method::Adalezo)?;
    Ok(
        ValidationReport::new("overhead_ratio", max_ratio, ada / mezo, 0.0, steps as u64, Criterion::AtMost(0.0)).with_detail(
            format!("median perturb+update: adalezo {ada:.3e}s, mezo {mezo:.3e}s (d = {total_dim}, L = {num_layers}, rho = {rho})"),
        ),
    )
}

/// Median MeZO perturbation time at each dimension, and whether every
/// consecutive ratio is within `slack` of proportional.
pub fn check_perturb_linear_scaling(dims: &[usize], num_layers: usize, steps: usize, slack: f64, seed: u64) -> Result<ValidationReport> {
    let mut times = Vec::with_capacity(dims.len());
    for &d in dims {
        let obj = ProbeObjective::even(d, num_layers, 0)?;
        let init = LayeredParams::zeros(obj.layer_sizes())?;
        let cfg = RunConfig {
            method: Method::Mezo,
            steps,
            eta: 1e-6,
            master_seed: seed,
            eval_every: steps,
            ..RunConfig::default()
        };
        run(&obj, init.clone(), &RunConfig { steps: 3, ..cfg.clone() })?;
        let out = run(&obj, init, &cfg)?;
        let v: Vec<f64> = out.reports.iter().map(|r| r.t_perturb).collect();
        times.push(median(&v).unwrap_or(f64::NAN));
    }
    let mut worst = 1.0f64;
    let mut detail = String::new();
    for i in 1..dims.len() {
        let expected = dims[i] as f64 / dims[i - 1] as f64;
        let observed = times[i] / times[i - 1];
        let off = (observed / expected).max(expected / observed);
        worst = worst.max(off);
        detail.push_str(&format!("{}->{}: x{observed:.2} (linear x{expected:.0}); ", dims[i - 1], dims[i]));
    }
    Ok(ValidationReport::new("perturb_linear_scaling", slack, worst, 0.0, (steps * dims.len()) as u64, Criterion::AtMost(0.0))
        .with_detail(detail))
}

// ---------------------------------------------------------------------------
// Named claims with desk-scale default parameters

/// Every claim id [`run_claim`] understands.
pub const CLAIMS: &[(&str, &str)] = &[
    ("unbiasedness", "two-level MC mean of the sparse estimator equals the gradient (C = inf)"),
    ("unbiasedness_conditional", "E[g~ | z] = g_zo exactly via Binomial means (C = inf)"),
    ("variance_formula", "conditional variance equals (1/K) sum v_l (1/p_l - 1)"),
    ("variance_optimality", "p* ~ sqrt(v) minimizes the variance; closed form matches"),
    ("second_moment_multiplier", "per-layer multiplier w^2 E[n^2] <= C + 1 on a grid of p"),
    ("second_moment_cap", "E||g~||^2 <= (C + 1) ||g_zo||^2"),
    ("bias_bound", "clipping bias: exact form, G-bound, zero when unclipped, MC check"),
    ("mc_cross_validation", "MC multiplier moments agree with exact Binomial moments"),
    ("smoothing_gap", "||grad f_mu - grad f|| <= mu d L_g / 2 (+3 SE)"),
    ("subspace_smoothing", "subspace vs full smoothing gap shrinks at least linearly in mu"),
    ("degeneracy_gamma_one", "gamma = 1 AdaLeZO matches Random Sparse active-set frequencies"),
    ("degeneracy_single_layer", "L = 1 AdaLeZO equals MeZO bitwise"),
    ("degeneracy_dense_mode", "rho = 1 dense mode equals MeZO bitwise"),
    ("convergence", "all methods reduce mean ||grad||^2 tenfold with eta = 1/sqrt(T)"),
    ("adaptive_advantage", "AdaLeZO beats Random Sparse at equal forward budget on >= 9/10 seeds"),
    ("correlation_recovery", "cumulative r(p_bar, oracle norms) > 0.7 at T and grows from T/10"),
    ("overhead_ratio", "AdaLeZO perturb+update time <= 0.4x MeZO's at d = 1e6"),
    ("perturb_linear_scaling", "MeZO perturbation time linear in d within 1.5x"),
    ("determinism", "repeated runs are bit-identical"),
    ("restore", "perturb/restore cycle within rounding tolerance"),
];

/// Learning rate used by the standard heterogeneous-quadratic experiments.
pub const HETERO_ETA: f64 = 0.015;

/// Learning rate of the correlation-recovery run. Larger rates drive the
/// loss close to zero within the run, where `|ĝ|` and with it `Q` lose
/// scale and the policy flattens back towards uniform.
pub const CORRELATION_ETA: f64 = 1e-3;

/// Hot and cold curvatures of [`HeteroQuadratic::standard`].
pub const HETERO_CURVATURES: (f64, f64) = (1.0, 1.0);

/// Standard run configuration on [`HeteroQuadratic::standard`].
pub fn hetero_run_config(method: Method, steps: usize) -> RunConfig {
    RunConfig {
        method,
        steps,
        eta: HETERO_ETA,
        mu: 1e-3,
        eval_every: steps,
        ..RunConfig::default()
    }
}

/// Runs one claim with its desk-scale default parameters.
pub fn run_claim(id: &str, seed: u64, exec: Exec) -> Result<Vec<ValidationReport>> {
    match id {
        "unbiasedness" => {
            let (obj, theta, setup) = unbiasedness_instance(seed)?;
            let g = obj.oracle_grad(&theta);
            Ok(vec![check_unbiasedness(&obj, &theta, 1e-3, &setup, Reference::Exact(&g), 5_000, 200, seed, exec)?])
        }
        "unbiasedness_conditional" => {
            let (obj, theta, setup) = unbiasedness_instance(seed)?;
            let ghat = dense_zo_gradient(&obj, &theta, 1e-3, NoiseStream::new(seed))?;
            Ok(vec![check_conditional_unbiasedness(&ghat, &setup.probs, setup.k)?])
        }
        "variance_formula" => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..20)
                .map(|i| {
                    let (v, p, k) = random_variance_instance(&mut rng);
                    check_variance(&v, &p, k, 1_000_000, mix(seed, i), exec).map(|r| ValidationReport {
                        claim: format!("variance_formula:{i}"),
                        ..r
                    })
                })
                .collect()
        }
        "variance_optimality" => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..100)
                .map(|i| {
                    let (v, _, k) = random_variance_instance(&mut rng);
                    check_variance_optimality(&v, k, 100, mix(seed, i))
                })
                .collect()
        }
        "second_moment_multiplier" => Ok([1.0, 4.0, 16.0]
            .iter()
            .flat_map(|&c| [1usize, 3, 6].map(|k| check_multiplier_grid(k, c, 1000)))
            .collect()),
        "second_moment_cap" => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (v, p, k) = random_variance_instance(&mut rng);
            [1.0, 4.0, 16.0]
                .iter()
                .map(|&c| check_second_moment(&v, &p, k, c, 1_000_000, seed, exec))
                .collect()
        }
        "bias_bound" => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let sizes = [4usize; 8];
            let ghat = LayeredParams::gaussian(&sizes, 1.0, NoiseStream::new(seed))?;
            let p = random_distribution(8, &mut rng);
            let g = ghat.layer_norms().into_iter().fold(0.0, f64::max);
            check_bias_bound(&ghat, &p, 3, 1.0, g, Some((1_000_000, seed)), exec)
        }
        "mc_cross_validation" => Ok(vec![check_mc_cross_validation(20, 200_000, seed, exec)?]),
        "smoothing_gap" => {
            let mlp = crate::objectives::mlp_tiny(vec![3, 4, 2], seed)?;
            let theta = LayeredParams::gaussian(mlp.layer_sizes(), 0.5, NoiseStream::new(seed))?;
            let lg = crate::objectives::estimate_smoothness(&mlp, &theta, 0.5, 64, seed);
            Ok(vec![check_smoothing_gap(&mlp, &theta, 1e-2, lg, 200_000, seed, exec)?])
        }
        "subspace_smoothing" => {
            let mlp = crate::objectives::mlp_tiny(vec![3, 4, 2], seed)?;
            let theta = LayeredParams::gaussian(mlp.layer_sizes(), 0.5, NoiseStream::new(seed))?;
            Ok(vec![check_subspace_smoothing(&mlp, &theta, &[0], &[0.2, 0.1, 0.05, 0.025], 20_000, seed, exec)?])
        }
        "degeneracy_gamma_one" => Ok(vec![check_gamma_one_matches_random(8, 0.4, 100_000, seed)?]),
        "degeneracy_single_layer" => Ok(vec![check_single_layer_matches_mezo(200, seed)?]),
        "degeneracy_dense_mode" => Ok(vec![check_dense_mode_matches_mezo(200, seed)?]),
        "convergence" => {
            let h = HeteroQuadratic::standard(seed);
            let steps = 20_000;
            let configs: Vec<RunConfig> = [Method::Mezo, Method::Adalezo, Method::RandomSparse]
                .into_iter()
                .map(|m| RunConfig {
                    eta: 1.0,
                    schedule: LrSchedule::InvSqrtSteps,
                    ..hetero_run_config(m, steps)
                })
                .collect();
            let seeds: Vec<u64> = (0..5).map(|i| mix(seed, i)).collect();
            check_convergence(&h.objective, &h.init, &configs, &seeds, exec)
        }
        "adaptive_advantage" => {
            let h = HeteroQuadratic::standard(seed);
            let seeds: Vec<u64> = (0..10).map(|i| mix(seed, i)).collect();
            let steps = 1_000;
            Ok(vec![check_adaptive_advantage(
                &h.objective,
                &h.init,
                &hetero_run_config(Method::Adalezo, steps),
                &hetero_run_config(Method::RandomSparse, steps),
                &seeds,
                9,
                exec,
            )?])
        }
        "correlation_recovery" => {
            let h = HeteroQuadratic::standard(seed);
            let seeds: Vec<u64> = (0..5).map(|i| mix(seed, i)).collect();
            let cfg = RunConfig {
                eta: CORRELATION_ETA,
                ..hetero_run_config(Method::Adalezo, 5_000)
            };
            check_correlation_recovery(&h.objective, &h.init, &cfg, &seeds, 499, 0.7, exec)
        }
        "overhead_ratio" => Ok(vec![check_overhead_ratio(1_000_000, 32, 0.2, 100, 0.4, seed)?]),
        "perturb_linear_scaling" => Ok(vec![check_perturb_linear_scaling(&[10_000, 100_000, 1_000_000], 32, 30, 1.5, seed)?]),
        "determinism" => {
            let h = HeteroQuadratic::standard(seed);
            [Method::Mezo, Method::Adalezo, Method::RandomSparse]
                .into_iter()
                .map(|m| {
                    let cfg = RunConfig {
                        master_seed: seed,
                        record_probs: true,
                        eval_every: 7,
                        ..hetero_run_config(m, 500)
                    };
                    check_determinism(&h.objective, &h.init, &cfg)
                })
                .collect()
        }
        "restore" => Ok(vec![check_restore(&[5, 17, 3, 64], &[0, 2, 3], 1e-3, 50, seed)?]),
        other => Err(Error::config(format!("unknown claim id {other:?}"))),
    }
}

/// The 4-layer, d = 20 quadratic with a fixed non-uniform policy
/// (`γ = 0.1, ρ = 0.5`, so `K = 2`, no clipping).
pub fn unbiasedness_instance(seed: u64) -> Result<(QuadraticHetero, LayeredParams, SamplingSetup)> {
    let obj = QuadraticHetero::new(vec![0.5, 1.0, 2.0, 4.0], vec![5; 4])?;
    let theta = LayeredParams::gaussian(&[5; 4], 1.0, NoiseStream::new(mix(seed, 17)))?;
    let cfg = BanditConfig {
        rho: 0.5,
        gamma: 0.1,
        clip: f64::INFINITY,
        ..BanditConfig::default()
    };
    let setup = SamplingSetup::from_bandit(&[0.0, 0.3, 0.6, 0.9], &cfg)?;
    Ok((obj, theta, setup))
}

/// Dense ZO gradient `((L₊ − L₋)/2μ)·z` for one noise draw.
pub fn dense_zo_gradient<O: Objective + ?Sized>(obj: &O, params: &LayeredParams, mu: f64, stream: NoiseStream) -> Result<LayeredParams> {
    let mut p = params.clone();
    crate::param_store::perturb_all(&mut p, mu, stream);
    let lp = obj.loss(&p);
    crate::param_store::perturb_all(&mut p, -2.0 * mu, stream);
    let lm = obj.loss(&p);
    let s = crate::estimator::projected_scalar(lp, lm, mu)?;
    let spec = crate::estimator::SparseGradSpec::dense(params.num_layers(), s, stream.base_seed());
    spec.assemble(&params.layer_sizes())
}

/// Random `(v, p, K)` with `2 ≤ L ≤ 10`, `v_l ∈ (0.05, 5)`, `p` floored
/// through a `γ = 0.2` uniform mix.
pub fn random_variance_instance<R: Rng + ?Sized>(rng: &mut R) -> (Vec<f64>, Vec<f64>, usize) {
    let l = rng.random_range(2..=10);
    let v: Vec<f64> = (0..l).map(|_| 0.05 + 4.95 * rng.random::<f64>()).collect();
    let raw = random_distribution(l, rng);
    let p: Vec<f64> = raw.iter().map(|x| 0.8 * x + 0.2 / l as f64).collect();
    let k = rng.random_range(1..=l);
    (v, p, k)
}

/// Draw statistics helper: the active set and counts of a draw as a key.
pub fn draw_key(d: &SampleDraw) -> (Vec<usize>, Vec<u32>) {
    (d.active.clone(), d.counts.clone())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn criterion_semantics() {
        assert!(Criterion::Absolute(1e-12).passes(1.0, 1.0 + 1e-13, 0.0));
        assert!(!Criterion::Absolute(1e-12).passes(1.0, 1.0 + 1e-11, 0.0));
        assert!(Criterion::WithinSe(4.0).passes(1.0, 1.3, 0.1));
        assert!(!Criterion::WithinSe(4.0).passes(1.0, 1.5, 0.1));
        assert!(Criterion::Relative(0.05).passes(1.04, 1.0, 0.0));
        assert!(Criterion::AtMost(4.0).passes(5.3, 5.0, 0.1));
        assert!(!Criterion::AtMost(0.0).passes(f64::NAN, 5.0, 0.1));
        assert!(Criterion::AtLeast.passes(0.8, 0.7, 0.0));
    }

    #[test]
    fn variance_examples() {
        assert!((variance_formula(&[1.0, 4.0], &[0.5, 0.5], 2) - 2.5).abs() < 1e-15);
        let p_star = optimal_probs(&[1.0, 4.0]);
        assert!((p_star[0] - 1.0 / 3.0).abs() < 1e-15);
        let at_star = variance_formula(&[1.0, 4.0], &p_star, 2);
        assert!((at_star - 2.0).abs() < 1e-12);
        assert!((optimal_variance(&[1.0, 4.0], 2) - 2.0).abs() < 1e-15);
        assert_eq!(variance_formula(&[3.0], &[1.0], 4), 0.0);
    }

    #[test]
    fn variance_example_by_monte_carlo() {
        let r = check_variance(&[1.0, 4.0], &[1.0 / 3.0, 2.0 / 3.0], 2, 400_000, 5, Exec::default()).unwrap();
        assert!(r.pass, "{r:?}");
        assert!((r.bound - 2.0).abs() < 1e-12);
    }

    #[test]
    fn multiplier_values() {
        // p = 1, K = 1: w = 1, n = 1
        assert_eq!(second_moment_multiplier(1.0, 1, 4.0), 1.0);
        // clipping boundary p = 1/(CK): w = C, E[n²] = 1/C − 1/(C²K) + 1/C²
        let (c, k) = (4.0, 3usize);
        let p = 1.0 / (c * k as f64);
        let m = second_moment_multiplier(p, k, c);
        let expect = c * c * (1.0 / c * (1.0 - p) + 1.0 / (c * c));
        assert!((m - expect).abs() < 1e-12 && m <= c + 1.0);
        // deep in the clipped regime 𝓜 ≈ C² K p → 0
        assert!(second_moment_multiplier(1e-9, k, c) < 1e-6);
        for c in [1.0, 4.0, 16.0] {
            assert!(check_multiplier_grid(6, c, 1000).pass);
        }
    }

    #[test]
    fn bias_examples() {
        let (c, k) = (4.0, 2usize);
        // everything unclipped
        assert_eq!(bias_bound(&[0.5, 0.5], k, c, 1.0), 0.0);
        // p = 1/(2CK): weight 1/2
        let p = 1.0 / (2.0 * c * k as f64);
        assert!((bias_bound(&[p, 1.0 - p], k, c, 1.0) - 0.5).abs() < 1e-15);
        let g = LayeredParams::partition(vec![2.0, 3.0], &[1, 1]).unwrap();
        let b = clipping_bias_closed_form(&g, &[p, 1.0 - p], k, c);
        assert!((b.as_flat()[0] - 1.0).abs() < 1e-15);
        assert_eq!(b.as_flat()[1], 0.0);
    }

    #[test]
    fn unclipped_conditional_mean_is_exact() {
        let g = LayeredParams::gaussian(&[3, 2, 4], 1.0, NoiseStream::new(3)).unwrap();
        let r = check_conditional_unbiasedness(&g, &[0.2, 0.5, 0.3], 4).unwrap();
        assert!(r.pass, "{r:?}");
    }

    #[test]
    fn clipped_conditional_mean_is_biased() {
        let g = LayeredParams::gaussian(&[3, 2, 4], 1.0, NoiseStream::new(3)).unwrap();
        // C = 1 and p_0 < 1/K: layer 0 shrinks by C K p_0
        let p = [0.1, 0.5, 0.4];
        let m = conditional_mean(&g, &p, 2, 1.0).unwrap();
        let err = max_abs_diff(m.as_flat(), g.as_flat());
        assert!(err > 1e-3);
        let bias = clipping_bias_closed_form(&g, &p, 2, 1.0);
        let mut recon = m.clone();
        recon.as_flat_mut().iter_mut().zip(bias.as_flat()).for_each(|(a, b)| *a += b);
        assert!(max_abs_diff(recon.as_flat(), g.as_flat()) < 1e-12);
    }

    #[test]
    fn single_arm_has_no_variance() {
        let r = check_variance(&[2.0], &[1.0], 3, 10_000, 1, Exec::Sequential).unwrap();
        assert_eq!(r.estimate, 0.0);
        assert_eq!(r.bound, 0.0);
    }

    #[test]
    fn correlation_cases() {
        let probs = vec![vec![0.25; 4], vec![0.1, 0.2, 0.3, 0.4]];
        let norms = vec![vec![1.0, 2.0, 3.0, 4.0], vec![1.0, 2.0, 3.0, 4.0]];
        let c = track_correlation(&probs, &norms).unwrap();
        assert_eq!(c[0].instantaneous, None);
        assert!((c[1].instantaneous.unwrap() - 1.0).abs() < 1e-12);
        assert!((c[1].cumulative.unwrap() - 1.0).abs() < 1e-12);
        assert!(track_correlation(&probs, &norms[..1]).is_err());
    }

    #[test]
    fn hetero_instance_mass() {
        let h = HeteroQuadratic::standard(1);
        assert_eq!(h.init.total_dim(), 160);
        assert_eq!(h.init.num_layers(), 16);
        assert!((h.hot_fraction(&h.init) - 0.95).abs() < 1e-12);
    }

    #[test]
    fn mc_checks_are_reproducible_across_exec_modes() {
        let a = check_variance(&[1.0, 2.0, 3.0], &[0.2, 0.3, 0.5], 2, 50_000, 9, Exec::Sequential).unwrap();
        let b = check_variance(&[1.0, 2.0, 3.0], &[0.2, 0.3, 0.5], 2, 50_000, 9, Exec::Parallel).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn unknown_claim() {
        assert!(run_claim("nope", 0, Exec::Sequential).is_err());
    }

    #[test]
    fn report_csv() {
        let mut buf = Vec::new();
        let r = ValidationReport::new("x", 1.0, 0.5, 0.1, 10, Criterion::AtMost(0.0));
        write_reports(&mut buf, &[r]).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert_eq!(s.lines().next().unwrap(), "claim_id,bound,estimate,se,n,pass");
        assert_eq!(s.lines().nth(1).unwrap(), "x,1e0,5e-1,1e-1,10,true");
    }
}
