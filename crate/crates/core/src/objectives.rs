//! Desk-scale test objectives.
//!
//! Optimizers only see [`Objective`], which exposes forward evaluation. The
//! analytic gradient lives behind the separate [`GradientOracle`] trait and
//! is consumed by the validation and correlation code, never by a training
//! loop.

use std::hint::black_box;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::exec::{pairwise_reduce, Exec};
use crate::param_store::{LayeredParams, NoiseStream};
use crate::seeds::{mix, TAG_BATCH, TAG_DATA};
use crate::stats::Moments;

/// Forward-only access to a loss.
pub trait Objective: Send + Sync {
    fn layer_sizes(&self) -> &[usize];

    /// Full-data loss. Deterministic in `params`.
    fn loss(&self, params: &LayeredParams) -> f64;

    /// Loss on the minibatch identified by `batch_seed`. Objectives without a
    /// data set ignore the seed.
    fn batch_loss(&self, params: &LayeredParams, batch_seed: u64) -> f64 {
        let _ = batch_seed;
        self.loss(params)
    }

    fn total_dim(&self) -> usize {
        self.layer_sizes().iter().sum()
    }
}

/// Analytic first-order access, used only for verification.
pub trait GradientOracle: Objective {
    fn oracle_grad(&self, params: &LayeredParams) -> LayeredParams;

    /// A known global Lipschitz constant of the gradient, if one is cheap to
    /// state.
    fn smoothness_hint(&self) -> Option<f64> {
        None
    }
}

/// Constants that enter the smoothing and bias bounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleConfig {
    pub smoothness_lg: f64,
    pub grad_bound_g: f64,
    pub smoothing_mu: f64,
}

impl OracleConfig {
    pub fn new(smoothness_lg: f64, grad_bound_g: f64, smoothing_mu: f64) -> Result<Self> {
        for (name, v) in [
            ("smoothness L_g", smoothness_lg),
            ("gradient bound G", grad_bound_g),
            ("smoothing mu", smoothing_mu),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::domain(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(Self {
            smoothness_lg,
            grad_bound_g,
            smoothing_mu,
        })
    }

    /// Fills in `L_g` from the oracle's hint or, failing that, from
    /// [`estimate_smoothness`] around `params`; `G` is the largest
    /// per-layer gradient norm at `params`.
    pub fn at_point<O: GradientOracle + ?Sized>(
        oracle: &O,
        params: &LayeredParams,
        mu: f64,
        seed: u64,
    ) -> Result<Self> {
        let lg = match oracle.smoothness_hint() {
            Some(v) => v,
            None => estimate_smoothness(oracle, params, 0.5, 64, seed),
        };
        let g = oracle
            .oracle_grad(params)
            .layer_norms()
            .into_iter()
            .fold(0.0, f64::max);
        Self::new(lg, g.max(f64::MIN_POSITIVE), mu)
    }
}

/// Largest observed `‖∇f(a) − ∇f(b)‖ / ‖a − b‖` over `n_pairs` random pairs
/// drawn in a Gaussian ball of scale `radius` around `center`.
pub fn estimate_smoothness<O: GradientOracle + ?Sized>(
    oracle: &O,
    center: &LayeredParams,
    radius: f64,
    n_pairs: usize,
    seed: u64,
) -> f64 {
    let sizes = center.layer_sizes();
    let mut best = 0.0f64;
    for k in 0..n_pairs {
        let mut a = center.clone();
        let mut b = center.clone();
        let sa = NoiseStream::new(mix(seed, 2 * k as u64));
        let sb = NoiseStream::new(mix(seed, 2 * k as u64 + 1));
        for l in 0..sizes.len() {
            sa.axpy(l, radius, a.layer_mut(l));
            // b is a short hop from a: local curvature, not a secant.
            sa.axpy(l, radius, b.layer_mut(l));
            sb.axpy(l, 1e-3 * radius, b.layer_mut(l));
        }
        let ga = oracle.oracle_grad(&a);
        let gb = oracle.oracle_grad(&b);
        let num: f64 = ga
            .as_flat()
            .iter()
            .zip(gb.as_flat())
            .map(|(x, y)| (x - y).powi(2))
            .sum::<f64>()
            .sqrt();
        let den: f64 = a
            .as_flat()
            .iter()
            .zip(b.as_flat())
            .map(|(x, y)| (x - y).powi(2))
            .sum::<f64>()
            .sqrt();
        if den > 0.0 {
            best = best.max(num / den);
        }
    }
    best
}

fn check_layout(params: &LayeredParams, sizes: &[usize]) {
    debug_assert_eq!(params.layer_sizes(), sizes, "parameter layout mismatch");
}

/// `½ Σ_l a_l ‖θ^(l)‖²`: one curvature per layer.
#[derive(Debug, Clone)]
pub struct QuadraticHetero {
    scales: Vec<f64>,
    sizes: Vec<usize>,
}

impl QuadraticHetero {
    pub fn new(scales: Vec<f64>, sizes: Vec<usize>) -> Result<Self> {
        if scales.len() != sizes.len() {
            return Err(Error::Dimension {
                expected: sizes.len(),
                got: scales.len(),
            });
        }
        if sizes.is_empty() || sizes.contains(&0) {
            return Err(Error::domain("layer sizes must be non-empty and positive"));
        }
        if let Some(a) = scales.iter().find(|a| !(**a > 0.0 && a.is_finite())) {
            return Err(Error::domain(format!("curvature must be positive, got {a}")));
        }
        Ok(Self { scales, sizes })
    }

    pub fn scales(&self) -> &[f64] {
        &self.scales
    }
}

/// Shorthand constructor matching the other objective builders.
pub fn quadratic_hetero(scales: Vec<f64>, sizes: Vec<usize>) -> Result<QuadraticHetero> {
    QuadraticHetero::new(scales, sizes)
}

impl Objective for QuadraticHetero {
    fn layer_sizes(&self) -> &[usize] {
        &self.sizes
    }

    fn loss(&self, params: &LayeredParams) -> f64 {
        check_layout(params, &self.sizes);
        params
            .layers()
            .zip(&self.scales)
            .map(|(b, a)| 0.5 * a * b.iter().map(|x| x * x).sum::<f64>())
            .sum()
    }
}

impl GradientOracle for QuadraticHetero {
    fn oracle_grad(&self, params: &LayeredParams) -> LayeredParams {
        let mut g = params.clone();
        for (l, a) in self.scales.iter().enumerate() {
            g.layer_mut(l).iter_mut().for_each(|x| *x *= a);
        }
        g
    }

    fn smoothness_hint(&self) -> Option<f64> {
        Some(self.scales.iter().copied().fold(0.0, f64::max))
    }
}

/// Mean binary cross-entropy of a linear classifier on seeded Gaussian
/// features. Labels come from a planted weight vector, so the data are
/// linearly separable.
#[derive(Debug, Clone)]
pub struct LogisticSynthetic {
    sizes: Vec<usize>,
    n_samples: usize,
    dim: usize,
    features: Vec<f64>,
    labels: Vec<f64>,
    planted: Vec<f64>,
    batch_size: usize,
}

pub fn logistic_synthetic(n_samples: usize, layer_sizes: Vec<usize>, data_seed: u64) -> Result<LogisticSynthetic> {
    LogisticSynthetic::new(n_samples, layer_sizes, data_seed)
}

impl LogisticSynthetic {
    pub fn new(n_samples: usize, sizes: Vec<usize>, data_seed: u64) -> Result<Self> {
        if n_samples == 0 {
            return Err(Error::domain("n_samples must be at least 1"));
        }
        if sizes.is_empty() || sizes.contains(&0) {
            return Err(Error::domain("layer sizes must be non-empty and positive"));
        }
        let dim: usize = sizes.iter().sum();
        let stream = NoiseStream::new(mix(data_seed, TAG_DATA));
        let features = stream.gaussian_noise(0, n_samples * dim);
        let planted = stream.gaussian_noise(1, dim);
        let labels = features
            .chunks_exact(dim)
            .map(|x| {
                let m: f64 = x.iter().zip(&planted).map(|(a, b)| a * b).sum();
                if m > 0.0 {
                    1.0
                } else {
                    0.0
                }
            })
            .collect();
        Ok(Self {
            sizes,
            n_samples,
            dim,
            features,
            labels,
            planted,
            batch_size: n_samples.min(16),
        })
    }

    pub fn with_batch_size(mut self, batch_size: usize) -> Self {
        self.batch_size = batch_size.clamp(1, self.n_samples);
        self
    }

    pub fn planted(&self) -> &[f64] {
        &self.planted
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    fn sample_loss(&self, i: usize, theta: &[f64]) -> f64 {
        let x = &self.features[i * self.dim..(i + 1) * self.dim];
        let m: f64 = x.iter().zip(theta).map(|(a, b)| a * b).sum();
        // log(1 + e^m) − y·m, stable for both signs of m
        m.max(0.0) + (-m.abs()).exp().ln_1p() - self.labels[i] * m
    }

    fn mean_loss(&self, params: &LayeredParams, idx: impl Iterator<Item = usize>) -> f64 {
        check_layout(params, &self.sizes);
        let theta = params.as_flat();
        let (mut sum, mut n) = (0.0, 0usize);
        for i in idx {
            sum += self.sample_loss(i, theta);
            n += 1;
        }
        sum / n as f64
    }
}

impl Objective for LogisticSynthetic {
    fn layer_sizes(&self) -> &[usize] {
        &self.sizes
    }

    fn loss(&self, params: &LayeredParams) -> f64 {
        self.mean_loss(params, 0..self.n_samples)
    }

    fn batch_loss(&self, params: &LayeredParams, batch_seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(mix(batch_seed, TAG_BATCH));
        let idx = index::sample(&mut rng, self.n_samples, self.batch_size);
        self.mean_loss(params, idx.into_iter())
    }
}

impl GradientOracle for LogisticSynthetic {
    fn oracle_grad(&self, params: &LayeredParams) -> LayeredParams {
        let theta = params.as_flat();
        let mut g = params.zeros_like();
        let gf = g.as_flat_mut();
        for (i, x) in self.features.chunks_exact(self.dim).enumerate() {
            let m: f64 = x.iter().zip(theta).map(|(a, b)| a * b).sum();
            let r = sigmoid(m) - self.labels[i];
            gf.iter_mut().zip(x).for_each(|(gj, xj)| *gj += r * xj);
        }
        let n = self.n_samples as f64;
        gf.iter_mut().for_each(|v| *v /= n);
        g
    }

    fn smoothness_hint(&self) -> Option<f64> {
        // ‖X‖₂² / (4n) ≤ ‖X‖_F² / (4n)
        let fro: f64 = self.features.iter().map(|x| x * x).sum();
        Some(fro / (4.0 * self.n_samples as f64))
    }
}

fn sigmoid(m: f64) -> f64 {
    if m >= 0.0 {
        1.0 / (1.0 + (-m).exp())
    } else {
        let e = m.exp();
        e / (1.0 + e)
    }
}

/// Small tanh regression network. Each weight matrix and each bias vector is
/// its own layer block: `[W_0, b_0, W_1, b_1, ...]`, with `W_k` stored
/// row-major as `widths[k+1] × widths[k]`.
///
/// Loss is `(1/n) Σ_i ‖f(x_i) − y_i‖²`. Targets come from a seeded teacher
/// network of the same shape.
#[derive(Debug, Clone)]
pub struct MlpTiny {
    widths: Vec<usize>,
    sizes: Vec<usize>,
    n_samples: usize,
    inputs: Vec<f64>,
    targets: Vec<f64>,
    batch_size: usize,
}

pub const MLP_DEFAULT_SAMPLES: usize = 32;

pub fn mlp_tiny(widths: Vec<usize>, data_seed: u64) -> Result<MlpTiny> {
    MlpTiny::new(widths, MLP_DEFAULT_SAMPLES, data_seed)
}

impl MlpTiny {
    pub fn new(widths: Vec<usize>, n_samples: usize, data_seed: u64) -> Result<Self> {
        if widths.len() < 2 {
            return Err(Error::domain("an MLP needs at least input and output widths"));
        }
        if widths.contains(&0) || n_samples == 0 {
            return Err(Error::domain("widths and n_samples must be positive"));
        }
        let sizes: Vec<usize> = widths
            .windows(2)
            .flat_map(|w| [w[0] * w[1], w[1]])
            .collect();
        let stream = NoiseStream::new(mix(data_seed, TAG_DATA));
        let inputs = stream.gaussian_noise(0, n_samples * widths[0]);
        let mut teacher = LayeredParams::zeros(&sizes)?;
        let tstream = NoiseStream::new(mix(data_seed, TAG_DATA ^ 1));
        for (k, w) in widths.windows(2).enumerate() {
            let std = 1.0 / (w[0] as f64).sqrt();
            tstream.axpy(2 * k, std, teacher.layer_mut(2 * k));
            tstream.axpy(2 * k + 1, 0.1, teacher.layer_mut(2 * k + 1));
        }
        let mut mlp = Self {
            widths,
            sizes,
            n_samples,
            inputs,
            targets: Vec::new(),
            batch_size: n_samples.min(8),
        };
        let out_w = *mlp.widths.last().unwrap();
        let mut targets = Vec::with_capacity(n_samples * out_w);
        for i in 0..n_samples {
            targets.extend(mlp.forward(&teacher, i).last().unwrap());
        }
        mlp.targets = targets;
        Ok(mlp)
    }

    /// Replaces the teacher targets, e.g. with zeros.
    pub fn with_targets(mut self, targets: Vec<f64>) -> Result<Self> {
        let want = self.n_samples * self.widths.last().unwrap();
        if targets.len() != want {
            return Err(Error::Dimension {
                expected: want,
                got: targets.len(),
            });
        }
        self.targets = targets;
        Ok(self)
    }

    pub fn with_batch_size(mut self, batch_size: usize) -> Self {
        self.batch_size = batch_size.clamp(1, self.n_samples);
        self
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    /// Swaps the data of samples `i` and `j`.
    pub fn swap_samples(&mut self, i: usize, j: usize) {
        let (wi, wo) = (self.widths[0], *self.widths.last().unwrap());
        for k in 0..wi {
            self.inputs.swap(i * wi + k, j * wi + k);
        }
        for k in 0..wo {
            self.targets.swap(i * wo + k, j * wo + k);
        }
    }

    /// Activations `h_0 = x, h_1, ..., h_depth` for sample `i`.
    fn forward(&self, params: &LayeredParams, i: usize) -> Vec<Vec<f64>> {
        let depth = self.widths.len() - 1;
        let w0 = self.widths[0];
        let mut acts = Vec::with_capacity(depth + 1);
        acts.push(self.inputs[i * w0..(i + 1) * w0].to_vec());
        for k in 0..depth {
            let (nin, nout) = (self.widths[k], self.widths[k + 1]);
            let w = params.layer(2 * k);
            let b = params.layer(2 * k + 1);
            let h = &acts[k];
            let mut a: Vec<f64> = (0..nout)
                .map(|r| b[r] + w[r * nin..(r + 1) * nin].iter().zip(h).map(|(x, y)| x * y).sum::<f64>())
                .collect();
            if k + 1 < depth {
                a.iter_mut().for_each(|v| *v = v.tanh());
            }
            acts.push(a);
        }
        acts
    }

    fn sample_loss(&self, params: &LayeredParams, i: usize) -> f64 {
        let wo = *self.widths.last().unwrap();
        let acts = self.forward(params, i);
        acts.last()
            .unwrap()
            .iter()
            .zip(&self.targets[i * wo..(i + 1) * wo])
            .map(|(o, y)| (o - y).powi(2))
            .sum()
    }
}

impl Objective for MlpTiny {
    fn layer_sizes(&self) -> &[usize] {
        &self.sizes
    }

    fn loss(&self, params: &LayeredParams) -> f64 {
        check_layout(params, &self.sizes);
        (0..self.n_samples).map(|i| self.sample_loss(params, i)).sum::<f64>() / self.n_samples as f64
    }

    fn batch_loss(&self, params: &LayeredParams, batch_seed: u64) -> f64 {
        check_layout(params, &self.sizes);
        let mut rng = ChaCha8Rng::seed_from_u64(mix(batch_seed, TAG_BATCH));
        let idx = index::sample(&mut rng, self.n_samples, self.batch_size);
        idx.into_iter().map(|i| self.sample_loss(params, i)).sum::<f64>() / self.batch_size as f64
    }
}

impl GradientOracle for MlpTiny {
    fn oracle_grad(&self, params: &LayeredParams) -> LayeredParams {
        let depth = self.widths.len() - 1;
        let wo = self.widths[depth];
        let n = self.n_samples as f64;
        let mut g = params.zeros_like();
        for i in 0..self.n_samples {
            let acts = self.forward(params, i);
            let y = &self.targets[i * wo..(i + 1) * wo];
            let mut delta: Vec<f64> = acts[depth].iter().zip(y).map(|(o, t)| 2.0 * (o - t) / n).collect();
            for k in (0..depth).rev() {
                let nin = self.widths[k];
                let h = &acts[k];
                {
                    let gw = g.layer_mut(2 * k);
                    for (r, d) in delta.iter().enumerate() {
                        for (c, hc) in h.iter().enumerate() {
                            gw[r * nin + c] += d * hc;
                        }
                    }
                }
                g.layer_mut(2 * k + 1)
                    .iter_mut()
                    .zip(&delta)
                    .for_each(|(gb, d)| *gb += d);
                if k > 0 {
                    let w = params.layer(2 * k);
                    let mut prev = vec![0.0; nin];
                    for (r, d) in delta.iter().enumerate() {
                        for c in 0..nin {
                            prev[c] += w[r * nin + c] * d;
                        }
                    }
                    // h_k = tanh(a_k) for hidden layers
                    for (p, hv) in prev.iter_mut().zip(h) {
                        *p *= 1.0 - hv * hv;
                    }
                    delta = prev;
                }
            }
        }
        g
    }
}

/// A forward pass whose cost does not depend on the parameter count: it
/// reads the first coordinate of each layer (`½ Σ_l θ^(l)_0²`) and then burns
/// `work` dependent floating-point operations. Used for latency breakdowns
/// where perturbation cost has to dominate, and for objective-cost scaling
/// sweeps.
#[derive(Debug, Clone)]
pub struct ProbeObjective {
    sizes: Vec<usize>,
    work: usize,
}

impl ProbeObjective {
    pub fn new(sizes: Vec<usize>, work: usize) -> Result<Self> {
        if sizes.is_empty() || sizes.contains(&0) {
            return Err(Error::domain("layer sizes must be non-empty and positive"));
        }
        Ok(Self { sizes, work })
    }

    /// `total` coordinates split as evenly as possible across `layers`.
    pub fn even(total: usize, layers: usize, work: usize) -> Result<Self> {
        if layers == 0 || total < layers {
            return Err(Error::domain("need at least one coordinate per layer"));
        }
        let base = total / layers;
        let extra = total % layers;
        let sizes = (0..layers).map(|l| base + usize::from(l < extra)).collect();
        Self::new(sizes, work)
    }
}

impl Objective for ProbeObjective {
    fn layer_sizes(&self) -> &[usize] {
        &self.sizes
    }

    fn loss(&self, params: &LayeredParams) -> f64 {
        let base: f64 = params.layers().map(|b| 0.5 * b[0] * b[0]).sum();
        let mut acc = black_box(1.0f64);
        for _ in 0..self.work {
            acc = acc.mul_add(0.999_999_9, 1e-9);
        }
        base + 0.0 * black_box(acc)
    }
}

impl GradientOracle for ProbeObjective {
    fn oracle_grad(&self, params: &LayeredParams) -> LayeredParams {
        let mut g = params.zeros_like();
        for l in 0..g.num_layers() {
            g.layer_mut(l)[0] = params.layer(l)[0];
        }
        g
    }

    fn smoothness_hint(&self) -> Option<f64> {
        Some(1.0)
    }
}

/// Central finite differences with step `h`.
pub fn central_difference<O: Objective + ?Sized>(obj: &O, params: &LayeredParams, h: f64) -> LayeredParams {
    let mut g = params.zeros_like();
    let mut work = params.clone();
    for i in 0..params.total_dim() {
        let x = params.as_flat()[i];
        work.as_flat_mut()[i] = x + h;
        let fp = obj.loss(&work);
        work.as_flat_mut()[i] = x - h;
        let fm = obj.loss(&work);
        work.as_flat_mut()[i] = x;
        g.as_flat_mut()[i] = (fp - fm) / (2.0 * h);
    }
    g
}

/// `‖a − b‖ / max(‖b‖, tiny)`.
pub fn relative_error(a: &LayeredParams, b: &LayeredParams) -> f64 {
    let diff: f64 = a
        .as_flat()
        .iter()
        .zip(b.as_flat())
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt();
    diff / b.norm_sq().sqrt().max(1e-300)
}

/// Monte Carlo estimate of the Gaussian-smoothed gradient
/// `E_u[(f(θ + μu) − f(θ)) / μ · u]` with its per-coordinate standard error.
#[derive(Debug, Clone)]
pub struct SmoothedGradient {
    pub mean: LayeredParams,
    pub std_err: LayeredParams,
    pub n_mc: usize,
    pub mu: f64,
}

impl SmoothedGradient {
    /// `μ · d · L_g / 2`, the worst-case gap between `∇f_μ` and `∇f`.
    pub fn gap_bound(&self, smoothness_lg: f64) -> f64 {
        self.mu * self.mean.total_dim() as f64 * smoothness_lg / 2.0
    }
}

const MC_CHUNK: usize = 1024;

pub fn smoothed_grad_mc<O: Objective + ?Sized>(
    obj: &O,
    params: &LayeredParams,
    mu: f64,
    n_mc: usize,
    seed: u64,
) -> Result<SmoothedGradient> {
    smoothed_grad_mc_with(obj, params, mu, n_mc, seed, Exec::default())
}

pub fn smoothed_grad_mc_with<O: Objective + ?Sized>(
    obj: &O,
    params: &LayeredParams,
    mu: f64,
    n_mc: usize,
    seed: u64,
    exec: Exec,
) -> Result<SmoothedGradient> {
    if !(mu > 0.0) {
        return Err(Error::domain(format!("mu must be positive, got {mu}")));
    }
    if n_mc == 0 {
        return Err(Error::domain("n_mc must be at least 1"));
    }
    let base = obj.loss(params);
    let dim = params.total_dim();
    let chunks = exec.map_chunks(n_mc, MC_CHUNK, |c, n| {
        let mut acc = Moments::new(dim);
        let mut shifted = params.clone();
        let mut sample = vec![0.0; dim];
        for k in 0..n {
            let trial = (c * MC_CHUNK + k) as u64;
            let stream = NoiseStream::new(mix(seed, trial));
            shifted.as_flat_mut().copy_from_slice(params.as_flat());
            let mut off = 0;
            for l in 0..params.num_layers() {
                let len = params.layer_size(l);
                sample[off..off + len].iter_mut().zip(stream.layer(l)).for_each(|(s, z)| *s = z);
                off += len;
            }
            shifted
                .as_flat_mut()
                .iter_mut()
                .zip(&sample)
                .for_each(|(x, u)| *x += mu * u);
            let coef = (obj.loss(&shifted) - base) / mu;
            sample.iter_mut().for_each(|u| *u *= coef);
            acc.push(&sample);
        }
        acc
    });
    let m = pairwise_reduce(chunks, Moments::merge).expect("n_mc >= 1");
    let sizes = params.layer_sizes();
    Ok(SmoothedGradient {
        mean: LayeredParams::partition(m.mean().to_vec(), &sizes)?,
        std_err: LayeredParams::partition(m.std_err(), &sizes)?,
        n_mc,
        mu,
    })
}
