//! Zeroth-order gradient estimation.
//!
//! A step probes the loss at `θ ± μz̃` and reduces the pair to a single
//! projected scalar. The sparse estimator then rebuilds each active layer's
//! gradient as `ĝ_scalar · w_l · n_l · z̃^(l)`, where `n_l` is the layer's
//! multiplicity in the with-replacement draw and `w_l = min(1/(K p_l), C)` is
//! the clipped inverse-probability weight.

use crate::bandit::SampleDraw;
use crate::error::{Error, Result};
use crate::param_store::{LayeredParams, NoiseStream};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarGrad {
    pub value: f64,
    pub loss_plus: f64,
    pub loss_minus: f64,
    pub mu: f64,
}

/// `(L₊ − L₋) / (2μ)`. A non-finite loss is reported as a numeric error.
pub fn projected_scalar(loss_plus: f64, loss_minus: f64, mu: f64) -> Result<ScalarGrad> {
    if !(mu > 0.0) {
        return Err(Error::domain(format!("mu must be positive, got {mu}")));
    }
    if !loss_plus.is_finite() || !loss_minus.is_finite() {
        return Err(Error::numeric(format!(
            "non-finite loss (L+ = {loss_plus}, L- = {loss_minus})"
        )));
    }
    Ok(ScalarGrad {
        value: (loss_plus - loss_minus) / (2.0 * mu),
        loss_plus,
        loss_minus,
        mu,
    })
}

/// `min(1/(k·p_l), C)`.
pub fn ipw_weight(k: usize, p_l: f64, clip: f64) -> Result<f64> {
    if k == 0 {
        return Err(Error::domain("k must be at least 1"));
    }
    if !(p_l > 0.0 && p_l <= 1.0) {
        return Err(Error::domain(format!("selection probability must lie in (0,1], got {p_l}")));
    }
    if !(clip > 0.0) {
        return Err(Error::domain(format!("clip must be positive, got {clip}")));
    }
    Ok((1.0 / (k as f64 * p_l)).min(clip))
}

/// Everything needed to apply one sparse update.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseGradSpec {
    pub active: Vec<usize>,
    pub counts: Vec<u32>,
    /// IPW weight of every layer under the policy that produced the draw.
    pub weights: Vec<f64>,
    pub scalar: ScalarGrad,
    pub noise_seed: u64,
}

impl SparseGradSpec {
    pub fn new(draw: &SampleDraw, probs: &[f64], clip: f64, scalar: ScalarGrad, noise_seed: u64) -> Result<Self> {
        if probs.len() != draw.counts.len() {
            return Err(Error::Dimension {
                expected: draw.counts.len(),
                got: probs.len(),
            });
        }
        let weights = probs
            .iter()
            .map(|&p| ipw_weight(draw.k_draws, p, clip))
            .collect::<Result<_>>()?;
        Ok(Self {
            active: draw.active.clone(),
            counts: draw.counts.clone(),
            weights,
            scalar,
            noise_seed,
        })
    }

    /// All layers once with unit weight: the dense SPSA estimator.
    pub fn dense(num_layers: usize, scalar: ScalarGrad, noise_seed: u64) -> Self {
        Self {
            active: (0..num_layers).collect(),
            counts: vec![1; num_layers],
            weights: vec![1.0; num_layers],
            scalar,
            noise_seed,
        }
    }

    /// `ĝ_scalar · w_l · n_l`, the multiplier on `z^(l)`.
    pub fn layer_coefficient(&self, l: usize) -> f64 {
        self.scalar.value * self.weights[l] * self.counts[l] as f64
    }

    /// Materializes the gradient estimate. Validation only.
    pub fn assemble(&self, sizes: &[usize]) -> Result<LayeredParams> {
        let mut g = LayeredParams::zeros(sizes)?;
        let stream = NoiseStream::new(self.noise_seed);
        for &l in &self.active {
            stream.axpy(l, self.layer_coefficient(l), g.layer_mut(l));
        }
        Ok(g)
    }
}

/// `θ^(l) ← θ^(l) − η · ĝ_scalar · w_l · n_l · z^(l)` on active layers.
pub fn sparse_update(params: &mut LayeredParams, spec: &SparseGradSpec, eta: f64, stream: NoiseStream) {
    debug_assert_eq!(stream.base_seed(), spec.noise_seed, "update must regenerate the probe noise");
    for &l in &spec.active {
        let coef = eta * spec.layer_coefficient(l);
        if coef != 0.0 {
            stream.axpy(l, -coef, params.layer_mut(l));
        }
    }
}

/// Dense SPSA update `θ ← θ − η · ĝ_scalar · z` over every layer.
pub fn dense_estimate_apply(params: &mut LayeredParams, scalar: &ScalarGrad, eta: f64, stream: NoiseStream) {
    let coef = eta * scalar.value;
    if coef == 0.0 {
        return;
    }
    for l in 0..params.num_layers() {
        stream.axpy(l, -coef, params.layer_mut(l));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::param_store::perturb_all;

    #[test]
    fn scalar_arithmetic() {
        let s = projected_scalar(1.2, 1.0, 0.001).unwrap();
        assert!((s.value - 100.0).abs() < 1e-9);
        assert_eq!(projected_scalar(0.7, 0.7, 1e-3).unwrap().value, 0.0);
        assert!(matches!(projected_scalar(f64::INFINITY, 0.0, 1e-3), Err(Error::Numeric(_))));
        assert!(matches!(projected_scalar(f64::NAN, 0.0, 1e-3), Err(Error::Numeric(_))));
        assert!(projected_scalar(1.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn scalar_on_half_square_is_the_noise() {
        // f = ½θ²: f(1 + μz) − f(1 − μz) = 2μz
        let f = |x: f64| 0.5 * x * x;
        for &z in &[0.3, -1.7, 2.5] {
            for &mu in &[1e-3, 0.5] {
                let s = projected_scalar(f(1.0 + mu * z), f(1.0 - mu * z), mu).unwrap();
                assert!((s.value - z).abs() < 1e-9, "{} vs {z}", s.value);
            }
        }
    }

    #[test]
    fn weight_examples() {
        assert!((ipw_weight(6, 0.05, 4.0).unwrap() - 10.0 / 3.0).abs() < 1e-12);
        assert_eq!(ipw_weight(6, 0.01, 4.0).unwrap(), 4.0);
        for p in [0.01, 0.1, 0.5, 1.0] {
            assert!(ipw_weight(3, p, 1.0).unwrap() <= 1.0);
        }
        assert!(ipw_weight(3, 0.0, 4.0).is_err());
        assert!(ipw_weight(0, 0.5, 4.0).is_err());
        assert_eq!(ipw_weight(2, 0.01, f64::INFINITY).unwrap(), 50.0);
    }

    fn scalar(v: f64) -> ScalarGrad {
        ScalarGrad {
            value: v,
            loss_plus: 0.0,
            loss_minus: 0.0,
            mu: 1e-3,
        }
    }

    #[test]
    fn zero_scalar_leaves_params() {
        let mut p = LayeredParams::gaussian(&[3, 4], 1.0, NoiseStream::new(1)).unwrap();
        let before = p.clone();
        let draw = SampleDraw::from_counts(vec![1, 1]);
        let spec = SparseGradSpec::new(&draw, &[0.5, 0.5], 4.0, scalar(0.0), 9).unwrap();
        sparse_update(&mut p, &spec, 0.1, NoiseStream::new(9));
        assert_eq!(p, before);
    }

    #[test]
    fn multiplicity_doubles_the_step() {
        let base = LayeredParams::gaussian(&[5, 5], 1.0, NoiseStream::new(2)).unwrap();
        let probs = [0.5, 0.5];
        let run = |counts: Vec<u32>| {
            let mut p = base.clone();
            let draw = SampleDraw {
                k_draws: 2,
                counts: counts.clone(),
                active: vec![0],
            };
            let spec = SparseGradSpec::new(&draw, &probs, 4.0, scalar(0.8), 3).unwrap();
            sparse_update(&mut p, &spec, 0.1, NoiseStream::new(3));
            p
        };
        let one = run(vec![1, 0]);
        let two = run(vec![2, 0]);
        for i in 0..5 {
            let d1 = one.layer(0)[i] - base.layer(0)[i];
            let d2 = two.layer(0)[i] - base.layer(0)[i];
            assert!((d2 - 2.0 * d1).abs() <= 1e-14 * d2.abs().max(1.0));
        }
        assert_eq!(one.layer(1), base.layer(1));
        assert_eq!(two.layer(1), base.layer(1));
    }

    #[test]
    fn dense_is_sparse_with_unit_weights() {
        let base = LayeredParams::gaussian(&[3, 7, 2], 1.0, NoiseStream::new(4)).unwrap();
        let s = scalar(-1.3);
        let mut a = base.clone();
        let mut b = base.clone();
        dense_estimate_apply(&mut a, &s, 0.05, NoiseStream::new(11));
        sparse_update(&mut b, &SparseGradSpec::dense(3, s, 11), 0.05, NoiseStream::new(11));
        assert_eq!(a, b);
        let mut c = base.clone();
        dense_estimate_apply(&mut c, &s, 0.0, NoiseStream::new(11));
        assert_eq!(c, base);
    }

    #[test]
    fn one_step_on_half_square() {
        // θ₀ = 1, μ = 1e-3, η = 0.1: θ₁ = 1 − 0.1·z² for the stream's first z
        let stream = NoiseStream::new(2718);
        let z = stream.gaussian_noise(0, 1)[0];
        let mut p = LayeredParams::partition(vec![1.0], &[1]).unwrap();
        let mu = 1e-3;
        perturb_all(&mut p, mu, stream);
        let lp = 0.5 * p.as_flat()[0].powi(2);
        perturb_all(&mut p, -2.0 * mu, stream);
        let lm = 0.5 * p.as_flat()[0].powi(2);
        perturb_all(&mut p, mu, stream);
        let s = projected_scalar(lp, lm, mu).unwrap();
        dense_estimate_apply(&mut p, &s, 0.1, stream);
        let expect = 1.0 - 0.1 * z * z;
        assert!((p.as_flat()[0] - expect).abs() < 1e-9, "{} vs {expect}", p.as_flat()[0]);
    }

    #[test]
    fn assembled_gradient_is_zero_off_the_active_set() {
        let draw = SampleDraw::from_counts(vec![0, 2, 0, 1]);
        let spec = SparseGradSpec::new(&draw, &[0.25; 4], 4.0, scalar(1.0), 5).unwrap();
        let g = spec.assemble(&[2, 2, 2, 2]).unwrap();
        assert_eq!(g.layer(0), &[0.0, 0.0]);
        assert_eq!(g.layer(2), &[0.0, 0.0]);
        let z = NoiseStream::new(5).gaussian_noise(1, 2);
        // w = 1/(3·0.25), n = 2
        let c = 1.0 * (4.0 / 3.0) * 2.0;
        assert!((g.layer(1)[0] - c * z[0]).abs() < 1e-12);
    }
}
