//! Small statistics toolkit for the Monte Carlo checks.

use statrs::distribution::{Binomial, ChiSquared, ContinuousCDF, DiscreteCDF};

/// Running per-coordinate mean and centred second moment (Welford), with
/// Chan et al. merging so chunked accumulators can be combined.
#[derive(Debug, Clone, PartialEq)]
pub struct Moments {
    count: u64,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl Moments {
    pub fn new(dim: usize) -> Self {
        Self {
            count: 0,
            mean: vec![0.0; dim],
            m2: vec![0.0; dim],
        }
    }

    pub fn push(&mut self, x: &[f64]) {
        debug_assert_eq!(x.len(), self.mean.len());
        self.count += 1;
        let n = self.count as f64;
        for ((m, s), &v) in self.mean.iter_mut().zip(self.m2.iter_mut()).zip(x) {
            let delta = v - *m;
            *m += delta / n;
            *s += delta * (v - *m);
        }
    }

    pub fn merge(mut self, other: Self) -> Self {
        if other.count == 0 {
            return self;
        }
        if self.count == 0 {
            return other;
        }
        let na = self.count as f64;
        let nb = other.count as f64;
        let n = na + nb;
        for i in 0..self.mean.len() {
            let delta = other.mean[i] - self.mean[i];
            self.mean[i] += delta * nb / n;
            self.m2[i] += other.m2[i] + delta * delta * na * nb / n;
        }
        self.count += other.count;
        self
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    /// Unbiased sample variance per coordinate.
    pub fn variance(&self) -> Vec<f64> {
        let d = (self.count.max(2) - 1) as f64;
        self.m2.iter().map(|s| s / d).collect()
    }

    /// Standard error of the mean per coordinate.
    pub fn std_err(&self) -> Vec<f64> {
        let n = self.count.max(1) as f64;
        self.variance().iter().map(|v| (v / n).sqrt()).collect()
    }
}

/// Scalar mean / standard error accumulator.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Scalar {
    count: u64,
    mean: f64,
    m2: f64,
}

impl Scalar {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn merge(self, other: Self) -> Self {
        if other.count == 0 {
            return self;
        }
        if self.count == 0 {
            return other;
        }
        let na = self.count as f64;
        let nb = other.count as f64;
        let n = na + nb;
        let delta = other.mean - self.mean;
        Self {
            count: self.count + other.count,
            mean: self.mean + delta * nb / n,
            m2: self.m2 + other.m2 + delta * delta * na * nb / n,
        }
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn variance(&self) -> f64 {
        self.m2 / (self.count.max(2) - 1) as f64
    }

    pub fn std_err(&self) -> f64 {
        (self.variance() / self.count.max(1) as f64).sqrt()
    }
}

/// Pearson correlation. `None` when either input has zero variance or the
/// lengths differ or are below 2.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    // Relative zero-variance test: constant vectors can leave rounding dust.
    let scale_x = x.iter().map(|v| v * v).sum::<f64>();
    let scale_y = y.iter().map(|v| v * v).sum::<f64>();
    if sxx <= 1e-24 * scale_x.max(f64::MIN_POSITIVE) || syy <= 1e-24 * scale_y.max(f64::MIN_POSITIVE) {
        return None;
    }
    Some((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChiSquareResult {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

/// Two-sample chi-square test of homogeneity on category counts.
///
/// Categories whose pooled count is below `min_pooled` are merged into a
/// single bin (dropped if the merged bin is still below it).
pub fn chi_square_homogeneity(a: &[u64], b: &[u64], min_pooled: u64) -> Option<ChiSquareResult> {
    assert_eq!(a.len(), b.len());
    let mut bins: Vec<(f64, f64)> = Vec::new();
    let (mut ra, mut rb) = (0u64, 0u64);
    for (&x, &y) in a.iter().zip(b) {
        if x + y >= min_pooled {
            bins.push((x as f64, y as f64));
        } else {
            ra += x;
            rb += y;
        }
    }
    if ra + rb >= min_pooled {
        bins.push((ra as f64, rb as f64));
    }
    if bins.len() < 2 {
        return None;
    }
    let na: f64 = bins.iter().map(|b| b.0).sum();
    let nb: f64 = bins.iter().map(|b| b.1).sum();
    let n = na + nb;
    let mut stat = 0.0;
    for &(x, y) in &bins {
        let pooled = x + y;
        let ea = pooled * na / n;
        let eb = pooled * nb / n;
        stat += (x - ea).powi(2) / ea + (y - eb).powi(2) / eb;
    }
    let dof = bins.len() - 1;
    let p_value = 1.0 - ChiSquared::new(dof as f64).ok()?.cdf(stat);
    Some(ChiSquareResult {
        statistic: stat,
        dof,
        p_value,
    })
}

/// One-sided sign test: probability of at least `wins` successes out of `n`
/// fair coin flips.
pub fn sign_test_p(wins: u64, n: u64) -> f64 {
    if wins == 0 {
        return 1.0;
    }
    let b = Binomial::new(0.5, n).expect("valid binomial");
    1.0 - b.cdf(wins - 1)
}

/// Median of a slice; `None` when empty. NaNs sort last.
pub fn median(xs: &[f64]) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let m = v.len() / 2;
    Some(if v.len() % 2 == 0 {
        0.5 * (v[m - 1] + v[m])
    } else {
        v[m]
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn moments_merge_matches_single_pass() {
        let xs: Vec<f64> = (0..100).map(|i| ((i * 37) % 11) as f64 - 3.0).collect();
        let mut all = Moments::new(1);
        for &x in &xs {
            all.push(&[x]);
        }
        let mut a = Moments::new(1);
        let mut b = Moments::new(1);
        for &x in &xs[..40] {
            a.push(&[x]);
        }
        for &x in &xs[40..] {
            b.push(&[x]);
        }
        let m = a.merge(b);
        assert_eq!(m.count(), 100);
        assert!((m.mean()[0] - all.mean()[0]).abs() < 1e-12);
        assert!((m.variance()[0] - all.variance()[0]).abs() < 1e-10);
    }

    #[test]
    fn pearson_cases() {
        assert_eq!(pearson(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]), None);
        let r = pearson(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]).unwrap();
        assert!((r - 1.0).abs() < 1e-12);
        let r = pearson(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap();
        assert!((r + 1.0).abs() < 1e-12);
        // uniform probabilities carrying rounding noise still count as constant
        let p = [1.0 / 3.0, 1.0 / 3.0, 1.0 - 2.0 / 3.0];
        assert_eq!(pearson(&p, &[1.0, 2.0, 5.0]), None);
    }

    #[test]
    fn chi_square_identical_samples() {
        let r = chi_square_homogeneity(&[100, 200, 300], &[100, 200, 300], 5).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert!((r.p_value - 1.0).abs() < 1e-12);
        assert_eq!(r.dof, 2);
    }

    #[test]
    fn chi_square_detects_shift() {
        let r = chi_square_homogeneity(&[500, 500], &[300, 700], 5).unwrap();
        assert!(r.p_value < 1e-6);
    }

    #[test]
    fn sign_test_values() {
        // P(X >= 9 | n = 10) = 11 / 1024
        assert!((sign_test_p(9, 10) - 11.0 / 1024.0).abs() < 1e-12);
        assert!((sign_test_p(10, 10) - 1.0 / 1024.0).abs() < 1e-12);
    }

    #[test]
    fn median_even_odd() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), Some(2.5));
        assert_eq!(median(&[]), None);
    }
}
