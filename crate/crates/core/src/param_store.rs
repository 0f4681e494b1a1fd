//! Layer-partitioned parameter storage and seeded Gaussian perturbation.
//!
//! Perturbation vectors are never stored. A [`NoiseStream`] regenerates the
//! noise for any layer from `(base_seed + layer)` on demand, so the
//! perturb / restore / update sequence of a zeroth-order step touches only
//! the parameter memory itself.

use std::io::{Read, Write};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

const SNAPSHOT_MAGIC: &[u8; 4] = b"ZOB1";

/// A flat parameter vector split into `L` contiguous layer blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct LayeredParams {
    data: Vec<f64>,
    offsets: Vec<usize>,
}

impl LayeredParams {
    /// Splits `flat` into consecutive blocks of the given sizes.
    pub fn partition(flat: Vec<f64>, sizes: &[usize]) -> Result<Self> {
        if sizes.is_empty() {
            return Err(Error::domain("at least one layer is required"));
        }
        if let Some(pos) = sizes.iter().position(|&s| s == 0) {
            return Err(Error::domain(format!("layer {pos} has size 0")));
        }
        let total: usize = sizes.iter().sum();
        if total != flat.len() {
            return Err(Error::Dimension {
                expected: total,
                got: flat.len(),
            });
        }
        let mut offsets = Vec::with_capacity(sizes.len() + 1);
        offsets.push(0);
        let mut acc = 0;
        for &s in sizes {
            acc += s;
            offsets.push(acc);
        }
        Ok(Self {
            data: flat,
            offsets,
        })
    }

    pub fn zeros(sizes: &[usize]) -> Result<Self> {
        let total = sizes.iter().sum();
        Self::partition(vec![0.0; total], sizes)
    }

    /// Same layout as `self`, all zeros.
    pub fn zeros_like(&self) -> Self {
        Self {
            data: vec![0.0; self.data.len()],
            offsets: self.offsets.clone(),
        }
    }

    /// Standard normal initialization scaled by `std`, drawn from `stream`.
    pub fn gaussian(sizes: &[usize], std: f64, stream: NoiseStream) -> Result<Self> {
        let mut p = Self::zeros(sizes)?;
        for l in 0..p.num_layers() {
            stream.axpy(l, std, p.layer_mut(l));
        }
        Ok(p)
    }

    pub fn num_layers(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn total_dim(&self) -> usize {
        self.data.len()
    }

    pub fn layer_size(&self, l: usize) -> usize {
        self.offsets[l + 1] - self.offsets[l]
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        self.offsets.windows(2).map(|w| w[1] - w[0]).collect()
    }

    pub fn layer(&self, l: usize) -> &[f64] {
        &self.data[self.offsets[l]..self.offsets[l + 1]]
    }

    pub fn layer_mut(&mut self, l: usize) -> &mut [f64] {
        &mut self.data[self.offsets[l]..self.offsets[l + 1]]
    }

    pub fn layers(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.offsets
            .windows(2)
            .map(move |w| &self.data[w[0]..w[1]])
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }

    pub fn as_flat_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_flat(self) -> Vec<f64> {
        self.data
    }

    pub fn same_layout(&self, other: &Self) -> bool {
        self.offsets == other.offsets
    }

    pub fn norm_sq(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum()
    }

    /// Euclidean norm of every layer block.
    pub fn layer_norms(&self) -> Vec<f64> {
        self.layers()
            .map(|b| b.iter().map(|x| x * x).sum::<f64>().sqrt())
            .collect()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Writes the `ZOB1` snapshot: magic, `L` as u32, `L` sizes as u64, then
    /// the flat values, all little-endian.
    pub fn write_snapshot<W: Write>(&self, mut w: W) -> Result<()> {
        let l = u32::try_from(self.num_layers())
            .map_err(|_| Error::Snapshot("too many layers for a u32 header".into()))?;
        w.write_all(SNAPSHOT_MAGIC)?;
        w.write_all(&l.to_le_bytes())?;
        for s in self.layer_sizes() {
            w.write_all(&(s as u64).to_le_bytes())?;
        }
        for x in &self.data {
            w.write_all(&x.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_snapshot<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != SNAPSHOT_MAGIC {
            return Err(Error::Snapshot(format!("bad magic {magic:?}")));
        }
        let mut b4 = [0u8; 4];
        r.read_exact(&mut b4)?;
        let l = u32::from_le_bytes(b4) as usize;
        let mut b8 = [0u8; 8];
        let mut sizes = Vec::with_capacity(l);
        for _ in 0..l {
            r.read_exact(&mut b8)?;
            let s = usize::try_from(u64::from_le_bytes(b8))
                .map_err(|_| Error::Snapshot("layer size overflows usize".into()))?;
            sizes.push(s);
        }
        let total: usize = sizes.iter().sum();
        let mut data = Vec::with_capacity(total);
        for _ in 0..total {
            r.read_exact(&mut b8)?;
            data.push(f64::from_le_bytes(b8));
        }
        let mut rest = Vec::new();
        r.read_to_end(&mut rest)?;
        if !rest.is_empty() {
            return Err(Error::Snapshot(format!("{} trailing bytes", rest.len())));
        }
        Self::partition(data, &sizes).map_err(|e| Error::Snapshot(e.to_string()))
    }
}

/// Deterministic per-layer standard normal generator.
///
/// Layer `l` draws from a ChaCha8 keystream keyed by `base_seed + l`
/// (wrapping). Consecutive pairs of 64-bit words become pairs of normals via
/// Box–Muller, both outputs used. Transcendentals come from `libm` so the
/// values do not depend on the platform's math library.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NoiseStream {
    base_seed: u64,
}

impl NoiseStream {
    pub const fn new(base_seed: u64) -> Self {
        Self { base_seed }
    }

    pub const fn base_seed(&self) -> u64 {
        self.base_seed
    }

    pub const fn layer_seed(&self, layer: usize) -> u64 {
        self.base_seed.wrapping_add(layer as u64)
    }

    pub fn layer(&self, layer: usize) -> LayerNoise {
        LayerNoise {
            rng: ChaCha8Rng::seed_from_u64(self.layer_seed(layer)),
            spare: None,
        }
    }

    /// The first `len` normals of layer `layer`'s stream.
    pub fn gaussian_noise(&self, layer: usize, len: usize) -> Vec<f64> {
        self.layer(layer).take(len).collect()
    }

    /// `target += scale * z` where `z` is the layer's noise, generated on the
    /// fly without an intermediate buffer.
    pub fn axpy(&self, layer: usize, scale: f64, target: &mut [f64]) {
        let mut rng = ChaCha8Rng::seed_from_u64(self.layer_seed(layer));
        let mut chunks = target.chunks_exact_mut(2);
        for pair in &mut chunks {
            let (z0, z1) = box_muller(rng.next_u64(), rng.next_u64());
            pair[0] += scale * z0;
            pair[1] += scale * z1;
        }
        if let [last] = chunks.into_remainder() {
            let (z0, _) = box_muller(rng.next_u64(), rng.next_u64());
            *last += scale * z0;
        }
    }

    /// Dot product of `values` with the layer's noise.
    pub fn dot(&self, layer: usize, values: &[f64]) -> f64 {
        values.iter().zip(self.layer(layer)).map(|(v, z)| v * z).sum()
    }
}

/// Iterator over one layer's normals.
#[derive(Debug, Clone)]
pub struct LayerNoise {
    rng: ChaCha8Rng,
    spare: Option<f64>,
}

impl Iterator for LayerNoise {
    type Item = f64;

    #[inline]
    fn next(&mut self) -> Option<f64> {
        if let Some(z) = self.spare.take() {
            return Some(z);
        }
        let (z0, z1) = box_muller(self.rng.next_u64(), self.rng.next_u64());
        self.spare = Some(z1);
        Some(z0)
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        (usize::MAX, None)
    }
}

#[inline]
fn box_muller(a: u64, b: u64) -> (f64, f64) {
    const INV_2_53: f64 = 1.0 / (1u64 << 53) as f64;
    // u1 in (0, 1] keeps the log finite.
    let u1 = ((a >> 11) + 1) as f64 * INV_2_53;
    let u2 = (b >> 11) as f64 * INV_2_53;
    let r = libm::sqrt(-2.0 * libm::log(u1));
    let (s, c) = libm::sincos(std::f64::consts::TAU * u2);
    (r * c, r * s)
}

/// `θ^(l) += scale · z^(l)` for every `l` in `active`. Other layers are not
/// read or written.
pub fn perturb_layers(params: &mut LayeredParams, active: &[usize], scale: f64, stream: NoiseStream) {
    if scale == 0.0 {
        return;
    }
    for &l in active {
        stream.axpy(l, scale, params.layer_mut(l));
    }
}

/// Perturbs every layer.
pub fn perturb_all(params: &mut LayeredParams, scale: f64, stream: NoiseStream) {
    if scale == 0.0 {
        return;
    }
    for l in 0..params.num_layers() {
        stream.axpy(l, scale, params.layer_mut(l));
    }
}
