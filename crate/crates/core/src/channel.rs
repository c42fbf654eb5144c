//! Wireless uplink model for mobile users.
//!
//! Each user sees a block-fading channel: a deterministic large-scale gain and
//! a small-scale fading power `|h|^2` that is redrawn once per fading block and
//! held constant inside it. Uplink spectral efficiency follows the Shannon
//! formula
//!
//! ```text
//! Q = log2(1 + P * beta * |h|^2 / sigma_w^2)      [bits/s/Hz]
//! ```
//!
//! Gradient uploads optionally carry additive Gaussian noise for privacy and
//! are sparsified by a top-fraction magnitude compressor before transmission.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChannelError {
    #[error("invalid channel parameter `{name}`: {value}")]
    InvalidParam { name: &'static str, value: f64 },
    #[error("non-finite channel input `{0}`")]
    NonFinite(&'static str),
    #[error("cannot compress an empty vector")]
    EmptyVector,
    #[error("keep_fraction must lie in (0, 1], got {0}")]
    KeepFraction(f64),
}

/// Static parameters of one user's uplink.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChannelParams {
    /// Large-scale fading gain (path loss and shadowing), dimensionless.
    pub beta_mean: f64,
    /// Maximum transmit power in watts.
    pub p_max: f64,
    /// AWGN power in watts.
    pub sigma_w2: f64,
    /// Number of rounds a fading realization is held for.
    pub block_length: u64,
}

impl Default for ChannelParams {
    fn default() -> Self {
        // Mean SNR of 10 (about 3.5 bits/s/Hz before fading).
        Self {
            beta_mean: 1.0e-3,
            p_max: 0.2,
            sigma_w2: 2.0e-5,
            block_length: 1,
        }
    }
}

impl ChannelParams {
    pub fn validate(&self) -> Result<(), ChannelError> {
        for (name, value) in [
            ("beta_mean", self.beta_mean),
            ("p_max", self.p_max),
            ("sigma_w2", self.sigma_w2),
        ] {
            if !value.is_finite() || value <= 0.0 {
                return Err(ChannelError::InvalidParam { name, value });
            }
        }
        if self.block_length == 0 {
            return Err(ChannelError::InvalidParam {
                name: "block_length",
                value: 0.0,
            });
        }
        Ok(())
    }

    /// Fading block that `round` falls into.
    pub fn block_of(&self, round: u64) -> u64 {
        round / self.block_length.max(1)
    }

    /// Average SNR, `p_max * beta_mean / sigma_w2` (unit-mean fading).
    pub fn mean_snr(&self) -> f64 {
        self.p_max * self.beta_mean / self.sigma_w2
    }
}

/// Realized channel of one user for one fading block.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelState {
    pub beta: f64,
    pub h_mag2: f64,
    pub power: f64,
}

/// Draws the channel state for `round`.
///
/// The draw is keyed by `(seed, block)`: `seed` selects the user's stream and
/// the fading block index selects the ChaCha stream within it, so every round
/// of the same block reproduces the same state without the caller keeping any
/// RNG state around.
pub fn sample_channel(params: &ChannelParams, round: u64, seed: u64) -> ChannelState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(params.block_of(round));
    let h_mag2: f64 = Exp1.sample(&mut rng);
    ChannelState {
        beta: params.beta_mean,
        h_mag2,
        power: params.p_max,
    }
}

/// Shannon capacity `log2(1 + snr)` in bits/s/Hz.
pub fn capacity_from_snr(snr: f64) -> Result<f64, ChannelError> {
    if !snr.is_finite() {
        return Err(ChannelError::NonFinite("snr"));
    }
    if snr < 0.0 {
        return Err(ChannelError::InvalidParam {
            name: "snr",
            value: snr,
        });
    }
    Ok(snr.ln_1p() / std::f64::consts::LN_2)
}

/// Uplink capacity of a realized channel.
pub fn capacity(state: &ChannelState, params: &ChannelParams) -> Result<f64, ChannelError> {
    for (name, v) in [
        ("power", state.power),
        ("beta", state.beta),
        ("h_mag2", state.h_mag2),
        ("sigma_w2", params.sigma_w2),
    ] {
        if !v.is_finite() {
            return Err(ChannelError::NonFinite(name));
        }
    }
    if params.sigma_w2 <= 0.0 {
        return Err(ChannelError::InvalidParam {
            name: "sigma_w2",
            value: params.sigma_w2,
        });
    }
    capacity_from_snr(state.power * state.beta * state.h_mag2 / params.sigma_w2)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PrivacySpec {
    /// Per-coordinate variance of the additive Gaussian noise.
    pub sigma_p2: f64,
    pub enabled: bool,
}

impl Default for PrivacySpec {
    fn default() -> Self {
        Self {
            sigma_p2: 0.0,
            enabled: false,
        }
    }
}

/// Returns `g + xi` with `xi ~ N(0, sigma_p2 I)`.
pub fn perturb_gradient<R: Rng + ?Sized>(g: &[f64], spec: &PrivacySpec, rng: &mut R) -> Vec<f64> {
    if !spec.enabled || spec.sigma_p2 <= 0.0 {
        return g.to_vec();
    }
    let normal = Normal::new(0.0, spec.sigma_p2.sqrt()).expect("finite positive std-dev");
    g.iter().map(|&v| v + normal.sample(rng)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum CompressionMode {
    #[default]
    None,
    TopFraction,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CompressionSpec {
    pub mode: CompressionMode,
    pub keep_fraction: f64,
}

impl Default for CompressionSpec {
    fn default() -> Self {
        Self {
            mode: CompressionMode::None,
            keep_fraction: 1.0,
        }
    }
}

impl CompressionSpec {
    pub fn validate(&self) -> Result<(), ChannelError> {
        if !(self.keep_fraction > 0.0 && self.keep_fraction <= 1.0) {
            return Err(ChannelError::KeepFraction(self.keep_fraction));
        }
        Ok(())
    }

    /// Number of coordinates kept for a vector of dimension `d`.
    pub fn support_size(&self, d: usize) -> usize {
        match self.mode {
            CompressionMode::None => d,
            CompressionMode::TopFraction => {
                // 0.3 * 10 is 3.0000000000000004 in binary; don't round that up to 4.
                ((self.keep_fraction * d as f64 - 1e-9).ceil() as usize).clamp(1, d)
            }
        }
    }

    /// Fraction of the dense payload actually transmitted.
    pub fn payload_fraction(&self) -> f64 {
        match self.mode {
            CompressionMode::None => 1.0,
            CompressionMode::TopFraction => self.keep_fraction,
        }
    }
}

/// Sparse vector in coordinate form; entries sorted by index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseVector {
    pub dim: usize,
    pub entries: Vec<(usize, f64)>,
}

impl SparseVector {
    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for &(i, v) in &self.entries {
            out[i] = v;
        }
        out
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn norm2(&self) -> f64 {
        self.entries.iter().map(|(_, v)| v * v).sum::<f64>().sqrt()
    }
}

/// Applies the compression operator.
///
/// `TopFraction` keeps the `ceil(keep_fraction * d)` largest-magnitude
/// coordinates; equal magnitudes favour the lower index.
pub fn compress(g: &[f64], spec: &CompressionSpec) -> Result<SparseVector, ChannelError> {
    if g.is_empty() {
        return Err(ChannelError::EmptyVector);
    }
    spec.validate()?;
    let d = g.len();
    let k = spec.support_size(d);
    let mut kept: Vec<usize> = (0..d).collect();
    if k < d {
        kept.sort_by(|&a, &b| g[b].abs().total_cmp(&g[a].abs()).then(a.cmp(&b)));
        kept.truncate(k);
        kept.sort_unstable();
    }
    Ok(SparseVector {
        dim: d,
        entries: kept.into_iter().map(|i| (i, g[i])).collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum PipelineOrder {
    #[default]
    PerturbThenCompress,
    CompressThenPerturb,
}

/// Prepares a gradient shift for upload: privacy noise plus compression, in
/// the configured order.
pub fn prepare_upload<R: Rng + ?Sized>(
    g: &[f64],
    privacy: &PrivacySpec,
    compression: &CompressionSpec,
    order: PipelineOrder,
    rng: &mut R,
) -> Result<SparseVector, ChannelError> {
    match order {
        PipelineOrder::PerturbThenCompress => {
            compress(&perturb_gradient(g, privacy, rng), compression)
        }
        PipelineOrder::CompressThenPerturb => {
            let sparse = compress(g, compression)?;
            let values: Vec<f64> = sparse.entries.iter().map(|&(_, v)| v).collect();
            let noisy = perturb_gradient(&values, privacy, rng);
            Ok(SparseVector {
                dim: sparse.dim,
                entries: sparse
                    .entries
                    .iter()
                    .zip(noisy)
                    .map(|(&(i, _), v)| (i, v))
                    .collect(),
            })
        }
    }
}
