//! Shared domain types and the similarity / pooling primitives.
//!
//! Bundles store single-precision values; everything here computes in `f64`.
//! Finiteness is checked once, when a grid, stream or embedding is built, so
//! the inner loops below do not re-validate.

use std::fmt;
use std::ops::Deref;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A single d-dimensional token feature.
#[derive(Clone, Debug, PartialEq)]
pub struct Embedding(Vec<f64>);

impl Embedding {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("embedding must have dimension >= 1"));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("embedding value {i} is not finite")));
        }
        Ok(Embedding(values))
    }

    /// Caller guarantees non-empty and finite.
    pub(crate) fn from_vec_unchecked(values: Vec<f64>) -> Self {
        debug_assert!(!values.is_empty());
        Embedding(values)
    }

    pub fn from_f32(values: &[f32]) -> Result<Self> {
        Self::new(values.iter().map(|&v| f64::from(v)).collect())
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for Embedding {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl AsRef<[f64]> for Embedding {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

fn check_finite(values: &[f64], what: &str) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(Error::invalid(format!("{what}: value {i} is not finite"))),
        None => Ok(()),
    }
}

/// `frames × positions` visual tokens of dimension `dim`, frame-major.
///
/// Frame and position indices are zero-based in memory.
#[derive(Clone, Debug, PartialEq)]
pub struct VideoTokenGrid {
    frames: usize,
    positions: usize,
    dim: usize,
    data: Vec<f64>,
}

impl VideoTokenGrid {
    pub fn new(frames: usize, positions: usize, dim: usize, data: Vec<f64>) -> Result<Self> {
        if frames == 0 || positions == 0 || dim == 0 {
            return Err(Error::invalid(format!(
                "grid sizes must be positive (frames={frames}, positions={positions}, dim={dim})"
            )));
        }
        let expected = frames * positions * dim;
        if data.len() != expected {
            return Err(Error::invalid(format!(
                "grid expects {expected} values, got {}",
                data.len()
            )));
        }
        check_finite(&data, "video grid")?;
        Ok(VideoTokenGrid {
            frames,
            positions,
            dim,
            data,
        })
    }

    /// Builds a grid from nested `[frame][position][coordinate]` values.
    pub fn from_nested(tokens: &[Vec<Vec<f64>>]) -> Result<Self> {
        let frames = tokens.len();
        let positions = tokens.first().map_or(0, Vec::len);
        let dim = tokens.first().and_then(|f| f.first()).map_or(0, Vec::len);
        let mut data = Vec::with_capacity(frames * positions * dim);
        for frame in tokens {
            if frame.len() != positions {
                return Err(Error::invalid("ragged grid: frames differ in token count"));
            }
            for tok in frame {
                if tok.len() != dim {
                    return Err(Error::DimensionMismatch {
                        expected: dim,
                        found: tok.len(),
                    });
                }
                data.extend_from_slice(tok);
            }
        }
        Self::new(frames, positions, dim, data)
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn positions(&self) -> usize {
        self.positions
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn token_count(&self) -> usize {
        self.frames * self.positions
    }

    pub fn token(&self, frame: usize, position: usize) -> &[f64] {
        let start = (frame * self.positions + position) * self.dim;
        &self.data[start..start + self.dim]
    }

    /// The `positions` tokens of one frame, in position order.
    pub fn frame_tokens(&self, frame: usize) -> Vec<&[f64]> {
        let width = self.positions * self.dim;
        self.data[frame * width..(frame + 1) * width]
            .chunks_exact(self.dim)
            .collect()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }
}

/// Audio tokens in temporal order with their aligned frame index.
///
/// `alignment[i]` is the zero-based frame of token `i`; it is non-decreasing
/// and bounded by `frames`, the frame count of the paired grid. An empty
/// stream is allowed.
#[derive(Clone, Debug, PartialEq)]
pub struct AudioTokenStream {
    dim: usize,
    frames: usize,
    data: Vec<f64>,
    alignment: Vec<usize>,
}

impl AudioTokenStream {
    pub fn new(dim: usize, frames: usize, data: Vec<f64>, alignment: Vec<usize>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("audio dimension must be >= 1"));
        }
        if data.len() != alignment.len() * dim {
            return Err(Error::invalid(format!(
                "audio stream expects {} values for {} tokens, got {}",
                alignment.len() * dim,
                alignment.len(),
                data.len()
            )));
        }
        check_finite(&data, "audio stream")?;
        validate_alignment(&alignment, frames)?;
        Ok(AudioTokenStream {
            dim,
            frames,
            data,
            alignment,
        })
    }

    pub fn from_tokens(
        dim: usize,
        tokens: &[Vec<f64>],
        alignment: Vec<usize>,
        frames: usize,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(tokens.len() * dim);
        for tok in tokens {
            if tok.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: tok.len(),
                });
            }
            data.extend_from_slice(tok);
        }
        Self::new(dim, frames, data, alignment)
    }

    pub fn len(&self) -> usize {
        self.alignment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alignment.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn token(&self, index: usize) -> &[f64] {
        &self.data[index * self.dim..(index + 1) * self.dim]
    }

    pub fn alignment(&self) -> &[usize] {
        &self.alignment
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Number of tokens aligned to each frame (the per-frame `n_t`).
    pub fn tokens_per_frame(&self) -> Vec<usize> {
        let mut counts = vec![0; self.frames];
        for &t in &self.alignment {
            counts[t] += 1;
        }
        counts
    }

    /// Half-open token index range aligned to each frame.
    pub fn frame_segments(&self) -> Vec<std::ops::Range<usize>> {
        let mut start = 0;
        self.tokens_per_frame()
            .into_iter()
            .map(|n| {
                let seg = start..start + n;
                start += n;
                seg
            })
            .collect()
    }
}

pub(crate) fn validate_alignment(alignment: &[usize], frames: usize) -> Result<()> {
    for (i, &t) in alignment.iter().enumerate() {
        if t >= frames {
            return Err(Error::Alignment(format!(
                "token {i} aligned to frame {} outside 1..={frames}",
                t + 1
            )));
        }
        if i > 0 && t < alignment[i - 1] {
            return Err(Error::Alignment(format!(
                "alignment decreases at token {i} ({} -> {})",
                alignment[i - 1] + 1,
                t + 1
            )));
        }
    }
    Ok(())
}

/// Which modality's signal steers the per-frame audio budget.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GuidanceMode {
    /// Budgets proportional to aligned token counts only.
    AudioGuided,
    /// Budgets weighted by raw frame relevance scores.
    VisualGuided,
    /// Budgets weighted by the visual memory retained per frame.
    #[default]
    FullOmac,
}

impl GuidanceMode {
    pub fn as_str(self) -> &'static str {
        match self {
            GuidanceMode::AudioGuided => "audio-guided",
            GuidanceMode::VisualGuided => "visual-guided",
            GuidanceMode::FullOmac => "full-omac",
        }
    }
}

impl fmt::Display for GuidanceMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for GuidanceMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "audio-guided" => Ok(GuidanceMode::AudioGuided),
            "visual-guided" => Ok(GuidanceMode::VisualGuided),
            "full-omac" => Ok(GuidanceMode::FullOmac),
            other => Err(Error::invalid(format!(
                "unknown guidance mode '{other}' (expected audio-guided, visual-guided or full-omac)"
            ))),
        }
    }
}

/// Scalar knobs for the compression pipeline.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompressionConfig {
    pub retain_video: f64,
    pub retain_audio: f64,
    pub coverage_bins: usize,
    /// Explicit tokens kept per selected frame. `None` derives it from
    /// `retain_video` so the visual retained count tracks `retain_video·T·P`.
    pub tokens_per_selected_frame: Option<usize>,
    pub guidance_mode: GuidanceMode,
    /// Weight given to frames the visual branch dropped.
    pub unselected_frame_weight: f64,
}

impl Default for CompressionConfig {
    fn default() -> Self {
        CompressionConfig {
            retain_video: DEFAULT_RETAIN,
            retain_audio: DEFAULT_RETAIN,
            coverage_bins: DEFAULT_COVERAGE_BINS,
            tokens_per_selected_frame: None,
            guidance_mode: GuidanceMode::FullOmac,
            unselected_frame_weight: 1.0,
        }
    }
}

pub const DEFAULT_RETAIN: f64 = 0.3;
pub const DEFAULT_COVERAGE_BINS: usize = 4;

impl CompressionConfig {
    pub fn with_retain(retain: f64) -> Self {
        CompressionConfig {
            retain_video: retain,
            retain_audio: retain,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, r) in [
            ("retain_video", self.retain_video),
            ("retain_audio", self.retain_audio),
        ] {
            if !(r > 0.0 && r <= 1.0) {
                return Err(Error::invalid(format!(
                    "{name} must lie in (0, 1], got {r}"
                )));
            }
        }
        if self.coverage_bins == 0 {
            return Err(Error::invalid("coverage_bins must be positive"));
        }
        if self.tokens_per_selected_frame == Some(0) {
            return Err(Error::invalid("tokens_per_selected_frame must be positive"));
        }
        if !(self.unselected_frame_weight >= 0.0 && self.unselected_frame_weight.is_finite()) {
            return Err(Error::invalid(format!(
                "unselected_frame_weight must be a non-negative finite real, got {}",
                self.unselected_frame_weight
            )));
        }
        Ok(())
    }
}

/// Round half up, saturating at zero for negative inputs.
pub fn round_half_up(x: f64) -> usize {
    (x + 0.5).floor().max(0.0) as usize
}

/// Cosine similarity; zero when either vector has zero norm.
pub fn cosine(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::DimensionMismatch {
            expected: u.len(),
            found: v.len(),
        });
    }
    let (mut dot, mut nu, mut nv) = (0.0, 0.0, 0.0);
    for (a, b) in u.iter().zip(v) {
        dot += a * b;
        nu += a * a;
        nv += b * b;
    }
    if nu == 0.0 || nv == 0.0 {
        return Ok(0.0);
    }
    Ok((dot / (nu.sqrt() * nv.sqrt())).clamp(-1.0, 1.0))
}

/// Coordinate-wise arithmetic mean.
pub fn mean_pool<'a, I>(tokens: I) -> Result<Embedding>
where
    I: IntoIterator<Item = &'a [f64]>,
{
    let mut iter = tokens.into_iter();
    let first = iter
        .next()
        .ok_or_else(|| Error::invalid("mean_pool of an empty sequence"))?;
    let mut sum = first.to_vec();
    let mut count = 1usize;
    for tok in iter {
        if tok.len() != sum.len() {
            return Err(Error::DimensionMismatch {
                expected: sum.len(),
                found: tok.len(),
            });
        }
        for (s, v) in sum.iter_mut().zip(tok) {
            *s += v;
        }
        count += 1;
    }
    if sum.is_empty() {
        return Err(Error::invalid("mean_pool of zero-dimensional tokens"));
    }
    let n = count as f64;
    sum.iter_mut().for_each(|s| *s /= n);
    Ok(Embedding::from_vec_unchecked(sum))
}

/// Exp-normalized weights, computed with max subtraction.
pub fn softmax_weights(scores: &[f64]) -> Result<Vec<f64>> {
    if scores.is_empty() {
        return Err(Error::invalid("softmax of an empty sequence"));
    }
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / total).collect())
}

/// Indices of the `k` largest values, ties toward the smaller index, returned
/// in ascending index order.
pub fn top_k_indices(values: &[f64], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    order.truncate(k);
    order.sort_unstable();
    order
}
