//! Query-relevance frame selection and per-frame visual memory.
//!
//! Each frame is summarized by the mean of its tokens and scored against the
//! query. A coverage-aware rule picks key frames, then inside every selected
//! frame the tokens that depart most from the frame centroid are kept and
//! pooled into one extra memory token that takes over a dropped slot.

use std::ops::Range;

use crate::error::{Error, Result};
use crate::geometry::{
    cosine, mean_pool, round_half_up, softmax_weights, top_k_indices, CompressionConfig, Embedding,
    VideoTokenGrid,
};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FrameScore {
    /// Zero-based frame index.
    pub frame: usize,
    pub score: f64,
}

/// The pooled frame memory token and the slot it occupies.
#[derive(Clone, Debug, PartialEq)]
pub struct MemoryToken {
    pub slot: usize,
    pub feature: Embedding,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SelectedFrame {
    pub frame: usize,
    /// Kept tokens as `(position, feature)`, strictly increasing in position.
    pub kept: Vec<(usize, Embedding)>,
    /// `None` only for single-position frames, whose one token is kept as is.
    pub memory: Option<MemoryToken>,
}

impl SelectedFrame {
    pub fn kept_positions(&self) -> Vec<usize> {
        self.kept.iter().map(|(p, _)| *p).collect()
    }

    pub fn retained(&self) -> usize {
        self.kept.len() + usize::from(self.memory.is_some())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct VisualCompressionResult {
    /// Query relevance of every frame.
    pub frame_scores: Vec<f64>,
    /// Selected frames in ascending frame order.
    pub selected: Vec<SelectedFrame>,
    /// Retained visual items for every frame; zero for unselected frames.
    pub retained_per_frame: Vec<usize>,
    pub positions_per_frame: usize,
}

impl VisualCompressionResult {
    pub fn selected_frames(&self) -> Vec<usize> {
        self.selected.iter().map(|f| f.frame).collect()
    }

    pub fn frames(&self) -> usize {
        self.retained_per_frame.len()
    }

    pub fn retained_total(&self) -> usize {
        self.retained_per_frame.iter().sum()
    }
}

pub fn frame_summaries(grid: &VideoTokenGrid) -> Vec<Embedding> {
    (0..grid.frames())
        .map(|t| mean_pool(grid.frame_tokens(t)).expect("grid frames are non-empty"))
        .collect()
}

pub fn frame_scores(summaries: &[Embedding], query: &[f64]) -> Result<Vec<FrameScore>> {
    summaries
        .iter()
        .enumerate()
        .map(|(frame, s)| {
            Ok(FrameScore {
                frame,
                score: cosine(s, query)?,
            })
        })
        .collect()
}

/// Contiguous near-equal bins over `0..frames`; earlier bins take the remainder.
pub fn coverage_bins(frames: usize, bins: usize) -> Vec<Range<usize>> {
    let base = frames / bins;
    let extra = frames % bins;
    let mut start = 0;
    (0..bins)
        .map(|b| {
            let len = base + usize::from(b < extra);
            let r = start..start + len;
            start += len;
            r
        })
        .collect()
}

/// Number of key frames kept for a retain fraction.
pub fn key_frame_count(frames: usize, retain_video: f64) -> usize {
    round_half_up(retain_video * frames as f64).clamp(1, frames)
}

/// Picks `max(1, round(retain·T))` key frames.
///
/// The best frame of every coverage bin is taken first; the rest of the
/// budget goes to the globally best remaining frames. When the budget is
/// smaller than the bin count, the best bin leaders win. Ties always go to the
/// smaller frame index. Returns ascending zero-based frame indices.
pub fn select_key_frames(
    scores: &[FrameScore],
    retain_video: f64,
    coverage_bins: usize,
) -> Result<Vec<usize>> {
    let frames = scores.len();
    if frames == 0 {
        return Err(Error::invalid("no frames to select from"));
    }
    if coverage_bins == 0 || coverage_bins > frames {
        return Err(Error::invalid(format!(
            "coverage_bins must lie in 1..={frames}, got {coverage_bins}"
        )));
    }
    if !(retain_video > 0.0 && retain_video <= 1.0) {
        return Err(Error::invalid(format!(
            "retain_video must lie in (0, 1], got {retain_video}"
        )));
    }
    let values: Vec<f64> = scores.iter().map(|s| s.score).collect();
    let budget = key_frame_count(frames, retain_video);

    let mut leaders: Vec<usize> = coverage_bins_iter(frames, coverage_bins)
        .map(|bin| bin.start + top_k_indices(&values[bin.clone()], 1)[0])
        .collect();

    let mut chosen = vec![false; frames];
    if budget < leaders.len() {
        let leader_scores: Vec<f64> = leaders.iter().map(|&t| values[t]).collect();
        // leaders are ascending, so a tie on score still prefers the earlier frame
        leaders = top_k_indices(&leader_scores, budget)
            .into_iter()
            .map(|i| leaders[i])
            .collect();
    }
    for &t in &leaders {
        chosen[t] = true;
    }

    let remaining = budget - leaders.len();
    if remaining > 0 {
        let mut rest: Vec<usize> = (0..frames).filter(|&t| !chosen[t]).collect();
        rest.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
        for &t in rest.iter().take(remaining) {
            chosen[t] = true;
        }
    }

    Ok((0..frames).filter(|&t| chosen[t]).collect())
}

fn coverage_bins_iter(frames: usize, bins: usize) -> impl Iterator<Item = Range<usize>> {
    coverage_bins(frames, bins)
        .into_iter()
        .filter(|b| !b.is_empty())
}

/// `1 − cos(token, centroid)` for every token of one frame.
pub fn contrast_scores(frame_tokens: &[&[f64]]) -> Result<Vec<f64>> {
    let centroid = mean_pool(frame_tokens.iter().copied())?;
    frame_tokens
        .iter()
        .map(|tok| Ok(1.0 - cosine(tok, &centroid)?))
        .collect()
}

/// Min-max normalization to `[0, 1]`; a constant input maps to all zeros.
pub fn normalize_contrast(alpha: &[f64]) -> Vec<f64> {
    let min = alpha.iter().copied().fold(f64::INFINITY, f64::min);
    let max = alpha.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = max - min;
    if span <= 0.0 {
        return vec![0.0; alpha.len()];
    }
    alpha.iter().map(|a| (a - min) / span).collect()
}

/// Positions of the `k` highest normalized contrast scores, ascending.
pub fn select_frame_tokens(alpha_hat: &[f64], k: usize) -> Result<Vec<usize>> {
    if k == 0 || k > alpha_hat.len() {
        return Err(Error::invalid(format!(
            "cannot keep {k} tokens out of {}",
            alpha_hat.len()
        )));
    }
    Ok(top_k_indices(alpha_hat, k))
}

/// Softmax-weighted pooling of the kept tokens by their normalized contrast.
pub fn frame_memory_token(
    frame_tokens: &[&[f64]],
    kept: &[usize],
    alpha_hat: &[f64],
) -> Result<Embedding> {
    if kept.is_empty() {
        return Err(Error::invalid("memory token needs at least one kept token"));
    }
    if let Some(&p) = kept
        .iter()
        .find(|&&p| p >= frame_tokens.len() || p >= alpha_hat.len())
    {
        return Err(Error::invalid(format!("kept position {p} out of range")));
    }
    let scores: Vec<f64> = kept.iter().map(|&p| alpha_hat[p]).collect();
    let weights = softmax_weights(&scores)?;
    let dim = frame_tokens[kept[0]].len();
    let mut z = vec![0.0; dim];
    for (&p, w) in kept.iter().zip(&weights) {
        let tok = frame_tokens[p];
        if tok.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: tok.len(),
            });
        }
        for (zi, v) in z.iter_mut().zip(tok) {
            *zi += w * v;
        }
    }
    Embedding::new(z)
}

/// Explicit tokens kept in every selected frame.
///
/// With no explicit setting, the per-frame item count (kept tokens plus the
/// memory token) is chosen so the visual total tracks `retain_video·T·P`.
/// Always within `1..=P−1` for frames with at least two positions.
pub fn kept_tokens_per_frame(
    config: &CompressionConfig,
    grid_frames: usize,
    positions: usize,
) -> usize {
    if positions == 1 {
        return 1;
    }
    let k = match config.tokens_per_selected_frame {
        Some(k) => k,
        None => {
            let selected = key_frame_count(grid_frames, config.retain_video);
            let target = config.retain_video * (grid_frames * positions) as f64;
            let items = round_half_up(target / selected as f64);
            items.saturating_sub(1)
        }
    };
    k.clamp(1, positions - 1)
}

pub fn compress_video(
    grid: &VideoTokenGrid,
    query: &[f64],
    config: &CompressionConfig,
) -> Result<VisualCompressionResult> {
    config.validate()?;
    if query.len() != grid.dim() {
        return Err(Error::DimensionMismatch {
            expected: grid.dim(),
            found: query.len(),
        });
    }
    let frames = grid.frames();
    let positions = grid.positions();

    let summaries = frame_summaries(grid);
    let scores = frame_scores(&summaries, query)?;
    let bins = config.coverage_bins.min(frames);
    let selected_frames = select_key_frames(&scores, config.retain_video, bins)?;
    let k = kept_tokens_per_frame(config, frames, positions);

    let mut retained_per_frame = vec![0; frames];
    let mut selected = Vec::with_capacity(selected_frames.len());
    for t in selected_frames {
        let frame = compress_frame(grid, t, k)?;
        retained_per_frame[t] = frame.retained();
        selected.push(frame);
    }

    Ok(VisualCompressionResult {
        frame_scores: scores.iter().map(|s| s.score).collect(),
        selected,
        retained_per_frame,
        positions_per_frame: positions,
    })
}

fn compress_frame(grid: &VideoTokenGrid, t: usize, k: usize) -> Result<SelectedFrame> {
    let tokens = grid.frame_tokens(t);
    if tokens.len() == 1 {
        return Ok(SelectedFrame {
            frame: t,
            kept: vec![(0, Embedding::from_vec_unchecked(tokens[0].to_vec()))],
            memory: None,
        });
    }
    let alpha_hat = normalize_contrast(&contrast_scores(&tokens)?);
    let kept = select_frame_tokens(&alpha_hat, k)?;
    let feature = frame_memory_token(&tokens, &kept, &alpha_hat)?;

    // The memory token takes the lowest-scoring dropped slot, earliest on ties.
    let mut is_kept = vec![false; tokens.len()];
    kept.iter().for_each(|&p| is_kept[p] = true);
    let slot = (0..tokens.len())
        .filter(|&p| !is_kept[p])
        .min_by(|&a, &b| alpha_hat[a].total_cmp(&alpha_hat[b]).then(a.cmp(&b)))
        .expect("k < P leaves a dropped slot");

    Ok(SelectedFrame {
        frame: t,
        kept: kept
            .into_iter()
            .map(|p| (p, Embedding::from_vec_unchecked(tokens[p].to_vec())))
            .collect(),
        memory: Some(MemoryToken { slot, feature }),
    })
}
