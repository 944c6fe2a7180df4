//! Audio anchor selection, anchor merging and visually guided budget
//! apportionment.
//!
//! The total audio budget is split across frames in proportion to
//! `n_t · w_t`, where `n_t` counts the audio tokens aligned to frame `t` and
//! `w_t` comes from the visual branch. Inside each frame segment the most
//! query-relevant tokens become anchors and every dropped token is merged into
//! its nearest anchor of the same segment.

use crate::error::{Error, Result};
use crate::geometry::{
    cosine, round_half_up, top_k_indices, AudioTokenStream, CompressionConfig, Embedding,
    GuidanceMode,
};
use crate::visual::VisualCompressionResult;

#[derive(Clone, Debug, PartialEq)]
pub struct AudioAnchor {
    /// Zero-based index of the anchor token in the original stream.
    pub index: usize,
    /// Merged feature.
    pub feature: Embedding,
    /// Dropped tokens merged into this anchor, ascending.
    pub merged_from: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AudioCompressionResult {
    /// Anchors in ascending original index.
    pub anchors: Vec<AudioAnchor>,
    pub per_frame_budget: Vec<usize>,
    pub total_budget: usize,
    /// Dropped tokens of zero-budget frames; they merge nowhere.
    pub discarded_zero_budget: usize,
    /// Set when every `n_t·w_t` was zero and budgets fell back to `n_t` alone.
    pub budget_fallback: bool,
}

/// Importance of each audio token: its cosine similarity to the query.
pub fn audio_importance(stream: &AudioTokenStream, query: &[f64]) -> Result<Vec<f64>> {
    (0..stream.len())
        .map(|i| cosine(stream.token(i), query))
        .collect()
}

/// Frame weights from retained visual memory; `epsilon_w` for dropped frames.
pub fn visual_weights(visual: &VisualCompressionResult, epsilon_w: f64) -> Vec<f64> {
    visual
        .retained_per_frame
        .iter()
        .map(|&r| if r > 0 { r as f64 } else { epsilon_w })
        .collect()
}

/// Frame weights for the configured guidance mode.
pub fn guidance_weights(visual: &VisualCompressionResult, config: &CompressionConfig) -> Vec<f64> {
    match config.guidance_mode {
        GuidanceMode::AudioGuided => vec![1.0; visual.frames()],
        // cosine in [-1, 1] mapped to a non-negative weight
        GuidanceMode::VisualGuided => visual
            .frame_scores
            .iter()
            .map(|s| (1.0 + s) / 2.0)
            .collect(),
        GuidanceMode::FullOmac => visual_weights(visual, config.unselected_frame_weight),
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Allocation {
    pub budgets: Vec<usize>,
    pub fallback: bool,
}

/// Integer apportionment of `total` over frames in proportion to `n_t·w_t`.
///
/// Largest remainder with ties to the smaller frame, then any frame over its
/// capacity `n_t` is clamped and the excess handed out one unit at a time to
/// the frame with the most spare capacity (again ties to the smaller frame).
/// The result always sums to `total` and never exceeds `n_t`.
pub fn allocate_budget(n: &[usize], w: &[f64], total: usize) -> Result<Allocation> {
    if n.len() != w.len() {
        return Err(Error::invalid(format!(
            "{} token counts but {} weights",
            n.len(),
            w.len()
        )));
    }
    if let Some(bad) = w.iter().find(|x| !(x.is_finite() && **x >= 0.0)) {
        return Err(Error::invalid(format!(
            "frame weight {bad} is not a non-negative real"
        )));
    }
    let capacity: usize = n.iter().sum();
    if total > capacity {
        return Err(Error::invalid(format!(
            "budget {total} exceeds the {capacity} available tokens"
        )));
    }

    let mut mass: Vec<f64> = n.iter().zip(w).map(|(&c, &x)| c as f64 * x).collect();
    let mut fallback = false;
    if mass.iter().sum::<f64>() <= 0.0 {
        if total > 0 {
            log::warn!("all frame weights vanish; apportioning audio budget by token count");
        }
        fallback = true;
        mass = n.iter().map(|&c| c as f64).collect();
    }
    let mass_total: f64 = mass.iter().sum();
    if total == 0 || mass_total == 0.0 {
        return Ok(Allocation {
            budgets: vec![0; n.len()],
            fallback,
        });
    }

    let targets: Vec<f64> = mass.iter().map(|m| total as f64 * m / mass_total).collect();
    let mut budgets: Vec<usize> = targets.iter().map(|r| r.floor() as usize).collect();
    let remainders: Vec<f64> = targets
        .iter()
        .zip(&budgets)
        .map(|(r, &b)| r - b as f64)
        .collect();

    let mut order: Vec<usize> = (0..n.len()).collect();
    order.sort_by(|&a, &b| remainders[b].total_cmp(&remainders[a]).then(a.cmp(&b)));
    let mut assigned: usize = budgets.iter().sum();
    // Rounding in the targets can leave the floors a unit off either way.
    let mut cursor = order.iter().rev().cycle();
    while assigned > total {
        let &t = cursor.next().expect("cycle is infinite");
        if budgets[t] > 0 {
            budgets[t] -= 1;
            assigned -= 1;
        }
    }
    for &t in order.iter().cycle().take(total - assigned) {
        budgets[t] += 1;
    }

    let mut excess = 0;
    for (b, &cap) in budgets.iter_mut().zip(n) {
        if *b > cap {
            excess += *b - cap;
            *b = cap;
        }
    }
    for _ in 0..excess {
        let t = (0..n.len())
            .max_by(|&a, &b| {
                (n[a] - budgets[a])
                    .cmp(&(n[b] - budgets[b]))
                    .then(b.cmp(&a))
            })
            .expect("non-empty frames");
        budgets[t] += 1;
    }

    Ok(Allocation { budgets, fallback })
}

/// Anchors of every frame: its `b_t` most important tokens, ascending.
pub fn select_anchors_per_frame(
    stream: &AudioTokenStream,
    importance: &[f64],
    budgets: &[usize],
) -> Result<Vec<Vec<usize>>> {
    if importance.len() != stream.len() {
        return Err(Error::invalid(format!(
            "{} importance scores for {} audio tokens",
            importance.len(),
            stream.len()
        )));
    }
    let segments = stream.frame_segments();
    if budgets.len() != segments.len() {
        return Err(Error::invalid(format!(
            "{} budgets for {} frames",
            budgets.len(),
            segments.len()
        )));
    }
    segments
        .into_iter()
        .zip(budgets)
        .map(|(seg, &b)| {
            if b > seg.len() {
                return Err(Error::invalid(format!(
                    "budget {b} exceeds the {} tokens of the frame",
                    seg.len()
                )));
            }
            Ok(top_k_indices(&importance[seg.clone()], b)
                .into_iter()
                .map(|i| seg.start + i)
                .collect())
        })
        .collect()
}

/// Merge weight of a dropped token into an anchor: the non-negative cosine.
pub fn merge_weight(dropped: &[f64], anchor: &[f64]) -> Result<f64> {
    Ok(cosine(dropped, anchor)?.max(0.0))
}

/// `(a_j + Σ ω_i a_i) / (1 + Σ ω_i)`.
pub fn merge_anchor(anchor: &[f64], group: &[(&[f64], f64)]) -> Result<Embedding> {
    let mut numer = anchor.to_vec();
    let mut denom = 1.0;
    for &(tok, weight) in group {
        if tok.len() != anchor.len() {
            return Err(Error::DimensionMismatch {
                expected: anchor.len(),
                found: tok.len(),
            });
        }
        if !(weight >= 0.0 && weight.is_finite()) {
            return Err(Error::invalid(format!(
                "merge weight {weight} is not a non-negative real"
            )));
        }
        for (acc, v) in numer.iter_mut().zip(tok) {
            *acc += weight * v;
        }
        denom += weight;
    }
    numer.iter_mut().for_each(|v| *v /= denom);
    Embedding::new(numer)
}

/// Assigns every non-anchor index of `segment` to its nearest anchor by index
/// distance, ties to the earlier anchor. `anchors` must be ascending and
/// non-empty. Returns one ascending group per anchor.
pub fn assign_to_anchors(segment: std::ops::Range<usize>, anchors: &[usize]) -> Vec<Vec<usize>> {
    let mut groups = vec![Vec::new(); anchors.len()];
    let mut next = 0;
    for i in segment {
        while next < anchors.len() && anchors[next] < i {
            next += 1;
        }
        if next < anchors.len() && anchors[next] == i {
            continue;
        }
        // anchors[next - 1] < i < anchors[next]
        let slot = match (next.checked_sub(1), anchors.get(next)) {
            (Some(before), Some(&after)) => {
                if i - anchors[before] <= after - i {
                    before
                } else {
                    next
                }
            }
            (Some(before), None) => before,
            (None, Some(_)) => next,
            (None, None) => unreachable!("anchors must be non-empty"),
        };
        groups[slot].push(i);
    }
    groups
}

/// Total audio budget `max(1, round(retain·N_a))`, zero for an empty stream.
pub fn audio_budget(tokens: usize, retain_audio: f64) -> usize {
    if tokens == 0 {
        return 0;
    }
    round_half_up(retain_audio * tokens as f64).clamp(1, tokens)
}

pub fn compress_audio(
    stream: &AudioTokenStream,
    importance: &[f64],
    visual: &VisualCompressionResult,
    config: &CompressionConfig,
) -> Result<AudioCompressionResult> {
    config.validate()?;
    if stream.frames() != visual.frames() {
        return Err(Error::invalid(format!(
            "audio stream is aligned to {} frames but the visual result has {}",
            stream.frames(),
            visual.frames()
        )));
    }
    let n = stream.tokens_per_frame();
    let total_budget = audio_budget(stream.len(), config.retain_audio);
    let weights = guidance_weights(visual, config);
    let Allocation { budgets, fallback } = allocate_budget(&n, &weights, total_budget)?;
    let anchor_sets = select_anchors_per_frame(stream, importance, &budgets)?;

    let mut anchors = Vec::with_capacity(total_budget);
    let mut discarded = 0;
    for (segment, frame_anchors) in stream.frame_segments().into_iter().zip(&anchor_sets) {
        if frame_anchors.is_empty() {
            discarded += segment.len();
            continue;
        }
        let groups = assign_to_anchors(segment, frame_anchors);
        for (&j, group) in frame_anchors.iter().zip(groups) {
            let anchor = stream.token(j);
            let weighted = group
                .iter()
                .map(|&i| Ok((stream.token(i), merge_weight(stream.token(i), anchor)?)))
                .collect::<Result<Vec<_>>>()?;
            anchors.push(AudioAnchor {
                index: j,
                feature: merge_anchor(anchor, &weighted)?,
                merged_from: group,
            });
        }
    }
    if discarded > 0 {
        log::debug!("{discarded} audio tokens in zero-budget frames were discarded");
    }

    Ok(AudioCompressionResult {
        anchors,
        per_frame_budget: budgets,
        total_budget,
        discarded_zero_budget: discarded,
        budget_fallback: fallback,
    })
}
