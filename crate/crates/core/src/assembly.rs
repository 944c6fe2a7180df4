//! Interleaves retained audio anchors and visual items back into temporal
//! order.
//!
//! Ordering is by frame. Within a frame, its audio anchors come first in
//! ascending token index, followed by its visual items in position order;
//! the frame memory token sits at the slot it replaced.

use serde::{Deserialize, Serialize};

use crate::audio::AudioCompressionResult;
use crate::error::{Error, Result};
use crate::geometry::{validate_alignment, Embedding};
use crate::visual::VisualCompressionResult;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Modality {
    /// A merged (or untouched) audio anchor.
    Audio,
    /// An original visual token.
    Video,
    /// A pooled frame memory token.
    VideoMemory,
}

/// Where a token came from; indices are zero-based.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum OriginalPosition {
    Video { frame: usize, position: usize },
    Audio { index: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub struct CompressedToken {
    pub modality: Modality,
    pub position: OriginalPosition,
    /// Frame the token is ordered under.
    pub frame: usize,
    pub feature: Embedding,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SequenceStats {
    pub original_video_tokens: usize,
    pub original_audio_tokens: usize,
    pub retained_video: usize,
    pub retained_audio: usize,
    pub retained_ratio_overall: f64,
    pub discarded_zero_budget_audio: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CompressedSequence {
    pub tokens: Vec<CompressedToken>,
    pub stats: SequenceStats,
}

impl CompressedSequence {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

pub fn assemble(
    visual: &VisualCompressionResult,
    audio: &AudioCompressionResult,
    grid_meta: (usize, usize),
    stream_meta: (usize, &[usize]),
) -> Result<CompressedSequence> {
    let (frames, positions) = grid_meta;
    let (audio_tokens, alignment) = stream_meta;

    if visual.frames() != frames {
        return Err(Error::invalid(format!(
            "visual result covers {} frames, grid has {frames}",
            visual.frames()
        )));
    }
    if visual.positions_per_frame != positions {
        return Err(Error::invalid(format!(
            "visual result has {} positions per frame, grid has {positions}",
            visual.positions_per_frame
        )));
    }
    if alignment.len() != audio_tokens {
        return Err(Error::invalid(format!(
            "alignment lists {} tokens, stream has {audio_tokens}",
            alignment.len()
        )));
    }
    validate_alignment(alignment, frames)?;
    if audio_tokens > 0 && audio.per_frame_budget.len() != frames {
        return Err(Error::invalid(format!(
            "audio budgets cover {} frames, grid has {frames}",
            audio.per_frame_budget.len()
        )));
    }

    let mut per_frame: Vec<Vec<CompressedToken>> = vec![Vec::new(); frames];
    let mut last_anchor = None;
    for anchor in &audio.anchors {
        if anchor.index >= audio_tokens {
            return Err(Error::invalid(format!(
                "anchor {} outside the {audio_tokens}-token stream",
                anchor.index
            )));
        }
        if last_anchor.is_some_and(|prev| prev >= anchor.index) {
            return Err(Error::invalid("audio anchors are not strictly ascending"));
        }
        last_anchor = Some(anchor.index);
        let frame = alignment[anchor.index];
        per_frame[frame].push(CompressedToken {
            modality: Modality::Audio,
            position: OriginalPosition::Audio {
                index: anchor.index,
            },
            frame,
            feature: anchor.feature.clone(),
        });
    }

    for sel in &visual.selected {
        if sel.frame >= frames {
            return Err(Error::invalid(format!(
                "selected frame {} out of range",
                sel.frame
            )));
        }
        let mut items: Vec<(usize, Modality, &Embedding)> = sel
            .kept
            .iter()
            .map(|(p, e)| (*p, Modality::Video, e))
            .collect();
        if let Some(mem) = &sel.memory {
            items.push((mem.slot, Modality::VideoMemory, &mem.feature));
        }
        items.sort_by_key(|(p, _, _)| *p);
        if items.iter().any(|(p, _, _)| *p >= positions) {
            return Err(Error::invalid(format!(
                "visual item of frame {} outside {positions} positions",
                sel.frame
            )));
        }
        if items.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::invalid(format!(
                "duplicate visual position in frame {}",
                sel.frame
            )));
        }
        per_frame[sel.frame].extend(items.into_iter().map(|(p, modality, e)| CompressedToken {
            modality,
            position: OriginalPosition::Video {
                frame: sel.frame,
                position: p,
            },
            frame: sel.frame,
            feature: e.clone(),
        }));
    }

    let tokens: Vec<CompressedToken> = per_frame.into_iter().flatten().collect();
    let retained_audio = audio.anchors.len();
    let retained_video = tokens.len() - retained_audio;
    let original_video_tokens = frames * positions;
    let original = original_video_tokens + audio_tokens;
    let stats = SequenceStats {
        original_video_tokens,
        original_audio_tokens: audio_tokens,
        retained_video,
        retained_audio,
        retained_ratio_overall: (retained_video + retained_audio) as f64 / original as f64,
        discarded_zero_budget_audio: audio.discarded_zero_budget,
    };
    Ok(CompressedSequence { tokens, stats })
}
