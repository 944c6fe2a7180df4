//! End-to-end compression of a loaded bundle and the report it produces.

use serde::{Deserialize, Serialize};

use crate::assembly::{assemble, CompressedSequence};
use crate::audio::{audio_importance, compress_audio, AudioCompressionResult};
use crate::bundle::Bundle;
use crate::error::Result;
use crate::geometry::{CompressionConfig, GuidanceMode};
use crate::visual::{compress_video, kept_tokens_per_frame, VisualCompressionResult};

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineOutput {
    pub visual: VisualCompressionResult,
    pub audio: AudioCompressionResult,
    pub sequence: CompressedSequence,
}

pub fn compress_bundle(bundle: &Bundle, config: &CompressionConfig) -> Result<PipelineOutput> {
    let visual = compress_video(&bundle.grid, &bundle.query, config)?;
    let importance = audio_importance(&bundle.audio, &bundle.query)?;
    let audio = compress_audio(&bundle.audio, &importance, &visual, config)?;
    let sequence = assemble(
        &visual,
        &audio,
        (bundle.grid.frames(), bundle.grid.positions()),
        (bundle.audio.len(), bundle.audio.alignment()),
    )?;
    Ok(PipelineOutput {
        visual,
        audio,
        sequence,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub retain_video: f64,
    pub retain_audio: f64,
    pub coverage_bins: usize,
    /// `null` when derived from `retain_video`.
    pub tokens_per_selected_frame: Option<usize>,
    /// Tokens actually kept per selected frame, memory token excluded.
    pub kept_tokens_per_frame: usize,
    pub unselected_frame_weight: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompressionReport {
    pub retained_ratio_overall: f64,
    /// `1 − retained_ratio_overall`.
    pub compression_ratio: f64,
    pub original_tokens: usize,
    pub token_count: usize,
    pub original_video_tokens: usize,
    pub original_audio_tokens: usize,
    pub retained_video: usize,
    pub retained_audio: usize,
    pub discarded_zero_budget_audio: usize,
    /// One-based frame indices.
    pub selected_frames: Vec<usize>,
    pub per_frame_budgets: Vec<usize>,
    pub audio_budget: usize,
    pub budget_fallback: bool,
    pub guidance_mode: GuidanceMode,
    pub config: ConfigEcho,
    /// Compression time only; bundle loading is excluded.
    pub wall_time_ms: f64,
}

impl CompressionReport {
    pub fn new(
        output: &PipelineOutput,
        config: &CompressionConfig,
        frames: usize,
        wall_time_ms: f64,
    ) -> Self {
        let stats = &output.sequence.stats;
        CompressionReport {
            retained_ratio_overall: stats.retained_ratio_overall,
            compression_ratio: 1.0 - stats.retained_ratio_overall,
            original_tokens: stats.original_video_tokens + stats.original_audio_tokens,
            token_count: output.sequence.len(),
            original_video_tokens: stats.original_video_tokens,
            original_audio_tokens: stats.original_audio_tokens,
            retained_video: stats.retained_video,
            retained_audio: stats.retained_audio,
            discarded_zero_budget_audio: stats.discarded_zero_budget_audio,
            selected_frames: output
                .visual
                .selected_frames()
                .iter()
                .map(|t| t + 1)
                .collect(),
            per_frame_budgets: output.audio.per_frame_budget.clone(),
            audio_budget: output.audio.total_budget,
            budget_fallback: output.audio.budget_fallback,
            guidance_mode: config.guidance_mode,
            config: ConfigEcho {
                retain_video: config.retain_video,
                retain_audio: config.retain_audio,
                coverage_bins: config.coverage_bins,
                tokens_per_selected_frame: config.tokens_per_selected_frame,
                kept_tokens_per_frame: kept_tokens_per_frame(
                    config,
                    frames,
                    output.visual.positions_per_frame,
                ),
                unselected_frame_weight: config.unselected_frame_weight,
            },
            wall_time_ms,
        }
    }
}
