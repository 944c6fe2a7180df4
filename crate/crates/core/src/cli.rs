//! Command-line front end: `generate`, `compress` and `marc`.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::bundle::{self, SyntheticSpec};
use crate::error::{exit_code, Error, Result};
use crate::geometry::{CompressionConfig, GuidanceMode, DEFAULT_COVERAGE_BINS, DEFAULT_RETAIN};
use crate::pipeline::{compress_bundle, CompressionReport};
use crate::shaping::{cgrpo_loss, MarcConfig, RolloutDiagnostics, RolloutGroup, RolloutRecord};

#[derive(Debug, Parser)]
#[command(
    name = "avcompress",
    version,
    about = "Audiovisual token compression toolkit"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a seeded synthetic bundle.
    Generate(GenerateArgs),
    /// Compress a bundle and write the compressed sequence plus a report.
    Compress(CompressArgs),
    /// Evaluate shaped advantages and the clipped objective for rollout groups.
    Marc(MarcArgs),
}

#[derive(Debug, Args)]
struct GenerateArgs {
    #[arg(long)]
    output: PathBuf,
    #[arg(long, default_value_t = bundle::DEFAULT_FRAMES)]
    frames: usize,
    #[arg(long, default_value_t = bundle::DEFAULT_POSITIONS)]
    positions: usize,
    #[arg(long, default_value_t = bundle::DEFAULT_DIM)]
    dim: usize,
    /// Defaults to 25 tokens per frame (16 kHz audio, 1 FPS).
    #[arg(long)]
    audio_tokens: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args)]
struct CompressArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    /// Retained fraction for both modalities.
    #[arg(long, conflicts_with_all = ["retain_video", "retain_audio"])]
    retain: Option<f64>,
    #[arg(long)]
    retain_video: Option<f64>,
    #[arg(long)]
    retain_audio: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_COVERAGE_BINS)]
    coverage_bins: usize,
    /// Explicit tokens kept per selected frame; derived from the video
    /// retain fraction when omitted.
    #[arg(long)]
    tokens_per_frame: Option<usize>,
    #[arg(long, default_value_t = GuidanceMode::FullOmac)]
    mode: GuidanceMode,
    #[arg(long, default_value_t = 1.0)]
    epsilon_w: f64,
}

#[derive(Debug, Args)]
struct MarcArgs {
    /// JSON-lines file, one `{"rollouts": [...]}` group per line.
    #[arg(long)]
    rollouts: PathBuf,
    #[arg(long, default_value_t = 1e-4)]
    tau: f64,
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    #[arg(long, default_value_t = 0.2)]
    epsilon: f64,
    #[arg(long, default_value_t = 0.04)]
    beta: f64,
    /// Also write the report to this file.
    #[arg(long)]
    output: Option<PathBuf>,
}

impl CompressArgs {
    fn config(&self) -> CompressionConfig {
        let (retain_video, retain_audio) = match self.retain {
            Some(r) => (r, r),
            None => (
                self.retain_video.unwrap_or(DEFAULT_RETAIN),
                self.retain_audio.unwrap_or(DEFAULT_RETAIN),
            ),
        };
        CompressionConfig {
            retain_video,
            retain_audio,
            coverage_bins: self.coverage_bins,
            tokens_per_selected_frame: self.tokens_per_frame,
            guidance_mode: self.mode,
            unselected_frame_weight: self.epsilon_w,
        }
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() {
                exit_code::USAGE
            } else {
                exit_code::SUCCESS
            };
            let rendered = e.render().to_string();
            if e.use_stderr() {
                let _ = write!(err, "{rendered}");
            } else {
                let _ = write!(out, "{rendered}");
            }
            return code;
        }
    };
    let result = match cli.command {
        Command::Generate(a) => generate(&a, out),
        Command::Compress(a) => compress(&a, out),
        Command::Marc(a) => marc(&a, out),
    };
    match result {
        Ok(()) => exit_code::SUCCESS,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

fn generate(args: &GenerateArgs, out: &mut dyn Write) -> Result<()> {
    let spec = SyntheticSpec {
        frames: args.frames,
        positions: args.positions,
        dim: args.dim,
        audio_tokens: args
            .audio_tokens
            .unwrap_or_else(|| bundle::default_audio_tokens(args.frames)),
        seed: args.seed,
    };
    let b = bundle::generate_synthetic(&spec)?;
    bundle::save_bundle(&b, &args.output)?;
    writeln!(
        out,
        "wrote {} ({} frames x {} positions, {} audio tokens, dim {}, seed {})",
        args.output.display(),
        spec.frames,
        spec.positions,
        spec.audio_tokens,
        spec.dim,
        spec.seed
    )
    .map_err(|e| Error::io("<stdout>", e))
}

fn compress(args: &CompressArgs, out: &mut dyn Write) -> Result<()> {
    let config = args.config();
    config.validate()?;
    let b = bundle::load_bundle(&args.input)?;

    let start = Instant::now();
    let output = compress_bundle(&b, &config)?;
    let wall_time_ms = start.elapsed().as_secs_f64() * 1e3;

    let report = CompressionReport::new(&output, &config, b.grid.frames(), wall_time_ms);
    bundle::save_compressed(&output.sequence, &report, &args.output)?;
    writeln!(
        out,
        "retained {}/{} tokens (ratio {:.4}, mode {}) -> {}",
        report.token_count,
        report.original_tokens,
        report.retained_ratio_overall,
        report.guidance_mode,
        args.output.display()
    )
    .map_err(|e| Error::io("<stdout>", e))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct GroupLine {
    #[serde(default)]
    id: Option<String>,
    rollouts: Vec<RolloutRecord>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParsedGroup {
    pub line: usize,
    pub id: Option<String>,
    pub group: RolloutGroup,
}

/// Parses a JSON-lines rollout file; blank lines and `#` comments are skipped.
pub fn parse_rollout_groups(text: &str) -> Result<Vec<ParsedGroup>> {
    let mut groups = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let parsed: GroupLine = serde_json::from_str(trimmed).map_err(|e| Error::RolloutParse {
            line,
            message: e.to_string(),
        })?;
        let group = RolloutGroup::new(parsed.rollouts).map_err(|e| Error::RolloutParse {
            line,
            message: e.to_string(),
        })?;
        groups.push(ParsedGroup {
            line,
            id: parsed.id,
            group,
        });
    }
    if groups.is_empty() {
        return Err(Error::RolloutParse {
            line: 0,
            message: "no rollout groups found".into(),
        });
    }
    Ok(groups)
}

#[derive(Debug, Serialize)]
struct GroupReport {
    line: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    id: Option<String>,
    loss: f64,
    rollouts: Vec<RolloutDiagnostics>,
}

#[derive(Debug, Serialize)]
struct MarcReport {
    config: MarcConfig,
    groups: Vec<GroupReport>,
    mean_loss: f64,
}

fn marc(args: &MarcArgs, out: &mut dyn Write) -> Result<()> {
    let config = MarcConfig {
        tau: args.tau,
        lambda_shape: args.lambda,
        epsilon_clip: args.epsilon,
        beta_kl: args.beta,
    };
    config.validate()?;
    let text = read_text(&args.rollouts)?;
    let groups = parse_rollout_groups(&text)?;

    let mut reports = Vec::with_capacity(groups.len());
    for g in groups {
        let res = cgrpo_loss(&g.group, &config)?;
        reports.push(GroupReport {
            line: g.line,
            id: g.id,
            loss: res.loss,
            rollouts: res.rollouts,
        });
    }
    let mean_loss = reports.iter().map(|r| r.loss).sum::<f64>() / reports.len() as f64;
    let report = MarcReport {
        config,
        groups: reports,
        mean_loss,
    };
    let mut bytes = serde_json::to_vec_pretty(&report).expect("serializable report");
    bytes.push(b'\n');
    if let Some(path) = &args.output {
        std::fs::write(path, &bytes).map_err(|e| Error::io(path, e))?;
    }
    out.write_all(&bytes).map_err(|e| Error::io("<stdout>", e))
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingFile(path.to_path_buf()),
        _ => Error::io(path, e),
    })
}
