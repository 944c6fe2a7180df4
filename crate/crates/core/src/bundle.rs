//! On-disk bundle format.
//!
//! A bundle is a directory holding `manifest.json` and three raw blobs of
//! little-endian IEEE-754 single-precision values: the video grid
//! (`frames·positions·dim`, frame-major), the audio stream (`audio_tokens·dim`)
//! and the query (`dim`). Alignment entries in the manifest are one-based
//! frame indices.
//!
//! A compressed bundle is a directory with `compressed.json` (token metadata
//! and stats), `features.f32` (one row of `dim` values per output token) and
//! `report.json`.

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::assembly::{
    CompressedSequence, CompressedToken, Modality, OriginalPosition, SequenceStats,
};
use crate::error::{Error, Result};
use crate::geometry::{AudioTokenStream, Embedding, VideoTokenGrid};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const COMPRESSED_FILE: &str = "compressed.json";
pub const FEATURES_FILE: &str = "features.f32";
pub const REPORT_FILE: &str = "report.json";

/// Upper bound on tokens per frame accepted at load time.
pub const MAX_FRAME_TOKENS: usize = 50_174;

pub const DEFAULT_FRAMES: usize = 32;
pub const DEFAULT_POSITIONS: usize = 196;
pub const DEFAULT_DIM: usize = 64;
pub const SAMPLE_RATE_HZ: usize = 16_000;
pub const FRAMES_PER_SECOND: usize = 1;
/// 40 ms audio hop, i.e. 25 audio tokens per second of 16 kHz audio.
pub const AUDIO_SAMPLES_PER_TOKEN: usize = 640;

/// Audio tokens covering `frames` seconds of 16 kHz audio at 1 FPS.
pub fn default_audio_tokens(frames: usize) -> usize {
    frames * SAMPLE_RATE_HZ / (FRAMES_PER_SECOND * AUDIO_SAMPLES_PER_TOKEN)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BundleManifest {
    pub dim: usize,
    pub frames: usize,
    pub positions_per_frame: usize,
    pub audio_tokens: usize,
    pub alignment: Vec<usize>,
    pub video: String,
    pub audio: String,
    pub query: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Bundle {
    pub grid: VideoTokenGrid,
    pub audio: AudioTokenStream,
    pub query: Embedding,
}

impl Bundle {
    pub fn token_count(&self) -> usize {
        self.grid.token_count() + self.audio.len()
    }

    fn manifest(&self) -> BundleManifest {
        BundleManifest {
            dim: self.grid.dim(),
            frames: self.grid.frames(),
            positions_per_frame: self.grid.positions(),
            audio_tokens: self.audio.len(),
            alignment: self.audio.alignment().iter().map(|t| t + 1).collect(),
            video: "video.f32".into(),
            audio: "audio.f32".into(),
            query: "query.f32".into(),
        }
    }
}

fn bundle_paths(path: &Path) -> (PathBuf, PathBuf) {
    if path.is_file() {
        let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        (dir, path.to_path_buf())
    } else {
        (path.to_path_buf(), path.join(MANIFEST_FILE))
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingFile(path.to_path_buf()),
        _ => Error::io(path, e),
    })
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

/// Reads `expected` little-endian f32 values, rejecting wrong sizes and
/// non-finite payloads.
pub fn read_f32_blob(path: &Path, expected: usize) -> Result<Vec<f64>> {
    let bytes = read_file(path)?;
    let want = expected as u64 * 4;
    if bytes.len() as u64 != want {
        return Err(Error::SizeMismatch {
            path: path.to_path_buf(),
            expected: want,
            found: bytes.len() as u64,
        });
    }
    bytes
        .chunks_exact(4)
        .enumerate()
        .map(|(i, c)| {
            let v = f32::from_le_bytes([c[0], c[1], c[2], c[3]]);
            if v.is_finite() {
                Ok(f64::from(v))
            } else {
                Err(Error::NonFinite {
                    path: path.to_path_buf(),
                    index: i,
                })
            }
        })
        .collect()
}

pub fn encode_f32(values: &[f64]) -> Vec<u8> {
    values
        .iter()
        .flat_map(|&v| (v as f32).to_le_bytes())
        .collect()
}

fn parse_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = read_file(path)?;
    serde_json::from_slice(&bytes).map_err(|e| Error::Manifest {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

fn to_json_bytes<T: Serialize>(value: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(value).expect("serializable value");
    out.push(b'\n');
    out
}

/// Loads and validates a bundle from its directory (or its manifest path).
pub fn load_bundle(path: impl AsRef<Path>) -> Result<Bundle> {
    let (dir, manifest_path) = bundle_paths(path.as_ref());
    let m: BundleManifest = parse_json(&manifest_path)?;

    if m.dim == 0 || m.frames == 0 || m.positions_per_frame == 0 {
        return Err(Error::Manifest {
            path: manifest_path,
            message: "dim, frames and positions_per_frame must be positive".into(),
        });
    }
    if m.positions_per_frame > MAX_FRAME_TOKENS {
        return Err(Error::FrameTooLarge {
            positions: m.positions_per_frame,
            limit: MAX_FRAME_TOKENS,
        });
    }
    if m.alignment.len() != m.audio_tokens {
        return Err(Error::Alignment(format!(
            "{} alignment entries for {} audio tokens",
            m.alignment.len(),
            m.audio_tokens
        )));
    }
    if let Some(i) = m.alignment.iter().position(|&t| t == 0 || t > m.frames) {
        return Err(Error::Alignment(format!(
            "token {i} aligned to frame {} outside 1..={}",
            m.alignment[i], m.frames
        )));
    }
    let alignment: Vec<usize> = m.alignment.iter().map(|t| t - 1).collect();
    crate::geometry::validate_alignment(&alignment, m.frames)?;

    let video = read_f32_blob(
        &dir.join(&m.video),
        m.frames * m.positions_per_frame * m.dim,
    )?;
    let audio = read_f32_blob(&dir.join(&m.audio), m.audio_tokens * m.dim)?;
    let query = read_f32_blob(&dir.join(&m.query), m.dim)?;

    Ok(Bundle {
        grid: VideoTokenGrid::new(m.frames, m.positions_per_frame, m.dim, video)?,
        audio: AudioTokenStream::new(m.dim, m.frames, audio, alignment)?,
        query: Embedding::new(query)?,
    })
}

/// Writes a bundle; values are narrowed to single precision.
pub fn save_bundle(bundle: &Bundle, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    create_dir(dir)?;
    let m = bundle.manifest();
    write_file(&dir.join(&m.video), &encode_f32(bundle.grid.data()))?;
    write_file(&dir.join(&m.audio), &encode_f32(bundle.audio.data()))?;
    write_file(&dir.join(&m.query), &encode_f32(&bundle.query))?;
    write_file(&dir.join(MANIFEST_FILE), &to_json_bytes(&m))
}

/// Audio tokens spread evenly over frames, earlier frames taking the
/// remainder. Zero-based frame indices.
pub fn even_alignment(frames: usize, audio_tokens: usize) -> Vec<usize> {
    let base = audio_tokens / frames;
    let extra = audio_tokens % frames;
    (0..frames)
        .flat_map(|t| std::iter::repeat_n(t, base + usize::from(t < extra)))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SyntheticSpec {
    pub frames: usize,
    pub positions: usize,
    pub dim: usize,
    pub audio_tokens: usize,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            frames: DEFAULT_FRAMES,
            positions: DEFAULT_POSITIONS,
            dim: DEFAULT_DIM,
            audio_tokens: default_audio_tokens(DEFAULT_FRAMES),
            seed: 0,
        }
    }
}

/// Seeded uniform features in `[-1, 1)`, drawn in single precision so the
/// bundle round-trips through its blobs exactly.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Bundle> {
    if spec.frames == 0 || spec.positions == 0 || spec.dim == 0 {
        return Err(Error::invalid("synthetic sizes must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut draw = |n: usize| -> Vec<f64> {
        (0..n)
            .map(|_| f64::from(rng.gen_range(-1.0f32..1.0f32)))
            .collect()
    };
    let video = draw(spec.frames * spec.positions * spec.dim);
    let audio = draw(spec.audio_tokens * spec.dim);
    let query = draw(spec.dim);
    Ok(Bundle {
        grid: VideoTokenGrid::new(spec.frames, spec.positions, spec.dim, video)?,
        audio: AudioTokenStream::new(
            spec.dim,
            spec.frames,
            audio,
            even_alignment(spec.frames, spec.audio_tokens),
        )?,
        query: Embedding::new(query)?,
    })
}

/// One output token's provenance. All indices one-based.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TokenRecord {
    pub modality: Modality,
    pub frame: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub position: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub index: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompressedManifest {
    pub dim: usize,
    pub token_count: usize,
    pub features: String,
    pub stats: SequenceStats,
    pub tokens: Vec<TokenRecord>,
}

fn token_record(tok: &CompressedToken) -> TokenRecord {
    match tok.position {
        OriginalPosition::Video { frame, position } => TokenRecord {
            modality: tok.modality,
            frame: frame + 1,
            position: Some(position + 1),
            index: None,
        },
        OriginalPosition::Audio { index } => TokenRecord {
            modality: tok.modality,
            frame: tok.frame + 1,
            position: None,
            index: Some(index + 1),
        },
    }
}

/// Writes the compressed sequence and its report into `dir`.
pub fn save_compressed<R: Serialize>(
    sequence: &CompressedSequence,
    report: &R,
    dir: impl AsRef<Path>,
) -> Result<()> {
    let dir = dir.as_ref();
    create_dir(dir)?;
    let dim = sequence.tokens.first().map_or(0, |t| t.feature.dim());
    let mut features = Vec::with_capacity(sequence.len() * dim);
    for tok in &sequence.tokens {
        features.extend_from_slice(&tok.feature);
    }
    let manifest = CompressedManifest {
        dim,
        token_count: sequence.len(),
        features: FEATURES_FILE.into(),
        stats: sequence.stats.clone(),
        tokens: sequence.tokens.iter().map(token_record).collect(),
    };
    write_file(&dir.join(FEATURES_FILE), &encode_f32(&features))?;
    write_file(&dir.join(COMPRESSED_FILE), &to_json_bytes(&manifest))?;
    write_file(&dir.join(REPORT_FILE), &to_json_bytes(report))
}

pub fn load_compressed(dir: impl AsRef<Path>) -> Result<CompressedSequence> {
    let dir = dir.as_ref();
    let manifest_path = dir.join(COMPRESSED_FILE);
    let m: CompressedManifest = parse_json(&manifest_path)?;
    if m.tokens.len() != m.token_count {
        return Err(Error::Manifest {
            path: manifest_path,
            message: format!(
                "{} token records for token_count {}",
                m.tokens.len(),
                m.token_count
            ),
        });
    }
    let values = read_f32_blob(&dir.join(&m.features), m.token_count * m.dim)?;
    let bad = |msg: &str| Error::Manifest {
        path: manifest_path.clone(),
        message: msg.to_string(),
    };
    let mut tokens = Vec::with_capacity(m.token_count);
    for (rec, row) in m.tokens.iter().zip(values.chunks_exact(m.dim.max(1))) {
        let frame = rec
            .frame
            .checked_sub(1)
            .ok_or_else(|| bad("frame index 0"))?;
        let position = match (rec.modality, rec.position, rec.index) {
            (Modality::Audio, None, Some(i)) if i > 0 => OriginalPosition::Audio { index: i - 1 },
            (Modality::Video | Modality::VideoMemory, Some(p), None) if p > 0 => {
                OriginalPosition::Video {
                    frame,
                    position: p - 1,
                }
            }
            _ => return Err(bad("token record has inconsistent position fields")),
        };
        tokens.push(CompressedToken {
            modality: rec.modality,
            position,
            frame,
            feature: Embedding::new(row.to_vec())?,
        });
    }
    Ok(CompressedSequence {
        tokens,
        stats: m.stats,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn even_alignment_example() {
        let one_based: Vec<usize> = even_alignment(4, 6).into_iter().map(|t| t + 1).collect();
        assert_eq!(one_based, vec![1, 1, 2, 2, 3, 4]);
        assert_eq!(even_alignment(3, 0), Vec::<usize>::new());
        assert_eq!(even_alignment(2, 5), vec![0, 0, 0, 1, 1]);
    }

    #[test]
    fn default_audio_density() {
        assert_eq!(default_audio_tokens(32), 800);
        assert_eq!(SyntheticSpec::default().audio_tokens, 800);
    }

    #[test]
    fn synthetic_deterministic() {
        let spec = SyntheticSpec {
            frames: 3,
            positions: 4,
            dim: 5,
            audio_tokens: 7,
            seed: 7,
        };
        let a = generate_synthetic(&spec).unwrap();
        let b = generate_synthetic(&spec).unwrap();
        assert_eq!(a, b);
        let c = generate_synthetic(&SyntheticSpec { seed: 8, ..spec }).unwrap();
        assert_ne!(a.grid, c.grid);
        assert!(a.grid.data().iter().all(|v| (-1.0..1.0).contains(v)));
    }

    #[test]
    fn encode_is_little_endian() {
        assert_eq!(encode_f32(&[1.0]), vec![0x00, 0x00, 0x80, 0x3f]);
    }
}
