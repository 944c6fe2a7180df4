//! Training-free audiovisual token compression over serialized embedding
//! bundles, plus compression-aware GRPO advantage shaping.
//!
//! The compression pipeline runs in four steps:
//!
//! 1. [`visual`]: score frames against the query, select key frames with
//!    temporal coverage, keep high-contrast tokens per frame and pool them
//!    into a frame memory token.
//! 2. [`audio`]: apportion the audio budget over frames using the retained
//!    visual memory, pick anchors per frame and merge dropped tokens into them.
//! 3. [`assembly`]: interleave everything back into temporal order.
//! 4. [`bundle`] / [`pipeline`]: file formats, synthetic data and reports.
//!
//! [`shaping`] evaluates the shaped advantages and clipped objective for
//! groups of teacher/student rollouts.

pub mod assembly;
pub mod audio;
pub mod bundle;
pub mod cli;
pub mod error;
pub mod geometry;
pub mod pipeline;
pub mod shaping;
pub mod visual;

pub use error::{Error, Result};
pub use geometry::{AudioTokenStream, CompressionConfig, Embedding, GuidanceMode, VideoTokenGrid};
