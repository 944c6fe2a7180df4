use avcompress::assembly::{Modality, OriginalPosition};
use avcompress::bundle::{even_alignment, Bundle};
use avcompress::pipeline::compress_bundle;
use avcompress::visual::compress_video;
use avcompress::{AudioTokenStream, CompressionConfig, Embedding, GuidanceMode, VideoTokenGrid};
use proptest::prelude::*;

fn arb_bundle() -> impl Strategy<Value = Bundle> {
    (1usize..6, 1usize..6, 1usize..4, 0usize..12).prop_flat_map(|(t, p, d, na)| {
        (
            prop::collection::vec(-1.0f64..1.0, t * p * d),
            prop::collection::vec(-1.0f64..1.0, na * d),
            prop::collection::vec(-1.0f64..1.0, d),
        )
            .prop_map(move |(video, audio, query)| Bundle {
                grid: VideoTokenGrid::new(t, p, d, video).unwrap(),
                audio: AudioTokenStream::new(d, t, audio, even_alignment(t, na)).unwrap(),
                query: Embedding::new(query).unwrap(),
            })
    })
}

fn arb_config() -> impl Strategy<Value = CompressionConfig> {
    (0.05f64..=1.0, 0.05f64..=1.0, 1usize..5, 0usize..3).prop_map(|(rv, ra, bins, mode)| {
        CompressionConfig {
            retain_video: rv,
            retain_audio: ra,
            coverage_bins: bins,
            guidance_mode: [
                GuidanceMode::AudioGuided,
                GuidanceMode::VisualGuided,
                GuidanceMode::FullOmac,
            ][mode],
            ..Default::default()
        }
    })
}

fn scaled(b: &Bundle, s: f64) -> Bundle {
    let g = &b.grid;
    let video = g.data().iter().map(|v| v * s).collect();
    let audio = b.audio.data().iter().map(|v| v * s).collect();
    Bundle {
        grid: VideoTokenGrid::new(g.frames(), g.positions(), g.dim(), video).unwrap(),
        audio: AudioTokenStream::new(g.dim(), g.frames(), audio, b.audio.alignment().to_vec())
            .unwrap(),
        query: Embedding::new(b.query.iter().map(|v| v * s).collect()).unwrap(),
    }
}

proptest! {
    #[test]
    fn selection_invariant_to_power_of_two_scaling(b in arb_bundle(), cfg in arb_config(), k in -3i32..4) {
        let s = 2f64.powi(k);
        let x = compress_bundle(&b, &cfg).unwrap();
        let y = compress_bundle(&scaled(&b, s), &cfg).unwrap();
        prop_assert_eq!(x.visual.selected_frames(), y.visual.selected_frames());
        prop_assert_eq!(&x.audio.per_frame_budget, &y.audio.per_frame_budget);
        let pos = |o: &avcompress::pipeline::PipelineOutput| {
            o.sequence.tokens.iter().map(|t| (t.modality, t.position)).collect::<Vec<_>>()
        };
        prop_assert_eq!(pos(&x), pos(&y));
    }

    #[test]
    fn memory_token_within_frame_hull(b in arb_bundle(), cfg in arb_config()) {
        let v = compress_video(&b.grid, &b.query, &cfg).unwrap();
        for f in &v.selected {
            let Some(m) = &f.memory else { continue };
            let kept: Vec<&[f64]> = f.kept.iter().map(|(_, e)| e.as_slice()).collect();
            for (c, z) in m.feature.iter().enumerate() {
                let lo = kept.iter().map(|k| k[c]).fold(f64::INFINITY, f64::min);
                let hi = kept.iter().map(|k| k[c]).fold(f64::NEG_INFINITY, f64::max);
                prop_assert!(*z >= lo - 1e-12 && *z <= hi + 1e-12);
            }
            prop_assert!(!f.kept_positions().contains(&m.slot));
        }
    }

    #[test]
    fn sequence_is_consistent(b in arb_bundle(), cfg in arb_config()) {
        let out = compress_bundle(&b, &cfg).unwrap();
        let again = compress_bundle(&b, &cfg).unwrap();
        prop_assert_eq!(&out.sequence, &again.sequence);

        let s = &out.sequence.stats;
        prop_assert_eq!(out.sequence.len(), s.retained_video + s.retained_audio);
        prop_assert_eq!(s.retained_audio, out.audio.total_budget);
        prop_assert_eq!(out.audio.per_frame_budget.iter().sum::<usize>(), out.audio.total_budget);

        // frames appear in order, audio before video inside a frame
        let mut last = (0usize, 0u8);
        for t in &out.sequence.tokens {
            let rank = match t.modality { Modality::Audio => 0u8, _ => 1 };
            prop_assert!((t.frame, rank) >= last);
            last = (t.frame, rank);
            if let OriginalPosition::Audio { index } = t.position {
                prop_assert_eq!(b.audio.alignment()[index], t.frame);
            }
        }
    }
}
