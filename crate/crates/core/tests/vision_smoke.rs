mod common;

use signtutor_core::features::AssemblyConfig;
use signtutor_core::glove::{fit_thresholds, segment_frame, train_histogram, GloveModel, GlovePair, LabeledFrame, ThresholdSearch, DEFAULT_BINS};
use signtutor_core::ingest::FaceBox;
use signtutor_core::pipeline::{run_pipeline, PipelineConfig, VisionModels};
use signtutor_core::track::{center_of_mass, TrackFlag};
use signtutor_core::{BinaryMask, FrameSequence, ModalityGroup};

use common::{smoke_clip, SmokeClip};

fn disk(clip: &SmokeClip, t: usize, c: (f64, f64)) -> BinaryMask {
    let (w, h) = clip.frames[t].dimensions();
    let r = clip.radius;
    BinaryMask::from_fn(w, h, |x, y| (x as f64 - c.0).powi(2) + (y as f64 - c.1).powi(2) <= r * r)
}

fn glove(clip: &SmokeClip, centres: &[(f64, f64)]) -> GloveModel {
    let snaps: Vec<_> = [0, 20, 40]
        .into_iter()
        .map(|t| (clip.frames[t].clone(), disk(clip, t, centres[t])))
        .collect();
    let hist = train_histogram(&snaps, DEFAULT_BINS).unwrap();
    let labeled: Vec<_> = snaps.iter().map(|(f, m)| LabeledFrame::from_snapshot(f, m).unwrap()).collect();
    let fit = fit_thresholds(&hist, &labeled, &ThresholdSearch::default()).unwrap();
    assert_eq!(fit.total_error(), 0, "{fit:?}");
    GloveModel::new(hist, fit.t_low, fit.t_high).unwrap()
}

#[test]
fn clip_flows_through_the_pipeline() {
    let clip = smoke_clip(60);
    let gloves = GlovePair {
        left: glove(&clip, &clip.left),
        right: glove(&clip, &clip.right),
    };

    for (t, frame) in clip.frames.iter().enumerate() {
        let (l, r) = segment_frame(frame, &gloves.left, &gloves.right);
        for (mask, want) in [(&l, clip.left[t]), (&r, clip.right[t])] {
            let (x, y) = center_of_mass(mask).expect("glove found");
            assert!((x - want.0).abs() <= 1.0 && (y - want.1).abs() <= 1.0, "frame {t}: ({x}, {y}) vs {want:?}");
        }
    }

    let seq = FrameSequence {
        frames: clip.frames.clone(),
        fps: 30.0,
        face_boxes: Some(clip.face_boxes.iter().map(|b| Some(FaceBox::new(b[0], b[1], b[2], b[3]))).collect()),
        label: None,
        subject: None,
    };
    let models = VisionModels {
        gloves,
        skin: None,
        library: None,
    };
    let cfg = PipelineConfig {
        assembly: AssemblyConfig::without_shape(),
        ..PipelineConfig::default()
    };
    let out = run_pipeline(&seq, &models, &cfg, ModalityGroup::Combined).unwrap();

    // every frame measured, nothing lost
    for traj in [&out.left, &out.right] {
        assert_eq!(traj.points.len(), 60);
        assert!(traj.lost_at.is_none());
        assert!(traj.points.iter().all(|p| p.flag == TrackFlag::Measured));
    }
    assert_eq!(out.trimmed.frames.len(), 60 - 2 * cfg.trim.transition);
    assert_eq!(out.features.len(), out.trimmed.frames.len());
    assert_eq!(out.features.dim(), 15);
    assert!(out.features.rows().flatten().all(|v| v.is_finite()));
    let lx = out.features.layout().index_of("l.x").unwrap();
    assert_eq!(out.features.row(0)[lx], 0.0);

    // head vertical velocity follows the nod: down is +y in image coordinates
    let mut checked = 0;
    for t in 1..60 {
        let drive = clip.nod[t] - clip.nod[t - 1];
        let vy = out.observations.frames[t].head.vy;
        if drive != 0.0 {
            assert_eq!(vy.signum(), drive.signum(), "frame {t}: vy {vy} drive {drive}");
            checked += 1;
        } else {
            assert_eq!(vy, 0.0, "frame {t}");
        }
        assert!(out.observations.frames[t].head.vx.abs() < 0.5);
    }
    assert!(checked >= 20);
}
