//! Labeled synthetic feature datasets with group/variant structure: variants
//! of one group share their hand trajectories and differ only in head motion.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::features::{
    assemble, AssemblyConfig, FeatureLayout, HandObservation, ModalityGroup, ObservationFrame, ObservationSequence,
};
use crate::head::{gate_velocity, HeadFeatureFrame};

use super::{FaceBox, IngestError, LabeledSequence, SignCatalog, SignEntry};

/// Parametric 2-D path in image pixels, evaluated at `s ∈ [0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Curve {
    Line { from: (f64, f64), to: (f64, f64) },
    Arc { center: (f64, f64), radius: f64, start_deg: f64, sweep_deg: f64 },
    Oscillate { center: (f64, f64), amplitude: (f64, f64), cycles: f64 },
}

impl Curve {
    pub fn point(&self, s: f64) -> (f64, f64) {
        match *self {
            Curve::Line { from, to } => (from.0 + s * (to.0 - from.0), from.1 + s * (to.1 - from.1)),
            Curve::Arc {
                center,
                radius,
                start_deg,
                sweep_deg,
            } => {
                let a = (start_deg + s * sweep_deg).to_radians();
                (center.0 + radius * a.cos(), center.1 + radius * a.sin())
            }
            Curve::Oscillate {
                center,
                amplitude,
                cycles,
            } => {
                let p = (2.0 * PI * cycles * s).sin();
                (center.0 + amplitude.0 * p, center.1 + amplitude.1 * p)
            }
        }
    }
}

/// Hand paths of one group. `right: None` is a one-handed sign.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HandTemplate {
    pub left: Curve,
    #[serde(default)]
    pub right: Option<Curve>,
}

impl HandTemplate {
    /// A family of well-separated two-handed templates for a 640×480 frame.
    pub fn preset(g: usize) -> Self {
        let k = (g / 3) as f64;
        let spread = 40.0 + 25.0 * k;
        match g % 3 {
            0 => HandTemplate {
                left: Curve::Line {
                    from: (250.0, 380.0),
                    to: (250.0 - spread, 380.0 - 3.0 * spread),
                },
                right: Some(Curve::Line {
                    from: (390.0, 380.0),
                    to: (390.0 + spread, 380.0 - 3.0 * spread),
                }),
            },
            1 => HandTemplate {
                left: Curve::Arc {
                    center: (260.0, 330.0),
                    radius: 30.0 + spread,
                    start_deg: 0.0,
                    sweep_deg: 360.0 - 60.0 * k,
                },
                right: Some(Curve::Line {
                    from: (400.0, 300.0),
                    to: (400.0, 300.0 + spread),
                }),
            },
            _ => HandTemplate {
                left: Curve::Line {
                    from: (220.0, 260.0),
                    to: (220.0 + 2.0 * spread, 260.0),
                },
                right: Some(Curve::Oscillate {
                    center: (420.0, 330.0),
                    amplitude: (0.0, 20.0 + spread),
                    cycles: 2.0 + k,
                }),
            },
        }
    }
}

/// Head displacement pattern in face-box units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum HeadPattern {
    Still,
    Nod { amplitude: f64, cycles: f64 },
    Shake { amplitude: f64, cycles: f64 },
    Tilt { amplitude: f64 },
}

impl HeadPattern {
    pub fn preset(v: usize) -> Self {
        let bump = 1.0 + 0.5 * (v / 3) as f64;
        match v % 3 {
            0 => HeadPattern::Nod {
                amplitude: 0.06,
                cycles: 2.0 * bump,
            },
            1 => HeadPattern::Shake {
                amplitude: 0.06,
                cycles: 2.0 * bump,
            },
            _ => HeadPattern::Still,
        }
    }

    /// Displacement (x, y) at `s ∈ [0, 1]` of the head movement.
    fn offset(&self, s: f64) -> (f64, f64) {
        let s = s.clamp(0.0, 1.0);
        match *self {
            HeadPattern::Still => (0.0, 0.0),
            HeadPattern::Nod { amplitude, cycles } => (0.0, amplitude * (2.0 * PI * cycles * s).sin()),
            HeadPattern::Shake { amplitude, cycles } => (amplitude * (2.0 * PI * cycles * s).sin(), 0.0),
            HeadPattern::Tilt { amplitude } => (0.0, amplitude * (PI * s).sin()),
        }
    }
}

/// Standard deviations of the per-repetition jitter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseSpec {
    /// Hand position noise, pixels.
    pub position: f64,
    /// Hand velocity noise, pixels per frame.
    pub velocity: f64,
    pub head_energy: f64,
    /// Head velocity noise, face units per frame.
    pub head_velocity: f64,
    /// Log-exponent of the power-law time warp.
    pub time_warp: f64,
    /// Relative scale of the hand path around its start.
    pub amplitude: f64,
    /// Head movement onset, as a fraction of the sign duration (uniform in `[0, head_lag]`).
    pub head_lag: f64,
    /// Per-subject translation of the whole scene, pixels.
    pub subject_offset: f64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self::zero()
    }
}

impl NoiseSpec {
    pub fn zero() -> Self {
        Self {
            position: 0.0,
            velocity: 0.0,
            head_energy: 0.0,
            head_velocity: 0.0,
            time_warp: 0.0,
            amplitude: 0.0,
            head_lag: 0.0,
            subject_offset: 0.0,
        }
    }

    fn values(&self) -> [f64; 8] {
        [
            self.position,
            self.velocity,
            self.head_energy,
            self.head_velocity,
            self.time_warp,
            self.amplitude,
            self.head_lag,
            self.subject_offset,
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub n_groups: usize,
    pub variants_per_group: usize,
    pub repetitions: usize,
    pub subjects: usize,
    pub frames: usize,
    /// One per group; `HandTemplate::preset` fills missing entries.
    pub hand_templates: Vec<HandTemplate>,
    /// One per variant index, shared by all groups; `HeadPattern::preset`
    /// fills missing entries.
    pub head_templates: Vec<HeadPattern>,
    pub noise: NoiseSpec,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self::acceptance()
    }
}

impl SyntheticSpec {
    /// 3 groups × 3 variants × 40 repetitions by 8 subjects, with enough
    /// jitter that hand paths alone cannot tell variants apart.
    pub fn acceptance() -> Self {
        Self {
            n_groups: 3,
            variants_per_group: 3,
            repetitions: 40,
            subjects: 8,
            frames: 40,
            hand_templates: Vec::new(),
            head_templates: Vec::new(),
            noise: NoiseSpec {
                position: 3.0,
                velocity: 1.5,
                head_energy: 0.02,
                head_velocity: 0.016,
                time_warp: 0.15,
                amplitude: 0.1,
                head_lag: 0.7,
                subject_offset: 20.0,
            },
            seed: 7,
        }
    }

    pub fn validate(&self) -> Result<(), IngestError> {
        let bad = |m: &str| Err(IngestError::InvalidSpec(m.to_string()));
        if self.n_groups == 0 || self.variants_per_group == 0 || self.repetitions == 0 || self.subjects == 0 {
            return bad("counts must be at least 1");
        }
        if self.frames < 2 {
            return bad("need at least 2 frames per sequence");
        }
        if self.noise.values().iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return bad("noise must be finite and non-negative");
        }
        if self.hand_templates.len() > self.n_groups || self.head_templates.len() > self.variants_per_group {
            return bad("more templates than groups/variants");
        }
        Ok(())
    }

    pub fn hand_template(&self, g: usize) -> HandTemplate {
        self.hand_templates.get(g).cloned().unwrap_or_else(|| HandTemplate::preset(g))
    }

    pub fn head_template(&self, v: usize) -> HeadPattern {
        self.head_templates.get(v).cloned().unwrap_or_else(|| HeadPattern::preset(v))
    }

    pub fn label(g: usize, v: usize) -> String {
        format!("g{g}v{v}")
    }

    /// Sign catalog describing the generated classes.
    pub fn catalog(&self) -> SignCatalog {
        let mut signs = Vec::new();
        for g in 0..self.n_groups {
            for v in 0..self.variants_per_group {
                signs.push(SignEntry {
                    id: Self::label(g, v),
                    name: format!("group {g} variant {v}"),
                    manual: format!("{:?}", self.hand_template(g)),
                    nonmanual: format!("{:?}", self.head_template(v)),
                    group: format!("g{g}"),
                    clip: None,
                });
            }
        }
        SignCatalog { signs }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    pub layout: Arc<FeatureLayout>,
    pub sequences: Vec<LabeledSequence>,
    /// seq id → subject id.
    pub subjects: BTreeMap<String, String>,
    pub catalog: SignCatalog,
}

const FACE: FaceBox = FaceBox {
    x: 280,
    y: 60,
    width: 80,
    height: 100,
};

fn gauss(rng: &mut ChaCha8Rng, sd: f64) -> f64 {
    if sd == 0.0 {
        0.0
    } else {
        Normal::new(0.0, sd).expect("sd validated").sample(rng)
    }
}

struct Jitter {
    warp: f64,
    scale: f64,
    onset: f64,
}

fn hand_track(curve: &Curve, frames: usize, j: &Jitter, shift: (f64, f64), noise: &NoiseSpec, rng: &mut ChaCha8Rng) -> Vec<HandObservation> {
    let start = curve.point(0.0);
    let at = |t: f64| {
        let s = (t / (frames - 1) as f64).clamp(0.0, 1.0).powf(j.warp);
        let p = curve.point(s);
        (
            start.0 + j.scale * (p.0 - start.0) + shift.0,
            start.1 + j.scale * (p.1 - start.1) + shift.1,
        )
    };
    (0..frames)
        .map(|t| {
            let p = at(t as f64);
            let (a, b) = (at(t as f64 - 0.5), at(t as f64 + 0.5));
            HandObservation {
                com: (p.0 + gauss(rng, noise.position), p.1 + gauss(rng, noise.position)),
                velocity: (b.0 - a.0 + gauss(rng, noise.velocity), b.1 - a.1 + gauss(rng, noise.velocity)),
                shape: None,
                cluster: None,
            }
        })
        .collect()
}

fn head_track(pattern: &HeadPattern, frames: usize, j: &Jitter, noise: &NoiseSpec, rng: &mut ChaCha8Rng) -> Vec<HeadFeatureFrame> {
    // the head movement spans the sign minus its onset delay
    let span = (1.0 - j.onset).max(1e-6);
    let at = |t: f64| pattern.offset((t / (frames - 1) as f64 - j.onset) / span);
    (0..frames)
        .map(|t| {
            if t == 0 {
                return HeadFeatureFrame::default();
            }
            let (a, b) = (at(t as f64 - 1.0), at(t as f64));
            let (vx, vy) = (b.0 - a.0, b.1 - a.1);
            // energy grows with the moving fraction of the face
            let energy = (6.0 * vx.hypot(vy) + 0.005 + gauss(rng, noise.head_energy)).max(0.0);
            let (vx, vy) = (vx + gauss(rng, noise.head_velocity), vy + gauss(rng, noise.head_velocity));
            let (vx, vy) = gate_velocity(energy, vx, vy, 0.02);
            HeadFeatureFrame { energy, vx, vy }
        })
        .collect()
}

/// Deterministic for a given spec (seed included). Sequences are ordered by
/// group, variant, repetition; repetition `r` is performed by subject
/// `r mod subjects`.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SyntheticDataset, IngestError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let noise = &spec.noise;
    let subject_shift: Vec<(f64, f64)> = (0..spec.subjects)
        .map(|_| (gauss(&mut rng, noise.subject_offset), gauss(&mut rng, noise.subject_offset)))
        .collect();
    let cfg = AssemblyConfig::without_shape();
    let layout = Arc::new(cfg.layout(ModalityGroup::Combined).map_err(|e| IngestError::InvalidSpec(e.to_string()))?);
    let mut sequences = Vec::new();
    let mut subjects = BTreeMap::new();
    for g in 0..spec.n_groups {
        let hands = spec.hand_template(g);
        for v in 0..spec.variants_per_group {
            let head = spec.head_template(v);
            let label = SyntheticSpec::label(g, v);
            for r in 0..spec.repetitions {
                let subject = r % spec.subjects;
                let jitter = Jitter {
                    warp: gauss(&mut rng, noise.time_warp).exp(),
                    scale: (1.0 + gauss(&mut rng, noise.amplitude)).max(0.2),
                    onset: if noise.head_lag > 0.0 {
                        rng.random_range(0.0..noise.head_lag.min(0.9))
                    } else {
                        0.0
                    },
                };
                let shift = subject_shift[subject];
                let left = hand_track(&hands.left, spec.frames, &jitter, shift, noise, &mut rng);
                let right = hands
                    .right
                    .as_ref()
                    .map(|c| hand_track(c, spec.frames, &jitter, shift, noise, &mut rng));
                let head_frames = head_track(&head, spec.frames, &jitter, noise, &mut rng);
                let face = FaceBox::new(
                    (FACE.x as f64 + shift.0).round().max(0.0) as u32,
                    (FACE.y as f64 + shift.1).round().max(0.0) as u32,
                    FACE.width,
                    FACE.height,
                );
                let frames = (0..spec.frames)
                    .map(|t| ObservationFrame {
                        left: Some(left[t].clone()),
                        right: right.as_ref().map(|r| r[t].clone()),
                        head: head_frames[t],
                        face: Some(face),
                        filled: false,
                    })
                    .collect();
                let features = assemble(&ObservationSequence { frames }, ModalityGroup::Combined, &cfg)
                    .map_err(|e| IngestError::InvalidSpec(format!("{label} repetition {r}: {e}")))?;
                let seq_id = format!("{label}-r{r:03}");
                subjects.insert(seq_id.clone(), format!("p{subject}"));
                sequences.push(LabeledSequence {
                    seq_id,
                    label: label.clone(),
                    features,
                });
            }
        }
    }
    Ok(SyntheticDataset {
        layout,
        sequences,
        subjects,
        catalog: spec.catalog(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::Modality;

    fn small(noise: NoiseSpec) -> SyntheticSpec {
        SyntheticSpec {
            n_groups: 2,
            variants_per_group: 3,
            repetitions: 3,
            subjects: 2,
            frames: 20,
            noise,
            ..SyntheticSpec::acceptance()
        }
    }

    #[test]
    fn deterministic_for_seed() {
        let spec = small(SyntheticSpec::acceptance().noise);
        assert_eq!(generate_synthetic(&spec).unwrap(), generate_synthetic(&spec).unwrap());
        let other = SyntheticSpec { seed: 8, ..spec.clone() };
        assert_ne!(generate_synthetic(&spec).unwrap().sequences, generate_synthetic(&other).unwrap().sequences);
    }

    #[test]
    fn noiseless_variants_share_manual_channels() {
        let d = generate_synthetic(&small(NoiseSpec::zero())).unwrap();
        let manual = |i: usize| d.sequences[i].features.modality(Modality::Manual).unwrap();
        let head = |i: usize| d.sequences[i].features.modality(Modality::Nonmanual).unwrap();
        // sequences 0..3 are g0v0 repetitions, 3..6 g0v1
        assert_eq!(d.sequences[0].features, d.sequences[1].features);
        assert_eq!(manual(0), manual(3));
        assert_ne!(head(0), head(3));
        assert_ne!(manual(0), manual(9));
    }

    #[test]
    fn layout_and_bookkeeping() {
        let d = generate_synthetic(&small(NoiseSpec::zero())).unwrap();
        assert_eq!(d.layout.dim(), 15);
        assert_eq!(d.sequences.len(), 18);
        assert_eq!(d.subjects["g1v2-r002"], "p0");
        assert_eq!(d.catalog.signs.len(), 6);
        assert_eq!(d.catalog.group_of("g1v0"), Some("g1"));
        assert!(d.sequences.iter().all(|s| s.features.len() == 20));
    }

    #[test]
    fn invalid_specs_rejected() {
        let mut s = small(NoiseSpec::zero());
        s.n_groups = 0;
        assert!(generate_synthetic(&s).is_err());
        let mut s = small(NoiseSpec::zero());
        s.noise.position = -1.0;
        assert!(generate_synthetic(&s).is_err());
    }

    #[test]
    fn spec_json_round_trip() {
        let s = SyntheticSpec::acceptance();
        let text = serde_json::to_string(&s).unwrap();
        assert_eq!(serde_json::from_str::<SyntheticSpec>(&text).unwrap(), s);
        // partial documents fall back to defaults
        let p: SyntheticSpec = serde_json::from_str(r#"{"repetitions": 5}"#).unwrap();
        assert_eq!(p.repetitions, 5);
        assert_eq!(p.n_groups, 3);
    }
}
