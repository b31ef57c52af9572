//! Practice verdicts: did the hands match the target sign, did the head?

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{FeatureSequence, Modality};
use crate::fusion::{classify_sequential, ClusterMap, FusionDecision, FusionError, ModelBanks};
use crate::hmm::argmax;

#[derive(Debug, Error, PartialEq)]
pub enum TutorError {
    #[error("unknown target sign {0:?}")]
    UnknownTarget(String),
    #[error(transparent)]
    Fusion(#[from] FusionError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum VerdictKind {
    Ok,
    False,
    HeadOkHandsFalse,
}

impl VerdictKind {
    pub fn from_flags(manual_ok: bool, head_ok: bool) -> Self {
        match (manual_ok, head_ok) {
            (true, true) => VerdictKind::Ok,
            (false, true) => VerdictKind::HeadOkHandsFalse,
            _ => VerdictKind::False,
        }
    }

    /// The phrase shown to the learner.
    pub fn phrase(self) -> &'static str {
        match self {
            VerdictKind::Ok => "ok",
            VerdictKind::False => "false",
            VerdictKind::HeadOkHandsFalse => "head is ok but hands are false",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub kind: VerdictKind,
    pub manual_ok: bool,
    pub head_ok: bool,
    pub explanation: String,
}

impl Verdict {
    pub fn new(manual_ok: bool, head_ok: bool, explanation: String) -> Self {
        Self {
            kind: VerdictKind::from_flags(manual_ok, head_ok),
            manual_ok,
            head_ok,
            explanation,
        }
    }

    /// The attempt could not be analysed at all.
    pub fn failure(diagnostic: &str) -> Self {
        Self::new(false, false, format!("attempt could not be analysed: {diagnostic}"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assessment {
    pub target: String,
    pub decision: FusionDecision,
    pub verdict: Verdict,
}

/// Hands are judged up to confusability: the combined-bank decision and the
/// target must each lie in the other's cluster. The head is judged by the
/// nonmanual bank among the target's cluster, i.e. among the signs the hands
/// cannot tell apart from the target.
pub fn assess(banks: &ModelBanks, clusters: &ClusterMap, target: &str, seq: &FeatureSequence) -> Result<Assessment, TutorError> {
    let ids = banks.ids();
    if !ids.contains(&target) {
        return Err(TutorError::UnknownTarget(target.to_string()));
    }
    let decision = classify_sequential(banks, clusters, seq)?;
    let base = decision.base.as_str();
    let manual_ok = clusters.contains(target, base) && clusters.contains(base, target);

    let target_cluster = clusters.cluster(target)?;
    let head = seq.modality(Modality::Nonmanual).ok_or(FusionError::BankMismatch)?;
    let subset: Vec<usize> = target_cluster
        .iter()
        .map(|c| banks.nonmanual.index_of(c).ok_or_else(|| FusionError::UnknownSign(c.clone())))
        .collect::<Result<_, _>>()?;
    let head_scores = banks.nonmanual.score_subset(&head, &subset).map_err(FusionError::from)?;
    let head_choice = &target_cluster[argmax(&head_scores).expect("cluster contains target")];
    let head_ok = head_choice == target;

    let mut ranked: Vec<(&str, f64)> = ids.iter().copied().zip(decision.combined_scores.iter().copied()).collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1));
    let competitors: Vec<String> = ranked
        .iter()
        .take(3)
        .map(|(id, s)| format!("{id} ({s:.1})"))
        .collect();
    let mut explanation = format!(
        "target {target}; decided {} (hands closest to {base}); head movement closest to {head_choice}; nearest: {}",
        decision.final_sign,
        competitors.join(", ")
    );
    if !manual_ok {
        explanation += &format!("; hand movement does not match {target}");
    }
    if !head_ok {
        explanation += &format!("; head movement matches {head_choice} instead");
    }
    Ok(Assessment {
        target: target.to_string(),
        verdict: Verdict::new(manual_ok, head_ok, explanation),
        decision,
    })
}

/// Learner-side replay: normalized hand paths and head signals per frame.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReplayData {
    pub left: Vec<[f64; 2]>,
    pub right: Vec<[f64; 2]>,
    /// energy, vx, vy
    pub head: Vec<[f64; 3]>,
}

impl ReplayData {
    /// Picks whichever of the known columns the layout carries.
    pub fn from_features(seq: &FeatureSequence) -> Self {
        let l = seq.layout();
        let cols = |names: &[&str]| -> Option<Vec<usize>> { names.iter().map(|n| l.index_of(n)).collect() };
        let pairs = |names: [&str; 2]| -> Vec<[f64; 2]> {
            cols(&names).map_or_else(Vec::new, |c| seq.rows().map(|r| [r[c[0]], r[c[1]]]).collect())
        };
        Self {
            left: pairs(["l.x", "l.y"]),
            right: pairs(["r.x", "r.y"]),
            head: cols(&["head.energy", "head.vx", "head.vy"])
                .map_or_else(Vec::new, |c| seq.rows().map(|r| [r[c[0]], r[c[1]], r[c[2]]]).collect()),
        }
    }
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use super::*;
    use crate::fusion::train_banks;
    use crate::hmm::TrainConfig;
    use crate::ingest::{generate_synthetic, NoiseSpec, SyntheticSpec};

    #[test]
    fn kind_truth_table() {
        assert_eq!(VerdictKind::from_flags(true, true), VerdictKind::Ok);
        assert_eq!(VerdictKind::from_flags(true, false), VerdictKind::False);
        assert_eq!(VerdictKind::from_flags(false, false), VerdictKind::False);
        assert_eq!(VerdictKind::from_flags(false, true), VerdictKind::HeadOkHandsFalse);
        assert_eq!(serde_json::to_string(&VerdictKind::HeadOkHandsFalse).unwrap(), "\"HEAD_OK_HANDS_FALSE\"");
    }

    fn fixture() -> (ModelBanks, ClusterMap, crate::ingest::SyntheticDataset) {
        let spec = SyntheticSpec {
            n_groups: 2,
            variants_per_group: 2,
            repetitions: 6,
            subjects: 2,
            frames: 30,
            noise: NoiseSpec {
                position: 1.0,
                velocity: 0.5,
                head_energy: 0.005,
                head_velocity: 0.003,
                ..NoiseSpec::zero()
            },
            ..SyntheticSpec::acceptance()
        };
        let d = generate_synthetic(&spec).unwrap();
        let refs: Vec<_> = d.sequences.iter().collect();
        let cfg = TrainConfig {
            n_states: 3,
            max_iters: 15,
            ..TrainConfig::default()
        };
        let banks = train_banks(&refs, &cfg).unwrap();
        // group-level confusability, as a manual-dominant model would produce
        let clusters = ClusterMap {
            clusters: BTreeMap::from([
                ("g0v0".into(), vec!["g0v0".into(), "g0v1".into()]),
                ("g0v1".into(), vec!["g0v0".into(), "g0v1".into()]),
                ("g1v0".into(), vec!["g1v0".into(), "g1v1".into()]),
                ("g1v1".into(), vec!["g1v0".into(), "g1v1".into()]),
            ]),
        };
        (banks, clusters, d)
    }

    fn seq_of<'a>(d: &'a crate::ingest::SyntheticDataset, label: &str) -> &'a FeatureSequence {
        &d.sequences.iter().find(|s| s.label == label).unwrap().features
    }

    #[test]
    fn verdict_cases() {
        let (banks, clusters, d) = fixture();
        // correct attempt
        let a = assess(&banks, &clusters, "g0v0", seq_of(&d, "g0v0")).unwrap();
        assert_eq!(a.verdict.kind, VerdictKind::Ok);
        // same hands, other variant's head
        let a = assess(&banks, &clusters, "g0v0", seq_of(&d, "g0v1")).unwrap();
        assert!(a.verdict.manual_ok && !a.verdict.head_ok);
        assert_eq!(a.verdict.kind, VerdictKind::False);
        assert!(a.verdict.explanation.contains("g0v1"), "{}", a.verdict.explanation);
        // other group's hands, target variant's head
        let a = assess(&banks, &clusters, "g0v0", seq_of(&d, "g1v0")).unwrap();
        assert!(!a.verdict.manual_ok && a.verdict.head_ok);
        assert_eq!(a.verdict.kind, VerdictKind::HeadOkHandsFalse);
    }

    #[test]
    fn unknown_target_rejected() {
        let (banks, clusters, d) = fixture();
        assert_eq!(
            assess(&banks, &clusters, "nope", seq_of(&d, "g0v0")),
            Err(TutorError::UnknownTarget("nope".into()))
        );
    }

    #[test]
    fn replay_columns() {
        let (_, _, d) = fixture();
        let r = ReplayData::from_features(seq_of(&d, "g0v0"));
        assert_eq!((r.left.len(), r.right.len(), r.head.len()), (30, 30, 30));
        assert_eq!(r.left[0], [0.0, 0.0]);
    }
}
