//! Three model banks, confusability clusters, sequential fusion and the
//! train/validation/test evaluation harness.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{FeatureLayout, FeatureSequence, Modality, ModalityGroup};
use crate::hmm::{argmax, train, HmmBank, HmmError, TrainConfig};
use crate::ingest::LabeledSequence;

#[derive(Debug, Error, PartialEq)]
pub enum FusionError {
    #[error(transparent)]
    Hmm(#[from] HmmError),
    #[error("class {class:?} has {count} training sequences; at least 2 are required")]
    TooFewSequences { class: String, count: usize },
    #[error("empty data set")]
    EmptyDataset,
    #[error("empty validation set")]
    EmptyValidation,
    #[error("sequence {seq_id:?} does not use the combined manual+nonmanual layout")]
    NotCombined { seq_id: String },
    #[error("sequence {seq_id:?} has a different feature layout")]
    LayoutMismatch { seq_id: String },
    #[error("banks do not cover the same sign ids")]
    BankMismatch,
    #[error("unknown sign {0:?}")]
    UnknownSign(String),
    #[error("no subject recorded for sequence {0:?}")]
    MissingSubject(String),
    #[error("invalid split: {0}")]
    Split(String),
}

/// Per-sign models over the manual columns, all columns, and the
/// nonmanual columns of the combined layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelBanks {
    pub manual: HmmBank,
    pub combined: HmmBank,
    pub nonmanual: HmmBank,
}

fn split_modalities(seq: &FeatureSequence) -> Option<(FeatureSequence, FeatureSequence)> {
    Some((seq.modality(Modality::Manual)?, seq.modality(Modality::Nonmanual)?))
}

impl ModelBanks {
    pub fn validate(&self) -> Result<(), FusionError> {
        self.manual.validate()?;
        self.combined.validate()?;
        self.nonmanual.validate()?;
        let ids = self.combined.ids();
        if self.manual.ids() != ids || self.nonmanual.ids() != ids {
            return Err(FusionError::BankMismatch);
        }
        Ok(())
    }

    pub fn ids(&self) -> Vec<&str> {
        self.combined.ids()
    }

    pub fn combined_layout(&self) -> Result<FeatureLayout, FusionError> {
        FeatureLayout::from_tag(&self.combined.layout_tag).map_err(|_| FusionError::BankMismatch)
    }

    fn bank(&self, group: ModalityGroup) -> &HmmBank {
        match group {
            ModalityGroup::Manual => &self.manual,
            ModalityGroup::Nonmanual => &self.nonmanual,
            ModalityGroup::Combined => &self.combined,
        }
    }

    fn check(&self, seq: &FeatureSequence) -> Result<(), FusionError> {
        let tag = seq.layout().tag();
        if tag != self.combined.layout_tag {
            return Err(HmmError::Layout {
                expected: self.combined.layout_tag.clone(),
                found: tag,
            }
            .into());
        }
        Ok(())
    }

    /// Log-likelihoods of a combined-layout sequence under one bank.
    pub fn score(&self, group: ModalityGroup, seq: &FeatureSequence) -> Result<Vec<f64>, FusionError> {
        self.check(seq)?;
        let sliced;
        let input = match group {
            ModalityGroup::Combined => seq,
            ModalityGroup::Manual => {
                sliced = seq.modality(Modality::Manual).ok_or(FusionError::BankMismatch)?;
                &sliced
            }
            ModalityGroup::Nonmanual => {
                sliced = seq.modality(Modality::Nonmanual).ok_or(FusionError::BankMismatch)?;
                &sliced
            }
        };
        Ok(self.bank(group).score(input)?)
    }

    /// Argmax of one bank; ties go to the earlier sign.
    pub fn classify(&self, group: ModalityGroup, seq: &FeatureSequence) -> Result<String, FusionError> {
        let scores = self.score(group, seq)?;
        let i = argmax(&scores).ok_or(HmmError::EmptyBank)?;
        Ok(self.combined.models[i].id.clone())
    }

    pub fn to_json(&self) -> Result<String, FusionError> {
        serde_json::to_string_pretty(self).map_err(|e| HmmError::Serde(e.to_string()).into())
    }

    pub fn from_json(text: &str) -> Result<Self, FusionError> {
        let b: ModelBanks = serde_json::from_str(text).map_err(|e| HmmError::Serde(e.to_string()))?;
        b.validate()?;
        Ok(b)
    }
}

/// Class ids in sorted order with their sequences.
fn by_class<'a>(seqs: &[&'a LabeledSequence]) -> BTreeMap<&'a str, Vec<&'a LabeledSequence>> {
    let mut m: BTreeMap<&str, Vec<&LabeledSequence>> = BTreeMap::new();
    for s in seqs {
        m.entry(s.label.as_str()).or_default().push(s);
    }
    m
}

fn check_layouts(seqs: &[&LabeledSequence]) -> Result<Arc<FeatureLayout>, FusionError> {
    let first = seqs.first().ok_or(FusionError::EmptyDataset)?;
    let layout = first.features.layout().clone();
    for s in seqs {
        if **s.features.layout() != *layout {
            return Err(FusionError::LayoutMismatch { seq_id: s.seq_id.clone() });
        }
        if s.features.group() != ModalityGroup::Combined {
            return Err(FusionError::NotCombined { seq_id: s.seq_id.clone() });
        }
    }
    Ok(layout)
}

/// Trains the three banks, one class per rayon task. Signs are ordered by id.
pub fn train_banks(train_set: &[&LabeledSequence], cfg: &TrainConfig) -> Result<ModelBanks, FusionError> {
    let layout = check_layouts(train_set)?;
    let classes = by_class(train_set);
    for (class, seqs) in &classes {
        if seqs.len() < 2 {
            return Err(FusionError::TooFewSequences {
                class: class.to_string(),
                count: seqs.len(),
            });
        }
    }
    let sliced: Vec<(&str, Vec<(FeatureSequence, FeatureSequence)>, Vec<&FeatureSequence>)> = classes
        .iter()
        .map(|(c, seqs)| {
            let parts = seqs.iter().map(|s| split_modalities(&s.features).expect("combined layout")).collect();
            (*c, parts, seqs.iter().map(|s| &s.features).collect())
        })
        .collect();
    let trained: Vec<_> = sliced
        .par_iter()
        .map(|(id, parts, full)| {
            let manual: Vec<&FeatureSequence> = parts.iter().map(|p| &p.0).collect();
            let head: Vec<&FeatureSequence> = parts.iter().map(|p| &p.1).collect();
            Ok::<_, HmmError>((
                train(id, &manual, cfg)?.model,
                train(id, full, cfg)?.model,
                train(id, &head, cfg)?.model,
            ))
        })
        .collect::<Result<_, _>>()?;
    let (m_layout, _) = layout.select(Modality::Manual).expect("combined");
    let (n_layout, _) = layout.select(Modality::Nonmanual).expect("combined");
    let mut banks = ModelBanks {
        manual: HmmBank {
            layout_tag: m_layout.tag(),
            models: Vec::new(),
        },
        combined: HmmBank {
            layout_tag: layout.tag(),
            models: Vec::new(),
        },
        nonmanual: HmmBank {
            layout_tag: n_layout.tag(),
            models: Vec::new(),
        },
    };
    for (m, c, n) in trained {
        banks.manual.models.push(m);
        banks.combined.models.push(c);
        banks.nonmanual.models.push(n);
    }
    Ok(banks)
}

/// Sign id → confusable sign ids (always including itself), in bank order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterMap {
    pub clusters: BTreeMap<String, Vec<String>>,
}

impl ClusterMap {
    pub fn singletons<'a>(ids: impl IntoIterator<Item = &'a str>) -> Self {
        Self {
            clusters: ids.into_iter().map(|i| (i.to_string(), vec![i.to_string()])).collect(),
        }
    }

    pub fn cluster(&self, id: &str) -> Result<&[String], FusionError> {
        self.clusters
            .get(id)
            .map(Vec::as_slice)
            .ok_or_else(|| FusionError::UnknownSign(id.to_string()))
    }

    pub fn contains(&self, id: &str, member: &str) -> bool {
        self.clusters.get(id).is_some_and(|c| c.iter().any(|m| m == member))
    }
}

/// Row-based: cluster(s) = {s} ∪ {combined-bank prediction of every
/// validation example of s}. `symmetric` additionally adds s to cluster(t)
/// whenever t joined cluster(s).
pub fn extract_clusters(banks: &ModelBanks, validation: &[&LabeledSequence], symmetric: bool) -> Result<ClusterMap, FusionError> {
    if validation.is_empty() {
        return Err(FusionError::EmptyValidation);
    }
    let ids = banks.ids();
    let order: HashMap<&str, usize> = ids.iter().enumerate().map(|(i, s)| (*s, i)).collect();
    let predictions: Vec<(String, String)> = validation
        .par_iter()
        .map(|s| Ok((s.label.clone(), banks.classify(ModalityGroup::Combined, &s.features)?)))
        .collect::<Result<_, FusionError>>()?;
    let mut sets: Vec<BTreeSet<usize>> = (0..ids.len()).map(|i| BTreeSet::from([i])).collect();
    for (truth, pred) in &predictions {
        let t = *order.get(truth.as_str()).ok_or_else(|| FusionError::UnknownSign(truth.clone()))?;
        let p = order[pred.as_str()];
        sets[t].insert(p);
        if symmetric {
            sets[p].insert(t);
        }
    }
    Ok(ClusterMap {
        clusters: ids
            .iter()
            .zip(sets)
            .map(|(id, set)| (id.to_string(), set.into_iter().map(|i| ids[i].to_string()).collect()))
            .collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionDecision {
    pub base: String,
    pub candidates: Vec<String>,
    #[serde(rename = "final")]
    pub final_sign: String,
    /// Nonmanual log-likelihood of each candidate, in candidate order.
    pub nonmanual_scores: Vec<f64>,
    /// Combined-bank log-likelihood of every sign, in bank order.
    pub combined_scores: Vec<f64>,
}

/// Base decision from the combined bank, then the nonmanual bank decides
/// among the base's cluster. Log-likelihoods are compared unnormalized: all
/// compete on the same sequence.
pub fn classify_sequential(banks: &ModelBanks, clusters: &ClusterMap, seq: &FeatureSequence) -> Result<FusionDecision, FusionError> {
    let combined_scores = banks.score(ModalityGroup::Combined, seq)?;
    let b = argmax(&combined_scores).ok_or(HmmError::EmptyBank)?;
    let base = banks.combined.models[b].id.clone();
    let candidates = clusters.cluster(&base)?.to_vec();
    let subset: Vec<usize> = candidates
        .iter()
        .map(|c| banks.nonmanual.index_of(c).ok_or_else(|| FusionError::UnknownSign(c.clone())))
        .collect::<Result<_, _>>()?;
    let (final_sign, nonmanual_scores) = if candidates.len() == 1 {
        (base.clone(), vec![banks.score(ModalityGroup::Nonmanual, seq)?[subset[0]]])
    } else {
        let head = seq.modality(Modality::Nonmanual).ok_or(FusionError::BankMismatch)?;
        let scores = banks.nonmanual.score_subset(&head, &subset)?;
        // candidates are in bank order, so the first maximum is the lowest sign id
        let f = argmax(&scores).expect("non-empty");
        (candidates[f].clone(), scores)
    };
    Ok(FusionDecision {
        base,
        candidates,
        final_sign,
        nonmanual_scores,
        combined_scores,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Manual,
    Nonmanual,
    Combined,
    Sequential,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Manual, Method::Nonmanual, Method::Combined, Method::Sequential];

    pub fn name(self) -> &'static str {
        match self {
            Method::Manual => "manual",
            Method::Nonmanual => "nonmanual",
            Method::Combined => "combined",
            Method::Sequential => "sequential",
        }
    }

    pub fn decide(self, banks: &ModelBanks, clusters: &ClusterMap, seq: &FeatureSequence) -> Result<String, FusionError> {
        match self {
            Method::Manual => banks.classify(ModalityGroup::Manual, seq),
            Method::Nonmanual => banks.classify(ModalityGroup::Nonmanual, seq),
            Method::Combined => banks.classify(ModalityGroup::Combined, seq),
            Method::Sequential => Ok(classify_sequential(banks, clusters, seq)?.final_sign),
        }
    }
}

/// Counts indexed (true, predicted).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub labels: Vec<String>,
    pub counts: Vec<Vec<usize>>,
}

impl ConfusionMatrix {
    pub fn new(labels: Vec<String>) -> Self {
        let n = labels.len();
        Self {
            labels,
            counts: vec![vec![0; n]; n],
        }
    }

    fn index(&self, id: &str) -> Result<usize, FusionError> {
        self.labels
            .iter()
            .position(|l| l == id)
            .ok_or_else(|| FusionError::UnknownSign(id.to_string()))
    }

    pub fn add(&mut self, truth: &str, predicted: &str) -> Result<(), FusionError> {
        let (t, p) = (self.index(truth)?, self.index(predicted)?);
        self.counts[t][p] += 1;
        Ok(())
    }

    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    pub fn row_sums(&self) -> Vec<usize> {
        self.counts.iter().map(|r| r.iter().sum()).collect()
    }

    pub fn accuracy(&self) -> f64 {
        let trace: usize = (0..self.labels.len()).map(|i| self.counts[i][i]).sum();
        trace as f64 / self.total().max(1) as f64
    }

    /// A prediction counts as correct when it lies in the true sign's group;
    /// signs missing from `groups` form their own group.
    pub fn within_group_accuracy(&self, groups: &HashMap<String, String>) -> f64 {
        let group = |i: usize| groups.get(&self.labels[i]).map_or(self.labels[i].as_str(), String::as_str);
        let mut ok = 0;
        for (t, row) in self.counts.iter().enumerate() {
            for (p, &c) in row.iter().enumerate() {
                if group(t) == group(p) {
                    ok += c;
                }
            }
        }
        ok as f64 / self.total().max(1) as f64
    }

    /// Fixed-width text table: rows are true signs, columns predictions.
    pub fn render(&self) -> String {
        let w = self.labels.iter().map(String::len).max().unwrap_or(1).max(4);
        let mut out = String::new();
        let _ = write!(out, "{:>w$} |", "");
        for l in &self.labels {
            let _ = write!(out, " {l:>w$}");
        }
        out.push('\n');
        let _ = writeln!(out, "{}", "-".repeat((w + 1) * (self.labels.len() + 1) + 1));
        for (l, row) in self.labels.iter().zip(&self.counts) {
            let _ = write!(out, "{l:>w$} |");
            for c in row {
                let _ = write!(out, " {c:>w$}");
            }
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub method: Method,
    pub labels: Vec<String>,
    pub confusion: Vec<Vec<usize>>,
    pub accuracy: f64,
    pub within_group_accuracy: Option<f64>,
}

impl EvalReport {
    pub fn matrix(&self) -> ConfusionMatrix {
        ConfusionMatrix {
            labels: self.labels.clone(),
            counts: self.confusion.clone(),
        }
    }

    pub fn render(&self) -> String {
        let mut s = format!("{} accuracy: {:.4}", self.method.name(), self.accuracy);
        if let Some(w) = self.within_group_accuracy {
            let _ = write!(s, "  within-group: {w:.4}");
        }
        s.push('\n');
        s + &self.matrix().render()
    }
}

/// Runs `method` on every test sequence (in parallel) and tabulates.
pub fn evaluate(
    banks: &ModelBanks,
    clusters: &ClusterMap,
    method: Method,
    test: &[&LabeledSequence],
    groups: Option<&HashMap<String, String>>,
) -> Result<EvalReport, FusionError> {
    let labels: Vec<String> = banks.ids().iter().map(|s| s.to_string()).collect();
    let preds: Vec<String> = test
        .par_iter()
        .map(|s| method.decide(banks, clusters, &s.features))
        .collect::<Result<_, _>>()?;
    let mut m = ConfusionMatrix::new(labels);
    for (s, p) in test.iter().zip(&preds) {
        m.add(&s.label, p)?;
    }
    Ok(EvalReport {
        method,
        accuracy: m.accuracy(),
        within_group_accuracy: groups.map(|g| m.within_group_accuracy(g)),
        labels: m.labels,
        confusion: m.counts,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SplitStrategy {
    /// Stratified per class over individual performances.
    ByPerformance,
    /// Whole subjects go to one side.
    BySubject,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitConfig {
    pub test_fraction: f64,
    /// Fraction of the training portion held out for cluster extraction.
    pub validation_fraction: f64,
    pub strategy: SplitStrategy,
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            test_fraction: 0.3,
            validation_fraction: 0.2,
            strategy: SplitStrategy::ByPerformance,
            seed: 1,
        }
    }
}

/// Sequence ids of each partition.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<String>,
    pub validation: Vec<String>,
    pub test: Vec<String>,
}

fn portion(n: usize, f: f64) -> usize {
    ((n as f64 * f).round() as usize).min(n)
}

pub fn split_dataset(
    seqs: &[LabeledSequence],
    subjects: Option<&BTreeMap<String, String>>,
    cfg: &SplitConfig,
) -> Result<Split, FusionError> {
    if seqs.is_empty() {
        return Err(FusionError::EmptyDataset);
    }
    for f in [cfg.test_fraction, cfg.validation_fraction] {
        if !(0.0..1.0).contains(&f) {
            return Err(FusionError::Split(format!("fraction {f} outside [0, 1)")));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut split = Split::default();
    match cfg.strategy {
        SplitStrategy::ByPerformance => {
            let refs: Vec<&LabeledSequence> = seqs.iter().collect();
            for (_, mut members) in by_class(&refs) {
                members.shuffle(&mut rng);
                let n_test = portion(members.len(), cfg.test_fraction);
                let rest = members.len() - n_test;
                let n_val = portion(rest, cfg.validation_fraction);
                for (i, s) in members.iter().enumerate() {
                    let id = s.seq_id.clone();
                    if i < n_test {
                        split.test.push(id);
                    } else if i < n_test + n_val {
                        split.validation.push(id);
                    } else {
                        split.train.push(id);
                    }
                }
            }
        }
        SplitStrategy::BySubject => {
            let subjects = subjects.ok_or_else(|| FusionError::Split("subject map required".into()))?;
            let subject_of = |s: &LabeledSequence| {
                subjects
                    .get(&s.seq_id)
                    .cloned()
                    .ok_or_else(|| FusionError::MissingSubject(s.seq_id.clone()))
            };
            let mut people: Vec<String> = seqs
                .iter()
                .map(subject_of)
                .collect::<Result<BTreeSet<_>, _>>()?
                .into_iter()
                .collect();
            people.shuffle(&mut rng);
            let n_test = portion(people.len(), cfg.test_fraction);
            let n_val = portion(people.len() - n_test, cfg.validation_fraction);
            let role: HashMap<&str, usize> = people
                .iter()
                .enumerate()
                .map(|(i, p)| (p.as_str(), if i < n_test { 0 } else if i < n_test + n_val { 1 } else { 2 }))
                .collect();
            for s in seqs {
                let p = subject_of(s)?;
                let id = s.seq_id.clone();
                match role[p.as_str()] {
                    0 => split.test.push(id),
                    1 => split.validation.push(id),
                    _ => split.train.push(id),
                }
            }
        }
    }
    for part in [&mut split.train, &mut split.validation, &mut split.test] {
        part.sort();
    }
    Ok(split)
}

pub fn select<'a>(seqs: &'a [LabeledSequence], ids: &[String]) -> Vec<&'a LabeledSequence> {
    let wanted: BTreeSet<&str> = ids.iter().map(String::as_str).collect();
    seqs.iter().filter(|s| wanted.contains(s.seq_id.as_str())).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub split: SplitConfig,
    pub train: TrainConfig,
    pub symmetric_clusters: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            split: SplitConfig::default(),
            train: TrainConfig::default(),
            symmetric_clusters: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Experiment {
    pub split: Split,
    pub banks: ModelBanks,
    pub clusters: ClusterMap,
    pub reports: Vec<EvalReport>,
}

impl Experiment {
    pub fn report(&self, method: Method) -> &EvalReport {
        self.reports.iter().find(|r| r.method == method).expect("all methods evaluated")
    }
}

/// Split, train on the training portion, extract clusters on validation,
/// evaluate every method on the test portion.
pub fn run_experiment(
    seqs: &[LabeledSequence],
    subjects: Option<&BTreeMap<String, String>>,
    groups: Option<&HashMap<String, String>>,
    cfg: &ExperimentConfig,
) -> Result<Experiment, FusionError> {
    let split = split_dataset(seqs, subjects, &cfg.split)?;
    let banks = train_banks(&select(seqs, &split.train), &cfg.train)?;
    let clusters = extract_clusters(&banks, &select(seqs, &split.validation), cfg.symmetric_clusters)?;
    let test = select(seqs, &split.test);
    let reports = Method::ALL
        .iter()
        .map(|&m| evaluate(&banks, &clusters, m, &test, groups))
        .collect::<Result<_, _>>()?;
    Ok(Experiment {
        split,
        banks,
        clusters,
        reports,
    })
}
