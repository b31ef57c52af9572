//! Left-to-right continuous HMMs with diagonal Gaussian emissions, trained by
//! Baum-Welch and scored with the forward algorithm, all in the log domain.

use std::f64::consts::PI;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::FeatureSequence;

#[derive(Debug, Error, PartialEq)]
pub enum HmmError {
    #[error("no training sequences")]
    NoData,
    #[error("need at least one state")]
    NoStates,
    #[error("sequence {index} is empty")]
    EmptySequence { index: usize },
    #[error("dimension mismatch: model has {expected}, sequence has {found}")]
    Dimension { expected: usize, found: usize },
    #[error("layout mismatch: bank expects {expected:?}, got {found:?}")]
    Layout { expected: String, found: String },
    #[error("log-likelihood became non-finite at iteration {iteration}")]
    NonFinite { iteration: usize },
    #[error("invalid model {id:?}: {message}")]
    InvalidModel { id: String, message: String },
    #[error("empty model bank")]
    EmptyBank,
    #[error("bank serialization: {0}")]
    Serde(String),
}

/// One sign model. The chain always starts in state 0; state `i` may only
/// stay or advance to `i + 1`, and the last state is absorbing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignHmm {
    pub id: String,
    pub n_states: usize,
    #[serde(rename = "A")]
    pub transitions: Vec<Vec<f64>>,
    pub means: Vec<Vec<f64>>,
    pub vars: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub n_states: usize,
    pub max_iters: usize,
    /// Stop when the relative log-likelihood change drops to this value.
    pub rel_tol: f64,
    pub var_floor: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            n_states: 4,
            max_iters: 100,
            rel_tol: 1e-4,
            var_floor: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub model: SignHmm,
    /// Total training log-likelihood: initial model first, then after every
    /// re-estimation.
    pub trace: Vec<f64>,
    pub converged: bool,
}

impl TrainOutcome {
    pub fn iterations(&self) -> usize {
        self.trace.len() - 1
    }
}

pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

fn ln(x: f64) -> f64 {
    if x > 0.0 {
        x.ln()
    } else {
        f64::NEG_INFINITY
    }
}

impl SignHmm {
    pub fn dim(&self) -> usize {
        self.means.first().map_or(0, Vec::len)
    }

    pub fn validate(&self) -> Result<(), HmmError> {
        let bad = |m: &str| HmmError::InvalidModel {
            id: self.id.clone(),
            message: m.to_string(),
        };
        let n = self.n_states;
        if n == 0 {
            return Err(bad("no states"));
        }
        if self.transitions.len() != n || self.means.len() != n || self.vars.len() != n {
            return Err(bad("parameter count does not match n_states"));
        }
        let d = self.dim();
        if d == 0 {
            return Err(bad("zero-dimensional emissions"));
        }
        for i in 0..n {
            let row = &self.transitions[i];
            if row.len() != n {
                return Err(bad("transition row length"));
            }
            if row.iter().any(|&a| !(0.0..=1.0).contains(&a)) {
                return Err(bad("transition probability outside [0, 1]"));
            }
            if (row.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                return Err(bad("transition row does not sum to 1"));
            }
            if row.iter().enumerate().any(|(j, &a)| a != 0.0 && j != i && j != i + 1) {
                return Err(bad("transition is not left-to-right"));
            }
            if self.means[i].len() != d || self.vars[i].len() != d {
                return Err(bad("emission dimension"));
            }
            if self.means[i].iter().any(|m| !m.is_finite()) {
                return Err(bad("non-finite mean"));
            }
            if self.vars[i].iter().any(|&v| !(v > 0.0 && v.is_finite())) {
                return Err(bad("variance must be positive"));
            }
        }
        Ok(())
    }

    /// Diagonal Gaussian log-density of `x` under state `j`.
    pub fn log_emission(&self, j: usize, x: &[f64]) -> f64 {
        let mut s = 0.0;
        for ((&xi, &m), &v) in x.iter().zip(&self.means[j]).zip(&self.vars[j]) {
            let d = xi - m;
            s += (2.0 * PI * v).ln() + d * d / v;
        }
        -0.5 * s
    }

    fn log_transitions(&self) -> Vec<Vec<f64>> {
        self.transitions.iter().map(|r| r.iter().map(|&a| ln(a)).collect()).collect()
    }

    fn check_dim(&self, seq: &FeatureSequence) -> Result<(), HmmError> {
        if seq.dim() != self.dim() {
            return Err(HmmError::Dimension {
                expected: self.dim(),
                found: seq.dim(),
            });
        }
        Ok(())
    }

    /// Forward variables `ln alpha_t(j)`, one row per frame.
    pub fn log_forward(&self, seq: &FeatureSequence) -> Result<Vec<Vec<f64>>, HmmError> {
        self.check_dim(seq)?;
        let n = self.n_states;
        let la = self.log_transitions();
        let mut out: Vec<Vec<f64>> = Vec::with_capacity(seq.len());
        let mut buf = vec![0.0; n];
        for (t, x) in seq.rows().enumerate() {
            let row: Vec<f64> = (0..n)
                .map(|j| {
                    let into = if t == 0 {
                        if j == 0 {
                            0.0
                        } else {
                            f64::NEG_INFINITY
                        }
                    } else {
                        let prev = &out[t - 1];
                        for i in 0..n {
                            buf[i] = prev[i] + la[i][j];
                        }
                        log_sum_exp(&buf)
                    };
                    if into == f64::NEG_INFINITY {
                        into
                    } else {
                        into + self.log_emission(j, x)
                    }
                })
                .collect();
            out.push(row);
        }
        Ok(out)
    }

    /// `ln P(seq | model)`, summed over all end states.
    pub fn log_likelihood(&self, seq: &FeatureSequence) -> Result<f64, HmmError> {
        if seq.is_empty() {
            return Err(HmmError::EmptySequence { index: 0 });
        }
        let alpha = self.log_forward(seq)?;
        Ok(log_sum_exp(alpha.last().expect("non-empty")))
    }

    fn log_backward(&self, seq: &FeatureSequence) -> Vec<Vec<f64>> {
        let n = self.n_states;
        let la = self.log_transitions();
        let len = seq.len();
        let mut out = vec![vec![0.0; n]; len];
        let mut buf = vec![0.0; n];
        for t in (0..len.saturating_sub(1)).rev() {
            let x = seq.row(t + 1);
            let em: Vec<f64> = (0..n).map(|j| self.log_emission(j, x)).collect();
            for i in 0..n {
                for j in 0..n {
                    buf[j] = la[i][j] + em[j] + out[t + 1][j];
                }
                out[t][i] = log_sum_exp(&buf);
            }
        }
        out
    }
}

fn check_data(seqs: &[&FeatureSequence]) -> Result<usize, HmmError> {
    let first = seqs.first().ok_or(HmmError::NoData)?;
    let d = first.dim();
    for (i, s) in seqs.iter().enumerate() {
        if s.is_empty() {
            return Err(HmmError::EmptySequence { index: i });
        }
        if s.dim() != d {
            return Err(HmmError::Dimension {
                expected: d,
                found: s.dim(),
            });
        }
    }
    Ok(d)
}

/// Splits every sequence into `n` equal segments, pools segment `s` across
/// sequences for state `s`, and starts with stay/advance probability 0.5.
pub fn init_model(id: &str, seqs: &[&FeatureSequence], n_states: usize, var_floor: f64) -> Result<SignHmm, HmmError> {
    if n_states == 0 {
        return Err(HmmError::NoStates);
    }
    let d = check_data(seqs)?;
    let mut sum = vec![vec![0.0; d]; n_states];
    let mut sq = vec![vec![0.0; d]; n_states];
    let mut count = vec![0usize; n_states];
    let mut gsum = vec![0.0; d];
    let mut gsq = vec![0.0; d];
    let mut gcount = 0usize;
    for s in seqs {
        let len = s.len();
        for st in 0..n_states {
            for t in st * len / n_states..(st + 1) * len / n_states {
                for (k, &x) in s.row(t).iter().enumerate() {
                    sum[st][k] += x;
                    sq[st][k] += x * x;
                }
                count[st] += 1;
            }
        }
        for x in s.rows() {
            for (k, &v) in x.iter().enumerate() {
                gsum[k] += v;
                gsq[k] += v * v;
            }
            gcount += 1;
        }
    }
    let moments = |sum: &[f64], sq: &[f64], c: usize| -> (Vec<f64>, Vec<f64>) {
        let c = c as f64;
        let mean: Vec<f64> = sum.iter().map(|s| s / c).collect();
        let var = sq
            .iter()
            .zip(&mean)
            .map(|(q, m)| (q / c - m * m).max(var_floor))
            .collect();
        (mean, var)
    };
    let global = moments(&gsum, &gsq, gcount);
    let mut means = Vec::with_capacity(n_states);
    let mut vars = Vec::with_capacity(n_states);
    for st in 0..n_states {
        // sequences shorter than the chain leave early segments empty
        let (m, v) = if count[st] == 0 {
            global.clone()
        } else {
            moments(&sum[st], &sq[st], count[st])
        };
        means.push(m);
        vars.push(v);
    }
    let transitions = (0..n_states)
        .map(|i| {
            let mut row = vec![0.0; n_states];
            if i + 1 < n_states {
                row[i] = 0.5;
                row[i + 1] = 0.5;
            } else {
                row[i] = 1.0;
            }
            row
        })
        .collect();
    Ok(SignHmm {
        id: id.to_string(),
        n_states,
        transitions,
        means,
        vars,
    })
}

fn total_log_likelihood(model: &SignHmm, seqs: &[&FeatureSequence]) -> Result<f64, HmmError> {
    let mut s = 0.0;
    for q in seqs {
        s += model.log_likelihood(q)?;
    }
    Ok(s)
}

/// One Baum-Welch re-estimation step.
pub fn reestimate(model: &SignHmm, seqs: &[&FeatureSequence], var_floor: f64) -> Result<SignHmm, HmmError> {
    let n = model.n_states;
    let d = model.dim();
    let la = model.log_transitions();
    let mut occ = vec![0.0; n];
    let mut occ_from = vec![0.0; n];
    let mut xi_sum = vec![vec![0.0; n]; n];
    let mut wsum = vec![vec![0.0; d]; n];
    let mut wsq = vec![vec![0.0; d]; n];

    for seq in seqs {
        let alpha = model.log_forward(seq)?;
        let beta = model.log_backward(seq);
        let ll = log_sum_exp(alpha.last().expect("non-empty"));
        if !ll.is_finite() {
            continue;
        }
        let len = seq.len();
        for t in 0..len {
            let x = seq.row(t);
            for j in 0..n {
                let g = (alpha[t][j] + beta[t][j] - ll).exp();
                if g == 0.0 {
                    continue;
                }
                occ[j] += g;
                if t + 1 < len {
                    occ_from[j] += g;
                }
                for k in 0..d {
                    wsum[j][k] += g * x[k];
                    wsq[j][k] += g * x[k] * x[k];
                }
            }
            if t + 1 < len {
                let x1 = seq.row(t + 1);
                for i in 0..n {
                    for j in [i, i + 1] {
                        if j >= n || la[i][j] == f64::NEG_INFINITY {
                            continue;
                        }
                        let lx = alpha[t][i] + la[i][j] + model.log_emission(j, x1) + beta[t + 1][j] - ll;
                        xi_sum[i][j] += lx.exp();
                    }
                }
            }
        }
    }

    let mut next = model.clone();
    for i in 0..n {
        if occ_from[i] > 0.0 && i + 1 < n {
            let stay = xi_sum[i][i];
            let adv = xi_sum[i][i + 1];
            let tot = stay + adv;
            if tot > 0.0 {
                next.transitions[i][i] = stay / tot;
                next.transitions[i][i + 1] = adv / tot;
            }
        }
        if occ[i] > 0.0 {
            for k in 0..d {
                let m = wsum[i][k] / occ[i];
                // E[(x - m)^2] computed around the new mean
                let v = (wsq[i][k] / occ[i] - m * m).max(var_floor);
                next.means[i][k] = m;
                next.vars[i][k] = v;
            }
        }
    }
    Ok(next)
}

/// Trains one sign model on its sequences.
pub fn train(id: &str, seqs: &[&FeatureSequence], cfg: &TrainConfig) -> Result<TrainOutcome, HmmError> {
    let mut model = init_model(id, seqs, cfg.n_states, cfg.var_floor)?;
    let mut prev = total_log_likelihood(&model, seqs)?;
    if !prev.is_finite() {
        return Err(HmmError::NonFinite { iteration: 0 });
    }
    let mut trace = vec![prev];
    let mut converged = false;
    for iteration in 1..=cfg.max_iters {
        model = reestimate(&model, seqs, cfg.var_floor)?;
        let ll = total_log_likelihood(&model, seqs)?;
        if !ll.is_finite() {
            return Err(HmmError::NonFinite { iteration });
        }
        trace.push(ll);
        let delta = (ll - prev).abs();
        prev = ll;
        if delta <= cfg.rel_tol * ll.abs() {
            converged = true;
            break;
        }
    }
    Ok(TrainOutcome { model, trace, converged })
}

/// One model per sign, all over the same feature layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HmmBank {
    pub layout_tag: String,
    #[serde(rename = "signs")]
    pub models: Vec<SignHmm>,
}

impl HmmBank {
    pub fn validate(&self) -> Result<(), HmmError> {
        let first = self.models.first().ok_or(HmmError::EmptyBank)?;
        let d = first.dim();
        for m in &self.models {
            m.validate()?;
            if m.dim() != d {
                return Err(HmmError::Dimension {
                    expected: d,
                    found: m.dim(),
                });
            }
        }
        Ok(())
    }

    pub fn ids(&self) -> Vec<&str> {
        self.models.iter().map(|m| m.id.as_str()).collect()
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.models.iter().position(|m| m.id == id)
    }

    fn check_layout(&self, seq: &FeatureSequence) -> Result<(), HmmError> {
        let tag = seq.layout().tag();
        if tag != self.layout_tag {
            return Err(HmmError::Layout {
                expected: self.layout_tag.clone(),
                found: tag,
            });
        }
        Ok(())
    }

    /// Log-likelihood of `seq` under every model, in bank order.
    pub fn score(&self, seq: &FeatureSequence) -> Result<Vec<f64>, HmmError> {
        self.check_layout(seq)?;
        self.models.iter().map(|m| m.log_likelihood(seq)).collect()
    }

    /// Scores restricted to the given model indices.
    pub fn score_subset(&self, seq: &FeatureSequence, subset: &[usize]) -> Result<Vec<f64>, HmmError> {
        self.check_layout(seq)?;
        subset.iter().map(|&i| self.models[i].log_likelihood(seq)).collect()
    }

    pub fn to_writer<W: Write>(&self, w: W) -> Result<(), HmmError> {
        serde_json::to_writer_pretty(w, self).map_err(|e| HmmError::Serde(e.to_string()))
    }

    pub fn from_reader<R: Read>(r: R) -> Result<Self, HmmError> {
        let bank: HmmBank = serde_json::from_reader(r).map_err(|e| HmmError::Serde(e.to_string()))?;
        bank.validate()?;
        Ok(bank)
    }
}

/// Index of the maximum; ties and NaNs resolve to the earliest entry.
pub fn argmax(xs: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &x) in xs.iter().enumerate() {
        if best.is_none_or(|b| x > xs[b]) {
            best = Some(i);
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::FeatureLayout;
    use std::sync::Arc;

    fn seq(values: &[f64]) -> FeatureSequence {
        let l = Arc::new(FeatureLayout::generic(1).unwrap());
        FeatureSequence::new(l, values.iter().map(|&v| vec![v]).collect()).unwrap()
    }

    #[test]
    fn init_on_step_sequence() {
        let s = seq(&[0.0, 0.0, 10.0, 10.0]);
        let m = init_model("a", &[&s], 2, 1e-4).unwrap();
        assert_eq!(m.means, vec![vec![0.0], vec![10.0]]);
        assert_eq!(m.vars, vec![vec![1e-4], vec![1e-4]]);
        assert_eq!(m.transitions, vec![vec![0.5, 0.5], vec![0.0, 1.0]]);
        m.validate().unwrap();
    }

    #[test]
    fn single_state_matches_gaussian() {
        let s = seq(&[1.0, 2.0, 3.0]);
        let m = init_model("a", &[&s], 1, 1e-4).unwrap();
        let v: f64 = 2.0 / 3.0;
        let expect: f64 = [1.0, 2.0, 3.0]
            .iter()
            .map(|x: &f64| -0.5 * ((2.0 * PI * v).ln() + (x - 2.0).powi(2) / v))
            .sum();
        assert!((m.log_likelihood(&s).unwrap() - expect).abs() < 1e-12);
    }

    #[test]
    fn training_increases_likelihood() {
        let a = seq(&[0.0, 0.1, 0.0, 5.0, 5.1, 4.9, 5.0, 9.0, 9.2]);
        let b = seq(&[0.1, 0.0, 5.2, 5.0, 9.1, 9.0, 8.9]);
        let out = train("a", &[&a, &b], &TrainConfig { n_states: 3, ..TrainConfig::default() }).unwrap();
        for w in out.trace.windows(2) {
            assert!(w[1] >= w[0] - 1e-8, "{:?}", out.trace);
        }
        out.model.validate().unwrap();
    }

    #[test]
    fn infinite_tolerance_runs_one_iteration() {
        let a = seq(&[0.0, 1.0, 2.0, 3.0]);
        let cfg = TrainConfig {
            n_states: 2,
            rel_tol: f64::INFINITY,
            ..TrainConfig::default()
        };
        assert_eq!(train("a", &[&a], &cfg).unwrap().iterations(), 1);
    }

    #[test]
    fn argmax_ties_take_first() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), Some(1));
        assert_eq!(argmax(&[]), None);
    }

    #[test]
    fn bank_json_round_trip_is_exact() {
        let a = seq(&[0.1, 0.7, 2.3, 3.9, 4.4]);
        let m = train("x", &[&a], &TrainConfig { n_states: 2, ..TrainConfig::default() }).unwrap().model;
        let bank = HmmBank {
            layout_tag: a.layout().tag(),
            models: vec![m],
        };
        let mut buf = Vec::new();
        bank.to_writer(&mut buf).unwrap();
        let back = HmmBank::from_reader(buf.as_slice()).unwrap();
        assert_eq!(back, bank);
        assert_eq!(back.score(&a).unwrap(), bank.score(&a).unwrap());
    }

    #[test]
    fn layout_mismatch_rejected() {
        let a = seq(&[0.0, 1.0]);
        let m = init_model("x", &[&a], 1, 1e-4).unwrap();
        let bank = HmmBank {
            layout_tag: "v1|m:other".into(),
            models: vec![m],
        };
        assert!(matches!(bank.score(&a), Err(HmmError::Layout { .. })));
    }
}
