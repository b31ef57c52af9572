//! Independent reference implementations used as test oracles, plus
//! generators for random models and constructed rasters.
#![allow(dead_code)]

use std::f64::consts::PI;
use std::sync::Arc;

use image::{Rgb, RgbImage};
use rand::Rng;
use signtutor_core::hmm::SignHmm;
use signtutor_core::mask::BinaryMask;
use signtutor_core::{FeatureLayout, FeatureSequence};

// ---------- HMM ----------

pub fn random_model<R: Rng>(rng: &mut R, n: usize, d: usize) -> SignHmm {
    let transitions = (0..n)
        .map(|i| {
            let mut row = vec![0.0; n];
            if i + 1 < n {
                let stay: f64 = rng.random_range(0.05..0.95);
                row[i] = stay;
                row[i + 1] = 1.0 - stay;
            } else {
                row[i] = 1.0;
            }
            row
        })
        .collect();
    SignHmm {
        id: "r".into(),
        n_states: n,
        transitions,
        means: (0..n).map(|_| (0..d).map(|_| rng.random_range(-2.0..2.0)).collect()).collect(),
        vars: (0..n).map(|_| (0..d).map(|_| rng.random_range(0.2..2.0)).collect()).collect(),
    }
}

pub fn sequence(rows: Vec<Vec<f64>>) -> FeatureSequence {
    let d = rows[0].len();
    FeatureSequence::new(Arc::new(FeatureLayout::generic(d).unwrap()), rows).unwrap()
}

pub fn random_sequence<R: Rng>(rng: &mut R, len: usize, d: usize) -> FeatureSequence {
    sequence((0..len).map(|_| (0..d).map(|_| rng.random_range(-3.0..3.0)).collect()).collect())
}

fn gauss_density(x: &[f64], mean: &[f64], var: &[f64]) -> f64 {
    x.iter()
        .zip(mean)
        .zip(var)
        .map(|((x, m), v)| (-(x - m) * (x - m) / (2.0 * v)).exp() / (2.0 * PI * v).sqrt())
        .product()
}

/// Sums the probability of every state path that starts in state 0.
pub fn brute_force_log_likelihood(m: &SignHmm, seq: &FeatureSequence) -> f64 {
    let n = m.n_states;
    let len = seq.len();
    let mut total = 0.0;
    let mut path = vec![0usize; len];
    let paths = n.pow(len as u32 - 1);
    for code in 0..paths {
        let mut c = code;
        for s in path.iter_mut().skip(1) {
            *s = c % n;
            c /= n;
        }
        let mut p = gauss_density(seq.row(0), &m.means[0], &m.vars[0]);
        for t in 1..len {
            p *= m.transitions[path[t - 1]][path[t]];
            if p == 0.0 {
                break;
            }
            p *= gauss_density(seq.row(t), &m.means[path[t]], &m.vars[path[t]]);
        }
        total += p;
    }
    total.ln()
}

/// Sequences drawn from a random left-to-right chain.
pub fn sample_sequences<R: Rng>(rng: &mut R, m: &SignHmm, count: usize, len: usize) -> Vec<FeatureSequence> {
    (0..count)
        .map(|_| {
            let mut s = 0;
            let rows = (0..len)
                .map(|t| {
                    if t > 0 && s + 1 < m.n_states && rng.random::<f64>() > m.transitions[s][s] {
                        s += 1;
                    }
                    m.means[s]
                        .iter()
                        .zip(&m.vars[s])
                        .map(|(mu, v)| {
                            // Box-Muller
                            let u1: f64 = rng.random_range(1e-12..1.0);
                            let u2: f64 = rng.random();
                            mu + v.sqrt() * (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos()
                        })
                        .collect()
                })
                .collect();
            sequence(rows)
        })
        .collect()
}

// ---------- Kalman ----------

pub type M4 = [[f64; 4]; 4];

fn mul4(a: &M4, b: &M4) -> M4 {
    let mut c = [[0.0; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            for k in 0..4 {
                c[i][j] += a[i][k] * b[k][j];
            }
        }
    }
    c
}

fn transpose4(a: &M4) -> M4 {
    let mut t = [[0.0; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            t[i][j] = a[j][i];
        }
    }
    t
}

/// Constant-velocity filter written out with plain arrays.
#[derive(Debug, Clone)]
pub struct PlainKalman {
    pub x: [f64; 4],
    pub p: M4,
    pub q: f64,
    pub r: f64,
}

impl PlainKalman {
    pub fn new(at: (f64, f64), p0: [f64; 4], q: f64, r: f64) -> Self {
        let mut p = [[0.0; 4]; 4];
        for i in 0..4 {
            p[i][i] = p0[i];
        }
        Self {
            x: [at.0, at.1, 0.0, 0.0],
            p,
            q,
            r,
        }
    }

    pub fn step(&mut self, z: Option<(f64, f64)>) {
        let f: M4 = [[1.0, 0.0, 1.0, 0.0], [0.0, 1.0, 0.0, 1.0], [0.0, 0.0, 1.0, 0.0], [0.0, 0.0, 0.0, 1.0]];
        // white acceleration: G = [1/2, 1/2, 1, 1] per axis, Q = q G G^T per axis
        let g = [0.5, 1.0];
        let mut qm = [[0.0; 4]; 4];
        for axis in 0..2 {
            let idx = [axis, axis + 2];
            for a in 0..2 {
                for b in 0..2 {
                    qm[idx[a]][idx[b]] = self.q * g[a] * g[b];
                }
            }
        }
        let x = self.x;
        self.x = [x[0] + x[2], x[1] + x[3], x[2], x[3]];
        let fp = mul4(&f, &self.p);
        let mut p = mul4(&fp, &transpose4(&f));
        for i in 0..4 {
            for j in 0..4 {
                p[i][j] += qm[i][j];
            }
        }
        self.p = p;
        let Some((zx, zy)) = z else { return };
        // S = H P H^T + R, H selects the positions
        let s = [[p[0][0] + self.r, p[0][1]], [p[1][0], p[1][1] + self.r]];
        let det = s[0][0] * s[1][1] - s[0][1] * s[1][0];
        let si = [[s[1][1] / det, -s[0][1] / det], [-s[1][0] / det, s[0][0] / det]];
        // K = P H^T S^-1 (4x2)
        let mut k = [[0.0; 2]; 4];
        for i in 0..4 {
            for j in 0..2 {
                k[i][j] = p[i][0] * si[0][j] + p[i][1] * si[1][j];
            }
        }
        let y = [zx - self.x[0], zy - self.x[1]];
        for i in 0..4 {
            self.x[i] += k[i][0] * y[0] + k[i][1] * y[1];
        }
        // Joseph form
        let mut ikh = [[0.0; 4]; 4];
        for i in 0..4 {
            ikh[i][i] = 1.0;
            ikh[i][0] -= k[i][0];
            ikh[i][1] -= k[i][1];
        }
        let mut np = mul4(&mul4(&ikh, &p), &transpose4(&ikh));
        for i in 0..4 {
            for j in 0..4 {
                np[i][j] += self.r * (k[i][0] * k[j][0] + k[i][1] * k[j][1]);
            }
        }
        self.p = np;
    }
}

// ---------- shape ----------

/// Sorts every template distance and averages the first `k`.
pub fn brute_force_knn(v: &[f64], templates: &[Vec<f64>], k: usize) -> f64 {
    let mut d: Vec<f64> = templates
        .iter()
        .map(|t| t.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt())
        .collect();
    d.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let k = k.min(d.len());
    d[..k].iter().sum::<f64>() / k as f64
}

/// Palm ellipse with a configurable fan of finger bars, drawn at `scale`.
/// Geometry is defined in continuous coordinates so upscaled renders are
/// resampled shapes rather than pixel copies.
pub fn hand_mask(variant: usize, scale: f64) -> BinaryMask {
    let fingers = 1 + variant % 5;
    let tilt = (variant as f64 * 23.0).to_radians();
    let palm = (26.0 + (variant % 3) as f64 * 4.0, 21.0 + (variant % 4) as f64 * 2.0);
    let size = (140.0 * scale).ceil() as u32;
    let c = 70.0;
    BinaryMask::from_fn(size, size, |px, py| {
        let x = (px as f64 + 0.5) / scale - c;
        let y = (py as f64 + 0.5) / scale - c;
        let (ct, st) = (tilt.cos(), tilt.sin());
        let (u, v) = (ct * x + st * y, -st * x + ct * y);
        if (u / palm.0).powi(2) + (v / palm.1).powi(2) <= 1.0 {
            return true;
        }
        (0..fingers).any(|f| {
            let a = (-60.0 + 30.0 * f as f64).to_radians();
            let (ca, sa) = (a.cos(), a.sin());
            // finger axis from the palm rim outward along direction (sa, -ca)
            let along = sa * u - ca * v;
            let across = ca * u + sa * v;
            along > palm.1 * 0.6 && along < palm.1 + 24.0 + 3.0 * f as f64 && across.abs() < 4.0
        })
    })
}

pub fn disk_mask(radius: f64) -> BinaryMask {
    let size = (2.0 * radius + 6.0).ceil() as u32;
    let c = size as f64 / 2.0;
    BinaryMask::from_fn(size, size, |x, y| {
        let dx = x as f64 + 0.5 - c;
        let dy = y as f64 + 0.5 - c;
        dx * dx + dy * dy <= radius * radius
    })
}

// ---------- rasters ----------

pub const LEFT_GLOVE: [u8; 3] = [220, 30, 40];
pub const RIGHT_GLOVE: [u8; 3] = [30, 60, 220];
pub const BACKGROUND: [u8; 3] = [70, 140, 70];

/// Deterministic texture in 40..200.
pub fn texture(x: i64, y: i64) -> u8 {
    let v = ((x * 7919 + y * 104_729) ^ (x * y * 31)) as u64;
    let h = v.wrapping_mul(0x9E37_79B9_7F4A_7C15) >> 58;
    (40.0 + h as f64 * 1.5 + 30.0 * ((x as f64 * 0.35).sin() + (y as f64 * 0.25).cos())) as u8
}

pub struct SmokeClip {
    pub frames: Vec<RgbImage>,
    pub face_boxes: Vec<[u32; 4]>,
    /// Blob centres per frame.
    pub left: Vec<(f64, f64)>,
    pub right: Vec<(f64, f64)>,
    /// Vertical head offset per frame, pixels.
    pub nod: Vec<f64>,
    pub radius: f64,
}

/// Two coloured disks moving over a plain background and a textured grey
/// face patch nodding vertically.
pub fn smoke_clip(frames: usize) -> SmokeClip {
    let (w, h) = (240u32, 180u32);
    let radius = 9.0;
    let mut clip = SmokeClip {
        frames: Vec::new(),
        face_boxes: Vec::new(),
        left: Vec::new(),
        right: Vec::new(),
        nod: Vec::new(),
        radius,
    };
    let face = (95u32, 20u32, 50u32, 60u32);
    for t in 0..frames {
        let s = t as f64 / (frames - 1) as f64;
        let l = (60.0 + 30.0 * s, 130.0 - 40.0 * s);
        let r = (180.0 - 25.0 * s, 120.0 + 20.0 * (2.0 * PI * s).sin());
        let nod = (5.0 * (2.0 * PI * 2.0 * s).sin()).round();
        let mut img = RgbImage::from_pixel(w, h, Rgb(BACKGROUND));
        for y in 0..h {
            for x in 0..w {
                let (fx, fy) = (x as i64 - face.0 as i64, y as i64 - face.1 as i64 - nod as i64);
                // face patch larger than the box so motion keeps it covered
                if (-10..face.2 as i64 + 10).contains(&fx) && (-10..face.3 as i64 + 10).contains(&fy) {
                    let g = texture(fx, fy);
                    img.put_pixel(x, y, Rgb([g, g, g]));
                }
                let (px, py) = (x as f64, y as f64);
                if (px - l.0).powi(2) + (py - l.1).powi(2) <= radius * radius {
                    img.put_pixel(x, y, Rgb(LEFT_GLOVE));
                }
                if (px - r.0).powi(2) + (py - r.1).powi(2) <= radius * radius {
                    img.put_pixel(x, y, Rgb(RIGHT_GLOVE));
                }
            }
        }
        clip.frames.push(img);
        clip.face_boxes.push([face.0, face.1, face.2, face.3]);
        clip.left.push(l);
        clip.right.push(r);
        clip.nod.push(nod);
    }
    clip
}

// ---------- thresholds ----------

/// Hysteresis by flood fill from every seed over labeled pixels scoring at
/// least `t_low`; returns (misses, false alarms) over the labeled pixels.
pub fn flood_fill_errors(width: usize, scores: &[f64], truth: &[Option<bool>], t_low: f64, t_high: f64) -> (usize, usize) {
    let height = if width == 0 { 0 } else { scores.len() / width };
    let mut kept = vec![false; scores.len()];
    let mut stack: Vec<usize> = (0..scores.len())
        .filter(|&i| truth[i].is_some() && scores[i] >= t_high)
        .collect();
    for &i in &stack {
        kept[i] = true;
    }
    while let Some(i) = stack.pop() {
        let (x, y) = ((i % width) as i64, (i / width) as i64);
        for dy in -1..=1 {
            for dx in -1..=1 {
                let (nx, ny) = (x + dx, y + dy);
                if nx < 0 || ny < 0 || nx >= width as i64 || ny >= height as i64 {
                    continue;
                }
                let j = ny as usize * width + nx as usize;
                if !kept[j] && truth[j].is_some() && scores[j] >= t_low {
                    kept[j] = true;
                    stack.push(j);
                }
            }
        }
    }
    let mut misses = 0;
    let mut false_alarms = 0;
    for (k, t) in kept.iter().zip(truth) {
        match (t, k) {
            (Some(true), false) => misses += 1,
            (Some(false), true) => false_alarms += 1,
            _ => {}
        }
    }
    (misses, false_alarms)
}

/// Exhaustive grid search scored by [`flood_fill_errors`]: returns
/// (t_low, t_high, total error) with ties to the larger t_high, then t_low.
pub fn brute_force_thresholds(frames: &[(usize, Vec<f64>, Vec<Option<bool>>)], steps: usize) -> (f64, f64, usize) {
    let glove: Vec<f64> = frames
        .iter()
        .flat_map(|(_, s, t)| s.iter().zip(t).filter(|(_, t)| **t == Some(true)).map(|(s, _)| *s))
        .collect();
    let n = glove.len() as f64;
    let mu = glove.iter().sum::<f64>() / n;
    let sd = (glove.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / n).sqrt();
    let (lo, hi) = ((mu - sd).clamp(0.0, 1.0), (mu + sd).clamp(0.0, 1.0));
    let grid: Vec<f64> = if hi <= lo {
        vec![lo]
    } else {
        (0..steps).map(|i| if i + 1 == steps { hi } else { lo + (hi - lo) * i as f64 / (steps - 1) as f64 }).collect()
    };
    let mut best = (0.0, 0.0, usize::MAX);
    for &th in &grid {
        for &tl in grid.iter().filter(|&&t| t <= th) {
            let err: usize = frames
                .iter()
                .map(|(w, s, t)| {
                    let (m, f) = flood_fill_errors(*w, s, t, tl, th);
                    m + f
                })
                .sum();
            if err < best.2 || (err == best.2 && (th, tl) > (best.1, best.0)) {
                best = (tl, th, err);
            }
        }
    }
    best
}
