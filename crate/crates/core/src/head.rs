//! Head motion signals from the face region: quantity of motion, horizontal
//! velocity and vertical velocity per frame.
//!
//! Motion energy is the mean absolute difference of mean-equalized luminance
//! over the face box. Velocity comes from SAD block matching of the face box
//! with parabolic sub-pixel refinement, expressed in face widths/heights per
//! frame. Velocities are gated by energy and reduced to their dominant axis.

use image::RgbImage;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::FaceBox;

#[derive(Debug, Error, PartialEq)]
pub enum HeadError {
    #[error("face box has zero area")]
    DegenerateBox,
    #[error("face box {0:?} lies outside the frame")]
    BoxOutside(FaceBox),
    #[error("frames differ in size")]
    FrameSize,
    #[error("no face box available for frame {0}")]
    MissingFaceBox(usize),
    #[error("smoothing factor must lie in (0, 1], got {0}")]
    InvalidAlpha(f64),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct HeadFeatureFrame {
    pub energy: f64,
    pub vx: f64,
    pub vy: f64,
}

impl HeadFeatureFrame {
    pub fn to_array(self) -> [f64; 3] {
        [self.energy, self.vx, self.vy]
    }
}

/// One entry per frame; the first frame has no motion reference and is zero.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct HeadFeatureSequence {
    pub frames: Vec<HeadFeatureFrame>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeadConfig {
    /// Block-matching search radius in pixels.
    pub search_radius: u32,
    /// Velocities are zeroed below this motion energy.
    pub gate_threshold: f64,
    pub smoothing_alpha: f64,
}

impl Default for HeadConfig {
    fn default() -> Self {
        Self {
            search_radius: 8,
            gate_threshold: 0.02,
            smoothing_alpha: 0.5,
        }
    }
}

/// Luminance raster (Rec. 601 weights), 0..255.
#[derive(Debug, Clone)]
pub struct Luma {
    pub width: u32,
    pub height: u32,
    pub values: Vec<f64>,
}

impl Luma {
    pub fn from_rgb(frame: &RgbImage) -> Self {
        Self {
            width: frame.width(),
            height: frame.height(),
            values: frame
                .pixels()
                .map(|p| 0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64)
                .collect(),
        }
    }

    #[inline]
    fn at(&self, x: u32, y: u32) -> f64 {
        self.values[y as usize * self.width as usize + x as usize]
    }

    fn box_mean(&self, b: &FaceBox) -> f64 {
        let mut s = 0.0;
        for y in b.y..b.y + b.height {
            for x in b.x..b.x + b.width {
                s += self.at(x, y);
            }
        }
        s / b.area() as f64
    }
}

fn check_box(b: &FaceBox, w: u32, h: u32) -> Result<(), HeadError> {
    if b.area() == 0 {
        return Err(HeadError::DegenerateBox);
    }
    if !b.fits(w, h) {
        return Err(HeadError::BoxOutside(*b));
    }
    Ok(())
}

fn check_pair(prev: &Luma, cur: &Luma, b: &FaceBox) -> Result<(), HeadError> {
    if (prev.width, prev.height) != (cur.width, cur.height) {
        return Err(HeadError::FrameSize);
    }
    check_box(b, prev.width, prev.height)
}

/// Mean absolute difference of mean-equalized luminance over the box, / 255.
pub fn motion_energy(prev: &Luma, cur: &Luma, face: &FaceBox) -> Result<f64, HeadError> {
    check_pair(prev, cur, face)?;
    let mp = prev.box_mean(face);
    let mc = cur.box_mean(face);
    let mut s = 0.0;
    for y in face.y..face.y + face.height {
        for x in face.x..face.x + face.width {
            s += ((cur.at(x, y) - mc) - (prev.at(x, y) - mp)).abs();
        }
    }
    Ok(s / face.area() as f64 / 255.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VelocityEstimate {
    /// Face widths per frame.
    pub vx: f64,
    /// Face heights per frame.
    pub vy: f64,
    /// Displacement in pixels before normalization.
    pub dx_px: f64,
    pub dy_px: f64,
    /// Part of the search window fell outside the frame and was skipped.
    pub clipped: bool,
}

fn sad(prev: &Luma, cur: &Luma, b: &FaceBox, dx: i64, dy: i64) -> f64 {
    let mut s = 0.0;
    for y in b.y..b.y + b.height {
        let cy = (y as i64 + dy) as u32;
        for x in b.x..b.x + b.width {
            s += (prev.at(x, y) - cur.at((x as i64 + dx) as u32, cy)).abs();
        }
    }
    s / b.area() as f64
}

fn parabolic_offset(minus: f64, centre: f64, plus: f64) -> f64 {
    let denom = minus - 2.0 * centre + plus;
    if denom <= 0.0 {
        0.0
    } else {
        (0.5 * (minus - plus) / denom).clamp(-0.5, 0.5)
    }
}

/// Displacement of the face content from `prev` to `cur`.
pub fn head_velocity(prev: &Luma, cur: &Luma, face: &FaceBox, search_radius: u32) -> Result<VelocityEstimate, HeadError> {
    check_pair(prev, cur, face)?;
    let r = search_radius as i64;
    let side = (2 * r + 1) as usize;
    let mut costs = vec![f64::INFINITY; side * side];
    let mut clipped = false;
    let mut best: Option<(i64, i64, f64)> = None;
    for dy in -r..=r {
        for dx in -r..=r {
            let x0 = face.x as i64 + dx;
            let y0 = face.y as i64 + dy;
            if x0 < 0
                || y0 < 0
                || x0 + face.width as i64 > cur.width as i64
                || y0 + face.height as i64 > cur.height as i64
            {
                clipped = true;
                continue;
            }
            let c = sad(prev, cur, face, dx, dy);
            costs[((dy + r) as usize) * side + (dx + r) as usize] = c;
            let better = match best {
                None => true,
                // prefer smaller displacement on equal cost
                Some((bx, by, bc)) => c < bc || (c == bc && dx.abs() + dy.abs() < bx.abs() + by.abs()),
            };
            if better {
                best = Some((dx, dy, c));
            }
        }
    }
    // (0, 0) is always inside the window because the box fits the frame
    let (bx, by, bc) = best.expect("zero displacement is always evaluated");
    let cost = |dx: i64, dy: i64| -> Option<f64> {
        if dx.abs() > r || dy.abs() > r {
            return None;
        }
        let c = costs[((dy + r) as usize) * side + (dx + r) as usize];
        c.is_finite().then_some(c)
    };
    // an exact match needs no sub-pixel refinement
    let refine = bc > 0.0;
    let fx = match (cost(bx - 1, by), cost(bx + 1, by)) {
        _ if !refine => 0.0,
        (Some(m), Some(p)) => parabolic_offset(m, bc, p),
        _ => 0.0,
    };
    let fy = match (cost(bx, by - 1), cost(bx, by + 1)) {
        _ if !refine => 0.0,
        (Some(m), Some(p)) => parabolic_offset(m, bc, p),
        _ => 0.0,
    };
    let dx_px = bx as f64 + fx;
    let dy_px = by as f64 + fy;
    Ok(VelocityEstimate {
        vx: dx_px / face.width as f64,
        vy: dy_px / face.height as f64,
        dx_px,
        dy_px,
        clipped,
    })
}

/// Zeroes both velocities below the energy gate, then keeps only the
/// dominant axis (horizontal on ties).
pub fn gate_velocity(energy: f64, vx: f64, vy: f64, gate_threshold: f64) -> (f64, f64) {
    if energy < gate_threshold {
        (0.0, 0.0)
    } else if vx.abs() >= vy.abs() {
        (vx, 0.0)
    } else {
        (0.0, vy)
    }
}

/// Per channel, `F_i := a F_i + (1 - a) F_{i-1}` left to right over the
/// already smoothed predecessor.
pub fn adaptive_smooth(seq: &HeadFeatureSequence, alpha: f64) -> Result<HeadFeatureSequence, HeadError> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(HeadError::InvalidAlpha(alpha));
    }
    let mut frames = seq.frames.clone();
    for i in 1..frames.len() {
        let p = frames[i - 1];
        let f = &mut frames[i];
        f.energy = alpha * f.energy + (1.0 - alpha) * p.energy;
        f.vx = alpha * f.vx + (1.0 - alpha) * p.vx;
        f.vy = alpha * f.vy + (1.0 - alpha) * p.vy;
    }
    Ok(HeadFeatureSequence { frames })
}

/// Gated, unsmoothed head signals for every frame. Frames without a face box
/// reuse the most recent one.
pub fn analyze_head(
    frames: &[RgbImage],
    boxes: &[Option<FaceBox>],
    cfg: &HeadConfig,
) -> Result<HeadFeatureSequence, HeadError> {
    let mut out = Vec::with_capacity(frames.len());
    if frames.is_empty() {
        return Ok(HeadFeatureSequence { frames: out });
    }
    out.push(HeadFeatureFrame::default());
    let mut prev = Luma::from_rgb(&frames[0]);
    let mut last_box = boxes.first().copied().flatten();
    for (i, frame) in frames.iter().enumerate().skip(1) {
        let cur = Luma::from_rgb(frame);
        // the previous frame's box anchors the match
        let face = last_box.ok_or(HeadError::MissingFaceBox(i - 1))?;
        let energy = motion_energy(&prev, &cur, &face)?;
        let v = head_velocity(&prev, &cur, &face, cfg.search_radius)?;
        let (vx, vy) = gate_velocity(energy, v.vx, v.vy, cfg.gate_threshold);
        out.push(HeadFeatureFrame { energy, vx, vy });
        if let Some(b) = boxes.get(i).copied().flatten() {
            last_box = Some(b);
        }
        prev = cur;
    }
    Ok(HeadFeatureSequence { frames: out })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn luma(w: u32, h: u32, f: impl Fn(u32, u32) -> f64) -> Luma {
        let mut values = Vec::new();
        for y in 0..h {
            for x in 0..w {
                values.push(f(x, y));
            }
        }
        Luma { width: w, height: h, values }
    }

    fn texture(x: i64, y: i64) -> f64 {
        // deterministic, non-periodic-looking pattern
        let v = ((x * 7919 + y * 104_729) ^ (x * y * 31)) as u64;
        let h = v.wrapping_mul(0x9E37_79B9_7F4A_7C15) >> 56;
        40.0 + (h as f64) * 0.7 + 20.0 * ((x as f64 * 0.3).sin() + (y as f64 * 0.2).cos())
    }

    #[test]
    fn identical_frames_have_no_energy() {
        let a = luma(20, 20, |x, y| texture(x as i64, y as i64));
        assert_eq!(motion_energy(&a, &a, &FaceBox::new(2, 2, 10, 10)).unwrap(), 0.0);
    }

    #[test]
    fn ten_percent_full_range_change() {
        // 5% of pixels go 0 -> 255, another 5% go 255 -> 0: means are equal
        let b = FaceBox::new(0, 0, 20, 10);
        let prev = luma(20, 10, |x, y| match y * 20 + x {
            i if i < 10 => 0.0,
            i if i < 20 => 255.0,
            _ => 100.0,
        });
        let cur = luma(20, 10, |x, y| match y * 20 + x {
            i if i < 10 => 255.0,
            i if i < 20 => 0.0,
            _ => 100.0,
        });
        assert!((motion_energy(&prev, &cur, &b).unwrap() - 0.10).abs() < 1e-12);
    }

    #[test]
    fn brightness_step_is_equalized_away() {
        let b = FaceBox::new(1, 1, 15, 15);
        let prev = luma(20, 20, |x, y| texture(x as i64, y as i64));
        let cur = luma(20, 20, |x, y| texture(x as i64, y as i64) + 30.0);
        assert!(motion_energy(&prev, &cur, &b).unwrap() < 1e-12);
    }

    #[test]
    fn zero_area_box_rejected() {
        let a = luma(4, 4, |_, _| 0.0);
        assert_eq!(motion_energy(&a, &a, &FaceBox::new(1, 1, 0, 2)), Err(HeadError::DegenerateBox));
    }

    #[test]
    fn horizontal_translation() {
        let prev = luma(120, 120, |x, y| texture(x as i64, y as i64));
        let cur = luma(120, 120, |x, y| texture(x as i64 - 4, y as i64));
        let b = FaceBox::new(20, 10, 80, 100);
        let v = head_velocity(&prev, &cur, &b, 8).unwrap();
        assert!((v.dx_px - 4.0).abs() < 0.25, "{v:?}");
        assert!(v.dy_px.abs() < 0.25);
        assert!((v.vx - 0.05).abs() < 0.25 / 80.0);
        assert!(!v.clipped);
    }

    #[test]
    fn static_frames_have_zero_velocity() {
        let a = luma(60, 60, |x, y| texture(x as i64, y as i64));
        let v = head_velocity(&a, &a, &FaceBox::new(15, 15, 30, 30), 8).unwrap();
        assert_eq!((v.vx, v.vy), (0.0, 0.0));
    }

    #[test]
    fn clipped_window_is_flagged() {
        let a = luma(40, 40, |x, y| texture(x as i64, y as i64));
        let v = head_velocity(&a, &a, &FaceBox::new(2, 2, 20, 20), 8).unwrap();
        assert!(v.clipped);
        assert_eq!((v.vx, v.vy), (0.0, 0.0));
    }

    #[test]
    fn gating_rules() {
        assert_eq!(gate_velocity(0.001, 0.3, 0.0, 0.02), (0.0, 0.0));
        assert_eq!(gate_velocity(0.5, 0.2, 0.05, 0.02), (0.2, 0.0));
        assert_eq!(gate_velocity(0.5, 0.0, -0.1, 0.02), (0.0, -0.1));
    }

    fn channel(vals: &[f64]) -> HeadFeatureSequence {
        HeadFeatureSequence {
            frames: vals.iter().map(|&v| HeadFeatureFrame { energy: v, vx: v, vy: -v }).collect(),
        }
    }

    #[test]
    fn adaptive_smoothing_examples() {
        let s = adaptive_smooth(&channel(&[0.0, 1.0, 1.0]), 0.5).unwrap();
        let e: Vec<f64> = s.frames.iter().map(|f| f.energy).collect();
        assert_eq!(e, vec![0.0, 0.5, 0.75]);
        let c = channel(&[0.3, 0.3, 0.3]);
        assert_eq!(adaptive_smooth(&c, 0.5).unwrap(), c);
        let x = channel(&[0.1, 0.9, -0.4]);
        assert_eq!(adaptive_smooth(&x, 1.0).unwrap(), x);
        assert!(adaptive_smooth(&x, 0.0).is_err());
    }
}
