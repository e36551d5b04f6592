//! Binary k-space undersampling masks: Cartesian lines, golden-angle radial
//! spokes, and Archimedean spirals, all rasterized onto the Cartesian grid.
//!
//! The acceleration factor R is defined as total grid points over sampled
//! points. Generators search their own granularity knob (row count, spoke
//! count, spiral pitch) until the achieved R is within 5% of the target.

use std::path::Path;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Golden angle between consecutive radial spokes, in degrees.
pub const GOLDEN_ANGLE_DEG: f64 = 111.246;

/// Below this target R, spoke/arm granularity cannot track the target and the
/// radial/spiral generators return the all-ones mask.
pub const DEGENERATE_R: f64 = 1.2;

/// Relative tolerance on the achieved acceleration.
pub const R_TOLERANCE: f64 = 0.05;

/// Default rasterization step (pixels of arc length per sample) for curved
/// trajectories.
pub const DEFAULT_RASTER_STEP: f64 = 0.25;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pattern {
    Cartesian,
    Radial,
    Spiral,
}

impl Pattern {
    pub fn name(&self) -> &'static str {
        match self {
            Pattern::Cartesian => "cartesian",
            Pattern::Radial => "radial",
            Pattern::Spiral => "spiral",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cartesian" => Ok(Pattern::Cartesian),
            "radial" => Ok(Pattern::Radial),
            "spiral" => Ok(Pattern::Spiral),
            other => Err(Error::config(format!("unknown pattern '{other}'"))),
        }
    }
}

impl std::fmt::Display for Pattern {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// A binary undersampling mask with its generation metadata.
#[derive(Clone, Debug)]
pub struct SamplingMask {
    mask: Array2<u8>,
    pattern: Pattern,
    target_r: f64,
    achieved_r: f64,
    seed: u64,
}

/// Sidecar metadata written next to a mask `.dar` file.
#[derive(Serialize, Deserialize)]
struct MaskSidecar {
    pattern: Pattern,
    target_r: f64,
    achieved_r: f64,
    seed: u64,
}

impl SamplingMask {
    pub fn new(mask: Array2<u8>, pattern: Pattern, target_r: f64, seed: u64) -> Result<Self> {
        let ones = mask.iter().filter(|&&v| v == 1).count();
        if mask.iter().any(|&v| v > 1) {
            return Err(Error::validation("mask entries must be 0 or 1"));
        }
        if ones == 0 {
            return Err(Error::validation("mask must contain at least one sample"));
        }
        if !(1.0..=16.0).contains(&target_r) {
            return Err(Error::validation(format!(
                "target_R must be in [1, 16], got {target_r}"
            )));
        }
        let (h, w) = mask.dim();
        let achieved_r = (h * w) as f64 / ones as f64;
        let all_ones = ones == h * w;
        // The all-ones mask is the documented degenerate output for
        // target_R < 1.2, where curve granularity cannot track the target.
        if target_r <= 8.0 && !(all_ones && target_r < DEGENERATE_R) {
            let rel = (achieved_r - target_r).abs() / target_r;
            if rel > R_TOLERANCE {
                return Err(Error::validation(format!(
                    "achieved R {achieved_r:.3} deviates {:.1}% from target {target_r} (limit 5%)",
                    rel * 100.0
                )));
            }
        }
        Ok(Self { mask, pattern, target_r, achieved_r, seed })
    }

    pub fn mask(&self) -> &Array2<u8> {
        &self.mask
    }

    pub fn pattern(&self) -> Pattern {
        self.pattern
    }

    pub fn target_r(&self) -> f64 {
        self.target_r
    }

    pub fn achieved_r(&self) -> f64 {
        self.achieved_r
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn shape(&self) -> (usize, usize) {
        self.mask.dim()
    }

    pub fn count_ones(&self) -> usize {
        self.mask.iter().filter(|&&v| v == 1).count()
    }

    /// Write mask data as `<base>.dar` plus a JSON sidecar `<base>.json`.
    pub fn save(&self, base: impl AsRef<Path>) -> Result<()> {
        let base = base.as_ref();
        let arr = self.mask.mapv(|v| v as f32).into_dyn();
        crate::dar::save_array(base.with_extension("dar"), &crate::dar::DarArray::F32(arr))?;
        let sidecar = MaskSidecar {
            pattern: self.pattern,
            target_r: self.target_r,
            achieved_r: self.achieved_r,
            seed: self.seed,
        };
        let text = serde_json::to_string_pretty(&sidecar)
            .map_err(|e| Error::format(e.to_string()))?;
        std::fs::write(base.with_extension("json"), text)?;
        Ok(())
    }

    pub fn load(base: impl AsRef<Path>) -> Result<Self> {
        let base = base.as_ref();
        let arr = match crate::dar::load_array(base.with_extension("dar"))? {
            crate::dar::DarArray::F32(a) => a,
            other => {
                return Err(Error::format(format!(
                    "mask file has dtype {:?}, expected f32",
                    other.shape()
                )))
            }
        };
        let arr2 = arr
            .into_dimensionality::<ndarray::Ix2>()
            .map_err(|e| Error::format(e.to_string()))?;
        let text = std::fs::read_to_string(base.with_extension("json"))?;
        let sc: MaskSidecar =
            serde_json::from_str(&text).map_err(|e| Error::format(e.to_string()))?;
        SamplingMask::new(arr2.mapv(|v| v as u8), sc.pattern, sc.target_r, sc.seed)
    }
}

/// H*W divided by the number of sampled points.
pub fn achieved_acceleration(mask: &Array2<u8>) -> Result<f64> {
    let ones = mask.iter().filter(|&&v| v == 1).count();
    if ones == 0 {
        return Err(Error::validation("mask has no sampled entries"));
    }
    Ok(mask.len() as f64 / ones as f64)
}

fn check_grid(h: usize, w: usize, target_r: f64) -> Result<()> {
    if h < 8 || w < 8 {
        return Err(Error::config(format!("grid must be at least 8x8, got {h}x{w}")));
    }
    if !(1.0..=16.0).contains(&target_r) {
        return Err(Error::config(format!("target_R must be in [1, 16], got {target_r}")));
    }
    Ok(())
}

/// 1D Cartesian undersampling: full rows, a fully sampled center band, and
/// uniformly random remaining rows.
pub fn cartesian_mask(
    h: usize,
    w: usize,
    target_r: f64,
    center_fraction: f64,
    seed: u64,
) -> Result<SamplingMask> {
    check_grid(h, w, target_r)?;
    if !(0.0..=0.5).contains(&center_fraction) {
        return Err(Error::config(format!(
            "center_fraction must be in [0, 0.5], got {center_fraction}"
        )));
    }
    let n_rows = ((h as f64 / target_r).round() as usize).clamp(1, h);
    let n_center = (center_fraction * h as f64).ceil() as usize;
    if n_center > n_rows {
        return Err(Error::config(format!(
            "center band of {n_center} rows exceeds the row budget {n_rows} at R={target_r}"
        )));
    }
    let center_lo = (h - n_center) / 2;
    let mut selected = vec![false; h];
    for r in center_lo..center_lo + n_center {
        selected[r] = true;
    }
    let mut rest: Vec<usize> = (0..h).filter(|r| !selected[*r]).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rest.shuffle(&mut rng);
    for &r in rest.iter().take(n_rows - n_center) {
        selected[r] = true;
    }
    let mut mask = Array2::<u8>::zeros((h, w));
    for (r, row_on) in selected.iter().enumerate() {
        if *row_on {
            mask.row_mut(r).fill(1);
        }
    }
    SamplingMask::new(mask, Pattern::Cartesian, target_r, seed)
}

/// Mark every pixel cell that the segment (r0,c0)->(r1,c1) passes through.
/// Cells are unit squares centered on integer coordinates.
fn supercover_segment(mask: &mut Array2<u8>, r0: f64, c0: f64, r1: f64, c1: f64) {
    let (h, w) = mask.dim();
    // Shift by 0.5 so cell (i,j) spans [i, i+1) x [j, j+1).
    let (x0, y0, x1, y1) = (r0 + 0.5, c0 + 0.5, r1 + 0.5, c1 + 0.5);
    let mut ix = x0.floor() as i64;
    let mut iy = y0.floor() as i64;
    let ix1 = x1.floor() as i64;
    let iy1 = y1.floor() as i64;
    let dx = x1 - x0;
    let dy = y1 - y0;
    let sx: i64 = if dx > 0.0 { 1 } else { -1 };
    let sy: i64 = if dy > 0.0 { 1 } else { -1 };
    let (tdx, mut tmx) = if dx != 0.0 {
        let next = (ix + i64::from(sx > 0)) as f64 - x0;
        ((1.0 / dx).abs(), (next / dx).abs())
    } else {
        (f64::INFINITY, f64::INFINITY)
    };
    let (tdy, mut tmy) = if dy != 0.0 {
        let next = (iy + i64::from(sy > 0)) as f64 - y0;
        ((1.0 / dy).abs(), (next / dy).abs())
    } else {
        (f64::INFINITY, f64::INFINITY)
    };
    let mut mark = |i: i64, j: i64| {
        if i >= 0 && (i as usize) < h && j >= 0 && (j as usize) < w {
            mask[[i as usize, j as usize]] = 1;
        }
    };
    mark(ix, iy);
    let mut guard = 0usize;
    while (ix != ix1 || iy != iy1) && guard < 4 * (h + w) {
        guard += 1;
        if tmx < tmy {
            ix += sx;
            tmx += tdx;
        } else {
            iy += sy;
            tmy += tdy;
        }
        mark(ix, iy);
    }
}

fn all_ones_mask(h: usize, w: usize, pattern: Pattern, target_r: f64, seed: u64) -> Result<SamplingMask> {
    SamplingMask::new(Array2::ones((h, w)), pattern, target_r, seed)
}

fn build_radial(h: usize, w: usize, n_spokes: usize, theta0_deg: f64) -> Array2<u8> {
    let mut mask = Array2::<u8>::zeros((h, w));
    let (cr, cc) = ((h / 2) as f64, (w / 2) as f64);
    let len = ((h * h + w * w) as f64).sqrt();
    for i in 0..n_spokes {
        let theta = (theta0_deg + i as f64 * GOLDEN_ANGLE_DEG).rem_euclid(180.0).to_radians();
        let (dr, dc) = (theta.sin(), theta.cos());
        supercover_segment(
            &mut mask,
            cr - dr * len,
            cc - dc * len,
            cr + dr * len,
            cc + dc * len,
        );
    }
    mask[[h / 2, w / 2]] = 1;
    mask
}

/// Golden-angle radial spokes through the grid center. The spoke count is
/// searched so the achieved R lands within 5% of the target.
pub fn radial_mask(h: usize, w: usize, target_r: f64, seed: u64) -> Result<SamplingMask> {
    check_grid(h, w, target_r)?;
    if target_r < DEGENERATE_R {
        return all_ones_mask(h, w, Pattern::Radial, target_r, seed);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let theta0 = rng.gen_range(0.0..180.0);
    // ones(n) grows with n, so achieved R falls monotonically: scan with
    // early exit, keeping the best candidate.
    let mut best: Option<(f64, Array2<u8>)> = None;
    for n in 1..=(h + w) {
        let mask = build_radial(h, w, n, theta0);
        let achieved = achieved_acceleration(&mask)?;
        let better = match &best {
            Some((a, _)) => (achieved - target_r).abs() < (a - target_r).abs(),
            None => true,
        };
        if better {
            best = Some((achieved, mask));
        }
        if achieved < target_r {
            break;
        }
    }
    let (achieved, mask) = best.expect("spoke scan always yields a candidate");
    if (achieved - target_r).abs() / target_r > R_TOLERANCE {
        return Err(Error::config(format!(
            "radial spoke count cannot reach R={target_r} within 5% on {h}x{w} (best {achieved:.3})"
        )));
    }
    SamplingMask::new(mask, Pattern::Radial, target_r, seed)
}

fn build_spiral(h: usize, w: usize, pitch: f64, n_arms: usize, phase0: f64, step: f64) -> Array2<u8> {
    let mut mask = Array2::<u8>::zeros((h, w));
    let (cr, cc) = ((h / 2) as f64, (w / 2) as f64);
    let r_max = ((h as f64 / 2.0).powi(2) + (w as f64 / 2.0).powi(2)).sqrt();
    let theta_max = r_max / pitch;
    for arm in 0..n_arms {
        let phase = phase0 + std::f64::consts::TAU * arm as f64 / n_arms as f64;
        let mut theta = 0.0f64;
        let mut prev: Option<(f64, f64)> = None;
        loop {
            let r = pitch * theta;
            let p = (cr + r * (theta + phase).sin(), cc + r * (theta + phase).cos());
            if let Some(q) = prev {
                supercover_segment(&mut mask, q.0, q.1, p.0, p.1);
            }
            prev = Some(p);
            if theta >= theta_max {
                break;
            }
            // ds = pitch * sqrt(1 + theta^2) dtheta; keep arc increments <= step
            let dtheta = step / (pitch * (1.0 + theta * theta).sqrt()).max(step);
            theta = (theta + dtheta).min(theta_max);
        }
    }
    mask[[h / 2, w / 2]] = 1;
    mask
}

/// Archimedean spiral arms r = pitch * theta. The pitch (and if needed the arm
/// count) is searched so the achieved R lands within 5% of the target.
pub fn spiral_mask(h: usize, w: usize, target_r: f64, seed: u64) -> Result<SamplingMask> {
    spiral_mask_with_step(h, w, target_r, seed, DEFAULT_RASTER_STEP)
}

/// [`spiral_mask`] with an explicit rasterization step (pixels per arc sample).
pub fn spiral_mask_with_step(
    h: usize,
    w: usize,
    target_r: f64,
    seed: u64,
    step: f64,
) -> Result<SamplingMask> {
    check_grid(h, w, target_r)?;
    if !(step > 0.0 && step <= 1.0) {
        return Err(Error::config(format!("raster step must be in (0, 1], got {step}")));
    }
    if target_r < DEGENERATE_R {
        return all_ones_mask(h, w, Pattern::Spiral, target_r, seed);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let phase0 = rng.gen_range(0.0..std::f64::consts::TAU);
    let mut global_best: Option<(f64, Array2<u8>)> = None;
    for n_arms in 1..=8usize {
        // Larger pitch -> sparser mask -> larger achieved R.
        let (mut lo, mut hi) = (0.02f64, (h.max(w)) as f64 / 2.0);
        let mut best: Option<(f64, Array2<u8>)> = None;
        for _ in 0..48 {
            let mid = 0.5 * (lo + hi);
            let mask = build_spiral(h, w, mid, n_arms, phase0, step);
            let achieved = achieved_acceleration(&mask)?;
            let better = match &best {
                Some((a, _)) => (achieved - target_r).abs() < (a - target_r).abs(),
                None => true,
            };
            if better {
                best = Some((achieved, mask));
            }
            if achieved > target_r {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        if let Some((achieved, mask)) = best {
            let better = match &global_best {
                Some((a, _)) => (achieved - target_r).abs() < (a - target_r).abs(),
                None => true,
            };
            if better {
                global_best = Some((achieved, mask));
            }
            if let Some((a, _)) = &global_best {
                if (a - target_r).abs() / target_r <= R_TOLERANCE {
                    break;
                }
            }
        }
    }
    let (achieved, mask) = global_best.expect("pitch search always yields a candidate");
    if (achieved - target_r).abs() / target_r > R_TOLERANCE {
        return Err(Error::config(format!(
            "spiral search cannot reach R={target_r} within 5% on {h}x{w} (best {achieved:.3})"
        )));
    }
    SamplingMask::new(mask, Pattern::Spiral, target_r, seed)
}

/// Dispatch by pattern, using the default center fraction for Cartesian.
pub fn generate_mask(
    pattern: Pattern,
    h: usize,
    w: usize,
    target_r: f64,
    seed: u64,
) -> Result<SamplingMask> {
    match pattern {
        Pattern::Cartesian => {
            if target_r < DEGENERATE_R {
                // keep the degenerate rule uniform across patterns
                return all_ones_mask(h, w, Pattern::Cartesian, target_r, seed);
            }
            cartesian_mask(h, w, target_r, crate::DEFAULT_CENTER_FRACTION, seed)
        }
        Pattern::Radial => radial_mask(h, w, target_r, seed),
        Pattern::Spiral => spiral_mask(h, w, target_r, seed),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cartesian_r1_is_all_ones() {
        let m = cartesian_mask(64, 64, 1.0, 0.08, 0).unwrap();
        assert_eq!(m.count_ones(), 64 * 64);
        assert_eq!(m.achieved_r(), 1.0);
    }

    #[test]
    fn cartesian_row_budget_matches_spec_example() {
        // 320x230, R=5, center fraction 0.08: 64 rows selected, 26 center rows present
        let m = cartesian_mask(320, 230, 5.0, 0.08, 42).unwrap();
        let rows_on: Vec<usize> = (0..320)
            .filter(|&r| m.mask().row(r).iter().all(|&v| v == 1))
            .collect();
        assert_eq!(rows_on.len(), 64);
        let center_lo = (320 - 26) / 2;
        for r in center_lo..center_lo + 26 {
            assert!(rows_on.contains(&r), "center row {r} missing");
        }
        // rows are either full or empty
        for r in 0..320 {
            let s: usize = m.mask().row(r).iter().map(|&v| v as usize).sum();
            assert!(s == 0 || s == 230);
        }
    }

    #[test]
    fn cartesian_deterministic() {
        let a = cartesian_mask(64, 48, 4.0, 0.08, 9).unwrap();
        let b = cartesian_mask(64, 48, 4.0, 0.08, 9).unwrap();
        assert_eq!(a.mask(), b.mask());
    }

    #[test]
    fn cartesian_infeasible_center_band_errors() {
        // R=16 on 64 rows -> 4 rows budget; center fraction 0.5 -> 32 rows needed
        assert!(matches!(
            cartesian_mask(64, 64, 16.0, 0.5, 0),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn radial_degenerate_target_returns_all_ones() {
        let m = radial_mask(64, 64, 1.0, 3).unwrap();
        assert_eq!(m.achieved_r(), 1.0);
        let m = spiral_mask(64, 64, 1.1, 3).unwrap();
        assert_eq!(m.achieved_r(), 1.0);
    }

    #[test]
    fn radial_hits_tolerance_at_r4() {
        let m = radial_mask(64, 64, 4.0, 11).unwrap();
        assert!((3.8..=4.2).contains(&m.achieved_r()), "achieved {}", m.achieved_r());
    }

    #[test]
    fn radial_contains_center_pixel() {
        for seed in 0..8 {
            let m = radial_mask(64, 64, 5.0, seed).unwrap();
            assert_eq!(m.mask()[[32, 32]], 1);
        }
    }

    #[test]
    fn spiral_hits_tolerance_at_r5() {
        let m = spiral_mask(64, 64, 5.0, 21).unwrap();
        assert!((4.75..=5.25).contains(&m.achieved_r()), "achieved {}", m.achieved_r());
    }

    #[test]
    fn achieved_acceleration_counts() {
        let mut m = Array2::<u8>::zeros((10, 10));
        for i in 0..5 {
            for j in 0..5 {
                m[[i, j]] = 1;
            }
        }
        assert_eq!(achieved_acceleration(&m).unwrap(), 4.0);
        assert_eq!(achieved_acceleration(&Array2::ones((10, 10))).unwrap(), 1.0);
        assert!(achieved_acceleration(&Array2::zeros((10, 10))).is_err());
    }

    #[test]
    fn curved_masks_are_center_dense() {
        for (pattern, m) in [
            ("radial", radial_mask(128, 128, 4.0, 5).unwrap()),
            ("spiral", spiral_mask(128, 128, 4.0, 5).unwrap()),
        ] {
            let mask = m.mask();
            let c = mask
                .slice(ndarray::s![64 - 8..64 + 8, 64 - 8..64 + 8])
                .iter()
                .map(|&v| v as f64)
                .sum::<f64>()
                / 256.0;
            let g = mask.iter().map(|&v| v as f64).sum::<f64>() / (128.0 * 128.0);
            assert!(c > g, "{pattern}: center {c} not denser than global {g}");
        }
    }

    #[test]
    fn mask_save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let m = radial_mask(64, 64, 4.0, 7).unwrap();
        m.save(dir.path().join("m")).unwrap();
        let back = SamplingMask::load(dir.path().join("m")).unwrap();
        assert_eq!(back.mask(), m.mask());
        assert_eq!(back.pattern(), Pattern::Radial);
        assert_eq!(back.seed(), 7);
        assert_eq!(back.achieved_r(), m.achieved_r());
    }
}
