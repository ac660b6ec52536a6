//! Support-pixel selection on a new keyframe.
//!
//! Each non-overlapping cell contributes its strongest-gradient pixel as a
//! candidate. A candidate is scored by the magnitude of its gradient along a
//! random unit direction, must beat the adaptive threshold of its block, and
//! is then ranked by that score multiplied by the photometric host quality.
//! The quality only reorders candidates; it never admits one below threshold.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::consistency::depth_is_valid;
use crate::error::{Error, Result};
use crate::image::{Grid, Image};
use crate::quality::QualityMap;

/// Pixels this close to the image border are never candidates.
pub const BORDER: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectorConfig {
    /// Side of the blocks carrying one adaptive threshold each.
    pub block: usize,
    /// Side of the cells that each yield one candidate.
    pub cell: usize,
    /// Maximum number of support pixels per keyframe.
    pub budget: usize,
    pub gradient_offset: f64,
    pub threshold_min: f64,
}

impl Default for SelectorConfig {
    fn default() -> Self {
        Self {
            block: 32,
            cell: 4,
            budget: 800,
            gradient_offset: 7.0 / 255.0,
            threshold_min: 7.0 / 255.0,
        }
    }
}

impl SelectorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.block == 0 || self.cell == 0 || self.budget == 0 {
            return Err(Error::Config("selector block, cell and budget must be >= 1".into()));
        }
        if !(self.gradient_offset >= 0.0 && self.threshold_min >= 0.0) {
            return Err(Error::Config("selector thresholds must be >= 0".into()));
        }
        Ok(())
    }
}

/// Central-difference gradient; `None` on the one-pixel border.
#[inline]
pub fn central_gradient(image: &Image, x: usize, y: usize) -> Option<(f64, f64)> {
    let (w, h) = image.dims();
    if x == 0 || y == 0 || x + 1 >= w || y + 1 >= h {
        return None;
    }
    Some((
        0.5 * (image.get(x + 1, y) - image.get(x - 1, y)),
        0.5 * (image.get(x, y + 1) - image.get(x, y - 1)),
    ))
}

/// `|grad I(p) . dir|`; `None` where the gradient is undefined.
pub fn gradient_score(image: &Image, x: usize, y: usize, dir: (f64, f64)) -> Option<f64> {
    central_gradient(image, x, y).map(|(dx, dy)| (dx * dir.0 + dy * dir.1).abs())
}

/// Adaptive gradient thresholds, one per `block x block` tile.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockThresholds {
    pub block: usize,
    pub thresholds: Grid<f64>,
}

impl BlockThresholds {
    #[inline]
    pub fn at_pixel(&self, x: usize, y: usize) -> f64 {
        self.thresholds.get(x / self.block, y / self.block)
    }
}

/// Threshold of a block: median gradient magnitude inside it plus
/// `offset`, floored at `min`.
pub fn adaptive_threshold(image: &Image, block: usize, offset: f64, min: f64) -> Result<BlockThresholds> {
    if block == 0 {
        return Err(Error::InvalidArgument("block size must be >= 1".into()));
    }
    let (w, h) = image.dims();
    let (bw, bh) = (w.div_ceil(block), h.div_ceil(block));
    let mut thresholds = Grid::new(bw, bh, min);
    let mut mags = Vec::with_capacity(block * block);
    for by in 0..bh {
        for bx in 0..bw {
            mags.clear();
            for y in by * block..((by + 1) * block).min(h) {
                for x in bx * block..((bx + 1) * block).min(w) {
                    if let Some((dx, dy)) = central_gradient(image, x, y) {
                        mags.push(dx.hypot(dy));
                    }
                }
            }
            let med = crate::quality::median(&mags).unwrap_or(0.0);
            thresholds.set(bx, by, (med + offset).max(min));
        }
    }
    Ok(BlockThresholds { block, thresholds })
}

/// A selected support pixel on the host keyframe (level-0 coordinates).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SupportPixel {
    pub x: usize,
    pub y: usize,
    pub depth: f64,
    /// Directional gradient score.
    pub score: f64,
    /// Score multiplied by the photometric host quality.
    pub modulated: f64,
    pub gradient: (f64, f64),
}

/// Deterministic unit direction per cell, drawn in row-major cell order.
fn cell_directions(n_cells: usize, seed: u64) -> Vec<(f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n_cells)
        .map(|_| {
            let a = rng.random::<f64>() * std::f64::consts::TAU;
            (a.cos(), a.sin())
        })
        .collect()
}

/// Selects up to `config.budget` support pixels, ranked by quality-modulated
/// score with ties broken by row-major position. Pixels with invalid depth
/// are skipped.
pub fn select_support(
    image: &Image,
    depth: &Image,
    quality: &QualityMap,
    config: &SelectorConfig,
    seed: u64,
) -> Result<Vec<SupportPixel>> {
    config.validate()?;
    let dims = image.dims();
    depth.ensure_dims(dims)?;
    quality.values.ensure_dims(dims)?;
    let (w, h) = dims;
    let thresholds = adaptive_threshold(image, config.block, config.gradient_offset, config.threshold_min)?;
    let (cw, ch) = (w.div_ceil(config.cell), h.div_ceil(config.cell));
    let directions = cell_directions(cw * ch, seed);

    let mut candidates = Vec::new();
    for cy in 0..ch {
        for cx in 0..cw {
            let mut best: Option<(usize, usize, f64, f64, f64)> = None;
            for y in cy * config.cell..((cy + 1) * config.cell).min(h) {
                for x in cx * config.cell..((cx + 1) * config.cell).min(w) {
                    if x < BORDER || y < BORDER || x + BORDER >= w || y + BORDER >= h {
                        continue;
                    }
                    let Some((dx, dy)) = central_gradient(image, x, y) else {
                        continue;
                    };
                    let mag = dx.hypot(dy);
                    if best.is_none_or(|b| mag > b.2) {
                        best = Some((x, y, mag, dx, dy));
                    }
                }
            }
            let Some((x, y, _, dx, dy)) = best else { continue };
            let dir = directions[cy * cw + cx];
            let score = (dx * dir.0 + dy * dir.1).abs();
            let d = depth.get(x, y);
            if !(score > thresholds.at_pixel(x, y)) || !depth_is_valid(d) {
                continue;
            }
            candidates.push(SupportPixel {
                x,
                y,
                depth: d,
                score,
                modulated: score * quality.get(x, y),
                gradient: (dx, dy),
            });
        }
    }
    candidates.sort_by(|a, b| {
        b.modulated
            .total_cmp(&a.modulated)
            .then_with(|| (a.y * w + a.x).cmp(&(b.y * w + b.x)))
    });
    candidates.truncate(config.budget);
    Ok(candidates)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quality::{Branch, QUALITY_FLOOR};

    fn texture(w: usize, h: usize) -> Image {
        Grid::from_fn(w, h, |x, y| {
            let (x, y) = (x as f64, y as f64);
            0.5 + 0.2 * (0.9 * x + 0.3 * y).sin() + 0.2 * (0.4 * x - 1.1 * y).cos()
        })
    }

    #[test]
    fn constant_image_scores_zero() {
        let img = Grid::new(8, 8, 0.3);
        assert_eq!(gradient_score(&img, 4, 4, (0.6, 0.8)), Some(0.0));
        assert_eq!(gradient_score(&img, 0, 4, (1.0, 0.0)), None);
    }

    #[test]
    fn ramp_directional_derivative() {
        let g = 0.02;
        let img = Grid::from_fn(10, 10, |x, _| g * x as f64);
        assert!((gradient_score(&img, 5, 5, (1.0, 0.0)).unwrap() - g).abs() < 1e-15);
        assert_eq!(gradient_score(&img, 5, 5, (0.0, 1.0)).unwrap(), 0.0);
    }

    #[test]
    fn thresholds_for_simple_images() {
        let off = 7.0 / 255.0;
        let t = adaptive_threshold(&Grid::new(64, 48, 0.5), 32, off, off).unwrap();
        assert_eq!(t.thresholds.dims(), (2, 2));
        assert!(t.thresholds.as_slice().iter().all(|&v| v == off));
        let g = 0.1;
        let ramp = Grid::from_fn(64, 64, |x, _| g * x as f64);
        let t = adaptive_threshold(&ramp, 32, off, off).unwrap();
        assert!(t.thresholds.as_slice().iter().all(|&v| (v - (g + off)).abs() < 1e-12));
    }

    #[test]
    fn unit_quality_is_plain_gradient_ranking() {
        let img = texture(64, 48);
        let depth = Grid::new(64, 48, 2.0);
        let cfg = SelectorConfig {
            budget: 40,
            ..Default::default()
        };
        let q = QualityMap::uniform(64, 48, 1.0, Branch::Photo);
        let sel = select_support(&img, &depth, &q, &cfg, 9).unwrap();
        assert!(!sel.is_empty());
        for s in &sel {
            assert_eq!(s.score, s.modulated);
        }
        for pair in sel.windows(2) {
            assert!(pair[0].score >= pair[1].score);
        }
    }

    #[test]
    fn budget_saturation_returns_every_candidate() {
        let img = texture(64, 48);
        let depth = Grid::new(64, 48, 2.0);
        let q = QualityMap::uniform(64, 48, 1.0, Branch::Photo);
        let cfg = SelectorConfig {
            budget: 100_000,
            ..Default::default()
        };
        let all = select_support(&img, &depth, &q, &cfg, 1).unwrap();
        let t = adaptive_threshold(&img, cfg.block, cfg.gradient_offset, cfg.threshold_min).unwrap();
        assert!(all.len() < (64 / 4) * (48 / 4));
        for s in &all {
            assert!(s.score > t.at_pixel(s.x, s.y));
        }
    }

    #[test]
    fn invalid_depth_is_never_selected() {
        let img = texture(64, 48);
        let depth = Grid::from_fn(64, 48, |x, _| if x < 32 { 0.0 } else { 2.0 });
        let q = QualityMap::uniform(64, 48, 1.0, Branch::Photo);
        let sel = select_support(&img, &depth, &q, &SelectorConfig::default(), 3).unwrap();
        assert!(!sel.is_empty());
        assert!(sel.iter().all(|s| s.x >= 32 && s.depth == 2.0));
    }

    #[test]
    fn flat_image_yields_no_candidates() {
        let img = Grid::new(32, 32, 0.5);
        let q = QualityMap::uniform(32, 32, 1.0, Branch::Photo);
        let sel = select_support(&img, &Grid::new(32, 32, 1.0), &q, &SelectorConfig::default(), 0).unwrap();
        assert!(sel.is_empty());
    }

    #[test]
    fn low_quality_half_loses_the_ranking() {
        let img = texture(96, 64);
        let depth = Grid::new(96, 64, 2.0);
        let q = QualityMap {
            values: Grid::from_fn(96, 64, |x, _| if x < 48 { QUALITY_FLOOR } else { 1.0 }),
            branch: Branch::Photo,
        };
        let cfg = SelectorConfig {
            budget: 20,
            ..Default::default()
        };
        let sel = select_support(&img, &depth, &q, &cfg, 5).unwrap();
        assert_eq!(sel.len(), 20);
        assert!(sel.iter().all(|s| s.x >= 48));
    }

    #[test]
    fn quality_map_shape_is_checked() {
        let img = texture(32, 32);
        let q = QualityMap::uniform(16, 16, 1.0, Branch::Photo);
        assert!(select_support(&img, &Grid::new(32, 32, 1.0), &q, &SelectorConfig::default(), 0).is_err());
    }
}
