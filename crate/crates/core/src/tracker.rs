//! Coarse-to-fine direct alignment of a frame against a host keyframe.
//!
//! The residual of support pixel `i` is `I_host(p_i) - I_target(pi(T P_i))`
//! and its Jacobian w.r.t. a left perturbation `exp(dxi) T` splits into a
//! translational block proportional to the warped inverse depth and a
//! rotational block that does not depend on depth. At the finest level the
//! photometric weight scales the residual and both blocks, while the
//! geometric weight scales only the translational block:
//!
//! ```text
//! J~ = [w_p w_g J_tr | w_p J_rot],   r~ = w_p r
//! ```
//!
//! Coarser levels use unit weights. A Huber kernel on `r~` is applied on top.

use nalgebra::{Matrix6, SymmetricEigen, Vector2, Vector3, Vector6};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{backproject, se3_exp, Intrinsics, Se3Pose, Twist, DEFAULT_Z_MIN};
use crate::image::{try_bilinear, Image, ImagePyramid};
use crate::quality::WeightMaps;
use crate::selector::SupportPixel;

/// Normal equations with a larger condition number are rejected.
pub const MAX_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackingConfig {
    pub levels: usize,
    pub max_iterations: usize,
    /// Stop once `|dxi|` falls below this.
    pub convergence: f64,
    /// Huber threshold on weighted residuals (intensity units).
    pub huber: f64,
    /// Minimum fraction of support pixels that must warp validly.
    pub min_valid_fraction: f64,
}

impl Default for TrackingConfig {
    fn default() -> Self {
        Self {
            levels: 4,
            max_iterations: 20,
            convergence: 1e-6,
            huber: 9.0 / 255.0,
            min_valid_fraction: 0.2,
        }
    }
}

impl TrackingConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = self.convergence > 0.0 && self.huber > 0.0 && self.min_valid_fraction > 0.0;
        if self.levels == 0 || self.max_iterations == 0 || !positive {
            return Err(Error::Config(
                "tracker needs levels >= 1, max_iterations >= 1 and positive thresholds".into(),
            ));
        }
        Ok(())
    }
}

/// Image pyramid plus matching intrinsics per level.
#[derive(Debug, Clone, PartialEq)]
pub struct FramePyramid {
    pub images: ImagePyramid,
    pub intrinsics: Vec<Intrinsics>,
}

impl FramePyramid {
    pub fn new(image: &Image, k: &Intrinsics, levels: usize) -> Result<Self> {
        image.ensure_dims(k.dims())?;
        let images = ImagePyramid::build(image, levels)?;
        let intrinsics = (0..levels).map(|l| k.at_level(l)).collect();
        Ok(Self { images, intrinsics })
    }

    pub fn n_levels(&self) -> usize {
        self.images.n_levels()
    }
}

/// A support pixel prepared for one pyramid level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HostPoint {
    /// Floor-halved pixel at this level.
    pub pixel: (usize, usize),
    pub intensity: f64,
    /// Back-projected point in the host camera frame.
    pub point: Vector3<f64>,
    /// Level-0 pixel, where the weights are read.
    pub source: (usize, usize),
}

pub fn host_points(support: &[SupportPixel], host: &FramePyramid, level: usize) -> Result<Vec<HostPoint>> {
    let img = host.images.level(level);
    let k = &host.intrinsics[level];
    support
        .iter()
        .map(|sp| {
            let q = (
                (sp.x >> level).min(img.width() - 1),
                (sp.y >> level).min(img.height() - 1),
            );
            let point = backproject(k, &Vector2::new(q.0 as f64, q.1 as f64), sp.depth)?;
            Ok(HostPoint {
                pixel: q,
                intensity: img.get(q.0, q.1),
                point,
                source: (sp.x, sp.y),
            })
        })
        .collect()
}

/// Everything the keyframe contributes to tracking, precomputed per level.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackingHost {
    pub pyramid: FramePyramid,
    pub support: Vec<SupportPixel>,
    pub points: Vec<Vec<HostPoint>>,
}

impl TrackingHost {
    pub fn new(pyramid: FramePyramid, support: Vec<SupportPixel>) -> Result<Self> {
        let points = (0..pyramid.n_levels())
            .map(|l| host_points(&support, &pyramid, l))
            .collect::<Result<_>>()?;
        Ok(Self {
            pyramid,
            support,
            points,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelLinearization {
    pub residual: f64,
    /// `[J_tr | J_rot]`.
    pub jacobian: Vector6<f64>,
    /// Target-image gradient at the warped pixel.
    pub gradient: (f64, f64),
    /// Inverse depth of the warped point.
    pub inverse_depth: f64,
    pub warped: Vector2<f64>,
    pub valid: bool,
}

impl PixelLinearization {
    fn invalid() -> Self {
        Self {
            residual: 0.0,
            jacobian: Vector6::zeros(),
            gradient: (0.0, 0.0),
            inverse_depth: 0.0,
            warped: Vector2::zeros(),
            valid: false,
        }
    }
}

/// Residual and Jacobian of one host point warped into `target` by `pose`.
pub fn linearize_point(hp: &HostPoint, target: &Image, k: &Intrinsics, pose: &Se3Pose) -> PixelLinearization {
    let pt = pose.transform_point(&hp.point);
    if !(pt.z > DEFAULT_Z_MIN) {
        return PixelLinearization::invalid();
    }
    let rho = 1.0 / pt.z;
    let (u, v) = (pt.x * rho, pt.y * rho);
    let warped = Vector2::new(k.fx * u + k.cx, k.fy * v + k.cy);
    let Some(s) = try_bilinear(target, warped.x, warped.y) else {
        return PixelLinearization::invalid();
    };
    let gx = s.dx * k.fx;
    let gy = s.dy * k.fy;
    let jacobian = Vector6::new(
        -rho * gx,
        -rho * gy,
        rho * (gx * u + gy * v),
        gx * u * v + gy * (1.0 + v * v),
        -(gx * (1.0 + u * u) + gy * u * v),
        gx * v - gy * u,
    );
    PixelLinearization {
        residual: hp.intensity - s.value,
        jacobian,
        gradient: (s.dx, s.dy),
        inverse_depth: rho,
        warped,
        valid: true,
    }
}

/// Residual of one host point only; `None` when the warp is invalid.
pub fn residual_at(hp: &HostPoint, target: &Image, k: &Intrinsics, pose: &Se3Pose) -> Option<f64> {
    let l = linearize_point(hp, target, k, pose);
    l.valid.then_some(l.residual)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelWeight {
    pub photo: f64,
    pub geo: f64,
}

impl PixelWeight {
    pub const UNIT: PixelWeight = PixelWeight { photo: 1.0, geo: 1.0 };
}

/// Looks up the weights of each host point at its level-0 pixel.
pub fn point_weights(points: &[HostPoint], weights: &WeightMaps) -> Vec<PixelWeight> {
    points
        .iter()
        .map(|hp| {
            let (photo, geo) = weights.at(hp.source.0, hp.source.1);
            PixelWeight { photo, geo }
        })
        .collect()
}

#[inline]
pub fn huber_weight(r: f64, delta: f64) -> f64 {
    let a = r.abs();
    if a <= delta {
        1.0
    } else {
        delta / a
    }
}

#[inline]
pub fn huber_energy(r: f64, delta: f64) -> f64 {
    let a = r.abs();
    if a <= delta {
        0.5 * r * r
    } else {
        delta * (a - 0.5 * delta)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalEquations {
    pub h: Matrix6<f64>,
    pub b: Vector6<f64>,
    /// Sum of Huber energies of the weighted residuals.
    pub energy: f64,
    pub valid: usize,
    pub total: usize,
}

impl NormalEquations {
    pub fn mean_energy(&self) -> f64 {
        if self.valid == 0 {
            f64::INFINITY
        } else {
            self.energy / self.valid as f64
        }
    }

    pub fn valid_fraction(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.valid as f64 / self.total as f64
        }
    }

    /// `dxi = -H^-1 b`, refusing ill-conditioned systems.
    pub fn solve(&self) -> Result<Vector6<f64>> {
        let eig = SymmetricEigen::new(self.h).eigenvalues;
        let (lo, hi) = eig
            .iter()
            .fold((f64::INFINITY, 0.0f64), |(lo, hi), &e| (lo.min(e), hi.max(e)));
        let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
        if !(condition <= MAX_CONDITION) {
            return Err(Error::DegenerateGeometry(condition));
        }
        let chol = self.h.cholesky().ok_or(Error::DegenerateGeometry(condition))?;
        Ok(-chol.solve(&self.b))
    }
}

/// Builds `H = sum h_i J~^T J~` and `b = sum h_i J~^T r~` in input order,
/// with `h_i` the Huber weight of `r~_i`. `weights` must be parallel to
/// `lins`; pass `None` for unit weights.
pub fn accumulate_weighted(
    lins: &[PixelLinearization],
    weights: Option<&[PixelWeight]>,
    huber: f64,
    min_valid_fraction: f64,
) -> Result<NormalEquations> {
    if let Some(w) = weights {
        if w.len() != lins.len() {
            return Err(Error::InvalidArgument(format!(
                "{} weights for {} linearizations",
                w.len(),
                lins.len()
            )));
        }
    }
    let mut h = Matrix6::zeros();
    let mut b = Vector6::zeros();
    let mut energy = 0.0;
    let mut valid = 0;
    for (idx, lin) in lins.iter().enumerate() {
        if !lin.valid {
            continue;
        }
        let w = weights.map_or(PixelWeight::UNIT, |w| w[idx]);
        let tr_scale = w.photo * w.geo;
        let j = &lin.jacobian;
        let jw = Vector6::new(
            tr_scale * j[0],
            tr_scale * j[1],
            tr_scale * j[2],
            w.photo * j[3],
            w.photo * j[4],
            w.photo * j[5],
        );
        let r = w.photo * lin.residual;
        let hw = huber_weight(r, huber);
        for row in 0..6 {
            let hj = hw * jw[row];
            for col in row..6 {
                h[(row, col)] += hj * jw[col];
            }
            b[row] += hj * r;
        }
        energy += huber_energy(r, huber);
        valid += 1;
    }
    for row in 0..6 {
        for col in 0..row {
            h[(row, col)] = h[(col, row)];
        }
    }
    let total = lins.len();
    if total == 0 || (valid as f64) < min_valid_fraction * total as f64 {
        return Err(Error::TrackingDegenerate { valid, total });
    }
    Ok(NormalEquations {
        h,
        b,
        energy,
        valid,
        total,
    })
}

/// Outcome of Gauss-Newton on one pyramid level.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelReport {
    pub level: usize,
    pub pose: Se3Pose,
    pub iterations: usize,
    /// Mean energy over valid points after each accepted state, starting
    /// with the initial pose.
    pub energies: Vec<f64>,
    pub valid_fraction: f64,
    pub weighted: bool,
    /// Normal equations at the final pose.
    pub normal_equations: NormalEquations,
}

struct LevelState {
    neq: NormalEquations,
    /// Huber energy of each point, `None` where the warp is invalid.
    energies: Vec<Option<f64>>,
}

impl LevelState {
    /// Energy difference `self - other` over the points valid in both.
    fn common_energy_change(&self, other: &LevelState) -> f64 {
        self.energies
            .iter()
            .zip(&other.energies)
            .filter_map(|(a, b)| Some(a.as_ref()? - b.as_ref()?))
            .sum()
    }
}

fn evaluate(
    points: &[HostPoint],
    target: &Image,
    k: &Intrinsics,
    pose: &Se3Pose,
    weights: Option<&[PixelWeight]>,
    config: &TrackingConfig,
) -> Result<LevelState> {
    let lins: Vec<_> = points.iter().map(|hp| linearize_point(hp, target, k, pose)).collect();
    let neq = accumulate_weighted(&lins, weights, config.huber, config.min_valid_fraction)?;
    let energies = lins
        .iter()
        .enumerate()
        .map(|(idx, lin)| {
            let photo = weights.map_or(1.0, |w| w[idx].photo);
            lin.valid.then(|| huber_energy(photo * lin.residual, config.huber))
        })
        .collect();
    Ok(LevelState { neq, energies })
}

/// Gauss-Newton on one level. A step is accepted when it does not raise the
/// energy summed over the points valid both before and after it; otherwise
/// it is retried once at half length, and if that also fails the level stops
/// at the last accepted pose.
pub fn solve_level(
    points: &[HostPoint],
    target: &Image,
    k: &Intrinsics,
    init: &Se3Pose,
    weights: Option<&[PixelWeight]>,
    level: usize,
    config: &TrackingConfig,
) -> Result<LevelReport> {
    let mut pose = *init;
    let mut state = evaluate(points, target, k, &pose, weights, config)?;
    let mut energies = vec![state.neq.mean_energy()];
    let mut iterations = 0;
    while iterations < config.max_iterations {
        iterations += 1;
        let step = state.neq.solve()?;
        if step.norm() < config.convergence {
            break;
        }
        let mut accepted = false;
        for scale in [1.0, 0.5] {
            let candidate = se3_exp(&Twist::from_vector(&(step * scale)))?.compose(&pose);
            if let Ok(next) = evaluate(points, target, k, &candidate, weights, config) {
                if next.common_energy_change(&state) <= 0.0 {
                    pose = candidate;
                    state = next;
                    energies.push(state.neq.mean_energy());
                    accepted = true;
                    break;
                }
            }
        }
        if !accepted {
            break;
        }
    }
    Ok(LevelReport {
        level,
        pose,
        iterations,
        energies,
        valid_fraction: state.neq.valid_fraction(),
        weighted: weights.is_some(),
        normal_equations: state.neq,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackReport {
    /// Host-to-target transform.
    pub pose: Se3Pose,
    /// Coarsest level first.
    pub levels: Vec<LevelReport>,
}

impl TrackReport {
    pub fn finest(&self) -> &LevelReport {
        self.levels.last().expect("at least one level")
    }
}

/// Tracks `target` against `host` from the coarsest level down. `weights`
/// (full-resolution maps) apply only at level 0.
pub fn track_frame(
    host: &TrackingHost,
    target: &FramePyramid,
    init: &Se3Pose,
    weights: Option<&WeightMaps>,
    config: &TrackingConfig,
) -> Result<TrackReport> {
    config.validate()?;
    let n_levels = config.levels.min(host.pyramid.n_levels()).min(target.n_levels());
    let mut pose = init.orthonormalized();
    let mut levels = Vec::with_capacity(n_levels);
    for level in (0..n_levels).rev() {
        let points = &host.points[level];
        let level_weights = match (level, weights) {
            (0, Some(w)) => Some(point_weights(points, w)),
            _ => None,
        };
        let report = solve_level(
            points,
            target.images.level(level),
            &target.intrinsics[level],
            &pose,
            level_weights.as_deref(),
            level,
            config,
        )?;
        pose = report.pose;
        levels.push(report);
    }
    Ok(TrackReport { pose, levels })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::Grid;

    fn texture(w: usize, h: usize) -> Image {
        Grid::from_fn(w, h, |x, y| {
            let (x, y) = (x as f64, y as f64);
            0.5 + 0.2 * (0.31 * x + 0.17 * y).sin() + 0.15 * (0.23 * x - 0.29 * y).cos()
        })
    }

    fn lin(j: [f64; 6], r: f64) -> PixelLinearization {
        PixelLinearization {
            residual: r,
            jacobian: Vector6::from_row_slice(&j),
            gradient: (0.0, 0.0),
            inverse_depth: 1.0,
            warped: Vector2::zeros(),
            valid: true,
        }
    }

    #[test]
    fn identity_warp_has_zero_residual() {
        let img = texture(40, 30);
        let k = Intrinsics::new(40.0, 40.0, 19.5, 14.5, 40, 30).unwrap();
        let pyr = FramePyramid::new(&img, &k, 1).unwrap();
        let sp = SupportPixel {
            x: 11,
            y: 7,
            depth: 2.0,
            score: 1.0,
            modulated: 1.0,
            gradient: (0.0, 0.0),
        };
        let hp = host_points(&[sp], &pyr, 0).unwrap()[0];
        let l = linearize_point(&hp, &img, &k, &Se3Pose::identity());
        assert!(l.valid);
        assert_eq!(l.residual, 0.0);
        assert!((l.warped - Vector2::new(11.0, 7.0)).amax() < 1e-12);
    }

    #[test]
    fn behind_camera_is_invalid() {
        let img = texture(40, 30);
        let k = Intrinsics::new(40.0, 40.0, 19.5, 14.5, 40, 30).unwrap();
        let hp = HostPoint {
            pixel: (10, 10),
            intensity: 0.5,
            point: Vector3::new(0.0, 0.0, 1.0),
            source: (10, 10),
        };
        let back = Se3Pose::from_translation(Vector3::new(0.0, 0.0, -2.0));
        assert!(!linearize_point(&hp, &img, &k, &back).valid);
        let aside = Se3Pose::from_translation(Vector3::new(5.0, 0.0, 0.0));
        assert!(!linearize_point(&hp, &img, &k, &aside).valid);
    }

    #[test]
    fn unit_weights_equal_unweighted() {
        let lins = vec![
            lin([1.0, -2.0, 0.5, 0.3, 0.1, -0.7], 0.02),
            lin([0.2, 0.4, -1.0, 2.0, -0.1, 0.3], -0.5),
        ];
        let a = accumulate_weighted(&lins, None, 9.0 / 255.0, 0.2).unwrap();
        let units = vec![PixelWeight::UNIT; 2];
        let b = accumulate_weighted(&lins, Some(&units), 9.0 / 255.0, 0.2).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn single_pixel_block_scaling() {
        let l = [lin([1.3, -0.2, 0.5, 0.7, 0.1, -0.9], 0.01)];
        let base = accumulate_weighted(&l, None, 1.0, 0.2).unwrap();
        let half = [PixelWeight { photo: 1.0, geo: 0.5 }];
        let w = accumulate_weighted(&l, Some(&half), 1.0, 0.2).unwrap();
        for r in 0..6 {
            for c in 0..6 {
                let factor = match (r < 3, c < 3) {
                    (true, true) => 0.25,
                    (false, false) => 1.0,
                    _ => 0.5,
                };
                assert!((w.h[(r, c)] - factor * base.h[(r, c)]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn symmetric_and_psd() {
        let lins: Vec<_> = (0..50)
            .map(|i| {
                let f = i as f64;
                lin(
                    [f.sin(), f.cos(), (2.0 * f).sin(), (0.5 * f).cos(), (1.5 * f).sin(), 0.3],
                    0.01 * f.sin(),
                )
            })
            .collect();
        let neq = accumulate_weighted(&lins, None, 9.0 / 255.0, 0.2).unwrap();
        assert_eq!(neq.h, neq.h.transpose());
        let eig = SymmetricEigen::new(neq.h).eigenvalues;
        assert!(eig.iter().all(|&e| e > -1e-12));
    }

    #[test]
    fn too_few_valid_is_degenerate() {
        let mut lins = vec![PixelLinearization::invalid(); 9];
        lins.push(lin([1.0; 6], 0.0));
        assert!(matches!(
            accumulate_weighted(&lins, None, 0.1, 0.2),
            Err(Error::TrackingDegenerate { valid: 1, total: 10 })
        ));
        assert!(accumulate_weighted(&[], None, 0.1, 0.2).is_err());
    }

    #[test]
    fn singular_system_is_rejected() {
        let neq = accumulate_weighted(&[lin([1.0, 0.0, 0.0, 0.0, 0.0, 0.0], 0.1)], None, 1.0, 0.2).unwrap();
        assert!(matches!(neq.solve(), Err(Error::DegenerateGeometry(_))));
    }

    #[test]
    fn jacobian_matches_central_differences() {
        let img = texture(64, 48);
        let k = Intrinsics::new(60.0, 58.0, 31.5, 23.5, 64, 48).unwrap();
        let hp = HostPoint {
            pixel: (20, 17),
            intensity: 0.4,
            point: backproject(&k, &Vector2::new(20.0, 17.0), 2.3).unwrap(),
            source: (20, 17),
        };
        let pose = se3_exp(&Twist::new(
            Vector3::new(0.03, -0.02, 0.05),
            Vector3::new(0.01, 0.02, -0.015),
        ))
        .unwrap();
        let l = linearize_point(&hp, &img, &k, &pose);
        assert!(l.valid);
        let h = 1e-6;
        for c in 0..6 {
            let mut d = Vector6::zeros();
            d[c] = h;
            let plus = se3_exp(&Twist::from_vector(&d)).unwrap().compose(&pose);
            let minus = se3_exp(&Twist::from_vector(&(-d))).unwrap().compose(&pose);
            let fd =
                (residual_at(&hp, &img, &k, &plus).unwrap() - residual_at(&hp, &img, &k, &minus).unwrap()) / (2.0 * h);
            let rel = (fd - l.jacobian[c]).abs() / fd.abs().max(1e-6);
            assert!(rel < 1e-4, "column {c}: analytic {} vs fd {fd}", l.jacobian[c]);
        }
    }

    #[test]
    fn huber_pieces_meet() {
        let d = 0.1;
        assert_eq!(huber_weight(0.05, d), 1.0);
        assert!((huber_weight(0.4, d) - 0.25).abs() < 1e-15);
        assert!((huber_energy(d, d) - 0.5 * d * d).abs() < 1e-18);
        assert!((huber_energy(-0.3, d) - d * (0.3 - 0.05)).abs() < 1e-15);
    }
}
