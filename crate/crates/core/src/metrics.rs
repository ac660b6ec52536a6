//! Absolute trajectory error and translational relative pose error.

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::geometry::Se3Pose;
use crate::trajectory::Trajectory;

/// Maximum timestamp difference for two poses to be matched.
pub const MAX_MATCH_GAP: f64 = 0.02;

/// Index pairs `(estimated, reference)` matched by nearest timestamp.
pub fn match_stamps(estimated: &Trajectory, reference: &Trajectory, max_gap: f64) -> Vec<(usize, usize)> {
    estimated
        .stamps
        .iter()
        .enumerate()
        .filter_map(|(n, &s)| reference.nearest(s, max_gap).map(|m| (n, m)))
        .collect()
}

/// Least-squares rigid transform `T` (no scale) minimising
/// `sum |T * source_k - target_k|^2`.
pub fn align_rigid(source: &[Vector3<f64>], target: &[Vector3<f64>]) -> Result<Se3Pose> {
    if source.len() != target.len() || source.len() < 2 {
        return Err(Error::InsufficientOverlap {
            matches: source.len().min(target.len()),
        });
    }
    let n = source.len() as f64;
    let mu_s = source.iter().sum::<Vector3<f64>>() / n;
    let mu_t = target.iter().sum::<Vector3<f64>>() / n;
    let mut cov = Matrix3::zeros();
    for (s, t) in source.iter().zip(target) {
        cov += (s - mu_s) * (t - mu_t).transpose();
    }
    let svd = cov.svd(true, true);
    let (u, v_t) = (svd.u.unwrap(), svd.v_t.unwrap());
    let v = v_t.transpose();
    let mut d = Matrix3::identity();
    if (v * u.transpose()).determinant() < 0.0 {
        d[(2, 2)] = -1.0;
    }
    let r = v * d * u.transpose();
    Ok(Se3Pose::new(r, mu_t - r * mu_s))
}

/// RMSE of translational residuals after rigid alignment of the estimate
/// onto the reference.
pub fn ate_rmse(estimated: &Trajectory, reference: &Trajectory) -> Result<f64> {
    let matches = match_stamps(estimated, reference, MAX_MATCH_GAP);
    if matches.len() < 2 {
        return Err(Error::InsufficientOverlap { matches: matches.len() });
    }
    let src: Vec<_> = matches.iter().map(|&(e, _)| estimated.poses[e].translation).collect();
    let dst: Vec<_> = matches.iter().map(|&(_, r)| reference.poses[r].translation).collect();
    let t = align_rigid(&src, &dst)?;
    let sq: f64 = src
        .iter()
        .zip(&dst)
        .map(|(s, d)| (t.transform_point(s) - d).norm_squared())
        .sum();
    Ok((sq / src.len() as f64).sqrt())
}

/// RMSE over `k` of `|trans((Q_k^-1 Q_{k+delta})^-1 (P_k^-1 P_{k+delta}))|`,
/// with `k` running over matched poses.
pub fn rpe_trans_rmse(estimated: &Trajectory, reference: &Trajectory, delta: usize) -> Result<f64> {
    if delta == 0 {
        return Err(Error::InvalidArgument("rpe delta must be >= 1".into()));
    }
    let matches = match_stamps(estimated, reference, MAX_MATCH_GAP);
    if matches.len() <= delta {
        return Err(Error::InsufficientOverlap { matches: matches.len() });
    }
    let sq: f64 = (0..matches.len() - delta)
        .map(|k| {
            let (e0, r0) = matches[k];
            let (e1, r1) = matches[k + delta];
            let p = estimated.poses[e0].inverse().compose(&estimated.poses[e1]);
            let q = reference.poses[r0].inverse().compose(&reference.poses[r1]);
            q.inverse().compose(&p).translation.norm_squared()
        })
        .sum();
    Ok((sq / (matches.len() - delta) as f64).sqrt())
}
