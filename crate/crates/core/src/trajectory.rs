//! Timestamped pose sequences in the TUM text format
//! `timestamp tx ty tz qx qy qz qw`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::{Quaternion, Rotation3, UnitQuaternion, Vector3};

use crate::error::{Error, Result};
use crate::geometry::Se3Pose;

pub const SIGNIFICANT_DIGITS: usize = 9;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    pub stamps: Vec<f64>,
    pub poses: Vec<Se3Pose>,
}

impl Trajectory {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a trajectory, rejecting non-increasing timestamps and
    /// non-finite poses.
    pub fn from_parts(stamps: Vec<f64>, poses: Vec<Se3Pose>) -> Result<Self> {
        if stamps.len() != poses.len() {
            return Err(Error::InvalidArgument(format!(
                "{} timestamps for {} poses",
                stamps.len(),
                poses.len()
            )));
        }
        let mut t = Self::new();
        for (s, p) in stamps.into_iter().zip(poses) {
            t.push(s, p)?;
        }
        Ok(t)
    }

    pub fn push(&mut self, stamp: f64, pose: Se3Pose) -> Result<()> {
        if !stamp.is_finite() || self.stamps.last().is_some_and(|&last| stamp <= last) {
            return Err(Error::InvalidArgument(format!(
                "timestamp {stamp} is not strictly increasing"
            )));
        }
        if !pose.is_finite() {
            return Err(Error::InvalidArgument(format!("non-finite pose at {stamp}")));
        }
        self.stamps.push(stamp);
        self.poses.push(pose);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.stamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stamps.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, &Se3Pose)> {
        self.stamps.iter().copied().zip(&self.poses)
    }

    /// Index of the pose closest in time to `stamp`, if within `max_gap`.
    pub fn nearest(&self, stamp: f64, max_gap: f64) -> Option<usize> {
        let k = self.stamps.partition_point(|&s| s < stamp);
        [k.checked_sub(1), (k < self.len()).then_some(k)]
            .into_iter()
            .flatten()
            .min_by(|&a, &b| {
                (self.stamps[a] - stamp)
                    .abs()
                    .total_cmp(&(self.stamps[b] - stamp).abs())
            })
            .filter(|&n| (self.stamps[n] - stamp).abs() <= max_gap)
    }

    /// Left-multiplies every pose by `t`.
    pub fn transformed(&self, t: &Se3Pose) -> Self {
        Self {
            stamps: self.stamps.clone(),
            poses: self.poses.iter().map(|p| t.compose(p)).collect(),
        }
    }
}

/// Unit quaternion `[x, y, z, w]` with `w >= 0`.
pub fn rotation_to_quaternion(pose: &Se3Pose) -> [f64; 4] {
    let q = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(pose.rotation));
    let s = if q.w < 0.0 { -1.0 } else { 1.0 };
    [s * q.i, s * q.j, s * q.k, s * q.w]
}

pub fn pose_from_tum(t: [f64; 3], q: [f64; 4]) -> Result<Se3Pose> {
    let raw = Quaternion::new(q[3], q[0], q[1], q[2]);
    let n = raw.norm();
    if !(n.is_finite() && n > 1e-12) {
        return Err(Error::InvalidArgument(format!("degenerate quaternion {q:?}")));
    }
    let rot = UnitQuaternion::from_quaternion(raw).to_rotation_matrix().into_inner();
    Ok(Se3Pose::new(rot, Vector3::from(t)))
}

/// `%.9g`-style fixed-point rendering without trailing zeros.
pub fn format_significant(v: f64, digits: usize) -> String {
    if v == 0.0 || !v.is_finite() {
        return if v.is_finite() { "0".into() } else { v.to_string() };
    }
    let magnitude = v.abs().log10().floor() as i64;
    let decimals = (digits as i64 - 1 - magnitude).max(0) as usize;
    let mut s = format!("{v:.decimals$}");
    if s.contains('.') {
        s.truncate(s.trim_end_matches('0').trim_end_matches('.').len());
    }
    if s == "-0" {
        s = "0".into();
    }
    s
}

pub fn format_line(stamp: f64, pose: &Se3Pose) -> String {
    let q = rotation_to_quaternion(pose);
    let t = pose.translation;
    let mut line = format!("{stamp:.6}");
    for v in [t.x, t.y, t.z, q[0], q[1], q[2], q[3]] {
        let _ = write!(line, " {}", format_significant(v, SIGNIFICANT_DIGITS));
    }
    line
}

pub fn write_trajectory(path: &Path, traj: &Trajectory) -> Result<()> {
    let mut out = String::new();
    for (s, p) in traj.iter() {
        out.push_str(&format_line(s, p));
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn parse_trajectory(text: &str, path: &Path) -> Result<Trajectory> {
    let mut traj = Trajectory::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields = line
            .split_whitespace()
            .map(str::parse::<f64>)
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::parse(path, n + 1, e.to_string()))?;
        if fields.len() != 8 {
            return Err(Error::parse(
                path,
                n + 1,
                format!("expected 8 fields, found {}", fields.len()),
            ));
        }
        let pose = pose_from_tum(
            [fields[1], fields[2], fields[3]],
            [fields[4], fields[5], fields[6], fields[7]],
        )
        .map_err(|e| Error::parse(path, n + 1, e.to_string()))?;
        traj.push(fields[0], pose)
            .map_err(|e| Error::parse(path, n + 1, e.to_string()))?;
    }
    Ok(traj)
}

pub fn read_trajectory(path: &Path) -> Result<Trajectory> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_trajectory(&text, path)
}
