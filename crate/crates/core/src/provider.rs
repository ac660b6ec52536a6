//! Sources of per-pixel uncertainty for adjacent frame pairs.

use std::path::PathBuf;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::cmap::{cmap_path, read_cmap};
use crate::consistency::{geometric_error_map, photometric_error_map, ErrorMap, FlowField};
use crate::error::{Error, Result};
use crate::frame::RgbdFrame;
use crate::geometry::Se3Pose;
use crate::image::Image;
use crate::quality::UncertaintyPair;
use crate::synth::GroundTruthBundle;

/// Produces log-covariance maps for the pair `(j, i)`.
pub trait ConsistencyProvider {
    fn get_uncertainty(&mut self, frame_j: &RgbdFrame, frame_i: &RgbdFrame) -> Result<UncertaintyPair>;
}

/// `l = 0` everywhere, hence unit quality.
#[derive(Debug, Clone, Copy, Default)]
pub struct ConstantProvider;

impl ConsistencyProvider for ConstantProvider {
    fn get_uncertainty(&mut self, frame_j: &RgbdFrame, frame_i: &RgbdFrame) -> Result<UncertaintyPair> {
        let (w, h) = frame_i.dims();
        Ok(UncertaintyPair::constant(w, h, frame_j.index, frame_i.index))
    }
}

/// Reads `<dir>/<j>_<i>.cmap`.
#[derive(Debug, Clone)]
pub struct FileProvider {
    pub dir: PathBuf,
}

impl FileProvider {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }
}

impl ConsistencyProvider for FileProvider {
    fn get_uncertainty(&mut self, frame_j: &RgbdFrame, frame_i: &RgbdFrame) -> Result<UncertaintyPair> {
        let (j, i) = (frame_j.index, frame_i.index);
        let pair = read_cmap(&cmap_path(&self.dir, j, i), j, i)?;
        if pair.dims() != frame_i.dims() {
            return Err(Error::ProviderIo {
                j,
                i,
                message: format!("map is {:?}, frames are {:?}", pair.dims(), frame_i.dims()),
            });
        }
        Ok(pair)
    }
}

/// Ground-truth relative motion and camera-induced flow for frame pairs.
pub trait GroundTruthSource {
    /// `T_{i<-j}`.
    fn relative_pose(&self, j: usize, i: usize) -> Result<Se3Pose>;
    /// Flow of pair `(j, i)` that a static world would produce.
    fn ego_flow(&self, j: usize, i: usize) -> Result<FlowField>;
}

impl GroundTruthSource for GroundTruthBundle {
    fn relative_pose(&self, j: usize, i: usize) -> Result<Se3Pose> {
        if j >= self.poses.len() || i >= self.poses.len() {
            return Err(Error::MissingGroundTruth(format!("pose for pair ({j}, {i})")));
        }
        Ok(GroundTruthBundle::relative_pose(self, j, i))
    }

    fn ego_flow(&self, j: usize, i: usize) -> Result<FlowField> {
        if i != j + 1 || j >= self.ego_flow.len() {
            return Err(Error::MissingGroundTruth(format!("flow for pair ({j}, {i})")));
        }
        Ok(self.ego_flow[j].clone())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleConfig {
    /// Added to the error before taking the log.
    pub floor: f64,
    /// Standard deviation of Gaussian noise added to every log value.
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            floor: 1e-3,
            noise_sigma: 0.0,
            seed: 0,
        }
    }
}

/// Log-covariances from ground-truth consistency errors.
///
/// The photometric error compares the current image with the previous one
/// warped by camera-only flow, so anything that breaks the static-world
/// assumption (moving objects, lighting changes) shows up as error. The
/// geometric error uses observed depth and the true relative pose.
pub struct OracleProvider {
    pub config: OracleConfig,
    gt: Box<dyn GroundTruthSource>,
}

impl OracleProvider {
    pub fn new(gt: Box<dyn GroundTruthSource>, config: OracleConfig) -> Self {
        Self { config, gt }
    }

    pub fn error_maps(&self, frame_j: &RgbdFrame, frame_i: &RgbdFrame) -> Result<(ErrorMap, ErrorMap)> {
        let (j, i) = (frame_j.index, frame_i.index);
        let flow = self.gt.ego_flow(j, i)?;
        let pose = self.gt.relative_pose(j, i)?;
        let photo = photometric_error_map(&frame_j.image, &frame_i.image, &flow)?;
        let geo = geometric_error_map(&frame_j.depth, &frame_i.depth, &pose, &frame_i.intrinsics)?;
        Ok((photo, geo))
    }
}

/// `ln(e + floor)` on valid pixels; invalid pixels take the largest valid
/// value (or `ln floor` if none is valid). Values are rounded through f32 so
/// that maps written to and read back from `.cmap` files are identical.
pub fn log_covariance(e: &ErrorMap, floor: f64, noise: Option<(&mut ChaCha8Rng, f64)>) -> Image {
    let mut l = e.values.map(|v| (v + floor).ln());
    let worst = e
        .valid_values()
        .map(|v| (v + floor).ln())
        .fold(None, |m: Option<f64>, v| Some(m.map_or(v, |m| m.max(v))))
        .unwrap_or(floor.ln());
    for (v, &ok) in l.as_mut_slice().iter_mut().zip(e.valid.as_slice()) {
        if !ok {
            *v = worst;
        }
    }
    if let Some((rng, sigma)) = noise {
        for v in l.as_mut_slice() {
            let n: f64 = StandardNormal.sample(rng);
            *v += sigma * n;
        }
    }
    l.map(|v| v as f32 as f64)
}

impl ConsistencyProvider for OracleProvider {
    fn get_uncertainty(&mut self, frame_j: &RgbdFrame, frame_i: &RgbdFrame) -> Result<UncertaintyPair> {
        let (photo_e, geo_e) = self.error_maps(frame_j, frame_i)?;
        let (j, i) = (frame_j.index, frame_i.index);
        let floor = self.config.floor;
        let (photo, geo) = if self.config.noise_sigma > 0.0 {
            let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
            rng.set_stream(((j as u64) << 32) ^ i as u64);
            let sigma = self.config.noise_sigma;
            let p = log_covariance(&photo_e, floor, Some((&mut rng, sigma)));
            (p, log_covariance(&geo_e, floor, Some((&mut rng, sigma))))
        } else {
            (
                log_covariance(&photo_e, floor, None),
                log_covariance(&geo_e, floor, None),
            )
        };
        let pair = UncertaintyPair { photo, geo, j, i };
        pair.validate()?;
        Ok(pair)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cmap::write_cmap;
    use crate::synth::{
        render_sequence, Degradation, IntrinsicsSpec, PlaneSpec, SceneSpec, Schedule, TextureSpec, TrajectorySpec,
    };

    fn spec(sprite: bool) -> SceneSpec {
        SceneSpec {
            width: 64,
            height: 48,
            frames: 3,
            seed: 11,
            fps: 30.0,
            intrinsics: Some(IntrinsicsSpec {
                fx: 60.0,
                fy: 60.0,
                cx: 31.5,
                cy: 23.5,
            }),
            texture: TextureSpec::default(),
            planes: vec![PlaneSpec {
                depth: 2.5,
                normal: None,
                extent: None,
                texture: None,
            }],
            trajectory: TrajectorySpec::Twist {
                linear: [0.01, 0.0, 0.005],
                angular: [0.0, 0.002, 0.0],
            },
            degradations: if sprite {
                vec![Degradation::Sprite {
                    origin: [20.0, 14.0],
                    size: 14.0,
                    velocity: [3.0, 1.0],
                    depth: 1.2,
                    contrast: 0.2,
                    wavelength: 5.0,
                    frames: Schedule::default(),
                }]
            } else {
                vec![]
            },
        }
    }

    fn percentile(mut v: Vec<f64>, p: f64) -> f64 {
        v.sort_by(f64::total_cmp);
        v[((v.len() - 1) as f64 * p).round() as usize]
    }

    #[test]
    fn constant_provider_gives_unit_quality() {
        let seq = render_sequence(&spec(true)).unwrap();
        let pair = ConstantProvider
            .get_uncertainty(&seq.frames[0], &seq.frames[1])
            .unwrap();
        let (p, g) = pair.qualities().unwrap();
        assert!(p.values.as_slice().iter().chain(g.values.as_slice()).all(|&q| q == 1.0));
    }

    #[test]
    fn static_noiseless_pair_gives_unit_quality() {
        let mut s = spec(false);
        s.trajectory = TrajectorySpec::Static;
        let seq = render_sequence(&s).unwrap();
        let mut oracle = OracleProvider::new(Box::new(seq.gt.clone()), OracleConfig::default());
        let pair = oracle.get_uncertainty(&seq.frames[0], &seq.frames[1]).unwrap();
        let (p, g) = pair.qualities().unwrap();
        assert!(p.values.as_slice().iter().chain(g.values.as_slice()).all(|&q| q == 1.0));
    }

    #[test]
    fn sprite_pixels_rank_below_background() {
        let seq = render_sequence(&spec(true)).unwrap();
        let mut oracle = OracleProvider::new(Box::new(seq.gt.clone()), OracleConfig::default());
        let pair = oracle.get_uncertainty(&seq.frames[0], &seq.frames[1]).unwrap();
        let (q, _) = pair.qualities().unwrap();
        let mask = &seq.gt.dynamic[1];
        let (mut sprite, mut background) = (Vec::new(), Vec::new());
        for y in 0..48 {
            for x in 0..64 {
                if mask.get(x, y) {
                    sprite.push(q.get(x, y));
                } else {
                    background.push(q.get(x, y));
                }
            }
        }
        let p10 = percentile(background, 0.1);
        let med_sprite = percentile(sprite.clone(), 0.5);
        assert!(med_sprite < p10, "sprite median {med_sprite} vs background p10 {p10}");
        let below = sprite.iter().filter(|&&v| v < p10).count();
        assert!(below as f64 > 0.75 * sprite.len() as f64, "{below}/{}", sprite.len());
    }

    #[test]
    fn file_provider_reads_what_the_oracle_wrote() {
        let seq = render_sequence(&spec(true)).unwrap();
        let mut oracle = OracleProvider::new(
            Box::new(seq.gt.clone()),
            OracleConfig {
                noise_sigma: 0.3,
                seed: 4,
                ..Default::default()
            },
        );
        let pair = oracle.get_uncertainty(&seq.frames[1], &seq.frames[2]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_cmap(&cmap_path(dir.path(), 1, 2), &pair).unwrap();
        let mut file = FileProvider::new(dir.path());
        assert_eq!(file.get_uncertainty(&seq.frames[1], &seq.frames[2]).unwrap(), pair);
        match file.get_uncertainty(&seq.frames[0], &seq.frames[1]) {
            Err(Error::ProviderIo { j: 0, i: 1, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn noise_is_seeded_per_pair() {
        let seq = render_sequence(&spec(false)).unwrap();
        let cfg = OracleConfig {
            noise_sigma: 0.5,
            seed: 9,
            ..Default::default()
        };
        let mut a = OracleProvider::new(Box::new(seq.gt.clone()), cfg);
        let mut b = OracleProvider::new(Box::new(seq.gt.clone()), cfg);
        let a12 = a.get_uncertainty(&seq.frames[1], &seq.frames[2]).unwrap();
        let _ = b.get_uncertainty(&seq.frames[0], &seq.frames[1]).unwrap();
        assert_eq!(b.get_uncertainty(&seq.frames[1], &seq.frames[2]).unwrap(), a12);
    }

    #[test]
    fn missing_ground_truth_is_reported() {
        let seq = render_sequence(&spec(false)).unwrap();
        let mut oracle = OracleProvider::new(Box::new(seq.gt.clone()), OracleConfig::default());
        assert!(matches!(
            oracle.get_uncertainty(&seq.frames[0], &seq.frames[2]),
            Err(Error::MissingGroundTruth(_))
        ));
    }

    #[test]
    fn invalid_pixels_take_the_worst_valid_value() {
        let mut e = ErrorMap {
            values: crate::image::Grid::from_vec(2, 2, vec![0.0, 0.5, 7.0, 0.0]).unwrap(),
            valid: crate::image::Grid::from_vec(2, 2, vec![true, true, false, true]).unwrap(),
            kind: crate::consistency::ErrorKind::Photo,
        };
        let l = log_covariance(&e, 1e-3, None);
        assert_eq!(l.get(0, 1), (0.501f64).ln() as f32 as f64);
        e.valid = crate::image::Grid::new(2, 2, false);
        let l = log_covariance(&e, 1e-3, None);
        assert!(l.as_slice().iter().all(|&v| v == (1e-3f64).ln() as f32 as f64));
    }
}
