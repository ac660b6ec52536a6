//! Reference consistency errors computed from ground-truth flow, pose and
//! depth, and the Laplacian negative log-likelihood used to score a
//! log-covariance map against them.

use nalgebra::Vector2;

use crate::error::{Error, Result};
use crate::geometry::{warp_point, Intrinsics, Se3Pose};
use crate::image::{bilinear_sample, downsample_mask, downsample_mean, Grid, Image, Mask};

/// Added to the measured depth in the relative geometric error.
pub const GEO_EPSILON: f64 = 1e-6;

/// Dense optical flow from frame j to frame i, indexed by frame-i pixels:
/// the point seen at `p` in frame i was at `p - f(p)` in frame j.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    pub u: Grid<f64>,
    pub v: Grid<f64>,
    pub valid: Mask,
}

impl FlowField {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            u: Grid::new(width, height, 0.0),
            v: Grid::new(width, height, 0.0),
            valid: Grid::new(width, height, true),
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        self.u.dims()
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> Option<Vector2<f64>> {
        self.valid
            .get(x, y)
            .then(|| Vector2::new(self.u.get(x, y), self.v.get(x, y)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ErrorKind {
    Photo,
    Geo,
}

/// Per-pixel nonnegative error with a validity mask.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorMap {
    pub values: Image,
    pub valid: Mask,
    pub kind: ErrorKind,
}

impl ErrorMap {
    pub fn dims(&self) -> (usize, usize) {
        self.values.dims()
    }

    pub fn valid_count(&self) -> usize {
        self.valid.as_slice().iter().filter(|&&v| v).count()
    }

    pub fn valid_values(&self) -> impl Iterator<Item = f64> + '_ {
        self.values
            .as_slice()
            .iter()
            .zip(self.valid.as_slice())
            .filter_map(|(&e, &m)| m.then_some(e))
    }
}

#[inline]
pub fn depth_is_valid(d: f64) -> bool {
    d.is_finite() && d > 0.0
}

/// `|W(I_j, f)(p) - I_i(p)|`, where the warp samples `I_j` bilinearly at
/// `p - f(p)`. Pixels whose source falls outside `I_j` are masked.
pub fn photometric_error_map(img_j: &Image, img_i: &Image, flow: &FlowField) -> Result<ErrorMap> {
    let dims = img_i.dims();
    img_j.ensure_dims(dims)?;
    if flow.dims() != dims {
        return Err(Error::Shape {
            expected: dims,
            found: flow.dims(),
        });
    }
    let (w, h) = dims;
    let mut values = Grid::new(w, h, 0.0);
    let mut valid = Grid::new(w, h, false);
    for y in 0..h {
        for x in 0..w {
            let Some(f) = flow.at(x, y) else { continue };
            let (sx, sy) = (x as f64 - f.x, y as f64 - f.y);
            if let Ok(s) = bilinear_sample(img_j, sx, sy) {
                values.set(x, y, (s.value - img_i.get(x, y)).abs());
                valid.set(x, y, true);
            }
        }
    }
    Ok(ErrorMap {
        values,
        valid,
        kind: ErrorKind::Photo,
    })
}

/// Relative depth inconsistency `|d_proj - D_i(p')| / (D_i(p') + eps)` of
/// frame-j depth moved into frame i by `t_rel` (frame j to frame i). Indexed
/// by frame-j pixels; `D_i` is read with nearest-neighbour lookup.
pub fn geometric_error_map(depth_j: &Image, depth_i: &Image, t_rel: &Se3Pose, k: &Intrinsics) -> Result<ErrorMap> {
    let dims = k.dims();
    depth_j.ensure_dims(dims)?;
    depth_i.ensure_dims(dims)?;
    let (w, h) = dims;
    let mut values = Grid::new(w, h, 0.0);
    let mut valid = Grid::new(w, h, false);
    for y in 0..h {
        for x in 0..w {
            let d = depth_j.get(x, y);
            if !depth_is_valid(d) {
                continue;
            }
            let Ok((q, d_proj)) = warp_point(t_rel, k, &Vector2::new(x as f64, y as f64), d) else {
                continue;
            };
            let (qx, qy) = (q.x.round(), q.y.round());
            if !(qx >= 0.0 && qy >= 0.0 && qx < w as f64 && qy < h as f64) {
                continue;
            }
            let measured = depth_i.get(qx as usize, qy as usize);
            if !depth_is_valid(measured) {
                continue;
            }
            values.set(x, y, (d_proj - measured).abs() / (measured + GEO_EPSILON));
            valid.set(x, y, true);
        }
    }
    Ok(ErrorMap {
        values,
        valid,
        kind: ErrorKind::Geo,
    })
}

/// `e * exp(-l) + l` for one pixel.
#[inline]
pub fn nll_pixel(e: f64, log_cov: f64) -> f64 {
    e * (-log_cov).exp() + log_cov
}

/// Sum of [`nll_pixel`] over the valid pixels of `e`.
pub fn nll_score(e: &ErrorMap, log_cov: &Image) -> Result<f64> {
    log_cov.ensure_dims(e.dims())?;
    Ok(e.values
        .as_slice()
        .iter()
        .zip(e.valid.as_slice())
        .zip(log_cov.as_slice())
        .filter(|((_, &m), _)| m)
        .map(|((&err, _), &l)| nll_pixel(err, l))
        .sum())
}

/// Masked scalar map pooled across scales.
#[derive(Debug, Clone, PartialEq)]
pub struct PooledLevel {
    pub values: Image,
    pub valid: Mask,
}

/// Level 0 is the input; each further level is a 2x2 mean pool of the one
/// before, with the mask pooled by logical AND.
pub fn multiscale_pool(values: &Image, valid: &Mask, n_levels: usize) -> Result<Vec<PooledLevel>> {
    if n_levels == 0 {
        return Err(Error::InvalidArgument("n_levels must be >= 1".into()));
    }
    valid.ensure_dims(values.dims())?;
    let mut out = vec![PooledLevel {
        values: values.clone(),
        valid: valid.clone(),
    }];
    for l in 1..n_levels {
        let prev = &out[l - 1];
        let next = PooledLevel {
            values: downsample_mean(&prev.values),
            valid: downsample_mask(&prev.valid),
        };
        out.push(next);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{se3_exp, Twist};
    use nalgebra::Vector3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(rng: &mut ChaCha8Rng, w: usize, h: usize) -> Image {
        Grid::from_fn(w, h, |_, _| rng.random::<f64>())
    }

    #[test]
    fn identical_images_zero_flow_give_zero_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let img = random_image(&mut rng, 9, 7);
        let e = photometric_error_map(&img, &img, &FlowField::zeros(9, 7)).unwrap();
        assert!(e.values.as_slice().iter().all(|&v| v == 0.0));
        assert_eq!(e.valid_count(), 63);
    }

    #[test]
    fn constant_offset_gives_constant_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let img = random_image(&mut rng, 6, 6).map(|v| v * 0.5);
        let shifted = img.map(|v| v + 0.25);
        let e = photometric_error_map(&shifted, &img, &FlowField::zeros(6, 6)).unwrap();
        for &v in e.values.as_slice() {
            assert!((v - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let a = Grid::new(4, 4, 0.0);
        let b = Grid::new(4, 5, 0.0);
        assert!(matches!(
            photometric_error_map(&a, &b, &FlowField::zeros(4, 5)),
            Err(Error::Shape { .. })
        ));
        let k = Intrinsics::new(10.0, 10.0, 2.0, 2.0, 4, 4).unwrap();
        assert!(geometric_error_map(&a, &b, &Se3Pose::identity(), &k).is_err());
    }

    #[test]
    fn flow_leaving_the_image_is_masked() {
        let img = Grid::new(5, 5, 0.5);
        let mut flow = FlowField::zeros(5, 5);
        flow.u.set(0, 2, 0.5);
        let e = photometric_error_map(&img, &img, &flow).unwrap();
        assert!(!e.valid.get(0, 2));
        assert!(e.valid.get(1, 2));
    }

    #[test]
    fn static_depth_gives_zero_geometric_error() {
        let k = Intrinsics::new(20.0, 20.0, 3.5, 3.5, 8, 8).unwrap();
        let d = Grid::from_fn(8, 8, |x, y| 1.0 + 0.1 * x as f64 + 0.05 * y as f64);
        let e = geometric_error_map(&d, &d, &Se3Pose::identity(), &k).unwrap();
        assert_eq!(e.valid_count(), 64);
        assert!(e.values.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn geometric_error_formula() {
        let k = Intrinsics::new(20.0, 20.0, 2.0, 2.0, 5, 5).unwrap();
        let dj = Grid::new(5, 5, 2.2);
        let di = Grid::new(5, 5, 2.0);
        let e = geometric_error_map(&dj, &di, &Se3Pose::identity(), &k).unwrap();
        let expected = (2.2_f64 - 2.0).abs() / (2.0 + GEO_EPSILON);
        assert!((e.values.get(2, 2) - expected).abs() < 1e-12);
        assert!((e.values.get(2, 2) - 0.1).abs() < 1e-6);
    }

    #[test]
    fn invalid_depth_is_masked() {
        let k = Intrinsics::new(20.0, 20.0, 2.0, 2.0, 5, 5).unwrap();
        let mut dj = Grid::new(5, 5, 2.0);
        let mut di = Grid::new(5, 5, 2.0);
        dj.set(1, 1, 0.0);
        di.set(3, 3, f64::NAN);
        let e = geometric_error_map(&dj, &di, &Se3Pose::identity(), &k).unwrap();
        assert!(!e.valid.get(1, 1));
        assert!(!e.valid.get(3, 3));
        assert_eq!(e.valid_count(), 23);
    }

    #[test]
    fn motion_out_of_view_is_masked() {
        let k = Intrinsics::new(20.0, 20.0, 2.0, 2.0, 5, 5).unwrap();
        let d = Grid::new(5, 5, 1.0);
        let t = se3_exp(&Twist::new(Vector3::new(10.0, 0.0, 0.0), Vector3::zeros())).unwrap();
        let e = geometric_error_map(&d, &d, &t, &k).unwrap();
        assert_eq!(e.valid_count(), 0);
    }

    #[test]
    fn nll_unit_case() {
        let e = ErrorMap {
            values: Grid::new(4, 3, 1.0),
            valid: Grid::new(4, 3, true),
            kind: ErrorKind::Photo,
        };
        assert_eq!(nll_score(&e, &Grid::new(4, 3, 0.0)).unwrap(), 12.0);
        let mut masked = e.clone();
        masked.valid.set(0, 0, false);
        assert_eq!(nll_score(&masked, &Grid::new(4, 3, 0.0)).unwrap(), 11.0);
    }

    #[test]
    fn nll_of_zero_error_decreases_without_bound() {
        let e = ErrorMap {
            values: Grid::new(2, 2, 0.0),
            valid: Grid::new(2, 2, true),
            kind: ErrorKind::Geo,
        };
        let a = nll_score(&e, &Grid::new(2, 2, -1.0)).unwrap();
        let b = nll_score(&e, &Grid::new(2, 2, -10.0)).unwrap();
        assert_eq!(a, -4.0);
        assert_eq!(b, -40.0);
    }

    #[test]
    fn nll_derivative_matches_finite_differences() {
        for &(e, l) in &[(0.3, -1.0), (2.0, 0.5), (1e-3, -6.0)] {
            let h = 1e-6;
            let fd = (nll_pixel(e, l + h) - nll_pixel(e, l - h)) / (2.0 * h);
            let analytic = -e * (-l).exp() + 1.0;
            assert!((fd - analytic).abs() < 1e-6);
        }
    }

    #[test]
    fn pooling_cases() {
        let c = Grid::new(8, 8, 0.7);
        let m = Grid::new(8, 8, true);
        for level in multiscale_pool(&c, &m, 4).unwrap() {
            assert!(level.values.as_slice().iter().all(|&v| v == 0.7));
        }
        let v = Grid::from_vec(2, 2, vec![0.0, 0.0, 1.0, 1.0]).unwrap();
        let pooled = multiscale_pool(&v, &Grid::new(2, 2, true), 2).unwrap();
        assert_eq!(pooled[1].values.get(0, 0), 0.5);
        assert!(multiscale_pool(&v, &Grid::new(2, 2, true), 0).is_err());
    }

    #[test]
    fn pooling_matches_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let v = random_image(&mut rng, 16, 16);
        let m = Grid::from_fn(16, 16, |_, _| rng.random::<f64>() > 0.1);
        let levels = multiscale_pool(&v, &m, 3).unwrap();
        let mut vals: Vec<Vec<f64>> = (0..16).map(|y| (0..16).map(|x| v.get(x, y)).collect()).collect();
        let mut mask: Vec<Vec<bool>> = (0..16).map(|y| (0..16).map(|x| m.get(x, y)).collect()).collect();
        for level in levels.iter().skip(1) {
            let n = vals.len() / 2;
            let mut nv = vec![vec![0.0; n]; n];
            let mut nm = vec![vec![false; n]; n];
            for y in 0..n {
                for x in 0..n {
                    nv[y][x] = (vals[2 * y][2 * x]
                        + vals[2 * y][2 * x + 1]
                        + vals[2 * y + 1][2 * x]
                        + vals[2 * y + 1][2 * x + 1])
                        * 0.25;
                    nm[y][x] = mask[2 * y][2 * x]
                        && mask[2 * y][2 * x + 1]
                        && mask[2 * y + 1][2 * x]
                        && mask[2 * y + 1][2 * x + 1];
                }
            }
            for y in 0..n {
                for x in 0..n {
                    assert_eq!(level.values.get(x, y), nv[y][x]);
                    assert_eq!(level.valid.get(x, y), nm[y][x]);
                }
            }
            vals = nv;
            mask = nm;
        }
    }
}
