//! Host-side quality priors built from per-pair log-covariance maps.
//!
//! A pair's log-covariance map is median-normalized into a quality map in
//! `[QUALITY_FLOOR, 1]`. The two pairs flanking a keyframe are fused by their
//! geometric mean (the arithmetic mean of the log-qualities), and the fused
//! maps give the photometric and geometric weights used during tracking.

use crate::error::{Error, Result};
use crate::image::{Grid, Image};

/// Lower clip bound of a quality map.
pub const QUALITY_FLOOR: f64 = 1e-4;
/// Added to quality before the square root that yields a weight.
pub const WEIGHT_EPSILON: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Branch {
    Photo,
    Geo,
}

/// Photometric and geometric log-covariance maps for the frame pair `(j, i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct UncertaintyPair {
    pub photo: Image,
    pub geo: Image,
    pub j: usize,
    pub i: usize,
}

impl UncertaintyPair {
    /// `l = 0` everywhere, which normalizes to unit quality.
    pub fn constant(width: usize, height: usize, j: usize, i: usize) -> Self {
        Self {
            photo: Grid::new(width, height, 0.0),
            geo: Grid::new(width, height, 0.0),
            j,
            i,
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        self.photo.dims()
    }

    pub fn validate(&self) -> Result<()> {
        self.geo.ensure_dims(self.photo.dims())?;
        let finite = self
            .photo
            .as_slice()
            .iter()
            .chain(self.geo.as_slice())
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidArgument(format!(
                "non-finite log-covariance in pair ({}, {})",
                self.j, self.i
            )));
        }
        Ok(())
    }

    pub fn qualities(&self) -> Result<(QualityMap, QualityMap)> {
        Ok((
            pairwise_quality(&self.photo, Branch::Photo)?,
            pairwise_quality(&self.geo, Branch::Geo)?,
        ))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QualityMap {
    pub values: Image,
    pub branch: Branch,
}

impl QualityMap {
    pub fn uniform(width: usize, height: usize, value: f64, branch: Branch) -> Self {
        Self {
            values: Grid::new(width, height, value),
            branch,
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        self.values.dims()
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values.get(x, y)
    }
}

/// Median of a non-empty slice; even lengths average the two central values.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let n = sorted.len();
    Some(if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    })
}

/// `clip(m / exp(l(p)), QUALITY_FLOOR, 1)` with `m` the spatial median of
/// `exp(l)`.
pub fn pairwise_quality(log_cov: &Image, branch: Branch) -> Result<QualityMap> {
    if log_cov.is_empty() {
        return Err(Error::InvalidArgument("empty log-covariance map".into()));
    }
    if let Some(bad) = log_cov.as_slice().iter().find(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument(format!("non-finite log-covariance {bad}")));
    }
    let cov = log_cov.map(f64::exp);
    let m = median(cov.as_slice()).expect("non-empty");
    Ok(QualityMap {
        values: cov.map(|c| (m / c).clamp(QUALITY_FLOOR, 1.0)),
        branch,
    })
}

/// Per-pixel geometric mean of the qualities of the two pairs that flank a
/// keyframe.
pub fn fuse_bidirectional(prev: &QualityMap, next: &QualityMap) -> Result<QualityMap> {
    if prev.branch != next.branch {
        return Err(Error::InvalidArgument(format!(
            "cannot fuse {:?} with {:?} quality",
            prev.branch, next.branch
        )));
    }
    if prev.dims() != next.dims() {
        return Err(Error::Shape {
            expected: prev.dims(),
            found: next.dims(),
        });
    }
    let values = prev
        .values
        .as_slice()
        .iter()
        .zip(next.values.as_slice())
        .map(|(&a, &b)| (a * b).sqrt())
        .collect();
    let (w, h) = prev.dims();
    Ok(QualityMap {
        values: Grid::from_vec(w, h, values)?,
        branch: prev.branch,
    })
}

/// Absolute quality prior attached to a host keyframe.
#[derive(Debug, Clone, PartialEq)]
pub struct QualityPrior {
    pub photo: QualityMap,
    pub geo: QualityMap,
    pub keyframe: usize,
    /// Both flanking pairs have been incorporated.
    pub finalized: bool,
}

impl QualityPrior {
    /// Unit quality everywhere; equivalent to a constant provider.
    pub fn unit(width: usize, height: usize, keyframe: usize) -> Self {
        Self {
            photo: QualityMap::uniform(width, height, 1.0, Branch::Photo),
            geo: QualityMap::uniform(width, height, 1.0, Branch::Geo),
            keyframe,
            finalized: true,
        }
    }

    /// Prior from a single adjacent pair, awaiting the second one.
    pub fn provisional(photo: QualityMap, geo: QualityMap, keyframe: usize) -> Result<Self> {
        if photo.branch != Branch::Photo || geo.branch != Branch::Geo {
            return Err(Error::InvalidArgument("prior branches swapped".into()));
        }
        if photo.dims() != geo.dims() {
            return Err(Error::Shape {
                expected: photo.dims(),
                found: geo.dims(),
            });
        }
        Ok(Self {
            photo,
            geo,
            keyframe,
            finalized: false,
        })
    }

    /// Fuses the second flanking pair into a provisional prior.
    pub fn finalize(&mut self, photo_next: &QualityMap, geo_next: &QualityMap) -> Result<()> {
        if self.finalized {
            return Err(Error::InvalidArgument(format!(
                "prior of keyframe {} already finalized",
                self.keyframe
            )));
        }
        self.photo = fuse_bidirectional(&self.photo, photo_next)?;
        self.geo = fuse_bidirectional(&self.geo, geo_next)?;
        self.finalized = true;
        Ok(())
    }

    pub fn dims(&self) -> (usize, usize) {
        self.photo.dims()
    }
}

/// Prior built from one pair only.
pub fn provisional_prior(photo_prev: QualityMap, geo_prev: QualityMap, keyframe: usize) -> Result<QualityPrior> {
    QualityPrior::provisional(photo_prev, geo_prev, keyframe)
}

/// Photometric and geometric tracking weights at full resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMaps {
    pub photo: Image,
    pub geo: Image,
}

impl WeightMaps {
    #[inline]
    pub fn at(&self, x: usize, y: usize) -> (f64, f64) {
        (self.photo.get(x, y), self.geo.get(x, y))
    }
}

#[inline]
pub fn quality_to_weight(q: f64) -> f64 {
    (q + WEIGHT_EPSILON).sqrt()
}

/// `w = sqrt(Q + eps)` for both branches.
pub fn weights_from_prior(prior: &QualityPrior) -> WeightMaps {
    WeightMaps {
        photo: prior.photo.values.map(quality_to_weight),
        geo: prior.geo.values.map(quality_to_weight),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn qmap(values: Vec<f64>, branch: Branch) -> QualityMap {
        let n = values.len();
        QualityMap {
            values: Grid::from_vec(n, 1, values).unwrap(),
            branch,
        }
    }

    #[test]
    fn constant_log_cov_gives_unit_quality() {
        let q = pairwise_quality(&Grid::new(5, 4, 2.7), Branch::Photo).unwrap();
        assert!(q.values.as_slice().iter().all(|&v| v == 1.0));
        let q = pairwise_quality(&Grid::new(5, 4, 0.0), Branch::Photo).unwrap();
        assert!(q.values.as_slice().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn doubled_covariance_halves_quality() {
        let mut l = Grid::new(5, 5, 0.3);
        l.set(2, 2, 0.3 + std::f64::consts::LN_2);
        let q = pairwise_quality(&l, Branch::Geo).unwrap();
        assert!((q.get(2, 2) - 0.5).abs() < 1e-15);
        assert_eq!(q.get(0, 0), 1.0);
    }

    #[test]
    fn extreme_covariance_hits_the_floor() {
        let mut l = Grid::new(3, 3, 0.0);
        l.set(1, 1, (1e6f64).ln());
        let q = pairwise_quality(&l, Branch::Photo).unwrap();
        assert_eq!(q.get(1, 1), QUALITY_FLOOR);
    }

    #[test]
    fn empty_or_nan_maps_are_rejected() {
        assert!(pairwise_quality(&Grid::new(0, 0, 0.0), Branch::Photo).is_err());
        let mut l = Grid::new(2, 2, 0.0);
        l.set(0, 0, f64::NAN);
        assert!(pairwise_quality(&l, Branch::Photo).is_err());
    }

    #[test]
    fn even_median_averages_central_values() {
        assert_eq!(median(&[4.0, 1.0, 3.0, 2.0]), Some(2.5));
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[]), None);
    }

    #[test]
    fn fuse_cases() {
        let a = qmap(vec![1.0, 0.3], Branch::Photo);
        let b = qmap(vec![0.25, 0.3], Branch::Photo);
        let f = fuse_bidirectional(&a, &b).unwrap();
        assert_eq!(f.values.as_slice(), &[0.5, 0.3]);
        let g = qmap(vec![1.0, 1.0], Branch::Geo);
        assert!(fuse_bidirectional(&a, &g).is_err());
        let short = qmap(vec![1.0], Branch::Photo);
        assert!(matches!(fuse_bidirectional(&a, &short), Err(Error::Shape { .. })));
    }

    #[test]
    fn provisional_then_finalize() {
        let p = qmap(vec![0.5, 1.0, 0.01], Branch::Photo);
        let g = qmap(vec![1.0, 0.2, 0.3], Branch::Geo);
        let mut prior = provisional_prior(p.clone(), g.clone(), 4).unwrap();
        assert!(!prior.finalized);
        assert_eq!(prior.photo, p);

        let mut same = prior.clone();
        same.finalize(&p, &g).unwrap();
        assert!(same.finalized);
        assert_eq!(same.photo.values, p.values);
        assert_eq!(same.geo.values, g.values);

        let p2 = qmap(vec![0.125, 0.5, 1.0], Branch::Photo);
        let g2 = qmap(vec![0.5, 0.5, 0.5], Branch::Geo);
        prior.finalize(&p2, &g2).unwrap();
        assert_eq!(prior.photo, fuse_bidirectional(&p, &p2).unwrap());
        assert_eq!(prior.geo, fuse_bidirectional(&g, &g2).unwrap());
        assert!(prior.finalize(&p2, &g2).is_err());
    }

    #[test]
    fn weight_formula() {
        assert!((quality_to_weight(1.0) - 1.0001f64.sqrt()).abs() < 1e-15);
        assert!((quality_to_weight(1.0) - 1.00005).abs() < 1e-8);
        assert!((quality_to_weight(QUALITY_FLOOR) - 0.014_142_135_623_731).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn weights_invert_to_quality(q in prop::collection::vec(QUALITY_FLOOR..=1.0, 1..64)) {
            let prior = QualityPrior {
                photo: qmap(q.clone(), Branch::Photo),
                geo: qmap(q.clone(), Branch::Geo),
                keyframe: 0,
                finalized: true,
            };
            let w = weights_from_prior(&prior);
            for (x, &qx) in q.iter().enumerate() {
                let (wp, wg) = w.at(x, 0);
                prop_assert!((wp * wp - WEIGHT_EPSILON - qx).abs() < 1e-12);
                prop_assert_eq!(wp, wg);
            }
        }

        #[test]
        fn quality_is_monotone_and_shift_invariant(
            l in prop::collection::vec(-8.0f64..8.0, 1..50),
            c in -20.0f64..20.0,
        ) {
            let n = l.len();
            let base = pairwise_quality(&Grid::from_vec(n, 1, l.clone()).unwrap(), Branch::Photo).unwrap();
            let shifted: Vec<f64> = l.iter().map(|v| v + c).collect();
            let moved = pairwise_quality(&Grid::from_vec(n, 1, shifted).unwrap(), Branch::Photo).unwrap();
            for x in 0..n {
                prop_assert!((base.get(x, 0) - moved.get(x, 0)).abs() < 1e-12);
                prop_assert!((QUALITY_FLOOR..=1.0).contains(&base.get(x, 0)));
                for y in 0..n {
                    if l[x] <= l[y] {
                        prop_assert!(base.get(x, 0) >= base.get(y, 0));
                    }
                }
            }
        }

        #[test]
        fn fusion_is_symmetric_and_bounded(
            pairs in prop::collection::vec((QUALITY_FLOOR..=1.0, QUALITY_FLOOR..=1.0), 1..64)
        ) {
            let a = qmap(pairs.iter().map(|p| p.0).collect(), Branch::Geo);
            let b = qmap(pairs.iter().map(|p| p.1).collect(), Branch::Geo);
            let ab = fuse_bidirectional(&a, &b).unwrap();
            let ba = fuse_bidirectional(&b, &a).unwrap();
            prop_assert_eq!(&ab, &ba);
            for (x, &(p, q)) in pairs.iter().enumerate() {
                let v = ab.get(x, 0);
                prop_assert!(v >= p.min(q) && v <= p.max(q));
                prop_assert!((v.ln() - 0.5 * (p.ln() + q.ln())).abs() < 1e-12);
            }
        }
    }
}
