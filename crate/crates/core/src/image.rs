//! Dense row-major grids, bilinear sampling and mean-pooling pyramids.

use crate::error::{Error, Result};

/// Row-major 2-D grid. Used for intensity images, depth maps, masks and
/// per-pixel scalar maps alike.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid<T> {
    width: usize,
    height: usize,
    data: Vec<T>,
}

pub type Image = Grid<f64>;
pub type Mask = Grid<bool>;

impl<T: Copy> Grid<T> {
    pub fn new(width: usize, height: usize, fill: T) -> Self {
        Self {
            width,
            height,
            data: vec![fill; width * height],
        }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::InvalidArgument(format!(
                "grid {width}x{height} needs {} values, got {}",
                width * height,
                data.len()
            )));
        }
        Ok(Self { width, height, data })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self { width, height, data }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> T {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: T) {
        self.data[y * self.width + x] = value;
    }

    #[inline]
    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn map<U: Copy>(&self, f: impl FnMut(T) -> U) -> Grid<U> {
        Grid {
            width: self.width,
            height: self.height,
            data: self.data.iter().copied().map(f).collect(),
        }
    }

    pub fn ensure_dims(&self, dims: (usize, usize)) -> Result<()> {
        if self.dims() != dims {
            return Err(Error::Shape {
                expected: dims,
                found: self.dims(),
            });
        }
        Ok(())
    }
}

/// Converts an RGB triple to intensity with the fixed luma weights.
#[inline]
pub fn luma(r: f64, g: f64, b: f64) -> f64 {
    0.299 * r + 0.587 * g + 0.114 * b
}

/// A bilinear sample together with the partial derivatives of the blended
/// surface at the sample point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub value: f64,
    pub dx: f64,
    pub dy: f64,
}

/// Samples `image` at subpixel `(x, y)`, which must lie inside
/// `[0, w-1] x [0, h-1]`.
///
/// The gradient is the exact derivative of the bilinear patch containing the
/// point. On the last row/column the patch to the upper-left is used.
pub fn bilinear_sample(image: &Image, x: f64, y: f64) -> Result<Sample> {
    let (w, h) = image.dims();
    let in_bounds =
        x.is_finite() && y.is_finite() && x >= 0.0 && y >= 0.0 && x <= (w - 1) as f64 && y <= (h - 1) as f64;
    if !in_bounds || w < 2 || h < 2 {
        return Err(Error::SampleOutOfBounds {
            x,
            y,
            width: w,
            height: h,
        });
    }
    Ok(bilinear_unchecked(image, x, y))
}

/// Same as [`bilinear_sample`] but returns `None` instead of an error.
#[inline]
pub fn try_bilinear(image: &Image, x: f64, y: f64) -> Option<Sample> {
    let (w, h) = image.dims();
    if w < 2 || h < 2 || !(x >= 0.0 && y >= 0.0 && x <= (w - 1) as f64 && y <= (h - 1) as f64) {
        return None;
    }
    Some(bilinear_unchecked(image, x, y))
}

#[inline]
fn bilinear_unchecked(image: &Image, x: f64, y: f64) -> Sample {
    let (w, h) = image.dims();
    let x0 = (x.floor() as usize).min(w - 2);
    let y0 = (y.floor() as usize).min(h - 2);
    let fx = x - x0 as f64;
    let fy = y - y0 as f64;
    let data = image.as_slice();
    let i00 = data[y0 * w + x0];
    let i10 = data[y0 * w + x0 + 1];
    let i01 = data[(y0 + 1) * w + x0];
    let i11 = data[(y0 + 1) * w + x0 + 1];
    let top = i00 * (1.0 - fx) + i10 * fx;
    let bottom = i01 * (1.0 - fx) + i11 * fx;
    Sample {
        value: top * (1.0 - fy) + bottom * fy,
        dx: (i10 - i00) * (1.0 - fy) + (i11 - i01) * fy,
        dy: bottom - top,
    }
}

/// Halves a grid by 2x2 mean pooling. Odd trailing rows/columns average the
/// parents that exist, so output dims are `ceil(dims / 2)`.
pub fn downsample_mean(image: &Image) -> Image {
    let (w, h) = image.dims();
    let (nw, nh) = (w.div_ceil(2), h.div_ceil(2));
    Grid::from_fn(nw, nh, |x, y| {
        let (x0, y0) = (2 * x, 2 * y);
        let has_x1 = x0 + 1 < w;
        let has_y1 = y0 + 1 < h;
        match (has_x1, has_y1) {
            (true, true) => {
                (image.get(x0, y0) + image.get(x0 + 1, y0) + image.get(x0, y0 + 1) + image.get(x0 + 1, y0 + 1)) * 0.25
            }
            (true, false) => (image.get(x0, y0) + image.get(x0 + 1, y0)) * 0.5,
            (false, true) => (image.get(x0, y0) + image.get(x0, y0 + 1)) * 0.5,
            (false, false) => image.get(x0, y0),
        }
    })
}

/// Halves a mask; a pooled pixel is set only if all of its parents are.
pub fn downsample_mask(mask: &Mask) -> Mask {
    let (w, h) = mask.dims();
    Grid::from_fn(w.div_ceil(2), h.div_ceil(2), |x, y| {
        let mut all = true;
        for dy in 0..2 {
            for dx in 0..2 {
                let (px, py) = (2 * x + dx, 2 * y + dy);
                if px < w && py < h {
                    all &= mask.get(px, py);
                }
            }
        }
        all
    })
}

/// Intensity pyramid; level 0 is full resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct ImagePyramid {
    levels: Vec<Image>,
}

impl ImagePyramid {
    pub fn build(image: &Image, n_levels: usize) -> Result<Self> {
        if n_levels == 0 {
            return Err(Error::InvalidArgument("pyramid needs at least one level".into()));
        }
        let mut levels = Vec::with_capacity(n_levels);
        levels.push(image.clone());
        for l in 1..n_levels {
            let next = downsample_mean(&levels[l - 1]);
            levels.push(next);
        }
        Ok(Self { levels })
    }

    pub fn level(&self, l: usize) -> &Image {
        &self.levels[l]
    }

    pub fn n_levels(&self) -> usize {
        self.levels.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn ramp(w: usize, h: usize) -> Image {
        Grid::from_fn(w, h, |x, y| (x as f64 * 0.1 + y as f64 * 0.03).sin() * 0.5 + 0.5)
    }

    #[test]
    fn integer_sample_is_exact() {
        let img = ramp(7, 5);
        for y in 0..5 {
            for x in 0..7 {
                let s = bilinear_sample(&img, x as f64, y as f64).unwrap();
                assert_eq!(s.value, img.get(x, y));
            }
        }
    }

    #[test]
    fn midpoint_blends() {
        let img = Grid::from_vec(2, 2, vec![0.0, 1.0, 0.0, 1.0]).unwrap();
        assert_eq!(bilinear_sample(&img, 0.5, 0.0).unwrap().value, 0.5);
        assert_eq!(bilinear_sample(&img, 0.5, 0.7).unwrap().value, 0.5);
    }

    #[test]
    fn out_of_bounds_is_an_error() {
        let img = ramp(4, 4);
        assert!(matches!(
            bilinear_sample(&img, 3.0001, 1.0),
            Err(Error::SampleOutOfBounds { .. })
        ));
        assert!(bilinear_sample(&img, -1e-9, 1.0).is_err());
        assert!(bilinear_sample(&img, f64::NAN, 1.0).is_err());
        assert!(bilinear_sample(&img, 3.0, 3.0).is_ok());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let img = ramp(16, 12);
        let h = 1e-6;
        for &(x, y) in &[(3.3, 4.7), (10.25, 2.125), (0.4, 0.6), (14.9, 10.1)] {
            let s = bilinear_sample(&img, x, y).unwrap();
            let fx = (bilinear_sample(&img, x + h, y).unwrap().value - bilinear_sample(&img, x - h, y).unwrap().value)
                / (2.0 * h);
            let fy = (bilinear_sample(&img, x, y + h).unwrap().value - bilinear_sample(&img, x, y - h).unwrap().value)
                / (2.0 * h);
            assert!((s.dx - fx).abs() < 1e-5, "dx {} vs {}", s.dx, fx);
            assert!((s.dy - fy).abs() < 1e-5, "dy {} vs {}", s.dy, fy);
        }
    }

    #[test]
    fn pyramid_dims_and_means() {
        let img = ramp(13, 9);
        let pyr = ImagePyramid::build(&img, 4).unwrap();
        for l in 0..4 {
            let d = 1usize << l;
            assert_eq!(pyr.level(l).dims(), (13usize.div_ceil(d), 9usize.div_ceil(d)));
        }
        let l1 = pyr.level(1);
        for y in 0..4 {
            for x in 0..6 {
                let expected = (img.get(2 * x, 2 * y)
                    + img.get(2 * x + 1, 2 * y)
                    + img.get(2 * x, 2 * y + 1)
                    + img.get(2 * x + 1, 2 * y + 1))
                    * 0.25;
                assert_eq!(l1.get(x, y), expected);
            }
        }
        assert_relative_eq!(l1.get(6, 4), img.get(12, 8));
    }

    #[test]
    fn mask_pooling_is_logical_and() {
        let mask = Grid::from_vec(2, 2, vec![true, true, false, true]).unwrap();
        assert!(!downsample_mask(&mask).get(0, 0));
        let full = Grid::new(3, 3, true);
        assert!(downsample_mask(&full).as_slice().iter().all(|&b| b));
    }
}
