use crate::error::Result;
use crate::geometry::Intrinsics;
use crate::image::Image;

/// One RGB-D observation: intensity in `[0, 1]` and metric depth, where
/// non-positive or non-finite depth marks a missing measurement.
#[derive(Debug, Clone, PartialEq)]
pub struct RgbdFrame {
    pub index: usize,
    pub timestamp: f64,
    pub image: Image,
    pub depth: Image,
    pub intrinsics: Intrinsics,
}

impl RgbdFrame {
    pub fn new(index: usize, timestamp: f64, image: Image, depth: Image, intrinsics: Intrinsics) -> Result<Self> {
        image.ensure_dims(intrinsics.dims())?;
        depth.ensure_dims(intrinsics.dims())?;
        Ok(Self {
            index,
            timestamp,
            image,
            depth,
            intrinsics,
        })
    }

    pub fn dims(&self) -> (usize, usize) {
        self.image.dims()
    }
}
