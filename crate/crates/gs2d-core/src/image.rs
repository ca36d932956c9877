//! Row-major floating-point image buffers.

use alloc::vec::Vec;

use crate::error::Error;

/// H x W x 3 image, row-major, values nominally in [0, 1] (unbounded above
/// during accumulation; [`ImageBuffer::clamp_unit`] maps back for output).
#[derive(Debug, Clone, PartialEq)]
pub struct ImageBuffer {
    height: usize,
    width: usize,
    data: Vec<[f64; 3]>,
}

impl ImageBuffer {
    pub fn zeros(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            data: alloc::vec![[0.0; 3]; height * width],
        }
    }

    pub fn from_data(height: usize, width: usize, data: Vec<[f64; 3]>) -> Result<Self, Error> {
        if data.len() != height * width {
            return Err(Error::InvalidConfig(alloc::format!(
                "image data length {} != {}x{}",
                data.len(),
                height,
                width
            )));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn constant(height: usize, width: usize, value: [f64; 3]) -> Self {
        Self {
            height,
            width,
            data: alloc::vec![value; height * width],
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> [f64; 3] {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, px: [f64; 3]) {
        self.data[y * self.width + x] = px;
    }

    pub fn pixels(&self) -> &[[f64; 3]] {
        &self.data
    }

    pub fn pixels_mut(&mut self) -> &mut [[f64; 3]] {
        &mut self.data
    }

    /// Clamps every channel into [0, 1].
    pub fn clamp_unit(&mut self) {
        for px in &mut self.data {
            for c in px {
                *c = c.clamp(0.0, 1.0);
            }
        }
    }

    pub fn max_abs_diff(&self, other: &ImageBuffer) -> f64 {
        assert_eq!(self.dims(), other.dims());
        let mut worst = 0.0f64;
        for (a, b) in self.data.iter().zip(&other.data) {
            for c in 0..3 {
                let d = (a[c] - b[c]).abs();
                if d > worst {
                    worst = d;
                }
            }
        }
        worst
    }

    pub fn same_dims(&self, other: &ImageBuffer) -> Result<(), Error> {
        if self.dims() != other.dims() {
            return Err(Error::DimensionMismatch {
                expected: self.dims(),
                got: other.dims(),
            });
        }
        Ok(())
    }
}

/// Single-channel buffer (used for the Y plane).
#[derive(Debug, Clone, PartialEq)]
pub struct Plane {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl Plane {
    pub fn from_data(height: usize, width: usize, data: Vec<f64>) -> Result<Self, Error> {
        if data.len() != height * width {
            return Err(Error::InvalidConfig(alloc::format!(
                "plane data length {} != {}x{}",
                data.len(),
                height,
                width
            )));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    pub fn values(&self) -> &[f64] {
        &self.data
    }

    pub fn same_dims(&self, other: &Plane) -> Result<(), Error> {
        if self.dims() != other.dims() {
            return Err(Error::DimensionMismatch {
                expected: self.dims(),
                got: other.dims(),
            });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn indexing_is_row_major() {
        let mut img = ImageBuffer::zeros(2, 3);
        img.set(2, 1, [1.0, 2.0, 3.0]);
        assert_eq!(img.pixels()[1 * 3 + 2], [1.0, 2.0, 3.0]);
        assert_eq!(img.get(2, 1), [1.0, 2.0, 3.0]);
    }

    #[test]
    fn clamp_bounds_channels() {
        let mut img = ImageBuffer::constant(1, 2, [1.5, -0.25, 0.5]);
        img.clamp_unit();
        assert_eq!(img.get(0, 0), [1.0, 0.0, 0.5]);
    }

    #[test]
    fn from_data_checks_length() {
        assert!(ImageBuffer::from_data(2, 2, alloc::vec![[0.0; 3]; 3]).is_err());
        assert!(Plane::from_data(2, 2, alloc::vec![0.0; 5]).is_err());
    }
}
