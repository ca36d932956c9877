//! Gaussian clouds: N raw Gaussians anchored to an equal-interval reference
//! grid over the LR frame.

use alloc::vec::Vec;

use crate::error::Error;
use crate::gaussian::{activate_unchecked, Gaussian2D, RawGaussianParams};

/// Fixed anchor point of one Gaussian, in LR-pixel coordinates (x, y).
///
/// Over a cloud the anchors form a sqrt(m) x sqrt(m) sub-grid per LR pixel,
/// so they lie in [0, W) x [0, H).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferencePosition {
    pub pos: [f64; 2],
}

/// Integer square root if `m` is a perfect square.
pub(crate) fn perfect_sqrt(m: usize) -> Option<usize> {
    let r = (m as f64).sqrt().round() as usize;
    (r * r == m).then_some(r)
}

/// Equal-interval reference grid: for each LR pixel, a sqrt(m) x sqrt(m)
/// sub-grid at offsets ((i + 0.5)/sqrt(m), (j + 0.5)/sqrt(m)).
///
/// Ordering is row-major over LR pixels, then row-major over the sub-grid,
/// so index = (py * W + px) * m + (sub_y * sqrt(m) + sub_x).
pub fn reference_grid(height: usize, width: usize, density: usize) -> Result<Vec<ReferencePosition>, Error> {
    let root = perfect_sqrt(density).ok_or_else(|| {
        Error::InvalidConfig(alloc::format!(
            "density must be a perfect square, got {density}"
        ))
    })?;
    if height == 0 || width == 0 || density == 0 {
        return Err(Error::InvalidConfig(
            "reference grid needs height, width and density >= 1".into(),
        ));
    }
    let step = 1.0 / root as f64;
    let mut refs = Vec::with_capacity(height * width * density);
    for py in 0..height {
        for px in 0..width {
            for sub_y in 0..root {
                for sub_x in 0..root {
                    refs.push(ReferencePosition {
                        pos: [
                            px as f64 + (sub_x as f64 + 0.5) * step,
                            py as f64 + (sub_y as f64 + 0.5) * step,
                        ],
                    });
                }
            }
        }
    }
    Ok(refs)
}

/// N raw Gaussians plus the LR frame geometry they represent.
///
/// Invariant: `raw.len() == refs.len() == m * H * W`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianCloud {
    height: usize,
    width: usize,
    density: usize,
    raw: Vec<RawGaussianParams>,
    refs: Vec<ReferencePosition>,
}

impl GaussianCloud {
    /// Builds a cloud from raw parameters; the reference grid is recomputed
    /// from the geometry. `raw.len()` must equal `density * height * width`.
    pub fn from_raw(
        height: usize,
        width: usize,
        density: usize,
        raw: Vec<RawGaussianParams>,
    ) -> Result<Self, Error> {
        let refs = reference_grid(height, width, density)?;
        if raw.len() != refs.len() {
            return Err(Error::InvalidConfig(alloc::format!(
                "cloud needs {} gaussians for {}x{} at density {}, got {}",
                refs.len(),
                height,
                width,
                density,
                raw.len()
            )));
        }
        Ok(Self {
            height,
            width,
            density,
            raw,
            refs,
        })
    }

    /// All-default (zero) raw parameters.
    pub fn zeroed(height: usize, width: usize, density: usize) -> Result<Self, Error> {
        let refs = reference_grid(height, width, density)?;
        let raw = alloc::vec![RawGaussianParams::default(); refs.len()];
        Ok(Self {
            height,
            width,
            density,
            raw,
            refs,
        })
    }

    pub fn len(&self) -> usize {
        self.raw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.raw.is_empty()
    }

    pub fn lr_height(&self) -> usize {
        self.height
    }

    pub fn lr_width(&self) -> usize {
        self.width
    }

    pub fn density(&self) -> usize {
        self.density
    }

    pub fn raw(&self) -> &[RawGaussianParams] {
        &self.raw
    }

    pub(crate) fn raw_mut(&mut self) -> &mut [RawGaussianParams] {
        &mut self.raw
    }

    pub fn refs(&self) -> &[ReferencePosition] {
        &self.refs
    }

    /// First Gaussian with a non-finite raw field, if any.
    pub fn non_finite(&self) -> Option<(usize, crate::gaussian::ParamClass)> {
        self.raw
            .iter()
            .enumerate()
            .find_map(|(i, r)| r.non_finite_class().map(|c| (i, c)))
    }

    /// Activates every Gaussian, rejecting non-finite raw values.
    pub fn activate(&self) -> Result<ActivatedCloud, Error> {
        if let Some((index, class)) = self.non_finite() {
            return Err(Error::NonFiniteParam { index, class });
        }
        let gaussians = self
            .raw
            .iter()
            .zip(&self.refs)
            .map(|(raw, reference)| activate_unchecked(raw, reference))
            .collect();
        Ok(ActivatedCloud {
            height: self.height,
            width: self.width,
            gaussians,
        })
    }
}

/// Activated Gaussians plus the LR frame they were fitted in. This is all the
/// renderer needs; clouds loaded from files without raw parameters arrive in
/// this form.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivatedCloud {
    height: usize,
    width: usize,
    gaussians: Vec<Gaussian2D>,
}

impl ActivatedCloud {
    pub fn new(height: usize, width: usize, gaussians: Vec<Gaussian2D>) -> Result<Self, Error> {
        if height == 0 || width == 0 {
            return Err(Error::InvalidConfig("LR frame must be at least 1x1".into()));
        }
        for (index, g) in gaussians.iter().enumerate() {
            let fields = [
                g.alpha, g.mu[0], g.mu[1], g.sigma[0], g.sigma[1], g.rho, g.color[0], g.color[1],
                g.color[2],
            ];
            for (v, class) in fields.iter().zip(crate::gaussian::ParamClass::ALL) {
                if !v.is_finite() {
                    return Err(Error::NonFiniteParam { index, class });
                }
            }
        }
        Ok(Self {
            height,
            width,
            gaussians,
        })
    }

    pub fn lr_height(&self) -> usize {
        self.height
    }

    pub fn lr_width(&self) -> usize {
        self.width
    }

    pub fn gaussians(&self) -> &[Gaussian2D] {
        &self.gaussians
    }

    pub fn len(&self) -> usize {
        self.gaussians.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gaussians.is_empty()
    }

    /// Concatenates two clouds over the same LR frame (B's Gaussians after A's).
    pub fn concat(&self, other: &ActivatedCloud) -> Result<ActivatedCloud, Error> {
        if (self.height, self.width) != (other.height, other.width) {
            return Err(Error::DimensionMismatch {
                expected: (self.height, self.width),
                got: (other.height, other.width),
            });
        }
        let mut gaussians = self.gaussians.clone();
        gaussians.extend_from_slice(&other.gaussians);
        ActivatedCloud::new(self.height, self.width, gaussians)
    }
}
