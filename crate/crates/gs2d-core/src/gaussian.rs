//! Gaussian parameterization, activation mapping, and pointwise evaluation.
//!
//! A Gaussian's contribution to the color at position (x, y) is
//! `alpha * color * f(x, y)` where `f` is the bivariate normal density with
//! per-axis standard deviations `sigma` and correlation coefficient `rho`:
//!
//! ```text
//! f(x,y) = (2 pi sx sy sqrt(1-rho^2))^-1
//!          * exp(-(dx^2/sx^2 - 2 rho dx dy/(sx sy) + dy^2/sy^2) / (2 (1-rho^2)))
//! ```
//!
//! with `dx = x - mu_x`, `dy = y - mu_y`. Positions and standard deviations
//! are in LR-pixel units: x runs horizontally (paired with the image width),
//! y vertically (paired with the height).

use crate::cloud::ReferencePosition;
use crate::error::Error;
use crate::math;

/// Activated `rho` is scaled into `(-1 + RHO_EPS, 1 - RHO_EPS)` so
/// `1 - rho^2` stays bounded away from zero in the density and its gradients.
pub const RHO_EPS: f64 = 1e-4;

/// Names one scalar slot of [`RawGaussianParams`], in storage order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ParamClass {
    Alpha,
    MuX,
    MuY,
    SigmaX,
    SigmaY,
    Rho,
    ColorR,
    ColorG,
    ColorB,
}

impl ParamClass {
    /// All nine classes in storage order.
    pub const ALL: [ParamClass; 9] = [
        ParamClass::Alpha,
        ParamClass::MuX,
        ParamClass::MuY,
        ParamClass::SigmaX,
        ParamClass::SigmaY,
        ParamClass::Rho,
        ParamClass::ColorR,
        ParamClass::ColorG,
        ParamClass::ColorB,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ParamClass::Alpha => "alpha",
            ParamClass::MuX => "mu_x",
            ParamClass::MuY => "mu_y",
            ParamClass::SigmaX => "sigma_x",
            ParamClass::SigmaY => "sigma_y",
            ParamClass::Rho => "rho",
            ParamClass::ColorR => "color_r",
            ParamClass::ColorG => "color_g",
            ParamClass::ColorB => "color_b",
        }
    }
}

impl core::fmt::Display for ParamClass {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.name())
    }
}

/// Unconstrained optimization variables for one Gaussian (pre-activation).
///
/// `offset` is the position offset `o` in LR-pixel units; the activated
/// center is `mu = reference + offset`. The remaining fields map through
/// sigmoid (`alpha`, `sigma`, `color`) or scaled tanh (`rho`).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RawGaussianParams {
    pub alpha: f64,
    pub offset: [f64; 2],
    pub sigma: [f64; 2],
    pub rho: f64,
    pub color: [f64; 3],
}

impl RawGaussianParams {
    /// The nine scalars in canonical order
    /// (alpha, off_x, off_y, sig_x, sig_y, rho, c_r, c_g, c_b).
    pub fn as_array(&self) -> [f64; 9] {
        [
            self.alpha,
            self.offset[0],
            self.offset[1],
            self.sigma[0],
            self.sigma[1],
            self.rho,
            self.color[0],
            self.color[1],
            self.color[2],
        ]
    }

    pub fn from_array(v: [f64; 9]) -> Self {
        Self {
            alpha: v[0],
            offset: [v[1], v[2]],
            sigma: [v[3], v[4]],
            rho: v[5],
            color: [v[6], v[7], v[8]],
        }
    }

    pub fn get(&self, class: ParamClass) -> f64 {
        self.as_array()[class as usize]
    }

    pub fn set(&mut self, class: ParamClass, value: f64) {
        let mut v = self.as_array();
        v[class as usize] = value;
        *self = Self::from_array(v);
    }

    /// First non-finite field, if any.
    pub fn non_finite_class(&self) -> Option<ParamClass> {
        self.as_array()
            .iter()
            .zip(ParamClass::ALL)
            .find(|(v, _)| !v.is_finite())
            .map(|(_, c)| c)
    }
}

/// Activated, physically meaningful Gaussian properties.
///
/// Post-activation invariants: `alpha` and each `color` channel in (0, 1),
/// each `sigma` in (0, 1) LR pixels, `|rho| <= 1 - RHO_EPS`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gaussian2D {
    pub alpha: f64,
    /// Center in LR-pixel coordinates, (x, y).
    pub mu: [f64; 2],
    /// Per-axis standard deviation in LR pixels, (x, y).
    pub sigma: [f64; 2],
    pub rho: f64,
    pub color: [f64; 3],
}

/// Maps raw parameters to an activated Gaussian.
///
/// sigmoid for alpha, color and sigma; `(1 - RHO_EPS) * tanh` for rho; the
/// position offset passes through unactivated: `mu = reference + offset`.
pub fn activate(raw: &RawGaussianParams, reference: &ReferencePosition) -> Result<Gaussian2D, Error> {
    if let Some(class) = raw.non_finite_class() {
        return Err(Error::NonFiniteParam { index: 0, class });
    }
    Ok(activate_unchecked(raw, reference))
}

pub(crate) fn activate_unchecked(
    raw: &RawGaussianParams,
    reference: &ReferencePosition,
) -> Gaussian2D {
    Gaussian2D {
        alpha: math::sigmoid(raw.alpha),
        mu: [
            reference.pos[0] + raw.offset[0],
            reference.pos[1] + raw.offset[1],
        ],
        sigma: [math::sigmoid(raw.sigma[0]), math::sigmoid(raw.sigma[1])],
        rho: (1.0 - RHO_EPS) * math::tanh(raw.rho),
        color: [
            math::sigmoid(raw.color[0]),
            math::sigmoid(raw.color[1]),
            math::sigmoid(raw.color[2]),
        ],
    }
}

/// Per-Gaussian constants precomputed once so the rasterizer's inner loop and
/// the public pointwise evaluators share one arithmetic path bit-for-bit.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Prepared {
    pub mu: [f64; 2],
    pub inv_sx: f64,
    pub inv_sy: f64,
    pub two_rho: f64,
    /// -1 / (2 (1 - rho^2))
    pub exp_coeff: f64,
    /// (2 pi sx sy sqrt(1 - rho^2))^-1
    pub norm: f64,
    /// alpha * color, premultiplied.
    pub weight: [f64; 3],
    pub alpha: f64,
    pub color: [f64; 3],
    pub rho: f64,
    /// 1 / (1 - rho^2)
    pub inv_one_minus_rho2: f64,
}

impl Prepared {
    pub(crate) fn new(g: &Gaussian2D) -> Result<Self, Error> {
        if !(math::abs(g.rho) < 1.0) || !(g.sigma[0] > 0.0) || !(g.sigma[1] > 0.0) {
            return Err(Error::DegenerateCovariance);
        }
        let one_minus_rho2 = 1.0 - g.rho * g.rho;
        Ok(Self {
            mu: g.mu,
            inv_sx: 1.0 / g.sigma[0],
            inv_sy: 1.0 / g.sigma[1],
            two_rho: 2.0 * g.rho,
            exp_coeff: -0.5 / one_minus_rho2,
            norm: 1.0
                / (2.0 * math::PI * g.sigma[0] * g.sigma[1] * math::sqrt(one_minus_rho2)),
            weight: [
                g.alpha * g.color[0],
                g.alpha * g.color[1],
                g.alpha * g.color[2],
            ],
            alpha: g.alpha,
            color: g.color,
            rho: g.rho,
            inv_one_minus_rho2: 1.0 / one_minus_rho2,
        })
    }

    /// Density f(x, y). Also returns the normalized displacements
    /// (dx/sx, dy/sy) the backward pass reuses.
    #[inline(always)]
    pub(crate) fn density_parts(&self, x: f64, y: f64) -> (f64, f64, f64) {
        let a = (x - self.mu[0]) * self.inv_sx;
        let b = (y - self.mu[1]) * self.inv_sy;
        let q = a * a - self.two_rho * a * b + b * b;
        (self.norm * math::exp(self.exp_coeff * q), a, b)
    }

    #[inline(always)]
    pub(crate) fn density(&self, x: f64, y: f64) -> f64 {
        self.density_parts(x, y).0
    }

    #[inline(always)]
    pub(crate) fn contribution(&self, x: f64, y: f64) -> [f64; 3] {
        let f = self.density(x, y);
        [self.weight[0] * f, self.weight[1] * f, self.weight[2] * f]
    }
}

/// Density of the 2D Gaussian at (x, y) in LR continuous coordinates.
///
/// Non-negative and finite for a positive-definite covariance; errors when
/// `|rho| >= 1` or a sigma is non-positive.
pub fn eval_density(g: &Gaussian2D, x: f64, y: f64) -> Result<f64, Error> {
    Ok(Prepared::new(g)?.density(x, y))
}

/// Per-channel color contribution `alpha * color * f(x, y)`.
pub fn eval_contribution(g: &Gaussian2D, x: f64, y: f64) -> Result<[f64; 3], Error> {
    Ok(Prepared::new(g)?.contribution(x, y))
}
