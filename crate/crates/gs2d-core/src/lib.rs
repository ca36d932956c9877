//! Continuous 2D Gaussian image representation.
//!
//! An image is modelled as a cloud of anisotropic 2D Gaussians, each with an
//! opacity, center, per-axis standard deviation, correlation coefficient and
//! peak RGB color. The cloud is a resolution-free representation: rendering
//! at scale factor `s` samples the same continuous field at `s`-times denser
//! positions, so one fitted cloud can be rasterized at any (also non-integer)
//! magnification.
//!
//! The crate provides
//!
//! - the Gaussian parameterization and its activation mapping from
//!   unconstrained optimization variables ([`gaussian`]),
//! - a scale-aware, windowed (pruned) tile-parallel rasterizer with a
//!   sequential unpruned reference path ([`raster`]),
//! - the analytic backward pass through the rasterizer plus a
//!   finite-difference oracle ([`grad`]),
//! - a direct per-image Adam fitter ([`fit`]),
//! - Y-channel PSNR/SSIM and antialiased bicubic resampling ([`metrics`]).
//!
//! The crate is `no_std`-compatible (with `alloc`); enable the `libm` feature
//! instead of `std` for freestanding builds. All reference math is `f64`.

#![cfg_attr(not(feature = "std"), no_std)]
#![forbid(unsafe_code)]

#[cfg(all(not(feature = "std"), not(feature = "libm")))]
compile_error!("gs2d-core needs either the `std` or the `libm` feature for float math");

extern crate alloc;

pub mod cloud;
pub mod error;
pub mod fit;
pub mod gaussian;
pub mod grad;
pub mod image;
pub mod loss;
mod math;
pub mod metrics;
pub mod raster;

pub use cloud::{ActivatedCloud, GaussianCloud, ReferencePosition};
pub use error::Error;
pub use fit::{fit, init_cloud, AdamState, FitConfig, FitReport};
pub use gaussian::{
    activate, eval_contribution, eval_density, Gaussian2D, ParamClass, RawGaussianParams, RHO_EPS,
};
pub use grad::{backward_render, finite_diff_check, FdReport, GradientBuffer};
pub use image::{ImageBuffer, Plane};
pub use loss::Loss;
pub use metrics::{bicubic_resize, psnr, rgb_to_y, ssim, MetricReport};
pub use raster::{
    bin_gaussians, render, render_raw, render_reference, render_with_stats, RenderConfig,
    RenderStats,
};
