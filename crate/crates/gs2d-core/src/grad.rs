//! Analytic backward pass through the rasterizer.
//!
//! Propagates a per-pixel loss gradient through the clamp, the per-Gaussian
//! color contribution, the bivariate density, and finally the activation
//! functions, yielding partials with respect to the raw (pre-activation)
//! parameters. Forward and backward share the same window test, so a
//! Gaussian invisible in the forward pass receives exactly zero gradient.
//!
//! Pixels whose pre-clamp sum saturated the [0, 1] clamp pass zero gradient
//! (clamp subgradient: 0 outside the open interval, 1 inside).
//!
//! Like the forward pass, backward is tile-parallel; per-Gaussian partials
//! are merged in a sequential post-pass over ascending tile index, so results
//! are bit-identical across thread counts.

use alloc::vec::Vec;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::cloud::GaussianCloud;
use crate::error::Error;
use crate::gaussian::{ParamClass, Prepared, RawGaussianParams, RHO_EPS};
use crate::image::ImageBuffer;
use crate::loss::{loss_value, Loss};
use crate::math;
use crate::raster::{render, RenderConfig};

/// Per-Gaussian partials of the loss with respect to raw parameters, indexed
/// like the cloud.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientBuffer {
    grads: Vec<RawGaussianParams>,
}

impl GradientBuffer {
    pub fn zeros(n: usize) -> Self {
        Self {
            grads: alloc::vec![RawGaussianParams::default(); n],
        }
    }

    pub fn from_vec(grads: Vec<RawGaussianParams>) -> Self {
        Self { grads }
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }

    pub fn get(&self, index: usize) -> &RawGaussianParams {
        &self.grads[index]
    }

    pub fn as_slice(&self) -> &[RawGaussianParams] {
        &self.grads
    }

    pub fn all_finite(&self) -> bool {
        self.grads.iter().all(|g| g.non_finite_class().is_none())
    }

    pub fn max_abs(&self) -> f64 {
        self.grads
            .iter()
            .flat_map(|g| g.as_array())
            .fold(0.0, |m, v| math::abs(v).max(m))
    }
}

/// Partials in activated space, accumulated before the activation Jacobians.
#[derive(Debug, Clone, Copy, Default)]
struct ActGrad {
    alpha: f64,
    mu: [f64; 2],
    sigma: [f64; 2],
    rho: f64,
    color: [f64; 3],
}

impl ActGrad {
    fn add(&mut self, other: &ActGrad) {
        self.alpha += other.alpha;
        self.mu[0] += other.mu[0];
        self.mu[1] += other.mu[1];
        self.sigma[0] += other.sigma[0];
        self.sigma[1] += other.sigma[1];
        self.rho += other.rho;
        self.color[0] += other.color[0];
        self.color[1] += other.color[1];
        self.color[2] += other.color[2];
    }
}

struct TileGrads {
    /// Aligned with the tile's bin list.
    grads: Vec<ActGrad>,
}

#[allow(clippy::too_many_arguments)]
fn backward_tile(
    rect: (usize, usize, usize, usize),
    indices: &[u32],
    prepared: &[Prepared],
    cfg: &RenderConfig,
    half_x: f64,
    half_y: f64,
    d_output: &ImageBuffer,
) -> TileGrads {
    let (x0, x1, y0, y1) = rect;
    let no_prune = cfg.ratio >= 1.0;
    let mut grads = alloc::vec![ActGrad::default(); indices.len()];
    for y in y0..y1 {
        let sy = y as f64 / cfg.scale;
        for x in x0..x1 {
            let sx = x as f64 / cfg.scale;

            // Pre-clamp channel sums decide the clamp subgradient gate.
            let mut sum = [0.0f64; 3];
            for &i in indices {
                let p = &prepared[i as usize];
                if !no_prune
                    && !(math::abs(sx - p.mu[0]) < half_x && math::abs(sy - p.mu[1]) < half_y)
                {
                    continue;
                }
                let c = p.contribution(sx, sy);
                sum[0] += c[0];
                sum[1] += c[1];
                sum[2] += c[2];
            }
            let d = d_output.get(x, y);
            let mut upstream = [0.0f64; 3];
            let mut any = false;
            for c in 0..3 {
                if sum[c] > 0.0 && sum[c] < 1.0 && d[c] != 0.0 {
                    upstream[c] = d[c];
                    any = true;
                }
            }
            if !any {
                continue;
            }

            for (slot, &i) in indices.iter().enumerate() {
                let p = &prepared[i as usize];
                if !no_prune
                    && !(math::abs(sx - p.mu[0]) < half_x && math::abs(sy - p.mu[1]) < half_y)
                {
                    continue;
                }
                let (f, a, b) = p.density_parts(sx, sy);

                let g = &mut grads[slot];
                g.alpha += (upstream[0] * p.color[0]
                    + upstream[1] * p.color[1]
                    + upstream[2] * p.color[2])
                    * f;
                let af = p.alpha * f;
                g.color[0] += upstream[0] * af;
                g.color[1] += upstream[1] * af;
                g.color[2] += upstream[2] * af;

                // dL/df, then the density partials.
                let dldf = upstream[0] * p.weight[0]
                    + upstream[1] * p.weight[1]
                    + upstream[2] * p.weight[2];
                let inv_u = p.inv_one_minus_rho2;
                let rho = p.rho;
                let fd = dldf * f;
                g.mu[0] += fd * (a - rho * b) * p.inv_sx * inv_u;
                g.mu[1] += fd * (b - rho * a) * p.inv_sy * inv_u;
                g.sigma[0] += fd * p.inv_sx * ((a * a - rho * a * b) * inv_u - 1.0);
                g.sigma[1] += fd * p.inv_sy * ((b * b - rho * a * b) * inv_u - 1.0);
                let q = a * a - p.two_rho * a * b + b * b;
                g.rho += fd * inv_u * (rho + a * b - rho * q * inv_u);
            }
        }
    }
    TileGrads { grads }
}

/// Gradient of a scalar loss with per-pixel gradient `d_output` with respect
/// to every raw parameter of `cloud`, rendered under `cfg`.
pub fn backward_render(
    cloud: &GaussianCloud,
    cfg: &RenderConfig,
    d_output: &ImageBuffer,
) -> Result<GradientBuffer, Error> {
    cfg.validate()?;
    let act = cloud.activate()?;
    let (out_h, out_w) = cfg.out_dims(act.lr_height(), act.lr_width());
    if d_output.dims() != (out_h, out_w) {
        return Err(Error::DimensionMismatch {
            expected: (out_h, out_w),
            got: d_output.dims(),
        });
    }

    let prepared = crate::raster::prepare_all(&act)?;
    let bins = crate::raster::bin_gaussians(&act, cfg)?;
    let tile = cfg.tile;
    let tiles_x = out_w.div_ceil(tile);
    let tiles_y = out_h.div_ceil(tile);
    let half_x = cfg.ratio * act.lr_width() as f64;
    let half_y = cfg.ratio * act.lr_height() as f64;
    let rect = |t: usize| {
        let tx = t % tiles_x;
        let ty = t / tiles_x;
        let x0 = tx * tile;
        let y0 = ty * tile;
        (x0, (x0 + tile).min(out_w), y0, (y0 + tile).min(out_h))
    };

    let work = |t: usize| {
        backward_tile(rect(t), &bins[t], &prepared, cfg, half_x, half_y, d_output)
    };
    let tile_range = 0..tiles_x * tiles_y;
    #[cfg(feature = "parallel")]
    let tiles: Vec<TileGrads> = tile_range.into_par_iter().map(work).collect();
    #[cfg(not(feature = "parallel"))]
    let tiles: Vec<TileGrads> = tile_range.map(work).collect();

    // Deterministic merge: ascending tile index, ascending Gaussian index.
    let mut act_grads = alloc::vec![ActGrad::default(); cloud.len()];
    for (t, tg) in tiles.iter().enumerate() {
        for (slot, &i) in bins[t].iter().enumerate() {
            act_grads[i as usize].add(&tg.grads[slot]);
        }
    }

    // Activation Jacobians map activated-space partials onto raw parameters.
    let mut out = GradientBuffer::zeros(cloud.len());
    for (i, (ag, (raw, g))) in act_grads
        .iter()
        .zip(cloud.raw().iter().zip(act.gaussians()))
        .enumerate()
    {
        let d_alpha = ag.alpha * g.alpha * (1.0 - g.alpha);
        let d_sx = ag.sigma[0] * g.sigma[0] * (1.0 - g.sigma[0]);
        let d_sy = ag.sigma[1] * g.sigma[1] * (1.0 - g.sigma[1]);
        let th = math::tanh(raw.rho);
        let d_rho = ag.rho * (1.0 - RHO_EPS) * (1.0 - th * th);
        out.grads[i] = RawGaussianParams {
            alpha: d_alpha,
            offset: ag.mu,
            sigma: [d_sx, d_sy],
            rho: d_rho,
            color: [
                ag.color[0] * g.color[0] * (1.0 - g.color[0]),
                ag.color[1] * g.color[1] * (1.0 - g.color[1]),
                ag.color[2] * g.color[2] * (1.0 - g.color[2]),
            ],
        };
    }
    Ok(out)
}

/// Step used by the finite-difference oracle.
pub const FD_STEP: f64 = 1e-5;
/// Relative-error gate for the oracle comparison.
pub const FD_REL_TOL: f64 = 1e-4;
/// Absolute gate used when the analytic value is below [`FD_SMALL`].
pub const FD_ABS_TOL: f64 = 1e-8;
/// Threshold under which the absolute gate applies.
pub const FD_SMALL: f64 = 1e-6;

/// One analytic-vs-numeric comparison.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FdEntry {
    pub index: usize,
    pub class: ParamClass,
    pub analytic: f64,
    pub numeric: f64,
}

impl FdEntry {
    pub fn abs_err(&self) -> f64 {
        math::abs(self.analytic - self.numeric)
    }

    /// Symmetric relative error.
    pub fn rel_err(&self) -> f64 {
        let scale = math::abs(self.analytic).max(math::abs(self.numeric));
        if scale == 0.0 {
            0.0
        } else {
            self.abs_err() / scale
        }
    }

    pub fn passes(&self) -> bool {
        if math::abs(self.analytic) < FD_SMALL {
            self.abs_err() < FD_ABS_TOL
        } else {
            self.rel_err() < FD_REL_TOL
        }
    }
}

/// Worst-case errors for one parameter class.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FdClassStat {
    pub class: ParamClass,
    pub checked: usize,
    pub failures: usize,
    pub max_rel_err: f64,
    pub max_abs_err: f64,
}

/// Outcome of [`finite_diff_check`].
#[derive(Debug, Clone, PartialEq)]
pub struct FdReport {
    pub per_class: [FdClassStat; 9],
    pub checked: usize,
    pub failures: usize,
    pub worst: Option<FdEntry>,
}

impl FdReport {
    fn empty() -> Self {
        let per_class = ParamClass::ALL.map(|class| FdClassStat {
            class,
            checked: 0,
            failures: 0,
            max_rel_err: 0.0,
            max_abs_err: 0.0,
        });
        Self {
            per_class,
            checked: 0,
            failures: 0,
            worst: None,
        }
    }

    fn record(&mut self, entry: FdEntry) {
        let stat = &mut self.per_class[entry.class as usize];
        stat.checked += 1;
        stat.max_rel_err = stat.max_rel_err.max(entry.rel_err());
        stat.max_abs_err = stat.max_abs_err.max(entry.abs_err());
        self.checked += 1;
        if !entry.passes() {
            stat.failures += 1;
            self.failures += 1;
        }
        let is_worse = match &self.worst {
            None => true,
            Some(w) => entry.rel_err() > w.rel_err(),
        };
        if is_worse {
            self.worst = Some(entry);
        }
    }

    pub fn pass(&self) -> bool {
        self.failures == 0
    }
}

pub(crate) fn record_comparisons(
    report: &mut FdReport,
    index: usize,
    analytic: &RawGaussianParams,
    numeric: &RawGaussianParams,
) {
    for class in ParamClass::ALL {
        report.record(FdEntry {
            index,
            class,
            analytic: analytic.get(class),
            numeric: numeric.get(class),
        });
    }
}

/// Verifies `backward_render` against central finite differences of the
/// rendered loss: every raw parameter is perturbed by a fixed step of 1e-5 in
/// both directions and the resulting loss slope is compared with the analytic
/// partial. Intended for small clouds (N <= 200).
pub fn finite_diff_check(
    cloud: &GaussianCloud,
    cfg: &RenderConfig,
    loss: Loss,
    target: &ImageBuffer,
) -> Result<FdReport, Error> {
    if cloud.len() > 200 {
        return Err(Error::InvalidConfig(alloc::format!(
            "finite_diff_check is for small clouds (N <= 200), got {}",
            cloud.len()
        )));
    }
    let output = render(&cloud.activate()?, cfg)?;
    output.same_dims(target)?;
    let (_, d_output) = crate::loss::loss_value_and_grad(loss, &output, target)?;
    let analytic = backward_render(cloud, cfg, &d_output)?;

    let mut report = FdReport::empty();
    let mut probe = cloud.clone();
    for i in 0..cloud.len() {
        let mut numeric = RawGaussianParams::default();
        for class in ParamClass::ALL {
            let base = cloud.raw()[i].get(class);
            probe.raw_mut()[i].set(class, base + FD_STEP);
            let up = loss_value(loss, &render(&probe.activate()?, cfg)?, target)?;
            probe.raw_mut()[i].set(class, base - FD_STEP);
            let down = loss_value(loss, &render(&probe.activate()?, cfg)?, target)?;
            probe.raw_mut()[i].set(class, base);
            numeric.set(class, (up - down) / (2.0 * FD_STEP));
        }
        record_comparisons(&mut report, i, analytic.get(i), &numeric);
    }
    Ok(report)
}
