//! Scale-aware rasterization of a Gaussian cloud.
//!
//! The SR output pixel (x, y) samples the continuous field at the LR
//! coordinate (x/s, y/s) and sums the contributions of every Gaussian whose
//! rendering window covers it:
//!
//! ```text
//! I(x, y; s) = clamp_[0,1]( sum_i G_i(x/s, y/s) )   over i with
//!              |x/s - mu_x| < r*W  and  |y/s - mu_y| < r*H
//! ```
//!
//! The ratio `r <= 1` bounds each Gaussian's support to an axis-aligned
//! window of half-extents (r*W, r*H) LR pixels, cutting the Gaussian-pixel
//! pair count from s^2*H*W*N to about r^2*s^2*H*W*N. `r = 1` means no
//! pruning: every Gaussian reaches every pixel regardless of its center, so
//! the windowed render agrees bit-for-bit with [`render_reference`].
//!
//! Execution is tile-parallel. Tiles own disjoint output regions and each
//! pixel accumulates its Gaussians in ascending index order, so the output is
//! bit-identical across runs and thread counts.

use alloc::vec::Vec;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::cloud::ActivatedCloud;
use crate::error::Error;
use crate::gaussian::Prepared;
use crate::image::ImageBuffer;
use crate::math;

pub const DEFAULT_RATIO: f64 = 0.1;
pub const DEFAULT_TILE: usize = 16;

/// Rendering parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RenderConfig {
    /// Scale factor s >= 1; non-integer values are fine.
    pub scale: f64,
    /// Rasterization ratio r in (0, 1].
    pub ratio: f64,
    /// Tile side length in SR pixels.
    pub tile: usize,
}

impl Default for RenderConfig {
    fn default() -> Self {
        Self {
            scale: 1.0,
            ratio: DEFAULT_RATIO,
            tile: DEFAULT_TILE,
        }
    }
}

impl RenderConfig {
    pub fn new(scale: f64, ratio: f64, tile: usize) -> Self {
        Self { scale, ratio, tile }
    }

    pub fn with_scale(scale: f64) -> Self {
        Self {
            scale,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), Error> {
        if !self.scale.is_finite() || self.scale < 1.0 {
            return Err(Error::InvalidConfig(alloc::format!(
                "scale must be >= 1, got {}",
                self.scale
            )));
        }
        if !self.ratio.is_finite() || self.ratio <= 0.0 || self.ratio > 1.0 {
            return Err(Error::InvalidConfig(alloc::format!(
                "ratio must lie in (0, 1], got {}",
                self.ratio
            )));
        }
        if self.tile == 0 {
            return Err(Error::InvalidConfig("tile must be >= 1".into()));
        }
        Ok(())
    }

    /// Output dimensions (floor(s*H), floor(s*W)).
    pub fn out_dims(&self, lr_height: usize, lr_width: usize) -> (usize, usize) {
        (
            math::floor(self.scale * lr_height as f64) as usize,
            math::floor(self.scale * lr_width as f64) as usize,
        )
    }
}

/// Cost counters from one render.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RenderStats {
    /// Gaussian-pixel pairs that passed the window test and were summed.
    pub gaussian_pixel_pairs: u64,
}

struct TileGrid {
    out_h: usize,
    out_w: usize,
    tile: usize,
    tiles_x: usize,
    tiles_y: usize,
}

impl TileGrid {
    fn new(out_h: usize, out_w: usize, tile: usize) -> Self {
        Self {
            out_h,
            out_w,
            tile,
            tiles_x: out_w.div_ceil(tile),
            tiles_y: out_h.div_ceil(tile),
        }
    }

    fn len(&self) -> usize {
        self.tiles_x * self.tiles_y
    }

    /// Pixel rectangle of tile `t`: ([x0, x1), [y0, y1)).
    fn rect(&self, t: usize) -> (usize, usize, usize, usize) {
        let tx = t % self.tiles_x;
        let ty = t / self.tiles_x;
        let x0 = tx * self.tile;
        let y0 = ty * self.tile;
        (
            x0,
            (x0 + self.tile).min(self.out_w),
            y0,
            (y0 + self.tile).min(self.out_h),
        )
    }
}

/// Largest integer strictly below `v`.
fn int_below(v: f64) -> i64 {
    let c = math::ceil(v);
    (if c == v { c - 1.0 } else { math::floor(v) }) as i64
}

/// Smallest integer strictly above `v`.
fn int_above(v: f64) -> i64 {
    (math::floor(v) + 1.0) as i64
}

/// Assigns each Gaussian to the tiles its rendering window overlaps.
///
/// Gaussian i lands in tile T exactly when some SR pixel of T satisfies the
/// window test; each tile's list is ascending in i. With r >= 1 every
/// Gaussian lands in every tile.
pub fn bin_gaussians(cloud: &ActivatedCloud, cfg: &RenderConfig) -> Result<Vec<Vec<u32>>, Error> {
    cfg.validate()?;
    let (out_h, out_w) = cfg.out_dims(cloud.lr_height(), cloud.lr_width());
    let grid = TileGrid::new(out_h, out_w, cfg.tile);
    Ok(bin_into(cloud, cfg, &grid))
}

fn bin_into(cloud: &ActivatedCloud, cfg: &RenderConfig, grid: &TileGrid) -> Vec<Vec<u32>> {
    let n_tiles = grid.len();
    if cfg.ratio >= 1.0 {
        let all: Vec<u32> = (0..cloud.len() as u32).collect();
        return alloc::vec![all; n_tiles];
    }
    let mut bins: Vec<Vec<u32>> = alloc::vec![Vec::new(); n_tiles];
    let half_x = cfg.ratio * cloud.lr_width() as f64;
    let half_y = cfg.ratio * cloud.lr_height() as f64;
    let s = cfg.scale;
    for (i, g) in cloud.gaussians().iter().enumerate() {
        // SR pixels x with |x/s - mu_x| < half_x, i.e. strictly inside
        // (s*(mu_x - half_x), s*(mu_x + half_x)); same for y.
        let x0 = int_above(s * (g.mu[0] - half_x)).max(0);
        let x1 = int_below(s * (g.mu[0] + half_x)).min(grid.out_w as i64 - 1);
        let y0 = int_above(s * (g.mu[1] - half_y)).max(0);
        let y1 = int_below(s * (g.mu[1] + half_y)).min(grid.out_h as i64 - 1);
        if x0 > x1 || y0 > y1 {
            continue;
        }
        let (tx0, tx1) = (x0 as usize / grid.tile, x1 as usize / grid.tile);
        let (ty0, ty1) = (y0 as usize / grid.tile, y1 as usize / grid.tile);
        for ty in ty0..=ty1 {
            for tx in tx0..=tx1 {
                bins[ty * grid.tiles_x + tx].push(i as u32);
            }
        }
    }
    bins
}

struct TileOut {
    pixels: Vec<[f64; 3]>,
    pairs: u64,
}

/// Accumulates one tile. `indices` must be ascending; the window test is
/// re-evaluated per pixel, so over-wide bins cannot change the output.
fn run_tile(
    grid: &TileGrid,
    t: usize,
    indices: &[u32],
    prepared: &[Prepared],
    cfg: &RenderConfig,
    half_x: f64,
    half_y: f64,
) -> TileOut {
    let (x0, x1, y0, y1) = grid.rect(t);
    let no_prune = cfg.ratio >= 1.0;
    let mut pixels = Vec::with_capacity((x1 - x0) * (y1 - y0));
    let mut pairs = 0u64;
    for y in y0..y1 {
        let sy = y as f64 / cfg.scale;
        for x in x0..x1 {
            let sx = x as f64 / cfg.scale;
            let mut acc = [0.0f64; 3];
            for &i in indices {
                let p = &prepared[i as usize];
                if !no_prune
                    && !(math::abs(sx - p.mu[0]) < half_x && math::abs(sy - p.mu[1]) < half_y)
                {
                    continue;
                }
                let c = p.contribution(sx, sy);
                acc[0] += c[0];
                acc[1] += c[1];
                acc[2] += c[2];
                pairs += 1;
            }
            pixels.push(acc);
        }
    }
    TileOut { pixels, pairs }
}

pub(crate) fn prepare_all(cloud: &ActivatedCloud) -> Result<Vec<Prepared>, Error> {
    cloud.gaussians().iter().map(Prepared::new).collect()
}

/// Unclamped accumulation shared by the public render entry points.
fn accumulate(cloud: &ActivatedCloud, cfg: &RenderConfig) -> Result<(ImageBuffer, RenderStats), Error> {
    cfg.validate()?;
    let (out_h, out_w) = cfg.out_dims(cloud.lr_height(), cloud.lr_width());
    let grid = TileGrid::new(out_h, out_w, cfg.tile);
    let prepared = prepare_all(cloud)?;
    let bins = bin_into(cloud, cfg, &grid);
    let half_x = cfg.ratio * cloud.lr_width() as f64;
    let half_y = cfg.ratio * cloud.lr_height() as f64;

    let tile_range = 0..grid.len();
    let work = |t: usize| run_tile(&grid, t, &bins[t], &prepared, cfg, half_x, half_y);
    #[cfg(feature = "parallel")]
    let tiles: Vec<TileOut> = tile_range.into_par_iter().map(work).collect();
    #[cfg(not(feature = "parallel"))]
    let tiles: Vec<TileOut> = tile_range.map(work).collect();

    let mut img = ImageBuffer::zeros(out_h, out_w);
    let mut pairs = 0u64;
    for (t, tile) in tiles.iter().enumerate() {
        let (x0, x1, y0, y1) = grid.rect(t);
        let mut k = 0;
        for y in y0..y1 {
            for x in x0..x1 {
                img.set(x, y, tile.pixels[k]);
                k += 1;
            }
        }
        pairs += tile.pairs;
    }
    Ok((img, RenderStats { gaussian_pixel_pairs: pairs }))
}

/// Renders the cloud at `cfg.scale`, output clamped to [0, 1].
///
/// An empty cloud renders to an all-zero image.
pub fn render(cloud: &ActivatedCloud, cfg: &RenderConfig) -> Result<ImageBuffer, Error> {
    let (mut img, _) = accumulate(cloud, cfg)?;
    img.clamp_unit();
    Ok(img)
}

/// Like [`render`] but returns the pre-clamp sums.
pub fn render_raw(cloud: &ActivatedCloud, cfg: &RenderConfig) -> Result<ImageBuffer, Error> {
    Ok(accumulate(cloud, cfg)?.0)
}

/// [`render`] plus cost counters.
pub fn render_with_stats(
    cloud: &ActivatedCloud,
    cfg: &RenderConfig,
) -> Result<(ImageBuffer, RenderStats), Error> {
    let (mut img, stats) = accumulate(cloud, cfg)?;
    img.clamp_unit();
    Ok((img, stats))
}

/// Correctness oracle: the exact unpruned sum, computed sequentially without
/// tiling. Agrees bit-for-bit with `render` at r = 1.
pub fn render_reference(cloud: &ActivatedCloud, cfg: &RenderConfig) -> Result<ImageBuffer, Error> {
    cfg.validate()?;
    let (out_h, out_w) = cfg.out_dims(cloud.lr_height(), cloud.lr_width());
    let prepared = prepare_all(cloud)?;
    let mut img = ImageBuffer::zeros(out_h, out_w);
    for y in 0..out_h {
        let sy = y as f64 / cfg.scale;
        for x in 0..out_w {
            let sx = x as f64 / cfg.scale;
            let mut acc = [0.0f64; 3];
            for p in &prepared {
                let c = p.contribution(sx, sy);
                acc[0] += c[0];
                acc[1] += c[1];
                acc[2] += c[2];
            }
            img.set(x, y, acc);
        }
    }
    img.clamp_unit();
    Ok(img)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cloud::{ActivatedCloud, GaussianCloud};
    use crate::gaussian::{eval_contribution, Gaussian2D};

    fn single(mu: [f64; 2], sigma: f64, h: usize, w: usize) -> ActivatedCloud {
        ActivatedCloud::new(
            h,
            w,
            alloc::vec![Gaussian2D {
                alpha: 1.0,
                mu,
                sigma: [sigma, sigma],
                rho: 0.0,
                color: [0.7, 0.7, 0.7],
            }],
        )
        .unwrap()
    }

    #[test]
    fn invalid_configs_rejected() {
        let cloud = single([1.0, 1.0], 0.4, 2, 2);
        for cfg in [
            RenderConfig::new(0.5, 0.1, 16),
            RenderConfig::new(2.0, 0.0, 16),
            RenderConfig::new(2.0, 1.5, 16),
            RenderConfig::new(2.0, 0.1, 0),
        ] {
            assert!(render(&cloud, &cfg).is_err(), "{cfg:?}");
        }
    }

    #[test]
    fn out_dims_floor() {
        let cfg = RenderConfig::with_scale(2.7);
        assert_eq!(cfg.out_dims(3, 5), (8, 13));
        assert_eq!(RenderConfig::with_scale(1.0).out_dims(1, 1), (1, 1));
    }

    #[test]
    fn empty_cloud_renders_zero() {
        let cloud = ActivatedCloud::new(3, 4, alloc::vec![]).unwrap();
        let img = render(&cloud, &RenderConfig::with_scale(2.0)).unwrap();
        assert_eq!(img.dims(), (6, 8));
        assert!(img.pixels().iter().all(|p| *p == [0.0; 3]));
        let reference = render_reference(&cloud, &RenderConfig::with_scale(2.0)).unwrap();
        assert_eq!(img, reference);
    }

    #[test]
    fn single_gaussian_equals_pointwise_contribution() {
        let cloud = single([1.2, 0.7], 0.35, 2, 3);
        let cfg = RenderConfig::new(1.0, 1.0, 16);
        let img = render(&cloud, &cfg).unwrap();
        let g = &cloud.gaussians()[0];
        for y in 0..2 {
            for x in 0..3 {
                let want = eval_contribution(g, x as f64, y as f64).unwrap();
                assert_eq!(img.get(x, y), want.map(|v| v.clamp(0.0, 1.0)));
            }
        }
    }

    #[test]
    fn two_gaussian_probe_matches_hand_sum() {
        let mut gs = single([0.6, 0.8], 0.3, 3, 3).gaussians().to_vec();
        gs.push(Gaussian2D {
            alpha: 0.4,
            mu: [2.1, 1.4],
            sigma: [0.5, 0.25],
            rho: 0.3,
            color: [0.2, 0.9, 0.1],
        });
        let cloud = ActivatedCloud::new(3, 3, gs).unwrap();
        let cfg = RenderConfig::new(1.0, 1.0, 16);
        let img = render_reference(&cloud, &cfg).unwrap();
        let a = eval_contribution(&cloud.gaussians()[0], 1.0, 1.0).unwrap();
        let b = eval_contribution(&cloud.gaussians()[1], 1.0, 1.0).unwrap();
        let want = [a[0] + b[0], a[1] + b[1], a[2] + b[2]].map(|v| v.clamp(0.0, 1.0));
        assert_eq!(img.get(1, 1), want);
    }

    #[test]
    fn r1_matches_reference_bit_exactly_even_offscreen() {
        // A center far outside the frame would fail the window test at r = 1;
        // r = 1 must mean "no pruning" for the oracle identity to hold.
        let mut gs = alloc::vec![];
        for k in 0..5 {
            gs.push(Gaussian2D {
                alpha: 0.9,
                mu: [k as f64 * 3.0 - 4.0, 1.0 + k as f64],
                sigma: [0.3 + 0.1 * k as f64, 0.9 - 0.1 * k as f64],
                rho: 0.2 * k as f64 - 0.4,
                color: [0.5, 0.8, 0.2],
            });
        }
        let cloud = ActivatedCloud::new(4, 4, gs).unwrap();
        for scale in [1.0, 1.7, 3.0] {
            let cfg = RenderConfig::new(scale, 1.0, 3);
            let tiled = render(&cloud, &cfg).unwrap();
            let reference = render_reference(&cloud, &cfg).unwrap();
            assert_eq!(tiled, reference);
        }
    }

    #[test]
    fn pruned_render_matches_unpruned_within_tail_bound() {
        // sigma <= 0.5 and r*min(H,W) >= 6 keeps the truncation below 1e-6.
        let cloud_raw = GaussianCloud::zeroed(16, 16, 1).unwrap();
        let cloud = cloud_raw.activate().unwrap();
        let full = render(&cloud, &RenderConfig::new(2.0, 1.0, 16)).unwrap();
        let pruned = render(&cloud, &RenderConfig::new(2.0, 0.5, 16)).unwrap();
        assert!(full.max_abs_diff(&pruned) < 1e-6);
    }

    #[test]
    fn integer_scale_subsamples_exactly() {
        let cloud = single([1.3, 0.4], 0.45, 3, 2);
        let base = render(&cloud, &RenderConfig::new(1.0, 0.4, 16)).unwrap();
        for s in [2usize, 3, 4] {
            let up = render(&cloud, &RenderConfig::new(s as f64, 0.4, 16)).unwrap();
            for y in 0..3 {
                for x in 0..2 {
                    assert_eq!(up.get(s * x, s * y), base.get(x, y), "s={s} px=({x},{y})");
                }
            }
        }
    }

    #[test]
    fn bins_r1_cover_every_tile() {
        let cloud = single([100.0, -50.0], 0.2, 4, 6);
        let cfg = RenderConfig::new(2.0, 1.0, 4);
        let bins = bin_gaussians(&cloud, &cfg).unwrap();
        assert_eq!(bins.len(), 2 * 3);
        assert!(bins.iter().all(|b| b.as_slice() == [0]));
    }

    #[test]
    fn bins_small_window_stays_local() {
        // Window half-extent r*W*s = 0.05*20*1 = 1 SR pixel around the origin.
        let cloud = single([0.0, 0.0], 0.2, 20, 20);
        let cfg = RenderConfig::new(1.0, 0.05, 4);
        let bins = bin_gaussians(&cloud, &cfg).unwrap();
        let tiles_x = 5;
        for (t, bin) in bins.iter().enumerate() {
            if t == 0 {
                assert_eq!(bin.as_slice(), [0]);
            } else {
                assert!(bin.is_empty(), "tile {t} (tx={},ty={})", t % tiles_x, t / tiles_x);
            }
        }
    }

    #[test]
    fn binned_sum_equals_reference_at_r1() {
        let mut gs = alloc::vec![];
        for k in 0..7 {
            gs.push(Gaussian2D {
                alpha: 0.3 + 0.09 * k as f64,
                mu: [0.37 * k as f64, 2.9 - 0.4 * k as f64],
                sigma: [0.2 + 0.07 * k as f64, 0.6 - 0.05 * k as f64],
                rho: -0.5 + 0.15 * k as f64,
                color: [0.1 * k as f64, 1.0 - 0.1 * k as f64, 0.5],
            });
        }
        let cloud = ActivatedCloud::new(3, 3, gs).unwrap();
        let cfg = RenderConfig::new(2.5, 1.0, 2);
        assert_eq!(
            render(&cloud, &cfg).unwrap(),
            render_reference(&cloud, &cfg).unwrap()
        );
    }

    #[test]
    fn pair_count_unpruned_is_n_times_pixels() {
        let cloud_raw = GaussianCloud::zeroed(4, 5, 1).unwrap();
        let cloud = cloud_raw.activate().unwrap();
        let cfg = RenderConfig::new(2.0, 1.0, 16);
        let (_, stats) = render_with_stats(&cloud, &cfg).unwrap();
        assert_eq!(stats.gaussian_pixel_pairs, (20 * 8 * 10) as u64);
    }

    #[test]
    fn pair_count_grows_with_ratio() {
        let cloud_raw = GaussianCloud::zeroed(16, 16, 1).unwrap();
        let cloud = cloud_raw.activate().unwrap();
        let mut last = 0u64;
        for r in [0.05, 0.1, 0.2, 0.4, 1.0] {
            let (_, stats) =
                render_with_stats(&cloud, &RenderConfig::new(1.0, r, 16)).unwrap();
            assert!(stats.gaussian_pixel_pairs >= last, "r={r}");
            last = stats.gaussian_pixel_pairs;
        }
    }

    #[test]
    fn strict_window_bounds_are_exact() {
        assert_eq!(int_above(2.0), 3);
        assert_eq!(int_above(2.3), 3);
        assert_eq!(int_above(-0.5), 0);
        assert_eq!(int_below(2.0), 1);
        assert_eq!(int_below(2.3), 2);
        assert_eq!(int_below(-0.5), -1);
    }
}
