//! Software orthographic raycaster orbiting the volume's z axis, with surface and additive
//! modes, plus entropy-driven selection of the most informative view.
//!
//! The volume is centered at the origin and scaled so its longest axis spans one unit. The
//! camera sits in the xy-plane at `azimuth_deg` and looks at the origin; image rows run from
//! +z (top) to -z. Every ray takes `steps` samples evenly spaced across the horizontal diagonal
//! of the volume, so the sample pattern is the same at every azimuth.

mod entropy;
mod snapshot;

pub use entropy::{image_entropy, EntropyResult};
pub use snapshot::{optimal_snapshot, Snapshot, DEFAULT_VIEWS};

use image::GrayImage;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::Volume;

pub type RenderedImage = GrayImage;

pub const DEFAULT_IMAGE_DIM: usize = 512;
pub const DEFAULT_STEPS: usize = 512;
pub const ADDITIVE_GAIN: f64 = 4.0;
/// Shade floor for surface hits so that grazing hits stay distinguishable from background.
pub const AMBIENT: f64 = 0.15;

const BLOCK: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RenderMode {
    Surface,
    Additive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ViewParams {
    pub azimuth_deg: f64,
    pub mode: RenderMode,
    pub image_dim: usize,
    pub steps: usize,
    /// Iso-value for surface mode.
    pub threshold: u8,
    /// Additive-mode gain applied before clamping.
    pub gain: f64,
}

impl Default for ViewParams {
    fn default() -> Self {
        Self {
            azimuth_deg: 0.0,
            mode: RenderMode::Surface,
            image_dim: DEFAULT_IMAGE_DIM,
            steps: DEFAULT_STEPS,
            threshold: 128,
            gain: ADDITIVE_GAIN,
        }
    }
}

impl ViewParams {
    pub fn surface(threshold: u8) -> Self {
        Self {
            mode: RenderMode::Surface,
            threshold,
            ..Self::default()
        }
    }

    pub fn additive() -> Self {
        Self {
            mode: RenderMode::Additive,
            ..Self::default()
        }
    }

    pub fn with_size(mut self, image_dim: usize, steps: usize) -> Self {
        self.image_dim = image_dim;
        self.steps = steps;
        self
    }

    pub fn at(mut self, azimuth_deg: f64) -> Self {
        self.azimuth_deg = azimuth_deg;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.image_dim < 16 {
            return Err(Error::InvalidView(format!("image_dim {} < 16", self.image_dim)));
        }
        if self.steps < 32 {
            return Err(Error::InvalidView(format!("steps {} < 32", self.steps)));
        }
        if !self.azimuth_deg.is_finite() || !(self.gain.is_finite() && self.gain > 0.0) {
            return Err(Error::InvalidView(format!(
                "azimuth {} gain {}",
                self.azimuth_deg, self.gain
            )));
        }
        Ok(())
    }

    /// Azimuth reduced to `[0, 360)`.
    pub fn normalized_azimuth(&self) -> f64 {
        self.azimuth_deg.rem_euclid(360.0)
    }
}

/// Precomputed acceleration data for one volume and one activity rule.
///
/// A voxel is active when it can contribute: non-zero for additive rendering, at or above the
/// iso-value for surface rendering. Blocks with no active voxel within one voxel of them, and the
/// region outside the active bounding box, can be skipped without changing any sample result.
pub struct Renderer<'a> {
    volume: &'a Volume,
    mode: RenderMode,
    threshold: u8,
    n: [usize; 3],
    blocks: [usize; 3],
    block_active: Vec<bool>,
    /// Continuous index-space bounds where a trilinear sample can be active.
    active_lo: [f64; 3],
    active_hi: [f64; 3],
    any_active: bool,
}

impl<'a> Renderer<'a> {
    pub fn new(volume: &'a Volume, mode: RenderMode, threshold: u8) -> Result<Self> {
        if volume.is_empty() {
            return Err(Error::EmptyVolume);
        }
        let n = volume.dims();
        let active = |v: u8| match mode {
            RenderMode::Additive => v > 0,
            RenderMode::Surface => v >= threshold,
        };
        let blocks = n.map(|d| d.div_ceil(BLOCK));
        let mut block_active = vec![false; blocks[0] * blocks[1] * blocks[2]];
        let mut lo = [usize::MAX; 3];
        let mut hi = [0usize; 3];
        for z in 0..n[2] {
            let src = volume.slice(z);
            for y in 0..n[1] {
                let row = &src[y * n[0]..(y + 1) * n[0]];
                for (x, &v) in row.iter().enumerate() {
                    if !active(v) {
                        continue;
                    }
                    let p = [x, y, z];
                    for a in 0..3 {
                        lo[a] = lo[a].min(p[a]);
                        hi[a] = hi[a].max(p[a]);
                    }
                    // A sample reads voxels floor(g) and floor(g) + 1, so this voxel matters to
                    // the blocks holding x and x - 1 on each axis.
                    let bx = [x / BLOCK, x.saturating_sub(1) / BLOCK];
                    let by = [y / BLOCK, y.saturating_sub(1) / BLOCK];
                    let bz = [z / BLOCK, z.saturating_sub(1) / BLOCK];
                    for &cz in &bz {
                        for &cy in &by {
                            for &cx in &bx {
                                block_active[(cz * blocks[1] + cy) * blocks[0] + cx] = true;
                            }
                        }
                    }
                }
            }
        }
        let any_active = lo[0] != usize::MAX;
        let (active_lo, active_hi) = if any_active {
            (lo.map(|l| l as f64 - 1.0), hi.map(|h| h as f64 + 1.0))
        } else {
            ([0.0; 3], [0.0; 3])
        };
        Ok(Self {
            volume,
            mode,
            threshold,
            n,
            blocks,
            block_active,
            active_lo,
            active_hi,
            any_active,
        })
    }

    #[inline]
    fn voxel(&self, x: usize, y: usize, z: usize) -> f32 {
        self.volume.voxels()[(z * self.n[1] + y) * self.n[0] + x] as f32
    }

    /// Trilinear sample at continuous index coordinates, or `None` outside the volume box.
    #[inline]
    fn sample(&self, g: [f64; 3]) -> Option<f32> {
        let mut i0 = [0usize; 3];
        let mut i1 = [0usize; 3];
        let mut f = [0f32; 3];
        for a in 0..3 {
            let na = self.n[a];
            if g[a] < -0.5 || g[a] > na as f64 - 0.5 {
                return None;
            }
            let c = g[a].clamp(0.0, (na - 1) as f64);
            let fl = c.floor();
            i0[a] = fl as usize;
            i1[a] = (i0[a] + 1).min(na - 1);
            f[a] = (c - fl) as f32;
        }
        Some(self.trilinear(i0, i1, f))
    }

    #[inline]
    fn trilinear(&self, i0: [usize; 3], i1: [usize; 3], f: [f32; 3]) -> f32 {
        let lerp = |a: f32, b: f32, t: f32| a + (b - a) * t;
        let c00 = lerp(self.voxel(i0[0], i0[1], i0[2]), self.voxel(i1[0], i0[1], i0[2]), f[0]);
        let c10 = lerp(self.voxel(i0[0], i1[1], i0[2]), self.voxel(i1[0], i1[1], i0[2]), f[0]);
        let c01 = lerp(self.voxel(i0[0], i0[1], i1[2]), self.voxel(i1[0], i0[1], i1[2]), f[0]);
        let c11 = lerp(self.voxel(i0[0], i1[1], i1[2]), self.voxel(i1[0], i1[1], i1[2]), f[0]);
        lerp(lerp(c00, c10, f[1]), lerp(c01, c11, f[1]), f[2])
    }

    /// Clamped sample used for gradients; never `None`.
    #[inline]
    fn sample_clamped(&self, g: [f64; 3]) -> f32 {
        let clamped = [0, 1, 2].map(|a| g[a].clamp(-0.5, self.n[a] as f64 - 0.5));
        self.sample(clamped).unwrap_or(0.0)
    }

    #[inline]
    fn block_is_active(&self, g: [f64; 3]) -> bool {
        let b = [0, 1, 2].map(|a| {
            let c = g[a].clamp(0.0, (self.n[a] - 1) as f64);
            c as usize / BLOCK
        });
        self.block_active[(b[2] * self.blocks[1] + b[1]) * self.blocks[0] + b[0]]
    }

    pub fn render(&self, params: &ViewParams) -> Result<RenderedImage> {
        params.validate()?;
        let dim = params.image_dim;
        let n = self.n.map(|d| d as f64);
        let m = n[0].max(n[1]).max(n[2]);
        let e = n.map(|d| d / m);
        let half_diag = e[0].hypot(e[1]) / 2.0;
        let half_img = half_diag.max(e[2] / 2.0);
        let theta = params.normalized_azimuth().to_radians();
        let (sin, cos) = theta.sin_cos();
        let dir = [-cos, -sin, 0.0];
        let right = [-sin, cos, 0.0];
        let pixel = 2.0 * half_img / dim as f64;
        let steps = params.steps;
        let dt = 2.0 * half_diag / steps as f64;
        // Index-space coordinates are affine in world space: g = p * m + (n - 1) / 2.
        let offset = n.map(|d| (d - 1.0) / 2.0);
        let gd = dir.map(|c| c * m * dt);

        let mut pixels = vec![0u8; dim * dim];
        pixels.par_chunks_mut(dim).enumerate().for_each(|(j, row)| {
            let b = half_img - (j as f64 + 0.5) * pixel;
            for (i, out) in row.iter_mut().enumerate() {
                let a = -half_img + (i as f64 + 0.5) * pixel;
                // Sample k sits at world position o + (-half_diag + (k + 0.5) dt) * dir.
                let t0 = -half_diag + 0.5 * dt;
                let g0 = [0, 1, 2].map(|ax| {
                    let world = a * right[ax] + if ax == 2 { b } else { 0.0 } + t0 * dir[ax];
                    world * m + offset[ax]
                });
                *out = self.trace(g0, gd, steps, params, dir);
            }
        });
        Ok(GrayImage::from_raw(dim as u32, dim as u32, pixels).expect("image size"))
    }

    /// Sample-index interval (inclusive, padded) where the ray can meet active data.
    fn active_span(&self, g0: [f64; 3], gd: [f64; 3], steps: usize) -> Option<(usize, usize)> {
        if !self.any_active {
            return None;
        }
        let (mut k_lo, mut k_hi) = (0.0f64, (steps - 1) as f64);
        for a in 0..3 {
            let (lo, hi) = (
                self.active_lo[a].max(-0.5),
                self.active_hi[a].min(self.n[a] as f64 - 0.5),
            );
            if gd[a].abs() < 1e-12 {
                if g0[a] < lo || g0[a] > hi {
                    return None;
                }
                continue;
            }
            let (mut ka, mut kb) = ((lo - g0[a]) / gd[a], (hi - g0[a]) / gd[a]);
            if ka > kb {
                std::mem::swap(&mut ka, &mut kb);
            }
            k_lo = k_lo.max(ka);
            k_hi = k_hi.min(kb);
        }
        if k_lo > k_hi + 2.0 {
            return None;
        }
        let first = (k_lo.floor() - 2.0).max(0.0) as usize;
        let last = ((k_hi.ceil() + 2.0) as usize).min(steps - 1);
        (first <= last).then_some((first, last))
    }

    fn trace(&self, g0: [f64; 3], gd: [f64; 3], steps: usize, params: &ViewParams, dir: [f64; 3]) -> u8 {
        let Some((first, last)) = self.active_span(g0, gd, steps) else {
            return 0;
        };
        let at = |k: usize| [0, 1, 2].map(|a| g0[a] + k as f64 * gd[a]);
        match self.mode {
            RenderMode::Additive => {
                let mut sum = 0f64;
                for k in first..=last {
                    let g = at(k);
                    if !self.block_is_active(g) {
                        continue;
                    }
                    if let Some(s) = self.sample(g) {
                        sum += s as f64;
                    }
                }
                let mean = sum / 255.0 / steps as f64;
                (255.0 * mean * params.gain).round().clamp(0.0, 255.0) as u8
            }
            RenderMode::Surface => {
                let iso = self.threshold as f32;
                for k in first..=last {
                    let g = at(k);
                    if !self.block_is_active(g) {
                        continue;
                    }
                    match self.sample(g) {
                        Some(s) if s >= iso => return self.shade(g, dir),
                        _ => {}
                    }
                }
                0
            }
        }
    }

    fn shade(&self, g: [f64; 3], dir: [f64; 3]) -> u8 {
        let grad = [0, 1, 2].map(|a| {
            let (mut lo, mut hi) = (g, g);
            lo[a] -= 1.0;
            hi[a] += 1.0;
            (self.sample_clamped(hi) - self.sample_clamped(lo)) as f64 / 2.0
        });
        let len = (grad[0] * grad[0] + grad[1] * grad[1] + grad[2] * grad[2]).sqrt();
        let lambert = if len < 1e-6 {
            1.0
        } else {
            // Outward normal is -grad; the headlight shines along -dir.
            let dot = (grad[0] * dir[0] + grad[1] * dir[1] + grad[2] * dir[2]) / len;
            dot.max(0.0)
        };
        (255.0 * (AMBIENT + (1.0 - AMBIENT) * lambert))
            .round()
            .clamp(1.0, 255.0) as u8
    }
}

/// Renders one view of `v`.
pub fn render_view(v: &Volume, params: &ViewParams) -> Result<RenderedImage> {
    params.validate()?;
    Renderer::new(v, params.mode, params.threshold)?.render(params)
}
