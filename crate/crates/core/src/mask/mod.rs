//! Container removal and artifact grey-value filtering.

mod histfilter;
mod hough;

pub use histfilter::{
    artifact_bins, filter_histogram_bins, BinSet, DEFAULT_ARTIFACT_FRAC, DEFAULT_TOP_SLICES,
};
pub use hough::{detect_container_circle, detect_with_config, HoughConfig};
pub(crate) use histfilter::filter_in_place;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::Volume;

/// Radius fraction removed before masking so the container wall itself is excluded.
pub const MASK_MARGIN: f64 = 0.02;

/// Circular container cross-section in slice pixel coordinates (pixel centers at integers).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Circle {
    pub cx: f64,
    pub cy: f64,
    pub r: f64,
    /// Fraction of the circumference supported by edge pixels.
    pub votes: f64,
}

impl Circle {
    #[inline]
    pub fn contains(&self, x: f64, y: f64) -> bool {
        let (dx, dy) = (x - self.cx, y - self.cy);
        dx * dx + dy * dy < self.r * self.r
    }

    /// Same center, radius reduced by `frac`.
    pub fn shrunk(&self, frac: f64) -> Circle {
        Circle {
            r: self.r * (1.0 - frac),
            ..*self
        }
    }

    /// The circle the pipeline masks with: shrunk by [`MASK_MARGIN`].
    pub fn with_margin(&self) -> Circle {
        self.shrunk(MASK_MARGIN)
    }

    /// Maps the circle into a slice resampled by `factor` (target size / source size).
    pub fn rescaled(&self, factor: f64) -> Circle {
        Circle {
            cx: (self.cx + 0.5) * factor - 0.5,
            cy: (self.cy + 0.5) * factor - 0.5,
            r: self.r * factor,
            votes: self.votes,
        }
    }

    fn check_bounds(&self, nx: usize, ny: usize) -> Result<()> {
        let inside = |c: f64, n: usize| c.is_finite() && c >= -0.5 && c <= n as f64 - 0.5;
        if !(self.r > 0.0 && inside(self.cx, nx) && inside(self.cy, ny)) {
            return Err(Error::CircleOutOfBounds {
                cx: self.cx,
                cy: self.cy,
                r: self.r,
                nx,
                ny,
            });
        }
        Ok(())
    }
}

/// Zeroes every voxel whose (x, y) lies outside `c`, in every z-layer.
pub fn apply_circle_mask(v: &Volume, c: &Circle) -> Result<Volume> {
    let [nx, ny, _] = v.dims();
    c.check_bounds(nx, ny)?;
    let inside: Vec<bool> = (0..nx * ny)
        .map(|i| c.contains((i % nx) as f64, (i / nx) as f64))
        .collect();
    let mut out = v.clone();
    out.voxels_mut()
        .par_chunks_mut(nx * ny)
        .for_each(|plane| {
            for (p, &keep) in plane.iter_mut().zip(&inside) {
                if !keep {
                    *p = 0;
                }
            }
        });
    Ok(out)
}
