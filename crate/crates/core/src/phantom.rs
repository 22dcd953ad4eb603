//! Deterministic synthetic volumes: a cylindrical sample container around one or more objects,
//! with known ground truth for the container circle and the object voxels.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::Circle;
use crate::threshold::BinaryMask;
use crate::volume::{Dims, Volume};

/// How a region's voxel values are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Intensity {
    Constant(u8),
    /// Uniform over the inclusive range.
    Uniform { lo: u8, hi: u8 },
    /// Normal sample rounded and clamped to `[0, 255]`.
    Gaussian { mean: f64, sigma: f64 },
}

impl Intensity {
    fn validate(&self) -> Result<()> {
        match *self {
            Intensity::Uniform { lo, hi } if lo > hi => {
                Err(Error::InvalidSpec(format!("uniform range {lo}..={hi} is empty")))
            }
            Intensity::Gaussian { sigma, .. } if !(sigma >= 0.0 && sigma.is_finite()) => {
                Err(Error::InvalidSpec(format!("gaussian sigma {sigma}")))
            }
            _ => Ok(()),
        }
    }

    #[inline]
    fn sample(&self, rng: &mut ChaCha8Rng) -> u8 {
        match *self {
            Intensity::Constant(v) => v,
            Intensity::Uniform { lo, hi } => rng.random_range(lo..=hi),
            Intensity::Gaussian { mean, sigma } => {
                let n = Normal::new(mean, sigma).expect("validated sigma");
                n.sample(rng).round().clamp(0.0, 255.0) as u8
            }
        }
    }
}

/// Object geometry in voxel coordinates; a voxel belongs to a shape when its center does.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Shape {
    Sphere { center: [f64; 3], radius: f64 },
    /// Axis-aligned box, bounds inclusive.
    Cuboid { min: [f64; 3], max: [f64; 3] },
    /// Solid cylinder along z between `z0` and `z1` inclusive.
    Cylinder { cx: f64, cy: f64, r: f64, z0: f64, z1: f64 },
}

impl Shape {
    #[inline]
    pub fn contains(&self, x: f64, y: f64, z: f64) -> bool {
        match *self {
            Shape::Sphere { center, radius } => {
                let (dx, dy, dz) = (x - center[0], y - center[1], z - center[2]);
                dx * dx + dy * dy + dz * dz <= radius * radius
            }
            Shape::Cuboid { min, max } => {
                (min[0]..=max[0]).contains(&x)
                    && (min[1]..=max[1]).contains(&y)
                    && (min[2]..=max[2]).contains(&z)
            }
            Shape::Cylinder { cx, cy, r, z0, z1 } => {
                let (dx, dy) = (x - cx, y - cy);
                dx * dx + dy * dy <= r * r && (z0..=z1).contains(&z)
            }
        }
    }
}

/// Cylindrical container wall spanning every z-layer: voxels whose center lies at distance
/// `d` from the axis with `radius - thickness/2 <= d < radius + thickness/2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Container {
    pub cx: f64,
    pub cy: f64,
    pub radius: f64,
    pub thickness: f64,
    pub wall: Intensity,
    /// Value outside the container; `None` reuses the background.
    pub outside: Option<Intensity>,
}

impl Container {
    pub fn new(cx: f64, cy: f64, radius: f64, thickness: f64, wall: Intensity) -> Self {
        Self {
            cx,
            cy,
            radius,
            thickness,
            wall,
            outside: None,
        }
    }

    pub fn with_outside(mut self, outside: Intensity) -> Self {
        self.outside = Some(outside);
        self
    }

    fn region(&self, x: f64, y: f64) -> Region {
        let d = ((x - self.cx).powi(2) + (y - self.cy).powi(2)).sqrt();
        let half = self.thickness / 2.0;
        if d < self.radius - half {
            Region::Inside
        } else if d < self.radius + half {
            Region::Wall
        } else {
            Region::Outside
        }
    }

    pub fn circle(&self) -> Circle {
        Circle {
            cx: self.cx,
            cy: self.cy,
            r: self.radius,
            votes: 1.0,
        }
    }
}

enum Region {
    Inside,
    Wall,
    Outside,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomSpec {
    pub dims: Dims,
    pub seed: u64,
    pub background: Intensity,
    pub container: Option<Container>,
    /// Painted in order over the background; later objects win.
    pub objects: Vec<(Shape, Intensity)>,
    /// Fraction of voxels replaced by 0 or 255 with equal odds.
    pub salt_pepper: f64,
    /// Voxels straddling a material boundary mix the materials by covered volume (4^3 samples).
    #[serde(default)]
    pub partial_volume: bool,
}

impl PhantomSpec {
    pub fn new(dims: Dims, seed: u64) -> Self {
        Self {
            dims,
            seed,
            background: Intensity::Constant(0),
            container: None,
            objects: Vec::new(),
            salt_pepper: 0.0,
            partial_volume: false,
        }
    }

    pub fn background(mut self, background: Intensity) -> Self {
        self.background = background;
        self
    }

    pub fn container(mut self, container: Container) -> Self {
        self.container = Some(container);
        self
    }

    pub fn object(mut self, shape: Shape, value: Intensity) -> Self {
        self.objects.push((shape, value));
        self
    }

    pub fn salt_pepper(mut self, fraction: f64) -> Self {
        self.salt_pepper = fraction;
        self
    }

    pub fn partial_volume(mut self, on: bool) -> Self {
        self.partial_volume = on;
        self
    }

    fn material(&self, fx: f64, fy: f64, fz: f64) -> &Intensity {
        let object = self
            .objects
            .iter()
            .rev()
            .find(|(s, _)| s.contains(fx, fy, fz))
            .map(|(_, v)| v);
        match (object, &self.container) {
            (Some(v), _) => v,
            (None, None) => &self.background,
            (None, Some(c)) => match c.region(fx, fy) {
                Region::Inside => &self.background,
                Region::Wall => &c.wall,
                Region::Outside => c.outside.as_ref().unwrap_or(&self.background),
            },
        }
    }

    /// Covered-volume weights of the materials meeting inside the voxel, or `None` if one
    /// material fills all of it.
    fn mixture(&self, fx: f64, fy: f64, fz: f64) -> Option<Vec<(&Intensity, u32)>> {
        let center = self.material(fx, fy, fz);
        let corners = (0..8).all(|k| {
            let d = |bit: usize| if k & bit != 0 { 0.5 } else { -0.5 };
            std::ptr::eq(self.material(fx + d(1), fy + d(2), fz + d(4)), center)
        });
        if corners {
            return None;
        }
        let mut parts: Vec<(&Intensity, u32)> = Vec::new();
        let offset = |i: usize| (i as f64 + 0.5) / 4.0 - 0.5;
        for k in 0..64 {
            let m = self.material(fx + offset(k % 4), fy + offset(k / 4 % 4), fz + offset(k / 16));
            match parts.iter_mut().find(|(p, _)| std::ptr::eq(*p, m)) {
                Some((_, n)) => *n += 1,
                None => parts.push((m, 1)),
            }
        }
        (parts.len() > 1).then_some(parts)
    }

    fn validate(&self) -> Result<()> {
        if self.dims.iter().any(|&d| d < 16) {
            return Err(Error::InvalidSpec(format!(
                "dims {:?} below the 16^3 minimum",
                self.dims
            )));
        }
        if !(0.0..=1.0).contains(&self.salt_pepper) {
            return Err(Error::InvalidSpec(format!(
                "salt-and-pepper fraction {}",
                self.salt_pepper
            )));
        }
        self.background.validate()?;
        if let Some(c) = &self.container {
            if !(c.radius > 0.0 && c.thickness > 0.0) {
                return Err(Error::InvalidSpec(format!(
                    "container radius {} thickness {}",
                    c.radius, c.thickness
                )));
            }
            c.wall.validate()?;
            if let Some(o) = &c.outside {
                o.validate()?;
            }
        }
        for (shape, value) in &self.objects {
            value.validate()?;
            let bad = match *shape {
                Shape::Sphere { radius, .. } => radius <= 0.0,
                Shape::Cuboid { min, max } => (0..3).any(|i| min[i] > max[i]),
                Shape::Cylinder { r, z0, z1, .. } => r <= 0.0 || z0 > z1,
            };
            if bad {
                return Err(Error::InvalidSpec(format!("degenerate shape {shape:?}")));
            }
        }
        Ok(())
    }

    /// True where any object covers the voxel center.
    pub fn is_object(&self, x: usize, y: usize, z: usize) -> bool {
        let (fx, fy, fz) = (x as f64, y as f64, z as f64);
        self.objects.iter().any(|(s, _)| s.contains(fx, fy, fz))
    }

    pub fn generate(&self) -> Result<Phantom> {
        self.validate()?;
        let [nx, ny, nz] = self.dims;
        let mut voxels = vec![0u8; nx * ny * nz];
        use rayon::prelude::*;
        voxels
            .par_chunks_mut(nx * ny)
            .enumerate()
            .for_each(|(z, plane)| {
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
                rng.set_stream(z as u64);
                let fz = z as f64;
                for y in 0..ny {
                    for x in 0..nx {
                        let (fx, fy) = (x as f64, y as f64);
                        let mixed = if self.partial_volume { self.mixture(fx, fy, fz) } else { None };
                        let mut value = match mixed {
                            None => self.material(fx, fy, fz).sample(&mut rng),
                            Some(parts) => {
                                let sum: u32 = parts.iter().map(|(m, n)| m.sample(&mut rng) as u32 * n).sum();
                                ((sum + 32) / 64) as u8
                            }
                        };
                        if self.salt_pepper > 0.0 && rng.random::<f64>() < self.salt_pepper {
                            value = if rng.random::<bool>() { 255 } else { 0 };
                        }
                        plane[y * nx + x] = value;
                    }
                }
            });
        Ok(Phantom {
            volume: Volume::new(self.dims, voxels)?,
            spec: self.clone(),
        })
    }
}

/// A generated volume with its ground truth.
#[derive(Debug, Clone)]
pub struct Phantom {
    pub volume: Volume,
    pub spec: PhantomSpec,
}

impl Phantom {
    pub fn circle(&self) -> Option<Circle> {
        self.spec.container.as_ref().map(Container::circle)
    }

    pub fn object_mask(&self) -> BinaryMask {
        let [nx, ny, nz] = self.spec.dims;
        let mut bits = Vec::with_capacity(nx * ny * nz);
        for z in 0..nz {
            for y in 0..ny {
                for x in 0..nx {
                    bits.push(self.spec.is_object(x, y, z));
                }
            }
        }
        BinaryMask::new(self.spec.dims, bits)
    }

    /// Ground-truth wall membership for a voxel's (x, y) position.
    pub fn is_wall(&self, x: usize, y: usize) -> bool {
        self.spec
            .container
            .as_ref()
            .is_some_and(|c| matches!(c.region(x as f64, y as f64), Region::Wall))
    }
}

/// Ready-made phantoms used by the examples and the test suites.
pub mod presets {
    use super::*;

    /// Container of value 60 around a bright sphere resting near the base. Empty air is 0.
    pub fn cylinder_with_sphere(n: usize, nz: usize, seed: u64) -> PhantomSpec {
        let c = n as f64 / 2.0 - 0.5;
        let r = 0.4 * n as f64;
        PhantomSpec::new([n, n, nz], seed)
            .container(Container::new(c, c, r, (n as f64 / 128.0).max(2.0), Intensity::Constant(60)))
            .object(
                Shape::Sphere {
                    center: [c, c, 0.3 * nz as f64],
                    radius: 0.2 * n.min(nz) as f64,
                },
                Intensity::Uniform { lo: 150, hi: 210 },
            )
    }

    /// Background and object drawn from normals at 60 and 180 (sigma 10), with partial-volume
    /// mixing along the sphere surface.
    pub fn bimodal(n: usize, seed: u64) -> PhantomSpec {
        let c = n as f64 / 2.0 - 0.5;
        PhantomSpec::new([n, n, n], seed)
            .partial_volume(true)
            .background(Intensity::Gaussian {
                mean: 60.0,
                sigma: 10.0,
            })
            .object(
                Shape::Sphere {
                    center: [c, c, c],
                    radius: 0.3 * n as f64,
                },
                Intensity::Gaussian {
                    mean: 180.0,
                    sigma: 10.0,
                },
            )
    }

    /// Every value inside [118, 138]: a bright surround and wall dominate a dark interior
    /// holding a slightly brighter specimen.
    pub fn narrow_histogram(n: usize, seed: u64) -> PhantomSpec {
        let c = n as f64 / 2.0 - 0.5;
        let nz = n / 2;
        PhantomSpec::new([n, n, nz], seed)
            .background(Intensity::Uniform { lo: 118, hi: 120 })
            .container(
                Container::new(c, c, 0.4 * n as f64, 4.0, Intensity::Uniform { lo: 137, hi: 138 })
                    .with_outside(Intensity::Uniform { lo: 132, hi: 134 }),
            )
            .object(
                Shape::Sphere {
                    center: [c, c, 0.35 * nz as f64],
                    radius: 0.15 * n as f64,
                },
                Intensity::Uniform { lo: 125, hi: 127 },
            )
    }

    /// Container wall with values spread over 40..=60 and a specimen in 120..=200 sitting in the
    /// lower part, so the top slices carry only the container signature.
    pub fn artifact_band(n: usize, seed: u64) -> PhantomSpec {
        let c = n as f64 / 2.0 - 0.5;
        PhantomSpec::new([n, n, n], seed)
            .container(Container::new(
                c,
                c,
                0.42 * n as f64,
                (n as f64 / 32.0).max(4.0),
                Intensity::Uniform { lo: 40, hi: 60 },
            ))
            .object(
                Shape::Sphere {
                    center: [c, c, 0.3 * n as f64],
                    radius: 0.2 * n as f64,
                },
                Intensity::Uniform { lo: 120, hi: 200 },
            )
            .object(
                Shape::Cuboid {
                    min: [c - 0.25 * n as f64, c - 0.05 * n as f64, 0.05 * n as f64],
                    max: [c + 0.25 * n as f64, c + 0.05 * n as f64, 0.12 * n as f64],
                },
                Intensity::Uniform { lo: 120, hi: 200 },
            )
    }

    /// L-shaped slab: a long bar along x joined to a shorter bar along y, both thin in z.
    pub fn l_slab(n: usize, seed: u64) -> PhantomSpec {
        let f = n as f64;
        PhantomSpec::new([n, n, n], seed)
            .object(
                Shape::Cuboid {
                    min: [0.15 * f, 0.15 * f, 0.35 * f],
                    max: [0.85 * f, 0.3 * f, 0.65 * f],
                },
                Intensity::Constant(200),
            )
            .object(
                Shape::Cuboid {
                    min: [0.15 * f, 0.3 * f, 0.35 * f],
                    max: [0.3 * f, 0.6 * f, 0.65 * f],
                },
                Intensity::Constant(120),
            )
    }
}
