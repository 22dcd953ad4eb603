//! Slicemaps: a cubic volume packed slice by slice into square power-of-two atlas images.
//!
//! Slice `k` of a scheme with `per_map` cells per atlas goes to atlas `k / per_map`, cell
//! `(k % per_map) % grid` across and `(k % per_map) / grid` down. Unused trailing cells are zero.

use std::fs;
use std::path::Path;

use image::codecs::png::{CompressionType, FilterType, PngEncoder};
use image::{GrayImage, ImageEncoder};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::{downscale_cubic, Volume};

pub const SCHEMES: [usize; 3] = [128, 256, 512];
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlicemapScheme {
    pub s: usize,
    pub atlas_dim: usize,
    pub grid: usize,
    pub per_map: usize,
    pub map_count: usize,
}

/// Layout for one of the supported cubic schemes.
pub fn plan_scheme(s: usize) -> Result<SlicemapScheme> {
    let atlas_dim = match s {
        128 => 1024,
        256 => 2048,
        512 => 4096,
        other => return Err(Error::UnsupportedScheme(other)),
    };
    let grid = atlas_dim / s;
    let per_map = grid * grid;
    Ok(SlicemapScheme {
        s,
        atlas_dim,
        grid,
        per_map,
        map_count: s.div_ceil(per_map),
    })
}

impl SlicemapScheme {
    /// Uncompressed bytes across all atlases.
    pub fn payload_bytes(&self) -> u64 {
        (self.map_count * self.atlas_dim * self.atlas_dim) as u64
    }

    pub fn atlas_name(&self, map: usize) -> String {
        format!("sm_{}_{}.png", self.s, map)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CellAddr {
    pub map: usize,
    pub cell_x: usize,
    pub cell_y: usize,
}

pub fn slice_cell(index: usize, scheme: &SlicemapScheme) -> Result<CellAddr> {
    if index >= scheme.s {
        return Err(Error::IndexOutOfRange {
            index,
            s: scheme.s,
        });
    }
    let local = index % scheme.per_map;
    Ok(CellAddr {
        map: index / scheme.per_map,
        cell_x: local % scheme.grid,
        cell_y: local / scheme.grid,
    })
}

/// `{ "s": 256, "atlas": 2048, "grid": 8, "maps": 4 }`
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchemeDescriptor {
    pub s: usize,
    pub atlas: usize,
    pub grid: usize,
    pub maps: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlicemapManifest {
    pub scheme: SchemeDescriptor,
    pub atlases: Vec<String>,
}

impl SlicemapManifest {
    /// Resolves the declared layout, rejecting anything that is not one of the fixed schemes.
    pub fn plan(&self) -> Result<SlicemapScheme> {
        let scheme = plan_scheme(self.scheme.s)?;
        let d = &self.scheme;
        if (d.atlas, d.grid, d.maps) != (scheme.atlas_dim, scheme.grid, scheme.map_count) {
            return Err(Error::ManifestMismatch(format!(
                "descriptor {d:?} disagrees with the {} scheme layout",
                d.s
            )));
        }
        Ok(scheme)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlicemapSet {
    pub scheme: SlicemapScheme,
    pub atlases: Vec<GrayImage>,
}

impl SlicemapSet {
    pub fn manifest(&self) -> SlicemapManifest {
        SlicemapManifest {
            scheme: SchemeDescriptor {
                s: self.scheme.s,
                atlas: self.scheme.atlas_dim,
                grid: self.scheme.grid,
                maps: self.scheme.map_count,
            },
            atlases: (0..self.atlases.len())
                .map(|i| self.scheme.atlas_name(i))
                .collect(),
        }
    }

    pub fn payload_bytes(&self) -> u64 {
        self.atlases
            .iter()
            .map(|a| a.as_raw().len() as u64)
            .sum()
    }

    /// Applies `f` to every texel, trailing cells included.
    pub fn map_texels(&mut self, f: impl Fn(&mut [u8]) + Sync) {
        self.atlases.par_iter_mut().for_each(|a| f(&mut *a));
    }

    /// PNG bytes per atlas followed by the manifest JSON, as (file name, bytes).
    pub fn encode(&self) -> Result<Vec<(String, Vec<u8>)>> {
        let manifest = self.manifest();
        let mut files: Vec<(String, Vec<u8>)> = self
            .atlases
            .par_iter()
            .zip(manifest.atlases.par_iter())
            .map(|(img, name)| Ok((name.clone(), encode_png(img)?)))
            .collect::<Result<_>>()?;
        files.push((MANIFEST_FILE.to_string(), serde_json::to_vec_pretty(&manifest)?));
        Ok(files)
    }

    /// Writes the atlases as PNG and the manifest; returns (file name, PNG bytes) per atlas.
    pub fn write(&self, dir: &Path) -> Result<Vec<(String, Vec<u8>)>> {
        fs::create_dir_all(dir)?;
        let mut files = self.encode()?;
        for (name, bytes) in &files {
            fs::write(dir.join(name), bytes)?;
        }
        files.retain(|(name, _)| name != MANIFEST_FILE);
        Ok(files)
    }

    /// Reads a set previously written with [`SlicemapSet::write`].
    pub fn read(dir: &Path) -> Result<Self> {
        let manifest: SlicemapManifest =
            serde_json::from_slice(&fs::read(dir.join(MANIFEST_FILE))?)?;
        let scheme = manifest.plan()?;
        let mut atlases = Vec::with_capacity(manifest.atlases.len());
        for name in &manifest.atlases {
            let path = dir.join(name);
            if !path.exists() {
                return Err(Error::ManifestMismatch(format!(
                    "manifest declares {} atlases but {name} is missing",
                    manifest.atlases.len()
                )));
            }
            atlases.push(image::open(&path)?.into_luma8());
        }
        Ok(Self { scheme, atlases })
    }
}

/// Lossless grayscale PNG bytes; identical input gives identical output.
pub fn encode_png(img: &GrayImage) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    PngEncoder::new_with_quality(&mut out, CompressionType::Default, FilterType::Adaptive)
        .write_image(
            img.as_raw(),
            img.width(),
            img.height(),
            image::ExtendedColorType::L8,
        )?;
    Ok(out)
}

/// Box-downscales `v` to `s^3` and packs the slices into atlases.
pub fn encode_slicemaps(v: &Volume, scheme: &SlicemapScheme) -> Result<SlicemapSet> {
    let cube = downscale_cubic(v, scheme.s)?;
    pack_cube(&cube, scheme)
}

/// Packs a volume that is already `s^3`.
pub fn pack_cube(cube: &Volume, scheme: &SlicemapScheme) -> Result<SlicemapSet> {
    let s = scheme.s;
    if cube.dims() != [s, s, s] {
        return Err(Error::ManifestMismatch(format!(
            "volume {:?} is not {s}^3",
            cube.dims()
        )));
    }
    let dim = scheme.atlas_dim;
    let atlases = (0..scheme.map_count)
        .into_par_iter()
        .map(|map| {
            let mut buf = vec![0u8; dim * dim];
            let first = map * scheme.per_map;
            for k in first..(first + scheme.per_map).min(s) {
                let cell = slice_cell(k, scheme).expect("k < s");
                let src = cube.slice(k);
                for y in 0..s {
                    let row = (cell.cell_y * s + y) * dim + cell.cell_x * s;
                    buf[row..row + s].copy_from_slice(&src[y * s..(y + 1) * s]);
                }
            }
            GrayImage::from_raw(dim as u32, dim as u32, buf).expect("atlas size")
        })
        .collect();
    Ok(SlicemapSet {
        scheme: *scheme,
        atlases,
    })
}

/// Unpacks the atlases into an `s^3` volume.
pub fn decode_slicemaps(set: &SlicemapSet) -> Result<Volume> {
    let scheme = &set.scheme;
    if set.atlases.len() != scheme.map_count {
        return Err(Error::ManifestMismatch(format!(
            "{} atlases present, scheme {} needs {}",
            set.atlases.len(),
            scheme.s,
            scheme.map_count
        )));
    }
    let dim = scheme.atlas_dim as u32;
    if let Some(bad) = set
        .atlases
        .iter()
        .find(|a| a.width() != dim || a.height() != dim)
    {
        return Err(Error::ManifestMismatch(format!(
            "atlas is {}x{}, expected {dim}x{dim}",
            bad.width(),
            bad.height()
        )));
    }
    let s = scheme.s;
    let dim = scheme.atlas_dim;
    let mut voxels = vec![0u8; s * s * s];
    voxels
        .par_chunks_mut(s * s)
        .enumerate()
        .for_each(|(k, plane)| {
            let cell = slice_cell(k, scheme).expect("k < s");
            let atlas = set.atlases[cell.map].as_raw();
            for y in 0..s {
                let row = (cell.cell_y * s + y) * dim + cell.cell_x * s;
                plane[y * s..(y + 1) * s].copy_from_slice(&atlas[row..row + s]);
            }
        });
    Volume::new([s, s, s], voxels)
}
