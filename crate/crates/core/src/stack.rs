//! Slice-stack ingestion from a JSON manifest of 8-bit grayscale PNG/PGM files.

use std::fs;
use std::path::{Path, PathBuf};

use image::{ColorType, DynamicImage};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::Volume;

/// `{ "name": str, "slices": [paths...], "bit_depth": 8 }`; relative paths resolve against the
/// manifest's directory.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct StackManifest {
    pub name: String,
    pub slices: Vec<PathBuf>,
    pub bit_depth: u32,
}

impl StackManifest {
    pub fn read(path: &Path) -> Result<Self> {
        Ok(serde_json::from_slice(&fs::read(path)?)?)
    }
}

fn decode_slice(path: &Path) -> Result<(u32, u32, Vec<u8>)> {
    if !path.exists() {
        return Err(Error::MissingSlice(path.to_path_buf()));
    }
    let img = image::open(path)?;
    match img {
        DynamicImage::ImageLuma8(gray) => Ok((gray.width(), gray.height(), gray.into_raw())),
        other => Err(Error::UnsupportedPixelFormat {
            path: path.to_path_buf(),
            format: format!("{:?}", other.color()),
        }),
    }
}

/// Loads every slice listed by the manifest; slice `k` becomes z-layer `k`.
pub fn load_slice_stack(manifest_path: &Path) -> Result<(StackManifest, Volume)> {
    let manifest = StackManifest::read(manifest_path)?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let paths: Vec<PathBuf> = manifest.slices.iter().map(|p| base.join(p)).collect();
    let first = paths.first().ok_or(Error::EmptyStack)?;
    if manifest.bit_depth != 8 {
        return Err(Error::UnsupportedPixelFormat {
            path: manifest_path.to_path_buf(),
            format: format!("bit_depth {}", manifest.bit_depth),
        });
    }
    let (w, h, first_pixels) = decode_slice(first)?;
    let plane = (w * h) as usize;
    let mut voxels = vec![0u8; plane * paths.len()];
    voxels[..plane].copy_from_slice(&first_pixels);
    drop(first_pixels);
    voxels[plane..]
        .par_chunks_mut(plane)
        .zip(paths[1..].par_iter())
        .try_for_each(|(dst, path)| -> Result<()> {
            let (sw, sh, pixels) = decode_slice(path)?;
            if (sw, sh) != (w, h) {
                return Err(Error::DimensionMismatch {
                    path: path.clone(),
                    expected: (w, h),
                    found: (sw, sh),
                });
            }
            dst.copy_from_slice(&pixels);
            Ok(())
        })?;
    let volume = Volume::new([w as usize, h as usize, paths.len()], voxels)?;
    Ok((manifest, volume))
}

/// Writes each z-layer as `slice_NNNN.png` plus `stack.json` into `dir`.
pub fn write_slice_stack(v: &Volume, dir: &Path, name: &str) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let [nx, ny, nz] = v.dims();
    let slices: Vec<PathBuf> = (0..nz)
        .map(|z| PathBuf::from(format!("slice_{z:04}.png")))
        .collect();
    slices.par_iter().enumerate().try_for_each(|(z, file)| {
        image::save_buffer(dir.join(file), v.slice(z), nx as u32, ny as u32, ColorType::L8)
            .map_err(Error::from)
    })?;
    let manifest = StackManifest {
        name: name.to_string(),
        slices,
        bit_depth: 8,
    };
    let path = dir.join("stack.json");
    fs::write(&path, serde_json::to_vec_pretty(&manifest)?)?;
    Ok(path)
}

/// Loads either a slice-stack manifest (has `slices`) or a raw volume header (has `dims`).
pub fn load_volume(path: &Path) -> Result<Volume> {
    let value: serde_json::Value = serde_json::from_slice(&fs::read(path)?)?;
    if value.get("slices").is_some() {
        Ok(load_slice_stack(path)?.1)
    } else {
        Volume::load_raw(path)
    }
}
