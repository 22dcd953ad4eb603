//! Dense 8-bit volumes, intensity histograms and box-filter downscaling.

use std::fs;
use std::ops::RangeInclusive;
use std::path::{Path, PathBuf};

use image::GrayImage;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Voxel counts along x, y and z.
pub type Dims = [usize; 3];

/// A dense grid of 8-bit intensities stored x-fastest, then y, then z.
#[derive(Clone, PartialEq)]
pub struct Volume {
    dims: Dims,
    voxels: Vec<u8>,
    /// Physical spacing in micrometers, informational only.
    pub voxel_size_um: Option<f64>,
}

impl std::fmt::Debug for Volume {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Volume")
            .field("dims", &self.dims)
            .field("voxel_size_um", &self.voxel_size_um)
            .finish_non_exhaustive()
    }
}

impl Volume {
    pub fn new(dims: Dims, voxels: Vec<u8>) -> Result<Self> {
        if dims.contains(&0) {
            return Err(Error::InvalidVolume(format!("zero dimension in {dims:?}")));
        }
        let expected = dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| Error::InvalidVolume(format!("dims {dims:?} overflow")))?;
        if voxels.len() != expected {
            return Err(Error::InvalidVolume(format!(
                "{} voxels for dims {dims:?} (expected {expected})",
                voxels.len()
            )));
        }
        Ok(Self {
            dims,
            voxels,
            voxel_size_um: None,
        })
    }

    pub fn filled(dims: Dims, value: u8) -> Result<Self> {
        let n = dims.iter().product();
        Self::new(dims, vec![value; n])
    }

    pub fn zeros(dims: Dims) -> Result<Self> {
        Self::filled(dims, 0)
    }

    /// Builds a volume by evaluating `f(x, y, z)` at every voxel.
    pub fn from_fn(dims: Dims, f: impl Fn(usize, usize, usize) -> u8 + Sync) -> Result<Self> {
        let [nx, ny, nz] = dims;
        let mut voxels = vec![0u8; nx * ny * nz];
        if !voxels.is_empty() {
            voxels
                .par_chunks_mut(nx * ny)
                .enumerate()
                .for_each(|(z, plane)| {
                    for y in 0..ny {
                        for x in 0..nx {
                            plane[y * nx + x] = f(x, y, z);
                        }
                    }
                });
        }
        Self::new(dims, voxels)
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.voxels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.voxels.is_empty()
    }

    pub fn voxels(&self) -> &[u8] {
        &self.voxels
    }

    pub fn voxels_mut(&mut self) -> &mut [u8] {
        &mut self.voxels
    }

    pub fn into_voxels(self) -> Vec<u8> {
        self.voxels
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        (z * self.dims[1] + y) * self.dims[0] + x
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> u8 {
        self.voxels[self.index(x, y, z)]
    }

    /// Pixels of z-layer `z`, row-major.
    pub fn slice(&self, z: usize) -> &[u8] {
        let plane = self.dims[0] * self.dims[1];
        &self.voxels[z * plane..(z + 1) * plane]
    }

    pub fn slice_mut(&mut self, z: usize) -> &mut [u8] {
        let plane = self.dims[0] * self.dims[1];
        &mut self.voxels[z * plane..(z + 1) * plane]
    }

    pub fn slice_image(&self, z: usize) -> GrayImage {
        GrayImage::from_raw(
            self.dims[0] as u32,
            self.dims[1] as u32,
            self.slice(z).to_vec(),
        )
        .expect("slice buffer matches dims")
    }

    /// The last z-layer, which is where the container is imaged without specimen.
    pub fn top_slice(&self) -> GrayImage {
        self.slice_image(self.dims[2] - 1)
    }

    /// Inclusive z-range covering the `n` topmost layers.
    pub fn top_range(&self, n: usize) -> RangeInclusive<usize> {
        let nz = self.dims[2];
        nz.saturating_sub(n)..=nz - 1
    }

    pub fn mean(&self) -> f64 {
        let sum: u64 = self.voxels.par_iter().map(|&v| v as u64).sum();
        sum as f64 / self.voxels.len() as f64
    }

    pub fn count_nonzero(&self) -> usize {
        self.voxels.par_iter().filter(|&&v| v != 0).count()
    }

    /// Writes `<name>.json` and `<name>.raw` into `dir`.
    pub fn save_raw(&self, dir: &Path, name: &str) -> Result<PathBuf> {
        fs::create_dir_all(dir)?;
        let header = RawHeader {
            dims: self.dims,
            dtype: "u8".into(),
            order: "xyz".into(),
            voxel_size_um: self.voxel_size_um,
        };
        let header_path = dir.join(format!("{name}.json"));
        fs::write(dir.join(format!("{name}.raw")), &self.voxels)?;
        fs::write(&header_path, serde_json::to_vec_pretty(&header)?)?;
        Ok(header_path)
    }

    /// Loads a volume from its JSON header; the voxel file sits next to it with a `.raw` extension.
    pub fn load_raw(header_path: &Path) -> Result<Self> {
        let header: RawHeader = serde_json::from_slice(&fs::read(header_path)?)?;
        if header.dtype != "u8" || header.order != "xyz" {
            return Err(Error::InvalidVolume(format!(
                "unsupported raw layout dtype={} order={}",
                header.dtype, header.order
            )));
        }
        let voxels = fs::read(header_path.with_extension("raw"))?;
        let mut v = Self::new(header.dims, voxels)?;
        v.voxel_size_um = header.voxel_size_um;
        Ok(v)
    }
}

/// Sidecar header for the little-endian raw voxel file.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RawHeader {
    pub dims: Dims,
    pub dtype: String,
    pub order: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub voxel_size_um: Option<f64>,
}

/// 256-bin intensity histogram.
#[derive(Clone, PartialEq, Eq)]
pub struct Histogram256 {
    bins: [u64; 256],
    total: u64,
}

impl std::fmt::Debug for Histogram256 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let nonzero: Vec<(usize, u64)> = self
            .bins
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(i, &c)| (i, c))
            .collect();
        f.debug_struct("Histogram256")
            .field("total", &self.total)
            .field("nonzero", &nonzero)
            .finish()
    }
}

impl Default for Histogram256 {
    fn default() -> Self {
        Self {
            bins: [0; 256],
            total: 0,
        }
    }
}

impl Histogram256 {
    pub fn from_bins(bins: [u64; 256]) -> Self {
        let total = bins.iter().sum();
        Self { bins, total }
    }

    pub fn from_values(values: &[u8]) -> Self {
        let bins = values
            .par_chunks(1 << 16)
            .map(|chunk| {
                let mut local = [0u64; 256];
                for &v in chunk {
                    local[v as usize] += 1;
                }
                local
            })
            .reduce(
                || [0u64; 256],
                |mut a, b| {
                    for (x, y) in a.iter_mut().zip(b.iter()) {
                        *x += y;
                    }
                    a
                },
            );
        Self::from_bins(bins)
    }

    pub fn bins(&self) -> &[u64; 256] {
        &self.bins
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn get(&self, bin: u8) -> u64 {
        self.bins[bin as usize]
    }

    /// Same histogram with `bin` emptied.
    pub fn without_bin(&self, bin: u8) -> Self {
        let mut bins = self.bins;
        bins[bin as usize] = 0;
        Self::from_bins(bins)
    }

    /// Multiplies every bin by `k`.
    pub fn scaled(&self, k: u64) -> Self {
        let mut bins = self.bins;
        for b in bins.iter_mut() {
            *b *= k;
        }
        Self::from_bins(bins)
    }
}

/// Histogram over the whole volume, or over an inclusive z-range of slices.
pub fn volume_histogram(v: &Volume, z_range: Option<RangeInclusive<usize>>) -> Result<Histogram256> {
    let nz = v.dims[2];
    let Some(range) = z_range else {
        return Ok(Histogram256::from_values(&v.voxels));
    };
    let (start, end) = (*range.start(), *range.end());
    if start > end || end >= nz {
        return Err(Error::RangeOutOfBounds { start, end, nz });
    }
    let plane = v.dims[0] * v.dims[1];
    Ok(Histogram256::from_values(
        &v.voxels[start * plane..(end + 1) * plane],
    ))
}

/// Maps each source index along one axis to the target cell containing its center.
fn axis_map(n: usize, target: usize) -> Vec<usize> {
    (0..n).map(|i| (2 * i + 1) * target / (2 * n)).collect()
}

/// Box-filter downscale. Each source voxel contributes to the target cell that contains its
/// center and every target voxel holds the rounded-half-up mean of its contributors.
pub fn downscale_volume(v: &Volume, target: Dims) -> Result<Volume> {
    let dims = v.dims;
    if target.iter().zip(dims.iter()).any(|(&t, &n)| t == 0 || t > n) {
        return Err(Error::InvalidTarget { dims, target });
    }
    if target == dims {
        return Ok(v.clone());
    }
    let [nx, ny, nz] = dims;
    let [tx, ty, tz] = target;
    let (mx, my, mz) = (axis_map(nx, tx), axis_map(ny, ty), axis_map(nz, tz));
    let count_of = |map: &[usize], t: usize| {
        let mut c = vec![0u64; t];
        for &m in map {
            c[m] += 1;
        }
        c
    };
    let (cx, cy, cz) = (count_of(&mx, tx), count_of(&my, ty), count_of(&mz, tz));

    // Source z-layers feeding each target layer form a contiguous run.
    let mut z_start = vec![usize::MAX; tz];
    let mut z_end = vec![0usize; tz];
    for (z, &k) in mz.iter().enumerate() {
        z_start[k] = z_start[k].min(z);
        z_end[k] = z;
    }

    let mut out = vec![0u8; tx * ty * tz];
    out.par_chunks_mut(tx * ty)
        .enumerate()
        .for_each(|(k, plane)| {
            let mut acc = vec![0u64; tx * ty];
            for z in z_start[k]..=z_end[k] {
                let src = v.slice(z);
                for y in 0..ny {
                    let row = &src[y * nx..(y + 1) * nx];
                    let dst = &mut acc[my[y] * tx..(my[y] + 1) * tx];
                    for (x, &val) in row.iter().enumerate() {
                        dst[mx[x]] += val as u64;
                    }
                }
            }
            for j in 0..ty {
                for i in 0..tx {
                    let count = cx[i] * cy[j] * cz[k];
                    let sum = acc[j * tx + i];
                    plane[j * tx + i] = ((2 * sum + count) / (2 * count)) as u8;
                }
            }
        });
    let mut down = Volume::new(target, out)?;
    down.voxel_size_um = v.voxel_size_um;
    Ok(down)
}

/// Cubic downscale to `s` voxels per axis.
pub fn downscale_cubic(v: &Volume, s: usize) -> Result<Volume> {
    downscale_volume(v, [s, s, s])
}

/// Catalogue entry for one dataset.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct DatasetMeta {
    pub id: String,
    pub name: String,
    pub dims: Dims,
    pub raw_bytes: u64,
}

impl DatasetMeta {
    pub fn new(id: impl Into<String>, name: impl Into<String>, dims: Dims) -> Self {
        Self {
            id: id.into(),
            name: name.into(),
            dims,
            raw_bytes: dims.iter().map(|&d| d as u64).product(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn histogram_of_constant_volume() {
        let v = Volume::filled([128, 128, 128], 7).unwrap();
        let h = volume_histogram(&v, None).unwrap();
        assert_eq!(h.get(7), 2_097_152);
        assert_eq!(h.total(), 2_097_152);
        assert!(h.bins().iter().enumerate().all(|(i, &c)| i == 7 || c == 0));
    }

    #[test]
    fn histogram_of_two_halves() {
        let v = Volume::from_fn([8, 8, 8], |x, _, _| if x < 4 { 10 } else { 200 }).unwrap();
        let h = volume_histogram(&v, None).unwrap();
        assert_eq!(h.get(10), h.total() / 2);
        assert_eq!(h.get(200), h.total() / 2);
    }

    #[test]
    fn histogram_of_top_three_slices() {
        let v = Volume::zeros([512, 512, 100]).unwrap();
        let h = volume_histogram(&v, Some(v.top_range(3))).unwrap();
        assert_eq!(h.total(), 786_432);
        assert!(matches!(
            volume_histogram(&v, Some(98..=100)),
            Err(Error::RangeOutOfBounds { .. })
        ));
    }

    #[test]
    fn downscale_rounds_half_up() {
        let v = Volume::new([2, 2, 2], vec![0, 0, 0, 0, 255, 255, 255, 255]).unwrap();
        let d = downscale_volume(&v, [1, 1, 1]).unwrap();
        assert_eq!(d.voxels(), &[128]);
    }

    #[test]
    fn downscale_identity_and_constant() {
        let v = Volume::from_fn([9, 7, 5], |x, y, z| (x * 31 + y * 7 + z) as u8).unwrap();
        assert_eq!(downscale_volume(&v, [9, 7, 5]).unwrap(), v);
        let c = Volume::filled([17, 13, 11], 42).unwrap();
        let d = downscale_volume(&c, [5, 4, 3]).unwrap();
        assert!(d.voxels().iter().all(|&x| x == 42));
    }

    #[test]
    fn downscale_rejects_upscale_and_zero() {
        let v = Volume::zeros([4, 4, 4]).unwrap();
        assert!(matches!(
            downscale_volume(&v, [5, 4, 4]),
            Err(Error::InvalidTarget { .. })
        ));
        assert!(matches!(
            downscale_volume(&v, [0, 4, 4]),
            Err(Error::InvalidTarget { .. })
        ));
    }

    #[test]
    fn non_integer_ratio_uses_voxel_centers() {
        // centers 1/6, 1/2, 5/6 fall in the half-open cells [0, 1/2) and [1/2, 1)
        let v = Volume::new([3, 1, 1], vec![10, 20, 90]).unwrap();
        let d = downscale_volume(&v, [2, 1, 1]).unwrap();
        assert_eq!(d.voxels(), &[10, 55]);
    }

    #[test]
    fn raw_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut v = Volume::from_fn([5, 6, 7], |x, y, z| (x ^ y ^ z) as u8 * 9).unwrap();
        v.voxel_size_um = Some(1.22);
        let header = v.save_raw(dir.path(), "vol").unwrap();
        let back = Volume::load_raw(&header).unwrap();
        assert_eq!(back, v);
        let json: serde_json::Value =
            serde_json::from_slice(&fs::read(&header).unwrap()).unwrap();
        assert_eq!(json["dims"], serde_json::json!([5, 6, 7]));
        assert_eq!(json["dtype"], "u8");
        assert_eq!(json["order"], "xyz");
    }

    #[test]
    fn dataset_meta_raw_bytes() {
        let meta = DatasetMeta::new("b", "B", [1536, 1536, 1152]);
        assert_eq!(meta.raw_bytes, 2_717_908_992);
    }

    fn small_volume() -> impl Strategy<Value = Volume> {
        (1usize..12, 1usize..12, 1usize..12).prop_flat_map(|(x, y, z)| {
            proptest::collection::vec(any::<u8>(), x * y * z)
                .prop_map(move |vox| Volume::new([x, y, z], vox).unwrap())
        })
    }

    proptest! {
        #[test]
        fn histogram_conserves_voxels(v in small_volume()) {
            let h = volume_histogram(&v, None).unwrap();
            prop_assert_eq!(h.total() as usize, v.len());
            prop_assert_eq!(h.bins().iter().sum::<u64>(), h.total());
        }

        #[test]
        fn even_downscale_preserves_mean(v in small_volume(), f in 1usize..4) {
            let [nx, ny, nz] = v.dims();
            let dims = [nx * f, ny * f, nz * f];
            let big = Volume::from_fn(dims, |x, y, z| v.get(x / f, y / f, z / f) ^ ((x + y + z) % 2) as u8).unwrap();
            let d = downscale_volume(&big, [nx, ny, nz]).unwrap();
            prop_assert!((d.mean() - big.mean()).abs() <= 0.5 + 1e-9);
        }
    }
}
