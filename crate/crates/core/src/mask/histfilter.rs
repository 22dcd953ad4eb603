use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::volume::{volume_histogram, Volume};

pub const DEFAULT_TOP_SLICES: usize = 3;
pub const DEFAULT_ARTIFACT_FRAC: f64 = 0.0005;

/// A set of grey values; serialized as a sorted list.
#[derive(Clone, Copy, PartialEq, Eq)]
pub struct BinSet([bool; 256]);

impl Default for BinSet {
    fn default() -> Self {
        Self([false; 256])
    }
}

impl std::fmt::Debug for BinSet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_set().entries(self.iter()).finish()
    }
}

impl BinSet {
    pub fn all() -> Self {
        Self([true; 256])
    }

    pub fn contains(&self, bin: u8) -> bool {
        self.0[bin as usize]
    }

    pub fn insert(&mut self, bin: u8) {
        self.0[bin as usize] = true;
    }

    pub fn len(&self) -> usize {
        self.0.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn iter(&self) -> impl Iterator<Item = u8> + '_ {
        (0..=255u8).filter(|&b| self.contains(b))
    }
}

impl FromIterator<u8> for BinSet {
    fn from_iter<I: IntoIterator<Item = u8>>(iter: I) -> Self {
        let mut set = BinSet::default();
        for b in iter {
            set.insert(b);
        }
        set
    }
}

impl Serialize for BinSet {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_seq(self.iter())
    }
}

impl<'de> Deserialize<'de> for BinSet {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        Ok(Vec::<u8>::deserialize(d)?.into_iter().collect())
    }
}

/// Grey values that make up more than `frac` of the `n_top` topmost slices, plus bin 0.
pub fn artifact_bins(v: &Volume, n_top: usize, frac: f64) -> Result<BinSet> {
    let nz = v.dims()[2];
    if n_top == 0 || n_top > nz {
        return Err(Error::RangeOutOfBounds {
            start: nz.saturating_sub(n_top),
            end: nz.saturating_sub(1),
            nz,
        });
    }
    let h = volume_histogram(v, Some(v.top_range(n_top)))?;
    let floor = frac * h.total() as f64;
    let mut set: BinSet = (0..=255u8).filter(|&b| h.get(b) as f64 > floor).collect();
    set.insert(0);
    Ok(set)
}

/// Sets every voxel whose value is in `bins` to 0 and leaves the rest untouched.
pub fn filter_histogram_bins(v: &Volume, bins: &BinSet) -> Volume {
    let mut out = v.clone();
    filter_in_place(out.voxels_mut(), bins);
    out
}

pub(crate) fn filter_in_place(values: &mut [u8], bins: &BinSet) {
    use rayon::prelude::*;
    let lut: [u8; 256] = std::array::from_fn(|i| if bins.0[i] { 0 } else { i as u8 });
    values.par_iter_mut().for_each(|p| *p = lut[*p as usize]);
}
