//! Global thresholds: the Otsu sweep over all 256 cut points and iterative threshold
//! selection (ITS), plus binary classification of volumes.
//!
//! Both methods split a histogram at `T` into region A = bins `[0, T)` and region B = bins
//! `[T, 255]`. Foreground is every voxel with value `>= T`.

use num_bigint::BigUint;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::{Dims, Histogram256, Volume};

pub const DEFAULT_ITS_START: u8 = 128;
pub const DEFAULT_ITS_CAP: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Otsu,
    Its,
}

/// Statistics of one Otsu cut point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OtsuSweepStats {
    pub t: u8,
    pub w_a: f64,
    pub w_b: f64,
    pub u_a: f64,
    pub u_b: f64,
    /// Between-class criterion `w_a * w_b * (u_a - u_b)^2`.
    pub sigma_b: f64,
    /// Within-class sum `w_a * var_a + w_b * var_b`.
    pub sigma_w: f64,
}

/// One ITS refinement: region means at `t` and the threshold they propose.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ItsStep {
    pub t: u8,
    pub mu1: f64,
    pub mu2: f64,
    pub next: u8,
    pub residual: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Trace {
    Otsu(Vec<OtsuSweepStats>),
    Its(Vec<ItsStep>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdResult {
    pub value: u8,
    pub method: Method,
    /// Cut points evaluated (Otsu, always 256) or refinements performed (ITS).
    pub iterations: usize,
    /// Histogram regions summed, two per evaluated cut point.
    pub region_scans: usize,
    /// Individual histogram bins read while summing regions.
    pub bin_visits: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trace: Option<Trace>,
}

/// Count and intensity sum of `bins[lo..hi]`.
#[inline]
fn region(h: &Histogram256, lo: usize, hi: usize) -> (u64, u64) {
    h.bins()[lo..hi]
        .iter()
        .enumerate()
        .fold((0, 0), |(n, s), (i, &c)| (n + c, s + c * (lo + i) as u64))
}

fn check_nonempty(h: &Histogram256) -> Result<()> {
    if h.total() == 0 {
        return Err(Error::EmptyHistogram);
    }
    Ok(())
}

/// `sigma_b * N^2` as the exact fraction `(s_a*N - S*n_a)^2 / (n_a*n_b)`; zero for an empty side.
fn exact_between(n_a: u64, s_a: u64, total: u64, sum: u64) -> (BigUint, BigUint) {
    let n_b = total - n_a;
    if n_a == 0 || n_b == 0 {
        return (BigUint::ZERO, BigUint::from(1u8));
    }
    let lhs = s_a as u128 * total as u128;
    let rhs = sum as u128 * n_a as u128;
    let diff = BigUint::from(lhs.abs_diff(rhs));
    (&diff * &diff, BigUint::from(n_a) * BigUint::from(n_b))
}

fn sweep_stats(t: u8, n_a: u64, s_a: u64, q_a: f64, total: u64, sum: u64, sum_sq: f64) -> OtsuSweepStats {
    let n = total as f64;
    let n_b = total - n_a;
    let s_b = sum - s_a;
    let (w_a, w_b) = (n_a as f64 / n, n_b as f64 / n);
    let u_a = if n_a > 0 { s_a as f64 / n_a as f64 } else { 0.0 };
    let u_b = if n_b > 0 { s_b as f64 / n_b as f64 } else { 0.0 };
    let var = |cnt: u64, s: f64, q: f64| {
        if cnt == 0 {
            0.0
        } else {
            let m = s / cnt as f64;
            (q / cnt as f64 - m * m).max(0.0)
        }
    };
    let sigma_b = if n_a == 0 || n_b == 0 {
        0.0
    } else {
        w_a * w_b * (u_a - u_b).powi(2)
    };
    OtsuSweepStats {
        t,
        w_a,
        w_b,
        u_a,
        u_b,
        sigma_b,
        sigma_w: w_a * var(n_a, s_a as f64, q_a) + w_b * var(n_b, s_b as f64, sum_sq - q_a),
    }
}

/// Otsu threshold: the smallest `T` in `[0, 255]` maximizing the between-class criterion.
///
/// The criterion is compared in exact integer arithmetic so that plateaus of equal value are
/// resolved to their first cut point.
pub fn otsu_threshold(h: &Histogram256) -> Result<ThresholdResult> {
    check_nonempty(h)?;
    let occupied: Vec<usize> = (0..256).filter(|&i| h.bins()[i] > 0).collect();
    if occupied.len() == 1 {
        return Err(Error::DegenerateHistogram(occupied[0] as u8));
    }
    let total = h.total();
    let (_, sum) = region(h, 0, 256);
    let sum_sq: f64 = h
        .bins()
        .iter()
        .enumerate()
        .map(|(i, &c)| c as f64 * (i * i) as f64)
        .sum();

    let mut best_t = 0u8;
    let (mut best_num, mut best_den) = (BigUint::ZERO, BigUint::from(1u8));
    let mut stats = Vec::with_capacity(256);
    let mut bin_visits = 0;
    for t in 0..256usize {
        let (n_a, s_a) = region(h, 0, t);
        let (n_b, _) = region(h, t, 256);
        bin_visits += 256;
        debug_assert_eq!(n_a + n_b, total);
        let q_a: f64 = (0..t).map(|i| h.bins()[i] as f64 * (i * i) as f64).sum();
        stats.push(sweep_stats(t as u8, n_a, s_a, q_a, total, sum, sum_sq));
        let (num, den) = exact_between(n_a, s_a, total, sum);
        if &num * &best_den > &best_num * &den {
            best_num = num;
            best_den = den;
            best_t = t as u8;
        }
    }
    Ok(ThresholdResult {
        value: best_t,
        method: Method::Otsu,
        iterations: 256,
        region_scans: 512,
        bin_visits,
        trace: Some(Trace::Otsu(stats)),
    })
}

/// ITS with the default iteration cap.
pub fn its_threshold(h: &Histogram256, t_start: u8) -> Result<ThresholdResult> {
    its_threshold_with_cap(h, t_start, DEFAULT_ITS_CAP)
}

/// Iterates `T <- round((mu1 + mu2) / 2)` until two successive thresholds agree.
pub fn its_threshold_with_cap(h: &Histogram256, t_start: u8, cap: usize) -> Result<ThresholdResult> {
    check_nonempty(h)?;
    if !(1..=254).contains(&t_start) {
        return Err(Error::InvalidStart(t_start as i64));
    }
    let mut t = t_start;
    let mut steps = Vec::new();
    loop {
        if steps.len() >= cap {
            return Err(Error::NonConvergence { cap, last: t });
        }
        let (n1, s1) = region(h, 0, t as usize);
        let (n2, s2) = region(h, t as usize, 256);
        if n1 == 0 || n2 == 0 {
            return Err(Error::EmptyRegion { threshold: t });
        }
        let next = round_half_up_midpoint(n1, s1, n2, s2);
        steps.push(ItsStep {
            t,
            mu1: s1 as f64 / n1 as f64,
            mu2: s2 as f64 / n2 as f64,
            next,
            residual: t.abs_diff(next),
        });
        if next == t {
            let iterations = steps.len();
            return Ok(ThresholdResult {
                value: t,
                method: Method::Its,
                iterations,
                region_scans: 2 * iterations,
                bin_visits: 256 * iterations,
                trace: Some(Trace::Its(steps)),
            });
        }
        t = next;
    }
}

/// `floor((s1/n1 + s2/n2) / 2 + 1/2)` without leaving integers.
#[inline]
fn round_half_up_midpoint(n1: u64, s1: u64, n2: u64, s2: u64) -> u8 {
    let (n1, s1, n2, s2) = (n1 as u128, s1 as u128, n2 as u128, s2 as u128);
    let num = s1 * n2 + s2 * n1 + n1 * n2;
    let den = 2 * n1 * n2;
    (num / den).min(255) as u8
}

/// Either method with its default parameters.
pub fn threshold(h: &Histogram256, method: Method, t_start: u8) -> Result<ThresholdResult> {
    match method {
        Method::Otsu => otsu_threshold(h),
        Method::Its => its_threshold(h, t_start),
    }
}

/// Otsu over the non-zero voxels only, as used after container removal where masked-out voxels
/// are zero and must not pull the split towards the empty surround.
pub fn otsu_excluding_zero(v: &Volume) -> Result<ThresholdResult> {
    otsu_threshold(&Histogram256::from_values(v.voxels()).without_bin(0))
}

/// Voxel-wise classification, one flag per voxel in volume order.
#[derive(Clone, PartialEq, Eq)]
pub struct BinaryMask {
    dims: Dims,
    bits: Vec<bool>,
}

impl std::fmt::Debug for BinaryMask {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BinaryMask")
            .field("dims", &self.dims)
            .field("count", &self.count())
            .finish()
    }
}

impl BinaryMask {
    pub fn new(dims: Dims, bits: Vec<bool>) -> Self {
        assert_eq!(bits.len(), dims.iter().product::<usize>());
        Self { dims, bits }
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, x: usize, y: usize, z: usize) -> bool {
        self.bits[(z * self.dims[1] + y) * self.dims[0] + x]
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_subset_of(&self, other: &BinaryMask) -> bool {
        self.bits.iter().zip(&other.bits).all(|(&a, &b)| !a || b)
    }

    /// Voxels on which the two masks disagree.
    pub fn difference_count(&self, other: &BinaryMask) -> usize {
        self.bits.iter().zip(&other.bits).filter(|(a, b)| a != b).count()
    }

    /// Fraction of `truth` voxels that are set in `self`; 1.0 for an empty truth.
    pub fn recall(&self, truth: &BinaryMask) -> f64 {
        let positives = truth.count();
        if positives == 0 {
            return 1.0;
        }
        let hit = self.bits.iter().zip(&truth.bits).filter(|(&a, &b)| a && b).count();
        hit as f64 / positives as f64
    }
}

/// True exactly where the voxel value is `>= t`.
pub fn apply_threshold(v: &Volume, t: u8) -> BinaryMask {
    BinaryMask::new(v.dims(), v.voxels().par_iter().map(|&x| x >= t).collect())
}
