//! Removes grey values that dominate the specimen-free top slices.
//!
//! `cargo run --example histogram_filter -- [size]`

use ctprev::mask::{artifact_bins, filter_histogram_bins, DEFAULT_ARTIFACT_FRAC, DEFAULT_TOP_SLICES};
use ctprev::phantom::presets;
use ctprev::volume::volume_histogram;

fn main() -> anyhow::Result<()> {
    let size: usize = std::env::args().nth(1).map(|a| a.parse()).transpose()?.unwrap_or(128);
    let p = presets::artifact_band(size, 2).generate()?;
    let bins = artifact_bins(&p.volume, DEFAULT_TOP_SLICES, DEFAULT_ARTIFACT_FRAC)?;
    let listed: Vec<u8> = bins.iter().collect();
    println!("artifact bins ({}): {listed:?}", bins.len());

    let filtered = filter_histogram_bins(&p.volume, &bins);
    let (a, b) = (volume_histogram(&p.volume, None)?, volume_histogram(&filtered, None)?);
    let truth = p.object_mask();
    let kept = truth
        .bits()
        .iter()
        .zip(filtered.voxels())
        .filter(|(&t, &v)| t && v != 0)
        .count();
    println!(
        "nonzero voxels {} -> {}, object voxels kept {kept}/{}",
        a.total() - a.get(0),
        b.total() - b.get(0),
        truth.count()
    );
    Ok(())
}
