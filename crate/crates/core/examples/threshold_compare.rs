//! Otsu's full sweep against the iterative (ITS) threshold on bimodal phantoms.
//!
//! `cargo run --example threshold_compare -- [size] [count]`

use ctprev::phantom::presets;
use ctprev::threshold::{apply_threshold, its_threshold, otsu_threshold, DEFAULT_ITS_START};
use ctprev::volume::volume_histogram;

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let size: usize = args.next().map(|a| a.parse()).transpose()?.unwrap_or(64);
    let count: u64 = args.next().map(|a| a.parse()).transpose()?.unwrap_or(5);

    println!("seed  otsu  its  its_iters  otsu_scans  its_scans  mask_diff");
    for seed in 0..count {
        let v = presets::bimodal(size, seed).generate()?.volume;
        let h = volume_histogram(&v, None)?;
        let otsu = otsu_threshold(&h)?;
        let its = its_threshold(&h, DEFAULT_ITS_START)?;
        let diff = apply_threshold(&v, otsu.value).difference_count(&apply_threshold(&v, its.value));
        println!(
            "{seed:>4}  {:>4}  {:>3}  {:>9}  {:>10}  {:>9}  {:>8.4}%",
            otsu.value,
            its.value,
            its.iterations,
            otsu.region_scans,
            its.region_scans,
            100.0 * diff as f64 / v.len() as f64
        );
    }
    Ok(())
}
