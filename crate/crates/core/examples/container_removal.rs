//! Detects the sample container on the top slice and masks it away in every layer.
//!
//! `cargo run --example container_removal -- [size]`

use ctprev::mask::{apply_circle_mask, detect_container_circle};
use ctprev::phantom::presets;
use ctprev::threshold::{apply_threshold, otsu_excluding_zero, otsu_threshold};
use ctprev::volume::volume_histogram;

fn main() -> anyhow::Result<()> {
    let size: usize = std::env::args().nth(1).map(|a| a.parse()).transpose()?.unwrap_or(256);
    let p = presets::narrow_histogram(size, 1).generate()?;
    let truth = p.object_mask();
    let expected = p.circle().expect("phantom has a container");

    let before = otsu_threshold(&volume_histogram(&p.volume, None)?)?.value;
    let circle = detect_container_circle(&p.volume.top_slice())?;
    println!(
        "container: found ({:.2}, {:.2}) r {:.2} votes {:.2}, truth ({:.2}, {:.2}) r {:.2}",
        circle.cx, circle.cy, circle.r, circle.votes, expected.cx, expected.cy, expected.r
    );
    let masked = apply_circle_mask(&p.volume, &circle.with_margin())?;
    let after = otsu_excluding_zero(&masked)?.value;
    println!(
        "object recall: {:.1}% at T={before} before masking, {:.1}% at T={after} after",
        100.0 * apply_threshold(&p.volume, before).recall(&truth),
        100.0 * apply_threshold(&masked, after).recall(&truth)
    );
    Ok(())
}
