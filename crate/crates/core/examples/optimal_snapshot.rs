//! Sweeps the camera around the z axis and keeps the view with the highest image entropy.
//!
//! `cargo run --example optimal_snapshot -- [out.png] [views]`

use ctprev::phantom::presets;
use ctprev::render::{optimal_snapshot, ViewParams};
use ctprev::threshold::otsu_excluding_zero;

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let out = args.next().unwrap_or_else(|| "snapshot.png".into());
    let views: usize = args.next().map(|a| a.parse()).transpose()?.unwrap_or(36);

    let v = presets::l_slab(128, 0).generate()?.volume;
    let t = otsu_excluding_zero(&v)?.value;
    let snap = optimal_snapshot(&v, views, &ViewParams::surface(t).with_size(512, 512))?;
    for (azimuth, h) in &snap.scores {
        println!("{azimuth:>6.1}  {h:.4}");
    }
    snap.image.save(&out)?;
    println!("best azimuth {} (H={:.4}) -> {out}", snap.azimuth_deg, snap.entropy.h);
    Ok(())
}
