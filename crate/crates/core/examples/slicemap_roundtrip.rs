//! Packs a volume into slicemap atlases at every scheme, writes them as PNG and reads them back.
//!
//! `cargo run --example slicemap_roundtrip -- [out_dir]`

use std::path::PathBuf;

use ctprev::phantom::presets;
use ctprev::slicemap::{decode_slicemaps, encode_slicemaps, plan_scheme, SlicemapSet, SCHEMES};
use ctprev::volume::downscale_cubic;

fn main() -> anyhow::Result<()> {
    let out: PathBuf = std::env::args().nth(1).unwrap_or_else(|| "slicemaps".into()).into();
    let v = presets::cylinder_with_sphere(512, 512, 0).generate()?.volume;
    for s in SCHEMES {
        let scheme = plan_scheme(s)?;
        let set = encode_slicemaps(&v, &scheme)?;
        let dir = out.join(s.to_string());
        let files = set.write(&dir)?;
        let png: usize = files.iter().map(|(_, b)| b.len()).sum();
        let back = decode_slicemaps(&SlicemapSet::read(&dir)?)?;
        println!(
            "{s}^3: {} atlases of {}^2, {:.2} MB raw, {:.2} MB PNG, exact: {}",
            scheme.map_count,
            scheme.atlas_dim,
            set.payload_bytes() as f64 / 1e6,
            png as f64 / 1e6,
            back == downscale_cubic(&v, s)?
        );
    }
    println!("written to {}", out.display());
    Ok(())
}
