//! Generates a phantom stack, ingests it and builds all three previews into a bundle root.
//!
//! `cargo run --release --example build_bundle -- [root] [size]`

use std::path::PathBuf;

use ctprev::phantom::presets;
use ctprev::pipeline::{BundleStore, PipelineConfig, PreviewSet};
use ctprev::stack::write_slice_stack;

fn main() -> anyhow::Result<()> {
    tracing_subscriber::fmt().with_env_filter("info").init();
    let mut args = std::env::args().skip(1);
    let root: PathBuf = args.next().unwrap_or_else(|| "bundles".into()).into();
    let size: usize = args.next().map(|a| a.parse()).transpose()?.unwrap_or(512);

    let phantom = presets::cylinder_with_sphere(size, size, 7).generate()?;
    let stack = tempfile::tempdir()?;
    let manifest = write_slice_stack(&phantom.volume, stack.path(), "Phantom Cylinder")?;

    let store = BundleStore::open(&root)?;
    let meta = store.ingest_stack(&manifest, None)?;
    let bundle = store.build(&meta.id, PreviewSet::ALL, &PipelineConfig::default())?;
    println!("{} ({:?}, {} raw bytes)", meta.id, meta.dims, meta.raw_bytes);
    if let Some(t) = &bundle.thumbnail {
        println!("  thumbnail: azimuth {} entropy {:.3} threshold {:?}", t.azimuth, t.entropy, t.threshold);
    }
    if let Some(d) = &bundle.data {
        println!("  data: {} bins filtered, {} bytes", d.artifact_bins.len(), d.payload_bytes);
    }
    if let Some(i) = &bundle.interactive {
        for s in &i.schemes {
            println!("  interactive {}: threshold {:?}, {} PNG bytes", s.s, s.threshold, s.payload_bytes);
        }
    }
    for r in &bundle.build_log.0 {
        println!("  {:?} {}", r.preview, r.stage.name());
    }
    Ok(())
}
