use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use ctprev::mask::{
    apply_circle_mask, artifact_bins, detect_container_circle, filter_histogram_bins,
    DEFAULT_ARTIFACT_FRAC, DEFAULT_TOP_SLICES,
};
use ctprev::phantom::presets;
use ctprev::pipeline::{BundleStore, PipelineConfig, PreviewKind, PreviewSet};
use ctprev::render::{optimal_snapshot, ViewParams, DEFAULT_VIEWS};
use ctprev::stack::{load_volume, write_slice_stack};
use ctprev::threshold::{otsu_excluding_zero, threshold, DEFAULT_ITS_START};
use ctprev::volume::volume_histogram;
use ctprev::Method;

#[derive(Parser)]
#[command(name = "ctprev", version, about = "Micro-CT preview builder and server")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct RootArg {
    /// Bundle root directory.
    #[arg(long, env = "CTPREV_ROOT", default_value = "bundles")]
    root: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum PreviewArg {
    List,
    Data,
    Interactive,
    All,
}

#[derive(Clone, Copy, ValueEnum)]
enum PresetArg {
    CylinderSphere,
    Bimodal,
    Narrow,
    ArtifactBand,
    LSlab,
}

#[derive(Subcommand)]
enum Cmd {
    /// Store a slice stack as a dataset source.
    Ingest {
        manifest: PathBuf,
        #[arg(long, env = "CTPREV_ROOT", default_value = "bundles")]
        out: PathBuf,
        /// Dataset id; derived from the stack name when omitted.
        #[arg(long)]
        id: Option<String>,
    },
    /// Build preview products for an ingested dataset.
    Build {
        id: String,
        #[command(flatten)]
        root: RootArg,
        #[arg(long, value_enum, default_value = "all")]
        preview: PreviewArg,
        /// Render the thumbnail from the full-resolution volume instead of a 256 working copy.
        #[arg(long)]
        full_res: bool,
    },
    /// Check every file of a bundle against its recorded SHA-256.
    Verify {
        id: String,
        #[command(flatten)]
        root: RootArg,
    },
    /// Serve built bundles over HTTP.
    Serve {
        #[command(flatten)]
        root: RootArg,
        #[arg(long, env = "CTPREV_PORT", default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: std::net::IpAddr,
        /// Directory of static viewer assets served at `/`.
        #[arg(long)]
        assets: Option<PathBuf>,
    },
    /// Compute a global threshold of a volume histogram.
    Threshold {
        volume: PathBuf,
        #[arg(long, value_enum, default_value = "otsu")]
        method: MethodArg,
        #[arg(long, default_value_t = DEFAULT_ITS_START as i64)]
        start: i64,
    },
    #[command(subcommand)]
    Mask(MaskCmd),
    #[command(subcommand)]
    Render(RenderCmd),
    /// Write a synthetic phantom as a slice stack.
    Phantom {
        #[arg(value_enum)]
        preset: PresetArg,
        #[arg(long, default_value_t = 128)]
        size: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Otsu,
    Its,
}

#[derive(Subcommand)]
enum MaskCmd {
    /// Detect the container circle on the top slice.
    Container {
        volume: PathBuf,
        /// Also write the masked volume as a raw volume into this directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Grey values over-represented in the top slices.
    Histfilter {
        volume: PathBuf,
        #[arg(long, default_value_t = DEFAULT_TOP_SLICES)]
        top: usize,
        #[arg(long, default_value_t = DEFAULT_ARTIFACT_FRAC)]
        frac: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Surface,
    Additive,
}

#[derive(Subcommand)]
enum RenderCmd {
    /// Render the highest-entropy view of a volume.
    Snapshot {
        volume: PathBuf,
        #[arg(long, default_value_t = DEFAULT_VIEWS)]
        views: usize,
        #[arg(long, value_enum, default_value = "surface")]
        mode: ModeArg,
        /// Iso-value for surface mode, or `auto` for the Otsu threshold.
        #[arg(long, default_value = "auto")]
        threshold: String,
        #[arg(long, default_value_t = 512)]
        size: usize,
        #[arg(long, default_value_t = 512)]
        steps: usize,
        /// Output directory for `thumbnail.png`.
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
}

fn print(value: serde_json::Value) -> anyhow::Result<()> {
    println!("{}", serde_json::to_string(&value)?);
    Ok(())
}

fn open_volume(path: &Path) -> anyhow::Result<ctprev::Volume> {
    load_volume(path).with_context(|| format!("loading {}", path.display()))
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.cmd {
        Cmd::Ingest { manifest, out, id } => {
            let store = BundleStore::open(out)?;
            let meta = store.ingest_stack(&manifest, id.as_deref())?;
            print(serde_json::to_value(meta)?)
        }
        Cmd::Build {
            id,
            root,
            preview,
            full_res,
        } => {
            let store = BundleStore::open(root.root)?;
            let previews = match preview {
                PreviewArg::List => PreviewSet::only(PreviewKind::List),
                PreviewArg::Data => PreviewSet::only(PreviewKind::Data),
                PreviewArg::Interactive => PreviewSet::only(PreviewKind::Interactive),
                PreviewArg::All => PreviewSet::ALL,
            };
            let mut cfg = PipelineConfig::default();
            if full_res {
                cfg.list_working_size = None;
            }
            let bundle = store.build(&id, previews, &cfg)?;
            print(json!({
                "id": bundle.meta.id,
                "files": bundle.checksums.len(),
                "stages": bundle.build_log.0.iter().map(|r| (r.preview, r.stage)).collect::<Vec<_>>(),
            }))
        }
        Cmd::Verify { id, root } => {
            let bundle = BundleStore::open(root.root)?.verify(&id)?;
            print(json!({ "id": bundle.meta.id, "files": bundle.checksums.len(), "ok": true }))
        }
        Cmd::Serve {
            root,
            port,
            host,
            assets,
        } => {
            let store = BundleStore::open(root.root)?;
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(ctprev::service::serve(store, SocketAddr::new(host, port), assets))?;
            Ok(())
        }
        Cmd::Threshold {
            volume,
            method,
            start,
        } => {
            let v = open_volume(&volume)?;
            let h = volume_histogram(&v, None)?;
            let method = match method {
                MethodArg::Otsu => Method::Otsu,
                MethodArg::Its => Method::Its,
            };
            let start = u8::try_from(start).map_err(|_| ctprev::Error::InvalidStart(start))?;
            let r = threshold(&h, method, start)?;
            print(json!({ "value": r.value, "iterations": r.iterations }))
        }
        Cmd::Mask(MaskCmd::Container { volume, out }) => {
            let v = open_volume(&volume)?;
            let circle = detect_container_circle(&v.top_slice())?;
            if let Some(dir) = out {
                apply_circle_mask(&v, &circle.with_margin())?.save_raw(&dir, "masked")?;
            }
            print(serde_json::to_value(circle)?)
        }
        Cmd::Mask(MaskCmd::Histfilter {
            volume,
            top,
            frac,
            out,
        }) => {
            let v = open_volume(&volume)?;
            let bins = artifact_bins(&v, top, frac)?;
            if let Some(dir) = out {
                filter_histogram_bins(&v, &bins).save_raw(&dir, "filtered")?;
            }
            print(json!({ "bins": bins }))
        }
        Cmd::Render(RenderCmd::Snapshot {
            volume,
            views,
            mode,
            threshold,
            size,
            steps,
            out,
        }) => {
            let v = open_volume(&volume)?;
            let template = match mode {
                ModeArg::Additive => ViewParams::additive(),
                ModeArg::Surface => {
                    let t = if threshold == "auto" {
                        otsu_excluding_zero(&v)?.value
                    } else {
                        threshold
                            .parse::<u8>()
                            .with_context(|| format!("threshold {threshold:?} is not auto or 0..=255"))?
                    };
                    ViewParams::surface(t)
                }
            }
            .with_size(size, steps);
            let snap = optimal_snapshot(&v, views, &template)?;
            std::fs::create_dir_all(&out)?;
            snap.image.save(out.join("thumbnail.png"))?;
            print(json!({ "azimuth": snap.azimuth_deg, "entropy": snap.entropy.h }))
        }
        Cmd::Phantom {
            preset,
            size,
            seed,
            out,
        } => {
            if size < 16 {
                bail!("size must be at least 16");
            }
            let (spec, name) = match preset {
                PresetArg::CylinderSphere => (presets::cylinder_with_sphere(size, size, seed), "cylinder-sphere"),
                PresetArg::Bimodal => (presets::bimodal(size, seed), "bimodal"),
                PresetArg::Narrow => (presets::narrow_histogram(size, seed), "narrow"),
                PresetArg::ArtifactBand => (presets::artifact_band(size, seed), "artifact-band"),
                PresetArg::LSlab => (presets::l_slab(size, seed), "l-slab"),
            };
            let phantom = spec.generate()?;
            let manifest = write_slice_stack(&phantom.volume, &out, name)?;
            print(json!({ "manifest": manifest, "dims": phantom.volume.dims() }))
        }
    }
}

fn main() -> std::process::ExitCode {
    let cli = Cli::parse();
    let default_level = if matches!(cli.cmd, Cmd::Serve { .. }) { "info" } else { "warn" };
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new(default_level)),
        )
        .init();
    match run(cli) {
        Ok(()) => std::process::ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            std::process::ExitCode::FAILURE
        }
    }
}
