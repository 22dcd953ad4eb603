//! The three preview pipelines and the on-disk bundle store.
//!
//! | preview      | stages                                                               |
//! |--------------|----------------------------------------------------------------------|
//! | list         | 3D conversion, thresholding + container removal, server-side rendering |
//! | data         | slicemaps conversion, histogram filtering                            |
//! | interactive  | slicemaps conversion, thresholding + container removal               |
//!
//! Every builder records the stages it ran in a [`BuildLog`].

mod bundle;

pub use bundle::{
    BundleStore, DataMeta, FileDigest, InteractiveMeta, InteractiveScheme, PreviewBundle,
    PreviewSet, ThumbnailMeta, META_FILE, SIDECAR_FILE, THUMBNAIL_FILE,
};

use std::borrow::Cow;

use image::GrayImage;
use serde::{Deserialize, Serialize};
use tracing::{info, warn};

use crate::error::{Error, Result};
use crate::mask::{
    apply_circle_mask, artifact_bins, detect_with_config, BinSet, Circle, HoughConfig,
    DEFAULT_ARTIFACT_FRAC, DEFAULT_TOP_SLICES,
};
use crate::render::{optimal_snapshot, RenderMode, ViewParams, DEFAULT_VIEWS};
use crate::slicemap::{encode_png, pack_cube, plan_scheme, SlicemapSet, SCHEMES};
use crate::threshold::otsu_excluding_zero;
use crate::volume::{downscale_cubic, downscale_volume, Dims, Volume};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PreviewKind {
    List,
    Data,
    Interactive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    #[serde(rename = "3d_conversion")]
    Conversion3d,
    ThresholdingContainerRemoval,
    ServerSideRendering,
    SlicemapsConversion,
    HistogramFiltering,
}

impl Stage {
    pub fn name(&self) -> &'static str {
        match self {
            Stage::Conversion3d => "3d_conversion",
            Stage::ThresholdingContainerRemoval => "thresholding_container_removal",
            Stage::ServerSideRendering => "server_side_rendering",
            Stage::SlicemapsConversion => "slicemaps_conversion",
            Stage::HistogramFiltering => "histogram_filtering",
        }
    }
}

impl PreviewKind {
    /// Stage sequence each preview runs.
    pub fn stages(&self) -> &'static [Stage] {
        match self {
            PreviewKind::List => &[
                Stage::Conversion3d,
                Stage::ThresholdingContainerRemoval,
                Stage::ServerSideRendering,
            ],
            PreviewKind::Data => &[Stage::SlicemapsConversion, Stage::HistogramFiltering],
            PreviewKind::Interactive => &[
                Stage::SlicemapsConversion,
                Stage::ThresholdingContainerRemoval,
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub preview: PreviewKind,
    pub stage: Stage,
    pub detail: serde_json::Value,
}

/// Ordered record of executed stages; contains no timings so bundles stay byte-reproducible.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BuildLog(pub Vec<StageRecord>);

impl BuildLog {
    fn record(&mut self, preview: PreviewKind, stage: Stage, detail: serde_json::Value) {
        info!(preview = ?preview, stage = stage.name(), %detail, "stage complete");
        self.0.push(StageRecord {
            preview,
            stage,
            detail,
        });
    }

    pub fn stages_for(&self, preview: PreviewKind) -> Vec<Stage> {
        self.0
            .iter()
            .filter(|r| r.preview == preview)
            .map(|r| r.stage)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    /// Longest axis of the list-preview working copy; `None` renders from the full volume.
    pub list_working_size: Option<usize>,
    pub views: usize,
    pub thumbnail_dim: usize,
    pub steps: usize,
    pub data_scheme: usize,
    pub interactive_schemes: Vec<usize>,
    pub top_slices: usize,
    pub artifact_frac: f64,
    pub hough: HoughConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            list_working_size: Some(256),
            views: DEFAULT_VIEWS,
            thumbnail_dim: 512,
            steps: 512,
            data_scheme: 256,
            interactive_schemes: SCHEMES.to_vec(),
            top_slices: DEFAULT_TOP_SLICES,
            artifact_frac: DEFAULT_ARTIFACT_FRAC,
            hough: HoughConfig::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ListPreview {
    pub image: GrayImage,
    pub png: Vec<u8>,
    pub meta: ThumbnailMeta,
}

#[derive(Debug, Clone)]
pub struct DataPreview {
    pub set: SlicemapSet,
    pub bins: BinSet,
}

#[derive(Debug, Clone)]
pub struct InteractiveLevel {
    pub set: SlicemapSet,
    pub threshold: Option<u8>,
}

#[derive(Debug, Clone)]
pub struct InteractivePreview {
    pub levels: Vec<InteractiveLevel>,
    pub container: Option<Circle>,
    pub warnings: Vec<String>,
}

/// Aspect-preserving target whose longest axis is at most `size`.
fn working_dims(dims: Dims, size: usize) -> Dims {
    let longest = *dims.iter().max().expect("3 axes");
    if longest <= size {
        return dims;
    }
    dims.map(|d| ((d * size + longest / 2) / longest).clamp(1, d))
}

fn circle_json(c: &Option<Circle>) -> serde_json::Value {
    serde_json::to_value(c).expect("circle serializes")
}

/// Thumbnail: container masked, Otsu iso-value, highest-entropy surface view.
pub fn build_list_preview(v: &Volume, cfg: &PipelineConfig, log: &mut BuildLog) -> Result<ListPreview> {
    let kind = PreviewKind::List;
    let stage = Stage::Conversion3d;
    if v.count_nonzero() == 0 {
        return Err(Error::EmptyVolume.in_stage(stage.name()));
    }
    let working = match cfg.list_working_size {
        Some(size) if working_dims(v.dims(), size) != v.dims() => Cow::Owned(
            downscale_volume(v, working_dims(v.dims(), size)).map_err(|e| e.in_stage(stage.name()))?,
        ),
        _ => Cow::Borrowed(v),
    };
    log.record(kind, stage, serde_json::json!({ "dims": working.dims() }));

    let stage = Stage::ThresholdingContainerRemoval;
    let mut warnings = Vec::new();
    let circle = match detect_with_config(&working.top_slice(), &cfg.hough) {
        Ok(c) => Some(c),
        Err(e @ (Error::NoCircleFound { .. } | Error::SliceTooSmall(..))) => {
            warn!(error = %e, "list preview rendered without container removal");
            warnings.push(format!("container not removed: {e}"));
            None
        }
        Err(e) => return Err(e.in_stage(stage.name())),
    };
    let masked = match &circle {
        Some(c) => Cow::Owned(
            apply_circle_mask(&working, &c.with_margin()).map_err(|e| e.in_stage(stage.name()))?,
        ),
        None => working,
    };
    let threshold = match otsu_excluding_zero(&masked) {
        Ok(r) => Some(r.value),
        Err(e @ (Error::DegenerateHistogram(_) | Error::EmptyHistogram)) => {
            warn!(error = %e, "falling back to additive rendering");
            warnings.push(format!("additive fallback: {e}"));
            None
        }
        Err(e) => return Err(e.in_stage(stage.name())),
    };
    log.record(
        kind,
        stage,
        serde_json::json!({ "circle": circle_json(&circle), "threshold": threshold }),
    );

    let stage = Stage::ServerSideRendering;
    let template = match threshold {
        Some(t) => ViewParams::surface(t),
        None => ViewParams::additive(),
    }
    .with_size(cfg.thumbnail_dim, cfg.steps);
    let snap = optimal_snapshot(&masked, cfg.views, &template).map_err(|e| e.in_stage(stage.name()))?;
    let png = encode_png(&snap.image)?;
    log.record(
        kind,
        stage,
        serde_json::json!({ "azimuth": snap.azimuth_deg, "entropy": snap.entropy.h, "views": cfg.views }),
    );
    Ok(ListPreview {
        image: snap.image,
        png,
        meta: ThumbnailMeta {
            file: THUMBNAIL_FILE.into(),
            azimuth: snap.azimuth_deg,
            entropy: snap.entropy.h,
            threshold,
            circle,
            mode: template.mode,
            degraded: template.mode == RenderMode::Additive || circle.is_none(),
            warnings,
            scores: snap.scores,
        },
    })
}

/// Filtered slicemaps at the data scheme; the container's grey values are removed without
/// thresholding the specimen.
pub fn build_data_preview(v: &Volume, cfg: &PipelineConfig, log: &mut BuildLog) -> Result<DataPreview> {
    let kind = PreviewKind::Data;
    let stage = Stage::SlicemapsConversion;
    let scheme = plan_scheme(cfg.data_scheme).map_err(|e| e.in_stage(stage.name()))?;
    let cube = downscale_cubic(v, scheme.s).map_err(|e| e.in_stage(stage.name()))?;
    let mut set = pack_cube(&cube, &scheme)?;
    log.record(kind, stage, serde_json::json!({ "scheme": scheme.s, "atlases": scheme.map_count }));

    let stage = Stage::HistogramFiltering;
    let bins = artifact_bins(&cube, cfg.top_slices, cfg.artifact_frac).map_err(|e| e.in_stage(stage.name()))?;
    set.map_texels(|texels| crate::mask::filter_in_place(texels, &bins));
    log.record(kind, stage, serde_json::json!({ "bins": bins }));
    Ok(DataPreview { set, bins })
}

/// Multi-resolution slicemaps masked by the container circle found on the finest scheme's top
/// slice, each with the Otsu threshold of its masked voxels.
pub fn build_interactive_preview(
    v: &Volume,
    cfg: &PipelineConfig,
    log: &mut BuildLog,
) -> Result<InteractivePreview> {
    let kind = PreviewKind::Interactive;
    let stage = Stage::SlicemapsConversion;
    let min_dim = *v.dims().iter().min().expect("3 axes");
    let mut warnings = Vec::new();
    let mut schemes = Vec::new();
    for &s in &cfg.interactive_schemes {
        let scheme = plan_scheme(s).map_err(|e| e.in_stage(stage.name()))?;
        if s > min_dim {
            warnings.push(format!("scheme {s} skipped: volume dims {:?}", v.dims()));
            continue;
        }
        schemes.push(scheme);
    }
    schemes.sort_by_key(|s| s.s);
    if schemes.is_empty() {
        return Err(Error::InvalidTarget {
            dims: v.dims(),
            target: [cfg.interactive_schemes.iter().copied().min().unwrap_or(0); 3],
        }
        .in_stage(stage.name()));
    }
    let cubes: Vec<Volume> = schemes
        .iter()
        .map(|sc| downscale_cubic(v, sc.s))
        .collect::<Result<_>>()
        .map_err(|e| e.in_stage(stage.name()))?;
    log.record(
        kind,
        stage,
        serde_json::json!({ "schemes": schemes.iter().map(|s| s.s).collect::<Vec<_>>() }),
    );

    let stage = Stage::ThresholdingContainerRemoval;
    let finest = cubes.last().expect("non-empty");
    let finest_s = schemes.last().expect("non-empty").s as f64;
    let container = match detect_with_config(&finest.top_slice(), &cfg.hough) {
        Ok(c) => Some(c),
        Err(e @ (Error::NoCircleFound { .. } | Error::SliceTooSmall(..))) => {
            warn!(error = %e, "interactive atlases left unmasked");
            warnings.push(format!("container not removed: {e}"));
            None
        }
        Err(e) => return Err(e.in_stage(stage.name())),
    };
    let mut levels = Vec::with_capacity(cubes.len());
    for (scheme, cube) in schemes.iter().zip(cubes) {
        let masked = match &container {
            Some(c) => apply_circle_mask(&cube, &c.rescaled(scheme.s as f64 / finest_s).with_margin())
                .map_err(|e| e.in_stage(stage.name()))?,
            None => cube,
        };
        let threshold = match otsu_excluding_zero(&masked) {
            Ok(r) => Some(r.value),
            Err(e @ (Error::DegenerateHistogram(_) | Error::EmptyHistogram)) => {
                warnings.push(format!("scheme {}: no threshold: {e}", scheme.s));
                None
            }
            Err(e) => return Err(e.in_stage(stage.name())),
        };
        levels.push(InteractiveLevel {
            set: pack_cube(&masked, scheme)?,
            threshold,
        });
    }
    log.record(
        kind,
        stage,
        serde_json::json!({
            "circle": circle_json(&container),
            "thresholds": levels.iter().map(|l| l.threshold).collect::<Vec<_>>(),
        }),
    );
    Ok(InteractivePreview {
        levels,
        container,
        warnings,
    })
}
