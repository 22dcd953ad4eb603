//! On-disk preview bundles: `<root>/<id>/{meta.json, thumbnail.png, thumbnail.json, data/, interactive/<s>/}`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tracing::{info, warn};

use super::{
    build_data_preview, build_interactive_preview, build_list_preview, BuildLog, PipelineConfig,
    PreviewKind,
};
use crate::error::{Error, Result};
use crate::mask::{BinSet, Circle};
use crate::render::RenderMode;
use crate::slicemap::{SlicemapManifest, SlicemapSet, MANIFEST_FILE};
use crate::stack::load_slice_stack;
use crate::volume::{DatasetMeta, Volume};

pub const META_FILE: &str = "meta.json";
pub const THUMBNAIL_FILE: &str = "thumbnail.png";
pub const SIDECAR_FILE: &str = "thumbnail.json";
const SOURCES_DIR: &str = ".sources";
const SOURCE_VOLUME: &str = "volume";

/// Sidecar describing how the thumbnail was produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThumbnailMeta {
    pub file: String,
    pub azimuth: f64,
    pub entropy: f64,
    pub threshold: Option<u8>,
    pub circle: Option<Circle>,
    pub mode: RenderMode,
    pub degraded: bool,
    #[serde(default)]
    pub warnings: Vec<String>,
    /// (azimuth, entropy) for every rendered candidate view.
    #[serde(default)]
    pub scores: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataMeta {
    pub filtered: bool,
    pub path: String,
    pub manifest: SlicemapManifest,
    pub artifact_bins: BinSet,
    pub payload_bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractiveScheme {
    pub s: usize,
    pub path: String,
    pub manifest: SlicemapManifest,
    pub threshold: Option<u8>,
    pub payload_bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractiveMeta {
    pub container: Option<Circle>,
    pub schemes: Vec<InteractiveScheme>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub sha256: String,
    pub bytes: u64,
}

impl FileDigest {
    pub fn of(bytes: &[u8]) -> Self {
        Self {
            sha256: hex::encode(Sha256::digest(bytes)),
            bytes: bytes.len() as u64,
        }
    }
}

/// The `meta.json` manifest of one bundle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreviewBundle {
    #[serde(flatten)]
    pub meta: DatasetMeta,
    pub thumbnail: Option<ThumbnailMeta>,
    pub data: Option<DataMeta>,
    pub interactive: Option<InteractiveMeta>,
    /// Digest of every servable file keyed by its `/`-separated path inside the bundle.
    pub checksums: BTreeMap<String, FileDigest>,
    pub build_log: BuildLog,
}

impl PreviewBundle {
    /// Structural invariants that do not need the files themselves.
    pub fn check_invariants(&self) -> Result<()> {
        let malformed = |reason: String| Error::MalformedBundle {
            id: self.meta.id.clone(),
            reason,
        };
        if let Some(i) = &self.interactive {
            for w in i.schemes.windows(2) {
                if w[0].payload_bytes >= w[1].payload_bytes {
                    return Err(malformed(format!(
                        "interactive schemes {} and {} not ordered by payload",
                        w[0].s, w[1].s
                    )));
                }
            }
        }
        for path in self.checksums.keys() {
            if path.split('/').any(|c| c.is_empty() || c == "." || c == "..") {
                return Err(malformed(format!("illegal path {path:?}")));
            }
        }
        Ok(())
    }

    pub fn total_payload(&self, prefix: &str) -> u64 {
        self.checksums
            .iter()
            .filter(|(k, _)| k.starts_with(prefix))
            .map(|(_, d)| d.bytes)
            .sum()
    }
}

/// Which previews a build produces.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PreviewSet {
    pub list: bool,
    pub data: bool,
    pub interactive: bool,
}

impl PreviewSet {
    pub const ALL: PreviewSet = PreviewSet {
        list: true,
        data: true,
        interactive: true,
    };

    pub fn only(kind: PreviewKind) -> Self {
        PreviewSet {
            list: kind == PreviewKind::List,
            data: kind == PreviewKind::Data,
            interactive: kind == PreviewKind::Interactive,
        }
    }

    fn contains(&self, kind: PreviewKind) -> bool {
        match kind {
            PreviewKind::List => self.list,
            PreviewKind::Data => self.data,
            PreviewKind::Interactive => self.interactive,
        }
    }
}

pub fn validate_id(id: &str) -> Result<()> {
    let ok = !id.is_empty()
        && id.len() <= 64
        && !id.starts_with(['.', '-'])
        && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_');
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidId(id.to_string()))
    }
}

/// Lowercase id derived from a free-form dataset name.
pub fn slugify(name: &str) -> String {
    let mut out = String::new();
    for c in name.chars() {
        if c.is_ascii_alphanumeric() {
            out.push(c.to_ascii_lowercase());
        } else if !out.ends_with('-') && !out.is_empty() {
            out.push('-');
        }
    }
    let mut out = out.trim_end_matches('-').to_string();
    out.truncate(64);
    if out.is_empty() {
        out.push_str("dataset");
    }
    out
}

#[derive(Serialize, Deserialize)]
struct SourceInfo {
    name: String,
}

/// Files staged for one bundle, keyed by relative path.
#[derive(Default)]
struct Staged(BTreeMap<String, Vec<u8>>);

impl Staged {
    fn add(&mut self, path: String, bytes: Vec<u8>) {
        self.0.insert(path, bytes);
    }

    fn add_set(&mut self, prefix: &str, set: &SlicemapSet) -> Result<u64> {
        let files = set.encode()?;
        let mut payload = 0;
        for (name, bytes) in files {
            if name != MANIFEST_FILE {
                payload += bytes.len() as u64;
            }
            self.add(format!("{prefix}/{name}"), bytes);
        }
        Ok(payload)
    }
}

/// Removes the lock file when the build ends, however it ends.
struct LockGuard(PathBuf);

impl Drop for LockGuard {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.0);
    }
}

/// A directory of ingested sources and built bundles.
#[derive(Debug, Clone)]
pub struct BundleStore {
    root: PathBuf,
}

impl BundleStore {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        fs::create_dir_all(&root)?;
        Ok(Self { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn bundle_dir(&self, id: &str) -> PathBuf {
        self.root.join(id)
    }

    fn source_dir(&self, id: &str) -> PathBuf {
        self.root.join(SOURCES_DIR).join(id)
    }

    /// Loads a slice stack and stores it as a raw source volume; returns the catalogue entry.
    pub fn ingest_stack(&self, manifest: &Path, id: Option<&str>) -> Result<DatasetMeta> {
        let (m, v) = load_slice_stack(manifest)?;
        let id = id.map(str::to_string).unwrap_or_else(|| slugify(&m.name));
        self.ingest_volume(&id, &m.name, &v)
    }

    pub fn ingest_volume(&self, id: &str, name: &str, v: &Volume) -> Result<DatasetMeta> {
        validate_id(id)?;
        let dir = self.source_dir(id);
        v.save_raw(&dir, SOURCE_VOLUME)?;
        fs::write(
            dir.join("source.json"),
            serde_json::to_vec_pretty(&SourceInfo { name: name.into() })?,
        )?;
        info!(id, dims = ?v.dims(), "ingested");
        Ok(DatasetMeta::new(id, name, v.dims()))
    }

    pub fn load_source(&self, id: &str) -> Result<(DatasetMeta, Volume)> {
        validate_id(id)?;
        let dir = self.source_dir(id);
        let header = dir.join(format!("{SOURCE_VOLUME}.json"));
        if !header.exists() {
            return Err(Error::UnknownDataset(id.to_string()));
        }
        let info: SourceInfo = serde_json::from_slice(&fs::read(dir.join("source.json"))?)?;
        let v = Volume::load_raw(&header)?;
        Ok((DatasetMeta::new(id, info.name, v.dims()), v))
    }

    /// Builds the requested previews from the ingested source and publishes the bundle with an
    /// atomic rename. Previews not requested are carried over from an existing bundle.
    pub fn build(&self, id: &str, previews: PreviewSet, cfg: &PipelineConfig) -> Result<PreviewBundle> {
        let (meta, v) = self.load_source(id)?;
        self.build_from_volume(meta, &v, previews, cfg)
    }

    pub fn build_from_volume(
        &self,
        meta: DatasetMeta,
        v: &Volume,
        previews: PreviewSet,
        cfg: &PipelineConfig,
    ) -> Result<PreviewBundle> {
        let id = meta.id.clone();
        validate_id(&id)?;
        let lock_path = self.root.join(format!(".lock-{id}"));
        match fs::OpenOptions::new().write(true).create_new(true).open(&lock_path) {
            Ok(_) => {}
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                return Err(Error::BuildInProgress(id))
            }
            Err(e) => return Err(e.into()),
        }
        let _guard = LockGuard(lock_path);

        let previous = self.load(&id).ok();
        let mut staged = Staged::default();
        let mut log = BuildLog::default();
        let mut bundle = PreviewBundle {
            meta,
            thumbnail: None,
            data: None,
            interactive: None,
            checksums: BTreeMap::new(),
            build_log: BuildLog::default(),
        };

        if previews.list {
            let list = build_list_preview(v, cfg, &mut log)?;
            staged.add(SIDECAR_FILE.into(), serde_json::to_vec_pretty(&list.meta)?);
            staged.add(THUMBNAIL_FILE.into(), list.png);
            bundle.thumbnail = Some(list.meta);
        }
        if previews.data {
            let data = build_data_preview(v, cfg, &mut log)?;
            let payload = staged.add_set("data", &data.set)?;
            bundle.data = Some(DataMeta {
                filtered: true,
                path: "data".into(),
                manifest: data.set.manifest(),
                artifact_bins: data.bins,
                payload_bytes: payload,
            });
        }
        if previews.interactive {
            let inter = build_interactive_preview(v, cfg, &mut log)?;
            let mut schemes = Vec::new();
            for level in &inter.levels {
                let s = level.set.scheme.s;
                let path = format!("interactive/{s}");
                let payload = staged.add_set(&path, &level.set)?;
                schemes.push(InteractiveScheme {
                    s,
                    path,
                    manifest: level.set.manifest(),
                    threshold: level.threshold,
                    payload_bytes: payload,
                });
            }
            bundle.interactive = Some(InteractiveMeta {
                container: inter.container,
                schemes,
                warnings: inter.warnings,
            });
        }

        let old_dir = self.bundle_dir(&id);
        let mut carried = Vec::new();
        if let Some(prev) = &previous {
            for kind in [PreviewKind::List, PreviewKind::Data, PreviewKind::Interactive] {
                if previews.contains(kind) {
                    continue;
                }
                let prefixes: &[&str] = match kind {
                    PreviewKind::List => &[THUMBNAIL_FILE, SIDECAR_FILE],
                    PreviewKind::Data => &["data/"],
                    PreviewKind::Interactive => &["interactive/"],
                };
                for (path, digest) in &prev.checksums {
                    if prefixes.iter().any(|p| path == p || (p.ends_with('/') && path.starts_with(p))) {
                        carried.push((path.clone(), digest.clone()));
                    }
                }
                match kind {
                    PreviewKind::List => bundle.thumbnail = prev.thumbnail.clone(),
                    PreviewKind::Data => bundle.data = prev.data.clone(),
                    PreviewKind::Interactive => bundle.interactive = prev.interactive.clone(),
                }
            }
            let mut merged: Vec<_> = prev
                .build_log
                .0
                .iter()
                .filter(|r| !previews.contains(r.preview))
                .cloned()
                .collect();
            merged.extend(log.0);
            log = BuildLog(merged);
        }
        bundle.build_log = log;

        let staging = self.root.join(format!(".staging-{id}"));
        if staging.exists() {
            fs::remove_dir_all(&staging)?;
        }
        fs::create_dir_all(&staging)?;
        for (path, bytes) in &staged.0 {
            let dest = staging.join(path);
            if let Some(parent) = dest.parent() {
                fs::create_dir_all(parent)?;
            }
            fs::write(&dest, bytes)?;
            bundle.checksums.insert(path.clone(), FileDigest::of(bytes));
        }
        for (path, digest) in carried {
            let dest = staging.join(&path);
            if let Some(parent) = dest.parent() {
                fs::create_dir_all(parent)?;
            }
            fs::copy(old_dir.join(&path), &dest)?;
            bundle.checksums.insert(path, digest);
        }
        bundle.check_invariants()?;
        fs::write(staging.join(META_FILE), serde_json::to_vec_pretty(&bundle)?)?;

        let retired = self.root.join(format!(".retired-{id}"));
        if retired.exists() {
            fs::remove_dir_all(&retired)?;
        }
        if old_dir.exists() {
            fs::rename(&old_dir, &retired)?;
        }
        fs::rename(&staging, &old_dir)?;
        if retired.exists() {
            fs::remove_dir_all(&retired)?;
        }
        info!(id, files = bundle.checksums.len(), "bundle published");
        Ok(bundle)
    }

    /// Reads `meta.json` and checks that every listed file exists with the recorded size.
    pub fn load(&self, id: &str) -> Result<PreviewBundle> {
        validate_id(id)?;
        let dir = self.bundle_dir(id);
        let meta_path = dir.join(META_FILE);
        if !meta_path.exists() {
            return Err(Error::UnknownDataset(id.to_string()));
        }
        let malformed = |reason: String| Error::MalformedBundle {
            id: id.to_string(),
            reason,
        };
        let bundle: PreviewBundle = serde_json::from_slice(&fs::read(&meta_path)?)
            .map_err(|e| malformed(format!("meta.json: {e}")))?;
        if bundle.meta.id != id {
            return Err(malformed(format!("meta.json names id {:?}", bundle.meta.id)));
        }
        bundle.check_invariants()?;
        for (path, digest) in &bundle.checksums {
            match fs::metadata(dir.join(path)) {
                Ok(m) if m.len() == digest.bytes => {}
                Ok(m) => {
                    return Err(malformed(format!(
                        "{path}: {} bytes, manifest says {}",
                        m.len(),
                        digest.bytes
                    )))
                }
                Err(_) => return Err(malformed(format!("{path} missing"))),
            }
        }
        Ok(bundle)
    }

    /// [`BundleStore::load`] plus a SHA-256 comparison of every file.
    pub fn verify(&self, id: &str) -> Result<PreviewBundle> {
        let bundle = self.load(id)?;
        let dir = self.bundle_dir(id);
        for (path, digest) in &bundle.checksums {
            let actual = FileDigest::of(&fs::read(dir.join(path))?);
            if actual != *digest {
                return Err(Error::MalformedBundle {
                    id: id.to_string(),
                    reason: format!("{path}: checksum mismatch"),
                });
            }
        }
        Ok(bundle)
    }

    /// Every completed bundle in the root, sorted by id; malformed ones are logged and skipped.
    pub fn list(&self) -> Result<Vec<PreviewBundle>> {
        let mut out = Vec::new();
        for entry in fs::read_dir(&self.root)? {
            let entry = entry?;
            let name = entry.file_name();
            let Some(id) = name.to_str() else { continue };
            if id.starts_with('.') || !entry.file_type()?.is_dir() {
                continue;
            }
            match self.load(id) {
                Ok(b) => out.push(b),
                Err(e) => warn!(id, error = %e, "skipping bundle"),
            }
        }
        out.sort_by(|a, b| a.meta.id.cmp(&b.meta.id));
        Ok(out)
    }
}
