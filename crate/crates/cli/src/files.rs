//! Reading inputs and writing outputs atomically.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use dentfuse_core::annotations::{parse_annotations, AnnotationSet, ParseOptions, SchemaMap};
use dentfuse_core::rasterize::LabelMask;
use serde::Serialize;

use crate::config::ConfigError;
use crate::AnnotationArgs;

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path)
        .map_err(|e| dentfuse_core::Error::io(path, e))
        .with_context(|| format!("reading {}", path.display()))
}

/// Sibling path the output is staged under; keeps the extension so image
/// encoders pick the right format.
fn staging_path(path: &Path) -> PathBuf {
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let ext = path
        .extension()
        .map(|e| format!(".{}", e.to_string_lossy()))
        .unwrap_or_default();
    path.with_file_name(format!(".{name}.{}.tmp{ext}", std::process::id()))
}

/// Writes through a staging file in the same directory, then renames it into
/// place.
pub fn write_with(path: &Path, write: impl FnOnce(&Path) -> Result<()>) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)
            .map_err(|e| dentfuse_core::Error::io(dir, e))
            .with_context(|| format!("creating {}", dir.display()))?;
    }
    let tmp = staging_path(path);
    if let Err(e) = write(&tmp) {
        let _ = fs::remove_file(&tmp);
        return Err(e);
    }
    fs::rename(&tmp, path)
        .map_err(|e| dentfuse_core::Error::io(path, e))
        .with_context(|| format!("moving output into {}", path.display()))
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    write_with(path, |tmp| {
        fs::write(tmp, bytes)
            .map_err(|e| dentfuse_core::Error::io(tmp, e))
            .with_context(|| format!("writing {}", tmp.display()))
    })
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_bytes(path, text.as_bytes())
}

pub fn save_mask(path: &Path, mask: &LabelMask) -> Result<()> {
    write_with(path, |tmp| Ok(mask.save_png(tmp)?))
}

pub fn parse_options(args: &AnnotationArgs) -> Result<ParseOptions> {
    let mut opts = ParseOptions::new(args.annotation_base);
    if let Some(path) = &args.schema {
        let text = read_text(path)?;
        opts.schema = toml::from_str::<SchemaMap>(&text)
            .map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
    }
    Ok(opts)
}

pub fn load_annotations(path: &Path, args: &AnnotationArgs) -> Result<AnnotationSet> {
    let opts = parse_options(args)?;
    let text = read_text(path)?;
    parse_annotations(&text, &opts).with_context(|| format!("parsing {}", path.display()))
}
