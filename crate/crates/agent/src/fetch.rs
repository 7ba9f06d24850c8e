//! Cube asset downloads from a record's `download_url`.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::time::Duration;

use fedeval_core::cube::verify::{DEFAULT_PARAMETERS_FILE, IMAGE_FILE, MANIFEST_FILE};
use fedeval_core::cube::{parameters_path, parse_manifest};
use fedeval_core::{file_uid, CubeRecord};

use crate::error::{AgentError, Result};

/// Fetches one file below `base`; `None` when the source has no such file.
pub fn fetch(base: &str, rel: &str) -> Result<Option<Vec<u8>>> {
    let base = base.trim_end_matches('/');
    if let Some(path) = base.strip_prefix("file://") {
        return match fs::read(PathBuf::from(path).join(rel)) {
            Ok(b) => Ok(Some(b)),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(AgentError::Network(format!("{base}/{rel}: {e}"))),
        };
    }
    if !(base.starts_with("http://") || base.starts_with("https://")) {
        return Err(AgentError::Invalid(format!(
            "unsupported download url {base:?}"
        )));
    }
    let agent: ureq::Agent = ureq::Agent::config_builder()
        .http_status_as_error(false)
        .timeout_global(Some(Duration::from_secs(300)))
        .build()
        .into();
    let url = format!("{base}/{rel}");
    let mut resp = agent
        .get(&url)
        .call()
        .map_err(|e| AgentError::Network(format!("{url}: {e}")))?;
    match resp.status().as_u16() {
        404 => Ok(None),
        200 => resp
            .body_mut()
            .with_config()
            .limit(8 << 30)
            .read_to_vec()
            .map(Some)
            .map_err(|e| AgentError::Network(format!("{url}: {e}"))),
        s => Err(AgentError::Network(format!("{url}: HTTP {s}"))),
    }
}

fn put(dest: &Path, rel: &str, bytes: Option<Vec<u8>>) -> Result<()> {
    if let Some(b) = bytes {
        let path = dest.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(path, b)?;
    }
    Ok(())
}

/// Copies every pinned asset of `record` into the empty directory `dest`.
/// Nothing is checked here; absent files are simply left out so that
/// verification reports them.
pub fn download_cube(record: &CubeRecord, dest: &Path) -> Result<()> {
    fs::create_dir_all(dest)?;
    let base = &record.download_url;
    if base.is_empty() {
        return Err(AgentError::Invalid(format!(
            "cube {} has no download_url",
            record.id
        )));
    }
    let manifest = fetch(base, MANIFEST_FILE)?;
    // The parameters location comes from the manifest, but only from one
    // that matches its pin.
    let params_rel = manifest
        .as_deref()
        .filter(|b| file_uid(b) == record.manifest_uid)
        .and_then(|b| std::str::from_utf8(b).ok())
        .and_then(|t| parse_manifest(t).ok())
        .and_then(|m| parameters_path(&m).ok())
        .unwrap_or_else(|| DEFAULT_PARAMETERS_FILE.to_owned());
    put(dest, MANIFEST_FILE, manifest)?;
    put(dest, IMAGE_FILE, fetch(base, IMAGE_FILE)?)?;
    if record.parameters_uid.is_some() {
        put(dest, &params_rel, fetch(base, &params_rel)?)?;
    }
    for (rel, _) in &record.extra_files {
        fedeval_core::uid::check_relative_path(rel)
            .map_err(|_| AgentError::HashMismatch(format!("illegal path {rel:?}")))?;
        put(dest, rel, fetch(base, rel)?)?;
    }
    Ok(())
}
