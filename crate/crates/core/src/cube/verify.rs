//! Hash verification of locally downloaded cube assets.
//!
//! A [`VerifiedCube`] can only be obtained from [`verify_cube`], and it is
//! the only thing [`super::run_task`] accepts.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::manifest::{parse_manifest, CubeManifest, ManifestError};
use crate::model::CubeRecord;
use crate::uid::{check_relative_path, file_uid, file_uid_at, ContentUid};

pub const MANIFEST_FILE: &str = "cube.yaml";
pub const IMAGE_FILE: &str = "image.tar.gz";
pub const DEFAULT_PARAMETERS_FILE: &str = "parameters.yaml";

/// The digests a cube record pins.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PinnedHashes {
    pub manifest_uid: ContentUid,
    pub image_uid: ContentUid,
    pub parameters_uid: Option<ContentUid>,
    pub extra_files: Vec<(String, ContentUid)>,
}

impl From<&CubeRecord> for PinnedHashes {
    fn from(r: &CubeRecord) -> Self {
        PinnedHashes {
            manifest_uid: r.manifest_uid.clone(),
            image_uid: r.image_uid.clone(),
            parameters_uid: r.parameters_uid.clone(),
            extra_files: r.extra_files.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "asset", content = "path", rename_all = "snake_case")]
pub enum Asset {
    Manifest,
    Image,
    Parameters,
    ExtraFile(String),
}

impl fmt::Display for Asset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Asset::Manifest => f.write_str("manifest"),
            Asset::Image => f.write_str("image"),
            Asset::Parameters => f.write_str("parameters"),
            Asset::ExtraFile(p) => write!(f, "extra_file:{p}"),
        }
    }
}

/// One asset whose digest differs from the pinned value. `None` means
/// "absent" on that side.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mismatch {
    pub asset: Asset,
    pub expected: Option<ContentUid>,
    pub actual: Option<ContentUid>,
}

impl fmt::Display for Mismatch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "mismatch({})", self.asset)
    }
}

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error("hash mismatch: {}", .0.iter().map(|m| m.to_string()).collect::<Vec<_>>().join(", "))]
    Mismatches(Vec<Mismatch>),
    #[error("manifest: {0}")]
    Manifest(#[from] ManifestError),
    #[error("illegal extra file path {0:?}")]
    IllegalPath(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl VerifyError {
    pub fn code(&self) -> &'static str {
        match self {
            VerifyError::Mismatches(_) => "HASH_MISMATCH",
            VerifyError::Manifest(e) => e.code(),
            VerifyError::IllegalPath(_) => "ILLEGAL_PATH",
            VerifyError::Io(_) => "IO_ERROR",
        }
    }

    pub fn mismatches(&self) -> &[Mismatch] {
        match self {
            VerifyError::Mismatches(m) => m,
            _ => &[],
        }
    }
}

static NEXT_VERIFICATION: AtomicU64 = AtomicU64::new(1);

/// A cube directory whose every pinned digest matched at verification time.
#[derive(Debug)]
pub struct VerifiedCube {
    dir: PathBuf,
    manifest: CubeManifest,
    pinned: PinnedHashes,
    parameters: Option<Vec<u8>>,
    verification_id: u64,
}

impl VerifiedCube {
    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn manifest(&self) -> &CubeManifest {
        &self.manifest
    }

    pub fn pinned(&self) -> &PinnedHashes {
        &self.pinned
    }

    pub fn manifest_uid(&self) -> &ContentUid {
        &self.pinned.manifest_uid
    }

    pub fn image_path(&self) -> PathBuf {
        self.dir.join(IMAGE_FILE)
    }

    /// Verified parameter bytes, held in memory so later edits to the file on
    /// disk cannot reach a task.
    pub fn parameters(&self) -> Option<&[u8]> {
        self.parameters.as_deref()
    }

    /// Process-unique id of this verification.
    pub fn verification_id(&self) -> u64 {
        self.verification_id
    }

    /// Absolute path of a pinned extra file.
    pub fn extra_file(&self, rel: &str) -> Option<PathBuf> {
        self.pinned
            .extra_files
            .iter()
            .any(|(p, _)| p == rel)
            .then(|| self.dir.join(rel))
    }
}

fn optional_uid(path: &Path) -> io::Result<Option<ContentUid>> {
    match file_uid_at(path) {
        Ok(uid) => Ok(Some(uid)),
        Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(e),
    }
}

fn compare(
    out: &mut Vec<Mismatch>,
    asset: Asset,
    expected: Option<&ContentUid>,
    actual: Option<ContentUid>,
) {
    if expected != actual.as_ref() {
        out.push(Mismatch {
            asset,
            expected: expected.cloned(),
            actual,
        });
    }
}

/// Parameters path referenced by the manifest's tasks.
pub fn parameters_path(manifest: &CubeManifest) -> Result<String, ManifestError> {
    let mut paths: Vec<&str> = manifest
        .tasks
        .values()
        .filter_map(|t| t.parameters_file.as_deref())
        .collect();
    paths.sort();
    paths.dedup();
    match paths.as_slice() {
        [] => Ok(DEFAULT_PARAMETERS_FILE.to_owned()),
        [one] => Ok((*one).to_owned()),
        _ => Err(ManifestError::Parse {
            line: 1,
            field: "tasks.*.parameters_file".into(),
            message: "all tasks must share one parameters file".into(),
        }),
    }
}

/// Recomputes every digest of the cube in `dir` and compares it with
/// `pinned`. Nothing is executed here.
pub fn verify_cube(dir: &Path, pinned: &PinnedHashes) -> Result<VerifiedCube, VerifyError> {
    let mut mismatches = Vec::new();

    let manifest_bytes = match fs::read(dir.join(MANIFEST_FILE)) {
        Ok(b) => Some(b),
        Err(e) if e.kind() == io::ErrorKind::NotFound => None,
        Err(e) => return Err(e.into()),
    };
    let manifest_uid = manifest_bytes.as_deref().map(file_uid);
    compare(
        &mut mismatches,
        Asset::Manifest,
        Some(&pinned.manifest_uid),
        manifest_uid.clone(),
    );

    let image_uid = optional_uid(&dir.join(IMAGE_FILE))?;
    compare(
        &mut mismatches,
        Asset::Image,
        Some(&pinned.image_uid),
        image_uid,
    );

    // Only a manifest that matched its pin is trusted enough to parse.
    let manifest = match (&manifest_bytes, mismatches.is_empty()) {
        (Some(bytes), true) => {
            let text = String::from_utf8(bytes.clone()).map_err(|_| ManifestError::Parse {
                line: 1,
                field: String::new(),
                message: "manifest is not UTF-8".into(),
            })?;
            Some(parse_manifest(&text)?)
        }
        _ => None,
    };

    let params_rel = match &manifest {
        Some(m) => parameters_path(m)?,
        None => DEFAULT_PARAMETERS_FILE.to_owned(),
    };
    let params_path = dir.join(&params_rel);
    let params_bytes = match fs::read(&params_path) {
        Ok(b) => Some(b),
        Err(e) if e.kind() == io::ErrorKind::NotFound => None,
        Err(e) => return Err(e.into()),
    };
    let needs_params = manifest
        .as_ref()
        .is_some_and(|m| m.tasks.values().any(|t| t.parameters_file.is_some()));
    if pinned.parameters_uid.is_some() || needs_params {
        compare(
            &mut mismatches,
            Asset::Parameters,
            pinned.parameters_uid.as_ref(),
            params_bytes.as_deref().map(file_uid),
        );
    }

    let mut pinned_extras = BTreeMap::new();
    for (rel, uid) in &pinned.extra_files {
        check_relative_path(rel).map_err(|_| VerifyError::IllegalPath(rel.clone()))?;
        pinned_extras.insert(rel.as_str(), uid);
        let actual = optional_uid(&dir.join(rel))?;
        compare(
            &mut mismatches,
            Asset::ExtraFile(rel.clone()),
            Some(uid),
            actual,
        );
    }
    if let Some(m) = &manifest {
        for item in &m.entrypoint {
            if let Some(rel) = item.strip_prefix("./") {
                if !pinned_extras.contains_key(rel) {
                    let actual = optional_uid(&dir.join(rel))?;
                    compare(
                        &mut mismatches,
                        Asset::ExtraFile(rel.to_owned()),
                        None,
                        actual.or_else(|| Some(ContentUid::zero())),
                    );
                }
            }
        }
    }

    if !mismatches.is_empty() {
        return Err(VerifyError::Mismatches(mismatches));
    }
    Ok(VerifiedCube {
        dir: dir.to_path_buf(),
        manifest: manifest.expect("manifest matched its pin"),
        pinned: pinned.clone(),
        parameters: if pinned.parameters_uid.is_some() {
            params_bytes
        } else {
            None
        },
        verification_id: NEXT_VERIFICATION.fetch_add(1, Ordering::Relaxed),
    })
}

/// Computes the pins for a local cube directory, as a cube author would
/// before registering it.
pub fn pin_cube_dir(dir: &Path, extra_files: &[&str]) -> Result<PinnedHashes, VerifyError> {
    let manifest_bytes = fs::read(dir.join(MANIFEST_FILE))?;
    let text = String::from_utf8(manifest_bytes.clone()).map_err(|_| ManifestError::Parse {
        line: 1,
        field: String::new(),
        message: "manifest is not UTF-8".into(),
    })?;
    let manifest = parse_manifest(&text)?;
    let params_rel = parameters_path(&manifest)?;
    let parameters_uid = optional_uid(&dir.join(params_rel))?;
    let mut extras = Vec::new();
    for rel in extra_files {
        check_relative_path(rel).map_err(|_| VerifyError::IllegalPath(rel.to_string()))?;
        extras.push((rel.to_string(), file_uid_at(&dir.join(rel))?));
    }
    Ok(PinnedHashes {
        manifest_uid: file_uid(&manifest_bytes),
        image_uid: file_uid_at(&dir.join(IMAGE_FILE))?,
        parameters_uid,
        extra_files: extras,
    })
}
