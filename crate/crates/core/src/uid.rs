//! Content identifiers for files and file trees.
//!
//! A tree UID is the SHA-256 of a canonical manifest. For each file, in
//! ascending byte order of its path, the manifest holds
//!
//! ```text
//! <path>\n<decimal byte length>\n<lowercase hex sha256 of content>\n
//! ```
//!
//! A single file's UID is the plain SHA-256 of its bytes.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::{self, Read};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Lowercase hex SHA-256 digest, always 64 characters.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct ContentUid(String);

impl ContentUid {
    /// The all-zero digest, used as the genesis link of audit chains.
    pub fn zero() -> Self {
        ContentUid("0".repeat(64))
    }

    pub fn from_digest(bytes: &[u8]) -> Self {
        ContentUid(hex::encode(bytes))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// Raw 32 digest bytes.
    pub fn to_bytes(&self) -> [u8; 32] {
        let mut out = [0u8; 32];
        hex::decode_to_slice(&self.0, &mut out).expect("validated on construction");
        out
    }
}

impl fmt::Debug for ContentUid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ContentUid({})", self.0)
    }
}

impl fmt::Display for ContentUid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid content uid {0:?}: expected 64 lowercase hex characters")]
pub struct InvalidUid(pub String);

impl FromStr for ContentUid {
    type Err = InvalidUid;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let ok = s.len() == 64 && s.bytes().all(|b| matches!(b, b'0'..=b'9' | b'a'..=b'f'));
        if ok {
            Ok(ContentUid(s.to_owned()))
        } else {
            Err(InvalidUid(s.to_owned()))
        }
    }
}

impl TryFrom<String> for ContentUid {
    type Error = InvalidUid;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        value.parse()
    }
}

impl From<ContentUid> for String {
    fn from(uid: ContentUid) -> Self {
        uid.0
    }
}

#[derive(Debug, Error)]
pub enum UidError {
    #[error("duplicate path {0:?}")]
    DuplicatePath(String),
    #[error("illegal path {0:?}")]
    IllegalPath(String),
    #[error("symlink in tree at {0:?}")]
    Symlink(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl UidError {
    pub fn code(&self) -> &'static str {
        match self {
            UidError::DuplicatePath(_) => "DUPLICATE_PATH",
            UidError::IllegalPath(_) | UidError::Symlink(_) => "ILLEGAL_PATH",
            UidError::Io(_) => "IO_ERROR",
        }
    }
}

/// Checks that `path` is relative, '/'-separated, and has no empty, `.` or
/// `..` segments.
pub fn check_relative_path(path: &str) -> Result<(), UidError> {
    let illegal = path.is_empty()
        || path.starts_with('/')
        || path.contains('\\')
        || path.contains('\0')
        || path
            .split('/')
            .any(|seg| seg.is_empty() || seg == "." || seg == "..");
    if illegal {
        Err(UidError::IllegalPath(path.to_owned()))
    } else {
        Ok(())
    }
}

/// SHA-256 of a byte string.
pub fn file_uid(bytes: &[u8]) -> ContentUid {
    ContentUid::from_digest(&Sha256::digest(bytes))
}

/// SHA-256 of a file's content, streamed.
pub fn file_uid_at(path: &Path) -> io::Result<ContentUid> {
    let mut file = fs::File::open(path)?;
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 64 * 1024];
    loop {
        let n = file.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(ContentUid::from_digest(&hasher.finalize()))
}

/// Per-file digests keyed by path, accumulated in canonical order.
#[derive(Debug, Default)]
struct TreeManifest {
    entries: BTreeMap<String, (u64, ContentUid)>,
}

impl TreeManifest {
    fn insert(&mut self, path: &str, len: u64, digest: ContentUid) -> Result<(), UidError> {
        check_relative_path(path)?;
        if self
            .entries
            .insert(path.to_owned(), (len, digest))
            .is_some()
        {
            return Err(UidError::DuplicatePath(path.to_owned()));
        }
        Ok(())
    }

    fn finish(self) -> ContentUid {
        // BTreeMap<String, _> iterates in byte order of the UTF-8 keys.
        let mut hasher = Sha256::new();
        for (path, (len, digest)) in &self.entries {
            hasher.update(path.as_bytes());
            hasher.update(b"\n");
            hasher.update(len.to_string().as_bytes());
            hasher.update(b"\n");
            hasher.update(digest.as_str().as_bytes());
            hasher.update(b"\n");
        }
        ContentUid::from_digest(&hasher.finalize())
    }
}

/// UID of an in-memory file tree. Input order does not matter.
pub fn compute_content_uid<P, B>(files: &[(P, B)]) -> Result<ContentUid, UidError>
where
    P: AsRef<str>,
    B: AsRef<[u8]>,
{
    let mut manifest = TreeManifest::default();
    for (path, content) in files {
        let bytes = content.as_ref();
        manifest.insert(path.as_ref(), bytes.len() as u64, file_uid(bytes))?;
    }
    Ok(manifest.finish())
}

/// UID of the regular files under `root`. Symlinks anywhere in the tree are
/// rejected rather than followed.
pub fn dir_content_uid(root: &Path) -> Result<ContentUid, UidError> {
    let mut manifest = TreeManifest::default();
    for entry in walkdir::WalkDir::new(root).follow_links(false).min_depth(1) {
        let entry = entry.map_err(|e| UidError::Io(e.into()))?;
        let rel = relative_slash_path(root, entry.path())?;
        let ft = entry.file_type();
        if ft.is_symlink() {
            return Err(UidError::Symlink(rel));
        }
        if ft.is_file() {
            let len = entry.metadata().map_err(|e| UidError::Io(e.into()))?.len();
            manifest.insert(&rel, len, file_uid_at(entry.path())?)?;
        }
    }
    Ok(manifest.finish())
}

/// Reads every regular file under `root` into memory as `(path, bytes)`.
pub fn read_tree(root: &Path) -> Result<Vec<(String, Vec<u8>)>, UidError> {
    let mut files = Vec::new();
    for entry in walkdir::WalkDir::new(root)
        .follow_links(false)
        .min_depth(1)
        .sort_by_file_name()
    {
        let entry = entry.map_err(|e| UidError::Io(e.into()))?;
        let rel = relative_slash_path(root, entry.path())?;
        if entry.file_type().is_symlink() {
            return Err(UidError::Symlink(rel));
        }
        if entry.file_type().is_file() {
            files.push((rel, fs::read(entry.path())?));
        }
    }
    Ok(files)
}

fn relative_slash_path(root: &Path, path: &Path) -> Result<String, UidError> {
    let rel = path
        .strip_prefix(root)
        .map_err(|_| UidError::IllegalPath(path.display().to_string()))?;
    let mut parts = Vec::new();
    for comp in rel.components() {
        match comp {
            std::path::Component::Normal(s) => match s.to_str() {
                Some(s) => parts.push(s),
                None => return Err(UidError::IllegalPath(rel.display().to_string())),
            },
            _ => return Err(UidError::IllegalPath(rel.display().to_string())),
        }
    }
    Ok(parts.join("/"))
}

#[cfg(test)]
mod tests {
    use super::*;

    // Independent oracle values: `printf '' | sha256sum` and the manual
    // canonicalization below, computed with coreutils.
    const EMPTY_SHA256: &str = "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855";

    #[test]
    fn empty_tree_is_sha256_of_empty_input() {
        let files: [(&str, &[u8]); 0] = [];
        assert_eq!(compute_content_uid(&files).unwrap().as_str(), EMPTY_SHA256);
        assert_eq!(file_uid(b"").as_str(), EMPTY_SHA256);
    }

    #[test]
    fn single_file_matches_shell_oracle() {
        // x=$(printf x | sha256sum | cut -d' ' -f1)
        // printf 'a.txt\n1\n%s\n' "$x" | sha256sum
        let uid = compute_content_uid(&[("a.txt", b"x")]).unwrap();
        assert_eq!(
            uid.as_str(),
            "688b7f5c90afa38f8fde16e78a8daf911c63d3fb6b4ab0225922133e70feeb0e"
        );
    }

    #[test]
    fn presentation_order_is_irrelevant() {
        let a = compute_content_uid(&[("b/c", "1"), ("a", "22"), ("b/a", "333")]).unwrap();
        let b = compute_content_uid(&[("b/a", "333"), ("a", "22"), ("b/c", "1")]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_duplicates_and_illegal_paths() {
        let err = compute_content_uid(&[("a", "1"), ("a", "2")]).unwrap_err();
        assert_eq!(err.code(), "DUPLICATE_PATH");
        for bad in ["../x", "/abs", "a/../b", "a//b", "", "./a"] {
            let err = compute_content_uid(&[(bad, "1")]).unwrap_err();
            assert_eq!(err.code(), "ILLEGAL_PATH", "{bad}");
        }
    }

    #[test]
    fn dir_uid_matches_in_memory_uid() {
        let dir = tempfile::tempdir().unwrap();
        fs::create_dir_all(dir.path().join("sub")).unwrap();
        fs::write(dir.path().join("sub/f.csv"), "1,2\n").unwrap();
        fs::write(dir.path().join("top"), "t").unwrap();
        let on_disk = dir_content_uid(dir.path()).unwrap();
        let in_mem = compute_content_uid(&[("top", "t"), ("sub/f.csv", "1,2\n")]).unwrap();
        assert_eq!(on_disk, in_mem);
        assert_eq!(read_tree(dir.path()).unwrap().len(), 2);
    }

    #[cfg(unix)]
    #[test]
    fn dir_uid_refuses_symlinks() {
        let dir = tempfile::tempdir().unwrap();
        std::os::unix::fs::symlink("/etc/passwd", dir.path().join("leak")).unwrap();
        assert!(matches!(
            dir_content_uid(dir.path()),
            Err(UidError::Symlink(_))
        ));
    }

    #[test]
    fn uid_parsing() {
        assert!(EMPTY_SHA256.parse::<ContentUid>().is_ok());
        assert!(EMPTY_SHA256.to_uppercase().parse::<ContentUid>().is_err());
        assert!("abc".parse::<ContentUid>().is_err());
        assert_eq!(ContentUid::zero().to_bytes(), [0u8; 32]);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn tree() -> impl Strategy<Value = Vec<(String, Vec<u8>)>> {
            proptest::collection::btree_map(
                "[a-z]{1,6}(/[a-z]{1,6}){0,2}",
                proptest::collection::vec(any::<u8>(), 1..64),
                1..8,
            )
            .prop_map(|m| m.into_iter().collect())
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(200))]

            #[test]
            fn any_single_byte_change_changes_uid(
                files in tree(),
                pick in any::<prop::sample::Index>(),
                byte in any::<prop::sample::Index>(),
                delta in 1u8..=255,
            ) {
                let before = compute_content_uid(&files).unwrap();
                let mut mutated = files.clone();
                let f = pick.index(mutated.len());
                let b = byte.index(mutated[f].1.len());
                mutated[f].1[b] = mutated[f].1[b].wrapping_add(delta);
                prop_assert_ne!(before.clone(), compute_content_uid(&mutated).unwrap());

                let mut reversed = files.clone();
                reversed.reverse();
                prop_assert_eq!(before, compute_content_uid(&reversed).unwrap());
            }
        }
    }
}
