//! Byte-reproducible `image.tar.gz` archives holding an OCI image layout.
//!
//! The single layer only carries a description file: refbench cubes run
//! through the process backend, so the archive exists to be pinned, shipped
//! and verified like any other image.

use std::io::{self, Write};

use flate2::write::GzEncoder;
use flate2::{Compression, GzBuilder};
use serde_json::json;

use fedeval_core::uid::file_uid;

fn tar_bytes(entries: &[(String, Vec<u8>)]) -> io::Result<Vec<u8>> {
    let mut builder = tar::Builder::new(Vec::new());
    for (path, data) in entries {
        let mut header = tar::Header::new_ustar();
        header.set_size(data.len() as u64);
        header.set_mode(0o644);
        header.set_mtime(0);
        header.set_uid(0);
        header.set_gid(0);
        header.set_entry_type(tar::EntryType::Regular);
        builder.append_data(&mut header, path, data.as_slice())?;
    }
    builder.into_inner()
}

fn descriptor(media_type: &str, bytes: &[u8]) -> serde_json::Value {
    json!({
        "mediaType": media_type,
        "digest": format!("sha256:{}", file_uid(bytes)),
        "size": bytes.len(),
    })
}

/// Gzipped tar of an OCI layout for `image_ref`, whose config records
/// `entrypoint`. Identical arguments give identical bytes.
pub fn oci_archive(image_ref: &str, entrypoint: &[String], note: &str) -> io::Result<Vec<u8>> {
    let layer = tar_bytes(&[("fedeval/IMAGE.txt".into(), note.as_bytes().to_vec())])?;
    let config = serde_json::to_vec(&json!({
        "architecture": "amd64",
        "os": "linux",
        "config": { "Entrypoint": entrypoint },
        "rootfs": { "type": "layers", "diff_ids": [format!("sha256:{}", file_uid(&layer))] },
    }))?;
    let manifest = serde_json::to_vec(&json!({
        "schemaVersion": 2,
        "mediaType": "application/vnd.oci.image.manifest.v1+json",
        "config": descriptor("application/vnd.oci.image.config.v1+json", &config),
        "layers": [descriptor("application/vnd.oci.image.layer.v1.tar", &layer)],
    }))?;
    let mut manifest_desc = descriptor("application/vnd.oci.image.manifest.v1+json", &manifest);
    manifest_desc["annotations"] = json!({ "org.opencontainers.image.ref.name": image_ref });
    let index = serde_json::to_vec(&json!({ "schemaVersion": 2, "manifests": [manifest_desc] }))?;

    let blob = |b: &[u8]| (format!("blobs/sha256/{}", file_uid(b)), b.to_vec());
    let mut entries = vec![
        (
            "oci-layout".to_string(),
            br#"{"imageLayoutVersion":"1.0.0"}"#.to_vec(),
        ),
        ("index.json".to_string(), index),
        blob(&manifest),
        blob(&config),
        blob(&layer),
    ];
    entries.sort();
    let tar = tar_bytes(&entries)?;

    let mut gz: GzEncoder<Vec<u8>> = GzBuilder::new()
        .mtime(0)
        .write(Vec::new(), Compression::best());
    gz.write_all(&tar)?;
    gz.finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Read;

    #[test]
    fn reproducible_and_readable() {
        let ep = vec!["fedeval-refbench".to_string()];
        let a = oci_archive("x:1", &ep, "hello").unwrap();
        assert_eq!(a, oci_archive("x:1", &ep, "hello").unwrap());
        assert_ne!(a, oci_archive("x:2", &ep, "hello").unwrap());

        let mut tar = Vec::new();
        flate2::read::GzDecoder::new(a.as_slice())
            .read_to_end(&mut tar)
            .unwrap();
        let mut archive = tar::Archive::new(tar.as_slice());
        let names: Vec<String> = archive
            .entries()
            .unwrap()
            .map(|e| e.unwrap().path().unwrap().display().to_string())
            .collect();
        assert_eq!(names.len(), 5);
        assert!(names.contains(&"oci-layout".to_string()));
        assert!(names.contains(&"index.json".to_string()));
    }
}
