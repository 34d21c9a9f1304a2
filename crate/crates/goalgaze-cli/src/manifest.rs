//! Per-run manifests: every verb records its resolved configuration, the
//! seeds involved, and content hashes of its inputs, enough to reproduce
//! the run bit-exactly.

use anyhow::Result;
use serde_json::{json, Value};
use sha2::digest::Digest;
use std::path::Path;

pub fn config_hash(value: &Value) -> String {
    let canonical = serde_json::to_string(value).unwrap_or_default();
    let mut h = sha2::Sha256::new();
    h.update(canonical.as_bytes());
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

pub fn write_manifest(out_dir: &Path, verb: &str, resolved: Value) -> Result<()> {
    std::fs::create_dir_all(out_dir)?;
    let manifest = json!({
        "tool": "goalgaze",
        "verb": verb,
        "config": resolved,
        "config_sha256": config_hash(&resolved),
    });
    let f = std::io::BufWriter::new(std::fs::File::create(out_dir.join("manifest.json"))?);
    serde_json::to_writer_pretty(f, &manifest)?;
    Ok(())
}
