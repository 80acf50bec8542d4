//! CSV emission with a leading manifest comment and a sibling manifest file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde_json::{json, Value};
use sha2::{Digest, Sha256};

pub struct Manifest {
    pub subcommand: &'static str,
    pub config: BTreeMap<String, String>,
    pub seed: u64,
    pub data_sha256: Option<String>,
}

impl Manifest {
    fn to_value(&self) -> Value {
        let mut v = json!({
            "subcommand": self.subcommand,
            "config": self.config,
            "seed": self.seed,
        });
        if let Some(h) = &self.data_sha256 {
            v["data_sha256"] = json!(h);
        }
        v
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// `out.csv` -> `out.manifest.json`.
pub fn manifest_path(out: &Path) -> PathBuf {
    out.with_extension("manifest.json")
}

/// The manifest line never carries timing, so identical invocations give
/// identical bytes.
pub fn render(manifest: &Manifest, body: &str) -> String {
    format!("# manifest: {}\n{body}", manifest.to_value())
}

pub fn emit(out: Option<&Path>, manifest: &Manifest, body: &str, started: Instant) -> anyhow::Result<()> {
    let text = render(manifest, body);
    let Some(path) = out else {
        print!("{text}");
        return Ok(());
    };
    std::fs::write(path, &text)?;
    let mut full = manifest.to_value();
    full["artifacts"] = json!([path.display().to_string()]);
    full["csv_sha256"] = json!(sha256_hex(text.as_bytes()));
    full["wall_time"] = json!(started.elapsed().as_secs_f64());
    std::fs::write(manifest_path(path), serde_json::to_string_pretty(&full)? + "\n")?;
    Ok(())
}
