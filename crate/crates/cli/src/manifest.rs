//! Run manifests. The digest covers everything except the wall time, so
//! equal digests mean equal data.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;
use std::time::Instant;

use anyhow::Context;
use serde::Serialize;
use sha2::{Digest, Sha256};

pub fn digest(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Serialize)]
pub struct Manifest {
    command: String,
    input_digest: Option<String>,
    params: BTreeMap<String, String>,
    seed: Option<u64>,
    version: String,
    #[serde(skip)]
    started: Option<Instant>,
}

impl Manifest {
    pub fn new(command: &str, input_digest: Option<String>) -> Self {
        Manifest {
            command: command.into(),
            input_digest,
            params: BTreeMap::new(),
            seed: None,
            version: env!("CARGO_PKG_VERSION").into(),
            started: Some(Instant::now()),
        }
    }

    pub fn param(&mut self, key: &str, value: impl Display) -> &mut Self {
        self.params.insert(key.into(), value.to_string());
        self
    }

    pub fn seed(&mut self, seed: u64) -> &mut Self {
        self.seed = Some(seed);
        self
    }

    pub fn digest(&self) -> String {
        digest(&serde_json::to_vec(self).expect("plain data"))
    }

    fn sidecar(&self) -> serde_json::Value {
        let mut v = serde_json::to_value(self).expect("plain data");
        v["digest"] = self.digest().into();
        v["wall_time_s"] = self.started.map(|s| s.elapsed().as_secs_f64()).unwrap_or(0.0).into();
        v
    }
}

pub enum Output {
    Csv(String),
    Json(serde_json::Value),
}

impl Output {
    /// Write to `path` (plus `<path>.manifest.json`) or to stdout.
    pub fn write(self, m: &Manifest, path: Option<&Path>) -> anyhow::Result<()> {
        let d = m.digest();
        let text = match self {
            Output::Csv(body) => format!("# manifest {d}\n{body}"),
            Output::Json(v) => {
                let doc = serde_json::json!({ "manifest_digest": d, "result": v });
                serde_json::to_string_pretty(&doc)? + "\n"
            }
        };
        match path {
            Some(p) => {
                std::fs::write(p, text).with_context(|| format!("cannot write {}", p.display()))?;
                let mut side = p.as_os_str().to_owned();
                side.push(".manifest.json");
                std::fs::write(&side, serde_json::to_string_pretty(&m.sidecar())? + "\n")
                    .with_context(|| "cannot write the manifest sidecar")?;
            }
            None => print!("{text}"),
        }
        Ok(())
    }
}
