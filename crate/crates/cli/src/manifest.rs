use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{Map, Value};

/// Record of one run: the parsed command line, resolved settings, and
/// every constant measured along the way.
#[derive(Debug, Serialize)]
pub struct Manifest<'a, C: Serialize> {
    pub tool: &'static str,
    pub version: &'static str,
    pub subcommand: &'a str,
    pub config: &'a C,
    pub workers: usize,
    pub seed: Option<u64>,
    pub measured: Map<String, Value>,
    pub outputs: Vec<PathBuf>,
    pub error: Option<String>,
}

/// Measurements and written files accumulated by a subcommand.
#[derive(Debug, Default)]
pub struct RunLog {
    pub measured: Map<String, Value>,
    pub outputs: Vec<PathBuf>,
    pub seed: Option<u64>,
}

impl RunLog {
    pub fn measure(&mut self, key: impl Into<String>, v: f64) {
        self.measured.insert(key.into(), serde_json::Number::from_f64(v).map_or(Value::Null, Value::Number));
    }

    pub fn output(&mut self, path: &Path) {
        self.outputs.push(path.to_path_buf());
    }
}
