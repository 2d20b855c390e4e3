//! Wire format: one JSON object per `\n`-terminated UTF-8 line.

use serde::{Deserialize, Serialize};

use crate::config::ConfigId;
use crate::prm::PrmMap;

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "cmd", rename_all = "snake_case")]
pub enum HostCommand {
    Hello { version: u32 },
    SupportedHyperparameters,
    Train(TrainRequest),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainRequest {
    pub config: ConfigId,
    pub prm: PrmMap,
    pub max_epochs: u32,
    pub in_shape: Vec<usize>,
    pub out_shape: Vec<usize>,
    /// Opaque to the host; interpreted by the plugin.
    pub device: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum PluginEvent {
    HelloAck { version: u32 },
    Hyperparameters { names: Vec<String> },
    Epoch { epoch: u32, accuracy: f64, duration_ns: u64 },
    Done,
    Error { message: String },
}

/// Serializes a message as one protocol line, newline included.
pub fn encode<T: Serialize>(msg: &T) -> String {
    let mut line = serde_json::to_string(msg).expect("protocol messages serialize");
    line.push('\n');
    line
}

pub fn decode<'a, T: Deserialize<'a>>(line: &'a str) -> Result<T, String> {
    let line = line.strip_suffix('\n').unwrap_or(line);
    let line = line.strip_suffix('\r').unwrap_or(line);
    serde_json::from_str(line).map_err(|e| format!("malformed protocol line {line:?}: {e}"))
}
