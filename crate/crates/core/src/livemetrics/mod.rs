//! Step-synchronized metric stream: each frame pairs the environment's
//! render state with the metric values produced at that same step.

mod channel;
mod dashboard;
mod stream;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::env::RenderFrame;

pub use channel::{channel, DropPolicy, FrameReceiver, FrameSender};
pub use dashboard::{render_panel, sparkline, Dashboard, Layout, DEFAULT_WINDOW};
pub use stream::{
    parse_stream, read_stream_file, serialize_frame, serialize_stream, spawn_recorder, StreamTail,
    STREAM_FILE,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyncFrame {
    pub step: u64,
    pub episode: u64,
    pub env_frame: RenderFrame,
    pub metrics: BTreeMap<String, f64>,
}

#[derive(Debug, thiserror::Error)]
pub enum StreamError {
    #[error("frame step {step} does not follow previous step {last}")]
    Ordering { last: u64, step: u64 },
    #[error("metric keys changed mid-stream: expected {expected:?}, got {got:?}")]
    MetricKeys { expected: Vec<String>, got: Vec<String> },
    #[error("receiver disconnected")]
    Disconnected,
    #[error("line {line}: {source}")]
    Parse {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("unknown metric `{name}`; available: {}", available.join(", "))]
    UnknownMetric { name: String, available: Vec<String> },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
