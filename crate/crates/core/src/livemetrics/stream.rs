//! NDJSON encoding of frame streams: one JSON object per line with keys in
//! the fixed order `step, episode, env_frame, metrics` (metric names sorted).

use std::fs::{File, OpenOptions};
use std::io::{Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::thread::JoinHandle;

use super::{FrameReceiver, StreamError, SyncFrame};

/// File name of a recorded stream inside a run's `artifacts/` directory.
pub const STREAM_FILE: &str = "stream.ndjson";

pub fn serialize_frame(frame: &SyncFrame) -> String {
    serde_json::to_string(frame).expect("frames always serialize")
}

pub fn serialize_stream<'a, I: IntoIterator<Item = &'a SyncFrame>>(frames: I) -> String {
    let mut out = String::new();
    for f in frames {
        out.push_str(&serialize_frame(f));
        out.push('\n');
    }
    out
}

/// Strict parse: every non-blank line must be a frame.
pub fn parse_stream(text: &str) -> Result<Vec<SyncFrame>, StreamError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|source| StreamError::Parse { line: i + 1, source }))
        .collect()
}

/// Reads a stream file, ignoring a trailing line that is not yet complete.
pub fn read_stream_file(path: &Path) -> Result<Vec<SyncFrame>, StreamError> {
    let text = std::fs::read_to_string(path)?;
    let complete = match text.rfind('\n') {
        Some(i) => &text[..=i],
        None => "",
    };
    parse_stream(complete)
}

/// Incremental reader for a stream file that is still being written.
#[derive(Debug)]
pub struct StreamTail {
    path: PathBuf,
    offset: u64,
    partial: String,
    line: usize,
}

impl StreamTail {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        Self {
            path: path.into(),
            offset: 0,
            partial: String::new(),
            line: 0,
        }
    }

    /// Frames completed since the last poll. A missing file yields nothing.
    pub fn poll(&mut self) -> Result<Vec<SyncFrame>, StreamError> {
        let mut file = match File::open(&self.path) {
            Ok(f) => f,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(e.into()),
        };
        file.seek(SeekFrom::Start(self.offset))?;
        let mut buf = String::new();
        let n = file.read_to_string(&mut buf)?;
        self.offset += n as u64;
        self.partial.push_str(&buf);
        let mut frames = Vec::new();
        while let Some(i) = self.partial.find('\n') {
            let line: String = self.partial.drain(..=i).collect();
            self.line += 1;
            if line.trim().is_empty() {
                continue;
            }
            frames.push(
                serde_json::from_str(line.trim_end())
                    .map_err(|source| StreamError::Parse { line: self.line, source })?,
            );
        }
        Ok(frames)
    }
}

/// Drains `rx` into `path` (appending), one whole line per write.
/// Returns the number of frames written once the sender hangs up.
pub fn spawn_recorder(rx: FrameReceiver, path: PathBuf) -> JoinHandle<Result<u64, StreamError>> {
    std::thread::spawn(move || {
        let mut file = OpenOptions::new().create(true).append(true).open(&path)?;
        let mut n = 0;
        while let Some(frame) = rx.recv() {
            let mut line = serialize_frame(&frame);
            line.push('\n');
            file.write_all(line.as_bytes())?;
            n += 1;
        }
        file.flush()?;
        Ok(n)
    })
}
