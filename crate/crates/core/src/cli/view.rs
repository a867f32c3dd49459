//! `view`: live tail of a run's stream or replay of a recorded stream file.

use std::io::{BufRead, IsTerminal, Write};
use std::path::{Path, PathBuf};
use std::sync::mpsc;
use std::time::Duration;

use super::CliError;
use crate::livemetrics::{read_stream_file, Dashboard, Layout, StreamTail, STREAM_FILE};
use crate::track::read_meta;

#[derive(Debug, Clone)]
pub struct ViewOptions {
    pub metrics: Vec<String>,
    pub refresh_hz: f64,
    pub window: usize,
    /// Render a single frame and exit.
    pub once: bool,
    /// Replay only: start at this step.
    pub at: Option<u64>,
}

const CLEAR: &str = "\x1b[2J\x1b[H";

fn layout(opts: &ViewOptions) -> Layout {
    Layout {
        window: opts.window,
        ..Layout::default()
    }
}

fn draw(out: &mut impl Write, d: &Dashboard, footer: &str) -> Result<(), CliError> {
    let tty = std::io::stdout().is_terminal();
    write!(out, "{}{}{footer}", if tty { CLEAR } else { "" }, d.render())?;
    out.flush()?;
    Ok(())
}

/// Resolves a run directory to its stream file; files pass through.
pub fn stream_path(target: &Path) -> PathBuf {
    if target.is_dir() {
        target.join("artifacts").join(STREAM_FILE)
    } else {
        target.to_path_buf()
    }
}

fn run_is_live(target: &Path) -> bool {
    read_meta(&target.join("meta.yaml"))
        .map(|m| m.get("status").map(String::as_str) == Some("1"))
        .unwrap_or(false)
}

/// Tails a stream until its run ends (or forever for a bare file).
pub fn follow(target: &Path, opts: &ViewOptions) -> Result<(), CliError> {
    let path = stream_path(target);
    let has_meta = target.join("meta.yaml").exists();
    let mut tail = StreamTail::new(&path);
    let mut dash: Option<Dashboard> = None;
    let period = Duration::from_secs_f64(1.0 / opts.refresh_hz.max(0.1));
    let mut out = std::io::stdout().lock();
    loop {
        let live = has_meta && run_is_live(target);
        let frames = tail.poll()?;
        let fresh = !frames.is_empty();
        for f in frames {
            if dash.is_none() {
                let available: Vec<String> = f.metrics.keys().cloned().collect();
                let metrics = if opts.metrics.is_empty() { available.clone() } else { opts.metrics.clone() };
                dash = Some(Dashboard::new(metrics, &available, layout(opts))?);
            }
            dash.as_mut().unwrap().push(f);
        }
        let finished = opts.once || (has_meta && !live && !fresh);
        if let Some(d) = &dash {
            if fresh || finished {
                draw(&mut out, d, if finished { "" } else { "following... (ctrl-c to stop)\n" })?;
            }
        }
        if finished {
            if dash.is_none() {
                writeln!(out, "no frames in {}", path.display())?;
            }
            return Ok(());
        }
        std::thread::sleep(period);
    }
}

/// Replays a recorded stream. Interactive on a terminal:
/// `enter` pause/resume, `n` next, `b` back, `s <step>` seek, `q` quit.
pub fn replay(file: &Path, opts: &ViewOptions) -> Result<(), CliError> {
    let frames = read_stream_file(file)?;
    if frames.is_empty() {
        return Err(CliError::Other(format!("{} contains no frames", file.display())));
    }
    let last_step = frames.last().unwrap().step;
    let mut d = Dashboard::replay(frames, opts.metrics.clone(), layout(opts))?;
    let mut out = std::io::stdout().lock();
    if let Some(step) = opts.at {
        d.seek(step);
    }
    if opts.once || !std::io::stdout().is_terminal() || !std::io::stdin().is_terminal() {
        if opts.at.is_none() {
            d.seek(last_step);
        }
        return draw(&mut out, &d, "");
    }

    let (tx, rx) = mpsc::channel::<String>();
    std::thread::spawn(move || {
        for line in std::io::stdin().lock().lines() {
            let Ok(line) = line else { break };
            if tx.send(line).is_err() {
                break;
            }
        }
    });
    let period = Duration::from_secs_f64(1.0 / opts.refresh_hz.max(0.1));
    let help = "[enter] pause/resume  [n]ext  [b]ack  [s <step>] seek  [q]uit\n";
    loop {
        while let Ok(cmd) = rx.try_recv() {
            let mut parts = cmd.split_whitespace();
            match parts.next() {
                None => d.toggle_pause(),
                Some("q") => return Ok(()),
                Some("n") => {
                    d.advance();
                }
                Some("b") => d.back(),
                Some("s") => {
                    if let Some(step) = parts.next().and_then(|s| s.parse().ok()) {
                        d.seek(step);
                    }
                }
                Some(_) => {}
            }
        }
        if !d.paused() && !d.advance() {
            d.toggle_pause();
        }
        let state = if d.paused() { "paused" } else { "playing" };
        draw(&mut out, &d, &format!("{state}  {help}"))?;
        std::thread::sleep(period);
    }
}
