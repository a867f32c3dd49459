//! Side-by-side terminal view: a character-grid drawing of the scene on the
//! left, rolling sparklines of the selected metrics on the right. Both
//! panels are labelled with the step they show.

use super::{StreamError, SyncFrame};
use crate::env::RenderFrame;

/// Sparkline history length in steps.
pub const DEFAULT_WINDOW: usize = 200;

const BARS: [char; 8] = ['▁', '▂', '▃', '▄', '▅', '▆', '▇', '█'];

#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    /// Interior cells of the arena drawing.
    pub grid_w: usize,
    pub grid_h: usize,
    pub spark_w: usize,
    pub window: usize,
}

impl Default for Layout {
    fn default() -> Self {
        Self {
            grid_w: 30,
            grid_h: 15,
            spark_w: 50,
            window: DEFAULT_WINDOW,
        }
    }
}

/// Renders `values` into at most `width` bar glyphs, newest on the right.
///
/// Longer inputs are bucketed by maximum so short spikes stay visible. A
/// constant series draws flat at the lowest level.
pub fn sparkline(values: &[f64], width: usize) -> String {
    if values.is_empty() || width == 0 {
        return " ".repeat(width);
    }
    let cols: Vec<f64> = if values.len() <= width {
        values.to_vec()
    } else {
        (0..width)
            .map(|c| {
                let lo = c * values.len() / width;
                let hi = ((c + 1) * values.len() / width).max(lo + 1);
                values[lo..hi].iter().cloned().fold(f64::NEG_INFINITY, f64::max)
            })
            .collect()
    };
    let (lo, hi) = cols
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let range = hi - lo;
    let mut s = " ".repeat(width - cols.len());
    for v in cols {
        let level = if range > 0.0 {
            (((v - lo) / range) * (BARS.len() - 1) as f64).round() as usize
        } else {
            0
        };
        s.push(BARS[level.min(BARS.len() - 1)]);
    }
    s
}

fn cell(x: f64, lo: f64, hi: f64, n: usize) -> usize {
    // interior cells are 1..=n; anything off the arena lands on the border
    if x < lo {
        0
    } else if x > hi {
        n + 1
    } else {
        1 + (((x - lo) / (hi - lo)) * n as f64).floor().min(n as f64 - 1.0) as usize
    }
}

fn draw_arena(f: &RenderFrame, w: usize, h: usize) -> Vec<String> {
    let mut grid = vec![vec![' '; w + 2]; h + 2];
    for (r, row) in grid.iter_mut().enumerate() {
        for (c, ch) in row.iter_mut().enumerate() {
            let edge_r = r == 0 || r == h + 1;
            let edge_c = c == 0 || c == w + 1;
            *ch = match (edge_r, edge_c) {
                (true, true) => '+',
                (true, false) => '-',
                (false, true) => '|',
                (false, false) => '.',
            };
        }
    }
    let [lo, hi] = f.arena;
    let mut put = |p: [f64; 2], ch: char| {
        let c = cell(p[0], lo, hi, w);
        let r = h + 1 - cell(p[1], lo, hi, h);
        grid[r][c] = ch;
    };
    put(f.goal, 'G');
    if let Some(b) = f.block {
        put(b, if f.block_fallen { 'X' } else { 'B' });
    }
    put(f.agent, 'A');
    grid.into_iter().map(|r| r.into_iter().collect()).collect()
}

/// Renders one frame: scene on the left, metrics on the right.
///
/// `history` holds the frames up to and including `current`; only the last
/// `layout.window` of them feed the sparklines.
pub fn render_panel(current: &SyncFrame, history: &[SyncFrame], metrics: &[String], layout: &Layout) -> String {
    let mut left = vec![format!(
        "step {} | episode {} | t {}",
        current.step, current.episode, current.env_frame.t
    )];
    left.extend(draw_arena(&current.env_frame, layout.grid_w, layout.grid_h));
    if current.env_frame.block_fallen {
        left.push("block fell off the platform".into());
    }

    let start = history.len().saturating_sub(layout.window);
    let window = &history[start..];
    let mut right = vec![format!("metrics @step {}", current.step)];
    for name in metrics {
        let value = current.metrics.get(name).copied().unwrap_or(f64::NAN);
        let series: Vec<f64> = window.iter().filter_map(|f| f.metrics.get(name).copied()).collect();
        let (lo, hi) = series
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        right.push(format!("{name} = {value:.6} @step {}", current.step));
        right.push(sparkline(&series, layout.spark_w));
        right.push(format!("  window min {lo:.4} max {hi:.4}"));
    }

    let left_w = layout.grid_w + 2;
    let left_w = left.iter().map(|l| l.chars().count()).max().unwrap_or(0).max(left_w);
    let rows = left.len().max(right.len());
    let mut out = String::new();
    for i in 0..rows {
        let l = left.get(i).map(String::as_str).unwrap_or("");
        let r = right.get(i).map(String::as_str).unwrap_or("");
        let pad = left_w - l.chars().count();
        out.push_str(l);
        out.push_str(&" ".repeat(pad));
        out.push_str("   ");
        out.push_str(r);
        out.push('\n');
    }
    out
}

/// Rolling dashboard state shared by live-follow and replay views.
#[derive(Debug, Clone)]
pub struct Dashboard {
    metrics: Vec<String>,
    layout: Layout,
    frames: Vec<SyncFrame>,
    pos: usize,
    paused: bool,
}

impl Dashboard {
    /// Checks `metrics` against the names available in the stream.
    pub fn new(metrics: Vec<String>, available: &[String], layout: Layout) -> Result<Self, StreamError> {
        for m in &metrics {
            if !available.contains(m) {
                return Err(StreamError::UnknownMetric {
                    name: m.clone(),
                    available: available.to_vec(),
                });
            }
        }
        Ok(Self {
            metrics,
            layout,
            frames: Vec::new(),
            pos: 0,
            paused: false,
        })
    }

    /// Replay view over a recorded stream; `metrics` empty selects all.
    pub fn replay(frames: Vec<SyncFrame>, metrics: Vec<String>, layout: Layout) -> Result<Self, StreamError> {
        let available: Vec<String> = frames
            .first()
            .map(|f| f.metrics.keys().cloned().collect())
            .unwrap_or_default();
        let metrics = if metrics.is_empty() { available.clone() } else { metrics };
        let mut d = Self::new(metrics, &available, layout)?;
        d.frames = frames;
        Ok(d)
    }

    /// Live mode: appends a frame and moves to it unless paused.
    pub fn push(&mut self, frame: SyncFrame) {
        self.frames.push(frame);
        // bound memory in live mode; replay keeps everything
        let keep = self.layout.window.max(1) * 4;
        if self.frames.len() > keep * 2 {
            let cut = self.frames.len() - keep;
            self.frames.drain(..cut);
            self.pos = self.pos.saturating_sub(cut);
        }
        if !self.paused {
            self.pos = self.frames.len() - 1;
        }
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn position(&self) -> usize {
        self.pos
    }

    pub fn current(&self) -> Option<&SyncFrame> {
        self.frames.get(self.pos)
    }

    pub fn paused(&self) -> bool {
        self.paused
    }

    pub fn toggle_pause(&mut self) {
        self.paused = !self.paused;
    }

    /// Advances one frame; false at the end of the stream.
    pub fn advance(&mut self) -> bool {
        if self.pos + 1 < self.frames.len() {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    pub fn back(&mut self) {
        self.pos = self.pos.saturating_sub(1);
    }

    /// Moves to the first frame whose step is `>= step`, or the last frame.
    pub fn seek(&mut self, step: u64) {
        self.pos = self
            .frames
            .partition_point(|f| f.step < step)
            .min(self.frames.len().saturating_sub(1));
    }

    pub fn render(&self) -> String {
        match self.frames.get(self.pos) {
            Some(f) => render_panel(f, &self.frames[..=self.pos], &self.metrics, &self.layout),
            None => "waiting for frames...\n".into(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::super::channel::tests::frame;
    use super::*;

    #[test]
    fn constant_series_is_flat() {
        let s = sparkline(&[2.0; 10], 10);
        assert!(s.chars().all(|c| c == '▁'), "{s}");
    }

    #[test]
    fn spike_survives_bucketing() {
        let mut v = vec![0.0; 400];
        v[201] = 5.0;
        let s: Vec<char> = sparkline(&v, 40).chars().collect();
        assert_eq!(s.iter().filter(|&&c| c == '█').count(), 1);
        assert_eq!(s[20], '█');
    }

    #[test]
    fn short_series_is_right_aligned() {
        let s = sparkline(&[0.0, 1.0], 5);
        assert_eq!(s, "   ▁█");
    }

    #[test]
    fn panels_show_the_same_step() {
        let frames: Vec<_> = (0..30).map(frame).collect();
        let mut d = Dashboard::replay(frames, vec![], Layout::default()).unwrap();
        d.seek(17);
        let out = d.render();
        assert!(out.starts_with("step 17 |"));
        assert!(out.contains("metrics @step 17"));
        assert!(out.contains("critic_variance_mean = 17.000000 @step 17"));
    }

    #[test]
    fn unknown_metric_lists_available() {
        let err = Dashboard::replay(vec![frame(0)], vec!["nope".into()], Layout::default())
            .err()
            .unwrap()
            .to_string();
        assert!(err.contains("critic_variance_mean"), "{err}");
    }

    #[test]
    fn fallen_block_is_drawn_on_border() {
        let mut f = frame(0);
        f.env_frame.block = Some([1.03, 0.5]);
        f.env_frame.block_fallen = true;
        let out = render_panel(&f, std::slice::from_ref(&f), &[], &Layout::default());
        assert!(out.contains('X'));
        assert!(out.contains("fell off"));
    }

    #[test]
    fn pause_and_seek() {
        let mut d = Dashboard::new(vec![], &[], Layout::default()).unwrap();
        d.push(frame(0));
        d.toggle_pause();
        d.push(frame(1));
        assert_eq!(d.current().unwrap().step, 0);
        d.toggle_pause();
        d.push(frame(2));
        assert_eq!(d.current().unwrap().step, 2);
        d.seek(1);
        assert_eq!(d.position(), 1);
        d.seek(99);
        assert_eq!(d.position(), 2);
    }
}
