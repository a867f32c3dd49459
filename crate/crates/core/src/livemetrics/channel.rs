use std::collections::VecDeque;
use std::sync::{Arc, Condvar, Mutex};

use super::{StreamError, SyncFrame};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DropPolicy {
    /// Producer waits for room; nothing is lost.
    Block,
    /// Producer never waits; the oldest unconsumed frame is discarded.
    DropOldest,
}

#[derive(Debug, Default)]
struct State {
    queue: VecDeque<SyncFrame>,
    sender_alive: bool,
    receiver_alive: bool,
    dropped: u64,
}

#[derive(Debug)]
struct Shared {
    capacity: usize,
    state: Mutex<State>,
    not_empty: Condvar,
    not_full: Condvar,
}

/// Bounded single-producer, single-consumer frame channel.
pub fn channel(capacity: usize, policy: DropPolicy) -> (FrameSender, FrameReceiver) {
    let shared = Arc::new(Shared {
        capacity: capacity.max(1),
        state: Mutex::new(State {
            sender_alive: true,
            receiver_alive: true,
            ..State::default()
        }),
        not_empty: Condvar::new(),
        not_full: Condvar::new(),
    });
    (
        FrameSender {
            shared: shared.clone(),
            policy,
            last_step: None,
            keys: None,
        },
        FrameReceiver { shared },
    )
}

#[derive(Debug)]
pub struct FrameSender {
    shared: Arc<Shared>,
    policy: DropPolicy,
    last_step: Option<u64>,
    keys: Option<Vec<String>>,
}

impl FrameSender {
    pub fn policy(&self) -> DropPolicy {
        self.policy
    }

    pub fn emit(&mut self, frame: SyncFrame) -> Result<(), StreamError> {
        if let Some(last) = self.last_step {
            if frame.step <= last {
                return Err(StreamError::Ordering {
                    last,
                    step: frame.step,
                });
            }
        }
        let keys: Vec<String> = frame.metrics.keys().cloned().collect();
        match &self.keys {
            Some(expected) if *expected != keys => {
                return Err(StreamError::MetricKeys {
                    expected: expected.clone(),
                    got: keys,
                })
            }
            Some(_) => {}
            None => self.keys = Some(keys),
        }
        let step = frame.step;
        let mut st = self.shared.state.lock().unwrap();
        if !st.receiver_alive {
            return Err(StreamError::Disconnected);
        }
        match self.policy {
            DropPolicy::DropOldest => {
                if st.queue.len() >= self.shared.capacity {
                    st.queue.pop_front();
                    st.dropped += 1;
                }
            }
            DropPolicy::Block => {
                while st.queue.len() >= self.shared.capacity && st.receiver_alive {
                    st = self.shared.not_full.wait(st).unwrap();
                }
                if !st.receiver_alive {
                    return Err(StreamError::Disconnected);
                }
            }
        }
        st.queue.push_back(frame);
        self.last_step = Some(step);
        drop(st);
        self.shared.not_empty.notify_one();
        Ok(())
    }

    /// Frames discarded so far under [`DropPolicy::DropOldest`].
    pub fn dropped(&self) -> u64 {
        self.shared.state.lock().unwrap().dropped
    }
}

impl Drop for FrameSender {
    fn drop(&mut self) {
        self.shared.state.lock().unwrap().sender_alive = false;
        self.shared.not_empty.notify_all();
    }
}

#[derive(Debug)]
pub struct FrameReceiver {
    shared: Arc<Shared>,
}

impl FrameReceiver {
    /// Blocks until a frame arrives; `None` once the sender is gone and the queue is drained.
    pub fn recv(&self) -> Option<SyncFrame> {
        let mut st = self.shared.state.lock().unwrap();
        loop {
            if let Some(f) = st.queue.pop_front() {
                drop(st);
                self.shared.not_full.notify_one();
                return Some(f);
            }
            if !st.sender_alive {
                return None;
            }
            st = self.shared.not_empty.wait(st).unwrap();
        }
    }

    pub fn try_recv(&self) -> Option<SyncFrame> {
        let f = self.shared.state.lock().unwrap().queue.pop_front();
        if f.is_some() {
            self.shared.not_full.notify_one();
        }
        f
    }

    /// Everything currently queued.
    pub fn drain(&self) -> Vec<SyncFrame> {
        let v: Vec<_> = self.shared.state.lock().unwrap().queue.drain(..).collect();
        self.shared.not_full.notify_all();
        v
    }
}

impl Drop for FrameReceiver {
    fn drop(&mut self) {
        self.shared.state.lock().unwrap().receiver_alive = false;
        self.shared.not_full.notify_all();
    }
}

#[cfg(test)]
pub(super) mod tests {
    use super::*;
    use crate::env::RenderFrame;
    use std::collections::BTreeMap;

    pub(crate) fn frame(step: u64) -> SyncFrame {
        SyncFrame {
            step,
            episode: 0,
            env_frame: RenderFrame {
                env: "PointReach-v0".into(),
                t: step,
                arena: [0.0, 1.0],
                agent: [0.1, 0.2],
                block: None,
                block_fallen: false,
                goal: [0.5, 0.5],
            },
            metrics: BTreeMap::from([("critic_variance_mean".to_string(), step as f64)]),
        }
    }

    #[test]
    fn strict_step_ordering() {
        let (mut tx, _rx) = channel(4, DropPolicy::DropOldest);
        tx.emit(frame(0)).unwrap();
        tx.emit(frame(5)).unwrap();
        assert!(matches!(tx.emit(frame(5)), Err(StreamError::Ordering { last: 5, step: 5 })));
    }

    #[test]
    fn metric_keys_are_fixed_after_first_frame() {
        let (mut tx, _rx) = channel(4, DropPolicy::DropOldest);
        tx.emit(frame(0)).unwrap();
        let mut f = frame(1);
        f.metrics.insert("alpha".into(), 0.1);
        assert!(matches!(tx.emit(f), Err(StreamError::MetricKeys { .. })));
    }

    #[test]
    fn drop_oldest_keeps_latest_k() {
        // queue simulation oracle: keep the last k of k+1 pushes
        let k = 5;
        let (mut tx, rx) = channel(k, DropPolicy::DropOldest);
        let mut oracle = VecDeque::new();
        for s in 1..=(k as u64 + 1) {
            tx.emit(frame(s)).unwrap();
            oracle.push_back(s);
            if oracle.len() > k {
                oracle.pop_front();
            }
        }
        let got: Vec<u64> = rx.drain().iter().map(|f| f.step).collect();
        assert_eq!(got, oracle.into_iter().collect::<Vec<_>>());
        assert_eq!(got, (2..=k as u64 + 1).collect::<Vec<_>>());
        assert_eq!(tx.dropped(), 1);
    }

    #[test]
    fn block_mode_is_lossless_across_threads() {
        let (mut tx, rx) = channel(3, DropPolicy::Block);
        let consumer = std::thread::spawn(move || {
            let mut seen = Vec::new();
            while let Some(f) = rx.recv() {
                seen.push(f.step);
            }
            seen
        });
        for s in 0..500 {
            tx.emit(frame(s)).unwrap();
        }
        drop(tx);
        assert_eq!(consumer.join().unwrap(), (0..500).collect::<Vec<_>>());
    }

    #[test]
    fn disconnected_receiver_is_reported() {
        let (mut tx, rx) = channel(1, DropPolicy::Block);
        drop(rx);
        assert!(matches!(tx.emit(frame(0)), Err(StreamError::Disconnected)));
    }
}
