//! Smoke and performance test protocols, pinned in `conf/test/*.yaml`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use super::run::prepare;
use super::CliError;
use crate::config::{read_yaml_file, ConfigTree, Value};
use crate::livemetrics::{channel, DropPolicy, SyncFrame};
use crate::sacvar::{train, SacError, METRIC_NAMES};

fn strings(tree: &ConfigTree, key: &str, file: &Path) -> Result<Vec<String>, CliError> {
    match tree.get(key) {
        Some(Value::List(items)) => Ok(items
            .iter()
            .map(|v| match v {
                Value::Str(s) => s.clone(),
                other => other.to_string(),
            })
            .collect()),
        None => Ok(Vec::new()),
        Some(_) => Err(CliError::Config(format!("{}: `{key}` must be a list", file.display()))),
    }
}

fn number(tree: &ConfigTree, key: &str, file: &Path) -> Result<f64, CliError> {
    tree.get(key)
        .and_then(Value::as_f64)
        .ok_or_else(|| CliError::Config(format!("{}: missing numeric `{key}`", file.display())))
}

#[derive(Debug, Clone, Default)]
pub struct SmokeOptions {
    /// Poison one critic weight with NaN before training.
    pub inject_nan: bool,
}

#[derive(Debug, Clone)]
pub struct ComboResult {
    pub algorithm: String,
    pub env: String,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

#[derive(Debug, Clone)]
pub struct SmokeReport {
    pub steps: usize,
    pub combos: Vec<ComboResult>,
    pub seconds: f64,
}

impl SmokeReport {
    pub fn passed(&self) -> bool {
        !self.combos.is_empty() && self.combos.iter().all(|c| c.passed)
    }

    pub fn render(&self) -> String {
        let mut out = format!("smoke: {} steps per combination\n", self.steps);
        for c in &self.combos {
            let _ = writeln!(
                out,
                "{} {:<8} {:<14} {:>6.2}s  {}",
                if c.passed { "PASS" } else { "FAIL" },
                c.algorithm,
                c.env,
                c.seconds,
                c.detail
            );
        }
        let passed = self.combos.iter().filter(|c| c.passed).count();
        let _ = writeln!(out, "{passed}/{} passed in {:.1}s", self.combos.len(), self.seconds);
        out
    }
}

pub fn run_smoke(conf_dir: &Path, opts: &SmokeOptions) -> Result<SmokeReport, CliError> {
    let file = conf_dir.join("test").join("smoke.yaml");
    let spec = read_yaml_file(&file)?;
    let steps = number(&spec, "steps", &file)? as usize;
    let mut algorithms = strings(&spec, "algorithms", &file)?;
    if algorithms.is_empty() {
        algorithms = crate::config::list_algorithms(conf_dir)?;
    }
    let mut envs = strings(&spec, "envs", &file)?;
    if envs.is_empty() {
        envs = crate::env::ENV_NAMES.iter().map(|s| s.to_string()).collect();
    }
    let overrides = strings(&spec, "overrides", &file)?;
    let start = Instant::now();
    let mut combos = Vec::new();
    for alg in &algorithms {
        for env in &envs {
            let t = Instant::now();
            let mut tokens = vec![format!("algorithm={alg}"), format!("env={env}")];
            tokens.extend(overrides.iter().cloned());
            tokens.push(format!("algorithm.total_steps={steps}"));
            let (passed, detail) = match smoke_one(conf_dir, &tokens, steps, opts) {
                Ok(d) => (true, d),
                Err(e) => (false, e),
            };
            combos.push(ComboResult {
                algorithm: alg.clone(),
                env: env.clone(),
                passed,
                detail,
                seconds: t.elapsed().as_secs_f64(),
            });
        }
    }
    Ok(SmokeReport {
        steps,
        combos,
        seconds: start.elapsed().as_secs_f64(),
    })
}

fn smoke_one(conf_dir: &Path, tokens: &[String], steps: usize, opts: &SmokeOptions) -> Result<String, String> {
    let (_, mut agent, mut env) = prepare(conf_dir, tokens, 0).map_err(|e| format!("setup: {e}"))?;
    if opts.inject_nan {
        agent.critics.critics[0].params_mut()[0] = f64::NAN;
    }
    let (mut tx, rx) = channel(64, DropPolicy::Block);
    let consumer = std::thread::spawn(move || {
        let mut frames: Vec<SyncFrame> = Vec::new();
        while let Some(f) = rx.recv() {
            frames.push(f);
        }
        frames
    });
    let mut sink: BTreeMap<String, Vec<(u64, f64)>> = BTreeMap::new();
    let result = train(&mut agent, env.as_mut(), steps, &mut sink, Some(&mut tx));
    drop(tx);
    let frames = consumer.join().map_err(|_| "stream consumer panicked".to_string())?;
    let outcome = result.map_err(|e| match e {
        SacError::Numeric { .. } => format!("numeric error: {e}"),
        other => format!("error: {other}"),
    })?;

    let check = |ok: bool, what: String| if ok { Ok(()) } else { Err(what) };
    check(outcome.updates >= 1, "no gradient step was taken".into())?;
    check(!outcome.evaluations.is_empty(), "no evaluation ran".into())?;
    for name in METRIC_NAMES {
        let points = sink.get(name).ok_or(format!("metric {name} never logged"))?;
        check(points.windows(2).all(|w| w[0].0 < w[1].0), format!("{name}: steps not increasing"))?;
        check(points.iter().all(|p| p.1.is_finite()), format!("{name}: non-finite value"))?;
    }
    let within = |name: &str, lo: f64, hi: f64| sink[name].iter().all(|p| p.1 >= lo && p.1 <= hi);
    check(within("success_rate", 0.0, 1.0), "success_rate outside [0, 1]".into())?;
    check(within("intrinsic_reward_mean", 0.0, 1.0), "intrinsic reward outside [0, 1]".into())?;
    check(within("critic_variance_mean", 0.0, f64::INFINITY), "negative critic variance".into())?;
    check(within("alpha", f64::MIN_POSITIVE, f64::INFINITY), "alpha not positive".into())?;
    check(frames.len() == steps, format!("{} frames for {steps} steps", frames.len()))?;
    check(
        frames.iter().enumerate().all(|(i, f)| f.step == i as u64 + 1),
        "frame steps out of sequence".into(),
    )?;
    let keys: Vec<&String> = frames[0].metrics.keys().collect();
    check(
        frames.iter().all(|f| f.metrics.keys().collect::<Vec<_>>() == keys),
        "metric keys change within the stream".into(),
    )?;
    let mut bytes = Vec::new();
    agent.save(&mut bytes).map_err(|e| format!("checkpoint: {e}"))?;
    let mut copy = agent.clone();
    copy.actor.params_mut()[0] += 1.0;
    copy.load(&mut bytes.as_slice()).map_err(|e| format!("checkpoint: {e}"))?;
    check(copy.parameter_snapshot() == agent.parameter_snapshot(), "checkpoint round trip differs".into())?;
    Ok(format!(
        "{} updates, {} evals, {} frames, success {:.2}",
        outcome.updates,
        outcome.evaluations.len(),
        frames.len(),
        outcome.final_success_rate
    ))
}

#[derive(Debug, Clone)]
pub struct PerfReport {
    pub algorithm: String,
    pub env: String,
    pub steps: usize,
    pub per_seed: Vec<(u64, f64)>,
    pub median: f64,
    pub threshold: f64,
    pub seconds: f64,
}

impl PerfReport {
    pub fn passed(&self) -> bool {
        self.median >= self.threshold
    }

    pub fn render(&self) -> String {
        let mut out = format!("perf: {} on {}, {} steps per seed\n", self.algorithm, self.env, self.steps);
        for (seed, rate) in &self.per_seed {
            let _ = writeln!(out, "  seed {seed}: final success_rate {rate:.3}");
        }
        let _ = writeln!(
            out,
            "{} median {:.3} (threshold {:.3}) in {:.1}s",
            if self.passed() { "PASS" } else { "FAIL" },
            self.median,
            self.threshold,
            self.seconds
        );
        out
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Trains every pinned seed (in parallel) and compares the median final
/// success rate to the pinned threshold. `extra` overrides go last.
pub fn run_perf(conf_dir: &Path, extra: &[String]) -> Result<PerfReport, CliError> {
    let file = conf_dir.join("test").join("perf.yaml");
    let spec = read_yaml_file(&file)?;
    let algorithm = spec.get("algorithm").map(|v| v.to_string()).unwrap_or_else(|| "sac".into());
    let env = spec.get("env").map(|v| v.to_string()).unwrap_or_else(|| "PointReach-v0".into());
    let threshold = number(&spec, "threshold", &file)?;
    let max_steps = number(&spec, "max_steps", &file)? as usize;
    let seeds: Vec<u64> = match spec.get("seeds") {
        Some(Value::List(s)) => s
            .iter()
            .map(|v| v.as_i64().filter(|&i| i >= 0).map(|i| i as u64))
            .collect::<Option<_>>()
            .ok_or_else(|| CliError::Config(format!("{}: seeds must be non-negative integers", file.display())))?,
        _ => return Err(CliError::Config(format!("{}: missing `seeds` list", file.display()))),
    };
    if seeds.is_empty() {
        return Err(CliError::Config(format!("{}: `seeds` is empty", file.display())));
    }
    let mut base = vec![format!("algorithm={algorithm}"), format!("env={env}")];
    base.extend(strings(&spec, "overrides", &file)?);
    base.extend(extra.iter().cloned());

    let mut prepared = Vec::new();
    for &seed in &seeds {
        let mut tokens = base.clone();
        tokens.push(format!("seed={seed}"));
        let (_, agent, env) = prepare(conf_dir, &tokens, 0)?;
        if agent.config.total_steps > max_steps {
            return Err(CliError::Config(format!(
                "perf budget {} exceeds the pinned maximum of {max_steps} steps",
                agent.config.total_steps
            )));
        }
        prepared.push((seed, agent, env));
    }
    let steps = prepared[0].1.config.total_steps;
    let start = Instant::now();
    let results: Vec<Result<(u64, f64), SacError>> = std::thread::scope(|s| {
        let handles: Vec<_> = prepared
            .into_iter()
            .map(|(seed, mut agent, mut env)| {
                s.spawn(move || {
                    let total = agent.config.total_steps;
                    train(&mut agent, env.as_mut(), total, &mut crate::sacvar::NullSink, None)
                        .map(|o| (seed, o.final_success_rate))
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("perf worker panicked")).collect()
    });
    let per_seed = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    Ok(PerfReport {
        algorithm,
        env,
        steps,
        median: median(per_seed.iter().map(|p| p.1).collect()),
        per_seed,
        threshold,
        seconds: start.elapsed().as_secs_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::median;

    #[test]
    fn medians() {
        assert_eq!(median(vec![0.2, 1.0, 0.9]), 0.9);
        assert_eq!(median(vec![0.0, 1.0]), 0.5);
    }
}
