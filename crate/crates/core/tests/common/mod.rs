#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use gcrl::nn::{Matrix, Mlp, OutputActivation, SquashedSample};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn conf_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../conf")
}

// ---------------------------------------------------------------- gradients

pub const REL_TOL: f64 = 1e-4;
pub const ABS_TOL: f64 = 1e-7;
const H: f64 = 1e-6;

pub fn close(analytic: f64, numeric: f64) -> bool {
    (analytic - numeric).abs() <= ABS_TOL + REL_TOL * analytic.abs().max(numeric.abs())
}

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Matrix {
    let v = (0..rows * cols).map(|_| rng.gen_range(-scale..scale)).collect();
    Matrix::from_vec(rows, cols, v).unwrap()
}

fn weighted_sum(out: &Matrix, w: &Matrix) -> f64 {
    out.as_slice().iter().zip(w.as_slice()).map(|(a, b)| a * b).sum()
}

/// Checks parameter and input gradients of one random network against
/// central differences. Returns the number of gradient entries compared.
pub fn check_random_network(seed: u64) -> Result<usize, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let depth = rng.gen_range(1..=3);
    let mut sizes = vec![rng.gen_range(1..=5)];
    for _ in 0..depth {
        sizes.push(rng.gen_range(2..=8));
    }
    let head = rng.gen_bool(0.5);
    let out_dim = rng.gen_range(1..=3);
    sizes.push(if head { 2 * out_dim } else { out_dim });
    let act = if head {
        OutputActivation::TanhGaussianHead
    } else {
        OutputActivation::Identity
    };
    let mut net = Mlp::new(&sizes, act, &mut rng).map_err(|e| e.to_string())?;
    // push parameters away from the tiny init so every path carries signal
    for p in net.params_mut() {
        *p *= 2.0;
    }
    let batch = rng.gen_range(1..=4);
    let x = random_matrix(&mut rng, batch, sizes[0], 1.0);
    let w = random_matrix(&mut rng, batch, *sizes.last().unwrap(), 1.0);
    net.forward_batch(&x).map_err(|e| e.to_string())?;
    let g = net.backward_batch(&w).map_err(|e| e.to_string())?;

    let loss = |net: &Mlp, x: &Matrix| weighted_sum(&net.predict_batch(x).unwrap(), &w);
    let mut compared = 0;
    let base = net.params().to_vec();
    for i in 0..base.len() {
        let mut p = base.clone();
        p[i] = base[i] + H;
        net.set_params(&p).unwrap();
        let up = loss(&net, &x);
        p[i] = base[i] - H;
        net.set_params(&p).unwrap();
        let down = loss(&net, &x);
        let numeric = (up - down) / (2.0 * H);
        if !close(g.params[i], numeric) {
            return Err(format!(
                "net {seed} {sizes:?}: param {i} analytic {} numeric {numeric}",
                g.params[i]
            ));
        }
        compared += 1;
    }
    net.set_params(&base).unwrap();
    for i in 0..x.as_slice().len() {
        let mut xp = x.clone();
        xp.as_mut_slice()[i] += H;
        let mut xm = x.clone();
        xm.as_mut_slice()[i] -= H;
        let numeric = (loss(&net, &xp) - loss(&net, &xm)) / (2.0 * H);
        let analytic = g.input.as_slice()[i];
        if !close(analytic, numeric) {
            return Err(format!("net {seed} {sizes:?}: input {i} analytic {analytic} numeric {numeric}"));
        }
        compared += 1;
    }
    Ok(compared)
}

/// Gradient of `sum(ca * actions) + sum(cl * log_probs)` with respect to the
/// policy head output, noise held fixed.
pub fn check_squashed_head(seed: u64) -> Result<usize, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = rng.gen_range(1..=3);
    let batch = rng.gen_range(1..=4);
    let head = random_matrix(&mut rng, batch, 2 * dim, 1.5);
    let noise = random_matrix(&mut rng, batch, dim, 2.0);
    let ca = random_matrix(&mut rng, batch, dim, 1.0);
    let cl: Vec<f64> = (0..batch).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let objective = |h: &Matrix| {
        let s = SquashedSample::new(h, &noise).unwrap();
        weighted_sum(&s.actions, &ca) + s.log_probs.iter().zip(&cl).map(|(a, b)| a * b).sum::<f64>()
    };
    let s = SquashedSample::new(&head, &noise).map_err(|e| e.to_string())?;
    let g = s.head_grad(&ca, &cl);
    for i in 0..head.as_slice().len() {
        let mut hp = head.clone();
        hp.as_mut_slice()[i] += H;
        let mut hm = head.clone();
        hm.as_mut_slice()[i] -= H;
        let numeric = (objective(&hp) - objective(&hm)) / (2.0 * H);
        if !close(g.as_slice()[i], numeric) {
            return Err(format!("head {seed}: entry {i} analytic {} numeric {numeric}", g.as_slice()[i]));
        }
    }
    Ok(head.as_slice().len())
}

/// The actor objective `mean(alpha * log_pi - min_j Q_j(s, a))` chained
/// through the critics' input gradients, against central differences in the
/// actor parameters.
pub fn check_actor_objective(seed: u64) -> Result<usize, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (obs, act, batch, alpha) = (3, 2, 4, 0.3);
    let mut actor = Mlp::new(&[obs, 6, 2 * act], OutputActivation::TanhGaussianHead, &mut rng).unwrap();
    let critics: Vec<Mlp> = (0..3)
        .map(|_| Mlp::new(&[obs + act, 6, 1], OutputActivation::Identity, &mut rng).unwrap())
        .collect();
    let s = random_matrix(&mut rng, batch, obs, 1.0);
    let noise = random_matrix(&mut rng, batch, act, 1.0);
    let objective = |actor: &Mlp| {
        let head = actor.predict_batch(&s).unwrap();
        let smp = SquashedSample::new(&head, &noise).unwrap();
        let x = s.hcat(&smp.actions).unwrap();
        let mut total = 0.0;
        for r in 0..batch {
            let qmin = critics
                .iter()
                .map(|c| c.predict(x.row(r)).unwrap()[0])
                .fold(f64::INFINITY, f64::min);
            total += alpha * smp.log_probs[r] - qmin;
        }
        total / batch as f64
    };
    // analytic
    let head = actor.forward_batch(&s).unwrap();
    let smp = SquashedSample::new(&head, &noise).unwrap();
    let x = s.hcat(&smp.actions).unwrap();
    let mut live = critics.clone();
    let mut qs = Vec::new();
    for c in live.iter_mut() {
        qs.push(c.forward_batch(&x).unwrap());
    }
    let mut d_actions = Matrix::zeros(batch, act);
    for r in 0..batch {
        let j = (0..critics.len())
            .min_by(|&a, &b| qs[a].get(r, 0).total_cmp(&qs[b].get(r, 0)))
            .unwrap();
        let mut up = Matrix::zeros(batch, 1);
        up.set(r, 0, -1.0 / batch as f64);
        let gin = live[j].backward_input(&up).unwrap();
        for i in 0..act {
            d_actions.set(r, i, gin.get(r, obs + i));
        }
    }
    let d_lp = vec![alpha / batch as f64; batch];
    let g = actor.backward_batch(&smp.head_grad(&d_actions, &d_lp)).unwrap().params;
    let base = actor.params().to_vec();
    for i in 0..base.len() {
        let mut p = base.clone();
        p[i] += H;
        actor.set_params(&p).unwrap();
        let up = objective(&actor);
        p[i] = base[i] - H;
        actor.set_params(&p).unwrap();
        let down = objective(&actor);
        let numeric = (up - down) / (2.0 * H);
        if !close(g[i], numeric) {
            return Err(format!("actor {seed}: param {i} analytic {} numeric {numeric}", g[i]));
        }
    }
    Ok(base.len())
}

// ------------------------------------------------------- FileStore reading

/// Minimal reader for the MLflow FileStore convention, written against the
/// directory layout only (no library types).
#[derive(Debug, Default)]
pub struct FsRun {
    pub experiment_id: String,
    pub experiment_name: String,
    pub run_id: String,
    pub status: String,
    pub params: BTreeMap<String, String>,
    pub metrics: BTreeMap<String, Vec<(i64, f64, i64)>>,
    pub tags: BTreeMap<String, String>,
    pub artifacts: Vec<String>,
}

fn yaml_field(text: &str, key: &str) -> Option<String> {
    text.lines().find_map(|l| {
        let (k, v) = l.split_once(": ")?;
        (k == key).then(|| v.trim().trim_matches('\'').to_string())
    })
}

fn read_dir_files(dir: &Path) -> Vec<(String, String)> {
    let mut out = Vec::new();
    if let Ok(entries) = fs::read_dir(dir) {
        for e in entries.flatten() {
            if e.path().is_file() {
                out.push((
                    e.file_name().to_string_lossy().into_owned(),
                    fs::read_to_string(e.path()).unwrap_or_default(),
                ));
            }
        }
    }
    out.sort();
    out
}

pub fn read_filestore(root: &Path) -> Result<Vec<FsRun>, String> {
    let mut runs = Vec::new();
    for exp in fs::read_dir(root).map_err(|e| e.to_string())?.flatten() {
        let name = exp.file_name().to_string_lossy().into_owned();
        if !name.chars().all(|c| c.is_ascii_digit()) {
            continue;
        }
        let meta = fs::read_to_string(exp.path().join("meta.yaml")).map_err(|e| format!("{name}: {e}"))?;
        if yaml_field(&meta, "experiment_id").as_deref() != Some(name.as_str()) {
            return Err(format!("experiment {name}: id mismatch in meta.yaml"));
        }
        let exp_name = yaml_field(&meta, "name").ok_or("experiment without name")?;
        for run in fs::read_dir(exp.path()).map_err(|e| e.to_string())?.flatten() {
            if !run.path().is_dir() {
                continue;
            }
            let rid = run.file_name().to_string_lossy().into_owned();
            let meta = fs::read_to_string(run.path().join("meta.yaml")).map_err(|e| format!("{rid}: {e}"))?;
            if yaml_field(&meta, "run_id").as_deref() != Some(rid.as_str()) {
                return Err(format!("run {rid}: run_id mismatch"));
            }
            let mut r = FsRun {
                experiment_id: name.clone(),
                experiment_name: exp_name.clone(),
                run_id: rid.clone(),
                status: yaml_field(&meta, "status").unwrap_or_default(),
                ..Default::default()
            };
            r.params = read_dir_files(&run.path().join("params")).into_iter().collect();
            r.tags = read_dir_files(&run.path().join("tags")).into_iter().collect();
            for (metric, text) in read_dir_files(&run.path().join("metrics")) {
                let mut pts = Vec::new();
                for line in text.lines() {
                    let f: Vec<&str> = line.split(' ').collect();
                    if f.len() != 3 {
                        return Err(format!("{rid}/{metric}: bad line `{line}`"));
                    }
                    pts.push((
                        f[0].parse().map_err(|_| format!("bad timestamp `{line}`"))?,
                        f[1].parse().map_err(|_| format!("bad value `{line}`"))?,
                        f[2].parse().map_err(|_| format!("bad step `{line}`"))?,
                    ));
                }
                r.metrics.insert(metric, pts);
            }
            r.artifacts = read_dir_files(&run.path().join("artifacts")).into_iter().map(|f| f.0).collect();
            runs.push(r);
        }
    }
    Ok(runs)
}

// ------------------------------------------------------ sweep simulations

use gcrl::sweep::{Plan, StudyState, TrialOutcome, TrialStatus};

/// Drives a study with random completion order, random failures and a
/// random objective per configuration, checking the scheduling invariants
/// after every event.
pub fn simulate_study(state: &mut StudyState, seed: u64, n_jobs: usize) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_cfg = state.configurations.len();
    let quality: Vec<f64> = (0..n_cfg).map(|_| rng.gen()).collect();
    let fail_p = rng.gen_range(0.0..0.3);
    let min = state.config.min_trials_per_param;
    let mut in_flight: Vec<u64> = Vec::new();
    loop {
        let mut progressed = false;
        while in_flight.len() < n_jobs {
            let before = state.counts();
            match state.plan_next_trial() {
                Plan::Trial(t) => {
                    // coverage before exploitation
                    if before[t.config_index] >= min && before.iter().any(|&c| c < min) {
                        return Err(format!("config {} got trial {} before full coverage", t.config_index, before[t.config_index] + 1));
                    }
                    in_flight.push(t.trial_id);
                    progressed = true;
                }
                _ => break,
            }
        }
        if in_flight.is_empty() {
            break;
        }
        let k = rng.gen_range(0..in_flight.len());
        let id = in_flight.swap_remove(k);
        let cfg = state.trials[id as usize].config_index;
        let outcome = if rng.gen_bool(fail_p) {
            TrialOutcome::Failed {
                error: "simulated".into(),
                run_id: None,
            }
        } else {
            TrialOutcome::Complete {
                objective: quality[cfg] + rng.gen_range(-0.05..0.05),
                run_id: None,
            }
        };
        state.record_result(id, &outcome).map_err(|e| e.to_string())?;
        let _ = progressed;
        let counts = state.counts();
        if state.trials.len() > state.config.max_trials {
            return Err(format!("{} trials exceed budget {}", state.trials.len(), state.config.max_trials));
        }
        if let Some(c) = counts.iter().find(|&&c| c > state.config.max_trials_per_param) {
            return Err(format!("configuration count {c} exceeds per-param cap"));
        }
    }
    if state.trials.iter().any(|t| t.status == TrialStatus::Running) {
        return Err("study ended with running trials".into());
    }
    if state.plan_next_trial() != Plan::Done {
        return Err("study not done after draining".into());
    }
    Ok(())
}

/// Per-configuration means recomputed from journal lines alone.
pub fn journal_means(text: &str) -> BTreeMap<usize, f64> {
    let mut planned: BTreeMap<u64, usize> = BTreeMap::new();
    let mut acc: BTreeMap<usize, (f64, usize)> = BTreeMap::new();
    let mut finished: Vec<(u64, f64)> = Vec::new();
    for line in text.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        match v["event"].as_str() {
            Some("planned") => {
                planned.insert(v["trial_id"].as_u64().unwrap(), v["config_index"].as_u64().unwrap() as usize);
            }
            Some("finished") if v["status"] == "complete" => {
                finished.push((v["trial_id"].as_u64().unwrap(), v["objective"].as_f64().unwrap()));
            }
            _ => {}
        }
    }
    finished.sort_by_key(|f| f.0);
    for (id, o) in finished {
        let e = acc.entry(planned[&id]).or_default();
        e.0 += o;
        e.1 += 1;
    }
    acc.into_iter().map(|(k, (s, n))| (k, s / n as f64)).collect()
}

/// Brute-force argmax (lowest index on ties).
pub fn argmax(means: &BTreeMap<usize, f64>) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (&k, &v) in means {
        if best.is_none_or(|(_, b)| v > b) {
            best = Some((k, v));
        }
    }
    best.map(|b| b.0)
}
