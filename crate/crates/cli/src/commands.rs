use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context};
use molsearch::mcts::{search, SearchTrace};
use molsearch::policy::{HeuristicProvider, Policy, PolicyProvider, PromptSet, RemoteProvider, ScriptedProvider};
use molsearch::ruledsl::{ground_rules, ErrorTrace, RuleSet};
use molsearch::tasks::{
    improvement_stats, Dataset, Metric, Objective, OptimizationTask, PolicyProposer, PredictionTask, RunSummary,
    TaskError, TaskKind,
};
use molsearch::theory::{
    error_lower_bound_check, exhaustive_convergence_check, find_cliffs, generate_instance, BoundCheck, CliffSpace,
    CliffSpaceDocument, SmoothFit,
};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::{config_err, ConfigError, ProviderKind, RunConfig};
use crate::output::RunDir;

/// Whether the command did everything it was asked to.
pub type Completed = bool;

fn build_policy(cfg: &RunConfig) -> anyhow::Result<Policy> {
    let provider: Arc<dyn PolicyProvider> = match cfg.provider.kind {
        ProviderKind::Scripted => {
            let path = cfg.provider.script.as_ref().expect("validated");
            Arc::new(ScriptedProvider::from_file(path).map_err(|e| ConfigError(e.to_string()))?)
        }
        ProviderKind::Heuristic => Arc::new(HeuristicProvider::new(cfg.seed)),
        ProviderKind::Remote => Arc::new(RemoteProvider::new(cfg.provider.remote.clone().expect("validated"))),
    };
    Ok(match &cfg.provider.prompts {
        Some(dir) => Policy::with_prompts(provider, PromptSet::from_dir(dir).map_err(|e| ConfigError(e.to_string()))?),
        None => Policy::new(provider),
    })
}

fn read_lines(path: &Path) -> anyhow::Result<Vec<String>> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(String::from)
        .collect())
}

fn load_rules(cfg: &RunConfig) -> anyhow::Result<RuleSet> {
    match &cfg.rules {
        Some(p) => Ok(RuleSet::load(p).map_err(|e| ConfigError(e.to_string()))?),
        None => Ok(RuleSet::default()),
    }
}

/// Sentences handed to the policy: the rule set's, else the corpus.
fn knowledge(cfg: &RunConfig, rules: &RuleSet) -> anyhow::Result<Vec<String>> {
    let from_rules: Vec<String> = rules
        .rules()
        .iter()
        .map(|r| r.sentence.clone())
        .filter(|s| !s.is_empty())
        .collect();
    if !from_rules.is_empty() {
        return Ok(from_rules);
    }
    match &cfg.corpus {
        Some(p) => read_lines(p),
        None => Ok(Vec::new()),
    }
}

fn start_run(cfg: &RunConfig) -> anyhow::Result<RunDir> {
    let dir = RunDir::create(&cfg.out_dir(), cfg.seed)?;
    // the output location is not part of what makes a run reproducible
    let saved = RunConfig { out: None, ..cfg.clone() };
    dir.write_json("config.json", &saved)?;
    Ok(dir)
}

#[derive(Serialize)]
struct DroppedRule<'a> {
    sentence: &'a str,
    error: &'a ErrorTrace,
}

#[derive(Serialize)]
struct ColdstartReport<'a> {
    provider: String,
    sentences: usize,
    accepted: usize,
    dropped: Vec<DroppedRule<'a>>,
    rectifications: usize,
    max_retries: usize,
    traces: &'a [ErrorTrace],
}

pub fn coldstart(cfg: &RunConfig) -> anyhow::Result<(PathBuf, Completed)> {
    let policy = build_policy(cfg)?;
    let sentences = match &cfg.corpus {
        Some(p) => read_lines(p)?,
        None => policy.synthesize_knowledge(&cfg.task).context("knowledge synthesis")?,
    };
    if sentences.is_empty() {
        bail!("no rules: the corpus is empty");
    }
    let out = ground_rules(&sentences, &policy, cfg.provider.max_retries).context("grounding")?;
    if out.rules.is_empty() {
        bail!("no rules: all {} sentences were dropped", sentences.len());
    }
    for (s, t) in &out.dropped {
        log::warn!("dropped '{s}': {t}");
    }
    let dir = start_run(cfg)?;
    dir.write_text("rules.json", &out.rules.to_json())?;
    dir.write_json(
        "report.json",
        &ColdstartReport {
            provider: policy.provider_id(),
            sentences: sentences.len(),
            accepted: out.rules.len(),
            dropped: out.dropped.iter().map(|(s, e)| DroppedRule { sentence: s, error: e }).collect(),
            rectifications: out.rectifications,
            max_retries: cfg.provider.max_retries,
            traces: &out.traces,
        },
    )?;
    println!(
        "grounded {} of {} sentences ({} dropped, {} rectifications)",
        out.rules.len(),
        sentences.len(),
        out.dropped.len(),
        out.rectifications
    );
    Ok((dir.path().to_path_buf(), true))
}

#[derive(Debug, Clone, Serialize)]
struct OptimizeRow {
    run: usize,
    start: String,
    best: String,
    start_value: Option<f64>,
    best_value: Option<f64>,
    delta: Option<f64>,
    best_total: Option<f64>,
    similarity: Option<f64>,
    status: String,
}

#[derive(Serialize)]
struct TrajectoryRow {
    run: usize,
    iteration: usize,
    best_node: usize,
    best_total: f64,
    best_value: f64,
    best_state: String,
}

#[derive(Serialize)]
struct OptimizeReport {
    provider: String,
    property: String,
    runs: Vec<OptimizeRow>,
    completed: usize,
    mean_delta: Option<f64>,
    success_rate: Option<f64>,
}

/// Best node after each iteration, starting with the root alone.
fn trajectory(trace: &SearchTrace<f64>) -> Vec<usize> {
    std::iter::once(0).chain(trace.iterations.iter().map(|it| it.best_node)).collect()
}

pub fn optimize(cfg: &RunConfig) -> anyhow::Result<(PathBuf, Completed)> {
    cfg.require_kind(TaskKind::Optimization)?;
    let Objective::Optimization { property, start } = &cfg.task.objective else {
        unreachable!()
    };
    let starts = match &cfg.starts {
        Some(p) => read_lines(p)?,
        None => vec![start.clone()],
    };
    if starts.is_empty() {
        return config_err("the start set is empty");
    }
    let rules = load_rules(cfg)?;
    let policy = build_policy(cfg)?;
    let proposer = PolicyProposer::new(&policy, knowledge(cfg, &rules)?);
    let dir = start_run(cfg)?;
    let mut rows = Vec::new();
    let mut traj = Vec::new();
    let mut summaries = Vec::new();
    for (i, s) in starts.iter().enumerate() {
        let run = i + 1;
        let mut spec = cfg.task.clone();
        spec.objective = Objective::Optimization {
            property: *property,
            start: s.clone(),
        };
        let failed = |status: String| OptimizeRow {
            run,
            start: s.clone(),
            best: String::new(),
            start_value: None,
            best_value: None,
            delta: None,
            best_total: None,
            similarity: None,
            status,
        };
        let task = match OptimizationTask::new(spec, rules.clone()) {
            Ok(t) => t,
            Err(e) => {
                log::error!("run {run}: {e}");
                rows.push(failed(format!("failed: {e}")));
                continue;
            }
        };
        let outcome = match search(&task, &proposer, cfg.search_config()) {
            Ok(o) => o,
            Err(e) => {
                log::error!("run {run}: {e}");
                rows.push(failed(format!("failed: {e}")));
                continue;
            }
        };
        let trace = &outcome.trace;
        dir.write_text(&format!("trace-{run:02}.json"), &trace.to_json())?;
        for (it, node) in trajectory(trace).into_iter().enumerate() {
            let n = &trace.nodes[node];
            traj.push(TrajectoryRow {
                run,
                iteration: it,
                best_node: node,
                best_total: n.reward.total,
                best_value: n.reward.task,
                best_state: n.state.clone(),
            });
        }
        let start_value = trace.nodes[0].reward.task;
        let best = outcome.best_state();
        let best_value = task.property_value(&best)?;
        summaries.push(RunSummary {
            start: start_value,
            best: best_value,
            valid: true,
        });
        let status = match &trace.truncated {
            Some(why) => format!("truncated: {why}"),
            None => "ok".into(),
        };
        rows.push(OptimizeRow {
            run,
            start: task.start().smiles.clone(),
            best: best.smiles.clone(),
            start_value: Some(start_value),
            best_value: Some(best_value),
            delta: Some(best_value - start_value),
            best_total: Some(outcome.best_reward().total),
            similarity: Some(task.similarity_to_start(&best)),
            status,
        });
    }
    let stats = improvement_stats(&summaries).ok();
    let completed = rows.iter().filter(|r| r.status == "ok").count();
    dir.write_csv("results.csv", &rows)?;
    dir.write_csv("trajectory.csv", &traj)?;
    dir.write_json(
        "report.json",
        &OptimizeReport {
            provider: policy.provider_id(),
            property: property.descriptor().to_string(),
            runs: rows.clone(),
            completed,
            mean_delta: stats.map(|s| s.0),
            success_rate: stats.map(|s| s.1),
        },
    )?;
    for r in &rows {
        match (r.start_value, r.best_value) {
            (Some(a), Some(b)) => println!("run {}: {a:.3} -> {b:.3} ({}) {}", r.run, r.status, r.best),
            _ => println!("run {}: {}", r.run, r.status),
        }
    }
    if let Some((d, sr)) = stats {
        println!("mean delta {d:.3}, success rate {sr:.1}%");
    }
    Ok((dir.path().to_path_buf(), completed == rows.len()))
}

#[derive(Serialize)]
struct PredictTrajectoryRow {
    iteration: usize,
    best_node: usize,
    best_total: f64,
    best_valid_metric: f64,
    features: String,
}

#[derive(Serialize)]
struct PredictRow {
    features: String,
    n_features: usize,
    baseline_valid: f64,
    valid_metric: f64,
    test_metric: f64,
}

#[derive(Serialize)]
struct PredictReport {
    provider: String,
    metric: Metric,
    baseline_features: Vec<String>,
    baseline_valid: f64,
    features: Vec<String>,
    valid_metric: f64,
    test_metric: f64,
    train_rows: usize,
    test_rows: usize,
    iterations: usize,
    truncated: Option<String>,
    test_reads: usize,
    early_test_reads: usize,
}

fn task_error(e: TaskError) -> anyhow::Error {
    match e {
        TaskError::Spec(m) => ConfigError(m).into(),
        other => other.into(),
    }
}

pub fn predict(cfg: &RunConfig) -> anyhow::Result<(PathBuf, Completed)> {
    cfg.require_kind(TaskKind::Prediction)?;
    let Some(path) = &cfg.dataset else {
        return config_err("predict needs a dataset path");
    };
    let data = Dataset::load_csv(path, cfg.seed)?;
    let rules = load_rules(cfg)?;
    let root = cfg.features.clone().unwrap_or_else(|| vec!["molecular_weight".to_string()]);
    let task = PredictionTask::new(cfg.task.clone(), data, &rules, root.clone(), cfg.feature_cap()).map_err(task_error)?;
    let metric = task.metric();
    let baseline_valid = task.validation_metric::<f64>(&root)?;
    let policy = build_policy(cfg)?;
    let proposer = PolicyProposer::new(&policy, knowledge(cfg, &rules)?);
    let outcome = search(&task, &proposer, cfg.search_config())?;
    let trace = &outcome.trace;
    let as_metric = |task_reward: f64| match metric {
        Metric::Rmse => -task_reward,
        Metric::Auc => task_reward,
    };
    let traj: Vec<PredictTrajectoryRow> = trajectory(trace)
        .into_iter()
        .enumerate()
        .map(|(it, node)| PredictTrajectoryRow {
            iteration: it,
            best_node: node,
            best_total: trace.nodes[node].reward.total,
            best_valid_metric: as_metric(trace.nodes[node].reward.task),
            features: outcome.tree.node(node).state.as_ref().expect("best is valid").join(";"),
        })
        .collect();
    let best = outcome.best_state();
    let early_test_reads = task.dataset().guard().early_test_reads();
    let report = task.finalize(&best)?;
    let dir = start_run(cfg)?;
    dir.write_text("trace.json", &trace.to_json())?;
    dir.write_csv("trajectory.csv", &traj)?;
    dir.write_csv(
        "results.csv",
        &[PredictRow {
            features: best.join(";"),
            n_features: best.len(),
            baseline_valid,
            valid_metric: report.valid_metric,
            test_metric: report.test_metric,
        }],
    )?;
    dir.write_json(
        "report.json",
        &PredictReport {
            provider: policy.provider_id(),
            metric,
            baseline_features: root,
            baseline_valid,
            features: best.clone(),
            valid_metric: report.valid_metric,
            test_metric: report.test_metric,
            train_rows: report.train_rows,
            test_rows: report.test_rows,
            iterations: trace.iterations.len(),
            truncated: trace.truncated.clone(),
            test_reads: task.dataset().guard().reads(molsearch::tasks::Split::Test),
            early_test_reads,
        },
    )?;
    let name = match metric {
        Metric::Rmse => "RMSE",
        Metric::Auc => "AUC",
    };
    println!("features: {}", best.join(", "));
    println!("validation {name} {:.4} (baseline {:.4}), test {name} {:.4}", report.valid_metric, baseline_valid, report.test_metric);
    if let Some(why) = &trace.truncated {
        println!("search truncated: {why}");
    }
    Ok((dir.path().to_path_buf(), trace.truncated.is_none()))
}

#[derive(Debug, Clone, Serialize)]
pub struct CliffRow {
    pub instance: usize,
    pub point: usize,
    pub local_k: f64,
    pub kappa: f64,
    pub bound: f64,
    pub observed: f64,
    pub holds: bool,
}

impl CliffRow {
    fn new(instance: usize, c: BoundCheck<f64>) -> Self {
        CliffRow {
            instance,
            point: c.point,
            local_k: c.local_k,
            kappa: c.kappa,
            bound: c.bound,
            observed: c.observed,
            holds: c.holds,
        }
    }
}

#[derive(Serialize)]
struct CliffReport {
    rows: Vec<CliffRow>,
    /// Per instance: cliff count at the planted height, and whether the
    /// exhaustive search found the optimum.
    instances: Vec<(usize, bool)>,
}

pub struct CliffArgs {
    pub demo: bool,
    pub space: Option<PathBuf>,
    pub kappa: f64,
    pub threshold: f64,
    pub instances: usize,
    pub seed: u64,
    pub out: Option<PathBuf>,
}

fn check(space: &CliffSpace<f64>, x: usize, kappa: f64) -> anyhow::Result<BoundCheck<f64>> {
    let fit = SmoothFit::clamped(space, x, kappa)?;
    Ok(error_lower_bound_check(space, &fit, x)?)
}

pub fn cliff(args: &CliffArgs) -> anyhow::Result<(Option<PathBuf>, Completed)> {
    let mut rows = Vec::new();
    let mut instances = Vec::new();
    if args.demo {
        let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
        for i in 0..args.instances {
            let inst = generate_instance::<f64>(&mut rng);
            for kappa in [inst.kappa, inst.k] {
                rows.push(CliffRow::new(i, check(&inst.space, inst.cliff, kappa)?));
            }
            let n = inst.space.len();
            let found = exhaustive_convergence_check(&inst.space, 10 * n, args.seed + i as u64)?;
            instances.push((find_cliffs(&inst.space, inst.k).len(), found));
        }
    } else {
        let Some(path) = &args.space else {
            return config_err("cliff needs --demo or --space FILE");
        };
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
        let doc: CliffSpaceDocument =
            serde_json::from_str(&text).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
        let space = CliffSpace::<f64>::from_document(&doc).map_err(|e| ConfigError(e.to_string()))?;
        if !(args.kappa >= 0.0) {
            return config_err("kappa must be non-negative");
        }
        let cliffs = find_cliffs(&space, args.threshold);
        for &x in &cliffs {
            rows.push(CliffRow::new(0, check(&space, x, args.kappa)?));
        }
        let found = exhaustive_convergence_check(&space, 10 * space.len(), args.seed)?;
        instances.push((cliffs.len(), found));
    }
    println!("{:>4} {:>6} {:>9} {:>9} {:>9} {:>9}  holds", "inst", "point", "K", "kappa", "bound", "observed");
    for r in &rows {
        println!(
            "{:>4} {:>6} {:>9.4} {:>9.4} {:>9.4} {:>9.4}  {}",
            r.instance, r.point, r.local_k, r.kappa, r.bound, r.observed, r.holds
        );
    }
    for (i, (n, found)) in instances.iter().enumerate() {
        println!("instance {i}: {n} cliff point(s), exhaustive search found the optimum: {found}");
    }
    let ok = rows.iter().all(|r| r.holds) && instances.iter().all(|(_, f)| *f);
    let dir = match &args.out {
        Some(out) => {
            let dir = RunDir::create(out, args.seed)?;
            dir.write_json("report.json", &CliffReport { rows: rows.clone(), instances })?;
            dir.write_csv("results.csv", &rows)?;
            Some(dir.path().to_path_buf())
        }
        None => None,
    };
    Ok((dir, ok))
}

pub fn show_trace(path: &Path) -> anyhow::Result<Completed> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
    let v: serde_json::Value = serde_json::from_str(&text).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
    if v["schema"] != molsearch::mcts::TRACE_SCHEMA {
        return config_err(format!("{} is not a search trace", path.display()));
    }
    let nodes = v["nodes"].as_array().cloned().unwrap_or_default();
    let iterations = v["iterations"].as_array().cloned().unwrap_or_default();
    let invalid = nodes.iter().filter(|n| n["valid"] == false).count();
    println!("provider {}  seed {}", v["header"]["provider"].as_str().unwrap_or("?"), v["header"]["seed"]);
    println!("{} iterations, {} nodes ({invalid} invalid)", iterations.len(), nodes.len());
    if let Some(why) = v["truncated"].as_str() {
        println!("truncated: {why}");
    }
    if v["exhausted"] == true {
        println!("search space exhausted");
    }
    let best = v["best"].as_u64().context("trace has no best node")? as usize;
    let mut path_ids = vec![best];
    while let Some(p) = nodes.get(*path_ids.last().unwrap()).and_then(|n| n["parent"].as_u64()) {
        path_ids.push(p as usize);
    }
    path_ids.reverse();
    println!("best path:");
    for id in path_ids {
        let n = nodes.get(id).context("dangling node id")?;
        let total = n["reward"]["total"].as_f64().unwrap_or(f64::NAN);
        let action = n["action"].as_str().unwrap_or("");
        let state = n["state"].as_str().unwrap_or("");
        if action.is_empty() {
            println!("  #{id:<4} {total:>9.4}  {state}");
        } else {
            println!("  #{id:<4} {total:>9.4}  {state}  <- {action}");
        }
    }
    let per_iter: Vec<String> = iterations
        .iter()
        .map(|it| format!("{:.3}", it["best_total"].as_f64().unwrap_or(f64::NAN)))
        .collect();
    if !per_iter.is_empty() {
        println!("best total per iteration: {}", per_iter.join(" "));
    }
    Ok(true)
}
