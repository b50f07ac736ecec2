//! One PASS/FAIL line per acceptance criterion. Run with `--nocapture` to
//! see the lines.

mod common;

use std::time::{Duration, Instant};

use common::{fuzz, molecules, parity, pipeline, replay, uct};
use molsearch::molgraph::parse_smiles;
use molsearch::ruledsl::PROBE_SMILES;
use molsearch::tasks::Property;
use molsearch::theory::{bound_sweep, exhaustive_convergence_check, generate_instance, BOUND_TOL};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const LOGP_TOL: f64 = 0.3;
const LOGP_DELTA: f64 = 3.60;
const LOGP_STEPS: [f64; 4] = [0.20, 1.86, 2.20, 2.51];
const QED_TOL: f64 = 0.1;
const QED_START: f64 = 0.453;
const QED_FINAL: f64 = 0.831;
const QED_BRANCH: f64 = 0.676;
const REPLAY_LIMIT: Duration = Duration::from_secs(10);
const PARITY_LIMIT: Duration = Duration::from_secs(5);
const SWEEP_LIMIT: Duration = Duration::from_secs(10);
const PIPELINE_LIMIT: Duration = Duration::from_secs(60);
const SWEEP_INSTANCES: usize = 50;
const CONVERGENCE_SEEDS: u64 = 20;
const MIN_GROUNDED: usize = 18;
const MAX_RETRIES: usize = 3;

type Verdict = Result<String, String>;

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn within(limit: Duration, t: Instant) -> Result<(), String> {
    let took = t.elapsed();
    ensure(took < limit, format!("took {took:.2?}, limit {limit:?}"))
}

fn logp_chain() -> Verdict {
    let t = Instant::now();
    let m = molecules();
    let r = replay("logp_chain", Property::Logp, &m[6], 4);
    ensure(r.consumed == r.script_len, format!("consumed {}/{} script records", r.consumed, r.script_len))?;
    ensure(r.outcome.trace.truncated.is_none(), "search truncated")?;
    let tree = &r.outcome.tree;
    // one child per expansion: node i is iteration i
    let values: Vec<f64> = (1..tree.len()).map(|i| tree.node(i).reward.task).collect();
    ensure(values.len() == LOGP_STEPS.len(), format!("{} nodes added", values.len()))?;
    for (i, (got, want)) in values.iter().zip(LOGP_STEPS).enumerate() {
        ensure((got - want).abs() <= LOGP_TOL, format!("iteration {}: logP {got:.3} vs {want}", i + 1))?;
    }
    let start = tree.root().reward.task;
    let best = r.outcome.best_reward().task;
    let delta = best - start;
    ensure((delta - LOGP_DELTA).abs() <= LOGP_TOL, format!("delta {delta:.3}"))?;
    within(REPLAY_LIMIT, t)?;
    Ok(format!("delta logP {delta:.3}, steps {values:.3?}"))
}

fn qed_backtrack() -> Verdict {
    let t = Instant::now();
    let m = molecules();
    let r = replay("qed_backtrack", Property::Qed, &m[12], 4);
    ensure(r.consumed == r.script_len, format!("consumed {}/{} script records", r.consumed, r.script_len))?;
    let tree = &r.outcome.tree;
    let start = tree.root().reward.task;
    ensure((start - QED_START).abs() <= QED_TOL, format!("start QED {start:.3}"))?;
    let branch = (0..tree.len())
        .find(|&i| (tree.node(i).reward.task - QED_BRANCH).abs() < 0.005)
        .ok_or("the 0.676 branch was never created")?;
    ensure(tree.node(branch).expanded, "the 0.676 branch was not expanded")?;
    let best = r.outcome.best;
    let fin = tree.node(best).reward.task;
    ensure((fin - QED_FINAL).abs() <= QED_TOL, format!("final QED {fin:.3}"))?;
    let ancestry = tree.ancestry(best);
    ensure(!ancestry.contains(&branch), format!("best ancestry {ancestry:?} passes the branch {branch}"))?;
    let backtracked = r.outcome.trace.iterations.iter().any(|it| it.selected.contains(&branch))
        && r.outcome.trace.iterations.last().is_some_and(|it| !it.selected.contains(&branch));
    ensure(backtracked, "no backtrack out of the branch")?;
    within(REPLAY_LIMIT, t)?;
    Ok(format!("QED {start:.3} -> {fin:.3}, ancestry {ancestry:?}, branch node {branch}"))
}

fn descriptor_parity() -> Verdict {
    let t = Instant::now();
    let records = parity::load("toolkit_descriptors.jsonl");
    ensure(records.len() == 50, format!("{} toolkit records", records.len()))?;
    let bad = parity::compare(&records, 1e-6);
    ensure(bad.is_empty(), format!("toolkit mismatches: {bad:?}"))?;
    let bad = parity::self_mismatches();
    ensure(bad.is_empty(), format!("self mismatches: {bad:?}"))?;
    within(PARITY_LIMIT, t)?;
    Ok("50 toolkit records and the self fixtures agree".into())
}

fn search_suite() -> Verdict {
    uct::agreement(7, 1000)?;
    let a = fuzz::run(0, 500)?;
    ensure(a.iterations.len() == 500, format!("fuzz run exhausted after {} iterations", a.iterations.len()))?;
    ensure(a.nodes.iter().any(|n| !n.valid), "the fuzz run produced no invalid node")?;
    let b = fuzz::run(0, 500)?;
    ensure(a.to_json() == b.to_json(), "traces differ for the same seed")?;
    let r1 = replay("qed_backtrack", Property::Qed, &molecules()[12], 4);
    let r2 = replay("qed_backtrack", Property::Qed, &molecules()[12], 4);
    ensure(r1.outcome.trace.to_json() == r2.outcome.trace.to_json(), "replay traces differ")?;
    let invalid = a.nodes.iter().filter(|n| !n.valid).count();
    Ok(format!("1000 trees agree; 500 fuzz iterations, {} nodes, {invalid} invalid", a.nodes.len()))
}

fn bound() -> Verdict {
    let t = Instant::now();
    let checks = bound_sweep::<f64>(0, SWEEP_INSTANCES);
    ensure(checks.len() == SWEEP_INSTANCES, "short sweep")?;
    for (i, c) in checks.iter().enumerate() {
        ensure((1.0 - 1e-9..=5.0 + 1e-9).contains(&c.local_k), format!("instance {i}: K = {}", c.local_k))?;
        ensure(c.kappa >= 0.0 && c.kappa < c.local_k, format!("instance {i}: kappa {} vs K {}", c.kappa, c.local_k))?;
        ensure(
            c.observed >= c.local_k - c.kappa - BOUND_TOL,
            format!("instance {i}: observed {} < {}", c.observed, c.local_k - c.kappa),
        )?;
    }
    within(SWEEP_LIMIT, t)?;
    let slack = checks.iter().map(|c| c.observed - c.bound).fold(f64::INFINITY, f64::min);
    Ok(format!("{SWEEP_INSTANCES} instances, smallest slack {slack:.3e}"))
}

fn convergence() -> Verdict {
    let mut hits = 0;
    let mut sizes = Vec::new();
    for seed in 0..CONVERGENCE_SEEDS {
        let inst = generate_instance::<f64>(&mut ChaCha8Rng::seed_from_u64(1000 + seed));
        let n = inst.space.len();
        ensure(n <= 1000, format!("space of {n} states"))?;
        sizes.push(n);
        if exhaustive_convergence_check(&inst.space, 10 * n, seed).map_err(|e| e.to_string())? {
            hits += 1;
        }
    }
    ensure(hits == CONVERGENCE_SEEDS, format!("{hits}/{CONVERGENCE_SEEDS} runs found the optimum"))?;
    Ok(format!("{hits}/{CONVERGENCE_SEEDS}, space sizes {sizes:?}"))
}

fn prediction() -> Verdict {
    let t = Instant::now();
    let r = pipeline::prediction(0);
    ensure(r.truncated.is_none(), format!("search truncated: {:?}", r.truncated))?;
    ensure(r.best_rmse <= r.baseline_rmse, format!("valid RMSE {:.4} > baseline {:.4}", r.best_rmse, r.baseline_rmse))?;
    ensure(r.test_reads == 1, format!("{} test reads", r.test_reads))?;
    ensure(r.early_test_reads == 0, format!("{} early test reads", r.early_test_reads))?;
    within(PIPELINE_LIMIT, t)?;
    Ok(format!(
        "valid RMSE {:.4} vs baseline {:.4}, test RMSE {:.4}, features {:?}",
        r.best_rmse, r.baseline_rmse, r.report.test_metric, r.report.features
    ))
}

fn cold_start() -> Verdict {
    let out = pipeline::heuristic_grounding(0, MAX_RETRIES);
    let n = out.rules.len();
    ensure(n >= MIN_GROUNDED, format!("{n} rules grounded; dropped {:?}", out.dropped))?;
    let probe = parse_smiles(PROBE_SMILES).unwrap();
    for r in out.rules.rules() {
        r.ast.eval(&probe).map_err(|e| format!("{}: {e}", r.id))?;
    }
    let faults = pipeline::fault_grounding(MAX_RETRIES);
    ensure(
        faults.rectifications == MAX_RETRIES,
        format!("{} rectifications, expected {MAX_RETRIES}", faults.rectifications),
    )?;
    Ok(format!("{n}/20 grounded, fault script used {} rectifications", faults.rectifications))
}

#[test]
fn acceptance() {
    let criteria: [(&str, fn() -> Verdict); 8] = [
        ("logp-chain-replay", logp_chain),
        ("qed-backtrack-replay", qed_backtrack),
        ("descriptor-parity", descriptor_parity),
        ("search-property-suite", search_suite),
        ("cliff-bound-sweep", bound),
        ("exhaustive-convergence", convergence),
        ("prediction-pipeline", prediction),
        ("cold-start-grounding", cold_start),
    ];
    let mut failed = Vec::new();
    for (name, f) in criteria {
        match f() {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(why) => {
                println!("FAIL {name}: {why}");
                failed.push(name);
            }
        }
    }
    assert!(failed.is_empty(), "failed: {failed:?}");
}
