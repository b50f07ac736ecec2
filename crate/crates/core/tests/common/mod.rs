#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::Arc;

use molsearch::mcts::{search, SearchConfig, SearchOutcome};
use molsearch::policy::{ActionProposal, Policy, ScriptedProvider};
use molsearch::ruledsl::RuleSet;
use molsearch::tasks::{OptState, OptimizationTask, PolicyProposer, Property, TaskSpec};

pub fn data(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data").join(rel)
}

pub fn molecules() -> Vec<String> {
    let p = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/molecules.txt");
    std::fs::read_to_string(p).unwrap().lines().map(|l| l.trim().to_string()).collect()
}

pub struct Replay {
    pub task: OptimizationTask,
    pub outcome: SearchOutcome<f64, OptState, ActionProposal>,
    pub consumed: usize,
    pub script_len: usize,
}

/// Runs an optimization search driven by a replay script.
pub fn replay(name: &str, property: Property, start: &str, iterations: usize) -> Replay {
    let rules = RuleSet::load(&data(&format!("replays/{name}.rules.json"))).unwrap();
    let knowledge: Vec<String> = rules.rules().iter().map(|r| r.sentence.clone()).collect();
    let provider = Arc::new(ScriptedProvider::from_file(&data(&format!("replays/{name}.script.json"))).unwrap());
    let policy = Policy::new(provider.clone());
    let task = OptimizationTask::new(TaskSpec::optimization(property, start), rules).unwrap();
    let proposer = PolicyProposer::new(&policy, knowledge);
    let config = SearchConfig {
        iterations,
        ..SearchConfig::optimization()
    };
    let outcome = search(&task, &proposer, config).unwrap();
    Replay {
        consumed: provider.consumed(),
        script_len: provider.consumed() + provider.remaining(),
        task,
        outcome,
    }
}

pub mod fuzz {
    use std::sync::Mutex;

    use molsearch::mcts::{Mcts, Proposer, RewardTerms, SearchConfig, SearchTask, SearchTrace, R_MIN};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Integer walk with hashed rewards; some moves fail to apply and some
    /// states fail to score.
    pub struct Walk;

    fn mix(x: u64) -> u64 {
        let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    impl SearchTask<f64> for Walk {
        type State = i64;
        type Action = i64;
        fn root(&self) -> i64 {
            1000
        }
        fn key(&self, s: &i64) -> String {
            s.to_string()
        }
        fn describe_state(&self, s: &i64) -> String {
            s.to_string()
        }
        fn describe_action(&self, a: &i64) -> String {
            format!("{a:+}")
        }
        fn apply(&self, s: &i64, a: &i64) -> Result<i64, String> {
            let n = s + a;
            if n % 7 == 0 {
                Err(format!("{n} is blocked"))
            } else {
                Ok(n)
            }
        }
        fn evaluate(&self, s: &i64) -> Result<RewardTerms<f64>, String> {
            if s % 11 == 0 {
                return Err(format!("{s} cannot be scored"));
            }
            let h = mix(*s as u64);
            Ok(RewardTerms {
                task: (h % 10_000) as f64 / 5_000.0 - 1.0,
                heuristic: ((h >> 20) % 5) as f64,
                penalty: -(((h >> 40) % 100) as f64) / 100.0,
            })
        }
    }

    pub struct RandomMoves(pub Mutex<ChaCha8Rng>);

    impl RandomMoves {
        pub fn new(seed: u64) -> Self {
            RandomMoves(Mutex::new(ChaCha8Rng::seed_from_u64(seed)))
        }
    }

    impl Proposer<f64, Walk> for RandomMoves {
        fn id(&self) -> String {
            "random-moves".into()
        }
        fn propose(&self, _: &Walk, _: &i64, k: usize) -> Result<Vec<i64>, String> {
            let mut rng = self.0.lock().unwrap();
            let n = if rng.gen_bool(0.15) { 0 } else { rng.gen_range(1..=k + 1) };
            Ok((0..n).map(|_| rng.gen_range(-40..=40)).collect())
        }
    }

    /// Steps a search one iteration at a time and checks the bookkeeping
    /// after each one. Stops early only if the tree is exhausted.
    pub fn run(seed: u64, iterations: usize) -> Result<SearchTrace<f64>, String> {
        let config = SearchConfig {
            iterations,
            seed,
            ..SearchConfig::optimization()
        };
        let proposer = RandomMoves::new(seed);
        let mut m = Mcts::new(&Walk, &proposer, config).map_err(|e| e.to_string())?;
        let mut last_best = f64::NEG_INFINITY;
        while m.iterations_done() < iterations {
            if !m.step() {
                break;
            }
            let t = m.tree();
            t.check_invariants().map_err(|e| format!("iteration {}: {e}", m.iterations_done()))?;
            for n in t.nodes() {
                if !n.valid() && n.reward.total != R_MIN {
                    return Err(format!("invalid node {} carries {}", n.id, n.reward.total));
                }
            }
            let best = t.node(t.best()).reward.total;
            if best < last_best {
                return Err(format!("best fell from {last_best} to {best}"));
            }
            last_best = best;
        }
        let trace = m.finish().trace;
        if trace.iterations.len() < iterations && !trace.exhausted {
            return Err(format!("search stopped after {} iterations", trace.iterations.len()));
        }
        for it in &trace.iterations {
            if let Some(bad) = it.selected.iter().find(|&&id| !trace.nodes[id].valid) {
                return Err(format!("iteration {} selected invalid node {bad}", it.iteration));
            }
        }
        Ok(trace)
    }
}

pub mod uct {
    use molsearch::mcts::{RewardBreakdown, SearchTree};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub type Tree = SearchTree<f64, (), ()>;

    /// Random tree of up to `max_nodes` nodes with extra visits sprinkled in.
    pub fn random_tree(rng: &mut ChaCha8Rng, max_nodes: usize) -> Tree {
        let reward = |rng: &mut ChaCha8Rng| RewardBreakdown::combine(
            molsearch::mcts::RewardTerms {
                task: rng.gen_range(-2.0..2.0),
                heuristic: rng.gen_range(0.0..4.0),
                penalty: rng.gen_range(-1.0..0.0),
            },
            0.5,
            1.0,
        );
        let r0 = reward(rng);
        let mut t = Tree::with_root((), String::new(), r0);
        let size = rng.gen_range(1..=max_nodes);
        for _ in 1..size {
            let parent = loop {
                let p = rng.gen_range(0..t.len());
                if t.node(p).valid() {
                    break p;
                }
            };
            if rng.gen_bool(0.1) {
                t.insert(parent, None, None, String::new(), String::new(), String::new(), RewardBreakdown::invalid(-100.0, 0.5, 1.0));
            } else {
                let r = reward(rng);
                let id = t.insert(parent, Some(()), None, String::new(), String::new(), String::new(), r);
                if rng.gen_bool(0.9) {
                    t.backpropagate(id, r.total);
                }
            }
        }
        for _ in 0..rng.gen_range(0..size) {
            let id = rng.gen_range(0..t.len());
            if t.node(id).valid() && t.node(id).n > 0 {
                t.backpropagate(id, rng.gen_range(-1.0..3.0));
            }
        }
        t
    }

    /// Selection by direct evaluation of Q/N + c·sqrt(ln N_p / N) over
    /// every child.
    pub fn brute_force(t: &Tree, id: usize, c: f64) -> Option<usize> {
        let p = t.node(id);
        let kids: Vec<usize> = p.children.iter().copied().filter(|&ch| t.node(ch).selectable()).collect();
        if let Some(&u) = kids.iter().find(|&&ch| t.node(ch).n == 0) {
            return Some(u);
        }
        let score = |ch: usize| {
            let n = t.node(ch);
            n.q / n.n as f64 + c * ((p.n as f64).ln() / n.n as f64).sqrt()
        };
        let top = kids.iter().map(|&ch| score(ch)).fold(f64::NEG_INFINITY, f64::max);
        kids.into_iter().find(|&ch| score(ch) == top)
    }

    /// Compares engine selection with brute force at every node of
    /// `trees` random trees.
    pub fn agreement(seed: u64, trees: usize) -> Result<(), String> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for i in 0..trees {
            let t = random_tree(&mut rng, 100);
            let c = rng.gen_range(0.0..3.0);
            for id in 0..t.len() {
                let want = brute_force(&t, id, c);
                let got = t.select_child(id, c);
                if want != got {
                    return Err(format!("tree {i} node {id}: engine {got:?}, brute force {want:?}"));
                }
            }
        }
        Ok(())
    }
}

pub mod pipeline {
    use std::sync::Arc;

    use molsearch::mcts::{search, SearchConfig};
    use molsearch::policy::{HeuristicProvider, Policy, ScriptedProvider};
    use molsearch::ruledsl::{ground_rules, GroundingOutcome, RuleSet};
    use molsearch::tasks::{Dataset, FinalReport, PolicyProposer, PredictionTask, Split, TaskSpec, DEFAULT_FEATURE_CAP};

    use super::data;

    pub fn corpus() -> Vec<String> {
        std::fs::read_to_string(data("corpus/solubility_rules.txt"))
            .unwrap()
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(String::from)
            .collect()
    }

    pub struct PredictionRun {
        pub baseline_rmse: f64,
        pub best_rmse: f64,
        pub report: FinalReport,
        pub test_reads: usize,
        pub early_test_reads: usize,
        pub truncated: Option<String>,
    }

    /// Scripted feature search from the single-feature baseline, then one
    /// test evaluation of the best set.
    pub fn prediction(seed: u64) -> PredictionRun {
        let data_set = Dataset::load_csv(&data("datasets/solubility200.csv"), seed).unwrap();
        let spec = TaskSpec::prediction_rmse("solubility200.csv");
        let task = PredictionTask::new(spec, data_set, &RuleSet::default(), vec!["molecular_weight".into()], DEFAULT_FEATURE_CAP).unwrap();
        let provider = Arc::new(ScriptedProvider::from_file(&data("replays/prediction.script.json")).unwrap());
        let script_len = provider.remaining();
        let policy = Policy::new(provider);
        let proposer = PolicyProposer::new(&policy, corpus());
        let config = SearchConfig::<f64> {
            iterations: script_len,
            seed,
            ..SearchConfig::prediction()
        };
        let baseline_rmse = task.validation_metric::<f64>(task.root_features()).unwrap();
        let out = search(&task, &proposer, config).unwrap();
        let best = out.best_state();
        let best_rmse = task.validation_metric::<f64>(&best).unwrap();
        let early_test_reads = task.dataset().guard().early_test_reads();
        let report = task.finalize(&best).unwrap();
        PredictionRun {
            baseline_rmse,
            best_rmse,
            report,
            test_reads: task.dataset().guard().reads(Split::Test),
            early_test_reads,
            truncated: out.trace.truncated,
        }
    }

    pub fn heuristic_grounding(seed: u64, max_retries: usize) -> GroundingOutcome {
        let policy = Policy::new(Arc::new(HeuristicProvider::new(seed)));
        ground_rules(&corpus(), &policy, max_retries).unwrap()
    }

    pub fn fault_grounding(max_retries: usize) -> GroundingOutcome {
        let policy = Policy::new(Arc::new(ScriptedProvider::from_file(&data("replays/faults.script.json")).unwrap()));
        let sentences = corpus()[..2].to_vec();
        ground_rules(&sentences, &policy, max_retries).unwrap()
    }
}

pub mod parity {
    use std::collections::BTreeMap;
    use std::path::PathBuf;

    use molsearch::descriptors::registry;
    use molsearch::molgraph::parse_smiles;
    use serde::{Deserialize, Serialize};

    pub const EXACT: [&str; 7] = [
        "hbd_count",
        "hba_count",
        "aromatic_ring_count",
        "ring_count",
        "heavy_atom_count",
        "rotatable_bonds",
        "qed_hba",
    ];
    pub const MW_TOL: f64 = 1e-6;
    pub const LOGP_TOL: f64 = 1e-6;
    pub const TPSA_TOL: f64 = 1e-6;
    /// QED on the wider solubility set absorbs alerts outside the reduced list.
    pub const QED_TOL_REDUCED_ALERTS: f64 = 0.25;
    pub const SELF_TOL: f64 = 1e-6;

    #[derive(Debug, Serialize, Deserialize)]
    pub struct Record {
        pub smiles: String,
        pub canonical: String,
        pub descriptors: BTreeMap<String, f64>,
        pub toolkit_version: String,
    }

    pub fn fixture(name: &str) -> PathBuf {
        PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
    }

    pub fn load(name: &str) -> Vec<Record> {
        std::fs::read_to_string(fixture(name))
            .unwrap()
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| serde_json::from_str(l).unwrap())
            .collect()
    }

    pub fn tolerance(name: &str, qed_tol: f64) -> f64 {
        match name {
            n if EXACT.contains(&n) => 0.0,
            "molecular_weight" => MW_TOL,
            "logp" => LOGP_TOL,
            "tpsa" => TPSA_TOL,
            "qed" => qed_tol,
            _ => f64::INFINITY,
        }
    }

    pub fn compare(records: &[Record], qed_tol: f64) -> Vec<String> {
        let reg = registry();
        let mut bad = Vec::new();
        for r in records {
            let mol = parse_smiles(&r.smiles).unwrap();
            for (name, &want) in &r.descriptors {
                let tol = tolerance(name, qed_tol);
                if tol.is_infinite() {
                    continue;
                }
                let got = reg.compute(name, &mol).unwrap();
                if (got - want).abs() > tol {
                    bad.push(format!("{} {name}: {got} vs {want}", r.smiles));
                }
            }
        }
        bad
    }

    /// Frozen self fixtures against fresh computation.
    pub fn self_mismatches() -> Vec<String> {
        let reg = registry();
        let mut bad = Vec::new();
        for r in load("self_descriptors.jsonl") {
            let mol = parse_smiles(&r.smiles).unwrap();
            for (name, &want) in &r.descriptors {
                let got = reg.compute(name, &mol).unwrap();
                if (got - want).abs() > SELF_TOL {
                    bad.push(format!("{} {name}: {got} vs {want}", r.smiles));
                }
            }
        }
        bad
    }
}
