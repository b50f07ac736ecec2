use std::path::Path;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::molgraph::{parse_smiles, sanitize, Molecule};

use super::TaskError;

pub const MIN_RECORDS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Valid,
    Test,
}

#[derive(Debug, Clone)]
pub struct Record {
    pub smiles: String,
    pub mol: Molecule,
    pub label: f64,
}

/// Counts label reads per split. Test labels are only handed out after
/// [`SplitGuard::finalize`]; earlier attempts are refused and counted.
#[derive(Debug, Default)]
pub struct SplitGuard {
    reads: [AtomicUsize; 3],
    early_test_reads: AtomicUsize,
    finalized: AtomicBool,
}

impl SplitGuard {
    fn slot(split: Split) -> usize {
        match split {
            Split::Train => 0,
            Split::Valid => 1,
            Split::Test => 2,
        }
    }

    pub fn reads(&self, split: Split) -> usize {
        self.reads[Self::slot(split)].load(Ordering::SeqCst)
    }

    /// Test-label requests made before finalization.
    pub fn early_test_reads(&self) -> usize {
        self.early_test_reads.load(Ordering::SeqCst)
    }

    pub fn finalize(&self) {
        self.finalized.store(true, Ordering::SeqCst);
    }

    pub fn is_finalized(&self) -> bool {
        self.finalized.load(Ordering::SeqCst)
    }

    fn check(&self, split: Split) -> Result<(), TaskError> {
        if split == Split::Test && !self.is_finalized() {
            self.early_test_reads.fetch_add(1, Ordering::SeqCst);
            return Err(TaskError::TestLabelsSealed);
        }
        self.reads[Self::slot(split)].fetch_add(1, Ordering::SeqCst);
        Ok(())
    }
}

/// Labelled molecules with a seeded 80/10/10 assignment.
#[derive(Debug)]
pub struct Dataset {
    records: Vec<Record>,
    assignment: Vec<Split>,
    seed: u64,
    /// `(row, reason)` for rows rejected at load time; rows count from 1
    /// after the header.
    pub dropped: Vec<(usize, String)>,
    guard: SplitGuard,
}

#[derive(Deserialize)]
struct Row {
    smiles: String,
    label: f64,
}

impl Dataset {
    /// Builds from `(smiles, label)` pairs, dropping rows that do not parse
    /// or sanitize, then splits with `seed`.
    pub fn from_rows(rows: Vec<(String, f64)>, seed: u64) -> Result<Self, TaskError> {
        let mut records = Vec::new();
        let mut dropped = Vec::new();
        for (i, (smiles, label)) in rows.into_iter().enumerate() {
            match load_molecule(&smiles) {
                Ok(mol) if label.is_finite() => records.push(Record { smiles, mol, label }),
                Ok(_) => dropped.push((i + 1, "label is not finite".to_string())),
                Err(e) => dropped.push((i + 1, e)),
            }
        }
        for (row, why) in &dropped {
            log::warn!("dataset row {row} dropped: {why}");
        }
        if records.len() < MIN_RECORDS {
            return Err(TaskError::TooFewRecords(records.len()));
        }
        let assignment = split_assignment(records.len(), seed);
        Ok(Dataset {
            records,
            assignment,
            seed,
            dropped,
            guard: SplitGuard::default(),
        })
    }

    /// Reads a `smiles,label` CSV with a header row.
    pub fn load_csv(path: &Path, seed: u64) -> Result<Self, TaskError> {
        let io = |e: String| TaskError::Dataset(format!("{}: {e}", path.display()));
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| io(e.to_string()))?;
        let headers = reader.headers().map_err(|e| io(e.to_string()))?.clone();
        if headers.iter().collect::<Vec<_>>() != ["smiles", "label"] {
            return Err(io(format!("expected header 'smiles,label', found '{}'", headers.iter().collect::<Vec<_>>().join(","))));
        }
        let mut rows = Vec::new();
        for (i, rec) in reader.deserialize::<Row>().enumerate() {
            let row = rec.map_err(|e| io(format!("row {}: {e}", i + 1)))?;
            rows.push((row.smiles, row.label));
        }
        Self::from_rows(rows, seed)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn guard(&self) -> &SplitGuard {
        &self.guard
    }

    pub fn split_of(&self, i: usize) -> Split {
        self.assignment[i]
    }

    pub fn indices(&self, split: Split) -> Vec<usize> {
        (0..self.records.len()).filter(|&i| self.assignment[i] == split).collect()
    }

    pub fn split_sizes(&self) -> (usize, usize, usize) {
        let c = |s| self.assignment.iter().filter(|a| **a == s).count();
        (c(Split::Train), c(Split::Valid), c(Split::Test))
    }

    /// Molecules never carry labels, so any split may be read freely.
    pub fn molecule(&self, i: usize) -> &Molecule {
        &self.records[i].mol
    }

    pub fn smiles(&self, i: usize) -> &str {
        &self.records[i].smiles
    }

    /// Labels of `split`, in index order, through the guard.
    pub fn labels(&self, split: Split) -> Result<Vec<f64>, TaskError> {
        self.guard.check(split)?;
        Ok(self.indices(split).iter().map(|&i| self.records[i].label).collect())
    }
}

fn load_molecule(smiles: &str) -> Result<Molecule, String> {
    let mol = parse_smiles(smiles).map_err(|e| e.to_string())?;
    let report = sanitize(&mol);
    if !report.is_valid() {
        return Err(report.summary().unwrap_or_default());
    }
    Ok(mol)
}

/// Shuffles `0..n` with `seed` and assigns ⌊n/10⌋ to valid, ⌊n/10⌋ to test
/// and the rest to train.
pub fn split_assignment(n: usize, seed: u64) -> Vec<Split> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let tenth = n / 10;
    let mut out = vec![Split::Train; n];
    for (rank, &i) in order.iter().enumerate() {
        if rank < tenth {
            out[i] = Split::Valid;
        } else if rank < 2 * tenth {
            out[i] = Split::Test;
        }
    }
    out
}
