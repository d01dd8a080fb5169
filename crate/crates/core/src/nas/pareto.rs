//! Non-dominated archive over (score ↑, latency ↓).

use serde::{Deserialize, Serialize};

use crate::arch::{genome_from_json, genome_to_json, DetectorGenome};
use crate::error::{Error, Result};
use crate::nas::ProxyScore;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostSummary {
    pub flops: u64,
    pub params: u64,
    pub latency_ms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub genome: DetectorGenome,
    pub score: ProxyScore,
    pub cost: CostSummary,
}

impl Candidate {
    pub fn dominates(&self, other: &Candidate) -> bool {
        let (s, l) = (self.score.value, self.cost.latency_ms);
        let (so, lo) = (other.score.value, other.cost.latency_ms);
        s >= so && l <= lo && (s > so || l < lo)
    }

    fn same_objectives(&self, other: &Candidate) -> bool {
        self.score.value == other.score.value && self.cost.latency_ms == other.cost.latency_ms
    }
}

#[derive(Serialize, Deserialize)]
struct ArchiveLine {
    genome: serde_json::Value,
    score: ProxyScore,
    cost: CostSummary,
}

/// Entries are kept sorted by latency ascending (score descending on ties).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParetoArchive {
    entries: Vec<Candidate>,
}

impl ParetoArchive {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn entries(&self) -> &[Candidate] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Inserts `c` unless an entry dominates it or has identical objectives.
    /// Returns whether it was kept.
    pub fn insert(&mut self, c: Candidate) -> bool {
        if self.entries.iter().any(|e| e.dominates(&c) || e.same_objectives(&c)) {
            return false;
        }
        self.entries.retain(|e| !c.dominates(e));
        let pos = self.entries.partition_point(|e| {
            e.cost.latency_ms < c.cost.latency_ms
                || (e.cost.latency_ms == c.cost.latency_ms && e.score.value > c.score.value)
        });
        self.entries.insert(pos, c);
        true
    }

    pub fn check_invariants(&self, budget_ms: Option<f64>) -> Result<()> {
        for (i, a) in self.entries.iter().enumerate() {
            if let Some(b) = budget_ms {
                if a.cost.latency_ms > b {
                    return Err(Error::Invariant(format!("archive entry {i} exceeds budget")));
                }
            }
            for (j, b) in self.entries.iter().enumerate() {
                if i != j && a.dominates(b) {
                    return Err(Error::Invariant(format!("archive entry {i} dominates entry {j}")));
                }
            }
        }
        Ok(())
    }

    pub fn to_ndjson(&self) -> Result<String> {
        let mut out = String::new();
        for c in &self.entries {
            let line = ArchiveLine {
                genome: serde_json::from_str(&genome_to_json(&c.genome)?)?,
                score: c.score.clone(),
                cost: c.cost,
            };
            out.push_str(&serde_json::to_string(&line)?);
            out.push('\n');
        }
        Ok(out)
    }

    pub fn from_ndjson(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let parsed: ArchiveLine = serde_json::from_str(line).map_err(|e| Error::Schema {
                path: format!("line {}", i + 1),
                msg: e.to_string(),
            })?;
            entries.push(Candidate {
                genome: genome_from_json(&parsed.genome.to_string())?,
                score: parsed.score,
                cost: parsed.cost,
            });
        }
        Ok(Self { entries })
    }
}
