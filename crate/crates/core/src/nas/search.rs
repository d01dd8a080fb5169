//! Seeded (μ+λ) evolutionary search under a latency budget.

use std::cmp::Ordering;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::arch::{build_graph, DetectorGenome};
use crate::cost::{cost_report_with_latency, CountOptions, DeviceProfile};
use crate::error::{Error, Result};
use crate::nas::{entropy_score_with, mutate, Candidate, CostSummary, ParetoArchive, ProxyConfig, SearchSpace};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchConfig {
    pub population: usize,
    pub generations: usize,
    #[serde(default = "one")]
    pub mutations_per_child: usize,
    /// `None` means unbounded.
    #[serde(default)]
    pub latency_budget_ms: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    pub device_profile: DeviceProfile,
    #[serde(default = "two")]
    pub tournament_size: usize,
    #[serde(default)]
    pub space: SearchSpace,
    #[serde(default)]
    pub proxy: ProxyConfig,
}

fn one() -> usize {
    1
}

fn two() -> usize {
    2
}

impl SearchConfig {
    pub fn new(population: usize, generations: usize, latency_budget_ms: Option<f64>, seed: u64, device_profile: DeviceProfile) -> Self {
        Self {
            population,
            generations,
            mutations_per_child: 1,
            latency_budget_ms,
            seed,
            device_profile,
            tournament_size: 2,
            space: SearchSpace::default(),
            proxy: ProxyConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, msg: &str| Err(Error::Schema { path: field.into(), msg: msg.into() });
        if self.population < 2 {
            return bad("population", "must be >= 2");
        }
        if self.mutations_per_child == 0 {
            return bad("mutations_per_child", "must be >= 1");
        }
        if self.tournament_size == 0 {
            return bad("tournament_size", "must be >= 1");
        }
        if let Some(b) = self.latency_budget_ms {
            if !(b > 0.0) {
                return bad("latency_budget_ms", "must be > 0");
            }
        }
        let s = &self.space;
        if s.width_step == 0 || s.min_width == 0 || s.min_width > s.max_width {
            return bad("space", "width bounds must satisfy 0 < min_width <= max_width and width_step > 0");
        }
        self.device_profile.validate()
    }

    fn within_budget(&self, latency_ms: f64) -> bool {
        self.latency_budget_ms.map_or(true, |b| latency_ms <= b)
    }
}

/// Scores and costs one genome.
pub fn evaluate(genome: &DetectorGenome, cfg: &SearchConfig) -> Result<Candidate> {
    let graph = build_graph(genome)?;
    let score = entropy_score_with(&graph, &cfg.proxy)?;
    let report = cost_report_with_latency(&graph, CountOptions::default(), &cfg.device_profile)?;
    Ok(Candidate {
        genome: genome.clone(),
        score,
        cost: CostSummary {
            flops: report.flops,
            params: report.params,
            latency_ms: report.latency_ms,
        },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluated {
    pub score: f64,
    pub latency_ms: f64,
    pub feasible: bool,
}

/// Everything evaluated in one generation, in child order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub generation: usize,
    pub evaluated: Vec<Evaluated>,
    pub best_score: f64,
    pub best_latency_ms: f64,
    pub archive_size: usize,
}

#[derive(Debug, Clone)]
pub struct SearchOutcome {
    pub archive: ParetoArchive,
    pub best: Candidate,
    pub history: Vec<GenerationRecord>,
}

impl SearchOutcome {
    /// Per-generation CSV for plotting.
    pub fn history_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.history {
            w.serialize(HistoryRow {
                generation: r.generation,
                evaluated: r.evaluated.len(),
                feasible: r.evaluated.iter().filter(|e| e.feasible).count(),
                best_score: r.best_score,
                best_latency_ms: r.best_latency_ms,
                archive_size: r.archive_size,
            })
            .map_err(|e| Error::Invariant(e.to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Invariant(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Invariant(e.to_string()))
    }
}

#[derive(Serialize)]
struct HistoryRow {
    generation: usize,
    evaluated: usize,
    feasible: usize,
    best_score: f64,
    best_latency_ms: f64,
    archive_size: usize,
}

/// Higher score first, then lower latency; stable otherwise.
fn rank(a: &Candidate, b: &Candidate) -> Ordering {
    b.score
        .value
        .total_cmp(&a.score.value)
        .then(a.cost.latency_ms.total_cmp(&b.cost.latency_ms))
}

pub fn search(seed_genome: &DetectorGenome, cfg: &SearchConfig) -> Result<SearchOutcome> {
    search_with_progress(seed_genome, cfg, |_| {})
}

/// Like [`search`], calling `progress` after every generation.
pub fn search_with_progress(
    seed_genome: &DetectorGenome,
    cfg: &SearchConfig,
    mut progress: impl FnMut(&GenerationRecord),
) -> Result<SearchOutcome> {
    cfg.validate()?;
    let mut seed = seed_genome.clone();
    seed.repair_channels();
    seed.validate()?;
    let seed_eval = evaluate(&seed, cfg)?;
    if !cfg.within_budget(seed_eval.cost.latency_ms) {
        return Err(Error::Infeasible(format!(
            "seed genome latency {:.4} ms exceeds budget {:.4} ms",
            seed_eval.cost.latency_ms,
            cfg.latency_budget_ms.unwrap_or(f64::INFINITY)
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut archive = ParetoArchive::new();
    let mut best = seed_eval.clone();
    let mut history = Vec::with_capacity(cfg.generations + 1);

    // Generation 0: the seed plus mutants of it.
    let children: Vec<DetectorGenome> = (1..cfg.population).map(|_| mutate_n(&seed, cfg, &mut rng)).collect();
    let mut population = vec![seed_eval];
    let mut evaluated = vec![Evaluated {
        score: population[0].score.value,
        latency_ms: population[0].cost.latency_ms,
        feasible: true,
    }];
    let kept = evaluate_all(&children, cfg, &mut evaluated);
    population.extend(kept);
    if population.is_empty() {
        return Err(Error::Infeasible("no feasible candidate in generation 0".into()));
    }
    absorb(&population, &mut archive, &mut best);
    let record = make_record(0, evaluated, &best, &archive);
    progress(&record);
    history.push(record);

    for generation in 1..=cfg.generations {
        let children: Vec<DetectorGenome> = (0..cfg.population)
            .map(|_| {
                let parent = tournament(&population, cfg.tournament_size, &mut rng);
                mutate_n(&population[parent].genome, cfg, &mut rng)
            })
            .collect();
        let mut evaluated = Vec::with_capacity(children.len());
        let kept = evaluate_all(&children, cfg, &mut evaluated);
        absorb(&kept, &mut archive, &mut best);
        population.extend(kept);
        population.sort_by(rank);
        population.truncate(cfg.population);
        let record = make_record(generation, evaluated, &best, &archive);
        progress(&record);
        history.push(record);
    }

    archive.check_invariants(cfg.latency_budget_ms)?;
    Ok(SearchOutcome { archive, best, history })
}

fn mutate_n(genome: &DetectorGenome, cfg: &SearchConfig, rng: &mut ChaCha8Rng) -> DetectorGenome {
    let mut g = genome.clone();
    for _ in 0..cfg.mutations_per_child {
        g = mutate(&g, &cfg.space, rng);
    }
    g
}

fn tournament(population: &[Candidate], size: usize, rng: &mut ChaCha8Rng) -> usize {
    let mut winner = rng.gen_range(0..population.len());
    for _ in 1..size {
        let c = rng.gen_range(0..population.len());
        if rank(&population[c], &population[winner]) == Ordering::Less {
            winner = c;
        }
    }
    winner
}

/// Evaluates children on the worker pool and returns the feasible ones in
/// child order. Children that fail to lower count as infeasible.
fn evaluate_all(children: &[DetectorGenome], cfg: &SearchConfig, log: &mut Vec<Evaluated>) -> Vec<Candidate> {
    let results: Vec<Option<Candidate>> =
        crate::parallel::install(|| children.par_iter().map(|g| evaluate(g, cfg).ok()).collect());
    let mut kept = Vec::new();
    for r in results {
        match r {
            Some(c) => {
                let feasible = cfg.within_budget(c.cost.latency_ms);
                log.push(Evaluated {
                    score: c.score.value,
                    latency_ms: c.cost.latency_ms,
                    feasible,
                });
                if feasible {
                    kept.push(c);
                }
            }
            None => log.push(Evaluated {
                score: f64::NAN,
                latency_ms: f64::NAN,
                feasible: false,
            }),
        }
    }
    kept
}

fn absorb(candidates: &[Candidate], archive: &mut ParetoArchive, best: &mut Candidate) {
    for c in candidates {
        if rank(c, best) == Ordering::Less {
            *best = c.clone();
        }
        archive.insert(c.clone());
    }
}

fn make_record(generation: usize, evaluated: Vec<Evaluated>, best: &Candidate, archive: &ParetoArchive) -> GenerationRecord {
    GenerationRecord {
        generation,
        evaluated,
        best_score: best.score.value,
        best_latency_ms: best.cost.latency_ms,
        archive_size: archive.len(),
    }
}
