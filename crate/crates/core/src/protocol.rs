//! The guessing game, certified branch by branch.
//!
//! One round: a code state is prepared, the king measures one family on his
//! slot, Alice measures the branch-discrimination PVM and records the error
//! index k, the family label is revealed, and Alice guesses the outcome
//! whose index set contains k. `run_exhaustive` walks every branch of that
//! tree, tracking the worst-case success probability and any probability
//! that leaks outside the predicted index sets. `run_montecarlo` plays
//! random rounds instead and tallies the empirical rate.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use serde::Serialize;

use crate::code_builder::{discrimination_pvm, QuantumCode};
use crate::error::{Error, Result};
use crate::model::{born, embed_on_slot, ErrorModel, IndexSets, MeasurementFamily};
use crate::numerics::{ComplexMatrix, StateVector, Tolerance};
use crate::sampling;

/// Everything a game needs: the code, the king's measurement families, the
/// error operation hitting his slot, and the index sets Alice guesses from.
#[derive(Debug, Clone)]
pub struct GameConfig {
    pub code: QuantumCode,
    pub families: Vec<MeasurementFamily>,
    pub err: ErrorModel,
    pub index_sets: IndexSets,
    /// 1-based tensor factor the king holds.
    pub king_slot: usize,
    pub rng_seed: u64,
    /// Random code states added to the basis states in the exhaustive run.
    pub n_random_states: usize,
}

/// Stream offset separating Monte Carlo draws from exhaustive-run draws.
const MC_STREAM_BASE: u64 = 1 << 32;

impl GameConfig {
    pub fn new(
        code: QuantumCode,
        families: Vec<MeasurementFamily>,
        err: ErrorModel,
        index_sets: IndexSets,
        king_slot: usize,
    ) -> Result<Self> {
        let factors = code.ambient_dims().len();
        if king_slot == 0 || king_slot > factors {
            return Err(Error::SlotOutOfRange { slot: king_slot, factors });
        }
        let d = err.dim();
        if code.ambient_dims()[king_slot - 1] != d {
            return Err(Error::Dimension(format!(
                "the king's slot has dimension {} but the error operation acts on {d}",
                code.ambient_dims()[king_slot - 1]
            )));
        }
        if families.is_empty() {
            return Err(Error::Invalid("the king needs at least one family".into()));
        }
        if families.iter().any(|f| f.dim() != d) {
            return Err(Error::Dimension(format!("every family must act on dimension {d}")));
        }
        let mut labels = BTreeSet::new();
        for f in &families {
            if !labels.insert(f.label()) {
                return Err(Error::Invalid(format!("duplicate family label {}", f.label())));
            }
        }
        if index_sets.max_index() > err.len() {
            return Err(Error::Invalid(format!(
                "index sets mention error index {} but the model has only {} operators",
                index_sets.max_index(),
                err.len()
            )));
        }
        Ok(GameConfig {
            code,
            families,
            err,
            index_sets,
            king_slot,
            rng_seed: 0,
            n_random_states: 20,
        })
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.rng_seed = seed;
        self
    }

    pub fn with_random_states(mut self, n: usize) -> Self {
        self.n_random_states = n;
        self
    }
}

/// Alice's guess: the outcome of family `family` whose index set contains k.
/// None means she must abstain, either because k never occurs for this
/// family or because the index sets do not cover it.
pub fn guess(k: usize, family: usize, sets: &IndexSets) -> Option<usize> {
    sets.outcome_containing(family, k)
}

/// One leaf of the exhaustive game tree.
#[derive(Debug, Clone, Serialize)]
pub struct Transcript {
    /// Position in the initial-state list (basis states first, then the
    /// random superpositions).
    pub initial_index: usize,
    pub initial: StateVector,
    #[serde(rename = "J")]
    pub family: usize,
    pub king_outcome: usize,
    pub king_prob: f64,
    /// None when the residual projector fired.
    pub alice_outcome: Option<usize>,
    pub alice_prob: f64,
    pub guess: Option<usize>,
    pub success: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum FailureKind {
    /// Alice saw an error index outside the set predicted for the branch.
    Leak,
    /// Probability escaped every discrimination outcome.
    Residual,
}

#[derive(Debug, Clone, Serialize)]
pub struct ProtocolFailure {
    pub kind: FailureKind,
    pub initial_index: usize,
    pub family: usize,
    pub king_outcome: usize,
    pub alice_outcome: Option<usize>,
    pub probability: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ProtocolReport {
    /// Worst conditional success probability over all explored branches.
    pub min_success: f64,
    /// Best branch, for symmetry; equals min_success on valid codes.
    pub max_success: f64,
    pub branches: Vec<Transcript>,
    pub failures: Vec<ProtocolFailure>,
}

impl ProtocolReport {
    pub fn passed(&self, tol: &Tolerance) -> bool {
        self.failures.is_empty() && self.min_success >= 1.0 - tol.eps_eq
    }

    /// Worst branch success among branches played with one family.
    pub fn min_success_for_family(&self, family: usize) -> Option<f64> {
        let mut per_branch: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        for t in self.branches.iter().filter(|t| t.family == family) {
            let entry = per_branch.entry((t.initial_index, t.king_outcome)).or_insert(0.0);
            if t.success {
                *entry += t.alice_prob;
            }
        }
        per_branch.values().copied().reduce(f64::min)
    }
}

fn embedded_errors(cfg: &GameConfig) -> Result<Vec<ComplexMatrix>> {
    cfg.err
        .kraus()
        .iter()
        .map(|l| embed_on_slot(l, cfg.king_slot, cfg.code.ambient_dims()))
        .collect()
}

fn embedded_families(cfg: &GameConfig) -> Result<Vec<Vec<ComplexMatrix>>> {
    cfg.families
        .iter()
        .map(|f| {
            f.ops()
                .iter()
                .map(|m| embed_on_slot(m, cfg.king_slot, cfg.code.ambient_dims()))
                .collect()
        })
        .collect()
}

fn initial_states(cfg: &GameConfig) -> Result<Vec<StateVector>> {
    let mut initials: Vec<StateVector> = cfg.code.basis().to_vec();
    for r in 0..cfg.n_random_states {
        let mut rng = sampling::rng_for(cfg.rng_seed, r as u64);
        initials.push(sampling::random_superposition(&mut rng, cfg.code.basis())?);
    }
    Ok(initials)
}

/// Plays every branch: every initial state, family, king outcome, and Alice
/// outcome with nonvanishing probability.
pub fn run_exhaustive(cfg: &GameConfig, tol: &Tolerance) -> Result<ProtocolReport> {
    let errs = embedded_errors(cfg)?;
    let pvm = discrimination_pvm(&cfg.code, &errs, tol)?;
    let families = embedded_families(cfg)?;
    let initials = initial_states(cfg)?;
    let floor = tol.eps_ortho * tol.eps_ortho;

    let mut branches = Vec::new();
    let mut failures = Vec::new();
    let mut min_success: Option<f64> = None;
    let mut max_success: Option<f64> = None;

    for (idx, psi) in initials.iter().enumerate() {
        for (fi, family) in cfg.families.iter().enumerate() {
            for i in 1..=family.len() {
                let (p, post) = born(&families[fi][i - 1], psi, tol)?;
                let Some(post) = post else { continue };
                let predicted = cfg.index_sets.set(family.label(), i);
                let mut branch_success = 0.0;
                for (k, proj) in &pvm.outcomes {
                    let q = proj.apply(&post).norm_sqr();
                    if q <= floor {
                        continue;
                    }
                    let g = guess(*k, family.label(), &cfg.index_sets);
                    let success = g == Some(i);
                    if success {
                        branch_success += q;
                    }
                    if predicted.map_or(true, |set| !set.contains(k)) {
                        failures.push(ProtocolFailure {
                            kind: FailureKind::Leak,
                            initial_index: idx,
                            family: family.label(),
                            king_outcome: i,
                            alice_outcome: Some(*k),
                            probability: q,
                        });
                    }
                    branches.push(Transcript {
                        initial_index: idx,
                        initial: psi.clone(),
                        family: family.label(),
                        king_outcome: i,
                        king_prob: p,
                        alice_outcome: Some(*k),
                        alice_prob: q,
                        guess: g,
                        success,
                    });
                }
                let q_rest = pvm.residual.apply(&post).norm_sqr();
                if q_rest > floor {
                    failures.push(ProtocolFailure {
                        kind: FailureKind::Residual,
                        initial_index: idx,
                        family: family.label(),
                        king_outcome: i,
                        alice_outcome: None,
                        probability: q_rest,
                    });
                    branches.push(Transcript {
                        initial_index: idx,
                        initial: psi.clone(),
                        family: family.label(),
                        king_outcome: i,
                        king_prob: p,
                        alice_outcome: None,
                        alice_prob: q_rest,
                        guess: None,
                        success: false,
                    });
                }
                min_success = Some(match min_success {
                    None => branch_success,
                    Some(m) => m.min(branch_success),
                });
                max_success = Some(match max_success {
                    None => branch_success,
                    Some(m) => m.max(branch_success),
                });
            }
        }
    }
    Ok(ProtocolReport {
        min_success: min_success.unwrap_or(1.0),
        max_success: max_success.unwrap_or(1.0),
        branches,
        failures,
    })
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct FamilyTally {
    pub trials: usize,
    pub successes: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct McReport {
    pub trials: usize,
    pub successes: usize,
    /// None when no trials were played.
    pub rate: Option<f64>,
    pub per_family: BTreeMap<usize, FamilyTally>,
}

impl McReport {
    pub fn family_rate(&self, family: usize) -> Option<f64> {
        self.per_family.get(&family).and_then(|t| {
            (t.trials > 0).then(|| t.successes as f64 / t.trials as f64)
        })
    }
}

/// Draws an index with the given nonnegative weights; the draw is scaled by
/// the weight sum so that numerical dust cannot push it out of range.
fn sample_index<R: Rng>(rng: &mut R, weights: &[f64]) -> usize {
    let total: f64 = weights.iter().sum();
    let u = rng.gen::<f64>() * total;
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    weights.len() - 1
}

/// Plays `trials` random rounds: random code state, uniformly random family,
/// outcomes sampled from the Born weights. A residual outcome counts as a
/// failed round.
pub fn run_montecarlo(cfg: &GameConfig, trials: usize, tol: &Tolerance) -> Result<McReport> {
    let errs = embedded_errors(cfg)?;
    let pvm = discrimination_pvm(&cfg.code, &errs, tol)?;
    let families = embedded_families(cfg)?;

    let mut successes = 0usize;
    let mut per_family: BTreeMap<usize, FamilyTally> = BTreeMap::new();
    for trial in 0..trials {
        let mut rng = sampling::rng_for(cfg.rng_seed, MC_STREAM_BASE + trial as u64);
        let psi = sampling::random_superposition(&mut rng, cfg.code.basis())?;
        let fi = rng.gen_range(0..cfg.families.len());
        let family = &cfg.families[fi];

        let mut posts = Vec::with_capacity(family.len());
        let mut weights = Vec::with_capacity(family.len());
        for i in 1..=family.len() {
            let (p, post) = born(&families[fi][i - 1], &psi, tol)?;
            weights.push(p);
            posts.push(post);
        }
        let i = sample_index(&mut rng, &weights);
        let Some(post) = posts[i].clone() else {
            // A zero-probability outcome was drawn; numerically impossible
            // unless the whole family is degenerate on the code state.
            continue;
        };
        let king_outcome = i + 1;

        // Alice's outcomes, residual last.
        let mut alice_weights: Vec<f64> =
            pvm.outcomes.iter().map(|(_, p)| p.apply(&post).norm_sqr()).collect();
        alice_weights.push(pvm.residual.apply(&post).norm_sqr());
        let pick = sample_index(&mut rng, &alice_weights);
        let success = if pick < pvm.outcomes.len() {
            let k = pvm.outcomes[pick].0;
            guess(k, family.label(), &cfg.index_sets) == Some(king_outcome)
        } else {
            false
        };

        let tally = per_family.entry(family.label()).or_default();
        tally.trials += 1;
        if success {
            tally.successes += 1;
            successes += 1;
        }
    }
    Ok(McReport {
        trials,
        successes,
        rate: (trials > 0).then(|| successes as f64 / trials as f64),
        per_family,
    })
}
