//! Event-driven simulation of single- and two-type branching processes with
//! heritable label loss.
//!
//! Each cell lives an i.i.d. lifetime and is replaced at death by an i.i.d.
//! number of offspring, each one generation deeper than its parent. In the
//! two-type model, type-1 cells may produce children of both types while
//! type-2 cells produce only type-2 children. A neutral label is tested once
//! per division: with probability `p_label_loss` all children of that
//! division are unlabeled, and an unlabeled parent never produces labeled
//! children.
//!
//! The simulation processes a min-death-time event queue, with ties broken by
//! ascending cell id so runs are fully deterministic. One random draw order
//! is used per division (offspring outcome, label test, child lifetimes), and
//! the label test is drawn whether or not it can matter, so the tree topology
//! for a fixed `RngStream` is identical across label-loss probabilities.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use serde::Serialize;

use crate::distributions::{LifetimeDistribution, OffspringDistribution, PairOffspringDistribution};
use crate::error::{Error, Result};
use crate::rng::RngStream;
use rand::Rng;

pub const DEFAULT_POPULATION_CAP: u64 = 10_000_000;

/// The branching law: lifetimes plus offspring pmfs per type.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum ProcessKind {
    SingleType {
        lifetime: LifetimeDistribution,
        offspring: OffspringDistribution,
    },
    TwoType {
        lifetime1: LifetimeDistribution,
        lifetime2: LifetimeDistribution,
        offspring1: PairOffspringDistribution,
        offspring2: OffspringDistribution,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InitialGroup {
    pub cell_type: u8,
    pub count: u64,
    pub labeled: bool,
}

/// Full parameterization of one simulated process.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProcessSpec {
    pub kind: ProcessKind,
    pub p_label_loss: f64,
    pub initial: Vec<InitialGroup>,
    pub population_cap: u64,
}

impl ProcessSpec {
    pub fn single_type(lifetime: LifetimeDistribution, offspring: OffspringDistribution) -> Self {
        Self {
            kind: ProcessKind::SingleType {
                lifetime,
                offspring,
            },
            p_label_loss: 0.0,
            initial: vec![InitialGroup {
                cell_type: 1,
                count: 1,
                labeled: true,
            }],
            population_cap: DEFAULT_POPULATION_CAP,
        }
    }

    pub fn two_type(
        lifetime1: LifetimeDistribution,
        lifetime2: LifetimeDistribution,
        offspring1: PairOffspringDistribution,
        offspring2: OffspringDistribution,
    ) -> Self {
        Self {
            kind: ProcessKind::TwoType {
                lifetime1,
                lifetime2,
                offspring1,
                offspring2,
            },
            p_label_loss: 0.0,
            initial: vec![InitialGroup {
                cell_type: 1,
                count: 1,
                labeled: true,
            }],
            population_cap: DEFAULT_POPULATION_CAP,
        }
    }

    pub fn with_label_loss(mut self, p: f64) -> Self {
        self.p_label_loss = p;
        self
    }

    pub fn with_initial(mut self, initial: Vec<InitialGroup>) -> Self {
        self.initial = initial;
        self
    }

    pub fn with_population_cap(mut self, cap: u64) -> Self {
        self.population_cap = cap;
        self
    }

    pub fn n_types(&self) -> usize {
        match self.kind {
            ProcessKind::SingleType { .. } => 1,
            ProcessKind::TwoType { .. } => 2,
        }
    }

    pub fn lifetime(&self, cell_type: u8) -> &LifetimeDistribution {
        match (&self.kind, cell_type) {
            (ProcessKind::SingleType { lifetime, .. }, _) => lifetime,
            (ProcessKind::TwoType { lifetime1, .. }, 1) => lifetime1,
            (ProcessKind::TwoType { lifetime2, .. }, _) => lifetime2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match &self.kind {
            ProcessKind::SingleType { lifetime, .. } => lifetime.validate()?,
            ProcessKind::TwoType {
                lifetime1,
                lifetime2,
                ..
            } => {
                lifetime1.validate()?;
                lifetime2.validate()?;
            }
        }
        if !(0.0..=1.0).contains(&self.p_label_loss) {
            return Err(Error::InvalidSpec(format!(
                "p_label_loss must lie in [0, 1], got {}",
                self.p_label_loss
            )));
        }
        if self.initial.is_empty() {
            return Err(Error::InvalidSpec("at least one initial cell required".into()));
        }
        let n_types = self.n_types() as u8;
        for group in &self.initial {
            if group.count == 0 {
                return Err(Error::InvalidSpec("initial counts must be positive".into()));
            }
            if group.cell_type == 0 || group.cell_type > n_types {
                return Err(Error::InvalidSpec(format!(
                    "initial cell type {} out of range for {}-type process",
                    group.cell_type, n_types
                )));
            }
        }
        let total: u64 = self.initial.iter().map(|g| g.count).sum();
        if self.population_cap == 0 || total > self.population_cap {
            return Err(Error::InvalidSpec(
                "population_cap must be positive and at least the initial count".into(),
            ));
        }
        Ok(())
    }

    /// Digest of the branching law (lifetimes and offspring pmfs only).
    ///
    /// Label probability, initial condition and the population cap do not
    /// enter: derived growth constants depend only on the law, so sweeps over
    /// `p_label_loss` share one digest and stay comparable against the same
    /// calibration and oracle outputs.
    pub fn digest(&self) -> u64 {
        let json = serde_json::to_string(&self.kind).expect("law serialization cannot fail");
        fnv1a(json.as_bytes())
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// Per-type observed state at one instant. `g` is the sum of generations of
/// living cells; `gb`/`gd` are the cumulative generation sums of all cells
/// ever born / ever dead or divided, so `g = gb - gd` holds exactly.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TypeCounts {
    pub z: u64,
    pub g: u64,
    pub zpos: u64,
    pub gb: u64,
    pub gd: u64,
    /// Multiset of living-cell generations; populated only when
    /// [`SimOptions::retain_generations`] is set.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub generations: Option<Vec<u32>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Snapshot {
    pub t: f64,
    /// Indexed by cell type - 1.
    pub types: Vec<TypeCounts>,
}

impl Snapshot {
    pub fn total_living(&self) -> u64 {
        self.types.iter().map(|c| c.z).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub spec_digest: u64,
    pub master_seed: u64,
    pub stream_index: u64,
    pub snapshots: Vec<Snapshot>,
    pub extinct: bool,
    pub capped: bool,
}

impl Trajectory {
    pub fn final_snapshot(&self) -> Option<&Snapshot> {
        self.snapshots.last()
    }

    /// True when the process still has living cells at the final recorded
    /// observation time.
    pub fn surviving(&self) -> bool {
        !self.capped && !self.extinct
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SimOptions {
    /// Keep the multiset of living-cell generations in every snapshot.
    pub retain_generations: bool,
    /// Record the division ancestry needed for re-delabelling studies.
    pub record_tree: bool,
}

pub struct SimOutput {
    pub trajectory: Trajectory,
    pub tree: Option<DivisionTree>,
}

const NO_DIVISION: u32 = u32::MAX;

#[derive(Debug, Clone, Copy)]
struct Death {
    time: f64,
    id: u64,
    cell_type: u8,
    generation: u32,
    labeled: bool,
    root_labeled: bool,
    last_division: u32,
}

impl PartialEq for Death {
    fn eq(&self, other: &Self) -> bool {
        self.id == other.id && self.time.to_bits() == other.time.to_bits()
    }
}
impl Eq for Death {}
impl PartialOrd for Death {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Death {
    // Equal death times (possible with deterministic lifetimes) resolve by
    // ascending cell id.
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.time
            .total_cmp(&other.time)
            .then(self.id.cmp(&other.id))
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct Tally {
    z: u64,
    g: u64,
    zpos: u64,
    gb: u64,
    gd: u64,
}

/// Division ancestry of one realized tree, for re-delabelling the same
/// topology with fresh label randomness.
#[derive(Debug, Clone)]
pub struct DivisionTree {
    /// `parents[i]` is the division preceding division `i` on its lineage,
    /// or `u32::MAX` for divisions of initial cells.
    parents: Vec<u32>,
    leaves: Vec<Leaf>,
}

#[derive(Debug, Clone, Copy)]
struct Leaf {
    last_division: u32,
    cell_type: u8,
    generation: u32,
    root_labeled: bool,
}

impl DivisionTree {
    pub fn n_divisions(&self) -> usize {
        self.parents.len()
    }

    pub fn n_living(&self) -> usize {
        self.leaves.len()
    }

    /// Draw one independent delabelling of the fixed tree: every division
    /// keeps the label with probability `1 - p`, and a living cell is labeled
    /// iff its whole division chain kept it. Returns labeled counts per type.
    pub fn redelabel(&self, p: f64, rng: &mut RngStream, n_types: usize) -> Vec<u64> {
        let mut kept = vec![false; self.parents.len()];
        for i in 0..self.parents.len() {
            let own = rng.random::<f64>() >= p;
            let inherited = match self.parents[i] {
                NO_DIVISION => true,
                parent => kept[parent as usize],
            };
            kept[i] = own && inherited;
        }
        let mut out = vec![0u64; n_types];
        for leaf in &self.leaves {
            let labeled = leaf.root_labeled
                && match leaf.last_division {
                    NO_DIVISION => true,
                    d => kept[d as usize],
                };
            if labeled {
                out[(leaf.cell_type - 1) as usize] += 1;
            }
        }
        out
    }

    /// Exact conditional expectation of the labeled count given the tree:
    /// sum over living cells of (1-p)^generation.
    pub fn expected_labeled(&self, p: f64, cell_type: u8) -> f64 {
        self.leaves
            .iter()
            .filter(|l| l.cell_type == cell_type && l.root_labeled)
            .map(|l| (1.0 - p).powi(l.generation as i32))
            .sum()
    }

    pub fn living_generations(&self, cell_type: u8) -> Vec<u32> {
        let mut gens: Vec<u32> = self
            .leaves
            .iter()
            .filter(|l| l.cell_type == cell_type)
            .map(|l| l.generation)
            .collect();
        gens.sort_unstable();
        gens
    }
}

pub fn simulate(
    spec: &ProcessSpec,
    rng: &mut RngStream,
    observation_times: &[f64],
) -> Result<Trajectory> {
    simulate_with_options(spec, rng, observation_times, SimOptions::default())
        .map(|out| out.trajectory)
}

pub fn simulate_with_options(
    spec: &ProcessSpec,
    rng: &mut RngStream,
    observation_times: &[f64],
    options: SimOptions,
) -> Result<SimOutput> {
    spec.validate()?;
    if observation_times.is_empty()
        || observation_times.iter().any(|t| !t.is_finite() || *t < 0.0)
        || observation_times.windows(2).any(|w| w[0] >= w[1])
    {
        return Err(Error::InvalidObservationTimes);
    }

    let n_types = spec.n_types();
    let p = spec.p_label_loss;
    let mut tallies = vec![Tally::default(); n_types];
    let mut heap: BinaryHeap<Reverse<Death>> = BinaryHeap::new();
    let mut next_id: u64 = 0;
    let mut living: u64 = 0;

    for group in &spec.initial {
        for _ in 0..group.count {
            let lifetime = spec.lifetime(group.cell_type).sample(rng);
            heap.push(Reverse(Death {
                time: lifetime,
                id: next_id,
                cell_type: group.cell_type,
                generation: 0,
                labeled: group.labeled,
                root_labeled: group.labeled,
                last_division: NO_DIVISION,
            }));
            next_id += 1;
            living += 1;
            let tally = &mut tallies[(group.cell_type - 1) as usize];
            tally.z += 1;
            if group.labeled {
                tally.zpos += 1;
            }
        }
    }

    let mut division_parents: Vec<u32> = Vec::new();
    let mut snapshots = Vec::with_capacity(observation_times.len());
    let mut capped = false;

    'times: for &t_obs in observation_times {
        loop {
            let due = matches!(heap.peek(), Some(Reverse(d)) if d.time <= t_obs);
            if !due {
                break;
            }
            let Reverse(parent) = heap.pop().expect("peeked");

            // Offspring counts per child type.
            let (n1, n2) = match &spec.kind {
                ProcessKind::SingleType { offspring, .. } => (offspring.sample(rng), 0),
                ProcessKind::TwoType {
                    offspring1,
                    offspring2,
                    ..
                } => {
                    if parent.cell_type == 1 {
                        offspring1.sample(rng)
                    } else {
                        (0, offspring2.sample(rng))
                    }
                }
            };
            // One label test per division, shared by all its children. Drawn
            // unconditionally to keep the draw order independent of p.
            let keep: f64 = rng.random();
            let child_labeled = parent.labeled && keep >= p;

            let tally = &mut tallies[(parent.cell_type - 1) as usize];
            tally.z -= 1;
            tally.g -= parent.generation as u64;
            tally.gd += parent.generation as u64;
            if parent.labeled {
                tally.zpos -= 1;
            }
            living -= 1;

            let n_children = n1 + n2;
            let division = if options.record_tree && n_children > 0 {
                let idx = division_parents.len() as u32;
                division_parents.push(parent.last_division);
                idx
            } else {
                parent.last_division
            };

            for (child_type, count) in [(1u8, n1), (2u8, n2)] {
                for _ in 0..count {
                    let lifetime = spec.lifetime(child_type).sample(rng);
                    let generation = parent.generation + 1;
                    heap.push(Reverse(Death {
                        time: parent.time + lifetime,
                        id: next_id,
                        cell_type: child_type,
                        generation,
                        labeled: child_labeled,
                        root_labeled: parent.root_labeled,
                        last_division: if options.record_tree {
                            division
                        } else {
                            NO_DIVISION
                        },
                    }));
                    next_id += 1;
                    living += 1;
                    let tally = &mut tallies[(child_type - 1) as usize];
                    tally.z += 1;
                    tally.g += generation as u64;
                    tally.gb += generation as u64;
                    if child_labeled {
                        tally.zpos += 1;
                    }
                }
            }

            if living > spec.population_cap {
                capped = true;
                break 'times;
            }
        }

        snapshots.push(make_snapshot(
            t_obs,
            &tallies,
            &heap,
            n_types,
            options.retain_generations,
        ));
    }

    let extinct = !capped
        && snapshots
            .last()
            .map(|s| s.total_living() == 0)
            .unwrap_or(false);

    let tree = options.record_tree.then(|| DivisionTree {
        parents: division_parents,
        leaves: heap
            .iter()
            .map(|Reverse(d)| Leaf {
                last_division: d.last_division,
                cell_type: d.cell_type,
                generation: d.generation,
                root_labeled: d.root_labeled,
            })
            .collect(),
    });

    Ok(SimOutput {
        trajectory: Trajectory {
            spec_digest: spec.digest(),
            master_seed: rng.master_seed(),
            stream_index: rng.stream_index(),
            snapshots,
            extinct,
            capped,
        },
        tree,
    })
}

fn make_snapshot(
    t: f64,
    tallies: &[Tally],
    heap: &BinaryHeap<Reverse<Death>>,
    n_types: usize,
    retain_generations: bool,
) -> Snapshot {
    let generations: Option<Vec<Vec<u32>>> = retain_generations.then(|| {
        let mut per_type = vec![Vec::new(); n_types];
        for Reverse(d) in heap.iter() {
            per_type[(d.cell_type - 1) as usize].push(d.generation);
        }
        for gens in &mut per_type {
            gens.sort_unstable();
        }
        per_type
    });
    Snapshot {
        t,
        types: tallies
            .iter()
            .enumerate()
            .map(|(i, tally)| TypeCounts {
                z: tally.z,
                g: tally.g,
                zpos: tally.zpos,
                gb: tally.gb,
                gd: tally.gd,
                generations: generations.as_ref().map(|g| g[i].clone()),
            })
            .collect(),
    }
}

/// Exact conditional expectation of the labeled fraction given the tree:
/// (1/Z) * sum over living cells of (1-p)^generation. Requires the snapshot
/// to have been recorded with retained generations.
pub fn expected_label_fraction(snapshot: &Snapshot, p: f64, cell_type: u8) -> Result<f64> {
    let counts = snapshot
        .types
        .get((cell_type - 1) as usize)
        .ok_or_else(|| Error::InvalidSpec(format!("no such cell type {cell_type}")))?;
    let generations = counts.generations.as_ref().ok_or_else(|| {
        Error::InvalidSpec("snapshot recorded without retained generations".into())
    })?;
    if generations.is_empty() {
        return Err(Error::EmptyPopulation(format!(
            "no living type-{cell_type} cells at t = {}",
            snapshot.t
        )));
    }
    let sum: f64 = generations
        .iter()
        .map(|&g| (1.0 - p).powi(g as i32))
        .sum();
    Ok(sum / generations.len() as f64)
}
