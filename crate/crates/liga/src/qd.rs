//! Quality-diversity layer: behavior descriptors, a simplex grid archive,
//! niche criteria, shaped selection fitness, and online criterion adaptation.
//!
//! Descriptors live on the probability simplex (action frequencies for
//! matrix games, mean allocation fractions for Blotto), so the archive grid
//! only counts cells the simplex can actually reach.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::league::PayoffTable;
use crate::population::{Agent, AgentId, League, LeagueView};

/// A behavior descriptor: nonnegative entries summing to 1 (within 1e-6).
pub type BdVector = Vec<f64>;

pub fn validate_bd(bd: &[f64]) -> Result<()> {
    if bd.is_empty() || bd.iter().any(|v| !v.is_finite() || *v < -1e-9) {
        return Err(Error::invalid("descriptor entries must be finite and >= 0"));
    }
    let sum: f64 = bd.iter().sum();
    if (sum - 1.0).abs() > 1e-6 {
        return Err(Error::invalid(format!("descriptor sums to {sum}, expected 1")));
    }
    Ok(())
}

/// Mean of the per-match descriptors in the window; `None` with no matches.
pub fn compute_bd(history: &[BdVector]) -> Option<BdVector> {
    let first = history.first()?;
    let mut mean = vec![0.0; first.len()];
    for bd in history {
        for (m, v) in mean.iter_mut().zip(bd) {
            *m += v;
        }
    }
    let n = history.len() as f64;
    for m in &mut mean {
        *m /= n;
    }
    Some(mean)
}

/// Per-dimension bin `floor(bd_i * R)`, clamped to `R - 1`.
pub fn discretize(bd: &[f64], resolution: u16) -> Vec<u16> {
    let r = resolution as f64;
    bd.iter()
        .map(|&v| ((v.max(0.0) * r) as u16).min(resolution - 1))
        .collect()
}

/// Per-agent auxiliary objective shaping selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum NicheCriterion {
    /// Occupy a specific archive cell.
    BdTarget { cell: Vec<u16> },
    /// Hold an empirical payoff of at least `margin` against one agent.
    BeatAgent { target: AgentId, margin: f64 },
    /// Beat (empirical payoff > 0) at least `required_fraction` of a set.
    BeatSet {
        targets: Vec<AgentId>,
        required_fraction: f64,
    },
    /// Weighted mix of sub-criteria; weights are normalized on construction.
    Mixture { parts: Vec<(NicheCriterion, f64)> },
}

impl NicheCriterion {
    pub fn beat_set(targets: Vec<AgentId>, required_fraction: f64) -> Result<NicheCriterion> {
        if targets.is_empty() {
            return Err(Error::invalid("beat-set criterion needs at least one target"));
        }
        if !(required_fraction > 0.0 && required_fraction <= 1.0) {
            return Err(Error::invalid("required_fraction must be in (0, 1]"));
        }
        Ok(NicheCriterion::BeatSet {
            targets,
            required_fraction,
        })
    }

    pub fn mixture(parts: Vec<(NicheCriterion, f64)>) -> Result<NicheCriterion> {
        if parts.is_empty() {
            return Err(Error::invalid("mixture criterion needs at least one part"));
        }
        if parts.iter().any(|(_, w)| !w.is_finite() || *w < 0.0) {
            return Err(Error::invalid("mixture weights must be finite and >= 0"));
        }
        let total: f64 = parts.iter().map(|(_, w)| w).sum();
        if total <= 0.0 {
            return Err(Error::invalid("mixture weights must not all be zero"));
        }
        Ok(NicheCriterion::Mixture {
            parts: parts
                .into_iter()
                .map(|(c, w)| (c, w / total))
                .collect(),
        })
    }
}

/// Degree to which an agent currently satisfies a criterion, in `[0, 1]`.
pub fn criterion_satisfaction(
    agent: &Agent,
    criterion: &NicheCriterion,
    table: &PayoffTable,
    view: &LeagueView,
    resolution: u16,
) -> Result<f64> {
    match criterion {
        NicheCriterion::BdTarget { cell } => Ok(match &agent.bd {
            Some(bd) if discretize(bd, resolution) == *cell => 1.0,
            _ => 0.0,
        }),
        NicheCriterion::BeatAgent { target, margin } => {
            if !view.contains(*target) {
                return Err(Error::NotFound(target.0));
            }
            Ok(match table.empirical_payoff(agent.id, *target) {
                Some(p) if p >= *margin => 1.0,
                _ => 0.0,
            })
        }
        NicheCriterion::BeatSet {
            targets,
            required_fraction,
        } => {
            let mut beaten = 0usize;
            for target in targets {
                if !view.contains(*target) {
                    return Err(Error::NotFound(target.0));
                }
                if matches!(table.empirical_payoff(agent.id, *target), Some(p) if p > 0.0) {
                    beaten += 1;
                }
            }
            let fraction = beaten as f64 / targets.len() as f64;
            Ok((fraction / required_fraction).min(1.0))
        }
        NicheCriterion::Mixture { parts } => {
            let mut total = 0.0;
            for (part, weight) in parts {
                total += weight * criterion_satisfaction(agent, part, table, view, resolution)?;
            }
            Ok(total.clamp(0.0, 1.0))
        }
    }
}

/// Selection fitness: rating plus a satisfaction bonus in rating points.
/// Satisfaction failures (e.g. an evicted target) count as 0.
pub fn shaped_fitness(
    agent: &Agent,
    criterion: &NicheCriterion,
    table: &PayoffTable,
    view: &LeagueView,
    bonus: f64,
    resolution: u16,
) -> f64 {
    if bonus == 0.0 {
        return agent.rating;
    }
    let sat = criterion_satisfaction(agent, criterion, table, view, resolution).unwrap_or(0.0);
    agent.rating + bonus * sat
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Occupant {
    pub agent: AgentId,
    pub quality: f64,
}

/// Grid archive over the descriptor simplex: at most one occupant per cell,
/// replaced only by strictly higher quality.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "ArchiveSer", into = "ArchiveSer")]
pub struct Archive {
    resolution: u16,
    dims: usize,
    cells: BTreeMap<Vec<u16>, Occupant>,
    /// Cells a valid descriptor can map into (depends only on geometry).
    reachable: u64,
    /// ways[d][s]: cell coordinate vectors of length d with entries in
    /// [0, R-1] summing to s. Drives reachable-cell counting and sampling.
    #[serde(skip)]
    ways: Vec<Vec<u64>>,
}

#[derive(Serialize, Deserialize)]
struct ArchiveSer {
    resolution: u16,
    dims: usize,
    cells: Vec<(Vec<u16>, Occupant)>,
}

impl From<ArchiveSer> for Archive {
    fn from(ser: ArchiveSer) -> Self {
        let mut archive = Archive::new(ser.dims, ser.resolution);
        archive.cells = ser.cells.into_iter().collect();
        archive
    }
}

impl From<Archive> for ArchiveSer {
    fn from(archive: Archive) -> Self {
        ArchiveSer {
            resolution: archive.resolution,
            dims: archive.dims,
            cells: archive.cells.into_iter().collect(),
        }
    }
}

impl Archive {
    pub fn new(dims: usize, resolution: u16) -> Archive {
        assert!(dims >= 1 && resolution >= 1);
        let r = resolution as usize;
        let mut ways = vec![vec![0u64; 1]; 1];
        ways[0][0] = 1;
        for d in 1..=dims {
            let max_sum = d * (r - 1);
            let mut row = vec![0u64; max_sum + 1];
            for s in 0..=max_sum {
                for v in 0..r.min(s + 1) {
                    let rest = s - v;
                    if rest < ways[d - 1].len() {
                        row[s] += ways[d - 1][rest];
                    }
                }
            }
            ways.push(row);
        }
        // A descriptor x (sum 1) lands in cell c iff c_i <= x_i * R < c_i + 1
        // (top bins clamp), which forces R - dims + 1 <= sum(c) <= R.
        let lo = (r as i64 - dims as i64 + 1).max(0) as usize;
        let reachable: u64 = (lo..=r)
            .map(|s| ways[dims].get(s).copied().unwrap_or(0))
            .sum();
        Archive {
            resolution,
            dims,
            cells: BTreeMap::new(),
            reachable,
            ways,
        }
    }

    pub fn resolution(&self) -> u16 {
        self.resolution
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn reachable_cells(&self) -> u64 {
        self.reachable
    }

    pub fn occupied_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn cells(&self) -> impl Iterator<Item = (&Vec<u16>, &Occupant)> {
        self.cells.iter()
    }

    pub fn occupant(&self, cell: &[u16]) -> Option<&Occupant> {
        self.cells.get(cell)
    }

    /// Insert if the cell is empty or the quality strictly improves on the
    /// incumbent. Returns whether the archive changed.
    pub fn insert(&mut self, agent: AgentId, bd: &[f64], quality: f64) -> bool {
        let cell = discretize(bd, self.resolution);
        match self.cells.get(&cell) {
            Some(occupant) if quality <= occupant.quality => false,
            _ => {
                self.cells.insert(cell, Occupant { agent, quality });
                true
            }
        }
    }

    /// Fraction of reachable cells occupied.
    pub fn coverage(&self) -> f64 {
        if self.reachable == 0 {
            return 0.0;
        }
        self.cells.len() as f64 / self.reachable as f64
    }

    /// Sum of occupant qualities.
    pub fn qd_score(&self) -> f64 {
        self.cells.values().map(|o| o.quality).sum()
    }

    /// Uniform sample over reachable cells.
    pub fn sample_cell(&self, rng: &mut impl Rng) -> Vec<u16> {
        let r = self.resolution as usize;
        let lo = (r as i64 - self.dims as i64 + 1).max(0) as usize;
        // choose the coordinate sum proportional to its cell count
        let mut pick = rng.gen_range(0..self.reachable);
        let mut sum = lo;
        for s in lo..=r {
            let w = self.ways[self.dims].get(s).copied().unwrap_or(0);
            if pick < w {
                sum = s;
                break;
            }
            pick -= w;
        }
        // then draw coordinates sequentially, weighted by suffix counts
        let mut cell = Vec::with_capacity(self.dims);
        let mut remaining = sum;
        for d in (1..=self.dims).rev() {
            if d == 1 {
                cell.push(remaining as u16);
                break;
            }
            let weights: Vec<u64> = (0..r.min(remaining + 1))
                .map(|v| {
                    self.ways[d - 1]
                        .get(remaining - v)
                        .copied()
                        .unwrap_or(0)
                })
                .collect();
            let total: u64 = weights.iter().sum();
            let mut pick = rng.gen_range(0..total);
            let mut chosen = 0;
            for (v, &w) in weights.iter().enumerate() {
                if pick < w {
                    chosen = v;
                    break;
                }
                pick -= w;
            }
            cell.push(chosen as u16);
            remaining -= chosen;
        }
        cell
    }

    /// Sample a reachable cell, preferring unoccupied ones.
    pub fn sample_unoccupied_cell(&self, rng: &mut impl Rng) -> Vec<u16> {
        let mut cell = self.sample_cell(rng);
        for _ in 0..100 {
            if !self.cells.contains_key(&cell) {
                break;
            }
            cell = self.sample_cell(rng);
        }
        cell
    }
}

/// Quality-diversity settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QdConfig {
    /// Gates fitness shaping and criterion adaptation. The archive and
    /// satisfaction bookkeeping always run; with this off (or with
    /// `fitness_bonus` 0 and inert thresholds) the trajectory is identical
    /// to a run without the QD layer.
    pub enabled: bool,
    /// Grid bins per descriptor dimension.
    pub resolution: u16,
    /// Selection bonus in rating points for full satisfaction.
    pub fitness_bonus: f64,
    /// Escalate when all of the last `adapt_window` checks are >= s_hi.
    pub s_hi: f64,
    /// Relax when all of the last `adapt_window` checks are <= s_lo.
    pub s_lo: f64,
    pub adapt_window: usize,
    /// Matches averaged into the behavior descriptor.
    pub bd_window: usize,
}

impl Default for QdConfig {
    fn default() -> Self {
        QdConfig {
            enabled: true,
            resolution: 10,
            fitness_bonus: 50.0,
            s_hi: 0.8,
            s_lo: 0.1,
            adapt_window: 5,
            bd_window: 64,
        }
    }
}

/// Hysteresis decision from the recent satisfaction history: escalate when
/// consistently satisfied, relax when consistently failing, else keep.
pub fn adapt_criterion(
    agent: &Agent,
    view: &LeagueView,
    archive: &Archive,
    rng: &mut impl Rng,
    cfg: &QdConfig,
) -> Option<NicheCriterion> {
    if agent.sat_history.len() < cfg.adapt_window {
        return None;
    }
    let recent = &agent.sat_history[agent.sat_history.len() - cfg.adapt_window..];
    if recent.iter().all(|&s| s >= cfg.s_hi) {
        Some(escalate(&agent.criterion, agent, view, archive, rng))
    } else if recent.iter().all(|&s| s <= cfg.s_lo) {
        Some(relax(&agent.criterion, agent, view, archive, rng))
    } else {
        None
    }
}

/// Other view members sorted by rating distance to the agent.
fn by_rating_distance<'a>(agent: &Agent, view: &'a LeagueView) -> Vec<&'a Agent> {
    let mut others: Vec<&Agent> = view.members().filter(|a| a.id != agent.id).collect();
    others.sort_by(|a, b| {
        let da = (a.rating - agent.rating).abs();
        let db = (b.rating - agent.rating).abs();
        da.partial_cmp(&db)
            .unwrap()
            .then_with(|| a.id.cmp(&b.id))
    });
    others
}

fn escalate(
    criterion: &NicheCriterion,
    agent: &Agent,
    view: &LeagueView,
    archive: &Archive,
    rng: &mut impl Rng,
) -> NicheCriterion {
    match criterion {
        NicheCriterion::BeatAgent { .. } => {
            let targets: Vec<AgentId> = by_rating_distance(agent, view)
                .into_iter()
                .take(3)
                .map(|a| a.id)
                .collect();
            if targets.is_empty() {
                return criterion.clone();
            }
            NicheCriterion::BeatSet {
                targets,
                required_fraction: 0.5,
            }
        }
        NicheCriterion::BeatSet {
            targets,
            required_fraction,
        } => NicheCriterion::BeatSet {
            targets: targets.clone(),
            required_fraction: (required_fraction + 0.25).min(1.0),
        },
        NicheCriterion::BdTarget { .. } => NicheCriterion::BdTarget {
            cell: archive.sample_unoccupied_cell(rng),
        },
        NicheCriterion::Mixture { parts } => NicheCriterion::Mixture {
            parts: parts
                .iter()
                .map(|(c, w)| (escalate(c, agent, view, archive, rng), *w))
                .collect(),
        },
    }
}

fn relax(
    criterion: &NicheCriterion,
    agent: &Agent,
    view: &LeagueView,
    archive: &Archive,
    rng: &mut impl Rng,
) -> NicheCriterion {
    match criterion {
        NicheCriterion::BeatAgent { margin, .. } => {
            // aim at the weakest available member
            let mut others = by_rating_distance(agent, view);
            others.sort_by(|a, b| {
                a.rating
                    .partial_cmp(&b.rating)
                    .unwrap()
                    .then_with(|| a.id.cmp(&b.id))
            });
            match others.first() {
                Some(weakest) => NicheCriterion::BeatAgent {
                    target: weakest.id,
                    margin: *margin,
                },
                None => criterion.clone(),
            }
        }
        NicheCriterion::BeatSet {
            targets,
            required_fraction,
        } => {
            let relaxed = required_fraction - 0.25;
            if relaxed >= 0.25 - 1e-12 {
                NicheCriterion::BeatSet {
                    targets: targets.clone(),
                    required_fraction: relaxed,
                }
            } else {
                match by_rating_distance(agent, view).first() {
                    Some(nearest) => NicheCriterion::BeatAgent {
                        target: nearest.id,
                        margin: 0.0,
                    },
                    None => criterion.clone(),
                }
            }
        }
        NicheCriterion::BdTarget { cell } => match &agent.bd {
            // the agent's own cell is instantly satisfiable
            Some(bd) => NicheCriterion::BdTarget {
                cell: discretize(bd, archive.resolution()),
            },
            None => NicheCriterion::BdTarget { cell: cell.clone() },
        },
        NicheCriterion::Mixture { parts } => NicheCriterion::Mixture {
            parts: parts
                .iter()
                .map(|(c, w)| (relax(c, agent, view, archive, rng), *w))
                .collect(),
        },
    }
}

/// Round-robin initial criteria: cell targets, beat-one, and mixtures, so
/// every criterion family is live from the start.
pub fn assign_initial_criteria(league: &mut League, archive: &Archive, rng: &mut impl Rng) {
    let ids: Vec<AgentId> = league.active_agents().iter().map(|a| a.id).collect();
    if ids.len() < 2 {
        return;
    }
    for i in 0..ids.len() {
        let other = loop {
            let cand = ids[rng.gen_range(0..ids.len())];
            if cand != ids[i] {
                break cand;
            }
        };
        let criterion = match i % 3 {
            0 => NicheCriterion::BdTarget {
                cell: archive.sample_cell(rng),
            },
            1 => NicheCriterion::BeatAgent {
                target: other,
                margin: 0.0,
            },
            _ => NicheCriterion::mixture(vec![
                (
                    NicheCriterion::BeatAgent {
                        target: other,
                        margin: 0.0,
                    },
                    0.5,
                ),
                (
                    NicheCriterion::BdTarget {
                        cell: archive.sample_cell(rng),
                    },
                    0.5,
                ),
            ])
            .expect("static mixture is valid"),
        };
        if let Some(agent) = league.get_active_mut(ids[i]) {
            agent.criterion = criterion;
        }
    }
}
