//! The league store: active agents, the hall of fame, and lineage records.
//!
//! The store follows a single-writer discipline: readers work on snapshots
//! (deep copies), mutations are serialized by whoever owns the `&mut League`.
//! Hall-of-fame entries are immutable once frozen; the hall is bounded by a
//! cap with reservoir-style eviction beyond it.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::games::PolicyParams;
use crate::qd::{BdVector, NicheCriterion};

/// Unique agent identifier. Hall-of-fame snapshots get fresh ids; an active
/// agent keeps its id across exploit overwrites.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct AgentId(pub u64);

impl std::fmt::Display for AgentId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Evolvable per-agent hyperparameters. `entropy_coeff` is the evolved
/// reward-shaping weight applied to policy entropy in the inner loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub learning_rate: f64,
    pub entropy_coeff: f64,
}

/// Declared `[min, max]` bounds for each hyperparameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperBounds {
    pub learning_rate: (f64, f64),
    pub entropy_coeff: (f64, f64),
}

impl Default for HyperBounds {
    fn default() -> Self {
        HyperBounds {
            learning_rate: (1e-4, 0.5),
            entropy_coeff: (1e-3, 0.3),
        }
    }
}

impl HyperBounds {
    pub fn validate(&self) -> Result<()> {
        for (name, (lo, hi)) in [
            ("learning_rate", self.learning_rate),
            ("entropy_coeff", self.entropy_coeff),
        ] {
            if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
                return Err(Error::invalid(format!(
                    "{name} bounds [{lo}, {hi}] must satisfy 0 < min <= max"
                )));
            }
        }
        Ok(())
    }

    /// Sample each hyperparameter log-uniformly within its bounds.
    pub fn sample(&self, rng: &mut impl Rng) -> Hyperparams {
        Hyperparams {
            learning_rate: log_uniform(self.learning_rate, rng),
            entropy_coeff: log_uniform(self.entropy_coeff, rng),
        }
    }

    pub fn clamp(&self, hypers: &mut Hyperparams) {
        hypers.learning_rate = hypers
            .learning_rate
            .clamp(self.learning_rate.0, self.learning_rate.1);
        hypers.entropy_coeff = hypers
            .entropy_coeff
            .clamp(self.entropy_coeff.0, self.entropy_coeff.1);
    }

    pub fn contains(&self, hypers: &Hyperparams) -> bool {
        let (ll, lh) = self.learning_rate;
        let (el, eh) = self.entropy_coeff;
        hypers.learning_rate >= ll
            && hypers.learning_rate <= lh
            && hypers.entropy_coeff >= el
            && hypers.entropy_coeff <= eh
    }
}

fn log_uniform((lo, hi): (f64, f64), rng: &mut impl Rng) -> f64 {
    if lo == hi {
        return lo;
    }
    (rng.gen_range(lo.ln()..hi.ln())).exp().clamp(lo, hi)
}

/// One league member: policy, evolvable hyperparameters, rating, and the
/// quality-diversity bookkeeping that travels with it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Agent {
    pub id: AgentId,
    pub logits: PolicyParams,
    pub hypers: Hyperparams,
    pub rating: f64,
    /// Windowed behavior descriptor; absent until the first match.
    pub bd: Option<BdVector>,
    pub criterion: NicheCriterion,
    pub born_at: u64,
    pub matches_played: u64,
    pub last_exploit_at: u64,
    /// `matches_played` at the time of the last exploit (readiness gating).
    pub matches_at_last_exploit: u64,
    pub active: bool,
    /// Per-match descriptors over the recent window.
    pub bd_history: Vec<BdVector>,
    /// Recent niche-criterion satisfaction values.
    pub sat_history: Vec<f64>,
}

impl Agent {
    /// Push a per-match descriptor, keeping at most `window` entries.
    pub fn push_bd(&mut self, bd: BdVector, window: usize) {
        self.bd_history.push(bd);
        if self.bd_history.len() > window {
            let excess = self.bd_history.len() - window;
            self.bd_history.drain(..excess);
        }
    }

    pub fn push_satisfaction(&mut self, sat: f64, window: usize) {
        self.sat_history.push(sat);
        if self.sat_history.len() > window {
            let excess = self.sat_history.len() - window;
            self.sat_history.drain(..excess);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LineageEvent {
    Spawn,
    Freeze,
    Exploit,
    AdaptCriterion,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineageRecord {
    pub child: AgentId,
    pub parent: Option<AgentId>,
    pub event: LineageEvent,
    pub at: u64,
}

/// Where a new hall-of-fame snapshot lands once the cap is reached.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HallPlacement {
    Append,
    Replace(usize),
    Drop,
}

/// Construction parameters for the initial league.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationConfig {
    /// Active population size.
    pub n: usize,
    /// Std-dev of the initial logit draw.
    pub sigma0: f64,
    pub initial_rating: f64,
    pub hall_cap: usize,
}

impl Default for PopulationConfig {
    fn default() -> Self {
        PopulationConfig {
            n: 16,
            sigma0: 0.5,
            initial_rating: 1000.0,
            hall_cap: 256,
        }
    }
}

/// Point-in-time view of the league. Deep copy: later writes to the store do
/// not alter a view.
#[derive(Debug, Clone, PartialEq)]
pub struct LeagueView {
    pub active: Vec<Agent>,
    pub hall: Vec<Agent>,
}

impl LeagueView {
    pub fn get(&self, id: AgentId) -> Option<&Agent> {
        self.active
            .iter()
            .find(|a| a.id == id)
            .or_else(|| self.hall.iter().find(|a| a.id == id))
    }

    pub fn contains(&self, id: AgentId) -> bool {
        self.get(id).is_some()
    }

    /// Every member: active agents followed by hall-of-fame snapshots.
    pub fn members(&self) -> impl Iterator<Item = &Agent> {
        self.active.iter().chain(self.hall.iter())
    }

    pub fn len(&self) -> usize {
        self.active.len() + self.hall.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// The league store.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct League {
    pub capacity: usize,
    active: Vec<Agent>,
    hall: Vec<Agent>,
    hall_cap: usize,
    /// Snapshots ever offered to the hall (drives reservoir eviction).
    hall_seen: u64,
    lineage: Vec<LineageRecord>,
    next_id: u64,
}

impl League {
    /// Spawn the initial league: `n` agents with seeded normal logits,
    /// log-uniform hyperparameters, and the configured initial rating.
    pub fn spawn_initial(
        config: &PopulationConfig,
        bounds: &HyperBounds,
        k: usize,
        rng: &mut impl Rng,
    ) -> Result<League> {
        if config.n < 2 {
            return Err(Error::config("population.n", "minimum is 2"));
        }
        bounds.validate()?;
        let normal = Normal::new(0.0, config.sigma0)
            .map_err(|e| Error::invalid(format!("bad sigma0: {e}")))?;
        let mut league = League {
            capacity: config.n,
            active: Vec::with_capacity(config.n),
            hall: Vec::new(),
            hall_cap: config.hall_cap,
            hall_seen: 0,
            lineage: Vec::new(),
            next_id: 0,
        };
        for _ in 0..config.n {
            let id = AgentId(league.next_id);
            league.next_id += 1;
            let logits: Vec<f64> = (0..k).map(|_| normal.sample(rng)).collect();
            let agent = Agent {
                id,
                logits: PolicyParams::new(logits),
                hypers: bounds.sample(rng),
                rating: config.initial_rating,
                bd: None,
                criterion: NicheCriterion::BeatAgent {
                    // placeholder target; reassigned before the run starts
                    target: id,
                    margin: 0.0,
                },
                born_at: 0,
                matches_played: 0,
                last_exploit_at: 0,
                matches_at_last_exploit: 0,
                active: true,
                bd_history: Vec::new(),
                sat_history: Vec::new(),
            };
            league.lineage.push(LineageRecord {
                child: id,
                parent: None,
                event: LineageEvent::Spawn,
                at: 0,
            });
            league.active.push(agent);
        }
        // Give every agent a real default criterion: beat the next spawn.
        let ids: Vec<AgentId> = league.active.iter().map(|a| a.id).collect();
        for (i, agent) in league.active.iter_mut().enumerate() {
            agent.criterion = NicheCriterion::BeatAgent {
                target: ids[(i + 1) % ids.len()],
                margin: 0.0,
            };
        }
        Ok(league)
    }

    pub fn active_agents(&self) -> &[Agent] {
        &self.active
    }

    pub fn hall(&self) -> &[Agent] {
        &self.hall
    }

    pub fn lineage(&self) -> &[LineageRecord] {
        &self.lineage
    }

    pub fn next_id(&self) -> u64 {
        self.next_id
    }

    pub fn push_lineage(&mut self, record: LineageRecord) {
        self.lineage.push(record);
    }

    pub fn get(&self, id: AgentId) -> Option<&Agent> {
        self.active
            .iter()
            .find(|a| a.id == id)
            .or_else(|| self.hall.iter().find(|a| a.id == id))
    }

    /// Mutable access to an ACTIVE agent. Hall members are immutable.
    pub fn get_active_mut(&mut self, id: AgentId) -> Option<&mut Agent> {
        self.active.iter_mut().find(|a| a.id == id)
    }

    pub fn is_active(&self, id: AgentId) -> bool {
        self.active.iter().any(|a| a.id == id)
    }

    /// Inject a frozen, inactive member directly into the hall (used for
    /// fixed benchmark opponents). Not subject to reservoir eviction
    /// accounting.
    pub fn add_frozen(&mut self, mut agent: Agent) -> AgentId {
        let id = AgentId(self.next_id);
        self.next_id += 1;
        agent.id = id;
        agent.active = false;
        self.lineage.push(LineageRecord {
            child: id,
            parent: None,
            event: LineageEvent::Spawn,
            at: 0,
        });
        self.hall.push(agent);
        id
    }

    /// Decide where the next snapshot would land, consuming randomness only
    /// when the hall is at capacity.
    pub fn plan_eviction(&self, rng: &mut impl Rng) -> HallPlacement {
        if self.hall.len() < self.hall_cap {
            return HallPlacement::Append;
        }
        // Reservoir (algorithm R): the (hall_seen + 1)-th candidate keeps a
        // cap/(seen+1) chance of landing, uniformly over slots.
        let j = rng.gen_range(0..self.hall_seen + 1);
        if (j as usize) < self.hall_cap {
            HallPlacement::Replace(j as usize)
        } else {
            HallPlacement::Drop
        }
    }

    /// Freeze an immutable snapshot of an active agent into the hall of fame
    /// at a pre-decided placement. Returns the snapshot id.
    pub fn freeze_with(
        &mut self,
        agent_id: AgentId,
        at: u64,
        placement: HallPlacement,
    ) -> Result<AgentId> {
        let agent = self
            .active
            .iter()
            .find(|a| a.id == agent_id)
            .ok_or(Error::NotFound(agent_id.0))?;
        let mut snapshot = agent.clone();
        let snapshot_id = AgentId(self.next_id);
        self.next_id += 1;
        snapshot.id = snapshot_id;
        snapshot.active = false;
        self.hall_seen += 1;
        match placement {
            HallPlacement::Append => self.hall.push(snapshot),
            HallPlacement::Replace(slot) => {
                if slot >= self.hall.len() {
                    return Err(Error::state(format!(
                        "hall eviction slot {slot} out of range"
                    )));
                }
                self.hall[slot] = snapshot;
            }
            HallPlacement::Drop => {}
        }
        self.lineage.push(LineageRecord {
            child: snapshot_id,
            parent: Some(agent_id),
            event: LineageEvent::Freeze,
            at,
        });
        Ok(snapshot_id)
    }

    /// Freeze an active agent into the hall of fame.
    pub fn freeze_to_hall_of_fame(
        &mut self,
        agent_id: AgentId,
        at: u64,
        rng: &mut impl Rng,
    ) -> Result<AgentId> {
        let placement = self.plan_eviction(rng);
        self.freeze_with(agent_id, at, placement)
    }

    /// Consistent point-in-time copy of the whole league.
    pub fn snapshot(&self) -> LeagueView {
        LeagueView {
            active: self.active.clone(),
            hall: self.hall.clone(),
        }
    }
}
