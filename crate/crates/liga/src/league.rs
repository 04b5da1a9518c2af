//! Competitive league machinery: Elo ratings, similarity matchmaking over
//! active agents and the hall of fame, match execution, and the empirical
//! payoff table that feeds the Nash layer.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use serde::de::Deserializer;
use serde::ser::{SerializeSeq, Serializer};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::games::{policy_to_mixed, GameSpec};
use crate::population::{Agent, AgentId, LeagueView};

/// Logistic expected score of a rating-`r_a` player against `r_b`
/// (base 10, scale 400).
pub fn expected_score(r_a: f64, r_b: f64) -> f64 {
    1.0 / (1.0 + 10f64.powf((r_b - r_a) / 400.0))
}

/// Elo increments for both sides given `score_a` in `[0, 1]`.
/// With a shared K the two deltas sum to zero.
pub fn elo_deltas(k: f64, r_a: f64, r_b: f64, score_a: f64) -> (f64, f64) {
    let e_a = expected_score(r_a, r_b);
    let e_b = expected_score(r_b, r_a);
    (k * (score_a - e_a), k * ((1.0 - score_a) - e_b))
}

/// Standalone rating store. Frozen members (hall-of-fame snapshots) keep
/// their rating; matches against them only move the active side.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RatingBook {
    pub k: f64,
    ratings: BTreeMap<AgentId, f64>,
    frozen: BTreeSet<AgentId>,
}

impl RatingBook {
    pub fn new(k: f64) -> RatingBook {
        RatingBook {
            k,
            ratings: BTreeMap::new(),
            frozen: BTreeSet::new(),
        }
    }

    pub fn insert(&mut self, id: AgentId, rating: f64, frozen: bool) {
        self.ratings.insert(id, rating);
        if frozen {
            self.frozen.insert(id);
        }
    }

    pub fn rating(&self, id: AgentId) -> Option<f64> {
        self.ratings.get(&id).copied()
    }

    pub fn update(&mut self, a: AgentId, b: AgentId, score_a: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&score_a) {
            return Err(Error::invalid(format!("score {score_a} outside [0, 1]")));
        }
        let r_a = self.rating(a).ok_or(Error::NotFound(a.0))?;
        let r_b = self.rating(b).ok_or(Error::NotFound(b.0))?;
        let (da, db) = elo_deltas(self.k, r_a, r_b, score_a);
        if !self.frozen.contains(&a) {
            self.ratings.insert(a, r_a + da);
        }
        if !self.frozen.contains(&b) {
            self.ratings.insert(b, r_b + db);
        }
        Ok(())
    }

    pub fn total(&self) -> f64 {
        self.ratings.values().sum()
    }
}

/// One recorded match between two league members.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub a: AgentId,
    pub b: AgentId,
    /// Mean payoff to side `a`, in `[-1, 1]`.
    pub payoff_a: f64,
    /// Empirical behavior descriptors over the match's episodes.
    pub bd_a: Vec<f64>,
    pub bd_b: Vec<f64>,
    /// Logical time when the match was committed.
    pub at: u64,
    /// Stream key the episodes were sampled with.
    pub seed: u64,
}

/// Play `episodes` pure-strategy rounds, each side sampling from its mixed
/// policy. Pure function of `(agents, episodes, seed)`; bookkeeping such as
/// `matches_played` happens when the result is recorded into the store.
pub fn play_match(
    game: &GameSpec,
    a: &Agent,
    b: &Agent,
    episodes: u32,
    seed: u64,
) -> Result<MatchResult> {
    if episodes < 1 {
        return Err(Error::invalid("a match needs at least one episode"));
    }
    let p = policy_to_mixed(&a.logits)?;
    let q = policy_to_mixed(&b.logits)?;
    let mut rng = crate::rng::from_key(seed);
    let mut payoff_sum = 0.0;
    let mut bd_a = vec![0.0; game.bd_dim()];
    let mut bd_b = vec![0.0; game.bd_dim()];
    for _ in 0..episodes {
        let action_a = p.sample(&mut rng);
        let action_b = q.sample(&mut rng);
        payoff_sum += game.pure_payoff(action_a, action_b);
        for (acc, v) in bd_a.iter_mut().zip(game.bd_of_pure(action_a)) {
            *acc += v;
        }
        for (acc, v) in bd_b.iter_mut().zip(game.bd_of_pure(action_b)) {
            *acc += v;
        }
    }
    let n = episodes as f64;
    for v in bd_a.iter_mut().chain(bd_b.iter_mut()) {
        *v /= n;
    }
    Ok(MatchResult {
        a: a.id,
        b: b.id,
        payoff_a: payoff_sum / n,
        bd_a,
        bd_b,
        at: 0,
        seed,
    })
}

/// Exact (infinite-episode) match: bilinear payoff and expected descriptors.
pub fn exact_match(game: &GameSpec, a: &Agent, b: &Agent) -> Result<MatchResult> {
    let p = policy_to_mixed(&a.logits)?;
    let q = policy_to_mixed(&b.logits)?;
    Ok(MatchResult {
        a: a.id,
        b: b.id,
        payoff_a: crate::games::mixed_payoff(game, &p, &q)?,
        bd_a: game.bd_of_mixed(&p),
        bd_b: game.bd_of_mixed(&q),
        at: 0,
        seed: 0,
    })
}

/// Sample an opponent for `agent` with probability proportional to
/// `exp(-(r_agent - r_j)^2 / (2 sigma^2))` over all other active agents and
/// every hall-of-fame snapshot (including snapshots of the agent itself).
pub fn sample_opponent(
    view: &LeagueView,
    agent: &Agent,
    sigma_match: f64,
    rng: &mut impl Rng,
) -> Result<AgentId> {
    let candidates: Vec<&Agent> = view.members().filter(|c| c.id != agent.id).collect();
    if candidates.is_empty() {
        return Err(Error::state("no matchmaking candidates besides the agent"));
    }
    // Shift by the smallest gap so at least one weight is exactly 1; the
    // distribution is unchanged and extreme gaps cannot underflow to an
    // all-zero weight vector.
    let gaps: Vec<f64> = candidates
        .iter()
        .map(|c| {
            let g = agent.rating - c.rating;
            g * g
        })
        .collect();
    let min_gap = gaps.iter().cloned().fold(f64::INFINITY, f64::min);
    let weights: Vec<f64> = gaps
        .iter()
        .map(|g| {
            if sigma_match.is_infinite() {
                1.0
            } else {
                (-(g - min_gap) / (2.0 * sigma_match * sigma_match)).exp()
            }
        })
        .collect();
    let total: f64 = weights.iter().sum();
    let mut pick = rng.gen_range(0.0..total);
    for (candidate, w) in candidates.iter().zip(&weights) {
        pick -= w;
        if pick < 0.0 {
            return Ok(candidate.id);
        }
    }
    Ok(candidates.last().expect("non-empty").id)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PairStat {
    pub sum: f64,
    pub count: u64,
}

/// Accumulated empirical payoffs per ordered pair of league members.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PayoffTable {
    #[serde(
        serialize_with = "serialize_pairs",
        deserialize_with = "deserialize_pairs"
    )]
    pairs: BTreeMap<(AgentId, AgentId), PairStat>,
}

fn serialize_pairs<S: Serializer>(
    pairs: &BTreeMap<(AgentId, AgentId), PairStat>,
    serializer: S,
) -> std::result::Result<S::Ok, S::Error> {
    let mut seq = serializer.serialize_seq(Some(pairs.len()))?;
    for ((a, b), stat) in pairs {
        seq.serialize_element(&(a, b, stat.sum, stat.count))?;
    }
    seq.end()
}

fn deserialize_pairs<'de, D: Deserializer<'de>>(
    deserializer: D,
) -> std::result::Result<BTreeMap<(AgentId, AgentId), PairStat>, D::Error> {
    let entries: Vec<(AgentId, AgentId, f64, u64)> = Vec::deserialize(deserializer)?;
    Ok(entries
        .into_iter()
        .map(|(a, b, sum, count)| ((a, b), PairStat { sum, count }))
        .collect())
}

impl PayoffTable {
    pub fn record(&mut self, result: &MatchResult) {
        let stat = self.pairs.entry((result.a, result.b)).or_default();
        stat.sum += result.payoff_a;
        stat.count += 1;
    }

    /// Antisymmetrized empirical mean payoff of `i` against `j`:
    /// `(sum_ij - sum_ji) / (count_ij + count_ji)`. `None` when the pair has
    /// no matches in either order — distinct from a payoff of 0.
    pub fn empirical_payoff(&self, i: AgentId, j: AgentId) -> Option<f64> {
        if i == j {
            return Some(0.0);
        }
        let fwd = self.pairs.get(&(i, j)).copied().unwrap_or_default();
        let rev = self.pairs.get(&(j, i)).copied().unwrap_or_default();
        let count = fwd.count + rev.count;
        if count == 0 {
            return None;
        }
        Some((fwd.sum - rev.sum) / count as f64)
    }

    pub fn has_data(&self, i: AgentId, j: AgentId) -> bool {
        i == j || self.empirical_payoff(i, j).is_some()
    }

    /// Total matches recorded.
    pub fn total_count(&self) -> u64 {
        self.pairs.values().map(|s| s.count).sum()
    }
}
