//! The outer evolution loop: readiness gating, binary tournament selection,
//! exploit (the winner's parameters overwrite the loser's), and explore (the
//! loser receives a mutated copy of the winner's hyperparameters).
//!
//! Exploit copies the *current* trained logits, so traits acquired in the
//! inner loop are inherited directly.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::population::{Agent, AgentId, HallPlacement, HyperBounds, Hyperparams, League, LineageEvent, LineageRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionMethod {
    BinaryTournament,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PbtConfig {
    pub enabled: bool,
    /// Minimum logical-time gap between exploits of one agent.
    pub ready_interval: u64,
    /// Minimum matches played since the last exploit.
    pub min_matches: u64,
    /// Multiplicative perturbation factors (down, up).
    pub perturb_factors: (f64, f64),
    /// Per-hyperparameter probability of a fresh log-uniform resample.
    pub resample_prob: f64,
    pub selection: SelectionMethod,
}

impl Default for PbtConfig {
    fn default() -> Self {
        PbtConfig {
            enabled: true,
            ready_interval: 64,
            min_matches: 8,
            perturb_factors: (0.8, 1.25),
            resample_prob: 0.25,
            selection: SelectionMethod::BinaryTournament,
        }
    }
}

impl PbtConfig {
    pub fn validate(&self) -> Result<()> {
        if self.ready_interval < 1 {
            return Err(Error::config("pbt.ready_interval", "must be >= 1"));
        }
        if self.perturb_factors.0 <= 0.0 || self.perturb_factors.1 <= 0.0 {
            return Err(Error::config("pbt.perturb_factors", "must be positive"));
        }
        if !(0.0..=1.0).contains(&self.resample_prob) {
            return Err(Error::config("pbt.resample_prob", "must be in [0, 1]"));
        }
        Ok(())
    }
}

/// An agent may be exploited only after both the time gap and the match
/// count since its last exploit have been met.
pub fn ready(agent: &Agent, now: u64, config: &PbtConfig) -> bool {
    now.saturating_sub(agent.last_exploit_at) >= config.ready_interval
        && agent.matches_played.saturating_sub(agent.matches_at_last_exploit) >= config.min_matches
}

/// Binary tournament over a uniformly sampled pair of distinct active
/// agents, ranked by `fitness`. Ties break toward fewer matches played,
/// then the lower id.
pub fn tournament_select_by<F>(
    active: &[Agent],
    rng: &mut impl Rng,
    fitness: F,
) -> Result<(AgentId, AgentId)>
where
    F: Fn(&Agent) -> f64,
{
    if active.len() < 2 {
        return Err(Error::state("tournament needs at least 2 active agents"));
    }
    let i = rng.gen_range(0..active.len());
    let j = {
        let mut j = rng.gen_range(0..active.len() - 1);
        if j >= i {
            j += 1;
        }
        j
    };
    let (a, b) = (&active[i], &active[j]);
    let a_wins = match fitness(a).partial_cmp(&fitness(b)).expect("finite fitness") {
        std::cmp::Ordering::Greater => true,
        std::cmp::Ordering::Less => false,
        std::cmp::Ordering::Equal => match a.matches_played.cmp(&b.matches_played) {
            std::cmp::Ordering::Less => true,
            std::cmp::Ordering::Greater => false,
            std::cmp::Ordering::Equal => a.id < b.id,
        },
    };
    if a_wins {
        Ok((a.id, b.id))
    } else {
        Ok((b.id, a.id))
    }
}

/// Tournament on raw ratings.
pub fn tournament_select(active: &[Agent], rng: &mut impl Rng) -> Result<(AgentId, AgentId)> {
    tournament_select_by(active, rng, |a| a.rating)
}

/// Overwrite the loser with the winner: the loser's pre-overwrite self is
/// frozen to the hall of fame, then its logits and rating become exact
/// copies of the winner's. Returns the hall snapshot id.
pub fn exploit(
    league: &mut League,
    winner_id: AgentId,
    loser_id: AgentId,
    now: u64,
    placement: HallPlacement,
) -> Result<AgentId> {
    if winner_id == loser_id {
        return Err(Error::invalid("exploit needs two distinct agents"));
    }
    if !league.is_active(winner_id) {
        return Err(Error::NotFound(winner_id.0));
    }
    if !league.is_active(loser_id) {
        return Err(Error::NotFound(loser_id.0));
    }
    let snapshot_id = league.freeze_with(loser_id, now, placement)?;
    let winner = league.get(winner_id).expect("checked active").clone();
    let loser = league.get_active_mut(loser_id).expect("checked active");
    loser.logits = winner.logits.clone();
    loser.rating = winner.rating;
    loser.last_exploit_at = now;
    loser.matches_at_last_exploit = loser.matches_played;
    league.push_lineage(LineageRecord {
        child: loser_id,
        parent: Some(winner_id),
        event: LineageEvent::Exploit,
        at: now,
    });
    Ok(snapshot_id)
}

/// Mutate a copy of a hyperparameter vector: per value, either resample
/// log-uniformly within bounds or multiply by one of the perturbation
/// factors, then clamp.
pub fn explore(
    hypers: &Hyperparams,
    config: &PbtConfig,
    bounds: &HyperBounds,
    rng: &mut impl Rng,
) -> Hyperparams {
    let mut mutated = hypers.clone();
    mutated.learning_rate = mutate_one(
        hypers.learning_rate,
        bounds.learning_rate,
        config,
        rng,
    );
    mutated.entropy_coeff = mutate_one(
        hypers.entropy_coeff,
        bounds.entropy_coeff,
        config,
        rng,
    );
    bounds.clamp(&mut mutated);
    mutated
}

fn mutate_one(value: f64, (lo, hi): (f64, f64), config: &PbtConfig, rng: &mut impl Rng) -> f64 {
    if rng.gen_bool(config.resample_prob) {
        if lo == hi {
            return lo;
        }
        (rng.gen_range(lo.ln()..hi.ln())).exp()
    } else {
        let factor = if rng.gen_bool(0.5) {
            config.perturb_factors.0
        } else {
            config.perturb_factors.1
        };
        (value * factor).clamp(lo, hi)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::games::PolicyParams;
    use crate::population::PopulationConfig;
    use crate::qd::NicheCriterion;
    use crate::rng::{stream, Domain};
    use std::collections::BTreeMap;

    fn agent(id: u64, rating: f64, matches: u64) -> Agent {
        Agent {
            id: AgentId(id),
            logits: PolicyParams::new(vec![0.0; 3]),
            hypers: Hyperparams {
                learning_rate: 0.01,
                entropy_coeff: 0.01,
            },
            rating,
            bd: None,
            criterion: NicheCriterion::BeatAgent {
                target: AgentId(id),
                margin: 0.0,
            },
            born_at: 0,
            matches_played: matches,
            last_exploit_at: 0,
            matches_at_last_exploit: 0,
            active: true,
            bd_history: Vec::new(),
            sat_history: Vec::new(),
        }
    }

    #[test]
    fn readiness_gating() {
        let cfg = PbtConfig::default();
        let mut a = agent(0, 1000.0, 0);
        // freshly spawned at its own birth time
        assert!(!ready(&a, 0, &cfg));
        // interval met with enough matches
        a.matches_played = 8;
        assert!(ready(&a, 64, &cfg));
        // interval met, no matches since exploit
        a.matches_at_last_exploit = 8;
        assert!(!ready(&a, 64, &cfg));
        // matches met, interval not yet
        a.matches_at_last_exploit = 0;
        a.last_exploit_at = 10;
        assert!(!ready(&a, 73, &cfg));
        assert!(ready(&a, 74, &cfg));
    }

    #[test]
    fn tournament_prefers_higher_rating() {
        let agents = vec![agent(0, 1200.0, 10), agent(1, 1000.0, 10)];
        let mut rng = stream(40, Domain::Unit, 0);
        for _ in 0..20 {
            let (w, l) = tournament_select(&agents, &mut rng).unwrap();
            assert_eq!(w, AgentId(0));
            assert_eq!(l, AgentId(1));
        }
    }

    #[test]
    fn tournament_tie_breaks() {
        // equal ratings: fewer matches wins
        let agents = vec![agent(0, 1000.0, 10), agent(1, 1000.0, 5)];
        let mut rng = stream(41, Domain::Unit, 0);
        let (w, _) = tournament_select(&agents, &mut rng).unwrap();
        assert_eq!(w, AgentId(1));
        // equal everything: lower id wins
        let agents = vec![agent(3, 1000.0, 5), agent(7, 1000.0, 5)];
        let (w, _) = tournament_select(&agents, &mut rng).unwrap();
        assert_eq!(w, AgentId(3));
    }

    #[test]
    fn tournament_needs_two_agents() {
        let agents = vec![agent(0, 1000.0, 0)];
        let mut rng = stream(42, Domain::Unit, 0);
        assert!(tournament_select(&agents, &mut rng).is_err());
    }

    #[test]
    fn tournament_pairs_are_uniform() {
        let agents: Vec<Agent> = (0..10).map(|i| agent(i, 1000.0 + i as f64, 0)).collect();
        let mut rng = stream(43, Domain::Unit, 0);
        let mut counts: BTreeMap<(u64, u64), u64> = BTreeMap::new();
        let n = 45_000u64;
        for _ in 0..n {
            let (w, l) = tournament_select(&agents, &mut rng).unwrap();
            let key = (w.0.min(l.0), w.0.max(l.0));
            *counts.entry(key).or_insert(0) += 1;
        }
        assert_eq!(counts.len(), 45);
        let expected = n as f64 / 45.0;
        // chi-square, 44 dof, far tail at 0.999 is ~78.7
        let chi2: f64 = counts
            .values()
            .map(|&c| {
                let d = c as f64 - expected;
                d * d / expected
            })
            .sum();
        assert!(chi2 < 78.7, "chi-square {chi2}");
    }

    #[test]
    fn selection_pressure_is_monotone_in_rating() {
        let agents: Vec<Agent> = (0..8).map(|i| agent(i, 900.0 + 30.0 * i as f64, 0)).collect();
        let mut rng = stream(44, Domain::Unit, 0);
        let mut wins = vec![0u64; 8];
        for _ in 0..40_000 {
            let (w, _) = tournament_select(&agents, &mut rng).unwrap();
            wins[w.0 as usize] += 1;
        }
        // allow sampling noise: compare with a slack of 3 sigma on ~10k pair draws
        for pair in wins.windows(2) {
            assert!(
                (pair[1] as f64) > (pair[0] as f64) - 3.0 * (pair[0] as f64).sqrt(),
                "win counts not monotone: {wins:?}"
            );
        }
    }

    fn small_league() -> League {
        let cfg = PopulationConfig {
            n: 4,
            ..PopulationConfig::default()
        };
        let mut rng = stream(45, Domain::Spawn, 0);
        League::spawn_initial(&cfg, &HyperBounds::default(), 3, &mut rng).unwrap()
    }

    #[test]
    fn exploit_copies_trained_parameters() {
        let mut league = small_league();
        let winner = league.active_agents()[0].id;
        let loser = league.active_agents()[1].id;
        // "train" the winner after spawn so the copy must carry the update
        league.get_active_mut(winner).unwrap().logits.logits[0] = 123.456;
        league.get_active_mut(winner).unwrap().rating = 1234.0;
        let winner_before = league.get(winner).unwrap().clone();
        let hall_before = league.hall().len();
        let snapshot =
            exploit(&mut league, winner, loser, 100, HallPlacement::Append).unwrap();
        // loser now carries the winner's current logits and rating
        let loser_agent = league.get(loser).unwrap();
        assert_eq!(loser_agent.logits, winner_before.logits);
        assert_eq!(loser_agent.rating, winner_before.rating);
        assert_eq!(loser_agent.last_exploit_at, 100);
        // hall grew by one and the snapshot is the pre-overwrite loser
        assert_eq!(league.hall().len(), hall_before + 1);
        assert!(league.get(snapshot).is_some());
        // winner unchanged in every field
        assert_eq!(league.get(winner).unwrap(), &winner_before);
        // population size invariant
        assert_eq!(league.active_agents().len(), 4);
    }

    #[test]
    fn exploit_rejects_self() {
        let mut league = small_league();
        let id = league.active_agents()[0].id;
        assert!(exploit(&mut league, id, id, 0, HallPlacement::Append).is_err());
    }

    #[test]
    fn explore_hand_values_and_clamping() {
        let bounds = HyperBounds {
            learning_rate: (1e-5, 1.0),
            entropy_coeff: (1e-5, 1.0),
        };
        let cfg = PbtConfig {
            resample_prob: 0.0,
            perturb_factors: (0.8, 0.8),
            ..PbtConfig::default()
        };
        let h = Hyperparams {
            learning_rate: 0.01,
            entropy_coeff: 0.5,
        };
        let mut rng = stream(46, Domain::Unit, 0);
        let mutated = explore(&h, &cfg, &bounds, &mut rng);
        assert!((mutated.learning_rate - 0.008).abs() < 1e-15);
        // clamping at the upper bound
        let cfg_up = PbtConfig {
            resample_prob: 0.0,
            perturb_factors: (1.25, 1.25),
            ..PbtConfig::default()
        };
        let at_top = Hyperparams {
            learning_rate: 1.0,
            entropy_coeff: 1.0,
        };
        let mutated = explore(&at_top, &cfg_up, &bounds, &mut rng);
        assert_eq!(mutated.learning_rate, 1.0);
        assert_eq!(mutated.entropy_coeff, 1.0);
    }

    #[test]
    fn explore_identity_configuration() {
        let bounds = HyperBounds::default();
        let cfg = PbtConfig {
            resample_prob: 0.0,
            perturb_factors: (1.0, 1.0),
            ..PbtConfig::default()
        };
        let h = Hyperparams {
            learning_rate: 0.01,
            entropy_coeff: 0.05,
        };
        let mut rng = stream(47, Domain::Unit, 0);
        for _ in 0..50 {
            let mutated = explore(&h, &cfg, &bounds, &mut rng);
            assert_eq!(mutated, h);
        }
    }

    #[test]
    fn explore_always_stays_in_bounds() {
        let bounds = HyperBounds::default();
        let cfg = PbtConfig::default();
        let mut rng = stream(48, Domain::Unit, 0);
        let mut h = bounds.sample(&mut rng);
        for _ in 0..2000 {
            h = explore(&h, &cfg, &bounds, &mut rng);
            assert!(bounds.contains(&h), "{h:?} escaped {bounds:?}");
        }
    }
}
