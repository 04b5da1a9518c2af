//! The inner optimization loop: plain gradient ascent on the shaped
//! objective (expected payoff plus an evolved entropy bonus) against a fixed
//! opponent mixture, using the agent's own hyperparameters.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::games::{mixed_payoff, payoff_gradient, policy_to_mixed, GameSpec, MixedStrategy, PolicyParams};
use crate::population::Agent;

/// Shannon entropy `-sum p_i ln p_i`, with `0 ln 0 = 0`.
pub fn entropy(p: &MixedStrategy) -> f64 {
    p.probs
        .iter()
        .filter(|&&v| v > 0.0)
        .map(|&v| -v * v.ln())
        .sum()
}

/// The objective the learner climbs: payoff plus weighted policy entropy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShapedObjective {
    pub base: f64,
    pub entropy_bonus: f64,
    pub total: f64,
}

pub fn shaped_objective(
    game: &GameSpec,
    policy: &PolicyParams,
    opponent: &MixedStrategy,
    entropy_coeff: f64,
) -> Result<ShapedObjective> {
    let p = policy_to_mixed(policy)?;
    let base = mixed_payoff(game, &p, opponent)?;
    let entropy_bonus = entropy_coeff * entropy(&p);
    Ok(ShapedObjective {
        base,
        entropy_bonus,
        total: base + entropy_bonus,
    })
}

/// Exact gradient of the shaped objective with respect to the logits.
///
/// The entropy term differentiates to `-p_i (ln p_i + H(p))` through the
/// softmax, which vanishes at the uniform policy.
pub fn shaped_gradient(
    game: &GameSpec,
    policy: &PolicyParams,
    opponent: &MixedStrategy,
    entropy_coeff: f64,
) -> Result<Vec<f64>> {
    let mut grad = payoff_gradient(game, policy, opponent)?;
    if entropy_coeff != 0.0 {
        let p = policy_to_mixed(policy)?;
        let h = entropy(&p);
        for (g, &pi) in grad.iter_mut().zip(&p.probs) {
            let ent_term = if pi > 0.0 { -pi * (pi.ln() + h) } else { 0.0 };
            *g += entropy_coeff * ent_term;
        }
    }
    Ok(grad)
}

/// Run `steps` gradient-ascent steps against the opponent mixture and return
/// the updated agent. Only the logits change; ratings, hyperparameters, and
/// match bookkeeping are untouched.
pub fn local_update(
    agent: &Agent,
    opponent_mix: &MixedStrategy,
    game: &GameSpec,
    steps: u32,
) -> Result<Agent> {
    if steps < 1 {
        return Err(Error::invalid("local_update needs steps >= 1"));
    }
    let mut updated = agent.clone();
    let lr = agent.hypers.learning_rate;
    let coeff = agent.hypers.entropy_coeff;
    for step in 0..steps {
        let grad = shaped_gradient(game, &updated.logits, opponent_mix, coeff)?;
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::numeric(format!(
                "non-finite gradient at step {step} for agent {}",
                agent.id
            )));
        }
        for (z, g) in updated.logits.logits.iter_mut().zip(&grad) {
            *z += lr * g;
        }
    }
    Ok(updated)
}

/// Central finite differences of the shaped objective, coordinate-wise.
/// Test oracle: shares no code with the analytic gradient path.
pub fn finite_diff_gradient(
    game: &GameSpec,
    policy: &PolicyParams,
    opponent: &MixedStrategy,
    entropy_coeff: f64,
    step: f64,
) -> Result<Vec<f64>> {
    if step <= 0.0 {
        return Err(Error::invalid("finite-difference step must be positive"));
    }
    let mut grad = Vec::with_capacity(policy.len());
    for i in 0..policy.len() {
        let mut plus = policy.clone();
        plus.logits[i] += step;
        let mut minus = policy.clone();
        minus.logits[i] -= step;
        let up = shaped_objective(game, &plus, opponent, entropy_coeff)?.total;
        let down = shaped_objective(game, &minus, opponent, entropy_coeff)?.total;
        grad.push((up - down) / (2.0 * step));
    }
    Ok(grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::games::{make_blotto, make_random_antisymmetric, make_rps};
    use crate::population::{Agent, AgentId, Hyperparams};
    use crate::qd::NicheCriterion;
    use crate::rng::{stream, Domain};
    use rand::Rng;

    fn agent(logits: Vec<f64>, lr: f64, entropy_coeff: f64) -> Agent {
        Agent {
            id: AgentId(0),
            logits: PolicyParams::new(logits),
            hypers: Hyperparams {
                learning_rate: lr,
                entropy_coeff,
            },
            rating: 1000.0,
            bd: None,
            criterion: NicheCriterion::BeatAgent {
                target: AgentId(0),
                margin: 0.0,
            },
            born_at: 0,
            matches_played: 0,
            last_exploit_at: 0,
            matches_at_last_exploit: 0,
            active: true,
            bd_history: Vec::new(),
            sat_history: Vec::new(),
        }
    }

    #[test]
    fn entropy_known_values() {
        let u = MixedStrategy::uniform(4);
        assert!((entropy(&u) - 4.0_f64.ln()).abs() < 1e-12);
        let pure = MixedStrategy::pure(4, 2);
        assert_eq!(entropy(&pure), 0.0);
        let half = MixedStrategy::new(vec![0.5, 0.5, 0.0]).unwrap();
        assert!((entropy(&half) - 2.0_f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn uniform_opponent_freezes_the_payoff_learner() {
        let game = make_rps(3).unwrap();
        let a = agent(vec![0.4, -0.1, 0.3], 0.1, 0.0);
        let updated = local_update(&a, &MixedStrategy::uniform(3), &game, 50).unwrap();
        for (before, after) in a.logits.logits.iter().zip(&updated.logits.logits) {
            assert!((before - after).abs() < 1e-12);
        }
    }

    #[test]
    fn entropy_bonus_pulls_toward_uniform() {
        let game = make_rps(3).unwrap();
        // uniform opponent nullifies the payoff term, leaving pure entropy ascent
        let a = agent(vec![1.5, -0.5, 0.0], 0.01, 0.5);
        let mut current = a.clone();
        let mut last_entropy = entropy(&policy_to_mixed(&current.logits).unwrap());
        for _ in 0..100 {
            current = local_update(&current, &MixedStrategy::uniform(3), &game, 1).unwrap();
            let h = entropy(&policy_to_mixed(&current.logits).unwrap());
            assert!(h > last_entropy - 1e-12, "entropy decreased: {last_entropy} -> {h}");
            last_entropy = h;
        }
        assert!(last_entropy > 1.09, "should approach ln 3: {last_entropy}");
    }

    #[test]
    fn best_response_convergence_against_pure_paper() {
        let game = make_rps(3).unwrap();
        let a = agent(vec![0.0, 0.0, 0.0], 0.1, 0.0);
        let paper = MixedStrategy::pure(3, 1);
        let updated = local_update(&a, &paper, &game, 1000).unwrap();
        let p = policy_to_mixed(&updated.logits).unwrap();
        assert!(p.probs[2] > 0.99, "scissors mass {}", p.probs[2]);
    }

    #[test]
    fn local_update_touches_only_logits() {
        let game = make_rps(3).unwrap();
        let a = agent(vec![0.1, 0.2, 0.3], 0.05, 0.1);
        let updated = local_update(&a, &MixedStrategy::pure(3, 0), &game, 10).unwrap();
        assert_eq!(updated.hypers, a.hypers);
        assert_eq!(updated.rating, a.rating);
        assert_eq!(updated.criterion, a.criterion);
        assert_eq!(updated.matches_played, a.matches_played);
        assert_ne!(updated.logits, a.logits);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = stream(30, Domain::Unit, 0);
        let games = [
            make_rps(3).unwrap(),
            make_rps(5).unwrap(),
            make_blotto(3, 3).unwrap(),
            make_random_antisymmetric(4, 11).unwrap(),
        ];
        for trial in 0..100 {
            let game = &games[trial % games.len()];
            let k = game.k;
            let logits = PolicyParams::new((0..k).map(|_| rng.gen_range(-3.0..3.0)).collect());
            let raw: Vec<f64> = (0..k).map(|_| rng.gen_range(0.01..1.0)).collect();
            let total: f64 = raw.iter().sum();
            let q = MixedStrategy::new(raw.iter().map(|v| v / total).collect()).unwrap();
            let coeff = if trial % 2 == 0 { 0.0 } else { 0.1 };
            let analytic = shaped_gradient(game, &logits, &q, coeff).unwrap();
            let fd = finite_diff_gradient(game, &logits, &q, coeff, 1e-5).unwrap();
            let norm = analytic
                .iter()
                .cloned()
                .fold(0.0_f64, |m, v| m.max(v.abs()))
                .max(1e-6);
            for (a, f) in analytic.iter().zip(&fd) {
                assert!(
                    (a - f).abs() / norm < 1e-5,
                    "trial {trial}: {a} vs {f} (norm {norm})"
                );
            }
        }
    }

    #[test]
    fn finite_diff_zero_against_uniform_and_symmetric() {
        let game = make_rps(3).unwrap();
        let fd = finite_diff_gradient(
            &game,
            &PolicyParams::new(vec![0.2, -0.4, 0.1]),
            &MixedStrategy::uniform(3),
            0.0,
            1e-5,
        )
        .unwrap();
        for v in &fd {
            assert!(v.abs() < 1e-9);
        }
        // symmetric logits against a symmetric opponent give symmetric components
        let g5 = make_rps(5).unwrap();
        let fd = finite_diff_gradient(
            &g5,
            &PolicyParams::new(vec![0.0; 5]),
            &MixedStrategy::uniform(5),
            0.3,
            1e-5,
        )
        .unwrap();
        for w in fd.windows(2) {
            assert!((w[0] - w[1]).abs() < 1e-9);
        }
    }

    #[test]
    fn small_steps_never_meaningfully_decrease_the_objective() {
        let mut rng = stream(31, Domain::Unit, 1);
        let game = make_rps(5).unwrap();
        for _ in 0..1000 {
            let logits = PolicyParams::new((0..5).map(|_| rng.gen_range(-3.0..3.0)).collect());
            let raw: Vec<f64> = (0..5).map(|_| rng.gen_range(0.01..1.0)).collect();
            let total: f64 = raw.iter().sum();
            let q = MixedStrategy::new(raw.iter().map(|v| v / total).collect()).unwrap();
            let coeff = rng.gen_range(0.0..0.3);
            let a = agent(logits.logits.clone(), 1e-4, coeff);
            let before = shaped_objective(&game, &logits, &q, coeff).unwrap().total;
            let updated = local_update(&a, &q, &game, 1).unwrap();
            let after = shaped_objective(&game, &updated.logits, &q, coeff)
                .unwrap()
                .total;
            assert!(
                after >= before - 1e-6,
                "objective fell {before} -> {after}"
            );
        }
    }

    #[test]
    fn entropy_bonus_respects_its_bound() {
        let game = make_rps(5).unwrap();
        let mut rng = stream(32, Domain::Unit, 2);
        for _ in 0..200 {
            let logits = PolicyParams::new((0..5).map(|_| rng.gen_range(-6.0..6.0)).collect());
            let coeff = rng.gen_range(0.0..0.5);
            let obj = shaped_objective(&game, &logits, &MixedStrategy::uniform(5), coeff).unwrap();
            assert!(obj.entropy_bonus >= 0.0);
            assert!(obj.entropy_bonus <= coeff * 5.0_f64.ln() + 1e-12);
            assert!((obj.total - obj.base - obj.entropy_bonus).abs() < 1e-12);
        }
    }
}
