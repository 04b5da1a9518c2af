//! Symmetric zero-sum benchmark games and the softmax policy layer.
//!
//! A game is a `k x k` antisymmetric payoff matrix over pure strategies;
//! policies are unconstrained logit vectors mapped to mixed strategies by a
//! stable softmax. Expected payoff is bilinear, which gives the inner
//! learner an exact analytic gradient.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default cap on the Blotto pure-strategy enumeration.
pub const BLOTTO_STRATEGY_CAP: usize = 500;

/// A symmetric zero-sum game over `k` pure strategies.
///
/// `payoff[i][j]` is the row player's payoff for pure `i` against pure `j`,
/// in `[-1, 1]`, with `payoff[i][j] == -payoff[j][i]` exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameSpec {
    pub name: String,
    pub k: usize,
    payoff: Vec<Vec<f64>>,
    /// Behavior-descriptor embedding of each pure strategy. Rows are simplex
    /// vectors; defaults to one-hot (action frequencies). Blotto uses
    /// allocation fractions instead, so its descriptor space has one
    /// dimension per field rather than per strategy.
    bd_map: Vec<Vec<f64>>,
}

impl GameSpec {
    /// Build a game from an explicit payoff matrix, validating antisymmetry
    /// and the `[-1, 1]` range. Descriptors default to one-hot.
    pub fn from_matrix(name: impl Into<String>, payoff: Vec<Vec<f64>>) -> Result<Self> {
        let k = payoff.len();
        if k < 2 {
            return Err(Error::invalid("game needs at least 2 pure strategies"));
        }
        for row in &payoff {
            if row.len() != k {
                return Err(Error::invalid("payoff matrix must be square"));
            }
        }
        for i in 0..k {
            for j in 0..k {
                let v = payoff[i][j];
                if !v.is_finite() || v.abs() > 1.0 {
                    return Err(Error::invalid(format!(
                        "payoff[{i}][{j}] = {v} outside [-1, 1]"
                    )));
                }
                if payoff[i][j] != -payoff[j][i] {
                    return Err(Error::invalid(format!(
                        "payoff matrix not antisymmetric at ({i}, {j})"
                    )));
                }
            }
        }
        let bd_map = one_hot_map(k);
        Ok(GameSpec {
            name: name.into(),
            k,
            payoff,
            bd_map,
        })
    }

    pub fn payoff_matrix(&self) -> &[Vec<f64>] {
        &self.payoff
    }

    /// Payoff of pure strategy `i` against pure strategy `j`.
    pub fn pure_payoff(&self, i: usize, j: usize) -> f64 {
        self.payoff[i][j]
    }

    /// Behavior descriptor of a pure strategy (a simplex vector).
    pub fn bd_of_pure(&self, action: usize) -> &[f64] {
        &self.bd_map[action]
    }

    /// Dimension of the behavior-descriptor space.
    pub fn bd_dim(&self) -> usize {
        self.bd_map[0].len()
    }

    /// Expected behavior descriptor of a mixed strategy.
    pub fn bd_of_mixed(&self, p: &MixedStrategy) -> Vec<f64> {
        let mut bd = vec![0.0; self.bd_dim()];
        for (a, &w) in p.probs.iter().enumerate() {
            for (d, &v) in self.bd_map[a].iter().enumerate() {
                bd[d] += w * v;
            }
        }
        bd
    }
}

fn one_hot_map(k: usize) -> Vec<Vec<f64>> {
    (0..k)
        .map(|i| {
            let mut row = vec![0.0; k];
            row[i] = 1.0;
            row
        })
        .collect()
}

/// Unconstrained policy parameters: one logit per pure strategy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyParams {
    pub logits: Vec<f64>,
}

impl PolicyParams {
    pub fn new(logits: Vec<f64>) -> Self {
        PolicyParams { logits }
    }

    pub fn len(&self) -> usize {
        self.logits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.logits.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.logits.iter().all(|v| v.is_finite())
    }
}

/// A probability vector over pure strategies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixedStrategy {
    pub probs: Vec<f64>,
}

impl MixedStrategy {
    /// Validate nonnegativity and normalization (within 1e-9).
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::invalid("mixed strategy entries must be finite and >= 0"));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!(
                "mixed strategy sums to {sum}, expected 1"
            )));
        }
        Ok(MixedStrategy { probs })
    }

    /// Point mass on one pure strategy.
    pub fn pure(k: usize, action: usize) -> Self {
        let mut probs = vec![0.0; k];
        probs[action] = 1.0;
        MixedStrategy { probs }
    }

    pub fn uniform(k: usize) -> Self {
        MixedStrategy {
            probs: vec![1.0 / k as f64; k],
        }
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// Sample a pure strategy index.
    pub fn sample(&self, rng: &mut impl Rng) -> usize {
        let x: f64 = rng.gen();
        let mut acc = 0.0;
        for (i, &p) in self.probs.iter().enumerate() {
            acc += p;
            if x < acc {
                return i;
            }
        }
        self.probs.len() - 1
    }
}

/// Stable softmax: `probs[i] = exp(logits[i] - max) / sum_j exp(logits[j] - max)`.
pub fn policy_to_mixed(policy: &PolicyParams) -> Result<MixedStrategy> {
    if policy.is_empty() {
        return Err(Error::invalid("empty logit vector"));
    }
    if !policy.is_finite() {
        return Err(Error::invalid("logits must be finite"));
    }
    let max = policy.logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = policy.logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    Ok(MixedStrategy {
        probs: exps.iter().map(|e| e / sum).collect(),
    })
}

/// Bilinear expected payoff `p^T M q` of mixed `p` against mixed `q`.
pub fn mixed_payoff(game: &GameSpec, p: &MixedStrategy, q: &MixedStrategy) -> Result<f64> {
    if p.len() != game.k || q.len() != game.k {
        return Err(Error::invalid(format!(
            "strategy length mismatch: game has {} pure strategies, got {} and {}",
            game.k,
            p.len(),
            q.len()
        )));
    }
    let mut total = 0.0;
    for (i, &pi) in p.probs.iter().enumerate() {
        if pi == 0.0 {
            continue;
        }
        let row = &game.payoff[i];
        let mut acc = 0.0;
        for (j, &qj) in q.probs.iter().enumerate() {
            acc += row[j] * qj;
        }
        total += pi * acc;
    }
    Ok(total)
}

/// Exact gradient of `mixed_payoff(game, softmax(logits), q)` with respect to
/// the logits, via the softmax chain rule:
/// `grad_i = p_i * ((M q)_i - p^T M q)`.
pub fn payoff_gradient(game: &GameSpec, policy: &PolicyParams, q: &MixedStrategy) -> Result<Vec<f64>> {
    if policy.len() != game.k || q.len() != game.k {
        return Err(Error::invalid("dimension mismatch in payoff_gradient"));
    }
    let p = policy_to_mixed(policy)?;
    let mq = mat_vec(game, q);
    let value: f64 = p.probs.iter().zip(&mq).map(|(pi, mi)| pi * mi).sum();
    Ok(p.probs
        .iter()
        .zip(&mq)
        .map(|(&pi, &mi)| pi * (mi - value))
        .collect())
}

/// `(M q)_i` for every pure strategy `i`: the payoff of pure `i` against `q`.
pub fn mat_vec(game: &GameSpec, q: &MixedStrategy) -> Vec<f64> {
    game.payoff
        .iter()
        .map(|row| row.iter().zip(&q.probs).map(|(m, qj)| m * qj).sum())
        .collect()
}

/// Cyclic rock-paper-scissors family over `k` (odd, >= 3) strategies.
///
/// Strategy `j` beats strategy `i` when `(j - i) mod k` lies in
/// `[1, (k-1)/2]`; each strategy beats exactly `(k-1)/2` others.
pub fn make_rps(k: usize) -> Result<GameSpec> {
    if k < 3 || k % 2 == 0 {
        return Err(Error::invalid(format!(
            "cyclic game needs odd k >= 3, got {k}"
        )));
    }
    let half = (k - 1) / 2;
    let mut payoff = vec![vec![0.0; k]; k];
    for i in 0..k {
        for j in 0..k {
            if i == j {
                continue;
            }
            let d = (j + k - i) % k;
            payoff[i][j] = if d <= half { -1.0 } else { 1.0 };
        }
    }
    GameSpec::from_matrix(format!("rps_{k}"), payoff)
}

/// Colonel Blotto: allocate `soldiers` across `fields`; payoff is the margin
/// of majority fields as a fraction of all fields. Pure strategies are all
/// ordered compositions, capped at [`BLOTTO_STRATEGY_CAP`].
pub fn make_blotto(soldiers: u32, fields: u32) -> Result<GameSpec> {
    make_blotto_capped(soldiers, fields, BLOTTO_STRATEGY_CAP)
}

pub fn make_blotto_capped(soldiers: u32, fields: u32, cap: usize) -> Result<GameSpec> {
    if soldiers < 1 || fields < 2 {
        return Err(Error::invalid(
            "blotto needs soldiers >= 1 and fields >= 2",
        ));
    }
    let allocations = compositions(soldiers, fields, cap)?;
    let k = allocations.len();
    let mut payoff = vec![vec![0.0; k]; k];
    for i in 0..k {
        for j in (i + 1)..k {
            let mut margin: i32 = 0;
            for f in 0..fields as usize {
                if allocations[i][f] > allocations[j][f] {
                    margin += 1;
                } else if allocations[i][f] < allocations[j][f] {
                    margin -= 1;
                }
            }
            let v = margin as f64 / fields as f64;
            payoff[i][j] = v;
            payoff[j][i] = -v;
        }
    }
    let bd_map = allocations
        .iter()
        .map(|alloc| {
            alloc
                .iter()
                .map(|&a| a as f64 / soldiers as f64)
                .collect()
        })
        .collect();
    let mut game = GameSpec::from_matrix(format!("blotto_{soldiers}_{fields}"), payoff)?;
    game.bd_map = bd_map;
    Ok(game)
}

/// All ordered compositions of `total` into `parts` nonnegative parts, in
/// lexicographic order. Errors if the count would exceed `cap`.
fn compositions(total: u32, parts: u32, cap: usize) -> Result<Vec<Vec<u32>>> {
    let mut out = Vec::new();
    let mut current = vec![0u32; parts as usize];
    fn recurse(
        remaining: u32,
        idx: usize,
        current: &mut Vec<u32>,
        out: &mut Vec<Vec<u32>>,
        cap: usize,
    ) -> Result<()> {
        if idx == current.len() - 1 {
            current[idx] = remaining;
            if out.len() >= cap {
                return Err(Error::Capacity(format!(
                    "blotto enumeration exceeds cap of {cap} strategies"
                )));
            }
            out.push(current.clone());
            return Ok(());
        }
        for v in 0..=remaining {
            current[idx] = v;
            recurse(remaining - v, idx + 1, current, out, cap)?;
        }
        Ok(())
    }
    recurse(total, 0, &mut current, &mut out, cap)?;
    Ok(out)
}

/// Random antisymmetric game: upper triangle uniform in `[-1, 1]` from the
/// seeded generator, lower triangle the exact negation.
pub fn make_random_antisymmetric(k: usize, seed: u64) -> Result<GameSpec> {
    if k < 2 {
        return Err(Error::invalid("random game needs k >= 2"));
    }
    let mut rng: ChaCha8Rng = crate::rng::from_key(seed);
    let mut payoff = vec![vec![0.0; k]; k];
    for i in 0..k {
        for j in (i + 1)..k {
            let v: f64 = rng.gen_range(-1.0..=1.0);
            payoff[i][j] = v;
            payoff[j][i] = -v;
        }
    }
    GameSpec::from_matrix(format!("rand_{k}_{seed}"), payoff)
}
