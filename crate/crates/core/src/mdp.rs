//! Finite discounted MDPs, the generative model, and exact solvers.
//!
//! State-action pairs use the flat index `s * A + a`. Values are normalized
//! by `(1 - γ)`, so every policy's value lies in `[0, 1]`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::rng::{self, RandomStream};

const ROW_SUM_TOL: f64 = 1e-12;

/// Hard cap on the number of deterministic policies [`brute_force_optimal`]
/// will enumerate.
pub const ENUMERATION_LIMIT: usize = 1_000_000;

/// One failed invariant, with the offending location.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub field: String,
    pub index: Option<usize>,
    pub message: String,
}

impl Violation {
    pub fn new(field: impl Into<String>, index: Option<usize>, message: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            index,
            message: message.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.index {
            Some(i) => write!(f, "{}[{}]: {}", self.field, i, self.message),
            None => write!(f, "{}: {}", self.field, self.message),
        }
    }
}

#[derive(Clone, Debug)]
pub struct TabularMdp {
    num_states: usize,
    num_actions: usize,
    /// `(S·A) × S`, row-major.
    transition: Vec<f64>,
    reward: Vec<f64>,
    initial: Vec<f64>,
    gamma: f64,
    transition_cdf: Vec<f64>,
    initial_cdf: Vec<f64>,
}

impl TabularMdp {
    /// Builds and validates an MDP.
    pub fn new(
        num_states: usize,
        num_actions: usize,
        transition: Vec<f64>,
        reward: Vec<f64>,
        initial: Vec<f64>,
        gamma: f64,
    ) -> Result<Self> {
        let mdp = Self::new_unchecked(num_states, num_actions, transition, reward, initial, gamma)?;
        let violations = mdp.validate();
        if violations.is_empty() {
            Ok(mdp)
        } else {
            Err(Error::InvalidMdp(violations))
        }
    }

    /// Checks only array shapes, so that a malformed model can still be
    /// inspected with [`TabularMdp::validate`].
    pub fn new_unchecked(
        num_states: usize,
        num_actions: usize,
        transition: Vec<f64>,
        reward: Vec<f64>,
        initial: Vec<f64>,
        gamma: f64,
    ) -> Result<Self> {
        let sa = num_states * num_actions;
        if num_states == 0 || num_actions == 0 {
            return Err(Error::Dimension("num_states and num_actions must be positive".into()));
        }
        if transition.len() != sa * num_states {
            return Err(Error::Dimension(format!(
                "transition has {} entries, expected {}",
                transition.len(),
                sa * num_states
            )));
        }
        if reward.len() != sa {
            return Err(Error::Dimension(format!("reward has {} entries, expected {sa}", reward.len())));
        }
        if initial.len() != num_states {
            return Err(Error::Dimension(format!(
                "initial has {} entries, expected {num_states}",
                initial.len()
            )));
        }
        let transition_cdf = transition
            .chunks(num_states)
            .flat_map(rng::cumulative)
            .collect();
        let initial_cdf = rng::cumulative(&initial);
        Ok(Self {
            num_states,
            num_actions,
            transition,
            reward,
            initial,
            gamma,
            transition_cdf,
            initial_cdf,
        })
    }

    /// Every invariant violation, with its location. Empty when valid.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let s_count = self.num_states;
        for (row_idx, row) in self.transition.chunks(s_count).enumerate() {
            if let Some(j) = row.iter().position(|&q| !(q >= 0.0) || !q.is_finite()) {
                out.push(Violation::new(
                    "transition",
                    Some(row_idx),
                    format!("entry {j} is {} (must be finite and >= 0)", row[j]),
                ));
            }
            let sum: f64 = row.iter().sum();
            if !((sum - 1.0).abs() <= ROW_SUM_TOL) {
                out.push(Violation::new(
                    "transition",
                    Some(row_idx),
                    format!("row sums to {sum} (state {}, action {})", row_idx / self.num_actions, row_idx % self.num_actions),
                ));
            }
        }
        for (i, &r) in self.reward.iter().enumerate() {
            if !(0.0..=1.0).contains(&r) {
                out.push(Violation::new("reward", Some(i), format!("{r} outside [0, 1]")));
            }
        }
        for (i, &p) in self.initial.iter().enumerate() {
            if !(p >= 0.0) || !p.is_finite() {
                out.push(Violation::new("initial", Some(i), format!("{p} is negative or non-finite")));
            }
        }
        let total: f64 = self.initial.iter().sum();
        if !((total - 1.0).abs() <= ROW_SUM_TOL) {
            out.push(Violation::new("initial", None, format!("sums to {total}")));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            out.push(Violation::new("gamma", None, format!("{} outside [0, 1)", self.gamma)));
        }
        out
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn num_pairs(&self) -> usize {
        self.num_states * self.num_actions
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// `1 / (1 - γ)`.
    pub fn kappa(&self) -> f64 {
        1.0 / (1.0 - self.gamma)
    }

    pub fn index(&self, s: usize, a: usize) -> usize {
        s * self.num_actions + a
    }

    pub fn transition(&self) -> &[f64] {
        &self.transition
    }

    /// `P(·|s,a)` for flat pair index `i`.
    pub fn transition_row(&self, i: usize) -> &[f64] {
        &self.transition[i * self.num_states..(i + 1) * self.num_states]
    }

    pub fn reward(&self) -> &[f64] {
        &self.reward
    }

    pub fn initial(&self) -> &[f64] {
        &self.initial
    }

    /// Draws `s₀ ~ p`.
    pub fn sample_initial(&self, rng: &mut RandomStream) -> usize {
        crate::rng::categorical_cdf(&self.initial_cdf, rng.uniform())
    }

    /// One generative-model query at `(s, a)`: draws `s' ~ P(·|s,a)` and
    /// reads `r(s,a)`.
    pub fn sample_transition(&self, s: usize, a: usize, rng: &mut RandomStream) -> Result<TransitionSample> {
        if s >= self.num_states {
            return Err(Error::IndexOutOfRange { what: "state", index: s, limit: self.num_states });
        }
        if a >= self.num_actions {
            return Err(Error::IndexOutOfRange { what: "action", index: a, limit: self.num_actions });
        }
        let i = self.index(s, a);
        Ok(TransitionSample {
            state: s,
            action: a,
            next_state: self.sample_next(i, rng),
            reward_value: self.reward[i],
        })
    }

    /// `s' ~ P(·|pair)` for an already range-checked flat index.
    pub(crate) fn sample_next(&self, pair: usize, rng: &mut RandomStream) -> usize {
        let n = self.num_states;
        crate::rng::categorical_cdf(&self.transition_cdf[pair * n..(pair + 1) * n], rng.uniform())
    }

    fn check_policy(&self, pi: &Policy) -> Result<()> {
        if pi.num_states() != self.num_states || pi.num_actions() != self.num_actions {
            return Err(Error::Dimension(format!(
                "policy is {}x{}, MDP is {}x{}",
                pi.num_states(),
                pi.num_actions(),
                self.num_states,
                self.num_actions
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TransitionSample {
    pub state: usize,
    pub action: usize,
    pub next_state: usize,
    pub reward_value: f64,
}

impl PartialEq for TabularMdp {
    fn eq(&self, other: &Self) -> bool {
        self.num_states == other.num_states
            && self.num_actions == other.num_actions
            && self.transition == other.transition
            && self.reward == other.reward
            && self.initial == other.initial
            && self.gamma == other.gamma
    }
}

/// Conditional action distribution `π(a|s)`, stored row-major `S × A`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Policy {
    num_states: usize,
    num_actions: usize,
    probs: Vec<f64>,
}

impl Policy {
    pub fn new(num_states: usize, num_actions: usize, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != num_states * num_actions {
            return Err(Error::Dimension(format!(
                "policy has {} entries, expected {}",
                probs.len(),
                num_states * num_actions
            )));
        }
        let pi = Self { num_states, num_actions, probs };
        for s in 0..num_states {
            let row = pi.row(s);
            let sum: f64 = row.iter().sum();
            if row.iter().any(|&q| !(q >= 0.0)) || (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::InvalidArgument(format!("policy row {s} is not a distribution")));
            }
        }
        Ok(pi)
    }

    pub fn uniform(num_states: usize, num_actions: usize) -> Self {
        Self {
            num_states,
            num_actions,
            probs: vec![1.0 / num_actions as f64; num_states * num_actions],
        }
    }

    /// Deterministic policy taking `actions[s]` in state `s`.
    pub fn deterministic(num_actions: usize, actions: &[usize]) -> Self {
        let mut probs = vec![0.0; actions.len() * num_actions];
        for (s, &a) in actions.iter().enumerate() {
            probs[s * num_actions + a] = 1.0;
        }
        Self { num_states: actions.len(), num_actions, probs }
    }

    pub(crate) fn from_rows_unchecked(num_states: usize, num_actions: usize, probs: Vec<f64>) -> Self {
        Self { num_states, num_actions, probs }
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.probs[s * self.num_actions..(s + 1) * self.num_actions]
    }

    pub fn prob(&self, s: usize, a: usize) -> f64 {
        self.probs[s * self.num_actions + a]
    }
}

/// `(P_π, r_π)`: the state chain and per-state reward of running `pi`.
pub fn policy_matrices(mdp: &TabularMdp, pi: &Policy) -> Result<(Vec<f64>, Vec<f64>)> {
    mdp.check_policy(pi)?;
    let n = mdp.num_states();
    let mut p_pi = vec![0.0; n * n];
    let mut r_pi = vec![0.0; n];
    for s in 0..n {
        for a in 0..mdp.num_actions() {
            let w = pi.prob(s, a);
            if w == 0.0 {
                continue;
            }
            let i = mdp.index(s, a);
            r_pi[s] += w * mdp.reward[i];
            for (dst, q) in p_pi[s * n..(s + 1) * n].iter_mut().zip(mdp.transition_row(i)) {
                *dst += w * q;
            }
        }
    }
    Ok((p_pi, r_pi))
}

/// Normalized value `v^π`, the solution of `v = (1-γ) r_π + γ P_π v`.
pub fn value_of_policy(mdp: &TabularMdp, pi: &Policy) -> Result<Vec<f64>> {
    let (p_pi, r_pi) = policy_matrices(mdp, pi)?;
    let g = mdp.gamma();
    let rhs: Vec<f64> = r_pi.iter().map(|r| (1.0 - g) * r).collect();
    linalg::solve_discounted(&p_pi, mdp.num_states(), g, &rhs, false)
}

/// Normalized Bellman optimality operator `(Tv)(s) = max_a (1-γ) r(s,a) + γ P(·|s,a)·v`,
/// with the greedy action (lowest index on ties).
pub fn bellman_backup(mdp: &TabularMdp, v: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let g = mdp.gamma();
    let mut out = vec![f64::NEG_INFINITY; mdp.num_states()];
    let mut greedy = vec![0; mdp.num_states()];
    for s in 0..mdp.num_states() {
        for a in 0..mdp.num_actions() {
            let i = mdp.index(s, a);
            let q = (1.0 - g) * mdp.reward[i] + g * linalg::dot(mdp.transition_row(i), v);
            if q > out[s] {
                out[s] = q;
                greedy[s] = a;
            }
        }
    }
    (out, greedy)
}

/// Value iteration on the normalized operator. Stops once successive
/// iterates differ by at most `tol * (1-γ) / γ`, which bounds the Bellman
/// residual of the returned vector by `tol`.
pub fn optimal_value_and_policy(mdp: &TabularMdp, tol: f64) -> Result<(Vec<f64>, Policy)> {
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tolerance must be positive, got {tol}")));
    }
    let g = mdp.gamma();
    let step_tol = if g == 0.0 { f64::INFINITY } else { tol * (1.0 - g) / g };
    let mut v = vec![0.0; mdp.num_states()];
    loop {
        let (next, _) = bellman_backup(mdp, &v);
        let diff = linalg::max_abs_diff(&next, &v);
        v = next;
        if diff <= step_tol {
            break;
        }
    }
    let (_, greedy) = bellman_backup(mdp, &v);
    Ok((v, Policy::deterministic(mdp.num_actions(), &greedy)))
}

/// Discounted state distribution `d^π`, solving `d = (1-γ) p + γ P_πᵀ d`.
pub fn stationary_state_distribution(mdp: &TabularMdp, pi: &Policy) -> Result<Vec<f64>> {
    let (p_pi, _) = policy_matrices(mdp, pi)?;
    let g = mdp.gamma();
    let rhs: Vec<f64> = mdp.initial.iter().map(|p| (1.0 - g) * p).collect();
    let mut d = linalg::solve_discounted(&p_pi, mdp.num_states(), g, &rhs, true)?;
    for x in d.iter_mut() {
        if *x < 0.0 {
            // roundoff only: the exact solution is a nonnegative series
            *x = 0.0;
        }
    }
    Ok(d)
}

/// Occupancy measure `μ^π(s,a) = d^π(s) π(a|s)`.
pub fn occupancy_of_policy(mdp: &TabularMdp, pi: &Policy) -> Result<Vec<f64>> {
    let d = stationary_state_distribution(mdp, pi)?;
    let mut mu = vec![0.0; mdp.num_pairs()];
    for s in 0..mdp.num_states() {
        for a in 0..mdp.num_actions() {
            mu[mdp.index(s, a)] = d[s] * pi.prob(s, a);
        }
    }
    Ok(mu)
}

/// Flow constraint residual `‖(1-γ)p + γPᵀμ - Eᵀμ‖∞`.
pub fn flow_residual(mdp: &TabularMdp, mu: &[f64]) -> f64 {
    let g = mdp.gamma();
    let mut lhs: Vec<f64> = mdp.initial.iter().map(|p| (1.0 - g) * p).collect();
    for (i, &m) in mu.iter().enumerate() {
        if m == 0.0 {
            continue;
        }
        let s = i / mdp.num_actions();
        lhs[s] -= m;
        for (dst, q) in lhs.iter_mut().zip(mdp.transition_row(i)) {
            *dst += g * m * q;
        }
    }
    lhs.iter().fold(0.0, |acc, x| acc.max(x.abs()))
}

/// Exhaustive search over deterministic policies, in lexicographic order of
/// `(a_0, ..., a_{S-1})`; the first maximizer of `pᵀ v^π` wins ties.
pub fn brute_force_optimal(mdp: &TabularMdp) -> Result<(Vec<f64>, Policy)> {
    let count = (mdp.num_actions() as f64).powi(mdp.num_states() as i32);
    if count > ENUMERATION_LIMIT as f64 {
        return Err(Error::GuardExceeded { count, limit: ENUMERATION_LIMIT });
    }
    let n = mdp.num_states();
    let mut actions = vec![0usize; n];
    let mut best: Option<(f64, Vec<f64>, Vec<usize>)> = None;
    loop {
        let pi = Policy::deterministic(mdp.num_actions(), &actions);
        let v = value_of_policy(mdp, &pi)?;
        let score = linalg::dot(mdp.initial(), &v);
        let better = match &best {
            None => true,
            Some((b, _, _)) => score > b + 1e-13,
        };
        if better {
            best = Some((score, v, actions.clone()));
        }
        // odometer with the last state varying fastest
        let mut k = n;
        loop {
            if k == 0 {
                let (_, v, acts) = best.expect("at least one policy enumerated");
                return Ok((v, Policy::deterministic(mdp.num_actions(), &acts)));
            }
            k -= 1;
            actions[k] += 1;
            if actions[k] < mdp.num_actions() {
                break;
            }
            actions[k] = 0;
        }
    }
}
