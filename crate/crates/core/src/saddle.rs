//! The Lagrangian game between value vectors and occupancy measures.
//!
//! For `x = (v, μ)` with `v ∈ V = {0 ≤ v, ‖v‖∞ ≤ 1}` and `μ` on the
//! state-action simplex:
//!
//! * advantage `a_v = r + (γP - E) v / (1-γ)`
//! * balance `b_μ = p + (γP - E)ᵀ μ / (1-γ)`
//! * Lagrangian `L(v, μ) = pᵀv + μᵀa_v`
//! * bifunction `F(x, x') = L(v', μ) - L(v, μ')`, skew-symmetric
//! * relative residual `r_ep(x; x') = -F(x, x')`
//!
//! `E` maps a state-action pair to its state. The functions taking a
//! [`PrimalDualPoint`] assume its shapes match the MDP and panic otherwise;
//! [`advantage`] and [`balance`] check shapes and return an error.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, max_abs_diff};
use crate::mdp::{self, Policy, TabularMdp};

/// Rows whose total mass falls below this get a uniform action distribution.
pub const ZERO_MASS: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrimalDualPoint {
    pub v: Vec<f64>,
    pub mu: Vec<f64>,
}

impl PrimalDualPoint {
    pub fn new(v: Vec<f64>, mu: Vec<f64>) -> Self {
        Self { v, mu }
    }

    /// Midpoint value `0.5·1` with the uniform occupancy.
    pub fn initial(mdp: &TabularMdp) -> Self {
        Self {
            v: vec![0.5; mdp.num_states()],
            mu: vec![1.0 / mdp.num_pairs() as f64; mdp.num_pairs()],
        }
    }

    /// Violations of `x ∈ V × M` at tolerance `tol`.
    pub fn domain_violations(&self, mdp: &TabularMdp, tol: f64) -> Vec<mdp::Violation> {
        let mut out = Vec::new();
        if self.v.len() != mdp.num_states() || self.mu.len() != mdp.num_pairs() {
            out.push(mdp::Violation::new("point", None, "shape does not match the MDP"));
            return out;
        }
        for (i, &x) in self.v.iter().enumerate() {
            if !(x >= -tol && x <= 1.0 + tol) {
                out.push(mdp::Violation::new("v", Some(i), format!("{x} outside [0, 1]")));
            }
        }
        for (i, &m) in self.mu.iter().enumerate() {
            if !(m >= -tol) {
                out.push(mdp::Violation::new("mu", Some(i), format!("{m} is negative")));
            }
        }
        let total: f64 = self.mu.iter().sum();
        if !((total - 1.0).abs() <= tol) {
            out.push(mdp::Violation::new("mu", None, format!("sums to {total}")));
        }
        out
    }

    fn check_shape(&self, mdp: &TabularMdp) {
        assert_eq!(self.v.len(), mdp.num_states(), "value vector length");
        assert_eq!(self.mu.len(), mdp.num_pairs(), "occupancy length");
    }
}

/// `a_v(s,a) = r(s,a) + (γ Σ_{s'} P(s'|s,a) v(s') - v(s)) / (1-γ)`.
pub fn advantage(mdp: &TabularMdp, v: &[f64]) -> Result<Vec<f64>> {
    if v.len() != mdp.num_states() {
        return Err(Error::Dimension(format!(
            "value vector has {} entries, expected {}",
            v.len(),
            mdp.num_states()
        )));
    }
    Ok(advantage_of(mdp, v))
}

pub(crate) fn advantage_of(mdp: &TabularMdp, v: &[f64]) -> Vec<f64> {
    let g = mdp.gamma();
    let k = mdp.kappa();
    let na = mdp.num_actions();
    (0..mdp.num_pairs())
        .map(|i| mdp.reward()[i] + k * (g * dot(mdp.transition_row(i), v) - v[i / na]))
        .collect()
}

/// `b_μ = p + (γPᵀμ - Eᵀμ) / (1-γ)`.
pub fn balance(mdp: &TabularMdp, mu: &[f64]) -> Result<Vec<f64>> {
    if mu.len() != mdp.num_pairs() {
        return Err(Error::Dimension(format!(
            "occupancy has {} entries, expected {}",
            mu.len(),
            mdp.num_pairs()
        )));
    }
    Ok(balance_of(mdp, mu))
}

pub(crate) fn balance_of(mdp: &TabularMdp, mu: &[f64]) -> Vec<f64> {
    let g = mdp.gamma();
    let k = mdp.kappa();
    let na = mdp.num_actions();
    let mut flow = vec![0.0; mdp.num_states()];
    for (i, &m) in mu.iter().enumerate() {
        if m == 0.0 {
            continue;
        }
        flow[i / na] -= m;
        for (f, q) in flow.iter_mut().zip(mdp.transition_row(i)) {
            *f += g * m * q;
        }
    }
    mdp.initial()
        .iter()
        .zip(&flow)
        .map(|(p, f)| p + k * f)
        .collect()
}

/// `L(v, μ) = pᵀv + μᵀa_v`.
pub fn lagrangian(mdp: &TabularMdp, x: &PrimalDualPoint) -> f64 {
    x.check_shape(mdp);
    dot(mdp.initial(), &x.v) + dot(&x.mu, &advantage_of(mdp, &x.v))
}

fn lagrangian_parts(mdp: &TabularMdp, v: &[f64], mu: &[f64]) -> f64 {
    dot(mdp.initial(), v) + dot(mu, &advantage_of(mdp, v))
}

/// `F(x, x') = L(v', μ) - L(v, μ')`.
pub fn bifunction(mdp: &TabularMdp, x: &PrimalDualPoint, x2: &PrimalDualPoint) -> f64 {
    x.check_shape(mdp);
    x2.check_shape(mdp);
    lagrangian_parts(mdp, &x2.v, &x.mu) - lagrangian_parts(mdp, &x.v, &x2.mu)
}

/// Online loss of round `n`: `l_n(x) = F(x_n, x)`.
pub fn per_round_loss(mdp: &TabularMdp, x: &PrimalDualPoint, x_n: &PrimalDualPoint) -> f64 {
    bifunction(mdp, x_n, x)
}

/// `∇l_n = (b_{μ_n}, -a_{v_n})`; `l_n` is linear in `x` up to a constant.
pub fn per_round_loss_gradient(mdp: &TabularMdp, x_n: &PrimalDualPoint) -> (Vec<f64>, Vec<f64>) {
    x_n.check_shape(mdp);
    let a = advantage_of(mdp, &x_n.v);
    (balance_of(mdp, &x_n.mu), a.into_iter().map(|x| -x).collect())
}

/// `h_n(x) = b_{μ_n}ᵀv + μᵀ(κ1 - a_{v_n})` with `κ = 1/(1-γ)`.
pub fn shifted_loss(mdp: &TabularMdp, x: &PrimalDualPoint, x_n: &PrimalDualPoint) -> f64 {
    x.check_shape(mdp);
    let (gv, gmu) = shifted_loss_gradient(mdp, x_n);
    dot(&gv, &x.v) + dot(&gmu, &x.mu)
}

/// `∇h_n = (b_{μ_n}, κ1 - a_{v_n})`. The occupancy block is nonnegative
/// whenever `v_n ∈ V`.
pub fn shifted_loss_gradient(mdp: &TabularMdp, x_n: &PrimalDualPoint) -> (Vec<f64>, Vec<f64>) {
    x_n.check_shape(mdp);
    let k = mdp.kappa();
    let gmu = advantage_of(mdp, &x_n.v).into_iter().map(|a| k - a).collect();
    (balance_of(mdp, &x_n.mu), gmu)
}

/// `π_μ(a|s) ∝ μ(s,a)`; states with total mass below [`ZERO_MASS`] get the
/// uniform row.
pub fn policy_from_occupancy(mu: &[f64], num_states: usize, num_actions: usize) -> Policy {
    assert_eq!(mu.len(), num_states * num_actions, "occupancy length");
    let mut probs = Vec::with_capacity(mu.len());
    for row in mu.chunks(num_actions) {
        let total: f64 = row.iter().sum();
        if total < ZERO_MASS {
            probs.extend(std::iter::repeat(1.0 / num_actions as f64).take(num_actions));
        } else {
            probs.extend(row.iter().map(|m| m.max(0.0) / total));
        }
    }
    Policy::from_rows_unchecked(num_states, num_actions, probs)
}

/// `r_ep(x; x') = -F(x, x')`.
pub fn relative_residual(mdp: &TabularMdp, x: &PrimalDualPoint, x2: &PrimalDualPoint) -> f64 {
    -bifunction(mdp, x, x2)
}

/// `r_ep(x) = max_{x' ∈ X} r_ep(x; x')` in closed form.
///
/// `r_ep(x; x') = L(v, μ') - μᵀr - b_μᵀv'`, so the maximum puts `μ'` on the
/// largest advantage and sets `v'(s) = 1` exactly where `b_μ(s) < 0`.
/// Diagnostic only; the solver never needs it.
pub fn max_residual(mdp: &TabularMdp, x: &PrimalDualPoint) -> f64 {
    x.check_shape(mdp);
    let a = advantage_of(mdp, &x.v);
    let b = balance_of(mdp, &x.mu);
    let best_a = a.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    dot(mdp.initial(), &x.v) + best_a - dot(&x.mu, mdp.reward()) - b.iter().map(|x| x.min(0.0)).sum::<f64>()
}

/// Exact optimal quantities of one MDP: value iteration picks `π*`, and
/// `v*`, `μ*` are then evaluated exactly for that policy.
#[derive(Clone, Debug)]
pub struct ExactOracle<'a> {
    mdp: &'a TabularMdp,
    pub pi_star: Policy,
    pub v_star: Vec<f64>,
    pub mu_star: Vec<f64>,
    /// `V*(p) = pᵀv*`.
    pub value_star: f64,
}

impl<'a> ExactOracle<'a> {
    pub const VALUE_ITERATION_TOL: f64 = 1e-12;

    pub fn new(mdp: &'a TabularMdp) -> Result<Self> {
        let (_, pi_star) = mdp::optimal_value_and_policy(mdp, Self::VALUE_ITERATION_TOL)?;
        Self::from_policy(mdp, pi_star)
    }

    /// Oracle built around a known optimal policy (e.g. from enumeration).
    pub fn from_policy(mdp: &'a TabularMdp, pi_star: Policy) -> Result<Self> {
        let v_star = mdp::value_of_policy(mdp, &pi_star)?;
        let mu_star = mdp::occupancy_of_policy(mdp, &pi_star)?;
        let value_star = dot(mdp.initial(), &v_star);
        Ok(Self { mdp, pi_star, v_star, mu_star, value_star })
    }

    pub fn mdp(&self) -> &'a TabularMdp {
        self.mdp
    }

    /// `x* = (v*, μ*)`.
    pub fn saddle_point(&self) -> PrimalDualPoint {
        PrimalDualPoint::new(self.v_star.clone(), self.mu_star.clone())
    }

    pub fn extract_policy(&self, mu: &[f64]) -> Policy {
        policy_from_occupancy(mu, self.mdp.num_states(), self.mdp.num_actions())
    }

    /// `v^{π_μ}` for the policy extracted from `mu`.
    pub fn value_of_extracted(&self, mu: &[f64]) -> Result<Vec<f64>> {
        mdp::value_of_policy(self.mdp, &self.extract_policy(mu))
    }

    /// `V*(p) - V^{π_μ}(p)`.
    pub fn policy_gap(&self, mu: &[f64]) -> Result<f64> {
        Ok(self.value_star - dot(self.mdp.initial(), &self.value_of_extracted(mu)?))
    }

    /// Comparator `y_x* = (v^{π_μ}, μ*)`.
    pub fn clever_comparator(&self, x: &PrimalDualPoint) -> Result<PrimalDualPoint> {
        Ok(PrimalDualPoint::new(self.value_of_extracted(&x.mu)?, self.mu_star.clone()))
    }

    /// Performance gap of `π_μ` next to the residual at `y_x*`, which are
    /// equal as an identity.
    pub fn gap_certificate(&self, x: &PrimalDualPoint) -> Result<GapCertificate> {
        let v_pi = self.value_of_extracted(&x.mu)?;
        let gap = self.value_star - dot(self.mdp.initial(), &v_pi);
        let y = PrimalDualPoint::new(v_pi, self.mu_star.clone());
        let residual = relative_residual(self.mdp, x, &y);
        Ok(GapCertificate {
            gap,
            residual_at_clever_comparator: residual,
            mismatch: (gap - residual).abs(),
        })
    }

    /// The lower bound `r_ep(x; x*) ≥ (1-γ) min_s p(s) ‖v* - v^{π_μ}‖∞`,
    /// valid when `Eᵀμ ≥ (1-γ)p`. `None` when that condition fails.
    pub fn classic_residual_check(&self, x: &PrimalDualPoint) -> Result<Option<ClassicResidualCheck>> {
        let mdp = self.mdp;
        let g = mdp.gamma();
        let na = mdp.num_actions();
        let feasible = (0..mdp.num_states()).all(|s| {
            let mass: f64 = x.mu[s * na..(s + 1) * na].iter().sum();
            mass >= (1.0 - g) * mdp.initial()[s] - 1e-12
        });
        if !feasible {
            return Ok(None);
        }
        let lhs = relative_residual(mdp, x, &self.saddle_point());
        let v_pi = self.value_of_extracted(&x.mu)?;
        let p_min = mdp.initial().iter().copied().fold(f64::INFINITY, f64::min);
        let rhs = (1.0 - g) * p_min * max_abs_diff(&self.v_star, &v_pi);
        Ok(Some(ClassicResidualCheck { lhs, rhs }))
    }

    /// Bound on the bias of restricting comparators to `candidates`:
    /// `min_θ ‖μ_θ - μ*‖₁/(1-γ) + 2‖v_θ - v^{π̂}‖∞/(1-γ)`, reported next to
    /// the exact bias `r_ep(x̂; y*) - max_θ r_ep(x̂; x_θ)`.
    pub fn approximation_bias_bound(
        &self,
        x_hat: &PrimalDualPoint,
        candidates: &[PrimalDualPoint],
    ) -> Result<BiasBound> {
        if candidates.is_empty() {
            return Err(Error::InvalidArgument("empty candidate list".into()));
        }
        let k = self.mdp.kappa();
        let y_star = self.clever_comparator(x_hat)?;
        let mut bound = f64::INFINITY;
        let mut best_residual = f64::NEG_INFINITY;
        for c in candidates {
            let mu_term: f64 = c.mu.iter().zip(&self.mu_star).map(|(a, b)| (a - b).abs()).sum();
            let v_term = max_abs_diff(&c.v, &y_star.v);
            bound = bound.min(k * mu_term + 2.0 * k * v_term);
            best_residual = best_residual.max(relative_residual(self.mdp, x_hat, c));
        }
        let exact = relative_residual(self.mdp, x_hat, &y_star) - best_residual;
        Ok(BiasBound { bound, exact_epsilon: exact })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapCertificate {
    pub gap: f64,
    pub residual_at_clever_comparator: f64,
    pub mismatch: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClassicResidualCheck {
    pub lhs: f64,
    pub rhs: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BiasBound {
    pub bound: f64,
    pub exact_epsilon: f64,
}
