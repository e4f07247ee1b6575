//! Linearly parameterized learner.
//!
//! Values are `v = Φθ_v` and occupancies are mixtures `μ = Ψθ_μ` of fixed
//! state-action distributions (the columns of `Ψ`). Parameters live in
//! `Θ = {‖θ_v‖₂ ≤ C_v/√d_v} × simplex`, and mirror descent runs in `Θ`
//! under `B = (d_v / 2C_v²)‖Δθ_v‖² + KL(θ_μ'‖θ_μ)`. The occupancy block of
//! the gradient estimator samples a column uniformly, so its multiplier is
//! `d_μ` rather than `S·A`, and per-step work scales with `d_v + d_μ`.

use std::time::Instant;

use crate::error::{Error, Result};
use crate::io;
use crate::linalg::dot;
use crate::mdp::{Policy, TabularMdp, Violation};
use crate::rng::{self, RandomStream};
use crate::saddle::{self, ExactOracle, PrimalDualPoint, ZERO_MASS};
use crate::solver::{self, log_sum_exp, CheckpointRecord, Checkpoints, StepSize};

const PHI_TOL: f64 = 1e-12;
const PSI_TOL: f64 = 1e-10;

/// Largest `S·A` for which run outputs materialize `μ̂` and the policy.
pub const MATERIALIZE_LIMIT: usize = 1_000_000;

/// A sparse distribution over state-action pairs with its running sum.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseColumn {
    entries: Vec<(usize, f64)>,
    cdf: Vec<f64>,
}

impl SparseColumn {
    pub fn new(mut entries: Vec<(usize, f64)>) -> Self {
        entries.sort_by_key(|e| e.0);
        let weights: Vec<f64> = entries.iter().map(|e| e.1).collect();
        Self { cdf: rng::cumulative(&weights), entries }
    }

    pub fn delta(pair: usize) -> Self {
        Self::new(vec![(pair, 1.0)])
    }

    pub fn entries(&self) -> &[(usize, f64)] {
        &self.entries
    }

    /// Draws a pair from this column. A single-entry column consumes no
    /// randomness.
    pub fn sample(&self, rng: &mut RandomStream) -> usize {
        if self.entries.len() == 1 {
            return self.entries[0].0;
        }
        self.entries[crate::rng::categorical_cdf(&self.cdf, rng.uniform())].0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureBasis {
    num_states: usize,
    num_actions: usize,
    d_v: usize,
    /// `S × d_v`, row-major.
    phi: Vec<f64>,
    psi: Vec<SparseColumn>,
    /// Per state: `(column, action, weight)` for every nonzero of `Ψ` in
    /// that state's rows.
    psi_by_state: Vec<Vec<(usize, usize, f64)>>,
}

impl FeatureBasis {
    pub fn new(num_states: usize, num_actions: usize, d_v: usize, phi: Vec<f64>, psi: Vec<SparseColumn>) -> Result<Self> {
        let b = Self::new_unchecked(num_states, num_actions, d_v, phi, psi)?;
        let v = b.validate();
        if v.is_empty() {
            Ok(b)
        } else {
            Err(Error::InvalidBasis(v))
        }
    }

    /// Checks shapes only; see [`FeatureBasis::validate`].
    pub fn new_unchecked(
        num_states: usize,
        num_actions: usize,
        d_v: usize,
        phi: Vec<f64>,
        psi: Vec<SparseColumn>,
    ) -> Result<Self> {
        if d_v == 0 || psi.is_empty() {
            return Err(Error::Dimension("basis needs at least one column in each of phi and psi".into()));
        }
        if phi.len() != num_states * d_v {
            return Err(Error::Dimension(format!(
                "phi has {} entries, expected {num_states}x{d_v}",
                phi.len()
            )));
        }
        let sa = num_states * num_actions;
        let mut psi_by_state = vec![Vec::new(); num_states];
        for (k, col) in psi.iter().enumerate() {
            for &(pair, w) in col.entries() {
                if pair >= sa {
                    return Err(Error::IndexOutOfRange { what: "psi pair", index: pair, limit: sa });
                }
                psi_by_state[pair / num_actions].push((k, pair % num_actions, w));
            }
        }
        Ok(Self { num_states, num_actions, d_v, phi, psi, psi_by_state })
    }

    /// Dense `Ψ` given as `(S·A) × d_μ`, row-major.
    pub fn from_dense(num_states: usize, num_actions: usize, phi: Vec<f64>, d_v: usize, psi: &[f64], d_mu: usize) -> Result<Self> {
        let sa = num_states * num_actions;
        if d_mu == 0 || psi.len() != sa * d_mu {
            return Err(Error::Dimension(format!("psi has {} entries, expected {sa}x{d_mu}", psi.len())));
        }
        let cols = (0..d_mu)
            .map(|k| {
                SparseColumn::new((0..sa).filter(|&i| psi[i * d_mu + k] != 0.0).map(|i| (i, psi[i * d_mu + k])).collect())
            })
            .collect();
        Self::new_unchecked(num_states, num_actions, d_v, phi, cols)
    }

    /// Every violated basis constraint: `|Φ| ≤ 1` and each `Ψ` column a
    /// distribution.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        for j in 0..self.d_v {
            let worst = (0..self.num_states)
                .map(|s| self.phi[s * self.d_v + j])
                .fold(0.0f64, |m, x| if x.is_finite() { m.max(x.abs()) } else { f64::INFINITY });
            if worst > 1.0 + PHI_TOL {
                out.push(Violation::new("phi column", Some(j), format!("max |entry| = {worst} exceeds 1")));
            }
        }
        for (k, col) in self.psi.iter().enumerate() {
            if let Some(&(i, w)) = col.entries().iter().find(|e| !(e.1 >= 0.0)) {
                out.push(Violation::new("psi column", Some(k), format!("entry at pair {i} is {w}")));
            }
            let total: f64 = col.entries().iter().map(|e| e.1).sum();
            if !((total - 1.0).abs() <= PSI_TOL) {
                out.push(Violation::new("psi column", Some(k), format!("sums to {total}")));
            }
        }
        out
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn d_v(&self) -> usize {
        self.d_v
    }

    pub fn d_mu(&self) -> usize {
        self.psi.len()
    }

    pub fn phi_row(&self, s: usize) -> &[f64] {
        &self.phi[s * self.d_v..(s + 1) * self.d_v]
    }

    pub fn psi_column(&self, k: usize) -> &SparseColumn {
        &self.psi[k]
    }

    /// `π(·|s) ∝ Σ_k θ_k Ψ[(s,·), k]` without materializing `Ψθ_μ`; uniform
    /// when the state carries no mass.
    pub fn policy_row(&self, theta_mu: &[f64], s: usize) -> Vec<f64> {
        let mut row = vec![0.0; self.num_actions];
        for &(k, a, w) in &self.psi_by_state[s] {
            row[a] += theta_mu[k] * w;
        }
        let total: f64 = row.iter().sum();
        if total < ZERO_MASS {
            return vec![1.0 / self.num_actions as f64; self.num_actions];
        }
        row.iter().map(|x| x.max(0.0) / total).collect()
    }

    fn check_mdp(&self, mdp: &TabularMdp) -> Result<()> {
        if mdp.num_states() != self.num_states || mdp.num_actions() != self.num_actions {
            return Err(Error::Dimension(format!(
                "basis is for {}x{}, MDP is {}x{}",
                self.num_states,
                self.num_actions,
                mdp.num_states(),
                mdp.num_actions()
            )));
        }
        Ok(())
    }
}

/// `Φ = I_S`, `Ψ = I_{S·A}` (delta distributions).
pub fn tabular_basis(num_states: usize, num_actions: usize) -> FeatureBasis {
    let mut phi = vec![0.0; num_states * num_states];
    for s in 0..num_states {
        phi[s * num_states + s] = 1.0;
    }
    FeatureBasis::new_unchecked(num_states, num_actions, num_states, phi, tabular_columns(num_states, num_actions)).expect("identity basis shapes")
}

/// States split into `groups` contiguous blocks. `Φ` holds the block
/// indicators; `Ψ` has one column per `(block, action)`, uniform over the
/// block's states with that action.
pub fn state_aggregation_basis(num_states: usize, num_actions: usize, groups: usize) -> Result<FeatureBasis> {
    let psi = aggregation_columns(num_states, num_actions, groups)?;
    let mut phi = vec![0.0; num_states * groups];
    for s in 0..num_states {
        phi[s * groups + s * groups / num_states] = 1.0;
    }
    FeatureBasis::new(num_states, num_actions, groups, phi, psi)
}

/// The `Ψ` columns of [`tabular_basis`].
pub fn tabular_columns(num_states: usize, num_actions: usize) -> Vec<SparseColumn> {
    (0..num_states * num_actions).map(SparseColumn::delta).collect()
}

/// The `Ψ` columns of [`state_aggregation_basis`].
pub fn aggregation_columns(num_states: usize, num_actions: usize, groups: usize) -> Result<Vec<SparseColumn>> {
    if groups == 0 || groups > num_states {
        return Err(Error::InvalidArgument(format!("group count {groups} outside 1..={num_states}")));
    }
    let mut members = vec![Vec::new(); groups];
    for s in 0..num_states {
        members[s * groups / num_states].push(s);
    }
    let mut psi = Vec::with_capacity(groups * num_actions);
    for group in &members {
        let w = 1.0 / group.len() as f64;
        for a in 0..num_actions {
            psi.push(SparseColumn::new(group.iter().map(|&s| (s * num_actions + a, w)).collect()));
        }
    }
    Ok(psi)
}

/// `"tabular"`, `"state-aggregation:k"`, or a basis file path.
pub fn resolve_basis(spec: &str, mdp: &TabularMdp) -> Result<FeatureBasis> {
    let (ns, na) = (mdp.num_states(), mdp.num_actions());
    let basis = if spec == "tabular" {
        tabular_basis(ns, na)
    } else if let Some(k) = spec.strip_prefix("state-aggregation:") {
        let k = k.parse().map_err(|_| Error::Parse(format!("bad group count in {spec:?}")))?;
        state_aggregation_basis(ns, na, k)?
    } else {
        io::load_basis(spec, ns, na)?
    };
    basis.check_mdp(mdp)?;
    Ok(basis)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ThetaPoint {
    pub theta_v: Vec<f64>,
    pub theta_mu: Vec<f64>,
}

impl ThetaPoint {
    /// `θ_v = 0`, `θ_μ` uniform.
    pub fn initial(basis: &FeatureBasis) -> Self {
        Self {
            theta_v: vec![0.0; basis.d_v()],
            theta_mu: vec![1.0 / basis.d_mu() as f64; basis.d_mu()],
        }
    }

    pub fn violations(&self, basis: &FeatureBasis, c_v: f64) -> Vec<Violation> {
        let mut out = Vec::new();
        if self.theta_v.len() != basis.d_v() || self.theta_mu.len() != basis.d_mu() {
            out.push(Violation::new("theta", None, "shape does not match the basis"));
            return out;
        }
        let radius = c_v / (basis.d_v() as f64).sqrt();
        let norm = dot(&self.theta_v, &self.theta_v).sqrt();
        if norm > radius + 1e-12 {
            out.push(Violation::new("theta_v", None, format!("norm {norm} exceeds {radius}")));
        }
        if self.theta_mu.iter().any(|&t| !(t >= 0.0)) {
            out.push(Violation::new("theta_mu", None, "negative weight"));
        }
        let total: f64 = self.theta_mu.iter().sum();
        if (total - 1.0).abs() > PSI_TOL {
            out.push(Violation::new("theta_mu", None, format!("sums to {total}")));
        }
        out
    }
}

/// `(Φθ_v, Ψθ_μ)`. `Ψθ_μ` is a distribution; `Φθ_v` is bounded by `C_v` in
/// sup norm but need not lie in `[0, 1]`.
pub fn realize(basis: &FeatureBasis, theta: &ThetaPoint) -> Result<PrimalDualPoint> {
    if theta.theta_v.len() != basis.d_v() || theta.theta_mu.len() != basis.d_mu() {
        return Err(Error::Dimension("theta does not match the basis".into()));
    }
    let total: f64 = theta.theta_mu.iter().sum();
    if theta.theta_mu.iter().any(|&t| !(t >= 0.0)) || (total - 1.0).abs() > PSI_TOL {
        return Err(Error::InvalidArgument("theta_mu is not on the simplex".into()));
    }
    let v = (0..basis.num_states()).map(|s| value_feature_eval(basis, &theta.theta_v, s)).collect();
    Ok(PrimalDualPoint::new(v, mix_columns(basis, &theta.theta_mu)))
}

fn mix_columns(basis: &FeatureBasis, theta_mu: &[f64]) -> Vec<f64> {
    let mut mu = vec![0.0; basis.num_states() * basis.num_actions()];
    for (col, &t) in basis.psi.iter().zip(theta_mu) {
        for &(i, w) in col.entries() {
            mu[i] += t * w;
        }
    }
    mu
}

/// `v(s) = Φ[s, ·] · θ_v`.
pub fn value_feature_eval(basis: &FeatureBasis, theta_v: &[f64], s: usize) -> f64 {
    dot(basis.phi_row(s), theta_v)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ThetaGradient {
    /// Dense, length `d_v`.
    pub v: Vec<f64>,
    /// `(column, weight)`.
    pub mu_entry: (usize, f64),
}

/// Two-query estimate of `∇_θ h_n(θ_n)`.
///
/// Query 1: `s₀ ~ p`, column `j ~ θ_μ`, `(s,a) ~ Ψ[:, j]`, `s' ~ P(·|s,a)`;
/// the value block is `Φ[s₀] - Φ[s]/(1-γ) + γΦ[s']/(1-γ)`. Query 2: column
/// `k` uniform, `(s,a) ~ Ψ[:, k]`, `s' ~ P(·|s,a)`, weight
/// `d_μ (κ - r(s,a) - (γ v_n(s') - v_n(s))/(1-γ))` at `k`, with
/// `v_n = Φθ_v` evaluated pointwise.
///
/// With the tabular basis this consumes the random stream exactly like
/// [`solver::sample_gradient`].
pub fn sample_gradient_theta(
    mdp: &TabularMdp,
    basis: &FeatureBasis,
    theta: &ThetaPoint,
    rng: &mut RandomStream,
) -> ThetaGradient {
    let mut ops = 0;
    sample_gradient_counted(mdp, basis, &theta.theta_v, &theta.theta_mu, rng, &mut ops)
}

fn sample_gradient_counted(
    mdp: &TabularMdp,
    basis: &FeatureBasis,
    theta_v: &[f64],
    theta_mu: &[f64],
    rng: &mut RandomStream,
    ops: &mut u64,
) -> ThetaGradient {
    let k = mdp.kappa();
    let g = mdp.gamma();
    let na = mdp.num_actions();
    let d_v = basis.d_v();

    let s0 = mdp.sample_initial(rng);
    let column = rng.categorical(theta_mu);
    *ops += theta_mu.len() as u64;
    let pair = basis.psi[column].sample(rng);
    let next = mdp.sample_next(pair, rng);
    let mut v = vec![0.0; d_v];
    for (s, w) in [(s0, 1.0), (pair / na, -k), (next, g * k)] {
        for (dst, phi) in v.iter_mut().zip(basis.phi_row(s)) {
            *dst += w * phi;
        }
    }
    *ops += 3 * d_v as u64;

    let d_mu = basis.d_mu();
    let col = rng.index(d_mu);
    let pair = basis.psi[col].sample(rng);
    let next = mdp.sample_next(pair, rng);
    let v_next = value_feature_eval(basis, theta_v, next);
    let v_here = value_feature_eval(basis, theta_v, pair / na);
    *ops += 2 * d_v as u64;
    let weight = solver::occupancy_weight(mdp, d_mu, mdp.reward()[pair], v_next, v_here);
    *ops += 1;
    ThetaGradient { v, mu_entry: (col, weight) }
}

/// `∇_θ h_n = (Φᵀ b_{μ_n}, Ψᵀ(κ1 - a_{v_n}))` at `(v_n, μ_n) = (Φθ_v, Ψθ_μ)`.
pub fn exact_theta_gradient(mdp: &TabularMdp, basis: &FeatureBasis, theta: &ThetaPoint) -> Result<(Vec<f64>, Vec<f64>)> {
    basis.check_mdp(mdp)?;
    let x = realize(basis, theta)?;
    let (gv, gmu) = saddle::shifted_loss_gradient(mdp, &x);
    let tv = (0..basis.d_v())
        .map(|j| (0..basis.num_states()).map(|s| basis.phi_row(s)[j] * gv[s]).sum())
        .collect();
    let tmu = basis
        .psi
        .iter()
        .map(|col| col.entries().iter().map(|&(i, w)| w * gmu[i]).sum())
        .collect();
    Ok((tv, tmu))
}

/// Current parameters with `θ_μ` kept as normalized log-weights.
#[derive(Clone, Debug)]
pub struct FeatureState {
    theta_v: Vec<f64>,
    log_theta_mu: Vec<f64>,
    theta_mu: Vec<f64>,
}

impl FeatureState {
    pub fn from_theta(theta: &ThetaPoint) -> Self {
        let mut st = Self {
            theta_v: theta.theta_v.clone(),
            log_theta_mu: theta.theta_mu.iter().map(|t| t.ln()).collect(),
            theta_mu: vec![0.0; theta.theta_mu.len()],
        };
        st.renormalize();
        st
    }

    pub fn theta(&self) -> ThetaPoint {
        ThetaPoint { theta_v: self.theta_v.clone(), theta_mu: self.theta_mu.clone() }
    }

    fn step(&mut self, g: &ThetaGradient, eta: f64, c_v: f64, ops: &mut u64) {
        let d_v = self.theta_v.len() as f64;
        let scale = eta * c_v * c_v / d_v;
        for (t, gi) in self.theta_v.iter_mut().zip(&g.v) {
            *t -= scale * gi;
        }
        let radius = c_v / d_v.sqrt();
        let norm = dot(&self.theta_v, &self.theta_v).sqrt();
        if norm > radius {
            let shrink = radius / norm;
            self.theta_v.iter_mut().for_each(|t| *t *= shrink);
        }
        *ops += 3 * self.theta_v.len() as u64;
        let (i, w) = g.mu_entry;
        if w != 0.0 {
            self.log_theta_mu[i] -= eta * w;
            self.renormalize();
            *ops += 2 * self.theta_mu.len() as u64;
        }
    }

    fn renormalize(&mut self) {
        let lse = log_sum_exp(&self.log_theta_mu);
        for (l, t) in self.log_theta_mu.iter_mut().zip(self.theta_mu.iter_mut()) {
            *l -= lse;
            *t = l.exp();
        }
    }
}

/// One mirror step in `Θ`: Euclidean step `η C_v²/d_v` on `θ_v` followed by
/// radial projection onto the ball of radius `C_v/√d_v`, and an
/// exponentiated-gradient step on `θ_μ`.
pub fn md_update_theta(theta: &ThetaPoint, g: &ThetaGradient, eta: f64, c_v: f64) -> ThetaPoint {
    let mut st = FeatureState::from_theta(theta);
    let mut ops = 0;
    st.step(g, eta, c_v, &mut ops);
    st.theta()
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureConfig {
    pub c_v: f64,
    pub steps: usize,
    pub step_size: StepSize,
    pub seed: u64,
    pub checkpoints: Checkpoints,
    pub eval_with_oracle: bool,
}

impl FeatureConfig {
    pub fn new(steps: usize, seed: u64, c_v: f64) -> Self {
        Self {
            c_v,
            steps,
            step_size: StepSize::Auto,
            seed,
            checkpoints: Checkpoints::PowersOfTwo,
            eval_with_oracle: true,
        }
    }

    /// `η = (1-γ) / sqrt(N (C_v² + d_μ))` for [`StepSize::Auto`].
    pub fn resolve_eta(&self, mdp: &TabularMdp, basis: &FeatureBasis) -> f64 {
        match self.step_size {
            StepSize::Fixed(eta) => eta,
            StepSize::Auto => {
                (1.0 - mdp.gamma()) / (self.steps as f64 * (self.c_v * self.c_v + basis.d_mu() as f64)).sqrt()
            }
        }
    }
}

#[derive(Clone, Debug)]
pub struct FeatureRunResult {
    pub eta: f64,
    pub checkpoints: Vec<CheckpointRecord>,
    /// Average of `θ_1, ..., θ_N`.
    pub theta_hat: ThetaPoint,
    /// `(Φθ̂_v, Ψθ̂_μ)` and its policy, when `S·A ≤ MATERIALIZE_LIMIT`.
    pub averaged_point: Option<PrimalDualPoint>,
    pub policy: Option<Policy>,
    pub queries: u64,
    /// Arithmetic operations spent in sampling and updates.
    pub ops: u64,
}

impl FeatureRunResult {
    pub fn final_record(&self) -> &CheckpointRecord {
        self.checkpoints.last().expect("N is always a checkpoint")
    }
}

pub fn run_features(mdp: &TabularMdp, basis: &FeatureBasis, cfg: &FeatureConfig) -> Result<FeatureRunResult> {
    run_features_with(mdp, basis, cfg, None)
}

pub fn run_features_with(
    mdp: &TabularMdp,
    basis: &FeatureBasis,
    cfg: &FeatureConfig,
    oracle: Option<&ExactOracle<'_>>,
) -> Result<FeatureRunResult> {
    basis.check_mdp(mdp)?;
    let violations = basis.validate();
    if !violations.is_empty() {
        return Err(Error::InvalidBasis(violations));
    }
    if cfg.steps == 0 {
        return Err(Error::InvalidArgument("steps must be at least 1".into()));
    }
    if !(cfg.c_v > 0.0) {
        return Err(Error::InvalidArgument(format!("C_v must be positive, got {}", cfg.c_v)));
    }
    let eta = cfg.resolve_eta(mdp, basis);
    let materialize = mdp.num_pairs() <= MATERIALIZE_LIMIT;
    let owned;
    let oracle = match oracle {
        Some(o) => Some(o),
        None if cfg.eval_with_oracle && materialize => {
            owned = ExactOracle::new(mdp)?;
            Some(&owned)
        }
        None => None,
    };

    let start = Instant::now();
    let schedule = cfg.checkpoints.resolve(cfg.steps);
    let mut next_checkpoint = schedule.iter().copied().peekable();
    let mut rng = RandomStream::new(cfg.seed);
    let mut state = FeatureState::from_theta(&ThetaPoint::initial(basis));
    let mut sum_v = vec![0.0; basis.d_v()];
    let mut sum_mu = vec![0.0; basis.d_mu()];
    let mut records = Vec::with_capacity(schedule.len());
    let mut queries = 0u64;
    let mut ops = 0u64;

    for n in 1..=cfg.steps {
        for (a, b) in sum_v.iter_mut().zip(&state.theta_v) {
            *a += b;
        }
        for (a, b) in sum_mu.iter_mut().zip(&state.theta_mu) {
            *a += b;
        }
        ops += (basis.d_v() + basis.d_mu()) as u64;
        let g = sample_gradient_counted(mdp, basis, &state.theta_v, &state.theta_mu, &mut rng, &mut ops);
        queries += 2;
        if next_checkpoint.peek() == Some(&n) {
            next_checkpoint.next();
            let (value_gap, residual_certificate) = match (cfg.eval_with_oracle, oracle) {
                (true, Some(o)) if materialize => {
                    let x = realize(basis, &average_theta(&sum_v, &sum_mu, n))?;
                    let c = o.gap_certificate(&x)?;
                    (Some(c.gap), Some(c.residual_at_clever_comparator))
                }
                _ => (None, None),
            };
            records.push(CheckpointRecord {
                n,
                value_gap,
                residual_certificate,
                wall_time_ms: start.elapsed().as_secs_f64() * 1e3,
                eta,
                queries,
            });
        }
        state.step(&g, eta, cfg.c_v, &mut ops);
    }

    let theta_hat = average_theta(&sum_v, &sum_mu, cfg.steps);
    let (averaged_point, policy) = if materialize {
        let x = realize(basis, &theta_hat)?;
        let pi = saddle::policy_from_occupancy(&x.mu, mdp.num_states(), mdp.num_actions());
        (Some(x), Some(pi))
    } else {
        (None, None)
    };
    Ok(FeatureRunResult { eta, checkpoints: records, theta_hat, averaged_point, policy, queries, ops })
}

fn average_theta(sum_v: &[f64], sum_mu: &[f64], n: usize) -> ThetaPoint {
    let total: f64 = sum_mu.iter().sum();
    ThetaPoint {
        theta_v: sum_v.iter().map(|x| x / n as f64).collect(),
        theta_mu: sum_mu.iter().map(|x| x / total).collect(),
    }
}
