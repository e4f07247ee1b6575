//! Stochastic mirror descent on `X = V × M`.
//!
//! Each round draws an unbiased sparse estimate of `∇h_n(x_n)` from two
//! generative-model queries and takes a mirror step under
//! `B(x'‖x) = ‖v' - v‖² / (2S) + KL(μ'‖μ)`. The returned policy is extracted
//! from the average of the iterates `x_1, ..., x_N`.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{Policy, TabularMdp};
use crate::rng::RandomStream;
use crate::saddle::{self, ExactOracle, PrimalDualPoint};

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "StepSizeRepr", into = "StepSizeRepr")]
pub enum StepSize {
    #[default]
    Auto,
    Fixed(f64),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum StepSizeRepr {
    Name(String),
    Value(f64),
}

impl TryFrom<StepSizeRepr> for StepSize {
    type Error = String;
    fn try_from(r: StepSizeRepr) -> std::result::Result<Self, String> {
        match r {
            StepSizeRepr::Name(s) => s.parse(),
            StepSizeRepr::Value(v) if v > 0.0 && v.is_finite() => Ok(StepSize::Fixed(v)),
            StepSizeRepr::Value(v) => Err(format!("step size must be positive, got {v}")),
        }
    }
}

impl From<StepSize> for StepSizeRepr {
    fn from(s: StepSize) -> Self {
        match s {
            StepSize::Auto => StepSizeRepr::Name("auto".into()),
            StepSize::Fixed(v) => StepSizeRepr::Value(v),
        }
    }
}

impl FromStr for StepSize {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s == "auto" {
            return Ok(StepSize::Auto);
        }
        match s.parse::<f64>() {
            Ok(v) if v > 0.0 && v.is_finite() => Ok(StepSize::Fixed(v)),
            _ => Err(format!("expected \"auto\" or a positive number, got {s:?}")),
        }
    }
}

impl fmt::Display for StepSize {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StepSize::Auto => f.write_str("auto"),
            StepSize::Fixed(v) => write!(f, "{v}"),
        }
    }
}

/// Steps at which the running average is evaluated.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub enum Checkpoints {
    /// `1, 2, 4, ...` up to `N`, plus `N`.
    #[default]
    PowersOfTwo,
    List(Vec<usize>),
}

impl Checkpoints {
    /// Sorted, deduplicated steps in `1..=n`; `n` itself is always included.
    pub fn resolve(&self, n: usize) -> Vec<usize> {
        let mut out: Vec<usize> = match self {
            Checkpoints::PowersOfTwo => std::iter::successors(Some(1usize), |k| k.checked_mul(2))
                .take_while(|&k| k <= n)
                .collect(),
            Checkpoints::List(v) => v.iter().copied().filter(|&k| k >= 1 && k <= n).collect(),
        };
        out.push(n);
        out.sort_unstable();
        out.dedup();
        out
    }
}

impl FromStr for Checkpoints {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s == "pow2" {
            return Ok(Checkpoints::PowersOfTwo);
        }
        s.split(',')
            .map(|t| t.trim().parse::<usize>().map_err(|e| format!("bad checkpoint {t:?}: {e}")))
            .collect::<std::result::Result<Vec<_>, _>>()
            .map(Checkpoints::List)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum IterateMode {
    #[default]
    Average,
    /// Output the checkpointed iterate with the smallest gap certificate.
    /// Needs the exact oracle, so it is a diagnostic only.
    BestDiagnostic,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverConfig {
    pub steps: usize,
    pub step_size: StepSize,
    pub seed: u64,
    pub checkpoints: Checkpoints,
    pub iterate_mode: IterateMode,
    pub eval_with_oracle: bool,
}

impl SolverConfig {
    pub fn new(steps: usize, seed: u64) -> Self {
        Self {
            steps,
            step_size: StepSize::Auto,
            seed,
            checkpoints: Checkpoints::PowersOfTwo,
            iterate_mode: IterateMode::Average,
            eval_with_oracle: true,
        }
    }

    /// `η = (1-γ) / sqrt(S·A·N)` for [`StepSize::Auto`].
    pub fn resolve_eta(&self, mdp: &TabularMdp) -> f64 {
        match self.step_size {
            StepSize::Fixed(eta) => eta,
            StepSize::Auto => (1.0 - mdp.gamma()) / ((mdp.num_pairs() * self.steps) as f64).sqrt(),
        }
    }
}

/// `g_n` with at most three value entries and one occupancy entry.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SparseGradient {
    v_entries: [(usize, f64); 3],
    v_len: usize,
    pub mu_entry: (usize, f64),
}

impl SparseGradient {
    pub fn new(v_entries: &[(usize, f64)], mu_entry: (usize, f64)) -> Self {
        let mut g = Self { v_entries: [(0, 0.0); 3], v_len: 0, mu_entry };
        for &(i, w) in v_entries {
            g.push_v(i, w);
        }
        g
    }

    fn push_v(&mut self, index: usize, weight: f64) {
        if let Some(e) = self.v_entries[..self.v_len].iter_mut().find(|e| e.0 == index) {
            e.1 += weight;
        } else {
            assert!(self.v_len < 3, "at most three value entries");
            self.v_entries[self.v_len] = (index, weight);
            self.v_len += 1;
        }
    }

    /// Value-block entries with coinciding indices already summed.
    pub fn v_entries(&self) -> &[(usize, f64)] {
        &self.v_entries[..self.v_len]
    }

    pub fn dense_v(&self, num_states: usize) -> Vec<f64> {
        let mut out = vec![0.0; num_states];
        for &(i, w) in self.v_entries() {
            out[i] += w;
        }
        out
    }

    pub fn dense_mu(&self, num_pairs: usize) -> Vec<f64> {
        let mut out = vec![0.0; num_pairs];
        out[self.mu_entry.0] = self.mu_entry.1;
        out
    }
}

/// Two-query estimate of `∇h_n(x_n)`.
///
/// Query 1 (value block): `s₀ ~ p` contributes `+1` at `s₀`; `(s,a) ~ μ_n`
/// and `s' ~ P(·|s,a)` contribute `-1/(1-γ)` at `s` and `+γ/(1-γ)` at `s'`.
/// Query 2 (occupancy block): `(s,a)` uniform, `s' ~ P(·|s,a)`, weight
/// `S·A·(κ - r(s,a) - (γ v_n(s') - v_n(s))/(1-γ))` at `(s,a)`.
///
/// Draws are consumed in exactly that order: `s₀`, `(s,a)`, `s'`, then the
/// uniform pair and its `s'`.
pub fn sample_gradient(mdp: &TabularMdp, x_n: &PrimalDualPoint, rng: &mut RandomStream) -> SparseGradient {
    sample_gradient_parts(mdp, &x_n.v, &x_n.mu, rng)
}

pub(crate) fn sample_gradient_parts(mdp: &TabularMdp, v: &[f64], mu: &[f64], rng: &mut RandomStream) -> SparseGradient {
    let na = mdp.num_actions();
    let k = mdp.kappa();
    let g = mdp.gamma();

    let s0 = mdp.sample_initial(rng);
    let pair = rng.categorical(mu);
    let next = mdp.sample_next(pair, rng);
    let v_entries = [(s0, 1.0), (pair / na, -k), (next, g * k)];

    let (mu_index, mu_weight) = sample_occupancy_block(mdp, |s| v[s], rng);
    SparseGradient::new(&v_entries, (mu_index, mu_weight))
}

/// Query 2 of the estimator with `v_n` supplied pointwise.
pub(crate) fn sample_occupancy_block(
    mdp: &TabularMdp,
    value_at: impl Fn(usize) -> f64,
    rng: &mut RandomStream,
) -> (usize, f64) {
    let pair = rng.index(mdp.num_pairs());
    let next = mdp.sample_next(pair, rng);
    let s = pair / mdp.num_actions();
    let weight = occupancy_weight(mdp, mdp.num_pairs(), mdp.reward()[pair], value_at(next), value_at(s));
    (pair, weight)
}

/// `scale · (κ - r - (γ v(s') - v(s)) / (1-γ))`.
pub(crate) fn occupancy_weight(mdp: &TabularMdp, scale: usize, reward: f64, v_next: f64, v_here: f64) -> f64 {
    let k = mdp.kappa();
    scale as f64 * (k - reward - k * (mdp.gamma() * v_next - v_here))
}

/// The current iterate with `μ` kept as normalized log-weights.
#[derive(Clone, Debug)]
pub struct MirrorState {
    pub v: Vec<f64>,
    log_mu: Vec<f64>,
    mu: Vec<f64>,
}

impl MirrorState {
    pub fn from_point(x: &PrimalDualPoint) -> Self {
        let log_mu: Vec<f64> = x.mu.iter().map(|m| m.ln()).collect();
        let mut st = Self { v: x.v.clone(), log_mu, mu: vec![0.0; x.mu.len()] };
        st.renormalize();
        st
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn point(&self) -> PrimalDualPoint {
        PrimalDualPoint::new(self.v.clone(), self.mu.clone())
    }

    /// Exact minimizer of `⟨g, x⟩ + B(x‖x_n)/η` over `X`: a box-clipped
    /// Euclidean step of size `η·S` on `v` and an exponentiated-gradient
    /// step on `μ`.
    pub fn step(&mut self, g: &SparseGradient, eta: f64) {
        let scale = eta * self.v.len() as f64;
        for &(i, w) in g.v_entries() {
            self.v[i] = (self.v[i] - scale * w).clamp(0.0, 1.0);
        }
        let (i, w) = g.mu_entry;
        if w != 0.0 {
            self.log_mu[i] -= eta * w;
            self.renormalize();
        }
    }

    fn renormalize(&mut self) {
        let lse = log_sum_exp(&self.log_mu);
        for (l, m) in self.log_mu.iter_mut().zip(self.mu.iter_mut()) {
            *l -= lse;
            *m = l.exp();
        }
    }
}

pub(crate) fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// One mirror-descent update from `x`.
pub fn md_update(x: &PrimalDualPoint, g: &SparseGradient, eta: f64) -> PrimalDualPoint {
    let mut st = MirrorState::from_point(x);
    st.step(g, eta);
    st.point()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointRecord {
    pub n: usize,
    /// `V*(p) - V^{π̂_n}(p)` when oracle evaluation is on.
    pub value_gap: Option<f64>,
    /// `r_ep(x̂_n; y*)` at the clever comparator.
    pub residual_certificate: Option<f64>,
    pub wall_time_ms: f64,
    pub eta: f64,
    pub queries: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunMetrics {
    pub eta: f64,
    pub checkpoints: Vec<CheckpointRecord>,
    pub averaged_point: PrimalDualPoint,
    pub policy: Policy,
    pub queries: u64,
}

impl RunMetrics {
    pub fn final_record(&self) -> &CheckpointRecord {
        self.checkpoints.last().expect("N is always a checkpoint")
    }
}

#[derive(Clone, Debug)]
pub struct RunResult {
    pub metrics: RunMetrics,
    pub policy: Policy,
    /// Iterates captured at checkpoints, kept only in
    /// [`IterateMode::BestDiagnostic`].
    pub snapshots: Vec<PrimalDualPoint>,
}

/// Observer called with `(n, v_n, μ_n)` for every iterate that enters the
/// average.
pub type IterateObserver<'o> = &'o mut dyn FnMut(usize, &[f64], &[f64]);

pub fn run(mdp: &TabularMdp, cfg: &SolverConfig) -> Result<RunResult> {
    run_with(mdp, cfg, None, None)
}

/// [`run`] with an optional prebuilt oracle and iterate observer.
pub fn run_with(
    mdp: &TabularMdp,
    cfg: &SolverConfig,
    oracle: Option<&ExactOracle<'_>>,
    mut observer: Option<IterateObserver<'_>>,
) -> Result<RunResult> {
    if cfg.steps == 0 {
        return Err(Error::InvalidArgument("steps must be at least 1".into()));
    }
    let eta = cfg.resolve_eta(mdp);
    if !(eta > 0.0) {
        return Err(Error::InvalidArgument(format!("step size must be positive, got {eta}")));
    }
    let need_oracle = cfg.eval_with_oracle || cfg.iterate_mode == IterateMode::BestDiagnostic;
    let owned;
    let oracle = match (oracle, need_oracle) {
        (Some(o), _) => Some(o),
        (None, true) => {
            owned = ExactOracle::new(mdp)?;
            Some(&owned)
        }
        (None, false) => None,
    };

    let start = Instant::now();
    let schedule = cfg.checkpoints.resolve(cfg.steps);
    let mut next_checkpoint = schedule.iter().copied().peekable();
    let mut rng = RandomStream::new(cfg.seed);
    let mut state = MirrorState::from_point(&PrimalDualPoint::initial(mdp));
    let mut sum_v = vec![0.0; mdp.num_states()];
    let mut sum_mu = vec![0.0; mdp.num_pairs()];
    let mut records = Vec::with_capacity(schedule.len());
    let mut snapshots = Vec::new();
    let mut queries = 0u64;

    for n in 1..=cfg.steps {
        add_assign(&mut sum_v, &state.v);
        add_assign(&mut sum_mu, state.mu());
        if let Some(obs) = observer.as_mut() {
            obs(n, &state.v, state.mu());
        }
        let g = sample_gradient_parts(mdp, &state.v, state.mu(), &mut rng);
        queries += 2;
        if next_checkpoint.peek() == Some(&n) {
            next_checkpoint.next();
            let avg = average(&sum_v, &sum_mu, n);
            let (value_gap, residual_certificate) = match (cfg.eval_with_oracle, oracle) {
                (true, Some(o)) => {
                    let c = o.gap_certificate(&avg)?;
                    (Some(c.gap), Some(c.residual_at_clever_comparator))
                }
                _ => (None, None),
            };
            if cfg.iterate_mode == IterateMode::BestDiagnostic {
                snapshots.push(state.point());
            }
            records.push(CheckpointRecord {
                n,
                value_gap,
                residual_certificate,
                wall_time_ms: start.elapsed().as_secs_f64() * 1e3,
                eta,
                queries,
            });
        }
        state.step(&g, eta);
    }

    let averaged_point = average(&sum_v, &sum_mu, cfg.steps);
    let policy = match (cfg.iterate_mode, oracle) {
        (IterateMode::BestDiagnostic, Some(o)) => {
            let best = best_iterate_diagnostic(o, &snapshots)?;
            o.extract_policy(&snapshots[best].mu)
        }
        _ => saddle::policy_from_occupancy(&averaged_point.mu, mdp.num_states(), mdp.num_actions()),
    };
    Ok(RunResult {
        metrics: RunMetrics {
            eta,
            checkpoints: records,
            averaged_point,
            policy: policy.clone(),
            queries,
        },
        policy,
        snapshots,
    })
}

fn add_assign(acc: &mut [f64], x: &[f64]) {
    for (a, b) in acc.iter_mut().zip(x) {
        *a += b;
    }
}

/// Running sums divided by `n`, with `μ̂` renormalized.
fn average(sum_v: &[f64], sum_mu: &[f64], n: usize) -> PrimalDualPoint {
    let v = sum_v.iter().map(|x| x / n as f64).collect();
    let total: f64 = sum_mu.iter().sum();
    let mu = sum_mu.iter().map(|x| x / total).collect();
    PrimalDualPoint::new(v, mu)
}

/// Index of the snapshot with the smallest `r_ep(x; y_x*)`; lowest index on
/// ties.
pub fn best_iterate_diagnostic(oracle: &ExactOracle<'_>, snapshots: &[PrimalDualPoint]) -> Result<usize> {
    if snapshots.is_empty() {
        return Err(Error::InvalidArgument("no snapshots".into()));
    }
    let mut best = (0, f64::INFINITY);
    for (i, x) in snapshots.iter().enumerate() {
        let r = oracle.gap_certificate(x)?.residual_at_clever_comparator;
        if r < best.1 {
            best = (i, r);
        }
    }
    Ok(best.0)
}

/// `(1/N) Σ_n [h_n(x_n) - h_n(y)]` with exact (noise-free) losses, pushed
/// one iterate at a time.
#[derive(Clone, Debug)]
pub struct RegretAccumulator<'a> {
    mdp: &'a TabularMdp,
    comparator: PrimalDualPoint,
    sum: f64,
    count: usize,
}

impl<'a> RegretAccumulator<'a> {
    pub fn new(mdp: &'a TabularMdp, comparator: PrimalDualPoint) -> Self {
        Self { mdp, comparator, sum: 0.0, count: 0 }
    }

    pub fn push(&mut self, v: &[f64], mu: &[f64]) {
        // h_n is linear in x, so h_n(x_n) - h_n(y) = ⟨∇h_n, x_n - y⟩
        let k = self.mdp.kappa();
        let b = saddle::balance_of(self.mdp, mu);
        let a = saddle::advantage_of(self.mdp, v);
        let dv: f64 = b.iter().zip(v.iter().zip(&self.comparator.v)).map(|(b, (x, y))| b * (x - y)).sum();
        let dmu: f64 = a
            .iter()
            .zip(mu.iter().zip(&self.comparator.mu))
            .map(|(a, (x, y))| (k - a) * (x - y))
            .sum();
        self.sum += dv + dmu;
        self.count += 1;
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn average(&self) -> f64 {
        self.sum / self.count as f64
    }
}

pub fn empirical_average_regret(
    mdp: &TabularMdp,
    trajectory: &[PrimalDualPoint],
    comparator: &PrimalDualPoint,
) -> Result<f64> {
    if trajectory.is_empty() {
        return Err(Error::InvalidArgument("empty trajectory".into()));
    }
    let mut acc = RegretAccumulator::new(mdp, comparator.clone());
    for x in trajectory {
        acc.push(&x.v, &x.mu);
    }
    Ok(acc.average())
}
