//! Executable identity and inequality checks over exact oracles.

use std::fmt;

use crate::bench::{gen_counterexample, gen_random_mdp};
use crate::error::Result;
use crate::linalg::{dot, max_abs_diff};
use crate::mdp::{self, Policy, TabularMdp};
use crate::rng::RandomStream;
use crate::saddle::{self, ExactOracle, PrimalDualPoint};

#[derive(Clone, Debug, PartialEq)]
pub struct CheckReport {
    pub name: String,
    pub passed: bool,
    /// Largest absolute deviation from the identity, or largest violation
    /// of the inequality (0 when it holds).
    pub max_deviation: f64,
    pub cases: usize,
    pub detail: String,
}

impl fmt::Display for CheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {:<28} max_deviation = {:.3e} over {} case(s)",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.max_deviation,
            self.cases
        )?;
        if !self.detail.is_empty() {
            write!(f, "  {}", self.detail)?;
        }
        Ok(())
    }
}

/// Running maximum of deviations for one named check.
#[derive(Clone, Debug)]
struct Tally {
    name: &'static str,
    max_deviation: f64,
    cases: usize,
}

impl Tally {
    fn new(name: &'static str) -> Self {
        Self { name, max_deviation: 0.0, cases: 0 }
    }

    fn record(&mut self, deviation: f64) {
        self.cases += 1;
        // NaN must fail the check
        if !(deviation <= self.max_deviation) {
            self.max_deviation = if deviation.is_nan() { f64::INFINITY } else { deviation };
        }
    }

    fn report(self, tol: f64) -> CheckReport {
        CheckReport {
            name: self.name.to_string(),
            passed: self.max_deviation <= tol,
            max_deviation: self.max_deviation,
            cases: self.cases,
            detail: String::new(),
        }
    }
}

pub fn random_point(mdp: &TabularMdp, rng: &mut RandomStream) -> PrimalDualPoint {
    let v = (0..mdp.num_states()).map(|_| rng.uniform()).collect();
    PrimalDualPoint::new(v, random_distribution(mdp.num_pairs(), rng))
}

/// A point with `Eᵀμ ≥ (1-γ)p`: `μ = d·π` with `d = (1-γ)p + γq`.
pub fn random_flow_feasible_point(mdp: &TabularMdp, rng: &mut RandomStream) -> PrimalDualPoint {
    let g = mdp.gamma();
    let q = random_distribution(mdp.num_states(), rng);
    let pi = random_policy(mdp, rng);
    let na = mdp.num_actions();
    let mut mu = vec![0.0; mdp.num_pairs()];
    for s in 0..mdp.num_states() {
        let d = (1.0 - g) * mdp.initial()[s] + g * q[s];
        for a in 0..na {
            mu[s * na + a] = d * pi.prob(s, a);
        }
    }
    let v = (0..mdp.num_states()).map(|_| rng.uniform()).collect();
    PrimalDualPoint::new(v, mu)
}

/// Stochastic with probability 1/2, deterministic otherwise.
pub fn random_policy(mdp: &TabularMdp, rng: &mut RandomStream) -> Policy {
    let (ns, na) = (mdp.num_states(), mdp.num_actions());
    if rng.uniform() < 0.5 {
        let actions: Vec<usize> = (0..ns).map(|_| rng.index(na)).collect();
        Policy::deterministic(na, &actions)
    } else {
        let probs = (0..ns).flat_map(|_| random_distribution(na, rng)).collect();
        Policy::new(ns, na, probs).expect("rows are normalized")
    }
}

fn random_distribution(n: usize, rng: &mut RandomStream) -> Vec<f64> {
    let w: Vec<f64> = (0..n).map(|_| -(1.0 - rng.uniform()).ln()).collect();
    let total: f64 = w.iter().sum();
    w.iter().map(|x| x / total).collect()
}

/// Counterexample equality at `γ`: the classic residual bound is attained,
/// and `v^{π_μ} = [1-γ, 0, 1]`, `v* = 1`.
pub fn check_counterexample(gamma: f64, tol: f64) -> Result<CheckReport> {
    let art = gen_counterexample(gamma);
    let oracle = ExactOracle::new(&art.mdp)?;
    let check = oracle
        .classic_residual_check(&art.adversarial_point)?
        .expect("the adversarial point satisfies the flow condition");
    let v_pi = oracle.value_of_extracted(&art.adversarial_point.mu)?;
    let v_star = oracle.saddle_point().v;
    let deviation = (check.lhs - check.rhs)
        .abs()
        .max((check.lhs - art.expected_residual).abs())
        .max(max_abs_diff(&v_pi, &[1.0 - gamma, 0.0, 1.0]))
        .max(max_abs_diff(&v_star, &[1.0; 3]));
    Ok(CheckReport {
        name: "counterexample_equality".into(),
        passed: deviation <= tol,
        max_deviation: deviation,
        cases: 1,
        detail: format!(
            "gamma = {gamma}: lhs = {:.17}, rhs = {:.17}, (1-gamma)/3 = {:.17}",
            check.lhs, check.rhs, art.expected_residual
        ),
    })
}

/// Identity and bound checks on one MDP at `points` random points.
struct MdpChecks {
    performance_difference: Tally,
    lagrangian_policy_value: Tally,
    residual_lemma: Tally,
    residual_lemma_relaxed: Tally,
    clever_comparator: Tally,
    rough_residual_bound: Tally,
    skew_symmetry: Tally,
    advantage_norm_bound: Tally,
    balance_norm_bound: Tally,
    shifted_loss_identity: Tally,
    approximation_bias_bound: Tally,
    oracle_agreement: Tally,
}

impl MdpChecks {
    fn new() -> Self {
        Self {
            performance_difference: Tally::new("performance_difference"),
            lagrangian_policy_value: Tally::new("lagrangian_policy_value"),
            residual_lemma: Tally::new("residual_lemma"),
            residual_lemma_relaxed: Tally::new("residual_lemma_relaxed"),
            clever_comparator: Tally::new("clever_comparator"),
            rough_residual_bound: Tally::new("rough_residual_bound"),
            skew_symmetry: Tally::new("skew_symmetry"),
            advantage_norm_bound: Tally::new("advantage_norm_bound"),
            balance_norm_bound: Tally::new("balance_norm_bound"),
            shifted_loss_identity: Tally::new("shifted_loss_identity"),
            approximation_bias_bound: Tally::new("approximation_bias_bound"),
            oracle_agreement: Tally::new("oracle_agreement"),
        }
    }

    fn run(&mut self, mdp: &TabularMdp, points: usize, rng: &mut RandomStream) -> Result<()> {
        let oracle = ExactOracle::new(mdp)?;
        let k = mdp.kappa();
        let p = mdp.initial();
        let star = oracle.saddle_point();

        let brute_force_ok = (mdp.num_actions() as f64).powi(mdp.num_states() as i32) <= 1e4;
        if brute_force_ok {
            let (v_bf, _) = mdp::brute_force_optimal(mdp)?;
            self.oracle_agreement.record((dot(p, &v_bf) - dot(p, &star.v)).abs());
        }

        for _ in 0..points {
            let x = random_point(mdp, rng);
            let x2 = random_point(mdp, rng);

            let pi = random_policy(mdp, rng);
            let v_pi = mdp::value_of_policy(mdp, &pi)?;
            let mu_pi = mdp::occupancy_of_policy(mdp, &pi)?;
            let a_x = saddle::advantage(mdp, &x.v)?;
            self.performance_difference
                .record((dot(p, &v_pi) - dot(p, &x.v) - dot(&mu_pi, &a_x)).abs());
            self.lagrangian_policy_value
                .record((saddle::lagrangian(mdp, &PrimalDualPoint::new(x.v.clone(), mu_pi.clone())) - dot(p, &v_pi)).abs());

            let exact = PrimalDualPoint::new(v_pi.clone(), mu_pi.clone());
            let a_pi = saddle::advantage(mdp, &v_pi)?;
            self.residual_lemma
                .record((saddle::relative_residual(mdp, &x, &exact) + dot(&x.mu, &a_pi)).abs());
            let u: Vec<f64> = (0..mdp.num_states()).map(|_| rng.uniform() - 0.5).collect();
            let shifted = PrimalDualPoint::new(v_pi.iter().zip(&u).map(|(a, b)| a + b).collect(), mu_pi);
            let b_x = saddle::balance(mdp, &x.mu)?;
            self.residual_lemma_relaxed.record(
                (saddle::relative_residual(mdp, &x, &shifted) + dot(&x.mu, &a_pi) + dot(&b_x, &u)).abs(),
            );

            self.clever_comparator.record(oracle.gap_certificate(&x)?.mismatch);

            let feasible = random_flow_feasible_point(mdp, rng);
            let check = oracle
                .classic_residual_check(&feasible)?
                .expect("constructed to satisfy the flow condition");
            self.rough_residual_bound.record((check.rhs - check.lhs).max(0.0));

            self.skew_symmetry
                .record((saddle::bifunction(mdp, &x, &x2) + saddle::bifunction(mdp, &x2, &x)).abs());

            let a_norm = a_x.iter().fold(0.0f64, |m, a| m.max(a.abs()));
            self.advantage_norm_bound.record((a_norm - k).max(0.0));
            let b_norm: f64 = b_x.iter().map(|b| b.abs()).sum();
            self.balance_norm_bound.record((b_norm - 2.0 * k).max(0.0));

            let x_n = random_point(mdp, rng);
            let dh = saddle::shifted_loss(mdp, &x, &x_n) - saddle::shifted_loss(mdp, &x2, &x_n);
            let dl = saddle::per_round_loss(mdp, &x, &x_n) - saddle::per_round_loss(mdp, &x2, &x_n);
            self.shifted_loss_identity.record((dh - dl).abs());

            let candidates = [random_point(mdp, rng), star.clone(), x2.clone()];
            let bias = oracle.approximation_bias_bound(&x, &candidates)?;
            self.approximation_bias_bound.record((bias.exact_epsilon - bias.bound).max(0.0));
        }
        Ok(())
    }

    fn reports(self, tol: f64) -> Vec<CheckReport> {
        [
            self.performance_difference,
            self.lagrangian_policy_value,
            self.residual_lemma,
            self.residual_lemma_relaxed,
            self.clever_comparator,
            self.rough_residual_bound,
            self.skew_symmetry,
            self.advantage_norm_bound,
            self.balance_norm_bound,
            self.shifted_loss_identity,
            self.approximation_bias_bound,
            self.oracle_agreement,
        ]
        .into_iter()
        .filter(|t| t.cases > 0)
        .map(|t| t.report(tol))
        .collect()
    }
}

/// All identity checks on one MDP at `points` random points.
pub fn check_mdp(mdp: &TabularMdp, points: usize, seed: u64, tol: f64) -> Result<Vec<CheckReport>> {
    let mut checks = MdpChecks::new();
    checks.run(mdp, points, &mut RandomStream::new(seed))?;
    Ok(checks.reports(tol))
}

#[derive(Clone, Debug, PartialEq)]
pub struct SuiteConfig {
    pub random_mdps: usize,
    pub points_per_mdp: usize,
    pub max_states: usize,
    pub max_actions: usize,
    pub gammas: Vec<f64>,
    pub seed: u64,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            random_mdps: 200,
            points_per_mdp: 5,
            max_states: 8,
            max_actions: 4,
            gammas: vec![0.5, 0.9, 0.99],
            seed: 0,
        }
    }
}

/// The `i`-th MDP of the standard sweep.
pub fn suite_mdp(cfg: &SuiteConfig, i: usize) -> Result<TabularMdp> {
    let mut rng = RandomStream::new(cfg.seed).split(i as u64);
    let ns = 1 + rng.index(cfg.max_states);
    let na = 1 + rng.index(cfg.max_actions);
    let branching = 1 + rng.index(ns);
    let gamma = cfg.gammas[i % cfg.gammas.len()];
    gen_random_mdp(ns, na, branching, gamma, rng.next_u64())
}

/// Counterexample equality at `γ ∈ {0, 0.5, 0.9}` followed by every MDP
/// check over the random sweep. Brute-force agreement runs on the MDPs
/// with `A^S ≤ 10⁴`.
pub fn standard_suite(cfg: &SuiteConfig, tol: f64) -> Result<Vec<CheckReport>> {
    let mut reports = Vec::new();
    for gamma in [0.9, 0.5, 0.0] {
        reports.push(check_counterexample(gamma, tol)?);
    }
    let mut checks = MdpChecks::new();
    for i in 0..cfg.random_mdps {
        let mdp = suite_mdp(cfg, i)?;
        let mut rng = RandomStream::new(cfg.seed).split(1_000_000 + i as u64);
        checks.run(&mdp, cfg.points_per_mdp, &mut rng)?;
    }
    reports.extend(checks.reports(tol));
    Ok(reports)
}
