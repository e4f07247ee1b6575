//! Instance generators, seed sweeps and convergence-rate fitting.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{self, FeatureBasis, FeatureConfig};
use crate::io::{self, MetricsRow};
use crate::mdp::{Policy, TabularMdp};
use crate::rng::RandomStream;
use crate::saddle::{ExactOracle, PrimalDualPoint};
use crate::solver::{self, Checkpoints, IterateMode, SolverConfig, StepSize};

/// Action layout of the three-state line MDP.
pub const LEFT: usize = 0;
pub const RIGHT: usize = 1;
pub const STAY: usize = 2;

/// The three-state line MDP on which the classic residual lower bound is
/// tight, together with the point that attains it.
#[derive(Clone, Debug)]
pub struct CounterexampleArtifacts {
    pub mdp: TabularMdp,
    /// `μ(s,a) = d(s) π_μ(a|s)` with `d = (1-γ)p + γe₁` and `π_μ` taking
    /// `right, stay, right`; `v = 0.5·1`.
    pub adversarial_point: PrimalDualPoint,
    pub adversarial_policy: Policy,
    /// `(1-γ)/3`.
    pub expected_residual: f64,
    /// `(1-γ) min_s p(s) ‖v* - v^{π_μ}‖∞`, also `(1-γ)/3`.
    pub expected_bound_rhs: f64,
}

/// States `0, 1, 2` on a line with actions `left`, `right`, `stay`; moves
/// are deterministic and clamp at the ends. `r(s, right) = 1`, all other
/// rewards are zero, and `p` is uniform.
pub fn gen_counterexample(gamma: f64) -> CounterexampleArtifacts {
    let (ns, na) = (3usize, 3usize);
    let mut transition = vec![0.0; ns * na * ns];
    let mut reward = vec![0.0; ns * na];
    for s in 0..ns {
        let next = [s.saturating_sub(1), (s + 1).min(ns - 1), s];
        for (a, &s2) in next.iter().enumerate() {
            transition[(s * na + a) * ns + s2] = 1.0;
        }
        reward[s * na + RIGHT] = 1.0;
    }
    let initial = vec![1.0 / 3.0; ns];
    let mdp = TabularMdp::new(ns, na, transition, reward, initial.clone(), gamma)
        .expect("line MDP is well formed");

    let policy = Policy::deterministic(na, &[RIGHT, STAY, RIGHT]);
    let d: Vec<f64> = initial
        .iter()
        .enumerate()
        .map(|(s, p)| (1.0 - gamma) * p + if s == 0 { gamma } else { 0.0 })
        .collect();
    let mut mu = vec![0.0; ns * na];
    for s in 0..ns {
        for a in 0..na {
            mu[s * na + a] = d[s] * policy.prob(s, a);
        }
    }
    CounterexampleArtifacts {
        mdp,
        adversarial_point: PrimalDualPoint::new(vec![0.5; ns], mu),
        adversarial_policy: policy,
        expected_residual: (1.0 - gamma) / 3.0,
        expected_bound_rhs: (1.0 - gamma) / 3.0,
    }
}

/// Random MDP whose every `(s, a)` row is supported on `branching` distinct
/// states with flat-Dirichlet weights. Rewards are uniform on `[0, 1]`,
/// `p` is uniform.
pub fn gen_random_mdp(
    num_states: usize,
    num_actions: usize,
    branching: usize,
    gamma: f64,
    seed: u64,
) -> Result<TabularMdp> {
    if num_states == 0 || num_actions == 0 {
        return Err(Error::InvalidArgument("states and actions must be positive".into()));
    }
    if branching == 0 || branching > num_states {
        return Err(Error::InvalidArgument(format!(
            "branching {branching} outside 1..={num_states}"
        )));
    }
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::InvalidArgument(format!("gamma {gamma} outside [0, 1)")));
    }
    let mut rng = RandomStream::new(seed);
    let sa = num_states * num_actions;
    let mut transition = vec![0.0; sa * num_states];
    let mut perm: Vec<usize> = (0..num_states).collect();
    for i in 0..sa {
        // partial Fisher-Yates: the first `branching` slots are the support
        for j in 0..branching {
            let k = j + rng.index(num_states - j);
            perm.swap(j, k);
        }
        let weights: Vec<f64> = (0..branching)
            .map(|_| (-(1.0 - rng.uniform()).ln()).max(f64::MIN_POSITIVE))
            .collect();
        let total: f64 = weights.iter().sum();
        let row = &mut transition[i * num_states..(i + 1) * num_states];
        for (j, w) in weights.iter().enumerate() {
            row[perm[j]] = w / total;
        }
    }
    let reward = (0..sa).map(|_| rng.uniform()).collect();
    let initial = vec![1.0 / num_states as f64; num_states];
    TabularMdp::new(num_states, num_actions, transition, reward, initial, gamma)
}

/// Grid actions.
pub const UP: usize = 0;
pub const DOWN: usize = 1;
pub const WEST: usize = 2;
pub const EAST: usize = 3;

/// `width × height` grid, state `y * width + x`, start in cell 0 and an
/// absorbing goal in the last cell that pays 1 per step. Each move succeeds
/// with probability `1 - slip`; the rest is split between the two lateral
/// moves. Moves into a wall leave the agent in place.
pub fn gen_gridworld(width: usize, height: usize, slip: f64, gamma: f64) -> Result<TabularMdp> {
    if width == 0 || height == 0 {
        return Err(Error::InvalidArgument("grid dimensions must be positive".into()));
    }
    if !(0.0..1.0).contains(&slip) {
        return Err(Error::InvalidArgument(format!("slip {slip} outside [0, 1)")));
    }
    let ns = width * height;
    let na = 4;
    let goal = ns - 1;
    let step = |s: usize, a: usize| -> usize {
        let (x, y) = (s % width, s / width);
        let (nx, ny) = match a {
            UP => (x, y.saturating_sub(1)),
            DOWN => (x, (y + 1).min(height - 1)),
            WEST => (x.saturating_sub(1), y),
            _ => ((x + 1).min(width - 1), y),
        };
        ny * width + nx
    };
    let lateral = |a: usize| if a == UP || a == DOWN { [WEST, EAST] } else { [UP, DOWN] };
    let mut transition = vec![0.0; ns * na * ns];
    let mut reward = vec![0.0; ns * na];
    for s in 0..ns {
        for a in 0..na {
            let row = &mut transition[(s * na + a) * ns..(s * na + a + 1) * ns];
            if s == goal {
                row[goal] = 1.0;
                reward[s * na + a] = 1.0;
                continue;
            }
            row[step(s, a)] += 1.0 - slip;
            for l in lateral(a) {
                row[step(s, l)] += slip / 2.0;
            }
        }
    }
    let mut initial = vec![0.0; ns];
    initial[0] = 1.0;
    TabularMdp::new(ns, na, transition, reward, initial, gamma)
}

/// Named instance for sweeps and the `gen` command.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InstanceSpec {
    Counterexample {
        gamma: f64,
    },
    Random {
        states: usize,
        actions: usize,
        branching: usize,
        gamma: f64,
        seed: u64,
    },
    Gridworld {
        width: usize,
        height: usize,
        slip: f64,
        gamma: f64,
    },
    File {
        path: String,
    },
}

impl InstanceSpec {
    pub fn build(&self) -> Result<TabularMdp> {
        match self {
            InstanceSpec::Counterexample { gamma } => {
                if !(0.0..1.0).contains(gamma) {
                    return Err(Error::InvalidArgument(format!("gamma {gamma} outside [0, 1)")));
                }
                Ok(gen_counterexample(*gamma).mdp)
            }
            InstanceSpec::Random { states, actions, branching, gamma, seed } => {
                gen_random_mdp(*states, *actions, *branching, *gamma, *seed)
            }
            InstanceSpec::Gridworld { width, height, slip, gamma } => gen_gridworld(*width, *height, *slip, *gamma),
            InstanceSpec::File { path } => io::load_mdp(path),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LearnerSpec {
    Tabular,
    Features {
        /// `"tabular"`, `"state-aggregation:k"` or a basis file path.
        basis: String,
        #[serde(default = "default_cv")]
        c_v: f64,
    },
}

fn default_cv() -> f64 {
    1.0
}

impl Default for LearnerSpec {
    fn default() -> Self {
        LearnerSpec::Tabular
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub name: String,
    pub instance: InstanceSpec,
    pub steps: Vec<usize>,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub learner: LearnerSpec,
    #[serde(default)]
    pub step_size: StepSize,
    #[serde(default)]
    pub output: Option<String>,
    /// Wall-clock times make the table non-reproducible, so they are
    /// recorded only on request; otherwise `elapsed_ms` is 0.
    #[serde(default)]
    pub record_timing: bool,
}

impl SweepSpec {
    pub fn check(&self) -> Result<()> {
        if self.steps.is_empty() {
            return Err(Error::InvalidArgument("sweep needs at least one step count".into()));
        }
        if self.steps.contains(&0) {
            return Err(Error::InvalidArgument("step counts must be positive".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::InvalidArgument("sweep needs at least one seed".into()));
        }
        let mut seeds = self.seeds.clone();
        seeds.sort_unstable();
        seeds.dedup();
        if seeds.len() != self.seeds.len() {
            return Err(Error::InvalidArgument("sweep seeds must be distinct".into()));
        }
        Ok(())
    }
}

/// One run per `(N, seed)`, on at most `workers` threads. Records are sorted
/// by `(N, seed)` and, apart from `elapsed_ms`, depend only on `spec`.
pub fn run_sweep(spec: &SweepSpec, workers: usize) -> Result<Vec<MetricsRow>> {
    spec.check()?;
    let mdp = spec.instance.build()?;
    let oracle = ExactOracle::new(&mdp)?;
    let basis = match &spec.learner {
        LearnerSpec::Tabular => None,
        LearnerSpec::Features { basis, .. } => Some(features::resolve_basis(basis, &mdp)?),
    };
    let mut jobs: Vec<(usize, u64)> = spec
        .steps
        .iter()
        .flat_map(|&n| spec.seeds.iter().map(move |&s| (n, s)))
        .collect();
    jobs.sort_unstable();
    jobs.dedup();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    let results: Vec<Result<MetricsRow>> = pool.install(|| {
        jobs.par_iter()
            .map(|&(n, seed)| run_one(spec, &mdp, &oracle, basis.as_ref(), n, seed))
            .collect()
    });
    let mut rows = results.into_iter().collect::<Result<Vec<_>>>()?;
    rows.sort_by(|a, b| (a.n, a.seed).cmp(&(b.n, b.seed)));
    Ok(rows)
}

fn run_one(
    spec: &SweepSpec,
    mdp: &TabularMdp,
    oracle: &ExactOracle<'_>,
    basis: Option<&FeatureBasis>,
    n: usize,
    seed: u64,
) -> Result<MetricsRow> {
    let start = Instant::now();
    let record = match (&spec.learner, basis) {
        (LearnerSpec::Features { c_v, .. }, Some(basis)) => {
            let cfg = FeatureConfig {
                c_v: *c_v,
                steps: n,
                step_size: spec.step_size,
                seed,
                checkpoints: Checkpoints::List(vec![n]),
                eval_with_oracle: true,
            };
            let out = features::run_features_with(mdp, basis, &cfg, Some(oracle))?;
            out.final_record().clone()
        }
        _ => {
            let cfg = SolverConfig {
                steps: n,
                step_size: spec.step_size,
                seed,
                checkpoints: Checkpoints::List(vec![n]),
                iterate_mode: IterateMode::Average,
                eval_with_oracle: true,
            };
            let out = solver::run_with(mdp, &cfg, Some(oracle), None)?;
            out.metrics.final_record().clone()
        }
    };
    let elapsed = if spec.record_timing {
        start.elapsed().as_secs_f64() * 1e3
    } else {
        0.0
    };
    Ok(MetricsRow {
        run_id: spec.name.clone(),
        seed,
        n: record.n,
        eta: record.eta,
        value_gap: record.value_gap.unwrap_or(f64::NAN),
        residual_cert: record.residual_certificate.unwrap_or(f64::NAN),
        queries: record.queries,
        elapsed_ms: elapsed,
    })
}

/// Least-squares fit of `log(mean gap)` against `log N`.
#[derive(Clone, Debug, PartialEq)]
pub struct RateFit {
    pub slope: f64,
    pub slope_std_error: f64,
    pub intercept: f64,
    /// `(N, mean gap)` per group, ascending in `N`.
    pub points: Vec<(usize, f64)>,
}

pub const RATE_FIT_MIN_GROUPS: usize = 3;
pub const RATE_FIT_MIN_SEEDS: usize = 10;

/// Groups rows by `n`, averages `value_gap` within each group, and fits the
/// log-log slope. Needs at least 3 distinct `n` with 10 rows each.
pub fn rate_fit(rows: &[MetricsRow]) -> Result<RateFit> {
    rate_fit_with_min_seeds(rows, RATE_FIT_MIN_SEEDS)
}

pub fn rate_fit_with_min_seeds(rows: &[MetricsRow], min_seeds: usize) -> Result<RateFit> {
    let mut groups: std::collections::BTreeMap<usize, Vec<f64>> = Default::default();
    for r in rows {
        groups.entry(r.n).or_default().push(r.value_gap);
    }
    if groups.len() < RATE_FIT_MIN_GROUPS {
        return Err(Error::InsufficientData(format!(
            "{} distinct N values, need {RATE_FIT_MIN_GROUPS}",
            groups.len()
        )));
    }
    let mut points = Vec::with_capacity(groups.len());
    for (&n, gaps) in &groups {
        if gaps.len() < min_seeds {
            return Err(Error::InsufficientData(format!("N = {n} has {} runs, need {min_seeds}", gaps.len())));
        }
        let mean = gaps.iter().sum::<f64>() / gaps.len() as f64;
        if !(mean > 0.0) {
            return Err(Error::InsufficientData(format!("N = {n} has non-positive mean gap {mean}")));
        }
        points.push((n, mean));
    }
    let xs: Vec<f64> = points.iter().map(|(n, _)| (*n as f64).ln()).collect();
    let ys: Vec<f64> = points.iter().map(|(_, g)| g.ln()).collect();
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ssr: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    let slope_std_error = (ssr / (k - 2.0) / sxx).sqrt();
    Ok(RateFit { slope, slope_std_error, intercept, points })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::max_abs_diff;
    use crate::mdp;

    #[test]
    fn counterexample_values() {
        for g in [0.0, 0.5, 0.9] {
            let art = gen_counterexample(g);
            assert!(art.mdp.validate().is_empty());
            let v = mdp::value_of_policy(&art.mdp, &art.adversarial_policy).unwrap();
            assert!(max_abs_diff(&v, &[1.0 - g, 0.0, 1.0]) < 1e-12);
            assert!((art.adversarial_point.mu.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        }
        assert!((gen_counterexample(0.9).expected_residual - 0.1 / 3.0).abs() < 1e-15);
        assert!((gen_counterexample(0.0).expected_residual - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn counterexample_point_meets_flow_floor() {
        let art = gen_counterexample(0.9);
        for s in 0..3 {
            let mass: f64 = art.adversarial_point.mu[s * 3..s * 3 + 3].iter().sum();
            assert!(mass >= 0.1 / 3.0 - 1e-15);
        }
    }

    #[test]
    fn random_mdp_shape_and_reproducibility() {
        let a = gen_random_mdp(5, 3, 2, 0.9, 42).unwrap();
        let b = gen_random_mdp(5, 3, 2, 0.9, 42).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, gen_random_mdp(5, 3, 2, 0.9, 43).unwrap());
        for i in 0..15 {
            assert_eq!(a.transition_row(i).iter().filter(|&&q| q > 0.0).count(), 2);
        }
        let det = gen_random_mdp(4, 2, 1, 0.9, 1).unwrap();
        for i in 0..8 {
            assert!(det.transition_row(i).iter().all(|&q| q == 0.0 || q == 1.0));
        }
        let one = gen_random_mdp(1, 3, 1, 0.9, 1).unwrap();
        assert_eq!(one.transition(), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn random_mdp_rejects_bad_branching() {
        assert!(gen_random_mdp(3, 2, 0, 0.9, 0).is_err());
        assert!(gen_random_mdp(3, 2, 4, 0.9, 0).is_err());
        assert!(gen_random_mdp(3, 2, 2, 1.0, 0).is_err());
    }

    #[test]
    fn gridworld_layout() {
        let m = gen_gridworld(2, 1, 0.0, 0.9).unwrap();
        assert_eq!(m.num_states(), 2);
        assert_eq!(m.transition_row(m.index(0, EAST)), &[0.0, 1.0]);
        assert_eq!(m.transition_row(m.index(0, WEST)), &[1.0, 0.0]);
        for a in 0..4 {
            assert_eq!(m.transition_row(m.index(1, a)), &[0.0, 1.0]);
        }
        let slippery = gen_gridworld(3, 3, 0.2, 0.9).unwrap();
        assert!(slippery.validate().is_empty());
        assert!(gen_gridworld(2, 2, 1.0, 0.9).is_err());
    }

    #[test]
    fn gridworld_value_iteration_matches_enumeration() {
        let m = gen_gridworld(2, 2, 0.1, 0.9).unwrap();
        let (v, _) = mdp::optimal_value_and_policy(&m, 1e-13).unwrap();
        let (vb, _) = mdp::brute_force_optimal(&m).unwrap();
        let p = m.initial();
        assert!((crate::linalg::dot(p, &v) - crate::linalg::dot(p, &vb)).abs() <= 1e-9);
    }

    fn synthetic(ns: &[usize], f: impl Fn(usize) -> f64) -> Vec<MetricsRow> {
        ns.iter()
            .flat_map(|&n| {
                let f = &f;
                (0..10u64).map(move |seed| MetricsRow {
                    run_id: "t".into(),
                    seed,
                    n,
                    eta: 0.1,
                    value_gap: f(n),
                    residual_cert: f(n),
                    queries: 2 * n as u64,
                    elapsed_ms: 0.0,
                })
            })
            .collect()
    }

    #[test]
    fn rate_fit_exact_power_law() {
        let rows = synthetic(&[10, 100, 1000, 10_000], |n| 3.0 / (n as f64).sqrt());
        let fit = rate_fit(&rows).unwrap();
        assert!((fit.slope + 0.5).abs() < 1e-12);
        let flat = rate_fit(&synthetic(&[10, 100, 1000], |_| 0.2)).unwrap();
        assert!(flat.slope.abs() < 1e-12);
    }

    #[test]
    fn rate_fit_needs_enough_data() {
        assert!(matches!(
            rate_fit(&synthetic(&[10, 100], |_| 0.1)),
            Err(Error::InsufficientData(_))
        ));
        let mut rows = synthetic(&[10, 100, 1000], |_| 0.1);
        rows.pop();
        assert!(rate_fit(&rows).is_err());
    }

    fn small_spec(steps: Vec<usize>, seeds: Vec<u64>) -> SweepSpec {
        SweepSpec {
            name: "cx".into(),
            instance: InstanceSpec::Counterexample { gamma: 0.9 },
            steps,
            seeds,
            learner: LearnerSpec::Tabular,
            step_size: StepSize::Auto,
            output: None,
            record_timing: false,
        }
    }

    #[test]
    fn sweep_records_sorted_with_query_counts() {
        let rows = run_sweep(&small_spec(vec![64, 16], vec![3, 1]), 2).unwrap();
        let keys: Vec<_> = rows.iter().map(|r| (r.n, r.seed)).collect();
        assert_eq!(keys, vec![(16, 1), (16, 3), (64, 1), (64, 3)]);
        assert!(rows.iter().all(|r| r.queries == 2 * r.n as u64));
        let single = run_sweep(&small_spec(vec![10], vec![0]), 1).unwrap();
        assert_eq!(single.len(), 1);
    }

    #[test]
    fn sweep_is_reproducible_across_worker_counts() {
        let spec = small_spec(vec![32, 128, 512], vec![0, 1, 2, 3]);
        let a = run_sweep(&spec, 1).unwrap();
        let b = run_sweep(&spec, 4).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn sweep_spec_validation() {
        assert!(small_spec(vec![], vec![0]).check().is_err());
        assert!(small_spec(vec![5], vec![]).check().is_err());
        assert!(small_spec(vec![5], vec![1, 1]).check().is_err());
        assert!(small_spec(vec![0], vec![1]).check().is_err());
    }
}
