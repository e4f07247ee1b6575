//! Monte-Carlo unbiasedness of both gradient estimators and stream
//! synchronization between them.

use saddlerl::bench::{gen_counterexample, gen_random_mdp};
use saddlerl::features::{
    exact_theta_gradient, md_update_theta, sample_gradient_theta, tabular_basis, FeatureBasis, ThetaPoint,
};
use saddlerl::saddle::shifted_loss_gradient;
use saddlerl::solver::{md_update, sample_gradient};
use saddlerl::{PrimalDualPoint, RandomStream, TabularMdp};

const DRAWS: usize = 100_000;

/// Per-coordinate running mean and variance.
struct Moments {
    sum: Vec<f64>,
    sum_sq: Vec<f64>,
    n: usize,
}

impl Moments {
    fn new(dim: usize) -> Self {
        Self { sum: vec![0.0; dim], sum_sq: vec![0.0; dim], n: 0 }
    }

    fn push(&mut self, x: &[f64]) {
        for i in 0..x.len() {
            self.sum[i] += x[i];
            self.sum_sq[i] += x[i] * x[i];
        }
        self.n += 1;
    }

    /// Largest `|mean - exact|` in units of the standard error.
    fn worst_z(&self, exact: &[f64]) -> f64 {
        let n = self.n as f64;
        (0..exact.len())
            .map(|i| {
                let mean = self.sum[i] / n;
                let var = (self.sum_sq[i] / n - mean * mean).max(0.0) * n / (n - 1.0);
                let se = (var / n).sqrt();
                let dev = (mean - exact[i]).abs();
                if se == 0.0 {
                    if dev <= 1e-12 { 0.0 } else { f64::INFINITY }
                } else {
                    dev / se
                }
            })
            .fold(0.0, f64::max)
    }
}

fn fixed_mdp() -> TabularMdp {
    gen_random_mdp(3, 2, 2, 0.9, 11).unwrap()
}

#[test]
fn tabular_estimator_is_unbiased() {
    let mdp = fixed_mdp();
    let x = PrimalDualPoint::new(vec![0.2, 0.7, 0.4], vec![0.05, 0.25, 0.1, 0.3, 0.2, 0.1]);
    let (gv, gmu) = shifted_loss_gradient(&mdp, &x);
    let mut mv = Moments::new(3);
    let mut mm = Moments::new(6);
    let mut rng = RandomStream::new(2024);
    for _ in 0..DRAWS {
        let g = sample_gradient(&mdp, &x, &mut rng);
        mv.push(&g.dense_v(3));
        mm.push(&g.dense_mu(6));
    }
    assert!(mv.worst_z(&gv) <= 4.0, "value block z = {}", mv.worst_z(&gv));
    assert!(mm.worst_z(&gmu) <= 4.0, "occupancy block z = {}", mm.worst_z(&gmu));
}

fn two_by_two_basis() -> FeatureBasis {
    let phi = vec![1.0, 0.0, 0.5, 0.5, -0.3, 1.0];
    // ψ₁ spread over three pairs, ψ₂ over two
    let psi = vec![
        0.5, 0.0, //
        0.0, 0.4, //
        0.3, 0.0, //
        0.0, 0.0, //
        0.2, 0.0, //
        0.0, 0.6, //
    ];
    FeatureBasis::from_dense(3, 2, phi, 2, &psi, 2).unwrap()
}

#[test]
fn feature_estimator_is_unbiased() {
    let mdp = fixed_mdp();
    let basis = two_by_two_basis();
    assert!(basis.validate().is_empty());
    let theta = ThetaPoint { theta_v: vec![0.4, -0.3], theta_mu: vec![0.35, 0.65] };
    let (gv, gmu) = exact_theta_gradient(&mdp, &basis, &theta).unwrap();
    let mut mv = Moments::new(2);
    let mut mm = Moments::new(2);
    let mut rng = RandomStream::new(77);
    for _ in 0..DRAWS {
        let g = sample_gradient_theta(&mdp, &basis, &theta, &mut rng);
        mv.push(&g.v);
        let mut dense = [0.0; 2];
        dense[g.mu_entry.0] = g.mu_entry.1;
        mm.push(&dense);
        assert!(g.mu_entry.1.is_finite());
    }
    assert!(mv.worst_z(&gv) <= 4.0, "value block z = {}", mv.worst_z(&gv));
    assert!(mm.worst_z(&gmu) <= 4.0, "occupancy block z = {}", mm.worst_z(&gmu));
}

#[test]
fn feature_weight_magnitude_bound() {
    // |weight| ≤ d_μ (κ + 1 + 2 C_v / (1-γ)) even when Φθ_v leaves [0, 1]
    let mdp = fixed_mdp();
    let basis = two_by_two_basis();
    let c_v = 3.0;
    let r = c_v / 2f64.sqrt();
    let theta = ThetaPoint { theta_v: vec![r, 0.0], theta_mu: vec![0.5, 0.5] };
    let k = mdp.kappa();
    let bound = 2.0 * (k + 1.0 + 2.0 * c_v * k);
    let mut rng = RandomStream::new(5);
    for _ in 0..10_000 {
        let g = sample_gradient_theta(&mdp, &basis, &theta, &mut rng);
        assert!(g.mu_entry.1.abs() <= bound);
    }
}

#[test]
fn occupancy_samples_coincide_between_learners() {
    let art = gen_counterexample(0.9);
    let mdp = &art.mdp;
    let basis = tabular_basis(3, 3);
    let eta = 1e-3;
    let mut x = PrimalDualPoint::initial(mdp);
    let mut theta = ThetaPoint { theta_v: vec![0.0; 3], theta_mu: x.mu.clone() };
    let mut rt = RandomStream::new(31);
    let mut rf = RandomStream::new(31);
    for _ in 0..10_000 {
        let gt = sample_gradient(mdp, &x, &mut rt);
        let gf = sample_gradient_theta(mdp, &basis, &theta, &mut rf);
        assert_eq!(gt.mu_entry.0, gf.mu_entry.0);
        x = md_update(&x, &gt, eta);
        theta = md_update_theta(&theta, &gf, eta, 3.0);
    }
}

#[test]
fn estimators_agree_at_a_shared_point() {
    let mdp = fixed_mdp();
    let basis = tabular_basis(3, 2);
    let x = PrimalDualPoint::new(vec![0.2, 0.7, 0.4], vec![0.05, 0.25, 0.1, 0.3, 0.2, 0.1]);
    let theta = ThetaPoint { theta_v: x.v.clone(), theta_mu: x.mu.clone() };
    let mut rt = RandomStream::new(8);
    let mut rf = RandomStream::new(8);
    for _ in 0..10_000 {
        let gt = sample_gradient(&mdp, &x, &mut rt);
        let gf = sample_gradient_theta(&mdp, &basis, &theta, &mut rf);
        assert_eq!(gt.mu_entry, gf.mu_entry);
        assert_eq!(gt.dense_v(3), gf.v);
    }
}
