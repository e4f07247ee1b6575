use proptest::prelude::*;

use saddlerl::bench::{gen_gridworld, gen_random_mdp};
use saddlerl::features::{realize, state_aggregation_basis, ThetaPoint};
use saddlerl::io::{mdp_to_json, parse_mdp};
use saddlerl::saddle::{advantage, balance, bifunction, policy_from_occupancy};
use saddlerl::solver::{md_update, SparseGradient};
use saddlerl::verify::random_point;
use saddlerl::RandomStream;

fn mdp_params() -> impl Strategy<Value = (usize, usize, usize, f64, u64)> {
    (1usize..7, 1usize..5, prop_oneof![Just(0.0), Just(0.5), Just(0.9), Just(0.99)], any::<u64>())
        .prop_flat_map(|(s, a, g, seed)| (Just(s), Just(a), 1..=s, Just(g), Just(seed)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn generated_mdps_validate_and_round_trip((s, a, b, g, seed) in mdp_params()) {
        let mdp = gen_random_mdp(s, a, b, g, seed).unwrap();
        prop_assert!(mdp.validate().is_empty());
        let text = mdp_to_json(&mdp);
        prop_assert_eq!(parse_mdp(&text).unwrap(), mdp);
    }

    #[test]
    fn gridworlds_validate(w in 1usize..5, h in 1usize..5, slip in 0.0f64..0.99, g in 0.0f64..0.99) {
        let mdp = gen_gridworld(w, h, slip, g).unwrap();
        prop_assert!(mdp.validate().is_empty());
        prop_assert_eq!(parse_mdp(&mdp_to_json(&mdp)).unwrap(), mdp);
    }

    #[test]
    fn mirror_step_stays_in_domain(
        (s, a, b, g, seed) in mdp_params(),
        gv in prop::array::uniform3(-1e3f64..1e3),
        gmu in 0.0f64..1e4,
        eta in 1e-6f64..1.0,
    ) {
        let mdp = gen_random_mdp(s, a, b, g, seed).unwrap();
        let mut rng = RandomStream::new(seed);
        let x = random_point(&mdp, &mut rng);
        let entries: Vec<(usize, f64)> = gv.iter().map(|&w| (rng.index(s), w)).collect();
        let grad = SparseGradient::new(&entries, (rng.index(s * a), gmu));
        let next = md_update(&x, &grad, eta);
        prop_assert!(next.domain_violations(&mdp, 1e-10).is_empty());
    }

    #[test]
    fn bifunction_is_skew_and_bounds_hold((s, a, b, g, seed) in mdp_params()) {
        let mdp = gen_random_mdp(s, a, b, g, seed).unwrap();
        let mut rng = RandomStream::new(seed ^ 1);
        let x = random_point(&mdp, &mut rng);
        let y = random_point(&mdp, &mut rng);
        prop_assert!((bifunction(&mdp, &x, &y) + bifunction(&mdp, &y, &x)).abs() <= 1e-12 * mdp.kappa());
        prop_assert_eq!(bifunction(&mdp, &x, &x), 0.0);
        let k = mdp.kappa();
        prop_assert!(advantage(&mdp, &x.v).unwrap().iter().all(|v| v.abs() <= k + 1e-12));
        prop_assert!(balance(&mdp, &x.mu).unwrap().iter().map(|v| v.abs()).sum::<f64>() <= 2.0 * k + 1e-9);
    }

    #[test]
    fn extracted_policies_are_stochastic((s, a, b, g, seed) in mdp_params(), zero_state in any::<prop::sample::Index>()) {
        let mdp = gen_random_mdp(s, a, b, g, seed).unwrap();
        let mut rng = RandomStream::new(seed);
        let mut x = random_point(&mdp, &mut rng);
        let z = zero_state.index(s);
        if s > 1 {
            for i in 0..a {
                x.mu[z * a + i] = 0.0;
            }
        }
        let pi = policy_from_occupancy(&x.mu, s, a);
        for st in 0..s {
            prop_assert!((pi.row(st).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        if s > 1 {
            prop_assert!(pi.row(z).iter().all(|&p| (p - 1.0 / a as f64).abs() < 1e-15));
        }
    }

    #[test]
    fn realized_aggregation_points_are_occupancies(
        s in 1usize..12, a in 1usize..4, groups_frac in 0.0f64..1.0, w in prop::collection::vec(0.01f64..1.0, 1..48)
    ) {
        let groups = 1 + ((s - 1) as f64 * groups_frac) as usize;
        let basis = state_aggregation_basis(s, a, groups).unwrap();
        let d_mu = basis.d_mu();
        let raw: Vec<f64> = (0..d_mu).map(|k| w[k % w.len()]).collect();
        let total: f64 = raw.iter().sum();
        let theta = ThetaPoint { theta_v: vec![0.0; basis.d_v()], theta_mu: raw.iter().map(|x| x / total).collect() };
        let x = realize(&basis, &theta).unwrap();
        prop_assert!(x.mu.iter().all(|&m| m >= 0.0));
        prop_assert!((x.mu.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
