use proptest::prelude::*;
use radar_marl::learning::{dual_update_alg1, dual_update_alg2_eta, dual_update_alg2_nu, update_average};
use radar_marl::policy::AgentPolicy;

fn policy() -> impl Strategy<Value = AgentPolicy> {
    (1usize..4, 1usize..6).prop_flat_map(|(obs, actions)| {
        prop::collection::vec(-30.0f64..30.0, obs * actions)
            .prop_map(move |logits| AgentPolicy::from_logits(obs, actions, logits))
    })
}

proptest! {
    #[test]
    fn softmax_rows_are_distributions(p in policy()) {
        for o in 0..p.n_obs() {
            let probs = p.probs(o);
            prop_assert!(probs.iter().all(|&x| (0.0..=1.0).contains(&x)));
            prop_assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn score_norm_within_lipschitz_bound(p in policy()) {
        for o in 0..p.n_obs() {
            for a in 0..p.n_actions() {
                let norm = p.score(o, a).iter().map(|x| x * x).sum::<f64>().sqrt();
                prop_assert!(norm <= p.lipschitz_bound() + 1e-12);
            }
        }
    }

    #[test]
    fn multipliers_stay_in_range(
        nu in 0.0f64..10.0,
        avgs in prop::collection::vec(-5.0f64..5.0, 1..5),
        budget in 0.1f64..5.0,
        step in 0.0f64..100.0,
        cap in 0.5f64..10.0,
    ) {
        let nu = nu.min(cap);
        for v in [
            dual_update_alg1(nu, &avgs, budget, step, cap),
            dual_update_alg2_nu(nu, &avgs, budget, step, cap),
            dual_update_alg2_eta(nu, avgs[0], budget, step, cap),
        ] {
            prop_assert!((0.0..=cap).contains(&v));
        }
    }

    #[test]
    fn averages_stay_between_old_value_and_sample(mu in -10.0f64..10.0, f in -10.0f64..10.0, zeta in 0.0f64..1.0) {
        let next = update_average(mu, f, zeta);
        prop_assert!(next >= mu.min(f) - 1e-12 && next <= mu.max(f) + 1e-12);
    }
}
