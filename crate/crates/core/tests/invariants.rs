mod common;

use partner_core::analytics::critical_structure;
use partner_core::model::{
    apply_transition, drift_and_diffusivity, observables, transition_rates, ModelParams, PopulationState, Transition,
};
use partner_core::stats::{ks_two_sample, Ecdf};
use proptest::prelude::*;

fn state_strategy() -> impl Strategy<Value = (i64, PopulationState)> {
    (2i64..200_000, any::<u64>()).prop_map(|(n, seed)| {
        use rand::SeedableRng;
        let mut rng = rand_xoshiro::Xoshiro256PlusPlus::seed_from_u64(seed);
        (n, common::random_state(&mut rng, n))
    })
}

proptest! {
    #[test]
    fn transitions_conserve_population((n, st) in state_strategy(), picks in prop::collection::vec(0usize..10, 1..200)) {
        let mut st = st;
        for m in picks {
            match apply_transition(&st, Transition::ALL[m]) {
                Ok(next) => {
                    prop_assert_eq!(next.population(), n);
                    prop_assert!(next.as_array().iter().all(|&c| c >= 0));
                    st = next;
                }
                Err(_) => prop_assert!(st.as_array().iter().zip(Transition::ALL[m].delta()).any(|(c, d)| c + d < 0)),
            }
        }
    }

    #[test]
    fn rates_are_finite_and_vanish_when_infeasible(
        (n, st) in state_strategy(), rp in 0.01f64..50.0, rm in 0.01f64..50.0, lam in 0.01f64..50.0,
    ) {
        let p = ModelParams::new(rp, rm, lam, n as u64).unwrap();
        let rates = transition_rates(&st, &p).unwrap();
        for (t, q) in Transition::ALL.iter().zip(rates) {
            prop_assert!(q.is_finite() && q >= 0.0);
            if q > 0.0 {
                prop_assert!(apply_transition(&st, *t).is_ok());
            }
        }
    }

    #[test]
    fn h_has_no_drift_without_infected_singles((n, st) in state_strategy(), rm in 0.1f64..10.0, f in 1.05f64..6.0) {
        let rp = (1.0 + 1.0 / rm) * f;
        let c = critical_structure(rp, rm).unwrap();
        let p = ModelParams::new(rp, rm, c.lambda, n as u64).unwrap();
        let st = PopulationState::new(st.s + st.i, 0, st.j, st.k, st.l);
        let (d, _) = drift_and_diffusivity(|x| x.i as f64 + c.gamma * x.j as f64 + c.eta * x.k as f64, &st, &p);
        let scale = (rm + c.lambda + 2.0) * c.eta.max(c.gamma) * (st.j + st.k + 1) as f64;
        prop_assert!(d.abs() <= 1e-10 * scale, "drift {} scale {}", d, scale);
    }

    #[test]
    fn ray_coordinates_are_a_composition((n, st) in state_strategy()) {
        let c = critical_structure(4.0, 1.0).unwrap();
        let p = ModelParams::new(4.0, 1.0, c.lambda, n as u64).unwrap();
        let o = observables(&st, &p, &c);
        match (o.u, o.v, o.w, o.q) {
            (Some(u), Some(v), Some(w), Some(q)) => {
                prop_assert!((u + v + w - 1.0).abs() < 1e-12);
                prop_assert!(q >= 0.0);
            }
            _ => prop_assert!(st.is_extinct()),
        }
    }

    #[test]
    fn ks_is_symmetric_and_rank_based(
        a in prop::collection::vec(-1e3f64..1e3, 1..60), b in prop::collection::vec(-1e3f64..1e3, 1..60),
    ) {
        let (d, _) = ks_two_sample(&a, &b).unwrap();
        prop_assert!((0.0..=1.0).contains(&d));
        prop_assert_eq!(d, ks_two_sample(&b, &a).unwrap().0);
        let t = |x: &f64| 3.0 * x + 1.0;
        let (ta, tb): (Vec<f64>, Vec<f64>) = (a.iter().map(t).collect(), b.iter().map(t).collect());
        prop_assert_eq!(d, ks_two_sample(&ta, &tb).unwrap().0);
        prop_assert_eq!(ks_two_sample(&a, &a).unwrap().0, 0.0);
    }

    #[test]
    fn ecdf_is_monotone(a in prop::collection::vec(-1e3f64..1e3, 1..60), mut xs in prop::collection::vec(-2e3f64..2e3, 2..20)) {
        let e = Ecdf::new(&a).unwrap();
        xs.sort_by(f64::total_cmp);
        let vals: Vec<f64> = xs.iter().map(|&x| e.eval(x)).collect();
        prop_assert!(vals.windows(2).all(|w| w[0] <= w[1]));
        prop_assert!(vals.iter().all(|v| (0.0..=1.0).contains(v)));
    }
}
