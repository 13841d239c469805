use avgcost::discounted::bellman_operator;
use avgcost::vanish::{self, default_radii, weak_liminf, VanishOptions};
use avgcost::verify;
use avgcost::{ball, catalog, sim, Construction, DiscountSchedule, MdpModel, Policy};
use proptest::prelude::*;

fn model_strategy() -> impl Strategy<Value = MdpModel> {
    (1usize..7, 1usize..4, any::<u64>(), 0.0f64..0.6)
        .prop_map(|(n, k, seed, sparsity)| catalog::random_finite(n, k, seed, sparsity))
}

fn sup_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Reorders states by `perm` (new index `i` holds old state `perm[i]`).
fn permute(model: &MdpModel, perm: &[usize]) -> MdpModel {
    let mut inv = vec![0; perm.len()];
    for (i, &p) in perm.iter().enumerate() {
        inv[p] = i;
    }
    MdpModel::new(
        perm.iter().map(|&p| model.states()[p].clone()).collect(),
        model.metric().clone(),
        model.actions().to_vec(),
        perm.iter().map(|&p| model.cost_table()[p].clone()).collect(),
        perm.iter()
            .map(|&p| {
                (0..model.n_actions())
                    .map(|a| {
                        model
                            .kernel_row(p, a)
                            .map(|r| r.iter().map(|&(y, q)| (inv[y], q)).collect())
                    })
                    .collect()
            })
            .collect(),
        model.continuity_class(),
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn bellman_operator_is_an_alpha_contraction(
        model in model_strategy(),
        alpha in 0.0f64..0.999,
        seed in any::<u64>(),
    ) {
        let n = model.n_states();
        let v: Vec<f64> = (0..n).map(|x| ((seed >> (x % 60)) & 0xff) as f64 / 17.0).collect();
        let w: Vec<f64> = (0..n).map(|x| ((seed >> ((x + 7) % 60)) & 0xff) as f64 / 13.0).collect();
        let d = sup_dist(&bellman_operator(&model, &v, alpha), &bellman_operator(&model, &w, alpha));
        prop_assert!(d <= alpha * sup_dist(&v, &w) + 1e-12);
    }

    #[test]
    fn bellman_operator_is_monotone(
        model in model_strategy(),
        alpha in 0.0f64..1.0,
        bumps in proptest::collection::vec(0.0f64..2.0, 6),
    ) {
        let n = model.n_states();
        let v: Vec<f64> = (0..n).map(|x| x as f64 * 0.3).collect();
        let w: Vec<f64> = (0..n).map(|x| v[x] + bumps[x]).collect();
        let tv = bellman_operator(&model, &v, alpha);
        let tw = bellman_operator(&model, &w, alpha);
        for x in 0..n {
            prop_assert!(tv[x] <= tw[x] + 1e-15);
        }
    }

    #[test]
    fn balls_nest_and_contain_their_center(
        model in model_strategy(),
        r1 in 1e-3f64..1.0,
        r2 in 1e-3f64..1.0,
    ) {
        let (lo, hi) = if r1 <= r2 { (r1, r2) } else { (r2, r1) };
        for x in 0..model.n_states() {
            let small = ball(&model, x, lo).unwrap();
            let big = ball(&model, x, hi).unwrap();
            prop_assert!(small.contains(&x));
            prop_assert!(small.iter().all(|y| big.contains(y)));
        }
    }

    #[test]
    fn weak_envelope_is_idempotent(model in model_strategy(), shift in 0usize..5) {
        let n = model.n_states();
        let members: Vec<Vec<f64>> = (0..4)
            .map(|k| (0..n).map(|x| ((x * 3 + k + shift) % 4) as f64).collect())
            .collect();
        let family: Vec<&[f64]> = members.iter().map(Vec::as_slice).collect();
        let radii = default_radii(&model);
        let once = weak_liminf(&family, 3, &model, &radii).unwrap().u.values;
        let again = weak_liminf(&[once.as_slice()], 0, &model, &radii).unwrap().u.values;
        prop_assert_eq!(once, again);
    }

    #[test]
    fn equicontinuity_is_two_sided_lower_semi_equicontinuity(
        model in model_strategy(),
        eps in 0.05f64..1.5,
        salt in any::<u32>(),
    ) {
        let n = model.n_states();
        let members: Vec<Vec<f64>> = (0..3)
            .map(|k| (0..n).map(|x| (((salt as usize) >> (x + k)) & 3) as f64 * 0.4).collect())
            .collect();
        let family: Vec<&[f64]> = members.iter().map(Vec::as_slice).collect();
        let neg_members: Vec<Vec<f64>> = members.iter().map(|f| f.iter().map(|v| -v).collect()).collect();
        let neg: Vec<&[f64]> = neg_members.iter().map(Vec::as_slice).collect();
        let ec = verify::check_equicontinuity(&family, &model, &[eps]).unwrap().passed();
        let lo = verify::check_lower_semi_equicontinuity(&family, &model, &[eps]).unwrap().passed();
        let hi = verify::check_lower_semi_equicontinuity(&neg, &model, &[eps]).unwrap().passed();
        prop_assert_eq!(ec, lo && hi);
    }

    #[test]
    fn continuity_verdicts_ignore_state_order(
        model in model_strategy(),
        salt in any::<u64>(),
        eps in 0.05f64..1.5,
    ) {
        let n = model.n_states();
        let f: Vec<f64> = (0..n).map(|x| ((salt >> (2 * x)) & 3) as f64 * 0.5).collect();
        let mut perm: Vec<usize> = (0..n).collect();
        perm.rotate_left((salt % n as u64) as usize);
        perm.reverse();
        let pm = permute(&model, &perm);
        let pf: Vec<f64> = perm.iter().map(|&p| f[p]).collect();
        let a = verify::check_equicontinuity(&[f.as_slice()], &model, &[eps]).unwrap();
        let b = verify::check_equicontinuity(&[pf.as_slice()], &pm, &[eps]).unwrap();
        prop_assert_eq!(a.verdict, b.verdict);
        let mut mapped: Vec<usize> = b.failing_states.iter().map(|&i| perm[i]).collect();
        mapped.sort_unstable();
        prop_assert_eq!(a.failing_states, mapped);
        let a = verify::check_lower_semi_equicontinuity(&[f.as_slice()], &model, &[eps]).unwrap();
        let b = verify::check_lower_semi_equicontinuity(&[pf.as_slice()], &pm, &[eps]).unwrap();
        prop_assert_eq!(a.verdict, b.verdict);
    }

    #[test]
    fn residual_verdicts_are_monotone_in_tol(
        model in model_strategy(),
        w in -1.0f64..2.0,
        t1 in 0.0f64..0.5,
        t2 in 0.0f64..0.5,
    ) {
        let n = model.n_states();
        let u: Vec<f64> = (0..n).map(|x| (x % 3) as f64 * 0.2).collect();
        let p = Policy::new(vec![0; n]);
        let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
        if verify::check_wacoi(&model, &p, &u, w, lo).unwrap().passed() {
            prop_assert!(verify::check_wacoi(&model, &p, &u, w, hi).unwrap().passed());
        }
        let (a, _) = verify::check_acoe(&model, &u, w, lo).unwrap();
        if a.passed() {
            prop_assert!(verify::check_acoe(&model, &u, w, hi).unwrap().0.passed());
        }
    }

    #[test]
    fn acoe_residual_bounds_wacoi_of_argmin(model in model_strategy(), w in -1.0f64..2.0) {
        let n = model.n_states();
        let u: Vec<f64> = (0..n).map(|x| ((x * 5) % 7) as f64 * 0.1).collect();
        let (acoe, argmin) = verify::check_acoe(&model, &u, w, 0.0).unwrap();
        let wacoi = verify::check_wacoi(&model, &argmin, &u, w, 0.0).unwrap();
        prop_assert!(wacoi.residual.unwrap() <= acoe.residual.unwrap() + 1e-15);
    }

    #[test]
    fn simulation_is_reproducible(
        model in model_strategy(),
        seed in any::<u64>(),
        horizon in 1usize..300,
    ) {
        let p = Policy::new(vec![0; model.n_states()]);
        let a = sim::simulate_average_cost(&model, &p, 0, horizon, 3, seed).unwrap();
        let b = sim::simulate_average_cost(&model, &p, 0, horizon, 3, seed).unwrap();
        prop_assert_eq!(a, b);
        let ta = sim::simulate_trajectory(&model, &p, 0, horizon, seed).unwrap();
        prop_assert_eq!(ta, sim::simulate_trajectory(&model, &p, 0, horizon, seed).unwrap());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn weak_never_exceeds_pointwise(
        model in model_strategy(),
        gamma in 0.3f64..0.7,
        n_max in 3usize..20,
    ) {
        let s = DiscountSchedule::geometric(gamma, n_max).unwrap();
        let d = vanish::sequence_diagnostics(&model, &s, &Default::default()).unwrap();
        let weak = vanish::limit_relative_value_weak(&d, &model, None).unwrap();
        let point = vanish::limit_relative_value_pointwise(&d);
        for x in 0..model.n_states() {
            prop_assert!(weak.u[x] <= point[x]);
        }
        for m in 1..weak.u_m.len() {
            for x in 0..model.n_states() {
                prop_assert!(weak.u_m[m][x] >= weak.u_m[m - 1][x]);
                prop_assert!(weak.u_lower_m[m][x] >= weak.u_lower_m[m - 1][x]);
                prop_assert!(weak.u_lower_m[m][x] <= weak.u_m[m][x]);
            }
        }
    }

    #[test]
    fn extraction_is_deterministic_across_runs(model in model_strategy()) {
        let s: DiscountSchedule = "geometric:0.5:15".parse().unwrap();
        let serial = VanishOptions {
            sequence: vanish::SequenceOptions { parallel: false, ..Default::default() },
            construction: Some(Construction::Pointwise),
            ..Default::default()
        };
        let parallel = VanishOptions { construction: Some(Construction::Pointwise), ..Default::default() };
        let a = vanish::run(&model, &s, &serial).unwrap();
        let b = vanish::run(&model, &s, &parallel).unwrap();
        prop_assert_eq!(&a.policy, &b.policy);
        prop_assert_eq!(a, b);
    }
}
