use gradtest::asymptotics::{d_opt, np_benchmark_power, power_one_sided};
use gradtest::measures::{DiscreteMeasure, Measure, ProductSample};
use gradtest::tangents::{d_inner, DWeightedGradient, ProductTangent, Tangent};
use gradtest::testing::{sigma1_exact, t_statistic};
use gradtest::{CompositeOp, Functional, InvariantScore, Score};
use proptest::prelude::*;

fn measure(locs: &[f64], raw: &[f64]) -> Measure<f64> {
    let s: f64 = raw.iter().sum();
    let atoms = locs.iter().copied().zip(raw.iter().map(|w| w / s)).collect();
    DiscreteMeasure::new(atoms).unwrap().into()
}

prop_compose! {
    fn arb_measure()(k in 2usize..6)(
        locs in prop::collection::btree_set(-50i32..50, k),
        raw in prop::collection::vec(0.1f64..1.0, k),
    ) -> Measure<f64> {
        let locs: Vec<f64> = locs.into_iter().map(|v| f64::from(v) / 10.0).collect();
        measure(&locs, &raw)
    }
}

fn tangent_on(base: &Measure<f64>, raw: &[f64]) -> Tangent<f64> {
    let vals = (0..base.cell_count()).map(|i| raw[i % raw.len()]).collect();
    Tangent::centered(base.clone(), vals).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn invariant_functional_ignores_increasing_transforms(
        p in arb_measure(),
        q in arb_measure(),
        slope in 0.1f64..5.0,
        shift in -3.0f64..3.0,
        kink in -2.0f64..2.0,
    ) {
        // Strictly increasing and piecewise linear with a kink.
        let f = |x: f64| if x < kink { slope * x + shift } else { slope * kink + shift + 3.0 * slope * (x - kink) };
        let map = |m: &Measure<f64>| -> Measure<f64> {
            let d = m.as_discrete().unwrap();
            let atoms = d.atoms().map(|(x, w)| (f(x), w)).collect();
            DiscreteMeasure::new(atoms).unwrap().into()
        };
        for h in [InvariantScore::Id, InvariantScore::Square] {
            let k = Functional::Invariant { h };
            let before = k.evaluate(&p, &q).unwrap();
            let after = k.evaluate(&map(&p), &map(&q)).unwrap();
            prop_assert!((before - after).abs() < 1e-10);
        }
    }

    #[test]
    fn statistic_is_scaled_double_sum(
        p in arb_measure(),
        q in arb_measure(),
        xi in prop::collection::vec(0usize..5, 1..5),
        yi in prop::collection::vec(0usize..5, 1..6),
    ) {
        let gp = Functional::Wilcoxon.gradient(&p, &q).unwrap();
        let px = p.as_discrete().unwrap().locations().to_vec();
        let qy = q.as_discrete().unwrap().locations().to_vec();
        let x: Vec<f64> = xi.iter().map(|&i| px[i % px.len()]).collect();
        let y: Vec<f64> = yi.iter().map(|&j| qy[j % qy.len()]).collect();
        let s = ProductSample::new(x.clone(), y.clone()).unwrap();
        let mut u = 0.0;
        for &a in &x {
            for &b in &y {
                u += gp.k1.at(a).unwrap() + gp.k2.at(b).unwrap();
            }
        }
        let n = (x.len() + y.len()) as f64;
        let direct = n.sqrt() * u / (x.len() * y.len()) as f64;
        prop_assert!((t_statistic(&gp, &s).unwrap() - direct).abs() < 1e-12);
    }

    #[test]
    fn sigma1_is_the_d_norm_of_k_hat(p in arb_measure(), q in arb_measure(), d in 0.05f64..0.95) {
        let gp = Functional::Wilcoxon.gradient(&p, &q).unwrap();
        prop_assume!(!gp.is_degenerate());
        let w = DWeightedGradient::new(&gp, d).unwrap();
        prop_assert!((w.d_norm - sigma1_exact(&gp, d).unwrap()).abs() < 1e-10);
    }

    #[test]
    fn k_hat_represents_the_derivative(
        p in arb_measure(),
        q in arb_measure(),
        r1 in prop::collection::vec(-1.0f64..1.0, 5),
        r2 in prop::collection::vec(-1.0f64..1.0, 5),
        d in 0.05f64..0.95,
    ) {
        let gp = Functional::VonMises { h: gradtest::Kernel::ProductXY }.gradient(&p, &q).unwrap();
        let g = ProductTangent::new(tangent_on(&p, &r1), tangent_on(&q, &r2));
        let w = DWeightedGradient::new(&gp, d).unwrap();
        let lhs = d_inner(&g, &w.k_hat, d).unwrap();
        prop_assert!((lhs - g.pairing(&gp).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn chain_rule_matches_one_sample_gradients(
        p in arb_measure(),
        q in arb_measure(),
    ) {
        let id = Functional::Composite { op: CompositeOp::Sum, f1: Score::Id, f2: Score::One };
        let sq = Functional::Composite { op: CompositeOp::Sum, f1: Score::One, f2: Score::Square };
        let both = Functional::Composite { op: CompositeOp::Sum, f1: Score::Id, f2: Score::Square };
        let (a, b, c) = (id.gradient(&p, &q).unwrap(), sq.gradient(&p, &q).unwrap(), both.gradient(&p, &q).unwrap());
        for i in 0..p.cell_count() {
            prop_assert!((c.k1.values()[i] - a.k1.values()[i] - b.k1.values()[i]).abs() < 1e-12);
        }
        for j in 0..q.cell_count() {
            prop_assert!((c.k2.values()[j] - a.k2.values()[j] - b.k2.values()[j]).abs() < 1e-12);
        }

        let m1 = p.mean();
        let m2 = Score::Square.mean(&q);
        prop_assume!(m2 > 1e-3);
        for (op, c1, c2) in [
            (CompositeOp::Product, m2, m1),
            (CompositeOp::Quotient, 1.0 / m2, -m1 / (m2 * m2)),
        ] {
            let gp = Functional::Composite { op, f1: Score::Id, f2: Score::Square }.gradient(&p, &q).unwrap();
            for i in 0..p.cell_count() {
                prop_assert!((gp.k1.values()[i] - c1 * a.k1.values()[i]).abs() < 1e-12 * (1.0 + c1.abs()));
            }
            for j in 0..q.cell_count() {
                prop_assert!((gp.k2.values()[j] - c2 * b.k2.values()[j]).abs() < 1e-12 * (1.0 + c2.abs()) * 100.0);
            }
        }
    }

    #[test]
    fn envelope_dominates_test_power(
        p in arb_measure(),
        q in arb_measure(),
        r1 in prop::collection::vec(-1.0f64..1.0, 5),
        r2 in prop::collection::vec(-1.0f64..1.0, 5),
        d in 0.05f64..0.95,
        t in 0.01f64..5.0,
    ) {
        let gp = Functional::Wilcoxon.gradient(&p, &q).unwrap();
        prop_assume!(!gp.is_degenerate());
        let g = ProductTangent::new(tangent_on(&p, &r1), tangent_on(&q, &r2));
        let (a, b) = (g.g1.l2_norm().powi(2), g.g2.l2_norm().powi(2));
        prop_assume!(a + b > 1e-12);
        let sigma1 = sigma1_exact(&gp, d).unwrap();
        let achieved = power_one_sided(t * g.pairing(&gp).unwrap(), sigma1, 0.05).unwrap();
        let envelope = np_benchmark_power(t, a, b, d, 0.05).unwrap();
        prop_assert!(achieved <= envelope + 1e-12);
    }

    #[test]
    fn optimal_allocation_is_uniformly_best(p in arb_measure(), q in arb_measure()) {
        let gp = Functional::Wilcoxon.gradient(&p, &q).unwrap();
        let (a, b) = gp.norms_sq();
        prop_assume!(a > 1e-6 && b > 1e-6);
        let best = d_opt(a.sqrt(), b.sqrt()).unwrap();
        let s_best = sigma1_exact(&gp, best).unwrap();
        for theta in [0.5, 1.0, 2.0] {
            let top = power_one_sided(theta, s_best, 0.05).unwrap();
            for i in 1..100 {
                let s = sigma1_exact(&gp, i as f64 / 100.0).unwrap();
                prop_assert!(power_one_sided(theta, s, 0.05).unwrap() <= top + 1e-14);
            }
        }
    }
}

#[test]
fn envelope_is_attained_along_k_hat() {
    let p = measure(&[0.0, 1.0, 2.5], &[0.2, 0.5, 0.3]);
    let q = measure(&[0.5, 1.5], &[0.6, 0.4]);
    let gp = Functional::Wilcoxon.gradient(&p, &q).unwrap();
    let d = 0.4;
    let w = DWeightedGradient::new(&gp, d).unwrap();
    let (a, b) = (w.k_hat.g1.l2_norm().powi(2), w.k_hat.g2.l2_norm().powi(2));
    for t in [0.1, 0.7, 2.0] {
        let theta = t * w.k_hat.pairing(&gp).unwrap();
        let test = power_one_sided(theta, sigma1_exact(&gp, d).unwrap(), 0.05).unwrap();
        let envelope = np_benchmark_power(t, a, b, d, 0.05).unwrap();
        assert!((test - envelope).abs() < 1e-12);
    }
}

#[test]
fn analytic_power_over_d_is_unimodal() {
    let p = measure(&[0.0, 1.0, 2.5], &[0.2, 0.5, 0.3]);
    let q = measure(&[0.5, 1.5, 4.0], &[0.3, 0.3, 0.4]);
    let gp = Functional::Wilcoxon.gradient(&p, &q).unwrap();
    let values: Vec<f64> = (1..100)
        .map(|i| power_one_sided(1.0, sigma1_exact(&gp, i as f64 / 100.0).unwrap(), 0.05).unwrap())
        .collect();
    let peak = values.iter().enumerate().fold(0, |m, (i, v)| if *v > values[m] { i } else { m });
    assert!(values[..=peak].windows(2).all(|w| w[1] >= w[0]));
    assert!(values[peak..].windows(2).all(|w| w[1] <= w[0]));
}
