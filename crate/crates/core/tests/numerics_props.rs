use dtcascade::numerics::{fit_kl_envelope, horizon_index, kl_compose, kl_shift, EnvelopeFit};
use dtcascade::{ClassK, KlBound, Trajectory};
use proptest::prelude::*;

fn grid(n: usize, hi: f64) -> Vec<f64> {
    (0..n).map(|i| hi * i as f64 / (n - 1) as f64).collect()
}

proptest! {
    #[test]
    fn horizon_index_brackets_horizon(l in 1e-3f64..1e3, t in 1e-4f64..1.0) {
        let v = horizon_index(l, t).unwrap();
        prop_assert!(v as f64 * t <= l);
        prop_assert!(l < (v + 1) as f64 * t);
    }

    #[test]
    fn horizon_index_on_exact_multiples(n in 0usize..5000, t in prop::sample::select(vec![0.1, 0.01, 0.3, 0.001, 0.05])) {
        let l = n as f64 * t;
        let v = horizon_index(l, t).unwrap();
        prop_assert!(v as f64 * t <= l && l < (v + 1) as f64 * t);
    }

    #[test]
    fn shift_dominates_exp(m in 1.0f64..100.0, lambda in 1e-3f64..5.0, c in 0.0f64..10.0) {
        let b = KlBound::exp(m, lambda);
        let s = kl_shift(&b, c).unwrap();
        for si in grid(50, 10.0) {
            for ti in grid(50, 20.0) {
                let lhs = b.eval(si, ti);
                let rhs = s.eval(si, ti + c);
                prop_assert!(lhs <= rhs + 1e-12 * lhs.abs().max(1.0), "{lhs} > {rhs}");
            }
        }
    }

    #[test]
    fn composed_bound_is_kl(
        m1 in 1.0f64..5.0, l1 in 0.1f64..2.0,
        m2 in 1.0f64..5.0, l2 in 0.1f64..2.0,
        g in 0.1f64..3.0, c in 0.0f64..2.0, global in any::<bool>(),
    ) {
        let b = kl_compose(&KlBound::exp(m1, l1), &KlBound::exp(m2, l2), &KlBound::exp(m1, l2), &ClassK::linear(g), c, global).unwrap();
        prop_assert!(b.is_monotone_on(&grid(30, 10.0), &grid(30, 20.0)));
        for t in grid(10, 5.0) {
            prop_assert_eq!(b.eval(0.0, t), 0.0);
        }
    }

    #[test]
    fn accepted_envelope_is_sound(rates in prop::collection::vec(0.5f64..1.05, 1..6), n0 in 0.1f64..5.0, nu in 0.0f64..0.2) {
        let t = 0.1;
        let trajs: Vec<Trajectory> = rates
            .iter()
            .map(|r| Trajectory::new(t, 0, (0..60).map(|k| vec![n0 * r.powi(k)]).collect()))
            .collect();
        if let EnvelopeFit::Fitted { m, lambda } = fit_kl_envelope(&trajs, nu).unwrap() {
            for tr in &trajs {
                let s = tr.norms[0];
                for (k, n) in tr.norms.iter().enumerate() {
                    let b = (m * s * (-lambda * k as f64 * t).exp()).max(nu);
                    prop_assert!(*n <= b + 1e-9);
                }
            }
        }
    }
}

#[test]
fn class_k_json_roundtrip() {
    let g = ClassK::Sum { terms: vec![ClassK::linear(2.0), ClassK::power(0.5, 2.0)] };
    let s = serde_json::to_string(&g).unwrap();
    assert!(s.contains("\"kind\":\"sum\""));
    assert_eq!(serde_json::from_str::<ClassK>(&s).unwrap(), g);
    let b: KlBound = serde_json::from_str(r#"{"kind":"exp","params":{"m":2.0,"lambda":0.5}}"#).unwrap();
    assert_eq!(b, KlBound::exp(2.0, 0.5));
}
