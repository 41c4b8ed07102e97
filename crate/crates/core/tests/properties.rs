use proptest::prelude::*;
use qmspline::asymptotics::FitRange;
use qmspline::design::intermediate_bounds;
use qmspline::qmerror::{pointwise_error_with, Precision};
use qmspline::*;

fn model(s: &str) -> CovarianceModel {
    make_model(s.parse().unwrap()).unwrap()
}

fn design_from(mut inner: Vec<f64>) -> Design {
    inner.sort_by(f64::total_cmp);
    inner.dedup_by(|a, b| (*a - *b).abs() < 1e-3);
    let mut knots = vec![0.0];
    knots.extend(inner);
    knots.push(1.0);
    Design::new(knots).unwrap()
}

fn inner_knots(max: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.01f64..0.99, 0..max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn power_knots_move_left_as_lambda_grows(l1 in 1.0f64..4.0, dl in 0.01f64..3.0, n in 2usize..64) {
        let a = generate_knots(&GeneratingDensity::power(l1).unwrap(), n).unwrap();
        let b = generate_knots(&GeneratingDensity::power(l1 + dl).unwrap(), n).unwrap();
        for i in 1..n {
            prop_assert!(b.knots()[i] < a.knots()[i]);
        }
    }

    #[test]
    fn power_design_gaps_bounded_by_lambda_over_n(lambda in 1.0f64..6.0, n in 1usize..200) {
        let d = generate_knots(&GeneratingDensity::power(lambda).unwrap(), n).unwrap();
        prop_assert!(d.max_gap() <= lambda / n as f64 * (1.0 + 1e-12));
    }

    #[test]
    fn condition_is_monotone_in_lambda(l in 1.0f64..6.0, dl in 0.0f64..3.0, k in prop::sample::select(vec![1usize, 3])) {
        let profile = model("distorted_stationary(0.9)").profile().clone();
        let variant = if k == 1 { ConditionVariant::C } else { ConditionVariant::CPrime };
        let p = NormOrder::Finite(2.0);
        let at = |lambda: f64| {
            check_condition(&profile, &GeneratingDensity::power(lambda).unwrap(), p, variant, k).unwrap().satisfied
        };
        if at(l) {
            prop_assert!(at(l + dl));
        }
    }

    #[test]
    fn intermediate_designs_respect_step_bounds(kappa in 0.4f64..0.7, n in 16usize..400) {
        let profile = model("time_changed_fbm(0.8)").profile().clone();
        let d = intermediate_design(&profile, kappa, n, NormOrder::Infinity).unwrap();
        prop_assert_eq!(d.n(), n);
        for (h, bound) in intermediate_bounds(&profile, kappa, NormOrder::Infinity, &d).unwrap() {
            prop_assert!(h <= bound * (1.0 + 1e-12), "{} > {}", h, bound);
        }
    }

    #[test]
    fn brownian_bridge_oracle(inner in inner_knots(10), t in 0.0f64..1.0) {
        let d = design_from(inner);
        let (a, b) = d.interval(d.locate(t));
        let want = ((t - a) * (b - t) / (b - a)).sqrt();
        let got = pointwise_error(&model("fbm(0.5)"), &d, &SplineScheme::uniform(1).unwrap(), t).unwrap();
        prop_assert!((got - want).abs() <= 1e-12);
    }

    #[test]
    fn error_vanishes_at_knots(inner in inner_knots(6), kind in prop::sample::select(vec![
        ("fbm(0.3)", 1usize, 1usize),
        ("time_changed_fbm(0.8)", 1, 1),
        ("distorted_stationary(0.9)", 1, 3),
    ])) {
        let (name, q, k) = kind;
        let m = model(name);
        let d = design_from(inner);
        let s = SplineScheme::new(q, k).unwrap();
        for &t in d.knots() {
            prop_assert!(pointwise_error(&m, &d, &s, t).unwrap() <= 1e-9);
        }
    }

    #[test]
    fn pointwise_error_is_nonnegative(inner in inner_knots(6), t in 0.0f64..1.0) {
        let d = design_from(inner);
        let s = SplineScheme::new(1, 3).unwrap();
        let e = pointwise_error_with(&model("distorted_stationary(0.9)"), &d, &s, t, Precision::Extended).unwrap();
        prop_assert!(e.value >= 0.0);
        prop_assert!(e.variance >= -1e-25);
    }

    #[test]
    fn fit_recovers_exact_power_laws(c in 0.01f64..100.0, rho in 0.1f64..5.0) {
        let table: Vec<(usize, f64)> = (4..12).map(|j| {
            let n = 1usize << j;
            (n, c * (n as f64).powf(-rho))
        }).collect();
        for range in [FitRange::UpperHalf, FitRange::Full] {
            let f = fit_rate(&table, range).unwrap();
            prop_assert!((f.rho - rho).abs() <= 1e-12 * rho.max(1.0));
            prop_assert!((f.constant() - c).abs() <= 1e-11 * c);
            prop_assert!((0.0..=1.0).contains(&f.r_squared));
        }
    }
}

#[test]
fn adding_a_knot_never_increases_sup_error() {
    let s = SplineScheme::uniform(1).unwrap();
    for name in ["fbm(0.5)", "fbm(0.3)", "fbm(0.8)"] {
        let m = model(name);
        let mut knots = vec![0.0, 0.3, 0.55, 1.0];
        let mut prev = norm_error(&m, &Design::new(knots.clone()).unwrap(), &s, NormOrder::Infinity).unwrap().value;
        for extra in [0.8, 0.1, 0.42, 0.9, 0.2] {
            knots.push(extra);
            knots.sort_by(f64::total_cmp);
            let e = norm_error(&m, &Design::new(knots.clone()).unwrap(), &s, NormOrder::Infinity).unwrap().value;
            assert!(e <= prev + 1e-9, "{name}: {e} > {prev}");
            prev = e;
        }
    }
}

#[test]
fn extended_precision_deficit_stays_tiny() {
    let m = model("distorted_stationary(0.9)");
    let s = SplineScheme::new(1, 3).unwrap();
    for n in [16, 64, 256] {
        let d = generate_knots(&GeneratingDensity::power(4.0).unwrap(), n).unwrap();
        let r = norm_error(&m, &d, &s, NormOrder::Finite(2.0)).unwrap();
        assert!(r.diagnostics.min_deficit >= -1e-25, "n = {n}: {}", r.diagnostics.min_deficit);
    }
}

#[test]
fn brownian_b_constants() {
    let inf = b_constant(0, 0.5, 1, NormOrder::Infinity).unwrap().value;
    let two = b_constant(0, 0.5, 1, NormOrder::Finite(2.0)).unwrap().value;
    assert!((inf - 0.5).abs() <= 1e-8);
    assert!((two - 1.0 / 6f64.sqrt()).abs() <= 1e-8);
}
