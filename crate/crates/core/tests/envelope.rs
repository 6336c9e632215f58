use btbeam::analysis::{containment_report, fit_power_exponent, local_decay_rate};
use btbeam::envelope::{
    envelope_constants, j_function, k_function, lower_envelope, nakao_bound, upper_envelope, verify_nakao_hypothesis,
    EnvelopeConstants, LowerCoeffVariant, NakaoInput,
};
use btbeam::integrate::simulate;
use btbeam::model::{make_initial, InitialKind, ModelParams};
use btbeam::operators::DiscreteOperators;
use btbeam::{EnergyTrace, Error};
use proptest::prelude::*;

fn constants(e0: f64, alpha: f64, q: f64, d: f64, variant: LowerCoeffVariant) -> EnvelopeConstants {
    EnvelopeConstants::new(e0, alpha, q, 0.0, d, d * d, variant).unwrap()
}

fn params_strategy() -> impl Strategy<Value = (f64, f64, f64, f64)> {
    (0.5f64..3.0, 0.01f64..10.0, 0.01f64..10.0, 0.001f64..1.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn remark_ordering((q, alpha, e0, d) in params_strategy(), t in 0.0f64..1e4) {
        let ec = constants(e0, alpha, q, d, LowerCoeffVariant::Remark);
        prop_assert!(ec.j_of_e0 >= 1.0 / (2f64.powf(2.0 * q + 1.0) * alpha));
        prop_assert!(lower_envelope(t, &ec) <= upper_envelope(t, &ec));
        let th = ec.with_variant(LowerCoeffVariant::Theorem);
        prop_assert!(lower_envelope(t, &th) <= upper_envelope(t, &th));
    }

    #[test]
    fn envelopes_positive_and_non_increasing((q, alpha, e0, d) in params_strategy(), t in 0.0f64..1e4, dt in 0.0f64..10.0) {
        let ec = constants(e0, alpha, q, d, LowerCoeffVariant::Theorem);
        for f in [lower_envelope, upper_envelope] {
            let (a, b) = (f(t, &ec), f(t + dt, &ec));
            prop_assert!(a > 0.0 && b > 0.0);
            prop_assert!(b <= a);
        }
        prop_assert!((lower_envelope(0.0, &ec) - e0).abs() <= 1e-14 * e0);
        prop_assert_eq!(upper_envelope(0.5, &ec), e0);
    }

    #[test]
    fn nakao_bound_is_upper_envelope((q, alpha, e0, d) in params_strategy(), t in 0.0f64..1e4) {
        let ec = constants(e0, alpha, q, d, LowerCoeffVariant::Theorem);
        let inp = NakaoInput::new(vec![e0], ec.j_of_e0, q).unwrap();
        let nb = nakao_bound(&inp, t).unwrap();
        let ue = upper_envelope(t, &ec);
        prop_assert!((nb - ue).abs() <= 1e-14 * ue);
    }
}

#[test]
fn j_from_its_definition() {
    let (e0, alpha, q, d): (f64, f64, f64, f64) = (1.3, 0.7, 1.5, 0.045);
    let k = (64.0 * d * d + 1.0) * alpha.powf(-1.0 / (q + 1.0))
        + 2f64.powf(q + 1.0) * d * d * alpha.powf((2.0 * q + 1.0) / (q + 1.0)) * e0.powf(2.0 * q);
    let j = (4.0f64 / 3.0).powf(q + 1.0) * ((2.0 * e0).powf(q / (q + 1.0)) + 2.0 * k).powf(q + 1.0);
    assert!((k_function(e0, alpha, q, d) - k).abs() <= 1e-14 * k);
    assert!((j_function(e0, alpha, q, d) - j).abs() <= 1e-13 * j);
}

#[test]
fn asymptotic_sandwich() {
    let ec = constants(1.0, 1.0, 2.0, 0.0447, LowerCoeffVariant::Theorem);
    let (clo, chi) = (ec.lower_asymptotic_constant(), ec.upper_asymptotic_constant());
    let mut prev_hi = 0.0;
    for t in [100.0f64, 1e3, 1e4, 1e5, 1e6] {
        let scaled_lo = t.powf(0.5) * lower_envelope(t, &ec);
        let scaled_hi = t.powf(0.5) * upper_envelope(t, &ec);
        assert!(scaled_lo <= clo * (1.0 + 1e-12));
        assert!(scaled_lo >= 0.9 * clo);
        // J is large, so the upper envelope reaches its rate only for t ≫ J/q
        assert!(scaled_hi <= chi * (1.0 + 1e-12) && scaled_hi > prev_hi);
        prev_hi = scaled_hi;
    }
    assert!(prev_hi >= 0.99 * chi);
}

fn frictional_trace(t_end: f64) -> (EnergyTrace, EnvelopeConstants) {
    let p = ModelParams { q: 1.0, alpha: 1.0, kappa: 0.0, n: 32, t_end, sample_every: 2, ..Default::default() };
    let ops = DiscreteOperators::new(1.0, 32).unwrap();
    let init = make_initial(&InitialKind::SinSqMode { k: 1, amp: 0.1 }, &ops).unwrap();
    let tr = simulate(&p, &init).unwrap();
    let ec = envelope_constants(tr.e0, &p, &ops, LowerCoeffVariant::Theorem).unwrap();
    (tr, ec)
}

#[test]
fn simulated_run_satisfies_window_hypothesis() {
    let (tr, ec) = frictional_trace(50.0);
    let rep = verify_nakao_hypothesis(&tr, &ec, 0.05).unwrap();
    assert!(rep.pass, "worst ratio {}", rep.worst_ratio);
    assert_eq!(rep.windows.len(), 50);
    assert!(rep.degenerate.is_empty());
    // the attached envelope columns match the constants
    for s in &tr.samples {
        assert_eq!(s.lower_env, Some(lower_envelope(s.t, &ec)));
    }
}

#[test]
fn simulated_run_is_contained() {
    let (tr, ec) = frictional_trace(200.0);
    let rep = containment_report(&tr, &ec, 0.01, 0.01).unwrap();
    assert!(rep.pass, "{rep:?}");
    assert!(rep.min_margin_lo >= -1e-12);
}

/// The upper envelope is a fixed point of the window recursion once it decays,
/// i.e. on `t ≥ 1`; on `[0, 1]` it is flat and the window difference vanishes.
#[test]
fn upper_envelope_trace_satisfies_hypothesis_after_one() {
    let ec = constants(1.0, 1.0, 1.0, 0.0447, LowerCoeffVariant::Theorem);
    let p = ModelParams { q: 1.0, alpha: 1.0, kappa: 0.0, ..Default::default() };
    let trace = EnergyTrace::from_energies(p.clone(), (0..=2000).map(|i| {
        let t = 1.0 + i as f64 * 0.05;
        (t, upper_envelope(t, &ec))
    }));
    let rep = verify_nakao_hypothesis(&trace, &ec, 0.05).unwrap();
    assert!(rep.pass, "worst ratio {}", rep.worst_ratio);

    let from_zero = EnergyTrace::from_energies(p, (0..=400).map(|i| {
        let t = i as f64 * 0.05;
        (t, upper_envelope(t, &ec))
    }));
    let rep = verify_nakao_hypothesis(&from_zero, &ec, 0.05).unwrap();
    assert!(!rep.pass);
    assert_eq!(rep.degenerate, vec![0.0]);
}

#[test]
fn hypothesis_preconditions() {
    let ec = constants(1.0, 1.0, 1.0, 0.0447, LowerCoeffVariant::Theorem);
    let p = ModelParams::default();
    let short = EnergyTrace::from_energies(p.clone(), (0..=15).map(|i| (i as f64 * 0.1, 1.0)));
    assert!(matches!(verify_nakao_hypothesis(&short, &ec, 0.05), Err(Error::TooShort { .. })));
    let sparse = EnergyTrace::from_energies(p.clone(), (0..=10).map(|i| (i as f64 * 0.5, 1.0)));
    assert!(matches!(verify_nakao_hypothesis(&sparse, &ec, 0.05), Err(Error::TooSparse { .. })));
    let constant = EnergyTrace::from_energies(p, (0..=100).map(|i| (i as f64 * 0.05, 0.5)));
    let rep = verify_nakao_hypothesis(&constant, &ec, 0.05).unwrap();
    assert!(!rep.pass);
    assert_eq!(rep.degenerate.len(), rep.windows.len());
}

#[test]
fn decay_rate_tail_of_moderate_run() {
    let p = ModelParams { q: 1.0, alpha: 1.0, n: 16, t_end: 500.0, ..Default::default() };
    let ops = DiscreteOperators::new(1.0, 16).unwrap();
    let init = make_initial(&InitialKind::SinSqMode { k: 1, amp: 0.1 }, &ops).unwrap();
    let tr = simulate(&p, &init).unwrap();
    let fit = fit_power_exponent(&tr, 0.5).unwrap();
    assert!((fit.exponent + 1.0).abs() < 0.2, "{fit:?}");
    assert!(local_decay_rate(&tr).unwrap().iter().all(|r| r.1 > -1e-6));
}
