use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use wdmpairs_core::estimate::*;
use wdmpairs_core::rates::{routing_probs, RoutingProbs};
use wdmpairs_core::spectrum::gaussian_scale_for_fwhm;
use wdmpairs_core::*;

const ATTENUATIONS: [f64; 6] = [0.0, 2.6, 5.2, 7.8, 10.4, 13.0];
const GATES: u64 = 30_000_000;

/// Nineteen channels to each port over the filtered degenerate spectrum.
fn wide_routing() -> RoutingProbs {
    let pdf = PairSpectrum::parametric(LobeModel::Gaussian, 0.0, gaussian_scale_for_fwhm(4.6))
        .unwrap()
        .apply_bandpass(0.0, 4.6)
        .unwrap()
        .normalize()
        .unwrap();
    let mut plan = SwitchPlan::for_bands(&[Band::C], ChannelShape::default()).unwrap();
    for n in 1..=19 {
        plan.assign(n, PortId('A')).unwrap();
        plan.assign(-n, PortId('B')).unwrap();
    }
    assert!(plan.validate().is_ok());
    let a = plan.compile_port_transfer(PortId('A')).unwrap();
    let b = plan.compile_port_transfer(PortId('B')).unwrap();
    routing_probs(&pdf, &a, &b).unwrap()
}

fn truth() -> FitParams {
    FitParams { mu0: 0.5, kappa1: 0.1, kappa2: 0.1 }
}

#[test]
fn noiseless_data_is_recovered_exactly() {
    let routing = wide_routing();
    let data = expected_dataset(&truth(), &routing, 1e-4, 1e-4, &ATTENUATIONS, 1_000_000_000_000_000).unwrap();
    let fit = fit(&data, None).unwrap();
    let p = fit.params;
    for (got, want) in [(p.mu0, 0.5), (p.kappa1, 0.1), (p.kappa2, 0.1)] {
        assert!((got - want).abs() / want < 1e-8, "{got} vs {want}");
    }
    assert!(fit.converged && fit.warnings.is_empty());
    assert_eq!(fit.dof, 15);
}

#[test]
fn noisy_data_recovers_within_desk_tolerances() {
    let routing = wide_routing();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let data = synthesize(&truth(), &routing, 1e-4, 1e-4, &ATTENUATIONS, GATES, &mut rng).unwrap();
    let fit = fit(&data, None).unwrap();
    assert!((fit.params.mu0 - 0.5).abs() < 0.06, "{:?}", fit.params);
    assert!((fit.params.kappa1 - 0.1).abs() < 0.005);
    assert!((fit.params.kappa2 - 0.1).abs() < 0.005);
    // 15 residuals, 3 parameters: chi-square should be of order 12.
    assert!(fit.chi_square < 40.0, "{}", fit.chi_square);
}

#[test]
fn single_attenuation_is_flagged() {
    let routing = wide_routing();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let data = synthesize(&truth(), &routing, 1e-4, 1e-4, &[3.0], GATES, &mut rng).unwrap();
    let fit = fit(&data, None).unwrap();
    assert!(fit
        .warnings
        .iter()
        .any(|w| matches!(w, FitWarning::FewAttenuations { distinct: 1 })));
    assert_eq!(fit.dof, 0);
}

#[test]
fn round_trip_errors_are_calibrated() {
    let routing = wide_routing();
    let mut covered = 0;
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(10_000 + seed);
        let data = synthesize(&truth(), &routing, 1e-4, 1e-4, &ATTENUATIONS, GATES, &mut rng).unwrap();
        let f = fit(&data, None).unwrap();
        let ok = (f.params.mu0 - 0.5).abs() <= 3.0 * f.std_errors.mu0
            && (f.params.kappa1 - 0.1).abs() <= 3.0 * f.std_errors.kappa1
            && (f.params.kappa2 - 0.1).abs() <= 3.0 * f.std_errors.kappa2;
        covered += ok as usize;
    }
    assert!(covered >= 95, "{covered}/100 within 3 sigma");
}

#[test]
fn four_times_the_gates_halves_the_errors() {
    let routing = wide_routing();
    let mean_errors = |gates: u64| {
        let mut sum = [0.0; 3];
        for seed in 0..10u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(500 + seed);
            let data = synthesize(&truth(), &routing, 1e-4, 1e-4, &ATTENUATIONS, gates, &mut rng).unwrap();
            let e = fit(&data, None).unwrap().std_errors;
            sum[0] += e.mu0;
            sum[1] += e.kappa1;
            sum[2] += e.kappa2;
        }
        sum
    };
    let base = mean_errors(GATES);
    let more = mean_errors(4 * GATES);
    for k in 0..3 {
        let ratio = more[k] / base[k];
        assert!((ratio - 0.5).abs() <= 0.1, "parameter {k}: ratio {ratio}");
    }
}

#[test]
fn multiple_pairs_lift_coincidences_above_single_pair_curve() {
    let routing = wide_routing();
    let p = truth();
    let low = model_at(&p, 0.0, &routing, 1e-4, 1e-4);
    assert!(low.p12 > low.p12_single_pair * 1.01, "{low:?}");
    let high = model_at(&p, 20.0, &routing, 1e-4, 1e-4);
    assert!((high.p12 - high.p12_single_pair) / high.p12 < (low.p12 - low.p12_single_pair) / low.p12);
}

#[test]
fn efficiency_from_coupling_loss() {
    let result = FitResult {
        params: FitParams { mu0: 0.5, kappa1: 0.096, kappa2: 0.096 },
        std_errors: FitParams { mu0: 0.0, kappa1: 0.0, kappa2: 0.0 },
        chi_square: 0.0,
        dof: 15,
        converged: true,
        iterations: 0,
        warnings: vec![],
    };
    let t = wdmpairs_core::wss::db_to_transmittance(3.2);
    let (e1, _) = efficiencies_from_fit(&result, t, t).unwrap();
    assert!((e1.value - 0.2).abs() < 0.002, "{}", e1.value);
    let (e1, _) = efficiencies_from_fit(&result, 0.48, 0.48).unwrap();
    assert!((e1.value - 0.2).abs() < 1e-15);
}
