use wdmpairs::parallel;
use wdmpairs_core::mc_oracle::{GateCounts, Simulation};
use wdmpairs_core::rates::{rates_for, routing_probs, RateResult};
use wdmpairs_core::{DetectionChain, PairSpectrum, TransferFunction};

/// Density 0.5 on [-2, 2] with boxes at [0.4, 0.6] and [-0.62, -0.42]:
/// Q1 = Q2 = 0.1 and Q12 = 0.09.
fn box_setup(dark: f64) -> (Simulation, RateResult) {
    let pdf = PairSpectrum::tabulated(&[(0.0, 1.0), (2.0, 1.0)]).unwrap().normalize().unwrap();
    let a = TransferFunction::boxcar(0.4, 0.6, 1.0).unwrap();
    let b = TransferFunction::boxcar(-0.62, -0.42, 1.0).unwrap();
    let chain = DetectionChain::new(0.5, 0.2, dark).unwrap();
    let routing = routing_probs(&pdf, &a, &b).unwrap();
    let rates = rates_for(0.5, &routing, &chain, &chain).unwrap();
    (Simulation::new(&pdf, &a, &b, 0.5, &chain, &chain).unwrap(), rates)
}

fn frequencies(c: &GateCounts) -> [f64; 3] {
    let n = c.gates as f64;
    [c.clicks1 as f64 / n, c.clicks2 as f64 / n, c.coincidences as f64 / n]
}

#[test]
fn box_example_at_1e8_gates() {
    let (sim, rates) = box_setup(0.0);
    assert!((rates.p12 - 4.704980465742932e-4).abs() < 1e-15);
    let counts = parallel::run(&sim, 100_000_000, 20_240_601);
    let est = counts.estimate().unwrap();
    let sigma = (rates.p12 * (1.0 - rates.p12) / 1e8).sqrt();
    let z = (est.p12.value - rates.p12) / sigma;
    assert!(z.abs() < 4.0, "P12 {} vs {} (z = {z})", est.p12.value, rates.p12);
    assert!(counts.coincidences <= counts.clicks1.min(counts.clicks2));
}

#[test]
fn disjoint_seeds_agree() {
    let (sim, _) = box_setup(1e-3);
    let a = parallel::run(&sim, 10_000_000, 1).estimate().unwrap();
    let b = parallel::run(&sim, 10_000_000, 2).estimate().unwrap();
    for (x, y) in [(a.p1, b.p1), (a.p2, b.p2), (a.p12, b.p12)] {
        let sigma = (x.std_error.powi(2) + y.std_error.powi(2)).sqrt();
        assert!((x.value - y.value).abs() < 5.0 * sigma, "{x:?} vs {y:?}");
    }
}

#[test]
fn error_shrinks_as_inverse_square_root_of_gates() {
    let (sim, rates) = box_setup(1e-3);
    let truth = [rates.p1, rates.p2, rates.p12];
    let runs = 32u64;
    let sizes = [100_000u64, 1_000_000, 10_000_000];
    let mut rms = [[0.0; 3]; 3];
    for (k, &n) in sizes.iter().enumerate() {
        for r in 0..runs {
            let f = frequencies(&parallel::run(&sim, n, 1_000 * (k as u64 + 1) + r));
            for q in 0..3 {
                rms[q][k] += (f[q] - truth[q]).powi(2) / runs as f64;
            }
        }
    }
    let xs: Vec<f64> = sizes.iter().map(|&n| (n as f64).log10()).collect();
    let x_mean = xs.iter().sum::<f64>() / 3.0;
    for (q, name) in ["P1", "P2", "P12"].iter().enumerate() {
        let ys: Vec<f64> = rms[q].iter().map(|m| m.sqrt().log10()).collect();
        let y_mean = ys.iter().sum::<f64>() / 3.0;
        let slope = xs.iter().zip(&ys).map(|(x, y)| (x - x_mean) * (y - y_mean)).sum::<f64>()
            / xs.iter().map(|x| (x - x_mean).powi(2)).sum::<f64>();
        assert!((slope + 0.5).abs() <= 0.1, "{name}: slope {slope}");
    }
}
