//! Acceptance criteria, one line of output per criterion.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wdmpairs::cli;
use wdmpairs::parallel;
use wdmpairs_core::estimate::{efficiencies_from_fit, fit, synthesize, FitParams};
use wdmpairs_core::mc_oracle::Simulation;
use wdmpairs_core::quad::{self, Pieces};
use wdmpairs_core::rates::{p_with_dark, q_joint, q_single, rates_for, routing_probs, RoutingProbs};
use wdmpairs_core::spectrum::gaussian_scale_for_fwhm;
use wdmpairs_core::wss::{symmetric_pair_plan, BandGrid};
use wdmpairs_core::*;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

type Criterion = (&'static str, fn() -> Verdict);

fn main() -> ExitCode {
    let criteria: [Criterion; 6] = [
        ("oracle equivalence", oracle_equivalence),
        ("algebraic reductions", algebraic_reductions),
        ("quadrature correctness", quadrature_correctness),
        ("S/L symmetry walk-off", walk_off),
        ("calibration round trip", calibration_round_trip),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let v = catch_unwind(AssertUnwindSafe(check))
            .unwrap_or_else(|e| {
                let msg = e
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default();
                verdict(false, format!("panicked: {msg}"))
            });
        failed += usize::from(!v.pass);
        println!(
            "criterion {} ({name}): {} [{:.1} s] {}",
            i + 1,
            if v.pass { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64(),
            v.detail
        );
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn flat_pdf(half_width: f64) -> PairPdf {
    PairSpectrum::tabulated(&[(0.0, 1.0), (half_width, 1.0)])
        .unwrap()
        .normalize()
        .unwrap()
}

/// Box `[lo, hi]` of height `peak` intersected with the spectrum
/// `[-w, w]` of density `1 / w`, as (interval length) / w * peak.
fn box_mass(lo: f64, hi: f64, w: f64, peak: f64) -> f64 {
    (hi.min(w) - lo.max(-w)).max(0.0) / w * peak
}

fn random_box_case(rng: &mut ChaCha8Rng) -> (f64, (f64, f64, f64), (f64, f64, f64)) {
    let w = rng.random_range(0.5..3.0);
    let side = |rng: &mut ChaCha8Rng| {
        let width = rng.random_range(0.05..1.0);
        let lo = rng.random_range(0.0..w);
        (lo, lo + width, rng.random_range(0.2..=1.0))
    };
    let a = side(rng);
    let b = if rng.random_bool(0.3) { a } else { side(rng) };
    // Port 2 sits on the negative side, so no pair sends both photons to
    // the same port.
    (w, a, (-b.1, -b.0, b.2))
}

fn oracle_equivalence() -> Verdict {
    const GATES: u64 = 10_000_000;
    let mut rng = ChaCha8Rng::seed_from_u64(0xC1);
    let mut worst: f64 = 0.0;
    let mut failures = Vec::new();
    for set in 0..20 {
        let (w, a, b) = random_box_case(&mut rng);
        let pdf = flat_pdf(w);
        let tf1 = TransferFunction::boxcar(a.0, a.1, a.2).unwrap();
        let tf2 = TransferFunction::boxcar(b.0, b.1, b.2).unwrap();
        let mu = rng.random_range(0.01..=2.0);
        let chain = |rng: &mut ChaCha8Rng| {
            DetectionChain::new(
                rng.random_range(0.1..=1.0),
                rng.random_range(0.1..=1.0),
                rng.random_range(0.0..=1e-2),
            )
            .unwrap()
        };
        let (c1, c2) = (chain(&mut rng), chain(&mut rng));
        let routing = routing_probs(&pdf, &tf1, &tf2).unwrap();
        assert!(routing.q12 <= routing.q1.min(routing.q2));
        let rates = rates_for(mu, &routing, &c1, &c2).unwrap();
        let sim = Simulation::new(&pdf, &tf1, &tf2, mu, &c1, &c2).unwrap();
        let counts = parallel::run(&sim, GATES, 1000 + set);
        let n = counts.gates as f64;
        for (name, p, hits) in [
            ("P1", rates.p1, counts.clicks1),
            ("P2", rates.p2, counts.clicks2),
            ("P12", rates.p12, counts.coincidences),
        ] {
            let sigma = (p * (1.0 - p) / n).sqrt();
            let z = (hits as f64 / n - p) / sigma;
            worst = worst.max(z.abs());
            if !(z.abs() < 4.0) {
                failures.push(format!("set {set} {name}: z = {z:.2}"));
            }
        }
    }
    verdict(
        failures.is_empty(),
        format!("20 sets x 1e7 gates, max |z| = {worst:.2} {}", failures.join("; ")),
    )
}

fn algebraic_reductions() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(0xC2);
    let (mut bit_exact, mut dark_only, mut independent) = (0, 0.0f64, 0.0f64);
    const CASES: usize = 10_000;
    for _ in 0..CASES {
        let q1: f64 = rng.random_range(0.0..=2.0);
        let q2: f64 = rng.random_range(0.0..=2.0);
        let q12 = rng.random_range(0.0..=q1.min(q2).min(1.0));
        let routing = RoutingProbs::new(q1, q2, q12).unwrap();
        let mu = rng.random_range(0.0..=5.0);
        let t = rng.random_range(0.01..=1.0);
        let eta = rng.random_range(0.0..=1.0);
        let d1 = rng.random_range(0.0..0.5);
        let d2 = rng.random_range(0.0..0.5);

        let clean = DetectionChain::new(t, eta, 0.0).unwrap();
        let r = rates_for(mu, &routing, &clean, &clean).unwrap();
        let same = r.p1.to_bits() == r.p1_no_dark.to_bits()
            && r.p2.to_bits() == r.p2_no_dark.to_bits()
            && r.p12.to_bits() == r.p12_no_dark.to_bits();
        let d = p_with_dark(r.p12_no_dark, r.p1_no_dark, r.p2_no_dark, 0.0, 0.0).unwrap();
        bit_exact += usize::from(
            same && d.p12.to_bits() == r.p12_no_dark.to_bits()
                && d.p1.to_bits() == r.p1_no_dark.to_bits()
                && d.p2.to_bits() == r.p2_no_dark.to_bits(),
        );

        let c1 = DetectionChain::new(t, eta, d1).unwrap();
        let c2 = DetectionChain::new(t, eta, d2).unwrap();
        let r = rates_for(0.0, &routing, &c1, &c2).unwrap();
        dark_only = dark_only.max((r.p12 - d1 * d2).abs());

        let uncorrelated = RoutingProbs::new(q1, q2, 0.0).unwrap();
        let r = rates_for(mu, &uncorrelated, &c1, &c2).unwrap();
        independent = independent.max((r.p12_no_dark - r.p1_no_dark * r.p2_no_dark).abs());
    }
    verdict(
        bit_exact == CASES && dark_only <= 1e-15 && independent <= 1e-15,
        format!(
            "{CASES} cases: Pdc=0 bit-exact {bit_exact}/{CASES}; mu=0 max |P12-d1 d2| = {dark_only:.1e}; Q12=0 max |P12-P1 P2| = {independent:.1e}"
        ),
    )
}

fn relative(a: f64, b: f64) -> f64 {
    if b == 0.0 {
        a.abs()
    } else {
        (a - b).abs() / b.abs()
    }
}

fn halving_change(f: impl Fn(f64) -> f64, pieces: &Pieces) -> f64 {
    let q = quad::integrate(&f, pieces).unwrap();
    let coarse = quad::trapezoid(&f, pieces, q.refinements);
    let fine = quad::trapezoid(&f, pieces, q.refinements + 1);
    relative(coarse, fine)
}

fn quadrature_correctness() -> Verdict {
    let mut worst_closed: f64 = 0.0;
    let mut worst_halving: f64 = 0.0;
    let mut check = |w: f64, a: (f64, f64, f64), b: (f64, f64, f64)| {
        let pdf = flat_pdf(w);
        let tf1 = TransferFunction::boxcar(a.0, a.1, a.2).unwrap();
        let tf2 = TransferFunction::boxcar(b.0, b.1, b.2).unwrap();
        let q1 = q_single(&pdf, &tf1).unwrap();
        let q2 = q_single(&pdf, &tf2).unwrap();
        let q12 = q_joint(&pdf, &tf1, &tf2).unwrap();
        // Photon at nu in box 1 with its partner at -nu in box 2.
        let (lo, hi) = (a.0.max(-b.1), a.1.min(-b.0));
        let exact12 = box_mass(lo, hi.max(lo), w, a.2 * b.2);
        for (got, want) in [(q1, box_mass(a.0, a.1, w, a.2)), (q2, box_mass(b.0, b.1, w, b.2)), (q12, exact12)] {
            worst_closed = worst_closed.max(relative(got, want));
        }
        let mirrored = tf2.mirrored();
        let support = quad::intersect(&quad::intersect(&pdf.support(), &tf1.support()), &mirrored.support());
        let mut bps = tf1.breakpoints();
        bps.extend(mirrored.breakpoints());
        bps.extend(pdf.breakpoints());
        let pieces = Pieces::new(&support, &bps);
        worst_halving = worst_halving.max(halving_change(|nu| pdf.density(nu) * tf1.power(nu) * mirrored.power(nu), &pieces));
    };
    check(2.0, (0.4, 1.2, 1.0), (-1.2, -0.4, 1.0));
    check(2.0, (0.4, 1.2, 1.0), (-1.3, -0.5, 1.0));
    let mut rng = ChaCha8Rng::seed_from_u64(0xC3);
    for _ in 0..200 {
        let (w, a, b) = random_box_case(&mut rng);
        check(w, a, b);
    }
    // Smooth integrands need real refinement.
    let pdf = PairSpectrum::parametric(LobeModel::Gaussian, 0.0, 1.3).unwrap().normalize().unwrap();
    let band = TransferFunction::from_passbands(vec![wss::Passband {
        center_thz: 0.7,
        peak: 0.6,
        shape: ChannelShape::default(),
    }])
    .unwrap();
    let pieces = Pieces::new(&quad::intersect(&pdf.support(), &band.support()), &band.breakpoints());
    let smooth = halving_change(|nu| pdf.density(nu) * band.power(nu), &pieces);
    worst_halving = worst_halving.max(smooth);
    verdict(
        worst_closed < 1e-9 && worst_halving < 1e-9,
        format!(
            "202 box cases: max relative error vs closed form {worst_closed:.1e}; max halving change {worst_halving:.1e}"
        ),
    )
}

/// Spectrum that is flat across the S and L bands and zero in the C band,
/// so only the channel geometry shapes the overlap.
fn lobe_plateau() -> PairPdf {
    PairSpectrum::tabulated(&[(5.5, 0.0), (5.7, 1.0), (9.3, 1.0), (9.5, 0.0)])
        .unwrap()
        .normalize()
        .unwrap()
}

/// Independent overlap integral: direct Riemann sum with channel centers and
/// the super-gaussian written out from the grid definitions.
fn brute_force_q12(n: i32) -> f64 {
    const STEP: f64 = 1e-5;
    let half = 0.5 * 0.077;
    let sg = |x: f64| (-(2f64.ln()) * (x.abs() / half).powi(12)).exp();
    let centers = |ch: i32| {
        [
            6.79 + ch as f64 * 0.1036,
            ch as f64 * 0.1,
            -6.79 + ch as f64 * 0.0965,
        ]
    };
    let h = |nu: f64, ch: i32| centers(ch).iter().map(|c| sg(nu - c)).sum::<f64>().min(1.0);
    let s = |nu: f64| {
        let a = nu.abs();
        if a <= 5.5 || a >= 9.5 {
            0.0
        } else if a < 5.7 {
            (a - 5.5) / 0.2
        } else if a <= 9.3 {
            1.0
        } else {
            (9.5 - a) / 0.2
        }
    };
    let mut sum = 0.0;
    for sign in [-1.0, 1.0] {
        let steps = (4.0 / STEP) as i64;
        for k in 0..=steps {
            let nu = sign * (5.5 + k as f64 * STEP);
            let v = s(nu);
            if v > 0.0 {
                sum += v * h(nu, n) * h(-nu, -n);
            }
        }
    }
    sum * STEP
}

fn walk_off() -> Verdict {
    let pdf = lobe_plateau();
    let grids: Vec<BandGrid> = Band::ALL.iter().map(|&b| BandGrid::default_for(b)).collect();
    let q12: Vec<f64> = (1..=19)
        .map(|n| {
            let plan = symmetric_pair_plan(n, PortId('A'), PortId('B'), grids.clone(), ChannelShape::default())
                .unwrap()
                .with_default_loss(0.0)
                .unwrap();
            let a = plan.compile_port_transfer(PortId('A')).unwrap();
            let b = plan.compile_port_transfer(PortId('B')).unwrap();
            q_joint(&pdf, &a, &b).unwrap()
        })
        .collect();
    let ratio: Vec<f64> = q12.iter().map(|q| q / q12[0]).collect();
    let brute: Vec<f64> = [1, 2, 3, 10, 15, 19].iter().map(|&n| brute_force_q12(n)).collect();
    let brute_ratio: Vec<f64> = brute.iter().map(|q| q / brute[0]).collect();
    let oracle_gap = [1usize, 2, 3, 10, 15, 19]
        .iter()
        .zip(&brute_ratio)
        .map(|(&n, b)| (ratio[n - 1] - b).abs())
        .fold(0.0, f64::max);
    let low_ok = ratio[..3].iter().all(|&r| r >= 0.95);
    let high_ok = ratio[14..].iter().all(|&r| r < 0.9);
    let fmt = |r: &[f64]| r.iter().map(|v| format!("{v:.3}")).collect::<Vec<_>>().join(",");
    verdict(
        low_ok && high_ok && oracle_gap < 1e-6,
        format!(
            "Q12(N)/Q12(1): N=1..3 [{}] (need >= 0.95: {}), N=15..19 [{}] (need < 0.9: {}); brute-force gap {oracle_gap:.1e}",
            fmt(&ratio[..3]),
            if low_ok { "ok" } else { "violated" },
            fmt(&ratio[14..]),
            if high_ok { "ok" } else { "violated" },
        ),
    )
}

fn calibration_round_trip() -> Verdict {
    const GATES: u64 = 30_000_000;
    const ATT: [f64; 6] = [0.0, 2.6, 5.2, 7.8, 10.4, 13.0];
    let pdf = PairSpectrum::parametric(LobeModel::Gaussian, 0.0, gaussian_scale_for_fwhm(6.0))
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
    let routing = routing_probs(
        &pdf,
        &plan.compile_port_transfer(PortId('A')).unwrap(),
        &plan.compile_port_transfer(PortId('B')).unwrap(),
    )
    .unwrap();
    let (t, eta) = (0.48, 0.2);
    let truth = FitParams { mu0: 0.5, kappa1: t * eta, kappa2: t * eta };
    let mut good = 0;
    let (mut worst_mu, mut worst_eta) = (0.0f64, 0.0f64);
    for trial in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(50_000 + trial);
        let data = synthesize(&truth, &routing, 1e-4, 1e-4, &ATT, GATES, &mut rng).unwrap();
        let Ok(result) = fit(&data, None) else { continue };
        let (e1, e2) = efficiencies_from_fit(&result, t, t).unwrap();
        let dmu = (result.params.mu0 - 0.5).abs();
        let deta = (e1.value - eta).abs().max((e2.value - eta).abs());
        worst_mu = worst_mu.max(dmu);
        worst_eta = worst_eta.max(deta);
        good += usize::from(dmu <= 0.06 && deta <= 0.01);
    }
    verdict(
        good >= 95,
        format!("{good}/100 trials within mu0 +/- 0.06 and eta +/- 0.01 (worst |d mu0| = {worst_mu:.4}, |d eta| = {worst_eta:.4})"),
    )
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn run_cli(args: &[&str]) {
    let argv = std::iter::once("wdmpairs").chain(args.iter().copied());
    let cli = cli::parse_args(argv).unwrap_or_else(|e| panic!("{args:?}: {e}"));
    cli::run(&cli).unwrap_or_else(|e| panic!("{args:?}: {e}"));
}

fn determinism() -> Verdict {
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let cfg = |name: &str| configs().join(name).to_string_lossy().into_owned();
    for d in &dirs {
        let out = d.path().to_string_lossy().into_owned();
        run_cli(&["sweep", "--config", &cfg("c_band_sweep.json"), "--out", &out, "--seed", "17"]);
        run_cli(&["validate", "--config", &cfg("validate.json"), "--out", &out, "--seed", "17"]);
        run_cli(&["synth", "--config", &cfg("calibration.json"), "--out", &out, "--seed", "17"]);
        let data = d.path().join("dataset.csv").to_string_lossy().into_owned();
        run_cli(&["fit", "--config", &cfg("calibration.json"), "--out", &out, "--data", &data]);
    }
    let files = ["sweep.csv", "validate.csv", "dataset.csv", "fit_curves.csv", "fit_points.csv", "fit_report.txt"];
    let differing: Vec<&str> = files
        .iter()
        .copied()
        .filter(|f| {
            std::fs::read(dirs[0].path().join(f)).unwrap() != std::fs::read(dirs[1].path().join(f)).unwrap()
        })
        .collect();
    verdict(
        differing.is_empty(),
        if differing.is_empty() {
            format!("{} outputs byte-identical across reruns", files.len())
        } else {
            format!("differing outputs: {}", differing.join(", "))
        },
    )
}
