//! In-situ calibration from a pump-attenuation sweep.
//!
//! Singles and coincidence frequencies measured at several attenuator
//! settings are fitted simultaneously with the dark-count-corrected rate
//! model. Only three combinations are identifiable from such data: the pair
//! rate at zero attenuation `mu0` and the per-arm products `kappa_i = T_i
//! eta_i`. Detector efficiencies follow once the path transmittances are
//! known from elsewhere.

use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Binomial, Distribution};

use crate::error::{check_range, invalid, Error, Result};
use crate::optim::{self, LeastSquares};
use crate::rates::{coinc_raw, single_pair_raw, singles_raw, with_dark_raw, RoutingProbs};

/// Pair rate after `att_db` of pump attenuation; generation is linear in
/// pump power.
pub fn attenuated_mu(mu0: f64, att_db: f64) -> Result<f64> {
    if !(mu0 >= 0.0) || !mu0.is_finite() {
        return Err(invalid("mu0", alloc::format!("{mu0} must be a finite value >= 0")));
    }
    if !(att_db >= 0.0) || !att_db.is_finite() {
        return Err(invalid("att_db", alloc::format!("{att_db} must be a finite value >= 0")));
    }
    Ok(mu0 * attenuation_factor(att_db))
}

fn attenuation_factor(att_db: f64) -> f64 {
    libm::pow(10.0, -att_db / 10.0)
}

/// Counts measured at one attenuator setting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitRow {
    pub att_db: f64,
    pub gates: u64,
    pub clicks1: u64,
    pub clicks2: u64,
    pub coincidences: u64,
}

/// Attenuation sweep plus the quantities held fixed during the fit.
#[derive(Debug, Clone, PartialEq)]
pub struct FitDataset {
    rows: Vec<FitRow>,
    routing: RoutingProbs,
    pdc1: f64,
    pdc2: f64,
}

impl FitDataset {
    pub fn new(rows: Vec<FitRow>, routing: RoutingProbs, pdc1: f64, pdc2: f64) -> Result<Self> {
        if rows.is_empty() {
            return Err(invalid("rows", "dataset is empty"));
        }
        for (i, r) in rows.iter().enumerate() {
            if !(r.att_db >= 0.0) || !r.att_db.is_finite() {
                return Err(Error::Format(alloc::format!(
                    "row {i}: attenuation {} must be a finite value >= 0",
                    r.att_db
                )));
            }
            if r.gates == 0 {
                return Err(Error::Format(alloc::format!("row {i}: zero gates")));
            }
            if r.clicks1 > r.gates || r.clicks2 > r.gates {
                return Err(Error::Format(alloc::format!(
                    "row {i}: clicks exceed the {} gates",
                    r.gates
                )));
            }
            if r.coincidences > r.clicks1.min(r.clicks2) {
                return Err(Error::Format(alloc::format!(
                    "row {i}: {} coincidences exceed the singles",
                    r.coincidences
                )));
            }
        }
        RoutingProbs::new(routing.q1, routing.q2, routing.q12)?;
        for (name, d) in [("pdc1", pdc1), ("pdc2", pdc2)] {
            if d.is_nan() || !(0.0..1.0).contains(&d) {
                return Err(invalid(name, alloc::format!("{d} not in [0, 1)")));
            }
        }
        Ok(FitDataset {
            rows,
            routing,
            pdc1,
            pdc2,
        })
    }

    pub fn rows(&self) -> &[FitRow] {
        &self.rows
    }

    pub fn routing(&self) -> &RoutingProbs {
        &self.routing
    }

    pub fn dark_counts(&self) -> (f64, f64) {
        (self.pdc1, self.pdc2)
    }

    pub fn distinct_attenuations(&self) -> usize {
        let mut atts: Vec<f64> = self.rows.iter().map(|r| r.att_db).collect();
        atts.sort_by(f64::total_cmp);
        atts.dedup();
        atts.len()
    }
}

/// The identifiable parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitParams {
    /// Mean pairs per gate at zero attenuation.
    pub mu0: f64,
    /// `T1 eta1`.
    pub kappa1: f64,
    /// `T2 eta2`.
    pub kappa2: f64,
}

impl FitParams {
    fn to_log(self) -> [f64; 3] {
        [libm::log(self.mu0), libm::log(self.kappa1), libm::log(self.kappa2)]
    }

    fn from_log(x: &[f64; 3]) -> Self {
        FitParams {
            mu0: libm::exp(x[0]),
            kappa1: libm::exp(x[1]),
            kappa2: libm::exp(x[2]),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FitWarning {
    /// Fewer than three distinct attenuator settings.
    FewAttenuations { distinct: usize },
    /// The curvature of the objective is (nearly) singular; some parameter
    /// combination is not constrained by the data.
    IllConditioned { condition: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub params: FitParams,
    pub std_errors: FitParams,
    pub chi_square: f64,
    pub dof: usize,
    pub converged: bool,
    pub iterations: usize,
    pub warnings: Vec<FitWarning>,
}

impl FitResult {
    pub fn is_identifiable(&self) -> bool {
        !self
            .warnings
            .iter()
            .any(|w| matches!(w, FitWarning::IllConditioned { .. }))
    }
}

/// Model probabilities at one attenuation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelPoint {
    pub mu: f64,
    pub p1: f64,
    pub p2: f64,
    pub p12: f64,
    /// Coincidence probability without multiple-pair events.
    pub p12_single_pair: f64,
}

/// Dark-count-corrected model for given parameters.
pub fn model_at(
    params: &FitParams,
    att_db: f64,
    routing: &RoutingProbs,
    pdc1: f64,
    pdc2: f64,
) -> ModelPoint {
    let mu = params.mu0 * attenuation_factor(att_db);
    let x1 = mu * routing.q1 * params.kappa1;
    let x2 = mu * routing.q2 * params.kappa2;
    let x12 = mu * routing.q12 * params.kappa1 * params.kappa2;
    let d = with_dark_raw(coinc_raw(x1, x2, x12), singles_raw(x1), singles_raw(x2), pdc1, pdc2);
    ModelPoint {
        mu,
        p1: d.p1,
        p2: d.p2,
        p12: d.p12,
        p12_single_pair: single_pair_raw(mu, routing, params.kappa1, params.kappa2, pdc1, pdc2),
    }
}

struct Observation {
    factor: f64,
    measured: [f64; 3],
    sigma: [f64; 3],
}

struct Problem<'a> {
    data: &'a FitDataset,
    obs: Vec<Observation>,
}

impl<'a> Problem<'a> {
    fn new(data: &'a FitDataset) -> Self {
        let obs = data
            .rows
            .iter()
            .map(|r| {
                let n = r.gates as f64;
                let freq = [r.clicks1, r.clicks2, r.coincidences].map(|c| c as f64 / n);
                // Binomial variance, floored at the variance of a single count.
                let sigma = freq.map(|p| libm::sqrt((p * (1.0 - p) / n).max(1.0 / (n * n))));
                Observation {
                    factor: attenuation_factor(r.att_db),
                    measured: freq,
                    sigma,
                }
            })
            .collect();
        Problem { data, obs }
    }

    fn chi_square(&self, x: &[f64; 3]) -> f64 {
        match self.residuals(x) {
            Some(r) => r.iter().map(|v| v * v).sum(),
            None => f64::INFINITY,
        }
    }
}

impl LeastSquares<3> for Problem<'_> {
    fn residuals(&self, x: &[f64; 3]) -> Option<Vec<f64>> {
        let p = FitParams::from_log(x);
        let (d1, d2) = self.data.dark_counts();
        let mut r = Vec::with_capacity(3 * self.obs.len());
        for o in &self.obs {
            let mu = p.mu0 * o.factor;
            let q = &self.data.routing;
            let x1 = mu * q.q1 * p.kappa1;
            let x2 = mu * q.q2 * p.kappa2;
            let x12 = mu * q.q12 * p.kappa1 * p.kappa2;
            let det = with_dark_raw(coinc_raw(x1, x2, x12), singles_raw(x1), singles_raw(x2), d1, d2);
            let model = [det.p1, det.p2, det.p12];
            for ((m, s), model) in o.measured.iter().zip(&o.sigma).zip(model) {
                let v = (m - model) / s;
                if !v.is_finite() {
                    return None;
                }
                r.push(v);
            }
        }
        Some(r)
    }

    fn jacobian(&self, x: &[f64; 3]) -> Option<Vec<[f64; 3]>> {
        let p = FitParams::from_log(x);
        let (d1, d2) = self.data.dark_counts();
        let q = &self.data.routing;
        let mut jac = Vec::with_capacity(3 * self.obs.len());
        for o in &self.obs {
            let mu = p.mu0 * o.factor;
            let x1 = mu * q.q1 * p.kappa1;
            let x2 = mu * q.q2 * p.kappa2;
            let x12 = mu * q.q12 * p.kappa1 * p.kappa2;
            let e1 = libm::exp(-x1);
            let e2 = libm::exp(-x2);
            let e12 = libm::exp(-x1 - x2 + x12);
            // d(x1, x2, x12) / d(log mu0, log kappa1, log kappa2)
            let dx1 = [x1, x1, 0.0];
            let dx2 = [x2, 0.0, x2];
            let dx12 = [x12, x12, x12];
            let mut rows = [[0.0; 3]; 3];
            for j in 0..3 {
                let dp1_0 = e1 * dx1[j];
                let dp2_0 = e2 * dx2[j];
                let dp12_0 = e1 * dx1[j] + e2 * dx2[j] - e12 * (dx1[j] + dx2[j] - dx12[j]);
                let dp1 = (1.0 - d1) * dp1_0;
                let dp2 = (1.0 - d2) * dp2_0;
                let dp12 = (1.0 - d1) * (1.0 - d2) * dp12_0 + d1 * (1.0 - d2) * dp2_0 + d2 * (1.0 - d1) * dp1_0;
                rows[0][j] = -dp1 / o.sigma[0];
                rows[1][j] = -dp2 / o.sigma[1];
                rows[2][j] = -dp12 / o.sigma[2];
            }
            for row in rows {
                if row.iter().any(|v| !v.is_finite()) {
                    return None;
                }
                jac.push(row);
            }
        }
        Some(jac)
    }
}

const SEED_MU0: f64 = 0.1;
const KAPPA_FLOOR: f64 = 1e-6;

/// Starting point: `mu0 = 0.1`, and each `kappa_i` from the linearized
/// singles `P_i ~ Pdc_i + mu Q_i kappa_i` at the most attenuated setting.
pub fn default_initial_guess(data: &FitDataset) -> FitParams {
    let row = data
        .rows
        .iter()
        .max_by(|a, b| a.att_db.total_cmp(&b.att_db))
        .copied()
        .unwrap_or(data.rows[0]);
    let mu = SEED_MU0 * attenuation_factor(row.att_db);
    let n = row.gates as f64;
    let (d1, d2) = data.dark_counts();
    let guess = |clicks: u64, dark: f64, q: f64| {
        let k = (clicks as f64 / n - dark) / (mu * q);
        if k.is_finite() {
            k.clamp(KAPPA_FLOOR, 1.0)
        } else {
            0.1
        }
    };
    FitParams {
        mu0: SEED_MU0,
        kappa1: guess(row.clicks1, d1, data.routing.q1),
        kappa2: guess(row.clicks2, d2, data.routing.q2),
    }
}

const SIMPLEX_STEP: f64 = 0.5;
const SIMPLEX_MAX_ITER: usize = 4000;
const SIMPLEX_TOL: f64 = 1e-10;
const LM_MAX_ITER: usize = 500;
const CONDITION_LIMIT: f64 = 1e12;

/// Weighted least-squares fit of singles and coincidences over all rows.
///
/// A simplex search on log-parameters is followed by a damped Gauss-Newton
/// polish; standard errors come from the Gauss-Newton curvature at the
/// optimum.
pub fn fit(data: &FitDataset, initial: Option<FitParams>) -> Result<FitResult> {
    let start = initial.unwrap_or_else(|| default_initial_guess(data));
    for (name, v) in [("mu0", start.mu0), ("kappa1", start.kappa1), ("kappa2", start.kappa2)] {
        if !(v > 0.0) || !v.is_finite() {
            return Err(invalid(name, alloc::format!("initial value {v} must be positive")));
        }
    }
    let problem = Problem::new(data);
    let (simplex_best, _, nm_iter) = optim::nelder_mead(
        |x| problem.chi_square(x),
        start.to_log(),
        SIMPLEX_STEP,
        SIMPLEX_MAX_ITER,
        SIMPLEX_TOL,
    );
    let lm = optim::levenberg_marquardt(&problem, simplex_best, LM_MAX_ITER).ok_or_else(|| {
        Error::FitFailed {
            iterations: nm_iter,
            chi_square: problem.chi_square(&simplex_best),
            reason: "model could not be evaluated near the simplex optimum".into(),
        }
    })?;
    let iterations = nm_iter + lm.iterations;
    if !lm.converged {
        return Err(Error::FitFailed {
            iterations,
            chi_square: lm.chi_square,
            reason: "damped least-squares polish hit its iteration limit".into(),
        });
    }
    let params = FitParams::from_log(&lm.x);
    for (name, v) in [("mu0", params.mu0), ("kappa1", params.kappa1), ("kappa2", params.kappa2)] {
        if !v.is_normal() {
            return Err(Error::FitFailed {
                iterations,
                chi_square: lm.chi_square,
                reason: alloc::format!("{name} ran off to {v:e}; the data do not constrain it"),
            });
        }
    }

    let mut warnings = Vec::new();
    let distinct = data.distinct_attenuations();
    if distinct < 3 {
        warnings.push(FitWarning::FewAttenuations { distinct });
    }
    let eig = optim::symmetric_eigenvalues(&lm.curvature);
    let max_eig = eig.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let min_eig = eig.iter().fold(f64::INFINITY, |m, v| m.min(*v));
    let condition = if min_eig > 0.0 { max_eig / min_eig } else { f64::INFINITY };
    if !(condition < CONDITION_LIMIT) {
        warnings.push(FitWarning::IllConditioned { condition });
    }
    let std_errors = match optim::spd_inverse(&lm.curvature) {
        Some(cov) => FitParams {
            mu0: params.mu0 * libm::sqrt(cov[0][0].max(0.0)),
            kappa1: params.kappa1 * libm::sqrt(cov[1][1].max(0.0)),
            kappa2: params.kappa2 * libm::sqrt(cov[2][2].max(0.0)),
        },
        None => FitParams {
            mu0: f64::INFINITY,
            kappa1: f64::INFINITY,
            kappa2: f64::INFINITY,
        },
    };
    Ok(FitResult {
        params,
        std_errors,
        chi_square: lm.chi_square,
        dof: (3 * data.rows.len()).saturating_sub(3),
        converged: true,
        iterations,
        warnings,
    })
}

/// A detector efficiency derived from a fitted `kappa`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Efficiency {
    pub value: f64,
    pub std_error: f64,
    /// Set when the derived efficiency exceeds 1.
    pub unphysical: bool,
}

/// `eta_i = kappa_i / T_i` with linearly propagated errors.
pub fn efficiencies_from_fit(result: &FitResult, t1: f64, t2: f64) -> Result<(Efficiency, Efficiency)> {
    let derive = |name: &'static str, kappa: f64, err: f64, t: f64| -> Result<Efficiency> {
        if !(t > 0.0) || t > 1.0 {
            return Err(invalid(name, alloc::format!("{t} not in (0, 1]")));
        }
        let value = kappa / t;
        Ok(Efficiency {
            value,
            std_error: err / t,
            unphysical: value > 1.0,
        })
    };
    Ok((
        derive("T1", result.params.kappa1, result.std_errors.kappa1, t1)?,
        derive("T2", result.params.kappa2, result.std_errors.kappa2, t2)?,
    ))
}

/// Draws a dataset from the model: each gate independently yields a
/// coincidence, a click at 1 only, a click at 2 only, or nothing.
pub fn synthesize<R: Rng + ?Sized>(
    params: &FitParams,
    routing: &RoutingProbs,
    pdc1: f64,
    pdc2: f64,
    attenuations_db: &[f64],
    gates: u64,
    rng: &mut R,
) -> Result<FitDataset> {
    check_synth(params, gates)?;
    let mut rows = Vec::with_capacity(attenuations_db.len());
    for &att in attenuations_db {
        attenuated_mu(params.mu0, att)?;
        let m = model_at(params, att, routing, pdc1, pdc2);
        let both = binomial(rng, gates, m.p12)?;
        let rest = gates - both;
        let only1 = binomial(rng, rest, conditional(m.p1 - m.p12, 1.0 - m.p12))?;
        let rest = rest - only1;
        let only2 = binomial(rng, rest, conditional(m.p2 - m.p12, 1.0 - m.p1))?;
        rows.push(FitRow {
            att_db: att,
            gates,
            clicks1: both + only1,
            clicks2: both + only2,
            coincidences: both,
        });
    }
    FitDataset::new(rows, *routing, pdc1, pdc2)
}

/// Dataset whose counts are the rounded expected values.
pub fn expected_dataset(
    params: &FitParams,
    routing: &RoutingProbs,
    pdc1: f64,
    pdc2: f64,
    attenuations_db: &[f64],
    gates: u64,
) -> Result<FitDataset> {
    check_synth(params, gates)?;
    let n = gates as f64;
    let rows = attenuations_db
        .iter()
        .map(|&att| {
            let m = model_at(params, att, routing, pdc1, pdc2);
            FitRow {
                att_db: att,
                gates,
                clicks1: libm::round(n * m.p1) as u64,
                clicks2: libm::round(n * m.p2) as u64,
                coincidences: libm::round(n * m.p12) as u64,
            }
        })
        .collect();
    FitDataset::new(rows, *routing, pdc1, pdc2)
}

fn check_synth(params: &FitParams, gates: u64) -> Result<()> {
    check_range("mu0", params.mu0, 0.0, f64::MAX)?;
    check_range("kappa1", params.kappa1, 0.0, 1.0)?;
    check_range("kappa2", params.kappa2, 0.0, 1.0)?;
    if gates == 0 {
        return Err(invalid("gates", "at least one gate is required"));
    }
    Ok(())
}

fn conditional(p: f64, remaining: f64) -> f64 {
    if remaining > 0.0 {
        (p / remaining).clamp(0.0, 1.0)
    } else {
        0.0
    }
}

fn binomial<R: Rng + ?Sized>(rng: &mut R, n: u64, p: f64) -> Result<u64> {
    let dist = Binomial::new(n, p.clamp(0.0, 1.0))
        .map_err(|e| Error::Numerical(alloc::format!("binomial({n}, {p}): {e}")))?;
    Ok(dist.sample(rng))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn routing() -> RoutingProbs {
        RoutingProbs::new(0.3, 0.28, 0.25).unwrap()
    }

    #[test]
    fn attenuation_mapping() {
        assert_eq!(attenuated_mu(0.5, 0.0).unwrap(), 0.5);
        assert!((attenuated_mu(0.5, 10.0).unwrap() - 0.05).abs() < 1e-15);
        assert!((attenuated_mu(0.5, 3.0103).unwrap() - 0.25).abs() < 1e-5);
        assert!(attenuated_mu(0.5, -1.0).is_err());
    }

    #[test]
    fn analytic_jacobian_matches_finite_differences() {
        let data = expected_dataset(
            &FitParams { mu0: 0.5, kappa1: 0.1, kappa2: 0.12 },
            &routing(),
            1e-3,
            2e-3,
            &[0.0, 3.0, 9.0],
            10_000_000,
        )
        .unwrap();
        let problem = Problem::new(&data);
        let x = [libm::log(0.4), libm::log(0.09), libm::log(0.15)];
        let jac = problem.jacobian(&x).unwrap();
        let h = 1e-6;
        for j in 0..3 {
            let mut xp = x;
            let mut xm = x;
            xp[j] += h;
            xm[j] -= h;
            let rp = problem.residuals(&xp).unwrap();
            let rm = problem.residuals(&xm).unwrap();
            for i in 0..rp.len() {
                let fd = (rp[i] - rm[i]) / (2.0 * h);
                assert!(
                    (fd - jac[i][j]).abs() <= 1e-6 * (1.0 + fd.abs()),
                    "row {i} col {j}: {fd} vs {}",
                    jac[i][j]
                );
            }
        }
    }

    #[test]
    fn dataset_validation() {
        let row = FitRow { att_db: 0.0, gates: 10, clicks1: 11, clicks2: 0, coincidences: 0 };
        assert!(FitDataset::new(vec![row], routing(), 0.0, 0.0).is_err());
        let row = FitRow { att_db: 0.0, gates: 10, clicks1: 3, clicks2: 2, coincidences: 3 };
        assert!(FitDataset::new(vec![row], routing(), 0.0, 0.0).is_err());
        let row = FitRow { att_db: -1.0, gates: 10, clicks1: 3, clicks2: 2, coincidences: 1 };
        assert!(FitDataset::new(vec![row], routing(), 0.0, 0.0).is_err());
        assert!(FitDataset::new(vec![], routing(), 0.0, 0.0).is_err());
    }

    #[test]
    fn click_free_data_fail_to_fit() {
        let rows = [0.0, 3.0, 6.0]
            .map(|att_db| FitRow { att_db, gates: 1000, clicks1: 0, clicks2: 0, coincidences: 0 })
            .to_vec();
        let data = FitDataset::new(rows, routing(), 0.0, 0.0).unwrap();
        assert!(matches!(fit(&data, None), Err(Error::FitFailed { .. })));
    }

    #[test]
    fn efficiencies() {
        let result = FitResult {
            params: FitParams { mu0: 0.5, kappa1: 0.096, kappa2: 0.5 },
            std_errors: FitParams { mu0: 0.01, kappa1: 0.002, kappa2: 0.01 },
            chi_square: 0.0,
            dof: 3,
            converged: true,
            iterations: 1,
            warnings: vec![],
        };
        let (e1, e2) = efficiencies_from_fit(&result, 0.48, 0.3).unwrap();
        assert!((e1.value - 0.2).abs() < 1e-15 && !e1.unphysical);
        assert!((e1.std_error - 0.002 / 0.48).abs() < 1e-15);
        assert!((e2.value - 0.5 / 0.3).abs() < 1e-15 && e2.unphysical);
        let (e1, _) = efficiencies_from_fit(&result, 1.0, 1.0).unwrap();
        assert_eq!(e1.value, 0.096);
        assert!(efficiencies_from_fit(&result, 0.0, 0.5).is_err());
    }
}
