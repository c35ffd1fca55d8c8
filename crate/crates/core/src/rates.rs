//! Routing integrals and coincidence/singles probabilities for Poissonian
//! pair statistics and threshold detectors.
//!
//! `mu` is the mean number of pairs per gate over the pair density that is
//! actually supplied (after any bandpass filtering).

use alloc::vec::Vec;

use crate::error::{check_range, invalid, Error, Result};
use crate::quad::{self, Pieces};
use crate::spectrum::PairPdf;
use crate::wss::{PortId, SwitchPlan, TransferFunction};

/// Floating-point excursions outside `[0, 1]` up to this size are clamped;
/// larger ones are reported as numerical errors.
pub const CLAMP_TOLERANCE: f64 = 1e-12;

/// Optical path and detector of one arm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionChain {
    /// Frequency-independent path transmittance, excluding the switch.
    pub transmittance: f64,
    pub efficiency: f64,
    /// Dark-count probability per gate.
    pub dark_count: f64,
}

impl DetectionChain {
    pub fn new(transmittance: f64, efficiency: f64, dark_count: f64) -> Result<Self> {
        check_range("transmittance", transmittance, 0.0, 1.0)?;
        check_range("efficiency", efficiency, 0.0, 1.0)?;
        if dark_count.is_nan() || !(0.0..1.0).contains(&dark_count) {
            return Err(invalid("dark_count", alloc::format!("{dark_count} not in [0, 1)")));
        }
        Ok(DetectionChain {
            transmittance,
            efficiency,
            dark_count,
        })
    }

    /// Overall detection probability of a photon that reached the port.
    pub fn kappa(&self) -> f64 {
        self.transmittance * self.efficiency
    }
}

/// Spectral routing probabilities of one configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoutingProbs {
    pub q1: f64,
    pub q2: f64,
    pub q12: f64,
}

impl RoutingProbs {
    pub fn new(q1: f64, q2: f64, q12: f64) -> Result<Self> {
        let probs = RoutingProbs { q1, q2, q12 };
        probs.check()?;
        Ok(probs)
    }

    fn check(&self) -> Result<()> {
        let ok = |q: f64, hi: f64| q.is_finite() && q >= 0.0 && q <= hi + CLAMP_TOLERANCE;
        if !ok(self.q1, 2.0) || !ok(self.q2, 2.0) || !ok(self.q12, 1.0) {
            return Err(Error::Invariant(alloc::format!(
                "Q1 = {}, Q2 = {} must lie in [0, 2] and Q12 = {} in [0, 1]",
                self.q1, self.q2, self.q12
            )));
        }
        if self.q12 > self.q1.min(self.q2) + CLAMP_TOLERANCE {
            return Err(Error::Invariant(alloc::format!(
                "Q12 = {} exceeds min(Q1, Q2) = {}",
                self.q12,
                self.q1.min(self.q2)
            )));
        }
        Ok(())
    }
}

/// Everything computed for one configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateResult {
    pub routing: RoutingProbs,
    pub mu: f64,
    pub p1_no_dark: f64,
    pub p2_no_dark: f64,
    pub p12_no_dark: f64,
    pub p1: f64,
    pub p2: f64,
    pub p12: f64,
    /// Coincidence probability if at most one pair were ever generated.
    pub p12_single_pair: f64,
}

/// Dark-count-corrected probabilities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detected {
    pub p12: f64,
    pub p1: f64,
    pub p2: f64,
}

pub(crate) fn clamp_probability(name: &'static str, p: f64) -> Result<f64> {
    if !(-CLAMP_TOLERANCE..=1.0 + CLAMP_TOLERANCE).contains(&p) {
        return Err(Error::Numerical(alloc::format!(
            "{name} = {p} lies outside [0, 1]"
        )));
    }
    Ok(p.clamp(0.0, 1.0))
}

fn check_mu(mu: f64) -> Result<()> {
    if !(mu >= 0.0) || !mu.is_finite() {
        return Err(invalid("mu", alloc::format!("{mu} must be a finite value >= 0")));
    }
    Ok(())
}

fn clamp_q(name: &'static str, q: f64, hi: f64) -> Result<f64> {
    if !q.is_finite() || q < -CLAMP_TOLERANCE || q > hi * (1.0 + 1e-9) {
        return Err(Error::Numerical(alloc::format!("{name} = {q} outside [0, {hi}]")));
    }
    Ok(q.clamp(0.0, hi))
}

/// `Q = integral p(nu) |H(nu)|^2 d nu`: mean number of photons of one pair
/// that reach the port.
pub fn q_single(pdf: &PairPdf, tf: &TransferFunction) -> Result<f64> {
    let intervals = quad::intersect(&pdf.support(), &tf.support());
    let mut cuts = pdf.breakpoints();
    cuts.extend(tf.breakpoints());
    let pieces = Pieces::new(&intervals, &cuts);
    let q = quad::integrate(|nu| pdf.density(nu) * tf.power(nu), &pieces)?.value;
    clamp_q("Q", q, 2.0)
}

/// `Q12 = integral p(nu) |H1(nu)|^2 |H2(-nu)|^2 d nu`: probability that the
/// two photons of one pair reach ports 1 and 2.
pub fn q_joint(pdf: &PairPdf, tf1: &TransferFunction, tf2: &TransferFunction) -> Result<f64> {
    let tf2m = tf2.mirrored();
    let intervals = quad::intersect(
        &quad::intersect(&pdf.support(), &tf1.support()),
        &tf2m.support(),
    );
    let mut cuts: Vec<f64> = pdf.breakpoints();
    cuts.extend(tf1.breakpoints());
    cuts.extend(tf2m.breakpoints());
    let pieces = Pieces::new(&intervals, &cuts);
    let q = quad::integrate(|nu| pdf.density(nu) * tf1.power(nu) * tf2m.power(nu), &pieces)?.value;
    clamp_q("Q12", q, 1.0)
}

/// Both routing integrals for ports `tf1`, `tf2`.
pub fn routing_probs(
    pdf: &PairPdf,
    tf1: &TransferFunction,
    tf2: &TransferFunction,
) -> Result<RoutingProbs> {
    let q1 = q_single(pdf, tf1)?;
    let q2 = q_single(pdf, tf2)?;
    let q12 = q_joint(pdf, tf1, tf2)?.min(q1).min(q2);
    RoutingProbs::new(q1, q2, q12)
}

/// `1 - exp(-mu Q T eta)`.
pub fn p_singles_no_dark(mu: f64, q: f64, chain: &DetectionChain) -> Result<f64> {
    check_mu(mu)?;
    clamp_probability("P_i^0", singles_raw(mu * q * chain.kappa()))
}

pub(crate) fn singles_raw(mean_detected: f64) -> f64 {
    -libm::expm1(-mean_detected)
}

/// Coincidence probability without dark counts.
///
/// Evaluated as `P1 P2 + exp(-x1) exp(-x2) (exp(x12) - 1)` with
/// `xi = mu Qi Ti etai` and `x12 = mu Q12 T1 T2 eta1 eta2`, which is the same
/// quantity as `1 - exp(-x1) - exp(-x2) + exp(-(x1 + x2 - x12))` but without
/// cancellation, and reduces to `P1 P2` exactly when `Q12 = 0`.
pub fn p_coinc_no_dark(
    mu: f64,
    probs: &RoutingProbs,
    chain1: &DetectionChain,
    chain2: &DetectionChain,
) -> Result<f64> {
    check_mu(mu)?;
    probs.check()?;
    let x1 = mu * probs.q1 * chain1.kappa();
    let x2 = mu * probs.q2 * chain2.kappa();
    let x12 = mu * probs.q12 * chain1.kappa() * chain2.kappa();
    clamp_probability("P12^0", coinc_raw(x1, x2, x12))
}

pub(crate) fn coinc_raw(x1: f64, x2: f64, x12: f64) -> f64 {
    let p1 = singles_raw(x1);
    let p2 = singles_raw(x2);
    p1 * p2 + libm::exp(-x1) * libm::exp(-x2) * libm::expm1(x12)
}

/// Adds independent dark counts to the photon-only probabilities.
///
/// A coincidence is registered when both detectors click, a detector
/// clicking on a photon or a dark count:
/// `P12 = (1-d1)(1-d2) P12^0 + d1 (1-d2) P2^0 + d2 (1-d1) P1^0 + d1 d2` and
/// `Pi = Pi^0 + di (1 - Pi^0)`. Both forms reproduce their inputs bit for
/// bit when the dark-count probabilities are zero.
pub fn p_with_dark(p12_0: f64, p1_0: f64, p2_0: f64, pdc1: f64, pdc2: f64) -> Result<Detected> {
    check_range("P12^0", p12_0, 0.0, 1.0)?;
    check_range("P1^0", p1_0, 0.0, 1.0)?;
    check_range("P2^0", p2_0, 0.0, 1.0)?;
    check_range("Pdc1", pdc1, 0.0, 1.0)?;
    check_range("Pdc2", pdc2, 0.0, 1.0)?;
    let raw = with_dark_raw(p12_0, p1_0, p2_0, pdc1, pdc2);
    Ok(Detected {
        p12: clamp_probability("P12", raw.p12)?,
        p1: clamp_probability("P1", raw.p1)?,
        p2: clamp_probability("P2", raw.p2)?,
    })
}

pub(crate) fn with_dark_raw(p12_0: f64, p1_0: f64, p2_0: f64, d1: f64, d2: f64) -> Detected {
    Detected {
        p12: (1.0 - d1) * (1.0 - d2) * p12_0 + d1 * (1.0 - d2) * p2_0 + d2 * (1.0 - d1) * p1_0 + d1 * d2,
        p1: p1_0 + d1 * (1.0 - p1_0),
        p2: p2_0 + d2 * (1.0 - p2_0),
    }
}

/// Coincidence probability with the photon terms replaced by their
/// first-order (single-pair) values `mu Q12 k1 k2` and `mu Qi ki`.
pub fn p_coinc_single_pair(
    mu: f64,
    probs: &RoutingProbs,
    chain1: &DetectionChain,
    chain2: &DetectionChain,
) -> Result<f64> {
    check_mu(mu)?;
    probs.check()?;
    Ok(single_pair_raw(
        mu,
        probs,
        chain1.kappa(),
        chain2.kappa(),
        chain1.dark_count,
        chain2.dark_count,
    ))
}

pub(crate) fn single_pair_raw(mu: f64, probs: &RoutingProbs, k1: f64, k2: f64, d1: f64, d2: f64) -> f64 {
    let p12_0 = (mu * probs.q12 * k1 * k2).min(1.0);
    let p1_0 = (mu * probs.q1 * k1).min(1.0);
    let p2_0 = (mu * probs.q2 * k2).min(1.0);
    with_dark_raw(p12_0, p1_0, p2_0, d1, d2).p12.clamp(0.0, 1.0)
}

/// All probabilities for ports `port_a`, `port_b` of a validated plan.
pub fn evaluate(
    pdf: &PairPdf,
    plan: &SwitchPlan,
    port_a: PortId,
    port_b: PortId,
    mu: f64,
    chain_a: &DetectionChain,
    chain_b: &DetectionChain,
) -> Result<RateResult> {
    check_mu(mu)?;
    let report = plan.validate();
    if !report.is_ok() {
        return Err(Error::InvalidPlan(report.summary()));
    }
    let tf_a = plan.compile_port_transfer(port_a)?;
    let tf_b = plan.compile_port_transfer(port_b)?;
    let routing = routing_probs(pdf, &tf_a, &tf_b)?;
    rates_for(mu, &routing, chain_a, chain_b)
}

/// Probabilities for known routing integrals.
pub fn rates_for(
    mu: f64,
    routing: &RoutingProbs,
    chain_a: &DetectionChain,
    chain_b: &DetectionChain,
) -> Result<RateResult> {
    let p1_no_dark = p_singles_no_dark(mu, routing.q1, chain_a)?;
    let p2_no_dark = p_singles_no_dark(mu, routing.q2, chain_b)?;
    let p12_no_dark = p_coinc_no_dark(mu, routing, chain_a, chain_b)?;
    let detected = p_with_dark(
        p12_no_dark,
        p1_no_dark,
        p2_no_dark,
        chain_a.dark_count,
        chain_b.dark_count,
    )?;
    Ok(RateResult {
        routing: *routing,
        mu,
        p1_no_dark,
        p2_no_dark,
        p12_no_dark,
        p1: detected.p1,
        p2: detected.p2,
        p12: detected.p12,
        p12_single_pair: p_coinc_single_pair(mu, routing, chain_a, chain_b)?,
    })
}
