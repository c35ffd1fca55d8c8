//! The experiment runners behind the CLI subcommands. Each returns its
//! tables in memory; writing files is left to the caller.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use wdmpairs_core::estimate::{
    self, efficiencies_from_fit, model_at, Efficiency, FitDataset, FitParams, FitResult, FitRow,
    FitWarning,
};
use wdmpairs_core::mc_oracle::{GateCounts, Simulation};
use wdmpairs_core::rates::{rates_for, routing_probs, RoutingProbs};
use wdmpairs_core::wss::PortId;

use crate::config::Experiment;
use crate::error::{Error, Result};
use crate::io::{Field, Table};
use crate::parallel;
use crate::svg::{Plot, Series};

/// Minimum gates for `validate`.
pub const MIN_VALIDATION_GATES: u64 = 1_000_000;
/// Largest accepted |z| in `validate`.
pub const Z_LIMIT: f64 = 4.0;
/// Relative standard error above which a fitted parameter is flagged.
pub const WIDE_ERROR: f64 = 0.1;
/// Attenuation step of the fitted model curves, dB.
pub const CURVE_STEP_DB: f64 = 0.1;
/// Sample spacing of `export`, THz.
pub const EXPORT_STEP_THZ: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub n: i32,
    pub routing: RoutingProbs,
    pub p1: f64,
    pub p2: f64,
    pub p12: f64,
}

/// Analytic rates for each symmetric channel pair of the sweep range.
pub fn sweep(exp: &Experiment) -> Result<Vec<SweepRow>> {
    let ns: Vec<i32> = exp.sweep.clone().collect();
    ns.par_iter()
        .map(|&n| {
            let plan = exp.pair_plan(n)?;
            let a = plan.compile_port_transfer(exp.port_a)?;
            let b = plan.compile_port_transfer(exp.port_b)?;
            let routing = routing_probs(&exp.pdf, &a, &b)?;
            let r = rates_for(exp.mu, &routing, &exp.chain_a, &exp.chain_b)?;
            Ok(SweepRow {
                n,
                routing,
                p1: r.p1,
                p2: r.p2,
                p12: r.p12,
            })
        })
        .collect()
}

pub fn sweep_table(rows: &[SweepRow]) -> Table {
    let mut t = Table::new(&["N", "Q1", "Q2", "Q12", "P1", "P2", "P12"]);
    for r in rows {
        t.push(vec![
            r.n.into(),
            r.routing.q1.into(),
            r.routing.q2.into(),
            r.routing.q12.into(),
            r.p1.into(),
            r.p2.into(),
            r.p12.into(),
        ]);
    }
    t
}

pub fn sweep_plot(rows: &[SweepRow]) -> Plot {
    Plot::new("Coincidence probability per channel pair", "channel number N", "P12").with(Series::line(
        "P12",
        rows.iter().map(|r| (r.n as f64, r.p12)).collect(),
    ))
}

/// A fit together with the data and inputs it was computed from.
#[derive(Debug, Clone)]
pub struct FitReport {
    pub data: FitDataset,
    pub result: FitResult,
    pub efficiencies: (Efficiency, Efficiency),
    pub transmittances: (f64, f64),
}

/// Fits `(mu0, kappa1, kappa2)` to `rows` using the experiment's routing
/// probabilities and dark counts.
pub fn fit(exp: &Experiment, rows: Vec<FitRow>) -> Result<FitReport> {
    let routing = exp.routing()?;
    let data = FitDataset::new(rows, routing, exp.chain_a.dark_count, exp.chain_b.dark_count)?;
    let result = estimate::fit(&data, None)?;
    let t = (exp.chain_a.transmittance, exp.chain_b.transmittance);
    let efficiencies = efficiencies_from_fit(&result, t.0, t.1)?;
    Ok(FitReport {
        data,
        result,
        efficiencies,
        transmittances: t,
    })
}

impl FitReport {
    fn model(&self, att_db: f64) -> estimate::ModelPoint {
        let (d1, d2) = self.data.dark_counts();
        model_at(&self.result.params, att_db, self.data.routing(), d1, d2)
    }

    pub fn text(&self) -> String {
        let r = &self.result;
        let q = self.data.routing();
        let mut s = String::new();
        s.push_str("fit of singles and coincidences versus attenuation\n");
        s.push_str(&format!(
            "rows: {}  distinct attenuations: {}  dof: {}\n",
            self.data.rows().len(),
            self.data.distinct_attenuations(),
            r.dof
        ));
        s.push_str(&format!("routing: Q1 = {:.6e}  Q2 = {:.6e}  Q12 = {:.6e}\n", q.q1, q.q2, q.q12));
        s.push_str(&format!(
            "chi-square: {:.6e}  converged: {}  iterations: {}\n\n",
            r.chi_square, r.converged, r.iterations
        ));
        let mut line = |name: &str, v: f64, e: f64| {
            let rel = e / v;
            let flag = if !(rel <= WIDE_ERROR) { "  (wide)" } else { "" };
            s.push_str(&format!("{name:<8} {v:.6e} +/- {e:.3e}{flag}\n"));
        };
        line("mu0", r.params.mu0, r.std_errors.mu0);
        line("kappa1", r.params.kappa1, r.std_errors.kappa1);
        line("kappa2", r.params.kappa2, r.std_errors.kappa2);
        let (e1, e2) = self.efficiencies;
        line("eta1", e1.value, e1.std_error);
        line("eta2", e2.value, e2.std_error);
        s.push_str(&format!(
            "(eta_i = kappa_i / T_i with T1 = {:.6e}, T2 = {:.6e})\n",
            self.transmittances.0, self.transmittances.1
        ));
        for (name, e) in [("eta1", e1), ("eta2", e2)] {
            if e.unphysical {
                s.push_str(&format!("warning: {name} exceeds 1; transmittance or routing inputs are inconsistent\n"));
            }
        }
        for w in &r.warnings {
            match w {
                FitWarning::FewAttenuations { distinct } => s.push_str(&format!(
                    "warning: only {distinct} distinct attenuation(s); mu0 and kappa are weakly separated\n"
                )),
                FitWarning::IllConditioned { condition } => s.push_str(&format!(
                    "warning: curvature condition number {condition:.3e}; parameters are not identifiable\n"
                )),
            }
        }
        s
    }

    /// Model curves on a fine attenuation grid, including the
    /// single-pair coincidence reference.
    pub fn curves(&self) -> Table {
        let max_att = self
            .data
            .rows()
            .iter()
            .map(|r| r.att_db)
            .fold(0.0, f64::max);
        let steps = (max_att / CURVE_STEP_DB).ceil() as i64 + 10;
        let mut t = Table::new(&["att_db", "mu", "P1", "P2", "P12", "P12_single_pair"]);
        for k in 0..=steps {
            let att = k as f64 * CURVE_STEP_DB;
            let m = self.model(att);
            t.push(vec![att.into(), m.mu.into(), m.p1.into(), m.p2.into(), m.p12.into(), m.p12_single_pair.into()]);
        }
        t
    }

    /// Measured frequencies next to the fitted model at each data row.
    pub fn points(&self) -> Table {
        let mut t = Table::new(&[
            "att_db", "gates", "P1_measured", "P1_model", "P2_measured", "P2_model", "P12_measured", "P12_model",
        ]);
        for r in self.data.rows() {
            let n = r.gates as f64;
            let m = self.model(r.att_db);
            t.push(vec![
                r.att_db.into(),
                r.gates.into(),
                (r.clicks1 as f64 / n).into(),
                m.p1.into(),
                (r.clicks2 as f64 / n).into(),
                m.p2.into(),
                (r.coincidences as f64 / n).into(),
                m.p12.into(),
            ]);
        }
        t
    }

    pub fn plot(&self) -> Plot {
        let curve = |f: &dyn Fn(&estimate::ModelPoint) -> f64| -> Vec<(f64, f64)> {
            let max_att = self.data.rows().iter().map(|r| r.att_db).fold(0.0, f64::max) + 1.0;
            let steps = (max_att / CURVE_STEP_DB).ceil() as i64;
            (0..=steps)
                .map(|k| {
                    let att = k as f64 * CURVE_STEP_DB;
                    (att, f(&self.model(att)))
                })
                .collect()
        };
        let measured = |f: &dyn Fn(&FitRow) -> u64| -> Vec<(f64, f64)> {
            self.data
                .rows()
                .iter()
                .map(|r| (r.att_db, f(r) as f64 / r.gates as f64))
                .collect()
        };
        Plot::new("Count probabilities versus attenuation", "attenuation (dB)", "probability per gate")
            .log_y()
            .with(Series::line("P1 fit", curve(&|m| m.p1)))
            .with(Series::line("P2 fit", curve(&|m| m.p2)))
            .with(Series::line("P12 fit", curve(&|m| m.p12)))
            .with(Series::line("P12 single pair", curve(&|m| m.p12_single_pair)))
            .with(Series::markers("P1", measured(&|r| r.clicks1)))
            .with(Series::markers("P12", measured(&|r| r.coincidences)))
    }
}

/// Draws an attenuation dataset from the experiment: `mu` is taken as
/// `mu0` and each arm's `T eta` as `kappa`.
pub fn synth(exp: &Experiment) -> Result<Vec<FitRow>> {
    if exp.attenuations_db.is_empty() {
        return Err(Error::config("attenuations_db", "at least one attenuation is required"));
    }
    let params = FitParams {
        mu0: exp.mu,
        kappa1: exp.chain_a.kappa(),
        kappa2: exp.chain_b.kappa(),
    };
    let routing = exp.routing()?;
    let mut rng = ChaCha8Rng::seed_from_u64(exp.seed);
    let data = estimate::synthesize(
        &params,
        &routing,
        exp.chain_a.dark_count,
        exp.chain_b.dark_count,
        &exp.attenuations_db,
        exp.gates,
        &mut rng,
    )?;
    Ok(data.rows().to_vec())
}

/// Test hook: distorts the analytic values before comparison.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FaultInjection {
    /// Multiplies the analytic coincidence probability.
    pub p12_scale: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationRow {
    pub quantity: &'static str,
    pub analytic: f64,
    pub monte_carlo: f64,
    pub std_error: f64,
    pub z: f64,
}

impl ValidationRow {
    pub fn passed(&self) -> bool {
        self.z.abs() < Z_LIMIT
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub counts: GateCounts,
    pub rows: Vec<ValidationRow>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.rows.iter().all(ValidationRow::passed)
    }

    pub fn table(&self) -> Table {
        let mut t = Table::new(&["quantity", "analytic", "monte_carlo", "std_error", "z", "pass"]);
        for r in &self.rows {
            t.push(vec![
                r.quantity.into(),
                r.analytic.into(),
                r.monte_carlo.into(),
                r.std_error.into(),
                r.z.into(),
                (if r.passed() { "yes" } else { "no" }).into(),
            ]);
        }
        t
    }
}

/// Compares the analytic rates of the explicit plan against a seeded Monte
/// Carlo run of `exp.gates` gates. The standard error is that of the
/// analytic probability.
pub fn validate(exp: &Experiment, fault: Option<FaultInjection>) -> Result<ValidationReport> {
    if exp.gates < MIN_VALIDATION_GATES {
        return Err(Error::config(
            "gates",
            format!("{} is below the {MIN_VALIDATION_GATES} gates needed for validation", exp.gates),
        ));
    }
    let plan = exp.plan()?;
    let report = plan.validate();
    if !report.is_ok() {
        return Err(Error::config("switch.assignments", report.summary()));
    }
    let a = plan.compile_port_transfer(exp.port_a)?;
    let b = plan.compile_port_transfer(exp.port_b)?;
    let routing = routing_probs(&exp.pdf, &a, &b)?;
    let rates = rates_for(exp.mu, &routing, &exp.chain_a, &exp.chain_b)?;
    let sim = Simulation::new(&exp.pdf, &a, &b, exp.mu, &exp.chain_a, &exp.chain_b)?;
    let counts = parallel::run(&sim, exp.gates, exp.seed);
    let n = counts.gates as f64;
    let p12_scale = fault.map_or(1.0, |f| f.p12_scale);
    let row = |quantity, analytic: f64, hits: u64| {
        let monte_carlo = hits as f64 / n;
        let std_error = (analytic * (1.0 - analytic) / n).max(0.0).sqrt();
        let diff = monte_carlo - analytic;
        let z = if std_error > 0.0 {
            diff / std_error
        } else if diff == 0.0 {
            0.0
        } else {
            diff.signum() * f64::INFINITY
        };
        ValidationRow {
            quantity,
            analytic,
            monte_carlo,
            std_error,
            z,
        }
    };
    Ok(ValidationReport {
        rows: vec![
            row("P1", rates.p1, counts.clicks1),
            row("P2", rates.p2, counts.clicks2),
            row("P12", (rates.p12 * p12_scale).min(1.0), counts.coincidences),
        ],
        counts,
    })
}

/// Ports shown by `export`: the two detection ports and every assigned one.
fn export_ports(exp: &Experiment) -> Vec<PortId> {
    let mut ports = vec![exp.port_a, exp.port_b];
    ports.extend(exp.assignments.iter().map(|&(_, p)| p));
    ports.sort();
    ports.dedup();
    ports
}

/// The pair density and each port's transmission on a 1 GHz grid.
pub fn export(exp: &Experiment) -> Result<(Table, Plot)> {
    let plan = exp.plan()?;
    let ports = export_ports(exp);
    let tfs = ports
        .iter()
        .map(|&p| plan.compile_port_transfer(p))
        .collect::<wdmpairs_core::Result<Vec<_>>>()?;
    let mut radius = exp.pdf.support_radius();
    for g in &exp.grids {
        for ch in [g.min_channel, g.max_channel] {
            let offset = (g.channel_center(ch) - wdmpairs_core::spectrum::DEGENERACY_THZ).abs();
            radius = radius.max(offset + exp.shape.half_support_thz());
        }
    }
    let k_max = (radius / EXPORT_STEP_THZ).ceil() as i64;
    let mut header = vec!["detuning_thz".to_owned(), "pdf".to_owned()];
    header.extend(ports.iter().map(|p| format!("H2_{}", p.0)));
    let mut table = Table::new(&header);
    let mut pdf_pts = Vec::new();
    let mut tf_pts = vec![Vec::new(); tfs.len()];
    for k in -k_max..=k_max {
        let nu = k as f64 * EXPORT_STEP_THZ;
        let density = exp.pdf.density(nu);
        let mut row: Vec<Field> = vec![nu.into(), density.into()];
        pdf_pts.push((nu, density));
        for (tf, pts) in tfs.iter().zip(tf_pts.iter_mut()) {
            let h = tf.power(nu);
            row.push(h.into());
            pts.push((nu, h));
        }
        table.push(row);
    }
    let peak = pdf_pts.iter().map(|p| p.1).fold(0.0, f64::max);
    let scale = if peak > 0.0 { 1.0 / peak } else { 1.0 };
    let mut plot = Plot::new("Pair density and port transmission", "detuning from 193.5 THz (THz)", "relative value")
        .with(Series::line("pdf (scaled)", pdf_pts.iter().map(|&(x, y)| (x, y * scale)).collect()));
    for (p, pts) in ports.iter().zip(tf_pts) {
        plot = plot.with(Series::line(format!("|H_{}|^2", p.0), pts));
    }
    Ok((table, plot))
}
