//! Command-line front end.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::commands::{self, FaultInjection};
use crate::config::{Experiment, ExperimentConfig};
use crate::error::{Error, Result};
use crate::io::{self, Table};
use crate::svg::Plot;

#[derive(Debug, Clone, Parser)]
#[command(name = "wdmpairs", version, about = "Coincidence rates of photon pairs routed through a wavelength-selective switch")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// Experiment configuration (JSON).
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Output directory, created if missing.
    #[arg(long, global = true, value_name = "DIR", default_value = ".")]
    pub out: PathBuf,
    /// Overrides the seed given in the configuration.
    #[arg(long, global = true, value_name = "U64")]
    pub seed: Option<u64>,
    /// Also write SVG plots.
    #[arg(long, global = true)]
    pub svg: bool,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Analytic rates for each symmetric channel pair (sweep.csv).
    Sweep,
    /// Fit mu0 and the arm efficiencies to an attenuation dataset
    /// (fit_report.txt, fit_curves.csv, fit_points.csv).
    Fit {
        /// Dataset CSV; defaults to the configuration's `dataset`.
        #[arg(long, value_name = "PATH")]
        data: Option<PathBuf>,
    },
    /// Compare analytic rates against a Monte Carlo run (validate.csv).
    Validate {
        /// Multiplies the analytic P12 before comparison.
        #[arg(long, hide = true, value_name = "FACTOR")]
        inject_p12_scale: Option<f64>,
    },
    /// Sample the pair density and port transmissions on a 1 GHz grid
    /// (export.csv).
    Export,
    /// Draw a synthetic attenuation dataset (dataset.csv).
    Synth,
}

/// Parses a full argument vector, program name first.
pub fn parse_args<I, T>(args: I) -> std::result::Result<Cli, clap::Error>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    Cli::try_parse_from(args)
}

/// What a successful run produced.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Outcome {
    pub files: Vec<PathBuf>,
    /// Text for standard output.
    pub message: String,
}

struct Writer<'a> {
    dir: &'a Path,
    svg: bool,
    outcome: Outcome,
}

impl Writer<'_> {
    fn table(&mut self, name: &str, t: &Table) -> Result<()> {
        let path = self.dir.join(name);
        t.save(&path)?;
        self.outcome.files.push(path);
        Ok(())
    }

    fn text(&mut self, name: &str, s: &str) -> Result<()> {
        let path = self.dir.join(name);
        fs::write(&path, s).map_err(|e| Error::io(&path, e))?;
        self.outcome.files.push(path);
        Ok(())
    }

    fn plot(&mut self, name: &str, plot: impl FnOnce() -> Plot) -> Result<()> {
        if self.svg {
            self.text(name, &plot().render())?;
        }
        Ok(())
    }
}

fn load(global: &GlobalArgs) -> Result<Experiment> {
    let path = global
        .config
        .as_ref()
        .ok_or_else(|| Error::config("--config", "a configuration file is required"))?;
    let cfg = ExperimentConfig::load(path)?;
    let mut exp = cfg.resolve()?;
    if let Some(seed) = global.seed {
        exp.seed = seed;
    }
    Ok(exp)
}

/// Executes a parsed command line. A failed validation still writes its
/// table before returning [`Error::ValidationFailed`].
pub fn run(cli: &Cli) -> Result<Outcome> {
    let exp = load(&cli.global)?;
    let dir = &cli.global.out;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut w = Writer {
        dir,
        svg: cli.global.svg,
        outcome: Outcome::default(),
    };
    match &cli.command {
        Command::Sweep => {
            let rows = commands::sweep(&exp)?;
            let table = commands::sweep_table(&rows);
            w.table("sweep.csv", &table)?;
            w.plot("sweep.svg", || commands::sweep_plot(&rows))?;
            w.outcome.message = table.to_csv_string();
        }
        Command::Fit { data } => {
            let path = data
                .clone()
                .or_else(|| exp.dataset.clone())
                .ok_or_else(|| Error::config("dataset", "give --data or set `dataset` in the configuration"))?;
            let report = commands::fit(&exp, io::read_dataset(&path)?)?;
            let text = report.text();
            w.text("fit_report.txt", &text)?;
            w.table("fit_curves.csv", &report.curves())?;
            w.table("fit_points.csv", &report.points())?;
            w.plot("fit.svg", || report.plot())?;
            w.outcome.message = text;
        }
        Command::Validate { inject_p12_scale } => {
            let fault = inject_p12_scale.map(|p12_scale| FaultInjection { p12_scale });
            let report = commands::validate(&exp, fault)?;
            let table = report.table();
            w.table("validate.csv", &table)?;
            let text = table.to_csv_string();
            if !report.passed() {
                let failed: Vec<String> = report
                    .rows
                    .iter()
                    .filter(|r| !r.passed())
                    .map(|r| format!("{} (z = {:.2})", r.quantity, r.z))
                    .collect();
                eprint!("{text}");
                return Err(Error::ValidationFailed(failed.join(", ")));
            }
            w.outcome.message = text;
        }
        Command::Export => {
            let (table, plot) = commands::export(&exp)?;
            w.table("export.csv", &table)?;
            w.plot("export.svg", || plot)?;
            w.outcome.message = format!("{} samples\n", table.rows.len());
        }
        Command::Synth => {
            let rows = commands::synth(&exp)?;
            let table = io::dataset_table(&rows);
            w.table("dataset.csv", &table)?;
            w.outcome.message = table.to_csv_string();
        }
    }
    Ok(w.outcome)
}
