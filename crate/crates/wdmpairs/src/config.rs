//! Versioned JSON experiment configuration and its resolution into model
//! objects. Every field is checked before any computation starts; problems
//! are reported with the dotted path of the offending field.

use std::fmt::Display;
use std::ops::RangeInclusive;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use wdmpairs_core::rates::{DetectionChain, RoutingProbs};
use wdmpairs_core::spectrum::{gaussian_scale_for_fwhm, LobeModel, PairPdf, PairSpectrum};
use wdmpairs_core::wss::{
    symmetric_pair_plan, Band, BandGrid, ChannelShape, LossProfile, PortId, SwitchPlan,
    DEVICE_MAX_CHANNEL, DEVICE_MIN_CHANNEL, MAX_PAIR_CHANNEL,
};

use crate::error::{ConfigIssue, Error, Result};
use crate::io;

pub const SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_GATES: u64 = 10_000_000;
/// Ports the device exposes.
pub const PORTS: RangeInclusive<char> = 'A'..='H';

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub spectrum: SpectrumConfig,
    #[serde(default)]
    pub switch: SwitchConfig,
    pub detectors: DetectorsConfig,
    /// Mean pairs per gate at zero attenuation.
    pub mu: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub attenuations_db: Vec<f64>,
    #[serde(default = "default_gates")]
    pub gates: u64,
    #[serde(default)]
    pub seed: u64,
    /// Replaces the routing probabilities computed from the switch plan.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub routing: Option<RoutingConfig>,
    /// Attenuation dataset for `fit`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset: Option<PathBuf>,
    /// Directory relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_gates() -> u64 {
    DEFAULT_GATES
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpectrumModel {
    Gaussian,
    SincSquared,
    Tabulated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumConfig {
    pub model: SpectrumModel,
    /// Lobe center offset from degeneracy, THz (parametric models).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lobe_detuning_thz: Option<f64>,
    /// Gaussian full width at half maximum, THz.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fwhm_thz: Option<f64>,
    /// Gaussian standard deviation or sinc-squared first-zero distance, THz.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale_thz: Option<f64>,
    /// Tabulated spectrum CSV.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub filters: Vec<FilterConfig>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterConfig {
    pub center_thz: f64,
    pub width_thz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SwitchConfig {
    #[serde(default = "default_bands")]
    pub bands: Vec<String>,
    /// Per-band grid overrides.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub grids: Vec<GridConfig>,
    #[serde(default)]
    pub shape: ShapeConfig,
    #[serde(default = "default_loss")]
    pub default_loss_db: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loss_file: Option<PathBuf>,
    #[serde(default = "default_port_a")]
    pub port_a: String,
    #[serde(default = "default_port_b")]
    pub port_b: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub assignments: Vec<AssignmentConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
}

impl Default for SwitchConfig {
    fn default() -> Self {
        SwitchConfig {
            bands: default_bands(),
            grids: Vec::new(),
            shape: ShapeConfig::default(),
            default_loss_db: default_loss(),
            loss_file: None,
            port_a: default_port_a(),
            port_b: default_port_b(),
            assignments: Vec::new(),
            sweep: None,
        }
    }
}

fn default_bands() -> Vec<String> {
    vec!["C".into()]
}

fn default_loss() -> f64 {
    wdmpairs_core::wss::DEFAULT_LOSS_DB
}

fn default_port_a() -> String {
    "A".into()
}

fn default_port_b() -> String {
    "B".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub band: String,
    pub channel0_thz: f64,
    pub spacing_ghz: f64,
    #[serde(default = "default_min_channel")]
    pub min_channel: i32,
    #[serde(default = "default_max_channel")]
    pub max_channel: i32,
}

fn default_min_channel() -> i32 {
    DEVICE_MIN_CHANNEL
}

fn default_max_channel() -> i32 {
    DEVICE_MAX_CHANNEL
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ShapeConfig {
    Rectangle { width_ghz: f64 },
    SuperGaussian { width_ghz: f64, order: u32 },
}

impl Default for ShapeConfig {
    fn default() -> Self {
        match ChannelShape::default() {
            ChannelShape::Rectangle { width_ghz } => ShapeConfig::Rectangle { width_ghz },
            ChannelShape::SuperGaussian { width_ghz, order } => ShapeConfig::SuperGaussian { width_ghz, order },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssignmentConfig {
    pub port: String,
    pub channels: Vec<i32>,
}

/// Symmetric channel pairs `+N -> port_a`, `-N -> port_b` for `N` in
/// `from..=to`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub from: i32,
    pub to: i32,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            from: 1,
            to: MAX_PAIR_CHANNEL,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorsConfig {
    pub a: DetectorConfig,
    pub b: DetectorConfig,
}

/// One detection arm: transmittance outside the switch, detector
/// efficiency, and dark-count probability per gate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorConfig {
    pub transmittance: f64,
    pub efficiency: f64,
    #[serde(default)]
    pub dark_count: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoutingConfig {
    pub q1: f64,
    pub q2: f64,
    pub q12: f64,
}

impl ExperimentConfig {
    /// Parses JSON; relative paths will resolve against `base_dir`.
    pub fn from_json(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let mut cfg: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let path = if path == "." { "<root>".to_owned() } else { path };
            Error::config(path, e.into_inner().to_string())
        })?;
        cfg.base_dir = base_dir.into();
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_json(&text, base)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn resolve_path(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_owned()
        } else {
            self.base_dir.join(p)
        }
    }

    /// Checks every field and downstream invariant.
    pub fn validate(&self) -> Result<()> {
        self.resolve().map(|_| ())
    }

    /// Validates and builds the model objects.
    pub fn resolve(&self) -> Result<Experiment> {
        let mut c = Collector::default();
        if self.schema_version != SCHEMA_VERSION {
            c.push(
                "schema_version",
                format!("unsupported version {} (expected {SCHEMA_VERSION})", self.schema_version),
            );
        }
        let spectrum = self.build_spectrum(&mut c);
        let switch = self.build_switch(&mut c);
        let chain_a = c.check("detectors.a", chain(&self.detectors.a));
        let chain_b = c.check("detectors.b", chain(&self.detectors.b));
        if !(self.mu >= 0.0) || !self.mu.is_finite() {
            c.push("mu", format!("{} must be a finite value >= 0", self.mu));
        }
        for (i, a) in self.attenuations_db.iter().enumerate() {
            if !(*a >= 0.0) || !a.is_finite() {
                c.push(format!("attenuations_db[{i}]"), format!("{a} must be a finite value >= 0"));
            }
        }
        if self.gates == 0 {
            c.push("gates", "at least one gate is required");
        }
        let routing_override = self.routing.and_then(|r| {
            c.check("routing", RoutingProbs::new(r.q1, r.q2, r.q12))
        });
        let dataset = self.dataset.as_ref().map(|p| self.resolve_path(p));
        if let Some(p) = &dataset {
            if !p.is_file() {
                c.push("dataset", format!("{} is not a readable file", p.display()));
            }
        }
        c.finish()?;

        let pdf = spectrum.expect("checked above");
        let switch = switch.expect("checked above");
        Ok(Experiment {
            pdf,
            grids: switch.grids,
            shape: switch.shape,
            default_loss_db: self.switch.default_loss_db,
            losses: switch.losses,
            port_a: switch.port_a,
            port_b: switch.port_b,
            assignments: switch.assignments,
            sweep: switch.sweep,
            chain_a: chain_a.expect("checked above"),
            chain_b: chain_b.expect("checked above"),
            mu: self.mu,
            attenuations_db: self.attenuations_db.clone(),
            gates: self.gates,
            seed: self.seed,
            routing_override,
            dataset,
        })
    }

    fn build_spectrum(&self, c: &mut Collector) -> Option<PairPdf> {
        let s = &self.spectrum;
        let before = c.len();
        let finite_positive = |c: &mut Collector, field: &str, v: Option<f64>| {
            if let Some(v) = v {
                if !(v > 0.0) || !v.is_finite() {
                    c.push(format!("spectrum.{field}"), format!("{v} must be positive and finite"));
                }
            }
        };
        finite_positive(c, "fwhm_thz", s.fwhm_thz);
        finite_positive(c, "scale_thz", s.scale_thz);
        if let Some(d) = s.lobe_detuning_thz {
            if !(d >= 0.0) || !d.is_finite() {
                c.push("spectrum.lobe_detuning_thz", format!("{d} must be a finite value >= 0"));
            }
        }
        let base = match s.model {
            SpectrumModel::Gaussian | SpectrumModel::SincSquared => {
                if s.path.is_some() {
                    c.push("spectrum.path", "only used by the tabulated model");
                }
                let scale = match (s.model, s.fwhm_thz, s.scale_thz) {
                    (SpectrumModel::Gaussian, Some(w), None) => Some(gaussian_scale_for_fwhm(w)),
                    (_, None, Some(sc)) => Some(sc),
                    (SpectrumModel::Gaussian, _, _) => {
                        c.push("spectrum", "give exactly one of `fwhm_thz` and `scale_thz`");
                        None
                    }
                    (_, Some(_), _) => {
                        c.push("spectrum.fwhm_thz", "the sinc-squared model takes `scale_thz`");
                        None
                    }
                    (_, None, None) => {
                        c.push("spectrum.scale_thz", "required by the sinc-squared model");
                        None
                    }
                };
                let model = if s.model == SpectrumModel::Gaussian {
                    LobeModel::Gaussian
                } else {
                    LobeModel::SincSquared
                };
                match scale {
                    Some(sc) if c.len() == before => c.check(
                        "spectrum",
                        PairSpectrum::parametric(model, s.lobe_detuning_thz.unwrap_or(0.0), sc),
                    ),
                    _ => None,
                }
            }
            SpectrumModel::Tabulated => {
                for (field, set) in [
                    ("lobe_detuning_thz", s.lobe_detuning_thz.is_some()),
                    ("fwhm_thz", s.fwhm_thz.is_some()),
                    ("scale_thz", s.scale_thz.is_some()),
                ] {
                    if set {
                        c.push(format!("spectrum.{field}"), "not used by the tabulated model");
                    }
                }
                match &s.path {
                    None => {
                        c.push("spectrum.path", "required by the tabulated model");
                        None
                    }
                    Some(p) => c
                        .check("spectrum.path", io::read_spectrum(&self.resolve_path(p)))
                        .and_then(|rows| c.check("spectrum.path", PairSpectrum::tabulated(&rows))),
                }
            }
        };
        for (i, f) in s.filters.iter().enumerate() {
            if !f.center_thz.is_finite() {
                c.push(format!("spectrum.filters[{i}].center_thz"), "must be finite");
            }
            if !(f.width_thz > 0.0) || !f.width_thz.is_finite() {
                c.push(
                    format!("spectrum.filters[{i}].width_thz"),
                    format!("{} must be positive and finite", f.width_thz),
                );
            }
        }
        if c.len() != before {
            return None;
        }
        let mut spec = base?;
        for (i, f) in s.filters.iter().enumerate() {
            spec = c.check(
                format!("spectrum.filters[{i}]"),
                spec.apply_bandpass(f.center_thz, f.width_thz),
            )?;
        }
        c.check("spectrum", spec.normalize())
    }

    fn build_switch(&self, c: &mut Collector) -> Option<ResolvedSwitch> {
        let s = &self.switch;
        let before = c.len();
        let mut bands = vec![Band::C];
        for (i, b) in s.bands.iter().enumerate() {
            if let Some(band) = c.check(format!("switch.bands[{i}]"), b.parse::<Band>()) {
                if !bands.contains(&band) {
                    bands.push(band);
                }
            }
        }
        let mut overrides: Vec<BandGrid> = Vec::new();
        for (i, g) in s.grids.iter().enumerate() {
            let path = format!("switch.grids[{i}]");
            let Some(band) = c.check(format!("{path}.band"), g.band.parse::<Band>()) else {
                continue;
            };
            if overrides.iter().any(|o| o.band == band) {
                c.push(format!("{path}.band"), format!("band {band} overridden twice"));
                continue;
            }
            if g.min_channel < DEVICE_MIN_CHANNEL || g.max_channel > DEVICE_MAX_CHANNEL {
                c.push(
                    path.clone(),
                    format!("channel range must lie within [{DEVICE_MIN_CHANNEL}, {DEVICE_MAX_CHANNEL}]"),
                );
                continue;
            }
            if let Some(grid) = c.check(
                path,
                BandGrid::new(band, g.channel0_thz, g.spacing_ghz, g.min_channel, g.max_channel),
            ) {
                if !bands.contains(&band) {
                    bands.push(band);
                }
                overrides.push(grid);
            }
        }
        let grids: Vec<BandGrid> = Band::ALL
            .into_iter()
            .filter(|b| bands.contains(b))
            .map(|b| {
                overrides
                    .iter()
                    .copied()
                    .find(|g| g.band == b)
                    .unwrap_or_else(|| BandGrid::default_for(b))
            })
            .collect();
        let shape = c.check("switch.shape", shape(s.shape));
        if !(s.default_loss_db >= 0.0) || !s.default_loss_db.is_finite() {
            c.push(
                "switch.default_loss_db",
                format!("{} must be a finite value >= 0", s.default_loss_db),
            );
        }
        let losses = match &s.loss_file {
            Some(p) => c.check("switch.loss_file", io::read_loss_profile(&self.resolve_path(p))),
            None => Some(LossProfile::new()),
        };
        let port_a = c.check("switch.port_a", port(&s.port_a));
        let port_b = c.check("switch.port_b", port(&s.port_b));
        if port_a.is_some() && port_a == port_b {
            c.push("switch.port_b", "must differ from port_a");
        }
        let c_grid = grids.iter().find(|g| g.band == Band::C).copied().expect("C is always present");
        let mut assignments = Vec::new();
        for (i, a) in s.assignments.iter().enumerate() {
            let p = c.check(format!("switch.assignments[{i}].port"), port(&a.port));
            for (j, &ch) in a.channels.iter().enumerate() {
                if !c_grid.contains(ch) {
                    c.push(
                        format!("switch.assignments[{i}].channels[{j}]"),
                        format!("channel {ch} outside [{}, {}]", c_grid.min_channel, c_grid.max_channel),
                    );
                } else if let Some(p) = p {
                    assignments.push((ch, p));
                }
            }
        }
        let sweep = s.sweep.unwrap_or_default();
        if sweep.from < 1 || sweep.to > MAX_PAIR_CHANNEL || sweep.from > sweep.to {
            c.push(
                "switch.sweep",
                format!("range {}..={} must lie within 1..={MAX_PAIR_CHANNEL}", sweep.from, sweep.to),
            );
        } else if sweep.to > c_grid.max_channel || -sweep.to < c_grid.min_channel {
            c.push("switch.sweep", format!("channel pair {} falls outside the C grid", sweep.to));
        }
        if c.len() != before {
            return None;
        }
        let resolved = ResolvedSwitch {
            grids,
            shape: shape?,
            losses: losses?,
            port_a: port_a?,
            port_b: port_b?,
            assignments,
            sweep: sweep.from..=sweep.to,
        };
        let plan = c.check("switch.assignments", resolved.plan(s.default_loss_db))?;
        let report = plan.validate();
        if !report.is_ok() {
            c.push("switch.assignments", report.summary());
            return None;
        }
        for n in resolved.sweep.clone() {
            let plan = c.check("switch.sweep", resolved.pair_plan(n, s.default_loss_db))?;
            let report = plan.validate();
            if !report.is_ok() {
                c.push("switch.sweep", format!("pair {n}: {}", report.summary()));
                return None;
            }
        }
        Some(resolved)
    }
}

fn chain(d: &DetectorConfig) -> wdmpairs_core::Result<DetectionChain> {
    DetectionChain::new(d.transmittance, d.efficiency, d.dark_count)
}

fn shape(s: ShapeConfig) -> wdmpairs_core::Result<ChannelShape> {
    match s {
        ShapeConfig::Rectangle { width_ghz } => ChannelShape::rectangle(width_ghz),
        ShapeConfig::SuperGaussian { width_ghz, order } => ChannelShape::super_gaussian(width_ghz, order),
    }
}

fn port(s: &str) -> std::result::Result<PortId, String> {
    let mut chars = s.chars();
    match (chars.next(), chars.next()) {
        (Some(ch), None) if PORTS.contains(&ch) => Ok(PortId(ch)),
        _ => Err(format!("`{s}` is not a port letter {}..={}", PORTS.start(), PORTS.end())),
    }
}

#[derive(Default)]
struct Collector(Vec<ConfigIssue>);

impl Collector {
    fn push(&mut self, path: impl Into<String>, message: impl Into<String>) {
        self.0.push(ConfigIssue::new(path, message));
    }

    fn check<T, E: Display>(&mut self, path: impl Into<String>, r: std::result::Result<T, E>) -> Option<T> {
        match r {
            Ok(v) => Some(v),
            Err(e) => {
                self.push(path, e.to_string());
                None
            }
        }
    }

    fn len(&self) -> usize {
        self.0.len()
    }

    fn finish(self) -> Result<()> {
        if self.0.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(self.0))
        }
    }
}

struct ResolvedSwitch {
    grids: Vec<BandGrid>,
    shape: ChannelShape,
    losses: LossProfile,
    port_a: PortId,
    port_b: PortId,
    assignments: Vec<(i32, PortId)>,
    sweep: RangeInclusive<i32>,
}

impl ResolvedSwitch {
    fn plan(&self, default_loss_db: f64) -> wdmpairs_core::Result<SwitchPlan> {
        let mut plan = SwitchPlan::new(self.grids.clone(), self.shape)?
            .with_default_loss(default_loss_db)?
            .with_losses(self.losses.clone());
        for &(ch, p) in &self.assignments {
            plan.assign(ch, p)?;
        }
        Ok(plan)
    }

    fn pair_plan(&self, n: i32, default_loss_db: f64) -> wdmpairs_core::Result<SwitchPlan> {
        Ok(symmetric_pair_plan(n, self.port_a, self.port_b, self.grids.clone(), self.shape)?
            .with_default_loss(default_loss_db)?
            .with_losses(self.losses.clone()))
    }
}

/// A validated configuration turned into model objects.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub pdf: PairPdf,
    pub grids: Vec<BandGrid>,
    pub shape: ChannelShape,
    pub default_loss_db: f64,
    pub losses: LossProfile,
    pub port_a: PortId,
    pub port_b: PortId,
    pub assignments: Vec<(i32, PortId)>,
    pub sweep: RangeInclusive<i32>,
    pub chain_a: DetectionChain,
    pub chain_b: DetectionChain,
    pub mu: f64,
    pub attenuations_db: Vec<f64>,
    pub gates: u64,
    pub seed: u64,
    pub routing_override: Option<RoutingProbs>,
    pub dataset: Option<PathBuf>,
}

impl Experiment {
    fn switch(&self) -> ResolvedSwitch {
        ResolvedSwitch {
            grids: self.grids.clone(),
            shape: self.shape,
            losses: self.losses.clone(),
            port_a: self.port_a,
            port_b: self.port_b,
            assignments: self.assignments.clone(),
            sweep: self.sweep.clone(),
        }
    }

    /// The plan given by the explicit assignments.
    pub fn plan(&self) -> Result<SwitchPlan> {
        Ok(self.switch().plan(self.default_loss_db)?)
    }

    /// The symmetric plan for channel pair `n`.
    pub fn pair_plan(&self, n: i32) -> Result<SwitchPlan> {
        Ok(self.switch().pair_plan(n, self.default_loss_db)?)
    }

    /// Routing probabilities of the explicit plan, unless overridden.
    pub fn routing(&self) -> Result<RoutingProbs> {
        if let Some(r) = self.routing_override {
            return Ok(r);
        }
        let plan = self.plan()?;
        let a = plan.compile_port_transfer(self.port_a)?;
        let b = plan.compile_port_transfer(self.port_b)?;
        Ok(wdmpairs_core::rates::routing_probs(&self.pdf, &a, &b)?)
    }
}
