//! Wavelength-selective switch model.
//!
//! The switch demultiplexes its input onto an ITU-style channel grid and
//! sends each channel to one output port. Its arrayed-waveguide-grating
//! core is periodic in frequency, so every configured channel also opens a
//! replica passband in the S and L bands, one free spectral range away, with
//! a slightly different channel spacing in each band.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::error::{check_range, invalid, Error, Result};
use crate::quad;
use crate::spectrum::DEGENERACY_THZ;

/// Free spectral range of the grating, THz.
pub const FSR_THZ: f64 = 6.79;
/// Lowest channel index the device exposes (191.6 THz).
pub const DEVICE_MIN_CHANNEL: i32 = -19;
/// Highest channel index the device exposes (196.0 THz).
pub const DEVICE_MAX_CHANNEL: i32 = 25;
/// Largest `N` for which both `+N` and `-N` exist.
pub const MAX_PAIR_CHANNEL: i32 = 19;
/// Insertion loss applied to channels without a measured value.
pub const DEFAULT_LOSS_DB: f64 = 5.0;
/// Cross-port transmittance product above which two ports overlap.
pub const OVERLAP_THRESHOLD: f64 = 1e-6;

const ITU_SPACING_THZ: f64 = 0.1;
const OFF_GRID_TOLERANCE_THZ: f64 = 1e-3;
/// Super-gaussian passbands are cut where they fall below this fraction of
/// their peak.
const SHAPE_FLOOR: f64 = 1e-20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Band {
    S,
    C,
    L,
}

impl Band {
    pub const ALL: [Band; 3] = [Band::S, Band::C, Band::L];
}

impl fmt::Display for Band {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Band::S => "S",
            Band::C => "C",
            Band::L => "L",
        })
    }
}

impl FromStr for Band {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "S" | "s" => Ok(Band::S),
            "C" | "c" => Ok(Band::C),
            "L" | "l" => Ok(Band::L),
            other => Err(Error::Format(alloc::format!("unknown band `{other}`"))),
        }
    }
}

/// Output port of the switch, named by a letter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PortId(pub char);

impl fmt::Display for PortId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Channel grid of one band.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandGrid {
    pub band: Band,
    /// Center of channel 0 in THz.
    pub channel0_thz: f64,
    pub spacing_ghz: f64,
    pub min_channel: i32,
    pub max_channel: i32,
}

impl BandGrid {
    pub fn new(
        band: Band,
        channel0_thz: f64,
        spacing_ghz: f64,
        min_channel: i32,
        max_channel: i32,
    ) -> Result<Self> {
        if !(spacing_ghz > 0.0) || !spacing_ghz.is_finite() {
            return Err(invalid("spacing_ghz", alloc::format!("{spacing_ghz} must be positive")));
        }
        if !channel0_thz.is_finite() {
            return Err(invalid("channel0_thz", "must be finite"));
        }
        if min_channel > 0 || max_channel < 0 {
            return Err(invalid(
                "channel range",
                alloc::format!("[{min_channel}, {max_channel}] must contain 0"),
            ));
        }
        Ok(BandGrid {
            band,
            channel0_thz,
            spacing_ghz,
            min_channel,
            max_channel,
        })
    }

    /// The device's grid for `band`: C on the 100 GHz ITU grid, S and L
    /// anchored one FSR above and below channel 0 with their own spacings.
    pub fn default_for(band: Band) -> Self {
        let (channel0_thz, spacing_ghz) = match band {
            Band::S => (DEGENERACY_THZ + FSR_THZ, 103.6),
            Band::C => (DEGENERACY_THZ, 100.0),
            Band::L => (DEGENERACY_THZ - FSR_THZ, 96.5),
        };
        BandGrid {
            band,
            channel0_thz,
            spacing_ghz,
            min_channel: DEVICE_MIN_CHANNEL,
            max_channel: DEVICE_MAX_CHANNEL,
        }
    }

    pub fn contains(&self, channel: i32) -> bool {
        (self.min_channel..=self.max_channel).contains(&channel)
    }

    /// Absolute center frequency of `channel`, THz.
    pub fn channel_center(&self, channel: i32) -> f64 {
        self.channel0_thz + channel as f64 * self.spacing_ghz * 1e-3
    }
}

/// `N_ch(f) = 10 (f - 193.5)` for a frequency on the 100 GHz grid.
pub fn channel_number(frequency_thz: f64) -> Result<i32> {
    if !frequency_thz.is_finite() {
        return Err(invalid("frequency_thz", "must be finite"));
    }
    let n = libm::round((frequency_thz - DEGENERACY_THZ) / ITU_SPACING_THZ);
    let residual = frequency_thz - (DEGENERACY_THZ + n * ITU_SPACING_THZ);
    if residual.abs() > OFF_GRID_TOLERANCE_THZ {
        return Err(Error::OffGrid {
            frequency_thz,
            residual_ghz: residual * 1e3,
        });
    }
    let n = n as i32;
    if !(DEVICE_MIN_CHANNEL..=DEVICE_MAX_CHANNEL).contains(&n) {
        return Err(Error::ChannelOutOfRange {
            channel: n,
            min: DEVICE_MIN_CHANNEL,
            max: DEVICE_MAX_CHANNEL,
        });
    }
    Ok(n)
}

/// Inverse of [`channel_number`] on a given grid.
pub fn channel_center(channel: i32, grid: &BandGrid) -> f64 {
    grid.channel_center(channel)
}

/// Power transmittance profile of one channel, peak normalized to 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ChannelShape {
    Rectangle { width_ghz: f64 },
    /// `exp(-ln 2 (2x / width)^(2 order))`, which is 1/2 at `x = +-width/2`.
    SuperGaussian { width_ghz: f64, order: u32 },
}

impl Default for ChannelShape {
    fn default() -> Self {
        ChannelShape::SuperGaussian {
            width_ghz: 77.0,
            order: 6,
        }
    }
}

impl ChannelShape {
    pub fn rectangle(width_ghz: f64) -> Result<Self> {
        let shape = ChannelShape::Rectangle { width_ghz };
        shape.validate()?;
        Ok(shape)
    }

    pub fn super_gaussian(width_ghz: f64, order: u32) -> Result<Self> {
        let shape = ChannelShape::SuperGaussian { width_ghz, order };
        shape.validate()?;
        Ok(shape)
    }

    pub fn validate(&self) -> Result<()> {
        let w = self.width_ghz();
        if !(w > 0.0) || !w.is_finite() {
            return Err(invalid("width_ghz", alloc::format!("{w} must be positive")));
        }
        if let ChannelShape::SuperGaussian { order, .. } = *self {
            if order < 2 || order % 2 != 0 {
                return Err(invalid(
                    "order",
                    alloc::format!("{order} must be an even integer >= 2"),
                ));
            }
        }
        Ok(())
    }

    /// 3 dB full width, GHz.
    pub fn width_ghz(&self) -> f64 {
        match *self {
            ChannelShape::Rectangle { width_ghz } => width_ghz,
            ChannelShape::SuperGaussian { width_ghz, .. } => width_ghz,
        }
    }

    /// Distance from the channel center beyond which the shape is zero, THz.
    pub fn half_support_thz(&self) -> f64 {
        let half = 0.5 * self.width_ghz() * 1e-3;
        match *self {
            ChannelShape::Rectangle { .. } => half,
            ChannelShape::SuperGaussian { order, .. } => {
                let u = libm::pow(-libm::log(SHAPE_FLOOR) / core::f64::consts::LN_2, 0.5 / order as f64);
                half * u
            }
        }
    }

    /// Transmittance at `offset_thz` from the channel center.
    pub fn eval(&self, offset_thz: f64) -> f64 {
        let x = offset_thz.abs();
        let half = 0.5 * self.width_ghz() * 1e-3;
        match *self {
            ChannelShape::Rectangle { .. } => {
                if x <= half {
                    1.0
                } else {
                    0.0
                }
            }
            ChannelShape::SuperGaussian { .. } => {
                if x > self.half_support_thz() {
                    0.0
                } else {
                    self.profile(x)
                }
            }
        }
    }

    /// The shape at `|offset| = x`, assumed inside the support.
    fn profile(&self, x: f64) -> f64 {
        match *self {
            ChannelShape::Rectangle { .. } => 1.0,
            ChannelShape::SuperGaussian { width_ghz, order } => {
                let u = ipow(x / (0.5 * width_ghz * 1e-3), 2 * order);
                libm::exp(-core::f64::consts::LN_2 * u)
            }
        }
    }
}

fn ipow(mut base: f64, mut exp: u32) -> f64 {
    let mut acc = 1.0;
    while exp > 0 {
        if exp & 1 == 1 {
            acc *= base;
        }
        base *= base;
        exp >>= 1;
    }
    acc
}

/// One open window of a port: a channel shape at a detuning, scaled by the
/// channel's insertion loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Passband {
    /// Detuning of the channel center from 193.5 THz.
    pub center_thz: f64,
    /// Peak power transmittance in `[0, 1]`.
    pub peak: f64,
    pub shape: ChannelShape,
}

impl Passband {
    pub fn eval(&self, nu: f64) -> f64 {
        self.peak * self.shape.eval(nu - self.center_thz)
    }

    pub fn support(&self) -> (f64, f64) {
        let r = self.shape.half_support_thz();
        (self.center_thz - r, self.center_thz + r)
    }
}

/// Power transmittance `|H_p(nu)|^2` of one port over detuning.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TransferFunction {
    passbands: Vec<Passband>,
    baseline: f64,
    /// Support of each passband, cached for fast evaluation.
    bounds: Vec<(f64, f64)>,
}

impl TransferFunction {
    /// `|H|^2 = 0` everywhere.
    pub fn empty() -> Self {
        TransferFunction::default()
    }

    /// `|H|^2 = level` everywhere.
    pub fn constant(level: f64) -> Result<Self> {
        check_range("level", level, 0.0, 1.0)?;
        Ok(Self::build(Vec::new(), level))
    }

    pub fn from_passbands(passbands: Vec<Passband>) -> Result<Self> {
        for p in &passbands {
            check_range("peak", p.peak, 0.0, 1.0)?;
            p.shape.validate()?;
            if !p.center_thz.is_finite() {
                return Err(invalid("center_thz", "must be finite"));
            }
        }
        Ok(Self::build(passbands, 0.0))
    }

    fn build(passbands: Vec<Passband>, baseline: f64) -> Self {
        let bounds = passbands.iter().map(Passband::support).collect();
        TransferFunction {
            passbands,
            baseline,
            bounds,
        }
    }

    /// Unit-height box on `[lo, hi]` (detuning, THz).
    pub fn boxcar(lo: f64, hi: f64, peak: f64) -> Result<Self> {
        if !(hi > lo) {
            return Err(invalid("box", alloc::format!("[{lo}, {hi}] is empty")));
        }
        Self::from_passbands(alloc::vec![Passband {
            center_thz: 0.5 * (lo + hi),
            peak,
            shape: ChannelShape::Rectangle {
                width_ghz: (hi - lo) * 1e3,
            },
        }])
    }

    pub fn passbands(&self) -> &[Passband] {
        &self.passbands
    }

    pub fn is_zero(&self) -> bool {
        self.baseline == 0.0 && self.passbands.iter().all(|p| p.peak == 0.0)
    }

    /// `|H(nu)|^2`, clipped to 1 where neighbouring passbands add up.
    pub fn power(&self, nu: f64) -> f64 {
        let mut sum = self.baseline;
        for (p, &(lo, hi)) in self.passbands.iter().zip(&self.bounds) {
            // Closed at both ends so a rectangle edge transmits.
            if nu >= lo && nu <= hi {
                sum += p.peak * p.shape.profile((nu - p.center_thz).abs());
            }
        }
        sum.min(1.0)
    }

    /// `nu -> |H(-nu)|^2`.
    pub fn mirrored(&self) -> Self {
        Self::build(
            self.passbands
                .iter()
                .map(|p| Passband {
                    center_thz: -p.center_thz,
                    ..*p
                })
                .collect(),
            self.baseline,
        )
    }

    /// Intervals outside of which `|H|^2` vanishes.
    pub fn support(&self) -> Vec<(f64, f64)> {
        if self.baseline > 0.0 {
            return alloc::vec![(f64::NEG_INFINITY, f64::INFINITY)];
        }
        quad::merge(
            self.passbands
                .iter()
                .filter(|p| p.peak > 0.0)
                .map(Passband::support)
                .collect(),
        )
    }

    pub fn breakpoints(&self) -> Vec<f64> {
        let mut points = Vec::with_capacity(2 * self.passbands.len());
        for &(lo, hi) in &self.bounds {
            points.extend([lo, hi]);
        }
        points
    }
}

/// Measured insertion losses per `(band, channel)`, dB.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LossProfile(BTreeMap<(Band, i32), f64>);

impl LossProfile {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, band: Band, channel: i32, loss_db: f64) -> Result<()> {
        if !(loss_db >= 0.0) || !loss_db.is_finite() {
            return Err(Error::Format(alloc::format!(
                "loss for {band}{channel} must be a finite value >= 0 dB, got {loss_db}"
            )));
        }
        self.0.insert((band, channel), loss_db);
        Ok(())
    }

    pub fn get(&self, band: Band, channel: i32) -> Option<f64> {
        self.0.get(&(band, channel)).copied()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Converts an insertion loss in dB to a power transmittance.
pub fn db_to_transmittance(loss_db: f64) -> f64 {
    libm::pow(10.0, -loss_db / 10.0)
}

/// One problem found by [`SwitchPlan::validate`].
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    /// The same channel is sent to two ports.
    DuplicateAssignment { channel: i32, ports: (PortId, PortId) },
    /// Two ports transmit the same frequency.
    Overlap {
        ports: (PortId, PortId),
        detuning_thz: f64,
        product: f64,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::DuplicateAssignment { channel, ports } => write!(
                f,
                "channel {channel} assigned to both port {} and port {}",
                ports.0, ports.1
            ),
            Violation::Overlap {
                ports,
                detuning_thz,
                product,
            } => write!(
                f,
                "ports {} and {} overlap at detuning {detuning_thz:.6} THz (|H|^2 product {product:.3e})",
                ports.0, ports.1
            ),
        }
    }
}

/// Outcome of plan validation; empty means the plan is single-cast.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PlanReport {
    pub violations: Vec<Violation>,
}

impl PlanReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                s.push_str("; ");
            }
            s.push_str(&alloc::format!("{v}"));
        }
        s
    }
}

/// A switch configuration: grids, channel shape, losses and channel-to-port
/// assignments.
#[derive(Debug, Clone, PartialEq)]
pub struct SwitchPlan {
    grids: Vec<BandGrid>,
    shape: ChannelShape,
    default_loss_db: f64,
    losses: LossProfile,
    ports: Vec<PortId>,
    assignments: Vec<(i32, PortId)>,
}

impl SwitchPlan {
    /// A plan over `grids` (which must include the C band, each band at most
    /// once) with ports `A` through `H` and the default insertion loss.
    pub fn new(grids: Vec<BandGrid>, shape: ChannelShape) -> Result<Self> {
        shape.validate()?;
        if !grids.iter().any(|g| g.band == Band::C) {
            return Err(invalid("grids", "the C band grid is mandatory"));
        }
        for (i, g) in grids.iter().enumerate() {
            if grids[..i].iter().any(|h| h.band == g.band) {
                return Err(invalid("grids", alloc::format!("band {} listed twice", g.band)));
            }
        }
        Ok(SwitchPlan {
            grids,
            shape,
            default_loss_db: DEFAULT_LOSS_DB,
            losses: LossProfile::new(),
            ports: "ABCDEFGH".chars().map(PortId).collect(),
            assignments: Vec::new(),
        })
    }

    /// Default grids for the listed bands (C is added if missing).
    pub fn for_bands(bands: &[Band], shape: ChannelShape) -> Result<Self> {
        let mut grids: Vec<BandGrid> = Vec::new();
        for b in Band::ALL {
            if b == Band::C || bands.contains(&b) {
                grids.push(BandGrid::default_for(b));
            }
        }
        Self::new(grids, shape)
    }

    pub fn with_default_loss(mut self, loss_db: f64) -> Result<Self> {
        if !(loss_db >= 0.0) || !loss_db.is_finite() {
            return Err(invalid("default_loss_db", alloc::format!("{loss_db} must be >= 0")));
        }
        self.default_loss_db = loss_db;
        Ok(self)
    }

    pub fn with_losses(mut self, losses: LossProfile) -> Self {
        self.losses = losses;
        self
    }

    pub fn with_ports(mut self, ports: &[PortId]) -> Self {
        self.ports = ports.to_vec();
        self
    }

    /// Sends `channel` (on every band) to `port`. Conflicting assignments are
    /// accepted here and reported by [`SwitchPlan::validate`].
    pub fn assign(&mut self, channel: i32, port: PortId) -> Result<&mut Self> {
        if !self.ports.contains(&port) {
            return Err(Error::UnknownPort(port));
        }
        let c = self.grid(Band::C)?;
        if !c.contains(channel) {
            return Err(Error::ChannelOutOfRange {
                channel,
                min: c.min_channel,
                max: c.max_channel,
            });
        }
        if !self.assignments.contains(&(channel, port)) {
            self.assignments.push((channel, port));
        }
        Ok(self)
    }

    pub fn grid(&self, band: Band) -> Result<&BandGrid> {
        self.grids
            .iter()
            .find(|g| g.band == band)
            .ok_or(Error::UnknownBand(band))
    }

    pub fn grids(&self) -> &[BandGrid] {
        &self.grids
    }

    pub fn shape(&self) -> ChannelShape {
        self.shape
    }

    pub fn ports(&self) -> &[PortId] {
        &self.ports
    }

    pub fn assignments(&self) -> &[(i32, PortId)] {
        &self.assignments
    }

    pub fn default_loss_db(&self) -> f64 {
        self.default_loss_db
    }

    pub fn loss_db(&self, band: Band, channel: i32) -> f64 {
        self.losses.get(band, channel).unwrap_or(self.default_loss_db)
    }

    /// Channels routed to `port`, sorted.
    pub fn channels_for(&self, port: PortId) -> Vec<i32> {
        let mut v: Vec<i32> = self
            .assignments
            .iter()
            .filter(|(_, p)| *p == port)
            .map(|(c, _)| *c)
            .collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    /// Sum of the port's passbands over every band of the plan.
    pub fn compile_port_transfer(&self, port: PortId) -> Result<TransferFunction> {
        if !self.ports.contains(&port) {
            return Err(Error::UnknownPort(port));
        }
        let mut passbands = Vec::new();
        for grid in &self.grids {
            for channel in self.channels_for(port) {
                if !grid.contains(channel) {
                    continue;
                }
                passbands.push(Passband {
                    center_thz: grid.channel_center(channel) - DEGENERACY_THZ,
                    peak: db_to_transmittance(self.loss_db(grid.band, channel)),
                    shape: self.shape,
                });
            }
        }
        TransferFunction::from_passbands(passbands)
    }

    /// Reports channels sent to more than one port and any frequency where
    /// two ports both transmit more than [`OVERLAP_THRESHOLD`].
    pub fn validate(&self) -> PlanReport {
        let mut violations = Vec::new();
        for (i, &(ch, p)) in self.assignments.iter().enumerate() {
            for &(ch2, q) in &self.assignments[..i] {
                if ch == ch2 && p != q {
                    violations.push(Violation::DuplicateAssignment {
                        channel: ch,
                        ports: (q, p),
                    });
                }
            }
        }
        let used: Vec<PortId> = self
            .ports
            .iter()
            .copied()
            .filter(|p| self.assignments.iter().any(|(_, q)| q == p))
            .collect();
        let compiled: Vec<(PortId, TransferFunction)> = used
            .iter()
            .filter_map(|&p| self.compile_port_transfer(p).ok().map(|tf| (p, tf)))
            .collect();
        for (i, (pa, ta)) in compiled.iter().enumerate() {
            for (pb, tb) in &compiled[i + 1..] {
                if let Some((nu, product)) = worst_overlap(ta, tb) {
                    if product > OVERLAP_THRESHOLD {
                        violations.push(Violation::Overlap {
                            ports: (*pa, *pb),
                            detuning_thz: nu,
                            product,
                        });
                    }
                }
            }
        }
        PlanReport { violations }
    }
}

const OVERLAP_SCAN_POINTS: usize = 512;

/// Largest `|Ha|^2 |Hb|^2` over the regions where both are non-zero.
fn worst_overlap(a: &TransferFunction, b: &TransferFunction) -> Option<(f64, f64)> {
    let mut worst: Option<(f64, f64)> = None;
    for pa in a.passbands() {
        for pb in b.passbands() {
            let (alo, ahi) = pa.support();
            let (blo, bhi) = pb.support();
            let lo = alo.max(blo);
            let hi = ahi.min(bhi);
            if !(hi > lo) {
                continue;
            }
            for k in 0..=OVERLAP_SCAN_POINTS {
                let nu = lo + (hi - lo) * (k as f64 / OVERLAP_SCAN_POINTS as f64);
                let product = a.power(nu) * b.power(nu);
                if worst.is_none_or(|(_, w)| product > w) {
                    worst = Some((nu, product));
                }
            }
        }
    }
    worst
}

/// Plan sending channel `+n` to `port_a` and `-n` to `port_b` on `grids`.
pub fn symmetric_pair_plan(
    n: i32,
    port_a: PortId,
    port_b: PortId,
    grids: Vec<BandGrid>,
    shape: ChannelShape,
) -> Result<SwitchPlan> {
    if !(1..=MAX_PAIR_CHANNEL).contains(&n) {
        return Err(Error::ChannelOutOfRange {
            channel: n,
            min: 1,
            max: MAX_PAIR_CHANNEL,
        });
    }
    let mut plan = SwitchPlan::new(grids, shape)?;
    if !plan.ports.contains(&port_a) {
        plan.ports.push(port_a);
    }
    if !plan.ports.contains(&port_b) {
        plan.ports.push(port_b);
    }
    plan.assign(n, port_a)?;
    plan.assign(-n, port_b)?;
    Ok(plan)
}
