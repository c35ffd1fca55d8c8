//! Down-converted pair spectra and the normalized pair density.
//!
//! Everything is expressed as ordinary-frequency detuning in THz from the
//! degeneracy frequency (half the pump frequency, 193.5 THz). A pair is
//! created at `(+nu, -nu)`, so every spectrum here is even in `nu`.

use alloc::vec::Vec;

use crate::error::{invalid, Error, Result};
use crate::quad::{self, Pieces};

/// Gaussian lobes are truncated at this many standard deviations.
pub const GAUSSIAN_CUTOFF_SIGMAS: f64 = 8.0;
/// Sinc-squared lobes are truncated at this zero of the sinc, which keeps
/// the truncated spectrum continuous.
pub const SINC_CUTOFF_ZEROS: f64 = 16.0;

/// Degeneracy frequency in THz (channel 0 of the ITU grid).
pub const DEGENERACY_THZ: f64 = 193.5;

/// Functional form of one phase-matching lobe.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LobeModel {
    /// `exp(-x^2 / (2 scale^2))`; `scale` is the standard deviation.
    Gaussian,
    /// `sinc^2(x / scale)` with `sinc(u) = sin(pi u) / (pi u)`; `scale` is the
    /// distance to the first zero.
    SincSquared,
}

impl LobeModel {
    fn eval(self, x: f64, scale: f64) -> f64 {
        let u = x / scale;
        match self {
            LobeModel::Gaussian => {
                if u.abs() > GAUSSIAN_CUTOFF_SIGMAS {
                    0.0
                } else {
                    libm::exp(-0.5 * u * u)
                }
            }
            LobeModel::SincSquared => {
                if u.abs() > SINC_CUTOFF_ZEROS {
                    0.0
                } else if u == 0.0 {
                    1.0
                } else {
                    let s = libm::sin(core::f64::consts::PI * u) / (core::f64::consts::PI * u);
                    s * s
                }
            }
        }
    }

    fn half_support(self, scale: f64) -> f64 {
        match self {
            LobeModel::Gaussian => GAUSSIAN_CUTOFF_SIGMAS * scale,
            LobeModel::SincSquared => SINC_CUTOFF_ZEROS * scale,
        }
    }
}

/// Gaussian standard deviation giving the requested full width at half
/// maximum.
pub fn gaussian_scale_for_fwhm(fwhm_thz: f64) -> f64 {
    fwhm_thz / (2.0 * libm::sqrt(2.0 * core::f64::consts::LN_2))
}

/// A symmetric bandpass window, `[center - width/2, center + width/2]` and
/// its mirror image.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterWindow {
    pub center_thz: f64,
    pub full_width_thz: f64,
}

impl FilterWindow {
    fn intervals(&self) -> [(f64, f64); 2] {
        let half = 0.5 * self.full_width_thz;
        [
            (self.center_thz - half, self.center_thz + half),
            (-self.center_thz - half, -self.center_thz + half),
        ]
    }

    fn passes(&self, nu: f64) -> bool {
        let half = 0.5 * self.full_width_thz;
        (nu - self.center_thz).abs() <= half || (nu + self.center_thz).abs() <= half
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Shape {
    Parametric {
        model: LobeModel,
        lobe_detuning: f64,
        scale: f64,
    },
    /// Strictly increasing detunings with their powers.
    Tabulated { nodes: Vec<(f64, f64)> },
}

/// Down-converted power spectrum `S(nu)`, even in `nu`.
#[derive(Debug, Clone, PartialEq)]
pub struct PairSpectrum {
    shape: Shape,
    filters: Vec<FilterWindow>,
}

impl PairSpectrum {
    /// One lobe at zero detuning when `lobe_detuning == 0`, otherwise a lobe
    /// at each of `+lobe_detuning` and `-lobe_detuning`.
    pub fn parametric(model: LobeModel, lobe_detuning: f64, scale: f64) -> Result<Self> {
        if !(scale > 0.0) || !scale.is_finite() {
            return Err(invalid("scale", alloc::format!("{scale} must be positive")));
        }
        if !(lobe_detuning >= 0.0) || !lobe_detuning.is_finite() {
            return Err(invalid(
                "lobe_detuning",
                alloc::format!("{lobe_detuning} must be non-negative"),
            ));
        }
        Ok(PairSpectrum {
            shape: Shape::Parametric {
                model,
                lobe_detuning,
                scale,
            },
            filters: Vec::new(),
        })
    }

    /// Piecewise-linear spectrum through `(detuning_thz, power)` samples,
    /// zero outside the sampled range.
    ///
    /// Symmetrization: where both `nu` and `-nu` lie inside the sampled range
    /// the two interpolated values are averaged; where only one does, that
    /// value is mirrored. One-sided tables are therefore completed by
    /// reflection.
    pub fn tabulated(samples: &[(f64, f64)]) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::Format(alloc::format!(
                "need at least 2 spectrum samples, got {}",
                samples.len()
            )));
        }
        for (i, &(x, p)) in samples.iter().enumerate() {
            if !x.is_finite() || !p.is_finite() {
                return Err(Error::Format(alloc::format!("non-finite sample at row {i}")));
            }
            if p < 0.0 {
                return Err(Error::Format(alloc::format!(
                    "negative power {p} at row {i}"
                )));
            }
            if i > 0 && x <= samples[i - 1].0 {
                return Err(Error::Format(alloc::format!(
                    "detunings must be strictly increasing (row {i}: {x} after {})",
                    samples[i - 1].0
                )));
            }
        }
        Ok(PairSpectrum {
            shape: Shape::Tabulated {
                nodes: samples.to_vec(),
            },
            filters: Vec::new(),
        })
    }

    /// Zeroes the spectrum outside `[center - width/2, center + width/2]` and
    /// its mirror window. Filters accumulate (their pass regions intersect).
    pub fn apply_bandpass(&self, center_thz: f64, full_width_thz: f64) -> Result<Self> {
        if !(full_width_thz > 0.0) {
            return Err(invalid(
                "full_width",
                alloc::format!("{full_width_thz} must be positive"),
            ));
        }
        if !center_thz.is_finite() {
            return Err(invalid("center_detuning", "must be finite"));
        }
        let mut out = self.clone();
        out.filters.push(FilterWindow {
            center_thz,
            full_width_thz,
        });
        if out.support().is_empty() || out.integral()? <= 0.0 {
            return Err(Error::EmptySpectrum);
        }
        Ok(out)
    }

    pub fn filters(&self) -> &[FilterWindow] {
        &self.filters
    }

    pub fn is_parametric(&self) -> bool {
        matches!(self.shape, Shape::Parametric { .. })
    }

    fn unfiltered(&self, nu: f64) -> f64 {
        match &self.shape {
            Shape::Parametric {
                model,
                lobe_detuning,
                scale,
            } => {
                if *lobe_detuning == 0.0 {
                    model.eval(nu, *scale)
                } else {
                    model.eval(nu - lobe_detuning, *scale) + model.eval(nu + lobe_detuning, *scale)
                }
            }
            Shape::Tabulated { nodes } => {
                let fwd = interpolate(nodes, nu);
                let rev = interpolate(nodes, -nu);
                match (fwd, rev) {
                    (Some(a), Some(b)) => 0.5 * (a + b),
                    (Some(a), None) => a,
                    (None, Some(b)) => b,
                    (None, None) => 0.0,
                }
            }
        }
    }

    /// `S(nu)`.
    pub fn value(&self, nu: f64) -> f64 {
        if self.filters.iter().all(|w| w.passes(nu)) {
            self.unfiltered(nu)
        } else {
            0.0
        }
    }

    fn half_extent(&self) -> f64 {
        match &self.shape {
            Shape::Parametric {
                model,
                lobe_detuning,
                scale,
            } => lobe_detuning + model.half_support(*scale),
            Shape::Tabulated { nodes } => {
                let first = nodes[0].0.abs();
                let last = nodes[nodes.len() - 1].0.abs();
                first.max(last)
            }
        }
    }

    /// Intervals outside of which `S` is identically zero.
    pub fn support(&self) -> Vec<(f64, f64)> {
        let r = self.half_extent();
        let mut support = match &self.shape {
            Shape::Parametric {
                model,
                lobe_detuning,
                scale,
            } if *lobe_detuning > 0.0 => {
                let h = model.half_support(*scale);
                quad::merge(alloc::vec![
                    (-lobe_detuning - h, -lobe_detuning + h),
                    (lobe_detuning - h, lobe_detuning + h),
                ])
            }
            _ => alloc::vec![(-r, r)],
        };
        for w in &self.filters {
            support = quad::intersect(&support, &w.intervals());
        }
        support
    }

    /// Points where `S` may be discontinuous or have a kink.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut points = Vec::new();
        if let Shape::Tabulated { nodes } = &self.shape {
            for &(x, _) in nodes {
                points.push(x);
                points.push(-x);
            }
        }
        for w in &self.filters {
            for (a, b) in w.intervals() {
                points.extend([a, b]);
            }
        }
        points
    }

    pub fn pieces(&self) -> Pieces {
        Pieces::new(&self.support(), &self.breakpoints())
    }

    /// `integral S(nu) d nu` over the full support.
    pub fn integral(&self) -> Result<f64> {
        Ok(quad::integrate(|nu| self.value(nu), &self.pieces())?.value)
    }

    /// Pair density `2 S(nu) / integral S`; it integrates to 2 because every
    /// pair contributes two photons.
    pub fn normalize(&self) -> Result<PairPdf> {
        let total = self.integral()?;
        if !(total > 0.0) {
            return Err(Error::EmptySpectrum);
        }
        Ok(PairPdf {
            spectrum: self.clone(),
            scale: 2.0 / total,
        })
    }
}

fn interpolate(nodes: &[(f64, f64)], x: f64) -> Option<f64> {
    let (x0, _) = nodes[0];
    let (xn, pn) = nodes[nodes.len() - 1];
    if !(x >= x0 && x <= xn) {
        return None;
    }
    if x == xn {
        return Some(pn);
    }
    let i = nodes.partition_point(|&(xi, _)| xi <= x);
    let (xa, pa) = nodes[i - 1];
    let (xb, pb) = nodes[i];
    let t = (x - xa) / (xb - xa);
    Some(pa + t * (pb - pa))
}

/// Normalized pair density `p(nu)` over detuning (1/THz).
#[derive(Debug, Clone, PartialEq)]
pub struct PairPdf {
    spectrum: PairSpectrum,
    scale: f64,
}

impl PairPdf {
    pub fn density(&self, nu: f64) -> f64 {
        self.scale * self.spectrum.value(nu)
    }

    pub fn spectrum(&self) -> &PairSpectrum {
        &self.spectrum
    }

    pub fn support(&self) -> Vec<(f64, f64)> {
        self.spectrum.support()
    }

    /// Largest `|nu|` with non-zero density.
    pub fn support_radius(&self) -> f64 {
        self.support()
            .iter()
            .map(|(a, b)| a.abs().max(b.abs()))
            .fold(0.0, f64::max)
    }

    pub fn breakpoints(&self) -> Vec<f64> {
        self.spectrum.breakpoints()
    }

    /// `integral p` over the whole line, recomputed by quadrature.
    pub fn total(&self) -> Result<f64> {
        Ok(quad::integrate(|nu| self.density(nu), &self.spectrum.pieces())?.value)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tabulated_midpoint_interpolation() {
        let s = PairSpectrum::tabulated(&[(-1.0, 1.0), (0.0, 2.0), (1.0, 1.0)]).unwrap();
        assert_eq!(s.value(0.5), 1.5);
        assert_eq!(s.value(-0.5), 1.5);
        assert_eq!(s.value(1.5), 0.0);
    }

    #[test]
    fn one_sided_table_is_completed_by_reflection() {
        let s = PairSpectrum::tabulated(&[(0.0, 1.0), (1.0, 1.0)]).unwrap();
        for nu in [-1.0, -0.7, -0.2, 0.0, 0.3, 0.99, 1.0] {
            assert_eq!(s.value(nu), 1.0, "nu = {nu}");
        }
        assert_eq!(s.value(1.01), 0.0);
        assert_eq!(s.support(), alloc::vec![(-1.0, 1.0)]);
    }

    #[test]
    fn unsorted_or_negative_tables_are_rejected() {
        assert!(matches!(
            PairSpectrum::tabulated(&[(1.0, 1.0), (0.0, 2.0)]),
            Err(Error::Format(_))
        ));
        assert!(matches!(
            PairSpectrum::tabulated(&[(0.0, 1.0), (1.0, -0.1)]),
            Err(Error::Format(_))
        ));
        assert!(matches!(
            PairSpectrum::tabulated(&[(0.0, 1.0)]),
            Err(Error::Format(_))
        ));
    }

    #[test]
    fn parametric_rejects_bad_parameters() {
        assert!(PairSpectrum::parametric(LobeModel::Gaussian, 0.0, 0.0).is_err());
        assert!(PairSpectrum::parametric(LobeModel::Gaussian, 0.0, -1.0).is_err());
        assert!(PairSpectrum::parametric(LobeModel::Gaussian, -0.1, 1.0).is_err());
    }

    #[test]
    fn sinc_is_symmetric() {
        let s = PairSpectrum::parametric(LobeModel::SincSquared, 0.0, 1.0).unwrap();
        for nu in [0.1, 0.5, 1.3, 7.77] {
            assert_eq!(s.value(nu), s.value(-nu));
        }
        assert_eq!(s.value(0.0), 1.0);
        assert!(s.value(1.0) < 1e-30);
    }

    #[test]
    fn degenerate_gaussian_fwhm() {
        let sigma = gaussian_scale_for_fwhm(4.6);
        let s = PairSpectrum::parametric(LobeModel::Gaussian, 0.0, sigma).unwrap();
        assert!((s.value(2.3) - 0.5).abs() < 1e-12);
        assert!((s.value(-2.3) - 0.5).abs() < 1e-12);
        assert_eq!(s.value(0.0), 1.0);
    }

    #[test]
    fn two_lobes_leave_the_center_dark() {
        let s = PairSpectrum::parametric(LobeModel::Gaussian, 6.8, 0.5).unwrap();
        assert_eq!(s.value(0.0), 0.0);
        assert_eq!(s.value(6.8), 1.0);
        assert_eq!(s.value(-6.8), 1.0);
        assert_eq!(s.support().len(), 2);
    }

    #[test]
    fn bandpass_on_flat_spectrum() {
        let s = PairSpectrum::tabulated(&[(-5.0, 1.0), (5.0, 1.0)]).unwrap();
        let f = s.apply_bandpass(0.0, 4.6).unwrap();
        assert_eq!(f.value(2.29), 1.0);
        assert_eq!(f.value(-2.29), 1.0);
        assert_eq!(f.value(2.31), 0.0);
        assert_eq!(f.support(), alloc::vec![(-2.3, 2.3)]);
    }

    #[test]
    fn infinite_bandpass_is_identity() {
        let s = PairSpectrum::parametric(LobeModel::Gaussian, 1.0, 0.7).unwrap();
        let f = s.apply_bandpass(0.0, f64::INFINITY).unwrap();
        for nu in [-3.0, -1.0, 0.0, 0.4, 2.2] {
            assert_eq!(s.value(nu), f.value(nu));
        }
    }

    #[test]
    fn off_center_bandpass_stays_symmetric() {
        let s = PairSpectrum::tabulated(&[(-5.0, 1.0), (0.0, 3.0), (5.0, 1.0)]).unwrap();
        let f = s.apply_bandpass(2.0, 1.0).unwrap();
        assert_eq!(f.value(2.2), f.value(-2.2));
        assert!(f.value(2.2) > 0.0);
        assert_eq!(f.value(0.0), 0.0);
    }

    #[test]
    fn disjoint_bandpass_is_empty() {
        let s = PairSpectrum::parametric(LobeModel::Gaussian, 6.8, 0.5).unwrap();
        assert_eq!(s.apply_bandpass(0.0, 4.6), Err(Error::EmptySpectrum));
    }

    #[test]
    fn flat_spectrum_normalizes_to_half() {
        let s = PairSpectrum::tabulated(&[(-2.0, 7.0), (2.0, 7.0)]).unwrap();
        let pdf = s.normalize().unwrap();
        assert!((pdf.density(0.3) - 0.5).abs() < 1e-15);
        assert!((pdf.total().unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn zero_spectrum_cannot_be_normalized() {
        let s = PairSpectrum::tabulated(&[(-1.0, 0.0), (1.0, 0.0)]).unwrap();
        assert_eq!(s.normalize(), Err(Error::EmptySpectrum));
    }
}
