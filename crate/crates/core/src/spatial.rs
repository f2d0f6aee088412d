//! SRP-PHAT spatial spectrum, DOA estimation and smoothing, and the
//! 128-dimensional per-frame spatial feature.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use num_traits::Float;

use crate::array::{AngleGrid, ArrayGeometry, FrequencyGrid};
use crate::beamformer::BeamformerBank;
use crate::dsp::FrameStack;
use crate::{Complex, Error, Result};

/// Bins whose magnitude falls below this contribute nothing under PHAT.
pub const PHAT_FLOOR: f64 = 1e-12;
pub const DEFAULT_SMOOTHING: usize = 5;

/// Per-frame steered response power over the angle grid plus DOA tracks.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialSpectrum {
    pub num_angles: usize,
    /// `[frame][angle]`
    pub power: Vec<f64>,
    pub doa_raw: Vec<usize>,
    /// Radians in `[0, 2π)`.
    pub doa_smoothed: Vec<f64>,
}

impl SpatialSpectrum {
    pub fn num_frames(&self) -> usize {
        self.doa_raw.len()
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        &self.power[t * self.num_angles..(t + 1) * self.num_angles]
    }
}

fn check_bank(bank: &BeamformerBank, angles: &AngleGrid) -> Result<()> {
    if bank.num_beams() != angles.len() {
        return Err(Error::arg(format!(
            "localization bank has {} look directions, angle grid has {}",
            bank.num_beams(),
            angles.len()
        )));
    }
    for (j, &look) in bank.look_angles().iter().enumerate() {
        if (look - angles.angle(j)).abs() > 1e-9 {
            return Err(Error::arg(format!("bank look direction {j} does not match the angle grid")));
        }
    }
    Ok(())
}

/// Steered response power of one array snapshot (`[bin][mic]`) for every
/// look direction of `bank`, written to `out`.
///
/// With `phat`, each (bin, channel) is normalized to unit modulus first.
pub fn srp_frame(frame: &[Complex], bank: &BeamformerBank, phat: bool, out: &mut [f64]) -> Result<()> {
    let (nb, m) = (bank.num_bins(), bank.num_mics());
    if frame.len() != nb * m {
        return Err(Error::shape(format!(
            "frame has {} values, bank expects {nb} bins x {m} mics",
            frame.len()
        )));
    }
    if out.len() != bank.num_beams() {
        return Err(Error::shape(format!(
            "output has {} slots for {} look directions",
            out.len(),
            bank.num_beams()
        )));
    }
    let band = bank.band_bins();
    let mut x: Vec<Complex> = frame[band.start * m..band.end * m].iter().map(|z| z.conj()).collect();
    if phat {
        for z in x.iter_mut() {
            let mag = z.norm();
            *z = if mag < PHAT_FLOOR { Complex::new(0.0, 0.0) } else { *z / mag };
        }
    }
    for (j, p) in out.iter_mut().enumerate() {
        let w = &bank.beam_weights(j)[band.start * m..band.end * m];
        let mut acc = 0.0;
        for (xk, hk) in x.chunks_exact(m).zip(w.chunks_exact(m)) {
            let mut re = 0.0;
            let mut im = 0.0;
            for (a, b) in xk.iter().zip(hk) {
                re += a.re * b.re - a.im * b.im;
                im += a.re * b.im + a.im * b.re;
            }
            acc += re * re + im * im;
        }
        *p = acc;
    }
    Ok(())
}

/// Index of the largest value; the lowest index wins ties.
pub fn doa_estimate(power: &[f64]) -> usize {
    let mut best = 0;
    for (j, &p) in power.iter().enumerate() {
        if p > power[best] {
            best = j;
        }
    }
    best
}

/// Circular moving average of angles (radians) over a centered window,
/// truncated at the edges. Output angles lie in `[0, 2π)`.
pub fn smooth_doa(doas: &[f64], window: usize) -> Result<Vec<f64>> {
    if window < 1 {
        return Err(Error::arg("smoothing window must be at least 1"));
    }
    let before = (window - 1) / 2;
    let after = window / 2;
    let n = doas.len();
    Ok((0..n)
        .map(|t| {
            let lo = t.saturating_sub(before);
            let hi = (t + after + 1).min(n);
            let (s, c) = doas[lo..hi]
                .iter()
                .fold((0.0, 0.0), |(s, c), &a| (s + Float::sin(a), c + Float::cos(a)));
            let a = Float::atan2(s, c);
            if a < 0.0 {
                a + 2.0 * PI
            } else {
                a
            }
        })
        .collect())
}

/// Localization front end: one CDDMA beamformer per grid angle.
#[derive(Debug, Clone)]
pub struct SpatialAnalyzer {
    bank: BeamformerBank,
    angles: AngleGrid,
    phat: bool,
    smoothing: usize,
}

impl SpatialAnalyzer {
    pub fn new(
        geom: &ArrayGeometry,
        grid: FrequencyGrid,
        band: (f64, f64),
        loading: f64,
        angles: AngleGrid,
        phat: bool,
        smoothing: usize,
    ) -> Result<Self> {
        let bank = BeamformerBank::design(geom, &angles.angles(), grid, band, loading)?;
        Self::with_bank(bank, angles, phat, smoothing)
    }

    pub fn with_bank(bank: BeamformerBank, angles: AngleGrid, phat: bool, smoothing: usize) -> Result<Self> {
        check_bank(&bank, &angles)?;
        if smoothing < 1 {
            return Err(Error::arg("smoothing window must be at least 1"));
        }
        Ok(Self {
            bank,
            angles,
            phat,
            smoothing,
        })
    }

    pub fn bank(&self) -> &BeamformerBank {
        &self.bank
    }

    pub fn angles(&self) -> &AngleGrid {
        &self.angles
    }

    pub fn phat(&self) -> bool {
        self.phat
    }

    pub fn srp(&self, frame: &[Complex]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.angles.len()];
        srp_frame(frame, &self.bank, self.phat, &mut out)?;
        Ok(out)
    }

    /// Spatial spectrum and DOA tracks of a whole frame stack.
    pub fn spectrum(&self, frames: &FrameStack) -> Result<SpatialSpectrum> {
        let a = self.angles.len();
        let mut power = vec![0.0; frames.num_frames * a];
        let mut doa_raw = Vec::with_capacity(frames.num_frames);
        for t in 0..frames.num_frames {
            let row = &mut power[t * a..(t + 1) * a];
            srp_frame(frames.frame(t), &self.bank, self.phat, row)?;
            doa_raw.push(doa_estimate(row));
        }
        let raw_angles: Vec<f64> = doa_raw.iter().map(|&j| self.angles.angle(j)).collect();
        let doa_smoothed = smooth_doa(&raw_angles, self.smoothing)?;
        Ok(SpatialSpectrum {
            num_angles: a,
            power,
            doa_raw,
            doa_smoothed,
        })
    }
}

/// Per-frame `[SRP over the grid ‖ per-mic log energy]`, laid out
/// `[frame][feature]`. With 120 angles and 8 mics each row is 128 long.
pub fn spatial_feature(spectrum: &SpatialSpectrum, energies: &[f64], num_mics: usize) -> Result<Vec<f64>> {
    let frames = spectrum.num_frames();
    if energies.len() != frames * num_mics {
        return Err(Error::shape(format!(
            "energies hold {} values, expected {frames} frames x {num_mics} mics",
            energies.len()
        )));
    }
    let dim = spectrum.num_angles + num_mics;
    let mut out = Vec::with_capacity(frames * dim);
    for t in 0..frames {
        out.extend_from_slice(spectrum.frame(t));
        out.extend_from_slice(&energies[t * num_mics..(t + 1) * num_mics]);
    }
    Ok(out)
}
