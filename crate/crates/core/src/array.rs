//! Geometry and steering model of a circular array of outward-pointing
//! first-order directional microphones.

use alloc::format;
use alloc::vec::Vec;
use core::f64::consts::PI;

use num_traits::Float;

use crate::{Complex, Error, Result};

/// Circular array of `num_mics` directional elements.
///
/// Element `m` sits at azimuth `2πm/M` on a circle of `radius` meters and
/// points outward with the pattern `α + (1 − α)·cos(θ − ψ_m)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ArrayGeometry {
    num_mics: usize,
    radius: f64,
    element_alpha: f64,
    speed_of_sound: f64,
    mic_azimuths: Vec<f64>,
}

impl Default for ArrayGeometry {
    fn default() -> Self {
        Self::new(8, 0.04, 0.5, 343.0).expect("default geometry is valid")
    }
}

impl ArrayGeometry {
    pub fn new(num_mics: usize, radius: f64, element_alpha: f64, speed_of_sound: f64) -> Result<Self> {
        if num_mics < 2 {
            return Err(Error::arg(format!("array needs at least 2 mics, got {num_mics}")));
        }
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(Error::arg(format!("radius must be positive, got {radius}")));
        }
        if !(0.0..=1.0).contains(&element_alpha) {
            return Err(Error::arg(format!("element alpha must lie in [0, 1], got {element_alpha}")));
        }
        if !(speed_of_sound > 0.0) {
            return Err(Error::arg(format!("speed of sound must be positive, got {speed_of_sound}")));
        }
        let mic_azimuths = (0..num_mics)
            .map(|m| 2.0 * PI * m as f64 / num_mics as f64)
            .collect();
        Ok(Self {
            num_mics,
            radius,
            element_alpha,
            speed_of_sound,
            mic_azimuths,
        })
    }

    pub fn num_mics(&self) -> usize {
        self.num_mics
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn element_alpha(&self) -> f64 {
        self.element_alpha
    }

    pub fn speed_of_sound(&self) -> f64 {
        self.speed_of_sound
    }

    pub fn mic_azimuths(&self) -> &[f64] {
        &self.mic_azimuths
    }

    /// Directional gain of element `mic_index` towards azimuth `theta`.
    pub fn element_gain(&self, mic_index: usize, theta: f64) -> Result<f64> {
        let psi = self
            .mic_azimuths
            .get(mic_index)
            .ok_or_else(|| Error::arg(format!("mic index {mic_index} out of range for {} mics", self.num_mics)))?;
        Ok(self.gain_unchecked(*psi, theta))
    }

    #[inline]
    fn gain_unchecked(&self, psi: f64, theta: f64) -> f64 {
        self.element_alpha + (1.0 - self.element_alpha) * Float::cos(theta - psi)
    }

    /// Far-field steering vector, phase referenced to the array center.
    ///
    /// Component `m` is `a_m(θ)·exp(+iωr·cos(θ − ψ_m)/c)`.
    pub fn steering_vector(&self, freq: f64, theta: f64) -> Vec<Complex> {
        let mut out = Vec::with_capacity(self.num_mics);
        self.steering_into(freq, theta, &mut out);
        out
    }

    pub(crate) fn steering_into(&self, freq: f64, theta: f64, out: &mut Vec<Complex>) {
        out.clear();
        let k = 2.0 * PI * freq * self.radius / self.speed_of_sound;
        for &psi in &self.mic_azimuths {
            let delta = theta - psi;
            let gain = self.gain_unchecked(psi, theta);
            let phase = k * Float::cos(delta);
            out.push(Complex::from_polar(gain, phase));
        }
    }
}

/// One-sided DFT bin frequencies.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrequencyGrid {
    pub sample_rate: f64,
    pub fft_size: usize,
}

impl FrequencyGrid {
    pub fn new(sample_rate: f64, fft_size: usize) -> Result<Self> {
        if !(sample_rate > 0.0) || fft_size < 2 {
            return Err(Error::arg(format!(
                "invalid frequency grid: sample_rate={sample_rate}, fft_size={fft_size}"
            )));
        }
        Ok(Self { sample_rate, fft_size })
    }

    pub fn num_bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    pub fn freq(&self, bin: usize) -> f64 {
        bin as f64 * self.sample_rate / self.fft_size as f64
    }

    pub fn angular(&self, bin: usize) -> f64 {
        2.0 * PI * self.freq(bin)
    }

    pub fn nyquist(&self) -> f64 {
        self.sample_rate / 2.0
    }

    /// Bins whose center frequency lies in `[lo, hi]`.
    pub fn bins_in(&self, lo: f64, hi: f64) -> core::ops::Range<usize> {
        let start = (0..self.num_bins()).find(|&k| self.freq(k) >= lo).unwrap_or(self.num_bins());
        let end = (0..self.num_bins())
            .rev()
            .find(|&k| self.freq(k) <= hi)
            .map(|k| k + 1)
            .unwrap_or(0);
        start..end.max(start)
    }

    pub fn nearest_bin(&self, freq: f64) -> usize {
        let k = Float::round(freq * self.fft_size as f64 / self.sample_rate);
        (k.max(0.0) as usize).min(self.num_bins() - 1)
    }
}

/// Uniform azimuth grid covering the full circle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AngleGrid {
    num_angles: usize,
}

impl Default for AngleGrid {
    fn default() -> Self {
        Self { num_angles: 120 }
    }
}

impl AngleGrid {
    pub fn new(num_angles: usize) -> Result<Self> {
        if num_angles == 0 {
            return Err(Error::arg("angle grid needs at least one angle"));
        }
        Ok(Self { num_angles })
    }

    pub fn len(&self) -> usize {
        self.num_angles
    }

    pub fn is_empty(&self) -> bool {
        self.num_angles == 0
    }

    pub fn step_deg(&self) -> f64 {
        360.0 / self.num_angles as f64
    }

    pub fn angle_deg(&self, j: usize) -> f64 {
        j as f64 * self.step_deg()
    }

    pub fn angle(&self, j: usize) -> f64 {
        self.angle_deg(j).to_radians()
    }

    pub fn angles(&self) -> Vec<f64> {
        (0..self.num_angles).map(|j| self.angle(j)).collect()
    }

    /// Grid index nearest to `theta` (radians), wrapping around the circle.
    pub fn nearest_index(&self, theta: f64) -> usize {
        let deg = wrap_deg(theta.to_degrees());
        (Float::round(deg / self.step_deg()) as usize) % self.num_angles
    }
}

/// Wraps degrees into `[0, 360)`.
pub fn wrap_deg(deg: f64) -> f64 {
    let w = deg % 360.0;
    if w < 0.0 {
        w + 360.0
    } else {
        w
    }
}

/// Smallest absolute angular difference in degrees, in `[0, 180]`.
pub fn angular_distance_deg(a: f64, b: f64) -> f64 {
    let d = wrap_deg(a - b);
    if d > 180.0 {
        360.0 - d
    } else {
        d
    }
}
