//! Constraint-based CDDMA beamformer design and evaluation.
//!
//! For each frequency the weights are the minimum-norm solution of the
//! linear constraint system `R(ω)·h = c`, where row `n` of `R` is the
//! conjugated steering vector towards constraint angle `n`:
//!
//! `h = Rᴴ (R Rᴴ + εI)⁻¹ c`
//!
//! The default constraint set puts unit gain on the look direction and a
//! hard null on the opposite direction.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;
use core::ops::Range;

use num_traits::Float;

use crate::array::{AngleGrid, ArrayGeometry, FrequencyGrid};
use crate::{linalg, Complex, Error, Result};

pub const DEFAULT_LOADING: f64 = 1e-9;
pub const DEFAULT_BAND: (f64, f64) = (300.0, 5000.0);
pub const DEFAULT_NUM_BEAMS: usize = 8;

/// Target response `c_θ` at a list of constraint angles.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintSet {
    angles: Vec<f64>,
    gains: Vec<Complex>,
}

impl ConstraintSet {
    pub fn new(angles: Vec<f64>, gains: Vec<Complex>) -> Result<Self> {
        if angles.is_empty() || angles.len() != gains.len() {
            return Err(Error::arg(format!(
                "constraint set needs matching non-empty angle and gain lists ({} vs {})",
                angles.len(),
                gains.len()
            )));
        }
        for i in 0..angles.len() {
            for j in i + 1..angles.len() {
                let mut d = (angles[i] - angles[j]) % (2.0 * PI);
                if d < 0.0 {
                    d += 2.0 * PI;
                }
                if d < 1e-12 || 2.0 * PI - d < 1e-12 {
                    return Err(Error::arg(format!("constraint angles {i} and {j} coincide")));
                }
            }
        }
        Ok(Self { angles, gains })
    }

    /// Unit gain towards `look`, null towards `look + π`.
    pub fn front_back(look: f64) -> Self {
        Self {
            angles: vec![look, look + PI],
            gains: vec![Complex::new(1.0, 0.0), Complex::new(0.0, 0.0)],
        }
    }

    pub fn len(&self) -> usize {
        self.angles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.angles.is_empty()
    }

    pub fn angles(&self) -> &[f64] {
        &self.angles
    }

    pub fn gains(&self) -> &[Complex] {
        &self.gains
    }

    /// `‖R h − c‖∞` for weights `h` at `freq`.
    pub fn residual(&self, geom: &ArrayGeometry, freq: f64, h: &[Complex]) -> f64 {
        self.angles
            .iter()
            .zip(&self.gains)
            .map(|(&theta, &target)| {
                let d = geom.steering_vector(freq, theta);
                (conj_dot(&d, h) - target).norm()
            })
            .fold(0.0, f64::max)
    }
}

/// `aᴴ b`.
#[inline]
pub(crate) fn conj_dot(a: &[Complex], b: &[Complex]) -> Complex {
    a.iter().zip(b).fold(Complex::new(0.0, 0.0), |acc, (x, y)| acc + x.conj() * y)
}

/// Minimum-norm weights satisfying `constraints` at `freq`, with diagonal
/// loading `loading` added to `R Rᴴ`.
pub fn design_cddma(
    geom: &ArrayGeometry,
    constraints: &ConstraintSet,
    freq: f64,
    loading: f64,
) -> Result<Vec<Complex>> {
    let n = constraints.len();
    let m = geom.num_mics();
    if n > m {
        return Err(Error::arg(format!("{n} constraints exceed {m} microphones")));
    }
    if !(loading >= 0.0) {
        return Err(Error::arg(format!("diagonal loading must be >= 0, got {loading}")));
    }
    if !(freq >= 0.0) {
        return Err(Error::arg(format!("frequency must be >= 0, got {freq}")));
    }
    // Steering vectors d_n; row n of R is d_nᴴ.
    let steer: Vec<Vec<Complex>> = constraints
        .angles
        .iter()
        .map(|&theta| geom.steering_vector(freq, theta))
        .collect();
    let mut gram = vec![Complex::new(0.0, 0.0); n * n];
    for i in 0..n {
        for j in 0..n {
            gram[i * n + j] = conj_dot(&steer[i], &steer[j]);
        }
        gram[i * n + i] += loading;
    }
    let y = linalg::solve(&gram, &constraints.gains, n).ok_or_else(|| Error::IllConditioned {
        freq_hz: freq,
        context: String::new(),
    })?;
    let mut h = vec![Complex::new(0.0, 0.0); m];
    for (d, yn) in steer.iter().zip(&y) {
        for (hm, dm) in h.iter_mut().zip(d) {
            *hm += dm * yn;
        }
    }
    Ok(h)
}

/// Fixed beamformers for a set of look directions over one FFT grid.
///
/// Weights are stored `[beam][bin][mic]`; bins outside the design band hold
/// zeros.
#[derive(Debug, Clone)]
pub struct BeamformerBank {
    geometry: ArrayGeometry,
    grid: FrequencyGrid,
    look_angles: Vec<f64>,
    band: (f64, f64),
    band_bins: Range<usize>,
    loading: f64,
    weights: Vec<Complex>,
}

/// `num_beams` look directions spaced uniformly from 0.
pub fn uniform_looks(num_beams: usize) -> Vec<f64> {
    (0..num_beams).map(|b| 2.0 * PI * b as f64 / num_beams as f64).collect()
}

impl BeamformerBank {
    /// Designs one front/back beamformer per look angle for every bin in
    /// `band`.
    pub fn design(
        geom: &ArrayGeometry,
        look_angles: &[f64],
        grid: FrequencyGrid,
        band: (f64, f64),
        loading: f64,
    ) -> Result<Self> {
        Self::design_with(geom, look_angles, grid, band, loading, ConstraintSet::front_back)
    }

    /// Like [`design`](Self::design) but with caller-supplied constraints
    /// per look angle.
    pub fn design_with(
        geom: &ArrayGeometry,
        look_angles: &[f64],
        grid: FrequencyGrid,
        band: (f64, f64),
        loading: f64,
        constraints_for: impl Fn(f64) -> ConstraintSet,
    ) -> Result<Self> {
        let (lo, hi) = band;
        if !(0.0 <= lo && lo <= hi && hi <= grid.nyquist()) {
            return Err(Error::arg(format!(
                "design band [{lo}, {hi}] Hz must lie within [0, {}] Hz",
                grid.nyquist()
            )));
        }
        let m = geom.num_mics();
        let nb = grid.num_bins();
        let band_bins = grid.bins_in(lo, hi);
        let mut weights = vec![Complex::new(0.0, 0.0); look_angles.len() * nb * m];
        for (beam, &look) in look_angles.iter().enumerate() {
            let constraints = constraints_for(look);
            for bin in band_bins.clone() {
                let freq = grid.freq(bin);
                let h = design_cddma(geom, &constraints, freq, loading).map_err(|e| match e {
                    Error::IllConditioned { freq_hz, .. } => Error::IllConditioned {
                        freq_hz,
                        context: format!(" (beam {beam}, bin {bin})"),
                    },
                    other => other,
                })?;
                let off = (beam * nb + bin) * m;
                weights[off..off + m].copy_from_slice(&h);
            }
        }
        Ok(Self {
            geometry: geom.clone(),
            grid,
            look_angles: look_angles.to_vec(),
            band,
            band_bins,
            loading,
            weights,
        })
    }

    /// Bank with explicit weights, laid out `[beam][bin][mic]` over the full
    /// one-sided grid.
    pub fn from_weights(
        geom: &ArrayGeometry,
        look_angles: &[f64],
        grid: FrequencyGrid,
        band: (f64, f64),
        weights: Vec<Complex>,
    ) -> Result<Self> {
        let want = look_angles.len() * grid.num_bins() * geom.num_mics();
        if weights.len() != want {
            return Err(Error::shape(format!("expected {want} weights, got {}", weights.len())));
        }
        Ok(Self {
            geometry: geom.clone(),
            grid,
            look_angles: look_angles.to_vec(),
            band,
            band_bins: grid.bins_in(band.0, band.1),
            loading: 0.0,
            weights,
        })
    }

    pub fn geometry(&self) -> &ArrayGeometry {
        &self.geometry
    }

    pub fn grid(&self) -> FrequencyGrid {
        self.grid
    }

    pub fn num_beams(&self) -> usize {
        self.look_angles.len()
    }

    pub fn num_bins(&self) -> usize {
        self.grid.num_bins()
    }

    pub fn num_mics(&self) -> usize {
        self.geometry.num_mics()
    }

    pub fn look_angles(&self) -> &[f64] {
        &self.look_angles
    }

    pub fn band(&self) -> (f64, f64) {
        self.band
    }

    pub fn band_bins(&self) -> Range<usize> {
        self.band_bins.clone()
    }

    pub fn loading(&self) -> f64 {
        self.loading
    }

    pub fn weights(&self, beam: usize, bin: usize) -> &[Complex] {
        let m = self.num_mics();
        let off = (beam * self.num_bins() + bin) * m;
        &self.weights[off..off + m]
    }

    /// All bins of one beam, `[bin][mic]`.
    pub(crate) fn beam_weights(&self, beam: usize) -> &[Complex] {
        let stride = self.num_bins() * self.num_mics();
        &self.weights[beam * stride..(beam + 1) * stride]
    }

    fn check_beam(&self, beam: usize) -> Result<()> {
        if beam >= self.num_beams() {
            return Err(Error::arg(format!("beam {beam} out of range for {} beams", self.num_beams())));
        }
        Ok(())
    }

    fn band_bin(&self, freq: f64) -> Result<usize> {
        let (lo, hi) = self.band;
        let bin = self.grid.nearest_bin(freq);
        if !(freq >= lo && freq <= hi) || !self.band_bins.contains(&bin) {
            return Err(Error::arg(format!("frequency {freq} Hz outside design band [{lo}, {hi}] Hz")));
        }
        Ok(bin)
    }

    /// Beam output `x_kᴴ h_k` for every bin of one multichannel frame laid
    /// out `[bin][mic]`.
    pub fn apply(&self, spectra: &[Complex], beam: usize) -> Result<Vec<Complex>> {
        self.check_beam(beam)?;
        let (nb, m) = (self.num_bins(), self.num_mics());
        if spectra.len() != nb * m {
            return Err(Error::shape(format!(
                "frame has {} values, bank expects {nb} bins x {m} mics",
                spectra.len()
            )));
        }
        let w = self.beam_weights(beam);
        Ok(spectra
            .chunks_exact(m)
            .zip(w.chunks_exact(m))
            .map(|(x, h)| conj_dot(x, h))
            .collect())
    }

    /// Evaluated response `d(θ)ᴴ h` of `beam` at the in-band bin nearest
    /// `freq`.
    pub fn beampattern(&self, beam: usize, freq: f64, theta: f64) -> Result<Complex> {
        self.check_beam(beam)?;
        let bin = self.band_bin(freq)?;
        Ok(self.pattern_at_bin(beam, bin, theta))
    }

    pub(crate) fn pattern_at_bin(&self, beam: usize, bin: usize, theta: f64) -> Complex {
        let d = self.geometry.steering_vector(self.grid.freq(bin), theta);
        conj_dot(&d, self.weights(beam, bin))
    }

    /// White noise gain in dB: `|hᴴ d(θ_look)|² / (hᴴ h)`.
    pub fn white_noise_gain(&self, beam: usize, freq: f64) -> Result<f64> {
        self.check_beam(beam)?;
        let bin = self.band_bin(freq)?;
        let h = self.weights(beam, bin);
        let energy: f64 = h.iter().map(|z| z.norm_sqr()).sum();
        if energy == 0.0 {
            return Err(Error::arg(format!("beam {beam} has zero weights at {freq} Hz")));
        }
        let look = self.pattern_at_bin(beam, bin, self.look_angles[beam]).norm_sqr();
        Ok(10.0 * Float::log10(look / energy))
    }

    /// Directivity factor in dB against a cylindrically isotropic noise field
    /// sampled on `angles`.
    pub fn directivity_factor(&self, beam: usize, freq: f64, angles: &AngleGrid) -> Result<f64> {
        self.check_beam(beam)?;
        let bin = self.band_bin(freq)?;
        let look = self.pattern_at_bin(beam, bin, self.look_angles[beam]).norm_sqr();
        let mean = (0..angles.len())
            .map(|j| self.pattern_at_bin(beam, bin, angles.angle(j)).norm_sqr())
            .sum::<f64>()
            / angles.len() as f64;
        if mean == 0.0 {
            return Err(Error::arg(format!("beam {beam} has an all-zero pattern at {freq} Hz")));
        }
        Ok(10.0 * Float::log10(look / mean))
    }
}
