//! Framing, STFT, mel filterbanks and per-channel log energy.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use num_traits::Float;

use crate::array::FrequencyGrid;
use crate::fft::FftPlan;
use crate::{Complex, Error, Result};

/// Floor added before every log so silent input stays finite.
pub const LOG_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StftConfig {
    pub sample_rate: f64,
    pub win_len: usize,
    pub hop: usize,
    pub fft_size: usize,
}

impl Default for StftConfig {
    /// 16 kHz, 25 ms Hann window, 10 ms hop, 512-point FFT.
    fn default() -> Self {
        Self {
            sample_rate: 16000.0,
            win_len: 400,
            hop: 160,
            fft_size: 512,
        }
    }
}

impl StftConfig {
    pub fn validate(&self) -> Result<()> {
        if self.win_len == 0 || self.hop == 0 || self.win_len > self.fft_size || self.hop > self.win_len {
            return Err(Error::arg(format!(
                "invalid framing: win_len={}, hop={}, fft_size={}",
                self.win_len, self.hop, self.fft_size
            )));
        }
        if !self.fft_size.is_power_of_two() {
            return Err(Error::arg(format!("fft_size {} is not a power of two", self.fft_size)));
        }
        Ok(())
    }

    pub fn grid(&self) -> FrequencyGrid {
        FrequencyGrid {
            sample_rate: self.sample_rate,
            fft_size: self.fft_size,
        }
    }

    pub fn num_bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    /// `floor((len − win_len)/hop) + 1`, or zero when the signal is shorter
    /// than one window.
    pub fn num_frames(&self, len: usize) -> usize {
        if len < self.win_len {
            0
        } else {
            (len - self.win_len) / self.hop + 1
        }
    }

    /// Periodic Hann window of `win_len` samples.
    pub fn window(&self) -> Vec<f64> {
        let n = self.win_len as f64;
        (0..self.win_len)
            .map(|i| 0.5 - 0.5 * Float::cos(2.0 * PI * i as f64 / n))
            .collect()
    }
}

/// Complex spectrogram laid out `[frame][bin]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    pub num_frames: usize,
    pub num_bins: usize,
    pub data: Vec<Complex>,
}

impl Spectrogram {
    pub fn zeros(num_frames: usize, num_bins: usize) -> Self {
        Self {
            num_frames,
            num_bins,
            data: vec![Complex::new(0.0, 0.0); num_frames * num_bins],
        }
    }

    pub fn frame(&self, t: usize) -> &[Complex] {
        &self.data[t * self.num_bins..(t + 1) * self.num_bins]
    }

    pub fn frame_mut(&mut self, t: usize) -> &mut [Complex] {
        &mut self.data[t * self.num_bins..(t + 1) * self.num_bins]
    }
}

/// Reusable STFT state (window and FFT plan).
#[derive(Debug, Clone)]
pub struct Stft {
    cfg: StftConfig,
    window: Vec<f64>,
    plan: FftPlan,
}

impl Stft {
    pub fn new(cfg: StftConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            window: cfg.window(),
            plan: FftPlan::new(cfg.fft_size)?,
            cfg,
        })
    }

    pub fn config(&self) -> &StftConfig {
        &self.cfg
    }

    pub fn process(&self, signal: &[f64]) -> Result<Spectrogram> {
        let cfg = &self.cfg;
        if signal.len() < cfg.win_len {
            return Err(Error::arg(format!(
                "signal of {} samples is shorter than one {}-sample window",
                signal.len(),
                cfg.win_len
            )));
        }
        let frames = cfg.num_frames(signal.len());
        let bins = cfg.num_bins();
        let mut out = Spectrogram::zeros(frames, bins);
        let mut buf = vec![Complex::new(0.0, 0.0); cfg.fft_size];
        for t in 0..frames {
            let start = t * cfg.hop;
            for (i, z) in buf.iter_mut().enumerate() {
                *z = if i < cfg.win_len {
                    Complex::new(signal[start + i] * self.window[i], 0.0)
                } else {
                    Complex::new(0.0, 0.0)
                };
            }
            self.plan.forward(&mut buf);
            out.frame_mut(t).copy_from_slice(&buf[..bins]);
        }
        Ok(out)
    }
}

/// One-shot STFT of a real signal.
pub fn stft(signal: &[f64], cfg: &StftConfig) -> Result<Spectrogram> {
    Stft::new(*cfg)?.process(signal)
}

fn hz_to_mel(f: f64) -> f64 {
    2595.0 * Float::log10(1.0 + f / 700.0)
}

fn mel_to_hz(m: f64) -> f64 {
    700.0 * (Float::powf(10.0, m / 2595.0) - 1.0)
}

/// Triangular mel filterbank over the one-sided bins of an FFT grid.
#[derive(Debug, Clone, PartialEq)]
pub struct MelBank {
    num_mels: usize,
    num_bins: usize,
    band: (f64, f64),
    centers: Vec<f64>,
    weights: Vec<f64>,
}

impl MelBank {
    pub fn new(num_mels: usize, grid: FrequencyGrid, band: (f64, f64)) -> Result<Self> {
        let (lo, hi) = band;
        if num_mels == 0 {
            return Err(Error::arg("mel bank needs at least one filter"));
        }
        if !(0.0 <= lo && lo < hi && hi <= grid.nyquist()) {
            return Err(Error::arg(format!(
                "mel band [{lo}, {hi}] Hz must lie within [0, {}] Hz",
                grid.nyquist()
            )));
        }
        let (mlo, mhi) = (hz_to_mel(lo), hz_to_mel(hi));
        let edges: Vec<f64> = (0..num_mels + 2)
            .map(|i| mel_to_hz(mlo + (mhi - mlo) * i as f64 / (num_mels + 1) as f64))
            .collect();
        let num_bins = grid.num_bins();
        let mut weights = vec![0.0; num_mels * num_bins];
        for f in 0..num_mels {
            let (l, c, r) = (edges[f], edges[f + 1], edges[f + 2]);
            for k in 0..num_bins {
                let hz = grid.freq(k);
                let w = if hz > l && hz <= c {
                    (hz - l) / (c - l)
                } else if hz > c && hz < r {
                    (r - hz) / (r - c)
                } else {
                    0.0
                };
                weights[f * num_bins + k] = w;
            }
        }
        Ok(Self {
            num_mels,
            num_bins,
            band,
            centers: edges[1..=num_mels].to_vec(),
            weights,
        })
    }

    pub fn num_mels(&self) -> usize {
        self.num_mels
    }

    pub fn num_bins(&self) -> usize {
        self.num_bins
    }

    pub fn band(&self) -> (f64, f64) {
        self.band
    }

    /// Peak frequency of each filter in Hz.
    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    pub fn filter(&self, f: usize) -> &[f64] {
        &self.weights[f * self.num_bins..(f + 1) * self.num_bins]
    }

    /// Log filterbank energies of one power spectrum frame, appended to `out`.
    pub fn log_energies_into(&self, power: &[f64], out: &mut Vec<f64>) {
        debug_assert_eq!(power.len(), self.num_bins);
        for f in 0..self.num_mels {
            let e: f64 = self.filter(f).iter().zip(power).map(|(w, p)| w * p).sum();
            out.push(Float::ln(LOG_FLOOR + e));
        }
    }
}

/// Log mel energies `[frame][mel]` of a spectrogram.
pub fn log_mel(spectra: &Spectrogram, bank: &MelBank) -> Result<Vec<f64>> {
    if spectra.num_bins != bank.num_bins {
        return Err(Error::shape(format!(
            "spectrogram has {} bins, mel bank expects {}",
            spectra.num_bins, bank.num_bins
        )));
    }
    let mut out = Vec::with_capacity(spectra.num_frames * bank.num_mels);
    let mut power = vec![0.0; spectra.num_bins];
    for t in 0..spectra.num_frames {
        for (p, z) in power.iter_mut().zip(spectra.frame(t)) {
            *p = z.norm_sqr();
        }
        bank.log_energies_into(&power, &mut out);
    }
    Ok(out)
}

/// Multichannel time-domain signal.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiChannel {
    pub sample_rate: f64,
    channels: Vec<Vec<f64>>,
}

impl MultiChannel {
    pub fn new(sample_rate: f64, channels: Vec<Vec<f64>>) -> Result<Self> {
        let len = channels.first().map(Vec::len).unwrap_or(0);
        if channels.is_empty() || channels.iter().any(|c| c.len() != len) {
            return Err(Error::shape("channels must be non-empty and of equal length"));
        }
        Ok(Self { sample_rate, channels })
    }

    pub fn zeros(sample_rate: f64, num_channels: usize, len: usize) -> Self {
        Self {
            sample_rate,
            channels: vec![vec![0.0; len]; num_channels],
        }
    }

    pub fn num_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn len(&self) -> usize {
        self.channels[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn channel(&self, m: usize) -> &[f64] {
        &self.channels[m]
    }

    pub fn channel_mut(&mut self, m: usize) -> &mut [f64] {
        &mut self.channels[m]
    }

    pub fn channels(&self) -> &[Vec<f64>] {
        &self.channels
    }

    pub fn into_channels(self) -> Vec<Vec<f64>> {
        self.channels
    }
}

/// Multichannel spectra laid out `[frame][bin][mic]`, so each frame is the
/// per-bin array snapshot `x(ω) = [x_1, …, x_M]ᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameStack {
    pub num_frames: usize,
    pub num_bins: usize,
    pub num_mics: usize,
    pub data: Vec<Complex>,
}

impl FrameStack {
    pub fn frame(&self, t: usize) -> &[Complex] {
        let n = self.num_bins * self.num_mics;
        &self.data[t * n..(t + 1) * n]
    }

    pub fn frame_mut(&mut self, t: usize) -> &mut [Complex] {
        let n = self.num_bins * self.num_mics;
        &mut self.data[t * n..(t + 1) * n]
    }
}

/// STFT of every channel, interleaved into array snapshots.
pub fn multichannel_stft(signal: &MultiChannel, stft: &Stft) -> Result<FrameStack> {
    let m = signal.num_channels();
    let mut stack: Option<FrameStack> = None;
    for (ch, samples) in signal.channels().iter().enumerate() {
        let spec = stft.process(samples)?;
        let st = stack.get_or_insert_with(|| FrameStack {
            num_frames: spec.num_frames,
            num_bins: spec.num_bins,
            num_mics: m,
            data: vec![Complex::new(0.0, 0.0); spec.num_frames * spec.num_bins * m],
        });
        for t in 0..spec.num_frames {
            for (k, z) in spec.frame(t).iter().enumerate() {
                st.data[(t * spec.num_bins + k) * m + ch] = *z;
            }
        }
    }
    stack.ok_or_else(|| Error::shape("signal has no channels"))
}

/// Per-frame, per-channel `log(ε + Σ x²)` over each frame's samples,
/// laid out `[frame][channel]`.
pub fn log_energy(signal: &MultiChannel, cfg: &StftConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    if signal.len() < cfg.win_len {
        return Err(Error::arg(format!(
            "signal of {} samples is shorter than one {}-sample window",
            signal.len(),
            cfg.win_len
        )));
    }
    let frames = cfg.num_frames(signal.len());
    let m = signal.num_channels();
    let mut out = Vec::with_capacity(frames * m);
    for t in 0..frames {
        let start = t * cfg.hop;
        for ch in signal.channels() {
            let e: f64 = ch[start..start + cfg.win_len].iter().map(|x| x * x).sum();
            out.push(Float::ln(LOG_FLOOR + e));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sine(freq: f64, len: usize, amp: f64) -> Vec<f64> {
        (0..len).map(|i| amp * (2.0 * PI * freq * i as f64 / 16000.0).sin()).collect()
    }

    #[test]
    fn frame_count_formula() {
        let cfg = StftConfig::default();
        assert_eq!(cfg.num_frames(16000), 98);
        assert_eq!(cfg.num_frames(400), 1);
        assert_eq!(cfg.num_frames(399), 0);
        let s = stft(&vec![0.0; 16000], &cfg).unwrap();
        assert_eq!(s.num_frames, 98);
        assert!(s.data.iter().all(|z| z.norm() == 0.0));
        assert!(stft(&[0.0; 100], &cfg).is_err());
    }

    #[test]
    fn sine_concentrates_at_its_bin() {
        // Bin-centered for a window spanning the whole FFT: all energy lands
        // within one bin of the peak.
        let full = StftConfig { win_len: 512, hop: 256, ..StftConfig::default() };
        // With the default 400-sample window the main lobe spreads over
        // ±2.56 bins of the 512 grid, so only ±2 bins hold 99%.
        for (cfg, reach) in [(full, 1usize), (StftConfig::default(), 2)] {
            let s = stft(&sine(1000.0, 4000, 1.0), &cfg).unwrap();
            for t in 0..s.num_frames {
                let f = s.frame(t);
                let total: f64 = f.iter().map(|z| z.norm_sqr()).sum();
                let near: f64 = f[32 - reach..=32 + reach].iter().map(|z| z.norm_sqr()).sum();
                assert!(near >= 0.99 * total, "frame {t}: {near} / {total}");
            }
        }
    }

    #[test]
    fn parseval_per_frame() {
        let cfg = StftConfig::default();
        let x: Vec<f64> = (0..2000).map(|i| ((i * 7919) % 101) as f64 / 50.0 - 1.0).collect();
        let s = stft(&x, &cfg).unwrap();
        let w = cfg.window();
        for t in 0..s.num_frames {
            let time: f64 = (0..cfg.win_len).map(|i| (x[t * cfg.hop + i] * w[i]).powi(2)).sum();
            let f = s.frame(t);
            let n = cfg.fft_size;
            let mut freq = f[0].norm_sqr() + f[n / 2].norm_sqr();
            for k in 1..n / 2 {
                freq += 2.0 * f[k].norm_sqr();
            }
            freq /= n as f64;
            assert!((freq - time).abs() <= 1e-6 * time, "{freq} vs {time}");
        }
    }

    #[test]
    fn mel_bank_shapes_and_order() {
        let grid = StftConfig::default().grid();
        for &n in &[40usize, 160] {
            let bank = MelBank::new(n, grid, (0.0, 8000.0)).unwrap();
            assert!(bank.centers().windows(2).all(|w| w[1] > w[0]));
            for f in 0..n {
                assert!(bank.filter(f).iter().all(|&w| w >= 0.0));
            }
            let s = stft(&sine(440.0, 4000, 0.1), &StftConfig::default()).unwrap();
            let out = log_mel(&s, &bank).unwrap();
            assert_eq!(out.len(), s.num_frames * n);
        }
        assert!(MelBank::new(40, grid, (100.0, 9000.0)).is_err());
        assert!(MelBank::new(0, grid, (0.0, 8000.0)).is_err());
    }

    #[test]
    fn log_mel_of_silence_is_floor() {
        let bank = MelBank::new(40, StftConfig::default().grid(), (0.0, 8000.0)).unwrap();
        let s = Spectrogram::zeros(3, 257);
        assert!(log_mel(&s, &bank).unwrap().iter().all(|&v| v == LOG_FLOOR.ln()));
        assert!(log_mel(&Spectrogram::zeros(3, 129), &bank).is_err());
    }

    #[test]
    fn doubling_amplitude_adds_log4() {
        let cfg = StftConfig::default();
        let bank = MelBank::new(40, cfg.grid(), (0.0, 8000.0)).unwrap();
        let x: Vec<f64> = (0..4000).map(|i| ((i * 7919) % 101) as f64 / 50.0 - 1.0).collect();
        let x2: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
        let a = log_mel(&stft(&x, &cfg).unwrap(), &bank).unwrap();
        let b = log_mel(&stft(&x2, &cfg).unwrap(), &bank).unwrap();
        let mut checked = 0;
        for (u, v) in a.iter().zip(&b) {
            if *u > -10.0 {
                assert!((v - u - 4.0f64.ln()).abs() < 1e-3);
                checked += 1;
            }
        }
        assert!(checked > 100);
    }

    #[test]
    fn log_energy_examples() {
        let cfg = StftConfig::default();
        let z = MultiChannel::zeros(16000.0, 8, 1600);
        let e = log_energy(&z, &cfg).unwrap();
        assert_eq!(e.len(), cfg.num_frames(1600) * 8);
        assert!(e.iter().all(|&v| v == LOG_FLOOR.ln()));

        let chans: Vec<Vec<f64>> = (0..8).map(|m| sine(200.0 * (m + 1) as f64, 1600, 0.1 * (m + 1) as f64)).collect();
        let sig = MultiChannel::new(16000.0, chans.clone()).unwrap();
        let mut perm = chans.clone();
        perm.swap(1, 6);
        let psig = MultiChannel::new(16000.0, perm).unwrap();
        let a = log_energy(&sig, &cfg).unwrap();
        let b = log_energy(&psig, &cfg).unwrap();
        for t in 0..cfg.num_frames(1600) {
            for m in 0..8 {
                let pm = match m {
                    1 => 6,
                    6 => 1,
                    x => x,
                };
                assert_eq!(a[t * 8 + m], b[t * 8 + pm]);
            }
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn log_mel_monotone_in_power(base in proptest::collection::vec(0.0f64..10.0, 257), bump in 0usize..257, extra in 0.0f64..5.0) {
                let bank = MelBank::new(40, StftConfig::default().grid(), (0.0, 8000.0)).unwrap();
                let mut a = Vec::new();
                bank.log_energies_into(&base, &mut a);
                let mut more = base.clone();
                more[bump] += extra;
                let mut b = Vec::new();
                bank.log_energies_into(&more, &mut b);
                for (x, y) in a.iter().zip(&b) {
                    prop_assert!(y >= x);
                }
            }
        }
    }
}
