//! Free-field multichannel scene synthesis and labeled dataset planning.
//!
//! Sources are synthetic voiced signals (harmonic tones or speech-like
//! harmonic noise) placed in the far field. Each source is spatialized by
//! applying the array steering response per FFT bin; spatially white noise
//! is added at the requested SNR.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::array::{angular_distance_deg, ArrayGeometry};
use crate::dsp::MultiChannel;
use crate::fft::FftPlan;
use crate::{Complex, Error, Result};

/// RMS of a source at 0 dB level.
const REFERENCE_RMS: f64 = 0.05;
/// Highest partial frequency synthesized.
const MAX_PARTIAL_HZ: f64 = 7000.0;

#[derive(Debug, Clone, PartialEq)]
pub enum SourceKind {
    HarmonicTone { f0: f64, partials: usize },
    SpeechLike { f0: f64 },
}

impl SourceKind {
    pub fn f0(&self) -> f64 {
        match *self {
            SourceKind::HarmonicTone { f0, .. } | SourceKind::SpeechLike { f0 } => f0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SourceSpec {
    pub azimuth_deg: f64,
    pub kind: SourceKind,
    pub level_db: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub sources: Vec<SourceSpec>,
    pub duration_s: f64,
    /// `None` synthesizes a noiseless scene.
    pub snr_db: Option<f64>,
    pub seed: u64,
    pub sample_rate: f64,
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        if self.sources.is_empty() || self.sources.len() > 2 {
            return Err(Error::arg(format!("scenes hold 1 or 2 sources, got {}", self.sources.len())));
        }
        for s in &self.sources {
            if !(0.0..360.0).contains(&s.azimuth_deg) {
                return Err(Error::arg(format!("azimuth {} outside [0, 360)", s.azimuth_deg)));
            }
            if !(s.kind.f0() > 0.0) {
                return Err(Error::arg(format!("f0 must be positive, got {}", s.kind.f0())));
            }
        }
        if !(self.duration_s > 0.0) || !(self.sample_rate > 0.0) {
            return Err(Error::arg("duration and sample rate must be positive"));
        }
        Ok(())
    }

    pub fn num_samples(&self) -> usize {
        Float::round(self.duration_s * self.sample_rate) as usize
    }

    pub fn is_overlap(&self) -> bool {
        self.sources.len() == 2
    }
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Mono waveform of one source, scaled to its level.
pub fn source_waveform(src: &SourceSpec, len: usize, sample_rate: f64, rng: &mut impl Rng) -> Vec<f64> {
    let f0 = src.kind.f0();
    let top = MAX_PARTIAL_HZ.min(0.45 * sample_rate);
    let max_partials = (top / f0) as usize;
    let mut out = vec![0.0; len];
    match src.kind {
        SourceKind::HarmonicTone { partials, .. } => {
            let n = partials.min(max_partials).max(1);
            // 1/k amplitude tilt, random phases.
            let coeffs: Vec<Complex> = (1..=n)
                .map(|k| Complex::from_polar(1.0 / k as f64, rng.random_range(0.0..2.0 * PI)))
                .collect();
            let step = 2.0 * PI * f0 / sample_rate;
            for (t, y) in out.iter_mut().enumerate() {
                *y = harmonic_sum(Complex::from_polar(1.0, step * t as f64), &coeffs);
            }
        }
        SourceKind::SpeechLike { .. } => {
            let f1 = rng.random_range(400.0..900.0);
            let f2 = rng.random_range(1000.0..2500.0);
            let n = max_partials.max(1);
            let coeffs: Vec<Complex> = (1..=n)
                .map(|k| {
                    let f = k as f64 * f0;
                    let formants = 1.0
                        + 2.0 * Float::exp(-((f - f1) / 200.0).powi(2))
                        + 1.5 * Float::exp(-((f - f2) / 300.0).powi(2));
                    Complex::from_polar(formants / k as f64, rng.random_range(0.0..2.0 * PI))
                })
                .collect();
            let vib_rate = rng.random_range(4.0..6.0);
            let vib_phase = rng.random_range(0.0..2.0 * PI);
            let am_rate = rng.random_range(3.0..6.0);
            let am_phase = rng.random_range(0.0..2.0 * PI);
            let mut phase = 0.0;
            for (t, y) in out.iter_mut().enumerate() {
                let time = t as f64 / sample_rate;
                let inst = f0 * (1.0 + 0.03 * Float::sin(2.0 * PI * vib_rate * time + vib_phase));
                let env = 0.6 + 0.4 * Float::sin(2.0 * PI * am_rate * time + am_phase);
                let breath: f64 = rng.sample(StandardNormal);
                *y = env * (harmonic_sum(Complex::from_polar(1.0, phase), &coeffs) + 0.05 * breath);
                phase += 2.0 * PI * inst / sample_rate;
                if phase > 2.0 * PI {
                    phase -= 2.0 * PI;
                }
            }
        }
    }
    let rms = Float::sqrt(out.iter().map(|v| v * v).sum::<f64>() / len.max(1) as f64);
    if rms > 0.0 {
        let gain = REFERENCE_RMS * Float::powf(10.0, src.level_db / 20.0) / rms;
        for v in out.iter_mut() {
            *v *= gain;
        }
    }
    out
}

/// `Re Σ_k c_k w^k`.
#[inline]
fn harmonic_sum(w: Complex, coeffs: &[Complex]) -> f64 {
    let mut z = w;
    let mut acc = 0.0;
    for c in coeffs {
        acc += c.re * z.re - c.im * z.im;
        z *= w;
    }
    acc
}

/// Far-field plane wave from `azimuth` (radians): every channel is the mono
/// signal filtered by that element's steering response.
pub fn spatialize(mono: &[f64], azimuth: f64, geom: &ArrayGeometry, sample_rate: f64) -> Result<Vec<Vec<f64>>> {
    let n = mono.len();
    let size = (n + 64).next_power_of_two();
    let plan = FftPlan::new(size)?;
    let mut spec: Vec<Complex> = mono.iter().map(|&x| Complex::new(x, 0.0)).collect();
    spec.resize(size, Complex::new(0.0, 0.0));
    plan.forward(&mut spec);
    let half = size / 2;
    let steering: Vec<Vec<Complex>> = (0..=half)
        .map(|k| geom.steering_vector(k as f64 * sample_rate / size as f64, azimuth))
        .collect();
    let mut out = Vec::with_capacity(geom.num_mics());
    let mut buf = vec![Complex::new(0.0, 0.0); size];
    for m in 0..geom.num_mics() {
        for k in 0..=half {
            let d = steering[k][m];
            buf[k] = spec[k] * d;
            if k != 0 && k != half {
                buf[size - k] = spec[size - k] * d.conj();
            }
        }
        // Keep DC and Nyquist real.
        buf[half] = Complex::new(buf[half].re, 0.0);
        plan.inverse(&mut buf);
        out.push(buf[..n].iter().map(|z| z.re).collect());
    }
    Ok(out)
}

/// Renders a scene to `M` channels. Deterministic in `spec.seed`.
pub fn synthesize_scene(spec: &SceneSpec, geom: &ArrayGeometry) -> Result<MultiChannel> {
    spec.validate()?;
    let len = spec.num_samples();
    let mut mix = MultiChannel::zeros(spec.sample_rate, geom.num_mics(), len);
    for (i, src) in spec.sources.iter().enumerate() {
        let mut rng = rng_for(spec.seed, 1 + i as u64);
        let mono = source_waveform(src, len, spec.sample_rate, &mut rng);
        let chans = spatialize(&mono, src.azimuth_deg.to_radians(), geom, spec.sample_rate)?;
        for (m, ch) in chans.iter().enumerate() {
            for (y, x) in mix.channel_mut(m).iter_mut().zip(ch) {
                *y += x;
            }
        }
    }
    if let Some(snr) = spec.snr_db {
        let power = mix.channels().iter().flatten().map(|v| v * v).sum::<f64>() / (len * geom.num_mics()).max(1) as f64;
        let sigma = Float::sqrt(power / Float::powf(10.0, snr / 10.0));
        let mut rng = rng_for(spec.seed, 0);
        for m in 0..geom.num_mics() {
            for y in mix.channel_mut(m).iter_mut() {
                let z: f64 = rng.sample(StandardNormal);
                *y += sigma * z;
            }
        }
    }
    Ok(mix)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn as_str(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetConfig {
    pub num_segments: usize,
    pub overlap_fraction: f64,
    pub seconds: f64,
    pub seed: u64,
    pub min_separation_deg: f64,
    pub test_fraction: f64,
    pub snr_range_db: (f64, f64),
    pub level_range_db: (f64, f64),
    pub f0_range: (f64, f64),
    pub sample_rate: f64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            num_segments: 100,
            overlap_fraction: 0.4,
            seconds: 1.0,
            seed: 0,
            min_separation_deg: 30.0,
            test_fraction: 0.2,
            snr_range_db: (15.0, 30.0),
            level_range_db: (-6.0, 0.0),
            f0_range: (100.0, 300.0),
            sample_rate: 16000.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentPlan {
    pub index: usize,
    pub id: String,
    pub label: u8,
    pub split: Split,
    pub scene: SceneSpec,
}

impl SegmentPlan {
    pub fn azimuths(&self) -> Vec<f64> {
        self.scene.sources.iter().map(|s| s.azimuth_deg).collect()
    }
}

/// Plans every segment of a dataset: labels, split, and scene parameters.
///
/// Exactly `round(n·overlap_fraction)` segments are overlapped; each class
/// is split train/test in the same proportion. Segment `i` draws its scene
/// from its own RNG stream, so plans do not depend on generation order.
pub fn plan_dataset(cfg: &DatasetConfig) -> Result<Vec<SegmentPlan>> {
    if cfg.num_segments == 0 {
        return Err(Error::arg("dataset needs at least one segment"));
    }
    if !(0.0..=1.0).contains(&cfg.overlap_fraction) || !(0.0..=1.0).contains(&cfg.test_fraction) {
        return Err(Error::arg("overlap and test fractions must lie in [0, 1]"));
    }
    if !(0.0..=180.0).contains(&cfg.min_separation_deg) {
        return Err(Error::arg("minimum separation must lie in [0, 180] degrees"));
    }
    let n = cfg.num_segments;
    let n_overlap = Float::round(n as f64 * cfg.overlap_fraction) as usize;
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = rng_for(cfg.seed, 0);
    // Fisher-Yates with the dataset-level stream.
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        order.swap(i, j);
    }
    let mut labels = vec![0u8; n];
    for &i in &order[..n_overlap] {
        labels[i] = 1;
    }
    let mut splits = vec![Split::Train; n];
    for class in [1u8, 0] {
        let members: Vec<usize> = order.iter().copied().filter(|&i| labels[i] == class).collect();
        let n_test = Float::round(members.len() as f64 * cfg.test_fraction) as usize;
        for &i in &members[members.len() - n_test..] {
            splits[i] = Split::Test;
        }
    }
    Ok((0..n)
        .map(|i| {
            let mut rng = rng_for(cfg.seed, 1 + i as u64);
            let scene = sample_scene(cfg, labels[i] == 1, &mut rng);
            SegmentPlan {
                index: i,
                id: format!("seg{i:06}"),
                label: labels[i],
                split: splits[i],
                scene,
            }
        })
        .collect())
}

fn sample_source(cfg: &DatasetConfig, azimuth_deg: f64, f0: f64, rng: &mut ChaCha8Rng) -> SourceSpec {
    let kind = if rng.random_bool(0.5) {
        SourceKind::HarmonicTone { f0, partials: 40 }
    } else {
        SourceKind::SpeechLike { f0 }
    };
    SourceSpec {
        azimuth_deg,
        kind,
        level_db: rng.random_range(cfg.level_range_db.0..=cfg.level_range_db.1),
    }
}

fn sample_scene(cfg: &DatasetConfig, overlap: bool, rng: &mut ChaCha8Rng) -> SceneSpec {
    let (flo, fhi) = cfg.f0_range;
    let az1 = rng.random_range(0.0..360.0);
    let f1 = rng.random_range(flo..=fhi);
    let mut sources = vec![sample_source(cfg, az1, f1, rng)];
    if overlap {
        let az2 = loop {
            let a = rng.random_range(0.0..360.0);
            if angular_distance_deg(a, az1) >= cfg.min_separation_deg {
                break a;
            }
        };
        // Keep the two pitch tracks at least 12% apart.
        let f2 = loop {
            let f = rng.random_range(flo..=fhi);
            if Float::abs(Float::ln(f / f1)) >= Float::ln(1.12) {
                break f;
            }
        };
        sources.push(sample_source(cfg, az2, f2, rng));
    }
    let snr = rng.random_range(cfg.snr_range_db.0..=cfg.snr_range_db.1);
    SceneSpec {
        sources,
        duration_s: cfg.seconds,
        snr_db: Some(snr),
        seed: rng.random(),
        sample_rate: cfg.sample_rate,
    }
}
