//! Model input tensors from multichannel audio: per-beam log filterbanks,
//! 128-dim spatial frames, and single-channel log filterbanks.
//!
//! Time axes are padded to a multiple of [`LENGTH_MULTIPLE`] by repeating the
//! last frame, so a 1 s segment (98 frames) becomes 100 frames.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::array::{AngleGrid, ArrayGeometry};
use crate::beamformer::{uniform_looks, BeamformerBank, DEFAULT_BAND, DEFAULT_LOADING, DEFAULT_NUM_BEAMS};
use crate::dsp::{log_energy, multichannel_stft, FrameStack, MelBank, MultiChannel, Stft, StftConfig};
use crate::nn::Tensor;
use crate::spatial::{spatial_feature, SpatialAnalyzer, DEFAULT_SMOOTHING};
use crate::{Error, Result};

pub const LENGTH_MULTIPLE: usize = 4;

/// Smallest multiple of [`LENGTH_MULTIPLE`] not below `frames`.
pub fn padded_len(frames: usize) -> usize {
    frames.div_ceil(LENGTH_MULTIPLE) * LENGTH_MULTIPLE
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FeatureKind {
    Beams,
    Spatial,
    Single,
}

impl FeatureKind {
    pub const ALL: [FeatureKind; 3] = [FeatureKind::Beams, FeatureKind::Spatial, FeatureKind::Single];

    pub fn as_str(self) -> &'static str {
        match self {
            FeatureKind::Beams => "beams",
            FeatureKind::Spatial => "spatial",
            FeatureKind::Single => "single",
        }
    }
}

impl fmt::Display for FeatureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FeatureKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FeatureKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::arg(format!("unknown feature type {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureConfig {
    pub stft: StftConfig,
    /// Filterbank size `F` for beam and single-channel features.
    pub fbank: usize,
    /// Beamformer design band, also the mel range of beam filterbanks.
    pub beam_band: (f64, f64),
    /// Mel range of single-channel filterbanks.
    pub single_band: (f64, f64),
    pub num_beams: usize,
    pub num_angles: usize,
    pub loading: f64,
    pub phat: bool,
    pub smoothing: usize,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        let stft = StftConfig::default();
        Self {
            stft,
            fbank: 40,
            beam_band: DEFAULT_BAND,
            single_band: (0.0, stft.sample_rate / 2.0),
            num_beams: DEFAULT_NUM_BEAMS,
            num_angles: AngleGrid::default().len(),
            loading: DEFAULT_LOADING,
            phat: true,
            smoothing: DEFAULT_SMOOTHING,
        }
    }
}

/// Feature tensors of one segment; absent kinds were not requested.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SegmentFeatures {
    pub beams: Option<Tensor>,
    pub spatial: Option<Tensor>,
    pub single: Option<Tensor>,
}

impl SegmentFeatures {
    pub fn get(&self, kind: FeatureKind) -> Option<&Tensor> {
        match kind {
            FeatureKind::Beams => self.beams.as_ref(),
            FeatureKind::Spatial => self.spatial.as_ref(),
            FeatureKind::Single => self.single.as_ref(),
        }
    }

    pub fn set(&mut self, kind: FeatureKind, t: Tensor) {
        match kind {
            FeatureKind::Beams => self.beams = Some(t),
            FeatureKind::Spatial => self.spatial = Some(t),
            FeatureKind::Single => self.single = Some(t),
        }
    }
}

/// Designed beamformers and filterbanks, reusable across segments.
#[derive(Debug, Clone)]
pub struct FeatureExtractor {
    cfg: FeatureConfig,
    geometry: ArrayGeometry,
    stft: Stft,
    beams: BeamformerBank,
    beam_mel: MelBank,
    single_mel: MelBank,
    analyzer: SpatialAnalyzer,
}

impl FeatureExtractor {
    pub fn new(cfg: FeatureConfig, geometry: ArrayGeometry) -> Result<Self> {
        let stft = Stft::new(cfg.stft)?;
        let grid = cfg.stft.grid();
        let beams = BeamformerBank::design(
            &geometry,
            &uniform_looks(cfg.num_beams),
            grid,
            cfg.beam_band,
            cfg.loading,
        )?;
        let beam_mel = MelBank::new(cfg.fbank, grid, cfg.beam_band)?;
        let single_mel = MelBank::new(cfg.fbank, grid, cfg.single_band)?;
        let analyzer = SpatialAnalyzer::new(
            &geometry,
            grid,
            cfg.beam_band,
            cfg.loading,
            AngleGrid::new(cfg.num_angles)?,
            cfg.phat,
            cfg.smoothing,
        )?;
        Ok(Self {
            cfg,
            geometry,
            stft,
            beams,
            beam_mel,
            single_mel,
            analyzer,
        })
    }

    pub fn config(&self) -> &FeatureConfig {
        &self.cfg
    }

    pub fn beam_bank(&self) -> &BeamformerBank {
        &self.beams
    }

    pub fn analyzer(&self) -> &SpatialAnalyzer {
        &self.analyzer
    }

    pub fn spatial_dim(&self) -> usize {
        self.cfg.num_angles + self.geometry.num_mics()
    }

    fn check_signal(&self, signal: &MultiChannel) -> Result<()> {
        if signal.num_channels() != self.geometry.num_mics() {
            return Err(Error::arg(format!(
                "signal has {} channels, array has {}",
                signal.num_channels(),
                self.geometry.num_mics()
            )));
        }
        if signal.sample_rate != self.cfg.stft.sample_rate {
            return Err(Error::arg(format!(
                "signal sampled at {} Hz, features configured for {} Hz",
                signal.sample_rate, self.cfg.stft.sample_rate
            )));
        }
        Ok(())
    }

    /// Computes the requested kinds, sharing one multichannel STFT.
    pub fn extract(&self, signal: &MultiChannel, kinds: &[FeatureKind]) -> Result<SegmentFeatures> {
        self.check_signal(signal)?;
        let mut out = SegmentFeatures::default();
        let needs_stack = kinds.iter().any(|k| *k != FeatureKind::Single);
        let stack = if needs_stack {
            Some(multichannel_stft(signal, &self.stft)?)
        } else {
            None
        };
        for &kind in kinds {
            let t = match kind {
                FeatureKind::Beams => self.beams_from(stack.as_ref().expect("stack computed"))?,
                FeatureKind::Spatial => self.spatial_from(signal, stack.as_ref().expect("stack computed"))?,
                FeatureKind::Single => self.single(signal)?,
            };
            out.set(kind, t);
        }
        Ok(out)
    }

    /// `[F × L × 8]` log mel energies of each beam output.
    pub fn beams(&self, signal: &MultiChannel) -> Result<Tensor> {
        self.check_signal(signal)?;
        self.beams_from(&multichannel_stft(signal, &self.stft)?)
    }

    /// `[128 × L]` SRP spectrum followed by per-microphone log energies.
    pub fn spatial(&self, signal: &MultiChannel) -> Result<Tensor> {
        self.check_signal(signal)?;
        self.spatial_from(signal, &multichannel_stft(signal, &self.stft)?)
    }

    /// `[F × L]` log mel energies of microphone 0.
    pub fn single(&self, signal: &MultiChannel) -> Result<Tensor> {
        self.check_signal(signal)?;
        let spec = self.stft.process(signal.channel(0))?;
        let f = self.cfg.fbank;
        let l = spec.num_frames;
        let mut rows = Vec::with_capacity(l * f);
        let mut power = vec![0.0; spec.num_bins];
        for t in 0..l {
            for (p, z) in power.iter_mut().zip(spec.frame(t)) {
                *p = z.norm_sqr();
            }
            self.single_mel.log_energies_into(&power, &mut rows);
        }
        transpose_padded(&rows, l, f, 1)
    }

    fn beams_from(&self, stack: &FrameStack) -> Result<Tensor> {
        let (f, nb, l) = (self.cfg.fbank, self.cfg.num_beams, stack.num_frames);
        // [frame][beam][mel]
        let mut rows = Vec::with_capacity(l * nb * f);
        let mut power = vec![0.0; stack.num_bins];
        for t in 0..l {
            let frame = stack.frame(t);
            for b in 0..nb {
                let y = self.beams.apply(frame, b)?;
                for (p, z) in power.iter_mut().zip(&y) {
                    *p = z.norm_sqr();
                }
                self.beam_mel.log_energies_into(&power, &mut rows);
            }
        }
        transpose_padded(&rows, l, f, nb)
    }

    fn spatial_from(&self, signal: &MultiChannel, stack: &FrameStack) -> Result<Tensor> {
        let spectrum = self.analyzer.spectrum(stack)?;
        let energies = log_energy(signal, &self.cfg.stft)?;
        let rows = spatial_feature(&spectrum, &energies, self.geometry.num_mics())?;
        transpose_padded(&rows, stack.num_frames, self.spatial_dim(), 1)
    }
}

/// Turns `[frame][group][feature]` rows into a `[feature × L × group]`
/// tensor (`[feature × L]` for one group), padding `L` by repeating the last
/// frame.
fn transpose_padded(rows: &[f64], frames: usize, dim: usize, groups: usize) -> Result<Tensor> {
    if frames == 0 {
        return Err(Error::arg("no frames to pad"));
    }
    let l = padded_len(frames);
    let mut data = vec![0.0f32; dim * l * groups];
    for t in 0..l {
        let src = t.min(frames - 1);
        for g in 0..groups {
            for i in 0..dim {
                let v = rows[(src * groups + g) * dim + i];
                data[(i * l + t) * groups + g] = v as f32;
            }
        }
    }
    let dims = if groups == 1 { vec![dim, l] } else { vec![dim, l, groups] };
    Tensor::new(dims, data)
}
