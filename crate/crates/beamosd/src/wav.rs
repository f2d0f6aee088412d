//! 16-bit PCM multichannel WAV files.
//!
//! Samples map to `[-1, 1]` by `v / 32767`; writing rounds `x · 32767` and
//! clamps to the 16-bit range.

use std::io::{Read, Seek, Write};
use std::path::Path;

use beamosd_core::dsp::MultiChannel;

use crate::{Error, Result};

pub const FULL_SCALE: f64 = 32767.0;

pub fn to_pcm(x: f64) -> i16 {
    (x * FULL_SCALE).round().clamp(i16::MIN as f64, i16::MAX as f64) as i16
}

pub fn from_pcm(v: i16) -> f64 {
    v as f64 / FULL_SCALE
}

/// The signal a write-then-read round trip produces.
pub fn quantize(signal: &MultiChannel) -> MultiChannel {
    let channels = signal
        .channels()
        .iter()
        .map(|ch| ch.iter().map(|&x| from_pcm(to_pcm(x))).collect())
        .collect();
    MultiChannel::new(signal.sample_rate, channels).expect("same shape as a valid signal")
}

fn spec_of(signal: &MultiChannel) -> Result<hound::WavSpec> {
    let rate = signal.sample_rate;
    if rate.fract() != 0.0 || !(1.0..=u32::MAX as f64).contains(&rate) {
        return Err(Error::data(format!("sample rate {rate} is not a positive integer")));
    }
    Ok(hound::WavSpec {
        channels: u16::try_from(signal.num_channels()).map_err(|_| Error::data("too many channels"))?,
        sample_rate: rate as u32,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    })
}

pub fn write_to<W: Write + Seek>(w: W, signal: &MultiChannel) -> Result<()> {
    let mut writer = hound::WavWriter::new(w, spec_of(signal)?).map_err(wav_err)?;
    for t in 0..signal.len() {
        for ch in signal.channels() {
            writer.write_sample(to_pcm(ch[t])).map_err(wav_err)?;
        }
    }
    writer.finalize().map_err(wav_err)
}

pub fn to_bytes(signal: &MultiChannel) -> Result<Vec<u8>> {
    let mut cur = std::io::Cursor::new(Vec::new());
    write_to(&mut cur, signal)?;
    Ok(cur.into_inner())
}

pub fn save(path: impl AsRef<Path>, signal: &MultiChannel) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, to_bytes(signal)?).map_err(|e| Error::io(path, e))
}

pub fn read_from<R: Read>(r: R) -> Result<MultiChannel> {
    let reader = hound::WavReader::new(r).map_err(wav_err)?;
    let spec = reader.spec();
    if spec.sample_format != hound::SampleFormat::Int || spec.bits_per_sample != 16 {
        return Err(Error::data(format!(
            "expected 16-bit integer PCM, got {} bits {:?}",
            spec.bits_per_sample, spec.sample_format
        )));
    }
    let nc = spec.channels as usize;
    let mut channels = vec![Vec::with_capacity(reader.len() as usize / nc.max(1)); nc];
    for (i, s) in reader.into_samples::<i16>().enumerate() {
        channels[i % nc].push(from_pcm(s.map_err(wav_err)?));
    }
    if channels.iter().any(|c| c.len() != channels[0].len()) {
        return Err(Error::data("WAV data ends mid-frame"));
    }
    Ok(MultiChannel::new(spec.sample_rate as f64, channels)?)
}

pub fn load(path: impl AsRef<Path>) -> Result<MultiChannel> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_from(std::io::BufReader::new(file)).map_err(|e| match e {
        Error::Data(msg) => Error::data(format!("{}: {msg}", path.display())),
        other => other,
    })
}

fn wav_err(e: hound::Error) -> Error {
    match e {
        hound::Error::IoError(io) => Error::data(format!("WAV I/O: {io}")),
        other => Error::data(format!("WAV: {other}")),
    }
}
