//! Synthetic datasets on disk and in memory, and feature loading.

use std::path::Path;

use beamosd_core::array::ArrayGeometry;
use beamosd_core::dsp::MultiChannel;
use beamosd_core::features::{FeatureExtractor, FeatureKind};
use beamosd_core::simulator::{plan_dataset, synthesize_scene, DatasetConfig, SegmentPlan};
use beamosd_core::train::Example;

use crate::manifest::{to_jsonl, Manifest, ManifestEntry, SplitFilter, MANIFEST_FILE};
use crate::parallel::Workers;
use crate::{wav, Error, Result};

pub const WAV_DIR: &str = "wav";

/// Renders a planned segment exactly as it reads back from its WAV file.
pub fn render(plan: &SegmentPlan, geom: &ArrayGeometry) -> Result<MultiChannel> {
    Ok(wav::quantize(&synthesize_scene(&plan.scene, geom)?))
}

pub fn entry_for(plan: &SegmentPlan) -> ManifestEntry {
    ManifestEntry {
        id: plan.id.clone(),
        label: plan.label,
        wav: format!("{WAV_DIR}/{}.wav", plan.id),
        azimuths: plan.azimuths(),
        duration_s: plan.scene.duration_s,
        split: plan.split.as_str().to_string(),
    }
}

/// Writes `out/wav/<id>.wav` for every segment and `out/manifest.jsonl`.
pub fn simulate_to_dir(
    cfg: &DatasetConfig,
    geom: &ArrayGeometry,
    out: &Path,
    workers: Workers,
) -> Result<Vec<ManifestEntry>> {
    let plans = plan_dataset(cfg)?;
    let wav_dir = out.join(WAV_DIR);
    std::fs::create_dir_all(&wav_dir).map_err(|e| Error::io(&wav_dir, e))?;
    let entries = workers.map(&plans, |plan| {
        let entry = entry_for(plan);
        let signal = synthesize_scene(&plan.scene, geom)?;
        wav::save(out.join(&entry.wav), &signal)?;
        Ok(entry)
    })?;
    let path = out.join(MANIFEST_FILE);
    std::fs::write(&path, to_jsonl(&entries)).map_err(|e| Error::io(&path, e))?;
    Ok(entries)
}

/// Features of planned segments without touching the disk.
pub fn examples_from_plans(
    plans: &[SegmentPlan],
    geom: &ArrayGeometry,
    extractor: &FeatureExtractor,
    kinds: &[FeatureKind],
    workers: Workers,
) -> Result<Vec<Example>> {
    workers.map(plans, |plan| {
        let signal = render(plan, geom)?;
        Ok(Example {
            features: extractor.extract(&signal, kinds)?,
            label: plan.label,
        })
    })
}

/// Entries of `split` with their features read from the WAV files.
pub fn load_examples(
    manifest: &Manifest,
    split: SplitFilter,
    extractor: &FeatureExtractor,
    kinds: &[FeatureKind],
    workers: Workers,
) -> Result<(Vec<ManifestEntry>, Vec<Example>)> {
    let entries: Vec<ManifestEntry> = manifest.select(split).into_iter().cloned().collect();
    if entries.is_empty() {
        return Err(Error::data(format!("manifest has no {split} segments")));
    }
    let examples = workers.map(&entries, |e| {
        let signal = wav::load(manifest.wav_path(e))?;
        Ok(Example {
            features: extractor.extract(&signal, kinds)?,
            label: e.label,
        })
    })?;
    Ok((entries, examples))
}

/// The common segment duration of `entries`.
pub fn segment_seconds(entries: &[ManifestEntry]) -> Result<f64> {
    let first = entries.first().ok_or_else(|| Error::data("no segments"))?.duration_s;
    if entries.iter().any(|e| e.duration_s != first) {
        return Err(Error::data("segments have different durations"));
    }
    Ok(first)
}
