//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails. Positional arguments select criteria by substring.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use beamosd::dataset::{examples_from_plans, simulate_to_dir};
use beamosd::parallel::Workers;
use beamosd::runs::{
    gradcheck_model, load_detector, logits, run_eval, run_train, toy_inputs, train_in_memory, TrainRun,
    CHECKPOINT_FILE,
};
use beamosd::manifest::{Manifest, SplitFilter};
use beamosd_core::array::{angular_distance_deg, AngleGrid, ArrayGeometry};
use beamosd_core::beamformer::{design_cddma, uniform_looks, BeamformerBank, ConstraintSet, DEFAULT_BAND, DEFAULT_LOADING};
use beamosd_core::dsp::{multichannel_stft, Stft, StftConfig};
use beamosd_core::features::{FeatureConfig, FeatureExtractor, FeatureKind};
use beamosd_core::metrics::{compute_metrics, fscore, Confusion};
use beamosd_core::models::{ModelConfig, ModelInput, ModelKind, Stage, TraceRow};
use beamosd_core::nn::gradcheck::GradCheckConfig;
use beamosd_core::nn::optim::AdamConfig;
use beamosd_core::simulator::{plan_dataset, synthesize_scene, DatasetConfig, SceneSpec, SourceKind, SourceSpec, Split};
use beamosd_core::spatial::{srp_frame, SpatialAnalyzer, DEFAULT_SMOOTHING};
use beamosd_core::train::{metrics_from_logits, TrainConfig};
use beamosd_core::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn geom() -> ArrayGeometry {
    ArrayGeometry::default()
}

fn grid() -> beamosd_core::array::FrequencyGrid {
    StftConfig::default().grid()
}

fn bank8(loading: f64) -> BeamformerBank {
    BeamformerBank::design(&geom(), &uniform_looks(8), grid(), DEFAULT_BAND, loading).unwrap()
}

fn speech(azimuth_deg: f64, f0: f64, level_db: f64) -> SourceSpec {
    SourceSpec {
        azimuth_deg,
        kind: SourceKind::SpeechLike { f0 },
        level_db,
    }
}

fn scene(sources: Vec<SourceSpec>, duration_s: f64, snr_db: Option<f64>, seed: u64) -> SceneSpec {
    SceneSpec {
        sources,
        duration_s,
        snr_db,
        seed,
        sample_rate: 16000.0,
    }
}

fn constraint_residual() -> Outcome {
    let t0 = Instant::now();
    let g = geom();
    let bins = grid().bins_in(DEFAULT_BAND.0, DEFAULT_BAND.1);
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for look in uniform_looks(8) {
        let c = ConstraintSet::front_back(look);
        for bin in bins.clone() {
            let f = grid().freq(bin);
            let h = design_cddma(&g, &c, f, 0.0).unwrap();
            worst = worst.max(c.residual(&g, f, &h));
            count += 1;
        }
    }
    let secs = t0.elapsed().as_secs_f64();
    outcome(
        worst <= 1e-8 && secs < 5.0,
        format!("max ||Rh - c||inf = {worst:.2e} over {count} (beam, bin) designs in {secs:.2} s (limit 1e-8, 5 s)"),
    )
}

fn front_to_back() -> Outcome {
    let bank = bank8(DEFAULT_LOADING);
    let mut front: f64 = 0.0;
    let mut back: f64 = 0.0;
    for (b, &look) in bank.look_angles().iter().enumerate() {
        for bin in bank.band_bins() {
            let f = grid().freq(bin);
            front = front.max((bank.beampattern(b, f, look).unwrap() - 1.0).norm());
            back = back.max(bank.beampattern(b, f, look + std::f64::consts::PI).unwrap().norm());
        }
    }
    outcome(
        front <= 1e-8 && back <= 1e-8,
        format!("max |B(look) - 1| = {front:.2e}, max |B(look + pi)| = {back:.2e} (limit 1e-8)"),
    )
}

fn monotone_attenuation() -> Outcome {
    let t0 = Instant::now();
    let bank = bank8(DEFAULT_LOADING);
    let stft = Stft::new(StftConfig::default()).unwrap();
    let mut violations = Vec::new();
    for b in 0..8 {
        let az = 45.0 * b as f64;
        let x = synthesize_scene(&scene(vec![speech(az, 140.0, 0.0)], 0.5, None, 100 + b as u64), &geom()).unwrap();
        let stack = multichannel_stft(&x, &stft).unwrap();
        let mut power = [0.0f64; 8];
        for t in 0..stack.num_frames {
            for (j, p) in power.iter_mut().enumerate() {
                let y = bank.apply(stack.frame(t), j).unwrap();
                *p += y.iter().map(|z| z.norm_sqr()).sum::<f64>();
            }
        }
        for i in 0..8 {
            for j in 0..8 {
                let (di, dj) = (angular_distance_deg(az, 45.0 * i as f64), angular_distance_deg(az, 45.0 * j as f64));
                if di < dj && !(power[i] > power[j]) {
                    violations.push(format!("source at beam {b}: P[{i}]={:.3e} <= P[{j}]={:.3e}", power[i], power[j]));
                }
            }
        }
    }
    let secs = t0.elapsed().as_secs_f64();
    outcome(
        violations.is_empty() && secs < 30.0,
        format!(
            "{} ordering violations over 8 source positions in {secs:.1} s (limit 0, 30 s){}",
            violations.len(),
            violations.first().map(|v| format!("; first: {v}")).unwrap_or_default()
        ),
    )
}

fn analyzer() -> SpatialAnalyzer {
    SpatialAnalyzer::new(
        &geom(),
        grid(),
        DEFAULT_BAND,
        DEFAULT_LOADING,
        AngleGrid::default(),
        true,
        DEFAULT_SMOOTHING,
    )
    .unwrap()
}

fn doa_recovery() -> Outcome {
    // Each frame is the middle of its own short scene so the smoothing
    // window sees only that source.
    let t0 = Instant::now();
    let a = analyzer();
    let stft = Stft::new(StftConfig::default()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let n = 200;
    let mut hits = 0;
    for i in 0..n {
        let az: f64 = rng.random_range(0.0..360.0);
        let f0 = rng.random_range(100.0..300.0);
        let x = synthesize_scene(&scene(vec![speech(az, f0, 0.0)], 0.1, Some(20.0), 5000 + i), &geom()).unwrap();
        let spec = a.spectrum(&multichannel_stft(&x, &stft).unwrap()).unwrap();
        let mid = spec.num_frames() / 2;
        if angular_distance_deg(spec.doa_smoothed[mid].to_degrees(), az) <= 3.0 {
            hits += 1;
        }
    }
    let rate = hits as f64 / n as f64;
    let secs = t0.elapsed().as_secs_f64();
    outcome(
        rate >= 0.95 && secs < 60.0,
        format!("{hits}/{n} frames within 3 deg ({:.1}%) in {secs:.1} s (limit 95%, 60 s)", 100.0 * rate),
    )
}

/// Circular local maxima of `p`, largest first.
fn local_maxima(p: &[f64]) -> Vec<usize> {
    let n = p.len();
    let mut peaks: Vec<usize> = (0..n)
        .filter(|&j| p[j] > p[(j + n - 1) % n] && p[j] >= p[(j + 1) % n])
        .collect();
    peaks.sort_by(|&a, &b| p[b].total_cmp(&p[a]));
    peaks
}

/// Fraction of frames whose two largest local maxima lie within 6° of the
/// two source azimuths, over 20 scenes with separations in [60°, 180°].
fn two_source_rate(tone: bool) -> (usize, usize) {
    let a = analyzer();
    let angles = AngleGrid::default();
    let stft = Stft::new(StftConfig::default()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let (mut frames, mut hits) = (0, 0);
    for i in 0..20 {
        let az1: f64 = rng.random_range(0.0..360.0);
        let az2 = (az1 + rng.random_range(60.0..=180.0)) % 360.0;
        let f1 = rng.random_range(100.0..200.0);
        let f2 = f1 * rng.random_range(1.15..1.5);
        let mut src = |az: f64, f0: f64| {
            let mut s = speech(az, f0, rng.random_range(-3.0..0.0));
            if tone {
                s.kind = SourceKind::HarmonicTone { f0, partials: 40 };
            }
            s
        };
        let sources = vec![src(az1, f1), src(az2, f2)];
        let x = synthesize_scene(&scene(sources, 0.25, Some(20.0), 9000 + i), &geom()).unwrap();
        let spec = a.spectrum(&multichannel_stft(&x, &stft).unwrap()).unwrap();
        for t in 0..spec.num_frames() {
            let peaks = local_maxima(spec.frame(t));
            frames += 1;
            if peaks.len() >= 2 {
                let (p, q) = (angles.angle_deg(peaks[0]), angles.angle_deg(peaks[1]));
                let matched = |u: f64, v: f64| angular_distance_deg(u, az1) <= 6.0 && angular_distance_deg(v, az2) <= 6.0;
                if matched(p, q) || matched(q, p) {
                    hits += 1;
                }
            }
        }
    }
    (hits, frames)
}

fn two_source_spectrum() -> Outcome {
    let (hits, frames) = two_source_rate(true);
    let (speech_hits, speech_frames) = two_source_rate(false);
    let rate = hits as f64 / frames as f64;
    outcome(
        rate >= 0.90,
        format!(
            "harmonic sources: two largest local maxima within 6 deg of both azimuths in {hits}/{frames} frames ({:.1}%) (limit 90%); speech-like sources, not gated: {:.1}%",
            100.0 * rate,
            100.0 * speech_hits as f64 / speech_frames as f64
        ),
    )
}

fn srp_brute_force() -> Outcome {
    let g = geom();
    let gr = grid();
    let angles = AngleGrid::default();
    let bank = BeamformerBank::design(&g, &angles.angles(), gr, DEFAULT_BAND, DEFAULT_LOADING).unwrap();
    let band = gr.bins_in(DEFAULT_BAND.0, DEFAULT_BAND.1);
    // Independent designs per (angle, bin).
    let weights: Vec<Vec<Vec<Complex>>> = (0..angles.len())
        .map(|j| {
            let c = ConstraintSet::front_back(angles.angle(j));
            band.clone()
                .map(|k| design_cddma(&g, &c, gr.freq(k), DEFAULT_LOADING).unwrap())
                .collect()
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let m = g.num_mics();
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let frame: Vec<Complex> = (0..gr.num_bins() * m)
            .map(|_| Complex::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        let mut fast = vec![0.0; angles.len()];
        srp_frame(&frame, &bank, true, &mut fast).unwrap();
        for j in 0..angles.len() {
            let mut p = 0.0;
            for (bi, k) in band.clone().enumerate() {
                let mut y = Complex::new(0.0, 0.0);
                for mic in 0..m {
                    let x = frame[k * m + mic];
                    y += weights[j][bi][mic].conj() * (x / x.norm());
                }
                p += y.norm_sqr();
            }
            worst = worst.max((fast[j] - p).abs() / p.abs().max(1e-300));
        }
    }
    outcome(
        worst <= 1e-6,
        format!("max relative difference {worst:.2e} over 20 frames x 120 angles (limit 1e-6)"),
    )
}

fn row(branch: &'static str, stage: Stage, dims: &[usize]) -> TraceRow {
    TraceRow {
        branch,
        stage,
        dims: dims.to_vec(),
    }
}

/// Every stage of every branch, written out from the architecture table.
fn layer_shape_rows(kind: ModelKind, f: usize, l: usize, d: usize) -> Vec<TraceRow> {
    let bt = || {
        vec![
            row("bt", Stage::Input, &[f, l, 8]),
            row("bt", Stage::PreNet, &[d, l / 4, 8]),
            row("bt", Stage::Recombination, &[d, l / 4, 2, 4]),
            row("bt", Stage::Encoders, &[4 * d, l / 2]),
            row("bt", Stage::PostNet, &[d, l / 2]),
        ]
    };
    let spatial = || {
        vec![
            row("spatial", Stage::Input, &[128, l, 1]),
            row("spatial", Stage::PreNet, &[d, l, 1]),
            row("spatial", Stage::Recombination, &[d, l, 1]),
            row("spatial", Stage::Encoders, &[d, l]),
            row("spatial", Stage::PostNet, &[d, l]),
        ]
    };
    match kind {
        ModelKind::Baseline => vec![
            row("baseline", Stage::Input, &[f, l, 1]),
            row("baseline", Stage::PreNet, &[d, l / 4, 1]),
            row("baseline", Stage::Encoders, &[d, l / 4]),
            row("baseline", Stage::PostNet, &[d, l / 4]),
            row("baseline", Stage::MeanPooling, &[d, 1]),
        ],
        ModelKind::BeamTransformer => {
            let mut r = bt();
            r.push(row("bt", Stage::MeanPooling, &[d, 1]));
            r
        }
        ModelKind::SpatialNet => {
            let mut r = spatial();
            r.push(row("spatial", Stage::MeanPooling, &[d, 1]));
            r
        }
        ModelKind::Combined => {
            let mut r = bt();
            r.extend(spatial());
            r.push(row("combined", Stage::Alignment, &[d, l / 2]));
            r.push(row("combined", Stage::Fusion, &[2 * d, l / 2]));
            r.push(row("combined", Stage::MeanPooling, &[2 * d, 1]));
            r
        }
    }
}

fn layer_shapes() -> Outcome {
    let mut checked = 0;
    let mut failures = Vec::new();
    for f in [8, 40, 160] {
        for l in [8, 100, 200] {
            let [beams, spatial, single] = toy_inputs(f, l, (f * 1000 + l) as u64);
            let input = ModelInput {
                beams: Some(&beams),
                spatial: Some(&spatial),
                single: Some(&single),
            };
            for d in [8, 32, 64] {
                for kind in ModelKind::ALL {
                    let cfg = ModelConfig {
                        fbank: f,
                        dim: d,
                        heads: 4,
                        layers: kind.default_layers(),
                        ..ModelConfig::new(kind)
                    };
                    let m = beamosd_core::models::Model::new(cfg).unwrap();
                    let (z, trace) = m.trace::<f32>(&input).unwrap();
                    checked += 1;
                    if !z.is_finite() || trace.rows != layer_shape_rows(kind, f, l, d) {
                        failures.push(format!("{kind} F={f} L={l} D={d}"));
                    }
                }
            }
        }
    }
    outcome(
        failures.is_empty(),
        format!("{}/{checked} (model, F, L, D) traces match every row{}", checked - failures.len(), {
            failures.first().map(|f| format!("; first mismatch {f}")).unwrap_or_default()
        }),
    )
}

fn gradient_checks() -> Outcome {
    let t0 = Instant::now();
    let mut parts = Vec::new();
    let mut pass = true;
    for kind in ModelKind::ALL {
        let cfg = ModelConfig {
            fbank: 8,
            dim: 8,
            heads: 2,
            layers: 1,
            ..ModelConfig::new(kind)
        };
        let gc = GradCheckConfig {
            num_coords: 200,
            seed: 1,
            ..GradCheckConfig::default()
        };
        let rep = gradcheck_model(&cfg, 8, gc).unwrap();
        pass &= rep.coords.len() >= 200 && rep.max_rel_error <= 1e-4;
        parts.push(format!("{kind} {:.1e} ({} coords)", rep.max_rel_error, rep.coords.len()));
    }
    let secs = t0.elapsed().as_secs_f64();
    outcome(
        pass && secs < 120.0,
        format!("max rel error: {} in {secs:.1} s (limit 1e-4, 200 coords, 120 s)", parts.join(", ")),
    )
}

fn metrics_oracle() -> Outcome {
    let preds = [1, 1, 1, 1, 0, 0, 0, 0, 0, 0];
    let labels = [1, 1, 1, 0, 1, 1, 0, 0, 0, 0];
    let m = compute_metrics(&preds, &labels).unwrap();
    let hand = m.confusion == Confusion { tp: 3, fp: 1, tn: 4, fn_: 2 }
        && m.precision == 0.75
        && m.recall == 0.6
        && m.accuracy == 0.7
        && m.fscore == 2.0 * 0.75 * 0.6 / (0.75 + 0.6);
    let all = compute_metrics(&labels, &labels).unwrap();
    let perfect = (all.accuracy, all.precision, all.recall, all.fscore) == (1.0, 1.0, 1.0, 1.0);
    let f = fscore(0.754, 0.746);
    let rounded = (f * 1000.0).round() / 1000.0 == 0.750;
    outcome(
        hand && perfect && rounded,
        format!("hand matrix exact: {hand}, all-correct: {perfect}, F(0.754, 0.746) = {f:.5} -> {:.3}", f),
    )
}

fn end_to_end() -> Outcome {
    let t0 = Instant::now();
    let workers = Workers::from_env(false).unwrap();
    let data = DatasetConfig {
        num_segments: 2000,
        overlap_fraction: 0.4,
        seconds: 1.0,
        seed: 7,
        ..DatasetConfig::default()
    };
    let plans = plan_dataset(&data).unwrap();
    let extractor = FeatureExtractor::new(FeatureConfig::default(), geom()).unwrap();
    let kinds = [FeatureKind::Beams, FeatureKind::Spatial, FeatureKind::Single];
    let examples = examples_from_plans(&plans, &geom(), &extractor, &kinds, workers).unwrap();
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (p, ex) in plans.iter().zip(examples) {
        match p.split {
            Split::Train => train.push(ex),
            Split::Test => test.push(ex),
        }
    }
    let feature_secs = t0.elapsed().as_secs_f64();
    println!("    end_to_end: {} train / {} test segments, features in {feature_secs:.0} s", train.len(), test.len());

    let labels: Vec<u8> = test.iter().map(|e| e.label).collect();
    let mut acc = std::collections::BTreeMap::new();
    for kind in [ModelKind::Baseline, ModelKind::BeamTransformer, ModelKind::SpatialNet, ModelKind::Combined] {
        let t = Instant::now();
        let run = TrainRun {
            model: ModelConfig {
                fbank: 40,
                dim: 16,
                heads: 2,
                layers: if kind == ModelKind::Baseline { 6 } else { 1 },
                seed: 11,
                ..ModelConfig::new(kind)
            },
            train: TrainConfig {
                adam: AdamConfig::default(),
                batch_size: 16,
                epochs: 10,
                seed: 11,
            },
            eval_split: None,
        };
        let (det, logs) = train_in_memory(&run, &train, None, |_, _| Ok(())).unwrap();
        let z = logits(&det, &test, workers).unwrap();
        let m = metrics_from_logits(&z, &labels, 0.5).unwrap();
        println!(
            "    end_to_end: {kind:9} loss {:.4} -> {:.4}  test A {:.3} P {:.3} R {:.3} F {:.3}  ({:.0} s)",
            logs[0].train_loss,
            logs.last().unwrap().train_loss,
            m.accuracy,
            m.precision,
            m.recall,
            m.fscore,
            t.elapsed().as_secs_f64()
        );
        acc.insert(kind.as_str(), m.accuracy);
    }
    let (base, bt, sp, comb) = (acc["baseline"], acc["bt"], acc["spatial"], acc["combined"]);
    let best_single = base.max(bt).max(sp);
    let trend = if base < bt && bt < comb { "holds" } else { "does not hold" };
    println!("    end_to_end: trend baseline < bt < combined {trend} ({base:.3}, {bt:.3}, {comb:.3})");
    let secs = t0.elapsed().as_secs_f64();
    outcome(
        sp >= 0.95 && bt >= 0.85 && comb >= best_single - 0.02 && secs <= 900.0,
        format!(
            "spatial {sp:.3} (>= 0.95), bt {bt:.3} (>= 0.85), combined {comb:.3} (>= {:.3}), {secs:.0} s (<= 900 s)",
            best_single - 0.02
        ),
    )
}

fn read_tree(dir: &std::path::Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                out.push((rel, std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let data = DatasetConfig {
        num_segments: 24,
        seed: 5,
        ..DatasetConfig::default()
    };
    let run = TrainRun {
        model: ModelConfig {
            dim: 8,
            heads: 2,
            layers: 1,
            seed: 3,
            ..ModelConfig::new(ModelKind::Combined)
        },
        train: TrainConfig {
            epochs: 2,
            batch_size: 4,
            seed: 3,
            ..TrainConfig::default()
        },
        eval_split: Some(SplitFilter::Test),
    };
    let serial = Workers::serial();
    let mut trees = Vec::new();
    let mut reports = Vec::new();
    for rep in 0..2 {
        let root = tmp.path().join(format!("rep{rep}"));
        simulate_to_dir(&data, &geom(), &root.join("data"), serial).unwrap();
        let manifest = Manifest::load(root.join("data")).unwrap();
        run_train(&manifest, &run, &root.join("run"), serial).unwrap();
        let det = load_detector(&root.join("run").join(CHECKPOINT_FILE), None).unwrap();
        reports.push(run_eval(&manifest, &det, SplitFilter::Test, 0.5, serial).unwrap().to_json());
        trees.push(read_tree(&root));
    }
    let files = trees[0].len();
    let same_tree = trees[0] == trees[1];
    let same_report = reports[0] == reports[1];
    outcome(
        same_tree && same_report && files == 24 + 1 + 2 + 1 + 1 + 1,
        format!("{files} files (WAVs, manifest, checkpoints, log, model file) bit-identical: {same_tree}; reports identical: {same_report}"),
    )
}

fn main() {
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("constraint_residual", constraint_residual),
        ("front_to_back", front_to_back),
        ("monotone_attenuation", monotone_attenuation),
        ("doa_recovery", doa_recovery),
        ("two_source_spectrum", two_source_spectrum),
        ("srp_brute_force", srp_brute_force),
        ("layer_shapes", layer_shapes),
        ("gradient_checks", gradient_checks),
        ("metrics_oracle", metrics_oracle),
        ("end_to_end", end_to_end),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        if !filters.is_empty() && !filters.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let t0 = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(check));
        let elapsed = Duration::as_secs_f64(&t0.elapsed());
        let (pass, detail) = match result {
            Ok(o) => (o.pass, o.detail),
            Err(e) => {
                let msg = e
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default();
                (false, format!("panicked: {msg}"))
            }
        };
        failed += !pass as usize;
        println!("{} {name}: {detail} [{elapsed:.1} s]", if pass { "PASS" } else { "FAIL" });
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
