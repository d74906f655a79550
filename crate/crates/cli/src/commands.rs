use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use structgen_core::analysis::{analyze_sample, write_chroma_csv, write_ir_csv, write_patterns_csv};
use structgen_core::encoding::{
    decode_frames, quantize_score, read_frames_csv, transpose_augment, write_frames_csv, FrameSequence, HOLD, REST,
};
use structgen_core::ingest::{normalize_tempo, parse_score_text, parse_smf, render_score_text, to_symbolic_score, write_smf};
use structgen_core::lstm::LstmModelConfig;
use structgen_core::numerics::{grad_check, GradCheckConfig};
use structgen_core::stats::{evaluate_models, read_ratings_csv, write_report_csv, write_summary_csv, TVariant, SCALE};
use structgen_core::tcn::TcnConfig;
use structgen_core::training::{
    evaluate_xent, generate_continuation, split_corpus, train as fit, transposed_id, write_loss_csv, GenerationTask,
    ModelConfig, ModelKind, Network, Song, TrainError,
};
use structgen_core::SymbolicScore;

use crate::config::{IngestSettings, InputFormat};
use crate::run::{CheckFailed, Run};
use crate::svg;

const SCORE_EXTENSIONS: [&str; 6] = ["txt", "score", "mid", "midi", "smf", "csv"];

fn resolve_format(path: &Path, format: InputFormat) -> InputFormat {
    if format != InputFormat::Auto {
        return format;
    }
    match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
        Some("mid" | "midi" | "smf") => InputFormat::Smf,
        Some("csv") => InputFormat::Frames,
        _ => InputFormat::Text,
    }
}

fn read_score(path: &Path, s: &IngestSettings) -> anyhow::Result<SymbolicScore> {
    Ok(match resolve_format(path, s.format) {
        InputFormat::Smf => {
            let bytes = fs::read(path)?;
            let raw = parse_smf(&bytes)?;
            // A single-track file carries the melody alone.
            let (melody, chords) = if raw.tracks.len() == 1 {
                (0, None)
            } else {
                (s.melody_track, s.chord_track.filter(|&c| c < raw.tracks.len()))
            };
            normalize_tempo(to_symbolic_score(&raw, melody, chords)?)
        }
        InputFormat::Frames => decode_frames(&read_frames(path)?),
        InputFormat::Text | InputFormat::Auto => normalize_tempo(parse_score_text(&fs::read_to_string(path)?)?),
    })
}

fn read_frames(path: &Path) -> anyhow::Result<FrameSequence> {
    let f = fs::File::open(path)?;
    Ok(read_frames_csv(f)?)
}

/// Frames of any supported input, quantizing scores.
fn read_any_frames(path: &Path, s: &IngestSettings) -> anyhow::Result<FrameSequence> {
    if resolve_format(path, s.format) == InputFormat::Frames {
        return read_frames(path).with_context(|| path.display().to_string());
    }
    let score = read_score(path, s).with_context(|| path.display().to_string())?;
    Ok(quantize_score(&score)?.frames)
}

fn frames_csv(frames: &FrameSequence) -> anyhow::Result<Vec<u8>> {
    let mut buf = Vec::new();
    write_frames_csv(&mut buf, frames)?;
    Ok(buf)
}

/// Files named directly plus the score-like files of named directories, in
/// sorted order per directory.
fn expand_inputs(inputs: &[PathBuf]) -> anyhow::Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for p in inputs {
        if p.is_dir() {
            let mut found: Vec<PathBuf> = fs::read_dir(p)
                .with_context(|| format!("listing {}", p.display()))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| {
                    f.is_file()
                        && f.extension()
                            .and_then(|e| e.to_str())
                            .is_some_and(|e| SCORE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
                })
                .collect();
            found.sort();
            files.extend(found);
        } else {
            files.push(p.clone());
        }
    }
    Ok(files)
}

fn stem(path: &Path) -> String {
    path.file_stem().and_then(|s| s.to_str()).unwrap_or("song").replace(|c: char| c.is_whitespace() || c == ',', "_")
}

pub fn ingest(run: &mut Run) -> anyhow::Result<()> {
    let s = run.cfg.ingest.clone();
    if s.inputs.is_empty() {
        bail!("ingest needs at least one input file or directory");
    }
    let files = expand_inputs(&s.inputs)?;
    if files.is_empty() {
        bail!("no score files found");
    }
    let corpus = run.path("corpus");
    fs::create_dir_all(&corpus)?;

    let mut manifest = csv::Writer::from_writer(Vec::new());
    manifest.write_record(["file", "song_id", "status", "frames", "warnings", "message"])?;
    let mut used = BTreeSet::new();
    let (mut songs, mut written, mut frames_total, mut warnings, mut errors) = (0usize, 0usize, 0usize, 0usize, 0usize);
    for file in &files {
        let name = file.display().to_string();
        let mut id = stem(file);
        let mut k = 2;
        while used.contains(&id) {
            id = format!("{}_{k}", stem(file));
            k += 1;
        }
        let loaded = read_score(file, &s).and_then(|score| Ok(quantize_score(&score)?));
        match loaded {
            Ok(q) => {
                used.insert(id.clone());
                let outputs = if s.augment {
                    transpose_augment(&q.frames).into_iter().enumerate().map(|(t, f)| (transposed_id(&id, t as u8), f)).collect()
                } else {
                    vec![(id.clone(), q.frames.clone())]
                };
                for (song_id, frames) in &outputs {
                    fs::write(corpus.join(format!("{song_id}.csv")), frames_csv(frames)?)?;
                }
                let message = q.warnings.iter().map(|w| format!("{w:?}")).collect::<Vec<_>>().join("; ");
                manifest.write_record([&name, &id, "ok", &q.frames.len().to_string(), &q.warnings.len().to_string(), &message])?;
                songs += 1;
                written += outputs.len();
                frames_total += q.frames.len();
                warnings += q.warnings.len();
            }
            Err(e) => {
                run.warn(format!("skipping {name}: {e:#}"));
                manifest.write_record([&name, "", "error", "0", "0", &format!("{e:#}")])?;
                errors += 1;
            }
        }
    }
    run.write("manifest.csv", manifest.into_inner().map_err(|e| anyhow!("{e}"))?)?;
    run.info(format!(
        "{songs} songs, {written} frame files, {frames_total} frames, {warnings} quantization warnings, {errors} errors"
    ));
    if songs == 0 {
        bail!("none of the {} inputs could be read", files.len());
    }
    if errors > 0 {
        run.warn(format!("{errors} of {} inputs failed; see manifest.csv", files.len()));
    }
    Ok(())
}

fn load_corpus(dir: &Path) -> anyhow::Result<Vec<Song>> {
    let dir = if dir.join("corpus").is_dir() { dir.join("corpus") } else { dir.to_path_buf() };
    let mut paths: Vec<PathBuf> = fs::read_dir(&dir)
        .with_context(|| format!("listing corpus {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "csv") && p.file_name().is_some_and(|n| n != "manifest.csv"))
        .collect();
    paths.sort();
    paths
        .iter()
        .map(|p| Ok(Song::new(stem(p), read_frames(p).with_context(|| p.display().to_string())?)))
        .collect()
}

fn train_error(e: TrainError) -> anyhow::Error {
    match e {
        TrainError::Diverged { .. } => CheckFailed(e.to_string()).into(),
        other => other.into(),
    }
}

pub fn train(run: &mut Run) -> anyhow::Result<()> {
    let s = run.cfg.train.clone();
    let seed = run.cfg.seed;
    let corpus = s.corpus.clone().ok_or_else(|| anyhow!("train needs a corpus directory"))?;
    let songs = load_corpus(&corpus)?;
    let split = split_corpus(&songs, s.size(), seed, s.augment)?;
    run.info(format!("{} training songs, {} held out", split.train.len(), split.held_out.len()));

    let mut split_csv = csv::Writer::from_writer(Vec::new());
    split_csv.write_record(["song_id", "role"])?;
    for (role, set) in [("train", &split.train), ("held_out", &split.held_out)] {
        for song in set {
            split_csv.write_record([song.id.as_str(), role])?;
        }
    }
    run.write("split.csv", split_csv.into_inner().map_err(|e| anyhow!("{e}"))?)?;

    let model_cfg = run.cfg.model.to_model_config()?;
    let mut net = Network::new(model_cfg, seed)?;
    let initial = evaluate_xent(&net, split.train_frames())?;
    run.info(format!("{} model, untrained loss {initial:.4} nats/frame", net.kind()));

    let report = fit(&mut net, &split, &s.to_train_config(seed)).map_err(train_error)?;
    let mut loss = Vec::new();
    write_loss_csv(&mut loss, &report.curve)?;
    run.write("loss.csv", loss)?;
    net.save(&run.path("model.ckpt"))?;
    let last = report.curve.last().map_or(initial, |e| e.train_nats);
    let best = match report.best_epoch {
        Some(e) => format!("epoch {e}"),
        None => "initial parameters".into(),
    };
    run.info(format!("{} steps, final train loss {last:.4}, kept {best}", report.steps));
    Ok(())
}

pub fn generate(run: &mut Run) -> anyhow::Result<()> {
    let s = run.cfg.generate.clone();
    let ckpt = s.checkpoint.clone().ok_or_else(|| anyhow!("generate needs a checkpoint"))?;
    let prime_path = s.prime.clone().ok_or_else(|| anyhow!("generate needs a prime score"))?;
    let net = Network::load(&ckpt)?;
    let prime = read_any_frames(&prime_path, &run.cfg.ingest)?;
    let task = GenerationTask {
        prime_beats: s.prime_beats,
        generate_beats: s.generate_beats,
        temperature: s.temperature,
        seed: run.cfg.seed,
    };
    let out = generate_continuation(&net, &prime, prime.chords(), &task)?;
    run.write("continuation.csv", frames_csv(&out)?)?;
    let score = normalize_tempo(decode_frames(&out));
    run.write("continuation.txt", render_score_text(&score))?;
    if s.smf {
        run.write("continuation.mid", write_smf(&score))?;
    }
    let notes = score.melody.iter().filter(|n| n.onset >= task.prime_frames() as u64).count();
    run.info(format!(
        "{} model, {} prime frames, {} generated frames, {notes} new notes at temperature {}",
        net.kind(),
        task.prime_frames(),
        out.len() - task.prime_frames(),
        task.temperature
    ));
    Ok(())
}

pub fn analyze(run: &mut Run) -> anyhow::Result<()> {
    let s = run.cfg.analyze.clone();
    let input = s.input.clone().ok_or_else(|| anyhow!("analyze needs an input score"))?;
    let score = read_score(&input, &run.cfg.ingest).with_context(|| input.display().to_string())?;
    let a = analyze_sample(&score, &s.to_analysis_config(run.cfg.jobs))?;

    let mut buf = Vec::new();
    write_ir_csv(&mut buf, &a.ir)?;
    run.write("ir.csv", buf)?;
    let mut buf = Vec::new();
    write_patterns_csv(&mut buf, &a.patterns)?;
    run.write("patterns.csv", buf)?;
    let mut buf = Vec::new();
    write_chroma_csv(&mut buf, &a.chroma)?;
    run.write("chroma.csv", buf)?;

    run.write("ir.svg", svg::line_plot("Information rate", "theta", "IR", &a.ir.thetas, &a.ir.ir_totals, Some(a.ir.best_theta)))?;
    let rows: Vec<(usize, Vec<(usize, usize)>)> = a.patterns.motifs.iter().map(|m| (m.len, m.spans().collect())).collect();
    run.write("motifs.svg", svg::motif_timeline("Motifs", a.chroma.len(), &rows))?;
    run.info(format!(
        "{} beats, theta {:.4} of {} candidates, {} motifs covering {} beats",
        a.chroma.len(),
        a.ir.best_theta,
        a.ir.thetas.len(),
        a.patterns.motifs.len(),
        a.patterns.covered_frames()
    ));
    Ok(())
}

pub fn evaluate(run: &mut Run) -> anyhow::Result<()> {
    let s = run.cfg.evaluate.clone();
    let path = s.ratings.clone().ok_or_else(|| anyhow!("evaluate needs a ratings CSV"))?;
    let table = read_ratings_csv(fs::File::open(&path).with_context(|| path.display().to_string())?)?;
    table.check_scale(SCALE.0, SCALE.1)?;
    let variant = if s.welch { TVariant::Welch } else { TVariant::Pooled };
    let report = evaluate_models(&table, variant)?;

    let mut buf = Vec::new();
    write_report_csv(&mut buf, &report)?;
    run.write("report.csv", buf)?;
    let mut buf = Vec::new();
    write_summary_csv(&mut buf, &report.groups)?;
    run.write("summary.csv", buf)?;
    let bars: Vec<(String, f64, f64)> = report.groups.iter().map(|g| (g.name.clone(), g.mean, g.mse)).collect();
    run.write("ratings.svg", svg::bar_chart("Mean rating", "rating", &bars, SCALE.1))?;

    run.info(format!(
        "ANOVA F({}, {}) = {:.4}, p = {:.4e}",
        report.anova.df.0,
        report.anova.df.1.unwrap_or(f64::NAN),
        report.anova.statistic,
        report.anova.p_value
    ));
    for (i, j, t) in report.pairs.clone() {
        run.info(format!(
            "{} vs {}: t({:.2}) = {:.4}, p = {:.4e}",
            report.groups[i].name, report.groups[j].name, t.df.0, t.statistic, t.p_value
        ));
    }
    Ok(())
}

/// Smallest configurations that still exercise every parameter.
fn tiny_config(kind: ModelKind) -> ModelConfig {
    match kind {
        ModelKind::Uni | ModelKind::Bi => ModelConfig::Lstm(LstmModelConfig {
            layers: 2,
            hidden: 4,
            bidirectional_context: kind == ModelKind::Bi,
            context_hidden: 3,
        }),
        ModelKind::Tcn => ModelConfig::Tcn(TcnConfig {
            kernel: 2,
            dilations: vec![1, 2],
            residual_channels: 4,
            skip_channels: 4,
            ..TcnConfig::default()
        }),
    }
}

fn random_frames(rng: &mut ChaCha8Rng, t: usize) -> anyhow::Result<FrameSequence> {
    let mut melody: Vec<u8> = Vec::with_capacity(t);
    for i in 0..t {
        let r: f64 = rng.random();
        let label = if r < 0.3 && i > 0 && melody[i - 1] != REST {
            HOLD
        } else if r < 0.45 {
            REST
        } else {
            rng.random_range(55..80)
        };
        melody.push(label);
    }
    let chords = (0..t).map(|_| rng.random_range(0..25)).collect();
    Ok(FrameSequence::new(melody, chords)?)
}

pub fn gradcheck(run: &mut Run) -> anyhow::Result<()> {
    let s = run.cfg.gradcheck.clone();
    let seed = run.cfg.seed;
    let kinds: Vec<ModelKind> = if s.models.is_empty() {
        ModelKind::ALL.to_vec()
    } else {
        s.models.iter().map(|m| m.parse::<ModelKind>()).collect::<Result<_, _>>()?
    };
    if s.frames < 2 {
        bail!("gradcheck needs at least 2 frames");
    }
    let gc = GradCheckConfig {
        epsilon: s.epsilon,
        tolerance: s.tolerance,
        coords_per_param: s.coords_per_param,
        seed,
        ..GradCheckConfig::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = csv::Writer::from_writer(Vec::new());
    out.write_record(["model", "param", "index", "analytic", "numeric", "relative_error", "coords", "passed"])?;
    let mut failed = Vec::new();
    for kind in kinds {
        let mut net = Network::new(tiny_config(kind), seed)?;
        let frames = random_frames(&mut rng, s.frames)?;
        if kind == ModelKind::Tcn {
            // Positive biases keep ReLU kinks away from the probed point.
            for name in ["head.1.b", "in.b"] {
                if let Some(id) = net.store().id(name) {
                    let store = net.store_mut();
                    store.value_mut(id).data_mut().iter_mut().for_each(|v| *v = rng.random_range(0.05..0.3));
                }
            }
        }
        let example = net.example(&frames);
        net.store_mut().zero_grads();
        net.example_loss_and_grad(&example)?;
        let mut store = net.store().clone();
        let report = grad_check(&mut store, |p| net.example_loss_with(p, &example).unwrap_or(f64::NAN), &gc);
        for p in &report.params {
            out.write_record([
                kind.as_str().to_string(),
                p.name.clone(),
                p.index.to_string(),
                format!("{:e}", p.analytic),
                format!("{:e}", p.numeric),
                format!("{:e}", p.relative_error),
                p.coords_checked.to_string(),
                p.passed.to_string(),
            ])?;
        }
        let worst = report.worst().map_or(0.0, |w| w.relative_error);
        let bad: Vec<String> = report.failures().map(|p| p.name.clone()).collect();
        run.info(format!(
            "{kind}: {} parameters, worst relative error {worst:.3e}, {}",
            report.params.len(),
            if bad.is_empty() { "pass".to_string() } else { format!("FAIL {}", bad.join(",")) }
        ));
        if !bad.is_empty() {
            failed.push(kind.to_string());
        }
    }
    run.write("gradcheck.csv", out.into_inner().map_err(|e| anyhow!("{e}"))?)?;
    if !failed.is_empty() {
        return Err(CheckFailed(format!("gradient check failed for {}", failed.join(", "))).into());
    }
    Ok(())
}
