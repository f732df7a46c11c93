use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};
use oratorio_core::attention::{frame_ratios, read_gaze_csv};
use oratorio_core::classifier::train_forest;
use oratorio_core::discovery::{build_library, default_gesture_names, kmeans};
use oratorio_core::phrase::segment;
use oratorio_core::pose::{
    normalize_sequence, parse_keypoints, pose_vector, select_reference, write_keypoints,
    ReferenceSelection,
};
use oratorio_core::scheduler::{
    align_transcript, build_script, modulation_trace, simulate_session, TimedTranscript,
    TraceSample,
};
use oratorio_core::stats::{one_way_anova, summarize, ScoreTable};
use oratorio_core::{
    Audio, CameraGeometry, GazeFrame, GestureLibrary, GestureModel, Mode, PerformanceScript,
    PhraseSegments, PipelineConfig, SegmenterConfig, TrainingCorpus,
};
use serde::Serialize;

use crate::{Cli, Command};

pub fn run(cli: Cli) -> Result<()> {
    let cfg = match &cli.pipeline {
        Some(path) => PipelineConfig::from_json(&read(path)?)
            .with_context(|| format!("pipeline config {}", path.display()))?,
        None => PipelineConfig::default(),
    }
    .with_env_seed()?;

    match cli.command {
        Command::Normalize(a) => {
            let set = parse_keypoints(&read(&a.keypoints)?)?;
            let selection: ReferenceSelection = a.reference.parse()?;
            let reference = select_reference(&set.frames, selection)?;
            let out = normalize_sequence(&set.frames, &reference)?;
            let dropped = set.dropped + out.dropped;
            if dropped > 0 {
                eprintln!("dropped {dropped} frame(s) without a usable head");
            }
            write_atomic(&a.out, write_keypoints(&out.frames)?.as_bytes())
        }
        Command::Discover(a) => {
            let mut km = cfg.kmeans;
            km.k = a.k.unwrap_or(km.k);
            km.eps = a.eps.unwrap_or(km.eps);
            km.max_iter = a.max_iter.unwrap_or(km.max_iter);
            if let Some(seed) = a.seed {
                km.seed = seed;
            }
            km.validate()?;
            let names = if a.names == "default" {
                default_gesture_names()
            } else {
                serde_json::from_slice::<Vec<String>>(&read(Path::new(&a.names))?)
                    .with_context(|| format!("gesture names {}", a.names))?
            };
            let set = parse_keypoints(&read(&a.keypoints)?)?;
            let mut vectors = Vec::with_capacity(set.frames.len());
            let mut ids = Vec::with_capacity(set.frames.len());
            for frame in &set.frames {
                match pose_vector(frame, &cfg.joints) {
                    Ok(v) => {
                        vectors.push(v);
                        ids.push(frame.frame_id);
                    }
                    Err(e) => eprintln!("skipping frame {}: {e}", frame.frame_id),
                }
            }
            let clustering = kmeans(&vectors, &km)?;
            eprintln!(
                "k-means converged in {} iteration(s), inertia {:.6}",
                clustering.iterations, clustering.inertia
            );
            let library = build_library(&clustering, &vectors, &ids, &names)?;
            write_atomic(&a.out, library.to_json()?.as_bytes())
        }
        Command::Segment(a) => {
            let seg_cfg = if a.config == "default" {
                cfg.segmenter.clone()
            } else {
                SegmenterConfig::from_json(&read(Path::new(&a.config))?)
                    .with_context(|| format!("segmenter config {}", a.config))?
            };
            let audio =
                Audio::read_wav(fs::File::open(&a.audio).with_context(|| open_msg(&a.audio))?)
                    .with_context(|| format!("audio {}", a.audio.display()))?;
            let segs = segment(&audio, &seg_cfg)?;
            write_atomic(&a.out, segs.to_json()?.as_bytes())
        }
        Command::Train(a) => {
            let corpus = TrainingCorpus::from_json(&read(&a.corpus)?)?;
            let trees = a.trees.unwrap_or(cfg.forest.trees);
            let seed = a.seed.unwrap_or(cfg.forest.seed);
            let model = train_forest(&corpus, trees, seed)?;
            write_atomic(&a.out, model.to_json()?.as_bytes())
        }
        Command::Predict(a) => {
            let model = GestureModel::from_json(&read(&a.model)?)?;
            println!("{}", model.predict(&a.text));
            Ok(())
        }
        Command::Script(a) => {
            let segs = PhraseSegments::from_json(&read(&a.phrases)?)?;
            let transcript = TimedTranscript::from_json(&read(&a.transcript)?)?;
            let library = GestureLibrary::from_json(&read(&a.library)?)?;
            let model = match &a.model {
                Some(p) => Some(GestureModel::from_json(&read(p)?)?),
                None => None,
            };
            let mode = match a.mode {
                Some(m) => Mode::try_from(m)?,
                None => cfg.mode,
            };
            let aligned = align_transcript(&segs, &transcript)?;
            let script = build_script(
                &aligned,
                model.as_ref(),
                &library,
                mode,
                segs.audio_duration,
            )?;
            write_atomic(&a.out, script.to_json()?.as_bytes())
        }
        Command::Simulate(a) => {
            let script = PerformanceScript::from_json(&read(&a.script)?)?;
            let geom = geometry(a.geometry.as_deref(), &cfg)?;
            let frames = gaze(&a.gaze)?;
            let trace = simulate_session(&script, &frames, &geom)?;
            write_atomic(&a.out, trace.to_json()?.as_bytes())
        }
        Command::Attend(a) => {
            let geom = geometry(a.geometry.as_deref(), &cfg)?;
            let frames = gaze(&a.gaze)?;
            let report = AttentionReport {
                ratios: frame_ratios(&frames, &geom),
                trace: modulation_trace(&frames, &geom, true)?,
            };
            write_atomic(&a.out, serde_json::to_string_pretty(&report)?.as_bytes())
        }
        Command::Anova(a) => {
            let table = ScoreTable::read_csv(
                fs::File::open(&a.scores).with_context(|| open_msg(&a.scores))?,
            )?;
            let result = one_way_anova(&table)?;
            let mut out = std::io::stdout().lock();
            if result.infinite_f {
                writeln!(out, "F = inf (zero within-group variance)")?;
            } else {
                writeln!(out, "F = {:.6}", result.f_stat)?;
            }
            writeln!(out, "df = ({}, {})", result.df_between, result.df_within)?;
            writeln!(out, "p = {:.6e}", result.p_value)?;
            for (id, scores) in &table.groups {
                writeln!(out, "behaviour {id}: {}", summarize(scores)?)?;
            }
            Ok(())
        }
    }
}

#[derive(Serialize)]
struct AttentionReport {
    ratios: Vec<(f64, f64)>,
    trace: Vec<TraceSample>,
}

fn open_msg(path: &Path) -> String {
    format!("cannot open {}", path.display())
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).with_context(|| open_msg(path))
}

fn geometry(arg: Option<&str>, cfg: &PipelineConfig) -> Result<CameraGeometry> {
    match arg {
        None | Some("default") => Ok(cfg.geometry),
        Some(path) => CameraGeometry::from_json(&read(Path::new(path))?)
            .with_context(|| format!("camera geometry {path}")),
    }
}

fn gaze(path: &Path) -> Result<Vec<GazeFrame>> {
    read_gaze_csv(fs::File::open(path).with_context(|| open_msg(path))?)
        .with_context(|| format!("gaze log {}", path.display()))
}

/// Writes next to the destination and renames, so a failed run leaves no partial file.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)
        .with_context(|| format!("cannot create a temporary file in {}", dir.display()))?;
    tmp.write_all(bytes)?;
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        tmp.as_file()
            .set_permissions(fs::Permissions::from_mode(0o644))?;
    }
    tmp.as_file().sync_all()?;
    tmp.persist(path)
        .with_context(|| format!("cannot write {}", path.display()))?;
    Ok(())
}
