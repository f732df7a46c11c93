//! Performance scripts: phrase text alignment, per-mode gesture scheduling
//! and replay against gaze logs.

use serde::{Deserialize, Serialize};

use crate::attention::{
    controller_step, frame_ratios, CameraGeometry, GazeFrame, ModulationState, DEFAULT_CAP_PERCENT,
};
use crate::classifier::GestureModel;
use crate::discovery::GestureLibrary;
use crate::error::{parse_json, Error, Result};
use crate::phrase::PhraseSegments;

/// Length of a playback window in mode 2.
pub const WINDOW_SECONDS: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimedWord {
    pub w: String,
    pub start_s: f64,
    pub end_s: f64,
}

impl TimedWord {
    fn midpoint(&self) -> f64 {
        (self.start_s + self.end_s) / 2.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimedTranscript {
    pub words: Vec<TimedWord>,
}

impl TimedTranscript {
    pub fn from_json(raw: &[u8]) -> Result<Self> {
        let t: TimedTranscript = parse_json(raw)?;
        t.check()?;
        Ok(t)
    }

    pub fn check(&self) -> Result<()> {
        for (i, w) in self.words.iter().enumerate() {
            if !(w.start_s < w.end_s) {
                return Err(Error::InvalidRecord(format!(
                    "word {i} `{}` has start >= end",
                    w.w
                )));
            }
            if i > 0 && self.words[i - 1].end_s > w.start_s {
                return Err(Error::InvalidRecord(format!(
                    "word {i} `{}` overlaps its predecessor",
                    w.w
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlignedPhrase {
    pub open_s: f64,
    pub close_s: f64,
    pub text: String,
}

fn distance_to(interval: (f64, f64), t: f64) -> f64 {
    if t < interval.0 {
        interval.0 - t
    } else if t > interval.1 {
        t - interval.1
    } else {
        0.0
    }
}

/// Assigns each word to the phrase containing its midpoint, or the nearest
/// phrase (earlier on ties) when none contains it.
pub fn align_transcript(
    segments: &PhraseSegments,
    transcript: &TimedTranscript,
) -> Result<Vec<AlignedPhrase>> {
    if segments.phrases.is_empty() {
        return Err(Error::EmptyInput("no phrases to align".into()));
    }
    if transcript.words.is_empty() {
        return Err(Error::EmptyInput("transcript has no words".into()));
    }
    let mut buckets: Vec<Vec<&str>> = vec![Vec::new(); segments.phrases.len()];
    for word in &transcript.words {
        let mid = word.midpoint();
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, &p) in segments.phrases.iter().enumerate() {
            let d = distance_to(p, mid);
            if d < best_d {
                best = i;
                best_d = d;
            }
        }
        buckets[best].push(&word.w);
    }
    Ok(segments
        .phrases
        .iter()
        .zip(buckets)
        .map(|(&(open_s, close_s), words)| AlignedPhrase {
            open_s,
            close_s,
            text: words.join(" "),
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Mode {
    /// Speech only.
    Plain = 1,
    /// One gesture per fixed 10 s window.
    Windowed = 2,
    /// One gesture per phrase.
    Phrase = 3,
    /// One gesture per phrase with attention-driven pitch and volume.
    Modulated = 4,
}

impl TryFrom<u8> for Mode {
    type Error = Error;

    fn try_from(v: u8) -> Result<Self> {
        match v {
            1 => Ok(Mode::Plain),
            2 => Ok(Mode::Windowed),
            3 => Ok(Mode::Phrase),
            4 => Ok(Mode::Modulated),
            other => Err(Error::InvalidMode(other)),
        }
    }
}

impl From<Mode> for u8 {
    fn from(m: Mode) -> u8 {
        m as u8
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptEvent {
    pub start_s: f64,
    pub end_s: f64,
    pub text: String,
    pub gesture: Option<String>,
    /// `None` until a session simulation fills in modulated scales.
    pub pitch_scale: Option<f64>,
    pub volume_scale: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerformanceScript {
    pub mode: Mode,
    /// Gesture names the script may use.
    pub library: Vec<String>,
    pub events: Vec<ScriptEvent>,
}

impl PerformanceScript {
    pub fn from_json(raw: &[u8]) -> Result<Self> {
        parse_json(raw)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn predict_in(model: &GestureModel, library: &GestureLibrary, text: &str) -> Result<String> {
    let g = model.predict(text);
    if library.contains(g) {
        Ok(g.to_string())
    } else {
        Err(Error::UnknownGesture(g.to_string()))
    }
}

/// Builds the timed script for one behaviour mode.
pub fn build_script(
    phrases: &[AlignedPhrase],
    model: Option<&GestureModel>,
    library: &GestureLibrary,
    mode: Mode,
    audio_duration: f64,
) -> Result<PerformanceScript> {
    let need_model =
        || model.ok_or_else(|| Error::Config(format!("mode {} needs a trained model", mode as u8)));
    let base = Some(1.0);
    let events = match mode {
        Mode::Plain => phrases
            .iter()
            .map(|p| ScriptEvent {
                start_s: p.open_s,
                end_s: p.close_s,
                text: p.text.clone(),
                gesture: None,
                pitch_scale: base,
                volume_scale: base,
            })
            .collect(),
        Mode::Phrase | Mode::Modulated => {
            let model = need_model()?;
            let scale = if mode == Mode::Phrase { base } else { None };
            phrases
                .iter()
                .map(|p| {
                    Ok(ScriptEvent {
                        start_s: p.open_s,
                        end_s: p.close_s,
                        text: p.text.clone(),
                        gesture: Some(predict_in(model, library, &p.text)?),
                        pitch_scale: scale,
                        volume_scale: scale,
                    })
                })
                .collect::<Result<Vec<_>>>()?
        }
        Mode::Windowed => {
            let model = need_model()?;
            if !(audio_duration > 0.0 && audio_duration.is_finite()) {
                return Err(Error::Config(format!(
                    "audio duration must be positive, got {audio_duration}"
                )));
            }
            let windows = (audio_duration / WINDOW_SECONDS).ceil() as usize;
            (0..windows)
                .map(|k| {
                    let start = k as f64 * WINDOW_SECONDS;
                    let end = ((k + 1) as f64 * WINDOW_SECONDS).min(audio_duration);
                    let text = phrases
                        .iter()
                        .filter(|p| p.open_s < end && p.close_s > start)
                        .map(|p| p.text.as_str())
                        .filter(|t| !t.is_empty())
                        .collect::<Vec<_>>()
                        .join(" ");
                    Ok(ScriptEvent {
                        start_s: start,
                        end_s: end,
                        gesture: Some(predict_in(model, library, &text)?),
                        text,
                        pitch_scale: base,
                        volume_scale: base,
                    })
                })
                .collect::<Result<Vec<_>>>()?
        }
    };
    Ok(PerformanceScript {
        mode,
        library: library.names().map(str::to_string).collect(),
        events,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceSample {
    pub timestamp_s: f64,
    pub attention_ratio: f64,
    pub pitch_scale: f64,
    pub volume_scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionTrace {
    pub mode: Mode,
    pub samples: Vec<TraceSample>,
    pub mean_attention: f64,
    /// Script events with the scales in effect when each one starts.
    pub events: Vec<ScriptEvent>,
}

impl SessionTrace {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Ratios and controller state over a gaze log, controller starting at t = 0.
pub fn modulation_trace(
    frames: &[GazeFrame],
    geom: &CameraGeometry,
    modulate: bool,
) -> Result<Vec<TraceSample>> {
    if frames.is_empty() {
        return Err(Error::EmptyInput("gaze log is empty".into()));
    }
    let mut state = ModulationState::at_base(0.0, DEFAULT_CAP_PERCENT);
    Ok(frame_ratios(frames, geom)
        .into_iter()
        .map(|(t, ratio)| {
            if modulate {
                state = controller_step(state, ratio, t);
            }
            TraceSample {
                timestamp_s: t,
                attention_ratio: ratio,
                pitch_scale: state.pitch_scale(),
                volume_scale: state.volume_scale(),
            }
        })
        .collect())
}

/// Replays a script against a gaze log.
pub fn simulate_session(
    script: &PerformanceScript,
    frames: &[GazeFrame],
    geom: &CameraGeometry,
) -> Result<SessionTrace> {
    let modulate = script.mode == Mode::Modulated;
    let samples = modulation_trace(frames, geom, modulate)?;
    let mean_attention =
        samples.iter().map(|s| s.attention_ratio).sum::<f64>() / samples.len() as f64;
    let events = script
        .events
        .iter()
        .map(|e| {
            let mut e = e.clone();
            if modulate {
                let current = samples
                    .iter()
                    .take_while(|s| s.timestamp_s <= e.start_s)
                    .last();
                let (p, v) = current.map_or((1.0, 1.0), |s| (s.pitch_scale, s.volume_scale));
                e.pitch_scale = Some(p);
                e.volume_scale = Some(v);
            }
            e
        })
        .collect();
    Ok(SessionTrace {
        mode: script.mode,
        samples,
        mean_attention,
        events,
    })
}
