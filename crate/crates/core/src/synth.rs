//! Deterministic synthetic inputs for tests, benchmarks and fixtures.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::attention::{GazeFrame, GazeRecord};
use crate::classifier::{Sample, TrainingCorpus};
use crate::discovery::DEFAULT_GESTURE_NAMES;
use crate::phrase::Audio;
use crate::pose::{Joint, Keypoint, KeypointFrame};
use crate::scheduler::{TimedTranscript, TimedWord};

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Sum of sine tones `(start_s, end_s, freq_hz, amplitude)` over silence.
pub fn tone_clip(rate: u32, tones: &[(f64, f64, f64, f64)], duration: f64) -> Audio {
    let n = (duration * rate as f64).round() as usize;
    let mut samples = vec![0.0; n];
    for &(start, end, freq, amp) in tones {
        let a = (start * rate as f64).round() as usize;
        let b = ((end * rate as f64).round() as usize).min(n);
        for (i, s) in samples.iter_mut().enumerate().take(b).skip(a) {
            let t = (i - a) as f64 / rate as f64;
            *s += amp * (std::f64::consts::TAU * freq * t).sin();
        }
    }
    Audio { samples, rate }
}

/// Band-limited noise: many random-phase sinusoids between `lo` and `hi` Hz.
pub fn high_band_noise(rate: u32, duration: f64, lo: f64, hi: f64, seed: u64) -> Audio {
    let mut r = rng(seed);
    let n = (duration * rate as f64).round() as usize;
    let partials: Vec<(f64, f64)> = (0..64)
        .map(|_| {
            (
                r.random_range(lo..hi),
                r.random_range(0.0..std::f64::consts::TAU),
            )
        })
        .collect();
    let samples = (0..n)
        .map(|i| {
            let t = i as f64 / rate as f64;
            partials
                .iter()
                .map(|(f, ph)| (std::f64::consts::TAU * f * t + ph).sin())
                .sum::<f64>()
                / 64.0
        })
        .collect();
    Audio { samples, rate }
}

/// A clip of 2 to 4 voiced tones separated by at least 0.3 s of silence,
/// returned with the exact tone boundaries in seconds.
pub fn speech_like_clip(rate: u32, seed: u64) -> (Audio, Vec<(f64, f64)>) {
    let mut r = rng(seed);
    let count = r.random_range(2..=4);
    let mut t = r.random_range(0.2..0.5);
    let mut tones = Vec::with_capacity(count);
    for i in 0..count {
        if i > 0 {
            t += r.random_range(0.3..0.8);
        }
        let len = r.random_range(1.0..2.0);
        // Sample-aligned boundaries so the truth is exact.
        let start = (t * rate as f64).round() / rate as f64;
        let end = ((t + len) * rate as f64).round() / rate as f64;
        tones.push((
            start,
            end,
            r.random_range(100.0..300.0),
            r.random_range(0.6..1.0),
        ));
        t = end;
    }
    let duration = t + r.random_range(0.2..0.5);
    let truth = tones.iter().map(|&(a, b, _, _)| (a, b)).collect();
    (tone_clip(rate, &tones, duration), truth)
}

fn label_name(i: usize) -> String {
    DEFAULT_GESTURE_NAMES
        .get(i)
        .map_or_else(|| format!("gesture {i}"), |s| s.to_string())
}

/// Word `j` of label `i`'s private vocabulary.
pub fn label_word(label: usize, word: usize) -> String {
    format!("l{label}w{word}")
}

/// Corpus where every label owns a private vocabulary of `words_per_label` words.
pub fn disjoint_corpus(
    labels: usize,
    words_per_label: usize,
    samples_per_label: usize,
    seed: u64,
) -> TrainingCorpus {
    let mut r = rng(seed);
    let mut samples = Vec::new();
    for s in 0..samples_per_label {
        for l in 0..labels {
            let mut words: Vec<String> = (0..words_per_label).map(|w| label_word(l, w)).collect();
            words.shuffle(&mut r);
            // The first sample of a label carries its whole vocabulary.
            let keep = if s == 0 {
                words_per_label
            } else {
                r.random_range(words_per_label.div_ceil(2)..=words_per_label)
            };
            words.truncate(keep);
            samples.push(Sample {
                text: words.join(" "),
                label: label_name(l),
            });
        }
    }
    TrainingCorpus { samples }
}

fn body(id: i64, arm: &[(f64, f64); 6]) -> KeypointFrame {
    let mut f = KeypointFrame::new(id);
    f.joints.insert(Joint::Neck, Keypoint::new(0.0, 0.0, 0.95));
    f.joints
        .insert(Joint::Forehead, Keypoint::new(0.0, -40.0, 0.95));
    let joints = [
        Joint::LShoulder,
        Joint::RShoulder,
        Joint::LElbow,
        Joint::RElbow,
        Joint::LWrist,
        Joint::RWrist,
    ];
    for (j, (x, y)) in joints.iter().zip(arm) {
        f.joints.insert(*j, Keypoint::new(*x, *y, 0.9));
    }
    f
}

/// Nine arm postures (shoulders, elbows, wrists relative to the neck, head size 40).
fn prototypes() -> Vec<[(f64, f64); 6]> {
    let sh = [(-35.0, 10.0), (35.0, 10.0)];
    let arms: [[(f64, f64); 4]; 9] = [
        [(-30.0, 60.0), (30.0, 60.0), (-5.0, 90.0), (5.0, 90.0)],
        [(-40.0, 55.0), (40.0, 55.0), (-20.0, 20.0), (20.0, 20.0)],
        [(-30.0, 60.0), (50.0, 40.0), (-10.0, 80.0), (40.0, 80.0)],
        [(-45.0, 60.0), (45.0, 60.0), (-45.0, 110.0), (45.0, 110.0)],
        [(-40.0, 55.0), (40.0, 55.0), (-30.0, 30.0), (30.0, 30.0)],
        [(-45.0, 60.0), (40.0, 55.0), (-45.0, 110.0), (30.0, 30.0)],
        [(-45.0, 60.0), (60.0, 50.0), (-45.0, 110.0), (30.0, 75.0)],
        [(-45.0, 60.0), (35.0, 45.0), (-45.0, 110.0), (60.0, 10.0)],
        [(-45.0, 70.0), (45.0, 70.0), (-35.0, 95.0), (35.0, 95.0)],
    ];
    arms.iter()
        .map(|a| [sh[0], sh[1], a[0], a[1], a[2], a[3]])
        .collect()
}

/// Keypoint frames from nine postures plus a diffuse set of residual poses,
/// each placed at a random image position and scale, as if from different speakers.
pub fn gesture_keypoints(
    frames_per_gesture: usize,
    residual: usize,
    seed: u64,
) -> Vec<KeypointFrame> {
    let mut r = rng(seed);
    let mut frames = Vec::new();
    let mut id = 0;
    let mut place = |pose: &[(f64, f64); 6], r: &mut ChaCha8Rng| {
        let f = body(id, pose);
        id += 1;
        let scale = r.random_range(0.5..2.0);
        let (tx, ty) = (r.random_range(100.0..500.0), r.random_range(80.0..300.0));
        f.scaled(scale).translated(tx, ty)
    };
    let protos = prototypes();
    for _ in 0..frames_per_gesture {
        for p in &protos {
            let jittered =
                p.map(|(x, y)| (x + r.random_range(-1.5..1.5), y + r.random_range(-1.5..1.5)));
            frames.push(place(&jittered, &mut r));
        }
    }
    for _ in 0..residual {
        let wild: [(f64, f64); 6] =
            std::array::from_fn(|_| (r.random_range(-160.0..160.0), r.random_range(-120.0..200.0)));
        frames.push(place(&wild, &mut r));
    }
    frames
}

/// Words spread evenly inside each phrase. Phrase `i` speaks label `i % labels`'s vocabulary.
pub fn transcript_for(
    phrases: &[(f64, f64)],
    labels: usize,
    words_per_label: usize,
) -> TimedTranscript {
    let mut words = Vec::new();
    for (i, &(open, close)) in phrases.iter().enumerate() {
        let label = i % labels;
        let count = words_per_label.clamp(1, 6);
        let slot = (close - open) / count as f64;
        for w in 0..count {
            let start = open + w as f64 * slot + 0.1 * slot;
            words.push(TimedWord {
                w: label_word(label, (w + i) % words_per_label),
                start_s: start,
                end_s: start + 0.8 * slot,
            });
        }
    }
    TimedTranscript { words }
}

/// Gaze frames every `step_s` seconds for `faces` people; `attentive(t)` gives
/// the fraction looking at the speaker.
pub fn gaze_log(
    duration: f64,
    step_s: f64,
    faces: usize,
    attentive: impl Fn(f64) -> f64,
    seed: u64,
) -> Vec<GazeFrame> {
    let mut r = rng(seed);
    let steps = (duration / step_s).floor() as usize;
    (0..=steps)
        .map(|k| {
            let t = k as f64 * step_s;
            let looking = (attentive(t) * faces as f64).round() as usize;
            let records = (0..faces)
                .map(|i| {
                    let head = [r.random_range(-300.0..300.0), r.random_range(-200.0..200.0)];
                    // Attentive faces aim at the speaker, others look well off to the side.
                    let (hx, hy) = (head[0] * 2.9435 / 320.0, head[1] * 2.2070 / 240.0);
                    let gaze = if i < looking {
                        [
                            (hx + r.random_range(-0.5..0.5)) / 5.0,
                            (hy + r.random_range(-0.5..0.5)) / 5.0,
                            1.0,
                        ]
                    } else {
                        [
                            (hx + 4.0 * if i % 2 == 0 { 1.0 } else { -1.0 }) / 5.0,
                            hy / 5.0,
                            1.0,
                        ]
                    };
                    GazeRecord {
                        timestamp_s: t,
                        face_id: i as i64,
                        head_px: head,
                        gaze,
                    }
                })
                .collect();
            GazeFrame {
                timestamp_s: t,
                records,
            }
        })
        .collect()
}
