//! Writes the synthetic end-to-end fixture into a directory.
//!
//! cargo run -p oratorio-core --example make_fixture -- crates/cli/tests/fixtures

use std::fs;
use std::path::PathBuf;

use oratorio_core::attention::write_gaze_csv;
use oratorio_core::pose::write_keypoints;
use oratorio_core::synth;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const RATE: u32 = 16_000;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = PathBuf::from(std::env::args().nth(1).ok_or("usage: make_fixture <dir>")?);
    fs::create_dir_all(&dir)?;
    let mut rng = ChaCha8Rng::seed_from_u64(2024);

    let frames = synth::gesture_keypoints(12, 30, 7);
    fs::write(dir.join("keypoints.json"), write_keypoints(&frames)?)?;

    // About a minute of voiced phrases split by short pauses.
    let mut tones = Vec::new();
    let mut t = 0.4;
    while t < 56.0 {
        let len = rng.random_range(1.2..2.6);
        tones.push((
            t,
            t + len,
            rng.random_range(110.0..260.0),
            rng.random_range(0.5..0.9),
        ));
        t += len + rng.random_range(0.4..0.9);
    }
    let audio = synth::tone_clip(RATE, &tones, 60.0);
    audio.write_wav(fs::File::create(dir.join("speech.wav"))?)?;

    let phrases: Vec<(f64, f64)> = tones.iter().map(|&(a, b, _, _)| (a, b)).collect();
    let transcript = synth::transcript_for(&phrases, 9, 12);
    fs::write(
        dir.join("transcript.json"),
        serde_json::to_string_pretty(&transcript)?,
    )?;

    let corpus = synth::disjoint_corpus(9, 12, 8, 11);
    fs::write(
        dir.join("corpus.json"),
        serde_json::to_string_pretty(&corpus)?,
    )?;

    // Attention sags for the first half of the talk, then recovers.
    let gaze = synth::gaze_log(60.0, 1.0, 8, |t| if t < 35.0 { 0.25 } else { 0.75 }, 5);
    fs::write(dir.join("gaze.csv"), write_gaze_csv(&gaze)?)?;

    let mut scores = String::from("behaviour_id,score\n");
    for behaviour in 1..=4 {
        for _ in 0..20 {
            let s: u32 =
                rng.random_range(1..=5) + u32::from(behaviour >= 3 && rng.random_bool(0.5));
            scores.push_str(&format!("{behaviour},{}\n", s.min(5)));
        }
    }
    fs::write(dir.join("scores.csv"), scores)?;
    Ok(())
}
