//! Phrase segmentation of speech audio.
//!
//! The pipeline extracts the intensity of the dominant low-frequency bin per
//! 10 ms hop, smooths it with a Gaussian, pools it, thresholds it against the
//! global maximum and turns the resulting mask into phrases. Short silences
//! are absorbed into speech and short phrases are merged into their nearest
//! neighbour.

use std::io::{Read, Seek, Write};

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{parse_json, Error, Result};

/// Sample rate at which `window_samples` is specified.
pub const REFERENCE_RATE: u32 = 16_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SegmenterConfig {
    /// Analysis window length at 16 kHz; rescaled for other rates.
    pub window_samples: usize,
    pub hop_seconds: f64,
    pub lowpass_cutoff: f64,
    pub gaussian_sigma: f64,
    pub maxpool_window: usize,
    pub avgpool_window: usize,
    pub threshold_fraction: f64,
    pub silence_run: f64,
    pub min_phrase_bins: usize,
}

impl Default for SegmenterConfig {
    fn default() -> Self {
        SegmenterConfig {
            window_samples: 1024,
            hop_seconds: 0.01,
            lowpass_cutoff: 400.0,
            gaussian_sigma: 1.0,
            maxpool_window: 1,
            avgpool_window: 3,
            threshold_fraction: 0.30,
            silence_run: 0.2,
            min_phrase_bins: 100,
        }
    }
}

impl SegmenterConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Config(format!("segmenter: {what}")));
        if self.window_samples == 0 || self.maxpool_window == 0 || self.avgpool_window == 0 {
            return bad("window sizes must be positive");
        }
        if self.min_phrase_bins == 0 {
            return bad("min_phrase_bins must be positive");
        }
        for (name, v) in [
            ("hop_seconds", self.hop_seconds),
            ("lowpass_cutoff", self.lowpass_cutoff),
            ("gaussian_sigma", self.gaussian_sigma),
            ("silence_run", self.silence_run),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(&format!("{name} must be positive"));
            }
        }
        if !(self.threshold_fraction > 0.0 && self.threshold_fraction < 1.0) {
            return bad("threshold_fraction must lie in (0, 1)");
        }
        Ok(())
    }

    pub fn from_json(raw: &[u8]) -> Result<Self> {
        let cfg: SegmenterConfig = parse_json(raw)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Window and hop in samples for the given rate.
    pub fn frame_geometry(&self, rate: u32) -> (usize, usize) {
        let window = ((self.window_samples as f64 * rate as f64 / REFERENCE_RATE as f64).round()
            as usize)
            .max(2);
        let hop = ((self.hop_seconds * rate as f64).round() as usize).max(1);
        (window, hop)
    }

    fn silence_bins(&self, bin_seconds: f64) -> usize {
        ((self.silence_run / bin_seconds).round() as usize).max(1)
    }
}

/// Mono audio samples in [-1, 1] with their sample rate.
#[derive(Debug, Clone, PartialEq)]
pub struct Audio {
    pub samples: Vec<f64>,
    pub rate: u32,
}

impl Audio {
    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.rate as f64
    }

    /// Reads a 16-bit PCM mono WAV stream.
    pub fn read_wav<R: Read>(reader: R) -> Result<Self> {
        let mut wav = hound::WavReader::new(reader)?;
        let spec = wav.spec();
        if spec.channels != 1 {
            return Err(Error::Audio(format!(
                "expected mono audio, found {} channels",
                spec.channels
            )));
        }
        if spec.sample_format != hound::SampleFormat::Int || spec.bits_per_sample != 16 {
            return Err(Error::Audio(format!(
                "expected 16-bit PCM, found {} bit {:?}",
                spec.bits_per_sample, spec.sample_format
            )));
        }
        let samples = wav
            .samples::<i16>()
            .map(|s| s.map(|v| v as f64 / 32768.0))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        Ok(Audio {
            samples,
            rate: spec.sample_rate,
        })
    }

    /// Writes 16-bit PCM mono, clipping to the representable range.
    pub fn write_wav<W: Write + Seek>(&self, writer: W) -> Result<()> {
        let spec = hound::WavSpec {
            channels: 1,
            sample_rate: self.rate,
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        };
        let mut wav = hound::WavWriter::new(writer, spec)?;
        for s in &self.samples {
            wav.write_sample((s * 32767.0).round().clamp(-32768.0, 32767.0) as i16)?;
        }
        wav.finalize()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnergyTrack {
    pub values: Vec<f64>,
    pub bin_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhraseSegments {
    pub bin_seconds: f64,
    pub phrases: Vec<(f64, f64)>,
    pub pauses: Vec<f64>,
    pub audio_duration: f64,
}

impl PhraseSegments {
    pub fn from_json(raw: &[u8]) -> Result<Self> {
        let segs: PhraseSegments = parse_json(raw)?;
        segs.check()?;
        Ok(segs)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Verifies ordering, disjointness, range and pause bookkeeping.
    pub fn check(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidRecord(format!("phrases: {m}")));
        for (i, &(open, close)) in self.phrases.iter().enumerate() {
            if !(open < close) {
                return bad(format!("phrase {i} has open {open} >= close {close}"));
            }
            if open < 0.0 || close > self.audio_duration {
                return bad(format!(
                    "phrase {i} lies outside [0, {}]",
                    self.audio_duration
                ));
            }
            if i > 0 && self.phrases[i - 1].1 > open {
                return bad(format!("phrase {i} overlaps its predecessor"));
            }
        }
        if self.pauses.len() != self.phrases.len().saturating_sub(1) {
            return bad("pause count does not match phrase count".into());
        }
        Ok(())
    }
}

fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (std::f64::consts::TAU * i as f64 / n as f64).cos())
        .collect()
}

/// Normalized Gaussian smoothing, renormalized where the kernel leaves the signal.
pub fn gaussian_smooth(values: &[f64], sigma: f64) -> Vec<f64> {
    let radius = (4.0 * sigma).ceil() as isize;
    let kernel: Vec<f64> = (-radius..=radius)
        .map(|i| (-0.5 * (i as f64 / sigma).powi(2)).exp())
        .collect();
    let n = values.len() as isize;
    (0..n)
        .map(|i| {
            let mut acc = 0.0;
            let mut weight = 0.0;
            for (k, w) in kernel.iter().enumerate() {
                let j = i + k as isize - radius;
                if (0..n).contains(&j) {
                    acc += w * values[j as usize];
                    weight += w;
                }
            }
            acc / weight
        })
        .collect()
}

/// Bounds of the centered window at `i`, truncated at the edges.
fn window_bounds(i: usize, len: usize, window: usize) -> (usize, usize) {
    let before = (window - 1) / 2;
    let after = window - 1 - before;
    (i.saturating_sub(before), (i + after + 1).min(len))
}

pub fn max_pool(values: &[f64], window: usize) -> Vec<f64> {
    (0..values.len())
        .map(|i| {
            let (lo, hi) = window_bounds(i, values.len(), window);
            values[lo..hi]
                .iter()
                .copied()
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect()
}

pub fn avg_pool(values: &[f64], window: usize) -> Vec<f64> {
    (0..values.len())
        .map(|i| {
            let (lo, hi) = window_bounds(i, values.len(), window);
            values[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
        })
        .collect()
}

/// Per-hop magnitude of the strongest spectral bin between DC and the
/// low-pass cutoff, Gaussian smoothed. Frames are centered on `i * hop`.
pub fn f0_track(audio: &Audio, cfg: &SegmenterConfig) -> Result<EnergyTrack> {
    cfg.validate()?;
    if audio.rate == 0 {
        return Err(Error::Audio("sample rate must be positive".into()));
    }
    if audio.samples.is_empty() {
        return Err(Error::Audio("audio is empty".into()));
    }
    if (audio.rate as f64) < 2.0 * cfg.lowpass_cutoff {
        return Err(Error::Config(format!(
            "sample rate {} Hz is below twice the {} Hz cutoff",
            audio.rate, cfg.lowpass_cutoff
        )));
    }
    let (window, hop) = cfg.frame_geometry(audio.rate);
    if audio.samples.len() < window {
        return Err(Error::Audio(format!(
            "need at least one {window}-sample window, got {} samples",
            audio.samples.len()
        )));
    }
    let top_bin = ((cfg.lowpass_cutoff * window as f64 / audio.rate as f64).floor() as usize)
        .min(window / 2)
        .max(1);
    let taper = hann(window);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(window);
    let bins = audio.samples.len().div_ceil(hop);
    let half = window / 2;
    let mut buf = vec![Complex::new(0.0, 0.0); window];
    let mut scratch = vec![Complex::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    let mut raw = Vec::with_capacity(bins);
    for b in 0..bins {
        let center = b * hop;
        for (k, slot) in buf.iter_mut().enumerate() {
            let idx = (center + k).checked_sub(half);
            let s = idx
                .and_then(|i| audio.samples.get(i))
                .copied()
                .unwrap_or(0.0);
            *slot = Complex::new(s * taper[k], 0.0);
        }
        fft.process_with_scratch(&mut buf, &mut scratch);
        let peak = buf[1..=top_bin]
            .iter()
            .map(|c| c.norm())
            .fold(0.0, f64::max);
        raw.push(peak);
    }
    Ok(EnergyTrack {
        values: gaussian_smooth(&raw, cfg.gaussian_sigma),
        bin_seconds: hop as f64 / audio.rate as f64,
    })
}

/// Rectify, max-pool, average-pool, then keep bins at or above the
/// configured fraction of the global maximum.
pub fn pool_and_threshold(track: &EnergyTrack, cfg: &SegmenterConfig) -> Result<Vec<bool>> {
    if track.values.is_empty() {
        return Err(Error::EmptyInput("energy track is empty".into()));
    }
    let rectified: Vec<f64> = track.values.iter().map(|v| v.abs()).collect();
    let pooled = avg_pool(
        &max_pool(&rectified, cfg.maxpool_window),
        cfg.avgpool_window,
    );
    let peak = pooled.iter().copied().fold(0.0, f64::max);
    if peak <= 0.0 {
        return Ok(vec![false; pooled.len()]);
    }
    let threshold = cfg.threshold_fraction * peak;
    Ok(pooled.iter().map(|&v| v >= threshold).collect())
}

/// Speech runs as half-open bin ranges.
fn true_runs(mask: &[bool]) -> Vec<(usize, usize)> {
    let mut runs = Vec::new();
    let mut start = None;
    for (i, &m) in mask.iter().enumerate() {
        match (m, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                runs.push((s, i));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        runs.push((s, mask.len()));
    }
    runs
}

/// Phrase bin ranges after silence absorption and short-phrase merging.
pub fn phrase_bins(mask: &[bool], cfg: &SegmenterConfig, bin_seconds: f64) -> Vec<(usize, usize)> {
    let silence = cfg.silence_bins(bin_seconds);
    let mut phrases: Vec<(usize, usize)> = Vec::new();
    for run in true_runs(mask) {
        match phrases.last_mut() {
            Some(last) if run.0 - last.1 < silence => last.1 = run.1,
            _ => phrases.push(run),
        }
    }
    while phrases.len() > 1 {
        let Some(i) = phrases
            .iter()
            .position(|&(a, b)| b - a < cfg.min_phrase_bins)
        else {
            break;
        };
        let gap_before = (i > 0).then(|| phrases[i].0 - phrases[i - 1].1);
        let gap_after = phrases.get(i + 1).map(|next| next.0 - phrases[i].1);
        let into_previous = match (gap_before, gap_after) {
            (Some(b), Some(a)) => b <= a,
            (Some(_), None) => true,
            _ => false,
        };
        if into_previous {
            phrases[i - 1].1 = phrases[i].1;
        } else {
            phrases[i + 1].0 = phrases[i].0;
        }
        phrases.remove(i);
    }
    phrases
}

/// Converts a mask to timed phrases. Bin `i` spans `[(i - 0.5), (i + 0.5)) * bin_seconds`.
pub fn extract_phrases(mask: &[bool], cfg: &SegmenterConfig, bin_seconds: f64) -> PhraseSegments {
    extract_phrases_within(mask, cfg, bin_seconds, mask.len() as f64 * bin_seconds)
}

fn extract_phrases_within(
    mask: &[bool],
    cfg: &SegmenterConfig,
    bin_seconds: f64,
    audio_duration: f64,
) -> PhraseSegments {
    let edge = |bin: usize| ((bin as f64 - 0.5) * bin_seconds).clamp(0.0, audio_duration);
    let phrases: Vec<(f64, f64)> = phrase_bins(mask, cfg, bin_seconds)
        .into_iter()
        .map(|(a, b)| (edge(a), edge(b)))
        .filter(|(open, close)| open < close)
        .collect();
    let pauses = phrases.windows(2).map(|w| w[1].0 - w[0].1).collect();
    PhraseSegments {
        bin_seconds,
        phrases,
        pauses,
        audio_duration,
    }
}

/// Full segmentation: track, pool and threshold, then phrase extraction.
pub fn segment(audio: &Audio, cfg: &SegmenterConfig) -> Result<PhraseSegments> {
    let track = f0_track(audio, cfg)?;
    let mask = pool_and_threshold(&track, cfg)?;
    Ok(extract_phrases_within(
        &mask,
        cfg,
        track.bin_seconds,
        audio.duration(),
    ))
}

/// Phrase containing `center_s`, otherwise the one whose midpoint is nearest
/// (earlier phrase on ties).
pub fn central_phrase(segments: &PhraseSegments, center_s: f64) -> Result<(f64, f64)> {
    if segments.phrases.is_empty() {
        return Err(Error::EmptyInput("no phrases".into()));
    }
    if let Some(p) = segments
        .phrases
        .iter()
        .find(|(open, close)| *open <= center_s && center_s <= *close)
    {
        return Ok(*p);
    }
    let mut best = segments.phrases[0];
    let mut best_d = f64::INFINITY;
    for &(open, close) in &segments.phrases {
        let d = ((open + close) / 2.0 - center_s).abs();
        if d < best_d {
            best = (open, close);
            best_d = d;
        }
    }
    Ok(best)
}
