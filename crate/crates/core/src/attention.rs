//! Audience attentiveness from gaze geometry, and the pitch/volume
//! modulation controller driven by it.
//!
//! A person's gaze ray is extended to a plane at a fixed distance from the
//! camera. The head position, converted from image pixels to that plane, is
//! subtracted from the ray's endpoint; the person is attentive when the
//! remainder lies strictly inside the attention radius.

use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::error::{parse_json, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CameraGeometry {
    pub fov_x_deg: f64,
    pub fov_y_deg: f64,
    pub plane_distance_m: f64,
    pub attention_radius_m: f64,
    pub image_width_px: f64,
    pub image_height_px: f64,
}

impl Default for CameraGeometry {
    fn default() -> Self {
        CameraGeometry {
            fov_x_deg: 60.97,
            fov_y_deg: 47.64,
            plane_distance_m: 5.0,
            attention_radius_m: 2.0,
            image_width_px: 640.0,
            image_height_px: 480.0,
        }
    }
}

impl CameraGeometry {
    pub fn validate(&self) -> Result<()> {
        for (name, fov) in [("fov_x_deg", self.fov_x_deg), ("fov_y_deg", self.fov_y_deg)] {
            if !(fov > 0.0 && fov < 180.0) {
                return Err(Error::Config(format!(
                    "{name} must lie in (0, 180), got {fov}"
                )));
            }
        }
        for (name, v) in [
            ("plane_distance_m", self.plane_distance_m),
            ("attention_radius_m", self.attention_radius_m),
            ("image_width_px", self.image_width_px),
            ("image_height_px", self.image_height_px),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    pub fn from_json(raw: &[u8]) -> Result<Self> {
        let g: CameraGeometry = parse_json(raw)?;
        g.validate()?;
        Ok(g)
    }
}

/// Half-width of the field of view on a plane `distance_m` away.
pub fn plane_extent(fov_deg: f64, distance_m: f64) -> Result<f64> {
    if !(fov_deg > 0.0 && fov_deg < 180.0) {
        return Err(Error::Config(format!(
            "field of view must lie in (0, 180), got {fov_deg}"
        )));
    }
    if !(distance_m > 0.0) {
        return Err(Error::Config(format!(
            "distance must be positive, got {distance_m}"
        )));
    }
    Ok(distance_m * (fov_deg / 2.0).to_radians().tan())
}

/// Similar-triangle conversion of a center-origin pixel coordinate to meters.
pub fn pixel_to_plane(p_h: f64, half_extent_px: f64, extent_m: f64) -> f64 {
    p_h * extent_m / half_extent_px
}

/// Where the gaze ray meets the plane `distance_m` away; `None` when facing away.
pub fn gaze_endpoint(gaze: [f64; 3], distance_m: f64) -> Option<[f64; 3]> {
    let [dx, dy, dz] = gaze;
    (dz > 0.0).then(|| [dx / dz * distance_m, dy / dz * distance_m, distance_m])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GazeRecord {
    pub timestamp_s: f64,
    pub face_id: i64,
    /// Head position in pixels relative to the image center, x right, y down.
    pub head_px: [f64; 2],
    pub gaze: [f64; 3],
}

pub fn is_attentive(rec: &GazeRecord, geom: &CameraGeometry) -> bool {
    let Some([ex, ey, _]) = gaze_endpoint(rec.gaze, geom.plane_distance_m) else {
        return false;
    };
    // The extents only depend on validated geometry, so the fallbacks are unreachable.
    let ix = plane_extent(geom.fov_x_deg, geom.plane_distance_m).unwrap_or(f64::NAN);
    let iy = plane_extent(geom.fov_y_deg, geom.plane_distance_m).unwrap_or(f64::NAN);
    let hx = pixel_to_plane(rec.head_px[0], geom.image_width_px / 2.0, ix);
    let hy = pixel_to_plane(rec.head_px[1], geom.image_height_px / 2.0, iy);
    let alpha = ex - hx;
    let beta = ey - hy;
    alpha * alpha + beta * beta < geom.attention_radius_m * geom.attention_radius_m
}

/// Fraction of attentive records in one frame.
pub fn attention_ratio(records: &[GazeRecord], geom: &CameraGeometry) -> Result<f64> {
    if records.is_empty() {
        return Err(Error::EmptyInput("frame has no gaze records".into()));
    }
    let attentive = records.iter().filter(|r| is_attentive(r, geom)).count();
    Ok(attentive as f64 / records.len() as f64)
}

/// All records sharing one timestamp. An empty frame means no faces were detected.
#[derive(Debug, Clone, PartialEq)]
pub struct GazeFrame {
    pub timestamp_s: f64,
    pub records: Vec<GazeRecord>,
}

#[derive(Debug, Deserialize)]
struct GazeRow {
    timestamp_s: f64,
    face_id: Option<i64>,
    p_hx: Option<f64>,
    p_hy: Option<f64>,
    d_x: Option<f64>,
    d_y: Option<f64>,
    d_z: Option<f64>,
}

const GAZE_HEADER: [&str; 7] = [
    "timestamp_s",
    "face_id",
    "p_hx",
    "p_hy",
    "d_x",
    "d_y",
    "d_z",
];

/// Reads the gaze CSV and groups rows into frames in ascending time.
///
/// A row whose face columns are all empty marks a frame with no detected faces.
pub fn read_gaze_csv<R: Read>(reader: R) -> Result<Vec<GazeFrame>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header != GAZE_HEADER {
        return Err(Error::InvalidRecord(format!(
            "gaze CSV header must be `{}`, got `{}`",
            GAZE_HEADER.join(","),
            header.join(",")
        )));
    }
    let mut frames: Vec<GazeFrame> = Vec::new();
    for (line, row) in rdr.deserialize::<GazeRow>().enumerate() {
        let row = row?;
        if !row.timestamp_s.is_finite() {
            return Err(Error::InvalidRecord(format!(
                "row {}: non-finite timestamp",
                line + 2
            )));
        }
        let fields = (row.face_id, row.p_hx, row.p_hy, row.d_x, row.d_y, row.d_z);
        let record = match fields {
            (Some(face_id), Some(hx), Some(hy), Some(dx), Some(dy), Some(dz)) => Some(GazeRecord {
                timestamp_s: row.timestamp_s,
                face_id,
                head_px: [hx, hy],
                gaze: [dx, dy, dz],
            }),
            (None, None, None, None, None, None) => None,
            _ => {
                return Err(Error::InvalidRecord(format!(
                    "row {}: face columns must be all present or all empty",
                    line + 2
                )))
            }
        };
        match frames.last_mut() {
            Some(f) if f.timestamp_s == row.timestamp_s => f.records.extend(record),
            Some(f) if f.timestamp_s > row.timestamp_s => {
                return Err(Error::InvalidRecord(format!(
                    "row {}: timestamps must be non-decreasing",
                    line + 2
                )))
            }
            _ => frames.push(GazeFrame {
                timestamp_s: row.timestamp_s,
                records: record.into_iter().collect(),
            }),
        }
    }
    if frames.is_empty() {
        return Err(Error::EmptyInput("gaze log has no rows".into()));
    }
    Ok(frames)
}

pub fn write_gaze_csv(frames: &[GazeFrame]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(GAZE_HEADER)?;
    for f in frames {
        if f.records.is_empty() {
            w.write_record([f.timestamp_s.to_string().as_str(), "", "", "", "", "", ""])?;
        }
        for r in &f.records {
            w.write_record([
                r.timestamp_s.to_string(),
                r.face_id.to_string(),
                r.head_px[0].to_string(),
                r.head_px[1].to_string(),
                r.gaze[0].to_string(),
                r.gaze[1].to_string(),
                r.gaze[2].to_string(),
            ])?;
        }
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Attention ratio per frame. Frames without faces repeat the previous
/// ratio (1.0 before any face has been seen).
pub fn frame_ratios(frames: &[GazeFrame], geom: &CameraGeometry) -> Vec<(f64, f64)> {
    let mut last = 1.0;
    frames
        .iter()
        .map(|f| {
            if let Ok(r) = attention_ratio(&f.records, geom) {
                last = r;
            }
            (f.timestamp_s, last)
        })
        .collect()
}

pub const STEP_INTERVAL_S: f64 = 15.0;
pub const STEP_PERCENT: u32 = 10;
pub const DEFAULT_CAP_PERCENT: u32 = 150;
pub const ATTENTION_THRESHOLD: f64 = 0.5;

/// Pitch and volume scale factors stepped in whole percent of the base value.
///
/// Scales are kept as integer percent so that repeated steps land on exact
/// decimal values (1.1, 1.2, ...).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModulationState {
    pub pitch_percent: u32,
    pub volume_percent: u32,
    pub cap_percent: u32,
    /// Time of the last controller step, in milliseconds.
    pub last_step_ms: i64,
}

impl Default for ModulationState {
    fn default() -> Self {
        ModulationState::at_base(0.0, DEFAULT_CAP_PERCENT)
    }
}

fn to_ms(t: f64) -> i64 {
    (t * 1000.0).round() as i64
}

impl ModulationState {
    pub fn at_base(start_s: f64, cap_percent: u32) -> Self {
        ModulationState {
            pitch_percent: 100,
            volume_percent: 100,
            cap_percent: cap_percent.max(100),
            last_step_ms: to_ms(start_s),
        }
    }

    pub fn pitch_scale(&self) -> f64 {
        self.pitch_percent as f64 / 100.0
    }

    pub fn volume_scale(&self) -> f64 {
        self.volume_percent as f64 / 100.0
    }

    pub fn cap(&self) -> f64 {
        self.cap_percent as f64 / 100.0
    }

    pub fn last_step_s(&self) -> f64 {
        self.last_step_ms as f64 / 1000.0
    }

    pub fn is_base(&self) -> bool {
        self.pitch_percent == 100 && self.volume_percent == 100
    }
}

/// One tick of the modulation law.
///
/// At least 15 s after the previous step, both scales rise by 10% of base
/// when fewer than half the audience is attentive, and fall by 10% of base
/// otherwise, clamped to `[1.0, cap]`. Timestamps are compared at millisecond
/// resolution.
pub fn controller_step(state: ModulationState, ratio: f64, now_s: f64) -> ModulationState {
    let now = to_ms(now_s);
    if now - state.last_step_ms < to_ms(STEP_INTERVAL_S) {
        return state;
    }
    let adjust = |p: u32| {
        if ratio < ATTENTION_THRESHOLD {
            (p + STEP_PERCENT).min(state.cap_percent)
        } else {
            p.saturating_sub(STEP_PERCENT).max(100)
        }
    };
    ModulationState {
        pitch_percent: adjust(state.pitch_percent),
        volume_percent: adjust(state.volume_percent),
        cap_percent: state.cap_percent,
        last_step_ms: now,
    }
}
