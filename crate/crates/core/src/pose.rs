//! Keypoint ingestion and speaker normalization.
//!
//! Every frame is scaled so that its head size (forehead to neck distance)
//! matches a reference frame, then translated so that its forehead lands on
//! the reference forehead. Arm joints are then expressed relative to the
//! neck to form the pose vectors used for clustering.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{parse_json, Error, Result};

/// Joints below this confidence are treated as missing.
pub const MIN_JOINT_CONFIDENCE: f64 = 0.1;

/// Relative tolerance under which an already aligned frame is returned untouched.
const FIXED_POINT_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Joint {
    Neck,
    Forehead,
    LShoulder,
    RShoulder,
    LElbow,
    RElbow,
    LWrist,
    RWrist,
}

impl Joint {
    pub const ALL: [Joint; 8] = [
        Joint::Neck,
        Joint::Forehead,
        Joint::LShoulder,
        Joint::RShoulder,
        Joint::LElbow,
        Joint::RElbow,
        Joint::LWrist,
        Joint::RWrist,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Joint::Neck => "neck",
            Joint::Forehead => "forehead",
            Joint::LShoulder => "l_shoulder",
            Joint::RShoulder => "r_shoulder",
            Joint::LElbow => "l_elbow",
            Joint::RElbow => "r_elbow",
            Joint::LWrist => "l_wrist",
            Joint::RWrist => "r_wrist",
        }
    }
}

impl fmt::Display for Joint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Joint {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Joint::ALL
            .iter()
            .copied()
            .find(|j| j.name() == s)
            .ok_or_else(|| Error::UnknownJoint(s.to_string()))
    }
}

impl Serialize for Joint {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for Joint {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Keypoint {
    pub x: f64,
    pub y: f64,
    pub confidence: f64,
}

impl Keypoint {
    pub fn new(x: f64, y: f64, confidence: f64) -> Self {
        Keypoint { x, y, confidence }
    }
}

/// Named 2-D body joints for one video frame.
#[derive(Debug, Clone, PartialEq)]
pub struct KeypointFrame {
    pub frame_id: i64,
    pub joints: BTreeMap<Joint, Keypoint>,
}

impl KeypointFrame {
    pub fn new(frame_id: i64) -> Self {
        KeypointFrame {
            frame_id,
            joints: BTreeMap::new(),
        }
    }

    pub fn with_joint(mut self, joint: Joint, x: f64, y: f64) -> Self {
        self.joints.insert(joint, Keypoint::new(x, y, 1.0));
        self
    }

    pub fn joint(&self, joint: Joint) -> Result<&Keypoint> {
        self.joints.get(&joint).ok_or_else(|| Error::MissingJoint {
            frame_id: self.frame_id,
            joint: joint.name().to_string(),
        })
    }

    fn has_head(&self) -> bool {
        self.joints.contains_key(&Joint::Neck) && self.joints.contains_key(&Joint::Forehead)
    }

    /// Adds a constant offset to every joint.
    pub fn translated(&self, dx: f64, dy: f64) -> Self {
        let joints = self
            .joints
            .iter()
            .map(|(j, p)| (*j, Keypoint::new(p.x + dx, p.y + dy, p.confidence)))
            .collect();
        KeypointFrame {
            frame_id: self.frame_id,
            joints,
        }
    }

    /// Multiplies every coordinate by `factor` about the image origin.
    pub fn scaled(&self, factor: f64) -> Self {
        let joints = self
            .joints
            .iter()
            .map(|(j, p)| (*j, Keypoint::new(p.x * factor, p.y * factor, p.confidence)))
            .collect();
        KeypointFrame {
            frame_id: self.frame_id,
            joints,
        }
    }
}

/// Forehead position and head size of the speaker every frame is aligned to.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceFrame {
    pub forehead: (f64, f64),
    pub head_size: f64,
}

impl ReferenceFrame {
    pub fn new(forehead: (f64, f64), head_size: f64) -> Result<Self> {
        if !(head_size > 0.0 && head_size.is_finite()) {
            return Err(Error::Config(format!(
                "reference head size must be positive, got {head_size}"
            )));
        }
        Ok(ReferenceFrame {
            forehead,
            head_size,
        })
    }

    pub fn from_frame(frame: &KeypointFrame) -> Result<Self> {
        let size = head_size(frame)?;
        let f = frame.joint(Joint::Forehead)?;
        Ok(ReferenceFrame {
            forehead: (f.x, f.y),
            head_size: size,
        })
    }
}

/// How the reference frame is chosen from a corpus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ReferenceSelection {
    /// First frame with a non-degenerate head.
    #[default]
    Auto,
    Frame(i64),
}

impl FromStr for ReferenceSelection {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "auto" {
            return Ok(ReferenceSelection::Auto);
        }
        s.parse::<i64>()
            .map(ReferenceSelection::Frame)
            .map_err(|_| {
                Error::Config(format!("reference must be `auto` or a frame id, got `{s}`"))
            })
    }
}

pub fn select_reference(
    frames: &[KeypointFrame],
    selection: ReferenceSelection,
) -> Result<ReferenceFrame> {
    match selection {
        ReferenceSelection::Auto => frames
            .iter()
            .find_map(|f| ReferenceFrame::from_frame(f).ok())
            .ok_or_else(|| Error::EmptyInput("no frame with a usable head".into())),
        ReferenceSelection::Frame(id) => {
            let frame = frames
                .iter()
                .find(|f| f.frame_id == id)
                .ok_or(Error::ReferenceNotFound(id))?;
            ReferenceFrame::from_frame(frame)
        }
    }
}

/// Flattened neck-relative joint offsets `[dx0, dy0, dx1, dy1, ...]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PoseVector(pub Vec<f64>);

impl PoseVector {
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn offsets(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.0.chunks_exact(2).map(|c| (c[0], c[1]))
    }
}

/// Ordered joints that make up a pose vector.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct JointSet(pub Vec<Joint>);

impl JointSet {
    /// Elbows and wrists: an 8-dimensional pose space.
    pub fn arms() -> Self {
        JointSet(vec![
            Joint::LElbow,
            Joint::RElbow,
            Joint::LWrist,
            Joint::RWrist,
        ])
    }

    /// Shoulders, elbows and wrists: a 12-dimensional pose space.
    pub fn arms_with_shoulders() -> Self {
        JointSet(vec![
            Joint::LShoulder,
            Joint::RShoulder,
            Joint::LElbow,
            Joint::RElbow,
            Joint::LWrist,
            Joint::RWrist,
        ])
    }

    pub fn dim(&self) -> usize {
        2 * self.0.len()
    }
}

impl Default for JointSet {
    fn default() -> Self {
        JointSet::arms()
    }
}

/// Frames that survived ingestion plus the number dropped along the way.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameSet {
    pub frames: Vec<KeypointFrame>,
    pub dropped: usize,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct KeypointDoc {
    frames: Vec<FrameDoc>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FrameDoc {
    id: i64,
    joints: BTreeMap<String, [f64; 3]>,
}

#[derive(Serialize)]
struct KeypointDocOut<'a> {
    frames: Vec<FrameDocOut<'a>>,
}

#[derive(Serialize)]
struct FrameDocOut<'a> {
    id: i64,
    joints: BTreeMap<&'a str, [f64; 3]>,
}

/// Parses the keypoint JSON document.
///
/// Joints with confidence below [`MIN_JOINT_CONFIDENCE`] are discarded, and
/// frames that then lack a neck or forehead are dropped and counted.
pub fn parse_keypoints(raw: &[u8]) -> Result<FrameSet> {
    let doc: KeypointDoc = parse_json(raw)?;
    let mut frames = Vec::with_capacity(doc.frames.len());
    let mut dropped = 0;
    for fd in doc.frames {
        let mut frame = KeypointFrame::new(fd.id);
        for (name, [x, y, c]) in fd.joints {
            let joint: Joint = name.parse()?;
            if !(x.is_finite() && y.is_finite()) {
                return Err(Error::InvalidFrame {
                    frame_id: fd.id,
                    reason: format!("non-finite coordinate for {joint}"),
                });
            }
            if !(0.0..=1.0).contains(&c) {
                return Err(Error::InvalidFrame {
                    frame_id: fd.id,
                    reason: format!("confidence {c} for {joint} outside [0, 1]"),
                });
            }
            if c >= MIN_JOINT_CONFIDENCE {
                frame.joints.insert(joint, Keypoint::new(x, y, c));
            }
        }
        if frame.has_head() {
            frames.push(frame);
        } else {
            dropped += 1;
        }
    }
    frames.sort_by_key(|f| f.frame_id);
    if let Some(w) = frames.windows(2).find(|w| w[0].frame_id == w[1].frame_id) {
        return Err(Error::InvalidFrame {
            frame_id: w[0].frame_id,
            reason: "duplicate frame id".into(),
        });
    }
    if frames.is_empty() {
        return Err(Error::EmptyInput(format!(
            "no frame has both neck and forehead ({dropped} dropped)"
        )));
    }
    Ok(FrameSet { frames, dropped })
}

/// Serializes frames back to the keypoint JSON document format.
pub fn write_keypoints(frames: &[KeypointFrame]) -> Result<String> {
    let doc = KeypointDocOut {
        frames: frames
            .iter()
            .map(|f| FrameDocOut {
                id: f.frame_id,
                joints: f
                    .joints
                    .iter()
                    .map(|(j, p)| (j.name(), [p.x, p.y, p.confidence]))
                    .collect(),
            })
            .collect(),
    };
    Ok(serde_json::to_string_pretty(&doc)?)
}

/// Euclidean length of the forehead minus neck vector.
pub fn head_size(frame: &KeypointFrame) -> Result<f64> {
    let f = frame.joint(Joint::Forehead)?;
    let n = frame.joint(Joint::Neck)?;
    let size = (f.x - n.x).hypot(f.y - n.y);
    if size > 0.0 {
        Ok(size)
    } else {
        Err(Error::DegenerateHead {
            frame_id: frame.frame_id,
        })
    }
}

/// Scales a frame to the reference head size and moves its forehead onto
/// the reference forehead.
pub fn normalize_frame(frame: &KeypointFrame, reference: &ReferenceFrame) -> Result<KeypointFrame> {
    let scale = reference.head_size / head_size(frame)?;
    let f = frame.joint(Joint::Forehead)?;
    let (fx, fy) = (f.x, f.y);
    if (fx, fy) == reference.forehead && (scale - 1.0).abs() <= FIXED_POINT_TOLERANCE {
        return Ok(frame.clone());
    }
    let (rx, ry) = reference.forehead;
    // Written relative to the forehead so the forehead itself maps exactly.
    let joints = frame
        .joints
        .iter()
        .map(|(j, p)| {
            let q = Keypoint::new(
                rx + (p.x - fx) * scale,
                ry + (p.y - fy) * scale,
                p.confidence,
            );
            (*j, q)
        })
        .collect();
    Ok(KeypointFrame {
        frame_id: frame.frame_id,
        joints,
    })
}

/// Normalizes every frame, dropping (and counting) frames with a degenerate head.
pub fn normalize_sequence(
    frames: &[KeypointFrame],
    reference: &ReferenceFrame,
) -> Result<FrameSet> {
    if frames.is_empty() {
        return Err(Error::EmptyInput("no frames to normalize".into()));
    }
    let results: Vec<Result<KeypointFrame>> = frames
        .par_iter()
        .map(|f| normalize_frame(f, reference))
        .collect();
    let mut out = Vec::with_capacity(frames.len());
    let mut dropped = 0;
    for r in results {
        match r {
            Ok(f) => out.push(f),
            Err(Error::DegenerateHead { .. }) => dropped += 1,
            Err(e) => return Err(e),
        }
    }
    if out.is_empty() {
        return Err(Error::EmptyInput(format!(
            "all {dropped} frames have a degenerate head"
        )));
    }
    Ok(FrameSet {
        frames: out,
        dropped,
    })
}

/// Offsets of each joint in `joint_set` from the neck, in listed order.
pub fn pose_vector(frame: &KeypointFrame, joint_set: &JointSet) -> Result<PoseVector> {
    let neck = frame.joint(Joint::Neck)?;
    let mut components = Vec::with_capacity(joint_set.dim());
    for joint in &joint_set.0 {
        let p = frame.joint(*joint)?;
        components.push(p.x - neck.x);
        components.push(p.y - neck.y);
    }
    Ok(PoseVector(components))
}
