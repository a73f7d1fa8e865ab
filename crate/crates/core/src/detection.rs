//! Detector output parsing and per-frame person localization.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::geometry::{Homography, PixelPoint, WorldPoint};

pub const DEFAULT_TARGET_LABEL: &str = "person";

#[derive(Debug, thiserror::Error)]
pub enum DetectionError {
    #[error("line {line}: {message}")]
    Schema { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct BoundingBox {
    pub u_min: f64,
    pub v_min: f64,
    pub u_max: f64,
    pub v_max: f64,
}

impl BoundingBox {
    pub fn new(u_min: f64, v_min: f64, u_max: f64, v_max: f64) -> Result<Self, String> {
        let b = Self {
            u_min,
            v_min,
            u_max,
            v_max,
        };
        if ![u_min, v_min, u_max, v_max].iter().all(|c| c.is_finite()) {
            return Err(format!("non-finite bbox {:?}", b.corners()));
        }
        if u_min > u_max || v_min > v_max {
            return Err(format!("inverted bbox {:?}", b.corners()));
        }
        Ok(b)
    }

    fn corners(&self) -> [f64; 4] {
        [self.u_min, self.v_min, self.u_max, self.v_max]
    }
}

impl TryFrom<[f64; 4]> for BoundingBox {
    type Error = String;

    fn try_from([a, b, c, d]: [f64; 4]) -> Result<Self, Self::Error> {
        BoundingBox::new(a, b, c, d)
    }
}

impl From<BoundingBox> for [f64; 4] {
    fn from(b: BoundingBox) -> Self {
        b.corners()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    #[serde(rename = "bbox")]
    pub bbox: BoundingBox,
    pub label: String,
    #[serde(rename = "conf", deserialize_with = "unit_interval")]
    pub confidence: f64,
}

fn unit_interval<'de, D: serde::Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
    let v = f64::deserialize(d)?;
    if (0.0..=1.0).contains(&v) {
        Ok(v)
    } else {
        Err(serde::de::Error::custom(format!("confidence {v} outside [0, 1]")))
    }
}

/// One camera frame: `{"ts": .., "detections": [..]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionFrame {
    #[serde(rename = "ts")]
    pub timestamp: f64,
    #[serde(default)]
    pub detections: Vec<Detection>,
}

/// Highest-confidence detection carrying `target_label`; earliest wins ties.
pub fn select_person<'a>(frame: &'a DetectionFrame, target_label: &str) -> Option<&'a Detection> {
    frame
        .detections
        .iter()
        .filter(|d| d.label == target_label)
        .fold(None, |best: Option<&Detection>, d| match best {
            Some(b) if b.confidence >= d.confidence => Some(b),
            _ => Some(d),
        })
}

/// Midpoint of the bottom (maximal-`v`) edge.
pub fn ground_point(d: &Detection) -> PixelPoint {
    PixelPoint::new((d.bbox.u_min + d.bbox.u_max) / 2.0, d.bbox.v_max)
}

/// A per-frame position label. `world` is `None` when no person was found.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabelEntry {
    pub timestamp: f64,
    pub world: Option<WorldPoint>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LabelStats {
    pub frames: usize,
    pub labeled: usize,
    pub no_person: usize,
    pub at_infinity: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabelStream {
    pub entries: Vec<LabelEntry>,
    pub stats: LabelStats,
}

pub fn label_stream(frames: &[DetectionFrame], h: &Homography, target_label: &str) -> LabelStream {
    let mut order: Vec<&DetectionFrame> = frames.iter().collect();
    // stable, so equal timestamps keep file order
    order.sort_by(|a, b| a.timestamp.total_cmp(&b.timestamp));

    let mut stats = LabelStats {
        frames: frames.len(),
        ..LabelStats::default()
    };
    let entries = order
        .into_iter()
        .map(|frame| {
            let world = match select_person(frame, target_label) {
                None => {
                    stats.no_person += 1;
                    None
                }
                Some(d) => match h.apply(ground_point(d)) {
                    Ok(p) => Some(p),
                    Err(_) => {
                        stats.at_infinity += 1;
                        None
                    }
                },
            };
            LabelEntry {
                timestamp: frame.timestamp,
                world,
            }
        })
        .collect();
    stats.labeled = stats.frames - stats.no_person - stats.at_infinity;
    LabelStream { entries, stats }
}

pub fn read_detections<R: BufRead>(reader: R) -> Result<Vec<DetectionFrame>, DetectionError> {
    let mut frames = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let frame: DetectionFrame = serde_json::from_str(&line).map_err(|e| DetectionError::Schema {
            line: i + 1,
            message: e.to_string(),
        })?;
        if !frame.timestamp.is_finite() {
            return Err(DetectionError::Schema {
                line: i + 1,
                message: "non-finite timestamp".into(),
            });
        }
        frames.push(frame);
    }
    Ok(frames)
}

pub fn write_detections<W: Write>(mut out: W, frames: &[DetectionFrame]) -> std::io::Result<()> {
    for frame in frames {
        serde_json::to_writer(&mut out, frame)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Label file line: `{"ts": .., "x": .., "y": ..}` with null coordinates when missing.
#[derive(Debug, Serialize, Deserialize)]
struct LabelLine {
    ts: f64,
    x: Option<f64>,
    y: Option<f64>,
}

pub fn write_labels<W: Write>(mut out: W, entries: &[LabelEntry]) -> std::io::Result<()> {
    for e in entries {
        let line = LabelLine {
            ts: e.timestamp,
            x: e.world.map(|p| p.x),
            y: e.world.map(|p| p.y),
        };
        serde_json::to_writer(&mut out, &line)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_labels<R: BufRead>(reader: R) -> Result<Vec<LabelEntry>, DetectionError> {
    let mut entries = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let schema = |message: String| DetectionError::Schema { line: i + 1, message };
        let l: LabelLine = serde_json::from_str(&line).map_err(|e| schema(e.to_string()))?;
        let world = match (l.x, l.y) {
            (Some(x), Some(y)) if x.is_finite() && y.is_finite() => Some(WorldPoint::new(x, y)),
            (None, None) => None,
            _ => return Err(schema("x and y must both be finite or both null".into())),
        };
        if !l.ts.is_finite() {
            return Err(schema("non-finite timestamp".into()));
        }
        entries.push(LabelEntry {
            timestamp: l.ts,
            world,
        });
    }
    Ok(entries)
}
