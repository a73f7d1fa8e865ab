//! Nearest-in-time join of CSI packets onto camera position labels.

use std::io::{BufRead, Write};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::csi::{CsiError, CsiSequence};
use crate::detection::LabelEntry;
use crate::geometry::WorldPoint;

#[derive(Debug, thiserror::Error)]
pub enum AlignError {
    #[error("label stream is empty")]
    EmptyLabels,
    #[error("label timestamps are not sorted at index {0}")]
    UnsortedLabels(usize),
    #[error("invalid max gap {0}")]
    InvalidMaxGap(f64),
    #[error("dataset line {line}: {message}")]
    Schema { line: usize, message: String },
    #[error(transparent)]
    Csv(#[from] CsiError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One dataset row: a CSI packet with the position of its nearest camera frame.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledFrame {
    pub timestamp: f64,
    pub world: WorldPoint,
    pub person_id: String,
    pub rssi: f64,
    pub csi: Vec<Complex64>,
    pub interpolated: bool,
    pub label_gap: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DropReport {
    /// Packets outside the label stream's time span by more than `max_gap`.
    pub no_label: usize,
    /// Packets whose nearest frame had no person.
    pub missing_detection: usize,
    /// Packets inside the label span whose nearest frame is farther than `max_gap`.
    pub gap_exceeded: usize,
}

impl DropReport {
    pub fn total(&self) -> usize {
        self.no_label + self.missing_detection + self.gap_exceeded
    }
}

pub fn default_max_gap(camera_rate: f64) -> f64 {
    2.0 / camera_rate
}

/// Distances closer than this are ties.
pub const TIE_EPSILON: f64 = 1e-9;

/// Index and distance of the label closest in time to `t`. Ties (within
/// [`TIE_EPSILON`]) and duplicate timestamps resolve to the earliest label.
pub fn nearest_label(t: f64, labels: &[LabelEntry]) -> Result<(usize, f64), AlignError> {
    if labels.is_empty() {
        return Err(AlignError::EmptyLabels);
    }
    let upper = labels.partition_point(|l| l.timestamp < t);
    let best = if upper == 0 {
        0
    } else if upper == labels.len() {
        labels.len() - 1
    } else {
        let before = t - labels[upper - 1].timestamp;
        let after = labels[upper].timestamp - t;
        if before <= after + TIE_EPSILON {
            upper - 1
        } else {
            upper
        }
    };
    let ts = labels[best].timestamp;
    let best = labels[..best].partition_point(|l| l.timestamp < ts);
    Ok((best, (t - ts).abs()))
}

fn check_sorted(labels: &[LabelEntry]) -> Result<(), AlignError> {
    match labels.windows(2).position(|w| w[1].timestamp < w[0].timestamp) {
        Some(i) => Err(AlignError::UnsortedLabels(i + 1)),
        None => Ok(()),
    }
}

pub fn align(
    seq: &CsiSequence,
    labels: &[LabelEntry],
    person_id: &str,
    max_gap: f64,
) -> Result<(Vec<LabeledFrame>, DropReport), AlignError> {
    if labels.is_empty() {
        return Err(AlignError::EmptyLabels);
    }
    if max_gap.is_nan() || max_gap < 0.0 {
        return Err(AlignError::InvalidMaxGap(max_gap));
    }
    check_sorted(labels)?;
    let first = labels[0].timestamp;
    let last = labels[labels.len() - 1].timestamp;

    let mut drops = DropReport::default();
    let mut frames = Vec::with_capacity(seq.len());
    for packet in seq.packets() {
        let (m, gap) = nearest_label(packet.timestamp, labels)?;
        let Some(world) = labels[m].world else {
            drops.missing_detection += 1;
            continue;
        };
        if gap > max_gap {
            if packet.timestamp < first || packet.timestamp > last {
                drops.no_label += 1;
            } else {
                drops.gap_exceeded += 1;
            }
            continue;
        }
        frames.push(LabeledFrame {
            timestamp: packet.timestamp,
            world,
            person_id: person_id.to_string(),
            rssi: packet.rssi,
            csi: packet.csi.clone(),
            interpolated: packet.interpolated,
            label_gap: gap,
        });
    }
    Ok((frames, drops))
}

#[derive(Debug, Serialize, Deserialize)]
struct DatasetLine {
    ts: f64,
    x: f64,
    y: f64,
    person_id: String,
    rssi: f64,
    csi_re: Vec<f64>,
    csi_im: Vec<f64>,
    interp: u8,
    label_gap: f64,
}

pub fn write_dataset_jsonl<W: Write>(mut out: W, frames: &[LabeledFrame]) -> std::io::Result<()> {
    for f in frames {
        let line = DatasetLine {
            ts: f.timestamp,
            x: f.world.x,
            y: f.world.y,
            person_id: f.person_id.clone(),
            rssi: f.rssi,
            csi_re: f.csi.iter().map(|c| c.re).collect(),
            csi_im: f.csi.iter().map(|c| c.im).collect(),
            interp: f.interpolated as u8,
            label_gap: f.label_gap,
        };
        serde_json::to_writer(&mut out, &line)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_dataset_jsonl<R: BufRead>(reader: R) -> Result<Vec<LabeledFrame>, AlignError> {
    let mut frames = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let schema = |message: String| AlignError::Schema { line: i + 1, message };
        let l: DatasetLine = serde_json::from_str(&line).map_err(|e| schema(e.to_string()))?;
        if l.csi_re.len() != l.csi_im.len() {
            return Err(schema("csi_re and csi_im differ in length".into()));
        }
        if l.interp > 1 {
            return Err(schema(format!("interp must be 0 or 1, got {}", l.interp)));
        }
        frames.push(LabeledFrame {
            timestamp: l.ts,
            world: WorldPoint::new(l.x, l.y),
            person_id: l.person_id,
            rssi: l.rssi,
            csi: l.csi_re.iter().zip(&l.csi_im).map(|(&re, &im)| Complex64::new(re, im)).collect(),
            interpolated: l.interp == 1,
            label_gap: l.label_gap,
        });
    }
    Ok(frames)
}

/// CSV variant: the CSI input columns followed by `interp,x,y,person_id`.
pub fn write_dataset_csv<W: Write>(out: W, frames: &[LabeledFrame], subcarriers: usize) -> Result<(), AlignError> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["ts".to_string(), "rssi".to_string()];
    for k in 0..subcarriers {
        header.push(format!("re_{k}"));
        header.push(format!("im_{k}"));
    }
    header.extend(["interp", "x", "y", "person_id"].map(String::from));
    w.write_record(&header).map_err(CsiError::from)?;
    for f in frames {
        let mut record = vec![f.timestamp.to_string(), f.rssi.to_string()];
        for c in &f.csi {
            record.push(c.re.to_string());
            record.push(c.im.to_string());
        }
        record.push((f.interpolated as u8).to_string());
        record.push(f.world.x.to_string());
        record.push(f.world.y.to_string());
        record.push(f.person_id.clone());
        w.write_record(&record).map_err(CsiError::from)?;
    }
    w.flush()?;
    Ok(())
}
