//! End-to-end labeling: detections → positions, CSI repair, alignment.

use serde::{Deserialize, Serialize};

use crate::align::{self, DropReport, LabeledFrame};
use crate::csi::{self, CompletionReport, CsiPacket, IngestReport};
use crate::detection::{self, DetectionFrame, LabelStats, DEFAULT_TARGET_LABEL};
use crate::geometry::Homography;
use crate::Error;

/// Width of one label-gap histogram bin, seconds.
pub const GAP_BIN_S: f64 = 0.005;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineOptions {
    pub target_label: String,
    pub person_id: String,
    pub camera_rate: f64,
    pub csi_rate: f64,
    pub subcarriers: usize,
    /// Defaults to two camera periods.
    pub max_gap: Option<f64>,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        Self {
            target_label: DEFAULT_TARGET_LABEL.to_string(),
            person_id: "P1".to_string(),
            camera_rate: 26.0,
            csi_rate: csi::DEFAULT_RATE_HZ,
            subcarriers: csi::DEFAULT_SUBCARRIERS,
            max_gap: None,
        }
    }
}

impl PipelineOptions {
    pub fn effective_max_gap(&self) -> f64 {
        self.max_gap.unwrap_or_else(|| align::default_max_gap(self.camera_rate))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapHistogram {
    pub bin_width: f64,
    /// `counts[i]` covers `[i * bin_width, (i + 1) * bin_width)`.
    pub counts: Vec<usize>,
    pub max: f64,
    pub mean: f64,
}

impl GapHistogram {
    pub fn from_frames(frames: &[LabeledFrame], bin_width: f64) -> Self {
        let max = frames.iter().map(|f| f.label_gap).fold(0.0, f64::max);
        let bins = (max / bin_width).floor() as usize + 1;
        let mut counts = vec![0; if frames.is_empty() { 0 } else { bins }];
        for f in frames {
            counts[((f.label_gap / bin_width).floor() as usize).min(bins - 1)] += 1;
        }
        let mean = if frames.is_empty() {
            0.0
        } else {
            frames.iter().map(|f| f.label_gap).sum::<f64>() / frames.len() as f64
        };
        Self {
            bin_width,
            counts,
            max,
            mean,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub ingest: IngestReport,
    pub labels: LabelStats,
    pub completion: CompletionReport,
    pub max_gap: f64,
    pub labeled: usize,
    pub drops: DropReport,
    pub label_gap: GapHistogram,
}

impl RunReport {
    /// Every completed packet is either labeled or counted under one drop reason.
    pub fn is_conserved(&self) -> bool {
        self.labeled + self.drops.total() == self.completion.output_packets
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOutput {
    pub dataset: Vec<LabeledFrame>,
    pub report: RunReport,
}

pub fn run(
    homography: &Homography,
    frames: &[DetectionFrame],
    csi_rows: Vec<CsiPacket>,
    opts: &PipelineOptions,
) -> Result<PipelineOutput, Error> {
    let labels = detection::label_stream(frames, homography, &opts.target_label);
    let (seq, ingest) = csi::ingest(csi_rows, opts.csi_rate, opts.subcarriers)?;
    let (completed, completion) = csi::complete(&seq)?;
    let max_gap = opts.effective_max_gap();
    let (dataset, drops) = align::align(&completed, &labels.entries, &opts.person_id, max_gap)?;
    let report = RunReport {
        ingest,
        labels: labels.stats,
        completion,
        max_gap,
        labeled: dataset.len(),
        drops,
        label_gap: GapHistogram::from_frames(&dataset, GAP_BIN_S),
    };
    Ok(PipelineOutput { dataset, report })
}
