//! Synthetic scenarios with known ground truth.
//!
//! A single person follows a random-waypoint path (uniform waypoints, uniform
//! leg speed, optional dwell pauses) inside the region. The camera observes
//! the ground contact point through the inverse of the scenario homography
//! with Gaussian pixel noise and random misses; the CSI receiver samples a
//! smooth, position-dependent synthetic channel on a jittered clock and drops
//! packets at random. The channel model is not physical; it only has to be
//! deterministic and position dependent.

use std::f64::consts::TAU;
use std::io::{BufRead, Write};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::csi::CsiPacket;
use crate::detection::{BoundingBox, Detection, DetectionFrame, DEFAULT_TARGET_LABEL};
use crate::features::ErrorSummary;
use crate::geometry::{AnchorSet, GeometryError, Homography, PixelPoint, WorldPoint};

/// Person box size in pixels; the ground point is the bottom-edge midpoint.
const BOX_WIDTH_PX: f64 = 40.0;
const BOX_HEIGHT_PX: f64 = 120.0;
/// Jitter is truncated to this fraction of the CSI period so order is kept.
const JITTER_TRUNCATION: f64 = 0.45;

const TRAJECTORY_STREAM: u64 = 0;
const CAMERA_STREAM: u64 = 1;
const CSI_STREAM: u64 = 2;

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("no produced samples to evaluate")]
    EmptyInput,
    #[error("truth line {line}: {message}")]
    Schema { line: usize, message: String },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Pixel → world map of a camera looking down the long axis of a 1.8 m × 4.8 m
/// region; the near edge spans pixels 100..540 at v = 400 and the far edge
/// 20..620 at v = 80.
pub const DEFAULT_HOMOGRAPHY: [f64; 9] = [
    9.0 / 3200.0,
    -9.0 / 12800.0,
    0.0,
    0.0,
    -9.0 / 640.0,
    45.0 / 8.0,
    0.0,
    -1.0 / 1280.0,
    1.0,
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Scenario {
    pub region_x: f64,
    pub region_y: f64,
    /// Seconds.
    pub duration: f64,
    /// Camera frame rate, Hz.
    pub camera_rate: f64,
    /// CSI packet rate, Hz.
    pub csi_rate: f64,
    /// Row-major pixel → world matrix.
    pub homography: [f64; 9],
    pub pixel_noise_sigma: f64,
    pub miss_probability: f64,
    pub loss_probability: f64,
    /// Seconds, Gaussian, truncated at 0.45 of the CSI period.
    pub jitter_sigma: f64,
    /// m/s.
    pub speed_min: f64,
    pub speed_max: f64,
    /// Chance of a dwell before each leg.
    pub pause_probability: f64,
    /// Longest dwell, seconds.
    pub pause_max: f64,
    /// Chance per frame of an extra non-person detection.
    pub distractor_probability: f64,
    pub subcarriers: usize,
    pub seed: u64,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            region_x: 1.8,
            region_y: 4.8,
            duration: 300.0,
            camera_rate: 26.0,
            csi_rate: 100.0,
            homography: DEFAULT_HOMOGRAPHY,
            pixel_noise_sigma: 0.0,
            miss_probability: 0.0,
            loss_probability: 0.0,
            jitter_sigma: 0.0,
            speed_min: 0.3,
            speed_max: 1.5,
            pause_probability: 0.3,
            pause_max: 2.0,
            distractor_probability: 0.0,
            subcarriers: crate::csi::DEFAULT_SUBCARRIERS,
            seed: 0,
        }
    }
}

impl Scenario {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::InvalidScenario(m));
        let positive = [
            ("region_x", self.region_x),
            ("region_y", self.region_y),
            ("duration", self.duration),
            ("camera_rate", self.camera_rate),
            ("csi_rate", self.csi_rate),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return bad(format!("{name} = {v} must be positive"));
            }
        }
        let probabilities = [
            ("miss_probability", self.miss_probability),
            ("loss_probability", self.loss_probability),
            ("pause_probability", self.pause_probability),
            ("distractor_probability", self.distractor_probability),
        ];
        for (name, p) in probabilities {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} = {p} must lie in [0, 1]"));
            }
        }
        let non_negative = [
            ("pixel_noise_sigma", self.pixel_noise_sigma),
            ("jitter_sigma", self.jitter_sigma),
            ("speed_min", self.speed_min),
            ("pause_max", self.pause_max),
        ];
        for (name, v) in non_negative {
            if !(v.is_finite() && v >= 0.0) {
                return bad(format!("{name} = {v} must be non-negative"));
            }
        }
        if !(self.speed_max.is_finite() && self.speed_max >= self.speed_min) {
            return bad(format!("speed range [{}, {}] is empty", self.speed_min, self.speed_max));
        }
        if self.subcarriers == 0 {
            return bad("subcarriers must be positive".into());
        }
        self.true_homography()?;
        Ok(())
    }

    pub fn true_homography(&self) -> Result<Homography, GeometryError> {
        let m = self.homography;
        Homography::from_rows([[m[0], m[1], m[2]], [m[3], m[4], m[5]], [m[6], m[7], m[8]]])
    }

    pub fn camera_frames(&self) -> usize {
        sample_count(self.duration, self.camera_rate)
    }

    pub fn csi_packets(&self) -> usize {
        sample_count(self.duration, self.csi_rate)
    }

    /// Region corners with their projected pixel positions.
    pub fn corner_anchors(&self) -> Result<AnchorSet, GeometryError> {
        let world = [
            WorldPoint::new(0.0, 0.0),
            WorldPoint::new(self.region_x, 0.0),
            WorldPoint::new(self.region_x, self.region_y),
            WorldPoint::new(0.0, self.region_y),
        ];
        let h = self.true_homography()?;
        let mut pixel = [PixelPoint::new(0.0, 0.0); 4];
        for (px, w) in pixel.iter_mut().zip(&world) {
            *px = h.apply_inverse(*w)?;
        }
        AnchorSet::new(pixel, world)
    }

    fn rng(&self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        rng
    }
}

/// Samples on `[0, duration)` at `rate`.
fn sample_count(duration: f64, rate: f64) -> usize {
    (duration * rate - 1e-9).ceil().max(0.0) as usize
}

/// Constant-velocity piece of the trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub t0: f64,
    pub t1: f64,
    pub from: WorldPoint,
    pub to: WorldPoint,
}

impl Segment {
    fn at(&self, t: f64) -> WorldPoint {
        if self.t1 <= self.t0 {
            return self.to;
        }
        let a = ((t - self.t0) / (self.t1 - self.t0)).clamp(0.0, 1.0);
        WorldPoint::new(
            self.from.x + a * (self.to.x - self.from.x),
            self.from.y + a * (self.to.y - self.from.y),
        )
    }

    pub fn speed(&self) -> f64 {
        if self.t1 <= self.t0 {
            0.0
        } else {
            self.from.distance(&self.to) / (self.t1 - self.t0)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    segments: Vec<Segment>,
}

impl Trajectory {
    pub fn new(segments: Vec<Segment>) -> Self {
        assert!(!segments.is_empty(), "trajectory needs at least one segment");
        Self { segments }
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    /// Position at `t`, held constant outside the covered interval.
    pub fn position(&self, t: f64) -> WorldPoint {
        let i = self.segments.partition_point(|s| s.t1 < t);
        self.segments[i.min(self.segments.len() - 1)].at(t)
    }

    fn random_waypoint<R: Rng>(sc: &Scenario, rng: &mut R) -> Self {
        let point = |rng: &mut R| WorldPoint::new(rng.random::<f64>() * sc.region_x, rng.random::<f64>() * sc.region_y);
        let mut here = point(rng);
        let mut t = 0.0;
        let mut segments = Vec::new();
        while t < sc.duration {
            if sc.pause_max > 0.0 && rng.random_bool(sc.pause_probability) {
                let dwell = rng.random::<f64>() * sc.pause_max;
                segments.push(Segment {
                    t0: t,
                    t1: t + dwell,
                    from: here,
                    to: here,
                });
                t += dwell;
            }
            let next = point(rng);
            let speed = sc.speed_min + rng.random::<f64>() * (sc.speed_max - sc.speed_min);
            if speed <= 1e-9 {
                segments.push(Segment {
                    t0: t,
                    t1: sc.duration.max(t),
                    from: here,
                    to: here,
                });
                break;
            }
            let leg = here.distance(&next) / speed;
            segments.push(Segment {
                t0: t,
                t1: t + leg,
                from: here,
                to: next,
            });
            t += leg;
            here = next;
        }
        if segments.is_empty() {
            segments.push(Segment {
                t0: 0.0,
                t1: sc.duration,
                from: here,
                to: here,
            });
        }
        Self { segments }
    }
}

/// A ground-truth sample on one modality clock.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruthSample {
    pub timestamp: f64,
    pub world: WorldPoint,
    /// Missed detection (camera) or lost packet (CSI).
    pub dropped: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub trajectory: Trajectory,
    pub camera: Vec<TruthSample>,
    pub csi: Vec<TruthSample>,
}

impl GroundTruth {
    pub fn position(&self, t: f64) -> WorldPoint {
        self.trajectory.position(t)
    }

    pub fn dropped_packets(&self) -> usize {
        self.csi.iter().filter(|s| s.dropped).count()
    }

    /// Losses between the first and last received packet, the only ones a
    /// timestamp-gap detector can see.
    pub fn interior_dropped_packets(&self) -> usize {
        let first = self.csi.iter().position(|s| !s.dropped);
        let last = self.csi.iter().rposition(|s| !s.dropped);
        match (first, last) {
            (Some(a), Some(b)) => self.csi[a..=b].iter().filter(|s| s.dropped).count(),
            _ => 0,
        }
    }

    pub fn missed_frames(&self) -> usize {
        self.camera.iter().filter(|s| s.dropped).count()
    }

    pub fn max_speed(&self) -> f64 {
        self.trajectory.segments.iter().map(Segment::speed).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimOutput {
    pub frames: Vec<DetectionFrame>,
    /// Received packets in arrival order, ready for CSV export.
    pub packets: Vec<CsiPacket>,
    pub truth: GroundTruth,
}

/// Smooth per-subcarrier channel as a function of position.
pub fn synthetic_csi(p: WorldPoint, subcarriers: usize) -> Vec<Complex64> {
    (0..subcarriers)
        .map(|k| {
            let f = k as f64 / subcarriers as f64;
            let amp = 1.0
                + 0.4 * ((1.3 + 2.9 * f) * p.x + (0.7 + 1.1 * f) * p.y + TAU * f).sin()
                + 0.3 * ((2.2 - 1.4 * f) * p.x - (1.6 + 0.8 * f) * p.y + 1.7 * TAU * f).cos();
            let phase = 3.0 * TAU * f + 0.5 * p.x + 0.2 * p.y;
            Complex64::from_polar(amp, phase)
        })
        .collect()
}

/// RSSI falling off with distance from a transmitter just outside the region.
pub fn synthetic_rssi(p: WorldPoint) -> f64 {
    let d = p.distance(&WorldPoint::new(0.9, -1.0));
    -35.0 - 12.0 * (1.0 + d).log10()
}

pub fn generate(sc: &Scenario) -> Result<SimOutput, SimError> {
    sc.validate()?;
    let trajectory = Trajectory::random_waypoint(sc, &mut sc.rng(TRAJECTORY_STREAM));
    let h = sc.true_homography()?;

    let mut rng = sc.rng(CAMERA_STREAM);
    let mut frames = Vec::with_capacity(sc.camera_frames());
    let mut camera = Vec::with_capacity(sc.camera_frames());
    for m in 0..sc.camera_frames() {
        let ts = m as f64 / sc.camera_rate;
        let world = trajectory.position(ts);
        let ground = h.apply_inverse(world)?;
        let du: f64 = rng.sample(StandardNormal);
        let dv: f64 = rng.sample(StandardNormal);
        let (u, v) = (ground.u + sc.pixel_noise_sigma * du, ground.v + sc.pixel_noise_sigma * dv);
        let missed = rng.random_bool(sc.miss_probability);
        let confidence = 0.5 + 0.5 * rng.random::<f64>();
        let mut detections = Vec::new();
        if !missed {
            detections.push(Detection {
                bbox: BoundingBox::new(u - BOX_WIDTH_PX / 2.0, v - BOX_HEIGHT_PX, u + BOX_WIDTH_PX / 2.0, v)
                    .map_err(SimError::InvalidScenario)?,
                label: DEFAULT_TARGET_LABEL.to_string(),
                confidence,
            });
        }
        if rng.random_bool(sc.distractor_probability) {
            let (cu, cv) = (rng.random::<f64>() * 600.0, rng.random::<f64>() * 440.0);
            detections.push(Detection {
                bbox: BoundingBox::new(cu, cv, cu + 40.0, cv + 40.0).map_err(SimError::InvalidScenario)?,
                label: "chair".to_string(),
                confidence: rng.random::<f64>(),
            });
        }
        frames.push(DetectionFrame {
            timestamp: ts,
            detections,
        });
        camera.push(TruthSample {
            timestamp: ts,
            world,
            dropped: missed,
        });
    }

    let mut rng = sc.rng(CSI_STREAM);
    let period = 1.0 / sc.csi_rate;
    let bound = JITTER_TRUNCATION * period;
    let mut packets = Vec::with_capacity(sc.csi_packets());
    let mut csi = Vec::with_capacity(sc.csi_packets());
    for n in 0..sc.csi_packets() {
        let z: f64 = rng.sample(StandardNormal);
        let jitter = (sc.jitter_sigma * z).clamp(-bound, bound);
        let ts = n as f64 * period + jitter;
        let dropped = rng.random_bool(sc.loss_probability);
        let world = trajectory.position(ts);
        if !dropped {
            packets.push(CsiPacket::new(ts, synthetic_rssi(world), synthetic_csi(world, sc.subcarriers)));
        }
        csi.push(TruthSample {
            timestamp: ts,
            world,
            dropped,
        });
    }

    Ok(SimOutput {
        frames,
        packets,
        truth: GroundTruth {
            trajectory,
            camera,
            csi,
        },
    })
}

/// Euclidean error of each produced sample against the trajectory at its timestamp.
pub fn eval_labels(produced: &[(f64, WorldPoint)], truth: &GroundTruth) -> Result<ErrorSummary, SimError> {
    let errors: Vec<f64> = produced
        .iter()
        .map(|(t, p)| p.distance(&truth.position(*t)))
        .collect();
    ErrorSummary::from_errors(&errors).ok_or(SimError::EmptyInput)
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum TruthLine {
    Segment {
        t0: f64,
        t1: f64,
        x0: f64,
        y0: f64,
        x1: f64,
        y1: f64,
    },
    Camera {
        ts: f64,
        x: f64,
        y: f64,
        dropped: bool,
    },
    Csi {
        ts: f64,
        x: f64,
        y: f64,
        dropped: bool,
    },
}

/// `truth.jsonl`: trajectory segments, then camera samples, then CSI samples.
pub fn write_truth<W: Write>(mut out: W, truth: &GroundTruth) -> std::io::Result<()> {
    let mut emit = |line: TruthLine| -> std::io::Result<()> {
        serde_json::to_writer(&mut out, &line)?;
        out.write_all(b"\n")
    };
    for s in truth.trajectory.segments() {
        emit(TruthLine::Segment {
            t0: s.t0,
            t1: s.t1,
            x0: s.from.x,
            y0: s.from.y,
            x1: s.to.x,
            y1: s.to.y,
        })?;
    }
    for s in &truth.camera {
        emit(TruthLine::Camera {
            ts: s.timestamp,
            x: s.world.x,
            y: s.world.y,
            dropped: s.dropped,
        })?;
    }
    for s in &truth.csi {
        emit(TruthLine::Csi {
            ts: s.timestamp,
            x: s.world.x,
            y: s.world.y,
            dropped: s.dropped,
        })?;
    }
    Ok(())
}

pub fn read_truth<R: BufRead>(reader: R) -> Result<GroundTruth, SimError> {
    let (mut segments, mut camera, mut csi) = (Vec::new(), Vec::new(), Vec::new());
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: TruthLine = serde_json::from_str(&line).map_err(|e| SimError::Schema {
            line: i + 1,
            message: e.to_string(),
        })?;
        match parsed {
            TruthLine::Segment { t0, t1, x0, y0, x1, y1 } => segments.push(Segment {
                t0,
                t1,
                from: WorldPoint::new(x0, y0),
                to: WorldPoint::new(x1, y1),
            }),
            TruthLine::Camera { ts, x, y, dropped } => camera.push(TruthSample {
                timestamp: ts,
                world: WorldPoint::new(x, y),
                dropped,
            }),
            TruthLine::Csi { ts, x, y, dropped } => csi.push(TruthSample {
                timestamp: ts,
                world: WorldPoint::new(x, y),
                dropped,
            }),
        }
    }
    if segments.is_empty() {
        return Err(SimError::Schema {
            line: 0,
            message: "truth file has no trajectory segments".into(),
        });
    }
    Ok(GroundTruth {
        trajectory: Trajectory::new(segments),
        camera,
        csi,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn short(seconds: f64) -> Scenario {
        Scenario {
            duration: seconds,
            ..Scenario::default()
        }
    }

    #[test]
    fn counts_follow_rates() {
        let out = generate(&short(10.0)).unwrap();
        assert_eq!(out.frames.len(), 260);
        assert_eq!(out.packets.len(), 1000);
        assert_eq!(out.truth.dropped_packets(), 0);
    }

    #[test]
    fn stationary_when_speed_zero() {
        let sc = Scenario {
            speed_min: 0.0,
            speed_max: 0.0,
            ..short(5.0)
        };
        let out = generate(&sc).unwrap();
        let start = out.truth.camera[0].world;
        assert!(out.truth.camera.iter().all(|s| s.world == start));
        assert!(out.truth.csi.iter().all(|s| s.world == start));
    }

    #[test]
    fn trajectory_stays_in_region_and_speed_range() {
        let sc = short(120.0);
        let out = generate(&sc).unwrap();
        for s in out.truth.trajectory.segments() {
            for p in [s.from, s.to] {
                assert!((0.0..=sc.region_x).contains(&p.x) && (0.0..=sc.region_y).contains(&p.y));
            }
            let v = s.speed();
            assert!(v == 0.0 || (v >= sc.speed_min - 1e-9 && v <= sc.speed_max + 1e-9));
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let sc = Scenario {
            pixel_noise_sigma: 2.0,
            loss_probability: 0.1,
            miss_probability: 0.05,
            jitter_sigma: 0.001,
            distractor_probability: 0.2,
            ..short(20.0)
        };
        assert_eq!(generate(&sc).unwrap(), generate(&sc).unwrap());
        let other = Scenario { seed: 1, ..sc.clone() };
        assert_ne!(generate(&sc).unwrap().packets, generate(&other).unwrap().packets);
    }

    #[test]
    fn jitter_preserves_order() {
        let sc = Scenario {
            jitter_sigma: 0.05,
            ..short(10.0)
        };
        let out = generate(&sc).unwrap();
        assert!(out.packets.windows(2).all(|w| w[0].timestamp < w[1].timestamp));
    }

    #[test]
    fn loss_is_binomial() {
        let sc = Scenario {
            loss_probability: 0.1,
            ..short(100.0)
        };
        let out = generate(&sc).unwrap();
        let n = out.truth.csi.len() as f64;
        assert_eq!(n, 1e4);
        let sigma = (n * 0.1 * 0.9).sqrt();
        let dropped = out.truth.dropped_packets() as f64;
        assert!((dropped - 0.1 * n).abs() <= 3.0 * sigma, "dropped {dropped}");
        assert_eq!(out.packets.len() + out.truth.dropped_packets(), 10_000);
    }

    #[test]
    fn corner_anchors_project_region() {
        let sc = Scenario::default();
        let anchors = sc.corner_anchors().unwrap();
        let expect = [(100.0, 400.0), (540.0, 400.0), (620.0, 80.0), (20.0, 80.0)];
        for (p, (u, v)) in anchors.pixel().iter().zip(expect) {
            assert!((p.u - u).abs() < 1e-9 && (p.v - v).abs() < 1e-9, "{p:?}");
        }
    }

    #[test]
    fn eval_offsets() {
        let out = generate(&short(5.0)).unwrap();
        let exact: Vec<_> = out.truth.camera.iter().map(|s| (s.timestamp, s.world)).collect();
        let summary = eval_labels(&exact, &out.truth).unwrap();
        assert_eq!(summary.mean, 0.0);
        assert_eq!(summary.std, 0.0);

        let shifted: Vec<_> = exact
            .iter()
            .map(|(t, p)| (*t, WorldPoint::new(p.x + 0.1, p.y)))
            .collect();
        let summary = eval_labels(&shifted, &out.truth).unwrap();
        assert!((summary.mean - 0.1).abs() < 1e-12);
        assert!(summary.std < 1e-12);
        assert!(matches!(eval_labels(&[], &out.truth), Err(SimError::EmptyInput)));
    }

    #[test]
    fn truth_file_roundtrip() {
        let sc = Scenario {
            loss_probability: 0.2,
            ..short(3.0)
        };
        let out = generate(&sc).unwrap();
        let mut buf = Vec::new();
        write_truth(&mut buf, &out.truth).unwrap();
        assert_eq!(read_truth(buf.as_slice()).unwrap(), out.truth);
    }

    #[test]
    fn rejects_bad_scenarios() {
        for sc in [
            Scenario {
                loss_probability: 1.5,
                ..Scenario::default()
            },
            Scenario {
                camera_rate: 0.0,
                ..Scenario::default()
            },
            Scenario {
                speed_min: 2.0,
                speed_max: 1.0,
                ..Scenario::default()
            },
        ] {
            assert!(matches!(generate(&sc), Err(SimError::InvalidScenario(_))));
        }
    }
}
