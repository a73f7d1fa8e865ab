//! Benchmark preprocessing: amplitude windows, subcarrier correlation,
//! per-subcarrier standardization, region classes and a k-NN baseline.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::align::LabeledFrame;
use crate::geometry::WorldPoint;

pub const DEFAULT_WINDOW: usize = 100;
pub const DEFAULT_STRIDE: usize = 25;
pub const DEFAULT_K: usize = 5;
/// Points this far outside the region are clamped onto it.
pub const REGION_CLAMP_M: f64 = 0.01;
const STD_EPSILON: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FeatureError {
    #[error("need at least {needed} frames, got {got}")]
    TooShort { needed: usize, got: usize },
    #[error("invalid window: {0}")]
    InvalidWindow(String),
    #[error("point ({x}, {y}) lies outside the region")]
    OutOfRegion { x: f64, y: f64 },
    #[error("invalid region grid: {0}")]
    InvalidGrid(String),
    #[error("training set is empty")]
    EmptyTrain,
    #[error("feature shape {got:?} does not match training shape {expected:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        got: (usize, usize),
    },
}

/// `t × s` amplitude matrix: rows are packets, columns subcarriers.
#[derive(Debug, Clone, PartialEq)]
pub struct AmplitudeWindow {
    matrix: DMatrix<f64>,
    start: f64,
}

impl AmplitudeWindow {
    pub fn new(matrix: DMatrix<f64>, start: f64) -> Result<Self, FeatureError> {
        if matrix.nrows() < 2 {
            return Err(FeatureError::InvalidWindow(format!(
                "window has {} rows, need at least 2",
                matrix.nrows()
            )));
        }
        if matrix.ncols() == 0 {
            return Err(FeatureError::InvalidWindow("window has no subcarriers".into()));
        }
        Ok(Self { matrix, start })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn start(&self) -> f64 {
        self.start
    }
}

/// `Mᵀ·M`, the `s × s` subcarrier correlation matrix.
pub fn correlation_matrix(w: &AmplitudeWindow) -> DMatrix<f64> {
    w.matrix.tr_mul(&w.matrix)
}

/// Zero mean, unit population deviation per column; flat columns become zero.
pub fn standardize(w: &AmplitudeWindow) -> AmplitudeWindow {
    let mut m = w.matrix.clone();
    let n = m.nrows() as f64;
    for mut col in m.column_iter_mut() {
        let mean = col.sum() / n;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let std = var.sqrt();
        if std < STD_EPSILON {
            col.fill(0.0);
        } else {
            col.apply(|v| *v = (*v - mean) / std);
        }
    }
    AmplitudeWindow {
        matrix: m,
        start: w.start,
    }
}

/// Sliding windows of `length` frames every `stride` frames, each paired with
/// the last frame's position. A trailing partial window is dropped.
pub fn windows(
    frames: &[LabeledFrame],
    length: usize,
    stride: usize,
) -> Result<Vec<(AmplitudeWindow, WorldPoint)>, FeatureError> {
    if length < 2 {
        return Err(FeatureError::InvalidWindow(format!("length {length} < 2")));
    }
    if stride == 0 {
        return Err(FeatureError::InvalidWindow("stride must be at least 1".into()));
    }
    if frames.len() < length {
        return Err(FeatureError::TooShort {
            needed: length,
            got: frames.len(),
        });
    }
    let s = frames[0].csi.len();
    if let Some(bad) = frames.iter().find(|f| f.csi.len() != s) {
        return Err(FeatureError::InvalidWindow(format!(
            "frame at {} has {} subcarriers, expected {s}",
            bad.timestamp,
            bad.csi.len()
        )));
    }
    let count = (frames.len() - length) / stride + 1;
    (0..count)
        .map(|i| {
            let chunk = &frames[i * stride..i * stride + length];
            let m = DMatrix::from_fn(length, s, |r, c| chunk[r].csi[c].norm());
            Ok((AmplitudeWindow::new(m, chunk[0].timestamp)?, chunk[length - 1].world))
        })
        .collect()
}

/// Rectangular region `[0, x_len] × [0, y_len]` cut into `n_x × n_y` cells.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionGrid {
    pub x_len: f64,
    pub y_len: f64,
    pub n_x: usize,
    pub n_y: usize,
}

impl RegionGrid {
    pub fn new(x_len: f64, y_len: f64, n_x: usize, n_y: usize) -> Result<Self, FeatureError> {
        if !(x_len > 0.0 && y_len > 0.0 && x_len.is_finite() && y_len.is_finite()) {
            return Err(FeatureError::InvalidGrid(format!("extents {x_len} x {y_len} must be positive")));
        }
        if n_x == 0 || n_y == 0 {
            return Err(FeatureError::InvalidGrid("cell counts must be positive".into()));
        }
        Ok(Self { x_len, y_len, n_x, n_y })
    }

    /// 2 → 1×2, 4 → 2×2, 6 → 2×3, with the larger count on the longer axis.
    pub fn with_classes(x_len: f64, y_len: f64, classes: usize) -> Result<Self, FeatureError> {
        let (short, long) = match classes {
            2 => (1, 2),
            4 => (2, 2),
            6 => (2, 3),
            other => {
                return Err(FeatureError::InvalidGrid(format!(
                    "{other} classes; expected 2, 4 or 6"
                )))
            }
        };
        if y_len >= x_len {
            Self::new(x_len, y_len, short, long)
        } else {
            Self::new(x_len, y_len, long, short)
        }
    }

    pub fn classes(&self) -> usize {
        self.n_x * self.n_y
    }

    pub fn center(&self) -> WorldPoint {
        WorldPoint::new(self.x_len / 2.0, self.y_len / 2.0)
    }
}

fn cell(value: f64, len: f64, n: usize) -> Option<usize> {
    if value < -REGION_CLAMP_M || value > len + REGION_CLAMP_M || !value.is_finite() {
        return None;
    }
    let v = value.clamp(0.0, len);
    Some(((v * n as f64 / len).floor() as usize).min(n - 1))
}

/// Row-major cell index `y_cell * n_x + x_cell`; cells are half-open except
/// the last along each axis.
pub fn region_class(p: WorldPoint, g: &RegionGrid) -> Result<usize, FeatureError> {
    match (cell(p.x, g.x_len, g.n_x), cell(p.y, g.y_len, g.n_y)) {
        (Some(cx), Some(cy)) => Ok(cy * g.n_x + cx),
        _ => Err(FeatureError::OutOfRegion { x: p.x, y: p.y }),
    }
}

/// k-nearest-neighbor regression under Frobenius distance.
#[derive(Debug, Clone)]
pub struct KnnLocalizer {
    k: usize,
    train: Vec<(DMatrix<f64>, WorldPoint)>,
}

impl KnnLocalizer {
    pub fn new(train: Vec<(DMatrix<f64>, WorldPoint)>, k: usize) -> Result<Self, FeatureError> {
        let Some((first, _)) = train.first() else {
            return Err(FeatureError::EmptyTrain);
        };
        let shape = first.shape();
        if let Some((m, _)) = train.iter().find(|(m, _)| m.shape() != shape) {
            return Err(FeatureError::ShapeMismatch {
                expected: shape,
                got: m.shape(),
            });
        }
        if k == 0 {
            return Err(FeatureError::InvalidWindow("k must be at least 1".into()));
        }
        Ok(Self { k, train })
    }

    /// Mean position of the `k` closest samples; equal distances keep
    /// training order.
    pub fn localize(&self, query: &DMatrix<f64>) -> Result<WorldPoint, FeatureError> {
        let expected = self.train[0].0.shape();
        if query.shape() != expected {
            return Err(FeatureError::ShapeMismatch {
                expected,
                got: query.shape(),
            });
        }
        let mut dist: Vec<(f64, usize)> = self
            .train
            .iter()
            .enumerate()
            .map(|(i, (m, _))| ((m - query).norm_squared(), i))
            .collect();
        let k = self.k.min(dist.len());
        let by_dist = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if k < dist.len() {
            dist.select_nth_unstable_by(k - 1, by_dist);
        }
        let nearest = &mut dist[..k];
        nearest.sort_unstable_by(by_dist);
        let (sx, sy) = nearest.iter().fold((0.0, 0.0), |(sx, sy), &(_, i)| {
            let p = self.train[i].1;
            (sx + p.x, sy + p.y)
        });
        Ok(WorldPoint::new(sx / k as f64, sy / k as f64))
    }
}

pub fn knn_localize(
    train: &[(DMatrix<f64>, WorldPoint)],
    query: &DMatrix<f64>,
    k: usize,
) -> Result<WorldPoint, FeatureError> {
    KnnLocalizer::new(train.to_vec(), k)?.localize(query)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureMode {
    /// Subcarrier correlation matrix.
    Corr,
    /// Standardized amplitude window.
    Std,
}

impl FeatureMode {
    pub fn extract(self, w: &AmplitudeWindow) -> DMatrix<f64> {
        match self {
            FeatureMode::Corr => correlation_matrix(w),
            FeatureMode::Std => standardize(w).matrix,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CdfPoint {
    pub error_cm: u32,
    pub fraction: f64,
}

/// Localization error summary. `cdf[i]` is the fraction of errors at or
/// below `i` centimeters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorSummary {
    pub count: usize,
    pub mean: f64,
    pub std: f64,
    pub max: f64,
    pub cdf: Vec<CdfPoint>,
}

impl ErrorSummary {
    /// `None` for an empty slice.
    pub fn from_errors(errors: &[f64]) -> Option<Self> {
        if errors.is_empty() {
            return None;
        }
        let n = errors.len() as f64;
        let mean = errors.iter().sum::<f64>() / n;
        let std = (errors.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / n).sqrt();
        let max = errors.iter().copied().fold(0.0, f64::max);
        let mut sorted = errors.to_vec();
        sorted.sort_by(f64::total_cmp);
        let top = (max * 100.0).ceil() as u32;
        let cdf = (0..=top)
            .map(|cm| {
                let threshold = cm as f64 / 100.0 + 1e-12;
                let below = sorted.partition_point(|e| *e <= threshold);
                CdfPoint {
                    error_cm: cm,
                    fraction: below as f64 / n,
                }
            })
            .collect();
        Some(Self {
            count: errors.len(),
            mean,
            std,
            max,
            cdf,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub window: usize,
    pub stride: usize,
    pub split: f64,
    pub k: usize,
    pub mode: FeatureMode,
    /// 0 disables classification scoring.
    pub classes: usize,
    pub region_x: f64,
    pub region_y: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            window: DEFAULT_WINDOW,
            stride: DEFAULT_STRIDE,
            split: 0.8,
            k: DEFAULT_K,
            mode: FeatureMode::Corr,
            classes: 0,
            region_x: 1.8,
            region_y: 4.8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub train_windows: usize,
    pub test_windows: usize,
    pub knn: ErrorSummary,
    /// Always predicts the mean training position.
    pub constant_center: ErrorSummary,
    pub knn_accuracy: Option<f64>,
    pub constant_center_accuracy: Option<f64>,
}

/// Chronological train/test split of the windowed dataset, k-NN vs. the
/// constant (training-mean) predictor.
pub fn evaluate(frames: &[LabeledFrame], cfg: &EvalConfig) -> Result<EvalReport, FeatureError> {
    if !(cfg.split > 0.0 && cfg.split < 1.0) {
        return Err(FeatureError::InvalidWindow(format!("split {} must lie in (0, 1)", cfg.split)));
    }
    let samples: Vec<(DMatrix<f64>, WorldPoint)> = windows(frames, cfg.window, cfg.stride)?
        .into_iter()
        .map(|(w, p)| (cfg.mode.extract(&w), p))
        .collect();
    let n_train = ((samples.len() as f64) * cfg.split).floor() as usize;
    if n_train == 0 || n_train == samples.len() {
        return Err(FeatureError::TooShort {
            needed: 2,
            got: samples.len(),
        });
    }
    let (train, test) = samples.split_at(n_train);
    let model = KnnLocalizer::new(train.to_vec(), cfg.k)?;
    let n = train.len() as f64;
    let center = WorldPoint::new(
        train.iter().map(|(_, p)| p.x).sum::<f64>() / n,
        train.iter().map(|(_, p)| p.y).sum::<f64>() / n,
    );
    let grid = match cfg.classes {
        0 => None,
        c => Some(RegionGrid::with_classes(cfg.region_x, cfg.region_y, c)?),
    };

    let mut knn_err = Vec::with_capacity(test.len());
    let mut center_err = Vec::with_capacity(test.len());
    let (mut knn_hits, mut center_hits) = (0usize, 0usize);
    for (feature, truth) in test {
        let guess = model.localize(feature)?;
        knn_err.push(guess.distance(truth));
        center_err.push(center.distance(truth));
        if let Some(g) = &grid {
            let want = region_class(*truth, g)?;
            knn_hits += (region_class(clamp_to(guess, g), g)? == want) as usize;
            center_hits += (region_class(clamp_to(center, g), g)? == want) as usize;
        }
    }
    let accuracy = |hits: usize| grid.map(|_| hits as f64 / test.len() as f64);
    Ok(EvalReport {
        train_windows: train.len(),
        test_windows: test.len(),
        knn: ErrorSummary::from_errors(&knn_err).expect("test split is non-empty"),
        constant_center: ErrorSummary::from_errors(&center_err).expect("test split is non-empty"),
        knn_accuracy: accuracy(knn_hits),
        constant_center_accuracy: accuracy(center_hits),
    })
}

// Predictions are averages of in-region training targets, but clamp anyway
// so slightly-outside labels from a noisy camera still classify.
fn clamp_to(p: WorldPoint, g: &RegionGrid) -> WorldPoint {
    WorldPoint::new(p.x.clamp(0.0, g.x_len), p.y.clamp(0.0, g.y_len))
}
