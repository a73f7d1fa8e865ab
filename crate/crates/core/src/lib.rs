//! Vision-aided position labels for Wi-Fi CSI localization datasets.
//!
//! Camera detections are reduced to one ground-plane position per frame
//! through a four-anchor perspective calibration, CSI packet logs are
//! repaired where packets were lost, and every CSI packet is paired with the
//! temporally nearest camera position. [`simulate`] produces scenarios with
//! known ground truth for checking the whole chain.

pub mod align;
pub mod csi;
pub mod detection;
pub mod features;
pub mod geometry;
pub mod pipeline;
pub mod simulate;

pub use align::{align, nearest_label, DropReport, LabeledFrame};
pub use csi::{complete, count_lost, ingest, CsiPacket, CsiSequence};
pub use detection::{ground_point, label_stream, select_person, Detection, DetectionFrame, LabelEntry};
pub use features::{correlation_matrix, knn_localize, region_class, standardize, windows, AmplitudeWindow, RegionGrid};
pub use geometry::{solve_homography, AnchorSet, Homography, PixelPoint, WorldPoint};
pub use simulate::{eval_labels, generate, GroundTruth, Scenario};

/// Any failure surfaced by the pipeline stages.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Geometry(#[from] geometry::GeometryError),
    #[error(transparent)]
    Detection(#[from] detection::DetectionError),
    #[error(transparent)]
    Csi(#[from] csi::CsiError),
    #[error(transparent)]
    Align(#[from] align::AlignError),
    #[error(transparent)]
    Features(#[from] features::FeatureError),
    #[error(transparent)]
    Simulate(#[from] simulate::SimError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    /// Stable machine-readable name of the failure.
    pub fn kind(&self) -> &'static str {
        use align::AlignError as A;
        use csi::CsiError as C;
        use features::FeatureError as F;
        use simulate::SimError as S;
        match self {
            Error::Geometry(e) => geometry_kind(e),
            Error::Detection(detection::DetectionError::Schema { .. }) => "SchemaError",
            Error::Detection(detection::DetectionError::Io(_)) => "IoError",
            Error::Csi(C::Schema { .. } | C::Csv(_)) => "SchemaError",
            Error::Csi(C::NonFiniteValue { .. }) => "NonFiniteValue",
            Error::Csi(C::NegativeGap { .. }) => "NegativeGap",
            Error::Csi(C::TooShort(_)) => "TooShort",
            Error::Csi(C::Invalid(_)) => "InvalidSequence",
            Error::Csi(C::Io(_)) => "IoError",
            Error::Align(A::EmptyLabels) => "EmptyLabels",
            Error::Align(A::UnsortedLabels(_)) => "UnsortedLabels",
            Error::Align(A::InvalidMaxGap(_)) => "InvalidConfig",
            Error::Align(A::Schema { .. }) => "SchemaError",
            Error::Align(A::Csv(C::Io(_)) | A::Io(_)) => "IoError",
            Error::Align(A::Csv(_)) => "SchemaError",
            Error::Features(F::TooShort { .. }) => "TooShort",
            Error::Features(F::OutOfRegion { .. }) => "OutOfRegion",
            Error::Features(F::EmptyTrain) => "EmptyTrain",
            Error::Features(F::InvalidWindow(_) | F::InvalidGrid(_) | F::ShapeMismatch { .. }) => "InvalidConfig",
            Error::Simulate(S::InvalidScenario(_)) => "InvalidConfig",
            Error::Simulate(S::EmptyInput) => "EmptyInput",
            Error::Simulate(S::Schema { .. }) => "SchemaError",
            Error::Simulate(S::Geometry(e)) => geometry_kind(e),
            Error::Simulate(S::Io(_)) => "IoError",
            Error::Config(_) => "InvalidConfig",
            Error::Io { .. } => "IoError",
            Error::Json { .. } => "SchemaError",
        }
    }

    /// Process exit status for [`Error::kind`]; distinct per kind, never zero.
    pub fn exit_code(&self) -> i32 {
        match self.kind() {
            "IoError" => 2,
            "InvalidConfig" => 3,
            "SchemaError" => 4,
            "NonFiniteValue" => 5,
            "CollinearAnchors" => 10,
            "SingularSystem" => 11,
            "PointAtInfinity" => 12,
            "NegativeGap" => 20,
            "TooShort" => 21,
            "InvalidSequence" => 22,
            "EmptyLabels" => 30,
            "UnsortedLabels" => 31,
            "OutOfRegion" => 40,
            "EmptyTrain" => 41,
            "EmptyInput" => 50,
            _ => 1,
        }
    }

    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }

    pub fn json(context: impl Into<String>, source: serde_json::Error) -> Self {
        Error::Json {
            context: context.into(),
            source,
        }
    }
}

fn geometry_kind(e: &geometry::GeometryError) -> &'static str {
    use geometry::GeometryError as G;
    match e {
        G::CollinearAnchors { .. } => "CollinearAnchors",
        G::SingularSystem(_) => "SingularSystem",
        G::PointAtInfinity { .. } => "PointAtInfinity",
        G::NonFinite(_) => "NonFiniteValue",
    }
}
