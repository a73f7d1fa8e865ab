//! Ground-plane perspective calibration.
//!
//! A single 3×3 projective transform maps image pixels (origin top-left,
//! `v` growing downward) onto metric ground-plane coordinates. The transform
//! is recovered from four anchor correspondences with the classical
//! eight-unknown linear system (`T[2][2]` fixed to one), solved on
//! isotropically normalized points and denormalized afterward.

use nalgebra::{Matrix3, SMatrix, SVector, Vector3};
use serde::{Deserialize, Serialize};

/// Relative collinearity tolerance on twice the triangle area.
const COLLINEAR_REL_TOL: f64 = 1e-9;
/// Homogeneous `w` below this is treated as a point at infinity.
pub const W_EPSILON: f64 = 1e-12;
/// Minimum `|det|` of the normalized matrix, relative to its Frobenius norm cubed.
const DET_REL_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GeometryError {
    #[error("anchors {first}, {second} and {third} are collinear in {space} space")]
    CollinearAnchors {
        space: &'static str,
        first: usize,
        second: usize,
        third: usize,
    },
    #[error("singular system: {0}")]
    SingularSystem(&'static str),
    #[error("point maps to infinity (w = {w:e})")]
    PointAtInfinity { w: f64 },
    #[error("non-finite coordinate in {0}")]
    NonFinite(&'static str),
}

/// Image-plane coordinate in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PixelPoint {
    pub u: f64,
    pub v: f64,
}

impl PixelPoint {
    pub const fn new(u: f64, v: f64) -> Self {
        Self { u, v }
    }

    pub fn is_finite(&self) -> bool {
        self.u.is_finite() && self.v.is_finite()
    }
}

/// Ground-plane coordinate in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorldPoint {
    pub x: f64,
    pub y: f64,
}

impl WorldPoint {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn distance(&self, other: &WorldPoint) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Four pixel/world correspondences with no collinear triple on either side.
///
/// Serialized as `{"pixel": [[u, v]; 4], "world": [[x, y]; 4]}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "AnchorFile", into = "AnchorFile")]
pub struct AnchorSet {
    pixel: [PixelPoint; 4],
    world: [WorldPoint; 4],
}

/// Raw anchor file contents before the collinearity checks.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnchorFile {
    pub pixel: [[f64; 2]; 4],
    pub world: [[f64; 2]; 4],
}

impl TryFrom<AnchorFile> for AnchorSet {
    type Error = GeometryError;

    fn try_from(file: AnchorFile) -> Result<Self, Self::Error> {
        AnchorSet::new(
            file.pixel.map(|[u, v]| PixelPoint::new(u, v)),
            file.world.map(|[x, y]| WorldPoint::new(x, y)),
        )
    }
}

impl From<AnchorSet> for AnchorFile {
    fn from(set: AnchorSet) -> Self {
        AnchorFile {
            pixel: set.pixel.map(|p| [p.u, p.v]),
            world: set.world.map(|p| [p.x, p.y]),
        }
    }
}

impl AnchorSet {
    pub fn new(pixel: [PixelPoint; 4], world: [WorldPoint; 4]) -> Result<Self, GeometryError> {
        if !pixel.iter().all(PixelPoint::is_finite) {
            return Err(GeometryError::NonFinite("pixel anchors"));
        }
        if !world.iter().all(WorldPoint::is_finite) {
            return Err(GeometryError::NonFinite("world anchors"));
        }
        check_collinear("pixel", &pixel.map(|p| [p.u, p.v]))?;
        check_collinear("world", &world.map(|p| [p.x, p.y]))?;
        Ok(Self { pixel, world })
    }

    pub fn pixel(&self) -> &[PixelPoint; 4] {
        &self.pixel
    }

    pub fn world(&self) -> &[WorldPoint; 4] {
        &self.world
    }

    pub fn pairs(&self) -> impl Iterator<Item = (PixelPoint, WorldPoint)> + '_ {
        self.pixel.iter().copied().zip(self.world.iter().copied())
    }
}

/// Twice the triangle area against the squared bounding-box diagonal of the set.
fn check_collinear(space: &'static str, pts: &[[f64; 2]; 4]) -> Result<(), GeometryError> {
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for p in pts {
        for axis in 0..2 {
            lo[axis] = lo[axis].min(p[axis]);
            hi[axis] = hi[axis].max(p[axis]);
        }
    }
    let span_sq = (hi[0] - lo[0]).powi(2) + (hi[1] - lo[1]).powi(2);
    let tol = COLLINEAR_REL_TOL * span_sq;
    for (a, b, c) in [(0, 1, 2), (0, 1, 3), (0, 2, 3), (1, 2, 3)] {
        let (pa, pb, pc) = (pts[a], pts[b], pts[c]);
        let twice_area = ((pb[0] - pa[0]) * (pc[1] - pa[1]) - (pb[1] - pa[1]) * (pc[0] - pa[0])).abs();
        // span_sq == 0 (all points coincide) also lands here since 0 <= 0.
        if twice_area <= tol {
            return Err(GeometryError::CollinearAnchors {
                space,
                first: a,
                second: b,
                third: c,
            });
        }
    }
    Ok(())
}

/// Pixel → world projective map, stored with `T[2][2] == 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Homography {
    matrix: Matrix3<f64>,
    anchors: Option<AnchorSet>,
}

impl Homography {
    pub fn identity() -> Self {
        Self {
            matrix: Matrix3::identity(),
            anchors: None,
        }
    }

    /// Wraps an arbitrary matrix, rescaling it so the bottom-right entry is one.
    pub fn from_matrix(m: Matrix3<f64>) -> Result<Self, GeometryError> {
        if !m.iter().all(|v| v.is_finite()) {
            return Err(GeometryError::NonFinite("matrix"));
        }
        let scale = m[(2, 2)];
        if scale.abs() <= W_EPSILON * m.norm() {
            return Err(GeometryError::SingularSystem("T[2][2] vanishes; cannot normalize"));
        }
        let matrix = m / scale;
        let norm = matrix.norm();
        if matrix.determinant().abs() <= DET_REL_TOL * norm * norm * norm {
            return Err(GeometryError::SingularSystem("matrix is not invertible"));
        }
        Ok(Self {
            matrix,
            anchors: None,
        })
    }

    pub fn from_rows(rows: [[f64; 3]; 3]) -> Result<Self, GeometryError> {
        Self::from_matrix(Matrix3::from_fn(|r, c| rows[r][c]))
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.matrix
    }

    pub fn anchors(&self) -> Option<&AnchorSet> {
        self.anchors.as_ref()
    }

    /// Row-major matrix entries.
    pub fn entries(&self) -> [f64; 9] {
        let m = &self.matrix;
        [
            m[(0, 0)],
            m[(0, 1)],
            m[(0, 2)],
            m[(1, 0)],
            m[(1, 1)],
            m[(1, 2)],
            m[(2, 0)],
            m[(2, 1)],
            m[(2, 2)],
        ]
    }

    pub fn apply(&self, p: PixelPoint) -> Result<WorldPoint, GeometryError> {
        let [x, y] = project(&self.matrix, p.u, p.v)?;
        Ok(WorldPoint::new(x, y))
    }

    /// World → pixel direction through this homography's inverse matrix.
    pub fn apply_inverse(&self, p: WorldPoint) -> Result<PixelPoint, GeometryError> {
        let inv = self.invert()?;
        let [u, v] = project(&inv.matrix, p.x, p.y)?;
        Ok(PixelPoint::new(u, v))
    }

    /// The inverse map. Its input space is this map's output space, so the
    /// source anchors are not carried over.
    pub fn invert(&self) -> Result<Homography, GeometryError> {
        let inv = self
            .matrix
            .try_inverse()
            .ok_or(GeometryError::SingularSystem("matrix is not invertible"))?;
        Homography::from_matrix(inv)
    }
}

fn project(m: &Matrix3<f64>, a: f64, b: f64) -> Result<[f64; 2], GeometryError> {
    let h = m * Vector3::new(a, b, 1.0);
    if h.z.abs() < W_EPSILON || !h.z.is_finite() {
        return Err(GeometryError::PointAtInfinity { w: h.z });
    }
    Ok([h.x / h.z, h.y / h.z])
}

/// Similarity that moves the centroid to the origin and the mean distance to √2.
fn normalizer(pts: &[[f64; 2]; 4]) -> Matrix3<f64> {
    let n = pts.len() as f64;
    let cx = pts.iter().map(|p| p[0]).sum::<f64>() / n;
    let cy = pts.iter().map(|p| p[1]).sum::<f64>() / n;
    let mean_dist = pts.iter().map(|p| (p[0] - cx).hypot(p[1] - cy)).sum::<f64>() / n;
    let s = std::f64::consts::SQRT_2 / mean_dist;
    Matrix3::new(s, 0.0, -s * cx, 0.0, s, -s * cy, 0.0, 0.0, 1.0)
}

fn transform_all(t: &Matrix3<f64>, pts: &[[f64; 2]; 4]) -> [[f64; 2]; 4] {
    pts.map(|[a, b]| {
        let h = t * Vector3::new(a, b, 1.0);
        [h.x / h.z, h.y / h.z]
    })
}

/// Recovers the pixel → world map from four anchor correspondences.
pub fn solve_homography(anchors: &AnchorSet) -> Result<Homography, GeometryError> {
    let src = anchors.pixel.map(|p| [p.u, p.v]);
    let dst = anchors.world.map(|p| [p.x, p.y]);
    let src_norm = normalizer(&src);
    let dst_norm = normalizer(&dst);
    let src_n = transform_all(&src_norm, &src);
    let dst_n = transform_all(&dst_norm, &dst);

    // x' = (h0 x + h1 y + h2) / (h6 x + h7 y + 1), likewise y' with h3..h5.
    let mut a = SMatrix::<f64, 8, 8>::zeros();
    let mut b = SVector::<f64, 8>::zeros();
    for (k, ([x, y], [xp, yp])) in src_n.iter().zip(dst_n.iter()).enumerate() {
        let r = 2 * k;
        a[(r, 0)] = *x;
        a[(r, 1)] = *y;
        a[(r, 2)] = 1.0;
        a[(r, 6)] = -x * xp;
        a[(r, 7)] = -y * xp;
        b[r] = *xp;
        a[(r + 1, 3)] = *x;
        a[(r + 1, 4)] = *y;
        a[(r + 1, 5)] = 1.0;
        a[(r + 1, 6)] = -x * yp;
        a[(r + 1, 7)] = -y * yp;
        b[r + 1] = *yp;
    }
    let lu = a.lu();
    if lu.determinant().abs() < 1e-14 {
        return Err(GeometryError::SingularSystem("anchor system is rank deficient"));
    }
    let h = lu
        .solve(&b)
        .ok_or(GeometryError::SingularSystem("anchor system is rank deficient"))?;
    let normalized = Matrix3::new(h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], 1.0);
    let dst_denorm = dst_norm
        .try_inverse()
        .ok_or(GeometryError::SingularSystem("degenerate world normalization"))?;
    let mut homography = Homography::from_matrix(dst_denorm * normalized * src_norm)?;
    homography.anchors = Some(*anchors);
    Ok(homography)
}

/// On-disk homography: nine row-major entries plus the source anchors.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HomographyFile {
    pub matrix: [f64; 9],
    pub anchors: Option<AnchorSet>,
}

impl From<&Homography> for HomographyFile {
    fn from(h: &Homography) -> Self {
        HomographyFile {
            matrix: h.entries(),
            anchors: h.anchors,
        }
    }
}

impl TryFrom<HomographyFile> for Homography {
    type Error = GeometryError;

    fn try_from(file: HomographyFile) -> Result<Self, Self::Error> {
        let m = file.matrix;
        let mut h = Homography::from_rows([[m[0], m[1], m[2]], [m[3], m[4], m[5]], [m[6], m[7], m[8]]])?;
        h.anchors = file.anchors;
        Ok(h)
    }
}
