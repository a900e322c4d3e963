//! Camera-to-floor transform, standing locations and pairwise floor distances.
//!
//! Two transform models are available. [`TransformMode::PaperLinear`] is the
//! 2×2 least-squares map `M = R' Rᵀ (R Rᵀ)⁻¹` over the four reference points,
//! which cannot represent perspective foreshortening. [`TransformMode::Projective`]
//! is the exact four-point homography, solved on Hartley-normalized points and
//! denormalized so that `H[2][2] = 1`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bbox::BoxGeom;
use crate::ingest::CalibrationPoints;
use crate::linalg::{self, SquareMatrix};
use crate::{Frame, PersonId};

/// Maximum floor-plane residual (meters) accepted for a projective fit.
pub const FIT_RESIDUAL_TOL: f64 = 1e-6;
/// Minimum |det| of the fitted matrix.
pub const MIN_DET: f64 = 1e-12;
/// Points whose homogeneous scale falls below this are on the horizon.
pub const HORIZON_TOL: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("calibration system is rank deficient")]
    SingularSystem,
    #[error("projective fit misses correspondence {index} by {residual:e} m")]
    ResidualTooLarge { index: usize, residual: f64 },
    #[error("point ({0}, {1}) maps to infinity")]
    AtInfinity(f64, f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransformMode {
    PaperLinear,
    #[default]
    Projective,
}

impl std::str::FromStr for TransformMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "paper_linear" => Ok(Self::PaperLinear),
            "projective" => Ok(Self::Projective),
            other => Err(format!("unknown transform mode `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TransformMatrix {
    Linear([[f64; 2]; 2]),
    Projective([[f64; 3]; 3]),
}

/// Fitted image → floor transform. Immutable once constructed.
#[derive(Debug, Clone, PartialEq)]
pub struct FloorCalibration {
    image_points: [[f64; 2]; 4],
    floor_points: [[f64; 2]; 4],
    matrix: TransformMatrix,
}

/// A person's standing location on the floor plane, in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FloorPoint {
    pub x: f64,
    pub y: f64,
    pub person_id: PersonId,
    pub frame: Frame,
}

impl FloorPoint {
    pub fn distance(&self, other: &FloorPoint) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Bottom-center of a person box, `(u, v + h/2)`.
pub fn standing_location(b: &BoxGeom) -> [f64; 2] {
    b.bottom_center()
}

impl FloorCalibration {
    pub fn fit(points: &CalibrationPoints, mode: TransformMode) -> Result<Self, GeometryError> {
        fit_transform(&points.image_points, &points.floor_points, mode)
    }

    pub fn mode(&self) -> TransformMode {
        match self.matrix {
            TransformMatrix::Linear(_) => TransformMode::PaperLinear,
            TransformMatrix::Projective(_) => TransformMode::Projective,
        }
    }

    pub fn matrix(&self) -> &TransformMatrix {
        &self.matrix
    }

    pub fn image_points(&self) -> &[[f64; 2]; 4] {
        &self.image_points
    }

    pub fn floor_points(&self) -> &[[f64; 2]; 4] {
        &self.floor_points
    }

    /// Maps an image point to floor coordinates.
    pub fn map(&self, p: [f64; 2]) -> Result<[f64; 2], GeometryError> {
        match &self.matrix {
            TransformMatrix::Linear(m) => Ok([m[0][0] * p[0] + m[0][1] * p[1], m[1][0] * p[0] + m[1][1] * p[1]]),
            TransformMatrix::Projective(h) => apply_homography(h, p),
        }
    }

    /// Maps a floor point back into the image (inverse transform).
    pub fn unmap(&self, p: [f64; 2]) -> Result<[f64; 2], GeometryError> {
        match &self.matrix {
            TransformMatrix::Linear(m) => {
                let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
                Ok([
                    (m[1][1] * p[0] - m[0][1] * p[1]) / det,
                    (-m[1][0] * p[0] + m[0][0] * p[1]) / det,
                ])
            }
            TransformMatrix::Projective(h) => {
                let inv = linalg::inverse3(h).ok_or(GeometryError::SingularSystem)?;
                apply_homography(&inv, p)
            }
        }
    }

    pub fn project_to_floor(
        &self,
        point: [f64; 2],
        person_id: PersonId,
        frame: Frame,
    ) -> Result<FloorPoint, GeometryError> {
        let [x, y] = self.map(point)?;
        Ok(FloorPoint { x, y, person_id, frame })
    }

    /// Largest floor-plane error over the four calibration correspondences.
    pub fn max_residual(&self) -> f64 {
        self.image_points
            .iter()
            .zip(&self.floor_points)
            .map(|(img, floor)| match self.map(*img) {
                Ok(p) => (p[0] - floor[0]).hypot(p[1] - floor[1]),
                Err(_) => f64::INFINITY,
            })
            .fold(0.0, f64::max)
    }

    /// True when `floor` lies inside the calibration quadrilateral (convex
    /// hull of the four floor reference points).
    pub fn floor_region_contains(&self, floor: [f64; 2]) -> bool {
        convex_hull_contains(&self.floor_points, floor)
    }
}

/// Homogeneous transform followed by division by the third coordinate.
pub fn apply_homography(h: &[[f64; 3]; 3], p: [f64; 2]) -> Result<[f64; 2], GeometryError> {
    let x = h[0][0] * p[0] + h[0][1] * p[1] + h[0][2];
    let y = h[1][0] * p[0] + h[1][1] * p[1] + h[1][2];
    let w = h[2][0] * p[0] + h[2][1] * p[1] + h[2][2];
    if w.abs() < HORIZON_TOL {
        return Err(GeometryError::AtInfinity(p[0], p[1]));
    }
    Ok([x / w, y / w])
}

pub fn fit_transform(
    image_points: &[[f64; 2]; 4],
    floor_points: &[[f64; 2]; 4],
    mode: TransformMode,
) -> Result<FloorCalibration, GeometryError> {
    let matrix = match mode {
        TransformMode::PaperLinear => TransformMatrix::Linear(fit_paper_linear(image_points, floor_points)?),
        TransformMode::Projective => TransformMatrix::Projective(fit_projective(image_points, floor_points)?),
    };
    let det = match &matrix {
        TransformMatrix::Linear(m) => m[0][0] * m[1][1] - m[0][1] * m[1][0],
        TransformMatrix::Projective(h) => linalg::det3(h),
    };
    if !(det.abs() > MIN_DET) {
        return Err(GeometryError::SingularSystem);
    }
    let calib = FloorCalibration {
        image_points: *image_points,
        floor_points: *floor_points,
        matrix,
    };
    if mode == TransformMode::Projective {
        for (index, (img, floor)) in image_points.iter().zip(floor_points).enumerate() {
            let p = calib.map(*img)?;
            let residual = (p[0] - floor[0]).hypot(p[1] - floor[1]);
            if !(residual < FIT_RESIDUAL_TOL) {
                return Err(GeometryError::ResidualTooLarge { index, residual });
            }
        }
    }
    Ok(calib)
}

/// `R' Rᵀ (R Rᵀ)⁻¹` with `R`, `R'` the 2×4 matrices whose columns are the
/// image and floor reference points.
pub fn fit_paper_linear(image: &[[f64; 2]; 4], floor: &[[f64; 2]; 4]) -> Result<[[f64; 2]; 2], GeometryError> {
    let mut rrt = [[0.0; 2]; 2];
    let mut rprt = [[0.0; 2]; 2];
    for (img, fl) in image.iter().zip(floor) {
        for i in 0..2 {
            for j in 0..2 {
                rrt[i][j] += img[i] * img[j];
                rprt[i][j] += fl[i] * img[j];
            }
        }
    }
    let det = rrt[0][0] * rrt[1][1] - rrt[0][1] * rrt[1][0];
    let scale = rrt[0][0].abs().max(rrt[1][1].abs());
    if scale == 0.0 || det.abs() <= 1e-12 * scale * scale {
        return Err(GeometryError::SingularSystem);
    }
    let inv = [[rrt[1][1] / det, -rrt[0][1] / det], [-rrt[1][0] / det, rrt[0][0] / det]];
    let mut m = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            m[i][j] = rprt[i][0] * inv[0][j] + rprt[i][1] * inv[1][j];
        }
    }
    Ok(m)
}

/// Similarity transform taking the points to zero mean and mean distance √2.
fn normalizer(points: &[[f64; 2]; 4]) -> Option<[[f64; 3]; 3]> {
    let cx = points.iter().map(|p| p[0]).sum::<f64>() / 4.0;
    let cy = points.iter().map(|p| p[1]).sum::<f64>() / 4.0;
    let mean_dist = points.iter().map(|p| (p[0] - cx).hypot(p[1] - cy)).sum::<f64>() / 4.0;
    if !(mean_dist > 0.0) {
        return None;
    }
    let s = std::f64::consts::SQRT_2 / mean_dist;
    Some([[s, 0.0, -s * cx], [0.0, s, -s * cy], [0.0, 0.0, 1.0]])
}

fn transform_point(t: &[[f64; 3]; 3], p: [f64; 2]) -> [f64; 2] {
    [
        t[0][0] * p[0] + t[0][1] * p[1] + t[0][2],
        t[1][0] * p[0] + t[1][1] * p[1] + t[1][2],
    ]
}

/// Exact four-point homography `image → floor`, scaled so `H[2][2] = 1`.
pub fn fit_projective(image: &[[f64; 2]; 4], floor: &[[f64; 2]; 4]) -> Result<[[f64; 3]; 3], GeometryError> {
    let t_img = normalizer(image).ok_or(GeometryError::SingularSystem)?;
    let t_floor = normalizer(floor).ok_or(GeometryError::SingularSystem)?;

    // Unknowns h11..h32 with h33 = 1 in normalized coordinates.
    let mut a = SquareMatrix::zeros(8);
    let mut b = [0.0; 8];
    for k in 0..4 {
        let [x, y] = transform_point(&t_img, image[k]);
        let [fx, fy] = transform_point(&t_floor, floor[k]);
        let (r0, r1) = (2 * k, 2 * k + 1);
        a[(r0, 0)] = x;
        a[(r0, 1)] = y;
        a[(r0, 2)] = 1.0;
        a[(r0, 6)] = -x * fx;
        a[(r0, 7)] = -y * fx;
        b[r0] = fx;
        a[(r1, 3)] = x;
        a[(r1, 4)] = y;
        a[(r1, 5)] = 1.0;
        a[(r1, 6)] = -x * fy;
        a[(r1, 7)] = -y * fy;
        b[r1] = fy;
    }
    let h = linalg::solve(&a, &b, 1e-12).ok_or(GeometryError::SingularSystem)?;
    let hn = [[h[0], h[1], h[2]], [h[3], h[4], h[5]], [h[6], h[7], 1.0]];

    let t_floor_inv = linalg::inverse3(&t_floor).ok_or(GeometryError::SingularSystem)?;
    let mut full = linalg::mul3(&linalg::mul3(&t_floor_inv, &hn), &t_img);
    let scale = if full[2][2].abs() > 1e-12 {
        full[2][2]
    } else {
        full.iter().flatten().map(|x| x * x).sum::<f64>().sqrt()
    };
    for v in full.iter_mut().flatten() {
        *v /= scale;
    }
    if full.iter().flatten().any(|v| !v.is_finite()) {
        return Err(GeometryError::SingularSystem);
    }
    Ok(full)
}

fn convex_hull_contains(quad: &[[f64; 2]; 4], p: [f64; 2]) -> bool {
    // Gift-wrap the four points into hull order, then test every edge side.
    let mut pts: Vec<[f64; 2]> = quad.to_vec();
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    let cross = |o: [f64; 2], a: [f64; 2], b: [f64; 2]| (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0]);
    let mut hull: Vec<[f64; 2]> = Vec::new();
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &[f64; 2]>> = if pass == 0 {
            Box::new(pts.iter())
        } else {
            Box::new(pts.iter().rev())
        };
        for &q in iter {
            while hull.len() >= start + 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], q) <= 0.0 {
                hull.pop();
            }
            hull.push(q);
        }
        hull.pop();
    }
    let tol = 1e-9;
    (0..hull.len()).all(|i| cross(hull[i], hull[(i + 1) % hull.len()], p) >= -tol)
}

/// Pairwise Euclidean floor distances for the people of one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    pub ids: Vec<PersonId>,
    pub d: SquareMatrix,
}

impl DistanceMatrix {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn index_of(&self, id: PersonId) -> Option<usize> {
        self.ids.iter().position(|&x| x == id)
    }

    pub fn between(&self, a: PersonId, b: PersonId) -> Option<f64> {
        Some(self.d[(self.index_of(a)?, self.index_of(b)?)])
    }
}

pub fn distance_matrix(points: &[FloorPoint]) -> DistanceMatrix {
    debug_assert!(points.windows(2).all(|w| w[0].frame == w[1].frame));
    let n = points.len();
    let d = SquareMatrix::from_fn(n, |i, j| if i == j { 0.0 } else { points[i].distance(&points[j]) });
    DistanceMatrix {
        ids: points.iter().map(|p| p.person_id).collect(),
        d,
    }
}
