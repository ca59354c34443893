//! Pinhole camera model, rigid poses, per-pixel measurements and
//! cross-frame correspondence by reprojection.
//!
//! Camera coordinates follow the usual pinhole convention: `x` to the right,
//! `y` down, `z` along the optical axis. A frame's [`Pose`] maps camera
//! coordinates to the shared global frame.

use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use rayon::prelude::*;
use serde::Deserialize;
use thiserror::Error;

use crate::grid::{Grid, Pixel};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("invalid intrinsics: {0}")]
    InvalidIntrinsics(String),
    #[error("rotation is not orthonormal with unit determinant (|RtR - I| = {orthogonality:e}, det = {det})")]
    InvalidRotation { orthogonality: f64, det: f64 },
    #[error("non-finite translation")]
    InvalidTranslation,
    #[error("pixel ({x}, {y}) outside a {width}x{height} image")]
    OutOfBounds {
        x: usize,
        y: usize,
        width: usize,
        height: usize,
    },
    #[error("frame data is {got_w}x{got_h} but intrinsics say {want_w}x{want_h} ({what})")]
    DimensionMismatch {
        what: &'static str,
        got_w: usize,
        got_h: usize,
        want_w: usize,
        want_h: usize,
    },
    #[error("negative or non-finite depth {0}")]
    InvalidDepth(f64),
}

/// Pinhole intrinsics in pixels.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl Intrinsics {
    pub fn new(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        width: usize,
        height: usize,
    ) -> Result<Self, GeometryError> {
        if !(fx > 0.0 && fy > 0.0 && fx.is_finite() && fy.is_finite()) {
            return Err(GeometryError::InvalidIntrinsics(format!(
                "focal lengths must be positive, got ({fx}, {fy})"
            )));
        }
        if width == 0 || height == 0 {
            return Err(GeometryError::InvalidIntrinsics("empty image".into()));
        }
        if !(cx >= 0.0 && cx < width as f64 && cy >= 0.0 && cy < height as f64) {
            return Err(GeometryError::InvalidIntrinsics(format!(
                "optical center ({cx}, {cy}) outside {width}x{height}"
            )));
        }
        Ok(Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        })
    }

    /// Projects a camera-space point to real-valued pixel coordinates.
    /// Returns `None` for points on or behind the image plane.
    pub fn project(&self, p: &Vector3<f64>) -> Option<(f64, f64)> {
        if p.z > 0.0 {
            Some((self.fx * p.x / p.z + self.cx, self.fy * p.y / p.z + self.cy))
        } else {
            None
        }
    }

    /// Rounds a projected coordinate to the nearest pixel, if it lies inside
    /// the image.
    pub fn round_to_pixel(&self, (u, v): (f64, f64)) -> Option<Pixel> {
        let x = (u + 0.5).floor();
        let y = (v + 0.5).floor();
        if x >= 0.0 && y >= 0.0 && x < self.width as f64 && y < self.height as f64 {
            Some(Pixel::new(x as usize, y as usize))
        } else {
            None
        }
    }

    /// The camera-space point seen at `pixel` with depth `z`.
    pub fn back_project(&self, pixel: Pixel, z: f64) -> Vector3<f64> {
        Vector3::new(
            (pixel.x as f64 - self.cx) * z / self.fx,
            (pixel.y as f64 - self.cy) * z / self.fy,
            z,
        )
    }

    pub fn contains(&self, pixel: Pixel) -> bool {
        pixel.x < self.width && pixel.y < self.height
    }
}

/// Rigid transform from a camera frame to the global frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pose {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

const ROTATION_TOLERANCE: f64 = 1e-9;

impl Pose {
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self, GeometryError> {
        let orthogonality = (rotation.transpose() * rotation - Matrix3::identity()).amax();
        let det = rotation.determinant();
        if !(orthogonality <= ROTATION_TOLERANCE && (det - 1.0).abs() <= ROTATION_TOLERANCE) {
            return Err(GeometryError::InvalidRotation { orthogonality, det });
        }
        if !translation.iter().all(|v| v.is_finite()) {
            return Err(GeometryError::InvalidTranslation);
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn from_translation(t: Vector3<f64>) -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: t,
        }
    }

    /// Camera at `eye` looking at `target`, with image rows running against
    /// `up` (the usual y-down pinhole convention).
    pub fn look_at(
        eye: Vector3<f64>,
        target: Vector3<f64>,
        up: Vector3<f64>,
    ) -> Result<Self, GeometryError> {
        let forward = target - eye;
        let norm = forward.norm();
        if !(norm > 0.0) {
            return Err(GeometryError::InvalidIntrinsics(
                "look-at target coincides with eye".into(),
            ));
        }
        let z = forward / norm;
        let x = z.cross(&up);
        let xn = x.norm();
        if !(xn > 1e-12) {
            return Err(GeometryError::InvalidIntrinsics(
                "look-at direction parallel to up vector".into(),
            ));
        }
        let x = x / xn;
        let y = z.cross(&x);
        let rotation = Matrix3::from_columns(&[x, y, z]);
        Self::new(rotation, eye)
    }

    /// Nearest rotation (in the Frobenius sense) to an almost-orthonormal
    /// matrix. Returns `None` if the input is a reflection or degenerate.
    pub fn orthonormalize(m: &Matrix3<f64>) -> Option<Matrix3<f64>> {
        let svd = m.svd(true, true);
        let r = svd.u? * svd.v_t?;
        (r.determinant() > 0.0).then_some(r)
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    /// Position of the camera center in global coordinates.
    pub fn camera_center(&self) -> Vector3<f64> {
        self.translation
    }

    pub fn inverse(&self) -> Pose {
        let rt = self.rotation.transpose();
        Pose {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// `self ∘ other`: apply `other` first, then `self`.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    pub fn inverse_transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation.tr_mul(&(p - self.translation))
    }
}

/// Everything known about one pixel: where it is, which way its surface
/// faces, what color it has, and how noisy it is relative to other pixels.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Measurement {
    pub point: Vector3<f64>,
    pub normal: Vector3<f64>,
    pub color: Vector3<f64>,
    /// Relative noise scale, `z^2` in the capturing camera.
    pub sigma: f64,
}

/// Moves a measurement from the camera frame of `pose` to global coordinates.
pub fn to_global(pose: &Pose, m: &Measurement) -> Measurement {
    Measurement {
        point: pose.transform_point(&m.point),
        normal: pose.rotation * m.normal,
        ..*m
    }
}

/// Moves a global measurement into the camera frame of `pose`.
pub fn to_local(pose: &Pose, m: &Measurement) -> Measurement {
    Measurement {
        point: pose.inverse_transform_point(&m.point),
        normal: pose.rotation.tr_mul(&m.normal),
        ..*m
    }
}

/// Settings for the per-pixel plane fit.
#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NormalConfig {
    /// Odd side length of the fitting window.
    pub window: usize,
    /// Minimum number of usable depths in the window.
    pub min_valid: usize,
    /// Neighbors whose depth differs from the center by more than
    /// `max_depth_gap * z^2` are excluded, so windows straddling an
    /// occlusion boundary fit only the center's surface.
    pub max_depth_gap: f64,
}

impl Default for NormalConfig {
    fn default() -> Self {
        Self {
            window: 5,
            min_valid: 6,
            max_depth_gap: 0.05,
        }
    }
}

/// One posed RGBD image with precomputed surface normals.
#[derive(Clone, Debug)]
pub struct RgbdFrame {
    intrinsics: Intrinsics,
    pose: Pose,
    depth: Grid<f64>,
    color: Grid<[u8; 3]>,
    normals: Grid<Option<Vector3<f64>>>,
}

impl RgbdFrame {
    /// Builds a frame and estimates its normals. `depth` is in meters with
    /// `0` marking a missing reading.
    pub fn new(
        intrinsics: Intrinsics,
        pose: Pose,
        depth: Grid<f64>,
        color: Grid<[u8; 3]>,
        normal_config: &NormalConfig,
    ) -> Result<Self, GeometryError> {
        check_dims(&intrinsics, depth.width(), depth.height(), "depth")?;
        check_dims(&intrinsics, color.width(), color.height(), "color")?;
        if let Some(&bad) = depth
            .as_slice()
            .iter()
            .find(|d| !(d.is_finite() && **d >= 0.0))
        {
            return Err(GeometryError::InvalidDepth(bad));
        }
        let normals = estimate_normals(&intrinsics, &depth, normal_config);
        Ok(Self {
            intrinsics,
            pose,
            depth,
            color,
            normals,
        })
    }

    /// Replaces the estimated normals, e.g. with analytic ones.
    pub fn with_normals(
        mut self,
        normals: Grid<Option<Vector3<f64>>>,
    ) -> Result<Self, GeometryError> {
        check_dims(
            &self.intrinsics,
            normals.width(),
            normals.height(),
            "normals",
        )?;
        self.normals = normals;
        Ok(self)
    }

    pub fn with_pose(mut self, pose: Pose) -> Self {
        self.pose = pose;
        self
    }

    pub fn intrinsics(&self) -> &Intrinsics {
        &self.intrinsics
    }

    pub fn pose(&self) -> &Pose {
        &self.pose
    }

    pub fn depth(&self) -> &Grid<f64> {
        &self.depth
    }

    pub fn color(&self) -> &Grid<[u8; 3]> {
        &self.color
    }

    pub fn normals(&self) -> &Grid<Option<Vector3<f64>>> {
        &self.normals
    }

    pub fn width(&self) -> usize {
        self.intrinsics.width
    }

    pub fn height(&self) -> usize {
        self.intrinsics.height
    }

    pub fn pixel_count(&self) -> usize {
        self.intrinsics.width * self.intrinsics.height
    }

    /// The camera-space point at `pixel`, if it has depth.
    pub fn point(&self, pixel: Pixel) -> Option<Vector3<f64>> {
        let z = *self.depth.get(pixel)?;
        (z > 0.0).then(|| self.intrinsics.back_project(pixel, z))
    }
}

fn check_dims(k: &Intrinsics, w: usize, h: usize, what: &'static str) -> Result<(), GeometryError> {
    if w != k.width || h != k.height {
        return Err(GeometryError::DimensionMismatch {
            what,
            got_w: w,
            got_h: h,
            want_w: k.width,
            want_h: k.height,
        });
    }
    Ok(())
}

/// Extracts the camera-space measurement at `pixel`. `Ok(None)` when the
/// pixel has no depth or its normal could not be estimated.
pub fn extract_measurement(
    frame: &RgbdFrame,
    pixel: Pixel,
) -> Result<Option<Measurement>, GeometryError> {
    if !frame.intrinsics.contains(pixel) {
        return Err(GeometryError::OutOfBounds {
            x: pixel.x,
            y: pixel.y,
            width: frame.width(),
            height: frame.height(),
        });
    }
    Ok(measurement_unchecked(frame, pixel))
}

pub(crate) fn measurement_unchecked(frame: &RgbdFrame, pixel: Pixel) -> Option<Measurement> {
    let z = frame.depth[pixel];
    if z <= 0.0 {
        return None;
    }
    let normal = frame.normals[pixel]?;
    let [r, g, b] = frame.color[pixel];
    Some(Measurement {
        point: frame.intrinsics.back_project(pixel, z),
        normal,
        color: Vector3::new(r as f64, g as f64, b as f64),
        sigma: z * z,
    })
}

/// Projects a measurement's point onto the image of `intrinsics`.
pub fn project(m: &Measurement, intrinsics: &Intrinsics) -> Option<(f64, f64)> {
    intrinsics.project(&m.point)
}

/// The measurement at `pixel` of `a`, expressed in the camera frame of `b`.
pub fn transfer(
    a: &RgbdFrame,
    b: &RgbdFrame,
    pixel: Pixel,
) -> Result<Option<Measurement>, GeometryError> {
    Ok(extract_measurement(a, pixel)?.map(|m| to_local(&b.pose, &to_global(&a.pose, &m))))
}

/// The measurement of `b` found by reprojecting pixel `pixel` of `a` into it.
pub fn correspond(
    a: &RgbdFrame,
    b: &RgbdFrame,
    pixel: Pixel,
) -> Result<Option<Measurement>, GeometryError> {
    let Some(phi) = transfer(a, b, pixel)? else {
        return Ok(None);
    };
    Ok(project(&phi, &b.intrinsics)
        .and_then(|uv| b.intrinsics.round_to_pixel(uv))
        .and_then(|px| measurement_unchecked(b, px)))
}

/// A usable pixel-to-pixel correspondence between two frames, both
/// measurements in `b`'s camera frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Correspondence {
    /// The source measurement moved into `b`'s camera frame.
    pub transferred: Measurement,
    /// What `b` measured where the transferred point reprojects.
    pub target: Measurement,
    pub target_pixel: Pixel,
}

/// The correspondence of `pixel` in `a` against `b`, or `None` when it is
/// not usable: no depth or normal on either side, the transferred point is
/// behind `b`'s camera, or it reprojects outside `b`.
pub fn correspondence(
    a: &RgbdFrame,
    b: &RgbdFrame,
    pixel: Pixel,
) -> Result<Option<Correspondence>, GeometryError> {
    let Some(m) = extract_measurement(a, pixel)? else {
        return Ok(None);
    };
    let to_b = b.pose.inverse().compose(&a.pose);
    Ok(correspondence_with(&m, &to_b, b))
}

/// Same as [`correspondence`] for an already extracted source measurement
/// and a precomputed `a`-to-`b` transform.
pub(crate) fn correspondence_with(
    m: &Measurement,
    a_to_b: &Pose,
    b: &RgbdFrame,
) -> Option<Correspondence> {
    let transferred = Measurement {
        point: a_to_b.transform_point(&m.point),
        normal: a_to_b.rotation * m.normal,
        ..*m
    };
    if transferred.point.z < 0.0 {
        return None;
    }
    let uv = b.intrinsics.project(&transferred.point)?;
    let target_pixel = b.intrinsics.round_to_pixel(uv)?;
    let target = measurement_unchecked(b, target_pixel)?;
    Some(Correspondence {
        transferred,
        target,
        target_pixel,
    })
}

/// Whether the correspondence of `pixel` in `a` against `b` is usable.
pub fn valid(a: &RgbdFrame, b: &RgbdFrame, pixel: Pixel) -> bool {
    matches!(correspondence(a, b, pixel), Ok(Some(_)))
}

/// Least-squares plane normals over a square window, oriented toward the
/// camera. `None` where too few usable depths surround the pixel or they
/// are degenerate (collinear).
pub fn estimate_normals(
    k: &Intrinsics,
    depth: &Grid<f64>,
    cfg: &NormalConfig,
) -> Grid<Option<Vector3<f64>>> {
    let (w, h) = (depth.width(), depth.height());
    let rows: Vec<Vec<Option<Vector3<f64>>>> = (0..h)
        .into_par_iter()
        .map(|y| {
            (0..w)
                .map(|x| normal_at(k, depth, Pixel::new(x, y), cfg))
                .collect()
        })
        .collect();
    Grid::from_vec(w, h, rows.into_iter().flatten().collect()).expect("row lengths")
}

fn normal_at(
    k: &Intrinsics,
    depth: &Grid<f64>,
    center: Pixel,
    cfg: &NormalConfig,
) -> Option<Vector3<f64>> {
    let zc = depth[center];
    if zc <= 0.0 {
        return None;
    }
    let r = (cfg.window / 2) as isize;
    let gap = cfg.max_depth_gap * zc * zc;
    let mut pts: [Vector3<f64>; 64] = [Vector3::zeros(); 64];
    let mut heap_pts = Vec::new();
    let mut n = 0usize;
    let mut sum = Vector3::zeros();
    for dy in -r..=r {
        for dx in -r..=r {
            let x = center.x as isize + dx;
            let y = center.y as isize + dy;
            if x < 0 || y < 0 || x as usize >= depth.width() || y as usize >= depth.height() {
                continue;
            }
            let p = Pixel::new(x as usize, y as usize);
            let z = depth[p];
            if z <= 0.0 || (z - zc).abs() > gap {
                continue;
            }
            let q = k.back_project(p, z);
            sum += q;
            if n < pts.len() {
                pts[n] = q;
            } else {
                heap_pts.push(q);
            }
            n += 1;
        }
    }
    if n < cfg.min_valid.max(3) {
        return None;
    }
    let mean = sum / n as f64;
    let mut cov = Matrix3::zeros();
    for q in pts[..n.min(pts.len())].iter().chain(heap_pts.iter()) {
        let d = q - mean;
        cov += d * d.transpose();
    }
    let eig = SymmetricEigen::new(cov);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let (smallest, middle, largest) = (order[0], order[1], order[2]);
    if !(eig.eigenvalues[middle] > 1e-12 * eig.eigenvalues[largest].max(f64::MIN_POSITIVE)) {
        return None;
    }
    let mut normal: Vector3<f64> = eig.eigenvectors.column(smallest).into_owned();
    let len = normal.norm();
    if !(len > 0.0) {
        return None;
    }
    normal /= len;
    let center_point = k.back_project(center, zc);
    if normal.dot(&center_point) > 0.0 {
        normal = -normal;
    }
    Some(normal)
}
