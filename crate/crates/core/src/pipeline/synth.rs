//! Synthetic RGBD scenes built from planes and axis-aligned boxes.
//!
//! A scene description lists static geometry, objects that exist in the
//! current set (`"A"`), the background set (`"B"`) or both, and the views of
//! each set. Rendering produces quantized depth with noise growing with the
//! square of the distance, noisy shaded color and ground-truth object masks.

use std::fs;
use std::path::{Path, PathBuf};

use image::{ImageBuffer, Luma, RgbImage};
use nalgebra::{Matrix3, Rotation3, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::Deserialize;
use thiserror::Error;

use crate::geometry::{GeometryError, Intrinsics, NormalConfig, Pose, RgbdFrame};
use crate::grid::Grid;

use super::scene::{SceneFrame, SceneManifest};
use super::PipelineError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthError {
    #[error("view {index} of set {set}: camera is inside {what}")]
    CameraInside {
        set: char,
        index: usize,
        what: String,
    },
    #[error("view {index} of set {set}: {source}")]
    View {
        set: char,
        index: usize,
        #[source]
        source: GeometryError,
    },
    #[error("invalid camera: {0}")]
    Camera(GeometryError),
    #[error("{0}")]
    Invalid(String),
}

/// Which sets an object appears in.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
pub enum Presence {
    A,
    B,
    AB,
}

impl Presence {
    fn includes(self, set: SetName) -> bool {
        matches!(
            (self, set),
            (Presence::AB, _) | (Presence::A, SetName::A) | (Presence::B, SetName::B)
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
pub enum SetName {
    A,
    B,
}

impl SetName {
    fn letter(self) -> char {
        match self {
            SetName::A => 'A',
            SetName::B => 'B',
        }
    }
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraSpec {
    pub width: usize,
    pub height: usize,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl Default for CameraSpec {
    fn default() -> Self {
        Self {
            width: 640,
            height: 480,
            fx: 525.0,
            fy: 525.0,
            cx: 319.5,
            cy: 239.5,
        }
    }
}

/// Infinite plane through `point`.
#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlaneSpec {
    pub point: [f64; 3],
    pub normal: [f64; 3],
    pub color: [u8; 3],
}

/// Axis-aligned box that is part of both sets.
#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxSpec {
    pub min: [f64; 3],
    pub max: [f64; 3],
    pub color: [u8; 3],
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectSpec {
    pub min: [f64; 3],
    pub max: [f64; 3],
    pub color: [u8; 3],
    pub set: Presence,
    /// Displacement per current-set view: view `k` of set A sees the object
    /// shifted by `k * motion`. Set B always sees it unshifted.
    #[serde(default)]
    pub motion: [f64; 3],
}

/// A camera given either by `eye`/`target` (optionally `up`) or by a
/// row-major camera-to-world `rotation` and `translation`.
#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ViewSpec {
    pub set: SetName,
    pub eye: Option<[f64; 3]>,
    pub target: Option<[f64; 3]>,
    pub up: Option<[f64; 3]>,
    pub rotation: Option<[f64; 9]>,
    pub translation: Option<[f64; 3]>,
}

impl ViewSpec {
    pub fn look_at(set: SetName, eye: [f64; 3], target: [f64; 3]) -> Self {
        Self {
            set,
            eye: Some(eye),
            target: Some(target),
            up: None,
            rotation: None,
            translation: None,
        }
    }

    fn pose(&self) -> Result<Pose, GeometryError> {
        match (self.eye, self.target, self.rotation, self.translation) {
            (Some(eye), Some(target), None, None) => Pose::look_at(
                Vector3::from(eye),
                Vector3::from(target),
                Vector3::from(self.up.unwrap_or([0.0, 0.0, 1.0])),
            ),
            (None, None, Some(r), Some(t)) => {
                Pose::new(Matrix3::from_row_slice(&r), Vector3::from(t))
            }
            _ => Err(GeometryError::InvalidIntrinsics(
                "a view needs either eye and target or rotation and translation".into(),
            )),
        }
    }
}

/// Random perturbation of the recorded background poses; the images are
/// rendered from the true poses.
#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct JitterSpec {
    /// Standard deviation per axis, meters.
    pub translation: f64,
    /// Standard deviation per axis of the rotation vector, radians.
    pub rotation: f64,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub seed: u64,
    /// Depth noise is `depth_noise * z²` meters (one standard deviation).
    pub depth_noise: f64,
    /// Color noise per channel, in 8-bit levels.
    pub color_noise: f64,
    /// Surfaces farther than this read as missing depth.
    pub max_range: f64,
    pub camera: CameraSpec,
    pub jitter: JitterSpec,
    #[serde(rename = "plane")]
    pub planes: Vec<PlaneSpec>,
    #[serde(rename = "box")]
    pub boxes: Vec<BoxSpec>,
    #[serde(rename = "object")]
    pub objects: Vec<ObjectSpec>,
    #[serde(rename = "view")]
    pub views: Vec<ViewSpec>,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            seed: 0,
            depth_noise: 0.0015,
            color_noise: 2.0,
            max_range: 10.0,
            camera: CameraSpec::default(),
            jitter: JitterSpec::default(),
            planes: Vec::new(),
            boxes: Vec::new(),
            objects: Vec::new(),
            views: Vec::new(),
        }
    }
}

impl SynthSpec {
    pub fn from_toml(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
        Self::from_toml(&text).map_err(|e| PipelineError::data(path, e.to_string()))
    }
}

/// One rendered view.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthFrame {
    pub intrinsics: Intrinsics,
    /// Pose written to the manifest (jittered for set B).
    pub pose: Pose,
    /// Pose the view was rendered from.
    pub true_pose: Pose,
    /// Millimeters, 0 = missing.
    pub depth_mm: Grid<u16>,
    pub color: Grid<[u8; 3]>,
    /// 1-based index of the visible object, 0 elsewhere.
    pub ground_truth: Grid<u16>,
}

impl SynthFrame {
    /// Depth in meters exactly as it reads back from the 16-bit PNG.
    pub fn depth_m(&self) -> Grid<f64> {
        self.depth_mm.map(|&mm| mm as f64 / 1000.0)
    }

    pub fn to_frame(&self, normals: &NormalConfig) -> Result<RgbdFrame, GeometryError> {
        RgbdFrame::new(
            self.intrinsics,
            self.pose,
            self.depth_m(),
            self.color.clone(),
            normals,
        )
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthScene {
    pub a: Vec<SynthFrame>,
    pub b: Vec<SynthFrame>,
}

impl SynthScene {
    pub fn frames_a(&self, normals: &NormalConfig) -> Result<Vec<RgbdFrame>, GeometryError> {
        self.a.iter().map(|f| f.to_frame(normals)).collect()
    }

    pub fn frames_b(&self, normals: &NormalConfig) -> Result<Vec<RgbdFrame>, GeometryError> {
        self.b.iter().map(|f| f.to_frame(normals)).collect()
    }
}

#[derive(Clone, Copy, Debug)]
struct Aabb {
    min: Vector3<f64>,
    max: Vector3<f64>,
}

impl Aabb {
    fn new(min: [f64; 3], max: [f64; 3], shift: Vector3<f64>) -> Self {
        Self {
            min: Vector3::from(min) + shift,
            max: Vector3::from(max) + shift,
        }
    }

    fn contains(&self, p: &Vector3<f64>) -> bool {
        (0..3).all(|i| p[i] > self.min[i] && p[i] < self.max[i])
    }

    /// Nearest positive hit and the outward normal of the face hit.
    fn intersect(&self, o: &Vector3<f64>, d: &Vector3<f64>) -> Option<(f64, Vector3<f64>)> {
        let mut t_near = f64::NEG_INFINITY;
        let mut t_far = f64::INFINITY;
        let mut axis = 0;
        for i in 0..3 {
            if d[i].abs() < 1e-15 {
                if o[i] <= self.min[i] || o[i] >= self.max[i] {
                    return None;
                }
                continue;
            }
            let (mut t0, mut t1) = ((self.min[i] - o[i]) / d[i], (self.max[i] - o[i]) / d[i]);
            if t0 > t1 {
                std::mem::swap(&mut t0, &mut t1);
            }
            if t0 > t_near {
                t_near = t0;
                axis = i;
            }
            t_far = t_far.min(t1);
        }
        if t_near > t_far || t_near <= 0.0 {
            return None;
        }
        let mut n = Vector3::zeros();
        n[axis] = -d[axis].signum();
        Some((t_near, n))
    }
}

struct Primitive {
    shape: Shape,
    color: [u8; 3],
    /// Ground-truth id; 0 for static geometry.
    id: u16,
}

enum Shape {
    Plane {
        point: Vector3<f64>,
        normal: Vector3<f64>,
    },
    Box(Aabb),
}

impl Primitive {
    fn intersect(&self, o: &Vector3<f64>, d: &Vector3<f64>) -> Option<(f64, Vector3<f64>)> {
        match &self.shape {
            Shape::Plane { point, normal } => {
                let den = normal.dot(d);
                if den.abs() < 1e-12 {
                    return None;
                }
                let t = normal.dot(&(point - o)) / den;
                (t > 0.0).then_some((t, *normal))
            }
            Shape::Box(b) => b.intersect(o, d),
        }
    }
}

fn light() -> Vector3<f64> {
    Vector3::new(0.3, -0.5, 0.8).normalize()
}

fn shade(color: [u8; 3], normal: &Vector3<f64>) -> [f64; 3] {
    let k = 0.55 + 0.45 * normal.dot(&light()).abs();
    color.map(|c| c as f64 * k)
}

fn primitives(
    spec: &SynthSpec,
    set: SetName,
    view_index: usize,
) -> Result<Vec<Primitive>, SynthError> {
    let mut out = Vec::new();
    for p in &spec.planes {
        let normal = Vector3::from(p.normal);
        if !(normal.norm() > 0.0) {
            return Err(SynthError::Invalid("plane normal must be non-zero".into()));
        }
        out.push(Primitive {
            shape: Shape::Plane {
                point: Vector3::from(p.point),
                normal: normal.normalize(),
            },
            color: p.color,
            id: 0,
        });
    }
    for b in &spec.boxes {
        out.push(Primitive {
            shape: Shape::Box(Aabb::new(b.min, b.max, Vector3::zeros())),
            color: b.color,
            id: 0,
        });
    }
    for (i, o) in spec.objects.iter().enumerate() {
        if !o.set.includes(set) {
            continue;
        }
        let shift = match set {
            SetName::A => Vector3::from(o.motion) * view_index as f64,
            SetName::B => Vector3::zeros(),
        };
        out.push(Primitive {
            shape: Shape::Box(Aabb::new(o.min, o.max, shift)),
            color: o.color,
            id: u16::try_from(i + 1).map_err(|_| SynthError::Invalid("too many objects".into()))?,
        });
    }
    for p in &out {
        if let Shape::Box(b) = &p.shape {
            if (0..3).any(|k| !(b.min[k] < b.max[k])) {
                return Err(SynthError::Invalid(
                    "box minimum must be below its maximum on every axis".into(),
                ));
            }
        }
    }
    Ok(out)
}

/// Renders every view of `spec`.
pub fn render(spec: &SynthSpec) -> Result<SynthScene, SynthError> {
    let c = &spec.camera;
    let intrinsics =
        Intrinsics::new(c.fx, c.fy, c.cx, c.cy, c.width, c.height).map_err(SynthError::Camera)?;
    if !(spec.depth_noise >= 0.0 && spec.color_noise >= 0.0 && spec.max_range > 0.0) {
        return Err(SynthError::Invalid(
            "noise levels must be non-negative and max_range positive".into(),
        ));
    }
    if !(spec.jitter.translation >= 0.0 && spec.jitter.rotation >= 0.0) {
        return Err(SynthError::Invalid("jitter must be non-negative".into()));
    }

    // (set, index within the set, index within the spec)
    let mut jobs = Vec::new();
    let mut counts = [0usize; 2];
    for (stream, v) in spec.views.iter().enumerate() {
        let k = v.set as usize;
        jobs.push((v.set, counts[k], stream));
        counts[k] += 1;
    }
    let rendered: Vec<(SetName, SynthFrame)> = jobs
        .par_iter()
        .map(|&(set, index, stream)| {
            render_view(spec, &intrinsics, set, index, stream as u64).map(|f| (set, f))
        })
        .collect::<Result<_, _>>()?;
    let mut scene = SynthScene {
        a: Vec::new(),
        b: Vec::new(),
    };
    for (set, f) in rendered {
        match set {
            SetName::A => scene.a.push(f),
            SetName::B => scene.b.push(f),
        }
    }
    Ok(scene)
}

fn render_view(
    spec: &SynthSpec,
    k: &Intrinsics,
    set: SetName,
    index: usize,
    stream: u64,
) -> Result<SynthFrame, SynthError> {
    let view = &spec.views[stream as usize];
    let pose = view.pose().map_err(|source| SynthError::View {
        set: set.letter(),
        index,
        source,
    })?;
    let prims = primitives(spec, set, index)?;
    let eye = *pose.translation();
    for p in &prims {
        if let Shape::Box(b) = &p.shape {
            if b.contains(&eye) {
                let what = if p.id == 0 {
                    "a static box".to_string()
                } else {
                    format!("object {}", p.id)
                };
                return Err(SynthError::CameraInside {
                    set: set.letter(),
                    index,
                    what,
                });
            }
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(stream);
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let r = *pose.rotation();
    let n = k.width * k.height;
    let mut depth = Vec::with_capacity(n);
    let mut color = Vec::with_capacity(n);
    let mut gt = Vec::with_capacity(n);
    for y in 0..k.height {
        for x in 0..k.width {
            let dir_cam = Vector3::new((x as f64 - k.cx) / k.fx, (y as f64 - k.cy) / k.fy, 1.0);
            let dir = r * dir_cam;
            let hit = prims
                .iter()
                .filter_map(|p| p.intersect(&eye, &dir).map(|(t, nrm)| (t, nrm, p)))
                .min_by(|a, b| a.0.total_cmp(&b.0));
            // Noise is drawn for every pixel so the random sequence does not
            // depend on what is visible.
            let dz: f64 = unit.sample(&mut rng);
            let dc: [f64; 3] = [
                unit.sample(&mut rng),
                unit.sample(&mut rng),
                unit.sample(&mut rng),
            ];
            match hit {
                Some((z, nrm, p)) => {
                    // The camera-space ray has unit z, so t is the depth.
                    let noisy = z + spec.depth_noise * z * z * dz;
                    let mm = if z > spec.max_range {
                        0
                    } else {
                        (noisy * 1000.0).round().clamp(1.0, 65535.0) as u16
                    };
                    depth.push(mm);
                    let base = shade(p.color, &nrm);
                    color.push([0, 1, 2].map(|i| {
                        (base[i] + spec.color_noise * dc[i])
                            .round()
                            .clamp(0.0, 255.0) as u8
                    }));
                    gt.push(p.id);
                }
                None => {
                    depth.push(0);
                    color.push([0, 0, 0]);
                    gt.push(0);
                }
            }
        }
    }

    let recorded = match set {
        SetName::B if spec.jitter.translation > 0.0 || spec.jitter.rotation > 0.0 => {
            let mut jr = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x6a09_e667_f3bc_c908);
            jr.set_stream(stream);
            let mut draw = |s: f64| {
                Vector3::new(
                    unit.sample(&mut jr),
                    unit.sample(&mut jr),
                    unit.sample(&mut jr),
                ) * s
            };
            let dt = draw(spec.jitter.translation);
            let dr = Rotation3::new(draw(spec.jitter.rotation));
            Pose::new(dr.matrix() * pose.rotation(), pose.translation() + dt).map_err(|source| {
                SynthError::View {
                    set: set.letter(),
                    index,
                    source,
                }
            })?
        }
        _ => pose,
    };

    let grid = |v| Grid::from_vec(k.width, k.height, v).expect("one value per pixel");
    Ok(SynthFrame {
        intrinsics: *k,
        pose: recorded,
        true_pose: pose,
        depth_mm: grid(depth),
        color: Grid::from_vec(k.width, k.height, color).expect("one value per pixel"),
        ground_truth: grid(gt),
    })
}

/// Paths written by [`write_scene`].
#[derive(Clone, Debug, PartialEq)]
pub struct WrittenScene {
    pub scene_a: PathBuf,
    pub scene_b: PathBuf,
    /// Ground-truth masks of the set A views.
    pub ground_truth_a: Vec<PathBuf>,
}

/// Writes images, ground truth and the two manifests into `out`.
pub fn write_scene(scene: &SynthScene, out: &Path) -> Result<WrittenScene, PipelineError> {
    fs::create_dir_all(out).map_err(|e| PipelineError::io(out, e))?;
    let mut written = WrittenScene {
        scene_a: out.join("scene_a.toml"),
        scene_b: out.join("scene_b.toml"),
        ground_truth_a: Vec::new(),
    };
    for (tag, frames, manifest) in [
        ("a", &scene.a, &written.scene_a),
        ("b", &scene.b, &written.scene_b),
    ] {
        let mut m = SceneManifest {
            set: Some(tag.to_uppercase()),
            persons: None,
            frames: Vec::new(),
        };
        for (i, f) in frames.iter().enumerate() {
            let depth = format!("depth_{tag}_{i:03}.png");
            let color = format!("color_{tag}_{i:03}.png");
            let gt = out.join(format!("gt_{tag}_{i:03}.png"));
            save_u16(&out.join(&depth), &f.depth_mm)?;
            save_rgb(&out.join(&color), &f.color)?;
            save_u16(&gt, &f.ground_truth)?;
            if tag == "a" {
                written.ground_truth_a.push(gt);
            }
            let k = &f.intrinsics;
            let r = f.pose.rotation();
            let t = f.pose.translation();
            m.frames.push(SceneFrame {
                depth: depth.into(),
                color: color.into(),
                intrinsics: [k.fx, k.fy, k.cx, k.cy, k.width as f64, k.height as f64],
                rotation: [
                    r[(0, 0)],
                    r[(0, 1)],
                    r[(0, 2)],
                    r[(1, 0)],
                    r[(1, 1)],
                    r[(1, 2)],
                    r[(2, 0)],
                    r[(2, 1)],
                    r[(2, 2)],
                ],
                translation: [t.x, t.y, t.z],
            });
        }
        let text = toml::to_string(&m).map_err(|e| PipelineError::data(manifest, e.to_string()))?;
        fs::write(manifest, text).map_err(|e| PipelineError::io(manifest, e))?;
    }
    Ok(written)
}

fn save_u16(path: &Path, g: &Grid<u16>) -> Result<(), PipelineError> {
    let img: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_raw(g.width() as u32, g.height() as u32, g.as_slice().to_vec())
            .expect("buffer matches size");
    img.save(path).map_err(|e| PipelineError::image(path, e))
}

fn save_rgb(path: &Path, g: &Grid<[u8; 3]>) -> Result<(), PipelineError> {
    let img = RgbImage::from_raw(
        g.width() as u32,
        g.height() as u32,
        g.as_slice().iter().flatten().copied().collect(),
    )
    .expect("buffer matches size");
    img.save(path).map_err(|e| PipelineError::image(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_camera() -> CameraSpec {
        CameraSpec {
            width: 64,
            height: 48,
            fx: 50.0,
            fy: 50.0,
            cx: 31.5,
            cy: 23.5,
        }
    }

    fn wall_scene() -> SynthSpec {
        SynthSpec {
            depth_noise: 0.0,
            color_noise: 0.0,
            camera: small_camera(),
            planes: vec![PlaneSpec {
                point: [0.0, 2.0, 0.0],
                normal: [0.0, -1.0, 0.0],
                color: [200, 200, 200],
            }],
            objects: vec![ObjectSpec {
                min: [-0.1, 0.9, -0.1],
                max: [0.1, 1.1, 0.1],
                color: [200, 40, 40],
                set: Presence::A,
                motion: [0.0; 3],
            }],
            views: vec![
                ViewSpec::look_at(SetName::A, [0.0, 0.0, 0.0], [0.0, 1.0, 0.0]),
                ViewSpec::look_at(SetName::B, [0.0, 0.0, 0.0], [0.0, 1.0, 0.0]),
            ],
            ..SynthSpec::default()
        }
    }

    #[test]
    fn noiseless_depth_matches_geometry() {
        let s = render(&wall_scene()).unwrap();
        let (a, b) = (&s.a[0], &s.b[0]);
        let center = crate::grid::Pixel::new(32, 24);
        // Box front face at y = 0.9, wall at y = 2.
        assert_eq!(a.depth_mm[center], 900);
        assert_eq!(b.depth_mm[center], 2000);
        assert_eq!(a.ground_truth[center], 1);
        assert_eq!(b.ground_truth[center], 0);
        // The box spans 0.2 m at 0.9 m: 0.2 / 0.9 * 50 ≈ 11 pixels.
        let count = a
            .ground_truth
            .as_slice()
            .iter()
            .filter(|&&g| g == 1)
            .count();
        assert!((100..=144).contains(&count), "{count}");
        // Off-center wall pixels: depth stays the plane distance.
        assert_eq!(b.depth_mm[crate::grid::Pixel::new(0, 0)], 2000);
    }

    #[test]
    fn mask_equals_analytic_projection() {
        // Box front face at depth 1.5 facing the camera, wall at 3. The side
        // faces recede and project inside the front face.
        let spec = SynthSpec {
            depth_noise: 0.0,
            color_noise: 0.0,
            camera: small_camera(),
            planes: vec![PlaneSpec {
                point: [0.0, 3.0, 0.0],
                normal: [0.0, -1.0, 0.0],
                color: [200, 200, 200],
            }],
            objects: vec![ObjectSpec {
                min: [-0.31, 1.5, -0.17],
                max: [0.23, 1.9, 0.26],
                color: [10, 200, 10],
                set: Presence::AB,
                motion: [0.0; 3],
            }],
            views: vec![ViewSpec::look_at(SetName::A, [0.0, 0.0, 0.0], [0.0, 1.0, 0.0])],
            ..SynthSpec::default()
        };
        let s = render(&spec).unwrap();
        let k = spec.camera;
        let f = &s.a[0];
        // Camera x is world x, camera y is world -z.
        let mut inside = 0;
        for y in 0..k.height {
            for x in 0..k.width {
                let wx = (x as f64 - k.cx) / k.fx * 1.5;
                let wz = -(y as f64 - k.cy) / k.fy * 1.5;
                let hit = (-0.31..=0.23).contains(&wx) && (-0.17..=0.26).contains(&wz);
                let p = crate::grid::Pixel::new(x, y);
                assert_eq!(f.ground_truth[p] == 1, hit, "pixel ({x}, {y})");
                assert_eq!(f.depth_mm[p], if hit { 1500 } else { 3000 });
                inside += hit as usize;
            }
        }
        assert!(inside > 100);
    }

    #[test]
    fn closed_room_has_full_depth_and_empty_mask() {
        let wall = |point: [f64; 3], normal: [f64; 3]| PlaneSpec {
            point,
            normal,
            color: [150, 150, 150],
        };
        let spec = SynthSpec {
            camera: small_camera(),
            planes: vec![
                wall([0.0, 0.0, 0.0], [0.0, 0.0, 1.0]),
                wall([0.0, 0.0, 2.5], [0.0, 0.0, -1.0]),
                wall([0.0, 3.0, 0.0], [0.0, -1.0, 0.0]),
                wall([0.0, -3.0, 0.0], [0.0, 1.0, 0.0]),
                wall([2.0, 0.0, 0.0], [-1.0, 0.0, 0.0]),
                wall([-2.0, 0.0, 0.0], [1.0, 0.0, 0.0]),
            ],
            views: vec![ViewSpec::look_at(SetName::A, [0.3, 0.2, 1.2], [1.0, 2.0, 0.5])],
            ..SynthSpec::default()
        };
        let s = render(&spec).unwrap();
        assert!(s.a[0].depth_mm.as_slice().iter().all(|&d| d > 0));
        assert!(s.a[0].ground_truth.as_slice().iter().all(|&g| g == 0));
    }

    #[test]
    fn rendering_is_deterministic() {
        let mut spec = wall_scene();
        spec.depth_noise = 0.002;
        spec.color_noise = 3.0;
        spec.seed = 11;
        assert_eq!(render(&spec).unwrap(), render(&spec).unwrap());
        let other = SynthSpec {
            seed: 12,
            ..spec.clone()
        };
        assert_ne!(
            render(&spec).unwrap().a[0].depth_mm,
            render(&other).unwrap().a[0].depth_mm
        );
    }

    #[test]
    fn camera_inside_box_is_an_error() {
        let mut spec = wall_scene();
        spec.views[0] = ViewSpec::look_at(SetName::A, [0.0, 1.0, 0.0], [0.0, 2.0, 0.0]);
        let err = render(&spec).unwrap_err();
        assert!(
            matches!(
                err,
                SynthError::CameraInside {
                    set: 'A',
                    index: 0,
                    ..
                }
            ),
            "{err}"
        );
        // The object is absent from B, so a B camera there is fine.
        spec.views[0] = ViewSpec::look_at(SetName::B, [0.0, 1.0, 0.0], [0.0, 2.0, 0.0]);
        assert!(render(&spec).is_ok());
    }

    #[test]
    fn motion_shifts_later_views() {
        let mut spec = wall_scene();
        spec.objects[0].motion = [0.5, 0.0, 0.0];
        spec.views.push(ViewSpec::look_at(
            SetName::A,
            [0.0, 0.0, 0.0],
            [0.0, 1.0, 0.0],
        ));
        let s = render(&spec).unwrap();
        let center = crate::grid::Pixel::new(32, 24);
        assert_eq!(s.a[0].ground_truth[center], 1);
        assert_eq!(s.a[1].ground_truth[center], 0);
    }

    #[test]
    fn jitter_changes_recorded_pose_only() {
        let mut spec = wall_scene();
        spec.jitter = JitterSpec {
            translation: 0.01,
            rotation: 0.005,
        };
        let s = render(&spec).unwrap();
        assert_eq!(s.a[0].pose, s.a[0].true_pose);
        assert_ne!(s.b[0].pose, s.b[0].true_pose);
        let plain = render(&wall_scene()).unwrap();
        assert_eq!(s.b[0].depth_mm, plain.b[0].depth_mm);
    }

    #[test]
    fn spec_parses_from_toml() {
        let spec = SynthSpec::from_toml(
            r#"
            seed = 3
            [camera]
            width = 64
            height = 48
            fx = 50.0
            fy = 50.0
            cx = 31.5
            cy = 23.5
            [[plane]]
            point = [0.0, 0.0, 0.0]
            normal = [0.0, 0.0, 1.0]
            color = [100, 100, 100]
            [[object]]
            min = [0.0, 1.0, 0.0]
            max = [0.2, 1.2, 0.2]
            color = [255, 0, 0]
            set = "AB"
            [[view]]
            set = "A"
            eye = [0.0, 0.0, 1.0]
            target = [0.0, 1.0, 0.5]
            "#,
        )
        .unwrap();
        assert_eq!(spec.seed, 3);
        assert_eq!(spec.objects[0].set, Presence::AB);
        assert_eq!(spec.depth_noise, SynthSpec::default().depth_noise);
        assert!(SynthSpec::from_toml("bogus = 1").is_err());
    }
}
