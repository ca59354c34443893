use std::path::{Path, PathBuf};

use image::{DynamicImage, ImageReader};
use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::filtering::{parse_person_boxes, validate_person_boxes, PersonBox};
use crate::geometry::{Intrinsics, NormalConfig, Pose, RgbdFrame};
use crate::grid::Grid;

use super::PipelineError;

/// Largest deviation of `RᵀR` from the identity accepted before a rotation
/// is snapped to the nearest proper rotation.
const ROTATION_TOLERANCE: f64 = 1e-6;

/// The TOML manifest describing one set of frames.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneManifest {
    /// Free-form label, e.g. "A" or "B".
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub set: Option<String>,
    /// Person detections, relative to the manifest.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub persons: Option<PathBuf>,
    #[serde(default, rename = "frame")]
    pub frames: Vec<SceneFrame>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneFrame {
    /// 16-bit PNG, millimeters, 0 = missing.
    pub depth: PathBuf,
    /// 8-bit RGB PNG.
    pub color: PathBuf,
    /// `[fx, fy, cx, cy, width, height]`.
    pub intrinsics: [f64; 6],
    /// Camera-to-world rotation, row-major.
    pub rotation: [f64; 9],
    /// Camera center in world coordinates, meters.
    pub translation: [f64; 3],
}

/// A loaded set of frames.
#[derive(Clone, Debug)]
pub struct Scene {
    pub label: Option<String>,
    pub frames: Vec<RgbdFrame>,
    pub persons: Vec<PersonBox>,
}

impl Scene {
    pub fn frame_sizes(&self) -> Vec<(usize, usize)> {
        self.frames
            .iter()
            .map(|f| (f.width(), f.height()))
            .collect()
    }
}

/// Loads a manifest and every frame it lists. Relative paths are resolved
/// against the manifest's directory.
pub fn load_scene(path: &Path, normals: &NormalConfig) -> Result<Scene, PipelineError> {
    let text = std::fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
    let manifest: SceneManifest =
        toml::from_str(&text).map_err(|e| PipelineError::data(path, e.to_string()))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let frames = manifest
        .frames
        .iter()
        .enumerate()
        .map(|(i, f)| load_frame(path, i, f, base, normals))
        .collect::<Result<Vec<_>, _>>()?;
    let mut scene = Scene {
        label: manifest.set.clone(),
        frames,
        persons: Vec::new(),
    };
    if let Some(p) = &manifest.persons {
        scene.persons = load_person_boxes(&base.join(p), &scene.frame_sizes())?;
    }
    Ok(scene)
}

fn load_frame(
    manifest: &Path,
    index: usize,
    f: &SceneFrame,
    base: &Path,
    normals: &NormalConfig,
) -> Result<RgbdFrame, PipelineError> {
    let bad = |msg: String| PipelineError::data(manifest, format!("frame {index}: {msg}"));
    let [fx, fy, cx, cy, w, h] = f.intrinsics;
    let dim = |v: f64, name: &str| {
        if v.fract() == 0.0 && v >= 1.0 && v <= u32::MAX as f64 {
            Ok(v as usize)
        } else {
            Err(bad(format!("{name} {v} is not a positive integer")))
        }
    };
    let (width, height) = (dim(w, "width")?, dim(h, "height")?);
    let intrinsics =
        Intrinsics::new(fx, fy, cx, cy, width, height).map_err(|e| bad(e.to_string()))?;
    let pose = pose_from_manifest(&f.rotation, &f.translation).map_err(bad)?;

    let depth_path = base.join(&f.depth);
    let depth = load_depth_png(&depth_path)?;
    let color_path = base.join(&f.color);
    let color = load_color_png(&color_path)?;
    for (what, p, gw, gh) in [
        ("depth", &depth_path, depth.width(), depth.height()),
        ("color", &color_path, color.width(), color.height()),
    ] {
        if (gw, gh) != (width, height) {
            return Err(PipelineError::data(
                p,
                format!(
                    "{what} image is {gw}x{gh} but frame {index} intrinsics say {width}x{height}"
                ),
            ));
        }
    }
    RgbdFrame::new(intrinsics, pose, depth, color, normals).map_err(|source| {
        PipelineError::Geometry {
            context: format!("{}: frame {index}", manifest.display()),
            source,
        }
    })
}

fn pose_from_manifest(rotation: &[f64; 9], translation: &[f64; 3]) -> Result<Pose, String> {
    let r = Matrix3::from_row_slice(rotation);
    if r.iter().any(|v| !v.is_finite()) {
        return Err("rotation has non-finite entries".into());
    }
    let deviation = (r.transpose() * r - Matrix3::identity()).abs().max();
    if deviation > ROTATION_TOLERANCE {
        return Err(format!(
            "rotation is not orthonormal (max |RtR - I| = {deviation:e}, tolerance {ROTATION_TOLERANCE:e})"
        ));
    }
    if r.determinant() < 0.0 {
        return Err("rotation is a reflection (negative determinant)".into());
    }
    let r =
        Pose::orthonormalize(&r).ok_or_else(|| "rotation cannot be orthonormalized".to_string())?;
    Pose::new(r, Vector3::from_column_slice(translation)).map_err(|e| e.to_string())
}

fn open_image(path: &Path) -> Result<DynamicImage, PipelineError> {
    ImageReader::open(path)
        .map_err(|e| PipelineError::io(path, e))?
        .with_guessed_format()
        .map_err(|e| PipelineError::io(path, e))?
        .decode()
        .map_err(|e| PipelineError::image(path, e))
}

/// Reads a 16-bit single-channel PNG in millimeters as meters.
pub fn load_depth_png(path: &Path) -> Result<Grid<f64>, PipelineError> {
    match open_image(path)? {
        DynamicImage::ImageLuma16(img) => {
            let (w, h) = (img.width() as usize, img.height() as usize);
            let data = img
                .into_raw()
                .into_iter()
                .map(|mm| mm as f64 / 1000.0)
                .collect();
            Ok(Grid::from_vec(w, h, data).expect("image buffer matches its size"))
        }
        other => Err(PipelineError::data(
            path,
            format!(
                "depth must be a 16-bit single-channel PNG, found {:?}",
                other.color()
            ),
        )),
    }
}

fn load_color_png(path: &Path) -> Result<Grid<[u8; 3]>, PipelineError> {
    let img = open_image(path)?.to_rgb8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data = img.pixels().map(|p| p.0).collect();
    Ok(Grid::from_vec(w, h, data).expect("image buffer matches its size"))
}

/// Reads person detections and checks them against the frame sizes.
pub fn load_person_boxes(
    path: &Path,
    sizes: &[(usize, usize)],
) -> Result<Vec<PersonBox>, PipelineError> {
    let text = std::fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
    let persons = |source| PipelineError::Persons {
        path: path.to_path_buf(),
        source,
    };
    let boxes = parse_person_boxes(&text).map_err(persons)?;
    validate_person_boxes(&text, &boxes, sizes).map_err(persons)?;
    Ok(boxes)
}
