use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use image::{GrayImage, ImageBuffer, Luma};

use crate::geometry::RgbdFrame;
use crate::grid::Grid;

use super::{PipelineError, SegmentationResult};

pub const SEGMENTS_HEADER: &str = "# id verdict score_obj score_junk pixels cx cy cz moving_ratio";

const BACKGROUND_COLOR: [u8; 3] = [0, 0, 255];

/// Writes masks, the segments table, optionally the point cloud and the
/// debug maps into `out`, creating it if needed.
pub fn write_result(
    out: &Path,
    frames: &[RgbdFrame],
    result: &SegmentationResult,
    point_cloud: bool,
    debug: bool,
) -> Result<(), PipelineError> {
    fs::create_dir_all(out).map_err(|e| PipelineError::io(out, e))?;
    write_masks(out, &result.masks)?;
    write_segments_table(&out.join("segments.txt"), result)?;
    if point_cloud {
        write_point_cloud(&out.join("cloud.ply"), frames, result)?;
    }
    if debug {
        write_debug_maps(&out.join("debug"), result)?;
    }
    Ok(())
}

/// One `mask_XXX.png` per frame holding 16-bit segment ids.
pub fn write_masks(out: &Path, masks: &[Grid<u32>]) -> Result<(), PipelineError> {
    for (i, m) in masks.iter().enumerate() {
        let path = out.join(format!("mask_{i:03}.png"));
        let data = m
            .as_slice()
            .iter()
            .map(|&id| u16::try_from(id).map_err(|_| PipelineError::TooManySegments(id as usize)))
            .collect::<Result<Vec<u16>, _>>()?;
        let img: ImageBuffer<Luma<u16>, Vec<u16>> =
            ImageBuffer::from_raw(m.width() as u32, m.height() as u32, data)
                .expect("buffer matches size");
        img.save(&path)
            .map_err(|e| PipelineError::image(&path, e))?;
    }
    Ok(())
}

pub fn write_segments_table(path: &Path, result: &SegmentationResult) -> Result<(), PipelineError> {
    let mut text = String::from(SEGMENTS_HEADER);
    text.push('\n');
    for r in &result.records {
        text.push_str(&format!(
            "{} {} {:.3} {:.3} {} {:.4} {:.4} {:.4} {:.4}\n",
            r.id,
            r.verdict,
            r.scores.obj,
            r.scores.junk,
            r.pixels,
            r.centroid.x,
            r.centroid.y,
            r.centroid.z,
            r.moving_ratio
        ));
    }
    fs::write(path, text).map_err(|e| PipelineError::io(path, e))
}

/// Distinct, deterministic color per segment id; never the background blue.
pub fn segment_color(id: u32) -> [u8; 3] {
    let hue = (id as f64 * 0.618_033_988_749_895).fract() * 360.0;
    // Keep away from the blue band used for the background.
    let hue = if (200.0..280.0).contains(&hue) {
        hue - 120.0
    } else {
        hue
    };
    let c = 0.85;
    let x = c * (1.0 - ((hue / 60.0) % 2.0 - 1.0).abs());
    let (r, g, b) = match (hue / 60.0) as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = 0.15;
    [
        ((r + m) * 255.0) as u8,
        ((g + m) * 255.0) as u8,
        ((b + m) * 255.0) as u8,
    ]
}

/// Binary little-endian PLY of every current-frame pixel with depth, in
/// world coordinates. Accepted segments get their own color, everything
/// else is blue.
pub fn write_point_cloud(
    path: &Path,
    frames: &[RgbdFrame],
    result: &SegmentationResult,
) -> Result<(), PipelineError> {
    let mut accepted = vec![false; result.records.len() + 1];
    for r in &result.records {
        accepted[r.id as usize] = r.verdict.is_accepted();
    }
    let mut body: Vec<u8> = Vec::new();
    let mut count = 0usize;
    for (f, mask) in frames.iter().zip(&result.masks) {
        for (i, &id) in mask.as_slice().iter().enumerate() {
            let pixel = mask.pixel_of(i);
            let Some(p) = f.point(pixel) else { continue };
            let p = f.pose().transform_point(&p);
            for v in [p.x, p.y, p.z] {
                body.extend_from_slice(&(v as f32).to_le_bytes());
            }
            let color = if id != 0 && accepted[id as usize] {
                segment_color(id)
            } else {
                BACKGROUND_COLOR
            };
            body.extend_from_slice(&color);
            count += 1;
        }
    }
    let file = fs::File::create(path).map_err(|e| PipelineError::io(path, e))?;
    let mut w = BufWriter::new(file);
    let header = format!(
        "ply\nformat binary_little_endian 1.0\nelement vertex {count}\n\
         property float x\nproperty float y\nproperty float z\n\
         property uchar red\nproperty uchar green\nproperty uchar blue\nend_header\n"
    );
    w.write_all(header.as_bytes())
        .and_then(|_| w.write_all(&body))
        .and_then(|_| w.flush())
        .map_err(|e| PipelineError::io(path, e))
}

fn save_gray(path: &Path, g: &Grid<f64>) -> Result<(), PipelineError> {
    let data = g
        .as_slice()
        .iter()
        .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    let img = GrayImage::from_raw(g.width() as u32, g.height() as u32, data)
        .expect("buffer matches size");
    img.save(path).map_err(|e| PipelineError::image(path, e))
}

/// 8-bit grayscale maps: edge strength, same-surface and occlusion
/// evidence, priors, within-set priors and labels.
pub fn write_debug_maps(dir: &Path, result: &SegmentationResult) -> Result<(), PipelineError> {
    fs::create_dir_all(dir).map_err(|e| PipelineError::io(dir, e))?;
    let d = &result.debug;
    for i in 0..d.edges.len() {
        let e = &d.edges[i];
        let strength = Grid::from_fn(e.width(), e.height(), |p| {
            1.0 - e.p_same_h[p].min(e.p_same_v[p])
        });
        let labels = d.labels[i].map(|&b| if b { 1.0 } else { 0.0 });
        for (name, g) in [
            ("edges", &strength),
            ("p_s", &d.p_s[i]),
            ("p_o", &d.p_o[i]),
            ("prior", &d.priors[i]),
            ("moving", &d.moving[i]),
            ("labels", &labels),
        ] {
            save_gray(&dir.join(format!("{name}_{i:03}.png")), g)?;
        }
    }
    Ok(())
}
