#![allow(dead_code)]

use changeseg::pipeline::synth::{
    BoxSpec, CameraSpec, ObjectSpec, PlaneSpec, Presence, SetName, SynthSpec, ViewSpec,
};
use changeseg::pipeline::SegmentationResult;

pub fn camera(width: usize, height: usize) -> CameraSpec {
    let s = width as f64 / 640.0;
    CameraSpec {
        width,
        height,
        fx: 525.0 * s,
        fy: 525.0 * s,
        cx: (width as f64 - 1.0) / 2.0,
        cy: (height as f64 - 1.0) / 2.0,
    }
}

/// Floor, three walls and a table; no objects or views.
pub fn room(seed: u64, width: usize, height: usize) -> SynthSpec {
    SynthSpec {
        seed,
        camera: camera(width, height),
        planes: vec![
            PlaneSpec {
                point: [0.0, 0.0, 0.0],
                normal: [0.0, 0.0, 1.0],
                color: [120, 110, 100],
            },
            PlaneSpec {
                point: [0.0, 3.0, 0.0],
                normal: [0.0, -1.0, 0.0],
                color: [180, 180, 170],
            },
            PlaneSpec {
                point: [-2.0, 0.0, 0.0],
                normal: [1.0, 0.0, 0.0],
                color: [170, 175, 185],
            },
            PlaneSpec {
                point: [2.0, 0.0, 0.0],
                normal: [-1.0, 0.0, 0.0],
                color: [185, 175, 160],
            },
        ],
        boxes: vec![BoxSpec {
            min: [-0.8, 0.8, 0.0],
            max: [0.8, 1.6, 0.75],
            color: [140, 100, 60],
        }],
        ..SynthSpec::default()
    }
}

pub fn table_object(min_xy: [f64; 2], size: [f64; 3], color: [u8; 3], set: Presence) -> ObjectSpec {
    ObjectSpec {
        min: [min_xy[0], min_xy[1], 0.75],
        max: [min_xy[0] + size[0], min_xy[1] + size[1], 0.75 + size[2]],
        color,
        set,
        motion: [0.0; 3],
    }
}

/// Views of set `set` from `eye` panning across the table.
pub fn pan_views(set: SetName, eye: [f64; 3], count: usize) -> Vec<ViewSpec> {
    let xs: Vec<f64> = match count {
        1 => vec![0.0],
        n => (0..n)
            .map(|i| -0.2 + 0.4 * i as f64 / (n - 1) as f64)
            .collect(),
    };
    xs.into_iter()
        .map(|x| ViewSpec::look_at(set, eye, [x, 1.2, 0.8]))
        .collect()
}

/// The standard scene: a 0.2 m box on the table in A only, three current
/// and three background views.
pub fn box_on_table(seed: u64, width: usize, height: usize) -> SynthSpec {
    let mut s = room(seed, width, height);
    s.objects.push(table_object(
        [-0.1, 1.1],
        [0.2, 0.2, 0.2],
        [200, 40, 40],
        Presence::A,
    ));
    s.views = pan_views(SetName::A, [0.0, 0.0, 1.4], 3);
    s.views.extend(pan_views(SetName::B, [0.05, 0.02, 1.38], 3));
    s
}

/// Intersection over union of the accepted pixels against ground-truth
/// object `id` over all current frames.
pub fn iou_accepted(
    result: &SegmentationResult,
    gt: &[changeseg::grid::Grid<u16>],
    id: u16,
) -> f64 {
    let accepted: std::collections::HashSet<u32> = result
        .records
        .iter()
        .filter(|r| r.verdict.is_accepted())
        .map(|r| r.id)
        .collect();
    let (mut inter, mut union) = (0usize, 0usize);
    for (mask, g) in result.masks.iter().zip(gt) {
        for (m, t) in mask.as_slice().iter().zip(g.as_slice()) {
            let a = accepted.contains(m);
            let b = *t == id;
            inter += (a && b) as usize;
            union += (a || b) as usize;
        }
    }
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}
