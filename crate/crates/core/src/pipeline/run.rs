use nalgebra::Vector3;
use rayon::prelude::*;

use crate::aggregation::compare_sets;
use crate::clustering::{cluster, cross_frame_links, Segment};
use crate::edges::{edge_probability, EdgeMaps};
use crate::filtering::{
    junk_object_maps, overlaps_person, score_segment, verdict, PersonBox, Scores, Verdict,
};
use crate::geometry::RgbdFrame;
use crate::grid::Grid;
use crate::inference::{
    apply_depth_edge_override, build_image_costs, build_surface_constraints, prior_map, Problem,
};

use super::{Config, PipelineError};

/// Summary of one segment as written to the segments table.
#[derive(Clone, Debug, PartialEq)]
pub struct SegmentRecord {
    pub id: u32,
    pub verdict: Verdict,
    pub scores: Scores,
    pub pixels: usize,
    /// Mean world position of the members with a depth reading; NaN if none
    /// has one.
    pub centroid: Vector3<f64>,
    pub moving_ratio: f64,
}

/// Intermediate per-frame maps of the current set.
#[derive(Clone, Debug)]
pub struct DebugMaps {
    pub edges: Vec<EdgeMaps>,
    /// Aggregated same-surface evidence against the background set.
    pub p_s: Vec<Grid<f64>>,
    /// Aggregated occlusion evidence against the background set.
    pub p_o: Vec<Grid<f64>>,
    /// Object priors after the depth-edge override.
    pub priors: Vec<Grid<f64>>,
    /// Object priors of the current set compared against itself.
    pub moving: Vec<Grid<f64>>,
    pub labels: Vec<Grid<bool>>,
}

#[derive(Clone, Debug)]
pub struct SegmentationResult {
    pub segments: Vec<Segment>,
    pub records: Vec<SegmentRecord>,
    /// Segment id per pixel of each current frame, 0 for background.
    pub masks: Vec<Grid<u32>>,
    pub debug: DebugMaps,
    /// Cut computations of the lazy solve.
    pub iterations: usize,
    pub constraints_used: usize,
    pub constraints_total: usize,
}

impl SegmentationResult {
    pub fn accepted(&self) -> impl Iterator<Item = (&Segment, &SegmentRecord)> {
        self.segments
            .iter()
            .zip(&self.records)
            .filter(|(_, r)| r.verdict.is_accepted())
    }
}

/// Finds the objects present in `current` but not in `background`.
pub fn segment(
    current: &[RgbdFrame],
    background: &[RgbdFrame],
    persons: &[PersonBox],
    cfg: &Config,
) -> Result<SegmentationResult, PipelineError> {
    if current.is_empty() {
        return Err(PipelineError::Usage("the current set has no frames".into()));
    }
    if background.is_empty() {
        return Err(PipelineError::Usage(
            "the background set has no frames".into(),
        ));
    }
    let inf = &cfg.inference;

    let edges: Vec<EdgeMaps> = current
        .par_iter()
        .map(|f| edge_probability(f, &cfg.edges, &cfg.sie))
        .collect();
    let against = compare_sets(
        current,
        background,
        false,
        &cfg.differencing,
        &cfg.aggregation,
        &cfg.sie,
    );
    let priors: Vec<Grid<f64>> = against
        .evidence
        .iter()
        .zip(&edges)
        .map(|(ev, e)| apply_depth_edge_override(&prior_map(ev, inf), e, inf.depth_edge_prior))
        .collect();
    // A single current frame has nothing to be compared with.
    let within = (current.len() > 1).then(|| {
        compare_sets(
            current,
            current,
            true,
            &cfg.differencing,
            &cfg.aggregation,
            &cfg.sie,
        )
    });
    let constraints = within
        .as_ref()
        .map(|w| build_surface_constraints(w, inf))
        .unwrap_or_default();
    let links = within
        .as_ref()
        .map(|w| cross_frame_links(w, cfg.clustering.cross_frame_threshold))
        .unwrap_or_default();
    let moving: Vec<Grid<f64>> = match &within {
        Some(w) => w
            .evidence
            .iter()
            .zip(&edges)
            .map(|(ev, e)| apply_depth_edge_override(&prior_map(ev, inf), e, inf.depth_edge_prior))
            .collect(),
        None => current
            .iter()
            .map(|f| Grid::filled(f.width(), f.height(), 0.0))
            .collect(),
    };
    let problem = Problem {
        priors: priors.clone(),
        image: edges.iter().map(|e| build_image_costs(e, inf)).collect(),
        constraints,
    };
    let solution = problem.solve(inf)?;
    let segments = cluster(&solution.labeling, &edges, &links, &cfg.clustering);
    let (junk, obj): (Vec<Grid<f64>>, Vec<Grid<f64>>) = moving
        .iter()
        .zip(&priors)
        .map(|(m, p)| junk_object_maps(m, p))
        .unzip();
    let records = segments
        .iter()
        .map(|s| {
            let scores = score_segment(s, &junk, &obj);
            let verdict = if cfg.filtering.enabled {
                verdict(&scores, overlaps_person(s, persons), cfg.filtering.kappa)
            } else {
                Verdict::Accepted
            };
            SegmentRecord {
                id: s.id,
                verdict,
                scores,
                pixels: s.members.len(),
                centroid: centroid(s, current),
                moving_ratio: scores.moving_ratio(),
            }
        })
        .collect();

    let mut masks: Vec<Grid<u32>> = current
        .iter()
        .map(|f| Grid::filled(f.width(), f.height(), 0))
        .collect();
    for s in &segments {
        for m in &s.members {
            masks[m.frame][m.pixel] = s.id;
        }
    }

    Ok(SegmentationResult {
        segments,
        records,
        masks,
        debug: DebugMaps {
            edges,
            p_s: against.evidence.iter().map(|e| e.p_s.clone()).collect(),
            p_o: against.evidence.iter().map(|e| e.p_o.clone()).collect(),
            priors,
            moving,
            labels: solution.labeling.frames,
        },
        iterations: solution.iterations,
        constraints_used: solution.constraints_used,
        constraints_total: solution.constraints_total,
    })
}

fn centroid(s: &Segment, frames: &[RgbdFrame]) -> Vector3<f64> {
    let mut sum = Vector3::zeros();
    let mut n = 0usize;
    for m in &s.members {
        let f = &frames[m.frame];
        if let Some(p) = f.point(m.pixel) {
            sum += f.pose().transform_point(&p);
            n += 1;
        }
    }
    if n == 0 {
        Vector3::repeat(f64::NAN)
    } else {
        sum / n as f64
    }
}
