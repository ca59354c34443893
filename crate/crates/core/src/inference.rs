//! Object/background labeling of all source frames.
//!
//! Per-pixel object priors come from the aggregated change evidence. A
//! binary CRF couples 4-adjacent pixels through the edge probabilities and
//! pixels of different frames through same-surface correspondences, and is
//! minimized exactly by a minimum cut. Cross-frame terms are added lazily:
//! only those the current solution violates are materialized before
//! re-solving.

use serde::Deserialize;
use thiserror::Error;

use crate::aggregation::SetComparison;
use crate::differencing::PairProbabilities;
use crate::edges::EdgeMaps;
use crate::grid::{Grid, Pixel};
use crate::maxflow::{Graph, Segment};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InferenceError {
    #[error(
        "pairwise term with weight {weight} rewards differing labels; the energy is not submodular"
    )]
    NonSubmodular { weight: f64 },
    #[error("lazy constraint loop did not converge within {iterations} iterations")]
    NotConverged { iterations: usize },
    #[error("problem is malformed: {0}")]
    Malformed(String),
}

/// When a pairwise weight is charged.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairwiseMode {
    /// Charged when the two labels differ (attractive, exactly solvable).
    Differ,
    /// Charged when the two labels are identical. Kept for experiments; it
    /// cannot be minimized by a cut and the solver rejects it.
    Identical,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InferenceConfig {
    /// Object probability of a pixel that occludes earlier observations.
    pub p_obj_given_occlusion: f64,
    /// Object probability of a pixel that re-observes an earlier surface.
    pub p_obj_given_same: f64,
    /// Object probability of a pixel with no usable evidence.
    pub p_obj_given_unknown: f64,
    /// Prior assigned to pixels touching a depth edge.
    pub depth_edge_prior: f64,
    /// Upper bound on every unary and pairwise cost, in nats.
    pub max_cost: f64,
    /// Cross-frame correspondences need a same-surface probability above
    /// this to become constraints.
    pub constraint_threshold: f64,
    pub max_lazy_iterations: usize,
    pub pairwise: PairwiseMode,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        Self {
            p_obj_given_occlusion: 0.99,
            p_obj_given_same: 0.1,
            p_obj_given_unknown: 0.49,
            depth_edge_prior: 0.5,
            max_cost: 20.0,
            constraint_threshold: 0.01,
            max_lazy_iterations: 50,
            pairwise: PairwiseMode::Differ,
        }
    }
}

/// Object prior of one pixel with the evidence mass it was built from.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PixelPrior {
    pub p_obj: f64,
    /// Occlusion mass.
    pub p_o: f64,
    /// Same-surface mass among non-occluding outcomes.
    pub p_s: f64,
    /// Remaining mass: neither occluding nor the same surface.
    pub p_u: f64,
}

/// Mixes the three outcome-conditional object probabilities by the mass of
/// each outcome.
pub fn pixel_prior(p_s: f64, p_o: f64, cfg: &InferenceConfig) -> PixelPrior {
    let p_u = (1.0 - p_o) * (1.0 - p_s);
    PixelPrior {
        p_obj: p_o * cfg.p_obj_given_occlusion
            + (1.0 - p_o) * p_s * cfg.p_obj_given_same
            + p_u * cfg.p_obj_given_unknown,
        p_o,
        p_s,
        p_u,
    }
}

/// Object priors of every pixel of a frame.
pub fn prior_map(evidence: &PairProbabilities, cfg: &InferenceConfig) -> Grid<f64> {
    Grid::from_vec(
        evidence.p_s.width(),
        evidence.p_s.height(),
        evidence
            .p_s
            .as_slice()
            .iter()
            .zip(evidence.p_o.as_slice())
            .map(|(&s, &o)| pixel_prior(s, o, cfg).p_obj)
            .collect(),
    )
    .expect("evidence grids share a shape")
}

/// Sets the prior of every pixel touching a depth edge to `value`; depth
/// readings flicker there between the two surfaces.
pub fn apply_depth_edge_override(priors: &Grid<f64>, edges: &EdgeMaps, value: f64) -> Grid<f64> {
    Grid::from_fn(priors.width(), priors.height(), |p| {
        if edges.touches_depth_edge(p) {
            value
        } else {
            priors[p]
        }
    })
}

/// Pairwise weights between 4-adjacent pixels of one frame, laid out like
/// [`EdgeMaps`].
#[derive(Clone, Debug, PartialEq)]
pub struct ImageCosts {
    pub h: Grid<f64>,
    pub v: Grid<f64>,
}

/// Weight of a term with probability `p` of the two sides differing:
/// `-ln p`, capped.
fn cost_of(p_differ: f64, max_cost: f64) -> f64 {
    (-p_differ.ln()).clamp(0.0, max_cost)
}

pub fn build_image_costs(edges: &EdgeMaps, cfg: &InferenceConfig) -> ImageCosts {
    let weight = |p_same: &f64| cost_of(1.0 - p_same, cfg.max_cost);
    let (w, h) = (edges.width(), edges.height());
    let mut costs = ImageCosts {
        h: edges.p_same_h.map(weight),
        v: edges.p_same_v.map(weight),
    };
    for y in 0..h {
        costs.h[Pixel::new(w - 1, y)] = 0.0;
    }
    for x in 0..w {
        costs.v[Pixel::new(x, h - 1)] = 0.0;
    }
    costs
}

/// A pixel of one of the labeled frames.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FramePixel {
    pub frame: usize,
    pub pixel: Pixel,
}

/// Cross-frame term tying two pixels that likely see the same surface.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SurfaceConstraint {
    pub a: FramePixel,
    pub b: FramePixel,
    pub weight: f64,
}

/// Constraints from the differencing of the labeled set against itself.
pub fn build_surface_constraints(
    within: &SetComparison,
    cfg: &InferenceConfig,
) -> Vec<SurfaceConstraint> {
    let mut out = Vec::new();
    for c in &within.pairs {
        for (i, target) in c.residuals.target.as_slice().iter().enumerate() {
            let (Some(t), p_s) = (target, c.probabilities.p_s.as_slice()[i]) else {
                continue;
            };
            if p_s > cfg.constraint_threshold {
                out.push(SurfaceConstraint {
                    a: FramePixel {
                        frame: c.source,
                        pixel: c.residuals.target.pixel_of(i),
                    },
                    b: FramePixel {
                        frame: c.target,
                        pixel: *t,
                    },
                    weight: cost_of(1.0 - p_s, cfg.max_cost),
                });
            }
        }
    }
    out
}

/// Everything the labeling energy depends on.
#[derive(Clone, Debug)]
pub struct Problem {
    pub priors: Vec<Grid<f64>>,
    pub image: Vec<ImageCosts>,
    pub constraints: Vec<SurfaceConstraint>,
}

/// Per-frame labels; `true` marks an object pixel.
#[derive(Clone, Debug, PartialEq)]
pub struct Labeling {
    pub frames: Vec<Grid<bool>>,
}

impl Labeling {
    pub fn get(&self, fp: FramePixel) -> bool {
        self.frames[fp.frame][fp.pixel]
    }

    pub fn object_count(&self) -> usize {
        self.frames
            .iter()
            .map(|f| f.as_slice().iter().filter(|&&b| b).count())
            .sum()
    }
}

/// Outcome of the lazy solve.
#[derive(Clone, Debug, PartialEq)]
pub struct Solution {
    pub labeling: Labeling,
    pub energy: f64,
    /// Number of cut computations.
    pub iterations: usize,
    /// Constraints that ended up in the final problem.
    pub constraints_used: usize,
    pub constraints_total: usize,
}

fn unary(p_obj: f64, max_cost: f64) -> (f64, f64) {
    (cost_of(p_obj, max_cost), cost_of(1.0 - p_obj, max_cost))
}

impl Problem {
    fn validate(&self) -> Result<(), InferenceError> {
        if self.priors.len() != self.image.len() {
            return Err(InferenceError::Malformed(
                "one set of image costs per frame required".into(),
            ));
        }
        for (p, c) in self.priors.iter().zip(&self.image) {
            if !p.same_shape(&c.h) || !p.same_shape(&c.v) {
                return Err(InferenceError::Malformed(
                    "image costs do not match the prior grid".into(),
                ));
            }
        }
        for c in &self.constraints {
            for fp in [c.a, c.b] {
                if fp.frame >= self.priors.len() || !self.priors[fp.frame].contains(fp.pixel) {
                    return Err(InferenceError::Malformed(format!(
                        "constraint endpoint {fp:?} outside the problem"
                    )));
                }
            }
        }
        Ok(())
    }

    fn offsets(&self) -> Vec<usize> {
        let mut acc = 0;
        self.priors
            .iter()
            .map(|g| {
                let o = acc;
                acc += g.len();
                o
            })
            .collect()
    }

    fn node(&self, offsets: &[usize], fp: FramePixel) -> usize {
        offsets[fp.frame] + self.priors[fp.frame].index_of(fp.pixel)
    }

    /// Energy of `labeling`: unary costs plus every pairwise weight whose
    /// charging condition holds.
    pub fn energy(&self, labeling: &Labeling, cfg: &InferenceConfig) -> f64 {
        let charged = |a: bool, b: bool| match cfg.pairwise {
            PairwiseMode::Differ => a != b,
            PairwiseMode::Identical => a == b,
        };
        let mut e = 0.0;
        for (f, priors) in self.priors.iter().enumerate() {
            let labels = &labeling.frames[f];
            let costs = &self.image[f];
            let (w, h) = (priors.width(), priors.height());
            for y in 0..h {
                for x in 0..w {
                    let p = Pixel::new(x, y);
                    let (c_obj, c_not) = unary(priors[p], cfg.max_cost);
                    e += if labels[p] { c_obj } else { c_not };
                    if x + 1 < w && charged(labels[p], labels[Pixel::new(x + 1, y)]) {
                        e += costs.h[p];
                    }
                    if y + 1 < h && charged(labels[p], labels[Pixel::new(x, y + 1)]) {
                        e += costs.v[p];
                    }
                }
            }
        }
        for c in &self.constraints {
            if charged(labeling.get(c.a), labeling.get(c.b)) {
                e += c.weight;
            }
        }
        e
    }

    /// Exact minimizer using the in-image terms and the given subset of
    /// constraints.
    fn cut(
        &self,
        constraints: &[usize],
        cfg: &InferenceConfig,
    ) -> Result<Labeling, InferenceError> {
        if cfg.pairwise == PairwiseMode::Identical {
            let image = self
                .image
                .iter()
                .flat_map(|c| c.h.as_slice().iter().chain(c.v.as_slice()));
            let cross = constraints.iter().map(|&i| &self.constraints[i].weight);
            if let Some(&weight) = image.chain(cross).find(|&&w| w > 0.0) {
                return Err(InferenceError::NonSubmodular { weight });
            }
        }
        let offsets = self.offsets();
        let nodes: usize = self.priors.iter().map(|g| g.len()).sum();
        let mut g = Graph::with_capacity(nodes, 2 * nodes + constraints.len());
        for (f, priors) in self.priors.iter().enumerate() {
            let costs = &self.image[f];
            let (w, h) = (priors.width(), priors.height());
            for y in 0..h {
                for x in 0..w {
                    let p = Pixel::new(x, y);
                    let i = offsets[f] + priors.index_of(p);
                    let (c_obj, c_not) = unary(priors[p], cfg.max_cost);
                    // Source side is the object label: cutting the source
                    // arc means paying for the background label.
                    g.add_terminal_weights(i, c_not, c_obj);
                    if x + 1 < w && costs.h[p] > 0.0 {
                        g.add_edge(i, i + 1, costs.h[p], costs.h[p]);
                    }
                    if y + 1 < h && costs.v[p] > 0.0 {
                        g.add_edge(i, i + w, costs.v[p], costs.v[p]);
                    }
                }
            }
        }
        for &ci in constraints {
            let c = &self.constraints[ci];
            let (a, b) = (self.node(&offsets, c.a), self.node(&offsets, c.b));
            if a != b && c.weight > 0.0 {
                g.add_edge(a, b, c.weight, c.weight);
            }
        }
        g.max_flow();
        Ok(Labeling {
            frames: self
                .priors
                .iter()
                .enumerate()
                .map(|(f, priors)| {
                    Grid::from_fn(priors.width(), priors.height(), |p| {
                        g.segment(offsets[f] + priors.index_of(p)) == Segment::Source
                    })
                })
                .collect(),
        })
    }

    /// Solves with every constraint present from the start.
    pub fn solve_eager(&self, cfg: &InferenceConfig) -> Result<Solution, InferenceError> {
        self.validate()?;
        let all: Vec<usize> = (0..self.constraints.len()).collect();
        let labeling = self.cut(&all, cfg)?;
        Ok(Solution {
            energy: self.energy(&labeling, cfg),
            labeling,
            iterations: 1,
            constraints_used: all.len(),
            constraints_total: all.len(),
        })
    }

    /// Solves with in-image terms only, then repeatedly adds the constraints
    /// the current labeling violates and re-solves until none is violated.
    pub fn solve(&self, cfg: &InferenceConfig) -> Result<Solution, InferenceError> {
        self.validate()?;
        let mut active: Vec<usize> = Vec::new();
        let mut included = vec![false; self.constraints.len()];
        for iteration in 1..=cfg.max_lazy_iterations {
            let labeling = self.cut(&active, cfg)?;
            let violated: Vec<usize> = (0..self.constraints.len())
                .filter(|&i| {
                    let c = &self.constraints[i];
                    !included[i] && c.weight > 0.0 && labeling.get(c.a) != labeling.get(c.b)
                })
                .collect();
            if violated.is_empty() {
                return Ok(Solution {
                    energy: self.energy(&labeling, cfg),
                    labeling,
                    iterations: iteration,
                    constraints_used: active.len(),
                    constraints_total: self.constraints.len(),
                });
            }
            for i in violated {
                included[i] = true;
                active.push(i);
            }
        }
        Err(InferenceError::NotConverged {
            iterations: cfg.max_lazy_iterations,
        })
    }
}
