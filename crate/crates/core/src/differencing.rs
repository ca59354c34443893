//! Differencing of one frame against another.
//!
//! Every pixel of the source frame is transferred into the target frame and
//! compared with the measurement it lands on. The noise-normalized
//! point-to-plane and angular residuals of these correspondences are turned
//! into the probability that both sample the same surface and the
//! probability that the source point occludes the target measurement.

use libm::erfc;
use serde::Deserialize;

use crate::geometry::{correspondence_with, measurement_unchecked, Measurement, RgbdFrame};
use crate::grid::{Grid, Pixel};
use crate::sie::{fit_gaussian, fit_generalized_gaussian, NoiseModel, SieConfig};

/// Noise-normalized signed distance of `a` from the tangent plane of `b`.
///
/// Positive when `a` lies on the side `b`'s normal points to, which for
/// camera-facing normals is between `b` and its camera.
pub fn point_to_plane(a: &Measurement, b: &Measurement) -> f64 {
    b.normal.dot(&(a.point - b.point)) / (a.sigma * a.sigma + b.sigma * b.sigma).sqrt()
}

/// Noise-normalized disagreement of the two normals.
pub fn angular(a: &Measurement, b: &Measurement) -> f64 {
    (1.0 - a.normal.dot(&b.normal)) / (a.sigma * a.sigma + b.sigma * b.sigma).sqrt()
}

/// Residuals of every source pixel against one target frame.
///
/// `target` holds the target pixel each source pixel corresponds to, or
/// `None` where no usable correspondence exists; the other grids are only
/// meaningful where `target` is set.
#[derive(Clone, Debug, PartialEq)]
pub struct PairResiduals {
    /// Point-to-plane residual of the transferred point against the target.
    pub r_d: Grid<f64>,
    /// Angular residual between the two normals.
    pub r_a: Grid<f64>,
    /// Depth of the target measurement in the same normalized units as
    /// `r_d`; the upper end of the occlusion integral.
    pub depth_bound: Grid<f64>,
    pub target: Grid<Option<Pixel>>,
}

impl PairResiduals {
    pub fn valid(&self, p: Pixel) -> bool {
        self.target[p].is_some()
    }

    pub fn valid_count(&self) -> usize {
        self.target
            .as_slice()
            .iter()
            .filter(|t| t.is_some())
            .count()
    }
}

/// Computes the residuals of all pixels of `source` against `target`.
pub fn pair_residuals(source: &RgbdFrame, target: &RgbdFrame) -> PairResiduals {
    let to_target = target.pose().inverse().compose(source.pose());
    let per_pixel = Grid::par_from_fn(source.width(), source.height(), |p| {
        let m = measurement_unchecked(source, p)?;
        let c = correspondence_with(&m, &to_target, target)?;
        let scale = (c.transferred.sigma.powi(2) + c.target.sigma.powi(2)).sqrt();
        Some((
            point_to_plane(&c.transferred, &c.target),
            angular(&c.transferred, &c.target),
            c.target.point.z / scale,
            c.target_pixel,
        ))
    });
    PairResiduals {
        r_d: per_pixel.map(|v| v.map_or(0.0, |v| v.0)),
        r_a: per_pixel.map(|v| v.map_or(0.0, |v| v.1)),
        depth_bound: per_pixel.map(|v| v.map_or(0.0, |v| v.2)),
        target: per_pixel.map(|v| v.map(|v| v.3)),
    }
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DifferencingConfig {
    /// Added to the fitted point-to-plane noise scale.
    pub overlap_scale_floor: f64,
    /// Added to the fitted angular noise scale.
    pub normal_scale_floor: f64,
    /// Point-to-plane noise scale used when the residuals cannot be fitted.
    pub fallback_overlap_sigma: f64,
    /// Angular noise scale and shape used when the residuals cannot be
    /// fitted.
    pub fallback_normal_alpha: f64,
    pub fallback_normal_beta: f64,
    /// Inlier weight of the fallback models.
    pub fallback_inlier_weight: f64,
}

impl Default for DifferencingConfig {
    fn default() -> Self {
        Self {
            overlap_scale_floor: 0.0005,
            normal_scale_floor: 0.001,
            fallback_overlap_sigma: 0.002,
            fallback_normal_alpha: 0.002,
            fallback_normal_beta: 1.0,
            fallback_inlier_weight: 0.99,
        }
    }
}

/// Fitted noise models for the two residual kinds of a comparison.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SurfaceModels {
    /// Gaussian model of the point-to-plane residual.
    pub overlap: NoiseModel,
    /// Generalized Gaussian model of the angular residual.
    pub normal: NoiseModel,
}

impl SurfaceModels {
    /// The models used when nothing can be fitted; the outlier component is
    /// spread uniformly over twenty noise scales to either side.
    pub fn fallback(cfg: &DifferencingConfig) -> Self {
        let w = cfg.fallback_inlier_weight;
        let sigma = cfg.fallback_overlap_sigma;
        let alpha = cfg.fallback_normal_alpha;
        Self {
            overlap: NoiseModel::gaussian(sigma, w, (1.0 - w) / (40.0 * sigma)),
            normal: NoiseModel::generalized_gaussian(
                alpha,
                cfg.fallback_normal_beta,
                w,
                (1.0 - w) / (40.0 * alpha),
            ),
        }
        .with_floors(cfg)
    }

    fn with_floors(self, cfg: &DifferencingConfig) -> Self {
        Self {
            overlap: self.overlap.with_scale_floor(cfg.overlap_scale_floor),
            normal: self.normal.with_scale_floor(cfg.normal_scale_floor),
        }
    }

    /// Fits both models on the valid residuals of all given pairs. A model
    /// whose fit fails is replaced by its fallback.
    pub fn fit<'a>(
        pairs: impl IntoIterator<Item = &'a PairResiduals>,
        cfg: &DifferencingConfig,
        sie: &SieConfig,
    ) -> Self {
        let mut r_d = Vec::new();
        let mut r_a = Vec::new();
        for pr in pairs {
            for (i, t) in pr.target.as_slice().iter().enumerate() {
                if t.is_some() {
                    r_d.push(pr.r_d.as_slice()[i]);
                    r_a.push(pr.r_a.as_slice()[i]);
                }
            }
        }
        let fallback = Self::fallback(&DifferencingConfig {
            overlap_scale_floor: 0.0,
            normal_scale_floor: 0.0,
            ..cfg.clone()
        });
        Self {
            overlap: fit_gaussian(&r_d, sie).unwrap_or(fallback.overlap),
            normal: fit_generalized_gaussian(&r_a, sie).unwrap_or(fallback.normal),
        }
        .with_floors(cfg)
    }

    /// Probability that two measurements overlap given their point-to-plane
    /// residual.
    pub fn p_overlap(&self, r_d: f64) -> f64 {
        self.overlap.inlier_probability(r_d)
    }

    /// Probability that two normals agree given their angular residual.
    pub fn p_same_normal(&self, r_a: f64) -> f64 {
        self.normal.inlier_probability(r_a)
    }

    /// Probability that two measurements sample the same surface.
    pub fn p_same(&self, r_d: f64, r_a: f64) -> f64 {
        self.p_overlap(r_d) * self.p_same_normal(r_a)
    }

    /// Probability that the source point occludes the target measurement:
    /// the mass of the point-to-plane noise centered at `r_d` that lies
    /// between the target surface and the target camera, gated by the
    /// surfaces not being the same.
    pub fn p_occlusion(&self, r_d: f64, depth_bound: f64, p_same: f64) -> f64 {
        let sigma = self.overlap.scale();
        let mass = normal_cdf((depth_bound - r_d) / sigma) - normal_cdf(-r_d / sigma);
        ((1.0 - p_same) * mass.max(0.0)).clamp(0.0, 1.0)
    }
}

/// Standard normal cumulative distribution.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Same-surface and occlusion probabilities of every source pixel against
/// one target frame. Pixels without a correspondence get zero for both.
#[derive(Clone, Debug, PartialEq)]
pub struct PairProbabilities {
    pub p_s: Grid<f64>,
    pub p_o: Grid<f64>,
}

pub fn prob_same_surface(res: &PairResiduals, models: &SurfaceModels) -> Grid<f64> {
    Grid::from_fn(res.r_d.width(), res.r_d.height(), |p| {
        if res.valid(p) {
            models.p_same(res.r_d[p], res.r_a[p])
        } else {
            0.0
        }
    })
}

pub fn prob_occlusion(res: &PairResiduals, models: &SurfaceModels, p_s: &Grid<f64>) -> Grid<f64> {
    Grid::from_fn(res.r_d.width(), res.r_d.height(), |p| {
        if res.valid(p) {
            models.p_occlusion(res.r_d[p], res.depth_bound[p], p_s[p])
        } else {
            0.0
        }
    })
}

pub fn pair_probabilities(res: &PairResiduals, models: &SurfaceModels) -> PairProbabilities {
    let p_s = prob_same_surface(res, models);
    let p_o = prob_occlusion(res, models, &p_s);
    PairProbabilities { p_s, p_o }
}
