//! Statistical inlier estimation.
//!
//! A residual population is modelled as a two-component mixture: a zero-mean
//! inlier density (Gaussian or generalized Gaussian) and a uniform outlier
//! density over the observed residual range. The mixture is fitted by
//! expectation-maximization, and residuals are turned into posterior inlier
//! probabilities.
//!
//! All fitted quantities depend only on `|x|`, so a population of absolute
//! residuals fits the same model as its signed counterpart.

use libm::lgamma as ln_gamma;
use serde::Deserialize;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SieError {
    #[error("too few residuals to fit a noise model ({got} < {need})")]
    TooFew { got: usize, need: usize },
    #[error("degenerate residual population (all values identical)")]
    Degenerate,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NoiseKind {
    Gaussian,
    GeneralizedGaussian,
}

/// A fitted inlier/outlier mixture.
///
/// The generalized Gaussian uses the exponent `-0.5 |x / alpha|^beta`, so
/// `beta = 2` is exactly a Gaussian with `sigma = alpha`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseModel {
    kind: NoiseKind,
    scale: f64,
    shape: f64,
    inlier_weight: f64,
    outlier_density: f64,
}

pub const MIN_SHAPE: f64 = 0.5;
pub const MAX_SHAPE: f64 = 10.0;

impl NoiseModel {
    /// A Gaussian inlier model with standard deviation `sigma`.
    pub fn gaussian(sigma: f64, inlier_weight: f64, outlier_density: f64) -> Self {
        assert!(sigma > 0.0, "sigma must be positive");
        Self {
            kind: NoiseKind::Gaussian,
            scale: sigma,
            shape: 2.0,
            inlier_weight: inlier_weight.clamp(0.0, 1.0),
            outlier_density: outlier_density.max(0.0),
        }
    }

    pub fn generalized_gaussian(
        alpha: f64,
        beta: f64,
        inlier_weight: f64,
        outlier_density: f64,
    ) -> Self {
        assert!(alpha > 0.0, "alpha must be positive");
        Self {
            kind: NoiseKind::GeneralizedGaussian,
            scale: alpha,
            shape: beta.clamp(MIN_SHAPE, MAX_SHAPE),
            inlier_weight: inlier_weight.clamp(0.0, 1.0),
            outlier_density: outlier_density.max(0.0),
        }
    }

    pub fn kind(&self) -> NoiseKind {
        self.kind
    }

    /// `sigma` for a Gaussian, `alpha` for a generalized Gaussian.
    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// `beta`; always 2 for a Gaussian.
    pub fn shape(&self) -> f64 {
        self.shape
    }

    pub fn inlier_weight(&self) -> f64 {
        self.inlier_weight
    }

    pub fn outlier_density(&self) -> f64 {
        self.outlier_density
    }

    /// The same model with `floor` added to its scale.
    pub fn with_scale_floor(&self, floor: f64) -> Self {
        Self {
            scale: self.scale + floor.max(0.0),
            ..*self
        }
    }

    /// Normalized inlier density (without the mixing weight).
    pub fn density(&self, x: f64) -> f64 {
        gg_density(
            x.abs(),
            self.scale,
            self.shape,
            gg_log_norm(self.scale, self.shape),
        )
    }

    /// Mixing-weighted inlier density.
    pub fn inlier_density(&self, x: f64) -> f64 {
        self.inlier_weight * self.density(x)
    }

    /// Posterior probability that `x` came from the inlier component.
    pub fn inlier_probability(&self, x: f64) -> f64 {
        let inlier = self.inlier_density(x);
        let total = inlier + self.outlier_density;
        if total > 0.0 {
            inlier / total
        } else {
            0.0
        }
    }
}

fn gg_log_norm(alpha: f64, beta: f64) -> f64 {
    beta.ln() - (1.0 + 1.0 / beta) * std::f64::consts::LN_2 - alpha.ln() - ln_gamma(1.0 / beta)
}

#[inline]
fn gg_density(abs_x: f64, alpha: f64, beta: f64, log_norm: f64) -> f64 {
    let t = abs_x / alpha;
    let e = if beta == 2.0 { t * t } else { t.powf(beta) };
    (log_norm - 0.5 * e).exp()
}

/// Fitting controls.
#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SieConfig {
    /// Populations smaller than this cannot be fitted.
    pub min_samples: usize,
    /// Larger populations are subsampled uniformly down to this size.
    pub max_samples: usize,
    /// Relative parameter change below which EM stops.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Lower bound on the outlier mixing weight, so that residuals far out in
    /// the tails always end up as outliers even on clean populations.
    pub min_outlier_weight: f64,
    /// Width of the final bracket of the shape search.
    pub shape_tolerance: f64,
}

impl Default for SieConfig {
    fn default() -> Self {
        Self {
            min_samples: 100,
            max_samples: 500_000,
            tolerance: 1e-4,
            max_iterations: 100,
            min_outlier_weight: 1e-4,
            shape_tolerance: 1e-3,
        }
    }
}

/// Absolute residuals ready for fitting.
struct Population {
    abs: Vec<f64>,
    /// `ln |x|`, so that powers cost one `exp`.
    ln_abs: Vec<f64>,
    outlier_support: f64,
    initial_scale: f64,
    scale_guard: f64,
}

fn prepare(residuals: &[f64], cfg: &SieConfig) -> Result<Population, SieError> {
    let finite: Vec<f64> = residuals
        .iter()
        .copied()
        .filter(|x| x.is_finite())
        .collect();
    if finite.len() < cfg.min_samples.max(2) {
        return Err(SieError::TooFew {
            got: finite.len(),
            need: cfg.min_samples.max(2),
        });
    }
    let (lo, hi) = finite
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
            (lo.min(x), hi.max(x))
        });
    if lo == hi {
        return Err(SieError::Degenerate);
    }
    let abs: Vec<f64> = if finite.len() > cfg.max_samples {
        let n = finite.len();
        let m = cfg.max_samples;
        (0..m)
            .map(|i| finite[(i as u128 * n as u128 / m as u128) as usize].abs())
            .collect()
    } else {
        finite.iter().map(|x| x.abs()).collect()
    };
    let max_abs = abs.iter().copied().fold(0.0, f64::max);
    if max_abs == 0.0 {
        return Err(SieError::Degenerate);
    }
    let mut scratch = abs.clone();
    let mid = scratch.len() / 2;
    let (_, median, _) = scratch.select_nth_unstable_by(mid, f64::total_cmp);
    let scale_guard = 1e-6 * max_abs;
    Ok(Population {
        ln_abs: abs.iter().map(|x| x.ln()).collect(),
        initial_scale: (1.4826 * *median).max(scale_guard),
        outlier_support: 2.0 * max_abs,
        abs,
        scale_guard,
    })
}

#[derive(Clone)]
struct EmState {
    scale: f64,
    weight: f64,
}

/// EM for a fixed shape; returns the converged state.
fn em(pop: &Population, shape: f64, start: &EmState, cfg: &SieConfig) -> EmState {
    let uniform = 1.0 / pop.outlier_support;
    let max_weight = 1.0 - cfg.min_outlier_weight;
    let mut scale = start.scale.max(pop.scale_guard);
    let mut weight = start.weight.clamp(1e-6, max_weight);
    for _ in 0..cfg.max_iterations {
        let log_norm = gg_log_norm(scale, shape);
        let outlier = (1.0 - weight) * uniform;
        let mut sum_r = 0.0;
        let mut sum_rx = 0.0;
        let ln_scale = scale.ln();
        for (&x, &lx) in pop.abs.iter().zip(&pop.ln_abs) {
            let tb = scaled_power(x, lx, scale, ln_scale, shape);
            let inlier = weight * (log_norm - 0.5 * tb).exp();
            let r = inlier / (inlier + outlier);
            sum_r += r;
            sum_rx += r * tb;
        }
        let n = pop.abs.len() as f64;
        let new_weight = (sum_r / n).clamp(1e-6, max_weight);
        // Closed-form scale update, written relative to the current scale to
        // stay well-conditioned for tiny or huge residual units.
        let new_scale = if sum_r > 0.0 {
            (scale * (0.5 * shape * sum_rx / sum_r).powf(1.0 / shape)).max(pop.scale_guard)
        } else {
            scale
        };
        let change = ((new_scale - scale) / scale)
            .abs()
            .max((new_weight - weight).abs());
        scale = new_scale;
        weight = new_weight;
        if change < cfg.tolerance {
            break;
        }
    }
    EmState { scale, weight }
}

fn log_likelihood(pop: &Population, shape: f64, st: &EmState) -> f64 {
    let log_norm = gg_log_norm(st.scale, shape);
    let outlier = (1.0 - st.weight) / pop.outlier_support;
    let ln_scale = st.scale.ln();
    pop.abs
        .iter()
        .zip(&pop.ln_abs)
        .map(|(&x, &lx)| {
            let tb = scaled_power(x, lx, st.scale, ln_scale, shape);
            (st.weight * (log_norm - 0.5 * tb).exp() + outlier).ln()
        })
        .sum()
}

/// `(x / scale)^shape` given `ln x` and `ln scale`.
#[inline]
fn scaled_power(x: f64, ln_x: f64, scale: f64, ln_scale: f64, shape: f64) -> f64 {
    if shape == 2.0 {
        let t = x / scale;
        t * t
    } else {
        (shape * (ln_x - ln_scale)).exp()
    }
}

fn model_from(kind: NoiseKind, pop: &Population, shape: f64, st: &EmState) -> NoiseModel {
    let outlier_density = (1.0 - st.weight) / pop.outlier_support;
    match kind {
        NoiseKind::Gaussian => NoiseModel::gaussian(st.scale, st.weight, outlier_density),
        NoiseKind::GeneralizedGaussian => {
            NoiseModel::generalized_gaussian(st.scale, shape, st.weight, outlier_density)
        }
    }
}

/// Fits a zero-mean Gaussian inlier component.
pub fn fit_gaussian(residuals: &[f64], cfg: &SieConfig) -> Result<NoiseModel, SieError> {
    let pop = prepare(residuals, cfg)?;
    let st = em(
        &pop,
        2.0,
        &EmState {
            scale: pop.initial_scale,
            weight: 0.5,
        },
        cfg,
    );
    Ok(model_from(NoiseKind::Gaussian, &pop, 2.0, &st))
}

/// Fits a zero-mean generalized Gaussian inlier component, choosing the
/// shape by golden-section search over the mixture likelihood.
pub fn fit_generalized_gaussian(
    residuals: &[f64],
    cfg: &SieConfig,
) -> Result<NoiseModel, SieError> {
    let pop = prepare(residuals, cfg)?;
    let gaussian = em(
        &pop,
        2.0,
        &EmState {
            scale: pop.initial_scale,
            weight: 0.5,
        },
        cfg,
    );
    // EM for each candidate starts from the converged state of the nearest
    // shape evaluated so far.
    let mut seen: Vec<(f64, EmState)> = vec![(2.0, gaussian)];
    let mut evaluate = |shape: f64| {
        let start = seen
            .iter()
            .min_by(|a, b| (a.0 - shape).abs().total_cmp(&(b.0 - shape).abs()))
            .map(|(_, st)| st.clone())
            .expect("seeded with the Gaussian fit");
        let st = em(&pop, shape, &start, cfg);
        seen.push((shape, st.clone()));
        (log_likelihood(&pop, shape, &st), st)
    };

    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut lo, mut hi) = (MIN_SHAPE, MAX_SHAPE);
    let mut c = hi - inv_phi * (hi - lo);
    let mut d = lo + inv_phi * (hi - lo);
    let mut fc = evaluate(c);
    let mut fd = evaluate(d);
    while hi - lo > cfg.shape_tolerance {
        if fc.0 >= fd.0 {
            hi = d;
            d = c;
            fd = fc;
            c = hi - inv_phi * (hi - lo);
            fc = evaluate(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + inv_phi * (hi - lo);
            fd = evaluate(d);
        }
    }
    let (shape, (_, st)) = if fc.0 >= fd.0 { (c, fc) } else { (d, fd) };
    Ok(model_from(NoiseKind::GeneralizedGaussian, &pop, shape, &st))
}
