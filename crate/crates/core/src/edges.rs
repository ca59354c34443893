//! Probabilistic color and depth edges between 4-adjacent pixels.
//!
//! For every horizontally and vertically adjacent pair the module estimates
//! the probability that both pixels sample the same surface. Color and depth
//! residuals are each fitted with a per-image noise model, so the edge
//! threshold adapts to exposure and sensor noise.

use serde::Deserialize;

use crate::geometry::RgbdFrame;
use crate::grid::{Grid, Pixel};
use crate::sie::{fit_gaussian, NoiseModel, SieConfig};

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EdgeConfig {
    /// Standard deviation of the color smoothing kernel in pixels; `0`
    /// disables smoothing.
    pub smoothing_sigma: f64,
    /// Kernel half-width; the kernel is `2 * radius + 1` pixels wide.
    pub smoothing_radius: usize,
    /// Probability that two pixels of different color lie on different
    /// surfaces.
    pub color_surface_change: f64,
    /// Added to the fitted color noise scale (color levels).
    pub color_scale_floor: f64,
    /// Added to the fitted depth noise scale (normalized depth units).
    pub depth_scale_floor: f64,
}

impl Default for EdgeConfig {
    fn default() -> Self {
        Self {
            smoothing_sigma: 1.0,
            smoothing_radius: 2,
            color_surface_change: 0.8,
            color_scale_floor: 0.5,
            depth_scale_floor: 0.0005,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    /// Pair `(x, y)`, `(x + 1, y)`.
    Horizontal,
    /// Pair `(x, y)`, `(x, y + 1)`.
    Vertical,
}

impl Direction {
    fn step(self, p: Pixel, k: isize) -> Option<Pixel> {
        let (x, y) = match self {
            Direction::Horizontal => (p.x as isize + k, p.y as isize),
            Direction::Vertical => (p.x as isize, p.y as isize + k),
        };
        (x >= 0 && y >= 0).then(|| Pixel::new(x as usize, y as usize))
    }
}

/// Same-surface probabilities for all 4-adjacent pairs of one frame.
///
/// Entry `p` of the `_h` grids describes the pair `(p, p + x)`, entry `p` of
/// the `_v` grids the pair `(p, p + y)`. Entries without a partner (last
/// column, last row) hold probability 1 and no edge.
#[derive(Clone, Debug, PartialEq)]
pub struct EdgeMaps {
    pub p_same_h: Grid<f64>,
    pub p_same_v: Grid<f64>,
    pub depth_edge_h: Grid<bool>,
    pub depth_edge_v: Grid<bool>,
}

impl EdgeMaps {
    /// Maps with no edges at all.
    pub fn uniform(width: usize, height: usize) -> Self {
        Self {
            p_same_h: Grid::filled(width, height, 1.0),
            p_same_v: Grid::filled(width, height, 1.0),
            depth_edge_h: Grid::filled(width, height, false),
            depth_edge_v: Grid::filled(width, height, false),
        }
    }

    pub fn width(&self) -> usize {
        self.p_same_h.width()
    }

    pub fn height(&self) -> usize {
        self.p_same_h.height()
    }

    /// Same-surface probability of two 4-adjacent pixels, in either order.
    pub fn p_same(&self, a: Pixel, b: Pixel) -> Option<f64> {
        let (lo, hi) = if (a.y, a.x) <= (b.y, b.x) {
            (a, b)
        } else {
            (b, a)
        };
        if !self.p_same_h.contains(hi) {
            return None;
        }
        if lo.y == hi.y && lo.x + 1 == hi.x {
            Some(self.p_same_h[lo])
        } else if lo.x == hi.x && lo.y + 1 == hi.y {
            Some(self.p_same_v[lo])
        } else {
            None
        }
    }

    /// Whether any depth edge touches `p`.
    pub fn touches_depth_edge(&self, p: Pixel) -> bool {
        self.depth_edge_h[p]
            || self.depth_edge_v[p]
            || (p.x > 0 && self.depth_edge_h[Pixel::new(p.x - 1, p.y)])
            || (p.y > 0 && self.depth_edge_v[Pixel::new(p.x, p.y - 1)])
    }
}

fn gaussian_kernel(sigma: f64, radius: usize) -> Vec<f64> {
    let k: Vec<f64> = (-(radius as isize)..=radius as isize)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = k.iter().sum();
    k.into_iter().map(|v| v / total).collect()
}

/// Separable Gaussian blur of each color channel with clamped borders.
pub fn smooth_color(color: &Grid<[u8; 3]>, sigma: f64, radius: usize) -> Grid<[f64; 3]> {
    let as_float = color.map(|c| [c[0] as f64, c[1] as f64, c[2] as f64]);
    if sigma <= 0.0 || radius == 0 {
        return as_float;
    }
    let kernel = gaussian_kernel(sigma, radius);
    let (w, h) = (color.width(), color.height());
    let r = radius as isize;
    let pass = |src: &Grid<[f64; 3]>, horizontal: bool| {
        Grid::from_fn(w, h, |p| {
            let mut acc = [0.0; 3];
            for (i, kv) in kernel.iter().enumerate() {
                let off = i as isize - r;
                let q = if horizontal {
                    Pixel::new((p.x as isize + off).clamp(0, w as isize - 1) as usize, p.y)
                } else {
                    Pixel::new(p.x, (p.y as isize + off).clamp(0, h as isize - 1) as usize)
                };
                let c = src[q];
                for ch in 0..3 {
                    acc[ch] += kv * c[ch];
                }
            }
            acc
        })
    };
    pass(&pass(&as_float, true), false)
}

/// Per-channel absolute color difference.
pub fn color_residual(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        (a[0] - b[0]).abs(),
        (a[1] - b[1]).abs(),
        (a[2] - b[2]).abs(),
    ]
}

fn pair_grid<T: Clone>(
    width: usize,
    height: usize,
    dir: Direction,
    default: T,
    mut f: impl FnMut(Pixel, Pixel) -> T,
) -> Grid<T> {
    Grid::from_fn(width, height, |p| match dir.step(p, 1) {
        Some(q) if q.x < width && q.y < height => f(p, q),
        _ => default.clone(),
    })
}

/// Same-surface probability from color alone for all horizontal and
/// vertical pairs of `color`.
///
/// Each channel's residuals are fitted separately and the per-channel
/// same-color posteriors are multiplied. A channel whose fit fails (for
/// example a constant channel) contributes no edge evidence.
pub fn color_same_probability(
    color: &Grid<[u8; 3]>,
    cfg: &EdgeConfig,
    sie: &SieConfig,
) -> (Grid<f64>, Grid<f64>) {
    let smooth = smooth_color(color, cfg.smoothing_sigma, cfg.smoothing_radius);
    let (w, h) = (color.width(), color.height());
    let res_h = pair_grid(w, h, Direction::Horizontal, None, |a, b| {
        Some(color_residual(smooth[a], smooth[b]))
    });
    let res_v = pair_grid(w, h, Direction::Vertical, None, |a, b| {
        Some(color_residual(smooth[a], smooth[b]))
    });

    let models: Vec<Option<NoiseModel>> = (0..3)
        .map(|ch| {
            let samples: Vec<f64> = res_h
                .as_slice()
                .iter()
                .chain(res_v.as_slice())
                .filter_map(|r| r.map(|r| r[ch]))
                .collect();
            fit_gaussian(&samples, sie)
                .ok()
                .map(|m| m.with_scale_floor(cfg.color_scale_floor))
        })
        .collect();

    let to_prob = |r: &Option<[f64; 3]>| match r {
        None => 1.0,
        Some(r) => {
            let same_color: f64 = models
                .iter()
                .zip(r)
                .map(|(m, &x)| m.as_ref().map_or(1.0, |m| m.inlier_probability(x)))
                .product();
            1.0 - cfg.color_surface_change * (1.0 - same_color)
        }
    };
    (res_h.map(to_prob), res_v.map(to_prob))
}

/// Noise-normalized depth discontinuity between `pixel` and its neighbor in
/// direction `dir`.
///
/// The residual is the smaller of the plain depth difference and the mean
/// disagreement with the depths extrapolated from the outer neighbors along
/// the same line, divided by the combined `z^2` noise of the pair. When an
/// outer neighbor is missing only the plain difference is used. `None` when
/// either pixel of the pair has no depth or the neighbor is outside.
pub fn depth_residual(depth: &Grid<f64>, pixel: Pixel, dir: Direction) -> Option<f64> {
    let at = |k: isize| {
        dir.step(pixel, k)
            .and_then(|q| depth.get(q).copied())
            .filter(|&z| z > 0.0)
    };
    let z1 = at(0)?;
    let z2 = at(1)?;
    let plain = (z1 - z2).abs();
    let diff = match (at(-1), at(2)) {
        (Some(z0), Some(z3)) => {
            plain.min(((z1 - 2.0 * z2 + z3).abs() + (z2 - 2.0 * z1 + z0).abs()) / 2.0)
        }
        _ => plain,
    };
    Some(diff / (z1.powi(4) + z2.powi(4)).sqrt())
}

/// Same-surface probability from depth alone for all horizontal and
/// vertical pairs. Pairs with an undefined residual get probability 1.
pub fn depth_same_probability(
    depth: &Grid<f64>,
    cfg: &EdgeConfig,
    sie: &SieConfig,
) -> (Grid<f64>, Grid<f64>) {
    let (w, h) = (depth.width(), depth.height());
    let res_h = Grid::from_fn(w, h, |p| depth_residual(depth, p, Direction::Horizontal));
    let res_v = Grid::from_fn(w, h, |p| depth_residual(depth, p, Direction::Vertical));
    let samples: Vec<f64> = res_h
        .as_slice()
        .iter()
        .chain(res_v.as_slice())
        .flatten()
        .copied()
        .collect();
    let model = fit_gaussian(&samples, sie)
        .ok()
        .map(|m| m.with_scale_floor(cfg.depth_scale_floor));
    let to_prob = |r: &Option<f64>| match (r, &model) {
        (Some(x), Some(m)) => m.inlier_probability(*x),
        _ => 1.0,
    };
    (res_h.map(to_prob), res_v.map(to_prob))
}

/// Combined color and depth same-surface probabilities of a frame, with
/// depth edges flagged where depth alone makes a surface change more likely
/// than not.
pub fn edge_probability(frame: &RgbdFrame, cfg: &EdgeConfig, sie: &SieConfig) -> EdgeMaps {
    let (color_h, color_v) = color_same_probability(frame.color(), cfg, sie);
    let (depth_h, depth_v) = depth_same_probability(frame.depth(), cfg, sie);
    let combine = |c: &Grid<f64>, d: &Grid<f64>| {
        Grid::from_vec(
            c.width(),
            c.height(),
            c.as_slice()
                .iter()
                .zip(d.as_slice())
                .map(|(a, b)| a * b)
                .collect(),
        )
        .expect("same shape")
    };
    EdgeMaps {
        p_same_h: combine(&color_h, &depth_h),
        p_same_v: combine(&color_v, &depth_v),
        depth_edge_h: depth_h.map(|&p| 1.0 - p > 0.5),
        depth_edge_v: depth_v.map(|&p| 1.0 - p > 0.5),
    }
}
