//! Multi-frame aggregation of differencing evidence.
//!
//! A source pixel usually corresponds to measurements in several target
//! frames, and those measurements need not sample the same surface. The
//! pixel's evidence is therefore marginalized over the ways of partitioning
//! its correspondences into surfaces, weighting each partition by how well
//! the pairwise same-surface probabilities support it. Partitions are
//! enumerated by branch and bound, keeping every partition within a fixed
//! likelihood ratio of the best one.

use serde::Deserialize;

use crate::differencing::{
    angular, pair_probabilities, pair_residuals, point_to_plane, DifferencingConfig,
    PairProbabilities, PairResiduals, SurfaceModels,
};
use crate::geometry::{measurement_unchecked, to_global, Measurement, RgbdFrame};
use crate::grid::{Grid, Pixel};
use crate::sie::SieConfig;

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AggregationConfig {
    /// Partitions whose likelihood times this ratio exceeds the best
    /// partition's likelihood take part in the marginalization.
    pub band_ratio: f64,
    /// Correspondences beyond this count are dropped, farthest target
    /// camera first.
    pub max_members: usize,
    /// Pairwise same-surface probabilities are clamped to
    /// `[clamp, 1 - clamp]` so every partition keeps a positive likelihood.
    pub probability_clamp: f64,
}

impl Default for AggregationConfig {
    fn default() -> Self {
        Self {
            band_ratio: 100.0,
            max_members: 10,
            probability_clamp: 1e-9,
        }
    }
}

/// One correspondence of a source pixel.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Member {
    /// The target measurement, in global coordinates.
    pub measurement: Measurement,
    /// Same-surface probability of the source pixel against this target.
    pub p_s: f64,
    /// Occlusion probability of the source pixel against this target.
    pub p_o: f64,
    /// Index of the target frame.
    pub frame: usize,
}

/// All usable correspondences of one source pixel, in target-frame order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CorrespondenceSet {
    pub members: Vec<Member>,
}

impl CorrespondenceSet {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

/// A target frame together with the differencing of the source frame
/// against it.
#[derive(Clone, Copy, Debug)]
pub struct TargetView<'a> {
    pub index: usize,
    pub frame: &'a RgbdFrame,
    pub residuals: &'a PairResiduals,
    pub probabilities: &'a PairProbabilities,
}

/// Collects the correspondences of `pixel` of `source` over `targets`.
///
/// When more than `max_members` targets see the pixel, the ones whose
/// cameras are closest to the source camera are kept; the kept members stay
/// in target order.
pub fn gather(
    source: &RgbdFrame,
    pixel: Pixel,
    targets: &[TargetView],
    max_members: usize,
) -> CorrespondenceSet {
    let mut members: Vec<Member> = targets
        .iter()
        .filter_map(|t| {
            let tp = t.residuals.target[pixel]?;
            let m = measurement_unchecked(t.frame, tp)?;
            Some(Member {
                measurement: to_global(t.frame.pose(), &m),
                p_s: t.probabilities.p_s[pixel],
                p_o: t.probabilities.p_o[pixel],
                frame: t.index,
            })
        })
        .collect();
    if members.len() > max_members {
        let center = source.pose().camera_center();
        let distance = |frame: usize| {
            let t = targets
                .iter()
                .find(|t| t.index == frame)
                .expect("member frame is a target");
            (t.frame.pose().camera_center() - center).norm()
        };
        let mut order: Vec<usize> = (0..members.len()).collect();
        order.sort_by(|&a, &b| {
            distance(members[a].frame)
                .total_cmp(&distance(members[b].frame))
                .then(a.cmp(&b))
        });
        let mut keep = vec![false; members.len()];
        for &i in &order[..max_members] {
            keep[i] = true;
        }
        let mut i = 0;
        members.retain(|_| {
            i += 1;
            keep[i - 1]
        });
    }
    CorrespondenceSet { members }
}

/// Probability that two global measurements sample the same surface.
///
/// The point-to-plane term is evaluated against both tangent planes and
/// averaged, which makes the result independent of argument order.
pub fn pair_same_surface(a: &Measurement, b: &Measurement, models: &SurfaceModels) -> f64 {
    let overlap =
        0.5 * (models.p_overlap(point_to_plane(a, b)) + models.p_overlap(point_to_plane(b, a)));
    overlap * models.p_same_normal(angular(a, b))
}

/// Symmetric matrix of pairwise same-surface probabilities.
#[derive(Clone, Debug, PartialEq)]
pub struct PairMatrix {
    n: usize,
    p: Vec<f64>,
}

impl PairMatrix {
    /// Builds the matrix from `f(i, j)` for `i < j`.
    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut p = vec![0.0; n * n];
        for j in 0..n {
            for i in 0..j {
                let v = f(i, j);
                p[i * n + j] = v;
                p[j * n + i] = v;
            }
        }
        Self { n, p }
    }

    pub fn from_set(set: &CorrespondenceSet, models: &SurfaceModels, clamp: f64) -> Self {
        let m = &set.members;
        Self::from_fn(m.len(), |i, j| {
            pair_same_surface(&m[i].measurement, &m[j].measurement, models)
                .clamp(clamp, 1.0 - clamp)
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.p[i * self.n + j]
    }
}

/// An assignment of members to surfaces.
///
/// `labels[i]` is the surface of member `i`; labels appear in first-use
/// order, so they always cover `0..k` for some `k`.
#[derive(Clone, Debug, PartialEq)]
pub struct Partition {
    pub labels: Vec<usize>,
    pub likelihood: f64,
}

/// Product over all member pairs of the same-surface probability when the
/// pair shares a label, and of its complement otherwise.
pub fn partition_likelihood(labels: &[usize], m: &PairMatrix) -> f64 {
    let mut l = 1.0;
    for j in 0..labels.len() {
        for i in 0..j {
            let p = m.get(i, j);
            l *= if labels[i] == labels[j] { p } else { 1.0 - p };
        }
    }
    l
}

/// All partitions with `band_ratio * likelihood > max likelihood`, in
/// depth-first discovery order.
///
/// Members are assigned in order to an existing surface or a new one. A
/// branch is cut when the likelihood of its decided pairs times the most
/// optimistic outcome of every undecided pair cannot reach the band of the
/// best partition found so far.
pub fn enumerate_partitions(m: &PairMatrix, band_ratio: f64) -> Vec<Partition> {
    let n = m.len();
    // optimistic[k]: best possible product over pairs whose later member is
    // at index k or beyond.
    let mut optimistic = vec![1.0; n + 1];
    for k in (0..n).rev() {
        let mut f = optimistic[k + 1];
        for i in 0..k {
            let p = m.get(i, k);
            f *= p.max(1.0 - p);
        }
        optimistic[k] = f;
    }

    struct Search<'a> {
        m: &'a PairMatrix,
        band: f64,
        optimistic: Vec<f64>,
        labels: Vec<usize>,
        best: f64,
        found: Vec<Partition>,
    }

    impl Search<'_> {
        const SLACK: f64 = 1.0 + 1e-9;

        fn visit(&mut self, k: usize, used: usize, decided: f64) {
            if self.band * decided * self.optimistic[k] * Self::SLACK < self.best {
                return;
            }
            if k == self.m.len() {
                let l = partition_likelihood(&self.labels, self.m);
                self.best = self.best.max(l);
                if self.band * l * Self::SLACK >= self.best {
                    self.found.push(Partition {
                        labels: self.labels.clone(),
                        likelihood: l,
                    });
                }
                return;
            }
            let mut choices: Vec<(usize, f64)> = (0..=used)
                .map(|c| {
                    let f: f64 = (0..k)
                        .map(|i| {
                            let p = self.m.get(i, k);
                            if self.labels[i] == c {
                                p
                            } else {
                                1.0 - p
                            }
                        })
                        .product();
                    (c, f)
                })
                .collect();
            choices.sort_by(|a, b| b.1.total_cmp(&a.1));
            for (c, f) in choices {
                self.labels.push(c);
                self.visit(k + 1, used.max(c + 1), decided * f);
                self.labels.pop();
            }
        }
    }

    let mut s = Search {
        m,
        band: band_ratio,
        optimistic,
        labels: Vec::with_capacity(n),
        best: 0.0,
        found: Vec::new(),
    };
    s.visit(0, 0, 1.0);
    let best = s.best;
    s.found.retain(|p| band_ratio * p.likelihood > best);
    s.found
}

/// The partition with the highest likelihood (first found on ties).
pub fn most_likely(partitions: &[Partition]) -> Option<&Partition> {
    partitions
        .iter()
        .fold(None, |acc: Option<&Partition>, p| match acc {
            Some(a) if a.likelihood >= p.likelihood => Some(a),
            _ => Some(p),
        })
}

/// Same-surface and occlusion evidence of a pixel under one partition:
/// member complements are averaged within each surface, and the pixel is
/// unaffected only if it is unaffected with respect to every surface.
pub fn aggregate_per_partition(set: &CorrespondenceSet, labels: &[usize]) -> (f64, f64) {
    let surfaces = labels.iter().copied().max().map_or(0, |m| m + 1);
    let mut not_s = vec![0.0; surfaces];
    let mut not_o = vec![0.0; surfaces];
    let mut count = vec![0usize; surfaces];
    for (member, &l) in set.members.iter().zip(labels) {
        not_s[l] += 1.0 - member.p_s;
        not_o[l] += 1.0 - member.p_o;
        count[l] += 1;
    }
    let mut prod_s = 1.0;
    let mut prod_o = 1.0;
    for l in 0..surfaces {
        prod_s *= not_s[l] / count[l] as f64;
        prod_o *= not_o[l] / count[l] as f64;
    }
    (1.0 - prod_s, 1.0 - prod_o)
}

/// Likelihood-weighted average of the per-partition evidence over the
/// partition band. An empty set carries no evidence, `(0, 0)`.
pub fn marginalize(
    set: &CorrespondenceSet,
    models: &SurfaceModels,
    cfg: &AggregationConfig,
) -> (f64, f64) {
    match set.len() {
        0 => (0.0, 0.0),
        1 => (set.members[0].p_s, set.members[0].p_o),
        _ => {
            let m = PairMatrix::from_set(set, models, cfg.probability_clamp);
            weighted_average(set, &enumerate_partitions(&m, cfg.band_ratio))
        }
    }
}

fn weighted_average(set: &CorrespondenceSet, partitions: &[Partition]) -> (f64, f64) {
    let total: f64 = partitions.iter().map(|p| p.likelihood).sum();
    let (mut s, mut o) = (0.0, 0.0);
    for p in partitions {
        let (ps, po) = aggregate_per_partition(set, &p.labels);
        s += p.likelihood * ps;
        o += p.likelihood * po;
    }
    (s / total, o / total)
}

/// Differencing of one source frame against one target frame.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameComparison {
    pub source: usize,
    pub target: usize,
    pub residuals: PairResiduals,
    pub probabilities: PairProbabilities,
}

/// Every source frame differenced against every target frame, with the
/// per-pixel evidence aggregated over targets.
#[derive(Clone, Debug, PartialEq)]
pub struct SetComparison {
    pub models: SurfaceModels,
    pub pairs: Vec<FrameComparison>,
    /// Aggregated same-surface and occlusion evidence, one entry per source
    /// frame.
    pub evidence: Vec<PairProbabilities>,
}

impl SetComparison {
    /// The comparisons of source frame `source`, in target order.
    pub fn pairs_of(&self, source: usize) -> impl Iterator<Item = &FrameComparison> {
        self.pairs.iter().filter(move |c| c.source == source)
    }
}

/// Compares each frame of `sources` against the frames of `targets`.
///
/// With `skip_same_index` the pair of a frame with the target of the same
/// index is skipped, which is how a set is compared against itself. The
/// noise models are fitted once on the residuals of all pairs.
pub fn compare_sets(
    sources: &[RgbdFrame],
    targets: &[RgbdFrame],
    skip_same_index: bool,
    diff: &DifferencingConfig,
    agg: &AggregationConfig,
    sie: &SieConfig,
) -> SetComparison {
    let index_pairs: Vec<(usize, usize)> = (0..sources.len())
        .flat_map(|s| (0..targets.len()).map(move |t| (s, t)))
        .filter(|(s, t)| !(skip_same_index && s == t))
        .collect();
    let residuals: Vec<PairResiduals> = index_pairs
        .iter()
        .map(|&(s, t)| pair_residuals(&sources[s], &targets[t]))
        .collect();
    let models = SurfaceModels::fit(&residuals, diff, sie);
    let pairs: Vec<FrameComparison> = index_pairs
        .into_iter()
        .zip(residuals)
        .map(|((source, target), residuals)| {
            let probabilities = pair_probabilities(&residuals, &models);
            FrameComparison {
                source,
                target,
                residuals,
                probabilities,
            }
        })
        .collect();
    let evidence = sources
        .iter()
        .enumerate()
        .map(|(s, frame)| {
            let views: Vec<TargetView> = pairs
                .iter()
                .filter(|c| c.source == s)
                .map(|c| TargetView {
                    index: c.target,
                    frame: &targets[c.target],
                    residuals: &c.residuals,
                    probabilities: &c.probabilities,
                })
                .collect();
            aggregate_frame(frame, &views, &models, agg)
        })
        .collect();
    SetComparison {
        models,
        pairs,
        evidence,
    }
}

/// Marginalized evidence for every pixel of `source`.
pub fn aggregate_frame(
    source: &RgbdFrame,
    targets: &[TargetView],
    models: &SurfaceModels,
    cfg: &AggregationConfig,
) -> PairProbabilities {
    let both = Grid::par_from_fn(source.width(), source.height(), |p| {
        marginalize(&gather(source, p, targets, cfg.max_members), models, cfg)
    });
    PairProbabilities {
        p_s: both.map(|v| v.0),
        p_o: both.map(|v| v.1),
    }
}
