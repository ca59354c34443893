//! Grouping of object pixels into segments.
//!
//! Object pixels are joined with their 4-neighbors when the edge model says
//! they more likely than not share a surface, and with pixels of other
//! frames when the cross-frame differencing says so. Components of this
//! relation are the segments.

use serde::Deserialize;

use crate::aggregation::SetComparison;
use crate::edges::EdgeMaps;
use crate::grid::Pixel;
use crate::inference::{FramePixel, Labeling};

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusterConfig {
    /// Neighbors connect when their same-surface probability exceeds this.
    pub in_image_threshold: f64,
    /// Pixels of different frames connect when their same-surface
    /// probability exceeds this.
    pub cross_frame_threshold: f64,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        Self {
            in_image_threshold: 0.5,
            cross_frame_threshold: 0.5,
        }
    }
}

/// Disjoint-set forest with path halving and union by size.
#[derive(Clone, Debug)]
pub struct UnionFind {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            size: vec![1; n],
        }
    }

    pub fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    pub fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        let (big, small) = if self.size[ra] >= self.size[rb] {
            (ra, rb)
        } else {
            (rb, ra)
        };
        self.parent[small] = big;
        self.size[big] += self.size[small];
    }
}

/// A connected group of object pixels, possibly spanning frames.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Segment {
    /// Positive id; ids follow the scan order of each segment's first pixel.
    pub id: u32,
    /// Members in scan order: frame, then row, then column.
    pub members: Vec<FramePixel>,
}

/// Pixel pairs of different frames whose same-surface probability exceeds
/// `threshold`.
pub fn cross_frame_links(within: &SetComparison, threshold: f64) -> Vec<(FramePixel, FramePixel)> {
    let mut links = Vec::new();
    for c in &within.pairs {
        for (i, t) in c.residuals.target.as_slice().iter().enumerate() {
            if let Some(t) = t {
                if c.probabilities.p_s.as_slice()[i] > threshold {
                    links.push((
                        FramePixel {
                            frame: c.source,
                            pixel: c.residuals.target.pixel_of(i),
                        },
                        FramePixel {
                            frame: c.target,
                            pixel: *t,
                        },
                    ));
                }
            }
        }
    }
    links
}

/// Connected components of the object pixels of `labeling`.
pub fn cluster(
    labeling: &Labeling,
    edges: &[EdgeMaps],
    links: &[(FramePixel, FramePixel)],
    cfg: &ClusterConfig,
) -> Vec<Segment> {
    let mut offsets = Vec::with_capacity(labeling.frames.len());
    let mut total = 0;
    for f in &labeling.frames {
        offsets.push(total);
        total += f.len();
    }
    let node = |fp: FramePixel| offsets[fp.frame] + labeling.frames[fp.frame].index_of(fp.pixel);
    let mut uf = UnionFind::new(total);

    for (f, labels) in labeling.frames.iter().enumerate() {
        let e = &edges[f];
        let (w, h) = (labels.width(), labels.height());
        for y in 0..h {
            for x in 0..w {
                let p = Pixel::new(x, y);
                if !labels[p] {
                    continue;
                }
                let here = offsets[f] + labels.index_of(p);
                if x + 1 < w
                    && labels[Pixel::new(x + 1, y)]
                    && e.p_same_h[p] > cfg.in_image_threshold
                {
                    uf.union(here, here + 1);
                }
                if y + 1 < h
                    && labels[Pixel::new(x, y + 1)]
                    && e.p_same_v[p] > cfg.in_image_threshold
                {
                    uf.union(here, here + w);
                }
            }
        }
    }
    for &(a, b) in links {
        if labeling.get(a) && labeling.get(b) {
            uf.union(node(a), node(b));
        }
    }

    let mut id_of_root: Vec<u32> = vec![0; total];
    let mut segments: Vec<Segment> = Vec::new();
    for (f, labels) in labeling.frames.iter().enumerate() {
        for (i, &is_obj) in labels.as_slice().iter().enumerate() {
            if !is_obj {
                continue;
            }
            let root = uf.find(offsets[f] + i);
            if id_of_root[root] == 0 {
                segments.push(Segment {
                    id: segments.len() as u32 + 1,
                    members: Vec::new(),
                });
                id_of_root[root] = segments.len() as u32;
            }
            segments[id_of_root[root] as usize - 1]
                .members
                .push(FramePixel {
                    frame: f,
                    pixel: labels.pixel_of(i),
                });
        }
    }
    segments
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use proptest::prelude::*;
    use std::collections::HashSet;

    fn labels(rows: &[&str]) -> Grid<bool> {
        let w = rows[0].len();
        Grid::from_fn(w, rows.len(), |p| rows[p.y].as_bytes()[p.x] == b'#')
    }

    #[test]
    fn union_find_basics() {
        let mut uf = UnionFind::new(5);
        uf.union(0, 1);
        uf.union(3, 4);
        assert_eq!(uf.find(0), uf.find(1));
        assert_ne!(uf.find(1), uf.find(3));
        uf.union(1, 4);
        assert_eq!(uf.find(0), uf.find(3));
        assert_ne!(uf.find(2), uf.find(0));
    }

    #[test]
    fn empty_labeling_has_no_segments() {
        let l = Labeling {
            frames: vec![Grid::filled(4, 4, false)],
        };
        assert!(cluster(
            &l,
            &[EdgeMaps::uniform(4, 4)],
            &[],
            &ClusterConfig::default()
        )
        .is_empty());
    }

    #[test]
    fn blobs_split_by_depth_edge() {
        let l = Labeling {
            frames: vec![labels(&["######", "######"])],
        };
        let mut e = EdgeMaps::uniform(6, 2);
        for y in 0..2 {
            e.p_same_h[Pixel::new(2, y)] = 0.1;
        }
        let s = cluster(&l, &[e], &[], &ClusterConfig::default());
        assert_eq!(s.len(), 2);
        assert_eq!(s[0].id, 1);
        assert_eq!(s[0].members.len(), 6);
        assert!(s[0].members.iter().all(|m| m.pixel.x <= 2));
        assert_eq!(s[1].id, 2);
    }

    #[test]
    fn cross_frame_links_join_segments() {
        let l = Labeling {
            frames: vec![labels(&["##..", "...."]), labels(&["....", ".##."])],
        };
        let e = vec![EdgeMaps::uniform(4, 2), EdgeMaps::uniform(4, 2)];
        let fp = |frame, x, y| FramePixel {
            frame,
            pixel: Pixel::new(x, y),
        };
        assert_eq!(cluster(&l, &e, &[], &ClusterConfig::default()).len(), 2);
        let linked = cluster(
            &l,
            &e,
            &[(fp(0, 1, 0), fp(1, 1, 1))],
            &ClusterConfig::default(),
        );
        assert_eq!(linked.len(), 1);
        assert_eq!(linked[0].members.len(), 4);
        // Links to background pixels do not join anything.
        let bg = cluster(
            &l,
            &e,
            &[(fp(0, 1, 0), fp(1, 0, 0))],
            &ClusterConfig::default(),
        );
        assert_eq!(bg.len(), 2);
    }

    proptest! {
        #[test]
        fn segments_partition_object_pixels(
            bits in prop::collection::vec(any::<bool>(), 48),
            probs in prop::collection::vec(0.0..1.0f64, 48),
        ) {
            let l = Labeling { frames: vec![Grid::from_vec(8, 6, bits).unwrap()] };
            let mut e = EdgeMaps::uniform(8, 6);
            e.p_same_h.as_mut_slice().copy_from_slice(&probs);
            e.p_same_v.as_mut_slice().iter_mut().zip(probs.iter().rev()).for_each(|(a, b)| *a = *b);
            let segs = cluster(&l, std::slice::from_ref(&e), &[], &ClusterConfig::default());
            let mut seen = HashSet::new();
            for (k, s) in segs.iter().enumerate() {
                prop_assert_eq!(s.id as usize, k + 1);
                for m in &s.members {
                    prop_assert!(l.get(*m));
                    prop_assert!(seen.insert(*m));
                }
                // Every member is reachable from the first through connecting pairs.
                let set: HashSet<Pixel> = s.members.iter().map(|m| m.pixel).collect();
                let mut reached = HashSet::from([s.members[0].pixel]);
                let mut stack = vec![s.members[0].pixel];
                while let Some(p) = stack.pop() {
                    let mut nbrs = vec![];
                    if p.x + 1 < 8 { nbrs.push(Pixel::new(p.x + 1, p.y)); }
                    if p.y + 1 < 6 { nbrs.push(Pixel::new(p.x, p.y + 1)); }
                    if p.x > 0 { nbrs.push(Pixel::new(p.x - 1, p.y)); }
                    if p.y > 0 { nbrs.push(Pixel::new(p.x, p.y - 1)); }
                    for q in nbrs {
                        if set.contains(&q) && e.p_same(p, q).unwrap() > 0.5 && reached.insert(q) {
                            stack.push(q);
                        }
                    }
                }
                prop_assert_eq!(reached.len(), set.len());
            }
            prop_assert_eq!(seen.len(), l.object_count());
        }
    }
}
