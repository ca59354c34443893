//! Minimum s-t cut by the Boykov-Kolmogorov augmenting-path algorithm.
//!
//! Two search trees grow from the source and the sink and are reused
//! between augmentations, which makes the algorithm fast on grid-like graphs
//! with short augmenting paths.

use std::collections::VecDeque;

const NONE: u32 = u32::MAX;
const TERMINAL: u32 = u32::MAX - 1;
const ORPHAN: u32 = u32::MAX - 2;

/// A flow network over `n` nodes plus implicit source and sink terminals.
#[derive(Clone, Debug)]
pub struct Graph {
    first: Vec<u32>,
    // Arc storage; arc `a ^ 1` is the reverse of arc `a`.
    head: Vec<u32>,
    next: Vec<u32>,
    r_cap: Vec<f64>,
    // Positive: residual from the source; negative: residual to the sink.
    tr_cap: Vec<f64>,
    parent: Vec<u32>,
    is_sink: Vec<bool>,
    ts: Vec<u64>,
    dist: Vec<u32>,
    queued: Vec<bool>,
    flow: f64,
}

/// Which side of the minimum cut a node ends up on.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Segment {
    Source,
    Sink,
}

impl Graph {
    pub fn new(nodes: usize) -> Self {
        Self::with_capacity(nodes, 0)
    }

    pub fn with_capacity(nodes: usize, edges: usize) -> Self {
        assert!(nodes < ORPHAN as usize, "too many nodes");
        Self {
            first: vec![NONE; nodes],
            head: Vec::with_capacity(2 * edges),
            next: Vec::with_capacity(2 * edges),
            r_cap: Vec::with_capacity(2 * edges),
            tr_cap: vec![0.0; nodes],
            parent: vec![NONE; nodes],
            is_sink: vec![false; nodes],
            ts: vec![0; nodes],
            dist: vec![0; nodes],
            queued: vec![false; nodes],
            flow: 0.0,
        }
    }

    pub fn node_count(&self) -> usize {
        self.first.len()
    }

    /// Adds an edge `i -> j` with capacity `cap` and `j -> i` with `rev_cap`.
    pub fn add_edge(&mut self, i: usize, j: usize, cap: f64, rev_cap: f64) {
        assert!(i != j, "self loop");
        assert!(cap >= 0.0 && rev_cap >= 0.0, "negative capacity");
        let a = self.head.len() as u32;
        self.head.push(j as u32);
        self.next.push(self.first[i]);
        self.r_cap.push(cap);
        self.first[i] = a;
        self.head.push(i as u32);
        self.next.push(self.first[j]);
        self.r_cap.push(rev_cap);
        self.first[j] = a + 1;
    }

    /// Adds capacity from the source to `i` and from `i` to the sink.
    pub fn add_terminal_weights(&mut self, i: usize, source_cap: f64, sink_cap: f64) {
        assert!(source_cap >= 0.0 && sink_cap >= 0.0, "negative capacity");
        let delta = self.tr_cap[i];
        let (mut s, mut t) = (source_cap, sink_cap);
        if delta > 0.0 {
            s += delta;
        } else {
            t -= delta;
        }
        self.flow += s.min(t);
        self.tr_cap[i] = s - t;
    }

    fn arcs(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        let mut a = self.first[i];
        std::iter::from_fn(move || {
            if a == NONE {
                None
            } else {
                let cur = a as usize;
                a = self.next[cur];
                Some(cur)
            }
        })
    }

    /// Computes the maximum flow; afterwards [`Graph::segment`] reports the
    /// minimum cut.
    pub fn max_flow(&mut self) -> f64 {
        let n = self.node_count();
        let mut active: VecDeque<usize> = VecDeque::new();
        let mut orphans: VecDeque<usize> = VecDeque::new();
        for i in 0..n {
            self.queued[i] = false;
            self.ts[i] = 0;
            if self.tr_cap[i] != 0.0 {
                self.is_sink[i] = self.tr_cap[i] < 0.0;
                self.parent[i] = TERMINAL;
                self.dist[i] = 1;
                self.queued[i] = true;
                active.push_back(i);
            } else {
                self.parent[i] = NONE;
            }
        }
        let mut time: u64 = 0;
        let mut current: Option<usize> = None;

        loop {
            let i = match current.filter(|&i| self.parent[i] != NONE) {
                Some(i) => i,
                None => {
                    let mut next = None;
                    while let Some(i) = active.pop_front() {
                        self.queued[i] = false;
                        if self.parent[i] != NONE {
                            next = Some(i);
                            break;
                        }
                    }
                    match next {
                        Some(i) => i,
                        None => break,
                    }
                }
            };

            let mut meeting: Option<usize> = None;
            if !self.is_sink[i] {
                let mut a = self.first[i];
                while a != NONE {
                    let au = a as usize;
                    if self.r_cap[au] > 0.0 {
                        let j = self.head[au] as usize;
                        if self.parent[j] == NONE {
                            self.is_sink[j] = false;
                            self.parent[j] = (au ^ 1) as u32;
                            self.ts[j] = self.ts[i];
                            self.dist[j] = self.dist[i] + 1;
                            self.activate(j, &mut active);
                        } else if self.is_sink[j] {
                            meeting = Some(au);
                            break;
                        } else if self.ts[j] <= self.ts[i] && self.dist[j] > self.dist[i] {
                            self.parent[j] = (au ^ 1) as u32;
                            self.ts[j] = self.ts[i];
                            self.dist[j] = self.dist[i] + 1;
                        }
                    }
                    a = self.next[au];
                }
            } else {
                let mut a = self.first[i];
                while a != NONE {
                    let au = a as usize;
                    if self.r_cap[au ^ 1] > 0.0 {
                        let j = self.head[au] as usize;
                        if self.parent[j] == NONE {
                            self.is_sink[j] = true;
                            self.parent[j] = (au ^ 1) as u32;
                            self.ts[j] = self.ts[i];
                            self.dist[j] = self.dist[i] + 1;
                            self.activate(j, &mut active);
                        } else if !self.is_sink[j] {
                            meeting = Some(au ^ 1);
                            break;
                        } else if self.ts[j] <= self.ts[i] && self.dist[j] > self.dist[i] {
                            self.parent[j] = (au ^ 1) as u32;
                            self.ts[j] = self.ts[i];
                            self.dist[j] = self.dist[i] + 1;
                        }
                    }
                    a = self.next[au];
                }
            }

            time += 1;
            match meeting {
                Some(middle) => {
                    current = Some(i);
                    self.augment(middle, &mut orphans);
                    while let Some(o) = orphans.pop_front() {
                        if self.is_sink[o] {
                            self.adopt_sink_orphan(o, time, &mut active, &mut orphans);
                        } else {
                            self.adopt_source_orphan(o, time, &mut active, &mut orphans);
                        }
                    }
                }
                None => current = None,
            }
        }
        self.flow
    }

    fn activate(&mut self, i: usize, active: &mut VecDeque<usize>) {
        if !self.queued[i] {
            self.queued[i] = true;
            active.push_back(i);
        }
    }

    /// Pushes the bottleneck along source-tree path, `middle`, sink-tree path.
    fn augment(&mut self, middle: usize, orphans: &mut VecDeque<usize>) {
        let tail = self.head[middle ^ 1] as usize;
        let tip = self.head[middle] as usize;

        let mut b = self.r_cap[middle];
        let mut i = tail;
        loop {
            let a = self.parent[i];
            if a == TERMINAL {
                break;
            }
            b = b.min(self.r_cap[a as usize ^ 1]);
            i = self.head[a as usize] as usize;
        }
        b = b.min(self.tr_cap[i]);
        let mut i = tip;
        loop {
            let a = self.parent[i];
            if a == TERMINAL {
                break;
            }
            b = b.min(self.r_cap[a as usize]);
            i = self.head[a as usize] as usize;
        }
        b = b.min(-self.tr_cap[i]);

        self.r_cap[middle ^ 1] += b;
        self.r_cap[middle] -= b;
        let mut i = tail;
        loop {
            let a = self.parent[i];
            if a == TERMINAL {
                break;
            }
            let a = a as usize;
            self.r_cap[a] += b;
            self.r_cap[a ^ 1] -= b;
            if self.r_cap[a ^ 1] <= 0.0 {
                self.r_cap[a ^ 1] = 0.0;
                self.parent[i] = ORPHAN;
                orphans.push_front(i);
            }
            i = self.head[a] as usize;
        }
        self.tr_cap[i] -= b;
        if self.tr_cap[i] <= 0.0 {
            self.tr_cap[i] = 0.0;
            self.parent[i] = ORPHAN;
            orphans.push_front(i);
        }
        let mut i = tip;
        loop {
            let a = self.parent[i];
            if a == TERMINAL {
                break;
            }
            let a = a as usize;
            self.r_cap[a ^ 1] += b;
            self.r_cap[a] -= b;
            if self.r_cap[a] <= 0.0 {
                self.r_cap[a] = 0.0;
                self.parent[i] = ORPHAN;
                orphans.push_front(i);
            }
            i = self.head[a] as usize;
        }
        self.tr_cap[i] += b;
        if self.tr_cap[i] >= 0.0 {
            self.tr_cap[i] = 0.0;
            self.parent[i] = ORPHAN;
            orphans.push_front(i);
        }
        self.flow += b;
    }

    /// Distance from `j` to its tree's terminal, or `None` when the path
    /// runs into an orphan. Nodes already verified at `time` short-cut.
    fn origin_distance(&mut self, mut j: usize, time: u64) -> Option<u32> {
        let mut d: u32 = 0;
        loop {
            if self.ts[j] == time {
                return Some(d + self.dist[j]);
            }
            let a = self.parent[j];
            d += 1;
            if a == TERMINAL {
                self.ts[j] = time;
                self.dist[j] = 1;
                return Some(d);
            }
            if a == ORPHAN {
                return None;
            }
            j = self.head[a as usize] as usize;
        }
    }

    fn mark_path(&mut self, mut j: usize, mut d: u32, time: u64) {
        while self.ts[j] != time {
            self.ts[j] = time;
            self.dist[j] = d;
            d -= 1;
            j = self.head[self.parent[j] as usize] as usize;
        }
    }

    fn adopt_source_orphan(
        &mut self,
        i: usize,
        time: u64,
        active: &mut VecDeque<usize>,
        orphans: &mut VecDeque<usize>,
    ) {
        let mut best: Option<(usize, u32)> = None;
        let arcs: Vec<usize> = self.arcs(i).collect();
        for &a0 in &arcs {
            if self.r_cap[a0 ^ 1] > 0.0 {
                let j = self.head[a0] as usize;
                if !self.is_sink[j] && self.parent[j] != NONE {
                    if let Some(d) = self.origin_distance(j, time) {
                        if best.is_none_or(|(_, bd)| d < bd) {
                            best = Some((a0, d));
                        }
                        self.mark_path(j, d, time);
                    }
                }
            }
        }
        if let Some((a0, d)) = best {
            self.parent[i] = a0 as u32;
            self.ts[i] = time;
            self.dist[i] = d + 1;
            return;
        }
        for &a0 in &arcs {
            let j = self.head[a0] as usize;
            let pj = self.parent[j];
            if !self.is_sink[j] && pj != NONE {
                if self.r_cap[a0 ^ 1] > 0.0 {
                    self.activate(j, active);
                }
                if pj != TERMINAL && pj != ORPHAN && self.head[pj as usize] as usize == i {
                    self.parent[j] = ORPHAN;
                    orphans.push_back(j);
                }
            }
        }
        self.parent[i] = NONE;
    }

    fn adopt_sink_orphan(
        &mut self,
        i: usize,
        time: u64,
        active: &mut VecDeque<usize>,
        orphans: &mut VecDeque<usize>,
    ) {
        let mut best: Option<(usize, u32)> = None;
        let arcs: Vec<usize> = self.arcs(i).collect();
        for &a0 in &arcs {
            if self.r_cap[a0] > 0.0 {
                let j = self.head[a0] as usize;
                if self.is_sink[j] && self.parent[j] != NONE {
                    if let Some(d) = self.origin_distance(j, time) {
                        if best.is_none_or(|(_, bd)| d < bd) {
                            best = Some((a0, d));
                        }
                        self.mark_path(j, d, time);
                    }
                }
            }
        }
        if let Some((a0, d)) = best {
            self.parent[i] = a0 as u32;
            self.ts[i] = time;
            self.dist[i] = d + 1;
            return;
        }
        for &a0 in &arcs {
            let j = self.head[a0] as usize;
            let pj = self.parent[j];
            if self.is_sink[j] && pj != NONE {
                if self.r_cap[a0] > 0.0 {
                    self.activate(j, active);
                }
                if pj != TERMINAL && pj != ORPHAN && self.head[pj as usize] as usize == i {
                    self.parent[j] = ORPHAN;
                    orphans.push_back(j);
                }
            }
        }
        self.parent[i] = NONE;
    }

    /// Side of the minimum cut of node `i` after [`Graph::max_flow`]. Nodes
    /// that neither terminal can reach go to the sink side.
    pub fn segment(&self, i: usize) -> Segment {
        if self.parent[i] != NONE && !self.is_sink[i] {
            Segment::Source
        } else {
            Segment::Sink
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Dense network with node 0 = source, 1 = sink.
    struct Dense {
        cap: Vec<Vec<f64>>,
    }

    impl Dense {
        fn edmonds_karp(&self) -> f64 {
            let n = self.cap.len();
            let mut r = self.cap.clone();
            let mut flow = 0.0;
            loop {
                let mut prev = vec![usize::MAX; n];
                prev[0] = 0;
                let mut q = VecDeque::from([0usize]);
                while let Some(u) = q.pop_front() {
                    for v in 0..n {
                        if prev[v] == usize::MAX && r[u][v] > 1e-12 {
                            prev[v] = u;
                            q.push_back(v);
                        }
                    }
                }
                if prev[1] == usize::MAX {
                    return flow;
                }
                let mut b = f64::INFINITY;
                let mut v = 1;
                while v != 0 {
                    b = b.min(r[prev[v]][v]);
                    v = prev[v];
                }
                let mut v = 1;
                while v != 0 {
                    r[prev[v]][v] -= b;
                    r[v][prev[v]] += b;
                    v = prev[v];
                }
                flow += b;
            }
        }

        fn cut_value(&self, source_side: &[bool]) -> f64 {
            let n = self.cap.len();
            let mut c = 0.0;
            for u in 0..n {
                for v in 0..n {
                    if source_side[u] && !source_side[v] {
                        c += self.cap[u][v];
                    }
                }
            }
            c
        }
    }

    fn random_instance(rng: &mut ChaCha8Rng, nodes: usize, density: f64) -> (Graph, Dense) {
        let mut g = Graph::new(nodes);
        let mut d = Dense {
            cap: vec![vec![0.0; nodes + 2]; nodes + 2],
        };
        for i in 0..nodes {
            let s = if rng.random::<f64>() < 0.5 {
                rng.random_range(0.0..10.0)
            } else {
                0.0
            };
            let t = if rng.random::<f64>() < 0.5 {
                rng.random_range(0.0..10.0)
            } else {
                0.0
            };
            g.add_terminal_weights(i, s, t);
            d.cap[0][i + 2] += s;
            d.cap[i + 2][1] += t;
        }
        for i in 0..nodes {
            for j in i + 1..nodes {
                if rng.random::<f64>() < density {
                    let c = rng.random_range(0.0..5.0);
                    let rc = if rng.random::<bool>() {
                        c
                    } else {
                        rng.random_range(0.0..5.0)
                    };
                    g.add_edge(i, j, c, rc);
                    d.cap[i + 2][j + 2] += c;
                    d.cap[j + 2][i + 2] += rc;
                }
            }
        }
        (g, d)
    }

    #[test]
    fn single_node() {
        let mut g = Graph::new(1);
        g.add_terminal_weights(0, 3.0, 1.0);
        assert_eq!(g.max_flow(), 1.0);
        assert_eq!(g.segment(0), Segment::Source);
        let mut g = Graph::new(1);
        g.add_terminal_weights(0, 1.0, 3.0);
        assert_eq!(g.max_flow(), 1.0);
        assert_eq!(g.segment(0), Segment::Sink);
    }

    #[test]
    fn chain_bottleneck() {
        let mut g = Graph::new(3);
        g.add_terminal_weights(0, 5.0, 0.0);
        g.add_edge(0, 1, 2.0, 0.0);
        g.add_edge(1, 2, 4.0, 0.0);
        g.add_terminal_weights(2, 0.0, 5.0);
        assert_eq!(g.max_flow(), 2.0);
        assert_eq!(g.segment(0), Segment::Source);
        assert_eq!(g.segment(1), Segment::Sink);
    }

    #[test]
    fn matches_edmonds_karp_on_random_graphs() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for round in 0..300 {
            let nodes = rng.random_range(1..25);
            let density = rng.random_range(0.05..0.8);
            let (mut g, d) = random_instance(&mut rng, nodes, density);
            let want = d.edmonds_karp();
            let got = g.max_flow();
            assert!(
                (got - want).abs() < 1e-9 * want.max(1.0),
                "round {round}: {got} vs {want}"
            );
            let mut side = vec![false; nodes + 2];
            side[0] = true;
            for i in 0..nodes {
                side[i + 2] = g.segment(i) == Segment::Source;
            }
            assert!(
                (d.cut_value(&side) - want).abs() < 1e-9 * want.max(1.0),
                "round {round}: cut"
            );
        }
    }

    #[test]
    fn grid_graph() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let (w, h) = (30, 20);
        let n = w * h;
        let mut g = Graph::new(n);
        let mut d = Dense {
            cap: vec![vec![0.0; n + 2]; n + 2],
        };
        for i in 0..n {
            let s = rng.random_range(0.0..3.0);
            let t = rng.random_range(0.0..3.0);
            g.add_terminal_weights(i, s, t);
            d.cap[0][i + 2] += s;
            d.cap[i + 2][1] += t;
            let (x, y) = (i % w, i / w);
            for j in [(x + 1 < w).then(|| i + 1), (y + 1 < h).then(|| i + w)]
                .into_iter()
                .flatten()
            {
                let c = rng.random_range(0.0..2.0);
                g.add_edge(i, j, c, c);
                d.cap[i + 2][j + 2] += c;
                d.cap[j + 2][i + 2] += c;
            }
        }
        let want = d.edmonds_karp();
        assert!((g.max_flow() - want).abs() < 1e-9 * want);
    }

    proptest! {
        #[test]
        fn flow_equals_cut(seed in 0u64..100_000, nodes in 1usize..12) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (mut g, d) = random_instance(&mut rng, nodes, 0.4);
            let f = g.max_flow();
            let mut side = vec![false; nodes + 2];
            side[0] = true;
            for i in 0..nodes {
                side[i + 2] = g.segment(i) == Segment::Source;
            }
            prop_assert!((d.cut_value(&side) - f).abs() < 1e-9 * f.max(1.0));
        }
    }
}
