//! Two independent maximum-flow engines over a shared residual
//! representation: FIFO push-relabel with periodic global relabeling for the
//! production path, and Edmonds-Karp (BFS augmenting paths) kept as a
//! cross-checking oracle.

use std::collections::VecDeque;

/// Residual capacity below this is treated as zero.
const RES_EPS: f64 = 1e-12;
/// Excess below this no longer makes a vertex active.
const ACTIVE_EPS: f64 = 1e-11;

/// Residual graph with paired forward/backward edges (`i ^ 1`).
pub(crate) struct Residual {
    n: usize,
    adj: Vec<Vec<u32>>,
    to: Vec<u32>,
    cap: Vec<f64>,
    orig: Vec<f64>,
}

impl Residual {
    pub fn new(n: usize) -> Self {
        Residual { n, adj: vec![Vec::new(); n], to: Vec::new(), cap: Vec::new(), orig: Vec::new() }
    }

    /// Adds a directed edge and its zero-capacity reverse; returns the
    /// forward edge index.
    pub fn add_edge(&mut self, u: usize, v: usize, capacity: f64) -> usize {
        debug_assert!(u < self.n && v < self.n && capacity >= 0.0);
        let id = self.to.len();
        self.to.push(v as u32);
        self.cap.push(capacity);
        self.orig.push(capacity);
        self.adj[u].push(id as u32);
        self.to.push(u as u32);
        self.cap.push(0.0);
        self.orig.push(0.0);
        self.adj[v].push(id as u32 + 1);
        id
    }

    /// Flow carried by forward edge `id`, clamped against arithmetic dust.
    pub fn flow(&self, id: usize) -> f64 {
        (self.orig[id] - self.cap[id]).clamp(0.0, self.orig[id])
    }

    /// Exact residual BFS heights: distance to `t` where `t` is reachable,
    /// `n` + distance to `s` otherwise (so trapped excess drains back).
    fn bfs_heights(&self, s: usize, t: usize, height: &mut [usize]) {
        let n = self.n;
        for h in height.iter_mut() {
            *h = 2 * n;
        }
        let mut bfs = VecDeque::new();
        height[t] = 0;
        bfs.push_back(t);
        while let Some(u) = bfs.pop_front() {
            for &e in &self.adj[u] {
                // Residual edge (v -> u) exists iff the paired edge has capacity.
                let v = self.to[e as usize] as usize;
                if v != s && height[v] == 2 * n && self.cap[(e ^ 1) as usize] > RES_EPS {
                    height[v] = height[u] + 1;
                    bfs.push_back(v);
                }
            }
        }
        height[s] = n;
        bfs.push_back(s);
        while let Some(u) = bfs.pop_front() {
            for &e in &self.adj[u] {
                let v = self.to[e as usize] as usize;
                if v != t && height[v] == 2 * n && self.cap[(e ^ 1) as usize] > RES_EPS {
                    height[v] = height[u] + 1;
                    bfs.push_back(v);
                }
            }
        }
    }

    pub fn max_flow_push_relabel(&mut self, s: usize, t: usize) -> f64 {
        let n = self.n;
        if s == t {
            return 0.0;
        }
        let mut height = vec![0usize; n];
        let mut excess = vec![0f64; n];
        let mut cur = vec![0usize; n];
        let mut queue: VecDeque<usize> = VecDeque::new();
        let mut in_queue = vec![false; n];
        let mut relabels = 0usize;

        self.bfs_heights(s, t, &mut height);

        macro_rules! activate {
            ($v:expr) => {
                if $v != s && $v != t && !in_queue[$v] && excess[$v] > ACTIVE_EPS {
                    in_queue[$v] = true;
                    queue.push_back($v);
                }
            };
        }

        for i in 0..self.adj[s].len() {
            let e = self.adj[s][i] as usize;
            let delta = self.cap[e];
            if delta > RES_EPS {
                let v = self.to[e] as usize;
                self.cap[e] = 0.0;
                self.cap[e ^ 1] += delta;
                excess[v] += delta;
                activate!(v);
            }
        }

        while let Some(u) = queue.pop_front() {
            in_queue[u] = false;
            loop {
                if excess[u] <= ACTIVE_EPS {
                    break;
                }
                if cur[u] == self.adj[u].len() {
                    let mut best = usize::MAX;
                    for &e in &self.adj[u] {
                        if self.cap[e as usize] > RES_EPS {
                            best = best.min(height[self.to[e as usize] as usize]);
                        }
                    }
                    if best == usize::MAX {
                        break; // nowhere to send the dust
                    }
                    height[u] = best + 1;
                    cur[u] = 0;
                    relabels += 1;
                    if relabels >= n {
                        relabels = 0;
                        self.bfs_heights(s, t, &mut height);
                        cur.iter_mut().for_each(|c| *c = 0);
                    }
                    if height[u] >= 2 * n {
                        break;
                    }
                    continue;
                }
                let e = self.adj[u][cur[u]] as usize;
                let v = self.to[e] as usize;
                if self.cap[e] > RES_EPS && height[u] == height[v] + 1 {
                    let delta = excess[u].min(self.cap[e]);
                    self.cap[e] -= delta;
                    self.cap[e ^ 1] += delta;
                    excess[u] -= delta;
                    excess[v] += delta;
                    activate!(v);
                } else {
                    cur[u] += 1;
                }
            }
        }
        excess[t]
    }

    pub fn max_flow_edmonds_karp(&mut self, s: usize, t: usize) -> f64 {
        let mut total = 0.0;
        if s == t {
            return total;
        }
        let mut parent_edge = vec![u32::MAX; self.n];
        loop {
            parent_edge.iter_mut().for_each(|p| *p = u32::MAX);
            let mut bfs = VecDeque::new();
            bfs.push_back(s);
            'search: while let Some(u) = bfs.pop_front() {
                for &e in &self.adj[u] {
                    let v = self.to[e as usize] as usize;
                    if v != s && parent_edge[v] == u32::MAX && self.cap[e as usize] > RES_EPS {
                        parent_edge[v] = e;
                        if v == t {
                            break 'search;
                        }
                        bfs.push_back(v);
                    }
                }
            }
            if parent_edge[t] == u32::MAX {
                return total;
            }
            let mut bottleneck = f64::INFINITY;
            let mut v = t;
            while v != s {
                let e = parent_edge[v] as usize;
                bottleneck = bottleneck.min(self.cap[e]);
                v = self.to[e ^ 1] as usize;
            }
            let mut v = t;
            while v != s {
                let e = parent_edge[v] as usize;
                self.cap[e] -= bottleneck;
                self.cap[e ^ 1] += bottleneck;
                v = self.to[e ^ 1] as usize;
            }
            total += bottleneck;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diamond() -> Residual {
        // s=0, a=1, b=2, t=3
        let mut g = Residual::new(4);
        g.add_edge(0, 1, 3.0);
        g.add_edge(0, 2, 2.0);
        g.add_edge(1, 2, 1.0);
        g.add_edge(1, 3, 2.0);
        g.add_edge(2, 3, 3.0);
        g
    }

    #[test]
    fn both_engines_agree_on_diamond() {
        let v1 = diamond().max_flow_push_relabel(0, 3);
        let v2 = diamond().max_flow_edmonds_karp(0, 3);
        assert!((v1 - 5.0).abs() < 1e-9, "push-relabel got {v1}");
        assert!((v2 - 5.0).abs() < 1e-9, "edmonds-karp got {v2}");
    }

    #[test]
    fn disconnected_sink_gives_zero() {
        let mut g = Residual::new(3);
        g.add_edge(0, 1, 5.0);
        assert_eq!(g.max_flow_push_relabel(0, 2), 0.0);
        let mut g = Residual::new(3);
        g.add_edge(0, 1, 5.0);
        assert_eq!(g.max_flow_edmonds_karp(0, 2), 0.0);
    }

    #[test]
    fn fractional_capacities() {
        let mut g = Residual::new(4);
        g.add_edge(0, 1, 0.5);
        g.add_edge(0, 2, 0.25);
        g.add_edge(1, 3, 0.7);
        g.add_edge(2, 3, 0.7);
        let v = g.max_flow_push_relabel(0, 3);
        assert!((v - 0.75).abs() < 1e-9);
    }

    #[test]
    fn push_relabel_returns_a_conserving_flow() {
        let mut g = diamond();
        g.max_flow_push_relabel(0, 3);
        // Net flow at interior vertices a and b must vanish.
        for v in [1usize, 2] {
            let mut net = 0.0;
            for id in (0..g.to.len()).step_by(2) {
                let f = g.flow(id);
                if g.to[id] as usize == v {
                    net += f;
                }
                if g.to[id ^ 1] as usize == v {
                    net -= f;
                }
            }
            assert!(net.abs() < 1e-9, "vertex {v} imbalance {net}");
        }
    }
}
