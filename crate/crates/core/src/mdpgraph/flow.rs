//! Dinic's max-flow on integer capacities.

use std::collections::VecDeque;

#[derive(Debug, Clone)]
struct Arc {
    to: usize,
    cap: i64,
    rev: usize,
}

#[derive(Debug, Clone)]
pub struct FlowNetwork {
    adj: Vec<Vec<Arc>>,
    level: Vec<i32>,
    cursor: Vec<usize>,
}

impl FlowNetwork {
    pub fn new(n: usize) -> Self {
        FlowNetwork {
            adj: vec![Vec::new(); n],
            level: vec![0; n],
            cursor: vec![0; n],
        }
    }

    /// Adds a directed arc and returns its (node, slot) handle.
    pub fn add_arc(&mut self, from: usize, to: usize, cap: i64) -> (usize, usize) {
        let slot = self.adj[from].len();
        let back = self.adj[to].len() + usize::from(from == to);
        self.adj[from].push(Arc { to, cap, rev: back });
        self.adj[to].push(Arc {
            to: from,
            cap: 0,
            rev: slot,
        });
        (from, slot)
    }

    pub fn residual(&self, handle: (usize, usize)) -> i64 {
        self.adj[handle.0][handle.1].cap
    }

    fn bfs(&mut self, s: usize, t: usize) -> bool {
        self.level.iter_mut().for_each(|l| *l = -1);
        self.level[s] = 0;
        let mut queue = VecDeque::from([s]);
        while let Some(u) = queue.pop_front() {
            for a in &self.adj[u] {
                if a.cap > 0 && self.level[a.to] < 0 {
                    self.level[a.to] = self.level[u] + 1;
                    queue.push_back(a.to);
                }
            }
        }
        self.level[t] >= 0
    }

    // Iterative blocking-flow search; recursion depth would otherwise grow
    // with the longest augmenting path on large state graphs.
    fn augment(&mut self, s: usize, t: usize, limit: i64) -> i64 {
        let mut path: Vec<(usize, usize)> = Vec::new();
        let mut u = s;
        loop {
            if u == t {
                let pushed = path
                    .iter()
                    .map(|&(v, i)| self.adj[v][i].cap)
                    .fold(limit, i64::min);
                for &(v, i) in &path {
                    self.adj[v][i].cap -= pushed;
                    let Arc { to, rev, .. } = self.adj[v][i];
                    self.adj[to][rev].cap += pushed;
                }
                return pushed;
            }
            let mut advanced = false;
            while self.cursor[u] < self.adj[u].len() {
                let a = &self.adj[u][self.cursor[u]];
                if a.cap > 0 && self.level[a.to] == self.level[u] + 1 {
                    path.push((u, self.cursor[u]));
                    u = a.to;
                    advanced = true;
                    break;
                }
                self.cursor[u] += 1;
            }
            if !advanced {
                self.level[u] = -1;
                match path.pop() {
                    Some((prev, _)) => {
                        self.cursor[prev] += 1;
                        u = prev;
                    }
                    None => return 0,
                }
            }
        }
    }

    pub fn max_flow(&mut self, s: usize, t: usize) -> i64 {
        let mut flow = 0;
        while self.bfs(s, t) {
            self.cursor.iter_mut().for_each(|c| *c = 0);
            loop {
                let f = self.augment(s, t, i64::MAX);
                if f == 0 {
                    break;
                }
                flow += f;
            }
        }
        flow
    }

    /// Nodes reachable from `s` through arcs with residual capacity.
    pub fn residual_reachable(&self, s: usize) -> Vec<bool> {
        let mut seen = vec![false; self.adj.len()];
        seen[s] = true;
        let mut stack = vec![s];
        while let Some(u) = stack.pop() {
            for a in &self.adj[u] {
                if a.cap > 0 && !seen[a.to] {
                    seen[a.to] = true;
                    stack.push(a.to);
                }
            }
        }
        seen
    }
}
