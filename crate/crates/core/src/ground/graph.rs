use crate::embed::distance;
use crate::real::Real;

/// Pairwise feature distances and the thresholded adjacency.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceGraph<T> {
    pub n: usize,
    /// `n x n` row-major Euclidean distances.
    pub affinity: Vec<T>,
    /// `n x n` row-major; `edges[i][j]` iff `i != j` and distance `< epsilon`.
    pub edges: Vec<bool>,
    pub epsilon: T,
}

impl<T: Real> InstanceGraph<T> {
    pub fn distance(&self, i: usize, j: usize) -> T {
        self.affinity[i * self.n + j]
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.edges[i * self.n + j]
    }
}

pub fn build_graph<T: Real>(features: &[Vec<T>], epsilon: T) -> InstanceGraph<T> {
    let n = features.len();
    let mut affinity = vec![T::zero(); n * n];
    let mut edges = vec![false; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let d = distance(&features[i], &features[j]);
            affinity[i * n + j] = d;
            affinity[j * n + i] = d;
            let e = d < epsilon;
            edges[i * n + j] = e;
            edges[j * n + i] = e;
        }
    }
    InstanceGraph {
        n,
        affinity,
        edges,
        epsilon,
    }
}

/// Disjoint sets with path halving and union by size.
#[derive(Debug, Clone)]
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
        let (mut a, mut b) = (self.find(a), self.find(b));
        if a == b {
            return;
        }
        if self.size[a] < self.size[b] {
            std::mem::swap(&mut a, &mut b);
        }
        self.parent[b] = a;
        self.size[a] += self.size[b];
    }
}

/// Node sets of the connected components, each sorted, ordered by their
/// smallest member.
pub fn connected_components<T: Real>(graph: &InstanceGraph<T>) -> Vec<Vec<usize>> {
    let n = graph.n;
    let mut uf = UnionFind::new(n);
    for i in 0..n {
        for j in i + 1..n {
            if graph.has_edge(i, j) {
                uf.union(i, j);
            }
        }
    }
    let mut slot = vec![usize::MAX; n];
    let mut out: Vec<Vec<usize>> = Vec::new();
    for i in 0..n {
        let r = uf.find(i);
        if slot[r] == usize::MAX {
            slot[r] = out.len();
            out.push(Vec::new());
        }
        out[slot[r]].push(i);
    }
    out
}
