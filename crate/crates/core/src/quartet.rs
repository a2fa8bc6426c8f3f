//! Quartet-method tree clustering: fit an unrooted ternary tree to a
//! distance matrix by randomized hill-climbing.
//!
//! Every set of four leaves admits three pairings `uv|wx`; a ternary tree
//! induces exactly one of them per quartet. A candidate tree is scored by
//! summing, over all `C(n,4)` quartets, the cost of the induced pairing
//! (the two within-pair distances), normalized against the per-quartet
//! minima and maxima so that `S(T) = 1` realizes the cheapest pairing
//! everywhere and `S(T) = 0` the most expensive.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::dist::DistanceMatrix;
use crate::error::{Error, Result};

/// Unrooted tree with `n` labeled leaves and `n - 2` internal nodes of
/// degree exactly 3. Leaves are nodes `0..n`, internal nodes `n..2n - 2`.
#[derive(Debug, Clone)]
pub struct TernaryTree {
    n_leaves: usize,
    adj: Vec<Vec<usize>>,
}

/// Tree fidelity against a distance matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TreeScore {
    /// `(max_cost - cost) / (max_cost - min_cost)`, in `[0, 1]`.
    pub s: f64,
    /// Summed cost of the induced pairings, `C(T)`.
    pub cost: f64,
    /// Sum of per-quartet minimal pairing costs.
    pub min_cost: f64,
    /// Sum of per-quartet maximal pairing costs.
    pub max_cost: f64,
}

/// Hill-climbing schedule.
#[derive(Debug, Clone, Copy)]
pub struct ClimbParams {
    pub restarts: usize,
    /// A restart terminates after this many consecutive rejected
    /// mutations.
    pub max_stale_steps: usize,
}

impl Default for ClimbParams {
    fn default() -> Self {
        Self {
            restarts: 8,
            max_stale_steps: 10_000,
        }
    }
}

impl TernaryTree {
    /// Random topology: three leaves around one internal node, remaining
    /// leaves attached by subdividing a uniformly chosen edge.
    pub fn random<R: Rng>(n_leaves: usize, rng: &mut R) -> Result<TernaryTree> {
        if n_leaves < 4 {
            return Err(Error::TooFewItems(n_leaves));
        }
        let node_count = 2 * n_leaves - 2;
        let mut adj: Vec<Vec<usize>> = vec![Vec::new(); node_count];
        let first_internal = n_leaves;
        for leaf in 0..3 {
            adj[leaf].push(first_internal);
            adj[first_internal].push(leaf);
        }
        let mut tree = TernaryTree { n_leaves, adj };
        for leaf in 3..n_leaves {
            let edges = tree.edges();
            let (a, b) = edges[rng.gen_range(0..edges.len())];
            let v = first_internal + leaf - 2;
            tree.remove_edge(a, b);
            tree.add_edge(a, v);
            tree.add_edge(v, b);
            tree.add_edge(v, leaf);
        }
        Ok(tree)
    }

    pub fn n_leaves(&self) -> usize {
        self.n_leaves
    }

    fn node_count(&self) -> usize {
        2 * self.n_leaves - 2
    }

    /// Undirected edge list, each edge once with the smaller endpoint
    /// first, in deterministic order.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.node_count() - 1);
        for u in 0..self.node_count() {
            for &v in &self.adj[u] {
                if u < v {
                    out.push((u, v));
                }
            }
        }
        out
    }

    fn remove_edge(&mut self, u: usize, v: usize) {
        self.adj[u].retain(|&x| x != v);
        self.adj[v].retain(|&x| x != u);
    }

    fn add_edge(&mut self, u: usize, v: usize) {
        self.adj[u].push(v);
        self.adj[v].push(u);
    }

    /// Checks the degree conditions, connectivity and acyclicity.
    pub fn validate(&self) -> Result<()> {
        let bad = |detail: String| Error::Other(format!("invalid tree: {detail}"));
        for leaf in 0..self.n_leaves {
            if self.adj[leaf].len() != 1 {
                return Err(bad(format!("leaf {leaf} has degree {}", self.adj[leaf].len())));
            }
        }
        for node in self.n_leaves..self.node_count() {
            if self.adj[node].len() != 3 {
                return Err(bad(format!(
                    "internal node {node} has degree {}",
                    self.adj[node].len()
                )));
            }
        }
        let edge_count: usize = self.adj.iter().map(Vec::len).sum::<usize>() / 2;
        if edge_count != self.node_count() - 1 {
            return Err(bad(format!("{edge_count} edges")));
        }
        let mut seen = vec![false; self.node_count()];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(u) = stack.pop() {
            for &v in &self.adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
        if seen.iter().any(|&s| !s) {
            return Err(bad("disconnected".into()));
        }
        Ok(())
    }

    /// Topological distances between all leaf pairs (BFS per leaf).
    fn leaf_distances(&self) -> Vec<Vec<u32>> {
        let mut out = vec![vec![0u32; self.n_leaves]; self.n_leaves];
        let mut dist = vec![u32::MAX; self.node_count()];
        let mut queue = std::collections::VecDeque::new();
        for start in 0..self.n_leaves {
            dist.fill(u32::MAX);
            dist[start] = 0;
            queue.clear();
            queue.push_back(start);
            while let Some(u) = queue.pop_front() {
                for &v in &self.adj[u] {
                    if dist[v] == u32::MAX {
                        dist[v] = dist[u] + 1;
                        queue.push_back(v);
                    }
                }
            }
            for leaf in 0..self.n_leaves {
                out[start][leaf] = dist[leaf];
            }
        }
        out
    }

    /// Nodes of the subtree hanging off `root` when the edge toward
    /// `exclude` is cut.
    fn subtree_nodes(&self, root: usize, exclude: usize) -> Vec<usize> {
        let mut seen = vec![false; self.node_count()];
        seen[exclude] = true;
        seen[root] = true;
        let mut stack = vec![root];
        let mut out = vec![root];
        while let Some(u) = stack.pop() {
            for &v in &self.adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    out.push(v);
                    stack.push(v);
                }
            }
        }
        out
    }

    /// One random mutation: leaf-pair swap, subtree swap, or subtree
    /// regraft, uniformly chosen. Returns a new tree.
    pub fn mutate<R: Rng>(&self, rng: &mut R) -> TernaryTree {
        let mut tree = self.clone();
        match rng.gen_range(0..3u32) {
            0 => tree.leaf_swap(rng),
            1 => tree.subtree_swap(rng),
            _ => tree.regraft(rng),
        }
        tree
    }

    fn leaf_swap<R: Rng>(&mut self, rng: &mut R) {
        let l1 = rng.gen_range(0..self.n_leaves);
        let mut l2 = rng.gen_range(0..self.n_leaves - 1);
        if l2 >= l1 {
            l2 += 1;
        }
        let p1 = self.adj[l1][0];
        let p2 = self.adj[l2][0];
        self.remove_edge(l1, p1);
        self.remove_edge(l2, p2);
        self.add_edge(l1, p2);
        self.add_edge(l2, p1);
    }

    fn subtree_swap<R: Rng>(&mut self, rng: &mut R) {
        let edges = self.edges();
        for _ in 0..32 {
            let (mut a1, mut b1) = edges[rng.gen_range(0..edges.len())];
            if rng.gen_bool(0.5) {
                std::mem::swap(&mut a1, &mut b1);
            }
            let (mut a2, mut b2) = edges[rng.gen_range(0..edges.len())];
            if rng.gen_bool(0.5) {
                std::mem::swap(&mut a2, &mut b2);
            }
            if (a1, b1) == (a2, b2) || (a1, b1) == (b2, a2) || b1 == b2 {
                continue;
            }
            // Subtrees in a tree are either nested or disjoint; disjoint
            // iff neither root lies in the other's subtree.
            let set1 = self.subtree_nodes(b1, a1);
            if set1.contains(&b2) {
                continue;
            }
            let set2 = self.subtree_nodes(b2, a2);
            if set2.contains(&b1) {
                continue;
            }
            self.remove_edge(a1, b1);
            self.remove_edge(a2, b2);
            self.add_edge(a1, b2);
            self.add_edge(a2, b1);
            return;
        }
    }

    fn regraft<R: Rng>(&mut self, rng: &mut R) {
        let edges = self.edges();
        for _ in 0..32 {
            let (mut attach, mut root) = edges[rng.gen_range(0..edges.len())];
            if attach < self.n_leaves {
                std::mem::swap(&mut attach, &mut root);
            }
            if attach < self.n_leaves {
                continue;
            }
            let moved = self.subtree_nodes(root, attach);
            // Detach: suppress the degree-2 attachment node.
            let others: Vec<usize> = self.adj[attach]
                .iter()
                .copied()
                .filter(|&v| v != root)
                .collect();
            debug_assert_eq!(others.len(), 2);
            let (x, y) = (others[0], others[1]);
            self.remove_edge(attach, root);
            self.remove_edge(attach, x);
            self.remove_edge(attach, y);
            self.add_edge(x, y);
            // Reattach by subdividing an edge of the remaining tree.
            let dest: Vec<(usize, usize)> = self
                .edges()
                .into_iter()
                .filter(|&(u, v)| !moved.contains(&u) && !moved.contains(&v))
                .collect();
            let (c, d) = dest[rng.gen_range(0..dest.len())];
            self.remove_edge(c, d);
            self.add_edge(c, attach);
            self.add_edge(attach, d);
            self.add_edge(attach, root);
            return;
        }
    }

    /// Newick serialization with unlabeled internal nodes, rooted for
    /// display at the internal node adjacent to leaf 0.
    pub fn to_newick(&self, labels: &[String]) -> String {
        fn quote(label: &str) -> String {
            if !label.is_empty()
                && label
                    .chars()
                    .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '.' | '-'))
            {
                label.to_string()
            } else {
                format!("'{}'", label.replace('\'', "''"))
            }
        }
        fn write(tree: &TernaryTree, labels: &[String], node: usize, parent: usize, out: &mut String) {
            if node < tree.n_leaves {
                out.push_str(&quote(&labels[node]));
                return;
            }
            out.push('(');
            let mut first = true;
            for &child in &tree.adj[node] {
                if child == parent {
                    continue;
                }
                if !first {
                    out.push(',');
                }
                first = false;
                write(tree, labels, child, node, out);
            }
            out.push(')');
        }
        let root = self.adj[0][0];
        let mut out = String::new();
        out.push('(');
        out.push_str(&quote(&labels[0]));
        for &child in &self.adj[root] {
            if child == 0 {
                continue;
            }
            out.push(',');
            write(self, labels, child, root, &mut out);
        }
        out.push_str(");");
        out
    }

    /// Minimal connecting subtree (Steiner subtree) of a set of leaves:
    /// the union of all pairwise paths, as a node set.
    pub fn steiner_nodes(&self, leaves: &[usize]) -> Vec<usize> {
        if leaves.is_empty() {
            return Vec::new();
        }
        // Repeatedly prune degree-<=1 nodes that are not in the leaf set.
        let mut keep = vec![true; self.node_count()];
        let mut degree: Vec<usize> = self.adj.iter().map(Vec::len).collect();
        let required: std::collections::HashSet<usize> = leaves.iter().copied().collect();
        let mut queue: Vec<usize> = (0..self.node_count())
            .filter(|&u| degree[u] <= 1 && !required.contains(&u))
            .collect();
        while let Some(u) = queue.pop() {
            if !keep[u] {
                continue;
            }
            keep[u] = false;
            for &v in &self.adj[u] {
                if keep[v] {
                    degree[v] -= 1;
                    if degree[v] <= 1 && !required.contains(&v) {
                        queue.push(v);
                    }
                }
            }
        }
        (0..self.node_count()).filter(|&u| keep[u]).collect()
    }
}

/// Cost of pairing `{u,v}|{w,x}`: `d(u,v) + d(w,x)`.
pub fn quartet_cost(d: &DistanceMatrix, quartet: [usize; 4]) -> Result<f64> {
    let [u, v, w, x] = quartet;
    let mut sorted = quartet;
    sorted.sort_unstable();
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::DuplicateLeaves);
    }
    Ok(d.get(u, v) + d.get(w, x))
}

/// Per-quartet pairing costs precomputed from the matrix, with the
/// matrix-wide minimal and maximal totals.
struct QuartetCosts {
    /// For each quartet `a<b<c<d`: costs of `ab|cd`, `ac|bd`, `ad|bc`.
    quartets: Vec<([usize; 4], [f64; 3])>,
    min_total: f64,
    max_total: f64,
}

impl QuartetCosts {
    fn new(d: &DistanceMatrix) -> QuartetCosts {
        let n = d.len();
        let mut quartets = Vec::new();
        let mut min_total = 0.0;
        let mut max_total = 0.0;
        for a in 0..n {
            for b in (a + 1)..n {
                for c in (b + 1)..n {
                    for e in (c + 1)..n {
                        let costs = [
                            d.get(a, b) + d.get(c, e),
                            d.get(a, c) + d.get(b, e),
                            d.get(a, e) + d.get(b, c),
                        ];
                        min_total += costs.iter().cloned().fold(f64::INFINITY, f64::min);
                        max_total += costs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                        quartets.push(([a, b, c, e], costs));
                    }
                }
            }
        }
        QuartetCosts {
            quartets,
            min_total,
            max_total,
        }
    }

    fn score(&self, tree: &TernaryTree) -> TreeScore {
        let ld = tree.leaf_distances();
        let mut cost = 0.0;
        for &([a, b, c, d], costs) in &self.quartets {
            let s0 = ld[a][b] + ld[c][d];
            let s1 = ld[a][c] + ld[b][d];
            let s2 = ld[a][d] + ld[b][c];
            // The tree realizes the pairing with the strictly smallest
            // path-length sum; the other two sums are equal and larger.
            let topo = if s0 <= s1 && s0 <= s2 {
                0
            } else if s1 <= s2 {
                1
            } else {
                2
            };
            cost += costs[topo];
        }
        let s = if self.max_total > self.min_total {
            ((self.max_total - cost) / (self.max_total - self.min_total)).clamp(0.0, 1.0)
        } else {
            // All trees cost the same.
            1.0
        };
        TreeScore {
            s,
            cost,
            min_cost: self.min_total,
            max_cost: self.max_total,
        }
    }
}

/// Scores a tree against a matrix. Tree leaves are identified with matrix
/// rows by index; the leaf count must match the label count.
pub fn tree_score(d: &DistanceMatrix, tree: &TernaryTree) -> Result<TreeScore> {
    if tree.n_leaves() != d.len() {
        return Err(Error::LabelMismatch(format!(
            "tree has {} leaves, matrix {}",
            tree.n_leaves(),
            d.len()
        )));
    }
    Ok(QuartetCosts::new(d).score(tree))
}

/// Randomized hill-climbing: per restart, start from a random tree and
/// accept a mutation only when `S` strictly increases, stopping after
/// `max_stale_steps` consecutive rejections. Restarts run in parallel;
/// the best tree wins, ties broken by lowest restart index. Deterministic
/// for a fixed seed.
pub fn hill_climb(
    d: &DistanceMatrix,
    seed: u64,
    params: ClimbParams,
) -> Result<(TernaryTree, TreeScore)> {
    let n = d.len();
    if n < 4 {
        return Err(Error::TooFewItems(n));
    }
    if n > 25 {
        log::warn!("clustering {n} items; trees over 25 leaves may distort the matrix");
    }
    for row in &d.entries {
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::Other(
                "matrix contains non-finite entries; cap infinities first".into(),
            ));
        }
    }
    let costs = QuartetCosts::new(d);
    let restarts = params.restarts.max(1);

    let run_restart = |restart: usize| -> Result<(TreeScore, TernaryTree)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(restart as u64);
        let mut tree = TernaryTree::random(n, &mut rng)?;
        let mut score = costs.score(&tree);
        let mut stale = 0usize;
        while stale < params.max_stale_steps {
            let candidate = tree.mutate(&mut rng);
            let cand_score = costs.score(&candidate);
            if cand_score.s > score.s {
                tree = candidate;
                score = cand_score;
                stale = 0;
            } else {
                stale += 1;
            }
        }
        Ok((score, tree))
    };

    let results: Vec<Result<(TreeScore, TernaryTree)>> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..restarts)
            .map(|r| scope.spawn(move || run_restart(r)))
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });

    let mut best: Option<(TreeScore, TernaryTree)> = None;
    for result in results {
        let (score, tree) = result?;
        let better = match &best {
            None => true,
            Some((bs, _)) => score.s > bs.s,
        };
        if better {
            best = Some((score, tree));
        }
    }
    let (score, tree) = best.expect("at least one restart");
    debug_assert!(tree.validate().is_ok());
    Ok((tree, score))
}

/// All distinct topologies on `n` leaves, built by subdividing every edge
/// choice in turn. There are `(2n - 5)!!` of them, so `n` is capped at 8.
pub fn enumerate_trees(n: usize) -> Result<Vec<TernaryTree>> {
    if n < 4 {
        return Err(Error::TooFewItems(n));
    }
    if n > 8 {
        return Err(Error::Other(format!(
            "exhaustive enumeration over {n} leaves is intractable"
        )));
    }
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); 2 * n - 2];
    for leaf in 0..3 {
        adj[leaf].push(n);
        adj[n].push(leaf);
    }
    let star = TernaryTree { n_leaves: n, adj };
    let mut current = vec![star];
    for leaf in 3..n {
        let mut next = Vec::new();
        for tree in &current {
            for (a, b) in tree.edges() {
                let mut t = tree.clone();
                let v = n + leaf - 2;
                t.remove_edge(a, b);
                t.add_edge(a, v);
                t.add_edge(v, b);
                t.add_edge(v, leaf);
                next.push(t);
            }
        }
        current = next;
    }
    Ok(current)
}
