//! Primal network simplex for the dense transportation problem.
//!
//! Sources `0..n1` ship `a`, sinks `n1..n1+n2` receive `b`, every source-sink
//! arc `(i, j)` exists with cost `c[i * n2 + j]`. An extra root carries one
//! artificial arc per node, priced at `max_cost * (n1 + n2) + 1`. The starting
//! basis is the north-west corner staircase along caller-supplied orderings of
//! sources and sinks, hung from the root by one zero-flow artificial arc.
//!
//! Pivoting works on a growing candidate list. Entering arcs are chosen by
//! block search over the list (block length `sqrt` of its size, first minimum
//! in scan order wins). When no listed arc prices out, the nonbasic arcs are
//! dropped and a pricing round resumes the row scan where the last one
//! stopped, appending the most violated arcs of each row until enough are
//! found. The solve ends when a sweep over every row finds nothing.

const UP: i8 = 1;
const DOWN: i8 = -1;
const NONE: usize = usize::MAX;
/// Arcs appended per source row in a pricing round.
const PER_ROW: usize = 32;

pub(crate) struct SimplexOutcome {
    /// Flow on every real arc in row-major order.
    pub flow: Vec<f64>,
    pub cost: f64,
    pub pivots: usize,
    /// Total flow left on artificial arcs.
    pub artificial: f64,
}

/// Candidate arcs; index order is insertion order.
struct Arcs {
    src: Vec<u32>,
    tgt: Vec<u32>,
    cost: Vec<f64>,
    flow: Vec<f64>,
    /// 1 = at lower bound, 0 = basic.
    state: Vec<u8>,
    /// Real arc index, `NONE` for artificial arcs.
    id: Vec<usize>,
}

impl Arcs {
    fn push(&mut self, s: usize, t: usize, cost: f64, id: usize) -> usize {
        self.src.push(s as u32);
        self.tgt.push(t as u32);
        self.cost.push(cost);
        self.flow.push(0.0);
        self.state.push(1);
        self.id.push(id);
        self.src.len() - 1
    }

    fn len(&self) -> usize {
        self.src.len()
    }
}

/// Rooted spanning tree with O(1) child insertion and removal.
struct Tree {
    parent: Vec<usize>,
    pred: Vec<usize>,
    dir: Vec<i8>,
    depth: Vec<usize>,
    first: Vec<usize>,
    next: Vec<usize>,
    prev: Vec<usize>,
}

impl Tree {
    fn new(n: usize) -> Self {
        Tree {
            parent: vec![NONE; n],
            pred: vec![NONE; n],
            dir: vec![0; n],
            depth: vec![0; n],
            first: vec![NONE; n],
            next: vec![NONE; n],
            prev: vec![NONE; n],
        }
    }

    fn attach(&mut self, child: usize, parent: usize) {
        self.parent[child] = parent;
        self.prev[child] = NONE;
        self.next[child] = self.first[parent];
        if self.first[parent] != NONE {
            self.prev[self.first[parent]] = child;
        }
        self.first[parent] = child;
    }

    fn detach(&mut self, child: usize) {
        let p = self.parent[child];
        if self.prev[child] != NONE {
            self.next[self.prev[child]] = self.next[child];
        } else {
            self.first[p] = self.next[child];
        }
        if self.next[child] != NONE {
            self.prev[self.next[child]] = self.prev[child];
        }
        self.prev[child] = NONE;
        self.next[child] = NONE;
    }
}

fn block_search(arcs: &Arcs, pi: &[f64], next: &mut usize, eps: f64) -> usize {
    let len = arcs.len();
    let block = ((len as f64).sqrt().ceil() as usize).max(10);
    let mut best = -eps;
    let mut entering = NONE;
    let mut cnt = block;
    let mut k = *next % len;
    for _ in 0..len {
        if arcs.state[k] == 1 {
            let r = arcs.cost[k] + pi[arcs.src[k] as usize] - pi[arcs.tgt[k] as usize];
            if r < best {
                best = r;
                entering = k;
            }
        }
        k += 1;
        if k == len {
            k = 0;
        }
        cnt -= 1;
        if cnt == 0 {
            if entering != NONE {
                break;
            }
            cnt = block;
        }
    }
    *next = k;
    entering
}

/// Keeps artificial and basic arcs, unlisting everything else.
fn compact(arcs: &mut Arcs, listed: &mut [bool], tree: &mut Tree, nodes: usize) {
    let mut map = vec![NONE; arcs.len()];
    let mut w = 0;
    for k in 0..arcs.len() {
        if k >= nodes && arcs.state[k] != 0 {
            listed[arcs.id[k]] = false;
            continue;
        }
        map[k] = w;
        arcs.src[w] = arcs.src[k];
        arcs.tgt[w] = arcs.tgt[k];
        arcs.cost[w] = arcs.cost[k];
        arcs.flow[w] = arcs.flow[k];
        arcs.state[w] = arcs.state[k];
        arcs.id[w] = arcs.id[k];
        w += 1;
    }
    arcs.src.truncate(w);
    arcs.tgt.truncate(w);
    arcs.cost.truncate(w);
    arcs.flow.truncate(w);
    arcs.state.truncate(w);
    arcs.id.truncate(w);
    for p in tree.pred.iter_mut().filter(|p| **p != NONE) {
        *p = map[*p];
    }
}

fn worst(v: &[(f64, usize)]) -> usize {
    (0..v.len()).max_by(|&a, &b| v[a].0.total_cmp(&v[b].0).then(v[a].1.cmp(&v[b].1))).unwrap_or(0)
}

pub(crate) fn solve(
    a: &[f64],
    b: &[f64],
    c: &[f64],
    order_a: &[usize],
    order_b: &[usize],
    max_pivots: usize,
) -> Option<SimplexOutcome> {
    let (n1, n2) = (a.len(), b.len());
    let real = n1 * n2;
    let nodes = n1 + n2;
    let root = nodes;
    let max_cost = c.iter().cloned().fold(0.0, f64::max);
    let art = max_cost * nodes as f64 + 1.0;
    let eps = 1e-13 * max_cost.max(1.0);

    let mut arcs = Arcs { src: vec![], tgt: vec![], cost: vec![], flow: vec![], state: vec![], id: vec![] };
    let mut listed = vec![false; real];
    // Artificial arcs first: source i -> root, root -> sink j.
    for u in 0..nodes {
        if u < n1 {
            arcs.push(u, root, art, NONE);
        } else {
            arcs.push(root, u, art, NONE);
        }
    }

    // North-west corner staircase.
    let (mut i, mut j) = (0, 0);
    let (mut ra, mut rb) = (a[order_a[0]], b[order_b[0]]);
    loop {
        let (u, v) = (order_a[i], order_b[j]);
        let e = u * n2 + v;
        let x = ra.min(rb);
        let k = arcs.push(u, n1 + v, c[e], e);
        listed[e] = true;
        arcs.flow[k] = x;
        arcs.state[k] = 0;
        ra -= x;
        rb -= x;
        if i + 1 == n1 && j + 1 == n2 {
            break;
        }
        if j + 1 == n2 || (i + 1 < n1 && ra <= rb) {
            i += 1;
            ra = a[order_a[i]];
        } else {
            j += 1;
            rb = b[order_b[j]];
        }
    }
    arcs.state[order_a[0]] = 0;

    // Orient the basis from the root.
    let mut pi = vec![0.0; nodes + 1];
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); nodes + 1];
    for k in (0..arcs.len()).filter(|&k| arcs.state[k] == 0) {
        adj[arcs.src[k] as usize].push(k);
        adj[arcs.tgt[k] as usize].push(k);
    }
    let mut tree = Tree::new(nodes + 1);
    let mut stack = vec![root];
    let mut seen = vec![false; nodes + 1];
    seen[root] = true;
    while let Some(u) = stack.pop() {
        for &k in &adj[u] {
            let (s, t) = (arcs.src[k] as usize, arcs.tgt[k] as usize);
            let w = if s == u { t } else { s };
            if seen[w] {
                continue;
            }
            seen[w] = true;
            tree.attach(w, u);
            tree.pred[w] = k;
            tree.depth[w] = tree.depth[u] + 1;
            if s == w {
                tree.dir[w] = UP;
                pi[w] = pi[u] - arcs.cost[k];
            } else {
                tree.dir[w] = DOWN;
                pi[w] = pi[u] + arcs.cost[k];
            }
            stack.push(w);
        }
    }
    drop(adj);
    if seen.iter().any(|s| !s) {
        return None;
    }

    let mut row_best: Vec<(f64, usize)> = Vec::with_capacity(PER_ROW);
    let mut next = 0;
    let mut cursor = 0;
    let mut pivots = 0;
    let mut path = Vec::new();
    loop {
        let mut entering = block_search(&arcs, &pi, &mut next, eps);
        if entering == NONE {
            compact(&mut arcs, &mut listed, &mut tree, nodes);
            let before = arcs.len();
            let target = 2 * nodes;
            let mut scanned = 0;
            while scanned < n1 && arcs.len() - before < target {
                let i = cursor;
                cursor = if cursor + 1 == n1 { 0 } else { cursor + 1 };
                scanned += 1;
                row_best.clear();
                let row = &c[i * n2..(i + 1) * n2];
                let base = pi[i];
                let mut thr = -eps;
                for (j, cij) in row.iter().enumerate() {
                    let rc = cij + base - pi[n1 + j];
                    if rc < thr && !listed[i * n2 + j] {
                        if row_best.len() < PER_ROW {
                            row_best.push((rc, j));
                        } else {
                            let w = worst(&row_best);
                            row_best[w] = (rc, j);
                        }
                        if row_best.len() == PER_ROW {
                            thr = row_best[worst(&row_best)].0;
                        }
                    }
                }
                row_best.sort_by_key(|x| x.1);
                for &(_, j) in &row_best {
                    let e = i * n2 + j;
                    listed[e] = true;
                    arcs.push(i, n1 + j, c[e], e);
                }
            }
            if arcs.len() == before {
                break;
            }
            next = before;
            entering = block_search(&arcs, &pi, &mut next, eps);
            if entering == NONE {
                continue;
            }
        }
        pivots += 1;
        if pivots > max_pivots {
            return None;
        }

        // Join node of the cycle.
        let (first, second) = (arcs.src[entering] as usize, arcs.tgt[entering] as usize);
        let (mut u, mut v) = (first, second);
        while u != v {
            if tree.depth[u] >= tree.depth[v] {
                u = tree.parent[u];
            } else {
                v = tree.parent[v];
            }
        }
        let join = u;

        // Leaving arc: flow runs join -> first -> second -> join.
        let mut delta = f64::INFINITY;
        let mut u_out = NONE;
        let mut side = 0;
        let mut w = first;
        while w != join {
            let f = arcs.flow[tree.pred[w]];
            if tree.dir[w] == UP && f < delta {
                delta = f;
                u_out = w;
                side = 1;
            }
            w = tree.parent[w];
        }
        let mut w = second;
        while w != join {
            let f = arcs.flow[tree.pred[w]];
            if tree.dir[w] == DOWN && f <= delta {
                delta = f;
                u_out = w;
                side = 2;
            }
            w = tree.parent[w];
        }
        if u_out == NONE {
            return None;
        }

        if delta > 0.0 {
            arcs.flow[entering] += delta;
            let mut w = first;
            while w != join {
                arcs.flow[tree.pred[w]] -= f64::from(tree.dir[w]) * delta;
                w = tree.parent[w];
            }
            let mut w = second;
            while w != join {
                arcs.flow[tree.pred[w]] += f64::from(tree.dir[w]) * delta;
                w = tree.parent[w];
            }
        }
        let leaving = tree.pred[u_out];
        arcs.flow[leaving] = 0.0;
        arcs.state[leaving] = 1;
        arcs.state[entering] = 0;

        // Re-hang the subtree of u_out from the entering endpoint on its side.
        let (u_in, v_in) = if side == 1 { (first, second) } else { (second, first) };
        path.clear();
        let mut w = u_in;
        path.push(w);
        while w != u_out {
            w = tree.parent[w];
            path.push(w);
        }
        tree.detach(u_out);
        for k in (1..path.len()).rev() {
            let (hi, lo) = (path[k], path[k - 1]);
            tree.detach(lo);
            tree.attach(hi, lo);
            tree.pred[hi] = tree.pred[lo];
            tree.dir[hi] = -tree.dir[lo];
        }
        tree.attach(u_in, v_in);
        tree.pred[u_in] = entering;
        tree.dir[u_in] = if arcs.src[entering] as usize == u_in { UP } else { DOWN };

        // Potentials and depths on the moved subtree.
        let ce = arcs.cost[entering];
        let target_pi = if tree.dir[u_in] == UP { pi[v_in] - ce } else { pi[v_in] + ce };
        let shift = target_pi - pi[u_in];
        stack.clear();
        tree.depth[u_in] = tree.depth[v_in] + 1;
        stack.push(u_in);
        while let Some(x) = stack.pop() {
            pi[x] += shift;
            let mut y = tree.first[x];
            while y != NONE {
                tree.depth[y] = tree.depth[x] + 1;
                stack.push(y);
                y = tree.next[y];
            }
        }
    }

    let mut flow = vec![0.0; real];
    let mut artificial = 0.0;
    for k in 0..arcs.len() {
        if arcs.id[k] == NONE {
            artificial += arcs.flow[k];
        } else {
            flow[arcs.id[k]] = arcs.flow[k];
        }
    }
    let total = flow.iter().zip(c).map(|(f, c)| f * c).sum();
    Some(SimplexOutcome { flow, cost: total, pivots, artificial })
}
