//! Primal network simplex for uncapacitated min-cost flow.
//!
//! Follows the classical scheme (artificial root, strongly feasible spanning
//! tree, block-search pricing, Cunningham's leaving-arc rule). The tree is kept
//! as parent pointers plus doubly linked child lists; after each pivot the
//! re-hung subtree is walked once to update depths and potentials.
//!
//! Arcs are never stored: a [`Network`] answers endpoint and cost queries, so
//! dense bipartite problems cost `O(nodes)` memory.

use crate::error::{KacError, Result};

/// A directed graph with arc costs, queried on demand.
pub trait Network {
    fn node_count(&self) -> usize;
    fn arc_count(&self) -> usize;
    fn source(&self, arc: usize) -> usize;
    fn target(&self, arc: usize) -> usize;
    fn cost(&self, arc: usize) -> f64;

    /// Upper bound on every arc cost.
    fn max_cost(&self) -> f64 {
        (0..self.arc_count()).map(|a| self.cost(a)).fold(0.0, f64::max)
    }

    /// Most negative reduced cost `cost + pi[s] - pi[t]` below `-tol(pi[s], pi[t])`
    /// among arcs `start..end`, with its arc.
    fn price_range(&self, start: usize, end: usize, pi: &[f64], tol: &Tolerance) -> Option<(usize, f64)> {
        let mut best = None;
        let mut best_rc = 0.0;
        for a in start..end {
            let (ps, pt) = (pi[self.source(a)], pi[self.target(a)]);
            let rc = self.cost(a) + ps - pt;
            if rc < -tol.at(ps, pt) && rc < best_rc {
                best_rc = rc;
                best = Some(a);
            }
        }
        best.map(|a| (a, best_rc))
    }
}

/// Optimality tolerance on reduced costs: an absolute part scaled to the
/// cost range plus a part relative to the potentials involved.
#[derive(Clone, Copy, Debug)]
pub struct Tolerance {
    pub absolute: f64,
    pub relative: f64,
}

impl Tolerance {
    #[inline]
    #[must_use]
    pub fn at(&self, ps: f64, pt: f64) -> f64 {
        self.absolute + self.relative * (ps.abs() + pt.abs())
    }
}

/// Explicit arc list.
#[derive(Clone, Debug, Default)]
pub struct ArcList {
    pub nodes: usize,
    pub arcs: Vec<(usize, usize, f64)>,
}

impl<T: Network + ?Sized> Network for &T {
    fn node_count(&self) -> usize {
        (**self).node_count()
    }
    fn arc_count(&self) -> usize {
        (**self).arc_count()
    }
    fn source(&self, arc: usize) -> usize {
        (**self).source(arc)
    }
    fn target(&self, arc: usize) -> usize {
        (**self).target(arc)
    }
    fn cost(&self, arc: usize) -> f64 {
        (**self).cost(arc)
    }
    fn max_cost(&self) -> f64 {
        (**self).max_cost()
    }
    fn price_range(&self, start: usize, end: usize, pi: &[f64], tol: &Tolerance) -> Option<(usize, f64)> {
        (**self).price_range(start, end, pi, tol)
    }
}

impl Network for ArcList {
    fn node_count(&self) -> usize {
        self.nodes
    }
    fn arc_count(&self) -> usize {
        self.arcs.len()
    }
    fn source(&self, arc: usize) -> usize {
        self.arcs[arc].0
    }
    fn target(&self, arc: usize) -> usize {
        self.arcs[arc].1
    }
    fn cost(&self, arc: usize) -> f64 {
        self.arcs[arc].2
    }
}

/// Optimal flow and node potentials.
#[derive(Clone, Debug)]
pub struct FlowSolution {
    /// Total cost `sum flow * cost`.
    pub cost: f64,
    /// Dual prices `y` with `y_s - y_t <= cost(s, t)` on every arc, tight
    /// on arcs carrying flow. The optimum equals `sum supply_i y_i`.
    pub potentials: Vec<f64>,
    /// Basic arcs with their flows (zero flows included).
    pub basis: Vec<(usize, f64)>,
    pub pivots: usize,
}

const NONE: usize = usize::MAX;
/// Artificial arc of node `u` has id `ARTIFICIAL + u`, independent of the
/// number of real arcs so that arcs can be appended mid-solve.
const ARTIFICIAL: usize = usize::MAX / 2;

pub(crate) struct Simplex<N: Network> {
    net: N,
    m: usize,
    root: usize,
    parent: Vec<usize>,
    pred: Vec<usize>,
    /// Whether the tree arc into a node points from the node to its parent.
    up: Vec<bool>,
    flow: Vec<f64>,
    depth: Vec<u32>,
    pi: Vec<f64>,
    first_child: Vec<usize>,
    next_sib: Vec<usize>,
    prev_sib: Vec<usize>,
    /// Direction of the artificial arc of each node, fixed at start.
    art_up: Vec<bool>,
    art_cost: f64,
    next_arc: usize,
    block: usize,
    tol: Tolerance,
    stack: Vec<usize>,
}

impl<N: Network> Simplex<N> {
    fn arc_cost(&self, a: usize) -> f64 {
        if a < ARTIFICIAL {
            self.net.cost(a)
        } else if self.art_up[a - ARTIFICIAL] {
            0.0
        } else {
            self.art_cost
        }
    }

    /// Initial strongly feasible tree. `cost_bound` must bound every arc
    /// cost, including arcs appended later.
    pub(crate) fn new(net: N, supply: &[f64], cost_bound: f64) -> Self {
        let n = net.node_count();
        let m = net.arc_count();
        let root = n;
        let max_cost = cost_bound;
        let art_cost = (max_cost + 1.0) * (n as f64 + 1.0);
        let block = ((m as f64).sqrt().ceil() as usize).max(10);
        let mut s = Self {
            net,

            m,
            root,
            parent: vec![NONE; n + 1],
            pred: vec![NONE; n + 1],
            up: vec![false; n + 1],
            flow: vec![0.0; n + 1],
            depth: vec![0; n + 1],
            pi: vec![0.0; n + 1],
            first_child: vec![NONE; n + 1],
            next_sib: vec![NONE; n + 1],
            prev_sib: vec![NONE; n + 1],
            art_up: vec![false; n],
            art_cost,
            next_arc: 0,
            block,
            tol: Tolerance { absolute: 1e-12 * (1.0 + max_cost), relative: 1e-14 },
            stack: Vec::new(),
        };
        // Positive supplies drain to the root at zero cost; everything else is
        // fed from the root at the artificial cost. Zero-flow arcs then point
        // away from the root, so the initial tree is strongly feasible.
        for u in 0..n {
            let b = supply[u];
            s.art_up[u] = b > 0.0;
            s.parent[u] = root;
            s.pred[u] = ARTIFICIAL + u;
            s.up[u] = b > 0.0;
            s.flow[u] = b.abs();
            s.depth[u] = 1;
            s.pi[u] = if b > 0.0 { 0.0 } else { art_cost };
            s.add_child(root, u);
        }
        s
    }

    fn add_child(&mut self, p: usize, c: usize) {
        let head = self.first_child[p];
        self.next_sib[c] = head;
        self.prev_sib[c] = NONE;
        if head != NONE {
            self.prev_sib[head] = c;
        }
        self.first_child[p] = c;
    }

    fn remove_child(&mut self, p: usize, c: usize) {
        let (prev, next) = (self.prev_sib[c], self.next_sib[c]);
        if prev == NONE {
            self.first_child[p] = next;
        } else {
            self.next_sib[prev] = next;
        }
        if next != NONE {
            self.prev_sib[next] = prev;
        }
        self.prev_sib[c] = NONE;
        self.next_sib[c] = NONE;
    }

    /// Block search: best violating arc of the first block containing one.
    fn find_entering(&mut self) -> Option<usize> {
        let m = self.m;
        if m == 0 {
            return None;
        }
        let mut scanned = 0;
        let mut pos = self.next_arc;
        let mut best: Option<(usize, f64)> = None;
        while scanned < m {
            let end = (pos + self.block).min(m);
            if let Some((a, rc)) = self.net.price_range(pos, end, &self.pi, &self.tol) {
                if best.is_none_or(|(_, b)| rc < b) {
                    best = Some((a, rc));
                }
            }
            scanned += end - pos;
            pos = if end == m { 0 } else { end };
            if best.is_some() {
                break;
            }
        }
        self.next_arc = pos;
        best.map(|(a, _)| a)
    }

    fn join(&self, mut u: usize, mut v: usize) -> usize {
        while self.depth[u] > self.depth[v] {
            u = self.parent[u];
        }
        while self.depth[v] > self.depth[u] {
            v = self.parent[v];
        }
        while u != v {
            u = self.parent[u];
            v = self.parent[v];
        }
        u
    }

    fn pivot(&mut self, ent: usize) -> Result<()> {
        let first = self.net.source(ent);
        let second = self.net.target(ent);
        let join = self.join(first, second);

        // Leaving arc: the cycle runs first -> second -> join -> first.
        // Ties prefer the last blocking arc in cycle order, which keeps the
        // tree strongly feasible.
        let mut delta = f64::INFINITY;
        let mut u_out = NONE;
        let mut on_first = false;
        let mut u = first;
        while u != join {
            if self.up[u] && self.flow[u] < delta {
                delta = self.flow[u];
                u_out = u;
                on_first = true;
            }
            u = self.parent[u];
        }
        let mut u = second;
        while u != join {
            if !self.up[u] && self.flow[u] <= delta {
                delta = self.flow[u];
                u_out = u;
                on_first = false;
            }
            u = self.parent[u];
        }
        if u_out == NONE {
            return Err(KacError::Solver("unbounded: negative-cost cycle".into()));
        }

        if delta > 0.0 {
            let mut u = first;
            while u != join {
                self.flow[u] += if self.up[u] { -delta } else { delta };
                u = self.parent[u];
            }
            let mut u = second;
            while u != join {
                self.flow[u] += if self.up[u] { delta } else { -delta };
                u = self.parent[u];
            }
        }

        let (u_in, v_in) = if on_first { (first, second) } else { (second, first) };

        // Reverse the stem u_in .. u_out.
        let old_parent_of_out = self.parent[u_out];
        self.remove_child(old_parent_of_out, u_out);
        let mut stem = Vec::new();
        let mut w = u_in;
        loop {
            stem.push(w);
            if w == u_out {
                break;
            }
            w = self.parent[w];
        }
        for k in (1..stem.len()).rev() {
            let a = stem[k];
            let b = stem[k - 1];
            self.remove_child(a, b);
            self.parent[a] = b;
            self.pred[a] = self.pred[b];
            self.up[a] = !self.up[b];
            self.flow[a] = self.flow[b];
            self.add_child(b, a);
        }
        self.parent[u_in] = v_in;
        self.pred[u_in] = ent;
        self.up[u_in] = self.net.source(ent) == u_in;
        self.flow[u_in] = delta;
        self.add_child(v_in, u_in);

        // New tree arc must have zero reduced cost.
        let c = self.net.cost(ent);
        let shift = if self.up[u_in] { self.pi[v_in] - c - self.pi[u_in] } else { c + self.pi[v_in] - self.pi[u_in] };
        let base_depth = self.depth[v_in] + 1;
        self.stack.clear();
        self.stack.push(u_in);
        self.depth[u_in] = base_depth;
        self.pi[u_in] += shift;
        let mut stack = std::mem::take(&mut self.stack);
        while let Some(x) = stack.pop() {
            let mut c = self.first_child[x];
            while c != NONE {
                self.depth[c] = self.depth[x] + 1;
                self.pi[c] += shift;
                stack.push(c);
                c = self.next_sib[c];
            }
        }
        self.stack = stack;
        Ok(())
    }
}

/// Optimum of the big-M relaxation in which artificial arcs stay available.
pub(crate) struct RelaxedSolution {
    pub cost: f64,
    /// Internal prices: `cost + pi[s] - pi[t] >= -tol` on every arc.
    pub pi: Vec<f64>,
    pub basis: Vec<(usize, f64)>,
    /// Flow left on artificial arcs that carry a cost.
    pub artificial_flow: f64,
    pub pivots: usize,
    pub tol: Tolerance,
}

impl<N: Network> Simplex<N> {
    /// Pivots until no arc prices out.
    pub(crate) fn run(&mut self) -> Result<usize> {
        let n = self.parent.len();
        let limit = 200 * (n + 16) * ((self.m as f64).sqrt() as usize + 16);
        let mut pivots = 0;
        while let Some(e) = self.find_entering() {
            self.pivot(e)?;
            pivots += 1;
            if pivots > limit {
                return Err(KacError::Solver("pivot limit exceeded".into()));
            }
        }
        Ok(pivots)
    }

    pub(crate) fn extract(&self, abs_total: f64, pivots: usize) -> RelaxedSolution {
        let n = self.root;
        let mut cost = 0.0;
        let mut basis = Vec::with_capacity(n);
        let mut artificial_flow = 0.0;
        for u in 0..n {
            let a = self.pred[u];
            if a >= ARTIFICIAL {
                if self.arc_cost(a) > 0.0 {
                    artificial_flow += self.flow[u];
                }
                continue;
            }
            cost += self.flow[u] * self.net.cost(a);
            basis.push((a, self.flow[u]));
        }
        // Rounding in the supplies can leave dust on artificial arcs.
        if artificial_flow <= 1e-9 * abs_total {
            artificial_flow = 0.0;
        }
        RelaxedSolution { cost, pi: self.pi[..n].to_vec(), basis, artificial_flow, pivots, tol: self.tol }
    }
}

impl Simplex<ArcList> {
    /// Appends arcs, keeping the current basis.
    pub(crate) fn add_arcs(&mut self, arcs: impl IntoIterator<Item = (usize, usize, f64)>) {
        self.net.arcs.extend(arcs);
        self.m = self.net.arcs.len();
        self.block = ((self.m as f64).sqrt().ceil() as usize).max(10);
    }

    pub(crate) fn arcs(&self) -> &ArcList {
        &self.net
    }
}

pub(crate) fn check_supply(n: usize, supply: &[f64]) -> Result<f64> {
    if supply.len() != n {
        return Err(KacError::InvalidArgument(format!("{} supplies for {n} nodes", supply.len())));
    }
    let abs_total: f64 = supply.iter().map(|b| b.abs()).sum();
    let imbalance: f64 = supply.iter().sum();
    if imbalance != 0.0 && imbalance.abs() > 1e-9 * abs_total {
        return Err(KacError::Solver(format!("supplies do not balance (net {imbalance})")));
    }
    Ok(abs_total)
}

/// Solves `min sum cost * flow` subject to `outflow - inflow = supply` and
/// `flow >= 0`.
///
/// Supplies must balance to within `1e-9` of their absolute total.
///
/// # Errors
///
/// Unbalanced or infeasible supplies, negative-cost cycles, or pivot limit.
pub fn min_cost_flow<N: Network>(net: &N, supply: &[f64]) -> Result<FlowSolution> {
    let abs_total = check_supply(net.node_count(), supply)?;
    let mut s = Simplex::new(net, supply, net.max_cost());
    let pivots = s.run()?;
    let r = s.extract(abs_total, pivots);
    if r.artificial_flow > 0.0 {
        return Err(KacError::Solver("infeasible supplies".into()));
    }
    Ok(r.into_solution())
}

impl RelaxedSolution {
    pub(crate) fn into_solution(self) -> FlowSolution {
        // Report y = -pi so that y_s - y_t <= cost.
        let potentials = self.pi.iter().map(|p| -p).collect();
        FlowSolution { cost: self.cost, potentials, basis: self.basis, pivots: self.pivots }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn check_optimality(net: &ArcList, supply: &[f64], sol: &FlowSolution) {
        let y = &sol.potentials;
        for (s, t, c) in &net.arcs {
            assert!(y[*s] - y[*t] <= c + 1e-9, "dual infeasible on ({s},{t})");
        }
        let dual: f64 = supply.iter().zip(y).map(|(b, p)| b * p).sum();
        assert!((dual - sol.cost).abs() < 1e-9 * (1.0 + sol.cost.abs()), "gap {} vs {}", dual, sol.cost);
        let mut net_out = vec![0.0; net.nodes];
        for (a, f) in &sol.basis {
            assert!(*f >= -1e-12);
            let (s, t, _) = net.arcs[*a];
            net_out[s] += f;
            net_out[t] -= f;
        }
        for (o, b) in net_out.iter().zip(supply) {
            assert!((o - b).abs() < 1e-9);
        }
    }

    #[test]
    fn shortest_route_is_chosen() {
        let net = ArcList { nodes: 3, arcs: vec![(0, 2, 5.0), (0, 1, 1.0), (1, 2, 1.5)] };
        let supply = [2.0, 0.0, -2.0];
        let sol = min_cost_flow(&net, &supply).unwrap();
        assert!((sol.cost - 5.0).abs() < 1e-12);
        check_optimality(&net, &supply, &sol);
    }

    #[test]
    fn infeasible_detected() {
        let net = ArcList { nodes: 2, arcs: vec![(1, 0, 1.0)] };
        assert!(min_cost_flow(&net, &[1.0, -1.0]).is_err());
    }

    #[test]
    fn zero_supplies_give_zero_cost() {
        let net = ArcList { nodes: 2, arcs: vec![(0, 1, 1.0), (1, 0, 1.0)] };
        let sol = min_cost_flow(&net, &[0.0, 0.0]).unwrap();
        assert_eq!(sol.cost, 0.0);
    }

    /// Brute-force assignment for tiny transport problems.
    fn brute_assignment(c: &[Vec<f64>]) -> f64 {
        fn rec(c: &[Vec<f64>], row: usize, used: &mut Vec<bool>) -> f64 {
            if row == c.len() {
                return 0.0;
            }
            let mut best = f64::INFINITY;
            for j in 0..c.len() {
                if !used[j] {
                    used[j] = true;
                    best = best.min(c[row][j] + rec(c, row + 1, used));
                    used[j] = false;
                }
            }
            best
        }
        rec(c, 0, &mut vec![false; c.len()])
    }

    proptest! {
        #[test]
        fn assignment_matches_brute_force(costs in prop::collection::vec(0.0f64..10.0, 25)) {
            let n = 5;
            let c: Vec<Vec<f64>> = (0..n).map(|i| costs[i * n..(i + 1) * n].to_vec()).collect();
            let mut arcs = Vec::new();
            for i in 0..n {
                for j in 0..n {
                    arcs.push((i, n + j, c[i][j]));
                }
            }
            let net = ArcList { nodes: 2 * n, arcs };
            let supply: Vec<f64> = (0..2 * n).map(|k| if k < n { 1.0 } else { -1.0 }).collect();
            let sol = min_cost_flow(&net, &supply).unwrap();
            prop_assert!((sol.cost - brute_assignment(&c)).abs() < 1e-9);
            check_optimality(&net, &supply, &sol);
        }

        #[test]
        fn random_sparse_graphs_are_optimal(
            arcs in prop::collection::vec((0usize..8, 0usize..8, 0.0f64..5.0), 10..40),
            raw in prop::collection::vec(-3.0f64..3.0, 8),
        ) {
            // Add a cheap-to-verify backbone so the problem stays feasible.
            let mut arcs: Vec<_> = arcs.into_iter().filter(|(s, t, _)| s != t).collect();
            for u in 0..8 {
                arcs.push((u, (u + 1) % 8, 20.0));
            }
            let mean = raw.iter().sum::<f64>() / 8.0;
            let supply: Vec<f64> = raw.iter().map(|b| b - mean).collect();
            let net = ArcList { nodes: 8, arcs };
            let sol = min_cost_flow(&net, &supply).unwrap();
            check_optimality(&net, &supply, &sol);
        }
    }
}
