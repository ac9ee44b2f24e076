use std::collections::HashSet;

use crate::error::{KacError, Result};
use crate::kinetic::dist;

use super::network_simplex::{check_supply, ArcList, FlowSolution, Network, Simplex, Tolerance};

/// Neighbours per node in the initial sparse graph.
const NEIGHBOURS: usize = 8;

/// Complete bipartite transport graph with Euclidean costs and an optional
/// ground node.
///
/// Nodes: sources `0..S`, sinks `S..S+T`, ground `S+T`. Arcs: every
/// source-to-sink pair in row-major order, then (with a ground node) one arc
/// from each source to ground and one from ground to each sink, all at the
/// ground cost.
#[derive(Clone, Debug)]
pub struct BipartiteNetwork<'a> {
    dim: usize,
    sources: &'a [f64],
    sinks: &'a [f64],
    ground_cost: Option<f64>,
}

impl<'a> BipartiteNetwork<'a> {
    #[must_use]
    pub fn new(dim: usize, sources: &'a [f64], sinks: &'a [f64], ground_cost: Option<f64>) -> Self {
        Self { dim, sources, sinks, ground_cost }
    }

    #[must_use]
    pub fn source_count(&self) -> usize {
        self.sources.len() / self.dim
    }

    #[must_use]
    pub fn sink_count(&self) -> usize {
        self.sinks.len() / self.dim
    }

    #[must_use]
    pub fn ground(&self) -> Option<usize> {
        self.ground_cost.map(|_| self.source_count() + self.sink_count())
    }

    fn bipartite_arcs(&self) -> usize {
        self.source_count() * self.sink_count()
    }

    fn sink(&self, j: usize) -> &[f64] {
        &self.sinks[j * self.dim..(j + 1) * self.dim]
    }

    fn src(&self, i: usize) -> &[f64] {
        &self.sources[i * self.dim..(i + 1) * self.dim]
    }

    /// Bipartite arcs joining each node to its nearest neighbours on the
    /// other side.
    fn nearest_neighbour_arcs(&self, k: usize) -> Vec<usize> {
        let (ns, nt) = (self.source_count(), self.sink_count());
        let mut ids = Vec::with_capacity((ns + nt) * k);
        let mut row: Vec<(f64, usize)> = Vec::new();
        for i in 0..ns {
            row.clear();
            row.extend((0..nt).map(|j| (dist_sq(self.src(i), self.sink(j)), j)));
            let kk = k.min(nt);
            if kk < nt {
                row.select_nth_unstable_by(kk - 1, |a, b| a.0.total_cmp(&b.0));
            }
            ids.extend(row[..kk].iter().map(|(_, j)| i * nt + j));
        }
        for j in 0..nt {
            row.clear();
            row.extend((0..ns).map(|i| (dist_sq(self.src(i), self.sink(j)), i)));
            let kk = k.min(ns);
            if kk < ns {
                row.select_nth_unstable_by(kk - 1, |a, b| a.0.total_cmp(&b.0));
            }
            ids.extend(row[..kk].iter().map(|(_, i)| i * nt + j));
        }
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    /// Bipartite arcs whose reduced cost under `pi` is below tolerance.
    fn violating_arcs(&self, pi: &[f64], tol: &Tolerance) -> Vec<usize> {
        let (ns, nt) = (self.source_count(), self.sink_count());
        let mut out = Vec::new();
        for i in 0..ns {
            let ps = pi[i];
            let x = self.src(i);
            for j in 0..nt {
                let pt = pi[ns + j];
                let gap = pt - ps - tol.at(ps, pt);
                if gap <= 0.0 {
                    continue;
                }
                if dist_sq(x, self.sink(j)) < gap * gap {
                    out.push(i * nt + j);
                }
            }
        }
        out
    }

    fn arc_triple(&self, a: usize) -> (usize, usize, f64) {
        (self.source(a), self.target(a), self.cost(a))
    }

    /// Exact min-cost flow on the complete graph.
    ///
    /// Starts from a nearest-neighbour subgraph (plus all ground arcs), then
    /// repeatedly prices every arc of the complete graph against the current
    /// duals, appends the violators and continues pivoting from the current
    /// basis. Stops once no arc violates the reduced-cost condition, which
    /// certifies optimality on the complete graph.
    ///
    /// # Errors
    ///
    /// Unbalanced supplies or solver failure.
    pub fn solve(&self, supply: &[f64]) -> Result<FlowSolution> {
        let abs_total = check_supply(self.node_count(), supply)?;
        let b = self.bipartite_arcs();
        let mut dense: Vec<usize> = self.nearest_neighbour_arcs(NEIGHBOURS);
        if self.ground_cost.is_some() {
            dense.extend(b..self.arc_count());
        }
        let arcs = ArcList { nodes: self.node_count(), arcs: dense.iter().map(|&a| self.arc_triple(a)).collect() };
        let mut present: HashSet<usize> = dense.iter().copied().collect();
        let mut simplex = Simplex::new(arcs, supply, self.max_cost());
        let mut pivots = 0;
        loop {
            pivots += simplex.run()?;
            let r = simplex.extract(abs_total, pivots);
            // Arcs already in the model are only flagged through rounding.
            let extra: Vec<usize> =
                self.violating_arcs(&r.pi, &r.tol).into_iter().filter(|a| present.insert(*a)).collect();
            if extra.is_empty() {
                if r.artificial_flow > 0.0 {
                    return Err(KacError::Solver("infeasible supplies".into()));
                }
                debug_assert_eq!(simplex.arcs().arcs.len(), dense.len());
                let mut sol = r.into_solution();
                for (a, _) in &mut sol.basis {
                    *a = dense[*a];
                }
                return Ok(sol);
            }
            simplex.add_arcs(extra.iter().map(|&a| self.arc_triple(a)));
            dense.extend(extra);
        }
    }
}

#[inline]
fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum()
}

fn bounding_diameter(dim: usize, a: &[f64], b: &[f64]) -> f64 {
    let mut lo = vec![f64::INFINITY; dim];
    let mut hi = vec![f64::NEG_INFINITY; dim];
    for p in a.chunks_exact(dim).chain(b.chunks_exact(dim)) {
        for k in 0..dim {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    lo.iter().zip(&hi).map(|(l, h)| (h - l).powi(2)).sum::<f64>().sqrt()
}

impl Network for BipartiteNetwork<'_> {
    fn node_count(&self) -> usize {
        self.source_count() + self.sink_count() + usize::from(self.ground_cost.is_some())
    }

    fn arc_count(&self) -> usize {
        let extra = if self.ground_cost.is_some() { self.source_count() + self.sink_count() } else { 0 };
        self.bipartite_arcs() + extra
    }

    #[inline]
    fn source(&self, arc: usize) -> usize {
        let b = self.bipartite_arcs();
        if arc < b {
            arc / self.sink_count()
        } else if arc < b + self.source_count() {
            arc - b
        } else {
            self.source_count() + self.sink_count()
        }
    }

    #[inline]
    fn target(&self, arc: usize) -> usize {
        let b = self.bipartite_arcs();
        let s = self.source_count();
        if arc < b {
            s + arc % self.sink_count()
        } else if arc < b + s {
            s + self.sink_count()
        } else {
            s + (arc - b - s)
        }
    }

    #[inline]
    fn cost(&self, arc: usize) -> f64 {
        let b = self.bipartite_arcs();
        if arc < b {
            let t = self.sink_count();
            let (i, j) = (arc / t, arc % t);
            let d = self.dim;
            dist(&self.sources[i * d..(i + 1) * d], &self.sinks[j * d..(j + 1) * d])
        } else {
            self.ground_cost.unwrap_or(0.0)
        }
    }

    fn price_range(&self, start: usize, end: usize, pi: &[f64], tol: &Tolerance) -> Option<(usize, f64)> {
        let b = self.bipartite_arcs();
        let t_count = self.sink_count();
        let s_count = self.source_count();
        let d = self.dim;
        let mut best: Option<usize> = None;
        let mut best_rc = 0.0;
        let mut a = start;
        let stop = end.min(b);
        while a < stop {
            let i = a / t_count;
            let j0 = a % t_count;
            let row_end = ((i + 1) * t_count).min(stop);
            let ps = pi[i];
            let x = &self.sources[i * d..(i + 1) * d];
            for (off, y) in self.sinks[j0 * d..(j0 + row_end - a) * d].chunks_exact(d).enumerate() {
                let pt = pi[s_count + j0 + off];
                // Violation needs cost < pt - ps - tol; costs are nonnegative.
                let gap = pt - ps - tol.at(ps, pt);
                if gap <= 0.0 {
                    continue;
                }
                let d2: f64 = x.iter().zip(y).map(|(p, q)| (p - q) * (p - q)).sum();
                if d2 < gap * gap {
                    let rc = d2.sqrt() + ps - pt;
                    if rc < best_rc {
                        best_rc = rc;
                        best = Some(a + off);
                    }
                }
            }
            a = row_end;
        }
        for arc in start.max(b)..end {
            let (ps, pt) = (pi[self.source(arc)], pi[self.target(arc)]);
            let rc = self.cost(arc) + ps - pt;
            if rc < -tol.at(ps, pt) && rc < best_rc {
                best_rc = rc;
                best = Some(arc);
            }
        }
        best.map(|a| (a, best_rc))
    }

    fn max_cost(&self) -> f64 {
        bounding_diameter(self.dim, self.sources, self.sinks).max(self.ground_cost.unwrap_or(0.0))
    }
}
