//! Group retracts of labeled digraphs with a dummy vertex.
//!
//! A labeled digraph has vertices indexed `0..n` plus an implicit dummy
//! vertex; labeled edges `v₁ →g v₂` must satisfy `g(v₁) = v₂` under the
//! ambient action, and edges out of the dummy carry no label. Components are
//! taken in the underlying undirected graph; components touching the dummy
//! are ineligible. A retract picks one representative per eligible component
//! and a map `h` with `h(v′)(rep) = v′` for every eligible vertex `v′`.

use thiserror::Error;

use crate::permgroup::Permutation;

#[derive(Debug, Error)]
pub enum RetractError {
    #[error("edge {edge} label is inconsistent: label({src}) = {got}, expected {dst}")]
    LabelInconsistency {
        edge: usize,
        src: usize,
        dst: usize,
        got: usize,
    },
    #[error("edge endpoint {vertex} out of range for {vertices} vertices")]
    VertexOutOfRange { vertex: usize, vertices: usize },
}

/// Edge of a labeled digraph; `label` indexes into the graph's label table.
#[derive(Clone, Copy, Debug)]
pub struct Edge {
    pub src: u32,
    pub dst: u32,
    pub label: u32,
}

#[derive(Clone, Debug)]
pub struct LabeledDigraph {
    vertex_count: usize,
    labels: Vec<Permutation>,
    edges: Vec<Edge>,
    /// Targets of unlabeled edges from the dummy vertex.
    dummy_targets: Vec<u32>,
}

impl LabeledDigraph {
    pub fn new(vertex_count: usize, labels: Vec<Permutation>) -> Self {
        LabeledDigraph {
            vertex_count,
            labels,
            edges: Vec::new(),
            dummy_targets: Vec::new(),
        }
    }

    pub fn add_edge(&mut self, src: u32, dst: u32, label: u32) {
        debug_assert!((src as usize) < self.vertex_count && (dst as usize) < self.vertex_count);
        debug_assert!((label as usize) < self.labels.len());
        self.edges.push(Edge { src, dst, label });
    }

    pub fn add_dummy_edge(&mut self, dst: u32) {
        debug_assert!((dst as usize) < self.vertex_count);
        self.dummy_targets.push(dst);
    }

    pub fn vertex_count(&self) -> usize {
        self.vertex_count
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn label(&self, idx: u32) -> &Permutation {
        &self.labels[idx as usize]
    }

    /// Checks `label(src) = dst` for every labeled edge, where vertices are
    /// interpreted through `vertex_point` (e.g. the domain point a vertex
    /// stands for). Enable during debugging runs.
    pub fn validate(&self, vertex_point: impl Fn(usize) -> u16) -> Result<(), RetractError> {
        for (i, e) in self.edges.iter().enumerate() {
            let got = self.labels[e.label as usize].apply(vertex_point(e.src as usize));
            if got != vertex_point(e.dst as usize) {
                return Err(RetractError::LabelInconsistency {
                    edge: i,
                    src: e.src as usize,
                    dst: e.dst as usize,
                    got: got as usize,
                });
            }
        }
        Ok(())
    }
}

/// Representative-selection policy. The component partition never depends on
/// the policy, only which member is named.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum RepPolicy {
    #[default]
    MinVertexIndex,
    MaxVertexIndex,
}

/// How a vertex was reached in the spanning forest.
#[derive(Clone, Copy, Debug)]
pub enum ForestStep {
    Root,
    /// Reached along edge `edge`; `forward` is true when traversed src→dst.
    Via { edge: u32, forward: bool },
}

/// Unlabeled part of a retract: components, eligibility, representatives,
/// and a spanning forest rooted at the representatives.
#[derive(Clone, Debug)]
pub struct Forest {
    pub component: Vec<u32>,
    pub eligible: Vec<bool>,
    /// Representative vertex per component (only meaningful when eligible).
    pub rep: Vec<u32>,
    /// Predecessor vertex on the path to the representative.
    pub pred: Vec<u32>,
    pub step: Vec<ForestStep>,
}

/// Computes components, eligibility and a BFS spanning forest in time linear
/// in vertices plus edges. Works for any edge set; labels are not consulted.
pub fn spanning_forest(
    vertex_count: usize,
    edges: &[Edge],
    dummy_targets: &[u32],
    policy: RepPolicy,
) -> Forest {
    // Union-find to get components (undirected view).
    let mut parent: Vec<u32> = (0..vertex_count as u32).collect();
    fn find(parent: &mut [u32], mut x: u32) -> u32 {
        while parent[x as usize] != x {
            parent[x as usize] = parent[parent[x as usize] as usize];
            x = parent[x as usize];
        }
        x
    }
    for e in edges {
        let (a, b) = (find(&mut parent, e.src), find(&mut parent, e.dst));
        if a != b {
            parent[a as usize] = b;
        }
    }

    let mut comp_rep: Vec<u32> = vec![u32::MAX; vertex_count];
    let mut eligible_root = vec![true; vertex_count];
    for &d in dummy_targets {
        let r = find(&mut parent, d);
        eligible_root[r as usize] = false;
    }
    // Choose representatives per component root.
    let order: Box<dyn Iterator<Item = usize>> = match policy {
        RepPolicy::MinVertexIndex => Box::new((0..vertex_count).rev()),
        RepPolicy::MaxVertexIndex => Box::new(0..vertex_count),
    };
    for v in order {
        let r = find(&mut parent, v as u32);
        comp_rep[r as usize] = v as u32;
    }

    // Adjacency lists over the undirected view.
    let mut degree_count = vec![0u32; vertex_count];
    for e in edges {
        if e.src != e.dst {
            degree_count[e.src as usize] += 1;
            degree_count[e.dst as usize] += 1;
        }
    }
    let mut start = vec![0usize; vertex_count + 1];
    for v in 0..vertex_count {
        start[v + 1] = start[v] + degree_count[v] as usize;
    }
    let mut adj: Vec<(u32, bool)> = vec![(0, false); start[vertex_count]]; // (edge idx, forward)
    let mut fill = start.clone();
    for (i, e) in edges.iter().enumerate() {
        if e.src != e.dst {
            adj[fill[e.src as usize]] = (i as u32, true);
            fill[e.src as usize] += 1;
            adj[fill[e.dst as usize]] = (i as u32, false);
            fill[e.dst as usize] += 1;
        }
    }

    let mut component = vec![u32::MAX; vertex_count];
    let mut eligible = vec![false; vertex_count];
    let mut rep = vec![u32::MAX; vertex_count];
    let mut pred = vec![u32::MAX; vertex_count];
    let mut step: Vec<ForestStep> = vec![ForestStep::Root; vertex_count];
    let mut queue: Vec<u32> = Vec::new();
    let mut comp_id = 0u32;
    for v0 in 0..vertex_count as u32 {
        let root = find(&mut parent, v0);
        if comp_rep[root as usize] != v0 {
            continue;
        }
        // BFS from the representative.
        let this_eligible = eligible_root[root as usize];
        queue.clear();
        queue.push(v0);
        component[v0 as usize] = comp_id;
        eligible[v0 as usize] = this_eligible;
        rep[v0 as usize] = v0;
        let mut head = 0;
        while head < queue.len() {
            let v = queue[head];
            head += 1;
            for &(ei, forward) in &adj[start[v as usize]..start[v as usize + 1]] {
                let e = &edges[ei as usize];
                let w = if forward { e.dst } else { e.src };
                if component[w as usize] == u32::MAX {
                    component[w as usize] = comp_id;
                    eligible[w as usize] = this_eligible;
                    rep[w as usize] = v0;
                    pred[w as usize] = v;
                    // Forest step orientation is relative to the walk away
                    // from the representative: `forward` here means the edge
                    // points pred → vertex.
                    step[w as usize] = ForestStep::Via {
                        edge: ei,
                        forward,
                    };
                    queue.push(w);
                }
            }
        }
        comp_id += 1;
    }

    Forest {
        component,
        eligible,
        rep,
        pred,
        step,
    }
}

/// A group retract: representatives of the eligible components and the
/// transporter map `h`.
#[derive(Clone, Debug)]
pub struct GroupRetract {
    pub representatives: Vec<u32>,
    pub forest: Forest,
    /// `h[v]` defined exactly on eligible vertices; `h[v](rep) = v`.
    h: Vec<Option<Permutation>>,
}

impl GroupRetract {
    pub fn h(&self, vertex: u32) -> Option<&Permutation> {
        self.h[vertex as usize].as_ref()
    }

    pub fn is_eligible(&self, vertex: u32) -> bool {
        self.forest.eligible[vertex as usize]
    }

    pub fn representative_of(&self, vertex: u32) -> u32 {
        self.forest.rep[vertex as usize]
    }
}

/// Computes a group retract of the graph. `h` is propagated along the BFS
/// spanning forest: `h(rep) = 1`, and over a tree edge `v₁ →g v₂` we have
/// `h(v₂) = g·h(v₁)` (inverse label when the edge is traversed backwards).
pub fn group_retract(graph: &LabeledDigraph, policy: RepPolicy) -> GroupRetract {
    let forest = spanning_forest(
        graph.vertex_count,
        &graph.edges,
        &graph.dummy_targets,
        policy,
    );
    let degree = graph.labels.first().map_or(0, Permutation::degree);
    let mut h: Vec<Option<Permutation>> = vec![None; graph.vertex_count];

    // Fill h in BFS order: every predecessor is filled before its children.
    // Re-walk components from representatives using pred links is implicit:
    // vertices were discovered in BFS order, so a pass in discovery order
    // works. We do not retain that order, so instead resolve lazily.
    fn resolve(
        v: u32,
        graph: &LabeledDigraph,
        forest: &Forest,
        degree: usize,
        h: &mut Vec<Option<Permutation>>,
    ) {
        if h[v as usize].is_some() {
            return;
        }
        // Walk up to the first filled ancestor (or the representative).
        let mut path = vec![v];
        let mut cur = v;
        while !matches!(forest.step[cur as usize], ForestStep::Root) {
            let p = forest.pred[cur as usize];
            if h[p as usize].is_some() {
                break;
            }
            path.push(p);
            cur = p;
        }
        while let Some(x) = path.pop() {
            let val = match forest.step[x as usize] {
                ForestStep::Root => Permutation::identity(degree),
                ForestStep::Via { edge, forward } => {
                    let g = graph.label(graph.edges[edge as usize].label);
                    let hp = h[forest.pred[x as usize] as usize]
                        .as_ref()
                        .expect("predecessor resolved");
                    if forward {
                        g.compose(hp)
                    } else {
                        g.inverse().compose(hp)
                    }
                }
            };
            h[x as usize] = Some(val);
        }
    }

    for v in 0..graph.vertex_count as u32 {
        if forest.eligible[v as usize] {
            resolve(v, graph, &forest, degree, &mut h);
        }
    }

    let mut representatives: Vec<u32> = (0..graph.vertex_count as u32)
        .filter(|&v| forest.eligible[v as usize] && forest.rep[v as usize] == v)
        .collect();
    representatives.sort_unstable();

    GroupRetract {
        representatives,
        forest,
        h,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn perm(cycles: &[&[u16]], n: usize) -> Permutation {
        Permutation::from_cycles(n, cycles).unwrap()
    }

    #[test]
    fn edgeless_graph_all_representatives() {
        let graph = LabeledDigraph::new(3, vec![]);
        let r = group_retract(&graph, RepPolicy::MinVertexIndex);
        assert_eq!(r.representatives, vec![0, 1, 2]);
        for v in 0..3 {
            assert!(r.h(v).unwrap().is_identity());
        }
    }

    #[test]
    fn dummy_edge_marks_component_ineligible() {
        let mut graph = LabeledDigraph::new(2, vec![]);
        graph.add_dummy_edge(1);
        let r = group_retract(&graph, RepPolicy::MinVertexIndex);
        assert_eq!(r.representatives, vec![0]);
        assert!(r.h(1).is_none());
        assert!(!r.is_eligible(1));
    }

    #[test]
    fn chain_propagates_label() {
        // Vertices stand for points 0 and 1 of a 3-point domain; the edge
        // v0 → v1 carries g = (0 1 2), and indeed g(0) = 1.
        let g = perm(&[&[0, 1, 2]], 3);
        let mut graph = LabeledDigraph::new(2, vec![g.clone()]);
        graph.add_edge(0, 1, 0);
        graph.validate(|v| v as u16).unwrap();
        let r = group_retract(&graph, RepPolicy::MinVertexIndex);
        assert_eq!(r.representatives, vec![0]);
        assert_eq!(r.h(1).unwrap(), &g);
        assert!(r.h(0).unwrap().is_identity());
    }

    #[test]
    fn reversed_edge_uses_inverse_label() {
        let g = perm(&[&[0, 1, 2]], 3);
        let mut graph = LabeledDigraph::new(2, vec![g.clone()]);
        // Edge from vertex 1 to vertex 0: g(1) = 2 would be wrong, so label
        // the edge with the permutation sending point 1 to point 0.
        let ginv = g.inverse();
        graph.add_edge(1, 0, 0);
        // Relabel: the single label must map point(1) = 1 to point(0) = 0.
        let mut graph2 = LabeledDigraph::new(2, vec![ginv.clone()]);
        graph2.add_edge(1, 0, 0);
        graph2.validate(|v| v as u16).unwrap();
        drop(graph);
        let r = group_retract(&graph2, RepPolicy::MinVertexIndex);
        // Representative is vertex 0; vertex 1 is reached traversing the
        // edge backwards, so h(1) = ginv⁻¹ = g.
        assert_eq!(r.representatives, vec![0]);
        assert_eq!(r.h(1).unwrap(), &g);
    }

    #[test]
    fn validate_catches_bad_label() {
        let g = perm(&[&[0, 1]], 3);
        let mut graph = LabeledDigraph::new(3, vec![g]);
        graph.add_edge(0, 2, 0); // g(0) = 1 ≠ 2
        assert!(matches!(
            graph.validate(|v| v as u16),
            Err(RetractError::LabelInconsistency { .. })
        ));
    }

    #[test]
    fn policy_changes_representative_not_partition() {
        let g = perm(&[&[0, 1, 2]], 3);
        let mut graph = LabeledDigraph::new(3, vec![g.clone()]);
        graph.add_edge(0, 1, 0);
        graph.add_edge(1, 2, 0);
        let rmin = group_retract(&graph, RepPolicy::MinVertexIndex);
        let rmax = group_retract(&graph, RepPolicy::MaxVertexIndex);
        assert_eq!(rmin.representatives, vec![0]);
        assert_eq!(rmax.representatives, vec![2]);
        assert_eq!(rmin.forest.component, rmax.forest.component);
        // h property holds for both.
        for r in [&rmin, &rmax] {
            let rep = r.representatives[0] as u16;
            for v in 0..3u32 {
                assert_eq!(r.h(v).unwrap().apply(rep), v as u16);
            }
        }
    }

    #[test]
    fn loops_are_retained_but_do_not_join() {
        let id3 = Permutation::identity(3);
        let mut graph = LabeledDigraph::new(2, vec![id3]);
        graph.add_edge(0, 0, 0); // loop
        let r = group_retract(&graph, RepPolicy::MinVertexIndex);
        assert_eq!(r.representatives, vec![0, 1]);
        assert_eq!(graph.edges().len(), 1);
    }
}
