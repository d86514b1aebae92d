//! Orbit lookup trees: isomorph-free representatives for the action of a
//! finite group on k-element subsets of a finite set, with forbidden
//! configurations pruned during construction.
//!
//! Nodes at depth k are labeled by k-subsets (with a designated ordering).
//! Green nodes are orbit representatives carrying their setwise stabilizers;
//! red nodes carry a transporter to the green node of their orbit, or no
//! transporter at all when the subset is forbidden. Each extension step per
//! green node `U` builds the Cayley graph of `G_U` on the remaining points,
//! retracts it to pick candidate children, then glues candidates across
//! parents by rewriting each new subset through the existing tree and
//! retracting the resulting graph.

use std::collections::HashMap;
use std::io::{self, BufRead, Write};
use std::ops::Range;
use std::sync::OnceLock;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::permgroup::{PermError, PermGroup, Permutation, Point};
use crate::retract::{spanning_forest, Edge as RetractEdge, ForestStep, RepPolicy};

#[derive(Debug, Error)]
pub enum TreeError {
    #[error(transparent)]
    Perm(#[from] PermError),
    #[error("sequence has duplicate elements")]
    DuplicateElements,
    #[error("point {point} out of range for domain of size {degree}")]
    PointOutOfRange { point: usize, degree: usize },
    #[error("depth {requested} exceeds tree depth {depth}")]
    DepthExceeded { depth: usize, requested: usize },
    #[error("eligibility oracle is inconsistent: {detail}")]
    OracleInconsistency { detail: String },
    #[error("tree integrity violated: {detail}")]
    Integrity { detail: String },
    #[error("verification failed: {detail}")]
    VerifyFailed { detail: String },
    #[error("malformed tree file: {0}")]
    Parse(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    Eligible,
    Forbidden,
}

/// Decides whether the underlying set of a tuple contains a forbidden
/// configuration. Consulted only on tuples whose proper prefixes are
/// eligible, so checks may focus on configurations involving the last
/// element. Implementations must be invariant under the group action and
/// monotone (a superset of a forbidden set is forbidden).
pub trait EligibilityOracle: Send + Sync {
    fn judge(&self, tuple: &[Point]) -> Verdict;
}

impl<F> EligibilityOracle for F
where
    F: Fn(&[Point]) -> Verdict + Send + Sync,
{
    fn judge(&self, tuple: &[Point]) -> Verdict {
        self(tuple)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Color {
    Uncolored,
    Green,
    Red,
}

/// Stabilizer data kept on green nodes: a reduced generating set and the
/// exact order.
#[derive(Clone, Debug)]
pub struct StabData {
    pub gens: Vec<Permutation>,
    pub order: u128,
}

/// Per-point step of the Cayley-retract transporter map `h_U` on a green
/// node, packed as (predecessor point, code). Code values: `CODE_ROOT` for
/// component representatives, `CODE_IN_U` for points of `U`, otherwise
/// `2*gen + forward`.
#[derive(Clone, Debug)]
struct HData {
    pred: Vec<Point>,
    code: Vec<u16>,
    gens: Vec<Permutation>,
    gen_invs: Vec<Permutation>,
}

const CODE_ROOT: u16 = u16::MAX;
const CODE_IN_U: u16 = u16::MAX - 1;

/// How a red node's transporter is reconstructed: the spanning-forest step
/// toward its component's green representative. Edge labels are reproduced
/// on demand by re-running the rewrite lookup that created them.
#[derive(Debug)]
struct PendingTransporter {
    pred: u32,
    /// The rewrite (node, j) whose lookup produced this edge.
    edge_node: u32,
    edge_j: u8,
    forward: bool,
    green: u32,
    cache: OnceLock<Permutation>,
}

#[derive(Debug)]
enum Transporter {
    /// Green nodes: the identity.
    Identity,
    Red(PendingTransporter),
    /// Forbidden nodes have no transporter.
    None,
}

#[derive(Debug)]
struct Node {
    label: Vec<Point>,
    sorted: Vec<Point>,
    parent: u32,
    depth: u8,
    color: Color,
    oracle_forbidden: bool,
    transporter: Transporter,
    stab: Option<StabData>,
    h_data: Option<HData>,
}

pub const NO_PARENT: u32 = u32::MAX;

#[derive(Clone, Copy, Debug)]
pub struct TreeConfig {
    pub seed: u64,
    /// Extra random elements of `G_U` appended to the Cayley generating
    /// sequence of each green node (0 = use the stored generators alone).
    pub extra_random_generators: usize,
    /// Run label-consistency validation while extending.
    pub validate: bool,
}

impl Default for TreeConfig {
    fn default() -> Self {
        TreeConfig {
            seed: 0,
            extra_random_generators: 0,
            validate: false,
        }
    }
}

pub struct OrbitTree {
    group: PermGroup,
    oracle: Option<Box<dyn EligibilityOracle>>,
    config: TreeConfig,
    nodes: Vec<Node>,
    levels: Vec<Range<usize>>,
    set_index: HashMap<Vec<Point>, u32>,
    identity: OnceLock<Permutation>,
}

/// Result of looking a subset up in the tree.
#[derive(Clone, Debug)]
pub enum FindOutcome {
    /// `g` maps the green node's set onto the queried set.
    Found { node: u32, g: Permutation },
    /// The queried set contains a forbidden subset; `g` maps the witness
    /// node's set into the queried set.
    Ineligible { witness: u32, g: Permutation },
}

#[derive(Clone, Debug)]
pub struct GreenNode {
    pub id: u32,
    pub label: Vec<Point>,
    pub sorted: Vec<Point>,
    pub stab_order: u128,
}

#[derive(Clone, Debug)]
pub struct VerifyReport {
    pub depth: usize,
    pub trials: usize,
    pub found_eligible: usize,
    pub found_forbidden: usize,
    /// `(Σ [G:G_U], C(|S|, k))` when the tree has no oracle.
    pub binomial_identity: Option<(u128, u128)>,
}

impl OrbitTree {
    /// Depth-0 tree: a single green root labeled by the empty set, whose
    /// stabilizer is the whole group (generators taken verbatim).
    pub fn new(
        group: PermGroup,
        oracle: Option<Box<dyn EligibilityOracle>>,
        config: TreeConfig,
    ) -> Self {
        let order = group.order();
        let root = Node {
            label: Vec::new(),
            sorted: Vec::new(),
            parent: NO_PARENT,
            depth: 0,
            color: Color::Green,
            oracle_forbidden: false,
            transporter: Transporter::Identity,
            stab: Some(StabData {
                gens: group.generators().to_vec(),
                order,
            }),
            h_data: None,
        };
        let mut set_index = HashMap::new();
        set_index.insert(Vec::new(), 0u32);
        OrbitTree {
            group,
            oracle,
            config,
            nodes: vec![root],
            levels: vec![0..1],
            set_index,
            identity: OnceLock::new(),
        }
    }

    pub fn group(&self) -> &PermGroup {
        &self.group
    }

    pub fn domain_size(&self) -> usize {
        self.group.degree()
    }

    pub fn depth(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn seed(&self) -> u64 {
        self.config.seed
    }

    pub fn has_oracle(&self) -> bool {
        self.oracle.is_some()
    }

    /// Green nodes at a depth, with stabilizer orders.
    pub fn green_nodes(&self, depth: usize) -> Result<Vec<GreenNode>, TreeError> {
        if depth > self.depth() {
            return Err(TreeError::DepthExceeded {
                depth: self.depth(),
                requested: depth,
            });
        }
        Ok(self.levels[depth]
            .clone()
            .filter(|&i| self.nodes[i].color == Color::Green)
            .map(|i| GreenNode {
                id: i as u32,
                label: self.nodes[i].label.clone(),
                sorted: self.nodes[i].sorted.clone(),
                stab_order: self.nodes[i].stab.as_ref().expect("green has stab").order,
            })
            .collect())
    }

    pub fn stabilizer_of(&self, id: u32) -> Option<&StabData> {
        self.nodes[id as usize].stab.as_ref()
    }

    pub fn node_label(&self, id: u32) -> &[Point] {
        &self.nodes[id as usize].label
    }

    pub fn node_sorted(&self, id: u32) -> &[Point] {
        &self.nodes[id as usize].sorted
    }

    pub fn node_color(&self, id: u32) -> Color {
        self.nodes[id as usize].color
    }

    pub fn node_parent(&self, id: u32) -> u32 {
        self.nodes[id as usize].parent
    }

    pub fn node_is_forbidden(&self, id: u32) -> bool {
        self.nodes[id as usize].oracle_forbidden
    }

    pub fn nodes_at_depth(&self, depth: usize) -> Range<usize> {
        self.levels[depth].clone()
    }

    /// The transporter `g_U` of an eligible node (`g_U⁻¹(U)` is green);
    /// `None` for forbidden nodes. Lazily materialized and cached.
    pub fn transporter_of(&self, id: u32) -> Option<&Permutation> {
        match &self.nodes[id as usize].transporter {
            Transporter::Identity => Some(self.identity_perm()),
            Transporter::None => None,
            Transporter::Red(p) => {
                if p.cache.get().is_none() {
                    self.materialize_transporter_chain(id);
                }
                Some(p.cache.get().expect("just materialized"))
            }
        }
    }

    /// Fills transporter caches along the spanning-forest path of `id`,
    /// iteratively so deep components cannot overflow the stack.
    fn materialize_transporter_chain(&self, id: u32) {
        let mut path: Vec<u32> = Vec::new();
        let mut cur = id;
        loop {
            match &self.nodes[cur as usize].transporter {
                Transporter::Identity => break,
                Transporter::None => unreachable!("forest predecessor must be eligible"),
                Transporter::Red(p) => {
                    if p.cache.get().is_some() {
                        break;
                    }
                    path.push(cur);
                    cur = p.pred;
                }
            }
        }
        for &nid in path.iter().rev() {
            let Transporter::Red(p) = &self.nodes[nid as usize].transporter else {
                unreachable!()
            };
            let label = self.edge_label(p.edge_node, p.edge_j);
            let pred_t = match &self.nodes[p.pred as usize].transporter {
                Transporter::Identity => Permutation::identity(self.domain_size()),
                Transporter::Red(pp) => pp.cache.get().expect("filled in order").clone(),
                Transporter::None => unreachable!(),
            };
            let val = if p.forward {
                label.compose(&pred_t)
            } else {
                label.inverse().compose(&pred_t)
            };
            // Another thread may have raced us; either value is identical.
            let _ = p.cache.set(val);
        }
    }

    fn identity_perm(&self) -> &Permutation {
        self.identity
            .get_or_init(|| Permutation::identity(self.domain_size()))
    }

    /// Transporter map `h_U` of a green node: returns the component
    /// representative `x_U(y)` and an element of `G_U` mapping it to `y`.
    pub fn h_transporter(&self, id: u32, y: Point) -> Result<(Point, Permutation), TreeError> {
        let node = &self.nodes[id as usize];
        let h = node.h_data.as_ref().ok_or_else(|| TreeError::Integrity {
            detail: format!("node {id} has no transporter map"),
        })?;
        if h.code[y as usize] == CODE_IN_U {
            return Err(TreeError::Integrity {
                detail: format!("point {y} lies in the node's subset"),
            });
        }
        // Walk to the representative, then fold the labels back down.
        let mut path: Vec<(u16, Point)> = Vec::new();
        let mut cur = y;
        while h.code[cur as usize] != CODE_ROOT {
            path.push((h.code[cur as usize], cur));
            cur = h.pred[cur as usize];
        }
        let rep = cur;
        let mut g = Permutation::identity(self.domain_size());
        for &(code, _) in path.iter().rev() {
            let gen = (code >> 1) as usize;
            let forward = code & 1 == 1;
            g = if forward {
                h.gens[gen].compose(&g)
            } else {
                h.gen_invs[gen].compose(&g)
            };
        }
        debug_assert_eq!(g.apply(rep), y);
        Ok((rep, g))
    }
}

// The identity permutation cache needs to live on the struct; declared here
// to keep the field list in one place.
impl OrbitTree {
    fn edge_label(&self, node: u32, j: u8) -> Permutation {
        match self.rewrite_find(node, j) {
            Ok(FindInner::Found { g, .. }) => g,
            other => panic!("edge label rewrite must resolve, got {other:?}"),
        }
    }
}

#[derive(Debug)]
enum FindInner {
    Found { node: u32, g: Permutation },
    Ineligible { witness: u32, g: Permutation },
}

impl OrbitTree {
    /// Looks up the set `{x₁,…,x_k}` (given as a sequence of distinct
    /// points, `k ≤ depth`).
    pub fn find(&self, seq: &[Point]) -> Result<FindOutcome, TreeError> {
        let n = self.domain_size();
        for &x in seq {
            if (x as usize) >= n {
                return Err(TreeError::PointOutOfRange {
                    point: x as usize,
                    degree: n,
                });
            }
        }
        let mut sorted = seq.to_vec();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(TreeError::DuplicateElements);
        }
        if seq.len() > self.depth() {
            return Err(TreeError::DepthExceeded {
                depth: self.depth(),
                requested: seq.len(),
            });
        }
        match self.find_inner(seq, false)? {
            FindInner::Found { node, g } => Ok(FindOutcome::Found { node, g }),
            FindInner::Ineligible { witness, g } => Ok(FindOutcome::Ineligible { witness, g }),
        }
    }

    /// The recursive lookup. With `modified` the final transporter step is
    /// skipped, so the returned node may be red; used while building the
    /// next depth, where those transporters do not exist yet.
    fn find_inner(&self, seq: &[Point], modified: bool) -> Result<FindInner, TreeError> {
        let k = seq.len();
        if k == 0 {
            return Ok(FindInner::Found {
                node: 0,
                g: Permutation::identity(self.domain_size()),
            });
        }
        let prefix = &seq[..k - 1];
        let mut sorted_prefix = prefix.to_vec();
        sorted_prefix.sort_unstable();

        let (uprime, g0) = match self.set_index.get(&sorted_prefix) {
            Some(&id) => {
                let node = &self.nodes[id as usize];
                match (&node.color, &node.transporter) {
                    (Color::Green, _) => (id, None),
                    (Color::Red, Transporter::Red(p)) => {
                        let g = self
                            .transporter_of(id)
                            .expect("red eligible node has transporter")
                            .clone();
                        (p.green, Some(g))
                    }
                    (Color::Red, Transporter::None) => {
                        return Ok(FindInner::Ineligible {
                            witness: id,
                            g: Permutation::identity(self.domain_size()),
                        });
                    }
                    other => {
                        return Err(TreeError::Integrity {
                            detail: format!("prefix node {id} in unexpected state {other:?}"),
                        })
                    }
                }
            }
            None => match self.find_inner(prefix, false)? {
                FindInner::Found { node, g } => (node, Some(g)),
                ineligible => return Ok(ineligible),
            },
        };

        let x_k = seq[k - 1];
        let y = match &g0 {
            None => x_k,
            Some(g) => {
                // g0⁻¹(x_k) without materializing the inverse.
                g.images()
                    .iter()
                    .position(|&im| im == x_k)
                    .expect("bijection") as Point
            }
        };
        let (rep, h) = self.h_transporter(uprime, y)?;
        let mut u1_sorted = self.nodes[uprime as usize].sorted.clone();
        u1_sorted.push(rep);
        u1_sorted.sort_unstable();
        let &u1 = self
            .set_index
            .get(&u1_sorted)
            .ok_or_else(|| TreeError::Integrity {
                detail: format!("child of node {uprime} through {rep} missing"),
            })?;
        let g1 = match g0 {
            None => h,
            Some(g) => g.compose(&h),
        };

        if modified {
            return Ok(FindInner::Found { node: u1, g: g1 });
        }
        match &self.nodes[u1 as usize].transporter {
            Transporter::Identity => Ok(FindInner::Found { node: u1, g: g1 }),
            Transporter::Red(p) => {
                let g2 = self
                    .transporter_of(u1)
                    .expect("red eligible node has transporter")
                    .clone();
                Ok(FindInner::Found {
                    node: p.green,
                    g: g1.compose(&g2),
                })
            }
            Transporter::None => Ok(FindInner::Ineligible {
                witness: u1,
                g: g1,
            }),
        }
    }

    /// The rewrite lookup for node `[x₁..x_{n+1}]` and index `j ∈ 1..=n`:
    /// looks up `x₁,…,x_{j-1},x_{n+1},x_{j+1},…,x_n,x_j` without the final
    /// transporter step.
    fn rewrite_find(&self, node: u32, j: u8) -> Result<FindInner, TreeError> {
        let label = &self.nodes[node as usize].label;
        let m = label.len(); // n + 1
        let j = j as usize;
        debug_assert!(j >= 1 && j < m);
        let mut seq = Vec::with_capacity(m);
        seq.extend_from_slice(&label[..j - 1]);
        seq.push(label[m - 1]);
        seq.extend_from_slice(&label[j..m - 1]);
        seq.push(label[j - 1]);
        self.find_inner(&seq, true)
    }
}

struct NewNodeDraft {
    label: Vec<Point>,
    sorted: Vec<Point>,
    parent: u32,
}

enum JudgeResult {
    Forbidden,
    Eligible { edges: Vec<(u32, u8)> }, // (source node, j) with target implied
}

impl OrbitTree {
    pub fn extend_to(&mut self, depth: usize) -> Result<(), TreeError> {
        while self.depth() < depth {
            self.extend()?;
        }
        Ok(())
    }

    /// Extends the tree by one depth.
    pub fn extend(&mut self) -> Result<(), TreeError> {
        let n = self.depth();
        let domain = self.domain_size();

        // Step 1: per green node at depth n, retract the Cayley graph of its
        // stabilizer on the remaining points; component representatives
        // become candidate children.
        let green_ids: Vec<u32> = self.levels[n]
            .clone()
            .filter(|&i| self.nodes[i].color == Color::Green)
            .map(|i| i as u32)
            .collect();

        let mut drafts: Vec<NewNodeDraft> = Vec::new();
        for &uid in &green_ids {
            let reps = self.fill_h_data(uid)?;
            let parent_label = self.nodes[uid as usize].label.clone();
            let parent_sorted = self.nodes[uid as usize].sorted.clone();
            for rep in reps {
                let mut label = parent_label.clone();
                label.push(rep);
                let mut sorted = parent_sorted.clone();
                sorted.push(rep);
                sorted.sort_unstable();
                drafts.push(NewNodeDraft {
                    label,
                    sorted,
                    parent: uid,
                });
            }
        }

        // Deterministic node order: lexicographic on the sorted subsets.
        // When the same subset appears under two parents, keep the first.
        drafts.sort_by(|a, b| a.sorted.cmp(&b.sorted).then(a.parent.cmp(&b.parent)));
        drafts.dedup_by(|b, a| a.sorted == b.sorted);

        let first_new = self.nodes.len();
        for d in drafts {
            let id = self.nodes.len() as u32;
            self.set_index.insert(d.sorted.clone(), id);
            self.nodes.push(Node {
                label: d.label,
                sorted: d.sorted,
                parent: d.parent,
                depth: (n + 1) as u8,
                color: Color::Uncolored,
                oracle_forbidden: false,
                transporter: Transporter::None,
                stab: None,
                h_data: None,
            });
        }
        let new_range = first_new..self.nodes.len();

        // Step 2: judge every new node and compute its rewrite edges. Each
        // edge (U₁ → U) is stored as (U₁, j); the label is reproducible.
        let judgments: Vec<Result<JudgeResult, TreeError>> = new_range
            .clone()
            .into_par_iter()
            .map(|i| self.judge_node(i as u32, n))
            .collect();

        let mut edges: Vec<RetractEdge> = Vec::new();
        let mut edge_js: Vec<u8> = Vec::new();
        let mut dummy_targets: Vec<u32> = Vec::new();
        let mut forbidden_flags = vec![false; new_range.len()];
        for (local, j) in judgments.into_iter().enumerate() {
            match j? {
                JudgeResult::Forbidden => {
                    forbidden_flags[local] = true;
                    dummy_targets.push(local as u32);
                }
                JudgeResult::Eligible { edges: es } => {
                    for (src_node, j) in es {
                        edges.push(RetractEdge {
                            src: src_node - first_new as u32,
                            dst: local as u32,
                            label: edge_js.len() as u32,
                        });
                        edge_js.push(j);
                    }
                }
            }
        }

        // Step 3: retract the rewrite graph; representatives turn green.
        let forest = spanning_forest(
            new_range.len(),
            &edges,
            &dummy_targets,
            RepPolicy::MinVertexIndex,
        );

        for local in 0..new_range.len() {
            let id = (first_new + local) as u32;
            if !forest.eligible[local] {
                // Forbidden directly or G-equivalent to a forbidden node.
                if !forbidden_flags[local] {
                    return Err(TreeError::OracleInconsistency {
                        detail: format!(
                            "node {:?} judged eligible but its orbit contains a forbidden node",
                            self.nodes[id as usize].sorted
                        ),
                    });
                }
                self.nodes[id as usize].color = Color::Red;
                self.nodes[id as usize].oracle_forbidden = true;
                continue;
            }
            if forbidden_flags[local] {
                return Err(TreeError::OracleInconsistency {
                    detail: format!(
                        "node {:?} judged forbidden but its orbit contains eligible nodes",
                        self.nodes[id as usize].sorted
                    ),
                });
            }
            let rep_local = forest.rep[local];
            if rep_local == local as u32 {
                self.nodes[id as usize].color = Color::Green;
                self.nodes[id as usize].transporter = Transporter::Identity;
            } else {
                let (edge, forward) = match forest.step[local] {
                    ForestStep::Via { edge, forward } => (edge, forward),
                    ForestStep::Root => unreachable!("non-representative has a forest step"),
                };
                let e = &edges[edge as usize];
                let j = edge_js[e.label as usize];
                // The rewrite target is the edge's dst vertex.
                let edge_node = first_new as u32 + e.dst;
                self.nodes[id as usize].color = Color::Red;
                self.nodes[id as usize].transporter = Transporter::Red(PendingTransporter {
                    pred: first_new as u32 + forest.pred[local],
                    edge_node,
                    edge_j: j,
                    forward,
                    green: first_new as u32 + rep_local,
                    cache: OnceLock::new(),
                });
            }
        }

        self.levels.push(new_range.clone());

        // Step 4: assemble stabilizers of the new green nodes from the point
        // stabilizer in the parent plus retract-conjugated edge labels.
        let mut comp_edges: HashMap<u32, Vec<usize>> = HashMap::new();
        for (ei, e) in edges.iter().enumerate() {
            if forest.eligible[e.dst as usize] {
                comp_edges
                    .entry(forest.component[e.dst as usize])
                    .or_default()
                    .push(ei);
            }
        }

        for local in 0..new_range.len() {
            let id = (first_new + local) as u32;
            if self.nodes[id as usize].color != Color::Green {
                continue;
            }
            let parent = self.nodes[id as usize].parent;
            let last = *self.nodes[id as usize].label.last().expect("nonempty");
            let parent_stab = self.nodes[parent as usize]
                .stab
                .as_ref()
                .expect("parent is green");
            let parent_group =
                PermGroup::new(domain, parent_stab.gens.clone()).map_err(TreeError::Perm)?;
            let point_stab = parent_group.point_stabilizer(last)?;

            let mut candidates: Vec<Permutation> = point_stab.generators().to_vec();
            if let Some(edge_ids) = comp_edges.get(&forest.component[local]) {
                for &ei in edge_ids {
                    let e = &edges[ei];
                    let j = edge_js[e.label as usize];
                    let label = self.edge_label(first_new as u32 + e.dst, j);
                    let g_src = self
                        .transporter_of(first_new as u32 + e.src)
                        .expect("eligible")
                        .clone();
                    let g_dst = self
                        .transporter_of(first_new as u32 + e.dst)
                        .expect("eligible");
                    // g_{U₂}⁻¹ · g · g_{U₁} stabilizes the green subset.
                    let elt = g_dst.inverse().compose(&label).compose(&g_src);
                    candidates.push(elt);
                }
            }
            let (stab_group, order) =
                PermGroup::from_generators_reduced(domain, &[], candidates)?;
            if self.config.validate {
                let set = &self.nodes[id as usize].sorted;
                for g in stab_group.generators() {
                    if &g.apply_set(set) != set {
                        return Err(TreeError::Integrity {
                            detail: format!("stabilizer generator moves green set {set:?}"),
                        });
                    }
                }
            }
            self.nodes[id as usize].stab = Some(StabData {
                gens: stab_group.generators().to_vec(),
                order,
            });
        }

        Ok(())
    }

    /// Builds the Cayley retract data (`h_U`) for a green node and returns
    /// the component representatives in increasing point order.
    fn fill_h_data(&mut self, uid: u32) -> Result<Vec<Point>, TreeError> {
        let domain = self.domain_size();
        let node = &self.nodes[uid as usize];
        let stab = node.stab.as_ref().expect("green node has stab");
        let mut gens = stab.gens.clone();
        if self.config.extra_random_generators > 0 && !gens.is_empty() {
            let group = PermGroup::new(domain, gens.clone())?;
            let mut sampler = group
                .random_sampler(self.config.seed ^ (0x9E37_79B9_7F4A_7C15u64.wrapping_mul(uid as u64 + 1)));
            for _ in 0..self.config.extra_random_generators {
                gens.push(sampler.next_element());
            }
        }
        let gen_invs: Vec<Permutation> = gens.iter().map(Permutation::inverse).collect();

        let mut pred = vec![0 as Point; domain];
        let mut code = vec![CODE_ROOT; domain];
        for &x in &self.nodes[uid as usize].sorted {
            code[x as usize] = CODE_IN_U;
        }
        let in_u = |p: Point, sorted: &[Point]| sorted.binary_search(&p).is_ok();

        let mut reps = Vec::new();
        let mut visited = vec![false; domain];
        let sorted = self.nodes[uid as usize].sorted.clone();
        for &x in &sorted {
            visited[x as usize] = true;
        }
        let mut queue: Vec<Point> = Vec::new();
        for start in 0..domain as Point {
            if visited[start as usize] {
                continue;
            }
            // `start` is the smallest point of its component.
            reps.push(start);
            visited[start as usize] = true;
            code[start as usize] = CODE_ROOT;
            queue.clear();
            queue.push(start);
            let mut head = 0;
            while head < queue.len() {
                let v = queue[head];
                head += 1;
                for (gi, (g, ginv)) in gens.iter().zip(&gen_invs).enumerate() {
                    for (w, forward) in [(g.apply(v), true), (ginv.apply(v), false)] {
                        if !visited[w as usize] {
                            debug_assert!(!in_u(w, &sorted));
                            visited[w as usize] = true;
                            pred[w as usize] = v;
                            code[w as usize] = ((gi as u16) << 1) | (forward as u16);
                            queue.push(w);
                        }
                    }
                }
            }
        }

        self.nodes[uid as usize].h_data = Some(HData {
            pred,
            code,
            gens,
            gen_invs,
        });
        Ok(reps)
    }

    /// Step 2 for one new node: oracle verdict plus rewrite edges.
    fn judge_node(&self, id: u32, n: usize) -> Result<JudgeResult, TreeError> {
        let label = &self.nodes[id as usize].label;
        let verdict = match &self.oracle {
            None => Verdict::Eligible,
            Some(o) => o.judge(label),
        };
        if verdict == Verdict::Forbidden {
            return Ok(JudgeResult::Forbidden);
        }
        let mut edges = Vec::with_capacity(n);
        for j in 1..=n {
            match self.rewrite_find(id, j as u8)? {
                FindInner::Found { node, .. } => edges.push((node, j as u8)),
                FindInner::Ineligible { witness, .. } => {
                    return Err(TreeError::OracleInconsistency {
                        detail: format!(
                            "node {:?} passed the oracle but contains the forbidden subset {:?}",
                            self.nodes[id as usize].sorted,
                            self.nodes[witness as usize].sorted
                        ),
                    });
                }
            }
        }
        Ok(JudgeResult::Eligible { edges })
    }
}

impl OrbitTree {
    /// Spot-verifies the tree at a depth: random subsets must resolve to a
    /// green node with a valid transporter (or a certified forbidden
    /// witness), and without an oracle the green indices must sum to the
    /// binomial count.
    pub fn verify(&self, depth: usize, trials: usize) -> Result<VerifyReport, TreeError> {
        if depth > self.depth() {
            return Err(TreeError::DepthExceeded {
                depth: self.depth(),
                requested: depth,
            });
        }
        let domain = self.domain_size();
        let mut rng =
            ChaCha8Rng::seed_from_u64(self.config.seed ^ ((depth as u64) << 32) ^ 0x5EED_1234);
        let mut found_eligible = 0;
        let mut found_forbidden = 0;
        for _ in 0..trials {
            let subset = rand::seq::index::sample(&mut rng, domain, depth)
                .into_iter()
                .map(|i| i as Point)
                .collect::<Vec<_>>();
            match self.find(&subset)? {
                FindOutcome::Found { node, g } => {
                    if self.nodes[node as usize].color != Color::Green {
                        return Err(TreeError::VerifyFailed {
                            detail: format!("find returned non-green node for {subset:?}"),
                        });
                    }
                    let image = g.apply_set(&self.nodes[node as usize].sorted);
                    let mut expect = subset.clone();
                    expect.sort_unstable();
                    if image != expect {
                        return Err(TreeError::VerifyFailed {
                            detail: format!("transporter does not map node onto {subset:?}"),
                        });
                    }
                    found_eligible += 1;
                }
                FindOutcome::Ineligible { witness, g } => {
                    let wnode = &self.nodes[witness as usize];
                    if !wnode.oracle_forbidden {
                        return Err(TreeError::VerifyFailed {
                            detail: format!("witness {witness} is not oracle-forbidden"),
                        });
                    }
                    if let Some(o) = &self.oracle {
                        if o.judge(&wnode.label) != Verdict::Forbidden {
                            return Err(TreeError::VerifyFailed {
                                detail: format!("witness {witness} no longer judged forbidden"),
                            });
                        }
                    }
                    let image = g.apply_set(&wnode.sorted);
                    let mut sorted = subset.clone();
                    sorted.sort_unstable();
                    if !image.iter().all(|x| sorted.binary_search(x).is_ok()) {
                        return Err(TreeError::VerifyFailed {
                            detail: format!("witness image not contained in {subset:?}"),
                        });
                    }
                    found_forbidden += 1;
                }
            }
        }

        let binomial_identity = if self.oracle.is_none() {
            let group_order = self.group.order();
            let mut sum: u128 = 0;
            for g in self.green_nodes(depth)? {
                sum += group_order / g.stab_order;
            }
            let expected = binomial(domain as u128, depth as u128);
            if sum != expected {
                return Err(TreeError::VerifyFailed {
                    detail: format!(
                        "orbit sizes at depth {depth} sum to {sum}, expected C({domain},{depth}) = {expected}"
                    ),
                });
            }
            Some((sum, expected))
        } else {
            None
        };

        Ok(VerifyReport {
            depth,
            trials,
            found_eligible,
            found_forbidden,
            binomial_identity,
        })
    }
}

pub fn binomial(n: u128, k: u128) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut num: u128 = 1;
    for i in 0..k {
        num = num * (n - i) / (i + 1);
    }
    num
}

impl OrbitTree {
    /// Writes the line-oriented tree format: a header, the group generators,
    /// then one record per node (depth, parent, label, color, transporter
    /// images) plus stabilizer generators for green nodes. Byte-stable for a
    /// fixed seed and configuration.
    pub fn write_text(&self, w: &mut impl Write) -> io::Result<()> {
        writeln!(w, "orbit-tree v1")?;
        writeln!(w, "domain {}", self.domain_size())?;
        writeln!(w, "seed {}", self.config.seed)?;
        writeln!(w, "depth {}", self.depth())?;
        writeln!(w, "group {}", self.group.generators().len())?;
        for g in self.group.generators() {
            writeln!(w, "{g}")?;
        }
        writeln!(w, "nodes {}", self.nodes.len())?;
        for (i, node) in self.nodes.iter().enumerate() {
            let parent = if node.parent == NO_PARENT {
                "-".to_string()
            } else {
                node.parent.to_string()
            };
            let label = if node.label.is_empty() {
                "-".to_string()
            } else {
                node.label
                    .iter()
                    .map(|x| x.to_string())
                    .collect::<Vec<_>>()
                    .join(",")
            };
            let color = match (node.color, &node.transporter) {
                (Color::Green, _) => "green",
                (Color::Red, Transporter::None) => "forbidden",
                (Color::Red, _) => "red",
                (Color::Uncolored, _) => "uncolored",
            };
            write!(w, "node {i} {} {parent} {label} {color}", node.depth)?;
            match &node.transporter {
                Transporter::Identity => writeln!(w, " id")?,
                Transporter::None => writeln!(w, " -")?,
                Transporter::Red(_) => {
                    let g = self.transporter_of(i as u32).expect("eligible");
                    writeln!(w, " {g}")?;
                }
            }
            if let Some(stab) = &node.stab {
                writeln!(w, "stab {} {}", stab.order, stab.gens.len())?;
                for g in &stab.gens {
                    writeln!(w, "{g}")?;
                }
            }
        }
        Ok(())
    }
}

/// A tree file read back: node records only (no lookup machinery).
#[derive(Clone, Debug)]
pub struct LoadedTree {
    pub domain: usize,
    pub seed: u64,
    pub depth: usize,
    pub group_generators: Vec<Permutation>,
    pub records: Vec<LoadedNode>,
}

#[derive(Clone, Debug)]
pub struct LoadedNode {
    pub depth: usize,
    pub parent: Option<u32>,
    pub label: Vec<Point>,
    pub color: String,
    pub transporter: Option<Permutation>,
    pub stab_order: Option<u128>,
    pub stab_gens: Vec<Permutation>,
}

pub fn read_tree_text(r: &mut impl BufRead) -> Result<LoadedTree, TreeError> {
    let mut lines = r.lines();
    let mut next = || -> Result<String, TreeError> {
        lines
            .next()
            .ok_or_else(|| TreeError::Parse("unexpected end of file".into()))?
            .map_err(|e| TreeError::Parse(e.to_string()))
    };
    let header = next()?;
    if header.trim() != "orbit-tree v1" {
        return Err(TreeError::Parse(format!("bad header `{header}`")));
    }
    let field = |line: String, key: &str| -> Result<String, TreeError> {
        line.strip_prefix(key)
            .map(|s| s.trim().to_string())
            .ok_or_else(|| TreeError::Parse(format!("expected `{key}`, got `{line}`")))
    };
    let domain: usize = field(next()?, "domain")?
        .parse()
        .map_err(|_| TreeError::Parse("bad domain".into()))?;
    let seed: u64 = field(next()?, "seed")?
        .parse()
        .map_err(|_| TreeError::Parse("bad seed".into()))?;
    let depth: usize = field(next()?, "depth")?
        .parse()
        .map_err(|_| TreeError::Parse("bad depth".into()))?;
    let ngens: usize = field(next()?, "group")?
        .parse()
        .map_err(|_| TreeError::Parse("bad group".into()))?;
    let mut group_generators = Vec::with_capacity(ngens);
    for _ in 0..ngens {
        group_generators.push(
            next()?
                .parse::<Permutation>()
                .map_err(|e| TreeError::Parse(e.to_string()))?,
        );
    }
    let count: usize = field(next()?, "nodes")?
        .parse()
        .map_err(|_| TreeError::Parse("bad node count".into()))?;
    let mut records = Vec::with_capacity(count);
    let mut pending: Option<String> = None;
    for _ in 0..count {
        let line = match pending.take() {
            Some(l) => l,
            None => next()?,
        };
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() < 6 || toks[0] != "node" {
            return Err(TreeError::Parse(format!("bad node line `{line}`")));
        }
        let node_depth: usize = toks[2].parse().map_err(|_| TreeError::Parse("bad depth".into()))?;
        let parent = if toks[3] == "-" {
            None
        } else {
            Some(toks[3].parse::<u32>().map_err(|_| TreeError::Parse("bad parent".into()))?)
        };
        let label = if toks[4] == "-" {
            Vec::new()
        } else {
            toks[4]
                .split(',')
                .map(|t| t.parse::<Point>().map_err(|_| TreeError::Parse("bad label".into())))
                .collect::<Result<Vec<_>, _>>()?
        };
        let color = toks[5].to_string();
        let transporter = match toks[6] {
            "id" => Some(Permutation::identity(domain)),
            "-" => None,
            _ => Some(
                toks[6..]
                    .join(" ")
                    .parse::<Permutation>()
                    .map_err(|e| TreeError::Parse(e.to_string()))?,
            ),
        };
        let mut stab_order = None;
        let mut stab_gens = Vec::new();
        if color == "green" {
            let sline = next()?;
            let stoks: Vec<&str> = sline.split_whitespace().collect();
            if stoks.len() != 3 || stoks[0] != "stab" {
                return Err(TreeError::Parse(format!("bad stab line `{sline}`")));
            }
            stab_order = Some(
                stoks[1]
                    .parse::<u128>()
                    .map_err(|_| TreeError::Parse("bad stab order".into()))?,
            );
            let m: usize = stoks[2].parse().map_err(|_| TreeError::Parse("bad stab gens".into()))?;
            for _ in 0..m {
                stab_gens.push(
                    next()?
                        .parse::<Permutation>()
                        .map_err(|e| TreeError::Parse(e.to_string()))?,
                );
            }
        }
        records.push(LoadedNode {
            depth: node_depth,
            parent,
            label,
            color,
            transporter,
            stab_order,
            stab_gens,
        });
    }
    Ok(LoadedTree {
        domain,
        seed,
        depth,
        group_generators,
        records,
    })
}
