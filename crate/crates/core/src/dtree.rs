//! Binary decision trees over `{0,1}^n`: evaluation, depth statistics,
//! the everywhere-influential check and pruning.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::boolfn::{distance, BooleanFunction, Point, Restriction};
use crate::error::{Error, Result};

/// Arena node. Children are indices into the owning tree's node list.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Node {
    Leaf(bool),
    Query { var: usize, lo: usize, hi: usize },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DecisionTree {
    nodes: Vec<Node>,
    root: usize,
}

/// A node failing the everywhere-influential test.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Violation {
    pub node: usize,
    pub var: usize,
    pub depth: usize,
    pub influence: f64,
}

impl DecisionTree {
    pub fn leaf(bit: bool) -> Self {
        DecisionTree { nodes: vec![Node::Leaf(bit)], root: 0 }
    }

    /// `if x_var == 0 { lo } else { hi }`.
    pub fn query(var: usize, lo: DecisionTree, hi: DecisionTree) -> Result<Self> {
        if lo.contains_var(var) || hi.contains_var(var) {
            return Err(Error::MalformedTree(format!("coordinate {var} queried twice on a path")));
        }
        let mut nodes = Vec::with_capacity(lo.nodes.len() + hi.nodes.len() + 1);
        let lo_root = lo.root;
        nodes.extend(lo.nodes);
        let shift = nodes.len();
        nodes.extend(hi.nodes.into_iter().map(|n| match n {
            Node::Query { var, lo, hi } => Node::Query { var, lo: lo + shift, hi: hi + shift },
            leaf => leaf,
        }));
        let hi_root = hi.root + shift;
        nodes.push(Node::Query { var, lo: lo_root, hi: hi_root });
        let root = nodes.len() - 1;
        Ok(DecisionTree { nodes, root })
    }

    /// Validates an arena: references in range, acyclic, no repeated
    /// coordinate on any root-to-leaf path.
    pub fn from_nodes(nodes: Vec<Node>, root: usize) -> Result<Self> {
        let t = DecisionTree { nodes, root };
        if root >= t.nodes.len() {
            return Err(Error::MalformedTree(format!("root {root} out of range")));
        }
        for node in &t.nodes {
            if let Node::Query { lo, hi, .. } = *node {
                if lo >= t.nodes.len() || hi >= t.nodes.len() {
                    return Err(Error::MalformedTree("child reference out of range".into()));
                }
            }
        }
        // Depth-first walk carrying the set of coordinates on the path; a
        // cycle necessarily repeats a node, which we detect with an on-path flag.
        let mut on_path = vec![false; t.nodes.len()];
        fn walk(t: &DecisionTree, id: usize, path: &mut Vec<usize>, on_path: &mut [bool]) -> Result<()> {
            if on_path[id] {
                return Err(Error::MalformedTree("cycle in node list".into()));
            }
            if let Node::Query { var, lo, hi } = t.nodes[id] {
                if path.contains(&var) {
                    return Err(Error::MalformedTree(format!("coordinate {var} queried twice on a path")));
                }
                if path.len() >= crate::boolfn::MAX_ARITY {
                    return Err(Error::MalformedTree("path longer than the maximum arity".into()));
                }
                on_path[id] = true;
                path.push(var);
                walk(t, lo, path, on_path)?;
                walk(t, hi, path, on_path)?;
                path.pop();
                on_path[id] = false;
            }
            Ok(())
        }
        walk(&t, root, &mut Vec::new(), &mut on_path)?;
        Ok(t.compacted())
    }

    /// Query chain computing `AND` of `vars` in order.
    pub fn and_chain(vars: &[usize]) -> Result<Self> {
        let mut t = DecisionTree::leaf(true);
        for &v in vars.iter().rev() {
            t = DecisionTree::query(v, DecisionTree::leaf(false), t)?;
        }
        Ok(t)
    }

    /// Complete tree querying `vars` in order; the leaf for the path bits
    /// `b_0..b_{d-1}` is `leaf(bits)` with `b_j` stored in bit `j`.
    pub fn complete(vars: &[usize], mut leaf: impl FnMut(u64) -> bool) -> Result<Self> {
        fn go(vars: &[usize], depth: usize, acc: u64, leaf: &mut dyn FnMut(u64) -> bool) -> Result<DecisionTree> {
            if depth == vars.len() {
                return Ok(DecisionTree::leaf(leaf(acc)));
            }
            let lo = go(vars, depth + 1, acc, leaf)?;
            let hi = go(vars, depth + 1, acc | 1 << depth, leaf)?;
            DecisionTree::query(vars[depth], lo, hi)
        }
        go(vars, 0, 0, &mut leaf)
    }

    /// Tree computing `f` exactly: queries free coordinates in `order`,
    /// stopping as soon as the restriction is constant.
    pub fn for_function(f: &BooleanFunction, order: &[usize]) -> Result<Self> {
        fn go(f: &BooleanFunction, order: &[usize], pi: Restriction) -> Result<DecisionTree> {
            let g = f.restrict(&pi)?;
            let a = g.analysis()?;
            if a.is_constant() {
                return Ok(DecisionTree::leaf(a.expectation == 1.0));
            }
            let var = order
                .iter()
                .copied()
                .find(|&i| !pi.is_assigned(i))
                .ok_or_else(|| Error::MalformedTree("order exhausted before the function became constant".into()))?;
            DecisionTree::query(var, go(f, order, pi.with(var, false)?)?, go(f, order, pi.with(var, true)?)?)
        }
        go(f, order, Restriction::empty())
    }

    /// Random tree on coordinates `0..n`: each node becomes a leaf with
    /// probability `leaf_prob` (always once `max_depth` is reached).
    pub fn random<R: Rng + ?Sized>(n: usize, max_depth: usize, leaf_prob: f64, rng: &mut R) -> Self {
        fn go<R: Rng + ?Sized>(n: usize, left: usize, leaf_prob: f64, used: u64, rng: &mut R) -> DecisionTree {
            if left == 0 || used.count_ones() as usize == n || rng.gen_bool(leaf_prob) {
                return DecisionTree::leaf(rng.gen());
            }
            let free: Vec<usize> = (0..n).filter(|&i| used >> i & 1 == 0).collect();
            let var = free[rng.gen_range(0..free.len())];
            let lo = go(n, left - 1, leaf_prob, used | 1 << var, rng);
            let hi = go(n, left - 1, leaf_prob, used | 1 << var, rng);
            DecisionTree::query(var, lo, hi).expect("fresh coordinate")
        }
        go(n, max_depth, leaf_prob, 0, rng)
    }

    /// Random tree computing exactly `f`, picking a uniformly random free
    /// coordinate at each node.
    pub fn random_for_function<R: Rng + ?Sized>(f: &BooleanFunction, rng: &mut R) -> Result<Self> {
        fn go<R: Rng + ?Sized>(f: &BooleanFunction, pi: Restriction, rng: &mut R) -> Result<DecisionTree> {
            let a = f.restrict(&pi)?.analysis()?;
            if a.is_constant() {
                return Ok(DecisionTree::leaf(a.expectation == 1.0));
            }
            let free: Vec<usize> = (0..f.arity()).filter(|&i| !pi.is_assigned(i)).collect();
            let var = free[rng.gen_range(0..free.len())];
            DecisionTree::query(var, go(f, pi.with(var, false)?, rng)?, go(f, pi.with(var, true)?, rng)?)
        }
        go(f, Restriction::empty(), rng)
    }

    pub fn root(&self) -> usize {
        self.root
    }

    pub fn node(&self, id: usize) -> Node {
        self.nodes[id]
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn size(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_leaf(&self) -> bool {
        matches!(self.nodes[self.root], Node::Leaf(_))
    }

    pub fn max_var(&self) -> Option<usize> {
        self.nodes
            .iter()
            .filter_map(|n| match n {
                Node::Query { var, .. } => Some(*var),
                Node::Leaf(_) => None,
            })
            .max()
    }

    fn contains_var(&self, v: usize) -> bool {
        self.nodes.iter().any(|n| matches!(n, Node::Query { var, .. } if *var == v))
    }

    /// Copy of the subtree rooted at `id`.
    pub fn subtree(&self, id: usize) -> DecisionTree {
        DecisionTree { nodes: self.nodes.clone(), root: id }.compacted()
    }

    /// Drops unreachable nodes and renumbers in post-order.
    fn compacted(&self) -> DecisionTree {
        fn go(t: &DecisionTree, id: usize, out: &mut Vec<Node>) -> usize {
            let node = match t.nodes[id] {
                Node::Leaf(b) => Node::Leaf(b),
                Node::Query { var, lo, hi } => {
                    let lo = go(t, lo, out);
                    let hi = go(t, hi, out);
                    Node::Query { var, lo, hi }
                }
            };
            out.push(node);
            out.len() - 1
        }
        let mut nodes = Vec::new();
        let root = go(self, self.root, &mut nodes);
        DecisionTree { nodes, root }
    }

    pub fn eval(&self, x: Point) -> bool {
        let mut id = self.root;
        loop {
            match self.nodes[id] {
                Node::Leaf(b) => return b,
                Node::Query { var, lo, hi } => id = if x >> var & 1 == 1 { hi } else { lo },
            }
        }
    }

    /// Δ(T): 0 at a leaf, otherwise `1 + (Δ(T_0) + Δ(T_1)) / 2`.
    pub fn average_depth(&self) -> f64 {
        fn go(t: &DecisionTree, id: usize) -> f64 {
            match t.nodes[id] {
                Node::Leaf(_) => 0.0,
                Node::Query { lo, hi, .. } => 1.0 + 0.5 * (go(t, lo) + go(t, hi)),
            }
        }
        go(self, self.root)
    }

    /// `Σ_leaves 2^{-depth}·depth`.
    pub fn average_depth_by_leaves(&self) -> f64 {
        let mut total = 0.0;
        self.visit(|_, node, depth, _| {
            if let Node::Leaf(_) = node {
                total += depth as f64 * 0.5f64.powi(depth as i32);
            }
        });
        total
    }

    /// Pre-order traversal passing `(id, node, depth, path restriction)`.
    pub fn visit(&self, mut f: impl FnMut(usize, Node, usize, Restriction)) {
        let mut stack = vec![(self.root, 0usize, Restriction::empty())];
        while let Some((id, depth, pi)) = stack.pop() {
            let node = self.nodes[id];
            f(id, node, depth, pi);
            if let Node::Query { var, lo, hi } = node {
                stack.push((hi, depth + 1, pi.with(var, true).expect("validated tree")));
                stack.push((lo, depth + 1, pi.with(var, false).expect("validated tree")));
            }
        }
    }

    /// δ_i(T) for every `i < n`: the sum of `2^{-depth(v)}` over nodes querying `i`.
    pub fn query_probabilities(&self, n: usize) -> Vec<f64> {
        let mut delta = vec![0.0; n];
        self.visit(|_, node, depth, _| {
            if let Node::Query { var, .. } = node {
                if var < n {
                    delta[var] += 0.5f64.powi(depth as i32);
                }
            }
        });
        delta
    }

    pub fn query_probability(&self, i: usize) -> f64 {
        let mut d = 0.0;
        self.visit(|_, node, depth, _| {
            if matches!(node, Node::Query { var, .. } if var == i) {
                d += 0.5f64.powi(depth as i32);
            }
        });
        d
    }

    pub fn to_function(&self, n: usize) -> Result<BooleanFunction> {
        BooleanFunction::from_tree(n, self.clone())
    }

    /// First node (pre-order) with `Inf_{ind(v)}[f_v] < τ`, where `f_v` is
    /// `f` restricted by the path to `v`; `None` when the tree is
    /// everywhere τ-influential with respect to `f`.
    pub fn first_uninfluential(&self, f: &BooleanFunction, tau: f64) -> Result<Option<Violation>> {
        if let Some(v) = self.max_var() {
            if v >= f.arity() {
                return Err(Error::ArityMismatch { expected: f.arity(), found: v + 1 });
            }
        }
        let mut found = None;
        let mut err = None;
        self.visit(|id, node, depth, pi| {
            if found.is_some() || err.is_some() {
                return;
            }
            if let Node::Query { var, .. } = node {
                match f.restrict(&pi).and_then(|g| g.influence(var)) {
                    Ok(inf) if inf < tau => found = Some(Violation { node: id, var, depth, influence: inf }),
                    Ok(_) => {}
                    Err(e) => err = Some(e),
                }
            }
        });
        match err {
            Some(e) => Err(e),
            None => Ok(found),
        }
    }

    pub fn is_everywhere_influential(&self, f: &BooleanFunction, tau: f64) -> Result<bool> {
        Ok(self.first_uninfluential(f, tau)?.is_none())
    }

    /// Greedy top-down pruning to an everywhere τ-influential tree.
    ///
    /// A node whose coordinate has influence below τ under its path
    /// restriction is replaced by the child subtree closer to `f_v` (ties
    /// go to the 0-branch) and the replacement is re-examined. The result
    /// is checked against both postconditions; a failure is reported as
    /// [`Error::PruningContract`].
    pub fn prune(&self, f: &BooleanFunction, tau: f64) -> Result<DecisionTree> {
        let n = f.arity();
        let own = self.to_function(n)?;
        let mismatch = distance(&own, f, None)?;
        if mismatch > 0.0 {
            return Err(Error::TreeMismatch(mismatch));
        }
        fn go(t: &DecisionTree, id: usize, f: &BooleanFunction, pi: Restriction, tau: f64) -> Result<DecisionTree> {
            let n = f.arity();
            let fv = f.restrict(&pi)?;
            let mut id = id;
            loop {
                match t.nodes[id] {
                    Node::Leaf(b) => return Ok(DecisionTree::leaf(b)),
                    Node::Query { var, lo, hi } => {
                        if fv.influence(var)? >= tau {
                            let lo_t = go(t, lo, f, pi.with(var, false)?, tau)?;
                            let hi_t = go(t, hi, f, pi.with(var, true)?, tau)?;
                            return DecisionTree::query(var, lo_t, hi_t);
                        }
                        let d0 = distance(&t.subtree(lo).to_function(n)?.restrict(&pi)?, &fv, None)?;
                        let d1 = distance(&t.subtree(hi).to_function(n)?.restrict(&pi)?, &fv, None)?;
                        id = if d0 <= d1 { lo } else { hi };
                    }
                }
            }
        }
        let pruned = go(self, self.root, f, Restriction::empty(), tau)?;
        if let Some(v) = pruned.first_uninfluential(f, tau)? {
            return Err(Error::PruningContract(format!(
                "node querying x{} at depth {} has influence {} < {tau}",
                v.var, v.depth, v.influence
            )));
        }
        let err = distance(&pruned.to_function(n)?, f, None)?;
        let bound = tau * self.average_depth();
        if err > bound + 1e-12 {
            return Err(Error::PruningContract(format!("distance {err} exceeds τ·Δ(T) = {bound}")));
        }
        Ok(pruned)
    }

    pub fn to_document(&self) -> TreeDocument {
        TreeDocument {
            root: self.root,
            nodes: self
                .nodes
                .iter()
                .map(|n| match *n {
                    Node::Leaf(b) => NodeDoc::Leaf { leaf: b as u8 },
                    Node::Query { var, lo, hi } => NodeDoc::Query { var, lo, hi },
                })
                .collect(),
        }
    }

    pub fn from_document(doc: &TreeDocument) -> Result<Self> {
        let nodes = doc
            .nodes
            .iter()
            .map(|n| match *n {
                NodeDoc::Leaf { leaf: 0 } => Ok(Node::Leaf(false)),
                NodeDoc::Leaf { leaf: 1 } => Ok(Node::Leaf(true)),
                NodeDoc::Leaf { leaf } => Err(Error::MalformedTree(format!("leaf value {leaf} is not 0 or 1"))),
                NodeDoc::Query { var, lo, hi } => Ok(Node::Query { var, lo, hi }),
            })
            .collect::<Result<Vec<_>>>()?;
        DecisionTree::from_nodes(nodes, doc.root)
    }
}

/// JSON form of a tree: `{"root": r, "nodes": [{"var","lo","hi"} | {"leaf": 0|1}]}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeDocument {
    pub root: usize,
    pub nodes: Vec<NodeDoc>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum NodeDoc {
    Query { var: usize, lo: usize, hi: usize },
    Leaf { leaf: u8 },
}

impl Serialize for DecisionTree {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_document().serialize(s)
    }
}

impl<'de> Deserialize<'de> for DecisionTree {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let doc = TreeDocument::deserialize(d)?;
        DecisionTree::from_document(&doc).map_err(serde::de::Error::custom)
    }
}
