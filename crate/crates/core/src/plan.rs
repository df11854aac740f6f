//! Swap-tree shapes and static purification planning for a path.
//!
//! A plan fixes, for every node of a binary swap tree, how many symmetric
//! purification rounds are applied to that node's segment before it is
//! handed upward (swapped with its sibling, or teleported at the root).
//! Plans are ranked by the expected number of measurements per delivered
//! end-to-end pair.

use std::cmp::Ordering;

use thiserror::Error;

use crate::pair::{purify_map, swap_map, Fidelity};

/// Largest hop count for which trees are enumerated exhaustively.
pub const MAX_ENUMERATED_HOPS: usize = 12;
pub const DEFAULT_MAX_ROUNDS: u32 = 10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlanError {
    #[error("no plan reaches the target fidelity {target}")]
    Infeasible { target: f64 },
    #[error("{hops} hops exceed the enumeration bound of {max}; use a balanced tree")]
    TooManyHops { hops: usize, max: usize },
    #[error("a path needs at least one hop")]
    NoHops,
    #[error("rounds vector has {got} entries, tree has {want} nodes")]
    RoundsMismatch { got: usize, want: usize },
}

/// One node of a swap tree, covering hops `lo..hi`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TreeNode {
    pub lo: usize,
    pub hi: usize,
    /// Children in path order; `None` for a single hop.
    pub children: Option<(usize, usize)>,
    pub parent: Option<usize>,
}

impl TreeNode {
    pub fn is_leaf(&self) -> bool {
        self.children.is_none()
    }

    pub fn hops(&self) -> usize {
        self.hi - self.lo
    }
}

/// Binary tree over a path's hops, stored in pre-order (root at index 0).
/// The swap for an internal node happens at path node `left.hi`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SwapTree {
    nodes: Vec<TreeNode>,
}

impl SwapTree {
    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn root(&self) -> usize {
        0
    }

    pub fn hops(&self) -> usize {
        self.nodes[0].hi
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Path node index where `node`'s children are joined.
    pub fn swap_at(&self, node: usize) -> Option<usize> {
        self.nodes[node].children.map(|(l, _)| self.nodes[l].hi)
    }

    pub fn leaf_of_hop(&self, hop: usize) -> usize {
        self.nodes
            .iter()
            .position(|n| n.is_leaf() && n.lo == hop)
            .expect("every hop has a leaf")
    }

    pub fn sibling(&self, node: usize) -> Option<usize> {
        let p = self.nodes[node].parent?;
        let (l, r) = self.nodes[p].children?;
        Some(if l == node { r } else { l })
    }

    /// Split positions of internal nodes in pre-order; identifies the shape.
    pub fn splits(&self) -> Vec<usize> {
        (0..self.nodes.len())
            .filter_map(|i| self.swap_at(i))
            .collect()
    }

    /// Builds the tree whose internal nodes split at `splits` (pre-order).
    pub fn from_splits(hops: usize, splits: &[usize]) -> Option<Self> {
        let mut nodes = Vec::with_capacity(2 * hops - 1);
        let mut it = splits.iter().copied();
        build_from_splits(0, hops, None, &mut it, &mut nodes)?;
        if it.next().is_some() {
            return None;
        }
        Some(Self { nodes })
    }

    pub fn balanced(hops: usize) -> Self {
        fn splits(lo: usize, hi: usize, out: &mut Vec<usize>) {
            if hi - lo < 2 {
                return;
            }
            let m = lo + (hi - lo).div_ceil(2);
            out.push(m);
            splits(lo, m, out);
            splits(m, hi, out);
        }
        let mut s = Vec::new();
        splits(0, hops, &mut s);
        Self::from_splits(hops, &s).expect("balanced splits are valid")
    }

    /// Rendering such as `((0 1) 2)`.
    pub fn render(&self) -> String {
        fn go(t: &SwapTree, i: usize, out: &mut String) {
            match t.nodes[i].children {
                None => out.push_str(&t.nodes[i].lo.to_string()),
                Some((l, r)) => {
                    out.push('(');
                    go(t, l, out);
                    out.push(' ');
                    go(t, r, out);
                    out.push(')');
                }
            }
        }
        let mut s = String::new();
        go(self, 0, &mut s);
        s
    }
}

fn build_from_splits(
    lo: usize,
    hi: usize,
    parent: Option<usize>,
    splits: &mut impl Iterator<Item = usize>,
    nodes: &mut Vec<TreeNode>,
) -> Option<usize> {
    let me = nodes.len();
    nodes.push(TreeNode {
        lo,
        hi,
        children: None,
        parent,
    });
    if hi - lo > 1 {
        let m = splits.next()?;
        if m <= lo || m >= hi {
            return None;
        }
        let l = build_from_splits(lo, m, Some(me), splits, nodes)?;
        let r = build_from_splits(m, hi, Some(me), splits, nodes)?;
        nodes[me].children = Some((l, r));
    }
    Some(me)
}

/// All binary tree shapes over `hops` leaves, Catalan(hops - 1) of them.
/// Ordered by root split ascending, then left subtree order, then right.
pub fn enumerate_swap_trees(hops: usize) -> Result<Vec<SwapTree>, PlanError> {
    if hops == 0 {
        return Err(PlanError::NoHops);
    }
    if hops > MAX_ENUMERATED_HOPS {
        return Err(PlanError::TooManyHops {
            hops,
            max: MAX_ENUMERATED_HOPS,
        });
    }
    Ok(split_sequences(0, hops)
        .into_iter()
        .map(|s| SwapTree::from_splits(hops, &s).expect("enumerated splits are valid"))
        .collect())
}

fn split_sequences(lo: usize, hi: usize) -> Vec<Vec<usize>> {
    if hi - lo == 1 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for m in lo + 1..hi {
        let left = split_sequences(lo, m);
        let right = split_sequences(m, hi);
        for l in &left {
            for r in &right {
                let mut s = Vec::with_capacity(1 + l.len() + r.len());
                s.push(m);
                s.extend(l);
                s.extend(r);
                out.push(s);
            }
        }
    }
    out
}

/// Purification rounds per tree node (indexed like [`SwapTree::nodes`]).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PurificationSchedule {
    pub rounds: Vec<u32>,
}

impl PurificationSchedule {
    pub fn total_rounds(&self) -> u32 {
        self.rounds.iter().sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanOptions {
    /// Per-node cap on purification rounds.
    pub max_rounds: u32,
    /// Entanglement success probability per measured pulse; scales the
    /// expected link-level measurement count.
    pub p_ent: f64,
}

impl Default for PlanOptions {
    fn default() -> Self {
        Self {
            max_rounds: DEFAULT_MAX_ROUNDS,
            p_ent: 0.38,
        }
    }
}

/// A tree plus schedule, with the fidelities and costs they imply.
#[derive(Debug, Clone, PartialEq)]
pub struct PathPlan {
    pub tree: SwapTree,
    pub schedule: PurificationSchedule,
    /// Fidelity of a fresh pair at each node, before its purification.
    pub fidelity_in: Vec<Fidelity>,
    /// Fidelity after the node's rounds; for non-root nodes this is the
    /// pre-swap target handed to the parent.
    pub fidelity_out: Vec<Fidelity>,
    /// Success probability of each purification round at each node.
    pub round_success: Vec<Vec<f64>>,
    /// Expected measurements per delivered pair, teleportation included.
    pub expected_measurements: f64,
    /// Expected link-level pairs consumed per delivered pair, per hop.
    pub expected_link_pairs: Vec<f64>,
}

impl PathPlan {
    /// Evaluates an explicit tree and schedule.
    pub fn evaluate(
        tree: SwapTree,
        rounds: Vec<u32>,
        link_fidelities: &[Fidelity],
        p_ent: f64,
    ) -> Result<Self, PlanError> {
        if rounds.len() != tree.len() {
            return Err(PlanError::RoundsMismatch {
                got: rounds.len(),
                want: tree.len(),
            });
        }
        let n = tree.len();
        let mut fin = vec![Fidelity::MIXED; n];
        let mut fout = vec![Fidelity::MIXED; n];
        let mut probs = vec![Vec::new(); n];
        let mut meas = vec![0.0; n];
        // pairs[v][hop] = expected link pairs of `hop` per output pair of v
        let mut pairs = vec![vec![0.0; tree.hops()]; n];
        // Children follow parents in pre-order, so walk backwards.
        for v in (0..n).rev() {
            let node = &tree.nodes[v];
            let (f0, m0) = match node.children {
                None => {
                    pairs[v][node.lo] = 1.0;
                    (link_fidelities[node.lo], 1.0 / p_ent)
                }
                Some((l, r)) => {
                    let (lo, hi) = (node.lo, node.hi);
                    let sum: Vec<f64> = (lo..hi).map(|h| pairs[l][h] + pairs[r][h]).collect();
                    pairs[v][lo..hi].copy_from_slice(&sum);
                    (swap_map(fout[l], fout[r]), meas[l] + meas[r] + 2.0)
                }
            };
            fin[v] = f0;
            let (mut f, mut m, mut scale) = (f0, m0, 1.0);
            for _ in 0..rounds[v] {
                let o = purify_map(f, f);
                probs[v].push(o.success_prob);
                m = (2.0 * m + 2.0) / o.success_prob;
                scale *= 2.0 / o.success_prob;
                f = o.new_fidelity;
            }
            for x in &mut pairs[v][node.lo..node.hi] {
                *x *= scale;
            }
            fout[v] = f;
            meas[v] = m;
        }
        Ok(Self {
            expected_measurements: meas[0] + 2.0,
            expected_link_pairs: pairs.swap_remove(0),
            tree,
            schedule: PurificationSchedule { rounds },
            fidelity_in: fin,
            fidelity_out: fout,
            round_success: probs,
        })
    }

    pub fn hops(&self) -> usize {
        self.tree.hops()
    }

    pub fn root_fidelity(&self) -> Fidelity {
        self.fidelity_out[0]
    }

    /// Pre-swap targets of the two children of an internal node.
    pub fn child_targets(&self, node: usize) -> Option<(Fidelity, Fidelity)> {
        let (l, r) = self.tree.nodes[node].children?;
        Some((self.fidelity_out[l], self.fidelity_out[r]))
    }

    pub fn total_rounds(&self) -> u32 {
        self.schedule.total_rounds()
    }
}

#[derive(Debug, Clone)]
struct Candidate {
    fidelity: f64,
    cost: f64,
    rounds: u32,
    /// Pre-order split positions, then pre-order rounds; both fixed-length
    /// per segment, so lexicographic order matches enumeration order.
    splits: Vec<u8>,
    schedule: Vec<u8>,
}

fn costs_equal(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0)
}

fn rank(a: &Candidate, b: &Candidate) -> Ordering {
    if !costs_equal(a.cost, b.cost) {
        return a.cost.total_cmp(&b.cost);
    }
    a.rounds
        .cmp(&b.rounds)
        .then_with(|| a.splits.cmp(&b.splits))
        .then_with(|| a.schedule.cmp(&b.schedule))
}

/// Keeps the (fidelity up, cost down) frontier; exact ties resolve by `rank`.
fn prune(mut c: Vec<Candidate>) -> Vec<Candidate> {
    c.sort_by(|a, b| b.fidelity.total_cmp(&a.fidelity).then_with(|| rank(a, b)));
    let mut out: Vec<Candidate> = Vec::new();
    let mut best = f64::INFINITY;
    for x in c {
        if best.is_infinite() || (x.cost < best && !costs_equal(x.cost, best)) {
            best = x.cost;
            out.push(x);
        }
    }
    out
}

fn with_rounds(base: &Candidate, max_rounds: u32, out: &mut Vec<Candidate>) {
    let (mut f, mut cost) = (base.fidelity, base.cost);
    for k in 0..=max_rounds {
        if k > 0 {
            let o = purify_map(Fidelity::clamped(f), Fidelity::clamped(f));
            cost = (2.0 * cost + 2.0) / o.success_prob;
            f = o.new_fidelity.value();
        }
        let mut schedule = Vec::with_capacity(base.schedule.len() + 1);
        schedule.push(k as u8);
        schedule.extend(&base.schedule);
        out.push(Candidate {
            fidelity: f,
            cost,
            rounds: base.rounds + k,
            splits: base.splits.clone(),
            schedule,
        });
    }
}

/// Chooses the tree and schedule minimizing expected measurements subject to
/// the delivered fidelity reaching `target`. Ties go to fewer total rounds,
/// then to the earlier tree in [`enumerate_swap_trees`] order.
///
/// Paths longer than [`MAX_ENUMERATED_HOPS`] use a balanced tree with the
/// same round count at every node.
pub fn plan_path(
    link_fidelities: &[Fidelity],
    target: Fidelity,
    opts: &PlanOptions,
) -> Result<PathPlan, PlanError> {
    let hops = link_fidelities.len();
    if hops == 0 {
        return Err(PlanError::NoHops);
    }
    let infeasible = PlanError::Infeasible {
        target: target.value(),
    };
    if link_fidelities.iter().any(|f| !f.is_purifiable()) {
        return Err(infeasible);
    }
    if hops > MAX_ENUMERATED_HOPS {
        return plan_balanced(link_fidelities, target, opts);
    }

    // table[i][len] = frontier for hops i..i+len, after purification
    let mut table: Vec<Vec<Vec<Candidate>>> = vec![vec![Vec::new(); hops + 1]; hops];
    for len in 1..=hops {
        for i in 0..=hops - len {
            let j = i + len;
            let mut pre = Vec::new();
            if len == 1 {
                pre.push(Candidate {
                    fidelity: link_fidelities[i].value(),
                    cost: 1.0 / opts.p_ent,
                    rounds: 0,
                    splits: Vec::new(),
                    schedule: Vec::new(),
                });
            } else {
                for m in i + 1..j {
                    for l in &table[i][m - i] {
                        for r in &table[m][j - m] {
                            let f = swap_map(Fidelity::clamped(l.fidelity), Fidelity::clamped(r.fidelity));
                            if !f.is_purifiable() {
                                continue;
                            }
                            let mut splits = Vec::with_capacity(len - 1);
                            splits.push(m as u8);
                            splits.extend(&l.splits);
                            splits.extend(&r.splits);
                            let mut schedule = l.schedule.clone();
                            schedule.extend(&r.schedule);
                            pre.push(Candidate {
                                fidelity: f.value(),
                                cost: l.cost + r.cost + 2.0,
                                rounds: l.rounds + r.rounds,
                                splits,
                                schedule,
                            });
                        }
                    }
                }
                pre = prune(pre);
            }
            let mut post = Vec::new();
            for c in &pre {
                with_rounds(c, opts.max_rounds, &mut post);
            }
            table[i][len] = prune(post);
        }
    }

    let best = table[0][hops]
        .iter()
        .filter(|c| c.fidelity >= target.value())
        .min_by(|a, b| rank(a, b))
        .ok_or(infeasible)?;
    let splits: Vec<usize> = best.splits.iter().map(|&s| s as usize).collect();
    let tree = SwapTree::from_splits(hops, &splits).expect("planner splits are valid");
    let rounds = best.schedule.iter().map(|&r| r as u32).collect();
    PathPlan::evaluate(tree, rounds, link_fidelities, opts.p_ent)
}

fn plan_balanced(
    link_fidelities: &[Fidelity],
    target: Fidelity,
    opts: &PlanOptions,
) -> Result<PathPlan, PlanError> {
    let tree = SwapTree::balanced(link_fidelities.len());
    for r in 0..=opts.max_rounds {
        let plan = PathPlan::evaluate(tree.clone(), vec![r; tree.len()], link_fidelities, opts.p_ent)?;
        if plan.root_fidelity().value() >= target.value() {
            return Ok(plan);
        }
    }
    Err(PlanError::Infeasible {
        target: target.value(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pair::{rounds_to_reach, Rounds};

    fn fids(v: &[f64]) -> Vec<Fidelity> {
        v.iter().map(|&x| Fidelity::new(x).unwrap()).collect()
    }

    fn catalan(n: usize) -> usize {
        (0..n).fold(1, |c, k| c * 2 * (2 * k + 1) / (k + 2))
    }

    #[test]
    fn tree_counts_are_catalan() {
        assert_eq!(enumerate_swap_trees(1).unwrap().len(), 1);
        assert_eq!(enumerate_swap_trees(2).unwrap().len(), 1);
        assert_eq!(enumerate_swap_trees(3).unwrap().len(), 2);
        assert_eq!(enumerate_swap_trees(4).unwrap().len(), 5);
        for h in 1..=9 {
            let trees = enumerate_swap_trees(h).unwrap();
            assert_eq!(trees.len(), catalan(h - 1));
            let mut shapes: Vec<_> = trees.iter().map(|t| t.render()).collect();
            shapes.sort();
            shapes.dedup();
            assert_eq!(shapes.len(), trees.len());
        }
    }

    #[test]
    fn tree_bound() {
        assert!(matches!(
            enumerate_swap_trees(13),
            Err(PlanError::TooManyHops { hops: 13, .. })
        ));
        assert_eq!(enumerate_swap_trees(0), Err(PlanError::NoHops));
    }

    #[test]
    fn tree_structure() {
        let t = SwapTree::balanced(4);
        assert_eq!(t.render(), "((0 1) (2 3))");
        assert_eq!(t.len(), 7);
        assert_eq!(t.swap_at(0), Some(2));
        assert_eq!(t.nodes().iter().filter(|n| !n.is_leaf()).count(), 3);
        let leaves: Vec<_> = t.nodes().iter().filter(|n| n.is_leaf()).map(|n| n.lo).collect();
        assert_eq!(leaves, [0, 1, 2, 3]);
        assert_eq!(t.sibling(t.leaf_of_hop(0)), Some(t.leaf_of_hop(1)));
        assert_eq!(SwapTree::balanced(3).render(), "((0 1) 2)");
        assert!(SwapTree::from_splits(3, &[0]).is_none());
    }

    #[test]
    fn single_hop_needs_no_rounds_when_good() {
        let p = plan_path(&fids(&[0.99]), Fidelity::new(0.98).unwrap(), &PlanOptions::default()).unwrap();
        assert_eq!(p.total_rounds(), 0);
        assert_eq!(p.tree.len(), 1);
    }

    #[test]
    fn single_hop_matches_rounds_to_reach() {
        let target = Fidelity::new(0.98).unwrap();
        for f in [0.6, 0.7, 0.8, 0.9, 0.95] {
            let r = plan_path(&fids(&[f]), target, &PlanOptions::default());
            let Rounds::Reached(k) = rounds_to_reach(Fidelity::new(f).unwrap(), target) else {
                panic!()
            };
            if k > DEFAULT_MAX_ROUNDS {
                assert!(r.is_err(), "f={f}");
            } else {
                assert_eq!(r.unwrap().total_rounds(), k, "f={f}");
            }
        }
    }

    #[test]
    fn threshold_link_is_infeasible() {
        let r = plan_path(&fids(&[0.9, 0.5]), Fidelity::new(0.98).unwrap(), &PlanOptions::default());
        assert!(matches!(r, Err(PlanError::Infeasible { .. })));
    }

    #[test]
    fn plan_reaches_target() {
        let target = Fidelity::new(0.98).unwrap();
        let p = plan_path(&fids(&[0.95, 0.9, 0.93]), target, &PlanOptions::default()).unwrap();
        assert!(p.root_fidelity().value() >= 0.98);
        assert_eq!(p.schedule.rounds.len(), p.tree.len());
        assert!(p.child_targets(0).is_some());
    }

    #[test]
    fn evaluate_counts_pairs() {
        // two hops, one round on each leaf, none at the root
        let t = SwapTree::balanced(2);
        let f = fids(&[0.7, 0.7]);
        let p = PathPlan::evaluate(t, vec![0, 1, 1], &f, 1.0).unwrap();
        let ps = purify_map(f[0], f[0]).success_prob;
        assert!((p.expected_link_pairs[0] - 2.0 / ps).abs() < 1e-12);
        assert!((p.expected_link_pairs.iter().sum::<f64>() - 4.0 / ps).abs() < 1e-12);
    }

    #[test]
    fn long_paths_use_balanced_fallback() {
        let f = vec![Fidelity::new(0.995).unwrap(); 14];
        let p = plan_path(&f, Fidelity::new(0.9).unwrap(), &PlanOptions::default()).unwrap();
        assert_eq!(p.tree, SwapTree::balanced(14));
        let r = p.schedule.rounds[0];
        assert!(p.schedule.rounds.iter().all(|&x| x == r));
    }
}
