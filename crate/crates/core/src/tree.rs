//! The tree hidden in the network's activation patterns.
//!
//! Each pattern coordinate is one binary split, taken in layer order, so a
//! node is identified by the prefix of pattern values above it. With the
//! default width of one neuron per layer, coordinate depth equals layer
//! depth. Pruning a node means forcing pattern coordinates to 0 for every
//! subject routed through it.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use num_bigint::BigInt;
use num_traits::Zero;
use serde::{Deserialize, Serialize};

use crate::network::{Activation, ForwardTrace, ReluNetwork};
use crate::stats::{kaplan_meier, log_rank_test, LogRankResult};
use crate::{Error, Result};

pub type Prefix = Vec<u8>;

/// What a merge zeroes for the subjects routed through the merged node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MergeScope {
    /// The node's coordinate and every deeper coordinate: the node becomes a leaf.
    #[default]
    Subtree,
    /// Only the node's own coordinate; deeper splits stay alive.
    Coordinate,
}

#[derive(Debug, Clone, Default)]
struct TrieNode {
    children: [Option<u32>; 2],
    pruned: bool,
}

/// Persistent set of merged node prefixes.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(from = "MaskRecord", into = "MaskRecord")]
pub struct PruneMask {
    scope: MergeScope,
    prefixes: BTreeSet<Prefix>,
    trie: Vec<TrieNode>,
}

#[derive(Serialize, Deserialize)]
struct MaskRecord {
    scope: MergeScope,
    prefixes: Vec<Prefix>,
}

impl From<MaskRecord> for PruneMask {
    fn from(r: MaskRecord) -> Self {
        let mut m = PruneMask::new(r.scope);
        for p in r.prefixes {
            m.insert(p);
        }
        m
    }
}

impl From<PruneMask> for MaskRecord {
    fn from(m: PruneMask) -> Self {
        MaskRecord {
            scope: m.scope,
            prefixes: m.prefixes.into_iter().collect(),
        }
    }
}

impl PartialEq for PruneMask {
    fn eq(&self, other: &Self) -> bool {
        self.scope == other.scope && self.prefixes == other.prefixes
    }
}

impl PruneMask {
    pub fn new(scope: MergeScope) -> Self {
        Self {
            scope,
            prefixes: BTreeSet::new(),
            trie: vec![TrieNode::default()],
        }
    }

    pub fn scope(&self) -> MergeScope {
        self.scope
    }

    pub fn prefixes(&self) -> impl Iterator<Item = &Prefix> {
        self.prefixes.iter()
    }

    pub fn len(&self) -> usize {
        self.prefixes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prefixes.is_empty()
    }

    pub fn contains(&self, prefix: &[u8]) -> bool {
        self.prefixes.contains(prefix)
    }

    /// Adds a merged prefix, keeping the set consistent with the scope:
    /// under subtree merges nothing below a merged prefix is stored; under
    /// coordinate merges only the now-unreachable `prefix + [1]` branch goes.
    pub fn insert(&mut self, prefix: Prefix) -> bool {
        let covered = match self.scope {
            MergeScope::Subtree => (0..=prefix.len()).any(|k| self.prefixes.contains(&prefix[..k])),
            MergeScope::Coordinate => {
                self.prefixes.contains(&prefix)
                    || (0..prefix.len()).any(|k| prefix[k] == 1 && self.prefixes.contains(&prefix[..k]))
            }
        };
        if covered {
            return false;
        }
        let dead = |p: &Prefix| -> bool {
            p.len() > prefix.len()
                && p.starts_with(&prefix)
                && (self.scope == MergeScope::Subtree || p[prefix.len()] == 1)
        };
        let stale: Vec<Prefix> = self.prefixes.iter().filter(|p| dead(p)).cloned().collect();
        for p in stale {
            self.prefixes.remove(&p);
        }
        self.prefixes.insert(prefix);
        self.rebuild_trie();
        true
    }

    fn rebuild_trie(&mut self) {
        let mut trie = vec![TrieNode::default()];
        for p in &self.prefixes {
            let mut node = 0usize;
            for &bit in p {
                node = match trie[node].children[bit as usize] {
                    Some(c) => c as usize,
                    None => {
                        trie.push(TrieNode::default());
                        let c = trie.len() - 1;
                        trie[node].children[bit as usize] = Some(c as u32);
                        c
                    }
                };
            }
            trie[node].pruned = true;
        }
        self.trie = trie;
    }

    /// Which coordinates of a raw hard pattern row survive the mask.
    pub fn keep(&self, bits: &[u8]) -> Vec<bool> {
        let mut keep = vec![true; bits.len()];
        if self.prefixes.is_empty() {
            return keep;
        }
        let mut node = 0usize;
        for k in 0..bits.len() {
            let mut bit = bits[k];
            if self.trie[node].pruned {
                match self.scope {
                    MergeScope::Subtree => {
                        keep[k..].iter_mut().for_each(|v| *v = false);
                        break;
                    }
                    MergeScope::Coordinate => {
                        keep[k] = false;
                        bit = 0;
                    }
                }
            }
            match self.trie[node].children[bit as usize] {
                Some(c) => node = c as usize,
                None => break,
            }
        }
        keep
    }

    /// The masked hard pattern row.
    pub fn apply(&self, bits: &[u8]) -> Vec<u8> {
        bits.iter()
            .zip(self.keep(bits))
            .map(|(&b, k)| if k { b } else { 0 })
            .collect()
    }
}

/// N x P binary activation patterns, one row per subject.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatternMatrix {
    pub rows: usize,
    pub cols: usize,
    data: Vec<u8>,
    /// 1-based layer of each column.
    pub col_layers: Vec<usize>,
}

impl PatternMatrix {
    pub fn from_rows(rows: &[Vec<u8>], col_layers: Vec<usize>) -> Result<Self> {
        let cols = col_layers.len();
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::DimensionMismatch {
                expected: cols,
                got: rows.iter().map(Vec::len).find(|&l| l != cols).unwrap_or(0),
            });
        }
        if rows.iter().flatten().any(|&b| b > 1) {
            return Err(Error::InvalidArgument("pattern entries must be 0 or 1".into()));
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data: rows.concat(),
            col_layers,
        })
    }

    pub fn row(&self, i: usize) -> &[u8] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> u8 {
        self.data[i * self.cols + j]
    }

    pub fn distinct_rows(&self) -> usize {
        (0..self.rows).map(|i| self.row(i)).collect::<BTreeSet<_>>().len()
    }
}

/// Stacks the masked hard patterns of `traces` into a matrix.
pub fn build_pattern_matrix(traces: &[ForwardTrace]) -> Result<PatternMatrix> {
    let first = traces.first().ok_or(Error::EmptyDataset)?;
    let col_layers: Vec<usize> = first
        .pre
        .iter()
        .enumerate()
        .flat_map(|(l, z)| std::iter::repeat(l + 1).take(z.len()))
        .collect();
    let mut rows = Vec::with_capacity(traces.len());
    for t in traces {
        if t.activation != Activation::Hard {
            return Err(Error::InvalidArgument("pattern matrix needs hard-mode traces".into()));
        }
        rows.push(t.masked_bits());
    }
    PatternMatrix::from_rows(&rows, col_layers)
}

/// Exact rank over the reals by fraction-free (Bareiss) elimination.
///
/// Duplicate rows are removed first. Runs in i128 and restarts with big
/// integers if an intermediate would overflow.
pub fn matrix_rank(o: &PatternMatrix) -> usize {
    let distinct: BTreeSet<&[u8]> = (0..o.rows).map(|i| o.row(i)).filter(|r| r.iter().any(|&b| b != 0)).collect();
    let rows: Vec<&[u8]> = distinct.into_iter().collect();
    if rows.is_empty() {
        return 0;
    }
    let small: Vec<Vec<i128>> = rows.iter().map(|r| r.iter().map(|&b| b as i128).collect()).collect();
    if let Some(r) = bareiss_i128(small, o.cols) {
        return r;
    }
    let big: Vec<Vec<BigInt>> = rows.iter().map(|r| r.iter().map(|&b| BigInt::from(b)).collect()).collect();
    bareiss_big(big, o.cols)
}

fn bareiss_i128(mut m: Vec<Vec<i128>>, cols: usize) -> Option<usize> {
    let n = m.len();
    let mut rank = 0;
    let mut prev: i128 = 1;
    for col in 0..cols {
        if rank == n {
            break;
        }
        let Some(p) = (rank..n).find(|&i| m[i][col] != 0) else { continue };
        m.swap(rank, p);
        let pivot = m[rank][col];
        for i in rank + 1..n {
            let f = m[i][col];
            for j in col + 1..cols {
                let a = pivot.checked_mul(m[i][j])?;
                let b = f.checked_mul(m[rank][j])?;
                m[i][j] = a.checked_sub(b)? / prev;
            }
            m[i][col] = 0;
        }
        prev = pivot;
        rank += 1;
    }
    Some(rank)
}

fn bareiss_big(mut m: Vec<Vec<BigInt>>, cols: usize) -> usize {
    let n = m.len();
    let mut rank = 0;
    let mut prev = BigInt::from(1);
    for col in 0..cols {
        if rank == n {
            break;
        }
        let Some(p) = (rank..n).find(|&i| !m[i][col].is_zero()) else { continue };
        m.swap(rank, p);
        let pivot = m[rank][col].clone();
        for i in rank + 1..n {
            let f = m[i][col].clone();
            for j in col + 1..cols {
                m[i][j] = (&pivot * &m[i][j] - &f * &m[rank][j]) / &prev;
            }
            m[i][col] = BigInt::zero();
        }
        prev = pivot;
        rank += 1;
    }
    rank
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankRecord {
    pub epoch: usize,
    pub rank: usize,
    pub rank_ratio: f64,
}

/// Pattern-matrix rank per epoch; the ratio is rank / min(N, P).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RankTrace {
    pub records: Vec<RankRecord>,
}

impl RankTrace {
    pub fn push(&mut self, epoch: usize, rank: usize, n: usize, p: usize) {
        self.records.push(RankRecord {
            epoch,
            rank,
            rank_ratio: rank as f64 / n.min(p).max(1) as f64,
        });
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,rank,rank_ratio\n");
        for r in &self.records {
            let _ = writeln!(s, "{},{},{}", r.epoch, r.rank, r.rank_ratio);
        }
        s
    }
}

/// True once the last `patience + 1` recorded ranks are all equal.
pub fn rank_trigger(records: &[RankRecord], patience: usize) -> bool {
    if records.len() < patience + 1 {
        return false;
    }
    let tail = &records[records.len() - patience - 1..];
    tail.iter().all(|r| r.rank == tail[0].rank)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeafSummary {
    /// Scalar risk of the leaf's members (constant within a leaf in hard mode).
    pub risk: f64,
    pub n: usize,
    pub km_median: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreeNode {
    pub prefix: Prefix,
    /// 1-based layer of the coordinate this node splits on; `None` for leaves.
    pub layer: Option<usize>,
    pub members: Vec<usize>,
    /// Log-rank comparison of the `o = 1` branch against `o = 0`, when both exist.
    pub split: Option<LogRankResult>,
    /// Children in (o = 1, o = 0) order; one child means a pass-through node.
    pub children: Vec<TreeNode>,
    pub leaf: Option<LeafSummary>,
}

impl TreeNode {
    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }

    /// Every node in pre-order.
    pub fn walk(&self) -> Vec<&TreeNode> {
        let mut out = vec![self];
        let mut k = 0;
        while k < out.len() {
            let n = out[k];
            out.extend(n.children.iter());
            k += 1;
        }
        out
    }

    pub fn leaves(&self) -> Vec<&TreeNode> {
        self.walk().into_iter().filter(|n| n.is_leaf()).collect()
    }

    pub fn leaf_count(&self) -> usize {
        self.leaves().len()
    }

    /// Nodes with two non-empty branches.
    pub fn splits(&self) -> Vec<&TreeNode> {
        self.walk().into_iter().filter(|n| n.children.len() == 2).collect()
    }

    /// Longest root-to-leaf path counted in genuine splits.
    pub fn split_depth(&self) -> usize {
        let below = self.children.iter().map(TreeNode::split_depth).max().unwrap_or(0);
        below + (self.children.len() == 2) as usize
    }
}

/// Regroups subjects by pattern prefix, one coordinate per level.
///
/// `risks` is the scalar head risk per subject; leaves record it together
/// with the Kaplan-Meier median of their members.
pub fn reconstruct_tree(o: &PatternMatrix, times: &[f64], events: &[bool], risks: &[f64]) -> Result<TreeNode> {
    for len in [times.len(), events.len(), risks.len()] {
        if len != o.rows {
            return Err(Error::DimensionMismatch {
                expected: o.rows,
                got: len,
            });
        }
    }
    if o.rows == 0 {
        return Err(Error::EmptyDataset);
    }
    let members: Vec<usize> = (0..o.rows).collect();
    grow(o, times, events, risks, members, Vec::new())
}

fn grow(o: &PatternMatrix, times: &[f64], events: &[bool], risks: &[f64], members: Vec<usize>, prefix: Prefix) -> Result<TreeNode> {
    let depth = prefix.len();
    if depth == o.cols {
        let t: Vec<f64> = members.iter().map(|&i| times[i]).collect();
        let e: Vec<bool> = members.iter().map(|&i| events[i]).collect();
        let leaf = LeafSummary {
            risk: risks[members[0]],
            n: members.len(),
            km_median: kaplan_meier(&t, &e)?.median(),
        };
        return Ok(TreeNode {
            prefix,
            layer: None,
            members,
            split: None,
            children: Vec::new(),
            leaf: Some(leaf),
        });
    }
    let (ones, zeros): (Vec<usize>, Vec<usize>) = members.iter().partition(|&&i| o.get(i, depth) == 1);
    let split = if !ones.is_empty() && !zeros.is_empty() {
        let pick = |ix: &[usize]| -> (Vec<f64>, Vec<bool>) { (ix.iter().map(|&i| times[i]).collect(), ix.iter().map(|&i| events[i]).collect()) };
        let (ta, ea) = pick(&ones);
        let (tb, eb) = pick(&zeros);
        Some(log_rank_test((&ta, &ea), (&tb, &eb))?)
    } else {
        None
    };
    let mut children = Vec::with_capacity(2);
    for (bit, group) in [(1u8, ones), (0u8, zeros)] {
        if group.is_empty() {
            continue;
        }
        let mut p = prefix.clone();
        p.push(bit);
        children.push(grow(o, times, events, risks, group, p)?);
    }
    Ok(TreeNode {
        prefix,
        layer: Some(o.col_layers[depth]),
        members,
        split,
        children,
        leaf: None,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanDecision {
    pub prefix: Prefix,
    pub result: LogRankResult,
    pub merge: bool,
}

/// Log-rank decision at every two-branch node.
///
/// A node merges when its p-value is at least `alpha` or either branch has
/// fewer than `n_min` members. `literal_inequality` flips the p-value rule
/// to merge on `p < alpha` instead.
pub fn logrank_scan(root: &TreeNode, alpha: f64, n_min: usize, literal_inequality: bool) -> Vec<ScanDecision> {
    root.splits()
        .into_iter()
        .filter_map(|node| {
            let result = node.split?;
            let small = node.children.iter().any(|c| c.members.len() < n_min);
            let p_rule = if literal_inequality {
                result.p_value < alpha
            } else {
                result.p_value >= alpha
            };
            Some(ScanDecision {
                prefix: node.prefix.clone(),
                result,
                merge: p_rule || small,
            })
        })
        .collect()
}

pub fn apply_prune(mask: &PruneMask, decisions: &[ScanDecision]) -> PruneMask {
    let mut next = mask.clone();
    for d in decisions.iter().filter(|d| d.merge) {
        next.insert(d.prefix.clone());
    }
    next
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerImportance {
    /// |W| on the covariate block, normalized to sum to 1.
    pub values: Vec<f64>,
    /// The whole covariate block is zero.
    pub degenerate: bool,
}

pub fn covariate_importance(net: &ReluNetwork) -> Vec<LayerImportance> {
    let d = net.dim();
    net.layers
        .iter()
        .map(|layer| {
            let mut values = vec![0.0; d];
            for r in 0..layer.rows {
                for (v, w) in values.iter_mut().zip(&layer.row(r)[..d]) {
                    *v += w.abs();
                }
            }
            let total: f64 = values.iter().sum();
            if total > 0.0 {
                values.iter_mut().for_each(|v| *v /= total);
            }
            LayerImportance {
                values,
                degenerate: total == 0.0,
            }
        })
        .collect()
}

/// Exported node, skipping pass-through chains: internal entries are genuine
/// splits, the rest are leaves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeRecord {
    pub prefix: Prefix,
    pub layer: Option<usize>,
    pub n: usize,
    pub p_value: Option<f64>,
    pub importance: Vec<f64>,
    pub children: Vec<TreeRecord>,
    pub leaf: Option<LeafSummary>,
}

fn collapse(node: &TreeNode) -> &TreeNode {
    let mut n = node;
    while n.children.len() == 1 {
        n = &n.children[0];
    }
    n
}

impl TreeRecord {
    pub fn from_tree(root: &TreeNode, importance: &[LayerImportance]) -> TreeRecord {
        let n = collapse(root);
        TreeRecord {
            prefix: n.prefix.clone(),
            layer: n.layer.filter(|_| !n.is_leaf()),
            n: n.members.len(),
            p_value: n.split.map(|s| s.p_value),
            importance: n
                .layer
                .filter(|_| !n.is_leaf())
                .and_then(|l| importance.get(l - 1))
                .map(|imp| imp.values.clone())
                .unwrap_or_default(),
            children: n.children.iter().map(|c| TreeRecord::from_tree(c, importance)).collect(),
            leaf: n.leaf.clone(),
        }
    }

    pub fn walk(&self) -> Vec<&TreeRecord> {
        let mut out = vec![self];
        let mut k = 0;
        while k < out.len() {
            let n = out[k];
            out.extend(n.children.iter());
            k += 1;
        }
        out
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.3}")).unwrap_or_else(|| "NA".into())
}

fn top_covariates(importance: &[f64], names: &[String], k: usize) -> String {
    let mut idx: Vec<usize> = (0..importance.len()).filter(|&i| importance[i] > 0.0).collect();
    idx.sort_by(|&a, &b| importance[b].total_cmp(&importance[a]).then(a.cmp(&b)));
    idx.truncate(k);
    if idx.is_empty() {
        return "(no covariates)".into();
    }
    idx.iter()
        .map(|&i| {
            let name = names.get(i).cloned().unwrap_or_else(|| format!("x{i}"));
            format!("{name} ({:.2})", importance[i])
        })
        .collect::<Vec<_>>()
        .join("\\n")
}

/// Graphviz rendering of the compressed tree.
pub fn tree_to_dot(root: &TreeNode, importance: &[LayerImportance], feature_names: &[String]) -> String {
    let rec = TreeRecord::from_tree(root, importance);
    let mut out = String::from("digraph survival_tree {\n  node [shape=box, fontname=\"Helvetica\"];\n");
    let mut next_id = 0usize;
    fn emit(r: &TreeRecord, names: &[String], out: &mut String, next_id: &mut usize) -> usize {
        let id = *next_id;
        *next_id += 1;
        match &r.leaf {
            Some(leaf) => {
                let _ = writeln!(
                    out,
                    "  n{id} [label=\"n = {}\\nrisk = {:.4}\\nKM median = {}\", style=rounded];",
                    leaf.n,
                    leaf.risk,
                    fmt_opt(leaf.km_median)
                );
            }
            None => {
                let _ = writeln!(
                    out,
                    "  n{id} [label=\"layer {}\\n{}\\np = {}\\nn = {}\"];",
                    r.layer.unwrap_or(0),
                    top_covariates(&r.importance, names, 3),
                    r.p_value.map(|p| format!("{p:.3e}")).unwrap_or_else(|| "NA".into()),
                    r.n
                );
                for c in &r.children {
                    let side = c.prefix.get(r.prefix.len()).copied().unwrap_or(0);
                    let child = emit(c, names, out, next_id);
                    let _ = writeln!(out, "  n{id} -> n{child} [label=\"o={side}\"];");
                }
            }
        }
        id
    }
    emit(&rec, feature_names, &mut out, &mut next_id);
    out.push_str("}\n");
    out
}

pub fn tree_to_json(root: &TreeNode, importance: &[LayerImportance]) -> Result<String> {
    Ok(serde_json::to_string_pretty(&TreeRecord::from_tree(root, importance))?)
}

pub fn tree_from_json(s: &str) -> Result<TreeRecord> {
    Ok(serde_json::from_str(s)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TreeFormat {
    Dot,
    Json,
}

pub fn export_tree<P: AsRef<Path>>(
    root: &TreeNode,
    net: &ReluNetwork,
    feature_names: &[String],
    format: TreeFormat,
    path: P,
) -> Result<()> {
    let importance = covariate_importance(net);
    let body = match format {
        TreeFormat::Dot => tree_to_dot(root, &importance, feature_names),
        TreeFormat::Json => tree_to_json(root, &importance)?,
    };
    std::fs::write(path, body)?;
    Ok(())
}
