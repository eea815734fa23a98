//! The K-tree: a height-balanced cluster tree.
//!
//! Like a B⁺-tree, all data lives in leaves on one level and the internal
//! nodes form a search tree, but the keys are centroids and search follows
//! the nearest key (Euclidean, ties to the lower index). An internal node
//! with `n` children holds `n` keys, `1 ≤ n ≤ m` for order `m`.
//!
//! Insertion walks the nearest-key path, folding the new vector into every
//! key on the way down so each key stays the mean of the data beneath it. A
//! leaf that overflows to `m + 1` vectors is split with 2-means; the two
//! resulting centroids replace the parent's key, which may overflow in turn.
//! A root split grows the tree by one level.
//!
//! Levels are numbered from the root (level 1) down; the leaves sit at level
//! `depth` and the keys of level `depth − 1` are the codebook.

use std::fmt::Write as _;

use crate::corpus::format_sig9;
use crate::error::{Error, Result};
use crate::eval::Clustering;
use crate::kmeans::{kmeans, nearest, LloydParams};
use crate::vectors::{dot_slices, weighted_mean, DenseVector};
use crate::{rng_from_seed, Rng};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KTreeConfig {
    /// Maximum number of keys per internal node and vectors per leaf.
    pub order: usize,
    /// Stopping rule for the 2-means runs that split nodes.
    pub split: LloydParams,
}

impl KTreeConfig {
    pub fn new(order: usize) -> Result<Self> {
        if order < 2 {
            return Err(Error::InvalidArgument(format!(
                "K-tree order must be at least 2, got {order}"
            )));
        }
        Ok(Self {
            order,
            split: LloydParams::default(),
        })
    }
}

#[derive(Debug, Clone, Default)]
pub struct Leaf {
    ids: Vec<String>,
    vectors: Vec<DenseVector>,
}

impl Leaf {
    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn vectors(&self) -> &[DenseVector] {
        &self.vectors
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct Internal {
    keys: Vec<DenseVector>,
    counts: Vec<usize>,
    children: Vec<Node>,
}

impl Internal {
    pub fn keys(&self) -> &[DenseVector] {
        &self.keys
    }

    /// Number of data vectors beneath each key.
    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn children(&self) -> &[Node] {
        &self.children
    }
}

#[derive(Debug, Clone)]
pub enum Node {
    Leaf(Leaf),
    Internal(Internal),
}

impl Node {
    pub fn is_leaf(&self) -> bool {
        matches!(self, Node::Leaf(_))
    }

    /// Keys for an internal node, nothing for a leaf.
    pub fn keys(&self) -> &[DenseVector] {
        match self {
            Node::Leaf(_) => &[],
            Node::Internal(n) => &n.keys,
        }
    }

    pub fn children(&self) -> &[Node] {
        match self {
            Node::Leaf(_) => &[],
            Node::Internal(n) => &n.children,
        }
    }

    /// Data vectors in this subtree.
    pub fn size(&self) -> usize {
        match self {
            Node::Leaf(l) => l.len(),
            Node::Internal(n) => n.counts.iter().sum(),
        }
    }

    fn collect_entries<'a>(&'a self, out: &mut Vec<(&'a str, &'a DenseVector)>) {
        match self {
            Node::Leaf(l) => out.extend(l.ids.iter().map(String::as_str).zip(&l.vectors)),
            Node::Internal(n) => n.children.iter().for_each(|c| c.collect_entries(out)),
        }
    }

    fn collect_ids<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            Node::Leaf(l) => out.extend(l.ids.iter().map(String::as_str)),
            Node::Internal(n) => n.children.iter().for_each(|c| c.collect_ids(out)),
        }
    }
}

/// Distance evaluations spent so far, split by purpose.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DistanceCounts {
    /// Nearest-key comparisons on insertion paths.
    pub search: u64,
    /// Evaluations inside 2-means splits (seeding and Lloyd iterations).
    pub split: u64,
}

impl DistanceCounts {
    pub fn total(&self) -> u64 {
        self.search + self.split
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LevelStats {
    /// 1 for the root.
    pub level: usize,
    pub nodes: usize,
    /// Keys held by the level's nodes, i.e. the clusters it defines; zero for
    /// the leaf level.
    pub clusters: usize,
}

struct Branch {
    key: DenseVector,
    count: usize,
    node: Node,
}

struct SplitContext<'a> {
    config: &'a KTreeConfig,
    rng: &'a mut Rng,
    counts: &'a mut DistanceCounts,
}

impl SplitContext<'_> {
    /// 2-means partition of `points` into (first, second) index groups.
    fn bipartition(&mut self, points: &[DenseVector]) -> Result<(Vec<usize>, Vec<usize>)> {
        let result = kmeans(points, 2, self.config.split, self.rng)?;
        self.counts.split += result.distance_evals;
        let (mut a, mut b) = (Vec::new(), Vec::new());
        for (i, &c) in result.assignment.iter().enumerate() {
            if c == 0 {
                a.push(i)
            } else {
                b.push(i)
            }
        }
        Ok((a, b))
    }

    fn split_leaf(&mut self, leaf: Leaf) -> Result<(Branch, Branch)> {
        let (a, b) = self.bipartition(&leaf.vectors)?;
        let Leaf { ids, vectors } = leaf;
        let mut slots: Vec<Option<(String, DenseVector)>> =
            ids.into_iter().zip(vectors).map(Some).collect();
        let mut make = |group: &[usize]| -> Result<Branch> {
            let mut part = Leaf::default();
            for &i in group {
                let (id, v) = slots[i].take().expect("each index used once");
                part.ids.push(id);
                part.vectors.push(v);
            }
            Ok(Branch {
                key: weighted_mean(&part.vectors, &vec![1.0; part.len()])?,
                count: part.len(),
                node: Node::Leaf(part),
            })
        };
        Ok((make(&a)?, make(&b)?))
    }

    /// Partitions the keys with unweighted 2-means, then re-derives each half's
    /// key as the count-weighted mean of its keys so keys remain exact subtree
    /// means.
    fn split_internal(&mut self, node: Internal) -> Result<(Branch, Branch)> {
        let (a, b) = self.bipartition(&node.keys)?;
        let mut slots: Vec<Option<(DenseVector, usize, Node)>> = node
            .keys
            .into_iter()
            .zip(node.counts)
            .zip(node.children)
            .map(|((k, c), n)| Some((k, c, n)))
            .collect();
        let mut make = |group: &[usize]| -> Result<Branch> {
            let mut part = Internal {
                keys: Vec::with_capacity(group.len()),
                counts: Vec::with_capacity(group.len()),
                children: Vec::with_capacity(group.len()),
            };
            for &i in group {
                let (k, c, n) = slots[i].take().expect("each index used once");
                part.keys.push(k);
                part.counts.push(c);
                part.children.push(n);
            }
            let weights: Vec<f64> = part.counts.iter().map(|&c| c as f64).collect();
            Ok(Branch {
                key: weighted_mean(&part.keys, &weights)?,
                count: part.counts.iter().sum(),
                node: Node::Internal(part),
            })
        };
        Ok((make(&a)?, make(&b)?))
    }
}

/// A K-tree over `(document id, vector)` pairs.
#[derive(Debug, Clone)]
pub struct KTree {
    root: Node,
    config: KTreeConfig,
    size: usize,
    dim: Option<usize>,
    rng: Rng,
    distances: DistanceCounts,
    rearranged: bool,
}

impl KTree {
    /// An empty tree: a single empty leaf. `seed` drives the split seeding.
    pub fn new(config: KTreeConfig, seed: u64) -> Self {
        Self {
            root: Node::Leaf(Leaf::default()),
            config,
            size: 0,
            dim: None,
            rng: rng_from_seed(seed),
            distances: DistanceCounts::default(),
            rearranged: false,
        }
    }

    /// Inserts the vectors one by one in the given order.
    pub fn build<I>(entries: I, config: KTreeConfig, seed: u64) -> Result<Self>
    where
        I: IntoIterator<Item = (String, DenseVector)>,
    {
        let mut tree = Self::new(config, seed);
        for (id, v) in entries {
            tree.insert(id, v)?;
        }
        if tree.size == 0 {
            return Err(Error::Empty("K-tree input"));
        }
        Ok(tree)
    }

    pub fn config(&self) -> &KTreeConfig {
        &self.config
    }

    pub fn root(&self) -> &Node {
        &self.root
    }

    pub fn len(&self) -> usize {
        self.size
    }

    pub fn is_empty(&self) -> bool {
        self.size == 0
    }

    pub fn dim(&self) -> Option<usize> {
        self.dim
    }

    pub fn distance_counts(&self) -> DistanceCounts {
        self.distances
    }

    /// Whether [`rearrange`](Self::rearrange) has run; keys are then stale
    /// and leaves may hold more than `m` vectors.
    pub fn is_rearranged(&self) -> bool {
        self.rearranged
    }

    /// Number of levels, counting the leaves.
    pub fn depth(&self) -> usize {
        let mut depth = 1;
        let mut node = &self.root;
        while let Node::Internal(n) = node {
            depth += 1;
            node = &n.children[0];
        }
        depth
    }

    pub fn insert(&mut self, id: impl Into<String>, v: DenseVector) -> Result<()> {
        match self.dim {
            Some(d) if d != v.dim() => {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    found: v.dim(),
                })
            }
            None => self.dim = Some(v.dim()),
            _ => {}
        }
        let mut ctx = SplitContext {
            config: &self.config,
            rng: &mut self.rng,
            counts: &mut self.distances,
        };
        if let Some((left, right)) = insert_into(&mut self.root, id.into(), v, &mut ctx)? {
            self.root = Node::Internal(Internal {
                keys: vec![left.key, right.key],
                counts: vec![left.count, right.count],
                children: vec![left.node, right.node],
            });
        }
        self.size += 1;
        Ok(())
    }

    /// Nodes at `level` (root = 1), left to right.
    pub fn nodes_at_level(&self, level: usize) -> Vec<&Node> {
        let mut frontier = vec![&self.root];
        for _ in 1..level {
            frontier = frontier.iter().flat_map(|n| n.children()).collect();
        }
        if level == 0 {
            frontier.clear();
        }
        frontier
    }

    fn check_cluster_level(&self, level: usize) -> Result<()> {
        let depth = self.depth();
        if level == 0 || level >= depth {
            return Err(Error::Tree(format!(
                "level {level} out of range: a depth-{depth} tree has cluster levels 1..={}",
                depth.saturating_sub(1)
            )));
        }
        Ok(())
    }

    /// Keys of the nodes at `level`, left to right.
    pub fn keys_at_level(&self, level: usize) -> Result<Vec<DenseVector>> {
        self.check_cluster_level(level)?;
        Ok(self
            .nodes_at_level(level)
            .into_iter()
            .flat_map(|n| n.keys().iter().cloned())
            .collect())
    }

    /// The codebook: keys of the level immediately above the leaves.
    pub fn codebook(&self) -> Result<Vec<DenseVector>> {
        let depth = self.depth();
        if depth < 2 {
            return Err(Error::Tree("a single-leaf tree has no codebook yet".into()));
        }
        self.keys_at_level(depth - 1)
    }

    /// Clusters defined by the tree's own structure at `level`: every key of
    /// that level is one cluster holding the documents beneath it. Cluster ids
    /// follow the left-to-right key order; documents are listed in leaf order.
    pub fn clusters_at_level(&self, level: usize) -> Result<Clustering> {
        self.check_cluster_level(level)?;
        let mut ids = Vec::with_capacity(self.size);
        let mut clusters = Vec::with_capacity(self.size);
        let mut next = 0;
        for node in self.nodes_at_level(level) {
            for child in node.children() {
                let mut members = Vec::new();
                child.collect_ids(&mut members);
                clusters.extend(std::iter::repeat_n(next, members.len()));
                ids.extend(members.into_iter().map(str::to_owned));
                next += 1;
            }
        }
        Clustering::new(ids, clusters, next)
    }

    /// Clusters given by the leaves, i.e. [`clusters_at_level`] at the
    /// codebook level. A single-leaf tree is one cluster.
    ///
    /// [`clusters_at_level`]: Self::clusters_at_level
    pub fn leaf_clusters(&self) -> Result<Clustering> {
        match self.depth() {
            1 => {
                let mut ids = Vec::new();
                self.root.collect_ids(&mut ids);
                let n = ids.len();
                Clustering::new(ids.into_iter().map(str::to_owned).collect(), vec![0; n], 1)
            }
            d => self.clusters_at_level(d - 1),
        }
    }

    /// Every `(id, vector)` in leaf order.
    pub fn entries(&self) -> Vec<(&str, &DenseVector)> {
        let mut out = Vec::with_capacity(self.size);
        self.root.collect_entries(&mut out);
        out
    }

    /// Node and cluster counts per level, root first.
    pub fn level_stats(&self) -> Vec<LevelStats> {
        (1..=self.depth())
            .map(|level| {
                let nodes = self.nodes_at_level(level);
                LevelStats {
                    level,
                    nodes: nodes.len(),
                    clusters: nodes.iter().map(|n| n.keys().len()).sum(),
                }
            })
            .collect()
    }

    /// Re-routes every data vector from the root to the leaf its nearest-key
    /// path now reaches, without touching any key. Leaves left empty, and
    /// internal nodes left without children, are removed along with their
    /// keys; counts are recomputed. A single-leaf tree is left as is.
    pub fn rearrange(&mut self) {
        if self.depth() < 2 {
            return;
        }
        let mut drained = Vec::with_capacity(self.size);
        drain_leaves(&mut self.root, &mut drained);
        for (id, v) in drained {
            let mut node = &mut self.root;
            loop {
                match node {
                    Node::Internal(n) => {
                        let (i, _) = nearest(&v, &n.keys);
                        node = &mut n.children[i];
                    }
                    Node::Leaf(l) => {
                        l.ids.push(id);
                        l.vectors.push(v);
                        break;
                    }
                }
            }
        }
        prune(&mut self.root);
        self.rearranged = true;
    }

    /// Text dump, depth first, one node per line:
    /// `<level> <key_index> <count> <centroid weights…>`, where the centroid
    /// is the parent's key for the node (the overall mean for the root) and
    /// leaf lines end with their member ids.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        if self.size == 0 {
            return out;
        }
        let root_centroid = match &self.root {
            Node::Leaf(l) => weighted_mean(&l.vectors, &vec![1.0; l.len()]),
            Node::Internal(n) => {
                let w: Vec<f64> = n.counts.iter().map(|&c| c as f64).collect();
                weighted_mean(&n.keys, &w)
            }
        }
        .expect("non-empty root");
        dump_node(&self.root, 1, 0, self.size, &root_centroid, &mut out);
        out
    }
}

fn insert_into(
    node: &mut Node,
    id: String,
    v: DenseVector,
    ctx: &mut SplitContext<'_>,
) -> Result<Option<(Branch, Branch)>> {
    let order = ctx.config.order;
    match node {
        Node::Leaf(leaf) => {
            leaf.ids.push(id);
            leaf.vectors.push(v);
            if leaf.len() <= order {
                return Ok(None);
            }
            let full = std::mem::take(leaf);
            ctx.split_leaf(full).map(Some)
        }
        Node::Internal(n) => {
            let (i, _) = nearest(&v, &n.keys);
            ctx.counts.search += n.keys.len() as u64;
            n.keys[i].update_mean(&v, n.counts[i])?;
            n.counts[i] += 1;
            let Some((left, right)) = insert_into(&mut n.children[i], id, v, ctx)? else {
                return Ok(None);
            };
            n.keys[i] = left.key;
            n.counts[i] = left.count;
            n.children[i] = left.node;
            n.keys.insert(i + 1, right.key);
            n.counts.insert(i + 1, right.count);
            n.children.insert(i + 1, right.node);
            if n.keys.len() <= order {
                return Ok(None);
            }
            let full = std::mem::replace(
                n,
                Internal {
                    keys: Vec::new(),
                    counts: Vec::new(),
                    children: Vec::new(),
                },
            );
            ctx.split_internal(full).map(Some)
        }
    }
}

fn drain_leaves(node: &mut Node, out: &mut Vec<(String, DenseVector)>) {
    match node {
        Node::Leaf(l) => {
            let Leaf { ids, vectors } = std::mem::take(l);
            out.extend(ids.into_iter().zip(vectors));
        }
        Node::Internal(n) => n.children.iter_mut().for_each(|c| drain_leaves(c, out)),
    }
}

/// Drops empty subtrees and refreshes counts; returns the subtree size.
fn prune(node: &mut Node) -> usize {
    match node {
        Node::Leaf(l) => l.len(),
        Node::Internal(n) => {
            let sizes: Vec<usize> = n.children.iter_mut().map(prune).collect();
            let mut keep = sizes.iter().map(|&s| s > 0);
            n.keys.retain(|_| keep.next().unwrap());
            let mut keep = sizes.iter().map(|&s| s > 0);
            n.children.retain(|_| keep.next().unwrap());
            n.counts = sizes.into_iter().filter(|&s| s > 0).collect();
            n.counts.iter().sum()
        }
    }
}

fn dump_node(
    node: &Node,
    level: usize,
    key_index: usize,
    count: usize,
    centroid: &DenseVector,
    out: &mut String,
) {
    write!(out, "{level} {key_index} {count}").unwrap();
    for w in centroid.iter() {
        write!(out, " {}", format_sig9(*w)).unwrap();
    }
    match node {
        Node::Leaf(l) => {
            for id in &l.ids {
                write!(out, " {id}").unwrap();
            }
            out.push('\n');
        }
        Node::Internal(n) => {
            out.push('\n');
            for (i, child) in n.children.iter().enumerate() {
                dump_node(child, level + 1, i, n.counts[i], &n.keys[i], out);
            }
        }
    }
}

/// Assigns each vector to the centroid with the highest cosine similarity,
/// ties to the lower index. Zero vectors go to cluster 0 and are counted in
/// [`Clustering::fallbacks`].
pub fn assign_by_cosine(
    centroids: &[DenseVector],
    ids: &[String],
    vectors: &[DenseVector],
) -> Result<Clustering> {
    let first = centroids.first().ok_or(Error::Empty("centroids"))?;
    if ids.len() != vectors.len() {
        return Err(Error::InvalidArgument(format!(
            "{} ids for {} vectors",
            ids.len(),
            vectors.len()
        )));
    }
    let dim = first.dim();
    let mut norms = Vec::with_capacity(centroids.len());
    for c in centroids {
        if c.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: c.dim(),
            });
        }
        let norm = c.norm();
        if norm == 0.0 {
            return Err(Error::ZeroNorm);
        }
        norms.push(norm);
    }
    let mut fallbacks = 0;
    let mut assignment = Vec::with_capacity(vectors.len());
    for v in vectors {
        if v.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: v.dim(),
            });
        }
        let vn = v.norm();
        if vn == 0.0 {
            fallbacks += 1;
            assignment.push(0);
            continue;
        }
        let mut best = (0, f64::NEG_INFINITY);
        for (j, (c, cn)) in centroids.iter().zip(&norms).enumerate() {
            let sim = dot_slices(v, c) / (vn * cn);
            if sim > best.1 {
                best = (j, sim);
            }
        }
        assignment.push(best.0);
    }
    let mut clustering = Clustering::new(ids.to_vec(), assignment, centroids.len())?;
    clustering.fallbacks = fallbacks;
    Ok(clustering)
}
