//! Class hierarchies: loading, validation, per-level indexing and tree queries.
//!
//! Levels are numbered from the leaves upwards: level 1 holds the leaf
//! classes and level `L` holds the single root. Within a level, nodes are
//! indexed densely `0..K_l` in ascending id order, so every matrix and
//! report derived from a taxonomy is reproducible.

use std::collections::HashMap;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, ValidationError};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaxonomyNode {
    pub id: String,
    #[serde(default)]
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent: Option<String>,
    pub level: usize,
}

impl TaxonomyNode {
    pub fn new(id: impl Into<String>, parent: Option<&str>, level: usize) -> Self {
        let id = id.into();
        Self {
            name: id.clone(),
            id,
            parent: parent.map(str::to_owned),
            level,
        }
    }
}

/// On-disk form of a taxonomy: `{"nodes": [{id, name, parent?, level}, ...]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TaxonomyDocument {
    pub nodes: Vec<TaxonomyNode>,
}

/// Child-to-parent assignment between two adjacent levels.
///
/// Conceptually a `K x I` one-hot matrix (`K` children at level `l`, `I`
/// parents at level `l + 1`); stored as the column index of each row's 1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LevelMatrix {
    level: usize,
    parent_of: Vec<usize>,
    cols: usize,
}

impl LevelMatrix {
    /// The child level `l` this matrix maps from.
    pub fn level(&self) -> usize {
        self.level
    }

    pub fn rows(&self) -> usize {
        self.parent_of.len()
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows(), self.cols)
    }

    pub fn get(&self, row: usize, col: usize) -> u8 {
        u8::from(self.parent_of[row] == col)
    }

    pub fn parent_of(&self, row: usize) -> usize {
        self.parent_of[row]
    }

    pub fn row_sums(&self) -> Vec<usize> {
        vec![1; self.rows()]
    }

    pub fn col_sums(&self) -> Vec<usize> {
        let mut sums = vec![0; self.cols];
        for &p in &self.parent_of {
            sums[p] += 1;
        }
        sums
    }

    pub fn to_array(&self) -> Array2<f64> {
        let mut m = Array2::zeros((self.rows(), self.cols));
        for (r, &c) in self.parent_of.iter().enumerate() {
            m[[r, c]] = 1.0;
        }
        m
    }
}

/// A validated, immutable class hierarchy.
#[derive(Debug, Clone)]
pub struct Taxonomy {
    nodes: Vec<TaxonomyNode>,
    /// `level_ids[l - 1]` = node ids of level `l`, sorted.
    level_ids: Vec<Vec<String>>,
    /// `parents[l - 1][k]` = index at level `l + 1` of node `k` at level `l`.
    parents: Vec<Vec<usize>>,
    /// `children[l - 1][i]` = indices at level `l - 1` of node `i`'s children.
    children: Vec<Vec<Vec<usize>>>,
    /// `ancestors[leaf][l - 1]` = index of the leaf's level-`l` ancestor.
    ancestors: Vec<Vec<usize>>,
    lookup: HashMap<String, (usize, usize)>,
}

impl Taxonomy {
    pub fn from_nodes(nodes: Vec<TaxonomyNode>) -> Result<Self> {
        validate(&nodes)?;

        let levels = nodes.iter().map(|n| n.level).max().unwrap_or(0);
        let mut level_ids: Vec<Vec<String>> = vec![Vec::new(); levels];
        for n in &nodes {
            level_ids[n.level - 1].push(n.id.clone());
        }
        for ids in &mut level_ids {
            ids.sort();
        }

        let mut lookup = HashMap::with_capacity(nodes.len());
        for (l, ids) in level_ids.iter().enumerate() {
            for (i, id) in ids.iter().enumerate() {
                lookup.insert(id.clone(), (l + 1, i));
            }
        }

        let by_id: HashMap<&str, &TaxonomyNode> =
            nodes.iter().map(|n| (n.id.as_str(), n)).collect();
        let mut parents = Vec::with_capacity(levels.saturating_sub(1));
        let mut children: Vec<Vec<Vec<usize>>> = level_ids
            .iter()
            .map(|ids| vec![Vec::new(); ids.len()])
            .collect();
        for l in 1..levels {
            let row: Vec<usize> = level_ids[l - 1]
                .iter()
                .map(|id| {
                    let parent = by_id[id.as_str()].parent.as_deref().expect("validated");
                    lookup[parent].1
                })
                .collect();
            for (k, &p) in row.iter().enumerate() {
                children[l][p].push(k);
            }
            parents.push(row);
        }

        let leaves = level_ids.first().map_or(0, Vec::len);
        let ancestors = (0..leaves)
            .map(|leaf| {
                let mut path = Vec::with_capacity(levels);
                let mut idx = leaf;
                path.push(idx);
                for row in &parents {
                    idx = row[idx];
                    path.push(idx);
                }
                path
            })
            .collect();

        let mut nodes = nodes;
        nodes.sort_by(|a, b| a.level.cmp(&b.level).then_with(|| a.id.cmp(&b.id)));

        Ok(Self {
            nodes,
            level_ids,
            parents,
            children,
            ancestors,
            lookup,
        })
    }

    pub fn from_document(doc: TaxonomyDocument) -> Result<Self> {
        Self::from_nodes(doc.nodes)
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let doc: TaxonomyDocument = serde_json::from_str(s)?;
        Self::from_document(doc)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json_str(&text)
    }

    /// Leaves `0..k` each with a private parent, all joined under one root.
    /// The level-1 transition matrix of this tree is the identity.
    pub fn identity(k: usize) -> Self {
        let mut nodes = vec![TaxonomyNode::new("root", None, 3)];
        for i in 0..k {
            let leaf = format!("leaf{i:06}");
            let parent = format!("group{i:06}");
            nodes.push(TaxonomyNode::new(parent.clone(), Some("root"), 2));
            nodes.push(TaxonomyNode::new(leaf, Some(&parent), 1));
        }
        Self::from_nodes(nodes).expect("identity taxonomy is well formed")
    }

    pub fn to_document(&self) -> TaxonomyDocument {
        TaxonomyDocument {
            nodes: self.nodes.clone(),
        }
    }

    /// Depth `L` of the tree (number of levels, leaves included).
    pub fn levels(&self) -> usize {
        self.level_ids.len()
    }

    pub fn num_leaves(&self) -> usize {
        self.level_ids[0].len()
    }

    pub fn nodes(&self) -> &[TaxonomyNode] {
        &self.nodes
    }

    /// Number of classes `K_l` at level `l`.
    pub fn level_size(&self, level: usize) -> Result<usize> {
        self.check_level(level, 1, self.levels())?;
        Ok(self.level_ids[level - 1].len())
    }

    /// `[K_1, K_2, ..., K_L]`.
    pub fn level_sizes(&self) -> Vec<usize> {
        self.level_ids.iter().map(Vec::len).collect()
    }

    pub fn level_ids(&self, level: usize) -> Result<&[String]> {
        self.check_level(level, 1, self.levels())?;
        Ok(&self.level_ids[level - 1])
    }

    /// `(level, index)` of a node id.
    pub fn position(&self, id: &str) -> Option<(usize, usize)> {
        self.lookup.get(id).copied()
    }

    /// Parent index (at `level + 1`) of every node at `level`.
    pub fn parent_indices(&self, level: usize) -> Result<&[usize]> {
        self.check_level(level, 1, self.levels() - 1)?;
        Ok(&self.parents[level - 1])
    }

    /// Children (indices at `level - 1`) of node `index` at `level`.
    pub fn children(&self, level: usize, index: usize) -> Result<&[usize]> {
        self.check_level(level, 2, self.levels())?;
        let row = &self.children[level - 1];
        row.get(index)
            .map(Vec::as_slice)
            .ok_or(Error::IndexOutOfRange {
                index,
                len: row.len(),
            })
    }

    /// Largest number of children below any single node.
    pub fn max_children(&self) -> usize {
        self.children
            .iter()
            .flat_map(|lvl| lvl.iter().map(Vec::len))
            .max()
            .unwrap_or(0)
    }

    pub fn transition_matrix(&self, level: usize) -> Result<LevelMatrix> {
        let parent_of = self.parent_indices(level)?.to_vec();
        Ok(LevelMatrix {
            level,
            parent_of,
            cols: self.level_ids[level].len(),
        })
    }

    /// Index of the level-`level` ancestor of a leaf (identity at level 1).
    pub fn map_leaf_to_level(&self, leaf: usize, level: usize) -> Result<usize> {
        let path = self.ancestors.get(leaf).ok_or(Error::IndexOutOfRange {
            index: leaf,
            len: self.num_leaves(),
        })?;
        self.check_level(level, 1, self.levels())?;
        Ok(path[level - 1])
    }

    /// Ancestor indices of a leaf at every level, leaf first.
    pub fn ancestor_path(&self, leaf: usize) -> Result<&[usize]> {
        self.ancestors
            .get(leaf)
            .map(Vec::as_slice)
            .ok_or(Error::IndexOutOfRange {
                index: leaf,
                len: self.num_leaves(),
            })
    }

    /// Level of the lowest common ancestor of two leaves, minus one.
    pub fn lca_height(&self, a: usize, b: usize) -> Result<usize> {
        let pa = self.ancestor_path(a)?;
        let pb = self.ancestor_path(b)?;
        let h = pa
            .iter()
            .zip(pb)
            .position(|(x, y)| x == y)
            .expect("single root is a common ancestor");
        Ok(h)
    }

    fn check_level(&self, level: usize, min: usize, max: usize) -> Result<()> {
        if level < min || level > max {
            return Err(Error::LevelOutOfRange { level, min, max });
        }
        Ok(())
    }
}

fn validate(nodes: &[TaxonomyNode]) -> std::result::Result<(), ValidationError> {
    if nodes.is_empty() {
        return Err(ValidationError::Empty);
    }

    let mut index: HashMap<&str, usize> = HashMap::with_capacity(nodes.len());
    for (i, n) in nodes.iter().enumerate() {
        if index.insert(n.id.as_str(), i).is_some() {
            return Err(ValidationError::DuplicateId(n.id.clone()));
        }
        if n.level == 0 {
            return Err(ValidationError::ZeroLevel(n.id.clone()));
        }
    }

    let mut parent_of = vec![None; nodes.len()];
    for (i, n) in nodes.iter().enumerate() {
        if let Some(p) = &n.parent {
            let &pi = index
                .get(p.as_str())
                .ok_or_else(|| ValidationError::UnknownParent {
                    node: n.id.clone(),
                    parent: p.clone(),
                })?;
            parent_of[i] = Some(pi);
        }
    }

    // 0 = unvisited, 1 = on current walk, 2 = known to reach a root
    let mut state = vec![0u8; nodes.len()];
    for start in 0..nodes.len() {
        let mut walk: Vec<usize> = Vec::new();
        let mut cur = Some(start);
        while let Some(i) = cur {
            match state[i] {
                2 => break,
                1 => {
                    let from = walk.iter().position(|&w| w == i).unwrap_or(0);
                    let cycle: Vec<String> = walk[from..].iter().map(|&w| nodes[w].id.clone()).collect();
                    return Err(ValidationError::Cycle(cycle));
                }
                _ => {
                    state[i] = 1;
                    walk.push(i);
                    cur = parent_of[i];
                }
            }
        }
        for w in walk {
            state[w] = 2;
        }
    }

    let roots: Vec<&TaxonomyNode> = nodes.iter().filter(|n| n.parent.is_none()).collect();
    match roots.len() {
        0 => return Err(ValidationError::NoRoot),
        1 => {}
        _ => {
            return Err(ValidationError::MultipleRoots(
                roots.iter().map(|n| n.id.clone()).collect(),
            ))
        }
    }

    for (i, n) in nodes.iter().enumerate() {
        if let Some(pi) = parent_of[i] {
            let p = &nodes[pi];
            if p.level != n.level + 1 {
                return Err(ValidationError::ParentLevel {
                    node: n.id.clone(),
                    level: n.level,
                    parent: p.id.clone(),
                    parent_level: p.level,
                });
            }
        }
    }

    let max_level = nodes.iter().map(|n| n.level).max().unwrap_or(0);
    let root = roots[0];
    if root.level != max_level {
        return Err(ValidationError::RootNotTopmost {
            root: root.id.clone(),
            level: root.level,
            max_level,
        });
    }

    let mut has_child = vec![false; nodes.len()];
    for p in parent_of.iter().flatten() {
        has_child[*p] = true;
    }
    if let Some((i, _)) = has_child
        .iter()
        .enumerate()
        .find(|(i, &c)| !c && nodes[*i].level > 1)
    {
        return Err(ValidationError::RaggedLeaf {
            node: nodes[i].id.clone(),
            level: nodes[i].level,
        });
    }

    Ok(())
}
