// SPDX-License-Identifier: Apache-2.0

//! Graph-based test matrices.
//!
//! A document lists axes in order, each as a `[name]` section followed by one
//! choice per line. `compat: A B` lines connect choices on adjacent axes. An
//! adjacent axis pair without any compat line is fully compatible; once a pair
//! has at least one compat line, only the listed pairs are.
//!
//! ```text
//! [platform]
//! zcu102
//! juno
//! [application]
//! matmul
//! pagerank
//! compat: juno matmul
//! compat: zcu102 matmul
//! compat: zcu102 pagerank
//! ```

use std::collections::{BTreeSet, HashMap};
use std::fmt;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("line {line}: {msg}")]
pub struct MatrixError {
    pub line: usize,
    pub msg: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Axis {
    pub name: String,
    pub choices: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TestMatrixGraph {
    pub axes: Vec<Axis>,
    /// Per adjacent pair (i, i+1): allowed (choice on i, choice on i+1)
    /// index pairs, or `None` for full compatibility.
    pub compat: Vec<Option<BTreeSet<(usize, usize)>>>,
}

/// A prefix that cannot be completed: no choice on `axis` is compatible.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeadEnd {
    pub prefix: Vec<String>,
    pub axis: String,
}

impl fmt::Display for DeadEnd {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "no compatible `{}` choice after {}", self.axis, self.prefix.join(" / "))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Expansion {
    pub tuples: Vec<Vec<String>>,
    pub dead_ends: Vec<DeadEnd>,
}

impl TestMatrixGraph {
    pub fn parse(text: &str) -> Result<Self, MatrixError> {
        let err = |line: usize, msg: String| MatrixError { line, msg };
        let mut axes: Vec<Axis> = Vec::new();
        // choice name -> (axis, index)
        let mut index: HashMap<String, (usize, usize)> = HashMap::new();
        let mut edges: Vec<((usize, usize), (usize, usize))> = Vec::new();

        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            if let Some(rest) = content.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .map(str::trim)
                    .filter(|n| !n.is_empty())
                    .ok_or_else(|| err(line, format!("bad axis header `{content}`")))?;
                if axes.iter().any(|a| a.name == name) {
                    return Err(err(line, format!("axis `{name}` declared twice")));
                }
                axes.push(Axis {
                    name: name.to_string(),
                    choices: Vec::new(),
                });
            } else if let Some(rest) = content.strip_prefix("compat:") {
                let names: Vec<&str> = rest.split_whitespace().collect();
                let [a, b] = names[..] else {
                    return Err(err(line, "compat needs exactly two choices".into()));
                };
                let look = |n: &str| {
                    index
                        .get(n)
                        .copied()
                        .ok_or_else(|| err(line, format!("unknown choice `{n}`")))
                };
                let (mut x, mut y) = (look(a)?, look(b)?);
                if x.0 > y.0 {
                    std::mem::swap(&mut x, &mut y);
                }
                if y.0 != x.0 + 1 {
                    return Err(err(line, format!("`{a}` and `{b}` are not on adjacent axes")));
                }
                edges.push((x, y));
            } else {
                let ai = axes.len().wrapping_sub(1);
                let Some(axis) = axes.last_mut() else {
                    return Err(err(line, format!("choice `{content}` before any axis")));
                };
                if content.split_whitespace().count() != 1 {
                    return Err(err(line, format!("choice `{content}` contains whitespace")));
                }
                if index.contains_key(content) {
                    return Err(err(line, format!("choice `{content}` declared twice")));
                }
                index.insert(content.to_string(), (ai, axis.choices.len()));
                axis.choices.push(content.to_string());
            }
        }
        if let Some(a) = axes.iter().find(|a| a.choices.is_empty()) {
            return Err(err(0, format!("axis `{}` has no choices", a.name)));
        }
        let mut compat: Vec<Option<BTreeSet<(usize, usize)>>> = vec![None; axes.len().saturating_sub(1)];
        for (x, y) in edges {
            compat[x.0].get_or_insert_with(BTreeSet::new).insert((x.1, y.1));
        }
        Ok(Self { axes, compat })
    }

    pub fn compatible(&self, axis: usize, a: usize, b: usize) -> bool {
        match &self.compat[axis] {
            None => true,
            Some(set) => set.contains(&(a, b)),
        }
    }

    fn names(&self, path: &[usize]) -> Vec<String> {
        path.iter()
            .enumerate()
            .map(|(k, &c)| self.axes[k].choices[c].clone())
            .collect()
    }
}

/// Depth-first flattening in axis order, choices in declaration order.
pub fn expand(graph: &TestMatrixGraph) -> Expansion {
    let mut out = Expansion::default();
    if graph.axes.is_empty() {
        return out;
    }
    let mut path = Vec::with_capacity(graph.axes.len());
    walk(graph, &mut path, &mut out);
    out
}

fn walk(g: &TestMatrixGraph, path: &mut Vec<usize>, out: &mut Expansion) {
    let k = path.len();
    if k == g.axes.len() {
        out.tuples.push(g.names(path));
        return;
    }
    let mut any = false;
    for c in 0..g.axes[k].choices.len() {
        if k > 0 && !g.compatible(k - 1, path[k - 1], c) {
            continue;
        }
        any = true;
        path.push(c);
        walk(g, path, out);
        path.pop();
    }
    if !any {
        out.dead_ends.push(DeadEnd {
            prefix: g.names(path),
            axis: g.axes[k].name.clone(),
        });
    }
}

pub fn expand_matrix(text: &str) -> Result<Expansion, MatrixError> {
    Ok(expand(&TestMatrixGraph::parse(text)?))
}

/// Reference enumeration: every element of the Cartesian product, filtered.
pub fn brute_force(graph: &TestMatrixGraph) -> Vec<Vec<String>> {
    if graph.axes.is_empty() {
        return Vec::new();
    }
    let mut all: Vec<Vec<usize>> = vec![Vec::new()];
    for axis in &graph.axes {
        all = all
            .into_iter()
            .flat_map(|p| {
                (0..axis.choices.len()).map(move |c| {
                    let mut q = p.clone();
                    q.push(c);
                    q
                })
            })
            .collect();
    }
    all.into_iter()
        .filter(|p| p.windows(2).enumerate().all(|(k, w)| graph.compatible(k, w[0], w[1])))
        .map(|p| graph.names(&p))
        .collect()
}
