//! Undirected simple graphs and their edge-list file format.
//!
//! The on-disk format is line oriented and LF terminated:
//!
//! ```text
//! n=<count> k=<clusters>
//! c <node> <cluster>      (optional, one per node when k > 0)
//! e <u> <v>               (u < v, 0-based)
//! ```

use std::collections::VecDeque;
use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use num_rational::Ratio;
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("self-loop at node {0}")]
    SelfLoop(usize),
    #[error("edge ({u}, {v}) references a node outside 0..{n}")]
    NodeOutOfRange { u: usize, v: usize, n: usize },
    #[error("duplicate edge ({0}, {1})")]
    DuplicateEdge(usize, usize),
    #[error("asymmetric adjacency: {0} lists {1} but not vice versa")]
    Asymmetric(usize, usize),
    #[error("{count} isolated node(s), first is {first}")]
    Isolated { count: usize, first: usize },
    #[error("cluster labels: {0}")]
    Clusters(String),
    #[error("graph has no cluster labels")]
    MissingClusters,
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Immutable undirected simple graph with sorted adjacency lists.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    adjacency: Vec<Vec<u32>>,
    clusters: Option<Vec<u32>>,
    n_clusters: usize,
}

impl Graph {
    /// Builds a graph from an undirected edge list. Each unordered pair may appear once.
    pub fn from_edges<I>(n: usize, edges: I) -> Result<Self, GraphError>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        let mut adjacency = vec![Vec::new(); n];
        for (u, v) in edges {
            if u >= n || v >= n {
                return Err(GraphError::NodeOutOfRange { u, v, n });
            }
            if u == v {
                return Err(GraphError::SelfLoop(u));
            }
            adjacency[u].push(v as u32);
            adjacency[v].push(u as u32);
        }
        for (u, list) in adjacency.iter_mut().enumerate() {
            list.sort_unstable();
            if let Some(w) = list.windows(2).find(|w| w[0] == w[1]) {
                let v = w[0] as usize;
                return Err(GraphError::DuplicateEdge(u.min(v), u.max(v)));
            }
        }
        Ok(Self { adjacency, clusters: None, n_clusters: 0 })
    }

    /// Builds a graph from per-node neighbor lists, checking symmetry.
    pub fn from_adjacency(adjacency: Vec<Vec<u32>>) -> Result<Self, GraphError> {
        let n = adjacency.len();
        let mut sorted = adjacency;
        for (u, list) in sorted.iter_mut().enumerate() {
            list.sort_unstable();
            for &v in list.iter() {
                if v as usize >= n {
                    return Err(GraphError::NodeOutOfRange { u, v: v as usize, n });
                }
                if v as usize == u {
                    return Err(GraphError::SelfLoop(u));
                }
            }
            if let Some(w) = list.windows(2).find(|w| w[0] == w[1]) {
                return Err(GraphError::DuplicateEdge(u, w[0] as usize));
            }
        }
        for (u, list) in sorted.iter().enumerate() {
            for &v in list {
                if sorted[v as usize].binary_search(&(u as u32)).is_err() {
                    return Err(GraphError::Asymmetric(u, v as usize));
                }
            }
        }
        Ok(Self { adjacency: sorted, clusters: None, n_clusters: 0 })
    }

    /// Attaches 0-based cluster labels, one per node.
    pub fn with_clusters(mut self, labels: Vec<usize>) -> Result<Self, GraphError> {
        if labels.len() != self.n() {
            return Err(GraphError::Clusters(format!("{} labels for {} nodes", labels.len(), self.n())));
        }
        let k = labels.iter().copied().max().map_or(0, |m| m + 1);
        let mut seen = vec![false; k];
        for &c in &labels {
            seen[c] = true;
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(GraphError::Clusters(format!("cluster {missing} is empty")));
        }
        self.clusters = Some(labels.into_iter().map(|c| c as u32).collect());
        self.n_clusters = k;
        Ok(self)
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.adjacency.len()
    }

    #[inline]
    pub fn degree(&self, v: usize) -> usize {
        self.adjacency[v].len()
    }

    #[inline]
    pub fn neighbors(&self, v: usize) -> &[u32] {
        &self.adjacency[v]
    }

    pub fn degrees(&self) -> Vec<usize> {
        self.adjacency.iter().map(Vec::len).collect()
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    /// Edges as `(u, v)` with `u < v`, in lexicographic order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.adjacency
            .iter()
            .enumerate()
            .flat_map(|(u, list)| list.iter().filter(move |&&v| (v as usize) > u).map(move |&v| (u, v as usize)))
    }

    pub fn cluster_of(&self, v: usize) -> Option<usize> {
        self.clusters.as_ref().map(|c| c[v] as usize)
    }

    pub fn clusters(&self) -> Option<&[u32]> {
        self.clusters.as_deref()
    }

    pub fn n_clusters(&self) -> usize {
        self.n_clusters
    }

    pub fn isolated_nodes(&self) -> Vec<usize> {
        (0..self.n()).filter(|&v| self.degree(v) == 0).collect()
    }

    /// Fails when any node has degree zero; the dynamics divide by degree.
    pub fn ensure_no_isolated(&self) -> Result<(), GraphError> {
        let isolated = self.isolated_nodes();
        match isolated.first() {
            Some(&first) => Err(GraphError::Isolated { count: isolated.len(), first }),
            None => Ok(()),
        }
    }

    pub fn mean_degree(&self) -> f64 {
        if self.n() == 0 {
            return 0.0;
        }
        2.0 * self.edge_count() as f64 / self.n() as f64
    }

    /// Population standard deviation of the realized degrees.
    pub fn degree_std(&self) -> f64 {
        let n = self.n() as f64;
        let mean = self.mean_degree();
        let ss: f64 = self.adjacency.iter().map(|l| (l.len() as f64 - mean).powi(2)).sum();
        (ss / n).sqrt()
    }

    /// Connected-component label per node, components numbered by first node.
    pub fn components(&self) -> Vec<usize> {
        let n = self.n();
        let mut label = vec![usize::MAX; n];
        let mut next = 0;
        let mut queue = VecDeque::new();
        for s in 0..n {
            if label[s] != usize::MAX {
                continue;
            }
            label[s] = next;
            queue.push_back(s);
            while let Some(u) = queue.pop_front() {
                for &v in self.neighbors(u) {
                    let v = v as usize;
                    if label[v] == usize::MAX {
                        label[v] = next;
                        queue.push_back(v);
                    }
                }
            }
            next += 1;
        }
        label
    }

    /// Subgraph induced by the largest connected component, nodes renumbered in
    /// increasing original order. Ties go to the component containing the smallest node.
    pub fn largest_component(&self) -> Graph {
        let label = self.components();
        let k = label.iter().copied().max().map_or(0, |m| m + 1);
        let mut sizes = vec![0usize; k];
        for &c in &label {
            sizes[c] += 1;
        }
        let best = (0..k).max_by_key(|&c| (sizes[c], std::cmp::Reverse(c))).unwrap_or(0);
        let keep: Vec<usize> = (0..self.n()).filter(|&v| label[v] == best).collect();
        self.induced(&keep)
    }

    /// Subgraph induced by `nodes` (must be sorted, distinct). Cluster labels are kept.
    pub fn induced(&self, nodes: &[usize]) -> Graph {
        let mut index = vec![u32::MAX; self.n()];
        for (i, &v) in nodes.iter().enumerate() {
            index[v] = i as u32;
        }
        let adjacency = nodes
            .iter()
            .map(|&v| {
                self.neighbors(v)
                    .iter()
                    .filter_map(|&u| {
                        let j = index[u as usize];
                        (j != u32::MAX).then_some(j)
                    })
                    .collect()
            })
            .collect();
        let clusters = self.clusters.as_ref().map(|c| nodes.iter().map(|&v| c[v]).collect::<Vec<_>>());
        let mut g = Graph { adjacency, clusters: None, n_clusters: 0 };
        if let Some(labels) = clusters {
            // relabel densely so no cluster is empty
            let mut map = vec![u32::MAX; self.n_clusters];
            let mut next = 0u32;
            let dense = labels
                .iter()
                .map(|&c| {
                    if map[c as usize] == u32::MAX {
                        map[c as usize] = next;
                        next += 1;
                    }
                    map[c as usize] as usize
                })
                .collect();
            g = g.with_clusters(dense).expect("dense labels");
        }
        g
    }

    /// Minimum node expansion per cluster: `min_{v in V_k} |N_v ∩ V_k| / deg(v)`, exact.
    ///
    /// Nodes of degree zero are skipped; a cluster made only of such nodes reports 1.
    pub fn min_node_expansion(&self) -> Result<Vec<Ratio<usize>>, GraphError> {
        let labels = self.clusters.as_ref().ok_or(GraphError::MissingClusters)?;
        let mut beta = vec![Ratio::from_integer(1usize); self.n_clusters];
        for v in 0..self.n() {
            let deg = self.degree(v);
            if deg == 0 {
                continue;
            }
            let k = labels[v];
            let inside = self.neighbors(v).iter().filter(|&&u| labels[u as usize] == k).count();
            let r = Ratio::new(inside, deg);
            if r < beta[k as usize] {
                beta[k as usize] = r;
            }
        }
        Ok(beta)
    }

    /// Serializes to the edge-list text format.
    pub fn to_edge_list(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "n={} k={}", self.n(), self.n_clusters);
        if let Some(c) = &self.clusters {
            for (v, &k) in c.iter().enumerate() {
                let _ = writeln!(out, "c {v} {k}");
            }
        }
        for (u, v) in self.edges() {
            let _ = writeln!(out, "e {u} {v}");
        }
        out
    }

    /// Parses the edge-list text format.
    pub fn from_edge_list(text: &str) -> Result<Self, GraphError> {
        let mut lines = text.split('\n').enumerate().map(|(i, l)| (i + 1, l.trim_end_matches('\r')));
        let (hline, header) = lines
            .by_ref()
            .find(|(_, l)| !l.trim().is_empty())
            .ok_or(GraphError::Parse { line: 1, msg: "empty file".into() })?;
        let (n, k) = parse_header(header).map_err(|msg| GraphError::Parse { line: hline, msg })?;
        let mut edges = Vec::new();
        let mut labels: Vec<Option<usize>> = vec![None; n];
        for (line, raw) in lines {
            let l = raw.trim();
            if l.is_empty() || l.starts_with('#') {
                continue;
            }
            let err = |msg: String| GraphError::Parse { line, msg };
            let mut parts = l.split_whitespace();
            let tag = parts.next().unwrap_or_default();
            let a = parse_field(parts.next(), "first id").map_err(err)?;
            let b = parse_field(parts.next(), "second id").map_err(err)?;
            if parts.next().is_some() {
                return Err(err("trailing tokens".into()));
            }
            match tag {
                "e" => {
                    if a >= n || b >= n {
                        return Err(err(format!("node id out of range 0..{n}")));
                    }
                    if a == b {
                        return Err(err(format!("self-loop at node {a}")));
                    }
                    if a > b {
                        return Err(err(format!("edge must be written with u < v, got {a} {b}")));
                    }
                    edges.push((a, b));
                }
                "c" => {
                    if a >= n {
                        return Err(err(format!("node id {a} out of range 0..{n}")));
                    }
                    if b >= k {
                        return Err(err(format!("cluster {b} out of range 0..{k}")));
                    }
                    if labels[a].replace(b).is_some() {
                        return Err(err(format!("node {a} labelled twice")));
                    }
                }
                other => return Err(err(format!("unknown record tag {other:?}"))),
            }
        }
        let g = Graph::from_edges(n, edges)?;
        if k == 0 {
            return Ok(g);
        }
        let labels = labels
            .into_iter()
            .enumerate()
            .map(|(v, c)| c.ok_or_else(|| GraphError::Clusters(format!("node {v} has no cluster line"))))
            .collect::<Result<Vec<_>, _>>()?;
        g.with_clusters(labels)
    }

    /// SHA-256 of the canonical edge-list serialization, hex encoded.
    pub fn content_hash(&self) -> String {
        hex_digest(self.to_edge_list().as_bytes())
    }
}

fn parse_header(header: &str) -> Result<(usize, usize), String> {
    let mut n = None;
    let mut k = None;
    for tok in header.split_whitespace() {
        let (key, val) = tok.split_once('=').ok_or_else(|| format!("bad header token {tok:?}"))?;
        let val: usize = val.parse().map_err(|_| format!("bad header value {val:?}"))?;
        match key {
            "n" => n = Some(val),
            "k" => k = Some(val),
            _ => return Err(format!("unknown header key {key:?}")),
        }
    }
    Ok((n.ok_or("header missing n=")?, k.unwrap_or(0)))
}

fn parse_field(tok: Option<&str>, what: &str) -> Result<usize, String> {
    let tok = tok.ok_or_else(|| format!("missing {what}"))?;
    tok.parse().map_err(|_| format!("invalid {what} {tok:?}"))
}

pub(crate) fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

pub fn save_graph(g: &Graph, path: impl AsRef<Path>) -> Result<(), GraphError> {
    fs::write(path, g.to_edge_list())?;
    Ok(())
}

pub fn load_graph(path: impl AsRef<Path>) -> Result<Graph, GraphError> {
    Graph::from_edge_list(&fs::read_to_string(path)?)
}
