//! DAG topologies, outgoing depth and the transform into a layered digraph.
//!
//! Vertex ids are dense `0..N`. Identity vertices inserted by edge expansion
//! take ids `N, N+1, ...` in insertion order. All transforms return new values.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Edge = (usize, usize);

/// A directed graph over dense vertex ids with derived adjacency lists.
///
/// `incoming[i]` holds the superiors of `i` and `outgoing[i]` its
/// subordinates, both in ascending vertex id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Topology {
    vertices: usize,
    edges: BTreeSet<Edge>,
    labels: BTreeMap<usize, String>,
    incoming: Vec<Vec<usize>>,
    outgoing: Vec<Vec<usize>>,
}

impl Topology {
    pub fn new(vertices: usize, edges: impl IntoIterator<Item = Edge>) -> Result<Self> {
        Self::with_labels(vertices, edges, BTreeMap::new())
    }

    pub fn with_labels(
        vertices: usize,
        edges: impl IntoIterator<Item = Edge>,
        labels: BTreeMap<usize, String>,
    ) -> Result<Self> {
        if vertices == 0 {
            return Err(Error::Topology("vertex count must be positive".into()));
        }
        let edges: BTreeSet<Edge> = edges.into_iter().collect();
        if let Some(&(i, j)) = edges.iter().find(|&&(i, j)| i >= vertices || j >= vertices) {
            return Err(Error::Topology(format!(
                "edge ({i}, {j}) references a vertex outside 0..{vertices}"
            )));
        }
        if let Some(id) = labels.keys().find(|&&id| id >= vertices) {
            return Err(Error::Topology(format!("label for unknown vertex {id}")));
        }
        let mut incoming = vec![Vec::new(); vertices];
        let mut outgoing = vec![Vec::new(); vertices];
        // BTreeSet iteration is sorted by (i, j), so both lists come out ascending.
        for &(i, j) in &edges {
            outgoing[i].push(j);
        }
        for &(i, j) in &edges {
            incoming[j].push(i);
        }
        for list in &mut incoming {
            list.sort_unstable();
        }
        Ok(Self {
            vertices,
            edges,
            labels,
            incoming,
            outgoing,
        })
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices
    }

    pub fn edges(&self) -> &BTreeSet<Edge> {
        &self.edges
    }

    pub fn labels(&self) -> &BTreeMap<usize, String> {
        &self.labels
    }

    pub fn has_edge(&self, edge: Edge) -> bool {
        self.edges.contains(&edge)
    }

    /// Superiors of `v` (I⁺).
    pub fn incoming(&self, v: usize) -> &[usize] {
        &self.incoming[v]
    }

    /// Subordinates of `v` (I⁻).
    pub fn outgoing(&self, v: usize) -> &[usize] {
        &self.outgoing[v]
    }

    /// Sinks in ascending id; these are the motors of a runnable network.
    pub fn motors(&self) -> Vec<usize> {
        (0..self.vertices).filter(|&v| self.outgoing[v].is_empty()).collect()
    }

    pub fn sources(&self) -> Vec<usize> {
        (0..self.vertices).filter(|&v| self.incoming[v].is_empty()).collect()
    }

    pub fn validate(&self) -> ValidationReport {
        let mut report = ValidationReport {
            acyclic: true,
            cycle: None,
            has_sink: self.outgoing.iter().any(Vec::is_empty),
            consistent: true,
            errors: Vec::new(),
        };

        for v in 0..self.vertices {
            let out: Vec<usize> = self.edges.iter().filter(|e| e.0 == v).map(|e| e.1).collect();
            let inc: Vec<usize> = self.edges.iter().filter(|e| e.1 == v).map(|e| e.0).collect();
            if out != self.outgoing[v] || inc != self.incoming[v] {
                report.consistent = false;
                report
                    .errors
                    .push(format!("adjacency lists of vertex {v} disagree with the edge set"));
            }
        }

        if let Some(cycle) = self.find_cycle() {
            report.acyclic = false;
            report.errors.push(format!("directed cycle through {cycle:?}"));
            report.cycle = Some(cycle);
        }
        if !report.has_sink {
            report.errors.push("no sink vertex (no motors)".into());
        }
        report
    }

    fn ensure_valid(&self) -> Result<()> {
        let report = self.validate();
        if report.is_valid() {
            Ok(())
        } else {
            Err(Error::Topology(report.errors.join("; ")))
        }
    }

    fn find_cycle(&self) -> Option<Vec<usize>> {
        #[derive(Clone, Copy, PartialEq)]
        enum Mark {
            New,
            Open,
            Done,
        }
        let mut mark = vec![Mark::New; self.vertices];
        let mut path = Vec::new();

        fn visit(
            g: &Topology,
            v: usize,
            mark: &mut [Mark],
            path: &mut Vec<usize>,
        ) -> Option<Vec<usize>> {
            mark[v] = Mark::Open;
            path.push(v);
            for &w in &g.outgoing[v] {
                match mark[w] {
                    Mark::Open => {
                        let start = path.iter().position(|&p| p == w).unwrap_or(0);
                        return Some(path[start..].to_vec());
                    }
                    Mark::New => {
                        if let Some(c) = visit(g, w, mark, path) {
                            return Some(c);
                        }
                    }
                    Mark::Done => {}
                }
            }
            path.pop();
            mark[v] = Mark::Done;
            None
        }

        (0..self.vertices).find_map(|v| {
            if mark[v] == Mark::New {
                visit(self, v, &mut mark, &mut path)
            } else {
                None
            }
        })
    }

    /// Longest directed path length from every vertex to a sink.
    ///
    /// Memoized depth-first traversal: a vertex's depth is settled once all
    /// of its subordinates are, sinks settle at zero.
    pub fn outgoing_depth(&self) -> Result<DepthMap> {
        let mut depth: Vec<Option<usize>> = vec![None; self.vertices];
        let mut on_stack = vec![false; self.vertices];

        fn visit(
            g: &Topology,
            v: usize,
            depth: &mut [Option<usize>],
            on_stack: &mut [bool],
        ) -> Result<usize> {
            on_stack[v] = true;
            let mut best: Option<usize> = None;
            for &w in &g.outgoing[v] {
                if on_stack[w] {
                    return Err(Error::Topology(format!("cycle detected at edge ({v}, {w})")));
                }
                let dw = match depth[w] {
                    Some(d) => d,
                    None => visit(g, w, depth, on_stack)?,
                };
                best = Some(best.map_or(dw, |b| b.max(dw)));
            }
            on_stack[v] = false;
            let d = best.map_or(0, |b| b + 1);
            depth[v] = Some(d);
            Ok(d)
        }

        for v in 0..self.vertices {
            if depth[v].is_none() {
                visit(self, v, &mut depth, &mut on_stack)?;
            }
        }
        Ok(DepthMap {
            depth: depth.into_iter().map(|d| d.unwrap_or(0)).collect(),
        })
    }

    /// Replaces `edge` by a chain of `k` new vertices `N..N+k`.
    ///
    /// Returns the new topology and the inserted ids, in chain order from the
    /// superior end.
    pub fn expand_edge(&self, edge: Edge, k: usize) -> Result<(Topology, Vec<usize>)> {
        if !self.has_edge(edge) {
            return Err(Error::Topology(format!("edge {edge:?} not present")));
        }
        if k == 0 {
            return Ok((self.clone(), Vec::new()));
        }
        let (i, j) = edge;
        let mut current = self.clone();
        let mut inserted = Vec::with_capacity(k);
        let mut upper = i;
        for _ in 0..k {
            current = current.expand_once((upper, j))?;
            upper = current.vertices - 1;
            inserted.push(upper);
        }
        Ok((current, inserted))
    }

    fn expand_once(&self, (i, j): Edge) -> Result<Topology> {
        let n = self.vertices;
        let mut edges = self.edges.clone();
        edges.remove(&(i, j));
        edges.insert((i, n));
        edges.insert((n, j));
        Topology::with_labels(n + 1, edges, self.labels.clone())
    }

    pub fn to_layered(&self) -> Result<LayeredTopology> {
        self.ensure_valid()?;
        let depth = self.outgoing_depth()?;
        let mut expanded = self.clone();
        let mut provenance = BTreeMap::new();
        for &(i, j) in &self.edges {
            let gap = depth.depth[i] - depth.depth[j];
            if gap > 1 {
                let (next, inserted) = expanded.expand_edge((i, j), gap - 1)?;
                for id in inserted {
                    provenance.insert(id, (i, j));
                }
                expanded = next;
            }
        }
        LayeredTopology::from_parts(expanded, provenance)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let file: GraphFile = serde_json::from_str(text)?;
        file.try_into()
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&GraphFile::from(self)).expect("graph serializes")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text).map_err(|e| match e {
            Error::Json { source, .. } => Error::Json {
                path: Some(path.to_path_buf()),
                source,
            },
            other => other,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub acyclic: bool,
    pub cycle: Option<Vec<usize>>,
    pub has_sink: bool,
    pub consistent: bool,
    pub errors: Vec<String>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.acyclic && self.has_sink && self.consistent
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DepthMap {
    pub depth: Vec<usize>,
}

impl DepthMap {
    pub fn max_depth(&self) -> usize {
        self.depth.iter().copied().max().unwrap_or(0)
    }
}

/// An expanded topology whose edges all join consecutive layers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayeredTopology {
    pub base: Topology,
    pub layer_of: Vec<usize>,
    pub layers: Vec<Vec<usize>>,
    pub identity_vertices: BTreeSet<usize>,
    /// Inserted identity vertex -> original edge it subdivides.
    pub provenance: BTreeMap<usize, Edge>,
}

impl LayeredTopology {
    fn from_parts(base: Topology, provenance: BTreeMap<usize, Edge>) -> Result<Self> {
        let depth = base.outgoing_depth()?;
        let layer_count = depth.max_depth() + 1;
        let mut layers = vec![Vec::new(); layer_count];
        for (v, &d) in depth.depth.iter().enumerate() {
            layers[d].push(v);
        }
        let layered = Self {
            identity_vertices: provenance.keys().copied().collect(),
            base,
            layer_of: depth.depth,
            layers,
            provenance,
        };
        layered.check_layering()?;
        Ok(layered)
    }

    fn check_layering(&self) -> Result<()> {
        for &(i, j) in self.base.edges() {
            if self.layer_of[i] != self.layer_of[j] + 1 {
                return Err(Error::Topology(format!(
                    "edge ({i}, {j}) spans layers {} -> {}",
                    self.layer_of[i], self.layer_of[j]
                )));
            }
        }
        Ok(())
    }

    pub fn vertex_count(&self) -> usize {
        self.base.vertex_count()
    }

    pub fn is_identity(&self, v: usize) -> bool {
        self.identity_vertices.contains(&v)
    }

    /// Vertex count of the graph before expansion.
    pub fn original_vertex_count(&self) -> usize {
        self.base.vertex_count() - self.identity_vertices.len()
    }

    /// Vertices in ascending (layer, id) order: a topological order from the
    /// motors upward.
    pub fn bottom_up(&self) -> Vec<usize> {
        self.layers.iter().flatten().copied().collect()
    }

    /// Subordinates of `v` ordered by the original vertex each stands for, so
    /// an identity chain occupies the slot of the edge it replaced.
    pub fn subordinate_ports(&self, v: usize) -> Vec<usize> {
        let mut subs = self.base.outgoing(v).to_vec();
        subs.sort_by_key(|&s| (self.provenance.get(&s).map_or(s, |e| e.1), s));
        subs
    }

    /// Superiors of `v`, ordered like [`Self::subordinate_ports`].
    pub fn superior_ports(&self, v: usize) -> Vec<usize> {
        let mut sups = self.base.incoming(v).to_vec();
        sups.sort_by_key(|&s| (self.provenance.get(&s).map_or(s, |e| e.0), s));
        sups
    }

    /// Removes identity chains and restores the edges they subdivided.
    pub fn contract_identities(&self) -> Result<Topology> {
        let n = self.base.vertex_count();
        let original = self.original_vertex_count();
        let keys: BTreeSet<usize> = self.provenance.keys().copied().collect();
        if keys != self.identity_vertices {
            return Err(Error::Provenance(
                "identity vertex set differs from provenance keys".into(),
            ));
        }
        if let Some(&v) = keys.iter().find(|&&v| v < original || v >= n) {
            return Err(Error::Provenance(format!(
                "identity vertex {v} outside the inserted id range {original}..{n}"
            )));
        }

        let mut edges: BTreeSet<Edge> = self
            .base
            .edges()
            .iter()
            .copied()
            .filter(|&(i, j)| i < original && j < original)
            .collect();

        let mut chains: BTreeMap<Edge, usize> = BTreeMap::new();
        for &e in self.provenance.values() {
            *chains.entry(e).or_default() += 1;
        }
        let mut chain_edges = 0;
        for (&(i, j), &len) in &chains {
            if i >= original || j >= original {
                return Err(Error::Provenance(format!("edge ({i}, {j}) is not original")));
            }
            let mut at = i;
            for _ in 0..len {
                let next = self
                    .base
                    .outgoing(at)
                    .iter()
                    .copied()
                    .find(|w| self.provenance.get(w) == Some(&(i, j)));
                match next {
                    Some(w) if self.base.outgoing(w).len() == 1 => at = w,
                    _ => {
                        return Err(Error::Provenance(format!(
                            "broken identity chain for edge ({i}, {j})"
                        )))
                    }
                }
            }
            if !self.base.has_edge((at, j)) {
                return Err(Error::Provenance(format!(
                    "identity chain for ({i}, {j}) does not reach {j}"
                )));
            }
            chain_edges += len + 1;
            edges.insert((i, j));
        }
        let touching = self
            .base
            .edges()
            .iter()
            .filter(|&&(i, j)| i >= original || j >= original)
            .count();
        if touching != chain_edges {
            return Err(Error::Provenance(
                "identity vertices carry edges outside their chains".into(),
            ));
        }
        let labels = self
            .base
            .labels()
            .iter()
            .filter(|(&k, _)| k < original)
            .map(|(&k, v)| (k, v.clone()))
            .collect();
        Topology::with_labels(original, edges, labels)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&LayeredFile::from(self)).expect("layered graph serializes")
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let file: LayeredFile = serde_json::from_str(text)?;
        let base: Topology = file.graph.try_into()?;
        let mut provenance = BTreeMap::new();
        for (k, e) in file.provenance {
            let id = k
                .parse::<usize>()
                .map_err(|_| Error::Provenance(format!("bad provenance key {k:?}")))?;
            provenance.insert(id, (e[0], e[1]));
        }
        let layered = Self::from_parts(base, provenance)?;
        if layered.layer_of != file.layer_of {
            return Err(Error::Topology("layer_of disagrees with outgoing depth".into()));
        }
        if layered.identity_vertices != file.identity_vertices.into_iter().collect() {
            return Err(Error::Provenance("identity_vertices disagree with provenance".into()));
        }
        Ok(layered)
    }
}

/// Graph file: `{ "vertices": N, "edges": [[i, j], ...], "labels": {...} }`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphFile {
    pub vertices: usize,
    pub edges: Vec<[usize; 2]>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub labels: BTreeMap<String, String>,
}

impl From<&Topology> for GraphFile {
    fn from(t: &Topology) -> Self {
        Self {
            vertices: t.vertices,
            edges: t.edges.iter().map(|&(i, j)| [i, j]).collect(),
            labels: t.labels.iter().map(|(k, v)| (k.to_string(), v.clone())).collect(),
        }
    }
}

impl TryFrom<GraphFile> for Topology {
    type Error = Error;

    fn try_from(f: GraphFile) -> Result<Self> {
        let mut labels = BTreeMap::new();
        for (k, v) in f.labels {
            let id = k
                .parse::<usize>()
                .map_err(|_| Error::Topology(format!("label key {k:?} is not a vertex id")))?;
            labels.insert(id, v);
        }
        Topology::with_labels(f.vertices, f.edges.into_iter().map(|[i, j]| (i, j)), labels)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct LayeredFile {
    #[serde(flatten)]
    graph: GraphFile,
    layer_of: Vec<usize>,
    identity_vertices: Vec<usize>,
    provenance: BTreeMap<String, [usize; 2]>,
}

impl From<&LayeredTopology> for LayeredFile {
    fn from(l: &LayeredTopology) -> Self {
        Self {
            graph: GraphFile::from(&l.base),
            layer_of: l.layer_of.clone(),
            identity_vertices: l.identity_vertices.iter().copied().collect(),
            provenance: l
                .provenance
                .iter()
                .map(|(k, &(i, j))| (k.to_string(), [i, j]))
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chord() -> Topology {
        Topology::new(3, [(0, 1), (1, 2), (0, 2)]).unwrap()
    }

    #[test]
    fn validate_examples() {
        assert!(Topology::new(3, [(0, 1), (1, 2)]).unwrap().validate().is_valid());
        let cyc = Topology::new(2, [(0, 1), (1, 0)]).unwrap().validate();
        assert!(!cyc.acyclic);
        assert!(!cyc.is_valid());
        let empty = Topology::new(4, []).unwrap();
        assert!(empty.validate().is_valid());
        assert_eq!(empty.motors(), vec![0, 1, 2, 3]);
    }

    #[test]
    fn self_loop_is_a_cycle() {
        assert!(!Topology::new(1, [(0, 0)]).unwrap().validate().acyclic);
    }

    #[test]
    fn out_of_range_edges_rejected() {
        assert!(Topology::new(2, [(0, 2)]).is_err());
        assert!(Topology::new(0, []).is_err());
    }

    #[test]
    fn depth_examples() {
        let chain = Topology::new(3, [(0, 1), (1, 2)]).unwrap();
        assert_eq!(chain.outgoing_depth().unwrap().depth, vec![2, 1, 0]);
        assert_eq!(Topology::new(1, []).unwrap().outgoing_depth().unwrap().depth, vec![0]);
        assert_eq!(chord().outgoing_depth().unwrap().depth, vec![2, 1, 0]);
        let cyc = Topology::new(2, [(0, 1), (1, 0)]).unwrap();
        assert!(matches!(cyc.outgoing_depth(), Err(Error::Topology(_))));
    }

    #[test]
    fn expand_edge_examples() {
        let g = chord();
        let (same, ins) = g.expand_edge((0, 2), 0).unwrap();
        assert_eq!(same, g);
        assert!(ins.is_empty());

        let (one, ins) = g.expand_edge((0, 2), 1).unwrap();
        assert_eq!(one.vertex_count(), 4);
        assert_eq!(ins, vec![3]);
        let expected: BTreeSet<Edge> = [(0, 1), (1, 2), (0, 3), (3, 2)].into_iter().collect();
        assert_eq!(one.edges(), &expected);

        let (two, ins) = g.expand_edge((0, 2), 2).unwrap();
        assert_eq!(two.vertex_count(), 5);
        assert_eq!(ins, vec![3, 4]);
        assert!(two.has_edge((0, 3)) && two.has_edge((3, 4)) && two.has_edge((4, 2)));
        assert!(!two.has_edge((0, 2)));

        assert!(g.expand_edge((2, 0), 1).is_err());
    }

    #[test]
    fn chord_layering() {
        let l = chord().to_layered().unwrap();
        assert_eq!(l.vertex_count(), 4);
        let widths: Vec<usize> = l.layers.iter().map(Vec::len).collect();
        assert_eq!(widths, vec![1, 2, 1]);
        assert_eq!(l.provenance.get(&3), Some(&(0, 2)));
        assert_eq!(l.contract_identities().unwrap(), chord());
    }

    #[test]
    fn binary_tree_is_already_layered() {
        let g = Topology::new(7, [(4, 0), (4, 1), (5, 2), (5, 3), (6, 4), (6, 5)]).unwrap();
        let l = g.to_layered().unwrap();
        assert_eq!(l.base, g);
        let widths: Vec<usize> = l.layers.iter().map(Vec::len).collect();
        assert_eq!(widths, vec![4, 2, 1]);
        assert_eq!(l.contract_identities().unwrap(), g);
    }

    #[test]
    fn bridged_tree_gets_four_identities() {
        let mut edges = vec![(4, 0), (4, 1), (5, 2), (5, 3), (6, 4), (6, 5)];
        edges.extend((0..4).map(|m| (6, m)));
        let g = Topology::new(7, edges).unwrap();
        let l = g.to_layered().unwrap();
        assert_eq!(l.vertex_count(), 11);
        assert_eq!(l.identity_vertices, (7..11).collect());
        assert_eq!(l.provenance[&7], (6, 0));
        assert_eq!(l.provenance[&10], (6, 3));
        // The top's ports keep the original slot order: motors first, then mids.
        assert_eq!(l.subordinate_ports(6), vec![7, 8, 9, 10, 4, 5]);
        assert_eq!(l.superior_ports(0), vec![4, 7]);
        assert_eq!(l.contract_identities().unwrap(), g);
    }

    #[test]
    fn corrupted_provenance_is_rejected() {
        let mut l = chord().to_layered().unwrap();
        l.provenance.insert(3, (1, 2));
        assert!(matches!(l.contract_identities(), Err(Error::Provenance(_))));

        let mut l = chord().to_layered().unwrap();
        l.provenance.clear();
        assert!(l.contract_identities().is_err());
    }

    #[test]
    fn json_round_trips() {
        let mut labels = BTreeMap::new();
        labels.insert(0, "top".to_string());
        let g = Topology::with_labels(3, [(0, 1), (1, 2), (0, 2)], labels).unwrap();
        let back = Topology::from_json_str(&g.to_json_string()).unwrap();
        assert_eq!(back, g);

        let l = g.to_layered().unwrap();
        let back = LayeredTopology::from_json_str(&l.to_json_string()).unwrap();
        assert_eq!(back, l);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(Topology::from_json_str(r#"{"vertices": 2, "edges": [], "extra": 1}"#).is_err());
    }
}
