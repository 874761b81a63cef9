//! The undirected graph induced by a system's off-diagonal pattern, plus the
//! handful of BFS metrics the solvers and oracles need.

use std::collections::VecDeque;

use crate::system::{NodeId, SparseSystem};

/// Symmetric adjacency without self-loops; neighbour lists are sorted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UndirectedGraph {
    neighbors: Vec<Vec<NodeId>>,
}

impl UndirectedGraph {
    /// Builds a graph from an undirected edge list. Self-loops are ignored
    /// and repeated edges collapse.
    pub fn from_edges(n: usize, edges: impl IntoIterator<Item = (NodeId, NodeId)>) -> Self {
        let mut neighbors = vec![Vec::new(); n];
        for (i, j) in edges {
            assert!(i < n && j < n, "edge ({i}, {j}) outside graph of {n} nodes");
            if i != j {
                neighbors[i].push(j);
                neighbors[j].push(i);
            }
        }
        for list in &mut neighbors {
            list.sort_unstable();
            list.dedup();
        }
        Self { neighbors }
    }

    /// Edge `(i, j)` exists iff `a_ij != 0` or `a_ji != 0`.
    pub fn induced(sys: &SparseSystem) -> Self {
        let edges = (0..sys.n()).flat_map(|i| sys.off_diagonal(i).map(move |(j, _)| (i, j)));
        Self::from_edges(sys.n(), edges)
    }

    pub fn node_count(&self) -> usize {
        self.neighbors.len()
    }

    pub fn edge_count(&self) -> usize {
        self.neighbors.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn neighbors(&self, i: NodeId) -> &[NodeId] {
        &self.neighbors[i]
    }

    pub fn degree(&self, i: NodeId) -> usize {
        self.neighbors[i].len()
    }

    pub fn has_edge(&self, i: NodeId, j: NodeId) -> bool {
        self.neighbors[i].binary_search(&j).is_ok()
    }

    /// Undirected edges with `i < j`, in lexicographic order.
    pub fn edges(&self) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
        self.neighbors
            .iter()
            .enumerate()
            .flat_map(|(i, ns)| ns.iter().filter(move |&&j| j > i).map(move |&j| (i, j)))
    }

    /// BFS hop distances from `source`; `None` for unreachable nodes.
    pub fn bfs_distances(&self, source: NodeId) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.node_count()];
        dist[source] = Some(0);
        let mut queue = VecDeque::from([source]);
        while let Some(u) = queue.pop_front() {
            let du = dist[u].unwrap();
            for &v in &self.neighbors[u] {
                if dist[v].is_none() {
                    dist[v] = Some(du + 1);
                    queue.push_back(v);
                }
            }
        }
        dist
    }

    /// Largest finite distance from `source` (its depth when used as a root).
    pub fn eccentricity(&self, source: NodeId) -> usize {
        self.bfs_distances(source)
            .into_iter()
            .flatten()
            .max()
            .unwrap_or(0)
    }

    /// Largest distance between two connected nodes. For a disconnected graph
    /// this is the largest diameter over its components.
    pub fn diameter(&self) -> usize {
        (0..self.node_count())
            .map(|i| self.eccentricity(i))
            .max()
            .unwrap_or(0)
    }

    /// Connected components, each sorted, ordered by smallest member.
    pub fn connected_components(&self) -> Vec<Vec<NodeId>> {
        let n = self.node_count();
        let mut seen = vec![false; n];
        let mut parts = Vec::new();
        for start in 0..n {
            if seen[start] {
                continue;
            }
            seen[start] = true;
            let mut part = vec![start];
            let mut queue = VecDeque::from([start]);
            while let Some(u) = queue.pop_front() {
                for &v in &self.neighbors[u] {
                    if !seen[v] {
                        seen[v] = true;
                        part.push(v);
                        queue.push_back(v);
                    }
                }
            }
            part.sort_unstable();
            parts.push(part);
        }
        parts
    }

    /// A forest has exactly `n - c` edges, where `c` counts components.
    pub fn is_acyclic(&self) -> bool {
        self.edge_count() + self.connected_components().len() == self.node_count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// The seven-node reference tree in 0-based ids: 1-2, 1-3, 2-4, 2-5, 3-6, 3-7.
    fn example1_tree() -> UndirectedGraph {
        UndirectedGraph::from_edges(7, [(0, 1), (0, 2), (1, 3), (1, 4), (2, 5), (2, 6)])
    }

    #[test]
    fn induced_graph_of_dense_two_by_two() {
        let sys = SparseSystem::new(
            2,
            [(0, 0, 1.0), (0, 1, -0.5), (1, 0, -0.25), (1, 1, 1.0)],
            vec![1.0, 2.0],
        )
        .unwrap();
        let g = UndirectedGraph::induced(&sys);
        assert_eq!(g.edges().collect::<Vec<_>>(), vec![(0, 1)]);
    }

    #[test]
    fn induced_graph_is_symmetric_for_one_sided_entries() {
        let sys = SparseSystem::new(2, [(0, 0, 1.0), (0, 1, -1.2), (1, 1, 1.0)], vec![1.0, 1.0])
            .unwrap();
        let g = UndirectedGraph::induced(&sys);
        assert!(g.has_edge(0, 1) && g.has_edge(1, 0));
    }

    #[test]
    fn diagonal_system_has_no_edges() {
        let sys = SparseSystem::new(3, (0..3).map(|i| (i, i, 2.0)), vec![1.0; 3]).unwrap();
        assert_eq!(UndirectedGraph::induced(&sys).edge_count(), 0);
    }

    #[test]
    fn diameters() {
        assert_eq!(example1_tree().diameter(), 4);
        assert_eq!(UndirectedGraph::from_edges(1, []).diameter(), 0);
        assert_eq!(UndirectedGraph::from_edges(3, [(0, 1), (1, 2)]).diameter(), 2);
        // Disconnected: a 3-path beside an isolated node.
        assert_eq!(UndirectedGraph::from_edges(4, [(0, 1), (1, 2)]).diameter(), 2);
    }

    #[test]
    fn acyclicity() {
        assert!(example1_tree().is_acyclic());
        let loopy = UndirectedGraph::from_edges(5, [(0, 1), (0, 2), (0, 3), (1, 4), (2, 4), (3, 4)]);
        assert!(!loopy.is_acyclic());
        assert!(UndirectedGraph::from_edges(2, [(0, 1)]).is_acyclic());
        assert!(UndirectedGraph::from_edges(3, []).is_acyclic());
    }

    #[test]
    fn components() {
        assert_eq!(example1_tree().connected_components().len(), 1);
        assert_eq!(
            UndirectedGraph::from_edges(3, []).connected_components(),
            vec![vec![0], vec![1], vec![2]]
        );
        assert_eq!(
            UndirectedGraph::from_edges(4, [(0, 2), (1, 3)]).connected_components(),
            vec![vec![0, 2], vec![1, 3]]
        );
    }
}
