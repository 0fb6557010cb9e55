//! Deletion-only user graph; connected components are the inferred clusters.
//!
//! Starts as the complete graph. Components are recomputed lazily by BFS on
//! the first query after a deletion and cached until the next one. Memory is
//! O(u²) for the explicit complete-graph adjacency, fine for u in the low
//! thousands.

use std::collections::{HashSet, VecDeque};
use std::sync::OnceLock;

use crate::error::{invalid, Result};

#[derive(Debug, Clone)]
struct Components {
    label: Vec<usize>,
    members: Vec<Vec<usize>>,
}

#[derive(Debug, Clone)]
pub struct UserGraph {
    adjacency: Vec<HashSet<usize>>,
    edge_count: usize,
    cache: OnceLock<Components>,
}

impl UserGraph {
    pub fn complete(n_users: usize) -> Result<Self> {
        if n_users == 0 {
            return Err(invalid("graph needs at least one user"));
        }
        let adjacency = (0..n_users)
            .map(|i| (0..n_users).filter(|&j| j != i).collect())
            .collect();
        Ok(Self {
            adjacency,
            edge_count: n_users * (n_users - 1) / 2,
            cache: OnceLock::new(),
        })
    }

    pub fn n_users(&self) -> usize {
        self.adjacency.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.adjacency.get(i).is_some_and(|n| n.contains(&j))
    }

    /// Neighbors of `i` in ascending order.
    pub fn neighbors(&self, i: usize) -> Vec<usize> {
        let mut v: Vec<usize> = self.adjacency[i].iter().copied().collect();
        v.sort_unstable();
        v
    }

    /// Removes `{i, j}` if present. Returns whether an edge was removed.
    pub fn delete_edge(&mut self, i: usize, j: usize) -> Result<bool> {
        let n = self.n_users();
        if i >= n || j >= n {
            return Err(invalid(format!(
                "user id out of range ({i}, {j}) for {n} users"
            )));
        }
        if i == j {
            return Err(invalid("cannot delete a self loop"));
        }
        let removed = self.adjacency[i].remove(&j);
        self.adjacency[j].remove(&i);
        if removed {
            self.edge_count -= 1;
            self.cache = OnceLock::new();
        }
        Ok(removed)
    }

    fn components_cached(&self) -> &Components {
        self.cache.get_or_init(|| {
            let n = self.n_users();
            let mut label = vec![usize::MAX; n];
            let mut members = Vec::new();
            let mut queue = VecDeque::new();
            for start in 0..n {
                if label[start] != usize::MAX {
                    continue;
                }
                let id = members.len();
                let mut comp = vec![start];
                label[start] = id;
                queue.push_back(start);
                while let Some(v) = queue.pop_front() {
                    for &w in &self.adjacency[v] {
                        if label[w] == usize::MAX {
                            label[w] = id;
                            comp.push(w);
                            queue.push_back(w);
                        }
                    }
                }
                comp.sort_unstable();
                members.push(comp);
            }
            Components { label, members }
        })
    }

    /// Sorted members of the component containing `i`.
    pub fn component_of(&self, i: usize) -> &[usize] {
        let c = self.components_cached();
        &c.members[c.label[i]]
    }

    pub fn component_id(&self, i: usize) -> usize {
        self.components_cached().label[i]
    }

    /// All components, each sorted, ordered by smallest member.
    pub fn components(&self) -> &[Vec<usize>] {
        &self.components_cached().members
    }

    pub fn component_count(&self) -> usize {
        self.components_cached().members.len()
    }
}
