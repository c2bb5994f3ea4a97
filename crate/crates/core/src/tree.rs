//! Temporal tree topology, timing, and the global delay map.
//!
//! Edges are indexed `0..m` in a canonical order: edges whose terminal vertex
//! is internal (has outgoing edges) come first, sorted by depth, followed by
//! the boundary edges. Edge `0` is the root edge. The canonical order
//! guarantees that every edge appears after its parent, so causal sweeps can
//! simply iterate `0..m`.

use thiserror::Error;

use crate::scalar::Real;

/// Errors from tree construction and the delay map. Times and lengths are
/// reported as `f64` regardless of the scalar type.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum TreeError {
    #[error("edge list is empty or parent/length counts differ")]
    EmptyInput,
    #[error("input edge {edge}: parent reference {parent} is out of range")]
    ParentOutOfRange { edge: usize, parent: usize },
    #[error("parent relation has a cycle or a disconnected edge")]
    CycleOrDisconnected,
    #[error("more than one root edge")]
    MultipleRoots,
    #[error("input edge {edge}: length {length} is not positive")]
    NonpositiveLength { edge: usize, length: f64 },
    #[error("contraction factor q = {q} must exceed 1")]
    InvalidQ { q: f64 },
    #[error(
        "input edge {edge}: length {length} does not exceed (q-1) x entry time = {required}"
    )]
    FeasibilityViolated {
        edge: usize,
        length: f64,
        required: f64,
    },
    #[error("edge {edge}: time {t} outside [0, {length}]")]
    OutOfRange { edge: usize, t: f64, length: f64 },
    #[error("edge {edge}: delayed time for t = {t} would precede the root")]
    NoHistory { edge: usize, t: f64 },
}

/// A rooted tree whose edges are time intervals, together with the timing
/// data of the global contraction-by-`q` delay.
///
/// Immutable after construction; safe to share between threads read-only.
#[derive(Debug, Clone)]
pub struct TemporalTree<F> {
    /// Canonical index of the edge each edge emanates from; `None` for the root edge.
    parent: Vec<Option<usize>>,
    /// Edge durations.
    length: Vec<F>,
    /// Contraction factor, `> 1`.
    q: F,
    /// Entry times: sum of lengths along the root path to the initial vertex.
    entry_time: Vec<F>,
    /// Delay-crossing points `(q - 1) x entry_time`, cached to avoid drift.
    crossing: Vec<F>,
    /// Target starts `q_j(T_j) = (T_j - crossing_j) / q`, cached.
    target_start: Vec<F>,
    /// Edges emanating from each edge's terminal vertex.
    children: Vec<Vec<usize>>,
    /// Number of edges whose terminal vertex is internal.
    internal_count: usize,
    /// Canonical index -> position in the input arrays.
    input_position: Vec<usize>,
    /// Position in the input arrays -> canonical index.
    canonical_index: Vec<usize>,
}

impl<F: Real> TemporalTree<F> {
    /// Builds a tree from per-edge parent references and durations.
    ///
    /// `parents[i]` is `0` for the root edge and otherwise the 1-based input
    /// position of the edge whose terminal vertex edge `i` emanates from.
    /// Edges are relabelled into the canonical order; the original positions
    /// stay available through [`input_position`](Self::input_position).
    pub fn build(parents: &[usize], lengths: &[F], q: F) -> Result<Self, TreeError> {
        let m = parents.len();
        if m == 0 || lengths.len() != m {
            return Err(TreeError::EmptyInput);
        }
        if !(q > F::one()) {
            return Err(TreeError::InvalidQ {
                q: q.to_f64().unwrap_or(f64::NAN),
            });
        }
        for (i, &len) in lengths.iter().enumerate() {
            if !(len > F::zero()) || !len.is_finite() {
                return Err(TreeError::NonpositiveLength {
                    edge: i + 1,
                    length: len.to_f64().unwrap_or(f64::NAN),
                });
            }
        }
        let mut roots = Vec::new();
        let mut children_in: Vec<Vec<usize>> = vec![Vec::new(); m];
        for (i, &p) in parents.iter().enumerate() {
            if p == 0 {
                roots.push(i);
            } else if p > m {
                return Err(TreeError::ParentOutOfRange {
                    edge: i + 1,
                    parent: p,
                });
            } else {
                children_in[p - 1].push(i);
            }
        }
        if roots.len() > 1 {
            return Err(TreeError::MultipleRoots);
        }
        let root = *roots.first().ok_or(TreeError::CycleOrDisconnected)?;

        // Breadth-first sweep to get depths and detect unreachable edges.
        let mut depth = vec![usize::MAX; m];
        depth[root] = 0;
        let mut queue = std::collections::VecDeque::from([root]);
        let mut seen = 1;
        while let Some(i) = queue.pop_front() {
            for &c in &children_in[i] {
                if depth[c] != usize::MAX {
                    return Err(TreeError::CycleOrDisconnected);
                }
                depth[c] = depth[i] + 1;
                seen += 1;
                queue.push_back(c);
            }
        }
        if seen != m {
            return Err(TreeError::CycleOrDisconnected);
        }

        // Canonical order: internal edges first, both classes sorted by depth
        // then input position.
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by_key(|&i| (children_in[i].is_empty(), depth[i], i));
        let mut canonical_index = vec![0usize; m];
        for (new, &old) in order.iter().enumerate() {
            canonical_index[old] = new;
        }
        let internal_count = children_in.iter().filter(|c| !c.is_empty()).count();

        let parent: Vec<Option<usize>> = order
            .iter()
            .map(|&old| {
                let p = parents[old];
                (p != 0).then(|| canonical_index[p - 1])
            })
            .collect();
        let length: Vec<F> = order.iter().map(|&old| lengths[old]).collect();
        let mut children: Vec<Vec<usize>> = vec![Vec::new(); m];
        for (j, &p) in parent.iter().enumerate() {
            if let Some(p) = p {
                children[p].push(j);
            }
        }
        debug_assert!(parent[0].is_none(), "root edge must come first");

        let mut entry_time = vec![F::zero(); m];
        for j in 1..m {
            let p = parent[j].expect("non-root edge has a parent");
            debug_assert!(p < j, "canonical order places parents first");
            entry_time[j] = entry_time[p] + length[p];
        }
        let crossing: Vec<F> = entry_time.iter().map(|&e| (q - F::one()) * e).collect();
        let target_start: Vec<F> = (0..m).map(|j| (length[j] - crossing[j]) / q).collect();

        for j in 1..m {
            if !(length[j] > crossing[j]) {
                return Err(TreeError::FeasibilityViolated {
                    edge: order[j] + 1,
                    length: length[j].to_f64().unwrap_or(f64::NAN),
                    required: crossing[j].to_f64().unwrap_or(f64::NAN),
                });
            }
        }

        Ok(Self {
            parent,
            length,
            q,
            entry_time,
            crossing,
            target_start,
            children,
            internal_count,
            input_position: order,
            canonical_index,
        })
    }

    /// Number of edges.
    pub fn edge_count(&self) -> usize {
        self.length.len()
    }

    /// Number of internal vertices (equivalently, of internal edges).
    pub fn internal_count(&self) -> usize {
        self.internal_count
    }

    /// Contraction factor `q`.
    pub fn q(&self) -> F {
        self.q
    }

    /// Duration of edge `j`.
    pub fn length(&self, j: usize) -> F {
        self.length[j]
    }

    /// Entry time of edge `j`: global time at its initial vertex.
    pub fn entry_time(&self, j: usize) -> F {
        self.entry_time[j]
    }

    /// Point where the delayed argument of edge `j` switches from the parent
    /// edge to edge `j` itself: `(q - 1) x entry_time`.
    pub fn crossing_point(&self, j: usize) -> F {
        self.crossing[j]
    }

    /// Start of the equilibrium target interval: the image of the terminal
    /// vertex under the delay, `q_j(T_j)`.
    pub fn target_start(&self, j: usize) -> F {
        self.target_start[j]
    }

    /// Canonical index of the parent edge, `None` for the root edge.
    pub fn parent(&self, j: usize) -> Option<usize> {
        self.parent[j]
    }

    /// Edges emanating from the terminal vertex of edge `j`.
    pub fn children(&self, j: usize) -> &[usize] {
        &self.children[j]
    }

    /// Whether the terminal vertex of edge `j` is a boundary vertex.
    pub fn is_boundary(&self, j: usize) -> bool {
        self.children[j].is_empty()
    }

    /// Position of canonical edge `j` in the input arrays passed to [`build`](Self::build).
    pub fn input_position(&self, j: usize) -> usize {
        self.input_position[j]
    }

    /// Canonical index of the edge at input position `i`.
    pub fn canonical_of_input(&self, i: usize) -> usize {
        self.canonical_index[i]
    }

    /// Global time of the point at local time `t` on edge `j`.
    pub fn global_time(&self, j: usize, t: F) -> F {
        self.entry_time[j] + t
    }

    /// Maps a point to the location of its delayed argument.
    ///
    /// Returns `(j, q_j(t))` when the contracted time stays on edge `j`, and
    /// otherwise the corresponding point on the parent edge. In global time
    /// the returned point is `(entry_time + t) / q` exactly.
    pub fn delay_map(&self, j: usize, t: F) -> Result<(usize, F), TreeError> {
        let len = self.length[j];
        if !(t >= F::zero() && t <= len) {
            return Err(TreeError::OutOfRange {
                edge: j + 1,
                t: t.to_f64().unwrap_or(f64::NAN),
                length: len.to_f64().unwrap_or(f64::NAN),
            });
        }
        let local = (t - self.crossing[j]) / self.q;
        if local >= F::zero() {
            return Ok((j, local));
        }
        let no_history = || TreeError::NoHistory {
            edge: j + 1,
            t: t.to_f64().unwrap_or(f64::NAN),
        };
        let p = self.parent[j].ok_or_else(no_history)?;
        let tp = local + self.length[p];
        if tp < F::zero() {
            // Unreachable for feasible trees; kept as a guard.
            return Err(no_history());
        }
        Ok((p, tp))
    }

    /// Inverse of the contracted time on edge `j`: `q t + (q - 1) x entry_time`.
    pub fn inverse_delay(&self, j: usize, t: F) -> F {
        self.q * t + self.crossing[j]
    }

    /// Length of the active (unconstrained) part of edge `j`: the full
    /// duration for internal edges, `q_j(T_j)` for boundary edges.
    pub fn active_length(&self, j: usize) -> F {
        if self.is_boundary(j) {
            self.target_start[j]
        } else {
            self.length[j]
        }
    }
}
