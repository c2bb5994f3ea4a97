//! Problem-file format: JSON with the contraction factor, the initial value,
//! and one record per edge. `parent_vertex` is `0` for the root edge and
//! otherwise the id of the edge whose terminal vertex the edge leaves.

use serde::Deserialize;

use pantodamp::tree::TreeError;
use pantodamp::{ProblemSpec, TemporalTree};

use crate::error::CliError;
use crate::output::fmt_float;

#[derive(Debug, Deserialize)]
struct ProblemFile {
    q: f64,
    y0: f64,
    edges: Vec<EdgeDef>,
}

#[derive(Debug, Deserialize)]
struct EdgeDef {
    id: u64,
    parent_vertex: u64,
    length: f64,
    b: f64,
    c: f64,
    alpha: f64,
}

/// A validated problem: canonical tree, coefficients in canonical edge order,
/// and the user-facing edge ids per canonical index.
#[derive(Debug, Clone)]
pub struct Problem {
    pub tree: TemporalTree<f64>,
    pub spec: ProblemSpec<f64>,
    pub edge_ids: Vec<u64>,
}

fn tree_error_message(err: &TreeError, ids: &[u64]) -> String {
    let with_id = |edge: usize, rest: String| {
        let id = ids.get(edge - 1).copied().unwrap_or(edge as u64);
        format!("edge id {id}: {rest}")
    };
    match err {
        TreeError::NonpositiveLength { edge, length } => {
            with_id(*edge, format!("length {length} is not positive"))
        }
        TreeError::FeasibilityViolated {
            edge,
            length,
            required,
        } => with_id(
            *edge,
            format!("length {length} does not exceed (q-1) x entry time = {required}"),
        ),
        TreeError::ParentOutOfRange { edge, .. } => {
            with_id(*edge, "parent reference is invalid".into())
        }
        other => other.to_string(),
    }
}

/// Parses and validates a problem file.
pub fn parse_problem(text: &str) -> Result<Problem, CliError> {
    let file: ProblemFile =
        serde_json::from_str(text).map_err(|e| CliError::Parse(e.to_string()))?;
    if file.edges.is_empty() {
        return Err(CliError::Validation("problem has no edges".into()));
    }
    let ids: Vec<u64> = file.edges.iter().map(|e| e.id).collect();
    for (i, &id) in ids.iter().enumerate() {
        if id == 0 {
            return Err(CliError::Validation("edge id 0 is reserved".into()));
        }
        if ids[..i].contains(&id) {
            return Err(CliError::Validation(format!("duplicate edge id {id}")));
        }
    }
    let parents: Vec<usize> = file
        .edges
        .iter()
        .map(|e| {
            if e.parent_vertex == 0 {
                Ok(0)
            } else {
                ids.iter()
                    .position(|&id| id == e.parent_vertex)
                    .map(|p| p + 1)
                    .ok_or_else(|| {
                        CliError::Validation(format!(
                            "edge id {}: parent_vertex {} is not an edge id",
                            e.id, e.parent_vertex
                        ))
                    })
            }
        })
        .collect::<Result<_, _>>()?;
    let lengths: Vec<f64> = file.edges.iter().map(|e| e.length).collect();
    let tree = TemporalTree::build(&parents, &lengths, file.q)
        .map_err(|e| CliError::Validation(tree_error_message(&e, &ids)))?;

    let m = tree.edge_count();
    let spec = ProblemSpec {
        b: (0..m).map(|j| file.edges[tree.input_position(j)].b).collect(),
        c: (0..m).map(|j| file.edges[tree.input_position(j)].c).collect(),
        alpha: (0..m)
            .map(|j| file.edges[tree.input_position(j)].alpha)
            .collect(),
        y0: file.y0,
    };
    spec.validate(&tree).map_err(CliError::Validation)?;
    let edge_ids = (0..m).map(|j| ids[tree.input_position(j)]).collect();
    Ok(Problem {
        tree,
        spec,
        edge_ids,
    })
}

/// Serialises a problem back to the file format, edges in canonical order
/// with their original ids.
pub fn emit_problem(problem: &Problem) -> String {
    let mut out = String::new();
    out.push_str("{\n");
    out.push_str(&format!("  \"q\": {},\n", fmt_float(problem.tree.q())));
    out.push_str(&format!("  \"y0\": {},\n", fmt_float(problem.spec.y0)));
    out.push_str("  \"edges\": [\n");
    let m = problem.tree.edge_count();
    for j in 0..m {
        let parent = match problem.tree.parent(j) {
            None => 0,
            Some(p) => problem.edge_ids[p],
        };
        out.push_str(&format!(
            "    {{ \"id\": {}, \"parent_vertex\": {}, \"length\": {}, \"b\": {}, \"c\": {}, \"alpha\": {} }}{}\n",
            problem.edge_ids[j],
            parent,
            fmt_float(problem.tree.length(j)),
            fmt_float(problem.spec.b[j]),
            fmt_float(problem.spec.c[j]),
            fmt_float(problem.spec.alpha[j]),
            if j + 1 < m { "," } else { "" }
        ));
    }
    out.push_str("  ]\n}\n");
    out
}
