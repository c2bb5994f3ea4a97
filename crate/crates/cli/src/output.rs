//! Deterministic output formats: per-edge trajectory/control CSVs and the
//! JSON summary. All numbers are serialised with 17 significant digits so
//! repeated runs produce byte-identical files.

use std::fs;
use std::path::Path;

use pantodamp::verify::{ConvergenceStudy, GateResult, OrderEstimate};
use pantodamp::{CellField64, Mesh64, TreeFunction64};

use crate::error::CliError;

/// 17-significant-digit representation; `null` for non-finite values.
pub fn fmt_float(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        "null".into()
    }
}

/// Writes `edge<id>_y.csv`: trajectory values at the mesh nodes.
pub fn write_trajectory_csv(
    dir: &Path,
    edge_ids: &[u64],
    mesh: &Mesh64,
    y: &TreeFunction64,
) -> Result<(), CliError> {
    for (j, &id) in edge_ids.iter().enumerate() {
        let mut text = String::from("t,y\n");
        for (i, &t) in mesh.edge(j).nodes.iter().enumerate() {
            text.push_str(&format!("{},{}\n", fmt_float(t), fmt_float(y.values[j][i])));
        }
        fs::write(dir.join(format!("edge{id}_y.csv")), text)?;
    }
    Ok(())
}

/// Writes `edge<id>_u.csv`: control values at the cell midpoints.
pub fn write_control_csv(
    dir: &Path,
    edge_ids: &[u64],
    mesh: &Mesh64,
    u: &CellField64,
) -> Result<(), CliError> {
    for (j, &id) in edge_ids.iter().enumerate() {
        let mut text = String::from("t,u\n");
        let em = mesh.edge(j);
        for cell in 0..em.cell_count() {
            let mid = 0.5 * (em.nodes[cell] + em.nodes[cell + 1]);
            text.push_str(&format!(
                "{},{}\n",
                fmt_float(mid),
                fmt_float(u.values[j][cell])
            ));
        }
        fs::write(dir.join(format!("edge{id}_u.csv")), text)?;
    }
    Ok(())
}

/// Everything the summary file reports.
pub struct Summary<'a> {
    pub energy: f64,
    pub vertex_values: Vec<(u64, f64)>,
    pub kirchhoff: Vec<(u64, f64)>,
    pub strong: Vec<(u64, f64)>,
    pub optimality_margin: Option<f64>,
    pub y_w21: f64,
    pub y_w21_trimmed: f64,
    pub phi_w21_sq: f64,
    pub seed: u64,
    pub h: f64,
    pub dof_count: usize,
    pub gates: Option<&'a [GateResult<f64>]>,
}

fn push_map(out: &mut String, name: &str, entries: &[(u64, f64)], trailing: bool) {
    out.push_str(&format!("  \"{name}\": {{"));
    for (k, (id, v)) in entries.iter().enumerate() {
        out.push_str(&format!("\"{}\": {}", id, fmt_float(*v)));
        if k + 1 < entries.len() {
            out.push_str(", ");
        }
    }
    out.push_str(if trailing { "},\n" } else { "}\n" });
}

/// Renders the summary as deterministic JSON with a fixed key order.
pub fn render_summary(s: &Summary) -> String {
    let mut out = String::from("{\n");
    out.push_str(&format!("  \"J\": {},\n", fmt_float(s.energy)));
    push_map(&mut out, "vertex_values", &s.vertex_values, true);
    push_map(&mut out, "kirchhoff_residuals", &s.kirchhoff, true);
    push_map(&mut out, "strong_residuals", &s.strong, true);
    out.push_str(&format!(
        "  \"optimality_margin\": {},\n",
        s.optimality_margin.map_or("null".into(), fmt_float)
    ));
    out.push_str(&format!(
        "  \"norms\": {{\"y_w21\": {}, \"y_w21_trimmed\": {}, \"phi_w21_sq\": {}}},\n",
        fmt_float(s.y_w21),
        fmt_float(s.y_w21_trimmed),
        fmt_float(s.phi_w21_sq)
    ));
    out.push_str(&format!("  \"seed\": {},\n", s.seed));
    out.push_str(&format!(
        "  \"mesh\": {{\"h\": {}, \"dof_count\": {}}}",
        fmt_float(s.h),
        s.dof_count
    ));
    if let Some(gates) = s.gates {
        out.push_str(",\n  \"gates\": [\n");
        for (k, g) in gates.iter().enumerate() {
            out.push_str(&format!(
                "    {{\"name\": \"{}\", \"value\": {}, \"threshold\": {}, \"passed\": {}}}{}\n",
                g.name,
                fmt_float(g.value),
                fmt_float(g.threshold),
                g.passed,
                if k + 1 < gates.len() { "," } else { "" }
            ));
        }
        out.push_str("  ]\n");
    } else {
        out.push('\n');
    }
    out.push_str("}\n");
    out
}

fn fmt_order(o: &OrderEstimate) -> String {
    match o {
        OrderEstimate::Exact => "\"exact\"".into(),
        OrderEstimate::Observed(v) => fmt_float(*v),
    }
}

fn push_series(out: &mut String, name: &str, values: &[f64]) {
    out.push_str(&format!("  \"{name}\": ["));
    for (k, v) in values.iter().enumerate() {
        out.push_str(&fmt_float(*v));
        if k + 1 < values.len() {
            out.push_str(", ");
        }
    }
    out.push_str("],\n");
}

/// Renders a convergence study as deterministic JSON.
pub fn render_convergence(study: &ConvergenceStudy<f64>) -> String {
    let mut out = String::from("{\n");
    push_series(&mut out, "h", &study.h);
    push_series(&mut out, "round_trip", &study.round_trip);
    push_series(&mut out, "kirchhoff", &study.kirchhoff);
    push_series(&mut out, "energy", &study.energy);
    out.push_str(&format!(
        "  \"orders\": {{\"round_trip\": {}, \"kirchhoff\": {}, \"energy_decrement\": {}}}\n",
        fmt_order(&study.round_trip_order),
        fmt_order(&study.kirchhoff_order),
        fmt_order(&study.energy_order)
    ));
    out.push_str("}\n");
    out
}
