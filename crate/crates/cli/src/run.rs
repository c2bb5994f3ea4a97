//! Run orchestration for the four modes: solve, simulate, verify, convergence.

use std::fs;
use std::path::{Path, PathBuf};

use pantodamp::galerkin::{assemble, energy, extract_control, lift_phi, solve};
use pantodamp::space::w21_norm_sq;
use pantodamp::verify::{
    convergence_study, kirchhoff_residual, run_verification, strong_residual, VerifyOptions,
};
use pantodamp::{solve_forward, ControlInput, Mesh64, TreeFunction64};

use crate::error::CliError;
use crate::output::{
    fmt_float, render_convergence, render_summary, write_control_csv, write_trajectory_csv,
    Summary,
};
use crate::problem::{parse_problem, Problem};

/// What the invocation should do.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Solve,
    Simulate,
    Verify,
    Convergence,
}

/// Validated invocation parameters.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub mode: Mode,
    pub problem: PathBuf,
    pub h: f64,
    pub levels: usize,
    pub out: PathBuf,
    pub tol: f64,
    pub seed: u64,
    pub controls: Option<PathBuf>,
}

impl RunConfig {
    fn validate(&self) -> Result<(), CliError> {
        if !(self.h > 0.0 && self.h.is_finite()) {
            return Err(CliError::Validation(format!(
                "mesh spacing h = {} must be positive",
                self.h
            )));
        }
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(CliError::Validation(format!(
                "tolerance {} must be positive",
                self.tol
            )));
        }
        if self.mode == Mode::Convergence && self.levels < 3 {
            return Err(CliError::Validation(format!(
                "too few levels: convergence needs at least 3, got {}",
                self.levels
            )));
        }
        if self.mode == Mode::Simulate && self.controls.is_none() {
            return Err(CliError::Validation(
                "simulate requires --controls <file>".into(),
            ));
        }
        Ok(())
    }
}

/// Executes a run. Returns the process exit code: 0 on success, 2 when a
/// verification gate fails. Validation problems surface as `Err` (exit 1).
pub fn run(cfg: &RunConfig) -> Result<i32, CliError> {
    cfg.validate()?;
    let text = fs::read_to_string(&cfg.problem)?;
    let problem = parse_problem(&text)?;
    fs::create_dir_all(&cfg.out)?;
    match cfg.mode {
        Mode::Solve => {
            run_solve(cfg, &problem, false)?;
            Ok(0)
        }
        Mode::Verify => {
            let passed = run_solve(cfg, &problem, true)?;
            Ok(if passed { 0 } else { 2 })
        }
        Mode::Simulate => {
            run_simulate(cfg, &problem)?;
            Ok(0)
        }
        Mode::Convergence => {
            run_convergence(cfg, &problem)?;
            Ok(0)
        }
    }
}

fn summarize(
    cfg: &RunConfig,
    problem: &Problem,
    mesh: &Mesh64,
    y: &TreeFunction64,
    optimality_margin: Option<f64>,
    dof_count: usize,
    gates: Option<&[pantodamp::verify::GateResult<f64>]>,
) -> String {
    let tree = &problem.tree;
    let spec = &problem.spec;
    let kirch = kirchhoff_residual(tree, spec, mesh, y);
    let strong = strong_residual(tree, spec, mesh, y);
    let phi = lift_phi(tree, mesh, spec.y0);
    let summary = Summary {
        energy: energy(tree, spec, mesh, y),
        vertex_values: (0..tree.internal_count())
            .map(|j| (problem.edge_ids[j], *y.values[j].last().expect("nonempty")))
            .collect(),
        kirchhoff: kirch
            .iter()
            .enumerate()
            .map(|(j, &r)| (problem.edge_ids[j], r))
            .collect(),
        strong: strong
            .iter()
            .enumerate()
            .map(|(j, &r)| (problem.edge_ids[j], r))
            .collect(),
        optimality_margin,
        y_w21: w21_norm_sq(tree, mesh, y, false).sqrt(),
        y_w21_trimmed: w21_norm_sq(tree, mesh, y, true).sqrt(),
        phi_w21_sq: w21_norm_sq(tree, mesh, &phi, false),
        seed: cfg.seed,
        h: cfg.h,
        dof_count,
        gates,
    };
    render_summary(&summary)
}

fn run_solve(cfg: &RunConfig, problem: &Problem, verify: bool) -> Result<bool, CliError> {
    let tree = &problem.tree;
    let spec = &problem.spec;
    let mesh = Mesh64::build(tree, cfg.h);
    let sys = assemble(tree, spec, &mesh);
    let y = solve(&sys).map_err(|e| CliError::Validation(e.to_string()))?;
    let u = extract_control(tree, spec, &mesh, &y);
    write_trajectory_csv(&cfg.out, &problem.edge_ids, &mesh, &y)?;
    write_control_csv(&cfg.out, &problem.edge_ids, &mesh, &u)?;

    let (summary, passed) = if verify {
        let report = run_verification(
            tree,
            spec,
            &mesh,
            &sys,
            &y,
            &VerifyOptions {
                probes: 200,
                seed: cfg.seed,
                tol: cfg.tol,
            },
        )
        .map_err(|e| CliError::Validation(e.to_string()))?;
        for gate in &report.gates {
            println!(
                "gate {}: {} (value {}, threshold {})",
                gate.name,
                if gate.passed { "PASS" } else { "FAIL" },
                fmt_float(gate.value),
                fmt_float(gate.threshold)
            );
        }
        let text = summarize(
            cfg,
            problem,
            &mesh,
            &y,
            report.optimality_margin,
            sys.layout.free_count(),
            Some(&report.gates),
        );
        (text, report.passed)
    } else {
        let text = summarize(cfg, problem, &mesh, &y, None, sys.layout.free_count(), None);
        (text, true)
    };
    fs::write(cfg.out.join("summary.json"), summary)?;
    println!(
        "J = {}",
        fmt_float(energy(tree, spec, &mesh, &y))
    );
    Ok(passed)
}

/// Parses a controls CSV (`edge,t,u` rows, header optional) into per-edge
/// sample lists keyed by edge id.
fn parse_controls(text: &str, edge_ids: &[u64]) -> Result<Vec<Vec<(f64, f64)>>, CliError> {
    let mut samples: Vec<Vec<(f64, f64)>> = vec![Vec::new(); edge_ids.len()];
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 3 {
            return Err(CliError::Parse(format!(
                "controls line {}: expected edge,t,u",
                lineno + 1
            )));
        }
        if lineno == 0 && fields[0].parse::<u64>().is_err() {
            continue; // header
        }
        let id: u64 = fields[0].parse().map_err(|_| {
            CliError::Parse(format!("controls line {}: bad edge id", lineno + 1))
        })?;
        let t: f64 = fields[1].parse().map_err(|_| {
            CliError::Parse(format!("controls line {}: bad time", lineno + 1))
        })?;
        let u: f64 = fields[2].parse().map_err(|_| {
            CliError::Parse(format!("controls line {}: bad value", lineno + 1))
        })?;
        let j = edge_ids
            .iter()
            .position(|&e| e == id)
            .ok_or_else(|| CliError::Validation(format!("controls refer to unknown edge {id}")))?;
        samples[j].push((t, u));
    }
    for list in &mut samples {
        list.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite times"));
    }
    Ok(samples)
}

fn interp_samples(samples: &[(f64, f64)], t: f64) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    if t <= samples[0].0 {
        return samples[0].1;
    }
    if t >= samples[samples.len() - 1].0 {
        return samples[samples.len() - 1].1;
    }
    let hi = samples.partition_point(|&(s, _)| s <= t);
    let (t0, u0) = samples[hi - 1];
    let (t1, u1) = samples[hi];
    u0 + (u1 - u0) * (t - t0) / (t1 - t0)
}

fn run_simulate(cfg: &RunConfig, problem: &Problem) -> Result<(), CliError> {
    let tree = &problem.tree;
    let spec = &problem.spec;
    let mesh = Mesh64::build(tree, cfg.h);
    let controls_path = cfg.controls.as_ref().expect("validated");
    let text = fs::read_to_string(controls_path)?;
    let samples = parse_controls(&text, &problem.edge_ids)?;
    let control = TreeFunction64::from_fn(&mesh, |j, t| interp_samples(&samples[j], t));
    let y = solve_forward(tree, spec, &mesh, &control)
        .map_err(|e| CliError::Validation(e.to_string()))?;
    write_trajectory_csv(&cfg.out, &problem.edge_ids, &mesh, &y)?;
    // Echo the control at cell midpoints so outputs are self-contained.
    let u_cells = pantodamp::CellField64 {
        values: (0..tree.edge_count())
            .map(|j| {
                (0..mesh.edge(j).cell_count())
                    .map(|cell| control.midpoint_value(&mesh, j, cell))
                    .collect()
            })
            .collect(),
    };
    write_control_csv(&cfg.out, &problem.edge_ids, &mesh, &u_cells)?;
    let layout =
        pantodamp::DofLayout64::build(tree, &mesh, pantodamp::LayoutMode::Trial(spec.y0));
    let summary = summarize(cfg, problem, &mesh, &y, None, layout.free_count(), None);
    fs::write(cfg.out.join("summary.json"), summary)?;
    Ok(())
}

fn run_convergence(cfg: &RunConfig, problem: &Problem) -> Result<(), CliError> {
    let study = convergence_study(&problem.tree, &problem.spec, cfg.h, cfg.levels)
        .map_err(|e| CliError::Validation(e.to_string()))?;
    println!("level  h              round_trip     kirchhoff      J");
    for k in 0..study.h.len() {
        println!(
            "{:<6} {:<14.6e} {:<14.6e} {:<14.6e} {:.12e}",
            k, study.h[k], study.round_trip[k], study.kirchhoff[k], study.energy[k]
        );
    }
    println!(
        "orders: round_trip={:?} kirchhoff={:?} energy_decrement={:?}",
        study.round_trip_order, study.kirchhoff_order, study.energy_order
    );
    fs::write(cfg.out.join("convergence.json"), render_convergence(&study))?;
    Ok(())
}

/// Reads a summary back (test helper; the files are plain JSON).
pub fn read_summary_value(dir: &Path) -> Result<serde_json::Value, CliError> {
    let text = fs::read_to_string(dir.join("summary.json"))?;
    serde_json::from_str(&text).map_err(|e| CliError::Parse(e.to_string()))
}
