//! Acceptance suite: one test per criterion, each printing a pass line with
//! the measured values. Tolerances are pinned in the assertions.

use std::fs;
use std::time::Instant;

use pantodamp::galerkin::{
    assemble, energy, lift_norm_sq, lift_phi, smallest_ritz_eigenvalue, solve,
};
use pantodamp::space::{w21_norm_sq, DofLayout, LayoutMode, Mesh, TreeFunction};
use pantodamp::verify::{chain_equals_interval, convergence_study, optimality_probe};
use pantodamp::{ProblemSpec, TemporalTree};
use pantodamp_cli::{run, Mode, RunConfig};
use tempfile::TempDir;

fn lcg(state: &mut u64) -> f64 {
    *state = state
        .wrapping_mul(6364136223846793005)
        .wrapping_add(1442695040888963407);
    ((*state >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
}

struct Instance {
    name: &'static str,
    tree: TemporalTree<f64>,
    spec: ProblemSpec<f64>,
}

/// Five generic instances: stars and two-level trees, q in {1.5, 2, 3},
/// seeded random b_j, c_j in [-1, 1] and positive weights.
fn instances() -> Vec<Instance> {
    let shapes: [(&'static str, Vec<usize>, Vec<f64>, f64); 5] = [
        ("star3 q=1.5", vec![0, 1, 1], vec![1.0, 3.0, 3.0], 1.5),
        ("star4 q=2", vec![0, 1, 1, 1], vec![1.0, 3.0, 3.0, 3.0], 2.0),
        ("star3 q=3", vec![0, 1, 1], vec![1.0, 3.0, 3.0], 3.0),
        (
            "twolevel q=2",
            vec![0, 1, 1, 2, 2],
            vec![1.0, 3.0, 3.0, 9.0, 9.0],
            2.0,
        ),
        (
            "twolevel q=3",
            vec![0, 1, 1, 2, 2],
            vec![1.0, 3.0, 3.0, 9.0, 9.0],
            3.0,
        ),
    ];
    let mut state = 0xACCE5509u64;
    shapes
        .into_iter()
        .map(|(name, parents, lengths, q)| {
            let tree = TemporalTree::<f64>::build(&parents, &lengths, q).unwrap();
            let m = tree.edge_count();
            let spec = ProblemSpec {
                b: (0..m).map(|_| lcg(&mut state)).collect(),
                c: (0..m).map(|_| lcg(&mut state)).collect(),
                alpha: (0..m).map(|_| 0.3 + 0.5 * (lcg(&mut state) + 1.0)).collect(),
                y0: 1.0,
            };
            Instance { name, tree, spec }
        })
        .collect()
}

#[test]
fn criterion_01_lift_norm_formula() {
    let start = Instant::now();
    let mut state = 0xC1u64;
    for k in 0..20 {
        let q = 1.1 + 1.45 * (lcg(&mut state) + 1.0);
        let t1 = 0.3 + 2.35 * (lcg(&mut state) + 1.0);
        let y0 = 3.0 * lcg(&mut state);
        let tree = TemporalTree::<f64>::build(&[0], &[t1], q).unwrap();
        let mesh = Mesh::build(&tree, t1 / 7.0);
        let phi = lift_phi(&tree, &mesh, y0);
        let computed = w21_norm_sq(&tree, &mesh, &phi, false);
        let reference = lift_norm_sq(q, t1, y0);
        assert!(
            (computed - reference).abs() <= 1e-12 * reference.abs().max(1e-30),
            "case {k} (q={q}, T1={t1}, y0={y0}): {computed} vs {reference}"
        );
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 1.0, "took {elapsed:?}");
    println!("[PASS] acceptance 1: lift norm formula, 20 random cases <= 1e-12 rel in {elapsed:?}");
}

#[test]
fn criterion_02_single_edge_closed_form() {
    for &(q, t1, y0) in &[(2.0f64, 1.0f64, 1.0f64), (3.0, 2.0, -1.5)] {
        let tree = TemporalTree::<f64>::build(&[0], &[t1], q).unwrap();
        let spec = ProblemSpec::uniform(1, 0.0, 0.0, 1.0, y0);
        for &h in &[0.4, 0.25, 1.0 / 3.0, 0.1, 0.07, 10.0] {
            let mesh = Mesh::build(&tree, h);
            let y = solve(&assemble(&tree, &spec, &mesh)).unwrap();
            let knee = t1 / q;
            let exact = TreeFunction::from_fn(&mesh, |_, t| {
                if t < knee {
                    y0 * (1.0 - t / knee)
                } else {
                    0.0
                }
            });
            let dev = y.max_abs_diff(&exact);
            assert!(dev <= 1e-12, "q={q} h={h}: deviation {dev}");
            let j = energy(&tree, &spec, &mesh, &y);
            let j_ref = q * y0 * y0 / t1;
            assert!(
                (j - j_ref).abs() <= 1e-12 * j_ref,
                "q={q} h={h}: J {j} vs {j_ref}"
            );
        }
    }
    println!("[PASS] acceptance 2: single-edge ramp and energy exact to 1e-12 for all h");
}

/// Independent fine-quadrature energy with its own delay arithmetic.
fn brute_energy(
    tree: &TemporalTree<f64>,
    spec: &ProblemSpec<f64>,
    mesh: &Mesh<f64>,
    y: &TreeFunction<f64>,
) -> f64 {
    let q = tree.q();
    let mut acc = 0.0;
    for j in 0..tree.edge_count() {
        let em = mesh.edge(j);
        let mut edge_acc = 0.0;
        for cell in 0..em.cell_count() {
            let (t0, t1) = (em.nodes[cell], em.nodes[cell + 1]);
            let dt = t1 - t0;
            let slope = (y.values[j][cell + 1] - y.values[j][cell]) / dt;
            let k_sub = 32;
            let w = dt / k_sub as f64;
            for k in 0..k_sub {
                let t = t0 + (k as f64 + 0.5) * w;
                let value = y.values[j][cell] + slope * (t - t0);
                let contracted = (t - (q - 1.0) * tree.entry_time(j)) / q;
                let delayed = if contracted >= 0.0 {
                    mesh.eval(y, j, contracted).unwrap()
                } else {
                    let p = tree.parent(j).unwrap();
                    mesh.eval(y, p, contracted + tree.length(p)).unwrap()
                };
                let op = slope + spec.b[j] * value + spec.c[j] * delayed;
                edge_acc += w * op * op;
            }
        }
        acc += spec.alpha[j] * edge_acc;
    }
    acc
}

fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for k in 0..n {
        let pivot = (k..n).max_by(|&i, &j| a[i][k].abs().total_cmp(&a[j][k].abs())).unwrap();
        a.swap(k, pivot);
        b.swap(k, pivot);
        for i in (k + 1)..n {
            let f = a[i][k] / a[k][k];
            let (head, tail) = a.split_at_mut(i);
            let (pivot_row, row) = (&head[k], &mut tail[0]);
            for (x, p) in row[k..n].iter_mut().zip(&pivot_row[k..n]) {
                *x -= f * p;
            }
            b[i] -= f * b[k];
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = b[i];
        for j in (i + 1)..n {
            s -= a[i][j] * x[j];
        }
        x[i] = s / a[i][i];
    }
    x
}

#[test]
fn criterion_03_star_vertex_value() {
    let tree = TemporalTree::<f64>::build(&[0, 1, 1], &[1.0, 3.0, 3.0], 2.0).unwrap();
    let spec = ProblemSpec {
        b: vec![0.0; 3],
        c: vec![0.0; 3],
        alpha: vec![1.0, 0.5, 0.5],
        y0: 1.0,
    };
    let mesh = Mesh::build(&tree, 0.25);
    let y = solve(&assemble(&tree, &spec, &mesh)).unwrap();
    let vertex = *y.values[0].last().unwrap();
    // Balance of linear ramps: Y = alpha_1 y0 / (alpha_1 + T1 sum alpha/l).
    let l: Vec<f64> = (1..3).map(|j| tree.active_length(j)).collect();
    let expect = 1.0 / (1.0 + 1.0 * (0.5 / l[0] + 0.5 / l[1]));
    assert!((vertex - 0.5).abs() <= 1e-12);
    assert!((vertex - expect).abs() <= 1e-12);

    // Brute-force minimisation of the discrete quadratic via an independent
    // fine quadrature: gradient and Hessian are exact for a quadratic.
    let layout = DofLayout::build(&tree, &mesh, LayoutMode::Test);
    let n = layout.free_count();
    let knee = tree.target_start(0);
    let lift = TreeFunction::from_fn(&mesh, |j, t| {
        if j == 0 && t < knee {
            spec.y0 * (1.0 - t / knee)
        } else {
            0.0
        }
    });
    let j_of = |coords: &[f64]| {
        let mut f = lift.clone();
        f.axpy(1.0, &layout.apply(coords));
        brute_energy(&tree, &spec, &mesh, &f)
    };
    let j0 = j_of(&vec![0.0; n]);
    let unit = |p: usize, s: f64| {
        let mut x = vec![0.0; n];
        x[p] = s;
        x
    };
    let grad: Vec<f64> = (0..n)
        .map(|p| (j_of(&unit(p, 1.0)) - j_of(&unit(p, -1.0))) / 2.0)
        .collect();
    let mut hess = vec![vec![0.0; n]; n];
    let singles: Vec<f64> = (0..n).map(|p| j_of(&unit(p, 1.0))).collect();
    for p in 0..n {
        for r in p..n {
            let mut x = vec![0.0; n];
            x[p] += 1.0;
            x[r] += 1.0;
            let d = j_of(&x) - singles[p] - singles[r] + j0;
            hess[p][r] = d;
            hess[r][p] = d;
        }
    }
    let x_star = gauss_solve(hess, grad.iter().map(|g| -g).collect());
    let mut y_brute = lift.clone();
    y_brute.axpy(1.0, &layout.apply(&x_star));
    let dev = y_brute.max_abs_diff(&y);
    assert!(dev <= 1e-9, "brute-force deviation {dev}");
    println!("[PASS] acceptance 3: star vertex value (1/2) exact to 1e-12; brute force agrees to {dev:.2e}");
}

#[test]
fn criterion_04_round_trip_order() {
    let start = Instant::now();
    for inst in instances() {
        let study = convergence_study(&inst.tree, &inst.spec, 1.0 / 16.0, 3).unwrap();
        assert!(
            study.round_trip_order.order_at_least(1.8),
            "{}: order {:?}, deviations {:?}",
            inst.name,
            study.round_trip_order,
            study.round_trip
        );
        println!(
            "  {}: round-trip {:?} from {:?}",
            inst.name, study.round_trip_order, study.round_trip
        );
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 30.0, "took {elapsed:?}");
    println!("[PASS] acceptance 4: round-trip order >= 1.8 on 5 instances in {elapsed:?}");
}

#[test]
fn criterion_05_kirchhoff_decay() {
    for inst in instances() {
        let study = convergence_study(&inst.tree, &inst.spec, 1.0 / 16.0, 3).unwrap();
        for w in study.kirchhoff.windows(2) {
            assert!(
                w[1] < w[0] || w[1] <= 1e-12,
                "{}: not monotone: {:?}",
                inst.name,
                study.kirchhoff
            );
        }
        assert!(
            study.kirchhoff_order.order_at_least(1.0),
            "{}: order {:?}, residuals {:?}",
            inst.name,
            study.kirchhoff_order,
            study.kirchhoff
        );
        println!(
            "  {}: kirchhoff {:?} from {:?}",
            inst.name, study.kirchhoff_order, study.kirchhoff
        );
    }
    println!("[PASS] acceptance 5: vertex balance residual decays with order >= 1.0");
}

#[test]
fn criterion_06_optimality_probe() {
    for inst in instances() {
        let mesh = Mesh::build(&inst.tree, 1.0 / 16.0);
        let sys = assemble(&inst.tree, &inst.spec, &mesh);
        let y = solve(&sys).unwrap();
        let j = energy(&inst.tree, &inst.spec, &mesh, &y);
        let margin = optimality_probe(&inst.tree, &inst.spec, &mesh, &y, 200, 2024).unwrap();
        assert!(
            margin >= -1e-10 * j,
            "{}: margin {margin} vs J {j}",
            inst.name
        );

        let layout = DofLayout::build(&inst.tree, &mesh, LayoutMode::Test);
        let mut e = vec![0.0; layout.free_count()];
        e[layout.free_count() / 3] = 1.0;
        let mut perturbed = y.clone();
        perturbed.axpy(1.0, &layout.apply(&e));
        let bad = optimality_probe(&inst.tree, &inst.spec, &mesh, &perturbed, 200, 2024).unwrap();
        assert!(bad < 0.0, "{}: perturbed margin {bad}", inst.name);
    }
    println!("[PASS] acceptance 6: probe margin >= -1e-10 J on all instances; perturbations detected");
}

#[test]
fn criterion_07_coercivity() {
    let mut checked = 0;
    for inst in instances() {
        let mesh = Mesh::build(&inst.tree, 1.0 / 16.0);
        let sys = assemble(&inst.tree, &inst.spec, &mesh);
        let lam = smallest_ritz_eigenvalue(&sys, 60).unwrap();
        assert!(lam > 0.0, "{}: smallest eigenvalue {lam}", inst.name);
        checked += 1;

        let mut big = inst.spec.clone();
        for (k, c) in big.c.iter_mut().enumerate() {
            *c = if k % 2 == 0 { 5.0 } else { -5.0 };
        }
        let sys_big = assemble(&inst.tree, &big, &mesh);
        let lam_big = smallest_ritz_eigenvalue(&sys_big, 60).unwrap();
        assert!(
            lam_big > 0.0,
            "{} with |c| = 5: smallest eigenvalue {lam_big}",
            inst.name
        );
        assert!(solve(&sys_big).is_ok());
        checked += 1;
    }
    println!("[PASS] acceptance 7: SPD factorisation and positive Ritz eigenvalue on {checked} systems");
}

#[test]
fn criterion_08_chain_equals_interval() {
    let tree = TemporalTree::<f64>::build(&[0, 1, 2], &[1.0, 1.5, 3.0], 2.0).unwrap();
    let spec = ProblemSpec::uniform(3, 0.4, -0.3, 1.0, 1.0);
    let dev = chain_equals_interval(&tree, &spec, 0.1).unwrap();
    assert!(dev <= 1e-10, "deviation {dev}");
    println!("[PASS] acceptance 8: 3-edge chain matches the merged interval to {dev:.2e}");
}

#[test]
fn criterion_09_linearity_and_stability() {
    let tree = TemporalTree::<f64>::build(&[0, 1, 1], &[1.0, 3.0, 3.0], 1.5).unwrap();
    let base = ProblemSpec {
        b: vec![0.7, -0.4, 0.2],
        c: vec![0.5, 0.3, -0.6],
        alpha: vec![1.0, 0.55, 0.45],
        y0: 1.0,
    };
    let mesh = Mesh::build(&tree, 1.0 / 16.0);
    let y_ref = solve(&assemble(&tree, &base, &mesh)).unwrap();
    let norm_ref = w21_norm_sq(&tree, &mesh, &y_ref, false).sqrt();
    for &y0 in &[0.5f64, 2.0, 10.0] {
        let mut spec = base.clone();
        spec.y0 = y0;
        let y = solve(&assemble(&tree, &spec, &mesh)).unwrap();
        let mut scaled = y_ref.clone();
        scaled.scale(y0);
        assert!(
            y.max_abs_diff(&scaled) <= 1e-12 * y0.abs().max(1.0),
            "y0 = {y0}: nodal deviation {}",
            y.max_abs_diff(&scaled)
        );
        let ratio = w21_norm_sq(&tree, &mesh, &y, false).sqrt() / y0.abs();
        assert!(
            (ratio - norm_ref).abs() <= 1e-12 * norm_ref,
            "y0 = {y0}: ratio {ratio} vs {norm_ref}"
        );
    }
    println!("[PASS] acceptance 9: solution scales exactly linearly in the initial value");
}

#[test]
fn criterion_10_change_of_variables_identity() {
    let tree = TemporalTree::<f64>::build(&[0, 1, 1], &[1.0, 3.0, 3.0], 2.0).unwrap();
    let mesh = Mesh::build(&tree, 0.21);
    let layout = DofLayout::build(&tree, &mesh, LayoutMode::Test);
    let mut state = 0xC10u64;
    for case in 0..50 {
        let x: Vec<f64> = (0..layout.free_count()).map(|_| lcg(&mut state)).collect();
        let f = layout.apply(&x);
        for j in 0..3 {
            let lhs = integral_of_delayed_square(&tree, &mesh, &f, j);
            let q = tree.q();
            let mut rhs = q * l2_sq_on(&mesh, &f, j, 0.0, tree.target_start(j));
            if let Some(p) = tree.parent(j) {
                rhs += q * l2_sq_on(&mesh, &f, p, tree.target_start(p), tree.length(p));
            }
            assert!(
                (lhs - rhs).abs() <= 1e-12 * (1.0 + rhs.abs()),
                "case {case}, edge {j}: {lhs} vs {rhs}"
            );
        }
    }
    println!("[PASS] acceptance 10: change-of-variables identity holds to 1e-12 on 50 functions");
}

fn integral_of_delayed_square(
    tree: &TemporalTree<f64>,
    mesh: &Mesh<f64>,
    f: &TreeFunction<f64>,
    j: usize,
) -> f64 {
    let len = tree.length(j);
    let mut cuts: Vec<f64> = mesh.edge(j).nodes.clone();
    cuts.push(tree.crossing_point(j));
    for &s in &mesh.edge(j).nodes {
        let pre = tree.inverse_delay(j, s);
        if pre > 0.0 && pre < len {
            cuts.push(pre);
        }
    }
    if let Some(p) = tree.parent(j) {
        for &sp in &mesh.edge(p).nodes {
            let pre = tree.inverse_delay(j, sp - tree.length(p));
            if pre > 0.0 && pre < len {
                cuts.push(pre);
            }
        }
    }
    cuts.retain(|&t| (0.0..=len).contains(&t));
    cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    cuts.dedup_by(|a, b| (*a - *b).abs() < 1e-13);
    let g = |t: f64| {
        let v = mesh.eval_delayed(tree, f, j, t).unwrap();
        v * v
    };
    cuts.windows(2)
        .map(|w| {
            let (a, b) = (w[0], w[1]);
            (b - a) / 6.0 * (g(a) + 4.0 * g(0.5 * (a + b)) + g(b))
        })
        .sum()
}

fn l2_sq_on(mesh: &Mesh<f64>, f: &TreeFunction<f64>, j: usize, a: f64, b: f64) -> f64 {
    let em = mesh.edge(j);
    let mut acc = 0.0;
    for i in 0..em.cell_count() {
        let (lo, hi) = (em.nodes[i], em.nodes[i + 1]);
        if lo >= a - 1e-13 && hi <= b + 1e-13 {
            let (va, vb) = (f.values[j][i], f.values[j][i + 1]);
            acc += (hi - lo) * (va * va + va * vb + vb * vb) / 3.0;
        }
    }
    acc
}

#[test]
fn criterion_11_determinism() {
    let dir = TempDir::new().unwrap();
    let problem = dir.path().join("p.json");
    fs::write(
        &problem,
        r#"{
  "q": 2.0,
  "y0": 1.0,
  "edges": [
    { "id": 1, "parent_vertex": 0, "length": 1.0, "b": 0.3, "c": 0.4, "alpha": 1.0 },
    { "id": 2, "parent_vertex": 1, "length": 3.0, "b": -0.5, "c": 0.1, "alpha": 0.6 },
    { "id": 3, "parent_vertex": 1, "length": 3.0, "b": 0.2, "c": -0.3, "alpha": 0.4 }
  ]
}"#,
    )
    .unwrap();
    let cfg = |out: &std::path::Path| RunConfig {
        mode: Mode::Verify,
        problem: problem.clone(),
        h: 0.125,
        levels: 3,
        out: out.to_path_buf(),
        tol: 1e-10,
        seed: 7,
        controls: None,
    };
    let out1 = dir.path().join("run1");
    let out2 = dir.path().join("run2");
    assert_eq!(run(&cfg(&out1)).unwrap(), 0);
    assert_eq!(run(&cfg(&out2)).unwrap(), 0);
    let mut names: Vec<_> = fs::read_dir(&out1)
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    names.sort();
    assert!(names.len() >= 7, "outputs: {names:?}");
    for name in &names {
        let a = fs::read(out1.join(name)).unwrap();
        let b = fs::read(out2.join(name)).unwrap();
        assert_eq!(a, b, "{name:?} differs between seeded runs");
    }
    println!(
        "[PASS] acceptance 11: repeated verify runs byte-identical across {} files",
        names.len()
    );
}
