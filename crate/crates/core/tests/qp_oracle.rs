//! The dual coordinate-ascent solver against an interior-point QP solver.

use clarabel::algebra::CscMatrix;
use clarabel::solver::{DefaultSettingsBuilder, DefaultSolver, IPSolver, NonnegativeConeT, SolverStatus};
use fastdebias::qp::{solve_column, QpConfig};
use fastdebias::{closed_form_weights, coherence_stats, generate_design, DesignMatrix, EnsembleSpec};

/// `min (1/n)‖w‖²` s.t. `−μ ≤ (1/n)Aᵀw − e_j ≤ μ`, returning `(w, objective)`.
fn interior_point(a: &DesignMatrix, j: usize, mu: f64) -> (Vec<f64>, f64) {
    let (n, p) = (a.nrows(), a.ncols());
    let nf = n as f64;
    let hessian = CscMatrix::new(n, n, (0..=n).collect(), (0..n).collect(), vec![2.0 / nf; n]);
    // rows 0..p: (1/n)Aᵀw ≤ μ + e_j; rows p..2p: −(1/n)Aᵀw ≤ μ − e_j
    let entries = a.entries();
    let mut colptr = vec![0];
    let mut rowval = Vec::with_capacity(2 * n * p);
    let mut nzval = Vec::with_capacity(2 * n * p);
    for i in 0..n {
        for k in 0..p {
            rowval.push(k);
            nzval.push(entries[[i, k]] / nf);
        }
        for k in 0..p {
            rowval.push(p + k);
            nzval.push(-entries[[i, k]] / nf);
        }
        colptr.push(rowval.len());
    }
    let constraints = CscMatrix::new(2 * p, n, colptr, rowval, nzval);
    let mut b = vec![mu; 2 * p];
    b[j] += 1.0;
    b[p + j] -= 1.0;
    let settings = DefaultSettingsBuilder::default()
        .verbose(false)
        .tol_gap_abs(1e-12)
        .tol_gap_rel(1e-12)
        .tol_feas(1e-12)
        .build()
        .unwrap();
    let cones = [NonnegativeConeT(2 * p)];
    let mut solver = DefaultSolver::new(&hessian, &vec![0.0; n], &constraints, &b, &cones, settings).unwrap();
    solver.solve();
    assert!(
        matches!(solver.solution.status, SolverStatus::Solved | SolverStatus::AlmostSolved),
        "oracle status {:?}",
        solver.solution.status
    );
    (solver.solution.x.clone(), solver.solution.obj_val)
}

fn check_against_oracle(a: &DesignMatrix, mu: f64, cols: impl Iterator<Item = usize>) {
    for j in cols {
        let ours = solve_column(a, j, mu, &QpConfig::default()).unwrap();
        let (w_ref, obj_ref) = interior_point(a, j, mu);
        let scale = obj_ref.abs().max(1.0);
        assert!(
            (ours.primal_objective - obj_ref).abs() <= 1e-5 * scale,
            "column {j}: {} vs oracle {obj_ref}",
            ours.primal_objective
        );
        assert!(ours.margin <= mu + 1e-9);
        // strictly convex objective: the minimizer is unique
        let dist: f64 = ours.w.iter().zip(&w_ref).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        let norm: f64 = w_ref.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!(dist <= 1e-3 * norm.max(1.0), "column {j}: distance {dist}");
    }
}

#[test]
fn small_instances_match_interior_point() {
    for seed in 0..6 {
        let spec = if seed % 2 == 0 { EnsembleSpec::gaussian() } else { EnsembleSpec::rademacher() };
        let a: DesignMatrix = generate_design(5, 8, &spec, seed).unwrap();
        let thr = coherence_stats(&a).unwrap().mu_threshold;
        for mu in [thr, 0.5 * (thr + 1.0)] {
            check_against_oracle(&a, mu, 0..8);
        }
    }
}

#[test]
fn above_threshold_oracle_agrees_with_closed_form() {
    let a: DesignMatrix = generate_design(5, 8, &EnsembleSpec::gaussian(), 42).unwrap();
    let mu = coherence_stats(&a).unwrap().mu_threshold;
    let we = closed_form_weights(&a, mu).unwrap();
    for j in 0..8 {
        let (w_ref, _) = interior_point(&a, j, mu);
        for (x, y) in we.as_dense().unwrap().column(j).iter().zip(&w_ref) {
            assert!((x - y).abs() < 1e-5, "column {j}: {x} vs {y}");
        }
    }
}

#[test]
fn below_threshold_matches_interior_point() {
    let a: DesignMatrix = generate_design(10, 20, &EnsembleSpec::gaussian(), 9).unwrap();
    let thr = coherence_stats(&a).unwrap().mu_threshold;
    // 10 rows cannot make 20 columns nearly orthogonal, so stay close to the threshold
    check_against_oracle(&a, 0.9 * thr, 0..20);
}
