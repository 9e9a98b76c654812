use super::*;
use proptest::prelude::*;

fn simple(obj: Vec<f64>, ineq: Vec<Vec<f64>>, rhs: Vec<f64>) -> LpProblem {
    let n = obj.len();
    let mut p = LpProblem::maximize(obj);
    p.set_ineq(SparseRows::from_dense(&ineq, n), rhs);
    p
}

#[test]
fn single_variable_bound() {
    // maximize x subject to x <= 1, x >= 0
    let p = simple(vec![1.0], vec![vec![1.0]], vec![1.0]);
    let s = solve(&p).unwrap();
    assert_eq!(s.status, LpStatus::Optimal);
    assert!((s.objective_value - 1.0).abs() < 1e-9);
    assert!((s.primal[0] - 1.0).abs() < 1e-9);
    check_optimality(&p, &s, 1e-8).unwrap();
}

#[test]
fn contradictory_bounds_infeasible() {
    // maximize x subject to x <= -1, x >= 0
    let p = simple(vec![1.0], vec![vec![1.0]], vec![-1.0]);
    let s = solve(&p).unwrap();
    assert_eq!(s.status, LpStatus::Infeasible);
}

#[test]
fn unbounded_detected() {
    // maximize x, no constraints binding upward
    let p = simple(vec![1.0], vec![vec![-1.0]], vec![0.0]);
    let s = solve(&p).unwrap();
    assert_eq!(s.status, LpStatus::Unbounded);
    // ray improves the objective
    assert!(s.primal[0] > 0.0);
}

#[test]
fn equality_and_free_variables() {
    // maximize y subject to y = 2x - 1, x <= 3, y free, x >= 0
    let mut p = LpProblem::maximize(vec![0.0, 1.0]);
    let mut eq = SparseRows::new(2);
    eq.push_dense_row(&[-2.0, 1.0]);
    p.set_eq(eq, vec![-1.0]);
    let mut ineq = SparseRows::new(2);
    ineq.push_dense_row(&[1.0, 0.0]);
    p.set_ineq(ineq, vec![3.0]);
    p.set_free(1);
    let s = solve(&p).unwrap();
    assert_eq!(s.status, LpStatus::Optimal);
    assert!((s.objective_value - 5.0).abs() < 1e-8);
    check_optimality(&p, &s, 1e-8).unwrap();
}

#[test]
fn boxed_variables_and_duals() {
    // maximize x1 + x2 subject to x1 + x2 <= 1.5, x in [0,1]^2
    let mut p = LpProblem::maximize(vec![1.0, 1.0]);
    let mut ineq = SparseRows::new(2);
    ineq.push_dense_row(&[1.0, 1.0]);
    p.set_ineq(ineq, vec![1.5]);
    p.set_box(0, 0.0, 1.0);
    p.set_box(1, 0.0, 1.0);
    let s = solve(&p).unwrap();
    assert_eq!(s.status, LpStatus::Optimal);
    assert!((s.objective_value - 1.5).abs() < 1e-9);
    assert!(s.dual[0] > 0.5); // binding row
    check_optimality(&p, &s, 1e-8).unwrap();
}

#[test]
fn degenerate_lp_terminates() {
    // Many redundant rows through the same vertex.
    let mut p = LpProblem::maximize(vec![1.0, 1.0]);
    let mut ineq = SparseRows::new(2);
    for _ in 0..8 {
        ineq.push_dense_row(&[1.0, 1.0]);
    }
    ineq.push_dense_row(&[1.0, 0.0]);
    ineq.push_dense_row(&[0.0, 1.0]);
    p.set_ineq(ineq, vec![1.0; 10]);
    let s = solve(&p).unwrap();
    assert_eq!(s.status, LpStatus::Optimal);
    assert!((s.objective_value - 1.0).abs() < 1e-9);
    check_optimality(&p, &s, 1e-8).unwrap();
}

#[test]
fn redundant_equalities_ok() {
    // Duplicate equality rows (rank-deficient but consistent).
    let mut p = LpProblem::maximize(vec![1.0, 2.0]);
    let mut eq = SparseRows::new(2);
    eq.push_dense_row(&[1.0, 1.0]);
    eq.push_dense_row(&[1.0, 1.0]);
    eq.push_dense_row(&[2.0, 2.0]);
    p.set_eq(eq, vec![1.0, 1.0, 2.0]);
    let s = solve(&p).unwrap();
    assert_eq!(s.status, LpStatus::Optimal);
    assert!((s.objective_value - 2.0).abs() < 1e-9);
}

/// The inner problem of the worked maximum-score instance: minimize
/// phi'C p_W over the constrained simplex, with phi the indicator of the
/// (x=0,y=0) cell. The lattice oracle value is 0.35 (see discrepancy tests);
/// here we freeze the LP value of the inner minimization at phi fixed.
#[test]
fn worked_inner_problem() {
    // column order ((0,-1),(0,0),(0,1),(1,-1),(1,0),(1,1))
    // row order ((0,1),(0,0),(1,1),(1,0)); theta = (1,-0.5)
    let c_tilde = [
        [1.0, 1.0, 1.0, 0.0, 0.0, 0.0],
        [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        [0.0, 0.0, 0.0, 1.0, 1.0, 0.0],
        [0.0, 0.0, 0.0, 0.0, 0.0, 1.0],
    ];
    let p_star = [0.15, 0.35, 0.25, 0.25];
    let phi = [0.0, 1.0, 0.0, 0.0];
    // minimize phi'(p* 1' - C~) p = const - phi'C~ p  =>  maximize phi'C~ p
    let mut obj = vec![0.0; 6];
    for m in 0..6 {
        for l in 0..4 {
            obj[m] += phi[l] * c_tilde[l][m];
        }
    }
    let mut p = LpProblem::maximize(obj);
    let mut eq = SparseRows::new(6);
    eq.push_dense_row(&[1.0; 6]);
    eq.push_dense_row(&[1.0, 0.0, -1.0, 0.0, 0.0, 0.0]);
    eq.push_dense_row(&[0.0, 0.0, 0.0, 1.0, 0.0, -1.0]);
    p.set_eq(eq, vec![1.0, 0.0, 0.0]);
    let s = solve(&p).unwrap();
    assert_eq!(s.status, LpStatus::Optimal);
    // row (0,0) of C~ is zero, so the model puts no mass there: max = 0,
    // and the critic extracts phi'p* - 0 = 0.35.
    assert!(s.objective_value.abs() < 1e-9);
    let t: f64 = phi.iter().zip(&p_star).map(|(a, b)| a * b).sum::<f64>() - s.objective_value;
    assert!((t - 0.35).abs() < 1e-6);
    check_optimality(&p, &s, 1e-8).unwrap();
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Random feasible problems generated from a known interior point are
    /// never reported Infeasible, and the certified pair passes all checks.
    #[test]
    fn feasible_from_interior_point(
        n in 2usize..6,
        m in 1usize..5,
        coefs in prop::collection::vec(-2.0f64..2.0, 36),
        point in prop::collection::vec(0.1f64..2.0, 6),
        obj in prop::collection::vec(-1.0f64..1.0, 6),
    ) {
        let x0 = &point[..n];
        let mut ineq = SparseRows::new(n);
        let mut rhs = Vec::new();
        for i in 0..m {
            let row: Vec<f64> = (0..n).map(|j| coefs[i * n + j]).collect();
            let ax: f64 = row.iter().zip(x0).map(|(a, b)| a * b).sum();
            rhs.push(ax + 0.5); // strict slack at x0
            ineq.push_dense_row(&row);
        }
        // box the variables so the LP is bounded
        let mut p = LpProblem::maximize(obj[..n].to_vec());
        p.set_ineq(ineq, rhs);
        for j in 0..n {
            p.set_box(j, 0.0, 3.0);
        }
        let s = solve(&p).unwrap();
        prop_assert_eq!(s.status, LpStatus::Optimal);
        prop_assert!(check_optimality(&p, &s, 1e-7).is_ok(), "{:?}", check_optimality(&p, &s, 1e-7));
    }

    /// Permuting variable order leaves the optimal value unchanged.
    #[test]
    fn value_invariant_under_permutation(
        n in 2usize..5,
        m in 1usize..4,
        coefs in prop::collection::vec(0.0f64..2.0, 20),
        obj in prop::collection::vec(0.0f64..1.0, 5),
        seed in 0u64..1000,
    ) {
        let mut perm: Vec<usize> = (0..n).collect();
        // deterministic Fisher-Yates from the seed
        let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1);
        for i in (1..n).rev() {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            let j = (state >> 33) as usize % (i + 1);
            perm.swap(i, j);
        }
        let build = |order: &[usize]| {
            let mut ineq = SparseRows::new(n);
            let mut rhs = Vec::new();
            for i in 0..m {
                let row: Vec<f64> = order.iter().map(|&j| coefs[i * n + j]).collect();
                ineq.push_dense_row(&row);
                rhs.push(1.0 + i as f64 * 0.25);
            }
            let o: Vec<f64> = order.iter().map(|&j| obj[j]).collect();
            let mut p = LpProblem::maximize(o);
            p.set_ineq(ineq, rhs);
            for j in 0..n {
                p.set_box(j, 0.0, 2.0);
            }
            p
        };
        let id: Vec<usize> = (0..n).collect();
        let a = solve(&build(&id)).unwrap();
        let b = solve(&build(&perm)).unwrap();
        prop_assert_eq!(a.status, LpStatus::Optimal);
        prop_assert_eq!(b.status, LpStatus::Optimal);
        prop_assert!((a.objective_value - b.objective_value).abs() < 1e-9,
            "{} vs {}", a.objective_value, b.objective_value);
    }

    /// Strong duality on every Optimal solve.
    #[test]
    fn strong_duality_random(
        n in 2usize..6,
        coefs in prop::collection::vec(-1.0f64..1.0, 30),
        obj in prop::collection::vec(-1.0f64..1.0, 6),
    ) {
        let m = 3;
        let mut ineq = SparseRows::new(n);
        let mut rhs = Vec::new();
        for i in 0..m {
            let row: Vec<f64> = (0..n).map(|j| coefs[i * n + j]).collect();
            ineq.push_dense_row(&row);
            rhs.push(1.0);
        }
        let mut p = LpProblem::maximize(obj[..n].to_vec());
        p.set_ineq(ineq, rhs);
        for j in 0..n {
            p.set_box(j, 0.0, 1.0);
        }
        let s = solve(&p).unwrap();
        prop_assert_eq!(s.status, LpStatus::Optimal);
        prop_assert!(s.duality_gap.abs() < 1e-8, "gap {}", s.duality_gap);
    }
}
