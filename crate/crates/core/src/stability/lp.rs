//! Exact sphere minima of `‖Ac‖_p` at `p ∈ {1, ∞}` for few columns.

use microlp::{ComparisonOp, OptimizationDirection, Problem, Variable};
use rayon::prelude::*;

use super::Operator;
use crate::error::{Error, Result};

fn rows_of(op: &Operator) -> Vec<Vec<(usize, f64)>> {
    let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); op.nrows()];
    for &(i, j, v) in op.entries() {
        rows[i].push((j, v));
    }
    rows.retain(|r| !r.is_empty());
    rows
}

fn solve(problem: &Problem) -> Result<f64> {
    let outcome = problem.solve().map_err(|e| Error::LinearProgram(e.to_string()))?;
    let sol = outcome
        .into_solution()
        .map_err(|_| Error::LinearProgram("solve interrupted".into()))?;
    Ok(sol.objective())
}

/// `min ‖Ac‖₁` over `‖c‖₁ = 1`. On the orthant of sign pattern `τ` write
/// `c = τ·u` with `u ≥ 0, Σu = 1`; each orthant is a linear program with
/// slack `t_i ≥ |(Ac)_i|`. Patterns `τ` and `−τ` give the same value, so the
/// first sign is fixed.
pub(super) fn min_l1(op: &Operator) -> Result<f64> {
    let m = op.ncols();
    let rows = rows_of(op);
    let patterns: Vec<u32> = (0..1u32 << (m - 1)).collect();
    let values: Vec<Result<f64>> = patterns
        .par_iter()
        .map(|&bits| {
            let tau: Vec<f64> = (0..m).map(|j| if j > 0 && bits >> (j - 1) & 1 == 1 { -1.0 } else { 1.0 }).collect();
            let mut pb = Problem::new(OptimizationDirection::Minimize);
            let u: Vec<Variable> = (0..m).map(|_| pb.add_var(0.0, (0.0, 1.0))).collect();
            pb.add_constraint(u.iter().map(|&v| (v, 1.0)), ComparisonOp::Eq, 1.0);
            for row in &rows {
                let t = pb.add_var(1.0, (0.0, f64::INFINITY));
                let plus: Vec<(Variable, f64)> = row.iter().map(|&(j, a)| (u[j], a * tau[j])).chain([(t, -1.0)]).collect();
                let minus: Vec<(Variable, f64)> =
                    row.iter().map(|&(j, a)| (u[j], -a * tau[j])).chain([(t, -1.0)]).collect();
                pb.add_constraint(plus, ComparisonOp::Le, 0.0);
                pb.add_constraint(minus, ComparisonOp::Le, 0.0);
            }
            solve(&pb)
        })
        .collect();
    values.into_iter().try_fold(f64::INFINITY, |acc, v| Ok(acc.min(v?)))
}

/// `min ‖Ac‖∞` over `‖c‖∞ = 1`. Some coordinate attains `|c_k| = 1`, and by
/// symmetry `c_k = 1`; the remaining coordinates range over `[−1, 1]`.
pub(super) fn min_linf(op: &Operator) -> Result<f64> {
    let m = op.ncols();
    let rows = rows_of(op);
    let values: Vec<Result<f64>> = (0..m)
        .into_par_iter()
        .map(|k| {
            let mut pb = Problem::new(OptimizationDirection::Minimize);
            let c: Vec<Variable> = (0..m)
                .map(|j| if j == k { pb.add_var(0.0, (1.0, 1.0)) } else { pb.add_var(0.0, (-1.0, 1.0)) })
                .collect();
            let t = pb.add_var(1.0, (0.0, f64::INFINITY));
            for row in &rows {
                let plus: Vec<(Variable, f64)> = row.iter().map(|&(j, a)| (c[j], a)).chain([(t, -1.0)]).collect();
                let minus: Vec<(Variable, f64)> = row.iter().map(|&(j, a)| (c[j], -a)).chain([(t, -1.0)]).collect();
                pb.add_constraint(plus, ComparisonOp::Le, 0.0);
                pb.add_constraint(minus, ComparisonOp::Le, 0.0);
            }
            solve(&pb)
        })
        .collect();
    values.into_iter().try_fold(f64::INFINITY, |acc, v| Ok(acc.min(v?)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_minima() {
        let op = Operator::new(3, 3, vec![(0, 0, 2.0), (1, 1, -0.5), (2, 2, 4.0)]).unwrap();
        assert!((min_l1(&op).unwrap() - 0.5).abs() < 1e-12);
        assert!((min_linf(&op).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn rank_deficient_is_zero() {
        let op = Operator::new(2, 2, vec![(0, 0, 1.0), (0, 1, 1.0), (1, 0, 2.0), (1, 1, 2.0)]).unwrap();
        assert!(min_l1(&op).unwrap().abs() < 1e-12);
        assert!(min_linf(&op).unwrap().abs() < 1e-12);
    }

    #[test]
    fn tall_column() {
        // ‖(1, −2, 3) c‖ over |c| = 1.
        let op = Operator::new(3, 1, vec![(0, 0, 1.0), (1, 0, -2.0), (2, 0, 3.0)]).unwrap();
        assert!((min_l1(&op).unwrap() - 6.0).abs() < 1e-12);
        assert!((min_linf(&op).unwrap() - 3.0).abs() < 1e-12);
    }
}
