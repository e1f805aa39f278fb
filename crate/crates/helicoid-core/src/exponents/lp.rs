//! Dense two-phase simplex over exact rationals with Bland's rule.
//!
//! Problems here have at most a few dozen variables, so a dense tableau is
//! fine and exactness matters more than speed.

use num_rational::BigRational;
use num_traits::{One, Signed, Zero};

pub type Q = BigRational;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Op {
    Le,
    Ge,
    Eq,
}

#[derive(Clone, Debug)]
pub struct Constraint {
    pub coeffs: Vec<Q>,
    pub op: Op,
    pub rhs: Q,
}

#[derive(Clone, Debug, PartialEq)]
pub enum LpOutcome {
    Infeasible,
    Unbounded,
    Optimal { value: Q, x: Vec<Q> },
}

/// Maximizes `objective · x` subject to `constraints` and `x ≥ 0`.
pub fn maximize(objective: &[Q], constraints: &[Constraint]) -> LpOutcome {
    let nv = objective.len();
    let m = constraints.len();

    // Normalize to nonnegative right-hand sides.
    let rows: Vec<(Vec<Q>, Op, Q)> = constraints
        .iter()
        .map(|c| {
            assert_eq!(c.coeffs.len(), nv, "constraint width mismatch");
            if c.rhs.is_negative() {
                let op = match c.op {
                    Op::Le => Op::Ge,
                    Op::Ge => Op::Le,
                    Op::Eq => Op::Eq,
                };
                (c.coeffs.iter().map(|a| -a).collect(), op, -c.rhs.clone())
            } else {
                (c.coeffs.clone(), c.op, c.rhs.clone())
            }
        })
        .collect();

    let n_slack = rows.iter().filter(|r| r.1 != Op::Eq).count();
    let n_art = rows.iter().filter(|r| r.1 != Op::Le).count();
    let width = nv + n_slack + n_art;
    let art_start = nv + n_slack;

    let mut tab: Vec<Vec<Q>> = Vec::with_capacity(m);
    let mut basis: Vec<usize> = Vec::with_capacity(m);
    let (mut si, mut ai) = (nv, art_start);
    for (coeffs, op, rhs) in rows {
        let mut row = vec![Q::zero(); width + 1];
        row[..nv].clone_from_slice(&coeffs);
        row[width] = rhs;
        match op {
            Op::Le => {
                row[si] = Q::one();
                basis.push(si);
                si += 1;
            }
            Op::Ge => {
                row[si] = -Q::one();
                si += 1;
                row[ai] = Q::one();
                basis.push(ai);
                ai += 1;
            }
            Op::Eq => {
                row[ai] = Q::one();
                basis.push(ai);
                ai += 1;
            }
        }
        tab.push(row);
    }

    // Phase 1: maximize -(sum of artificials).
    if n_art > 0 {
        let mut c1 = vec![Q::zero(); width];
        for c in c1.iter_mut().skip(art_start) {
            *c = -Q::one();
        }
        if run_simplex(&mut tab, &mut basis, &c1, width, None) == Status::Unbounded {
            unreachable!("phase one is bounded");
        }
        let phase1: Q = basis
            .iter()
            .enumerate()
            .filter(|(_, &b)| b >= art_start)
            .map(|(r, _)| tab[r][width].clone())
            .fold(Q::zero(), |a, b| a + b);
        if phase1.is_positive() {
            return LpOutcome::Infeasible;
        }
        // Drive remaining (zero-valued) artificials out of the basis.
        let mut r = 0;
        while r < tab.len() {
            if basis[r] >= art_start {
                if let Some(col) = (0..art_start).find(|&c| !tab[r][c].is_zero()) {
                    pivot(&mut tab, &mut basis, r, col, width);
                    r += 1;
                } else {
                    tab.remove(r);
                    basis.remove(r);
                }
            } else {
                r += 1;
            }
        }
    }

    // Phase 2 over the original variables and slacks only.
    let mut c2 = vec![Q::zero(); width];
    c2[..nv].clone_from_slice(objective);
    if run_simplex(&mut tab, &mut basis, &c2, width, Some(art_start)) == Status::Unbounded {
        return LpOutcome::Unbounded;
    }
    let mut x = vec![Q::zero(); nv];
    for (r, &b) in basis.iter().enumerate() {
        if b < nv {
            x[b] = tab[r][width].clone();
        }
    }
    let value = objective
        .iter()
        .zip(&x)
        .fold(Q::zero(), |acc, (c, v)| acc + c * v);
    LpOutcome::Optimal { value, x }
}

/// Finds any `x ≥ 0` satisfying the constraints.
pub fn feasible_point(nv: usize, constraints: &[Constraint]) -> Option<Vec<Q>> {
    match maximize(&vec![Q::zero(); nv], constraints) {
        LpOutcome::Optimal { x, .. } => Some(x),
        _ => None,
    }
}

#[derive(PartialEq, Eq)]
enum Status {
    Optimal,
    Unbounded,
}

fn run_simplex(
    tab: &mut [Vec<Q>],
    basis: &mut [usize],
    cost: &[Q],
    width: usize,
    col_limit: Option<usize>,
) -> Status {
    let limit = col_limit.unwrap_or(width);
    loop {
        // Reduced costs: c_j - c_B · column_j. Bland: first improving column.
        let entering = (0..limit).find(|&j| {
            if basis.contains(&j) {
                return false;
            }
            let mut rc = cost[j].clone();
            for (r, &b) in basis.iter().enumerate() {
                if !tab[r][j].is_zero() && !cost[b].is_zero() {
                    rc -= &cost[b] * &tab[r][j];
                }
            }
            rc.is_positive()
        });
        let Some(col) = entering else {
            return Status::Optimal;
        };
        // Ratio test; Bland tie-break on smallest basic index.
        let mut best: Option<(usize, Q)> = None;
        for r in 0..tab.len() {
            if tab[r][col].is_positive() {
                let ratio = &tab[r][width] / &tab[r][col];
                let better = match &best {
                    None => true,
                    Some((br, bv)) => ratio < *bv || (ratio == *bv && basis[r] < basis[*br]),
                };
                if better {
                    best = Some((r, ratio));
                }
            }
        }
        let Some((row, _)) = best else {
            return Status::Unbounded;
        };
        pivot(tab, basis, row, col, width);
    }
}

fn pivot(tab: &mut [Vec<Q>], basis: &mut [usize], row: usize, col: usize, width: usize) {
    let p = tab[row][col].clone();
    for v in tab[row].iter_mut() {
        *v = &*v / &p;
    }
    let pivot_row = tab[row].clone();
    for (r, line) in tab.iter_mut().enumerate() {
        if r == row || line[col].is_zero() {
            continue;
        }
        let f = line[col].clone();
        for c in 0..=width {
            if !pivot_row[c].is_zero() {
                line[c] -= &f * &pivot_row[c];
            }
        }
    }
    basis[row] = col;
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_bigint::BigInt;

    fn q(n: i64, d: i64) -> Q {
        Q::new(BigInt::from(n), BigInt::from(d))
    }

    fn row(c: &[i64], op: Op, rhs: Q) -> Constraint {
        Constraint {
            coeffs: c.iter().map(|&v| q(v, 1)).collect(),
            op,
            rhs,
        }
    }

    #[test]
    fn textbook_optimum() {
        // max 3x + 5y, x ≤ 4, 2y ≤ 12, 3x + 2y ≤ 18 → (2, 6), value 36.
        let out = maximize(
            &[q(3, 1), q(5, 1)],
            &[
                row(&[1, 0], Op::Le, q(4, 1)),
                row(&[0, 2], Op::Le, q(12, 1)),
                row(&[3, 2], Op::Le, q(18, 1)),
            ],
        );
        assert_eq!(
            out,
            LpOutcome::Optimal {
                value: q(36, 1),
                x: vec![q(2, 1), q(6, 1)]
            }
        );
    }

    #[test]
    fn equality_and_infeasibility() {
        let feas = feasible_point(2, &[row(&[1, 1], Op::Eq, q(1, 2)), row(&[1, 0], Op::Ge, q(1, 3))]);
        let x = feas.unwrap();
        assert_eq!(&x[0] + &x[1], q(1, 2));
        assert!(x[0] >= q(1, 3));
        let none = feasible_point(1, &[row(&[1], Op::Le, q(1, 3)), row(&[1], Op::Ge, q(1, 2))]);
        assert!(none.is_none());
    }

    #[test]
    fn unbounded_detected() {
        let out = maximize(&[q(1, 1)], &[row(&[1], Op::Ge, q(1, 1))]);
        assert_eq!(out, LpOutcome::Unbounded);
    }
}
