//! Dense two-phase revised simplex with Bland's anti-cycling rule.
//!
//! Small and auditable rather than fast: it backs the compact LP clearing
//! and the brute-force reference solvers, where problems have at most a few
//! hundred rows.

use crate::{Error, Result};
use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarBound {
    NonNegative,
    Free,
}

/// `maximize c·x` subject to linear rows and sign restrictions.
#[derive(Debug, Clone)]
pub struct LinearProgram {
    objective: Vec<f64>,
    bounds: Vec<VarBound>,
    rows: Vec<(Vec<f64>, Relation, f64)>,
    pub max_iterations: usize,
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    /// One multiplier per row with `objective = Σ rhs_i · dual_i`; `≤` rows
    /// carry nonnegative duals, `≥` rows nonpositive ones.
    pub duals: Vec<f64>,
    pub iterations: usize,
}

const PIVOT_TOL: f64 = 1e-9;
const OPT_TOL: f64 = 1e-10;
const REFACTOR_EVERY: usize = 64;

impl LinearProgram {
    pub fn maximize(objective: Vec<f64>) -> Self {
        let bounds = vec![VarBound::NonNegative; objective.len()];
        Self {
            objective,
            bounds,
            rows: Vec::new(),
            max_iterations: 50_000,
        }
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn set_bound(&mut self, var: usize, bound: VarBound) {
        self.bounds[var] = bound;
    }

    pub fn add_row(&mut self, coeffs: Vec<f64>, rel: Relation, rhs: f64) -> usize {
        assert_eq!(coeffs.len(), self.objective.len(), "row length must match variables");
        self.rows.push((coeffs, rel, rhs));
        self.rows.len() - 1
    }

    pub fn solve(&self) -> Result<LpSolution> {
        StandardForm::build(self).solve(self)
    }
}

struct StandardForm {
    a: DMatrix<f64>,
    b: DVector<f64>,
    cost: Vec<f64>,
    /// column of the original variable (and its negative part when free)
    var_cols: Vec<(usize, Option<usize>)>,
    flipped: Vec<bool>,
    artificial_start: usize,
    basis: Vec<usize>,
}

impl StandardForm {
    fn build(lp: &LinearProgram) -> Self {
        let m = lp.rows.len();
        let mut var_cols = Vec::with_capacity(lp.num_vars());
        let mut ncols = 0;
        for bound in &lp.bounds {
            match bound {
                VarBound::NonNegative => {
                    var_cols.push((ncols, None));
                    ncols += 1;
                }
                VarBound::Free => {
                    var_cols.push((ncols, Some(ncols + 1)));
                    ncols += 2;
                }
            }
        }
        let mut flipped = vec![false; m];
        let mut rels = Vec::with_capacity(m);
        for (i, (_, rel, rhs)) in lp.rows.iter().enumerate() {
            let mut rel = *rel;
            if *rhs < 0.0 {
                flipped[i] = true;
                rel = match rel {
                    Relation::Le => Relation::Ge,
                    Relation::Ge => Relation::Le,
                    Relation::Eq => Relation::Eq,
                };
            }
            rels.push(rel);
        }
        let slack_start = ncols;
        let n_slack = rels.iter().filter(|r| **r != Relation::Eq).count();
        let artificial_start = slack_start + n_slack;
        let n_art = rels.iter().filter(|r| **r != Relation::Le).count();
        let total = artificial_start + n_art;

        let mut a = DMatrix::zeros(m, total);
        let mut b = DVector::zeros(m);
        let mut basis = vec![0; m];
        let mut slack = slack_start;
        let mut art = artificial_start;
        for (i, (coeffs, _, rhs)) in lp.rows.iter().enumerate() {
            let s = if flipped[i] { -1.0 } else { 1.0 };
            for (v, &c) in coeffs.iter().enumerate() {
                let (pos, neg) = var_cols[v];
                a[(i, pos)] = s * c;
                if let Some(neg) = neg {
                    a[(i, neg)] = -s * c;
                }
            }
            b[i] = s * rhs;
            match rels[i] {
                Relation::Le => {
                    a[(i, slack)] = 1.0;
                    basis[i] = slack;
                    slack += 1;
                }
                Relation::Ge => {
                    a[(i, slack)] = -1.0;
                    slack += 1;
                    a[(i, art)] = 1.0;
                    basis[i] = art;
                    art += 1;
                }
                Relation::Eq => {
                    a[(i, art)] = 1.0;
                    basis[i] = art;
                    art += 1;
                }
            }
        }
        // internal problem minimizes, so negate the objective
        let mut cost = vec![0.0; total];
        for (v, &c) in lp.objective.iter().enumerate() {
            let (pos, neg) = var_cols[v];
            cost[pos] = -c;
            if let Some(neg) = neg {
                cost[neg] = c;
            }
        }
        Self {
            a,
            b,
            cost,
            var_cols,
            flipped,
            artificial_start,
            basis,
        }
    }

    fn solve(mut self, lp: &LinearProgram) -> Result<LpSolution> {
        let m = self.a.nrows();
        let total = self.a.ncols();
        let mut iterations = 0;
        let mut binv = DMatrix::identity(m, m);
        let mut xb = self.b.clone();

        if self.artificial_start < total {
            let phase1: Vec<f64> = (0..total)
                .map(|j| if j >= self.artificial_start { 1.0 } else { 0.0 })
                .collect();
            self.run(&phase1, &mut binv, &mut xb, total, &mut iterations, lp.max_iterations)?;
            let infeas: f64 = self
                .basis
                .iter()
                .zip(xb.iter())
                .filter(|(j, _)| **j >= self.artificial_start)
                .map(|(_, v)| *v)
                .sum();
            let scale = 1.0 + self.b.amax();
            if infeas > 1e-8 * scale {
                return Err(Error::Infeasible(format!(
                    "linear program infeasible (phase-one residual {infeas:.3e})"
                )));
            }
            self.evict_artificials(&mut binv, &mut xb);
        }
        let cost = self.cost.clone();
        self.run(&cost, &mut binv, &mut xb, self.artificial_start, &mut iterations, lp.max_iterations)?;

        let mut z = vec![0.0; total];
        for (r, &j) in self.basis.iter().enumerate() {
            z[j] = xb[r];
        }
        let x: Vec<f64> = self
            .var_cols
            .iter()
            .map(|&(pos, neg)| z[pos] - neg.map_or(0.0, |c| z[c]))
            .collect();
        let objective = lp.objective.iter().zip(&x).map(|(c, v)| c * v).sum();
        let cb = DVector::from_iterator(m, self.basis.iter().map(|&j| self.cost[j]));
        let lambda = binv.transpose() * cb;
        let duals = (0..m)
            .map(|i| if self.flipped[i] { lambda[i] } else { -lambda[i] })
            .collect();
        Ok(LpSolution {
            x,
            objective,
            duals,
            iterations,
        })
    }

    /// Simplex iterations over columns `0..allowed` for cost vector `cost`.
    fn run(
        &mut self,
        cost: &[f64],
        binv: &mut DMatrix<f64>,
        xb: &mut DVector<f64>,
        allowed: usize,
        iterations: &mut usize,
        max_iterations: usize,
    ) -> Result<()> {
        let m = self.a.nrows();
        let mut since_refactor = 0;
        loop {
            if *iterations >= max_iterations {
                return Err(Error::NonConvergence(format!(
                    "simplex exceeded {max_iterations} iterations"
                )));
            }
            let cb = DVector::from_iterator(m, self.basis.iter().map(|&j| cost[j]));
            let y = binv.transpose() * &cb;
            let mut in_basis = vec![false; self.a.ncols()];
            for &j in &self.basis {
                in_basis[j] = true;
            }
            // Bland: lowest-index improving column
            let entering = (0..allowed).find(|&j| {
                !in_basis[j] && cost[j] - self.a.column(j).dot(&y) < -OPT_TOL
            });
            let Some(q) = entering else {
                return Ok(());
            };
            let u = &*binv * self.a.column(q);
            let mut leave: Option<(usize, f64)> = None;
            for r in 0..m {
                if u[r] > PIVOT_TOL {
                    let ratio = xb[r].max(0.0) / u[r];
                    leave = match leave {
                        None => Some((r, ratio)),
                        Some((lr, lratio)) => {
                            if ratio < lratio - 1e-12
                                || (ratio <= lratio + 1e-12 && self.basis[r] < self.basis[lr])
                            {
                                Some((r, ratio))
                            } else {
                                Some((lr, lratio))
                            }
                        }
                    };
                }
            }
            let Some((r, _)) = leave else {
                return Err(Error::Infeasible("linear program is unbounded".into()));
            };
            pivot(binv, xb, &u, r);
            self.basis[r] = q;
            *iterations += 1;
            since_refactor += 1;
            if since_refactor >= REFACTOR_EVERY {
                self.refactor(binv, xb)?;
                since_refactor = 0;
            }
        }
    }

    fn refactor(&self, binv: &mut DMatrix<f64>, xb: &mut DVector<f64>) -> Result<()> {
        let m = self.a.nrows();
        let mut bmat = DMatrix::zeros(m, m);
        for (r, &j) in self.basis.iter().enumerate() {
            bmat.set_column(r, &self.a.column(j));
        }
        *binv = bmat
            .try_inverse()
            .ok_or_else(|| Error::NonConvergence("singular simplex basis".into()))?;
        *xb = &*binv * &self.b;
        Ok(())
    }

    /// Pivots zero-level artificial variables out of the basis where a
    /// structural column can replace them; rows where none can are redundant.
    fn evict_artificials(&mut self, binv: &mut DMatrix<f64>, xb: &mut DVector<f64>) {
        let m = self.a.nrows();
        for r in 0..m {
            if self.basis[r] < self.artificial_start {
                continue;
            }
            let row = binv.row(r).clone_owned();
            let replacement = (0..self.artificial_start).find(|&j| {
                !self.basis.contains(&j) && (row.clone() * self.a.column(j))[0].abs() > 1e-7
            });
            if let Some(j) = replacement {
                let u = &*binv * self.a.column(j);
                pivot(binv, xb, &u, r);
                self.basis[r] = j;
            }
        }
    }
}

fn pivot(binv: &mut DMatrix<f64>, xb: &mut DVector<f64>, u: &DVector<f64>, r: usize) {
    let m = binv.nrows();
    let ur = u[r];
    let pivot_row = binv.row(r) / ur;
    let xr = xb[r] / ur;
    for i in 0..m {
        if i == r {
            continue;
        }
        let f = u[i];
        if f != 0.0 {
            for c in 0..m {
                binv[(i, c)] -= f * pivot_row[c];
            }
            xb[i] -= f * xr;
        }
    }
    binv.set_row(r, &pivot_row);
    xb[r] = xr;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn textbook_problem() {
        // max 3x + 5y, x <= 4, 2y <= 12, 3x + 2y <= 18  -> (2, 6), 36
        let mut lp = LinearProgram::maximize(vec![3.0, 5.0]);
        lp.add_row(vec![1.0, 0.0], Relation::Le, 4.0);
        lp.add_row(vec![0.0, 2.0], Relation::Le, 12.0);
        lp.add_row(vec![3.0, 2.0], Relation::Le, 18.0);
        let s = lp.solve().unwrap();
        assert!((s.objective - 36.0).abs() < 1e-9);
        assert!((s.x[0] - 2.0).abs() < 1e-9 && (s.x[1] - 6.0).abs() < 1e-9);
        // duals (0, 1.5, 1) reproduce the objective
        let dual_obj: f64 = [4.0, 12.0, 18.0].iter().zip(&s.duals).map(|(b, y)| b * y).sum();
        assert!((dual_obj - 36.0).abs() < 1e-9);
        assert!((s.duals[1] - 1.5).abs() < 1e-9 && (s.duals[2] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn equality_ge_and_free_variables() {
        // max -x - y with x + y = 2, x - y >= -4, y free, x >= 0 -> value -2
        let mut lp = LinearProgram::maximize(vec![-1.0, -1.0]);
        lp.set_bound(1, VarBound::Free);
        lp.add_row(vec![1.0, 1.0], Relation::Eq, 2.0);
        lp.add_row(vec![1.0, -1.0], Relation::Ge, -4.0);
        let s = lp.solve().unwrap();
        assert!((s.objective + 2.0).abs() < 1e-9);
        let dual_obj = 2.0 * s.duals[0] - 4.0 * s.duals[1];
        assert!((dual_obj + 2.0).abs() < 1e-9);
        // min over free variable reaching negative values
        let mut lp = LinearProgram::maximize(vec![-1.0]);
        lp.set_bound(0, VarBound::Free);
        lp.add_row(vec![1.0], Relation::Ge, -3.0);
        let s = lp.solve().unwrap();
        assert!((s.x[0] + 3.0).abs() < 1e-9);
    }

    #[test]
    fn infeasible_and_unbounded() {
        let mut lp = LinearProgram::maximize(vec![1.0]);
        lp.add_row(vec![1.0], Relation::Le, 1.0);
        lp.add_row(vec![1.0], Relation::Ge, 2.0);
        assert!(matches!(lp.solve(), Err(Error::Infeasible(_))));
        let mut lp = LinearProgram::maximize(vec![1.0]);
        lp.add_row(vec![-1.0], Relation::Le, 1.0);
        assert!(lp.solve().is_err());
    }
}
