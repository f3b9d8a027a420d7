use super::OracleBudget;
use crate::linalg::{doubly_stochastic_residual, solve_pinv, solve_spd};
use crate::market::{PermutationOutcome, PriceMatrix};
use crate::simplex::{LinearProgram, Relation};
use crate::{Error, Matrix, Result};
use nalgebra::{DMatrix, DVector};

/// Explicit distribution over all outcomes of one size.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleDistribution {
    pub n: usize,
    pub outcomes: Vec<PermutationOutcome>,
    pub p: Vec<f64>,
}

impl OracleDistribution {
    pub fn entropy(&self) -> f64 {
        -self.p.iter().filter(|v| **v > 0.0).map(|v| v * v.ln()).sum::<f64>()
    }

    pub fn marginals(&self) -> Matrix {
        let mut q = Matrix::zeros(self.n, self.n);
        for (o, w) in self.outcomes.iter().zip(&self.p) {
            for (i, &j) in o.mapping().iter().enumerate() {
                q[(i, j)] += w;
            }
        }
        q
    }

    /// `½ Σ |p_σ − other(σ)|` against another law on the same outcomes.
    pub fn total_variation(&self, other: impl Fn(&PermutationOutcome) -> f64) -> f64 {
        0.5 * self
            .outcomes
            .iter()
            .zip(&self.p)
            .map(|(o, w)| (w - other(o)).abs())
            .sum::<f64>()
    }
}

/// Outcome-by-cell incidence matrix (`n² × n!`).
fn incidence(n: usize, outcomes: &[PermutationOutcome]) -> DMatrix<f64> {
    let mut a = DMatrix::zeros(n * n, outcomes.len());
    for (s, o) in outcomes.iter().enumerate() {
        for (i, &j) in o.mapping().iter().enumerate() {
            a[(i * n + j, s)] = 1.0;
        }
    }
    a
}

fn target_vector(q: &PriceMatrix) -> DVector<f64> {
    let n = q.n();
    DVector::from_fn(n * n, |c, _| q.matrix()[(c / n, c % n)])
}

fn check_doubly_stochastic(q: &PriceMatrix, tol: f64) -> Result<()> {
    let res = doubly_stochastic_residual(q.matrix());
    if res > tol || q.matrix().iter().any(|v| *v < -tol) {
        return Err(Error::NotDoublyStochastic(res));
    }
    Ok(())
}

/// Entropy maximization over the explicit `n!`-simplex with the marginal
/// equalities, by infeasible-start primal Newton steps on `p`. Outcomes
/// through a zero cell of `Q` are fixed at probability zero.
pub fn oracle_maxent(q: &PriceMatrix, budget: &OracleBudget) -> Result<OracleDistribution> {
    let n = q.n();
    let all = budget.capped(6).outcomes(n)?;
    check_doubly_stochastic(q, 1e-9)?;
    let outcomes: Vec<PermutationOutcome> = all
        .iter()
        .filter(|o| o.mapping().iter().enumerate().all(|(i, &j)| q.matrix()[(i, j)] > 0.0))
        .cloned()
        .collect();
    let a = incidence(n, &outcomes);
    let b = target_vector(q);
    let big_n = outcomes.len();
    let mut p = DVector::from_element(big_n, 1.0 / big_n as f64);
    let mut nu = DVector::zeros(n * n);

    let residual = |p: &DVector<f64>, nu: &DVector<f64>| {
        let rd = p.map(|v| 1.0 + v.ln()) + a.transpose() * nu;
        let rp = &a * p - &b;
        (rd, rp)
    };
    let norm = |rd: &DVector<f64>, rp: &DVector<f64>| (rd.norm_squared() + rp.norm_squared()).sqrt();

    for _ in 0..200 {
        let (rd, rp) = residual(&p, &nu);
        if rp.amax() <= 1e-13 && rd.amax() <= 1e-10 {
            let full = all
                .iter()
                .map(|o| outcomes.iter().position(|x| x == o).map_or(0.0, |s| p[s]))
                .collect();
            return Ok(OracleDistribution {
                n,
                outcomes: all,
                p: full,
            });
        }
        // H = diag(1/p): eliminate Δp and solve for Δν
        let ap = DMatrix::from_fn(n * n, big_n, |r, s| a[(r, s)] * p[s]);
        let s = &ap * a.transpose();
        let rhs = &rp - &ap * &rd;
        let dnu = solve_pinv(s, &rhs, 1e-13)
            .ok_or_else(|| Error::NonConvergence("singular marginal system".into()))?;
        let dp = -p.component_mul(&(&rd + a.transpose() * &dnu));
        let mut t: f64 = 1.0;
        for (v, d) in p.iter().zip(dp.iter()) {
            if *d < 0.0 {
                t = t.min(-0.99 * v / d);
            }
        }
        let r0 = norm(&rd, &rp);
        let mut accepted = false;
        for _ in 0..60 {
            let pt = &p + &dp * t;
            let nt = &nu + &dnu * t;
            let (rdt, rpt) = residual(&pt, &nt);
            if norm(&rdt, &rpt) <= (1.0 - 0.01 * t) * r0 {
                p = pt;
                nu = nt;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    Err(Error::NonConvergence("entropy oracle did not converge".into()))
}

/// `min Σ p (log p − 1)  s.t.  Σ_σ p_σ M_σ ≤ Q`, by a primal log-barrier
/// method on the explicit simplex (`n ≤ 5`).
pub fn oracle_relaxed_maxent(q: &PriceMatrix, budget: &OracleBudget) -> Result<OracleDistribution> {
    let n = q.n();
    let outcomes = budget.capped(5).outcomes(n)?;
    let qm = q.matrix();
    let q_min = qm.min();
    if !(q_min > 0.0) {
        return Err(Error::InvalidArgument("relaxed oracle needs a positive target".into()));
    }
    let a = incidence(n, &outcomes);
    let b = target_vector(q);
    let big_n = outcomes.len();
    let per_cell = (1..n).map(|k| k as f64).product::<f64>();
    let mut p = DVector::from_element(big_n, 0.5 * q_min / per_cell);

    let phi = |p: &DVector<f64>, mu: f64| -> f64 {
        let s = &b - &a * p;
        if p.iter().any(|v| *v <= 0.0) || s.iter().any(|v| *v <= 0.0) {
            return f64::INFINITY;
        }
        p.iter().map(|v| v * (v.ln() - 1.0)).sum::<f64>() - mu * s.iter().map(|v| v.ln()).sum::<f64>()
    };

    let mut mu = 1.0;
    while mu > 1e-12 {
        for _ in 0..100 {
            let s = &b - &a * &p;
            let inv_s = s.map(|v| 1.0 / v);
            let g = p.map(f64::ln) + a.transpose() * &inv_s * mu;
            let w = DMatrix::from_fn(n * n, big_n, |r, c| a[(r, c)] * inv_s[r]);
            let mut h = w.transpose() * &w * mu;
            for k in 0..big_n {
                h[(k, k)] += 1.0 / p[k];
            }
            let dir = solve_spd(h, &(-&g))
                .ok_or_else(|| Error::NonConvergence("relaxed oracle Hessian".into()))?;
            let decrement = -g.dot(&dir);
            if decrement / 2.0 <= 1e-14 {
                break;
            }
            let f0 = phi(&p, mu);
            let mut t = 1.0;
            let mut moved = false;
            for _ in 0..60 {
                let trial = &p + &dir * t;
                if phi(&trial, mu) <= f0 - 0.25 * t * decrement {
                    p = trial;
                    moved = true;
                    break;
                }
                t *= 0.5;
            }
            if !moved {
                break;
            }
        }
        mu *= 0.2;
    }
    Ok(OracleDistribution {
        n,
        outcomes,
        p: p.iter().copied().collect(),
    })
}

/// Any distribution with marginals `Q`, found as a basic feasible solution
/// of `Σ_σ p_σ M_σ = Q, p ≥ 0`.
pub fn decompose_feasibility(q: &PriceMatrix, budget: &OracleBudget) -> Result<OracleDistribution> {
    let n = q.n();
    let outcomes = budget.outcomes(n)?;
    check_doubly_stochastic(q, 1e-9)?;
    let a = incidence(n, &outcomes);
    let big_n = outcomes.len();
    let mut lp = LinearProgram::maximize(vec![0.0; big_n]);
    lp.max_iterations = 100 * (big_n + n * n);
    for r in 0..n * n {
        lp.add_row(a.row(r).iter().copied().collect(), Relation::Eq, q.matrix()[(r / n, r % n)]);
    }
    let sol = lp.solve()?;
    Ok(OracleDistribution {
        n,
        outcomes,
        p: sol.x.iter().map(|v| v.max(0.0)).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::combinatorics::factorial;

    fn mixture() -> PriceMatrix {
        let a = PermutationOutcome::identity(4).matrix();
        let b = PermutationOutcome::new(vec![3, 2, 1, 0]).unwrap().matrix();
        PriceMatrix::new(a * 0.6 + b * 0.4, 1e-12).unwrap()
    }

    #[test]
    fn uniform_target_gives_uniform_law() {
        let d = oracle_maxent(&PriceMatrix::uniform(4), &OracleBudget::default()).unwrap();
        assert!(d.p.iter().all(|v| (v - 1.0 / 24.0).abs() < 1e-12));
        assert!((d.entropy() - factorial(4).ln()).abs() < 1e-12);
    }

    #[test]
    fn mixture_entropy_is_a_lower_bound() {
        let q = mixture();
        let d = oracle_maxent(&q, &OracleBudget::default()).unwrap();
        let mix = -(0.6f64 * 0.6f64.ln() + 0.4 * 0.4f64.ln());
        assert!(d.entropy() >= mix - 1e-9);
        assert!((d.marginals() - q.matrix()).abs().max() < 1e-9);
    }

    #[test]
    fn relaxed_program_has_the_same_optimum() {
        let u = Matrix::from_element(4, 4, 0.25);
        let q = PriceMatrix::new(mixture().into_matrix() * 0.7 + u * 0.3, 1e-12).unwrap();
        let eq = oracle_maxent(&q, &OracleBudget::default()).unwrap();
        let rel = oracle_relaxed_maxent(&q, &OracleBudget::default()).unwrap();
        assert!((eq.entropy() - rel.entropy()).abs() < 1e-6);
    }

    #[test]
    fn feasibility_reconstructs_target() {
        let q = mixture();
        let d = decompose_feasibility(&q, &OracleBudget::default()).unwrap();
        assert!((d.marginals() - q.matrix()).abs().max() < 1e-9);
        assert!((d.p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        let sigma = PermutationOutcome::new(vec![1, 0, 2]).unwrap();
        let point = decompose_feasibility(
            &PriceMatrix::new(sigma.matrix(), 1e-12).unwrap(),
            &OracleBudget::default(),
        )
        .unwrap();
        let idx = point.outcomes.iter().position(|o| *o == sigma).unwrap();
        assert!((point.p[idx] - 1.0).abs() < 1e-12);
        let bad = PriceMatrix::new_unchecked(Matrix::from_element(3, 3, 0.4));
        assert!(decompose_feasibility(&bad, &OracleBudget::default()).is_err());
    }
}
