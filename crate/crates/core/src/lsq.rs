//! Levenberg-Marquardt least squares over row-streamed residuals.
//!
//! Problems expose one residual (and its gradient) at a time. The normal
//! equations `JᵀJ`, `Jᵀr` are accumulated chunk-wise through [`crate::exec`], so
//! the Jacobian is never materialized and the reduction order is fixed.
//!
//! Damping follows Nielsen's update with Marquardt's diagonal scaling.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{self, Execution, CHUNK_LEN};

pub trait Problem: Sync {
    fn n_params(&self) -> usize;
    fn n_residuals(&self) -> usize;

    /// Residual `i` at `params`.
    fn residual(&self, i: usize, params: &[f64]) -> f64;

    /// Residual `i` and its gradient with respect to `params`.
    fn residual_grad(&self, i: usize, params: &[f64], grad: &mut [f64]) -> f64;

    /// Parameter vectors outside the model's domain are never evaluated.
    fn feasible(&self, params: &[f64]) -> bool {
        params.iter().all(|p| p.is_finite())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LmOptions {
    pub max_iterations: usize,
    /// Relative parameter step below which the fit has converged.
    pub step_tolerance: f64,
    /// Relative cost decrease below which the fit has converged.
    pub cost_tolerance: f64,
    /// Smallest acceptable reciprocal condition number of the column-scaled `JᵀJ`.
    pub rcond_tolerance: f64,
    pub execution: Execution,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            step_tolerance: 1e-10,
            cost_tolerance: 1e-12,
            rcond_tolerance: 1e-12,
            execution: Execution::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    StepTolerance,
    CostTolerance,
    /// Exact fit (zero cost or zero gradient).
    Exact,
    /// No step could reduce the cost further at working precision.
    Stalled,
}

#[derive(Clone, Debug)]
pub struct LmOutcome {
    pub params: Vec<f64>,
    /// Parameter covariance, `(JᵀJ)⁻¹ · s²` with `s² = Σr² / (m − n)`.
    pub covariance: DMatrix<f64>,
    /// Half the residual sum of squares.
    pub cost: f64,
    pub iterations: usize,
    pub termination: Termination,
}

impl LmOutcome {
    pub fn residual_norm(&self) -> f64 {
        (2.0 * self.cost).sqrt()
    }

    pub fn sigmas(&self) -> Vec<f64> {
        (0..self.params.len())
            .map(|i| self.covariance[(i, i)].max(0.0).sqrt())
            .collect()
    }
}

struct Normal {
    jtj: DMatrix<f64>,
    jtr: DVector<f64>,
    cost: f64,
}

fn accumulate<P: Problem>(problem: &P, params: &[f64], execution: Execution) -> Normal {
    let n = problem.n_params();
    let parts = exec::map_chunks(execution, problem.n_residuals(), CHUNK_LEN, |rows| {
        let mut jtj = vec![0.0; n * n];
        let mut jtr = vec![0.0; n];
        let mut grad = vec![0.0; n];
        let mut ss = 0.0;
        for i in rows {
            let r = problem.residual_grad(i, params, &mut grad);
            ss += r * r;
            for a in 0..n {
                jtr[a] += grad[a] * r;
                for b in a..n {
                    jtj[a * n + b] += grad[a] * grad[b];
                }
            }
        }
        (jtj, jtr, ss)
    });
    let mut jtj = DMatrix::zeros(n, n);
    let mut jtr = DVector::zeros(n);
    let mut ss = 0.0;
    for (pj, pr, ps) in parts {
        for a in 0..n {
            jtr[a] += pr[a];
            for b in a..n {
                jtj[(a, b)] += pj[a * n + b];
            }
        }
        ss += ps;
    }
    for a in 0..n {
        for b in 0..a {
            jtj[(a, b)] = jtj[(b, a)];
        }
    }
    Normal {
        jtj,
        jtr,
        cost: 0.5 * ss,
    }
}

fn cost<P: Problem>(problem: &P, params: &[f64], execution: Execution) -> f64 {
    let parts = exec::map_chunks(execution, problem.n_residuals(), CHUNK_LEN, |rows| {
        rows.map(|i| {
            let r = problem.residual(i, params);
            r * r
        })
        .sum::<f64>()
    });
    0.5 * parts.into_iter().sum::<f64>()
}

/// Minimizes `½ Σ rᵢ²` starting from `init`.
pub fn minimize<P: Problem>(problem: &P, init: &[f64], opts: &LmOptions) -> Result<LmOutcome> {
    let n = problem.n_params();
    let m = problem.n_residuals();
    if init.len() != n {
        return Err(Error::domain(format!(
            "expected {n} initial parameters, got {}",
            init.len()
        )));
    }
    if m < n {
        return Err(Error::InsufficientData(format!(
            "{m} residuals for {n} parameters"
        )));
    }
    if !problem.feasible(init) {
        return Err(Error::domain(
            "initial parameters are outside the model domain",
        ));
    }

    let mut params = init.to_vec();
    let mut normal = accumulate(problem, &params, opts.execution);
    if !normal.cost.is_finite() {
        return Err(Error::domain(
            "model is not finite at the initial parameters",
        ));
    }
    let max_diag = (0..n).map(|i| normal.jtj[(i, i)]).fold(0.0, f64::max);
    let mut lambda = 1e-3 * max_diag.max(f64::MIN_POSITIVE);
    let mut nu = 2.0;
    let mut iterations = 0;

    let termination = loop {
        if normal.cost == 0.0 || normal.jtr.iter().all(|g| *g == 0.0) {
            break Termination::Exact;
        }
        if iterations >= opts.max_iterations {
            return Err(Error::NonConvergence { iterations });
        }
        iterations += 1;

        let mut damped = normal.jtj.clone();
        for i in 0..n {
            let d = normal.jtj[(i, i)]
                .max(1e-12 * max_diag)
                .max(f64::MIN_POSITIVE);
            damped[(i, i)] += lambda * d;
        }
        let step = match damped.clone().cholesky() {
            Some(ch) => ch.solve(&(-&normal.jtr)),
            None => {
                lambda *= nu;
                nu *= 2.0;
                continue;
            }
        };
        let trial: Vec<f64> = params.iter().zip(step.iter()).map(|(p, d)| p + d).collect();
        let new_cost = if problem.feasible(&trial) {
            cost(problem, &trial, opts.execution)
        } else {
            f64::INFINITY
        };
        // Predicted decrease of the damped quadratic model.
        let predicted = -step.dot(&normal.jtr) - 0.5 * step.dot(&(&normal.jtj * &step));
        let actual = normal.cost - new_cost;

        if new_cost.is_finite() && actual > 0.0 && predicted > 0.0 {
            let rho = actual / predicted;
            let small_step = step
                .iter()
                .zip(params.iter())
                .all(|(d, p)| d.abs() <= opts.step_tolerance * (p.abs() + opts.step_tolerance));
            let small_decrease = actual <= opts.cost_tolerance * normal.cost;
            params = trial;
            normal = accumulate(problem, &params, opts.execution);
            lambda *= (1.0 - (2.0 * rho - 1.0).powi(3)).max(1.0 / 3.0);
            nu = 2.0;
            if small_step {
                break Termination::StepTolerance;
            }
            if small_decrease {
                break Termination::CostTolerance;
            }
        } else {
            lambda *= nu;
            nu *= 2.0;
            if lambda > 1e20 * max_diag.max(f64::MIN_POSITIVE) {
                break Termination::Stalled;
            }
        }
    };

    let covariance = covariance(&normal, m, opts.rcond_tolerance)?;
    Ok(LmOutcome {
        params,
        covariance,
        cost: normal.cost,
        iterations,
        termination,
    })
}

/// `(JᵀJ)⁻¹ s²`, refusing matrices whose column-scaled form is numerically singular.
fn covariance(normal: &Normal, m: usize, rcond_tolerance: f64) -> Result<DMatrix<f64>> {
    rank_check(&normal.jtj, rcond_tolerance)?;
    let n = normal.jtj.nrows();
    let scale: Vec<f64> = (0..n).map(|i| normal.jtj[(i, i)].sqrt()).collect();
    let scaled = DMatrix::from_fn(n, n, |a, b| normal.jtj[(a, b)] / (scale[a] * scale[b]));
    let inv = scaled
        .try_inverse()
        .ok_or_else(|| Error::RankDeficient("JᵀJ is singular at the optimum".into()))?;
    let dof = (m - n).max(1) as f64;
    let s2 = 2.0 * normal.cost / dof;
    Ok(DMatrix::from_fn(n, n, |a, b| {
        inv[(a, b)] / (scale[a] * scale[b]) * s2
    }))
}

/// Reciprocal condition number of the column-scaled normal matrix.
pub fn scaled_rcond(jtj: &DMatrix<f64>) -> f64 {
    let n = jtj.nrows();
    if (0..n).any(|i| !(jtj[(i, i)] > 0.0)) {
        return 0.0;
    }
    let scaled = DMatrix::from_fn(n, n, |a, b| {
        jtj[(a, b)] / (jtj[(a, a)].sqrt() * jtj[(b, b)].sqrt())
    });
    let eig = SymmetricEigen::new(scaled).eigenvalues;
    let max = eig.iter().cloned().fold(f64::MIN, f64::max);
    let min = eig.iter().cloned().fold(f64::MAX, f64::min);
    if max <= 0.0 {
        0.0
    } else {
        (min / max).max(0.0)
    }
}

fn rank_check(jtj: &DMatrix<f64>, tol: f64) -> Result<()> {
    let n = jtj.nrows();
    if let Some(i) = (0..n).find(|&i| !(jtj[(i, i)] > 0.0)) {
        return Err(Error::RankDeficient(format!(
            "parameter {i} has no influence on the residuals"
        )));
    }
    let rcond = scaled_rcond(jtj);
    if rcond < tol {
        return Err(Error::RankDeficient(format!(
            "scaled normal matrix has reciprocal condition number {rcond:.3e}"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    /// y = a·exp(−b·x) + c
    struct ExpDecay {
        x: Vec<f64>,
        y: Vec<f64>,
    }

    impl Problem for ExpDecay {
        fn n_params(&self) -> usize {
            3
        }
        fn n_residuals(&self) -> usize {
            self.x.len()
        }
        fn residual(&self, i: usize, p: &[f64]) -> f64 {
            p[0] * (-p[1] * self.x[i]).exp() + p[2] - self.y[i]
        }
        fn residual_grad(&self, i: usize, p: &[f64], g: &mut [f64]) -> f64 {
            let e = (-p[1] * self.x[i]).exp();
            g[0] = e;
            g[1] = -p[0] * self.x[i] * e;
            g[2] = 1.0;
            p[0] * e + p[2] - self.y[i]
        }
    }

    fn decay(noise: impl Fn(usize) -> f64) -> ExpDecay {
        let x: Vec<f64> = (0..5000).map(|i| i as f64 * 1e-3).collect();
        let y = x
            .iter()
            .enumerate()
            .map(|(i, x)| 2.0 * (-1.3 * x).exp() + 0.5 + noise(i))
            .collect();
        ExpDecay { x, y }
    }

    #[test]
    fn recovers_exact_parameters() {
        let p = decay(|_| 0.0);
        let out = minimize(&p, &[1.0, 0.5, 0.0], &LmOptions::default());
        // Exact data leaves s² = 0, which the covariance accepts.
        let out = out.unwrap();
        for (got, want) in out.params.iter().zip([2.0, 1.3, 0.5]) {
            assert!((got - want).abs() < 1e-9, "{got} vs {want}");
        }
        assert!(out.residual_norm() < 1e-10);
    }

    #[test]
    fn covariance_matches_known_linear_case() {
        // Residual noise ±0.01 alternating; the fit σ should be ~0.01/√m scale.
        let p = decay(|i| if i % 2 == 0 { 0.01 } else { -0.01 });
        let out = minimize(&p, &[1.0, 0.5, 0.0], &LmOptions::default()).unwrap();
        let s = out.sigmas();
        assert!(s.iter().all(|s| *s > 0.0 && *s < 0.05), "{s:?}");
        assert!(matches!(
            out.termination,
            Termination::CostTolerance | Termination::StepTolerance | Termination::Stalled
        ));
    }

    #[test]
    fn sequential_and_parallel_agree_bitwise() {
        let p = decay(|i| ((i * 7919) % 101) as f64 * 1e-4);
        let mut opts = LmOptions::default();
        let a = minimize(&p, &[1.0, 0.5, 0.0], &opts).unwrap();
        opts.execution = Execution::Sequential;
        let b = minimize(&p, &[1.0, 0.5, 0.0], &opts).unwrap();
        assert_eq!(a.params, b.params);
        assert_eq!(a.covariance, b.covariance);
    }

    /// Two parameters enter only through their sum.
    struct Degenerate;
    impl Problem for Degenerate {
        fn n_params(&self) -> usize {
            2
        }
        fn n_residuals(&self) -> usize {
            10
        }
        fn residual(&self, i: usize, p: &[f64]) -> f64 {
            (p[0] + p[1]) * i as f64 - 3.0 * i as f64 + 0.01 * (i % 3) as f64
        }
        fn residual_grad(&self, i: usize, p: &[f64], g: &mut [f64]) -> f64 {
            g[0] = i as f64;
            g[1] = i as f64;
            self.residual(i, p)
        }
    }

    #[test]
    fn reports_rank_deficiency() {
        let err = minimize(&Degenerate, &[0.0, 0.0], &LmOptions::default()).unwrap_err();
        assert!(matches!(err, Error::RankDeficient(_)), "{err}");
    }

    #[test]
    fn iteration_cap_is_enforced() {
        let p = decay(|i| ((i * 31) % 17) as f64 * 1e-3);
        let opts = LmOptions {
            max_iterations: 1,
            ..Default::default()
        };
        assert!(matches!(
            minimize(&p, &[0.1, 5.0, -3.0], &opts),
            Err(Error::NonConvergence { iterations: 1 })
        ));
    }
}
