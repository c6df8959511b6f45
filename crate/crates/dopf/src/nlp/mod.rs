//! Sparse nonlinear programming with an embedded primal-dual interior-point
//! solver.
//!
//! Problems are posed through the [`NlpProblem`] trait: variables with
//! (possibly infinite) bounds, equality constraints `g(x) = 0`, inequality
//! constraints `h(x) <= 0`, analytic first derivatives and an analytic
//! Hessian of the Lagrangian. The solver ([`solve`]) is an interior-point
//! method with slack variables, monotone barrier reduction, residual
//! backtracking and an inertia-corrected sparse LDL^T factorization of the
//! reduced KKT system.

pub mod ipm;
pub mod ldl;

use thiserror::Error;

/// Sparse coordinate pattern (row, col pairs), duplicates allowed.
#[derive(Debug, Clone, Default)]
pub struct Sparsity {
    pub rows: Vec<usize>,
    pub cols: Vec<usize>,
}

impl Sparsity {
    pub fn empty() -> Self {
        Sparsity::default()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn push(&mut self, row: usize, col: usize) {
        self.rows.push(row);
        self.cols.push(col);
    }
}

/// A smooth nonlinear program
///
/// ```text
///   min  f(x)
///   s.t. g(x)  = 0
///        h(x) <= 0
///        lb <= x <= ub
/// ```
///
/// Jacobian and Hessian callbacks fill value slices aligned with the pattern
/// returned by the corresponding `_pattern` method. Patterns must be supersets
/// of the true nonzeros and are queried once per solve. The Hessian is the
/// lower triangle of `obj_w * f''(x) + sum lam_i g_i''(x) + sum mu_k h_k''(x)`.
pub trait NlpProblem {
    fn num_vars(&self) -> usize;
    /// Lower/upper variable bounds; use f64::INFINITY for absent bounds.
    fn bounds(&self) -> (Vec<f64>, Vec<f64>);
    fn initial_point(&self) -> Vec<f64>;
    fn num_eq(&self) -> usize {
        0
    }
    fn num_ineq(&self) -> usize {
        0
    }
    fn objective(&self, x: &[f64]) -> f64;
    fn gradient(&self, x: &[f64], grad: &mut [f64]);
    fn eq_constraints(&self, _x: &[f64], _out: &mut [f64]) {}
    fn ineq_constraints(&self, _x: &[f64], _out: &mut [f64]) {}
    fn eq_jacobian_pattern(&self) -> Sparsity {
        Sparsity::empty()
    }
    fn eq_jacobian_values(&self, _x: &[f64], _vals: &mut [f64]) {}
    fn ineq_jacobian_pattern(&self) -> Sparsity {
        Sparsity::empty()
    }
    fn ineq_jacobian_values(&self, _x: &[f64], _vals: &mut [f64]) {}
    /// Lower-triangle pattern of the Lagrangian Hessian.
    fn hessian_pattern(&self) -> Sparsity {
        Sparsity::empty()
    }
    fn hessian_values(&self, _x: &[f64], _obj_w: f64, _lam: &[f64], _mu: &[f64], _vals: &mut [f64]) {
    }
}

/// Solver termination status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NlpStatus {
    Optimal,
    MaxIterations,
    Infeasible,
    NumericalFailure,
}

/// Result of an interior-point solve.
#[derive(Debug, Clone)]
pub struct NlpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    /// Multipliers of the equality constraints (scaled-objective convention).
    pub lam_eq: Vec<f64>,
    /// Multipliers of the inequality constraints.
    pub mu_ineq: Vec<f64>,
    pub status: NlpStatus,
    pub iterations: usize,
    /// max(||g||_inf, max h^+): primal feasibility residual.
    pub kkt_feas: f64,
    /// ||grad L||_inf: stationarity residual (scaled objective).
    pub kkt_stat: f64,
    /// max_k z_k mu_k: complementarity residual.
    pub kkt_comp: f64,
}

/// Interior-point solver options.
#[derive(Debug, Clone)]
pub struct SolverOptions {
    pub tol_feas: f64,
    pub tol_opt: f64,
    pub max_iter: usize,
    /// Initial barrier parameter.
    pub barrier_init: f64,
    /// Centering parameter: barrier is reduced to sigma * z'mu / n_ineq.
    pub sigma: f64,
    /// Fraction-to-boundary coefficient.
    pub ftb: f64,
    /// Internal multiplicative objective scaling.
    pub obj_scale: f64,
    /// Initial slack / multiplier magnitude.
    pub slack_init: f64,
    pub verbose: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol_feas: 1e-8,
            tol_opt: 1e-8,
            max_iter: 300,
            barrier_init: 0.1,
            sigma: 0.1,
            ftb: 0.99995,
            obj_scale: 1.0,
            slack_init: 1.0,
            verbose: false,
        }
    }
}

/// One line of the optional iteration log.
#[derive(Debug, Clone, Copy)]
pub struct IterationLog {
    pub iter: usize,
    pub objective: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub barrier: f64,
}

#[derive(Debug, Error)]
pub enum NlpError {
    #[error("callback produced a non-finite value in {0}")]
    CallbackFailure(&'static str),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

/// Solves the problem from its own initial point.
pub fn solve<P: NlpProblem + ?Sized>(p: &P, opts: &SolverOptions) -> Result<NlpSolution, NlpError> {
    ipm::solve_from(p, &p.initial_point(), opts, &mut None)
}

/// Solves from an explicit starting point.
pub fn solve_from<P: NlpProblem + ?Sized>(
    p: &P,
    x0: &[f64],
    opts: &SolverOptions,
) -> Result<NlpSolution, NlpError> {
    ipm::solve_from(p, x0, opts, &mut None)
}

/// Solves with a per-iteration log callback.
pub fn solve_logged<P: NlpProblem + ?Sized>(
    p: &P,
    opts: &SolverOptions,
    log: &mut dyn FnMut(IterationLog),
) -> Result<NlpSolution, NlpError> {
    let mut cb: Option<&mut dyn FnMut(IterationLog)> = Some(log);
    ipm::solve_from(p, &p.initial_point(), opts, &mut cb)
}

/// Solves from every start and returns the best result.
///
/// The best Optimal solution by objective wins; if no start reaches Optimal,
/// the attempt with the smallest primal feasibility residual is returned.
pub fn multistart_solve<P: NlpProblem + ?Sized>(
    p: &P,
    starts: &[Vec<f64>],
    opts: &SolverOptions,
) -> Result<NlpSolution, NlpError> {
    assert!(!starts.is_empty(), "multistart requires at least one start");
    let mut best: Option<NlpSolution> = None;
    for x0 in starts {
        let sol = ipm::solve_from(p, x0, opts, &mut None)?;
        best = Some(match best.take() {
            None => sol,
            Some(cur) => pick_better(cur, sol),
        });
    }
    Ok(best.unwrap())
}

fn pick_better(a: NlpSolution, b: NlpSolution) -> NlpSolution {
    match (a.status == NlpStatus::Optimal, b.status == NlpStatus::Optimal) {
        (true, true) => {
            if b.objective < a.objective {
                b
            } else {
                a
            }
        }
        (true, false) => a,
        (false, true) => b,
        (false, false) => {
            if b.kkt_feas < a.kkt_feas {
                b
            } else {
                a
            }
        }
    }
}

/// Maximum relative derivative errors per block, from [`check_derivatives`].
#[derive(Debug, Clone, Copy)]
pub struct DerivativeReport {
    pub gradient: f64,
    pub eq_jacobian: f64,
    pub ineq_jacobian: f64,
    pub hessian: f64,
}

impl DerivativeReport {
    pub fn max(&self) -> f64 {
        self.gradient
            .max(self.eq_jacobian)
            .max(self.ineq_jacobian)
            .max(self.hessian)
    }
}

/// Central finite-difference check of all analytic derivative blocks at `x`.
///
/// The Hessian is checked through directional products against finite
/// differences of the assembled Lagrangian gradient along seeded random
/// directions. Relative errors are normalized by the larger of 1 and the
/// magnitude of the quantity being checked.
pub fn check_derivatives<P: NlpProblem + ?Sized>(p: &P, x: &[f64], h: f64) -> DerivativeReport {
    use rand::{Rng, SeedableRng};
    let n = p.num_vars();
    let m_eq = p.num_eq();
    let m_iq = p.num_ineq();

    let rel = |a: f64, b: f64| (a - b).abs() / 1.0f64.max(a.abs().max(b.abs()));

    // gradient vs FD of objective
    let mut grad = vec![0.0; n];
    p.gradient(x, &mut grad);
    let mut xp = x.to_vec();
    let mut grad_err: f64 = 0.0;
    for i in 0..n {
        xp[i] = x[i] + h;
        let fp = p.objective(&xp);
        xp[i] = x[i] - h;
        let fm = p.objective(&xp);
        xp[i] = x[i];
        grad_err = grad_err.max(rel(grad[i], (fp - fm) / (2.0 * h)));
    }

    // Jacobians vs FD of constraint values, via J e_i columns
    let jac_err = |pattern: &Sparsity,
                   vals: &[f64],
                   m: usize,
                   eval: &dyn Fn(&[f64], &mut [f64])|
     -> f64 {
        if m == 0 {
            return 0.0;
        }
        let mut dense = vec![0.0; m * n];
        for (k, (&r, &c)) in pattern.rows.iter().zip(&pattern.cols).enumerate() {
            dense[r * n + c] += vals[k];
        }
        let mut out_p = vec![0.0; m];
        let mut out_m = vec![0.0; m];
        let mut xp = x.to_vec();
        let mut err: f64 = 0.0;
        for i in 0..n {
            xp[i] = x[i] + h;
            eval(&xp, &mut out_p);
            xp[i] = x[i] - h;
            eval(&xp, &mut out_m);
            xp[i] = x[i];
            for r in 0..m {
                err = err.max(rel(dense[r * n + i], (out_p[r] - out_m[r]) / (2.0 * h)));
            }
        }
        err
    };

    let eq_pat = p.eq_jacobian_pattern();
    let mut eq_vals = vec![0.0; eq_pat.len()];
    p.eq_jacobian_values(x, &mut eq_vals);
    let eq_err = jac_err(&eq_pat, &eq_vals, m_eq, &|x, out| p.eq_constraints(x, out));

    let iq_pat = p.ineq_jacobian_pattern();
    let mut iq_vals = vec![0.0; iq_pat.len()];
    p.ineq_jacobian_values(x, &mut iq_vals);
    let iq_err = jac_err(&iq_pat, &iq_vals, m_iq, &|x, out| p.ineq_constraints(x, out));

    // Hessian directional check: H v vs FD of the Lagrangian gradient
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0x5eed);
    let lam: Vec<f64> = (0..m_eq).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mu: Vec<f64> = (0..m_iq).map(|_| rng.gen_range(0.0..1.0)).collect();
    let hess_pat = p.hessian_pattern();
    let mut hess_vals = vec![0.0; hess_pat.len()];
    p.hessian_values(x, 1.0, &lam, &mu, &mut hess_vals);

    let lagr_grad = |x: &[f64], out: &mut [f64]| {
        p.gradient(x, out);
        if m_eq > 0 {
            let mut jv = vec![0.0; eq_pat.len()];
            p.eq_jacobian_values(x, &mut jv);
            for (k, (&r, &c)) in eq_pat.rows.iter().zip(&eq_pat.cols).enumerate() {
                out[c] += lam[r] * jv[k];
            }
        }
        if m_iq > 0 {
            let mut jv = vec![0.0; iq_pat.len()];
            p.ineq_jacobian_values(x, &mut jv);
            for (k, (&r, &c)) in iq_pat.rows.iter().zip(&iq_pat.cols).enumerate() {
                out[c] += mu[r] * jv[k];
            }
        }
    };

    let mut hess_err: f64 = 0.0;
    let mut gp = vec![0.0; n];
    let mut gm = vec![0.0; n];
    for _ in 0..3 {
        let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        // analytic H v from the lower-triangle pattern
        let mut hv = vec![0.0; n];
        for (k, (&r, &c)) in hess_pat.rows.iter().zip(&hess_pat.cols).enumerate() {
            hv[r] += hess_vals[k] * v[c];
            if r != c {
                hv[c] += hess_vals[k] * v[r];
            }
        }
        let xp: Vec<f64> = x.iter().zip(&v).map(|(a, b)| a + h * b).collect();
        let xm: Vec<f64> = x.iter().zip(&v).map(|(a, b)| a - h * b).collect();
        lagr_grad(&xp, &mut gp);
        lagr_grad(&xm, &mut gm);
        for i in 0..n {
            hess_err = hess_err.max(rel(hv[i], (gp[i] - gm[i]) / (2.0 * h)));
        }
        gp.iter_mut().for_each(|v| *v = 0.0);
        gm.iter_mut().for_each(|v| *v = 0.0);
    }

    DerivativeReport {
        gradient: grad_err,
        eq_jacobian: eq_err,
        ineq_jacobian: iq_err,
        hessian: hess_err,
    }
}
