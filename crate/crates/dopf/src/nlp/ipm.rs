//! Primal-dual interior-point method with slacks, monotone barrier reduction,
//! residual backtracking and inertia-corrected sparse KKT factorization.
//!
//! All inequalities (user rows and finite variable bounds) are lifted to
//! `h(x) + z = 0, z > 0` with multipliers `mu > 0`. Each Newton step solves
//! the reduced symmetric system
//!
//! ```text
//!   [ H + J_h' Z^-1 M J_h   J_g' ] [dx  ]   [ -N ]
//!   [ J_g                    0   ] [dlam] = [ -g ]
//! ```
//!
//! with `N = grad L + J_h' Z^-1 (M h + gamma e)`, then recovers `dz` and
//! `dmu`. Fixed variables (lower bound equal to upper bound) become equality
//! rows. Degenerate pivots are regularized dynamically; if the factorization
//! inertia differs from (n, m_eq) the Hessian block is shifted by increasing
//! multiples of the identity until the inertia is correct.

use super::ldl::{LdlOptions, LdlSymbolic, SymCsc};
use super::{IterationLog, NlpError, NlpProblem, NlpSolution, NlpStatus, SolverOptions, Sparsity};

const FIXED_VAR_TOL: f64 = 1e-10;

struct Stacks {
    n: usize,
    m_eq_user: usize,
    m_iq_user: usize,
    /// variables fixed by equal bounds: (var, value)
    fixed: Vec<(usize, f64)>,
    /// bound inequality rows after the user rows: (var, sign, bound)
    /// encoding sign * x_var - sign * bound <= 0
    bound_rows: Vec<(usize, f64, f64)>,
    eq_pat: Sparsity,
    iq_pat: Sparsity,
    hess_pat: Sparsity,
    /// per user-ineq row: (pattern index, variable) entries
    iq_rows: Vec<Vec<(usize, usize)>>,
}

impl Stacks {
    fn build<P: NlpProblem + ?Sized>(p: &P) -> Result<Stacks, NlpError> {
        let n = p.num_vars();
        let (lb, ub) = p.bounds();
        if lb.len() != n || ub.len() != n {
            return Err(NlpError::DimensionMismatch(format!(
                "bounds length {}/{} vs {} variables",
                lb.len(),
                ub.len(),
                n
            )));
        }
        let mut fixed = Vec::new();
        let mut bound_rows = Vec::new();
        for i in 0..n {
            if lb[i] > ub[i] {
                return Err(NlpError::DimensionMismatch(format!(
                    "variable {i} has lower bound {} above upper bound {}",
                    lb[i], ub[i]
                )));
            }
            if ub[i] - lb[i] <= FIXED_VAR_TOL && ub[i].is_finite() {
                fixed.push((i, 0.5 * (lb[i] + ub[i])));
                continue;
            }
            if ub[i].is_finite() {
                bound_rows.push((i, 1.0, ub[i]));
            }
            if lb[i].is_finite() {
                bound_rows.push((i, -1.0, -lb[i]));
            }
        }
        let m_iq_user = p.num_ineq();
        let iq_pat = p.ineq_jacobian_pattern();
        let mut iq_rows = vec![Vec::new(); m_iq_user];
        for (k, (&r, &c)) in iq_pat.rows.iter().zip(&iq_pat.cols).enumerate() {
            iq_rows[r].push((k, c));
        }
        Ok(Stacks {
            n,
            m_eq_user: p.num_eq(),
            m_iq_user,
            fixed,
            bound_rows,
            eq_pat: p.eq_jacobian_pattern(),
            iq_pat,
            hess_pat: p.hessian_pattern(),
            iq_rows,
        })
    }

    fn m_eq(&self) -> usize {
        self.m_eq_user + self.fixed.len()
    }

    fn n_iq(&self) -> usize {
        self.m_iq_user + self.bound_rows.len()
    }
}

/// Values of everything the step needs at one point.
struct Eval {
    f_scaled: f64,
    f_raw: f64,
    grad: Vec<f64>,
    g: Vec<f64>,
    h: Vec<f64>,
    eq_vals: Vec<f64>,
    iq_vals: Vec<f64>,
    finite: bool,
}

fn evaluate<P: NlpProblem + ?Sized>(p: &P, st: &Stacks, x: &[f64], scale: f64) -> Eval {
    let f_raw = p.objective(x);
    let mut grad = vec![0.0; st.n];
    p.gradient(x, &mut grad);
    for v in grad.iter_mut() {
        *v *= scale;
    }
    let mut g = vec![0.0; st.m_eq()];
    p.eq_constraints(x, &mut g[..st.m_eq_user]);
    for (t, &(i, val)) in st.fixed.iter().enumerate() {
        g[st.m_eq_user + t] = x[i] - val;
    }
    let mut h = vec![0.0; st.n_iq()];
    p.ineq_constraints(x, &mut h[..st.m_iq_user]);
    for (t, &(i, s, b)) in st.bound_rows.iter().enumerate() {
        h[st.m_iq_user + t] = s * x[i] - b;
    }
    let mut eq_vals = vec![0.0; st.eq_pat.len()];
    p.eq_jacobian_values(x, &mut eq_vals);
    let mut iq_vals = vec![0.0; st.iq_pat.len()];
    p.ineq_jacobian_values(x, &mut iq_vals);
    let finite = f_raw.is_finite()
        && grad.iter().all(|v| v.is_finite())
        && g.iter().all(|v| v.is_finite())
        && h.iter().all(|v| v.is_finite())
        && eq_vals.iter().all(|v| v.is_finite())
        && iq_vals.iter().all(|v| v.is_finite());
    Eval {
        f_scaled: scale * f_raw,
        f_raw,
        grad,
        g,
        h,
        eq_vals,
        iq_vals,
        finite,
    }
}

/// grad L = grad f + J_g' lam + J_h' mu
fn lagrangian_grad(st: &Stacks, ev: &Eval, lam: &[f64], mu: &[f64]) -> Vec<f64> {
    let mut lx = ev.grad.clone();
    for (k, (&r, &c)) in st.eq_pat.rows.iter().zip(&st.eq_pat.cols).enumerate() {
        lx[c] += lam[r] * ev.eq_vals[k];
    }
    for (t, &(i, _)) in st.fixed.iter().enumerate() {
        lx[i] += lam[st.m_eq_user + t];
    }
    for (k, (&r, &c)) in st.iq_pat.rows.iter().zip(&st.iq_pat.cols).enumerate() {
        lx[c] += mu[r] * ev.iq_vals[k];
    }
    for (t, &(i, s, _)) in st.bound_rows.iter().enumerate() {
        lx[i] += mu[st.m_iq_user + t] * s;
    }
    lx
}

fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |a, &b| a.max(b.abs()))
}

/// 2-norm of the perturbed KKT residual used by the backtracking line search.
fn kkt_residual_norm(st: &Stacks, ev: &Eval, z: &[f64], lam: &[f64], mu: &[f64], gamma: f64) -> f64 {
    let lx = lagrangian_grad(st, ev, lam, mu);
    let mut acc = 0.0;
    for v in &lx {
        acc += v * v;
    }
    for v in &ev.g {
        acc += v * v;
    }
    for k in 0..st.n_iq() {
        let r = ev.h[k] + z[k];
        acc += r * r;
        let c = z[k] * mu[k] - gamma;
        acc += c * c;
    }
    acc.sqrt()
}

pub(crate) fn solve_from<P: NlpProblem + ?Sized>(
    p: &P,
    x0: &[f64],
    opts: &SolverOptions,
    log: &mut Option<&mut dyn FnMut(IterationLog)>,
) -> Result<NlpSolution, NlpError> {
    let st = Stacks::build(p)?;
    let n = st.n;
    let m_eq = st.m_eq();
    let n_iq = st.n_iq();
    if x0.len() != n {
        return Err(NlpError::DimensionMismatch(format!(
            "start point length {} vs {} variables",
            x0.len(),
            n
        )));
    }
    let scale = opts.obj_scale;
    let mut x = x0.to_vec();
    for &(i, val) in &st.fixed {
        x[i] = val;
    }

    let mut ev = evaluate(p, &st, &x, scale);
    if !ev.finite {
        return Err(NlpError::CallbackFailure("initial point evaluation"));
    }

    // slack and multiplier initialization
    let z0 = opts.slack_init;
    let mut gamma = opts.barrier_init;
    let mut z: Vec<f64> = ev
        .h
        .iter()
        .map(|&hk| if hk < -z0 { -hk } else { z0 })
        .collect();
    let mut mu: Vec<f64> = z
        .iter()
        .map(|&zk| {
            let m = gamma / zk;
            if m > z0 {
                m
            } else {
                z0
            }
        })
        .collect();
    let mut lam = vec![0.0; m_eq];

    // fixed KKT coordinate pattern
    let kdim = n + m_eq;
    let mut krows: Vec<usize> = Vec::new();
    let mut kcols: Vec<usize> = Vec::new();
    // section A: Lagrangian Hessian (lower triangle)
    for (&r, &c) in st.hess_pat.rows.iter().zip(&st.hess_pat.cols) {
        debug_assert!(r >= c);
        krows.push(r);
        kcols.push(c);
    }
    // section B: user inequality row outer products
    for row in &st.iq_rows {
        for (a, &(_, va)) in row.iter().enumerate() {
            for &(_, vb) in row.iter().take(a + 1) {
                krows.push(va.max(vb));
                kcols.push(va.min(vb));
            }
        }
    }
    // section C: bound rows (diagonal)
    for &(i, _, _) in &st.bound_rows {
        krows.push(i);
        kcols.push(i);
    }
    // section D: equality Jacobian
    for (&r, &c) in st.eq_pat.rows.iter().zip(&st.eq_pat.cols) {
        krows.push(n + r);
        kcols.push(c);
    }
    for (t, &(i, _)) in st.fixed.iter().enumerate() {
        krows.push(n + st.m_eq_user + t);
        kcols.push(i);
    }
    // sections E, F: regularization diagonals
    for i in 0..kdim {
        krows.push(i);
        kcols.push(i);
    }
    let mut kvals = vec![0.0; krows.len()];
    let mut symbolic: Option<LdlSymbolic> = None;
    let mut dsigns = vec![1i8; kdim];
    for s in dsigns.iter_mut().take(kdim).skip(n) {
        *s = -1;
    }

    let mut hvals = vec![0.0; st.hess_pat.len()];
    let ldl_opts = LdlOptions::default();

    let mut status = NlpStatus::MaxIterations;
    let mut iterations = 0;
    let mut tiny_steps = 0usize;

    for iter in 0..opts.max_iter {
        iterations = iter;
        let lx = lagrangian_grad(&st, &ev, &lam, &mu);
        let feas = norm_inf(&ev.g).max(ev.h.iter().fold(0.0f64, |a, &b| a.max(b)));
        let stat = norm_inf(&lx);
        let comp = z
            .iter()
            .zip(&mu)
            .fold(0.0f64, |a, (&zk, &mk)| a.max(zk * mk));

        if let Some(cb) = log.as_mut() {
            cb(IterationLog {
                iter,
                objective: ev.f_raw,
                primal_residual: feas,
                dual_residual: stat,
                barrier: gamma,
            });
        }
        if opts.verbose {
            eprintln!(
                "ipm iter {iter:3}  f {:+.8e}  feas {:.2e}  stat {:.2e}  comp {:.2e}  gamma {:.2e}",
                ev.f_raw, feas, stat, comp, gamma
            );
        }

        if feas <= opts.tol_feas && stat <= opts.tol_opt && comp <= opts.tol_opt {
            status = NlpStatus::Optimal;
            break;
        }

        // ---- assemble KKT values
        p.hessian_values(&x, scale, &lam[..st.m_eq_user], &mu[..st.m_iq_user], &mut hvals);
        let mut kv = 0;
        for &v in &hvals {
            kvals[kv] = v;
            kv += 1;
        }
        for (r, row) in st.iq_rows.iter().enumerate() {
            let w = mu[r] / z[r];
            for (a, &(pa, _)) in row.iter().enumerate() {
                for &(pb, _) in row.iter().take(a + 1) {
                    kvals[kv] = w * ev.iq_vals[pa] * ev.iq_vals[pb];
                    kv += 1;
                }
            }
        }
        for (t, _) in st.bound_rows.iter().enumerate() {
            let r = st.m_iq_user + t;
            kvals[kv] = mu[r] / z[r];
            kv += 1;
        }
        for &v in &ev.eq_vals {
            kvals[kv] = v;
            kv += 1;
        }
        for _ in &st.fixed {
            kvals[kv] = 1.0;
            kv += 1;
        }
        let reg_base = kv;
        for i in 0..kdim {
            kvals[kv] = if i < n { 0.0 } else { -1e-11 };
            kv += 1;
        }
        debug_assert_eq!(kv, kvals.len());

        // rhs: [-N; -g], N = Lx + Jh' Z^-1 (M h + gamma e)
        let mut rhs = vec![0.0; kdim];
        let mut corr = vec![0.0; n_iq];
        for k in 0..n_iq {
            corr[k] = (mu[k] * ev.h[k] + gamma) / z[k];
        }
        for i in 0..n {
            rhs[i] = -lx[i];
        }
        for (k, (&r, &c)) in st.iq_pat.rows.iter().zip(&st.iq_pat.cols).enumerate() {
            rhs[c] -= ev.iq_vals[k] * corr[r];
        }
        for (t, &(i, s, _)) in st.bound_rows.iter().enumerate() {
            rhs[i] -= s * corr[st.m_iq_user + t];
        }
        for j in 0..m_eq {
            rhs[n + j] = -ev.g[j];
        }

        // ---- factor with inertia correction
        let mut tau = 0.0;
        let mut step = None;
        for attempt in 0..14 {
            if attempt > 0 {
                tau = if tau == 0.0 { 1e-8 } else { tau * 100.0 };
                for i in 0..n {
                    kvals[reg_base + i] = tau;
                }
            }
            let kkt = SymCsc::from_triplets(kdim, &krows, &kcols, &kvals);
            if symbolic.is_none() {
                symbolic = Some(LdlSymbolic::new(&kkt));
            }
            let fact = symbolic.as_ref().unwrap().factor(&kkt, &dsigns, &ldl_opts);
            if fact.inertia != (n, m_eq) {
                continue;
            }
            let sol = fact.solve_refined(&kkt, &rhs, 2);
            if sol.iter().all(|v| v.is_finite()) {
                step = Some(sol);
                break;
            }
        }
        let dxdlam = match step {
            Some(s) => s,
            None => {
                status = NlpStatus::NumericalFailure;
                break;
            }
        };
        let dx = &dxdlam[..n];
        let dlam = &dxdlam[n..];

        // dz = -h - z - Jh dx ; dmu = -mu + Z^-1 (gamma e - M dz)
        let mut jhdx = vec![0.0; n_iq];
        for (k, (&r, &c)) in st.iq_pat.rows.iter().zip(&st.iq_pat.cols).enumerate() {
            jhdx[r] += ev.iq_vals[k] * dx[c];
        }
        for (t, &(i, s, _)) in st.bound_rows.iter().enumerate() {
            jhdx[st.m_iq_user + t] += s * dx[i];
        }
        let mut dz = vec![0.0; n_iq];
        let mut dmu = vec![0.0; n_iq];
        for k in 0..n_iq {
            dz[k] = -ev.h[k] - z[k] - jhdx[k];
            dmu[k] = -mu[k] + (gamma - mu[k] * dz[k]) / z[k];
        }

        // fraction to boundary
        let mut alpha_p: f64 = 1.0;
        let mut alpha_d: f64 = 1.0;
        for k in 0..n_iq {
            if dz[k] < 0.0 {
                alpha_p = alpha_p.min(opts.ftb * z[k] / -dz[k]);
            }
            if dmu[k] < 0.0 {
                alpha_d = alpha_d.min(opts.ftb * mu[k] / -dmu[k]);
            }
        }

        // residual backtracking with a shared scaling of both step lengths
        let res0 = kkt_residual_norm(&st, &ev, &z, &lam, &mu, gamma);
        let mut accepted: Option<(f64, Eval, Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>)> = None;
        let mut best: Option<(f64, f64)> = None; // (residual, scale)
        let mut sc = 1.0;
        for _ in 0..8 {
            let xt: Vec<f64> = x
                .iter()
                .zip(dx)
                .map(|(&xi, &di)| xi + sc * alpha_p * di)
                .collect();
            let zt: Vec<f64> = z
                .iter()
                .zip(&dz)
                .map(|(&zi, &di)| zi + sc * alpha_p * di)
                .collect();
            let lamt: Vec<f64> = lam
                .iter()
                .zip(dlam)
                .map(|(&li, &di)| li + sc * alpha_d * di)
                .collect();
            let mut mut_ = vec![0.0; n_iq];
            for k in 0..n_iq {
                mut_[k] = mu[k] + sc * alpha_d * dmu[k];
            }
            let evt = evaluate(p, &st, &xt, scale);
            if evt.finite {
                let rt = kkt_residual_norm(&st, &evt, &zt, &lamt, &mut_, gamma);
                if rt <= (1.0 - 1e-4 * sc) * res0 || rt <= opts.tol_opt {
                    accepted = Some((sc, evt, xt, zt, lamt, mut_));
                    break;
                }
                if best.map_or(true, |(rb, _)| rt < rb) {
                    best = Some((rt, sc));
                }
            }
            sc *= 0.5;
        }
        let (sc_used, evt, xt, zt, lamt, mut_) = match accepted {
            Some(t) => t,
            None => {
                // fall back to the least-bad scaling seen
                let sc = best.map(|(_, s)| s).unwrap_or(1e-3);
                let xt: Vec<f64> = x
                    .iter()
                    .zip(dx)
                    .map(|(&xi, &di)| xi + sc * alpha_p * di)
                    .collect();
                let zt: Vec<f64> = z
                    .iter()
                    .zip(&dz)
                    .map(|(&zi, &di)| zi + sc * alpha_p * di)
                    .collect();
                let lamt: Vec<f64> = lam
                    .iter()
                    .zip(dlam)
                    .map(|(&li, &di)| li + sc * alpha_d * di)
                    .collect();
                let mut mut_ = vec![0.0; n_iq];
                for k in 0..n_iq {
                    mut_[k] = mu[k] + sc * alpha_d * dmu[k];
                }
                let evt = evaluate(p, &st, &xt, scale);
                if !evt.finite {
                    status = NlpStatus::NumericalFailure;
                    break;
                }
                (sc, evt, xt, zt, lamt, mut_)
            }
        };

        if sc_used * alpha_p.max(alpha_d) < 1e-10 {
            tiny_steps += 1;
            if tiny_steps >= 3 {
                break;
            }
        } else {
            tiny_steps = 0;
        }

        x = xt;
        z = zt;
        lam = lamt;
        mu = mut_;
        ev = evt;
        if n_iq > 0 {
            let zm: f64 = z.iter().zip(&mu).map(|(&a, &b)| a * b).sum();
            gamma = opts.sigma * zm / n_iq as f64;
        } else {
            gamma = 0.0;
        }
        // diverging barrier/multipliers with stuck infeasibility: no feasible
        // point is being located
        if gamma > 1e10 {
            status = NlpStatus::NumericalFailure;
            break;
        }
    }

    let lx = lagrangian_grad(&st, &ev, &lam, &mu);
    let feas = norm_inf(&ev.g).max(ev.h.iter().fold(0.0f64, |a, &b| a.max(b)));
    let stat = norm_inf(&lx);
    let comp = z
        .iter()
        .zip(&mu)
        .fold(0.0f64, |a, (&zk, &mk)| a.max(zk * mk));
    if status != NlpStatus::Optimal {
        if feas <= opts.tol_feas && stat <= opts.tol_opt && comp <= opts.tol_opt {
            status = NlpStatus::Optimal;
        } else if feas > 1e2 * opts.tol_feas.max(1e-8) {
            // no feasible point located: report as (locally) infeasible
            status = NlpStatus::Infeasible;
        }
    }

    Ok(NlpSolution {
        x,
        objective: ev.f_raw,
        lam_eq: lam,
        mu_ineq: mu,
        status,
        iterations: iterations + 1,
        kkt_feas: feas,
        kkt_stat: stat,
        kkt_comp: comp,
    })
}
