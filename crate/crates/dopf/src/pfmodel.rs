//! Shared building blocks for power-flow-constrained nonlinear programs.
//!
//! The centralized OPF, the ADMM region subproblems and the worst-case
//! violation problems all assemble the same kinds of rows: branch-flow
//! definition equalities, bus power balances, linear couplings, thermal
//! limits and linear inequalities, under a quadratic objective. `StampModel`
//! holds those stamps and implements [`NlpProblem`] with analytic first and
//! second derivatives.

use crate::nlp::{NlpProblem, Sparsity};

/// Equality row kinds. Every row evaluates to a residual driven to zero.
#[derive(Debug, Clone)]
pub enum EqStamp {
    /// `x[flow] - g_self v_s^2 - v_s v_t (g c + b s) = 0`
    FlowP {
        flow: usize,
        v_s: usize,
        v_t: usize,
        th_s: usize,
        th_t: usize,
        g_self: f64,
        g_mut: f64,
        b_mut: f64,
    },
    /// `x[flow] + b_self v_s^2 - v_s v_t (g s - b c) = 0`
    FlowQ {
        flow: usize,
        v_s: usize,
        v_t: usize,
        th_s: usize,
        th_t: usize,
        b_self: f64,
        g_mut: f64,
        b_mut: f64,
    },
    /// `quad v^2 + sum coeff x[var] + constant = 0`
    Balance {
        v: usize,
        quad: f64,
        lin: Vec<(usize, f64)>,
        constant: f64,
    },
    /// `sum coeff x[var] + constant = 0`
    Linear {
        lin: Vec<(usize, f64)>,
        constant: f64,
    },
}

/// Inequality row kinds (`<= 0`).
#[derive(Debug, Clone)]
pub enum IneqStamp {
    /// `x[p]^2 + x[q]^2 - limit^2 <= 0`
    Thermal { p: usize, q: usize, limit: f64 },
    /// `sum coeff x[var] + constant <= 0`
    Linear {
        lin: Vec<(usize, f64)>,
        constant: f64,
    },
}

/// Quadratic-objective NLP assembled from stamps.
#[derive(Debug, Clone, Default)]
pub struct StampModel {
    pub lb: Vec<f64>,
    pub ub: Vec<f64>,
    pub x0: Vec<f64>,
    pub eqs: Vec<EqStamp>,
    pub ineqs: Vec<IneqStamp>,
    /// objective terms c2 x^2 + c1 x per variable
    pub quads: Vec<(usize, f64, f64)>,
    pub obj_const: f64,
}

impl StampModel {
    pub fn new() -> Self {
        StampModel::default()
    }

    /// Adds a variable, returning its index.
    pub fn add_var(&mut self, lb: f64, ub: f64, x0: f64) -> usize {
        self.lb.push(lb);
        self.ub.push(ub);
        self.x0.push(x0);
        self.lb.len() - 1
    }

    pub fn set_objective(&mut self, quads: Vec<(usize, f64, f64)>, constant: f64) {
        self.quads = quads;
        self.obj_const = constant;
    }
}

impl NlpProblem for StampModel {
    fn num_vars(&self) -> usize {
        self.lb.len()
    }

    fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
        (self.lb.clone(), self.ub.clone())
    }

    fn initial_point(&self) -> Vec<f64> {
        self.x0.clone()
    }

    fn num_eq(&self) -> usize {
        self.eqs.len()
    }

    fn num_ineq(&self) -> usize {
        self.ineqs.len()
    }

    fn objective(&self, x: &[f64]) -> f64 {
        let mut f = self.obj_const;
        for &(v, c2, c1) in &self.quads {
            f += c2 * x[v] * x[v] + c1 * x[v];
        }
        f
    }

    fn gradient(&self, x: &[f64], grad: &mut [f64]) {
        grad.fill(0.0);
        for &(v, c2, c1) in &self.quads {
            grad[v] += 2.0 * c2 * x[v] + c1;
        }
    }

    fn eq_constraints(&self, x: &[f64], out: &mut [f64]) {
        for (r, eq) in self.eqs.iter().enumerate() {
            out[r] = match eq {
                EqStamp::FlowP {
                    flow,
                    v_s,
                    v_t,
                    th_s,
                    th_t,
                    g_self,
                    g_mut,
                    b_mut,
                } => {
                    let (vs, vt) = (x[*v_s], x[*v_t]);
                    let th = x[*th_s] - x[*th_t];
                    x[*flow] - g_self * vs * vs - vs * vt * (g_mut * th.cos() + b_mut * th.sin())
                }
                EqStamp::FlowQ {
                    flow,
                    v_s,
                    v_t,
                    th_s,
                    th_t,
                    b_self,
                    g_mut,
                    b_mut,
                } => {
                    let (vs, vt) = (x[*v_s], x[*v_t]);
                    let th = x[*th_s] - x[*th_t];
                    x[*flow] + b_self * vs * vs - vs * vt * (g_mut * th.sin() - b_mut * th.cos())
                }
                EqStamp::Balance {
                    v,
                    quad,
                    lin,
                    constant,
                } => {
                    let mut r = quad * x[*v] * x[*v] + constant;
                    for &(var, c) in lin {
                        r += c * x[var];
                    }
                    r
                }
                EqStamp::Linear { lin, constant } => {
                    let mut r = *constant;
                    for &(var, c) in lin {
                        r += c * x[var];
                    }
                    r
                }
            };
        }
    }

    fn ineq_constraints(&self, x: &[f64], out: &mut [f64]) {
        for (r, iq) in self.ineqs.iter().enumerate() {
            out[r] = match iq {
                IneqStamp::Thermal { p, q, limit } => {
                    x[*p] * x[*p] + x[*q] * x[*q] - limit * limit
                }
                IneqStamp::Linear { lin, constant } => {
                    let mut r = *constant;
                    for &(var, c) in lin {
                        r += c * x[var];
                    }
                    r
                }
            };
        }
    }

    fn eq_jacobian_pattern(&self) -> Sparsity {
        let mut s = Sparsity::empty();
        for (r, eq) in self.eqs.iter().enumerate() {
            match eq {
                EqStamp::FlowP {
                    flow,
                    v_s,
                    v_t,
                    th_s,
                    th_t,
                    ..
                }
                | EqStamp::FlowQ {
                    flow,
                    v_s,
                    v_t,
                    th_s,
                    th_t,
                    ..
                } => {
                    for &c in &[*flow, *v_s, *v_t, *th_s, *th_t] {
                        s.push(r, c);
                    }
                }
                EqStamp::Balance { v, lin, .. } => {
                    s.push(r, *v);
                    for &(var, _) in lin {
                        s.push(r, var);
                    }
                }
                EqStamp::Linear { lin, .. } => {
                    for &(var, _) in lin {
                        s.push(r, var);
                    }
                }
            }
        }
        s
    }

    fn eq_jacobian_values(&self, x: &[f64], vals: &mut [f64]) {
        let mut k = 0;
        for eq in &self.eqs {
            match eq {
                EqStamp::FlowP {
                    v_s,
                    v_t,
                    th_s,
                    th_t,
                    g_self,
                    g_mut,
                    b_mut,
                    ..
                } => {
                    let (vs, vt) = (x[*v_s], x[*v_t]);
                    let th = x[*th_s] - x[*th_t];
                    let u1 = g_mut * th.cos() + b_mut * th.sin();
                    let u2 = g_mut * th.sin() - b_mut * th.cos();
                    vals[k] = 1.0;
                    vals[k + 1] = -2.0 * g_self * vs - vt * u1;
                    vals[k + 2] = -vs * u1;
                    vals[k + 3] = vs * vt * u2;
                    vals[k + 4] = -vs * vt * u2;
                    k += 5;
                }
                EqStamp::FlowQ {
                    v_s,
                    v_t,
                    th_s,
                    th_t,
                    b_self,
                    g_mut,
                    b_mut,
                    ..
                } => {
                    let (vs, vt) = (x[*v_s], x[*v_t]);
                    let th = x[*th_s] - x[*th_t];
                    let u1 = g_mut * th.cos() + b_mut * th.sin();
                    let u2 = g_mut * th.sin() - b_mut * th.cos();
                    vals[k] = 1.0;
                    vals[k + 1] = 2.0 * b_self * vs - vt * u2;
                    vals[k + 2] = -vs * u2;
                    vals[k + 3] = -vs * vt * u1;
                    vals[k + 4] = vs * vt * u1;
                    k += 5;
                }
                EqStamp::Balance { v, quad, lin, .. } => {
                    vals[k] = 2.0 * quad * x[*v];
                    k += 1;
                    for &(_, c) in lin {
                        vals[k] = c;
                        k += 1;
                    }
                }
                EqStamp::Linear { lin, .. } => {
                    for &(_, c) in lin {
                        vals[k] = c;
                        k += 1;
                    }
                }
            }
        }
    }

    fn ineq_jacobian_pattern(&self) -> Sparsity {
        let mut s = Sparsity::empty();
        for (r, iq) in self.ineqs.iter().enumerate() {
            match iq {
                IneqStamp::Thermal { p, q, .. } => {
                    s.push(r, *p);
                    s.push(r, *q);
                }
                IneqStamp::Linear { lin, .. } => {
                    for &(var, _) in lin {
                        s.push(r, var);
                    }
                }
            }
        }
        s
    }

    fn ineq_jacobian_values(&self, x: &[f64], vals: &mut [f64]) {
        let mut k = 0;
        for iq in &self.ineqs {
            match iq {
                IneqStamp::Thermal { p, q, .. } => {
                    vals[k] = 2.0 * x[*p];
                    vals[k + 1] = 2.0 * x[*q];
                    k += 2;
                }
                IneqStamp::Linear { lin, .. } => {
                    for &(_, c) in lin {
                        vals[k] = c;
                        k += 1;
                    }
                }
            }
        }
    }

    fn hessian_pattern(&self) -> Sparsity {
        let mut s = Sparsity::empty();
        let mut lo = |a: usize, b: usize| s.push(a.max(b), a.min(b));
        for &(v, c2, _) in &self.quads {
            if c2 != 0.0 {
                lo(v, v);
            }
        }
        for eq in &self.eqs {
            match eq {
                EqStamp::FlowP {
                    v_s, v_t, th_s, th_t, ..
                }
                | EqStamp::FlowQ {
                    v_s, v_t, th_s, th_t, ..
                } => {
                    lo(*v_s, *v_s);
                    lo(*v_t, *v_s);
                    lo(*th_s, *v_s);
                    lo(*th_s, *v_t);
                    lo(*th_t, *v_s);
                    lo(*th_t, *v_t);
                    lo(*th_s, *th_s);
                    lo(*th_t, *th_s);
                    lo(*th_t, *th_t);
                }
                EqStamp::Balance { v, quad, .. } => {
                    if *quad != 0.0 {
                        lo(*v, *v);
                    }
                }
                EqStamp::Linear { .. } => {}
            }
        }
        for iq in &self.ineqs {
            if let IneqStamp::Thermal { p, q, .. } = iq {
                lo(*p, *p);
                lo(*q, *q);
            }
        }
        s
    }

    fn hessian_values(&self, x: &[f64], w: f64, lam: &[f64], mu: &[f64], vals: &mut [f64]) {
        let mut k = 0;
        for &(_, c2, _) in &self.quads {
            if c2 != 0.0 {
                vals[k] = 2.0 * w * c2;
                k += 1;
            }
        }
        for (r, eq) in self.eqs.iter().enumerate() {
            let l = lam[r];
            match eq {
                EqStamp::FlowP {
                    v_s,
                    v_t,
                    th_s,
                    th_t,
                    g_self,
                    g_mut,
                    b_mut,
                    ..
                } => {
                    let (vs, vt) = (x[*v_s], x[*v_t]);
                    let th = x[*th_s] - x[*th_t];
                    let u1 = g_mut * th.cos() + b_mut * th.sin();
                    let u2 = g_mut * th.sin() - b_mut * th.cos();
                    vals[k] = l * (-2.0 * g_self); // (v_s, v_s)
                    vals[k + 1] = l * (-u1); // (v_t, v_s)
                    vals[k + 2] = l * (vt * u2); // (th_s, v_s)
                    vals[k + 3] = l * (vs * u2); // (th_s, v_t)
                    vals[k + 4] = l * (-vt * u2); // (th_t, v_s)
                    vals[k + 5] = l * (-vs * u2); // (th_t, v_t)
                    vals[k + 6] = l * (vs * vt * u1); // (th_s, th_s)
                    vals[k + 7] = l * (-vs * vt * u1); // (th_t, th_s)
                    vals[k + 8] = l * (vs * vt * u1); // (th_t, th_t)
                    k += 9;
                }
                EqStamp::FlowQ {
                    v_s,
                    v_t,
                    th_s,
                    th_t,
                    b_self,
                    g_mut,
                    b_mut,
                    ..
                } => {
                    let (vs, vt) = (x[*v_s], x[*v_t]);
                    let th = x[*th_s] - x[*th_t];
                    let u1 = g_mut * th.cos() + b_mut * th.sin();
                    let u2 = g_mut * th.sin() - b_mut * th.cos();
                    vals[k] = l * (2.0 * b_self); // (v_s, v_s)
                    vals[k + 1] = l * (-u2); // (v_t, v_s)
                    vals[k + 2] = l * (-vt * u1); // (th_s, v_s)
                    vals[k + 3] = l * (-vs * u1); // (th_s, v_t)
                    vals[k + 4] = l * (vt * u1); // (th_t, v_s)
                    vals[k + 5] = l * (vs * u1); // (th_t, v_t)
                    vals[k + 6] = l * (vs * vt * u2); // (th_s, th_s)
                    vals[k + 7] = l * (-vs * vt * u2); // (th_t, th_s)
                    vals[k + 8] = l * (vs * vt * u2); // (th_t, th_t)
                    k += 9;
                }
                EqStamp::Balance { quad, .. } => {
                    if *quad != 0.0 {
                        vals[k] = l * 2.0 * quad;
                        k += 1;
                    }
                }
                EqStamp::Linear { .. } => {}
            }
        }
        for (r, iq) in self.ineqs.iter().enumerate() {
            if let IneqStamp::Thermal { .. } = iq {
                vals[k] = 2.0 * mu[r];
                vals[k + 1] = 2.0 * mu[r];
                k += 2;
            }
        }
    }
}

/// Evaluates the flow expression of a stamp at a voltage profile, used to
/// initialize flow variables consistently with a flat start.
pub fn flow_value(
    is_p: bool,
    vs: f64,
    vt: f64,
    th: f64,
    self_coef: f64,
    g_mut: f64,
    b_mut: f64,
) -> f64 {
    if is_p {
        self_coef * vs * vs + vs * vt * (g_mut * th.cos() + b_mut * th.sin())
    } else {
        -self_coef * vs * vs + vs * vt * (g_mut * th.sin() - b_mut * th.cos())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nlp;

    /// A tiny hand-built model: one branch with flow variables, bus balance,
    /// a thermal row and a quadratic cost. Exercises every stamp kind through
    /// the finite-difference derivative checker.
    fn toy_model() -> StampModel {
        let mut m = StampModel::new();
        let v1 = m.add_var(0.9, 1.1, 1.02);
        let v2 = m.add_var(0.9, 1.1, 0.98);
        let t1 = m.add_var(f64::NEG_INFINITY, f64::INFINITY, 0.05);
        let t2 = m.add_var(f64::NEG_INFINITY, f64::INFINITY, -0.03);
        let pf = m.add_var(f64::NEG_INFINITY, f64::INFINITY, 0.2);
        let qf = m.add_var(f64::NEG_INFINITY, f64::INFINITY, -0.1);
        let pg = m.add_var(0.0, 2.0, 0.7);
        m.eqs.push(EqStamp::FlowP {
            flow: pf,
            v_s: v1,
            v_t: v2,
            th_s: t1,
            th_t: t2,
            g_self: 1.2,
            g_mut: -1.2,
            b_mut: 9.8,
        });
        m.eqs.push(EqStamp::FlowQ {
            flow: qf,
            v_s: v1,
            v_t: v2,
            th_s: t1,
            th_t: t2,
            b_self: 9.9,
            g_mut: -1.2,
            b_mut: 9.8,
        });
        m.eqs.push(EqStamp::Balance {
            v: v1,
            quad: -0.05,
            lin: vec![(pg, 1.0), (pf, -1.0)],
            constant: -0.3,
        });
        m.eqs.push(EqStamp::Linear {
            lin: vec![(t2, 1.0)],
            constant: 0.0,
        });
        m.ineqs.push(IneqStamp::Thermal {
            p: pf,
            q: qf,
            limit: 1.5,
        });
        m.ineqs.push(IneqStamp::Linear {
            lin: vec![(pg, 1.0), (pf, -0.5)],
            constant: -1.9,
        });
        m.set_objective(vec![(pg, 100.0, 20.0), (v1, 0.0, 0.1)], 3.0);
        m
    }

    #[test]
    fn stamp_derivatives_match_finite_differences() {
        let m = toy_model();
        let x = m.initial_point();
        let rep = nlp::check_derivatives(&m, &x, 1e-6);
        assert!(rep.max() < 1e-6, "{rep:?}");
    }

    #[test]
    fn flow_value_matches_stamp_residual() {
        let m = toy_model();
        let mut x = m.initial_point();
        // make the flow variables exactly consistent
        x[4] = flow_value(true, x[0], x[1], x[2] - x[3], 1.2, -1.2, 9.8);
        x[5] = flow_value(false, x[0], x[1], x[2] - x[3], 9.9, -1.2, 9.8);
        let mut out = vec![0.0; m.num_eq()];
        m.eq_constraints(&x, &mut out);
        assert!(out[0].abs() < 1e-15 && out[1].abs() < 1e-15);
    }
}
