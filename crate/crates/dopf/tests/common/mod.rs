//! Shared test fixtures: analytic NLPs with known optima and small helpers.
#![allow(dead_code)]

use dopf::caseio;
use dopf::netmodel::{self, Network};
use dopf::nlp::{NlpProblem, Sparsity};
use std::path::PathBuf;

/// Path of a bundled case file.
pub fn case_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../cases")
        .join(format!("{name}.m"))
}

/// Parses and converts a bundled case.
pub fn load_network(name: &str) -> Network {
    let case = caseio::parse_case_file(case_path(name)).unwrap();
    netmodel::to_per_unit(&case).unwrap()
}

/// Reference AC-OPF objectives ($/h) for the bundled cases, computed offline
/// with an independent solver (scipy trust-constr on a bus-injection
/// formulation; case9/case14 agree with the widely published MATPOWER
/// values 5296.69 and 8081.53).
pub const REF_OBJECTIVE_CASE9: f64 = 5296.6868;
pub const REF_OBJECTIVE_CASE14: f64 = 8081.5254;

fn dense_lower(n: usize) -> Sparsity {
    let mut s = Sparsity::empty();
    for r in 0..n {
        for c in 0..=r {
            s.push(r, c);
        }
    }
    s
}

/// min (x-3)^2 s.t. 1 <= x <= 2; optimum x*=2, f*=1.
pub struct ClippedQuadratic;

impl NlpProblem for ClippedQuadratic {
    fn num_vars(&self) -> usize {
        1
    }
    fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
        (vec![1.0], vec![2.0])
    }
    fn initial_point(&self) -> Vec<f64> {
        vec![1.5]
    }
    fn objective(&self, x: &[f64]) -> f64 {
        (x[0] - 3.0).powi(2)
    }
    fn gradient(&self, x: &[f64], grad: &mut [f64]) {
        grad[0] = 2.0 * (x[0] - 3.0);
    }
    fn hessian_pattern(&self) -> Sparsity {
        dense_lower(1)
    }
    fn hessian_values(&self, _x: &[f64], w: f64, _l: &[f64], _m: &[f64], vals: &mut [f64]) {
        vals[0] = 2.0 * w;
    }
}

/// min x+y s.t. x^2+y^2 = 1; minimum at (-sqrt2/2, -sqrt2/2), f* = -sqrt(2).
pub struct CircleLinear;

impl NlpProblem for CircleLinear {
    fn num_vars(&self) -> usize {
        2
    }
    fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
        (vec![f64::NEG_INFINITY; 2], vec![f64::INFINITY; 2])
    }
    fn initial_point(&self) -> Vec<f64> {
        vec![-0.5, -0.5]
    }
    fn num_eq(&self) -> usize {
        1
    }
    fn objective(&self, x: &[f64]) -> f64 {
        x[0] + x[1]
    }
    fn gradient(&self, _x: &[f64], grad: &mut [f64]) {
        grad[0] = 1.0;
        grad[1] = 1.0;
    }
    fn eq_constraints(&self, x: &[f64], out: &mut [f64]) {
        out[0] = x[0] * x[0] + x[1] * x[1] - 1.0;
    }
    fn eq_jacobian_pattern(&self) -> Sparsity {
        let mut s = Sparsity::empty();
        s.push(0, 0);
        s.push(0, 1);
        s
    }
    fn eq_jacobian_values(&self, x: &[f64], vals: &mut [f64]) {
        vals[0] = 2.0 * x[0];
        vals[1] = 2.0 * x[1];
    }
    fn hessian_pattern(&self) -> Sparsity {
        let mut s = Sparsity::empty();
        s.push(0, 0);
        s.push(1, 1);
        s
    }
    fn hessian_values(&self, _x: &[f64], _w: f64, lam: &[f64], _m: &[f64], vals: &mut [f64]) {
        vals[0] = 2.0 * lam[0];
        vals[1] = 2.0 * lam[0];
    }
}

/// Hock-Schittkowski 71: f* = 17.0140173.
pub struct Hs71;

impl NlpProblem for Hs71 {
    fn num_vars(&self) -> usize {
        4
    }
    fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
        (vec![1.0; 4], vec![5.0; 4])
    }
    fn initial_point(&self) -> Vec<f64> {
        vec![1.0, 5.0, 5.0, 1.0]
    }
    fn num_eq(&self) -> usize {
        1
    }
    fn num_ineq(&self) -> usize {
        1
    }
    fn objective(&self, x: &[f64]) -> f64 {
        x[0] * x[3] * (x[0] + x[1] + x[2]) + x[2]
    }
    fn gradient(&self, x: &[f64], g: &mut [f64]) {
        g[0] = x[3] * (2.0 * x[0] + x[1] + x[2]);
        g[1] = x[0] * x[3];
        g[2] = x[0] * x[3] + 1.0;
        g[3] = x[0] * (x[0] + x[1] + x[2]);
    }
    fn eq_constraints(&self, x: &[f64], out: &mut [f64]) {
        out[0] = x.iter().map(|v| v * v).sum::<f64>() - 40.0;
    }
    fn eq_jacobian_pattern(&self) -> Sparsity {
        let mut s = Sparsity::empty();
        for c in 0..4 {
            s.push(0, c);
        }
        s
    }
    fn eq_jacobian_values(&self, x: &[f64], vals: &mut [f64]) {
        for c in 0..4 {
            vals[c] = 2.0 * x[c];
        }
    }
    fn ineq_constraints(&self, x: &[f64], out: &mut [f64]) {
        out[0] = 25.0 - x[0] * x[1] * x[2] * x[3];
    }
    fn ineq_jacobian_pattern(&self) -> Sparsity {
        let mut s = Sparsity::empty();
        for c in 0..4 {
            s.push(0, c);
        }
        s
    }
    fn ineq_jacobian_values(&self, x: &[f64], vals: &mut [f64]) {
        vals[0] = -x[1] * x[2] * x[3];
        vals[1] = -x[0] * x[2] * x[3];
        vals[2] = -x[0] * x[1] * x[3];
        vals[3] = -x[0] * x[1] * x[2];
    }
    fn hessian_pattern(&self) -> Sparsity {
        dense_lower(4)
    }
    fn hessian_values(&self, x: &[f64], w: f64, lam: &[f64], mu: &[f64], vals: &mut [f64]) {
        let (l, m) = (lam[0], mu[0]);
        // dense_lower(4) order: (0,0) (1,0) (1,1) (2,0) (2,1) (2,2) (3,0) (3,1) (3,2) (3,3)
        vals[0] = w * 2.0 * x[3] + 2.0 * l;
        vals[1] = w * x[3] + m * (-x[2] * x[3]);
        vals[2] = 2.0 * l;
        vals[3] = w * x[3] + m * (-x[1] * x[3]);
        vals[4] = m * (-x[0] * x[3]);
        vals[5] = 2.0 * l;
        vals[6] = w * (2.0 * x[0] + x[1] + x[2]) + m * (-x[1] * x[2]);
        vals[7] = w * x[0] + m * (-x[0] * x[2]);
        vals[8] = w * x[0] + m * (-x[0] * x[1]);
        vals[9] = 2.0 * l;
    }
}

/// min 0.5 x1^2 + x2^2 - x1 s.t. x1 + x2 = 1; optimum (1, 0), f* = -0.5.
pub struct EqQp;

impl NlpProblem for EqQp {
    fn num_vars(&self) -> usize {
        2
    }
    fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
        (vec![f64::NEG_INFINITY; 2], vec![f64::INFINITY; 2])
    }
    fn initial_point(&self) -> Vec<f64> {
        vec![0.0, 0.0]
    }
    fn num_eq(&self) -> usize {
        1
    }
    fn objective(&self, x: &[f64]) -> f64 {
        0.5 * x[0] * x[0] + x[1] * x[1] - x[0]
    }
    fn gradient(&self, x: &[f64], g: &mut [f64]) {
        g[0] = x[0] - 1.0;
        g[1] = 2.0 * x[1];
    }
    fn eq_constraints(&self, x: &[f64], out: &mut [f64]) {
        out[0] = x[0] + x[1] - 1.0;
    }
    fn eq_jacobian_pattern(&self) -> Sparsity {
        let mut s = Sparsity::empty();
        s.push(0, 0);
        s.push(0, 1);
        s
    }
    fn eq_jacobian_values(&self, _x: &[f64], vals: &mut [f64]) {
        vals[0] = 1.0;
        vals[1] = 1.0;
    }
    fn hessian_pattern(&self) -> Sparsity {
        let mut s = Sparsity::empty();
        s.push(0, 0);
        s.push(1, 1);
        s
    }
    fn hessian_values(&self, _x: &[f64], w: f64, _l: &[f64], _m: &[f64], vals: &mut [f64]) {
        vals[0] = w;
        vals[1] = 2.0 * w;
    }
}

/// Rosenbrock: f* = 0 at (1, 1).
pub struct Rosenbrock;

impl NlpProblem for Rosenbrock {
    fn num_vars(&self) -> usize {
        2
    }
    fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
        (vec![f64::NEG_INFINITY; 2], vec![f64::INFINITY; 2])
    }
    fn initial_point(&self) -> Vec<f64> {
        vec![-1.2, 1.0]
    }
    fn objective(&self, x: &[f64]) -> f64 {
        (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2)
    }
    fn gradient(&self, x: &[f64], g: &mut [f64]) {
        g[0] = -2.0 * (1.0 - x[0]) - 400.0 * x[0] * (x[1] - x[0] * x[0]);
        g[1] = 200.0 * (x[1] - x[0] * x[0]);
    }
    fn hessian_pattern(&self) -> Sparsity {
        dense_lower(2)
    }
    fn hessian_values(&self, x: &[f64], w: f64, _l: &[f64], _m: &[f64], vals: &mut [f64]) {
        vals[0] = w * (2.0 - 400.0 * (x[1] - 3.0 * x[0] * x[0]));
        vals[1] = w * (-400.0 * x[0]);
        vals[2] = w * 200.0;
    }
}

/// min (x^2-1)^2: two global minima at x = +-1, f* = 0, local max at 0.
pub struct Bimodal;

impl NlpProblem for Bimodal {
    fn num_vars(&self) -> usize {
        1
    }
    fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
        (vec![f64::NEG_INFINITY], vec![f64::INFINITY])
    }
    fn initial_point(&self) -> Vec<f64> {
        vec![2.0]
    }
    fn objective(&self, x: &[f64]) -> f64 {
        (x[0] * x[0] - 1.0).powi(2)
    }
    fn gradient(&self, x: &[f64], g: &mut [f64]) {
        g[0] = 4.0 * x[0] * (x[0] * x[0] - 1.0);
    }
    fn hessian_pattern(&self) -> Sparsity {
        dense_lower(1)
    }
    fn hessian_values(&self, x: &[f64], w: f64, _l: &[f64], _m: &[f64], vals: &mut [f64]) {
        vals[0] = w * (12.0 * x[0] * x[0] - 4.0);
    }
}

/// Known-optimum table for the analytic suite.
pub fn analytic_suite() -> Vec<(&'static str, Box<dyn NlpProblem>, f64)> {
    vec![
        ("clipped-quadratic", Box::new(ClippedQuadratic), 1.0),
        ("circle-linear", Box::new(CircleLinear), -std::f64::consts::SQRT_2),
        ("hs71", Box::new(Hs71), 17.0140173),
        ("eq-qp", Box::new(EqQp), -0.5),
        ("rosenbrock", Box::new(Rosenbrock), 0.0),
        ("bimodal", Box::new(Bimodal), 0.0),
    ]
}
