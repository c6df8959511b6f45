//! Newton-Raphson AC power flow evaluating the physical system response to a
//! dispatch, with low-voltage screening and violation measurement.
//!
//! This is a bus-injection formulation on the complex admittance matrix,
//! deliberately independent of the branch-flow-variable models used by the
//! optimization side. PV/PQ switching is disabled: reactive limits are not
//! enforced during the solve so that reactive violations remain observable.

use crate::acopf::Dispatch;
use crate::netmodel::{LoadAssignment, Network};
use num_complex::Complex64;
use thiserror::Error;

pub const LOW_VOLTAGE_SCREEN: f64 = 0.7;
const PF_TOL: f64 = 1e-8;
const PF_MAX_ITER: usize = 50;

#[derive(Debug, Error)]
pub enum PfError {
    #[error("power flow did not converge after {iterations} iterations (max mismatch {mismatch:.3e})")]
    NotConverged { iterations: usize, mismatch: f64 },
    #[error("power flow Jacobian is singular at iteration {0}")]
    SingularJacobian(usize),
    #[error("power flow reached a low-voltage solution (min v = {min_v:.4})")]
    LowVoltage { solution: Box<PfSolution>, min_v: f64 },
}

/// Solved power-flow state.
#[derive(Debug, Clone)]
pub struct PfSolution {
    pub v: Vec<f64>,
    pub theta: Vec<f64>,
    /// bus-level net generation implied by the balances (pu), gen buses only
    pub pg_bus: Vec<f64>,
    pub qg_bus: Vec<f64>,
    /// per-generator disaggregation
    pub pg: Vec<f64>,
    pub qg: Vec<f64>,
    /// branch end flows: (p_from, q_from, p_to, q_to) per branch
    pub flows: Vec<(f64, f64, f64, f64)>,
    pub converged: bool,
    pub iterations: usize,
    pub max_mismatch: f64,
}

/// Complex bus admittance matrix (dense, row-major).
pub fn ybus(net: &Network) -> Vec<Complex64> {
    let n = net.buses.len();
    let mut y = vec![Complex64::new(0.0, 0.0); n * n];
    for br in &net.branches {
        let (f, t) = (br.from, br.to);
        y[f * n + f] += Complex64::new(br.y_ff.0, br.y_ff.1);
        y[f * n + t] += Complex64::new(br.y_ft.0, br.y_ft.1);
        y[t * n + f] += Complex64::new(br.y_tf.0, br.y_tf.1);
        y[t * n + t] += Complex64::new(br.y_tt.0, br.y_tt.1);
    }
    for (i, b) in net.buses.iter().enumerate() {
        // shunt admittance gsh + j bsh: consumes gsh v^2, injects bsh v^2
        y[i * n + i] += Complex64::new(b.gsh, b.bsh);
    }
    y
}

/// Complex power injections S_i = V_i conj(sum_k Y_ik V_k).
fn injections(y: &[Complex64], vol: &[Complex64]) -> Vec<Complex64> {
    let n = vol.len();
    let mut s = vec![Complex64::new(0.0, 0.0); n];
    for i in 0..n {
        let mut acc = Complex64::new(0.0, 0.0);
        for k in 0..n {
            acc += y[i * n + k] * vol[k];
        }
        s[i] = vol[i] * acc.conj();
    }
    s
}

/// Dense LU solve with partial pivoting; returns false when singular.
fn lu_solve(a: &mut [f64], b: &mut [f64], n: usize) -> bool {
    for col in 0..n {
        let mut piv = col;
        let mut best = a[col * n + col].abs();
        for r in col + 1..n {
            let v = a[r * n + col].abs();
            if v > best {
                best = v;
                piv = r;
            }
        }
        if best < 1e-13 {
            return false;
        }
        if piv != col {
            for c in 0..n {
                a.swap(col * n + c, piv * n + c);
            }
            b.swap(col, piv);
        }
        let d = a[col * n + col];
        for r in col + 1..n {
            let f = a[r * n + col] / d;
            if f == 0.0 {
                continue;
            }
            a[r * n + col] = 0.0;
            for c in col + 1..n {
                a[r * n + c] -= f * a[col * n + c];
            }
            b[r] -= f * b[col];
        }
    }
    for r in (0..n).rev() {
        let mut acc = b[r];
        for c in r + 1..n {
            acc -= a[r * n + c] * b[c];
        }
        b[r] = acc / a[r * n + r];
    }
    true
}

/// Runs a PV/PQ/slack Newton power flow for a dispatch under given loads.
///
/// Generator buses hold the dispatch voltage setpoints and (except the
/// slack) the dispatch active injections; the slack bus holds its dispatch
/// voltage magnitude and angle. Reactive limits are not enforced.
pub fn run_pf(
    net: &Network,
    dispatch: &Dispatch,
    loads: &LoadAssignment,
) -> Result<PfSolution, PfError> {
    let n = net.buses.len();
    let slack = net.reference;
    let gen_buses = net.gen_buses();
    let is_gen: Vec<bool> = {
        let mut v = vec![false; n];
        for &b in &gen_buses {
            v[b] = true;
        }
        v
    };

    // specified injections
    let mut p_spec = vec![0.0; n];
    let mut q_spec = vec![0.0; n];
    let mut pg_bus_set = vec![0.0; n];
    for (gi, g) in net.gens.iter().enumerate() {
        pg_bus_set[g.bus] += dispatch.pg[gi];
    }
    for i in 0..n {
        p_spec[i] = pg_bus_set[i] - loads.pd[i];
        q_spec[i] = -loads.qd[i];
    }

    // unknown layout: theta for all non-slack, v for PQ buses
    let mut th_idx = Vec::new();
    let mut v_idx = Vec::new();
    for i in 0..n {
        if i != slack {
            th_idx.push(i);
        }
        if !is_gen[i] && i != slack {
            v_idx.push(i);
        }
    }
    let nth = th_idx.len();
    let nv = v_idx.len();
    let m = nth + nv;

    let mut v = vec![1.0; n];
    let mut theta = vec![dispatch.slack_va; n];
    v[slack] = dispatch.slack_vm;
    theta[slack] = dispatch.slack_va;
    for &(b, vs) in &dispatch.v_setpoint {
        v[b] = vs;
    }

    let y = ybus(net);
    let gmat: Vec<f64> = y.iter().map(|c| c.re).collect();
    let bmat: Vec<f64> = y.iter().map(|c| c.im).collect();

    let mut iterations = 0;
    let mut max_mismatch = f64::INFINITY;
    let mut converged = false;
    for iter in 0..PF_MAX_ITER {
        iterations = iter;
        let vol: Vec<Complex64> = (0..n)
            .map(|i| Complex64::from_polar(v[i], theta[i]))
            .collect();
        let s = injections(&y, &vol);
        // mismatches: P at non-slack, Q at PQ
        let mut f = vec![0.0; m];
        for (r, &i) in th_idx.iter().enumerate() {
            f[r] = s[i].re - p_spec[i];
        }
        for (r, &i) in v_idx.iter().enumerate() {
            f[nth + r] = s[i].im - q_spec[i];
        }
        max_mismatch = f.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
        if max_mismatch <= PF_TOL {
            converged = true;
            break;
        }

        // dense polar Jacobian
        let mut jac = vec![0.0; m * m];
        let pos_th: Vec<isize> = {
            let mut p = vec![-1isize; n];
            for (r, &i) in th_idx.iter().enumerate() {
                p[i] = r as isize;
            }
            p
        };
        let pos_v: Vec<isize> = {
            let mut p = vec![-1isize; n];
            for (r, &i) in v_idx.iter().enumerate() {
                p[i] = (nth + r) as isize;
            }
            p
        };
        for (r, &i) in th_idx.iter().enumerate().chain(
            v_idx
                .iter()
                .enumerate()
                .map(|(r, i)| (nth + r, i)),
        ) {
            let is_p_row = r < nth;
            for j in 0..n {
                let yij = Complex64::new(gmat[i * n + j], bmat[i * n + j]);
                if yij.norm_sqr() == 0.0 && i != j {
                    continue;
                }
                let thij = theta[i] - theta[j];
                let (sin, cos) = thij.sin_cos();
                let (gij, bij) = (yij.re, yij.im);
                // dP/dth, dP/dv, dQ/dth, dQ/dv
                let (dp_dth, dp_dv, dq_dth, dq_dv) = if i == j {
                    let pi = s[i].re;
                    let qi = s[i].im;
                    (
                        -qi - bij * v[i] * v[i],
                        pi / v[i] + gij * v[i],
                        pi - gij * v[i] * v[i],
                        qi / v[i] - bij * v[i],
                    )
                } else {
                    (
                        v[i] * v[j] * (gij * sin - bij * cos),
                        v[i] * (gij * cos + bij * sin),
                        -v[i] * v[j] * (gij * cos + bij * sin),
                        v[i] * (gij * sin - bij * cos),
                    )
                };
                if pos_th[j] >= 0 {
                    jac[r * m + pos_th[j] as usize] += if is_p_row { dp_dth } else { dq_dth };
                }
                if pos_v[j] >= 0 {
                    jac[r * m + pos_v[j] as usize] += if is_p_row { dp_dv } else { dq_dv };
                }
            }
        }
        let mut step: Vec<f64> = f.iter().map(|&x| -x).collect();
        if !lu_solve(&mut jac, &mut step, m) {
            return Err(PfError::SingularJacobian(iter));
        }
        for (r, &i) in th_idx.iter().enumerate() {
            theta[i] += step[r];
        }
        for (r, &i) in v_idx.iter().enumerate() {
            v[i] += step[nth + r];
        }
    }
    if !converged {
        return Err(PfError::NotConverged {
            iterations,
            mismatch: max_mismatch,
        });
    }

    // recovered injections at the solution
    let vol: Vec<Complex64> = (0..n)
        .map(|i| Complex64::from_polar(v[i], theta[i]))
        .collect();
    let s = injections(&y, &vol);
    let mut pg_bus = vec![0.0; n];
    let mut qg_bus = vec![0.0; n];
    for &i in &gen_buses {
        qg_bus[i] = s[i].im + loads.qd[i];
        pg_bus[i] = if i == slack {
            s[i].re + loads.pd[i]
        } else {
            pg_bus_set[i]
        };
    }

    // disaggregate bus-level generation to individual units by range share
    let mut pg = dispatch.pg.clone();
    let mut qg = vec![0.0; net.gens.len()];
    for &bus in &gen_buses {
        let gens = net.gens_at(bus);
        let (qlo, qhi) = net.bus_q_limits(bus);
        let qrange = qhi - qlo;
        for &gi in &gens {
            let g = &net.gens[gi];
            let share = if qrange > 1e-12 {
                (g.qmax - g.qmin) / qrange
            } else {
                1.0 / gens.len() as f64
            };
            qg[gi] = qg_bus[bus] * share;
        }
        if bus == slack {
            let prange: f64 = gens.iter().map(|&gi| net.gens[gi].pmax - net.gens[gi].pmin).sum();
            for &gi in &gens {
                let g = &net.gens[gi];
                let share = if prange > 1e-12 {
                    (g.pmax - g.pmin) / prange
                } else {
                    1.0 / gens.len() as f64
                };
                pg[gi] = pg_bus[bus] * share;
            }
        }
    }

    // branch end flows
    let mut flows = Vec::with_capacity(net.branches.len());
    for br in &net.branches {
        let (f, t) = (br.from, br.to);
        let yff = Complex64::new(br.y_ff.0, br.y_ff.1);
        let yft = Complex64::new(br.y_ft.0, br.y_ft.1);
        let ytf = Complex64::new(br.y_tf.0, br.y_tf.1);
        let ytt = Complex64::new(br.y_tt.0, br.y_tt.1);
        let sf = vol[f] * (yff * vol[f] + yft * vol[t]).conj();
        let st = vol[t] * (ytf * vol[f] + ytt * vol[t]).conj();
        flows.push((sf.re, sf.im, st.re, st.im));
    }

    let sol = PfSolution {
        v: v.clone(),
        theta,
        pg_bus,
        qg_bus,
        pg,
        qg,
        flows,
        converged,
        iterations: iterations + 1,
        max_mismatch,
    };
    let min_v = v.iter().copied().fold(f64::INFINITY, f64::min);
    if min_v < LOW_VOLTAGE_SCREEN {
        return Err(PfError::LowVoltage {
            solution: Box::new(sol),
            min_v,
        });
    }
    Ok(sol)
}

/// One measured bound violation.
#[derive(Debug, Clone)]
pub struct Violation {
    pub family: &'static str,
    /// bus id for V/Q families, branch index for flows
    pub index: usize,
    pub amount: f64,
    /// amount / (x_max - x_min)
    pub fraction: f64,
}

/// Violation metrics over voltage magnitudes, reactive injections and line
/// flows, checked against the ORIGINAL (untightened) bounds.
#[derive(Debug, Clone)]
pub struct ViolationMetrics {
    pub violations: Vec<Violation>,
    pub count: usize,
    /// average percent violation over violated constraints (percent units)
    pub avg_percent: f64,
}

const VIOLATION_EPS: f64 = 1e-9;

/// Applies the range-normalized violation measure to every constraint in
/// scope: bus voltage bounds, generator-bus reactive bounds, both directed
/// apparent-flow limits of limited branches.
pub fn measure_violations(net: &Network, pf: &PfSolution) -> ViolationMetrics {
    let mut violations = Vec::new();
    let mut push = |family: &'static str, index: usize, amount: f64, range: f64| {
        if amount > VIOLATION_EPS {
            violations.push(Violation {
                family,
                index,
                amount,
                fraction: amount / range.max(1e-9),
            });
        }
    };
    for (i, b) in net.buses.iter().enumerate() {
        let range = b.vmax - b.vmin;
        push("v_max", i, pf.v[i] - b.vmax, range);
        push("v_min", i, b.vmin - pf.v[i], range);
    }
    for bus in net.gen_buses() {
        let (qlo, qhi) = net.bus_q_limits(bus);
        let range = qhi - qlo;
        push("q_max", bus, pf.qg_bus[bus] - qhi, range);
        push("q_min", bus, qlo - pf.qg_bus[bus], range);
    }
    for (k, br) in net.branches.iter().enumerate() {
        if let Some(s_max) = br.s_max {
            let (pf_, qf_, pt_, qt_) = pf.flows[k];
            let sf = (pf_ * pf_ + qf_ * qf_).sqrt();
            let st = (pt_ * pt_ + qt_ * qt_).sqrt();
            push("s_from", k, sf - s_max, s_max);
            push("s_to", k, st - s_max, s_max);
        }
    }
    let count = violations.len();
    let avg_percent = if count == 0 {
        0.0
    } else {
        100.0 * violations.iter().map(|v| v.fraction).sum::<f64>() / count as f64
    };
    ViolationMetrics {
        violations,
        count,
        avg_percent,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::caseio::parse_case;
    use crate::netmodel::to_per_unit;

    fn two_bus_net() -> Network {
        let case = parse_case(
            "mpc.baseMVA = 100;
mpc.bus = [
 1 3 0 0 0 0 1 1 0 138 1 1.1 0.9;
 2 1 0 0 0 0 1 1 0 138 1 1.1 0.9;
];
mpc.gen = [ 1 0 0 30 -30 1 100 1 100 0 0 0 0 0 0 0 0 0 0 0 0; ];
mpc.branch = [ 1 2 0.01 0.1 0.02 0 0 0 0 0 1 -360 360; ];
mpc.gencost = [ 2 0 0 3 0.1 20 0; ];",
        )
        .unwrap();
        to_per_unit(&case).unwrap()
    }

    fn flat_dispatch(net: &Network) -> Dispatch {
        Dispatch {
            pg: vec![0.0; net.gens.len()],
            v_setpoint: net.gen_buses().into_iter().map(|b| (b, 1.0)).collect(),
            slack_vm: 1.0,
            slack_va: 0.0,
            objective: 0.0,
        }
    }

    #[test]
    fn zero_load_flat_network_stays_flat() {
        let net = two_bus_net();
        let loads = LoadAssignment {
            pd: vec![0.0, 0.0],
            qd: vec![0.0, 0.0],
        };
        let pf = run_pf(&net, &flat_dispatch(&net), &loads).unwrap();
        assert!(pf.converged);
        // line charging makes the open-ended voltage rise very slightly
        assert!((pf.v[1] - 1.0).abs() < 2e-3, "v2 = {}", pf.v[1]);
        assert!(pf.theta[1].abs() < 1e-3);
        let (p_from, _, _, _) = pf.flows[0];
        assert!(p_from.abs() < 1e-4);
    }

    #[test]
    fn lu_solves_small_system() {
        let mut a = vec![2.0, 1.0, 1.0, 3.0];
        let mut b = vec![3.0, 5.0];
        assert!(lu_solve(&mut a, &mut b, 2));
        assert!((b[0] - 0.8).abs() < 1e-12);
        assert!((b[1] - 1.4).abs() < 1e-12);
    }

    #[test]
    fn boundary_values_are_not_violations() {
        let net = two_bus_net();
        let loads = LoadAssignment::nominal(&net);
        let pf = run_pf(&net, &flat_dispatch(&net), &loads).unwrap();
        let m = measure_violations(&net, &pf);
        assert_eq!(m.count, 0);
        assert_eq!(m.avg_percent, 0.0);
    }

    #[test]
    fn hand_computed_voltage_violation_percent() {
        let net = two_bus_net();
        let loads = LoadAssignment::nominal(&net);
        let mut pf = run_pf(&net, &flat_dispatch(&net), &loads).unwrap();
        // force an observed voltage above the 1.1 bound by 0.04: range is
        // 0.2, so the percent is 0.04/0.2 = 20%
        pf.v[1] = 1.14;
        let m = measure_violations(&net, &pf);
        assert_eq!(m.count, 1);
        assert!((m.avg_percent - 20.0).abs() < 1e-9);
        assert_eq!(m.violations[0].family, "v_max");
    }

    #[test]
    fn violation_measure_is_monotone_in_excursion() {
        let net = two_bus_net();
        let loads = LoadAssignment::nominal(&net);
        let pf = run_pf(&net, &flat_dispatch(&net), &loads).unwrap();
        let mut worse = pf.clone();
        worse.v[0] = 1.12;
        worse.v[1] = 1.15;
        let a = measure_violations(&net, &pf);
        let b = measure_violations(&net, &worse);
        assert!(b.count >= a.count);
        assert!(b.avg_percent >= a.avg_percent);
    }
}
