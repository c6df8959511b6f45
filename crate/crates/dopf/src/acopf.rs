//! Centralized AC optimal power flow: quadratic generation cost subject to
//! power balance, branch flow definitions and operating limits, with
//! optionally tightened bounds. Serves as baseline, feasibility checker and
//! cost reference.

use crate::netmodel::{LoadAssignment, Network};
use crate::nlp::{self, NlpSolution, NlpStatus, SolverOptions};
use crate::pfmodel::{flow_value, EqStamp, IneqStamp, StampModel};
use crate::tighten::TightenedBounds;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum OpfError {
    #[error("tightening crosses bounds for {family} at index {index}")]
    CrossedBounds { family: &'static str, index: usize },
    #[error("cost gap base objective must be positive")]
    NonpositiveBase,
    #[error(transparent)]
    Solver(#[from] nlp::NlpError),
}

/// Variable layout of the OPF model: voltages and angles per bus, outputs
/// per generator, four directed flow variables per branch.
#[derive(Debug, Clone, Copy)]
pub struct OpfLayout {
    pub n_bus: usize,
    pub n_gen: usize,
    pub n_branch: usize,
}

impl OpfLayout {
    pub fn v(&self, bus: usize) -> usize {
        bus
    }
    pub fn theta(&self, bus: usize) -> usize {
        self.n_bus + bus
    }
    pub fn pg(&self, gen: usize) -> usize {
        2 * self.n_bus + gen
    }
    pub fn qg(&self, gen: usize) -> usize {
        2 * self.n_bus + self.n_gen + gen
    }
    /// slot 0..3: p_from, q_from, p_to, q_to
    pub fn flow(&self, branch: usize, slot: usize) -> usize {
        2 * self.n_bus + 2 * self.n_gen + 4 * branch + slot
    }
    pub fn num_vars(&self) -> usize {
        2 * self.n_bus + 2 * self.n_gen + 4 * self.n_branch
    }
}

/// A built OPF instance ready to solve.
pub struct OpfModel<'a> {
    pub net: &'a Network,
    pub layout: OpfLayout,
    pub model: StampModel,
}

/// Generator dispatch extracted from an OPF (or distributed OPF) solution.
#[derive(Debug, Clone)]
pub struct Dispatch {
    /// active output per generator (pu), aligned with `Network::gens`
    pub pg: Vec<f64>,
    /// voltage setpoint per generator bus: (bus index, v)
    pub v_setpoint: Vec<(usize, f64)>,
    pub slack_vm: f64,
    pub slack_va: f64,
    pub objective: f64,
}

impl Dispatch {
    pub fn setpoint_at(&self, bus: usize) -> Option<f64> {
        self.v_setpoint
            .iter()
            .find(|(b, _)| *b == bus)
            .map(|(_, v)| *v)
    }
}

/// Tightened per-generator reactive bounds for one bus, splitting the
/// bus-level tightening proportionally to each generator's share of the
/// bus reactive range.
pub fn gen_q_bounds(
    net: &Network,
    gen: usize,
    tight: Option<&TightenedBounds>,
) -> (f64, f64) {
    let g = &net.gens[gen];
    let (mut lo, mut hi) = (g.qmin, g.qmax);
    if let Some(t) = tight {
        let bus = g.bus;
        let (bus_lo, bus_hi) = net.bus_q_limits(bus);
        let range = bus_hi - bus_lo;
        let siblings = net.gens_at(bus).len() as f64;
        let share = if range > 1e-12 {
            (g.qmax - g.qmin) / range
        } else {
            1.0 / siblings
        };
        lo += t.q_lo[bus] * share;
        hi -= t.q_hi[bus] * share;
    }
    (lo, hi)
}

/// Builds the OPF model with nominal loads.
pub fn build_opf<'a>(
    net: &'a Network,
    tightening: Option<&TightenedBounds>,
) -> Result<OpfModel<'a>, OpfError> {
    build_opf_with_loads(net, &LoadAssignment::nominal(net), tightening)
}

/// Builds the OPF model with explicit loads.
pub fn build_opf_with_loads<'a>(
    net: &'a Network,
    loads: &LoadAssignment,
    tightening: Option<&TightenedBounds>,
) -> Result<OpfModel<'a>, OpfError> {
    let layout = OpfLayout {
        n_bus: net.buses.len(),
        n_gen: net.gens.len(),
        n_branch: net.branches.len(),
    };
    let mut m = StampModel::new();

    for (i, b) in net.buses.iter().enumerate() {
        let (mut lo, mut hi) = (b.vmin, b.vmax);
        if let Some(t) = tightening {
            lo += t.v_lo[i];
            hi -= t.v_hi[i];
        }
        if lo >= hi {
            return Err(OpfError::CrossedBounds {
                family: "voltage",
                index: i,
            });
        }
        m.add_var(lo, hi, 1.0f64.clamp(lo, hi));
    }
    for (i, b) in net.buses.iter().enumerate() {
        if i == net.reference {
            m.add_var(0.0, 0.0, 0.0);
        } else {
            m.add_var(f64::NEG_INFINITY, f64::INFINITY, 0.0);
        }
        let _ = b;
    }
    for (gi, g) in net.gens.iter().enumerate() {
        let _ = g;
        let (lo, hi) = (net.gens[gi].pmin, net.gens[gi].pmax);
        m.add_var(lo, hi, 0.5 * (lo + hi));
    }
    for gi in 0..net.gens.len() {
        let (lo, hi) = gen_q_bounds(net, gi, tightening);
        if lo > hi {
            return Err(OpfError::CrossedBounds {
                family: "reactive",
                index: gi,
            });
        }
        m.add_var(lo, hi, 0.5 * (lo + hi));
    }
    for (k, br) in net.branches.iter().enumerate() {
        let vs = m.x0[layout.v(br.from)];
        let vt = m.x0[layout.v(br.to)];
        let inits = [
            flow_value(true, vs, vt, 0.0, br.y_ff.0, br.y_ft.0, br.y_ft.1),
            flow_value(false, vs, vt, 0.0, br.y_ff.1, br.y_ft.0, br.y_ft.1),
            flow_value(true, vt, vs, 0.0, br.y_tt.0, br.y_tf.0, br.y_tf.1),
            flow_value(false, vt, vs, 0.0, br.y_tt.1, br.y_tf.0, br.y_tf.1),
        ];
        for &x0 in &inits {
            m.add_var(f64::NEG_INFINITY, f64::INFINITY, x0);
        }
        let _ = k;
    }
    debug_assert_eq!(m.lb.len(), layout.num_vars());

    stamp_opf_constraints(&mut m, net, loads, tightening, &layout)?;

    // objective: sum of quadratic generator costs
    let mut quads = Vec::with_capacity(net.gens.len());
    let mut constant = 0.0;
    for (gi, g) in net.gens.iter().enumerate() {
        quads.push((layout.pg(gi), g.c2, g.c1));
        constant += g.c0;
    }
    m.set_objective(quads, constant);

    Ok(OpfModel {
        net,
        layout,
        model: m,
    })
}

/// Stamps flow definitions, power balances and thermal limits for the whole
/// network into `m`, using the layout's variable indices.
fn stamp_opf_constraints(
    m: &mut StampModel,
    net: &Network,
    loads: &LoadAssignment,
    tightening: Option<&TightenedBounds>,
    layout: &OpfLayout,
) -> Result<(), OpfError> {
    for (k, br) in net.branches.iter().enumerate() {
        let (f, t) = (br.from, br.to);
        m.eqs.push(EqStamp::FlowP {
            flow: layout.flow(k, 0),
            v_s: layout.v(f),
            v_t: layout.v(t),
            th_s: layout.theta(f),
            th_t: layout.theta(t),
            g_self: br.y_ff.0,
            g_mut: br.y_ft.0,
            b_mut: br.y_ft.1,
        });
        m.eqs.push(EqStamp::FlowQ {
            flow: layout.flow(k, 1),
            v_s: layout.v(f),
            v_t: layout.v(t),
            th_s: layout.theta(f),
            th_t: layout.theta(t),
            b_self: br.y_ff.1,
            g_mut: br.y_ft.0,
            b_mut: br.y_ft.1,
        });
        m.eqs.push(EqStamp::FlowP {
            flow: layout.flow(k, 2),
            v_s: layout.v(t),
            v_t: layout.v(f),
            th_s: layout.theta(t),
            th_t: layout.theta(f),
            g_self: br.y_tt.0,
            g_mut: br.y_tf.0,
            b_mut: br.y_tf.1,
        });
        m.eqs.push(EqStamp::FlowQ {
            flow: layout.flow(k, 3),
            v_s: layout.v(t),
            v_t: layout.v(f),
            th_s: layout.theta(t),
            th_t: layout.theta(f),
            b_self: br.y_tt.1,
            g_mut: br.y_tf.0,
            b_mut: br.y_tf.1,
        });
        if let Some(s_max) = br.s_max {
            let lam = tightening.map_or(0.0, |t| t.s_hi[k]);
            let limit = s_max - lam;
            if limit <= 0.0 {
                return Err(OpfError::CrossedBounds {
                    family: "flow",
                    index: k,
                });
            }
            m.ineqs.push(IneqStamp::Thermal {
                p: layout.flow(k, 0),
                q: layout.flow(k, 1),
                limit,
            });
            m.ineqs.push(IneqStamp::Thermal {
                p: layout.flow(k, 2),
                q: layout.flow(k, 3),
                limit,
            });
        }
    }
    for (i, b) in net.buses.iter().enumerate() {
        let mut lin_p: Vec<(usize, f64)> = Vec::new();
        let mut lin_q: Vec<(usize, f64)> = Vec::new();
        for gi in net.gens_at(i) {
            lin_p.push((layout.pg(gi), 1.0));
            lin_q.push((layout.qg(gi), 1.0));
        }
        for (k, br) in net.branches.iter().enumerate() {
            if br.from == i {
                lin_p.push((layout.flow(k, 0), -1.0));
                lin_q.push((layout.flow(k, 1), -1.0));
            }
            if br.to == i {
                lin_p.push((layout.flow(k, 2), -1.0));
                lin_q.push((layout.flow(k, 3), -1.0));
            }
        }
        m.eqs.push(EqStamp::Balance {
            v: layout.v(i),
            quad: -b.gsh,
            lin: lin_p,
            constant: -loads.pd[i],
        });
        m.eqs.push(EqStamp::Balance {
            v: layout.v(i),
            quad: b.bsh,
            lin: lin_q,
            constant: -loads.qd[i],
        });
    }
    Ok(())
}

/// Default solver options for OPF-class problems: objective scaled the way
/// cost-in-dollars problems need, tight KKT tolerances.
pub fn opf_solver_options() -> SolverOptions {
    SolverOptions {
        obj_scale: 1e-4,
        ..SolverOptions::default()
    }
}

/// Solves a built model and extracts the dispatch on success.
pub fn solve_opf(model: &OpfModel) -> Result<(Option<Dispatch>, NlpSolution), OpfError> {
    let sol = nlp::solve(&model.model, &opf_solver_options())?;
    let dispatch = if sol.status == NlpStatus::Optimal {
        Some(extract_dispatch(model.net, &model.layout, &sol.x, sol.objective))
    } else {
        None
    };
    Ok((dispatch, sol))
}

/// Builds the dispatch (generator setpoints) from a solved variable vector.
pub fn extract_dispatch(net: &Network, layout: &OpfLayout, x: &[f64], objective: f64) -> Dispatch {
    let pg: Vec<f64> = (0..net.gens.len()).map(|g| x[layout.pg(g)]).collect();
    let v_setpoint: Vec<(usize, f64)> = net
        .gen_buses()
        .into_iter()
        .map(|b| (b, x[layout.v(b)]))
        .collect();
    Dispatch {
        pg,
        v_setpoint,
        slack_vm: x[layout.v(net.reference)],
        slack_va: x[layout.theta(net.reference)],
        objective,
    }
}

/// Relative cost increase of a tightened objective over the base objective.
pub fn cost_gap(tight: f64, base: f64) -> Result<f64, OpfError> {
    if base <= 0.0 {
        return Err(OpfError::NonpositiveBase);
    }
    Ok((tight - base) / base)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cost_gap_arithmetic() {
        assert_eq!(cost_gap(100.0, 100.0).unwrap(), 0.0);
        assert!((cost_gap(100.2, 100.0).unwrap() - 0.002).abs() < 1e-12);
        assert!(matches!(cost_gap(1.0, 0.0), Err(OpfError::NonpositiveBase)));
    }
}
