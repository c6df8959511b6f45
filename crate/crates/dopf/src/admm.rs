//! Consensus ADMM for distributed OPF: per-region augmented-Lagrangian
//! subproblems, neighbor averaging, multiplier updates, residuals and
//! termination.
//!
//! Each iteration solves every region's OPF subproblem with the objective
//! `sum f_i + y' z + (alpha/2) ||z - zbar||^2`, averages the two copies of
//! every shared variable, and updates multipliers by `y += alpha (z - zbar)`.
//! Termination is on the primal residual (local copy minus average) in the
//! configured norm; a dual residual check and scaled tolerances are
//! available behind options.

use crate::acopf::Dispatch;
use crate::netmodel::{Decomposition, LoadAssignment, Network, SharedQuantity};
use crate::nlp::{self, NlpStatus};
use crate::pfmodel::{flow_value, EqStamp, IneqStamp, StampModel};
use crate::tighten::TightenedBounds;
use rayon::prelude::*;
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AdmmError {
    #[error("region {region} subproblem ended {status:?} at iteration {iter}")]
    SubproblemInfeasible {
        region: usize,
        iter: usize,
        status: NlpStatus,
    },
    #[error("no convergence within {0} iterations (last primal residual {1:.3e})")]
    MaxIterationsExceeded(usize, f64),
    #[error("tightening crosses bounds in region model: {0}")]
    CrossedBounds(String),
    #[error(transparent)]
    Solver(#[from] nlp::NlpError),
}

/// Norm used for the termination test.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormKind {
    LInf,
    L2,
}

/// Scaled-tolerance parameters (absolute/relative form).
#[derive(Debug, Clone, Copy)]
pub struct ScaledTolerances {
    pub eps_abs: f64,
    pub eps_rel: f64,
}

#[derive(Debug, Clone)]
pub struct AdmmConfig {
    /// augmented-Lagrangian penalty
    pub alpha: f64,
    pub eps_pri: f64,
    /// optional dual-residual tolerance (L2)
    pub eps_dual: Option<f64>,
    pub norm: NormKind,
    pub max_iters: usize,
    /// when set, eps_pri/eps_dual are recomputed each iteration
    pub scaled: Option<ScaledTolerances>,
}

impl Default for AdmmConfig {
    fn default() -> Self {
        AdmmConfig {
            alpha: 1000.0,
            eps_pri: 1e-4,
            eps_dual: None,
            norm: NormKind::LInf,
            max_iters: 5000,
            scaled: None,
        }
    }
}

/// Consensus state per neighbor pair: both copies, the average, multipliers.
#[derive(Debug, Clone)]
pub struct PairState {
    pub z_a: Vec<f64>,
    pub z_b: Vec<f64>,
    pub zbar: Vec<f64>,
    pub zbar_prev: Vec<f64>,
    pub y_a: Vec<f64>,
    pub y_b: Vec<f64>,
}

/// Full consensus state across pairs plus the residual history.
#[derive(Debug, Clone)]
pub struct ConsensusState {
    pub pairs: Vec<PairState>,
    pub iter: usize,
}

/// One residual-trace record per iteration.
#[derive(Debug, Clone, Copy)]
pub struct TraceRow {
    pub iter: usize,
    pub r_inf: f64,
    pub r_l2: f64,
    pub s_l2: f64,
    pub objective: f64,
}

/// Result of a converged distributed run.
#[derive(Debug, Clone)]
pub struct AdmmOutcome {
    pub dispatch: Dispatch,
    pub trace: Vec<TraceRow>,
    pub iterations: usize,
    /// absolute peer-to-peer mismatch per shared entry at exit
    pub exit_mismatches: Vec<f64>,
}

/// Averaging step (Eq-3 style): zbar per entry is the mean of both copies.
pub fn average_and_update(state: &mut ConsensusState, alpha: f64) {
    for p in state.pairs.iter_mut() {
        p.zbar_prev.copy_from_slice(&p.zbar);
        for k in 0..p.zbar.len() {
            p.zbar[k] = 0.5 * (p.z_a[k] + p.z_b[k]);
            p.y_a[k] += alpha * (p.z_a[k] - p.zbar[k]);
            p.y_b[k] += alpha * (p.z_b[k] - p.zbar[k]);
        }
    }
}

/// Primal residual (stacked `z - zbar` over both sides of every pair) and
/// dual residual (`-alpha (zbar - zbar_prev)`), with their norms.
pub fn residuals(state: &ConsensusState, alpha: f64) -> (Vec<f64>, Vec<f64>, f64, f64, f64) {
    let mut r = Vec::new();
    let mut s = Vec::new();
    for p in &state.pairs {
        for k in 0..p.zbar.len() {
            r.push(p.z_a[k] - p.zbar[k]);
        }
        for k in 0..p.zbar.len() {
            r.push(p.z_b[k] - p.zbar[k]);
        }
        for k in 0..p.zbar.len() {
            s.push(-alpha * (p.zbar[k] - p.zbar_prev[k]));
        }
    }
    let r_inf = r.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    let r_l2 = r.iter().map(|v| v * v).sum::<f64>().sqrt();
    let s_l2 = s.iter().map(|v| v * v).sum::<f64>().sqrt();
    (r, s, r_inf, r_l2, s_l2)
}

/// Scaled tolerances specialized to the consensus form: `||Ax|| -> ||z||_2`,
/// `||Bz|| -> ||zbar||_2`, `c = 0`, `||A'y|| -> ||y||_2`; p is the number of
/// consistency constraints (both sides of every pair), n the number of
/// boundary variables.
pub fn scaled_tolerances(cfg: &ScaledTolerances, state: &ConsensusState) -> (f64, f64) {
    let mut z_norm2 = 0.0;
    let mut zbar_norm2 = 0.0;
    let mut y_norm2 = 0.0;
    let mut n_entries = 0usize;
    for p in &state.pairs {
        n_entries += p.zbar.len();
        for k in 0..p.zbar.len() {
            z_norm2 += p.z_a[k] * p.z_a[k] + p.z_b[k] * p.z_b[k];
            zbar_norm2 += p.zbar[k] * p.zbar[k];
            y_norm2 += p.y_a[k] * p.y_a[k] + p.y_b[k] * p.y_b[k];
        }
    }
    let p_cons = 2 * n_entries;
    let eps_pri = (p_cons as f64).sqrt() * cfg.eps_abs
        + cfg.eps_rel * z_norm2.sqrt().max(zbar_norm2.sqrt());
    let eps_dual = (n_entries as f64).sqrt() * cfg.eps_abs + cfg.eps_rel * y_norm2.sqrt();
    (eps_pri, eps_dual)
}

/// Local variable layout of one region subproblem.
pub struct RegionLayout {
    /// global bus index -> local slot (owned and fictitious)
    pub bus_slot: BTreeMap<usize, usize>,
    /// global branch index -> local branch slot
    pub branch_slot: BTreeMap<usize, usize>,
    /// owned generator indices (global), in order
    pub gens: Vec<usize>,
    pub n_local_bus: usize,
}

impl RegionLayout {
    pub fn v(&self, bus: usize) -> usize {
        self.bus_slot[&bus]
    }
    pub fn theta(&self, bus: usize) -> usize {
        self.n_local_bus + self.bus_slot[&bus]
    }
    pub fn pg(&self, pos: usize) -> usize {
        2 * self.n_local_bus + pos
    }
    pub fn qg(&self, pos: usize) -> usize {
        2 * self.n_local_bus + self.gens.len() + pos
    }
    pub fn flow(&self, branch: usize, slot: usize) -> usize {
        2 * self.n_local_bus + 2 * self.gens.len() + 4 * self.branch_slot[&branch] + slot
    }
    pub fn num_vars(&self) -> usize {
        2 * self.n_local_bus + 2 * self.gens.len() + 4 * self.branch_slot.len()
    }

    /// Variable index of a shared quantity inside this region's model.
    pub fn shared_var(&self, q: SharedQuantity) -> usize {
        match q {
            SharedQuantity::VoltageMag(b) => self.v(b),
            SharedQuantity::VoltageAng(b) => self.theta(b),
            SharedQuantity::FlowP(k, from) => self.flow(k, if from { 0 } else { 2 }),
            SharedQuantity::FlowQ(k, from) => self.flow(k, if from { 1 } else { 3 }),
        }
    }
}

/// The constraint part of one region subproblem (objective varies per
/// iteration).
pub struct RegionModel {
    pub region: usize,
    pub layout: RegionLayout,
    pub base: StampModel,
    /// (pair index, this region is side a, local variable per shared entry)
    pub shared: Vec<(usize, bool, Vec<usize>)>,
    /// objective quads of the pure generation cost
    cost_quads: Vec<(usize, f64, f64)>,
    cost_const: f64,
}

/// Builds the constraint model of one region: flow definitions and thermal
/// limits for every modeled branch, balances for owned buses only, bounds
/// (tightened) on owned and fictitious buses.
pub fn build_region_model(
    net: &Network,
    dec: &Decomposition,
    region: usize,
    loads: &LoadAssignment,
    tightening: Option<&TightenedBounds>,
) -> Result<RegionModel, AdmmError> {
    let reg = dec.region(region);
    let mut bus_slot = BTreeMap::new();
    for &b in reg.buses.iter().chain(&reg.fictitious) {
        let next = bus_slot.len();
        bus_slot.entry(b).or_insert(next);
    }
    let mut branch_slot = BTreeMap::new();
    for &k in &reg.branches {
        let next = branch_slot.len();
        branch_slot.entry(k).or_insert(next);
    }
    let layout = RegionLayout {
        bus_slot,
        branch_slot,
        gens: reg.gens.clone(),
        n_local_bus: reg.buses.len() + reg.fictitious.len(),
    };

    let mut m = StampModel::new();
    // voltage magnitudes then angles, in local slot order
    let mut by_slot: Vec<usize> = vec![0; layout.n_local_bus];
    for (&b, &s) in &layout.bus_slot {
        by_slot[s] = b;
    }
    for &b in &by_slot {
        let bus = &net.buses[b];
        let (mut lo, mut hi) = (bus.vmin, bus.vmax);
        if let Some(t) = tightening {
            lo += t.v_lo[b];
            hi -= t.v_hi[b];
        }
        if lo >= hi {
            return Err(AdmmError::CrossedBounds(format!("voltage at bus {b}")));
        }
        m.add_var(lo, hi, 1.0f64.clamp(lo, hi));
    }
    let owns_reference = dec.region_of_bus[net.reference] == region;
    for &b in &by_slot {
        if owns_reference && b == net.reference {
            m.add_var(0.0, 0.0, 0.0);
        } else {
            m.add_var(f64::NEG_INFINITY, f64::INFINITY, 0.0);
        }
    }
    for &gi in &layout.gens {
        let g = &net.gens[gi];
        m.add_var(g.pmin, g.pmax, 0.5 * (g.pmin + g.pmax));
    }
    for &gi in &layout.gens {
        let (lo, hi) = crate::acopf::gen_q_bounds(net, gi, tightening);
        if lo > hi {
            return Err(AdmmError::CrossedBounds(format!("reactive at gen {gi}")));
        }
        m.add_var(lo, hi, 0.5 * (lo + hi));
    }
    let mut branches_in_order: Vec<usize> = vec![0; layout.branch_slot.len()];
    for (&k, &s) in &layout.branch_slot {
        branches_in_order[s] = k;
    }
    for &k in &branches_in_order {
        let br = &net.branches[k];
        let inits = [
            flow_value(true, 1.0, 1.0, 0.0, br.y_ff.0, br.y_ft.0, br.y_ft.1),
            flow_value(false, 1.0, 1.0, 0.0, br.y_ff.1, br.y_ft.0, br.y_ft.1),
            flow_value(true, 1.0, 1.0, 0.0, br.y_tt.0, br.y_tf.0, br.y_tf.1),
            flow_value(false, 1.0, 1.0, 0.0, br.y_tt.1, br.y_tf.0, br.y_tf.1),
        ];
        for &x0 in &inits {
            m.add_var(f64::NEG_INFINITY, f64::INFINITY, x0);
        }
    }
    debug_assert_eq!(m.lb.len(), layout.num_vars());

    for &k in &branches_in_order {
        let br = &net.branches[k];
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
                return Err(AdmmError::CrossedBounds(format!("flow limit on branch {k}")));
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
    for &b in &reg.buses {
        let bus = &net.buses[b];
        let mut lin_p: Vec<(usize, f64)> = Vec::new();
        let mut lin_q: Vec<(usize, f64)> = Vec::new();
        for (pos, &gi) in layout.gens.iter().enumerate() {
            if net.gens[gi].bus == b {
                lin_p.push((layout.pg(pos), 1.0));
                lin_q.push((layout.qg(pos), 1.0));
            }
        }
        for &k in &reg.branches {
            let br = &net.branches[k];
            if br.from == b {
                lin_p.push((layout.flow(k, 0), -1.0));
                lin_q.push((layout.flow(k, 1), -1.0));
            }
            if br.to == b {
                lin_p.push((layout.flow(k, 2), -1.0));
                lin_q.push((layout.flow(k, 3), -1.0));
            }
        }
        m.eqs.push(EqStamp::Balance {
            v: layout.v(b),
            quad: -bus.gsh,
            lin: lin_p,
            constant: -loads.pd[b],
        });
        m.eqs.push(EqStamp::Balance {
            v: layout.v(b),
            quad: bus.bsh,
            lin: lin_q,
            constant: -loads.qd[b],
        });
    }

    let mut cost_quads = Vec::new();
    let mut cost_const = 0.0;
    for (pos, &gi) in layout.gens.iter().enumerate() {
        let g = &net.gens[gi];
        cost_quads.push((layout.pg(pos), g.c2, g.c1));
        cost_const += g.c0;
    }

    let shared: Vec<(usize, bool, Vec<usize>)> = dec
        .shared_of(region)
        .into_iter()
        .map(|(pair, is_a)| {
            let vars = dec.shared[pair]
                .entries
                .iter()
                .map(|e| layout.shared_var(e.quantity))
                .collect();
            (pair, is_a, vars)
        })
        .collect();

    Ok(RegionModel {
        region,
        layout,
        base: m,
        shared,
        cost_quads,
        cost_const,
    })
}

impl RegionModel {
    /// Instantiates the subproblem for the current consensus state: cost
    /// plus `y' z + (alpha/2)||z - zbar||^2` on the shared variables.
    pub fn subproblem(&self, state: &ConsensusState, alpha: f64, x0: Option<&[f64]>) -> StampModel {
        let mut m = self.base.clone();
        let mut quads: BTreeMap<usize, (f64, f64)> = BTreeMap::new();
        for &(v, c2, c1) in &self.cost_quads {
            let e = quads.entry(v).or_insert((0.0, 0.0));
            e.0 += c2;
            e.1 += c1;
        }
        let mut constant = self.cost_const;
        for (pair, is_a, vars) in &self.shared {
            let p = &state.pairs[*pair];
            let y = if *is_a { &p.y_a } else { &p.y_b };
            for (k, &v) in vars.iter().enumerate() {
                let e = quads.entry(v).or_insert((0.0, 0.0));
                e.0 += alpha / 2.0;
                e.1 += y[k] - alpha * p.zbar[k];
                constant += alpha / 2.0 * p.zbar[k] * p.zbar[k];
            }
        }
        m.set_objective(
            quads.into_iter().map(|(v, (c2, c1))| (v, c2, c1)).collect(),
            constant,
        );
        if let Some(x0) = x0 {
            m.x0 = x0.to_vec();
        }
        m
    }

    /// Gathers this region's copies of its shared entries from a solution.
    pub fn gather(&self, x: &[f64], state: &mut ConsensusState) {
        for (pair, is_a, vars) in &self.shared {
            let p = &mut state.pairs[*pair];
            let z = if *is_a { &mut p.z_a } else { &mut p.z_b };
            for (k, &v) in vars.iter().enumerate() {
                z[k] = x[v];
            }
        }
    }

    /// True generation cost of a region solution (no penalty terms).
    pub fn cost_of(&self, x: &[f64]) -> f64 {
        let mut f = self.cost_const;
        for &(v, c2, c1) in &self.cost_quads {
            f += c2 * x[v] * x[v] + c1 * x[v];
        }
        f
    }
}

/// Flat-start central values per shared entry: 1 pu magnitudes, zero angles
/// and flows.
fn flat_zbar(dec: &Decomposition) -> ConsensusState {
    let pairs = dec
        .shared
        .iter()
        .map(|s| {
            let zbar: Vec<f64> = s
                .entries
                .iter()
                .map(|e| match e.quantity {
                    SharedQuantity::VoltageMag(_) => 1.0,
                    _ => 0.0,
                })
                .collect();
            let n = zbar.len();
            PairState {
                z_a: zbar.clone(),
                z_b: zbar.clone(),
                zbar_prev: zbar.clone(),
                zbar,
                y_a: vec![0.0; n],
                y_b: vec![0.0; n],
            }
        })
        .collect();
    ConsensusState { pairs, iter: 0 }
}

/// Assembles the system dispatch from region solutions.
fn assemble_dispatch(
    net: &Network,
    dec: &Decomposition,
    models: &[RegionModel],
    xs: &[Vec<f64>],
) -> Dispatch {
    let mut pg = vec![0.0; net.gens.len()];
    for (m, x) in models.iter().zip(xs) {
        for (pos, &gi) in m.layout.gens.iter().enumerate() {
            pg[gi] = x[m.layout.pg(pos)];
        }
    }
    let v_setpoint: Vec<(usize, f64)> = net
        .gen_buses()
        .into_iter()
        .map(|b| {
            let region = dec.region_of_bus[b];
            let m = &models[region - 1];
            (b, xs[region - 1][m.layout.v(b)])
        })
        .collect();
    let slack_region = dec.region_of_bus[net.reference];
    let ms = &models[slack_region - 1];
    let xs_slack = &xs[slack_region - 1];
    let objective: f64 = net
        .gens
        .iter()
        .zip(&pg)
        .map(|(g, &p)| g.c2 * p * p + g.c1 * p + g.c0)
        .sum();
    Dispatch {
        pg,
        v_setpoint,
        slack_vm: xs_slack[ms.layout.v(net.reference)],
        slack_va: xs_slack[ms.layout.theta(net.reference)],
        objective,
    }
}

/// Runs synchronous consensus ADMM to the configured tolerance.
pub fn run_admm(
    net: &Network,
    dec: &Decomposition,
    cfg: &AdmmConfig,
    loads: &LoadAssignment,
    tightening: Option<&TightenedBounds>,
) -> Result<AdmmOutcome, AdmmError> {
    let models: Vec<RegionModel> = dec
        .regions
        .iter()
        .map(|r| build_region_model(net, dec, r.id, loads, tightening))
        .collect::<Result<_, _>>()?;
    let mut state = flat_zbar(dec);
    let mut warm: Vec<Option<Vec<f64>>> = vec![None; models.len()];
    let mut trace = Vec::new();
    let solver_opts = crate::acopf::opf_solver_options();

    for iter in 0..cfg.max_iters {
        state.iter = iter + 1;
        let solved: Vec<Result<nlp::NlpSolution, nlp::NlpError>> = models
            .par_iter()
            .zip(warm.par_iter())
            .map(|(m, w)| {
                let sub = m.subproblem(&state, cfg.alpha, w.as_deref());
                nlp::solve(&sub, &solver_opts)
            })
            .collect();
        let mut xs = Vec::with_capacity(models.len());
        for (m, res) in models.iter().zip(solved) {
            let sol = res?;
            if sol.status != NlpStatus::Optimal {
                return Err(AdmmError::SubproblemInfeasible {
                    region: m.region,
                    iter: iter + 1,
                    status: sol.status,
                });
            }
            xs.push(sol.x);
        }
        for (m, x) in models.iter().zip(&xs) {
            m.gather(x, &mut state);
        }
        average_and_update(&mut state, cfg.alpha);
        let (_, _, r_inf, r_l2, s_l2) = residuals(&state, cfg.alpha);
        let objective: f64 = models.iter().zip(&xs).map(|(m, x)| m.cost_of(x)).sum();
        trace.push(TraceRow {
            iter: iter + 1,
            r_inf,
            r_l2,
            s_l2,
            objective,
        });
        for (w, x) in warm.iter_mut().zip(&xs) {
            *w = Some(x.clone());
        }

        let (eps_pri, eps_dual) = match &cfg.scaled {
            Some(s) => {
                let (p, d) = scaled_tolerances(s, &state);
                (p, Some(d))
            }
            None => (cfg.eps_pri, cfg.eps_dual),
        };
        let r_norm = match cfg.norm {
            NormKind::LInf => r_inf,
            NormKind::L2 => r_l2,
        };
        let primal_ok = r_norm <= eps_pri;
        let dual_ok = match eps_dual {
            Some(ed) => s_l2 <= ed,
            None => true,
        };
        if primal_ok && dual_ok {
            let exit_mismatches = state
                .pairs
                .iter()
                .flat_map(|p| {
                    p.z_a
                        .iter()
                        .zip(&p.z_b)
                        .map(|(&a, &b)| (a - b).abs())
                        .collect::<Vec<_>>()
                })
                .collect();
            let dispatch = assemble_dispatch(net, dec, &models, &xs);
            return Ok(AdmmOutcome {
                dispatch,
                trace,
                iterations: iter + 1,
                exit_mismatches,
            });
        }
    }
    let last = trace.last().map_or(f64::INFINITY, |t| match cfg.norm {
        NormKind::LInf => t.r_inf,
        NormKind::L2 => t.r_l2,
    });
    Err(AdmmError::MaxIterationsExceeded(cfg.max_iters, last))
}
