//! Canonical per-unit network model, regional decomposition with fictitious
//! boundary buses, and shared-variable indexing used by every solver.

use crate::caseio::{PartitionSpec, RawCase};
use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NetError {
    #[error("branch {0} has zero series impedance")]
    ZeroImpedanceBranch(usize),
    #[error("bus {0} has crossed voltage bounds")]
    CrossedVoltageBounds(i64),
}

/// Bus with per-unit quantities on the system base.
#[derive(Debug, Clone)]
pub struct Bus {
    pub id: i64,
    pub is_reference: bool,
    /// shunt conductance/susceptance (pu injection at v = 1)
    pub gsh: f64,
    pub bsh: f64,
    pub vmin: f64,
    pub vmax: f64,
    /// nominal load (pu)
    pub pd: f64,
    pub qd: f64,
}

/// Generator with per-unit limits and cost in $/h for per-unit output.
#[derive(Debug, Clone)]
pub struct Gen {
    /// index into `Network::buses`
    pub bus: usize,
    pub pmin: f64,
    pub pmax: f64,
    pub qmin: f64,
    pub qmax: f64,
    /// cost coefficients on per-unit power: c2 p^2 + c1 p + c0 in $/h
    pub c2: f64,
    pub c1: f64,
    pub c0: f64,
}

/// Branch with admittance coefficients for both directed ends.
///
/// The flow leaving end `s` toward end `t` is
/// `p = g_ss v_s^2 + v_s v_t (g_st cos th_st + b_st sin th_st)` and
/// `q = -b_ss v_s^2 + v_s v_t (g_st sin th_st - b_st cos th_st)`,
/// which covers lines and (tap/shift) transformers uniformly.
#[derive(Debug, Clone)]
pub struct Branch {
    /// indices into `Network::buses`
    pub from: usize,
    pub to: usize,
    /// from-side self and mutual admittance (g_ff, b_ff, g_ft, b_ft)
    pub y_ff: (f64, f64),
    pub y_ft: (f64, f64),
    /// to-side self and mutual admittance (g_tt, b_tt, g_tf, b_tf)
    pub y_tt: (f64, f64),
    pub y_tf: (f64, f64),
    /// apparent-power limit (pu); None means unlimited
    pub s_max: Option<f64>,
}

/// Per-unit network on the system MVA base.
#[derive(Debug, Clone)]
pub struct Network {
    pub name: String,
    pub base_mva: f64,
    pub buses: Vec<Bus>,
    pub gens: Vec<Gen>,
    pub branches: Vec<Branch>,
    /// index of the reference bus
    pub reference: usize,
}

impl Network {
    pub fn bus_index(&self, id: i64) -> Option<usize> {
        self.buses.iter().position(|b| b.id == id)
    }

    /// Generators attached to a bus index.
    pub fn gens_at(&self, bus: usize) -> Vec<usize> {
        (0..self.gens.len())
            .filter(|&g| self.gens[g].bus == bus)
            .collect()
    }

    /// Bus indices that host at least one generator.
    pub fn gen_buses(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.gens.iter().map(|g| g.bus).collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    /// Aggregate reactive limits of a generator bus.
    pub fn bus_q_limits(&self, bus: usize) -> (f64, f64) {
        self.gens
            .iter()
            .filter(|g| g.bus == bus)
            .fold((0.0, 0.0), |(lo, hi), g| (lo + g.qmin, hi + g.qmax))
    }
}

/// Converts a validated raw case to per-unit quantities.
pub fn to_per_unit(case: &RawCase) -> Result<Network, NetError> {
    let base = case.base_mva;
    let mut buses = Vec::with_capacity(case.buses.len());
    let mut reference = 0;
    for (i, b) in case.buses.iter().enumerate() {
        if b.vmin_pu >= b.vmax_pu {
            return Err(NetError::CrossedVoltageBounds(b.id));
        }
        if b.bus_type == 3 {
            reference = i;
        }
        buses.push(Bus {
            id: b.id,
            is_reference: b.bus_type == 3,
            gsh: b.gs_mw / base,
            bsh: b.bs_mvar / base,
            vmin: b.vmin_pu,
            vmax: b.vmax_pu,
            pd: b.pd_mw / base,
            qd: b.qd_mvar / base,
        });
    }
    let id2i: BTreeMap<i64, usize> = case
        .buses
        .iter()
        .enumerate()
        .map(|(i, b)| (b.id, i))
        .collect();
    let mut branches = Vec::with_capacity(case.branches.len());
    for (k, br) in case.branches.iter().enumerate() {
        if br.r == 0.0 && br.x == 0.0 {
            return Err(NetError::ZeroImpedanceBranch(k));
        }
        let d = br.r * br.r + br.x * br.x;
        let (g, b) = (br.r / d, -br.x / d);
        let tap = if br.tap == 0.0 { 1.0 } else { br.tap };
        let shift = br.shift_deg.to_radians();
        let (cs, sn) = (shift.cos(), shift.sin());
        let half = br.b / 2.0;
        // y_ff = (y + j b/2) / tap^2 ; y_ft = -y / (tap e^{-j shift})
        // y_tf = -y / (tap e^{+j shift}) ; y_tt = y + j b/2
        let t2 = tap * tap;
        let y_ff = (g / t2, (b + half) / t2);
        let y_ft = (-(g * cs - b * sn) / tap, -(b * cs + g * sn) / tap);
        let y_tf = (-(g * cs + b * sn) / tap, -(b * cs - g * sn) / tap);
        let y_tt = (g, b + half);
        branches.push(Branch {
            from: id2i[&br.from],
            to: id2i[&br.to],
            y_ff,
            y_ft,
            y_tt,
            y_tf,
            s_max: if br.rate_a_mva > 0.0 {
                Some(br.rate_a_mva / base)
            } else {
                None
            },
        });
    }
    let mut gens = Vec::with_capacity(case.gens.len());
    for (gi, g) in case.gens.iter().enumerate() {
        let cost = case.gencost.get(gi);
        gens.push(Gen {
            bus: id2i[&g.bus],
            pmin: g.pmin_mw / base,
            pmax: g.pmax_mw / base,
            qmin: g.qmin_mvar / base,
            qmax: g.qmax_mvar / base,
            c2: cost.map_or(0.0, |c| c.c2 * base * base),
            c1: cost.map_or(0.0, |c| c.c1 * base),
            c0: cost.map_or(0.0, |c| c.c0),
        });
    }
    Ok(Network {
        name: case.name.clone(),
        base_mva: base,
        buses,
        gens,
        branches,
        reference,
    })
}

/// The four physical quantities shared per cut branch and side.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SharedQuantity {
    /// voltage magnitude of a boundary bus (bus index in the full network)
    VoltageMag(usize),
    /// voltage angle of a boundary bus
    VoltageAng(usize),
    /// active flow of a directed branch end (branch index, from-side flag)
    FlowP(usize, bool),
    /// reactive flow of a directed branch end
    FlowQ(usize, bool),
}

/// One entry of a shared-variable index set.
#[derive(Debug, Clone, Copy)]
pub struct SharedEntry {
    pub quantity: SharedQuantity,
    /// originating cut branch (index into `Network::branches`)
    pub branch: usize,
}

/// A neighbor pair (m, n) with m < n and its ordered shared entries.
#[derive(Debug, Clone)]
pub struct SharedSet {
    pub region_a: usize,
    pub region_b: usize,
    pub entries: Vec<SharedEntry>,
}

/// Region sub-network: owned buses plus fictitious copies of neighbor
/// boundary buses, and every branch (internal or cut) the region models.
#[derive(Debug, Clone)]
pub struct Region {
    /// region id (1-based, matching the partition file)
    pub id: usize,
    /// bus indices owned by this region
    pub buses: Vec<usize>,
    /// fictitious bus copies (indices of buses owned by neighbors)
    pub fictitious: Vec<usize>,
    /// branches fully modeled by this region (internal and cut)
    pub branches: Vec<usize>,
    /// generator indices owned by this region
    pub gens: Vec<usize>,
    /// neighboring region ids
    pub neighbors: Vec<usize>,
}

/// Decomposition of a network according to a partition.
#[derive(Debug, Clone)]
pub struct Decomposition {
    pub regions: Vec<Region>,
    /// shared sets per unordered neighbor pair, sorted by (a, b)
    pub shared: Vec<SharedSet>,
    /// cut branch indices
    pub cut_branches: Vec<usize>,
    /// region id owning each bus index
    pub region_of_bus: Vec<usize>,
}

impl Decomposition {
    /// Total number of boundary variables N_b (entries summed over pairs).
    pub fn boundary_count(&self) -> usize {
        self.shared.iter().map(|s| s.entries.len()).sum()
    }

    pub fn region(&self, id: usize) -> &Region {
        &self.regions[id - 1]
    }

    /// Shared sets that involve a region, with the flag "region is side a".
    pub fn shared_of(&self, region: usize) -> Vec<(usize, bool)> {
        self.shared
            .iter()
            .enumerate()
            .filter_map(|(k, s)| {
                if s.region_a == region {
                    Some((k, true))
                } else if s.region_b == region {
                    Some((k, false))
                } else {
                    None
                }
            })
            .collect()
    }
}

/// Splits the network into region sub-problems with fictitious boundary
/// buses. For every cut branch both adjacent regions model the full branch;
/// the shared entries per branch are the two terminal voltage pairs and the
/// two directed flows, in a fixed order replicated on both sides.
pub fn decompose(net: &Network, spec: &PartitionSpec) -> Decomposition {
    let m = spec.region_count;
    let region_of_bus: Vec<usize> = net.buses.iter().map(|b| spec.region_of(b.id)).collect();

    let mut regions: Vec<Region> = (1..=m)
        .map(|id| Region {
            id,
            buses: Vec::new(),
            fictitious: Vec::new(),
            branches: Vec::new(),
            gens: Vec::new(),
            neighbors: Vec::new(),
        })
        .collect();
    for (i, &r) in region_of_bus.iter().enumerate() {
        regions[r - 1].buses.push(i);
    }
    for (g, gen) in net.gens.iter().enumerate() {
        regions[region_of_bus[gen.bus] - 1].gens.push(g);
    }

    let mut cut_branches = Vec::new();
    let mut pair_entries: BTreeMap<(usize, usize), Vec<SharedEntry>> = BTreeMap::new();
    for (k, br) in net.branches.iter().enumerate() {
        let rf = region_of_bus[br.from];
        let rt = region_of_bus[br.to];
        if rf == rt {
            regions[rf - 1].branches.push(k);
            continue;
        }
        cut_branches.push(k);
        regions[rf - 1].branches.push(k);
        regions[rt - 1].branches.push(k);
        regions[rf - 1].fictitious.push(br.to);
        regions[rt - 1].fictitious.push(br.from);
        let pair = (rf.min(rt), rf.max(rt));
        let entries = pair_entries.entry(pair).or_default();
        for q in [
            SharedQuantity::VoltageMag(br.from),
            SharedQuantity::VoltageAng(br.from),
            SharedQuantity::VoltageMag(br.to),
            SharedQuantity::VoltageAng(br.to),
            SharedQuantity::FlowP(k, true),
            SharedQuantity::FlowQ(k, true),
            SharedQuantity::FlowP(k, false),
            SharedQuantity::FlowQ(k, false),
        ] {
            entries.push(SharedEntry {
                quantity: q,
                branch: k,
            });
        }
    }
    for r in regions.iter_mut() {
        r.fictitious.sort_unstable();
        r.fictitious.dedup();
    }
    let shared: Vec<SharedSet> = pair_entries
        .into_iter()
        .map(|((a, b), entries)| SharedSet {
            region_a: a,
            region_b: b,
            entries,
        })
        .collect();
    for s in &shared {
        regions[s.region_a - 1].neighbors.push(s.region_b);
        regions[s.region_b - 1].neighbors.push(s.region_a);
    }
    for r in regions.iter_mut() {
        r.neighbors.sort_unstable();
        r.neighbors.dedup();
    }
    Decomposition {
        regions,
        shared,
        cut_branches,
        region_of_bus,
    }
}

/// Load variation envelope: per-bus factors in [1-r, 1+r] preserving the
/// power factor.
#[derive(Debug, Clone)]
pub struct LoadEnvelope {
    pub factor: f64,
}

impl LoadEnvelope {
    pub fn new(factor: f64) -> Self {
        assert!((0.0..1.0).contains(&factor), "load factor must be in [0, 1)");
        LoadEnvelope { factor }
    }
}

/// Per-bus load assignment (pu), aligned with `Network::buses`.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadAssignment {
    pub pd: Vec<f64>,
    pub qd: Vec<f64>,
}

impl LoadAssignment {
    pub fn nominal(net: &Network) -> Self {
        LoadAssignment {
            pd: net.buses.iter().map(|b| b.pd).collect(),
            qd: net.buses.iter().map(|b| b.qd).collect(),
        }
    }
}

/// Draws a per-bus uniform factor u ~ U[1-r, 1+r] from a seeded generator
/// and scales both load components by it.
pub fn sample_loads(net: &Network, env: &LoadEnvelope, seed: u64) -> LoadAssignment {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let dist = Uniform::new_inclusive(1.0 - env.factor, 1.0 + env.factor);
    let mut pd = Vec::with_capacity(net.buses.len());
    let mut qd = Vec::with_capacity(net.buses.len());
    for b in &net.buses {
        let u = dist.sample(&mut rng);
        pd.push(u * b.pd);
        qd.push(u * b.qd);
    }
    LoadAssignment { pd, qd }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::caseio::{self, parse_case};

    fn two_bus() -> (Network, PartitionSpec) {
        let case = parse_case(
            "mpc.baseMVA = 100;
mpc.bus = [
 1 3 0 0 0 0 1 1 0 138 1 1.1 0.9;
 2 1 50 10 0 0 1 1 0 138 1 1.1 0.9;
];
mpc.gen = [
 1 60 0 30 -30 1 100 1 100 0 0 0 0 0 0 0 0 0 0 0 0;
];
mpc.branch = [
 1 2 0.01 0.1 0.02 40 0 0 0 0 1 -360 360;
];
mpc.gencost = [
 2 0 0 3 0.1 20 0;
];",
        )
        .unwrap();
        let spec = caseio::parse_partition("1 1\n2 2\n", &case).unwrap();
        (to_per_unit(&case).unwrap(), spec)
    }

    #[test]
    fn per_unit_conversion_definitions() {
        let (net, _) = two_bus();
        assert_eq!(net.buses[1].pd, 0.5);
        assert_eq!(net.buses[1].qd, 0.1);
        assert_eq!(net.branches[0].s_max, Some(0.4));
        assert_eq!(net.reference, 0);
        // cost on pu power: c2 * base^2, c1 * base
        assert_eq!(net.gens[0].c2, 0.1 * 100.0 * 100.0);
        assert_eq!(net.gens[0].c1, 20.0 * 100.0);
    }

    #[test]
    fn pure_reactance_branch_admittance() {
        let case = parse_case(
            "mpc.baseMVA = 100;
mpc.bus = [
 1 3 0 0 0 0 1 1 0 1 1 1.1 0.9;
 2 1 0 0 0 0 1 1 0 1 1 1.1 0.9;
];
mpc.gen = [ 1 0 0 10 -10 1 100 1 50 0 0 0 0 0 0 0 0 0 0 0 0; ];
mpc.branch = [ 1 2 0 0.1 0 0 0 0 1 0 1 -360 360; ];
mpc.gencost = [ 2 0 0 3 0 1 0; ];",
        )
        .unwrap();
        let net = to_per_unit(&case).unwrap();
        let br = &net.branches[0];
        // r=0, x=0.1 -> y = -10j: G=0, B=-10
        assert!(br.y_ff.0.abs() < 1e-12);
        assert!((br.y_ff.1 - -10.0).abs() < 1e-12);
        assert!((br.y_ft.1 - 10.0).abs() < 1e-12);
    }

    #[test]
    fn zero_impedance_branch_is_rejected() {
        let case = parse_case(
            "mpc.baseMVA = 100;
mpc.bus = [
 1 3 0 0 0 0 1 1 0 1 1 1.1 0.9;
 2 1 0 0 0 0 1 1 0 1 1 1.1 0.9;
];
mpc.gen = [ 1 0 0 10 -10 1 100 1 50 0 0 0 0 0 0 0 0 0 0 0 0; ];
mpc.branch = [ 1 2 0 0 0 0 0 0 0 0 1 -360 360; ];
mpc.gencost = [ 2 0 0 3 0 1 0; ];",
        )
        .unwrap();
        assert!(matches!(
            to_per_unit(&case),
            Err(NetError::ZeroImpedanceBranch(0))
        ));
    }

    #[test]
    fn two_bus_split_shares_eight_entries() {
        let (net, spec) = two_bus();
        let dec = decompose(&net, &spec);
        assert_eq!(dec.cut_branches, vec![0]);
        assert_eq!(dec.shared.len(), 1);
        assert_eq!(dec.shared[0].entries.len(), 8);
        assert_eq!(dec.boundary_count(), 8);
        // both regions model the full branch and carry one fictitious bus
        assert_eq!(dec.region(1).branches, vec![0]);
        assert_eq!(dec.region(2).branches, vec![0]);
        assert_eq!(dec.region(1).fictitious, vec![1]);
        assert_eq!(dec.region(2).fictitious, vec![0]);
    }

    #[test]
    fn single_region_has_no_boundary() {
        let (net, _) = two_bus();
        let case_spec = PartitionSpec {
            region_count: 1,
            assignment: net.buses.iter().map(|b| (b.id, 1)).collect(),
        };
        let dec = decompose(&net, &case_spec);
        assert_eq!(dec.boundary_count(), 0);
        assert!(dec.cut_branches.is_empty());
        assert!(dec.shared.is_empty());
    }

    #[test]
    fn reassembly_reproduces_branch_and_gen_sets() {
        let (net, spec) = two_bus();
        let dec = decompose(&net, &spec);
        let mut branches: Vec<usize> = dec
            .regions
            .iter()
            .flat_map(|r| r.branches.iter().copied())
            .collect();
        branches.sort_unstable();
        branches.dedup();
        assert_eq!(branches, (0..net.branches.len()).collect::<Vec<_>>());
        let gens: Vec<usize> = dec.regions.iter().flat_map(|r| r.gens.iter().copied()).collect();
        assert_eq!(gens.len(), net.gens.len());
    }

    #[test]
    fn sample_loads_nominal_and_deterministic() {
        let (net, _) = two_bus();
        let env = LoadEnvelope::new(0.0);
        let a = sample_loads(&net, &env, 42);
        assert_eq!(a, LoadAssignment::nominal(&net));
        let env = LoadEnvelope::new(0.3);
        let b1 = sample_loads(&net, &env, 7);
        let b2 = sample_loads(&net, &env, 7);
        assert_eq!(b1, b2);
        assert_ne!(b1, sample_loads(&net, &env, 8));
    }

    #[test]
    fn sampled_factors_cover_envelope() {
        let (net, _) = two_bus();
        let env = LoadEnvelope::new(0.3);
        let mut min_u = f64::INFINITY;
        let mut max_u = f64::NEG_INFINITY;
        let mut sum = 0.0;
        let n = 10_000;
        for seed in 0..n {
            let a = sample_loads(&net, &env, seed);
            let u = a.pd[1] / net.buses[1].pd;
            min_u = min_u.min(u);
            max_u = max_u.max(u);
            sum += u;
        }
        assert!(min_u >= 0.7 && max_u <= 1.3);
        assert!((sum / n as f64 - 1.0).abs() < 0.01);
        // power factor preserved
        let a = sample_loads(&net, &env, 3);
        let up = a.pd[1] / net.buses[1].pd;
        let uq = a.qd[1] / net.buses[1].qd;
        assert!((up - uq).abs() < 1e-12);
    }
}
