//! Partition files: assignment of buses to regions, plus a deterministic
//! fallback partitioner for cases without a user-authored partition.

use super::matpower::RawCase;
use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt::Write as _;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PartitionError {
    #[error("line {0}: expected `bus_id region_id`")]
    Malformed(usize),
    #[error("bus {0} assigned more than once")]
    DuplicateAssignment(i64),
    #[error("bus {0} is not assigned to any region")]
    UnassignedBus(i64),
    #[error("region {0} is empty")]
    EmptyRegion(usize),
    #[error("partition references unknown bus id {0}")]
    UnknownBusId(i64),
    #[error("region count must be at least 1")]
    NoRegions,
}

/// Assignment of buses to regions 1..=M.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartitionSpec {
    pub region_count: usize,
    /// bus id -> region id (1-based)
    pub assignment: BTreeMap<i64, usize>,
}

impl PartitionSpec {
    pub fn region_of(&self, bus: i64) -> usize {
        self.assignment[&bus]
    }

    /// Buses of one region, ascending by id.
    pub fn buses_in(&self, region: usize) -> Vec<i64> {
        self.assignment
            .iter()
            .filter(|(_, &r)| r == region)
            .map(|(&b, _)| b)
            .collect()
    }

    /// Warns (by returning region ids) when region subgraphs are disconnected.
    pub fn disconnected_regions(&self, case: &RawCase) -> Vec<usize> {
        let mut out = Vec::new();
        for region in 1..=self.region_count {
            let members: BTreeSet<i64> = self.buses_in(region).into_iter().collect();
            if members.is_empty() {
                continue;
            }
            let mut seen = BTreeSet::new();
            let mut queue = VecDeque::new();
            let first = *members.iter().next().unwrap();
            seen.insert(first);
            queue.push_back(first);
            while let Some(u) = queue.pop_front() {
                for br in &case.branches {
                    let other = if br.from == u {
                        br.to
                    } else if br.to == u {
                        br.from
                    } else {
                        continue;
                    };
                    if members.contains(&other) && seen.insert(other) {
                        queue.push_back(other);
                    }
                }
            }
            if seen.len() != members.len() {
                out.push(region);
            }
        }
        out
    }
}

/// Parses `bus_id region_id` lines; `#` starts a comment.
pub fn parse_partition(text: &str, case: &RawCase) -> Result<PartitionSpec, PartitionError> {
    let mut assignment = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = match raw.find('#') {
            Some(p) => &raw[..p],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let mut it = line.split_whitespace();
        let bus: i64 = it
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or(PartitionError::Malformed(lineno + 1))?;
        let region: usize = it
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or(PartitionError::Malformed(lineno + 1))?;
        if it.next().is_some() || region == 0 {
            return Err(PartitionError::Malformed(lineno + 1));
        }
        if case.bus_index(bus).is_none() {
            return Err(PartitionError::UnknownBusId(bus));
        }
        if assignment.insert(bus, region).is_some() {
            return Err(PartitionError::DuplicateAssignment(bus));
        }
    }
    for b in &case.buses {
        if !assignment.contains_key(&b.id) {
            return Err(PartitionError::UnassignedBus(b.id));
        }
    }
    let region_count = assignment.values().copied().max().ok_or(PartitionError::NoRegions)?;
    for r in 1..=region_count {
        if !assignment.values().any(|&v| v == r) {
            return Err(PartitionError::EmptyRegion(r));
        }
    }
    Ok(PartitionSpec {
        region_count,
        assignment,
    })
}

/// Serializes a partition in the `bus_id region_id` format.
pub fn write_partition(spec: &PartitionSpec) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# bus_id region_id");
    for (bus, region) in &spec.assignment {
        let _ = writeln!(s, "{bus} {region}");
    }
    s
}

/// Deterministic fallback partitioner: breadth-first growth from the k
/// highest-degree buses (ties broken by lowest id), balancing region sizes
/// by always extending the currently smallest region.
pub fn fallback_partition(case: &RawCase, regions: usize) -> Result<PartitionSpec, PartitionError> {
    if regions == 0 {
        return Err(PartitionError::NoRegions);
    }
    let ids: Vec<i64> = case.buses.iter().map(|b| b.id).collect();
    if regions > ids.len() {
        return Err(PartitionError::EmptyRegion(ids.len() + 1));
    }
    let mut adj: BTreeMap<i64, Vec<i64>> = ids.iter().map(|&i| (i, Vec::new())).collect();
    for br in &case.branches {
        adj.get_mut(&br.from).unwrap().push(br.to);
        adj.get_mut(&br.to).unwrap().push(br.from);
    }
    for l in adj.values_mut() {
        l.sort_unstable();
        l.dedup();
    }
    // seeds: k highest-degree buses, ties by lowest id
    let mut by_degree: Vec<i64> = ids.clone();
    by_degree.sort_by_key(|&b| (std::cmp::Reverse(adj[&b].len()), b));
    let seeds: Vec<i64> = by_degree.into_iter().take(regions).collect();

    let mut assignment: BTreeMap<i64, usize> = BTreeMap::new();
    let mut frontiers: Vec<VecDeque<i64>> = vec![VecDeque::new(); regions];
    let mut sizes = vec![0usize; regions];
    for (r, &s) in seeds.iter().enumerate() {
        assignment.insert(s, r + 1);
        frontiers[r].push_back(s);
        sizes[r] += 1;
    }
    loop {
        // pick the smallest region that can still grow
        let mut grew = false;
        let mut order: Vec<usize> = (0..regions).collect();
        order.sort_by_key(|&r| (sizes[r], r));
        'regions: for &r in &order {
            while let Some(&u) = frontiers[r].front() {
                let next = adj[&u]
                    .iter()
                    .copied()
                    .find(|v| !assignment.contains_key(v));
                match next {
                    Some(v) => {
                        assignment.insert(v, r + 1);
                        frontiers[r].push_back(v);
                        sizes[r] += 1;
                        grew = true;
                        break 'regions;
                    }
                    None => {
                        frontiers[r].pop_front();
                    }
                }
            }
        }
        if !grew {
            break;
        }
    }
    // isolated buses (no path from any seed) join region 1
    for &b in &ids {
        assignment.entry(b).or_insert(1);
    }
    Ok(PartitionSpec {
        region_count: regions,
        assignment,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::caseio::parse_case;

    fn two_bus_case() -> RawCase {
        parse_case(
            "mpc.baseMVA = 100;
mpc.bus = [
 1 3 0 0 0 0 1 1 0 138 1 1.1 0.9;
 2 1 50 10 0 0 1 1 0 138 1 1.1 0.9;
];
mpc.gen = [
 1 60 0 30 -30 1 100 1 100 0 0 0 0 0 0 0 0 0 0 0 0;
];
mpc.branch = [
 1 2 0.01 0.1 0 0 0 0 0 0 1 -360 360;
];
mpc.gencost = [
 2 0 0 3 0.1 20 0;
];",
        )
        .unwrap()
    }

    #[test]
    fn parses_simple_listing() {
        let case = two_bus_case();
        let spec = parse_partition("# comment\n1 1\n2 2\n", &case).unwrap();
        assert_eq!(spec.region_count, 2);
        assert_eq!(spec.region_of(1), 1);
        assert_eq!(spec.region_of(2), 2);
    }

    #[test]
    fn single_region_is_valid() {
        let case = two_bus_case();
        let spec = parse_partition("1 1\n2 1\n", &case).unwrap();
        assert_eq!(spec.region_count, 1);
    }

    #[test]
    fn missing_bus_is_rejected() {
        let case = two_bus_case();
        assert!(matches!(
            parse_partition("1 1\n", &case),
            Err(PartitionError::UnassignedBus(2))
        ));
    }

    #[test]
    fn unknown_bus_is_rejected() {
        let case = two_bus_case();
        assert!(matches!(
            parse_partition("1 1\n2 1\n9 1\n", &case),
            Err(PartitionError::UnknownBusId(9))
        ));
    }

    #[test]
    fn empty_region_is_rejected() {
        let case = two_bus_case();
        assert!(matches!(
            parse_partition("1 1\n2 3\n", &case),
            Err(PartitionError::EmptyRegion(2))
        ));
    }

    #[test]
    fn fallback_covers_every_bus_once() {
        let case = two_bus_case();
        let spec = fallback_partition(&case, 2).unwrap();
        assert_eq!(spec.assignment.len(), 2);
        assert_eq!(spec.region_count, 2);
    }

    #[test]
    fn partition_roundtrip() {
        let case = two_bus_case();
        let spec = fallback_partition(&case, 2).unwrap();
        let back = parse_partition(&write_partition(&spec), &case).unwrap();
        assert_eq!(spec, back);
    }
}
