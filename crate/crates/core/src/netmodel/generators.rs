//! Deterministic topology/config generators for the experiment shapes:
//! square grids of 4/9/16 switches and the 4-ary fat-tree of 20 switches.
//!
//! Generated configs do destination-based routing over a bounded "routed"
//! address block. The entry switch admits only the smaller production block,
//! so exit-side coverage is strictly wider than entry-side coverage; the gap
//! is the area probed first by the fuzzer. Per-switch chunk splitting gives
//! the path diversity the experiments need while keeping every path monotone
//! toward the exit.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use super::{Config, FlowRule, InPorts, Model, PortId, PortRef, RuleId, SwitchId, TableId, Topology};
use crate::headerspace::{HeaderSchema, HeaderSet};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GeneratorError {
    #[error("grid side {0} unsupported (2, 3 or 4)")]
    BadGridSide(u32),
    #[error("fat-tree arity {0} must be even")]
    OddArity(u32),
    #[error("fat-tree arity {0} unsupported (4)")]
    BadArity(u32),
    #[error("address layout does not fit the schema")]
    LayoutOverflow,
}

/// Address-block layout shared by all generators: a contiguous production
/// block (entry-switch coverage) followed by a contiguous sweep block that
/// only interior and exit switches route.
#[derive(Debug, Clone, Copy)]
pub struct SpaceLayout {
    pub schema: HeaderSchema,
    pub base: u32,
    pub production_size: u64,
    pub sweep_size: u64,
}

impl SpaceLayout {
    pub fn default_for(schema: HeaderSchema) -> SpaceLayout {
        let universe = schema.universe_size();
        if universe >= 1 << 14 {
            SpaceLayout {
                schema,
                base: (universe >> 4) as u32,
                production_size: 4096,
                sweep_size: 4096,
            }
        } else {
            SpaceLayout {
                schema,
                base: (universe / 8) as u32,
                production_size: universe / 4,
                sweep_size: universe / 4,
            }
        }
    }

    fn check(&self) -> Result<(), GeneratorError> {
        let end = self.base as u64 + self.production_size + self.sweep_size;
        if self.production_size == 0 || end > self.schema.universe_size() {
            return Err(GeneratorError::LayoutOverflow);
        }
        Ok(())
    }

    /// Entry-switch coverage; production traffic is drawn from here.
    pub fn production(&self) -> HeaderSet {
        let hi = self.base as u64 + self.production_size - 1;
        HeaderSet::from_range(self.schema, self.base, hi as u32).expect("checked layout")
    }

    /// Everything interior/exit switches route: production plus sweep.
    pub fn routed(&self) -> HeaderSet {
        let hi = self.base as u64 + self.production_size + self.sweep_size - 1;
        HeaderSet::from_range(self.schema, self.base, hi as u32).expect("checked layout")
    }

    pub fn sweep(&self) -> HeaderSet {
        self.routed().difference(&self.production()).expect("same schema")
    }
}

#[derive(Debug, Clone, Copy)]
pub struct GeneratorParams {
    pub seed: u64,
    /// Contiguous match chunks (= rules) per switch. The default keeps
    /// desk-scale test runs fast; raise toward 4096 for paper-shaped
    /// rule counts.
    pub chunks_per_switch: u32,
    pub layout: SpaceLayout,
}

impl GeneratorParams {
    pub fn new(seed: u64, schema: HeaderSchema) -> Self {
        GeneratorParams {
            seed,
            chunks_per_switch: 64,
            layout: SpaceLayout::default_for(schema),
        }
    }
}

/// Split a contiguous set into `n` contiguous chunks (sizes differ by at
/// most one). Panics on empty input; generators never pass empty sets.
fn chunk_ranges(space: &HeaderSet, n: u32) -> Vec<(u32, u32)> {
    let total = space.cardinality();
    assert!(total > 0, "cannot chunk an empty space");
    let n = (n as u64).min(total).max(1);
    let (lo, hi) = (space.runs()[0].0 as u64, space.runs().last().unwrap().1 as u64);
    debug_assert_eq!(hi - lo + 1, total, "generator spaces are contiguous");
    let mut out = Vec::with_capacity(n as usize);
    for i in 0..n {
        let start = lo + total * i / n;
        let end = lo + total * (i + 1) / n - 1;
        out.push((start as u32, end as u32));
    }
    out
}

struct RuleSink {
    rules: Vec<FlowRule>,
    next_id: u32,
}

impl RuleSink {
    fn new() -> Self {
        RuleSink { rules: Vec::new(), next_id: 1 }
    }

    fn chunked(
        &mut self,
        switch: SwitchId,
        space: &HeaderSet,
        chunks: u32,
        in_ports: InPorts,
        mut out_for_chunk: impl FnMut(usize) -> Vec<PortId>,
    ) {
        let schema = space.schema();
        for (i, (lo, hi)) in chunk_ranges(space, chunks).into_iter().enumerate() {
            let id = self.next_id;
            self.next_id += 1;
            self.rules.push(FlowRule {
                switch,
                table: TableId(0),
                rule: RuleId(id),
                priority: 10 + i as u32,
                in_ports: in_ports.clone(),
                matches: HeaderSet::from_range(schema, lo, hi).expect("chunk in schema"),
                out_ports: out_for_chunk(i),
                hidden: false,
            });
        }
    }
}

/// `n_side` x `n_side` grid. The top-left switch holds the source port, the
/// bottom-right the destination port; every path is monotone (east/south)
/// with exactly `2 * (n_side - 1)` inter-switch hops.
pub fn generate_grid(n_side: u32, params: &GeneratorParams) -> Result<Model, GeneratorError> {
    if !(2..=4).contains(&n_side) {
        return Err(GeneratorError::BadGridSide(n_side));
    }
    params.layout.check()?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed ^ 0x6772_6964);
    let n = n_side;
    let id = |r: u32, c: u32| SwitchId(r * n + c);
    const WEST: PortId = PortId(1);
    const EAST: PortId = PortId(2);
    const NORTH: PortId = PortId(3);
    const SOUTH: PortId = PortId(4);

    let mut topology = Topology::default();
    for r in 0..n {
        for c in 0..n {
            topology
                .switches
                .insert(id(r, c), [WEST, EAST, NORTH, SOUTH].into_iter().collect());
        }
    }
    for r in 0..n {
        for c in 0..n {
            if c + 1 < n {
                topology.links.push((
                    PortRef { switch: id(r, c), port: EAST },
                    PortRef { switch: id(r, c + 1), port: WEST },
                ));
            }
            if r + 1 < n {
                topology.links.push((
                    PortRef { switch: id(r, c), port: SOUTH },
                    PortRef { switch: id(r + 1, c), port: NORTH },
                ));
            }
        }
    }
    let source = PortRef { switch: id(0, 0), port: WEST };
    let dest = PortRef { switch: id(n - 1, n - 1), port: EAST };
    topology.sources.push(source);
    topology.destinations.push(dest);

    let production = params.layout.production();
    let routed = params.layout.routed();
    let mut sink = RuleSink::new();
    for r in 0..n {
        for c in 0..n {
            let switch = id(r, c);
            let space = if switch == source.switch { &production } else { &routed };
            let east = c + 1 < n;
            let south = r + 1 < n;
            let offset: usize = rng.gen_range(0..2);
            sink.chunked(switch, space, params.chunks_per_switch, InPorts::Any, |i| {
                if !east && !south {
                    vec![dest.port]
                } else if east && south {
                    // alternate next hops so both directions stay in use
                    if (i + offset) % 2 == 0 {
                        vec![EAST]
                    } else {
                        vec![SOUTH]
                    }
                } else if east {
                    vec![EAST]
                } else {
                    vec![SOUTH]
                }
            });
        }
    }

    Ok(Model::assemble(topology, Config { rules: sink.rules })
        .expect("generated grid must validate"))
}

/// 4-ary fat-tree: 8 top-of-rack, 8 aggregation, 4 core switches and 32
/// inter-switch links. The source sits on a pod-0 ToR host port and the
/// destination on a pod-2 ToR host port. Upward chunks split across both
/// aggregation switches and both core uplinks; half the routed block takes
/// the direct 4-hop path down, the other half detours via the neighbor ToR
/// for a maximum path length of 6.
pub fn generate_fattree(k: u32, params: &GeneratorParams) -> Result<Model, GeneratorError> {
    if k % 2 != 0 {
        return Err(GeneratorError::OddArity(k));
    }
    if k != 4 {
        return Err(GeneratorError::BadArity(k));
    }
    params.layout.check()?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed ^ 0x6661_7474);

    let core = |i: u32, j: u32| SwitchId(i * 2 + j);
    let agg = |pod: u32, a: u32| SwitchId(4 + pod * 2 + a);
    let tor = |pod: u32, t: u32| SwitchId(12 + pod * 2 + t);
    // ToR ports: 1,2 up to aggs; 3 host.
    // Agg ports: 1,2 down to ToRs; 3,4 up to cores.
    // Core ports: 1..=4 down to pods 0..=3.
    const HOST: PortId = PortId(3);

    let mut topology = Topology::default();
    for i in 0..2 {
        for j in 0..2 {
            topology.switches.insert(core(i, j), (1..=4).map(PortId).collect());
        }
    }
    for pod in 0..4 {
        for x in 0..2 {
            topology.switches.insert(agg(pod, x), (1..=4).map(PortId).collect());
            topology.switches.insert(tor(pod, x), (1..=3).map(PortId).collect());
        }
    }
    for pod in 0..4 {
        for t in 0..2 {
            for a in 0..2 {
                topology.links.push((
                    PortRef { switch: tor(pod, t), port: PortId(1 + a) },
                    PortRef { switch: agg(pod, a), port: PortId(1 + t) },
                ));
            }
        }
        for a in 0..2 {
            for i in 0..2 {
                topology.links.push((
                    PortRef { switch: agg(pod, a), port: PortId(3 + i) },
                    PortRef { switch: core(i, a), port: PortId(1 + pod) },
                ));
            }
        }
    }
    let src_pod = 0;
    let dst_pod = 2;
    let source = PortRef { switch: tor(src_pod, 0), port: HOST };
    let dest = PortRef { switch: tor(dst_pod, 0), port: HOST };
    topology.sources.push(source);
    topology.destinations.push(dest);

    let production = params.layout.production();
    let routed = params.layout.routed();
    // Lower half of the routed block goes straight down in the
    // destination pod; the upper half detours through the neighbor ToR.
    let (rlo, rhi) = (routed.runs()[0].0 as u64, routed.runs()[0].1 as u64);
    let mid = (rlo + (rhi - rlo) / 2) as u32;
    let direct = HeaderSet::from_range(params.layout.schema, rlo as u32, mid).unwrap();

    let mut sink = RuleSink::new();
    let offset: usize = rng.gen_range(0..2);
    // Source ToR: split production chunks across both aggregation uplinks.
    sink.chunked(tor(src_pod, 0), &production, params.chunks_per_switch, InPorts::Any, |i| {
        vec![PortId(1 + ((i + offset) % 2) as u32)]
    });
    // Source pod aggs: split across both core uplinks.
    for a in 0..2 {
        let offset: usize = rng.gen_range(0..2);
        sink.chunked(agg(src_pod, a), &routed, params.chunks_per_switch, InPorts::Any, |i| {
            vec![PortId(3 + ((i + offset) % 2) as u32)]
        });
    }
    // Cores: everything toward the destination pod.
    for i in 0..2 {
        for j in 0..2 {
            sink.chunked(core(i, j), &routed, params.chunks_per_switch, InPorts::Any, |_| {
                vec![PortId(1 + dst_pod)]
            });
        }
    }
    // Destination pod aggs. Traffic from the cores follows the
    // direct/detour split; traffic bounced back up by the neighbor ToR
    // always goes straight to the destination ToR.
    for a in 0..2 {
        let direct = direct.clone();
        sink.chunked(
            agg(dst_pod, a),
            &routed,
            params.chunks_per_switch,
            InPorts::These(vec![PortId(3), PortId(4)]),
            |_| vec![PortId(1)],
        );
        // overwrite chunk outputs for the detour half
        let start = sink.rules.len() - params.chunks_per_switch.min(routed.cardinality() as u32) as usize;
        for rule in &mut sink.rules[start..] {
            if rule.matches.is_disjoint(&direct).unwrap() {
                rule.out_ports = vec![PortId(2)];
            }
        }
        sink.chunked(
            agg(dst_pod, a),
            &routed,
            params.chunks_per_switch,
            InPorts::These(vec![PortId(2)]),
            |_| vec![PortId(1)],
        );
    }
    // Neighbor ToR bounces the detour half back up, alternating aggs.
    let detour = routed.difference(&direct).unwrap();
    let offset: usize = rng.gen_range(0..2);
    sink.chunked(tor(dst_pod, 1), &detour, params.chunks_per_switch, InPorts::Any, |i| {
        vec![PortId(1 + ((i + offset) % 2) as u32)]
    });
    // Destination ToR delivers everything to its host port.
    sink.chunked(tor(dst_pod, 0), &routed, params.chunks_per_switch, InPorts::Any, |_| vec![dest.port]);

    Ok(Model::assemble(topology, Config { rules: sink.rules })
        .expect("generated fat-tree must validate"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::{BTreeSet, HashMap};

    fn params(seed: u64) -> GeneratorParams {
        GeneratorParams::new(seed, HeaderSchema::IPV4_DST)
    }

    /// Enumerate all simple switch paths source -> destination in the
    /// physical topology (oracle for shape assertions).
    fn topology_paths(model: &Model) -> Vec<Vec<SwitchId>> {
        let mut adjacency: HashMap<SwitchId, BTreeSet<SwitchId>> = HashMap::new();
        for &(a, b) in &model.topology.links {
            adjacency.entry(a.switch).or_default().insert(b.switch);
            adjacency.entry(b.switch).or_default().insert(a.switch);
        }
        let start = model.topology.sources[0].switch;
        let goal = model.topology.destinations[0].switch;
        let mut paths = Vec::new();
        let mut stack = vec![start];
        fn dfs(
            at: SwitchId,
            goal: SwitchId,
            adjacency: &HashMap<SwitchId, BTreeSet<SwitchId>>,
            stack: &mut Vec<SwitchId>,
            paths: &mut Vec<Vec<SwitchId>>,
        ) {
            if at == goal {
                paths.push(stack.clone());
                return;
            }
            if let Some(next) = adjacency.get(&at) {
                for &n in next {
                    if !stack.contains(&n) {
                        stack.push(n);
                        dfs(n, goal, adjacency, stack, paths);
                        stack.pop();
                    }
                }
            }
        }
        dfs(start, goal, &adjacency, &mut stack, &mut paths);
        paths
    }

    #[test]
    fn grid_shapes_match_expectations() {
        for (side, switches, path_len) in [(2u32, 4usize, 2usize), (3, 9, 4), (4, 16, 6)] {
            let model = generate_grid(side, &params(11)).unwrap();
            assert_eq!(model.topology.switch_count(), switches);
            // shortest monotone path length (in links) equals 2*(side-1)
            let shortest = topology_paths(&model).iter().map(|p| p.len() - 1).min().unwrap();
            assert_eq!(shortest, path_len);
            for rule in &model.config.rules {
                assert!(!rule.matches.is_empty());
            }
        }
        assert_eq!(generate_grid(5, &params(0)).unwrap_err(), GeneratorError::BadGridSide(5));
    }

    #[test]
    fn grid_generation_is_deterministic() {
        let a = generate_grid(3, &params(123)).unwrap();
        let b = generate_grid(3, &params(123)).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        let c = generate_grid(3, &params(124)).unwrap();
        assert_ne!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&c).unwrap());
    }

    #[test]
    fn fattree_shape() {
        let model = generate_fattree(4, &params(5)).unwrap();
        assert_eq!(model.topology.switch_count(), 20);
        // fat-tree combinatorics: 32 inter-switch links for k=4
        assert_eq!(model.topology.links.len(), 32);
        assert_eq!(generate_fattree(5, &params(0)).unwrap_err(), GeneratorError::OddArity(5));

        // ToR-to-ToR multipath: paths through at least two distinct cores
        // exist between the designated pair.
        let paths = topology_paths(&model);
        let cores: BTreeSet<SwitchId> = paths
            .iter()
            .flat_map(|p| p.iter().copied().filter(|s| s.0 < 4))
            .collect();
        assert!(cores.len() >= 2, "paths must cross at least two distinct cores");
    }

    #[test]
    fn fattree_rule_paths_use_multiple_cores() {
        // Config-level check: chunks from the source ToR fan out over both
        // aggs and, one hop further, over more than one core.
        let model = generate_fattree(4, &params(9)).unwrap();
        let src = model.topology.sources[0].switch;
        let ups: BTreeSet<u32> = model
            .config
            .rules
            .iter()
            .filter(|r| r.switch == src)
            .map(|r| r.out_ports[0].0)
            .collect();
        assert_eq!(ups, BTreeSet::from([1, 2]));
    }

    #[test]
    fn layout_partition() {
        let layout = SpaceLayout::default_for(HeaderSchema::IPV4_DST);
        let p = layout.production();
        let s = layout.sweep();
        assert!(p.is_disjoint(&s).unwrap());
        assert_eq!(p.union(&s).unwrap(), layout.routed());
        assert_eq!(p.cardinality(), 4096);
        assert_eq!(s.cardinality(), 4096);
    }
}
