//! Topology, flow-table configuration, generators, and fault injection.
//!
//! Model objects are immutable after load/generation and safe to share
//! across workers. The generators are deterministic given a seed.

mod faults;
mod format;
mod generators;

pub use faults::{inject_fault, FaultError, FaultKind, FaultSpec, GroundTruth};
pub use format::{load_model, load_rules, load_topology, save_model, ModelParseError};
pub use generators::{generate_fattree, generate_grid, GeneratorParams, SpaceLayout};

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::headerspace::{HeaderSchema, HeaderSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SwitchId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PortId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TableId(pub u16);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RuleId(pub u32);

impl fmt::Display for SwitchId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "S{}", self.0)
    }
}

/// A (switch, port) endpoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PortRef {
    pub switch: SwitchId,
    pub port: PortId,
}

impl PortRef {
    pub fn new(switch: u32, port: u32) -> Self {
        PortRef { switch: SwitchId(switch), port: PortId(port) }
    }
}

impl fmt::Display for PortRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "S{}:{}", self.switch.0, self.port.0)
    }
}

/// Which inports a rule applies to. `Any` is the common wildcard.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum InPorts {
    Any,
    These(Vec<PortId>),
}

impl InPorts {
    pub fn matches(&self, port: PortId) -> bool {
        match self {
            InPorts::Any => true,
            InPorts::These(ports) => ports.contains(&port),
        }
    }
}

/// One flow-table entry. Larger priority wins; priority ties break toward
/// the lower rule id. An empty `out_ports` list is an explicit drop rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowRule {
    pub switch: SwitchId,
    pub table: TableId,
    pub rule: RuleId,
    pub priority: u32,
    pub in_ports: InPorts,
    pub matches: HeaderSet,
    pub out_ports: Vec<PortId>,
    /// Injected data-plane-only rules the control plane never sees.
    pub hidden: bool,
}

impl FlowRule {
    pub fn key(&self) -> (SwitchId, TableId, RuleId) {
        (self.switch, self.table, self.rule)
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Topology {
    pub switches: BTreeMap<SwitchId, BTreeSet<PortId>>,
    pub links: Vec<(PortRef, PortRef)>,
    pub sources: Vec<PortRef>,
    pub destinations: Vec<PortRef>,
}

impl Topology {
    pub fn switch_count(&self) -> usize {
        self.switches.len()
    }

    pub fn has_port(&self, p: PortRef) -> bool {
        self.switches.get(&p.switch).map(|ports| ports.contains(&p.port)).unwrap_or(false)
    }

    /// Peer endpoint of a linked port, if any.
    pub fn peer(&self, p: PortRef) -> Option<PortRef> {
        for &(a, b) in &self.links {
            if a == p {
                return Some(b);
            }
            if b == p {
                return Some(a);
            }
        }
        None
    }

    /// Build the link lookup once; O(1) per hop afterwards.
    pub fn link_map(&self) -> HashMap<PortRef, PortRef> {
        let mut map = HashMap::with_capacity(self.links.len() * 2);
        for &(a, b) in &self.links {
            map.insert(a, b);
            map.insert(b, a);
        }
        map
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let mut seen: BTreeSet<PortRef> = BTreeSet::new();
        for &(a, b) in &self.links {
            for p in [a, b] {
                if !self.has_port(p) {
                    return Err(ModelError::DanglingLinkEndpoint(p));
                }
                if !seen.insert(p) {
                    return Err(ModelError::PortDoubleLinked(p));
                }
            }
        }
        for &p in self.sources.iter().chain(self.destinations.iter()) {
            if !self.has_port(p) {
                return Err(ModelError::UnknownEdgePort(p));
            }
            if seen.contains(&p) {
                return Err(ModelError::EdgePortLinked(p));
            }
        }
        if !self.is_connected() {
            return Err(ModelError::Disconnected);
        }
        Ok(())
    }

    fn is_connected(&self) -> bool {
        let Some(&start) = self.switches.keys().next() else { return true };
        let mut adjacency: HashMap<SwitchId, Vec<SwitchId>> = HashMap::new();
        for &(a, b) in &self.links {
            adjacency.entry(a.switch).or_default().push(b.switch);
            adjacency.entry(b.switch).or_default().push(a.switch);
        }
        let mut visited = BTreeSet::new();
        let mut stack = vec![start];
        while let Some(s) = stack.pop() {
            if !visited.insert(s) {
                continue;
            }
            if let Some(next) = adjacency.get(&s) {
                stack.extend(next.iter().copied());
            }
        }
        visited.len() == self.switches.len()
    }
}

/// The full rule set of a network. Hidden rules exist only in the data
/// plane; [`Config::visible`] is the control plane's view.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Config {
    pub rules: Vec<FlowRule>,
}

impl Config {
    pub fn visible(&self) -> Config {
        Config { rules: self.rules.iter().filter(|r| !r.hidden).cloned().collect() }
    }

    pub fn schema(&self) -> Option<HeaderSchema> {
        self.rules.first().map(|r| r.matches.schema())
    }

    pub fn find(&self, switch: SwitchId, table: TableId, rule: RuleId) -> Option<&FlowRule> {
        self.rules.iter().find(|r| r.key() == (switch, table, rule))
    }

    pub fn max_priority(&self, switch: SwitchId) -> u32 {
        self.rules.iter().filter(|r| r.switch == switch).map(|r| r.priority).max().unwrap_or(0)
    }

    pub fn validate(&self, topology: &Topology) -> Result<(), ModelError> {
        let mut keys = BTreeSet::new();
        let schema = self.schema();
        for rule in &self.rules {
            if !keys.insert(rule.key()) {
                return Err(ModelError::DuplicateRule {
                    switch: rule.switch,
                    table: rule.table,
                    rule: rule.rule,
                });
            }
            if !topology.switches.contains_key(&rule.switch) {
                return Err(ModelError::UnknownSwitch(rule.switch));
            }
            if let InPorts::These(ports) = &rule.in_ports {
                for &p in ports {
                    if !topology.has_port(PortRef { switch: rule.switch, port: p }) {
                        return Err(ModelError::UnknownRulePort { rule: rule.key(), port: p });
                    }
                }
            }
            for &p in &rule.out_ports {
                if !topology.has_port(PortRef { switch: rule.switch, port: p }) {
                    return Err(ModelError::UnknownRulePort { rule: rule.key(), port: p });
                }
            }
            if Some(rule.matches.schema()) != schema {
                return Err(ModelError::MixedSchemas);
            }
            if rule.matches.is_empty() {
                return Err(ModelError::EmptyMatch(rule.key()));
            }
        }
        Ok(())
    }
}

/// A validated topology + configuration pair.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Model {
    pub topology: Topology,
    pub config: Config,
    pub schema: HeaderSchema,
}

impl Model {
    pub fn assemble(topology: Topology, config: Config) -> Result<Model, ModelError> {
        topology.validate()?;
        config.validate(&topology)?;
        let schema = config.schema().ok_or(ModelError::NoRules)?;
        Ok(Model { topology, config, schema })
    }

    /// Control-plane view: same topology, hidden rules removed.
    pub fn visible(&self) -> Model {
        Model { topology: self.topology.clone(), config: self.config.visible(), schema: self.schema }
    }
}

/// Select the winning rule among candidates that match `(inport, header)`:
/// highest priority, ties broken by lowest rule id. Returns the winner and
/// whether a priority tie was broken (callers log the documented warning).
pub fn select_rule<'a>(
    rules: impl Iterator<Item = &'a FlowRule>,
    inport: PortId,
    header: u32,
) -> (Option<&'a FlowRule>, bool) {
    let mut best: Option<&FlowRule> = None;
    let mut tie = false;
    for rule in rules {
        if !rule.in_ports.matches(inport) || !rule.matches.contains(header) {
            continue;
        }
        match best {
            None => best = Some(rule),
            Some(current) => {
                if rule.priority > current.priority {
                    best = Some(rule);
                    tie = false;
                } else if rule.priority == current.priority {
                    tie = true;
                    if rule.rule < current.rule {
                        best = Some(rule);
                    }
                }
            }
        }
    }
    (best, tie)
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ModelError {
    #[error("link endpoint {0} does not exist")]
    DanglingLinkEndpoint(PortRef),
    #[error("port {0} appears in more than one link")]
    PortDoubleLinked(PortRef),
    #[error("designated edge port {0} does not exist")]
    UnknownEdgePort(PortRef),
    #[error("designated edge port {0} is attached to a link")]
    EdgePortLinked(PortRef),
    #[error("topology is not connected")]
    Disconnected,
    #[error("duplicate rule ({switch}, table {}, rule {})", table.0, rule.0)]
    DuplicateRule { switch: SwitchId, table: TableId, rule: RuleId },
    #[error("rule references unknown switch {0}")]
    UnknownSwitch(SwitchId),
    #[error("rule ({}, t{}, r{}) references port {} not on the switch", rule.0, rule.1 .0, rule.2 .0, port.0)]
    UnknownRulePort { rule: (SwitchId, TableId, RuleId), port: PortId },
    #[error("rules mix different header schemas")]
    MixedSchemas,
    #[error("rule ({}, t{}, r{}) has an empty match", .0 .0, .0 .1 .0, .0 .2 .0)]
    EmptyMatch((SwitchId, TableId, RuleId)),
    #[error("config contains no rules")]
    NoRules,
}

impl fmt::Display for PortId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Union of the matches of all visible non-drop rules a switch exposes at
/// one inport. This is the locally-computable coverage used to validate
/// fault disjointness before any graph is built.
pub fn local_coverage(config: &Config, at: PortRef, schema: HeaderSchema) -> HeaderSet {
    let mut cover = HeaderSet::empty(schema);
    for rule in &config.rules {
        if rule.hidden || rule.switch != at.switch || rule.out_ports.is_empty() {
            continue;
        }
        if !rule.in_ports.matches(at.port) {
            continue;
        }
        cover = cover.union(&rule.matches).expect("same schema");
    }
    cover
}
