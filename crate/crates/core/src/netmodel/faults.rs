//! Data-plane fault injection with ground-truth records.
//!
//! Faults mutate only the data-plane rule set; callers capture the
//! control-plane view (`Config::visible`) before injecting so that the
//! control plane stays unaware of every fault.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{local_coverage, Config, FlowRule, RuleId, SwitchId, TableId, Topology};
use crate::headerspace::HeaderSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FaultKind {
    /// Match-part anomaly of an existing rule (e.g. a bitflip widening
    /// the matched block). Exercised by production traffic.
    TypePMatch,
    /// Action-part anomaly: the matched rule forwards out a wrong port.
    TypePAction,
    /// Hidden high-priority rule admitting traffic outside the
    /// control-plane-known coverage. Exercised by probe traffic only.
    TypeAHidden,
}

impl FaultKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            FaultKind::TypePMatch => "type-p-match",
            FaultKind::TypePAction => "type-p-action",
            FaultKind::TypeAHidden => "type-a-hidden",
        }
    }
}

/// A fully resolved fault: the mutated or inserted rule plus the header
/// region whose forwarding it changes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FaultSpec {
    pub kind: FaultKind,
    pub target: SwitchId,
    /// For the Type-p kinds this replaces the existing rule with the same
    /// (switch, table, rule) key; for Type-a it is inserted as hidden.
    pub rule: FlowRule,
    pub affected: HeaderSet,
    /// Whether affected headers take a different switch path (as opposed
    /// to only matching a different rule on the same path).
    pub path_changing: bool,
}

/// What the harness scores verdicts against.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroundTruth {
    pub kind: FaultKind,
    pub switch: SwitchId,
    pub affected: HeaderSet,
    pub path_changing: bool,
    pub rule_key: (SwitchId, TableId, RuleId),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FaultError {
    #[error("target switch {0} does not exist")]
    UnknownSwitch(SwitchId),
    #[error("rule ({}, t{}, r{}) not found", .0 .0, .0 .1 .0, .0 .2 .0)]
    RuleNotFound((SwitchId, TableId, RuleId)),
    #[error("hidden rule region overlaps control-plane coverage at entry {0}")]
    OverlapsCoveredSpace(super::PortRef),
    #[error("type-p fault does not intersect the production header space")]
    OutsideProductionSpace,
    #[error("fault rule is inconsistent with its kind")]
    Malformed,
}

/// Apply one fault to `config`, returning the mutated data-plane config and
/// the ground-truth record. `config` must be the pre-fault rule set (or the
/// result of earlier injections); the caller keeps the pre-fault visible
/// view for the control plane.
pub fn inject_fault(
    config: &Config,
    topology: &Topology,
    spec: &FaultSpec,
) -> Result<(Config, GroundTruth), FaultError> {
    if !topology.switches.contains_key(&spec.target) {
        return Err(FaultError::UnknownSwitch(spec.target));
    }
    if spec.rule.switch != spec.target {
        return Err(FaultError::Malformed);
    }
    let schema = spec.affected.schema();
    let mut mutated = config.clone();
    match spec.kind {
        FaultKind::TypeAHidden => {
            if !spec.rule.hidden {
                return Err(FaultError::Malformed);
            }
            // Hidden-rule regions must be invisible to production traffic:
            // disjoint from the entry coverage at every designated source.
            for &src in &topology.sources {
                let covered = local_coverage(config, src, schema);
                if !spec.affected.is_disjoint(&covered).expect("same schema") {
                    return Err(FaultError::OverlapsCoveredSpace(src));
                }
            }
            mutated.rules.push(spec.rule.clone());
        }
        FaultKind::TypePMatch | FaultKind::TypePAction => {
            let covered_anywhere = topology
                .sources
                .iter()
                .map(|&src| local_coverage(config, src, schema))
                .reduce(|a, b| a.union(&b).expect("same schema"))
                .unwrap_or_else(|| HeaderSet::empty(schema));
            if spec.affected.is_disjoint(&covered_anywhere).expect("same schema") {
                return Err(FaultError::OutsideProductionSpace);
            }
            let key = spec.rule.key();
            let slot = mutated
                .rules
                .iter_mut()
                .find(|r| r.key() == key)
                .ok_or(FaultError::RuleNotFound(key))?;
            *slot = spec.rule.clone();
        }
    }
    let truth = GroundTruth {
        kind: spec.kind,
        switch: spec.target,
        affected: spec.affected.clone(),
        path_changing: spec.path_changing,
        rule_key: spec.rule.key(),
    };
    Ok((mutated, truth))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::headerspace::{HeaderSchema, HeaderSet};
    use crate::netmodel::{InPorts, PortId, PortRef};

    fn schema() -> HeaderSchema {
        HeaderSchema::IPV4_DST
    }

    fn ip(text: &str) -> u32 {
        let set = HeaderSet::parse(schema(), text).unwrap();
        set.iter().next().unwrap()
    }

    fn base_model() -> (Topology, Config) {
        let mut topology = Topology::default();
        topology.switches.insert(SwitchId(0), [PortId(1), PortId(2), PortId(4)].into_iter().collect());
        topology.switches.insert(SwitchId(1), [PortId(1), PortId(2)].into_iter().collect());
        topology.links.push((PortRef::new(0, 2), PortRef::new(1, 1)));
        topology.sources.push(PortRef::new(0, 1));
        topology.destinations.push(PortRef::new(1, 2));
        let rules = vec![
            FlowRule {
                switch: SwitchId(0),
                table: TableId(0),
                rule: RuleId(1),
                priority: 100,
                in_ports: InPorts::Any,
                matches: HeaderSet::parse(schema(), "10.1.1.0/28").unwrap(),
                out_ports: vec![PortId(2)],
                hidden: false,
            },
            FlowRule {
                switch: SwitchId(0),
                table: TableId(0),
                rule: RuleId(4),
                priority: 10,
                in_ports: InPorts::Any,
                matches: HeaderSet::parse(schema(), "10.1.1.0/24").unwrap(),
                out_ports: vec![PortId(2)],
                hidden: false,
            },
            FlowRule {
                switch: SwitchId(1),
                table: TableId(0),
                rule: RuleId(1),
                priority: 10,
                in_ports: InPorts::Any,
                matches: HeaderSet::parse(schema(), "10.1.1.0/24").unwrap(),
                out_ports: vec![PortId(2)],
                hidden: false,
            },
        ];
        (topology, Config { rules })
    }

    #[test]
    fn match_widening_fault() {
        // bitflip widening 10.1.1.0/28 to 10.1.1.0-10.1.1.79: 64 newly
        // matched headers now follow the high-priority rule
        let (topology, config) = base_model();
        let mut mutated_rule = config.rules[0].clone();
        mutated_rule.matches = HeaderSet::parse(schema(), "10.1.1.0-10.1.1.79").unwrap();
        let affected = mutated_rule
            .matches
            .difference(&config.rules[0].matches)
            .unwrap();
        assert_eq!(affected.cardinality(), 64);
        let spec = FaultSpec {
            kind: FaultKind::TypePMatch,
            target: SwitchId(0),
            rule: mutated_rule,
            affected,
            path_changing: false,
        };
        let (mutated, truth) = inject_fault(&config, &topology, &spec).unwrap();
        let dataplane_rule = mutated.find(SwitchId(0), TableId(0), RuleId(1)).unwrap();
        assert_eq!(dataplane_rule.matches.cardinality(), 80);
        // the control plane view built from the pre-fault config is unchanged
        assert_eq!(
            config.visible().find(SwitchId(0), TableId(0), RuleId(1)).unwrap().matches.cardinality(),
            16
        );
        assert_eq!(truth.kind, FaultKind::TypePMatch);
        assert!(truth.affected.contains(ip("10.1.1.66")));
    }

    #[test]
    fn action_flip_keeps_rule_identity() {
        let (topology, config) = base_model();
        let mut mutated_rule = config.rules[0].clone();
        mutated_rule.out_ports = vec![PortId(4)];
        let spec = FaultSpec {
            kind: FaultKind::TypePAction,
            target: SwitchId(0),
            rule: mutated_rule.clone(),
            affected: mutated_rule.matches.clone(),
            path_changing: true,
        };
        let (mutated, _) = inject_fault(&config, &topology, &spec).unwrap();
        let rule = mutated.find(SwitchId(0), TableId(0), RuleId(1)).unwrap();
        assert_eq!(rule.out_ports, vec![PortId(4)]);
        assert_eq!(rule.rule, RuleId(1));
        assert_eq!(rule.matches, config.rules[0].matches);
    }

    #[test]
    fn hidden_rule_must_avoid_covered_space() {
        let (topology, config) = base_model();
        let hidden = FlowRule {
            switch: SwitchId(0),
            table: TableId(0),
            rule: RuleId(99),
            priority: 1000,
            in_ports: InPorts::Any,
            matches: HeaderSet::parse(schema(), "10.1.1.31").unwrap(),
            out_ports: vec![PortId(4)],
            hidden: true,
        };
        let spec = FaultSpec {
            kind: FaultKind::TypeAHidden,
            target: SwitchId(0),
            rule: hidden.clone(),
            affected: hidden.matches.clone(),
            path_changing: true,
        };
        // 10.1.1.31 is inside covered space -> invalid type-a fault
        assert_eq!(
            inject_fault(&config, &topology, &spec).unwrap_err(),
            FaultError::OverlapsCoveredSpace(PortRef::new(0, 1))
        );

        let mut ok_rule = hidden;
        ok_rule.matches = HeaderSet::parse(schema(), "10.1.9.0/28").unwrap();
        let spec = FaultSpec {
            affected: ok_rule.matches.clone(),
            rule: ok_rule,
            ..spec
        };
        let (mutated, truth) = inject_fault(&config, &topology, &spec).unwrap();
        assert_eq!(mutated.rules.len(), 4);
        assert!(mutated.rules.last().unwrap().hidden);
        // hidden rules never show up in the control-plane view
        assert_eq!(mutated.visible().rules.len(), 3);
        assert_eq!(truth.switch, SwitchId(0));
    }
}
