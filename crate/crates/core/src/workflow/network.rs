use crate::engine::NodeId;
use crate::scenario::ScenarioConfig;
use crate::stochastic::Distribution;

use super::routing::{next_phase, Outcome, Route};

/// One element of the process network.
#[derive(Debug, Clone, PartialEq)]
pub enum NodeKind {
    /// Emits `limit` entities, one per draw of `arrival`, with class drawn from `mix`.
    Source {
        arrival: Distribution,
        mix: Distribution,
        limit: u64,
        next: NodeId,
    },
    /// Counts passing entities; `counter` indexes the model's counter table.
    Counter {
        name: String,
        counter: usize,
        next: NodeId,
    },
    Capture {
        pool: usize,
        units_per_class: Vec<u32>,
        next: NodeId,
    },
    Task {
        phase: usize,
        duration_per_class: Vec<Distribution>,
        next: NodeId,
    },
    Release {
        pool: usize,
        units_per_class: Vec<u32>,
        next: NodeId,
    },
    Branch {
        error_prob_per_class: Vec<f64>,
        on_error: NodeId,
        on_ok: NodeId,
    },
    Sink,
}

/// A wired network. Node 0 is always the source.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub nodes: Vec<NodeKind>,
    pub counters: Vec<String>,
    pub received_counter: usize,
    pub delivered_counter: usize,
}

pub const SOURCE: NodeId = 0;
const RECEIVED: NodeId = 1;
const NODES_PER_PHASE: usize = 4;

fn phase_entry(phase: usize) -> NodeId {
    2 + NODES_PER_PHASE * phase
}

impl Network {
    /// Source → received counter → (capture → task → release → branch) per
    /// phase → delivered counter → sink. Branches route by [`next_phase`].
    pub fn waterfall(config: &ScenarioConfig) -> Network {
        let phase_pools = config.phase_pools();
        let n = config.phases.len();
        let delivered = phase_entry(n);
        let sink = delivered + 1;
        let entry = |route: Route| match route {
            Route::Phase(p) => phase_entry(p),
            Route::Delivered => delivered,
        };

        let mut nodes = vec![
            NodeKind::Source {
                arrival: config.arrival.clone(),
                mix: config.mix(),
                limit: config.project_limit,
                next: RECEIVED,
            },
            NodeKind::Counter {
                name: "received".into(),
                counter: 0,
                next: phase_entry(0),
            },
        ];
        for (j, phase) in config.phases.iter().enumerate() {
            let units: Vec<u32> = config.classes.iter().map(|c| c.demands[j]).collect();
            let base = phase_entry(j);
            nodes.push(NodeKind::Capture {
                pool: phase_pools[j],
                units_per_class: units.clone(),
                next: base + 1,
            });
            nodes.push(NodeKind::Task {
                phase: j,
                duration_per_class: phase.duration_per_class.clone(),
                next: base + 2,
            });
            nodes.push(NodeKind::Release {
                pool: phase_pools[j],
                units_per_class: units,
                next: base + 3,
            });
            nodes.push(NodeKind::Branch {
                error_prob_per_class: config.classes.iter().map(|c| c.error_prob).collect(),
                on_error: entry(next_phase(j, Outcome::Error, n)),
                on_ok: entry(next_phase(j, Outcome::Ok, n)),
            });
        }
        nodes.push(NodeKind::Counter {
            name: "delivered".into(),
            counter: 1,
            next: sink,
        });
        nodes.push(NodeKind::Sink);

        Network {
            nodes,
            counters: vec!["received".into(), "delivered".into()],
            received_counter: 0,
            delivered_counter: 1,
        }
    }

    fn successors(&self, node: NodeId) -> Vec<NodeId> {
        match &self.nodes[node] {
            NodeKind::Source { next, .. }
            | NodeKind::Counter { next, .. }
            | NodeKind::Capture { next, .. }
            | NodeKind::Task { next, .. }
            | NodeKind::Release { next, .. } => vec![*next],
            NodeKind::Branch { on_error, on_ok, .. } => vec![*on_error, *on_ok],
            NodeKind::Sink => vec![],
        }
    }

    /// Checks the element invariants: branch probabilities in [0, 1],
    /// unit counts ≥ 1, and every node reachable from the source with a sink
    /// reachable from every node.
    pub fn validate(&self) -> Result<(), String> {
        for (id, node) in self.nodes.iter().enumerate() {
            match node {
                NodeKind::Branch {
                    error_prob_per_class, ..
                } if error_prob_per_class.iter().any(|p| !(0.0..=1.0).contains(p)) => {
                    return Err(format!("node {id}: branch probability outside [0, 1]"));
                }
                NodeKind::Capture { units_per_class, .. } | NodeKind::Release { units_per_class, .. }
                    if units_per_class.contains(&0) =>
                {
                    return Err(format!("node {id}: zero units"));
                }
                _ => {}
            }
            if self.successors(id).iter().any(|&s| s >= self.nodes.len()) {
                return Err(format!("node {id}: dangling edge"));
            }
        }
        if !matches!(self.nodes.first(), Some(NodeKind::Source { .. })) {
            return Err("node 0 must be the source".into());
        }
        let reach = |start: NodeId, forward: bool| {
            let mut seen = vec![false; self.nodes.len()];
            let mut stack = vec![start];
            while let Some(n) = stack.pop() {
                if std::mem::replace(&mut seen[n], true) {
                    continue;
                }
                if forward {
                    stack.extend(self.successors(n));
                } else {
                    stack.extend((0..self.nodes.len()).filter(|&m| self.successors(m).contains(&n)));
                }
            }
            seen
        };
        if let Some(id) = reach(SOURCE, true).iter().position(|s| !s) {
            return Err(format!("node {id} unreachable from the source"));
        }
        let sinks: Vec<NodeId> = (0..self.nodes.len())
            .filter(|&n| matches!(self.nodes[n], NodeKind::Sink))
            .collect();
        let mut reaches_sink = vec![false; self.nodes.len()];
        for s in sinks {
            for (flag, r) in reaches_sink.iter_mut().zip(reach(s, false)) {
                *flag |= r;
            }
        }
        if let Some(id) = reaches_sink.iter().position(|s| !s) {
            return Err(format!("node {id} cannot reach a sink"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::build_paper_scenario;

    #[test]
    fn reference_network_is_connected() {
        let net = Network::waterfall(&build_paper_scenario());
        assert_eq!(net.nodes.len(), 2 + 5 * 4 + 2);
        net.validate().unwrap();
    }

    #[test]
    fn rework_edges() {
        let net = Network::waterfall(&build_paper_scenario());
        // Testing branch falls back to implementation capture.
        let NodeKind::Branch { on_error, on_ok, .. } = net.nodes[phase_entry(3) + 3] else {
            panic!("expected branch");
        };
        assert_eq!(on_error, phase_entry(2));
        assert_eq!(on_ok, phase_entry(4));
        let NodeKind::Branch { on_error, .. } = net.nodes[phase_entry(0) + 3] else {
            panic!("expected branch");
        };
        assert_eq!(on_error, phase_entry(0));
    }

    #[test]
    fn broken_networks_are_rejected() {
        let mut net = Network::waterfall(&build_paper_scenario());
        let last = net.nodes.len() - 1;
        net.nodes[last] = NodeKind::Counter {
            name: "loop".into(),
            counter: 0,
            next: last,
        };
        assert!(net.validate().is_err());
    }
}
