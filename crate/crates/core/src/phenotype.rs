//! Executable form of a genome: activation, event selection via softmax,
//! regression-head readout, and dynamic input/output adaptation when the
//! game's feature or event space changes mid-run.

use std::collections::BTreeMap;

use crate::neat::{Genome, IdSource, NodeGene, NodeId, NodeRole};
use crate::rng::Pcg32;

#[derive(Debug, Clone, thiserror::Error, PartialEq)]
pub enum PhenotypeError {
    #[error("genome contains a cycle")]
    Cycle,
    #[error("event `{0}` has no output node")]
    MissingOutput(String),
    #[error("regression node `{0}` missing")]
    MissingRegression(String),
}

/// One normalized input feature: (group, feature name, value in [-1, 1]).
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub values: Vec<(String, String, f64)>,
}

impl FeatureVector {
    pub fn new(values: Vec<(String, String, f64)>) -> Self {
        debug_assert!(values.iter().all(|(_, _, v)| (-1.0..=1.0).contains(v)));
        FeatureVector { values }
    }

    pub fn groups(&self) -> Vec<(String, Vec<String>)> {
        let mut grouped: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for (g, f, _) in &self.values {
            grouped.entry(g.clone()).or_default().push(f.clone());
        }
        grouped.into_iter().collect()
    }
}

#[derive(Debug, Clone)]
pub struct Phenotype {
    nodes: Vec<NodeGene>,
    /// incoming[i] = (source index, weight) over enabled connections.
    incoming: Vec<Vec<(usize, f64)>>,
    index_by_id: BTreeMap<NodeId, usize>,
    label_to_index: BTreeMap<String, usize>,
    activations: Vec<f64>,
    /// Longest input-to-output path measured in nodes.
    pub depth: usize,
    pub structural_signature: u64,
}

/// Compiles a genome into an executable phenotype. Fails on cyclic genomes
/// (which mutation never produces; the check is a safeguard for
/// deserialized input).
pub fn build_phenotype(genome: &Genome) -> Result<Phenotype, PhenotypeError> {
    let nodes = genome.nodes.clone();
    let index_by_id: BTreeMap<NodeId, usize> =
        nodes.iter().enumerate().map(|(i, n)| (n.id, i)).collect();
    let mut incoming: Vec<Vec<(usize, f64)>> = vec![Vec::new(); nodes.len()];
    let mut indegree = vec![0usize; nodes.len()];
    for c in genome.connections.iter().filter(|c| c.enabled) {
        let (Some(&i), Some(&o)) = (index_by_id.get(&c.in_node), index_by_id.get(&c.out_node))
        else {
            continue;
        };
        incoming[o].push((i, c.weight));
        indegree[o] += 1;
    }

    // Kahn topological order, deterministic by node id
    let mut order = Vec::with_capacity(nodes.len());
    let mut ready: Vec<usize> = (0..nodes.len()).filter(|&i| indegree[i] == 0).collect();
    let mut level = vec![1usize; nodes.len()];
    let mut indeg = indegree.clone();
    while !ready.is_empty() {
        ready.sort_by_key(|&i| nodes[i].id);
        let mut next = Vec::new();
        for &i in &ready {
            order.push(i);
            for (o, inc) in incoming.iter().enumerate() {
                for &(src, _) in inc {
                    if src == i {
                        level[o] = level[o].max(level[i] + 1);
                        indeg[o] -= 1;
                        if indeg[o] == 0 {
                            next.push(o);
                        }
                    }
                }
            }
        }
        next.sort_unstable();
        next.dedup();
        ready = next;
    }
    if order.len() != nodes.len() {
        return Err(PhenotypeError::Cycle);
    }
    let depth = level.iter().copied().max().unwrap_or(1);
    let label_to_index = nodes.iter().enumerate().map(|(i, n)| (n.label.clone(), i)).collect();
    let _ = order;
    Ok(Phenotype {
        activations: vec![0.0; nodes.len()],
        structural_signature: genome.structural_signature(),
        incoming,
        index_by_id,
        label_to_index,
        depth,
        nodes,
    })
}

impl Phenotype {
    /// Runs exactly `depth` single-timestep propagations: in each timestep
    /// every non-input node applies tanh to the weighted sum of the
    /// previous timestep's activations. Input nodes pass their feature
    /// values through unchanged; missing features read 0; the bias
    /// activation is constant 1.
    pub fn activate(&mut self, features: &FeatureVector) {
        for a in &mut self.activations {
            *a = 0.0;
        }
        let mut input_values = vec![0.0; self.nodes.len()];
        for (group, feature, value) in &features.values {
            let label = format!("{group}/{feature}");
            if let Some(&i) = self.label_to_index.get(&label) {
                input_values[i] = *value;
            }
        }
        for (i, n) in self.nodes.iter().enumerate() {
            match n.role {
                NodeRole::Bias => self.activations[i] = 1.0,
                NodeRole::Input => self.activations[i] = input_values[i],
                _ => {}
            }
        }
        for _ in 0..self.depth {
            let prev = self.activations.clone();
            for (i, n) in self.nodes.iter().enumerate() {
                match n.role {
                    NodeRole::Bias | NodeRole::Input => {}
                    _ => {
                        let sum: f64 =
                            self.incoming[i].iter().map(|&(src, w)| prev[src] * w).sum();
                        self.activations[i] = sum.tanh();
                    }
                }
            }
        }
    }

    pub fn activation_of(&self, id: NodeId) -> Option<f64> {
        self.index_by_id.get(&id).map(|&i| self.activations[i])
    }

    pub fn activation_of_label(&self, label: &str) -> Option<f64> {
        self.label_to_index.get(label).map(|&i| self.activations[i])
    }

    /// Hidden-node activations, ordered by node id.
    pub fn hidden_activations(&self) -> Vec<(NodeId, f64)> {
        let mut out: Vec<(NodeId, f64)> = self
            .nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| n.role == NodeRole::Hidden)
            .map(|(i, n)| (n.id, self.activations[i]))
            .collect();
        out.sort_by_key(|&(id, _)| id);
        out
    }

    pub fn nodes(&self) -> &[NodeGene] {
        &self.nodes
    }

    /// Softmax distribution over the available events' classification
    /// outputs and the argmax pick (ties broken by lowest node id).
    /// Fails if an available event has no output node, which signals the
    /// caller to adapt the genome first.
    pub fn select_event(
        &self,
        available: &[String],
    ) -> Result<(usize, Vec<f64>), PhenotypeError> {
        assert!(!available.is_empty(), "inventory is never empty");
        let mut entries = Vec::with_capacity(available.len());
        for tag in available {
            let &i = self
                .label_to_index
                .get(tag)
                .ok_or_else(|| PhenotypeError::MissingOutput(tag.clone()))?;
            entries.push((self.nodes[i].id, self.activations[i]));
        }
        let max_act = entries.iter().map(|e| e.1).fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = entries.iter().map(|e| (e.1 - max_act).exp()).collect();
        let total: f64 = exps.iter().sum();
        let probs: Vec<f64> = exps.iter().map(|e| e / total).collect();
        let mut best = 0;
        for i in 1..entries.len() {
            let better = probs[i] > probs[best]
                || (probs[i] == probs[best] && entries[i].0 < entries[best].0);
            if better {
                best = i;
            }
        }
        Ok((best, probs))
    }

    /// Reads the regression head for one parameter of an event, mapping the
    /// tanh activation linearly from [-1, 1] onto [lo, hi]. Durations are
    /// rounded and floored at 1 by the caller's parameter spec.
    pub fn regress_param(
        &self,
        event_tag: &str,
        param: &str,
        lo: f64,
        hi: f64,
    ) -> Result<f64, PhenotypeError> {
        let label = format!("{event_tag}#{param}");
        let a = self
            .activation_of_label(&label)
            .ok_or(PhenotypeError::MissingRegression(label))?;
        Ok(lo + (a + 1.0) / 2.0 * (hi - lo))
    }
}

/// A structural adaptation performed by [`adapt_io`].
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub enum StructuralChange {
    NewGroup(String),
    NewFeature(String),
    NewEvent(String),
}

/// Grows the genome to match the game's current feature groups and event
/// inventory: new groups get input nodes plus a fresh hidden node wired by
/// the seeding rule; new events get classification (and regression)
/// outputs fed by every hidden node. Nothing is ever removed; vanished
/// groups keep their nodes and read zero.
pub fn adapt_io(
    genome: &Genome,
    current_groups: &[(String, Vec<String>)],
    current_events: &[(String, Vec<String>)],
    ids: &mut IdSource,
    rng: &mut Pcg32,
) -> (Genome, Vec<StructuralChange>) {
    use crate::neat::BIAS_NODE;

    let mut out = genome.clone();
    let mut changes = Vec::new();

    let mut known_labels: std::collections::BTreeSet<String> =
        out.nodes.iter().map(|n| n.label.clone()).collect();
    let known_groups = out.input_groups();

    // outputs first so new hidden nodes connect to the full output set
    for (tag, params) in current_events {
        let mut new_outputs = Vec::new();
        if !known_labels.contains(tag) {
            let id = ids.node_for_label(tag);
            out.insert_node(NodeGene {
                id,
                role: NodeRole::OutputClassification,
                label: tag.clone(),
            });
            known_labels.insert(tag.clone());
            new_outputs.push(id);
            changes.push(StructuralChange::NewEvent(tag.clone()));
        }
        for param in params {
            let label = format!("{tag}#{param}");
            if !known_labels.contains(&label) {
                let id = ids.node_for_label(&label);
                out.insert_node(NodeGene { id, role: NodeRole::OutputRegression, label: label.clone() });
                known_labels.insert(label);
                new_outputs.push(id);
            }
        }
        if new_outputs.is_empty() {
            continue;
        }
        let hiddens: Vec<NodeId> = out.hidden_nodes().map(|n| n.id).collect();
        for &o in &new_outputs {
            for &h in &hiddens {
                push_connection(&mut out, ids, h, o, rng.range_f64(-1.0, 1.0));
            }
            push_connection(&mut out, ids, BIAS_NODE, o, rng.range_f64(-1.0, 1.0));
        }
    }

    for (group, features) in current_groups {
        let is_new_group = !known_groups.contains(group);
        let hidden_label = format!("hidden/{group}");
        let mut hidden_id = out.node_by_label(&hidden_label).map(|n| n.id);
        let mut group_changed = false;

        for feature in features {
            let label = format!("{group}/{feature}");
            if known_labels.contains(&label) {
                continue;
            }
            if hidden_id.is_none() {
                let h = ids.node_for_label(&hidden_label);
                out.insert_node(NodeGene {
                    id: h,
                    role: NodeRole::Hidden,
                    label: hidden_label.clone(),
                });
                push_connection(&mut out, ids, BIAS_NODE, h, rng.range_f64(-1.0, 1.0));
                let outputs: Vec<NodeId> = out
                    .nodes
                    .iter()
                    .filter(|n| {
                        matches!(
                            n.role,
                            NodeRole::OutputClassification | NodeRole::OutputRegression
                        )
                    })
                    .map(|n| n.id)
                    .collect();
                for o in outputs {
                    push_connection(&mut out, ids, h, o, rng.range_f64(-1.0, 1.0));
                }
                hidden_id = Some(h);
            }
            let input = ids.node_for_label(&label);
            out.insert_node(NodeGene { id: input, role: NodeRole::Input, label: label.clone() });
            known_labels.insert(label.clone());
            push_connection(&mut out, ids, input, hidden_id.unwrap(), rng.range_f64(-1.0, 1.0));
            if !is_new_group {
                changes.push(StructuralChange::NewFeature(label));
            }
            group_changed = true;
        }
        if is_new_group && group_changed {
            changes.push(StructuralChange::NewGroup(group.clone()));
        }
    }

    (out, changes)
}

fn push_connection(genome: &mut Genome, ids: &mut IdSource, from: NodeId, to: NodeId, weight: f64) {
    if genome.has_connection(from, to) {
        return;
    }
    let innovation = ids.connection_innovation(from, to);
    genome.insert_connection(crate::neat::ConnectionGene {
        in_node: from,
        out_node: to,
        weight,
        enabled: true,
        innovation,
    });
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neat::{seed_genome, InnovationRegistry};
    use std::sync::Mutex;

    fn simple_genome() -> (Genome, Mutex<InnovationRegistry>) {
        let reg = Mutex::new(InnovationRegistry::new());
        let mut rng = Pcg32::new(1);
        let g = {
            let mut ids = IdSource::Registry(&reg);
            seed_genome(
                &[("g".into(), vec!["f".into()])],
                &[("act".into(), Vec::new())],
                &mut ids,
                &mut rng,
            )
        };
        (g, reg)
    }

    #[test]
    fn seeded_genome_has_depth_three() {
        let (g, _reg) = simple_genome();
        let p = build_phenotype(&g).unwrap();
        assert_eq!(p.depth, 3, "input -> hidden -> output");
    }

    #[test]
    fn split_on_longest_path_increases_depth() {
        let (mut g, reg) = simple_genome();
        // split the hidden -> output connection
        let hidden = g.node_by_label("hidden/g").unwrap().id;
        let out = g.node_by_label("act").unwrap().id;
        let conn = g
            .connections
            .iter()
            .position(|c| c.in_node == hidden && c.out_node == out)
            .unwrap();
        let old = g.connections[conn];
        g.connections[conn].enabled = false;
        let (node, a, b) = reg.lock().unwrap().split(old.innovation, 0);
        g.insert_node(NodeGene { id: node, role: NodeRole::Hidden, label: "split:x:0".into() });
        g.insert_connection(crate::neat::ConnectionGene {
            in_node: hidden,
            out_node: node,
            weight: 1.0,
            enabled: true,
            innovation: a,
        });
        g.insert_connection(crate::neat::ConnectionGene {
            in_node: node,
            out_node: out,
            weight: old.weight,
            enabled: true,
            innovation: b,
        });
        let p = build_phenotype(&g).unwrap();
        assert_eq!(p.depth, 4);
    }

    #[test]
    fn signature_stable_for_clones_changes_on_add() {
        let (g, reg) = simple_genome();
        let clone = g.clone();
        assert_eq!(g.structural_signature(), clone.structural_signature());
        let mut rng = Pcg32::new(2);
        let mut ids = IdSource::Registry(&reg);
        let (adapted, changes) = adapt_io(
            &g,
            &[
                ("g".into(), vec!["f".into()]),
                ("new".into(), vec!["a".into(), "b".into()]),
            ],
            &[("act".into(), Vec::new())],
            &mut ids,
            &mut rng,
        );
        assert_eq!(changes, vec![StructuralChange::NewGroup("new".into())]);
        assert_ne!(adapted.structural_signature(), g.structural_signature());
    }

    #[test]
    fn single_path_activation_is_nested_tanh() {
        let (mut g, _reg) = simple_genome();
        for c in &mut g.connections {
            // keep only the input -> hidden -> output path at weight 1
            let from_bias = c.in_node == crate::neat::BIAS_NODE;
            c.weight = if from_bias { 0.0 } else { 1.0 };
        }
        let mut p = build_phenotype(&g).unwrap();
        p.activate(&FeatureVector::new(vec![("g".into(), "f".into(), 1.0)]));
        let out = p.activation_of_label("act").unwrap();
        let expected = 1.0_f64.tanh().tanh();
        assert!((out - expected).abs() < 1e-12, "got {out}, want {expected}");
        assert!((expected - 0.6420149920119997).abs() < 1e-12);
    }

    #[test]
    fn zero_weights_zero_activations_and_bounds() {
        let (mut g, _reg) = simple_genome();
        for c in &mut g.connections {
            c.weight = 0.0;
        }
        let mut p = build_phenotype(&g).unwrap();
        p.activate(&FeatureVector::new(vec![("g".into(), "f".into(), 0.7)]));
        assert_eq!(p.activation_of_label("act").unwrap(), 0.0);
        assert_eq!(p.activation_of_label("hidden/g").unwrap(), 0.0);

        // random weights keep activations inside (-1, 1)
        let mut rng = Pcg32::new(5);
        for _ in 0..20 {
            let mut noisy = g.clone();
            for c in &mut noisy.connections {
                c.weight = rng.range_f64(-4.0, 4.0);
            }
            let mut p = build_phenotype(&noisy).unwrap();
            p.activate(&FeatureVector::new(vec![("g".into(), "f".into(), rng.range_f64(-1.0, 1.0))]));
            for (_, v) in p.hidden_activations() {
                assert!(v > -1.0 && v < 1.0);
            }
        }
    }

    #[test]
    fn activation_is_pure_and_deterministic() {
        let (g, _reg) = simple_genome();
        let features = FeatureVector::new(vec![("g".into(), "f".into(), 0.3)]);
        let mut p1 = build_phenotype(&g).unwrap();
        let mut p2 = build_phenotype(&g).unwrap();
        p1.activate(&features);
        p2.activate(&features);
        assert_eq!(p1.activations, p2.activations);
        p1.activate(&features);
        assert_eq!(p1.activations, p2.activations, "re-activation gives same result");
    }

    fn two_event_genome() -> Genome {
        let reg = Mutex::new(InnovationRegistry::new());
        let mut rng = Pcg32::new(1);
        let mut ids = IdSource::Registry(&reg);
        seed_genome(
            &[("g".into(), vec!["f".into()])],
            &[("ev_a".into(), Vec::new()), ("ev_b".into(), Vec::new())],
            &mut ids,
            &mut rng,
        )
    }

    #[test]
    fn softmax_equal_activations_split_and_tie_break() {
        let g = two_event_genome();
        let mut p = build_phenotype(&g).unwrap();
        // zero weights: both outputs activate to 0
        for a in &mut p.activations {
            *a = 0.0;
        }
        let (chosen, probs) = p
            .select_event(&["ev_a".to_string(), "ev_b".to_string()])
            .unwrap();
        assert!((probs[0] - 0.5).abs() < 1e-12);
        assert!((probs[1] - 0.5).abs() < 1e-12);
        // tie broken by lowest node id; ev_a was registered first
        assert_eq!(chosen, 0);
    }

    #[test]
    fn softmax_known_values() {
        let g = two_event_genome();
        let mut p = build_phenotype(&g).unwrap();
        let ia = p.label_to_index["ev_a"];
        let ib = p.label_to_index["ev_b"];
        p.activations[ia] = 1.0;
        p.activations[ib] = 0.0;
        let (chosen, probs) =
            p.select_event(&["ev_a".to_string(), "ev_b".to_string()]).unwrap();
        let e = std::f64::consts::E;
        assert!((probs[0] - e / (e + 1.0)).abs() < 1e-12);
        assert!((probs[1] - 1.0 / (e + 1.0)).abs() < 1e-12);
        assert_eq!(chosen, 0);
        assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn single_available_event_gets_probability_one() {
        let g = two_event_genome();
        let p = build_phenotype(&g).unwrap();
        let (chosen, probs) = p.select_event(&["ev_b".to_string()]).unwrap();
        assert_eq!(chosen, 0);
        assert_eq!(probs, vec![1.0]);
    }

    #[test]
    fn softmax_invariant_under_constant_shift() {
        let g = two_event_genome();
        let mut p = build_phenotype(&g).unwrap();
        let ia = p.label_to_index["ev_a"];
        let ib = p.label_to_index["ev_b"];
        p.activations[ia] = 0.3;
        p.activations[ib] = -0.2;
        let (_, probs1) = p.select_event(&["ev_a".to_string(), "ev_b".to_string()]).unwrap();
        p.activations[ia] += 5.0;
        p.activations[ib] += 5.0;
        let (_, probs2) = p.select_event(&["ev_a".to_string(), "ev_b".to_string()]).unwrap();
        for (a, b) in probs1.iter().zip(&probs2) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn argmax_invariant_under_restriction() {
        let reg = Mutex::new(InnovationRegistry::new());
        let mut rng = Pcg32::new(9);
        let mut ids = IdSource::Registry(&reg);
        let events: Vec<(String, Vec<String>)> =
            (0..5).map(|i| (format!("ev{i}"), Vec::new())).collect();
        let g = seed_genome(&[("g".into(), vec!["f".into()])], &events, &mut ids, &mut rng);
        let mut p = build_phenotype(&g).unwrap();
        for trial in 0..50 {
            for (i, tag) in events.iter().enumerate() {
                let idx = p.label_to_index[&tag.0];
                p.activations[idx] = ((trial * 7 + i * 13) % 11) as f64 / 11.0 - 0.4;
            }
            let all: Vec<String> = events.iter().map(|e| e.0.clone()).collect();
            let (winner_idx, _) = p.select_event(&all).unwrap();
            let winner = all[winner_idx].clone();
            // drop two non-winners; the winner must stay the winner
            let restricted: Vec<String> =
                all.iter().filter(|t| **t == winner || t.ends_with('0') || t.ends_with('2')).cloned().collect();
            let (w2, probs) = p.select_event(&restricted).unwrap();
            assert_eq!(restricted[w2], winner, "trial {trial}");
            assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn unknown_event_errors_to_trigger_adapt() {
        let g = two_event_genome();
        let p = build_phenotype(&g).unwrap();
        assert!(matches!(
            p.select_event(&["ev_new".to_string()]),
            Err(PhenotypeError::MissingOutput(_))
        ));
    }

    #[test]
    fn regression_linear_map() {
        let reg = Mutex::new(InnovationRegistry::new());
        let mut rng = Pcg32::new(1);
        let mut ids = IdSource::Registry(&reg);
        let g = seed_genome(
            &[("g".into(), vec!["f".into()])],
            &[("mousemove".into(), vec!["x".into()]), ("key:left".into(), vec!["duration".into()])],
            &mut ids,
            &mut rng,
        );
        let mut p = build_phenotype(&g).unwrap();
        let ix = p.label_to_index["mousemove#x"];
        p.activations[ix] = 0.0;
        assert_eq!(p.regress_param("mousemove", "x", -240.0, 240.0).unwrap(), 0.0);
        p.activations[ix] = 1.0;
        assert_eq!(p.regress_param("mousemove", "x", -240.0, 240.0).unwrap(), 240.0);
        let id = p.label_to_index["key:left#duration"];
        p.activations[id] = -1.0;
        let dur = p.regress_param("key:left", "duration", 1.0, 30.0).unwrap();
        assert_eq!(dur.round().max(1.0), 1.0);
    }

    #[test]
    fn adapt_io_no_change_is_identity() {
        let (g, reg) = simple_genome();
        let mut rng = Pcg32::new(3);
        let mut ids = IdSource::Registry(&reg);
        let (adapted, changes) = adapt_io(
            &g,
            &[("g".into(), vec!["f".into()])],
            &[("act".into(), Vec::new())],
            &mut ids,
            &mut rng,
        );
        assert!(changes.is_empty());
        assert_eq!(adapted, g);
    }

    #[test]
    fn adapt_io_new_group_wires_seeding_rule() {
        let (g, reg) = simple_genome();
        let mut rng = Pcg32::new(3);
        let mut ids = IdSource::Registry(&reg);
        let (adapted, changes) = adapt_io(
            &g,
            &[("g".into(), vec!["f".into()]), ("clone[1]".into(), vec!["x".into(), "y".into()])],
            &[("act".into(), Vec::new())],
            &mut ids,
            &mut rng,
        );
        assert_eq!(changes, vec![StructuralChange::NewGroup("clone[1]".into())]);
        assert_eq!(adapted.nodes.len(), g.nodes.len() + 3, "2 inputs + 1 hidden");
        let h = adapted.node_by_label("hidden/clone[1]").unwrap().id;
        let x = adapted.node_by_label("clone[1]/x").unwrap().id;
        let act = adapted.node_by_label("act").unwrap().id;
        assert!(adapted.has_connection(x, h));
        assert!(adapted.has_connection(h, act));
        // nothing removed
        for n in &g.nodes {
            assert!(adapted.has_node(n.id));
        }
    }

    #[test]
    fn adapt_io_new_event_adds_outputs() {
        let (g, reg) = simple_genome();
        let mut rng = Pcg32::new(3);
        let mut ids = IdSource::Registry(&reg);
        let (adapted, changes) = adapt_io(
            &g,
            &[("g".into(), vec!["f".into()])],
            &[("act".into(), Vec::new()), ("wait".into(), vec!["duration".into()])],
            &mut ids,
            &mut rng,
        );
        assert_eq!(changes, vec![StructuralChange::NewEvent("wait".into())]);
        let w = adapted.node_by_label("wait").unwrap();
        assert_eq!(w.role, NodeRole::OutputClassification);
        let wd = adapted.node_by_label("wait#duration").unwrap();
        assert_eq!(wd.role, NodeRole::OutputRegression);
        let hidden = adapted.node_by_label("hidden/g").unwrap().id;
        assert!(adapted.has_connection(hidden, w.id));
        assert!(adapted.has_connection(hidden, wd.id));
    }

    #[test]
    fn scratch_ids_are_deterministic_and_disjoint() {
        let (g, _reg) = simple_genome();
        let max_node = g.nodes.iter().map(|n| n.id).max().unwrap();
        let mut rng1 = Pcg32::new(7);
        let mut rng2 = Pcg32::new(7);
        let mut ids1 = IdSource::Scratch(crate::neat::ScratchIds::for_genome(&g));
        let mut ids2 = IdSource::Scratch(crate::neat::ScratchIds::for_genome(&g));
        let groups = [("g".into(), vec!["f".into()]), ("n".into(), vec!["a".into()])];
        let events = [("act".to_string(), Vec::new())];
        let (a1, _) = adapt_io(&g, &groups, &events, &mut ids1, &mut rng1);
        let (a2, _) = adapt_io(&g, &groups, &events, &mut ids2, &mut rng2);
        assert_eq!(a1, a2);
        for n in &a1.nodes {
            if !g.has_node(n.id) {
                assert!(n.id > max_node, "scratch ids stay above genome ids");
            }
        }
    }
}
