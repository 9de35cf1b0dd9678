use std::collections::BTreeMap;

use super::{
    ActivationKind, CppnError, Genome, NodeId, INPUT_BIAS, INPUT_R, INPUT_X, INPUT_Y,
    OUTPUT_BRIGHTNESS, OUTPUT_HUE, OUTPUT_SATURATION,
};

struct Step {
    slot: usize,
    activation: ActivationKind,
    inputs: Vec<(usize, f64)>,
}

/// A genome flattened into an evaluation schedule. Slots 0..4 hold the inputs
/// `(x, y, r, bias)`; every other node gets one slot evaluated in topological
/// order. Disabled connections are dropped at compile time.
pub struct CompiledCppn {
    steps: Vec<Step>,
    slots: usize,
    brightness: usize,
    hue: usize,
    saturation: usize,
}

impl CompiledCppn {
    pub fn compile(genome: &Genome) -> Result<CompiledCppn, CppnError> {
        let order = genome.topological_order()?;
        let mut slot_of: BTreeMap<NodeId, usize> = BTreeMap::new();
        for (i, id) in [INPUT_X, INPUT_Y, INPUT_R, INPUT_BIAS].into_iter().enumerate() {
            slot_of.insert(id, i);
        }
        for (i, id) in order.iter().enumerate() {
            slot_of.insert(*id, 4 + i);
        }
        let mut incoming: BTreeMap<NodeId, Vec<(usize, f64)>> = BTreeMap::new();
        for c in genome.connections().filter(|c| c.enabled) {
            incoming
                .entry(c.to)
                .or_default()
                .push((slot_of[&c.from], c.weight));
        }
        let steps = order
            .iter()
            .map(|id| {
                let node = genome.node(*id).expect("ordered node exists");
                Step {
                    slot: slot_of[id],
                    activation: node.activation.unwrap_or(ActivationKind::Identity),
                    inputs: incoming.remove(id).unwrap_or_default(),
                }
            })
            .collect();
        Ok(CompiledCppn {
            steps,
            slots: 4 + order.len(),
            brightness: slot_of[&OUTPUT_BRIGHTNESS],
            hue: slot_of[&OUTPUT_HUE],
            saturation: slot_of[&OUTPUT_SATURATION],
        })
    }

    pub fn scratch(&self) -> Vec<f64> {
        vec![0.0; self.slots]
    }

    /// Evaluates into a caller-provided scratch buffer of length [`Self::scratch`].
    #[inline]
    pub fn eval_with(&self, scratch: &mut [f64], x: f64, y: f64, r: f64) -> (f64, f64, f64) {
        scratch[0] = x;
        scratch[1] = y;
        scratch[2] = r;
        scratch[3] = 1.0;
        for step in &self.steps {
            let mut sum = 0.0;
            for &(src, w) in &step.inputs {
                sum += scratch[src] * w;
            }
            scratch[step.slot] = step.activation.apply(sum);
        }
        (
            scratch[self.brightness],
            scratch[self.hue],
            scratch[self.saturation],
        )
    }

    pub fn eval(&self, x: f64, y: f64, r: f64) -> (f64, f64, f64) {
        let mut scratch = self.scratch();
        self.eval_with(&mut scratch, x, y, r)
    }
}

#[cfg(test)]
mod tests {
    use super::super::*;
    use crate::rng::seeded;

    /// Minimal recursive evaluator used as an oracle: value(node) is the
    /// activation of the weighted sum over enabled in-edges, recursing to the inputs.
    fn reference_value(g: &Genome, node: NodeId, inputs: [f64; 4]) -> f64 {
        if let Some(i) = INPUT_IDS.iter().position(|&n| n == node) {
            return inputs[i];
        }
        let sum: f64 = g
            .connections()
            .filter(|c| c.enabled && c.to == node)
            .map(|c| c.weight * reference_value(g, c.from, inputs))
            .sum();
        g.node(node).unwrap().activation.unwrap().apply(sum)
    }

    #[test]
    fn hidden_sine_path_matches_hand_composition() {
        // x -> sine hidden -> brightness, all other weights zeroed.
        let mut g = Genome::init(&mut seeded(0));
        g.connections_mut().for_each(|c| c.weight = 0.0);
        let h = NodeId(FIRST_DYNAMIC_ID + 9);
        g.put_node(NodeGene {
            id: h,
            role: NodeRole::Hidden,
            activation: Some(ActivationKind::Sine),
            subnet: Subnet::Structure,
        });
        for (from, to, w) in [(INPUT_X, h, 2.0), (h, OUTPUT_BRIGHTNESS, -1.5)] {
            g.put_connection(ConnectionGene {
                innovation: connection_innovation(from, to),
                from,
                to,
                weight: w,
                enabled: true,
                subnet: Subnet::Structure,
            });
        }
        g.validate().unwrap();
        let x = 0.3;
        let expected = 1.0 / (1.0 + (1.5 * (2.0f64 * 0.3).sin()).exp());
        let (b, h_raw, s_raw) = g.eval(x, 0.1, 0.5).unwrap();
        assert!((b - expected).abs() < 1e-15, "{b} vs {expected}");
        // hue and saturation see brightness times a zero weight
        assert_eq!(h_raw, 0.0);
        assert_eq!(s_raw, 0.0);
    }

    #[test]
    fn compiled_matches_recursive_reference() {
        let mut rng = seeded(11);
        let registry = crate::neat::InnovationRegistry::new();
        let mut g = Genome::init(&mut rng);
        for _ in 0..40 {
            crate::neat::add_node(&mut g, crate::neat::MutationMode::Both, &registry, &mut rng);
            crate::neat::add_connection(&mut g, crate::neat::MutationMode::Both, &registry, &mut rng);
        }
        let compiled = CompiledCppn::compile(&g).unwrap();
        for &(x, y) in &[(0.1, 0.2), (-0.7, 0.4), (1.0, -1.0)] {
            let r: f64 = (x * x + y * y as f64).sqrt();
            let (b, h, s) = compiled.eval(x, y, r);
            let inp = [x, y, r, 1.0];
            assert!((b - reference_value(&g, OUTPUT_BRIGHTNESS, inp)).abs() < 1e-12);
            assert!((h - reference_value(&g, OUTPUT_HUE, inp)).abs() < 1e-12);
            assert!((s - reference_value(&g, OUTPUT_SATURATION, inp)).abs() < 1e-12);
        }
    }
}
