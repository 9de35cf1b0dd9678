//! Canonical line-oriented genome text: a header, then one `node` line per
//! node sorted by id and one `conn` line per connection sorted by innovation.
//!
//! ```text
//! cppn 1
//! node 4 output-brightness sigmoid structure
//! conn 1532 0 4 -0.25 1 structure
//! ```

use super::{
    ActivationKind, ConnectionGene, CppnError, Genome, Innovation, NodeGene, NodeId, NodeRole,
    Subnet,
};

const HEADER: &str = "cppn 1";

impl Genome {
    pub fn to_canonical_text(&self) -> String {
        let mut out = String::with_capacity(64 * (self.node_count() + self.connection_count()));
        out.push_str(HEADER);
        out.push('\n');
        for n in self.nodes() {
            out.push_str(&format!(
                "node {} {} {} {}\n",
                n.id,
                n.role.name(),
                n.activation.map(ActivationKind::name).unwrap_or("-"),
                n.subnet.name()
            ));
        }
        for c in self.connections() {
            out.push_str(&format!(
                "conn {} {} {} {:?} {} {}\n",
                c.innovation,
                c.from,
                c.to,
                c.weight,
                u8::from(c.enabled),
                c.subnet.name()
            ));
        }
        out
    }

    pub fn from_canonical_text(text: &str) -> Result<Genome, CppnError> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, l)) if l.trim() == HEADER => {}
            _ => {
                return Err(CppnError::Parse {
                    line: 1,
                    message: format!("expected header `{HEADER}`"),
                })
            }
        }
        let mut nodes = Vec::new();
        let mut conns = Vec::new();
        for (idx, raw) in lines {
            let line = idx + 1;
            let err = |message: String| CppnError::Parse { line, message };
            let fields: Vec<&str> = raw.split_whitespace().collect();
            match fields.as_slice() {
                [] => continue,
                ["node", id, role, act, subnet] => {
                    let role = NodeRole::parse(role).ok_or_else(|| err(format!("bad role {role}")))?;
                    let activation = match *act {
                        "-" => None,
                        a => Some(
                            ActivationKind::parse(a)
                                .ok_or_else(|| err(format!("bad activation {a}")))?,
                        ),
                    };
                    nodes.push(NodeGene {
                        id: NodeId(id.parse().map_err(|_| err(format!("bad node id {id}")))?),
                        role,
                        activation,
                        subnet: Subnet::parse(subnet)
                            .ok_or_else(|| err(format!("bad subnet {subnet}")))?,
                    });
                }
                ["conn", innov, from, to, weight, enabled, subnet] => {
                    let parse_id = |s: &str| s.parse::<u64>().map_err(|_| err(format!("bad id {s}")));
                    conns.push(ConnectionGene {
                        innovation: Innovation(parse_id(innov)?),
                        from: NodeId(parse_id(from)?),
                        to: NodeId(parse_id(to)?),
                        weight: weight
                            .parse()
                            .map_err(|_| err(format!("bad weight {weight}")))?,
                        enabled: match *enabled {
                            "1" => true,
                            "0" => false,
                            e => return Err(err(format!("bad enabled flag {e}"))),
                        },
                        subnet: Subnet::parse(subnet)
                            .ok_or_else(|| err(format!("bad subnet {subnet}")))?,
                    });
                }
                _ => return Err(err(format!("unrecognised line `{raw}`"))),
            }
        }
        Genome::from_genes(nodes, conns)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neat::{add_connection, add_node, InnovationRegistry, MutationMode};
    use crate::rng::seeded;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn canonical_text_round_trips(seed in any::<u64>(), steps in 0usize..30) {
            let mut rng = seeded(seed);
            let registry = InnovationRegistry::new();
            let mut g = Genome::init(&mut rng);
            for _ in 0..steps {
                add_node(&mut g, MutationMode::Both, &registry, &mut rng);
                add_connection(&mut g, MutationMode::Both, &registry, &mut rng);
            }
            let text = g.to_canonical_text();
            let back = Genome::from_canonical_text(&text).unwrap();
            prop_assert_eq!(&back, &g);
            prop_assert_eq!(back.content_hash(), g.content_hash());
        }
    }

    #[test]
    fn rejects_garbage() {
        assert!(Genome::from_canonical_text("nope").is_err());
        let g = Genome::init(&mut seeded(1));
        let text = g.to_canonical_text().replace("sigmoid", "relu");
        match Genome::from_canonical_text(&text) {
            Err(CppnError::Parse { line, .. }) => assert!(line > 1),
            other => panic!("unexpected {other:?}"),
        }
    }
}
