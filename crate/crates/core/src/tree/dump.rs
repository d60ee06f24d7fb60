//! Indented plain-text rendering, one node per line, two spaces per level.
//!
//! Internal nodes: `j=<1-based> z=<threshold> miss=<route> n=<count> value=<mean>`.
//! Leaves: `leaf n=<count> value=<mean>`. Reals use 17 significant digits;
//! a missing-versus-observed split prints `z=NA`. Surrogate routing prints
//! `miss=SUR`, followed by one `~ j=.. z=.. flip=.. err=..` line per rule.

use std::fmt::Write;

use super::{MissingRoute, TreeModel};

fn real(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn dump(model: &TreeModel) -> String {
    let mut out = String::new();
    let mut stack = vec![(0usize, 0usize)];
    while let Some((i, depth)) = stack.pop() {
        let node = &model.nodes[i];
        let pad = "  ".repeat(depth);
        match &node.split {
            None => {
                let _ = writeln!(out, "{pad}leaf n={} value={}", node.n_node, real(node.leaf_value));
            }
            Some(s) => {
                let z = s.threshold.map_or_else(|| "NA".to_string(), real);
                let miss = match s.missing_route {
                    MissingRoute::Left => "L".to_string(),
                    MissingRoute::Right => "R".to_string(),
                    MissingRoute::Separate => "SEP".to_string(),
                    MissingRoute::Probabilistic(p) => format!("P:{}", real(p)),
                    MissingRoute::SurrogateChain => "SUR".to_string(),
                };
                let _ = writeln!(out, "{pad}j={} z={z} miss={miss} n={} value={}", s.feature + 1, node.n_node, real(node.leaf_value));
                for r in &node.surrogates {
                    let _ = writeln!(
                        out,
                        "{pad}  ~ j={} z={} flip={} err={}",
                        r.feature + 1,
                        real(r.threshold),
                        r.direction_flip,
                        real(r.misclassification)
                    );
                }
                if let (Some(l), Some(r)) = (node.left, node.right) {
                    stack.push((r, depth + 1));
                    stack.push((l, depth + 1));
                }
            }
        }
    }
    out
}
