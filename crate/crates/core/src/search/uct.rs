use serde::{Deserialize, Serialize};

/// Initial q of a node that has never been backed up.
pub const Q_INIT: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backprop {
    /// q is the running mean of every value backed up through the node.
    Cumulative,
    /// Leaf q takes the value; each parent moves toward its child by gamma.
    Decay,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NodeStats {
    pub visits: u64,
    pub q: f64,
    sum: f64,
}

impl Default for NodeStats {
    fn default() -> Self {
        NodeStats {
            visits: 0,
            q: Q_INIT,
            sum: 0.0,
        }
    }
}

impl NodeStats {
    pub fn new(visits: u64, q: f64) -> Self {
        NodeStats {
            visits,
            q,
            sum: q * visits as f64,
        }
    }
}

/// Backs `value` up a leaf-first path.
pub fn backprop(path: &mut [NodeStats], value: f64, mode: Backprop, gamma: f64) {
    match mode {
        Backprop::Cumulative => {
            for node in path.iter_mut() {
                node.visits += 1;
                node.sum += value;
                node.q = node.sum / node.visits as f64;
            }
        }
        Backprop::Decay => {
            let mut child_q = value;
            for (i, node) in path.iter_mut().enumerate() {
                node.visits += 1;
                node.q = if i == 0 { value } else { (1.0 - gamma) * node.q + gamma * child_q };
                node.sum += value;
                child_q = node.q;
            }
        }
    }
}

/// UCT child choice. Unvisited children come first in creation order;
/// otherwise the highest `q + w * sqrt(ln N / n)`, ties to the earliest.
pub fn uct_select(parent_visits: u64, children: &[NodeStats], w_exp: f64) -> Option<usize> {
    if let Some(i) = children.iter().position(|c| c.visits == 0) {
        return Some(i);
    }
    let ln_n = (parent_visits.max(1) as f64).ln();
    let mut best: Option<(usize, f64)> = None;
    for (i, c) in children.iter().enumerate() {
        let score = c.q + w_exp * (ln_n / c.visits as f64).sqrt();
        if best.is_none_or(|(_, b)| score > b) {
            best = Some((i, score));
        }
    }
    best.map(|(i, _)| i)
}
