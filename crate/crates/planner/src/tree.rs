//! Search tree over world-model states.

use crate::goal::Point;
use crate::world::Action;

#[derive(Clone, Debug)]
pub struct PlanNode<S> {
    pub state: S,
    pub parent: Option<usize>,
    /// Action that produced this node from its parent.
    pub action: Option<Action>,
    /// Sum of pusher displacements from the root.
    pub offset: Action,
    pub depth: usize,
    /// Planar centres of mass, cached at insertion.
    pub com: Vec<Point>,
    pub cost: usize,
}

#[derive(Clone, Debug)]
pub struct Tree<S> {
    nodes: Vec<PlanNode<S>>,
}

impl<S> Tree<S> {
    pub fn new(state: S, com: Vec<Point>, cost: usize) -> Self {
        Self {
            nodes: vec![PlanNode {
                state,
                parent: None,
                action: None,
                offset: [0.0, 0.0],
                depth: 0,
                com,
                cost,
            }],
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, i: usize) -> &PlanNode<S> {
        &self.nodes[i]
    }

    pub fn nodes(&self) -> &[PlanNode<S>] {
        &self.nodes
    }

    /// Adds a child of `parent` and returns its index.
    pub fn insert(&mut self, parent: usize, action: Action, state: S, com: Vec<Point>, cost: usize) -> usize {
        assert!(parent < self.nodes.len(), "parent {parent} not in tree");
        let p = &self.nodes[parent];
        let node = PlanNode {
            state,
            parent: Some(parent),
            action: Some(action),
            offset: [p.offset[0] + action[0], p.offset[1] + action[1]],
            depth: p.depth + 1,
            com,
            cost,
        };
        self.nodes.push(node);
        self.nodes.len() - 1
    }

    /// Node indices from the root to `i`.
    pub fn path(&self, i: usize) -> Vec<usize> {
        let mut out = vec![i];
        let mut cur = i;
        while let Some(p) = self.nodes[cur].parent {
            out.push(p);
            cur = p;
        }
        out.reverse();
        out
    }

    /// Actions from the root to `i`.
    pub fn actions_to(&self, i: usize) -> Vec<Action> {
        self.path(i).iter().filter_map(|&k| self.nodes[k].action).collect()
    }

    /// Node whose cached COM vector is nearest to `g` in the Euclidean
    /// norm over all `2m` components. Ties go to the earliest node.
    pub fn nearest(&self, g: &[Point]) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, n) in self.nodes.iter().enumerate() {
            let d: f64 = n
                .com
                .iter()
                .zip(g)
                .map(|(a, b)| (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2))
                .sum();
            if d < best_d {
                best = i;
                best_d = d;
            }
        }
        best
    }
}
