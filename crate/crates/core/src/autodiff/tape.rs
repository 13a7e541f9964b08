//! Reverse-mode tape for scalar loss expressions.
//!
//! Loss graphs are small compared to the network (a handful of nodes per
//! collocation point), so every node stores its local partials eagerly and
//! the backward sweep is a single pass over the node list.

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug)]
struct Node {
    value: f64,
    args_start: u32,
    args_len: u32,
}

#[derive(Default, Debug)]
pub struct Tape {
    nodes: Vec<Node>,
    // (parent node, local partial d node / d parent)
    args: Vec<(usize, f64)>,
    leaves: Vec<usize>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_capacity(nodes: usize) -> Self {
        Self {
            nodes: Vec::with_capacity(nodes),
            args: Vec::with_capacity(2 * nodes),
            leaves: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: f64, args: &[(usize, f64)]) -> Var {
        let start = self.args.len() as u32;
        self.args.extend_from_slice(args);
        self.nodes.push(Node {
            value,
            args_start: start,
            args_len: args.len() as u32,
        });
        Var(self.nodes.len() - 1)
    }

    /// A differentiable input. Its adjoint is reported by [`Adjoints::leaf`]
    /// in creation order.
    pub fn leaf(&mut self, value: f64) -> Var {
        let v = self.push(value, &[]);
        self.leaves.push(v.0);
        v
    }

    pub fn constant(&mut self, value: f64) -> Var {
        self.push(value, &[])
    }

    pub fn value(&self, v: Var) -> f64 {
        self.nodes[v.0].value
    }

    pub fn leaf_count(&self) -> usize {
        self.leaves.len()
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a) + self.value(b);
        self.push(value, &[(a.0, 1.0), (b.0, 1.0)])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a) - self.value(b);
        self.push(value, &[(a.0, 1.0), (b.0, -1.0)])
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let (va, vb) = (self.value(a), self.value(b));
        self.push(va * vb, &[(a.0, vb), (b.0, va)])
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        let value = k * self.value(a);
        self.push(value, &[(a.0, k)])
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.scale(a, -1.0)
    }

    pub fn square(&mut self, a: Var) -> Var {
        let va = self.value(a);
        self.push(va * va, &[(a.0, 2.0 * va)])
    }

    /// `max(x, 0)`, with the subgradient 0 taken at the kink.
    pub fn relu(&mut self, a: Var) -> Var {
        let va = self.value(a);
        if va > 0.0 {
            self.push(va, &[(a.0, 1.0)])
        } else {
            self.push(0.0, &[(a.0, 0.0)])
        }
    }

    /// Square root; differentiating through `sqrt(0)` is reported as a
    /// non-differentiable node by [`Tape::backward`].
    pub fn sqrt(&mut self, a: Var) -> Var {
        let va = self.value(a);
        let r = va.sqrt();
        self.push(r, &[(a.0, 0.5 / r)])
    }

    /// `sum_i a_i * x_i`.
    pub fn linear(&mut self, terms: &[(f64, Var)]) -> Var {
        let value = terms.iter().map(|&(k, v)| k * self.value(v)).sum();
        let args: Vec<(usize, f64)> = terms.iter().map(|&(k, v)| (v.0, k)).collect();
        self.push(value, &args)
    }

    pub fn sum(&mut self, vars: &[Var]) -> Var {
        let value = vars.iter().map(|&v| self.value(v)).sum();
        let args: Vec<(usize, f64)> = vars.iter().map(|&v| (v.0, 1.0)).collect();
        self.push(value, &args)
    }

    /// Whether any recorded operation reads `v`.
    pub fn is_used(&self, v: Var) -> bool {
        self.args.iter().any(|&(parent, _)| parent == v.0)
    }

    /// Propagates `d output / d node` to every node.
    pub fn backward(&self, output: Var) -> Result<Adjoints> {
        let mut adj = vec![0.0; output.0 + 1];
        adj[output.0] = 1.0;
        for n in (0..=output.0).rev() {
            let a = adj[n];
            if a == 0.0 {
                continue;
            }
            let node = self.nodes[n];
            let args = &self.args[node.args_start as usize..(node.args_start + node.args_len) as usize];
            for &(parent, partial) in args {
                if !partial.is_finite() || !node.value.is_finite() {
                    return Err(Error::NonDifferentiable {
                        node: n,
                        reason: format!("value {} with local partial {}", node.value, partial),
                    });
                }
                adj[parent] += a * partial;
            }
        }
        Ok(Adjoints {
            adjoints: adj,
            leaves: self.leaves.clone(),
        })
    }
}

#[derive(Debug, Clone)]
pub struct Adjoints {
    adjoints: Vec<f64>,
    leaves: Vec<usize>,
}

impl Adjoints {
    pub fn of(&self, v: Var) -> f64 {
        self.adjoints.get(v.0).copied().unwrap_or(0.0)
    }

    /// Adjoint of the `k`-th leaf created on the tape.
    pub fn leaf(&self, k: usize) -> f64 {
        self.adjoints.get(self.leaves[k]).copied().unwrap_or(0.0)
    }

    pub fn leaf_adjoints(&self) -> Vec<f64> {
        (0..self.leaves.len()).map(|k| self.leaf(k)).collect()
    }
}
