//! Input derivatives of the network and parameter gradients of losses built
//! from them.
//!
//! Input derivatives are carried forward as second-order jets (three inputs
//! only), parameter gradients flow backward through the recorded jet trace
//! (tens of thousands of parameters). Losses are scalar expressions over jet
//! components recorded on a [`Tape`]; their adjoints seed the network sweep.

mod network;
mod tape;

pub use network::{JetOrder, NetTrace};
pub use tape::{Adjoints, Tape, Var};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mlp::MlpParams;

/// Points per trace chunk. Chunking bounds trace memory and fixes the
/// reduction order of per-chunk gradients independently of the thread count.
pub const CHUNK: usize = 128;

/// Network value with its first and pure second derivatives in `(x, y, t)`.
///
/// The same layout is used for cotangents when seeding the reverse sweep.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Jet2 {
    pub value: f64,
    /// `[u_x, u_y, u_t]`
    pub d1: [f64; 3],
    /// `[u_xx, u_yy, u_tt]`
    pub d2: [f64; 3],
}

impl Jet2 {
    pub fn constant(value: f64) -> Self {
        Self {
            value,
            ..Self::default()
        }
    }

    /// The jet of input coordinate `index` (0 = x, 1 = y, 2 = t).
    pub fn variable(index: usize, value: f64) -> Self {
        let mut j = Self::constant(value);
        j.d1[index] = 1.0;
        j
    }

    pub fn scale(self, k: f64) -> Self {
        Self {
            value: k * self.value,
            d1: self.d1.map(|d| k * d),
            d2: self.d2.map(|d| k * d),
        }
    }

    pub fn tanh(self) -> Self {
        let h = self.value.tanh();
        let s = 1.0 - h * h;
        let t2 = -2.0 * h * s;
        let mut out = Self::constant(h);
        for i in 0..3 {
            out.d1[i] = s * self.d1[i];
            out.d2[i] = s * self.d2[i] + t2 * self.d1[i] * self.d1[i];
        }
        out
    }

    /// Converts a jet taken in network inputs `z_k = scale_k * x_k + c_k`
    /// into the jet in `x`.
    pub fn rescaled(self, scale: [f64; 3]) -> Self {
        let mut out = self;
        for k in 0..3 {
            out.d1[k] *= scale[k];
            out.d2[k] *= scale[k] * scale[k];
        }
        out
    }

    pub fn u_t(&self) -> f64 {
        self.d1[2]
    }

    pub fn u_tt(&self) -> f64 {
        self.d2[2]
    }

    pub fn laplacian(&self) -> f64 {
        self.d2[0] + self.d2[1]
    }
}

impl std::ops::Add for Jet2 {
    type Output = Jet2;

    fn add(self, rhs: Jet2) -> Jet2 {
        let mut out = self;
        out.value += rhs.value;
        for i in 0..3 {
            out.d1[i] += rhs.d1[i];
            out.d2[i] += rhs.d2[i];
        }
        out
    }
}

/// `d loss / d theta` in the flat parameter ordering of [`MlpParams`].
#[derive(Clone, Debug, PartialEq)]
pub struct GradientVector(pub Vec<f64>);

impl GradientVector {
    pub fn zeros(params: &MlpParams) -> Self {
        Self(vec![0.0; params.param_count()])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|g| g.is_finite())
    }
}

/// Jet of the network at a single point.
///
/// Accumulates in the same order as [`crate::mlp::forward`], so `value` is
/// bit-identical to the plain forward pass.
pub fn eval_jet(params: &MlpParams, input: [f64; 3]) -> Result<Jet2> {
    params.validate()?;
    let mut act: Vec<Jet2> = (0..3).map(|k| Jet2::variable(k, input[k])).collect();
    let last = params.layers.len() - 1;
    for (l, layer) in params.layers.iter().enumerate() {
        let mut next = Vec::with_capacity(layer.fan_out);
        for row in 0..layer.fan_out {
            let w = &layer.weights[row * layer.fan_in..(row + 1) * layer.fan_in];
            let mut z = Jet2::default();
            z.value = layer.biases[row] + w.iter().zip(&act).map(|(w, a)| w * a.value).sum::<f64>();
            for i in 0..3 {
                z.d1[i] = w.iter().zip(&act).map(|(w, a)| w * a.d1[i]).sum();
                z.d2[i] = w.iter().zip(&act).map(|(w, a)| w * a.d2[i]).sum();
            }
            next.push(if l != last { z.tanh() } else { z });
        }
        act = next;
    }
    Ok(act[0])
}

/// Jets at many points, evaluated in chunks through the batched path.
pub fn eval_jets(params: &MlpParams, points: &[[f64; 3]]) -> Vec<Jet2> {
    points
        .par_chunks(CHUNK)
        .map(|chunk| NetTrace::record(params, chunk, JetOrder::Second).jets())
        .collect::<Vec<_>>()
        .concat()
}

/// Network values at many points through the batched path.
pub fn eval_values(params: &MlpParams, points: &[[f64; 3]]) -> Vec<f64> {
    points
        .par_chunks(CHUNK)
        .map(|chunk| {
            let trace = NetTrace::record(params, chunk, JetOrder::Value);
            (0..chunk.len()).map(|p| trace.value(p)).collect::<Vec<_>>()
        })
        .collect::<Vec<_>>()
        .concat()
}

/// A set of points at which the loss reads the network, and how much of the
/// jet it needs there.
#[derive(Clone, Copy, Debug)]
pub struct PointGroup<'a> {
    pub points: &'a [[f64; 3]],
    pub order: JetOrder,
}

/// Tape variables for the jet components at one point.
///
/// For value-only groups the derivative slots hold a sentinel node; a loss
/// that differentiates through them is rejected.
#[derive(Clone, Copy, Debug)]
pub struct JetVars {
    pub value: Var,
    pub d1: [Var; 3],
    pub d2: [Var; 3],
}

impl JetVars {
    pub fn u_t(&self) -> Var {
        self.d1[2]
    }

    pub fn u_tt(&self) -> Var {
        self.d2[2]
    }
}

#[derive(Clone, Debug)]
pub struct LossGradient {
    pub loss: f64,
    pub theta: GradientVector,
    /// Adjoints of the leaves the loss builder registered with
    /// [`Tape::leaf`], in creation order.
    pub leaves: Vec<f64>,
}

// Above this many bytes of recorded traces the forward pass is redone chunk by
// chunk during the reverse sweep instead of being kept.
const TRACE_BUDGET_BYTES: usize = 512 << 20;

fn trace_bytes(params: &MlpParams, groups: &[PointGroup<'_>]) -> usize {
    let per_point: usize = params
        .layers
        .iter()
        .map(|l| (l.fan_in + 2 * l.fan_out) * 8)
        .sum();
    groups
        .iter()
        .map(|g| g.points.len() * g.order.components() * per_point)
        .sum()
}

/// Evaluates a scalar loss built from network jets and returns its gradient
/// with respect to every network parameter.
///
/// `build` receives one [`JetVars`] list per group and returns the loss node.
/// Supports losses containing second input derivatives, which makes the
/// result a third-order mixed derivative of the network.
pub fn loss_param_gradient<F>(
    params: &MlpParams,
    groups: &[PointGroup<'_>],
    build: F,
) -> Result<LossGradient>
where
    F: FnOnce(&mut Tape, &[Vec<JetVars>]) -> Var,
{
    params.validate()?;
    let keep_traces = trace_bytes(params, groups) <= TRACE_BUDGET_BYTES;

    // (group, chunk start) for every chunk, in a fixed order
    let chunk_ids: Vec<(usize, usize)> = groups
        .iter()
        .enumerate()
        .flat_map(|(g, grp)| (0..grp.points.len()).step_by(CHUNK).map(move |s| (g, s)))
        .collect();
    let chunk_points = |&(g, s): &(usize, usize)| {
        let pts = groups[g].points;
        &pts[s..(s + CHUNK).min(pts.len())]
    };

    let forward: Vec<(Vec<Jet2>, Option<NetTrace>)> = chunk_ids
        .par_iter()
        .map(|id| {
            let trace = NetTrace::record(params, chunk_points(id), groups[id.0].order);
            let jets = trace.jets();
            (jets, keep_traces.then_some(trace))
        })
        .collect();

    let total_points: usize = groups.iter().map(|g| g.points.len()).sum();
    let mut tape = Tape::with_capacity(8 * total_points + 64);
    let missing = tape.constant(0.0);
    let mut vars: Vec<Vec<JetVars>> = groups.iter().map(|g| Vec::with_capacity(g.points.len())).collect();
    let mut traces = Vec::with_capacity(forward.len());
    for (id, (jets, trace)) in chunk_ids.iter().zip(forward) {
        for jet in jets {
            let v = tape.constant(jet.value);
            let jv = match groups[id.0].order {
                JetOrder::Value => JetVars {
                    value: v,
                    d1: [missing; 3],
                    d2: [missing; 3],
                },
                JetOrder::Second => JetVars {
                    value: v,
                    d1: jet.d1.map(|d| tape.constant(d)),
                    d2: jet.d2.map(|d| tape.constant(d)),
                },
            };
            vars[id.0].push(jv);
        }
        traces.push(trace);
    }

    let out = build(&mut tape, &vars);
    if tape.is_used(missing) || out == missing {
        return Err(Error::Dimension(
            "loss differentiates through input derivatives of a value-only point group".into(),
        ));
    }
    let loss = tape.value(out);
    let adj = tape.backward(out)?;

    let seeds_for = |&(g, s): &(usize, usize), n: usize| -> Vec<Jet2> {
        vars[g][s..s + n]
            .iter()
            .map(|jv| Jet2 {
                value: adj.of(jv.value),
                d1: jv.d1.map(|v| adj.of(v)),
                d2: jv.d2.map(|v| adj.of(v)),
            })
            .collect()
    };

    let n_params = params.param_count();
    let partials: Vec<Vec<f64>> = chunk_ids
        .par_iter()
        .enumerate()
        .map(|(c, id)| {
            let pts = chunk_points(id);
            let seeds = seeds_for(id, pts.len());
            let mut grad = vec![0.0; n_params];
            match &traces[c] {
                Some(t) => t.backward(params, &seeds, &mut grad),
                None => NetTrace::record(params, pts, groups[id.0].order).backward(params, &seeds, &mut grad),
            }
            grad
        })
        .collect();

    let mut theta = vec![0.0; n_params];
    for part in &partials {
        for (t, p) in theta.iter_mut().zip(part) {
            *t += p;
        }
    }
    Ok(LossGradient {
        loss,
        theta: GradientVector(theta),
        leaves: adj.leaf_adjoints(),
    })
}
