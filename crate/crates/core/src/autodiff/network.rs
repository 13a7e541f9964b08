//! Batched jet propagation through the network and its reverse sweep.
//!
//! A batch of `B` points is laid out component-major: each layer activation is
//! a `width x (C * B)` row-major matrix whose column `c * B + b` holds jet
//! component `c` of point `b`. Components are ordered value, `d/dx`, `d/dy`,
//! `d/dt`, `d2/dx2`, `d2/dy2`, `d2/dt2`; value-only batches carry just the
//! first block. Every affine layer then becomes one GEMM, and the recorded
//! per-layer inputs and pre-activations are the trace the reverse sweep walks.

use crate::autodiff::Jet2;
use crate::mlp::MlpParams;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum JetOrder {
    /// Network value only.
    Value,
    /// Value, gradient and pure second derivatives in the inputs.
    Second,
}

impl JetOrder {
    pub fn components(self) -> usize {
        match self {
            JetOrder::Value => 1,
            JetOrder::Second => 7,
        }
    }
}

/// `c = a * b + beta * c` with explicit row/column strides.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (usize, usize),
    b: &[f64],
    (rsb, csb): (usize, usize),
    beta: f64,
    c: &mut [f64],
    (rsc, csc): (usize, usize),
) {
    if m == 0 || n == 0 {
        return;
    }
    let extent = |rows: usize, cols: usize, rs: usize, cs: usize| (rows - 1) * rs + (cols - 1) * cs + 1;
    if k > 0 {
        assert!(a.len() >= extent(m, k, rsa, csa));
        assert!(b.len() >= extent(k, n, rsb, csb));
    }
    assert!(c.len() >= extent(m, n, rsc, csc));
    // SAFETY: the asserts above keep every strided access inside the slices,
    // and `c` is uniquely borrowed so it cannot alias `a` or `b`.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            rsc as isize,
            csc as isize,
        );
    }
}

struct LayerRecord {
    // fan_in x (C*B)
    input: Vec<f64>,
    // fan_out x (C*B)
    pre: Vec<f64>,
}

/// The recorded forward pass of one batch.
pub struct NetTrace {
    order: JetOrder,
    batch: usize,
    records: Vec<LayerRecord>,
    // 1 x (C*B) network output
    output: Vec<f64>,
}

fn input_block(points: &[[f64; 3]], order: JetOrder) -> Vec<f64> {
    let b = points.len();
    let cols = order.components() * b;
    let mut a = vec![0.0; 3 * cols];
    for (p, x) in points.iter().enumerate() {
        for k in 0..3 {
            a[k * cols + p] = x[k];
            if order == JetOrder::Second {
                // d x_k / d x_i = delta_ki
                a[k * cols + (1 + k) * b + p] = 1.0;
            }
        }
    }
    a
}

/// Applies tanh jet rules in place, turning pre-activations into activations.
fn tanh_forward(z: &[f64], h: &mut [f64], rows: usize, batch: usize, order: JetOrder) {
    let cols = order.components() * batch;
    for r in 0..rows {
        let zr = &z[r * cols..(r + 1) * cols];
        let hr = &mut h[r * cols..(r + 1) * cols];
        for p in 0..batch {
            let h0 = zr[p].tanh();
            hr[p] = h0;
            if order == JetOrder::Second {
                let s = 1.0 - h0 * h0;
                let t2 = -2.0 * h0 * s;
                for i in 0..3 {
                    let z1 = zr[(1 + i) * batch + p];
                    let z2 = zr[(4 + i) * batch + p];
                    hr[(1 + i) * batch + p] = s * z1;
                    hr[(4 + i) * batch + p] = s * z2 + t2 * z1 * z1;
                }
            }
        }
    }
}

/// Pulls activation adjoints `g` back through the tanh jet rules, writing
/// pre-activation adjoints into `g` in place.
fn tanh_backward(g: &mut [f64], z: &[f64], h: &[f64], rows: usize, batch: usize, order: JetOrder) {
    let cols = order.components() * batch;
    for r in 0..rows {
        let zr = &z[r * cols..(r + 1) * cols];
        let hr = &h[r * cols..(r + 1) * cols];
        let gr = &mut g[r * cols..(r + 1) * cols];
        for p in 0..batch {
            let h0 = hr[p];
            let s = 1.0 - h0 * h0;
            match order {
                JetOrder::Value => gr[p] *= s,
                JetOrder::Second => {
                    let t2 = -2.0 * h0 * s;
                    let t3 = -2.0 * s * (s - 2.0 * h0 * h0);
                    let mut g0 = gr[p] * s;
                    for i in 0..3 {
                        let z1 = zr[(1 + i) * batch + p];
                        let z2 = zr[(4 + i) * batch + p];
                        let g1 = gr[(1 + i) * batch + p];
                        let g2 = gr[(4 + i) * batch + p];
                        g0 += g1 * t2 * z1 + g2 * (t3 * z1 * z1 + t2 * z2);
                        gr[(1 + i) * batch + p] = g1 * s + 2.0 * g2 * t2 * z1;
                        gr[(4 + i) * batch + p] = g2 * s;
                    }
                    gr[p] = g0;
                }
            }
        }
    }
}

impl NetTrace {
    /// Runs the batch forward and keeps what the reverse sweep needs.
    pub fn record(params: &MlpParams, points: &[[f64; 3]], order: JetOrder) -> Self {
        let batch = points.len();
        let cols = order.components() * batch;
        let mut records = Vec::with_capacity(params.layers.len());
        let mut input = input_block(points, order);
        let last = params.layers.len() - 1;
        for (l, layer) in params.layers.iter().enumerate() {
            let mut pre = vec![0.0; layer.fan_out * cols];
            for (r, &b) in layer.biases.iter().enumerate() {
                pre[r * cols..r * cols + batch].fill(b);
            }
            gemm(
                layer.fan_out,
                layer.fan_in,
                cols,
                &layer.weights,
                (layer.fan_in, 1),
                &input,
                (cols, 1),
                1.0,
                &mut pre,
                (cols, 1),
            );
            let next = if l == last {
                pre.clone()
            } else {
                let mut h = vec![0.0; pre.len()];
                tanh_forward(&pre, &mut h, layer.fan_out, batch, order);
                h
            };
            records.push(LayerRecord { input, pre });
            input = next;
        }
        Self {
            order,
            batch,
            records,
            output: input,
        }
    }

    pub fn order(&self) -> JetOrder {
        self.order
    }

    pub fn len(&self) -> usize {
        self.batch
    }

    pub fn is_empty(&self) -> bool {
        self.batch == 0
    }

    pub fn value(&self, p: usize) -> f64 {
        self.output[p]
    }

    pub fn jet(&self, p: usize) -> Jet2 {
        let b = self.batch;
        match self.order {
            JetOrder::Value => Jet2 {
                value: self.output[p],
                d1: [0.0; 3],
                d2: [0.0; 3],
            },
            JetOrder::Second => Jet2 {
                value: self.output[p],
                d1: [self.output[b + p], self.output[2 * b + p], self.output[3 * b + p]],
                d2: [self.output[4 * b + p], self.output[5 * b + p], self.output[6 * b + p]],
            },
        }
    }

    pub fn jets(&self) -> Vec<Jet2> {
        (0..self.batch).map(|p| self.jet(p)).collect()
    }

    /// Accumulates `sum_p <seed_p, d jet_p / d theta>` into `grad` (flat
    /// parameter ordering). For value-only traces only `seed.value` is read.
    pub fn backward(&self, params: &MlpParams, seeds: &[Jet2], grad: &mut [f64]) {
        assert_eq!(seeds.len(), self.batch, "one seed per traced point");
        assert_eq!(grad.len(), params.param_count());
        let b = self.batch;
        let cols = self.order.components() * b;
        if b == 0 {
            return;
        }

        let mut g = vec![0.0; cols];
        for (p, s) in seeds.iter().enumerate() {
            g[p] = s.value;
            if self.order == JetOrder::Second {
                for i in 0..3 {
                    g[(1 + i) * b + p] = s.d1[i];
                    g[(4 + i) * b + p] = s.d2[i];
                }
            }
        }

        let mut offsets = Vec::with_capacity(params.layers.len());
        let mut off = 0;
        for layer in &params.layers {
            offsets.push(off);
            off += layer.weights.len() + layer.biases.len();
        }

        let last = params.layers.len() - 1;
        for l in (0..=last).rev() {
            let layer = &params.layers[l];
            let rec = &self.records[l];
            if l != last {
                // activation of layer l is the input of layer l + 1
                let act = &self.records[l + 1].input;
                tanh_backward(&mut g, &rec.pre, act, layer.fan_out, b, self.order);
            }
            let (wg, bg) = grad[offsets[l]..offsets[l] + layer.weights.len() + layer.fan_out]
                .split_at_mut(layer.weights.len());
            gemm(
                layer.fan_out,
                cols,
                layer.fan_in,
                &g,
                (cols, 1),
                &rec.input,
                (1, cols),
                1.0,
                wg,
                (layer.fan_in, 1),
            );
            for (r, bias_grad) in bg.iter_mut().enumerate() {
                *bias_grad += g[r * cols..r * cols + b].iter().sum::<f64>();
            }
            if l > 0 {
                let mut prev = vec![0.0; layer.fan_in * cols];
                gemm(
                    layer.fan_in,
                    layer.fan_out,
                    cols,
                    &layer.weights,
                    (1, layer.fan_in),
                    &g,
                    (cols, 1),
                    0.0,
                    &mut prev,
                    (cols, 1),
                );
                g = prev;
            }
        }
    }
}
