//! Stacked GRU with a per-step linear output head.
//!
//! ```text
//! z_t = sigmoid(W_z x_t + U_z h_{t-1} + b_z)
//! r_t = sigmoid(W_r x_t + U_r h_{t-1} + b_r)
//! c_t = tanh(W_h x_t + U_h (r_t ⊙ h_{t-1}) + b_h)
//! h_t = z_t ⊙ c_t + (1 - z_t) ⊙ h_{t-1},   h_0 = 0
//! y_t = W_o h_t + b_o   (top layer only)
//! ```
//!
//! Layer `l`'s hidden sequence is layer `l + 1`'s input. All weights are read
//! through a [`TaskMask`]: masked-out scalars contribute exactly `+0.0`.
//!
//! Batches are processed time-major: row `t * batch + p` holds path `p` at
//! step `t`, so each recurrent update is one GEMM over the whole batch.

use crate::error::{Error, Result};
use crate::mask::TaskMask;
use crate::nn::params::{Architecture, Gate, Gradients, ParamGroup, ParamKind, ParameterStore};
use crate::nn::tensor::{gemm, Tensor2, View};

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone)]
struct LayerWeights {
    input: usize,
    /// `[W_z; W_r; W_h]`, `3H × input`.
    wx: Vec<f64>,
    /// `[U_z; U_r]`, `2H × H`.
    u_zr: Vec<f64>,
    u_h: Vec<f64>,
    /// `[b_z; b_r; b_h]`.
    bias: Vec<f64>,
}

/// Masked weights laid out for batched evaluation.
#[derive(Debug, Clone)]
pub struct EffectiveWeights {
    arch: Architecture,
    mask: TaskMask,
    layers: Vec<LayerWeights>,
    head_w: Vec<f64>,
    head_b: Vec<f64>,
    digest: u64,
}

/// Inactive entries become `+0.0` regardless of the stored value's sign.
fn masked<'a>(values: &'a [f64], mask: &'a [bool]) -> impl Iterator<Item = f64> + 'a {
    values
        .iter()
        .zip(mask)
        .map(|(&v, &m)| if m { v } else { 0.0 })
}

fn fnv1a(values: impl Iterator<Item = f64>) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for v in values {
        for byte in v.to_bits().to_le_bytes() {
            h ^= byte as u64;
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
    }
    h
}

impl EffectiveWeights {
    pub fn new(params: &ParameterStore, mask: &TaskMask) -> Result<Self> {
        let arch = params.arch();
        arch.validate()?;
        if mask.len() != params.len() {
            return Err(Error::config(format!(
                "mask covers {} parameters, network has {}",
                mask.len(),
                params.len()
            )));
        }
        let bits = mask.bits();
        let pick = |group: ParamGroup| -> Vec<f64> {
            let r = arch.range(group);
            masked(&params.values()[r.clone()], &bits[r]).collect()
        };
        let h = arch.hidden_size;
        let layers = (0..arch.num_layers)
            .map(|layer| {
                let g = |gate, kind| ParamGroup::Gru { layer, gate, kind };
                let mut wx = Vec::with_capacity(3 * h * arch.layer_input(layer));
                let mut bias = Vec::with_capacity(3 * h);
                for gate in Gate::ALL {
                    wx.extend(pick(g(gate, ParamKind::Input)));
                    bias.extend(pick(g(gate, ParamKind::Bias)));
                }
                let mut u_zr = pick(g(Gate::Z, ParamKind::Recurrent));
                u_zr.extend(pick(g(Gate::R, ParamKind::Recurrent)));
                LayerWeights {
                    input: arch.layer_input(layer),
                    wx,
                    u_zr,
                    u_h: pick(g(Gate::H, ParamKind::Recurrent)),
                    bias,
                }
            })
            .collect();
        let head_w = pick(ParamGroup::HeadWeight);
        let head_b = pick(ParamGroup::HeadBias);
        let digest = fnv1a(masked(params.values(), bits));
        Ok(Self {
            arch,
            mask: mask.clone(),
            layers,
            head_w,
            head_b,
            digest,
        })
    }

    pub fn arch(&self) -> Architecture {
        self.arch
    }

    pub fn mask(&self) -> &TaskMask {
        &self.mask
    }

    fn check_inputs(&self, seqs: &[&Tensor2]) -> Result<usize> {
        let first = seqs.first().ok_or_else(|| Error::Empty("no sequences in batch".into()))?;
        let steps = first.rows();
        if steps == 0 {
            return Err(Error::shape("sequence must have at least one step"));
        }
        for s in seqs {
            if s.rows() != steps || s.cols() != self.arch.input_size {
                return Err(Error::shape(format!(
                    "batch expects {steps}x{} sequences, got {}x{}",
                    self.arch.input_size,
                    s.rows(),
                    s.cols()
                )));
            }
        }
        Ok(steps)
    }

    /// Forward pass over a batch of equal-length sequences.
    pub fn forward(&self, seqs: &[&Tensor2]) -> Result<(Vec<Tensor2>, ForwardTrace)> {
        let steps = self.check_inputs(seqs)?;
        let batch = seqs.len();
        let arch = self.arch;
        let (n_in, n_out, hidden) = (arch.input_size, arch.output_size, arch.hidden_size);
        let rows = steps * batch;

        let mut input = vec![0.0; rows * n_in];
        for (p, s) in seqs.iter().enumerate() {
            for t in 0..steps {
                let row = t * batch + p;
                input[row * n_in..(row + 1) * n_in].copy_from_slice(s.row(t));
            }
        }

        let mut layers: Vec<LayerTrace> = Vec::with_capacity(arch.num_layers);
        for (l, w) in self.layers.iter().enumerate() {
            let trace = {
                let x = if l == 0 { &input[..] } else { &layers[l - 1].hidden[..] };
                layer_forward(w, hidden, x, steps, batch)
            };
            layers.push(trace);
        }

        let top = &layers[arch.num_layers - 1].hidden;
        let mut out = vec![0.0; rows * n_out];
        gemm(
            1.0,
            View::new(top, rows, hidden),
            View::new(&self.head_w, n_out, hidden).t(),
            0.0,
            &mut out,
            n_out,
        );
        for row in out.chunks_exact_mut(n_out) {
            for (y, b) in row.iter_mut().zip(&self.head_b) {
                *y += b;
            }
        }
        let preds = split_paths(&out, steps, batch, n_out);

        Ok((
            preds,
            ForwardTrace {
                arch,
                digest: self.digest,
                steps,
                batch,
                input,
                layers,
            },
        ))
    }

    /// Forward pass without keeping the trace.
    pub fn predict(&self, seqs: &[&Tensor2]) -> Result<Vec<Tensor2>> {
        Ok(self.forward(seqs)?.0)
    }

    /// Backpropagation through time for a batch evaluated by [`Self::forward`].
    ///
    /// `loss_grads[p]` is `dL/dy` for path `p` (`steps × output`). Entries of
    /// the returned gradient that are masked out are exactly zero.
    pub fn backward(&self, trace: &ForwardTrace, loss_grads: &[&Tensor2]) -> Result<Gradients> {
        let arch = self.arch;
        if trace.arch != arch || trace.digest != self.digest {
            return Err(Error::config("trace was produced by different weights or mask"));
        }
        if loss_grads.len() != trace.batch {
            return Err(Error::config(format!(
                "trace holds {} paths, got {} loss gradients",
                trace.batch,
                loss_grads.len()
            )));
        }
        let (steps, batch) = (trace.steps, trace.batch);
        let (n_out, hidden) = (arch.output_size, arch.hidden_size);
        let rows = steps * batch;

        let mut d_out = vec![0.0; rows * n_out];
        for (p, g) in loss_grads.iter().enumerate() {
            if g.shape() != (steps, n_out) {
                return Err(Error::shape(format!(
                    "loss gradient must be {steps}x{n_out}, got {}x{}",
                    g.rows(),
                    g.cols()
                )));
            }
            for t in 0..steps {
                let row = t * batch + p;
                d_out[row * n_out..(row + 1) * n_out].copy_from_slice(g.row(t));
            }
        }

        let mut grads = Gradients::zeros(arch);
        let top = &trace.layers[arch.num_layers - 1].hidden;
        gemm(
            1.0,
            View::new(&d_out, rows, n_out).t(),
            View::new(top, rows, hidden),
            0.0,
            grads.group_mut(ParamGroup::HeadWeight),
            hidden,
        );
        column_sums(&d_out, n_out, grads.group_mut(ParamGroup::HeadBias));

        let mut d_hidden = vec![0.0; rows * hidden];
        gemm(
            1.0,
            View::new(&d_out, rows, n_out),
            View::new(&self.head_w, n_out, hidden),
            0.0,
            &mut d_hidden,
            hidden,
        );

        for l in (0..arch.num_layers).rev() {
            let x = if l == 0 { &trace.input[..] } else { &trace.layers[l - 1].hidden[..] };
            let lg = layer_backward(
                &self.layers[l],
                hidden,
                &trace.layers[l],
                x,
                &d_hidden,
                steps,
                batch,
                l > 0,
            );
            let g = |gate, kind| ParamGroup::Gru { layer: l, gate, kind };
            let wlen = hidden * self.layers[l].input;
            for gate in Gate::ALL {
                let k = gate.index();
                grads
                    .group_mut(g(gate, ParamKind::Input))
                    .copy_from_slice(&lg.wx[k * wlen..(k + 1) * wlen]);
                grads
                    .group_mut(g(gate, ParamKind::Bias))
                    .copy_from_slice(&lg.bias[k * hidden..(k + 1) * hidden]);
            }
            let hh = hidden * hidden;
            grads
                .group_mut(g(Gate::Z, ParamKind::Recurrent))
                .copy_from_slice(&lg.u_zr[..hh]);
            grads
                .group_mut(g(Gate::R, ParamKind::Recurrent))
                .copy_from_slice(&lg.u_zr[hh..]);
            grads.group_mut(g(Gate::H, ParamKind::Recurrent)).copy_from_slice(&lg.u_h);
            d_hidden = lg.dx;
        }

        for (v, on) in grads.values_mut().iter_mut().zip(self.mask.iter()) {
            if !on {
                *v = 0.0;
            }
        }
        Ok(grads)
    }
}

fn split_paths(out: &[f64], steps: usize, batch: usize, width: usize) -> Vec<Tensor2> {
    (0..batch)
        .map(|p| {
            let mut data = Vec::with_capacity(steps * width);
            for t in 0..steps {
                let row = t * batch + p;
                data.extend_from_slice(&out[row * width..(row + 1) * width]);
            }
            Tensor2::new(steps, width, data).expect("sized by construction")
        })
        .collect()
}

fn column_sums(data: &[f64], width: usize, out: &mut [f64]) {
    out.iter_mut().for_each(|v| *v = 0.0);
    for row in data.chunks_exact(width) {
        for (o, v) in out.iter_mut().zip(row) {
            *o += v;
        }
    }
}

/// Cached activations of one layer over a batch, time-major.
#[derive(Debug, Clone)]
pub struct LayerTrace {
    /// Gate pre-activations `[a_z, a_r, a_h]`, `rows × 3H`.
    pre: Vec<f64>,
    /// Gate outputs `[z, r, c]`, `rows × 3H`.
    act: Vec<f64>,
    /// `r_t ⊙ h_{t-1}`, `rows × H`.
    reset_hidden: Vec<f64>,
    /// `h_t`, `rows × H`.
    hidden: Vec<f64>,
}

/// Everything [`EffectiveWeights::backward`] needs from a forward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    arch: Architecture,
    digest: u64,
    steps: usize,
    batch: usize,
    input: Vec<f64>,
    layers: Vec<LayerTrace>,
}

impl ForwardTrace {
    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn batch(&self) -> usize {
        self.batch
    }

    fn row(&self, step: usize, path: usize) -> usize {
        assert!(step < self.steps && path < self.batch, "step/path out of range");
        step * self.batch + path
    }

    /// Input `x_t` to `layer` (for layers above the first, the hidden state below).
    pub fn layer_input(&self, layer: usize, step: usize, path: usize) -> &[f64] {
        let row = self.row(step, path);
        if layer == 0 {
            let n = self.arch.input_size;
            &self.input[row * n..(row + 1) * n]
        } else {
            self.hidden(layer - 1, step, path)
        }
    }

    /// Gate output: `z_t`, `r_t` or the candidate `c_t`.
    pub fn gate(&self, layer: usize, gate: Gate, step: usize, path: usize) -> &[f64] {
        let h = self.arch.hidden_size;
        let row = self.row(step, path);
        let start = row * 3 * h + gate.index() * h;
        &self.layers[layer].act[start..start + h]
    }

    pub fn pre_activation(&self, layer: usize, gate: Gate, step: usize, path: usize) -> &[f64] {
        let h = self.arch.hidden_size;
        let row = self.row(step, path);
        let start = row * 3 * h + gate.index() * h;
        &self.layers[layer].pre[start..start + h]
    }

    pub fn hidden(&self, layer: usize, step: usize, path: usize) -> &[f64] {
        let h = self.arch.hidden_size;
        let row = self.row(step, path);
        &self.layers[layer].hidden[row * h..(row + 1) * h]
    }

    /// `h_{t-1}`; zeros at the first step.
    pub fn previous_hidden(&self, layer: usize, step: usize, path: usize) -> Vec<f64> {
        if step == 0 {
            vec![0.0; self.arch.hidden_size]
        } else {
            self.hidden(layer, step - 1, path).to_vec()
        }
    }

    pub fn reset_hidden(&self, layer: usize, step: usize, path: usize) -> &[f64] {
        let h = self.arch.hidden_size;
        let row = self.row(step, path);
        &self.layers[layer].reset_hidden[row * h..(row + 1) * h]
    }

    /// Time-major `(steps·batch) × width` blocks used for importance pooling.
    pub(crate) fn raw_input(&self, layer: usize) -> &[f64] {
        if layer == 0 {
            &self.input
        } else {
            &self.layers[layer - 1].hidden
        }
    }

    pub(crate) fn raw_hidden(&self, layer: usize) -> &[f64] {
        &self.layers[layer].hidden
    }

    pub(crate) fn raw_reset_hidden(&self, layer: usize) -> &[f64] {
        &self.layers[layer].reset_hidden
    }
}

fn layer_forward(w: &LayerWeights, h: usize, x: &[f64], steps: usize, batch: usize) -> LayerTrace {
    let g3 = 3 * h;
    let rows = steps * batch;
    let mut pre = vec![0.0; rows * g3];
    gemm(1.0, View::new(x, rows, w.input), View::new(&w.wx, g3, w.input).t(), 0.0, &mut pre, g3);
    for row in pre.chunks_exact_mut(g3) {
        for (p, b) in row.iter_mut().zip(&w.bias) {
            *p += b;
        }
    }
    let mut act = vec![0.0; rows * g3];
    let mut reset_hidden = vec![0.0; rows * h];
    let mut hidden = vec![0.0; rows * h];

    for t in 0..steps {
        let base = t * batch;
        if t > 0 {
            let prev = &hidden[(base - batch) * h..base * h];
            gemm(
                1.0,
                View::new(prev, batch, h),
                View::new(&w.u_zr, 2 * h, h).t(),
                1.0,
                &mut pre[base * g3..],
                g3,
            );
        }
        for row in base..base + batch {
            for j in 0..2 * h {
                act[row * g3 + j] = sigmoid(pre[row * g3 + j]);
            }
        }
        if t > 0 {
            for row in base..base + batch {
                for j in 0..h {
                    reset_hidden[row * h + j] = act[row * g3 + h + j] * hidden[(row - batch) * h + j];
                }
            }
            gemm(
                1.0,
                View::new(&reset_hidden[base * h..(base + batch) * h], batch, h),
                View::new(&w.u_h, h, h).t(),
                1.0,
                &mut pre[base * g3 + 2 * h..],
                g3,
            );
        }
        for row in base..base + batch {
            for j in 0..h {
                let c = pre[row * g3 + 2 * h + j].tanh();
                act[row * g3 + 2 * h + j] = c;
                let z = act[row * g3 + j];
                let prev = if t > 0 { hidden[(row - batch) * h + j] } else { 0.0 };
                hidden[row * h + j] = z * c + (1.0 - z) * prev;
            }
        }
    }
    LayerTrace {
        pre,
        act,
        reset_hidden,
        hidden,
    }
}

struct LayerGrads {
    wx: Vec<f64>,
    u_zr: Vec<f64>,
    u_h: Vec<f64>,
    bias: Vec<f64>,
    dx: Vec<f64>,
}

#[allow(clippy::too_many_arguments)]
fn layer_backward(
    w: &LayerWeights,
    h: usize,
    tr: &LayerTrace,
    x: &[f64],
    d_hidden: &[f64],
    steps: usize,
    batch: usize,
    need_dx: bool,
) -> LayerGrads {
    let g3 = 3 * h;
    let rows = steps * batch;
    let (act, hid) = (&tr.act, &tr.hidden);
    let mut da = vec![0.0; rows * g3];
    let mut dh_rec = vec![0.0; batch * h];
    let mut dh_prev = vec![0.0; batch * h];
    let mut d_rh = vec![0.0; batch * h];

    for t in (0..steps).rev() {
        let base = t * batch;
        for p in 0..batch {
            let row = base + p;
            for j in 0..h {
                let dh = d_hidden[row * h + j] + dh_rec[p * h + j];
                let z = act[row * g3 + j];
                let c = act[row * g3 + 2 * h + j];
                let prev = if t > 0 { hid[(row - batch) * h + j] } else { 0.0 };
                da[row * g3 + j] = dh * (c - prev) * z * (1.0 - z);
                da[row * g3 + 2 * h + j] = dh * z * (1.0 - c * c);
                dh_prev[p * h + j] = dh * (1.0 - z);
            }
        }
        if t > 0 {
            gemm(
                1.0,
                View::strided(&da[base * g3 + 2 * h..], batch, h, g3, 1),
                View::new(&w.u_h, h, h),
                0.0,
                &mut d_rh,
                h,
            );
            for p in 0..batch {
                let row = base + p;
                for j in 0..h {
                    let r = act[row * g3 + h + j];
                    let prev = hid[(row - batch) * h + j];
                    let g = d_rh[p * h + j];
                    da[row * g3 + h + j] = g * prev * r * (1.0 - r);
                    dh_prev[p * h + j] += g * r;
                }
            }
            gemm(
                1.0,
                View::strided(&da[base * g3..], batch, 2 * h, g3, 1),
                View::new(&w.u_zr, 2 * h, h),
                1.0,
                &mut dh_prev,
                h,
            );
        }
        std::mem::swap(&mut dh_rec, &mut dh_prev);
    }

    let mut wx = vec![0.0; g3 * w.input];
    gemm(1.0, View::new(&da, rows, g3).t(), View::new(x, rows, w.input), 0.0, &mut wx, w.input);
    let mut bias = vec![0.0; g3];
    column_sums(&da, g3, &mut bias);

    let mut u_zr = vec![0.0; 2 * h * h];
    let mut u_h = vec![0.0; h * h];
    if steps > 1 {
        let r1 = (steps - 1) * batch;
        gemm(
            1.0,
            View::strided(&da[batch * g3..], r1, 2 * h, g3, 1).t(),
            View::new(&hid[..r1 * h], r1, h),
            0.0,
            &mut u_zr,
            h,
        );
        gemm(
            1.0,
            View::strided(&da[batch * g3 + 2 * h..], r1, h, g3, 1).t(),
            View::new(&tr.reset_hidden[batch * h..], r1, h),
            0.0,
            &mut u_h,
            h,
        );
    }

    let dx = if need_dx {
        let mut dx = vec![0.0; rows * w.input];
        gemm(1.0, View::new(&da, rows, g3), View::new(&w.wx, g3, w.input), 0.0, &mut dx, w.input);
        dx
    } else {
        Vec::new()
    };
    LayerGrads {
        wx,
        u_zr,
        u_h,
        bias,
        dx,
    }
}

/// Masked forward pass over one `T × input` sequence.
pub fn gru_forward(params: &ParameterStore, mask: &TaskMask, sequence: &Tensor2) -> Result<(Tensor2, ForwardTrace)> {
    let eff = EffectiveWeights::new(params, mask)?;
    let (mut preds, trace) = eff.forward(&[sequence])?;
    Ok((preds.pop().expect("one path"), trace))
}

/// Gradients of a scalar loss given `dL/dy` for the sequence traced by [`gru_forward`].
pub fn gru_backward(
    params: &ParameterStore,
    mask: &TaskMask,
    trace: &ForwardTrace,
    loss_grad: &Tensor2,
) -> Result<Gradients> {
    let eff = EffectiveWeights::new(params, mask)?;
    eff.backward(trace, &[loss_grad])
}
