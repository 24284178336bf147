//! Flat parameter storage in canonical order.
//!
//! Canonical order: layers ascending; within a layer gates `z`, `r`, `h`;
//! within a gate the input weights `W` (row-major, `hidden × input`), then the
//! recurrent weights `U` (row-major, `hidden × hidden`), then the bias; the
//! output head (`output × hidden` weights, then bias) comes last. Checkpoints
//! and masks use the same order.

use std::ops::Range;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub num_layers: usize,
    pub hidden_size: usize,
    pub input_size: usize,
    pub output_size: usize,
}

impl Architecture {
    /// Strain-to-stress GRU with three components in and out.
    pub fn new(num_layers: usize, hidden_size: usize) -> Self {
        Self {
            num_layers,
            hidden_size,
            input_size: 3,
            output_size: 3,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_layers == 0 || self.hidden_size == 0 || self.input_size == 0 || self.output_size == 0 {
            return Err(Error::config(format!("degenerate architecture {self:?}")));
        }
        Ok(())
    }

    pub fn layer_input(&self, layer: usize) -> usize {
        if layer == 0 {
            self.input_size
        } else {
            self.hidden_size
        }
    }

    fn gate_len(&self, layer: usize) -> usize {
        let h = self.hidden_size;
        h * self.layer_input(layer) + h * h + h
    }

    fn layer_offset(&self, layer: usize) -> usize {
        (0..layer).map(|l| 3 * self.gate_len(l)).sum()
    }

    fn head_offset(&self) -> usize {
        self.layer_offset(self.num_layers)
    }

    pub fn param_count(&self) -> usize {
        self.head_offset() + self.output_size * self.hidden_size + self.output_size
    }

    /// `(rows, cols)` of a parameter group; biases are `(n, 1)`.
    pub fn shape(&self, group: ParamGroup) -> (usize, usize) {
        let h = self.hidden_size;
        match group {
            ParamGroup::Gru { layer, kind, .. } => match kind {
                ParamKind::Input => (h, self.layer_input(layer)),
                ParamKind::Recurrent => (h, h),
                ParamKind::Bias => (h, 1),
            },
            ParamGroup::HeadWeight => (self.output_size, h),
            ParamGroup::HeadBias => (self.output_size, 1),
        }
    }

    pub fn range(&self, group: ParamGroup) -> Range<usize> {
        let h = self.hidden_size;
        let start = match group {
            ParamGroup::Gru { layer, gate, kind } => {
                let gate_start = self.layer_offset(layer) + gate.index() * self.gate_len(layer);
                let w = h * self.layer_input(layer);
                gate_start
                    + match kind {
                        ParamKind::Input => 0,
                        ParamKind::Recurrent => w,
                        ParamKind::Bias => w + h * h,
                    }
            }
            ParamGroup::HeadWeight => self.head_offset(),
            ParamGroup::HeadBias => self.head_offset() + self.output_size * h,
        };
        let (r, c) = self.shape(group);
        start..start + r * c
    }

    /// Every parameter group in canonical order.
    pub fn groups(&self) -> Vec<ParamGroup> {
        let mut out = Vec::with_capacity(self.num_layers * 9 + 2);
        for layer in 0..self.num_layers {
            for gate in Gate::ALL {
                for kind in [ParamKind::Input, ParamKind::Recurrent, ParamKind::Bias] {
                    out.push(ParamGroup::Gru { layer, gate, kind });
                }
            }
        }
        out.push(ParamGroup::HeadWeight);
        out.push(ParamGroup::HeadBias);
        out
    }

    /// Inverse of the canonical layout: which scalar lives at flat index `i`.
    pub fn address(&self, index: usize) -> Option<ParamAddress> {
        if index >= self.param_count() {
            return None;
        }
        self.groups().into_iter().find_map(|group| {
            let range = self.range(group);
            range.contains(&index).then(|| {
                let (_, cols) = self.shape(group);
                let local = index - range.start;
                ParamAddress {
                    group,
                    row: local / cols,
                    col: local % cols,
                }
            })
        })
    }

    pub fn index(&self, addr: ParamAddress) -> usize {
        let (_, cols) = self.shape(addr.group);
        self.range(addr.group).start + addr.row * cols + addr.col
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Gate {
    /// Update gate.
    Z,
    /// Reset gate.
    R,
    /// Candidate state.
    H,
}

impl Gate {
    pub const ALL: [Gate; 3] = [Gate::Z, Gate::R, Gate::H];

    pub fn index(self) -> usize {
        match self {
            Gate::Z => 0,
            Gate::R => 1,
            Gate::H => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ParamKind {
    /// `W_g`, applied to the layer input.
    Input,
    /// `U_g`, applied to the previous hidden state.
    Recurrent,
    Bias,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ParamGroup {
    Gru { layer: usize, gate: Gate, kind: ParamKind },
    HeadWeight,
    HeadBias,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamAddress {
    pub group: ParamGroup,
    pub row: usize,
    pub col: usize,
}

/// All learnable GRU and head parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterStore {
    arch: Architecture,
    values: Vec<f64>,
}

impl ParameterStore {
    pub fn zeros(arch: Architecture) -> Self {
        Self {
            arch,
            values: vec![0.0; arch.param_count()],
        }
    }

    pub fn from_values(arch: Architecture, values: Vec<f64>) -> Result<Self> {
        if values.len() != arch.param_count() {
            return Err(Error::shape(format!(
                "architecture needs {} parameters, got {}",
                arch.param_count(),
                values.len()
            )));
        }
        Ok(Self { arch, values })
    }

    /// Uniform in `[-1/sqrt(hidden), 1/sqrt(hidden)]` for every weight and bias.
    pub fn init_uniform<R: Rng + ?Sized>(arch: Architecture, rng: &mut R) -> Self {
        let bound = 1.0 / (arch.hidden_size as f64).sqrt();
        let values = (0..arch.param_count())
            .map(|_| rng.random_range(-bound..=bound))
            .collect();
        Self { arch, values }
    }

    /// Redraw only the entries selected by `which`, consuming one draw per
    /// parameter so the stream position is independent of the selection.
    pub fn reinit_selected<R: Rng + ?Sized>(&mut self, which: &crate::TaskMask, rng: &mut R) {
        let bound = 1.0 / (self.arch.hidden_size as f64).sqrt();
        for (v, on) in self.values.iter_mut().zip(which.iter()) {
            let draw = rng.random_range(-bound..=bound);
            if on {
                *v = draw;
            }
        }
    }

    pub fn arch(&self) -> Architecture {
        self.arch
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn group(&self, group: ParamGroup) -> &[f64] {
        &self.values[self.arch.range(group)]
    }

    pub fn group_mut(&mut self, group: ParamGroup) -> &mut [f64] {
        let r = self.arch.range(group);
        &mut self.values[r]
    }

    pub fn get(&self, addr: ParamAddress) -> f64 {
        self.values[self.arch.index(addr)]
    }

    pub fn set(&mut self, addr: ParamAddress, v: f64) {
        let i = self.arch.index(addr);
        self.values[i] = v;
    }
}

/// Loss gradients, congruent with a [`ParameterStore`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    arch: Architecture,
    values: Vec<f64>,
}

impl Gradients {
    pub fn zeros(arch: Architecture) -> Self {
        Self {
            arch,
            values: vec![0.0; arch.param_count()],
        }
    }

    pub fn arch(&self) -> Architecture {
        self.arch
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn group(&self, group: ParamGroup) -> &[f64] {
        &self.values[self.arch.range(group)]
    }

    pub fn group_mut(&mut self, group: ParamGroup) -> &mut [f64] {
        let r = self.arch.range(group);
        &mut self.values[r]
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        debug_assert_eq!(self.arch, other.arch);
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += b;
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paper_architectures_have_expected_sizes() {
        // 3 gates per layer with W, U and one bias vector each, plus a 3-wide head.
        let count = |layers, hidden| Architecture::new(layers, hidden).param_count();
        assert_eq!(count(1, 256), 3 * (256 * 3 + 256 * 256 + 256) + 3 * 256 + 3);
        assert_eq!(count(2, 128), 3 * (128 * 3 + 128 * 128 + 128) + 3 * (2 * 128 * 128 + 128) + 3 * 128 + 3);
        // In the 200K / 150K / 60K ballpark of the usual GRU sizes.
        assert!((190_000..210_000).contains(&count(1, 256)));
        assert!((140_000..160_000).contains(&count(2, 128)));
        assert!((55_000..65_000).contains(&count(3, 64)));
    }

    #[test]
    fn addressing_is_a_bijection() {
        let arch = Architecture::new(2, 3);
        let mut seen = vec![false; arch.param_count()];
        for group in arch.groups() {
            let (rows, cols) = arch.shape(group);
            for row in 0..rows {
                for col in 0..cols {
                    let i = arch.index(ParamAddress { group, row, col });
                    assert!(!seen[i], "index {i} addressed twice");
                    seen[i] = true;
                    assert_eq!(arch.address(i), Some(ParamAddress { group, row, col }));
                }
            }
        }
        assert!(seen.iter().all(|&s| s));
        assert_eq!(arch.address(arch.param_count()), None);
    }

    #[test]
    fn canonical_order_puts_head_last() {
        let arch = Architecture::new(1, 2);
        let z_w = arch.range(ParamGroup::Gru { layer: 0, gate: Gate::Z, kind: ParamKind::Input });
        assert_eq!(z_w, 0..6);
        let z_u = arch.range(ParamGroup::Gru { layer: 0, gate: Gate::Z, kind: ParamKind::Recurrent });
        assert_eq!(z_u, 6..10);
        let r_w = arch.range(ParamGroup::Gru { layer: 0, gate: Gate::R, kind: ParamKind::Input });
        assert_eq!(r_w.start, 12);
        assert_eq!(arch.range(ParamGroup::HeadBias).end, arch.param_count());
    }

    #[test]
    fn uniform_init_respects_bound() {
        use rand::SeedableRng;
        let arch = Architecture::new(2, 16);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let p = ParameterStore::init_uniform(arch, &mut rng);
        assert!(p.values().iter().all(|v| v.abs() <= 0.25));
    }
}
