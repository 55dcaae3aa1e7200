//! Branching dueling Q-network: shared rectifier trunk, a fused per-branch
//! hidden layer, one state-value head and one advantage head per branch.
//! A single branch of width `2^B` gives the flat dueling DQN baseline.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::Scalar;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetSpec {
    pub input: usize,
    pub trunk: Vec<usize>,
    /// Hidden width of each branch (and of the value head); 0 connects the
    /// heads straight to the trunk.
    pub branch_hidden: usize,
    /// Sub-action count of each branch.
    pub branches: Vec<usize>,
}

impl NetSpec {
    pub fn outputs(&self) -> usize {
        1 + self.branches.iter().sum::<usize>()
    }

    /// Flat DQN over `binary_dims` binary decisions: one head with
    /// `2^binary_dims` actions. Rejected when the output count would exceed
    /// `max_outputs`.
    pub fn flat_dqn(input: usize, trunk: Vec<usize>, hidden: usize, binary_dims: usize, max_outputs: usize) -> Result<Self> {
        let outputs = if binary_dims < 63 { (1u64 << binary_dims) + 1 } else { u64::MAX };
        if outputs > max_outputs as u64 {
            return Err(Error::Guard(format!("flat head needs 1 + 2^{binary_dims} outputs, guard is {max_outputs}")));
        }
        Ok(Self { input, trunk, branch_hidden: hidden, branches: vec![1usize << binary_dims] })
    }

    pub fn validate(&self) -> Result<()> {
        if self.input == 0 || self.branches.is_empty() || self.branches.contains(&0) || self.trunk.contains(&0) {
            return Err(Error::Config(format!("degenerate network spec {self:?}")));
        }
        Ok(())
    }

    /// Layer shapes in declaration (and checkpoint) order.
    pub fn layer_shapes(&self) -> Vec<LayerShape> {
        let mut out = Vec::new();
        let mut prev = self.input;
        for &w in &self.trunk {
            out.push(LayerShape { n_in: prev, n_out: w });
            prev = w;
        }
        let head_in = if self.branch_hidden > 0 {
            out.push(LayerShape { n_in: prev, n_out: (self.branches.len() + 1) * self.branch_hidden });
            self.branch_hidden
        } else {
            prev
        };
        out.push(LayerShape { n_in: head_in, n_out: 1 });
        for &j in &self.branches {
            out.push(LayerShape { n_in: head_in, n_out: j });
        }
        out
    }

    pub fn param_count(&self) -> usize {
        self.layer_shapes().iter().map(|l| l.n_in * l.n_out + l.n_out).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerShape {
    pub n_in: usize,
    pub n_out: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Layer {
    n_in: usize,
    n_out: usize,
    w: usize,
    b: usize,
}

/// Network parameters in one flat array; weights are stored row-major
/// `n_in × n_out`, each followed by its bias.
#[derive(Debug, Clone, PartialEq)]
pub struct Bdq<T> {
    spec: NetSpec,
    layers: Vec<Layer>,
    branch_offsets: Vec<usize>,
    params: Vec<T>,
}

/// Activations of one batched forward pass.
#[derive(Debug, Clone)]
pub struct Forward<T> {
    pub batch: usize,
    /// `batch` state values.
    pub value: Vec<T>,
    /// Advantages, `batch × Σj`, branches concatenated per row.
    pub adv: Vec<T>,
    /// Q-values in the same layout as `adv`.
    pub q: Vec<T>,
    /// Trunk activations; index 0 is the input.
    trunk: Vec<Vec<T>>,
    head: Vec<T>,
}

impl<T: Scalar> Bdq<T> {
    /// Network with all parameters zero.
    pub fn zeros(spec: NetSpec) -> Result<Self> {
        spec.validate()?;
        let mut layers = Vec::new();
        let mut off = 0;
        for s in spec.layer_shapes() {
            layers.push(Layer { n_in: s.n_in, n_out: s.n_out, w: off, b: off + s.n_in * s.n_out });
            off += s.n_in * s.n_out + s.n_out;
        }
        let mut branch_offsets = vec![0];
        for &j in &spec.branches {
            branch_offsets.push(branch_offsets.last().unwrap() + j);
        }
        Ok(Self { spec, layers, branch_offsets, params: vec![T::zero(); off] })
    }

    /// Fan-in scaled uniform weights, zero biases; output heads scaled by 0.01.
    pub fn new<R: Rng + ?Sized>(spec: NetSpec, rng: &mut R) -> Result<Self> {
        let mut net = Self::zeros(spec)?;
        let first_head = net.value_layer();
        for (li, l) in net.layers.clone().into_iter().enumerate() {
            let bound = 1.0 / (l.n_in as f64).sqrt();
            let scale = if li >= first_head { 0.01 } else { 1.0 };
            for p in &mut net.params[l.w..l.b] {
                *p = T::lit(rng.random_range(-bound..bound) * scale);
            }
        }
        Ok(net)
    }

    pub fn spec(&self) -> &NetSpec {
        &self.spec
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [T] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn outputs(&self) -> usize {
        self.spec.outputs()
    }

    pub fn branch_count(&self) -> usize {
        self.spec.branches.len()
    }

    /// Column range of branch `i` within a row of `adv`/`q`.
    pub fn branch_range(&self, i: usize) -> std::ops::Range<usize> {
        self.branch_offsets[i]..self.branch_offsets[i + 1]
    }

    fn width(&self) -> usize {
        *self.branch_offsets.last().unwrap()
    }

    fn has_head_hidden(&self) -> bool {
        self.spec.branch_hidden > 0
    }

    fn trunk_width(&self) -> usize {
        self.spec.trunk.last().copied().unwrap_or(self.spec.input)
    }

    fn value_layer(&self) -> usize {
        self.spec.trunk.len() + usize::from(self.has_head_hidden())
    }

    /// Copies all parameters from `other` (target-network sync).
    pub fn copy_from(&mut self, other: &Self) {
        assert_eq!(self.spec, other.spec, "copy between different architectures");
        self.params.copy_from_slice(&other.params);
    }

    pub fn set_params(&mut self, p: &[T]) -> Result<()> {
        if p.len() != self.params.len() {
            return Err(Error::Dimension(format!("{} parameters for a {}-parameter net", p.len(), self.params.len())));
        }
        self.params.copy_from_slice(p);
        Ok(())
    }

    /// `out = x·W + b` for rows of `x` with row stride `rsx`.
    fn affine(&self, l: Layer, x: &[T], rsx: usize, batch: usize, out: &mut [T], rso: usize, co: usize) {
        for r in 0..batch {
            out[r * rso + co..r * rso + co + l.n_out].copy_from_slice(&self.params[l.b..l.b + l.n_out]);
        }
        T::gemm(batch, l.n_in, l.n_out, T::one(), x, rsx, 1, &self.params[l.w..l.b], l.n_out, 1, T::one(), &mut out[co..], rso, 1);
    }

    pub fn forward(&self, x: &[T], batch: usize) -> Result<Forward<T>> {
        if x.len() != batch * self.spec.input {
            return Err(Error::Dimension(format!("input of {} values for batch {batch} × width {}", x.len(), self.spec.input)));
        }
        let mut trunk = vec![x.to_vec()];
        for l in &self.layers[..self.spec.trunk.len()] {
            let mut out = vec![T::zero(); batch * l.n_out];
            self.affine(*l, trunk.last().unwrap(), l.n_in, batch, &mut out, l.n_out, 0);
            relu(&mut out);
            trunk.push(out);
        }
        let trunk_out = trunk.last().unwrap();
        let trunk_w = self.trunk_width();
        let h = self.spec.branch_hidden;
        let mut head = Vec::new();
        if self.has_head_hidden() {
            let l = self.layers[self.spec.trunk.len()];
            head = vec![T::zero(); batch * l.n_out];
            self.affine(l, trunk_out, trunk_w, batch, &mut head, l.n_out, 0);
            relu(&mut head);
        }
        let (head_src, head_rs): (&[T], usize) = if self.has_head_hidden() { (&head, (self.branch_count() + 1) * h) } else { (trunk_out, trunk_w) };
        let vl = self.value_layer();
        let mut value = vec![T::zero(); batch];
        self.affine(self.layers[vl], head_src, head_rs, batch, &mut value, 1, 0);
        let s = self.width();
        let mut adv = vec![T::zero(); batch * s];
        for i in 0..self.branch_count() {
            let src_off = if self.has_head_hidden() { (i + 1) * h } else { 0 };
            let src = &head_src[src_off.min(head_src.len())..];
            self.affine(self.layers[vl + 1 + i], src, head_rs, batch, &mut adv, s, self.branch_offsets[i]);
        }
        let mut q = vec![T::zero(); batch * s];
        for r in 0..batch {
            for i in 0..self.branch_count() {
                let range = self.branch_range(i);
                let row = &adv[r * s + range.start..r * s + range.end];
                let mean = row.iter().copied().sum::<T>() / T::lit(row.len() as f64);
                for (k, &a) in row.iter().enumerate() {
                    q[r * s + range.start + k] = value[r] + a - mean;
                }
            }
        }
        Ok(Forward { batch, value, adv, q, trunk, head })
    }

    /// Per-branch Q-values of one state.
    pub fn q_values(&self, state: &[T]) -> Result<Vec<Vec<T>>> {
        let f = self.forward(state, 1)?;
        Ok((0..self.branch_count()).map(|i| f.q[self.branch_range(i)].to_vec()).collect())
    }

    /// Greedy sub-action per branch, ties to the lowest index.
    pub fn greedy(&self, state: &[T]) -> Result<Vec<usize>> {
        let f = self.forward(state, 1)?;
        Ok((0..self.branch_count()).map(|i| argmax(&f.q[self.branch_range(i)])).collect())
    }

    /// Greedy sub-actions for every row of a forward pass.
    pub fn greedy_batch(&self, f: &Forward<T>) -> Vec<usize> {
        let s = self.width();
        let j = self.branch_count();
        let mut out = Vec::with_capacity(f.batch * j);
        for r in 0..f.batch {
            for i in 0..j {
                let range = self.branch_range(i);
                out.push(argmax(&f.q[r * s + range.start..r * s + range.end]));
            }
        }
        out
    }

    /// Branched loss `mean_batch (1/J) Σ_i (y - Q_i(s, a_i))²` and its
    /// gradient with respect to every parameter, written into `grads`.
    /// `actions` is `batch × J`.
    pub fn loss_and_grads(&self, states: &[T], actions: &[usize], targets: &[T], grads: &mut [T]) -> Result<T> {
        let batch = targets.len();
        let j = self.branch_count();
        if actions.len() != batch * j || grads.len() != self.params.len() {
            return Err(Error::Dimension("actions or gradient buffer has the wrong size".into()));
        }
        let f = self.forward(states, batch)?;
        let s = self.width();
        let scale = T::lit(1.0 / (batch * j) as f64);
        let mut loss = T::zero();
        let mut d_value = vec![T::zero(); batch];
        let mut d_adv = vec![T::zero(); batch * s];
        for r in 0..batch {
            for i in 0..j {
                let range = self.branch_range(i);
                let a = actions[r * j + i];
                if a >= range.len() {
                    return Err(Error::SubAction(format!("branch {i} action {a} of {}", range.len())));
                }
                let err = targets[r] - f.q[r * s + range.start + a];
                loss += err * err * scale;
                let g = T::lit(-2.0) * err * scale;
                d_value[r] += g;
                let share = g / T::lit(range.len() as f64);
                for k in range.clone() {
                    d_adv[r * s + k] -= share;
                }
                d_adv[r * s + range.start + a] += g;
            }
        }
        grads.iter_mut().for_each(|g| *g = T::zero());
        self.backward(&f, &d_value, &d_adv, grads);
        Ok(loss)
    }

    fn backward(&self, f: &Forward<T>, d_value: &[T], d_adv: &[T], grads: &mut [T]) {
        let batch = f.batch;
        let nt = self.spec.trunk.len();
        let trunk_out = f.trunk.last().unwrap();
        let trunk_w = self.trunk_width();
        let h = self.spec.branch_hidden;
        let (head_src, head_rs): (&[T], usize) = if self.has_head_hidden() { (&f.head, (self.branch_count() + 1) * h) } else { (trunk_out, trunk_w) };
        let mut d_head = vec![T::zero(); batch * head_rs];
        let vl = self.value_layer();
        let s = self.width();
        self.layer_backward(self.layers[vl], batch, head_src, head_rs, d_value, 1, Some((&mut d_head, head_rs)), grads);
        for i in 0..self.branch_count() {
            let off = if self.has_head_hidden() { (i + 1) * h } else { 0 };
            let l = self.layers[vl + 1 + i];
            let mut dx = vec![T::zero(); batch * l.n_in];
            self.layer_backward(l, batch, &head_src[off..], head_rs, &d_adv[self.branch_offsets[i]..], s, Some((&mut dx, l.n_in)), grads);
            for r in 0..batch {
                for c in 0..l.n_in {
                    d_head[r * head_rs + off + c] += dx[r * l.n_in + c];
                }
            }
        }
        let mut d_out = if self.has_head_hidden() {
            relu_grad(&mut d_head, &f.head);
            let l = self.layers[nt];
            let mut dx = vec![T::zero(); batch * trunk_w];
            self.layer_backward(l, batch, trunk_out, trunk_w, &d_head, l.n_out, Some((&mut dx, trunk_w)), grads);
            dx
        } else {
            d_head
        };
        for li in (0..nt).rev() {
            let l = self.layers[li];
            relu_grad(&mut d_out, &f.trunk[li + 1]);
            let mut dx = vec![T::zero(); batch * l.n_in];
            let need_dx = li > 0;
            self.layer_backward(l, batch, &f.trunk[li], l.n_in, &d_out, l.n_out, need_dx.then_some((&mut dx[..], l.n_in)), grads);
            d_out = dx;
        }
    }

    /// Accumulates weight/bias gradients of layer `l` and, when requested,
    /// writes the input gradient `dy·Wᵀ` into `dx`.
    #[allow(clippy::too_many_arguments)]
    fn layer_backward(&self, l: Layer, batch: usize, x: &[T], rsx: usize, dy: &[T], rsd: usize, dx: Option<(&mut [T], usize)>, grads: &mut [T]) {
        if batch == 0 {
            return;
        }
        // dW = xᵀ·dy
        T::gemm(l.n_in, batch, l.n_out, T::one(), x, 1, rsx, dy, rsd, 1, T::one(), &mut grads[l.w..l.b], l.n_out, 1);
        for r in 0..batch {
            for c in 0..l.n_out {
                grads[l.b + c] += dy[r * rsd + c];
            }
        }
        if let Some((dx, rsdx)) = dx {
            T::gemm(batch, l.n_out, l.n_in, T::one(), dy, rsd, 1, &self.params[l.w..l.b], 1, l.n_out, T::zero(), dx, rsdx, 1);
        }
    }
}

fn relu<T: Scalar>(v: &mut [T]) {
    for x in v {
        if *x < T::zero() {
            *x = T::zero();
        }
    }
}

fn relu_grad<T: Scalar>(d: &mut [T], out: &[T]) {
    for (g, &o) in d.iter_mut().zip(out) {
        if o <= T::zero() {
            *g = T::zero();
        }
    }
}

/// Index of the largest value; the first one wins ties.
pub fn argmax<T: Scalar>(v: &[T]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Double-Q targets shared by all branches:
/// `y = r + γ (1/J) Σ_i Q⁻_i(s', argmax_a Q_i(s', a))`, no bootstrap on
/// terminal transitions.
pub fn td_targets<T: Scalar>(online: &Bdq<T>, target: &Bdq<T>, next_states: &[T], rewards: &[T], terminal: &[bool], gamma: T) -> Result<Vec<T>> {
    let batch = rewards.len();
    if terminal.len() != batch {
        return Err(Error::Dimension("terminal flags and rewards differ in length".into()));
    }
    let fo = online.forward(next_states, batch)?;
    let ft = target.forward(next_states, batch)?;
    let best = online.greedy_batch(&fo);
    let j = online.branch_count();
    let s = online.width();
    let inv_j = T::lit(1.0 / j as f64);
    Ok((0..batch)
        .map(|r| {
            if terminal[r] {
                return rewards[r];
            }
            let boot: T = (0..j).map(|i| ft.q[r * s + online.branch_range(i).start + best[r * j + i]]).sum();
            rewards[r] + gamma * boot * inv_j
        })
        .collect())
}
