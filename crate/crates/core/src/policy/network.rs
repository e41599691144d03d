//! Recurrent actor-critic: two strided conv stages, a 2×2 average pool, a
//! 32-unit LSTM and linear actor/critic heads, with hand-written
//! backpropagation through time.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::structmap::StructuredMap;

pub const HIDDEN: usize = 32;
pub const CONV1_MAPS: usize = 8;
pub const CONV2_MAPS: usize = 16;
pub const IN_CHANNELS: usize = StructuredMap::CHANNELS;
/// prev_action (2) + prev_completeness (1).
pub const EXTRA_INPUTS: usize = 3;
pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 1.0;
pub const LOG_STD_INIT: f64 = -0.5;

const KERNEL: usize = 3;
const GATES: usize = 4 * HIDDEN;
const LN_2PI: f64 = 1.837_877_066_409_345_3;

fn conv_out(n: usize) -> usize {
    // kernel 3, stride 2, padding 1
    (n + 2 - KERNEL) / 2 + 1
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Name, shape and offset of one parameter tensor in the flat vector.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParamBlock {
    pub name: &'static str,
    pub shape: Vec<usize>,
    pub offset: usize,
}

impl ParamBlock {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Dims {
    rows: usize,
    cols: usize,
    h1: usize,
    w1: usize,
    h2: usize,
    w2: usize,
    hp: usize,
    wp: usize,
    features: usize,
}

impl Dims {
    fn new(rows: usize, cols: usize) -> Self {
        let (h1, w1) = (conv_out(rows), conv_out(cols));
        let (h2, w2) = (conv_out(h1), conv_out(w1));
        let (hp, wp) = (h2.div_ceil(2), w2.div_ceil(2));
        Self {
            rows,
            cols,
            h1,
            w1,
            h2,
            w2,
            hp,
            wp,
            features: CONV2_MAPS * hp * wp,
        }
    }

    fn lstm_in(&self) -> usize {
        self.features + EXTRA_INPUTS
    }
}

// Offsets into the flat parameter vector, in block order.
#[derive(Clone, Copy, Debug)]
struct Offsets {
    conv1_w: usize,
    conv1_b: usize,
    conv2_w: usize,
    conv2_b: usize,
    w_ih: usize,
    w_hh: usize,
    b: usize,
    actor_w: usize,
    actor_b: usize,
    log_std: usize,
    critic_w: usize,
    critic_b: usize,
}

/// LSTM hidden and cell vectors.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LstmState {
    pub h: [f64; HIDDEN],
    pub c: [f64; HIDDEN],
}

impl Default for LstmState {
    fn default() -> Self {
        Self {
            h: [0.0; HIDDEN],
            c: [0.0; HIDDEN],
        }
    }
}

/// One decision step's inputs.
#[derive(Clone, Copy, Debug)]
pub struct StepInput<'a> {
    /// Channel-major `3 × rows × cols` observation.
    pub obs: &'a [f64],
    pub prev_action: [f64; 2],
    pub prev_completeness: f64,
}

/// Gaussian (pre-squash) action distribution and value estimate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepOutput {
    pub mean: [f64; 2],
    pub log_std: [f64; 2],
    pub value: f64,
}

impl StepOutput {
    /// Deterministic action: the squashed mean.
    pub fn greedy_action(&self) -> [f64; 2] {
        [self.mean[0].tanh(), self.mean[1].tanh()]
    }

    /// Samples a pre-squash `u`; the action is `tanh(u)`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> [f64; 2] {
        let mut u = [0.0; 2];
        for (i, ui) in u.iter_mut().enumerate() {
            let z: f64 = StandardNormal.sample(rng);
            *ui = self.mean[i] + self.log_std[i].exp() * z;
        }
        u
    }

    /// Gaussian log-density of a pre-squash sample.
    pub fn log_prob(&self, u: [f64; 2]) -> f64 {
        (0..2)
            .map(|i| {
                let z = (u[i] - self.mean[i]) / self.log_std[i].exp();
                -0.5 * z * z - self.log_std[i] - 0.5 * LN_2PI
            })
            .sum()
    }

    pub fn entropy(&self) -> f64 {
        self.log_std.iter().map(|s| s + 0.5 * (LN_2PI + 1.0)).sum()
    }
}

pub fn squash(u: [f64; 2]) -> [f64; 2] {
    [u[0].tanh(), u[1].tanh()]
}

/// Loss gradients with respect to one step's outputs.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct OutputGrad {
    pub mean: [f64; 2],
    pub log_std: [f64; 2],
    pub value: f64,
}

#[derive(Clone, Debug)]
struct StepCache {
    obs: Vec<f64>,
    a1: Vec<f64>,
    a2: Vec<f64>,
    x: Vec<f64>,
    h_prev: [f64; HIDDEN],
    c_prev: [f64; HIDDEN],
    gates: [f64; GATES],
    tanh_c: [f64; HIDDEN],
    h: [f64; HIDDEN],
}

/// Activations retained by [`PolicyNetwork::forward_sequence`].
#[derive(Clone, Debug)]
pub struct SequenceCache {
    steps: Vec<StepCache>,
}

impl SequenceCache {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PolicyNetwork {
    dims: Dims,
    blocks: Vec<ParamBlock>,
    params: Vec<f64>,
}

impl PolicyNetwork {
    /// Fresh network for `rows × cols` observations, initialised from `seed`.
    pub fn new(rows: usize, cols: usize, seed: u64) -> Result<Self> {
        let mut net = Self::zeros(rows, cols)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let lstm_bound = 1.0 / (HIDDEN as f64).sqrt();
        let conv1_bound = 1.0 / ((IN_CHANNELS * KERNEL * KERNEL) as f64).sqrt();
        let conv2_bound = 1.0 / ((CONV1_MAPS * KERNEL * KERNEL) as f64).sqrt();
        let ih_bound = 1.0 / (net.dims.lstm_in() as f64).sqrt();
        let blocks = net.blocks.clone();
        for block in &blocks {
            let slice = &mut net.params[block.range()];
            match block.name {
                "conv1.weight" => fill_uniform(slice, conv1_bound, &mut rng),
                "conv2.weight" => fill_uniform(slice, conv2_bound, &mut rng),
                "lstm.w_ih" => fill_uniform(slice, ih_bound, &mut rng),
                "lstm.w_hh" => fill_uniform(slice, lstm_bound, &mut rng),
                "lstm.bias" => slice[HIDDEN..2 * HIDDEN].fill(1.0),
                "actor.weight" => fill_uniform(slice, 0.01, &mut rng),
                "actor.log_std" => slice.fill(LOG_STD_INIT),
                "critic.weight" => fill_uniform(slice, lstm_bound, &mut rng),
                _ => {}
            }
        }
        Ok(net)
    }

    /// All-zero parameters with the layout for `rows × cols`.
    pub fn zeros(rows: usize, cols: usize) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Parameter(format!(
                "network input must be non-empty, got {rows}x{cols}"
            )));
        }
        let dims = Dims::new(rows, cols);
        let shapes: [(&'static str, Vec<usize>); 12] = [
            (
                "conv1.weight",
                vec![CONV1_MAPS, IN_CHANNELS, KERNEL, KERNEL],
            ),
            ("conv1.bias", vec![CONV1_MAPS]),
            ("conv2.weight", vec![CONV2_MAPS, CONV1_MAPS, KERNEL, KERNEL]),
            ("conv2.bias", vec![CONV2_MAPS]),
            ("lstm.w_ih", vec![GATES, dims.lstm_in()]),
            ("lstm.w_hh", vec![GATES, HIDDEN]),
            ("lstm.bias", vec![GATES]),
            ("actor.weight", vec![2, HIDDEN]),
            ("actor.bias", vec![2]),
            ("actor.log_std", vec![2]),
            ("critic.weight", vec![1, HIDDEN]),
            ("critic.bias", vec![1]),
        ];
        let mut offset = 0;
        let blocks: Vec<ParamBlock> = shapes
            .into_iter()
            .map(|(name, shape)| {
                let b = ParamBlock {
                    name,
                    shape,
                    offset,
                };
                offset += b.len();
                b
            })
            .collect();
        Ok(Self {
            dims,
            blocks,
            params: vec![0.0; offset],
        })
    }

    pub fn input_shape(&self) -> (usize, usize) {
        (self.dims.rows, self.dims.cols)
    }

    pub fn blocks(&self) -> &[ParamBlock] {
        &self.blocks
    }

    pub fn block(&self, name: &str) -> Option<&ParamBlock> {
        self.blocks.iter().find(|b| b.name == name)
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn offsets(&self) -> Offsets {
        let o = |i: usize| self.blocks[i].offset;
        Offsets {
            conv1_w: o(0),
            conv1_b: o(1),
            conv2_w: o(2),
            conv2_b: o(3),
            w_ih: o(4),
            w_hh: o(5),
            b: o(6),
            actor_w: o(7),
            actor_b: o(8),
            log_std: o(9),
            critic_w: o(10),
            critic_b: o(11),
        }
    }

    fn check(&self, input: &StepInput) -> Result<()> {
        let expected = IN_CHANNELS * self.dims.rows * self.dims.cols;
        if input.obs.len() != expected {
            return Err(Error::DimensionMismatch {
                expected: (self.dims.rows, self.dims.cols),
                actual: (
                    input.obs.len() / (IN_CHANNELS * self.dims.cols).max(1),
                    self.dims.cols,
                ),
            });
        }
        Ok(())
    }

    fn check_params(&self) -> Result<()> {
        if let Some(i) = self.params.iter().position(|p| !p.is_finite()) {
            let block = self
                .blocks
                .iter()
                .find(|b| b.range().contains(&i))
                .map_or("?", |b| b.name);
            return Err(Error::NonFinite(format!(
                "parameter {i} in block `{block}` is {}",
                self.params[i]
            )));
        }
        Ok(())
    }

    /// One recurrent step without retaining activations.
    pub fn step(&self, input: &StepInput, state: &LstmState) -> Result<(StepOutput, LstmState)> {
        self.check(input)?;
        self.check_params()?;
        let (out, cache) = self.forward_step(input, state);
        Ok((
            out,
            LstmState {
                h: cache.h,
                c: cell_from(&cache),
            },
        ))
    }

    /// Runs a sequence from `init`, keeping activations for backprop.
    pub fn forward_sequence(
        &self,
        inputs: &[StepInput],
        init: &LstmState,
    ) -> Result<(Vec<StepOutput>, SequenceCache)> {
        self.check_params()?;
        let mut state = *init;
        let mut outs = Vec::with_capacity(inputs.len());
        let mut steps = Vec::with_capacity(inputs.len());
        for input in inputs {
            self.check(input)?;
            let (out, cache) = self.forward_step(input, &state);
            state = LstmState {
                h: cache.h,
                c: cell_from(&cache),
            };
            outs.push(out);
            steps.push(cache);
        }
        Ok((outs, SequenceCache { steps }))
    }

    fn forward_step(&self, input: &StepInput, state: &LstmState) -> (StepOutput, StepCache) {
        let d = self.dims;
        let o = self.offsets();
        let p = &self.params;

        let mut a1 = conv_forward(
            input.obs,
            IN_CHANNELS,
            d.rows,
            d.cols,
            &p[o.conv1_w..o.conv1_b],
            &p[o.conv1_b..o.conv2_w],
            CONV1_MAPS,
        );
        a1.iter_mut().for_each(|v| *v = v.tanh());
        let mut a2 = conv_forward(
            &a1,
            CONV1_MAPS,
            d.h1,
            d.w1,
            &p[o.conv2_w..o.conv2_b],
            &p[o.conv2_b..o.w_ih],
            CONV2_MAPS,
        );
        a2.iter_mut().for_each(|v| *v = v.tanh());

        let mut x = avg_pool(&a2, CONV2_MAPS, d.h2, d.w2);
        x.extend_from_slice(&[
            input.prev_action[0],
            input.prev_action[1],
            input.prev_completeness,
        ]);

        let n_in = d.lstm_in();
        let w_ih = &p[o.w_ih..o.w_hh];
        let w_hh = &p[o.w_hh..o.b];
        let mut gates = [0.0; GATES];
        for (g, z) in gates.iter_mut().enumerate() {
            let mut acc = p[o.b + g];
            acc += dot(&w_ih[g * n_in..(g + 1) * n_in], &x);
            acc += dot(&w_hh[g * HIDDEN..(g + 1) * HIDDEN], &state.h);
            *z = match g / HIDDEN {
                2 => acc.tanh(),
                _ => sigmoid(acc),
            };
        }
        let mut c = [0.0; HIDDEN];
        let mut tanh_c = [0.0; HIDDEN];
        let mut h = [0.0; HIDDEN];
        for j in 0..HIDDEN {
            let (i, f, g, og) = gate_values(&gates, j);
            c[j] = f * state.c[j] + i * g;
            tanh_c[j] = c[j].tanh();
            h[j] = og * tanh_c[j];
        }

        let mut mean = [0.0; 2];
        for (k, m) in mean.iter_mut().enumerate() {
            *m = p[o.actor_b + k]
                + dot(&p[o.actor_w + k * HIDDEN..o.actor_w + (k + 1) * HIDDEN], &h);
        }
        let log_std = [
            p[o.log_std].clamp(LOG_STD_MIN, LOG_STD_MAX),
            p[o.log_std + 1].clamp(LOG_STD_MIN, LOG_STD_MAX),
        ];
        let value = p[o.critic_b] + dot(&p[o.critic_w..o.critic_w + HIDDEN], &h);

        let cache = StepCache {
            obs: input.obs.to_vec(),
            a1,
            a2,
            x,
            h_prev: state.h,
            c_prev: state.c,
            gates,
            tanh_c,
            h,
        };
        (
            StepOutput {
                mean,
                log_std,
                value,
            },
            cache,
        )
    }

    /// Backpropagates per-step output gradients through the whole sequence,
    /// accumulating into `grad` (same layout as [`params`](Self::params)).
    pub fn backward_sequence(&self, cache: &SequenceCache, grads: &[OutputGrad], grad: &mut [f64]) {
        assert_eq!(cache.steps.len(), grads.len(), "one gradient per step");
        assert_eq!(grad.len(), self.params.len(), "gradient buffer size");
        let d = self.dims;
        let o = self.offsets();
        let p = &self.params;
        let n_in = d.lstm_in();
        let mut dh_next = [0.0; HIDDEN];
        let mut dc_next = [0.0; HIDDEN];

        for (step, g_out) in cache.steps.iter().zip(grads).rev() {
            // heads
            let mut dh = dh_next;
            for k in 0..2 {
                let gk = g_out.mean[k];
                grad[o.actor_b + k] += gk;
                let row = o.actor_w + k * HIDDEN;
                for j in 0..HIDDEN {
                    grad[row + j] += gk * step.h[j];
                    dh[j] += gk * p[row + j];
                }
                let raw = p[o.log_std + k];
                if (LOG_STD_MIN..=LOG_STD_MAX).contains(&raw) {
                    grad[o.log_std + k] += g_out.log_std[k];
                }
            }
            grad[o.critic_b] += g_out.value;
            for j in 0..HIDDEN {
                grad[o.critic_w + j] += g_out.value * step.h[j];
                dh[j] += g_out.value * p[o.critic_w + j];
            }

            // LSTM cell
            let mut dz = [0.0; GATES];
            for j in 0..HIDDEN {
                let (i, f, g, og) = gate_values(&step.gates, j);
                let tc = step.tanh_c[j];
                let dc = dh[j] * og * (1.0 - tc * tc) + dc_next[j];
                dz[j] = dc * g * i * (1.0 - i);
                dz[HIDDEN + j] = dc * step.c_prev[j] * f * (1.0 - f);
                dz[2 * HIDDEN + j] = dc * i * (1.0 - g * g);
                dz[3 * HIDDEN + j] = dh[j] * tc * og * (1.0 - og);
                dc_next[j] = dc * f;
            }
            let mut dx = vec![0.0; n_in];
            dh_next = [0.0; HIDDEN];
            for (gi, &dzg) in dz.iter().enumerate() {
                if dzg == 0.0 {
                    continue;
                }
                grad[o.b + gi] += dzg;
                let ih = o.w_ih + gi * n_in;
                for (k, xk) in step.x.iter().enumerate() {
                    grad[ih + k] += dzg * xk;
                    dx[k] += dzg * p[ih + k];
                }
                let hh = o.w_hh + gi * HIDDEN;
                for j in 0..HIDDEN {
                    grad[hh + j] += dzg * step.h_prev[j];
                    dh_next[j] += dzg * p[hh + j];
                }
            }

            // encoder
            let mut da2 = avg_pool_backward(&dx[..d.features], CONV2_MAPS, d.h2, d.w2);
            for (g, a) in da2.iter_mut().zip(&step.a2) {
                *g *= 1.0 - a * a;
            }
            let mut da1 = vec![0.0; step.a1.len()];
            let (gw2, rest) = grad[o.conv2_w..o.w_ih].split_at_mut(o.conv2_b - o.conv2_w);
            conv_backward(
                &step.a1,
                CONV1_MAPS,
                d.h1,
                d.w1,
                &p[o.conv2_w..o.conv2_b],
                CONV2_MAPS,
                &da2,
                gw2,
                rest,
                Some(&mut da1),
            );
            for (g, a) in da1.iter_mut().zip(&step.a1) {
                *g *= 1.0 - a * a;
            }
            let (gw1, rest) = grad[o.conv1_w..o.conv2_w].split_at_mut(o.conv1_b - o.conv1_w);
            conv_backward(
                &step.obs,
                IN_CHANNELS,
                d.rows,
                d.cols,
                &p[o.conv1_w..o.conv1_b],
                CONV1_MAPS,
                &da1,
                gw1,
                rest,
                None,
            );
        }
    }
}

fn cell_from(cache: &StepCache) -> [f64; HIDDEN] {
    let mut c = [0.0; HIDDEN];
    for (j, cj) in c.iter_mut().enumerate() {
        let (i, f, g, _) = gate_values(&cache.gates, j);
        *cj = f * cache.c_prev[j] + i * g;
    }
    c
}

#[inline]
fn gate_values(gates: &[f64; GATES], j: usize) -> (f64, f64, f64, f64) {
    (
        gates[j],
        gates[HIDDEN + j],
        gates[2 * HIDDEN + j],
        gates[3 * HIDDEN + j],
    )
}

fn fill_uniform(slice: &mut [f64], bound: f64, rng: &mut ChaCha8Rng) {
    for v in slice {
        *v = rng.random_range(-bound..bound);
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// 3×3, stride 2, zero-padding 1. Returns pre-activation outputs.
fn conv_forward(
    input: &[f64],
    in_c: usize,
    h: usize,
    w: usize,
    weight: &[f64],
    bias: &[f64],
    out_c: usize,
) -> Vec<f64> {
    let (oh, ow) = (conv_out(h), conv_out(w));
    let mut out = vec![0.0; out_c * oh * ow];
    for oc in 0..out_c {
        let plane = &mut out[oc * oh * ow..(oc + 1) * oh * ow];
        plane.fill(bias[oc]);
        for ic in 0..in_c {
            let src = &input[ic * h * w..(ic + 1) * h * w];
            let k = &weight[(oc * in_c + ic) * 9..(oc * in_c + ic + 1) * 9];
            for oy in 0..oh {
                for ky in 0..KERNEL {
                    let iy = (2 * oy + ky) as isize - 1;
                    if iy < 0 || iy as usize >= h {
                        continue;
                    }
                    let row = &src[iy as usize * w..(iy as usize + 1) * w];
                    for ox in 0..ow {
                        let mut acc = 0.0;
                        for kx in 0..KERNEL {
                            let ix = (2 * ox + kx) as isize - 1;
                            if ix >= 0 && (ix as usize) < w {
                                acc += k[ky * 3 + kx] * row[ix as usize];
                            }
                        }
                        plane[oy * ow + ox] += acc;
                    }
                }
            }
        }
    }
    out
}

#[allow(clippy::too_many_arguments)]
fn conv_backward(
    input: &[f64],
    in_c: usize,
    h: usize,
    w: usize,
    weight: &[f64],
    out_c: usize,
    dout: &[f64],
    gw: &mut [f64],
    gb: &mut [f64],
    mut din: Option<&mut Vec<f64>>,
) {
    let (oh, ow) = (conv_out(h), conv_out(w));
    for oc in 0..out_c {
        let dplane = &dout[oc * oh * ow..(oc + 1) * oh * ow];
        gb[oc] += dplane.iter().sum::<f64>();
        for ic in 0..in_c {
            let src = &input[ic * h * w..(ic + 1) * h * w];
            let kidx = (oc * in_c + ic) * 9;
            for oy in 0..oh {
                for ox in 0..ow {
                    let g = dplane[oy * ow + ox];
                    if g == 0.0 {
                        continue;
                    }
                    for ky in 0..KERNEL {
                        let iy = (2 * oy + ky) as isize - 1;
                        if iy < 0 || iy as usize >= h {
                            continue;
                        }
                        for kx in 0..KERNEL {
                            let ix = (2 * ox + kx) as isize - 1;
                            if ix < 0 || ix as usize >= w {
                                continue;
                            }
                            let at = iy as usize * w + ix as usize;
                            gw[kidx + ky * 3 + kx] += g * src[at];
                            if let Some(din) = din.as_deref_mut() {
                                din[ic * h * w + at] += g * weight[kidx + ky * 3 + kx];
                            }
                        }
                    }
                }
            }
        }
    }
}

/// 2×2 average pool, stride 2, partial windows averaged over their valid
/// cells.
fn avg_pool(input: &[f64], c: usize, h: usize, w: usize) -> Vec<f64> {
    let (ph, pw) = (h.div_ceil(2), w.div_ceil(2));
    let mut out = Vec::with_capacity(c * ph * pw + EXTRA_INPUTS);
    for ch in 0..c {
        let src = &input[ch * h * w..(ch + 1) * h * w];
        for py in 0..ph {
            for px in 0..pw {
                let (mut s, mut n) = (0.0, 0.0);
                for y in 2 * py..(2 * py + 2).min(h) {
                    for x in 2 * px..(2 * px + 2).min(w) {
                        s += src[y * w + x];
                        n += 1.0;
                    }
                }
                out.push(s / n);
            }
        }
    }
    out
}

fn avg_pool_backward(dout: &[f64], c: usize, h: usize, w: usize) -> Vec<f64> {
    let (ph, pw) = (h.div_ceil(2), w.div_ceil(2));
    let mut din = vec![0.0; c * h * w];
    for ch in 0..c {
        for py in 0..ph {
            for px in 0..pw {
                let ys = 2 * py..(2 * py + 2).min(h);
                let xs = 2 * px..(2 * px + 2).min(w);
                let n = (ys.len() * xs.len()) as f64;
                let g = dout[(ch * ph + py) * pw + px] / n;
                for y in ys {
                    for x in xs.clone() {
                        din[(ch * h + y) * w + x] += g;
                    }
                }
            }
        }
    }
    din
}
