//! Fully connected tanh networks.
//!
//! A network maps a physical point (mm) to its outputs. The point is first
//! divided component-wise by `input_scale`, optionally passed through a
//! frozen random Fourier embedding, and then through `hidden` tanh layers and
//! a linear output layer.
//!
//! Two evaluation paths exist. [`forward_generic`] runs over any [`Real`] and
//! is what the tests differentiate. [`JetCache`] propagates value, spatial
//! gradient and spatial Hessian of every neuron together and back-propagates
//! adjoints of those jets to the weights by hand; training uses it.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::autodiff::Real;
use crate::error::{Error, Result};

/// Frozen Fourier feature map `x ↦ [cos(Bx); sin(Bx)]` with `B ∈ R^{m×3}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FourierSpec {
    pub m: usize,
    pub sigma: f64,
    pub seed: u64,
    pub b: Vec<[f64; 3]>,
}

impl FourierSpec {
    pub fn draw(m: usize, sigma: f64, seed: u64) -> Result<Self> {
        if m == 0 || !(sigma.is_finite() && sigma > 0.0) {
            return Err(Error::Config(format!(
                "fourier features need m >= 1 and sigma > 0 (got m={m}, sigma={sigma})"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, sigma).expect("sigma checked above");
        let b = (0..m)
            .map(|_| {
                [
                    normal.sample(&mut rng),
                    normal.sample(&mut rng),
                    normal.sample(&mut rng),
                ]
            })
            .collect();
        Ok(Self { m, sigma, seed, b })
    }

    pub fn dim(&self) -> usize {
        2 * self.m
    }

    pub fn embed(&self, x: &[f64; 3]) -> Vec<f64> {
        embed_generic(self, x)
    }
}

fn embed_generic<T: Real>(fs: &FourierSpec, x: &[T; 3]) -> Vec<T> {
    let phases: Vec<T> = fs
        .b
        .iter()
        .map(|r| x[0] * r[0] + x[1] * r[1] + x[2] * r[2])
        .collect();
    let mut out: Vec<T> = phases.iter().map(|p| p.cos()).collect();
    out.extend(phases.iter().map(|p| p.sin()));
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MlpSpec {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub output_dim: usize,
    /// Inputs are divided by these before anything else; empty means 1.
    #[serde(default)]
    pub input_scale: Vec<f64>,
    #[serde(default)]
    pub fourier: Option<FourierSpec>,
}

impl MlpSpec {
    pub fn new(input_dim: usize, hidden: Vec<usize>, output_dim: usize) -> Self {
        Self {
            input_dim,
            hidden,
            output_dim,
            input_scale: Vec::new(),
            fourier: None,
        }
    }

    pub fn displacement() -> Self {
        Self::new(3, vec![32, 16, 8], 3)
    }

    pub fn stiffness() -> Self {
        Self::new(3, vec![12, 8, 4], 1)
    }

    pub fn with_input_scale(mut self, scale: [f64; 3]) -> Self {
        self.input_scale = scale.to_vec();
        self
    }

    pub fn with_fourier(mut self, fs: FourierSpec) -> Self {
        self.fourier = Some(fs);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(Error::Config(
                "hidden layers must be non-empty with positive widths".into(),
            ));
        }
        if self.input_dim == 0 || self.output_dim == 0 {
            return Err(Error::Config("input and output dimensions must be >= 1".into()));
        }
        if !self.input_scale.is_empty() {
            if self.input_scale.len() != self.input_dim {
                return Err(Error::Dimension {
                    expected: self.input_dim,
                    got: self.input_scale.len(),
                });
            }
            if self.input_scale.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
                return Err(Error::Config("input scales must be positive".into()));
            }
        }
        if let Some(fs) = &self.fourier {
            if self.input_dim != 3 || fs.b.len() != fs.m {
                return Err(Error::Config(
                    "fourier embedding needs 3 inputs and an m x 3 matrix".into(),
                ));
            }
        }
        Ok(())
    }

    /// Width of the vector entering the first dense layer.
    pub fn feature_dim(&self) -> usize {
        match &self.fourier {
            Some(fs) => fs.dim(),
            None => self.input_dim,
        }
    }

    /// `(fan_in, fan_out)` of every dense layer, output layer last.
    pub fn layers(&self) -> Vec<(usize, usize)> {
        let mut dims = vec![self.feature_dim()];
        dims.extend(&self.hidden);
        dims.push(self.output_dim);
        dims.windows(2).map(|w| (w[0], w[1])).collect()
    }

    pub fn param_count(&self) -> usize {
        self.layers().iter().map(|(i, o)| (i + 1) * o).sum()
    }

    fn scale(&self, d: usize) -> f64 {
        self.input_scale.get(d).copied().unwrap_or(1.0)
    }
}

/// Flat weights: for each layer, the row-major `fan_out × fan_in` matrix
/// followed by the `fan_out` biases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct WeightVector(pub Vec<f64>);

impl WeightVector {
    pub fn zeros(spec: &MlpSpec) -> Self {
        Self(vec![0.0; spec.param_count()])
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

    /// Index of the bias of output neuron `o` in the last layer.
    pub fn output_bias_index(spec: &MlpSpec, o: usize) -> usize {
        spec.param_count() - spec.output_dim + o
    }
}

pub fn xavier_init(spec: &MlpSpec, seed: u64) -> WeightVector {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut w = Vec::with_capacity(spec.param_count());
    for (fan_in, fan_out) in spec.layers() {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        for _ in 0..fan_in * fan_out {
            w.push(rng.random_range(-limit..=limit));
        }
        w.extend(std::iter::repeat_n(0.0, fan_out));
    }
    WeightVector(w)
}

fn check_dims(spec: &MlpSpec, w: usize, x: usize) -> Result<()> {
    if w != spec.param_count() {
        return Err(Error::Dimension {
            expected: spec.param_count(),
            got: w,
        });
    }
    if x != spec.input_dim {
        return Err(Error::Dimension {
            expected: spec.input_dim,
            got: x,
        });
    }
    Ok(())
}

pub fn forward(spec: &MlpSpec, w: &WeightVector, x: &[f64]) -> Result<Vec<f64>> {
    check_dims(spec, w.len(), x.len())?;
    Ok(forward_generic(spec, &w.0, x))
}

/// Network output over any scalar type; weights and inputs may both carry
/// derivatives. Dimensions are assumed checked.
pub fn forward_generic<T: Real>(spec: &MlpSpec, w: &[T], x: &[T]) -> Vec<T> {
    let scaled: Vec<T> = x
        .iter()
        .enumerate()
        .map(|(d, &v)| v / spec.scale(d))
        .collect();
    let mut a = match &spec.fourier {
        Some(fs) => embed_generic(fs, &[scaled[0], scaled[1], scaled[2]]),
        None => scaled,
    };
    let layers = spec.layers();
    let last = layers.len() - 1;
    let mut off = 0;
    for (l, &(fan_in, fan_out)) in layers.iter().enumerate() {
        let wm = &w[off..off + fan_in * fan_out];
        let b = &w[off + fan_in * fan_out..off + (fan_in + 1) * fan_out];
        off += (fan_in + 1) * fan_out;
        a = (0..fan_out)
            .map(|o| {
                let row = &wm[o * fan_in..(o + 1) * fan_in];
                let mut z = b[o];
                for (wi, ai) in row.iter().zip(&a) {
                    z += *wi * *ai;
                }
                if l == last {
                    z
                } else {
                    z.tanh()
                }
            })
            .collect();
    }
    a
}

/// Index of the Hessian entry (a, b) within the six stored ones
/// `[00, 11, 22, 01, 02, 12]`.
pub const fn hess_slot(a: usize, b: usize) -> usize {
    match (a, b) {
        (0, 0) => 0,
        (1, 1) => 1,
        (2, 2) => 2,
        (0, 1) | (1, 0) => 3,
        (0, 2) | (2, 0) => 4,
        _ => 5,
    }
}

pub const HESS_PAIRS: [(usize, usize); 6] = [(0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2)];

/// Jet channel layout: `[v]` for `K = 1`, `[v, g0, g1, g2]` for `K = 4`,
/// and additionally the six Hessian slots for `K = 10`.
pub type Jet<const K: usize> = [f64; K];

/// Forward jets of one point, kept for the backward sweep.
///
/// Reuse one cache per thread; buffers are resized, not reallocated.
#[derive(Debug, Clone)]
pub struct JetCache<const K: usize> {
    /// `acts[0]` is the input feature jet, `acts[l + 1]` the output of dense layer `l`.
    acts: Vec<Vec<Jet<K>>>,
    /// Pre-activations of the hidden layers.
    pre: Vec<Vec<Jet<K>>>,
    bar_a: Vec<Jet<K>>,
    bar_b: Vec<Jet<K>>,
}

impl<const K: usize> Default for JetCache<K> {
    fn default() -> Self {
        Self::new()
    }
}

impl<const K: usize> JetCache<K> {
    const CHECK: () = assert!(K == 1 || K == 4 || K == 10, "jet order must be 1, 4 or 10");

    pub fn new() -> Self {
        let () = Self::CHECK;
        Self {
            acts: Vec::new(),
            pre: Vec::new(),
            bar_a: Vec::new(),
            bar_b: Vec::new(),
        }
    }

    /// Output jets, one per output component.
    pub fn output(&self) -> &[Jet<K>] {
        self.acts.last().map(|v| v.as_slice()).unwrap_or(&[])
    }

    fn input_features(&mut self, spec: &MlpSpec, x: &[f64; 3]) {
        let xs = [x[0] / spec.scale(0), x[1] / spec.scale(1), x[2] / spec.scale(2)];
        let inv = [1.0 / spec.scale(0), 1.0 / spec.scale(1), 1.0 / spec.scale(2)];
        let feats = &mut self.acts[0];
        feats.clear();
        match &spec.fourier {
            None => {
                for d in 0..spec.input_dim {
                    let mut j = [0.0; K];
                    j[0] = xs[d];
                    if K >= 4 {
                        j[1 + d] = inv[d];
                    }
                    feats.push(j);
                }
            }
            Some(fs) => {
                // dphase/dx_d = B_d / s_d
                let rows: Vec<([f64; 3], f64)> = fs
                    .b
                    .iter()
                    .map(|r| {
                        let k = [r[0] * inv[0], r[1] * inv[1], r[2] * inv[2]];
                        (k, r[0] * xs[0] + r[1] * xs[1] + r[2] * xs[2])
                    })
                    .collect();
                for sine in [false, true] {
                    for (k, phase) in &rows {
                        let (s, c) = phase.sin_cos();
                        // f, f', f'' for cos and sin
                        let (f0, f1, f2) = if sine { (s, c, -s) } else { (c, -s, -c) };
                        let mut j = [0.0; K];
                        j[0] = f0;
                        if K >= 4 {
                            for d in 0..3 {
                                j[1 + d] = f1 * k[d];
                            }
                        }
                        if K == 10 {
                            for (slot, &(a, b)) in HESS_PAIRS.iter().enumerate() {
                                j[4 + slot] = f2 * k[a] * k[b];
                            }
                        }
                        feats.push(j);
                    }
                }
            }
        }
    }

    /// Propagate jets of the point `x` through the network.
    pub fn forward(&mut self, spec: &MlpSpec, w: &[f64], x: &[f64; 3]) -> &[Jet<K>] {
        let layers = spec.layers();
        let nl = layers.len();
        self.acts.resize_with(nl + 1, Vec::new);
        self.pre.resize_with(nl - 1, Vec::new);
        self.input_features(spec, x);
        let mut off = 0;
        for (l, &(fan_in, fan_out)) in layers.iter().enumerate() {
            let wm = &w[off..off + fan_in * fan_out];
            let bias = &w[off + fan_in * fan_out..off + (fan_in + 1) * fan_out];
            off += (fan_in + 1) * fan_out;
            let (lo, hi) = self.acts.split_at_mut(l + 1);
            let input = &lo[l];
            let out = &mut hi[0];
            out.clear();
            let hidden = l + 1 < nl;
            if hidden {
                self.pre[l].clear();
            }
            for o in 0..fan_out {
                let row = &wm[o * fan_in..(o + 1) * fan_in];
                let mut z = [0.0; K];
                for (wi, ai) in row.iter().zip(input.iter()) {
                    for c in 0..K {
                        z[c] += wi * ai[c];
                    }
                }
                z[0] += bias[o];
                if !hidden {
                    out.push(z);
                    continue;
                }
                self.pre[l].push(z);
                let t = z[0].tanh();
                let s1 = 1.0 - t * t;
                let s2 = -2.0 * t * s1;
                let mut h = [0.0; K];
                h[0] = t;
                if K >= 4 {
                    for d in 1..4 {
                        h[d] = s1 * z[d];
                    }
                }
                if K == 10 {
                    for (slot, &(a, b)) in HESS_PAIRS.iter().enumerate() {
                        h[4 + slot] = s2 * z[1 + a] * z[1 + b] + s1 * z[4 + slot];
                    }
                }
                out.push(h);
            }
        }
        self.output()
    }

    /// Accumulate into `grad` the weight gradient of `Σ out_bar · output`,
    /// using the jets from the last [`forward`](Self::forward).
    pub fn backward(&mut self, spec: &MlpSpec, w: &[f64], out_bar: &[Jet<K>], grad: &mut [f64]) {
        let layers = spec.layers();
        let nl = layers.len();
        let mut offsets = Vec::with_capacity(nl);
        let mut off = 0;
        for &(i, o) in &layers {
            offsets.push(off);
            off += (i + 1) * o;
        }
        self.bar_a.clear();
        self.bar_a.extend_from_slice(out_bar);
        for l in (0..nl).rev() {
            let (fan_in, fan_out) = layers[l];
            let off = offsets[l];
            // self.bar_a holds the adjoint of this layer's pre-activation
            let input = &self.acts[l];
            {
                let (gw, gb) = grad[off..off + (fan_in + 1) * fan_out].split_at_mut(fan_in * fan_out);
                for o in 0..fan_out {
                    let zb = &self.bar_a[o];
                    gb[o] += zb[0];
                    let grow = &mut gw[o * fan_in..(o + 1) * fan_in];
                    for (g, ai) in grow.iter_mut().zip(input.iter()) {
                        let mut s = 0.0;
                        for c in 0..K {
                            s += zb[c] * ai[c];
                        }
                        *g += s;
                    }
                }
            }
            if l == 0 {
                break;
            }
            // adjoint of the previous layer's activation
            let wm = &w[off..off + fan_in * fan_out];
            self.bar_b.clear();
            self.bar_b.resize(fan_in, [0.0; K]);
            for o in 0..fan_out {
                let zb = self.bar_a[o];
                let row = &wm[o * fan_in..(o + 1) * fan_in];
                for (hb, wi) in self.bar_b.iter_mut().zip(row) {
                    for c in 0..K {
                        hb[c] += wi * zb[c];
                    }
                }
            }
            // through tanh of layer l - 1
            let pre = &self.pre[l - 1];
            let act = &self.acts[l];
            for ((hb, z), h) in self.bar_b.iter_mut().zip(pre).zip(act) {
                let t = h[0];
                let s1 = 1.0 - t * t;
                let s2 = -2.0 * t * s1;
                let mut zb = [0.0; K];
                let mut s1_bar = 0.0;
                let mut s2_bar = 0.0;
                if K >= 4 {
                    for d in 1..4 {
                        zb[d] += hb[d] * s1;
                        s1_bar += hb[d] * z[d];
                    }
                }
                if K == 10 {
                    for (slot, &(a, b)) in HESS_PAIRS.iter().enumerate() {
                        let hh = hb[4 + slot];
                        zb[4 + slot] = hh * s1;
                        s1_bar += hh * z[4 + slot];
                        s2_bar += hh * z[1 + a] * z[1 + b];
                        zb[1 + a] += hh * s2 * z[1 + b];
                        zb[1 + b] += hh * s2 * z[1 + a];
                    }
                }
                let t_bar = hb[0] - 2.0 * t * s1_bar + (6.0 * t * t - 2.0) * s2_bar;
                zb[0] = t_bar * s1;
                *hb = zb;
            }
            std::mem::swap(&mut self.bar_a, &mut self.bar_b);
        }
    }
}

/// Network weights on disk: a JSON header (spec with any Fourier matrix,
/// initialization seed) and the flat weight list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkCheckpoint {
    pub spec: MlpSpec,
    pub seed: u64,
    pub weights: WeightVector,
}

impl NetworkCheckpoint {
    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let ck: Self = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        ck.spec.validate()?;
        if ck.weights.len() != ck.spec.param_count() {
            return Err(Error::Dimension {
                expected: ck.spec.param_count(),
                got: ck.weights.len(),
            });
        }
        Ok(ck)
    }
}
