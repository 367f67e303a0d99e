use ndarray::Array2;
use rand::Rng;

use super::SrnConfig;

/// Number of named tensors in [`Params`].
pub const TENSOR_COUNT: usize = 13;

/// Tensor names, in storage order.
pub const TENSOR_NAMES: [&str; TENSOR_COUNT] = [
    "input.weight",
    "input.bias",
    "position",
    "attn.query",
    "attn.key",
    "attn.value",
    "attn.output",
    "ff.hidden.weight",
    "ff.hidden.bias",
    "ff.output.weight",
    "ff.output.bias",
    "head.weight",
    "head.bias",
];

/// Every trainable tensor of the refiner. Gradients and Adam moments use the
/// same layout. Biases are stored as `1 × n` rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    /// `features × d_model`
    pub in_w: Array2<f64>,
    pub in_b: Array2<f64>,
    /// `seq_len × d_model`, added per symbol position.
    pub pos: Array2<f64>,
    pub wq: Array2<f64>,
    pub wk: Array2<f64>,
    pub wv: Array2<f64>,
    pub wo: Array2<f64>,
    /// `d_model × ff_width`
    pub ff1_w: Array2<f64>,
    pub ff1_b: Array2<f64>,
    /// `ff_width × d_model`
    pub ff2_w: Array2<f64>,
    pub ff2_b: Array2<f64>,
    /// `d_model × 2` (real, imaginary)
    pub head_w: Array2<f64>,
    pub head_b: Array2<f64>,
}

impl Params {
    /// All-zero tensors with the shapes implied by `cfg`.
    pub fn zeros(cfg: &SrnConfig) -> Self {
        let shapes = Self::shapes(cfg);
        let z = |i: usize| Array2::zeros(shapes[i]);
        Self {
            in_w: z(0),
            in_b: z(1),
            pos: z(2),
            wq: z(3),
            wk: z(4),
            wv: z(5),
            wo: z(6),
            ff1_w: z(7),
            ff1_b: z(8),
            ff2_w: z(9),
            ff2_b: z(10),
            head_w: z(11),
            head_b: z(12),
        }
    }

    pub fn shapes(cfg: &SrnConfig) -> [(usize, usize); TENSOR_COUNT] {
        let (f, d, ff, k) = (cfg.feature_width(), cfg.d_model, cfg.ff_width, cfg.seq_len);
        [
            (f, d),
            (1, d),
            (k, d),
            (d, d),
            (d, d),
            (d, d),
            (d, d),
            (d, ff),
            (1, ff),
            (ff, d),
            (1, d),
            (d, 2),
            (1, 2),
        ]
    }

    /// Weights uniform in `±1/√fan_in`; biases and position table zero.
    pub fn init<R: Rng + ?Sized>(cfg: &SrnConfig, rng: &mut R) -> Self {
        let mut p = Self::zeros(cfg);
        for (name, t) in TENSOR_NAMES.iter().zip(p.tensors_mut()) {
            if name.ends_with("bias") || *name == "position" {
                continue;
            }
            let bound = 1.0 / (t.nrows() as f64).sqrt();
            t.mapv_inplace(|_| rng.random_range(-bound..bound));
        }
        p
    }

    pub fn tensors(&self) -> [&Array2<f64>; TENSOR_COUNT] {
        [
            &self.in_w,
            &self.in_b,
            &self.pos,
            &self.wq,
            &self.wk,
            &self.wv,
            &self.wo,
            &self.ff1_w,
            &self.ff1_b,
            &self.ff2_w,
            &self.ff2_b,
            &self.head_w,
            &self.head_b,
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut Array2<f64>; TENSOR_COUNT] {
        [
            &mut self.in_w,
            &mut self.in_b,
            &mut self.pos,
            &mut self.wq,
            &mut self.wk,
            &mut self.wv,
            &mut self.wo,
            &mut self.ff1_w,
            &mut self.ff1_b,
            &mut self.ff2_w,
            &mut self.ff2_b,
            &mut self.head_w,
            &mut self.head_b,
        ]
    }

    pub fn named(&self) -> impl Iterator<Item = (&'static str, &Array2<f64>)> {
        TENSOR_NAMES.into_iter().zip(self.tensors())
    }

    pub fn len(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Name of the first tensor holding a NaN or infinity.
    pub fn first_non_finite(&self) -> Option<&'static str> {
        self.named()
            .find(|(_, t)| t.iter().any(|v| !v.is_finite()))
            .map(|(n, _)| n)
    }

    pub fn scale(&mut self, factor: f64) {
        for t in self.tensors_mut() {
            t.mapv_inplace(|v| v * factor);
        }
    }

    pub fn add_assign(&mut self, other: &Params) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            *a += b;
        }
    }
}
