use ndarray::{s, Array2, ArrayView2, Axis};
use num_complex::Complex64;

use super::adam::AdamState;
use super::params::{Params, TENSOR_NAMES};
use super::{SrnBatch, SrnConfig};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from_seed, stream};

/// Refiner parameters plus optimizer state.
#[derive(Debug, Clone, PartialEq)]
pub struct SrnModel {
    pub config: SrnConfig,
    pub params: Params,
    pub adam: AdamState,
}

/// Activations kept from the forward pass for back-propagation.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    batch: usize,
    x: Array2<f64>,
    h0: Array2<f64>,
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    /// Attention weights, indexed `example * n_heads + head`.
    attn: Vec<Array2<f64>>,
    o: Array2<f64>,
    h1: Array2<f64>,
    t: Array2<f64>,
    h2: Array2<f64>,
    /// `(batch·K) × 2` outputs.
    pub y: Array2<f64>,
}

impl SrnModel {
    /// Fresh model; deterministic in `config.seed`.
    pub fn init(config: SrnConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = rng_from_seed(derive_seed(config.seed, &[stream::SRN_INIT]));
        let params = Params::init(&config, &mut rng);
        let adam = AdamState::new(&config);
        Ok(Self {
            config,
            params,
            adam,
        })
    }

    /// Row-major `(batch·K) × (2 + 2·SF)` feature matrix.
    pub fn features(&self, batch: &SrnBatch) -> Array2<f64> {
        let cfg = &self.config;
        let (k, sf, f) = (cfg.seq_len, cfg.sf, cfg.feature_width());
        let squash = |v: f64| match cfg.input_clip {
            Some(c) => c * (v / c).tanh(),
            None => v,
        };
        let mut x = Array2::zeros((batch.len() * k, f));
        for (b, (r_eq, res)) in batch.r_eq.iter().zip(&batch.residual).enumerate() {
            for pos in 0..k {
                let mut row = x.row_mut(b * k + pos);
                row[0] = squash(r_eq[pos].re);
                row[1] = squash(r_eq[pos].im);
                for (m, chip) in res[pos * sf..(pos + 1) * sf].iter().enumerate() {
                    row[2 + m] = squash(chip.re);
                    row[2 + sf + m] = squash(chip.im);
                }
            }
        }
        x
    }

    pub fn forward_cached(&self, batch: &SrnBatch) -> Result<ForwardCache> {
        batch.validate(&self.config)?;
        let cfg = &self.config;
        let p = &self.params;
        let (k, d, heads, dh) = (cfg.seq_len, cfg.d_model, cfg.n_heads, cfg.head_dim());
        let nb = batch.len();
        let scale = 1.0 / (dh as f64).sqrt();

        let x = self.features(batch);
        let mut h0 = x.dot(&p.in_w) + &p.in_b;
        for b in 0..nb {
            let mut block = h0.slice_mut(s![b * k..(b + 1) * k, ..]);
            block += &p.pos;
        }
        let q = h0.dot(&p.wq);
        let kk = h0.dot(&p.wk);
        let v = h0.dot(&p.wv);

        let mut o = Array2::zeros((nb * k, d));
        let mut attn = Vec::with_capacity(nb * heads);
        for b in 0..nb {
            let rows = b * k..(b + 1) * k;
            for h in 0..heads {
                let cols = h * dh..(h + 1) * dh;
                let qh = q.slice(s![rows.clone(), cols.clone()]);
                let kh = kk.slice(s![rows.clone(), cols.clone()]);
                let vh = v.slice(s![rows.clone(), cols.clone()]);
                let mut a = qh.dot(&kh.t());
                a.mapv_inplace(|z| z * scale);
                softmax_rows(&mut a);
                o.slice_mut(s![rows.clone(), cols]).assign(&a.dot(&vh));
                attn.push(a);
            }
        }
        let h1 = &h0 + &o.dot(&p.wo);
        let mut t = h1.dot(&p.ff1_w) + &p.ff1_b;
        t.mapv_inplace(f64::tanh);
        let h2 = &h1 + &(t.dot(&p.ff2_w) + &p.ff2_b);
        let y = h2.dot(&p.head_w) + &p.head_b;

        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric {
                tensor: "head output".into(),
                msg: "non-finite refiner output".into(),
            });
        }
        Ok(ForwardCache {
            batch: nb,
            x,
            h0,
            q,
            k: kk,
            v,
            attn,
            o,
            h1,
            t,
            h2,
            y,
        })
    }

    /// Refined symbol estimates, `batch × K`.
    pub fn forward(&self, batch: &SrnBatch) -> Result<Vec<Vec<Complex64>>> {
        let cache = self.forward_cached(batch)?;
        Ok(outputs_to_complex(&cache.y, self.config.seq_len))
    }

    /// Training loss (payload-only MSE) and its exact gradient.
    pub fn loss_and_grad(&self, batch: &SrnBatch) -> Result<(f64, Params)> {
        let cache = self.forward_cached(batch)?;
        let (loss, dy) = masked_loss_grad(&cache.y, batch, self.config.seq_len);
        let grads = self.backward_from(&cache, &dy)?;
        Ok((loss, grads))
    }

    /// Gradient of the payload-only MSE with respect to every parameter.
    pub fn backward(&self, batch: &SrnBatch) -> Result<Params> {
        self.loss_and_grad(batch).map(|(_, g)| g)
    }

    fn backward_from(&self, c: &ForwardCache, dy: &Array2<f64>) -> Result<Params> {
        let cfg = &self.config;
        let p = &self.params;
        let (k, d, heads, dh) = (cfg.seq_len, cfg.d_model, cfg.n_heads, cfg.head_dim());
        let scale = 1.0 / (dh as f64).sqrt();
        let mut g = Params::zeros(cfg);

        // head
        g.head_w = c.h2.t().dot(dy);
        g.head_b = column_sums(dy);
        let dh2 = dy.dot(&p.head_w.t());

        // feed-forward with residual
        g.ff2_w = c.t.t().dot(&dh2);
        g.ff2_b = column_sums(&dh2);
        let mut dz = dh2.dot(&p.ff2_w.t());
        dz.zip_mut_with(&c.t, |g, &t| *g *= 1.0 - t * t);
        g.ff1_w = c.h1.t().dot(&dz);
        g.ff1_b = column_sums(&dz);
        let dh1 = &dh2 + &dz.dot(&p.ff1_w.t());

        // attention with residual
        g.wo = c.o.t().dot(&dh1);
        let d_o = dh1.dot(&p.wo.t());
        let mut dq = Array2::zeros((c.batch * k, d));
        let mut dk = Array2::zeros((c.batch * k, d));
        let mut dv = Array2::zeros((c.batch * k, d));
        for b in 0..c.batch {
            let rows = b * k..(b + 1) * k;
            for h in 0..heads {
                let cols = h * dh..(h + 1) * dh;
                let a = &c.attn[b * heads + h];
                let doh = d_o.slice(s![rows.clone(), cols.clone()]);
                let qh = c.q.slice(s![rows.clone(), cols.clone()]);
                let kh = c.k.slice(s![rows.clone(), cols.clone()]);
                let vh = c.v.slice(s![rows.clone(), cols.clone()]);

                dv.slice_mut(s![rows.clone(), cols.clone()])
                    .assign(&a.t().dot(&doh));
                let da = doh.dot(&vh.t());
                let ds = softmax_backward(a.view(), da.view(), scale);
                dq.slice_mut(s![rows.clone(), cols.clone()])
                    .assign(&ds.dot(&kh));
                dk.slice_mut(s![rows.clone(), cols])
                    .assign(&ds.t().dot(&qh));
            }
        }
        g.wq = c.h0.t().dot(&dq);
        g.wk = c.h0.t().dot(&dk);
        g.wv = c.h0.t().dot(&dv);
        let dh0 = dh1 + dq.dot(&p.wq.t()) + dk.dot(&p.wk.t()) + dv.dot(&p.wv.t());

        // input projection and positional table
        g.in_w = c.x.t().dot(&dh0);
        g.in_b = column_sums(&dh0);
        for b in 0..c.batch {
            g.pos += &dh0.slice(s![b * k..(b + 1) * k, ..]);
        }

        if let Some(name) = g.first_non_finite() {
            return Err(Error::Numeric {
                tensor: format!("gradient of {name}"),
                msg: "non-finite gradient".into(),
            });
        }
        Ok(g)
    }

    /// Applies one Adam update with learning rate `lr`.
    pub fn adam_step(&mut self, grads: &Params, lr: f64) -> Result<()> {
        self.adam.step(&mut self.params, grads, lr)
    }

    pub fn parameter_count(&self) -> usize {
        self.params.len()
    }

    /// Tensor names in storage order.
    pub fn tensor_names() -> &'static [&'static str] {
        &TENSOR_NAMES
    }
}

fn column_sums(m: &Array2<f64>) -> Array2<f64> {
    m.sum_axis(Axis(0)).insert_axis(Axis(0))
}

fn softmax_rows(a: &mut Array2<f64>) {
    for mut row in a.rows_mut() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        row.mapv_inplace(|z| {
            let e = (z - max).exp();
            sum += e;
            e
        });
        row.mapv_inplace(|e| e / sum);
    }
}

/// `dS = scale · A ⊙ (dA − rowsum(dA ⊙ A))`.
fn softmax_backward(a: ArrayView2<f64>, da: ArrayView2<f64>, scale: f64) -> Array2<f64> {
    let mut ds = Array2::zeros(a.raw_dim());
    for ((mut out, ar), dar) in ds.rows_mut().into_iter().zip(a.rows()).zip(da.rows()) {
        let dot: f64 = ar.iter().zip(dar.iter()).map(|(x, y)| x * y).sum();
        for ((o, &x), &y) in out.iter_mut().zip(ar.iter()).zip(dar.iter()) {
            *o = scale * x * (y - dot);
        }
    }
    ds
}

fn outputs_to_complex(y: &Array2<f64>, k: usize) -> Vec<Vec<Complex64>> {
    y.rows()
        .into_iter()
        .map(|r| Complex64::new(r[0], r[1]))
        .collect::<Vec<_>>()
        .chunks(k)
        .map(<[Complex64]>::to_vec)
        .collect()
}

/// Payload-only MSE of `y` against the batch targets and `∂loss/∂y`.
///
/// Each example contributes `(1/|payload|)·Σ |ŷ − x|²` over its payload
/// positions; the loss is the mean over examples.
fn masked_loss_grad(y: &Array2<f64>, batch: &SrnBatch, k: usize) -> (f64, Array2<f64>) {
    let nb = batch.len();
    let mut dy = Array2::zeros(y.raw_dim());
    let mut loss = 0.0;
    for b in 0..nb {
        let payload = batch.pilot_mask[b].iter().filter(|&&p| !p).count();
        if payload == 0 {
            continue;
        }
        let w = 1.0 / (nb as f64 * payload as f64);
        for pos in 0..k {
            if batch.pilot_mask[b][pos] {
                continue;
            }
            let n = b * k + pos;
            let x = batch.target[b][pos];
            let er = y[[n, 0]] - x.re;
            let ei = y[[n, 1]] - x.im;
            loss += w * (er * er + ei * ei);
            dy[[n, 0]] = 2.0 * w * er;
            dy[[n, 1]] = 2.0 * w * ei;
        }
    }
    (loss, dy)
}

/// `mean_b (1/K)·Σ_k |x̂[b][k] − x[b][k]|²`.
pub fn mse_loss(x_hat: &[Vec<Complex64>], x: &[Vec<Complex64>]) -> Result<f64> {
    let masks: Vec<Vec<bool>> = x.iter().map(|row| vec![false; row.len()]).collect();
    masked_mse_loss(x_hat, x, &masks)
}

/// Like [`mse_loss`] with `true` mask positions excluded from every row.
pub fn masked_mse_loss(
    x_hat: &[Vec<Complex64>],
    x: &[Vec<Complex64>],
    pilot_mask: &[Vec<bool>],
) -> Result<f64> {
    if x_hat.len() != x.len() || pilot_mask.len() != x.len() {
        return Err(Error::shape(format!(
            "batch sizes differ: {} estimates, {} targets",
            x_hat.len(),
            x.len()
        )));
    }
    if x.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for ((a, b), m) in x_hat.iter().zip(x).zip(pilot_mask) {
        if a.len() != b.len() || m.len() != b.len() {
            return Err(Error::shape(format!(
                "row lengths differ: {} vs {}",
                a.len(),
                b.len()
            )));
        }
        let (sum, n) = a
            .iter()
            .zip(b)
            .zip(m)
            .filter(|(_, &p)| !p)
            .fold((0.0, 0usize), |(s, n), ((u, v), _)| {
                (s + (u - v).norm_sqr(), n + 1)
            });
        if n > 0 {
            total += sum / n as f64;
        }
    }
    Ok(total / x.len() as f64)
}
