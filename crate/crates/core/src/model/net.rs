//! A small encoder-decoder transformer in double precision with hand-written
//! backpropagation.
//!
//! Pre-norm blocks, GELU feed-forward, sinusoidal positions, shared input
//! embedding. Attention biases enter pre-softmax: encoder placements add a
//! per-head (token, token) matrix to every encoder self-attention layer;
//! decoder placements add, in the last layer's cross-attention only, the
//! alignment-weighted table lookup where the alignment is the head-averaged
//! cross-attention of the second-to-last layer. Gradients flow through that
//! alignment path as well.

use ndarray::{s, Array1, Array2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::bias::{materialize_bias, BiasKind, BiasTable, PosIndex};
use super::config::{ModelConfig, Placement};
use super::params::{Gradients, ParamStore};
use crate::error::{Error, Result};

/// One prepared training/decoding sample: token ids plus the precomputed
/// position-slot matrix of its source sequence (absent for placement
/// `none`).
#[derive(Debug, Clone)]
pub struct PreparedSample {
    pub src: Vec<usize>,
    /// Labels: the desired output ending in EOS.
    pub tgt: Vec<usize>,
    pub index: Option<PosIndex>,
}

#[derive(Debug, Clone, Copy)]
struct LnIdx {
    g: usize,
    b: usize,
}

#[derive(Debug, Clone, Copy)]
struct AttnIdx {
    wq: usize,
    wk: usize,
    wv: usize,
    wo: usize,
    bo: usize,
}

#[derive(Debug, Clone, Copy)]
struct FfIdx {
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
}

#[derive(Debug, Clone, Copy)]
struct EncLayerIdx {
    ln1: LnIdx,
    attn: AttnIdx,
    ln2: LnIdx,
    ff: FfIdx,
}

#[derive(Debug, Clone, Copy)]
struct DecLayerIdx {
    ln1: LnIdx,
    self_attn: AttnIdx,
    ln2: LnIdx,
    cross_attn: AttnIdx,
    ln3: LnIdx,
    ff: FfIdx,
}

#[derive(Debug, Clone)]
struct Layout {
    embed: usize,
    enc: Vec<EncLayerIdx>,
    enc_final: LnIdx,
    dec: Vec<DecLayerIdx>,
    dec_final: LnIdx,
    w_out: usize,
    b_out: usize,
    table: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct Model {
    pub config: ModelConfig,
    pub store: ParamStore,
    layout: Layout,
}

// ---------------------------------------------------------------------------
// Construction

impl Model {
    pub fn new(config: ModelConfig) -> Result<Model> {
        config.validate()?;
        let mut store = ParamStore::default();
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let d = config.d_model;
        let scale = 1.0 / (d as f64).sqrt();

        let embed = store.uniform("embed", config.vocab_size, d, scale, &mut rng);

        let ln = |store: &mut ParamStore, name: &str| LnIdx {
            g: store.ones(&format!("{name}.g"), 1, d),
            b: store.zeros(&format!("{name}.b"), 1, d),
        };
        let attn = |store: &mut ParamStore, rng: &mut ChaCha8Rng, name: &str| AttnIdx {
            wq: store.uniform(&format!("{name}.wq"), d, d, scale, rng),
            wk: store.uniform(&format!("{name}.wk"), d, d, scale, rng),
            wv: store.uniform(&format!("{name}.wv"), d, d, scale, rng),
            wo: store.uniform(&format!("{name}.wo"), d, d, scale, rng),
            bo: store.zeros(&format!("{name}.bo"), 1, d),
        };
        let ff = |store: &mut ParamStore, rng: &mut ChaCha8Rng, name: &str| FfIdx {
            w1: store.uniform(&format!("{name}.w1"), d, config.d_ff, scale, rng),
            b1: store.zeros(&format!("{name}.b1"), 1, config.d_ff),
            w2: store.uniform(&format!("{name}.w2"), config.d_ff, d, scale, rng),
            b2: store.zeros(&format!("{name}.b2"), 1, d),
        };

        let enc = (0..config.enc_layers)
            .map(|l| EncLayerIdx {
                ln1: ln(&mut store, &format!("enc.{l}.ln1")),
                attn: attn(&mut store, &mut rng, &format!("enc.{l}.attn")),
                ln2: ln(&mut store, &format!("enc.{l}.ln2")),
                ff: ff(&mut store, &mut rng, &format!("enc.{l}.ff")),
            })
            .collect();
        let enc_final = ln(&mut store, "enc.final");

        let dec = (0..config.dec_layers)
            .map(|l| DecLayerIdx {
                ln1: ln(&mut store, &format!("dec.{l}.ln1")),
                self_attn: attn(&mut store, &mut rng, &format!("dec.{l}.self")),
                ln2: ln(&mut store, &format!("dec.{l}.ln2")),
                cross_attn: attn(&mut store, &mut rng, &format!("dec.{l}.cross")),
                ln3: ln(&mut store, &format!("dec.{l}.ln3")),
                ff: ff(&mut store, &mut rng, &format!("dec.{l}.ff")),
            })
            .collect();
        let dec_final = ln(&mut store, "dec.final");

        let w_out = store.uniform("out.w", d, config.vocab_size, scale, &mut rng);
        let b_out = store.zeros("out.b", 1, config.vocab_size);

        // Zero-initialized so an untrained biased model equals the plain one.
        let table = bias_kind(config.placement).map(|kind| {
            store.zeros("bias_table", config.n_heads, kind.table_size(&config.clip))
        });

        Ok(Model {
            layout: Layout { embed, enc, enc_final, dec, dec_final, w_out, b_out, table },
            config,
            store,
        })
    }

    /// The bias table as a standalone value (None for placement `none`).
    pub fn bias_table(&self) -> Option<BiasTable> {
        let kind = bias_kind(self.config.placement)?;
        Some(BiasTable {
            kind,
            clip: self.config.clip,
            values: self.store.get(self.layout.table?).clone(),
        })
    }

    pub fn bias_table_tensor_index(&self) -> Option<usize> {
        self.layout.table
    }
}

/// Table kind required by a placement.
pub fn bias_kind(placement: Placement) -> Option<BiasKind> {
    match placement {
        Placement::None => None,
        Placement::Enc | Placement::Dec => Some(BiasKind::Full),
        Placement::EncSelected | Placement::DecSelected => Some(BiasKind::Selected),
        Placement::TokLinear => Some(BiasKind::TokenLinear),
        Placement::SecLinear => Some(BiasKind::SectionLinear),
    }
}

// ---------------------------------------------------------------------------
// Primitive forward/backward pieces

const LN_EPS: f64 = 1e-5;

#[derive(Debug, Clone)]
struct LnCache {
    x_hat: Array2<f64>,
    inv_std: Array1<f64>,
}

fn ln_forward(x: &Array2<f64>, g: &Array2<f64>, b: &Array2<f64>) -> (Array2<f64>, LnCache) {
    let d = x.ncols() as f64;
    let mean = x.mean_axis(Axis(1)).unwrap();
    let mut x_hat = x.clone();
    for (mut row, m) in x_hat.rows_mut().into_iter().zip(mean.iter()) {
        row -= *m;
    }
    let var = x_hat.mapv(|v| v * v).sum_axis(Axis(1)) / d;
    let inv_std = var.mapv(|v| 1.0 / (v + LN_EPS).sqrt());
    for (mut row, s) in x_hat.rows_mut().into_iter().zip(inv_std.iter()) {
        row *= *s;
    }
    let mut y = x_hat.clone();
    for mut row in y.rows_mut() {
        row *= &g.row(0);
        row += &b.row(0);
    }
    (y, LnCache { x_hat, inv_std })
}

fn ln_backward(
    cache: &LnCache,
    g: &Array2<f64>,
    dy: &Array2<f64>,
    dg: &mut Array2<f64>,
    db: &mut Array2<f64>,
) -> Array2<f64> {
    let d = dy.ncols() as f64;
    for (dy_row, xh_row) in dy.rows().into_iter().zip(cache.x_hat.rows()) {
        let mut dgr = dg.row_mut(0);
        let mut dbr = db.row_mut(0);
        for i in 0..dy_row.len() {
            dgr[i] += dy_row[i] * xh_row[i];
            dbr[i] += dy_row[i];
        }
    }
    let mut dx = Array2::zeros(dy.dim());
    for ((dy_row, xh_row), (mut dx_row, inv_std)) in dy
        .rows()
        .into_iter()
        .zip(cache.x_hat.rows())
        .zip(dx.rows_mut().into_iter().zip(cache.inv_std.iter()))
    {
        // dx̂ = dy ⊙ γ, then the two projection terms of the normalization.
        let dxh: Vec<f64> = dy_row
            .iter()
            .zip(g.row(0).iter())
            .map(|(dy, g)| dy * g)
            .collect();
        let mean_dxh: f64 = dxh.iter().sum::<f64>() / d;
        let mean_dxh_xh: f64 =
            dxh.iter().zip(xh_row.iter()).map(|(a, b)| a * b).sum::<f64>() / d;
        for i in 0..dxh.len() {
            dx_row[i] = inv_std * (dxh[i] - mean_dxh - xh_row[i] * mean_dxh_xh);
        }
    }
    dx
}

fn gelu(x: f64) -> f64 {
    const C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
    0.5 * x * (1.0 + (C * (x + 0.044715 * x * x * x)).tanh())
}

fn gelu_prime(x: f64) -> f64 {
    const C: f64 = 0.797_884_560_802_865_4;
    let u = C * (x + 0.044715 * x * x * x);
    let t = u.tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * C * (1.0 + 3.0 * 0.044715 * x * x)
}

fn softmax_rows(scores: &mut Array2<f64>) {
    for mut row in scores.rows_mut() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
}

/// ds = a ⊙ (da − Σ_j da_j a_j), rowwise.
fn softmax_backward(a: &Array2<f64>, da: &Array2<f64>) -> Array2<f64> {
    let mut ds = Array2::zeros(a.dim());
    for ((a_row, da_row), mut ds_row) in
        a.rows().into_iter().zip(da.rows()).zip(ds.rows_mut())
    {
        let dot: f64 = a_row.iter().zip(da_row.iter()).map(|(x, y)| x * y).sum();
        for i in 0..a_row.len() {
            ds_row[i] = a_row[i] * (da_row[i] - dot);
        }
    }
    ds
}

fn add_row_bias(x: &mut Array2<f64>, b: &Array2<f64>) {
    for mut row in x.rows_mut() {
        row += &b.row(0);
    }
}

fn sinusoid(len: usize, d: usize) -> Array2<f64> {
    Array2::from_shape_fn((len, d), |(pos, i)| {
        let angle = pos as f64 / 10000f64.powf((2 * (i / 2)) as f64 / d as f64);
        if i % 2 == 0 {
            angle.sin()
        } else {
            angle.cos()
        }
    })
}

const CAUSAL_MASK: f64 = -1e30;

/// One biased attention row: softmax over scaled query-key scores plus a
/// per-key bias. The scores are scaled by 1/sqrt(query width) before the
/// bias is added.
pub fn attend_biased(
    q: &Array1<f64>,
    keys: &Array2<f64>,
    bias: &Array1<f64>,
) -> Result<Array1<f64>> {
    if keys.ncols() != q.len() {
        return Err(Error::Shape(format!(
            "query width {} vs key width {}",
            q.len(),
            keys.ncols()
        )));
    }
    if bias.len() != keys.nrows() {
        return Err(Error::Shape(format!(
            "{} bias entries for {} keys",
            bias.len(),
            keys.nrows()
        )));
    }
    let scale = 1.0 / (q.len() as f64).sqrt();
    let mut scores = (keys.dot(q) * scale + bias).insert_axis(Axis(0));
    softmax_rows(&mut scores);
    Ok(scores.remove_axis(Axis(0)))
}

// ---------------------------------------------------------------------------
// Attention

#[derive(Debug, Clone)]
struct AttnCache {
    q_input: Array2<f64>,
    kv_input: Array2<f64>,
    q: Vec<Array2<f64>>,
    k: Vec<Array2<f64>>,
    v: Vec<Array2<f64>>,
    /// Post-softmax weights per head, (n_q, n_k).
    a: Vec<Array2<f64>>,
    concat: Array2<f64>,
}

impl Model {
    fn mha_forward(
        &self,
        q_input: &Array2<f64>,
        kv_input: &Array2<f64>,
        idx: &AttnIdx,
        bias: Option<&[Array2<f64>]>,
        causal: bool,
    ) -> (Array2<f64>, AttnCache) {
        let heads = self.config.n_heads;
        let dh = self.config.head_dim();
        let inv_sqrt = 1.0 / (dh as f64).sqrt();
        let q_all = q_input.dot(self.store.get(idx.wq));
        let k_all = kv_input.dot(self.store.get(idx.wk));
        let v_all = kv_input.dot(self.store.get(idx.wv));
        let n_q = q_input.nrows();
        let mut concat = Array2::zeros((n_q, self.config.d_model));
        let mut q_heads = Vec::with_capacity(heads);
        let mut k_heads = Vec::with_capacity(heads);
        let mut v_heads = Vec::with_capacity(heads);
        let mut a_heads = Vec::with_capacity(heads);
        for h in 0..heads {
            let cols = s![.., h * dh..(h + 1) * dh];
            let q = q_all.slice(cols).to_owned();
            let k = k_all.slice(cols).to_owned();
            let v = v_all.slice(cols).to_owned();
            let mut scores = q.dot(&k.t()) * inv_sqrt;
            if let Some(bias) = bias {
                scores += &bias[h];
            }
            if causal {
                for i in 0..scores.nrows() {
                    for j in (i + 1)..scores.ncols() {
                        scores[[i, j]] = CAUSAL_MASK;
                    }
                }
            }
            softmax_rows(&mut scores);
            let out = scores.dot(&v);
            concat.slice_mut(cols).assign(&out);
            q_heads.push(q);
            k_heads.push(k);
            v_heads.push(v);
            a_heads.push(scores);
        }
        let mut out = concat.dot(self.store.get(idx.wo));
        add_row_bias(&mut out, self.store.get(idx.bo));
        (
            out,
            AttnCache {
                q_input: q_input.clone(),
                kv_input: kv_input.clone(),
                q: q_heads,
                k: k_heads,
                v: v_heads,
                a: a_heads,
                concat,
            },
        )
    }

    /// Backward through one attention block. Returns gradients with respect
    /// to the query input, the key/value input, and (when a bias was added)
    /// the per-head pre-softmax bias matrices. `extra_da` is an additional
    /// gradient on every head's post-softmax weights, used when this block's
    /// weights also fed the last layer's bias.
    fn mha_backward(
        &self,
        cache: &AttnCache,
        idx: &AttnIdx,
        d_out: &Array2<f64>,
        extra_da: Option<&Array2<f64>>,
        want_bias_grad: bool,
        grads: &mut Gradients,
    ) -> (Array2<f64>, Array2<f64>, Option<Vec<Array2<f64>>>) {
        let heads = self.config.n_heads;
        let dh = self.config.head_dim();
        let inv_sqrt = 1.0 / (dh as f64).sqrt();

        grads.tensors[idx.wo] += &cache.concat.t().dot(d_out);
        grads.tensors[idx.bo] += &d_out.sum_axis(Axis(0)).insert_axis(Axis(0));
        let d_concat = d_out.dot(&self.store.get(idx.wo).t());

        let n_q = cache.q_input.nrows();
        let n_k = cache.kv_input.nrows();
        let mut dq_all = Array2::zeros((n_q, self.config.d_model));
        let mut dk_all = Array2::zeros((n_k, self.config.d_model));
        let mut dv_all = Array2::zeros((n_k, self.config.d_model));
        let mut d_bias = want_bias_grad.then(Vec::new);

        for h in 0..heads {
            let cols = s![.., h * dh..(h + 1) * dh];
            let d_o = d_concat.slice(cols).to_owned();
            let mut da = d_o.dot(&cache.v[h].t());
            if let Some(extra) = extra_da {
                da += extra;
            }
            let dv = cache.a[h].t().dot(&d_o);
            let ds = softmax_backward(&cache.a[h], &da);
            let dq = ds.dot(&cache.k[h]) * inv_sqrt;
            let dk = ds.t().dot(&cache.q[h]) * inv_sqrt;
            dq_all.slice_mut(cols).assign(&dq);
            dk_all.slice_mut(cols).assign(&dk);
            dv_all.slice_mut(cols).assign(&dv);
            if let Some(list) = d_bias.as_mut() {
                list.push(ds);
            }
        }

        grads.tensors[idx.wq] += &cache.q_input.t().dot(&dq_all);
        grads.tensors[idx.wk] += &cache.kv_input.t().dot(&dk_all);
        grads.tensors[idx.wv] += &cache.kv_input.t().dot(&dv_all);
        let d_q_input = dq_all.dot(&self.store.get(idx.wq).t());
        let d_kv_input =
            dk_all.dot(&self.store.get(idx.wk).t()) + dv_all.dot(&self.store.get(idx.wv).t());
        (d_q_input, d_kv_input, d_bias)
    }
}

// ---------------------------------------------------------------------------
// Full forward pass with caches

#[derive(Debug, Clone)]
struct FfCache {
    input: Array2<f64>,
    pre_act: Array2<f64>,
    act: Array2<f64>,
}

#[derive(Debug, Clone)]
struct EncLayerCache {
    ln1: LnCache,
    attn: AttnCache,
    ln2: LnCache,
    ff: FfCache,
}

#[derive(Debug, Clone)]
struct DecLayerCache {
    ln1: LnCache,
    self_attn: AttnCache,
    ln2: LnCache,
    cross_attn: AttnCache,
    ln3: LnCache,
    ff: FfCache,
}

/// Every intermediate needed to run backward or read attention state.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    src: Vec<usize>,
    tgt_in: Vec<usize>,
    enc_layers: Vec<EncLayerCache>,
    enc_final: LnCache,
    enc_out: Array2<f64>,
    dec_layers: Vec<DecLayerCache>,
    dec_final: LnCache,
    dec_out: Array2<f64>,
    /// Per-head encoder bias matrices, when an encoder placement is active.
    enc_bias: Option<Vec<Array2<f64>>>,
    /// Per-head (input, input) table matrices for the decoder placement.
    dec_m: Option<Vec<Array2<f64>>>,
    /// Head-averaged second-to-last-layer cross-attention, (t, n).
    a_avg: Option<Array2<f64>>,
    /// Table slot of every source token pair, kept for the backward scatter.
    index_slots: Option<Array2<i32>>,
    pub logits: Array2<f64>,
}

impl ForwardPass {
    /// Cross-attention weights of a decoder layer, averaged over heads.
    pub fn cross_attention_avg(&self, layer: usize) -> Array2<f64> {
        average_heads(&self.dec_layers[layer].cross_attn.a)
    }

    /// Post-softmax rows of every attention site; used by invariant tests.
    pub fn attention_rows(&self) -> Vec<&Array2<f64>> {
        let mut rows = Vec::new();
        for l in &self.enc_layers {
            rows.extend(l.attn.a.iter());
        }
        for l in &self.dec_layers {
            rows.extend(l.self_attn.a.iter());
            rows.extend(l.cross_attn.a.iter());
        }
        rows
    }
}

fn average_heads(heads: &[Array2<f64>]) -> Array2<f64> {
    let mut avg = heads[0].clone();
    for h in &heads[1..] {
        avg += h;
    }
    avg / heads.len() as f64
}

impl Model {
    fn embed(&self, ids: &[usize]) -> Result<Array2<f64>> {
        let table = self.store.get(self.layout.embed);
        let d = self.config.d_model;
        let mut x = Array2::zeros((ids.len(), d));
        for (row, &id) in ids.iter().enumerate() {
            if id >= self.config.vocab_size {
                return Err(Error::OutOfVocab(id, self.config.vocab_size));
            }
            x.row_mut(row).assign(&table.row(id));
        }
        x += &sinusoid(ids.len(), d);
        Ok(x)
    }

    fn ff_forward(&self, input: &Array2<f64>, idx: &FfIdx) -> (Array2<f64>, FfCache) {
        let mut pre = input.dot(self.store.get(idx.w1));
        add_row_bias(&mut pre, self.store.get(idx.b1));
        let act = pre.mapv(gelu);
        let mut out = act.dot(self.store.get(idx.w2));
        add_row_bias(&mut out, self.store.get(idx.b2));
        (out, FfCache { input: input.clone(), pre_act: pre, act })
    }

    fn ff_backward(&self, cache: &FfCache, idx: &FfIdx, d_out: &Array2<f64>, grads: &mut Gradients) -> Array2<f64> {
        grads.tensors[idx.w2] += &cache.act.t().dot(d_out);
        grads.tensors[idx.b2] += &d_out.sum_axis(Axis(0)).insert_axis(Axis(0));
        let mut d_act = d_out.dot(&self.store.get(idx.w2).t());
        d_act.zip_mut_with(&cache.pre_act, |d, &p| *d *= gelu_prime(p));
        grads.tensors[idx.w1] += &cache.input.t().dot(&d_act);
        grads.tensors[idx.b1] += &d_act.sum_axis(Axis(0)).insert_axis(Axis(0));
        d_act.dot(&self.store.get(idx.w1).t())
    }

    /// Run the full network on one sample; `index` must be present whenever
    /// the placement uses a table.
    pub fn forward(
        &self,
        src: &[usize],
        index: Option<&PosIndex>,
        tgt_in: &[usize],
    ) -> Result<ForwardPass> {
        if src.is_empty() || tgt_in.is_empty() {
            return Err(Error::Shape("empty source or target".into()));
        }
        let placement = self.config.placement;
        let table_values = self.layout.table.map(|t| self.store.get(t));
        let index = match (table_values, index) {
            (Some(_), Some(ix)) => {
                if ix.slots.nrows() != src.len() {
                    return Err(Error::Shape(format!(
                        "position index covers {} tokens, source has {}",
                        ix.slots.nrows(),
                        src.len()
                    )));
                }
                Some(ix)
            }
            (Some(_), None) => {
                return Err(Error::Shape("placement needs a position index".into()))
            }
            _ => None,
        };

        let enc_bias = (placement.on_encoder())
            .then(|| materialize_bias(index.unwrap(), table_values.unwrap()));
        let dec_m = (placement.on_decoder())
            .then(|| materialize_bias(index.unwrap(), table_values.unwrap()));

        // Encoder.
        let mut x = self.embed(src)?;
        let mut enc_layers = Vec::with_capacity(self.layout.enc.len());
        for idx in &self.layout.enc {
            let (h1, ln1) = ln_forward(&x, self.store.get(idx.ln1.g), self.store.get(idx.ln1.b));
            let (attn_out, attn) = self.mha_forward(&h1, &h1, &idx.attn, enc_bias.as_deref(), false);
            x += &attn_out;
            let (h2, ln2) = ln_forward(&x, self.store.get(idx.ln2.g), self.store.get(idx.ln2.b));
            let (ff_out, ff) = self.ff_forward(&h2, &idx.ff);
            x += &ff_out;
            enc_layers.push(EncLayerCache { ln1, attn, ln2, ff });
        }
        let (enc_out, enc_final) = ln_forward(
            &x,
            self.store.get(self.layout.enc_final.g),
            self.store.get(self.layout.enc_final.b),
        );

        // Decoder.
        let mut y = self.embed(tgt_in)?;
        let mut dec_layers: Vec<DecLayerCache> = Vec::with_capacity(self.layout.dec.len());
        let last = self.layout.dec.len() - 1;
        let mut a_avg = None;
        for (l, idx) in self.layout.dec.iter().enumerate() {
            let (h1, ln1) = ln_forward(&y, self.store.get(idx.ln1.g), self.store.get(idx.ln1.b));
            let (sa_out, self_attn) = self.mha_forward(&h1, &h1, &idx.self_attn, None, true);
            y += &sa_out;
            let (h2, ln2) = ln_forward(&y, self.store.get(idx.ln2.g), self.store.get(idx.ln2.b));
            let cross_bias: Option<Vec<Array2<f64>>> =
                if l == last && placement.on_decoder() {
                    // Alignment from the second-to-last layer, averaged over
                    // heads, weights each head's own table matrix.
                    let avg = average_heads(&dec_layers[last - 1].cross_attn.a);
                    let bias = dec_m
                        .as_ref()
                        .unwrap()
                        .iter()
                        .map(|m| avg.dot(m))
                        .collect();
                    a_avg = Some(avg);
                    Some(bias)
                } else {
                    None
                };
            let (ca_out, cross_attn) =
                self.mha_forward(&h2, &enc_out, &idx.cross_attn, cross_bias.as_deref(), false);
            y += &ca_out;
            let (h3, ln3) = ln_forward(&y, self.store.get(idx.ln3.g), self.store.get(idx.ln3.b));
            let (ff_out, ff) = self.ff_forward(&h3, &idx.ff);
            y += &ff_out;
            dec_layers.push(DecLayerCache { ln1, self_attn, ln2, cross_attn, ln3, ff });
        }
        let (dec_out, dec_final) = ln_forward(
            &y,
            self.store.get(self.layout.dec_final.g),
            self.store.get(self.layout.dec_final.b),
        );
        let mut logits = dec_out.dot(self.store.get(self.layout.w_out));
        add_row_bias(&mut logits, self.store.get(self.layout.b_out));

        Ok(ForwardPass {
            src: src.to_vec(),
            tgt_in: tgt_in.to_vec(),
            enc_layers,
            enc_final,
            enc_out,
            dec_layers,
            dec_final,
            dec_out,
            enc_bias,
            dec_m,
            a_avg,
            index_slots: index.map(|ix| ix.slots.clone()),
            logits,
        })
    }

    /// Mean token cross-entropy of `labels` under the pass's logits.
    pub fn loss(&self, pass: &ForwardPass, labels: &[usize]) -> Result<f64> {
        let (d_logits, loss) = self.loss_and_dlogits(pass, labels)?;
        drop(d_logits);
        Ok(loss)
    }

    fn loss_and_dlogits(
        &self,
        pass: &ForwardPass,
        labels: &[usize],
    ) -> Result<(Array2<f64>, f64)> {
        if labels.len() != pass.logits.nrows() {
            return Err(Error::Shape(format!(
                "{} labels for {} positions",
                labels.len(),
                pass.logits.nrows()
            )));
        }
        let t = labels.len() as f64;
        let mut d_logits = pass.logits.clone();
        let mut loss = 0.0;
        for (mut row, &label) in d_logits.rows_mut().into_iter().zip(labels) {
            if label >= self.config.vocab_size {
                return Err(Error::OutOfVocab(label, self.config.vocab_size));
            }
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            row.mapv_inplace(|v| (v - max).exp());
            let sum = row.sum();
            loss -= (row[label] / sum).ln();
            row.mapv_inplace(|v| v / sum / t);
            row[label] -= 1.0 / t;
        }
        Ok((d_logits, loss / t))
    }

    /// Backward pass: gradients of the mean cross-entropy with respect to
    /// every parameter, bias table included.
    pub fn backward(&self, pass: &ForwardPass, labels: &[usize]) -> Result<(f64, Gradients)> {
        let (d_logits, loss) = self.loss_and_dlogits(pass, labels)?;
        let mut grads = self.store.zero_gradients();
        let lay = &self.layout;
        let heads = self.config.n_heads as f64;

        grads.tensors[lay.w_out] += &pass.dec_out.t().dot(&d_logits);
        grads.tensors[lay.b_out] += &d_logits.sum_axis(Axis(0)).insert_axis(Axis(0));
        let d_dec_out = d_logits.dot(&self.store.get(lay.w_out).t());

        let mut d_y = {
            let (g, b) = (lay.dec_final.g, lay.dec_final.b);
            let (dg, rest) = split_two(&mut grads.tensors, g, b);
            ln_backward(&pass.dec_final, self.store.get(g), &d_dec_out, dg, rest)
        };

        let last = lay.dec.len() - 1;
        let mut d_enc_out: Array2<f64> = Array2::zeros(pass.enc_out.dim());
        // Gradient flowing into the second-to-last layer's cross-attention
        // weights through the last layer's bias.
        let mut pending_alignment_grad: Option<Array2<f64>> = None;

        for (l, idx) in lay.dec.iter().enumerate().rev() {
            let cache = &pass.dec_layers[l];
            // Feed-forward block.
            let d_h3 = self.ff_backward(&cache.ff, &idx.ff, &d_y, &mut grads);
            let d_ln3 = {
                let (dg, db) = split_two(&mut grads.tensors, idx.ln3.g, idx.ln3.b);
                ln_backward(&cache.ln3, self.store.get(idx.ln3.g), &d_h3, dg, db)
            };
            d_y += &d_ln3;

            // Cross-attention block.
            let is_biased = l == last && pass.dec_m.is_some();
            let extra = if l + 1 == last && pending_alignment_grad.is_some() {
                pending_alignment_grad.take()
            } else {
                None
            };
            let (d_h2, d_enc_part, d_bias) = self.mha_backward(
                &cache.cross_attn,
                &idx.cross_attn,
                &d_y,
                extra.as_ref(),
                is_biased,
                &mut grads,
            );
            if is_biased {
                let ds_heads = d_bias.expect("bias gradient requested");
                let m = pass.dec_m.as_ref().unwrap();
                let a_avg = pass.a_avg.as_ref().unwrap();
                let table_idx = lay.table.unwrap();
                let slots = pass.index_slots.as_ref().unwrap();
                let mut d_a_avg: Array2<f64> = Array2::zeros(a_avg.dim());
                for (h, ds) in ds_heads.iter().enumerate() {
                    // bias_h = A_avg · M_h, so the score gradient splits into
                    // an alignment part and a table part.
                    d_a_avg += &ds.dot(&m[h].t());
                    let dm = a_avg.t().dot(ds);
                    scatter_bias_grad(&mut grads.tensors[table_idx], h, &dm, slots);
                }
                // Each head of the source layer contributed 1/H of the mean.
                pending_alignment_grad = Some(d_a_avg / heads);
            }
            d_enc_out += &d_enc_part;
            let d_ln2 = {
                let (dg, db) = split_two(&mut grads.tensors, idx.ln2.g, idx.ln2.b);
                ln_backward(&cache.ln2, self.store.get(idx.ln2.g), &d_h2, dg, db)
            };
            d_y += &d_ln2;

            // Self-attention block.
            let (d_h1q, d_h1kv, _) =
                self.mha_backward(&cache.self_attn, &idx.self_attn, &d_y, None, false, &mut grads);
            let d_h1 = d_h1q + d_h1kv;
            let d_ln1 = {
                let (dg, db) = split_two(&mut grads.tensors, idx.ln1.g, idx.ln1.b);
                ln_backward(&cache.ln1, self.store.get(idx.ln1.g), &d_h1, dg, db)
            };
            d_y += &d_ln1;
        }
        self.scatter_embedding(&d_y, &pass.tgt_in, &mut grads);

        // Encoder backward.
        let mut d_x = {
            let (g, b) = (lay.enc_final.g, lay.enc_final.b);
            let (dg, db) = split_two(&mut grads.tensors, g, b);
            ln_backward(&pass.enc_final, self.store.get(g), &d_enc_out, dg, db)
        };
        let enc_biased = pass.enc_bias.is_some();
        for (l, idx) in lay.enc.iter().enumerate().rev() {
            let cache = &pass.enc_layers[l];
            let d_h2 = self.ff_backward(&cache.ff, &idx.ff, &d_x, &mut grads);
            let d_ln2 = {
                let (dg, db) = split_two(&mut grads.tensors, idx.ln2.g, idx.ln2.b);
                ln_backward(&cache.ln2, self.store.get(idx.ln2.g), &d_h2, dg, db)
            };
            d_x += &d_ln2;

            let (d_h1q, d_h1kv, d_bias) =
                self.mha_backward(&cache.attn, &idx.attn, &d_x, None, enc_biased, &mut grads);
            if enc_biased {
                let table_idx = lay.table.unwrap();
                let slots = pass.index_slots.as_ref().unwrap();
                for (h, ds) in d_bias.expect("bias gradient requested").iter().enumerate() {
                    scatter_bias_grad(&mut grads.tensors[table_idx], h, ds, slots);
                }
            }
            let d_h1 = d_h1q + d_h1kv;
            let d_ln1 = {
                let (dg, db) = split_two(&mut grads.tensors, idx.ln1.g, idx.ln1.b);
                ln_backward(&cache.ln1, self.store.get(idx.ln1.g), &d_h1, dg, db)
            };
            d_x += &d_ln1;
        }
        self.scatter_embedding(&d_x, &pass.src, &mut grads);

        Ok((loss, grads))
    }

    fn scatter_embedding(&self, d_x: &Array2<f64>, ids: &[usize], grads: &mut Gradients) {
        let table = &mut grads.tensors[self.layout.embed];
        for (row, &id) in ids.iter().enumerate() {
            let mut target = table.row_mut(id);
            target += &d_x.row(row);
        }
    }
}

/// Scatter a dense (i, j) gradient into table slots.
fn scatter_bias_grad(
    table_grad: &mut Array2<f64>,
    head: usize,
    dense: &Array2<f64>,
    slots: &Array2<i32>,
) {
    for i in 0..dense.nrows() {
        for j in 0..dense.ncols() {
            let slot = slots[[i, j]];
            if slot >= 0 {
                table_grad[[head, slot as usize]] += dense[[i, j]];
            }
        }
    }
}

fn split_two(
    tensors: &mut [Array2<f64>],
    a: usize,
    b: usize,
) -> (&mut Array2<f64>, &mut Array2<f64>) {
    assert!(a < b);
    let (left, right) = tensors.split_at_mut(b);
    (&mut left[a], &mut right[0])
}
