use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::real::{gemm, Mat};
use super::{LanguageModel, LmError, ModelConfig, Real};

/// Target value for positions that contribute nothing to the loss.
pub const IGNORE: u32 = u32::MAX;

const LN_EPS: f64 = 1e-5;
const INIT_STD: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TensorRole {
    Matrix,
    Bias,
    Gain,
}

/// Name, shape and position of one tensor inside the flat parameter vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TensorSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
    pub role: TensorRole,
}

impl TensorSpec {
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

#[derive(Debug, Clone, Copy)]
struct LayerOffsets {
    ln1_w: usize,
    ln1_b: usize,
    qkv_w: usize,
    qkv_b: usize,
    proj_w: usize,
    proj_b: usize,
    ln2_w: usize,
    ln2_b: usize,
    fc_w: usize,
    fc_b: usize,
    fcp_w: usize,
    fcp_b: usize,
}

/// Where every tensor lives in the flat parameter vector.
#[derive(Debug, Clone)]
pub struct ParamLayout {
    tensors: Vec<TensorSpec>,
    wte: usize,
    wpe: usize,
    layers: Vec<LayerOffsets>,
    lnf_w: usize,
    lnf_b: usize,
    total: usize,
}

impl ParamLayout {
    pub fn new(c: &ModelConfig) -> Self {
        let (d, f) = (c.embedding_size, c.inner_size);
        let mut tensors = Vec::new();
        let mut total = 0;
        let mut add = |name: String, shape: Vec<usize>, role: TensorRole| {
            let offset = total;
            total += shape.iter().product::<usize>();
            tensors.push(TensorSpec {
                name,
                shape,
                offset,
                role,
            });
            offset
        };
        let wte = add("wte".into(), vec![c.vocab_size, d], TensorRole::Matrix);
        let wpe = add("wpe".into(), vec![c.context, d], TensorRole::Matrix);
        let mut layers = Vec::with_capacity(c.layers);
        for l in 0..c.layers {
            let p = |s: &str| format!("h{l}.{s}");
            layers.push(LayerOffsets {
                ln1_w: add(p("ln1.weight"), vec![d], TensorRole::Gain),
                ln1_b: add(p("ln1.bias"), vec![d], TensorRole::Bias),
                qkv_w: add(p("attn.qkv.weight"), vec![d, 3 * d], TensorRole::Matrix),
                qkv_b: add(p("attn.qkv.bias"), vec![3 * d], TensorRole::Bias),
                proj_w: add(p("attn.proj.weight"), vec![d, d], TensorRole::Matrix),
                proj_b: add(p("attn.proj.bias"), vec![d], TensorRole::Bias),
                ln2_w: add(p("ln2.weight"), vec![d], TensorRole::Gain),
                ln2_b: add(p("ln2.bias"), vec![d], TensorRole::Bias),
                fc_w: add(p("mlp.fc.weight"), vec![d, f], TensorRole::Matrix),
                fc_b: add(p("mlp.fc.bias"), vec![f], TensorRole::Bias),
                fcp_w: add(p("mlp.proj.weight"), vec![f, d], TensorRole::Matrix),
                fcp_b: add(p("mlp.proj.bias"), vec![d], TensorRole::Bias),
            });
        }
        let lnf_w = add("lnf.weight".into(), vec![d], TensorRole::Gain);
        let lnf_b = add("lnf.bias".into(), vec![d], TensorRole::Bias);
        Self {
            tensors,
            wte,
            wpe,
            layers,
            lnf_w,
            lnf_b,
            total,
        }
    }

    pub fn tensors(&self) -> &[TensorSpec] {
        &self.tensors
    }

    pub fn total(&self) -> usize {
        self.total
    }
}

/// Saved forward-pass state for one layer.
#[derive(Debug, Default, Clone)]
struct LayerActs<T> {
    ln1: Vec<T>,
    ln1_mean: Vec<T>,
    ln1_rstd: Vec<T>,
    qkv: Vec<T>,
    att: Vec<T>,
    atty: Vec<T>,
    attn_mask: Vec<T>,
    res1: Vec<T>,
    ln2: Vec<T>,
    ln2_mean: Vec<T>,
    ln2_rstd: Vec<T>,
    fc: Vec<T>,
    gelu: Vec<T>,
    mlp_mask: Vec<T>,
    res2: Vec<T>,
}

/// Forward-pass buffers for a `batch x len` input, reused across steps.
#[derive(Debug, Default, Clone)]
pub struct Activations<T> {
    batch: usize,
    len: usize,
    encoded: Vec<T>,
    enc_mask: Vec<T>,
    layers: Vec<LayerActs<T>>,
    lnf: Vec<T>,
    lnf_mean: Vec<T>,
    lnf_rstd: Vec<T>,
    /// Next-token log-probabilities, `batch * len * vocab`.
    logprobs: Vec<T>,
}

impl<T: Real> Activations<T> {
    fn resize(&mut self, c: &ModelConfig, batch: usize, len: usize) {
        let n = batch * len;
        let (d, f) = (c.embedding_size, c.inner_size);
        self.batch = batch;
        self.len = len;
        let z = T::zero();
        self.encoded.resize(n * d, z);
        self.lnf.resize(n * d, z);
        self.lnf_mean.resize(n, z);
        self.lnf_rstd.resize(n, z);
        self.logprobs.resize(n * c.vocab_size, z);
        self.layers.resize_with(c.layers, LayerActs::default);
        for a in &mut self.layers {
            a.ln1.resize(n * d, z);
            a.ln1_mean.resize(n, z);
            a.ln1_rstd.resize(n, z);
            a.qkv.resize(n * 3 * d, z);
            a.att.resize(batch * c.heads * len * len, z);
            a.atty.resize(n * d, z);
            a.res1.resize(n * d, z);
            a.ln2.resize(n * d, z);
            a.ln2_mean.resize(n, z);
            a.ln2_rstd.resize(n, z);
            a.fc.resize(n * f, z);
            a.gelu.resize(n * f, z);
            a.res2.resize(n * d, z);
        }
    }

    /// Log-probabilities for position `t` of sequence `b`.
    pub fn logprobs_at(&self, b: usize, t: usize, vocab: usize) -> &[T] {
        let row = b * self.len + t;
        &self.logprobs[row * vocab..(row + 1) * vocab]
    }

    pub fn logprobs(&self) -> &[T] {
        &self.logprobs
    }
}

/// GPT-2 style decoder with learned positions, pre-norm blocks and an
/// output head tied to the token embedding.
#[derive(Debug, Clone)]
pub struct Gpt<T> {
    config: ModelConfig,
    layout: ParamLayout,
    params: Vec<T>,
}

impl<T: Real> Gpt<T> {
    /// Normal(0, 0.02) matrices, zero biases, unit LayerNorm gains.
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self, LmError> {
        config.validate()?;
        let layout = ParamLayout::new(&config);
        let mut params = vec![T::zero(); layout.total];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, INIT_STD).expect("valid normal");
        for t in &layout.tensors {
            let slice = &mut params[t.range()];
            match t.role {
                TensorRole::Matrix => {
                    for p in slice {
                        *p = T::from_f64_lossy(normal.sample(&mut rng));
                    }
                }
                TensorRole::Gain => slice.fill(T::one()),
                TensorRole::Bias => {}
            }
        }
        Ok(Self {
            config,
            layout,
            params,
        })
    }

    pub fn from_params(config: ModelConfig, params: Vec<T>) -> Result<Self, LmError> {
        config.validate()?;
        let layout = ParamLayout::new(&config);
        if params.len() != layout.total {
            return Err(LmError::Config(format!(
                "expected {} parameters, found {}",
                layout.total,
                params.len()
            )));
        }
        Ok(Self {
            config,
            layout,
            params,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn layout(&self) -> &ParamLayout {
        &self.layout
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

    /// Same weights at another precision.
    pub fn cast<U: Real>(&self) -> Gpt<U> {
        Gpt {
            config: self.config.clone(),
            layout: self.layout.clone(),
            params: self.params.iter().map(|p| U::from_f64_lossy(p.as_f64())).collect(),
        }
    }

    fn check_input(&self, ids: &[u32], batch: usize, len: usize) -> Result<(), LmError> {
        if len == 0 || batch == 0 || ids.len() != batch * len {
            return Err(LmError::Shape(format!(
                "{} ids do not form {batch} sequences of length {len}",
                ids.len()
            )));
        }
        if len > self.config.context {
            return Err(LmError::TooLong {
                len,
                context: self.config.context,
            });
        }
        if let Some(&bad) = ids.iter().find(|&&id| id as usize >= self.config.vocab_size) {
            return Err(LmError::IdOutOfRange {
                id: bad,
                vocab: self.config.vocab_size,
            });
        }
        Ok(())
    }

    /// Next-token log-probabilities for every position, `batch * len * vocab`.
    pub fn forward(&self, ids: &[u32], batch: usize, len: usize) -> Result<Vec<T>, LmError> {
        let mut acts = Activations::default();
        self.forward_into(ids, batch, len, &mut acts, None)?;
        Ok(acts.logprobs)
    }

    /// Runs the model, keeping every intermediate needed by [`Gpt::backward`].
    /// Dropout is applied only when `rng` is given and the config's rate is positive.
    pub fn forward_into(
        &self,
        ids: &[u32],
        batch: usize,
        len: usize,
        acts: &mut Activations<T>,
        mut rng: Option<&mut ChaCha8Rng>,
    ) -> Result<(), LmError> {
        self.check_input(ids, batch, len)?;
        let c = &self.config;
        let (d, f, v) = (c.embedding_size, c.inner_size, c.vocab_size);
        let n = batch * len;
        let p = &self.params;
        acts.resize(c, batch, len);
        let dropout = match rng.as_deref_mut() {
            Some(_) if c.dropout > 0.0 => c.dropout,
            _ => 0.0,
        };

        for (i, &id) in ids.iter().enumerate() {
            let t = i % len;
            let out = &mut acts.encoded[i * d..(i + 1) * d];
            let te = &p[self.layout.wte + id as usize * d..][..d];
            let pe = &p[self.layout.wpe + t * d..][..d];
            for j in 0..d {
                out[j] = te[j] + pe[j];
            }
        }
        apply_dropout(&mut acts.encoded, &mut acts.enc_mask, dropout, rng.as_deref_mut());

        for l in 0..c.layers {
            let o = self.layout.layers[l];
            let (prev, rest) = acts.layers.split_at_mut(l);
            let a = &mut rest[0];
            let x: &[T] = if l == 0 { &acts.encoded } else { &prev[l - 1].res2 };

            layernorm_forward(x, &p[o.ln1_w..][..d], &p[o.ln1_b..][..d], &mut a.ln1, &mut a.ln1_mean, &mut a.ln1_rstd, d);
            linear_forward(&a.ln1, &p[o.qkv_w..][..d * 3 * d], &p[o.qkv_b..][..3 * d], &mut a.qkv, n, d, 3 * d);
            attention_forward(&a.qkv, &mut a.att, &mut a.atty, batch, len, c.heads, d);
            linear_forward(&a.atty, &p[o.proj_w..][..d * d], &p[o.proj_b..][..d], &mut a.res1, n, d, d);
            apply_dropout(&mut a.res1, &mut a.attn_mask, dropout, rng.as_deref_mut());
            for (r, xi) in a.res1.iter_mut().zip(x) {
                *r += *xi;
            }

            layernorm_forward(&a.res1, &p[o.ln2_w..][..d], &p[o.ln2_b..][..d], &mut a.ln2, &mut a.ln2_mean, &mut a.ln2_rstd, d);
            linear_forward(&a.ln2, &p[o.fc_w..][..d * f], &p[o.fc_b..][..f], &mut a.fc, n, d, f);
            for (g, &u) in a.gelu.iter_mut().zip(&a.fc) {
                *g = gelu(u);
            }
            linear_forward(&a.gelu, &p[o.fcp_w..][..f * d], &p[o.fcp_b..][..d], &mut a.res2, n, f, d);
            apply_dropout(&mut a.res2, &mut a.mlp_mask, dropout, rng.as_deref_mut());
            for (r, xi) in a.res2.iter_mut().zip(&a.res1) {
                *r += *xi;
            }
        }

        let last: &[T] = match acts.layers.last() {
            Some(a) => &a.res2,
            None => &acts.encoded,
        };
        layernorm_forward(
            last,
            &p[self.layout.lnf_w..][..d],
            &p[self.layout.lnf_b..][..d],
            &mut acts.lnf,
            &mut acts.lnf_mean,
            &mut acts.lnf_rstd,
            d,
        );
        gemm(
            Mat::new(&acts.lnf, n, d, d),
            Mat::new(&p[self.layout.wte..][..v * d], v, d, d).t(),
            T::zero(),
            &mut acts.logprobs,
            v,
        );
        for row in acts.logprobs.chunks_mut(v) {
            log_softmax(row);
        }
        Ok(())
    }

    /// Mean negative log-likelihood of `targets` under the last forward pass.
    /// Returns the loss and the number of counted positions.
    pub fn loss(&self, acts: &Activations<T>, targets: &[u32]) -> (f64, usize) {
        let v = self.config.vocab_size;
        let mut sum = 0.0;
        let mut count = 0;
        for (i, &tgt) in targets.iter().enumerate() {
            if tgt != IGNORE {
                sum -= acts.logprobs[i * v + tgt as usize].as_f64();
                count += 1;
            }
        }
        (if count > 0 { sum / count as f64 } else { 0.0 }, count)
    }

    /// Gradient of the mean target NLL, written into `grads` (overwritten).
    pub fn backward(&self, ids: &[u32], targets: &[u32], acts: &Activations<T>, grads: &mut [T]) {
        let c = &self.config;
        let (d, f, v, h) = (c.embedding_size, c.inner_size, c.vocab_size, c.heads);
        let (batch, len) = (acts.batch, acts.len);
        let n = batch * len;
        assert_eq!(ids.len(), n);
        assert_eq!(targets.len(), n);
        assert_eq!(grads.len(), self.params.len());
        grads.fill(T::zero());
        let p = &self.params;
        let lay = &self.layout;

        let count = targets.iter().filter(|&&t| t != IGNORE).count();
        let mut dlogits = vec![T::zero(); n * v];
        if count > 0 {
            let scale = T::one() / T::from_usize(count).unwrap();
            for (i, &tgt) in targets.iter().enumerate() {
                if tgt == IGNORE {
                    continue;
                }
                let lp = &acts.logprobs[i * v..(i + 1) * v];
                let dl = &mut dlogits[i * v..(i + 1) * v];
                for j in 0..v {
                    dl[j] = lp[j].exp() * scale;
                }
                dl[tgt as usize] -= scale;
            }
        }

        let mut dx = vec![T::zero(); n * d];
        gemm(
            Mat::new(&dlogits, n, v, v),
            Mat::new(&p[lay.wte..][..v * d], v, d, d),
            T::zero(),
            &mut dx,
            d,
        );
        gemm(
            Mat::new(&dlogits, n, v, v).t(),
            Mat::new(&acts.lnf, n, d, d),
            T::one(),
            &mut grads[lay.wte..][..v * d],
            d,
        );
        drop(dlogits);

        let mut dres = vec![T::zero(); n * d];
        {
            let last: &[T] = match acts.layers.last() {
                Some(a) => &a.res2,
                None => &acts.encoded,
            };
            let (gw, gb) = two_mut(grads, lay.lnf_w, lay.lnf_b, d);
            layernorm_backward(&dx, last, &acts.lnf_mean, &acts.lnf_rstd, &p[lay.lnf_w..][..d], gw, gb, &mut dres, d);
        }

        let mut dbig = vec![T::zero(); n * f];
        let mut dfc = vec![T::zero(); n * f];
        let mut dln = vec![T::zero(); n * d];
        let mut datty = vec![T::zero(); n * d];
        let mut dqkv = vec![T::zero(); n * 3 * d];
        let mut dbranch = vec![T::zero(); n * d];
        let mut datt = vec![T::zero(); len * len];

        for l in (0..c.layers).rev() {
            let o = lay.layers[l];
            let a = &acts.layers[l];
            let x: &[T] = if l == 0 { &acts.encoded } else { &acts.layers[l - 1].res2 };

            // dres holds d(res2); the MLP branch and the skip both see it.
            masked_copy(&dres, &a.mlp_mask, &mut dbranch);
            {
                let (gw, gb) = two_mut(grads, o.fcp_w, o.fcp_b, f * d);
                linear_backward(&dbranch, &a.gelu, &p[o.fcp_w..][..f * d], &mut dbig, gw, &mut gb[..d], n, f, d);
            }
            for ((g, &u), &dg) in dfc.iter_mut().zip(&a.fc).zip(&dbig) {
                *g = dg * gelu_grad(u);
            }
            {
                let (gw, gb) = two_mut(grads, o.fc_w, o.fc_b, d * f);
                linear_backward(&dfc, &a.ln2, &p[o.fc_w..][..d * f], &mut dln, gw, &mut gb[..f], n, d, f);
            }
            {
                let (gw, gb) = two_mut(grads, o.ln2_w, o.ln2_b, d);
                layernorm_backward(&dln, &a.res1, &a.ln2_mean, &a.ln2_rstd, &p[o.ln2_w..][..d], gw, gb, &mut dres, d);
            }

            // dres now holds d(res1).
            masked_copy(&dres, &a.attn_mask, &mut dbranch);
            {
                let (gw, gb) = two_mut(grads, o.proj_w, o.proj_b, d * d);
                linear_backward(&dbranch, &a.atty, &p[o.proj_w..][..d * d], &mut datty, gw, &mut gb[..d], n, d, d);
            }
            attention_backward(&datty, &a.qkv, &a.att, &mut dqkv, &mut datt, batch, len, h, d);
            {
                let (gw, gb) = two_mut(grads, o.qkv_w, o.qkv_b, d * 3 * d);
                linear_backward(&dqkv, &a.ln1, &p[o.qkv_w..][..d * 3 * d], &mut dln, gw, &mut gb[..3 * d], n, d, 3 * d);
            }
            {
                let (gw, gb) = two_mut(grads, o.ln1_w, o.ln1_b, d);
                layernorm_backward(&dln, x, &a.ln1_mean, &a.ln1_rstd, &p[o.ln1_w..][..d], gw, gb, &mut dres, d);
            }
        }

        if !acts.enc_mask.is_empty() {
            for (g, &m) in dres.iter_mut().zip(&acts.enc_mask) {
                *g *= m;
            }
        }
        for (i, &id) in ids.iter().enumerate() {
            let t = i % len;
            let g = &dres[i * d..(i + 1) * d];
            let te = lay.wte + id as usize * d;
            let pe = lay.wpe + t * d;
            for j in 0..d {
                grads[te + j] += g[j];
                grads[pe + j] += g[j];
            }
        }
    }
}

impl<T: Real> LanguageModel for Gpt<T> {
    fn vocab_size(&self) -> usize {
        self.config.vocab_size
    }

    fn context(&self) -> usize {
        self.config.context
    }

    fn next_token_logprobs(&self, ids: &[u32]) -> Result<Vec<f64>, LmError> {
        Ok(self
            .forward(ids, 1, ids.len())?
            .into_iter()
            .map(Real::as_f64)
            .collect())
    }

    fn successor_logprobs(&self, ids: &[u32], batch: usize, len: usize) -> Result<Vec<f64>, LmError> {
        let mut acts = Activations::default();
        self.forward_into(ids, batch, len, &mut acts, None)?;
        let v = self.config.vocab_size;
        let mut out = Vec::with_capacity(batch * (len - 1));
        for b in 0..batch {
            for t in 0..len - 1 {
                let next = ids[b * len + t + 1] as usize;
                out.push(acts.logprobs_at(b, t, v)[next].as_f64());
            }
        }
        Ok(out)
    }
}

/// Disjoint mutable views of a weight and the bias that follows it.
fn two_mut<T>(grads: &mut [T], w: usize, b: usize, w_len: usize) -> (&mut [T], &mut [T]) {
    assert!(w + w_len <= b);
    let (head, tail) = grads.split_at_mut(b);
    (&mut head[w..w + w_len], tail)
}

fn masked_copy<T: Real>(src: &[T], mask: &[T], dst: &mut [T]) {
    if mask.is_empty() {
        dst.copy_from_slice(src);
    } else {
        for ((d, &s), &m) in dst.iter_mut().zip(src).zip(mask) {
            *d = s * m;
        }
    }
}

/// Inverted dropout. Leaves `mask` empty when disabled.
fn apply_dropout<T: Real>(x: &mut [T], mask: &mut Vec<T>, p: f64, rng: Option<&mut ChaCha8Rng>) {
    mask.clear();
    let Some(rng) = rng else { return };
    if p <= 0.0 {
        return;
    }
    let keep = T::from_f64_lossy(1.0 / (1.0 - p));
    mask.extend((0..x.len()).map(|_| if rng.random::<f64>() < p { T::zero() } else { keep }));
    for (v, &m) in x.iter_mut().zip(mask.iter()) {
        *v *= m;
    }
}

fn layernorm_forward<T: Real>(
    x: &[T],
    w: &[T],
    b: &[T],
    out: &mut [T],
    mean: &mut [T],
    rstd: &mut [T],
    d: usize,
) {
    let eps = T::from_f64_lossy(LN_EPS);
    let dn = T::from_usize(d).unwrap();
    for (i, (row, o)) in x.chunks(d).zip(out.chunks_mut(d)).enumerate() {
        let m = row.iter().copied().sum::<T>() / dn;
        let var = row.iter().map(|&v| (v - m) * (v - m)).sum::<T>() / dn;
        let r = T::one() / (var + eps).sqrt();
        for j in 0..d {
            o[j] = (row[j] - m) * r * w[j] + b[j];
        }
        mean[i] = m;
        rstd[i] = r;
    }
}

/// Adds the input gradient into `dx`, and weight/bias gradients into `dw`/`db`.
#[allow(clippy::too_many_arguments)]
fn layernorm_backward<T: Real>(
    dout: &[T],
    x: &[T],
    mean: &[T],
    rstd: &[T],
    w: &[T],
    dw: &mut [T],
    db: &mut [T],
    dx: &mut [T],
    d: usize,
) {
    let dn = T::from_usize(d).unwrap();
    for i in 0..mean.len() {
        let xr = &x[i * d..(i + 1) * d];
        let gr = &dout[i * d..(i + 1) * d];
        let (m, r) = (mean[i], rstd[i]);
        let mut dnorm_mean = T::zero();
        let mut dnorm_norm_mean = T::zero();
        for j in 0..d {
            let norm = (xr[j] - m) * r;
            let dnorm = gr[j] * w[j];
            dnorm_mean += dnorm;
            dnorm_norm_mean += dnorm * norm;
        }
        dnorm_mean /= dn;
        dnorm_norm_mean /= dn;
        let dxr = &mut dx[i * d..(i + 1) * d];
        for j in 0..d {
            let norm = (xr[j] - m) * r;
            let dnorm = gr[j] * w[j];
            db[j] += gr[j];
            dw[j] += gr[j] * norm;
            dxr[j] += (dnorm - dnorm_mean - norm * dnorm_norm_mean) * r;
        }
    }
}

/// `out[n x o] = x[n x i] * w[i x o] + b`.
fn linear_forward<T: Real>(x: &[T], w: &[T], b: &[T], out: &mut [T], n: usize, i: usize, o: usize) {
    for row in out.chunks_mut(o) {
        row.copy_from_slice(b);
    }
    gemm(Mat::new(x, n, i, i), Mat::new(w, i, o, o), T::one(), out, o);
}

/// Overwrites `dx`; accumulates into `dw` and `db`.
#[allow(clippy::too_many_arguments)]
fn linear_backward<T: Real>(
    dout: &[T],
    x: &[T],
    w: &[T],
    dx: &mut [T],
    dw: &mut [T],
    db: &mut [T],
    n: usize,
    i: usize,
    o: usize,
) {
    gemm(Mat::new(dout, n, o, o), Mat::new(w, i, o, o).t(), T::zero(), dx, i);
    gemm(Mat::new(x, n, i, i).t(), Mat::new(dout, n, o, o), T::one(), dw, o);
    for row in dout.chunks(o) {
        for (g, &r) in db.iter_mut().zip(row) {
            *g += r;
        }
    }
}

/// Causal multi-head attention. `att` keeps the softmax weights, with exact
/// zeros above the diagonal.
fn attention_forward<T: Real>(qkv: &[T], att: &mut [T], out: &mut [T], batch: usize, len: usize, heads: usize, d: usize) {
    let hs = d / heads;
    let scale = T::one() / T::from_usize(hs).unwrap().sqrt();
    for b in 0..batch {
        let base = b * len * 3 * d;
        for h in 0..heads {
            let q = Mat::new(&qkv[base + h * hs..], len, hs, 3 * d);
            let k = Mat::new(&qkv[base + d + h * hs..], len, hs, 3 * d);
            let v = Mat::new(&qkv[base + 2 * d + h * hs..], len, hs, 3 * d);
            let a = &mut att[(b * heads + h) * len * len..][..len * len];
            gemm(q, k.t(), T::zero(), a, len);
            for t in 0..len {
                let row = &mut a[t * len..(t + 1) * len];
                let mut max = T::neg_infinity();
                for s in row[..=t].iter_mut() {
                    *s *= scale;
                    if *s > max {
                        max = *s;
                    }
                }
                let mut sum = T::zero();
                for s in row[..=t].iter_mut() {
                    *s = (*s - max).exp();
                    sum += *s;
                }
                for s in row[..=t].iter_mut() {
                    *s /= sum;
                }
                row[t + 1..].fill(T::zero());
            }
            gemm(Mat::new(a, len, len, len), v, T::zero(), &mut out[b * len * d + h * hs..], d);
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn attention_backward<T: Real>(
    dout: &[T],
    qkv: &[T],
    att: &[T],
    dqkv: &mut [T],
    datt: &mut [T],
    batch: usize,
    len: usize,
    heads: usize,
    d: usize,
) {
    let hs = d / heads;
    let scale = T::one() / T::from_usize(hs).unwrap().sqrt();
    for b in 0..batch {
        let base = b * len * 3 * d;
        for h in 0..heads {
            let (qo, ko, vo) = (base + h * hs, base + d + h * hs, base + 2 * d + h * hs);
            let q = Mat::new(&qkv[qo..], len, hs, 3 * d);
            let k = Mat::new(&qkv[ko..], len, hs, 3 * d);
            let v = Mat::new(&qkv[vo..], len, hs, 3 * d);
            let a = &att[(b * heads + h) * len * len..][..len * len];
            let g = Mat::new(&dout[b * len * d + h * hs..], len, hs, d);

            gemm(g, v.t(), T::zero(), datt, len);
            gemm(Mat::new(a, len, len, len).t(), g, T::zero(), &mut dqkv[vo..], 3 * d);
            for t in 0..len {
                let arow = &a[t * len..(t + 1) * len];
                let drow = &mut datt[t * len..(t + 1) * len];
                let dot: T = (0..=t).map(|j| arow[j] * drow[j]).sum();
                for j in 0..=t {
                    drow[j] = arow[j] * (drow[j] - dot) * scale;
                }
                drow[t + 1..].fill(T::zero());
            }
            let dpre = Mat::new(&*datt, len, len, len);
            gemm(dpre, k, T::zero(), &mut dqkv[qo..], 3 * d);
            gemm(dpre.t(), q, T::zero(), &mut dqkv[ko..], 3 * d);
        }
    }
}

fn gelu_consts<T: Real>() -> (T, T) {
    (
        T::from_f64_lossy((2.0 / std::f64::consts::PI).sqrt()),
        T::from_f64_lossy(0.044715),
    )
}

/// Tanh approximation of GELU.
fn gelu<T: Real>(x: T) -> T {
    let (s, c) = gelu_consts::<T>();
    let half = T::from_f64_lossy(0.5);
    half * x * (T::one() + (s * (x + c * x * x * x)).tanh())
}

fn gelu_grad<T: Real>(x: T) -> T {
    let (s, c) = gelu_consts::<T>();
    let half = T::from_f64_lossy(0.5);
    let three = T::from_f64_lossy(3.0);
    let th = (s * (x + c * x * x * x)).tanh();
    half * (T::one() + th) + half * x * (T::one() - th * th) * s * (T::one() + three * c * x * x)
}

fn log_softmax<T: Real>(row: &mut [T]) {
    let max = row.iter().copied().fold(T::neg_infinity(), T::max);
    let lse = row.iter().map(|&x| (x - max).exp()).sum::<T>().ln() + max;
    for x in row {
        *x = *x - lse;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(vocab: usize) -> ModelConfig {
        ModelConfig {
            layers: 2,
            heads: 2,
            embedding_size: 16,
            inner_size: 32,
            dropout: 0.0,
            context: 12,
            vocab_size: vocab,
        }
    }

    fn random_ids(n: usize, vocab: usize, seed: u64) -> Vec<u32> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.random_range(0..vocab as u32)).collect()
    }

    #[test]
    fn layout_matches_closed_form_count() {
        let cfg = ModelConfig {
            layers: 2,
            heads: 2,
            embedding_size: 32,
            inner_size: 128,
            dropout: 0.0,
            context: 128,
            vocab_size: 64,
        };
        let m = Gpt::<f32>::init(cfg.clone(), 0).unwrap();
        // 64*32 + 128*32 + 2*(64 + 3168 + 1056 + 64 + 4224 + 4128) + 64
        assert_eq!(m.param_count(), 31_616);
        assert_eq!(cfg.param_count(), 31_616);
        let tensor_total: usize = m.layout().tensors().iter().map(TensorSpec::len).sum();
        assert_eq!(tensor_total, 31_616);
    }

    #[test]
    fn init_is_seeded() {
        let a = Gpt::<f32>::init(tiny(10), 3).unwrap();
        let b = Gpt::<f32>::init(tiny(10), 3).unwrap();
        let c = Gpt::<f32>::init(tiny(10), 4).unwrap();
        assert_eq!(a.params(), b.params());
        assert_ne!(a.params(), c.params());
        let lnf = a.layout().tensors().iter().find(|t| t.name == "lnf.weight").unwrap();
        assert!(a.params()[lnf.range()].iter().all(|&x| x == 1.0));
        let qb = a.layout().tensors().iter().find(|t| t.name == "h1.attn.qkv.bias").unwrap();
        assert!(a.params()[qb.range()].iter().all(|&x| x == 0.0));
    }

    #[test]
    fn input_errors() {
        let m = Gpt::<f32>::init(tiny(10), 0).unwrap();
        assert!(matches!(m.forward(&[1, 10], 1, 2), Err(LmError::IdOutOfRange { id: 10, .. })));
        assert!(matches!(m.forward(&[1; 13], 1, 13), Err(LmError::TooLong { len: 13, .. })));
        assert!(matches!(m.forward(&[1; 5], 2, 3), Err(LmError::Shape(_))));
    }

    #[test]
    fn distributions_are_normalized() {
        let m = Gpt::<f32>::init(tiny(23), 1).unwrap();
        let ids = random_ids(3 * 12, 23, 9);
        let lp = m.forward(&ids, 3, 12).unwrap();
        for row in lp.chunks(23) {
            let s: f64 = row.iter().map(|&x| (x as f64).exp()).sum();
            assert!((s - 1.0).abs() < 1e-5, "{s}");
        }
    }

    #[test]
    fn causal_mask_is_exact() {
        let m = Gpt::<f32>::init(tiny(23), 2).unwrap();
        let ids = random_ids(12, 23, 5);
        let base = m.forward(&ids, 1, 12).unwrap();
        for t in 0..12 {
            let mut changed = ids.clone();
            changed[t] = (changed[t] + 7) % 23;
            let out = m.forward(&changed, 1, 12).unwrap();
            assert_eq!(&out[..t * 23], &base[..t * 23], "position {t}");
            assert_ne!(&out[t * 23..], &base[t * 23..]);
        }
    }

    #[test]
    fn batch_rows_are_independent() {
        let m = Gpt::<f64>::init(tiny(11), 2).unwrap();
        let ids = random_ids(24, 11, 1);
        let both = m.forward(&ids, 2, 12).unwrap();
        let second = m.forward(&ids[12..], 1, 12).unwrap();
        for (a, b) in both[12 * 11..].iter().zip(&second) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut m = Gpt::<f64>::init(tiny(13), 11).unwrap();
        // non-trivial gains and biases so every path carries gradient
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for p in m.params_mut() {
            *p += rng.random_range(-0.05..0.05);
        }
        let (b, t) = (2, 9);
        let ids = random_ids(b * t, 13, 4);
        let mut targets = random_ids(b * t, 13, 6);
        targets[3] = IGNORE;
        let mut acts = Activations::default();
        m.forward_into(&ids, b, t, &mut acts, None).unwrap();
        let mut grads = vec![0.0; m.param_count()];
        m.backward(&ids, &targets, &acts, &mut grads);

        let loss_at = |m: &Gpt<f64>| {
            let mut acts = Activations::default();
            m.forward_into(&ids, b, t, &mut acts, None).unwrap();
            m.loss(&acts, &targets).0
        };
        let mut checked = 0;
        for spec in m.layout().tensors().to_vec() {
            for k in [0, spec.len() / 2, spec.len() - 1] {
                let i = spec.offset + k;
                let h = 1e-5;
                let orig = m.params()[i];
                m.params_mut()[i] = orig + h;
                let up = loss_at(&m);
                m.params_mut()[i] = orig - h;
                let down = loss_at(&m);
                m.params_mut()[i] = orig;
                let numeric = (up - down) / (2.0 * h);
                let analytic = grads[i];
                let denom = numeric.abs().max(analytic.abs()).max(1e-7);
                assert!(
                    (numeric - analytic).abs() / denom < 1e-4,
                    "{} [{k}]: analytic {analytic} numeric {numeric}",
                    spec.name
                );
                checked += 1;
            }
        }
        assert!(checked >= 20);
    }

    #[test]
    fn dropout_only_with_rng() {
        let mut cfg = tiny(9);
        cfg.dropout = 0.5;
        let m = Gpt::<f32>::init(cfg, 0).unwrap();
        let ids = random_ids(12, 9, 0);
        let mut a = Activations::default();
        m.forward_into(&ids, 1, 12, &mut a, None).unwrap();
        let plain = a.logprobs().to_vec();
        assert_eq!(plain, m.forward(&ids, 1, 12).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        m.forward_into(&ids, 1, 12, &mut a, Some(&mut rng)).unwrap();
        assert_ne!(a.logprobs(), &plain[..]);
    }
}
