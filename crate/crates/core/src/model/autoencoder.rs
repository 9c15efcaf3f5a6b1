use ndarray::{Array1, Axis};

use super::lstm::{step_backward, step_forward, StepCache};
use super::{AutoEncoderParams, LstmState, SparsityConfig};
use crate::error::{check_dim, Error, Result};

/// Gradients of the training objective, one tensor per parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients(pub AutoEncoderParams);

impl Gradients {
    pub fn zeros_like(params: &AutoEncoderParams) -> Self {
        Self(params.zeros_like())
    }

    pub fn max_abs(&self) -> f64 {
        self.0
            .tensors()
            .iter()
            .flat_map(|t| t.data.iter())
            .fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Elementwise clamp to `[-limit, limit]`.
    pub fn clip(&mut self, limit: f64) {
        for t in self.0.tensors_mut() {
            for v in t.iter_mut() {
                *v = v.clamp(-limit, limit);
            }
        }
    }
}

struct SequenceTrace {
    encoder: Vec<StepCache>,
    decoder: Vec<StepCache>,
    outputs: Vec<Array1<f64>>,
}

fn check_sequence(params: &AutoEncoderParams, seq: &[Array1<f64>]) -> Result<()> {
    if seq.is_empty() {
        return Err(Error::Empty("input sequence"));
    }
    for x in seq {
        check_dim("sequence element", params.input_dim(), x.len())?;
    }
    Ok(())
}

fn trace(params: &AutoEncoderParams, seq: &[Array1<f64>]) -> SequenceTrace {
    let hidden = params.hidden_dim();
    let mut state = LstmState::zeros(hidden);
    let mut encoder = Vec::with_capacity(seq.len());
    for x in seq {
        let cache = step_forward(&params.encoder, x.view(), &state);
        state = cache.state();
        encoder.push(cache);
    }
    let (decoder, outputs) = run_decoder(params, state, seq.len());
    SequenceTrace {
        encoder,
        decoder,
        outputs,
    }
}

fn run_decoder(
    params: &AutoEncoderParams,
    context: LstmState,
    steps: usize,
) -> (Vec<StepCache>, Vec<Array1<f64>>) {
    let zero = Array1::zeros(params.input_dim());
    let mut state = context;
    let mut caches = Vec::with_capacity(steps);
    let mut outputs = Vec::with_capacity(steps);
    for _ in 0..steps {
        let cache = step_forward(&params.decoder, zero.view(), &state);
        outputs.push(params.w_yh.dot(&cache.h) + &params.b_h);
        state = cache.state();
        caches.push(cache);
    }
    (caches, outputs)
}

/// Runs the encoder from the zero state. Returns every hidden state and the
/// final `(c_T, h_T)` context.
pub fn encode(
    params: &AutoEncoderParams,
    x_seq: &[Array1<f64>],
) -> Result<(Vec<Array1<f64>>, LstmState)> {
    check_sequence(params, x_seq)?;
    let mut state = LstmState::zeros(params.hidden_dim());
    let mut hs = Vec::with_capacity(x_seq.len());
    for x in x_seq {
        state = step_forward(&params.encoder, x.view(), &state).state();
        hs.push(state.h.clone());
    }
    Ok((hs, state))
}

/// Unrolls the decoder for `steps` steps from `context` on zero inputs and
/// maps each hidden state through `y = W_yh h + b_h`. The outputs are in
/// reverse order with respect to the encoded clip.
pub fn decode(
    params: &AutoEncoderParams,
    context: &LstmState,
    steps: usize,
) -> Result<Vec<Array1<f64>>> {
    if steps == 0 {
        return Err(Error::Empty("decode steps"));
    }
    check_dim("decoder context cell", params.hidden_dim(), context.c.len())?;
    check_dim(
        "decoder context hidden",
        params.hidden_dim(),
        context.h.len(),
    )?;
    Ok(run_decoder(params, context.clone(), steps).1)
}

/// `1/(2T) Σ_t ||x_t - y_{T+1-t}||²`: the decoder output at step `s` is
/// compared with input `T+1-s`, so callers pass both in natural order.
pub fn reconstruction_loss(x_seq: &[Array1<f64>], y_seq: &[Array1<f64>]) -> Result<f64> {
    check_dim("reconstruction length", x_seq.len(), y_seq.len())?;
    if x_seq.is_empty() {
        return Err(Error::Empty("reconstruction sequence"));
    }
    let t = x_seq.len();
    let mut sum = 0.0;
    for (x, y) in x_seq.iter().zip(y_seq.iter().rev()) {
        check_dim("reconstruction element", x.len(), y.len())?;
        sum += x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
    }
    Ok(sum / (2.0 * t as f64))
}

fn mean_activation(contexts: &[Array1<f64>]) -> Result<Array1<f64>> {
    let first = contexts.first().ok_or(Error::Empty("sparsity batch"))?;
    let mut acc = Array1::<f64>::zeros(first.len());
    for h in contexts {
        check_dim("sparsity context", first.len(), h.len())?;
        acc += &h.mapv(|v| (v + 1.0) / 2.0);
    }
    acc /= contexts.len() as f64;
    Ok(acc)
}

fn kl(rho: f64, rho_hat: f64) -> f64 {
    rho * (rho / rho_hat).ln() + (1.0 - rho) * ((1.0 - rho) / (1.0 - rho_hat)).ln()
}

/// `Σ_d KL(ρ || ρ̂_d)`, where `ρ̂_d` is the batch mean of `(h_d + 1)/2`
/// clamped to `[eps, 1 - eps]`.
pub fn sparsity_penalty(contexts: &[Array1<f64>], cfg: &SparsityConfig) -> Result<f64> {
    let rho_hat = mean_activation(contexts)?;
    Ok(rho_hat
        .iter()
        .map(|&r| kl(cfg.rho, r.clamp(cfg.eps, 1.0 - cfg.eps)))
        .sum())
}

fn check_batch(params: &AutoEncoderParams, batch: &[Vec<Array1<f64>>]) -> Result<()> {
    if batch.is_empty() {
        return Err(Error::Empty("training batch"));
    }
    batch.iter().try_for_each(|seq| check_sequence(params, seq))
}

/// Summed reconstruction loss over the batch plus `β` times the sparsity
/// penalty on the encoder final hidden states.
pub fn total_loss(
    params: &AutoEncoderParams,
    batch: &[Vec<Array1<f64>>],
    cfg: &SparsityConfig,
) -> Result<f64> {
    check_batch(params, batch)?;
    let mut recon = 0.0;
    let mut contexts = Vec::with_capacity(batch.len());
    for seq in batch {
        let tr = trace(params, seq);
        recon += reconstruction_loss(seq, &tr.outputs)?;
        contexts.push(tr.encoder.last().expect("nonempty").h.clone());
    }
    let penalty = if cfg.beta == 0.0 {
        0.0
    } else {
        sparsity_penalty(&contexts, cfg)?
    };
    Ok(recon + cfg.beta * penalty)
}

/// Exact gradient of [`total_loss`] by backpropagation through time.
pub fn backward(
    params: &AutoEncoderParams,
    batch: &[Vec<Array1<f64>>],
    cfg: &SparsityConfig,
) -> Result<Gradients> {
    check_batch(params, batch)?;
    let traces: Vec<SequenceTrace> = batch.iter().map(|seq| trace(params, seq)).collect();

    // dβ·KL/dh_T, shared by every sequence in the batch.
    let k = batch.len() as f64;
    let sparse_grad = if cfg.beta == 0.0 {
        Array1::zeros(params.hidden_dim())
    } else {
        let contexts: Vec<Array1<f64>> = traces
            .iter()
            .map(|tr| tr.encoder.last().expect("nonempty").h.clone())
            .collect();
        mean_activation(&contexts)?.mapv(|r| {
            if r < cfg.eps || r > 1.0 - cfg.eps {
                0.0
            } else {
                cfg.beta * (-cfg.rho / r + (1.0 - cfg.rho) / (1.0 - r)) / (2.0 * k)
            }
        })
    };

    let mut grads = params.zeros_like();
    let hidden = params.hidden_dim();
    for (seq, tr) in batch.iter().zip(&traces) {
        let t_len = seq.len();
        let scale = 1.0 / t_len as f64;

        // Decoder, last step first. Output s reconstructs input T-1-s.
        let mut dh = Array1::<f64>::zeros(hidden);
        let mut dc = Array1::<f64>::zeros(hidden);
        for s in (0..t_len).rev() {
            let dy = (&tr.outputs[s] - &seq[t_len - 1 - s]) * scale;
            let dy_col = dy.view().insert_axis(Axis(1));
            let h_row = tr.decoder[s].h.view().insert_axis(Axis(0));
            grads.w_yh += &dy_col.dot(&h_row);
            grads.b_h += &dy;
            let dh_total = &dh + &params.w_yh.t().dot(&dy);
            let (dc_prev, dh_prev) = step_backward(
                &params.decoder,
                &tr.decoder[s],
                &dh_total,
                &dc,
                &mut grads.decoder,
            );
            dc = dc_prev;
            dh = dh_prev;
        }

        // Decoder initial state is the encoder final state.
        dh += &sparse_grad;
        for s in (0..t_len).rev() {
            let (dc_prev, dh_prev) = step_backward(
                &params.encoder,
                &tr.encoder[s],
                &dh,
                &dc,
                &mut grads.encoder,
            );
            dc = dc_prev;
            dh = dh_prev;
        }
    }
    Ok(Gradients(grads))
}

/// `θ ← θ − lr·g` for every parameter entry.
pub fn sgd_update(
    params: &AutoEncoderParams,
    grads: &Gradients,
    lr: f64,
) -> Result<AutoEncoderParams> {
    if !(lr >= 0.0 && lr.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "learning rate must be >= 0, got {lr}"
        )));
    }
    let mut next = params.clone();
    let g = grads.0.tensors();
    let p = next.tensors_mut();
    check_dim("gradient tensor count", p.len(), g.len())?;
    for (dst, src) in p.into_iter().zip(&g) {
        check_dim("gradient tensor", dst.len(), src.data.len())?;
        for (v, d) in dst.iter_mut().zip(src.data) {
            *v -= lr * d;
        }
    }
    // Same element counts can still hide transposed shapes.
    for (a, b) in params.tensors().iter().zip(&g) {
        if a.shape != b.shape {
            return Err(Error::DimensionMismatch {
                what: "gradient shape",
                expected: a.shape.0,
                found: b.shape.0,
            });
        }
    }
    Ok(next)
}
