use ndarray::{Array1, ArrayView1, Axis};

use super::LstmParams;
use crate::error::{check_dim, Result};

/// Memory cell and hidden state of one LSTM after a step.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmState {
    pub c: Array1<f64>,
    pub h: Array1<f64>,
}

impl LstmState {
    pub fn zeros(hidden_dim: usize) -> Self {
        Self {
            c: Array1::zeros(hidden_dim),
            h: Array1::zeros(hidden_dim),
        }
    }
}

/// Everything a step produced that its backward pass needs.
#[derive(Debug, Clone)]
pub(crate) struct StepCache {
    pub x: Array1<f64>,
    pub h_prev: Array1<f64>,
    pub c_prev: Array1<f64>,
    pub i: Array1<f64>,
    pub f: Array1<f64>,
    pub o: Array1<f64>,
    pub g: Array1<f64>,
    pub tanh_c: Array1<f64>,
    pub c: Array1<f64>,
    pub h: Array1<f64>,
}

impl StepCache {
    pub fn state(&self) -> LstmState {
        LstmState {
            c: self.c.clone(),
            h: self.h.clone(),
        }
    }
}

pub(crate) fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

/// One step of the gated recurrence:
///
/// ```text
/// i = σ(W_ix x + Φ_ih h + b_i)    f = σ(W_fx x + Φ_fh h + b_f)
/// o = σ(W_ox x + Φ_oh h + b_o)    g = tanh(W_cx x + Φ_ch h + b_c)
/// c' = i ⊙ g + f ⊙ c              h' = o ⊙ tanh(c')
/// ```
pub fn lstm_step(params: &LstmParams, x: ArrayView1<f64>, prev: &LstmState) -> Result<LstmState> {
    check_dim("lstm input", params.input_dim(), x.len())?;
    check_dim("lstm cell state", params.hidden_dim(), prev.c.len())?;
    check_dim("lstm hidden state", params.hidden_dim(), prev.h.len())?;
    Ok(step_forward(params, x, prev).state())
}

/// Unchecked forward step; callers validate dimensions once per sequence.
pub(crate) fn step_forward(p: &LstmParams, x: ArrayView1<f64>, prev: &LstmState) -> StepCache {
    let h_prev = &prev.h;
    let gate = |w: &ndarray::Array2<f64>, phi: &ndarray::Array2<f64>, b: &Array1<f64>| {
        w.dot(&x) + phi.dot(h_prev) + b
    };
    let i = gate(&p.w_ix, &p.phi_ih, &p.b_i).mapv_into(sigmoid);
    let f = gate(&p.w_fx, &p.phi_fh, &p.b_f).mapv_into(sigmoid);
    let o = gate(&p.w_ox, &p.phi_oh, &p.b_o).mapv_into(sigmoid);
    let g = gate(&p.w_cx, &p.phi_ch, &p.b_c).mapv_into(f64::tanh);
    let c = &i * &g + &f * &prev.c;
    let tanh_c = c.mapv(f64::tanh);
    let h = &o * &tanh_c;
    StepCache {
        x: x.to_owned(),
        h_prev: h_prev.clone(),
        c_prev: prev.c.clone(),
        i,
        f,
        o,
        g,
        tanh_c,
        c,
        h,
    }
}

/// Back-propagates `dh` (total gradient on this step's hidden output) and
/// `dc` (gradient on this step's cell state arriving from the future)
/// through one step. Parameter gradients are accumulated into `grads`;
/// returns the gradients on the previous `(c, h)`.
pub(crate) fn step_backward(
    p: &LstmParams,
    cache: &StepCache,
    dh: &Array1<f64>,
    dc_next: &Array1<f64>,
    grads: &mut LstmParams,
) -> (Array1<f64>, Array1<f64>) {
    let d_o = dh * &cache.tanh_c;
    let dc = dc_next + &(dh * &cache.o * &cache.tanh_c.mapv(|t| 1.0 - t * t));

    let da_i = &dc * &cache.g * &cache.i.mapv(|s| s * (1.0 - s));
    let da_f = &dc * &cache.c_prev * &cache.f.mapv(|s| s * (1.0 - s));
    let da_o = d_o * &cache.o.mapv(|s| s * (1.0 - s));
    let da_c = &dc * &cache.i * &cache.g.mapv(|t| 1.0 - t * t);
    let dc_prev = &dc * &cache.f;

    let x_row = cache.x.view().insert_axis(Axis(0));
    let h_row = cache.h_prev.view().insert_axis(Axis(0));
    let mut dh_prev = Array1::zeros(cache.h_prev.len());
    for (da, phi, dw, dphi, db) in [
        (
            &da_i,
            &p.phi_ih,
            &mut grads.w_ix,
            &mut grads.phi_ih,
            &mut grads.b_i,
        ),
        (
            &da_f,
            &p.phi_fh,
            &mut grads.w_fx,
            &mut grads.phi_fh,
            &mut grads.b_f,
        ),
        (
            &da_o,
            &p.phi_oh,
            &mut grads.w_ox,
            &mut grads.phi_oh,
            &mut grads.b_o,
        ),
        (
            &da_c,
            &p.phi_ch,
            &mut grads.w_cx,
            &mut grads.phi_ch,
            &mut grads.b_c,
        ),
    ] {
        let col = da.view().insert_axis(Axis(1));
        *dw += &col.dot(&x_row);
        *dphi += &col.dot(&h_row);
        *db += da;
        dh_prev += &phi.t().dot(da);
    }
    (dc_prev, dh_prev)
}
