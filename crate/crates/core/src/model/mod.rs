//! A single sparse LSTM auto-encoder layer.
//!
//! The encoder LSTM consumes a clip `x_1..x_T` from a zero state. Its final
//! `(c_T, h_T)` seeds the decoder LSTM, which is fed zero inputs and whose
//! hidden states are mapped linearly to outputs `y_1..y_T`. The outputs
//! reconstruct the clip in reverse order. Training minimizes the summed
//! reconstruction loss plus a KL sparsity penalty on the batch-averaged
//! encoder final hidden state; gradients are hand-derived (BPTT).

mod autoencoder;
pub mod gradcheck;
mod lstm;

pub use autoencoder::{
    backward, decode, encode, reconstruction_loss, sgd_update, sparsity_penalty, total_loss,
    Gradients,
};
pub use lstm::{lstm_step, LstmState};

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::Uniform;

use crate::error::{Error, Result};

/// One LSTM cell's weights: input maps `W`, recurrent maps `Φ` and biases,
/// for the input, forget, output gates and the cell candidate.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    pub w_ix: Array2<f64>,
    pub w_fx: Array2<f64>,
    pub w_ox: Array2<f64>,
    pub w_cx: Array2<f64>,
    pub phi_ih: Array2<f64>,
    pub phi_fh: Array2<f64>,
    pub phi_oh: Array2<f64>,
    pub phi_ch: Array2<f64>,
    pub b_i: Array1<f64>,
    pub b_f: Array1<f64>,
    pub b_o: Array1<f64>,
    pub b_c: Array1<f64>,
}

impl LstmParams {
    pub fn zeros(input_dim: usize, hidden_dim: usize) -> Self {
        let w = || Array2::zeros((hidden_dim, input_dim));
        let phi = || Array2::zeros((hidden_dim, hidden_dim));
        let b = || Array1::zeros(hidden_dim);
        Self {
            w_ix: w(),
            w_fx: w(),
            w_ox: w(),
            w_cx: w(),
            phi_ih: phi(),
            phi_fh: phi(),
            phi_oh: phi(),
            phi_ch: phi(),
            b_i: b(),
            b_f: b(),
            b_o: b(),
            b_c: b(),
        }
    }

    /// Weights uniform on `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`, biases zero.
    pub fn random<R: Rng + ?Sized>(input_dim: usize, hidden_dim: usize, rng: &mut R) -> Self {
        let mut p = Self::zeros(input_dim, hidden_dim);
        for w in [&mut p.w_ix, &mut p.w_fx, &mut p.w_ox, &mut p.w_cx] {
            fill_uniform(w.as_slice_mut().unwrap(), input_dim, rng);
        }
        for phi in [&mut p.phi_ih, &mut p.phi_fh, &mut p.phi_oh, &mut p.phi_ch] {
            fill_uniform(phi.as_slice_mut().unwrap(), hidden_dim, rng);
        }
        p
    }

    pub fn input_dim(&self) -> usize {
        self.w_ix.ncols()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w_ix.nrows()
    }

    pub fn validate(&self) -> Result<()> {
        let (h, d) = (self.hidden_dim(), self.input_dim());
        for w in [&self.w_fx, &self.w_ox, &self.w_cx] {
            check_shape("input matrix", w.dim(), (h, d))?;
        }
        for phi in [&self.phi_ih, &self.phi_fh, &self.phi_oh, &self.phi_ch] {
            check_shape("recurrent matrix", phi.dim(), (h, h))?;
        }
        for b in [&self.b_i, &self.b_f, &self.b_o, &self.b_c] {
            crate::error::check_dim("bias vector", h, b.len())?;
        }
        Ok(())
    }

    fn tensors(&self) -> [(&'static str, &[f64]); 12] {
        [
            ("w_ix", self.w_ix.as_slice().unwrap()),
            ("w_fx", self.w_fx.as_slice().unwrap()),
            ("w_ox", self.w_ox.as_slice().unwrap()),
            ("w_cx", self.w_cx.as_slice().unwrap()),
            ("phi_ih", self.phi_ih.as_slice().unwrap()),
            ("phi_fh", self.phi_fh.as_slice().unwrap()),
            ("phi_oh", self.phi_oh.as_slice().unwrap()),
            ("phi_ch", self.phi_ch.as_slice().unwrap()),
            ("b_i", self.b_i.as_slice().unwrap()),
            ("b_f", self.b_f.as_slice().unwrap()),
            ("b_o", self.b_o.as_slice().unwrap()),
            ("b_c", self.b_c.as_slice().unwrap()),
        ]
    }

    fn tensors_mut(&mut self) -> [&mut [f64]; 12] {
        [
            self.w_ix.as_slice_mut().unwrap(),
            self.w_fx.as_slice_mut().unwrap(),
            self.w_ox.as_slice_mut().unwrap(),
            self.w_cx.as_slice_mut().unwrap(),
            self.phi_ih.as_slice_mut().unwrap(),
            self.phi_fh.as_slice_mut().unwrap(),
            self.phi_oh.as_slice_mut().unwrap(),
            self.phi_ch.as_slice_mut().unwrap(),
            self.b_i.as_slice_mut().unwrap(),
            self.b_f.as_slice_mut().unwrap(),
            self.b_o.as_slice_mut().unwrap(),
            self.b_c.as_slice_mut().unwrap(),
        ]
    }
}

/// Encoder, decoder and the linear read-out of one auto-encoder layer.
#[derive(Debug, Clone, PartialEq)]
pub struct AutoEncoderParams {
    pub encoder: LstmParams,
    pub decoder: LstmParams,
    /// `input_dim x hidden_dim`
    pub w_yh: Array2<f64>,
    pub b_h: Array1<f64>,
}

/// A borrowed, named view of one parameter tensor in row-major order.
#[derive(Debug, Clone)]
pub struct TensorRef<'a> {
    pub name: String,
    pub shape: (usize, usize),
    pub data: &'a [f64],
}

impl AutoEncoderParams {
    pub fn zeros(input_dim: usize, hidden_dim: usize) -> Self {
        Self {
            encoder: LstmParams::zeros(input_dim, hidden_dim),
            decoder: LstmParams::zeros(input_dim, hidden_dim),
            w_yh: Array2::zeros((input_dim, hidden_dim)),
            b_h: Array1::zeros(input_dim),
        }
    }

    pub fn random<R: Rng + ?Sized>(input_dim: usize, hidden_dim: usize, rng: &mut R) -> Self {
        let encoder = LstmParams::random(input_dim, hidden_dim, rng);
        let decoder = LstmParams::random(input_dim, hidden_dim, rng);
        let mut w_yh = Array2::zeros((input_dim, hidden_dim));
        fill_uniform(w_yh.as_slice_mut().unwrap(), hidden_dim, rng);
        Self {
            encoder,
            decoder,
            w_yh,
            b_h: Array1::zeros(input_dim),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.encoder.input_dim()
    }

    pub fn hidden_dim(&self) -> usize {
        self.encoder.hidden_dim()
    }

    pub fn validate(&self) -> Result<()> {
        self.encoder.validate()?;
        self.decoder.validate()?;
        let (d, h) = (self.input_dim(), self.hidden_dim());
        check_shape("decoder input matrix", self.decoder.w_ix.dim(), (h, d))?;
        check_shape("w_yh", self.w_yh.dim(), (d, h))?;
        crate::error::check_dim("b_h", d, self.b_h.len())?;
        let finite = self
            .tensors()
            .iter()
            .all(|t| t.data.iter().all(|v| v.is_finite()));
        if !finite {
            return Err(Error::InvalidConfig("non-finite parameter entry".into()));
        }
        Ok(())
    }

    /// Every tensor with a stable name, in a fixed order shared with
    /// [`AutoEncoderParams::tensors_mut`].
    pub fn tensors(&self) -> Vec<TensorRef<'_>> {
        let mut out = Vec::with_capacity(26);
        for (prefix, cell) in [("encoder", &self.encoder), ("decoder", &self.decoder)] {
            let shapes = cell_shapes(cell);
            for ((name, data), shape) in cell.tensors().into_iter().zip(shapes) {
                out.push(TensorRef {
                    name: format!("{prefix}.{name}"),
                    shape,
                    data,
                });
            }
        }
        out.push(TensorRef {
            name: "w_yh".into(),
            shape: self.w_yh.dim(),
            data: self.w_yh.as_slice().unwrap(),
        });
        out.push(TensorRef {
            name: "b_h".into(),
            shape: (self.b_h.len(), 1),
            data: self.b_h.as_slice().unwrap(),
        });
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::with_capacity(26);
        out.extend(self.encoder.tensors_mut());
        out.extend(self.decoder.tensors_mut());
        out.push(self.w_yh.as_slice_mut().unwrap());
        out.push(self.b_h.as_slice_mut().unwrap());
        out
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.data.len()).sum()
    }

    pub(crate) fn zeros_like(&self) -> Self {
        Self::zeros(self.input_dim(), self.hidden_dim())
    }
}

fn cell_shapes(cell: &LstmParams) -> [(usize, usize); 12] {
    let (h, d) = (cell.hidden_dim(), cell.input_dim());
    [
        (h, d),
        (h, d),
        (h, d),
        (h, d),
        (h, h),
        (h, h),
        (h, h),
        (h, h),
        (h, 1),
        (h, 1),
        (h, 1),
        (h, 1),
    ]
}

fn check_shape(what: &'static str, found: (usize, usize), expected: (usize, usize)) -> Result<()> {
    crate::error::check_dim(what, expected.0, found.0)?;
    crate::error::check_dim(what, expected.1, found.1)
}

fn fill_uniform<R: Rng + ?Sized>(data: &mut [f64], fan_in: usize, rng: &mut R) {
    let s = 1.0 / (fan_in.max(1) as f64).sqrt();
    let dist = Uniform::new_inclusive(-s, s).expect("finite bounds");
    for v in data {
        *v = rng.sample(dist);
    }
}

/// Target activation, penalty weight and clamp floor of the KL sparsity term.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SparsityConfig {
    pub rho: f64,
    pub beta: f64,
    pub eps: f64,
}

impl Default for SparsityConfig {
    fn default() -> Self {
        Self {
            rho: 0.05,
            beta: 0.1,
            eps: 1e-6,
        }
    }
}

impl SparsityConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "rho must lie in (0,1), got {}",
                self.rho
            )));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "beta must be >= 0, got {}",
                self.beta
            )));
        }
        if !(self.eps > 0.0 && self.eps < self.rho && self.eps < 0.5) {
            return Err(Error::InvalidConfig(format!(
                "eps must lie in (0, min(rho, 0.5)), got {}",
                self.eps
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn random_init_respects_fan_in_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = AutoEncoderParams::random(9, 4, &mut rng);
        p.validate().unwrap();
        assert!(p.encoder.w_ix.iter().all(|v| v.abs() <= 1.0 / 3.0));
        assert!(p.encoder.phi_fh.iter().all(|v| v.abs() <= 0.5));
        assert!(p.w_yh.iter().all(|v| v.abs() <= 0.5));
        assert!(p.b_h.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn tensor_order_is_stable() {
        let mut p = AutoEncoderParams::zeros(3, 2);
        let names: Vec<String> = p.tensors().into_iter().map(|t| t.name).collect();
        assert_eq!(names.len(), 26);
        assert_eq!(names[0], "encoder.w_ix");
        assert_eq!(names[25], "b_h");
        let lens: Vec<usize> = p.tensors().iter().map(|t| t.data.len()).collect();
        let lens_mut: Vec<usize> = p.tensors_mut().iter().map(|t| t.len()).collect();
        assert_eq!(lens, lens_mut);
        assert_eq!(p.num_params(), 2 * (4 * 6 + 4 * 4 + 4 * 2) + 6 + 3);
    }

    #[test]
    fn sparsity_config_rejects_bad_values() {
        assert!(SparsityConfig::default().validate().is_ok());
        for cfg in [
            SparsityConfig {
                rho: 0.0,
                ..Default::default()
            },
            SparsityConfig {
                rho: 1.0,
                ..Default::default()
            },
            SparsityConfig {
                beta: -1.0,
                ..Default::default()
            },
            SparsityConfig {
                eps: 0.06,
                ..Default::default()
            },
        ] {
            assert!(cfg.validate().is_err(), "{cfg:?}");
        }
    }
}
