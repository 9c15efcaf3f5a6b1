//! Finite-difference comparison against [`backward`].

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{backward, total_loss, AutoEncoderParams, Gradients, SparsityConfig};
use crate::error::Result;
use crate::Sequence;

/// Denominator floor for the relative error, so entries whose true
/// gradient is numerically zero are judged on absolute error.
pub const REL_ERR_FLOOR: f64 = 1e-6;

/// Step of the two-point stencil.
pub const TWO_POINT_STEP: f64 = 1e-5;
/// Step of the four-point stencil.
pub const FOUR_POINT_STEP: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stencil {
    /// `(f(+h) - f(-h)) / 2h`
    TwoPoint,
    /// `(8 (f(+h) - f(-h)) - (f(+2h) - f(-2h))) / 12h`; its truncation error
    /// allows a larger step, which keeps cancellation error small on large
    /// instances.
    FourPoint,
}

impl Stencil {
    pub fn default_step(self) -> f64 {
        match self {
            Stencil::TwoPoint => TWO_POINT_STEP,
            Stencil::FourPoint => FOUR_POINT_STEP,
        }
    }
}

/// Worst mismatch found by [`compare`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    pub max_rel_err: f64,
    pub worst_tensor: String,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub entries: usize,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERR_FLOOR)
}

/// Gradient of [`total_loss`] by central differences, one entry at a time.
pub fn numeric_gradient(
    params: &AutoEncoderParams,
    batch: &[Sequence],
    cfg: &SparsityConfig,
    stencil: Stencil,
    step: f64,
) -> Result<Gradients> {
    let mut grads = Gradients::zeros_like(params);
    let mut probe = params.clone();
    let n_tensors = params.tensors().len();
    for ti in 0..n_tensors {
        let len = params.tensors()[ti].data.len();
        for j in 0..len {
            let orig = probe.tensors_mut()[ti][j];
            let mut at = |offset: f64| {
                probe.tensors_mut()[ti][j] = orig + offset;
                total_loss(&probe, batch, cfg)
            };
            let d1 = at(step)? - at(-step)?;
            let g = match stencil {
                Stencil::TwoPoint => d1 / (2.0 * step),
                Stencil::FourPoint => {
                    let d2 = at(2.0 * step)? - at(-2.0 * step)?;
                    (8.0 * d1 - d2) / (12.0 * step)
                }
            };
            probe.tensors_mut()[ti][j] = orig;
            grads.0.tensors_mut()[ti][j] = g;
        }
    }
    Ok(grads)
}

/// Compares two gradient sets entry by entry.
pub fn compare(analytic: &Gradients, numeric: &Gradients) -> GradCheck {
    let mut out = GradCheck {
        max_rel_err: 0.0,
        worst_tensor: String::new(),
        worst_index: 0,
        analytic: 0.0,
        numeric: 0.0,
        entries: 0,
    };
    for (a, n) in analytic.0.tensors().iter().zip(numeric.0.tensors()) {
        for (j, (&ga, &gn)) in a.data.iter().zip(n.data).enumerate() {
            out.entries += 1;
            let err = relative_error(ga, gn);
            if err > out.max_rel_err || out.worst_tensor.is_empty() {
                out.max_rel_err = err;
                out.worst_tensor = a.name.clone();
                out.worst_index = j;
                out.analytic = ga;
                out.numeric = gn;
            }
        }
    }
    out
}

/// A seeded random problem: parameters from the standard init, inputs
/// drawn from a unit normal.
pub fn random_instance(
    seed: u64,
    input_dim: usize,
    hidden_dim: usize,
    seq_len: usize,
    batch: usize,
) -> (AutoEncoderParams, Vec<Sequence>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = AutoEncoderParams::random(input_dim, hidden_dim, &mut rng);
    let data = (0..batch)
        .map(|_| {
            (0..seq_len)
                .map(|_| {
                    (0..input_dim)
                        .map(|_| rng.sample::<f64, _>(StandardNormal))
                        .collect()
                })
                .collect()
        })
        .collect();
    (params, data)
}

/// Runs [`backward`] and the finite-difference oracle on one instance.
pub fn check(
    params: &AutoEncoderParams,
    batch: &[Sequence],
    cfg: &SparsityConfig,
    stencil: Stencil,
) -> Result<GradCheck> {
    let analytic = backward(params, batch, cfg)?;
    let numeric = numeric_gradient(params, batch, cfg, stencil, stencil.default_step())?;
    Ok(compare(&analytic, &numeric))
}
