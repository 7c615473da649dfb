//! Dense numerical layer: the handful of operations the neural model needs,
//! each with an exact backward pass, plus Adam and a gradient checker.

pub mod adam;
pub mod gradcheck;
pub mod lstm;
pub mod ops;
mod tensor;

pub use adam::{adam_update, AdamState};
pub use gradcheck::{grad_check, GradCheckReport};
pub use lstm::{lstm_step, LstmParams, LstmState};
pub use tensor::Tensor;

/// Seedable, platform-independent generator used for every random draw.
pub type Rng = rand_chacha::ChaCha8Rng;

/// Uniform initialization range for weight matrices.
pub const INIT_RANGE: f64 = 0.05;

/// Fills a tensor with draws from `U(-range, range)`.
pub fn init_uniform(t: &mut Tensor, range: f64, rng: &mut Rng) {
    use rand::Rng as _;
    for v in t.data_mut() {
        *v = rng.gen_range(-range..range);
    }
}
