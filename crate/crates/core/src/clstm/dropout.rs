use rand::Rng;

use super::{Mode, NetError, Tensor};

/// Inverted-dropout multipliers: 0 with probability `rate`, else `1 / (1 - rate)`.
pub(crate) fn dropout_mask<R: Rng>(len: usize, rate: f64, rng: &mut R) -> Vec<f64> {
    if rate == 0.0 {
        return vec![1.0; len];
    }
    let keep = 1.0 / (1.0 - rate);
    (0..len).map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep }).collect()
}

pub fn dropout<R: Rng>(x: &Tensor, rate: f64, rng: &mut R, mode: Mode) -> Result<Tensor, NetError> {
    if !(0.0..1.0).contains(&rate) {
        return Err(NetError::InvalidConfig(format!("dropout rate {rate} outside [0, 1)")));
    }
    match mode {
        Mode::Infer => Ok(x.clone()),
        Mode::Train => {
            let mask = dropout_mask(x.len(), rate, rng);
            Tensor::from_vec(x.shape(), x.data().iter().zip(mask).map(|(v, m)| v * m).collect())
        }
    }
}
