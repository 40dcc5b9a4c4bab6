use super::rng::Rng;
use crate::error::{Error, Result};

/// Per-component multipliers of one inverted-dropout draw: 0 for dropped
/// components, `1/(1-rate)` for survivors.
#[derive(Clone, Debug, PartialEq)]
pub struct DropoutMask(Vec<f64>);

impl DropoutMask {
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.0).map(|(a, m)| a * m).collect()
    }

    pub fn backward(&self, dy: &[f64]) -> Vec<f64> {
        self.apply(dy)
    }

    pub fn factors(&self) -> &[f64] {
        &self.0
    }
}

pub fn check_rate(rate: f64) -> Result<()> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::Config(format!("dropout rate {rate} not in [0, 1)")));
    }
    Ok(())
}

/// Inverted dropout. Identity (and no mask) when not training or `rate == 0`.
pub fn apply_dropout(
    x: &[f64],
    rate: f64,
    rng: &mut Rng,
    training: bool,
) -> Result<(Vec<f64>, Option<DropoutMask>)> {
    check_rate(rate)?;
    if !training || rate == 0.0 {
        return Ok((x.to_vec(), None));
    }
    let keep = 1.0 / (1.0 - rate);
    let mask = DropoutMask(
        (0..x.len())
            .map(|_| if rng.bernoulli(rate) { 0.0 } else { keep })
            .collect(),
    );
    Ok((mask.apply(x), Some(mask)))
}
