//! Federated averaging of vehicle agent parameters at frame boundaries.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FedConfig {
    #[serde(rename = "federated")]
    pub enabled: bool,
    /// Frames between averaging rounds.
    #[serde(rename = "fed_period_frames")]
    pub period_frames: usize,
}

impl Default for FedConfig {
    fn default() -> Self {
        Self { enabled: false, period_frames: 1 }
    }
}

impl FedConfig {
    pub fn validate(&self) -> Result<()> {
        if self.period_frames == 0 {
            return Err(Error::Config("federation period must be at least one frame".into()));
        }
        Ok(())
    }
}

/// Element-wise mean. Each element is summed in `f64` in sorted order, so
/// the result does not depend on participant order.
pub fn aggregate<T: Scalar>(models: &[&[T]]) -> Result<Vec<T>> {
    let first = models.first().ok_or_else(|| Error::Dimension("no models to aggregate".into()))?;
    let len = first.len();
    if let Some(bad) = models.iter().find(|m| m.len() != len) {
        return Err(Error::Dimension(format!("model of {} parameters among models of {len}", bad.len())));
    }
    let n = models.len() as f64;
    let mut column = vec![0.0f64; models.len()];
    Ok((0..len)
        .map(|i| {
            for (c, m) in column.iter_mut().zip(models) {
                *c = m[i].to_f64_lossy();
            }
            column.sort_by(f64::total_cmp);
            T::lit(column.iter().sum::<f64>() / n)
        })
        .collect())
}

/// Replaces every participant's parameters with `global`.
pub fn broadcast<T: Scalar>(global: &[T], participants: &mut [&mut [T]]) -> Result<()> {
    for p in participants.iter_mut() {
        if p.len() != global.len() {
            return Err(Error::Dimension("participant shape differs from the global model".into()));
        }
        p.copy_from_slice(global);
    }
    Ok(())
}

/// Mean L2 distance of the models to their element-wise mean.
pub fn spread<T: Scalar>(models: &[&[T]]) -> Result<f64> {
    if models.len() < 2 {
        return Ok(0.0);
    }
    let mean = aggregate(models)?;
    let total: f64 = models.iter().map(|m| m.iter().zip(&mean).map(|(a, b)| (a.to_f64_lossy() - b.to_f64_lossy()).powi(2)).sum::<f64>().sqrt()).sum();
    Ok(total / models.len() as f64)
}

/// One row of the federation round log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub frame: usize,
    pub participants: usize,
    pub spread_before: f64,
    pub spread_after: f64,
}
