use serde::{Deserialize, Serialize};

/// Learning-rate shape after the linear warmup.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Schedule {
    /// `lr_peak · min(step / warmup, sqrt(warmup / step))`
    #[default]
    InverseSqrt,
    /// Linear warmup, then flat at `lr_peak`.
    Constant,
}

impl Schedule {
    pub fn lr(self, step: usize, warmup: usize, lr_peak: f64) -> f64 {
        match self {
            Schedule::InverseSqrt => lr_at(step, warmup, lr_peak),
            Schedule::Constant => {
                if warmup == 0 {
                    lr_peak
                } else {
                    lr_peak * (step as f64 / warmup as f64).min(1.0)
                }
            }
        }
    }
}

/// Warmup followed by inverse-square-root decay. `step` counts from 1;
/// step 0 is treated as step 1.
pub fn lr_at(step: usize, warmup: usize, lr_peak: f64) -> f64 {
    let step = step.max(1) as f64;
    if warmup == 0 {
        return lr_peak / step.sqrt();
    }
    let warmup = warmup as f64;
    lr_peak * (step / warmup).min((warmup / step).sqrt())
}
