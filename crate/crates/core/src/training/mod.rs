//! Optimization: AdamW, the warmup schedule, gradient clipping, the
//! teacher-forced training loop and a finite-difference gradient checker.

mod gradcheck;
mod optim;
mod schedule;
mod trainer;

pub use gradcheck::{gradient_check, loss_and_grad, TensorCheck};
pub use optim::{clip_grad_norm, global_grad_norm, AdamW, AdamWConfig};
pub use schedule::{lr_at, Schedule};
pub use trainer::{
    evaluate, first_non_finite, RunOutput, StepMetrics, TrainConfig, TrainReport, Trainer,
    ValidMetrics,
};

#[cfg(test)]
mod tests;
