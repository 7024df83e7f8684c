//! State-space model kernels: discretization, sequential and tree scans,
//! selection, and the three SSM variants.

pub mod recurrence;
pub mod scan;
mod variants;

pub use recurrence::{Decay, RecurrenceInputs, RecurrenceOutput, ScanMode};
pub use scan::{combine, inject_scan_fault, parallel_scan, sequential_scan, ScanElement};
pub use variants::{
    diagonal_ssm_forward, discretize, mamba2_ssm_forward, mamba_ssm_forward, selection_forward,
    DiagonalSsm, ScalarSsm, Selection, SelectiveSsm, SsmInputGrads, SsmParams, SsmTrace,
    SsmVariant,
};

/// Single decoding step for any variant; returns `y_l` and updates `state`.
pub fn ssm_step<T: crate::Scalar>(
    params: &SsmParams<T>,
    x_l: &[T],
    block_input: &[T],
    state: &mut [T],
) -> crate::Result<Vec<T>> {
    crate::error::check_len("ssm_step input", params.channels(), x_l.len())?;
    crate::error::check_len("ssm_step state", params.state_len(), state.len())?;
    Ok(params.step(x_l, block_input, state))
}

#[cfg(test)]
mod tests;
