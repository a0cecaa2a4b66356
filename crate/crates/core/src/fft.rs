//! Unnormalised inverse DFTs over tensor grids, used to evaluate truncated
//! power series on tori `{|z_j| = r_j}`.

use std::cell::RefCell;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn inverse_plan(len: usize) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| p.borrow_mut().plan_fft_inverse(len))
}

/// In place `x_k ← Σ_m x_m e^{+2πi m k / N_j}` along every axis of a
/// row-major array with the given shape (last axis fastest).
pub fn inverse_dft_nd(data: &mut [Complex64], shape: &[usize]) {
    let total: usize = shape.iter().product();
    assert_eq!(data.len(), total);
    let mut scratch = Vec::new();
    let mut line = Vec::new();
    for (axis, &len) in shape.iter().enumerate() {
        if len <= 1 {
            continue;
        }
        let plan = inverse_plan(len);
        scratch.resize(plan.get_inplace_scratch_len(), Complex64::new(0.0, 0.0));
        let stride: usize = shape[axis + 1..].iter().product();
        if stride == 1 {
            for chunk in data.chunks_exact_mut(len) {
                plan.process_with_scratch(chunk, &mut scratch);
            }
            continue;
        }
        let block = stride * len;
        line.resize(len, Complex64::new(0.0, 0.0));
        for outer in (0..total).step_by(block) {
            for inner in 0..stride {
                let base = outer + inner;
                for (i, v) in line.iter_mut().enumerate() {
                    *v = data[base + i * stride];
                }
                plan.process_with_scratch(&mut line, &mut scratch);
                for (i, v) in line.iter().enumerate() {
                    data[base + i * stride] = *v;
                }
            }
        }
    }
}
