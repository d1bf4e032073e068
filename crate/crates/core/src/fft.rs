//! Linear convolution of real sequences via FFT.
//!
//! Plans are cached per thread; the two real inputs are packed into one
//! complex transform (even/odd spectrum split), so a convolution costs two
//! FFTs of the padded length instead of three.

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use std::cell::RefCell;
use std::collections::HashMap;
use std::sync::Arc;

thread_local! {
    static PLANS: RefCell<(FftPlanner<f64>, HashMap<(usize, bool), Arc<dyn Fft<f64>>>)> =
        RefCell::new((FftPlanner::new(), HashMap::new()));
}

fn plan(len: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    PLANS.with(|cell| {
        let (planner, cache) = &mut *cell.borrow_mut();
        cache
            .entry((len, inverse))
            .or_insert_with(|| {
                if inverse {
                    planner.plan_fft_inverse(len)
                } else {
                    planner.plan_fft_forward(len)
                }
            })
            .clone()
    })
}

/// Full linear convolution: output length `a.len() + b.len() - 1`.
pub(crate) fn convolve(a: &[f64], b: &[f64]) -> Vec<f64> {
    let out_len = a.len() + b.len() - 1;
    // Small cases: direct quadratic loop beats FFT setup.
    if a.len().min(b.len()) <= 32 || out_len <= 128 {
        let mut out = vec![0.0; out_len];
        for (i, &ai) in a.iter().enumerate() {
            for (j, &bj) in b.iter().enumerate() {
                out[i + j] += ai * bj;
            }
        }
        return out;
    }

    let n = out_len.next_power_of_two();
    // Pack a into the real parts, b into the imaginary parts.
    let mut buf = vec![Complex::new(0.0, 0.0); n];
    for (i, &v) in a.iter().enumerate() {
        buf[i].re = v;
    }
    for (i, &v) in b.iter().enumerate() {
        buf[i].im = v;
    }
    plan(n, false).process(&mut buf);

    // Spectra of the two real inputs follow from Hermitian symmetry:
    //   A[k] = (Z[k] + conj(Z[n-k])) / 2,  B[k] = (Z[k] - conj(Z[n-k])) / (2i)
    // and the product spectrum C = A * B.
    let mut spec = vec![Complex::new(0.0, 0.0); n];
    for k in 0..n {
        let km = if k == 0 { 0 } else { n - k };
        let zk = buf[k];
        let zm = buf[km].conj();
        let ak = (zk + zm) * 0.5;
        let bk = (zk - zm) * Complex::new(0.0, -0.5);
        spec[k] = ak * bk;
    }
    plan(n, true).process(&mut spec);

    let scale = 1.0 / n as f64;
    spec.truncate(out_len);
    spec.iter().map(|c| c.re * scale).collect()
}
