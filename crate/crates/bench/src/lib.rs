//! Deterministic inputs shared by the benchmarks.

use ctrlfill_core::{Series, Vector};

/// Long AR(2)-like scalar series with a gap of `gap_len` every `stride` points.
pub fn gappy_scalar(len: usize, stride: usize, gap_len: usize) -> Series {
    let mut x = vec![1.0, 0.5];
    while x.len() < len {
        let n = x.len();
        // Deterministic pseudo-noise keeps the fit well conditioned.
        let e = ((n as f64) * 12.9898).sin() * 0.5;
        x.push(0.6 * x[n - 1] - 0.2 * x[n - 2] + 1.0 + e);
    }
    let values: Vec<Option<f64>> = x
        .into_iter()
        .enumerate()
        .map(|(i, v)| (i < stride || i % stride >= gap_len || i + 1 == len).then_some(v))
        .collect();
    Series::scalar(&values).expect("valid series")
}

/// Two-column companion of [`gappy_scalar`] for VAR(1) runs.
pub fn gappy_pair(len: usize, stride: usize, gap_len: usize) -> Series {
    let mut cur = Vector::new(vec![0.0, 1.0]);
    let mut values = Vec::with_capacity(len);
    for i in 0..len {
        let e = ((i as f64) * 78.233).sin() * 0.5;
        cur = Vector::new(vec![0.5 * cur[0] - 0.1 * cur[1] + 1.0 + e, 0.2 * cur[0] + 0.3 * cur[1] - e]);
        let observed = i < stride || i % stride >= gap_len || i + 1 == len;
        values.push(observed.then(|| cur.clone()));
    }
    Series::with_columns(vec!["a".into(), "b".into()], values).expect("valid series")
}
