//! Unnormalised complex FFTs over contiguous 1-D and row-major 2-D buffers.

use std::sync::{Arc, LazyLock, Mutex};

use rustfft::{Fft, FftPlanner};

use crate::{par, C64};

static PLANNER: LazyLock<Mutex<FftPlanner<f64>>> =
    LazyLock::new(|| Mutex::new(FftPlanner::new()));

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    /// `X_k = Σ x_j e^{-2πijk/n}`
    Forward,
    /// `x_j = Σ X_k e^{+2πijk/n}` (no 1/n factor)
    Inverse,
}

pub fn plan(n: usize, dir: Direction) -> Arc<dyn Fft<f64>> {
    let mut p = PLANNER.lock().unwrap_or_else(|e| e.into_inner());
    match dir {
        Direction::Forward => p.plan_fft_forward(n),
        Direction::Inverse => p.plan_fft_inverse(n),
    }
}

/// Transform each contiguous row of length `n` in `buf`.
pub fn rows(buf: &mut [C64], n: usize, dir: Direction) {
    assert!(n > 0 && buf.len().is_multiple_of(n), "buffer is not a whole number of rows");
    let fft = plan(n, dir);
    let rows = buf.len() / n;
    if rows == 1 {
        fft.process(buf);
        return;
    }
    // A few rows per task keeps scratch reuse high without starving workers.
    let per_task = (16384 / n).clamp(1, rows) * n;
    par::for_each_chunk_mut(buf, per_task, |_, chunk| fft.process(chunk));
}

/// 1-D transform of the whole buffer.
pub fn fft_1d(buf: &mut [C64], dir: Direction) {
    let n = buf.len();
    plan(n, dir).process(buf);
}

/// 2-D transform of a row-major `n0 × n1` buffer (axis 0 slowest).
pub fn fft_2d(buf: &mut [C64], n0: usize, n1: usize, dir: Direction) {
    assert_eq!(buf.len(), n0 * n1);
    rows(buf, n1, dir);
    let mut t = transpose(buf, n0, n1);
    rows(&mut t, n0, dir);
    let back = transpose(&t, n1, n0);
    buf.copy_from_slice(&back);
}

/// Transpose of a row-major `n0 × n1` matrix.
pub fn transpose(src: &[C64], n0: usize, n1: usize) -> Vec<C64> {
    let mut out = vec![C64::new(0.0, 0.0); n0 * n1];
    par::for_each_chunk_mut(&mut out, n0, |j, row| {
        for (i, v) in row.iter_mut().enumerate() {
            *v = src[i * n1 + j];
        }
    });
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(x: &[C64], sign: f64) -> Vec<C64> {
        let n = x.len();
        (0..n)
            .map(|k| {
                x.iter()
                    .enumerate()
                    .map(|(j, &v)| {
                        let a = sign * 2.0 * std::f64::consts::PI * (j * k) as f64 / n as f64;
                        v * C64::new(a.cos(), a.sin())
                    })
                    .sum()
            })
            .collect()
    }

    #[test]
    fn matches_naive_dft() {
        let x: Vec<C64> = (0..16)
            .map(|j| C64::new((j as f64 * 0.7).sin(), (j as f64 * 1.3).cos()))
            .collect();
        let mut y = x.clone();
        fft_1d(&mut y, Direction::Forward);
        let r = naive(&x, -1.0);
        for (a, b) in y.iter().zip(&r) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn two_d_is_separable() {
        let (n0, n1) = (8, 16);
        let x: Vec<C64> = (0..n0 * n1)
            .map(|j| C64::new((j as f64 * 0.31).sin(), (j as f64 * 0.17).cos()))
            .collect();
        let mut y = x.clone();
        fft_2d(&mut y, n0, n1, Direction::Forward);
        // rows then columns by the naive transform
        let mut r: Vec<C64> = x.chunks(n1).flat_map(|row| naive(row, -1.0)).collect();
        for j in 0..n1 {
            let col: Vec<C64> = (0..n0).map(|i| r[i * n1 + j]).collect();
            let c = naive(&col, -1.0);
            for i in 0..n0 {
                r[i * n1 + j] = c[i];
            }
        }
        for (a, b) in y.iter().zip(&r) {
            assert!((a - b).norm() < 1e-11);
        }
    }
}
