//! Tensor-product contractions on element-local 3D arrays.
//!
//! Arrays are stored with the first index fastest: `a[i + n0 * (j + n1 * k)]`.

use std::cell::Cell;

thread_local! {
    static FLOPS: Cell<u64> = const { Cell::new(0) };
}

/// Floating-point operations recorded on the current thread.
pub fn flop_count() -> u64 {
    FLOPS.with(|f| f.get())
}

pub fn reset_flop_count() {
    FLOPS.with(|f| f.set(0));
}

#[inline]
pub(crate) fn add_flops(n: u64) {
    FLOPS.with(|f| f.set(f.get() + n));
}

/// `out = M ×_axis input`, with `M` row-major `rows x dims[axis]`.
/// `out` has the extents of `input` with `dims[axis]` replaced by `rows`.
pub fn contract(m: &[f64], rows: usize, input: &[f64], dims: [usize; 3], axis: usize, out: &mut [f64]) {
    let [n0, n1, n2] = dims;
    let cols = dims[axis];
    assert_eq!(m.len(), rows * cols);
    assert_eq!(input.len(), n0 * n1 * n2);
    match axis {
        0 => {
            // out[a, j, k] = sum_i m[a, i] in[i, j, k]
            assert_eq!(out.len(), rows * n1 * n2);
            macro_rules! fixed {
                ($($c:literal)*) => {
                    match cols {
                        $($c => axis0::<$c>(m, rows, input, out),)*
                        _ => axis0_dyn(m, rows, cols, input, out),
                    }
                };
            }
            fixed!(2 3 4 5 6 7 8 9 10 11 12 13 14 15 16);
        }
        1 => {
            // out[i, b, k] = sum_j m[b, j] in[i, j, k]
            assert_eq!(out.len(), n0 * rows * n2);
            for k in 0..n2 {
                let src = &input[n0 * n1 * k..n0 * n1 * (k + 1)];
                let dst = &mut out[n0 * rows * k..n0 * rows * (k + 1)];
                axpy_rows(m, rows, cols, src, dst, n0);
            }
        }
        2 => {
            // out[i, j, c] = sum_k m[c, k] in[i, j, k]
            let plane = n0 * n1;
            assert_eq!(out.len(), plane * rows);
            axpy_rows(m, rows, cols, input, out, plane);
        }
        _ => unreachable!("axis must be 0, 1 or 2"),
    }
    let others = (n0 * n1 * n2 / cols) as u64;
    add_flops(2 * rows as u64 * cols as u64 * others);
}

fn axis0<const C: usize>(m: &[f64], rows: usize, input: &[f64], out: &mut [f64]) {
    for (src, dst) in input.chunks_exact(C).zip(out.chunks_exact_mut(rows)) {
        let src: &[f64; C] = src.try_into().unwrap();
        for (d, row) in dst.iter_mut().zip(m.chunks_exact(C)) {
            let row: &[f64; C] = row.try_into().unwrap();
            let mut acc = 0.0;
            for i in 0..C {
                acc += row[i] * src[i];
            }
            *d = acc;
        }
    }
}

fn axis0_dyn(m: &[f64], rows: usize, cols: usize, input: &[f64], out: &mut [f64]) {
    for (src, dst) in input.chunks_exact(cols).zip(out.chunks_exact_mut(rows)) {
        for (d, row) in dst.iter_mut().zip(m.chunks_exact(cols)) {
            *d = row.iter().zip(src).map(|(x, y)| x * y).sum();
        }
    }
}

// dst block b (length `len`) = sum_j m[b, j] src block j
fn axpy_rows(m: &[f64], rows: usize, cols: usize, src: &[f64], dst: &mut [f64], len: usize) {
    for (b, d) in dst.chunks_exact_mut(len).enumerate().take(rows) {
        let mrow = &m[b * cols..(b + 1) * cols];
        let (first, rest) = src[..cols * len].split_at(len);
        let c0 = mrow[0];
        for (x, y) in d.iter_mut().zip(first) {
            *x = c0 * y;
        }
        for (j, s) in rest.chunks_exact(len).enumerate() {
            let c = mrow[j + 1];
            for (x, y) in d.iter_mut().zip(s) {
                *x += c * y;
            }
        }
    }
}

/// Apply `m` (rows x n) along all three axes of an `n^3` array, giving `rows^3`.
pub fn contract_all(m: &[f64], rows: usize, n: usize, input: &[f64], work: &mut Work) -> Vec<f64> {
    let Work { a, b } = work;
    a.resize(rows * n * n, 0.0);
    contract(m, rows, input, [n, n, n], 0, a);
    b.resize(rows * rows * n, 0.0);
    contract(m, rows, a, [rows, n, n], 1, b);
    let mut out = vec![0.0; rows * rows * rows];
    contract(m, rows, b, [rows, rows, n], 2, &mut out);
    out
}

/// Scratch buffers reused across element kernels.
#[derive(Debug, Default)]
pub struct Work {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

/// Row-major transpose of an `r x c` matrix.
pub fn transpose(m: &[f64], r: usize, c: usize) -> Vec<f64> {
    let mut t = vec![0.0; r * c];
    for i in 0..r {
        for j in 0..c {
            t[j * r + i] = m[i * c + j];
        }
    }
    t
}
