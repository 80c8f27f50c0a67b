//! Thin safe wrappers over `matrixmultiply` for row-major operands.

/// Row-major matrix view: `rows × cols` with arbitrary strides.
#[derive(Clone, Copy)]
pub(crate) struct View<'a, T> {
    pub data: &'a [T],
    pub rows: usize,
    pub cols: usize,
    pub row_stride: isize,
    pub col_stride: isize,
}

impl<'a, T> View<'a, T> {
    pub fn new(data: &'a [T], rows: usize, cols: usize) -> Self {
        Self {
            data,
            rows,
            cols,
            row_stride: cols as isize,
            col_stride: 1,
        }
    }

    /// The transpose of a row-major `rows × cols` buffer, as a `cols × rows` view.
    pub fn transposed(data: &'a [T], rows: usize, cols: usize) -> Self {
        Self {
            data,
            rows: cols,
            cols: rows,
            row_stride: 1,
            col_stride: cols as isize,
        }
    }

    fn check(&self) {
        if self.rows > 0 && self.cols > 0 {
            let last = (self.rows - 1) as isize * self.row_stride + (self.cols - 1) as isize * self.col_stride;
            assert!(
                last >= 0 && (last as usize) < self.data.len(),
                "gemm view out of bounds"
            );
        }
    }
}

macro_rules! gemm_fn {
    ($name:ident, $t:ty, $kernel:path) => {
        /// `c = alpha · a·b + beta · c`, with `c` a dense row-major `a.rows × b.cols` buffer.
        pub(crate) fn $name(alpha: $t, a: View<'_, $t>, b: View<'_, $t>, beta: $t, c: &mut [$t]) {
            assert_eq!(a.cols, b.rows, "gemm inner dimensions");
            assert_eq!(c.len(), a.rows * b.cols, "gemm output size");
            a.check();
            b.check();
            if a.rows == 0 || b.cols == 0 {
                return;
            }
            // SAFETY: every index the kernel touches lies inside the slices
            // (checked above), and `c` is exclusively borrowed.
            unsafe {
                $kernel(
                    a.rows,
                    a.cols,
                    b.cols,
                    alpha,
                    a.data.as_ptr(),
                    a.row_stride,
                    a.col_stride,
                    b.data.as_ptr(),
                    b.row_stride,
                    b.col_stride,
                    beta,
                    c.as_mut_ptr(),
                    b.cols as isize,
                    1,
                );
            }
        }
    };
}

gemm_fn!(sgemm, f32, matrixmultiply::sgemm);
gemm_fn!(dgemm, f64, matrixmultiply::dgemm);

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
        let mut c = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                for p in 0..k {
                    c[i * n + j] += a[i * k + p] * b[p * n + j];
                }
            }
        }
        c
    }

    #[test]
    fn matches_naive_product_with_transposes() {
        let (m, k, n) = (5, 7, 3);
        let a: Vec<f64> = (0..m * k).map(|i| (i as f64 * 0.37).sin()).collect();
        let b: Vec<f64> = (0..k * n).map(|i| (i as f64 * 0.11).cos()).collect();
        let expected = naive(&a, &b, m, k, n);

        let mut c = vec![0.0; m * n];
        dgemm(1.0, View::new(&a, m, k), View::new(&b, k, n), 0.0, &mut c);
        for (x, y) in c.iter().zip(&expected) {
            assert!((x - y).abs() < 1e-12);
        }

        // bᵀ stored as n × k, viewed back as k × n.
        let bt: Vec<f64> = (0..n * k).map(|idx| b[(idx % k) * n + idx / k]).collect();
        let mut c2 = vec![1.0; m * n];
        dgemm(1.0, View::new(&a, m, k), View::transposed(&bt, n, k), 1.0, &mut c2);
        for (x, y) in c2.iter().zip(&expected) {
            assert!((x - (y + 1.0)).abs() < 1e-12);
        }
    }
}
