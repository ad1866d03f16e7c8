//! Row-major f64 GEMM used by the tensor ops.
//!
//! Large products go through `matrixmultiply`; small ones (attention-head
//! sized) use plain loops to skip the packing overhead.

/// Below this m*k*n volume a naive kernel beats the packed GEMM.
const SMALL_GEMM_VOLUME: usize = 32 * 32 * 32;

/// Whether an operand is used as stored or transposed.
#[derive(Clone, Copy, PartialEq, Eq)]
pub enum Layout {
    RowMajor,
    Transposed,
}

fn strides(layout: Layout, rows: usize, cols: usize) -> (isize, isize, usize, usize) {
    // Returns (row stride, col stride, logical rows, logical cols) of the
    // operand viewed through `layout`, where (rows, cols) is the stored shape.
    match layout {
        Layout::RowMajor => (cols as isize, 1, rows, cols),
        Layout::Transposed => (1, cols as isize, cols, rows),
    }
}

/// `c = alpha * op_a(a) . op_b(b) + beta * c` with row-major `c` of shape (m, n).
///
/// `a` is stored as (a_rows, a_cols) and `b` as (b_rows, b_cols); the
/// layouts select whether each is used directly or transposed. Shapes are
/// asserted, not error-returned: callers validate shapes at the op level.
#[allow(clippy::too_many_arguments)]
pub fn gemm(
    alpha: f64,
    a: &[f64],
    a_rows: usize,
    a_cols: usize,
    la: Layout,
    b: &[f64],
    b_rows: usize,
    b_cols: usize,
    lb: Layout,
    beta: f64,
    c: &mut [f64],
) {
    let (rsa, csa, m, k) = strides(la, a_rows, a_cols);
    let (rsb, csb, k2, n) = strides(lb, b_rows, b_cols);
    assert_eq!(k, k2, "gemm inner dimensions");
    assert_eq!(a.len(), a_rows * a_cols);
    assert_eq!(b.len(), b_rows * b_cols);
    assert_eq!(c.len(), m * n);

    if m * k * n <= SMALL_GEMM_VOLUME {
        small_gemm(alpha, a, rsa, csa, b, rsb, csb, beta, c, m, k, n);
        return;
    }

    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

#[allow(clippy::too_many_arguments)]
fn small_gemm(
    alpha: f64,
    a: &[f64],
    rsa: isize,
    csa: isize,
    b: &[f64],
    rsb: isize,
    csb: isize,
    beta: f64,
    c: &mut [f64],
    m: usize,
    k: usize,
    n: usize,
) {
    let at = |i: usize, l: usize| a[(i as isize * rsa + l as isize * csa) as usize];
    let bt = |l: usize, j: usize| b[(l as isize * rsb + j as isize * csb) as usize];
    for i in 0..m {
        let row = &mut c[i * n..(i + 1) * n];
        if beta == 0.0 {
            row.fill(0.0);
        } else if beta != 1.0 {
            for v in row.iter_mut() {
                *v *= beta;
            }
        }
        for l in 0..k {
            let av = alpha * at(i, l);
            if csb == 1 {
                let brow = &b[(l as isize * rsb) as usize..(l as isize * rsb) as usize + n];
                for (cv, bv) in row.iter_mut().zip(brow) {
                    *cv += av * bv;
                }
            } else {
                for (j, cv) in row.iter_mut().enumerate() {
                    *cv += av * bt(l, j);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
        let mut c = vec![0.0; m * n];
        for i in 0..m {
            for l in 0..k {
                for j in 0..n {
                    c[i * n + j] += a[i * k + l] * b[l * n + j];
                }
            }
        }
        c
    }

    #[test]
    fn matches_naive_product() {
        let (m, k, n) = (5, 7, 4);
        let a: Vec<f64> = (0..m * k).map(|i| (i as f64) * 0.3 - 2.0).collect();
        let b: Vec<f64> = (0..k * n).map(|i| (i as f64) * -0.2 + 1.0).collect();
        let mut c = vec![0.0; m * n];
        gemm(1.0, &a, m, k, Layout::RowMajor, &b, k, n, Layout::RowMajor, 0.0, &mut c);
        let want = naive(&a, &b, m, k, n);
        for (x, y) in c.iter().zip(&want) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn transposed_operands() {
        let (m, k, n) = (3, 4, 2);
        let a: Vec<f64> = (0..m * k).map(|i| i as f64).collect();
        let b: Vec<f64> = (0..k * n).map(|i| (i as f64).sin()).collect();
        // a stored transposed as (k, m), b stored transposed as (n, k)
        let mut a_t = vec![0.0; m * k];
        for i in 0..m {
            for l in 0..k {
                a_t[l * m + i] = a[i * k + l];
            }
        }
        let mut b_t = vec![0.0; k * n];
        for l in 0..k {
            for j in 0..n {
                b_t[j * k + l] = b[l * n + j];
            }
        }
        let mut c = vec![0.0; m * n];
        gemm(
            1.0,
            &a_t,
            k,
            m,
            Layout::Transposed,
            &b_t,
            n,
            k,
            Layout::Transposed,
            0.0,
            &mut c,
        );
        let want = naive(&a, &b, m, k, n);
        for (x, y) in c.iter().zip(&want) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn beta_accumulates() {
        let a = vec![1.0, 2.0, 3.0, 4.0];
        let b = vec![1.0, 0.0, 0.0, 1.0];
        let mut c = vec![10.0, 10.0, 10.0, 10.0];
        gemm(1.0, &a, 2, 2, Layout::RowMajor, &b, 2, 2, Layout::RowMajor, 1.0, &mut c);
        assert_eq!(c, vec![11.0, 12.0, 13.0, 14.0]);
    }
}
