//! Dense matmul entry point shared by every op that multiplies matrices.
//!
//! Work is split over fixed-size row blocks of the output, so results are
//! bit-identical no matter how many worker threads are available: each
//! output row is produced by exactly one `matrixmultiply::dgemm` call with
//! a sequential inner reduction.

use rayon::prelude::*;

/// Minimum flop count before spawning parallel row blocks.
const PAR_THRESHOLD: usize = 1 << 22;

/// `C = alpha * op(A) op(B) + beta * C` where `op` optionally transposes.
/// `a` is (m, k) row-major, or (k, m) row-major when `a_trans` (likewise for
/// `b`); `c` is (m, n) row-major.
#[allow(clippy::too_many_arguments)]
pub fn dgemm(
    m: usize,
    k: usize,
    n: usize,
    alpha: f64,
    a: &[f64],
    a_trans: bool,
    b: &[f64],
    b_trans: bool,
    beta: f64,
    c: &mut [f64],
) {
    assert_eq!(a.len(), m * k, "A size");
    assert_eq!(b.len(), k * n, "B size");
    assert_eq!(c.len(), m * n, "C size");
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        for v in c.iter_mut() {
            *v *= beta;
        }
        return;
    }
    let (rsa, csa) = if a_trans {
        (1isize, m as isize)
    } else {
        (k as isize, 1isize)
    };
    let (rsb, csb) = if b_trans {
        (1isize, k as isize)
    } else {
        (n as isize, 1isize)
    };

    let flops = 2 * m * k * n;
    if flops < PAR_THRESHOLD || m < 32 {
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
        return;
    }

    // Fixed block size: a function of the problem shape only, never of the
    // thread count, so the partition (and hence the result) is stable.
    let target_rows = (PAR_THRESHOLD / (2 * k * n)).max(16);
    let block = target_rows.min(m).max(1);
    let a_ptr = SendPtr(a.as_ptr());
    c.par_chunks_mut(block * n)
        .enumerate()
        .for_each(move |(idx, c_chunk)| {
            // Rebind the wrapper so the closure captures it whole rather
            // than capturing the raw pointer field.
            let a_ptr: SendPtr = a_ptr;
            let row0 = idx * block;
            let rows = c_chunk.len() / n;
            let a_off = if a_trans {
                row0 as isize // column offset in the (k, m) layout
            } else {
                (row0 * k) as isize
            };
            unsafe {
                matrixmultiply::dgemm(
                    rows,
                    k,
                    n,
                    alpha,
                    a_ptr.0.offset(a_off),
                    rsa,
                    csa,
                    b.as_ptr(),
                    rsb,
                    csb,
                    beta,
                    c_chunk.as_mut_ptr(),
                    n as isize,
                    1,
                );
            }
        });
}

#[derive(Clone, Copy)]
struct SendPtr(*const f64);
unsafe impl Send for SendPtr {}
unsafe impl Sync for SendPtr {}

#[cfg(test)]
mod tests {
    use super::*;
    use numkit::RandomStream;

    fn reference(
        m: usize,
        k: usize,
        n: usize,
        a: &[f64],
        a_trans: bool,
        b: &[f64],
        b_trans: bool,
    ) -> Vec<f64> {
        let at = |i: usize, p: usize| if a_trans { a[p * m + i] } else { a[i * k + p] };
        let bt = |p: usize, j: usize| if b_trans { b[j * k + p] } else { b[p * n + j] };
        let mut c = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                let mut s = 0.0;
                for p in 0..k {
                    s += at(i, p) * bt(p, j);
                }
                c[i * n + j] = s;
            }
        }
        c
    }

    #[test]
    fn matches_reference_all_layouts() {
        let mut stream = RandomStream::new(11);
        for &(m, k, n) in &[(3usize, 4usize, 5usize), (64, 32, 17), (128, 64, 128)] {
            let a: Vec<f64> = (0..m * k).map(|_| stream.next_gauss()).collect();
            let b: Vec<f64> = (0..k * n).map(|_| stream.next_gauss()).collect();
            for &(ta, tb) in &[(false, false), (true, false), (false, true), (true, true)] {
                // Stored layouts swap when transposed.
                let a_stored = if ta {
                    // build (k, m) storage whose transpose equals the (m, k) a
                    let mut s = vec![0.0; m * k];
                    for i in 0..m {
                        for p in 0..k {
                            s[p * m + i] = a[i * k + p];
                        }
                    }
                    s
                } else {
                    a.clone()
                };
                let b_stored = if tb {
                    let mut s = vec![0.0; k * n];
                    for p in 0..k {
                        for j in 0..n {
                            s[j * k + p] = b[p * n + j];
                        }
                    }
                    s
                } else {
                    b.clone()
                };
                let mut c = vec![0.0; m * n];
                dgemm(m, k, n, 1.0, &a_stored, ta, &b_stored, tb, 0.0, &mut c);
                let expected = reference(m, k, n, &a_stored, ta, &b_stored, tb);
                let max_diff = c
                    .iter()
                    .zip(&expected)
                    .fold(0.0f64, |acc, (x, y)| acc.max((x - y).abs()));
                assert!(max_diff < 1e-10, "layout ({ta},{tb}) diff {max_diff}");
            }
        }
    }

    #[test]
    fn large_parallel_path_matches_serial() {
        let mut stream = RandomStream::new(12);
        let (m, k, n) = (512, 128, 96);
        let a: Vec<f64> = (0..m * k).map(|_| stream.next_gauss()).collect();
        let b: Vec<f64> = (0..k * n).map(|_| stream.next_gauss()).collect();
        let mut c = vec![0.0; m * n];
        dgemm(m, k, n, 1.0, &a, false, &b, false, 0.0, &mut c);
        let expected = reference(m, k, n, &a, false, &b, false);
        let max_diff = c
            .iter()
            .zip(&expected)
            .fold(0.0f64, |acc, (x, y)| acc.max((x - y).abs()));
        assert!(max_diff < 1e-9);
    }
}
