//! Row-major matrix product with a fixed per-element summation order.
//!
//! Each output element is computed as `((0 + a[0]b[0]) + a[1]b[1]) + ...`
//! over the reduction index in increasing order, with separate multiply and
//! add (never fused). The register tiling only decides which independent
//! outputs are computed together, so the result for a given row does not
//! depend on how many other rows are in the batch or on the SIMD width.

use super::Scalar;

const MR: usize = 6;
const NR: usize = 16;
/// Row panels processed per pass over the packed right-hand side.
const MC_PANELS: usize = 16;
/// Reduction steps per pass; later passes resume from the stored partial sums,
/// which keeps the summation order intact.
const KC: usize = 256;

/// `c[m×n] = a[m×k] · b[k×n]`, overwriting `c`.
pub fn matmul<T: Scalar>(a: &[T], b: &[T], c: &mut [T], m: usize, k: usize, n: usize) {
    assert_eq!(a.len(), m * k, "lhs length");
    assert_eq!(b.len(), k * n, "rhs length");
    assert_eq!(c.len(), m * n, "output length");

    #[cfg(target_arch = "x86_64")]
    {
        if std::arch::is_x86_feature_detected!("avx2") {
            // SAFETY: the CPU supports AVX2, checked just above.
            unsafe { matmul_avx2(a, b, c, m, k, n) };
            return;
        }
    }
    matmul_portable(a, b, c, m, k, n);
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
unsafe fn matmul_avx2<T: Scalar>(a: &[T], b: &[T], c: &mut [T], m: usize, k: usize, n: usize) {
    matmul_body(a, b, c, m, k, n)
}

fn matmul_portable<T: Scalar>(a: &[T], b: &[T], c: &mut [T], m: usize, k: usize, n: usize) {
    matmul_body(a, b, c, m, k, n)
}

#[inline(always)]
fn matmul_body<T: Scalar>(a: &[T], b: &[T], c: &mut [T], m: usize, k: usize, n: usize) {
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        c.fill(T::zero());
        return;
    }

    // b as column panels of NR, each k×NR contiguous, zero padded.
    let col_panels = n.div_ceil(NR);
    let mut bp = vec![T::zero(); col_panels * k * NR];
    for p in 0..col_panels {
        let j0 = p * NR;
        let w = NR.min(n - j0);
        for kk in 0..k {
            bp[(p * k + kk) * NR..][..w].copy_from_slice(&b[kk * n + j0..][..w]);
        }
    }

    // a as row panels of MR, each laid out k×MR.
    let row_panels = m.div_ceil(MR);
    let mut ap = vec![T::zero(); row_panels * k * MR];
    for rp in 0..row_panels {
        let rows = MR.min(m - rp * MR);
        let panel = &mut ap[rp * k * MR..(rp + 1) * k * MR];
        for r in 0..rows {
            let row = &a[(rp * MR + r) * k..][..k];
            for (kk, &v) in row.iter().enumerate() {
                panel[kk * MR + r] = v;
            }
        }
    }

    for k0 in (0..k).step_by(KC) {
        let kc = KC.min(k - k0);
        for rb in (0..row_panels).step_by(MC_PANELS) {
            for p in 0..col_panels {
                let bpanel = &bp[(p * k + k0) * NR..][..kc * NR];
                let cols = NR.min(n - p * NR);
                for rp in rb..(rb + MC_PANELS).min(row_panels) {
                    let apanel = &ap[(rp * k + k0) * MR..][..kc * MR];
                    let rows = MR.min(m - rp * MR);
                    let mut acc = [[T::zero(); NR]; MR];
                    if k0 > 0 {
                        for (r, acc_row) in acc.iter_mut().enumerate().take(rows) {
                            acc_row[..cols]
                                .copy_from_slice(&c[(rp * MR + r) * n + p * NR..][..cols]);
                        }
                    }
                    let acc = kernel(apanel, bpanel, acc);
                    for (r, acc_row) in acc.iter().enumerate().take(rows) {
                        c[(rp * MR + r) * n + p * NR..][..cols].copy_from_slice(&acc_row[..cols]);
                    }
                }
            }
        }
    }
}

#[inline(always)]
fn kernel<T: Scalar>(ap: &[T], bp: &[T], mut acc: [[T; NR]; MR]) -> [[T; NR]; MR] {
    for (a, b) in ap.chunks_exact(MR).zip(bp.chunks_exact(NR)) {
        for r in 0..MR {
            let av = a[r];
            for j in 0..NR {
                acc[r][j] += av * b[j];
            }
        }
    }
    acc
}

/// Transpose of a row-major `rows×cols` matrix.
pub fn transpose<T: Scalar>(src: &[T], rows: usize, cols: usize) -> Vec<T> {
    assert_eq!(src.len(), rows * cols);
    let mut out = vec![T::zero(); rows * cols];
    const B: usize = 32;
    for r0 in (0..rows).step_by(B) {
        for c0 in (0..cols).step_by(B) {
            for r in r0..(r0 + B).min(rows) {
                for c in c0..(c0 + B).min(cols) {
                    out[c * rows + r] = src[r * cols + c];
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn naive(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
        let mut c = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                let mut s = 0.0;
                for p in 0..k {
                    s += a[i * k + p] * b[p * n + j];
                }
                c[i * n + j] = s;
            }
        }
        c
    }

    #[test]
    fn matches_naive_bit_for_bit() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for &(m, k, n) in &[(1, 1, 1), (5, 3, 17), (13, 40, 33), (6, 16, 16), (31, 7, 2)] {
            let a: Vec<f64> = (0..m * k).map(|_| rng.random_range(-1.0..1.0)).collect();
            let b: Vec<f64> = (0..k * n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let mut c = vec![0.0; m * n];
            matmul(&a, &b, &mut c, m, k, n);
            assert_eq!(c, naive(&a, &b, m, k, n), "m={m} k={k} n={n}");
        }
    }

    #[test]
    fn row_results_independent_of_batch() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (m, k, n) = (37, 300, 50);
        let a: Vec<f32> = (0..m * k).map(|_| rng.random_range(-1.0..1.0)).collect();
        let b: Vec<f32> = (0..k * n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut full = vec![0.0; m * n];
        matmul(&a, &b, &mut full, m, k, n);
        for i in [0, 5, 36] {
            let mut one = vec![0.0; n];
            matmul(&a[i * k..(i + 1) * k], &b, &mut one, 1, k, n);
            assert_eq!(one, full[i * n..(i + 1) * n]);
        }
    }

    #[test]
    fn transpose_round_trip() {
        let src: Vec<f64> = (0..35 * 70).map(|i| i as f64).collect();
        let t = transpose(&src, 35, 70);
        assert_eq!(t[35], src[1]);
        assert_eq!(transpose(&t, 70, 35), src);
    }
}
