//! Accumulating matrix products (`c += a · b`) over row-major buffers.
//!
//! The three layout variants cover everything convolution and affine layers
//! need without materializing transposes. Large products are split over rows
//! of the output; every output element is still produced by exactly one
//! task with a fixed summation order, so results are bit-identical
//! regardless of thread count.

use crate::scalar::Scalar;
use rayon::prelude::*;

/// Below this many multiply-adds the rayon dispatch costs more than it saves.
const PAR_THRESHOLD: usize = 1 << 16;

struct Strides {
    rsa: isize,
    csa: isize,
    rsb: isize,
    csb: isize,
}

/// `c[m,n] += a[m,k] · b[k,n]`, all row-major.
pub fn gemm_nn<T: Scalar>(m: usize, k: usize, n: usize, a: &[T], b: &[T], c: &mut [T]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    let s = Strides {
        rsa: k as isize,
        csa: 1,
        rsb: n as isize,
        csb: 1,
    };
    dispatch(m, k, n, a, b, c, s);
}

/// `c[m,n] += a[m,k] · bt[n,k]ᵀ`, all buffers row-major.
pub fn gemm_nt<T: Scalar>(m: usize, k: usize, n: usize, a: &[T], bt: &[T], c: &mut [T]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(bt.len(), n * k);
    debug_assert_eq!(c.len(), m * n);
    let s = Strides {
        rsa: k as isize,
        csa: 1,
        rsb: 1,
        csb: k as isize,
    };
    dispatch(m, k, n, a, bt, c, s);
}

/// `c[m,n] += at[k,m]ᵀ · b[k,n]`, all buffers row-major.
pub fn gemm_tn<T: Scalar>(m: usize, k: usize, n: usize, at: &[T], b: &[T], c: &mut [T]) {
    debug_assert_eq!(at.len(), k * m);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    let s = Strides {
        rsa: 1,
        csa: m as isize,
        rsb: n as isize,
        csb: 1,
    };
    dispatch(m, k, n, at, b, c, s);
}

fn dispatch<T: Scalar>(m: usize, k: usize, n: usize, a: &[T], b: &[T], c: &mut [T], s: Strides) {
    if m == 0 || n == 0 || k == 0 {
        return;
    }
    let threads = rayon::current_num_threads();
    if m * k * n < PAR_THRESHOLD || threads < 2 || m < 2 {
        unsafe {
            T::gemm_acc(
                m,
                k,
                n,
                a.as_ptr(),
                s.rsa,
                s.csa,
                b.as_ptr(),
                s.rsb,
                s.csb,
                c.as_mut_ptr(),
                n as isize,
                1,
            );
        }
        return;
    }

    let chunks = (2 * threads).min(m);
    let rows_per = m.div_ceil(chunks);
    let a_addr = a.as_ptr() as usize;
    c.par_chunks_mut(rows_per * n)
        .enumerate()
        .for_each(|(idx, c_chunk)| {
            let row0 = idx * rows_per;
            let rows = c_chunk.len() / n;
            // Offset A to its row0-th logical row; B is shared read-only.
            let a_ptr = unsafe { (a_addr as *const T).offset(row0 as isize * s.rsa) };
            unsafe {
                T::gemm_acc(
                    rows,
                    k,
                    n,
                    a_ptr,
                    s.rsa,
                    s.csa,
                    b.as_ptr(),
                    s.rsb,
                    s.csb,
                    c_chunk.as_mut_ptr(),
                    n as isize,
                    1,
                );
            }
        });
}
