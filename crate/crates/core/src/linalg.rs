//! Small dense complex solves for the constraint systems.

use alloc::vec::Vec;

use crate::Complex;

/// Pivots smaller than this fraction of the largest matrix entry are treated
/// as singular.
const SINGULAR_RTOL: f64 = 1e-13;

/// Solves `a·x = b` for square `a` (row-major, `n×n`) by Gaussian
/// elimination with partial pivoting. Returns `None` when singular.
pub(crate) fn solve(a: &[Complex], b: &[Complex], n: usize) -> Option<Vec<Complex>> {
    debug_assert_eq!(a.len(), n * n);
    debug_assert_eq!(b.len(), n);
    let mut m: Vec<Complex> = a.to_vec();
    let mut x: Vec<Complex> = b.to_vec();
    let scale = m.iter().map(|z| z.norm()).fold(0.0f64, f64::max);
    if scale == 0.0 {
        return None;
    }
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| m[i * n + col].norm().total_cmp(&m[j * n + col].norm()))?;
        if m[pivot * n + col].norm() <= SINGULAR_RTOL * scale {
            return None;
        }
        if pivot != col {
            for k in 0..n {
                m.swap(col * n + k, pivot * n + k);
            }
            x.swap(col, pivot);
        }
        let inv = m[col * n + col].inv();
        for row in col + 1..n {
            let f = m[row * n + col] * inv;
            if f == Complex::new(0.0, 0.0) {
                continue;
            }
            for k in col..n {
                let v = m[col * n + k];
                m[row * n + k] -= f * v;
            }
            let v = x[col];
            x[row] -= f * v;
        }
    }
    for row in (0..n).rev() {
        let mut acc = x[row];
        for k in row + 1..n {
            acc -= m[row * n + k] * x[k];
        }
        x[row] = acc / m[row * n + row];
    }
    Some(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn solves_small_system() {
        let a = vec![
            Complex::new(2.0, 0.0),
            Complex::new(0.0, 1.0),
            Complex::new(0.0, -1.0),
            Complex::new(3.0, 0.0),
        ];
        let want = [Complex::new(1.0, 2.0), Complex::new(-0.5, 0.25)];
        let b = vec![a[0] * want[0] + a[1] * want[1], a[2] * want[0] + a[3] * want[1]];
        let x = solve(&a, &b, 2).unwrap();
        for i in 0..2 {
            assert!((x[i] - want[i]).norm() < 1e-14);
        }
    }

    #[test]
    fn detects_singular() {
        let one = Complex::new(1.0, 0.0);
        assert!(solve(&[one, one, one, one], &[one, one], 2).is_none());
        assert!(solve(&[Complex::new(0.0, 0.0)], &[one], 1).is_none());
    }
}
