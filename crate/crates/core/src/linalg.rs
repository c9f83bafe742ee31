//! Dense complex linear algebra shared by the kernel, dilation and lift modules.
//!
//! Everything here works on small `nalgebra` matrices over `Complex64`; the
//! problem sizes in this crate are desk scale (a few hundred rows at most).

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

/// `(m + m*) / 2`.
pub fn hermitian_part(m: &CMat) -> CMat {
    (m + m.adjoint()).scale(0.5)
}

/// Largest entrywise modulus.
pub fn max_abs(m: &CMat) -> f64 {
    m.iter().fold(0.0_f64, |acc, z| acc.max(z.norm()))
}

pub fn max_abs_vec(v: &CVec) -> f64 {
    v.iter().fold(0.0_f64, |acc, z| acc.max(z.norm()))
}

/// Entrywise `max |a - b|`; shapes must agree.
pub fn max_abs_diff(a: &CMat, b: &CMat) -> f64 {
    debug_assert_eq!(a.shape(), b.shape());
    a.iter().zip(b.iter()).fold(0.0_f64, |acc, (x, y)| acc.max((x - y).norm()))
}

/// Thin singular value decomposition `a = u diag(s) v*`, `s` descending.
///
/// Columns of `u` belonging to zero singular values are zero.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: CMat,
    pub s: Vec<f64>,
    pub v: CMat,
}

/// One-sided Jacobi SVD. `nalgebra`'s complex SVD can return factors that do
/// not reproduce the input, so it is not used here.
pub fn svd(a: &CMat) -> Svd {
    if a.nrows() < a.ncols() {
        let t = svd(&a.adjoint());
        return Svd { u: t.v, s: t.s, v: t.u };
    }
    let (w, v, norms2) = jacobi_columns(a);
    let mut u = CMat::zeros(a.nrows(), a.ncols());
    let mut s = Vec::with_capacity(norms2.len());
    for (k, &n2) in norms2.iter().enumerate() {
        let sk = n2.sqrt();
        if sk > 0.0 {
            u.set_column(k, &(w.column(k) / C64::new(sk, 0.0)));
        }
        s.push(sk);
    }
    Svd { u, s, v }
}

/// `a v = w` with `v` unitary and the columns of `w` orthogonal, sorted by
/// descending squared norm (returned third). Requires `nrows >= ncols`.
fn jacobi_columns(a: &CMat) -> (CMat, CMat, Vec<f64>) {
    let n = a.ncols();
    let mut w = a.clone();
    let mut v = CMat::identity(n, n);
    for _ in 0..64 {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let alpha = w.column(p).norm_squared();
                let beta = w.column(q).norm_squared();
                let gamma = w.column(p).dotc(&w.column(q));
                if gamma.norm() <= f64::EPSILON * (alpha * beta).sqrt() {
                    continue;
                }
                if let Some(j) = jacobi_rotation(alpha, beta, gamma) {
                    rotate_columns(&mut w, p, q, j);
                    rotate_columns(&mut v, p, q, j);
                    rotated = true;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let norms2: Vec<f64> = (0..n).map(|j| w.column(j).norm_squared()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| norms2[j].total_cmp(&norms2[i]).then(i.cmp(&j)));
    let ws = CMat::from_fn(a.nrows(), n, |i, k| w[(i, order[k])]);
    let vs = CMat::from_fn(n, n, |i, k| v[(i, order[k])]);
    (ws, vs, order.iter().map(|&i| norms2[i]).collect())
}

/// Singular values in descending order.
pub fn singular_values(m: &CMat) -> Vec<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    svd(m).s
}

/// Spectral norm.
pub fn op_norm(m: &CMat) -> f64 {
    singular_values(m).first().copied().unwrap_or(0.0)
}

/// Eigen-decomposition of the Hermitian part of `m`, eigenvalues ascending.
///
/// Cyclic Jacobi: `nalgebra`'s complex `symmetric_eigen` can return orthonormal
/// vectors that do not diagonalise the input, so it is not used here.
pub fn eigh(m: &CMat) -> (Vec<f64>, CMat) {
    let n = m.nrows();
    if n == 0 {
        return (Vec::new(), CMat::zeros(0, 0));
    }
    let mut a = hermitian_part(m);
    let mut v = CMat::identity(n, n);
    let fro2 = a.norm_squared();
    for _ in 0..64 {
        let off2: f64 = (0..n).flat_map(|p| (p + 1..n).map(move |q| (p, q))).map(|(p, q)| a[(p, q)].norm_sqr()).sum();
        if off2 <= (f64::EPSILON * f64::EPSILON * 1e-4) * fro2 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                jacobi_rotate(&mut a, &mut v, p, q);
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(i, i)].re.total_cmp(&a[(j, j)].re));
    let values = order.iter().map(|&i| a[(i, i)].re).collect();
    let mut vectors = CMat::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &v.column(src));
    }
    (values, vectors)
}

/// Unitary `J = [[j0, j1], [j2, j3]]` with `J* [[app, apq], [conj apq, aqq]] J` diagonal.
fn jacobi_rotation(app: f64, aqq: f64, apq: C64) -> Option<[C64; 4]> {
    let r = apq.norm();
    if r == 0.0 {
        return None;
    }
    // the phase makes the pivot real, then a real rotation removes it
    let phase = apq.conj() / r;
    let zeta = (aqq - app) / (2.0 * r);
    let t = if zeta.is_infinite() { 0.0 } else { zeta.signum() / (zeta.abs() + zeta.hypot(1.0)) };
    let c = 1.0 / t.hypot(1.0);
    let s = t * c;
    Some([C64::new(c, 0.0), C64::new(s, 0.0), phase * -s, phase * c])
}

/// Columns `p`, `q` of `a` times `J`.
fn rotate_columns(a: &mut CMat, p: usize, q: usize, j: [C64; 4]) {
    for k in 0..a.nrows() {
        let (x, y) = (a[(k, p)], a[(k, q)]);
        a[(k, p)] = x * j[0] + y * j[2];
        a[(k, q)] = x * j[1] + y * j[3];
    }
}

/// `a <- J* a J`, `v <- v J` with `J` zeroing `a[(p, q)]`.
fn jacobi_rotate(a: &mut CMat, v: &mut CMat, p: usize, q: usize) {
    let Some(j) = jacobi_rotation(a[(p, p)].re, a[(q, q)].re, a[(p, q)]) else { return };
    rotate_columns(a, p, q, j);
    rotate_columns(v, p, q, j);
    for k in 0..a.ncols() {
        let (x, y) = (a[(p, k)], a[(q, k)]);
        a[(p, k)] = j[0].conj() * x + j[2].conj() * y;
        a[(q, k)] = j[1].conj() * x + j[3].conj() * y;
    }
    a[(p, q)] = ZERO;
    a[(q, p)] = ZERO;
    a[(p, p)].im = 0.0;
    a[(q, q)].im = 0.0;
}

/// Smallest eigenvalue of the Hermitian part of `m` with a unit eigenvector.
pub fn min_eigpair(m: &CMat) -> (f64, CVec) {
    let (vals, vecs) = eigh(m);
    (vals[0], vecs.column(0).into_owned())
}

pub fn min_eigenvalue(m: &CMat) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    eigh(m).0[0]
}

/// `u* v`.
pub fn inner(u: &CVec, v: &CVec) -> C64 {
    u.dotc(v)
}

/// Rescales `v` to unit norm with its largest-modulus entry real and positive.
pub fn phase_normalize(v: &CVec) -> CVec {
    let norm = v.norm();
    if norm == 0.0 {
        return v.clone();
    }
    let pivot = largest_entry(v);
    let phase = pivot.conj() / pivot.norm();
    v.map(|z| z * phase / norm)
}

/// Rescales `v` so its largest-modulus entry is exactly one.
pub fn unit_max_normalize(v: &CVec) -> CVec {
    let pivot = largest_entry(v);
    if pivot.norm() == 0.0 {
        return v.clone();
    }
    v.map(|z| z / pivot)
}

fn largest_entry(v: &CVec) -> C64 {
    // first index wins ties so the result is deterministic
    let mut best = ZERO;
    for z in v.iter() {
        if z.norm() > best.norm() * (1.0 + 1e-12) {
            best = *z;
        }
    }
    best
}

/// Minimum-norm least-squares solution of `a x = b` (columns of `b` solved independently).
pub fn lstsq(a: &CMat, b: &CMat, rcond: f64) -> CMat {
    if a.ncols() == 0 {
        return CMat::zeros(0, b.ncols());
    }
    if a.nrows() == 0 {
        return CMat::zeros(a.ncols(), b.ncols());
    }
    pinv(a, rcond) * b
}

/// Moore-Penrose pseudo-inverse; singular values below `rcond * s_max` are dropped.
pub fn pinv(a: &CMat, rcond: f64) -> CMat {
    if a.nrows() == 0 || a.ncols() == 0 {
        return CMat::zeros(a.ncols(), a.nrows());
    }
    if a.nrows() < a.ncols() {
        return pinv(&a.adjoint(), rcond).adjoint();
    }
    // sum_k v_k w_k* / |w_k|^2 avoids the rounding of normalising w_k first
    let (w, v, norms2) = jacobi_columns(a);
    let cutoff = rcond * norms2.first().copied().unwrap_or(0.0).sqrt();
    let mut x = CMat::zeros(a.ncols(), a.nrows());
    for (k, &n2) in norms2.iter().enumerate() {
        if n2.sqrt() > cutoff && n2 > 0.0 {
            x += v.column(k) * w.column(k).adjoint() * C64::new(1.0 / n2, 0.0);
        }
    }
    x
}

/// Numerical rank at relative cutoff `rcond`.
pub fn rank(a: &CMat, rcond: f64) -> usize {
    let s = singular_values(a);
    let Some(&smax) = s.first() else { return 0 };
    if smax == 0.0 {
        return 0;
    }
    s.iter().filter(|&&x| x > rcond * smax).count()
}

/// How candidate columns are scanned by [`pivoted_columns`].
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum PivotRule {
    /// Largest residual column norm first, lowest index on ties.
    #[default]
    GreedyResidual,
    /// First column in the given order whose residual exceeds the cutoff.
    Sequential(Vec<usize>),
}

/// Rank-revealing pivoted Gram-Schmidt (with re-orthogonalisation).
///
/// Returns the selected column indices in selection order. A column is
/// accepted while its residual norm exceeds `abs_tol`.
pub fn pivoted_columns(cols: &CMat, rule: &PivotRule, abs_tol: f64) -> Vec<usize> {
    let ncols = cols.ncols();
    let mut basis: Vec<CVec> = Vec::new();
    let mut picked = Vec::new();
    let mut used = vec![false; ncols];

    let residual = |j: usize, basis: &[CVec]| -> CVec {
        let mut r: CVec = cols.column(j).into_owned();
        for _ in 0..2 {
            for q in basis {
                let c = q.dotc(&r);
                r -= q * c;
            }
        }
        r
    };

    loop {
        let choice = match rule {
            PivotRule::GreedyResidual => {
                let mut best: Option<(usize, f64, CVec)> = None;
                for j in (0..ncols).filter(|&j| !used[j]) {
                    let r = residual(j, &basis);
                    let nr = r.norm();
                    if nr > abs_tol && best.as_ref().is_none_or(|(_, b, _)| nr > *b) {
                        best = Some((j, nr, r));
                    }
                }
                best
            }
            PivotRule::Sequential(order) => order.iter().copied().filter(|&j| j < ncols && !used[j]).find_map(|j| {
                let r = residual(j, &basis);
                let nr = r.norm();
                (nr > abs_tol).then_some((j, nr, r))
            }),
        };
        let Some((j, nr, r)) = choice else { break };
        used[j] = true;
        picked.push(j);
        basis.push(r.unscale(nr));
        if basis.len() == cols.nrows() {
            break;
        }
    }
    picked
}

/// Result of maximising a generalised Rayleigh quotient `w* N w / w* D w`.
#[derive(Debug, Clone)]
pub struct PencilMax {
    /// Largest generalised eigenvalue on the range of `D`.
    pub value: f64,
    /// Maximiser in the original coordinates.
    pub vector: CVec,
    /// Size of `N` outside the range of `D`; nonzero means the quotient is unbounded.
    pub null_leak: f64,
    /// Most negative eigenvalue of `D` (relative to its scale), for PSD checks.
    pub den_min_eig: f64,
}

/// Largest generalised eigenvalue of the Hermitian pencil `(num, den)` restricted to
/// the range of `den` (pseudo-inverse at `rel_tol`). Returns `None` if `den` has no
/// eigenvalue above the cutoff.
pub fn pencil_max(num: &CMat, den: &CMat, rel_tol: f64) -> Option<PencilMax> {
    let (vals, vecs) = eigh(den);
    let scale = vals.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return None;
    }
    let cutoff = rel_tol * scale;
    let keep: Vec<usize> = (0..vals.len()).filter(|&i| vals[i] > cutoff).collect();
    if keep.is_empty() {
        return None;
    }
    let null: Vec<usize> = (0..vals.len()).filter(|&i| vals[i] <= cutoff).collect();
    let n = num.nrows();
    let mut w = CMat::zeros(n, keep.len());
    for (c, &i) in keep.iter().enumerate() {
        w.set_column(c, &(vecs.column(i) / C64::new(vals[i].sqrt(), 0.0)));
    }
    let reduced = hermitian_part(&(w.adjoint() * hermitian_part(num) * &w));
    let (rv, rvec) = eigh(&reduced);
    let top = rv.len() - 1;
    let vector = &w * rvec.column(top);

    let null_leak = if null.is_empty() {
        0.0
    } else {
        let mut u0 = CMat::zeros(n, null.len());
        for (c, &i) in null.iter().enumerate() {
            u0.set_column(c, &vecs.column(i));
        }
        let hn = hermitian_part(num);
        let diag = u0.adjoint() * &hn * &u0;
        let cross = u0.adjoint() * &hn * &w;
        op_norm(&diag).max(op_norm(&cross))
    };
    Some(PencilMax { value: rv[top], vector, null_leak, den_min_eig: vals[0] / scale })
}

/// `x -> [Re x, Im x]` helpers used by JSON encoders.
pub fn to_pair(z: C64) -> [f64; 2] {
    [z.re, z.im]
}

pub fn from_pair(p: [f64; 2]) -> C64 {
    C64::new(p[0], p[1])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn eigh_sorts_ascending() {
        let m = CMat::from_row_slice(2, 2, &[c(1.0, 0.0), c(2.0, 0.0), c(2.0, 0.0), c(1.0, 0.0)]);
        let (v, _) = eigh(&m);
        assert!((v[0] + 1.0).abs() < 1e-12);
        assert!((v[1] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn pinv_of_rank_one() {
        let a = CMat::from_row_slice(2, 2, &[ONE, ONE, ONE, ONE]);
        let p = pinv(&a, 1e-12);
        // pinv(J_2) = J_2 / 4
        assert!(max_abs_diff(&p, &a.scale(0.25)) < 1e-12);
    }

    #[test]
    fn pivots_greedy_break_ties_low_index() {
        let cols = CMat::identity(3, 3);
        assert_eq!(pivoted_columns(&cols, &PivotRule::GreedyResidual, 1e-10), vec![0, 1, 2]);
        let dup = CMat::from_row_slice(2, 3, &[ONE, ONE, ZERO, ZERO, ZERO, ONE]);
        assert_eq!(pivoted_columns(&dup, &PivotRule::GreedyResidual, 1e-10), vec![0, 2]);
        let seq = PivotRule::Sequential(vec![2, 1, 0]);
        assert_eq!(pivoted_columns(&dup, &seq, 1e-10), vec![2, 1]);
    }

    #[test]
    fn pencil_reports_range_restricted_max() {
        // (2 J, [[4,2],[2,2]]) has generalised eigenvalues {0, 1}
        let num = CMat::from_element(2, 2, c(2.0, 0.0));
        let den = CMat::from_row_slice(2, 2, &[c(4.0, 0.0), c(2.0, 0.0), c(2.0, 0.0), c(2.0, 0.0)]);
        let p = pencil_max(&num, &den, 1e-12).unwrap();
        assert!((p.value - 1.0).abs() < 1e-12);
        assert!(p.null_leak == 0.0);
    }

    #[test]
    fn pencil_flags_leak_outside_range() {
        let num = CMat::identity(2, 2);
        let den = CMat::from_row_slice(2, 2, &[ONE, ZERO, ZERO, ZERO]);
        let p = pencil_max(&num, &den, 1e-12).unwrap();
        assert!(p.null_leak > 0.5);
    }

    #[test]
    fn phase_normalize_makes_pivot_positive() {
        let v = CVec::from_vec(vec![c(0.0, 2.0), c(0.0, 1.0)]);
        let w = phase_normalize(&v);
        assert!((w[0].im).abs() < 1e-15 && w[0].re > 0.0);
        assert!((w.norm() - 1.0).abs() < 1e-15);
    }
}
