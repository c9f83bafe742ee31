//! `Z`-valued kernels on a finite point set, and positivity verdicts.
//!
//! A kernel on `X = {0, .., m-1}` is an `m x m` table of `d x d` matrices. Since
//! `X` is finite, checking the single tuple `(x_0, .., x_{m-1})` against every
//! coefficient vector `t` in `C^m` already covers all finite tuples with
//! repetition, so weak positivity is the statement that
//! `M(t) = sum_{k,j} conj(t_k) t_j k(x_k, x_j)` is PSD for every `t`, i.e.
//! block-positivity of the `md x md` block matrix. For `d > 1` that is hard in
//! general, which is why [`weak_positivity`] can answer `Undetermined`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::algebra::{Action, AlgebraError, StarSemigroup};
use crate::linalg::{self, CMat, CVec, C64, I, ONE, ZERO};
use crate::zspace::{SeminormTag, ZElement, ZSpace};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KernelError {
    #[error("kernel table has {got} entries, expected {expected}")]
    TableSize { expected: usize, got: usize },
    #[error("kernel entry ({x}, {y}) has dimension {got}, space has {expected}")]
    EntryDimension { x: usize, y: usize, expected: usize, got: usize },
    #[error("kernel entry ({x}, {y}) is not finite")]
    NonFinite { x: usize, y: usize },
    #[error("action acts on {got} points, kernel has {expected}")]
    ActionSize { expected: usize, got: usize },
    #[error(transparent)]
    Algebra(#[from] AlgebraError),
}

/// A `Z`-valued kernel on `m` points.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Kernel {
    space: ZSpace,
    m: usize,
    /// Row-major: `table[x * m + y] = k(x, y)`.
    #[serde(serialize_with = "serialize_table")]
    table: Vec<ZElement>,
}

fn serialize_table<S: serde::Serializer>(table: &[ZElement], s: S) -> Result<S::Ok, S::Error> {
    use serde::ser::SerializeSeq;
    let m = (table.len() as f64).sqrt().round() as usize;
    let mut seq = s.serialize_seq(Some(m))?;
    for row in table.chunks(m.max(1)) {
        seq.serialize_element(row)?;
    }
    seq.end()
}

#[derive(Deserialize)]
struct KernelRepr {
    space: ZSpace,
    #[serde(default)]
    m: Option<usize>,
    table: Vec<Vec<ZElement>>,
}

impl<'de> Deserialize<'de> for Kernel {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> Result<Self, D::Error> {
        let r = KernelRepr::deserialize(de)?;
        let m = r.m.unwrap_or(r.table.len());
        if r.table.len() != m || r.table.iter().any(|row| row.len() != m) {
            return Err(serde::de::Error::custom(format!("kernel table must be {m} x {m}")));
        }
        Kernel::new(r.space, m, r.table.into_iter().flatten().collect()).map_err(serde::de::Error::custom)
    }
}

impl Kernel {
    pub fn new(space: ZSpace, m: usize, table: Vec<ZElement>) -> Result<Self, KernelError> {
        if table.len() != m * m {
            return Err(KernelError::TableSize { expected: m * m, got: table.len() });
        }
        for (idx, z) in table.iter().enumerate() {
            let (x, y) = (idx / m.max(1), idx % m.max(1));
            if z.dim() != space.dim() {
                return Err(KernelError::EntryDimension { x, y, expected: space.dim(), got: z.dim() });
            }
            if !z.is_finite() {
                return Err(KernelError::NonFinite { x, y });
            }
        }
        Ok(Self { space, m, table })
    }

    pub fn from_fn(space: ZSpace, m: usize, mut f: impl FnMut(usize, usize) -> ZElement) -> Self {
        let mut table = Vec::with_capacity(m * m);
        for x in 0..m {
            for y in 0..m {
                let z = f(x, y);
                assert_eq!(z.dim(), space.dim(), "kernel entry dimension");
                table.push(z);
            }
        }
        Self { space, m, table }
    }

    /// Scalar kernel from an `m x m` complex matrix.
    pub fn scalar(matrix: &CMat) -> Self {
        assert_eq!(matrix.nrows(), matrix.ncols());
        Self::from_fn(ZSpace::scalar(), matrix.nrows(), |x, y| ZElement::scalar(matrix[(x, y)]))
    }

    /// Scalar kernel from real row-major entries.
    pub fn scalar_real(m: usize, entries: &[f64]) -> Self {
        assert_eq!(entries.len(), m * m);
        Self::from_fn(ZSpace::scalar(), m, |x, y| ZElement::real(entries[x * m + y]))
    }

    /// Kernel whose `md x md` block matrix is `big`.
    pub fn from_block_matrix(space: ZSpace, big: &CMat) -> Self {
        let d = space.dim();
        assert_eq!(big.nrows() % d, 0);
        let m = big.nrows() / d;
        Self::from_fn(space, m, |x, y| ZElement(big.view((x * d, y * d), (d, d)).into_owned()))
    }

    pub fn space(&self) -> &ZSpace {
        &self.space
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn d(&self) -> usize {
        self.space.dim()
    }

    pub fn get(&self, x: usize, y: usize) -> &ZElement {
        &self.table[x * self.m + y]
    }

    pub fn entries(&self) -> &[ZElement] {
        &self.table
    }

    pub fn with_space(mut self, space: ZSpace) -> Self {
        assert_eq!(space.dim(), self.space.dim());
        self.space = space;
        self
    }

    /// `1 + max_{x,y} ||k(x,y)||`.
    pub fn scale(&self) -> f64 {
        1.0 + self.table.iter().map(|z| z.seminorm(SeminormTag::OperatorNorm)).fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.table.iter().map(ZElement::max_abs).fold(0.0, f64::max)
    }

    /// `md x md` matrix with `(x, y)` block `k(x, y)`.
    pub fn block_matrix(&self) -> CMat {
        let (m, d) = (self.m, self.d());
        let mut out = CMat::zeros(m * d, m * d);
        for x in 0..m {
            for y in 0..m {
                out.view_mut((x * d, y * d), (d, d)).copy_from(&self.get(x, y).0);
            }
        }
        out
    }

    /// The function `k(., x)` flattened into `C^{m d^2}` (point-major, entries row-major).
    pub fn column(&self, x: usize) -> CVec {
        let d = self.d();
        let mut v = CVec::zeros(self.m * d * d);
        for y in 0..self.m {
            let z = &self.get(y, x).0;
            for a in 0..d {
                for b in 0..d {
                    v[y * d * d + a * d + b] = z[(a, b)];
                }
            }
        }
        v
    }

    /// All columns side by side, `m d^2 x m`.
    pub fn column_matrix(&self) -> CMat {
        let mut out = CMat::zeros(self.m * self.d() * self.d(), self.m);
        for x in 0..self.m {
            out.set_column(x, &self.column(x));
        }
        out
    }

    /// `M(t) = sum_{k,j} conj(t_k) t_j k(x_k, x_j)`.
    pub fn weighted_sum(&self, t: &CVec) -> ZElement {
        assert_eq!(t.len(), self.m);
        let d = self.d();
        let mut acc = CMat::zeros(d, d);
        for k in 0..self.m {
            if t[k] == ZERO {
                continue;
            }
            for j in 0..self.m {
                let c = t[k].conj() * t[j];
                if c != ZERO {
                    acc += self.get(k, j).0.map(|z| z * c);
                }
            }
        }
        ZElement(acc)
    }

    /// `<h, M(t) h>` evaluated straight from the table.
    pub fn probe(&self, t: &CVec, h: &CVec) -> C64 {
        self.weighted_sum(t).quadratic(h)
    }

    /// `k*(x, y) = k(y, x)*`.
    pub fn adjoint(&self) -> Kernel {
        Self::from_fn(self.space, self.m, |x, y| self.get(y, x).involution())
    }

    /// `max_{x,y} |k(x,y) - k(y,x)*|` entrywise.
    pub fn hermitian_defect(&self) -> f64 {
        let mut worst = 0.0_f64;
        for x in 0..self.m {
            for y in x..self.m {
                worst = worst.max(self.get(x, y).max_abs_diff(&self.get(y, x).involution()));
            }
        }
        worst
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermitian_defect() <= tol
    }

    /// Every `(xi, x, y)` where `k(y, xi.x) != k(xi*.y, x)` beyond `tol`.
    pub fn invariance_violations(
        &self,
        s: &StarSemigroup,
        a: &Action,
        tol: f64,
    ) -> Result<Vec<InvarianceViolation>, KernelError> {
        if a.points() != self.m && !(self.m == 0 && a.table.iter().all(Vec::is_empty)) {
            return Err(KernelError::ActionSize { expected: self.m, got: a.points() });
        }
        a.check_shape(s, self.m)?;
        let mut out = Vec::new();
        for xi in 0..s.size() {
            let xs = s.star(xi);
            for x in 0..self.m {
                for y in 0..self.m {
                    let lhs = self.get(y, a.apply(xi, x));
                    let rhs = self.get(a.apply(xs, y), x);
                    let defect = lhs.max_abs_diff(rhs);
                    if defect > tol {
                        out.push(InvarianceViolation { element: xi, x, y, defect });
                    }
                }
            }
        }
        Ok(out)
    }
}

/// Transposed-and-involuted kernel.
pub fn adjoint_kernel(k: &Kernel) -> Kernel {
    k.adjoint()
}

pub fn is_hermitian(k: &Kernel, tol: f64) -> bool {
    k.is_hermitian(tol)
}

pub fn is_invariant(
    k: &Kernel,
    s: &StarSemigroup,
    a: &Action,
    tol: f64,
) -> Result<Vec<InvarianceViolation>, KernelError> {
    k.invariance_violations(s, a, tol)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvarianceViolation {
    pub element: usize,
    pub x: usize,
    pub y: usize,
    pub defect: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PositivityStatus {
    CertifiedPositive,
    CertifiedNotPositive,
    Undetermined,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PositivityMethod {
    ScalarExact,
    BlockPsdSufficient,
    WitnessFound,
    SearchExhausted,
}

/// A coefficient vector `t` and direction `h` with `<h, M(t) h>` outside `R_+`.
///
/// For Hermitian kernels `imaginary` is zero up to rounding and the witness is
/// `value < 0`; for non-Hermitian kernels the witness may instead be a nonzero
/// imaginary part (the cone contains selfadjoint elements only).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Witness {
    #[serde(serialize_with = "crate::json::serialize_vector")]
    pub t: CVec,
    #[serde(serialize_with = "crate::json::serialize_vector")]
    pub h: CVec,
    pub value: f64,
    pub imaginary: f64,
}

impl Witness {
    /// Builds a witness and records `<h, M(t) h>` evaluated from the table.
    pub fn from_probe(k: &Kernel, t: CVec, h: CVec) -> Self {
        let q = k.probe(&t, &h);
        Self { t, h, value: q.re, imaginary: q.im }
    }

    /// Re-evaluates against `k` and checks `<h, M(t) h>` misses `R_+` by more than `margin`.
    pub fn verify(&self, k: &Kernel, margin: f64) -> bool {
        if self.t.len() != k.m() || self.h.len() != k.d() {
            return false;
        }
        let q = k.probe(&self.t, &self.h);
        q.re < -margin || q.im.abs() > margin
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PositivityVerdict {
    pub status: PositivityStatus,
    pub method: PositivityMethod,
    pub witness: Option<Witness>,
    /// Smallest `<h, M(t) h>` over unit `t`, `h` that the pipeline saw.
    pub best_found: f64,
    pub restarts_used: usize,
    pub unconverged_restarts: usize,
}

impl PositivityVerdict {
    pub fn is_positive(&self) -> bool {
        self.status == PositivityStatus::CertifiedPositive
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeakPositivityOptions {
    pub restarts: usize,
    pub max_iters: usize,
    pub seed: u64,
    pub tol: f64,
}

impl Default for WeakPositivityOptions {
    fn default() -> Self {
        Self { restarts: 64, max_iters: 200, seed: 0, tol: 1e-9 }
    }
}

/// Decision pipeline for weak positive semidefiniteness.
///
/// 1. Non-Hermitian kernels are not weakly 2-positive; a two-point witness is built.
/// 2. `d = 1`: exact, from the smallest eigenvalue of the scalar matrix.
/// 3. Block matrix PSD: certified positive (full positivity implies weak positivity).
/// 4. Otherwise an alternating eigen-minimisation over `(t, h)` looks for a
///    negative value; failing that the answer is `Undetermined`.
pub fn weak_positivity(k: &Kernel, opts: &WeakPositivityOptions) -> PositivityVerdict {
    let scale = k.scale();
    let threshold = opts.tol * scale;
    if k.m() == 0 {
        return PositivityVerdict {
            status: PositivityStatus::CertifiedPositive,
            method: if k.d() == 1 { PositivityMethod::ScalarExact } else { PositivityMethod::BlockPsdSufficient },
            witness: None,
            best_found: 0.0,
            restarts_used: 0,
            unconverged_restarts: 0,
        };
    }

    if !k.is_hermitian(threshold) {
        let w = non_hermitian_witness(k);
        let best = w.value.min(-w.imaginary.abs());
        return PositivityVerdict {
            status: PositivityStatus::CertifiedNotPositive,
            method: PositivityMethod::WitnessFound,
            witness: Some(w),
            best_found: best,
            restarts_used: 0,
            unconverged_restarts: 0,
        };
    }

    let big = k.block_matrix();
    let (vals, vecs) = linalg::eigh(&big);
    let min_eig = vals[0];

    if k.d() == 1 {
        if min_eig >= -threshold {
            return PositivityVerdict {
                status: PositivityStatus::CertifiedPositive,
                method: PositivityMethod::ScalarExact,
                witness: None,
                best_found: min_eig,
                restarts_used: 0,
                unconverged_restarts: 0,
            };
        }
        let t = linalg::unit_max_normalize(&vecs.column(0).into_owned());
        let w = Witness::from_probe(k, t, CVec::from_element(1, ONE));
        return PositivityVerdict {
            status: PositivityStatus::CertifiedNotPositive,
            method: PositivityMethod::ScalarExact,
            witness: Some(w),
            best_found: min_eig,
            restarts_used: 0,
            unconverged_restarts: 0,
        };
    }

    if min_eig >= -threshold {
        return PositivityVerdict {
            status: PositivityStatus::CertifiedPositive,
            method: PositivityMethod::BlockPsdSufficient,
            witness: None,
            best_found: min_eig,
            restarts_used: 0,
            unconverged_restarts: 0,
        };
    }

    let search = falsify(k, opts);
    if search.value < -threshold {
        let t = linalg::unit_max_normalize(&search.t);
        let h = linalg::phase_normalize(&search.h);
        let w = Witness::from_probe(k, t, h);
        if w.verify(k, threshold) {
            return PositivityVerdict {
                status: PositivityStatus::CertifiedNotPositive,
                method: PositivityMethod::WitnessFound,
                witness: Some(w),
                best_found: search.value,
                restarts_used: opts.restarts,
                unconverged_restarts: search.unconverged,
            };
        }
    }
    PositivityVerdict {
        status: PositivityStatus::Undetermined,
        method: PositivityMethod::SearchExhausted,
        witness: None,
        best_found: search.value,
        restarts_used: opts.restarts,
        unconverged_restarts: search.unconverged,
    }
}

/// Two-point witness for a kernel that is not Hermitian: `M(t)` fails to be
/// selfadjoint, so some direction `h` gives `<h, M(t) h>` off the real axis.
fn non_hermitian_witness(k: &Kernel) -> Witness {
    let m = k.m();
    let (mut bx, mut by, mut worst) = (0, 0, -1.0_f64);
    for x in 0..m {
        for y in x..m {
            let defect = k.get(x, y).max_abs_diff(&k.get(y, x).involution());
            if defect > worst {
                (bx, by, worst) = (x, y, defect);
            }
        }
    }
    let candidates: Vec<CVec> = if bx == by {
        let mut t = CVec::zeros(m);
        t[bx] = ONE;
        vec![t]
    } else {
        [ONE, I]
            .iter()
            .map(|&tau| {
                let mut t = CVec::zeros(m);
                t[bx] = ONE;
                t[by] = tau;
                t
            })
            .collect()
    };
    let mut best: Option<(f64, CVec, CVec)> = None;
    for t in candidates {
        let mt = k.weighted_sum(&t).0;
        // (M - M*) / 2i is Hermitian; its extreme eigenvector maximises |Im <h, M h>|
        let skew = (&mt - mt.adjoint()).map(|z| z / C64::new(0.0, 2.0));
        let (vals, vecs) = linalg::eigh(&skew);
        let (idx, mag) = if vals[0].abs() >= vals[vals.len() - 1].abs() {
            (0, vals[0].abs())
        } else {
            (vals.len() - 1, vals[vals.len() - 1].abs())
        };
        if best.as_ref().is_none_or(|(b, _, _)| mag > *b) {
            best = Some((mag, t, linalg::phase_normalize(&vecs.column(idx).into_owned())));
        }
    }
    let (_, t, h) = best.expect("at least one candidate");
    Witness::from_probe(k, t, h)
}

struct SearchOutcome {
    value: f64,
    t: CVec,
    h: CVec,
    unconverged: usize,
}

struct RestartResult {
    value: f64,
    t: CVec,
    h: CVec,
    converged: bool,
}

/// Uniform sample from the unit sphere of `C^n`.
pub(crate) fn random_unit_vector<R: Rng>(rng: &mut R, n: usize) -> CVec {
    loop {
        let v = CVec::from_fn(n, |_, _| {
            C64::new(rng.sample::<f64, _>(StandardNormal), rng.sample::<f64, _>(StandardNormal))
        });
        let norm = v.norm();
        if norm > 1e-300 {
            return v.unscale(norm);
        }
    }
}

/// Per-restart generator: the base seed selects the key, the restart index the stream.
pub(crate) fn restart_rng(seed: u64, restart: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(restart as u64);
    rng
}

/// `(W_h)_{kj} = <h, k(x_k, x_j) h>`.
fn direction_matrix(k: &Kernel, h: &CVec) -> CMat {
    let m = k.m();
    CMat::from_fn(m, m, |a, b| k.get(a, b).quadratic(h))
}

fn alternate(k: &Kernel, mut t: CVec, opts: &WeakPositivityOptions) -> RestartResult {
    let stop = 1e-12 * k.scale();
    let (mut value, mut h) = linalg::min_eigpair(&k.weighted_sum(&t).0);
    let mut converged = false;
    for _ in 0..opts.max_iters {
        let (_, t_new) = linalg::min_eigpair(&direction_matrix(k, &h));
        let (v_new, h_new) = linalg::min_eigpair(&k.weighted_sum(&t_new).0);
        let improvement = value - v_new;
        if v_new <= value {
            t = t_new;
            h = h_new;
            value = v_new;
        }
        if improvement < stop {
            converged = true;
            break;
        }
    }
    RestartResult { value, t, h, converged }
}

fn falsify(k: &Kernel, opts: &WeakPositivityOptions) -> SearchOutcome {
    let results: Vec<RestartResult> = (0..opts.restarts.max(1))
        .into_par_iter()
        .map(|r| {
            let mut rng = restart_rng(opts.seed, r);
            let t0 = random_unit_vector(&mut rng, k.m());
            alternate(k, t0, opts)
        })
        .collect();
    let unconverged = results.iter().filter(|r| !r.converged).count();
    // reduce by value, then by restart index (first minimum wins)
    let best = results.into_iter().reduce(|a, b| if b.value < a.value { b } else { a }).expect("at least one restart");
    SearchOutcome { value: best.value, t: best.t, h: best.h, unconverged }
}

/// Smallest eigenvalue of the block matrix: the strong (vector-coefficient) notion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StrongPositivity {
    pub min_eig: f64,
    pub is_psd: bool,
}

pub fn strong_positivity(k: &Kernel, tol: f64) -> StrongPositivity {
    let min_eig = linalg::min_eigenvalue(&k.block_matrix());
    StrongPositivity { min_eig, is_psd: min_eig >= -tol * k.scale() }
}

/// Split of `X` into points with null diagonal (`X0`) and the rest (`X1`).
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TwoPositivityDiagnostics {
    pub null_points: Vec<usize>,
    pub support_points: Vec<usize>,
    /// `(x, y)` with `k(x,x) = 0` but `k(x,y) != 0`; any entry rules out weak 2-positivity.
    pub violations: Vec<(usize, usize)>,
}

pub fn twopos_diagnostics(k: &Kernel, tol: f64) -> TwoPositivityDiagnostics {
    let tag = SeminormTag::OperatorNorm;
    let (null_points, support_points): (Vec<usize>, Vec<usize>) =
        (0..k.m()).partition(|&x| k.get(x, x).seminorm(tag) <= tol);
    let mut violations = Vec::new();
    for &x in &null_points {
        for y in 0..k.m() {
            if k.get(x, y).seminorm(tag) > tol {
                violations.push((x, y));
            }
        }
    }
    TwoPositivityDiagnostics { null_points, support_points, violations }
}

fn gaussian_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> CMat {
    CMat::from_fn(rows, cols, |_, _| {
        C64::new(rng.sample::<f64, _>(StandardNormal), rng.sample::<f64, _>(StandardNormal))
    })
}

/// `k(x, y) = F(x)* F(y)` with random `rank x d` factors; block-PSD by construction.
pub fn random_block_psd_kernel(m: usize, d: usize, rank: usize, seed: u64) -> Kernel {
    assert!(rank >= 1, "rank must be at least 1");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let f = gaussian_matrix(&mut rng, rank, m * d);
    Kernel::from_block_matrix(ZSpace::for_dim(d), &(f.adjoint() * f))
}

/// Random Hermitian kernel with Gaussian entries (generally indefinite).
pub fn random_hermitian_kernel(m: usize, d: usize, seed: u64) -> Kernel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = gaussian_matrix(&mut rng, m * d, m * d);
    Kernel::from_block_matrix(ZSpace::for_dim(d), &linalg::hermitian_part(&a))
}

/// The `m = 2`, `d = 2` kernel `k(x, y) = E_{yx}`: weakly positive, not block-PSD.
pub fn swap_kernel() -> Kernel {
    Kernel::from_fn(ZSpace::hermitian(2), 2, |x, y| ZElement::unit(2, y, x))
}
