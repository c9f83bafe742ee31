//! Minimal linearisations `k(x, y) = [V(x), V(y)]`, the induced *-representation,
//! boundedness constants and unitary equivalence of minimal linearisations.
//!
//! The space is realised concretely: `E` is the span of the columns
//! `k(., x)` viewed as vectors in `C^{m d^2}`, a basis is picked among the columns
//! by pivoted Gram-Schmidt, and the gramian on that basis is `k(p_i, p_j)`.
//! Coordinates of `V(x)` are least-squares coefficients of column `x`.

use rayon::prelude::*;
use serde::{Serialize, Serializer};
use thiserror::Error;

use crate::algebra::{Action, AlgebraError, StarSemigroup};
use crate::json::{serialize_matrix, MatrixJson};
use crate::kernels::{random_unit_vector, restart_rng, InvarianceViolation, Kernel, KernelError, Witness};
use crate::linalg::{self, CMat, CVec, PivotRule, I, ONE};
use crate::zspace::{GramTensor, SeminormTag, ZElement};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DilationError {
    #[error("kernel is not Hermitian (defect {defect:e})")]
    NotHermitian { defect: f64 },
    #[error("quadratic form {value:e} fell below the cone at probe t, h")]
    WeakPositivityViolated { value: f64, witness: Box<Witness> },
    #[error("kernel is not invariant: element {}, x = {}, y = {} (defect {:e})", .0.element, .0.x, .0.y, .0.defect)]
    NotInvariant(InvarianceViolation),
    #[error("representation of element {element} is not well defined (defect {defect:e})")]
    IllDefined { element: usize, defect: f64 },
    #[error("kernel gram is identically zero")]
    ZeroDenominatorOnly,
    #[error(
        "no isometry between the decompositions (isometry {isometry_defect:e}, intertwining {intertwine_defect:e})"
    )]
    NoIsometry { isometry_defect: f64, intertwine_defect: f64 },
    #[error("kernel identity fails at x = {x}, y = {y} (defect {defect:e})")]
    HypothesisFails { x: usize, y: usize, defect: f64 },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Algebra(#[from] AlgebraError),
}

/// Span of the kernel columns with a chosen basis.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VESpaceRealized {
    pub n: usize,
    pub m: usize,
    pub d: usize,
    /// Basis functions as columns of an `m d^2 x n` matrix (point-major, entries row-major).
    #[serde(serialize_with = "serialize_matrix")]
    pub basis_functions: CMat,
    #[serde(serialize_with = "serialize_gram")]
    pub gram: GramTensor,
    pub pivot_points: Vec<usize>,
}

pub(crate) fn serialize_gram<S: Serializer>(g: &GramTensor, s: S) -> Result<S::Ok, S::Error> {
    let rows: Vec<Vec<&ZElement>> = (0..g.n()).map(|i| (0..g.n()).map(|j| g.block(i, j)).collect()).collect();
    rows.serialize(s)
}

impl VESpaceRealized {
    /// Basis function `h` as a table over `X`.
    pub fn function(&self, h: usize) -> Vec<ZElement> {
        unflatten(&self.basis_functions.column(h).into_owned(), self.m, self.d)
    }
}

/// `C^{m d^2}` vector back to `m` elements of `Z`.
pub fn unflatten(v: &CVec, m: usize, d: usize) -> Vec<ZElement> {
    (0..m).map(|y| ZElement(CMat::from_fn(d, d, |a, b| v[y * d * d + a * d + b]))).collect()
}

/// Pivot and rank settings for [`build_kolmogorov`].
#[derive(Debug, Clone, PartialEq)]
pub struct KolmogorovOptions {
    /// Relative to the largest column norm.
    pub rank_tol: f64,
    /// Hermitian and positivity probes, relative to the kernel scale.
    pub structural_tol: f64,
    pub pivot: PivotRule,
}

impl Default for KolmogorovOptions {
    fn default() -> Self {
        Self { rank_tol: 1e-8, structural_tol: 1e-9, pivot: PivotRule::GreedyResidual }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KolmogorovDecomposition {
    pub space: VESpaceRealized,
    /// Row `x` holds the coordinates of `V(x)`.
    #[serde(rename = "V", serialize_with = "serialize_matrix")]
    pub v: CMat,
    pub residual: f64,
    /// Ranks at tolerances a decade apart disagree.
    pub rank_unstable: bool,
}

impl KolmogorovDecomposition {
    pub fn n(&self) -> usize {
        self.space.n
    }

    pub fn m(&self) -> usize {
        self.space.m
    }

    pub fn d(&self) -> usize {
        self.space.d
    }

    pub fn gram(&self) -> &GramTensor {
        &self.space.gram
    }

    /// Coordinates of `V(x)`.
    pub fn coords(&self, x: usize) -> CVec {
        self.v.row(x).transpose()
    }

    /// `n x m` matrix whose column `x` is `V(x)`.
    pub fn generator_matrix(&self) -> CMat {
        self.v.transpose()
    }

    pub fn pair(&self, u: &CVec, w: &CVec) -> ZElement {
        self.space.gram.pair(u, w).expect("coordinate vectors have length n")
    }
}

/// Minimal linearisation of a Hermitian kernel.
pub fn build_kolmogorov(k: &Kernel, opts: &KolmogorovOptions) -> Result<KolmogorovDecomposition, DilationError> {
    let scale = k.scale();
    let defect = k.hermitian_defect();
    if defect > opts.structural_tol * scale {
        return Err(DilationError::NotHermitian { defect });
    }
    let (m, d) = (k.m(), k.d());
    let cols = k.column_matrix();
    let max_col = (0..m).map(|x| cols.column(x).norm()).fold(0.0, f64::max);

    let pivots =
        if max_col == 0.0 { Vec::new() } else { linalg::pivoted_columns(&cols, &opts.pivot, opts.rank_tol * max_col) };
    let n = pivots.len();
    let mut basis = CMat::zeros(m * d * d, n);
    for (i, &p) in pivots.iter().enumerate() {
        basis.set_column(i, &cols.column(p));
    }
    let gram = GramTensor::from_fn(n, d, |i, j| k.get(pivots[i], pivots[j]).clone());
    probe_gram(k, &gram, &pivots, opts.structural_tol * scale)?;

    let coords = linalg::lstsq(&basis, &cols, 1e-12);
    let residual = if n == 0 { linalg::max_abs(&cols) } else { linalg::max_abs_diff(&(&basis * &coords), &cols) };
    let rank_unstable = max_col > 0.0 && {
        let step = 10f64.sqrt();
        linalg::rank(&cols, opts.rank_tol / step) != linalg::rank(&cols, opts.rank_tol * step)
    };
    Ok(KolmogorovDecomposition {
        space: VESpaceRealized { n, m, d, basis_functions: basis, gram, pivot_points: pivots },
        v: coords.transpose(),
        residual,
        rank_unstable,
    })
}

/// Probes the quadratic forms the builder touches: diagonal blocks, the full scalar
/// gram when `d = 1`, and two-point combinations of pivots otherwise.
fn probe_gram(k: &Kernel, gram: &GramTensor, pivots: &[usize], threshold: f64) -> Result<(), DilationError> {
    let m = k.m();
    let fail = |t: CVec, h: CVec| {
        let w = Witness::from_probe(k, t, h);
        Err(DilationError::WeakPositivityViolated { value: w.value, witness: Box::new(w) })
    };
    for x in 0..m {
        let (val, h) = linalg::min_eigpair(&k.get(x, x).0);
        if val < -threshold {
            let mut t = CVec::zeros(m);
            t[x] = ONE;
            return fail(t, linalg::phase_normalize(&h));
        }
    }
    let n = pivots.len();
    if n == 0 {
        return Ok(());
    }
    let embed = |c: &CVec| {
        let mut t = CVec::zeros(m);
        for (i, &p) in pivots.iter().enumerate() {
            t[p] = c[i];
        }
        t
    };
    if k.d() == 1 {
        let (val, c) = linalg::min_eigpair(&gram.block_matrix());
        if val < -threshold {
            return fail(embed(&linalg::unit_max_normalize(&c)), CVec::from_element(1, ONE));
        }
        return Ok(());
    }
    for i in 0..n {
        for j in (i + 1)..n {
            for tau in [ONE, -ONE, I, -I] {
                let mut c = CVec::zeros(n);
                c[i] = ONE;
                c[j] = tau;
                let (val, h) = linalg::min_eigpair(&gram.pair(&c, &c).expect("length n").0);
                if val < -threshold {
                    return fail(embed(&c), linalg::phase_normalize(&h));
                }
            }
        }
    }
    Ok(())
}

/// `max_{x,y} |[V(x), V(y)] - k(x, y)|` entrywise.
pub fn verify_linearisation(dec: &KolmogorovDecomposition, k: &Kernel) -> Result<f64, DilationError> {
    if dec.m() != k.m() || dec.d() != k.d() || dec.v.nrows() != k.m() || dec.v.ncols() != dec.n() {
        return Err(DilationError::DimensionMismatch(format!(
            "decomposition is {} points x {} dims (d = {}), kernel has {} points (d = {})",
            dec.v.nrows(),
            dec.v.ncols(),
            dec.d(),
            k.m(),
            k.d()
        )));
    }
    let mut worst = 0.0_f64;
    for x in 0..k.m() {
        let vx = dec.coords(x);
        for y in 0..k.m() {
            worst = worst.max(dec.pair(&vx, &dec.coords(y)).max_abs_diff(k.get(x, y)));
        }
    }
    Ok(worst)
}

/// Matrices of `pi(xi)` in the decomposition basis, with law defects.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StarRepresentation {
    #[serde(serialize_with = "serialize_matrices")]
    pub matrices: Vec<CMat>,
    pub mult_defect: f64,
    pub star_defect: f64,
    pub intertwine_defect: f64,
}

fn serialize_matrices<S: Serializer>(ms: &[CMat], s: S) -> Result<S::Ok, S::Error> {
    let wrapped: Vec<MatrixJson<'_>> = ms.iter().map(MatrixJson).collect();
    wrapped.serialize(s)
}

impl StarRepresentation {
    pub fn matrix(&self, xi: usize) -> &CMat {
        &self.matrices[xi]
    }

    pub fn max_defect(&self) -> f64 {
        self.mult_defect.max(self.star_defect).max(self.intertwine_defect)
    }
}

/// `max_{a,b} ||P(ab) - P(a) P(b)||`.
pub(crate) fn mult_defect(s: &StarSemigroup, mats: &[CMat]) -> f64 {
    let mut worst = 0.0_f64;
    for a in 0..s.size() {
        for b in 0..s.size() {
            let diff = &mats[s.mul(a, b)] - &mats[a] * &mats[b];
            worst = worst.max(linalg::op_norm(&diff));
        }
    }
    worst
}

/// `max |[P(xi) e_i, e_j] - [e_i, P(xi*) e_j]|` over basis pairs.
pub(crate) fn star_defect(s: &StarSemigroup, mats: &[CMat], gram: &GramTensor) -> f64 {
    let n = gram.n();
    let mut worst = 0.0_f64;
    for xi in 0..s.size() {
        let p = &mats[xi];
        let ps = &mats[s.star(xi)];
        for i in 0..n {
            let pe_i = p.column(i).into_owned();
            let e_i = unit(n, i);
            for j in 0..n {
                let lhs = gram.pair(&pe_i, &unit(n, j)).expect("length n");
                let rhs = gram.pair(&e_i, &ps.column(j).into_owned()).expect("length n");
                worst = worst.max(lhs.max_abs_diff(&rhs));
            }
        }
    }
    worst
}

pub(crate) fn unit(n: usize, i: usize) -> CVec {
    let mut e = CVec::zeros(n);
    e[i] = ONE;
    e
}

fn first_violation(k: &Kernel, s: &StarSemigroup, a: &Action, tol: f64) -> Result<(), DilationError> {
    match k.invariance_violations(s, a, tol)?.into_iter().next() {
        Some(v) => Err(DilationError::NotInvariant(v)),
        None => Ok(()),
    }
}

/// `pi(xi)` on generators: `pi(xi) V(x) = V(xi . x)`.
pub fn build_representation(
    dec: &KolmogorovDecomposition,
    k: &Kernel,
    s: &StarSemigroup,
    a: &Action,
    tol: f64,
) -> Result<StarRepresentation, DilationError> {
    if dec.m() != k.m() {
        return Err(DilationError::DimensionMismatch(format!(
            "decomposition has {} points, kernel has {}",
            dec.m(),
            k.m()
        )));
    }
    first_violation(k, s, a, tol * k.scale())?;
    let n = dec.n();
    let pivots = &dec.space.pivot_points;
    let matrices: Vec<CMat> = (0..s.size())
        .map(|xi| {
            let mut p = CMat::zeros(n, n);
            for (i, &pi) in pivots.iter().enumerate() {
                p.set_column(i, &dec.coords(a.apply(xi, pi)));
            }
            p
        })
        .collect();

    let mut intertwine = 0.0_f64;
    for (xi, p) in matrices.iter().enumerate() {
        for x in 0..k.m() {
            let diff = p * dec.coords(x) - dec.coords(a.apply(xi, x));
            intertwine = intertwine.max(linalg::max_abs_vec(&diff));
        }
    }
    push_forward_check(dec, k, a, &matrices, tol)?;
    Ok(StarRepresentation {
        mult_defect: mult_defect(s, &matrices),
        star_defect: star_defect(s, &matrices, dec.gram()),
        intertwine_defect: intertwine,
        matrices,
    })
}

/// Compares `pi(xi) K g` with `K g_xi`, `g_xi(z) = sum_{xi.x = z} g(x)`, as realised functions.
fn push_forward_check(
    dec: &KolmogorovDecomposition,
    k: &Kernel,
    a: &Action,
    matrices: &[CMat],
    tol: f64,
) -> Result<(), DilationError> {
    let m = k.m();
    if m == 0 {
        return Ok(());
    }
    let cols = k.column_matrix();
    let threshold = tol.sqrt();
    for (xi, p) in matrices.iter().enumerate() {
        let g = random_unit_vector(&mut restart_rng(0x5eed, xi), m);
        let mut g_xi = CVec::zeros(m);
        for x in 0..m {
            g_xi[a.apply(xi, x)] += g[x];
        }
        let image = &dec.space.basis_functions * (p * (dec.generator_matrix() * &g));
        let expect = &cols * &g_xi;
        let defect = linalg::max_abs_vec(&(&image - &expect));
        if defect > threshold * (1.0 + linalg::max_abs_vec(&expect)) {
            return Err(DilationError::IllDefined { element: xi, defect });
        }
    }
    Ok(())
}

/// Which domination inequality a bound refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize, Default)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum BoundForm {
    /// `M_alpha(t) <= c^2 M(t)` in the order of `Z`.
    #[default]
    Order,
    /// `p(M_alpha(t)) <= c^2 q(M(t))`.
    Seminorm { p: SeminormTag, q: SeminormTag },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
pub struct BoundOptions {
    pub restarts: usize,
    pub max_iters: usize,
    pub seed: u64,
    /// Denominators below `tol * scale` are skipped.
    pub tol: f64,
    /// Range cutoff of the pencil denominator, relative to its largest eigenvalue.
    pub rank_tol: f64,
}

impl Default for BoundOptions {
    fn default() -> Self {
        Self { restarts: 16, max_iters: 100, seed: 0, tol: 1e-9, rank_tol: 1e-8 }
    }
}

/// Bracket `[lower, upper]` for the smallest admissible `c(alpha)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundEstimate {
    pub element: usize,
    #[serde(flatten)]
    pub form: BoundForm,
    pub lower: f64,
    /// Infinite (serialised as `null`) when no finite bound could be certified.
    pub upper: f64,
    #[serde(serialize_with = "crate::json::serialize_vector")]
    pub witness_t: CVec,
    #[serde(serialize_with = "serialize_opt_vector")]
    pub witness_h: Option<CVec>,
}

fn serialize_opt_vector<S: Serializer>(v: &Option<CVec>, s: S) -> Result<S::Ok, S::Error> {
    v.as_ref().map(crate::json::VectorJson).serialize(s)
}

impl BoundEstimate {
    pub fn is_consistent(&self, tol: f64) -> bool {
        self.lower <= self.upper + tol
    }

    /// Recomputes the witness ratio from the raw kernel.
    pub fn witness_ratio(&self, k: &Kernel, a: &Action) -> f64 {
        let ka = translated_kernel(k, a, self.element);
        match (self.form, &self.witness_h) {
            (BoundForm::Order, Some(h)) => k_ratio(&ka, k, &self.witness_t, h).map_or(0.0, |(num, den)| num / den),
            (BoundForm::Seminorm { p, q }, _) => {
                let den = k.weighted_sum(&self.witness_t).seminorm(q);
                if den == 0.0 {
                    0.0
                } else {
                    ka.weighted_sum(&self.witness_t).seminorm(p) / den
                }
            }
            _ => 0.0,
        }
    }
}

/// `(x, y) -> k(alpha . x, alpha . y)`.
pub fn translated_kernel(k: &Kernel, a: &Action, alpha: usize) -> Kernel {
    Kernel::from_fn(*k.space(), k.m(), |x, y| k.get(a.apply(alpha, x), a.apply(alpha, y)).clone())
}

fn k_ratio(ka: &Kernel, k: &Kernel, t: &CVec, h: &CVec) -> Option<(f64, f64)> {
    let den = k.probe(t, h).re;
    let num = ka.probe(t, h).re;
    Some((num, den))
}

struct Candidate {
    ratio: f64,
    t: CVec,
    h: CVec,
}

/// Lower bound by alternating generalised eigenproblems over `t` and `h`; upper
/// bound from full-order domination of the block matrices.
pub fn bound_constant(
    k: &Kernel,
    s: &StarSemigroup,
    a: &Action,
    alpha: usize,
    form: BoundForm,
    opts: &BoundOptions,
) -> Result<BoundEstimate, DilationError> {
    a.check_shape(s, k.m())?;
    if alpha >= s.size() {
        return Err(DilationError::DimensionMismatch(format!("element {alpha} out of range")));
    }
    if k.max_abs() == 0.0 {
        return Err(DilationError::ZeroDenominatorOnly);
    }
    let scale = k.scale();
    let ka = translated_kernel(k, a, alpha);
    let g = k.block_matrix();
    let ga = ka.block_matrix();
    let pencil = linalg::pencil_max(&ga, &g, opts.rank_tol);

    let upper_sq = match &pencil {
        Some(p) if p.den_min_eig >= -opts.tol && p.null_leak <= opts.tol.sqrt() * scale => p.value.max(0.0),
        _ => f64::INFINITY,
    };

    let mut seeds: Vec<CVec> = Vec::new();
    if let Some(p) = &pencil {
        seeds.push(rank_one_t(&p.vector, k.m(), k.d()));
    }
    let order = search_order(k, &ka, &seeds, scale, opts);

    let (lower_sq, t, h, upper_sq) = match form {
        BoundForm::Order => (order.ratio, order.t, Some(order.h), upper_sq),
        BoundForm::Seminorm { p, q } => {
            let factor = if (p, q) == (SeminormTag::TraceNorm, SeminormTag::OperatorNorm) { k.d() as f64 } else { 1.0 };
            let (ratio, t) = search_seminorm(k, &ka, p, q, &order.t, scale, opts);
            (ratio, t, None, upper_sq * factor)
        }
    };
    Ok(BoundEstimate {
        element: alpha,
        form,
        lower: lower_sq.max(0.0).sqrt(),
        upper: upper_sq.sqrt(),
        witness_t: t,
        witness_h: h,
    })
}

/// Leading `t` of the best rank-one approximation `t (x) h` of an `m d` vector.
fn rank_one_t(w: &CVec, m: usize, d: usize) -> CVec {
    let mat = CMat::from_fn(m, d, |x, a| w[x * d + a]);
    linalg::svd(&mat).u.column(0).into_owned()
}

fn evaluate(ka: &Kernel, k: &Kernel, t: &CVec, h: &CVec, floor: f64) -> Option<f64> {
    let (num, den) = k_ratio(ka, k, t, h)?;
    let norm = t.norm_squared() * h.norm_squared();
    (den >= floor * norm && norm > 0.0).then(|| num / den)
}

fn search_order(k: &Kernel, ka: &Kernel, seeds: &[CVec], scale: f64, opts: &BoundOptions) -> Candidate {
    let floor = opts.tol * scale;
    let restarts = opts.restarts.max(1);
    let starts: Vec<CVec> = seeds
        .iter()
        .cloned()
        .chain((0..restarts).map(|r| random_unit_vector(&mut restart_rng(opts.seed, r), k.m())))
        .collect();
    let results: Vec<Candidate> =
        starts.into_par_iter().map(|t0| alternate_ratio(k, ka, t0, floor, opts.max_iters)).collect();
    results.into_iter().reduce(|best, c| if c.ratio > best.ratio { c } else { best }).expect("at least one start")
}

fn alternate_ratio(k: &Kernel, ka: &Kernel, mut t: CVec, floor: f64, max_iters: usize) -> Candidate {
    let d = k.d();
    let mut best = Candidate { ratio: f64::NEG_INFINITY, t: t.clone(), h: unit(d, 0) };
    for _ in 0..max_iters {
        let Some(ph) = linalg::pencil_max(&ka.weighted_sum(&t).0, &k.weighted_sum(&t).0, 1e-10) else { break };
        let h = ph.vector.normalize();
        let wh = CMat::from_fn(k.m(), k.m(), |x, y| k.get(x, y).quadratic(&h));
        let wah = CMat::from_fn(k.m(), k.m(), |x, y| ka.get(x, y).quadratic(&h));
        let next_t = match linalg::pencil_max(&wah, &wh, 1e-10) {
            Some(pt) => pt.vector.normalize(),
            None => t.clone(),
        };
        let ratio =
            evaluate(ka, k, &next_t, &h, floor).or_else(|| evaluate(ka, k, &t, &h, floor)).unwrap_or(f64::NEG_INFINITY);
        let improved = ratio - best.ratio;
        if ratio > best.ratio {
            best = Candidate { ratio, t: next_t.clone(), h: linalg::phase_normalize(&h) };
        }
        t = next_t;
        if improved.is_finite() && improved < 1e-12 {
            break;
        }
    }
    if !best.ratio.is_finite() {
        best.ratio = 0.0;
    }
    best
}

fn search_seminorm(
    k: &Kernel,
    ka: &Kernel,
    p: SeminormTag,
    q: SeminormTag,
    order_t: &CVec,
    scale: f64,
    opts: &BoundOptions,
) -> (f64, CVec) {
    let floor = opts.tol * scale;
    let ratio = |t: &CVec| {
        let den = k.weighted_sum(t).seminorm(q);
        (den >= floor * t.norm_squared()).then(|| ka.weighted_sum(t).seminorm(p) / den)
    };
    let mut best = (ratio(order_t).unwrap_or(0.0), order_t.clone());
    for r in 0..opts.restarts.max(1) {
        let t = random_unit_vector(&mut restart_rng(opts.seed ^ 0x9e37_79b9, r), k.m());
        if let Some(v) = ratio(&t) {
            if v > best.0 {
                best = (v, t);
            }
        }
    }
    best
}

/// Isometry `U` with `U V1(x) = V2(x)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Equivalence {
    #[serde(serialize_with = "serialize_matrix")]
    pub u: CMat,
    pub isometry_defect: f64,
    pub intertwine_defect: f64,
}

pub fn unitary_equivalence(
    dec1: &KolmogorovDecomposition,
    dec2: &KolmogorovDecomposition,
    tol: f64,
) -> Result<Equivalence, DilationError> {
    if dec1.m() != dec2.m() || dec1.d() != dec2.d() {
        return Err(DilationError::DimensionMismatch("decompositions live on different point sets".into()));
    }
    if dec1.n() != dec2.n() {
        return Err(DilationError::NoIsometry { isometry_defect: f64::INFINITY, intertwine_defect: f64::INFINITY });
    }
    let n = dec1.n();
    let a1 = dec1.generator_matrix();
    let a2 = dec2.generator_matrix();
    let u = &a2 * linalg::pinv(&a1, 1e-12);
    let mut isometry = 0.0_f64;
    for i in 0..n {
        let ui = u.column(i).into_owned();
        for j in 0..n {
            let lhs = dec2.pair(&ui, &u.column(j).into_owned());
            isometry = isometry.max(lhs.max_abs_diff(dec1.gram().block(i, j)));
        }
    }
    let intertwine = if n == 0 { 0.0 } else { linalg::max_abs_diff(&(&u * &a1), &a2) };
    if isometry > tol || intertwine > tol {
        return Err(DilationError::NoIsometry { isometry_defect: isometry, intertwine_defect: intertwine });
    }
    Ok(Equivalence { u, isometry_defect: isometry, intertwine_defect: intertwine })
}

/// Checks `pi(alpha) + pi(beta) = pi(gamma)` after confirming the kernel identity
/// `k(y, alpha.x) + k(y, beta.x) = k(y, gamma.x)`.
#[allow(clippy::too_many_arguments)]
pub fn linearity_preservation_check(
    rep: &StarRepresentation,
    k: &Kernel,
    s: &StarSemigroup,
    a: &Action,
    alpha: usize,
    beta: usize,
    gamma: usize,
    tol: f64,
) -> Result<bool, DilationError> {
    a.check_shape(s, k.m())?;
    for x in 0..k.m() {
        for y in 0..k.m() {
            let sum = k.get(y, a.apply(alpha, x)) + k.get(y, a.apply(beta, x));
            let defect = sum.max_abs_diff(k.get(y, a.apply(gamma, x)));
            if defect > tol {
                return Err(DilationError::HypothesisFails { x, y, defect });
            }
        }
    }
    let diff = &rep.matrices[alpha] + &rep.matrices[beta] - &rep.matrices[gamma];
    Ok(linalg::op_norm(&diff) <= tol)
}

/// Reverse scan order, for building a second minimal decomposition.
pub fn reversed_pivot_rule(m: usize) -> PivotRule {
    PivotRule::Sequential((0..m).rev().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::{cyclic_group, idempotent_pair, left_regular_action, trivial_action, CyclicInvolution};
    use crate::kernels::{random_block_psd_kernel, random_hermitian_kernel, swap_kernel};
    use crate::linalg::{C64, ZERO};
    use crate::zspace::ZSpace;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn circulant(n: usize, phi: &[C64]) -> Kernel {
        Kernel::from_fn(ZSpace::scalar(), n, |x, y| ZElement::scalar(phi[(y + n - x) % n]))
    }

    #[test]
    fn all_ones_kernel_has_dimension_one() {
        let k = Kernel::scalar_real(2, &[1.0; 4]);
        let dec = build_kolmogorov(&k, &KolmogorovOptions::default()).unwrap();
        assert_eq!(dec.n(), 1);
        assert!((dec.coords(0) - dec.coords(1)).norm() < 1e-14);
        assert_eq!(dec.gram().block(0, 0), &ZElement::real(1.0));
        assert!(verify_linearisation(&dec, &k).unwrap() < 1e-14);
    }

    #[test]
    fn identity_kernel_is_its_own_decomposition() {
        let k = Kernel::scalar(&CMat::identity(4, 4));
        let dec = build_kolmogorov(&k, &KolmogorovOptions::default()).unwrap();
        assert_eq!(dec.n(), 4);
        assert!(linalg::max_abs_diff(&dec.gram().block_matrix(), &CMat::identity(4, 4)) < 1e-15);
        assert!(linalg::max_abs_diff(&dec.v, &CMat::identity(4, 4)) < 1e-15);
    }

    #[test]
    fn swap_kernel_decomposition() {
        let k = swap_kernel();
        let dec = build_kolmogorov(&k, &KolmogorovOptions::default()).unwrap();
        assert_eq!(dec.n(), 2);
        for i in 0..2 {
            for j in 0..2 {
                let (x, y) = (dec.space.pivot_points[i], dec.space.pivot_points[j]);
                assert_eq!(dec.gram().block(i, j), &ZElement::unit(2, y, x));
            }
        }
        assert!(dec.residual <= 1e-12);
        assert!(verify_linearisation(&dec, &k).unwrap() <= 1e-12);
    }

    #[test]
    fn round_trip_on_random_gram_kernels() {
        for seed in 0..10 {
            let k = random_block_psd_kernel(5, 2, 3, seed);
            let dec = build_kolmogorov(&k, &KolmogorovOptions::default()).unwrap();
            assert!(verify_linearisation(&dec, &k).unwrap() <= 1e-9);
            assert!(!dec.rank_unstable);
        }
    }

    #[test]
    fn corrupted_decomposition_is_detected() {
        let k = random_block_psd_kernel(3, 2, 2, 8);
        let mut dec = build_kolmogorov(&k, &KolmogorovOptions::default()).unwrap();
        dec.v *= c(2.0, 0.0);
        let defect = verify_linearisation(&dec, &k).unwrap();
        assert!((defect - 3.0 * k.max_abs()).abs() < 1e-9 * k.max_abs());
    }

    #[test]
    fn empty_decomposition_of_zero_kernel() {
        let k = Kernel::from_fn(ZSpace::hermitian(2), 3, |_, _| ZElement::zeros(2));
        let dec = build_kolmogorov(&k, &KolmogorovOptions::default()).unwrap();
        assert_eq!(dec.n(), 0);
        assert_eq!(verify_linearisation(&dec, &k).unwrap(), 0.0);
    }

    #[test]
    fn builder_rejects_bad_kernels() {
        let k = Kernel::scalar_real(2, &[1.0, 2.0, 3.0, 1.0]);
        assert!(matches!(build_kolmogorov(&k, &KolmogorovOptions::default()), Err(DilationError::NotHermitian { .. })));
        let k = Kernel::scalar_real(2, &[1.0, 2.0, 2.0, 1.0]);
        match build_kolmogorov(&k, &KolmogorovOptions::default()) {
            Err(DilationError::WeakPositivityViolated { witness, .. }) => assert!(witness.verify(&k, 1e-9)),
            other => panic!("expected a positivity error, got {other:?}"),
        }
        let k = random_hermitian_kernel(3, 2, 4);
        assert!(matches!(
            build_kolmogorov(&k, &KolmogorovOptions::default()),
            Err(DilationError::WeakPositivityViolated { .. })
        ));
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let dec = build_kolmogorov(&Kernel::scalar_real(1, &[1.0]), &KolmogorovOptions::default()).unwrap();
        assert!(verify_linearisation(&dec, &Kernel::scalar_real(2, &[1.0, 0.0, 0.0, 1.0])).is_err());
    }

    #[test]
    fn cyclic_translation_of_identity_kernel() {
        let s = cyclic_group(3, CyclicInvolution::Inverse).unwrap();
        let a = left_regular_action(&s);
        let k = Kernel::scalar(&CMat::identity(3, 3));
        let dec = build_kolmogorov(&k, &KolmogorovOptions::default()).unwrap();
        let rep = build_representation(&dec, &k, &s, &a, 1e-9).unwrap();
        let p = rep.matrix(1);
        let shift = CMat::from_fn(3, 3, |i, j| if i == (j + 1) % 3 { ONE } else { ZERO });
        assert!(linalg::max_abs_diff(p, &shift) < 1e-15);
        assert!(linalg::max_abs_diff(&(p * p * p), &CMat::identity(3, 3)) < 1e-15);
        assert!(rep.max_defect() < 1e-12);
    }

    #[test]
    fn trivial_semigroup_acts_by_identity() {
        let s = cyclic_group(1, CyclicInvolution::Inverse).unwrap();
        let k = random_block_psd_kernel(3, 2, 2, 1);
        let a = trivial_action(&s, 3);
        let dec = build_kolmogorov(&k, &KolmogorovOptions::default()).unwrap();
        let rep = build_representation(&dec, &k, &s, &a, 1e-9).unwrap();
        assert!(linalg::max_abs_diff(rep.matrix(0), &CMat::identity(dec.n(), dec.n())) < 1e-9);
    }

    #[test]
    fn non_invariant_kernel_rejected() {
        let s = cyclic_group(3, CyclicInvolution::Inverse).unwrap();
        let a = left_regular_action(&s);
        let k = random_block_psd_kernel(3, 1, 3, 2);
        let dec = build_kolmogorov(&k, &KolmogorovOptions::default()).unwrap();
        assert!(matches!(build_representation(&dec, &k, &s, &a, 1e-9), Err(DilationError::NotInvariant(_))));
    }

    #[test]
    fn idempotent_pair_representation_and_bound() {
        let s = idempotent_pair();
        let a = Action::new(vec![vec![0, 1], vec![1, 1]], true);
        let k = Kernel::scalar_real(2, &[4.0, 2.0, 2.0, 2.0]);
        let dec = build_kolmogorov(&k, &KolmogorovOptions::default()).unwrap();
        let rep = build_representation(&dec, &k, &s, &a, 1e-9).unwrap();
        assert!(rep.max_defect() < 1e-12);
        let b = bound_constant(&k, &s, &a, 1, BoundForm::Order, &BoundOptions::default()).unwrap();
        assert!((b.lower - 1.0).abs() < 1e-6 && (b.upper - 1.0).abs() < 1e-6, "{b:?}");
        assert!((b.witness_ratio(&k, &a) - b.lower * b.lower).abs() < 1e-9);
    }

    #[test]
    fn unit_element_bound_is_one() {
        let s = cyclic_group(4, CyclicInvolution::Inverse).unwrap();
        let a = left_regular_action(&s);
        let k = circulant(4, &[c(3.0, 0.0), c(1.0, 0.5), c(0.5, 0.0), c(1.0, -0.5)]);
        for alpha in 0..4 {
            let b = bound_constant(&k, &s, &a, alpha, BoundForm::Order, &BoundOptions::default()).unwrap();
            assert!((b.lower - 1.0).abs() < 1e-6 && (b.upper - 1.0).abs() < 1e-6, "{b:?}");
        }
    }

    #[test]
    fn bounds_bracket_on_matrix_kernels() {
        let s = cyclic_group(1, CyclicInvolution::Inverse).unwrap();
        let a = trivial_action(&s, 3);
        let k = random_block_psd_kernel(3, 2, 4, 6);
        let b = bound_constant(&k, &s, &a, 0, BoundForm::Order, &BoundOptions::default()).unwrap();
        assert!((b.lower - 1.0).abs() < 1e-9 && (b.upper - 1.0).abs() < 1e-9);
        for (p, q) in [
            (SeminormTag::OperatorNorm, SeminormTag::OperatorNorm),
            (SeminormTag::TraceNorm, SeminormTag::OperatorNorm),
            (SeminormTag::OperatorNorm, SeminormTag::TraceNorm),
            (SeminormTag::TraceNorm, SeminormTag::TraceNorm),
        ] {
            let b = bound_constant(&k, &s, &a, 0, BoundForm::Seminorm { p, q }, &BoundOptions::default()).unwrap();
            assert!(b.is_consistent(1e-9), "{b:?}");
        }
    }

    #[test]
    fn zero_kernel_has_no_bound() {
        let s = cyclic_group(1, CyclicInvolution::Inverse).unwrap();
        let k = Kernel::scalar_real(2, &[0.0; 4]);
        let r = bound_constant(&k, &s, &trivial_action(&s, 2), 0, BoundForm::Order, &BoundOptions::default());
        assert_eq!(r.unwrap_err(), DilationError::ZeroDenominatorOnly);
    }

    #[test]
    fn equivalence_with_itself_and_reversed_order() {
        let k = random_block_psd_kernel(5, 1, 3, 21);
        let dec = build_kolmogorov(&k, &KolmogorovOptions::default()).unwrap();
        let eq = unitary_equivalence(&dec, &dec, 1e-8).unwrap();
        assert!(linalg::max_abs_diff(&eq.u, &CMat::identity(dec.n(), dec.n())) < 1e-9);
        let opts = KolmogorovOptions { pivot: reversed_pivot_rule(5), ..Default::default() };
        let rev = build_kolmogorov(&k, &opts).unwrap();
        assert_ne!(rev.space.pivot_points, dec.space.pivot_points);
        let eq = unitary_equivalence(&dec, &rev, 1e-8).unwrap();
        assert!(eq.isometry_defect <= 1e-8 && eq.intertwine_defect <= 1e-8);
    }

    #[test]
    fn different_kernels_are_not_equivalent() {
        let d1 = build_kolmogorov(&random_block_psd_kernel(4, 1, 2, 1), &KolmogorovOptions::default()).unwrap();
        let d2 = build_kolmogorov(&random_block_psd_kernel(4, 1, 2, 2), &KolmogorovOptions::default()).unwrap();
        assert!(matches!(unitary_equivalence(&d1, &d2, 1e-8), Err(DilationError::NoIsometry { .. })));
    }

    #[test]
    fn linearity_preservation() {
        // v_x = w^x on Z_6 with w a primitive sixth root: 1 + w^2 = w
        let n = 6;
        let s = cyclic_group(n, CyclicInvolution::Inverse).unwrap();
        let a = left_regular_action(&s);
        let w = C64::from_polar(1.0, std::f64::consts::TAU / 6.0);
        let k =
            Kernel::from_fn(ZSpace::scalar(), n, |x, y| ZElement::scalar(w.powu(x as u32).conj() * w.powu(y as u32)));
        let dec = build_kolmogorov(&k, &KolmogorovOptions::default()).unwrap();
        let rep = build_representation(&dec, &k, &s, &a, 1e-9).unwrap();
        assert!(linearity_preservation_check(&rep, &k, &s, &a, 0, 2, 1, 1e-9).unwrap());
        assert!(matches!(
            linearity_preservation_check(&rep, &k, &s, &a, 1, 1, 1, 1e-9),
            Err(DilationError::HypothesisFails { .. })
        ));
    }

    #[test]
    fn linearity_on_zero_kernel_is_vacuous() {
        let s = cyclic_group(1, CyclicInvolution::Inverse).unwrap();
        let a = trivial_action(&s, 2);
        let k = Kernel::scalar_real(2, &[0.0; 4]);
        let dec = build_kolmogorov(&k, &KolmogorovOptions::default()).unwrap();
        let rep = build_representation(&dec, &k, &s, &a, 1e-9).unwrap();
        assert!(linearity_preservation_check(&rep, &k, &s, &a, 0, 0, 0, 1e-9).unwrap());
    }

    #[test]
    fn decomposition_json_shape() {
        let dec = build_kolmogorov(&Kernel::scalar_real(2, &[1.0; 4]), &KolmogorovOptions::default()).unwrap();
        let v = serde_json::to_value(&dec).unwrap();
        assert_eq!(v["space"]["n"], 1);
        assert_eq!(v["space"]["pivot_points"], serde_json::json!([0]));
        assert_eq!(v["V"], serde_json::json!([[[1.0, 0.0]], [[1.0, 0.0]]]));
    }
}
