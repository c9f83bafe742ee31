//! Concrete ordered *-spaces and VE-space gramians.
//!
//! Two spaces are supported: the scalars `C` ordered by `R_+`, and `Herm(d)`
//! (elements are `d x d` complex matrices, positive cone = PSD matrices). Both
//! are finite dimensional, so every topological axiom holds trivially and the
//! only things worth checking numerically are the cone, the order and the
//! seminorms.

use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::linalg::{self, CMat, CVec, C64, I, ZERO};

/// Relative slack used for cone membership unless overridden.
pub const DEFAULT_CONE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ZSpaceError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid space descriptor: {0}")]
    InvalidDescriptor(String),
    #[error("non-finite entry in element")]
    NonFinite,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpaceKind {
    Scalar,
    HermitianMatrix,
}

/// Which increasing seminorm on `Z` to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeminormTag {
    #[default]
    OperatorNorm,
    TraceNorm,
}

/// Descriptor of the ordered *-space `Z`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ZSpace {
    kind: SpaceKind,
    dim: usize,
    tolerance: f64,
}

#[derive(Deserialize)]
struct ZSpaceRepr {
    kind: SpaceKind,
    #[serde(default)]
    dim: Option<usize>,
    #[serde(default)]
    tolerance: Option<f64>,
}

impl<'de> Deserialize<'de> for ZSpace {
    fn deserialize<D: Deserializer<'de>>(de: D) -> Result<Self, D::Error> {
        let r = ZSpaceRepr::deserialize(de)?;
        let dim = r.dim.unwrap_or(1);
        ZSpace::new(r.kind, dim, r.tolerance.unwrap_or(DEFAULT_CONE_TOLERANCE)).map_err(serde::de::Error::custom)
    }
}

impl ZSpace {
    pub fn new(kind: SpaceKind, dim: usize, tolerance: f64) -> Result<Self, ZSpaceError> {
        if dim == 0 {
            return Err(ZSpaceError::InvalidDescriptor("dim must be at least 1".into()));
        }
        if kind == SpaceKind::Scalar && dim != 1 {
            return Err(ZSpaceError::InvalidDescriptor("scalar space has dim 1".into()));
        }
        if !tolerance.is_finite() || tolerance < 0.0 {
            return Err(ZSpaceError::InvalidDescriptor("tolerance must be finite and >= 0".into()));
        }
        Ok(Self { kind, dim, tolerance })
    }

    pub fn scalar() -> Self {
        Self { kind: SpaceKind::Scalar, dim: 1, tolerance: DEFAULT_CONE_TOLERANCE }
    }

    /// `Herm(d)`; `d = 1` is still reported as a matrix space.
    pub fn hermitian(dim: usize) -> Self {
        assert!(dim >= 1, "Herm(d) needs d >= 1");
        Self { kind: SpaceKind::HermitianMatrix, dim, tolerance: DEFAULT_CONE_TOLERANCE }
    }

    /// Scalar space for `d = 1`, `Herm(d)` otherwise.
    pub fn for_dim(dim: usize) -> Self {
        if dim == 1 {
            Self::scalar()
        } else {
            Self::hermitian(dim)
        }
    }

    pub fn with_tolerance(mut self, tolerance: f64) -> Self {
        self.tolerance = tolerance.max(0.0);
        self
    }

    pub fn kind(&self) -> SpaceKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn tolerance(&self) -> f64 {
        self.tolerance
    }

    pub fn zero(&self) -> ZElement {
        ZElement::zeros(self.dim)
    }

    pub fn identity(&self) -> ZElement {
        ZElement::identity(self.dim)
    }

    /// Scale-aware slack `tolerance * (1 + ||z||)`.
    pub fn slack(&self, z: &ZElement) -> f64 {
        self.tolerance * (1.0 + z.seminorm(SeminormTag::OperatorNorm))
    }

    pub fn is_selfadjoint(&self, z: &ZElement) -> bool {
        z.hermitian_defect() <= self.slack(z)
    }

    /// `z` is selfadjoint and its spectrum lies in `[-slack, inf)`.
    pub fn in_cone(&self, z: &ZElement) -> bool {
        let slack = self.slack(z);
        z.hermitian_defect() <= slack && linalg::min_eigenvalue(&z.0) >= -slack
    }

    /// `a <= b` in the cone order.
    pub fn leq(&self, a: &ZElement, b: &ZElement) -> bool {
        self.in_cone(&(b - a))
    }

    pub fn check(&self, z: &ZElement) -> Result<(), ZSpaceError> {
        if z.dim() != self.dim {
            return Err(ZSpaceError::DimensionMismatch { expected: self.dim, got: z.dim() });
        }
        if !z.is_finite() {
            return Err(ZSpaceError::NonFinite);
        }
        Ok(())
    }
}

/// An element of `Z`, stored as a square complex matrix (1 x 1 for scalars).
#[derive(Debug, Clone, PartialEq)]
pub struct ZElement(pub CMat);

impl ZElement {
    pub fn from_matrix(m: CMat) -> Self {
        assert_eq!(m.nrows(), m.ncols(), "Z elements are square");
        Self(m)
    }

    pub fn scalar(z: C64) -> Self {
        Self(CMat::from_element(1, 1, z))
    }

    pub fn real(x: f64) -> Self {
        Self::scalar(C64::new(x, 0.0))
    }

    pub fn zeros(d: usize) -> Self {
        Self(CMat::zeros(d, d))
    }

    pub fn identity(d: usize) -> Self {
        Self(CMat::identity(d, d))
    }

    /// Matrix unit `E_{ij}`.
    pub fn unit(d: usize, i: usize, j: usize) -> Self {
        let mut m = CMat::zeros(d, d);
        m[(i, j)] = linalg::ONE;
        Self(m)
    }

    pub fn from_real_diagonal(diag: &[f64]) -> Self {
        let d = diag.len();
        let mut m = CMat::zeros(d, d);
        for (i, &x) in diag.iter().enumerate() {
            m[(i, i)] = C64::new(x, 0.0);
        }
        Self(m)
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &CMat {
        &self.0
    }

    pub fn into_matrix(self) -> CMat {
        self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// Conjugate transpose.
    pub fn involution(&self) -> ZElement {
        Self(self.0.adjoint())
    }

    /// `max |z - z*|` entrywise.
    pub fn hermitian_defect(&self) -> f64 {
        linalg::max_abs_diff(&self.0, &self.0.adjoint())
    }

    pub fn seminorm(&self, tag: SeminormTag) -> f64 {
        let s = linalg::singular_values(&self.0);
        match tag {
            SeminormTag::OperatorNorm => s.first().copied().unwrap_or(0.0),
            SeminormTag::TraceNorm => s.iter().sum(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        linalg::max_abs(&self.0)
    }

    pub fn max_abs_diff(&self, other: &ZElement) -> f64 {
        linalg::max_abs_diff(&self.0, &other.0)
    }

    pub fn scale(&self, c: C64) -> ZElement {
        Self(self.0.map(|z| z * c))
    }

    /// `<h, z h>` for a direction `h` in `C^d`.
    pub fn quadratic(&self, h: &CVec) -> C64 {
        h.dotc(&(&self.0 * h))
    }
}

/// Conjugate transpose of `z`.
pub fn involution(z: &ZElement) -> ZElement {
    z.involution()
}

/// Seminorm of `z` for the given tag.
pub fn seminorm(z: &ZElement, tag: SeminormTag) -> f64 {
    z.seminorm(tag)
}

impl Add for &ZElement {
    type Output = ZElement;
    fn add(self, rhs: &ZElement) -> ZElement {
        ZElement(&self.0 + &rhs.0)
    }
}

impl Sub for &ZElement {
    type Output = ZElement;
    fn sub(self, rhs: &ZElement) -> ZElement {
        ZElement(&self.0 - &rhs.0)
    }
}

impl Neg for &ZElement {
    type Output = ZElement;
    fn neg(self) -> ZElement {
        ZElement(-&self.0)
    }
}

impl Mul<C64> for &ZElement {
    type Output = ZElement;
    fn mul(self, rhs: C64) -> ZElement {
        self.scale(rhs)
    }
}

impl Serialize for ZElement {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        crate::json::serialize_matrix(&self.0, s)
    }
}

impl<'de> Deserialize<'de> for ZElement {
    fn deserialize<D: Deserializer<'de>>(de: D) -> Result<Self, D::Error> {
        let m = crate::json::deserialize_element(de)?;
        Ok(ZElement(m))
    }
}

/// Block table of a finite-dimensional VE-space gramian: `blocks[i][j] = [b_i, b_j]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GramTensor {
    n: usize,
    d: usize,
    blocks: Vec<ZElement>,
}

impl GramTensor {
    /// `blocks` in row-major order, `n * n` entries of dimension `d`.
    pub fn new(n: usize, d: usize, blocks: Vec<ZElement>) -> Result<Self, ZSpaceError> {
        if blocks.len() != n * n {
            return Err(ZSpaceError::DimensionMismatch { expected: n * n, got: blocks.len() });
        }
        if let Some(b) = blocks.iter().find(|b| b.dim() != d) {
            return Err(ZSpaceError::DimensionMismatch { expected: d, got: b.dim() });
        }
        Ok(Self { n, d, blocks })
    }

    pub fn from_fn(n: usize, d: usize, mut f: impl FnMut(usize, usize) -> ZElement) -> Self {
        let mut blocks = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                blocks.push(f(i, j));
            }
        }
        Self { n, d, blocks }
    }

    /// `blocks[i][j] = delta_ij * 1_Z`.
    pub fn identity(n: usize, d: usize) -> Self {
        Self::from_fn(n, d, |i, j| if i == j { ZElement::identity(d) } else { ZElement::zeros(d) })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn block(&self, i: usize, j: usize) -> &ZElement {
        &self.blocks[i * self.n + j]
    }

    pub fn blocks(&self) -> &[ZElement] {
        &self.blocks
    }

    /// `nd x nd` matrix whose `(i, j)` block is `blocks[i][j]`.
    pub fn block_matrix(&self) -> CMat {
        let (n, d) = (self.n, self.d);
        let mut out = CMat::zeros(n * d, n * d);
        for i in 0..n {
            for j in 0..n {
                out.view_mut((i * d, j * d), (d, d)).copy_from(&self.block(i, j).0);
            }
        }
        out
    }

    /// Largest entrywise distance between `blocks[i][j]` and `blocks[j][i]*`.
    pub fn hermitian_defect(&self) -> f64 {
        let mut worst = 0.0_f64;
        for i in 0..self.n {
            for j in 0..self.n {
                worst = worst.max(self.block(i, j).max_abs_diff(&self.block(j, i).involution()));
            }
        }
        worst
    }

    fn check_len(&self, v: &CVec) -> Result<(), ZSpaceError> {
        if v.len() != self.n {
            return Err(ZSpaceError::DimensionMismatch { expected: self.n, got: v.len() });
        }
        Ok(())
    }

    /// `sum_{i,j} conj(u_i) v_j blocks[i][j]`.
    pub fn pair(&self, u: &CVec, v: &CVec) -> Result<ZElement, ZSpaceError> {
        self.check_len(u)?;
        self.check_len(v)?;
        let mut acc = CMat::zeros(self.d, self.d);
        for i in 0..self.n {
            if u[i] == ZERO {
                continue;
            }
            for j in 0..self.n {
                let c = u[i].conj() * v[j];
                if c != ZERO {
                    acc += self.block(i, j).0.map(|z| z * c);
                }
            }
        }
        Ok(ZElement(acc))
    }

    /// Entrywise distance between `4 [u, v]` and `sum_k i^{-k} [u + i^k v, u + i^k v]`.
    ///
    /// The phase is `i^{-k}` because the pairing is conjugate linear in its first slot;
    /// with `i^k` the sum is `4 [v, u]`.
    pub fn polarisation_defect(&self, u: &CVec, v: &CVec) -> Result<f64, ZSpaceError> {
        let lhs = self.pair(u, v)?.scale(C64::new(4.0, 0.0));
        let mut rhs = CMat::zeros(self.d, self.d);
        let mut ik = linalg::ONE;
        for _ in 0..4 {
            let w = u + v * ik;
            rhs += self.pair(&w, &w)?.0.map(|z| z * ik.conj());
            ik *= I;
        }
        Ok(linalg::max_abs_diff(&lhs.0, &rhs))
    }

    /// Checks `p([u,v]) <= 4 p([u,u])^{1/2} p([v,v])^{1/2}`.
    pub fn schwarz_check(&self, u: &CVec, v: &CVec, tag: SeminormTag, tol: f64) -> Result<SchwarzCheck, ZSpaceError> {
        let lhs = self.pair(u, v)?.seminorm(tag);
        let puu = self.pair(u, u)?.seminorm(tag);
        let pvv = self.pair(v, v)?.seminorm(tag);
        let rhs = 4.0 * puu.sqrt() * pvv.sqrt();
        Ok(SchwarzCheck { lhs, rhs, holds: lhs <= rhs + tol })
    }

    /// `p([u,u])^{1/2}`.
    pub fn ve_seminorm(&self, u: &CVec, tag: SeminormTag) -> Result<f64, ZSpaceError> {
        Ok(self.pair(u, u)?.seminorm(tag).sqrt())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SchwarzCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

impl SchwarzCheck {
    /// `lhs / rhs`, or zero when both vanish.
    pub fn ratio(&self) -> f64 {
        if self.rhs > 0.0 {
            self.lhs / self.rhs
        } else {
            0.0
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::ONE;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn nilpotent() -> ZElement {
        ZElement::unit(2, 0, 1)
    }

    #[test]
    fn involution_examples() {
        assert_eq!(involution(&nilpotent()), ZElement::unit(2, 1, 0));
        assert_eq!(involution(&ZElement::scalar(c(2.0, -3.0))), ZElement::scalar(c(2.0, 3.0)));
        let h =
            ZElement::from_matrix(CMat::from_row_slice(2, 2, &[c(1.0, 0.0), c(2.0, 1.0), c(2.0, -1.0), c(-3.0, 0.0)]));
        assert_eq!(involution(&h), h);
    }

    #[test]
    fn cone_examples() {
        let z = ZSpace::hermitian(2);
        assert!(z.in_cone(&ZElement::identity(2)));
        assert!(!z.in_cone(&ZElement::from_real_diagonal(&[1.0, -1.0])));
        assert!(!z.in_cone(&nilpotent()));
    }

    #[test]
    fn order_examples() {
        let z = ZSpace::hermitian(2);
        let (zero, one) = (z.zero(), z.identity());
        assert!(z.leq(&zero, &one));
        assert!(!z.leq(&one, &zero));
        assert!(z.leq(&nilpotent(), &nilpotent()));
    }

    #[test]
    fn seminorm_examples() {
        let a = ZElement::from_real_diagonal(&[3.0, -1.0]);
        assert!((seminorm(&a, SeminormTag::OperatorNorm) - 3.0).abs() < 1e-12);
        assert!((seminorm(&a, SeminormTag::TraceNorm) - 4.0).abs() < 1e-12);
        assert_eq!(seminorm(&ZElement::zeros(2), SeminormTag::OperatorNorm), 0.0);
    }

    #[test]
    fn descriptor_validation() {
        assert!(ZSpace::new(SpaceKind::Scalar, 2, 1e-9).is_err());
        assert!(ZSpace::new(SpaceKind::HermitianMatrix, 0, 1e-9).is_err());
        assert!(ZSpace::new(SpaceKind::HermitianMatrix, 2, -1.0).is_err());
        let s: ZSpace = serde_json::from_str(r#"{"kind":"hermitian_matrix","dim":3}"#).unwrap();
        assert_eq!(s.dim(), 3);
        assert!(serde_json::from_str::<ZSpace>(r#"{"kind":"scalar","dim":2}"#).is_err());
    }

    #[test]
    fn gram_pair_examples() {
        let g = GramTensor::identity(3, 2);
        let e1 = CVec::from_vec(vec![ONE, ZERO, ZERO]);
        assert_eq!(g.pair(&e1, &e1).unwrap(), ZElement::identity(2));
        let zero = CVec::zeros(3);
        assert_eq!(g.pair(&zero, &e1).unwrap(), ZElement::zeros(2));
        assert!(matches!(g.pair(&CVec::zeros(2), &e1), Err(ZSpaceError::DimensionMismatch { .. })));
    }

    #[test]
    fn ve_seminorm_examples() {
        let g = GramTensor::identity(2, 2);
        let e1 = CVec::from_vec(vec![ONE, ZERO]);
        assert!((g.ve_seminorm(&e1, SeminormTag::OperatorNorm).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(g.ve_seminorm(&CVec::zeros(2), SeminormTag::OperatorNorm).unwrap(), 0.0);
    }

    #[test]
    fn schwarz_degenerate_cases() {
        let g = GramTensor::identity(2, 2);
        let u = CVec::from_vec(vec![c(1.0, 1.0), c(0.5, 0.0)]);
        let same = g.schwarz_check(&u, &u, SeminormTag::OperatorNorm, 1e-12).unwrap();
        assert!(same.holds && (same.rhs - 4.0 * same.lhs).abs() < 1e-12);
        let zero = g.schwarz_check(&u, &CVec::zeros(2), SeminormTag::OperatorNorm, 1e-12).unwrap();
        assert_eq!((zero.lhs, zero.rhs, zero.holds), (0.0, 0.0, true));
    }

    fn arb_c() -> impl Strategy<Value = C64> {
        (-10.0..10.0f64, -10.0..10.0f64).prop_map(|(a, b)| c(a, b))
    }

    fn arb_matrix(d: usize) -> impl Strategy<Value = CMat> {
        prop::collection::vec(arb_c(), d * d).prop_map(move |v| CMat::from_row_slice(d, d, &v))
    }

    fn arb_gram(n: usize, d: usize) -> impl Strategy<Value = GramTensor> {
        // F* F with F of shape (r, n d) gives a block-PSD gram
        prop::collection::vec(arb_c(), 2 * n * d).prop_map(move |v| {
            let f = CMat::from_row_slice(2, n * d, &v);
            let big = f.adjoint() * f;
            GramTensor::from_fn(n, d, |i, j| ZElement(big.view((i * d, j * d), (d, d)).into_owned()))
        })
    }

    fn arb_vec(n: usize) -> impl Strategy<Value = CVec> {
        prop::collection::vec(arb_c(), n).prop_map(CVec::from_vec)
    }

    proptest! {
        #[test]
        fn involution_is_involutive(m in arb_matrix(3)) {
            let z = ZElement(m);
            prop_assert_eq!(z.involution().involution(), z);
        }

        #[test]
        fn seminorms_are_increasing(a in arb_matrix(2), b in arb_matrix(2), tag_tr in any::<bool>()) {
            let tag = if tag_tr { SeminormTag::TraceNorm } else { SeminormTag::OperatorNorm };
            let x = ZElement(&a * a.adjoint());
            let y = &x + &ZElement(&b * b.adjoint());
            let space = ZSpace::hermitian(2);
            prop_assert!(space.leq(&x, &y));
            prop_assert!(x.seminorm(tag) <= y.seminorm(tag) + 1e-12 * (1.0 + y.seminorm(tag)));
        }

        #[test]
        fn cone_is_strict(a in arb_matrix(2), eps in 1e-14..1e-10f64) {
            let space = ZSpace::hermitian(2);
            let h = crate::linalg::hermitian_part(&a);
            let z = ZElement(h.scale(eps / (1.0 + crate::linalg::op_norm(&h))));
            if space.in_cone(&z) && space.in_cone(&-&z) {
                prop_assert!(z.seminorm(SeminormTag::OperatorNorm) <= 2.0 * space.slack(&z));
            }
        }

        #[test]
        fn gram_pair_symmetry_and_sesquilinearity(
            g in arb_gram(3, 2), u in arb_vec(3), v in arb_vec(3), w in arb_vec(3), a in arb_c(),
        ) {
            let uv = g.pair(&u, &v).unwrap();
            let vu = g.pair(&v, &u).unwrap();
            prop_assert!(uv.max_abs_diff(&vu.involution()) <= 1e-9 * (1.0 + uv.max_abs()));
            let lin = g.pair(&u, &(&v * a + &w)).unwrap();
            let expect = &(&uv * a) + &g.pair(&u, &w).unwrap();
            prop_assert!(lin.max_abs_diff(&expect) <= 1e-9 * (1.0 + lin.max_abs()));
            let conj = g.pair(&(&u * a), &v).unwrap();
            prop_assert!(conj.max_abs_diff(&(&uv * a.conj())) <= 1e-9 * (1.0 + conj.max_abs()));
        }

        #[test]
        fn polarisation_holds(g in arb_gram(3, 2), u in arb_vec(3), v in arb_vec(3)) {
            // entries bounded by 10, so the sums stay well inside f64 precision
            let scale = 1.0 + g.pair(&u, &u).unwrap().max_abs() + g.pair(&v, &v).unwrap().max_abs();
            prop_assert!(g.polarisation_defect(&u, &v).unwrap() <= 1e-10 * scale);
        }

        #[test]
        fn ve_seminorm_is_homogeneous(g in arb_gram(2, 2), u in arb_vec(2), lam in arb_c()) {
            let a = g.ve_seminorm(&(&u * lam), SeminormTag::OperatorNorm).unwrap();
            let b = lam.norm() * g.ve_seminorm(&u, SeminormTag::OperatorNorm).unwrap();
            prop_assert!((a - b).abs() <= 1e-9 * (1.0 + b));
        }

        #[test]
        fn null_vectors_pair_to_zero(f in prop::collection::vec(arb_c(), 8), v in arb_vec(3)) {
            // third basis vector equals the sum of the first two, so u = (1, 1, -1) is null
            let f0 = CMat::from_row_slice(2, 2, &f[..4]);
            let f1 = CMat::from_row_slice(2, 2, &f[4..]);
            let cols = [f0.clone(), f1.clone(), &f0 + &f1];
            let g = GramTensor::from_fn(3, 2, |i, j| ZElement(cols[i].adjoint() * &cols[j]));
            let u = CVec::from_vec(vec![ONE, ONE, -ONE]);
            let uu = g.pair(&u, &u).unwrap();
            prop_assert!(uu.seminorm(SeminormTag::OperatorNorm) <= 1e-12 * (1.0 + g.block(2, 2).max_abs()));
            let uv = g.pair(&u, &v).unwrap();
            prop_assert!(uv.seminorm(SeminormTag::OperatorNorm) <= 1e-6);
        }
    }
}
