//! Lifts to scalar-coefficient kernels.
//!
//! An operator-valued kernel `l(x, y)` on a module `H` becomes a `Z`-valued
//! kernel on `X x basis(H)`; a map `T` from a *-semigroup into sesquilinear
//! `Z`-valued forms on `C^q` becomes a kernel on `Gamma x {0..q}`. Flat index
//! of `(x, i)` is `x * N + i` in both cases.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::algebra::{Action, AlgebraError, StarSemigroup};
use crate::dilation::{KolmogorovDecomposition, StarRepresentation};
use crate::json::{serialize_matrix, MatrixJson};
use crate::kernels::{Kernel, KernelError};
use crate::linalg::{self, CMat, CVec, C64};
use crate::zspace::{GramTensor, ZElement, ZSpace};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LiftError {
    #[error("operator is not adjointable (residual {residual:e})")]
    NotAdjointable { residual: f64 },
    #[error("l({x}, {y})* differs from l({y}, {x}) (defect {defect:e})")]
    HermitianMismatch { x: usize, y: usize, defect: f64 },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("semigroup has no unit")]
    NoUnit,
    #[error("semigroup is not a group with inverse as involution")]
    NotAGroup,
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Algebra(#[from] AlgebraError),
}

/// Finite-dimensional module `H` with a fixed basis and `Z`-valued gramian.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum VEModuleH {
    /// `C^r` with `[u, v] = u* v`.
    Hilbert { r: usize },
    /// `d x kcols` matrices with `[A, B] = B A*`, valued in `Herm(d)`.
    MatrixModule { d: usize, kcols: usize },
}

impl VEModuleH {
    /// Dimension of the coefficient space.
    pub fn dim(&self) -> usize {
        match *self {
            Self::Hilbert { r } => r,
            Self::MatrixModule { d, kcols } => d * kcols,
        }
    }

    pub fn z_dim(&self) -> usize {
        match *self {
            Self::Hilbert { .. } => 1,
            Self::MatrixModule { d, .. } => d,
        }
    }

    pub fn space(&self) -> ZSpace {
        ZSpace::for_dim(self.z_dim())
    }

    /// Gramian on basis vectors. For matrices the basis is `E_ab` at index
    /// `a * kcols + b`, and `[E_ab, E_ce] = E_ce E_ba = delta_eb E_ca`.
    pub fn basis_gram(&self) -> GramTensor {
        match *self {
            Self::Hilbert { r } => GramTensor::identity(r, 1),
            Self::MatrixModule { d, kcols } => GramTensor::from_fn(d * kcols, d, |i, j| {
                let (a, b) = (i / kcols, i % kcols);
                let (c, e) = (j / kcols, j % kcols);
                if e == b {
                    ZElement::unit(d, c, a)
                } else {
                    ZElement::zeros(d)
                }
            }),
        }
    }

    /// Coefficient vector of a `d x kcols` matrix.
    pub fn vectorize(&self, a: &CMat) -> CVec {
        CVec::from_iterator(a.nrows() * a.ncols(), (0..a.nrows()).flat_map(|i| (0..a.ncols()).map(move |j| a[(i, j)])))
    }

    /// Left multiplication `A -> N A` on a matrix module.
    pub fn left_multiplication(&self, n: &CMat) -> CMat {
        match *self {
            Self::Hilbert { .. } => n.clone(),
            Self::MatrixModule { kcols, .. } => n.kronecker(&CMat::identity(kcols, kcols)),
        }
    }

    /// Right multiplication `A -> A M` on a matrix module.
    pub fn right_multiplication(&self, m: &CMat) -> CMat {
        match *self {
            Self::Hilbert { .. } => m.transpose(),
            Self::MatrixModule { d, .. } => CMat::identity(d, d).kronecker(&m.transpose()),
        }
    }
}

/// Linear map on the coefficient space of `H`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorOnH {
    #[serde(serialize_with = "serialize_matrix", deserialize_with = "crate::json::deserialize_matrix")]
    pub matrix: CMat,
    #[serde(default, skip_serializing_if = "Option::is_none", with = "opt_matrix")]
    pub adjoint: Option<CMat>,
}

mod opt_matrix {
    use super::*;

    pub fn serialize<S: serde::Serializer>(m: &Option<CMat>, s: S) -> Result<S::Ok, S::Error> {
        m.as_ref().map(MatrixJson).serialize(s)
    }

    pub fn deserialize<'de, D: serde::Deserializer<'de>>(de: D) -> Result<Option<CMat>, D::Error> {
        match Option::<serde_json::Value>::deserialize(de)? {
            None => Ok(None),
            Some(v) => crate::json::matrix_from_value(v).map(Some).map_err(serde::de::Error::custom),
        }
    }
}

impl OperatorOnH {
    pub fn new(matrix: CMat) -> Self {
        Self { matrix, adjoint: None }
    }
}

/// Solves `[T b_i, b_j] = [b_i, T* b_j]` for `T*`.
pub fn adjoint_solve(h: &VEModuleH, t: &OperatorOnH, tol: f64) -> Result<OperatorOnH, LiftError> {
    let n = h.dim();
    if t.matrix.nrows() != n || t.matrix.ncols() != n {
        return Err(LiftError::DimensionMismatch(format!("operator must be {n} x {n}")));
    }
    let g = h.basis_gram();
    let dz = h.z_dim();
    let rows = n * dz * dz;
    // [b_i, T* b_j] = sum_l X_lj [b_i, b_l]
    let mut sys = CMat::zeros(rows, n);
    let mut rhs = CMat::zeros(rows, n);
    for i in 0..n {
        let tb_i = t.matrix.column(i).into_owned();
        for j in 0..n {
            let target = g.pair(&tb_i, &crate::dilation::unit(n, j)).expect("length n");
            for a in 0..dz {
                for b in 0..dz {
                    rhs[(i * dz * dz + a * dz + b, j)] = target.0[(a, b)];
                }
            }
        }
        for l in 0..n {
            let gil = g.block(i, l);
            for a in 0..dz {
                for b in 0..dz {
                    sys[(i * dz * dz + a * dz + b, l)] = gil.0[(a, b)];
                }
            }
        }
    }
    let x = linalg::lstsq(&sys, &rhs, 1e-12);
    let residual = if rows == 0 { 0.0 } else { linalg::max_abs_diff(&(&sys * &x), &rhs) };
    if residual > tol * (1.0 + linalg::max_abs(&rhs)) {
        return Err(LiftError::NotAdjointable { residual });
    }
    Ok(OperatorOnH { matrix: t.matrix.clone(), adjoint: Some(x) })
}

/// `m x m` table of operators on `H`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorKernel {
    pub module: VEModuleH,
    pub m: usize,
    /// Row-major, `operators[x * m + y] = l(x, y)`.
    pub operators: Vec<OperatorOnH>,
}

impl OperatorKernel {
    pub fn get(&self, x: usize, y: usize) -> &OperatorOnH {
        &self.operators[x * self.m + y]
    }
}

/// Kernel on a product index set together with its legend.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LiftedKernel {
    pub kernel: Kernel,
    /// `legend[flat] = (point, basis index)`.
    pub legend: Vec<(usize, usize)>,
}

fn legend(points: usize, basis: usize) -> Vec<(usize, usize)> {
    (0..points).flat_map(|x| (0..basis).map(move |i| (x, i))).collect()
}

/// `k((x, i), (y, j)) = [l(y, x) b_i, b_j]`.
pub fn lift_operator_kernel(h: &VEModuleH, l: &OperatorKernel, tol: f64) -> Result<LiftedKernel, LiftError> {
    let (m, n) = (l.m, h.dim());
    if l.operators.len() != m * m {
        return Err(LiftError::DimensionMismatch(format!("expected {} operators, got {}", m * m, l.operators.len())));
    }
    for x in 0..m {
        for y in 0..m {
            let adj = adjoint_solve(h, l.get(x, y), tol)?;
            let other = &l.get(y, x).matrix;
            let defect = linalg::max_abs_diff(adj.adjoint.as_ref().expect("solved"), other);
            if defect > tol * (1.0 + linalg::max_abs(other)) {
                return Err(LiftError::HermitianMismatch { x, y, defect });
            }
        }
    }
    let g = h.basis_gram();
    let kernel = Kernel::from_fn(h.space(), m * n, |p, q| {
        let (x, i) = (p / n, p % n);
        let (y, j) = (q / n, q % n);
        let lb = l.get(y, x).matrix.column(i).into_owned();
        g.pair(&lb, &crate::dilation::unit(n, j)).expect("length n")
    });
    Ok(LiftedKernel { kernel, legend: legend(m, n) })
}

/// `xi . (x, i) = (xi . x, i)`.
pub fn lift_action(a: &Action, basis: usize) -> Action {
    let table =
        a.table.iter().map(|row| row.iter().flat_map(|&z| (0..basis).map(move |i| z * basis + i)).collect()).collect();
    Action::new(table, a.unital)
}

/// `V~(x)` as an `n x dim H` matrix, and the worst
/// `|[V~(x) b_i, V~(y) b_j] - [l(y, x) b_i, b_j]|`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OperatorDilation {
    #[serde(serialize_with = "serialize_matrices")]
    pub vtilde: Vec<CMat>,
    pub max_defect: f64,
}

fn serialize_matrices<S: serde::Serializer>(ms: &[CMat], s: S) -> Result<S::Ok, S::Error> {
    ms.iter().map(MatrixJson).collect::<Vec<_>>().serialize(s)
}

pub fn recover_operator_dilation(
    lifted_dec: &KolmogorovDecomposition,
    h: &VEModuleH,
    l: &OperatorKernel,
) -> Result<OperatorDilation, LiftError> {
    let (m, nh) = (l.m, h.dim());
    if lifted_dec.m() != m * nh || lifted_dec.d() != h.z_dim() {
        return Err(LiftError::DimensionMismatch(format!(
            "decomposition has {} points of size {}, lift needs {} of size {}",
            lifted_dec.m(),
            lifted_dec.d(),
            m * nh,
            h.z_dim()
        )));
    }
    let vtilde: Vec<CMat> = (0..m)
        .map(|x| {
            let mut v = CMat::zeros(lifted_dec.n(), nh);
            for i in 0..nh {
                v.set_column(i, &lifted_dec.coords(x * nh + i));
            }
            v
        })
        .collect();
    let g = h.basis_gram();
    let mut worst = 0.0_f64;
    for x in 0..m {
        for y in 0..m {
            for i in 0..nh {
                let vi = vtilde[x].column(i).into_owned();
                let lb = l.get(y, x).matrix.column(i).into_owned();
                for j in 0..nh {
                    let lhs = lifted_dec.pair(&vi, &vtilde[y].column(j).into_owned());
                    let rhs = g.pair(&lb, &crate::dilation::unit(nh, j)).expect("length n");
                    worst = worst.max(lhs.max_abs_diff(&rhs));
                }
            }
        }
    }
    Ok(OperatorDilation { vtilde, max_defect: worst })
}

/// `(T_s y)(x) = sum_{i,j} conj(x_i) y_j T[s][i][j]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SemigroupMapT {
    pub q: usize,
    pub space: ZSpace,
    #[serde(serialize_with = "serialize_tensors")]
    tensors: Vec<Vec<ZElement>>,
}

fn serialize_tensors<S: serde::Serializer>(t: &[Vec<ZElement>], s: S) -> Result<S::Ok, S::Error> {
    let q = t.first().map_or(0, |v| (v.len() as f64).sqrt().round() as usize);
    let nested: Vec<Vec<&[ZElement]>> = t.iter().map(|v| v.chunks(q.max(1)).collect()).collect();
    nested.serialize(s)
}

#[derive(Deserialize)]
struct SemigroupMapRepr {
    q: usize,
    space: ZSpace,
    tensors: Vec<Vec<Vec<ZElement>>>,
}

impl<'de> Deserialize<'de> for SemigroupMapT {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> Result<Self, D::Error> {
        let r = SemigroupMapRepr::deserialize(de)?;
        let q = r.q;
        let mut tensors = Vec::with_capacity(r.tensors.len());
        for (s, rows) in r.tensors.into_iter().enumerate() {
            if rows.len() != q || rows.iter().any(|row| row.len() != q) {
                return Err(serde::de::Error::custom(format!("tensor {s} must be {q} x {q}")));
            }
            tensors.push(rows.into_iter().flatten().collect());
        }
        SemigroupMapT::new(q, r.space, tensors).map_err(serde::de::Error::custom)
    }
}

impl SemigroupMapT {
    /// `tensors[s][i * q + j] = T[s][i][j]`.
    pub fn new(q: usize, space: ZSpace, tensors: Vec<Vec<ZElement>>) -> Result<Self, LiftError> {
        for (s, t) in tensors.iter().enumerate() {
            if t.len() != q * q {
                return Err(LiftError::DimensionMismatch(format!(
                    "tensor {s} has {} entries, expected {}",
                    t.len(),
                    q * q
                )));
            }
            if let Some(z) = t.iter().find(|z| z.dim() != space.dim()) {
                return Err(LiftError::DimensionMismatch(format!("tensor {s} entry of size {}", z.dim())));
            }
        }
        Ok(Self { q, space, tensors })
    }

    pub fn elements(&self) -> usize {
        self.tensors.len()
    }

    pub fn get(&self, s: usize, i: usize, j: usize) -> &ZElement {
        &self.tensors[s][i * self.q + j]
    }

    /// `max |T[s* t][i][j] - T[t* s][j][i]*|`.
    pub fn tensor_identity_defect(&self, sg: &StarSemigroup) -> f64 {
        let mut worst = 0.0_f64;
        for s in 0..sg.size() {
            for t in 0..sg.size() {
                let u = sg.mul(sg.star(s), t);
                let w = sg.mul(sg.star(t), s);
                for i in 0..self.q {
                    for j in 0..self.q {
                        worst = worst.max(self.get(u, i, j).max_abs_diff(&self.get(w, j, i).involution()));
                    }
                }
            }
        }
        worst
    }
}

/// `k((s, i), (t, j)) = T[s* t][i][j]` on `Gamma x {0..q}`.
pub fn lift_semigroup_map(t: &SemigroupMapT, s: &StarSemigroup) -> Result<LiftedKernel, LiftError> {
    if t.elements() != s.size() {
        return Err(LiftError::DimensionMismatch(format!(
            "map has {} tensors, semigroup has {} elements",
            t.elements(),
            s.size()
        )));
    }
    let q = t.q;
    let kernel = Kernel::from_fn(t.space, s.size() * q, |p, r| {
        let (a, i) = (p / q, p % q);
        let (b, j) = (r / q, r % q);
        t.get(s.mul(s.star(a), b), i, j).clone()
    });
    Ok(LiftedKernel { kernel, legend: legend(s.size(), q) })
}

/// `u . (s, i) = (u s, i)`.
pub fn semigroup_lift_action(s: &StarSemigroup, q: usize) -> Action {
    let table = (0..s.size())
        .map(|u| (0..s.size()).flat_map(|x| (0..q).map(move |i| (x, i))).map(|(x, i)| s.mul(u, x) * q + i).collect())
        .collect();
    Action::new(table, s.unit().is_some())
}

/// `A = V~(e)` and the worst `|[A e_j, pi(t) A e_i] - T[t][j][i]|`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FactorizationCheck {
    #[serde(serialize_with = "serialize_matrix")]
    pub a: CMat,
    pub max_defect: f64,
}

pub fn verify_factorization(
    t: &SemigroupMapT,
    s: &StarSemigroup,
    dec: &KolmogorovDecomposition,
    rep: &StarRepresentation,
) -> Result<FactorizationCheck, LiftError> {
    let e = s.unit().ok_or(LiftError::NoUnit)?;
    let q = t.q;
    if dec.m() != s.size() * q || rep.matrices.len() != s.size() || t.elements() != s.size() {
        return Err(LiftError::DimensionMismatch("decomposition does not come from this lift".into()));
    }
    let mut a = CMat::zeros(dec.n(), q);
    for i in 0..q {
        a.set_column(i, &dec.coords(e * q + i));
    }
    let mut worst = 0.0_f64;
    for g in 0..s.size() {
        let pa = &rep.matrices[g] * &a;
        for i in 0..q {
            let pai = pa.column(i).into_owned();
            for j in 0..q {
                let lhs = dec.pair(&a.column(j).into_owned(), &pai);
                worst = worst.max(lhs.max_abs_diff(t.get(g, j, i)));
            }
        }
    }
    Ok(FactorizationCheck { a, max_defect: worst })
}

/// Kernel `k(s, t) = phi(s* t)` on `Gamma` with the left regular action; the unit is the cyclic point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GnsInstance {
    pub kernel: Kernel,
    pub action: Action,
    pub cyclic_point: usize,
}

pub fn gns_instance(s: &StarSemigroup, phi: &[ZElement]) -> Result<GnsInstance, LiftError> {
    let e = s.unit().ok_or(LiftError::NoUnit)?;
    if phi.len() != s.size() {
        return Err(LiftError::DimensionMismatch(format!("phi has {} values for {} elements", phi.len(), s.size())));
    }
    let d = phi.first().map_or(1, ZElement::dim);
    if phi.iter().any(|z| z.dim() != d) {
        return Err(LiftError::DimensionMismatch("phi values differ in size".into()));
    }
    let kernel = Kernel::from_fn(ZSpace::for_dim(d), s.size(), |a, b| phi[s.mul(s.star(a), b)].clone());
    Ok(GnsInstance { kernel, action: crate::algebra::left_regular_action(s), cyclic_point: e })
}

fn check_group(s: &StarSemigroup) -> Result<usize, LiftError> {
    let e = s.unit().ok_or(LiftError::NoUnit)?;
    if (0..s.size()).all(|a| s.mul(s.star(a), a) == e && s.mul(a, s.star(a)) == e) {
        Ok(e)
    } else {
        Err(LiftError::NotAGroup)
    }
}

fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> CMat {
    CMat::from_fn(rows, cols, |_, _| C64::new(StandardNormal.sample(rng), StandardNormal.sample(rng)))
}

/// `T[u][i][j] = B_i* (L(u) (x) I_r) B_j` with `L` the left regular representation;
/// positive by construction since `L(s)* L(t) = L(s* t)` on a group.
pub fn random_positive_semigroup_map(
    s: &StarSemigroup,
    q: usize,
    d: usize,
    rank: usize,
    seed: u64,
) -> Result<SemigroupMapT, LiftError> {
    check_group(s)?;
    let g = s.size();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let b: Vec<CMat> = (0..q).map(|_| gaussian(&mut rng, g * rank, d)).collect();
    let tensors = (0..g)
        .map(|u| {
            let mut lu = CMat::zeros(g * rank, g * rank);
            for v in 0..g {
                for r in 0..rank {
                    lu[(s.mul(u, v) * rank + r, v * rank + r)] = C64::new(1.0, 0.0);
                }
            }
            let mut row = Vec::with_capacity(q * q);
            for i in 0..q {
                for j in 0..q {
                    row.push(ZElement(b[i].adjoint() * &lu * &b[j]));
                }
            }
            row
        })
        .collect();
    SemigroupMapT::new(q, ZSpace::for_dim(d), tensors)
}

/// `l(x, y) = F(x)* F(y)` on `Hilbert(r)`, with `F(x)` random `rank x r`.
pub fn random_hilbert_operator_kernel(m: usize, r: usize, rank: usize, seed: u64) -> OperatorKernel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let f: Vec<CMat> = (0..m).map(|_| gaussian(&mut rng, rank, r)).collect();
    let mut operators = Vec::with_capacity(m * m);
    for x in 0..m {
        for y in 0..m {
            operators.push(OperatorOnH::new(f[x].adjoint() * &f[y]));
        }
    }
    OperatorKernel { module: VEModuleH::Hilbert { r }, m, operators }
}
