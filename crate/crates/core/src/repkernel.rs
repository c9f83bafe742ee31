//! Reproducing kernel space realised from a minimal decomposition.
//!
//! Basis function `h` is `f_h = [V(.), e_h]`, so the map `U: e_h -> f_h` has the
//! identity matrix in these bases and the gram is carried over unchanged. The
//! reproducing elements `k_x` are recovered from the functions and the gram
//! alone, by solving `[k_x, f_h] = f_h(x)`; nothing downstream reads the kernel
//! table except the independent checks.

use serde::Serialize;
use thiserror::Error;

use crate::algebra::{Action, AlgebraError, StarSemigroup};
use crate::dilation::{
    mult_defect, serialize_gram, star_defect, unflatten, KolmogorovDecomposition, StarRepresentation,
};
use crate::json::serialize_matrix;
use crate::kernels::{InvarianceViolation, Kernel, KernelError};
use crate::linalg::{self, CMat, CVec};
use crate::zspace::{GramTensor, ZElement, ZSpace};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RkError {
    #[error("basis functions have rank {rank} < {n}: decomposition is not minimal")]
    InjectivityFailure { rank: usize, n: usize },
    #[error("kernel is not invariant: element {}, x = {}, y = {}", .0.element, .0.x, .0.y)]
    NotInvariant(InvarianceViolation),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Algebra(#[from] AlgebraError),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RKSpace {
    pub n: usize,
    pub m: usize,
    pub d: usize,
    /// `f_h` as columns of an `m d^2 x n` matrix.
    #[serde(serialize_with = "serialize_matrix")]
    pub functions: CMat,
    #[serde(serialize_with = "serialize_gram")]
    pub gram: GramTensor,
    pub pivot_points: Vec<usize>,
    /// Decomposition coordinates of `V(x)`, kept to compare representations.
    #[serde(rename = "V", serialize_with = "serialize_matrix")]
    pub generators: CMat,
}

pub fn build_rk(dec: &KolmogorovDecomposition) -> Result<RKSpace, RkError> {
    let (n, m, d) = (dec.n(), dec.m(), dec.d());
    let gram = dec.gram().clone();
    let mut functions = CMat::zeros(m * d * d, n);
    for x in 0..m {
        let vx = dec.coords(x);
        for h in 0..n {
            let z = gram.pair(&vx, &crate::dilation::unit(n, h)).expect("length n");
            for a in 0..d {
                for b in 0..d {
                    functions[(x * d * d + a * d + b, h)] = z.0[(a, b)];
                }
            }
        }
    }
    let rank = if n == 0 { 0 } else { linalg::rank(&functions, 1e-10) };
    if rank < n {
        return Err(RkError::InjectivityFailure { rank, n });
    }
    Ok(RKSpace { n, m, d, functions, gram, pivot_points: dec.space.pivot_points.clone(), generators: dec.v.clone() })
}

impl RKSpace {
    pub fn space(&self) -> ZSpace {
        ZSpace::for_dim(self.d)
    }

    pub fn function(&self, h: usize) -> Vec<ZElement> {
        unflatten(&self.functions.column(h).into_owned(), self.m, self.d)
    }

    fn value(&self, h: usize, x: usize) -> ZElement {
        let d = self.d;
        ZElement(CMat::from_fn(d, d, |a, b| self.functions[(x * d * d + a * d + b, h)]))
    }

    pub fn pair(&self, u: &CVec, v: &CVec) -> ZElement {
        self.gram.pair(u, v).expect("coordinate vectors have length n")
    }

    /// Coordinates of `k_x` for every `x` (as columns), from `[k_x, f_h] = f_h(x)`.
    ///
    /// Conjugating gives `sum_i c_i conj(G_ih) = conj(f_h(x))` entrywise, which is
    /// linear in `c` and solved in the least-squares sense.
    pub fn reproducing_elements(&self) -> CMat {
        let (n, m, d) = (self.n, self.m, self.d);
        let mut sys = CMat::zeros(n * d * d, n);
        for h in 0..n {
            for i in 0..n {
                let g = self.gram.block(i, h);
                for a in 0..d {
                    for b in 0..d {
                        sys[(h * d * d + a * d + b, i)] = g.0[(a, b)].conj();
                    }
                }
            }
        }
        let mut rhs = CMat::zeros(n * d * d, m);
        for x in 0..m {
            for h in 0..n {
                let f = self.value(h, x);
                for a in 0..d {
                    for b in 0..d {
                        rhs[(h * d * d + a * d + b, x)] = f.0[(a, b)].conj();
                    }
                }
            }
        }
        linalg::lstsq(&sys, &rhs, 1e-12)
    }

    /// `k(x, y) = [k_x, k_y]`, using only the space itself.
    pub fn rebuild_kernel(&self) -> Kernel {
        let c = self.reproducing_elements();
        Kernel::from_fn(self.space(), self.m, |x, y| self.pair(&c.column(x).into_owned(), &c.column(y).into_owned()))
    }

    /// `k_y(x) = sum_h c_{y,h} f_h(x)`, the other side of the same identity.
    pub fn evaluate_kernel_sections(&self) -> Kernel {
        let c = self.reproducing_elements();
        let table = &self.functions * &c;
        let d = self.d;
        Kernel::from_fn(self.space(), self.m, |x, y| {
            ZElement(CMat::from_fn(d, d, |a, b| table[(x * d * d + a * d + b, y)]))
        })
    }

    /// `max |[f_i, f_j] - G_ij|` where the left side is evaluated through the
    /// reproducing property: `f_i = sum_x a_x k_x` gives `[f_i, f_j] = sum_x conj(a_x) f_j(x)`.
    pub fn isometry_defect(&self) -> f64 {
        let c = self.reproducing_elements();
        let a = linalg::lstsq(&c, &CMat::identity(self.n, self.n), 1e-12);
        let mut worst = 0.0_f64;
        for i in 0..self.n {
            for j in 0..self.n {
                let mut acc = CMat::zeros(self.d, self.d);
                for x in 0..self.m {
                    acc += self.value(j, x).0.map(|z| z * a[(x, i)].conj());
                }
                worst = worst.max(linalg::max_abs_diff(&acc, &self.gram.block(i, j).0));
            }
        }
        worst
    }
}

/// Largest of `|f(x) - [k_x, f]|` over basis functions and points, and
/// `|k(x, y) - [k_x, k_y]|` over pairs; `k_x` is refitted from the raw table.
pub fn verify_reproducing(rk: &RKSpace, k: &Kernel) -> f64 {
    if rk.m != k.m() || rk.d != k.d() {
        return f64::INFINITY;
    }
    let c = linalg::lstsq(&rk.functions, &k.column_matrix(), 1e-12);
    let mut worst = 0.0_f64;
    for x in 0..rk.m {
        let cx = c.column(x).into_owned();
        for h in 0..rk.n {
            let rep = rk.pair(&cx, &crate::dilation::unit(rk.n, h));
            worst = worst.max(rep.max_abs_diff(&rk.value(h, x)));
        }
        for y in 0..rk.m {
            let kk = rk.pair(&cx, &c.column(y).into_owned());
            worst = worst.max(kk.max_abs_diff(k.get(x, y)));
        }
    }
    worst
}

/// `rho(xi) k_x = k_{xi . x}` with its defects and the distance to `U pi U^{-1}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RkRepresentation {
    #[serde(flatten)]
    pub rep: StarRepresentation,
    pub conjugation_defect: f64,
}

pub fn rk_representation(
    rk: &RKSpace,
    k: &Kernel,
    s: &StarSemigroup,
    a: &Action,
    tol: f64,
) -> Result<RkRepresentation, RkError> {
    if let Some(v) = k.invariance_violations(s, a, tol * k.scale())?.into_iter().next() {
        return Err(RkError::NotInvariant(v));
    }
    let n = rk.n;
    let c = rk.reproducing_elements();
    let c_pinv = linalg::pinv(&c, 1e-12);
    let mut matrices = Vec::with_capacity(s.size());
    let mut intertwine = 0.0_f64;
    let mut conjugation = 0.0_f64;
    for xi in 0..s.size() {
        let mut cx = CMat::zeros(n, rk.m);
        for x in 0..rk.m {
            cx.set_column(x, &c.column(a.apply(xi, x)));
        }
        let rho = &cx * &c_pinv;
        if rk.m > 0 {
            intertwine = intertwine.max(linalg::max_abs_diff(&(&rho * &c), &cx));
        }
        let mut pi = CMat::zeros(n, n);
        for (i, &p) in rk.pivot_points.iter().enumerate() {
            pi.set_column(i, &rk.generators.row(a.apply(xi, p)).transpose());
        }
        conjugation = conjugation.max(linalg::op_norm(&(&rho - &pi)));
        matrices.push(rho);
    }
    Ok(RkRepresentation {
        rep: StarRepresentation {
            mult_defect: mult_defect(s, &matrices),
            star_defect: star_defect(s, &matrices, &rk.gram),
            intertwine_defect: intertwine,
            matrices,
        },
        conjugation_defect: conjugation,
    })
}
