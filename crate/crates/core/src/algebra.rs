//! Finite *-semigroups given by dense tables, and their actions on finite sets.
//!
//! Validation is exhaustive over all index triples, so a structure that passes
//! satisfies every quantified law literally.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default cap on the semigroup order.
pub const MAX_ORDER: usize = 64;

/// At most this many violations are listed per validation call.
pub const MAX_REPORTED: usize = 256;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AlgebraError {
    #[error("malformed table: {0}")]
    Malformed(String),
    #[error("semigroup order {0} exceeds the cap of {MAX_ORDER}")]
    TooLarge(usize),
    #[error("cyclic group order must be at least 1")]
    EmptyGroup,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Law {
    Associativity,
    Involutive,
    AntiMultiplicative,
    UnitLeft,
    UnitRight,
    UnitSelfAdjoint,
    ActionCompatibility,
    ActionUnital,
}

/// A failed law together with the indices that witness the failure.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub law: Law,
    pub witness: Vec<usize>,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?} fails at {:?}", self.law, self.witness)
    }
}

/// A finite semigroup with an involutive anti-multiplicative star.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StarSemigroup {
    size: usize,
    mult: Vec<Vec<usize>>,
    inv: Vec<usize>,
    unit: Option<usize>,
}

impl StarSemigroup {
    /// Checks table shapes and index ranges; the algebraic laws are left to [`Self::validate`].
    pub fn new(mult: Vec<Vec<usize>>, inv: Vec<usize>, unit: Option<usize>) -> Result<Self, AlgebraError> {
        let size = mult.len();
        if size == 0 {
            return Err(AlgebraError::Malformed("empty multiplication table".into()));
        }
        if size > MAX_ORDER {
            return Err(AlgebraError::TooLarge(size));
        }
        if let Some((a, row)) = mult.iter().enumerate().find(|(_, r)| r.len() != size) {
            return Err(AlgebraError::Malformed(format!("mult row {a} has length {}, expected {size}", row.len())));
        }
        if mult.iter().flatten().any(|&c| c >= size) {
            return Err(AlgebraError::Malformed("mult entry out of range".into()));
        }
        if inv.len() != size {
            return Err(AlgebraError::Malformed(format!("inv has length {}, expected {size}", inv.len())));
        }
        if inv.iter().any(|&c| c >= size) {
            return Err(AlgebraError::Malformed("inv entry out of range".into()));
        }
        if unit.is_some_and(|e| e >= size) {
            return Err(AlgebraError::Malformed("unit out of range".into()));
        }
        Ok(Self { size, mult, inv, unit })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn mul(&self, a: usize, b: usize) -> usize {
        self.mult[a][b]
    }

    pub fn star(&self, a: usize) -> usize {
        self.inv[a]
    }

    pub fn unit(&self) -> Option<usize> {
        self.unit
    }

    pub fn mult_table(&self) -> &[Vec<usize>] {
        &self.mult
    }

    pub fn inv_table(&self) -> &[usize] {
        &self.inv
    }

    /// Every violated law, exhaustively (listing capped at [`MAX_REPORTED`]).
    pub fn validate(&self) -> Vec<Violation> {
        let g = self.size;
        let mut out = Vec::new();
        let mut push = |law, witness: Vec<usize>| {
            if out.len() < MAX_REPORTED {
                out.push(Violation { law, witness });
            }
        };
        for a in 0..g {
            for b in 0..g {
                let ab = self.mult[a][b];
                for c in 0..g {
                    if self.mult[ab][c] != self.mult[a][self.mult[b][c]] {
                        push(Law::Associativity, vec![a, b, c]);
                    }
                }
                if self.inv[ab] != self.mult[self.inv[b]][self.inv[a]] {
                    push(Law::AntiMultiplicative, vec![a, b]);
                }
            }
            if self.inv[self.inv[a]] != a {
                push(Law::Involutive, vec![a]);
            }
        }
        if let Some(e) = self.unit {
            for a in 0..g {
                if self.mult[e][a] != a {
                    push(Law::UnitLeft, vec![e, a]);
                }
                if self.mult[a][e] != a {
                    push(Law::UnitRight, vec![a, e]);
                }
            }
            if self.inv[e] != e {
                push(Law::UnitSelfAdjoint, vec![e]);
            }
        }
        out
    }
}

/// Exhaustive law check for `s`.
pub fn validate_semigroup(s: &StarSemigroup) -> Vec<Violation> {
    s.validate()
}

/// Action of a semigroup on `{0, .., m-1}`: `table[a][x] = a . x`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Action {
    pub table: Vec<Vec<usize>>,
    #[serde(default = "default_true")]
    pub unital: bool,
}

fn default_true() -> bool {
    true
}

impl Action {
    pub fn new(table: Vec<Vec<usize>>, unital: bool) -> Self {
        Self { table, unital }
    }

    /// Number of points acted on (zero for an empty table).
    pub fn points(&self) -> usize {
        self.table.first().map_or(0, Vec::len)
    }

    pub fn apply(&self, a: usize, x: usize) -> usize {
        self.table[a][x]
    }

    pub fn check_shape(&self, s: &StarSemigroup, m: usize) -> Result<(), AlgebraError> {
        if self.table.len() != s.size() {
            return Err(AlgebraError::Malformed(format!(
                "action has {} rows, semigroup has {} elements",
                self.table.len(),
                s.size()
            )));
        }
        if self.table.iter().any(|r| r.len() != m) {
            return Err(AlgebraError::Malformed(format!("action rows must have length {m}")));
        }
        if self.table.iter().flatten().any(|&x| x >= m) {
            return Err(AlgebraError::Malformed("action entry out of range".into()));
        }
        Ok(())
    }

    /// Exhaustive check of `(ab).x = a.(b.x)` and, if flagged unital, `e.x = x`.
    pub fn validate(&self, s: &StarSemigroup, m: usize) -> Result<Vec<Violation>, AlgebraError> {
        self.check_shape(s, m)?;
        let g = s.size();
        let mut out = Vec::new();
        for a in 0..g {
            for b in 0..g {
                let ab = s.mul(a, b);
                for x in 0..m {
                    if self.table[ab][x] != self.table[a][self.table[b][x]] && out.len() < MAX_REPORTED {
                        out.push(Violation { law: Law::ActionCompatibility, witness: vec![a, b, x] });
                    }
                }
            }
        }
        if let (true, Some(e)) = (self.unital, s.unit()) {
            for x in 0..m {
                if self.table[e][x] != x && out.len() < MAX_REPORTED {
                    out.push(Violation { law: Law::ActionUnital, witness: vec![e, x] });
                }
            }
        }
        Ok(out)
    }
}

pub fn validate_action(s: &StarSemigroup, a: &Action, m: usize) -> Result<Vec<Violation>, AlgebraError> {
    a.validate(s, m)
}

/// Choice of star on `Z_n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CyclicInvolution {
    /// `g* = -g mod n`.
    Inverse,
    /// `g* = g`, a valid star because `Z_n` is abelian.
    Identity,
}

/// `Z_n` with unit `0`.
pub fn cyclic_group(n: usize, involution: CyclicInvolution) -> Result<StarSemigroup, AlgebraError> {
    if n == 0 {
        return Err(AlgebraError::EmptyGroup);
    }
    let mult = (0..n).map(|a| (0..n).map(|b| (a + b) % n).collect()).collect();
    let inv = (0..n)
        .map(|a| match involution {
            CyclicInvolution::Inverse => (n - a) % n,
            CyclicInvolution::Identity => a,
        })
        .collect();
    StarSemigroup::new(mult, inv, Some(0))
}

/// `{e, z}` with `z z = z`, `z* = z` and unit `e` (index 0 is `e`, index 1 is `z`).
pub fn idempotent_pair() -> StarSemigroup {
    StarSemigroup::new(vec![vec![0, 1], vec![1, 1]], vec![0, 1], Some(0)).expect("static table")
}

/// The symmetric group on `k` letters with `g* = g^{-1}`; elements are
/// permutations in lexicographic order, so index 0 is the identity.
pub fn symmetric_group(k: usize) -> Result<StarSemigroup, AlgebraError> {
    let mut perms: Vec<Vec<usize>> = Vec::new();
    permutations(&mut (0..k).collect(), 0, &mut perms);
    perms.sort();
    let index = |p: &Vec<usize>| perms.iter().position(|q| q == p).expect("closed");
    let compose = |a: &Vec<usize>, b: &Vec<usize>| -> Vec<usize> { (0..k).map(|i| a[b[i]]).collect() };
    let g = perms.len();
    if g > MAX_ORDER {
        return Err(AlgebraError::TooLarge(g));
    }
    let mult = perms.iter().map(|a| perms.iter().map(|b| index(&compose(a, b))).collect()).collect();
    let inv = perms
        .iter()
        .map(|a| {
            let mut r = vec![0; k];
            for (i, &ai) in a.iter().enumerate() {
                r[ai] = i;
            }
            index(&r)
        })
        .collect();
    StarSemigroup::new(mult, inv, Some(0))
}

fn permutations(cur: &mut Vec<usize>, start: usize, out: &mut Vec<Vec<usize>>) {
    if start == cur.len() {
        out.push(cur.clone());
        return;
    }
    for i in start..cur.len() {
        cur.swap(start, i);
        permutations(cur, start + 1, out);
        cur.swap(start, i);
    }
}

/// Left multiplication of `s` on itself.
pub fn left_regular_action(s: &StarSemigroup) -> Action {
    Action::new(s.mult_table().to_vec(), true)
}

/// Every element acts as the identity on `m` points.
pub fn trivial_action(s: &StarSemigroup, m: usize) -> Action {
    Action::new(vec![(0..m).collect(); s.size()], true)
}
