//! Serde helpers: complex numbers are `[re, im]`, matrices are row-major nested arrays.

use serde::ser::SerializeSeq;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::linalg::{CMat, CVec, C64};

#[derive(Deserialize)]
#[serde(untagged)]
enum ComplexRepr {
    Pair([f64; 2]),
    Real(f64),
}

impl From<ComplexRepr> for C64 {
    fn from(r: ComplexRepr) -> Self {
        match r {
            ComplexRepr::Pair([re, im]) => C64::new(re, im),
            ComplexRepr::Real(re) => C64::new(re, 0.0),
        }
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ElementRepr {
    Matrix(Vec<Vec<ComplexRepr>>),
    Scalar(ComplexRepr),
}

struct Row<'a>(&'a CMat, usize);

impl Serialize for Row<'_> {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut seq = s.serialize_seq(Some(self.0.ncols()))?;
        for j in 0..self.0.ncols() {
            let z = self.0[(self.1, j)];
            seq.serialize_element(&[z.re, z.im])?;
        }
        seq.end()
    }
}

/// Wrapper that serialises a matrix as nested `[re, im]` rows.
pub struct MatrixJson<'a>(pub &'a CMat);

impl Serialize for MatrixJson<'_> {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        serialize_matrix(self.0, s)
    }
}

/// Wrapper that serialises a vector as a list of `[re, im]` pairs.
pub struct VectorJson<'a>(pub &'a CVec);

impl Serialize for VectorJson<'_> {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut seq = s.serialize_seq(Some(self.0.len()))?;
        for z in self.0.iter() {
            seq.serialize_element(&[z.re, z.im])?;
        }
        seq.end()
    }
}

pub fn serialize_matrix<S: Serializer>(m: &CMat, s: S) -> Result<S::Ok, S::Error> {
    let mut seq = s.serialize_seq(Some(m.nrows()))?;
    for i in 0..m.nrows() {
        seq.serialize_element(&Row(m, i))?;
    }
    seq.end()
}

pub fn serialize_vector<S: Serializer>(v: &CVec, s: S) -> Result<S::Ok, S::Error> {
    VectorJson(v).serialize(s)
}

fn rows_to_matrix<E: serde::de::Error>(rows: Vec<Vec<ComplexRepr>>) -> Result<CMat, E> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(E::custom("ragged matrix rows"));
    }
    let flat: Vec<C64> = rows.into_iter().flatten().map(C64::from).collect();
    Ok(CMat::from_row_slice(nrows, ncols, &flat))
}

/// Any rectangular complex matrix.
pub fn deserialize_matrix<'de, D: Deserializer<'de>>(de: D) -> Result<CMat, D::Error> {
    let rows = Vec::<Vec<ComplexRepr>>::deserialize(de)?;
    rows_to_matrix(rows)
}

/// A square matrix, or a bare scalar (`[re, im]` or a real number) read as 1 x 1.
pub fn deserialize_element<'de, D: Deserializer<'de>>(de: D) -> Result<CMat, D::Error> {
    match ElementRepr::deserialize(de)? {
        ElementRepr::Scalar(z) => Ok(CMat::from_element(1, 1, z.into())),
        ElementRepr::Matrix(rows) => {
            let m = rows_to_matrix::<D::Error>(rows)?;
            if m.nrows() != m.ncols() {
                return Err(serde::de::Error::custom("Z elements must be square matrices"));
            }
            Ok(m)
        }
    }
}

pub fn deserialize_vector<'de, D: Deserializer<'de>>(de: D) -> Result<CVec, D::Error> {
    let v = Vec::<ComplexRepr>::deserialize(de)?;
    Ok(CVec::from_vec(v.into_iter().map(C64::from).collect()))
}

/// Parse a matrix from a JSON value (used by modules that decode nested tables).
pub fn matrix_from_value(v: serde_json::Value) -> Result<CMat, serde_json::Error> {
    deserialize_matrix(v)
}
