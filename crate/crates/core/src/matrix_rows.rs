//! Serde adapter storing a `DMatrix<f64>` as an array of rows.
//!
//! A bare number is accepted on input as a 1×1 matrix.

use nalgebra::DMatrix;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

#[derive(Deserialize)]
#[serde(untagged)]
enum RowsOrScalar {
    Scalar(f64),
    Rows(Vec<Vec<f64>>),
}

pub fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

pub fn from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>, String> {
    let nr = rows.len();
    if nr == 0 {
        return Err("matrix has no rows".into());
    }
    let nc = rows[0].len();
    if nc == 0 || rows.iter().any(|r| r.len() != nc) {
        return Err("matrix rows must be non-empty and of equal length".into());
    }
    Ok(DMatrix::from_fn(nr, nc, |i, j| rows[i][j]))
}

pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
    to_rows(m).serialize(s)
}

pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DMatrix<f64>, D::Error> {
    match RowsOrScalar::deserialize(d)? {
        RowsOrScalar::Scalar(x) => Ok(DMatrix::from_element(1, 1, x)),
        RowsOrScalar::Rows(rows) => from_rows(&rows).map_err(D::Error::custom),
    }
}

/// Same adapter for `Vec<DMatrix<f64>>`.
pub mod list {
    use super::*;

    pub fn serialize<S: Serializer>(ms: &[DMatrix<f64>], s: S) -> Result<S::Ok, S::Error> {
        ms.iter().map(to_rows).collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<DMatrix<f64>>, D::Error> {
        let raw = Vec::<Vec<Vec<f64>>>::deserialize(d)?;
        raw.iter()
            .map(|r| from_rows(r).map_err(D::Error::custom))
            .collect()
    }
}

/// Same adapter for a name-keyed map.
pub mod map {
    use super::*;
    use std::collections::BTreeMap;

    pub fn serialize<S: Serializer>(ms: &BTreeMap<String, DMatrix<f64>>, s: S) -> Result<S::Ok, S::Error> {
        ms.iter()
            .map(|(k, m)| (k, to_rows(m)))
            .collect::<BTreeMap<_, _>>()
            .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<String, DMatrix<f64>>, D::Error> {
        let raw = BTreeMap::<String, Vec<Vec<f64>>>::deserialize(d)?;
        raw.into_iter()
            .map(|(k, r)| from_rows(&r).map(|m| (k, m)).map_err(D::Error::custom))
            .collect()
    }
}
