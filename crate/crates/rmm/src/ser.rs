//! Serde adapters mapping nalgebra types onto plain JSON arrays.

use nalgebra::{DMatrix, DVector};
use serde::de::Error as DeError;
use serde::{Deserialize, Deserializer, Serializer};

/// Serializes a `DMatrix<f64>` as a list of rows.
pub mod matrix_rows {
    use super::*;

    pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<Vec<f64>> = (0..m.nrows())
            .map(|i| m.row(i).iter().copied().collect())
            .collect();
        serde::Serialize::serialize(&rows, s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DMatrix<f64>, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        super::matrix_from_rows(&rows).map_err(D::Error::custom)
    }
}

/// Serializes a `DVector<f64>` as a flat list.
pub mod vector {
    use super::*;

    pub fn serialize<S: Serializer>(v: &DVector<f64>, s: S) -> Result<S::Ok, S::Error> {
        let items: Vec<f64> = v.iter().copied().collect();
        serde::Serialize::serialize(&items, s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DVector<f64>, D::Error> {
        let items = Vec::<f64>::deserialize(d)?;
        Ok(DVector::from_vec(items))
    }
}

/// Serializes a sequence of step vectors as a list of rows, one row per step.
pub mod step_rows {
    use super::*;

    pub fn serialize<S: Serializer>(steps: &[DVector<f64>], s: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<Vec<f64>> = steps.iter().map(|v| v.iter().copied().collect()).collect();
        serde::Serialize::serialize(&rows, s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<DVector<f64>>, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        if let Some(first) = rows.first() {
            let width = first.len();
            if rows.iter().any(|r| r.len() != width) {
                return Err(D::Error::custom("step rows must all have the same length"));
            }
        }
        Ok(rows.into_iter().map(DVector::from_vec).collect())
    }
}

pub(crate) fn matrix_from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>, String> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err("matrix rows must all have the same length".to_string());
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Ok(DMatrix::from_row_slice(nrows, ncols, &flat))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde::Serialize;

    #[derive(Serialize, Deserialize)]
    struct Holder {
        #[serde(with = "matrix_rows")]
        m: DMatrix<f64>,
        #[serde(with = "vector")]
        v: DVector<f64>,
    }

    #[test]
    fn matrix_round_trips_through_json() {
        let h = Holder {
            m: DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]),
            v: DVector::from_vec(vec![7.0, 8.0]),
        };
        let text = serde_json::to_string(&h).unwrap();
        let back: Holder = serde_json::from_str(&text).unwrap();
        assert_eq!(back.m, h.m);
        assert_eq!(back.v, h.v);
        assert!(text.contains("[[1.0,2.0,3.0],[4.0,5.0,6.0]]"));
    }

    #[test]
    fn ragged_rows_are_rejected() {
        let text = r#"{"m": [[1.0, 2.0], [3.0]], "v": []}"#;
        assert!(serde_json::from_str::<Holder>(text).is_err());
    }
}
