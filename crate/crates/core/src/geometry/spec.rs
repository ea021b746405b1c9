//! JSON field specifications.
//!
//! ```json
//! {"backend":"sphere","m":2,"A":[[0,-1,0],[1,0,0],[0,0,0]],"c":[0,0,0.5]}
//! {"backend":"so3","coeffs":[0.1,0.2,0.3]}
//! {"backend":"flat","m":2,"A":[[0,1],[-1,0]],"c":[1,0]}
//! ```
//!
//! Sphere specs denote `Π_p(A p + c)`; `m` defaults to 2. `A` and `c` default
//! to zero.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{Backend, GeometryError, VectorField};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "backend", rename_all = "lowercase", deny_unknown_fields)]
pub enum FieldSpec {
    Sphere {
        #[serde(default = "default_m")]
        m: usize,
        #[serde(rename = "A", default)]
        a: Option<Vec<Vec<f64>>>,
        #[serde(default)]
        c: Option<Vec<f64>>,
    },
    So3 {
        coeffs: [f64; 3],
    },
    Flat {
        m: usize,
        #[serde(rename = "A", default)]
        a: Option<Vec<Vec<f64>>>,
        #[serde(default)]
        c: Option<Vec<f64>>,
    },
}

fn default_m() -> usize {
    2
}

fn matrix(rows: &[Vec<f64>], n: usize) -> Result<DMatrix<f64>, GeometryError> {
    if rows.len() != n || rows.iter().any(|r| r.len() != n) {
        return Err(GeometryError::Spec(format!("\"A\" must be {n}×{n}")));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

fn vector(c: &[f64], n: usize) -> Result<DVector<f64>, GeometryError> {
    if c.len() != n {
        return Err(GeometryError::Spec(format!("\"c\" must have length {n}")));
    }
    Ok(DVector::from_column_slice(c))
}

impl FieldSpec {
    pub fn parse(json: &str) -> Result<FieldSpec, GeometryError> {
        serde_json::from_str(json).map_err(|e| GeometryError::Spec(e.to_string()))
    }

    pub fn backend(&self) -> Backend {
        match *self {
            FieldSpec::Sphere { m, .. } => Backend::Sphere { m },
            FieldSpec::So3 { .. } => Backend::RotationGroupFlat,
            FieldSpec::Flat { m, .. } => Backend::EuclideanFlat { m },
        }
    }

    pub fn build(&self) -> Result<VectorField, GeometryError> {
        let affine = |n: usize, a: &Option<Vec<Vec<f64>>>, c: &Option<Vec<f64>>| {
            let a = a.as_deref().map(|r| matrix(r, n)).transpose()?.unwrap_or_else(|| DMatrix::zeros(n, n));
            let c = c.as_deref().map(|c| vector(c, n)).transpose()?.unwrap_or_else(|| DVector::zeros(n));
            Ok::<_, GeometryError>((a, c))
        };
        match self {
            FieldSpec::Sphere { m, a, c } => {
                if *m == 0 {
                    return Err(GeometryError::Spec("sphere dimension must be positive".into()));
                }
                let (a, c) = affine(m + 1, a, c)?;
                VectorField::projected_affine(*m, a, c)
            }
            FieldSpec::So3 { coeffs } => Ok(VectorField::left_invariant(*coeffs)),
            FieldSpec::Flat { m, a, c } => {
                if *m == 0 {
                    return Err(GeometryError::Spec("dimension must be positive".into()));
                }
                let (a, c) = affine(*m, a, c)?;
                VectorField::affine(a, c)
            }
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("plain data serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_each_backend() {
        let s = FieldSpec::parse(r#"{"backend":"sphere","m":2,"A":[[0,-1,0],[1,0,0],[0,0,0]],"c":[0,0,0.5]}"#).unwrap();
        assert_eq!(s.backend(), Backend::Sphere { m: 2 });
        s.build().unwrap();
        let r = FieldSpec::parse(r#"{"backend":"so3","coeffs":[0.1,0.2,0.3]}"#).unwrap();
        assert_eq!(r.backend(), Backend::RotationGroupFlat);
        let f = FieldSpec::parse(r#"{"backend":"flat","m":2,"c":[1,0]}"#).unwrap();
        f.build().unwrap();
        assert_eq!(FieldSpec::parse(&s.to_json()).unwrap(), s);
    }

    #[test]
    fn rejects_malformed() {
        assert!(FieldSpec::parse(r#"{"backend":"torus"}"#).is_err());
        assert!(FieldSpec::parse(r#"{"backend":"so3","coeffs":[1,2]}"#).is_err());
        let bad = FieldSpec::parse(r#"{"backend":"sphere","m":2,"A":[[1,0],[0,1]]}"#).unwrap();
        assert!(matches!(bad.build(), Err(GeometryError::Spec(_))));
    }
}
