//! JSON interchange for frames, dual balls, matrices and coefficient grids.
//!
//! Real scalars are plain numbers; complex scalars are `[re, im]` pairs. A
//! document declares its field (`"R"` or `"C"`) and every entry must use the
//! matching form. Floats are written in shortest round-trip form, so
//! save/load is bit-exact.

use crate::error::{Error, Result};
use crate::field::{KMatrix, KVector, Scalar, ScalarField};
use crate::frames::WeightedFrame;
use crate::geometry::DualBallSpec;
use serde_json::{json, Map, Value};
use std::path::Path;

fn perr(path: &str, msg: impl std::fmt::Display) -> Error {
    Error::Parse(format!("{path}: {msg}"))
}

pub fn scalar_to_json(z: Scalar, field: ScalarField) -> Value {
    match field {
        ScalarField::Real => json!(z.re),
        ScalarField::Complex => json!([z.re, z.im]),
    }
}

fn num(v: &Value, path: &str) -> Result<f64> {
    let x = v.as_f64().ok_or_else(|| perr(path, "expected a number"))?;
    if !x.is_finite() {
        return Err(perr(path, "non-finite number"));
    }
    Ok(x)
}

pub fn scalar_from_json(v: &Value, field: ScalarField, path: &str) -> Result<Scalar> {
    match (field, v) {
        (ScalarField::Real, Value::Number(_)) => Ok(Scalar::new(num(v, path)?, 0.0)),
        (ScalarField::Real, Value::Array(_)) => Err(perr(path, "complex entry in a real document")),
        (ScalarField::Complex, Value::Array(a)) if a.len() == 2 => Ok(Scalar::new(
            num(&a[0], &format!("{path}[0]"))?,
            num(&a[1], &format!("{path}[1]"))?,
        )),
        (ScalarField::Complex, Value::Number(_)) => Err(perr(path, "real entry in a complex document")),
        _ => Err(perr(path, "expected a scalar")),
    }
}

pub fn vector_to_json(v: &KVector, field: ScalarField) -> Value {
    Value::Array(v.entries().iter().map(|&z| scalar_to_json(z, field)).collect())
}

fn rows_from_json(v: &Value, field: ScalarField, path: &str) -> Result<Vec<Vec<Scalar>>> {
    let rows = v.as_array().ok_or_else(|| perr(path, "expected an array of rows"))?;
    rows.iter()
        .enumerate()
        .map(|(i, r)| {
            let p = format!("{path}[{i}]");
            let entries = r.as_array().ok_or_else(|| perr(&p, "expected an array"))?;
            entries
                .iter()
                .enumerate()
                .map(|(j, e)| scalar_from_json(e, field, &format!("{p}[{j}]")))
                .collect()
        })
        .collect()
}

fn obj<'a>(v: &'a Value, what: &str) -> Result<&'a Map<String, Value>> {
    v.as_object().ok_or_else(|| perr(what, "expected a JSON object"))
}

fn get<'a>(m: &'a Map<String, Value>, key: &str) -> Result<&'a Value> {
    m.get(key).ok_or_else(|| perr(key, "missing"))
}

fn field_of(m: &Map<String, Value>) -> Result<ScalarField> {
    let s = get(m, "field")?.as_str().ok_or_else(|| perr("field", "expected \"R\" or \"C\""))?;
    ScalarField::parse(s).map_err(|_| perr("field", format!("unknown field {s:?}")))
}

fn dim_of(m: &Map<String, Value>) -> Result<Option<usize>> {
    match m.get("n") {
        None => Ok(None),
        Some(v) => v
            .as_u64()
            .map(|x| Some(x as usize))
            .ok_or_else(|| perr("n", "expected a non-negative integer")),
    }
}

/// Vectors of a frame or vector-set document, with their common dimension.
pub fn vectors_from_json(v: &Value, key: &str) -> Result<(ScalarField, usize, Vec<KVector>)> {
    let m = obj(v, "document")?;
    let field = field_of(m)?;
    let rows = rows_from_json(get(m, key)?, field, key)?;
    let n = match dim_of(m)? {
        Some(n) => n,
        None => rows.first().map(|r| r.len()).ok_or_else(|| perr(key, "empty"))?,
    };
    let vectors = rows
        .into_iter()
        .enumerate()
        .map(|(i, r)| {
            if r.len() != n {
                return Err(perr(&format!("{key}[{i}]"), format!("length {} differs from n = {n}", r.len())));
            }
            KVector::new(field, r)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((field, n, vectors))
}

pub fn frame_to_json(f: &WeightedFrame) -> Value {
    json!({
        "field": f.field().symbol(),
        "n": f.n(),
        "vectors": f.vectors().iter().map(|v| vector_to_json(v, f.field())).collect::<Vec<_>>(),
        "weights": f.weights(),
    })
}

/// Frame document; absent weights default to `1/√N`.
pub fn frame_from_json(v: &Value) -> Result<WeightedFrame> {
    let (field, n, vectors) = vectors_from_json(v, "vectors")?;
    let weights = match obj(v, "document")?.get("weights") {
        None => vec![1.0 / (vectors.len() as f64).sqrt(); vectors.len()],
        Some(w) => w
            .as_array()
            .ok_or_else(|| perr("weights", "expected an array"))?
            .iter()
            .enumerate()
            .map(|(i, x)| num(x, &format!("weights[{i}]")))
            .collect::<Result<Vec<_>>>()?,
    };
    if weights.len() != vectors.len() {
        return Err(perr("weights", format!("{} weights for {} vectors", weights.len(), vectors.len())));
    }
    WeightedFrame::new(field, n, vectors, weights)
}

pub fn ball_to_json(b: &DualBallSpec) -> Value {
    json!({
        "field": b.field().symbol(),
        "n": b.n(),
        "functionals": b.functionals().iter().map(|v| vector_to_json(v, b.field())).collect::<Vec<_>>(),
    })
}

pub fn ball_from_json(v: &Value) -> Result<DualBallSpec> {
    let (field, n, functionals) = vectors_from_json(v, "functionals")?;
    DualBallSpec::new(field, n, functionals)
}

pub fn matrix_to_json(m: &KMatrix) -> Value {
    json!({
        "field": m.field().symbol(),
        "rows": m.rows(),
        "cols": m.cols(),
        "data": m.to_rows()
            .into_iter()
            .map(|r| r.into_iter().map(|z| scalar_to_json(z, m.field())).collect::<Vec<_>>())
            .collect::<Vec<_>>(),
    })
}

pub fn matrix_from_json(v: &Value) -> Result<KMatrix> {
    let m = obj(v, "document")?;
    let field = field_of(m)?;
    let data = rows_from_json(get(m, "data")?, field, "data")?;
    for (key, want) in [("rows", data.len()), ("cols", data.first().map_or(0, |r| r.len()))] {
        if let Some(x) = m.get(key) {
            if x.as_u64() != Some(want as u64) {
                return Err(perr(key, format!("declared {x} but data has {want}")));
            }
        }
    }
    KMatrix::from_rows(field, &data).map_err(|e| perr("data", e))
}

/// Coefficient grid document: `{"field": .., "coeffs": [[..], ..]}`.
pub fn coeffs_from_json(v: &Value) -> Result<Vec<Vec<Scalar>>> {
    let m = obj(v, "document")?;
    let field = field_of(m)?;
    rows_from_json(get(m, "coeffs")?, field, "coeffs")
}

pub fn coeffs_to_json(field: ScalarField, coeffs: &[Vec<Scalar>]) -> Value {
    json!({
        "field": field.symbol(),
        "coeffs": coeffs
            .iter()
            .map(|r| r.iter().map(|&z| scalar_to_json(z, field)).collect::<Vec<_>>())
            .collect::<Vec<_>>(),
    })
}

pub fn parse_str(text: &str) -> Result<Value> {
    serde_json::from_str(text).map_err(|e| Error::Parse(format!("line {} column {}: {e}", e.line(), e.column())))
}

pub fn load_json(path: &Path) -> Result<Value> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    parse_str(&text).map_err(|e| match e {
        Error::Parse(m) => Error::Parse(format!("{}: {m}", path.display())),
        other => other,
    })
}

/// Pretty-printed JSON with a trailing newline.
pub fn to_canonical_string(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("values built from finite numbers serialize");
    s.push('\n');
    s
}

pub fn save_json(path: &Path, v: &Value) -> Result<()> {
    std::fs::write(path, to_canonical_string(v)).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

pub fn load_frame(path: &Path) -> Result<WeightedFrame> {
    frame_from_json(&load_json(path)?)
}

pub fn load_ball(path: &Path) -> Result<DualBallSpec> {
    ball_from_json(&load_json(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::etf::build_maximal_etf;

    #[test]
    fn frame_round_trip_is_bit_exact() {
        for (f, n) in [(ScalarField::Real, 3), (ScalarField::Complex, 2)] {
            let frame = build_maximal_etf(f, n).unwrap().to_unit_tight_frame();
            let text = to_canonical_string(&frame_to_json(&frame));
            let back = frame_from_json(&parse_str(&text).unwrap()).unwrap();
            assert_eq!(back, frame);
            assert_eq!(to_canonical_string(&frame_to_json(&back)), text);
        }
    }

    #[test]
    fn awkward_floats_survive() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..2000 {
            let x: f64 = rng.random::<f64>() * 10f64.powi(rng.random_range(-300..300));
            let v = parse_str(&to_canonical_string(&json!([x]))).unwrap();
            assert_eq!(v[0].as_f64().unwrap().to_bits(), x.to_bits());
        }
    }

    #[test]
    fn mixed_entries_rejected() {
        let doc = r#"{"field": "R", "vectors": [[1.0, 0.0], [[0.5, 0.1], 1.0]]}"#;
        let err = frame_from_json(&parse_str(doc).unwrap()).unwrap_err();
        assert!(matches!(&err, Error::Parse(m) if m.starts_with("vectors[1][0]")), "{err}");
        let doc = r#"{"field": "C", "vectors": [[1.0, 0.0]]}"#;
        assert!(matches!(frame_from_json(&parse_str(doc).unwrap()), Err(Error::Parse(_))));
    }

    #[test]
    fn syntax_error_has_position() {
        let err = parse_str("{\n  \"field\": }").unwrap_err();
        assert!(matches!(&err, Error::Parse(m) if m.starts_with("line 2")), "{err}");
    }

    #[test]
    fn ball_and_matrix() {
        let etf = build_maximal_etf(ScalarField::Real, 2).unwrap();
        let ball = DualBallSpec::from_etf(&etf);
        let back = ball_from_json(&ball_to_json(&ball)).unwrap();
        assert_eq!(back.functionals().len(), 3);
        let m = KMatrix::identity(ScalarField::Complex, 2);
        assert_eq!(matrix_from_json(&matrix_to_json(&m)).unwrap(), m);
        let bad = json!({"field": "R", "rows": 3, "data": [[1.0]]});
        assert!(matrix_from_json(&bad).is_err());
    }
}
