//! Row image codec: fixed header, null bitmap, fixed-width numerics,
//! length-prefixed strings and blobs.

use crate::error::{Error, Result};
use crate::value::{ColumnType, Value};
use crate::wire::{Reader, Writer};

pub type Row = Vec<Value>;

/// Encode a row against its column types. The same codec serves full base
/// rows, clustered leaf payloads, and included-column images (with `types`
/// then covering just the included columns).
pub fn encode_row(types: &[ColumnType], row: &[Value]) -> Result<Vec<u8>> {
    if row.len() != types.len() {
        return Err(Error::SchemaMismatch(format!(
            "row has {} values, schema has {} columns",
            row.len(),
            types.len()
        )));
    }
    let mut w = Writer::new();
    w.u16(types.len() as u16);
    let mut bitmap = vec![0u8; types.len().div_ceil(8)];
    for (i, v) in row.iter().enumerate() {
        if v.is_null() {
            bitmap[i / 8] |= 1 << (i % 8);
        }
    }
    w.bytes(&bitmap);
    for (i, (v, &ty)) in row.iter().zip(types).enumerate() {
        if v.is_null() {
            continue;
        }
        if !v.matches_type(ty) {
            return Err(Error::SchemaMismatch(format!(
                "column {i} expects {}, got {}",
                ty.name(),
                v.type_of().map(|t| t.name()).unwrap_or("null")
            )));
        }
        match v {
            Value::Int(x) => {
                w.i64(*x);
            }
            Value::Float(x) => {
                w.f64(*x);
            }
            Value::Str(s) => {
                w.blob(s.as_bytes());
            }
            Value::Blob(b) => {
                w.blob(b);
            }
            Value::Null => unreachable!(),
        }
    }
    Ok(w.into_vec())
}

/// Decode a row image. Trailing bytes beyond the encoded row are ignored,
/// which lets heap records carry padding after the image.
pub fn decode_row(types: &[ColumnType], buf: &[u8]) -> Result<Row> {
    let mut r = Reader::new(buf);
    let n = r.u16()? as usize;
    if n != types.len() {
        return Err(Error::Corrupt(format!(
            "stored row has {n} columns, schema has {}",
            types.len()
        )));
    }
    let bitmap = r.bytes(n.div_ceil(8))?.to_vec();
    let mut row = Vec::with_capacity(n);
    for (i, &ty) in types.iter().enumerate() {
        if bitmap[i / 8] & (1 << (i % 8)) != 0 {
            row.push(Value::Null);
            continue;
        }
        row.push(match ty {
            ColumnType::Int64 => Value::Int(r.i64()?),
            ColumnType::Float64 => Value::Float(r.f64()?),
            ColumnType::String => {
                let raw = r.blob()?;
                Value::Str(
                    String::from_utf8(raw.to_vec())
                        .map_err(|_| Error::Corrupt("invalid utf-8 in row".into()))?,
                )
            }
            ColumnType::Blob => Value::Blob(r.blob()?.to_vec()),
        });
    }
    Ok(row)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema() -> Vec<ColumnType> {
        vec![
            ColumnType::Int64,
            ColumnType::Float64,
            ColumnType::String,
            ColumnType::Blob,
        ]
    }

    #[test]
    fn roundtrip() {
        let row = vec![
            Value::Int(-9),
            Value::Float(2.5),
            Value::Str("héllo".into()),
            Value::Blob(vec![0, 255]),
        ];
        let enc = encode_row(&schema(), &row).unwrap();
        let back = decode_row(&schema(), &enc).unwrap();
        for (a, b) in row.iter().zip(back.iter()) {
            assert!(a.total_eq(b));
        }
    }

    #[test]
    fn nulls_round_trip_and_shrink_encoding() {
        let full = encode_row(&schema(), &[
            Value::Int(1),
            Value::Float(1.0),
            Value::Str("x".into()),
            Value::Blob(vec![1]),
        ])
        .unwrap();
        let sparse_row = vec![Value::Null, Value::Null, Value::Null, Value::Null];
        let sparse = encode_row(&schema(), &sparse_row).unwrap();
        assert!(sparse.len() < full.len());
        let back = decode_row(&schema(), &sparse).unwrap();
        assert!(back.iter().all(Value::is_null));
    }

    #[test]
    fn trailing_padding_tolerated() {
        let row = vec![Value::Int(7), Value::Null, Value::Str(String::new()), Value::Null];
        let mut enc = encode_row(&schema(), &row).unwrap();
        enc.extend_from_slice(&[0; 16]);
        let back = decode_row(&schema(), &enc).unwrap();
        assert!(back[0].total_eq(&Value::Int(7)));
        assert!(back[1].is_null());
    }

    #[test]
    fn type_mismatch_rejected() {
        let err = encode_row(&schema(), &[
            Value::Str("not an int".into()),
            Value::Null,
            Value::Null,
            Value::Null,
        ])
        .unwrap_err();
        assert!(matches!(err, Error::SchemaMismatch(_)));
    }

    #[test]
    fn arity_mismatch_rejected() {
        assert!(encode_row(&schema(), &[Value::Int(1)]).is_err());
    }
}
