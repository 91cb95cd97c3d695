//! Order-preserving key encoding.
//!
//! A composite key encodes column by column; plain bytewise comparison of
//! two encodings equals tuple comparison of the values. Per column:
//!
//! - NULL: `0x00` (sorts before every value)
//! - int64: `0x01` then 8 big-endian bytes with the sign bit flipped
//! - float64: `0x01` then 8 big-endian bytes of the IEEE total-order
//!   transform (so NaN and -0.0 order consistently with `Value::total_cmp`)
//! - string: `0x02` then the UTF-8 bytes with `0x00` escaped as
//!   `0x00 0xFF`, closed by `0x00 0x00`
//!
//! No column encoding is a proper prefix of a different value's encoding,
//! so a composite prefix (the first k columns) delimits exactly the range
//! of full keys extending it. Blobs are rejected as key columns at DDL
//! time and have no encoding.

use crate::error::{Error, Result};
use crate::value::{ColumnType, Value};

const TAG_NULL: u8 = 0x00;
const TAG_NUM: u8 = 0x01;
const TAG_STR: u8 = 0x02;

const SIGN: u64 = 1 << 63;

pub fn encode_value(out: &mut Vec<u8>, v: &Value) -> Result<()> {
    match v {
        Value::Null => out.push(TAG_NULL),
        Value::Int(x) => {
            out.push(TAG_NUM);
            out.extend_from_slice(&((*x as u64) ^ SIGN).to_be_bytes());
        }
        Value::Float(x) => {
            out.push(TAG_NUM);
            let b = x.to_bits();
            let t = if b & SIGN != 0 { !b } else { b ^ SIGN };
            out.extend_from_slice(&t.to_be_bytes());
        }
        Value::Str(s) => {
            out.push(TAG_STR);
            for &b in s.as_bytes() {
                if b == 0x00 {
                    out.extend_from_slice(&[0x00, 0xFF]);
                } else {
                    out.push(b);
                }
            }
            out.extend_from_slice(&[0x00, 0x00]);
        }
        Value::Blob(_) => {
            return Err(Error::TypeMismatch("blob values have no key encoding".into()))
        }
    }
    Ok(())
}

pub fn encode_key(values: &[Value]) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(values.len() * 9);
    for v in values {
        encode_value(&mut out, v)?;
    }
    Ok(out)
}

/// Decode one column's value, advancing `pos`. `ty` disambiguates the
/// shared numeric tag.
pub fn decode_value(buf: &[u8], pos: &mut usize, ty: ColumnType) -> Result<Value> {
    let corrupt = || Error::Corrupt("truncated key encoding".into());
    let tag = *buf.get(*pos).ok_or_else(corrupt)?;
    *pos += 1;
    if tag == TAG_NULL {
        return Ok(Value::Null);
    }
    match ty {
        ColumnType::Int64 | ColumnType::Float64 => {
            if tag != TAG_NUM || buf.len() < *pos + 8 {
                return Err(corrupt());
            }
            let raw = u64::from_be_bytes(buf[*pos..*pos + 8].try_into().unwrap());
            *pos += 8;
            match ty {
                ColumnType::Int64 => Ok(Value::Int((raw ^ SIGN) as i64)),
                _ => {
                    let b = if raw & SIGN != 0 { raw ^ SIGN } else { !raw };
                    Ok(Value::Float(f64::from_bits(b)))
                }
            }
        }
        ColumnType::String => {
            if tag != TAG_STR {
                return Err(corrupt());
            }
            let mut bytes = Vec::new();
            loop {
                let b = *buf.get(*pos).ok_or_else(corrupt)?;
                *pos += 1;
                if b != 0x00 {
                    bytes.push(b);
                    continue;
                }
                let esc = *buf.get(*pos).ok_or_else(corrupt)?;
                *pos += 1;
                match esc {
                    0x00 => break,
                    0xFF => bytes.push(0x00),
                    _ => return Err(corrupt()),
                }
            }
            String::from_utf8(bytes)
                .map(Value::Str)
                .map_err(|_| Error::Corrupt("invalid utf-8 in key".into()))
        }
        ColumnType::Blob => Err(corrupt()),
    }
}

pub fn decode_key(buf: &[u8], types: &[ColumnType]) -> Result<Vec<Value>> {
    let mut pos = 0;
    let mut out = Vec::with_capacity(types.len());
    for &ty in types {
        out.push(decode_value(buf, &mut pos, ty)?);
    }
    if pos != buf.len() {
        return Err(Error::Corrupt("trailing bytes after key".into()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::cmp::Ordering;

    fn enc1(v: &Value) -> Vec<u8> {
        let mut out = Vec::new();
        encode_value(&mut out, v).unwrap();
        out
    }

    #[test]
    fn null_sorts_first() {
        assert!(enc1(&Value::Null) < enc1(&Value::Int(i64::MIN)));
        assert!(enc1(&Value::Null) < enc1(&Value::Float(f64::NEG_INFINITY)));
        assert!(enc1(&Value::Null) < enc1(&Value::Str(String::new())));
    }

    #[test]
    fn embedded_nul_ordering() {
        let a = Value::Str("a".into());
        let a0 = Value::Str("a\0".into());
        let a0b = Value::Str("a\0b".into());
        let ab = Value::Str("ab".into());
        let mut encs = vec![enc1(&ab), enc1(&a0b), enc1(&a), enc1(&a0)];
        encs.sort();
        assert_eq!(encs, vec![enc1(&a), enc1(&a0), enc1(&a0b), enc1(&ab)]);
    }

    #[test]
    fn float_total_order_specials() {
        let vals = [
            f64::NEG_INFINITY,
            -1.5,
            -0.0,
            0.0,
            f64::MIN_POSITIVE,
            1.5,
            f64::INFINITY,
            f64::NAN,
        ];
        for w in vals.windows(2) {
            assert!(
                enc1(&Value::Float(w[0])) < enc1(&Value::Float(w[1])),
                "{} !< {}",
                w[0],
                w[1]
            );
        }
    }

    #[test]
    fn composite_prefix_delimits_extensions() {
        // Every key starting with enc(5) is a bytewise extension of the
        // one-column prefix, and keys for other leading values fall outside.
        let prefix = encode_key(&[Value::Int(5)]).unwrap();
        let inside = encode_key(&[Value::Int(5), Value::Str("x".into())]).unwrap();
        let below = encode_key(&[Value::Int(4), Value::Str("zzz".into())]).unwrap();
        let above = encode_key(&[Value::Int(6), Value::Null]).unwrap();
        assert!(inside.starts_with(&prefix));
        assert!(below < prefix && !below.starts_with(&prefix));
        assert!(above > prefix && !above.starts_with(&prefix));
    }

    fn arb_value() -> impl Strategy<Value = Value> {
        prop_oneof![
            Just(Value::Null),
            any::<i64>().prop_map(Value::Int),
            any::<f64>().prop_map(Value::Float),
            prop_oneof![
                Just(f64::NAN),
                Just(-f64::NAN),
                Just(0.0),
                Just(-0.0),
                Just(f64::INFINITY)
            ]
            .prop_map(Value::Float),
            "[\\x00-\\x7F]{0,12}".prop_map(Value::Str),
            "\\PC{0,8}".prop_map(Value::Str),
        ]
    }

    /// One column position: a type plus two values that are each either
    /// NULL or of that type, the shape real composite keys compare under.
    fn arb_column_pair() -> impl Strategy<Value = (Value, Value)> {
        let of_type = |ty: ColumnType| -> BoxedStrategy<Value> {
            match ty {
                ColumnType::Int64 => prop_oneof![
                    1 => Just(Value::Null),
                    4 => any::<i64>().prop_map(Value::Int),
                    2 => (-3i64..3).prop_map(Value::Int),
                ]
                .boxed(),
                ColumnType::Float64 => prop_oneof![
                    1 => Just(Value::Null),
                    3 => any::<f64>().prop_map(Value::Float),
                    2 => prop_oneof![
                        Just(f64::NAN),
                        Just(-f64::NAN),
                        Just(0.0),
                        Just(-0.0),
                        Just(f64::NEG_INFINITY)
                    ]
                    .prop_map(Value::Float),
                ]
                .boxed(),
                _ => prop_oneof![
                    1 => Just(Value::Null),
                    4 => "[\\x00-\\x7F]{0,8}".prop_map(Value::Str),
                    2 => "[ab\\x00]{0,3}".prop_map(Value::Str),
                ]
                .boxed(),
            }
        };
        prop_oneof![
            Just(ColumnType::Int64),
            Just(ColumnType::Float64),
            Just(ColumnType::String)
        ]
        .prop_flat_map(move |ty| (of_type(ty), of_type(ty)))
    }

    fn cmp_tuple(a: &[Value], b: &[Value]) -> Ordering {
        for (x, y) in a.iter().zip(b.iter()) {
            match x.total_cmp(y) {
                Ordering::Equal => continue,
                o => return o,
            }
        }
        a.len().cmp(&b.len())
    }

    proptest! {
        #[test]
        fn bytewise_order_matches_tuple_order(
            cols in prop::collection::vec(arb_column_pair(), 1..4),
        ) {
            let a: Vec<Value> = cols.iter().map(|(x, _)| x.clone()).collect();
            let b: Vec<Value> = cols.iter().map(|(_, y)| y.clone()).collect();
            let ea = encode_key(&a).unwrap();
            let eb = encode_key(&b).unwrap();
            prop_assert_eq!(ea.cmp(&eb), cmp_tuple(&a, &b));
        }

        #[test]
        fn encode_decode_roundtrip(vals in prop::collection::vec(arb_value(), 1..4)) {
            let enc = encode_key(&vals).unwrap();
            let types: Vec<ColumnType> = vals
                .iter()
                .map(|v| v.type_of().unwrap_or(ColumnType::Int64))
                .collect();
            // NULL columns decode under any type; map them to int64 above.
            let back = decode_key(&enc, &types).unwrap();
            for (orig, dec) in vals.iter().zip(back.iter()) {
                prop_assert!(orig.total_eq(dec), "{:?} vs {:?}", orig, dec);
            }
        }

        #[test]
        fn no_proper_prefix_between_distinct_values(a in arb_value(), b in arb_value()) {
            let compatible = a.is_null() || b.is_null() || a.type_of() == b.type_of();
            prop_assume!(compatible);
            prop_assume!(!a.total_eq(&b));
            let ea = enc1(&a);
            let eb = enc1(&b);
            prop_assert!(!ea.starts_with(&eb) && !eb.starts_with(&ea));
        }
    }
}
