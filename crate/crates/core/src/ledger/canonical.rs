//! Canonical text encoding used for every hash and auth tag.
//!
//! The encoding is JSON with map keys in byte-lexicographic order, no
//! insignificant whitespace and base-10 integers. Floating point values are
//! rejected outright: every numeric quantity in the protocol is an integer.

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum CanonicalError {
    #[error("non-integer number at {path}")]
    NonInteger { path: String },
    #[error("value cannot be represented: {0}")]
    Unrepresentable(String),
}

/// Serializes `value` into canonical bytes.
pub fn canonical_serialize<T: Serialize + ?Sized>(value: &T) -> Result<Vec<u8>, CanonicalError> {
    // serde_json maps NaN and infinities to null, so floats are caught before conversion.
    value.serialize(probe::FloatProbe).map_err(|_| CanonicalError::NonInteger { path: "$".into() })?;
    let value = serde_json::to_value(value).map_err(|e| CanonicalError::Unrepresentable(e.to_string()))?;
    canonical_value_bytes(&value)
}

/// Canonical bytes of an already-built JSON value.
pub fn canonical_value_bytes(value: &Value) -> Result<Vec<u8>, CanonicalError> {
    let mut out = Vec::with_capacity(128);
    write_value(value, &mut out, &mut String::from("$"))?;
    Ok(out)
}

/// Lowercase hex SHA-256 of arbitrary bytes.
pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn write_value(value: &Value, out: &mut Vec<u8>, path: &mut String) -> Result<(), CanonicalError> {
    match value {
        Value::Null => out.extend_from_slice(b"null"),
        Value::Bool(true) => out.extend_from_slice(b"true"),
        Value::Bool(false) => out.extend_from_slice(b"false"),
        Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                out.extend_from_slice(i.to_string().as_bytes());
            } else if let Some(u) = n.as_u64() {
                out.extend_from_slice(u.to_string().as_bytes());
            } else {
                return Err(CanonicalError::NonInteger { path: path.clone() });
            }
        }
        Value::String(s) => write_string(s, out),
        Value::Array(items) => {
            out.push(b'[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(b',');
                }
                let len = path.len();
                path.push_str(&format!("[{i}]"));
                write_value(item, out, path)?;
                path.truncate(len);
            }
            out.push(b']');
        }
        Value::Object(map) => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort_unstable_by(|a, b| a.as_bytes().cmp(b.as_bytes()));
            out.push(b'{');
            for (i, key) in keys.into_iter().enumerate() {
                if i > 0 {
                    out.push(b',');
                }
                write_string(key, out);
                out.push(b':');
                let len = path.len();
                path.push('.');
                path.push_str(key);
                write_value(&map[key], out, path)?;
                path.truncate(len);
            }
            out.push(b'}');
        }
    }
    Ok(())
}

fn write_string(s: &str, out: &mut Vec<u8>) {
    // serde_json's string escaping is already minimal and deterministic.
    let quoted = serde_json::to_string(s).expect("string serialization is infallible");
    out.extend_from_slice(quoted.as_bytes());
}

mod probe {
    //! A serializer that walks a value and fails on the first float it meets.
    use serde::ser::{self, Serialize};
    use std::fmt;

    #[derive(Debug)]
    pub struct FloatFound;

    impl fmt::Display for FloatFound {
        fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
            f.write_str("float")
        }
    }

    impl std::error::Error for FloatFound {}

    impl ser::Error for FloatFound {
        fn custom<T: fmt::Display>(_: T) -> Self {
            FloatFound
        }
    }

    pub struct FloatProbe;

    type R = Result<(), FloatFound>;

    macro_rules! ok {
        ($($name:ident($($ty:ty),*);)*) => {
            $(fn $name(self, $(_: $ty),*) -> R { Ok(()) })*
        };
    }

    macro_rules! compound {
        ($($tr:ident :: $m:ident;)*) => {
            $(impl ser::$tr for FloatProbe {
                type Ok = ();
                type Error = FloatFound;
                fn $m<T: ?Sized + Serialize>(&mut self, v: &T) -> R {
                    v.serialize(FloatProbe)
                }
                fn end(self) -> R {
                    Ok(())
                }
            })*
        };
    }

    compound! {
        SerializeSeq::serialize_element;
        SerializeTuple::serialize_element;
        SerializeTupleStruct::serialize_field;
        SerializeTupleVariant::serialize_field;
    }

    impl ser::SerializeMap for FloatProbe {
        type Ok = ();
        type Error = FloatFound;
        fn serialize_key<T: ?Sized + Serialize>(&mut self, k: &T) -> R {
            k.serialize(FloatProbe)
        }
        fn serialize_value<T: ?Sized + Serialize>(&mut self, v: &T) -> R {
            v.serialize(FloatProbe)
        }
        fn end(self) -> R {
            Ok(())
        }
    }

    impl ser::SerializeStruct for FloatProbe {
        type Ok = ();
        type Error = FloatFound;
        fn serialize_field<T: ?Sized + Serialize>(&mut self, _: &'static str, v: &T) -> R {
            v.serialize(FloatProbe)
        }
        fn end(self) -> R {
            Ok(())
        }
    }

    impl ser::SerializeStructVariant for FloatProbe {
        type Ok = ();
        type Error = FloatFound;
        fn serialize_field<T: ?Sized + Serialize>(&mut self, _: &'static str, v: &T) -> R {
            v.serialize(FloatProbe)
        }
        fn end(self) -> R {
            Ok(())
        }
    }

    impl ser::Serializer for FloatProbe {
        type Ok = ();
        type Error = FloatFound;
        type SerializeSeq = Self;
        type SerializeTuple = Self;
        type SerializeTupleStruct = Self;
        type SerializeTupleVariant = Self;
        type SerializeMap = Self;
        type SerializeStruct = Self;
        type SerializeStructVariant = Self;

        ok! {
            serialize_bool(bool);
            serialize_i8(i8);
            serialize_i16(i16);
            serialize_i32(i32);
            serialize_i64(i64);
            serialize_i128(i128);
            serialize_u8(u8);
            serialize_u16(u16);
            serialize_u32(u32);
            serialize_u64(u64);
            serialize_u128(u128);
            serialize_char(char);
            serialize_str(&str);
            serialize_bytes(&[u8]);
            serialize_none();
            serialize_unit();
            serialize_unit_struct(&'static str);
            serialize_unit_variant(&'static str, u32, &'static str);
        }

        fn serialize_f32(self, _: f32) -> R {
            Err(FloatFound)
        }
        fn serialize_f64(self, _: f64) -> R {
            Err(FloatFound)
        }
        fn serialize_some<T: ?Sized + Serialize>(self, v: &T) -> R {
            v.serialize(self)
        }
        fn serialize_newtype_struct<T: ?Sized + Serialize>(self, _: &'static str, v: &T) -> R {
            v.serialize(self)
        }
        fn serialize_newtype_variant<T: ?Sized + Serialize>(
            self,
            _: &'static str,
            _: u32,
            _: &'static str,
            v: &T,
        ) -> R {
            v.serialize(self)
        }
        fn serialize_seq(self, _: Option<usize>) -> Result<Self, FloatFound> {
            Ok(self)
        }
        fn serialize_tuple(self, _: usize) -> Result<Self, FloatFound> {
            Ok(self)
        }
        fn serialize_tuple_struct(self, _: &'static str, _: usize) -> Result<Self, FloatFound> {
            Ok(self)
        }
        fn serialize_tuple_variant(
            self,
            _: &'static str,
            _: u32,
            _: &'static str,
            _: usize,
        ) -> Result<Self, FloatFound> {
            Ok(self)
        }
        fn serialize_map(self, _: Option<usize>) -> Result<Self, FloatFound> {
            Ok(self)
        }
        fn serialize_struct(self, _: &'static str, _: usize) -> Result<Self, FloatFound> {
            Ok(self)
        }
        fn serialize_struct_variant(
            self,
            _: &'static str,
            _: u32,
            _: &'static str,
            _: usize,
        ) -> Result<Self, FloatFound> {
            Ok(self)
        }
    }
}
