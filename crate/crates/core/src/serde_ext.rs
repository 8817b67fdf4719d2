//! JSON helpers for floats that may be infinite or NaN.
//!
//! Plain serde_json writes non-finite floats as `null`, which then fails to
//! parse back into `f64`. These adapters write them as the strings `"inf"`,
//! `"-inf"` and `"nan"` instead.

use serde::{Deserialize, Deserializer, Serialize, Serializer};

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum Repr {
    Num(f64),
    Text(String),
}

fn to_repr(v: f64) -> Repr {
    if v.is_finite() {
        Repr::Num(v)
    } else if v.is_nan() {
        Repr::Text("nan".into())
    } else if v > 0.0 {
        Repr::Text("inf".into())
    } else {
        Repr::Text("-inf".into())
    }
}

fn from_repr<E: serde::de::Error>(r: Repr) -> Result<f64, E> {
    match r {
        Repr::Num(v) => Ok(v),
        Repr::Text(s) => match s.as_str() {
            "inf" => Ok(f64::INFINITY),
            "-inf" => Ok(f64::NEG_INFINITY),
            "nan" => Ok(f64::NAN),
            other => Err(E::custom(format!("expected a number, got {other:?}"))),
        },
    }
}

pub mod real {
    use super::*;

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        to_repr(*v).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        from_repr(Repr::deserialize(d)?)
    }
}

pub mod real_vec {
    use super::*;

    pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
        let reprs: Vec<Repr> = v.iter().map(|x| to_repr(*x)).collect();
        reprs.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        Vec::<Repr>::deserialize(d)?
            .into_iter()
            .map(from_repr)
            .collect()
    }
}

pub mod real_opt {
    use super::*;

    pub fn serialize<S: Serializer>(v: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
        v.map(to_repr).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
        Option::<Repr>::deserialize(d)?.map(from_repr).transpose()
    }
}

#[cfg(test)]
mod tests {
    use serde::{Deserialize, Serialize};

    #[derive(Serialize, Deserialize, Debug)]
    struct Probe {
        #[serde(with = "super::real")]
        a: f64,
        #[serde(with = "super::real_vec")]
        b: Vec<f64>,
        #[serde(with = "super::real_opt")]
        c: Option<f64>,
    }

    #[test]
    fn non_finite_round_trip() {
        let p = Probe {
            a: f64::NEG_INFINITY,
            b: vec![1.5, f64::INFINITY, f64::NAN],
            c: Some(f64::NEG_INFINITY),
        };
        let text = serde_json::to_string(&p).unwrap();
        assert_eq!(text, r#"{"a":"-inf","b":[1.5,"inf","nan"],"c":"-inf"}"#);
        let back: Probe = serde_json::from_str(&text).unwrap();
        assert_eq!(back.a, f64::NEG_INFINITY);
        assert!(back.b[2].is_nan());
        assert_eq!(back.c, Some(f64::NEG_INFINITY));
    }
}
