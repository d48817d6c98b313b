//! Closed-form function tags used by experiment descriptions, e.g.
//! `power:-0.75`, `indicator:[0.5,1]`, `bessel:1:5`, `sin:3`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::operator::GroundSpace;
use crate::scaling::bessel_j;

#[derive(Debug, Clone, PartialEq)]
pub enum FunctionTag {
    /// `x^p`.
    Power(f64),
    /// `1` on `[a, b]`, `0` elsewhere.
    Indicator(f64, f64),
    /// `J_ν(a √x)`.
    Bessel { order: f64, scale: f64 },
    /// `sin(k x)`.
    Sin(f64),
    /// `cos(k x)`.
    Cos(f64),
    /// `exp(c x)`.
    Exp(f64),
    Constant(f64),
}

impl FunctionTag {
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            FunctionTag::Power(p) => x.powf(p),
            FunctionTag::Indicator(a, b) => {
                if (a..=b).contains(&x) {
                    1.0
                } else {
                    0.0
                }
            }
            FunctionTag::Bessel { order, scale } => bessel_j(order, scale * x.max(0.0).sqrt()),
            FunctionTag::Sin(k) => (k * x).sin(),
            FunctionTag::Cos(k) => (k * x).cos(),
            FunctionTag::Exp(c) => (c * x).exp(),
            FunctionTag::Constant(c) => c,
        }
    }

    /// Samples the function on the grid; non-finite values are an error.
    pub fn sample(&self, space: &GroundSpace) -> Result<Vec<f64>> {
        let v = space.sample(|x| self.eval(x));
        if let Some((i, y)) = v.iter().enumerate().find(|(_, y)| !y.is_finite()) {
            return Err(Error::Domain(format!(
                "{self} is not finite at grid point {i} (value {y})"
            )));
        }
        Ok(v)
    }
}

fn number(s: &str, tag: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| Error::Format(format!("bad number {s:?} in function tag {tag:?}")))
}

impl FromStr for FunctionTag {
    type Err = Error;

    fn from_str(tag: &str) -> Result<Self> {
        let (kind, arg) = tag
            .split_once(':')
            .ok_or_else(|| Error::Format(format!("function tag {tag:?} lacks a `kind:` prefix")))?;
        match kind.trim() {
            "power" => Ok(FunctionTag::Power(number(arg, tag)?)),
            "indicator" => {
                let inner = arg
                    .trim()
                    .strip_prefix('[')
                    .and_then(|r| r.strip_suffix(']'))
                    .ok_or_else(|| Error::Format(format!("indicator tag {tag:?} needs [a,b]")))?;
                let (a, b) = inner
                    .split_once(',')
                    .ok_or_else(|| Error::Format(format!("indicator tag {tag:?} needs [a,b]")))?;
                let (a, b) = (number(a, tag)?, number(b, tag)?);
                if !(a <= b) {
                    return Err(Error::Format(format!("indicator tag {tag:?} has a > b")));
                }
                Ok(FunctionTag::Indicator(a, b))
            }
            "bessel" => {
                let (order, scale) = arg
                    .split_once(':')
                    .ok_or_else(|| Error::Format(format!("bessel tag {tag:?} needs order:scale")))?;
                Ok(FunctionTag::Bessel {
                    order: number(order, tag)?,
                    scale: number(scale, tag)?,
                })
            }
            "sin" => Ok(FunctionTag::Sin(number(arg, tag)?)),
            "cos" => Ok(FunctionTag::Cos(number(arg, tag)?)),
            "exp" => Ok(FunctionTag::Exp(number(arg, tag)?)),
            "constant" => Ok(FunctionTag::Constant(number(arg, tag)?)),
            other => Err(Error::Format(format!("unknown function tag kind {other:?}"))),
        }
    }
}

impl fmt::Display for FunctionTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FunctionTag::Power(p) => write!(f, "power:{p}"),
            FunctionTag::Indicator(a, b) => write!(f, "indicator:[{a},{b}]"),
            FunctionTag::Bessel { order, scale } => write!(f, "bessel:{order}:{scale}"),
            FunctionTag::Sin(k) => write!(f, "sin:{k}"),
            FunctionTag::Cos(k) => write!(f, "cos:{k}"),
            FunctionTag::Exp(c) => write!(f, "exp:{c}"),
            FunctionTag::Constant(c) => write!(f, "constant:{c}"),
        }
    }
}

impl Serialize for FunctionTag {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for FunctionTag {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// A grid function given either by a tag or by explicit values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FunctionSpec {
    Tag(FunctionTag),
    Values(Vec<f64>),
}

impl FunctionSpec {
    pub fn sample(&self, space: &GroundSpace) -> Result<Vec<f64>> {
        match self {
            FunctionSpec::Tag(t) => t.sample(space),
            FunctionSpec::Values(v) => {
                crate::error::check_len(space.len(), v.len())?;
                Ok(v.clone())
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_display_round_trip() {
        for tag in ["power:-0.75", "indicator:[0.5,1]", "bessel:1:5", "sin:3", "cos:2.5", "exp:-1", "constant:2"] {
            let t: FunctionTag = tag.parse().unwrap();
            assert_eq!(t.to_string().parse::<FunctionTag>().unwrap(), t);
        }
        assert_eq!("power:-0.75".parse::<FunctionTag>().unwrap(), FunctionTag::Power(-0.75));
        assert!("indicator:[1,0]".parse::<FunctionTag>().is_err());
        assert!("wave:3".parse::<FunctionTag>().is_err());
        assert!("power".parse::<FunctionTag>().is_err());
    }

    #[test]
    fn evaluation() {
        assert_eq!(FunctionTag::Power(-0.75).eval(16.0), 0.125);
        assert_eq!(FunctionTag::Indicator(0.5, 1.0).eval(0.5), 1.0);
        assert_eq!(FunctionTag::Indicator(0.5, 1.0).eval(0.4), 0.0);
        let s = GroundSpace::midpoint(-1.0, 1.0, 4).unwrap();
        assert!(FunctionTag::Power(-0.5).sample(&s).is_err());
    }

    #[test]
    fn spec_from_json() {
        let v: Vec<FunctionSpec> = serde_json::from_str(r#"["power:-0.75", [1.0, 2.0]]"#).unwrap();
        assert_eq!(v[0], FunctionSpec::Tag(FunctionTag::Power(-0.75)));
        assert_eq!(v[1], FunctionSpec::Values(vec![1.0, 2.0]));
    }
}
