use std::fmt;
use std::str::FromStr;

use serde::de::{self, Deserializer, Visitor};
use serde::{Deserialize, Serialize, Serializer};

use crate::error::{invalid, Error, Result};

/// Entropic regularization strength.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EpsilonSpec {
    /// `0.05 × mean(M)`.
    Auto,
    /// A multiple of `mean(M)`.
    Relative(f64),
    Absolute(f64),
}

impl EpsilonSpec {
    pub const AUTO_SCALE: f64 = 0.05;

    pub fn resolve(self, mean_cost: f64) -> f64 {
        match self {
            EpsilonSpec::Auto => Self::AUTO_SCALE * mean_cost,
            EpsilonSpec::Relative(s) => s * mean_cost,
            EpsilonSpec::Absolute(e) => e,
        }
    }
}

impl fmt::Display for EpsilonSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EpsilonSpec::Auto => write!(f, "auto"),
            EpsilonSpec::Relative(s) => write!(f, "{s}xmean"),
            EpsilonSpec::Absolute(e) => write!(f, "{e}"),
        }
    }
}

impl FromStr for EpsilonSpec {
    type Err = Error;

    /// Accepts `auto`, `<float>` (absolute) or `<float>xmean` (relative to the mean cost).
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "auto" {
            return Ok(EpsilonSpec::Auto);
        }
        let (num, relative) = match s.strip_suffix("xmean") {
            Some(n) => (n, true),
            None => (s, false),
        };
        let v: f64 = num
            .parse()
            .map_err(|_| invalid!("epsilon must be auto, <float> or <float>xmean, got {s:?}"))?;
        if !(v > 0.0 && v.is_finite()) {
            return Err(invalid!("epsilon must be positive, got {v}"));
        }
        Ok(if relative {
            EpsilonSpec::Relative(v)
        } else {
            EpsilonSpec::Absolute(v)
        })
    }
}

/// Strength of the KL penalty on relaxed marginals; `Balanced` enforces them exactly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MarginalPenalty {
    Finite(f64),
    Balanced,
}

impl MarginalPenalty {
    /// Exponent applied to a relaxed marginal update, `λ / (λ + ε)`.
    pub fn exponent(self, epsilon: f64) -> f64 {
        match self {
            MarginalPenalty::Finite(l) => l / (l + epsilon),
            MarginalPenalty::Balanced => 1.0,
        }
    }

    pub fn is_balanced(self) -> bool {
        matches!(self, MarginalPenalty::Balanced)
    }
}

impl fmt::Display for MarginalPenalty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MarginalPenalty::Finite(l) => write!(f, "{l}"),
            MarginalPenalty::Balanced => write!(f, "inf"),
        }
    }
}

impl FromStr for MarginalPenalty {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "inf" || s == "balanced" {
            return Ok(MarginalPenalty::Balanced);
        }
        let v: f64 = s
            .parse()
            .map_err(|_| invalid!("lambda must be inf or a positive float, got {s:?}"))?;
        if v.is_infinite() && v > 0.0 {
            return Ok(MarginalPenalty::Balanced);
        }
        if !(v > 0.0 && v.is_finite()) {
            return Err(invalid!("lambda must be positive, got {v}"));
        }
        Ok(MarginalPenalty::Finite(v))
    }
}

struct StringOrNumber<T>(std::marker::PhantomData<T>);

impl<T: FromStr<Err = Error>> Visitor<'_> for StringOrNumber<T> {
    type Value = T;

    fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
        f.write_str("a number or a keyword string")
    }

    fn visit_str<E: de::Error>(self, v: &str) -> Result<T, E> {
        v.parse().map_err(E::custom)
    }

    fn visit_f64<E: de::Error>(self, v: f64) -> Result<T, E> {
        v.to_string().parse().map_err(E::custom)
    }

    fn visit_u64<E: de::Error>(self, v: u64) -> Result<T, E> {
        self.visit_f64(v as f64)
    }

    fn visit_i64<E: de::Error>(self, v: i64) -> Result<T, E> {
        self.visit_f64(v as f64)
    }
}

macro_rules! keyword_or_number_serde {
    ($ty:ty, $number:pat => $n:expr) => {
        impl Serialize for $ty {
            fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                match *self {
                    $number => s.serialize_f64($n),
                    _ => s.serialize_str(&self.to_string()),
                }
            }
        }

        impl<'de> Deserialize<'de> for $ty {
            fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
                d.deserialize_any(StringOrNumber(std::marker::PhantomData))
            }
        }
    };
}

keyword_or_number_serde!(EpsilonSpec, EpsilonSpec::Absolute(e) => e);
keyword_or_number_serde!(MarginalPenalty, MarginalPenalty::Finite(l) => l);

/// Which Sinkhorn variant to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Stabilization {
    /// Log domain when `ε < 0.01 × mean(M)`, direct kernel scaling otherwise.
    #[default]
    Auto,
    Log,
    Direct,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TransportConfig {
    pub epsilon: EpsilonSpec,
    pub marginal_penalty: MarginalPenalty,
    /// Relax the target marginal as well as the source marginal.
    pub relax_target: bool,
    pub max_inner_iters: usize,
    /// Sup-norm change of the log scaling vectors that counts as converged.
    pub inner_tol: f64,
    pub growth_iters: usize,
    /// Relative sup-norm change of the growth vector that ends reweighting early.
    pub growth_tol: f64,
    pub stabilization: Stabilization,
    /// Divide each gene by its pooled standard deviation before computing distances.
    pub zscore: bool,
}

impl Default for TransportConfig {
    fn default() -> Self {
        Self {
            epsilon: EpsilonSpec::Auto,
            marginal_penalty: MarginalPenalty::Finite(1.0),
            relax_target: false,
            max_inner_iters: 2000,
            inner_tol: 1e-8,
            growth_iters: 3,
            growth_tol: 1e-4,
            stabilization: Stabilization::Auto,
            zscore: false,
        }
    }
}

impl TransportConfig {
    /// Balanced configuration with the same solver settings and no growth reweighting.
    pub fn plain_ot(&self) -> Self {
        Self {
            marginal_penalty: MarginalPenalty::Balanced,
            relax_target: false,
            growth_iters: 0,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.epsilon {
            EpsilonSpec::Relative(v) | EpsilonSpec::Absolute(v) if !(v > 0.0 && v.is_finite()) => {
                return Err(invalid!("epsilon must be positive"))
            }
            _ => {}
        }
        if let MarginalPenalty::Finite(l) = self.marginal_penalty {
            if !(l > 0.0 && l.is_finite()) {
                return Err(invalid!("marginal penalty must be positive"));
            }
        }
        if self.max_inner_iters == 0 {
            return Err(invalid!("max_inner_iters must be positive"));
        }
        if !(self.inner_tol > 0.0 && self.growth_tol > 0.0) {
            return Err(invalid!("tolerances must be positive"));
        }
        Ok(())
    }
}
