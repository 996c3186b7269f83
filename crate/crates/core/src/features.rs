//! Deterministic featurization of `(context, action)` pairs.
//!
//! Layout, in order:
//! country one-hot | merchant one-hot | mcc one-hot | device one-hot |
//! scaled amount | extra numerics | action one-hot | (country x action) one-hot.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::types::{ActionId, Context};

#[derive(Debug, Error, PartialEq)]
pub enum SchemaError {
    #[error("{field} id {value} out of range (cardinality {cardinality})")]
    OutOfRange {
        field: &'static str,
        value: u32,
        cardinality: u32,
    },
    #[error("expected {expected} extra numeric values, got {got}")]
    NumericDim { expected: usize, got: usize },
    #[error("non-finite numeric feature")]
    NonFinite,
    #[error("negative amount {0}")]
    NegativeAmount(f64),
}

/// 64-bit digest identifying a feature layout. Printed as 16 hex digits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Fingerprint(pub u64);

impl Fingerprint {
    pub fn of_bytes(bytes: &[u8]) -> Self {
        let digest = Sha256::digest(bytes);
        let mut head = [0u8; 8];
        head.copy_from_slice(&digest[..8]);
        Fingerprint(u64::from_be_bytes(head))
    }

    /// Fingerprint of an anonymous dense layout of `n` numeric slots.
    pub fn raw(n: usize) -> Self {
        Self::of_bytes(format!("raw-dense-v1|n={n}").as_bytes())
    }
}

impl fmt::Display for Fingerprint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:016x}", self.0)
    }
}

impl FromStr for Fingerprint {
    type Err = std::num::ParseIntError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        u64::from_str_radix(s, 16).map(Fingerprint)
    }
}

impl Serialize for Fingerprint {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Fingerprint {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Cardinalities and scaling bounds that fix the feature layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub countries: u32,
    pub merchants: u32,
    pub mccs: u32,
    pub devices: u32,
    pub extra_numeric_dim: usize,
    pub n_actions: u32,
    /// Min-max bounds for the amount slot; values outside are clamped.
    pub amount_min: f64,
    pub amount_max: f64,
}

/// Which block a slot index belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Slot {
    Country(u32),
    Merchant(u32),
    Mcc(u32),
    Device(u32),
    Amount,
    Extra(usize),
    Action(u32),
    CountryAction(u32, u32),
}

impl FeatureSchema {
    fn country_offset(&self) -> usize {
        0
    }
    fn merchant_offset(&self) -> usize {
        self.countries as usize
    }
    fn mcc_offset(&self) -> usize {
        self.merchant_offset() + self.merchants as usize
    }
    fn device_offset(&self) -> usize {
        self.mcc_offset() + self.mccs as usize
    }
    fn amount_offset(&self) -> usize {
        self.device_offset() + self.devices as usize
    }
    fn extra_offset(&self) -> usize {
        self.amount_offset() + 1
    }
    pub(crate) fn action_offset(&self) -> usize {
        self.extra_offset() + self.extra_numeric_dim
    }
    pub(crate) fn interaction_offset(&self) -> usize {
        self.action_offset() + self.n_actions as usize
    }

    pub fn len(&self) -> usize {
        self.interaction_offset() + (self.countries as usize) * (self.n_actions as usize)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn slot(&self, index: usize) -> Option<Slot> {
        let i = index;
        if i >= self.len() {
            return None;
        }
        Some(if i < self.merchant_offset() {
            Slot::Country((i - self.country_offset()) as u32)
        } else if i < self.mcc_offset() {
            Slot::Merchant((i - self.merchant_offset()) as u32)
        } else if i < self.device_offset() {
            Slot::Mcc((i - self.mcc_offset()) as u32)
        } else if i < self.amount_offset() {
            Slot::Device((i - self.device_offset()) as u32)
        } else if i < self.extra_offset() {
            Slot::Amount
        } else if i < self.action_offset() {
            Slot::Extra(i - self.extra_offset())
        } else if i < self.interaction_offset() {
            Slot::Action((i - self.action_offset()) as u32)
        } else {
            let k = i - self.interaction_offset();
            let n = self.n_actions as usize;
            Slot::CountryAction((k / n) as u32, (k % n) as u32)
        })
    }

    pub fn fingerprint(&self) -> Fingerprint {
        let canon = format!(
            "banditlab-schema-v1|countries={}|merchants={}|mccs={}|devices={}|xnum={}|actions={}|amount=[{:?},{:?}]",
            self.countries,
            self.merchants,
            self.mccs,
            self.devices,
            self.extra_numeric_dim,
            self.n_actions,
            self.amount_min,
            self.amount_max
        );
        Fingerprint::of_bytes(canon.as_bytes())
    }

    pub fn scale_amount(&self, amount: f64) -> f64 {
        let span = self.amount_max - self.amount_min;
        if span <= 0.0 {
            return 0.0;
        }
        ((amount - self.amount_min) / span).clamp(0.0, 1.0)
    }

    /// Bounds check for a context against this layout.
    pub fn validate(&self, ctx: &Context) -> Result<(), SchemaError> {
        check("country", ctx.country, self.countries)?;
        check("merchant", ctx.merchant, self.merchants)?;
        check("mcc", ctx.merchant_category, self.mccs)?;
        check("device", ctx.device_type, self.devices)?;
        if ctx.extra_numeric.len() != self.extra_numeric_dim {
            return Err(SchemaError::NumericDim {
                expected: self.extra_numeric_dim,
                got: ctx.extra_numeric.len(),
            });
        }
        if !ctx.amount.is_finite() || ctx.extra_numeric.iter().any(|v| !v.is_finite()) {
            return Err(SchemaError::NonFinite);
        }
        if ctx.amount < 0.0 {
            return Err(SchemaError::NegativeAmount(ctx.amount));
        }
        Ok(())
    }
}

fn check(field: &'static str, value: u32, cardinality: u32) -> Result<(), SchemaError> {
    if value >= cardinality {
        Err(SchemaError::OutOfRange {
            field,
            value,
            cardinality,
        })
    } else {
        Ok(())
    }
}

/// Dense feature vector tagged with the layout it was built under.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub schema: Fingerprint,
}

impl FeatureVector {
    /// A vector over an anonymous dense layout; see [`Fingerprint::raw`].
    pub fn raw(values: Vec<f64>) -> Self {
        let schema = Fingerprint::raw(values.len());
        Self { values, schema }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

pub fn featurize(
    ctx: &Context,
    action: ActionId,
    schema: &FeatureSchema,
) -> Result<FeatureVector, SchemaError> {
    schema.validate(ctx)?;
    check("action", action.0, schema.n_actions)?;
    let mut values = vec![0.0; schema.len()];
    values[schema.country_offset() + ctx.country as usize] = 1.0;
    values[schema.merchant_offset() + ctx.merchant as usize] = 1.0;
    values[schema.mcc_offset() + ctx.merchant_category as usize] = 1.0;
    values[schema.device_offset() + ctx.device_type as usize] = 1.0;
    values[schema.amount_offset()] = schema.scale_amount(ctx.amount);
    values[schema.extra_offset()..schema.action_offset()].copy_from_slice(&ctx.extra_numeric);
    values[schema.action_offset() + action.index()] = 1.0;
    let n = schema.n_actions as usize;
    values[schema.interaction_offset() + ctx.country as usize * n + action.index()] = 1.0;
    Ok(FeatureVector {
        values,
        schema: schema.fingerprint(),
    })
}
