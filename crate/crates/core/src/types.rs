//! Shared domain types: contexts, action ids, eligible sets, logged records
//! and seeded random streams.

use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Index of an action in the global catalog `[0, A_max)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ActionId(pub u32);

impl ActionId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for ActionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// One transaction-like round as seen by the policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Context {
    /// Transaction amount in currency units, never negative.
    pub amount: f64,
    pub country: u32,
    pub merchant: u32,
    #[serde(rename = "mcc")]
    pub merchant_category: u32,
    #[serde(rename = "device")]
    pub device_type: u32,
    #[serde(rename = "xnum")]
    pub extra_numeric: Vec<f64>,
}

/// The per-round partition of the catalog into eligible and excluded actions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionSet {
    pub eligible: Vec<ActionId>,
    pub excluded_by_rule: Vec<ActionId>,
    pub excluded_by_risk: Vec<ActionId>,
}

impl ActionSet {
    pub fn len(&self) -> usize {
        self.eligible.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eligible.is_empty()
    }
}

/// One unit of logged bandit feedback.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    #[serde(rename = "gen")]
    pub generation: u32,
    #[serde(rename = "t")]
    pub round: u64,
    #[serde(rename = "ctx")]
    pub context: Context,
    pub eligible: Vec<ActionId>,
    pub chosen: ActionId,
    /// Logging-policy probability of `chosen`, in `(0, 1]`.
    pub propensity: f64,
    pub reward: u8,
    /// Whether `chosen` was the oracle argmax over `eligible`.
    #[serde(rename = "greedy")]
    pub was_greedy: bool,
}

impl LogRecord {
    /// Sorted, comma-joined eligible ids; the grouping key used for diversity metrics.
    pub fn eligible_signature(&self) -> String {
        let mut ids: Vec<u32> = self.eligible.iter().map(|a| a.0).collect();
        ids.sort_unstable();
        ids.iter()
            .map(|i| i.to_string())
            .collect::<Vec<_>>()
            .join(",")
    }
}

/// A named, reproducible random stream: identical `(seed, stream_id)` pairs
/// yield identical draw sequences.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngStream {
    pub seed: u64,
    pub stream_id: u64,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        Self { seed, stream_id }
    }

    /// A sub-stream keyed by `tags`; distinct tag paths give independent streams.
    pub fn derive(&self, tags: &[u64]) -> Self {
        let mut id = self.stream_id;
        for &tag in tags {
            id = splitmix64(id ^ splitmix64(tag.wrapping_add(0x51_7c_c1_b7_27_22_0a_95)));
        }
        Self {
            seed: self.seed,
            stream_id: id,
        }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream_id);
        rng
    }
}

pub(crate) fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
