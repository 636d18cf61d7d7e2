//! Serde adapter for maps keyed by agent id.
//!
//! JSON object keys are strings; reading them back as integers fails once the
//! map sits inside an internally tagged enum, so keys go through `String`.

use std::collections::BTreeMap;

use serde::de::Error;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::world::AgentId;

pub fn serialize<V: Serialize, S: Serializer>(map: &BTreeMap<AgentId, V>, s: S) -> Result<S::Ok, S::Error> {
    s.collect_map(map.iter().map(|(k, v)| (k.to_string(), v)))
}

pub fn deserialize<'de, V: Deserialize<'de>, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<AgentId, V>, D::Error> {
    BTreeMap::<String, V>::deserialize(d)?
        .into_iter()
        .map(|(k, v)| {
            k.parse()
                .map(|k| (k, v))
                .map_err(|_| D::Error::custom(format!("agent id key `{k}` is not an integer")))
        })
        .collect()
}
