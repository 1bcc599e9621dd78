//! JSON configuration format for structural models.
//!
//! Threshold tables are flat maps with compound keys so configs stay
//! readable and diffable:
//!
//! ```text
//! mu_table[t]: { "y=<bits>,d=<bits>,x=<index>": threshold, ... }
//! pi_table[t]: { "y=<bits>,d=<bits>,z=<0|1>":  threshold, ... }
//! ```
//!
//! Bit strings are written oldest period first and are empty at period 0.
//! Thresholds are JSON numbers, or the strings `"+inf"`/`"-inf"` for
//! deterministic cells. Every cell must be present exactly once; missing and
//! unexpected keys are reported by name.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::de::Visitor;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::bits::Bits;
use crate::error::{Error, Result};
use crate::model::latent::LatentSpec;
use crate::model::structural::{Horizon, StructuralModel, XGrid};
use crate::model::tables::{MuTable, PiTable};

/// Threshold that serializes infinities as `"+inf"`/`"-inf"`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Threshold(pub f64);

impl Serialize for Threshold {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if self.0 == f64::INFINITY {
            s.serialize_str("+inf")
        } else if self.0 == f64::NEG_INFINITY {
            s.serialize_str("-inf")
        } else {
            s.serialize_f64(self.0)
        }
    }
}

impl<'de> Deserialize<'de> for Threshold {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct V;
        impl Visitor<'_> for V {
            type Value = Threshold;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                write!(f, "a number or \"+inf\"/\"-inf\"")
            }
            fn visit_f64<E: serde::de::Error>(self, v: f64) -> std::result::Result<Threshold, E> {
                Ok(Threshold(v))
            }
            fn visit_i64<E: serde::de::Error>(self, v: i64) -> std::result::Result<Threshold, E> {
                Ok(Threshold(v as f64))
            }
            fn visit_u64<E: serde::de::Error>(self, v: u64) -> std::result::Result<Threshold, E> {
                Ok(Threshold(v as f64))
            }
            fn visit_str<E: serde::de::Error>(self, v: &str) -> std::result::Result<Threshold, E> {
                match v {
                    "+inf" | "inf" => Ok(Threshold(f64::INFINITY)),
                    "-inf" => Ok(Threshold(f64::NEG_INFINITY)),
                    _ => Err(E::custom(format!(
                        "threshold string {v:?}; expected \"+inf\" or \"-inf\""
                    ))),
                }
            }
        }
        d.deserialize_any(V)
    }
}

/// Serializable form of [`StructuralModel`].
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub horizon: usize,
    pub x_grid: Vec<Vec<f64>>,
    pub x_law: Vec<Vec<f64>>,
    pub z_law: Vec<f64>,
    pub mu_table: Vec<BTreeMap<String, Threshold>>,
    pub pi_table: Vec<BTreeMap<String, Threshold>>,
    pub latent: LatentSpec,
    #[serde(default)]
    pub irreversible_y: bool,
    #[serde(default)]
    pub irreversible_d: bool,
}

impl ModelConfig {
    pub fn from_model(m: &StructuralModel) -> Self {
        let mut mu_table = Vec::new();
        let mut pi_table = Vec::new();
        for t in m.horizon.periods() {
            let mut mu = BTreeMap::new();
            for y in Bits::enumerate(t) {
                for d in Bits::enumerate(t + 1) {
                    for x in 0..m.x_grid.k(t) {
                        mu.insert(
                            format!("y={y},d={d},x={x}"),
                            Threshold(m.mu_at(t, y, d, x)),
                        );
                    }
                }
            }
            mu_table.push(mu);
            let mut pi = BTreeMap::new();
            for y in Bits::enumerate(t) {
                for d in Bits::enumerate(t) {
                    for z in [false, true] {
                        pi.insert(
                            format!("y={y},d={d},z={}", z as u8),
                            Threshold(m.pi_at(t, y, d, z)),
                        );
                    }
                }
            }
            pi_table.push(pi);
        }
        ModelConfig {
            horizon: m.t(),
            x_grid: (0..m.t()).map(|t| m.x_grid.values_at(t).to_vec()).collect(),
            x_law: m.x_law.clone(),
            z_law: m.z_law.clone(),
            mu_table,
            pi_table,
            latent: m.latent.clone(),
            irreversible_y: m.irreversible_y,
            irreversible_d: m.irreversible_d,
        }
    }

    /// Build and validate the structural model.
    pub fn into_model(self) -> Result<StructuralModel> {
        let horizon = Horizon::new(self.horizon)?;
        let t_len = horizon.get();
        for (name, len) in [
            ("x_grid", self.x_grid.len()),
            ("x_law", self.x_law.len()),
            ("z_law", self.z_law.len()),
            ("mu_table", self.mu_table.len()),
            ("pi_table", self.pi_table.len()),
        ] {
            if len != t_len {
                return Err(Error::InvalidModel(format!(
                    "{name} covers {len} periods, expected {t_len}"
                )));
            }
        }
        let x_grid = XGrid::new(self.x_grid)?;

        let mut mu = Vec::with_capacity(t_len);
        for (t, entries) in self.mu_table.iter().enumerate() {
            let k = x_grid.k(t);
            let mut table = MuTable::from_fn(t, k, |_, _, _| f64::NAN);
            let mut expected = 0usize;
            for y in Bits::enumerate(t) {
                for d in Bits::enumerate(t + 1) {
                    for x in 0..k {
                        expected += 1;
                        let key = format!("y={y},d={d},x={x}");
                        match entries.get(&key) {
                            Some(v) => table.set(y, d, x, v.0),
                            None => {
                                return Err(Error::InvalidModel(format!(
                                    "mu_table period {t} is missing \"{key}\""
                                )))
                            }
                        }
                    }
                }
            }
            if entries.len() != expected {
                let extra = first_unexpected(entries, |key| {
                    parse_mu_key(key, t, k).is_ok()
                });
                return Err(Error::InvalidModel(format!(
                    "mu_table period {t} has unexpected entry \"{extra}\""
                )));
            }
            mu.push(table);
        }

        let mut pi = Vec::with_capacity(t_len);
        for (t, entries) in self.pi_table.iter().enumerate() {
            let mut table = PiTable::from_fn(t, |_, _, _| f64::NAN);
            let mut expected = 0usize;
            for y in Bits::enumerate(t) {
                for d in Bits::enumerate(t) {
                    for z in [false, true] {
                        expected += 1;
                        let key = format!("y={y},d={d},z={}", z as u8);
                        match entries.get(&key) {
                            Some(v) => table.set(y, d, z, v.0),
                            None => {
                                return Err(Error::InvalidModel(format!(
                                    "pi_table period {t} is missing \"{key}\""
                                )))
                            }
                        }
                    }
                }
            }
            if entries.len() != expected {
                let extra = first_unexpected(entries, |key| {
                    parse_pi_key(key, t).is_ok()
                });
                return Err(Error::InvalidModel(format!(
                    "pi_table period {t} has unexpected entry \"{extra}\""
                )));
            }
            pi.push(table);
        }

        StructuralModel {
            horizon,
            x_grid,
            x_law: self.x_law,
            z_law: self.z_law,
            mu,
            pi,
            latent: self.latent,
            irreversible_y: self.irreversible_y,
            irreversible_d: self.irreversible_d,
        }
        .checked()
    }
}

fn first_unexpected(
    entries: &BTreeMap<String, Threshold>,
    valid: impl Fn(&str) -> bool,
) -> String {
    entries
        .keys()
        .find(|k| !valid(k))
        .cloned()
        .unwrap_or_else(|| "<duplicate>".into())
}

fn parse_mu_key(key: &str, t: usize, k: usize) -> Result<(Bits, Bits, usize)> {
    let [y, d, x] = split_key(key, ["y", "d", "x"])?;
    let y: Bits = y.parse()?;
    let d: Bits = d.parse()?;
    let x: usize = x
        .parse()
        .map_err(|_| Error::InvalidModel(format!("bad x index in \"{key}\"")))?;
    if y.len() != t || d.len() != t + 1 || x >= k {
        return Err(Error::InvalidModel(format!(
            "key \"{key}\" does not fit period {t} with {k} grid points"
        )));
    }
    Ok((y, d, x))
}

fn parse_pi_key(key: &str, t: usize) -> Result<(Bits, Bits, bool)> {
    let [y, d, z] = split_key(key, ["y", "d", "z"])?;
    let y: Bits = y.parse()?;
    let d: Bits = d.parse()?;
    let z = match z.as_str() {
        "0" => false,
        "1" => true,
        _ => return Err(Error::InvalidModel(format!("bad z value in \"{key}\""))),
    };
    if y.len() != t || d.len() != t {
        return Err(Error::InvalidModel(format!(
            "key \"{key}\" does not fit period {t}"
        )));
    }
    Ok((y, d, z))
}

fn split_key(key: &str, fields: [&str; 3]) -> Result<[String; 3]> {
    let parts: Vec<&str> = key.split(',').collect();
    if parts.len() != 3 {
        return Err(Error::InvalidModel(format!(
            "key \"{key}\" must have exactly the fields {fields:?}"
        )));
    }
    let mut out = [String::new(), String::new(), String::new()];
    for (i, (part, field)) in parts.iter().zip(fields).enumerate() {
        match part.strip_prefix(&format!("{field}=")) {
            Some(rest) => out[i] = rest.to_string(),
            None => {
                return Err(Error::InvalidModel(format!(
                    "key \"{key}\": expected field \"{field}=\" at position {i}"
                )))
            }
        }
    }
    Ok(out)
}

impl TryFrom<ModelConfig> for StructuralModel {
    type Error = Error;
    fn try_from(c: ModelConfig) -> Result<Self> {
        c.into_model()
    }
}

impl From<&StructuralModel> for ModelConfig {
    fn from(m: &StructuralModel) -> Self {
        ModelConfig::from_model(m)
    }
}

/// Parse a model from JSON; errors carry the key or line/column involved.
pub fn model_from_json(s: &str) -> Result<StructuralModel> {
    let config: ModelConfig = serde_json::from_str(s)
        .map_err(|e| Error::InvalidModel(format!("model config parse error: {e}")))?;
    config.into_model()
}

/// Pretty-printed JSON for a model.
pub fn model_to_json(m: &StructuralModel) -> String {
    serde_json::to_string_pretty(&ModelConfig::from_model(m)).expect("config serializes")
}

/// Read and validate a model from a JSON file.
pub fn read_model(path: &Path) -> Result<StructuralModel> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Io(format!("reading {}: {e}", path.display())))?;
    model_from_json(&text)
}

/// Write a model to a JSON file.
pub fn write_model(path: &Path, m: &StructuralModel) -> Result<()> {
    std::fs::write(path, model_to_json(m) + "\n")
        .map_err(|e| Error::Io(format!("writing {}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::presets;

    #[test]
    fn json_roundtrip_is_exact() {
        for m in [presets::example_model(), presets::gapped_model()] {
            let json = model_to_json(&m);
            let back = model_from_json(&json).unwrap();
            assert_eq!(m, back);
        }
    }

    #[test]
    fn infinities_roundtrip_as_strings() {
        let mut m = presets::example_model();
        m.mu[1].set(
            Bits::from_raw(1, 1),
            Bits::from_raw(3, 2),
            0,
            f64::INFINITY,
        );
        let json = model_to_json(&m);
        assert!(json.contains("\"+inf\""));
        let back = model_from_json(&json).unwrap();
        assert_eq!(m, back);
    }

    #[test]
    fn missing_and_unexpected_keys_are_named() {
        let mut config = ModelConfig::from_model(&presets::example_model());
        config.mu_table[0].remove("y=,d=1,x=3");
        let err = config.clone().into_model().unwrap_err().to_string();
        assert!(err.contains("y=,d=1,x=3"), "{err}");

        let mut config = ModelConfig::from_model(&presets::example_model());
        config.mu_table[0].insert("y=,d=1,x=9".into(), Threshold(0.0));
        let err = config.into_model().unwrap_err().to_string();
        assert!(err.contains("x=9"), "{err}");
    }

    #[test]
    fn unknown_top_level_fields_are_rejected_with_location() {
        let mut json = model_to_json(&presets::example_model());
        json = json.replacen("\"horizon\"", "\"horizons\"", 1);
        let err = model_from_json(&json).unwrap_err().to_string();
        assert!(err.contains("horizons"), "{err}");
        assert!(err.contains("line"), "{err}");
    }
}
