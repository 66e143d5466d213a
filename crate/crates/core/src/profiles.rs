//! Coding tool catalogs and binary tool profiles.
//!
//! A [`ToolCatalog`] lists every switchable coding tool together with the
//! coding configurations it applies to and its common-test-condition (CTC)
//! default. A [`ToolProfile`] is one on/off assignment over exactly the tools
//! applicable to a configuration.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;
use std::sync::LazyLock;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

const BUILTIN_CATALOG: &str = include_str!("../data/vvc_catalog.json");

static BUILTIN: LazyLock<ToolCatalog> = LazyLock::new(|| {
    ToolCatalog::from_json(BUILTIN_CATALOG).expect("embedded catalog is valid")
});

/// Name of the auxiliary switch coupled to dependent quantization.
pub const SIGN_DATA_HIDING: &str = "SignDataHiding";
const DEPENDENT_QUANTIZATION: &str = "DQ";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProfileError {
    #[error("tool `{tool}` is not applicable to configuration {config}")]
    Inapplicable { tool: String, config: CodingConfig },
    #[error("unknown tool `{0}`")]
    UnknownTool(String),
    #[error("missing tool `{tool}` for configuration {config}")]
    MissingTool { tool: String, config: CodingConfig },
    #[error("profile is for configuration {found}, expected {expected}")]
    ConfigMismatch {
        expected: CodingConfig,
        found: CodingConfig,
    },
    #[error("invalid catalog: {0}")]
    InvalidCatalog(String),
    #[error("unknown coding configuration `{0}`")]
    UnknownConfig(String),
    #[error("schema violation: {0}")]
    Schema(String),
}

/// Encoder coding configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum CodingConfig {
    /// All intra.
    AI,
    /// Low-delay B.
    LB,
    /// Random access.
    RA,
}

impl CodingConfig {
    pub const ALL: [CodingConfig; 3] = [CodingConfig::AI, CodingConfig::LB, CodingConfig::RA];

    pub fn as_str(self) -> &'static str {
        match self {
            CodingConfig::AI => "AI",
            CodingConfig::LB => "LB",
            CodingConfig::RA => "RA",
        }
    }
}

impl fmt::Display for CodingConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CodingConfig {
    type Err = ProfileError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "AI" => Ok(CodingConfig::AI),
            "LB" => Ok(CodingConfig::LB),
            "RA" => Ok(CodingConfig::RA),
            _ => Err(ProfileError::UnknownConfig(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ToolGroup {
    Intra,
    Inter,
    TransformQuant,
    InLoopFilter,
    Other,
}

/// One row of the tool catalog.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolDescriptor {
    /// 1-based, contiguous position in the catalog.
    pub index: usize,
    pub name: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub description: String,
    pub group: ToolGroup,
    pub applicability: BTreeSet<CodingConfig>,
    pub ctc_default: BTreeMap<CodingConfig, bool>,
}

impl ToolDescriptor {
    pub fn applies_to(&self, config: CodingConfig) -> bool {
        self.applicability.contains(&config)
    }
}

/// Ordered, validated list of tool descriptors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawCatalog", into = "RawCatalog")]
pub struct ToolCatalog {
    name: String,
    tools: Vec<ToolDescriptor>,
}

#[derive(Serialize, Deserialize)]
struct RawCatalog {
    #[serde(default)]
    name: String,
    tools: Vec<ToolDescriptor>,
}

impl TryFrom<RawCatalog> for ToolCatalog {
    type Error = ProfileError;

    fn try_from(raw: RawCatalog) -> Result<Self, Self::Error> {
        ToolCatalog::new(raw.name, raw.tools)
    }
}

impl From<ToolCatalog> for RawCatalog {
    fn from(c: ToolCatalog) -> Self {
        RawCatalog {
            name: c.name,
            tools: c.tools,
        }
    }
}

impl ToolCatalog {
    /// Builds a catalog, sorting by index and checking every invariant.
    pub fn new(name: impl Into<String>, mut tools: Vec<ToolDescriptor>) -> Result<Self, ProfileError> {
        tools.sort_by_key(|t| t.index);
        let mut names = BTreeSet::new();
        for (pos, tool) in tools.iter().enumerate() {
            if tool.index != pos + 1 {
                return Err(ProfileError::InvalidCatalog(format!(
                    "tool indices must be contiguous from 1; found {} at position {}",
                    tool.index,
                    pos + 1
                )));
            }
            if tool.name.is_empty() || tool.name.chars().any(char::is_whitespace) {
                return Err(ProfileError::InvalidCatalog(format!(
                    "tool {} has an invalid name `{}`",
                    tool.index, tool.name
                )));
            }
            if !names.insert(tool.name.as_str()) {
                return Err(ProfileError::InvalidCatalog(format!(
                    "duplicate tool name `{}`",
                    tool.name
                )));
            }
            let default_keys: BTreeSet<_> = tool.ctc_default.keys().copied().collect();
            if default_keys != tool.applicability {
                return Err(ProfileError::InvalidCatalog(format!(
                    "ctc_default of `{}` must cover exactly its applicable configurations",
                    tool.name
                )));
            }
        }
        Ok(ToolCatalog {
            name: name.into(),
            tools,
        })
    }

    pub fn from_json(json: &str) -> Result<Self, ProfileError> {
        serde_json::from_str(json).map_err(|e| ProfileError::Schema(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("catalog serializes")
    }

    /// The built-in VVC tool list with CTC defaults.
    pub fn builtin() -> &'static ToolCatalog {
        &BUILTIN
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn tools(&self) -> &[ToolDescriptor] {
        &self.tools
    }

    pub fn len(&self) -> usize {
        self.tools.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tools.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<&ToolDescriptor> {
        self.tools.iter().find(|t| t.name == name)
    }

    /// Tools applicable to `config`, in ascending index order.
    pub fn applicable(&self, config: CodingConfig) -> impl Iterator<Item = &ToolDescriptor> + '_ {
        self.tools.iter().filter(move |t| t.applies_to(config))
    }

    pub fn applicable_names(&self, config: CodingConfig) -> Vec<String> {
        self.applicable(config).map(|t| t.name.clone()).collect()
    }

    /// SHA-256 over the canonical JSON form, hex encoded.
    pub fn fingerprint(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("catalog serializes");
        hex::encode(Sha256::digest(&canonical))
    }

    /// The CTC profile: every applicable tool at its default.
    pub fn ctc_profile(&self, config: CodingConfig) -> ToolProfile {
        let usage = self
            .applicable(config)
            .map(|t| (t.name.clone(), t.ctc_default[&config]))
            .collect();
        ToolProfile { config, usage }
    }

    /// Checks that `profile` is defined over exactly the applicable tools.
    pub fn validate(&self, profile: &ToolProfile) -> Result<(), ProfileError> {
        for name in profile.usage.keys() {
            match self.get(name) {
                None => return Err(ProfileError::UnknownTool(name.clone())),
                Some(t) if !t.applies_to(profile.config) => {
                    return Err(ProfileError::Inapplicable {
                        tool: name.clone(),
                        config: profile.config,
                    })
                }
                Some(_) => {}
            }
        }
        for tool in self.applicable(profile.config) {
            if !profile.usage.contains_key(&tool.name) {
                return Err(ProfileError::MissingTool {
                    tool: tool.name.clone(),
                    config: profile.config,
                });
            }
        }
        Ok(())
    }

    /// Builds a validated profile from an explicit usage map.
    pub fn profile(
        &self,
        config: CodingConfig,
        usage: BTreeMap<String, bool>,
    ) -> Result<ToolProfile, ProfileError> {
        let profile = ToolProfile { config, usage };
        self.validate(&profile)?;
        Ok(profile)
    }

    /// Parses the profile JSON form `{"config":"RA","tools":{...}}`.
    pub fn parse_profile(&self, json: &str) -> Result<ToolProfile, ProfileError> {
        let profile: ToolProfile =
            serde_json::from_str(json).map_err(|e| ProfileError::Schema(e.to_string()))?;
        self.validate(&profile)?;
        Ok(profile)
    }

    /// Usage bits in catalog order, e.g. `1101...`.
    pub fn bit_string(&self, profile: &ToolProfile) -> String {
        self.applicable(profile.config)
            .map(|t| if profile.get(&t.name) == Some(true) { '1' } else { '0' })
            .collect()
    }
}

/// Binary usage vector over the tools applicable to one configuration.
///
/// Equality is structural over the configuration and every usage bit.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToolProfile {
    config: CodingConfig,
    #[serde(rename = "tools")]
    usage: BTreeMap<String, bool>,
}

impl ToolProfile {
    pub fn config(&self) -> CodingConfig {
        self.config
    }

    pub fn usage(&self) -> &BTreeMap<String, bool> {
        &self.usage
    }

    pub fn get(&self, tool: &str) -> Option<bool> {
        self.usage.get(tool).copied()
    }

    pub fn len(&self) -> usize {
        self.usage.len()
    }

    pub fn is_empty(&self) -> bool {
        self.usage.is_empty()
    }

    /// Returns a copy with the usage bit of `tool` flipped.
    pub fn toggle(&self, tool: &str) -> Result<ToolProfile, ProfileError> {
        let current = self.bit(tool)?;
        self.with(tool, !current)
    }

    /// Returns a copy with the usage bit of `tool` set to `enabled`.
    pub fn with(&self, tool: &str, enabled: bool) -> Result<ToolProfile, ProfileError> {
        self.bit(tool)?;
        let mut next = self.clone();
        next.usage.insert(tool.to_string(), enabled);
        Ok(next)
    }

    fn bit(&self, tool: &str) -> Result<bool, ProfileError> {
        self.get(tool).ok_or_else(|| ProfileError::Inapplicable {
            tool: tool.to_string(),
            config: self.config,
        })
    }

    /// Auxiliary encoder switches implied by the profile.
    ///
    /// Sign data hiding is switched on exactly when dependent quantization is
    /// off.
    pub fn derived_switches(&self) -> BTreeMap<String, bool> {
        let mut out = BTreeMap::new();
        if let Some(dq) = self.get(DEPENDENT_QUANTIZATION) {
            out.insert(SIGN_DATA_HIDING.to_string(), !dq);
        }
        out
    }

    /// Order-independent SHA-256 over config and usage, hex encoded.
    pub fn canonical_hash(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.config.as_str().as_bytes());
        hasher.update(b"\n");
        // BTreeMap iteration is sorted by name, so insertion order never matters.
        for (name, on) in &self.usage {
            hasher.update(name.as_bytes());
            hasher.update(if *on { b"=1\n" } else { b"=0\n" });
        }
        hex::encode(hasher.finalize())
    }

    /// Short identifier derived from the canonical hash.
    pub fn id(&self) -> String {
        let mut h = self.canonical_hash();
        h.truncate(12);
        format!("{}-{}", self.config, h)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("profile serializes")
    }

    /// Names whose bit differs from `other`; both must share a configuration.
    pub fn diff(&self, other: &ToolProfile) -> Vec<String> {
        self.usage
            .iter()
            .filter(|(k, v)| other.usage.get(*k) != Some(v))
            .map(|(k, _)| k.clone())
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn builtin() -> &'static ToolCatalog {
        ToolCatalog::builtin()
    }

    #[test]
    fn builtin_catalog_shape() {
        let c = builtin();
        assert_eq!(c.len(), 28);
        assert_eq!(c.applicable(CodingConfig::AI).count(), 16);
        assert_eq!(c.applicable(CodingConfig::LB).count(), 25);
        assert_eq!(c.applicable(CodingConfig::RA).count(), 28);
        for name in ["BDOF", "DMVR", "SMVD"] {
            let t = c.get(name).unwrap();
            assert_eq!(t.applicability, BTreeSet::from([CodingConfig::RA]));
        }
        let inter: Vec<_> = c.tools().iter().filter(|t| t.group == ToolGroup::Inter).collect();
        assert_eq!(inter.len(), 11);
        assert!(inter.iter().all(|t| !t.applies_to(CodingConfig::AI)));
        assert!(!c.get("SBT").unwrap().applies_to(CodingConfig::AI));
    }

    #[test]
    fn ctc_profiles() {
        let c = builtin();
        let ra = c.ctc_profile(CodingConfig::RA);
        assert_eq!(ra.len(), 28);
        let off: Vec<_> = ra.usage().iter().filter(|(_, v)| !**v).map(|(k, _)| k.as_str()).collect();
        assert_eq!(off, vec!["BDPCM", "IBC"]);

        let ai = c.ctc_profile(CodingConfig::AI);
        assert_eq!(ai.len(), 16);
        assert_eq!(ai.get("MIP"), Some(true));
        assert_eq!(ai.get("LFNST"), Some(true));

        let lb = c.ctc_profile(CodingConfig::LB);
        assert_eq!(lb.get("MIP"), Some(false));
        assert_eq!(lb.get("LFNST"), Some(false));
        for absent in ["BDOF", "DMVR", "SMVD"] {
            assert_eq!(lb.get(absent), None);
        }
        let mut lb_off: Vec<_> = lb.usage().iter().filter(|(_, v)| !**v).map(|(k, _)| k.clone()).collect();
        lb_off.sort();
        assert_eq!(lb_off, vec!["BDPCM", "IBC", "LFNST", "MIP"]);
    }

    #[test]
    fn toggle_flips_one_bit() {
        let ra = builtin().ctc_profile(CodingConfig::RA);
        let t = ra.toggle("DBF").unwrap();
        assert_eq!(t.get("DBF"), Some(false));
        assert_eq!(t.diff(&ra), vec!["DBF".to_string()]);
        assert_eq!(ra.get("DBF"), Some(true));
        assert_eq!(t.toggle("DBF").unwrap(), ra);
    }

    #[test]
    fn toggle_inapplicable_names_tool_and_config() {
        let ai = builtin().ctc_profile(CodingConfig::AI);
        let err = ai.toggle("DMVR").unwrap_err();
        assert_eq!(
            err,
            ProfileError::Inapplicable {
                tool: "DMVR".into(),
                config: CodingConfig::AI
            }
        );
        let msg = err.to_string();
        assert!(msg.contains("DMVR") && msg.contains("AI"));
    }

    #[test]
    fn sign_data_hiding_follows_dq() {
        let ra = builtin().ctc_profile(CodingConfig::RA);
        assert!(!ra.derived_switches()[SIGN_DATA_HIDING]);
        let no_dq = ra.toggle("DQ").unwrap();
        assert!(no_dq.derived_switches()[SIGN_DATA_HIDING]);
        let ai = builtin().ctc_profile(CodingConfig::AI);
        assert!(!ai.derived_switches()[SIGN_DATA_HIDING]);
    }

    #[test]
    fn json_round_trip_and_errors() {
        let c = builtin();
        let ra = c.ctc_profile(CodingConfig::RA);
        let json = ra.to_json();
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(v["config"], "RA");
        assert_eq!(v["tools"].as_object().unwrap().len(), 28);
        assert_eq!(c.parse_profile(&json).unwrap(), ra);

        let mut tools = v["tools"].as_object().unwrap().clone();
        tools.remove("GPM");
        let missing = serde_json::json!({"config":"RA","tools":tools}).to_string();
        assert!(matches!(
            c.parse_profile(&missing),
            Err(ProfileError::MissingTool { ref tool, .. }) if tool == "GPM"
        ));

        let mut ai_tools = serde_json::to_value(c.ctc_profile(CodingConfig::AI)).unwrap();
        ai_tools["tools"]["DMVR"] = serde_json::Value::Bool(true);
        assert!(matches!(
            c.parse_profile(&ai_tools.to_string()),
            Err(ProfileError::Inapplicable { .. })
        ));

        let mut unknown = v.clone();
        unknown["tools"]["FOO"] = serde_json::Value::Bool(true);
        assert!(matches!(
            c.parse_profile(&unknown.to_string()),
            Err(ProfileError::UnknownTool(_))
        ));
        assert!(matches!(c.parse_profile("{\"config\":\"XX\"}"), Err(ProfileError::Schema(_))));
    }

    #[test]
    fn canonical_hash_ignores_insertion_order() {
        let a: BTreeMap<String, bool> = [("A", true), ("B", false)]
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect();
        let b: BTreeMap<String, bool> = [("B", false), ("A", true)]
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect();
        let pa = ToolProfile { config: CodingConfig::RA, usage: a };
        let pb = ToolProfile { config: CodingConfig::RA, usage: b };
        assert_eq!(pa.canonical_hash(), pb.canonical_hash());
        assert_ne!(pa.canonical_hash(), pa.toggle("A").unwrap().canonical_hash());
    }

    #[test]
    fn catalog_validation() {
        let mut tools = builtin().tools().to_vec();
        tools[3].index = 30;
        assert!(ToolCatalog::new("x", tools).is_err());

        let mut tools = builtin().tools().to_vec();
        tools[1].name = "CCLM".into();
        assert!(ToolCatalog::new("x", tools).is_err());

        let mut tools = builtin().tools().to_vec();
        tools[0].ctc_default.remove(&CodingConfig::AI);
        assert!(ToolCatalog::new("x", tools).is_err());

        let json = builtin().to_json();
        let back = ToolCatalog::from_json(&json).unwrap();
        assert_eq!(&back, builtin());
        assert_eq!(back.fingerprint(), builtin().fingerprint());
    }
}
