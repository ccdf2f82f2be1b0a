//! Campaign configuration files.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use chrono::{DateTime, TimeZone, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::costs::{load_pricing, PricingCatalog};
use crate::engine::LoadScenario;
use crate::target::{EmulationProfile, DEFAULT_PRODUCT_COUNT};
use crate::workload::{validate_mix, Catalog, TrafficShape, WorkloadMix};

/// Environment variable holding the bearer token for live targets.
pub const DEFAULT_TOKEN_ENV: &str = "POSBENCH_TOKEN";

#[derive(Debug, Error)]
#[error("invalid config at {field}: {reason}")]
pub struct ConfigInvalid {
    pub field: String,
    pub reason: String,
}

fn invalid(field: impl Into<String>, reason: impl ToString) -> ConfigInvalid {
    ConfigInvalid {
        field: field.into(),
        reason: reason.to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetConfig {
    pub label: String,
    /// A live endpoint.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_url: Option<String>,
    /// Builtin profile name or profile file for an embedded target.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profile: Option<String>,
    /// Pricing key; defaults to the label.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub platform: Option<String>,
    /// Run an embedded target in virtual time instead of over HTTP.
    #[serde(default)]
    pub virtual_clock: bool,
    /// Environment variable with the bearer token for `base_url`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token_env: Option<String>,
}

impl TargetConfig {
    pub fn platform(&self) -> &str {
        self.platform.as_deref().unwrap_or(&self.label)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignConfig {
    pub targets: Vec<TargetConfig>,
    #[serde(default = "LoadScenario::canonical_set")]
    pub scenarios: Vec<LoadScenario>,
    #[serde(default)]
    pub mix: WorkloadMix,
    #[serde(default)]
    pub shape: TrafficShape,
    /// Operation catalog file; the built-in POS catalog when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub catalog: Option<PathBuf>,
    /// Pricing file; built-in rates when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pricing: Option<PathBuf>,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    /// Start of virtual time for `virtual_clock` targets.
    #[serde(default = "default_sim_epoch")]
    pub sim_epoch: DateTime<Utc>,
    #[serde(default = "default_product_count")]
    pub product_count: u64,
}

fn default_seed() -> u64 {
    1
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("posbench-out")
}

pub fn default_sim_epoch() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2024, 1, 1, 0, 0, 0).unwrap()
}

fn default_product_count() -> u64 {
    DEFAULT_PRODUCT_COUNT
}

/// Config plus the resources it refers to, loaded and checked.
#[derive(Debug, Clone)]
pub struct ResolvedConfig {
    pub config: CampaignConfig,
    pub catalog: Catalog,
    pub pricing: PricingCatalog,
    /// Resolved profiles, parallel to `config.targets` (None for live URLs).
    pub profiles: Vec<Option<EmulationProfile>>,
    /// sha256 of the config file bytes.
    pub digest: String,
}

/// Parses JSON config text. Relative catalog/pricing/profile paths resolve against `base_dir`.
pub fn parse_config_str(text: &str, base_dir: &Path) -> Result<ResolvedConfig, ConfigInvalid> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let mut config: CampaignConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let field = if path == "." { "<root>".to_string() } else { path };
        invalid(field, e.into_inner())
    })?;
    let digest = crate::report::sha256_hex(text.as_bytes());
    let rel = |p: &Path| if p.is_absolute() { p.to_path_buf() } else { base_dir.join(p) };

    if config.targets.is_empty() {
        return Err(invalid("targets", "at least one target is required"));
    }
    let mut labels = HashSet::new();
    let mut profiles = Vec::new();
    for (i, t) in config.targets.iter_mut().enumerate() {
        let at = format!("targets[{i}]");
        if t.label.is_empty() || t.label.contains(['/', '\\', ',']) {
            return Err(invalid(format!("{at}.label"), "must be non-empty without '/', '\\' or ','"));
        }
        if !labels.insert(t.label.clone()) {
            return Err(invalid(format!("{at}.label"), format!("duplicate label {:?}", t.label)));
        }
        match (&t.base_url, &t.profile) {
            (Some(_), Some(_)) => return Err(invalid(&at, "set either base_url or profile, not both")),
            (None, None) => return Err(invalid(&at, "one of base_url or profile is required")),
            (Some(url), None) => {
                if !(url.starts_with("http://") || url.starts_with("https://")) {
                    return Err(invalid(format!("{at}.base_url"), "must start with http:// or https://"));
                }
                if t.virtual_clock {
                    return Err(invalid(format!("{at}.virtual_clock"), "only embedded targets run in virtual time"));
                }
                profiles.push(None);
            }
            (None, Some(name)) => {
                let resolved = match EmulationProfile::builtin(name) {
                    Some(p) => p,
                    None => {
                        let path = rel(Path::new(name));
                        EmulationProfile::resolve(&path.to_string_lossy())
                            .map_err(|e| invalid(format!("{at}.profile"), e))?
                    }
                };
                profiles.push(Some(resolved));
            }
        }
    }

    if config.scenarios.is_empty() {
        return Err(invalid("scenarios", "at least one scenario is required"));
    }
    let mut names = HashSet::new();
    for (i, s) in config.scenarios.iter().enumerate() {
        s.validate().map_err(|e| invalid(format!("scenarios[{i}]"), e))?;
        if !names.insert(s.name.clone()) {
            return Err(invalid(format!("scenarios[{i}].name"), format!("duplicate scenario {:?}", s.name)));
        }
        if s.name.contains(['/', '\\', ',']) {
            return Err(invalid(format!("scenarios[{i}].name"), "must not contain '/', '\\' or ','"));
        }
    }
    validate_mix(&config.mix).map_err(|e| invalid("mix", e))?;
    config.shape.validate().map_err(|e| invalid("shape", e))?;
    if config.product_count == 0 {
        return Err(invalid("product_count", "must be positive"));
    }

    let catalog = match &config.catalog {
        Some(p) => Catalog::load(&rel(p)).map_err(|e| invalid("catalog", e))?,
        None => Catalog::pos_default(),
    };
    let pricing = match &config.pricing {
        Some(p) => load_pricing(&rel(p)).map_err(|e| invalid("pricing", e))?,
        None => PricingCatalog::default(),
    };
    Ok(ResolvedConfig {
        config,
        catalog,
        pricing,
        profiles,
        digest,
    })
}

pub fn parse_config(path: &Path) -> Result<ResolvedConfig, ConfigInvalid> {
    let text = std::fs::read_to_string(path).map_err(|e| invalid("<file>", format!("{}: {e}", path.display())))?;
    let base = path.parent().unwrap_or(Path::new("."));
    parse_config_str(&text, base)
}

/// Shortened campaign for quick runs: 10 s ramp, 30 s steady, 2 s rest, one
/// repetition. User counts are unchanged.
pub fn apply_desk_scale(scenarios: &mut [LoadScenario]) {
    for s in scenarios {
        s.ramp_up_s = s.ramp_up_s.min(10.0);
        s.steady_s = 30.0;
        s.rest_between_runs_s = 2.0;
        s.repetitions = 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<ResolvedConfig, ConfigInvalid> {
        parse_config_str(text, Path::new("."))
    }

    #[test]
    fn minimal_config_gets_defaults() {
        let c = parse(r#"{"targets":[{"label":"local","profile":"paper-gcp"}]}"#).unwrap();
        let users: Vec<u32> = c.config.scenarios.iter().map(|s| s.concurrent_users).collect();
        assert_eq!(users, vec![10, 25, 50, 100]);
        assert_eq!(c.config.mix, WorkloadMix::default());
        assert_eq!(c.pricing, PricingCatalog::default());
        assert_eq!(c.config.targets[0].platform(), "local");
        assert!(c.profiles[0].is_some());
    }

    #[test]
    fn bad_mix_names_the_field() {
        let e = parse(
            r#"{"targets":[{"label":"a","profile":"instant"}],
                "mix":{"transaction_weight":0.9,"inventory_weight":0.5,"analytics_weight":0.1}}"#,
        )
        .unwrap_err();
        assert_eq!(e.field, "mix");
    }

    #[test]
    fn unknown_keys_are_rejected_with_path() {
        let e = parse(r#"{"targets":[{"label":"a","profile":"instant","colour":"red"}]}"#).unwrap_err();
        assert_eq!(e.field, "targets[0].colour");
        let e = parse(r#"{"targets":[{"label":"a","profile":"instant"}],"scenarios":[{"name":"x"}]}"#).unwrap_err();
        assert!(e.field.starts_with("scenarios[0]"), "{}", e.field);
    }

    #[test]
    fn target_rules() {
        let dup = parse(r#"{"targets":[{"label":"a","profile":"instant"},{"label":"a","profile":"instant"}]}"#);
        assert_eq!(dup.unwrap_err().field, "targets[1].label");
        let none = parse(r#"{"targets":[{"label":"a"}]}"#);
        assert_eq!(none.unwrap_err().field, "targets[0]");
        let unknown = parse(r#"{"targets":[{"label":"a","profile":"no-such-profile"}]}"#);
        assert_eq!(unknown.unwrap_err().field, "targets[0].profile");
        let empty = parse(r#"{"targets":[]}"#);
        assert_eq!(empty.unwrap_err().field, "targets");
    }

    #[test]
    fn canonical_values_round_trip() {
        let c = parse(
            r#"{"targets":[{"label":"a","base_url":"http://127.0.0.1:1"}],
                "scenarios":[{"name":"Baseline","concurrent_users":10,"ramp_up_s":60,"steady_s":300,"repetitions":3,"rest_between_runs_s":300}]}"#,
        )
        .unwrap();
        assert_eq!(c.config.scenarios[0], LoadScenario::canonical("Baseline", 10));
    }

    #[test]
    fn desk_scale_keeps_users() {
        let mut s = LoadScenario::canonical_set();
        apply_desk_scale(&mut s);
        for (s, users) in s.iter().zip([10, 25, 50, 100]) {
            assert_eq!(s.concurrent_users, users);
            assert_eq!((s.ramp_up_s, s.steady_s, s.repetitions, s.rest_between_runs_s), (10.0, 30.0, 1, 2.0));
        }
    }
}
