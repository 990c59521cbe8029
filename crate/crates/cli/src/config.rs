//! Run configuration: one TOML file with a section per pipeline stage.
//!
//! A file only needs the keys it changes; everything else comes from the
//! built-in defaults. Unknown keys are rejected by name.

use std::path::Path;

use qsta_core::attack::{AdvTrainConfig, AttackConfig, AttackMethod, CwConfig, Threat};
use qsta_core::data::{AugmentConfig, DatagenConfig, LabelConfig};
use qsta_core::harness::{AblationConfig, TrainConfig};
use qsta_core::model::{ModelConfig, Variant};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use toml::{Table, Value};

use crate::error::{CliError, CliResult};

/// Version of the configuration layout; files must state it.
pub const SCHEMA_VERSION: u32 = 1;

/// Environment variable that overrides `output_dir`.
pub const OUTPUT_DIR_ENV: &str = "QSTA_OUTPUT_DIR";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub schema_version: u32,
    /// Master seed; every stage derives its own stream from it.
    pub seed: u64,
    pub output_dir: String,
    pub datagen: DatagenConfig,
    pub label: LabelConfig,
    pub data: DataSection,
    pub augment: AugmentConfig,
    pub validation: ValidationSection,
    pub model: ModelConfig,
    pub training: TrainConfig,
    pub attack: AttackSection,
    pub defense: AdvTrainConfig,
    pub sweep: SweepSection,
    pub ablation: AblationSection,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            seed: 0,
            output_dir: "qsta-out".into(),
            datagen: DatagenConfig::default(),
            label: LabelConfig::default(),
            data: DataSection::default(),
            augment: AugmentConfig::default(),
            validation: ValidationSection::default(),
            model: ModelConfig::default(),
            training: TrainConfig::default(),
            attack: AttackSection::default(),
            defense: AdvTrainConfig::default(),
            sweep: SweepSection::default(),
            ablation: AblationSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    /// Steps per model input window, counted from fault onset.
    pub window_steps: usize,
    /// Train on originals plus generated samples when available.
    pub use_synthetic: bool,
}

impl Default for DataSection {
    fn default() -> Self {
        Self { window_steps: 10, use_synthetic: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValidationSection {
    /// Run MMD and TSTR/TRTS after augmentation.
    pub enabled: bool,
    /// Generated samples per class compared against the originals.
    pub mmd_samples: usize,
    pub tstr_variant: Variant,
    pub tstr_training: TrainConfig,
}

impl Default for ValidationSection {
    fn default() -> Self {
        Self {
            enabled: true,
            mmd_samples: 1000,
            tstr_variant: Variant::Lstm,
            tstr_training: TrainConfig { epochs: 15, ..TrainConfig::default() },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackSection {
    pub methods: Vec<AttackMethod>,
    pub threats: Vec<Threat>,
    pub epsilons: Vec<f64>,
    /// Held-out samples attacked.
    pub eval_samples: usize,
    pub cw: CwConfig,
    /// Inputs the gray-box attacker may query; taken from the training part.
    pub surrogate_queries: usize,
    pub surrogate_training: TrainConfig,
}

impl Default for AttackSection {
    fn default() -> Self {
        Self {
            methods: vec![AttackMethod::Mifgsm, AttackMethod::Pgd, AttackMethod::Cw],
            threats: vec![Threat::WhiteBox, Threat::GrayBox],
            epsilons: vec![0.01, 0.03, 0.05],
            eval_samples: 200,
            cw: CwConfig::default(),
            surrogate_queries: 2000,
            surrogate_training: TrainConfig { epochs: 20, ..TrainConfig::default() },
        }
    }
}

impl AttackSection {
    /// Every `(method, threat, epsilon)` cell with this section's C&W settings.
    pub fn grid(&self) -> Vec<(AttackConfig, Threat)> {
        let mut out = Vec::new();
        for &m in &self.methods {
            for &t in &self.threats {
                for &e in &self.epsilons {
                    let mut c = AttackConfig::for_method(m, e);
                    c.cw = self.cw;
                    out.push((c, t));
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepKind {
    Models,
    Quantum,
    Window,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub kind: SweepKind,
    pub variants: Vec<Variant>,
    pub qubits: Vec<usize>,
    pub layers: Vec<usize>,
    pub windows_s: Vec<f64>,
    /// Offsets added to the master seed.
    pub seeds: Vec<u64>,
    pub training: TrainConfig,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            kind: SweepKind::Models,
            variants: vec![Variant::Qstaformer, Variant::Transformer, Variant::Lstm],
            qubits: vec![4, 6, 8, 10],
            layers: vec![2, 3, 4, 5, 6],
            windows_s: vec![0.03, 0.05, 0.07, 0.09, 0.12, 0.15, 0.2],
            seeds: vec![0, 1, 2],
            training: TrainConfig { epochs: 15, ..TrainConfig::default() },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AblationSection {
    /// Offsets added to the master seed.
    pub seeds: Vec<u64>,
    pub training: TrainConfig,
    pub adversarial: Option<AdvTrainConfig>,
    pub epsilon: f64,
    pub eval_samples: usize,
}

impl Default for AblationSection {
    fn default() -> Self {
        let d = AblationConfig::default();
        Self { seeds: vec![0, 1, 2], training: d.train, adversarial: d.adversarial, epsilon: d.epsilon, eval_samples: d.eval_samples }
    }
}

impl Config {
    /// Ablation settings drawn from this section and the shared stage sections.
    pub fn ablation_config(&self) -> AblationConfig {
        AblationConfig {
            label: self.label.clone(),
            augment: self.augment.clone(),
            window_steps: self.data.window_steps,
            model: self.model.clone(),
            train: self.ablation.training.clone(),
            adversarial: self.ablation.adversarial.clone(),
            epsilon: self.ablation.epsilon,
            eval_samples: self.ablation.eval_samples,
        }
    }

    /// Canonical TOML text of the effective configuration.
    pub fn to_toml(&self) -> CliResult<String> {
        toml::to_string(self).map_err(|e| CliError::Runtime(format!("cannot serialize configuration: {e}")))
    }

    /// SHA-256 of the canonical text, lowercase hex.
    pub fn hash(&self) -> CliResult<String> {
        Ok(sha256_hex(self.to_toml()?.as_bytes()))
    }

    fn validate(&self) -> CliResult<()> {
        let bad = |m: String| Err(CliError::Usage(format!("invalid configuration: {m}")));
        if self.schema_version != SCHEMA_VERSION {
            return bad(format!("schema_version {} is not supported (expected {})", self.schema_version, SCHEMA_VERSION));
        }
        if self.data.window_steps == 0 {
            return bad("data.window_steps must be positive".into());
        }
        if self.sweep.seeds.is_empty() || self.ablation.seeds.is_empty() {
            return bad("sweep.seeds and ablation.seeds must not be empty".into());
        }
        self.datagen.grid.validate().map_err(|e| CliError::Usage(format!("invalid configuration: datagen.grid: {e}")))?;
        self.datagen.generator.validate().map_err(|e| CliError::Usage(format!("invalid configuration: datagen.generator: {e}")))?;
        self.label.sfcm.validate().map_err(|e| CliError::Usage(format!("invalid configuration: label.sfcm: {e}")))?;
        self.augment.lsgan.validate().map_err(|e| CliError::Usage(format!("invalid configuration: augment.lsgan: {e}")))?;
        let mut m = self.model.clone();
        m.seq_len = self.data.window_steps;
        m.validate().map_err(|e| CliError::Usage(format!("invalid configuration: model: {e}")))?;
        Ok(())
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Reads `path`, merges it over the defaults, applies `key=value` overrides
/// and validates the result.
pub fn load_config(path: &Path, overrides: &[String]) -> CliResult<Config> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read config file {}: {e}", path.display())))?;
    parse_config(&text, overrides)
}

pub fn parse_config(text: &str, overrides: &[String]) -> CliResult<Config> {
    let user: Table = toml::from_str(text).map_err(|e| CliError::Usage(format!("config is not valid TOML: {e}")))?;
    if !user.contains_key("schema_version") {
        return Err(CliError::Usage(format!("config must set schema_version = {SCHEMA_VERSION}")));
    }
    let defaults = Value::try_from(Config::default()).map_err(|e| CliError::Runtime(e.to_string()))?;
    let mut merged = defaults.clone();
    merge(&mut merged, Value::Table(user));
    for o in overrides {
        apply_override(&mut merged, o)?;
    }
    let cfg: Config = merged.clone().try_into().map_err(|e: toml::de::Error| {
        let unknown = unknown_keys(&defaults, &merged, "");
        let hint = if unknown.is_empty() { String::new() } else { format!(" (keys outside the schema: {})", unknown.join(", ")) };
        CliError::Usage(format!("invalid configuration: {}{hint}", e.message().trim()))
    })?;
    cfg.validate()?;
    Ok(cfg)
}

fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Table(b), Value::Table(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// `a.b.c=value`; the value is read as a TOML literal, falling back to a
/// plain string.
fn apply_override(root: &mut Value, spec: &str) -> CliResult<()> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| CliError::Usage(format!("override '{spec}' must look like key=value")))?;
    let key = key.trim();
    if key.is_empty() || key.split('.').any(str::is_empty) {
        return Err(CliError::Usage(format!("override '{spec}' has an empty key segment")));
    }
    let value = match toml::from_str::<Table>(&format!("v = {}", raw.trim())) {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => Value::String(raw.trim().to_string()),
    };
    let parts: Vec<&str> = key.split('.').collect();
    let mut cur = root;
    for p in &parts[..parts.len() - 1] {
        let t = cur.as_table_mut().ok_or_else(|| CliError::Usage(format!("override '{key}': '{p}' is not a section")))?;
        cur = t.entry(p.to_string()).or_insert_with(|| Value::Table(Table::new()));
    }
    let t = cur.as_table_mut().ok_or_else(|| CliError::Usage(format!("override '{key}' does not name a section key")))?;
    t.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

/// Dotted paths present in `v` but not in the defaults tree `d`.
fn unknown_keys(d: &Value, v: &Value, prefix: &str) -> Vec<String> {
    let (Value::Table(dt), Value::Table(vt)) = (d, v) else {
        return Vec::new();
    };
    let mut out = Vec::new();
    for (k, val) in vt {
        let path = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        match dt.get(k) {
            Some(dv) => out.extend(unknown_keys(dv, val, &path)),
            None => out.push(path),
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_file_gives_defaults() {
        let c = parse_config("schema_version = 1", &[]).unwrap();
        assert_eq!(c, Config::default());
    }

    #[test]
    fn round_trip_through_toml() {
        let text = Config::default().to_toml().unwrap();
        assert_eq!(parse_config(&text, &[]).unwrap(), Config::default());
    }

    #[test]
    fn sections_merge_and_overrides_apply() {
        let c = parse_config(
            "schema_version = 1\nseed = 4\n[training]\nepochs = 3\n",
            &["training.lr_max=0.5".into(), "model.variant=lstm".into(), "output_dir=out dir".into()],
        )
        .unwrap();
        assert_eq!((c.seed, c.training.epochs, c.training.lr_max), (4, 3, 0.5));
        assert_eq!(c.training.batch_size, 32);
        assert_eq!(c.model.variant, Variant::Lstm);
        assert_eq!(c.output_dir, "out dir");
    }

    #[test]
    fn unknown_keys_are_named() {
        let e = parse_config("schema_version = 1\n[training]\nepohs = 3\n", &[]).unwrap_err();
        assert!(matches!(e, CliError::Usage(_)));
        assert!(e.to_string().contains("epohs"), "{e}");
        let e = parse_config("schema_version = 1", &["training.bogus=1".into()]).unwrap_err();
        assert!(e.to_string().contains("training.bogus"), "{e}");
    }

    #[test]
    fn version_and_values_are_checked() {
        assert!(parse_config("seed = 1", &[]).is_err());
        assert!(parse_config("schema_version = 2", &[]).is_err());
        assert!(parse_config("schema_version = 1", &["data.window_steps=0".into()]).is_err());
        assert!(parse_config("schema_version = 1", &["noequals".into()]).is_err());
        assert!(parse_config("schema_version = 1", &["training.epochs=\"many\"".into()]).is_err());
    }

    #[test]
    fn hash_tracks_content() {
        let a = Config::default();
        let mut b = a.clone();
        b.seed = 9;
        assert_eq!(a.hash().unwrap(), Config::default().hash().unwrap());
        assert_ne!(a.hash().unwrap(), b.hash().unwrap());
        assert_eq!(a.hash().unwrap().len(), 64);
        assert_eq!(sha256_hex(b"abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }
}
