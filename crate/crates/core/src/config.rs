//! Run configuration: a TOML file describing geometry, device policy, vault
//! connectivity, and workload. Values from a config file take precedence
//! over command-line flags.

use crate::device::DeviceConfig;
use crate::ftl::FtlConfig;
use crate::nand::Geometry;
use crate::offload::{Compression, DeviceKey};
use crate::oplog::SealPolicy;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub geometry: GeometrySection,
    pub device: DeviceSection,
    pub vault: VaultSection,
    pub trace: TraceSection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometrySection {
    pub channels: u32,
    pub chips_per_channel: u32,
    pub blocks_per_chip: u32,
    pub pages_per_block: u32,
    pub page_size: u32,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeviceSection {
    pub over_provisioning: f64,
    pub gc_free_watermark: f64,
    pub offload_watermark: f64,
    /// When false the device behaves like a conventional SSD: overwritten
    /// and trimmed pages become erasable immediately.
    pub retention: bool,
    /// "lz4" or "none".
    pub compression: String,
    pub max_pages_per_segment: usize,
    /// 32-byte shared key, hex-encoded.
    pub key_hex: String,
    pub seal_max_entries: usize,
    pub seal_max_span_ns: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VaultSection {
    /// "inproc", "tcp", or "disabled".
    pub mode: String,
    /// tcp mode: address of the vault service.
    pub addr: String,
    /// inproc mode: vault storage directory (relative to the run dir).
    pub dir: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TraceSection {
    pub path: Option<String>,
    pub speed_factor: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 42,
            geometry: GeometrySection::default(),
            device: DeviceSection::default(),
            vault: VaultSection::default(),
            trace: TraceSection::default(),
        }
    }
}

impl Default for GeometrySection {
    fn default() -> Self {
        let g = Geometry::desk_scale();
        GeometrySection {
            channels: g.channels,
            chips_per_channel: g.chips_per_channel,
            blocks_per_chip: g.blocks_per_chip,
            pages_per_block: g.pages_per_block,
            page_size: g.page_size,
        }
    }
}

impl Default for DeviceSection {
    fn default() -> Self {
        let f = FtlConfig::new(Geometry::desk_scale());
        DeviceSection {
            over_provisioning: f.over_provisioning,
            gc_free_watermark: f.gc_free_watermark,
            offload_watermark: f.offload_watermark,
            retention: true,
            compression: "lz4".to_string(),
            max_pages_per_segment: 256,
            key_hex: "000102030405060708090a0b0c0d0e0f101112131415161718191a1b1c1d1e1f"
                .to_string(),
            seal_max_entries: f.seal.max_entries,
            seal_max_span_ns: f.seal.max_span_ns,
        }
    }
}

impl Default for VaultSection {
    fn default() -> Self {
        VaultSection {
            mode: "inproc".to_string(),
            addr: "127.0.0.1:7070".to_string(),
            dir: "vault".to_string(),
        }
    }
}

impl Default for TraceSection {
    fn default() -> Self {
        TraceSection {
            path: None,
            speed_factor: 1.0,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.key()?;
        self.compression()?;
        match self.vault.mode.as_str() {
            "inproc" | "tcp" | "disabled" => {}
            other => {
                return Err(ConfigError::Invalid(format!(
                    "vault.mode {other:?} (expected inproc, tcp, or disabled)"
                )))
            }
        }
        if !(self.trace.speed_factor.is_finite() && self.trace.speed_factor > 0.0) {
            return Err(ConfigError::Invalid(
                "trace.speed_factor must be positive".into(),
            ));
        }
        self.ftl_config()
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    pub fn geometry(&self) -> Geometry {
        Geometry {
            channels: self.geometry.channels,
            chips_per_channel: self.geometry.chips_per_channel,
            blocks_per_chip: self.geometry.blocks_per_chip,
            pages_per_block: self.geometry.pages_per_block,
            page_size: self.geometry.page_size,
        }
    }

    pub fn key(&self) -> Result<DeviceKey, ConfigError> {
        DeviceKey::from_hex(&self.device.key_hex)
            .map_err(|_| ConfigError::Invalid("device.key_hex must be 64 hex chars".into()))
    }

    pub fn compression(&self) -> Result<Compression, ConfigError> {
        match self.device.compression.as_str() {
            "lz4" => Ok(Compression::Lz4),
            "none" => Ok(Compression::None),
            other => Err(ConfigError::Invalid(format!(
                "device.compression {other:?} (expected lz4 or none)"
            ))),
        }
    }

    pub fn ftl_config(&self) -> FtlConfig {
        let mut f = FtlConfig::new(self.geometry());
        f.over_provisioning = self.device.over_provisioning;
        f.gc_free_watermark = self.device.gc_free_watermark;
        f.offload_watermark = self.device.offload_watermark;
        f.retention = self.device.retention;
        f.seal = SealPolicy {
            max_entries: self.device.seal_max_entries,
            max_span_ns: self.device.seal_max_span_ns,
        };
        f
    }

    pub fn device_config(&self) -> Result<DeviceConfig, ConfigError> {
        let mut d = DeviceConfig::new(self.ftl_config(), self.key()?);
        d.compression = self.compression()?;
        d.max_pages_per_segment = self.device.max_pages_per_segment;
        Ok(d)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        RunConfig::default().validate().unwrap();
    }

    #[test]
    fn toml_round_trip() {
        let cfg = RunConfig::default();
        let text = cfg.to_toml();
        let back = RunConfig::from_toml(&text).unwrap();
        assert_eq!(back.seed, cfg.seed);
        assert_eq!(back.device.key_hex, cfg.device.key_hex);
        assert_eq!(back.geometry.page_size, cfg.geometry.page_size);
    }

    #[test]
    fn partial_toml_uses_defaults() {
        let cfg = RunConfig::from_toml("seed = 7\n[device]\nretention = false\n").unwrap();
        assert_eq!(cfg.seed, 7);
        assert!(!cfg.device.retention);
        assert_eq!(cfg.vault.mode, "inproc");
    }

    #[test]
    fn rejects_bad_values() {
        assert!(RunConfig::from_toml("[device]\ncompression = \"zip\"\n").is_err());
        assert!(RunConfig::from_toml("[vault]\nmode = \"carrier-pigeon\"\n").is_err());
        assert!(RunConfig::from_toml("[device]\nkey_hex = \"abc\"\n").is_err());
        assert!(RunConfig::from_toml("unknown_key = 1\n").is_err());
    }
}
