//! Service configuration: built-in defaults, overlaid by a JSON config file,
//! overlaid by command-line flags.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use credchain_core::ledger::{ChainParams, LedgerConfig, DEFAULT_NODES};
use credchain_core::registry::RegistryConfig;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdminBootstrap {
    pub user_id: String,
    pub name: String,
    pub email: String,
    pub secret: String,
}

impl Default for AdminBootstrap {
    fn default() -> Self {
        AdminBootstrap {
            user_id: "admin".into(),
            name: "System administrator".into(),
            email: "admin@localhost".into(),
            secret: "change-me".into(),
        }
    }
}

/// Fully resolved configuration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Config {
    pub difficulty: u8,
    pub capacity: usize,
    pub nodes: usize,
    /// Milliseconds between scheduled mining rounds in `serve`.
    pub tick_interval_ms: u64,
    pub reset_ttl: u64,
    pub session_ttl: u64,
    pub faucet_amount: u64,
    pub gas_fee: u64,
    pub data_dir: PathBuf,
    pub port: u16,
    pub seed: u64,
    pub admin: AdminBootstrap,
}

impl Default for Config {
    fn default() -> Self {
        let registry = RegistryConfig::default();
        Config {
            difficulty: registry.ledger.params.difficulty,
            capacity: registry.ledger.params.capacity,
            nodes: DEFAULT_NODES,
            tick_interval_ms: 1_000,
            reset_ttl: registry.reset_ttl,
            session_ttl: registry.session_ttl,
            faucet_amount: registry.faucet_amount,
            gas_fee: registry.gas_fee,
            data_dir: PathBuf::from("credchain-data"),
            port: 8080,
            seed: 0,
            admin: AdminBootstrap::default(),
        }
    }
}

/// Config file contents. Every field is optional.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub difficulty: Option<u8>,
    pub capacity: Option<usize>,
    pub nodes: Option<usize>,
    pub tick_interval_ms: Option<u64>,
    pub reset_ttl: Option<u64>,
    pub session_ttl: Option<u64>,
    pub faucet_amount: Option<u64>,
    pub gas_fee: Option<u64>,
    pub data_dir: Option<PathBuf>,
    pub port: Option<u16>,
    pub seed: Option<u64>,
    pub admin: Option<AdminBootstrap>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .with_context(|| format!("cannot read config file {}", path.display()))?;
        serde_json::from_str(&text)
            .with_context(|| format!("invalid config file {}", path.display()))
    }
}

/// Values given on the command line.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Overrides {
    pub data_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    pub port: Option<u16>,
    pub difficulty: Option<u8>,
    pub tick_interval_ms: Option<u64>,
}

impl Config {
    /// flag > file > default, field by field.
    pub fn resolve(file: Option<ConfigFile>, flags: &Overrides) -> Self {
        let file = file.unwrap_or_default();
        let d = Config::default();
        Config {
            difficulty: flags.difficulty.or(file.difficulty).unwrap_or(d.difficulty),
            capacity: file.capacity.unwrap_or(d.capacity),
            nodes: file.nodes.unwrap_or(d.nodes),
            tick_interval_ms: flags
                .tick_interval_ms
                .or(file.tick_interval_ms)
                .unwrap_or(d.tick_interval_ms),
            reset_ttl: file.reset_ttl.unwrap_or(d.reset_ttl),
            session_ttl: file.session_ttl.unwrap_or(d.session_ttl),
            faucet_amount: file.faucet_amount.unwrap_or(d.faucet_amount),
            gas_fee: file.gas_fee.unwrap_or(d.gas_fee),
            data_dir: flags
                .data_dir
                .clone()
                .or(file.data_dir)
                .unwrap_or(d.data_dir),
            port: flags.port.or(file.port).unwrap_or(d.port),
            seed: flags.seed.or(file.seed).unwrap_or(d.seed),
            admin: file.admin.unwrap_or(d.admin),
        }
    }

    /// Reads `path` if given and applies the flag overrides.
    pub fn load(path: Option<&Path>, flags: &Overrides) -> Result<Self> {
        let file = path.map(ConfigFile::load).transpose()?;
        let config = Config::resolve(file, flags);
        config.registry()?;
        Ok(config)
    }

    pub fn params(&self) -> Result<ChainParams> {
        ChainParams::new(self.difficulty, self.capacity).context("invalid chain parameters")
    }

    pub fn registry(&self) -> Result<RegistryConfig> {
        anyhow::ensure!(self.nodes >= 1, "nodes must be at least 1");
        anyhow::ensure!(self.gas_fee >= 1, "gas_fee must be at least 1");
        Ok(RegistryConfig {
            ledger: LedgerConfig {
                params: self.params()?,
                nodes: self.nodes,
                seed: self.seed,
            },
            gas_fee: self.gas_fee,
            faucet_amount: self.faucet_amount,
            reset_ttl: self.reset_ttl,
            session_ttl: self.session_ttl,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_when_nothing_given() {
        let config = Config::resolve(None, &Overrides::default());
        assert_eq!(config, Config::default());
        assert_eq!(config.difficulty, 3);
        assert_eq!(config.capacity, 4);
    }

    #[test]
    fn precedence_per_field() {
        let file = ConfigFile {
            difficulty: Some(2),
            data_dir: Some("from-file".into()),
            seed: Some(5),
            port: Some(9000),
            tick_interval_ms: Some(250),
            capacity: Some(1),
            ..ConfigFile::default()
        };
        let flags = Overrides {
            seed: Some(42),
            port: Some(9100),
            ..Overrides::default()
        };
        let config = Config::resolve(Some(file.clone()), &flags);
        assert_eq!(config.seed, 42, "flag beats file");
        assert_eq!(config.port, 9100, "flag beats file");
        assert_eq!(config.difficulty, 2, "file beats default");
        assert_eq!(config.data_dir, PathBuf::from("from-file"));
        assert_eq!(config.tick_interval_ms, 250);
        assert_eq!(config.capacity, 1);
        assert_eq!(config.reset_ttl, Config::default().reset_ttl, "default");

        let flags = Overrides {
            data_dir: Some("from-flag".into()),
            difficulty: Some(0),
            tick_interval_ms: Some(10),
            ..Overrides::default()
        };
        let config = Config::resolve(Some(file), &flags);
        assert_eq!(config.data_dir, PathBuf::from("from-flag"));
        assert_eq!(config.difficulty, 0);
        assert_eq!(config.tick_interval_ms, 10);
        assert_eq!(config.seed, 5);
    }

    #[test]
    fn file_parsing_rejects_unknown_keys() {
        let parsed: ConfigFile =
            serde_json::from_str(r#"{"difficulty": 1, "port": 1234}"#).unwrap();
        assert_eq!(parsed.difficulty, Some(1));
        assert!(
            serde_json::from_str::<ConfigFile>(r#"{"difficulty": 1, "colour": "red"}"#).is_err()
        );
    }

    #[test]
    fn invalid_values_rejected() {
        let bad = Config {
            difficulty: 9,
            ..Config::default()
        };
        assert!(bad.registry().is_err());
        let bad = Config {
            capacity: 0,
            ..Config::default()
        };
        assert!(bad.registry().is_err());
    }
}
