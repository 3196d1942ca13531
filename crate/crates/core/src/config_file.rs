//! TOML front end for [`SystemConfig`].
//!
//! ```toml
//! [system]
//! tx_antennas = 16
//! rx_antennas = 2
//! users = 4
//! streams = 2
//! weights = [1.0, 1.0, 1.0, 1.0]        # optional, default all 1
//! qos_targets_bits = [0.0, 6.0, 6.0, 6.0] # optional, default all 0
//!
//! [power]
//! noise = "-90 dBm"                     # optional, this is the default
//! total = "10 dBm"                      # split evenly over antennas, or
//! # per_antenna = ["0.625 mW", ...]     # one literal per antenna
//!
//! [algorithm]                           # every key optional
//! admm_penalty = 1.0
//! outer_max_iters = 100
//! inner_max_iters = 50
//! outer_tol = 1e-5
//! inner_tol = 1e-6
//! bisection_tol = 1e-10
//! ```
//!
//! Power literals need a unit: `dBm`, `W` or `mW`.

use serde::{Deserialize, Serialize};

use crate::error::{ConfigError, ConfigErrors};
use crate::model::{
    parse_power, SystemConfig, ValidatedConfig, DEFAULT_BISECTION_TOL, DEFAULT_INNER_MAX_ITERS, DEFAULT_INNER_TOL,
    DEFAULT_OUTER_MAX_ITERS, DEFAULT_OUTER_TOL,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    pub tx_antennas: usize,
    pub rx_antennas: usize,
    pub users: usize,
    pub streams: usize,
    pub weights: Option<Vec<f64>>,
    pub qos_targets_bits: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerSection {
    #[serde(default = "default_noise")]
    pub noise: String,
    pub total: Option<String>,
    pub per_antenna: Option<Vec<String>>,
}

fn default_noise() -> String {
    "-90 dBm".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlgorithmSection {
    pub admm_penalty: f64,
    pub outer_max_iters: usize,
    pub inner_max_iters: usize,
    pub outer_tol: f64,
    pub inner_tol: f64,
    pub bisection_tol: f64,
}

impl Default for AlgorithmSection {
    fn default() -> Self {
        AlgorithmSection {
            admm_penalty: 1.0,
            outer_max_iters: DEFAULT_OUTER_MAX_ITERS,
            inner_max_iters: DEFAULT_INNER_MAX_ITERS,
            outer_tol: DEFAULT_OUTER_TOL,
            inner_tol: DEFAULT_INNER_TOL,
            bisection_tol: DEFAULT_BISECTION_TOL,
        }
    }
}

/// The three sections that describe one problem instance family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemFile {
    pub system: SystemSection,
    pub power: PowerSection,
    #[serde(default)]
    pub algorithm: AlgorithmSection,
}

impl SystemFile {
    pub fn parse(text: &str) -> Result<Self, ConfigErrors> {
        toml::from_str(text).map_err(|e| ConfigErrors(vec![ConfigError::Other(e.to_string())]))
    }

    /// Resolves power literals and validates, collecting every error.
    pub fn to_config(&self) -> Result<ValidatedConfig, ConfigErrors> {
        to_config(&self.system, &self.power, &self.algorithm)
    }
}

pub fn to_config(
    system: &SystemSection,
    power: &PowerSection,
    algorithm: &AlgorithmSection,
) -> Result<ValidatedConfig, ConfigErrors> {
    let mut errs = Vec::new();
    let nt = system.tx_antennas;
    let noise = parse_power(&power.noise).unwrap_or_else(|e| {
        errs.push(e);
        f64::NAN
    });
    let budgets = match (&power.total, &power.per_antenna) {
        (Some(total), None) => match parse_power(total) {
            Ok(w) => vec![w / nt.max(1) as f64; nt],
            Err(e) => {
                errs.push(e);
                Vec::new()
            }
        },
        (None, Some(list)) => list
            .iter()
            .filter_map(|lit| parse_power(lit).map_err(|e| errs.push(e)).ok())
            .collect(),
        _ => {
            errs.push(ConfigError::Other(
                "[power] needs exactly one of `total` or `per_antenna`".into(),
            ));
            Vec::new()
        }
    };
    if !errs.is_empty() {
        return Err(ConfigErrors(errs));
    }
    SystemConfig {
        num_tx_antennas: nt,
        num_rx_antennas: system.rx_antennas,
        num_users: system.users,
        num_streams: system.streams,
        noise_power: noise,
        antenna_power_budgets: budgets,
        user_weights: system.weights.clone().unwrap_or_else(|| vec![1.0; system.users]),
        qos_targets_bits: system.qos_targets_bits.clone().unwrap_or_else(|| vec![0.0; system.users]),
        admm_penalty: algorithm.admm_penalty,
        outer_max_iters: algorithm.outer_max_iters,
        inner_max_iters: algorithm.inner_max_iters,
        outer_tol: algorithm.outer_tol,
        inner_tol: algorithm.inner_tol,
        bisection_tol: algorithm.bisection_tol,
    }
    .validate()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::dbm_to_watts;
    use proptest::prelude::*;

    const FIG: &str = r#"
[system]
tx_antennas = 16
rx_antennas = 2
users = 4
streams = 2
qos_targets_bits = [1.0, 6.0, 6.0, 6.0]

[power]
total = "10 dBm"
"#;

    #[test]
    fn minimal_file_takes_defaults() {
        let cfg = SystemFile::parse(FIG).unwrap().to_config().unwrap();
        assert_eq!(cfg.nt(), 16);
        assert!((cfg.noise_power() - 1e-12).abs() < 1e-24);
        assert!(cfg.budgets().iter().all(|&b| (b - 0.01 / 16.0).abs() < 1e-15));
        assert_eq!(cfg.weights(), &[1.0; 4]);
        assert_eq!(cfg.qos_targets_bits(), &[1.0, 6.0, 6.0, 6.0]);
        assert_eq!(cfg.config().outer_max_iters, 100);
    }

    #[test]
    fn per_antenna_budgets() {
        let text = r#"
[system]
tx_antennas = 2
rx_antennas = 1
users = 1
streams = 1
[power]
noise = "1e-12 W"
per_antenna = ["1 mW", "0 dBm"]
[algorithm]
outer_max_iters = 7
"#;
        let cfg = SystemFile::parse(text).unwrap().to_config().unwrap();
        assert_eq!(cfg.budgets(), &[1e-3, dbm_to_watts(0.0)]);
        assert_eq!(cfg.config().outer_max_iters, 7);
    }

    #[test]
    fn all_errors_reported_together() {
        let text = r#"
[system]
tx_antennas = 2
rx_antennas = 1
users = 3
streams = 1
weights = [1.0, -1.0, 1.0]
[power]
total = "10 dBm"
[algorithm]
inner_tol = 0.0
"#;
        let errs = SystemFile::parse(text).unwrap().to_config().unwrap_err();
        assert!(errs.contains(|e| matches!(e, ConfigError::StreamsExceedTx { .. })));
        assert!(errs.contains(|e| matches!(e, ConfigError::NonPositiveEntry { field: "user_weights", .. })));
        assert!(errs.contains(|e| matches!(e, ConfigError::NonPositive { field: "inner_tol", .. })));
    }

    #[test]
    fn unitless_power_rejected() {
        let text = FIG.replace("\"10 dBm\"", "\"10\"");
        let errs = SystemFile::parse(&text).unwrap().to_config().unwrap_err();
        assert!(errs.contains(|e| matches!(e, ConfigError::PowerLiteral { .. })));
    }

    #[test]
    fn both_power_forms_rejected() {
        let text = FIG.replace("total = \"10 dBm\"", "total = \"10 dBm\"\nper_antenna = [\"1 mW\"]");
        assert!(SystemFile::parse(&text).unwrap().to_config().is_err());
    }

    #[test]
    fn unknown_keys_rejected() {
        let text = FIG.replace("streams = 2", "streams = 2\nstream = 3");
        assert!(SystemFile::parse(&text).is_err());
    }

    fn arb_config() -> impl Strategy<Value = SystemConfig> {
        (1usize..5, 1usize..3, 1usize..4, 1usize..3).prop_flat_map(|(k, nr, d, extra)| {
            let d = d.min(nr);
            let nt = k * d + extra;
            (
                prop::collection::vec(1e-6f64..1.0, nt),
                prop::collection::vec(0.1f64..10.0, k),
                prop::collection::vec(0.0f64..8.0, k),
                1e-15f64..1e-9,
                0.01f64..100.0,
            )
                .prop_map(move |(budgets, weights, targets, noise, rho)| SystemConfig {
                    num_tx_antennas: nt,
                    num_rx_antennas: nr,
                    num_users: k,
                    num_streams: d,
                    noise_power: noise,
                    antenna_power_budgets: budgets,
                    user_weights: weights,
                    qos_targets_bits: targets,
                    admm_penalty: rho,
                    ..SystemConfig::uniform(nt, nr, k, d, 10.0)
                })
        })
    }

    proptest! {
        #[test]
        fn system_config_toml_round_trip(cfg in arb_config()) {
            let text = toml::to_string(&cfg).unwrap();
            let back: SystemConfig = toml::from_str(&text).unwrap();
            prop_assert_eq!(&back, &cfg);
            let v = cfg.validate().unwrap();
            prop_assert_eq!(v.config().validate().unwrap(), v);
        }
    }
}
