//! Run configuration: one TOML file, with command-line flags taking
//! precedence over file values.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use pead_core::backtest::TacticMode;
use pead_core::bundle::BundlePaths;
use pead_core::features::FeatureSpec;
use pead_core::ga::{GaConfig, ParamSpec, SearchSpace};
use pead_core::gbt::TrainConfig;
use pead_core::synth::{DriftTiming, SynthConfig};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    /// Directory holding the four conventionally named bundle files.
    pub dir: Option<PathBuf>,
    pub prices: Option<PathBuf>,
    pub index: Option<PathBuf>,
    pub fundamentals: Option<PathBuf>,
    pub short_interest: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureSection {
    pub base_metrics: Option<Vec<String>>,
    pub winsor_lower: Option<f64>,
    pub winsor_upper: Option<f64>,
    pub standardize: Option<Vec<String>>,
    pub max_missing_fraction: Option<f64>,
}

impl FeatureSection {
    pub fn resolve(&self) -> FeatureSpec {
        let mut spec = FeatureSpec::default();
        if let Some(metrics) = &self.base_metrics {
            spec.base_metrics = metrics.clone();
            spec.standardize = pead_core::features::level_scale_features(&spec.base_metrics);
        }
        if let Some(v) = self.winsor_lower {
            spec.winsor_lower = v;
        }
        if let Some(v) = self.winsor_upper {
            spec.winsor_upper = v;
        }
        if let Some(set) = &self.standardize {
            spec.standardize = set.iter().cloned().collect();
        }
        if let Some(v) = self.max_missing_fraction {
            spec.max_missing_fraction = v;
        }
        spec
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSection {
    pub year: Option<i32>,
    pub quarter: Option<String>,
    pub date: Option<String>,
    pub sector: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BacktestSection {
    /// Post-announcement window in trading days.
    pub horizon: usize,
    /// Portfolio window size.
    pub window: usize,
    /// Repeated-training run count for direction and occurrence studies.
    pub runs: usize,
    /// Day-one dead zone of the tactic filter.
    pub epsilon: f64,
    pub tactic_mode: TacticModeConfig,
}

impl Default for BacktestSection {
    fn default() -> Self {
        Self {
            horizon: 30,
            window: 100,
            runs: 100,
            epsilon: 0.0005,
            tactic_mode: TacticModeConfig::KeepOpposite,
        }
    }
}

/// Serializable mirror of [`TacticMode`] so the config file and flags share
/// the same spelling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum TacticModeConfig {
    KeepOpposite,
    DropOpposite,
}

impl From<TacticModeConfig> for TacticMode {
    fn from(mode: TacticModeConfig) -> Self {
        match mode {
            TacticModeConfig::KeepOpposite => TacticMode::KeepOpposite,
            TacticModeConfig::DropOpposite => TacticMode::DropOpposite,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GaSection {
    #[serde(flatten)]
    pub config: GaConfigSection,
    /// Override of the searched parameter lattices.
    pub space: Option<Vec<ParamSpecConfig>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GaConfigSection {
    pub population: Option<usize>,
    pub survivors: Option<usize>,
    pub mutation_prob: Option<f64>,
    pub tolerance: Option<f64>,
    pub max_generations: Option<usize>,
    pub folds: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamSpecConfig {
    pub name: String,
    pub min: f64,
    pub max: f64,
    pub step: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSection {
    pub companies: Option<usize>,
    pub quarters: Option<usize>,
    pub signal_weights: Option<BTreeMap<String, f64>>,
    pub noise_std: Option<f64>,
    pub drift_timing: Option<DriftTimingConfig>,
    pub index_daily_vol: Option<f64>,
    pub base_metrics: Option<Vec<String>>,
    pub start_year: Option<i32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum DriftTimingConfig {
    FromT0,
    FromT1,
}

impl From<DriftTimingConfig> for DriftTiming {
    fn from(t: DriftTimingConfig) -> Self {
        match t {
            DriftTimingConfig::FromT0 => DriftTiming::FromT0,
            DriftTimingConfig::FromT1 => DriftTiming::FromT1,
        }
    }
}

/// The whole config file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub output_dir: Option<PathBuf>,
    pub threads: Option<usize>,
    pub data: DataSection,
    pub features: FeatureSection,
    pub train: TrainConfig,
    pub ga: GaSection,
    pub split: SplitSection,
    pub backtest: BacktestSection,
    pub synth: SynthSection,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config file {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("cannot parse config {}", path.display()))
    }

    /// Short hash of the effective configuration, embedded in every output.
    pub fn hash(&self) -> String {
        let canonical = toml::to_string(self).expect("config serializes");
        let digest = Sha256::digest(canonical.as_bytes());
        let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
        hex[..16].to_string()
    }

    pub fn bundle_paths(&self) -> Result<BundlePaths> {
        let base = self
            .data
            .dir
            .clone()
            .map(|d| BundlePaths::in_dir(&d));
        let pick = |explicit: &Option<PathBuf>, from_dir: Option<PathBuf>, field: &str| {
            explicit
                .clone()
                .or(from_dir)
                .with_context(|| format!("config is missing data.{field} (or data.dir)"))
        };
        Ok(BundlePaths {
            prices: pick(&self.data.prices, base.as_ref().map(|b| b.prices.clone()), "prices")?,
            index: pick(&self.data.index, base.as_ref().map(|b| b.index.clone()), "index")?,
            fundamentals: pick(
                &self.data.fundamentals,
                base.as_ref().map(|b| b.fundamentals.clone()),
                "fundamentals",
            )?,
            short_interest: pick(
                &self.data.short_interest,
                base.as_ref().map(|b| b.short_interest.clone()),
                "short_interest",
            )?,
        })
    }

    pub fn ga_config(&self) -> GaConfig {
        let mut config = GaConfig {
            seed: self.seed,
            ..GaConfig::default()
        };
        let s = &self.ga.config;
        if let Some(v) = s.population {
            config.population = v;
        }
        if let Some(v) = s.survivors {
            config.survivors = v;
        }
        if let Some(v) = s.mutation_prob {
            config.mutation_prob = v;
        }
        if let Some(v) = s.tolerance {
            config.tolerance = v;
        }
        if let Some(v) = s.max_generations {
            config.max_generations = v;
        }
        if let Some(v) = s.folds {
            config.folds = v;
        }
        config
    }

    pub fn search_space(&self) -> Result<SearchSpace> {
        match &self.ga.space {
            None => Ok(SearchSpace::default_tree_space()),
            Some(params) => {
                let params = params
                    .iter()
                    .map(|p| ParamSpec::new(&p.name, p.min, p.max, p.step))
                    .collect();
                SearchSpace::new(params).context("invalid ga.space")
            }
        }
    }

    pub fn synth_config(&self) -> SynthConfig {
        let mut config = SynthConfig {
            seed: self.seed,
            horizon: self.backtest.horizon,
            ..SynthConfig::default()
        };
        let s = &self.synth;
        if let Some(v) = s.companies {
            config.companies = v;
        }
        if let Some(v) = s.quarters {
            config.quarters = v;
        }
        if let Some(w) = &s.signal_weights {
            config.signal_weights = w.clone();
        }
        if let Some(v) = s.noise_std {
            config.noise_std = v;
        }
        if let Some(t) = s.drift_timing {
            config.drift_timing = t.into();
        }
        if let Some(v) = s.index_daily_vol {
            config.index_daily_vol = v;
        }
        if let Some(m) = &s.base_metrics {
            config.base_metrics = m.clone();
        }
        if let Some(v) = s.start_year {
            config.start_year = v;
        }
        config
    }

    /// Resolve the test-period selector, flags first.
    pub fn selector(
        &self,
        year: Option<i32>,
        quarter: Option<&str>,
        date: Option<&str>,
        sector: Option<&str>,
    ) -> Result<pead_core::backtest::SplitSelector> {
        use pead_core::backtest::{PeriodSelector, SplitSelector};
        // Any period flag replaces the file's period outright.
        let (year, quarter, date) = if year.is_some() || quarter.is_some() || date.is_some() {
            (year, quarter.map(str::to_string), date.map(str::to_string))
        } else {
            (
                self.split.year,
                self.split.quarter.clone(),
                self.split.date.clone(),
            )
        };
        let sector = sector
            .map(|s| s.to_string())
            .or_else(|| self.split.sector.clone());

        let period = match (year, quarter, date) {
            (Some(y), None, None) => PeriodSelector::Year(y),
            (None, Some(q), None) => PeriodSelector::Quarter(
                q.parse().with_context(|| format!("invalid quarter `{q}`"))?,
            ),
            (None, None, Some(d)) => PeriodSelector::Date(
                d.parse().with_context(|| format!("invalid date `{d}`"))?,
            ),
            (None, None, None) => {
                bail!("no test period: set split.year, split.quarter, or split.date (or pass --year/--quarter/--date)")
            }
            _ => bail!("choose exactly one of year, quarter, or date as the test period"),
        };
        Ok(SplitSelector { period, sector })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_parse_from_empty_file() {
        let config: RunConfig = toml::from_str("").unwrap();
        assert_eq!(config.seed, 0);
        assert_eq!(config.backtest.horizon, 30);
        assert_eq!(config.train.rounds, 200);
    }

    #[test]
    fn hash_changes_with_content() {
        let a: RunConfig = toml::from_str("seed = 1").unwrap();
        let b: RunConfig = toml::from_str("seed = 2").unwrap();
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 16);
    }

    #[test]
    fn unknown_fields_rejected() {
        assert!(toml::from_str::<RunConfig>("sede = 1").is_err());
        assert!(toml::from_str::<RunConfig>("[trian]\nrounds = 1").is_err());
    }

    #[test]
    fn selector_requires_exactly_one_period() {
        let config: RunConfig = toml::from_str("[split]\nyear = 2015").unwrap();
        let sel = config.selector(None, None, None, None).unwrap();
        assert_eq!(
            sel.period,
            pead_core::backtest::PeriodSelector::Year(2015)
        );
        // A period flag replaces the file's period.
        let sel = config.selector(None, Some("2018Q4"), None, None).unwrap();
        assert_eq!(
            sel.period,
            pead_core::backtest::PeriodSelector::Quarter("2018Q4".parse().unwrap())
        );
        let empty: RunConfig = toml::from_str("").unwrap();
        assert!(empty.selector(None, None, None, None).is_err());
        let sel = empty
            .selector(None, Some("2018Q4"), None, Some("Financial"))
            .unwrap();
        assert_eq!(sel.sector.as_deref(), Some("Financial"));
    }

    #[test]
    fn ga_space_override() {
        let config: RunConfig = toml::from_str(
            "[[ga.space]]\nname = \"gamma\"\nmin = 0.0\nmax = 1.0\nstep = 0.5\n",
        )
        .unwrap();
        let space = config.search_space().unwrap();
        assert_eq!(space.params.len(), 1);
        assert_eq!(space.params[0].lattice_size(), 3);
    }
}
