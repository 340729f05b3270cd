//! Scenario files.
//!
//! A scenario is a TOML document with one table per component:
//!
//! ```toml
//! seed = 42
//!
//! [map]
//! name = "inversion"
//! params = { n = 3, c = 1.0 }
//!
//! [domain]
//! kind = "box"
//! lower = [1.5, -0.5, -0.5]
//! upper = [2.5, 0.5, 0.5]
//! resolution = [32, 32, 32]
//!
//! [options]
//! samples = 100
//! tolerance = 1e-6
//! ```
//!
//! `[chart]`, `[target]` and `[exponent]` override the catalog defaults.
//! Unknown keys are rejected with their position in the file.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::FlowConfig;
use crate::geometry::{MetricChart, TargetSpace};
use crate::maps::{catalog_build, CatalogEntry, CatalogParams, DeformationRule, ExponentField, SmoothMap};
use crate::quadrature::Domain;
use crate::rng::DEFAULT_SEED;
use crate::section::{Bump, DirectionField, RawField};

fn default_seed() -> u64 {
    DEFAULT_SEED
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default = "default_seed")]
    pub seed: u64,
    pub map: MapSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chart: Option<MetricChart>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<TargetSpace>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exponent: Option<ExponentField>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<Domain>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub section: Option<SectionSpec>,
    /// Second direction for mixed second variations.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub section_w: Option<SectionSpec>,
    #[serde(default)]
    pub options: Options,
    #[serde(default)]
    pub flow: FlowSpec,
    #[serde(default)]
    pub output: OutputSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapSpec {
    pub name: String,
    #[serde(default)]
    pub params: CatalogParams,
}

/// A direction field; `collar` asks for the largest bump keeping that many
/// cells away from the edge of the box domain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SectionSpec {
    pub raw: RawField,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bump: Option<Bump>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub collar: Option<f64>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VariationKind {
    #[default]
    First,
    Second,
    Bienergy,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Functional {
    #[default]
    Energy,
    Bienergy,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Options {
    /// Label used in reports.
    pub scenario: Option<String>,
    /// Random admissible points drawn when `points` is absent.
    pub samples: usize,
    pub points: Option<Vec<Vec<f64>>>,
    /// Pass/fail threshold; commands without a default skip the check when
    /// absent.
    pub tolerance: Option<f64>,
    pub delta: Option<f64>,
    pub rule: DeformationRule,
    pub variation: VariationKind,
    pub functional: Functional,
}

impl Default for Options {
    fn default() -> Self {
        Self {
            scenario: None,
            samples: 100,
            points: None,
            tolerance: None,
            delta: None,
            rule: DeformationRule::Additive,
            variation: VariationKind::First,
            functional: Functional::Energy,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlowSpec {
    /// Periodic axes; all clamped when empty.
    pub periodic: Vec<bool>,
    /// Amplitude of the uniform noise added to interior nodes.
    pub noise: f64,
    pub solver: FlowConfig,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSpec {
    pub csv: Option<PathBuf>,
    pub json: Option<PathBuf>,
    /// Flow trace.
    pub trace: Option<PathBuf>,
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads a TOML scenario, or a JSON report whose `config` member is
    /// re-run.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        if path.extension().is_some_and(|e| e == "json") {
            let value: serde_json::Value =
                serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            let config = value.get("config").cloned().unwrap_or(value);
            return serde_json::from_value(config).map_err(|e| Error::Config(format!("{}: {e}", path.display())));
        }
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// The configuration with every catalog default written out and the
    /// output paths removed; this is what reports embed and hash.
    pub fn resolved(&self, scenario: &Scenario) -> Self {
        let mut c = self.clone();
        c.chart = Some(scenario.map.domain().clone());
        c.target = Some(scenario.map.target().clone());
        c.exponent = Some(scenario.exponent.clone());
        c.output = OutputSpec::default();
        c
    }
}

/// A configuration turned into live objects.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub entry: CatalogEntry,
    pub map: Arc<SmoothMap>,
    pub exponent: ExponentField,
}

impl Scenario {
    pub fn build(config: &ScenarioConfig) -> Result<Self> {
        let entry = catalog_build(&config.map.name, &config.map.params)?;
        let map = if config.chart.is_some() || config.target.is_some() {
            let m = &entry.map;
            let rebuilt = SmoothMap::new(
                m.name(),
                config.chart.clone().unwrap_or_else(|| m.domain().clone()),
                config.target.clone().unwrap_or_else(|| m.target().clone()),
                m.kind().clone(),
                m.region().clone(),
            )?;
            Arc::new(rebuilt)
        } else {
            entry.map.clone()
        };
        let exponent = config.exponent.clone().unwrap_or_else(|| entry.exponent.clone());
        if let Some(d) = &config.domain {
            d.validate()?;
            if d.dim() != map.domain().dim() {
                return Err(Error::Config(format!(
                    "domain has dimension {} but the map's chart has {}",
                    d.dim(),
                    map.domain().dim()
                )));
            }
        }
        Ok(Self { entry, map, exponent })
    }

    pub fn domain<'a>(&self, config: &'a ScenarioConfig) -> Result<&'a Domain> {
        config
            .domain
            .as_ref()
            .ok_or_else(|| Error::Config("this command needs a [domain] table".into()))
    }

    /// Evaluation points: the explicit list, or seeded admissible samples.
    pub fn points(&self, config: &ScenarioConfig) -> Result<Vec<Vec<f64>>> {
        let m = self.map.domain().dim();
        if let Some(points) = &config.options.points {
            for x in points {
                if x.len() != m {
                    return Err(Error::Config(format!("point {x:?} needs {m} coordinates")));
                }
            }
            return Ok(points.clone());
        }
        let mut rng = crate::rng::seeded(config.seed);
        (0..config.options.samples)
            .map(|_| {
                crate::rng::sample_where(&mut rng, &self.entry.sample_lower, &self.entry.sample_upper, |x| {
                    self.map.admissible(x)
                })
            })
            .collect()
    }

    pub fn direction(&self, spec: Option<&SectionSpec>, config: &ScenarioConfig, table: &str) -> Result<DirectionField> {
        let spec = spec.ok_or_else(|| Error::Config(format!("this command needs a [{table}] table")))?;
        let bump = match (&spec.bump, spec.collar) {
            (Some(_), Some(_)) => {
                return Err(Error::Config(format!("[{table}] takes either `bump` or `collar`")));
            }
            (Some(b), None) => Some(Bump::new(b.center.clone(), b.radius.clone())?),
            (None, Some(c)) => Some(Bump::inside(self.domain(config)?, c)?),
            (None, None) => None,
        };
        let k = self.map.target().coords();
        if spec.raw.coords() != k {
            return Err(Error::Config(format!(
                "[{table}] has {} components but the target needs {k}",
                spec.raw.coords()
            )));
        }
        Ok(DirectionField::new(spec.raw.clone(), bump))
    }
}
