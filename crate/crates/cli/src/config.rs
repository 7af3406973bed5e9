//! The JSON run configuration: `simulation`, `hyperparameters` and
//! `sampler` sections, each optional, unknown keys rejected.

use std::path::Path;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use sggmdar::model::Hyperparameters;
use sggmdar::numerics::SymMatrix;
use sggmdar::sampler::SamplerConfig;
use sggmdar::simulation::{GraphKind, SimConfig};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulation: Option<SimulationSection>,
    #[serde(default)]
    pub hyperparameters: HyperparameterSection,
    #[serde(default)]
    pub sampler: SamplerSection,
}

fn default_hub_blocks() -> usize {
    5
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSection {
    pub d: usize,
    pub t: usize,
    pub m: usize,
    pub p: usize,
    pub phi: Vec<f64>,
    pub pi: Vec<f64>,
    pub graph_kinds: Vec<String>,
    #[serde(default = "default_hub_blocks")]
    pub hub_blocks: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "yes")]
    pub scale_to_unit_sd: bool,
    #[serde(default)]
    pub zero_means: bool,
}

impl SimulationSection {
    pub fn from_sim(c: &SimConfig) -> Self {
        Self {
            d: c.d,
            t: c.t,
            m: c.m,
            p: c.p,
            phi: c.phi.clone(),
            pi: c.pi.clone(),
            graph_kinds: c.graph_kinds.iter().map(|k| k.name().to_string()).collect(),
            hub_blocks: c.hub_blocks,
            seed: c.seed,
            scale_to_unit_sd: c.scale_to_unit_sd,
            zero_means: c.zero_means,
        }
    }

    pub fn resolve(&self) -> CliResult<SimConfig> {
        let graph_kinds = self
            .graph_kinds
            .iter()
            .map(|s| {
                s.parse::<GraphKind>()
                    .map_err(|_| CliError::Config(format!("simulation.graph_kinds: unknown kind `{s}`")))
            })
            .collect::<CliResult<Vec<_>>>()?;
        let c = SimConfig {
            d: self.d,
            t: self.t,
            m: self.m,
            p: self.p,
            phi: self.phi.clone(),
            pi: self.pi.clone(),
            graph_kinds,
            hub_blocks: self.hub_blocks,
            seed: self.seed,
            scale_to_unit_sd: self.scale_to_unit_sd,
            zero_means: self.zero_means,
        };
        c.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(c)
    }
}

/// Prior constants; absent entries take the study defaults. `mu0` defaults
/// to zero and `r0` to `r0_scale · I`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HyperparameterSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub av: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bv: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu0: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r0_scale: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m_max: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_max: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub state_floor: Option<f64>,
}

/// Fully resolved prior constants as persisted in chain headers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResolvedHyperparameters {
    pub a0: f64,
    pub b0: f64,
    pub av: f64,
    pub bv: f64,
    pub kappa0: f64,
    pub mu0: Vec<f64>,
    pub r0_scale: f64,
    pub m_max: usize,
    pub p_max: usize,
    pub state_floor: f64,
}

impl ResolvedHyperparameters {
    pub fn to_model(&self) -> CliResult<Hyperparameters> {
        if !(self.r0_scale > 0.0 && self.r0_scale.is_finite()) {
            return Err(CliError::Config("hyperparameters.r0_scale: must be positive".into()));
        }
        let d = self.mu0.len();
        let hp = Hyperparameters {
            a0: self.a0,
            b0: self.b0,
            av: self.av,
            bv: self.bv,
            kappa0: self.kappa0,
            mu0: DVector::from_vec(self.mu0.clone()),
            r0: SymMatrix::scaled_identity(d, self.r0_scale),
            m_max: self.m_max,
            p_max: self.p_max,
            state_floor: self.state_floor,
        };
        hp.validate()
            .map_err(|e| CliError::Config(format!("hyperparameters.{e}").replace("hyperparameters.invalid value for ", "hyperparameters.")))?;
        Ok(hp)
    }
}

impl HyperparameterSection {
    pub fn resolve(&self, d: usize) -> CliResult<ResolvedHyperparameters> {
        let def = Hyperparameters::default_for_dim(d);
        let mu0 = self.mu0.clone().unwrap_or_else(|| vec![0.0; d]);
        if mu0.len() != d {
            return Err(CliError::Config(format!(
                "hyperparameters.mu0: length {} but the data have dimension {d}",
                mu0.len()
            )));
        }
        let r = ResolvedHyperparameters {
            a0: self.a0.unwrap_or(def.a0),
            b0: self.b0.unwrap_or(def.b0),
            av: self.av.unwrap_or(def.av),
            bv: self.bv.unwrap_or(def.bv),
            kappa0: self.kappa0.unwrap_or(def.kappa0),
            mu0,
            r0_scale: self.r0_scale.unwrap_or(def.r0.get(0, 0)),
            m_max: self.m_max.unwrap_or(def.m_max),
            p_max: self.p_max.unwrap_or(def.p_max),
            state_floor: self.state_floor.unwrap_or(def.state_floor),
        };
        r.to_model()?;
        Ok(r)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iterations: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub burnin: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thin: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub record_loglik: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chains: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResolvedSampler {
    pub iterations: usize,
    pub burnin: usize,
    pub thin: usize,
    pub seed: u64,
    pub record_loglik: bool,
    pub chains: usize,
}

impl ResolvedSampler {
    pub fn to_config(&self) -> SamplerConfig {
        SamplerConfig {
            iterations: self.iterations,
            burnin: self.burnin,
            thin: self.thin,
            seed: self.seed,
            record_loglik: self.record_loglik,
            chains: self.chains,
        }
    }
}

impl SamplerSection {
    pub fn resolve(&self) -> CliResult<ResolvedSampler> {
        let def = SamplerConfig::default();
        let r = ResolvedSampler {
            iterations: self.iterations.unwrap_or(def.iterations),
            burnin: self.burnin.unwrap_or(def.burnin),
            thin: self.thin.unwrap_or(def.thin),
            seed: self.seed.unwrap_or(def.seed),
            record_loglik: self.record_loglik.unwrap_or(def.record_loglik),
            chains: self.chains.unwrap_or(def.chains),
        };
        r.to_config()
            .validate()
            .map_err(|e| CliError::Config(format!("sampler: {e}")))?;
        Ok(r)
    }
}

pub fn parse_config(text: &str) -> CliResult<RunConfig> {
    serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))
}

pub fn load_config(path: Option<&Path>) -> CliResult<RunConfig> {
    match path {
        None => Ok(RunConfig::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
            parse_config(&text).map_err(|e| match e {
                CliError::Config(m) => CliError::Config(format!("{}: {m}", p.display())),
                other => other,
            })
        }
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Hash of the canonical JSON form of a resolved value.
pub fn config_hash<T: Serialize>(value: &T) -> String {
    sha256_hex(&serde_json::to_vec(value).expect("serializable config"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_takes_defaults() {
        let c = parse_config("{}").unwrap();
        let h = c.hyperparameters.resolve(3).unwrap();
        assert_eq!((h.a0, h.b0, h.av, h.bv, h.kappa0), (1.0, 10.0, 10.0, 1.0, 0.001));
        assert_eq!((h.m_max, h.p_max), (10, 5));
        let s = c.sampler.resolve().unwrap();
        assert_eq!((s.iterations, s.burnin, s.thin), (4000, 1200, 1));
    }

    #[test]
    fn unknown_keys_rejected() {
        let e = parse_config(r#"{"sampler": {"iteratons": 10}}"#).unwrap_err();
        assert!(e.to_string().contains("iteratons"), "{e}");
        assert_eq!(e.exit_code(), 2);
        assert!(parse_config(r#"{"samplr": {}}"#).is_err());
    }

    #[test]
    fn bad_simplex_names_field() {
        let mut s = SimulationSection::from_sim(&SimConfig::five_state_study(0));
        s.pi = vec![0.5, 0.1, 0.1, 0.1, 0.1];
        let e = s.resolve().unwrap_err();
        assert!(e.to_string().contains("simulation.pi"), "{e}");
    }

    #[test]
    fn invalid_sampler_and_prior() {
        let c = parse_config(r#"{"sampler": {"iterations": 10, "burnin": 10}}"#).unwrap();
        assert!(c.sampler.resolve().unwrap_err().to_string().contains("burnin"));
        let c = parse_config(r#"{"hyperparameters": {"kappa0": -1}}"#).unwrap();
        assert!(c.hyperparameters.resolve(2).unwrap_err().to_string().contains("kappa0"));
        let c = parse_config(r#"{"hyperparameters": {"mu0": [0, 0]}}"#).unwrap();
        assert!(c.hyperparameters.resolve(3).is_err());
    }

    #[test]
    fn round_trip_and_hash() {
        let c = RunConfig {
            simulation: Some(SimulationSection::from_sim(&SimConfig::five_state_study(3))),
            ..Default::default()
        };
        let text = serde_json::to_string(&c).unwrap();
        assert_eq!(parse_config(&text).unwrap(), c);
        assert_eq!(config_hash(&c), config_hash(&c.clone()));
        assert_eq!(config_hash(&c).len(), 64);
    }
}
