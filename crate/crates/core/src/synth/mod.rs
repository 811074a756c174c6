//! Structural causal models: mechanism and noise specifications, forward
//! sampling, and the distribution-shift benchmark suites.

mod mechanism;
mod noise;
mod scm;
mod shift;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

pub use mechanism::{eval_mechanism, MechanismSpec, NodeMechanism, NodeParams};
pub use noise::NoiseSpec;
pub use scm::{
    forward_sample, forward_sample_with_noise, sample_scm, save_instance, GeneratorConfig,
    InstanceMeta, ScmInstance,
};
pub use shift::{make_shift_suite, BenchInstance, ShiftSetting, ShiftSuite, TrainComponent};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MechanismClass {
    Linear,
    #[serde(rename = "RFF")]
    Rff,
    Chebyshev,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NoiseFamily {
    Gaussian,
    Uniform,
    Laplace,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GraphModel {
    #[serde(rename = "ER")]
    Er,
    #[serde(rename = "SF")]
    Sf,
}

/// A (mechanism, noise, graph) triple, written `RFF_G_ER` style.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ScmSpec {
    pub mechanism: MechanismClass,
    pub noise: NoiseFamily,
    pub graph: GraphModel,
}

impl ScmSpec {
    pub fn new(mechanism: MechanismClass, noise: NoiseFamily, graph: GraphModel) -> Self {
        ScmSpec { mechanism, noise, graph }
    }
}

impl fmt::Display for ScmSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let m = match self.mechanism {
            MechanismClass::Linear => "Linear",
            MechanismClass::Rff => "RFF",
            MechanismClass::Chebyshev => "Chebyshev",
        };
        let n = match self.noise {
            NoiseFamily::Gaussian => "G",
            NoiseFamily::Uniform => "U",
            NoiseFamily::Laplace => "L",
        };
        let g = match self.graph {
            GraphModel::Er => "ER",
            GraphModel::Sf => "SF",
        };
        write!(f, "{m}_{n}_{g}")
    }
}

impl FromStr for ScmSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        let parts: Vec<&str> = s.split('_').collect();
        let bad = || Error::Config(format!("cannot parse SCM spec {s:?}; expected e.g. RFF_G_ER"));
        if parts.len() != 3 {
            return Err(bad());
        }
        let mechanism = match parts[0].to_ascii_lowercase().as_str() {
            "linear" => MechanismClass::Linear,
            "rff" => MechanismClass::Rff,
            "chebyshev" => MechanismClass::Chebyshev,
            _ => return Err(bad()),
        };
        let noise = match parts[1] {
            "G" | "g" => NoiseFamily::Gaussian,
            "U" | "u" => NoiseFamily::Uniform,
            "L" | "l" => NoiseFamily::Laplace,
            _ => return Err(bad()),
        };
        let graph = match parts[2].to_ascii_uppercase().as_str() {
            "ER" => GraphModel::Er,
            "SF" => GraphModel::Sf,
            _ => return Err(bad()),
        };
        Ok(ScmSpec { mechanism, noise, graph })
    }
}
