use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    forward_sample, sample_scm, GeneratorConfig, GraphModel, MechanismClass, NoiseFamily, ScmInstance,
    ScmSpec,
};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::rng::{child_seed, rng_from_seed};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShiftSetting {
    Iid,
    GraphShift,
    NoiseShift,
    MechanismShift,
    ComponentMixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainComponent {
    pub spec: ScmSpec,
    pub weight: f64,
}

/// Train/test component layout for one distribution-shift setting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftSuite {
    pub setting: ShiftSetting,
    pub test_spec: ScmSpec,
    pub train_specs: Vec<TrainComponent>,
}

/// The fixed mixture used for the component-mixed setting: every
/// mechanism, both graph models and the Gaussian/Uniform noises, paired so
/// that each mechanism is seen with only one noise family.
const MIXED_COMPONENTS: [(MechanismClass, NoiseFamily); 3] = [
    (MechanismClass::Rff, NoiseFamily::Uniform),
    (MechanismClass::Linear, NoiseFamily::Gaussian),
    (MechanismClass::Chebyshev, NoiseFamily::Uniform),
];

fn shifted_noise(n: NoiseFamily) -> NoiseFamily {
    match n {
        NoiseFamily::Gaussian => NoiseFamily::Uniform,
        NoiseFamily::Uniform => NoiseFamily::Laplace,
        NoiseFamily::Laplace => NoiseFamily::Gaussian,
    }
}

fn shifted_mechanism(m: MechanismClass) -> MechanismClass {
    match m {
        MechanismClass::Rff => MechanismClass::Chebyshev,
        MechanismClass::Linear | MechanismClass::Chebyshev => MechanismClass::Rff,
    }
}

impl ShiftSuite {
    /// Derives the training components for `setting` given the test triple.
    pub fn new(setting: ShiftSetting, test_spec: ScmSpec) -> Result<Self> {
        let one = |spec| vec![TrainComponent { spec, weight: 1.0 }];
        let t = test_spec;
        let train_specs = match setting {
            ShiftSetting::Iid => one(t),
            ShiftSetting::GraphShift => one(ScmSpec {
                graph: match t.graph {
                    GraphModel::Er => GraphModel::Sf,
                    GraphModel::Sf => GraphModel::Er,
                },
                ..t
            }),
            ShiftSetting::NoiseShift => one(ScmSpec { noise: shifted_noise(t.noise), ..t }),
            ShiftSetting::MechanismShift => one(ScmSpec { mechanism: shifted_mechanism(t.mechanism), ..t }),
            ShiftSetting::ComponentMixed => {
                let specs: Vec<ScmSpec> = MIXED_COMPONENTS
                    .iter()
                    .flat_map(|&(m, n)| {
                        [GraphModel::Er, GraphModel::Sf].map(|g| ScmSpec::new(m, n, g))
                    })
                    .collect();
                if specs.contains(&t) {
                    return Err(Error::Config(format!(
                        "component-mixed suite cannot exclude {t}: it is part of the training mixture"
                    )));
                }
                if !specs.iter().any(|s| s.noise == t.noise) {
                    return Err(Error::Config(format!(
                        "component-mixed suite never sees the noise family of {t}"
                    )));
                }
                let w = 1.0 / specs.len() as f64;
                specs.into_iter().map(|spec| TrainComponent { spec, weight: w }).collect()
            }
        };
        Ok(ShiftSuite { setting, test_spec, train_specs })
    }

    /// Training spec for the `k`-th instance: components are visited
    /// round-robin, which realizes uniform mixture weights exactly.
    fn train_spec(&self, k: usize) -> ScmSpec {
        self.train_specs[k % self.train_specs.len()].spec
    }
}

/// A generated instance with its ground truth.
#[derive(Debug, Clone)]
pub struct BenchInstance {
    pub spec: ScmSpec,
    pub seed: u64,
    pub scm: ScmInstance,
    pub data: Dataset,
}

impl BenchInstance {
    pub fn generate(spec: ScmSpec, d: usize, n: usize, config: &GeneratorConfig, seed: u64) -> Result<Self> {
        let scm = sample_scm(spec, d, config, &mut rng_from_seed(child_seed(seed, 0)))?;
        let mut data = forward_sample(&scm, n, &mut rng_from_seed(child_seed(seed, 1)))?;
        if config.standardize {
            data = data.standardized();
        }
        Ok(BenchInstance { spec, seed, scm, data })
    }
}

/// Generates `count` training and `count` test instances for `suite`.
/// Instance seeds are split from `seed`: training instances use stream 0,
/// test instances stream 1.
pub fn make_shift_suite(
    suite: &ShiftSuite,
    d: usize,
    n: usize,
    count: usize,
    config: &GeneratorConfig,
    seed: u64,
) -> Result<(Vec<BenchInstance>, Vec<BenchInstance>)> {
    if count == 0 {
        return Err(Error::Config("instance count must be at least 1".into()));
    }
    let train_root = child_seed(seed, 0);
    let test_root = child_seed(seed, 1);
    let train = (0..count)
        .into_par_iter()
        .map(|k| BenchInstance::generate(suite.train_spec(k), d, n, config, child_seed(train_root, k as u64)))
        .collect::<Result<Vec<_>>>()?;
    let test = (0..count)
        .into_par_iter()
        .map(|k| BenchInstance::generate(suite.test_spec, d, n, config, child_seed(test_root, k as u64)))
        .collect::<Result<Vec<_>>>()?;
    Ok((train, test))
}

#[cfg(test)]
mod tests {
    use std::collections::HashSet;

    use super::*;

    fn spec(s: &str) -> ScmSpec {
        s.parse().unwrap()
    }

    fn train_names(setting: ShiftSetting, test: &str) -> Vec<String> {
        ShiftSuite::new(setting, spec(test))
            .unwrap()
            .train_specs
            .iter()
            .map(|c| c.spec.to_string())
            .collect()
    }

    #[test]
    fn shift_table() {
        use ShiftSetting::*;
        let cases = [
            ("RFF_G_ER", ["RFF_G_SF", "RFF_U_ER", "Chebyshev_G_ER"]),
            ("RFF_G_SF", ["RFF_G_ER", "RFF_U_SF", "Chebyshev_G_SF"]),
            ("Linear_U_ER", ["Linear_U_SF", "Linear_L_ER", "RFF_U_ER"]),
            ("Linear_U_SF", ["Linear_U_ER", "Linear_L_SF", "RFF_U_SF"]),
            ("Chebyshev_G_ER", ["Chebyshev_G_SF", "Chebyshev_U_ER", "RFF_G_ER"]),
            ("Chebyshev_G_SF", ["Chebyshev_G_ER", "Chebyshev_U_SF", "RFF_G_SF"]),
        ];
        for (test, [g, n, m]) in cases {
            assert_eq!(train_names(Iid, test), [test]);
            assert_eq!(train_names(GraphShift, test), [g]);
            assert_eq!(train_names(NoiseShift, test), [n]);
            assert_eq!(train_names(MechanismShift, test), [m]);
        }
    }

    #[test]
    fn single_axis_shifts_change_exactly_one_component() {
        use ShiftSetting::*;
        for test in ["RFF_G_ER", "Linear_U_SF", "Chebyshev_G_ER"] {
            for setting in [GraphShift, NoiseShift, MechanismShift] {
                let t = spec(test);
                let suite = ShiftSuite::new(setting, t).unwrap();
                for c in &suite.train_specs {
                    let diffs = (c.spec.mechanism != t.mechanism) as u8
                        + (c.spec.noise != t.noise) as u8
                        + (c.spec.graph != t.graph) as u8;
                    assert_eq!(diffs, 1, "{setting:?} {test}");
                }
            }
        }
    }

    #[test]
    fn component_mixed_sees_parts_but_not_the_triple() {
        let t = spec("RFF_G_ER");
        let suite = ShiftSuite::new(ShiftSetting::ComponentMixed, t).unwrap();
        let (train, test) = make_shift_suite(&suite, 4, 10, 12, &GeneratorConfig::default(), 5).unwrap();
        let seen: HashSet<ScmSpec> = train.iter().map(|i| i.spec).collect();
        assert_eq!(seen.len(), 6);
        assert!(!seen.contains(&t));
        assert!(seen.iter().any(|s| s.mechanism == t.mechanism));
        assert!(seen.iter().any(|s| s.noise == t.noise));
        assert!(seen.iter().any(|s| s.graph == t.graph));
        assert!(test.iter().all(|i| i.spec == t));
        let weights: f64 = suite.train_specs.iter().map(|c| c.weight).sum();
        assert!((weights - 1.0).abs() < 1e-12);
    }

    #[test]
    fn component_mixed_rejects_unexcludable_triples() {
        assert!(ShiftSuite::new(ShiftSetting::ComponentMixed, spec("RFF_U_ER")).is_err());
        assert!(ShiftSuite::new(ShiftSetting::ComponentMixed, spec("Linear_L_ER")).is_err());
    }

    #[test]
    fn suites_are_reproducible_and_carry_truth() {
        let suite = ShiftSuite::new(ShiftSetting::Iid, spec("Linear_U_ER")).unwrap();
        let cfg = GeneratorConfig::default();
        let (a, ta) = make_shift_suite(&suite, 5, 20, 3, &cfg, 77).unwrap();
        let (b, _) = make_shift_suite(&suite, 5, 20, 3, &cfg, 77).unwrap();
        assert_eq!(a.len(), 3);
        assert_eq!(ta.len(), 3);
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.scm, y.scm);
            assert_eq!(x.data, y.data);
            assert_eq!(x.spec, spec("Linear_U_ER"));
        }
        assert!(make_shift_suite(&suite, 5, 20, 0, &cfg, 77).is_err());
    }
}
