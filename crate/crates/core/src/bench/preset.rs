use serde::{Deserialize, Serialize};

use super::BenchError;
use crate::optimizer::{BoConfig, Mode, Schedule};
use crate::param_space::{ObjectSpec, ParameterSpace, ParameterVector};
use crate::sim::{make_dataset, Footprint, GridSpec, Observation, SceneSpec, SurrogateSimulator};

pub const PRESET_NAMES: [&str; 4] = ["exp1", "exp2", "exp3", "exp4"];
pub const DEFAULT_ITERATIONS: usize = 200;
pub const DEFAULT_TRIALS: u64 = 10;

/// A synthetic identification problem: objects, scenes, and the parameters
/// that generated the observed heightmaps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentPreset {
    pub name: String,
    pub space: ParameterSpace,
    pub theta_star: ParameterVector,
    pub scenes: Vec<SceneSpec>,
    pub iterations: usize,
    #[serde(default)]
    pub schedule: Schedule,
    pub trial_seeds: Vec<u64>,
}

impl ExperimentPreset {
    pub fn validate(&self) -> Result<(), BenchError> {
        self.space.validate(&self.theta_star)?;
        if self.scenes.is_empty() {
            return Err(BenchError::Schema(format!("{}: no scenes", self.name)));
        }
        for s in &self.scenes {
            s.validate()?;
            self.space.subset_indices(&s.subset())?;
        }
        if self.trial_seeds.is_empty() {
            return Err(BenchError::Schema(format!("{}: no trial seeds", self.name)));
        }
        self.schedule
            .validate(self.scenes.len(), self.iterations)
            .map_err(|e| BenchError::Schema(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self, BenchError> {
        let p: Self = serde_json::from_str(text).map_err(|e| BenchError::Schema(e.to_string()))?;
        p.validate()?;
        Ok(p)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("preset serializes")
    }

    pub fn simulator(&self) -> SurrogateSimulator {
        SurrogateSimulator::new(self.space.clone())
    }

    /// Noise-free observations generated at `theta_star`.
    pub fn dataset(&self) -> Result<Vec<Observation>, BenchError> {
        Ok(make_dataset(
            &self.scenes,
            &self.space,
            &self.simulator(),
            &self.theta_star,
            None,
        )?)
    }

    /// Default run configuration for `mode` with this preset's iteration count.
    pub fn config(&self, mode: Mode) -> BoConfig {
        BoConfig {
            mode,
            iterations: self.iterations,
            ..BoConfig::default()
        }
    }
}

// Object ids and order are shared by every preset so that smaller presets
// embed in larger ones with identical flat indices.
const SLIME: u32 = 0;
const CYLINDER: u32 = 1;
const LADLE: u32 = 2;
const CUBE: u32 = 3;
const SPONGE: u32 = 4;
const BAG: u32 = 5;

const TABLE_CENTER: [f64; 2] = [0.16, 0.12];

struct Roster {
    id: u32,
    spec: fn() -> ObjectSpec,
    /// True parameters, physical units, in dimension order.
    truth: &'static [f64],
    radius: f64,
    height: f64,
}

const ROSTER: [Roster; 6] = [
    Roster {
        id: SLIME,
        spec: || ObjectSpec::deformable(SLIME, "slime"),
        truth: &[2000.0, 0.3],
        radius: 0.035,
        height: 0.06,
    },
    Roster {
        id: CYLINDER,
        spec: || ObjectSpec::rigid(CYLINDER, "cylinder"),
        truth: &[0.4],
        radius: 0.025,
        height: 0.08,
    },
    Roster {
        id: LADLE,
        spec: || ObjectSpec::rigid(LADLE, "ladle"),
        truth: &[0.15],
        radius: 0.02,
        height: 0.03,
    },
    Roster {
        id: CUBE,
        spec: || ObjectSpec::rigid(CUBE, "cube"),
        truth: &[1.2],
        radius: 0.03,
        height: 0.05,
    },
    Roster {
        id: SPONGE,
        spec: || ObjectSpec::deformable(SPONGE, "sponge"),
        truth: &[4000.0, 0.1],
        radius: 0.04,
        height: 0.065,
    },
    Roster {
        id: BAG,
        spec: || ObjectSpec::deformable(BAG, "bag"),
        truth: &[6000.0, -0.2],
        radius: 0.04,
        height: 0.07,
    },
];

fn roster(id: u32) -> &'static Roster {
    ROSTER.iter().find(|r| r.id == id).expect("known object")
}

fn footprint(id: u32, center: [f64; 2]) -> Footprint {
    let r = roster(id);
    Footprint {
        center,
        radius: r.radius,
        height: r.height,
    }
}

/// `(top, bottom, action)` triples; the top starts off to the side.
const SCENES: [(u32, u32, [f64; 2]); 8] = [
    (CYLINDER, SLIME, [0.004, -0.003]),
    (SLIME, LADLE, [-0.003, 0.002]),
    (CUBE, SLIME, [-0.005, 0.004]),
    (CYLINDER, SPONGE, [0.006, 0.002]),
    (SPONGE, CUBE, [0.002, -0.004]),
    (LADLE, SPONGE, [-0.004, -0.005]),
    (BAG, CYLINDER, [0.003, 0.005]),
    (CUBE, BAG, [-0.002, -0.006]),
];

fn object_name(id: u32) -> String {
    (roster(id).spec)().name
}

fn scene(top: u32, bottom: u32, action: [f64; 2]) -> SceneSpec {
    SceneSpec {
        name: format!("{}-on-{}", object_name(top), object_name(bottom)),
        bottom_id: bottom,
        top_id: top,
        bottom: footprint(bottom, TABLE_CENTER),
        top: footprint(top, [0.05, 0.05]),
        action,
        grid: GridSpec::default(),
    }
}

fn assemble(name: &str, n_objects: usize, n_scenes: usize, schedule: Schedule) -> ExperimentPreset {
    let objects: Vec<ObjectSpec> = ROSTER[..n_objects].iter().map(|r| (r.spec)()).collect();
    let theta: Vec<f64> = ROSTER[..n_objects]
        .iter()
        .flat_map(|r| r.truth.iter().copied())
        .collect();
    ExperimentPreset {
        name: name.into(),
        space: ParameterSpace::new(objects).expect("roster is valid"),
        theta_star: ParameterVector(theta),
        scenes: SCENES[..n_scenes]
            .iter()
            .map(|&(t, b, a)| scene(t, b, a))
            .collect(),
        iterations: DEFAULT_ITERATIONS,
        schedule,
        trial_seeds: (0..DEFAULT_TRIALS).collect(),
    }
}

/// Built-in presets: `exp1` (4 objects, 3 scenes), `exp2` (5, 6), `exp3`
/// (6, 8), and `exp4`, which is `exp3` with scenes arriving in three batches.
pub fn build_preset(name: &str) -> Result<ExperimentPreset, BenchError> {
    Ok(match name {
        "exp1" => assemble("exp1", 4, 3, Schedule::default()),
        "exp2" => assemble("exp2", 5, 6, Schedule::default()),
        "exp3" => assemble("exp3", 6, 8, Schedule::default()),
        "exp4" => {
            let mut s = Schedule::default();
            s.0.insert(0, vec![0, 1, 2]);
            s.0.insert(50, vec![3, 4, 5]);
            s.0.insert(100, vec![6, 7]);
            assemble("exp4", 6, 8, s)
        }
        _ => return Err(BenchError::UnknownPreset(name.into())),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::param_space::MaterialClass;
    use crate::sim::{reward, Simulator};

    #[test]
    fn preset_sizes() {
        let want = [("exp1", 4, 3, 5), ("exp2", 5, 6, 7), ("exp3", 6, 8, 9), ("exp4", 6, 8, 9)];
        for (name, objects, scenes, dims) in want {
            let p = build_preset(name).unwrap();
            p.validate().unwrap();
            assert_eq!(p.space.objects().len(), objects, "{name}");
            assert_eq!(p.scenes.len(), scenes, "{name}");
            assert_eq!(p.space.total_dims(), dims, "{name}");
            assert_eq!(p.iterations, 200);
            assert_eq!(p.trial_seeds, (0..10).collect::<Vec<u64>>());
        }
        let names: Vec<String> = build_preset("exp1")
            .unwrap()
            .space
            .objects()
            .iter()
            .map(|o| o.name.clone())
            .collect();
        assert_eq!(names, ["slime", "cylinder", "ladle", "cube"]);
        assert!(matches!(build_preset("exp9"), Err(BenchError::UnknownPreset(_))));
    }

    #[test]
    fn exp4_is_exp3_with_schedule() {
        let p3 = build_preset("exp3").unwrap();
        let p4 = build_preset("exp4").unwrap();
        assert_eq!(p3.space, p4.space);
        assert_eq!(p3.scenes, p4.scenes);
        assert_eq!(p3.theta_star, p4.theta_star);
        let inj: Vec<usize> = p4.schedule.injections().map(|(t, _)| t).collect();
        assert_eq!(inj, vec![50, 100]);
        assert_eq!(p4.schedule.initial(8), vec![0, 1, 2]);
    }

    #[test]
    fn smaller_presets_embed_in_larger_ones() {
        let p1 = build_preset("exp1").unwrap();
        let p3 = build_preset("exp3").unwrap();
        assert_eq!(p1.scenes[..], p3.scenes[..3]);
        assert_eq!(p1.theta_star.0[..], p3.theta_star.0[..5]);
        assert_eq!(p1.space.offsets(), &p3.space.offsets()[..4]);
        let d1 = p1.dataset().unwrap();
        let d3 = p3.dataset().unwrap();
        assert_eq!(d1[..], d3[..3]);
    }

    #[test]
    fn deformables_meet_at_least_two_partners() {
        let p = build_preset("exp3").unwrap();
        for o in p.space.objects() {
            if o.class == MaterialClass::Deformable {
                let n = p
                    .scenes
                    .iter()
                    .filter(|s| s.bottom_id == o.id || s.top_id == o.id)
                    .count();
                assert!(n >= 2, "{} appears in {n} scenes", o.name);
            }
        }
    }

    #[test]
    fn ground_truth_reward_is_zero() {
        for name in PRESET_NAMES {
            let p = build_preset(name).unwrap();
            let sim = p.simulator();
            for obs in p.dataset().unwrap() {
                let tk = p.space.slice_params(&p.theta_star, &obs.k).unwrap();
                let pred = sim.simulate(&obs.scene, tk.as_slice()).unwrap();
                assert_eq!(reward(&obs.observed, &pred).unwrap(), 0.0);
            }
        }
    }

    #[test]
    fn json_round_trip_and_rejection() {
        let p = build_preset("exp4").unwrap();
        let back = ExperimentPreset::from_json(&p.to_json()).unwrap();
        assert_eq!(back, p);
        let mut bad = p.clone();
        bad.theta_star.0[0] = 1e6;
        assert!(ExperimentPreset::from_json(&bad.to_json()).is_err());
        assert!(ExperimentPreset::from_json("{\"name\":\"x\"}").is_err());
    }

    #[test]
    fn preset_files_match_builtins() {
        let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../presets");
        for name in PRESET_NAMES {
            let text = std::fs::read_to_string(dir.join(format!("{name}.json"))).unwrap();
            assert_eq!(ExperimentPreset::from_json(&text).unwrap(), build_preset(name).unwrap(), "{name}");
        }
    }
}
