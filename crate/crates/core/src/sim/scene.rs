use serde::{Deserialize, Serialize};

use super::{GridSpec, Heightmap, SimError};
use crate::param_space::{ObjectId, SubsetIndex};

/// Known geometry of one object in a scene.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Footprint {
    /// Position on the table before the action, meters.
    pub center: [f64; 2],
    pub radius: f64,
    /// Nominal (undeformed) height, meters.
    pub height: f64,
}

/// A pick-and-place scene: `top` is placed on `bottom` with its centroid at
/// `bottom.center + action`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    pub name: String,
    pub bottom_id: ObjectId,
    pub top_id: ObjectId,
    pub bottom: Footprint,
    pub top: Footprint,
    pub action: [f64; 2],
    #[serde(default)]
    pub grid: GridSpec,
}

impl SceneSpec {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.bottom_id == self.top_id {
            return Err(SimError::InvalidScene(format!(
                "{}: bottom and top are the same object {}",
                self.name, self.bottom_id
            )));
        }
        for (which, fp) in [("bottom", &self.bottom), ("top", &self.top)] {
            if !(fp.radius > 0.0 && fp.height > 0.0) {
                return Err(SimError::InvalidScene(format!(
                    "{}: {which} radius and height must be positive",
                    self.name
                )));
            }
        }
        self.grid.validate()
    }

    /// Objects in the scene, bottom first.
    pub fn subset(&self) -> SubsetIndex {
        SubsetIndex::new(vec![self.bottom_id, self.top_id]).expect("two distinct ids")
    }

    /// Final position of the top object's centroid.
    pub fn placement(&self) -> (f64, f64) {
        (
            self.bottom.center[0] + self.action[0],
            self.bottom.center[1] + self.action[1],
        )
    }
}

/// One recorded interaction and its ground-truth final heightmap.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub scene: SceneSpec,
    pub k: SubsetIndex,
    pub observed: Heightmap,
}

impl Observation {
    pub fn new(scene: SceneSpec, observed: Heightmap) -> Result<Self, SimError> {
        scene.validate()?;
        observed.validate()?;
        if observed.grid() != scene.grid {
            return Err(SimError::InvalidScene(format!(
                "{}: observed heightmap grid differs from the scene grid",
                scene.name
            )));
        }
        Ok(Self {
            k: scene.subset(),
            scene,
            observed,
        })
    }

    pub fn validate(&self) -> Result<(), SimError> {
        self.scene.validate()?;
        self.observed.validate()?;
        if self.k != self.scene.subset() {
            return Err(SimError::InvalidScene(format!(
                "{}: subset must list exactly bottom then top",
                self.scene.name
            )));
        }
        Ok(())
    }
}
