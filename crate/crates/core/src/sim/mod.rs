//! Analytic stand-in for a physics engine.
//!
//! Scenes are one object placed on another. The final top-down heightmap is a
//! closed-form function of the two objects' material parameters:
//!
//! * the bottom object is indented by `d = c · load / E_bottom` (zero when the
//!   bottom is rigid), clamped to 80% of its height;
//! * a deformable bottom gains a ring of height `ν_bottom · d` around the
//!   contact (a depression when `ν < 0`);
//! * a deformable top carries a fixed effective load and is flattened in
//!   proportion to its stiffness;
//! * the top rests at the indented surface height and the visible map is the
//!   pointwise maximum of the deformed bottom and the stacked top.

mod heightmap;
mod scene;

pub use heightmap::{reward, render_footprint, round_sig9, GridSpec, Heightmap};
pub use scene::{Footprint, Observation, SceneSpec};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::param_space::{
    MaterialClass, ObjectSpec, ParamError, ParameterSpace, ParameterVector,
};

/// Indentation constant in SI units (`d` in meters for mass in kg and the
/// raw Young's modulus range).
pub const CONTACT_CONSTANT: f64 = 50.0;
/// Load used in place of the mass when the top object is deformable, kg.
pub const DEFORMABLE_TOP_LOAD: f64 = 0.3;
/// Indentation never exceeds this fraction of the bottom's nominal height.
pub const MAX_INDENT_FRACTION: f64 = 0.8;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Param(#[from] ParamError),
    #[error("invalid scene: {0}")]
    InvalidScene(String),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("heightmap grids differ: observed {observed:?}, predicted {predicted:?}")]
    GridMismatch {
        observed: (usize, usize, f64),
        predicted: (usize, usize, f64),
    },
    #[error("heightmap parse error: {0}")]
    Parse(String),
    #[error("simulator failure: {0}")]
    Failed(String),
}

/// Predicts the final heightmap of a scene from the parameters of the objects
/// in it, ordered bottom block then top block.
pub trait Simulator: Sync {
    fn simulate(&self, scene: &SceneSpec, theta_k: &[f64]) -> Result<Heightmap, SimError>;
}

/// Intermediate quantities of the contact model.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Contact {
    pub load: f64,
    /// Indentation depth of the bottom object, meters.
    pub depth: f64,
    pub bottom_poisson: f64,
    /// Deformed top amplitude and radius.
    pub top_height: f64,
    pub top_radius: f64,
    /// Height of the top object's base at its centroid.
    pub stack_height: f64,
}

#[derive(Clone, Debug)]
pub struct SurrogateSimulator {
    space: ParameterSpace,
}

impl SurrogateSimulator {
    pub fn new(space: ParameterSpace) -> Self {
        Self { space }
    }

    pub fn space(&self) -> &ParameterSpace {
        &self.space
    }

    fn split<'a>(
        &'a self,
        scene: &SceneSpec,
        theta_k: &'a [f64],
    ) -> Result<(&'a ObjectSpec, &'a [f64], &'a ObjectSpec, &'a [f64]), SimError> {
        let bottom = self.space.object(scene.bottom_id)?;
        let top = self.space.object(scene.top_id)?;
        let nb = bottom.dims.len();
        let expected = nb + top.dims.len();
        if theta_k.len() != expected {
            return Err(ParamError::LengthMismatch {
                expected,
                got: theta_k.len(),
            }
            .into());
        }
        let dims = bottom.dims.iter().chain(top.dims.iter());
        for (index, (d, &value)) in dims.zip(theta_k).enumerate() {
            if !d.contains(value) {
                return Err(ParamError::OutOfBounds {
                    index,
                    name: d.name.clone(),
                    value,
                    lower: d.lower,
                    upper: d.upper,
                }
                .into());
            }
        }
        Ok((bottom, &theta_k[..nb], top, &theta_k[nb..]))
    }

    pub fn contact(&self, scene: &SceneSpec, theta_k: &[f64]) -> Result<Contact, SimError> {
        scene.validate()?;
        let (bottom, tb, top, tt) = self.split(scene, theta_k)?;

        let mut top_height = scene.top.height;
        let mut top_radius = scene.top.radius;
        let load = match top.class {
            MaterialClass::Rigid => tt[0],
            MaterialClass::Deformable => {
                let ratio = tt[0] / top.dims[0].upper;
                top_height *= ratio;
                top_radius *= 1.0 + 0.5 * (1.0 - ratio);
                DEFORMABLE_TOP_LOAD
            }
        };
        let (depth, bottom_poisson) = match bottom.class {
            MaterialClass::Rigid => (0.0, 0.0),
            MaterialClass::Deformable => (
                (CONTACT_CONSTANT * load / tb[0]).min(MAX_INDENT_FRACTION * scene.bottom.height),
                tb[1],
            ),
        };
        let (ax, ay) = scene.placement();
        let r2 = (ax - scene.bottom.center[0]).powi(2) + (ay - scene.bottom.center[1]).powi(2);
        let under = scene.bottom.height * (-r2 / (2.0 * scene.bottom.radius.powi(2))).exp();
        Ok(Contact {
            load,
            depth,
            bottom_poisson,
            top_height,
            top_radius,
            stack_height: (under - depth).max(0.0),
        })
    }
}

impl Simulator for SurrogateSimulator {
    fn simulate(&self, scene: &SceneSpec, theta_k: &[f64]) -> Result<Heightmap, SimError> {
        let c = self.contact(scene, theta_k)?;
        let grid = scene.grid;
        let base = render_footprint(
            grid,
            (scene.bottom.center[0], scene.bottom.center[1]),
            scene.bottom.radius,
            scene.bottom.height,
        );
        let (ax, ay) = scene.placement();
        // unit-amplitude top footprint, shared by the dent and the stacked top
        let shape = render_footprint(grid, (ax, ay), c.top_radius, 1.0);
        let ring_radius = 1.5 * c.top_radius;
        let ring_width2 = 2.0 * (0.5 * c.top_radius).powi(2);
        let bulge = c.bottom_poisson * c.depth;
        let top_peak = c.stack_height + c.top_height;

        let mut out = Heightmap::zeros(grid);
        for row in 0..grid.height {
            for col in 0..grid.width {
                let i = row * grid.width + col;
                let (x, y) = grid.cell_center(col, row);
                let r = ((x - ax).powi(2) + (y - ay).powi(2)).sqrt();
                let ring = (-(r - ring_radius).powi(2) / ring_width2).exp();
                let bottom = base.values[i] - c.depth * shape.values[i] + bulge * ring;
                let stacked = top_peak * shape.values[i];
                out.values[i] = bottom.max(stacked).max(0.0);
            }
        }
        Ok(out)
    }
}

/// Per-cell uniform noise in `[-amplitude, amplitude]` added to ground truth.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub amplitude: f64,
    pub seed: u64,
}

/// Generates observations whose ground truth is the simulator's output at
/// `theta_star`, optionally perturbed by [`NoiseSpec`] (heights stay ≥ 0).
pub fn make_dataset(
    scenes: &[SceneSpec],
    space: &ParameterSpace,
    sim: &dyn Simulator,
    theta_star: &ParameterVector,
    noise: Option<NoiseSpec>,
) -> Result<Vec<Observation>, SimError> {
    space.validate(theta_star)?;
    let mut rng = noise.map(|n| ChaCha8Rng::seed_from_u64(n.seed));
    scenes
        .iter()
        .map(|scene| {
            let k = scene.subset();
            let theta_k = space.slice_params(theta_star, &k)?;
            let mut observed = sim.simulate(scene, theta_k.as_slice())?;
            if let (Some(n), Some(rng)) = (noise, rng.as_mut()) {
                for v in &mut observed.values {
                    *v = (*v + rng.random_range(-n.amplitude..=n.amplitude)).max(0.0);
                }
            }
            Observation::new(scene.clone(), observed)
        })
        .collect()
}
