//! Material parameter space over a set of objects.
//!
//! The global parameter vector is the concatenation of per-object blocks in
//! the order the objects appear in the [`ParameterSpace`]. Rigid objects
//! contribute a single mass dimension; deformable objects contribute Young's
//! modulus followed by Poisson's ratio. Each observation only sees the blocks
//! of the objects in its [`SubsetIndex`], and the sliced sub-vector follows
//! the order of that subset, not the global order.

use std::collections::BTreeMap;
use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type ObjectId = u32;

pub const MASS_BOUNDS: (f64, f64) = (0.01, 2.0);
pub const YOUNGS_MODULUS_BOUNDS: (f64, f64) = (1000.0, 10000.0);
pub const POISSONS_RATIO_BOUNDS: (f64, f64) = (-0.5, 0.5);

pub const MASS: &str = "mass";
pub const YOUNGS_MODULUS: &str = "youngs_modulus";
pub const POISSONS_RATIO: &str = "poissons_ratio";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParamError {
    #[error("unknown object id {0}")]
    UnknownObject(ObjectId),
    #[error("duplicate object id {0}")]
    DuplicateObject(ObjectId),
    #[error("object subset is empty")]
    EmptySubset,
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("dimension {index} ({name}) value {value} outside [{lower}, {upper}]")]
    OutOfBounds {
        index: usize,
        name: String,
        value: f64,
        lower: f64,
        upper: f64,
    },
    #[error("invalid bounds for {name}: [{lower}, {upper}]")]
    InvalidBounds { name: String, lower: f64, upper: f64 },
    #[error("object {id}: {class:?} objects need {expected} dimension(s), got {got}")]
    WrongDimCount {
        id: ObjectId,
        class: MaterialClass,
        expected: usize,
        got: usize,
    },
    #[error("parameter space schema: {0}")]
    Schema(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaterialClass {
    Rigid,
    Deformable,
}

impl MaterialClass {
    pub fn dim_count(self) -> usize {
        match self {
            MaterialClass::Rigid => 1,
            MaterialClass::Deformable => 2,
        }
    }
}

/// How a dimension is mapped onto the unit interval.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    Linear,
    /// Affine map applied to `log10(value)`; requires a positive lower bound.
    Log10,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dimension {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
    pub scale: Scale,
}

impl Dimension {
    pub fn new(name: &str, lower: f64, upper: f64, scale: Scale) -> Result<Self, ParamError> {
        let invalid = || ParamError::InvalidBounds {
            name: name.to_string(),
            lower,
            upper,
        };
        if !(lower.is_finite() && upper.is_finite() && lower < upper) {
            return Err(invalid());
        }
        if scale == Scale::Log10 && lower <= 0.0 {
            return Err(invalid());
        }
        Ok(Self {
            name: name.to_string(),
            lower,
            upper,
            scale,
        })
    }

    #[inline]
    fn transformed_bounds(&self) -> (f64, f64) {
        match self.scale {
            Scale::Linear => (self.lower, self.upper),
            Scale::Log10 => (self.lower.log10(), self.upper.log10()),
        }
    }

    #[inline]
    pub fn to_unit(&self, value: f64) -> f64 {
        let (lo, hi) = self.transformed_bounds();
        let v = match self.scale {
            Scale::Linear => value,
            Scale::Log10 => value.log10(),
        };
        (v - lo) / (hi - lo)
    }

    #[inline]
    pub fn from_unit(&self, u: f64) -> f64 {
        let (lo, hi) = self.transformed_bounds();
        let v = lo + u * (hi - lo);
        match self.scale {
            Scale::Linear => v,
            Scale::Log10 => 10f64.powf(v).clamp(self.lower, self.upper),
        }
    }

    pub fn contains(&self, value: f64) -> bool {
        value >= self.lower && value <= self.upper
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lower + self.upper)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectSpec {
    pub id: ObjectId,
    pub name: String,
    pub class: MaterialClass,
    pub dims: Vec<Dimension>,
}

impl ObjectSpec {
    pub fn new(
        id: ObjectId,
        name: &str,
        class: MaterialClass,
        dims: Vec<Dimension>,
    ) -> Result<Self, ParamError> {
        if dims.len() != class.dim_count() {
            return Err(ParamError::WrongDimCount {
                id,
                class,
                expected: class.dim_count(),
                got: dims.len(),
            });
        }
        Ok(Self {
            id,
            name: name.to_string(),
            class,
            dims,
        })
    }

    /// Rigid object with the default mass range in kg.
    pub fn rigid(id: ObjectId, name: &str) -> Self {
        let (lo, hi) = MASS_BOUNDS;
        Self {
            id,
            name: name.to_string(),
            class: MaterialClass::Rigid,
            dims: vec![Dimension::new(MASS, lo, hi, Scale::Linear).expect("static bounds")],
        }
    }

    /// Deformable object with the default Young's modulus (log-scaled) and
    /// Poisson's ratio ranges.
    pub fn deformable(id: ObjectId, name: &str) -> Self {
        let (elo, ehi) = YOUNGS_MODULUS_BOUNDS;
        let (plo, phi) = POISSONS_RATIO_BOUNDS;
        Self {
            id,
            name: name.to_string(),
            class: MaterialClass::Deformable,
            dims: vec![
                Dimension::new(YOUNGS_MODULUS, elo, ehi, Scale::Log10).expect("static bounds"),
                Dimension::new(POISSONS_RATIO, plo, phi, Scale::Linear).expect("static bounds"),
            ],
        }
    }
}

/// Flat vector of material parameters in physical units.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParameterVector(pub Vec<f64>);

impl ParameterVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl From<Vec<f64>> for ParameterVector {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

/// Ordered, non-empty list of distinct object ids present in one scene.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<ObjectId>", into = "Vec<ObjectId>")]
pub struct SubsetIndex(Vec<ObjectId>);

impl SubsetIndex {
    pub fn new(ids: Vec<ObjectId>) -> Result<Self, ParamError> {
        if ids.is_empty() {
            return Err(ParamError::EmptySubset);
        }
        for (i, id) in ids.iter().enumerate() {
            if ids[..i].contains(id) {
                return Err(ParamError::DuplicateObject(*id));
            }
        }
        Ok(Self(ids))
    }

    pub fn ids(&self) -> &[ObjectId] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, id: ObjectId) -> bool {
        self.0.contains(&id)
    }
}

impl TryFrom<Vec<ObjectId>> for SubsetIndex {
    type Error = ParamError;

    fn try_from(ids: Vec<ObjectId>) -> Result<Self, Self::Error> {
        Self::new(ids)
    }
}

impl From<SubsetIndex> for Vec<ObjectId> {
    fn from(k: SubsetIndex) -> Self {
        k.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParameterSpace {
    objects: Vec<ObjectSpec>,
    offsets: Vec<usize>,
    total_dims: usize,
    index_of: BTreeMap<ObjectId, usize>,
}

impl ParameterSpace {
    pub fn new(objects: Vec<ObjectSpec>) -> Result<Self, ParamError> {
        let mut index_of = BTreeMap::new();
        let mut offsets = Vec::with_capacity(objects.len());
        let mut total_dims = 0;
        for (i, obj) in objects.iter().enumerate() {
            if index_of.insert(obj.id, i).is_some() {
                return Err(ParamError::DuplicateObject(obj.id));
            }
            if obj.dims.len() != obj.class.dim_count() {
                return Err(ParamError::WrongDimCount {
                    id: obj.id,
                    class: obj.class,
                    expected: obj.class.dim_count(),
                    got: obj.dims.len(),
                });
            }
            offsets.push(total_dims);
            total_dims += obj.dims.len();
        }
        Ok(Self {
            objects,
            offsets,
            total_dims,
            index_of,
        })
    }

    pub fn objects(&self) -> &[ObjectSpec] {
        &self.objects
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn total_dims(&self) -> usize {
        self.total_dims
    }

    pub fn object(&self, id: ObjectId) -> Result<&ObjectSpec, ParamError> {
        self.index_of
            .get(&id)
            .map(|&i| &self.objects[i])
            .ok_or(ParamError::UnknownObject(id))
    }

    /// All dimensions in flat order.
    pub fn dims(&self) -> impl Iterator<Item = &Dimension> {
        self.objects.iter().flat_map(|o| o.dims.iter())
    }

    pub fn dim_names(&self) -> Vec<String> {
        self.objects
            .iter()
            .flat_map(|o| o.dims.iter().map(move |d| format!("{}.{}", o.name, d.name)))
            .collect()
    }

    /// Range of flat indices owned by object `id`.
    pub fn block(&self, id: ObjectId) -> Result<Range<usize>, ParamError> {
        let i = *self.index_of.get(&id).ok_or(ParamError::UnknownObject(id))?;
        let start = self.offsets[i];
        Ok(start..start + self.objects[i].dims.len())
    }

    /// Flat indices selected by `k`, in `k`'s order.
    pub fn subset_indices(&self, k: &SubsetIndex) -> Result<Vec<usize>, ParamError> {
        let mut out = Vec::new();
        for &id in k.ids() {
            out.extend(self.block(id)?);
        }
        Ok(out)
    }

    pub fn subset_dims(&self, k: &SubsetIndex) -> Result<usize, ParamError> {
        k.ids()
            .iter()
            .map(|&id| self.object(id).map(|o| o.dims.len()))
            .sum()
    }

    fn check_len(&self, got: usize) -> Result<(), ParamError> {
        if got != self.total_dims {
            return Err(ParamError::LengthMismatch {
                expected: self.total_dims,
                got,
            });
        }
        Ok(())
    }

    /// Concatenates the blocks of the objects in `k`, in `k`'s order.
    pub fn slice_params(
        &self,
        theta: &ParameterVector,
        k: &SubsetIndex,
    ) -> Result<ParameterVector, ParamError> {
        self.check_len(theta.len())?;
        Ok(ParameterVector(self.slice_values(&theta.0, k)?))
    }

    /// Same as [`slice_params`](Self::slice_params) on a raw slice, e.g. unit-cube
    /// coordinates.
    pub fn slice_values(&self, values: &[f64], k: &SubsetIndex) -> Result<Vec<f64>, ParamError> {
        self.check_len(values.len())?;
        Ok(self
            .subset_indices(k)?
            .into_iter()
            .map(|i| values[i])
            .collect())
    }

    /// Overwrites the blocks of `k` in `base` with `sub`.
    pub fn scatter_params(
        &self,
        sub: &ParameterVector,
        k: &SubsetIndex,
        base: &ParameterVector,
    ) -> Result<ParameterVector, ParamError> {
        self.check_len(base.len())?;
        let idx = self.subset_indices(k)?;
        if idx.len() != sub.len() {
            return Err(ParamError::LengthMismatch {
                expected: idx.len(),
                got: sub.len(),
            });
        }
        let mut out = base.clone();
        for (&i, &v) in idx.iter().zip(sub.0.iter()) {
            out.0[i] = v;
        }
        Ok(out)
    }

    pub fn validate(&self, theta: &ParameterVector) -> Result<(), ParamError> {
        self.check_len(theta.len())?;
        for (index, (d, &value)) in self.dims().zip(theta.0.iter()).enumerate() {
            if !d.contains(value) {
                return Err(ParamError::OutOfBounds {
                    index,
                    name: d.name.clone(),
                    value,
                    lower: d.lower,
                    upper: d.upper,
                });
            }
        }
        Ok(())
    }

    /// Maps `theta` into the unit cube, dimension by dimension.
    pub fn normalize(&self, theta: &ParameterVector) -> Result<Vec<f64>, ParamError> {
        self.validate(theta)?;
        Ok(self
            .dims()
            .zip(theta.0.iter())
            .map(|(d, &v)| d.to_unit(v))
            .collect())
    }

    /// Exact inverse of [`normalize`](Self::normalize).
    pub fn denormalize(&self, u: &[f64]) -> Result<ParameterVector, ParamError> {
        self.check_len(u.len())?;
        let mut out = Vec::with_capacity(u.len());
        for (index, (d, &ui)) in self.dims().zip(u.iter()).enumerate() {
            if !(0.0..=1.0).contains(&ui) {
                return Err(ParamError::OutOfBounds {
                    index,
                    name: d.name.clone(),
                    value: ui,
                    lower: 0.0,
                    upper: 1.0,
                });
            }
            out.push(d.from_unit(ui));
        }
        Ok(ParameterVector(out))
    }

    /// `n` vectors drawn i.i.d. uniformly within the physical bounds.
    pub fn sample_uniform(&self, seed: u64, n: usize) -> Vec<ParameterVector> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                ParameterVector(
                    self.dims()
                        .map(|d| rng.random_range(d.lower..=d.upper))
                        .collect(),
                )
            })
            .collect()
    }

    pub fn midpoint(&self) -> ParameterVector {
        ParameterVector(self.dims().map(Dimension::midpoint).collect())
    }

    pub fn from_json(text: &str) -> Result<Self, ParamError> {
        let doc: SpaceDoc =
            serde_json::from_str(text).map_err(|e| ParamError::Schema(e.to_string()))?;
        doc.try_into()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&SpaceDoc::from(self)).expect("space serializes")
    }
}

// JSON schema: {"objects": [{"id":0,"name":"cube","class":"rigid","bounds":{"mass":[0.01,2.0]}}]}
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SpaceDoc {
    objects: Vec<ObjectDoc>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ObjectDoc {
    id: ObjectId,
    name: String,
    class: MaterialClass,
    bounds: BTreeMap<String, [f64; 2]>,
}

impl TryFrom<SpaceDoc> for ParameterSpace {
    type Error = ParamError;

    fn try_from(doc: SpaceDoc) -> Result<Self, ParamError> {
        let mut objects = Vec::with_capacity(doc.objects.len());
        for o in doc.objects {
            let expected: &[(&str, Scale)] = match o.class {
                MaterialClass::Rigid => &[(MASS, Scale::Linear)],
                MaterialClass::Deformable => {
                    &[(YOUNGS_MODULUS, Scale::Log10), (POISSONS_RATIO, Scale::Linear)]
                }
            };
            if o.bounds.len() != expected.len() {
                return Err(ParamError::Schema(format!(
                    "object {}: {:?} objects take bounds {:?}, got {:?}",
                    o.id,
                    o.class,
                    expected.iter().map(|e| e.0).collect::<Vec<_>>(),
                    o.bounds.keys().collect::<Vec<_>>()
                )));
            }
            let mut dims = Vec::with_capacity(expected.len());
            for &(name, scale) in expected {
                let [lo, hi] = *o.bounds.get(name).ok_or_else(|| {
                    ParamError::Schema(format!("object {}: missing bounds for {name}", o.id))
                })?;
                dims.push(Dimension::new(name, lo, hi, scale)?);
            }
            objects.push(ObjectSpec::new(o.id, &o.name, o.class, dims)?);
        }
        ParameterSpace::new(objects)
    }
}

impl From<&ParameterSpace> for SpaceDoc {
    fn from(space: &ParameterSpace) -> Self {
        SpaceDoc {
            objects: space
                .objects
                .iter()
                .map(|o| ObjectDoc {
                    id: o.id,
                    name: o.name.clone(),
                    class: o.class,
                    bounds: o
                        .dims
                        .iter()
                        .map(|d| (d.name.clone(), [d.lower, d.upper]))
                        .collect(),
                })
                .collect(),
        }
    }
}

impl Serialize for ParameterSpace {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        SpaceDoc::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for ParameterSpace {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let doc = SpaceDoc::deserialize(d)?;
        doc.try_into().map_err(serde::de::Error::custom)
    }
}
