//! Labeled point clouds, building materials and scene configuration.

mod index;
mod io;
mod materials;
mod synthetic;

pub use index::SpatialIndex;
pub use io::{load_scene_points, parse_scene_points, save_scene_points, write_scene_points};
pub use materials::{
    FilmParameters, Layer, LayerStack, LinkSet, MaterialTable, ModelParams, SceneConfig,
    StackRole, StackSet, FILM_MATERIAL,
};
pub use synthetic::{make_synthetic_scene, CanopySpec, ShoeboxSpec, WallSpec};

use crate::error::{Error, Result};
use crate::geom::{P3, UnitV3, V3};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

/// Semantic class of the object a scene point belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectClass {
    ExteriorWall,
    InteriorWall,
    WindowTriple,
    WindowDouble,
    TreeCanopy,
    Other,
}

impl ObjectClass {
    pub const ALL: [ObjectClass; 6] = [
        ObjectClass::ExteriorWall,
        ObjectClass::InteriorWall,
        ObjectClass::WindowTriple,
        ObjectClass::WindowDouble,
        ObjectClass::TreeCanopy,
        ObjectClass::Other,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ObjectClass::ExteriorWall => "exterior_wall",
            ObjectClass::InteriorWall => "interior_wall",
            ObjectClass::WindowTriple => "window_triple",
            ObjectClass::WindowDouble => "window_double",
            ObjectClass::TreeCanopy => "tree_canopy",
            ObjectClass::Other => "other",
        }
    }

    /// Whether specular reflections are searched on objects of this class.
    /// Tree canopies and unclassified clutter only obstruct.
    pub fn is_reflector(self) -> bool {
        matches!(
            self,
            ObjectClass::ExteriorWall
                | ObjectClass::InteriorWall
                | ObjectClass::WindowTriple
                | ObjectClass::WindowDouble
        )
    }

    pub fn is_window(self) -> bool {
        matches!(self, ObjectClass::WindowTriple | ObjectClass::WindowDouble)
    }
}

impl fmt::Display for ObjectClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ObjectClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ObjectClass::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| Error::validation(format!("unknown object class `{s}`")))
    }
}

/// One laser-scan point: position, unit surface normal, object label.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScenePoint {
    pub position: P3,
    pub normal: UnitV3,
    pub object_id: u32,
    pub class: ObjectClass,
}

impl ScenePoint {
    /// Builds a point from a raw normal vector. The normal must already be of
    /// unit length within 1e-6. A normal that is unit to machine precision is
    /// stored bit for bit, so rewriting a cloud reproduces it exactly;
    /// anything coarser is renormalized once, after which it is machine-unit.
    pub fn new(position: P3, normal: V3, object_id: u32, class: ObjectClass) -> Result<Self> {
        let norm = normal.norm();
        if !norm.is_finite() || (norm - 1.0).abs() > 1e-6 {
            return Err(Error::validation(format!(
                "normal ({}, {}, {}) has length {norm}, expected 1 within 1e-6",
                normal.x, normal.y, normal.z
            )));
        }
        if !(position.x.is_finite() && position.y.is_finite() && position.z.is_finite()) {
            return Err(Error::validation("non-finite point position"));
        }
        let normal = if (norm - 1.0).abs() <= 1e-12 {
            UnitV3::new_unchecked(normal)
        } else {
            UnitV3::new_normalize(normal)
        };
        Ok(ScenePoint { position, normal, object_id, class })
    }
}

/// Aggregate of all points sharing an object id.
#[derive(Debug, Clone)]
pub struct ObjectInfo {
    pub id: u32,
    pub class: ObjectClass,
    /// Indices into `PointCloud::points`, ascending.
    pub point_indices: Vec<u32>,
    pub centroid: P3,
    /// Mean of the point normals, unit length. `None` when the normals cancel
    /// out (closed blobs), in which case the object cannot act as a mirror.
    pub mean_normal: Option<UnitV3>,
}

/// Immutable labeled point cloud with a spatial index.
///
/// All geometry queries of the tracer go through this type. The cloud and its
/// index are frozen at construction; model variants that remove classes build
/// a new cloud via [`PointCloud::filter`].
#[derive(Debug, Clone)]
pub struct PointCloud {
    points: Vec<ScenePoint>,
    resolution_hint_m: f64,
    index: SpatialIndex,
    objects: Vec<ObjectInfo>,
}

impl PointCloud {
    pub fn new(points: Vec<ScenePoint>, resolution_hint_m: f64) -> Result<Self> {
        if !(resolution_hint_m.is_finite() && resolution_hint_m > 0.0) {
            return Err(Error::validation(format!(
                "resolution hint must be positive, got {resolution_hint_m}"
            )));
        }
        let objects = collect_objects(&points)?;
        let index = SpatialIndex::build(points.iter().map(|p| p.position));
        Ok(PointCloud { points, resolution_hint_m, index, objects })
    }

    pub fn points(&self) -> &[ScenePoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn resolution_hint_m(&self) -> f64 {
        self.resolution_hint_m
    }

    pub fn index(&self) -> &SpatialIndex {
        &self.index
    }

    /// Objects sorted by ascending id.
    pub fn objects(&self) -> &[ObjectInfo] {
        &self.objects
    }

    pub fn object(&self, id: u32) -> Option<&ObjectInfo> {
        self.objects.binary_search_by_key(&id, |o| o.id).ok().map(|i| &self.objects[i])
    }

    /// New cloud keeping only points accepted by `keep`. Object ids are
    /// preserved.
    pub fn filter(&self, keep: impl Fn(&ScenePoint) -> bool) -> Result<PointCloud> {
        let points: Vec<ScenePoint> = self.points.iter().copied().filter(keep).collect();
        PointCloud::new(points, self.resolution_hint_m)
    }
}

fn collect_objects(points: &[ScenePoint]) -> Result<Vec<ObjectInfo>> {
    let mut by_id: BTreeMap<u32, Vec<u32>> = BTreeMap::new();
    for (i, p) in points.iter().enumerate() {
        by_id.entry(p.object_id).or_default().push(i as u32);
    }
    let mut objects = Vec::with_capacity(by_id.len());
    for (id, point_indices) in by_id {
        let class = points[point_indices[0] as usize].class;
        if let Some(&bad) = point_indices
            .iter()
            .find(|&&i| points[i as usize].class != class)
        {
            return Err(Error::validation(format!(
                "object {id} mixes classes {} and {}",
                class,
                points[bad as usize].class
            )));
        }
        let n = point_indices.len() as f64;
        let mut centroid = V3::zeros();
        let mut normal_sum = V3::zeros();
        for &i in &point_indices {
            centroid += points[i as usize].position.coords;
            normal_sum += points[i as usize].normal.into_inner();
        }
        let centroid = P3::from(centroid / n);
        let mean_normal = if normal_sum.norm() > 1e-9 {
            Some(UnitV3::new_normalize(normal_sum))
        } else {
            None
        };
        objects.push(ObjectInfo { id, class, point_indices, centroid, mean_normal });
    }
    Ok(objects)
}

/// Fully assembled scene: geometry plus the material and layer description
/// that the solvers need.
#[derive(Debug, Clone)]
pub struct Scene {
    pub cloud: PointCloud,
    pub materials: MaterialTable,
    pub stacks: StackSet,
    pub links: LinkSet,
    pub model: ModelParams,
}

/// Loads a scene point file and couples it with a configuration, validating
/// that every layer stack resolves against the material table at every
/// configured carrier frequency.
pub fn load_scene(scene_path: &Path, config: &SceneConfig) -> Result<Scene> {
    let points = load_scene_points(scene_path)?;
    let cloud = PointCloud::new(points, config.resolution_hint_m)?;
    assemble_scene(cloud, config)
}

/// Same as [`load_scene`] for an already built cloud.
pub fn assemble_scene(cloud: PointCloud, config: &SceneConfig) -> Result<Scene> {
    let materials = config.material_table()?;
    let stacks = config.stack_set()?;
    let links = config.link_set()?;
    let model = config.model_params()?;
    for role in StackRole::ALL {
        let stack = stacks.get(role);
        for frequency in &links.carrier_frequencies_hz {
            for layer in &stack.layers {
                materials.permittivity(&layer.material, *frequency)?;
            }
            // The conductive film must resolve too once inserted.
            materials.permittivity(materials::FILM_MATERIAL, *frequency)?;
        }
    }
    Ok(Scene { cloud, materials, stacks, links, model })
}
