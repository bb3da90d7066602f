//! Material permittivities, layered building elements and run configuration.

use crate::error::{Error, Result};
use crate::geom::P3;
use crate::scene::ObjectClass;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

/// Material name used for the thin conductive window coating.
pub const FILM_MATERIAL: &str = "metal";

/// Relative tolerance when matching a requested frequency against the
/// configured bands. Lookups never interpolate.
const FREQ_MATCH_REL: f64 = 1e-9;

pub(crate) fn same_frequency(a: f64, b: f64) -> bool {
    (a - b).abs() <= FREQ_MATCH_REL * a.abs().max(b.abs())
}

/// Complex relative permittivities per material and band.
///
/// The imaginary part is stored non-negative; the slab solver applies the
/// time convention under which such materials are lossy.
#[derive(Debug, Clone, PartialEq)]
pub struct MaterialTable {
    table: BTreeMap<String, Vec<(f64, Complex64)>>,
}

impl MaterialTable {
    pub fn new() -> Self {
        MaterialTable { table: BTreeMap::new() }
    }

    pub fn insert(&mut self, name: &str, frequency_hz: f64, permittivity: Complex64) -> Result<()> {
        if !(frequency_hz.is_finite() && frequency_hz > 0.0) {
            return Err(Error::config(format!(
                "material `{name}`: frequency must be positive, got {frequency_hz}"
            )));
        }
        if !(permittivity.re.is_finite() && permittivity.im.is_finite()) || permittivity.im < 0.0 {
            return Err(Error::config(format!(
                "material `{name}`: permittivity must be finite with non-negative imaginary part"
            )));
        }
        let bands = self.table.entry(name.to_string()).or_default();
        if bands.iter().any(|(f, _)| same_frequency(*f, frequency_hz)) {
            return Err(Error::config(format!(
                "material `{name}`: duplicate band at {frequency_hz} Hz"
            )));
        }
        bands.push((frequency_hz, permittivity));
        bands.sort_by(|a, b| a.0.total_cmp(&b.0));
        Ok(())
    }

    /// Permittivity of `name` at `frequency_hz`. Unknown materials and
    /// unconfigured frequencies are configuration errors.
    pub fn permittivity(&self, name: &str, frequency_hz: f64) -> Result<Complex64> {
        let bands = self
            .table
            .get(name)
            .ok_or_else(|| Error::config(format!("unknown material `{name}`")))?;
        bands
            .iter()
            .find(|(f, _)| same_frequency(*f, frequency_hz))
            .map(|(_, eps)| *eps)
            .ok_or_else(|| {
                Error::config(format!(
                    "material `{name}` has no permittivity at {frequency_hz} Hz"
                ))
            })
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.table.keys().map(|s| s.as_str())
    }
}

impl Default for MaterialTable {
    fn default() -> Self {
        MaterialTable::new()
    }
}

/// Which layered element a stack describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StackRole {
    WindowTriple,
    WindowDouble,
    InteriorWall,
    ExteriorSolid,
}

impl StackRole {
    pub const ALL: [StackRole; 4] = [
        StackRole::WindowTriple,
        StackRole::WindowDouble,
        StackRole::InteriorWall,
        StackRole::ExteriorSolid,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            StackRole::WindowTriple => "window_triple",
            StackRole::WindowDouble => "window_double",
            StackRole::InteriorWall => "interior_wall",
            StackRole::ExteriorSolid => "exterior_solid",
        }
    }

    /// Stack used when a path meets an object of the given class.
    pub fn for_class(class: ObjectClass) -> Option<StackRole> {
        match class {
            ObjectClass::WindowTriple => Some(StackRole::WindowTriple),
            ObjectClass::WindowDouble => Some(StackRole::WindowDouble),
            ObjectClass::InteriorWall => Some(StackRole::InteriorWall),
            ObjectClass::ExteriorWall | ObjectClass::Other => Some(StackRole::ExteriorSolid),
            ObjectClass::TreeCanopy => None,
        }
    }
}

impl fmt::Display for StackRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StackRole {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        StackRole::ALL
            .into_iter()
            .find(|r| r.as_str() == s)
            .ok_or_else(|| Error::config(format!("unknown stack role `{s}`")))
    }
}

/// One homogeneous layer of a building element.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub material: String,
    pub thickness_m: f64,
}

impl Layer {
    pub fn new(material: impl Into<String>, thickness_m: f64) -> Self {
        Layer { material: material.into(), thickness_m }
    }
}

/// Ordered layers of a building element, outdoor side first, with an optional
/// slot at which the conductive film is inserted.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerStack {
    pub role: StackRole,
    pub layers: Vec<Layer>,
    /// Position in `layers` at which a film layer is inserted, when the
    /// element carries one. For the default windows this is directly behind
    /// the outermost pane.
    pub film_slot: Option<usize>,
}

impl LayerStack {
    /// The layer list with a conductive film of the given thickness inserted.
    /// A zero thickness leaves the stack unchanged.
    pub fn with_film(&self, film_thickness_m: f64) -> Result<Vec<Layer>> {
        if film_thickness_m < 0.0 || !film_thickness_m.is_finite() {
            return Err(Error::domain(format!(
                "film thickness must be non-negative, got {film_thickness_m}"
            )));
        }
        let mut layers = self.layers.clone();
        if film_thickness_m > 0.0 {
            let slot = self.film_slot.ok_or_else(|| {
                Error::config(format!("stack `{}` has no film slot", self.role))
            })?;
            layers.insert(slot, Layer::new(FILM_MATERIAL, film_thickness_m));
        }
        Ok(layers)
    }
}

/// The four layered elements of a scene.
#[derive(Debug, Clone, PartialEq)]
pub struct StackSet {
    stacks: BTreeMap<StackRole, LayerStack>,
}

impl StackSet {
    pub fn new(stacks: impl IntoIterator<Item = LayerStack>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for stack in stacks {
            if map.insert(stack.role, stack).is_some() {
                return Err(Error::config("duplicate stack role"));
            }
        }
        for role in StackRole::ALL {
            if !map.contains_key(&role) {
                return Err(Error::config(format!("missing stack for role `{role}`")));
            }
        }
        Ok(StackSet { stacks: map })
    }

    pub fn get(&self, role: StackRole) -> &LayerStack {
        &self.stacks[&role]
    }

    pub fn for_class(&self, class: ObjectClass) -> Option<&LayerStack> {
        StackRole::for_class(class).map(|role| self.get(role))
    }
}

/// Conductive film thicknesses per window type, in metres. These are the two
/// scene parameters estimated by calibration; all other layer thicknesses are
/// fixed by the stack description.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilmParameters {
    pub window_triple_m: f64,
    pub window_double_m: f64,
}

impl FilmParameters {
    pub fn new(window_triple_m: f64, window_double_m: f64) -> Result<Self> {
        if window_triple_m < 0.0 || window_double_m < 0.0 {
            return Err(Error::domain("film thickness must be non-negative"));
        }
        Ok(FilmParameters { window_triple_m, window_double_m })
    }

    pub fn zero() -> Self {
        FilmParameters { window_triple_m: 0.0, window_double_m: 0.0 }
    }

    /// Film thickness applied to a stack role; non-window roles carry none.
    pub fn for_role(&self, role: StackRole) -> f64 {
        match role {
            StackRole::WindowTriple => self.window_triple_m,
            StackRole::WindowDouble => self.window_double_m,
            StackRole::InteriorWall | StackRole::ExteriorSolid => 0.0,
        }
    }
}

/// Transmitter/receiver positions and the carrier bands they are measured at.
/// Every transmitter is paired with every receiver.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkSet {
    pub tx_positions: Vec<P3>,
    pub rx_positions: Vec<P3>,
    pub carrier_frequencies_hz: Vec<f64>,
    pub bandwidth_hz: f64,
}

impl LinkSet {
    pub fn validate(&self) -> Result<()> {
        for f in &self.carrier_frequencies_hz {
            if !(f.is_finite() && *f > 0.0) {
                return Err(Error::config(format!("carrier frequency must be positive, got {f}")));
            }
        }
        for (i, f) in self.carrier_frequencies_hz.iter().enumerate() {
            if self.carrier_frequencies_hz[..i].iter().any(|g| same_frequency(*g, *f)) {
                return Err(Error::config(format!("duplicate carrier frequency {f} Hz")));
            }
        }
        if !(self.bandwidth_hz.is_finite() && self.bandwidth_hz > 0.0) {
            return Err(Error::config("bandwidth must be positive"));
        }
        for (ti, tx) in self.tx_positions.iter().enumerate() {
            for (ri, rx) in self.rx_positions.iter().enumerate() {
                if tx == rx {
                    return Err(Error::config(format!(
                        "tx {ti} and rx {ri} share position ({}, {}, {})",
                        tx.x, tx.y, tx.z
                    )));
                }
            }
        }
        Ok(())
    }

    /// All (tx index, rx index) pairs in row-major order.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let n_rx = self.rx_positions.len();
        (0..self.tx_positions.len()).flat_map(move |t| (0..n_rx).map(move |r| (t, r)))
    }

    pub fn link_id(tx_index: usize, rx_index: usize) -> String {
        format!("t{tx_index}r{rx_index}")
    }

    /// Inverse of [`LinkSet::link_id`].
    pub fn parse_link_id(id: &str) -> Result<(usize, usize)> {
        let malformed =
            || Error::validation(format!("malformed link id `{id}`, expected t<i>r<j>"));
        let rest = id.strip_prefix('t').ok_or_else(malformed)?;
        let (t, r) = rest.split_once('r').ok_or_else(malformed)?;
        Ok((
            t.parse().map_err(|_| malformed())?,
            r.parse().map_err(|_| malformed())?,
        ))
    }

    /// Endpoint positions of a link id, validated against this set.
    pub fn link_endpoints(&self, id: &str) -> Result<(P3, P3)> {
        let (t, r) = Self::parse_link_id(id)?;
        let tx = self.tx_positions.get(t).ok_or_else(|| {
            Error::validation(format!("link `{id}`: no transmitter {t} in the scene"))
        })?;
        let rx = self.rx_positions.get(r).ok_or_else(|| {
            Error::validation(format!("link `{id}`: no receiver {r} in the scene"))
        })?;
        Ok((*tx, *rx))
    }
}

/// Model-level parameters of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub max_bounces: u32,
    pub dynamic_range_db: f64,
    pub delay_limit_ns: f64,
    pub film: FilmParameters,
    /// Canopy penetration loss in dB per metre, per carrier band.
    pub canopy_loss_db_per_m: Vec<(f64, f64)>,
}

impl ModelParams {
    pub fn validate(&self) -> Result<()> {
        if self.max_bounces > 4 {
            return Err(Error::domain(format!(
                "at most 4 reflections are supported, got {}",
                self.max_bounces
            )));
        }
        if !(self.dynamic_range_db > 0.0) {
            return Err(Error::config("dynamic range must be positive"));
        }
        if !(self.delay_limit_ns > 0.0) {
            return Err(Error::config("delay limit must be positive"));
        }
        for (f, loss) in &self.canopy_loss_db_per_m {
            if !(f.is_finite() && *f > 0.0) || !(loss.is_finite() && *loss >= 0.0) {
                return Err(Error::config("canopy loss entries must be non-negative per band"));
            }
        }
        Ok(())
    }

    pub fn canopy_loss_db_per_m(&self, frequency_hz: f64) -> Result<f64> {
        self.canopy_loss_db_per_m
            .iter()
            .find(|(f, _)| same_frequency(*f, frequency_hz))
            .map(|(_, l)| *l)
            .ok_or_else(|| {
                Error::config(format!("no canopy loss configured for {frequency_hz} Hz"))
            })
    }

    pub fn with_canopy_loss(&self, frequency_hz: f64, loss_db_per_m: f64) -> ModelParams {
        let mut out = self.clone();
        for entry in &mut out.canopy_loss_db_per_m {
            if same_frequency(entry.0, frequency_hz) {
                entry.1 = loss_db_per_m;
                return out;
            }
        }
        out.canopy_loss_db_per_m.push((frequency_hz, loss_db_per_m));
        out
    }
}

// ---------------------------------------------------------------------------
// Configuration file
// ---------------------------------------------------------------------------

/// Scene configuration as read from TOML.
///
/// Every section has defaults describing the reference office scenario:
/// concrete, plasterboard, glass and the conductive coating at 4.65 and
/// 14.25 GHz, triple/double glazing with 4 mm panes and 12 mm gaps, a double
/// plasterboard wall, and a 300 mm concrete slab. A config file only has to
/// state what differs; a section that is present replaces its default
/// entirely.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneConfig {
    #[serde(default = "default_resolution_hint")]
    pub resolution_hint_m: f64,
    #[serde(default = "default_materials")]
    pub materials: Vec<MaterialConfig>,
    #[serde(default = "default_stacks")]
    pub stacks: Vec<StackConfig>,
    #[serde(default)]
    pub links: LinksConfig,
    #[serde(default)]
    pub model: ModelConfig,
}

impl Default for SceneConfig {
    fn default() -> Self {
        SceneConfig {
            resolution_hint_m: default_resolution_hint(),
            materials: default_materials(),
            stacks: default_stacks(),
            links: LinksConfig::default(),
            model: ModelConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialConfig {
    pub name: String,
    pub bands: Vec<MaterialBandConfig>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialBandConfig {
    pub frequency_hz: f64,
    pub permittivity_real: f64,
    pub permittivity_imag: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StackConfig {
    pub role: StackRole,
    pub layers: Vec<Layer>,
    #[serde(default)]
    pub film_slot: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinksConfig {
    #[serde(default = "default_frequencies")]
    pub carrier_frequencies_hz: Vec<f64>,
    #[serde(default = "default_bandwidth")]
    pub bandwidth_hz: f64,
    #[serde(default)]
    pub tx_positions_m: Vec<[f64; 3]>,
    #[serde(default)]
    pub rx_positions_m: Vec<[f64; 3]>,
}

impl Default for LinksConfig {
    fn default() -> Self {
        LinksConfig {
            carrier_frequencies_hz: default_frequencies(),
            bandwidth_hz: default_bandwidth(),
            tx_positions_m: Vec::new(),
            rx_positions_m: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    #[serde(default = "default_max_bounces")]
    pub max_bounces: u32,
    #[serde(default = "default_dynamic_range")]
    pub dynamic_range_db: f64,
    #[serde(default = "default_delay_limit")]
    pub delay_limit_ns: f64,
    #[serde(default = "default_triple_film")]
    pub triple_glass_film_m: f64,
    #[serde(default = "default_double_film")]
    pub double_glass_film_m: f64,
    #[serde(default = "default_canopy")]
    pub canopy: Vec<CanopyConfig>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            max_bounces: default_max_bounces(),
            dynamic_range_db: default_dynamic_range(),
            delay_limit_ns: default_delay_limit(),
            triple_glass_film_m: default_triple_film(),
            double_glass_film_m: default_double_film(),
            canopy: default_canopy(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CanopyConfig {
    pub frequency_hz: f64,
    pub loss_db_per_m: f64,
}

fn default_resolution_hint() -> f64 {
    0.1
}

fn default_frequencies() -> Vec<f64> {
    vec![4.65e9, 14.25e9]
}

fn default_bandwidth() -> f64 {
    500e6
}

fn default_max_bounces() -> u32 {
    4
}

fn default_dynamic_range() -> f64 {
    20.0
}

fn default_delay_limit() -> f64 {
    350.0
}

fn default_triple_film() -> f64 {
    5e-9
}

fn default_double_film() -> f64 {
    40e-9
}

fn default_canopy() -> Vec<CanopyConfig> {
    vec![
        CanopyConfig { frequency_hz: 4.65e9, loss_db_per_m: 1.1 },
        CanopyConfig { frequency_hz: 14.25e9, loss_db_per_m: 2.1 },
    ]
}

fn default_materials() -> Vec<MaterialConfig> {
    let band = |f, re, im| MaterialBandConfig {
        frequency_hz: f,
        permittivity_real: re,
        permittivity_imag: im,
    };
    vec![
        MaterialConfig {
            name: "concrete".into(),
            bands: vec![band(4.65e9, 5.31, 0.45), band(14.25e9, 5.31, 0.35)],
        },
        MaterialConfig {
            name: "plasterboard".into(),
            bands: vec![band(4.65e9, 2.94, 0.14), band(14.25e9, 2.94, 0.09)],
        },
        MaterialConfig {
            name: "glass".into(),
            bands: vec![band(4.65e9, 6.27, 0.10), band(14.25e9, 6.27, 0.13)],
        },
        MaterialConfig {
            name: FILM_MATERIAL.into(),
            bands: vec![band(4.65e9, 1.0, 4.50e8), band(14.25e9, 1.0, 1.28e8)],
        },
        MaterialConfig { name: "air".into(), bands: vec![band(4.65e9, 1.0, 0.0), band(14.25e9, 1.0, 0.0)] },
    ]
}

fn default_stacks() -> Vec<StackConfig> {
    vec![
        // The triple window is a separate outer pane in front of a sealed
        // double unit, coated on the inside of the outer pane. The wide
        // ventilation cavity behind the coating is what makes the high-band
        // transmission ring as the incidence angle sweeps.
        StackConfig {
            role: StackRole::WindowTriple,
            layers: vec![
                Layer::new("glass", 0.004),
                Layer::new("air", 0.046),
                Layer::new("glass", 0.004),
                Layer::new("air", 0.012),
                Layer::new("glass", 0.004),
            ],
            film_slot: Some(1),
        },
        StackConfig {
            role: StackRole::WindowDouble,
            layers: vec![
                Layer::new("glass", 0.004),
                Layer::new("air", 0.012),
                Layer::new("glass", 0.004),
            ],
            film_slot: Some(1),
        },
        StackConfig {
            role: StackRole::InteriorWall,
            layers: vec![
                Layer::new("plasterboard", 0.013),
                Layer::new("air", 0.070),
                Layer::new("plasterboard", 0.013),
            ],
            film_slot: None,
        },
        StackConfig {
            role: StackRole::ExteriorSolid,
            layers: vec![Layer::new("concrete", 0.300)],
            film_slot: None,
        },
    ]
}

impl SceneConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::config(format!("invalid config: {e}")))
    }

    pub fn from_toml_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn material_table(&self) -> Result<MaterialTable> {
        let mut table = MaterialTable::new();
        for mat in &self.materials {
            for band in &mat.bands {
                table.insert(
                    &mat.name,
                    band.frequency_hz,
                    Complex64::new(band.permittivity_real, band.permittivity_imag),
                )?;
            }
        }
        Ok(table)
    }

    pub fn stack_set(&self) -> Result<StackSet> {
        let stacks = self
            .stacks
            .iter()
            .map(|s| {
                if let Some(slot) = s.film_slot {
                    if slot > s.layers.len() {
                        return Err(Error::config(format!(
                            "stack `{}`: film slot {slot} outside {} layers",
                            s.role,
                            s.layers.len()
                        )));
                    }
                }
                for layer in &s.layers {
                    if !(layer.thickness_m.is_finite() && layer.thickness_m >= 0.0) {
                        return Err(Error::config(format!(
                            "stack `{}`: layer thickness must be non-negative",
                            s.role
                        )));
                    }
                }
                Ok(LayerStack { role: s.role, layers: s.layers.clone(), film_slot: s.film_slot })
            })
            .collect::<Result<Vec<_>>>()?;
        StackSet::new(stacks)
    }

    pub fn link_set(&self) -> Result<LinkSet> {
        let to_p3 = |a: &[f64; 3]| P3::new(a[0], a[1], a[2]);
        let links = LinkSet {
            tx_positions: self.links.tx_positions_m.iter().map(to_p3).collect(),
            rx_positions: self.links.rx_positions_m.iter().map(to_p3).collect(),
            carrier_frequencies_hz: self.links.carrier_frequencies_hz.clone(),
            bandwidth_hz: self.links.bandwidth_hz,
        };
        links.validate()?;
        Ok(links)
    }

    pub fn model_params(&self) -> Result<ModelParams> {
        let params = ModelParams {
            max_bounces: self.model.max_bounces,
            dynamic_range_db: self.model.dynamic_range_db,
            delay_limit_ns: self.model.delay_limit_ns,
            film: FilmParameters::new(
                self.model.triple_glass_film_m,
                self.model.double_glass_film_m,
            )?,
            canopy_loss_db_per_m: self
                .model
                .canopy
                .iter()
                .map(|c| (c.frequency_hz, c.loss_db_per_m))
                .collect(),
        };
        params.validate()?;
        Ok(params)
    }
}
