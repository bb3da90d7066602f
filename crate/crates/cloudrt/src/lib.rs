//! Ray-optics simulation of outdoor-to-indoor radio propagation on labeled
//! point clouds.
//!
//! A scene is a point cloud in which every point carries a surface normal and
//! an object label (wall, window, tree canopy, ...). Propagation paths between
//! an outdoor transmitter and indoor receivers are found with the image method
//! on the flat objects of the cloud; obstruction of each path segment is
//! detected with first-Fresnel-zone tests against the points themselves.
//! Penetration and reflection losses of layered building elements (multi-pane
//! windows with thin conductive coatings, plasterboard walls, concrete slabs)
//! come from a transfer-matrix solver over complex permittivities. On top of
//! the traced paths sit power-angular-delay profiles, large-scale channel
//! parameters, and a grid-search calibration of coating thickness and canopy
//! loss against per-link excess-loss observations.

pub mod calibration;
pub mod channel;
pub mod error;
pub mod export;
pub mod geom;
pub mod runner;
pub mod scene;
pub mod slab;
pub mod tracer;

pub use error::Error;

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Free-space wavelength in metres for a carrier frequency in Hz.
pub fn wavelength_m(frequency_hz: f64) -> f64 {
    SPEED_OF_LIGHT / frequency_hz
}
