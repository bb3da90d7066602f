//! Plane-wave reflection and transmission of layered building elements.
//!
//! Transfer-matrix solution for a stack of homogeneous layers with complex
//! relative permittivities and air on both sides. Conventions: time factor
//! exp(-i w t), so a lossy material has permittivity eps' + i*eps'' with
//! eps'' > 0 and waves decay while crossing it; the transverse wavenumber
//! component in each layer takes the root with non-negative imaginary part.
//! TE amplitudes are ratios of the electric field, TM amplitudes of the
//! magnetic field; with identical entry and exit media the squared magnitudes
//! are power reflectance and transmittance for both polarizations.

use crate::error::{Error, Result};
use crate::scene::{Layer, LayerStack, MaterialTable, FILM_MATERIAL};
use crate::SPEED_OF_LIGHT;
use num_complex::Complex64;
use std::f64::consts::{FRAC_PI_2, PI};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Polarization {
    Te,
    Tm,
}

/// A layer with its permittivity already looked up for one band.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResolvedLayer {
    pub permittivity: Complex64,
    pub thickness_m: f64,
}

impl ResolvedLayer {
    pub fn new(permittivity: Complex64, thickness_m: f64) -> Result<Self> {
        if !(thickness_m.is_finite() && thickness_m >= 0.0) {
            return Err(Error::domain(format!(
                "layer thickness must be non-negative, got {thickness_m}"
            )));
        }
        if permittivity.im < 0.0 || !permittivity.re.is_finite() || !permittivity.im.is_finite() {
            return Err(Error::domain(
                "layer permittivity must be finite with non-negative imaginary part",
            ));
        }
        Ok(ResolvedLayer { permittivity, thickness_m })
    }
}

/// Complex reflection and transmission amplitudes of a stack at one
/// incidence angle and band.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlabCoefficients {
    pub frequency_hz: f64,
    pub incidence_rad: f64,
    /// Electric-field reflection amplitude, TE.
    pub reflection_te: Complex64,
    /// Magnetic-field reflection amplitude, TM.
    pub reflection_tm: Complex64,
    pub transmission_te: Complex64,
    pub transmission_tm: Complex64,
}

impl SlabCoefficients {
    pub fn reflectance(&self, pol: Polarization) -> f64 {
        match pol {
            Polarization::Te => self.reflection_te.norm_sqr(),
            Polarization::Tm => self.reflection_tm.norm_sqr(),
        }
    }

    pub fn transmittance(&self, pol: Polarization) -> f64 {
        match pol {
            Polarization::Te => self.transmission_te.norm_sqr(),
            Polarization::Tm => self.transmission_tm.norm_sqr(),
        }
    }

    /// Penetration loss in dB, non-negative for passive stacks.
    ///
    /// Links here run close to horizontal into vertical walls and windows, so
    /// a vertically polarized field is perpendicular to the plane of
    /// incidence; the scalar loss therefore follows the TE component. The TM
    /// coefficients stay available for sensitivity studies.
    pub fn penetration_loss_db(&self) -> f64 {
        let db = -10.0 * self.transmittance(Polarization::Te).log10();
        if db == 0.0 { 0.0 } else { db }
    }

    /// Loss in dB suffered on specular reflection off the stack, TE as above.
    pub fn reflection_loss_db(&self) -> f64 {
        let db = -10.0 * self.reflectance(Polarization::Te).log10();
        if db == 0.0 { 0.0 } else { db }
    }
}

/// Looks the layer materials up at one band.
pub fn resolve_layers(
    layers: &[Layer],
    materials: &MaterialTable,
    frequency_hz: f64,
) -> Result<Vec<ResolvedLayer>> {
    layers
        .iter()
        .map(|l| ResolvedLayer::new(materials.permittivity(&l.material, frequency_hz)?, l.thickness_m))
        .collect()
}

/// A thin conductive coating as a plain dielectric layer; its permittivity is
/// the `metal` entry of the material table.
pub fn conductive_film_layer(thickness_m: f64) -> Result<Layer> {
    if !(thickness_m.is_finite() && thickness_m >= 0.0) {
        return Err(Error::domain(format!(
            "film thickness must be non-negative, got {thickness_m}"
        )));
    }
    Ok(Layer::new(FILM_MATERIAL, thickness_m))
}

/// Reflection and transmission amplitudes of a layer stack in air.
///
/// `incidence_rad` is measured from the surface normal and must lie in
/// [0, pi/2).
pub fn slab_coefficients(
    layers: &[ResolvedLayer],
    incidence_rad: f64,
    frequency_hz: f64,
) -> Result<SlabCoefficients> {
    if !(frequency_hz.is_finite() && frequency_hz > 0.0) {
        return Err(Error::domain(format!("frequency must be positive, got {frequency_hz}")));
    }
    if !(incidence_rad >= 0.0 && incidence_rad < FRAC_PI_2) {
        return Err(Error::domain(format!(
            "incidence angle must lie in [0, pi/2), got {incidence_rad} rad"
        )));
    }
    let k0 = 2.0 * PI * frequency_hz / SPEED_OF_LIGHT;
    let kx_sq = Complex64::new((k0 * incidence_rad.sin()).powi(2), 0.0);
    let (r_te, t_te) = amplitudes(layers, k0, kx_sq, Polarization::Te);
    let (r_tm, t_tm) = amplitudes(layers, k0, kx_sq, Polarization::Tm);
    Ok(SlabCoefficients {
        frequency_hz,
        incidence_rad,
        reflection_te: r_te,
        reflection_tm: r_tm,
        transmission_te: t_te,
        transmission_tm: t_tm,
    })
}

/// Coefficients of a configured building element with its film inserted.
pub fn element_coefficients(
    stack: &LayerStack,
    film_thickness_m: f64,
    materials: &MaterialTable,
    incidence_rad: f64,
    frequency_hz: f64,
) -> Result<SlabCoefficients> {
    let layers = stack.with_film(film_thickness_m)?;
    let resolved = resolve_layers(&layers, materials, frequency_hz)?;
    slab_coefficients(&resolved, incidence_rad, frequency_hz)
}

pub fn penetration_loss_db(
    layers: &[ResolvedLayer],
    incidence_rad: f64,
    frequency_hz: f64,
) -> Result<f64> {
    Ok(slab_coefficients(layers, incidence_rad, frequency_hz)?.penetration_loss_db())
}

pub fn reflection_loss_db(
    layers: &[ResolvedLayer],
    incidence_rad: f64,
    frequency_hz: f64,
) -> Result<f64> {
    Ok(slab_coefficients(layers, incidence_rad, frequency_hz)?.reflection_loss_db())
}

/// Wave admittance of a medium for the interface recursion.
fn admittance(eps: Complex64, k0: f64, kx_sq: Complex64, pol: Polarization) -> Complex64 {
    let kz = (eps * k0 * k0 - kx_sq).sqrt();
    // Principal sqrt of a value with non-negative imaginary part keeps
    // Im(kz) >= 0: decay for lossy and evanescent layers.
    match pol {
        Polarization::Te => kz,
        Polarization::Tm => kz / eps,
    }
}

fn kz_of(eps: Complex64, k0: f64, kx_sq: Complex64) -> Complex64 {
    (eps * k0 * k0 - kx_sq).sqrt()
}

#[derive(Clone, Copy)]
struct Mat2 {
    m11: Complex64,
    m12: Complex64,
    m21: Complex64,
    m22: Complex64,
}

impl Mat2 {
    fn identity() -> Self {
        Mat2 {
            m11: Complex64::new(1.0, 0.0),
            m12: Complex64::new(0.0, 0.0),
            m21: Complex64::new(0.0, 0.0),
            m22: Complex64::new(1.0, 0.0),
        }
    }

    fn mul(self, o: Mat2) -> Mat2 {
        Mat2 {
            m11: self.m11 * o.m11 + self.m12 * o.m21,
            m12: self.m11 * o.m12 + self.m12 * o.m22,
            m21: self.m21 * o.m11 + self.m22 * o.m21,
            m22: self.m21 * o.m12 + self.m22 * o.m22,
        }
    }
}

fn interface(eta_a: Complex64, eta_b: Complex64) -> Mat2 {
    let r = (eta_a - eta_b) / (eta_a + eta_b);
    let inv_t = (eta_a + eta_b) / (2.0 * eta_a);
    Mat2 { m11: inv_t, m12: inv_t * r, m21: inv_t * r, m22: inv_t }
}

fn propagation(kz: Complex64, thickness_m: f64) -> Mat2 {
    let delta = kz * thickness_m;
    let neg = (-Complex64::i() * delta).exp();
    let pos = (Complex64::i() * delta).exp();
    Mat2 { m11: neg, m12: Complex64::new(0.0, 0.0), m21: Complex64::new(0.0, 0.0), m22: pos }
}

fn amplitudes(
    layers: &[ResolvedLayer],
    k0: f64,
    kx_sq: Complex64,
    pol: Polarization,
) -> (Complex64, Complex64) {
    let air = Complex64::new(1.0, 0.0);
    let eta_air = admittance(air, k0, kx_sq, pol);
    let mut m = Mat2::identity();
    let mut eta_prev = eta_air;
    for layer in layers {
        let eta = admittance(layer.permittivity, k0, kx_sq, pol);
        m = m.mul(interface(eta_prev, eta));
        m = m.mul(propagation(kz_of(layer.permittivity, k0, kx_sq), layer.thickness_m));
        eta_prev = eta;
    }
    m = m.mul(interface(eta_prev, eta_air));
    (m.m21 / m.m11, Complex64::new(1.0, 0.0) / m.m11)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn glass(frequency_hz: f64) -> Complex64 {
        if frequency_hz < 10e9 {
            Complex64::new(6.27, 0.10)
        } else {
            Complex64::new(6.27, 0.13)
        }
    }

    fn single(eps: Complex64, d: f64) -> Vec<ResolvedLayer> {
        vec![ResolvedLayer::new(eps, d).unwrap()]
    }

    #[test]
    fn empty_stack_is_transparent() {
        let c = slab_coefficients(&[], 0.3, 4.65e9).unwrap();
        assert_eq!(c.transmission_te, Complex64::new(1.0, 0.0));
        assert_eq!(c.transmission_tm, Complex64::new(1.0, 0.0));
        assert_eq!(c.reflection_te, Complex64::new(0.0, 0.0));
        assert_eq!(c.penetration_loss_db(), 0.0);
    }

    #[test]
    fn thick_lossy_slab_approaches_single_interface_fresnel() {
        // With the back face out of reach the reflection is the plain
        // air-to-glass Fresnel coefficient (1 - sqrt(eps)) / (1 + sqrt(eps)).
        let eps = glass(4.65e9);
        let c = slab_coefficients(&single(eps, 10.0), 0.0, 4.65e9).unwrap();
        let expect = (Complex64::new(1.0, 0.0) - eps.sqrt()) / (Complex64::new(1.0, 0.0) + eps.sqrt());
        assert!((c.reflection_te - expect).norm() < 1e-6);
        assert!((c.reflection_te.re + 0.429).abs() < 1e-2);
    }

    #[test]
    fn brewster_angle_kills_tm_reflection() {
        let eps = Complex64::new(4.0, 0.0);
        let brewster = (2.0_f64).atan();
        let c = slab_coefficients(&single(eps, 50.0), brewster, 4.65e9).unwrap();
        assert!(c.reflectance(Polarization::Tm) < 1e-20);
        assert!(c.reflectance(Polarization::Te) > 0.1);
    }

    #[test]
    fn lossless_slab_conserves_energy() {
        let layers = vec![
            ResolvedLayer::new(Complex64::new(4.0, 0.0), 0.01).unwrap(),
            ResolvedLayer::new(Complex64::new(2.25, 0.0), 0.05).unwrap(),
        ];
        for angle in [0.0, 0.4, 1.2] {
            let c = slab_coefficients(&layers, angle, 14.25e9).unwrap();
            for pol in [Polarization::Te, Polarization::Tm] {
                let total = c.reflectance(pol) + c.transmittance(pol);
                assert_abs_diff_eq!(total, 1.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn lossy_slab_attenuates() {
        let c = slab_coefficients(&single(Complex64::new(5.31, 0.45), 0.3), 0.0, 4.65e9).unwrap();
        assert!(c.transmittance(Polarization::Te) < 1.0);
        assert!(c.penetration_loss_db() > 20.0, "300 mm concrete should be opaque");
    }

    #[test]
    fn zero_thickness_layer_is_a_no_op() {
        let with = vec![
            ResolvedLayer::new(glass(4.65e9), 0.004).unwrap(),
            ResolvedLayer::new(Complex64::new(1.0, 4.5e8), 0.0).unwrap(),
            ResolvedLayer::new(Complex64::new(1.0, 0.0), 0.012).unwrap(),
        ];
        let without = vec![
            ResolvedLayer::new(glass(4.65e9), 0.004).unwrap(),
            ResolvedLayer::new(Complex64::new(1.0, 0.0), 0.012).unwrap(),
        ];
        let a = slab_coefficients(&with, 0.5, 4.65e9).unwrap();
        let b = slab_coefficients(&without, 0.5, 4.65e9).unwrap();
        assert!((a.transmission_te - b.transmission_te).norm() < 1e-12);
        assert!((a.reflection_tm - b.reflection_tm).norm() < 1e-12);
    }

    #[test]
    fn splitting_a_layer_changes_nothing() {
        let eps = Complex64::new(2.94, 0.14);
        let whole = single(eps, 0.013);
        let split = vec![
            ResolvedLayer::new(eps, 0.005).unwrap(),
            ResolvedLayer::new(eps, 0.008).unwrap(),
        ];
        let a = slab_coefficients(&whole, 0.7, 4.65e9).unwrap();
        let b = slab_coefficients(&split, 0.7, 4.65e9).unwrap();
        assert!((a.transmission_te - b.transmission_te).norm() < 1e-9);
        assert!((a.reflection_te - b.reflection_te).norm() < 1e-9);
        assert!((a.transmission_tm - b.transmission_tm).norm() < 1e-9);
    }

    #[test]
    fn reversed_stack_transmits_identically() {
        let layers = vec![
            ResolvedLayer::new(Complex64::new(6.27, 0.13), 0.004).unwrap(),
            ResolvedLayer::new(Complex64::new(1.0, 1.28e8), 40e-9).unwrap(),
            ResolvedLayer::new(Complex64::new(1.0, 0.0), 0.012).unwrap(),
            ResolvedLayer::new(Complex64::new(6.27, 0.13), 0.004).unwrap(),
        ];
        let mut reversed = layers.clone();
        reversed.reverse();
        let a = slab_coefficients(&layers, 0.9, 14.25e9).unwrap();
        let b = slab_coefficients(&reversed, 0.9, 14.25e9).unwrap();
        assert!((a.transmission_te.norm() - b.transmission_te.norm()).abs() < 1e-12);
        assert!((a.transmission_tm.norm() - b.transmission_tm.norm()).abs() < 1e-12);
    }

    #[test]
    fn film_loss_grows_with_thickness_and_matters() {
        use crate::scene::{SceneConfig, StackRole};
        let config = SceneConfig::default();
        let materials = config.material_table().unwrap();
        let stacks = config.stack_set().unwrap();
        let triple = stacks.get(StackRole::WindowTriple);
        for f in [4.65e9, 14.25e9] {
            let bare = element_coefficients(triple, 0.0, &materials, 0.0, f).unwrap();
            let thin = element_coefficients(triple, 5e-9, &materials, 0.0, f).unwrap();
            let thick = element_coefficients(triple, 40e-9, &materials, 0.0, f).unwrap();
            assert!(
                thin.penetration_loss_db() > bare.penetration_loss_db() + 3.0,
                "film adds several dB at {f}"
            );
            assert!(thick.penetration_loss_db() > thin.penetration_loss_db());
        }
    }

    #[test]
    fn interior_wall_loss_is_similar_in_both_bands() {
        use crate::scene::{SceneConfig, StackRole};
        let config = SceneConfig::default();
        let materials = config.material_table().unwrap();
        let stacks = config.stack_set().unwrap();
        let wall = stacks.get(StackRole::InteriorWall);
        let low = element_coefficients(wall, 0.0, &materials, 0.0, 4.65e9).unwrap();
        let high = element_coefficients(wall, 0.0, &materials, 0.0, 14.25e9).unwrap();
        assert!((low.penetration_loss_db() - high.penetration_loss_db()).abs() < 6.0);
    }

    #[test]
    fn domain_errors() {
        assert!(slab_coefficients(&[], FRAC_PI_2, 4.65e9).is_err());
        assert!(slab_coefficients(&[], -0.1, 4.65e9).is_err());
        assert!(slab_coefficients(&[], 0.0, 0.0).is_err());
        assert!(ResolvedLayer::new(Complex64::new(1.0, 0.0), -0.01).is_err());
        assert!(conductive_film_layer(-1e-9).is_err());
    }
}
