//! Barotropic gas laws and the potential energy of a configuration.

use crate::error::{BubbleError, Result};
use crate::shapes::{Configuration, ShapeFamily};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GasLaw {
    /// `p = K rho^gamma`.
    Polytropic { k: f64, gamma: f64 },
}

impl GasLaw {
    pub fn polytropic(k: f64, gamma: f64) -> Result<Self> {
        if !(k > 0.0) || !k.is_finite() {
            return Err(BubbleError::Domain(format!(
                "polytropic constant must be positive, got {k}"
            )));
        }
        if !(gamma >= 1.0) || !gamma.is_finite() {
            return Err(BubbleError::Domain(format!(
                "polytropic exponent must be >= 1, got {gamma}"
            )));
        }
        Ok(GasLaw::Polytropic { k, gamma })
    }

    pub fn gamma(&self) -> f64 {
        match *self {
            GasLaw::Polytropic { gamma, .. } => gamma,
        }
    }

    pub fn pressure(&self, density: f64) -> Result<f64> {
        check_density(density)?;
        Ok(match *self {
            GasLaw::Polytropic { k, gamma } => k * density.powf(gamma),
        })
    }

    /// Helmholtz free energy per unit mass, with `s^2 e'(s) = p(s)` and the
    /// additive constant set to zero.
    pub fn free_energy(&self, density: f64) -> Result<f64> {
        check_density(density)?;
        Ok(match *self {
            GasLaw::Polytropic { k, gamma: 1.0 } => k * density.ln(),
            GasLaw::Polytropic { k, gamma } => k * density.powf(gamma - 1.0) / (gamma - 1.0),
        })
    }

    /// Density at which the gas pressure equals `p`.
    pub fn density_at(&self, p: f64) -> Result<f64> {
        if !(p > 0.0) {
            return Err(BubbleError::Domain(format!(
                "pressure must be positive, got {p}"
            )));
        }
        Ok(match *self {
            GasLaw::Polytropic { k, gamma } => (p / k).powf(1.0 / gamma),
        })
    }
}

fn check_density(density: f64) -> Result<()> {
    if density > 0.0 && density.is_finite() {
        Ok(())
    } else {
        Err(BubbleError::Domain(format!(
            "gas density must be positive, got {density}"
        )))
    }
}

pub fn pressure(law: &GasLaw, density: f64) -> Result<f64> {
    law.pressure(density)
}

pub fn free_energy(law: &GasLaw, density: f64) -> Result<f64> {
    law.free_energy(density)
}

/// Gas content of one bubble.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BubbleGasState {
    pub mass: f64,
    pub law: GasLaw,
}

impl BubbleGasState {
    pub fn new(mass: f64, law: GasLaw) -> Result<Self> {
        if !(mass > 0.0) || !mass.is_finite() {
            return Err(BubbleError::Domain(format!(
                "gas mass must be positive, got {mass}"
            )));
        }
        Ok(Self { mass, law })
    }

    pub fn pressure_at_volume(&self, volume: f64) -> Result<f64> {
        self.law.pressure(self.mass / volume)
    }

    /// Radius of a spherical bubble in equilibrium with `p_inf` and surface
    /// tension `sigma`: `p(3M / (4 pi r^3)) = p_inf + 2 sigma / r`.
    pub fn equilibrium_radius(&self, p_inf: f64, sigma: f64) -> Result<f64> {
        let excess = |r: f64| -> Result<f64> {
            let vol = 4.0 / 3.0 * std::f64::consts::PI * r.powi(3);
            Ok(self.pressure_at_volume(vol)? - p_inf - 2.0 * sigma / r)
        };
        // excess is decreasing in r, +inf at 0 and -p_inf at infinity
        if !(p_inf > 0.0) {
            return Err(BubbleError::Domain(
                "equilibrium needs a positive ambient pressure".into(),
            ));
        }
        let (mut lo, mut hi) = (0.5f64, 1.0f64);
        while excess(hi)? > 0.0 {
            lo = hi;
            hi *= 2.0;
        }
        while excess(lo)? < 0.0 {
            hi = lo;
            lo *= 0.5;
        }
        for _ in 0..2000 {
            let mid = 0.5 * (lo + hi);
            if excess(mid)? > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 4.0 * f64::EPSILON * hi {
                break;
            }
        }
        Ok(0.5 * (lo + hi))
    }
}

/// Parameters entering the potential energy.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyModel {
    pub p_infinity: f64,
    pub surface_tension: f64,
    /// One entry per bubble.
    pub gases: Vec<BubbleGasState>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PotentialEnergy {
    pub value: f64,
    /// `dU/dq` in flat coordinates.
    pub gradient: Vec<f64>,
    /// Gas pressure in each bubble.
    pub pressures: Vec<f64>,
}

/// `U = sum_k [M_k e(M_k / vol_k) + p_inf vol_k + sigma area_k]`.
pub fn potential_energy(model: &EnergyModel, config: &Configuration) -> Result<PotentialEnergy> {
    if model.gases.len() != config.bubbles.len() {
        return Err(BubbleError::Domain(format!(
            "{} gas states for {} bubbles",
            model.gases.len(),
            config.bubbles.len()
        )));
    }
    let mut value = 0.0;
    let mut gradient = Vec::with_capacity(config.dim());
    let mut pressures = Vec::with_capacity(config.bubbles.len());
    for (b, gas) in config.bubbles.iter().zip(&model.gases) {
        let m = b.measures();
        let density = gas.mass / m.volume;
        let p = gas.law.pressure(density)?;
        value += gas.mass * gas.law.free_energy(density)?
            + model.p_infinity * m.volume
            + model.surface_tension * m.area;
        let dv = model.p_infinity - p;
        gradient.extend(
            m.d_volume_dm
                .iter()
                .zip(&m.d_area_dm)
                .map(|(v, a)| dv * v + model.surface_tension * a),
        );
        pressures.push(p);
    }
    Ok(PotentialEnergy {
        value,
        gradient,
        pressures,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shapes::{Mat3, ShapeParams, Vec3};
    use std::f64::consts::PI;

    #[test]
    fn pressure_examples() {
        assert_eq!(
            GasLaw::polytropic(1.0, 1.4).unwrap().pressure(1.0).unwrap(),
            1.0
        );
        assert_eq!(
            GasLaw::polytropic(2.0, 1.0).unwrap().pressure(3.0).unwrap(),
            6.0
        );
        let law = GasLaw::polytropic(0.7, 1.3).unwrap();
        let ratio = law.pressure(2.4).unwrap() / law.pressure(1.2).unwrap();
        assert!((ratio - 2f64.powf(1.3)).abs() < 1e-14);
        assert!(law.pressure(0.0).is_err());
        assert!(law.pressure(-1.0).is_err());
    }

    #[test]
    fn free_energy_examples() {
        assert!(
            (GasLaw::polytropic(1.0, 2.0)
                .unwrap()
                .free_energy(3.0)
                .unwrap()
                - 3.0)
                .abs()
                < 1e-15
        );
        assert_eq!(
            GasLaw::polytropic(1.0, 1.0)
                .unwrap()
                .free_energy(1.0)
                .unwrap(),
            0.0
        );
    }

    #[test]
    fn law_validation() {
        assert!(GasLaw::polytropic(1.0, 0.9).is_err());
        assert!(GasLaw::polytropic(0.0, 1.4).is_err());
    }

    fn sphere_model(mass: f64, sigma: f64) -> EnergyModel {
        EnergyModel {
            p_infinity: 1.0,
            surface_tension: sigma,
            gases: vec![BubbleGasState::new(mass, GasLaw::polytropic(1.0, 1.4).unwrap()).unwrap()],
        }
    }

    #[test]
    fn sphere_gradient_formula() {
        let (r, sigma) = (1.3, 0.2);
        let cfg = Configuration::unbounded(vec![
            ShapeParams::sphere(Vec3::new(1.0, 2.0, 3.0), r).unwrap()
        ]);
        let model = sphere_model(2.0, sigma);
        let u = potential_energy(&model, &cfg).unwrap();
        let pb = u.pressures[0];
        let expected = (1.0 - pb) * 4.0 * PI * r * r + sigma * 8.0 * PI * r;
        assert!((u.gradient[3] - expected).abs() < 1e-13);
        assert_eq!(&u.gradient[..3], &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn equilibrium_radius_zeroes_gradient() {
        let gas =
            BubbleGasState::new(4.0 / 3.0 * PI, GasLaw::polytropic(1.0, 1.4).unwrap()).unwrap();
        let r = gas.equilibrium_radius(1.0, 0.0).unwrap();
        assert!((r - 1.0).abs() < 1e-14);
        let cfg = Configuration::unbounded(vec![ShapeParams::sphere(Vec3::zeros(), r).unwrap()]);
        let u = potential_energy(&sphere_model(gas.mass, 0.0), &cfg).unwrap();
        assert!(u.gradient[3].abs() < 1e-13);

        let r = gas.equilibrium_radius(1.0, 0.3).unwrap();
        let vol = 4.0 / 3.0 * PI * r.powi(3);
        assert!((gas.pressure_at_volume(vol).unwrap() - 1.0 - 0.6 / r).abs() < 1e-12);
    }

    #[test]
    fn ellipsoid_gradient_matches_finite_differences() {
        let s = Mat3::new(1.2, 0.1, 0.0, 0.1, 0.9, 0.05, 0.0, 0.05, 1.1);
        let cfg = Configuration::unbounded(vec![ShapeParams::ellipsoid(Vec3::zeros(), s).unwrap()]);
        let model = EnergyModel {
            p_infinity: 1.0,
            surface_tension: 0.3,
            gases: vec![BubbleGasState::new(3.0, GasLaw::polytropic(1.0, 1.4).unwrap()).unwrap()],
        };
        let u = potential_energy(&model, &cfg).unwrap();
        let q = cfg.coords();
        for k in 0..q.len() {
            let h = 1e-5 * (1.0 + q[k].abs());
            let mut qp = q.clone();
            let mut qm = q.clone();
            qp[k] += h;
            qm[k] -= h;
            let up = potential_energy(&model, &cfg.with_coords(&qp).unwrap())
                .unwrap()
                .value;
            let um = potential_energy(&model, &cfg.with_coords(&qm).unwrap())
                .unwrap()
                .value;
            let fd = (up - um) / (2.0 * h);
            assert!(
                (fd - u.gradient[k]).abs() <= 1e-4 * (1.0 + u.gradient[k].abs()),
                "{k}"
            );
        }
    }
}
