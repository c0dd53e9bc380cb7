//! Vectorial damage law for contacts and crack-dependent conduit permeability.

use alloc::format;
use core::f64::consts::FRAC_PI_2;

use crate::error::{Error, Result};

/// Elastic-damage parameters of a contact.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MechMaterial {
    pub e0: f64,
    pub alpha: f64,
    pub ft: f64,
    pub gt: f64,
    omega0: f64,
}

/// Softening slopes of one contact; they depend on its length.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ContactParams {
    pub kt: f64,
    pub ks: f64,
    pub nt: f64,
    /// Never damages; used for contacts touching the non-physical discretization.
    pub elastic: bool,
}

/// History of a contact.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ContactState {
    pub d: f64,
    pub max_en: f64,
    pub max_et: f64,
}

impl ContactState {
    pub fn is_pristine(&self) -> bool {
        self.d == 0.0 && self.max_en == 0.0 && self.max_et == 0.0
    }

    pub fn bits(&self) -> [u64; 3] {
        [self.d.to_bits(), self.max_en.to_bits(), self.max_et.to_bits()]
    }
}

/// Solid traction (normal, tangential) in Pa.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Traction {
    pub n: f64,
    pub m: f64,
}

impl MechMaterial {
    pub fn new(e0: f64, alpha: f64, ft: f64, gt: f64) -> Result<Self> {
        for (name, v) in [("E0", e0), ("alpha", alpha), ("ft", ft), ("Gt", gt)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidMaterial(format!("{name} must be positive and finite, got {v}")));
            }
        }
        let mut m = Self { e0, alpha, ft, gt, omega0: 0.0 };
        m.omega0 = m.solve_omega0();
        Ok(m)
    }

    /// Concrete of the bending example.
    pub fn bending_defaults() -> Self {
        Self::new(60e9, 0.29, 2.2e6, 35.0).unwrap()
    }

    /// Concrete of the corrosion example.
    pub fn corrosion_defaults() -> Self {
        Self::new(37e9, 1.0, 3.2e6, 143.0).unwrap()
    }

    /// Transitional straining direction where both strength branches meet.
    pub fn omega0(&self) -> f64 {
        self.omega0
    }

    fn strength_compressive(&self, omega: f64) -> f64 {
        let (s, c) = omega.sin_cos();
        16.0 * self.ft / (s * s + self.alpha * c * c).sqrt()
    }

    // rationalized so that the removable singularity at tan^2 = 25 alpha vanishes
    fn strength_tensile(&self, omega: f64) -> f64 {
        let (s, c) = omega.sin_cos();
        9.0 * self.ft / (4.52 * s + (20.0704 * s * s + 9.0 * self.alpha * c * c).sqrt())
    }

    fn solve_omega0(&self) -> f64 {
        // the tensile branch has a pole at -atan(5 sqrt(alpha)); the crossing lies between it and 0
        let mut lo = -(5.0 * self.alpha.sqrt()).atan();
        let mut hi = 0.0;
        let g = |w: f64| self.strength_compressive(w) - self.strength_tensile(w);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            let v = g(mid);
            if v.is_nan() || v < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    /// Strength in straining direction `omega`.
    pub fn effective_strength(&self, omega: f64) -> f64 {
        if omega < self.omega0 {
            self.strength_compressive(omega)
        } else {
            self.strength_tensile(omega)
        }
    }

    /// Pure tension and pure shear softening slopes and the transition power.
    pub fn contact_params(&self, length: f64) -> Result<ContactParams> {
        let ft2l = self.ft * self.ft * length;
        let den_t = 2.0 * self.e0 * self.gt - ft2l;
        if !(den_t > 0.0) {
            return Err(Error::SnapBack { length, denominator: den_t });
        }
        let den_s = 32.0 * self.alpha * self.e0 * self.gt - 9.0 * ft2l;
        if !(den_s > 0.0) {
            return Err(Error::SnapBack { length, denominator: den_s });
        }
        let kt = 2.0 * self.e0 * ft2l / den_t;
        let ks = 18.0 * self.alpha * self.e0 * ft2l / den_s;
        if !(kt > ks) {
            return Err(Error::ShearSlopeTooLarge { kt, ks });
        }
        let nt = (kt / (kt - ks)).ln() / (1.0 - 2.0 * self.omega0 / core::f64::consts::PI).ln();
        Ok(ContactParams { kt, ks, nt, elastic: false })
    }

    /// Initial post-peak slope in straining direction `omega`.
    pub fn softening_slope(&self, p: &ContactParams, omega: f64) -> f64 {
        let w0 = self.omega0;
        if omega < w0 {
            let r = (omega + FRAC_PI_2) / (w0 + FRAC_PI_2);
            0.26 * self.e0 * (1.0 - r * r)
        } else {
            let r = (omega - FRAC_PI_2) / (w0 - FRAC_PI_2);
            -p.kt * (1.0 - r.powf(p.nt))
        }
    }

    /// Evaluates the damage law at strain `(en, em)` starting from `state`.
    ///
    /// Pure: the returned state is a trial value to be committed by the caller.
    pub fn update_contact(&self, p: &ContactParams, state: &ContactState, en: f64, em: f64) -> (Traction, ContactState) {
        if p.elastic {
            return (Traction { n: self.e0 * en, m: self.e0 * self.alpha * em }, *state);
        }
        let et = em.abs();
        let e_eff = (en * en + self.alpha * et * et).sqrt();
        if e_eff == 0.0 {
            return (Traction::default(), *state);
        }
        let max_en = state.max_en.max(en);
        let max_et = state.max_et.max(et);
        let omega = en.atan2(self.alpha.sqrt() * et);
        let f = self.effective_strength(omega);
        let k = self.softening_slope(p, omega);
        let chi = loading_history_chi(self.alpha, max_en, max_et, e_eff, omega, self.omega0);
        let s_eff = f * ((k / f) * (chi - f / self.e0).max(0.0)).exp();
        let d_trial = 1.0 - s_eff / (self.e0 * e_eff);
        let d = state.d.max(if d_trial.is_nan() { 0.0 } else { d_trial.clamp(0.0, 1.0) });
        let t = Traction { n: (1.0 - d) * self.e0 * en, m: (1.0 - d) * self.e0 * self.alpha * em };
        (t, ContactState { d, max_en, max_et })
    }
}

/// History variable; `max_en` and `max_et` must already include the current strains.
pub fn loading_history_chi(alpha: f64, max_en: f64, max_et: f64, e_eff: f64, omega: f64, omega0: f64) -> f64 {
    let hist = (max_en * max_en + alpha * max_et * max_et).sqrt();
    if omega < omega0 {
        e_eff
    } else if omega < 0.0 {
        e_eff * omega / omega0 + hist * (1.0 - omega / omega0)
    } else {
        hist
    }
}

/// Normal crack opening; closed cracks do not open.
pub fn crack_opening(d: f64, en: f64, length: f64) -> f64 {
    (en * length * d).max(0.0)
}

/// Fluid properties and intact permeability.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TransportMaterial {
    pub kappa: f64,
    pub xi: f64,
    pub mu: f64,
    pub rho: f64,
}

impl TransportMaterial {
    pub fn new(kappa: f64, xi: f64, mu: f64, rho: f64) -> Result<Self> {
        for (name, v) in [("kappa", kappa), ("mu", mu), ("rho", rho)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidMaterial(format!("{name} must be positive and finite, got {v}")));
            }
        }
        if !(0.0..=1.0).contains(&xi) {
            return Err(Error::InvalidMaterial(format!("xi must lie in [0, 1], got {xi}")));
        }
        Ok(Self { kappa, xi, mu, rho })
    }

    /// Water in the bending example.
    pub fn bending_defaults() -> Self {
        Self { kappa: 5e-18, xi: 1.0, mu: 8.9e-4, rho: 1000.0 }
    }

    /// Fluid corrosion products.
    pub fn corrosion_defaults() -> Self {
        Self { kappa: 1e-16, xi: 0.001, mu: 1.9e4, rho: 3925.0 }
    }

    pub fn intact_permeability(&self) -> f64 {
        self.rho * self.kappa / self.mu
    }

    /// Conduit permeability for crack opening `w` across a section `s`.
    pub fn conduit_permeability(&self, w: f64, s: f64) -> f64 {
        self.intact_permeability() + self.xi * self.rho * w * w * w / (12.0 * self.mu * s)
    }
}

/// Everything the physics needs about the material.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Materials {
    pub mech: MechMaterial,
    pub transport: TransportMaterial,
    pub biot: f64,
}

impl Materials {
    pub fn new(mech: MechMaterial, transport: TransportMaterial, biot: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&biot) {
            return Err(Error::InvalidMaterial(format!("biot must lie in [0, 1], got {biot}")));
        }
        Ok(Self { mech, transport, biot })
    }
}
