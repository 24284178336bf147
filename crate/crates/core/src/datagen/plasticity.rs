//! Plane-strain J2 perfect plasticity at a single material point.
//!
//! Tensors are stored as `[xx, yy, zz, xy, xz, yz]` with tensor shear
//! components. Under plane strain only `xy` of the shears is ever nonzero.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Tensor2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaterialSpec {
    pub youngs_modulus: f64,
    pub poisson_ratio: f64,
    pub yield_stress: f64,
    /// Multiplies the Young's modulus; a crude porosity knob.
    #[serde(default = "one")]
    pub stiffness_scale: f64,
}

fn one() -> f64 {
    1.0
}

impl MaterialSpec {
    pub fn new(youngs_modulus: f64, poisson_ratio: f64, yield_stress: f64) -> Self {
        Self {
            youngs_modulus,
            poisson_ratio,
            yield_stress,
            stiffness_scale: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.youngs_modulus > 0.0) || !(self.stiffness_scale > 0.0) {
            return Err(Error::config("Young's modulus and stiffness scale must be positive"));
        }
        if !(self.poisson_ratio > 0.0 && self.poisson_ratio < 0.5) {
            return Err(Error::config("Poisson ratio must lie in (0, 0.5)"));
        }
        if !(self.yield_stress > 0.0) {
            return Err(Error::config("yield stress must be positive"));
        }
        Ok(())
    }

    pub fn effective_modulus(&self) -> f64 {
        self.youngs_modulus * self.stiffness_scale
    }

    pub fn shear_modulus(&self) -> f64 {
        self.effective_modulus() / (2.0 * (1.0 + self.poisson_ratio))
    }

    pub fn lame_lambda(&self) -> f64 {
        let nu = self.poisson_ratio;
        self.effective_modulus() * nu / ((1.0 + nu) * (1.0 - 2.0 * nu))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PlasticState {
    pub plastic_strain: [f64; 6],
    pub equivalent_plastic_strain: f64,
}

/// Full stress tensor from a point update, in the module's component order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StressUpdate {
    pub stress: [f64; 6],
    pub state: PlasticState,
    pub yielded: bool,
}

impl StressUpdate {
    pub fn in_plane(&self) -> [f64; 3] {
        [self.stress[0], self.stress[1], self.stress[3]]
    }
}

fn contract(a: &[f64; 6], b: &[f64; 6]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2] + 2.0 * (a[3] * b[3] + a[4] * b[4] + a[5] * b[5])
}

pub fn mean_stress(s: &[f64; 6]) -> f64 {
    (s[0] + s[1] + s[2]) / 3.0
}

pub fn deviator(s: &[f64; 6]) -> [f64; 6] {
    let p = mean_stress(s);
    [s[0] - p, s[1] - p, s[2] - p, s[3], s[4], s[5]]
}

/// `√(3 J2)`.
pub fn von_mises(s: &[f64; 6]) -> f64 {
    let d = deviator(s);
    (1.5 * contract(&d, &d)).sqrt()
}

/// Return map for total strain `(ε11, ε22, ε12)` with `ε33 = 0`.
pub fn radial_return(state: &PlasticState, strain: [f64; 3], spec: &MaterialSpec) -> StressUpdate {
    let mu = spec.shear_modulus();
    let lambda = spec.lame_lambda();
    let total = [strain[0], strain[1], 0.0, strain[2], 0.0, 0.0];
    let mut elastic = [0.0; 6];
    for i in 0..6 {
        elastic[i] = total[i] - state.plastic_strain[i];
    }
    let tr = elastic[0] + elastic[1] + elastic[2];
    let mut trial = [0.0; 6];
    for i in 0..6 {
        trial[i] = 2.0 * mu * elastic[i] + if i < 3 { lambda * tr } else { 0.0 };
    }
    let q = von_mises(&trial);
    let sy = spec.yield_stress;
    if q <= sy {
        return StressUpdate {
            stress: trial,
            state: *state,
            yielded: false,
        };
    }
    let p = mean_stress(&trial);
    let s = deviator(&trial);
    let dgamma = (q - sy) / (3.0 * mu);
    let shrink = sy / q;
    let mut next = *state;
    let mut stress = [0.0; 6];
    for i in 0..6 {
        next.plastic_strain[i] += dgamma * 1.5 * s[i] / q;
        stress[i] = s[i] * shrink + if i < 3 { p } else { 0.0 };
    }
    next.equivalent_plastic_strain += dgamma;
    StressUpdate {
        stress,
        state: next,
        yielded: true,
    }
}

/// In-plane stresses `(σ11, σ22, σ12)` and the updated state.
pub fn radial_return_step(state: &PlasticState, strain: [f64; 3], spec: &MaterialSpec) -> ([f64; 3], PlasticState) {
    let u = radial_return(state, strain, spec);
    (u.in_plane(), u.state)
}

/// Stress history of a `T × 3` strain path starting from the virgin state.
pub fn integrate_path(strain: &Tensor2, spec: &MaterialSpec) -> Result<Tensor2> {
    if strain.cols() != 3 {
        return Err(Error::shape(format!("strain path needs 3 columns, got {}", strain.cols())));
    }
    spec.validate()?;
    let mut state = PlasticState::default();
    let mut out = Tensor2::zeros(strain.rows(), 3);
    for t in 0..strain.rows() {
        let row = strain.row(t);
        let (sig, next) = radial_return_step(&state, [row[0], row[1], row[2]], spec);
        out.row_mut(t).copy_from_slice(&sig);
        state = next;
    }
    Ok(out)
}
