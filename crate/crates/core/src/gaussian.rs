//! The discrete ellipsoidal Gaussian built from a cell's macroscopic fields.
//!
//! No renormalization is applied: the lattice moments of the filled Gaussian
//! match the input fields only up to quadrature and truncation error.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::grid::VelocityGrid;
use crate::moments::{MacroFields, SymTensor3};

/// Eigenvalue floor for the SPD guard, relative to the tensor trace.
pub const LAMBDA_FLOOR_REL: f64 = 1e-14;

/// Cached parameters of `ρ/√det(2π𝒯) · exp(−½(v−U)ᵀ𝒯⁻¹(v−U))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianParams {
    pub rho: f64,
    pub u: [f64; 3],
    pub tensor: SymTensor3,
    pub inv_tensor: SymTensor3,
    pub det_tensor: f64,
    pub norm_const: f64,
    pub min_eigenvalue: f64,
    pub max_eigenvalue: f64,
}

/// Builds the Gaussian for `fields.tensor_nu`, rejecting tensors that are not SPD.
pub fn prepare(fields: &MacroFields) -> Result<GaussianParams> {
    if !(fields.rho > 0.0 && fields.rho.is_finite()) {
        return Err(Error::VacuumCell {
            rho: fields.rho,
            floor: crate::moments::RHO_FLOOR,
        });
    }
    let tensor = fields.tensor_nu;
    let eig = tensor.eigenvalues();
    let floor = LAMBDA_FLOOR_REL * tensor.trace().abs();
    if !(eig[0] > floor) || !eig[2].is_finite() {
        return Err(Error::TensorNotSpd {
            min_eigenvalue: eig[0],
            floor,
        });
    }
    let det_tensor = tensor.det();
    let inv_tensor = match tensor.inverse() {
        Some(inv) if det_tensor > 0.0 => inv,
        _ => {
            return Err(Error::TensorNotSpd {
                min_eigenvalue: eig[0],
                floor,
            })
        }
    };
    let norm_const = fields.rho / ((2.0 * PI).powi(3) * det_tensor).sqrt();
    Ok(GaussianParams {
        rho: fields.rho,
        u: fields.u,
        tensor,
        inv_tensor,
        det_tensor,
        norm_const,
        min_eigenvalue: eig[0],
        max_eigenvalue: eig[2],
    })
}

impl GaussianParams {
    /// Density at offset `d = v − U`.
    #[inline]
    pub fn at_offset(&self, d: [f64; 3]) -> f64 {
        self.norm_const * (-0.5 * self.inv_tensor.quad_form(d)).exp()
    }
}

pub fn eval(params: &GaussianParams, v: [f64; 3]) -> f64 {
    params.at_offset([v[0] - params.u[0], v[1] - params.u[1], v[2] - params.u[2]])
}

/// Writes `eval(params, v_j)` for every lattice node, in storage order.
pub fn fill_gaussian(params: &GaussianParams, vgrid: &VelocityGrid, out: &mut [f64]) {
    assert_eq!(out.len(), vgrid.n_nodes(), "buffer does not match lattice");
    for_each_node(params, vgrid, |flat, m| out[flat] = m);
}

/// Visits every lattice node in storage order with its Gaussian value.
#[inline]
pub(crate) fn for_each_node(
    params: &GaussianParams,
    vgrid: &VelocityGrid,
    mut visit: impl FnMut(usize, f64),
) {
    let axis = vgrid.axis_values();
    let [u1, u2, u3] = params.u;
    let mut flat = 0;
    for &v1 in &axis {
        let d1 = v1 - u1;
        for &v2 in &axis {
            let d2 = v2 - u2;
            for &v3 in &axis {
                visit(flat, params.at_offset([d1, d2, v3 - u3]));
                flat += 1;
            }
        }
    }
}

/// Isotropic Maxwellian `ρ(2πT)^{−3/2} exp(−|v−U|²/2T)`.
pub fn maxwellian(rho: f64, u: [f64; 3], temp: f64, v: [f64; 3]) -> f64 {
    let d2 = (v[0] - u[0]).powi(2) + (v[1] - u[1]).powi(2) + (v[2] - u[2]).powi(2);
    rho / (2.0 * PI * temp).powf(1.5) * (-d2 / (2.0 * temp)).exp()
}
