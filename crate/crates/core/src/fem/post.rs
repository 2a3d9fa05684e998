//! Derived fields for output: Cauchy stress, damage and history per element.

use super::assembly::{gather, ordered_map, Execution};
use super::kernel::point_kinematics;
use super::shape::QUAD_POINTS;
use super::{FemError, Problem, DOFS_PER_NODE, PHI};
use crate::fem::kernel::KernelError;
use crate::materials::{degradation, pk1_stress, MaterialModel};
use crate::tensor::Tensor2;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ElementFields {
    /// Quadrature-point averages.
    pub damage: f64,
    pub kappa: f64,
    /// Von Mises stress of the averaged Cauchy stress.
    pub von_mises: f64,
    pub cauchy: [f64; 9],
    /// Quadrature-point maxima.
    pub max_damage: f64,
    pub max_kappa: f64,
    pub max_sigma11: f64,
}

pub fn von_mises(s: &Tensor2<f64>) -> f64 {
    let d = [s[(0, 0)] - s[(1, 1)], s[(1, 1)] - s[(2, 2)], s[(2, 2)] - s[(0, 0)]];
    let shear = s[(0, 1)].powi(2) + s[(1, 2)].powi(2) + s[(2, 0)].powi(2);
    (0.5 * (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]) + 3.0 * shear).sqrt()
}

/// Cauchy stress `σ = J⁻¹ P Fᵀ`.
pub fn cauchy(f: &Tensor2<f64>, p: &Tensor2<f64>) -> Tensor2<f64> {
    (*p * f.transpose()).scale(1.0 / f.det())
}

pub fn element_fields(
    problem: &Problem,
    model: &MaterialModel,
    x: &[f64],
    kappa: &[[f64; QUAD_POINTS]],
    exec: Execution,
) -> Result<Vec<ElementFields>, FemError> {
    let dp = model.damage();
    let results = ordered_map(problem.mesh.num_elements(), exec, |e| -> Result<ElementFields, (usize, KernelError)> {
        let (u, phi) = gather(&problem.mesh.elements[e], x);
        let geo = &problem.geometry[e];
        let mut out = ElementFields { max_sigma11: f64::NEG_INFINITY, ..Default::default() };
        let mut sigma = Tensor2::zeros();
        for q in 0..QUAD_POINTS {
            let y = point_kinematics(geo, q, &u, &phi);
            let f = Tensor2(std::array::from_fn(|k| y[k]));
            let k = kappa[e][q];
            let p = pk1_stress(&f, y[9], &[y[10], y[11], y[12]], k, model)
                .map_err(|source| (e, KernelError::Material { qp: q, source }))?;
            let s = cauchy(&f, &p);
            let d = degradation(k, dp.eta_d, dp.kappa_d).1;
            sigma = sigma + s;
            out.damage += d / QUAD_POINTS as f64;
            out.kappa += k / QUAD_POINTS as f64;
            out.max_damage = out.max_damage.max(d);
            out.max_kappa = out.max_kappa.max(k);
            out.max_sigma11 = out.max_sigma11.max(s[(0, 0)]);
        }
        let sigma = sigma.scale(1.0 / QUAD_POINTS as f64);
        out.von_mises = von_mises(&sigma);
        out.cauchy = sigma.0;
        Ok(out)
    });
    results.into_iter().collect::<Result<Vec<_>, _>>().map_err(|(element, source)| FemError::Elements {
        count: 1,
        element,
        source,
    })
}

/// Scalar summary of a state, as written to history files.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Summary {
    pub max_sigma11: f64,
    pub max_kappa: f64,
    pub max_d: f64,
    pub max_phi: f64,
}

pub fn summarize(fields: &[ElementFields], x: &[f64]) -> Summary {
    let max_phi = x.iter().skip(PHI).step_by(DOFS_PER_NODE).fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    Summary {
        max_sigma11: fields.iter().map(|f| f.max_sigma11).fold(f64::NEG_INFINITY, f64::max),
        max_kappa: fields.iter().map(|f| f.max_kappa).fold(f64::NEG_INFINITY, f64::max),
        max_d: fields.iter().map(|f| f.max_damage).fold(f64::NEG_INFINITY, f64::max),
        max_phi,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn von_mises_cases() {
        assert_eq!(von_mises(&Tensor2::diag(3.0, 3.0, 3.0)), 0.0);
        assert!((von_mises(&Tensor2::diag(2.0, 0.0, 0.0)) - 2.0).abs() < 1e-15);
        let shear = Tensor2([0.0, 1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert!((von_mises(&shear) - 3f64.sqrt()).abs() < 1e-15);
    }
}
