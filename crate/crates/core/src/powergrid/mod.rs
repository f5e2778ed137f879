//! Linearized swing-equation model of a multi-machine network,
//! zero-order-hold discretization and the frequency-regulation demo.
//!
//! The continuous model is `M Δδ̈ + D Δδ̇ + L Δδ = ΔP` with the state
//! `(Δδ, Δω)`. Disturbances enter through the input channel, so `Ξ = B`.

mod demo;
mod expm;
mod file;

pub use demo::{
    demo_scenario, run_grid_demo, ControllerSummary, DemoScenario, GridDemoReport, DEMO_HORIZON, DEMO_SAMPLE_MEAN,
    DEMO_SAMPLE_STD, SAMPLE_STREAM,
};
pub use expm::{expm, zoh_discretize};
pub use file::{parse_grid, sha256_hex, synthetic_ten_machine, write_grid, GridData, SYNTHETIC10};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::LinearSystem;

/// Laplacian symmetry and zero-row-sum tolerance.
pub const LAPLACIAN_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct GridModel {
    /// Inertia coefficients `2H_i / ω_s`.
    pub inertia: DVector<f64>,
    pub damping: DVector<f64>,
    /// Kron-reduced network Laplacian.
    pub laplacian: DMatrix<f64>,
    /// Sample time in seconds.
    pub dt: f64,
}

impl GridModel {
    pub fn new(inertia: DVector<f64>, damping: DVector<f64>, laplacian: DMatrix<f64>, dt: f64) -> Result<Self> {
        let n = inertia.len();
        if n == 0 || damping.len() != n || laplacian.nrows() != n || laplacian.ncols() != n {
            return Err(Error::DimensionMismatch(format!(
                "{n} inertias, {} dampings, {}x{} Laplacian",
                damping.len(),
                laplacian.nrows(),
                laplacian.ncols()
            )));
        }
        if let Some((index, &value)) = inertia.iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
            return Err(Error::SingularInertia { index, value });
        }
        if damping.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::InvalidParameter("damping coefficients must be positive".into()));
        }
        if !(dt > 0.0) {
            return Err(Error::InvalidParameter(format!("sample time {dt} must be positive")));
        }
        let scale = 1.0 + laplacian.amax();
        if (&laplacian - laplacian.transpose()).amax() > LAPLACIAN_TOL * scale {
            return Err(Error::InvalidParameter("Laplacian is not symmetric".into()));
        }
        if let Some(i) = (0..n).find(|&i| laplacian.row(i).sum().abs() > LAPLACIAN_TOL * scale) {
            return Err(Error::InvalidParameter(format!("Laplacian row {i} does not sum to zero")));
        }
        Ok(Self { inertia, damping, laplacian, dt })
    }

    pub fn n_gen(&self) -> usize {
        self.inertia.len()
    }
}

/// Continuous-time `A_c = [[0, I], [−M⁻¹L, −M⁻¹D]]`, `B_c = Ξ_c = [0; M⁻¹]`.
pub fn build_state_space(grid: &GridModel) -> Result<LinearSystem> {
    let n = grid.n_gen();
    if let Some((index, &value)) = grid.inertia.iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
        return Err(Error::SingularInertia { index, value });
    }
    let m_inv = DMatrix::from_diagonal(&grid.inertia.map(|m| 1.0 / m));
    let mut a = DMatrix::zeros(2 * n, 2 * n);
    a.view_mut((0, n), (n, n)).fill_with_identity();
    a.view_mut((n, 0), (n, n)).copy_from(&(-&m_inv * &grid.laplacian));
    a.view_mut((n, n), (n, n)).copy_from(&(-&m_inv * DMatrix::from_diagonal(&grid.damping)));
    let mut b = DMatrix::zeros(2 * n, n);
    b.view_mut((n, 0), (n, n)).copy_from(&m_inv);
    LinearSystem::new(a, b.clone(), b)
}

/// Zero-order-hold discretization of [`build_state_space`] at `grid.dt`.
pub fn discretize(grid: &GridModel) -> Result<LinearSystem> {
    let cont = build_state_space(grid)?;
    let (a, b) = zoh_discretize(&cont.a, &cont.b, grid.dt)?;
    LinearSystem::new(a, b.clone(), b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::complex_eigenvalues;

    #[test]
    fn single_machine() {
        let g = GridModel::new(DVector::from_element(1, 1.0), DVector::from_element(1, 1.0), DMatrix::zeros(1, 1), 0.1)
            .unwrap();
        let sys = build_state_space(&g).unwrap();
        assert_eq!(sys.a, DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, -1.0]));
        assert_eq!(sys.b, DMatrix::from_row_slice(2, 1, &[0.0, 1.0]));
    }

    fn ring3() -> GridModel {
        let l = DMatrix::from_row_slice(3, 3, &[2.0, -1.0, -1.0, -1.0, 2.0, -1.0, -1.0, -1.0, 2.0]);
        GridModel::new(DVector::from_vec(vec![0.1, 0.2, 0.15]), DVector::from_vec(vec![0.05, 0.02, 0.03]), l, 0.1)
            .unwrap()
    }

    #[test]
    fn coupling_block_annihilates_ones() {
        let sys = build_state_space(&ring3()).unwrap();
        let block = sys.a.view((3, 0), (3, 3)).into_owned();
        assert!((block * DVector::from_element(3, 1.0)).amax() < 1e-12);
    }

    #[test]
    fn ring_is_marginally_stable() {
        let sys = build_state_space(&ring3()).unwrap();
        assert!(complex_eigenvalues(&sys.a).iter().all(|z| z.re <= 1e-10));
    }

    #[test]
    fn rejects_bad_laplacian() {
        let l = DMatrix::from_row_slice(2, 2, &[1.0, -0.5, -0.5, 1.0]);
        assert!(GridModel::new(DVector::from_element(2, 1.0), DVector::from_element(2, 1.0), l, 0.1).is_err());
        let err =
            GridModel::new(DVector::from_vec(vec![1.0, 0.0]), DVector::from_element(2, 1.0), DMatrix::zeros(2, 2), 0.1);
        assert!(matches!(err, Err(Error::SingularInertia { index: 1, .. })));
    }
}
