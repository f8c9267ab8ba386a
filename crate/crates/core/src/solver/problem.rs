use nalgebra::{DMatrix, DVector};

use crate::cost::{ConstraintBlock, CostExpansion};
use crate::dynamics::LinearizedStep;
use crate::error::ModelError;

/// A finite-horizon optimal control problem expressed in error coordinates.
///
/// States live on whatever manifold the implementation likes; the solver only
/// ever sees them through [`Problem::state_error`] and the error-state
/// linearization, so quaternion states are never subtracted as vectors.
pub trait Problem {
    type State: Clone;

    /// Number of knots `K`; there are `K - 1` controls.
    fn horizon(&self) -> usize;
    fn error_dim(&self) -> usize;
    fn control_dim(&self) -> usize;

    fn step(&self, k: usize, x: &Self::State, u: &DVector<f64>) -> Result<Self::State, ModelError>;

    /// Error-state Jacobians of `step` about `(x, u)`; `x_next = step(k, x, u)`.
    fn linearize(
        &self,
        k: usize,
        x: &Self::State,
        u: &DVector<f64>,
        x_next: &Self::State,
    ) -> Result<LinearizedStep, ModelError>;

    /// Local coordinates of `x` around `nominal`.
    fn state_error(&self, x: &Self::State, nominal: &Self::State) -> Result<DVector<f64>, ModelError>;

    fn stage_cost(&self, k: usize, x: &Self::State, u: &DVector<f64>) -> CostExpansion;
    fn stage_cost_value(&self, k: usize, x: &Self::State, u: &DVector<f64>) -> f64;
    fn terminal_cost(&self, x: &Self::State) -> CostExpansion;
    fn terminal_cost_value(&self, x: &Self::State) -> f64;

    /// Constraints at knot `k` with Jacobians in error coordinates.
    fn constraints(&self, _k: usize, _x: &Self::State, _u: &DVector<f64>) -> ConstraintBlock {
        ConstraintBlock::empty(self.error_dim(), self.control_dim())
    }

    /// Largest absolute entry of the state, for divergence detection.
    fn state_magnitude(&self, x: &Self::State) -> f64;
}

/// Linear time-invariant problem `x⁺ = A x + B u` with quadratic cost
/// `½(x-x̄)ᵀQ(x-x̄) + ½uᵀRu`, terminal `½(x-x̄)ᵀQ_f(x-x̄)`.
#[derive(Clone, Debug)]
pub struct LinearQuadratic {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub qf: DMatrix<f64>,
    pub x_ref: DVector<f64>,
    pub knots: usize,
}

impl Problem for LinearQuadratic {
    type State = DVector<f64>;

    fn horizon(&self) -> usize {
        self.knots
    }
    fn error_dim(&self) -> usize {
        self.a.nrows()
    }
    fn control_dim(&self) -> usize {
        self.b.ncols()
    }
    fn step(&self, _k: usize, x: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>, ModelError> {
        Ok(&self.a * x + &self.b * u)
    }
    fn linearize(
        &self,
        _k: usize,
        _x: &DVector<f64>,
        _u: &DVector<f64>,
        _next: &DVector<f64>,
    ) -> Result<LinearizedStep, ModelError> {
        Ok(LinearizedStep {
            a: self.a.clone(),
            b: self.b.clone(),
        })
    }
    fn state_error(&self, x: &DVector<f64>, nominal: &DVector<f64>) -> Result<DVector<f64>, ModelError> {
        Ok(x - nominal)
    }
    fn stage_cost(&self, _k: usize, x: &DVector<f64>, u: &DVector<f64>) -> CostExpansion {
        let dx = x - &self.x_ref;
        let lx = &self.q * &dx;
        let lu = &self.r * u;
        CostExpansion {
            value: 0.5 * dx.dot(&lx) + 0.5 * u.dot(&lu),
            lx,
            lu,
            lxx: self.q.clone(),
            luu: self.r.clone(),
            lux: DMatrix::zeros(u.len(), x.len()),
        }
    }
    fn stage_cost_value(&self, _k: usize, x: &DVector<f64>, u: &DVector<f64>) -> f64 {
        let dx = x - &self.x_ref;
        0.5 * dx.dot(&(&self.q * &dx)) + 0.5 * u.dot(&(&self.r * u))
    }
    fn terminal_cost(&self, x: &DVector<f64>) -> CostExpansion {
        let dx = x - &self.x_ref;
        let lx = &self.qf * &dx;
        CostExpansion {
            value: 0.5 * dx.dot(&lx),
            lx,
            lu: DVector::zeros(0),
            lxx: self.qf.clone(),
            luu: DMatrix::zeros(0, 0),
            lux: DMatrix::zeros(0, x.len()),
        }
    }
    fn terminal_cost_value(&self, x: &DVector<f64>) -> f64 {
        let dx = x - &self.x_ref;
        0.5 * dx.dot(&(&self.qf * &dx))
    }
    fn state_magnitude(&self, x: &DVector<f64>) -> f64 {
        x.amax()
    }
}
