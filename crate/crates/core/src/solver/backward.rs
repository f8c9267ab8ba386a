use nalgebra::{DMatrix, DVector};

use crate::cost::{ConstraintBlock, ConstraintKind, CostExpansion};
use crate::dynamics::LinearizedStep;
use crate::error::SolverError;

use super::AlState;

/// Cost-to-go expansion `½δxᵀPδx + pᵀδx`.
#[derive(Clone, Debug, PartialEq)]
pub struct ValueExpansion {
    pub p_mat: DMatrix<f64>,
    pub p_vec: DVector<f64>,
}

/// Second-order expansion of the action-value function at one knot.
#[derive(Clone, Debug, PartialEq)]
pub struct QExpansion {
    pub q_xx: DMatrix<f64>,
    pub q_uu: DMatrix<f64>,
    pub q_ux: DMatrix<f64>,
    pub q_x: DVector<f64>,
    pub q_u: DVector<f64>,
}

/// Affine feedback policy `δu = K δx + d` per knot.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct GainSchedule {
    pub feedback: Vec<DMatrix<f64>>,
    pub feedforward: Vec<DVector<f64>>,
}

impl GainSchedule {
    pub fn len(&self) -> usize {
        self.feedback.len()
    }

    pub fn is_empty(&self) -> bool {
        self.feedback.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.feedback.iter().all(|k| k.iter().all(|v| v.is_finite()))
            && self.feedforward.iter().all(|d| d.iter().all(|v| v.is_finite()))
    }
}

#[derive(Clone, Debug)]
pub struct BackwardPass {
    pub gains: GainSchedule,
    /// `Σ dᵀQ_u`
    pub dv1: f64,
    /// `½ Σ dᵀQ_uu d`
    pub dv2: f64,
    /// Value expansions for knots `0..K`.
    pub values: Vec<ValueExpansion>,
    /// `max_k |Q_u|_∞`
    pub max_qu: f64,
}

impl BackwardPass {
    /// Predicted change of the objective for step length `alpha` (negative is a decrease).
    pub fn expected_change(&self, alpha: f64) -> f64 {
        alpha * self.dv1 + alpha * alpha * self.dv2
    }
}

/// Active-set penalty diagonal: equalities always carry `μ`, inequalities
/// carry it when violated (`c > 0`) or when their multiplier is positive.
pub fn penalty_diagonal(block: &ConstraintBlock, lambda: &DVector<f64>, mu: f64) -> DVector<f64> {
    DVector::from_iterator(
        block.len(),
        block.kinds.iter().enumerate().map(|(i, kind)| match kind {
            ConstraintKind::Equality => mu,
            ConstraintKind::Inequality => {
                if block.c[i] > 0.0 || lambda[i] > 0.0 {
                    mu
                } else {
                    0.0
                }
            }
        }),
    )
}

/// Assembles the action-value expansion at one knot from the cost, the
/// linearized dynamics, the next value expansion and the AL terms.
pub fn q_expansion(
    cost: &CostExpansion,
    lin: &LinearizedStep,
    next: &ValueExpansion,
    cons: &ConstraintBlock,
    lambda: &DVector<f64>,
    mu: f64,
) -> QExpansion {
    let at = lin.a.transpose();
    let bt = lin.b.transpose();
    let pa = &next.p_mat * &lin.a;
    let mut q_xx = &cost.lxx + &at * &pa;
    let mut q_uu = &cost.luu + &bt * &next.p_mat * &lin.b;
    let mut q_ux = &cost.lux + &bt * &pa;
    let mut q_x = &cost.lx + &at * &next.p_vec;
    let mut q_u = &cost.lu + &bt * &next.p_vec;

    if !cons.is_empty() {
        let i_mu = penalty_diagonal(cons, lambda, mu);
        let weighted = lambda + i_mu.component_mul(&cons.c);
        // c_uᵀ I_μ, c_xᵀ I_μ
        let cut_i = scale_columns(&cons.c_u.transpose(), &i_mu);
        let cxt_i = scale_columns(&cons.c_x.transpose(), &i_mu);
        q_xx += &cxt_i * &cons.c_x;
        q_uu += &cut_i * &cons.c_u;
        q_ux += &cut_i * &cons.c_x;
        q_x += cons.c_x.transpose() * &weighted;
        q_u += cons.c_u.transpose() * &weighted;
    }
    QExpansion {
        q_xx,
        q_uu,
        q_ux,
        q_x,
        q_u,
    }
}

fn scale_columns(m: &DMatrix<f64>, s: &DVector<f64>) -> DMatrix<f64> {
    let mut out = m.clone();
    for (j, mut col) in out.column_iter_mut().enumerate() {
        col *= s[j];
    }
    out
}

/// Riccati-like sweep over the error-state expansions.
///
/// `lins` and `costs` have one entry per control knot; `cons` likewise (or is
/// empty for unconstrained problems). Fails with `NonPositiveDefinite` when
/// `Q_uu + ρI` has no Cholesky factor at some knot.
pub fn backward_pass(
    lins: &[LinearizedStep],
    costs: &[CostExpansion],
    terminal: &CostExpansion,
    cons: &[ConstraintBlock],
    al: &AlState,
    reg: f64,
) -> Result<BackwardPass, SolverError> {
    let n = lins.len();
    let mut values = vec![
        ValueExpansion {
            p_mat: DMatrix::zeros(0, 0),
            p_vec: DVector::zeros(0),
        };
        n + 1
    ];
    values[n] = ValueExpansion {
        p_mat: terminal.lxx.clone(),
        p_vec: terminal.lx.clone(),
    };
    let mut feedback = vec![DMatrix::zeros(0, 0); n];
    let mut feedforward = vec![DVector::zeros(0); n];
    let (mut dv1, mut dv2, mut max_qu) = (0.0, 0.0, 0.0f64);

    for k in (0..n).rev() {
        let empty;
        let block = match cons.get(k) {
            Some(b) => b,
            None => {
                empty = ConstraintBlock::empty(lins[k].a.ncols(), lins[k].b.ncols());
                &empty
            }
        };
        let lambda = al
            .lambda
            .get(k)
            .filter(|l| l.len() == block.len())
            .cloned()
            .unwrap_or_else(|| DVector::zeros(block.len()));
        let q = q_expansion(&costs[k], &lins[k], &values[k + 1], block, &lambda, al.penalty);
        max_qu = max_qu.max(q.q_u.amax());

        let mut q_uu_reg = q.q_uu.clone();
        for i in 0..q_uu_reg.nrows() {
            q_uu_reg[(i, i)] += reg;
        }
        let chol = q_uu_reg
            .cholesky()
            .ok_or(SolverError::NonPositiveDefinite { knot: k })?;
        let gain = -chol.solve(&q.q_ux);
        let ff = -chol.solve(&q.q_u);

        let kt = gain.transpose();
        let kt_quu = &kt * &q.q_uu;
        let mut p_mat = &q.q_xx + &kt_quu * &gain + &kt * &q.q_ux + q.q_ux.transpose() * &gain;
        p_mat = 0.5 * (&p_mat + p_mat.transpose());
        let p_vec = &q.q_x + &kt_quu * &ff + &kt * &q.q_u + q.q_ux.transpose() * &ff;

        dv1 += ff.dot(&q.q_u);
        dv2 += 0.5 * ff.dot(&(&q.q_uu * &ff));
        values[k] = ValueExpansion { p_mat, p_vec };
        feedback[k] = gain;
        feedforward[k] = ff;
    }
    Ok(BackwardPass {
        gains: GainSchedule { feedback, feedforward },
        dv1,
        dv2,
        values,
        max_qu,
    })
}
