//! Numeric self-checks: analytic derivatives against finite differences,
//! the solver against a textbook Riccati recursion, the integrators against
//! ballistic flight and the landing target against a brute-force yaw search.

use nalgebra::{DMatrix, DVector, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::cost::{landing_target, quat_cost, stage_cost, stage_cost_value, CostWeights};
use crate::dynamics::{retract, state_error, ErrorState, RobotModel, SrbParams, SrbState, ERROR_DIM};
use crate::quat::Quaternion;
use crate::sim::{rk4_step, sample_attitude};
use crate::solver::{AlIlqr, LinearQuadratic, SolverSettings};

#[derive(Clone, Copy, Debug, Default)]
pub struct VerifyOptions {
    /// Added to every analytic cost gradient entry before comparison. Only
    /// useful to confirm that the checks catch a broken derivative.
    pub perturb_gradient: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct CheckResult {
    pub name: &'static str,
    pub max_error: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl CheckResult {
    fn new(name: &'static str, max_error: f64, tolerance: f64) -> Self {
        CheckResult {
            name,
            max_error,
            tolerance,
            passed: max_error <= tolerance,
        }
    }
}

const SEED: u64 = 0x5eed;
const FD_STEP: f64 = 1e-6;

fn random_state(rng: &mut ChaCha8Rng) -> SrbState {
    let mut v3 = |s: f64| Vector3::from_fn(|_, _| rng.random_range(-s..s));
    let (r, v, w) = (v3(0.2) + Vector3::new(0.0, 0.0, 0.3), v3(0.5), v3(2.0));
    SrbState {
        r,
        q: sample_attitude(rng),
        v,
        omega: w,
    }
}

fn unit(i: usize) -> ErrorState {
    let mut e = ErrorState::zeros();
    e[i] = 1.0;
    e
}

/// Error-state `A`, `B` of the midpoint map against central differences
/// through the Cayley retraction.
pub fn check_dynamics_jacobians() -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut worst: f64 = 0.0;
    for model in [RobotModel::quadruped(), RobotModel::reaction_wheel_quadruped()] {
        let params = SrbParams::new(&model);
        for _ in 0..10 {
            let x = random_state(&mut rng);
            let m = model.control_dim();
            let u = DVector::from_fn(m, |_, _| rng.random_range(-5.0..40.0));
            let feet: Vec<Vector3<f64>> = model
                .contacts
                .iter()
                .map(|c| Vector3::from(c.hip) + Vector3::new(0.0, 0.0, -0.3))
                .collect();
            let dt = 0.01;
            let next = params.step(&x, &u, &feet, dt);
            let lin = params
                .linearize(&x, &u, &next, &feet, dt)
                .expect("consistent reference");
            let diff = |a: &SrbState, b: &SrbState| state_error(a, b).expect("nearby states");
            for i in 0..ERROR_DIM {
                let hi = params.step(&retract(&x, &(FD_STEP * unit(i))), &u, &feet, dt);
                let lo = params.step(&retract(&x, &(-FD_STEP * unit(i))), &u, &feet, dt);
                let col = (diff(&hi, &next) - diff(&lo, &next)) / (2.0 * FD_STEP);
                for j in 0..ERROR_DIM {
                    worst = worst.max((col[j] - lin.a[(j, i)]).abs());
                }
            }
            for i in 0..m {
                let mut up = u.clone();
                up[i] += FD_STEP;
                let mut um = u.clone();
                um[i] -= FD_STEP;
                let col = (diff(&params.step(&x, &up, &feet, dt), &next)
                    - diff(&params.step(&x, &um, &feet, dt), &next))
                    / (2.0 * FD_STEP);
                for j in 0..ERROR_DIM {
                    worst = worst.max((col[j] - lin.b[(j, i)]).abs());
                }
            }
        }
    }
    CheckResult::new("dynamics jacobians vs finite differences", worst, 1e-6)
}

/// Error-state cost gradient against central differences of the cost value.
pub fn check_cost_gradient(opts: &VerifyOptions) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 1);
    let w = CostWeights::default();
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let x = random_state(&mut rng);
        let xbar = random_state(&mut rng);
        let u = DVector::from_fn(12, |_, _| rng.random_range(-5.0..40.0));
        let ubar = DVector::zeros(12);
        let exp = stage_cost(&x, &u, &xbar, &ubar, &w);
        let lx = exp.lx.add_scalar(opts.perturb_gradient);
        for i in 0..ERROR_DIM {
            let f = |s: f64| stage_cost_value(&retract(&x, &(s * unit(i))), &u, &xbar, &ubar, &w);
            let fd = (f(FD_STEP) - f(-FD_STEP)) / (2.0 * FD_STEP);
            worst = worst.max((fd - lx[i]).abs());
        }
    }
    CheckResult::new("cost gradient vs finite differences", worst, 1e-6)
}

/// AL-iLQR feedback gains on an unconstrained LQ problem against the
/// discrete Riccati recursion.
pub fn check_riccati() -> CheckResult {
    let dt = 0.1;
    let p = LinearQuadratic {
        a: DMatrix::from_row_slice(
            4,
            4,
            &[
                1.0, 0.0, dt, 0.0, 0.0, 1.0, 0.0, dt, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0,
            ],
        ),
        b: DMatrix::from_row_slice(4, 2, &[0.5 * dt * dt, 0.0, 0.0, 0.5 * dt * dt, dt, 0.0, 0.0, dt]),
        q: DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 2.0, 0.1, 0.1])),
        r: DMatrix::from_diagonal(&DVector::from_vec(vec![0.05, 0.08])),
        qf: DMatrix::from_diagonal(&DVector::from_vec(vec![10.0, 10.0, 1.0, 1.0])),
        x_ref: DVector::from_vec(vec![1.0, -0.5, 0.0, 0.0]),
        knots: 25,
    };
    let mut pm = p.qf.clone();
    let mut oracle = vec![DMatrix::zeros(0, 0); p.knots - 1];
    for k in (0..p.knots - 1).rev() {
        let btp = p.b.transpose() * &pm;
        let gain = -(&p.r + &btp * &p.b)
            .try_inverse()
            .expect("R + BᵀPB is positive definite")
            * &btp
            * &p.a;
        let acl = &p.a + &p.b * &gain;
        pm = &p.q + gain.transpose() * &p.r * &gain + acl.transpose() * &pm * &acl;
        oracle[k] = gain;
    }
    let settings = SolverSettings {
        cost_tolerance: 1e-14,
        gradient_tolerance: 1e-10,
        ..SolverSettings::default()
    };
    let x0 = DVector::from_vec(vec![0.0, 0.0, 0.3, -0.2]);
    let worst = match AlIlqr::new(settings).solve(&p, &x0, &vec![DVector::zeros(2); p.knots - 1], None) {
        Ok(res) => res
            .gains
            .feedback
            .iter()
            .zip(&oracle)
            .map(|(a, b)| (a - b).amax())
            .fold(0.0, f64::max),
        Err(_) => f64::INFINITY,
    };
    CheckResult::new("LQ gains vs Riccati recursion", worst, 1e-8)
}

/// One second of free fall under both integrators against `½gt²`.
pub fn check_ballistic() -> CheckResult {
    let model = RobotModel::reaction_wheel_quadruped();
    let params = SrbParams::new(&model);
    let u = DVector::zeros(2);
    let start = SrbState::at(Vector3::new(0.0, 0.0, 10.0), Quaternion::from_euler_zyx(0.3, -0.2, 1.0));
    let mut rk = start;
    for _ in 0..1000 {
        rk = rk4_step(&params, &rk, &u, &[], 1e-3);
    }
    let mut mid = start;
    for _ in 0..100 {
        mid = params.step(&mid, &u, &[], 0.01);
    }
    let expected = 10.0 - 0.5 * 9.81;
    let worst = (rk.r.z - expected).abs().max((mid.r.z - expected).abs());
    CheckResult::new("free fall vs closed form", worst, 1e-6)
}

/// Landing target against a 1e-4 rad yaw grid for random attitudes.
/// The reported error is the largest amount by which any grid yaw beat the
/// closed form, plus any departure from the yaw-only unit constraint.
pub fn check_landing_target() -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 2);
    let mut worst: f64 = 0.0;
    let grid: Vec<Quaternion> = (0..)
        .map(|i| -std::f64::consts::PI + 1e-4 * i as f64)
        .take_while(|&y| y < std::f64::consts::PI)
        .map(|y| Quaternion::new((0.5 * y).cos(), 0.0, 0.0, (0.5 * y).sin()))
        .collect();
    for _ in 0..1000 {
        let q0 = sample_attitude(&mut rng);
        let t = landing_target(&q0);
        let v = t.as_vector();
        worst = worst.max(v[1].abs()).max(v[2].abs()).max((v.norm() - 1.0).abs());
        let best = quat_cost(&q0, &t);
        let grid_best = grid.iter().map(|g| quat_cost(&q0, g)).fold(f64::INFINITY, f64::min);
        worst = worst.max(best - grid_best);
    }
    CheckResult::new("landing target vs yaw grid search", worst.max(0.0), 1e-12)
}

pub fn run_all(opts: &VerifyOptions) -> Vec<CheckResult> {
    vec![
        check_dynamics_jacobians(),
        check_cost_gradient(opts),
        check_riccati(),
        check_ballistic(),
        check_landing_target(),
    ]
}

/// Fixed-width pass/fail table.
pub fn format_table(results: &[CheckResult]) -> String {
    let mut out = format!("{:<44} {:>12} {:>10}  result\n", "check", "max error", "tolerance");
    for r in results {
        out.push_str(&format!(
            "{:<44} {:>12.3e} {:>10.1e}  {}\n",
            r.name,
            r.max_error,
            r.tolerance,
            if r.passed { "pass" } else { "FAIL" }
        ));
    }
    out
}
