//! End-to-end acceptance checks. Runs as a plain binary (no libtest harness)
//! so it can print exactly one verdict line per check.
//!
//! Two checks reproduce claims this simulator does not currently reproduce;
//! they print `FAIL (known)` and do not fail the run unless
//! `QUATMPC_ACCEPTANCE_STRICT=1` is set. Any other failure exits nonzero.
//! Pass substrings as arguments to run a subset.

use std::path::PathBuf;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector, Matrix3, Matrix4, Vector3, Vector4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use quatmpc::cost::{landing_target, quat_cost, quat_cost_gradient, quat_cost_hessian};
use quatmpc::dynamics::{
    angular_momentum_world, retract, state_error, ErrorState, RobotModel, SrbParams, SrbState, ERROR_DIM,
};
use quatmpc::mpc::ControllerKind;
use quatmpc::quat::{
    attitude_jacobian, cayley, cayley_inv, lmat, quat_fn_jacobian, rmat, scalar_fn_gradient, scalar_fn_hessian,
};
use quatmpc::sim::{
    falling_cat_scenario, humanoid_attitude_sweep, monte_carlo, rk4_step, run_scenario, sample_attitude, RunResult,
    RunStatus, Scenario,
};
use quatmpc::solver::{AlIlqr, LinearQuadratic, SolverSettings};
use quatmpc::{Quaternion, TangentRotation};

struct Verdict {
    passed: bool,
    detail: String,
}

impl Verdict {
    fn new(passed: bool, detail: impl Into<String>) -> Self {
        Verdict {
            passed,
            detail: detail.into(),
        }
    }
}

struct Check {
    name: &'static str,
    budget: Duration,
    /// Failure is analysed in the project notes and does not fail the run.
    known_gap: bool,
    run: fn() -> Verdict,
}

fn scenario(name: &str) -> Scenario {
    let path: PathBuf = [env!("CARGO_MANIFEST_DIR"), "..", "..", "scenarios", name]
        .iter()
        .collect();
    Scenario::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn run(s: &Scenario) -> RunResult {
    run_scenario(s).unwrap_or_else(|e| panic!("{}: {e}", s.name))
}

fn rel(err: f64, scale: f64) -> f64 {
    err / scale.max(1.0)
}

fn tangent(i: usize, eps: f64) -> TangentRotation {
    let mut v = Vector3::zeros();
    v[i] = eps;
    TangentRotation(v)
}

fn perturb(q: &Quaternion, i: usize, eps: f64) -> Quaternion {
    q.mul(&cayley(&tangent(i, eps)))
}

fn perturb2(q: &Quaternion, i: usize, a: f64, j: usize, b: f64) -> Quaternion {
    let mut v = Vector3::zeros();
    v[i] += a;
    v[j] += b;
    q.mul(&cayley(&TangentRotation(v)))
}

/// Central-difference gradient of `h(q ⊗ cayley(φ))` at φ = 0.
fn fd_gradient(h: &dyn Fn(&Quaternion) -> f64, q: &Quaternion) -> Vector3<f64> {
    let e = 1e-6;
    Vector3::from_fn(|i, _| (h(&perturb(q, i, e)) - h(&perturb(q, i, -e))) / (2.0 * e))
}

/// Central-difference Hessian of `h(q ⊗ cayley(φ))` at φ = 0.
fn fd_hessian(h: &dyn Fn(&Quaternion) -> f64, q: &Quaternion) -> Matrix3<f64> {
    let e = 1e-4;
    Matrix3::from_fn(|i, j| {
        (h(&perturb2(q, i, e, j, e)) - h(&perturb2(q, i, e, j, -e)) - h(&perturb2(q, i, -e, j, e))
            + h(&perturb2(q, i, -e, j, -e)))
            / (4.0 * e * e)
    })
}

type QuatMap = Box<dyn Fn(&Quaternion) -> Quaternion>;

fn random_vec4(rng: &mut ChaCha8Rng) -> Vector4<f64> {
    Vector4::from_fn(|_, _| rng.random_range(-1.0..1.0))
}

fn quaternion_calculus() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut grad, mut jac, mut hess) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..200 {
        let q = sample_attitude(&mut rng);

        // generic smooth scalar: h(q) = ½ qᵀMq + cᵀq
        let a = DMatrix::from_fn(4, 4, |_, _| rng.random_range(-1.0..1.0));
        let m: Matrix4<f64> = Matrix4::from_iterator((&a + a.transpose()).iter().copied());
        let c = random_vec4(&mut rng);
        let h = |p: &Quaternion| 0.5 * p.as_vector().dot(&(m * p.as_vector())) + c.dot(p.as_vector());
        let dh = m * q.as_vector() + c;

        // attitude Jacobian: ∂h/∂q · G against differences of h
        let g = attitude_jacobian(&q).transpose() * dh;
        grad = grad.max(rel((g - fd_gradient(&h, &q)).amax(), g.amax()));
        let g2 = scalar_fn_gradient(&dh, &q);
        grad = grad.max(rel((g2 - fd_gradient(&h, &q)).amax(), g2.amax()));

        let hs = scalar_fn_hessian(&dh, &m, &q);
        hess = hess.max(rel((hs - fd_hessian(&h, &q)).amax(), hs.amax()));

        // quaternion-valued maps p ⊗ q and q ⊗ p
        let p = sample_attitude(&mut rng);
        let maps: [(QuatMap, Matrix4<f64>); 2] = [
            (Box::new(move |x: &Quaternion| p.mul(x)), lmat(&p)),
            (Box::new(move |x: &Quaternion| x.mul(&p)), rmat(&p)),
        ];
        for (f, dfdq) in &maps {
            let fq = f(&q);
            let an = quat_fn_jacobian(&fq, dfdq, &q);
            let e = 1e-6;
            let local = |x: Quaternion| cayley_inv(&fq.conj().mul(&x)).expect("near identity").0;
            let fd = Matrix3::from_fn(|r, col| {
                (local(f(&perturb(&q, col, e))) - local(f(&perturb(&q, col, -e))))[r] / (2.0 * e)
            });
            jac = jac.max(rel((an - fd).amax(), an.amax()));
        }

        // geodesic attitude cost
        let qbar = sample_attitude(&mut rng);
        if qbar.dot(&q).abs() < 1e-3 {
            continue;
        }
        let cost = |x: &Quaternion| quat_cost(x, &qbar);
        let cg = quat_cost_gradient(&q, &qbar);
        grad = grad.max(rel((cg - fd_gradient(&cost, &q)).amax(), cg.amax()));
        let ch = quat_cost_hessian(&q, &qbar);
        hess = hess.max(rel((ch - fd_hessian(&cost, &q)).amax(), ch.amax()));
    }
    Verdict::new(
        grad <= 1e-5 && jac <= 1e-5 && hess <= 1e-4,
        format!("200 samples: gradient {grad:.1e}, map jacobian {jac:.1e} (tol 1e-5), hessian {hess:.1e} (tol 1e-4)"),
    )
}

fn unit(i: usize, eps: f64) -> ErrorState {
    let mut e = ErrorState::zeros();
    e[i] = eps;
    e
}

fn linearization() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = Vec::new();
    for model in [RobotModel::quadruped(), RobotModel::reaction_wheel_quadruped()] {
        let params = SrbParams::new(&model);
        let m = model.control_dim();
        let mut err: f64 = 0.0;
        for _ in 0..100 {
            let mut v3 = |s: f64| Vector3::from_fn(|_, _| rng.random_range(-s..s));
            let x = SrbState {
                r: v3(0.3) + Vector3::new(0.0, 0.0, 0.3),
                q: Quaternion::identity(),
                v: v3(1.0),
                omega: v3(3.0),
            };
            let feet: Vec<Vector3<f64>> = model
                .contacts
                .iter()
                .map(|c| c.hip() + Vector3::new(0.0, 0.0, -0.3) + v3(0.05))
                .collect();
            let x = SrbState {
                q: sample_attitude(&mut rng),
                ..x
            };
            let u = DVector::from_fn(m, |_, _| rng.random_range(-10.0..60.0));
            let dt = 0.01;
            let next = params.step(&x, &u, &feet, dt);
            let lin = params.linearize(&x, &u, &next, &feet, dt).expect("consistent pair");
            let d = |a: &SrbState| state_error(a, &next).expect("nearby");
            let h = 1e-6;
            for i in 0..ERROR_DIM {
                let col = (d(&params.step(&retract(&x, &unit(i, h)), &u, &feet, dt))
                    - d(&params.step(&retract(&x, &unit(i, -h)), &u, &feet, dt)))
                    / (2.0 * h);
                for j in 0..ERROR_DIM {
                    err = err.max((col[j] - lin.a[(j, i)]).abs());
                }
            }
            for i in 0..m {
                let (mut up, mut dn) = (u.clone(), u.clone());
                up[i] += h;
                dn[i] -= h;
                let col = (d(&params.step(&x, &up, &feet, dt)) - d(&params.step(&x, &dn, &feet, dt))) / (2.0 * h);
                for j in 0..ERROR_DIM {
                    err = err.max((col[j] - lin.b[(j, i)]).abs());
                }
            }
        }
        worst.push(err);
    }
    Verdict::new(
        worst.iter().all(|&e| e <= 1e-4),
        format!(
            "max |A,B - fd|: foot-force {:.1e}, reaction-wheel {:.1e} (tol 1e-4)",
            worst[0], worst[1]
        ),
    )
}

fn tight() -> SolverSettings {
    SolverSettings {
        cost_tolerance: 1e-14,
        gradient_tolerance: 1e-10,
        ..SolverSettings::default()
    }
}

/// Planar double integrator, state `[x, y, vx, vy]`, control acceleration.
fn double_integrator(knots: usize, target: [f64; 2]) -> LinearQuadratic {
    let dt = 0.1;
    LinearQuadratic {
        a: DMatrix::from_row_slice(
            4,
            4,
            &[
                1.0, 0.0, dt, 0.0, 0.0, 1.0, 0.0, dt, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0,
            ],
        ),
        b: DMatrix::from_row_slice(4, 2, &[0.5 * dt * dt, 0.0, 0.0, 0.5 * dt * dt, dt, 0.0, 0.0, dt]),
        q: DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 1.0, 0.1, 0.1])),
        r: DMatrix::from_diagonal(&DVector::from_vec(vec![0.01, 0.02])),
        qf: DMatrix::from_diagonal(&DVector::from_vec(vec![100.0, 100.0, 10.0, 10.0])),
        x_ref: DVector::from_vec(vec![target[0], target[1], 0.0, 0.0]),
        knots,
    }
}

/// Condensed QP: states written as `S_x x0 + S_u U`, minimize over the stacked controls.
fn dense_qp(p: &LinearQuadratic, x0: &DVector<f64>) -> DVector<f64> {
    let (n, m, k) = (p.a.nrows(), p.b.ncols(), p.knots);
    let nu = m * (k - 1);
    let mut hmat = DMatrix::zeros(nu, nu);
    let mut gvec = DVector::zeros(nu);
    for j in 0..k - 1 {
        hmat.view_mut((j * m, j * m), (m, m)).copy_from(&p.r);
    }
    // x_t = A^t x0 + Σ_{j<t} A^{t-1-j} B u_j
    let mut free = x0.clone();
    let mut su = DMatrix::<f64>::zeros(n, nu);
    for t in 1..k {
        free = &p.a * free;
        su = &p.a * su;
        su.view_mut((0, (t - 1) * m), (n, m)).copy_from(&p.b);
        let w = if t == k - 1 { &p.qf } else { &p.q };
        let off = &free - &p.x_ref;
        hmat += su.transpose() * w * &su;
        gvec += su.transpose() * w * off;
    }
    hmat.cholesky().expect("positive definite").solve(&(-gvec))
}

fn oracle_equivalence() -> Verdict {
    // gains against a standalone Riccati recursion
    let p = double_integrator(20, [1.0, -0.5]);
    let mut pm = p.qf.clone();
    let mut riccati = vec![DMatrix::zeros(0, 0); p.knots - 1];
    for k in (0..p.knots - 1).rev() {
        let btp = p.b.transpose() * &pm;
        let gain = -(&p.r + &btp * &p.b).try_inverse().expect("invertible") * &btp * &p.a;
        let acl = &p.a + &p.b * &gain;
        pm = &p.q + gain.transpose() * &p.r * &gain + acl.transpose() * &pm * &acl;
        riccati[k] = gain;
    }
    let x0 = DVector::from_vec(vec![0.0, 0.0, 0.3, -0.2]);
    let guess = vec![DVector::zeros(2); p.knots - 1];
    let res = match AlIlqr::new(tight()).solve(&p, &x0, &guess, None) {
        Ok(r) => r,
        Err(e) => return Verdict::new(false, format!("solver error: {e}")),
    };
    let gain_err = res
        .gains
        .feedback
        .iter()
        .zip(&riccati)
        .map(|(a, b)| (a - b).amax())
        .fold(0.0, f64::max);

    // reach task against the condensed QP
    let reach = double_integrator(30, [2.0, 1.0]);
    let x0 = DVector::from_vec(vec![0.0, 0.0, 0.0, 0.0]);
    let want = dense_qp(&reach, &x0);
    let guess = vec![DVector::zeros(2); reach.knots - 1];
    let qp_err = match AlIlqr::new(tight()).solve(&reach, &x0, &guess, None) {
        Ok(r) => r
            .trajectory
            .controls
            .iter()
            .enumerate()
            .map(|(k, u)| (u - want.rows(2 * k, 2)).amax())
            .fold(0.0, f64::max),
        Err(_) => f64::INFINITY,
    };
    Verdict::new(
        gain_err <= 1e-8 && qp_err <= 1e-6,
        format!("riccati gains {gain_err:.1e} (tol 1e-8), reach controls vs dense QP {qp_err:.1e} (tol 1e-6)"),
    )
}

fn landing_target_search() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let grid: Vec<Quaternion> = (0..)
        .map(|i| -std::f64::consts::PI + 1e-4 * i as f64)
        .take_while(|&y| y < std::f64::consts::PI)
        .map(|y: f64| Quaternion::new((0.5 * y).cos(), 0.0, 0.0, (0.5 * y).sin()))
        .collect();
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..1000 {
        let q0 = sample_attitude(&mut rng);
        let t = landing_target(&q0);
        let best = grid.iter().map(|g| quat_cost(&q0, g)).fold(f64::INFINITY, f64::min);
        worst = worst.max(quat_cost(&q0, &t) - best);
    }
    Verdict::new(
        worst <= 1e-8,
        format!("1000 attitudes, closed form minus best grid cost at most {worst:.1e} (tol 1e-8)"),
    )
}

fn integrators() -> Verdict {
    let model = RobotModel::reaction_wheel_quadruped();
    let params = SrbParams::new(&model);
    let u = DVector::zeros(model.control_dim());
    let g = 9.81;

    let start = SrbState::at(Vector3::new(0.0, 0.0, 10.0), Quaternion::from_euler_zyx(0.4, -0.3, 1.2));
    let (mut rk, mut mid) = (start, start);
    for _ in 0..1000 {
        rk = rk4_step(&params, &rk, &u, &[], 1e-3);
    }
    for _ in 0..100 {
        mid = params.step(&mid, &u, &[], 0.01);
    }
    let fall = (rk.r.z - (10.0 - 0.5 * g))
        .abs()
        .max((mid.r.z - (10.0 - 0.5 * g)).abs());

    // torque-free tumbling about a non-principal axis
    let mut x = SrbState {
        omega: Vector3::new(1.5, -2.0, 0.7),
        ..start
    };
    let l0 = angular_momentum_world(&model, &x);
    let mut momentum: f64 = 0.0;
    let mut drift: f64 = 0.0;
    let mut xm = x;
    for _ in 0..10_000 {
        x = rk4_step(&params, &x, &u, &[], 1e-3);
        xm = params.step(&xm, &u, &[], 1e-3);
        momentum = momentum.max((angular_momentum_world(&model, &x) - l0).norm() / l0.norm());
        drift = drift.max(x.q.norm_error()).max(xm.q.norm_error());
    }
    Verdict::new(
        fall <= 1e-4 && momentum <= 1e-6 && drift <= 1e-9,
        format!("free fall {fall:.1e} m (tol 1e-4), momentum {momentum:.1e} rel (tol 1e-6), norm drift {drift:.1e} (tol 1e-9)"),
    )
}

fn trot_tracking() -> Verdict {
    let res = run(&scenario("trot_attitude.toml"));
    let s = &res.summary;
    let rms = s.rms_attitude_error_deg;
    Verdict::new(
        s.status == RunStatus::Completed && rms.iter().all(|&e| e <= 10.0),
        format!(
            "{:?} at {:.2} s, rms error [{:.2}, {:.2}, {:.2}] deg (tol 10)",
            s.status, s.end_time, rms[0], rms[1], rms[2]
        ),
    )
}

fn disturbance_recovery() -> Verdict {
    let res = run(&scenario("disturbance.toml"));
    let s = &res.summary;
    Verdict::new(
        s.status == RunStatus::Completed && s.recovery_time.is_some_and(|t| t <= 3.0),
        format!(
            "{:?}, peak deviation {:.1} cm, back inside 3 cm after {}",
            s.status,
            100.0 * s.max_position_error,
            s.recovery_time
                .map_or("never".into(), |t| format!("{t:.2} s (tol 3 s)"))
        ),
    )
}

fn wall_standing() -> Verdict {
    let quat = run(&scenario("wall_standing.toml")).summary;
    let euler = run(&scenario("wall_standing_euler.toml")).summary;
    let held =
        quat.status == RunStatus::Completed && quat.end_time >= 10.0 - 1e-9 && quat.steady_attitude_error_deg <= 5.0;
    let euler_failed = euler.status == RunStatus::Failed || euler.max_attitude_error_deg > 45.0;
    Verdict::new(
        held && euler_failed,
        format!(
            "quaternion {:?} {:.1} s, steady error {:.2} deg (tol 5); euler {:?} at {:.2} s ({})",
            quat.status,
            quat.end_time,
            quat.steady_attitude_error_deg,
            euler.status,
            euler.end_time,
            euler.failure.as_deref().unwrap_or("no failure")
        ),
    )
}

fn falling_cat() -> Verdict {
    let trials = 100;
    let quat = monte_carlo(
        &falling_cat_scenario(ControllerKind::Quaternion),
        trials,
        ControllerKind::Quaternion,
        0,
    );
    let euler = monte_carlo(
        &falling_cat_scenario(ControllerKind::Euler),
        trials,
        ControllerKind::Euler,
        0,
    );
    match (quat, euler) {
        (Ok(q), Ok(e)) => {
            let gap = q.success_rate - e.success_rate;
            Verdict::new(
                q.success_rate >= 0.85 && gap >= 0.30 - 1e-12,
                format!(
                    "{trials} trials: quaternion {:.2} (min 0.85), euler {:.2}, gap {:.2} (min 0.30)",
                    q.success_rate, e.success_rate, gap
                ),
            )
        }
        (q, e) => Verdict::new(false, format!("monte carlo error: {:?} {:?}", q.err(), e.err())),
    }
}

/// Largest attitude error before the reference first tilts 90° from its start.
fn error_before_upright_crossing(res: &RunResult) -> (f64, bool) {
    let q_start = res.log.rows[0].reference.q;
    let mut worst: f64 = 0.0;
    for row in &res.log.rows {
        if row.reference.q.angle_to(&q_start) >= std::f64::consts::FRAC_PI_2 {
            return (worst, true);
        }
        worst = worst.max(row.state.q.angle_to(&row.reference.q).to_degrees());
    }
    (worst, false)
}

fn humanoid_sweep() -> Verdict {
    let quat = run(&humanoid_attitude_sweep(1, 1.0, ControllerKind::Quaternion));
    let euler = run(&humanoid_attitude_sweep(1, 1.0, ControllerKind::Euler));
    let (_, reached) = error_before_upright_crossing(&quat);
    let tracked = quat.summary.status == RunStatus::Completed && reached && quat.summary.max_attitude_error_deg <= 15.0;
    let (euler_err, euler_reached) = error_before_upright_crossing(&euler);
    let euler_broke = euler_err > 45.0 || (euler.summary.status == RunStatus::Failed && !euler_reached);
    Verdict::new(
        tracked && euler_broke,
        format!(
            "quaternion {:?}, peak error {:.2} deg (tol 15); euler {:?}, {} before 90 deg with peak error {:.2} deg",
            quat.summary.status,
            quat.summary.max_attitude_error_deg,
            euler.summary.status,
            if euler_broke { "broke down" } else { "held" },
            euler_err
        ),
    )
}

fn solve_time() -> Verdict {
    let s = scenario("trot_attitude.toml");
    let res = run(&s);
    let sum = &res.summary;
    Verdict::new(
        s.mpc.horizon == 37 && sum.ticks >= 500 && sum.solve_ms_median <= 20.0,
        format!(
            "horizon {}, {} ticks, median {:.2} ms (tol 20), p95 {:.2} ms, max {:.2} ms",
            s.mpc.horizon, sum.ticks, sum.solve_ms_median, sum.solve_ms_p95, sum.solve_ms_max
        ),
    )
}

fn main() {
    let checks = [
        Check {
            name: "quaternion calculus vs finite differences",
            budget: Duration::from_secs(5),
            known_gap: false,
            run: quaternion_calculus,
        },
        Check {
            name: "error-state linearization",
            budget: Duration::from_secs(10),
            known_gap: false,
            run: linearization,
        },
        Check {
            name: "solver vs riccati and dense QP",
            budget: Duration::from_secs(60),
            known_gap: false,
            run: oracle_equivalence,
        },
        Check {
            name: "landing target vs yaw grid",
            budget: Duration::from_secs(60),
            known_gap: false,
            run: landing_target_search,
        },
        Check {
            name: "integrators",
            budget: Duration::from_secs(60),
            known_gap: false,
            run: integrators,
        },
        Check {
            name: "trot attitude tracking",
            budget: Duration::from_secs(120),
            known_gap: false,
            run: trot_tracking,
        },
        Check {
            name: "disturbance rejection",
            budget: Duration::from_secs(120),
            known_gap: false,
            run: disturbance_recovery,
        },
        Check {
            name: "wall standing at 90 deg pitch",
            budget: Duration::from_secs(120),
            known_gap: false,
            run: wall_standing,
        },
        Check {
            name: "falling cat monte carlo",
            budget: Duration::from_secs(600),
            known_gap: true,
            run: falling_cat,
        },
        Check {
            name: "humanoid pitch sweep",
            budget: Duration::from_secs(120),
            known_gap: true,
            run: humanoid_sweep,
        },
        Check {
            name: "median solve time",
            budget: Duration::from_secs(120),
            known_gap: false,
            run: solve_time,
        },
    ];
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let strict = std::env::var("QUATMPC_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");

    let mut fatal = 0;
    for c in &checks {
        if !filters.is_empty() && !filters.iter().any(|f| c.name.contains(f.as_str())) {
            continue;
        }
        let t0 = Instant::now();
        let v = (c.run)();
        let took = t0.elapsed();
        let in_time = took <= c.budget;
        let passed = v.passed && in_time;
        let label = match (passed, c.known_gap) {
            (true, _) => "PASS",
            (false, true) => "FAIL (known)",
            (false, false) => "FAIL",
        };
        let slow = if in_time {
            String::new()
        } else {
            format!(", over the {:?} budget", c.budget)
        };
        println!(
            "{label:<12} {:<42} {} [{:.1} s{slow}]",
            c.name,
            v.detail,
            took.as_secs_f64()
        );
        if !passed && (!c.known_gap || strict) {
            fatal += 1;
        }
    }
    if fatal > 0 {
        eprintln!("{fatal} acceptance check(s) failed");
        std::process::exit(1);
    }
}
