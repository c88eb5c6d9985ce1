//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use nalgebra::{Complex, DMatrix, DVector, Matrix2, Matrix3, Vector2};
use whfdie::dynamics::{healthy_rhs, mass_matrix, RobotState};
use whfdie::fault::{belt_mass_matrix, belt_rhs, tilt_mass_matrix, tilt_rhs, BeltFaultState, TiltAngles};
use whfdie::filter::{FilterRealization, FilterState};
use whfdie::lmi::{
    hinf_norm, h2_norm, realize, spectral_abscissa, synthesize_augmented, AugmentedPlant, FrequencyGrid, SynthesisOptions,
};
use whfdie::sim::rk4_step;
use whfdie::RobotParams;

/// Coriolis vector from a mass-matrix function by the Euler-Lagrange
/// identity `C = Ṁ w − ½ ∂(wᵀ M w)/∂q`, with central differences.
pub fn lagrangian_coriolis(mass: impl Fn(&DVector<f64>) -> DMatrix<f64>, q: &DVector<f64>, w: &DVector<f64>) -> DVector<f64> {
    let n = q.len();
    let h = 1e-6;
    let partials: Vec<DMatrix<f64>> = (0..n)
        .map(|i| {
            let mut qp = q.clone();
            let mut qm = q.clone();
            qp[i] += h;
            qm[i] -= h;
            (mass(&qp) - mass(&qm)) / (2.0 * h)
        })
        .collect();
    let mut m_dot = DMatrix::zeros(n, n);
    for i in 0..n {
        m_dot += &partials[i] * w[i];
    }
    let grad = DVector::from_iterator(n, partials.iter().map(|d| w.dot(&(d * w))));
    m_dot * w - grad * 0.5
}

pub fn dyn2(m: Matrix2<f64>) -> DMatrix<f64> {
    DMatrix::from_column_slice(2, 2, m.as_slice())
}

pub fn dyn3(m: Matrix3<f64>) -> DMatrix<f64> {
    DMatrix::from_column_slice(3, 3, m.as_slice())
}

/// Parameters with the transmission and friction removed, so the arm
/// links move freely and conserve kinetic energy.
pub fn free_arm(p: &RobotParams) -> RobotParams {
    RobotParams { cr1: 0.0, cr2: 0.0, dr1: 0.0, dr2: 0.0, dv: 0.0, ..*p }
}

pub enum Model {
    Healthy,
    Belt,
    Tilt(TiltAngles),
}

/// Largest relative change of the arm kinetic energy over `duration`.
pub fn kinetic_energy_drift(model: &Model, p: &RobotParams, dt: f64, duration: f64) -> f64 {
    let q0 = Vector2::new(0.7, -0.4);
    let w0 = Vector2::new(1.2, -0.8);
    let steps = (duration / dt).round() as usize;
    let zero = Vector2::zeros();
    match model {
        Model::Healthy | Model::Tilt(_) => {
            let tilt = match model {
                Model::Tilt(t) => Some(*t),
                _ => None,
            };
            let energy = |x: &RobotState| {
                let m = match tilt {
                    Some(t) => tilt_mass_matrix(&x.arm_angles(), &t, p),
                    None => mass_matrix(&x.arm_angles(), p),
                };
                0.5 * x.arm_velocities().dot(&(m * x.arm_velocities()))
            };
            let mut x = RobotState::new(Vector2::zeros(), q0, Vector2::zeros(), w0);
            let e0 = energy(&x);
            let mut worst: f64 = 0.0;
            for _ in 0..steps {
                x.0 = rk4_step(
                    |s, u| match tilt {
                        Some(t) => tilt_rhs(&RobotState(*s), u, &t, p),
                        None => healthy_rhs(&RobotState(*s), u, p),
                    },
                    &x.0,
                    &zero,
                    dt,
                )
                .unwrap();
                worst = worst.max((energy(&x) - e0).abs() / e0);
            }
            worst
        }
        Model::Belt => {
            let energy = |xf: &BeltFaultState| {
                let x = xf.shared();
                let m = belt_mass_matrix(&x.arm_angles(), xf.effector_angle(), p);
                let w = nalgebra::Vector3::new(x.arm_velocities()[0], x.arm_velocities()[1], xf.effector_velocity());
                0.5 * w.dot(&(m * w))
            };
            let healthy = RobotState::new(Vector2::zeros(), q0, Vector2::zeros(), w0);
            let mut xf = BeltFaultState::from_healthy(&healthy);
            xf.0[9] = 0.5;
            let e0 = energy(&xf);
            let mut worst: f64 = 0.0;
            for _ in 0..steps {
                xf.0 = rk4_step(|s, u| belt_rhs(&BeltFaultState(*s), u, p), &xf.0, &zero, dt).unwrap();
                worst = worst.max((energy(&xf) - e0).abs() / e0);
            }
            worst
        }
    }
}

/// Solves the binary SVM dual by accelerated projected gradient, projecting
/// onto `{0 ≤ a ≤ C, yᵀa = 0}` by bisection on the multiplier.
pub fn projected_gradient_dual(k: &DMatrix<f64>, y: &[f64], c: f64, iterations: usize) -> (Vec<f64>, f64) {
    let n = y.len();
    let yv = DVector::from_column_slice(y);
    let q = DMatrix::from_fn(n, n, |i, j| y[i] * y[j] * k[(i, j)]);
    let lip = q.symmetric_eigenvalues().max().max(1e-12);
    let project = |v: &DVector<f64>| -> DVector<f64> {
        let at = |lam: f64| v.zip_map(&yv, |vi, yi| (vi - lam * yi).clamp(0.0, c));
        let (mut lo, mut hi) = (-1e6, 1e6);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if at(mid).dot(&yv) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        at(0.5 * (lo + hi))
    };
    let objective = |a: &DVector<f64>| 0.5 * a.dot(&(&q * a)) - a.sum();
    let mut a = DVector::zeros(n);
    let mut z = a.clone();
    let mut t = 1.0f64;
    for _ in 0..iterations {
        let grad = &q * &z - DVector::from_element(n, 1.0);
        let next = project(&(&z - grad / lip));
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        z = &next + (&next - &a) * ((t - 1.0) / t_next);
        a = next;
        t = t_next;
    }
    let obj = objective(&a);
    (a.iter().copied().collect(), obj)
}

/// `‖C (iωI − N)⁻¹ B‖_F²`.
fn frobenius_gain_sq(n: &DMatrix<f64>, b: &DMatrix<f64>, c: &DMatrix<f64>, omega: f64) -> f64 {
    let k = n.nrows();
    let m: DMatrix<Complex<f64>> =
        DMatrix::from_fn(k, k, |i, j| Complex::new(-n[(i, j)], if i == j { omega } else { 0.0 }));
    let bc = b.map(|v| Complex::new(v, 0.0));
    let sol = m.lu().solve(&bc).expect("resolvent exists");
    let g = c.map(|v| Complex::new(v, 0.0)) * sol;
    g.iter().map(|z| z.norm_sqr()).sum()
}

/// H2 norm by trapezoidal quadrature of `(1/π) ∫₀^∞ ‖G(iω)‖_F² dω` after
/// the substitution `ω = tan θ`.
pub fn h2_by_quadrature(n: &DMatrix<f64>, b: &DMatrix<f64>, c: &DMatrix<f64>, points: usize) -> f64 {
    let d = std::f64::consts::FRAC_PI_2 / points as f64;
    let mut acc = 0.0;
    for i in 0..=points {
        let theta = i as f64 * d;
        let val = if i == points {
            (c * b).iter().map(|v| v * v).sum()
        } else {
            let w = theta.tan();
            frobenius_gain_sq(n, b, c, w) * (1.0 + w * w)
        };
        acc += if i == 0 || i == points { 0.5 * val } else { val };
    }
    (acc * d / std::f64::consts::PI).sqrt()
}

/// Random stable system: a random matrix shifted left of the imaginary axis.
pub fn random_stable(seed: u64, n: usize, m: usize, p: usize) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    let shift = spectral_abscissa(&a) + rng.random_range(0.2..1.0);
    for i in 0..n {
        a[(i, i)] -= shift;
    }
    let b = DMatrix::from_fn(n, m, |_, _| rng.random_range(-1.0..1.0));
    let c = DMatrix::from_fn(p, n, |_, _| rng.random_range(-1.0..1.0));
    (a, b, c)
}

/// Scalar plant `ẋ = −x + f + w`, `y = x`, fault model of order one.
pub fn scalar_toy() -> AugmentedPlant {
    let one = DMatrix::from_element(1, 1, 1.0);
    AugmentedPlant::from_parts(&(-&one), &DMatrix::zeros(1, 1), &one, &one, &one, 1).unwrap()
}

/// Error-dynamics norms of the filter with gains `(E, K)`: `(H∞, H2)`, or
/// `None` when the filter is unstable.
pub fn gain_norms(aug: &AugmentedPlant, e: &DMatrix<f64>, k: &DMatrix<f64>, grid: &FrequencyGrid) -> Option<(f64, f64)> {
    let g = realize(e, k, aug);
    if spectral_abscissa(&g.n) >= -1e-9 {
        return None;
    }
    let b_w = -(&g.m * &aug.da);
    let ny = aug.n_outputs();
    let mut b_v = DMatrix::zeros(aug.n_z(), 2 * ny);
    b_v.columns_mut(0, ny).copy_from(k);
    b_v.columns_mut(ny, ny).copy_from(&(-e));
    let hinf = hinf_norm(&g.n, &b_w, &aug.cbar_a, grid).ok()?;
    let h2 = h2_norm(&g.n, &b_v, &aug.cbar_a).ok()?;
    Some((hinf, h2))
}

/// Smallest H∞ norm over a gain grid on the scalar toy among filters whose
/// H2 norm stays within `gamma_max`, refined by coordinate search.
pub fn toy_grid_search(gamma_max: f64) -> f64 {
    let aug = scalar_toy();
    let grid = FrequencyGrid { lo: 1e-3, hi: 1e4, points: 200 };
    let eval = |v: &[f64; 4]| -> f64 {
        let e = DMatrix::from_column_slice(2, 1, &v[0..2]);
        let k = DMatrix::from_column_slice(2, 1, &v[2..4]);
        match gain_norms(&aug, &e, &k, &grid) {
            Some((hinf, h2)) if h2 <= gamma_max => hinf,
            _ => f64::INFINITY,
        }
    };
    let values: Vec<f64> = (-4..=4).map(|i| 2.0 * i as f64).collect();
    let mut best = ([0.0; 4], f64::INFINITY);
    for &a in &values {
        for &b in &values {
            for &c in &values {
                for &d in &values {
                    let v = [a, b, c, d];
                    let h = eval(&v);
                    if h < best.1 {
                        best = (v, h);
                    }
                }
            }
        }
    }
    let (mut v, mut h) = best;
    let mut step = 1.0;
    while step > 1e-3 {
        let mut improved = false;
        for i in 0..4 {
            for s in [-step, step] {
                let mut cand = v;
                cand[i] += s;
                let hc = eval(&cand);
                if hc < h {
                    v = cand;
                    h = hc;
                    improved = true;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    h
}

/// Synthesis options for the small test plants.
pub fn toy_options(gamma_max: f64) -> SynthesisOptions {
    SynthesisOptions { order: 1, gamma_max, balance_limit: 1.0, ..SynthesisOptions::default() }
}

/// Linear mass-spring test plant with two positions measured:
/// `x = (q, v)`, fault and disturbance entering the accelerations.
pub fn spring_plant(order: usize) -> AugmentedPlant {
    let mut a = DMatrix::zeros(4, 4);
    a[(0, 2)] = 1.0;
    a[(1, 3)] = 1.0;
    a[(2, 0)] = -4.0;
    a[(3, 1)] = -9.0;
    a[(2, 2)] = -0.4;
    a[(3, 3)] = -0.6;
    let mut b = DMatrix::zeros(4, 2);
    b[(2, 0)] = 1.0;
    b[(3, 1)] = 1.0;
    let mut c = DMatrix::zeros(2, 4);
    c[(0, 0)] = 1.0;
    c[(1, 1)] = 1.0;
    AugmentedPlant::from_parts(&a, &b, &c, &b, &b, order).unwrap()
}

/// Runs a filter on the spring plant driven by a known input and the fault
/// `f(t) = a0 + a1 t`; returns the largest `|f̂ − f|` over the last second.
pub fn polynomial_fault_error(aug: &AugmentedPlant, real: &FilterRealization, dt: f64, duration: f64) -> f64 {
    let a0 = [0.5, -0.3];
    let a1 = [0.05, 0.02];
    let n = aug.n_states;
    let a = aug.aa.view((0, 0), (n, n)).into_owned();
    let b = aug.ba.view((0, 0), (n, 2)).into_owned();
    let s = aug.aa.view((0, n), (n, 2)).into_owned();
    let c = aug.ca.view((0, 0), (2, n)).into_owned();
    let fault = |t: f64| DVector::from_vec(vec![a0[0] + a1[0] * t, a0[1] + a1[1] * t]);
    let input = |t: f64| DVector::from_vec(vec![t.sin(), (0.5 * t).cos()]);
    let plant = |x: &DVector<f64>, u: &DVector<f64>, t: f64| &a * x + &b * u + &s * fault(t);
    let sub = 10;
    let h = dt / sub as f64;
    let steps = (duration / dt).round() as usize;
    let mut x = DVector::zeros(n);
    let mut state = FilterState::new(real, dt);
    let to2 = |v: &DVector<f64>| Vector2::new(v[0], v[1]);
    let mut worst: f64 = 0.0;
    for k in 0..steps {
        let t = k as f64 * dt;
        let u = input(t);
        let y0 = &c * &x;
        if t >= duration - 1.0 {
            let za = &state.z - &real.e * &y0;
            let fhat = &real.cbar * za;
            worst = worst.max((fhat - fault(t)).amax());
        }
        for i in 0..sub {
            let ti = t + i as f64 * h;
            let k1 = plant(&x, &u, ti);
            let k2 = plant(&(&x + &k1 * (0.5 * h)), &u, ti + 0.5 * h);
            let k3 = plant(&(&x + &k2 * (0.5 * h)), &u, ti + 0.5 * h);
            let k4 = plant(&(&x + &k3 * h), &u, ti + h);
            x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        }
        let y1 = &c * &x;
        state.step(real, &to2(&u), &to2(&y0), &to2(&y1));
    }
    worst
}

/// Terminal error of a third-order design on the spring plant under a ramp
/// fault. A decay margin of 0.3 pulls the slowest filter mode to about −0.8
/// so the transient is gone within 20 s; the 50 µs sample keeps the
/// measurement interpolation error well under the tolerance.
pub fn polynomial_fault_terminal_error() -> f64 {
    let aug = spring_plant(3);
    let opts = SynthesisOptions { epsilon: 0.3, balance_limit: 1.0, ..SynthesisOptions::default() };
    let (_, gains, ..) = synthesize_augmented(&aug, &opts).unwrap();
    let real = FilterRealization {
        n: gains.n,
        g: gains.g,
        l: gains.l,
        e: gains.e,
        cbar: aug.cbar.clone(),
        va: aug.va.clone(),
    };
    polynomial_fault_error(&aug, &real, 5e-5, 20.0)
}

/// Two noisy Gaussian clouds in the plane with labels ±1.
pub fn random_binary_set(seed: u64, n: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut x = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let label = if i % 2 == 0 { 1.0 } else { -1.0 };
        let centre = 0.8 * label;
        x.push(vec![centre + rng.random_range(-1.0..1.0), -centre + rng.random_range(-1.0..1.0)]);
        y.push(label);
    }
    (x, y)
}

/// Four XOR corners, each repeated with a tiny jitter.
pub fn xor_set() -> (Vec<Vec<f64>>, Vec<usize>) {
    let mut x = Vec::new();
    let mut labels = Vec::new();
    for k in 0..5 {
        let d = 0.01 * k as f64;
        for (a, b) in [(0.0, 0.0), (1.0, 1.0), (0.0, 1.0), (1.0, 0.0)] {
            x.push(vec![a + d, b - d]);
            labels.push(usize::from(a != b));
        }
    }
    (x, labels)
}

/// SMO against projected gradient on the same kernel matrix. Returns the
/// objective gap and whether both machines classify a probe grid and the
/// training points alike.
pub fn smo_vs_projected_gradient(seed: u64, kernel: whfdie::isolation::Kernel, c: f64) -> (f64, bool) {
    use whfdie::isolation::{kernel_matrix, solve_dual, SmoOptions};
    let (x, y) = random_binary_set(seed, 20);
    let n = x.len();
    let k = kernel_matrix(&kernel, &x);
    let smo = solve_dual(&k, &y, c, &SmoOptions { tol: 1e-10, max_iter: 10_000_000 }).unwrap();
    let (alpha, obj) = projected_gradient_dual(&DMatrix::from_row_slice(n, n, &k), &y, c, 20_000);

    // Offset of the reference solution from its free variables.
    let margin = |a: &[f64], i: usize| (0..n).map(|j| a[j] * y[j] * k[i * n + j]).sum::<f64>();
    let free: Vec<usize> = (0..n).filter(|&i| alpha[i] > 1e-6 * c && alpha[i] < c * (1.0 - 1e-6)).collect();
    let bias = if free.is_empty() {
        // Every multiplier at a bound: the bias is only confined to an
        // interval, take its midpoint.
        let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
        for i in 0..n {
            let edge = y[i] - margin(&alpha, i);
            let at_zero = alpha[i] <= 1e-6 * c;
            if (y[i] > 0.0) == at_zero {
                lo = lo.max(edge);
            } else {
                hi = hi.min(edge);
            }
        }
        0.5 * (lo + hi)
    } else {
        free.iter().map(|&i| y[i] - margin(&alpha, i)).sum::<f64>() / free.len() as f64
    };
    let decide = |a: &[f64], b: f64, p: &[f64]| (0..n).map(|j| a[j] * y[j] * kernel.eval(&x[j], p)).sum::<f64>() + b;

    let mut probes = x.clone();
    for i in 0..15 {
        for j in 0..15 {
            probes.push(vec![-2.0 + i as f64 * 4.0 / 14.0, -2.0 + j as f64 * 4.0 / 14.0]);
        }
    }
    let agree = probes.iter().all(|p| {
        let a = decide(&smo.alpha, -smo.rho, p);
        let b = decide(&alpha, bias, p);
        // Points essentially on the boundary carry no information.
        a.abs() < 1e-4 || (a > 0.0) == (b > 0.0)
    });
    ((smo.objective - obj).abs(), agree)
}

/// A config small enough to push through the whole pipeline in a test: one
/// belt time and one tilt angle per grid, a single RBF candidate.
pub fn small_config(dir: &std::path::Path) -> whfdie::harness::ExperimentConfig {
    use whfdie::harness::{ExperimentConfig, FaultGrid};
    let mut cfg = ExperimentConfig::default();
    cfg.name = "small".into();
    cfg.output.dir = dir.to_path_buf();
    cfg.training = FaultGrid { belt_t_fault: vec![30.0], tilt_deg: vec![2.0], healthy_per_fault: true };
    cfg.test = FaultGrid { belt_t_fault: vec![33.0], tilt_deg: vec![1.8], healthy_per_fault: true };
    cfg.scenario.tilt_t_fault = 30.0;
    cfg.ml.windows.horizon = 10.0;
    cfg.ml.search.c_grid = vec![10.0];
    cfg.ml.search.sigma_factors = vec![1.0];
    cfg.ml.search.include_linear = false;
    cfg.ml.search.folds = 3;
    cfg
}

/// A state in the working range: arm angles within ±3 rad, motors close to
/// their transmitted positions.
pub fn random_state(rng: &mut rand_chacha::ChaCha8Rng, p: &RobotParams) -> RobotState {
    use rand::Rng;
    let qa = Vector2::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
    RobotState::new(
        qa / p.mu + Vector2::new(rng.random_range(-0.01..0.01), rng.random_range(-0.01..0.01)),
        qa,
        Vector2::new(rng.random_range(-50.0..50.0), rng.random_range(-50.0..50.0)),
        Vector2::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)),
    )
}
