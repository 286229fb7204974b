//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! `ACCEPTANCE_ONLY=1,5,7` runs a subset. With `ACCEPTANCE_STRICT=1` any
//! failure makes the process exit non-zero. A measured double-pendulum CSV
//! can be supplied through `HOMOTOPY_NODE_PENDULUM_CSV`.

use std::panic::{self, AssertUnwindSafe};
use std::path::PathBuf;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use homotopy_node::experiment::{
    count_local_minima, landscape_sweep, predict, run_experiment, DatasetConfig, ExperimentConfig,
    ExperimentKind, ExperimentReport, Mode, SweepSpec, Trainer, WindowReport,
};
use homotopy_node::gradflow::{coupled_field, loss_gradient, CouplingSpec};
use homotopy_node::homotopy::{lambda_schedule, train_homotopy, train_vanilla, AdamWConfig, TrainConfig};
use homotopy_node::model::{BlackBox, Dynamics, HybridLotkaVolterra};
use homotopy_node::nn::MlpSpec;
use homotopy_node::ode::{integrate_adaptive, integrate_fixed, VectorField};
use homotopy_node::spline::{self, Smoothing, SmoothReference};
use homotopy_node::systems::{
    make_dataset, Dataset, LorenzParams, LvParams, NoiseSpec, SystemSpec, DATA_ATOL, DATA_RTOL,
};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 12] = [
        ("gradient oracle", gradient_oracle),
        ("solver order and cross-solver agreement", solver_order),
        ("synchronization", synchronization),
        ("landscape smoothing", landscape_smoothing),
        ("schedule algebra", schedule_algebra),
        ("reduction identity", reduction_identity),
        ("spline properties", spline_properties),
        ("lotka-volterra hybrid", lv_hybrid),
        ("extrapolation gap", extrapolation_gap),
        ("length ablation", length_ablation),
        ("lorenz black-box", lorenz_blackbox),
        ("double pendulum", double_pendulum),
    ];
    let only: Option<Vec<usize>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    let strict = std::env::var_os("ACCEPTANCE_STRICT").is_some();

    panic::set_hook(Box::new(|_| {}));
    let mut failed = Vec::new();
    let mut ran = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let id = i + 1;
        if only.as_ref().is_some_and(|o| !o.contains(&id)) {
            continue;
        }
        ran += 1;
        let start = Instant::now();
        let result = panic::catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into());
            outcome(false, format!("error: {msg}"))
        });
        let tag = if result.pass { "PASS" } else { "FAIL" };
        println!(
            "{tag} {id:>2} {name}: {} [{:.1}s]",
            result.detail,
            start.elapsed().as_secs_f64()
        );
        if !result.pass {
            failed.push(id);
        }
    }
    std::fs::remove_dir_all(scratch_dir()).ok();
    println!("{} of {ran} criteria passed", ran - failed.len());
    if !failed.is_empty() {
        println!("failed: {failed:?}");
        if strict {
            std::process::exit(1);
        }
    }
}

fn within(elapsed: Duration, limit_s: u64) -> bool {
    elapsed <= Duration::from_secs(limit_s)
}

// 1 ────────────────────────────────────────────────────────────────────────

/// Independent forward model: plain RK4 on the coupled field and the mean
/// squared trajectory error, written without the library's loss code.
fn oracle_loss<D: Dynamics>(
    model: &D,
    params: &[f64],
    data: &Dataset,
    strength: f64,
    reference: &SmoothReference,
    substeps: usize,
) -> f64 {
    let n = model.dim();
    let f = |t: f64, u: &[f64]| -> Vec<f64> {
        let mut du = vec![0.0; n];
        model.eval(params, t, u, &mut du);
        if strength != 0.0 {
            let r = reference.eval(t);
            for i in 0..n {
                du[i] -= strength * (u[i] - r[i]);
            }
        }
        du
    };
    let axpy = |u: &[f64], a: f64, k: &[f64]| -> Vec<f64> { u.iter().zip(k).map(|(x, y)| x + a * y).collect() };
    let mut u = data.measurements[0].clone();
    let mut total = 0.0;
    for i in 0..data.len() {
        if i > 0 {
            let (t0, t1) = (data.times[i - 1], data.times[i]);
            let h = (t1 - t0) / substeps as f64;
            for j in 0..substeps {
                let t = t0 + j as f64 * h;
                let k1 = f(t, &u);
                let k2 = f(t + h / 2.0, &axpy(&u, h / 2.0, &k1));
                let k3 = f(t + h / 2.0, &axpy(&u, h / 2.0, &k2));
                let k4 = f(t + h, &axpy(&u, h, &k3));
                for m in 0..n {
                    u[m] += h / 6.0 * (k1[m] + 2.0 * k2[m] + 2.0 * k3[m] + k4[m]);
                }
            }
        }
        total += u
            .iter()
            .zip(&data.measurements[i])
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            / n as f64;
    }
    total / data.len() as f64
}

fn random_dataset(rng: &mut ChaCha8Rng, dim: usize, points: usize) -> Dataset {
    let dt = rng.random_range(0.05..0.2);
    let times: Vec<f64> = (0..points).map(|i| i as f64 * dt).collect();
    let phase: Vec<f64> = (0..dim).map(|_| rng.random_range(0.0..6.0)).collect();
    let measurements = times
        .iter()
        .map(|t| {
            (0..dim)
                .map(|d| 1.0 + (2.0 * t + phase[d]).sin() + rng.random_range(-0.1..0.1))
                .collect()
        })
        .collect();
    Dataset::from_parts(times, measurements).unwrap()
}

fn gradient_case<D: Dynamics>(model: &D, params: &[f64], data: &Dataset, c: CouplingSpec, substeps: usize) -> f64 {
    let reference = spline::fit(&data.times, &data.measurements, &Smoothing::default()).unwrap();
    let (report, grad) = loss_gradient(model, params, data, c, Some(&reference), substeps).unwrap();
    let grad = grad.expect("forward solve diverged");
    let oracle = oracle_loss(model, params, data, c.strength(), &reference, substeps);
    assert!(
        (oracle - report.loss).abs() <= 1e-10 * oracle.abs().max(1e-12),
        "loss {} vs oracle {oracle}",
        report.loss
    );
    let mut p = params.to_vec();
    let floor = 1e-6 * (1.0 + oracle.abs());
    (0..p.len())
        .map(|i| {
            let h = 1e-5 * (1.0 + params[i].abs());
            p[i] = params[i] + h;
            let fp = oracle_loss(model, &p, data, c.strength(), &reference, substeps);
            p[i] = params[i] - h;
            let fm = oracle_loss(model, &p, data, c.strength(), &reference, substeps);
            p[i] = params[i];
            let fd = (fp - fm) / (2.0 * h);
            (grad[i] - fd).abs() / grad[i].abs().max(fd.abs()).max(floor)
        })
        .fold(0.0, f64::max)
}

fn gradient_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let mut worst: f64 = 0.0;
    let cases = 24;
    for case in 0..cases {
        let points = rng.random_range(4..=10);
        let k = rng.random_range(0.5..3.0);
        let lambda = if case % 2 == 0 { 0.0 } else { 0.5 };
        let c = CouplingSpec::new(k, lambda).unwrap();
        let substeps = rng.random_range(1..=4);
        let err = if case % 6 == 5 {
            let width = rng.random_range(2..=8);
            let net = MlpSpec::new(vec![2, width, width, 1]).unwrap();
            let model = HybridLotkaVolterra::new(1.3, 0.8, net.clone(), net).unwrap();
            let params: Vec<f64> = (0..model.num_params()).map(|_| rng.random_range(-0.8..0.8)).collect();
            gradient_case(&model, &params, &random_dataset(&mut rng, 2, points), c, substeps)
        } else {
            let dim = rng.random_range(1..=3);
            let w1 = rng.random_range(1..=8);
            let w2 = rng.random_range(1..=8);
            let model = BlackBox::new(MlpSpec::new(vec![dim, w1, w2, dim]).unwrap()).unwrap();
            let params: Vec<f64> = (0..model.num_params()).map(|_| rng.random_range(-0.8..0.8)).collect();
            gradient_case(&model, &params, &random_dataset(&mut rng, dim, points), c, substeps)
        };
        worst = worst.max(err);
    }
    let elapsed = start.elapsed();
    outcome(
        worst < 1e-4 && within(elapsed, 60),
        format!("{cases} configurations, max relative error {worst:.2e} (< 1e-4)"),
    )
}

// 2 ────────────────────────────────────────────────────────────────────────

fn empirical_order<F: VectorField>(f: &F, u0: &[f64], t1: f64, exact: &[f64], coarse: usize) -> f64 {
    let err = |substeps: usize| {
        let u = &integrate_fixed(f, u0, &[0.0, t1], substeps).unwrap().states[1];
        u.iter().zip(exact).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    };
    (err(coarse) / err(2 * coarse)).log2()
}

fn solver_order() -> Outcome {
    let start = Instant::now();
    let exp_field = |_t: f64, u: &[f64], du: &mut [f64]| du[0] = u[0];
    let exp_order = empirical_order(&exp_field, &[1.0], 1.0, &[1f64.exp()], 16);

    let lv = LvParams::default();
    let lv0 = LvParams::INITIAL;
    let lv_exact = integrate_adaptive(&lv, &lv0, &[0.0, 3.0], 1e-13, 1e-15).unwrap().states[1].clone();
    let lv_order = empirical_order(&lv, &lv0, 3.0, &lv_exact, 30);

    let grid = |t1: f64| -> Vec<f64> { (0..=(t1 * 10.0).round() as usize).map(|i| i as f64 * 0.1).collect() };
    let max_diff = |f: &dyn VectorField, u0: &[f64], times: &[f64]| {
        let a = integrate_adaptive(f, u0, times, DATA_RTOL, DATA_ATOL).unwrap();
        let b = integrate_fixed(f, u0, times, 1000).unwrap();
        a.states
            .iter()
            .flatten()
            .zip(b.states.iter().flatten())
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max)
    };
    let lv_diff = max_diff(&lv, &lv0, &grid(6.1));
    let lorenz_diff = max_diff(&LorenzParams::default(), &LorenzParams::INITIAL, &grid(3.1));

    let ok_order = |p: f64| (3.8..=4.2).contains(&p);
    let pass = ok_order(exp_order)
        && ok_order(lv_order)
        && lv_diff < 1e-6
        && lorenz_diff < 1e-6
        && within(start.elapsed(), 60);
    outcome(
        pass,
        format!(
            "order exp {exp_order:.3}, lotka-volterra {lv_order:.3}; dopri5 vs rk4 oracle: lotka-volterra {lv_diff:.1e}, lorenz {lorenz_diff:.1e}"
        ),
    )
}

// 3 ────────────────────────────────────────────────────────────────────────

fn synchronization() -> Outcome {
    let data = make_dataset(&SystemSpec::lotka_volterra(), (0.0, 6.1), 0.1, NoiseSpec::None, 0).unwrap();
    let reference = spline::fit(&data.times, &data.measurements, &Smoothing::default()).unwrap();
    let perturbed = LvParams {
        beta: 1.5 * LvParams::default().beta,
        ..LvParams::default()
    };
    let tracking = |k: f64| -> Vec<f64> {
        let c = CouplingSpec::new(k, 1.0).unwrap();
        let field = coupled_field(perturbed, 2, Some(&reference), c).unwrap();
        let traj = integrate_fixed(&field, &LvParams::INITIAL, &data.times, 10).unwrap();
        traj.states
            .iter()
            .zip(&data.measurements)
            .map(|(u, r)| ((u[0] - r[0]).powi(2) + (u[1] - r[1]).powi(2)).sqrt())
            .collect()
    };
    let mean = |e: &[f64]| e.iter().sum::<f64>() / e.len() as f64;
    let errors: Vec<Vec<f64>> = [0.0, 0.5, 1.0].iter().map(|k| tracking(*k)).collect();
    let avg: Vec<f64> = errors.iter().map(|e| mean(e)).collect();
    let quarter = errors[0].len() * 3 / 4;
    let late0 = mean(&errors[0][quarter..]);
    let late1 = mean(&errors[2][quarter..]);
    let pass = avg[0] > avg[1] && avg[1] > avg[2] && late1 < 0.2 * late0;
    outcome(
        pass,
        format!(
            "mean tracking error k=0/0.5/1: {:.3}/{:.3}/{:.3}; final quarter k=1 is {:.1}% of k=0",
            avg[0],
            avg[1],
            avg[2],
            100.0 * late1 / late0
        ),
    )
}

// 4 ────────────────────────────────────────────────────────────────────────

fn landscape_smoothing() -> Outcome {
    let start = Instant::now();
    let system = SystemSpec::lorenz();
    let data = make_dataset(&system, (0.0, 3.0), 0.1, NoiseSpec::None, 0).unwrap();
    let truth = 8.0 / 3.0;
    let spec = SweepSpec {
        parameter: "beta".into(),
        range: (0.5 * truth, 1.5 * truth),
        points: 101,
        k_values: vec![0.0, 1.0],
        lambda: 1.0,
        substeps: 10,
        smoothing: None,
    };
    let rows = landscape_sweep(&system, &data, &spec).unwrap();
    let curve = |k: f64| -> Vec<f64> { rows.iter().filter(|r| r.k == k).map(|r| r.loss).collect() };
    let (free, coupled) = (curve(0.0), curve(1.0));
    let grid = spec.grid();
    let nearest = (0..grid.len())
        .min_by(|a, b| (grid[*a] - truth).abs().total_cmp(&(grid[*b] - truth).abs()))
        .unwrap();
    let argmin = (0..coupled.len()).min_by(|a, b| coupled[*a].total_cmp(&coupled[*b])).unwrap();
    let (m0, m1) = (count_local_minima(&free), count_local_minima(&coupled));
    outcome(
        m1 <= m0 && argmin == nearest && within(start.elapsed(), 120),
        format!(
            "strict local minima k=0: {m0}, k=1: {m1}; coupled minimum at β = {:.4} (nearest grid point to 8/3: {:.4})",
            grid[argmin], grid[nearest]
        ),
    )
}

// 5 ────────────────────────────────────────────────────────────────────────

fn schedule_algebra() -> Outcome {
    let mut worst_sum: f64 = 0.0;
    let mut worst_ratio: f64 = 0.0;
    let mut exact_end = true;
    let mut cases = 0;
    for s in [1, 3, 6, 8, 12] {
        for kappa in [0.3, 0.5, 0.55, 0.9] {
            cases += 1;
            let sched = lambda_schedule(s, kappa).unwrap();
            worst_sum = worst_sum.max((sched.decrements.iter().sum::<f64>() - 1.0).abs());
            exact_end &= sched.lambdas[s] == 0.0 && sched.lambdas[0] == 1.0;
            for w in sched.decrements.windows(2) {
                worst_ratio = worst_ratio.max((w[1] / w[0] - kappa).abs());
            }
        }
    }
    outcome(
        worst_sum <= 1e-12 && worst_ratio <= 1e-12 && exact_end,
        format!("{cases} (s, κ) pairs: |ΣΔλ − 1| ≤ {worst_sum:.1e}, ratio error ≤ {worst_ratio:.1e}, final λ exactly 0: {exact_end}"),
    )
}

// 6 ────────────────────────────────────────────────────────────────────────

fn reduction_identity() -> Outcome {
    let data = make_dataset(
        &SystemSpec::lotka_volterra(),
        (0.0, 3.0),
        0.1,
        NoiseSpec::Relative { fraction: 0.05 },
        1,
    )
    .unwrap();
    let net = MlpSpec::new(vec![2, 5, 5, 1]).unwrap();
    let model = HybridLotkaVolterra::new(1.3, 0.8, net.clone(), net.clone()).unwrap();
    let mut identical = true;
    for seed in [0u64, 1, 2] {
        let mut init = net.init(seed).unwrap().into_inner();
        init.extend(net.init(seed + 1).unwrap().into_inner());
        let config = TrainConfig {
            n_epoch: 15,
            eta: 0.05,
            k: 0.0,
            s: 4,
            kappa: 0.55,
            substeps: 5,
            seed,
            adamw: AdamWConfig::default(),
            reset_optimizer: false,
            smoothing: None,
        };
        let h = train_homotopy(&config, &data, &model, &init).unwrap();
        let v = train_vanilla(&config, &data, &model, &init).unwrap();
        let bits = |r: &homotopy_node::homotopy::TrainResult| -> Vec<(u64, u64)> {
            r.history
                .iter()
                .map(|e| (e.coupled_loss.to_bits(), e.uncoupled_mse.to_bits()))
                .collect()
        };
        identical &= bits(&h) == bits(&v) && h.best_params == v.best_params;
    }
    outcome(identical, "k = 0 homotopy and vanilla histories compared bit for bit over 3 seeds")
}

// 7 ────────────────────────────────────────────────────────────────────────

fn spline_properties() -> Outcome {
    let times: Vec<f64> = (0..25).map(|i| 0.1 * i as f64 + 0.01 * (i % 3) as f64).collect();
    let line: Vec<Vec<f64>> = times.iter().map(|t| vec![2.0 - 3.0 * t, 0.5 * t]).collect();
    let mut linear_err: f64 = 0.0;
    for mu in [0.0, 1e-3, 1.0, 1e3] {
        let r = spline::fit_smoothing_spline(&times, &line, mu).unwrap();
        for i in 0..200 {
            let t = times[0] + (times[24] - times[0]) * i as f64 / 199.0;
            let v = r.eval(t);
            linear_err = linear_err.max((v[0] - (2.0 - 3.0 * t)).abs()).max((v[1] - 0.5 * t).abs());
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let noisy: Vec<Vec<f64>> = times
        .iter()
        .map(|t| vec![(3.0 * t).sin() + rng.random_range(-0.2..0.2)])
        .collect();
    let interp = spline::fit_smoothing_spline(&times, &noisy, 0.0).unwrap();
    let interp_err = times
        .iter()
        .zip(&noisy)
        .map(|(t, y)| (interp.eval(*t)[0] - y[0]).abs())
        .fold(0.0, f64::max);

    let mus: Vec<f64> = (0..10).map(|i| 10f64.powf(-5.0 + i as f64)).collect();
    let residuals: Vec<f64> = mus
        .iter()
        .map(|mu| {
            let r = spline::fit_smoothing_spline(&times, &noisy, *mu).unwrap();
            times
                .iter()
                .zip(&noisy)
                .map(|(t, y)| (r.eval(*t)[0] - y[0]).powi(2))
                .sum::<f64>()
        })
        .collect();
    let monotone = residuals.windows(2).all(|w| w[1] >= w[0] * (1.0 - 1e-12));
    outcome(
        linear_err < 1e-10 && interp_err < 1e-10 && monotone,
        format!("linear reproduction {linear_err:.1e}, μ=0 interpolation {interp_err:.1e}, residual monotone over 10 μ: {monotone}"),
    )
}

// 8–12 ─────────────────────────────────────────────────────────────────────

fn scratch_dir() -> PathBuf {
    let dir = std::env::temp_dir().join(format!("homotopy-node-acceptance-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn desk_config(experiment: ExperimentKind, train: TrainConfig, name: &str) -> ExperimentConfig {
    ExperimentConfig {
        experiment,
        mode: Mode::Both,
        seeds: vec![0, 1, 2],
        train,
        dataset: DatasetConfig::default(),
        model: None,
        hidden: 50,
        extrapolation_points: 50,
        output_dir: scratch_dir().join(name),
        spans: vec![],
        sweep: None,
    }
}

fn train(n_epoch: usize, eta: f64, k: f64, substeps: usize) -> TrainConfig {
    TrainConfig {
        n_epoch,
        eta,
        k,
        s: 6,
        kappa: 0.55,
        substeps,
        seed: 0,
        adamw: AdamWConfig::default(),
        reset_optimizer: true,
        smoothing: None,
    }
}

fn interp(w: &WindowReport, t: Trainer) -> Vec<f64> {
    w.artifacts(t).iter().map(|(_, a)| a.metrics.interpolation_mse).collect()
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn fmt_list(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.3e}")).collect::<Vec<_>>().join(", ")
}

static LV_REPORT: std::sync::OnceLock<ExperimentReport> = std::sync::OnceLock::new();

fn lv_report() -> &'static ExperimentReport {
    LV_REPORT.get_or_init(|| {
        let config = desk_config(ExperimentKind::LotkaVolterraHybrid, train(50, 0.05, 2.0, 10), "lv");
        let config = ExperimentConfig {
            dataset: DatasetConfig {
                span: Some((0.0, 6.1)),
                dt: Some(0.1),
                noise: Some(NoiseSpec::Relative { fraction: 0.05 }),
                ..Default::default()
            },
            ..config
        };
        run_experiment(&config).unwrap()
    })
}

fn lv_hybrid() -> Outcome {
    let start = Instant::now();
    let w = &lv_report().windows[0];
    let floor = w.summary.noise_floor.unwrap();
    let best = |t| -> Vec<f64> { w.artifacts(t).iter().map(|(_, a)| a.metrics.best_mse).collect() };
    let (h, v) = (best(Trainer::Homotopy), best(Trainer::Vanilla));
    let complete = h.len() == 3 && v.len() == 3;
    let (hm, vm) = (mean(&h), mean(&v));
    outcome(
        complete && hm <= 3.0 * floor && vm >= 10.0 * hm && within(start.elapsed(), 1800),
        format!(
            "noise floor {floor:.3e}; homotopy mean best MSE {hm:.3e} ({:.2}× floor), vanilla {vm:.3e} ({:.1}× homotopy)",
            hm / floor,
            vm / hm
        ),
    )
}

fn extrapolation_gap() -> Outcome {
    let w = &lv_report().windows[0];
    let extrap = |t| -> Vec<f64> {
        w.artifacts(t)
            .iter()
            .map(|(_, a)| a.metrics.extrapolation_mse.unwrap_or(f64::INFINITY))
            .collect()
    };
    let (h, v) = (extrap(Trainer::Homotopy), extrap(Trainer::Vanilla));
    let pass = h.len() == 3 && v.len() == 3 && h.iter().zip(&v).all(|(a, b)| *a <= 0.1 * b);
    outcome(
        pass,
        format!("50-point extrapolation MSE homotopy [{}] vs vanilla [{}]", fmt_list(&h), fmt_list(&v)),
    )
}

fn length_ablation() -> Outcome {
    let config = ExperimentConfig {
        spans: vec![(0.0, 3.1), (0.0, 6.1), (0.0, 9.1)],
        ..desk_config(ExperimentKind::LengthAblation, train(150, 0.05, 2.0, 10), "ablation")
    };
    let report = run_experiment(&config).unwrap();
    let mut pass = true;
    let mut detail = Vec::new();
    let mut vanilla_fails_longest = false;
    for (i, w) in report.windows.iter().enumerate() {
        let floor = w.summary.noise_floor.unwrap();
        let (h, v) = (interp(w, Trainer::Homotopy), interp(w, Trainer::Vanilla));
        let ratio = |x: &[f64]| x.iter().map(|m| m / floor).fold(0.0, f64::max);
        pass &= h.len() == 3 && h.iter().all(|m| *m <= 5.0 * floor);
        if i + 1 == report.windows.len() {
            vanilla_fails_longest = v.iter().any(|m| *m > 5.0 * floor);
        }
        detail.push(format!(
            "[0,{:.1}] worst homotopy {:.2}× floor, worst vanilla {:.1}×",
            w.summary.span.1,
            ratio(&h),
            ratio(&v)
        ));
    }
    outcome(pass && vanilla_fails_longest, detail.join("; "))
}

fn first_extremum(x: &[f64]) -> Option<(usize, f64)> {
    (1..x.len() - 1)
        .find(|&i| (x[i] - x[i - 1]) * (x[i + 1] - x[i]) <= 0.0)
        .map(|i| (i, x[i].signum()))
}

fn lorenz_blackbox() -> Outcome {
    let start = Instant::now();
    let config = ExperimentConfig {
        dataset: DatasetConfig {
            span: Some((0.0, 3.0)),
            dt: Some(0.1),
            noise: Some(NoiseSpec::Absolute { sigma: 0.25 }),
            ..Default::default()
        },
        ..desk_config(ExperimentKind::LorenzBlackbox, train(250, 0.01, 10.0, 4), "lorenz")
    };
    let report = run_experiment(&config).unwrap();
    let w = &report.windows[0];
    let (h, v) = (interp(w, Trainer::Homotopy), interp(w, Trainer::Vanilla));
    let paired = h.len() == 3 && v.len() == 3 && h.iter().zip(&v).all(|(a, b)| a < b);

    let clean = w.data.train.clean.as_ref().unwrap();
    let truth = first_extremum(&clean.iter().map(|u| u[0]).collect::<Vec<_>>()).unwrap();
    let mut tracks = true;
    for (_, a) in w.artifacts(Trainer::Homotopy) {
        let pred = predict(&a.checkpoint, &w.data.train.times, &w.data.train.measurements[0]).unwrap();
        let got = first_extremum(&pred.iter().map(|u| u[0]).collect::<Vec<_>>());
        tracks &= got.is_some_and(|(i, s)| s == truth.1 && i.abs_diff(truth.0) <= 2);
    }
    outcome(
        paired && tracks && within(start.elapsed(), 2700),
        format!(
            "interpolation MSE homotopy [{}] vs vanilla [{}]; first x extremum at index {} tracked: {tracks}",
            fmt_list(&h),
            fmt_list(&v),
            truth.0
        ),
    )
}

fn double_pendulum() -> Outcome {
    let csv = std::env::var_os("HOMOTOPY_NODE_PENDULUM_CSV").map(PathBuf::from);
    let source = if csv.is_some() { "measured" } else { "simulated" };
    let config = ExperimentConfig {
        dataset: DatasetConfig {
            train_points: csv.as_ref().map(|_| 100),
            csv,
            ..Default::default()
        },
        ..desk_config(ExperimentKind::DoublePendulumBlackbox, train(200, 0.05, 5.0, 4), "pendulum")
    };
    let report = run_experiment(&config).unwrap();
    let w = &report.windows[0];
    let (h, v) = (interp(w, Trainer::Homotopy), interp(w, Trainer::Vanilla));
    let pass = w.data.train_points == 100
        && w.data.horizon() == 50
        && h.len() == 3
        && v.len() == 3
        && h.iter().zip(&v).all(|(a, b)| a < b);
    outcome(
        pass,
        format!("{source} data; interpolation MSE homotopy [{}] vs vanilla [{}]", fmt_list(&h), fmt_list(&v)),
    )
}
