//! Acceptance gate. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any failed.

use std::path::Path;
use std::time::{Duration, Instant};

use composite_opt::harness::config::{DatasetSource, ExperimentConfig, InitMode, LossFamily};
use composite_opt::harness::{self, feasibility};
use composite_opt::network::{self, EstimateOptions};
use composite_opt::subproblem::{self, SubproblemInput};
use composite_opt::trainer::{self, lr_schedule};
use composite_opt::{parallel, Activation, Algorithm, Dataset, DMatrix, DVector, LossKind, MlpSpec, TrainConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

type Check = Result<String, String>;
type Criterion<'a> = (&'static str, Box<dyn Fn() -> Check + 'a>);

fn normal_vec(rng: &mut ChaCha8Rng, len: usize, scale: f64) -> DVector<f64> {
    DVector::from_fn(len, |_, _| {
        let z: f64 = StandardNormal.sample(rng);
        scale * z
    })
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit_s: f64) -> Result<(), String> {
    ensure(elapsed.as_secs_f64() < limit_s, || format!("took {:.2}s, limit {limit_s}s", elapsed.as_secs_f64()))
}

fn random_net(rng: &mut ChaCha8Rng, max_sizes: &[usize], max_d: usize, seed: u64) -> MlpSpec {
    loop {
        let depth = rng.random_range(2..=max_sizes.len());
        let mut sizes: Vec<usize> = (0..depth).map(|k| rng.random_range(1..=max_sizes[k])).collect();
        *sizes.last_mut().unwrap() = rng.random_range(1..=*max_sizes.last().unwrap());
        let acts = (0..depth - 2).map(|_| Activation::ALL[rng.random_range(0..4)]).collect();
        let spec = MlpSpec::new(sizes, acts, seed, 1.0).unwrap();
        if spec.param_count() <= max_d {
            return spec;
        }
    }
}

fn criterion_1() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst = 0.0f64;
    let mut seen = [false; 4];
    for k in 0..20 {
        let mut spec = random_net(&mut rng, &[10, 16, 8, 4], 300, k);
        // cycle the activation so every kind appears
        let act = Activation::ALL[k as usize % 4];
        if spec.activations.is_empty() {
            spec = MlpSpec::new(vec![spec.layer_sizes[0], 6, spec.layer_sizes[1]], vec![act], k, 1.0).unwrap();
        } else {
            spec.activations[0] = act;
        }
        for a in &spec.activations {
            seen[Activation::ALL.iter().position(|b| b == a).unwrap()] = true;
        }
        let w = spec.init_weights();
        let x = normal_vec(&mut rng, spec.input_dim(), 1.0);
        let jac = network::jacobian(&spec, &w, &x).map_err(|e| e.to_string())?;
        let step = 1e-5;
        for p in 0..spec.param_count() {
            let mut plus = w.clone();
            let mut minus = w.clone();
            plus.data[p] += step;
            minus.data[p] -= step;
            let fd = (network::forward(&spec, &plus, &x).unwrap() - network::forward(&spec, &minus, &x).unwrap()) / (2.0 * step);
            for j in 0..spec.output_dim() {
                let a = jac[(j, p)];
                worst = worst.max((a - fd[j]).abs() / a.abs().max(1.0));
            }
        }
    }
    ensure(seen.iter().all(|&s| s), || "not every activation exercised".into())?;
    ensure(worst < 1e-5, || format!("max relative error {worst:.3e}"))?;
    within(start.elapsed(), 10.0)?;
    Ok(format!("max rel err {worst:.2e} over 20 nets"))
}

fn criterion_2() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut worst_convex = f64::NEG_INFINITY;
    let mut worst_lip = 0.0f64;
    let mut worst_ce_grad = f64::NEG_INFINITY;
    let mut worst_self = f64::NEG_INFINITY;
    for k in 0..1000 {
        let c = rng.random_range(2..=6);
        let scale = [0.1, 1.0, 10.0][k % 3];
        let losses = [
            LossKind::squared(normal_vec(&mut rng, c, scale)),
            LossKind::cross_entropy(rng.random_range(0..c), c).unwrap(),
        ];
        for loss in &losses {
            let a = normal_vec(&mut rng, c, scale);
            let b = normal_vec(&mut rng, c, scale);
            let theta: f64 = rng.random();
            let mid = &a * theta + &b * (1.0 - theta);
            let (fa, fb, fm) = (loss.value(&a).unwrap(), loss.value(&b).unwrap(), loss.value(&mid).unwrap());
            worst_convex = worst_convex.max(fm - (theta * fa + (1.0 - theta) * fb));

            let l = loss.meta().smoothness;
            let ratio = (loss.grad(&a).unwrap() - loss.grad(&b).unwrap()).norm() / ((&a - &b).norm() * l);
            worst_lip = worst_lip.max(ratio);

            let g = loss.grad(&a).unwrap();
            worst_self = worst_self.max(g.norm_squared() - 2.0 * l * (fa - loss.meta().optimal_value));
            if !loss.is_squared() {
                worst_ce_grad = worst_ce_grad.max(g.norm_squared() - c as f64);
            }
        }
    }
    ensure(worst_convex <= 1e-10, || format!("convexity violated by {worst_convex:.3e}"))?;
    ensure(worst_lip <= 1.0 + 1e-8, || format!("gradient Lipschitz ratio {worst_lip}"))?;
    ensure(worst_ce_grad <= 0.0, || format!("CE gradient norm² exceeds c by {worst_ce_grad:.3e}"))?;
    ensure(worst_self <= 1e-8, || format!("self-bounding violated by {worst_self:.3e}"))?;
    within(start.elapsed(), 5.0)?;
    Ok(format!("lipschitz ratio max {worst_lip:.6}, convexity slack {worst_convex:.1e}"))
}

/// `A = (1/n) Σ η² HᵢᵀHᵢ + reg·I` and `b`, entry by entry.
fn naive_system(input: &SubproblemInput) -> (DMatrix<f64>, DVector<f64>) {
    let d = input.dim();
    let n = input.n() as f64;
    let mut a = DMatrix::identity(d, d) * input.reg;
    let mut b = DVector::zeros(d);
    for (i, h) in input.jacobians.per_sample.iter().enumerate() {
        for p in 0..d {
            for q in 0..d {
                let mut s = 0.0;
                for j in 0..h.nrows() {
                    s += h[(j, p)] * h[(j, q)];
                }
                a[(p, q)] += input.eta * input.eta * s / n;
            }
            let mut s = 0.0;
            for j in 0..h.nrows() {
                s += h[(j, p)] * input.grads[i][j];
            }
            b[p] += input.alphas[i] * input.eta * s / n;
        }
    }
    (a, b)
}

fn criterion_3() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut worst_gd = 0.0f64;
    let mut worst_res = 0.0f64;
    let mut worst_oracle = 0.0f64;
    for k in 0..50 {
        let n = rng.random_range(1..=8);
        let c = rng.random_range(1..=3);
        let d = rng.random_range(1..=64);
        let eps: f64 = [0.3, 0.1, 0.03][k % 3];
        let eta = eps.sqrt();
        let jac: Vec<DMatrix<f64>> = (0..n)
            .map(|_| DMatrix::from_fn(c, d, |_, _| StandardNormal.sample(&mut rng)))
            .collect();
        let grads = (0..n).map(|_| normal_vec(&mut rng, c, 1.0)).collect();
        let alphas = (0..n).map(|_| rng.random_range(0.01..0.3)).collect();
        let input = SubproblemInput::from_parts(jac, grads, eta, alphas, eps * eps).map_err(|e| e.to_string())?;
        let system = subproblem::assemble(&input).map_err(|e| e.to_string())?;
        let v_cf = subproblem::solve_closed_form(&system).map_err(|e| e.to_string())?;
        let (v_gd, cert) = subproblem::solve_inner_gd(&input, &system, eps, 1_000_000).map_err(|e| e.to_string())?;
        ensure(cert.satisfied, || format!("instance {k}: certificate not satisfied"))?;
        worst_gd = worst_gd.max((&v_gd - &v_cf).norm() / eps);

        let res = (&system.a * &v_cf - &system.b).norm();
        let scale = system.a.norm() * v_cf.norm() + system.b.norm();
        worst_res = worst_res.max(res / scale);

        let (a, b) = naive_system(&input);
        let inv = a.try_inverse().ok_or("oracle matrix singular")?;
        let v_oracle = inv * b;
        worst_oracle = worst_oracle.max((&v_cf - &v_oracle).amax() / v_oracle.amax().max(1.0));
    }
    ensure(worst_gd <= 1.0, || format!("‖v_gd − v_cf‖ reached {worst_gd:.3}·tol"))?;
    ensure(worst_res <= 1e-10, || format!("relative residual {worst_res:.3e}"))?;
    ensure(worst_oracle <= 1e-9, || format!("dense-inverse mismatch {worst_oracle:.3e}"))?;
    within(start.elapsed(), 20.0)?;
    Ok(format!("max ‖v_gd−v_cf‖/tol {worst_gd:.3}, residual {worst_res:.1e}, oracle {worst_oracle:.1e}"))
}

fn criterion_4() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut worst = f64::NEG_INFINITY;
    let mut max_ratio = 0.0f64;
    for k in 0..100 {
        let m = rng.random_range(1..=4);
        let hidden = rng.random_range(2..=8);
        let c = rng.random_range(1..=3);
        let layers = if k % 2 == 0 { vec![m, hidden, c] } else { vec![m, hidden, hidden, c] };
        let acts = vec![Activation::Sigmoid; layers.len() - 2];
        let spec = MlpSpec::new(layers, acts, k, 1.0).unwrap();
        let w = spec.init_weights();
        let v = normal_vec(&mut rng, spec.param_count(), 1.0);
        let eta = rng.random_range(0.01..0.3) / v.norm().max(1e-12);
        let x = normal_vec(&mut rng, m, 1.0);
        let probes = [w.clone(), w.step(eta / 2.0, &v), w.step(eta, &v)];
        let opts = EstimateOptions { seed: k, ..EstimateOptions::default() };
        let g_est = network::hessian_bound(&spec, &probes, std::slice::from_ref(&x), &opts).map_err(|e| e.to_string())?;
        let bound = 0.5 * eta * eta * v.norm_squared() * g_est;
        let residual = network::taylor_residual(&spec, &w, &v, eta, &x).map_err(|e| e.to_string())?;
        for r in residual.iter() {
            worst = worst.max(r.abs() - bound - 1e-9);
            if bound > 0.0 {
                max_ratio = max_ratio.max(r.abs() / bound);
            }
        }
    }
    ensure(worst <= 0.0, || format!("residual exceeds bound by {worst:.3e}"))?;

    // a single affine layer is linear in w, so the expansion is exact
    for k in 0..10u64 {
        let spec = MlpSpec::new(vec![3, 2], vec![], k, 1.0).unwrap();
        let w = spec.init_weights();
        let v = normal_vec(&mut rng, spec.param_count(), 1.0);
        let x = normal_vec(&mut rng, 3, 1.0);
        let r = network::taylor_residual(&spec, &w, &v, 0.3, &x).map_err(|e| e.to_string())?;
        ensure(r.amax() <= 1e-14, || format!("linear net residual {:.3e}", r.amax()))?;
    }
    within(start.elapsed(), 10.0)?;
    Ok(format!("max |ε|/bound {max_ratio:.3} over 100 triples"))
}

fn criterion_5() -> Check {
    let start = Instant::now();
    let mut checked = 0;
    for &eps in &[1.0, 0.5, 0.1, 0.05, 0.01] {
        for &beta in &[0.5, 1.0, 2.0] {
            let cfg = TrainConfig::new(eps, beta, 1.0, 0.2, Algorithm::ClosedForm, 0);
            for t in 0..=cfg.horizon() {
                let a = lr_schedule(&cfg, t, 1.0).map_err(|e| e.to_string())?;
                ensure(a <= cfg.alpha + 1e-12, || format!("eps={eps} beta={beta} t={t}: α_t = {a}"))?;
                checked += 1;
            }
        }
    }
    within(start.elapsed(), 1.0)?;
    Ok(format!("{checked} schedule values within cap"))
}

fn desk_config(out: &Path, algorithm: Algorithm) -> ExperimentConfig {
    let mut train = TrainConfig::new(0.05, 2.0, 1.0, 0.2, algorithm, 17);
    train.inner_tol = Some(0.05);
    ExperimentConfig {
        network: MlpSpec::new(vec![4, 12, 12, 2], vec![Activation::Tanh, Activation::Tanh], 23, 1.0).unwrap(),
        init: InitMode::Gaussian,
        loss: LossFamily::Squared,
        train,
        dataset_source: DatasetSource::RandomRegression { n: 4, m: 4, c: 2, seed: 32 },
        output_path: out.to_path_buf(),
        baseline: None,
    }
}

fn criterion_6(root: &Path) -> Check {
    let start = Instant::now();
    let cf_cfg = desk_config(&root.join("cf"), Algorithm::ClosedForm);
    let d = cf_cfg.network.param_count();
    ensure(d >= 200, || format!("d = {d}"))?;
    let cf = harness::run_experiment(&cf_cfg).map_err(|e| e.to_string())?;
    let first = cf.train.records.first().ok_or("no iterations")?.gap_upper;
    ensure(cf.summary.iterations_run == 40, || format!("{} iterations", cf.summary.iterations_run))?;
    ensure(first >= 0.5, || format!("initial gap {first:.4}"))?;
    ensure(cf.train.final_gap < 1e-2, || format!("ClosedForm final gap {:.4e}", cf.train.final_gap))?;
    let audit = cf.summary.audit.ok_or("audit missing")?;
    ensure(audit.satisfied, || format!("audit {:.4e} > {:.4e}", audit.lhs_avg_gap, audit.rhs_bound))?;

    let gd = harness::run_experiment(&desk_config(&root.join("gd"), Algorithm::InnerGd)).map_err(|e| e.to_string())?;
    ensure(gd.success(), || format!("InnerGd terminated with {:?}", gd.train.termination))?;
    ensure(gd.train.certificates.len() == 40, || format!("{} certificates", gd.train.certificates.len()))?;
    let ratio = gd.train.final_gap / cf.train.final_gap;
    ensure((0.5..=2.0).contains(&ratio), || format!("InnerGd/ClosedForm final gap ratio {ratio:.3}"))?;
    let gd_audit = gd.summary.audit.ok_or("InnerGd audit missing")?;
    ensure(gd_audit.satisfied, || "InnerGd audit not satisfied".into())?;
    within(start.elapsed(), 60.0)?;
    Ok(format!(
        "d={d}, gap {first:.3} -> {:.2e} (CF) / {:.2e} (GD), avg gap {:.3e} <= bound {:.3e}",
        cf.train.final_gap, gd.train.final_gap, audit.lhs_avg_gap, audit.rhs_bound
    ))
}

fn criterion_7() -> Check {
    let spec = MlpSpec::new(vec![3, 7, 2], vec![Activation::Softplus], 5, 1.0).unwrap();
    let w0 = spec.init_weights();
    let mut rng = ChaCha8Rng::seed_from_u64(707);
    let inputs: Vec<_> = (0..3).map(|_| normal_vec(&mut rng, 3, 1.0)).collect();
    let targets = feasibility::interpolating_targets(&spec, &w0, &inputs).map_err(|e| e.to_string())?;
    let data = Dataset::new(inputs, targets).map_err(|e| e.to_string())?;
    let mut total = 0;
    for alg in [Algorithm::ClosedForm, Algorithm::InnerGd] {
        let cfg = TrainConfig::new(0.1, 1.0, 1.0, 0.2, alg, 0);
        let out = trainer::run(&cfg, &spec, &data, &w0).map_err(|e| e.to_string())?;
        ensure(out.records.len() == cfg.horizon(), || "run stopped early".into())?;
        ensure(out.records.iter().all(|r| r.v_norm_sq == 0.0), || "non-zero direction".into())?;
        let same = out.weights.as_slice().iter().zip(w0.as_slice()).all(|(a, b)| a.to_bits() == b.to_bits());
        ensure(same, || format!("{alg:?}: weights moved"))?;
        total += out.records.len();
    }
    Ok(format!("{total} iterations with v = 0 and bit-identical weights"))
}

fn criterion_8() -> Check {
    let start = Instant::now();
    let rows = harness::q_norm_scaling_experiment(&[0.1, 0.05, 0.025], 8).map_err(|e| e.to_string())?;
    let ratios: Vec<f64> = rows.windows(2).map(|p| p[1].q_norm / p[0].q_norm).collect();
    ensure(ratios.iter().all(|r| (1.2..=1.7).contains(r)), || format!("ratios {ratios:?}"))?;
    within(start.elapsed(), 5.0)?;
    Ok(format!("ratios {:.4}, {:.4}", ratios[0], ratios[1]))
}

fn criterion_9() -> Check {
    let cfg = desk_config(Path::new("unused"), Algorithm::ClosedForm);
    let data = harness::load_dataset(&cfg.dataset_source, cfg.loss, Some(2)).map_err(|e| e.to_string())?;
    let w0 = cfg.network.init_weights();
    let alpha0 = lr_schedule(&cfg.train, 0, 1.0).map_err(|e| e.to_string())?;
    let sys = harness::interpolation_feasibility(&cfg.network, &w0, &data, cfg.train.eta(), &[alpha0; 4]).map_err(|e| e.to_string())?;
    ensure(sys.numeric_rank == 8, || format!("rank {}", sys.numeric_rank))?;
    let rel = sys.residual_min / sys.b_stack.norm();
    ensure(rel < 1e-8, || format!("relative residual {rel:.3e}"))?;
    Ok(format!("rank 8 of 8 rows, relative residual {rel:.1e}"))
}

fn criterion_10(root: &Path) -> Check {
    let single = root.join("single");
    let multi = root.join("multi");
    let a_cfg = desk_config(&single, Algorithm::ClosedForm);
    let b_cfg = desk_config(&multi, Algorithm::ClosedForm);
    parallel::with_threads(Some(1), || harness::run_experiment(&a_cfg)).map_err(|e| e.to_string())?;
    // more workers than this machine may have cores, so work really is split
    let workers = std::thread::available_parallelism().map_or(4, |n| n.get().max(4));
    parallel::with_threads(Some(workers), || harness::run_experiment(&b_cfg)).map_err(|e| e.to_string())?;
    let a = std::fs::read(single.join("metrics.csv")).map_err(|e| e.to_string())?;
    let b = std::fs::read(multi.join("metrics.csv")).map_err(|e| e.to_string())?;
    ensure(a == b, || "metrics.csv differs between thread counts".into())?;
    Ok(format!("{} bytes identical (1 thread vs {workers})", a.len()))
}

fn main() {
    let tmp = tempfile::tempdir().expect("temp dir");
    let criteria: Vec<Criterion> = vec![
        ("jacobian vs finite differences", Box::new(criterion_1)),
        ("loss properties", Box::new(criterion_2)),
        ("subproblem solver equivalence", Box::new(criterion_3)),
        ("taylor residual bound", Box::new(criterion_4)),
        ("schedule cap", Box::new(criterion_5)),
        ("desk-scale convergence and audit", Box::new(|| criterion_6(&tmp.path().join("c6")))),
        ("fixed point", Box::new(criterion_7)),
        ("Q-norm scaling", Box::new(criterion_8)),
        ("interpolation feasibility", Box::new(criterion_9)),
        ("determinism across thread counts", Box::new(|| criterion_10(&tmp.path().join("c10")))),
    ];
    let mut failed = 0;
    for (k, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = std::panic::catch_unwind(std::panic::AssertUnwindSafe(check)).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("criterion {:>2} PASS  {name} ({secs:.2}s): {detail}", k + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name} ({secs:.2}s): {why}", k + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
