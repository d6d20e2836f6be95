mod common;

use std::time::Instant;

use common::*;
use tvvar::estimate::FitOptions;
use tvvar::io::{Provenance, ResultBundle};
use tvvar::irf::{gradient_blocks, identify, irf_point, CompanionForm, Scheme};
use tvvar::kernel::{autoconvolution, cb_by_refinement};
use tvvar::linalg::{
    commutation, duplication, elimination, strict_upper_selector, unvech, vec, vech, vech_len, Matrix, Vector,
};
use tvvar::mc::{run_table1, run_table2, run_table3, Table1Config, Table2Config, Table3Config};
use tvvar::rng::stream;
use tvvar::sim::{simulate_panel, DgpSpec, StabilityPolicy};
use tvvar::stability::{bootstrap_test, BootstrapOptions, RestrictionSpec};
use tvvar::{KernelSpec, TvVarFit};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn in_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(f)
}

fn bundle<T: serde::Serialize>(command: &str, value: T) -> String {
    ResultBundle {
        provenance: Provenance::new(command, "acceptance".into(), 0),
        result: value,
    }
    .to_json()
}

fn lag_selection(k: &KernelSpec) -> Outcome {
    let cfg = Table1Config {
        reps: 200,
        t_list: vec![200, 800],
        ..Default::default()
    };
    let r = run_table1(&cfg, k).unwrap();
    let freq = |t| r.aggregates.iter().find(|row| row.t == t).unwrap().equal;
    let (f200, f800) = (freq(200), freq(800));
    outcome(
        f200 >= 0.92 && f800 >= 0.98,
        format!("P(p=2) T=200 {f200:.3} (>= 0.92), T=800 {f800:.3} (>= 0.98)"),
    )
}

fn estimation_accuracy(k: &KernelSpec) -> Outcome {
    let cfg = Table2Config {
        reps: 200,
        t_list: vec![200, 400, 800],
        ..Default::default()
    };
    let r = run_table2(&cfg, k).unwrap();
    let cell = |t, q: &str| r.aggregates.iter().find(|c| c.t == t && c.quantity == q).unwrap();
    let a400 = cell(400, "A").rmse;
    let o400 = cell(400, "Omega").rmse;
    let mut decreasing = true;
    let mut paths = Vec::new();
    for q in ["A", "Omega", "B1", "B5"] {
        let v: Vec<f64> = [200, 400, 800].iter().map(|&t| cell(t, q).rmse).collect();
        decreasing &= v[0] > v[1] && v[1] > v[2];
        paths.push(format!("{q} {:.3}/{:.3}/{:.3}", v[0], v[1], v[2]));
    }
    let cov = cell(800, "A").coverage.unwrap_or(f64::NAN);
    let pass = (0.30..=0.50).contains(&a400) && (0.55..=0.90).contains(&o400) && decreasing && (0.88..=0.96).contains(&cov);
    outcome(
        pass,
        format!(
            "T=400 RMSE A {a400:.3} in [0.30, 0.50], Omega {o400:.3} in [0.55, 0.90]; decreasing {decreasing} ({}); coverage A T=800 {cov:.3} in [0.88, 0.96]",
            paths.join(", ")
        ),
    )
}

fn size_and_power(k: &KernelSpec) -> Outcome {
    let cfg = Table3Config {
        reps: 200,
        t_list: vec![400, 800],
        alphas: vec![0.6, 1.0],
        bootstrap: 199,
        ..Default::default()
    };
    let r = run_table3(&cfg, k).unwrap();
    let rate = |t, a, b| {
        r.aggregates
            .iter()
            .find(|c| c.t == t && c.alpha == a && c.b == b)
            .unwrap()
            .reject_05
    };
    let mut pass = true;
    let mut parts = Vec::new();
    for a in [0.6, 1.0] {
        let s = rate(400, a, 0.0);
        pass &= (0.02..=0.10).contains(&s);
        parts.push(format!("size T=400 a={a} {s:.3}"));
    }
    for t in [400, 800] {
        for a in [0.6, 1.0] {
            let (r0, r2, r4) = (rate(t, a, 0.0), rate(t, a, 2.0), rate(t, a, 4.0));
            pass &= r0 < r2 && r2 < r4;
            parts.push(format!("T={t} a={a} {r0:.3} < {r2:.3} < {r4:.3}"));
        }
    }
    let power = rate(800, 0.6, 4.0);
    pass &= power >= 0.55;
    parts.push(format!("power b=4 T=800 a=0.6 {power:.3} (>= 0.55)"));
    outcome(pass, parts.join("; "))
}

fn gradient_oracle() -> Outcome {
    let mut worst = 0.0_f64;
    let mut cases = 0;
    for scheme in [Scheme::ShortRun, Scheme::LongRun] {
        for d in [2, 3] {
            for p in [1, 2] {
                for s in 0..50u64 {
                    let mut r = rng(10_000 + 1_000 * d as u64 + 100 * p as u64 + s);
                    let blocks = stable_blocks(&mut r, d, p, 0.8);
                    let omega = random_pd(&mut r, d);
                    let id = identify(scheme, &blocks, &omega, 0.5).unwrap();
                    let psi = id.comp.vma(5);
                    let g = gradient_blocks(&id, &psi, 5).unwrap();
                    for j in [0usize, 1, 2, 5] {
                        let (ga, go) = fd_gradients(scheme, &blocks, &omega, j, 1e-6);
                        let c1 = g[j].c1.columns(d, d * d * p).into_owned();
                        worst = worst.max(rel_err(&c1, &ga)).max(rel_err(&g[j].c2, &go));
                        cases += 1;
                    }
                }
            }
        }
    }
    outcome(worst < 1e-4, format!("{cases} cases, worst relative error {worst:.2e} (< 1e-4)"))
}

fn vma_equivalence() -> Outcome {
    let mut worst_vma = 0.0_f64;
    let mut worst_shock = 0.0_f64;
    for s in 0..100u64 {
        let mut r = rng(20_000 + s);
        let d = 1 + (s % 3) as usize;
        let p = 1 + ((s / 3) % 4) as usize;
        let blocks = stable_blocks(&mut r, d, p, 0.9);
        let a = CompanionForm::new(&blocks).unwrap().vma(20);
        let b = vma_recursion(&blocks, 20);
        for j in 0..=20 {
            worst_vma = worst_vma.max((&a[j] - &b[j]).abs().max());
        }
        let omega = random_pd(&mut r, d);
        let id = identify(Scheme::ShortRun, &blocks, &omega, 0.5).unwrap();
        for k in 0..d {
            let path = unit_shock_path(&blocks, &id.impact, k, 20);
            for (n, x) in path.iter().enumerate() {
                let bn = &a[n] * &id.impact;
                for (row, v) in x.iter().enumerate() {
                    worst_shock = worst_shock.max((v - bn[(row, k)]).abs());
                }
            }
        }
    }
    outcome(
        worst_vma < 1e-10 && worst_shock < 1e-10,
        format!("100 systems, j <= 20: companion vs recursion {worst_vma:.1e}, unit shocks {worst_shock:.1e} (< 1e-10)"),
    )
}

fn identification(k: &KernelSpec) -> Outcome {
    let dgp = DgpSpec::macro3();
    let panel = simulate_panel(&dgp, 400, 2, &mut stream(61, &[1]), StabilityPolicy::Enforce).unwrap();
    let fit = TvVarFit::fit(&panel, FitOptions { p: 2, h: 0.3 }, k).unwrap();
    let mut worst_omega = 0.0_f64;
    let mut worst_q = 0.0_f64;
    let mut points = 0;
    for gp in &fit.points {
        let blocks = gp.coef.lag_blocks();
        for scheme in [Scheme::ShortRun, Scheme::LongRun] {
            let id = identify(scheme, &blocks, &gp.omega, gp.tau).unwrap();
            let back = &id.impact * id.impact.transpose();
            worst_omega = worst_omega.max((back - &gp.omega).abs().max() / gp.omega.abs().max());
            if let Some(b) = &id.long_run {
                let qb = strict_upper_selector(3) * vec(b);
                worst_q = worst_q.max(qb.abs().max());
            }
        }
        points += 1;
    }
    let mut worst_zero = 0.0_f64;
    for s in 0..20u64 {
        let mut r = rng(30_000 + s);
        let d = 2 + (s % 3) as usize;
        let omega = random_pd(&mut r, d);
        let mut gp = fit.points[0].clone();
        gp.coef.coef = Matrix::zeros(d, 1 + 2 * d);
        gp.coef.deriv = Matrix::zeros(d, 1 + 2 * d);
        gp.omega = omega;
        let nv = 2 * d * d + d + vech_len(d);
        let g = normal_matrix(&mut r, nv, nv);
        let v = &g * g.transpose();
        let a = irf_point(Scheme::ShortRun, &gp, Some(&v), 8, 400, 0.3).unwrap();
        let b = irf_point(Scheme::LongRun, &gp, Some(&v), 8, 400, 0.3).unwrap();
        for j in 0..=8 {
            worst_zero = worst_zero
                .max((&a.responses[j] - &b.responses[j]).abs().max())
                .max((&a.gradients[j].c2 - &b.gradients[j].c2).abs().max());
        }
    }
    outcome(
        worst_omega < 1e-10 && worst_q < 1e-12 && worst_zero < 1e-12,
        format!(
            "{points} grid points x 2 schemes: omega reconstruction {worst_omega:.1e} (< 1e-10), Q vec B {worst_q:.1e} (< 1e-12); zero lags schemes differ by {worst_zero:.1e} (< 1e-12)"
        ),
    )
}

fn kernel_constants(k: &KernelSpec) -> Outcome {
    let c2 = k.c2();
    let v0 = k.v0();
    let v2 = k.moment(2, true).unwrap();
    let kf = |u: f64| k.eval(u);
    let (cb, change) = cb_by_refinement(&kf);
    let (cb_again, _) = cb_by_refinement(&kf);
    let closed = 167.0 / 770.0;
    let at1 = autoconvolution(&kf, 1.0);
    let pass = (c2 - 0.2).abs() < 1e-9
        && (v0 - 0.6).abs() < 1e-9
        && (v2 - 3.0 / 35.0).abs() < 1e-9
        && change < 1e-8
        && (cb - closed).abs() < 1e-8
        && cb == cb_again
        && (k.cb() - closed).abs() < 1e-8;
    outcome(
        pass,
        format!(
            "c2 {c2:.12}, v0 {v0:.12}, v2 {v2:.12}, C_B {cb:.12} (last change {change:.1e}, closed form {closed:.12}), K*K(1) {at1:.6}"
        ),
    )
}

fn determinism(k: &KernelSpec) -> Outcome {
    let t1 = Table1Config {
        reps: 6,
        t_list: vec![200],
        ..Default::default()
    };
    let t2 = Table2Config {
        reps: 6,
        t_list: vec![200],
        ..Default::default()
    };
    let t3 = Table3Config {
        reps: 6,
        t_list: vec![400],
        alphas: vec![0.6],
        bootstrap: 39,
        ..Default::default()
    };
    let dgp = DgpSpec::eq43(4.0, DgpSpec::local_rate(300, 0.35));
    let panel = simulate_panel(&dgp, 300, 2, &mut stream(5, &[1]), StabilityPolicy::Enforce).unwrap();
    let spec = RestrictionSpec::named("A1", 2, 2).unwrap();
    let opts = BootstrapOptions {
        replications: 49,
        seed: 9,
        ..Default::default()
    };
    let dir = tempfile::tempdir().unwrap();
    let run = |n: usize| {
        let texts = in_pool(n, || {
            vec![
                bundle("table1", run_table1(&t1, k).unwrap()),
                bundle("table2", run_table2(&t2, k).unwrap()),
                bundle("table3", run_table3(&t3, k).unwrap()),
                bundle("stability", bootstrap_test(&panel, 2, 0.35, &spec, k, &opts).unwrap()),
            ]
        });
        texts
            .iter()
            .enumerate()
            .map(|(i, text)| {
                let path = dir.path().join(format!("w{n}_{i}.json"));
                std::fs::write(&path, text).unwrap();
                std::fs::read(&path).unwrap()
            })
            .collect::<Vec<_>>()
    };
    let one = run(1);
    let mut pass = true;
    for n in [2, 4] {
        pass &= run(n) == one;
    }
    let bytes: usize = one.iter().map(Vec::len).sum();
    outcome(pass, format!("4 result files, {bytes} bytes, identical for 1, 2 and 4 workers"))
}

fn basis(rows: usize, cols: usize, i: usize, j: usize) -> Matrix {
    let mut e = Matrix::zeros(rows, cols);
    e[(i, j)] = 1.0;
    e
}

fn structured_operators() -> Outcome {
    let mut failures = 0;
    let mut checks = 0;
    for m in 1..=6 {
        for n in 1..=6 {
            let kmn = commutation(m, n);
            for i in 0..m {
                for j in 0..n {
                    let e = basis(m, n, i, j);
                    failures += (&kmn * vec(&e) != vec(&e.transpose())) as usize;
                    checks += 1;
                }
            }
            failures += (&kmn * commutation(n, m) != Matrix::identity(m * n, m * n)) as usize;
        }
    }
    for d in 1..=6 {
        let dd = duplication(d);
        let ld = elimination(d);
        failures += (&ld * &dd != Matrix::identity(vech_len(d), vech_len(d))) as usize;
        for i in 0..d {
            for j in 0..d {
                let e = basis(d, d, i, j);
                let s = &e + e.transpose();
                failures += (&dd * vech(&s).unwrap() != vec(&s)) as usize;
                let lower: Vector = vech_of_lower(&e);
                failures += (&ld * vec(&e) != lower) as usize;
                checks += 2;
            }
        }
        for r in 0..vech_len(d) {
            let mut v = Vector::zeros(vech_len(d));
            v[r] = 1.0;
            failures += (vech(&unvech(&v, d)).unwrap() != v) as usize;
            checks += 1;
        }
        let kdd = commutation(d, d);
        let nd = (Matrix::identity(d * d, d * d) + &kdd) * 0.5;
        failures += (&dd * &ld * &nd != nd) as usize;
    }
    outcome(failures == 0, format!("{checks} basis checks plus product identities, {failures} mismatches"))
}

/// `vech` of the lower triangle of `e`, read directly.
fn vech_of_lower(e: &Matrix) -> Vector {
    let d = e.nrows();
    let mut out = Vec::new();
    for j in 0..d {
        for i in j..d {
            out.push(e[(i, j)]);
        }
    }
    Vector::from_vec(out)
}

fn main() {
    let k = KernelSpec::epanechnikov();
    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome>)> = vec![
        ("1 lag selection", Box::new(|| lag_selection(&k))),
        ("2 estimation accuracy", Box::new(|| estimation_accuracy(&k))),
        ("3 test size and power", Box::new(|| size_and_power(&k))),
        ("4 gradient oracle", Box::new(gradient_oracle)),
        ("5 vma equivalence", Box::new(vma_equivalence)),
        ("6 identification invariants", Box::new(|| identification(&k))),
        ("7 kernel constants", Box::new(|| kernel_constants(&k))),
        ("8 determinism", Box::new(|| determinism(&k))),
        ("9 structured operators", Box::new(structured_operators)),
    ];
    let mut failed = 0;
    for (name, check) in &criteria {
        let start = Instant::now();
        let o = check();
        let tag = if o.pass { "PASS" } else { "FAIL" };
        println!("[{tag}] {name}: {} ({:.1}s)", o.detail, start.elapsed().as_secs_f64());
        failed += (!o.pass) as usize;
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
