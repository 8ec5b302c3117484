//! Acceptance suite: one line per criterion, non-zero exit on any failure.

use convexrisk::dynamics::{
    conditional_risk, dual_bound, dual_optimal_control, dynamic_inf_convolve, entropic_exact, CoefficientSpec,
    Lattice, LatticeProcess, PathTree, Tree,
};
use convexrisk::kernel::{
    biconjugate_check, inf_convolve, legendre_transform, moreau_yosida, symmetric_grid, Extension,
    GridConvexFunction,
};
use convexrisk::market::{superhedge_price, Constraint, Instrument, InstrumentSet, ProbSpace};
use convexrisk::risk::{axiom_check, evaluate, penalty, subdifferential_measure, RiskMeasureSpec as S};
use convexrisk::transfer::{borch_closed_form, solve_transfer, TransferProblem};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

struct Verdict {
    passed: bool,
    detail: String,
}

fn verdict(passed: bool, detail: impl Into<String>) -> Verdict {
    Verdict { passed, detail: detail.into() }
}

fn random_space(rng: &mut ChaCha8Rng, n: usize) -> ProbSpace {
    let w: Vec<f64> = (0..n).map(|_| rng.gen_range(0.2..1.0)).collect();
    let s: f64 = w.iter().sum();
    ProbSpace::from_probs(w.iter().map(|v| v / s).collect()).unwrap()
}

fn random_x(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-scale..scale)).collect()
}

fn sup_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn borch() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let (mut worst_rel, mut worst_f) = (0.0f64, 0.0f64);
    for t in 0..20 {
        let n = [2, 4, 8][t % 3];
        let space = random_space(&mut rng, n);
        let (ga, gb) = (rng.gen_range(0.2..5.0), rng.gen_range(0.2..5.0));
        let xa = random_x(&mut rng, n, 3.0);
        let xb = random_x(&mut rng, n, 3.0);
        let p = TransferProblem {
            rho_a: S::entropic(ga),
            rho_b: S::entropic(gb),
            x_a: xa.clone(),
            x_b: xb.clone(),
            instruments_a: None,
            instruments_b: None,
        };
        let sol = match solve_transfer(&space, &p) {
            Ok(s) => s,
            Err(e) => return verdict(false, format!("trial {t}: {e}")),
        };
        let total: Vec<f64> = xa.iter().zip(&xb).map(|(a, b)| a + b).collect();
        let oracle = evaluate(&S::entropic(ga + gb), &space, &total).unwrap();
        worst_rel = worst_rel.max((sol.value - oracle).abs() / oracle.abs().max(f64::MIN_POSITIVE));
        let closed = borch_closed_form(ga, gb, &xa, &xb, &S::entropic(1.0)).unwrap().f_star;
        let m = space.expectation(&closed);
        let closed: Vec<f64> = closed.iter().map(|v| v - m).collect();
        worst_f = worst_f.max(sup_dist(&closed, &sol.f_star));
    }
    verdict(
        worst_rel <= 1e-6 && worst_f <= 1e-4,
        format!("max relative value error {worst_rel:.2e}, max F* distance {worst_f:.2e}"),
    )
}

fn static_duality() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let two = ProbSpace::from_probs(vec![0.7, 0.3]).unwrap();
    let cone = S::SetGenerated {
        instruments: Some(vec![Instrument::new("C", vec![2.0, 0.0], 1.0)]),
        constraint: Some(Constraint::Cone),
    };
    let mut worst = 0.0f64;
    for (name, spec) in [
        ("entropic", S::entropic(1.3)),
        ("worst_case", S::WorstCase),
        ("avar", S::AVaR { lambda: 0.3 }),
        ("set_generated", cone),
    ] {
        for _ in 0..50 {
            let space = if name == "set_generated" { two.clone() } else { random_space(&mut rng, 5) };
            let x = random_x(&mut rng, space.len(), 4.0);
            let v = evaluate(&spec, &space, &x).unwrap();
            let q = subdifferential_measure(&spec, &space, &x).unwrap();
            let Some(a) = penalty(&spec, &space, &q).unwrap().value.value() else {
                return verdict(false, format!("{name}: infinite penalty at the subdifferential measure"));
            };
            worst = worst.max((v - (-q.expectation(&x) - a)).abs());
        }
    }
    verdict(worst <= 1e-8, format!("max Fenchel residual {worst:.2e}"))
}

/// Solves `a x = b` for square `a`; `None` when singular.
fn solve_square(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let m = b.len();
    for c in 0..m {
        let p = (c..m).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs()))?;
        if a[p][c].abs() < 1e-10 {
            return None;
        }
        a.swap(c, p);
        b.swap(c, p);
        for r in 0..m {
            if r != c {
                let f = a[r][c] / a[c][c];
                for k in c..m {
                    a[r][k] -= f * a[c][k];
                }
                b[r] -= f * b[c];
            }
        }
    }
    Some((0..m).map(|i| b[i] / a[i][i]).collect())
}

fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    (0u32..1 << n)
        .filter(|m| m.count_ones() as usize == k)
        .map(|m| (0..n).filter(|i| m >> i & 1 == 1).collect())
        .collect()
}

/// `max E_Q[-X]` over vertices of `{q >= 0, sum q = 1, E_q[C_j] = price_j}`.
fn brute_force_superhedge(instruments: &[Instrument], x: &[f64]) -> Option<f64> {
    let n = x.len();
    let m = instruments.len() + 1;
    let mut best: Option<f64> = None;
    for s in subsets(n, m) {
        let mut a = vec![s.iter().map(|_| 1.0).collect::<Vec<_>>()];
        let mut b = vec![1.0];
        for ins in instruments {
            a.push(s.iter().map(|&i| ins.payoff[i]).collect());
            b.push(ins.bid);
        }
        if let Some(q) = solve_square(a, b) {
            if q.iter().all(|&v| v >= -1e-12) {
                let val: f64 = s.iter().zip(&q).map(|(&i, qi)| -qi * x[i]).sum();
                best = Some(best.map_or(val, |b: f64| b.max(val)));
            }
        }
    }
    best
}

fn superhedging() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut worst = 0.0f64;
    for t in 0..10 {
        let n = rng.gen_range(3..=6);
        let d = rng.gen_range(1..=3usize.min(n - 1));
        let space = random_space(&mut rng, n);
        // prices from an interior martingale measure rule out arbitrage
        let qstar = random_space(&mut rng, n);
        let instruments: Vec<Instrument> = (0..d)
            .map(|j| {
                let payoff: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..3.0)).collect();
                let price = qstar.expectation(&payoff);
                Instrument::new(format!("I{j}"), payoff, price)
            })
            .collect();
        let set = InstrumentSet::new(instruments.clone(), Constraint::Cone).unwrap();
        let x = random_x(&mut rng, n, 5.0);
        let lp = match superhedge_price(&space, &x, &set) {
            Ok(s) => s.price,
            Err(e) => return verdict(false, format!("market {t}: {e}")),
        };
        let Some(oracle) = brute_force_superhedge(&instruments, &x) else {
            return verdict(false, format!("market {t}: no vertex found"));
        };
        worst = worst.max((lp - oracle).abs());
    }
    verdict(worst <= 1e-7, format!("max |LP - vertex enumeration| {worst:.2e}"))
}

fn axiom_suites() -> Verdict {
    let space = ProbSpace::from_probs(vec![0.05, 0.1, 0.15, 0.2, 0.5]).unwrap();
    let mut notes = Vec::new();
    let mut ok = true;
    let var = axiom_check(&S::VaR { eps: 0.1 }, &space, 500, 7).unwrap();
    if var.convexity.passed || var.convexity.counterexample.is_none() {
        ok = false;
        notes.push("VaR convexity counterexample missed".to_string());
    }
    for (name, spec, homogeneous) in [
        ("entropic", S::entropic(0.8), false),
        ("worst_case", S::WorstCase, true),
        ("avar", S::AVaR { lambda: 0.25 }, true),
    ] {
        let r = axiom_check(&spec, &space, 500, 11).unwrap();
        let core = r.convexity.passed && r.monotonicity.passed && r.cash_invariance.passed;
        let cash_exact = r.cash_invariance.max_violation <= 1e-12;
        let hom = if homogeneous {
            r.homogeneity.passed && r.homogeneity.max_violation <= 1e-12
        } else {
            !r.homogeneity.passed
        };
        if !(core && cash_exact && hom) {
            ok = false;
            notes.push(format!(
                "{name}: core {core}, cash violation {:.1e}, homogeneity as expected {hom}",
                r.cash_invariance.max_violation
            ));
        }
    }
    let detail = if ok {
        "VaR counterexample found; entropic/worst_case/avar as expected over 500 trials".to_string()
    } else {
        notes.join("; ")
    };
    verdict(ok, detail)
}

fn dilation_laws() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let mut comp = 0.0f64;
    let mut ladder_ok = true;
    let specs = [S::entropic(0.7), S::AVaR { lambda: 0.4 }, S::WorstCase, S::CVaR { lambda: 0.6 }];
    for _ in 0..20 {
        let space = random_space(&mut rng, 5);
        let x = random_x(&mut rng, 5, 3.0);
        for spec in &specs {
            let (g1, g2) = (rng.gen_range(0.1..10.0), rng.gen_range(0.1..10.0));
            let nested = evaluate(&S::dilated(S::dilated(spec.clone(), g1), g2), &space, &x).unwrap();
            let direct = evaluate(&S::dilated(spec.clone(), g1 * g2), &space, &x).unwrap();
            comp = comp.max((nested - direct).abs());
            let rho0 = evaluate(spec, &space, &[0.0; 5]).unwrap();
            let ladder: Vec<f64> = (1..=100)
                .map(|i| {
                    let g = 0.1 * i as f64;
                    evaluate(&S::dilated(spec.clone(), g), &space, &x).unwrap() - g * rho0
                })
                .collect();
            ladder_ok &= ladder.windows(2).all(|w| w[1] <= w[0] + 1e-12 * (1.0 + w[0].abs()));
        }
    }
    // the small-gamma gap is gamma ln(1 / P(argmin X)), so the argmin carries mass >= 1/e
    let mut lim = 0.0f64;
    for _ in 0..20 {
        let x = random_x(&mut rng, 2, 1.0);
        let space = ProbSpace::from_probs(vec![0.5, 0.5]).unwrap();
        let hi = evaluate(&S::entropic(1e3), &space, &x).unwrap();
        let lo = evaluate(&S::entropic(1e-3), &space, &x).unwrap();
        let worst = x.iter().map(|v| -v).fold(f64::NEG_INFINITY, f64::max);
        lim = lim.max((hi + space.expectation(&x)).abs()).max((lo - worst).abs());
    }
    verdict(
        comp <= 1e-10 && ladder_ok && lim <= 1e-3,
        format!("composition {comp:.2e}, ladders monotone {ladder_ok}, limit error {lim:.2e}"),
    )
}

fn huber(z: f64, k: f64) -> f64 {
    if z.abs() <= 1.0 / k {
        0.5 * k * z * z
    } else {
        z.abs() - 0.5 / k
    }
}

/// `max |f - f**|` on the finite part of an indicator.
fn indicator_biconjugate(grid: &[f64], a: f64, b: f64) -> f64 {
    let f = GridConvexFunction::indicator(grid.to_vec(), a, b).unwrap();
    let dual = symmetric_grid(50.0, 2001);
    let polar = legendre_transform(&f, &dual).unwrap();
    let bi = legendre_transform(&polar, grid).unwrap();
    grid.iter()
        .zip(bi.values())
        .filter(|(z, _)| **z > a && **z < b)
        .map(|(_, v)| v.abs())
        .fold(0.0, f64::max)
}

fn convex_kernel() -> Verdict {
    let grid = symmetric_grid(5.0, 2001);
    let quad = GridConvexFunction::from_fn(grid.clone(), Extension::Affine, |z| 0.5 * z * z).unwrap();
    let abs = GridConvexFunction::from_fn(grid.clone(), Extension::Affine, f64::abs).unwrap();
    let hub = GridConvexFunction::from_fn(grid.clone(), Extension::Affine, |z| huber(z, 2.0)).unwrap();
    let mut gap = 0.0f64;
    for f in [&quad, &abs, &hub] {
        gap = gap.max(biconjugate_check(f).unwrap());
    }
    gap = gap.max(indicator_biconjugate(&grid, -1.0, 2.0));

    // conjugates add under inf-convolution, up to two dual cells of shift
    let fb = GridConvexFunction::from_fn(grid.clone(), Extension::Affine, |z| z.abs() + 0.25 * z * z).unwrap();
    let h = inf_convolve(&quad, &fb).unwrap().value;
    let dual = symmetric_grid(2.0, 401);
    let gh = legendre_transform(&h, &dual).unwrap();
    let ga = legendre_transform(&quad, &dual).unwrap();
    let gb = legendre_transform(&fb, &dual).unwrap();
    let mut add = 0.0f64;
    for j in 0..dual.len() {
        let local = (j.saturating_sub(2)..(j + 3).min(dual.len()))
            .map(|i| (gh.values()[j] - ga.values()[i] - gb.values()[i]).abs())
            .fold(f64::INFINITY, f64::min);
        add = add.max(local);
    }

    let k = 1.5;
    let my = moreau_yosida(&abs, k).unwrap();
    let my_err = grid
        .iter()
        .zip(my.values())
        .skip(1)
        .take(grid.len() - 2)
        .map(|(&z, v)| (v - huber(z, k)).abs())
        .fold(0.0, f64::max);
    verdict(
        gap <= 1e-3 && add <= 1e-3 && my_err <= 1e-6,
        format!("biconjugate gap {gap:.2e}, polar additivity {add:.2e}, Moreau-Yosida {my_err:.2e}"),
    )
}

fn tanh_terminal(t: &dyn Tree, shift: f64) -> Vec<f64> {
    t.terminal_brownian().iter().map(|w| (w + shift).tanh()).collect()
}

fn bsde_oracle() -> Verdict {
    let coef = CoefficientSpec::Quadratic { gamma: 1.0 };
    let mut errors = Vec::new();
    for n in [25, 50, 100, 200] {
        let l = Lattice::new(n, 1.0).unwrap();
        let xi = tanh_terminal(&l, 0.0);
        let y = conditional_risk(&coef, &xi, &l).unwrap().root();
        let e = entropic_exact(1.0, &xi, &l).unwrap().root();
        errors.push((y - e).abs());
    }
    let monotone = errors.windows(2).all(|w| w[1] <= w[0]);
    let list: Vec<String> = errors.iter().map(|e| format!("{e:.2e}")).collect();
    verdict(monotone && errors[3] <= 5e-3, format!("errors over N=25..200: {}", list.join(", ")))
}

fn dynamic_duality() -> Verdict {
    let gamma = 1.0;
    let coef = CoefficientSpec::Quadratic { gamma };
    let l = Lattice::new(100, 1.0).unwrap();
    let xi = tanh_terminal(&l, 0.0);
    let sol = conditional_risk(&coef, &xi, &l).unwrap();
    let y0 = sol.root();
    let sup = xi.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let tol = 5.0 * l.dt() * (1.0 + sup);
    let mu_bar = dual_optimal_control(&coef, &xi, &l).unwrap();
    let z_over_gamma = LatticeProcess::from_fn(mu_bar.role, &l, 100, |k, i| sol.z.at(k, i) / gamma);
    let control_err = sup_dist(
        &mu_bar.values.concat(),
        &z_over_gamma.values.concat(),
    );
    let eq = (dual_bound(&coef, &xi, &z_over_gamma, &l).unwrap() - y0).abs();
    let mut rng = ChaCha8Rng::seed_from_u64(808);
    let limit = 0.95 / l.dt().sqrt();
    let mut excess = f64::NEG_INFINITY;
    for t in 0..20 {
        let mu = LatticeProcess::from_fn(mu_bar.role, &l, 100, |k, i| {
            let v = if t % 2 == 0 { z_over_gamma.at(k, i) + rng.gen_range(-1.0..1.0) } else { rng.gen_range(-3.0..3.0) };
            v.clamp(-limit, limit)
        });
        excess = excess.max(dual_bound(&coef, &xi, &mu, &l).unwrap() - y0);
    }
    verdict(
        excess <= tol && eq <= tol && control_err <= 1e-12,
        format!("max bound - Y0 {excess:.2e}, |bound(Z/gamma) - Y0| {eq:.2e}, tolerance {tol:.2e}"),
    )
}

fn decomposition(a: &CoefficientSpec, b: &CoefficientSpec, t: &dyn Tree, xi: &[f64]) -> (f64, f64, Vec<f64>) {
    let d = dynamic_inf_convolve(a, b, xi, t).unwrap();
    let rest: Vec<f64> = xi.iter().zip(&d.f_star).map(|(x, f)| x - f).collect();
    let ra = conditional_risk(a, &rest, t).unwrap().root();
    let rb = conditional_risk(b, &d.f_star, t).unwrap().root();
    (d.value, d.value - ra - rb, d.f_star)
}

fn dynamic_infconv() -> Verdict {
    let (qa, qb) = (CoefficientSpec::Quadratic { gamma: 1.0 }, CoefficientSpec::Quadratic { gamma: 2.0 });
    let l = Lattice::new(100, 1.0).unwrap();
    let xi = tanh_terminal(&l, 0.0);
    let (value, res_q, _) = decomposition(&qa, &qb, &l, &xi);
    // quadratics convolve to the quadratic with summed tolerance
    let pooled = conditional_risk(&CoefficientSpec::Quadratic { gamma: 3.0 }, &xi, &l).unwrap().root();
    let pooled_err = (value - pooled).abs();

    let (la, lb) = (CoefficientSpec::Linear { k: 1.0 }, CoefficientSpec::Quadratic { gamma: 1.0 });
    let p = PathTree::new(8, 1.0).unwrap();
    let xi = tanh_terminal(&p, 0.2);
    let (value, res_l, _) = decomposition(&la, &lb, &p, &xi);
    let mut rng = ChaCha8Rng::seed_from_u64(909);
    let mut audit = f64::NEG_INFINITY;
    for _ in 0..20 {
        let f = random_x(&mut rng, xi.len(), 1.0);
        let rest: Vec<f64> = xi.iter().zip(&f).map(|(x, f)| x - f).collect();
        let split = conditional_risk(&la, &rest, &p).unwrap().root() + conditional_risk(&lb, &f, &p).unwrap().root();
        audit = audit.max(value - split);
    }
    verdict(
        res_q.abs() <= 1e-9 && pooled_err <= 1e-9 && res_l.abs() <= 1e-8 && audit <= 1e-8,
        format!(
            "quadratic residual {:.2e} (pooled {pooled_err:.2e}), path-tree residual {:.2e}, audit max {audit:.2e}",
            res_q.abs(),
            res_l.abs()
        ),
    )
}

fn determinism() -> Verdict {
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let runs = [
        ("check", ""),
        ("transfer", "borch.json"),
        ("dual", "bsde_entropic.json"),
        ("bsde", "dynamic_infconv.json"),
        ("price", "static_measures.json"),
        ("hedge", "two_state_market.json"),
    ];
    for (cmd, file) in runs {
        let path = fixtures.join(file);
        let once = || {
            Command::new(env!("CARGO_BIN_EXE_convexrisk"))
                .args([cmd, "--scenario", path.to_str().unwrap(), "--seed", "42"])
                .output()
                .expect("binary runs")
        };
        let (a, b) = (once(), once());
        if a.stdout != b.stdout || a.stdout.is_empty() {
            return verdict(false, format!("`{cmd}` output differs between runs"));
        }
    }
    verdict(true, format!("{} commands byte-identical across two runs", runs.len()))
}

fn main() {
    let criteria: [(&str, fn() -> Verdict, Option<Duration>); 10] = [
        ("1 borch quota-sharing", borch, Some(Duration::from_secs(10))),
        ("2 static duality", static_duality, Some(Duration::from_secs(5))),
        ("3 superhedging duality", superhedging, Some(Duration::from_secs(10))),
        ("4 axiom suites", axiom_suites, None),
        ("5 dilation laws", dilation_laws, None),
        ("6 convex kernel", convex_kernel, None),
        ("7 bsde vs entropic oracle", bsde_oracle, Some(Duration::from_secs(2))),
        ("8 dynamic duality", dynamic_duality, None),
        ("9 dynamic inf-convolution", dynamic_infconv, None),
        ("10 determinism", determinism, None),
    ];
    let mut failures = 0;
    for (name, f, budget) in criteria {
        let start = Instant::now();
        let v = f();
        let elapsed = start.elapsed();
        let in_time = budget.is_none_or(|b| elapsed <= b);
        let ok = v.passed && in_time;
        if !ok {
            failures += 1;
        }
        let timing = match budget {
            Some(b) => format!("{:.2}s of {}s", elapsed.as_secs_f64(), b.as_secs()),
            None => format!("{:.2}s", elapsed.as_secs_f64()),
        };
        println!("{} criterion {name}: {} [{timing}]", if ok { "PASS" } else { "FAIL" }, v.detail);
    }
    println!("{} of 10 criteria passed", 10 - failures);
    if failures > 0 {
        std::process::exit(1);
    }
}
