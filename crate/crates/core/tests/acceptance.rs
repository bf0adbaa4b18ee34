//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::process::ExitCode;

use gtr_core::density::{cellular_approximation, Cellular1D, Density, LinearRamp};
use gtr_core::montecarlo::estimate;
use gtr_core::rng::substream;
use gtr_core::robustness::{dirac_limit_demo, robustness_sweep, ControlGeometry, SweepSettings};
use gtr_core::universal::{
    base_case_check, binomial_identity_a, binomial_identity_b, recurrence_step_check, transition_probability_1d,
    universal_average_1d, universal_average_abstract, ElasticConfiguration1D, Target,
};
use gtr_core::{BarycentricState, CellularMask, ExactProbability};
use rand_distr::{Distribution, Exp1};

struct Outcome {
    pass: bool,
    detail: String,
}

fn born_rule() -> Outcome {
    let mut rng = substream(0xB0, 0);
    let mut worst: f64 = 0.0;
    for n in 2..=6 {
        for k in 0..10u64 {
            let w: Vec<f64> = (0..n).map(|_| Exp1.sample(&mut rng)).collect();
            let x = BarycentricState::from_weights(&w).unwrap();
            let est = estimate(&x, &Density::uniform(n).unwrap(), 1_000_000, 100 * n as u64 + k).unwrap();
            for (p, q) in est.probabilities.iter().zip(x.coords()) {
                worst = worst.max((p - q).abs());
            }
        }
    }
    Outcome { pass: worst < 0.004, detail: format!("max |P_hat - x_i| = {worst:.6} over 50 states (< 0.004)") }
}

fn universal_equals_uniform() -> Outcome {
    let mut checked = 0;
    let mut failures = Vec::new();
    for n in 2..=16usize {
        for i in 1..n {
            let avg = universal_average_1d(n, i, Target::LeftEnd).unwrap();
            if avg != ExactProbability::from_ratio((n - i) as u64, n as u64).unwrap() {
                failures.push(format!("n={n} i={i} got {avg}"));
            }
            checked += 1;
        }
    }
    Outcome { pass: failures.is_empty(), detail: format!("{checked} (n, i) pairs exact, failures: {failures:?}") }
}

fn two_cell_example() -> Outcome {
    let p = |mask: &str| {
        let cfg = ElasticConfiguration1D::new(mask.parse::<CellularMask>().unwrap(), 1).unwrap();
        transition_probability_1d(&cfg, Target::LeftEnd)
    };
    let r = |a, b| ExactProbability::from_ratio(a, b).unwrap();
    let (bb, ub, bu) = (p("bb"), p("ub"), p("bu"));
    let avg = universal_average_1d(2, 1, Target::LeftEnd).unwrap();
    let pass = bb == r(1, 2) && ub == r(1, 1) && bu == r(0, 1) && avg == r(1, 2);
    Outcome { pass, detail: format!("bb={bb} ub={ub} bu={bu} average={avg}") }
}

fn binomial_identities() -> Outcome {
    let bad: Vec<usize> =
        (0..=60).filter(|&n| !(binomial_identity_a(n).holds && binomial_identity_b(n).holds)).collect();
    Outcome { pass: bad.is_empty(), detail: format!("n = 0..=60, failing n: {bad:?}") }
}

fn recurrence_intermediates() -> Outcome {
    let mut failures = Vec::new();
    let mut conventions = std::collections::BTreeSet::new();
    for n in 2..=12 {
        let b = base_case_check(n).unwrap();
        if !(b.first_unbreakable.equal && b.first_breakable.equal && b.first_breakable_closed.equal && b.total.equal) {
            failures.push(format!("base n={n}"));
        }
        for i in 1..n.saturating_sub(1) {
            let c = recurrence_step_check(n, i).unwrap();
            conventions.insert(c.index_conventions.matches.clone());
            if !c.all_match {
                failures.push(format!("step n={n} i={i}"));
            }
        }
    }
    let pass = failures.is_empty() && conventions.len() == 1 && conventions.contains("n-1");
    Outcome { pass, detail: format!("n <= 12, failures: {failures:?}, matching -1/k upper limit: {conventions:?}") }
}

fn abstract_linearization() -> Outcome {
    let mut failures = Vec::new();
    for nc in 1..=16usize {
        for i in 0..=nc {
            let avg = universal_average_abstract(nc, i).unwrap();
            if avg != ExactProbability::from_ratio((nc - i) as u64, nc as u64).unwrap() {
                failures.push(format!("n_c={nc} i={i}"));
            }
        }
    }
    let fig = universal_average_abstract(16, 10).unwrap();
    let pass = failures.is_empty() && fig == ExactProbability::from_ratio(3, 8).unwrap();
    Outcome { pass, detail: format!("n_c <= 16 exact, (16, 10) -> {fig}, failures: {failures:?}") }
}

/// Largest gap between the cellular collapse probability and `x1^2` over a
/// grid of particle positions.
fn ramp_error(elastic: &Cellular1D) -> f64 {
    (1..1000).map(|j| j as f64 / 1000.0).map(|x1| (elastic.mass_below(x1) - x1 * x1).abs()).fold(0.0, f64::max)
}

fn cellular_convergence() -> Outcome {
    let coarse = ramp_error(&cellular_approximation(&LinearRamp, 8, 8).unwrap());
    let fine = ramp_error(&cellular_approximation(&LinearRamp, 64, 64).unwrap());
    Outcome {
        pass: fine < 0.02 && fine < coarse,
        detail: format!("max error (8,8) = {coarse:.6}, (64,64) = {fine:.6}"),
    }
}

fn robustness_scaling() -> Outcome {
    let delta = 0.01;
    // Two outcomes, exact region integrals.
    let x2 = BarycentricState::new(vec![0.3, 0.7]).unwrap();
    let g = ControlGeometry::VertexCorner;
    let tilde2 = g.epsilon_tilde(&x2, &x2.perturbed(&[delta, -delta]).unwrap(), 0);
    let grid2: Vec<f64> = std::iter::once(tilde2).chain((4..=10).map(|k| k as f64 / 10.0)).collect();
    let analytic = SweepSettings { n_samples: 0, seed: 0 };
    let r2 = robustness_sweep(&x2, &[delta, -delta], 0, g, &grid2, analytic).unwrap();
    let exact_ok = r2.rows.iter().all(|r| (r.analytic.unwrap() * r.epsilon - delta).abs() < 1e-12);

    // Three outcomes, paired Monte Carlo.
    let x3 = BarycentricState::new(vec![0.2, 0.4, 0.4]).unwrap();
    let dx3 = [delta, -delta, 0.0];
    let tilde3 = g.epsilon_tilde(&x3, &x3.perturbed(&dx3).unwrap(), 0);
    let grid3 = [tilde3, 0.5, 0.625, 0.75, 0.875, 1.0];
    let mc = SweepSettings { n_samples: 4_000_000, seed: 0x5eed };
    let r3 = robustness_sweep(&x3, &dx3, 0, g, &grid3, mc).unwrap();
    let mut worst_rel: f64 = 0.0;
    let mut worst_sigma: f64 = 0.0;
    for r in &r3.rows {
        let m = r.monte_carlo.unwrap();
        worst_rel = worst_rel.max((m * r.epsilon / delta - 1.0).abs());
        worst_sigma = worst_sigma.max((m - r.predicted).abs() / r.monte_carlo_se.unwrap());
    }
    Outcome {
        pass: exact_ok && worst_rel < 0.05 && worst_sigma < 3.0,
        detail: format!(
            "N=2 analytic exact: {exact_ok} (eps~ = {tilde2:.4}); N=3 MC eps~ = {tilde3:.4}, \
             max |eps*dP/dx - 1| = {worst_rel:.4}, max deviation = {worst_sigma:.2} sigma"
        ),
    }
}

fn dirac_limit() -> Outcome {
    let x = BarycentricState::centroid(3).unwrap();
    let centers = [
        BarycentricState::new(vec![0.1, 0.45, 0.45]).unwrap(),
        BarycentricState::new(vec![0.45, 0.45, 0.1]).unwrap(),
    ];
    let eps = [0.05, 0.01, 0.001];
    let report = dirac_limit_demo(&x, &centers, &eps, SweepSettings { n_samples: 1_000_000, seed: 0xD1 }).unwrap();
    let last = report.rows.last().unwrap();
    let mc_tv = gtr_core::robustness::total_variation(last.monte_carlo.as_ref().unwrap(), &report.limit);
    let split = report.limit == vec![0.5, 0.0, 0.5];
    Outcome {
        pass: split && last.total_variation < 0.01 && mc_tv < 0.01,
        detail: format!(
            "limit {:?}, eps = {}: TV = {:.2e} (analytic), {:.2e} (Monte Carlo)",
            report.limit, last.epsilon, last.total_variation, mc_tv
        ),
    }
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("Born rule under the uniform density", born_rule),
        ("universal average equals uniform, n <= 16", universal_equals_uniform),
        ("two-cell worked example", two_cell_example),
        ("binomial identities, n <= 60", binomial_identities),
        ("recurrence intermediates, n <= 12", recurrence_intermediates),
        ("multidimensional linearization", abstract_linearization),
        ("cellular approximation of a linear ramp", cellular_convergence),
        ("robustness scaling |dP| = |dx|/eps", robustness_scaling),
        ("Dirac limit with two centers", dirac_limit),
    ];
    let mut all = true;
    for (k, (name, check)) in criteria.iter().enumerate() {
        let o = check();
        all &= o.pass;
        println!("criterion {} [{}] {}: {}", k + 1, if o.pass { "PASS" } else { "FAIL" }, name, o.detail);
    }
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
