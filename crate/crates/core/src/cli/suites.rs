//! Property suites behind `pinning verify`.

use rand::Rng;
use serde::Serialize;

use crate::environment::{good_cell_fraction_bound, Environment, Geometry};
use crate::error::Result;
use crate::gff::{self, GffInstance};
use crate::oracle;
use crate::psi::{self, GapVector, PsiKind};
use crate::rng::{self, Purpose};
use crate::solver::free_energy_integral_check;
use crate::walk::WalkKernel;

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub passed: bool,
}

impl Check {
    fn at_most(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        Check {
            name: name.into(),
            value,
            threshold,
            passed: value <= threshold,
        }
    }

    fn at_least(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        Check {
            name: name.into(),
            value,
            threshold,
            passed: value >= threshold,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteReport {
    pub suite: &'static str,
    pub seed: u64,
    pub passed: bool,
    pub checks: Vec<Check>,
}

impl SuiteReport {
    fn new(suite: &'static str, seed: u64, checks: Vec<Check>) -> Self {
        SuiteReport {
            suite,
            seed,
            passed: checks.iter().all(|c| c.passed),
            checks,
        }
    }
}

/// Solver against path enumeration on every environment with `N <= 8`.
pub fn dp_oracle(seed: u64) -> Result<SuiteReport> {
    let etas = [0.5, std::f64::consts::LN_2, 2.0];
    let mut checks = Vec::new();
    for d in [1, 2] {
        let worst = oracle::compare_with_solver(8, &etas, &[d])?;
        checks.push(Check::at_most(format!("worst relative error, d = {d}"), worst, 1e-10));
    }
    Ok(SuiteReport::new("dp-oracle", seed, checks))
}

/// `log Z` against the integral of the expected contact count.
pub fn identity(seed: u64) -> Result<SuiteReport> {
    let env = Environment::periodic(200, Geometry::Segment, 4)?;
    let mut checks = Vec::new();
    for d in [1, 2] {
        let kernel = WalkKernel::lazy(d)?;
        let residuals: Vec<f64> = [10_000, 20_000, 40_000]
            .iter()
            .map(|&nodes| free_energy_integral_check(&env, kernel, 2.0, nodes).map(|c| c.residual))
            .collect::<Result<_>>()?;
        checks.push(Check::at_most(format!("residual at 10^4 nodes, d = {d}"), residuals[0], 1e-6));
        checks.push(Check::at_least(
            format!("residual reduction over two doublings, d = {d}"),
            residuals[0] / residuals[2].max(f64::MIN_POSITIVE),
            4.0,
        ));
    }
    Ok(SuiteReport::new("identity", seed, checks))
}

/// Midpoint convexity of Ψ and Ψ_per, minimiser location and the Ψ chain.
pub fn psi_suite(seed: u64, trials: usize) -> Result<SuiteReport> {
    let mut checks = Vec::new();
    let mut violations = 0;
    for m in 2..=8usize {
        for r in 1..=4usize.min(m) {
            for (kind, tag) in [(PsiKind::Psi, 0), (PsiKind::PsiPer, 1)] {
                let mut rng = rng::substream(seed, Purpose::Psi, (m * 8 + r) as u64, tag);
                violations += psi::check_convexity(kind, m, r, (m + 1) as f64, trials, &mut rng)?;
            }
        }
    }
    checks.push(Check::at_most("midpoint convexity violations", violations as f64, 0.0));

    let mut worst: f64 = 0.0;
    for m in 2..=6usize {
        for r in 2..=m {
            let mut rng = rng::substream(seed, Purpose::Psi, 100 + m as u64, r as u64);
            for _ in 0..10 {
                let start = GapVector::random_on_simplex(m, (m + 1) as f64, &mut rng)?;
                let min = psi::minimize_psi_per(r, &start, 1e-6)?;
                worst = worst.max(min.point.distance_to_uniform());
            }
        }
    }
    checks.push(Check::at_most("minimiser distance to uniform", worst, 1e-6));

    let mut chain_failures = 0;
    let mut rng = rng::substream(seed, Purpose::Psi, 200, 0);
    for _ in 0..1000 {
        let m = rng.random_range(2..=10usize);
        let r = rng.random_range(1..=m.min(4));
        let g = GapVector::random_on_simplex(m, (m + 1) as f64, &mut rng)?;
        if !psi::compare_psi_psiper(&g, r)?.holds(1e-12) {
            chain_failures += 1;
        }
    }
    checks.push(Check::at_most("Ψ >= Ψ_per >= Ψ_per(uniform) failures", chain_failures as f64, 0.0));

    let mut jensen_failures = 0;
    let mut rng = rng::substream(seed, Purpose::Psi, 300, 0);
    for _ in 0..1000 {
        let n = rng.random_range(12..=60usize);
        let m = rng.random_range(1..=12usize);
        let sites = rand::seq::index::sample(&mut rng, n, m).into_vec();
        let mut sites: Vec<usize> = sites.into_iter().map(|s| s + 1).collect();
        sites.sort_unstable();
        let r = rng.random_range(1..=m);
        if !psi::jensen_gap_bound(&sites, r, n)?.holds() {
            jensen_failures += 1;
        }
    }
    checks.push(Check::at_most("gap-product bound failures", jensen_failures as f64, 0.0));
    Ok(SuiteReport::new("psi", seed, checks))
}

/// η-derivative identity, the single-site ratio, and ratio-constant stability.
pub fn gff_suite(seed: u64) -> Result<SuiteReport> {
    let mut checks = Vec::new();
    let mut worst: f64 = 0.0;
    for n in 1..=3 {
        let env = Environment::constant(Geometry::Square, n, true)?;
        for eta in [0.5, 1.0, 2.0] {
            let h = 1e-4;
            let inst = GffInstance::new(env.clone(), eta)?;
            let up = gff::exact_expansion_small(&inst.with_eta(eta + h)?)?.log_ratio;
            let down = gff::exact_expansion_small(&inst.with_eta(eta - h)?)?.log_ratio;
            let derivative = (up - down) / (2.0 * h);
            let expected = gff::exact_expansion_small(&inst)?.expected_pinned / eta;
            worst = worst.max((derivative - expected).abs());
        }
    }
    checks.push(Check::at_most("η-derivative identity error", worst, 1e-6));

    let single = gff::ratio_bound_check(1, (1, 1))?.ratio;
    checks.push(Check::at_most(
        "single-site ratio minus sqrt(2/π)",
        (single - (2.0 / std::f64::consts::PI).sqrt()).abs(),
        1e-12,
    ));

    let constants: Vec<f64> = [4, 8, 12]
        .iter()
        .map(|&n| gff::empirical_ratio_constant(n))
        .collect::<Result<_>>()?;
    let spread = constants.iter().copied().fold(0.0, f64::max)
        / constants.iter().copied().fold(f64::INFINITY, f64::min);
    checks.push(Check::at_most("ratio constant spread over N = 4, 8, 12", spread, 2.0));
    Ok(SuiteReport::new("gff", seed, checks))
}

/// Random square field with overall density above `delta`. Odd draws are
/// homogeneous Bernoulli fields; even draws fill each `k x k` cell either
/// completely, not at all, or just below the cell threshold `rho`.
pub fn random_dense_field<R: Rng + ?Sized>(
    rng: &mut R,
    n: usize,
    k: usize,
    delta: f64,
    rho: f64,
) -> Result<Environment> {
    loop {
        let env = if rng.random_bool(0.5) {
            Environment::bernoulli(n, Geometry::Square, rng.random_range(delta..1.0), rng.random())?
        } else {
            let per_side = n / k;
            let full = rng.random_range(0.2..0.8);
            let below = (rho * (k * k) as f64).ceil() as usize - 1;
            let mut bits = vec![false; n * n];
            for cy in 0..per_side {
                for cx in 0..per_side {
                    let ones = if rng.random_bool(full) { k * k } else { below.min(rng.random_range(0..=k * k)) };
                    let picks = rand::seq::index::sample(rng, k * k, ones);
                    for p in picks {
                        let (x, y) = (cx * k + p % k, cy * k + p / k);
                        bits[y * n + x] = true;
                    }
                }
            }
            Environment::from_bits(Geometry::Square, n, bits)?
        };
        if env.density() > delta {
            return Ok(env);
        }
    }
}

/// Good-cell fraction against `rho / (1 + rho)` on random fields of density above 1/2.
pub fn cells(seed: u64, fields: usize) -> Result<SuiteReport> {
    let (n, k, delta, rho) = (60, 6, 0.5, 0.2);
    let bound = good_cell_fraction_bound(rho);
    let mut rng = rng::substream(seed, Purpose::Verify, 1, 0);
    let mut violations = 0;
    let mut worst = f64::INFINITY;
    for _ in 0..fields {
        let env = random_dense_field(&mut rng, n, k, delta, rho)?;
        let cells = env.analyze_cells(k, rho, rho / (2.0 + rho))?;
        worst = worst.min(cells.good_cell_fraction);
        if cells.good_cell_fraction <= bound {
            violations += 1;
        }
    }
    let checks = vec![
        Check::at_most("good-cell fraction violations", violations as f64, 0.0),
        Check::at_least("smallest good-cell fraction", worst, bound),
    ];
    Ok(SuiteReport::new("cells", seed, checks))
}
