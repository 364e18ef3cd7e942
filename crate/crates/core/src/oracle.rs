//! Brute-force reference values.
//!
//! Nothing in here shares code with the solvers it checks: polymer
//! quantities are computed by summing over every step sequence of the walk,
//! the expansion over pinned sets by iterating every subset, and Ψ / Ψ_per
//! by a recursive enumerator written independently of [`crate::psi`].

use crate::environment::{Environment, Geometry};
use crate::error::{Error, Result};
use crate::solver::PinningInstance;
use crate::walk::{Dimension, Point, ReturnProbTable, WalkKernel};

pub const MAX_PATH_LENGTH_1D: usize = 12;
pub const MAX_PATH_LENGTH_2D: usize = 8;
pub const MAX_EXPANSION_SITES: usize = 22;

fn path_cap(kernel: &WalkKernel) -> usize {
    match kernel.dimension() {
        Dimension::One => MAX_PATH_LENGTH_1D,
        Dimension::Two => MAX_PATH_LENGTH_2D,
    }
}

#[derive(Debug, Clone)]
pub struct PolymerTruth {
    pub z: f64,
    /// `μ(X_{t_j} = 0)` for each contact site in order.
    pub contact_probs: Vec<f64>,
    pub expected_contacts: f64,
}

/// Sums `P_0(path) exp(η Σ_i 1{X_i = 0} ω_i)` over every step sequence of
/// length `N`.
pub fn enumerate_polymer(env: &Environment, kernel: &WalkKernel, eta: f64) -> Result<PolymerTruth> {
    env.require(Geometry::Segment)?;
    let n = env.n();
    if n > path_cap(kernel) {
        return Err(Error::TooLarge(format!(
            "path enumeration capped at N = {} for this dimension",
            path_cap(kernel)
        )));
    }
    let sites = env.contact_sites().0;
    let steps = kernel.steps();
    // Path probabilities are dyadic with at least 2^-32 resolution, so the
    // per-count sums below are exact; η enters only in the final combination.
    let mut mass = vec![0.0; n + 1];
    let mut at_site = vec![vec![0.0; sites.len()]; n + 1];
    let mut zeros = Vec::with_capacity(n);

    #[allow(clippy::too_many_arguments)]
    fn walk(
        i: usize,
        pos: Point,
        prob: f64,
        zeros: &mut Vec<bool>,
        env: &Environment,
        steps: &[(Point, f64)],
        sites: &[usize],
        mass: &mut [f64],
        at_site: &mut [Vec<f64>],
    ) {
        if i == env.n() {
            let count = (1..=env.n())
                .filter(|&k| zeros[k - 1] && env.get(k))
                .count();
            mass[count] += prob;
            for (j, &t) in sites.iter().enumerate() {
                if zeros[t - 1] {
                    at_site[count][j] += prob;
                }
            }
            return;
        }
        for &(s, p) in steps {
            let next = [pos[0] + s[0], pos[1] + s[1]];
            zeros.push(next == [0, 0]);
            walk(i + 1, next, prob * p, zeros, env, steps, sites, mass, at_site);
            zeros.pop();
        }
    }

    walk(0, [0, 0], 1.0, &mut zeros, env, &steps, &sites, &mut mass, &mut at_site);
    let boltzmann: Vec<f64> = (0..=n).map(|k| (eta * k as f64).exp()).collect();
    let z: f64 = mass.iter().zip(&boltzmann).map(|(m, b)| m * b).sum();
    let at_site: Vec<f64> = (0..sites.len())
        .map(|j| (0..=n).map(|k| at_site[k][j] * boltzmann[k]).sum())
        .collect();
    let contact_probs: Vec<f64> = at_site.iter().map(|a| a / z).collect();
    let expected_contacts = contact_probs.iter().sum();
    Ok(PolymerTruth {
        z,
        contact_probs,
        expected_contacts,
    })
}

/// Probability mass of every zero pattern `{i : X_i = 0}` of the free walk,
/// indexed by bitmask (bit `i - 1` for time `i`). Summing masses against
/// `exp(η |pattern ∩ ω|)` evaluates the polymer measure for every
/// environment of length `N` from one pass over the paths.
#[derive(Debug, Clone)]
pub struct ZeroPatternTable {
    n: usize,
    mass: Vec<f64>,
}

impl ZeroPatternTable {
    pub fn build(n: usize, kernel: &WalkKernel) -> Result<Self> {
        if n > path_cap(kernel) {
            return Err(Error::TooLarge(format!("zero patterns capped at N = {}", path_cap(kernel))));
        }
        let steps = kernel.steps();
        let mut mass = vec![0.0; 1 << n];
        fn walk(i: usize, n: usize, pos: Point, prob: f64, mask: usize, steps: &[(Point, f64)], mass: &mut [f64]) {
            if i == n {
                mass[mask] += prob;
                return;
            }
            for &(s, p) in steps {
                let next = [pos[0] + s[0], pos[1] + s[1]];
                let bit = if next == [0, 0] { 1 << i } else { 0 };
                walk(i + 1, n, next, prob * p, mask | bit, steps, mass);
            }
        }
        walk(0, n, [0, 0], 1.0, 0, &steps, &mut mass);
        Ok(ZeroPatternTable { n, mass })
    }

    pub fn total_mass(&self) -> f64 {
        self.mass.iter().sum()
    }

    /// Polymer quantities for the environment whose bit `i - 1` is ω_i.
    pub fn evaluate(&self, env_mask: usize, eta: f64) -> PolymerTruth {
        let sites: Vec<usize> = (0..self.n).filter(|b| env_mask >> b & 1 == 1).collect();
        let mut z = 0.0;
        let mut at_site = vec![0.0; sites.len()];
        for (pattern, &mass) in self.mass.iter().enumerate() {
            if mass == 0.0 {
                continue;
            }
            let hits = (pattern & env_mask).count_ones();
            let weight = mass * (eta * hits as f64).exp();
            z += weight;
            for (j, &b) in sites.iter().enumerate() {
                if pattern >> b & 1 == 1 {
                    at_site[j] += weight;
                }
            }
        }
        let contact_probs: Vec<f64> = at_site.iter().map(|a| a / z).collect();
        let expected_contacts = contact_probs.iter().sum();
        PolymerTruth {
            z,
            contact_probs,
            expected_contacts,
        }
    }
}

fn check_expansion_size(sites: &[usize]) -> Result<()> {
    if sites.len() > MAX_EXPANSION_SITES {
        return Err(Error::TooLarge(format!(
            "{} contact sites; subset enumeration capped at {MAX_EXPANSION_SITES}",
            sites.len()
        )));
    }
    Ok(())
}

fn subset_weight(sites: &[usize], mask: usize, table: &ReturnProbTable, w: f64) -> (f64, u32) {
    let mut prev = 0;
    let mut weight = 1.0;
    for (j, &t) in sites.iter().enumerate() {
        if mask >> j & 1 == 1 {
            weight *= w * table.p(t - prev);
            prev = t;
        }
    }
    (weight, mask.count_ones())
}

/// `Σ_{A ⊂ Ω} w^{|A|} P_0(X = 0 on A)` by iterating all subsets.
pub fn expansion_sum(sites: &[usize], table: &ReturnProbTable, eta: f64) -> Result<f64> {
    check_expansion_size(sites)?;
    let w = eta.exp_m1();
    Ok((0..1usize << sites.len())
        .map(|mask| subset_weight(sites, mask, table, w).0)
        .sum())
}

/// Law of `|A|` under `P(A) ∝ w^{|A|} P_0(X = 0 on A)`.
pub fn expansion_size_law(sites: &[usize], table: &ReturnProbTable, eta: f64) -> Result<Vec<f64>> {
    check_expansion_size(sites)?;
    let w = eta.exp_m1();
    let mut law = vec![0.0; sites.len() + 1];
    for mask in 0..1usize << sites.len() {
        let (weight, size) = subset_weight(sites, mask, table, w);
        law[size as usize] += weight;
    }
    let z: f64 = law.iter().sum();
    law.iter_mut().for_each(|x| *x /= z);
    Ok(law)
}

/// Marginals `P(t_j ∈ A)` by iterating all subsets.
pub fn expansion_marginals(sites: &[usize], table: &ReturnProbTable, eta: f64) -> Result<Vec<f64>> {
    check_expansion_size(sites)?;
    let w = eta.exp_m1();
    let mut acc = vec![0.0; sites.len()];
    let mut z = 0.0;
    for mask in 0..1usize << sites.len() {
        let (weight, _) = subset_weight(sites, mask, table, w);
        z += weight;
        for (j, a) in acc.iter_mut().enumerate() {
            if mask >> j & 1 == 1 {
                *a += weight;
            }
        }
    }
    Ok(acc.into_iter().map(|a| a / z).collect())
}

fn rel_err(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
    }
}

/// Worst relative discrepancy in `Z`, every `μ_j` and the expected contact
/// count between the renewal solver and path enumeration, over every
/// environment of every length `1..=max_n`, every `η` and dimension.
pub fn compare_with_solver(max_n: usize, etas: &[f64], dimensions: &[usize]) -> Result<f64> {
    if max_n > 10 {
        return Err(Error::TooLarge("solver comparison capped at N = 10".into()));
    }
    let mut worst: f64 = 0.0;
    for &d in dimensions {
        let kernel = WalkKernel::lazy(d)?;
        let cap = path_cap(&kernel).min(max_n);
        let table = kernel.return_probabilities(cap);
        for n in 1..=cap {
            let patterns = ZeroPatternTable::build(n, &kernel)?;
            for env_mask in 0..1usize << n {
                let sites: Vec<usize> = (0..n).filter(|b| env_mask >> b & 1 == 1).map(|b| b + 1).collect();
                for &eta in etas {
                    let truth = patterns.evaluate(env_mask, eta);
                    let sol = PinningInstance::from_sites(n, sites.clone(), kernel, eta)?.solve(&table)?;
                    worst = worst.max(rel_err(sol.log_z.exp(), truth.z));
                    worst = worst.max(rel_err(sol.expected_contacts, truth.expected_contacts));
                    for (mu, nu) in sol.contact_probs.iter().zip(&truth.contact_probs) {
                        worst = worst.max(rel_err(*mu, *nu));
                    }
                }
            }
        }
    }
    Ok(worst)
}

/// Ψ by recursion over the next retained index.
pub fn psi_recursive(gaps: &[f64], r: usize) -> f64 {
    fn go(gaps: &[f64], from: usize, left: usize, acc: f64) -> f64 {
        if left == 0 {
            return acc;
        }
        let mut total = 0.0;
        let mut span = 0.0;
        // next retained index ranges over from+1 ..= m - left + 1
        for next in from..gaps.len() + 1 - left {
            span += gaps[next];
            total += go(gaps, next + 1, left - 1, acc / span);
        }
        total
    }
    go(gaps, 0, r, 1.0)
}

/// Ψ_per by recursion: choose the first retained index, then continue as
/// for Ψ, closing the cycle with the wrap-around block.
pub fn psi_per_recursive(gaps: &[f64], r: usize) -> f64 {
    let m = gaps.len();
    let total: f64 = gaps.iter().sum();
    fn go(gaps: &[f64], from: usize, left: usize, inner: f64, acc: f64, total: f64) -> f64 {
        if left == 0 {
            // wrap-around block is everything outside the inner spans
            return acc / (total - inner);
        }
        let mut sum = 0.0;
        let mut span = 0.0;
        for next in from..gaps.len() + 1 - left {
            span += gaps[next];
            sum += go(gaps, next + 1, left - 1, inner + span, acc / span, total);
        }
        sum
    }
    let mut out = 0.0;
    for first in 0..m + 1 - r {
        out += go(gaps, first + 1, r - 1, 0.0, 1.0, total);
    }
    out
}
