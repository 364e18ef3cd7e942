//! Gaussian interface on `{1..N}^2` with diluted δ-pinning.
//!
//! The interface has energy `½ Σ_{edges} (X_i - X_j)^2`, where edges to sites
//! outside the box see height 0, and each site `i` carries the reference
//! measure `dX_i + η ω_i δ_0(dX_i)`. Expanding that product gives
//!
//! ```text
//! Z_η / Z_0 = Σ_{A ⊂ Ω} η^{|A|} Z_{Λ \ A} / Z_Λ,
//! Z_B       = (2π)^{|B|/2} det(Q_B)^{-1/2},
//! ```
//!
//! with `Q_B` the precision matrix on `B` (4 on the diagonal, -1 on edges
//! inside `B`). Sites of `A` are pinned at 0.

use std::io::Write;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::environment::{CellAnalysis, Environment, Geometry};
use crate::error::{Error, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Largest `|Ω|` accepted by the exact expansion.
pub const MAX_EXACT_SITES: usize = 16;
/// Largest side for the dense determinant checks.
pub const MAX_DENSE_SIDE: usize = 12;

#[derive(Debug, Clone)]
pub struct GffInstance {
    env: Environment,
    eta: f64,
}

impl GffInstance {
    pub fn new(env: Environment, eta: f64) -> Result<Self> {
        env.require(Geometry::Square)?;
        if !(eta >= 0.0 && eta.is_finite()) {
            return Err(Error::invalid(format!("eta = {eta} must be finite and >= 0")));
        }
        Ok(GffInstance { env, eta })
    }

    pub fn n(&self) -> usize {
        self.env.n()
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn env(&self) -> &Environment {
        &self.env
    }

    pub fn with_eta(&self, eta: f64) -> Result<Self> {
        Self::new(self.env.clone(), eta)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GffState {
    n: usize,
    /// Raster order, `(y - 1) N + (x - 1)`.
    pub heights: Vec<f64>,
    pub pinned: Vec<bool>,
}

impl GffState {
    pub fn flat(n: usize) -> Self {
        GffState {
            n,
            heights: vec![0.0; n * n],
            pinned: vec![false; n * n],
        }
    }

    pub fn pinned_count(&self) -> usize {
        self.pinned.iter().filter(|&&p| p).count()
    }

    /// Bitmask of the pinned set over the instance's contact sites, in order.
    pub fn pinned_mask(&self, contact_sites: &[usize]) -> usize {
        contact_sites
            .iter()
            .enumerate()
            .filter(|(_, &t)| self.pinned[t - 1])
            .fold(0, |acc, (j, _)| acc | 1 << j)
    }

    pub fn write_heights_csv<W: Write>(&self, mut out: W) -> Result<()> {
        for row in self.heights.chunks(self.n) {
            let line: Vec<String> = row.iter().map(|h| format!("{h:.9e}")).collect();
            writeln!(out, "{}", line.join(","))?;
        }
        Ok(())
    }

    pub fn write_mask_csv<W: Write>(&self, mut out: W) -> Result<()> {
        for row in self.pinned.chunks(self.n) {
            let line: Vec<&str> = row.iter().map(|&p| if p { "1" } else { "0" }).collect();
            writeln!(out, "{}", line.join(","))?;
        }
        Ok(())
    }
}

/// Probability of pinning a site whose neighbours sum to `s`:
/// `η φ(0) / (1 + η φ(0))` with `φ` the `N(s/4, 1/4)` density.
pub fn pin_probability(eta: f64, neighbour_sum: f64) -> f64 {
    if eta == 0.0 {
        return 0.0;
    }
    let phi0 = (2.0 / std::f64::consts::PI).sqrt() * (-neighbour_sum * neighbour_sum / 8.0).exp();
    let a = eta * phi0;
    a / (1.0 + a)
}

/// One systematic raster-order heat-bath sweep.
pub fn gibbs_sweep<R: Rng + ?Sized>(instance: &GffInstance, state: &mut GffState, rng: &mut R) {
    let n = instance.n();
    let bits = instance.env.bits();
    for y in 0..n {
        for x in 0..n {
            let i = y * n + x;
            let mut s = 0.0;
            if x > 0 {
                s += state.heights[i - 1];
            }
            if x + 1 < n {
                s += state.heights[i + 1];
            }
            if y > 0 {
                s += state.heights[i - n];
            }
            if y + 1 < n {
                s += state.heights[i + n];
            }
            let pin = bits[i] && rng.random::<f64>() < pin_probability(instance.eta, s);
            if pin {
                state.heights[i] = 0.0;
                state.pinned[i] = true;
            } else {
                let z: f64 = rng.sample(StandardNormal);
                state.heights[i] = 0.25 * s + 0.5 * z;
                state.pinned[i] = false;
            }
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
}

const BATCHES: usize = 50;

/// Mean of a chain output with a standard error from 50 batch means.
pub fn batch_means(series: &[f64]) -> Estimate {
    let n = series.len();
    let mean = series.iter().sum::<f64>() / n as f64;
    let batches = BATCHES.min(n);
    if batches < 2 {
        return Estimate { mean, stderr: 0.0 };
    }
    let size = n / batches;
    let means: Vec<f64> = (0..batches)
        .map(|b| series[b * size..(b + 1) * size].iter().sum::<f64>() / size as f64)
        .collect();
    let bm = means.iter().sum::<f64>() / batches as f64;
    let var = means.iter().map(|m| (m - bm) * (m - bm)).sum::<f64>() / (batches - 1) as f64;
    Estimate {
        mean,
        stderr: (var / batches as f64).sqrt(),
    }
}

/// Time average of `|A| / N^2` over `sweeps - burnin` sweeps, with a
/// batch-means standard error.
pub fn pinned_fraction_estimate<R: Rng + ?Sized>(
    instance: &GffInstance,
    sweeps: usize,
    burnin: usize,
    rng: &mut R,
) -> Result<Estimate> {
    if sweeps <= burnin {
        return Err(Error::invalid("sweeps must exceed burn-in"));
    }
    let mut state = GffState::flat(instance.n());
    let volume = (instance.n() * instance.n()) as f64;
    for _ in 0..burnin {
        gibbs_sweep(instance, &mut state, rng);
    }
    let mut series = Vec::with_capacity(sweeps - burnin);
    for _ in burnin..sweeps {
        gibbs_sweep(instance, &mut state, rng);
        series.push(state.pinned_count() as f64 / volume);
    }
    Ok(batch_means(&series))
}

/// Empirical law of the pinned set (as a mask over contact sites) along a
/// chain, with per-entry batch-means standard errors.
#[derive(Debug, Clone)]
pub struct PinnedSetLaw {
    pub probs: Vec<f64>,
    pub stderr: Vec<f64>,
}

impl PinnedSetLaw {
    pub fn total_variation(&self, exact: &[f64]) -> f64 {
        0.5 * self.probs.iter().zip(exact).map(|(a, b)| (a - b).abs()).sum::<f64>()
    }

    /// Scale of the Monte Carlo error in total variation, `½ Σ stderr`.
    pub fn total_variation_error(&self) -> f64 {
        0.5 * self.stderr.iter().sum::<f64>()
    }
}

pub fn sample_pinned_set_law<R: Rng + ?Sized>(
    instance: &GffInstance,
    sweeps: usize,
    burnin: usize,
    rng: &mut R,
) -> Result<PinnedSetLaw> {
    let sites = instance.env.contact_sites().0;
    if sites.len() > MAX_EXACT_SITES {
        return Err(Error::TooLarge(format!("{} contact sites", sites.len())));
    }
    if sweeps <= burnin + BATCHES {
        return Err(Error::invalid("too few sweeps after burn-in"));
    }
    let cells = 1usize << sites.len();
    let kept = sweeps - burnin;
    let size = kept / BATCHES;
    let mut state = GffState::flat(instance.n());
    for _ in 0..burnin {
        gibbs_sweep(instance, &mut state, rng);
    }
    let mut batch_counts = vec![vec![0usize; cells]; BATCHES];
    for counts in batch_counts.iter_mut() {
        for _ in 0..size {
            gibbs_sweep(instance, &mut state, rng);
            counts[state.pinned_mask(&sites)] += 1;
        }
    }
    let mut probs = vec![0.0; cells];
    let mut stderr = vec![0.0; cells];
    for c in 0..cells {
        let means: Vec<f64> = batch_counts.iter().map(|bc| bc[c] as f64 / size as f64).collect();
        let mean = means.iter().sum::<f64>() / BATCHES as f64;
        let var = means.iter().map(|m| (m - mean) * (m - mean)).sum::<f64>() / (BATCHES - 1) as f64;
        probs[c] = mean;
        stderr[c] = (var / BATCHES as f64).sqrt();
    }
    Ok(PinnedSetLaw { probs, stderr })
}

/// Precision matrix of the zero-boundary field on the sites with `keep[i]`.
fn precision_matrix(n: usize, keep: &[bool]) -> DMatrix<f64> {
    let index: Vec<Option<usize>> = {
        let mut k = 0;
        keep.iter()
            .map(|&b| {
                if b {
                    k += 1;
                    Some(k - 1)
                } else {
                    None
                }
            })
            .collect()
    };
    let size = keep.iter().filter(|&&b| b).count();
    let mut q = DMatrix::zeros(size, size);
    for y in 0..n {
        for x in 0..n {
            let Some(a) = index[y * n + x] else { continue };
            q[(a, a)] = 4.0;
            if x + 1 < n {
                if let Some(b) = index[y * n + x + 1] {
                    q[(a, b)] = -1.0;
                    q[(b, a)] = -1.0;
                }
            }
            if y + 1 < n {
                if let Some(b) = index[(y + 1) * n + x] {
                    q[(a, b)] = -1.0;
                    q[(b, a)] = -1.0;
                }
            }
        }
    }
    q
}

fn log_det(q: DMatrix<f64>) -> Result<f64> {
    if q.nrows() == 0 {
        return Ok(0.0);
    }
    let chol = q
        .cholesky()
        .ok_or_else(|| Error::Numerical("precision matrix is not positive definite".into()))?;
    Ok(2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>())
}

/// `log(Z_{Λ \ removed} / Z_Λ)` for the free (η = 0) field.
pub fn log_partition_ratio(n: usize, removed: &[bool]) -> Result<f64> {
    let all = vec![true; n * n];
    let keep: Vec<bool> = removed.iter().map(|&r| !r).collect();
    let k = removed.iter().filter(|&&r| r).count() as f64;
    let full = log_det(precision_matrix(n, &all))?;
    let part = log_det(precision_matrix(n, &keep))?;
    Ok(-0.5 * k * LN_2PI - 0.5 * (part - full))
}

#[derive(Debug, Clone)]
pub struct Expansion {
    /// `log(Z_η / Z_0)`.
    pub log_ratio: f64,
    pub expected_pinned: f64,
    /// Law of `|A|`, indexed by size.
    pub size_law: Vec<f64>,
    /// Law of `A` as a bitmask over the contact sites in order.
    pub set_law: Vec<f64>,
}

/// Exact `Z_η / Z_0` and pinned-set law by summing over every `A ⊂ Ω`.
pub fn exact_expansion_small(instance: &GffInstance) -> Result<Expansion> {
    let n = instance.n();
    let sites = instance.env.contact_sites().0;
    let m = sites.len();
    if m > MAX_EXACT_SITES {
        return Err(Error::TooLarge(format!("|Ω| = {m} exceeds {MAX_EXACT_SITES}")));
    }
    let eta = instance.eta;
    let full = log_det(precision_matrix(n, &vec![true; n * n]))?;
    let mut log_weights = vec![f64::NEG_INFINITY; 1 << m];
    log_weights[0] = 0.0;
    if eta > 0.0 {
        let mut keep = vec![true; n * n];
        for (mask, lw) in log_weights.iter_mut().enumerate().skip(1) {
            keep.iter_mut().for_each(|k| *k = true);
            for (j, &t) in sites.iter().enumerate() {
                if mask >> j & 1 == 1 {
                    keep[t - 1] = false;
                }
            }
            let k = mask.count_ones() as f64;
            let part = log_det(precision_matrix(n, &keep))?;
            *lw = k * (eta.ln() - 0.5 * LN_2PI) - 0.5 * (part - full);
        }
    }
    let log_ratio = crate::solver::log_sum_exp(&log_weights);
    let set_law: Vec<f64> = log_weights.iter().map(|lw| (lw - log_ratio).exp()).collect();
    let mut size_law = vec![0.0; m + 1];
    for (mask, p) in set_law.iter().enumerate() {
        size_law[mask.count_ones() as usize] += p;
    }
    let expected_pinned = size_law.iter().enumerate().map(|(k, p)| k as f64 * p).sum();
    Ok(Expansion {
        log_ratio,
        expected_pinned,
        size_law,
        set_law,
    })
}

/// Lattice distance from `(x, y)` to the nearest site outside `{1..N}^2`.
pub fn distance_to_outside(n: usize, x: usize, y: usize) -> usize {
    x.min(y).min(n + 1 - x).min(n + 1 - y)
}

#[derive(Debug, Clone, Copy)]
pub struct RatioCheck {
    /// `Z_{B \ {t}} / Z_B`.
    pub ratio: f64,
    /// `sqrt(log(1 + d(t, B^c)))`.
    pub bound_shape: f64,
    pub distance: usize,
}

impl RatioCheck {
    /// `ratio * bound_shape`: the constant that makes the single-site bound tight at `t`.
    pub fn implied_constant(&self) -> f64 {
        self.ratio * self.bound_shape
    }
}

/// Exact single-site removal ratio in the box `{1..N}^2` at `t = (x, y)`.
pub fn ratio_bound_check(n: usize, t: (usize, usize)) -> Result<RatioCheck> {
    if n == 0 || n > MAX_DENSE_SIDE {
        return Err(Error::TooLarge(format!("side {n} outside 1..={MAX_DENSE_SIDE}")));
    }
    let (x, y) = t;
    if !(1..=n).contains(&x) || !(1..=n).contains(&y) {
        return Err(Error::invalid(format!("site ({x}, {y}) outside the box")));
    }
    let mut removed = vec![false; n * n];
    removed[(y - 1) * n + (x - 1)] = true;
    let ratio = log_partition_ratio(n, &removed)?.exp();
    let distance = distance_to_outside(n, x, y);
    Ok(RatioCheck {
        ratio,
        bound_shape: ((1.0 + distance as f64).ln()).sqrt(),
        distance,
    })
}

/// Smallest `ratio * sqrt(log(1 + d))` over all sites of the box.
pub fn empirical_ratio_constant(n: usize) -> Result<f64> {
    let mut c = f64::INFINITY;
    for y in 1..=n {
        for x in 1..=n {
            c = c.min(ratio_bound_check(n, (x, y))?.implied_constant());
        }
    }
    Ok(c)
}

#[derive(Debug, Clone, Serialize)]
pub struct GoodRegionBound {
    /// Lower bound on `log(Z_η / Z_0)`; 0 when no good row exists.
    pub log_bound: f64,
    pub good_rows: usize,
    /// Sites retained per pinned set (one per good cell in good rows).
    pub sites_per_set: usize,
    pub degenerate: bool,
}

/// Lower bound on `log(Z_η / Z_0)` from pinned sets holding exactly one
/// contact site in every good cell of every good row.
///
/// Along a good row the chosen sites `t_1, t_2, ...` are removed left to
/// right. When `t_i` is removed, `t_{i-1}` (or, for `i = 1`, the outside
/// site `(0, y(t_1))` next to the row's leftmost cell) is already outside
/// the remaining set, so each removal ratio is at least
/// `c / sqrt(log(1 + |t_i - t_{i-1}|))`. The sum over all choices of sites
/// is carried out exactly by a transfer recursion along each row.
pub fn good_region_pinning_bound(
    instance: &GffInstance,
    cells: &CellAnalysis,
    ratio_constant: f64,
) -> Result<GoodRegionBound> {
    let n = instance.n();
    if cells.per_side * cells.k != n {
        return Err(Error::invalid("cell analysis does not match the instance"));
    }
    if ratio_constant.is_nan() || ratio_constant <= 0.0 {
        return Err(Error::invalid("ratio constant must be positive"));
    }
    let k = cells.k;
    let eta = instance.eta;
    let factor = |dx: f64, dy: f64| {
        let d = (dx * dx + dy * dy).sqrt();
        (eta * ratio_constant).ln() - 0.5 * (1.0 + d).ln().ln()
    };
    let mut total = 0.0;
    let mut good_rows = 0;
    let mut sites_per_set = 0;
    for cy in 0..cells.per_side {
        if !cells.good_rows[cy] {
            continue;
        }
        good_rows += 1;
        // log-weights of the chain ending at each candidate site of the last cell
        let mut prev: Vec<((usize, usize), f64)> = Vec::new();
        for cx in 0..cells.per_side {
            if !cells.is_good_cell(cx, cy) {
                continue;
            }
            sites_per_set += 1;
            let mut here = Vec::new();
            for y in cy * k + 1..=cy * k + k {
                for x in cx * k + 1..=cx * k + k {
                    if !instance.env.get_xy(x, y) {
                        continue;
                    }
                    let lw = if prev.is_empty() {
                        factor(x as f64, 0.0)
                    } else {
                        let terms: Vec<f64> = prev
                            .iter()
                            .map(|&((px, py), l)| l + factor(x as f64 - px as f64, y as f64 - py as f64))
                            .collect();
                        crate::solver::log_sum_exp(&terms)
                    };
                    here.push(((x, y), lw));
                }
            }
            prev = here;
        }
        let ends: Vec<f64> = prev.iter().map(|p| p.1).collect();
        total += crate::solver::log_sum_exp(&ends);
    }
    if good_rows == 0 {
        return Ok(GoodRegionBound {
            log_bound: 0.0,
            good_rows: 0,
            sites_per_set: 0,
            degenerate: true,
        });
    }
    Ok(GoodRegionBound {
        log_bound: total,
        good_rows,
        sites_per_set,
        degenerate: false,
    })
}
