//! Gap-product sums over retained contact subsets.
//!
//! For gaps `Δ_1..Δ_m` (so `t_ℓ = Δ_1 + ... + Δ_ℓ`) and `1 <= r <= m`,
//!
//! ```text
//! Ψ(Δ)     = Σ_{0 < ℓ_1 < ... < ℓ_r <= m}  Π_i 1 / (t_{ℓ_i} - t_{ℓ_{i-1}})       (ℓ_0 = 0)
//! Ψ_per(x) = Σ_{ℓ}  1 / (x_{ℓ_r+1} + ... + x_m + x_1 + ... + x_{ℓ_1})
//!                 × Π_{i >= 2} 1 / (x_{ℓ_{i-1}+1} + ... + x_{ℓ_i})
//! ```
//!
//! Ψ_per treats the gaps as a cycle: each retained tuple cuts the cycle into
//! `r` arcs and contributes the inverse product of their lengths. On the
//! simplex `{x > 0, Σ x = N + 1}` it is convex, symmetric under rotation and
//! reversal, and minimal at equal spacing.

use rand::Rng;
use rand_distr::{Distribution, Exp1};

use crate::error::{Error, Result};

/// Enumeration cap for Ψ / Ψ_per values.
pub const MAX_VALUE_SITES: usize = 24;
/// Cap for loops that evaluate Ψ_per many times (convexity, minimisation).
pub const MAX_LOOP_SITES: usize = 12;

/// Positive gaps with a budget `N + 1` that bounds their sum.
#[derive(Debug, Clone, PartialEq)]
pub struct GapVector {
    gaps: Vec<f64>,
    budget: f64,
}

impl GapVector {
    pub fn new(gaps: Vec<f64>, budget: f64) -> Result<Self> {
        if gaps.is_empty() {
            return Err(Error::invalid("gap vector must be non-empty"));
        }
        if gaps.iter().any(|&g| !(g > 0.0 && g.is_finite())) {
            return Err(Error::invalid("gaps must be positive and finite"));
        }
        let sum: f64 = gaps.iter().sum();
        if sum > budget * (1.0 + 1e-12) {
            return Err(Error::invalid(format!("gaps sum to {sum}, over the budget {budget}")));
        }
        Ok(GapVector { gaps, budget })
    }

    /// Gaps of ordered sites in `{1..N}`, budget `N + 1`.
    pub fn from_sites(sites: &[usize], n: usize) -> Result<Self> {
        if sites.windows(2).any(|w| w[0] >= w[1]) || sites.first() == Some(&0) {
            return Err(Error::invalid("sites must be increasing positions >= 1"));
        }
        let mut prev = 0;
        let gaps = sites
            .iter()
            .map(|&t| {
                let g = (t - prev) as f64;
                prev = t;
                g
            })
            .collect();
        Self::new(gaps, (n + 1) as f64)
    }

    pub fn uniform(m: usize, budget: f64) -> Result<Self> {
        if m == 0 {
            return Err(Error::invalid("gap vector must be non-empty"));
        }
        Self::new(vec![budget / m as f64; m], budget)
    }

    /// Point on the simplex drawn uniformly (flat Dirichlet).
    pub fn random_on_simplex<R: Rng + ?Sized>(m: usize, budget: f64, rng: &mut R) -> Result<Self> {
        let raw: Vec<f64> = (0..m).map(|_| Exp1.sample(rng)).collect::<Vec<f64>>();
        let total: f64 = raw.iter().sum();
        Self::new(raw.iter().map(|x| x / total * budget).collect(), budget)
    }

    pub fn len(&self) -> usize {
        self.gaps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gaps.is_empty()
    }

    pub fn gaps(&self) -> &[f64] {
        &self.gaps
    }

    pub fn budget(&self) -> f64 {
        self.budget
    }

    /// Replaces the first gap by `budget - Σ_{i>=2} Δ_i`, putting the vector on the simplex.
    pub fn periodized(&self) -> GapVector {
        let rest: f64 = self.gaps[1..].iter().sum();
        let mut gaps = self.gaps.clone();
        gaps[0] = self.budget - rest;
        GapVector {
            gaps,
            budget: self.budget,
        }
    }

    pub fn distance_to_uniform(&self) -> f64 {
        let target = self.budget / self.len() as f64;
        self.gaps.iter().map(|g| (g - target).abs()).fold(0.0, f64::max)
    }
}

/// Lexicographic walk over `r`-subsets of `0..m`.
struct Combinations {
    idx: Vec<usize>,
    m: usize,
    done: bool,
}

impl Combinations {
    fn new(m: usize, r: usize) -> Self {
        Combinations {
            idx: (0..r).collect(),
            m,
            done: r > m,
        }
    }

    fn current(&self) -> Option<&[usize]> {
        if self.done {
            None
        } else {
            Some(&self.idx)
        }
    }

    fn advance(&mut self) {
        let r = self.idx.len();
        let mut i = r;
        while i > 0 {
            i -= 1;
            if self.idx[i] < self.m - r + i {
                self.idx[i] += 1;
                for j in i + 1..r {
                    self.idx[j] = self.idx[j - 1] + 1;
                }
                return;
            }
        }
        self.done = true;
    }
}

fn check(m: usize, r: usize, cap: usize) -> Result<()> {
    if r == 0 || r > m {
        return Err(Error::invalid(format!("r = {r} outside 1..={m}")));
    }
    if m > cap {
        return Err(Error::TooLarge(format!("m = {m} exceeds the enumeration cap {cap}")));
    }
    Ok(())
}

fn prefix_sums(gaps: &[f64]) -> Vec<f64> {
    let mut s = Vec::with_capacity(gaps.len() + 1);
    s.push(0.0);
    for g in gaps {
        s.push(s.last().unwrap() + g);
    }
    s
}

/// Ψ over the raw gaps `Δ_1..Δ_m`.
pub fn psi(gaps: &[f64], r: usize) -> Result<f64> {
    check(gaps.len(), r, MAX_VALUE_SITES)?;
    let s = prefix_sums(gaps);
    let mut combos = Combinations::new(gaps.len(), r);
    let mut total = 0.0;
    while let Some(ell) = combos.current() {
        let mut prev = 0.0;
        let mut term = 1.0;
        for &l in ell {
            term /= s[l + 1] - prev;
            prev = s[l + 1];
        }
        total += term;
        combos.advance();
    }
    Ok(total)
}

/// Ψ_per of a vector on the simplex; the cycle length is `Σ x`.
pub fn psi_per(x: &[f64], r: usize) -> Result<f64> {
    check(x.len(), r, MAX_VALUE_SITES)?;
    Ok(psi_per_unchecked(x, r, None))
}

/// Ψ_per and, when `grad` is given, its gradient. Every arc cut by a tuple
/// contains each of its coordinates once, so the derivative of a term `T`
/// along `x_q` is `-T / (length of the arc holding q)`.
fn psi_per_unchecked(x: &[f64], r: usize, mut grad: Option<&mut [f64]>) -> f64 {
    let m = x.len();
    let s = prefix_sums(x);
    let total = s[m];
    if let Some(g) = grad.as_deref_mut() {
        g.iter_mut().for_each(|v| *v = 0.0);
    }
    let mut combos = Combinations::new(m, r);
    let mut value = 0.0;
    let mut arcs = Vec::with_capacity(r);
    while let Some(ell) = combos.current() {
        arcs.clear();
        // ell holds 0-based indices of ℓ_1 - 1, ..., ℓ_r - 1
        let first = ell[0];
        let last = ell[r - 1];
        let inner = s[last + 1] - s[first + 1];
        arcs.push(total - inner);
        for w in ell.windows(2) {
            arcs.push(s[w[1] + 1] - s[w[0] + 1]);
        }
        let term = arcs.iter().fold(1.0, |acc, a| acc / a);
        value += term;
        if let Some(g) = grad.as_deref_mut() {
            // wrap-around arc: indices last+1..m and 0..=first
            let d = -term / arcs[0];
            for q in (last + 1..m).chain(0..=first) {
                g[q] += d;
            }
            for (k, w) in ell.windows(2).enumerate() {
                let d = -term / arcs[k + 1];
                for gq in &mut g[w[0] + 1..=w[1]] {
                    *gq += d;
                }
            }
        }
        combos.advance();
    }
    value
}

pub fn psi_per_gradient(x: &[f64], r: usize) -> Result<(f64, Vec<f64>)> {
    check(x.len(), r, MAX_VALUE_SITES)?;
    let mut g = vec![0.0; x.len()];
    let v = psi_per_unchecked(x, r, Some(&mut g));
    Ok((v, g))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PsiKind {
    Psi,
    PsiPer,
}

impl PsiKind {
    fn eval(self, x: &[f64], r: usize) -> Result<f64> {
        match self {
            PsiKind::Psi => psi(x, r),
            PsiKind::PsiPer => psi_per(x, r),
        }
    }
}

/// Counts midpoint-convexity violations over `trials` random pairs on the
/// simplex. A violation is `f(mid) > (f(a) + f(b))/2 + 1e-12 max(1, (f(a) + f(b))/2)`.
pub fn check_convexity<R: Rng + ?Sized>(
    kind: PsiKind,
    m: usize,
    r: usize,
    budget: f64,
    trials: usize,
    rng: &mut R,
) -> Result<usize> {
    check(m, r, MAX_LOOP_SITES)?;
    let mut violations = 0;
    for _ in 0..trials {
        let a = GapVector::random_on_simplex(m, budget, rng)?;
        let b = GapVector::random_on_simplex(m, budget, rng)?;
        let mid: Vec<f64> = a.gaps.iter().zip(&b.gaps).map(|(x, y)| 0.5 * (x + y)).collect();
        let avg = 0.5 * (kind.eval(&a.gaps, r)? + kind.eval(&b.gaps, r)?);
        let at_mid = kind.eval(&mid, r)?;
        if at_mid > avg + 1e-12 * avg.max(1.0) {
            violations += 1;
        }
    }
    Ok(violations)
}

/// Euclidean projection onto `{x : x_i >= floor, Σ x = budget}`.
pub fn project_to_simplex(y: &[f64], budget: f64, floor: f64) -> Vec<f64> {
    let m = y.len();
    let radius = budget - floor * m as f64;
    let shifted: Vec<f64> = y.iter().map(|v| v - floor).collect();
    let mut sorted = shifted.clone();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut theta = 0.0;
    for (k, &u) in sorted.iter().enumerate() {
        cumulative += u;
        let candidate = (cumulative - radius) / (k + 1) as f64;
        if u - candidate > 0.0 {
            theta = candidate;
        }
    }
    shifted.iter().map(|v| (v - theta).max(0.0) + floor).collect()
}

#[derive(Debug, Clone)]
pub struct Minimum {
    pub point: GapVector,
    pub value: f64,
    pub iterations: usize,
}

const MAX_ITERATIONS: usize = 200_000;

/// Projected gradient descent for Ψ_per on `{x >= 1e-9 budget, Σ x = budget}`
/// from `start`, with Armijo backtracking. Stops when the gradient's
/// component along the simplex, in units of `Ψ_per / budget`, drops
/// below `1e-11`, or when backtracking can no longer move the iterate;
/// `tolerance` then bounds the distance from the uniform
/// vector that is accepted as convergence to the minimiser.
pub fn minimize_psi_per(r: usize, start: &GapVector, tolerance: f64) -> Result<Minimum> {
    let m = start.len();
    check(m, r, MAX_LOOP_SITES)?;
    let budget = start.budget;
    let floor = 1e-9 * budget;
    let mut x = project_to_simplex(&start.gaps, budget, floor);
    let (mut value, mut grad) = psi_per_gradient(&x, r)?;
    let mut step = budget * budget / value.max(f64::MIN_POSITIVE);
    let mut stalled = false;
    for it in 0..MAX_ITERATIONS {
        let mean = grad.iter().sum::<f64>() / m as f64;
        let tangential = grad.iter().map(|g| (g - mean).abs()).fold(0.0, f64::max);
        if stalled || tangential * budget <= 1e-11 * value {
            let point = GapVector::new(x, budget)?;
            let dist = point.distance_to_uniform();
            if dist > tolerance {
                return Err(Error::NotConverged {
                    iterations: it,
                    residual: dist,
                });
            }
            return Ok(Minimum {
                point,
                value,
                iterations: it,
            });
        }
        loop {
            let trial: Vec<f64> = x.iter().zip(&grad).map(|(xi, gi)| xi - step * gi).collect();
            let trial = project_to_simplex(&trial, budget, floor);
            let decrease: f64 = grad.iter().zip(trial.iter().zip(&x)).map(|(g, (t, xi))| g * (t - xi)).sum();
            let moved: f64 = trial.iter().zip(&x).map(|(t, xi)| (t - xi) * (t - xi)).sum();
            let (trial_value, trial_grad) = psi_per_gradient(&trial, r)?;
            if trial_value <= value + 1e-4 * decrease || moved == 0.0 {
                x = trial;
                value = trial_value;
                grad = trial_grad;
                step *= 2.0;
                break;
            }
            step *= 0.5;
            // no representable decrease left: stationary to working precision
            if step * tangential < 1e-16 * budget {
                stalled = true;
                break;
            }
        }
    }
    let point = GapVector::new(x, budget)?;
    Err(Error::NotConverged {
        iterations: MAX_ITERATIONS,
        residual: point.distance_to_uniform(),
    })
}

#[derive(Debug, Clone, Copy)]
pub struct PsiChain {
    pub psi: f64,
    pub psi_per: f64,
    pub uniform_psi_per: f64,
}

impl PsiChain {
    pub fn holds(&self, rel_tol: f64) -> bool {
        self.psi >= self.psi_per * (1.0 - rel_tol) && self.psi_per >= self.uniform_psi_per * (1.0 - rel_tol)
    }
}

/// `Ψ(Δ)`, `Ψ_per` of the periodised gaps, and `Ψ_per` at equal spacing.
pub fn compare_psi_psiper(g: &GapVector, r: usize) -> Result<PsiChain> {
    Ok(PsiChain {
        psi: psi(&g.gaps, r)?,
        psi_per: psi_per(&g.periodized().gaps, r)?,
        uniform_psi_per: psi_per(&GapVector::uniform(g.len(), g.budget)?.gaps, r)?,
    })
}

/// `(log K)^{r-1} / (Δ^{r-1} N)` with `Δ = budget / m` and `N = budget - 1`.
///
/// Requires `K >= 2` and `r K <= m`, which leaves room for every tuple that
/// starts at the first site and advances by at most `K` per step.
pub fn psi_per_uniform_lower_bound(m: usize, r: usize, k: usize, budget: f64) -> Result<f64> {
    if k < 2 || r == 0 || r * k > m {
        return Err(Error::invalid(format!("infeasible (m, r, K) = ({m}, {r}, {k})")));
    }
    if budget.is_nan() || budget <= 1.0 {
        return Err(Error::invalid("budget N + 1 must exceed 1"));
    }
    let n = budget - 1.0;
    let spacing = budget / m as f64;
    let e = (r - 1) as i32;
    Ok(((k as f64).ln() / spacing).powi(e) / n)
}

#[derive(Debug, Clone, Copy)]
pub struct JensenCheck {
    /// Minimum over retained tuples of `Π (t_{ℓ_i} - t_{ℓ_{i-1}})^{-1/2}`.
    pub lhs_min: f64,
    /// `exp(-(r/2) log(N / r))`.
    pub rhs: f64,
}

impl JensenCheck {
    pub fn holds(&self) -> bool {
        self.lhs_min >= self.rhs * (1.0 - 1e-12)
    }
}

/// Exact minimum of the gap product over all `r`-tuples of `sites`,
/// via a longest-path recursion on `Σ log(gap)`.
pub fn jensen_gap_bound(sites: &[usize], r: usize, n: usize) -> Result<JensenCheck> {
    let m = sites.len();
    if r == 0 || r > m {
        return Err(Error::invalid(format!("r = {r} outside 1..={m}")));
    }
    if sites.windows(2).any(|w| w[0] >= w[1]) || sites[0] == 0 || sites[m - 1] > n {
        return Err(Error::invalid("sites must be increasing within 1..=N"));
    }
    // best[c][j]: max Σ log gaps over tuples of size c+1 ending at site j
    let mut best = vec![vec![f64::NEG_INFINITY; m]; r];
    for j in 0..m {
        best[0][j] = (sites[j] as f64).ln();
    }
    for c in 1..r {
        for j in c..m {
            let mut b = f64::NEG_INFINITY;
            for i in c - 1..j {
                b = b.max(best[c - 1][i] + ((sites[j] - sites[i]) as f64).ln());
            }
            best[c][j] = b;
        }
    }
    let max_log = best[r - 1].iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let rf = r as f64;
    Ok(JensenCheck {
        lhs_min: (-0.5 * max_log).exp(),
        rhs: (-0.5 * rf * (n as f64 / rf).ln()).exp(),
    })
}
