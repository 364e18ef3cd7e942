//! Renewal dynamic program for the pinned polymer.
//!
//! Expanding `exp(η Σ 1{X_i = 0} ω_i) = Π (w 1{X_i = 0, ω_i = 1} + 1)` with
//! `w = e^η - 1` writes the partition function as a sum over subsets `A` of
//! the contact sites, each weighted by `w^{|A|} P_0(X = 0 on A)`. By the
//! Markov property `P_0(X = 0 on A)` factors into return probabilities of
//! the gaps of `A`, which gives the forward recursion (with `t_0 = 0`)
//!
//! ```text
//! F_j = Σ_{0 <= i < j} f_i p(t_j - t_i),   f_0 = 1,   f_j = w F_j,
//! Z   = Σ_{j=0}^m f_j
//! ```
//!
//! and the mirrored backward recursion `B_m = 1`,
//! `B_j = 1 + w Σ_{k > j} p(t_k - t_j) B_k`, with `B_0 = Z`. The probability
//! that the polymer sits at 0 at the contact `t_j` is `e^η F_j B_j / Z`.
//!
//! Both passes grow geometrically. Values are kept in linear arithmetic
//! inside "epochs": when a stored value leaves `[0, threshold]` a new epoch
//! begins whose entries are scaled by the accumulated log factor, and sums
//! over older epochs are brought to the current scale one epoch at a time.

use serde::Serialize;

use crate::environment::{Environment, Geometry};
use crate::error::{Error, Result};
use crate::walk::{ReturnProbTable, WalkKernel};

/// Largest pinning strength accepted; keeps `w` times the rescale threshold finite.
pub const MAX_ETA: f64 = 200.0;

#[derive(Debug, Clone)]
pub struct PinningInstance {
    n: usize,
    sites: Vec<usize>,
    kernel: WalkKernel,
    eta: f64,
}

impl PinningInstance {
    pub fn new(env: &Environment, kernel: WalkKernel, eta: f64) -> Result<Self> {
        env.require(Geometry::Segment)?;
        Self::from_sites(env.n(), env.contact_sites().0, kernel, eta)
    }

    pub fn from_sites(n: usize, sites: Vec<usize>, kernel: WalkKernel, eta: f64) -> Result<Self> {
        if !(eta.is_finite() && (0.0..=MAX_ETA).contains(&eta)) {
            return Err(Error::invalid(format!("eta = {eta} outside [0, {MAX_ETA}]")));
        }
        if sites.windows(2).any(|w| w[0] >= w[1]) || sites.first() == Some(&0) {
            return Err(Error::invalid("contact sites must be increasing positions >= 1"));
        }
        if let Some(&last) = sites.last() {
            if last > n {
                return Err(Error::invalid(format!("site {last} beyond N = {n}")));
            }
        }
        Ok(PinningInstance {
            n,
            sites,
            kernel,
            eta,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn sites(&self) -> &[usize] {
        &self.sites
    }

    pub fn kernel(&self) -> WalkKernel {
        self.kernel
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    /// `w = e^η - 1`.
    pub fn weight(&self) -> f64 {
        self.eta.exp_m1()
    }

    pub fn with_eta(&self, eta: f64) -> Result<Self> {
        Self::from_sites(self.n, self.sites.clone(), self.kernel, eta)
    }

    pub fn solve(&self, table: &ReturnProbTable) -> Result<PinningSolution> {
        solve(self, table)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SolverOptions {
    /// Stored values above this start a new scaling epoch.
    pub rescale_threshold: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            rescale_threshold: 1e100,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PinningSolution {
    pub n: usize,
    pub eta: f64,
    pub weight: f64,
    /// Contact positions `t_1..t_m`.
    pub sites: Vec<usize>,
    pub log_z: f64,
    /// `log B_0`; equals `log_z` up to rounding.
    pub log_z_backward: f64,
    /// `log F_j` for `j = 0..=m` (entry 0 is `log f_0 = 0`).
    pub log_arrival: Vec<f64>,
    /// `log f_j` for `j = 0..=m`; `-inf` for `j >= 1` when `w = 0`.
    pub log_forward: Vec<f64>,
    /// `log B_j` for `j = 0..=m`.
    pub log_backward: Vec<f64>,
    /// `μ(X_{t_j} = 0)` for `j = 1..=m` (stored 0-based).
    pub contact_probs: Vec<f64>,
    pub expected_contacts: f64,
    pub contact_fraction: f64,
}

impl PinningSolution {
    pub fn m(&self) -> usize {
        self.sites.len()
    }

    pub fn contact_fraction(&self) -> f64 {
        self.contact_fraction
    }

    /// Exact marginals `P(t_j ∈ A) = f_j B_j / Z` of the expansion's pinned set.
    pub fn pinned_set_marginals(&self) -> Vec<f64> {
        (1..=self.m())
            .map(|j| (self.log_forward[j] + self.log_backward[j] - self.log_z).exp())
            .collect()
    }

    pub fn write_csv<W: std::io::Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "j,t_j,mu_j")?;
        for (j, (t, mu)) in self.sites.iter().zip(&self.contact_probs).enumerate() {
            writeln!(out, "{},{},{:.17e}", j + 1, t, mu)?;
        }
        Ok(())
    }

    pub fn summary(&self, density: f64) -> SolutionSummary {
        SolutionSummary {
            n: self.n,
            eta: self.eta,
            density,
            log_z: self.log_z,
            expected_contacts: self.expected_contacts,
            contact_fraction: self.contact_fraction,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SolutionSummary {
    #[serde(rename = "N")]
    pub n: usize,
    pub eta: f64,
    pub density: f64,
    #[serde(rename = "logZ")]
    pub log_z: f64,
    pub expected_contacts: f64,
    pub contact_fraction: f64,
}

pub fn solve(instance: &PinningInstance, table: &ReturnProbTable) -> Result<PinningSolution> {
    solve_with(instance, table, SolverOptions::default())
}

/// Values stored relative to per-epoch log scales.
struct Epochs {
    start: Vec<usize>,
    log_scale: Vec<f64>,
}

impl Epochs {
    fn new() -> Self {
        Epochs {
            start: vec![0],
            log_scale: vec![0.0],
        }
    }

    fn current(&self) -> usize {
        self.log_scale.len() - 1
    }

    fn current_scale(&self) -> f64 {
        self.log_scale[self.current()]
    }

    fn push(&mut self, start: usize, log_scale: f64) {
        self.start.push(start);
        self.log_scale.push(log_scale);
    }

    /// `Σ_{i < upto} stored[i] * kernel(i)` expressed in the current scale.
    /// Epochs only ever scale up, so once an older epoch's factor underflows
    /// every earlier one does too.
    fn sum_to_current(&self, stored: &[f64], upto: usize, mut kernel: impl FnMut(usize) -> f64) -> f64 {
        let cur = self.current();
        let mut acc = 0.0;
        for e in (0..=cur).rev() {
            let factor = (self.log_scale[e] - self.log_scale[cur]).exp();
            if factor == 0.0 {
                break;
            }
            let lo = self.start[e];
            let hi = if e == cur { upto } else { self.start[e + 1] };
            let part: f64 = (lo..hi).zip(&stored[lo..hi]).map(|(i, v)| v * kernel(i)).sum();
            acc += factor * part;
        }
        acc
    }
}

pub fn solve_with(
    instance: &PinningInstance,
    table: &ReturnProbTable,
    options: SolverOptions,
) -> Result<PinningSolution> {
    if table.dimension() != instance.kernel.dimension() {
        return Err(Error::invalid("return table and walk kernel dimensions differ"));
    }
    table.require(instance.n)?;
    let threshold = options.rescale_threshold;
    if !(threshold > 1.0 && threshold.is_finite()) {
        return Err(Error::invalid("rescale threshold must be a finite number > 1"));
    }

    let eta = instance.eta;
    let w = instance.weight();
    let m = instance.sites.len();
    let mut t = Vec::with_capacity(m + 1);
    t.push(0usize);
    t.extend_from_slice(&instance.sites);
    let p = table.as_slice();

    // Forward pass, indexed 0..=m over t with t[0] = 0.
    let mut stored_f = vec![0.0; m + 1];
    stored_f[0] = 1.0;
    let mut log_arrival = vec![0.0; m + 1];
    let mut log_forward = vec![f64::NEG_INFINITY; m + 1];
    log_forward[0] = 0.0;
    let mut epochs = Epochs::new();
    for j in 1..=m {
        let tj = t[j];
        let arrival = epochs.sum_to_current(&stored_f, j, |i| p[tj - t[i]]);
        let scale = epochs.current_scale();
        log_arrival[j] = arrival.ln() + scale;
        let f = w * arrival;
        stored_f[j] = f;
        log_forward[j] = f.ln() + scale;
        if f > threshold {
            epochs.push(j + 1, scale + f.ln());
        }
    }
    let log_z = log_sum_exp(&log_forward);

    // Backward pass over reversed indices: slot s holds B_{m - s}.
    let mut stored_b = vec![0.0; m + 1];
    let mut log_backward = vec![0.0; m + 1];
    stored_b[0] = 1.0;
    let mut epochs = Epochs::new();
    for s in 1..=m {
        let j = m - s;
        let tj = t[j];
        let scale = epochs.current_scale();
        let tail = epochs.sum_to_current(&stored_b, s, |r| p[t[m - r] - tj]);
        let b = (-scale).exp() + w * tail;
        stored_b[s] = b;
        log_backward[j] = b.ln() + scale;
        if b > threshold {
            epochs.push(s + 1, scale + b.ln());
        }
    }
    let log_z_backward = log_backward[0];

    if !log_z.is_finite() || !log_z_backward.is_finite() {
        return Err(Error::Numerical(format!(
            "log Z is not finite (forward {log_z}, backward {log_z_backward})"
        )));
    }

    let contact_probs: Vec<f64> = (1..=m)
        .map(|j| (eta + log_arrival[j] + log_backward[j] - log_z).exp().min(1.0))
        .collect();
    if contact_probs.iter().any(|mu| mu.is_nan()) {
        return Err(Error::Numerical("contact probability is NaN".into()));
    }
    let expected_contacts: f64 = contact_probs.iter().sum();

    Ok(PinningSolution {
        n: instance.n,
        eta,
        weight: w,
        sites: instance.sites.clone(),
        log_z,
        log_z_backward,
        log_arrival,
        log_forward,
        log_backward,
        contact_probs,
        expected_contacts,
        contact_fraction: expected_contacts / instance.n as f64,
    })
}

pub(crate) fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Both sides of `log(Z_η / Z_0) = ∫_0^η E_η̃[contacts] dη̃`.
#[derive(Debug, Clone, Copy)]
pub struct IntegralCheck {
    pub log_z: f64,
    pub integral: f64,
    pub residual: f64,
    /// Whether the integrand never decreased along the grid.
    pub monotone: bool,
}

/// Composite trapezoid rule on `grid_points` uniform nodes in `[0, eta_max]`.
pub fn free_energy_integral_check(
    env: &Environment,
    kernel: WalkKernel,
    eta_max: f64,
    grid_points: usize,
) -> Result<IntegralCheck> {
    if grid_points < 2 {
        return Err(Error::invalid("quadrature needs at least 2 grid points"));
    }
    let base = PinningInstance::new(env, kernel, eta_max)?;
    let table = kernel.return_probabilities(env.n());
    let h = eta_max / (grid_points - 1) as f64;
    let mut values = Vec::with_capacity(grid_points);
    for k in 0..grid_points {
        let eta = if k + 1 == grid_points { eta_max } else { k as f64 * h };
        values.push(base.with_eta(eta)?.solve(&table)?.expected_contacts);
    }
    let inner: f64 = values[1..grid_points - 1].iter().sum();
    let integral = h * (0.5 * (values[0] + values[grid_points - 1]) + inner);
    let log_z = base.solve(&table)?.log_z;
    let monotone = values.windows(2).all(|v| v[1] >= v[0] - 1e-12 * v[0].abs().max(1.0));
    Ok(IntegralCheck {
        log_z,
        integral,
        residual: (log_z - integral).abs(),
        monotone,
    })
}

/// Inputs to the explicit lower bounds on `log Z`.
#[derive(Debug, Clone, Copy)]
pub struct BoundParams {
    pub delta: f64,
    pub eta: f64,
    pub n: usize,
    /// Number of contact sites.
    pub m: usize,
    /// Size of the retained contact subsets.
    pub r: usize,
    pub k: usize,
    /// Constant `c` with `p_k >= c k^{-d/2}` for every `k <= N`.
    pub clt_c: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LowerBounds {
    /// `r log(K c w sqrt(r / N))`, valid in one transverse dimension.
    pub log_bound_1d: f64,
    /// `r log(c w) + (r-1) log log K - (r-1) log Δ - log N`, `Δ = (N+1)/m`,
    /// valid in two transverse dimensions.
    pub log_bound_2d: f64,
}

/// Evaluates the two explicit lower bounds on `log Z` obtained by keeping only
/// contact subsets of size `r = m / K`: one from the Jensen inequality on the
/// gap product (one dimension), one from the minimum of the periodised gap
/// sum at equal spacing (two dimensions).
pub fn explicit_lower_bounds(params: BoundParams) -> Result<LowerBounds> {
    let BoundParams {
        delta,
        eta,
        n,
        m,
        r,
        k,
        clt_c,
    } = params;
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::invalid(format!("delta = {delta} outside (0, 1)")));
    }
    if !(eta >= 0.0 && eta.is_finite()) {
        return Err(Error::invalid(format!("eta = {eta} must be finite and >= 0")));
    }
    if clt_c.is_nan() || clt_c <= 0.0 {
        return Err(Error::invalid("local-CLT constant must be positive"));
    }
    if k == 0 || r == 0 || r * k != m {
        return Err(Error::invalid(format!("r = {r} is not m / K = {m} / {k}")));
    }
    if m > n || (m as f64) < delta * n as f64 {
        return Err(Error::invalid(format!(
            "m = {m} violates the density hypothesis m >= {delta} N with N = {n}"
        )));
    }
    let w = eta.exp_m1();
    let (rf, nf) = (r as f64, n as f64);
    let log_cw = (clt_c * w).ln();
    let log_bound_1d = rf * (log_cw + (k as f64).ln() + 0.5 * (rf / nf).ln());
    let spacing = (nf + 1.0) / m as f64;
    let log_bound_2d = if r == 1 {
        log_cw - nf.ln()
    } else {
        rf * log_cw + (rf - 1.0) * ((k as f64).ln().ln() - spacing.ln()) - nf.ln()
    };
    Ok(LowerBounds {
        log_bound_1d,
        log_bound_2d,
    })
}
