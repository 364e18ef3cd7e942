//! The reference random walk and its return probabilities.
//!
//! Only lazy walks are provided: in each transverse coordinate the step is 0
//! with probability 1/2 and ±1 with probability 1/4 each. Such a step has the
//! law of `(a + b) / 2` for two independent fair signs, so `X_k = 0` exactly
//! when a simple walk of `2k` steps is back at the origin and
//!
//! ```text
//! P(X_k = 0) = C(2k, k) / 4^k      (one coordinate)
//! ```
//!
//! In two transverse dimensions the coordinates are independent and the
//! return probability is the square of the one-dimensional value.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of transverse coordinates of the polymer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Dimension {
    One,
    Two,
}

impl Dimension {
    pub fn new(d: usize) -> Result<Self> {
        match d {
            1 => Ok(Dimension::One),
            2 => Ok(Dimension::Two),
            other => Err(Error::UnsupportedDimension(other)),
        }
    }

    pub fn get(self) -> usize {
        match self {
            Dimension::One => 1,
            Dimension::Two => 2,
        }
    }

    /// Decay exponent `d/2` in `p_k ~ c k^{-d/2}`.
    pub fn clt_exponent(self) -> f64 {
        self.get() as f64 / 2.0
    }
}

/// Lattice point in at most two transverse dimensions; unused coordinates are 0.
pub type Point = [i64; 2];

/// One-coordinate lazy step law, indexed by step -1, 0, +1.
const LAZY_STEPS: [(i64, f64); 3] = [(-1, 0.25), (0, 0.5), (1, 0.25)];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WalkKernel {
    dimension: Dimension,
}

impl WalkKernel {
    pub fn lazy(dimension: usize) -> Result<Self> {
        Ok(WalkKernel {
            dimension: Dimension::new(dimension)?,
        })
    }

    pub fn dimension(&self) -> Dimension {
        self.dimension
    }

    /// Probability that a single step does not move.
    pub fn stay_probability(&self) -> f64 {
        match self.dimension {
            Dimension::One => 0.5,
            Dimension::Two => 0.25,
        }
    }

    /// Variance of each coordinate of a step.
    pub fn step_variance(&self) -> f64 {
        LAZY_STEPS.iter().map(|&(x, p)| p * (x * x) as f64).sum()
    }

    /// Support of the step law with probabilities.
    pub fn steps(&self) -> Vec<(Point, f64)> {
        match self.dimension {
            Dimension::One => LAZY_STEPS.iter().map(|&(x, p)| ([x, 0], p)).collect(),
            Dimension::Two => LAZY_STEPS
                .iter()
                .flat_map(|&(x, px)| LAZY_STEPS.iter().map(move |&(y, py)| ([x, y], px * py)))
                .collect(),
        }
    }

    pub fn is_symmetric(&self) -> bool {
        let steps = self.steps();
        steps.iter().all(|&(s, p)| {
            steps
                .iter()
                .any(|&(t, q)| t == [-s[0], -s[1]] && (p - q).abs() < 1e-15)
        })
    }

    pub fn is_aperiodic(&self) -> bool {
        self.steps().iter().any(|&(s, p)| s == [0, 0] && p > 0.0)
    }

    pub fn return_probabilities(&self, max_time: usize) -> ReturnProbTable {
        ReturnProbTable::new(self.dimension, max_time)
    }
}

/// Exact `p_k = P_0(X_k = 0)` for `k = 0..=max_time`, in linear and log form.
#[derive(Debug, Clone)]
pub struct ReturnProbTable {
    dimension: Dimension,
    p: Vec<f64>,
    log_p: Vec<f64>,
}

impl ReturnProbTable {
    pub fn new(dimension: Dimension, max_time: usize) -> Self {
        let mut log_p1 = Vec::with_capacity(max_time + 1);
        log_p1.push(0.0);
        for k in 0..max_time {
            // p_{k+1} = p_k (2k+1)/(2k+2)
            let next = log_p1[k] + (-1.0 / (2.0 * k as f64 + 2.0)).ln_1p();
            log_p1.push(next);
        }
        let scale = dimension.get() as f64;
        let log_p: Vec<f64> = log_p1.iter().map(|l| scale * l).collect();
        let p = log_p.iter().map(|l| l.exp()).collect();
        ReturnProbTable {
            dimension,
            p,
            log_p,
        }
    }

    pub fn dimension(&self) -> Dimension {
        self.dimension
    }

    pub fn max_time(&self) -> usize {
        self.p.len() - 1
    }

    #[inline]
    pub fn p(&self, k: usize) -> f64 {
        self.p[k]
    }

    #[inline]
    pub fn log_p(&self, k: usize) -> f64 {
        self.log_p[k]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.p
    }

    pub fn require(&self, needed: usize) -> Result<()> {
        if needed > self.max_time() {
            return Err(Error::TableTooShort {
                needed,
                available: self.max_time(),
            });
        }
        Ok(())
    }

    fn scaled(&self, k: usize) -> f64 {
        self.p[k] * (k as f64).powf(self.dimension.clt_exponent())
    }

    /// Estimate of `lim p_k k^{d/2}` from the tail of the table.
    ///
    /// The sequence behaves like `c (1 - a/k + O(k^-2))`, so one Richardson
    /// step between `k = K/2` and `k = K` removes the leading correction.
    pub fn clt_constant_estimate(&self) -> Result<f64> {
        const MIN_TIME: usize = 1000;
        let top = self.max_time();
        if top < MIN_TIME {
            return Err(Error::invalid(format!(
                "table up to time {top} is too short to locate the local-CLT plateau (need {MIN_TIME})"
            )));
        }
        let top = top - top % 2;
        Ok(2.0 * self.scaled(top) - self.scaled(top / 2))
    }

    /// `min_{1 <= k <= max_time} p_k k^{d/2}`: the largest `c` with
    /// `p_k >= c k^{-d/2}` on the whole table. For the lazy walks the
    /// sequence increases, so this is attained at `k = 1`.
    pub fn clt_lower_constant(&self) -> f64 {
        (1..=self.max_time())
            .map(|k| self.scaled(k))
            .fold(f64::INFINITY, f64::min)
    }
}

/// Off-origin point probabilities `P_0(X_j = x)` for bridge sampling.
///
/// Uses `P(X_j = x) = C(2j, j + x) / 4^j` per coordinate, evaluated through a
/// table of `ln n!` that grows on demand.
#[derive(Debug, Clone, Default)]
pub struct PointProbs {
    ln_factorial: Vec<f64>,
}

impl PointProbs {
    pub fn new() -> Self {
        PointProbs {
            ln_factorial: vec![0.0],
        }
    }

    fn ensure(&mut self, n: usize) {
        while self.ln_factorial.len() <= n {
            let k = self.ln_factorial.len();
            let last = self.ln_factorial[k - 1];
            self.ln_factorial.push(last + (k as f64).ln());
        }
    }

    /// `ln P_0(X_j = x)` for one lazy coordinate.
    pub fn log_prob_1d(&mut self, j: usize, x: i64) -> f64 {
        if x.unsigned_abs() as usize > j {
            return f64::NEG_INFINITY;
        }
        self.ensure(2 * j);
        let up = (j as i64 + x) as usize;
        let down = (j as i64 - x) as usize;
        self.ln_factorial[2 * j]
            - self.ln_factorial[up]
            - self.ln_factorial[down]
            - j as f64 * 4f64.ln()
    }

    pub fn log_prob(&mut self, dimension: Dimension, j: usize, x: Point) -> f64 {
        match dimension {
            Dimension::One => {
                if x[1] != 0 {
                    f64::NEG_INFINITY
                } else {
                    self.log_prob_1d(j, x[0])
                }
            }
            Dimension::Two => self.log_prob_1d(j, x[0]) + self.log_prob_1d(j, x[1]),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Return probabilities by repeated convolution of the step law.
    fn convolved_returns(kernel: &WalkKernel, max_time: usize) -> Vec<f64> {
        let radius = max_time as i64;
        let width = (2 * radius + 1) as usize;
        let idx = |p: Point| ((p[0] + radius) as usize) * width + (p[1] + radius) as usize;
        let mut law = vec![0.0; width * width];
        law[idx([0, 0])] = 1.0;
        let mut out = vec![1.0];
        for _ in 0..max_time {
            let mut next = vec![0.0; width * width];
            for x in -radius..=radius {
                for y in -radius..=radius {
                    let mass = law[idx([x, y])];
                    if mass == 0.0 {
                        continue;
                    }
                    for (s, p) in kernel.steps() {
                        let (nx, ny) = (x + s[0], y + s[1]);
                        if nx.abs() <= radius && ny.abs() <= radius {
                            next[idx([nx, ny])] += mass * p;
                        }
                    }
                }
            }
            law = next;
            out.push(law[idx([0, 0])]);
        }
        out
    }

    #[test]
    fn lazy_walk_laws() {
        let one = WalkKernel::lazy(1).unwrap();
        assert_eq!(one.stay_probability(), 0.5);
        assert_eq!(one.step_variance(), 0.5);
        assert!(one.is_symmetric() && one.is_aperiodic());
        let total: f64 = one.steps().iter().map(|s| s.1).sum();
        assert_eq!(total, 1.0);

        let two = WalkKernel::lazy(2).unwrap();
        assert_eq!(two.steps().len(), 9);
        assert_eq!(two.step_variance(), 0.5);
        assert!(two.is_symmetric() && two.is_aperiodic());

        assert!(matches!(WalkKernel::lazy(3), Err(Error::UnsupportedDimension(3))));
        assert!(WalkKernel::lazy(0).is_err());
    }

    #[test]
    fn small_return_probabilities() {
        let t1 = WalkKernel::lazy(1).unwrap().return_probabilities(5);
        assert_eq!(t1.p(0), 1.0);
        assert!((t1.p(1) - 0.5).abs() < 1e-15);
        assert!((t1.p(2) - 3.0 / 8.0).abs() < 1e-15);
        let t2 = WalkKernel::lazy(2).unwrap().return_probabilities(5);
        assert!((t2.p(2) - 9.0 / 64.0).abs() < 1e-15);
        for k in 0..=5 {
            assert!((t2.p(k) - t1.p(k) * t1.p(k)).abs() < 1e-15);
        }
    }

    #[test]
    fn closed_form_matches_convolution() {
        for d in [1, 2] {
            let kernel = WalkKernel::lazy(d).unwrap();
            let table = kernel.return_probabilities(20);
            let direct = convolved_returns(&kernel, 20);
            for (k, &exact) in direct.iter().enumerate().take(21) {
                let rel = (table.p(k) - exact).abs() / exact;
                assert!(rel < 1e-12, "d={d} k={k} rel={rel}");
            }
        }
    }

    #[test]
    fn strictly_decreasing_and_positive() {
        for d in [1, 2] {
            let t = WalkKernel::lazy(d).unwrap().return_probabilities(5000);
            for k in 1..=5000 {
                assert!(t.p(k) > 0.0 && t.p(k) < t.p(k - 1));
                assert!((t.log_p(k).exp() - t.p(k)).abs() <= 1e-15 * t.p(k).max(1e-300));
            }
        }
    }

    #[test]
    fn clt_plateau() {
        let t1 = WalkKernel::lazy(1).unwrap().return_probabilities(20_000);
        let c1 = t1.clt_constant_estimate().unwrap();
        assert!((c1 - 1.0 / std::f64::consts::PI.sqrt()).abs() < 1e-6, "{c1}");
        let t2 = WalkKernel::lazy(2).unwrap().return_probabilities(20_000);
        let c2 = t2.clt_constant_estimate().unwrap();
        assert!((c2 - 1.0 / std::f64::consts::PI).abs() < 1e-6, "{c2}");

        // monotone, and flat over the last decade
        for t in [&t1, &t2] {
            for k in 2..=20_000 {
                assert!(t.scaled(k) >= t.scaled(k - 1));
            }
            let rel = (t.scaled(20_000) - t.scaled(2_000)) / t.scaled(20_000);
            assert!(rel <= 1e-2, "{rel}");
        }

        let short = WalkKernel::lazy(1).unwrap().return_probabilities(10);
        assert!(short.clt_constant_estimate().is_err());
    }

    #[test]
    fn lower_constant_is_at_first_step() {
        let t1 = WalkKernel::lazy(1).unwrap().return_probabilities(1000);
        assert!((t1.clt_lower_constant() - 0.5).abs() < 1e-15);
        let t2 = WalkKernel::lazy(2).unwrap().return_probabilities(1000);
        assert!((t2.clt_lower_constant() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn point_probabilities_are_a_law() {
        let mut pp = PointProbs::new();
        for j in 0..30 {
            let total: f64 = (-(j as i64)..=j as i64).map(|x| pp.log_prob_1d(j, x).exp()).sum();
            assert!((total - 1.0).abs() < 1e-12);
        }
        let table = WalkKernel::lazy(2).unwrap().return_probabilities(40);
        for j in [0, 1, 7, 40] {
            let at0 = pp.log_prob(Dimension::Two, j, [0, 0]).exp();
            assert!((at0 - table.p(j)).abs() < 1e-13);
        }
        assert_eq!(pp.log_prob_1d(2, 3), f64::NEG_INFINITY);
    }
}
