//! Exact sampling from the pinned polymer measure.
//!
//! A path is drawn in two stages. First the pinned set `A` of the
//! expansion, with probability `w^{|A|} P_0(X = 0 on A) / Z`, by walking the
//! forward arrays backwards from the last retained contact. Then the path
//! itself: given `A` it is the free walk conditioned to vanish on `A`, i.e.
//! independent bridges between consecutive points of `{0} ∪ A` followed by
//! an unconditioned tail.

use std::io::Write;

use rand::Rng;

use crate::error::{Error, Result};
use crate::solver::{PinningInstance, PinningSolution};
use crate::walk::{Dimension, Point, PointProbs, ReturnProbTable, WalkKernel};

/// Draws an index with probability proportional to `exp(log_weights[i])`.
fn sample_log_weights<R: Rng + ?Sized>(log_weights: &[f64], rng: &mut R) -> usize {
    let max = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = log_weights.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if u < *w {
            return i;
        }
        u -= w;
    }
    // round-off: fall back to the last index with positive weight
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(0)
}

/// Indices `j` (1-based into the contact sites) of a sampled pinned set, increasing.
pub fn sample_contact_set<R: Rng + ?Sized>(
    solution: &PinningSolution,
    table: &ReturnProbTable,
    rng: &mut R,
) -> Vec<usize> {
    let m = solution.m();
    let mut chosen = Vec::new();
    let mut j = sample_log_weights(&solution.log_forward, rng);
    let mut lw = Vec::with_capacity(m);
    while j > 0 {
        chosen.push(j);
        let tj = solution.sites[j - 1];
        lw.clear();
        lw.push(table.log_p(tj));
        for i in 1..j {
            lw.push(solution.log_forward[i] + table.log_p(tj - solution.sites[i - 1]));
        }
        j = sample_log_weights(&lw, rng);
    }
    chosen.reverse();
    chosen
}

/// Bridge sampler with cached point probabilities.
#[derive(Debug, Clone)]
pub struct BridgeSampler {
    kernel: WalkKernel,
    steps: Vec<(Point, f64)>,
    probs: PointProbs,
}

impl BridgeSampler {
    pub fn new(kernel: WalkKernel) -> Self {
        BridgeSampler {
            kernel,
            steps: kernel.steps(),
            probs: PointProbs::new(),
        }
    }

    /// Positions `X_1..X_L` of a walk from 0 conditioned on `X_L = 0`.
    ///
    /// From `x` with `j` steps left the next step `ξ` is drawn with
    /// probability `P(ξ) P(X_{j-1} = -(x+ξ)) / P(X_j = -x)`.
    pub fn sample<R: Rng + ?Sized>(&mut self, length: usize, rng: &mut R) -> Result<Vec<Point>> {
        let dim = self.kernel.dimension();
        if length > 0 && self.probs.log_prob(dim, length, [0, 0]) == f64::NEG_INFINITY {
            return Err(Error::invalid(format!("no bridge of length {length}")));
        }
        let mut path = Vec::with_capacity(length);
        let mut x: Point = [0, 0];
        let mut lw = Vec::with_capacity(self.steps.len());
        for left in (1..=length).rev() {
            lw.clear();
            for &(s, p) in &self.steps {
                let next = [x[0] + s[0], x[1] + s[1]];
                lw.push(p.ln() + self.probs.log_prob(dim, left - 1, [-next[0], -next[1]]));
            }
            let k = sample_log_weights(&lw, rng);
            let s = self.steps[k].0;
            x = [x[0] + s[0], x[1] + s[1]];
            path.push(x);
        }
        debug_assert!(length == 0 || x == [0, 0]);
        Ok(path)
    }

    fn free_steps<R: Rng + ?Sized>(&self, start: Point, length: usize, rng: &mut R) -> Vec<Point> {
        let mut x = start;
        (0..length)
            .map(|_| {
                let mut u: f64 = rng.random();
                let mut s = self.steps[self.steps.len() - 1].0;
                for &(step, p) in &self.steps {
                    if u < p {
                        s = step;
                        break;
                    }
                    u -= p;
                }
                x = [x[0] + s[0], x[1] + s[1]];
                x
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub dimension: Dimension,
    /// `X_0..X_N`.
    pub positions: Vec<Point>,
    /// Pinned set `A` as positions in `{1..N}`.
    pub pinned: Vec<usize>,
}

impl Trajectory {
    /// Number of contact sites `t` with `X_t = 0`.
    pub fn contacts(&self, sites: &[usize]) -> usize {
        sites.iter().filter(|&&t| self.positions[t] == [0, 0]).count()
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        match self.dimension {
            Dimension::One => {
                writeln!(out, "i,X_i")?;
                for (i, x) in self.positions.iter().enumerate() {
                    writeln!(out, "{},{}", i, x[0])?;
                }
            }
            Dimension::Two => {
                writeln!(out, "i,X_i_1,X_i_2")?;
                for (i, x) in self.positions.iter().enumerate() {
                    writeln!(out, "{},{},{}", i, x[0], x[1])?;
                }
            }
        }
        Ok(())
    }

    pub fn write_pinned<W: Write>(&self, mut out: W) -> Result<()> {
        for t in &self.pinned {
            writeln!(out, "{t}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct PathSamples {
    pub trajectories: Vec<Trajectory>,
    /// Mean over samples of `Σ_{t ∈ Ω} 1{X_t = 0}`.
    pub mean_contacts: f64,
    /// Standard error of that mean.
    pub stderr: f64,
}

impl PathSamples {
    pub fn contact_fraction(&self, n: usize) -> f64 {
        self.mean_contacts / n as f64
    }
}

/// One full trajectory of the polymer measure.
pub fn sample_trajectory<R: Rng + ?Sized>(
    solution: &PinningSolution,
    table: &ReturnProbTable,
    bridges: &mut BridgeSampler,
    rng: &mut R,
) -> Result<Trajectory> {
    let set = sample_contact_set(solution, table, rng);
    let pinned: Vec<usize> = set.iter().map(|&j| solution.sites[j - 1]).collect();
    let mut positions = Vec::with_capacity(solution.n + 1);
    positions.push([0, 0]);
    let mut last = 0;
    for &t in &pinned {
        positions.extend(bridges.sample(t - last, rng)?);
        last = t;
    }
    let tail = bridges.free_steps([0, 0], solution.n - last, rng);
    positions.extend(tail);
    Ok(Trajectory {
        dimension: bridges.kernel.dimension(),
        positions,
        pinned,
    })
}

/// Draws `n_samples` independent trajectories of the instance.
pub fn sample_path<R: Rng + ?Sized>(
    instance: &PinningInstance,
    table: &ReturnProbTable,
    n_samples: usize,
    rng: &mut R,
) -> Result<PathSamples> {
    if n_samples == 0 {
        return Err(Error::invalid("need at least one sample"));
    }
    let solution = instance.solve(table)?;
    let mut bridges = BridgeSampler::new(instance.kernel());
    let mut trajectories = Vec::with_capacity(n_samples);
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for _ in 0..n_samples {
        let traj = sample_trajectory(&solution, table, &mut bridges, rng)?;
        let c = traj.contacts(instance.sites()) as f64;
        sum += c;
        sum_sq += c * c;
        trajectories.push(traj);
    }
    let n = n_samples as f64;
    let mean = sum / n;
    let var = if n_samples > 1 {
        (sum_sq - n * mean * mean).max(0.0) / (n - 1.0)
    } else {
        0.0
    };
    Ok(PathSamples {
        trajectories,
        mean_contacts: mean,
        stderr: (var / n).sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::{Environment, Geometry};
    use crate::oracle;
    use crate::rng;

    fn seg(bits: &[u8]) -> Environment {
        Environment::from_bits(Geometry::Segment, bits.len(), bits.iter().map(|&b| b == 1).collect()).unwrap()
    }

    #[test]
    fn empty_environment_never_pins() {
        let kernel = WalkKernel::lazy(1).unwrap();
        let table = kernel.return_probabilities(30);
        let inst = PinningInstance::new(&seg(&[0; 30]), kernel, 2.0).unwrap();
        let sol = inst.solve(&table).unwrap();
        let mut rng = rng::seeded(1);
        for _ in 0..100 {
            assert!(sample_contact_set(&sol, &table, &mut rng).is_empty());
        }
    }

    #[test]
    fn empty_set_probability_two_sites() {
        let kernel = WalkKernel::lazy(1).unwrap();
        let table = kernel.return_probabilities(2);
        let sol = PinningInstance::new(&seg(&[1, 1]), kernel, 2f64.ln()).unwrap().solve(&table).unwrap();
        let mut rng = rng::seeded(2);
        let draws = 100_000;
        let empty = (0..draws)
            .filter(|_| sample_contact_set(&sol, &table, &mut rng).is_empty())
            .count() as f64
            / draws as f64;
        let p = 1.0 / 2.125;
        let sigma = (p * (1.0 - p) / draws as f64).sqrt();
        assert!((empty - p).abs() < 3.0 * sigma, "{empty} vs {p}");
    }

    #[test]
    fn contact_set_size_law() {
        let kernel = WalkKernel::lazy(1).unwrap();
        let table = kernel.return_probabilities(16);
        let env = seg(&[0, 1, 1, 0, 0, 1, 0, 1, 1, 0, 1, 0, 0, 0, 1, 1]);
        let eta = 0.9;
        let sol = PinningInstance::new(&env, kernel, eta).unwrap().solve(&table).unwrap();
        let exact = oracle::expansion_size_law(&env.contact_sites().0, &table, eta).unwrap();
        let draws = 100_000;
        let mut counts = vec![0usize; exact.len()];
        let mut rng = rng::seeded(3);
        for _ in 0..draws {
            counts[sample_contact_set(&sol, &table, &mut rng).len()] += 1;
        }
        for (k, &p) in exact.iter().enumerate() {
            let freq = counts[k] as f64 / draws as f64;
            let sigma = (p * (1.0 - p) / draws as f64).sqrt().max(1e-12);
            assert!((freq - p).abs() <= 3.0 * sigma + 1e-9, "|A|={k}: {freq} vs {p}");
        }
    }

    #[test]
    fn contact_set_marginals() {
        let kernel = WalkKernel::lazy(2).unwrap();
        let table = kernel.return_probabilities(12);
        let env = seg(&[1, 0, 1, 1, 0, 0, 1, 0, 1, 1, 0, 1]);
        let eta = 1.7;
        let sol = PinningInstance::new(&env, kernel, eta).unwrap().solve(&table).unwrap();
        let exact = oracle::expansion_marginals(&env.contact_sites().0, &table, eta).unwrap();
        let from_dp = sol.pinned_set_marginals();
        for (a, b) in exact.iter().zip(&from_dp) {
            assert!((a - b).abs() < 1e-12);
        }
        let draws = 50_000;
        let mut hits = vec![0usize; sol.m()];
        let mut rng = rng::seeded(4);
        for _ in 0..draws {
            for j in sample_contact_set(&sol, &table, &mut rng) {
                hits[j - 1] += 1;
            }
        }
        for (j, &p) in exact.iter().enumerate() {
            let freq = hits[j] as f64 / draws as f64;
            let sigma = (p * (1.0 - p) / draws as f64).sqrt();
            assert!((freq - p).abs() <= 3.5 * sigma, "site {j}: {freq} vs {p}");
        }
    }

    #[test]
    fn trivial_bridges() {
        let mut b = BridgeSampler::new(WalkKernel::lazy(1).unwrap());
        let mut rng = rng::seeded(5);
        assert!(b.sample(0, &mut rng).unwrap().is_empty());
        for _ in 0..50 {
            assert_eq!(b.sample(1, &mut rng).unwrap(), vec![[0, 0]]);
        }
        let mut b2 = BridgeSampler::new(WalkKernel::lazy(2).unwrap());
        for _ in 0..50 {
            assert_eq!(b2.sample(9, &mut rng).unwrap().last(), Some(&[0, 0]));
        }
    }

    #[test]
    fn bridge_midpoint_law() {
        // P(X_2 = x | X_4 = 0) = P(X_2 = x)^2 / p_4 with P(X_2 = x) = C(4, 2 + x)/16
        let binom = [1.0, 4.0, 6.0, 4.0, 1.0];
        let p4 = 70.0 / 256.0;
        let exact: Vec<f64> = binom.iter().map(|c| (c / 16.0) * (c / 16.0) / p4).collect();
        assert!((exact.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        let mut b = BridgeSampler::new(WalkKernel::lazy(1).unwrap());
        let mut rng = rng::seeded(6);
        let draws = 100_000;
        let mut counts = [0usize; 5];
        for _ in 0..draws {
            let path = b.sample(4, &mut rng).unwrap();
            counts[(path[1][0] + 2) as usize] += 1;
        }
        for (x, &p) in exact.iter().enumerate() {
            let freq = counts[x] as f64 / draws as f64;
            let sigma = (p * (1.0 - p) / draws as f64).sqrt();
            assert!((freq - p).abs() <= 3.0 * sigma, "x={}: {freq} vs {p}", x as i64 - 2);
        }
    }

    #[test]
    fn trajectories_vanish_on_pinned_set() {
        for d in [1, 2] {
            let kernel = WalkKernel::lazy(d).unwrap();
            let table = kernel.return_probabilities(120);
            let env = Environment::bernoulli(120, Geometry::Segment, 0.5, 9).unwrap();
            let inst = PinningInstance::new(&env, kernel, 1.2).unwrap();
            let mut rng = rng::seeded(7);
            let samples = sample_path(&inst, &table, 200, &mut rng).unwrap();
            for traj in &samples.trajectories {
                assert_eq!(traj.positions.len(), 121);
                assert_eq!(traj.positions[0], [0, 0]);
                for &t in &traj.pinned {
                    assert_eq!(traj.positions[t], [0, 0]);
                }
                for w in traj.positions.windows(2) {
                    assert!((w[1][0] - w[0][0]).abs() <= 1 && (w[1][1] - w[0][1]).abs() <= 1);
                    if d == 1 {
                        assert_eq!(w[1][1], 0);
                    }
                }
            }
        }
    }

    #[test]
    fn unpinned_paths_are_free_walks() {
        let kernel = WalkKernel::lazy(1).unwrap();
        let table = kernel.return_probabilities(10);
        let inst = PinningInstance::new(&seg(&[0; 10]), kernel, 3.0).unwrap();
        let mut rng = rng::seeded(8);
        let samples = sample_path(&inst, &table, 20_000, &mut rng).unwrap();
        // free lazy walk: P(X_10 = 0) = p_10
        let at0 = samples.trajectories.iter().filter(|t| t.positions[10] == [0, 0]).count() as f64 / 20_000.0;
        let p = table.p(10);
        assert!((at0 - p).abs() < 3.0 * (p * (1.0 - p) / 20_000.0).sqrt());
    }

    #[test]
    fn fixed_seed_reproduces() {
        let kernel = WalkKernel::lazy(2).unwrap();
        let table = kernel.return_probabilities(60);
        let env = Environment::periodic(60, Geometry::Segment, 3).unwrap();
        let inst = PinningInstance::new(&env, kernel, 1.0).unwrap();
        let a = sample_path(&inst, &table, 5, &mut rng::seeded(11)).unwrap();
        let b = sample_path(&inst, &table, 5, &mut rng::seeded(11)).unwrap();
        assert_eq!(a.trajectories, b.trajectories);
    }

    #[test]
    fn csv_layout() {
        let traj = Trajectory {
            dimension: Dimension::Two,
            positions: vec![[0, 0], [1, -1]],
            pinned: vec![],
        };
        let mut out = Vec::new();
        traj.write_csv(&mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "i,X_i_1,X_i_2\n0,0,0\n1,1,-1\n");
    }
}
