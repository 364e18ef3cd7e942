//! Dilution fields ω on a segment `{1..N}` or a square `{1..N}^2`.
//!
//! Sites are addressed by 1-based positions. On the square, position `i`
//! is the raster index `(y - 1) N + x` of the site `(x, y)`; rows of the
//! square share `y`, and "left to right" means increasing `x`.

use std::fmt;
use std::io::Write;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Geometry {
    Segment,
    Square,
}

impl fmt::Display for Geometry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Geometry::Segment => f.write_str("segment"),
            Geometry::Square => f.write_str("square"),
        }
    }
}

impl Geometry {
    pub fn volume(self, n: usize) -> usize {
        match self {
            Geometry::Segment => n,
            Geometry::Square => n * n,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Environment {
    geometry: Geometry,
    n: usize,
    bits: Vec<bool>,
    seed: Option<u64>,
}

/// Ordered contact sites `t_1 < ... < t_m` (1-based positions with ω = 1).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContactSites(pub Vec<usize>);

impl ContactSites {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    /// Successive gaps `t_i - t_{i-1}` with `t_0 = 0`.
    pub fn gaps(&self) -> Vec<usize> {
        let mut prev = 0;
        self.0
            .iter()
            .map(|&t| {
                let g = t - prev;
                prev = t;
                g
            })
            .collect()
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "index,t")?;
        for (j, t) in self.0.iter().enumerate() {
            writeln!(out, "{},{}", j + 1, t)?;
        }
        Ok(())
    }
}

fn check_density(density: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&density) {
        return Err(Error::invalid(format!("density {density} outside [0, 1]")));
    }
    Ok(())
}

fn check_size(n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::invalid("N must be at least 1"));
    }
    Ok(())
}

impl Environment {
    pub fn from_bits(geometry: Geometry, n: usize, bits: Vec<bool>) -> Result<Self> {
        check_size(n)?;
        if bits.len() != geometry.volume(n) {
            return Err(Error::invalid(format!(
                "{} bits for a {geometry} of side {n}",
                bits.len()
            )));
        }
        Ok(Environment {
            geometry,
            n,
            bits,
            seed: None,
        })
    }

    /// Rebuilds a field from its contact positions.
    pub fn from_sites(geometry: Geometry, n: usize, sites: &ContactSites) -> Result<Self> {
        check_size(n)?;
        let mut bits = vec![false; geometry.volume(n)];
        for &t in sites.as_slice() {
            if t == 0 || t > bits.len() {
                return Err(Error::invalid(format!("site {t} outside the domain")));
            }
            bits[t - 1] = true;
        }
        Ok(Environment {
            geometry,
            n,
            bits,
            seed: None,
        })
    }

    pub fn constant(geometry: Geometry, n: usize, value: bool) -> Result<Self> {
        Self::from_bits(geometry, n, vec![value; geometry.volume(n)])
    }

    /// Independent Bernoulli bits with the given density.
    pub fn bernoulli(n: usize, geometry: Geometry, density: f64, seed: u64) -> Result<Self> {
        check_size(n)?;
        check_density(density)?;
        let mut rng = rng::substream(seed, rng::Purpose::Environment, 0, 0);
        let bits = (0..geometry.volume(n))
            .map(|_| rng.random_bool(density))
            .collect();
        Ok(Environment {
            geometry,
            n,
            bits,
            seed: Some(seed),
        })
    }

    /// ω_i = 1 iff `gap` divides the position `i`.
    pub fn periodic(n: usize, geometry: Geometry, gap: usize) -> Result<Self> {
        check_size(n)?;
        if gap == 0 {
            return Err(Error::invalid("gap must be at least 1"));
        }
        let bits = (1..=geometry.volume(n)).map(|i| i % gap == 0).collect();
        Self::from_bits(geometry, n, bits)
    }

    /// Segment split in thirds, each filled with Bernoulli bits of its own density.
    /// Site `i` belongs to third `floor(3 (i - 1) / N)`.
    pub fn block(n: usize, thirds: [f64; 3], seed: u64) -> Result<Self> {
        check_size(n)?;
        for &d in &thirds {
            check_density(d)?;
        }
        let mut rng = rng::substream(seed, rng::Purpose::Environment, 1, 0);
        let bits = (0..n)
            .map(|i| rng.random_bool(thirds[(3 * i) / n]))
            .collect();
        Ok(Environment {
            geometry: Geometry::Segment,
            n,
            bits,
            seed: Some(seed),
        })
    }

    /// Prefix family ω_i = 1 iff `i <= ceil(sqrt(N))`, whose density vanishes.
    pub fn vanishing(n: usize) -> Result<Self> {
        check_size(n)?;
        let cut = ceil_sqrt(n);
        let bits = (1..=n).map(|i| i <= cut).collect();
        Self::from_bits(Geometry::Segment, n, bits)
    }

    pub fn geometry(&self) -> Geometry {
        self.geometry
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn volume(&self) -> usize {
        self.bits.len()
    }

    /// ω at 1-based position `i`.
    pub fn get(&self, i: usize) -> bool {
        self.bits[i - 1]
    }

    /// ω at the square site `(x, y)`, both 1-based.
    pub fn get_xy(&self, x: usize, y: usize) -> bool {
        self.bits[(y - 1) * self.n + (x - 1)]
    }

    pub fn ones(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn density(&self) -> f64 {
        self.ones() as f64 / self.volume() as f64
    }

    pub fn contact_sites(&self) -> ContactSites {
        ContactSites(
            self.bits
                .iter()
                .enumerate()
                .filter(|(_, &b)| b)
                .map(|(i, _)| i + 1)
                .collect(),
        )
    }

    /// Coordinates `(x, y)` of a raster position on the square.
    pub fn coords(&self, position: usize) -> (usize, usize) {
        ((position - 1) % self.n + 1, (position - 1) / self.n + 1)
    }

    pub fn require(&self, geometry: Geometry) -> Result<()> {
        if self.geometry != geometry {
            return Err(Error::Geometry(format!(
                "expected a {geometry} environment, got a {}",
                self.geometry
            )));
        }
        Ok(())
    }

    /// Coarse-grains the square into `K x K` cells and classifies cells and rows.
    pub fn analyze_cells(&self, k: usize, rho: f64, zeta: f64) -> Result<CellAnalysis> {
        self.require(Geometry::Square)?;
        if k == 0 || !self.n.is_multiple_of(k) {
            return Err(Error::invalid(format!(
                "cell side {k} does not divide N = {}",
                self.n
            )));
        }
        if !(rho > 0.0 && rho <= 1.0) || !(zeta > 0.0 && zeta <= 1.0) {
            return Err(Error::invalid(format!(
                "thresholds must lie in (0, 1]: rho = {rho}, zeta = {zeta}"
            )));
        }
        let per_side = self.n / k;
        let mut counts = vec![0usize; per_side * per_side];
        for y in 1..=self.n {
            for x in 1..=self.n {
                if self.get_xy(x, y) {
                    counts[((y - 1) / k) * per_side + (x - 1) / k] += 1;
                }
            }
        }
        let cell_threshold = rho * (k * k) as f64;
        let good_cells: Vec<bool> = counts
            .iter()
            .map(|&c| c as f64 >= cell_threshold)
            .collect();
        let row_threshold = zeta * per_side as f64;
        let good_rows: Vec<bool> = good_cells
            .chunks(per_side)
            .map(|row| row.iter().filter(|&&g| g).count() as f64 >= row_threshold)
            .collect();
        let good_cell_fraction =
            good_cells.iter().filter(|&&g| g).count() as f64 / good_cells.len() as f64;
        let good_row_fraction =
            good_rows.iter().filter(|&&g| g).count() as f64 / good_rows.len() as f64;
        Ok(CellAnalysis {
            k,
            rho,
            zeta,
            per_side,
            counts,
            good_cells,
            good_rows,
            good_cell_fraction,
            good_row_fraction,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&EnvironmentFile::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: EnvironmentFile = serde_json::from_str(text)?;
        file.try_into()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = self.to_json()?;
        text.push('\n');
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

pub(crate) fn ceil_sqrt(n: usize) -> usize {
    let mut r = (n as f64).sqrt() as usize;
    while r * r < n {
        r += 1;
    }
    while r > 0 && (r - 1) * (r - 1) >= n {
        r -= 1;
    }
    r
}

/// Good-cell / good-row classification of a square environment.
///
/// A cell is good when it holds at least `rho K^2` ones; a row of cells is
/// good when it holds at least `zeta N / K` good cells.
#[derive(Debug, Clone)]
pub struct CellAnalysis {
    pub k: usize,
    pub rho: f64,
    pub zeta: f64,
    /// Cells per side, `N / K`.
    pub per_side: usize,
    /// Ones per cell, row-major over cells.
    pub counts: Vec<usize>,
    pub good_cells: Vec<bool>,
    pub good_rows: Vec<bool>,
    pub good_cell_fraction: f64,
    pub good_row_fraction: f64,
}

impl CellAnalysis {
    pub fn is_good_cell(&self, cx: usize, cy: usize) -> bool {
        self.good_cells[cy * self.per_side + cx]
    }

    pub fn good_row_count(&self) -> usize {
        self.good_rows.iter().filter(|&&g| g).count()
    }
}

/// Largest admissible `rho` for density `delta`: `delta / (2 - delta)`.
pub fn max_cell_threshold(delta: f64) -> f64 {
    delta / (2.0 - delta)
}

/// Guaranteed good-cell fraction `rho / (1 + rho)` when `rho < delta/(2 - delta)`.
pub fn good_cell_fraction_bound(rho: f64) -> f64 {
    rho / (1.0 + rho)
}

/// Whether the row threshold is small enough for the good-row counting
/// bound `zeta / (1 + zeta)` to follow from the good-cell bound: a fraction
/// `h` of good rows forces at most `(1 - h) zeta + h` good cells, so
/// `zeta <= rho / (2 + rho)` is needed.
pub fn row_threshold_is_admissible(rho: f64, zeta: f64) -> bool {
    zeta > 0.0 && zeta <= rho / (2.0 + rho)
}

/// On-disk form: bits stored as `[value, run_length]` pairs.
#[derive(Debug, Serialize, Deserialize)]
struct EnvironmentFile {
    geometry: Geometry,
    #[serde(rename = "N")]
    n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    bits: Vec<(u8, usize)>,
}

impl From<&Environment> for EnvironmentFile {
    fn from(env: &Environment) -> Self {
        let mut runs: Vec<(u8, usize)> = Vec::new();
        for &b in &env.bits {
            let v = b as u8;
            match runs.last_mut() {
                Some((last, len)) if *last == v => *len += 1,
                _ => runs.push((v, 1)),
            }
        }
        EnvironmentFile {
            geometry: env.geometry,
            n: env.n,
            seed: env.seed,
            bits: runs,
        }
    }
}

impl TryFrom<EnvironmentFile> for Environment {
    type Error = Error;

    fn try_from(file: EnvironmentFile) -> Result<Self> {
        let mut bits = Vec::with_capacity(file.geometry.volume(file.n));
        for (value, len) in file.bits {
            let b = match value {
                0 => false,
                1 => true,
                other => return Err(Error::Format(format!("bit value {other} is not 0 or 1"))),
            };
            bits.extend(std::iter::repeat_n(b, len));
        }
        let mut env = Environment::from_bits(file.geometry, file.n, bits)
            .map_err(|e| Error::Format(e.to_string()))?;
        env.seed = file.seed;
        Ok(env)
    }
}
