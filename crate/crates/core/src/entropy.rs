//! Discretized entropy models and the integer tables that drive the coder.
//!
//! Latents are integers on a grid of `2^P` unit-width bins centred on
//! `-2^(P-1) ..= 2^(P-1) - 1`. The mass of bin `b` is `F(b + ½) - F(b - ½)`;
//! the two extreme bins absorb the tails, so the masses of a grid always sum
//! to one.

use crate::error::{invalid, Result};

/// Default number of bits of latent precision.
pub const DEFAULT_PRECISION: u32 = 10;
/// Bits of the rANS frequency tables; every table totals `2^CDF_BITS`.
pub const CDF_BITS: u32 = 16;
pub const CDF_TOTAL: u32 = 1 << CDF_BITS;
/// Lower bound applied to every probability before taking logarithms.
pub const PMF_FLOOR: f64 = 1e-9;

pub const DEFAULT_SCALE_LEVELS: usize = 64;
pub const DEFAULT_SCALE_MIN: f64 = 0.05;
pub const DEFAULT_SCALE_MAX: f64 = 256.0;

/// Uniform, unit-width bins centred on the integers of `min()..=max()`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BinGrid {
    precision: u32,
}

impl Default for BinGrid {
    fn default() -> Self {
        Self {
            precision: DEFAULT_PRECISION,
        }
    }
}

impl BinGrid {
    /// `precision` must leave room for at least one count per bin in a
    /// `2^16` table, hence `1..=15`.
    pub fn new(precision: u32) -> Result<Self> {
        if !(1..CDF_BITS).contains(&precision) {
            return invalid(format!("precision {precision} outside 1..{CDF_BITS}"));
        }
        Ok(Self { precision })
    }

    pub fn precision(&self) -> u32 {
        self.precision
    }

    pub fn size(&self) -> usize {
        1 << self.precision
    }

    pub fn min(&self) -> i32 {
        -(1 << (self.precision - 1))
    }

    pub fn max(&self) -> i32 {
        (1 << (self.precision - 1)) - 1
    }

    pub fn contains(&self, value: i32) -> bool {
        (self.min()..=self.max()).contains(&value)
    }

    /// Symbol index of an in-range bin value.
    pub fn index_of(&self, value: i32) -> usize {
        debug_assert!(self.contains(value));
        (value - self.min()) as usize
    }

    pub fn value_of(&self, index: usize) -> i32 {
        index as i32 + self.min()
    }
}

pub fn logistic_cdf(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn gaussian_cdf(x: f64, sigma: f64) -> Result<f64> {
    if !(sigma > 0.0) {
        return invalid(format!("gaussian sigma must be positive, got {sigma}"));
    }
    Ok(std_normal_cdf(x / sigma))
}

fn std_normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

/// A per-element coding distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Distribution {
    /// Standard logistic (location 0, scale 1), the fixed top-level prior.
    Logistic,
    /// Zero-mean Gaussian with the given standard deviation.
    Gaussian(f64),
}

impl Distribution {
    pub fn gaussian(sigma: f64) -> Result<Self> {
        if !(sigma > 0.0) || !sigma.is_finite() {
            return invalid(format!("gaussian sigma must be positive and finite, got {sigma}"));
        }
        Ok(Distribution::Gaussian(sigma))
    }

    pub fn cdf(&self, x: f64) -> f64 {
        match *self {
            Distribution::Logistic => logistic_cdf(x),
            Distribution::Gaussian(s) => std_normal_cdf(x / s),
        }
    }

    /// Survival function `1 - F(x)`; both families are symmetric.
    fn sf(&self, x: f64) -> f64 {
        self.cdf(-x)
    }

    fn check(&self) -> Result<()> {
        match *self {
            Distribution::Gaussian(s) if !(s > 0.0) => {
                invalid(format!("gaussian sigma must be positive, got {s}"))
            }
            _ => Ok(()),
        }
    }

    fn bin_mass(&self, bin: i32, grid: &BinGrid) -> f64 {
        let b = bin as f64;
        let lower_open = bin == grid.min();
        let upper_open = bin == grid.max();
        // Differences are taken on the side of zero where they are small
        // numbers, which keeps the far tails accurate.
        if bin <= 0 {
            let hi = if upper_open { 1.0 } else { self.cdf(b + 0.5) };
            let lo = if lower_open { 0.0 } else { self.cdf(b - 0.5) };
            hi - lo
        } else {
            let lo = if lower_open { 1.0 } else { self.sf(b - 0.5) };
            let hi = if upper_open { 0.0 } else { self.sf(b + 0.5) };
            lo - hi
        }
    }
}

/// Probability of bin `bin` under `dist`.
pub fn bin_pmf(dist: Distribution, bin: i32, grid: &BinGrid) -> Result<f64> {
    dist.check()?;
    if !grid.contains(bin) {
        return invalid(format!("bin {bin} outside [{}, {}]", grid.min(), grid.max()));
    }
    Ok(dist.bin_mass(bin, grid))
}

/// Masses of every bin, in symbol-index order.
pub fn pmf(dist: Distribution, grid: &BinGrid) -> Result<Vec<f64>> {
    dist.check()?;
    Ok((grid.min()..=grid.max()).map(|b| dist.bin_mass(b, grid)).collect())
}

/// Ideal code length `Σ -log2 max(p, 1e-9)` of `symbols` under per-element
/// distributions.
pub fn estimate_rate_bits(symbols: &[i32], dists: &[Distribution], grid: &BinGrid) -> Result<f64> {
    if symbols.len() != dists.len() {
        return invalid(format!(
            "{} symbols but {} distributions",
            symbols.len(),
            dists.len()
        ));
    }
    symbols.iter().zip(dists).try_fold(0.0, |acc, (&s, &d)| {
        Ok(acc + bits_for_probability(bin_pmf(d, s, grid)?))
    })
}

pub fn bits_for_probability(p: f64) -> f64 {
    -p.max(PMF_FLOOR).log2()
}

/// Cumulative frequency table with `symbols + 1` entries from 0 to `2^16`.
/// Every symbol has frequency at least one.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuantizedCdfTable {
    cdf: Vec<u32>,
}

impl QuantizedCdfTable {
    /// Validates a raw cumulative array.
    pub fn from_cdf(cdf: Vec<u32>) -> Result<Self> {
        if cdf.len() < 2 {
            return invalid("a table needs at least one symbol");
        }
        if cdf[0] != 0 || *cdf.last().unwrap() != CDF_TOTAL {
            return invalid(format!("table must run from 0 to {CDF_TOTAL}"));
        }
        if cdf.windows(2).any(|w| w[1] <= w[0]) {
            return invalid("table is not strictly increasing");
        }
        Ok(Self { cdf })
    }

    /// Builds a table from integer frequencies summing to `2^16`.
    pub fn from_frequencies(freqs: &[u32]) -> Result<Self> {
        let mut cdf = Vec::with_capacity(freqs.len() + 1);
        let mut acc = 0u32;
        cdf.push(0);
        for &f in freqs {
            acc = acc.saturating_add(f);
            cdf.push(acc);
        }
        Self::from_cdf(cdf)
    }

    pub fn symbols(&self) -> usize {
        self.cdf.len() - 1
    }

    pub fn cdf(&self) -> &[u32] {
        &self.cdf
    }

    pub fn start(&self, symbol: usize) -> u32 {
        self.cdf[symbol]
    }

    pub fn freq(&self, symbol: usize) -> u32 {
        self.cdf[symbol + 1] - self.cdf[symbol]
    }

    pub fn frequencies(&self) -> Vec<u32> {
        self.cdf.windows(2).map(|w| w[1] - w[0]).collect()
    }

    /// Symbol whose interval `[start, start + freq)` contains `slot`.
    pub fn symbol_for_slot(&self, slot: u32) -> usize {
        debug_assert!(slot < CDF_TOTAL);
        self.cdf.partition_point(|&c| c <= slot) - 1
    }

    /// Code length of `symbol` under this table.
    pub fn bits(&self, symbol: usize) -> f64 {
        (CDF_BITS as f64) - (self.freq(symbol) as f64).log2()
    }
}

/// Converts a PMF over the grid into a `2^16`-total frequency table.
///
/// Frequencies are `floor(p · 2^16)` plus one extra count for the bins with
/// the largest fractional remainders until the total is reached. Bins left
/// at zero are raised to one; the surplus this creates is removed one count
/// at a time from whichever bin is currently largest (lowest index on ties).
pub fn quantize_cdf(pmf: &[f64], grid: &BinGrid) -> Result<QuantizedCdfTable> {
    if pmf.len() != grid.size() {
        return invalid(format!("pmf has {} bins, grid has {}", pmf.len(), grid.size()));
    }
    if pmf.iter().any(|&p| !(p >= 0.0)) {
        return invalid("pmf has negative or NaN entries");
    }
    let sum: f64 = pmf.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return invalid(format!("pmf sums to {sum}, not 1"));
    }

    let total = CDF_TOTAL as f64;
    let mut freqs: Vec<u32> = pmf.iter().map(|&p| (p * total).floor() as u32).collect();
    let assigned: u64 = freqs.iter().map(|&f| f as u64).sum();
    let mut deficit = (CDF_TOTAL as i64) - assigned as i64;
    if deficit > 0 {
        let mut order: Vec<usize> = (0..pmf.len()).collect();
        let rem = |i: usize| pmf[i] * total - (pmf[i] * total).floor();
        order.sort_by(|&a, &b| rem(b).total_cmp(&rem(a)).then(a.cmp(&b)));
        for &i in order.iter().cycle().take(deficit as usize) {
            freqs[i] += 1;
        }
        deficit = 0;
    }

    let mut surplus: i64 = -deficit;
    for f in freqs.iter_mut() {
        if *f == 0 {
            *f = 1;
            surplus += 1;
        }
    }
    if surplus > 0 {
        let mut heap: std::collections::BinaryHeap<(u32, std::cmp::Reverse<usize>)> = freqs
            .iter()
            .enumerate()
            .map(|(i, &f)| (f, std::cmp::Reverse(i)))
            .collect();
        while surplus > 0 {
            let (f, std::cmp::Reverse(i)) = heap.pop().expect("non-empty");
            if f <= 1 {
                return invalid("grid too fine to give every bin a count");
            }
            freqs[i] = f - 1;
            heap.push((f - 1, std::cmp::Reverse(i)));
            surplus -= 1;
        }
    }
    QuantizedCdfTable::from_frequencies(&freqs)
}

/// Table for the standard logistic prior.
pub fn prior_table(grid: &BinGrid) -> Result<QuantizedCdfTable> {
    quantize_cdf(&pmf(Distribution::Logistic, grid)?, grid)
}

/// Log-spaced σ levels, each with a precomputed Gaussian table.
#[derive(Debug, Clone)]
pub struct ScaleTable {
    grid: BinGrid,
    levels: Vec<f64>,
    tables: Vec<QuantizedCdfTable>,
}

impl ScaleTable {
    pub fn new(count: usize, min: f64, max: f64, grid: BinGrid) -> Result<Self> {
        if count < 2 || !(min > 0.0) || !(max > min) || !max.is_finite() {
            return invalid(format!("bad scale table parameters ({count}, {min}, {max})"));
        }
        let (lo, hi) = (min.ln(), max.ln());
        let step = (hi - lo) / (count - 1) as f64;
        let levels: Vec<f64> = (0..count)
            .map(|i| match i {
                0 => min,
                _ if i == count - 1 => max,
                _ => (lo + step * i as f64).exp(),
            })
            .collect();
        let tables = levels
            .iter()
            .map(|&s| quantize_cdf(&pmf(Distribution::Gaussian(s), &grid)?, &grid))
            .collect::<Result<_>>()?;
        Ok(Self {
            grid,
            levels,
            tables,
        })
    }

    /// 64 levels over `[0.05, 256]`.
    pub fn with_grid(grid: BinGrid) -> Result<Self> {
        Self::new(DEFAULT_SCALE_LEVELS, DEFAULT_SCALE_MIN, DEFAULT_SCALE_MAX, grid)
    }

    pub fn grid(&self) -> BinGrid {
        self.grid
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn min(&self) -> f64 {
        self.levels[0]
    }

    pub fn max(&self) -> f64 {
        *self.levels.last().unwrap()
    }

    pub fn table(&self, level: usize) -> &QuantizedCdfTable {
        &self.tables[level]
    }

    /// Index of the smallest level `>= sigma` after clamping into range.
    /// NaN maps to the widest level.
    pub fn quantize_sigma(&self, sigma: f64) -> usize {
        if sigma.is_nan() {
            return self.levels.len() - 1;
        }
        self.levels
            .partition_point(|&l| l < sigma)
            .min(self.levels.len() - 1)
    }
}
