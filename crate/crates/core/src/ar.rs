//! Exact check that a nested latent chain reproduces an autoregressive model.
//!
//! A binary autoregressive model over `T` pixels factorizes
//! `p(x) = Π_t p(x_t | x_{t-1}, …, x_1)`. The nested chain has `L = T`
//! single-component latents; latent `z_{L-t+1}` carries pixel `x_t` and is
//! decoded through `p(z_{L-t+1} | z_{L-t+2}, …, z_L)`, so decoding runs from
//! `z_L` (the first pixel) down to `z_1` (the last). Everything is checked by
//! full enumeration of the `2^T` outcomes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{invalid, Error, Result};

/// Largest pixel count accepted, keeping enumeration at 4096 outcomes.
pub const MAX_PIXELS: usize = 12;

/// Packs bits `bits[0], bits[1], …` into an index with `bits[0]` as bit 0.
fn history_index(bits: &[u8]) -> usize {
    bits.iter().enumerate().map(|(i, &b)| (b as usize) << i).sum()
}

fn outcome_bits(index: usize, t: usize) -> Vec<u8> {
    (0..t).map(|i| ((index >> i) & 1) as u8).collect()
}

fn check_pixels(t: usize) -> Result<()> {
    if t == 0 {
        return invalid("need at least one pixel");
    }
    if t > MAX_PIXELS {
        return Err(Error::ResourceBound(format!(
            "{t} pixels exceeds the enumeration cap of {MAX_PIXELS}"
        )));
    }
    Ok(())
}

/// `p(x_t = 1 | history)` tables; `conditionals[t]` has `2^t` entries indexed
/// by the packed history `x_1 … x_t` (0-based pixel `t`).
#[derive(Debug, Clone, PartialEq)]
pub struct TinyArModel {
    conditionals: Vec<Vec<f64>>,
}

impl TinyArModel {
    pub fn new(conditionals: Vec<Vec<f64>>) -> Result<Self> {
        check_pixels(conditionals.len())?;
        for (t, table) in conditionals.iter().enumerate() {
            if table.len() != 1 << t {
                return invalid(format!("pixel {t} table has {} entries, need {}", table.len(), 1 << t));
            }
            if let Some(p) = table.iter().find(|p| !(0.0..=1.0).contains(*p)) {
                return invalid(format!("conditional probability {p} outside [0, 1]"));
            }
        }
        Ok(Self { conditionals })
    }

    /// Seeded model with every conditional uniform on `[0, 1]`.
    pub fn random(pixels: usize, seed: u64) -> Result<Self> {
        check_pixels(pixels)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::new(
            (0..pixels)
                .map(|t| (0..1usize << t).map(|_| rng.random::<f64>()).collect())
                .collect(),
        )
    }

    /// Seeded model whose conditionals only depend on the last `context` pixels.
    pub fn random_markov(pixels: usize, context: usize, seed: u64) -> Result<Self> {
        check_pixels(pixels)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut conditionals = Vec::with_capacity(pixels);
        for t in 0..pixels {
            let k = context.min(t);
            let short: Vec<f64> = (0..1usize << k).map(|_| rng.random()).collect();
            // recent pixels t-k..t-1 sit in the high bits of the full history
            conditionals.push((0..1usize << t).map(|h| short[h >> (t - k)]).collect());
        }
        Self::new(conditionals)
    }

    pub fn uniform(pixels: usize) -> Result<Self> {
        check_pixels(pixels)?;
        Self::new((0..pixels).map(|t| vec![0.5; 1 << t]).collect())
    }

    pub fn pixels(&self) -> usize {
        self.conditionals.len()
    }

    pub fn conditional(&self, t: usize, history: &[u8]) -> f64 {
        self.conditionals[t][history_index(history)]
    }

    pub fn evidence(&self, x: &[u8]) -> Result<f64> {
        check_outcome(x, self.pixels())?;
        Ok((0..x.len())
            .map(|t| {
                let p1 = self.conditional(t, &x[..t]);
                if x[t] == 1 {
                    p1
                } else {
                    1.0 - p1
                }
            })
            .product())
    }
}

fn check_outcome(x: &[u8], pixels: usize) -> Result<()> {
    if x.len() != pixels {
        return invalid(format!("outcome has {} pixels, model has {pixels}", x.len()));
    }
    if x.iter().any(|&b| b > 1) {
        return invalid("outcome must be binary");
    }
    Ok(())
}

/// Chain of `L` binary latents. `tables[j]` is the conditional distribution
/// `[p(0), p(1)]` of the latent decoded `j`-th, i.e. `z_{L-j}`, given the
/// already decoded `z_L, …, z_{L-j+1}` packed with `z_L` as bit 0. `tables[0]`
/// is the prior `p(z_L)`.
#[derive(Debug, Clone, PartialEq)]
pub struct NestedChainModel {
    tables: Vec<Vec<[f64; 2]>>,
    /// Number of nearest decoded latents each conditional may look at.
    context: usize,
}

impl NestedChainModel {
    pub fn levels(&self) -> usize {
        self.tables.len()
    }

    pub fn context(&self) -> usize {
        self.context
    }

    /// `p(z_L)`.
    pub fn prior(&self) -> [f64; 2] {
        self.tables[0][0]
    }

    /// `p(z_l | decoded latents above it)`; `above[0]` is `z_L`.
    /// Only the nearest `context` latents are looked at.
    pub fn conditional(&self, level: usize, above: &[u8]) -> [f64; 2] {
        let j = self.levels() - level;
        debug_assert_eq!(above.len(), j);
        let k = self.context.min(j);
        self.tables[j][history_index(&above[j - k..])]
    }

    /// Evidence of a latent configuration `z = (z_1, …, z_L)`.
    pub fn latent_evidence(&self, z: &[u8]) -> Result<f64> {
        check_outcome(z, self.levels())?;
        let l = self.levels();
        // decode order: z_L first
        let decoded: Vec<u8> = z.iter().rev().copied().collect();
        Ok((1..=l)
            .rev()
            .map(|level| {
                let j = l - level;
                self.conditional(level, &decoded[..j])[decoded[j] as usize]
            })
            .product())
    }

    /// Evidence of an image: pixel `x_t` is latent `z_{L-t+1}`.
    pub fn evidence(&self, x: &[u8]) -> Result<f64> {
        check_outcome(x, self.levels())?;
        let z: Vec<u8> = x.iter().rev().copied().collect();
        self.latent_evidence(&z)
    }
}

/// Builds the nested chain that decodes pixel `t` through latent `z_{L-t+1}`.
pub fn build_nested(ar: &TinyArModel) -> Result<NestedChainModel> {
    check_pixels(ar.pixels())?;
    let tables = ar
        .conditionals
        .iter()
        .map(|table| table.iter().map(|&p1| [1.0 - p1, p1]).collect())
        .collect();
    Ok(NestedChainModel {
        tables,
        context: ar.pixels(),
    })
}

/// Nested chain whose conditionals see only the nearest `context` latents.
/// Each truncated conditional is the exact `p(x_t | last context pixels)`
/// under the autoregressive joint.
pub fn build_truncated(ar: &TinyArModel, context: usize) -> Result<NestedChainModel> {
    let t_max = ar.pixels();
    check_pixels(t_max)?;
    if context > t_max {
        return invalid(format!("context {context} exceeds {t_max} pixels"));
    }
    let mut tables = Vec::with_capacity(t_max);
    for t in 0..t_max {
        let k = context.min(t);
        // joint mass of (recent history, x_t), marginalizing older pixels
        let mut mass = vec![[0.0f64; 2]; 1 << k];
        for h in 0..1usize << t {
            let hist = outcome_bits(h, t);
            let p_hist = ar.evidence_prefix(&hist);
            let p1 = ar.conditional(t, &hist);
            let recent = h >> (t - k);
            mass[recent][0] += p_hist * (1.0 - p1);
            mass[recent][1] += p_hist * p1;
        }
        let table = mass
            .into_iter()
            .map(|[m0, m1]| {
                let s = m0 + m1;
                if s > 0.0 {
                    [m0 / s, m1 / s]
                } else {
                    [0.5, 0.5]
                }
            })
            .collect();
        tables.push(table);
    }
    Ok(NestedChainModel { tables, context })
}

impl TinyArModel {
    /// `p(x_1 … x_t)` for a prefix.
    fn evidence_prefix(&self, prefix: &[u8]) -> f64 {
        (0..prefix.len())
            .map(|t| {
                let p1 = self.conditional(t, &prefix[..t]);
                if prefix[t] == 1 {
                    p1
                } else {
                    1.0 - p1
                }
            })
            .product()
    }
}

/// All `2^T` outcomes of a `T`-pixel binary image.
pub fn outcomes(pixels: usize) -> impl Iterator<Item = Vec<u8>> {
    (0..1usize << pixels).map(move |i| outcome_bits(i, pixels))
}

/// Largest `|p_AR(x) - p_nested(x)|` over every outcome.
pub fn max_evidence_gap(ar: &TinyArModel, nested: &NestedChainModel) -> Result<f64> {
    if ar.pixels() != nested.levels() {
        return invalid("models cover different pixel counts");
    }
    outcomes(ar.pixels()).try_fold(0.0f64, |gap, x| {
        Ok(gap.max((ar.evidence(&x)? - nested.evidence(&x)?).abs()))
    })
}

/// Evidence gap between `ar` and its nested chain truncated to `context`
/// conditioning latents. Zero whenever `ar` genuinely uses at most that
/// much context.
pub fn limited_context_check(ar: &TinyArModel, context: usize) -> Result<f64> {
    max_evidence_gap(ar, &build_truncated(ar, context)?)
}

#[derive(Debug, Clone, Serialize)]
pub struct ArCheckReport {
    pub pixels: usize,
    pub seed: u64,
    pub trials: usize,
    pub max_gap: f64,
    pub max_code_length_gap_bits: f64,
    pub total_mass_error: f64,
}

/// Runs `trials` random models (seeds `seed, seed+1, …`) and reports the
/// worst evidence and code-length gaps.
pub fn run_check(pixels: usize, seed: u64, trials: usize) -> Result<ArCheckReport> {
    check_pixels(pixels)?;
    let mut report = ArCheckReport {
        pixels,
        seed,
        trials,
        max_gap: 0.0,
        max_code_length_gap_bits: 0.0,
        total_mass_error: 0.0,
    };
    for i in 0..trials as u64 {
        let ar = TinyArModel::random(pixels, seed.wrapping_add(i))?;
        let nested = build_nested(&ar)?;
        let (mut sum_ar, mut sum_nested) = (0.0, 0.0);
        for x in outcomes(pixels) {
            let (pa, pn) = (ar.evidence(&x)?, nested.evidence(&x)?);
            sum_ar += pa;
            sum_nested += pn;
            report.max_gap = report.max_gap.max((pa - pn).abs());
            if pa > 0.0 && pn > 0.0 {
                let d = (pa.log2() - pn.log2()).abs();
                report.max_code_length_gap_bits = report.max_code_length_gap_bits.max(d);
            }
        }
        report.total_mass_error = report
            .total_mass_error
            .max((sum_ar - 1.0).abs())
            .max((sum_nested - 1.0).abs());
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_pixel_prior() {
        let ar = TinyArModel::new(vec![vec![0.3]]).unwrap();
        let n = build_nested(&ar).unwrap();
        assert_eq!(n.prior(), [0.7, 0.3]);
    }

    #[test]
    fn two_pixel_enumeration() {
        // history index of x1 = 1 is 1
        let ar = TinyArModel::new(vec![vec![0.3], vec![0.2, 0.8]]).unwrap();
        let n = build_nested(&ar).unwrap();
        let p = n.evidence(&[1, 0]).unwrap();
        assert!((p - 0.3 * 0.2).abs() < 1e-15);
        let all: Vec<f64> = outcomes(2).map(|x| n.evidence(&x).unwrap()).collect();
        // (0,0) (1,0) (0,1) (1,1)
        let expect = [0.7 * 0.8, 0.3 * 0.2, 0.7 * 0.2, 0.3 * 0.8];
        for (a, b) in all.iter().zip(expect) {
            assert!((a - b).abs() < 1e-15);
        }
        // z_2 carries x_1: latent (z_1, z_2) = (0, 1) is image (1, 0)
        assert!((n.latent_evidence(&[0, 1]).unwrap() - 0.06).abs() < 1e-15);
    }

    #[test]
    fn uniform_model_is_flat() {
        for t in 1..=8 {
            let n = build_nested(&TinyArModel::uniform(t).unwrap()).unwrap();
            for x in outcomes(t) {
                assert_eq!(n.evidence(&x).unwrap(), 0.5f64.powi(t as i32));
            }
        }
    }

    #[test]
    fn normalization_and_equivalence() {
        for seed in 0..20 {
            let ar = TinyArModel::random(6, seed).unwrap();
            let n = build_nested(&ar).unwrap();
            let s_ar: f64 = outcomes(6).map(|x| ar.evidence(&x).unwrap()).sum();
            let s_n: f64 = outcomes(6).map(|x| n.evidence(&x).unwrap()).sum();
            assert!((s_ar - 1.0).abs() < 1e-12 && (s_n - 1.0).abs() < 1e-12);
            assert!(max_evidence_gap(&ar, &n).unwrap() <= 1e-12);
        }
    }

    #[test]
    fn deterministic_model_gives_zero_one_evidence() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let tables = (0..5)
            .map(|t| (0..1 << t).map(|_| if rng.random::<bool>() { 1.0 } else { 0.0 }).collect())
            .collect();
        let ar = TinyArModel::new(tables).unwrap();
        let n = build_nested(&ar).unwrap();
        for x in outcomes(5) {
            let p = n.evidence(&x).unwrap();
            assert!(p == 0.0 || p == 1.0);
        }
    }

    #[test]
    fn errors() {
        assert!(matches!(TinyArModel::random(13, 0), Err(Error::ResourceBound(_))));
        assert!(TinyArModel::new(vec![vec![1.5]]).is_err());
        assert!(TinyArModel::new(vec![vec![0.5], vec![0.5]]).is_err());
        let ar = TinyArModel::uniform(3).unwrap();
        assert!(ar.evidence(&[0, 1]).is_err());
        assert!(build_nested(&ar).unwrap().evidence(&[0, 1, 0, 1]).is_err());
        assert!(limited_context_check(&ar, 4).is_err());
    }

    #[test]
    fn full_context_has_no_gap() {
        let ar = TinyArModel::random(7, 3).unwrap();
        assert!(limited_context_check(&ar, 7).unwrap() <= 1e-15);
    }

    #[test]
    fn markov_model_fits_its_own_context() {
        for seed in 0..10 {
            let ar = TinyArModel::random_markov(8, 1, seed).unwrap();
            assert!(limited_context_check(&ar, 1).unwrap() <= 1e-12);
            let ar = TinyArModel::random_markov(8, 2, seed).unwrap();
            assert!(limited_context_check(&ar, 2).unwrap() <= 1e-12);
        }
    }

    #[test]
    fn order_two_model_needs_more_than_one_latent() {
        // x3 = x1 XOR-ish: p(x3 = 1 | x1, x2) depends on x1 only.
        let ar = TinyArModel::new(vec![
            vec![0.5],
            vec![0.5, 0.5],
            vec![0.9, 0.1, 0.9, 0.1],
        ])
        .unwrap();
        // Enumeration by hand: x2 is independent of x1, so p(x3 | x2) = 0.5
        // and the truncated chain puts 1/8 on every outcome, while the AR
        // model puts 0.25 * 0.9 = 0.225 on the likely ones.
        let gap = limited_context_check(&ar, 1).unwrap();
        assert!((gap - (0.225 - 0.125)).abs() < 1e-15, "{gap}");
        assert!(limited_context_check(&ar, 2).unwrap() <= 1e-15);
    }
}
