use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::Rng;

use super::coalition::{Coalition, MAX_AGENTS};
use crate::{Error, Result};

/// Largest agent count for which exact enumeration is attempted.
pub const ENUMERATION_LIMIT: usize = 20;

const SPEC_TOLERANCE: f64 = 1e-12;

/// A characteristic function `v: 2^N -> R`.
pub trait Game {
    fn n_agents(&self) -> usize;

    fn value(&self, coalition: Coalition) -> Result<f64>;

    /// Values of many coalitions; evaluators override this to batch work.
    fn values(&self, coalitions: &[Coalition]) -> Result<Vec<f64>> {
        coalitions.iter().map(|&c| self.value(c)).collect()
    }
}

/// Game given by an explicit table indexed by coalition mask.
#[derive(Debug, Clone, PartialEq)]
pub struct TableGame {
    n: usize,
    table: Vec<f64>,
}

impl TableGame {
    pub fn new(n: usize, table: Vec<f64>) -> Result<Self> {
        if n > ENUMERATION_LIMIT {
            return Err(Error::EnumerationGuard {
                n,
                limit: ENUMERATION_LIMIT,
            });
        }
        if table.len() != 1 << n {
            return Err(Error::dim("TableGame table", 1 << n, table.len()));
        }
        Ok(Self { n, table })
    }

    /// Tabulates `f` over every coalition.
    pub fn from_fn(n: usize, f: impl Fn(Coalition) -> f64) -> Result<Self> {
        if n > ENUMERATION_LIMIT {
            return Err(Error::EnumerationGuard {
                n,
                limit: ENUMERATION_LIMIT,
            });
        }
        let table = (0..1u64 << n)
            .map(|m| f(Coalition::from_mask(n, m).expect("mask below 2^n")))
            .collect();
        Ok(Self { n, table })
    }

    pub fn table(&self) -> &[f64] {
        &self.table
    }
}

impl Game for TableGame {
    fn n_agents(&self) -> usize {
        self.n
    }

    fn value(&self, coalition: Coalition) -> Result<f64> {
        if coalition.n() != self.n {
            return Err(Error::dim("TableGame coalition", self.n, coalition.n()));
        }
        Ok(self.table[coalition.mask() as usize])
    }
}

/// Probability distribution `p[c]` over coalition sizes `c = 0..n-1`.
#[derive(Debug, Clone, PartialEq)]
pub struct SemivalueSpec {
    p: Vec<f64>,
}

fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    let mut acc = 1.0;
    for j in 0..k {
        acc = acc * (n - j) as f64 / (j + 1) as f64;
    }
    libm::round(acc)
}

impl SemivalueSpec {
    /// Validates `p >= 0` and `sum(p) = 1` (to 1e-12).
    pub fn new(p: Vec<f64>) -> Result<Self> {
        if p.is_empty() || p.len() > MAX_AGENTS {
            return Err(Error::Config(format!(
                "a semivalue needs between 1 and {MAX_AGENTS} size weights, got {}",
                p.len()
            )));
        }
        if let Some(bad) = p.iter().find(|x| !x.is_finite() || **x < 0.0) {
            return Err(Error::Config(format!("size weight {bad} is not a probability")));
        }
        let total: f64 = p.iter().sum();
        if (total - 1.0).abs() > SPEC_TOLERANCE {
            return Err(Error::Config(format!("size weights sum to {total}, not 1")));
        }
        Ok(Self { p })
    }

    /// Uniform weight on every coalition size.
    pub fn shapley(n: usize) -> Result<Self> {
        Self::check_n(n)?;
        Self::new(vec![1.0 / n as f64; n])
    }

    /// `p[c] = binom(n-1, c) / 2^(n-1)`.
    pub fn banzhaf(n: usize) -> Result<Self> {
        Self::check_n(n)?;
        let raw: Vec<f64> = (0..n).map(|c| binomial(n - 1, c)).collect();
        let total: f64 = raw.iter().sum();
        Self::new(raw.into_iter().map(|x| x / total).collect())
    }

    /// All mass on coalitions of everyone else.
    pub fn leave_one_out(n: usize) -> Result<Self> {
        Self::check_n(n)?;
        Self::fixed_size(n, n - 1)
    }

    /// All mass on coalitions of size `c`.
    pub fn fixed_size(n: usize, c: usize) -> Result<Self> {
        Self::check_n(n)?;
        if c >= n {
            return Err(Error::contract(format!(
                "coalition size {c} outside 0..={} for {n} agents",
                n - 1
            )));
        }
        let mut p = vec![0.0; n];
        p[c] = 1.0;
        Self::new(p)
    }

    fn check_n(n: usize) -> Result<()> {
        if n == 0 || n > MAX_AGENTS {
            return Err(Error::Config(format!("agent count {n} outside 1..={MAX_AGENTS}")));
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.p.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.p
    }

    /// True when all mass sits on one coalition size.
    pub fn point_mass(&self) -> Option<usize> {
        let nonzero: Vec<usize> = (0..self.n()).filter(|&c| self.p[c] > 0.0).collect();
        (nonzero.len() == 1).then(|| nonzero[0])
    }
}

fn check_game(game: &impl Game, spec: &SemivalueSpec, i: usize) -> Result<usize> {
    let n = game.n_agents();
    if spec.n() != n {
        return Err(Error::dim("semivalue spec size", n, spec.n()));
    }
    if i >= n {
        return Err(Error::contract(format!("agent {i} outside 0..{n}")));
    }
    Ok(n)
}

/// `v(C ∪ {i}) - v(C)`.
pub fn marginal_contribution(i: usize, coalition: Coalition, game: &impl Game) -> Result<f64> {
    if coalition.n() != game.n_agents() {
        return Err(Error::dim("marginal contribution coalition", game.n_agents(), coalition.n()));
    }
    if i >= coalition.n() {
        return Err(Error::contract(format!("agent {i} outside 0..{}", coalition.n())));
    }
    if coalition.contains(i) {
        return Err(Error::contract(format!("agent {i} already belongs to {coalition:?}")));
    }
    let v = game.values(&[coalition.with(i), coalition])?;
    Ok(v[0] - v[1])
}

/// Evaluates every coalition whose size carries weight for at least one of
/// `agents`, returning a full table (NaN for coalitions not needed).
fn value_table(game: &impl Game, spec: &SemivalueSpec, agents: &[usize]) -> Result<Vec<f64>> {
    let n = game.n_agents();
    let mut needed = vec![false; 1 << n];
    for &i in agents {
        let others = Coalition::full(n).without(i).mask();
        let mut sub = others;
        loop {
            let c = sub.count_ones() as usize;
            if spec.p[c] > 0.0 {
                needed[sub as usize] = true;
                needed[(sub | 1 << i) as usize] = true;
            }
            if sub == 0 {
                break;
            }
            sub = (sub - 1) & others;
        }
    }
    let coalitions: Vec<Coalition> = (0..1u64 << n)
        .filter(|&m| needed[m as usize])
        .map(|m| Coalition::from_mask(n, m).expect("mask below 2^n"))
        .collect();
    let values = game.values(&coalitions)?;
    let mut table = vec![f64::NAN; 1 << n];
    for (c, v) in coalitions.iter().zip(values) {
        table[c.mask() as usize] = v;
    }
    Ok(table)
}

fn exact_from_table(i: usize, n: usize, spec: &SemivalueSpec, table: &[f64]) -> f64 {
    let mut size_sums = vec![0.0; n];
    // Ascending masks give a fixed summation order.
    for mask in 0..1u64 << n {
        if mask & (1 << i) != 0 {
            continue;
        }
        let c = mask.count_ones() as usize;
        if spec.p[c] > 0.0 {
            size_sums[c] += table[(mask | 1 << i) as usize] - table[mask as usize];
        }
    }
    (0..n)
        .filter(|&c| spec.p[c] > 0.0)
        .map(|c| spec.p[c] * size_sums[c] / binomial(n - 1, c))
        .sum()
}

fn guard(n: usize) -> Result<()> {
    if n > ENUMERATION_LIMIT {
        return Err(Error::EnumerationGuard {
            n,
            limit: ENUMERATION_LIMIT,
        });
    }
    Ok(())
}

/// Semivalue of agent `i` by enumerating every coalition of the other agents.
pub fn semivalue_exact(i: usize, game: &impl Game, spec: &SemivalueSpec) -> Result<f64> {
    let n = check_game(game, spec, i)?;
    guard(n)?;
    let table = value_table(game, spec, &[i])?;
    Ok(exact_from_table(i, n, spec, &table))
}

/// Exact semivalues of every agent, sharing one pass over the coalition values.
pub fn semivalues_exact(game: &impl Game, spec: &SemivalueSpec) -> Result<Vec<f64>> {
    let n = check_game(game, spec, 0)?;
    guard(n)?;
    let agents: Vec<usize> = (0..n).collect();
    let table = value_table(game, spec, &agents)?;
    Ok(agents
        .iter()
        .map(|&i| exact_from_table(i, n, spec, &table))
        .collect())
}

/// Draws coalitions of `N \ {i}`: first a size from the spec, then a uniform
/// subset of that size by partial Fisher-Yates.
#[derive(Debug, Clone)]
pub struct CoalitionSampler {
    n: usize,
    sizes: WeightedIndex<f64>,
}

impl CoalitionSampler {
    pub fn new(spec: &SemivalueSpec) -> Result<Self> {
        let sizes = WeightedIndex::new(spec.weights())
            .map_err(|e| Error::Config(format!("invalid size distribution: {e}")))?;
        Ok(Self { n: spec.n(), sizes })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn sample<R: Rng + ?Sized>(&self, i: usize, rng: &mut R) -> Coalition {
        let size = self.sizes.sample(rng);
        let mut others: Vec<usize> = (0..self.n).filter(|&j| j != i).collect();
        let (chosen, _) = others.partial_shuffle(rng, size);
        let mut c = Coalition::empty(self.n);
        for &j in chosen.iter() {
            c = c.with(j);
        }
        c
    }
}

/// `num_samples` coalitions for agent `i`, in draw order.
pub fn sample_coalitions<R: Rng + ?Sized>(
    i: usize,
    spec: &SemivalueSpec,
    num_samples: usize,
    rng: &mut R,
) -> Result<Vec<Coalition>> {
    if i >= spec.n() {
        return Err(Error::contract(format!("agent {i} outside 0..{}", spec.n())));
    }
    let sampler = CoalitionSampler::new(spec)?;
    Ok((0..num_samples).map(|_| sampler.sample(i, rng)).collect())
}

/// Marginal contributions of `i` to each sampled coalition, in draw order.
fn sampled_contributions(i: usize, game: &impl Game, samples: &[Coalition]) -> Result<Vec<f64>> {
    let mut query = Vec::with_capacity(2 * samples.len());
    for &c in samples {
        if c.contains(i) {
            return Err(Error::contract(format!("sampled coalition {c:?} contains agent {i}")));
        }
        query.push(c.with(i));
        query.push(c);
    }
    let v = game.values(&query)?;
    Ok(v.chunks_exact(2).map(|p| p[0] - p[1]).collect())
}

/// Average marginal contribution over the given coalitions, summed in order.
pub fn semivalue_from_samples(i: usize, game: &impl Game, samples: &[Coalition]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::contract("at least one coalition sample is required"));
    }
    let mc = sampled_contributions(i, game, samples)?;
    Ok(mc.iter().sum::<f64>() / mc.len() as f64)
}

/// Monte-Carlo semivalue estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub num_samples: usize,
}

/// Unbiased Monte-Carlo estimate of [`semivalue_exact`].
pub fn semivalue_mc<R: Rng + ?Sized>(
    i: usize,
    game: &impl Game,
    spec: &SemivalueSpec,
    num_samples: usize,
    rng: &mut R,
) -> Result<f64> {
    Ok(semivalue_mc_estimate(i, game, spec, num_samples, rng)?.mean)
}

pub fn semivalue_mc_estimate<R: Rng + ?Sized>(
    i: usize,
    game: &impl Game,
    spec: &SemivalueSpec,
    num_samples: usize,
    rng: &mut R,
) -> Result<McEstimate> {
    check_game(game, spec, i)?;
    if num_samples == 0 {
        return Err(Error::contract("num_samples must be at least 1"));
    }
    let samples = sample_coalitions(i, spec, num_samples, rng)?;
    let mc = sampled_contributions(i, game, &samples)?;
    let k = mc.len() as f64;
    let mean = mc.iter().sum::<f64>() / k;
    let std_error = if mc.len() > 1 {
        let var = mc.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (k - 1.0);
        libm::sqrt(var / k)
    } else {
        0.0
    };
    Ok(McEstimate {
        mean,
        std_error,
        num_samples,
    })
}
