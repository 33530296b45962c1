//! Loop samplers on finite chains.
//!
//! The law of a loop rooted at z is the h-transform of the chain by
//! h = u(., z): jump rates q(x,y) u(y,z)/u(x,z), killed only at z with rate
//! 1/(m(z) u(z,z)). Roots are drawn proportionally to m(z) u(z,z); the
//! importance weight Z/zeta (with Z the total root mass) turns these draws
//! into unbiased loop-measure estimates, and the constant weight Z into
//! estimates for the rooted companion measure.

use super::{Accumulator, Estimate, LoopPath, WeightedLoop};
use crate::error::{Error, Result};
use crate::exec;
use crate::model::FiniteChainModel;
use rand::Rng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Exp, Poisson};

const MAX_SEGMENTS: usize = 1_000_000;

/// Precomputed h-transform jump table for one root.
struct HTable {
    /// per state: (targets, cumulative probabilities), total event rate
    jump_cum: Vec<Vec<(usize, f64)>>,
    total_rate: Vec<f64>,
    /// probability that an event at z is the killing event
    kill_prob_at_z: f64,
    z: usize,
}

impl HTable {
    fn build(chain: &FiniteChainModel, z: usize) -> Result<Self> {
        let n = chain.len();
        if z >= n {
            return Err(Error::OutOfDomain("root state out of range".into()));
        }
        let u = chain.potential_matrix(0.0)?;
        if !u[(z, z)].is_finite() || u[(z, z)] <= 0.0 {
            return Err(Error::NonFiniteDiagonal);
        }
        let kill_rate_z = 1.0 / (chain.measure(z) * u[(z, z)]);
        let mut jump_cum = Vec::with_capacity(n);
        let mut total_rate = Vec::with_capacity(n);
        let mut kill_prob_at_z = 0.0;
        for x in 0..n {
            let mut rates: Vec<(usize, f64)> = Vec::new();
            let mut total = 0.0;
            for y in 0..n {
                let q = chain.jump_rate(x, y) * u[(y, z)] / u[(x, z)];
                if q > 0.0 {
                    total += q;
                    rates.push((y, q));
                }
            }
            if x == z {
                total += kill_rate_z;
                kill_prob_at_z = kill_rate_z / total;
            }
            // cumulative jump probabilities within the event distribution
            let mut acc = 0.0;
            for r in rates.iter_mut() {
                acc += r.1 / total;
                r.1 = acc;
            }
            jump_cum.push(rates);
            total_rate.push(total);
        }
        Ok(Self { jump_cum, total_rate, kill_prob_at_z, z })
    }

    fn sample(&self, rng: &mut ChaCha12Rng) -> Result<LoopPath> {
        let mut states = vec![self.z];
        let mut durations = Vec::new();
        let mut x = self.z;
        loop {
            if durations.len() >= MAX_SEGMENTS {
                return Err(Error::InfiniteLifetime);
            }
            let rate = self.total_rate[x];
            let hold = Exp::new(rate)
                .map_err(|_| Error::InvalidInput("nonpositive event rate".into()))?
                .sample(rng);
            durations.push(hold);
            let u: f64 = rng.gen();
            if x == self.z && u < self.kill_prob_at_z {
                return LoopPath::new(states, durations);
            }
            // renormalize the remaining probability onto the jumps
            let shift = if x == self.z { self.kill_prob_at_z } else { 0.0 };
            let v = u - shift;
            let cum = &self.jump_cum[x];
            let scale = 1.0 - shift;
            let mut next = cum.last().map(|c| c.0).unwrap_or(x);
            for &(y, c) in cum {
                if v < c * scale {
                    next = y;
                    break;
                }
            }
            states.push(next);
            x = next;
        }
    }
}

/// Sampler for loops rooted across the whole chain.
pub struct LoopSampler {
    tables: Vec<HTable>,
    /// cumulative root probabilities m(z) u(z,z) / Z
    root_cum: Vec<f64>,
    z_mass: f64,
}

impl LoopSampler {
    pub fn new(chain: &FiniteChainModel) -> Result<Self> {
        let n = chain.len();
        let u = chain.potential_matrix(0.0)?;
        let masses: Vec<f64> = (0..n).map(|z| chain.measure(z) * u[(z, z)]).collect();
        let z_mass: f64 = masses.iter().sum();
        if !(z_mass > 0.0) {
            return Err(Error::NonFiniteDiagonal);
        }
        let mut acc = 0.0;
        let root_cum = masses
            .iter()
            .map(|m| {
                acc += m / z_mass;
                acc
            })
            .collect();
        let tables = (0..n).map(|z| HTable::build(chain, z)).collect::<Result<_>>()?;
        Ok(Self { tables, root_cum, z_mass })
    }

    /// Total root mass Z = sum_z m(z) u(z,z), the normalization of both the
    /// root distribution and the importance weights.
    pub fn z_mass(&self) -> f64 {
        self.z_mass
    }

    fn sample_root(&self, rng: &mut ChaCha12Rng) -> usize {
        let v: f64 = rng.gen();
        self.root_cum
            .iter()
            .position(|&c| v < c)
            .unwrap_or(self.root_cum.len() - 1)
    }

    /// Normalized rooted loop at a fixed root z (the probability law
    /// Q^{z,z} / u(z,z)).
    pub fn sample_at_root(&self, z: usize, rng: &mut ChaCha12Rng) -> Result<LoopPath> {
        self.tables
            .get(z)
            .ok_or_else(|| Error::OutOfDomain("root state out of range".into()))?
            .sample(rng)
    }

    /// Loop-measure draw: random root, h-path, weight Z / zeta.
    pub fn sample_mu(&self, rng: &mut ChaCha12Rng) -> Result<WeightedLoop> {
        let z = self.sample_root(rng);
        let path = self.tables[z].sample(rng)?;
        let weight = self.z_mass / path.zeta();
        Ok(WeightedLoop { path, weight })
    }

    /// Companion-measure draw: random root, h-path, constant weight Z.
    pub fn sample_nu(&self, rng: &mut ChaCha12Rng) -> Result<WeightedLoop> {
        let z = self.sample_root(rng);
        let path = self.tables[z].sample(rng)?;
        Ok(WeightedLoop { path, weight: self.z_mass })
    }

    /// Poisson loop soup of intensity `gamma` restricted to lifetimes above
    /// `zeta_min`: candidates from the dominating intensity gamma Z /
    /// zeta_min are thinned with probability zeta_min / zeta.
    pub fn sample_soup(
        &self,
        gamma: f64,
        zeta_min: f64,
        rng: &mut ChaCha12Rng,
    ) -> Result<Vec<LoopPath>> {
        if !(gamma > 0.0) || !(zeta_min > 0.0) {
            return Err(Error::InvalidInput(
                "soup intensity and lifetime cutoff must be positive".into(),
            ));
        }
        let mean = gamma * self.z_mass / zeta_min;
        let count = Poisson::new(mean)
            .map_err(|_| Error::InvalidInput("invalid soup intensity".into()))?
            .sample(rng) as usize;
        let mut soup = Vec::new();
        for _ in 0..count {
            let z = self.sample_root(rng);
            let path = self.tables[z].sample(rng)?;
            if path.zeta() > zeta_min && rng.gen::<f64>() < zeta_min / path.zeta() {
                soup.push(path);
            }
        }
        Ok(soup)
    }
}

/// Unkilled sample of the raw chain from a start state: states and holding
/// times until the chain is killed.
pub fn sample_raw_path(
    chain: &FiniteChainModel,
    start: usize,
    rng: &mut ChaCha12Rng,
) -> Result<LoopPath> {
    let n = chain.len();
    if start >= n {
        return Err(Error::OutOfDomain("start state out of range".into()));
    }
    let mut states = vec![start];
    let mut durations = Vec::new();
    let mut x = start;
    loop {
        if durations.len() >= MAX_SEGMENTS {
            return Err(Error::InfiniteLifetime);
        }
        let out: f64 = (0..n).map(|y| chain.jump_rate(x, y)).sum::<f64>() + chain.kill_rate(x);
        let hold = Exp::new(out)
            .map_err(|_| Error::InvalidInput("absorbing state with zero rate".into()))?
            .sample(rng);
        durations.push(hold);
        let mut v: f64 = rng.gen::<f64>() * out;
        v -= chain.kill_rate(x);
        if v < 0.0 {
            return LoopPath::new(states, durations);
        }
        let mut next = x;
        for y in 0..n {
            let q = chain.jump_rate(x, y);
            if v < q {
                next = y;
                break;
            }
            v -= q;
        }
        states.push(next);
        x = next;
    }
}

/// Deterministic chunked Monte Carlo: `eval` maps one RNG draw to a
/// (weight, value) pair; chunk results merge in index order, so the
/// estimate is bit-identical across thread counts.
pub fn monte_carlo<F>(n_samples: usize, seed: u64, eval: F) -> Result<Estimate>
where
    F: Fn(&mut ChaCha12Rng) -> Result<(f64, f64)> + Sync + Send,
{
    if n_samples == 0 {
        return Err(Error::InvalidInput("sample count must be positive".into()));
    }
    let sizes = exec::chunk_sizes(n_samples);
    let chunks: Vec<Result<Accumulator>> = exec::map_chunks(sizes.len(), |i| {
        let mut rng = exec::stream_rng(seed, i as u64);
        let mut acc = Accumulator::default();
        for _ in 0..sizes[i] {
            let (w, v) = eval(&mut rng)?;
            acc.push(w, v);
        }
        Ok(acc)
    });
    let mut total = Accumulator::default();
    for c in chunks {
        total.merge(&c?);
    }
    Ok(total.estimate_unnormalized(n_samples))
}

/// Monte Carlo loop-measure moment: mean of (Z/zeta) prod_j I_0(f_j).
pub fn estimate_mu_product(
    chain: &FiniteChainModel,
    fs: &[Vec<f64>],
    seed: u64,
    n_samples: usize,
) -> Result<Estimate> {
    let sampler = LoopSampler::new(chain)?;
    monte_carlo(n_samples, seed, |rng| {
        let wl = sampler.sample_mu(rng)?;
        let mut f = 1.0;
        for fv in fs {
            f *= wl.path.occupation_laplace(fv, 0.0)?;
        }
        Ok((wl.weight, f))
    })
}

/// Monte Carlo companion-measure moment:
/// mean of Z prod_j I_0(f_j) e^{-alpha zeta}.
pub fn estimate_nu_product(
    chain: &FiniteChainModel,
    fs: &[Vec<f64>],
    alpha: f64,
    seed: u64,
    n_samples: usize,
) -> Result<Estimate> {
    if !(alpha > 0.0) {
        return Err(Error::InvalidInput("nu estimates need alpha > 0".into()));
    }
    let sampler = LoopSampler::new(chain)?;
    monte_carlo(n_samples, seed, |rng| {
        let wl = sampler.sample_nu(rng)?;
        let mut f = (-alpha * wl.path.zeta()).exp();
        for fv in fs {
            f *= wl.path.occupation_laplace(fv, 0.0)?;
        }
        Ok((wl.weight, f))
    })
}
