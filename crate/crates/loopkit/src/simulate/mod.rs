//! Loop paths on finite chains: exact path functionals, loop rotation and
//! periodic evaluation.
//!
//! A loop is a piecewise-constant path of finite lifetime with a
//! distinguished root at time zero. Occupation integrals, exponentially
//! discounted occupation integrals and ordered simplex integrals are all
//! evaluated in closed form segment by segment, so the only randomness in a
//! Monte Carlo estimate comes from the sampled paths themselves.

pub mod invariance;
pub mod sampler;

use crate::error::{Error, Result};

/// Rooted loop: state `states[i]` is held for `durations[i]`, starting at
/// time zero; the lifetime is the sum of the durations.
#[derive(Clone, Debug)]
pub struct LoopPath {
    states: Vec<usize>,
    durations: Vec<f64>,
    zeta: f64,
}

impl LoopPath {
    pub fn new(states: Vec<usize>, durations: Vec<f64>) -> Result<Self> {
        if states.is_empty() || states.len() != durations.len() {
            return Err(Error::InvalidInput(
                "a loop needs matching, nonempty state and duration lists".into(),
            ));
        }
        if durations.iter().any(|&d| !(d > 0.0) || !d.is_finite()) {
            return Err(Error::InvalidInput(
                "segment durations must be positive and finite".into(),
            ));
        }
        let zeta: f64 = durations.iter().sum();
        if !zeta.is_finite() {
            return Err(Error::InfiniteLifetime);
        }
        Ok(Self { states, durations, zeta })
    }

    pub fn zeta(&self) -> f64 {
        self.zeta
    }

    pub fn states(&self) -> &[usize] {
        &self.states
    }

    pub fn durations(&self) -> &[f64] {
        &self.durations
    }

    pub fn root(&self) -> usize {
        self.states[0]
    }

    /// State at time t in [0, zeta); t = zeta wraps to the root.
    pub fn eval(&self, t: f64) -> Result<usize> {
        if !(0.0..=self.zeta).contains(&t) {
            return Err(Error::OutOfDomain(format!(
                "time {t} outside [0, {}]",
                self.zeta
            )));
        }
        let mut acc = 0.0;
        for (s, d) in self.states.iter().zip(&self.durations) {
            acc += d;
            if t < acc {
                return Ok(*s);
            }
        }
        Ok(self.states[0])
    }

    /// Periodic extension: state at t mod zeta for any t >= 0.
    pub fn periodic_eval(&self, t: f64) -> Result<usize> {
        if t < 0.0 || !t.is_finite() {
            return Err(Error::OutOfDomain("periodic evaluation needs t >= 0".into()));
        }
        let mut r = t % self.zeta;
        if r < 0.0 {
            r += self.zeta;
        }
        self.eval(r)
    }

    /// Loop rotated so that the new root is the state at time r (mod zeta).
    /// Segments that become adjacent with equal states are merged.
    pub fn rotate(&self, r: f64) -> Result<LoopPath> {
        if !r.is_finite() {
            return Err(Error::InvalidInput("rotation offset must be finite".into()));
        }
        let mut off = r % self.zeta;
        if off < 0.0 {
            off += self.zeta;
        }
        if off == 0.0 {
            return Ok(self.clone());
        }
        // locate the segment containing `off`
        let mut acc = 0.0;
        let mut idx = 0;
        let mut into = 0.0;
        for (i, d) in self.durations.iter().enumerate() {
            if off < acc + d {
                idx = i;
                into = off - acc;
                break;
            }
            acc += d;
        }
        let n = self.states.len();
        let mut states = Vec::with_capacity(n + 1);
        let mut durations = Vec::with_capacity(n + 1);
        let push = |s: usize, d: f64, states: &mut Vec<usize>, durs: &mut Vec<f64>| {
            if d <= 0.0 {
                return;
            }
            if states.last() == Some(&s) {
                *durs.last_mut().unwrap() += d;
            } else {
                states.push(s);
                durs.push(d);
            }
        };
        push(
            self.states[idx],
            self.durations[idx] - into,
            &mut states,
            &mut durations,
        );
        for i in idx + 1..n {
            push(self.states[i], self.durations[i], &mut states, &mut durations);
        }
        for i in 0..idx {
            push(self.states[i], self.durations[i], &mut states, &mut durations);
        }
        push(self.states[idx], into, &mut states, &mut durations);
        LoopPath::new(states, durations)
    }

    /// Occupation integral int_0^zeta e^{-a t} f(X_t) dt, exact per segment.
    pub fn occupation_laplace(&self, f: &[f64], alpha: f64) -> Result<f64> {
        if alpha < 0.0 {
            return Err(Error::InvalidInput("alpha must be nonnegative".into()));
        }
        let mut total = 0.0;
        let mut t = 0.0;
        for (s, d) in self.states.iter().zip(&self.durations) {
            let fv = *f.get(*s).ok_or_else(|| {
                Error::OutOfDomain("state index outside the test function".into())
            })?;
            total += if alpha == 0.0 {
                fv * d
            } else {
                fv * ((-alpha * t).exp() - (-alpha * (t + d)).exp()) / alpha
            };
            t += d;
        }
        Ok(total)
    }

    /// Discounted occupation integral of the periodic extension over all of
    /// [0, infinity): int_0^inf e^{-a t} f(Xbar_t) dt
    /// = occupation_laplace / (1 - e^{-a zeta}).
    pub fn periodic_occupation_laplace(&self, f: &[f64], alpha: f64) -> Result<f64> {
        if !(alpha > 0.0) {
            return Err(Error::InvalidInput(
                "the periodic discounted integral needs alpha > 0".into(),
            ));
        }
        Ok(self.occupation_laplace(f, alpha)? / (1.0 - (-alpha * self.zeta).exp()))
    }

    /// Ordered simplex integrals of depth 1..=k:
    /// int_{0 < t_1 < ... < t_j < zeta} prod_{l <= j} f_l(X_{t_l}) dt.
    ///
    /// Computed by a transfer recursion across segments: on a segment of
    /// length h with constant values v_l, extending depth j-i to depth j
    /// contributes (prod of the last i values) h^i / i!.
    pub fn simplex_integrals(&self, fs: &[Vec<f64>]) -> Result<Vec<f64>> {
        let k = fs.len();
        let mut c = vec![0.0; k + 1];
        c[0] = 1.0;
        for (s, h) in self.states.iter().zip(&self.durations) {
            let vals: Vec<f64> = fs
                .iter()
                .map(|f| {
                    f.get(*s).copied().ok_or_else(|| {
                        Error::OutOfDomain("state index outside the test function".into())
                    })
                })
                .collect::<Result<_>>()?;
            let mut next = c.clone();
            for j in 1..=k {
                // product of vals[j-i..j] accumulated as i grows
                let mut prod = 1.0;
                let mut hpow = 1.0;
                for i in 1..=j {
                    prod *= vals[j - i];
                    hpow *= h / i as f64;
                    next[j] += c[j - i] * prod * hpow;
                }
            }
            c = next;
        }
        Ok(c[1..].to_vec())
    }
}

/// Loop with an importance weight relative to the sampling law.
#[derive(Clone, Debug)]
pub struct WeightedLoop {
    pub path: LoopPath,
    pub weight: f64,
}

/// Weighted-mean summary of a Monte Carlo run.
#[derive(Clone, Copy, Debug)]
pub struct Estimate {
    pub mean: f64,
    pub std_error: f64,
    /// Effective sample size (sum w)^2 / sum w^2.
    pub ess: f64,
    pub n: usize,
}

/// Accumulator for self-normalized weighted means, merged in chunk order so
/// results do not depend on the thread schedule.
#[derive(Clone, Copy, Debug, Default)]
pub struct Accumulator {
    pub sum_w: f64,
    pub sum_wf: f64,
    pub sum_wf2: f64,
    pub sum_w2: f64,
    pub n: usize,
}

impl Accumulator {
    pub fn push(&mut self, w: f64, f: f64) {
        let y = w * f;
        self.sum_w += w;
        self.sum_wf += y;
        self.sum_wf2 += y * y;
        self.sum_w2 += w * w;
        self.n += 1;
    }

    pub fn merge(&mut self, other: &Accumulator) {
        self.sum_w += other.sum_w;
        self.sum_wf += other.sum_wf;
        self.sum_wf2 += other.sum_wf2;
        self.sum_w2 += other.sum_w2;
        self.n += other.n;
    }

    /// Mean normalized by the known expectation of the weights (an unbiased
    /// importance-sampling estimate), with a large-sample standard error.
    pub fn estimate_unnormalized(&self, n_total: usize) -> Estimate {
        let n = n_total as f64;
        let mean = self.sum_wf / n;
        let var = (self.sum_wf2 / n - mean * mean).max(0.0);
        Estimate {
            mean,
            std_error: (var / n).sqrt(),
            ess: if self.sum_w2 > 0.0 { self.sum_w * self.sum_w / self.sum_w2 } else { 0.0 },
            n: n_total,
        }
    }
}
