//! Monte Carlo test of loop-rotation invariance.
//!
//! The rooted companion measure nu inherits rotation invariance from the
//! loop measure (the lifetime factor relating them is itself rotation
//! invariant), and nu-sampling has constant importance weights, so a paired
//! design applies: each sampled loop is evaluated both at rotation offset r
//! and at offset zero, and the mean of the differences is tested against
//! zero with a z-statistic.

use super::sampler::LoopSampler;
use super::{Accumulator, LoopPath};
use crate::error::{Error, Result};
use crate::exec;
use crate::model::FiniteChainModel;

/// Outcome of one paired invariance run.
#[derive(Clone, Copy, Debug)]
pub struct InvarianceReport {
    /// nu-estimate of the functional at rotation offset r.
    pub shifted: f64,
    /// nu-estimate at offset zero.
    pub base: f64,
    /// Exact value of the offset-zero functional from the semigroup.
    pub analytic_base: f64,
    /// Paired mean difference (shifted minus base, in nu units).
    pub mean_difference: f64,
    pub std_error: f64,
    /// mean_difference / std_error.
    pub z_score: f64,
    pub n: usize,
}

fn validate_times(times: &[f64]) -> Result<()> {
    if times.is_empty()
        || times.windows(2).any(|w| w[0] >= w[1])
        || times.iter().any(|&t| !(t > 0.0) || !t.is_finite())
    {
        return Err(Error::InvalidInput(
            "evaluation times must be finite, positive and strictly increasing".into(),
        ));
    }
    Ok(())
}

/// Exact nu-expectation of prod_j f_j(X_{t_j}) 1{t_k < zeta} via the
/// transition semigroup:
/// sum_z [ e^{t_1 G} F_1 e^{(t_2-t_1) G} F_2 ... F_k U^0 ]_{zz}.
pub fn analytic_time_moment(
    chain: &FiniteChainModel,
    fs: &[Vec<f64>],
    times: &[f64],
) -> Result<f64> {
    validate_times(times)?;
    if fs.len() != times.len() {
        return Err(Error::InvalidInput("need one test function per time".into()));
    }
    let n = chain.len();
    let mut running = chain.transition(times[0])?;
    for (j, f) in fs.iter().enumerate() {
        if f.len() != n {
            return Err(Error::InvalidInput("test function must cover every state".into()));
        }
        for y in 0..n {
            for x in 0..n {
                running[(x, y)] *= f[y];
            }
        }
        if j + 1 < times.len() {
            running *= chain.transition(times[j + 1] - times[j])?;
        }
    }
    running *= chain.resolvent_matrix(0.0)?;
    Ok((0..n).map(|z| running[(z, z)]).sum())
}

/// Periodic evaluation of the functional at offset r; `broken_period`
/// deliberately wraps with the wrong period (`factor * zeta`) so that the
/// power check has a detectable violation.
fn functional(
    path: &LoopPath,
    fs: &[Vec<f64>],
    times: &[f64],
    r: f64,
    broken_period: Option<f64>,
) -> Result<f64> {
    let zeta = path.zeta();
    if *times.last().unwrap() >= zeta {
        return Ok(0.0);
    }
    let mut v = 1.0;
    for (f, &t) in fs.iter().zip(times) {
        let state = match broken_period {
            None => path.periodic_eval(t + r)?,
            Some(factor) => {
                let period = zeta * factor;
                let wrapped = (t + r) % period;
                path.eval(wrapped.min(zeta))?
            }
        };
        v *= f.get(state).copied().ok_or_else(|| {
            Error::OutOfDomain("state index outside the test function".into())
        })?;
        if v == 0.0 {
            return Ok(0.0);
        }
    }
    Ok(v)
}

/// Paired rotation-invariance test. `broken_period` injects a wrong wrap
/// period (that factor times the lifetime) into the shifted evaluation;
/// `None` tests the true rotation.
pub fn invariance_test(
    chain: &FiniteChainModel,
    fs: &[Vec<f64>],
    times: &[f64],
    r: f64,
    seed: u64,
    n_samples: usize,
    broken_period: Option<f64>,
) -> Result<InvarianceReport> {
    validate_times(times)?;
    if fs.len() != times.len() {
        return Err(Error::InvalidInput("need one test function per time".into()));
    }
    if !(r.is_finite()) || r < 0.0 {
        return Err(Error::InvalidInput("rotation offset must be finite and >= 0".into()));
    }
    if n_samples < 100 {
        return Err(Error::InvalidInput("need at least 100 samples".into()));
    }
    let sampler = LoopSampler::new(chain)?;
    let z_mass = sampler.z_mass();
    let sizes = exec::chunk_sizes(n_samples);
    // accumulate (shifted, base, difference) with constant nu weights
    let chunks: Vec<Result<(Accumulator, Accumulator, Accumulator)>> =
        exec::map_chunks(sizes.len(), |i| {
            let mut rng = exec::stream_rng(seed, i as u64);
            let mut sh = Accumulator::default();
            let mut ba = Accumulator::default();
            let mut di = Accumulator::default();
            for _ in 0..sizes[i] {
                let wl = sampler.sample_nu(&mut rng)?;
                let fr = functional(&wl.path, fs, times, r, broken_period)?;
                let f0 = functional(&wl.path, fs, times, 0.0, None)?;
                sh.push(wl.weight, fr);
                ba.push(wl.weight, f0);
                di.push(wl.weight, fr - f0);
            }
            Ok((sh, ba, di))
        });
    let mut shifted = Accumulator::default();
    let mut base = Accumulator::default();
    let mut diff = Accumulator::default();
    for c in chunks {
        let (s, b, d) = c?;
        shifted.merge(&s);
        base.merge(&b);
        diff.merge(&d);
    }
    let required = (n_samples as f64 / 10.0).max(100.0);
    if diff.sum_w * diff.sum_w / diff.sum_w2.max(f64::MIN_POSITIVE) < required {
        return Err(Error::InsufficientEffectiveSampleSize {
            ess: diff.sum_w * diff.sum_w / diff.sum_w2.max(f64::MIN_POSITIVE),
            required,
        });
    }
    let est_s = shifted.estimate_unnormalized(n_samples);
    let est_b = base.estimate_unnormalized(n_samples);
    let est_d = diff.estimate_unnormalized(n_samples);
    let z_score = if est_d.std_error > 0.0 {
        est_d.mean / est_d.std_error
    } else {
        0.0
    };
    let analytic_base = analytic_time_moment(chain, fs, times)?;
    let _ = z_mass;
    Ok(InvarianceReport {
        shifted: est_s.mean,
        base: est_b.mean,
        analytic_base,
        mean_difference: est_d.mean,
        std_error: est_d.std_error,
        z_score,
        n: n_samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_state() -> FiniteChainModel {
        FiniteChainModel::build(
            vec!["a".into(), "b".into()],
            vec![1.0, 1.0],
            &[(0, 1, 1.0), (1, 0, 1.0)],
            vec![1.0, 1.0],
        )
        .unwrap()
    }

    #[test]
    fn analytic_time_moment_oracle_k1() {
        // sum_z [e^{tG} F U]_{zz} computed by hand for f = 1_a, t = 0.3
        let chain = two_state();
        let p = chain.transition(0.3).unwrap();
        let u0 = chain.resolvent_matrix(0.0).unwrap();
        let mut oracle = 0.0;
        for z in 0..2 {
            oracle += p[(z, 0)] * u0[(0, z)];
        }
        let got = analytic_time_moment(&chain, &[vec![1.0, 0.0]], &[0.3]).unwrap();
        approx::assert_relative_eq!(got, oracle, epsilon = 1e-12);
    }

    #[test]
    fn base_estimate_matches_analytic() {
        let chain = two_state();
        let fs = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let times = vec![0.25, 0.8];
        let rep = invariance_test(&chain, &fs, &times, 0.37, 42, 150_000, None).unwrap();
        // base estimate should be a few MC sigmas from the exact value
        let tol = 6.0 * rep.std_error.max(1e-3);
        assert!(
            (rep.base - rep.analytic_base).abs() < tol,
            "base {} vs analytic {}",
            rep.base,
            rep.analytic_base
        );
    }

    #[test]
    fn true_rotation_passes_and_broken_period_fails() {
        let chain = two_state();
        let fs = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let times = vec![0.25, 0.8];
        for &r in &[0.37, 2.0] {
            let good = invariance_test(&chain, &fs, &times, r, 1, 150_000, None).unwrap();
            assert!(good.z_score.abs() < 4.0, "r = {r}, z = {}", good.z_score);
        }
        let bad = invariance_test(&chain, &fs, &times, 0.37, 1, 150_000, Some(0.5)).unwrap();
        assert!(bad.z_score.abs() > 5.0, "mutant z = {}", bad.z_score);
    }

    #[test]
    fn invalid_inputs_rejected() {
        let chain = two_state();
        let fs = vec![vec![1.0, 0.0]];
        assert!(invariance_test(&chain, &fs, &[0.5, 0.4], 0.1, 1, 1000, None).is_err());
        assert!(invariance_test(&chain, &fs, &[0.5], f64::NAN, 1, 1000, None).is_err());
        assert!(invariance_test(&chain, &fs, &[0.5], 0.1, 1, 10, None).is_err());
        assert!(analytic_time_moment(&chain, &fs, &[]).is_err());
    }
}
