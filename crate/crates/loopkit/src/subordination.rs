//! Compound-Poisson subordination with exponential jumps of rate n and
//! jump intensity n.
//!
//! The subordinated chain is again a finite chain whose one-jump transition
//! operator is R = n (nI - G)^{-1}. Its potential density has the closed
//! form u_(n)^a = (1 + a/n)^{-2} u^{a/(1+a/n)}, which is dominated by u and
//! converges to u^a as n grows.
//!
//! On a finite state space the subordinated resolvent splits into this
//! density part plus a diagonal atom I/(a+n) coming from the "no jump yet"
//! event; the exact resolvent identity holds for the full resolvent, not
//! for the density alone.

use crate::error::{Error, Result};
use crate::exec;
use crate::model::checks::CheckReport;
use crate::model::{FiniteChainModel, Model, Point, Potential};
use crate::moments::TestFunction;
use nalgebra::DMatrix;

fn validate_n(n: f64) -> Result<()> {
    if !(n > 0.0) || !n.is_finite() {
        return Err(Error::InvalidInput("subordination rate n must be positive".into()));
    }
    Ok(())
}

/// Subordinated potential density u_(n)^a(x,y) for any model.
pub fn subordinated_potential(
    model: &Model,
    n: f64,
    alpha: f64,
    x: &Point,
    y: &Point,
) -> Result<Potential> {
    validate_n(n)?;
    if alpha < 0.0 {
        return Err(Error::InvalidInput("alpha must be nonnegative".into()));
    }
    let scale = 1.0 / (1.0 + alpha / n);
    let base = model.potential(alpha * scale, x, y)?;
    Ok(match base {
        Potential::Finite(v) => Potential::Finite(scale * scale * v),
        Potential::Infinite => Potential::Infinite,
    })
}

/// Matrix of u_(n)^a(x,y) over a finite chain.
pub fn subordinated_kernel_matrix(
    chain: &FiniteChainModel,
    n: f64,
    alpha: f64,
) -> Result<DMatrix<f64>> {
    validate_n(n)?;
    let scale = 1.0 / (1.0 + alpha / n);
    Ok(chain.potential_matrix(alpha * scale)? * (scale * scale))
}

/// One-jump transition operator R = n (nI - G)^{-1} (substochastic).
pub fn jump_operator(chain: &FiniteChainModel, n: f64) -> Result<DMatrix<f64>> {
    validate_n(n)?;
    Ok(chain.resolvent_matrix(n)? * n)
}

/// Subordinated transition matrix exp(t n (R - I)) via the Poisson series
/// e^{-nt} sum_j (nt)^j / j! R^j, truncated at a 1e-15 tail bound.
pub fn subordinated_transition(
    chain: &FiniteChainModel,
    n: f64,
    t: f64,
) -> Result<DMatrix<f64>> {
    validate_n(n)?;
    if t < 0.0 {
        return Err(Error::InvalidInput("time must be nonnegative".into()));
    }
    let r = jump_operator(chain, n)?;
    let dim = chain.len();
    // keep the Poisson series short by halving t until nt <= 64, then
    // squaring the result back up (the semigroup property makes this exact)
    let mut squarings = 0u32;
    let mut t = t;
    while n * t > 64.0 && squarings < 60 {
        t *= 0.5;
        squarings += 1;
    }
    let nt = n * t;
    let mut term = DMatrix::identity(dim, dim);
    let mut sum = term.clone();
    let mut coeff_sum = 1.0; // running sum of Poisson weights (nt)^j/j!
    let mut coeff = 1.0;
    let target = nt.exp();
    let max_terms = 64 + (2.0 * nt) as usize + (20.0 * nt.sqrt()) as usize;
    let mut converged = !(nt > 0.0);
    for j in 1..=max_terms {
        term *= &r;
        coeff *= nt / j as f64;
        sum += &term * coeff;
        coeff_sum += coeff;
        // ||R|| <= 1, so the matrix tail is bounded by the Poisson tail
        if target - coeff_sum <= 1e-13 * target {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::SeriesTruncationFailure);
    }
    let mut p = sum * (-nt).exp();
    for _ in 0..squarings {
        p = &p * &p;
    }
    Ok(p)
}

/// Jump part of the subordinated transition matrix: the series without its
/// j = 0 identity term.
pub fn subordinated_transition_jump_part(
    chain: &FiniteChainModel,
    n: f64,
    t: f64,
) -> Result<DMatrix<f64>> {
    let dim = chain.len();
    Ok(subordinated_transition(chain, n, t)?
        - DMatrix::identity(dim, dim) * (-n * t).exp())
}

/// Full subordinated resolvent (aI - n(R - I))^{-1}. Splits exactly into
/// the density kernel times m plus the diagonal atom I/(a+n).
pub fn subordinated_resolvent(
    chain: &FiniteChainModel,
    n: f64,
    alpha: f64,
) -> Result<DMatrix<f64>> {
    validate_n(n)?;
    let dim = chain.len();
    let gen = (jump_operator(chain, n)? - DMatrix::identity(dim, dim)) * n;
    (DMatrix::identity(dim, dim) * alpha - gen)
        .lu()
        .solve(&DMatrix::identity(dim, dim))
        .ok_or(Error::NonTransient)
}

/// Pointwise domination u_(n)^a <= u over a sample of point pairs.
pub fn check_domination(
    model: &Model,
    n: f64,
    alphas: &[f64],
    pairs: &[(Point, Point)],
    tol: f64,
) -> Result<CheckReport> {
    let mut worst = f64::NEG_INFINITY;
    for &alpha in alphas {
        for (x, y) in pairs {
            let sub = subordinated_potential(model, n, alpha, x, y)?;
            let base = model.potential(0.0, x, y)?;
            let excess = match (sub, base) {
                (Potential::Finite(s), Potential::Finite(b)) => s - b,
                (Potential::Infinite, Potential::Infinite) => 0.0,
                (Potential::Infinite, Potential::Finite(_)) => f64::INFINITY,
                (Potential::Finite(_), Potential::Infinite) => f64::NEG_INFINITY,
            };
            worst = worst.max(excess);
        }
    }
    Ok(CheckReport {
        name: "subordinated-domination".into(),
        value: worst,
        tolerance: tol,
        pass: worst <= tol,
        detail: format!(
            "max of u_(n)^a - u over {} pairs x {} alphas at n = {n}",
            pairs.len(),
            alphas.len()
        ),
    })
}

/// Max-entry residual between the numerical Laplace transform of the jump
/// part of the transition matrix and the closed-form subordinated kernel
/// times the reference measure.
pub fn laplace_consistency_residual(
    chain: &FiniteChainModel,
    n: f64,
    alpha: f64,
    tol: f64,
) -> Result<f64> {
    validate_n(n)?;
    if !(alpha > 0.0) {
        return Err(Error::InvalidInput("Laplace check needs alpha > 0".into()));
    }
    let dim = chain.len();
    let mut target = subordinated_kernel_matrix(chain, n, alpha)?;
    for y in 0..dim {
        let w = chain.measure(y);
        for x in 0..dim {
            target[(x, y)] *= w;
        }
    }
    // jump-part entries are at most 1, so cutting the integral at T leaves
    // a tail below e^{-alpha T}/alpha; pick T to keep it under tol/10
    let t_max = ((10.0 / (alpha * tol)).ln() / alpha).max(1.0);
    let mut worst: f64 = 0.0;
    for x in 0..dim {
        for y in 0..dim {
            let laplace = crate::numeric::quad::integrate(
                |t| {
                    let p = subordinated_transition_jump_part(chain, n, t)
                        .map(|m| m[(x, y)])
                        .unwrap_or(f64::NAN);
                    (-alpha * t).exp() * p
                },
                0.0,
                t_max,
                tol * 0.05,
            )?;
            worst = worst.max((laplace - target[(x, y)]).abs());
        }
    }
    Ok(worst)
}

/// One row of the finite-n moment comparison: the staggered-alpha cyclic
/// integral under subordination against its n -> infinity limit.
#[derive(Clone, Copy, Debug)]
pub struct ConvergenceRow {
    pub n: f64,
    pub value: f64,
    pub limit: f64,
    pub abs_diff: f64,
}

/// Kernel matrix for one chain link: identity-subordinated (finite n) or
/// the base model (the limit).
fn link_kernel(chain: &FiniteChainModel, n: Option<f64>, alpha: f64) -> Result<DMatrix<f64>> {
    match n {
        Some(n) => subordinated_kernel_matrix(chain, n, alpha),
        None => chain.potential_matrix(alpha),
    }
}

fn staggered_value(
    chain: &FiniteChainModel,
    n: Option<f64>,
    alpha: f64,
    alpha_js: &[f64],
    fs: &[TestFunction],
    perms: &[Vec<usize>],
) -> Result<f64> {
    let k = fs.len();
    let dim = chain.len();
    // link j (1-based) carries alpha + sum_{l >= j} alpha_l
    let mut links = Vec::with_capacity(k);
    for j in 0..k {
        let a: f64 = alpha + alpha_js[j..].iter().sum::<f64>();
        links.push(link_kernel(chain, n, a)?);
    }
    let closing = link_kernel(chain, n, alpha)?;
    let fvals: Vec<Vec<f64>> = fs
        .iter()
        .map(|f| (0..dim).map(|i| f.eval_finite(i).map(|v| v * chain.measure(i))).collect())
        .collect::<Result<_>>()?;
    let values = exec::map_chunks(perms.len(), |pi| {
        let perm = &perms[pi];
        // running = K_1 D_{pi(1)} K_2 D_{pi(2)} ... K_k D_{pi(k)}
        let mut running: Option<DMatrix<f64>> = None;
        for j in 0..k {
            let mut kj = links[j].clone();
            for y in 0..dim {
                let w = fvals[perm[j]][y];
                for x in 0..dim {
                    kj[(x, y)] *= w;
                }
            }
            running = Some(match running {
                None => kj,
                Some(r) => r * kj,
            });
        }
        let m = running.unwrap() * &closing;
        (0..dim).map(|z| chain.measure(z) * m[(z, z)]).sum::<f64>()
    });
    Ok(values.iter().sum())
}

/// Convergence table of the staggered-alpha moment over a list of n values.
///
/// Every alpha_j must be strictly positive so that the time integrals the
/// formula represents converge; the limit row uses the base-model kernels.
pub fn convergence_table(
    chain: &FiniteChainModel,
    ns: &[f64],
    alpha: f64,
    alpha_js: &[f64],
    fs: &[TestFunction],
) -> Result<Vec<ConvergenceRow>> {
    let k = fs.len();
    if k == 0 || alpha_js.len() != k {
        return Err(Error::InvalidInput(
            "need one alpha_j per test function, with at least one function".into(),
        ));
    }
    if alpha < 0.0 || alpha_js.iter().any(|&a| !(a > 0.0)) {
        return Err(Error::InvalidInput(
            "alpha must be nonnegative and every alpha_j strictly positive".into(),
        ));
    }
    let perms = crate::moments::enumerate_regime(&crate::moments::PermutationRegime::new(
        crate::moments::RegimeKind::Full,
        k,
    ))?;
    let limit = staggered_value(chain, None, alpha, alpha_js, fs, &perms)?;
    let mut rows = Vec::with_capacity(ns.len());
    for &n in ns {
        validate_n(n)?;
        let value = staggered_value(chain, Some(n), alpha, alpha_js, fs, &perms)?;
        rows.push(ConvergenceRow { n, value, limit, abs_diff: (value - limit).abs() });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn two_state() -> FiniteChainModel {
        FiniteChainModel::build(
            vec!["a".into(), "b".into()],
            vec![1.0, 1.0],
            &[(0, 1, 1.0), (1, 0, 1.0)],
            vec![1.0, 1.0],
        )
        .unwrap()
    }

    fn one_state(kappa: f64) -> FiniteChainModel {
        FiniteChainModel::build(vec!["a".into()], vec![1.0], &[], vec![kappa]).unwrap()
    }

    #[test]
    fn scalar_subordinated_potential() {
        // n = 2, kappa = 2, alpha = 2: (1 + 1)^{-2} u^{1} = (1/4)(1/3) = 1/12
        let c = one_state(2.0);
        let m = subordinated_kernel_matrix(&c, 2.0, 2.0).unwrap();
        assert_relative_eq!(m[(0, 0)], 1.0 / 12.0, epsilon = 1e-15);
        let model = Model::FiniteChain(c);
        let v = subordinated_potential(&model, 2.0, 2.0, &Point::Id(0), &Point::Id(0))
            .unwrap()
            .expect_finite()
            .unwrap();
        assert_relative_eq!(v, 1.0 / 12.0, epsilon = 1e-15);
    }

    #[test]
    fn alpha_zero_recovers_base_potential() {
        let c = two_state();
        let m = subordinated_kernel_matrix(&c, 3.0, 0.0).unwrap();
        let u = c.potential_matrix(0.0).unwrap();
        assert!((m - u).amax() < 1e-14);
    }

    #[test]
    fn domination_holds_on_chain_and_bm() {
        let c = Model::FiniteChain(two_state());
        let pairs = vec![
            (Point::Id(0), Point::Id(0)),
            (Point::Id(0), Point::Id(1)),
            (Point::Id(1), Point::Id(1)),
        ];
        for &n in &[0.5, 2.0, 16.0] {
            let rep = check_domination(&c, n, &[0.0, 0.5, 2.0, 10.0], &pairs, 1e-12).unwrap();
            assert!(rep.pass, "{rep:?}");
        }
        let bm = Model::KilledBm(
            crate::model::KilledBrownianModel::new(
                3,
                1.0,
                crate::model::BoxRegion(vec![(-2.0, 2.0); 3]),
            )
            .unwrap(),
        );
        let pairs = vec![
            (Point::coord(&[0.0, 0.0, 0.0]), Point::coord(&[1.0, 0.0, 0.0])),
            (Point::coord(&[0.0, 0.0, 0.0]), Point::coord(&[0.1, 0.2, 0.0])),
            (Point::coord(&[0.5; 3]), Point::coord(&[0.5; 3])),
        ];
        let rep = check_domination(&bm, 4.0, &[0.0, 1.0, 3.0], &pairs, 1e-12).unwrap();
        assert!(rep.pass, "{rep:?}");
    }

    #[test]
    fn transition_is_a_semigroup_with_identity_at_zero() {
        let c = two_state();
        let n = 3.0;
        let p0 = subordinated_transition(&c, n, 0.0).unwrap();
        assert!((p0 - DMatrix::identity(2, 2)).amax() < 1e-15);
        let ps = subordinated_transition(&c, n, 0.4).unwrap();
        let pt = subordinated_transition(&c, n, 1.1).unwrap();
        let pst = subordinated_transition(&c, n, 1.5).unwrap();
        assert!((ps * pt - pst).amax() < 1e-12);
    }

    #[test]
    fn transition_rows_substochastic() {
        let c = two_state();
        let p = subordinated_transition(&c, 5.0, 0.7).unwrap();
        for x in 0..2 {
            let row: f64 = (0..2).map(|y| p[(x, y)]).sum();
            assert!(row <= 1.0 + 1e-12 && p[(x, 0)] >= 0.0 && p[(x, 1)] >= 0.0);
        }
    }

    #[test]
    fn full_resolvent_satisfies_resolvent_identity() {
        let c = two_state();
        let n = 2.0;
        for &(a, b) in &[(0.5, 2.0), (1.0, 4.0), (0.1, 0.2)] {
            let fa = subordinated_resolvent(&c, n, a).unwrap();
            let fb = subordinated_resolvent(&c, n, b).unwrap();
            let resid = (&fa - &fb + (&fa * &fb) * (a - b)).amax();
            assert!(resid < 1e-12, "residual {resid}");
        }
    }

    #[test]
    fn full_resolvent_is_density_plus_diagonal_atom() {
        // scalar oracle: n = 2, kappa = 2, alpha = 2 gives F = 1/3,
        // atom 1/(alpha+n) = 1/4, density part 1/12
        let c = one_state(2.0);
        let f = subordinated_resolvent(&c, 2.0, 2.0).unwrap();
        assert_relative_eq!(f[(0, 0)], 1.0 / 3.0, epsilon = 1e-14);

        let c = two_state();
        let (n, alpha) = (3.0, 1.5);
        let f = subordinated_resolvent(&c, n, alpha).unwrap();
        let mut density = subordinated_kernel_matrix(&c, n, alpha).unwrap();
        for y in 0..2 {
            for x in 0..2 {
                density[(x, y)] *= c.measure(y);
            }
        }
        let atom = DMatrix::identity(2, 2) / (alpha + n);
        assert!((f - density - atom).amax() < 1e-13);
    }

    #[test]
    fn laplace_transform_of_jump_part_matches_kernel() {
        let c = two_state();
        let resid = laplace_consistency_residual(&c, 2.0, 1.0, 1e-10).unwrap();
        assert!(resid < 1e-10, "residual {resid}");
    }

    #[test]
    fn kernel_converges_to_base_alpha_potential() {
        let c = two_state();
        let u1 = c.potential_matrix(1.0).unwrap();
        let mut prev = f64::INFINITY;
        for &n in &[1.0, 4.0, 16.0, 64.0, 256.0] {
            let diff = (subordinated_kernel_matrix(&c, n, 1.0).unwrap() - &u1).amax();
            assert!(diff < prev);
            prev = diff;
        }
        assert!(prev < 1e-2);
    }

    #[test]
    fn convergence_table_is_first_order_in_n() {
        let c = two_state();
        let fs = vec![
            TestFunction::Finite(vec![1.0, 0.0]),
            TestFunction::Finite(vec![0.0, 1.0]),
        ];
        let ns = [4.0, 8.0, 16.0, 32.0, 64.0];
        let rows = convergence_table(&c, &ns, 0.5, &[0.3, 0.7], &fs).unwrap();
        for w in rows.windows(2) {
            let ratio = w[0].abs_diff / w[1].abs_diff;
            assert!((1.5..=2.5).contains(&ratio), "ratio {ratio}");
        }
    }

    #[test]
    fn convergence_table_rejects_zero_alpha_j() {
        let c = two_state();
        let fs = vec![TestFunction::Finite(vec![1.0, 0.0])];
        assert!(convergence_table(&c, &[4.0], 0.5, &[0.0], &fs).is_err());
    }

    #[test]
    fn staggered_limit_matches_direct_evaluation_k1() {
        // k = 1 limit: sum_z m(z) [U^{a+a1} diag(f m) U^{a}]_{zz}
        let c = two_state();
        let fs = vec![TestFunction::Finite(vec![1.0, 0.5])];
        let rows = convergence_table(&c, &[1e6], 0.7, &[0.4], &fs).unwrap();
        let ua1 = c.potential_matrix(1.1).unwrap();
        let ua = c.potential_matrix(0.7).unwrap();
        let mut oracle = 0.0;
        for z in 0..2 {
            for x in 0..2 {
                oracle += c.measure(z)
                    * ua1[(z, x)]
                    * (fs[0].eval_finite(x).unwrap() * c.measure(x))
                    * ua[(x, z)];
            }
        }
        assert_relative_eq!(rows[0].limit, oracle, max_relative = 1e-12);
        // and at n = 1e6 the finite-n value is very close to the limit
        assert!(rows[0].abs_diff < 1e-5);
    }
}
