//! Revuz measures and moments of continuous additive functionals.
//!
//! A CAF of the finite chain is determined by its Revuz measure nu, a
//! nonnegative weight per state; when nu has a density g with respect to
//! the reference measure m, the CAF is the occupation integral of g and
//! its value along a path can be computed exactly segment by segment.
//! All expectations below are matrix products of the potential kernel
//! with diagonal Revuz weights.

use crate::error::{Error, Result};
use crate::exec;
use crate::model::io::RevuzEntry;
use crate::model::FiniteChainModel;
use crate::moments::{enumerate_regime, PermutationRegime, RegimeKind, MAX_K};
use crate::simulate::LoopPath;
use nalgebra::DMatrix;

/// Revuz measure of a CAF on a finite chain: one nonnegative atom per state.
#[derive(Clone, Debug, PartialEq)]
pub struct RevuzMeasure {
    atoms: Vec<f64>,
}

impl RevuzMeasure {
    /// Measure with the given mass at each state.
    pub fn from_atoms(chain: &FiniteChainModel, atoms: Vec<f64>) -> Result<Self> {
        if atoms.len() != chain.len() {
            return Err(Error::InvalidInput(
                "Revuz measure must assign a mass to every state".into(),
            ));
        }
        if atoms.iter().any(|a| !a.is_finite() || *a < 0.0) {
            return Err(Error::InvalidInput(
                "Revuz masses must be finite and nonnegative".into(),
            ));
        }
        Ok(Self { atoms })
    }

    /// Measure with density `g` with respect to m: atoms g(x) m(x). The
    /// associated CAF is t -> int_0^t g(X_s) ds.
    pub fn from_density(chain: &FiniteChainModel, g: &[f64]) -> Result<Self> {
        if g.len() != chain.len() {
            return Err(Error::InvalidInput(
                "density must assign a value to every state".into(),
            ));
        }
        let atoms = g.iter().zip(chain.measure_weights()).map(|(gi, mi)| gi * mi).collect();
        Self::from_atoms(chain, atoms)
    }

    /// Measure declared in a model file, by state name.
    pub fn from_entry(chain: &FiniteChainModel, entry: &RevuzEntry) -> Result<Self> {
        match (&entry.atoms, &entry.density) {
            (Some(_), Some(_)) | (None, None) => Err(Error::InvalidInput(format!(
                "Revuz measure {:?} must give exactly one of atoms or density",
                entry.name
            ))),
            (Some(map), None) => {
                let mut atoms = vec![0.0; chain.len()];
                for (name, &v) in map {
                    atoms[chain.state_index(name)?] = v;
                }
                Self::from_atoms(chain, atoms)
            }
            (None, Some(map)) => {
                let mut g = vec![0.0; chain.len()];
                for (name, &v) in map {
                    g[chain.state_index(name)?] = v;
                }
                Self::from_density(chain, &g)
            }
        }
    }

    pub fn atoms(&self) -> &[f64] {
        &self.atoms
    }

    /// Density with respect to m: nu(x) / m(x).
    pub fn density(&self, chain: &FiniteChainModel) -> Vec<f64> {
        self.atoms.iter().zip(chain.measure_weights()).map(|(a, m)| a / m).collect()
    }

    pub fn total_mass(&self) -> f64 {
        self.atoms.iter().sum()
    }

    /// The measure with the extra weight h(x) at each state (an h-transform
    /// reweighting such as nu -> u(., z) nu).
    pub fn weighted_by(&self, chain: &FiniteChainModel, h: &[f64]) -> Result<Self> {
        if h.len() != self.atoms.len() {
            return Err(Error::InvalidInput("weight must cover every state".into()));
        }
        let atoms = self.atoms.iter().zip(h).map(|(a, w)| a * w).collect();
        Self::from_atoms(chain, atoms)
    }
}

fn check_k(k: usize) -> Result<()> {
    if k == 0 || k > MAX_K {
        return Err(Error::RegimeTooLarge(k.max(1)));
    }
    Ok(())
}

/// Transfer matrices U diag(nu_j): one potential-kernel link weighted by the
/// j-th Revuz measure on its right endpoint.
fn caf_links(chain: &FiniteChainModel, nus: &[RevuzMeasure]) -> Result<Vec<DMatrix<f64>>> {
    let u = chain.potential_matrix(0.0)?;
    let n = chain.len();
    nus.iter()
        .map(|nu| {
            if nu.atoms.len() != n {
                return Err(Error::InvalidInput(
                    "Revuz measure must cover every state".into(),
                ));
            }
            let mut b = u.clone();
            for y in 0..n {
                for x in 0..n {
                    b[(x, y)] *= nu.atoms[y];
                }
            }
            Ok(b)
        })
        .collect()
}

fn chain_product(links: &[DMatrix<f64>], perm: &[usize]) -> DMatrix<f64> {
    let mut prod = links[perm[0]].clone();
    for &j in &perm[1..] {
        prod *= &links[j];
    }
    prod
}

/// Potential of the CAF: U_A f(x) = sum_y u(x,y) f(y) nu(y), the expected
/// total integral of f against dA started from each state.
pub fn caf_potential(
    chain: &FiniteChainModel,
    f: &[f64],
    nu: &RevuzMeasure,
) -> Result<Vec<f64>> {
    let n = chain.len();
    if f.len() != n || nu.atoms.len() != n {
        return Err(Error::InvalidInput("f and nu must cover every state".into()));
    }
    let u = chain.potential_matrix(0.0)?;
    Ok((0..n)
        .map(|x| (0..n).map(|y| u[(x, y)] * f[y] * nu.atoms[y]).sum())
        .collect())
}

/// Dual potential: the same kernel applied from the left,
/// sum_x u(x,y) f(x) m(x).
pub fn dual_potential(chain: &FiniteChainModel, f: &[f64]) -> Result<Vec<f64>> {
    let n = chain.len();
    if f.len() != n {
        return Err(Error::InvalidInput("f must cover every state".into()));
    }
    let u = chain.potential_matrix(0.0)?;
    Ok((0..n)
        .map(|y| (0..n).map(|x| u[(x, y)] * f[x] * chain.measure(x)).sum())
        .collect())
}

/// Residual of the duality identity
/// <f, U_A g>_m = sum_y (dual potential of f)(y) g(y) nu(y),
/// which is exact on finite chains.
pub fn duality_residual(
    chain: &FiniteChainModel,
    f: &[f64],
    g: &[f64],
    nu: &RevuzMeasure,
) -> Result<f64> {
    let lhs: f64 = f
        .iter()
        .zip(caf_potential(chain, g, nu)?)
        .zip(chain.measure_weights())
        .map(|((fi, ui), mi)| fi * ui * mi)
        .sum();
    let rhs: f64 = dual_potential(chain, f)?
        .iter()
        .zip(g)
        .zip(&nu.atoms)
        .map(|((di, gi), ai)| di * gi * ai)
        .sum();
    Ok((lhs - rhs).abs())
}

/// Expected ordered product of CAF increments started from `start`:
/// E^x of the integral over 0 < t_1 < ... < t_n of dA^1 ... dA^n, which
/// equals the chain integral
/// sum u(x,x_1) nu_1(x_1) u(x_1,x_2) nu_2(x_2) ... u(x_{n-1},x_n) nu_n(x_n).
pub fn ordered_caf_expectation(
    chain: &FiniteChainModel,
    start: usize,
    nus: &[RevuzMeasure],
) -> Result<f64> {
    check_k(nus.len())?;
    if start >= chain.len() {
        return Err(Error::OutOfDomain("start state out of range".into()));
    }
    let links = caf_links(chain, nus)?;
    let perm: Vec<usize> = (0..nus.len()).collect();
    let prod = chain_product(&links, &perm);
    Ok((0..chain.len()).map(|y| prod[(start, y)]).sum())
}

/// Loop-measure moment of a product of total CAF values: the cyclic kernel
/// product with Revuz weights at the vertices, either for the identity
/// ordering alone or summed over cyclic permutation classes.
pub fn caf_mu_moment(
    chain: &FiniteChainModel,
    nus: &[RevuzMeasure],
    ordered: bool,
) -> Result<f64> {
    let k = nus.len();
    check_k(k)?;
    if k < 2 {
        return Err(Error::InfiniteMoment(
            "loop CAF moment with k = 1 is infinite (the loop measure has infinite mass near zero lifetime)"
                .into(),
        ));
    }
    let links = caf_links(chain, nus)?;
    let perms = if ordered {
        vec![(0..k).collect::<Vec<usize>>()]
    } else {
        enumerate_regime(&PermutationRegime::new(RegimeKind::CyclicClasses, k))?
    };
    let values = exec::map_chunks(perms.len(), |i| {
        let prod = chain_product(&links, &perms[i]);
        (0..chain.len()).map(|x| prod[(x, x)]).sum::<f64>()
    });
    Ok(values.iter().sum())
}

/// Ordered CAF product under the unnormalized rooted loop measure Q^{z,z}:
/// sum u(z,x_1) nu_1(x_1) ... u(x_{n-1},x_n) nu_n(x_n) u(x_n,z).
pub fn rooted_caf_expectation(
    chain: &FiniteChainModel,
    z: usize,
    nus: &[RevuzMeasure],
) -> Result<f64> {
    check_k(nus.len())?;
    if z >= chain.len() {
        return Err(Error::OutOfDomain("root state out of range".into()));
    }
    let u = chain.potential_matrix(0.0)?;
    let links = caf_links(chain, nus)?;
    let perm: Vec<usize> = (0..nus.len()).collect();
    // the links already open with u(z, x_1); close the cycle with u(x_n, z)
    let prod = chain_product(&links, &perm) * &u;
    Ok(prod[(z, z)])
}

/// Ordered CAF product under the bridge law conditioned to die at z:
/// (1 / u(x,z)) sum u(x,x_1) nu_1(x_1) ... nu_n(x_n) u(x_n,z). Under this
/// law the CAF with Revuz measure nu behaves like the CAF of the
/// conditioned process with Revuz measure u(., z) nu.
pub fn bridge_caf_expectation(
    chain: &FiniteChainModel,
    x: usize,
    z: usize,
    nus: &[RevuzMeasure],
) -> Result<f64> {
    check_k(nus.len())?;
    let n = chain.len();
    if x >= n || z >= n {
        return Err(Error::OutOfDomain("state out of range".into()));
    }
    let u = chain.potential_matrix(0.0)?;
    let links = caf_links(chain, nus)?;
    let perm: Vec<usize> = (0..nus.len()).collect();
    // the links open with u(x, x_1) and end in nu_n(x_n); close the chain
    // with u(x_n, z) and normalize by the conditioning h-function u(x, z)
    let prod = chain_product(&links, &perm);
    let total: f64 = (0..n).map(|y| prod[(x, y)] * u[(y, z)]).sum();
    Ok(total / u[(x, z)])
}

/// Ordered simplex integrals of the CAF increments along one path,
/// depths 1..=k: the CAF with Revuz measure nu is the occupation integral
/// of its density nu/m, so the product integral is exact per segment.
pub fn caf_simplex_along_path(
    chain: &FiniteChainModel,
    path: &LoopPath,
    nus: &[RevuzMeasure],
) -> Result<Vec<f64>> {
    check_k(nus.len())?;
    let densities: Vec<Vec<f64>> = nus.iter().map(|nu| nu.density(chain)).collect();
    path.simplex_integrals(&densities)
}
