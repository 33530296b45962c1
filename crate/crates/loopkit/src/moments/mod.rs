//! Analytic moment formulas for the loop measure and its companions.
//!
//! Everything here reduces to sums of cyclic products of potential kernels
//! weighted by test functions: exact matrix arithmetic on finite chains,
//! singularity-aware quadrature on euclidean models.

pub mod euclidean;

use crate::error::{Error, Result};
use crate::exec;
use crate::model::checks::kernel_inner_product;
use crate::model::{BoxRegion, FiniteChainModel, Model, Point};
use nalgebra::DMatrix;
use serde::Deserialize;

pub const MAX_K: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegimeKind {
    /// Permutations modulo rotation; (k-1)! classes.
    CyclicClasses,
    /// The k cyclic translations.
    CyclicTranslations,
    /// All k! permutations.
    Full,
}

#[derive(Clone, Copy, Debug)]
pub struct PermutationRegime {
    pub kind: RegimeKind,
    pub k: usize,
}

impl PermutationRegime {
    pub fn new(kind: RegimeKind, k: usize) -> Self {
        Self { kind, k }
    }
}

fn all_permutations(k: usize) -> Vec<Vec<usize>> {
    // lexicographic order, 0-based
    let mut out = Vec::new();
    let mut items: Vec<usize> = (0..k).collect();
    fn recurse(prefix: &mut Vec<usize>, rest: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if rest.is_empty() {
            out.push(prefix.clone());
            return;
        }
        for i in 0..rest.len() {
            let v = rest.remove(i);
            prefix.push(v);
            recurse(prefix, rest, out);
            prefix.pop();
            rest.insert(i, v);
        }
    }
    recurse(&mut Vec::new(), &mut items, &mut out);
    out
}

/// Permutations of the regime, 0-based. Cyclic classes are represented by
/// the rotation fixing the first slot (pi(1) = 1 in 1-based terms).
pub fn enumerate_regime(regime: &PermutationRegime) -> Result<Vec<Vec<usize>>> {
    let k = regime.k;
    if k == 0 {
        return Err(Error::InvalidInput("k must be at least 1".into()));
    }
    if k > MAX_K {
        return Err(Error::RegimeTooLarge(k));
    }
    Ok(match regime.kind {
        RegimeKind::Full => all_permutations(k),
        RegimeKind::CyclicClasses => all_permutations(k)
            .into_iter()
            .filter(|p| p[0] == 0)
            .collect(),
        RegimeKind::CyclicTranslations => (0..k)
            .map(|shift| (0..k).map(|j| (j + shift) % k).collect())
            .collect(),
    })
}

/// Bounded test function with compact support.
#[derive(Clone, Debug)]
pub enum TestFunction {
    /// Values per state of a finite chain.
    Finite(Vec<f64>),
    /// Indicator of a box.
    IndicatorBox(BoxRegion),
    /// exp(-|x-c|^2 / (2 w^2)) truncated to its support box.
    GaussianBump { center: Vec<f64>, width: f64, support: BoxRegion },
}

impl TestFunction {
    pub fn indicator_of_state(chain: &FiniteChainModel, state: usize) -> Self {
        let mut v = vec![0.0; chain.len()];
        v[state] = 1.0;
        TestFunction::Finite(v)
    }

    pub fn eval_finite(&self, i: usize) -> Result<f64> {
        match self {
            TestFunction::Finite(v) => Ok(v[i]),
            _ => Err(Error::InvalidInput("test function is not finite-state".into())),
        }
    }

    pub fn eval_coord(&self, x: &[f64]) -> Result<f64> {
        match self {
            TestFunction::IndicatorBox(b) => Ok(if b.contains(x) { 1.0 } else { 0.0 }),
            TestFunction::GaussianBump { center, width, support } => {
                if !support.contains(x) {
                    return Ok(0.0);
                }
                let d2: f64 =
                    x.iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum();
                Ok((-d2 / (2.0 * width * width)).exp())
            }
            TestFunction::Finite(_) => {
                Err(Error::InvalidInput("test function is finite-state".into()))
            }
        }
    }

    pub fn support_box(&self) -> Option<&BoxRegion> {
        match self {
            TestFunction::IndicatorBox(b) => Some(b),
            TestFunction::GaussianBump { support, .. } => Some(support),
            TestFunction::Finite(_) => None,
        }
    }
}

/// Test functions, a permutation regime, an alpha-killing parameter and an
/// optional root for loop moments.
#[derive(Clone, Debug)]
pub struct MomentSpec {
    pub functions: Vec<TestFunction>,
    pub regime: RegimeKind,
    pub alpha: f64,
    pub root: Option<Point>,
}

impl MomentSpec {
    pub fn k(&self) -> usize {
        self.functions.len()
    }
}

/// Value plus quadrature diagnostics. Exact sums report a zero estimate.
#[derive(Clone, Copy, Debug)]
pub struct MomentValue {
    pub value: f64,
    pub error_estimate: f64,
    pub truncated: bool,
}

impl MomentValue {
    pub fn exact(value: f64) -> Self {
        Self { value, error_estimate: 0.0, truncated: false }
    }
}

/// B_j(x,y) = f_j(x) m(x) u^a(x,y): the transfer matrix of one chain link.
fn link_matrices(
    chain: &FiniteChainModel,
    alpha: f64,
    fs: &[TestFunction],
) -> Result<Vec<DMatrix<f64>>> {
    let u = chain.potential_matrix(alpha)?;
    let n = chain.len();
    fs.iter()
        .map(|f| {
            let mut b = u.clone();
            for x in 0..n {
                let scale = f.eval_finite(x)? * chain.measure(x);
                for y in 0..n {
                    b[(x, y)] *= scale;
                }
            }
            Ok(b)
        })
        .collect()
}

fn trace(m: &DMatrix<f64>) -> f64 {
    (0..m.nrows()).map(|i| m[(i, i)]).sum()
}

fn chain_product(links: &[DMatrix<f64>], perm: &[usize]) -> DMatrix<f64> {
    let mut prod = links[perm[0]].clone();
    for &j in &perm[1..] {
        prod *= &links[j];
    }
    prod
}

/// Sum over a set of permutations of a per-permutation value, computed in
/// parallel but reduced in enumeration order.
fn permutation_sum<F>(perms: &[Vec<usize>], eval: F) -> f64
where
    F: Fn(&[usize]) -> f64 + Sync + Send,
{
    let values = exec::map_chunks(perms.len(), |i| eval(&perms[i]));
    values.iter().sum()
}

/// Single ordered cyclic-product integral: one term of the loop-measure
/// moment, without the permutation sum.
pub fn ordered_mu_moment(model: &Model, fs: &[TestFunction]) -> Result<MomentValue> {
    let k = fs.len();
    if k == 0 || k > MAX_K {
        return Err(Error::RegimeTooLarge(k.max(1)));
    }
    if k == 1 && model.diagonal_infinite() {
        return Err(Error::InfiniteMoment(
            "k = 1 loop moment is infinite: the kernel diagonal is infinite".into(),
        ));
    }
    match model {
        Model::FiniteChain(chain) => {
            let links = link_matrices(chain, 0.0, fs)?;
            let perm: Vec<usize> = (0..k).collect();
            Ok(MomentValue::exact(trace(&chain_product(&links, &perm))))
        }
        _ => euclidean::cyclic_moment(model, 0.0, fs, &[(0..k).collect::<Vec<_>>()], None),
    }
}

/// Loop-measure moment of a product of occupation integrals: the cyclic-class
/// permutation sum of cyclic kernel products.
pub fn mu_moment(model: &Model, spec: &MomentSpec) -> Result<MomentValue> {
    let k = spec.k();
    if k < 2 {
        return Err(Error::InfiniteMoment(
            "mu moment with k = 1 is infinite (diagonal of u)".into(),
        ));
    }
    let perms = enumerate_regime(&PermutationRegime::new(RegimeKind::CyclicClasses, k))?;
    match model {
        Model::FiniteChain(chain) => {
            let links = link_matrices(chain, 0.0, &spec.functions)?;
            let total = permutation_sum(&perms, |p| trace(&chain_product(&links, p)));
            Ok(MomentValue::exact(total))
        }
        _ => euclidean::cyclic_moment(model, 0.0, &spec.functions, &perms, None),
    }
}

/// Companion-measure moment with alpha-killing: full permutation sum with an
/// outer integral over the root.
pub fn nu_moment(model: &Model, spec: &MomentSpec) -> Result<MomentValue> {
    let k = spec.k();
    if k == 0 {
        return Err(Error::InvalidInput("k must be at least 1".into()));
    }
    if spec.alpha <= 0.0 {
        return Err(Error::InfiniteMoment(
            "nu moment requires alpha > 0; the alpha = 0 root integral diverges".into(),
        ));
    }
    let perms = enumerate_regime(&PermutationRegime::new(RegimeKind::Full, k))?;
    match model {
        Model::FiniteChain(chain) => {
            let links = link_matrices(chain, spec.alpha, &spec.functions)?;
            let u = chain.resolvent_matrix(spec.alpha)?;
            // sum_z m(z) [U B_{pi(1)} ... B_{pi(k)}]_{zz}; the leading U is
            // the resolvent matrix because the closing u(x_k, z) together
            // with the outer m(dz) absorbs the 1/m(z) of the density.
            let total = permutation_sum(&perms, |p| {
                let prod = &u * chain_product(&links, p);
                (0..chain.len()).map(|z| prod[(z, z)]).sum::<f64>()
            });
            Ok(MomentValue::exact(total))
        }
        _ => euclidean::nu_moment_quadrature(model, spec, &perms),
    }
}

/// Rooted loop moment under Q^{z,z}: the single-permutation chain (ordered)
/// or the full permutation sum, both with endpoints pinned at z.
pub fn qzz_moment(
    model: &Model,
    z: &Point,
    fs: &[TestFunction],
    alpha: f64,
    ordered: bool,
) -> Result<MomentValue> {
    let k = fs.len();
    if k == 0 || k > MAX_K {
        return Err(Error::RegimeTooLarge(k.max(1)));
    }
    let perms = if ordered {
        vec![(0..k).collect::<Vec<usize>>()]
    } else {
        enumerate_regime(&PermutationRegime::new(RegimeKind::Full, k))?
    };
    match (model, z) {
        (Model::FiniteChain(chain), Point::Id(zi)) => {
            let links = link_matrices(chain, alpha, fs)?;
            let u = chain.potential_matrix(alpha)?;
            let total = permutation_sum(&perms, |p| {
                let prod = &u * chain_product(&links, p);
                prod[(*zi, *zi)]
            });
            Ok(MomentValue::exact(total))
        }
        _ => euclidean::cyclic_moment(model, alpha, fs, &perms, Some(z)),
    }
}

/// Residual of the derivative identity
/// int u^a(x,w) u^a(w,y) m(dw) = -(d/da) u^a(x,y), by central difference.
pub fn derivative_identity_residual(
    model: &Model,
    alpha: f64,
    x: &Point,
    y: &Point,
    h_step: f64,
) -> Result<f64> {
    if x == y {
        return Err(Error::InvalidInput("derivative identity needs x != y".into()));
    }
    if alpha <= h_step {
        return Err(Error::InvalidInput("need alpha > h_step for the central difference".into()));
    }
    let inner = kernel_inner_product(model, alpha, alpha, x, y, 1e-10)?;
    let up = model.potential(alpha + h_step, x, y)?.expect_finite()?;
    let dn = model.potential(alpha - h_step, x, y)?.expect_finite()?;
    let derivative = (up - dn) / (2.0 * h_step);
    Ok((inner + derivative).abs())
}
