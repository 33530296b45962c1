//! State spaces, reference measures and alpha-potential kernels.
//!
//! Two built-in model families: finite-rate chains with explicit killing
//! (every potential finite; exactly solvable through the generator), and
//! exponentially killed Brownian motion in dimension 1..3 (closed-form
//! kernel, infinite on the diagonal for d >= 2).

pub mod checks;
pub mod io;

use crate::error::{Error, Result};
use crate::numeric::bessel::bessel_k0;
use crate::numeric::linalg::generator_exp;
use nalgebra::DMatrix;
use std::collections::HashMap;

/// Extended nonnegative real: kernel values may be genuinely infinite on
/// the diagonal and must never round-trip through a large float.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Potential {
    Finite(f64),
    Infinite,
}

impl Potential {
    pub fn is_finite(&self) -> bool {
        matches!(self, Potential::Finite(_))
    }

    /// Collapse to f64, mapping `Infinite` to `f64::INFINITY`.
    pub fn as_f64(&self) -> f64 {
        match self {
            Potential::Finite(v) => *v,
            Potential::Infinite => f64::INFINITY,
        }
    }

    pub fn expect_finite(&self) -> Result<f64> {
        match self {
            Potential::Finite(v) => Ok(*v),
            Potential::Infinite => Err(Error::InfiniteMoment("kernel value is infinite".into())),
        }
    }
}

/// A point of a model's state space.
#[derive(Clone, Debug, PartialEq)]
pub enum Point {
    /// Index into a finite chain's state list.
    Id(usize),
    /// Coordinates in a euclidean space.
    Coord(Vec<f64>),
}

impl Point {
    pub fn coord(xs: &[f64]) -> Self {
        Point::Coord(xs.to_vec())
    }
}

pub(crate) fn euclid_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Axis-aligned box, the quadrature domain for euclidean models.
#[derive(Clone, Debug, PartialEq)]
pub struct BoxRegion(pub Vec<(f64, f64)>);

impl BoxRegion {
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn volume(&self) -> f64 {
        self.0.iter().map(|(lo, hi)| hi - lo).product()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.0.len()
            && x.iter()
                .zip(&self.0)
                .all(|(xi, (lo, hi))| *xi >= *lo && *xi <= *hi)
    }

    pub fn center(&self) -> Vec<f64> {
        self.0.iter().map(|(lo, hi)| 0.5 * (lo + hi)).collect()
    }

    pub fn corners(&self) -> Vec<Vec<f64>> {
        let d = self.dim();
        (0..1usize << d)
            .map(|mask| {
                (0..d)
                    .map(|i| if mask >> i & 1 == 0 { self.0[i].0 } else { self.0[i].1 })
                    .collect()
            })
            .collect()
    }

    /// Separation distance between this box and the complement of `outer`,
    /// assuming `self` lies inside `outer`. Positive when `self` is in the
    /// interior.
    pub fn separation_from_complement(&self, outer: &BoxRegion) -> f64 {
        self.0
            .iter()
            .zip(&outer.0)
            .flat_map(|((lo, hi), (olo, ohi))| [lo - olo, ohi - hi])
            .fold(f64::INFINITY, f64::min)
    }

    pub fn validate(&self) -> Result<()> {
        if self.0.is_empty() || self.0.iter().any(|(lo, hi)| !(hi > lo)) {
            return Err(Error::InvalidInput(
                "bounding box must have strictly positive volume".into(),
            ));
        }
        Ok(())
    }
}

/// Transient continuous-time chain on a finite state set.
///
/// Potentials come from the generator: u^a(x,y) = [(aI - G)^{-1}]_{xy} / m(y).
/// The (-G)^{-1} factor is solved once at construction and doubles as the
/// transience certificate.
#[derive(Clone, Debug)]
pub struct FiniteChainModel {
    states: Vec<String>,
    index: HashMap<String, usize>,
    m: Vec<f64>,
    rates: DMatrix<f64>,
    kill: Vec<f64>,
    generator: DMatrix<f64>,
    u0: DMatrix<f64>,
}

impl FiniteChainModel {
    /// Builds the chain and certifies transience by solving (-G)h = 1 for a
    /// finite nonnegative h.
    pub fn build(
        states: Vec<String>,
        m: Vec<f64>,
        rate_triples: &[(usize, usize, f64)],
        kill: Vec<f64>,
    ) -> Result<Self> {
        let n = states.len();
        if n == 0 {
            return Err(Error::InvalidInput("at least one state required".into()));
        }
        let mut index = HashMap::new();
        for (i, s) in states.iter().enumerate() {
            if index.insert(s.clone(), i).is_some() {
                return Err(Error::InvalidInput(format!("duplicate state id {s:?}")));
            }
        }
        if m.len() != n || kill.len() != n {
            return Err(Error::InvalidInput("m and kill must cover every state".into()));
        }
        for (i, &w) in m.iter().enumerate() {
            if !(w > 0.0) || !w.is_finite() {
                return Err(Error::ZeroMeasureWeight(states[i].clone()));
            }
        }
        let mut rates = DMatrix::zeros(n, n);
        for &(x, y, q) in rate_triples {
            if x >= n || y >= n || x == y {
                return Err(Error::InvalidInput(format!(
                    "rate entry ({x},{y}) out of range or on the diagonal"
                )));
            }
            if q < 0.0 {
                return Err(Error::NegativeRate(states[x].clone(), states[y].clone(), q));
            }
            rates[(x, y)] += q;
        }
        for (i, &k) in kill.iter().enumerate() {
            if k < 0.0 {
                return Err(Error::NegativeRate(states[i].clone(), states[i].clone(), k));
            }
        }
        let mut generator = rates.clone();
        for x in 0..n {
            let out: f64 = (0..n).filter(|&y| y != x).map(|y| rates[(x, y)]).sum();
            generator[(x, x)] = -kill[x] - out;
        }
        let neg_g = -generator.clone();
        let lu = neg_g.clone().lu();
        let ones = nalgebra::DVector::from_element(n, 1.0);
        let h = lu.solve(&ones).ok_or(Error::NonTransient)?;
        if h.iter().any(|&v| !v.is_finite() || v < -1e-9) {
            return Err(Error::NonTransient);
        }
        let u0 = lu
            .solve(&DMatrix::identity(n, n))
            .ok_or(Error::NonTransient)?;
        if u0.iter().any(|&v| !v.is_finite()) {
            return Err(Error::NonTransient);
        }
        Ok(Self { states, index, m, rates, kill, generator, u0 })
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn state_names(&self) -> &[String] {
        &self.states
    }

    pub fn state_index(&self, name: &str) -> Result<usize> {
        self.index
            .get(name)
            .copied()
            .ok_or_else(|| Error::OutOfDomain(format!("unknown state {name:?}")))
    }

    pub fn measure(&self, x: usize) -> f64 {
        self.m[x]
    }

    pub fn measure_weights(&self) -> &[f64] {
        &self.m
    }

    pub fn jump_rate(&self, x: usize, y: usize) -> f64 {
        if x == y {
            0.0
        } else {
            self.rates[(x, y)]
        }
    }

    pub fn kill_rate(&self, x: usize) -> f64 {
        self.kill[x]
    }

    pub fn generator(&self) -> &DMatrix<f64> {
        &self.generator
    }

    /// (aI - G)^{-1}; the alpha = 0 case is the cached factorization.
    pub fn resolvent_matrix(&self, alpha: f64) -> Result<DMatrix<f64>> {
        if alpha < 0.0 {
            return Err(Error::InvalidInput("alpha must be nonnegative".into()));
        }
        if alpha == 0.0 {
            return Ok(self.u0.clone());
        }
        let n = self.len();
        let mat = DMatrix::identity(n, n) * alpha - &self.generator;
        mat.lu()
            .solve(&DMatrix::identity(n, n))
            .ok_or(Error::NonTransient)
    }

    /// Kernel matrix u^a(x,y) = [(aI - G)^{-1}]_{xy} / m(y).
    pub fn potential_matrix(&self, alpha: f64) -> Result<DMatrix<f64>> {
        let mut r = self.resolvent_matrix(alpha)?;
        for y in 0..self.len() {
            let w = self.m[y];
            for x in 0..self.len() {
                r[(x, y)] /= w;
            }
        }
        Ok(r)
    }

    pub fn potential(&self, alpha: f64, x: usize, y: usize) -> Result<f64> {
        if x >= self.len() || y >= self.len() {
            return Err(Error::OutOfDomain("state index out of range".into()));
        }
        Ok(self.potential_matrix(alpha)?[(x, y)])
    }

    /// Transition matrix exp(t G).
    pub fn transition(&self, t: f64) -> Result<DMatrix<f64>> {
        generator_exp(&self.generator, t)
    }
}

/// Brownian motion in R^d killed at an independent exponential time.
///
/// Closed-form kernels with lambda = sqrt(2 (alpha + kappa)):
/// d=1: exp(-lambda r)/lambda, d=2: K0(lambda r)/pi,
/// d=3: exp(-lambda r)/(2 pi r).
#[derive(Clone, Debug)]
pub struct KilledBrownianModel {
    dim: usize,
    kappa: f64,
    quad_box: BoxRegion,
}

impl KilledBrownianModel {
    pub fn new(dim: usize, kappa: f64, quad_box: BoxRegion) -> Result<Self> {
        if !(1..=3).contains(&dim) {
            return Err(Error::InvalidInput("killed BM dimension must be 1, 2 or 3".into()));
        }
        if !(kappa > 0.0) {
            return Err(Error::InvalidInput("killing rate must be strictly positive".into()));
        }
        if quad_box.dim() != dim {
            return Err(Error::InvalidInput("box dimension must match model dimension".into()));
        }
        quad_box.validate()?;
        Ok(Self { dim, kappa, quad_box })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn quad_box(&self) -> &BoxRegion {
        &self.quad_box
    }

    pub fn diagonal_infinite(&self) -> bool {
        self.dim >= 2
    }

    pub fn lambda(&self, alpha: f64) -> f64 {
        (2.0 * (alpha + self.kappa)).sqrt()
    }

    /// Radial kernel u^a(r).
    pub fn potential_radial(&self, alpha: f64, r: f64) -> Potential {
        let lam = self.lambda(alpha);
        match self.dim {
            1 => Potential::Finite((-lam * r).exp() / lam),
            2 => {
                if r == 0.0 {
                    Potential::Infinite
                } else {
                    Potential::Finite(bessel_k0(lam * r) / std::f64::consts::PI)
                }
            }
            3 => {
                if r == 0.0 {
                    Potential::Infinite
                } else {
                    Potential::Finite((-lam * r).exp() / (2.0 * std::f64::consts::PI * r))
                }
            }
            _ => unreachable!(),
        }
    }
}

/// A user-supplied radial kernel profile r^{-p} in dimension d, used by the
/// integrability diagnostics to probe regimes outside the built-in models
/// (for example the d = 4 Green-function profile).
#[derive(Clone, Debug)]
pub struct RadialKernelModel {
    pub dim: usize,
    pub exponent: f64,
}

/// Any supported model, behind one kernel interface.
#[derive(Clone, Debug)]
pub enum Model {
    FiniteChain(FiniteChainModel),
    KilledBm(KilledBrownianModel),
    CustomRadial(RadialKernelModel),
}

impl Model {
    pub fn diagonal_infinite(&self) -> bool {
        match self {
            Model::FiniteChain(_) => false,
            Model::KilledBm(bm) => bm.diagonal_infinite(),
            Model::CustomRadial(r) => r.exponent > 0.0,
        }
    }

    /// u^alpha(x, y) as an extended value.
    pub fn potential(&self, alpha: f64, x: &Point, y: &Point) -> Result<Potential> {
        if alpha < 0.0 {
            return Err(Error::InvalidInput("alpha must be nonnegative".into()));
        }
        match (self, x, y) {
            (Model::FiniteChain(c), Point::Id(i), Point::Id(j)) => {
                Ok(Potential::Finite(c.potential(alpha, *i, *j)?))
            }
            (Model::KilledBm(bm), Point::Coord(a), Point::Coord(b)) => {
                if a.len() != bm.dim() || b.len() != bm.dim() {
                    return Err(Error::OutOfDomain("coordinate dimension mismatch".into()));
                }
                Ok(bm.potential_radial(alpha, euclid_dist(a, b)))
            }
            (Model::CustomRadial(rk), Point::Coord(a), Point::Coord(b)) => {
                if a.len() != rk.dim || b.len() != rk.dim {
                    return Err(Error::OutOfDomain("coordinate dimension mismatch".into()));
                }
                let r = euclid_dist(a, b);
                if r == 0.0 && rk.exponent > 0.0 {
                    Ok(Potential::Infinite)
                } else {
                    Ok(Potential::Finite(r.powf(-rk.exponent)))
                }
            }
            _ => Err(Error::OutOfDomain("point kind does not match model kind".into())),
        }
    }

    pub fn as_finite_chain(&self) -> Result<&FiniteChainModel> {
        match self {
            Model::FiniteChain(c) => Ok(c),
            _ => Err(Error::InvalidInput("operation requires a finite-chain model".into())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    pub(crate) fn two_state_reference() -> FiniteChainModel {
        FiniteChainModel::build(
            vec!["a".into(), "b".into()],
            vec![1.0, 1.0],
            &[(0, 1, 1.0), (1, 0, 1.0)],
            vec![1.0, 1.0],
        )
        .unwrap()
    }

    #[test]
    fn two_state_potentials() {
        // (-G)^{-1} for G = [[-2,1],[1,-2]] is [[2/3,1/3],[1/3,2/3]].
        let c = two_state_reference();
        assert_relative_eq!(c.potential(0.0, 0, 0).unwrap(), 2.0 / 3.0, epsilon = 1e-14);
        assert_relative_eq!(c.potential(0.0, 0, 1).unwrap(), 1.0 / 3.0, epsilon = 1e-14);
        assert_relative_eq!(c.potential(0.0, 1, 1).unwrap(), 2.0 / 3.0, epsilon = 1e-14);
    }

    #[test]
    fn one_state_scalar_resolvent() {
        let c = FiniteChainModel::build(vec!["a".into()], vec![1.0], &[], vec![2.0]).unwrap();
        assert_relative_eq!(c.potential(0.0, 0, 0).unwrap(), 0.5, epsilon = 1e-15);
        assert_relative_eq!(c.potential(1.0, 0, 0).unwrap(), 1.0 / 3.0, epsilon = 1e-15);
        assert_relative_eq!(c.potential(5.0, 0, 0).unwrap(), 1.0 / 7.0, epsilon = 1e-15);
    }

    #[test]
    fn conservative_chain_rejected() {
        let err = FiniteChainModel::build(
            vec!["a".into(), "b".into()],
            vec![1.0, 1.0],
            &[(0, 1, 1.0), (1, 0, 1.0)],
            vec![0.0, 0.0],
        )
        .unwrap_err();
        assert!(matches!(err, Error::NonTransient));
    }

    #[test]
    fn negative_rate_rejected() {
        let err = FiniteChainModel::build(
            vec!["a".into(), "b".into()],
            vec![1.0, 1.0],
            &[(0, 1, -0.5)],
            vec![1.0, 1.0],
        )
        .unwrap_err();
        assert!(matches!(err, Error::NegativeRate(..)));
    }

    #[test]
    fn zero_measure_weight_rejected() {
        let err =
            FiniteChainModel::build(vec!["a".into()], vec![0.0], &[], vec![1.0]).unwrap_err();
        assert!(matches!(err, Error::ZeroMeasureWeight(_)));
    }

    #[test]
    fn finite_chain_resolvent_times_generator_is_identity() {
        let c = two_state_reference();
        for &alpha in &[0.0, 0.5, 2.0] {
            let n = c.len();
            let lhs = (DMatrix::identity(n, n) * alpha - c.generator())
                * c.resolvent_matrix(alpha).unwrap();
            assert!((lhs - DMatrix::identity(n, n)).amax() < 1e-12);
        }
    }

    #[test]
    fn killed_bm_kernel_values() {
        let bm3 = KilledBrownianModel::new(
            3,
            0.5,
            BoxRegion(vec![(-1.0, 1.0), (-1.0, 1.0), (-1.0, 1.0)]),
        )
        .unwrap();
        // alpha = 1/2, kappa = 1/2 -> lambda = sqrt(2), r = 1.
        let v = bm3.potential_radial(0.5, 1.0);
        assert_relative_eq!(
            v.expect_finite().unwrap(),
            (-2.0f64.sqrt()).exp() / (2.0 * std::f64::consts::PI),
            epsilon = 1e-14
        );
        assert_eq!(bm3.potential_radial(0.5, 0.0), Potential::Infinite);

        let bm2 =
            KilledBrownianModel::new(2, 1.0, BoxRegion(vec![(-1.0, 1.0), (-1.0, 1.0)])).unwrap();
        assert_eq!(bm2.potential_radial(0.0, 0.0), Potential::Infinite);

        let bm1 = KilledBrownianModel::new(1, 1.0, BoxRegion(vec![(-1.0, 1.0)])).unwrap();
        // finite diagonal in d = 1
        assert!(bm1.potential_radial(0.0, 0.0).is_finite());
    }

    #[test]
    fn potential_monotone_in_alpha() {
        let c = two_state_reference();
        let mut prev = f64::INFINITY;
        for i in 0..20 {
            let alpha = 0.25 * i as f64;
            let v = c.potential(alpha, 0, 1).unwrap();
            assert!(v <= prev + 1e-15);
            prev = v;
        }
        // and it vanishes as alpha grows
        assert!(c.potential(1e6, 0, 1).unwrap() < 1e-6);
    }

    #[test]
    fn killed_bm_oracle_time_integral() {
        // u^a(x,y) = int_0^inf (2 pi t)^{-d/2} exp(-r^2/(2t) - (a+kappa) t) dt
        use crate::numeric::quad::integrate_to_inf;
        for &(dim, kappa, alpha, r) in
            &[(1usize, 1.0, 0.5, 0.7), (2, 0.5, 1.0, 1.3), (3, 0.5, 0.5, 1.0)]
        {
            let boxr = BoxRegion(vec![(-2.0, 2.0); dim]);
            let bm = KilledBrownianModel::new(dim, kappa, boxr).unwrap();
            let c = alpha + kappa;
            let oracle = integrate_to_inf(
                |t| {
                    (2.0 * std::f64::consts::PI * t).powf(-(dim as f64) / 2.0)
                        * (-r * r / (2.0 * t) - c * t).exp()
                },
                0.0,
                1e-12,
            )
            .unwrap();
            let v = bm.potential_radial(alpha, r).expect_finite().unwrap();
            assert_relative_eq!(v, oracle, max_relative = 1e-8);
        }
    }
}
