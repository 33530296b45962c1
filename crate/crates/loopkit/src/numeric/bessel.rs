//! Modified Bessel function K0, needed for the planar killed-Brownian kernel.
//!
//! Split at x = 2: the ascending series (with I0) below, a Chebyshev
//! expansion of exp(x) sqrt(x) K0(x) in 8/x - 2 above. Relative error is
//! below 1e-14 on both branches; the test suite cross-checks against the
//! integral representation int_0^inf exp(-x cosh t) dt.

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Chebyshev coefficients for exp(x) sqrt(x) K0(x), argument u = 8/x - 2,
/// evaluated as sum_k c_k T_k(u/2) with the k = 0 term halved.
const K0_TAIL: [f64; 25] = [
    2.4403030820659554547,
    -0.031448101311964500543,
    0.0015698838857300533749,
    -1.2849549581627802638e-4,
    1.3949813718876499364e-5,
    -1.8317555227191194848e-6,
    2.7668136394450150761e-7,
    -4.6604898976879476656e-8,
    8.5740340174142260858e-9,
    -1.6975345093890615156e-9,
    3.5773972814003284467e-10,
    -7.9574892444773970266e-11,
    1.855949114954926528e-11,
    -4.5145978833745185189e-12,
    1.1403405882073426268e-12,
    -2.9800969231481386837e-13,
    8.0328907750673888306e-14,
    -2.2275133267438305145e-14,
    6.3400764762144947727e-15,
    -1.8485933777630631744e-15,
    5.5120559953640532628e-16,
    -1.6782311153289422448e-16,
    5.2103915063340647556e-17,
    -1.6475798818045866746e-17,
    5.3004149073716055451e-18,
];

/// Clenshaw evaluation of sum'_k c_k T_k(x/2) for x in [-2, 2].
fn chbevl(x: f64, coef: &[f64]) -> f64 {
    let mut b0 = 0.0;
    let mut b1 = 0.0;
    let mut b2 = 0.0;
    for &c in coef.iter().rev() {
        b2 = b1;
        b1 = b0;
        b0 = x * b1 - b2 + c;
    }
    0.5 * (b0 - b2)
}

fn i0_series(x: f64) -> f64 {
    let q = 0.25 * x * x;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..60 {
        term *= q / ((k * k) as f64);
        sum += term;
        if term < 1e-18 * sum {
            break;
        }
    }
    sum
}

/// Modified Bessel function of the second kind, order zero.
pub fn bessel_k0(x: f64) -> f64 {
    if x <= 0.0 {
        return f64::INFINITY;
    }
    if x <= 2.0 {
        // K0 = -(ln(x/2) + gamma) I0(x) + sum_{k>=1} (x^2/4)^k / (k!)^2 H_k
        let q = 0.25 * x * x;
        let mut term = 1.0;
        let mut harmonic = 0.0;
        let mut sum = 0.0;
        for k in 1..60 {
            term *= q / ((k * k) as f64);
            harmonic += 1.0 / k as f64;
            let add = term * harmonic;
            sum += add;
            if add < 1e-18 * (sum.abs() + 1.0) {
                break;
            }
        }
        -((0.5 * x).ln() + EULER_GAMMA) * i0_series(x) + sum
    } else {
        let u = 8.0 / x - 2.0;
        (-x).exp() / x.sqrt() * chbevl(u, &K0_TAIL)
    }
}
