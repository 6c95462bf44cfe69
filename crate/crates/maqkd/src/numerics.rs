//! Special functions and quadrature shared by the rate models.
//!
//! Only four operations live here: Shannon binary entropy, the modified
//! Bessel function `I0`, the real Lambert W function on its two real
//! branches, and Gauss–Legendre averaging over a symmetric misalignment
//! interval. All of them are pure and thread-safe.

use crate::{Error, Result};
use std::f64::consts::PI;
use std::sync::OnceLock;

/// `-1/e`, the branch point of the real Lambert W function.
pub const NEG_INV_E: f64 = -0.367_879_441_171_442_33;

/// Default Gauss–Legendre order used by the loading integrals.
pub const DEFAULT_QUADRATURE_ORDER: usize = 64;

/// Shannon binary entropy in bits, with the convention `0·log2(0) = 0`.
pub fn binary_entropy(p: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Domain(format!("binary_entropy: p={p} outside [0,1]")));
    }
    let term = |x: f64| if x <= 0.0 { 0.0 } else { -x * x.log2() };
    Ok(term(p) + term(1.0 - p))
}

/// Modified Bessel function of the first kind, order zero.
///
/// Power series up to `|x| = 20`, asymptotic expansion beyond; relative
/// error stays below 1e-12 across the range used here. Overflows to
/// infinity for `x` beyond roughly 713.
pub fn bessel_i0(x: f64) -> f64 {
    let x = x.abs();
    if x <= 20.0 {
        // sum_k ((x/2)^2)^k / (k!)^2
        let q = 0.25 * x * x;
        let mut term = 1.0;
        let mut sum = 1.0;
        let mut k = 1.0;
        loop {
            term *= q / (k * k);
            sum += term;
            if term < sum * 1e-17 {
                return sum;
            }
            k += 1.0;
        }
    }
    // I0(x) ~ e^x / sqrt(2 pi x) * sum_k ((2k-1)!!)^2 / (k! 8^k x^k).
    // Terms shrink until k ~ x, far past the 1e-16 cutoff for x > 20.
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut k = 1.0;
    loop {
        let next = term * (2.0 * k - 1.0) * (2.0 * k - 1.0) / (8.0 * k * x);
        if next >= term {
            // Asymptotic series starts diverging: stop at the smallest term.
            break;
        }
        term = next;
        sum += term;
        if term < 1e-17 * sum {
            break;
        }
        k += 1.0;
    }
    x.exp() / (2.0 * PI * x).sqrt() * sum
}

/// Principal branch `W0` of the Lambert W function on `[-1/e, inf)`.
pub fn lambert_w0(x: f64) -> Result<f64> {
    if x.is_nan() || x < NEG_INV_E - 1e-12 {
        return Err(Error::Domain(format!("lambert_w0: x={x} below -1/e")));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    let p2 = 2.0 * (std::f64::consts::E * x + 1.0).max(0.0);
    if p2 <= 0.0 {
        return Ok(-1.0);
    }
    let guess = if x < -0.25 {
        // Branch-point series in p = sqrt(2(ex+1)).
        let p = p2.sqrt();
        -1.0 + p - p * p / 3.0 + 11.0 / 72.0 * p * p * p
    } else if x < 2.5 {
        // ln(1+x) tracks W0 well on (-0.25, 2.5) and stays defined for
        // negative arguments.
        x.ln_1p()
    } else {
        let l = x.ln();
        l - l.ln() + l.ln() / l
    };
    halley_w(x, guess.max(-1.0))
}

/// Secondary real branch `W-1` on `[-1/e, 0)`.
pub fn lambert_wm1(x: f64) -> Result<f64> {
    if x.is_nan() || !(NEG_INV_E - 1e-12..0.0).contains(&x) {
        return Err(Error::Domain(format!(
            "lambert_wm1: x={x} outside [-1/e, 0)"
        )));
    }
    let p2 = 2.0 * (std::f64::consts::E * x + 1.0).max(0.0);
    if p2 <= 0.0 {
        return Ok(-1.0);
    }
    let guess = if x < -0.25 {
        let p = p2.sqrt();
        -1.0 - p - p * p / 3.0 - 11.0 / 72.0 * p * p * p
    } else {
        // x -> 0-: W-1(x) ~ ln(-x) - ln(-ln(-x)).
        let l = (-x).ln();
        l - (-l).ln()
    };
    halley_w(x, guess.min(-1.0))
}

// Halley iteration on f(w) = w e^w - x. Quadratic-or-better convergence
// from the branch-appropriate guesses above.
fn halley_w(x: f64, mut w: f64) -> Result<f64> {
    let target = 1e-13 * x.abs().max(1.0);
    for _ in 0..60 {
        let ew = w.exp();
        let f = w * ew - x;
        if f.abs() <= target {
            return Ok(w);
        }
        let wp1 = w + 1.0;
        let denom = ew * wp1 - (w + 2.0) * f / (2.0 * wp1);
        if denom == 0.0 || !denom.is_finite() {
            break;
        }
        let step = f / denom;
        w -= step;
        if step.abs() <= 1e-16 * (1.0 + w.abs()) {
            break;
        }
    }
    let ew = w.exp();
    let f = w * ew - x;
    if f.abs() <= 1e-12 * x.abs().max(1.0) {
        return Ok(w);
    }
    Err(Error::Numerical(format!(
        "lambert_w failed to converge at x={x} (residual {f:e})"
    )))
}

/// Gauss–Legendre rule on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct QuadratureRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl QuadratureRule {
    /// Builds the rule with Newton iteration on the Legendre polynomial.
    pub fn gauss_legendre(order: usize) -> Self {
        assert!(order >= 1);
        let n = order;
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        for k in 0..n.div_ceil(2) {
            let mut x = (PI * (k as f64 + 0.75) / (n as f64 + 0.5)).cos();
            for _ in 0..100 {
                let (p, dp) = legendre_with_derivative(n, x);
                let dx = p / dp;
                x -= dx;
                if dx.abs() < 1e-15 {
                    break;
                }
            }
            let (_, dp) = legendre_with_derivative(n, x);
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[k] = -x;
            nodes[n - 1 - k] = x;
            weights[k] = w;
            weights[n - 1 - k] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        QuadratureRule { nodes, weights }
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `∫_{-1}^{1} f(x) dx`.
    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// Average of `f(θ)` for θ uniform on `[-half_width, half_width]`:
/// `(1/2Θ) ∫_{-Θ}^{Θ} f(θ) dθ`. A zero half-width degenerates to `f(0)`.
pub fn integrate_theta<F: Fn(f64) -> f64>(f: F, half_width: f64, rule: &QuadratureRule) -> f64 {
    if half_width == 0.0 {
        return f(0.0);
    }
    // Map [-1,1] -> [-Θ,Θ]; the 1/(2Θ) normalisation cancels the Jacobian Θ.
    0.5 * rule.integrate(|x| f(half_width * x))
}

/// Shared default-order rule (the loading integrands are entire in θ, so a
/// fixed order-64 rule is converged to machine precision).
pub fn default_rule() -> &'static QuadratureRule {
    static RULE: OnceLock<QuadratureRule> = OnceLock::new();
    RULE.get_or_init(|| QuadratureRule::gauss_legendre(DEFAULT_QUADRATURE_ORDER))
}

/// Doubled-order rule used by the loading module's self-check.
pub fn doubled_rule() -> &'static QuadratureRule {
    static RULE: OnceLock<QuadratureRule> = OnceLock::new();
    RULE.get_or_init(|| QuadratureRule::gauss_legendre(2 * DEFAULT_QUADRATURE_ORDER))
}
