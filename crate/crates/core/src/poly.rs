//! Dense complex polynomials in ascending coefficient order.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// `sum_i coeffs[i] z^i`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Polynomial {
    coeffs: Vec<Complex64>,
}

impl Polynomial {
    pub fn new(mut coeffs: Vec<Complex64>) -> Self {
        while coeffs.len() > 1 && coeffs.last() == Some(&Complex64::new(0.0, 0.0)) {
            coeffs.pop();
        }
        if coeffs.is_empty() {
            coeffs.push(Complex64::new(0.0, 0.0));
        }
        Polynomial { coeffs }
    }

    pub fn one() -> Self {
        Polynomial::new(vec![Complex64::new(1.0, 0.0)])
    }

    /// `prod_j (z - r_j)^(m_j)` by repeated convolution.
    pub fn from_roots(roots: &[(Complex64, u32)]) -> Self {
        let mut out = vec![Complex64::new(1.0, 0.0)];
        for &(r, m) in roots {
            for _ in 0..m {
                let mut next = vec![Complex64::new(0.0, 0.0); out.len() + 1];
                for (i, &c) in out.iter().enumerate() {
                    next[i + 1] += c;
                    next[i] -= c * r;
                }
                out = next;
            }
        }
        Polynomial::new(out)
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn eval(&self, z: Complex64) -> Complex64 {
        self.coeffs
            .iter()
            .rev()
            .fold(Complex64::new(0.0, 0.0), |acc, &c| acc * z + c)
    }

    /// Value and first derivative by a single Horner pass.
    pub fn eval_with_derivative(&self, z: Complex64) -> (Complex64, Complex64) {
        let mut p = Complex64::new(0.0, 0.0);
        let mut dp = Complex64::new(0.0, 0.0);
        for &c in self.coeffs.iter().rev() {
            dp = dp * z + p;
            p = p * z + c;
        }
        (p, dp)
    }

    pub fn derivative(&self) -> Polynomial {
        if self.coeffs.len() == 1 {
            return Polynomial::new(vec![Complex64::new(0.0, 0.0)]);
        }
        Polynomial::new(
            self.coeffs
                .iter()
                .enumerate()
                .skip(1)
                .map(|(i, &c)| c * i as f64)
                .collect(),
        )
    }

    /// Termwise primitive with zero constant term.
    pub fn primitive(&self) -> Polynomial {
        let mut out = Vec::with_capacity(self.coeffs.len() + 1);
        out.push(Complex64::new(0.0, 0.0));
        out.extend(
            self.coeffs
                .iter()
                .enumerate()
                .map(|(i, &c)| c / (i + 1) as f64),
        );
        Polynomial::new(out)
    }

    /// `self - c`.
    pub fn shifted(&self, c: Complex64) -> Polynomial {
        let mut coeffs = self.coeffs.clone();
        coeffs[0] -= c;
        Polynomial::new(coeffs)
    }

    /// All complex roots (with multiplicity) by Aberth–Ehrlich iteration.
    ///
    /// Multiple roots converge only linearly; they come back accurate to
    /// roughly `eps^(1/m)` relative, which is plenty for quadrature hints.
    pub fn roots(&self) -> Vec<Complex64> {
        let n = self.degree();
        if n == 0 {
            return Vec::new();
        }
        let lead = self.coeffs[n];
        let monic = Polynomial::new(self.coeffs.iter().map(|&c| c / lead).collect());
        // Fujiwara bound on root moduli.
        let bound = (0..n)
            .map(|i| {
                let a = monic.coeffs[i].norm();
                let a = if i == 0 { a / 2.0 } else { a };
                a.powf(1.0 / (n - i) as f64)
            })
            .fold(0.0f64, f64::max)
            * 2.0;
        let start = if bound > 0.0 { 0.5 * bound } else { 1.0 };
        let mut z: Vec<Complex64> = (0..n)
            .map(|k| {
                Complex64::from_polar(
                    start,
                    2.0 * std::f64::consts::PI * k as f64 / n as f64 + 0.4,
                )
            })
            .collect();
        if bound == 0.0 {
            return vec![Complex64::new(0.0, 0.0); n];
        }
        for _ in 0..2000 {
            let mut moved = 0.0f64;
            for k in 0..n {
                let (p, dp) = monic.eval_with_derivative(z[k]);
                if p == Complex64::new(0.0, 0.0) {
                    continue;
                }
                let ratio = if dp == Complex64::new(0.0, 0.0) {
                    Complex64::new(bound * 1e-8, 0.0)
                } else {
                    p / dp
                };
                let s: Complex64 = (0..n)
                    .filter(|&j| j != k)
                    .map(|j| {
                        let d = z[k] - z[j];
                        if d == Complex64::new(0.0, 0.0) {
                            Complex64::new(0.0, 0.0)
                        } else {
                            d.inv()
                        }
                    })
                    .sum();
                let step = ratio / (Complex64::new(1.0, 0.0) - ratio * s);
                if step.is_finite() {
                    z[k] -= step;
                    moved = moved.max(step.norm() / z[k].norm().max(bound * 1e-12));
                }
            }
            if moved < 1e-15 {
                break;
            }
        }
        z
    }
}
