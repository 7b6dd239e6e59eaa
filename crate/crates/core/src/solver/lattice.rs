//! Potential kernel of the simple random walk on `Z^2`, i.e. the Green
//! function of the 5-point Laplacian: `a(0) = 0` and
//! `Σ_{nbr} a - 4 a(x) = 4 δ_0(x)`.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use crate::quadrature::kronrod_rule;

/// `a(x) = (2/π) ln|x| + KAPPA + O(|x|^-2)`.
pub const KAPPA: f64 = (2.0 * 0.577_215_664_901_532_9 + 2.079_441_541_679_835_8) / PI;

/// Table `a(i, j)` for `0 <= i, j < size`, row-major.
#[derive(Debug)]
pub struct PotentialKernel {
    size: usize,
    values: Vec<f64>,
}

impl PotentialKernel {
    /// Evaluates `a(m, n) = (2/π) ∫_0^π (1 - cos(mθ) e^{-|n| s}) / sinh s dθ`,
    /// `cosh s = 2 - cos θ`, with a composite Kronrod rule.
    fn compute(size: usize) -> Self {
        let panels = 2 * size + 16;
        let rule = kronrod_rule(0.0, PI, panels);
        let s: Vec<f64> = rule
            .iter()
            .map(|&(t, _)| 2.0 * (0.5 * t).sin().asinh())
            .collect();
        let g: Vec<f64> = rule
            .iter()
            .zip(&s)
            .map(|(&(_, w), s)| w / s.sinh())
            .collect();
        let total: f64 = g.iter().sum();
        let q = rule.len();
        let mut cos_m = vec![0.0; size * q];
        let mut decay_n = vec![0.0; size * q];
        for m in 0..size {
            for (k, &(t, _)) in rule.iter().enumerate() {
                cos_m[m * q + k] = (m as f64 * t).cos();
                decay_n[m * q + k] = (-(m as f64) * s[k]).exp() * g[k];
            }
        }
        let mut values = vec![0.0; size * size];
        for m in 0..size {
            for n in 0..=m {
                let c = &cos_m[m * q..(m + 1) * q];
                let d = &decay_n[n * q..(n + 1) * q];
                let dot: f64 = c.iter().zip(d).map(|(x, y)| x * y).sum();
                let v = if m == 0 && n == 0 {
                    0.0
                } else {
                    2.0 / PI * (total - dot)
                };
                values[m * size + n] = v;
                values[n * size + m] = v;
            }
        }
        PotentialKernel { size, values }
    }

    /// Shared table covering offsets up to `size - 1` in each coordinate.
    pub fn shared(size: usize) -> Arc<PotentialKernel> {
        static CACHE: OnceLock<Mutex<HashMap<usize, Arc<PotentialKernel>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        let mut map = cache.lock().unwrap_or_else(|e| e.into_inner());
        map.entry(size)
            .or_insert_with(|| Arc::new(PotentialKernel::compute(size)))
            .clone()
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn get(&self, i: i64, j: i64) -> f64 {
        let (i, j) = (i.unsigned_abs() as usize, j.unsigned_abs() as usize);
        self.values[i * self.size + j]
    }
}
