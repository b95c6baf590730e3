//! Soft-margin SVM trained with sequential minimal optimization (Platt's
//! working-set heuristics with an error cache). Labels map to -1 = NORMAL,
//! +1 = ABNORMAL; only vectors with a nonzero dual coefficient are
//! retained in the model.

use serde::{Deserialize, Serialize};

use super::{Dataset, SVMParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelKind {
    Linear,
    Polynomial,
    Rbf,
    Sigmoid,
}

impl KernelKind {
    /// LibSVM-convention kernel index (0..3).
    pub fn from_index(i: u32) -> Option<KernelKind> {
        match i {
            0 => Some(KernelKind::Linear),
            1 => Some(KernelKind::Polynomial),
            2 => Some(KernelKind::Rbf),
            3 => Some(KernelKind::Sigmoid),
            _ => None,
        }
    }

    pub fn index(&self) -> u32 {
        match self {
            KernelKind::Linear => 0,
            KernelKind::Polynomial => 1,
            KernelKind::Rbf => 2,
            KernelKind::Sigmoid => 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    pub kind: KernelKind,
    pub degree: u32,
    /// 1 / dimension unless overridden.
    pub gamma: f64,
}

impl KernelParams {
    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        let dot = || a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        match self.kind {
            KernelKind::Linear => dot(),
            // K(x, y) = (x . y + 1)^d
            KernelKind::Polynomial => (dot() + 1.0).powi(self.degree as i32),
            KernelKind::Rbf => {
                let sq: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
                (-self.gamma * sq).exp()
            }
            KernelKind::Sigmoid => (self.gamma * dot()).tanh(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub support_vectors: Vec<Vec<f64>>,
    /// alpha_i * y_i for each support vector.
    pub dual_coefficients: Vec<f64>,
    pub bias: f64,
    pub kernel: KernelParams,
}

impl SvmModel {
    pub fn decision_value(&self, x: &[f64]) -> f64 {
        self.support_vectors
            .iter()
            .zip(&self.dual_coefficients)
            .map(|(sv, &c)| c * self.kernel.eval(sv, x))
            .sum::<f64>()
            + self.bias
    }

    /// Logistic squash of the decision value; the label comes from its sign.
    pub fn score(&self, x: &[f64]) -> f64 {
        1.0 / (1.0 + (-self.decision_value(x)).exp())
    }
}

struct Smo<'a> {
    x: &'a [Vec<f64>],
    y: Vec<f64>,
    kernel: KernelParams,
    c: f64,
    tol: f64,
    alpha: Vec<f64>,
    bias: f64,
    errors: Vec<f64>,
    kernel_cache: Option<Vec<f64>>,
    n: usize,
}

const EPS: f64 = 1e-12;

impl<'a> Smo<'a> {
    fn new(x: &'a [Vec<f64>], y: Vec<f64>, kernel: KernelParams, c: f64, tol: f64) -> Self {
        let n = x.len();
        // Full kernel matrix up to ~64 MB; larger sets fall back to
        // on-the-fly evaluation.
        let kernel_cache = if n * n <= 8_000_000 {
            let mut m = vec![0.0; n * n];
            for i in 0..n {
                for j in i..n {
                    let v = kernel.eval(&x[i], &x[j]);
                    m[i * n + j] = v;
                    m[j * n + i] = v;
                }
            }
            Some(m)
        } else {
            None
        };
        let errors = y.iter().map(|&yi| -yi).collect();
        Smo { x, y, kernel, c, tol, alpha: vec![0.0; n], bias: 0.0, errors, kernel_cache, n }
    }

    fn k(&self, i: usize, j: usize) -> f64 {
        match &self.kernel_cache {
            Some(m) => m[i * self.n + j],
            None => self.kernel.eval(&self.x[i], &self.x[j]),
        }
    }

    fn take_step(&mut self, i1: usize, i2: usize) -> bool {
        if i1 == i2 {
            return false;
        }
        let (a1_old, a2_old) = (self.alpha[i1], self.alpha[i2]);
        let (y1, y2) = (self.y[i1], self.y[i2]);
        let (e1, e2) = (self.errors[i1], self.errors[i2]);
        let s = y1 * y2;
        let (lo, hi) = if s < 0.0 {
            ((a2_old - a1_old).max(0.0), (self.c + a2_old - a1_old).min(self.c))
        } else {
            ((a1_old + a2_old - self.c).max(0.0), (a1_old + a2_old).min(self.c))
        };
        if hi - lo < EPS {
            return false;
        }
        let k11 = self.k(i1, i1);
        let k12 = self.k(i1, i2);
        let k22 = self.k(i2, i2);
        let eta = k11 + k22 - 2.0 * k12;
        let mut a2 = if eta > EPS {
            (a2_old + y2 * (e1 - e2) / eta).clamp(lo, hi)
        } else {
            // Non-positive curvature: move to the better bound.
            let f1 = y1 * (e1 + self.bias) - a1_old * k11 - s * a2_old * k12;
            let f2 = y2 * (e2 + self.bias) - s * a1_old * k12 - a2_old * k22;
            let l1 = a1_old + s * (a2_old - lo);
            let h1 = a1_old + s * (a2_old - hi);
            let obj_lo = l1 * f1 + lo * f2 + 0.5 * l1 * l1 * k11 + 0.5 * lo * lo * k22
                + s * lo * l1 * k12;
            let obj_hi = h1 * f1 + hi * f2 + 0.5 * h1 * h1 * k11 + 0.5 * hi * hi * k22
                + s * hi * h1 * k12;
            if obj_lo < obj_hi - EPS {
                lo
            } else if obj_hi < obj_lo - EPS {
                hi
            } else {
                a2_old
            }
        };
        if a2 < EPS {
            a2 = 0.0;
        } else if a2 > self.c - EPS {
            a2 = self.c;
        }
        if (a2 - a2_old).abs() < EPS * (a2 + a2_old + EPS) {
            return false;
        }
        let a1 = a1_old + s * (a2_old - a2);
        let a1 = a1.clamp(0.0, self.c);

        let b1 = e1 + y1 * (a1 - a1_old) * k11 + y2 * (a2 - a2_old) * k12 + self.bias;
        let b2 = e2 + y1 * (a1 - a1_old) * k12 + y2 * (a2 - a2_old) * k22 + self.bias;
        let new_bias = if a1 > 0.0 && a1 < self.c {
            b1
        } else if a2 > 0.0 && a2 < self.c {
            b2
        } else {
            (b1 + b2) / 2.0
        };

        let db = new_bias - self.bias;
        self.bias = new_bias;
        let (d1, d2) = (y1 * (a1 - a1_old), y2 * (a2 - a2_old));
        for j in 0..self.n {
            self.errors[j] += d1 * self.k(i1, j) + d2 * self.k(i2, j) - db;
        }
        self.alpha[i1] = a1;
        self.alpha[i2] = a2;
        true
    }

    fn examine(&mut self, i2: usize) -> bool {
        let y2 = self.y[i2];
        let a2 = self.alpha[i2];
        let e2 = self.errors[i2];
        let r2 = e2 * y2;
        let violates =
            (r2 < -self.tol && a2 < self.c) || (r2 > self.tol && a2 > 0.0);
        if !violates {
            return false;
        }
        // Second-choice heuristic: maximize |E1 - E2| over non-bound points.
        let mut best: Option<(usize, f64)> = None;
        for i in 0..self.n {
            if self.alpha[i] > 0.0 && self.alpha[i] < self.c {
                let gap = (self.errors[i] - e2).abs();
                if best.map_or(true, |(_, g)| gap > g) {
                    best = Some((i, gap));
                }
            }
        }
        if let Some((i1, _)) = best {
            if self.take_step(i1, i2) {
                return true;
            }
        }
        // Fall back to scanning non-bound points, then all points,
        // starting from a position derived from i2 for determinism.
        for offset in 0..self.n {
            let i1 = (i2 + 1 + offset) % self.n;
            if self.alpha[i1] > 0.0 && self.alpha[i1] < self.c && self.take_step(i1, i2) {
                return true;
            }
        }
        for offset in 0..self.n {
            let i1 = (i2 + 1 + offset) % self.n;
            if self.take_step(i1, i2) {
                return true;
            }
        }
        false
    }

    /// Returns true when the optimizer reached a KKT-satisfying point
    /// within the pass budget.
    fn run(&mut self, max_passes: usize) -> bool {
        let mut examine_all = true;
        let mut passes = 0usize;
        loop {
            let mut changed = 0usize;
            if examine_all {
                for i in 0..self.n {
                    if self.examine(i) {
                        changed += 1;
                    }
                }
            } else {
                for i in 0..self.n {
                    if self.alpha[i] > 0.0 && self.alpha[i] < self.c && self.examine(i) {
                        changed += 1;
                    }
                }
            }
            passes += 1;
            if passes >= max_passes {
                return false;
            }
            if examine_all {
                if changed == 0 {
                    return true;
                }
                examine_all = false;
            } else if changed == 0 {
                examine_all = true;
            }
        }
    }
}

pub(crate) fn train(data: &Dataset, params: &SVMParams) -> (SvmModel, bool) {
    let y: Vec<f64> =
        data.labels.iter().map(|l| if l.is_abnormal() { 1.0 } else { -1.0 }).collect();
    let kernel = KernelParams {
        kind: params.kernel_k,
        degree: params.degree_d,
        gamma: 1.0 / data.dimension().max(1) as f64,
    };
    let mut smo = Smo::new(
        &data.vectors,
        y,
        kernel.clone(),
        params.complexity_c,
        params.smo_tolerance,
    );
    let converged = smo.run(params.max_passes);

    let mut support_vectors = Vec::new();
    let mut dual_coefficients = Vec::new();
    for i in 0..smo.n {
        if smo.alpha[i] > 0.0 {
            support_vectors.push(data.vectors[i].clone());
            dual_coefficients.push(smo.alpha[i] * smo.y[i]);
        }
    }
    // SMO tracks f(x) - y as the error with bias folded in; the stored bias
    // must flip sign to match decision_value = sum + b.
    let bias = -smo.bias;
    (SvmModel { support_vectors, dual_coefficients, bias, kernel }, converged)
}
