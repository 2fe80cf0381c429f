//! Sample tables shared by the samplers.

use crate::error::Result;
use crate::geometry::{packed_len, ShapeParams};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Layout {
    pub components: usize,
    pub modes: usize,
    pub has_kappa: bool,
}

impl Layout {
    pub fn of(nu: &ShapeParams) -> Self {
        Self { components: nu.components.len(), modes: nu.modes(), has_kappa: nu.kappa_i.is_some() }
    }

    pub fn dim(&self) -> usize {
        packed_len(self.components, self.modes, self.has_kappa)
    }

    pub fn unpack(&self, v: &[f64]) -> Result<ShapeParams> {
        ShapeParams::unpack(v, self.components, self.modes, self.has_kappa)
    }

    /// Column names matching the packed order.
    pub fn parameter_names(&self) -> Vec<String> {
        let mut names = Vec::with_capacity(self.dim());
        for l in 0..self.components {
            names.push(format!("c{l}_x"));
            names.push(format!("c{l}_y"));
            for m in 0..=self.modes {
                names.push(format!("c{l}_a{m}"));
            }
            for m in 1..=self.modes {
                names.push(format!("c{l}_b{m}"));
            }
        }
        if self.has_kappa {
            names.push("kappa_i".into());
        }
        names
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub step: usize,
    pub walker: usize,
    pub nu: Vec<f64>,
    pub log_posterior: f64,
    pub admissible: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSet {
    pub layout: Layout,
    pub samples: Vec<Sample>,
}

impl SampleSet {
    pub fn new(layout: Layout) -> Self {
        Self { layout, samples: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn admissible(&self) -> impl Iterator<Item = &Sample> {
        self.samples.iter().filter(|s| s.admissible)
    }

    pub fn admissible_count(&self) -> usize {
        self.admissible().count()
    }

    pub fn discard_fraction(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        1.0 - self.admissible_count() as f64 / self.samples.len() as f64
    }

    /// Admissible samples decoded into shapes.
    pub fn shapes(&self) -> Result<Vec<ShapeParams>> {
        self.admissible().map(|s| self.layout.unpack(&s.nu)).collect()
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.layout.dim()];
        let mut n = 0usize;
        for s in self.admissible() {
            for (a, b) in m.iter_mut().zip(&s.nu) {
                *a += b;
            }
            n += 1;
        }
        if n > 0 {
            m.iter_mut().for_each(|v| *v /= n as f64);
        }
        m
    }

    /// Sample covariance (divisor `n - 1`) of the admissible samples.
    pub fn covariance(&self) -> nalgebra::DMatrix<f64> {
        let d = self.layout.dim();
        let mean = self.mean();
        let mut c = nalgebra::DMatrix::zeros(d, d);
        let mut n = 0usize;
        for s in self.admissible() {
            for i in 0..d {
                let di = s.nu[i] - mean[i];
                for j in i..d {
                    c[(i, j)] += di * (s.nu[j] - mean[j]);
                }
            }
            n += 1;
        }
        for i in 0..d {
            for j in i..d {
                c[(i, j)] /= (n.max(2) - 1) as f64;
                c[(j, i)] = c[(i, j)];
            }
        }
        c
    }
}
