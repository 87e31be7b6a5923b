//! Fixed-effect absorption by iterated weighted within-transformation
//! (alternating projections).
//!
//! A sweep demeans a column within every level of each fixed-effect
//! dimension in turn. Sweeps repeat until the largest within-level weighted
//! mean subtracted during a sweep falls below `tol` times the column's
//! maximum absolute value. With a single dimension one pass is exact and no
//! further sweep is made.

use alloc::vec;
use alloc::vec::Vec;

use crate::data::{Categorical, Dataset};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AbsorbOptions {
    pub tol: f64,
    pub max_sweeps: usize,
}

impl Default for AbsorbOptions {
    fn default() -> Self {
        AbsorbOptions {
            tol: 1e-10,
            max_sweeps: 10_000,
        }
    }
}

#[derive(Debug, Clone)]
struct Dimension {
    codes: Vec<u32>,
    inv_level_weight: Vec<f64>,
}

/// Precomputed state for demeaning any number of columns against the same
/// fixed effects and weights.
#[derive(Debug, Clone)]
pub struct Absorber {
    dims: Vec<Dimension>,
    weights: Option<Vec<f64>>,
    n: usize,
    opts: AbsorbOptions,
}

impl Absorber {
    pub fn new(fe: &[Categorical], weights: Option<&[f64]>, opts: AbsorbOptions) -> Result<Self> {
        let n = fe
            .first()
            .map(|c| c.len())
            .or(weights.map(|w| w.len()))
            .unwrap_or(0);
        let mut dims = Vec::with_capacity(fe.len());
        for cat in fe {
            if cat.len() != n {
                return Err(Error::LengthMismatch {
                    name: "fixed effect".into(),
                    expected: n,
                    found: cat.len(),
                });
            }
            let mut lw = vec![0.0; cat.n_levels()];
            for (i, &c) in cat.codes.iter().enumerate() {
                lw[c as usize] += weights.map_or(1.0, |w| w[i]);
            }
            let inv_level_weight = lw
                .iter()
                .map(|&s| if s > 0.0 { 1.0 / s } else { 0.0 })
                .collect();
            dims.push(Dimension {
                codes: cat.codes.clone(),
                inv_level_weight,
            });
        }
        if let Some(w) = weights {
            if let Some(row) = w.iter().position(|x| !(x.is_finite() && *x > 0.0)) {
                return Err(Error::InvalidWeight { row });
            }
        }
        Ok(Absorber {
            dims,
            weights: weights.map(|w| w.to_vec()),
            n,
            opts,
        })
    }

    pub fn is_empty(&self) -> bool {
        self.dims.is_empty()
    }

    pub fn n_dims(&self) -> usize {
        self.dims.len()
    }

    /// Per dimension: true when every level lies inside a single cluster.
    pub fn nested_in(&self, clusters: &[u32]) -> Vec<bool> {
        self.dims
            .iter()
            .map(|d| {
                let mut owner: Vec<Option<u32>> = vec![None; d.inv_level_weight.len()];
                d.codes.iter().zip(clusters).all(|(&lvl, &cl)| {
                    let slot = &mut owner[lvl as usize];
                    match slot {
                        None => {
                            *slot = Some(cl);
                            true
                        }
                        Some(prev) => *prev == cl,
                    }
                })
            })
            .collect()
    }

    /// Degrees of freedom used by each dimension: the first carries the
    /// overall constant, later ones lose one level to it. Assumes the
    /// levels form a single connected set.
    pub fn dof_per_dim(&self) -> Vec<usize> {
        self.dims
            .iter()
            .enumerate()
            .map(|(i, d)| {
                let l = d.inv_level_weight.len();
                if i == 0 {
                    l
                } else {
                    l.saturating_sub(1)
                }
            })
            .collect()
    }

    fn sweep_dim(&self, d: &Dimension, x: &mut [f64], sums: &mut Vec<f64>) -> f64 {
        sums.clear();
        sums.resize(d.inv_level_weight.len(), 0.0);
        match &self.weights {
            Some(w) => {
                for i in 0..self.n {
                    sums[d.codes[i] as usize] += w[i] * x[i];
                }
            }
            None => {
                for i in 0..self.n {
                    sums[d.codes[i] as usize] += x[i];
                }
            }
        }
        let mut max_mean = 0.0f64;
        for (s, inv) in sums.iter_mut().zip(&d.inv_level_weight) {
            *s *= inv;
            max_mean = max_mean.max(libm::fabs(*s));
        }
        for i in 0..self.n {
            x[i] -= sums[d.codes[i] as usize];
        }
        max_mean
    }

    /// Demean `x` in place; returns the number of sweeps performed.
    pub fn demean(&self, x: &mut [f64]) -> Result<usize> {
        if self.dims.is_empty() {
            return Ok(0);
        }
        if x.len() != self.n {
            return Err(Error::LengthMismatch {
                name: "absorbed column".into(),
                expected: self.n,
                found: x.len(),
            });
        }
        let scale = x.iter().fold(0.0f64, |m, v| m.max(libm::fabs(*v)));
        if scale == 0.0 {
            return Ok(0);
        }
        let mut sums = Vec::new();
        if self.dims.len() == 1 {
            self.sweep_dim(&self.dims[0], x, &mut sums);
            return Ok(1);
        }
        let threshold = self.opts.tol * scale;
        let mut last = f64::INFINITY;
        for sweep in 1..=self.opts.max_sweeps {
            let mut max_mean = 0.0f64;
            for d in &self.dims {
                max_mean = max_mean.max(self.sweep_dim(d, x, &mut sums));
            }
            if max_mean < threshold {
                return Ok(sweep);
            }
            last = max_mean;
        }
        Err(Error::NonConvergence {
            sweeps: self.opts.max_sweeps,
            max_mean: last,
        })
    }

    pub fn demeaned(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut v = x.to_vec();
        self.demean(&mut v)?;
        Ok(v)
    }
}

/// Demean the numeric `columns` of `data` within the categories of `fe`.
/// The returned table holds only the demeaned columns, under their
/// original names.
pub fn absorb_fixed_effects(
    data: &Dataset,
    fe: &[&str],
    weights: Option<&str>,
    columns: &[&str],
    opts: AbsorbOptions,
) -> Result<Dataset> {
    let cats = fe.iter().map(|f| data.codes(f)).collect::<Result<Vec<_>>>()?;
    let w = weights.map(|w| data.numeric(w)).transpose()?;
    let absorber = Absorber::new(&cats, w, opts)?;
    let mut out = Dataset::new(data.n_rows());
    for c in columns {
        let v = absorber.demeaned(data.finite(c)?)?;
        out.set_numeric(*c, v)?;
    }
    Ok(out)
}
