//! Seeded synthetic datasets.
//!
//! All families draw from ChaCha20 seeded with `seed_from_u64`, row by row,
//! so identical specs produce identical datasets.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::data::{Dataset, Response};
use crate::error::{Error, Result};

/// Recorded in run metadata next to the seed.
pub const RNG_ALGORITHM: &str = "chacha20 (rand_chacha 0.9, seed_from_u64); normals: rand_distr 0.5 StandardNormal";

#[derive(Debug, Clone, PartialEq)]
pub enum Family {
    /// Points along the segment `x1 = x2` for `t` uniform on `[lo, hi]`, each
    /// coordinate jittered by independent `N(0, jitter^2)`; `y = x1 + x2^2`.
    Example1 { lo: f64, hi: f64, jitter: f64 },
    /// Same predictors as `Example1`; `y = x1 + x2^2 + N(0, noise^2)`.
    Example2 { lo: f64, hi: f64, jitter: f64, noise: f64 },
    /// Standard bivariate normal with correlation `rho`; `y = x1 * x2`.
    GaussianPair { rho: f64 },
    /// Independent uniforms on `[-1, 1]^d`; `y` is their product.
    ProductCube { d: usize },
}

impl Family {
    pub fn example1() -> Self {
        Family::Example1 { lo: 0.0, hi: 1.0, jitter: 0.05 }
    }

    pub fn example2() -> Self {
        Family::Example2 { lo: 0.0, hi: 1.0, jitter: 0.05, noise: 0.1 }
    }

    pub fn tag(&self) -> &'static str {
        match self {
            Family::Example1 { .. } => "example1",
            Family::Example2 { .. } => "example2",
            Family::GaussianPair { .. } => "gaussian-pair",
            Family::ProductCube { .. } => "product-cube",
        }
    }

    /// Noise-free response as an expression over `x1..xd`.
    pub fn truth(&self) -> String {
        match self {
            Family::Example1 { .. } | Family::Example2 { .. } => "x1 + x2^2".into(),
            Family::GaussianPair { .. } => "x1*x2".into(),
            Family::ProductCube { d } => (1..=*d).map(|j| format!("x{j}")).collect::<Vec<_>>().join("*"),
        }
    }

    pub fn d(&self) -> usize {
        match self {
            Family::ProductCube { d } => *d,
            _ => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorSpec {
    pub family: Family,
    pub n: usize,
    pub seed: u64,
}

pub fn generate_synthetic(spec: &GeneratorSpec) -> Result<Dataset> {
    validate(spec)?;
    let mut rng = ChaCha20Rng::seed_from_u64(spec.seed);
    let d = spec.family.d();
    let mut x = Array2::<f64>::zeros((spec.n, d));
    let mut y = Vec::with_capacity(spec.n);
    for i in 0..spec.n {
        match spec.family {
            Family::Example1 { lo, hi, jitter } | Family::Example2 { lo, hi, jitter, .. } => {
                let t = rng.random_range(lo..hi);
                let e1: f64 = StandardNormal.sample(&mut rng);
                let e2: f64 = StandardNormal.sample(&mut rng);
                let (x1, x2) = (t + jitter * e1, t + jitter * e2);
                x[[i, 0]] = x1;
                x[[i, 1]] = x2;
                let mut v = x1 + x2 * x2;
                if let Family::Example2 { noise, .. } = spec.family {
                    let e: f64 = StandardNormal.sample(&mut rng);
                    v += noise * e;
                }
                y.push(v);
            }
            Family::GaussianPair { rho } => {
                let z1: f64 = StandardNormal.sample(&mut rng);
                let z2: f64 = StandardNormal.sample(&mut rng);
                let x1 = z1;
                let x2 = rho * z1 + (1.0 - rho * rho).sqrt() * z2;
                x[[i, 0]] = x1;
                x[[i, 1]] = x2;
                y.push(x1 * x2);
            }
            Family::ProductCube { d } => {
                let mut p = 1.0;
                for j in 0..d {
                    let v = rng.random_range(-1.0..1.0);
                    x[[i, j]] = v;
                    p *= v;
                }
                y.push(p);
            }
        }
    }
    let columns = (1..=d).map(|j| format!("x{j}")).collect();
    Dataset::new(columns, x, Some(Response { name: "y".into(), values: y }))
}

fn validate(spec: &GeneratorSpec) -> Result<()> {
    if spec.n < 2 {
        return Err(Error::Config("generated datasets need n >= 2".into()));
    }
    match spec.family {
        Family::Example1 { lo, hi, jitter } => check_segment(lo, hi, jitter),
        Family::Example2 { lo, hi, jitter, noise } => {
            check_segment(lo, hi, jitter)?;
            if !(noise >= 0.0 && noise.is_finite()) {
                return Err(Error::Config(format!("noise must be a nonnegative number, got {noise}")));
            }
            Ok(())
        }
        Family::GaussianPair { rho } => {
            if rho > -1.0 && rho < 1.0 {
                Ok(())
            } else {
                Err(Error::Config(format!("correlation must lie in (-1, 1), got {rho}")))
            }
        }
        Family::ProductCube { d } => {
            if d >= 1 {
                Ok(())
            } else {
                Err(Error::Config("product-cube needs d >= 1".into()))
            }
        }
    }
}

fn check_segment(lo: f64, hi: f64, jitter: f64) -> Result<()> {
    if !(lo < hi && lo.is_finite() && hi.is_finite()) {
        return Err(Error::Config(format!("segment [{lo}, {hi}] is empty")));
    }
    if !(jitter >= 0.0 && jitter.is_finite()) {
        return Err(Error::Config(format!("jitter must be a nonnegative number, got {jitter}")));
    }
    Ok(())
}
