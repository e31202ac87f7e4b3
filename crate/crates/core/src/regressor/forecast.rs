//! Dirichlet forecasts: moments, sampled credible intervals and simplex densities.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use super::mlp::{forward, MlpParams};
use crate::error::{Error, Result};
use crate::stats::quantile_sorted;

pub const CREDIBLE_LEVEL: f64 = 0.90;

/// Draws from `Dir(alpha)` by normalising independent Gamma draws.
///
/// Draws are taken in log space (`Gamma(a) = Gamma(a + 1) * U^(1/a)` for
/// `a < 1`) so very small concentrations cannot underflow every component.
#[derive(Debug, Clone)]
pub struct DirichletSampler {
    alpha: [f64; 3],
    gammas: [Gamma<f64>; 3],
}

impl DirichletSampler {
    pub fn new(alpha: [f64; 3]) -> Result<Self> {
        if !alpha.iter().all(|&a| a > 0.0 && a.is_finite()) {
            return Err(Error::NonPositiveAlpha);
        }
        let gamma = |a: f64| Gamma::new(if a < 1.0 { a + 1.0 } else { a }, 1.0).map_err(|_| Error::NonPositiveAlpha);
        Ok(Self { alpha, gammas: [gamma(alpha[0])?, gamma(alpha[1])?, gamma(alpha[2])?] })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> [f64; 3] {
        let logs = [0, 1, 2].map(|k| {
            let g: f64 = self.gammas[k].sample(rng);
            let mut lg = g.ln();
            if self.alpha[k] < 1.0 {
                let u: f64 = rng.random::<f64>();
                lg += u.ln() / self.alpha[k];
            }
            lg
        });
        let m = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let w = logs.map(|l| (l - m).exp());
        let s: f64 = w.iter().sum();
        w.map(|v| v / s)
    }
}

pub fn dirichlet_mean(alpha: [f64; 3]) -> [f64; 3] {
    let a0: f64 = alpha.iter().sum();
    alpha.map(|a| a / a0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityForecast {
    pub varsigma: f64,
    pub alpha: [f64; 3],
    /// `alpha / alpha_0`, ordered `(TR, FPR, FNR)`.
    pub mean: [f64; 3],
    pub median: [f64; 3],
    /// 5% and 95% sample quantiles per component.
    pub lower: [f64; 3],
    pub upper: [f64; 3],
}

/// Forecast for an explicit concentration vector.
pub fn forecast_from_alpha(alpha: [f64; 3], varsigma: f64, n_samples: usize, seed: u64) -> Result<QualityForecast> {
    let sampler = DirichletSampler::new(alpha)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = n_samples.max(1);
    let mut columns = [Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n)];
    for _ in 0..n {
        let q = sampler.sample(&mut rng);
        for k in 0..3 {
            columns[k].push(q[k]);
        }
    }
    let tail = (1.0 - CREDIBLE_LEVEL) / 2.0;
    let mut median = [0.0; 3];
    let mut lower = [0.0; 3];
    let mut upper = [0.0; 3];
    for k in 0..3 {
        columns[k].sort_by(f64::total_cmp);
        median[k] = quantile_sorted(&columns[k], 0.5);
        lower[k] = quantile_sorted(&columns[k], tail);
        upper[k] = quantile_sorted(&columns[k], 1.0 - tail);
    }
    Ok(QualityForecast { varsigma, alpha, mean: dirichlet_mean(alpha), median, lower, upper })
}

pub fn predict_quality(params: &MlpParams, varsigma: f64, n_samples: usize, seed: u64) -> Result<QualityForecast> {
    forecast_from_alpha(forward(params, varsigma)?, varsigma, n_samples, seed)
}

pub fn dirichlet_pdf(alpha: [f64; 3], q: [f64; 3]) -> f64 {
    let a0: f64 = alpha.iter().sum();
    let log_norm = ln_gamma(a0) - alpha.iter().map(|&a| ln_gamma(a)).sum::<f64>();
    let log_kernel: f64 = alpha.iter().zip(q).map(|(a, x)| (a - 1.0) * x.ln()).sum();
    (log_norm + log_kernel).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimplexPoint {
    /// `(TR, FPR, FNR)` at a grid cell centroid.
    pub q: [f64; 3],
    pub density: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimplexDensity {
    pub resolution: usize,
    /// Area of every cell in `(TR, FPR)` coordinates.
    pub cell_area: f64,
    pub points: Vec<SimplexPoint>,
}

impl SimplexDensity {
    /// Midpoint-rule integral of the density over the simplex.
    pub fn integral(&self) -> f64 {
        self.points.iter().map(|p| p.density).sum::<f64>() * self.cell_area
    }
}

/// Dirichlet density at the centroids of a uniform triangulation of the
/// 2-simplex into `resolution^2` cells.
pub fn density_on_simplex(alpha: [f64; 3], resolution: usize) -> Result<SimplexDensity> {
    if !alpha.iter().all(|&a| a > 0.0 && a.is_finite()) {
        return Err(Error::NonPositiveAlpha);
    }
    let r = resolution.max(1);
    let rf = r as f64;
    let mut points = Vec::with_capacity(r * r);
    let mut push = |x: f64, y: f64| {
        let q = [x / rf, y / rf, 1.0 - (x + y) / rf];
        points.push(SimplexPoint { q, density: dirichlet_pdf(alpha, q) });
    };
    for i in 0..r {
        for j in 0..r - i {
            push(i as f64 + 1.0 / 3.0, j as f64 + 1.0 / 3.0);
            if i + j + 2 <= r {
                push(i as f64 + 2.0 / 3.0, j as f64 + 2.0 / 3.0);
            }
        }
    }
    Ok(SimplexDensity { resolution: r, cell_area: 0.5 / (rf * rf), points })
}
