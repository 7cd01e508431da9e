use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::matops::{
    check_finite, check_shape, psd_factor, require_positive_semidefinite, symmetrize, Matrix,
    Vector,
};

/// Tolerance on the sum of mixture weights.
pub const WEIGHT_SUM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct MixtureComponent {
    pub weight: f64,
    pub mean: Vector,
    pub covariance: Matrix,
}

#[derive(Debug, Clone, PartialEq)]
enum Kind {
    Gaussian {
        factor: Matrix,
    },
    Mixture {
        components: Vec<MixtureComponent>,
        factors: Vec<Matrix>,
        cumulative: Vec<f64>,
    },
    Empirical {
        samples: Vec<Vector>,
    },
}

/// Distribution of an additive noise sequence (i.i.d. over time).
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseModel {
    kind: Kind,
    dim: usize,
    second_moment: Matrix,
}

impl NoiseModel {
    /// Zero-mean Gaussian with the given (PSD) covariance.
    pub fn gaussian(covariance: Matrix) -> Result<Self> {
        require_positive_semidefinite("noise covariance", &covariance)?;
        Ok(Self {
            dim: covariance.nrows(),
            kind: Kind::Gaussian {
                factor: psd_factor(&covariance),
            },
            second_moment: symmetrize(&covariance),
        })
    }

    /// Finite Gaussian mixture. Weights must be positive and sum to one.
    pub fn mixture(components: Vec<MixtureComponent>) -> Result<Self> {
        let first = components
            .first()
            .ok_or_else(|| Error::validation("mixture", "needs at least one component"))?;
        let dim = first.mean.len();
        if dim == 0 {
            return Err(Error::validation(
                "mixture",
                "component dimension must be positive",
            ));
        }
        let mut total = 0.0;
        let mut second_moment = Matrix::zeros(dim, dim);
        let mut factors = Vec::with_capacity(components.len());
        let mut cumulative = Vec::with_capacity(components.len());
        for (i, c) in components.iter().enumerate() {
            if !(c.weight > 0.0 && c.weight.is_finite()) {
                return Err(Error::validation(
                    "mixture weight",
                    format!("component {i}: must be positive, got {}", c.weight),
                ));
            }
            if c.mean.len() != dim {
                return Err(Error::dimension(
                    "mixture mean",
                    dim.to_string(),
                    c.mean.len().to_string(),
                ));
            }
            if c.mean.iter().any(|x| !x.is_finite()) {
                return Err(Error::validation(
                    "mixture mean",
                    format!("component {i}: entries must be finite"),
                ));
            }
            check_shape("mixture covariance", &c.covariance, dim, dim)?;
            require_positive_semidefinite("mixture covariance", &c.covariance)?;
            total += c.weight;
            cumulative.push(total);
            second_moment += (&c.covariance + &c.mean * c.mean.transpose()) * c.weight;
            factors.push(psd_factor(&c.covariance));
        }
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::validation(
                "mixture weights",
                format!("must sum to 1, got {total}"),
            ));
        }
        Ok(Self {
            dim,
            second_moment: symmetrize(&second_moment),
            kind: Kind::Mixture {
                components,
                factors,
                cumulative,
            },
        })
    }

    /// Uniform resampling with replacement from a table of observed vectors.
    pub fn empirical(samples: Vec<Vector>) -> Result<Self> {
        let first = samples
            .first()
            .ok_or_else(|| Error::validation("empirical noise table", "must not be empty"))?;
        let dim = first.len();
        if dim == 0 {
            return Err(Error::validation(
                "empirical noise table",
                "sample dimension must be positive",
            ));
        }
        let mut second_moment = Matrix::zeros(dim, dim);
        for (i, s) in samples.iter().enumerate() {
            if s.len() != dim {
                return Err(Error::dimension(
                    format!("empirical sample {i}"),
                    dim.to_string(),
                    s.len().to_string(),
                ));
            }
            if s.iter().any(|x| !x.is_finite()) {
                return Err(Error::validation(
                    "empirical noise table",
                    format!("sample {i} is not finite"),
                ));
            }
            second_moment += s * s.transpose();
        }
        second_moment /= samples.len() as f64;
        check_finite("empirical second moment", &second_moment)?;
        Ok(Self {
            dim,
            second_moment: symmetrize(&second_moment),
            kind: Kind::Empirical { samples },
        })
    }

    /// Zero-mean mixture of `2m` equally weighted Gaussians with means
    /// `±s·F eᵢ` (`F Fᵀ = second_moment`) and covariance `(1 − s²/m)·second_moment`,
    /// so its second moment equals `second_moment` exactly. `spread = 0` is
    /// Gaussian; `spread² → m` concentrates on the `2m` means.
    pub fn moment_matched_mixture(second_moment: &Matrix, spread: f64) -> Result<Self> {
        require_positive_semidefinite("second moment", second_moment)?;
        let m = second_moment.nrows();
        if !(spread >= 0.0 && spread * spread < m as f64) {
            return Err(Error::validation(
                "spread",
                format!("must lie in [0, sqrt({m})), got {spread}"),
            ));
        }
        let f = psd_factor(second_moment);
        let cov = second_moment * (1.0 - spread * spread / m as f64);
        let weight = 1.0 / (2 * m) as f64;
        let mut components = Vec::with_capacity(2 * m);
        for i in 0..m {
            let mean = f.column(i) * spread;
            for sign in [1.0, -1.0] {
                components.push(MixtureComponent {
                    weight,
                    mean: &mean * sign,
                    covariance: cov.clone(),
                });
            }
        }
        Self::mixture(components)
    }

    /// The same distribution with every sample multiplied by
    /// `sqrt(variance_scale)`; the second moment scales by `variance_scale`.
    pub fn scaled(&self, variance_scale: f64) -> Result<Self> {
        if !(variance_scale >= 0.0 && variance_scale.is_finite()) {
            return Err(Error::validation(
                "variance scale",
                format!("must be finite and nonnegative, got {variance_scale}"),
            ));
        }
        let f = variance_scale.sqrt();
        let kind = match &self.kind {
            Kind::Gaussian { factor } => Kind::Gaussian { factor: factor * f },
            Kind::Mixture {
                components,
                factors,
                cumulative,
            } => Kind::Mixture {
                components: components
                    .iter()
                    .map(|c| MixtureComponent {
                        weight: c.weight,
                        mean: &c.mean * f,
                        covariance: &c.covariance * variance_scale,
                    })
                    .collect(),
                factors: factors.iter().map(|x| x * f).collect(),
                cumulative: cumulative.clone(),
            },
            Kind::Empirical { samples } => Kind::Empirical {
                samples: samples.iter().map(|s| s * f).collect(),
            },
        };
        Ok(Self {
            kind,
            dim: self.dim,
            second_moment: &self.second_moment * variance_scale,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `E[v vᵀ]`.
    pub fn second_moment(&self) -> &Matrix {
        &self.second_moment
    }

    /// Mixture components, `None` for the other kinds.
    pub fn components(&self) -> Option<&[MixtureComponent]> {
        match &self.kind {
            Kind::Mixture { components, .. } => Some(components),
            _ => None,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self.kind {
            Kind::Gaussian { .. } => "gaussian",
            Kind::Mixture { .. } => "mixture",
            Kind::Empirical { .. } => "empirical",
        }
    }

    /// Draw one sample into `out` (length `dim`).
    pub fn sample_into(&self, rng: &mut impl Rng, out: &mut Vector) {
        match &self.kind {
            Kind::Gaussian { factor } => gaussian_into(rng, factor, out),
            Kind::Mixture {
                components,
                factors,
                cumulative,
            } => {
                let u: f64 = rng.random::<f64>() * cumulative[cumulative.len() - 1];
                let idx = cumulative
                    .partition_point(|&c| c <= u)
                    .min(components.len() - 1);
                gaussian_into(rng, &factors[idx], out);
                *out += &components[idx].mean;
            }
            Kind::Empirical { samples } => {
                let idx = rng.random_range(0..samples.len());
                out.copy_from(&samples[idx]);
            }
        }
    }

    pub fn sample(&self, rng: &mut impl Rng) -> Vector {
        let mut out = Vector::zeros(self.dim);
        self.sample_into(rng, &mut out);
        out
    }
}

fn gaussian_into(rng: &mut impl Rng, factor: &Matrix, out: &mut Vector) {
    let z = Vector::from_fn(factor.ncols(), |_, _| rng.sample::<f64, _>(StandardNormal));
    out.gemv(1.0, factor, &z, 0.0);
}
