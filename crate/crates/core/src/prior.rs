//! Difference priors (Gaussian, Laplace, Cauchy) on spanning forests and
//! their scale-mixture-of-normals representation.
//!
//! Conditioned on a forest, every component root contributes
//! `λ_r φ(λ_r x_r)` and every forest edge contributes `λ_e φ(λ_e Δx_e)`; the
//! product is a normalized density because the root values and edge
//! differences are independent coordinates.
//!
//! Scale mixtures, with `γ` the edge's effective parameter:
//!
//! ```text
//! Laplace, rate γ:   z | τ ~ N(0, τ),  τ ~ Exp(rate γ²/2),
//!                    1/τ | z ~ InvGaussian(mean γ/|z|, shape γ²)
//! Cauchy, scale γ:   z | τ ~ N(0, τ),  τ ~ InvGamma(shape ½, scale γ²/2),
//!                    1/τ | z ~ Gamma(shape 1, rate (z² + γ²)/2)
//! ```

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Exp, Exp1, Gamma, StandardNormal};

use crate::error::{check_len, invalid, Error, Result};
use crate::graph::{GridGraph, SpanningForest};

/// Relative floor on `|z|` in the Laplace conditional: `|z| >= 1e-8 / γ`.
pub const LAPLACE_ZERO_CLAMP: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Family {
    Gaussian,
    Laplace,
    Cauchy,
}

impl Family {
    pub const ALL: [Family; 3] = [Family::Gaussian, Family::Laplace, Family::Cauchy];

    /// Unit-scale, zero-location density φ.
    pub fn unit_density(self, z: f64) -> f64 {
        match self {
            Family::Gaussian => (-0.5 * z * z).exp() / (2.0 * PI).sqrt(),
            Family::Laplace => 0.5 * (-z.abs()).exp(),
            Family::Cauchy => 1.0 / (PI * (1.0 + z * z)),
        }
    }

    pub fn log_unit_density(self, z: f64) -> f64 {
        match self {
            Family::Gaussian => -0.5 * z * z - 0.5 * (2.0 * PI).ln(),
            Family::Laplace => -z.abs() - std::f64::consts::LN_2,
            Family::Cauchy => -(PI * (1.0 + z * z)).ln(),
        }
    }

    /// One draw from φ.
    pub fn sample_unit<R: Rng + ?Sized>(self, rng: &mut R) -> f64 {
        match self {
            Family::Gaussian => StandardNormal.sample(rng),
            Family::Laplace => {
                let e: f64 = Exp1.sample(rng);
                if rng.random::<bool>() {
                    e
                } else {
                    -e
                }
            }
            Family::Cauchy => (PI * (rng.random::<f64>() - 0.5)).tan(),
        }
    }

    /// Short name used by the CLI (`gmrf`, `lmrf`, `cmrf`).
    pub fn short_name(self) -> &'static str {
        match self {
            Family::Gaussian => "gmrf",
            Family::Laplace => "lmrf",
            Family::Cauchy => "cmrf",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short_name())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gmrf" | "gaussian" => Ok(Family::Gaussian),
            "lmrf" | "laplace" => Ok(Family::Laplace),
            "cmrf" | "cauchy" => Ok(Family::Cauchy),
            other => Err(invalid(format!("unknown prior family '{other}'"))),
        }
    }
}

/// A difference prior: family, edge strength λ (density `φ(λ Δx)`), and the
/// root strength used for component roots.
#[derive(Clone, Debug, PartialEq)]
pub struct DifferencePrior {
    family: Family,
    strength: f64,
    root_weight: f64,
    edge_strengths: Option<Vec<f64>>,
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("{name} must be positive and finite, got {v}")))
    }
}

impl DifferencePrior {
    pub fn new(family: Family, strength: f64, root_weight: f64) -> Result<Self> {
        check_positive("strength", strength)?;
        check_positive("root weight", root_weight)?;
        Ok(Self {
            family,
            strength,
            root_weight,
            edge_strengths: None,
        })
    }

    /// Prior from a user-facing strength, where larger always means more
    /// edge preserving. For Cauchy the user value is the difference scale,
    /// i.e. the density is `φ(Δx / user_strength)`.
    pub fn from_user_strength(family: Family, user_strength: f64, root_weight: f64) -> Result<Self> {
        check_positive("strength", user_strength)?;
        let strength = match family {
            Family::Cauchy => 1.0 / user_strength,
            _ => user_strength,
        };
        Self::new(family, strength, root_weight)
    }

    /// Per-edge strengths overriding the global one.
    pub fn with_edge_strengths(mut self, strengths: Vec<f64>) -> Result<Self> {
        for &s in &strengths {
            check_positive("edge strength", s)?;
        }
        self.edge_strengths = Some(strengths);
        Ok(self)
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn strength(&self) -> f64 {
        self.strength
    }

    pub fn root_weight(&self) -> f64 {
        self.root_weight
    }

    pub fn edge_strength(&self, e: usize) -> f64 {
        match &self.edge_strengths {
            Some(s) => s[e],
            None => self.strength,
        }
    }

    pub fn unit_density(&self, z: f64) -> f64 {
        self.family.unit_density(z)
    }

    pub fn log_unit_density(&self, z: f64) -> f64 {
        self.family.log_unit_density(z)
    }

    /// Mixture representation of the difference on edge `e`.
    pub fn edge_mixture(&self, e: usize) -> Result<ScaleMixture> {
        ScaleMixture::for_strength(self.family, self.edge_strength(e))
    }

    /// Mixture representation of a root row. Root rows already carry the
    /// root weight, so the row value `λ_r x_r` is unit scale.
    pub fn root_mixture(&self) -> Result<ScaleMixture> {
        ScaleMixture::for_strength(self.family, 1.0)
    }

    fn check_edge_strengths(&self, graph: &GridGraph) -> Result<()> {
        match &self.edge_strengths {
            Some(s) => check_len(graph.edge_count(), s.len()),
            None => Ok(()),
        }
    }
}

/// Normal scale-mixture form of a Laplace (rate γ) or Cauchy (scale γ)
/// variable.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ScaleMixture {
    Laplace { gamma: f64 },
    Cauchy { gamma: f64 },
}

impl ScaleMixture {
    /// Mixture for the difference `z` with density `λ φ(λ z)`: Laplace rate λ,
    /// or Cauchy scale 1/λ.
    pub fn for_strength(family: Family, strength: f64) -> Result<Self> {
        match family {
            Family::Gaussian => Err(Error::NotApplicable("Gaussian")),
            Family::Laplace => Ok(ScaleMixture::Laplace { gamma: strength }),
            Family::Cauchy => Ok(ScaleMixture::Cauchy { gamma: 1.0 / strength }),
        }
    }

    pub fn gamma(self) -> f64 {
        match self {
            ScaleMixture::Laplace { gamma } | ScaleMixture::Cauchy { gamma } => gamma,
        }
    }

    /// Marginal draw of the variance τ.
    pub fn sample_marginal<R: Rng + ?Sized>(self, rng: &mut R) -> f64 {
        match self {
            ScaleMixture::Laplace { gamma } => Exp::new(0.5 * gamma * gamma).unwrap().sample(rng),
            ScaleMixture::Cauchy { gamma } => {
                // τ = 1/g with g ~ Gamma(shape ½, rate γ²/2).
                let g: f64 = Gamma::new(0.5, 2.0 / (gamma * gamma)).unwrap().sample(rng);
                1.0 / g
            }
        }
    }

    /// Draw of τ given the current difference `z`.
    pub fn sample_given<R: Rng + ?Sized>(self, z: f64, rng: &mut R) -> f64 {
        match self {
            ScaleMixture::Laplace { gamma } => {
                let az = z.abs().max(LAPLACE_ZERO_CLAMP / gamma);
                let precision = inverse_gaussian(gamma / az, gamma * gamma, rng);
                1.0 / precision
            }
            ScaleMixture::Cauchy { gamma } => {
                let rate = 0.5 * (z * z + gamma * gamma);
                let precision: f64 = Exp::new(rate).unwrap().sample(rng);
                1.0 / precision
            }
        }
    }
}

/// Michael–Schucany–Haas draw, with the smaller root written so that it does
/// not cancel when `mean / shape` is large.
fn inverse_gaussian<R: Rng + ?Sized>(mean: f64, shape: f64, rng: &mut R) -> f64 {
    let n: f64 = rng.sample(StandardNormal);
    let r = mean * n * n / (2.0 * shape);
    let small = mean / (1.0 + r + (r * (r + 2.0)).sqrt());
    let u: f64 = rng.random();
    let x = if u * (mean + small) <= mean { small } else { mean * mean / small };
    x.max(f64::MIN_POSITIVE)
}

/// Conditional draw of an edge variance τ given the difference `z`, for an
/// edge at the prior's global strength.
pub fn sample_aux_given_difference<R: Rng + ?Sized>(prior: &DifferencePrior, z: f64, rng: &mut R) -> Result<f64> {
    if !z.is_finite() {
        return Err(invalid(format!("difference must be finite, got {z}")));
    }
    Ok(ScaleMixture::for_strength(prior.family, prior.strength)?.sample_given(z, rng))
}

/// Marginal draw of an edge variance τ at the prior's global strength.
pub fn sample_tau_marginal<R: Rng + ?Sized>(prior: &DifferencePrior, rng: &mut R) -> Result<f64> {
    Ok(ScaleMixture::for_strength(prior.family, prior.strength)?.sample_marginal(rng))
}

/// Per-row variances for a difference operator: one per edge row, then one
/// per root row.
#[derive(Clone, Debug, PartialEq)]
pub struct AuxiliaryScales {
    pub tau: Vec<f64>,
}

impl AuxiliaryScales {
    pub fn is_valid(&self) -> bool {
        self.tau.iter().all(|t| *t > 0.0 && t.is_finite())
    }
}

/// Normalized log-density of `image` under the prior conditioned on
/// `forest`, with every component rooted at its forest root.
pub fn log_prior_density(
    prior: &DifferencePrior,
    forest: &SpanningForest,
    graph: &GridGraph,
    image: &[f64],
) -> Result<f64> {
    check_len(graph.vertex_count(), image.len())?;
    check_len(graph.vertex_count(), forest.vertex_count())?;
    prior.check_edge_strengths(graph)?;
    let family = prior.family;
    let lr = prior.root_weight;
    let mut total = 0.0;
    for r in forest.roots() {
        total += lr.ln() + family.log_unit_density(lr * image[r]);
    }
    for &e in forest.included_edges() {
        let (a, b) = graph.edge(e);
        let s = prior.edge_strength(e);
        total += s.ln() + family.log_unit_density(s * (image[a] - image[b]));
    }
    Ok(total)
}

/// Exact draw from the prior conditioned on `forest`: each root value comes
/// from `λ_r φ(λ_r ·)`, then values propagate parent to child with
/// independent differences from `λ_e φ(λ_e ·)`.
pub fn sample_prior<R: Rng + ?Sized>(
    prior: &DifferencePrior,
    forest: &SpanningForest,
    graph: &GridGraph,
    rng: &mut R,
) -> Result<Vec<f64>> {
    check_len(graph.vertex_count(), forest.vertex_count())?;
    prior.check_edge_strengths(graph)?;
    let family = prior.family;
    let mut x = vec![0.0; graph.vertex_count()];
    for v in forest.topological_order() {
        x[v] = match (forest.parent(v), forest.parent_edge(v)) {
            (Some(p), Some(e)) => x[p] + family.sample_unit(rng) / prior.edge_strength(e),
            _ => family.sample_unit(rng) / prior.root_weight,
        };
    }
    Ok(x)
}
