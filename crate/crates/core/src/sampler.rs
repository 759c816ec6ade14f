//! Two-block Gibbs sampler: tree given image via conjugate weights and
//! Wilson's algorithm, image given tree via linear randomize-then-optimize.
//! Laplace and Cauchy priors add a scale-mixture block between the two.

use std::time::Instant;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::diagnostics::{local_contrast, value_range};
use crate::error::{check_len, invalid, Error, Result};
use crate::forward::{ForwardOperator, LinearProblem};
use crate::graph::{difference_operator, DifferenceOperator, GridGraph, SpanningForest};
use crate::image::Image;
use crate::linalg::{cg_solve, hutchinson_diagonal, CgSettings, LinearMap, LinearOperatorStack, DEFAULT_PROBES};
use crate::prior::{AuxiliaryScales, DifferencePrior, Family};
use crate::rng::RngStream;
use crate::tree::{conjugate_weights, TreeDistribution, WalkRoot, WilsonSampler, DEFAULT_STEP_BUDGET};

pub const DEFAULT_RHO_REL: f64 = 1e-2;
pub const DEFAULT_BURN_IN_FRACTION: f64 = 0.2;

pub const CMRF_INSTABILITY_WARNING: &str =
    "RST-CMRF is unstable for deblurring and inpainting and may not produce useful results";

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConditionalSettings {
    pub cg: CgSettings,
    /// Jacobi preconditioning from a Hutchinson estimate of the diagonal.
    pub precondition: bool,
    pub probes: usize,
}

impl Default for ConditionalSettings {
    fn default() -> Self {
        Self {
            cg: CgSettings::default(),
            precondition: false,
            probes: DEFAULT_PROBES,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ConditionalDraw {
    pub image: Vec<f64>,
    pub cg_iterations: usize,
    pub relative_residual: f64,
    pub converged: bool,
}

/// Row scales of `Λ D`: edge strengths and unit root scales for the Gaussian
/// family, `τ^{-1/2}` for scale mixtures.
pub fn row_scales(prior: &DifferencePrior, op: &DifferenceOperator, aux: Option<&AuxiliaryScales>) -> Result<Vec<f64>> {
    match (prior.family(), aux) {
        (Family::Gaussian, _) => Ok(op
            .edge_rows()
            .iter()
            .map(|&(_, _, e)| prior.edge_strength(e))
            .chain(op.root_rows().iter().map(|_| 1.0))
            .collect()),
        (_, Some(aux)) => {
            check_len(op.nrows(), aux.tau.len())?;
            if !aux.is_valid() {
                return Err(invalid("auxiliary variances must be positive and finite"));
            }
            Ok(aux.tau.iter().map(|t| t.sqrt().recip()).collect())
        }
        (family, None) => Err(invalid(format!("{family} prior needs auxiliary variances"))),
    }
}

/// Draws a fresh variance per row of `op` given the current image.
pub fn sample_auxiliary<R: Rng + ?Sized>(
    prior: &DifferencePrior,
    op: &DifferenceOperator,
    image: &[f64],
    rng: &mut R,
) -> Result<AuxiliaryScales> {
    let diffs = op.apply(image);
    let ne = op.edge_rows().len();
    let root = prior.root_mixture()?;
    let mut tau = Vec::with_capacity(diffs.len());
    for (i, &z) in diffs.iter().enumerate() {
        if !z.is_finite() {
            return Err(Error::NumericalBreakdown {
                iteration: 0,
                detail: format!("non-finite difference {z} in row {i}"),
            });
        }
        let mix = if i < ne { prior.edge_mixture(op.edge_rows()[i].2)? } else { root };
        tau.push(mix.sample_given(z, rng));
    }
    Ok(AuxiliaryScales { tau })
}

/// Checks that every connected piece of `op` is pinned by a root row or by
/// an observed pixel.
fn check_proper(op: &DifferenceOperator, observed: Option<&[bool]>) -> Result<()> {
    let n = op.ncols();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut v: usize) -> usize {
        while p[v] != v {
            p[v] = p[p[v]];
            v = p[v];
        }
        v
    }
    for &(a, b, _) in op.edge_rows() {
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        parent[ra] = rb;
    }
    let mut pinned = vec![false; n];
    for &(r, _) in op.root_rows() {
        let c = find(&mut parent, r);
        pinned[c] = true;
    }
    if let Some(obs) = observed {
        for v in (0..n).filter(|&v| obs[v]) {
            let c = find(&mut parent, v);
            pinned[c] = true;
        }
    }
    match (0..n).find(|&v| !pinned[find(&mut parent, v)]) {
        None => Ok(()),
        Some(v) => Err(Error::ImproperPosterior(format!(
            "the component containing pixel {v} has neither a root nor an observation"
        ))),
    }
}

/// Exact draw from the Gaussian conditional
/// `N(Q⁻¹ Aᵀy/σ², Q⁻¹)`, `Q = AᵀA/σ² + (ΛD)ᵀ(ΛD)`, by minimising
/// `‖A x − (y + σ ξ₁)‖²/σ² + ‖Λ D x − ξ₂‖²`. Without a problem the draw is
/// from the prior alone.
pub fn sample_conditional_image<R: Rng + ?Sized>(
    problem: Option<&LinearProblem>,
    prior: &DifferencePrior,
    op: &DifferenceOperator,
    aux: Option<&AuxiliaryScales>,
    settings: &ConditionalSettings,
    initial: Option<&[f64]>,
    rng: &mut R,
) -> Result<ConditionalDraw> {
    let n = op.ncols();
    if let Some(p) = problem {
        check_len(n, p.pixel_count())?;
    }
    let support = problem.map(|p| p.operator.column_support());
    check_proper(op, support.as_deref())?;

    let prior_rows = op.to_sparse(&row_scales(prior, op, aux)?);
    let mut stack = LinearOperatorStack::new(n);
    let mut rhs = vec![0.0; n];
    if let Some(p) = problem {
        let a: &ForwardOperator = &p.operator;
        let s2 = p.noise_sd * p.noise_sd;
        let perturbed: Vec<f64> = p
            .data
            .iter()
            .map(|&y| (y + p.noise_sd * rng.sample::<f64, _>(StandardNormal)) / s2)
            .collect();
        a.apply_transpose(&perturbed, &mut rhs);
        stack.push(1.0 / s2, a)?;
    }
    let xi: Vec<f64> = (0..prior_rows.nrows()).map(|_| rng.sample(StandardNormal)).collect();
    let mut prior_part = vec![0.0; n];
    prior_rows.apply_transpose(&xi, &mut prior_part);
    rhs.iter_mut().zip(&prior_part).for_each(|(r, p)| *r += p);
    stack.push(1.0, &prior_rows)?;

    let diag = if settings.precondition {
        Some(hutchinson_diagonal(&stack, settings.probes, rng)?)
    } else {
        None
    };
    let out = cg_solve(&stack, &rhs, initial, &settings.cg, diag.as_deref())?;
    Ok(ConditionalDraw {
        image: out.solution,
        cg_iterations: out.iterations,
        relative_residual: out.relative_residual,
        converged: out.converged,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChainConfig {
    pub prior: DifferencePrior,
    /// Resample a spanning forest every sweep; otherwise every grid edge
    /// carries a difference term.
    pub rst: bool,
    /// Add root rows. Without them the posterior is proper only if the data
    /// see constant images.
    pub rooted: bool,
    /// Terminal weight relative to the largest conjugate weight; zero samples
    /// single trees rooted at vertex 0.
    pub rho_rel: f64,
    /// Lower bound on the conjugate tree weights; zero leaves them as is.
    pub weight_floor: f64,
    pub iterations: usize,
    pub burn_in: usize,
    pub thinning: usize,
    pub n_chains: usize,
    /// Chain `i` uses seed `seed + i`.
    pub seed: u64,
    pub conditional: ConditionalSettings,
    pub step_budget: u64,
    /// Keep every retained sample for a dump file.
    pub keep_samples: bool,
}

impl ChainConfig {
    /// Defaults: rooted RST, `rho_rel` 1e-2, 20% burn-in, no thinning, one
    /// chain.
    pub fn new(prior: DifferencePrior, iterations: usize) -> Self {
        Self {
            prior,
            rst: true,
            rooted: true,
            rho_rel: DEFAULT_RHO_REL,
            weight_floor: 0.0,
            iterations,
            burn_in: default_burn_in(iterations),
            thinning: 1,
            n_chains: 1,
            seed: 0,
            conditional: ConditionalSettings::default(),
            step_budget: DEFAULT_STEP_BUDGET,
            keep_samples: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.iterations <= self.burn_in {
            return Err(invalid(format!(
                "iterations ({}) must exceed burn-in ({})",
                self.iterations, self.burn_in
            )));
        }
        if self.thinning == 0 || self.n_chains == 0 {
            return Err(invalid("thinning and chain count must be at least 1"));
        }
        if !(self.rho_rel >= 0.0 && self.rho_rel.is_finite()) {
            return Err(invalid(format!("rho_rel must be finite and >= 0, got {}", self.rho_rel)));
        }
        if !(self.weight_floor >= 0.0 && self.weight_floor.is_finite()) {
            return Err(invalid(format!("weight floor must be finite and >= 0, got {}", self.weight_floor)));
        }
        if !self.rooted && self.rst && self.rho_rel > 0.0 {
            return Err(invalid("unrooted sampling needs single trees (rho_rel = 0)"));
        }
        Ok(())
    }

    fn retained(&self, iteration: usize) -> bool {
        iteration >= self.burn_in && (iteration - self.burn_in).is_multiple_of(self.thinning)
    }
}

pub fn default_burn_in(iterations: usize) -> usize {
    (iterations as f64 * DEFAULT_BURN_IN_FRACTION).floor() as usize
}

#[derive(Clone, Debug)]
pub struct ChainState {
    pub image: Vec<f64>,
    /// Current forest; `None` before the first sweep and in non-RST mode.
    pub forest: Option<SpanningForest>,
    pub aux: Option<AuxiliaryScales>,
    pub iteration: usize,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StepInfo {
    pub cg_iterations: usize,
    pub cg_converged: bool,
    pub walk_steps: u64,
    pub components: usize,
}

/// A configured sampler for one problem. Holds no chain state.
pub struct GibbsSampler<'a> {
    graph: &'a GridGraph,
    problem: &'a LinearProblem,
    config: &'a ChainConfig,
    base_weights: Vec<f64>,
    terminal_weight: f64,
    full_operator: Option<DifferenceOperator>,
}

impl<'a> GibbsSampler<'a> {
    pub fn new(graph: &'a GridGraph, problem: &'a LinearProblem, config: &'a ChainConfig) -> Result<Self> {
        config.validate()?;
        if graph.height() != problem.height || graph.width() != problem.width {
            return Err(invalid(format!(
                "graph is {}x{} but the problem is {}x{}",
                graph.height(),
                graph.width(),
                problem.height,
                problem.width
            )));
        }
        if !config.rooted && !problem.constant_is_observed() {
            return Err(Error::ImproperPosterior(
                "unrooted prior with constant images in the null space of the forward operator".into(),
            ));
        }
        let prior = &config.prior;
        // Per-edge strengths enter the tree conditional as an extra factor λ_e.
        let base_weights: Vec<f64> = graph
            .weights()
            .iter()
            .enumerate()
            .map(|(e, w)| w * prior.edge_strength(e) / prior.strength())
            .collect();
        let w_max = base_weights.iter().copied().fold(0.0, f64::max);
        let terminal_weight = config.rho_rel * prior.unit_density(0.0) * w_max;
        let full_operator = if config.rst {
            None
        } else {
            let all: Vec<usize> = (0..graph.edge_count()).collect();
            let roots: &[usize] = if config.rooted { &[0] } else { &[] };
            Some(DifferenceOperator::new(graph, &all, roots, prior.root_weight())?)
        };
        Ok(Self {
            graph,
            problem,
            config,
            base_weights,
            terminal_weight,
            full_operator,
        })
    }

    pub fn config(&self) -> &ChainConfig {
        self.config
    }

    /// Terminal vertex weight actually used by the tree step.
    pub fn terminal_weight(&self) -> f64 {
        self.terminal_weight
    }

    pub fn initial_state(&self) -> ChainState {
        ChainState {
            image: self.problem.initial_image(),
            forest: None,
            aux: None,
            iteration: 0,
        }
    }

    /// One sweep: conjugate weights, forest, auxiliary variances, image.
    pub fn step<R: Rng + ?Sized>(&self, state: &mut ChainState, rng: &mut R) -> Result<StepInfo> {
        let cfg = self.config;
        let prior = &cfg.prior;
        let mut info = StepInfo::default();

        let tree_op;
        let op = match &self.full_operator {
            Some(op) => {
                info.components = 1;
                op
            }
            None => {
                let mut weights = conjugate_weights(self.graph, &self.base_weights, &state.image, prior)?;
                if cfg.weight_floor > 0.0 {
                    weights.iter_mut().for_each(|w| *w = w.max(cfg.weight_floor));
                }
                let mut dist = TreeDistribution::new(self.graph, weights)?;
                let root = if self.terminal_weight > 0.0 {
                    dist = dist.with_terminal_weight(self.terminal_weight)?;
                    WalkRoot::Terminal
                } else {
                    WalkRoot::Vertex(0)
                };
                let sample = WilsonSampler { step_budget: cfg.step_budget }.sample(&dist, root, rng)?;
                info.walk_steps = sample.steps;
                info.components = sample.forest.component_count();
                tree_op = difference_operator(&sample.forest, self.graph, prior.root_weight(), cfg.rooted)?;
                state.forest = Some(sample.forest);
                &tree_op
            }
        };

        state.aux = match prior.family() {
            Family::Gaussian => None,
            _ => Some(sample_auxiliary(prior, op, &state.image, rng)?),
        };

        let draw = sample_conditional_image(
            Some(self.problem),
            prior,
            op,
            state.aux.as_ref(),
            &cfg.conditional,
            Some(&state.image),
            rng,
        )?;
        info.cg_iterations = draw.cg_iterations;
        info.cg_converged = draw.converged;

        let bad_tau = state.aux.as_ref().is_some_and(|a| !a.is_valid());
        if bad_tau || draw.image.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericalBreakdown {
                iteration: state.iteration,
                detail: "non-finite chain state".into(),
            });
        }
        state.image = draw.image;
        state.iteration += 1;
        Ok(info)
    }
}

/// Runs one Gibbs sweep of `sampler` on `state`.
pub fn gibbs_step<R: Rng + ?Sized>(sampler: &GibbsSampler<'_>, state: &mut ChainState, rng: &mut R) -> Result<StepInfo> {
    sampler.step(state, rng)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChainDiagnostics {
    pub chain: usize,
    pub seed: u64,
    pub retained: usize,
    pub mean_cg_iterations: f64,
    pub max_cg_iterations: usize,
    /// Sweeps whose solve stopped at the iteration cap.
    pub cg_warnings: usize,
    pub mean_components: f64,
    pub mean_walk_steps: f64,
    pub mean_local_contrast: f64,
    pub mean_global_contrast: f64,
    pub wall_time_ms: f64,
}

struct ChainOutput {
    count: usize,
    mean: Vec<f64>,
    m2: Vec<f64>,
    samples: Vec<Vec<f32>>,
    diagnostics: ChainDiagnostics,
}

fn run_chain(sampler: &GibbsSampler<'_>, chain: usize) -> Result<ChainOutput> {
    let cfg = sampler.config;
    let (h, w) = (sampler.problem.height, sampler.problem.width);
    let n = h * w;
    let mut rng = RngStream::for_chain(cfg.seed, chain);
    let mut state = sampler.initial_state();
    let mut mean = vec![0.0; n];
    let mut m2 = vec![0.0; n];
    let mut samples = Vec::new();
    let mut count = 0usize;
    let (mut cg_total, mut cg_max, mut cg_warnings) = (0usize, 0usize, 0usize);
    let (mut comp_total, mut steps_total) = (0usize, 0u64);
    let (mut local, mut global) = (0.0, 0.0);
    let start = Instant::now();

    for t in 0..cfg.iterations {
        let info = sampler.step(&mut state, &mut rng)?;
        cg_total += info.cg_iterations;
        cg_max = cg_max.max(info.cg_iterations);
        cg_warnings += usize::from(!info.cg_converged);
        comp_total += info.components;
        steps_total += info.walk_steps;
        if !cfg.retained(t) {
            continue;
        }
        count += 1;
        let k = count as f64;
        for ((m, s), &x) in mean.iter_mut().zip(m2.iter_mut()).zip(&state.image) {
            let d = x - *m;
            *m += d / k;
            *s += d * (x - *m);
        }
        local += local_contrast(&state.image, h, w);
        global += value_range(&state.image);
        if cfg.keep_samples {
            samples.push(state.image.iter().map(|&v| v as f32).collect());
        }
    }

    let iters = cfg.iterations as f64;
    let diagnostics = ChainDiagnostics {
        chain,
        seed: rng.seed(),
        retained: count,
        mean_cg_iterations: cg_total as f64 / iters,
        max_cg_iterations: cg_max,
        cg_warnings,
        mean_components: comp_total as f64 / iters,
        mean_walk_steps: steps_total as f64 / iters,
        mean_local_contrast: local / count as f64,
        mean_global_contrast: global / count as f64,
        wall_time_ms: start.elapsed().as_secs_f64() * 1e3,
    };
    Ok(ChainOutput { count, mean, m2, samples, diagnostics })
}

#[derive(Clone, Debug)]
pub struct PosteriorSummary {
    pub height: usize,
    pub width: usize,
    pub mean: Vec<f64>,
    /// Pooled sample standard deviation per pixel.
    pub std: Vec<f64>,
    pub retained: usize,
    pub chains: Vec<ChainDiagnostics>,
    /// Retained samples in chain order, if requested.
    pub samples: Vec<Vec<f32>>,
    pub warnings: Vec<String>,
}

impl PosteriorSummary {
    pub fn mean_image(&self) -> Image {
        Image {
            height: self.height,
            width: self.width,
            data: self.mean.clone(),
        }
    }

    pub fn std_image(&self) -> Image {
        Image {
            height: self.height,
            width: self.width,
            data: self.std.clone(),
        }
    }

    /// Contrasts averaged over retained samples and chains: `(local, global)`.
    pub fn sample_contrasts(&self) -> (f64, f64) {
        let total: usize = self.chains.iter().map(|c| c.retained).sum();
        let avg = |f: fn(&ChainDiagnostics) -> f64| {
            self.chains.iter().map(|c| f(c) * c.retained as f64).sum::<f64>() / total as f64
        };
        (avg(|c| c.mean_local_contrast), avg(|c| c.mean_global_contrast))
    }

    pub fn cg_warnings(&self) -> usize {
        self.chains.iter().map(|c| c.cg_warnings).sum()
    }
}

/// Runs `n_chains` independent chains in parallel on one data set and pools
/// their post burn-in samples. Results do not depend on thread scheduling.
pub fn run_chains(graph: &GridGraph, problem: &LinearProblem, config: &ChainConfig) -> Result<PosteriorSummary> {
    let sampler = GibbsSampler::new(graph, problem, config)?;
    let mut warnings = Vec::new();
    let data_limited = matches!(problem.operator, ForwardOperator::Blur(_) | ForwardOperator::Mask(_));
    if config.rst && config.prior.family() == Family::Cauchy && data_limited {
        warnings.push(CMRF_INSTABILITY_WARNING.to_string());
    }

    let outputs: Vec<Result<ChainOutput>> = (0..config.n_chains)
        .into_par_iter()
        .map(|c| run_chain(&sampler, c))
        .collect();

    let n = problem.pixel_count();
    let (mut count, mut mean, mut m2) = (0usize, vec![0.0; n], vec![0.0; n]);
    let mut chains = Vec::with_capacity(outputs.len());
    let mut samples = Vec::new();
    for out in outputs {
        let out = out?;
        let total = count + out.count;
        let (na, nb, nt) = (count as f64, out.count as f64, total as f64);
        for i in 0..n {
            let d = out.mean[i] - mean[i];
            mean[i] += d * nb / nt;
            m2[i] += out.m2[i] + d * d * na * nb / nt;
        }
        count = total;
        samples.extend(out.samples);
        chains.push(out.diagnostics);
    }
    let std = m2
        .iter()
        .map(|s| if count > 1 { (s / (count - 1) as f64).sqrt() } else { 0.0 })
        .collect();
    let flagged: usize = chains.iter().map(|c| c.cg_warnings).sum();
    if flagged > 0 {
        warnings.push(format!("{flagged} sweeps hit the CG iteration cap before reaching the tolerance"));
    }
    Ok(PosteriorSummary {
        height: problem.height,
        width: problem.width,
        mean,
        std,
        retained: count,
        chains,
        samples,
        warnings,
    })
}
