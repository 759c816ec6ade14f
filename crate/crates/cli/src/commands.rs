//! The three subcommands. Each parses its typed settings from a [`Config`],
//! rejects unknown keys, then writes its outputs under `out_dir`.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rstmrf::diagnostics::{benchmark_tree_runtime, log_log_slope, write_benchmark_csv, write_timing_csv};
use rstmrf::forward::{ForwardOperator, DEFAULT_BLUR_SD};
use rstmrf::image::{save_pgm, write_forest_csv, write_image_csv, write_sample_dump};
use rstmrf::linalg::CgSettings;
use rstmrf::prior::sample_prior as draw_prior;
use rstmrf::sampler::{default_burn_in, DEFAULT_RHO_REL};
use rstmrf::tree::{TreeDistribution, WalkRoot, WilsonSampler};
use rstmrf::{
    build_grid, global_contrast, make_data, make_phantom, max_local_contrast, run_chains, sample_conditional_image,
    tree_depth_field, BitDepth, ChainConfig, ConditionalSettings, DifferenceOperator, DifferencePrior,
    Experiment, Family, Image, RngStream,
};

use crate::config::{parse_size, parse_sweep, Config};
use crate::CliError;

const DEFAULT_LAMBDA: f64 = 10.0;
/// Log-spaced strengths used when neither `lambda` nor `lambda_sweep` is set.
const DEFAULT_LAMBDA_SWEEP: &str = "log:1:100:5";
const DEFAULT_EXPERIMENT_ROOT_WEIGHT: f64 = 1e-2;

fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn finish(mut w: BufWriter<File>) -> Result<(), CliError> {
    w.flush()?;
    Ok(())
}

fn out_dir(cfg: &mut Config) -> Result<PathBuf, CliError> {
    let dir = PathBuf::from(cfg.take_str("out_dir").unwrap_or_else(|| "out".into()));
    Ok(dir)
}

fn make_out_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))
}

fn save_image(dir: &Path, name: &str, image: &Image, range: (f64, f64)) -> Result<(), CliError> {
    save_pgm(dir.join(format!("{name}.pgm")), image, BitDepth::Sixteen, range)?;
    let mut w = create(&dir.join(format!("{name}.csv")))?;
    write_image_csv(&mut w, image)?;
    finish(w)
}

fn min_max(image: &Image) -> (f64, f64) {
    (image.min(), image.max())
}

#[derive(Clone, Debug, PartialEq)]
pub struct PriorSettings {
    pub family: Family,
    pub rst: bool,
    pub lambda: f64,
    pub root_weight: f64,
    pub rho_rel: f64,
    pub size: (usize, usize),
    pub samples: usize,
    pub root: usize,
    pub seed: u64,
    pub out_dir: PathBuf,
}

impl PriorSettings {
    pub fn from_config(mut cfg: Config) -> Result<Self, CliError> {
        let family = cfg.take_or("family", Family::Gaussian)?;
        let lambda = cfg.take_or("lambda", DEFAULT_LAMBDA)?;
        let s = Self {
            family,
            rst: cfg.take_bool("rst", true)?,
            lambda,
            root_weight: cfg.take_or("root_weight", lambda)?,
            rho_rel: cfg.take_or("rho_rel", 0.0)?,
            size: parse_size(&cfg.take_str("size").unwrap_or_else(|| "128".into()))?,
            samples: cfg.take_or("samples", 3)?,
            root: cfg.take_or("root", 0)?,
            seed: cfg.take_or("seed", 0)?,
            out_dir: out_dir(&mut cfg)?,
        };
        cfg.finish()?;
        if !s.rst && s.family != Family::Gaussian {
            return Err(config_err(
                "exact prior samples without a spanning tree are available for the gaussian family only",
            ));
        }
        if !s.rst && s.rho_rel > 0.0 {
            return Err(config_err("rho_rel applies to spanning tree sampling only"));
        }
        if s.root >= s.size.0 * s.size.1 {
            return Err(config_err(format!("root {} outside the grid", s.root)));
        }
        Ok(s)
    }
}

pub fn sample_prior(cfg: Config) -> Result<Vec<String>, CliError> {
    let s = PriorSettings::from_config(cfg)?;
    let (h, w) = s.size;
    let graph = build_grid(h, w, 1.0, 0.0)?;
    let prior = DifferencePrior::new(s.family, s.lambda, s.root_weight)?;
    make_out_dir(&s.out_dir)?;
    let mut rng = RngStream::new(s.seed);
    let mut report = Vec::new();

    for i in 0..s.samples {
        let image = if s.rst {
            let mut dist = TreeDistribution::from_graph(&graph);
            let root = if s.rho_rel > 0.0 {
                dist = dist.with_terminal_weight(s.rho_rel)?;
                WalkRoot::Terminal
            } else {
                WalkRoot::Vertex(s.root)
            };
            let forest = WilsonSampler::default().sample(&dist, root, &mut rng)?.forest;
            let x = draw_prior(&prior, &forest, &graph, &mut rng)?;
            let depth = tree_depth_field(&forest, &graph, s.root)?;
            let depth = Image::new(h, w, depth.into_iter().map(|d| d as f64).collect())?;
            save_image(&s.out_dir, &format!("depth_{i}"), &depth, min_max(&depth))?;
            let mut fw = create(&s.out_dir.join(format!("forest_{i}.csv")))?;
            write_forest_csv(&mut fw, &forest)?;
            finish(fw)?;
            report.push(format!(
                "sample {i}: {} component(s), max depth {}",
                forest.component_count(),
                depth.max()
            ));
            x
        } else {
            let all: Vec<usize> = (0..graph.edge_count()).collect();
            let op = DifferenceOperator::new(&graph, &all, &[s.root], s.root_weight)?;
            let draw = sample_conditional_image(None, &prior, &op, None, &ConditionalSettings::default(), None, &mut rng)?;
            if !draw.converged {
                report.push(format!("sample {i}: CG stopped at relative residual {:.2e}", draw.relative_residual));
            }
            draw.image
        };
        let image = Image::new(h, w, image)?;
        save_image(&s.out_dir, &format!("prior_{i}"), &image, min_max(&image))?;
    }
    report.push(format!("wrote {} prior sample(s) to {}", s.samples, s.out_dir.display()));
    Ok(report)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentSettings {
    pub experiment: Experiment,
    pub models: Vec<(Family, bool)>,
    pub lambdas: Vec<f64>,
    pub rho_rel: f64,
    pub weight_floor: f64,
    pub root_weight: f64,
    pub rooted: bool,
    pub sigma: f64,
    pub size: (usize, usize),
    pub phantom: String,
    pub blur_sd: f64,
    pub data_seed: u64,
    pub iters: usize,
    pub burnin: usize,
    pub thin: usize,
    pub chains: usize,
    pub seed: u64,
    pub cg: CgSettings,
    pub precondition: bool,
    pub probes: usize,
    pub dump_samples: bool,
    pub out_dir: PathBuf,
}

impl ExperimentSettings {
    pub fn from_config(mut cfg: Config) -> Result<Self, CliError> {
        let experiment: Experiment = cfg.take_or("experiment", Experiment::Denoising)?;
        let families: Vec<Family> = cfg.take_list("family")?.unwrap_or_else(|| vec![Family::Gaussian]);
        let rst_values: Vec<bool> = match cfg.take_str("rst") {
            None => vec![true],
            Some(v) => v
                .split(',')
                .map(|b| crate::config::parse_bool(b).ok_or_else(|| config_err(format!("bad boolean '{b}' for 'rst'"))))
                .collect::<Result<_, _>>()?,
        };
        let lambda: Option<f64> = cfg.take("lambda")?;
        let lambdas = match (cfg.take_str("lambda_sweep"), lambda) {
            (Some(_), Some(_)) => return Err(config_err("give either lambda or lambda_sweep, not both")),
            (Some(v), None) => parse_sweep(&v)?,
            (None, Some(l)) if l > 0.0 && l.is_finite() => vec![l],
            (None, Some(l)) => return Err(config_err(format!("lambda must be positive, got {l}"))),
            (None, None) => parse_sweep(DEFAULT_LAMBDA_SWEEP)?,
        };
        let iters: usize = cfg.take_or("iters", 500)?;
        let mut cg = CgSettings {
            rel_tol: cfg.take_or("cg_tol", 1e-6)?,
            ..CgSettings::default()
        };
        cg.max_iter = cfg.take("cg_max_iter")?;
        let s = Self {
            experiment,
            models: rst_values
                .iter()
                .flat_map(|&r| families.iter().map(move |&f| (f, r)))
                .collect(),
            lambdas,
            rho_rel: cfg.take_or("rho_rel", DEFAULT_RHO_REL)?,
            weight_floor: cfg.take_or("weight_floor", 0.0)?,
            root_weight: cfg.take_or("root_weight", DEFAULT_EXPERIMENT_ROOT_WEIGHT)?,
            rooted: cfg.take_bool("rooted", true)?,
            sigma: cfg.take_or("sigma", experiment.default_sigma())?,
            size: parse_size(&cfg.take_str("size").unwrap_or_else(|| "128".into()))?,
            phantom: cfg.take_str("phantom").unwrap_or_else(|| "shapes".into()),
            blur_sd: cfg.take_or("blur_sd", DEFAULT_BLUR_SD)?,
            data_seed: cfg.take_or("data_seed", 0)?,
            iters,
            burnin: cfg.take_or("burnin", default_burn_in(iters))?,
            thin: cfg.take_or("thin", 1)?,
            chains: cfg.take_or("chains", 1)?,
            seed: cfg.take_or("seed", 0)?,
            cg,
            precondition: cfg.take_bool("precondition", false)?,
            probes: cfg.take_or("probes", rstmrf::linalg::DEFAULT_PROBES)?,
            dump_samples: cfg.take_bool("dump_samples", false)?,
            out_dir: out_dir(&mut cfg)?,
        };
        cfg.finish()?;
        if !(s.sigma > 0.0 && s.sigma.is_finite()) {
            return Err(config_err(format!("sigma must be positive, got {}", s.sigma)));
        }
        if !(s.cg.rel_tol > 0.0 && s.cg.rel_tol < 1.0) {
            return Err(config_err(format!("cg_tol must lie in (0, 1), got {}", s.cg.rel_tol)));
        }
        Ok(s)
    }

    fn chain_config(&self, family: Family, rst: bool, lambda: f64) -> Result<ChainConfig, CliError> {
        let prior = DifferencePrior::new(family, lambda, self.root_weight)?;
        let mut c = ChainConfig::new(prior, self.iters);
        c.rst = rst;
        c.rooted = self.rooted;
        c.rho_rel = if rst { self.rho_rel } else { 0.0 };
        c.weight_floor = self.weight_floor;
        c.burn_in = self.burnin;
        c.thinning = self.thin;
        c.n_chains = self.chains;
        c.seed = self.seed;
        c.conditional = ConditionalSettings {
            cg: self.cg,
            precondition: self.precondition,
            probes: self.probes,
        };
        c.keep_samples = self.dump_samples;
        c.validate()?;
        Ok(c)
    }
}

fn model_name(family: Family, rst: bool) -> String {
    if rst {
        format!("rst-{family}")
    } else {
        family.to_string()
    }
}

/// Observed data laid out on the pixel grid; unobserved pixels are zero.
fn data_image(op: &ForwardOperator, data: &[f64], h: usize, w: usize) -> Image {
    let mut pix = vec![0.0; h * w];
    match op {
        ForwardOperator::Mask(m) => m.observed().iter().zip(data).for_each(|(&i, &v)| pix[i] = v),
        _ => pix.copy_from_slice(data),
    }
    Image { height: h, width: w, data: pix }
}

pub fn run_experiment(cfg: Config) -> Result<Vec<String>, CliError> {
    let s = ExperimentSettings::from_config(cfg)?;
    let (h, w) = s.size;
    let phantom = make_phantom(&s.phantom, h, w)?;
    let op = s.experiment.operator(h, w, s.blur_sd)?;
    let problem = make_data(&phantom, op, s.sigma, &mut RngStream::new(s.data_seed))?;
    let graph = build_grid(h, w, 1.0, 0.0)?;
    // Validate every run before spending time on any of them.
    for &(family, rst) in &s.models {
        for &lambda in &s.lambdas {
            let cfg = s.chain_config(family, rst, lambda)?;
            rstmrf::GibbsSampler::new(&graph, &problem, &cfg)?;
        }
    }

    make_out_dir(&s.out_dir)?;
    save_image(&s.out_dir, "truth", &phantom.image, (0.0, 1.0))?;
    save_image(&s.out_dir, "data", &data_image(&problem.operator, &problem.data, h, w), (0.0, 1.0))?;

    let mut contrast = create(&s.out_dir.join("contrast.csv"))?;
    writeln!(
        contrast,
        "experiment,model,lambda,mean_local_contrast,mean_global_contrast,sample_local_contrast,\
         sample_global_contrast,retained,mean_cg_iterations,cg_warnings,mean_components"
    )?;
    let mut runtime = create(&s.out_dir.join("runtime.csv"))?;
    writeln!(runtime, "model,lambda,chains,iterations,wall_time_ms,ms_per_sample")?;
    let mut report = Vec::new();

    for &(family, rst) in &s.models {
        let name = model_name(family, rst);
        for (k, &lambda) in s.lambdas.iter().enumerate() {
            let cfg = s.chain_config(family, rst, lambda)?;
            let summary = run_chains(&graph, &problem, &cfg)?;
            let tag = format!("{name}_{k}");
            let mean = summary.mean_image();
            let std = summary.std_image();
            save_image(&s.out_dir, &format!("mean_{tag}"), &mean, (0.0, 1.0))?;
            save_image(&s.out_dir, &format!("std_{tag}"), &std, (0.0, std.max().max(f64::MIN_POSITIVE)))?;
            if s.dump_samples {
                let mut dw = create(&s.out_dir.join(format!("samples_{tag}.bin")))?;
                write_sample_dump(&mut dw, h, w, &summary.samples)?;
                finish(dw)?;
            }
            let (sample_local, sample_global) = summary.sample_contrasts();
            let chains = summary.chains.len() as f64;
            let cg_mean = summary.chains.iter().map(|c| c.mean_cg_iterations).sum::<f64>() / chains;
            let comp_mean = summary.chains.iter().map(|c| c.mean_components).sum::<f64>() / chains;
            writeln!(
                contrast,
                "{},{name},{lambda},{},{},{sample_local},{sample_global},{},{cg_mean},{},{comp_mean}",
                s.experiment,
                max_local_contrast(&mean),
                global_contrast(&mean),
                summary.retained,
                summary.cg_warnings(),
            )?;
            let wall: f64 = summary.chains.iter().map(|c| c.wall_time_ms).sum();
            writeln!(
                runtime,
                "{name},{lambda},{},{},{wall:.3},{:.6}",
                s.chains,
                s.iters,
                wall / (s.chains * s.iters) as f64
            )?;
            for warning in &summary.warnings {
                report.push(format!("warning [{name}, lambda {lambda}]: {warning}"));
            }
            report.push(format!(
                "{name} lambda={lambda}: global contrast {:.4}, local contrast {:.4}, {} samples",
                global_contrast(&mean),
                max_local_contrast(&mean),
                summary.retained
            ));
        }
    }
    finish(contrast)?;
    finish(runtime)?;
    report.push(format!("outputs written to {}", s.out_dir.display()));
    Ok(report)
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchmarkSettings {
    pub sizes: Vec<usize>,
    pub kappas: Vec<f64>,
    pub rho_rels: Vec<f64>,
    pub repeats: usize,
    pub seed: u64,
    pub out_dir: PathBuf,
}

impl BenchmarkSettings {
    pub fn from_config(mut cfg: Config) -> Result<Self, CliError> {
        let s = Self {
            sizes: cfg.take_list("sizes")?.unwrap_or_else(|| vec![32, 64, 128, 256]),
            kappas: cfg.take_list("kappa")?.unwrap_or_else(|| vec![1.0, 1e2, 1e4]),
            rho_rels: cfg.take_list("rho_rel")?.unwrap_or_else(|| vec![0.0, 0.1]),
            repeats: cfg.take_or("repeats", 100)?,
            seed: cfg.take_or("seed", 0)?,
            out_dir: out_dir(&mut cfg)?,
        };
        cfg.finish()?;
        if s.sizes.contains(&0) {
            return Err(config_err("grid sizes must be positive"));
        }
        if s.kappas.iter().any(|k| !(*k > 0.0 && k.is_finite())) {
            return Err(config_err("kappa values must be positive"));
        }
        Ok(s)
    }
}

pub fn benchmark_trees(cfg: Config) -> Result<Vec<String>, CliError> {
    let s = BenchmarkSettings::from_config(cfg)?;
    let rows = benchmark_tree_runtime(&s.sizes, &s.kappas, &s.rho_rels, s.repeats, s.seed)?;
    make_out_dir(&s.out_dir)?;
    let mut w = create(&s.out_dir.join("tree_benchmark.csv"))?;
    write_benchmark_csv(&mut w, &rows)?;
    finish(w)?;
    let mut w = create(&s.out_dir.join("tree_timing.csv"))?;
    write_timing_csv(&mut w, &rows)?;
    finish(w)?;

    let mut report = Vec::new();
    for &kappa in &s.kappas {
        for &rho in &s.rho_rels {
            let sel: Vec<_> = rows.iter().filter(|r| r.kappa == kappa && r.rho_rel == rho).collect();
            if sel.len() < 2 {
                continue;
            }
            let v: Vec<f64> = sel.iter().map(|r| (r.grid_size * r.grid_size) as f64).collect();
            let st: Vec<f64> = sel.iter().map(|r| r.mean_steps).collect();
            report.push(format!(
                "kappa={kappa} rho_rel={rho}: log-log slope of steps vs |V| = {:.3}",
                log_log_slope(&v, &st)
            ));
        }
    }
    report.push(format!("wrote {} rows to {}", rows.len(), s.out_dir.join("tree_benchmark.csv").display()));
    Ok(report)
}
