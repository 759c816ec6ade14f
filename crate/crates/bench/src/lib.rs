//! Fixtures shared by the benchmarks.

use rstmrf::{build_grid, make_data, make_phantom, Experiment, GridGraph, LinearProblem, Result, RngStream};

/// `n`×`n` grid with vertical weight 1 and horizontal weight `kappa`.
pub fn anisotropic_grid(n: usize, kappa: f64) -> Result<GridGraph> {
    GridGraph::lattice(n, n, |horizontal| if horizontal { kappa } else { 1.0 }, 0.0)
}

/// A `size`×`size` problem on the "shapes" phantom with the experiment's
/// default noise level and a fixed data seed.
pub fn problem(experiment: Experiment, size: usize) -> Result<(GridGraph, LinearProblem)> {
    let phantom = make_phantom("shapes", size, size)?;
    let op = experiment.operator(size, size, rstmrf::forward::DEFAULT_BLUR_SD)?;
    let problem = make_data(&phantom, op, experiment.default_sigma(), &mut RngStream::new(0))?;
    Ok((build_grid(size, size, 1.0, 0.0)?, problem))
}
