//! Densities of constrained parameters implied by a Gaussian on the
//! unconstrained scale, checked to integrate to one.

use emgvb::models::density::{marginal_density, marginal_grid};
use emgvb::models::{CoordTransform, ParamTransform, VolatilityModel, VolatilitySpec, Model};
use emgvb::{PosteriorStructure, VariationalState};
use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
    x.windows(2).zip(y.windows(2)).map(|(a, b)| (a[1] - a[0]) * (b[0] + b[1]) / 2.0).sum()
}

fn report(label: &str, state: &VariationalState, transform: &ParamTransform) -> emgvb::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for i in 0..state.dim() {
        let grid = marginal_grid(state, transform, i, 2000, &mut rng)?;
        let dens = marginal_density(state, transform, i, &grid, &mut rng)?;
        let (mode, _) = grid
            .iter()
            .zip(&dens)
            .fold((f64::NAN, f64::NEG_INFINITY), |acc, (&g, &f)| if f > acc.1 { (g, f) } else { acc });
        println!(
            "{label} {i}: support [{:.4}, {:.4}], mode {mode:.4}, integral {:.4}",
            grid[0],
            grid[grid.len() - 1],
            trapezoid(&grid, &dens)
        );
    }
    Ok(())
}

fn main() -> emgvb::Result<()> {
    let state = VariationalState::isotropic(DVector::from_vec(vec![0.0, -1.0, 1.5]), 0.2, PosteriorStructure::Full)?;
    let coords = ParamTransform::Coordinatewise(vec![
        CoordTransform::Exp,
        CoordTransform::Sigmoid,
        CoordTransform::Interval { lo: -1.0, hi: 1.0 },
    ]);
    report("coordinatewise", &state, &coords)?;

    // GARCH maps jointly onto the stationarity region, so marginals are kernel estimates.
    let model = VolatilityModel::new(VolatilitySpec::garch(), vec![0.1, -0.2, 0.05, 0.3])?;
    report("garch", &state, &model.transform())?;
    Ok(())
}
