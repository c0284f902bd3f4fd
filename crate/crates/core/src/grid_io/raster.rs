use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gauss2::{SampleSet, SymMat2, Vec2};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridSpec {
    pub min: Vec2,
    pub max: Vec2,
    pub width: usize,
    pub height: usize,
}

impl GridSpec {
    pub fn new(min: Vec2, max: Vec2, width: usize, height: usize) -> Result<Self> {
        let spec = GridSpec {
            min,
            max,
            width,
            height,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.min.is_finite() && self.max.is_finite()) {
            return Err(Error::InvalidConfig("grid bounds must be finite".into()));
        }
        if !(self.max.x > self.min.x && self.max.y > self.min.y) {
            return Err(Error::InvalidConfig(format!(
                "grid max ({}, {}) must exceed min ({}, {})",
                self.max.x, self.max.y, self.min.x, self.min.y
            )));
        }
        if self.width < 2 || self.height < 2 {
            return Err(Error::InvalidConfig(format!(
                "grid must be at least 2x2, got {}x{}",
                self.width, self.height
            )));
        }
        Ok(())
    }

    pub fn cell_size(&self) -> Vec2 {
        Vec2::new(
            (self.max.x - self.min.x) / self.width as f64,
            (self.max.y - self.min.y) / self.height as f64,
        )
    }

    pub fn cell_area(&self) -> f64 {
        let c = self.cell_size();
        c.x * c.y
    }

    /// Center of cell (`col`, `row`); row 0 is at `min.y`.
    pub fn cell_center(&self, col: usize, row: usize) -> Vec2 {
        let c = self.cell_size();
        Vec2::new(
            self.min.x + (col as f64 + 0.5) * c.x,
            self.min.y + (row as f64 + 0.5) * c.y,
        )
    }
}

/// Samples' bounding box grown by three times the largest standard deviation
/// among `covariances`.
pub fn default_spec(
    samples: &SampleSet,
    covariances: impl IntoIterator<Item = SymMat2>,
    width: usize,
    height: usize,
) -> Result<GridSpec> {
    let largest = covariances
        .into_iter()
        .map(|c| c.eigen().major)
        .fold(0.0, f64::max);
    let mut margin = 3.0 * largest.sqrt();
    if !(margin > 0.0) {
        margin = 0.5 * samples.diagonal().max(1.0);
    }
    let pad = Vec2::new(margin, margin);
    GridSpec::new(samples.min() - pad, samples.max() + pad, width, height)
}

#[derive(Clone, Debug, PartialEq)]
pub struct DensityGrid {
    pub spec: GridSpec,
    /// Row-major, row 0 at `min.y`.
    pub values: Vec<f64>,
}

impl DensityGrid {
    pub fn get(&self, col: usize, row: usize) -> f64 {
        self.values[row * self.spec.width + col]
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }
}

/// Evaluates `density` at every cell center.
pub fn rasterize<F>(density: F, spec: &GridSpec) -> Result<DensityGrid>
where
    F: Fn(Vec2) -> Result<f64> + Sync,
{
    spec.validate()?;
    let rows = (0..spec.height)
        .into_par_iter()
        .map(|row| {
            (0..spec.width)
                .map(|col| {
                    let value = density(spec.cell_center(col, row))?;
                    if !value.is_finite() || value < 0.0 {
                        return Err(Error::NonFiniteCell { col, row, value });
                    }
                    Ok(value)
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DensityGrid {
        spec: *spec,
        values: rows.into_iter().flatten().collect(),
    })
}

/// Riemann sum of the grid: `Σ values × cell area`.
pub fn grid_mass(grid: &DensityGrid) -> f64 {
    grid.values.iter().sum::<f64>() * grid.spec.cell_area()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gauss2::{gauss_pdf, mixture_pdf, GaussComponent, MixtureModel};

    fn unit_box(w: usize, h: usize) -> GridSpec {
        GridSpec::new(Vec2::ZERO, Vec2::new(1.0, 1.0), w, h).unwrap()
    }

    #[test]
    fn constant_density() {
        let g = rasterize(|_| Ok(3.5), &unit_box(7, 5)).unwrap();
        assert!(g.values.iter().all(|&v| v == 3.5));
        let one = rasterize(|_| Ok(1.0), &unit_box(16, 16)).unwrap();
        assert!((grid_mass(&one) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn half_box_of_two() {
        let g = rasterize(|p| Ok(if p.x < 0.5 { 2.0 } else { 0.0 }), &unit_box(10, 10)).unwrap();
        assert!((grid_mass(&g) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gaussian_peak_at_center_cell() {
        let spec = GridSpec::new(Vec2::new(-5.0, -5.0), Vec2::new(5.0, 5.0), 101, 101).unwrap();
        let g = rasterize(|p| gauss_pdf(p, Vec2::ZERO, SymMat2::IDENTITY), &spec).unwrap();
        let (idx, &peak) = g
            .values
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap();
        assert_eq!((idx % 101, idx / 101), (50, 50));
        assert!((peak - 1.0 / (2.0 * std::f64::consts::PI)).abs() < 1e-15);
    }

    #[test]
    fn mixture_mass_is_one() {
        let model = MixtureModel::new(vec![
            GaussComponent::new(0.3, Vec2::new(0.2, 0.1), SymMat2::new(0.04, 0.01, 0.02)),
            GaussComponent::new(0.7, Vec2::new(0.7, 0.6), SymMat2::new(0.01, -0.004, 0.03)),
        ])
        .unwrap();
        let pts = SampleSet::new(vec![Vec2::new(0.2, 0.1), Vec2::new(0.7, 0.6)]).unwrap();
        let spec = default_spec(&pts, model.components.iter().map(|c| c.cov), 256, 256).unwrap();
        let g = rasterize(|p| mixture_pdf(&model, p), &spec).unwrap();
        assert!((grid_mass(&g) - 1.0).abs() < 0.02, "{}", grid_mass(&g));
    }

    #[test]
    fn invalid_specs_and_values() {
        assert!(GridSpec::new(Vec2::ZERO, Vec2::new(1.0, 1.0), 1, 4).is_err());
        assert!(GridSpec::new(Vec2::ZERO, Vec2::new(0.0, 1.0), 4, 4).is_err());
        let err = rasterize(|p| Ok(if p.x > 0.9 { f64::NAN } else { 1.0 }), &unit_box(10, 3)).unwrap_err();
        assert!(matches!(err, Error::NonFiniteCell { col: 9, row: 0, .. }));
    }
}
