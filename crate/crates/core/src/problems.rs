//! PDE definitions with manufactured solutions, and the inverse variants
//! that swap a subdomain's boundary data for interior measurements.

use std::f64::consts::PI;

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{sample_region, stream_rng, Partition};
use crate::net::{JetEval, Point};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProblemError {
    #[error("designated subdomain {id} out of range for a partition of {count}")]
    SubdomainOutOfRange { id: usize, count: usize },
    #[error("invalid measurement setup: {0}")]
    InvalidMeasurements(String),
    #[error(transparent)]
    Geometry(#[from] crate::geometry::GeometryError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum PdeKind {
    /// `lap(u) = s`
    Poisson,
    /// `lap(u) + k^2 u = s`
    Helmholtz { wavenumber: f64 },
}

impl PdeKind {
    fn k2(&self) -> f64 {
        match self {
            PdeKind::Poisson => 0.0,
            PdeKind::Helmholtz { wavenumber } => wavenumber * wavenumber,
        }
    }
}

/// Closed-form solutions with hand-derived derivatives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Manufactured {
    /// `sin(pi x / 2 - pi / 2) sin(pi y / 2 - pi / 2)`
    PoissonSine,
    /// `sin(pi x) cos(pi y / 2)`
    HelmholtzSine,
}

impl Manufactured {
    pub fn value(&self, p: Point) -> f64 {
        let [x, y] = p;
        match self {
            Manufactured::PoissonSine => {
                let a = PI / 2.0;
                (a * x - a).sin() * (a * y - a).sin()
            }
            Manufactured::HelmholtzSine => (PI * x).sin() * (PI * y / 2.0).cos(),
        }
    }

    pub fn jet(&self, p: Point) -> JetEval {
        let [x, y] = p;
        match self {
            Manufactured::PoissonSine => {
                let a = PI / 2.0;
                let (sx, cx) = (a * x - a).sin_cos();
                let (sy, cy) = (a * y - a).sin_cos();
                let u = sx * sy;
                JetEval {
                    value: u,
                    grad: [a * cx * sy, a * sx * cy],
                    hess_diag: [-a * a * u, -a * a * u],
                    cross: a * a * cx * cy,
                }
            }
            Manufactured::HelmholtzSine => {
                let (sx, cx) = (PI * x).sin_cos();
                let (sy, cy) = (PI * y / 2.0).sin_cos();
                let u = sx * cy;
                JetEval {
                    value: u,
                    grad: [PI * cx * cy, -PI / 2.0 * sx * sy],
                    hess_diag: [-PI * PI * u, -PI * PI / 4.0 * u],
                    cross: -PI * PI / 2.0 * cx * sy,
                }
            }
        }
    }

    /// `c` in `lap(u) = c u`.
    fn laplacian_factor(&self) -> f64 {
        match self {
            Manufactured::PoissonSine => -PI * PI / 2.0,
            Manufactured::HelmholtzSine => -5.0 * PI * PI / 4.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MeasurementSet {
    pub points: Vec<Point>,
    pub values: Vec<f64>,
}

impl MeasurementSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// What a subdomain knows besides the PDE.
#[derive(Debug, Clone, PartialEq)]
pub struct SubdomainData {
    pub has_boundary_data: bool,
    pub measurements: MeasurementSet,
}

impl Default for SubdomainData {
    fn default() -> Self {
        Self {
            has_boundary_data: true,
            measurements: MeasurementSet::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSpec {
    pub kind: PdeKind,
    pub exact: Manufactured,
    /// Per-subdomain overrides; subdomains past the end use the default
    /// (boundary data, no measurements).
    pub subdomains: Vec<SubdomainData>,
}

impl ProblemSpec {
    pub fn poisson_manufactured() -> Self {
        Self {
            kind: PdeKind::Poisson,
            exact: Manufactured::PoissonSine,
            subdomains: Vec::new(),
        }
    }

    pub fn helmholtz_manufactured(wavenumber: f64) -> Self {
        Self {
            kind: PdeKind::Helmholtz { wavenumber },
            exact: Manufactured::HelmholtzSine,
            subdomains: Vec::new(),
        }
    }

    pub fn exact(&self, p: Point) -> f64 {
        self.exact.value(p)
    }

    pub fn source(&self, p: Point) -> f64 {
        (self.exact.laplacian_factor() + self.kind.k2()) * self.exact.value(p)
    }

    /// Dirichlet data on the physical boundary.
    pub fn boundary(&self, p: Point) -> f64 {
        self.exact.value(p)
    }

    /// PDE residual of `jet` evaluated at `point`.
    pub fn residual(&self, jet: &JetEval, point: Point) -> f64 {
        jet.laplacian() + self.kind.k2() * jet.value - self.source(point)
    }

    /// `d residual / d u` (the Laplacian coefficient is 1).
    pub fn residual_value_coefficient(&self) -> f64 {
        self.kind.k2()
    }

    pub fn subdomain(&self, id: usize) -> SubdomainData {
        self.subdomains.get(id).cloned().unwrap_or_default()
    }

    pub fn has_boundary_data(&self, id: usize) -> bool {
        self.subdomains.get(id).is_none_or(|d| d.has_boundary_data)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum InverseCase {
    /// Bottom-right subdomain loses its boundary data and gets measurements.
    MissingBoundary,
    /// Bottom-left subdomain loses its boundary data and keeps only a few
    /// measurements.
    SparseData,
}

impl InverseCase {
    /// Subdomain id in the row-major 2x2 layout.
    pub fn designated_subdomain(&self) -> usize {
        match self {
            InverseCase::MissingBoundary => 1,
            InverseCase::SparseData => 0,
        }
    }

    pub fn default_measurements(&self) -> usize {
        match self {
            InverseCase::MissingBoundary => 128,
            InverseCase::SparseData => 32,
        }
    }
}

const MEASUREMENT_STREAM: u64 = 0x4000;

/// Drops the designated subdomain's boundary constraint and places
/// `n_meas` measurements of the exact solution (plus optional Gaussian noise
/// of standard deviation `noise_sigma`) inside it.
pub fn make_inverse_case(
    spec: &ProblemSpec,
    case: InverseCase,
    partition: &Partition,
    n_meas: usize,
    noise_sigma: f64,
    seed: u64,
) -> Result<ProblemSpec, ProblemError> {
    make_inverse_case_at(spec, case.designated_subdomain(), partition, n_meas, noise_sigma, seed)
}

pub fn make_inverse_case_at(
    spec: &ProblemSpec,
    designated: usize,
    partition: &Partition,
    n_meas: usize,
    noise_sigma: f64,
    seed: u64,
) -> Result<ProblemSpec, ProblemError> {
    if designated >= partition.len() {
        return Err(ProblemError::SubdomainOutOfRange {
            id: designated,
            count: partition.len(),
        });
    }
    if n_meas == 0 {
        return Err(ProblemError::InvalidMeasurements(
            "need at least one measurement".into(),
        ));
    }
    if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
        return Err(ProblemError::InvalidMeasurements(format!("noise sigma {noise_sigma}")));
    }
    let mut rng = stream_rng(seed, MEASUREMENT_STREAM + designated as u64);
    let region = &partition.subdomains[designated].region;
    let points = sample_region(region, n_meas, &mut rng, designated)?;
    let mut values: Vec<f64> = points.iter().map(|&p| spec.exact(p)).collect();
    if noise_sigma > 0.0 {
        let noise = Normal::new(0.0, noise_sigma).expect("validated sigma");
        for v in &mut values {
            *v += noise.sample(&mut rng);
        }
    }
    let mut out = spec.clone();
    if out.subdomains.len() < partition.len() {
        out.subdomains.resize(partition.len(), SubdomainData::default());
    }
    out.subdomains[designated] = SubdomainData {
        has_boundary_data: false,
        measurements: MeasurementSet { points, values },
    };
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{make_cartesian_partition, Rect};

    fn unit_box() -> Rect {
        Rect::new([-1.0, -1.0], [1.0, 1.0])
    }

    #[test]
    fn poisson_reference_values() {
        let spec = ProblemSpec::poisson_manufactured();
        assert_eq!(spec.exact([1.0, 1.0]), 0.0);
        assert!((spec.exact([0.0, 0.0]) - 1.0).abs() < 1e-15);
        assert!((spec.source([0.0, 0.0]) + PI * PI / 2.0).abs() < 1e-12);
        assert!((spec.source([0.0, 0.0]) + 4.934802).abs() < 1e-6);
    }

    #[test]
    fn helmholtz_reference_values() {
        let spec = ProblemSpec::helmholtz_manufactured(1.0);
        assert!((spec.exact([0.5, 0.0]) - 1.0).abs() < 1e-15);
        assert_eq!(spec.exact([0.0, 0.37]), 0.0);
        let expected = 1.0 - 5.0 * PI * PI / 4.0;
        assert!((spec.source([0.5, 0.0]) - expected).abs() < 1e-12);
        assert!((spec.source([0.5, 0.0]) + 11.3371).abs() < 1e-4);
    }

    #[test]
    fn exact_jet_has_zero_residual() {
        for spec in [
            ProblemSpec::poisson_manufactured(),
            ProblemSpec::helmholtz_manufactured(2.5),
        ] {
            let p = [0.3, -0.7];
            let jet = spec.exact.jet(p);
            assert!(spec.residual(&jet, p).abs() < 1e-8);
        }
    }

    #[test]
    fn inverse_case_one_drops_boundary_and_adds_measurements() {
        let part = make_cartesian_partition(unit_box(), 2, 2).unwrap();
        let spec = ProblemSpec::poisson_manufactured();
        let inv = make_inverse_case(&spec, InverseCase::MissingBoundary, &part, 128, 0.0, 7).unwrap();
        let d = inv.subdomain(1);
        assert!(!d.has_boundary_data);
        assert_eq!(d.measurements.len(), 128);
        for (p, v) in d.measurements.points.iter().zip(&d.measurements.values) {
            assert_eq!(*v, spec.exact(*p));
        }
        assert!(inv.has_boundary_data(0) && inv.has_boundary_data(2) && inv.has_boundary_data(3));
    }

    #[test]
    fn inverse_case_two_points_stay_inside() {
        let part = make_cartesian_partition(unit_box(), 2, 2).unwrap();
        let spec = ProblemSpec::poisson_manufactured();
        let inv = make_inverse_case(&spec, InverseCase::SparseData, &part, 32, 0.0, 7).unwrap();
        let d = inv.subdomain(0);
        assert_eq!(d.measurements.len(), 32);
        // containment oracle independent of the region predicate
        for p in &d.measurements.points {
            assert!(p[0] > -1.0 && p[0] < 0.0 && p[1] > -1.0 && p[1] < 0.0, "{p:?}");
        }
    }

    #[test]
    fn noisy_measurements_differ_from_exact() {
        let part = make_cartesian_partition(unit_box(), 2, 2).unwrap();
        let spec = ProblemSpec::poisson_manufactured();
        let inv = make_inverse_case(&spec, InverseCase::SparseData, &part, 64, 0.05, 1).unwrap();
        let d = inv.subdomain(0);
        let rms = (d
            .measurements
            .points
            .iter()
            .zip(&d.measurements.values)
            .map(|(p, v)| (v - spec.exact(*p)).powi(2))
            .sum::<f64>()
            / 64.0)
            .sqrt();
        assert!(rms > 0.01 && rms < 0.1, "rms {rms}");
    }

    #[test]
    fn designated_subdomain_out_of_range() {
        let part = make_cartesian_partition(unit_box(), 1, 1).unwrap();
        let spec = ProblemSpec::poisson_manufactured();
        assert!(matches!(
            make_inverse_case(&spec, InverseCase::MissingBoundary, &part, 8, 0.0, 0),
            Err(ProblemError::SubdomainOutOfRange { id: 1, count: 1 })
        ));
    }
}
