//! Error metrics of trained subdomain networks on uniform masked grids.

use crate::geometry::{GeometryError, Partition};
use crate::net::{Mlp, Point};
use crate::problems::ProblemSpec;

/// Grid points of each subdomain: a uniform `resolution x resolution`
/// lattice over the region's bounding box, keeping those inside the region.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalGrid {
    pub resolution: usize,
    pub points: Vec<Vec<Point>>,
}

impl EvalGrid {
    pub fn new(partition: &Partition, resolution: usize) -> Result<Self, GeometryError> {
        if resolution < 2 {
            return Err(GeometryError::InvalidConfig(format!(
                "evaluation grid resolution must be at least 2, got {resolution}"
            )));
        }
        let step = 1.0 / (resolution - 1) as f64;
        let mut points = Vec::with_capacity(partition.len());
        for sub in &partition.subdomains {
            let bbox = sub.region.bounding_box();
            let mut inside = Vec::new();
            for iy in 0..resolution {
                let y = bbox.min[1] + (bbox.max[1] - bbox.min[1]) * (iy as f64 * step);
                for ix in 0..resolution {
                    let x = bbox.min[0] + (bbox.max[0] - bbox.min[0]) * (ix as f64 * step);
                    if sub.region.contains([x, y]) {
                        inside.push([x, y]);
                    }
                }
            }
            if inside.is_empty() {
                return Err(GeometryError::InvalidGeometry(format!(
                    "subdomain {} has no evaluation points",
                    sub.id
                )));
            }
            points.push(inside);
        }
        Ok(Self { resolution, points })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubdomainError {
    pub subdomain: usize,
    /// `||u - u_hat||_2 / ||u||_2` over the grid points
    pub rel_l2: f64,
    /// `max |u - u_hat|` over the grid points
    pub max_abs: f64,
    pub alpha: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ErrorReport {
    pub subdomains: Vec<SubdomainError>,
    pub max_rel_l2: f64,
    pub max_abs: f64,
    pub wall_seconds: f64,
}

impl ErrorReport {
    pub fn from_subdomains(subdomains: Vec<SubdomainError>) -> Self {
        let max_rel_l2 = subdomains.iter().map(|s| s.rel_l2).fold(0.0, f64::max);
        let max_abs = subdomains.iter().map(|s| s.max_abs).fold(0.0, f64::max);
        Self {
            subdomains,
            max_rel_l2,
            max_abs,
            wall_seconds: 0.0,
        }
    }
}

/// Errors of one subdomain's predictions against the exact solution.
pub fn subdomain_error(subdomain: usize, exact: &[f64], predicted: &[f64], alpha: f64) -> SubdomainError {
    let (mut diff2, mut ref2, mut max_abs) = (0.0, 0.0, 0.0f64);
    for (u, v) in exact.iter().zip(predicted) {
        let d = u - v;
        diff2 += d * d;
        ref2 += u * u;
        max_abs = max_abs.max(d.abs());
    }
    let rel_l2 = if ref2 > 0.0 {
        (diff2 / ref2).sqrt()
    } else {
        diff2.sqrt()
    };
    SubdomainError {
        subdomain,
        rel_l2,
        max_abs,
        alpha,
    }
}

/// Evaluates `nets[k]` on subdomain `k`'s grid points.
pub fn compute_errors(nets: &[(&Mlp, f64)], problem: &ProblemSpec, grid: &EvalGrid) -> ErrorReport {
    assert_eq!(nets.len(), grid.points.len(), "one network per subdomain");
    let subdomains = nets
        .iter()
        .zip(&grid.points)
        .enumerate()
        .map(|(k, ((net, alpha), points))| {
            let exact: Vec<f64> = points.iter().map(|&p| problem.exact(p)).collect();
            subdomain_error(k, &exact, &net.values(points), *alpha)
        })
        .collect();
    ErrorReport::from_subdomains(subdomains)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{make_cartesian_partition, Rect};
    use ndarray::Array2;

    fn constant_net(c: f64) -> Mlp {
        Mlp::from_layers(vec![(Array2::zeros((1, 2)), vec![c])]).unwrap()
    }

    #[test]
    fn grid_covers_closed_box() {
        let p = make_cartesian_partition(Rect::new([-1.0, -1.0], [1.0, 1.0]), 2, 1).unwrap();
        let g = EvalGrid::new(&p, 101).unwrap();
        assert_eq!(g.points[0].len(), 101 * 101);
        assert!(g.points[0].contains(&[0.0, 1.0]));
    }

    #[test]
    fn exact_prediction_has_zero_error() {
        let e = subdomain_error(0, &[1.0, -2.0], &[1.0, -2.0], 0.5);
        assert_eq!((e.rel_l2, e.max_abs), (0.0, 0.0));
    }

    #[test]
    fn constant_offset_max_error() {
        // the Poisson solution vanishes on the boundary, so a constant
        // network c has max error max|u - c| = 1 + c on the box
        let p = make_cartesian_partition(Rect::new([-1.0, -1.0], [1.0, 1.0]), 1, 1).unwrap();
        let g = EvalGrid::new(&p, 21).unwrap();
        let problem = ProblemSpec::poisson_manufactured();
        let exact: Vec<f64> = g.points[0].iter().map(|&q| problem.exact(q)).collect();
        let shifted: Vec<f64> = exact.iter().map(|u| u + 0.01).collect();
        let e = subdomain_error(0, &exact, &shifted, 0.5);
        assert!((e.max_abs - 0.01).abs() < 1e-15);

        let net = constant_net(0.0);
        let r = compute_errors(&[(&net, 0.5)], &problem, &g);
        assert!((r.max_rel_l2 - 1.0).abs() < 1e-15);
        assert!((r.max_abs - 1.0).abs() < 1e-12);
    }
}
