//! Subdomain layouts, interfaces with oriented normals, and collocation
//! point sampling.

use std::f64::consts::TAU;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::net::Point;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("invalid partition config: {0}")]
    InvalidConfig(String),
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),
    #[error("region of subdomain {subdomain} is degenerate: acceptance ratio {ratio:.2e} after {attempts} draws")]
    DegenerateRegion {
        subdomain: usize,
        ratio: f64,
        attempts: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub min: Point,
    pub max: Point,
}

impl Rect {
    pub fn new(min: Point, max: Point) -> Self {
        Self { min, max }
    }

    pub fn contains(&self, p: Point) -> bool {
        (self.min[0]..=self.max[0]).contains(&p[0]) && (self.min[1]..=self.max[1]).contains(&p[1])
    }

    fn contains_strict(&self, p: Point) -> bool {
        p[0] > self.min[0] && p[0] < self.max[0] && p[1] > self.min[1] && p[1] < self.max[1]
    }

    pub fn area(&self) -> f64 {
        (self.max[0] - self.min[0]) * (self.max[1] - self.min[1])
    }
}

/// Star-shaped closed curve `r = rho(theta)` with
/// `rho(theta) = base + amplitude * sin(sin_freq * theta) * cos(cos_freq * theta)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolarCurve {
    pub base: f64,
    pub amplitude: f64,
    pub sin_freq: f64,
    pub cos_freq: f64,
}

impl PolarCurve {
    pub fn circle(radius: f64) -> Self {
        Self {
            base: radius,
            amplitude: 0.0,
            sin_freq: 0.0,
            cos_freq: 0.0,
        }
    }

    /// Outer boundary of the complex-domain benchmark, `2 + sin(2t) cos(2t)`.
    pub fn complex_boundary() -> Self {
        Self {
            base: 2.0,
            amplitude: 1.0,
            sin_freq: 2.0,
            cos_freq: 2.0,
        }
    }

    /// Interface of the complex-domain benchmark, `1 + 0.5 cos(4t) sin(6t)`.
    pub fn complex_interface() -> Self {
        Self {
            base: 1.0,
            amplitude: 0.5,
            sin_freq: 6.0,
            cos_freq: 4.0,
        }
    }

    pub fn radius(&self, theta: f64) -> f64 {
        self.base + self.amplitude * (self.sin_freq * theta).sin() * (self.cos_freq * theta).cos()
    }

    pub fn radius_derivative(&self, theta: f64) -> f64 {
        let (m, n) = (self.sin_freq, self.cos_freq);
        self.amplitude * (m * (m * theta).cos() * (n * theta).cos() - n * (m * theta).sin() * (n * theta).sin())
    }

    pub fn point(&self, theta: f64) -> Point {
        let r = self.radius(theta);
        [r * theta.cos(), r * theta.sin()]
    }

    /// Unit normal pointing away from the enclosed region: the tangent
    /// `(x'(t), y'(t))` rotated by -90 degrees.
    pub fn outward_normal(&self, theta: f64) -> Point {
        let (r, dr) = (self.radius(theta), self.radius_derivative(theta));
        let (s, c) = theta.sin_cos();
        let tx = dr * c - r * s;
        let ty = dr * s + r * c;
        let norm = tx.hypot(ty);
        [ty / norm, -tx / norm]
    }

    /// Signed radial distance of `p` from the curve (positive outside).
    pub fn radial_residual(&self, p: Point) -> f64 {
        p[0].hypot(p[1]) - self.radius(polar_angle(p))
    }

    fn max_radius_bound(&self) -> f64 {
        self.base + self.amplitude.abs()
    }
}

fn polar_angle(p: Point) -> f64 {
    let t = p[1].atan2(p[0]);
    if t < 0.0 {
        t + TAU
    } else {
        t
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Region {
    Rect(Rect),
    /// Points enclosed by a polar curve.
    Inside(PolarCurve),
    /// Points between an inner and an outer polar curve.
    Between {
        inner: PolarCurve,
        outer: PolarCurve,
    },
}

impl Region {
    /// Closed membership (boundary included).
    pub fn contains(&self, p: Point) -> bool {
        match self {
            Region::Rect(r) => r.contains(p),
            Region::Inside(c) => c.radial_residual(p) <= 0.0,
            Region::Between { inner, outer } => inner.radial_residual(p) >= 0.0 && outer.radial_residual(p) <= 0.0,
        }
    }

    /// Open membership (boundary excluded).
    pub fn interior(&self, p: Point) -> bool {
        match self {
            Region::Rect(r) => r.contains_strict(p),
            Region::Inside(c) => c.radial_residual(p) < 0.0,
            Region::Between { inner, outer } => inner.radial_residual(p) > 0.0 && outer.radial_residual(p) < 0.0,
        }
    }

    pub fn bounding_box(&self) -> Rect {
        match self {
            Region::Rect(r) => *r,
            Region::Inside(c) | Region::Between { outer: c, .. } => {
                let m = c.max_radius_bound();
                Rect::new([-m, -m], [m, m])
            }
        }
    }
}

/// Boundary piece: a straight segment or a closed polar curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Curve {
    Segment { start: Point, end: Point },
    Polar(PolarCurve),
}

impl Curve {
    /// `|residual|` of the defining equation at `p`.
    pub fn residual(&self, p: Point) -> f64 {
        match self {
            Curve::Segment { start, end } => {
                let d = [end[0] - start[0], end[1] - start[1]];
                let len2 = d[0] * d[0] + d[1] * d[1];
                let t = ((p[0] - start[0]) * d[0] + (p[1] - start[1]) * d[1]) / len2;
                let t = t.clamp(0.0, 1.0);
                let q = [start[0] + t * d[0], start[1] + t * d[1]];
                (p[0] - q[0]).hypot(p[1] - q[1])
            }
            Curve::Polar(c) => c.radial_residual(p).abs(),
        }
    }

    /// Draws `count` points with their unit normals (oriented as the curve's
    /// reference normal: left-to-right / bottom-to-top for segments, outward
    /// for polar curves). Segments always include both endpoints when
    /// `count >= 2`.
    fn sample(&self, count: usize, rng: &mut ChaCha8Rng) -> (Vec<Point>, Vec<Point>) {
        match self {
            Curve::Segment { start, end } => {
                let d = [end[0] - start[0], end[1] - start[1]];
                let len = d[0].hypot(d[1]);
                // rotate tangent by -90 degrees: (dx, dy) -> (dy, -dx)
                let normal = [d[1] / len, -d[0] / len];
                let at = |t: f64| [start[0] + t * d[0], start[1] + t * d[1]];
                let mut pts = Vec::with_capacity(count);
                if count >= 2 {
                    pts.push(*start);
                    pts.push(*end);
                }
                while pts.len() < count {
                    pts.push(at(rng.random::<f64>()));
                }
                let normals = vec![normal; pts.len()];
                (pts, normals)
            }
            Curve::Polar(c) => (0..count)
                .map(|_| {
                    let theta = rng.random::<f64>() * TAU;
                    (c.point(theta), c.outward_normal(theta))
                })
                .unzip(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Subdomain {
    pub id: usize,
    pub region: Region,
    /// Pieces of the physical boundary owned by this subdomain.
    pub boundary: Vec<Curve>,
}

/// Shared edge between two subdomains. The reference normal points from
/// `first` into `second`.
#[derive(Debug, Clone, PartialEq)]
pub struct Interface {
    pub id: usize,
    pub first: usize,
    pub second: usize,
    pub curve: Curve,
    /// Sign applied to the curve's own sampled normal to obtain the
    /// `first -> second` normal.
    orientation: f64,
}

impl Interface {
    pub fn other(&self, subdomain: usize) -> Option<usize> {
        if subdomain == self.first {
            Some(self.second)
        } else if subdomain == self.second {
            Some(self.first)
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    pub subdomains: Vec<Subdomain>,
    pub interfaces: Vec<Interface>,
}

impl Partition {
    pub fn len(&self) -> usize {
        self.subdomains.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subdomains.is_empty()
    }

    /// Interfaces touching `subdomain`, in interface order.
    pub fn interfaces_of(&self, subdomain: usize) -> impl Iterator<Item = &Interface> {
        self.interfaces
            .iter()
            .filter(move |i| i.first == subdomain || i.second == subdomain)
    }
}

/// Tiles `domain` with `nx * ny` boxes, numbered row-major from the
/// bottom-left (`id = iy * nx + ix`).
pub fn make_cartesian_partition(domain: Rect, nx: usize, ny: usize) -> Result<Partition, GeometryError> {
    if nx == 0 || ny == 0 {
        return Err(GeometryError::InvalidConfig(format!(
            "need at least one subdomain per direction, got {nx} x {ny}"
        )));
    }
    if !(domain.max[0] > domain.min[0] && domain.max[1] > domain.min[1]) {
        return Err(GeometryError::InvalidConfig(format!("empty domain {domain:?}")));
    }
    let xs: Vec<f64> = (0..=nx)
        .map(|i| domain.min[0] + (domain.max[0] - domain.min[0]) * i as f64 / nx as f64)
        .collect();
    let ys: Vec<f64> = (0..=ny)
        .map(|j| domain.min[1] + (domain.max[1] - domain.min[1]) * j as f64 / ny as f64)
        .collect();
    let id = |ix: usize, iy: usize| iy * nx + ix;

    let mut subdomains = Vec::with_capacity(nx * ny);
    let mut interfaces = Vec::new();
    for iy in 0..ny {
        for ix in 0..nx {
            let (x0, x1, y0, y1) = (xs[ix], xs[ix + 1], ys[iy], ys[iy + 1]);
            let mut boundary = Vec::new();
            if iy == 0 {
                boundary.push(Curve::Segment {
                    start: [x0, y0],
                    end: [x1, y0],
                });
            }
            if ix == nx - 1 {
                boundary.push(Curve::Segment {
                    start: [x1, y0],
                    end: [x1, y1],
                });
            }
            if iy == ny - 1 {
                boundary.push(Curve::Segment {
                    start: [x0, y1],
                    end: [x1, y1],
                });
            }
            if ix == 0 {
                boundary.push(Curve::Segment {
                    start: [x0, y0],
                    end: [x0, y1],
                });
            }
            subdomains.push(Subdomain {
                id: id(ix, iy),
                region: Region::Rect(Rect::new([x0, y0], [x1, y1])),
                boundary,
            });
            // segment normals are (dy, -dx)/len: a bottom-to-top segment
            // yields +x, a left-to-right segment yields -y
            if ix + 1 < nx {
                interfaces.push(Interface {
                    id: interfaces.len(),
                    first: id(ix, iy),
                    second: id(ix + 1, iy),
                    curve: Curve::Segment {
                        start: [x1, y0],
                        end: [x1, y1],
                    },
                    orientation: 1.0,
                });
            }
            if iy + 1 < ny {
                interfaces.push(Interface {
                    id: interfaces.len(),
                    first: id(ix, iy),
                    second: id(ix, iy + 1),
                    curve: Curve::Segment {
                        start: [x0, y1],
                        end: [x1, y1],
                    },
                    orientation: -1.0,
                });
            }
        }
    }
    Ok(Partition { subdomains, interfaces })
}

/// Two subdomains: the region between the curves (id 0) and the region
/// enclosed by `inner` (id 1). The interface normal points out of the inner
/// region.
pub fn make_polar_partition(outer: PolarCurve, inner: PolarCurve) -> Result<Partition, GeometryError> {
    const PROBES: usize = 4096;
    for i in 0..PROBES {
        let theta = TAU * i as f64 / PROBES as f64;
        let (ri, ro) = (inner.radius(theta), outer.radius(theta));
        if ri <= 0.0 {
            return Err(GeometryError::InvalidGeometry(format!(
                "inner radius {ri} not positive at theta={theta}"
            )));
        }
        if ri >= ro {
            return Err(GeometryError::InvalidGeometry(format!(
                "curves intersect near theta={theta}: inner {ri} >= outer {ro}"
            )));
        }
    }
    Ok(Partition {
        subdomains: vec![
            Subdomain {
                id: 0,
                region: Region::Between { inner, outer },
                boundary: vec![Curve::Polar(outer)],
            },
            Subdomain {
                id: 1,
                region: Region::Inside(inner),
                boundary: vec![],
            },
        ],
        interfaces: vec![Interface {
            id: 0,
            first: 1,
            second: 0,
            curve: Curve::Polar(inner),
            orientation: 1.0,
        }],
    })
}

/// Points per role. Boundary and interface counts are per curve piece.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleCounts {
    pub interior: usize,
    pub boundary: usize,
    pub interface: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PointRole {
    Interior,
    Boundary,
    Interface,
    Measurement,
}

/// Interface points as seen from one side.
#[derive(Debug, Clone, PartialEq)]
pub struct InterfacePoints {
    pub interface: usize,
    pub neighbor: usize,
    pub points: Vec<Point>,
    /// Outward normal of the owning subdomain at each point.
    pub normals: Vec<Point>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubdomainPoints {
    pub subdomain: usize,
    pub interior: Vec<Point>,
    pub boundary: Vec<Point>,
    pub interfaces: Vec<InterfacePoints>,
}

const MIN_ACCEPTANCE: f64 = 1e-3;

/// Rejection-samples `count` points in the open region.
pub fn sample_region(
    region: &Region,
    count: usize,
    rng: &mut ChaCha8Rng,
    subdomain: usize,
) -> Result<Vec<Point>, GeometryError> {
    let bbox = region.bounding_box();
    let mut out = Vec::with_capacity(count);
    let mut attempts = 0usize;
    while out.len() < count {
        attempts += 1;
        let p = [
            bbox.min[0] + rng.random::<f64>() * (bbox.max[0] - bbox.min[0]),
            bbox.min[1] + rng.random::<f64>() * (bbox.max[1] - bbox.min[1]),
        ];
        if region.interior(p) {
            out.push(p);
        }
        if attempts >= 1000 && (out.len() as f64) < MIN_ACCEPTANCE * attempts as f64 {
            return Err(GeometryError::DegenerateRegion {
                subdomain,
                ratio: out.len() as f64 / attempts as f64,
                attempts,
            });
        }
    }
    Ok(out)
}

/// Random stream for one sampled entity; independent of sampling order.
pub(crate) fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

const INTERIOR_STREAM: u64 = 0x1000;
const BOUNDARY_STREAM: u64 = 0x2000;
const INTERFACE_STREAM: u64 = 0x3000;

/// Samples collocation points once for every subdomain. Each interface is
/// drawn once and handed to both sides, the second side with negated normals.
pub fn sample_points(
    partition: &Partition,
    counts: SampleCounts,
    seed: u64,
) -> Result<Vec<SubdomainPoints>, GeometryError> {
    if counts.interior == 0 || counts.boundary == 0 || counts.interface == 0 {
        return Err(GeometryError::InvalidConfig(format!(
            "point counts must be positive, got {counts:?}"
        )));
    }
    let mut out = Vec::with_capacity(partition.len());
    for sub in &partition.subdomains {
        let mut rng = stream_rng(seed, INTERIOR_STREAM + sub.id as u64);
        let interior = sample_region(&sub.region, counts.interior, &mut rng, sub.id)?;
        let mut rng = stream_rng(seed, BOUNDARY_STREAM + sub.id as u64);
        let mut boundary = Vec::new();
        for piece in &sub.boundary {
            boundary.extend(piece.sample(counts.boundary, &mut rng).0);
        }
        out.push(SubdomainPoints {
            subdomain: sub.id,
            interior,
            boundary,
            interfaces: Vec::new(),
        });
    }
    for iface in &partition.interfaces {
        let mut rng = stream_rng(seed, INTERFACE_STREAM + iface.id as u64);
        let (points, normals) = iface.curve.sample(counts.interface, &mut rng);
        let first: Vec<Point> = normals
            .iter()
            .map(|n| [iface.orientation * n[0], iface.orientation * n[1]])
            .collect();
        let second: Vec<Point> = first.iter().map(|n| [-n[0], -n[1]]).collect();
        out[iface.first].interfaces.push(InterfacePoints {
            interface: iface.id,
            neighbor: iface.second,
            points: points.clone(),
            normals: first,
        });
        out[iface.second].interfaces.push(InterfacePoints {
            interface: iface.id,
            neighbor: iface.first,
            points,
            normals: second,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_box() -> Rect {
        Rect::new([-1.0, -1.0], [1.0, 1.0])
    }

    #[test]
    fn one_way_split() {
        let p = make_cartesian_partition(unit_box(), 4, 1).unwrap();
        assert_eq!(p.subdomains.len(), 4);
        assert_eq!(p.interfaces.len(), 3);
        let pts = sample_points(
            &p,
            SampleCounts {
                interior: 8,
                boundary: 4,
                interface: 4,
            },
            1,
        )
        .unwrap();
        for sp in &pts {
            for ip in &sp.interfaces {
                for n in &ip.normals {
                    assert_eq!(n[1], 0.0);
                    assert_eq!(n[0].abs(), 1.0);
                }
            }
        }
        // interior subdomains have only top/bottom physical boundary
        assert_eq!(p.subdomains[1].boundary.len(), 2);
        assert_eq!(p.subdomains[0].boundary.len(), 3);
    }

    #[test]
    fn single_box_has_no_interfaces() {
        let p = make_cartesian_partition(unit_box(), 1, 1).unwrap();
        assert_eq!(p.subdomains.len(), 1);
        assert!(p.interfaces.is_empty());
        assert_eq!(p.subdomains[0].boundary.len(), 4);
    }

    #[test]
    fn zero_split_is_rejected() {
        assert!(matches!(
            make_cartesian_partition(unit_box(), 0, 3),
            Err(GeometryError::InvalidConfig(_))
        ));
    }

    #[test]
    fn two_way_split_shares_cross_point() {
        let p = make_cartesian_partition(unit_box(), 2, 2).unwrap();
        assert_eq!(p.subdomains.len(), 4);
        assert_eq!(p.interfaces.len(), 4);
        let pts = sample_points(
            &p,
            SampleCounts {
                interior: 4,
                boundary: 4,
                interface: 16,
            },
            3,
        )
        .unwrap();
        for iface in &p.interfaces {
            let set = pts[iface.first]
                .interfaces
                .iter()
                .find(|s| s.interface == iface.id)
                .unwrap();
            assert!(set.points.contains(&[0.0, 0.0]), "interface {}", iface.id);
        }
    }

    #[test]
    fn interface_normals_point_from_first_to_second() {
        let p = make_cartesian_partition(unit_box(), 2, 2).unwrap();
        let pts = sample_points(
            &p,
            SampleCounts {
                interior: 4,
                boundary: 4,
                interface: 4,
            },
            3,
        )
        .unwrap();
        for iface in &p.interfaces {
            let set = pts[iface.first]
                .interfaces
                .iter()
                .find(|s| s.interface == iface.id)
                .unwrap();
            let Region::Rect(a) = p.subdomains[iface.first].region else {
                unreachable!()
            };
            let Region::Rect(b) = p.subdomains[iface.second].region else {
                unreachable!()
            };
            let ca = [(a.min[0] + a.max[0]) / 2.0, (a.min[1] + a.max[1]) / 2.0];
            let cb = [(b.min[0] + b.max[0]) / 2.0, (b.min[1] + b.max[1]) / 2.0];
            let n = set.normals[0];
            assert!(n[0] * (cb[0] - ca[0]) + n[1] * (cb[1] - ca[1]) > 0.0);
        }
    }

    #[test]
    fn complex_curves_at_zero_angle() {
        assert_eq!(PolarCurve::complex_boundary().point(0.0), [2.0, 0.0]);
        assert_eq!(PolarCurve::complex_interface().point(0.0), [1.0, 0.0]);
        let q = PolarCurve::complex_interface().point(std::f64::consts::FRAC_PI_2);
        assert!((q[0] - 0.0).abs() < 1e-15 && (q[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn circle_normal_is_radial() {
        let n = PolarCurve::circle(1.0).outward_normal(0.0);
        assert!((n[0] - 1.0).abs() < 1e-15 && n[1].abs() < 1e-15);
    }

    #[test]
    fn polar_partition_rejects_crossing_curves() {
        let err = make_polar_partition(PolarCurve::circle(1.0), PolarCurve::complex_interface());
        assert!(matches!(err, Err(GeometryError::InvalidGeometry(_))));
        assert!(make_polar_partition(PolarCurve::circle(2.0), PolarCurve::circle(1.0)).is_ok());
    }

    #[test]
    fn polar_normals_match_curve_derivative() {
        // numerical tangent of the parameterization, rotated
        let c = PolarCurve::complex_interface();
        for theta in [0.3, 1.7, 4.0, 5.5] {
            let h = 1e-6;
            let (a, b) = (c.point(theta - h), c.point(theta + h));
            let t = [(b[0] - a[0]) / (2.0 * h), (b[1] - a[1]) / (2.0 * h)];
            let len = t[0].hypot(t[1]);
            let n = c.outward_normal(theta);
            assert!((n[0] - t[1] / len).abs() < 1e-8);
            assert!((n[1] + t[0] / len).abs() < 1e-8);
        }
    }

    #[test]
    fn degenerate_region_is_detected() {
        let thin = Region::Rect(Rect::new([0.0, 0.0], [1.0, 0.0]));
        let mut rng = stream_rng(0, 0);
        assert!(matches!(
            sample_region(&thin, 4, &mut rng, 7),
            Err(GeometryError::DegenerateRegion { subdomain: 7, .. })
        ));
    }

    #[test]
    fn sampling_is_deterministic() {
        let p = make_cartesian_partition(unit_box(), 2, 2).unwrap();
        let c = SampleCounts {
            interior: 32,
            boundary: 8,
            interface: 8,
        };
        assert_eq!(sample_points(&p, c, 42).unwrap(), sample_points(&p, c, 42).unwrap());
        assert_ne!(sample_points(&p, c, 42).unwrap(), sample_points(&p, c, 43).unwrap());
    }
}
