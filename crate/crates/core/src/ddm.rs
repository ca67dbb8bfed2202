//! Non-overlapping domain decomposition driver.
//!
//! Each outer iteration trains every subdomain for a fixed number of epochs
//! against frozen neighbour traces, then exchanges fresh traces across every
//! interface in both directions and resets the interface duals.

use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::alm::{LocalModel, LossBreakdown, TrainError, TrainerSettings};
use crate::geometry::{stream_rng, GeometryError, Partition, SubdomainPoints};
use crate::metrics::{compute_errors, ErrorReport, EvalGrid};
use crate::net::{JetEval, JetOrder, Mlp, NetError, Point};
use crate::problems::ProblemSpec;

const NET_STREAM: u64 = 0x5000;

/// Initial Robin parameter, favouring neither Dirichlet nor Neumann data.
pub const ALPHA_INIT: f64 = 0.5;

#[derive(Debug, Error)]
pub enum DdmError {
    #[error("protocol violation: {0}")]
    Protocol(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error("run aborted after {} completed outer iterations: {source}", history.outer.len())]
    Divergence {
        source: TrainError,
        history: Box<RunHistory>,
    },
}

/// Neighbour data frozen for one outer iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct InterfaceTrace {
    pub interface: usize,
    pub producer: usize,
    pub receiver: usize,
    /// outer iteration that produced the trace; zero for the initial trace
    pub iteration: usize,
    pub values: Vec<f64>,
    /// derivative along the receiver's outward normal
    pub normal_derivatives: Vec<f64>,
}

impl InterfaceTrace {
    pub fn zeros(interface: usize, producer: usize, receiver: usize, len: usize) -> Self {
        Self {
            interface,
            producer,
            receiver,
            iteration: 0,
            values: vec![0.0; len],
            normal_derivatives: vec![0.0; len],
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Per-point `a^2 (u - u_n)^2 + (1 - a)^2 (du/dn - g_n)^2`, with `n` the own
/// outward normal at each point.
pub fn robin_mismatch(
    own: &[JetEval],
    trace: &InterfaceTrace,
    alpha: f64,
    normals: &[Point],
) -> Result<Vec<f64>, DdmError> {
    if own.len() != trace.values.len() || own.len() != trace.normal_derivatives.len() || own.len() != normals.len() {
        return Err(DdmError::Protocol(format!(
            "interface {}: {} own points, {} normals, trace of {} values and {} derivatives",
            trace.interface,
            own.len(),
            normals.len(),
            trace.values.len(),
            trace.normal_derivatives.len()
        )));
    }
    let (wa, wf) = (alpha * alpha, (1.0 - alpha) * (1.0 - alpha));
    Ok(own
        .iter()
        .zip(normals)
        .enumerate()
        .map(|(j, (jet, &n))| {
            let du = jet.value - trace.values[j];
            let df = jet.normal_derivative(n) - trace.normal_derivatives[j];
            wa * du * du + wf * df * df
        })
        .collect())
}

/// One subdomain worker: network, Robin parameter, duals and points.
#[derive(Debug, Clone)]
pub struct SubdomainModel {
    pub id: usize,
    pub local: LocalModel,
    pub points: SubdomainPoints,
    /// neighbour across each interface, in the order of the point sets
    pub neighbors: Vec<usize>,
}

impl SubdomainModel {
    pub fn new(net: Mlp, problem: &ProblemSpec, points: SubdomainPoints, settings: &TrainerSettings) -> Self {
        let local = LocalModel::new(net, problem, &points, settings, ALPHA_INIT);
        Self {
            id: points.subdomain,
            neighbors: points.interfaces.iter().map(|s| s.neighbor).collect(),
            local,
            points,
        }
    }

    pub fn alpha(&self) -> f64 {
        self.local.alpha
    }
}

/// Values and receiver-normal derivatives of `model` at the shared points of
/// `interface`.
pub fn produce_trace(model: &SubdomainModel, interface: usize, iteration: usize) -> Result<InterfaceTrace, DdmError> {
    let set = model
        .points
        .interfaces
        .iter()
        .find(|s| s.interface == interface)
        .ok_or_else(|| DdmError::Protocol(format!("subdomain {} does not touch interface {interface}", model.id)))?;
    let jets = model.local.net.forward_jets(&set.points, JetOrder::Gradient);
    Ok(InterfaceTrace {
        interface,
        producer: model.id,
        receiver: set.neighbor,
        iteration,
        values: jets.iter().map(|j| j.value).collect(),
        normal_derivatives: jets
            .iter()
            .zip(&set.normals)
            .map(|(j, n)| j.normal_derivative([-n[0], -n[1]]))
            .collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResetMode {
    /// `lambda = 1`, `mu = 1`, `vbar = 0`
    #[default]
    All,
    LambdaOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DdmSettings {
    pub hidden: Vec<usize>,
    pub trainer: TrainerSettings,
    pub epochs: usize,
    pub outer_iterations: usize,
    pub reset: ResetMode,
    pub parallel: bool,
    pub seed: u64,
    pub eval_resolution: usize,
}

impl Default for DdmSettings {
    fn default() -> Self {
        Self {
            hidden: vec![20, 20, 20],
            trainer: TrainerSettings::default(),
            epochs: 500,
            outer_iterations: 30,
            reset: ResetMode::All,
            parallel: true,
            seed: 0,
            eval_resolution: 101,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubdomainRecord {
    pub subdomain: usize,
    /// loss pieces of the last epoch of the outer iteration
    pub loss: LossBreakdown,
    pub alpha: f64,
    pub rel_l2: f64,
    pub max_abs: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OuterRecord {
    pub iteration: usize,
    pub subdomains: Vec<SubdomainRecord>,
    /// mean `|u_i - u_j|` over the points of each interface, by interface id
    pub interface_gaps: Vec<f64>,
    pub errors: ErrorReport,
}

/// Counters of the protocol checks made during a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ProtocolAudit {
    pub exchanges: usize,
    pub trace_checks: usize,
    pub stale_traces: usize,
    pub resets: usize,
    pub reset_violations: usize,
    pub dual_updates: usize,
    pub lambda_decreases: usize,
}

impl ProtocolAudit {
    pub fn is_clean(&self) -> bool {
        self.stale_traces == 0 && self.reset_violations == 0 && self.lambda_decreases == 0
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunHistory {
    pub outer: Vec<OuterRecord>,
    pub audit: ProtocolAudit,
}

impl RunHistory {
    pub fn last(&self) -> Option<&OuterRecord> {
        self.outer.last()
    }

    /// Learned Robin parameters after each outer iteration.
    pub fn alpha_trajectory(&self) -> Vec<Vec<f64>> {
        self.outer
            .iter()
            .map(|r| r.subdomains.iter().map(|s| s.alpha).collect())
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub models: Vec<SubdomainModel>,
    pub history: RunHistory,
    pub grid: EvalGrid,
}

impl RunOutcome {
    pub fn errors(&self) -> &ErrorReport {
        &self.history.last().expect("at least one outer iteration").errors
    }
}

/// Networks initialised from the seed, one per subdomain.
pub fn init_models(
    settings: &DdmSettings,
    problem: &ProblemSpec,
    points: &[SubdomainPoints],
) -> Result<Vec<SubdomainModel>, DdmError> {
    points
        .iter()
        .map(|p| {
            let mut rng = stream_rng(settings.seed, NET_STREAM + p.subdomain as u64);
            let net = Mlp::glorot(&settings.hidden, &mut rng)?;
            Ok(SubdomainModel::new(net, problem, p.clone(), &settings.trainer))
        })
        .collect()
}

/// Runs the full decomposition schedule.
pub fn run(
    settings: &DdmSettings,
    problem: &ProblemSpec,
    partition: &Partition,
    points: &[SubdomainPoints],
) -> Result<RunOutcome, DdmError> {
    if settings.epochs == 0 || settings.outer_iterations == 0 {
        return Err(DdmError::Protocol(format!(
            "epochs and outer iterations must be positive, got {} and {}",
            settings.epochs, settings.outer_iterations
        )));
    }
    if points.len() != partition.len() || points.iter().enumerate().any(|(k, p)| p.subdomain != k) {
        return Err(DdmError::Protocol("one point set per subdomain, in id order".into()));
    }
    let grid = EvalGrid::new(partition, settings.eval_resolution)?;
    let mut models = init_models(settings, problem, points)?;
    let mut traces: Vec<Vec<InterfaceTrace>> = models
        .iter()
        .map(|m| {
            m.points
                .interfaces
                .iter()
                .map(|s| InterfaceTrace::zeros(s.interface, s.neighbor, m.id, s.points.len()))
                .collect()
        })
        .collect();
    let mut history = RunHistory::default();
    let has_interfaces = !partition.interfaces.is_empty();
    let started = Instant::now();

    for t in 1..=settings.outer_iterations {
        for (m, own) in models.iter().zip(&traces) {
            for (k, tr) in own.iter().enumerate() {
                history.audit.trace_checks += 1;
                let expected_producer = m.neighbors[k];
                if tr.iteration + 1 != t || tr.receiver != m.id || tr.producer != expected_producer {
                    history.audit.stale_traces += 1;
                }
            }
        }

        let results = train_all(&mut models, &traces, settings.epochs, settings.parallel);
        let mut losses = Vec::with_capacity(models.len());
        for r in results {
            match r {
                Ok(l) => losses.push(l),
                Err(source) => {
                    sync_audit(&mut history.audit, &models);
                    return Err(DdmError::Divergence {
                        source,
                        history: Box::new(history),
                    });
                }
            }
        }

        let nets: Vec<(&Mlp, f64)> = models.iter().map(|m| (&m.local.net, m.alpha())).collect();
        let mut errors = compute_errors(&nets, problem, &grid);
        errors.wall_seconds = started.elapsed().as_secs_f64();
        let subdomains = models
            .iter()
            .zip(&losses)
            .zip(&errors.subdomains)
            .map(|((m, l), e)| SubdomainRecord {
                subdomain: m.id,
                loss: l.last().copied().unwrap_or_default(),
                alpha: m.alpha(),
                rel_l2: e.rel_l2,
                max_abs: e.max_abs,
            })
            .collect();
        let record = OuterRecord {
            iteration: t,
            subdomains,
            interface_gaps: interface_gaps(&models, partition.interfaces.len()),
            errors,
        };
        log::info!(
            "outer iteration {t}/{}: max rel L2 {:.3e}, max abs {:.3e}",
            settings.outer_iterations,
            record.errors.max_rel_l2,
            record.errors.max_abs
        );
        history.outer.push(record);

        if has_interfaces {
            traces = exchange(&models, t)?;
            history.audit.exchanges += 1;
            reset_interface_duals(&mut models, settings.reset, &mut history.audit);
        }
    }
    sync_audit(&mut history.audit, &models);
    Ok(RunOutcome { models, history, grid })
}

fn sync_audit(audit: &mut ProtocolAudit, models: &[SubdomainModel]) {
    audit.dual_updates = models.iter().map(|m| m.local.dual_updates).sum();
    audit.lambda_decreases = models.iter().map(|m| m.local.lambda_decreases).sum();
}

fn train_all(
    models: &mut [SubdomainModel],
    traces: &[Vec<InterfaceTrace>],
    epochs: usize,
    parallel: bool,
) -> Vec<Result<Vec<LossBreakdown>, TrainError>> {
    let work = |m: &mut SubdomainModel, own: &Vec<InterfaceTrace>| {
        let refs: Vec<&InterfaceTrace> = own.iter().collect();
        m.local.train(&refs, epochs)
    };
    if parallel && models.len() > 1 {
        std::thread::scope(|s| {
            let handles: Vec<_> = models
                .iter_mut()
                .zip(traces)
                .map(|(m, own)| s.spawn(move || work(m, own)))
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("worker panicked"))
                .collect()
        })
    } else {
        models.iter_mut().zip(traces).map(|(m, own)| work(m, own)).collect()
    }
}

/// Fresh traces for every receiver, produced by its neighbours.
fn exchange(models: &[SubdomainModel], iteration: usize) -> Result<Vec<Vec<InterfaceTrace>>, DdmError> {
    models
        .iter()
        .map(|m| {
            m.points
                .interfaces
                .iter()
                .map(|s| {
                    let trace = produce_trace(&models[s.neighbor], s.interface, iteration)?;
                    if trace.receiver != m.id || trace.len() != s.points.len() {
                        return Err(DdmError::Protocol(format!(
                            "interface {}: trace for {} built for {} with {} points",
                            s.interface,
                            m.id,
                            trace.receiver,
                            trace.len()
                        )));
                    }
                    Ok(trace)
                })
                .collect()
        })
        .collect()
}

fn reset_interface_duals(models: &mut [SubdomainModel], mode: ResetMode, audit: &mut ProtocolAudit) {
    for m in models {
        let boundary = m.local.boundary.as_ref().map(|g| g.dual.lambda.clone());
        let measurement = m.local.measurement.as_ref().map(|g| g.dual.lambda.clone());
        m.local.reset_interface_duals(mode == ResetMode::LambdaOnly);
        audit.resets += 1;
        let restored = m.local.interfaces.iter().all(|g| match mode {
            ResetMode::All => g.dual.is_initial(),
            ResetMode::LambdaOnly => g.dual.lambda.iter().all(|&l| l == 1.0),
        });
        let persisted = boundary == m.local.boundary.as_ref().map(|g| g.dual.lambda.clone())
            && measurement == m.local.measurement.as_ref().map(|g| g.dual.lambda.clone());
        if !restored || !persisted {
            audit.reset_violations += 1;
        }
    }
}

/// Mean `|u_i - u_j|` between the two networks sharing each interface.
fn interface_gaps(models: &[SubdomainModel], count: usize) -> Vec<f64> {
    let mut gaps = vec![0.0; count];
    for m in models {
        for s in &m.points.interfaces {
            if m.id > s.neighbor {
                continue;
            }
            let mine = m.local.net.values(&s.points);
            let theirs = models[s.neighbor].local.net.values(&s.points);
            let total: f64 = mine.iter().zip(&theirs).map(|(a, b)| (a - b).abs()).sum();
            gaps[s.interface] = total / s.points.len().max(1) as f64;
        }
    }
    gaps
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{make_cartesian_partition, sample_points, Rect, SampleCounts};
    use ndarray::Array2;

    fn trace(values: Vec<f64>, derivs: Vec<f64>) -> InterfaceTrace {
        InterfaceTrace {
            interface: 0,
            producer: 1,
            receiver: 0,
            iteration: 0,
            values,
            normal_derivatives: derivs,
        }
    }

    fn jet(value: f64, grad: [f64; 2]) -> JetEval {
        JetEval {
            value,
            grad,
            ..Default::default()
        }
    }

    #[test]
    fn matched_interface_has_zero_mismatch() {
        let own = [jet(0.3, [1.0, 2.0])];
        let n = [[0.0, 1.0]];
        for a in [0.1, 0.5, 0.9] {
            assert_eq!(
                robin_mismatch(&own, &trace(vec![0.3], vec![2.0]), a, &n).unwrap(),
                vec![0.0]
            );
        }
    }

    #[test]
    fn dirichlet_limit_ignores_flux() {
        let own = [jet(0.7, [5.0, -3.0])];
        let c = robin_mismatch(&own, &trace(vec![0.5], vec![100.0]), 1.0, &[[1.0, 0.0]]).unwrap();
        assert!((c[0] - 0.04).abs() < 1e-15);
    }

    #[test]
    fn balanced_robin_weights() {
        let own = [jet(0.2, [0.4, 0.0])];
        let c = robin_mismatch(&own, &trace(vec![0.0], vec![0.0]), 0.5, &[[1.0, 0.0]]).unwrap();
        assert!((c[0] - 0.05).abs() < 1e-15);
    }

    #[test]
    fn point_count_mismatch_is_protocol_error() {
        let own = [jet(0.0, [0.0, 0.0]); 2];
        let r = robin_mismatch(&own, &trace(vec![0.0], vec![0.0]), 0.5, &[[1.0, 0.0]; 2]);
        assert!(matches!(r, Err(DdmError::Protocol(_))));
    }

    fn two_strip_models(net: impl Fn(usize) -> Mlp) -> Vec<SubdomainModel> {
        let p = make_cartesian_partition(Rect::new([-1.0, -1.0], [1.0, 1.0]), 2, 1).unwrap();
        let pts = sample_points(
            &p,
            SampleCounts {
                interior: 4,
                boundary: 4,
                interface: 6,
            },
            3,
        )
        .unwrap();
        let problem = ProblemSpec::poisson_manufactured();
        pts.into_iter()
            .map(|sp| {
                let id = sp.subdomain;
                SubdomainModel::new(net(id), &problem, sp, &TrainerSettings::default())
            })
            .collect()
    }

    #[test]
    fn constant_network_trace() {
        let models = two_strip_models(|_| Mlp::from_layers(vec![(Array2::zeros((1, 2)), vec![0.75])]).unwrap());
        let t = produce_trace(&models[0], 0, 4).unwrap();
        assert_eq!((t.producer, t.receiver, t.iteration), (0, 1, 4));
        assert!(t.values.iter().all(|&v| v == 0.75));
        assert!(t.normal_derivatives.iter().all(|&d| d == 0.0));
        assert_eq!(models[0].alpha(), 0.5);
    }

    #[test]
    fn trace_uses_receiver_normal() {
        let models = two_strip_models(|k| {
            let mut rng = stream_rng(9, k as u64);
            Mlp::glorot(&[5], &mut rng).unwrap()
        });
        let t = produce_trace(&models[0], 0, 1).unwrap();
        let again = produce_trace(&models[0], 0, 1).unwrap();
        assert_eq!(t, again);
        let set = &models[0].points.interfaces[0];
        let own = models[0].local.net.forward_jets(&set.points, JetOrder::Gradient);
        for ((j, n), d) in own.iter().zip(&set.normals).zip(&t.normal_derivatives) {
            assert_eq!(*d, -j.normal_derivative(*n));
        }
        // the receiver's own points coincide with the producer's
        assert_eq!(models[1].points.interfaces[0].points, set.points);
    }
}
