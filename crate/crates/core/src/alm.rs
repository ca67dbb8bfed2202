//! Adaptive augmented Lagrangian training of one subdomain model.
//!
//! The PDE residual is the objective; boundary data, interface transmission
//! and measurements are equality constraints, each point carrying a squared
//! residual `C_j >= 0`. Every epoch takes one primal optimizer step on
//!
//! ```text
//! L = J + sum_groups mean_j [ lambda_j C_j + 0.5 mu_j C_j^2 ]
//! ```
//!
//! and then updates the duals of every group:
//!
//! ```text
//! vbar   <- a vbar + (1 - a) C^2
//! mu     <- gamma / (sqrt(vbar) + eps)
//! lambda <- lambda + mu C
//! ```

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ddm::InterfaceTrace;
use crate::geometry::SubdomainPoints;
use crate::net::{JetAdjoint, JetOrder, JetTape, Mlp, ParamGrad, Point};
use crate::problems::ProblemSpec;

/// Bounds the Robin parameter is projected onto after each step.
pub const ROBIN_MIN: f64 = 1e-3;
pub const ROBIN_MAX: f64 = 1.0 - 1e-3;

/// Default Adam step size of the Robin parameter.
pub const ROBIN_LEARNING_RATE: f64 = 1e-5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AlmError {
    #[error("constraint count {got} does not match dual state of length {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("augmented Lagrangian is not finite: {0}")]
    NonFinite(f64),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrainError {
    #[error("subdomain {subdomain} diverged at epoch {epoch} in {group}: {detail}")]
    Divergence {
        subdomain: usize,
        epoch: usize,
        group: String,
        detail: String,
    },
    #[error("subdomain {subdomain}: interface {interface} trace has {got} points, expected {expected}")]
    TraceMismatch {
        subdomain: usize,
        interface: usize,
        expected: usize,
        got: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DualHyper {
    /// global dual learning rate
    pub gamma: f64,
    /// smoothing constant of the squared-constraint moving average
    pub smoothing: f64,
    pub eps: f64,
}

impl Default for DualHyper {
    fn default() -> Self {
        Self {
            gamma: 1e-2,
            smoothing: 0.99,
            eps: 1e-8,
        }
    }
}

/// Multipliers, penalties and averaged squared constraints of one group.
#[derive(Debug, Clone, PartialEq)]
pub struct DualState {
    pub lambda: Vec<f64>,
    pub mu: Vec<f64>,
    pub vbar: Vec<f64>,
    pub hyper: DualHyper,
}

impl DualState {
    /// `lambda = 1`, `mu = 1`, `vbar = 0`.
    pub fn new(len: usize, hyper: DualHyper) -> Self {
        Self {
            lambda: vec![1.0; len],
            mu: vec![1.0; len],
            vbar: vec![0.0; len],
            hyper,
        }
    }

    pub fn len(&self) -> usize {
        self.lambda.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambda.is_empty()
    }

    pub fn reset(&mut self) {
        self.lambda.fill(1.0);
        self.mu.fill(1.0);
        self.vbar.fill(0.0);
    }

    pub fn is_initial(&self) -> bool {
        self.lambda.iter().all(|&l| l == 1.0)
            && self.mu.iter().all(|&m| m == 1.0)
            && self.vbar.iter().all(|&v| v == 0.0)
    }

    /// One adaptive dual update. Returns how many multipliers decreased,
    /// which is zero whenever every `c` is non-negative.
    pub fn update(&mut self, c: &[f64]) -> Result<usize, AlmError> {
        if c.len() != self.len() {
            return Err(AlmError::LengthMismatch {
                expected: self.len(),
                got: c.len(),
            });
        }
        let DualHyper { gamma, smoothing, eps } = self.hyper;
        let mut decreased = 0;
        for (j, &cj) in c.iter().enumerate() {
            self.vbar[j] = smoothing * self.vbar[j] + (1.0 - smoothing) * cj * cj;
            self.mu[j] = gamma / (self.vbar[j].sqrt() + eps);
            let next = self.lambda[j] + self.mu[j] * cj;
            if next < self.lambda[j] {
                decreased += 1;
            }
            self.lambda[j] = next;
        }
        Ok(decreased)
    }
}

/// Whether a group carries one multiplier per point or one for the group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MultiplierMode {
    #[default]
    PerPoint,
    PerGroup,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConstraintRole {
    Boundary,
    Interface { interface: usize },
    Measurement,
}

impl std::fmt::Display for ConstraintRole {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ConstraintRole::Boundary => write!(f, "boundary"),
            ConstraintRole::Interface { interface } => write!(f, "interface {interface}"),
            ConstraintRole::Measurement => write!(f, "measurement"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintGroup {
    pub role: ConstraintRole,
    pub mode: MultiplierMode,
    pub points: usize,
    pub dual: DualState,
}

impl ConstraintGroup {
    pub fn new(role: ConstraintRole, points: usize, mode: MultiplierMode, hyper: DualHyper) -> Self {
        let len = match mode {
            MultiplierMode::PerPoint => points,
            MultiplierMode::PerGroup => 1,
        };
        Self {
            role,
            mode,
            points,
            dual: DualState::new(len, hyper),
        }
    }

    /// Augmented term of this group and its sensitivity to each `C_j`.
    pub fn term(&self, c: &[f64]) -> Result<(f64, Vec<f64>), AlmError> {
        if c.len() != self.points {
            return Err(AlmError::LengthMismatch {
                expected: self.points,
                got: c.len(),
            });
        }
        let n = c.len() as f64;
        match self.mode {
            MultiplierMode::PerPoint => {
                let d = &self.dual;
                let mut value = 0.0;
                let sens = c
                    .iter()
                    .enumerate()
                    .map(|(j, &cj)| {
                        value += d.lambda[j] * cj + 0.5 * d.mu[j] * cj * cj;
                        (d.lambda[j] + d.mu[j] * cj) / n
                    })
                    .collect();
                Ok((value / n, sens))
            }
            MultiplierMode::PerGroup => {
                let (lambda, mu) = (self.dual.lambda[0], self.dual.mu[0]);
                let m = mean(c);
                let s = (lambda + mu * m) / n;
                Ok((lambda * m + 0.5 * mu * m * m, vec![s; c.len()]))
            }
        }
    }

    /// Dual update from this epoch's constraint values.
    pub fn dual_update(&mut self, c: &[f64]) -> Result<usize, AlmError> {
        match self.mode {
            MultiplierMode::PerPoint => self.dual.update(c),
            MultiplierMode::PerGroup => self.dual.update(&[mean(c)]),
        }
    }
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

/// `J + sum over groups of mean_j [lambda_j C_j + 0.5 mu_j C_j^2]`.
pub fn augmented_lagrangian(objective: f64, groups: &[(&ConstraintGroup, &[f64])]) -> Result<f64, AlmError> {
    let mut total = objective;
    for (group, c) in groups {
        total += group.term(c)?.0;
    }
    if total.is_finite() {
        Ok(total)
    } else {
        Err(AlmError::NonFinite(total))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OptimizerKind {
    Adam {
        learning_rate: f64,
        #[serde(default = "default_beta1")]
        beta1: f64,
        #[serde(default = "default_beta2")]
        beta2: f64,
        #[serde(default = "default_adam_eps")]
        eps: f64,
    },
    Sgd {
        learning_rate: f64,
    },
}

fn default_beta1() -> f64 {
    0.9
}

fn default_beta2() -> f64 {
    0.999
}

fn default_adam_eps() -> f64 {
    1e-8
}

impl OptimizerKind {
    /// Adam with default moment decay rates.
    pub fn adam(learning_rate: f64) -> Self {
        OptimizerKind::Adam {
            learning_rate,
            beta1: default_beta1(),
            beta2: default_beta2(),
            eps: default_adam_eps(),
        }
    }

    pub fn learning_rate(&self) -> f64 {
        match *self {
            OptimizerKind::Adam { learning_rate, .. } | OptimizerKind::Sgd { learning_rate } => learning_rate,
        }
    }
}

impl Default for OptimizerKind {
    fn default() -> Self {
        OptimizerKind::adam(1e-3)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Optimizer {
    kind: OptimizerKind,
    m: Vec<f64>,
    v: Vec<f64>,
    steps: i32,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, len: usize) -> Self {
        Self {
            kind,
            m: vec![0.0; len],
            v: vec![0.0; len],
            steps: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        assert_eq!(params.len(), grads.len());
        assert_eq!(params.len(), self.m.len());
        self.steps += 1;
        match self.kind {
            OptimizerKind::Sgd { learning_rate } => {
                for (p, g) in params.iter_mut().zip(grads) {
                    *p -= learning_rate * g;
                }
            }
            OptimizerKind::Adam {
                learning_rate,
                beta1,
                beta2,
                eps,
            } => {
                let c1 = 1.0 - beta1.powi(self.steps);
                let c2 = 1.0 - beta2.powi(self.steps);
                for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
                    *m = beta1 * *m + (1.0 - beta1) * g;
                    *v = beta2 * *v + (1.0 - beta2) * g * g;
                    *p -= learning_rate * (*m / c1) / ((*v / c2).sqrt() + eps);
                }
            }
        }
    }
}

/// How the Robin parameter evolves during local training.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum RobinMode {
    /// learned jointly with the network weights
    #[default]
    Adaptive,
    /// held fixed
    Constant { value: f64 },
    /// set after each step to `B / (A + B)`, the minimizer of
    /// `alpha^2 A + (1 - alpha)^2 B` with `A`, `B` the mean squared value and
    /// flux gaps
    ClosedForm,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainerSettings {
    pub optimizer: OptimizerKind,
    pub dual: DualHyper,
    pub multipliers: MultiplierMode,
    pub robin: RobinMode,
    /// optimizer of the Robin parameter in adaptive mode
    pub robin_optimizer: OptimizerKind,
}

impl Default for TrainerSettings {
    fn default() -> Self {
        Self {
            optimizer: OptimizerKind::default(),
            dual: DualHyper::default(),
            multipliers: MultiplierMode::PerPoint,
            robin: RobinMode::Adaptive,
            robin_optimizer: OptimizerKind::adam(ROBIN_LEARNING_RATE),
        }
    }
}

/// Mean values of one epoch's loss pieces, before the primal step.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossBreakdown {
    pub epoch: usize,
    pub objective: f64,
    pub boundary: f64,
    pub interface: f64,
    pub measurement: f64,
    pub lagrangian: f64,
}

/// Result of [`LocalModel::evaluate`].
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub loss: LossBreakdown,
    pub grad: ParamGrad,
    /// boundary constraint values followed by measurement ones
    pub data_c: Vec<f64>,
    /// interface constraint values, group after group
    pub iface_c: Vec<f64>,
    du: Vec<f64>,
    df: Vec<f64>,
}

/// Fixed per-subdomain inputs assembled once: points, targets and normals.
#[derive(Debug, Clone)]
struct Batches {
    interior: Vec<Point>,
    source: Vec<f64>,
    /// coefficient of `u` in the residual
    k2: f64,
    /// boundary points followed by measurement points
    data_points: Vec<Point>,
    data_targets: Vec<f64>,
    boundary_len: usize,
    /// all interface points, group after group
    iface_points: Vec<Point>,
    iface_normals: Vec<Point>,
    iface_ranges: Vec<(usize, std::ops::Range<usize>)>,
}

/// Network, Robin parameter, optimizer state and constraint duals of one
/// subdomain.
#[derive(Debug, Clone)]
pub struct LocalModel {
    pub subdomain: usize,
    pub net: Mlp,
    pub alpha: f64,
    pub robin: RobinMode,
    pub boundary: Option<ConstraintGroup>,
    /// one group per interface, in the order of the subdomain's interface
    /// point sets
    pub interfaces: Vec<ConstraintGroup>,
    pub measurement: Option<ConstraintGroup>,
    net_opt: Optimizer,
    alpha_opt: Optimizer,
    batches: Batches,
    tapes: [JetTape; 3],
    /// multipliers that decreased across all dual updates so far
    pub lambda_decreases: usize,
    pub dual_updates: usize,
}

impl LocalModel {
    pub fn new(
        net: Mlp,
        problem: &ProblemSpec,
        points: &SubdomainPoints,
        settings: &TrainerSettings,
        alpha_init: f64,
    ) -> Self {
        let id = points.subdomain;
        let data = problem.subdomain(id);
        let source = points.interior.iter().map(|&p| problem.source(p)).collect();

        let mut data_points = Vec::new();
        let mut data_targets = Vec::new();
        let boundary_len = if data.has_boundary_data {
            points.boundary.len()
        } else {
            0
        };
        if boundary_len > 0 {
            data_points.extend_from_slice(&points.boundary);
            data_targets.extend(points.boundary.iter().map(|&p| problem.boundary(p)));
        }
        data_points.extend_from_slice(&data.measurements.points);
        data_targets.extend_from_slice(&data.measurements.values);

        let mut iface_points = Vec::new();
        let mut iface_normals = Vec::new();
        let mut iface_ranges = Vec::new();
        for set in &points.interfaces {
            let start = iface_points.len();
            iface_points.extend_from_slice(&set.points);
            iface_normals.extend_from_slice(&set.normals);
            iface_ranges.push((set.interface, start..iface_points.len()));
        }

        let group = |role, n| ConstraintGroup::new(role, n, settings.multipliers, settings.dual);
        let boundary = (boundary_len > 0).then(|| group(ConstraintRole::Boundary, boundary_len));
        let measurement =
            (!data.measurements.is_empty()).then(|| group(ConstraintRole::Measurement, data.measurements.len()));
        let interfaces = points
            .interfaces
            .iter()
            .map(|s| group(ConstraintRole::Interface { interface: s.interface }, s.points.len()))
            .collect();

        let alpha = match settings.robin {
            RobinMode::Constant { value } => value,
            _ => alpha_init,
        };
        Self {
            subdomain: id,
            net_opt: Optimizer::new(settings.optimizer, net.num_params()),
            alpha_opt: Optimizer::new(settings.robin_optimizer, 1),
            net,
            alpha,
            robin: settings.robin,
            boundary,
            interfaces,
            measurement,
            batches: Batches {
                interior: points.interior.clone(),
                source,
                k2: problem.residual_value_coefficient(),
                data_points,
                data_targets,
                boundary_len,
                iface_points,
                iface_normals,
                iface_ranges,
            },
            tapes: Default::default(),
            lambda_decreases: 0,
            dual_updates: 0,
        }
    }

    /// Interface ids in the order of [`LocalModel::interfaces`].
    pub fn interface_ids(&self) -> Vec<usize> {
        self.batches.iface_ranges.iter().map(|(id, _)| *id).collect()
    }

    /// One optimizer step on the network and (unless held fixed) the Robin
    /// parameter, which is then projected onto `[ROBIN_MIN, ROBIN_MAX]`.
    pub fn primal_step(&mut self, grad: &ParamGrad) {
        self.net_opt.step(self.net.params_mut(), &grad.params);
        if let RobinMode::Adaptive = self.robin {
            let mut a = [self.alpha];
            self.alpha_opt.step(&mut a, &[grad.robin]);
            self.alpha = a[0].clamp(ROBIN_MIN, ROBIN_MAX);
        }
    }

    /// Resets the duals of every interface group.
    pub fn reset_interface_duals(&mut self, lambda_only: bool) {
        for g in &mut self.interfaces {
            if lambda_only {
                g.dual.lambda.fill(1.0);
            } else {
                g.dual.reset();
            }
        }
    }

    /// Runs `epochs` epochs against frozen neighbour traces, given in the
    /// order of [`LocalModel::interfaces`].
    pub fn train(&mut self, traces: &[&InterfaceTrace], epochs: usize) -> Result<Vec<LossBreakdown>, TrainError> {
        assert_eq!(traces.len(), self.interfaces.len(), "one trace per interface");
        for ((id, range), trace) in self.batches.iface_ranges.iter().zip(traces) {
            if trace.values.len() != range.len() || trace.normal_derivatives.len() != range.len() {
                return Err(TrainError::TraceMismatch {
                    subdomain: self.subdomain,
                    interface: *id,
                    expected: range.len(),
                    got: trace.values.len(),
                });
            }
        }
        let mut history = Vec::with_capacity(epochs);
        for epoch in 0..epochs {
            history.push(self.epoch(traces, epoch)?);
        }
        Ok(history)
    }

    /// Augmented Lagrangian at the current parameters, its gradient with
    /// respect to the network weights and the Robin parameter, and the
    /// per-point constraint values. Traces must match the interface point
    /// counts.
    pub fn evaluate(&mut self, traces: &[&InterfaceTrace]) -> Result<Evaluation, (String, String)> {
        let diverged = |group: &str, detail: String| (group.to_string(), detail);
        let b = &self.batches;
        let mut grad = ParamGrad::zeros(&self.net);
        let [t_int, t_data, t_iface] = &mut self.tapes;

        // objective: mean squared PDE residual
        self.net.forward_into(&b.interior, JetOrder::Laplacian, t_int);
        let k2 = b.k2;
        let n = b.interior.len() as f64;
        let jets = t_int.jets();
        let mut objective = 0.0;
        let adj: Vec<JetAdjoint> = jets
            .iter()
            .zip(&b.source)
            .map(|(jet, s)| {
                let r = jet.laplacian() + k2 * jet.value - s;
                objective += r * r;
                let d = 2.0 * r / n;
                JetAdjoint {
                    value: d * k2,
                    hess_diag: [d, d],
                    ..Default::default()
                }
            })
            .collect();
        objective /= n;
        if !objective.is_finite() {
            return Err(diverged("objective", format!("J = {objective}")));
        }
        self.net.backward(t_int, &adj, &mut grad);

        // boundary data and measurements: C = (u - target)^2
        let mut lagrangian = objective;
        let (mut boundary_mean, mut measurement_mean) = (0.0, 0.0);
        let mut data_c = Vec::new();
        if !b.data_points.is_empty() {
            self.net.forward_into(&b.data_points, JetOrder::Value, t_data);
            let jets = t_data.jets();
            let gaps: Vec<f64> = jets.iter().zip(&b.data_targets).map(|(j, t)| j.value - t).collect();
            data_c = gaps.iter().map(|g| g * g).collect();
            let mut adj = vec![JetAdjoint::default(); gaps.len()];
            let split = b.boundary_len;
            for (group, range, mean_out) in [
                (&self.boundary, 0..split, &mut boundary_mean),
                (&self.measurement, split..gaps.len(), &mut measurement_mean),
            ] {
                let Some(group) = group else { continue };
                let c = &data_c[range.clone()];
                let (term, sens) = group
                    .term(c)
                    .map_err(|e| diverged(&group.role.to_string(), e.to_string()))?;
                if !term.is_finite() {
                    return Err(diverged(&group.role.to_string(), format!("term = {term}")));
                }
                lagrangian += term;
                *mean_out = mean(c);
                for (j, s) in range.zip(sens) {
                    adj[j].value = s * 2.0 * gaps[j];
                }
            }
            self.net.backward(t_data, &adj, &mut grad);
        }

        // Robin transmission: C = a^2 (u - u_n)^2 + (1 - a)^2 (du/dn - g_n)^2
        let alpha = self.alpha;
        let (wa, wf) = (alpha * alpha, (1.0 - alpha) * (1.0 - alpha));
        let mut iface_c = vec![0.0; b.iface_points.len()];
        let mut du = vec![0.0; b.iface_points.len()];
        let mut df = vec![0.0; b.iface_points.len()];
        let mut interface_mean = 0.0;
        if !b.iface_points.is_empty() {
            self.net.forward_into(&b.iface_points, JetOrder::Gradient, t_iface);
            let jets = t_iface.jets();
            let mut adj = vec![JetAdjoint::default(); jets.len()];
            for (gi, ((_, range), trace)) in b.iface_ranges.iter().zip(traces).enumerate() {
                for (k, j) in range.clone().enumerate() {
                    let normal = b.iface_normals[j];
                    du[j] = jets[j].value - trace.values[k];
                    df[j] = jets[j].normal_derivative(normal) - trace.normal_derivatives[k];
                    iface_c[j] = wa * du[j] * du[j] + wf * df[j] * df[j];
                }
                let group = &self.interfaces[gi];
                let c = &iface_c[range.clone()];
                let (term, sens) = group
                    .term(c)
                    .map_err(|e| diverged(&group.role.to_string(), e.to_string()))?;
                if !term.is_finite() {
                    return Err(diverged(&group.role.to_string(), format!("term = {term}")));
                }
                lagrangian += term;
                for (j, s) in range.clone().zip(sens) {
                    let normal = b.iface_normals[j];
                    let gflux = s * 2.0 * wf * df[j];
                    adj[j].value = s * 2.0 * wa * du[j];
                    adj[j].grad = [gflux * normal[0], gflux * normal[1]];
                    grad.robin += s * (2.0 * alpha * du[j] * du[j] - 2.0 * (1.0 - alpha) * df[j] * df[j]);
                }
            }
            interface_mean = mean(&iface_c);
            self.net.backward(t_iface, &adj, &mut grad);
        }

        if let Some(index) = grad.first_non_finite() {
            let what = if index == grad.params.len() {
                "robin parameter gradient".to_string()
            } else {
                format!("gradient entry {index}")
            };
            return Err(diverged("gradient", what));
        }
        if !lagrangian.is_finite() {
            return Err(diverged("lagrangian", format!("L = {lagrangian}")));
        }

        Ok(Evaluation {
            loss: LossBreakdown {
                epoch: 0,
                objective,
                boundary: boundary_mean,
                interface: interface_mean,
                measurement: measurement_mean,
                lagrangian,
            },
            grad,
            data_c,
            iface_c,
            du,
            df,
        })
    }

    fn epoch(&mut self, traces: &[&InterfaceTrace], epoch: usize) -> Result<LossBreakdown, TrainError> {
        let Evaluation {
            loss,
            grad,
            data_c,
            iface_c,
            du,
            df,
        } = self
            .evaluate(traces)
            .map_err(|(group, detail)| TrainError::Divergence {
                subdomain: self.subdomain,
                epoch,
                group,
                detail,
            })?;

        self.primal_step(&grad);
        if let RobinMode::ClosedForm = self.robin {
            let a = du.iter().map(|d| d * d).sum::<f64>();
            let bsum = df.iter().map(|d| d * d).sum::<f64>();
            if a + bsum > 0.0 {
                self.alpha = (bsum / (a + bsum)).clamp(ROBIN_MIN, ROBIN_MAX);
            }
        }

        // dual updates with this epoch's constraint values
        let b = &self.batches;
        let split = b.boundary_len;
        let mut decreased = 0;
        if let Some(g) = &mut self.boundary {
            decreased += g.dual_update(&data_c[..split]).expect("lengths checked");
            self.dual_updates += 1;
        }
        if let Some(g) = &mut self.measurement {
            decreased += g.dual_update(&data_c[split..]).expect("lengths checked");
            self.dual_updates += 1;
        }
        for (g, (_, range)) in self.interfaces.iter_mut().zip(&b.iface_ranges) {
            decreased += g.dual_update(&iface_c[range.clone()]).expect("lengths checked");
            self.dual_updates += 1;
        }
        self.lambda_decreases += decreased;

        Ok(LossBreakdown { epoch, ..loss })
    }
}

/// Trains `model` for `epochs` epochs; see [`LocalModel::train`].
pub fn train_local(
    model: &mut LocalModel,
    traces: &[&InterfaceTrace],
    epochs: usize,
) -> Result<Vec<LossBreakdown>, TrainError> {
    model.train(traces, epochs)
}
