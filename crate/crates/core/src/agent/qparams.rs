//! Q-function parameterizations with an online and a Polyak-tracked target
//! copy.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::Transition;
use crate::soft_bellman::QFunction;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QRepresentation {
    #[default]
    Tabular,
    /// `Q(s, a) = ⟨θ_a, φ(s)⟩` with one-hot `φ`.
    LinearFeatures,
}

/// Fixed state features `φ(s)`.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMap {
    dim: usize,
    /// Row-major `[s][k]`.
    rows: Vec<f64>,
}

impl FeatureMap {
    pub fn one_hot(num_states: usize) -> Self {
        let mut rows = vec![0.0; num_states * num_states];
        for s in 0..num_states {
            rows[s * num_states + s] = 1.0;
        }
        Self { dim: num_states, rows }
    }

    pub fn from_rows(dim: usize, rows: Vec<f64>) -> Result<Self> {
        if dim == 0 || !rows.len().is_multiple_of(dim) {
            return Err(Error::Shape {
                expected: format!("a multiple of {dim} feature entries"),
                got: rows.len().to_string(),
            });
        }
        if rows.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("features".into()));
        }
        Ok(Self { dim, rows })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_states(&self) -> usize {
        self.rows.len() / self.dim
    }

    #[inline]
    pub fn phi(&self, s: usize) -> &[f64] {
        &self.rows[s * self.dim..(s + 1) * self.dim]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LinearQ {
    features: Arc<FeatureMap>,
    num_actions: usize,
    /// Row-major `[a][k]`.
    theta: Vec<f64>,
}

impl LinearQ {
    pub fn zeros(features: Arc<FeatureMap>, num_actions: usize) -> Self {
        let theta = vec![0.0; num_actions * features.dim()];
        Self {
            features,
            num_actions,
            theta,
        }
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn theta_mut(&mut self) -> &mut [f64] {
        &mut self.theta
    }

    pub fn features(&self) -> &FeatureMap {
        &self.features
    }

    #[inline]
    fn weights(&self, a: usize) -> &[f64] {
        let d = self.features.dim();
        &self.theta[a * d..(a + 1) * d]
    }

    pub fn value(&self, s: usize, a: usize) -> f64 {
        self.features.phi(s).iter().zip(self.weights(a)).map(|(x, w)| x * w).sum()
    }
}

/// One Q-function, tabular or linear.
#[derive(Clone, Debug, PartialEq)]
pub enum QModel {
    Tabular(QFunction),
    Linear(LinearQ),
}

impl QModel {
    pub fn new(representation: QRepresentation, num_states: usize, num_actions: usize) -> Self {
        match representation {
            QRepresentation::Tabular => QModel::Tabular(QFunction::zeros(num_states, num_actions)),
            QRepresentation::LinearFeatures => {
                QModel::Linear(LinearQ::zeros(Arc::new(FeatureMap::one_hot(num_states)), num_actions))
            }
        }
    }

    pub fn num_actions(&self) -> usize {
        match self {
            QModel::Tabular(q) => q.num_actions(),
            QModel::Linear(l) => l.num_actions,
        }
    }

    pub fn num_states(&self) -> usize {
        match self {
            QModel::Tabular(q) => q.num_states(),
            QModel::Linear(l) => l.features.num_states(),
        }
    }

    #[inline]
    pub fn value(&self, s: usize, a: usize) -> f64 {
        match self {
            QModel::Tabular(q) => q.get(s, a),
            QModel::Linear(l) => l.value(s, a),
        }
    }

    /// Writes `Q(s, ·)` into `out`.
    pub fn row_into(&self, s: usize, out: &mut Vec<f64>) {
        out.clear();
        match self {
            QModel::Tabular(q) => out.extend_from_slice(q.row(s)),
            QModel::Linear(l) => out.extend((0..l.num_actions).map(|a| l.value(s, a))),
        }
    }

    pub fn row(&self, s: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_actions());
        self.row_into(s, &mut out);
        out
    }

    /// Dense table of every `Q(s, a)`.
    pub fn to_table(&self) -> QFunction {
        match self {
            QModel::Tabular(q) => q.clone(),
            QModel::Linear(_) => {
                let (ns, na) = (self.num_states(), self.num_actions());
                let values = (0..ns).flat_map(|s| self.row(s)).collect();
                QFunction::from_values(ns, na, values).expect("finite parameters give finite values")
            }
        }
    }

    pub fn params(&self) -> &[f64] {
        match self {
            QModel::Tabular(q) => q.values(),
            QModel::Linear(l) => &l.theta,
        }
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        match self {
            QModel::Tabular(q) => q.values_mut(),
            QModel::Linear(l) => &mut l.theta,
        }
    }

    /// `J(θ) = 1/(2m) Σ_i (Q(s_i, a_i) − y_i)²`.
    pub fn empirical_risk(&self, batch: &[Transition], targets: &[f64]) -> f64 {
        let m = batch.len() as f64;
        batch
            .iter()
            .zip(targets)
            .map(|(t, y)| (self.value(t.state, t.action) - y).powi(2))
            .sum::<f64>()
            / (2.0 * m)
    }

    /// `∇_θ J(θ)`, flattened like [`QModel::params`].
    pub fn risk_gradient(&self, batch: &[Transition], targets: &[f64]) -> Vec<f64> {
        let m = batch.len() as f64;
        let mut grad = vec![0.0; self.params().len()];
        match self {
            QModel::Tabular(q) => {
                let na = q.num_actions();
                for (t, y) in batch.iter().zip(targets) {
                    grad[t.state * na + t.action] += (q.get(t.state, t.action) - y) / m;
                }
            }
            QModel::Linear(l) => {
                let d = l.features.dim();
                for (t, y) in batch.iter().zip(targets) {
                    let err = (l.value(t.state, t.action) - y) / m;
                    let g = &mut grad[t.action * d..(t.action + 1) * d];
                    for (gk, xk) in g.iter_mut().zip(l.features.phi(t.state)) {
                        *gk += err * xk;
                    }
                }
            }
        }
        grad
    }
}

/// Online parameters `θ` and target parameters `θ̄`.
#[derive(Clone, Debug, PartialEq)]
pub struct QParams {
    pub online: QModel,
    pub target: QModel,
}

impl QParams {
    pub fn new(representation: QRepresentation, num_states: usize, num_actions: usize) -> Self {
        let online = QModel::new(representation, num_states, num_actions);
        Self {
            target: online.clone(),
            online,
        }
    }

    /// Both copies start from `q`.
    pub fn from_table(q: QFunction) -> Self {
        let online = QModel::Tabular(q);
        Self {
            target: online.clone(),
            online,
        }
    }
}
