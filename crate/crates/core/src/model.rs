//! Tabular finite-horizon POMDP model, dense beliefs and the exact Bayes update.
//!
//! Tables are dense and action-major:
//! - `transition[a][s][s']` = P(s'|s,a)
//! - `observation[a][s'][o]` = P(o|s',a)
//! - `reward[a][s]` = R(s,a)

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance used when checking that probability rows sum to one.
pub const PROBABILITY_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("{what} index {index} out of range (size {size})")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        size: usize,
    },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("impossible observation {observation} after action {action} under the given belief")]
    ImpossibleObservation { action: usize, observation: usize },

    #[error("belief has no probability mass")]
    EmptyBelief,

    #[error("model failed validation: {}", format_violations(.0))]
    Invalid(Vec<Violation>),
}

fn format_violations(violations: &[Violation]) -> String {
    violations
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

/// Which model table a [`Violation`] refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Table {
    Transition,
    Observation,
    Reward,
    InitialBelief,
}

impl fmt::Display for Table {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Table::Transition => "transition",
            Table::Observation => "observation",
            Table::Reward => "reward",
            Table::InitialBelief => "initial belief",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    /// A row sums to something other than one; magnitude is `1 - sum`.
    RowSum,
    /// A single entry lies outside [0, 1]; magnitude is the entry itself.
    OutOfRange,
    /// A NaN or infinite entry.
    NonFinite,
}

/// One defect found by [`PomdpModel::validate`].
///
/// `index` holds the table coordinates of the defect: `(a, s)` for a
/// transition row, `(a, s')` for an observation row, `(a, s)` for a reward
/// entry, `(s)` for the initial belief (empty for a whole-vector sum).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub table: Table,
    pub kind: ViolationKind,
    pub index: Vec<usize>,
    pub magnitude: f64,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let idx = self
            .index
            .iter()
            .map(|i| i.to_string())
            .collect::<Vec<_>>()
            .join(",");
        match self.kind {
            ViolationKind::RowSum => write!(
                f,
                "{} row ({}) sum deficit {:e}",
                self.table, idx, self.magnitude
            ),
            ViolationKind::OutOfRange => write!(
                f,
                "{} entry ({}) out of [0,1]: {}",
                self.table, idx, self.magnitude
            ),
            ViolationKind::NonFinite => {
                write!(f, "{} entry ({}) is not finite", self.table, idx)
            }
        }
    }
}

/// Optional human-readable names for states, actions and observations.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Labels {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub states: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub actions: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observations: Option<Vec<String>>,
}

impl Labels {
    pub fn state(&self, s: usize) -> String {
        label_or(&self.states, s, "s")
    }

    pub fn action(&self, a: usize) -> String {
        label_or(&self.actions, a, "a")
    }

    pub fn observation(&self, o: usize) -> String {
        label_or(&self.observations, o, "o")
    }
}

fn label_or(names: &Option<Vec<String>>, i: usize, prefix: &str) -> String {
    names
        .as_ref()
        .and_then(|n| n.get(i).cloned())
        .unwrap_or_else(|| format!("{prefix}{i}"))
}

/// Number of decision epochs. Always at least one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "usize", into = "usize")]
pub struct Horizon(usize);

impl Horizon {
    pub fn new(steps: usize) -> Option<Self> {
        (steps >= 1).then_some(Self(steps))
    }

    pub fn get(self) -> usize {
        self.0
    }
}

impl TryFrom<usize> for Horizon {
    type Error = String;

    fn try_from(value: usize) -> Result<Self, Self::Error> {
        Horizon::new(value).ok_or_else(|| "horizon must be at least 1".to_string())
    }
}

impl From<Horizon> for usize {
    fn from(h: Horizon) -> usize {
        h.0
    }
}

/// Non-normalized probability mass over states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DenseBelief(Vec<f64>);

impl DenseBelief {
    pub fn new(mass: Vec<f64>) -> Self {
        Self(mass)
    }

    pub fn zeros(num_states: usize) -> Self {
        Self(vec![0.0; num_states])
    }

    pub fn uniform(num_states: usize) -> Self {
        Self(vec![1.0 / num_states as f64; num_states])
    }

    pub fn point(num_states: usize, s: usize) -> Self {
        let mut v = vec![0.0; num_states];
        v[s] = 1.0;
        Self(v)
    }

    pub fn mass(&self) -> &[f64] {
        &self.0
    }

    pub fn mass_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.0.iter().sum()
    }

    pub fn dot(&self, values: &[f64]) -> f64 {
        self.0.iter().zip(values).map(|(b, v)| b * v).sum()
    }

    /// Scales to unit mass. Returns the previous total, or `None` if it was zero.
    pub fn normalize(&mut self) -> Option<f64> {
        let total = self.total();
        if total <= 0.0 || !total.is_finite() {
            return None;
        }
        self.0.iter_mut().for_each(|x| *x /= total);
        Some(total)
    }
}

impl AsRef<[f64]> for DenseBelief {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// A tabular POMDP. Immutable once constructed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PomdpModel {
    num_states: usize,
    num_actions: usize,
    num_observations: usize,
    transition: Vec<f64>,
    observation: Vec<f64>,
    reward: Vec<f64>,
    initial_belief: Vec<f64>,
    #[serde(default)]
    labels: Labels,
}

impl PomdpModel {
    /// Builds a model from flat tables after checking shapes only.
    ///
    /// Probabilities are not validated; call [`PomdpModel::validate`] to get
    /// a defect report, or use [`PomdpModel::new`].
    pub fn from_tables(
        num_states: usize,
        num_actions: usize,
        num_observations: usize,
        transition: Vec<f64>,
        observation: Vec<f64>,
        reward: Vec<f64>,
        initial_belief: Vec<f64>,
    ) -> Result<Self, ModelError> {
        if num_states == 0 || num_actions == 0 || num_observations == 0 {
            return Err(ModelError::DimensionMismatch(format!(
                "all dimensions must be positive (|S|={num_states}, |A|={num_actions}, |O|={num_observations})"
            )));
        }
        let check = |name: &str, got: usize, want: usize| {
            if got == want {
                Ok(())
            } else {
                Err(ModelError::DimensionMismatch(format!(
                    "{name} table has {got} entries, expected {want}"
                )))
            }
        };
        check(
            "transition",
            transition.len(),
            num_actions * num_states * num_states,
        )?;
        check(
            "observation",
            observation.len(),
            num_actions * num_states * num_observations,
        )?;
        check("reward", reward.len(), num_actions * num_states)?;
        check("initial belief", initial_belief.len(), num_states)?;
        Ok(Self {
            num_states,
            num_actions,
            num_observations,
            transition,
            observation,
            reward,
            initial_belief,
            labels: Labels::default(),
        })
    }

    /// Builds, validates (tolerance 1e-9) and renormalizes a model.
    pub fn new(
        num_states: usize,
        num_actions: usize,
        num_observations: usize,
        transition: Vec<f64>,
        observation: Vec<f64>,
        reward: Vec<f64>,
        initial_belief: Vec<f64>,
    ) -> Result<Self, ModelError> {
        Self::from_tables(
            num_states,
            num_actions,
            num_observations,
            transition,
            observation,
            reward,
            initial_belief,
        )?
        .validated()
    }

    /// Validates at 1e-9 and renormalizes every probability row.
    pub fn validated(mut self) -> Result<Self, ModelError> {
        let report = self.validate();
        if !report.is_empty() {
            return Err(ModelError::Invalid(report));
        }
        self.renormalize();
        Ok(self)
    }

    pub fn with_labels(mut self, labels: Labels) -> Self {
        self.labels = labels;
        self
    }

    /// Divides each probability row by its sum. Rows with zero sum are left alone.
    pub fn renormalize(&mut self) {
        let n = self.num_states;
        let no = self.num_observations;
        for row in self.transition.chunks_mut(n) {
            normalize_row(row);
        }
        for row in self.observation.chunks_mut(no) {
            normalize_row(row);
        }
        normalize_row(&mut self.initial_belief);
    }

    /// Returns every invariant violation. Empty means the model is well formed.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let (ns, na) = (self.num_states, self.num_actions);
        for a in 0..na {
            for s in 0..ns {
                let row = self.transition_row(a, s);
                check_row(&mut out, Table::Transition, row, &[a, s]);
            }
            for s2 in 0..ns {
                let row = self.observation_row(a, s2);
                check_row(&mut out, Table::Observation, row, &[a, s2]);
            }
            for s in 0..ns {
                let r = self.reward[a * ns + s];
                if !r.is_finite() {
                    out.push(Violation {
                        table: Table::Reward,
                        kind: ViolationKind::NonFinite,
                        index: vec![a, s],
                        magnitude: r,
                    });
                }
            }
        }
        check_row(&mut out, Table::InitialBelief, &self.initial_belief, &[]);
        out
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn num_observations(&self) -> usize {
        self.num_observations
    }

    pub fn labels(&self) -> &Labels {
        &self.labels
    }

    pub fn initial_belief(&self) -> DenseBelief {
        DenseBelief::new(self.initial_belief.clone())
    }

    pub fn initial_belief_slice(&self) -> &[f64] {
        &self.initial_belief
    }

    pub fn transition_table(&self) -> &[f64] {
        &self.transition
    }

    pub fn observation_table(&self) -> &[f64] {
        &self.observation
    }

    pub fn reward_table(&self) -> &[f64] {
        &self.reward
    }

    /// P(·|s,a) as a slice over next states.
    #[inline]
    pub fn transition_row(&self, a: usize, s: usize) -> &[f64] {
        let n = self.num_states;
        let start = (a * n + s) * n;
        &self.transition[start..start + n]
    }

    /// P(·|s',a) as a slice over observations.
    #[inline]
    pub fn observation_row(&self, a: usize, s_next: usize) -> &[f64] {
        let no = self.num_observations;
        let start = (a * self.num_states + s_next) * no;
        &self.observation[start..start + no]
    }

    /// R(·,a) as a slice over states.
    #[inline]
    pub fn reward_row(&self, a: usize) -> &[f64] {
        let n = self.num_states;
        &self.reward[a * n..(a + 1) * n]
    }

    #[inline]
    pub fn reward(&self, s: usize, a: usize) -> f64 {
        self.reward[a * self.num_states + s]
    }

    pub fn reward_bounds(&self) -> (f64, f64) {
        self.reward
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &r| {
                (lo.min(r), hi.max(r))
            })
    }

    fn check_index(&self, what: &'static str, index: usize, size: usize) -> Result<(), ModelError> {
        if index < size {
            Ok(())
        } else {
            Err(ModelError::IndexOutOfRange { what, index, size })
        }
    }

    /// P(o, s'|s, a) = P(s'|s,a) · P(o|s',a).
    pub fn joint_prob(
        &self,
        s: usize,
        a: usize,
        s_next: usize,
        o: usize,
    ) -> Result<f64, ModelError> {
        self.check_index("state", s, self.num_states)?;
        self.check_index("action", a, self.num_actions)?;
        self.check_index("next state", s_next, self.num_states)?;
        self.check_index("observation", o, self.num_observations)?;
        Ok(self.transition_row(a, s)[s_next] * self.observation_row(a, s_next)[o])
    }

    /// Predicted next-state mass Σ_s b(s) P(s'|s,a), written into `out`.
    pub fn predict_into(&self, belief: &[f64], a: usize, out: &mut [f64]) {
        out.iter_mut().for_each(|x| *x = 0.0);
        for (s, &b) in belief.iter().enumerate() {
            if b == 0.0 {
                continue;
            }
            for (o, &p) in out.iter_mut().zip(self.transition_row(a, s)) {
                *o += b * p;
            }
        }
    }

    /// Exact Bayes update. Returns the normalized posterior and P(o | b, a).
    pub fn exact_belief_update(
        &self,
        belief: &DenseBelief,
        a: usize,
        o: usize,
    ) -> Result<(DenseBelief, f64), ModelError> {
        if belief.len() != self.num_states {
            return Err(ModelError::DimensionMismatch(format!(
                "belief has {} entries, model has {} states",
                belief.len(),
                self.num_states
            )));
        }
        self.check_index("action", a, self.num_actions)?;
        self.check_index("observation", o, self.num_observations)?;
        if belief.total() <= 0.0 {
            return Err(ModelError::EmptyBelief);
        }
        let mut next = vec![0.0; self.num_states];
        self.predict_into(belief.mass(), a, &mut next);
        for (s2, x) in next.iter_mut().enumerate() {
            *x *= self.observation_row(a, s2)[o];
        }
        let mut posterior = DenseBelief::new(next);
        match posterior.normalize() {
            Some(norm) => Ok((posterior, norm)),
            None => Err(ModelError::ImpossibleObservation {
                action: a,
                observation: o,
            }),
        }
    }

    pub(crate) fn check_belief(&self, belief: &DenseBelief) -> Result<(), ModelError> {
        if belief.len() == self.num_states {
            Ok(())
        } else {
            Err(ModelError::DimensionMismatch(format!(
                "belief has {} entries, model has {} states",
                belief.len(),
                self.num_states
            )))
        }
    }
}

fn normalize_row(row: &mut [f64]) {
    let sum: f64 = row.iter().sum();
    if sum > 0.0 && sum.is_finite() {
        row.iter_mut().for_each(|x| *x /= sum);
    }
}

fn check_row(out: &mut Vec<Violation>, table: Table, row: &[f64], index: &[usize]) {
    let mut clean = true;
    for (i, &p) in row.iter().enumerate() {
        let mut at = index.to_vec();
        at.push(i);
        if !p.is_finite() {
            out.push(Violation {
                table,
                kind: ViolationKind::NonFinite,
                index: at,
                magnitude: p,
            });
            clean = false;
        } else if !(0.0..=1.0).contains(&p) {
            out.push(Violation {
                table,
                kind: ViolationKind::OutOfRange,
                index: at,
                magnitude: p,
            });
            clean = false;
        }
    }
    if clean {
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > PROBABILITY_TOLERANCE {
            out.push(Violation {
                table,
                kind: ViolationKind::RowSum,
                index: index.to_vec(),
                magnitude: 1.0 - sum,
            });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models;

    fn two_state(transition_row0: [f64; 2]) -> PomdpModel {
        PomdpModel::from_tables(
            2,
            1,
            1,
            vec![transition_row0[0], transition_row0[1], 0.0, 1.0],
            vec![1.0, 1.0],
            vec![0.0, 0.0],
            vec![0.5, 0.5],
        )
        .unwrap()
    }

    #[test]
    fn well_formed_model_has_empty_report() {
        assert!(two_state([0.3, 0.7]).validate().is_empty());
    }

    #[test]
    fn short_transition_row_reports_deficit() {
        let report = two_state([0.4, 0.5]).validate();
        assert_eq!(report.len(), 1);
        let v = &report[0];
        assert_eq!(v.table, Table::Transition);
        assert_eq!(v.kind, ViolationKind::RowSum);
        assert_eq!(v.index, vec![0, 0]);
        assert!((v.magnitude - 0.1).abs() < 1e-12);
        assert!(PomdpModel::new(
            2,
            1,
            1,
            vec![0.4, 0.5, 0.0, 1.0],
            vec![1.0, 1.0],
            vec![0.0; 2],
            vec![0.5, 0.5]
        )
        .is_err());
    }

    #[test]
    fn negative_rewards_are_fine() {
        let m = PomdpModel::from_tables(1, 1, 1, vec![1.0], vec![1.0], vec![-100.0], vec![1.0])
            .unwrap();
        assert!(m.validate().is_empty());
    }

    #[test]
    fn nan_reward_is_reported() {
        let m = PomdpModel::from_tables(1, 1, 1, vec![1.0], vec![1.0], vec![f64::NAN], vec![1.0])
            .unwrap();
        let report = m.validate();
        assert_eq!(report.len(), 1);
        assert_eq!(report[0].kind, ViolationKind::NonFinite);
    }

    #[test]
    fn joint_prob_is_product() {
        let m = PomdpModel::new(
            2,
            1,
            2,
            vec![0.3, 0.7, 0.0, 1.0],
            vec![0.5, 0.5, 0.2, 0.8],
            vec![0.0; 2],
            vec![1.0, 0.0],
        )
        .unwrap();
        assert!((m.joint_prob(0, 0, 1, 0).unwrap() - 0.14).abs() < 1e-15);
        assert_eq!(m.joint_prob(1, 0, 1, 1).unwrap(), 0.8);
        assert_eq!(m.joint_prob(1, 0, 0, 0).unwrap(), 0.0);
        assert!(matches!(
            m.joint_prob(2, 0, 0, 0),
            Err(ModelError::IndexOutOfRange { what: "state", .. })
        ));
        assert!(m.joint_prob(0, 0, 0, 2).is_err());
    }

    #[test]
    fn single_state_update_keeps_belief() {
        let m = PomdpModel::new(1, 1, 2, vec![1.0], vec![0.3, 0.7], vec![0.0], vec![1.0]).unwrap();
        let (b, norm) = m
            .exact_belief_update(&DenseBelief::point(1, 0), 0, 1)
            .unwrap();
        assert_eq!(b.mass(), &[1.0]);
        assert!((norm - 0.7).abs() < 1e-15);
    }

    #[test]
    fn perfect_observation_collapses_belief() {
        let m = PomdpModel::new(
            2,
            1,
            2,
            vec![1.0, 0.0, 0.0, 1.0],
            vec![1.0, 0.0, 0.0, 1.0],
            vec![0.0; 2],
            vec![0.5, 0.5],
        )
        .unwrap();
        let (b, norm) = m
            .exact_belief_update(&DenseBelief::uniform(2), 0, 0)
            .unwrap();
        assert_eq!(b.mass(), &[1.0, 0.0]);
        assert_eq!(norm, 0.5);
    }

    #[test]
    fn impossible_observation_is_signalled() {
        let m = PomdpModel::new(
            2,
            1,
            2,
            vec![1.0, 0.0, 0.0, 1.0],
            vec![1.0, 0.0, 0.0, 1.0],
            vec![0.0; 2],
            vec![1.0, 0.0],
        )
        .unwrap();
        let err = m
            .exact_belief_update(&DenseBelief::point(2, 0), 0, 1)
            .unwrap_err();
        assert!(matches!(err, ModelError::ImpossibleObservation { .. }));
        assert_eq!(
            m.exact_belief_update(&DenseBelief::zeros(2), 0, 0)
                .unwrap_err(),
            ModelError::EmptyBelief
        );
    }

    #[test]
    fn tiger_listen_hear_left() {
        let m = models::tiger();
        // Brute-force Σ_{s,s'} over the joint table.
        let b = [0.5, 0.5];
        let mut post = [0.0; 2];
        for (s, bs) in b.iter().enumerate() {
            for (s2, p) in post.iter_mut().enumerate() {
                *p += bs * m.joint_prob(s, 0, s2, 0).unwrap();
            }
        }
        let norm: f64 = post.iter().sum();
        assert!((norm - 0.5).abs() < 1e-12);
        let (upd, z) = m
            .exact_belief_update(&DenseBelief::uniform(2), 0, 0)
            .unwrap();
        assert!((z - 0.5).abs() < 1e-12);
        assert!((upd.mass()[0] - 0.85).abs() < 1e-12);
        assert!((upd.mass()[1] - 0.15).abs() < 1e-12);
        assert!((upd.mass()[0] - post[0] / norm).abs() < 1e-12);
    }

    #[test]
    fn horizon_rejects_zero() {
        assert!(Horizon::new(0).is_none());
        assert_eq!(Horizon::new(3).unwrap().get(), 3);
        assert!(serde_json::from_str::<Horizon>("0").is_err());
    }
}
