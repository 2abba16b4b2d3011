//! Synthetic objectives used by the demos, tests and the builtin evaluator.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::kernel::Domain;
use crate::protocol::{Evaluator, EvaluatorRequest, EvaluatorResponse, WireOp};

pub trait Objective: Send + Sync {
    fn name(&self) -> &str;
    fn domain(&self) -> Domain;
    fn value(&self, x: &[f64]) -> f64;
    fn gradient(&self, x: &[f64]) -> Vec<f64>;

    /// Named components for multi-effect problems.
    fn component(&self, id: &str, x: &[f64]) -> Option<f64> {
        let _ = (id, x);
        None
    }

    /// Reported evaluation cost of an operator.
    fn cost(&self, op: &WireOp) -> Option<f64> {
        let _ = op;
        None
    }
}

/// `(x − 0.6)²` on `[−2, 2]`.
pub struct Quadratic;

impl Objective for Quadratic {
    fn name(&self) -> &str {
        "quadratic"
    }
    fn domain(&self) -> Domain {
        Domain::new(vec![-2.0], vec![2.0]).expect("static domain")
    }
    fn value(&self, x: &[f64]) -> f64 {
        (x[0] - 0.6).powi(2)
    }
    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        vec![2.0 * (x[0] - 0.6)]
    }
}

/// `Σ x_i²` on `[−2, 2]^d`.
pub struct Sphere {
    pub dim: usize,
}

impl Objective for Sphere {
    fn name(&self) -> &str {
        "sphere"
    }
    fn domain(&self) -> Domain {
        Domain::new(vec![-2.0; self.dim], vec![2.0; self.dim]).expect("static domain")
    }
    fn value(&self, x: &[f64]) -> f64 {
        x.iter().map(|v| v * v).sum()
    }
    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        x.iter().map(|v| 2.0 * v).collect()
    }
}

/// The Branin–Hoo function on `[−5, 10] × [0, 15]`; global minimum
/// `0.397887` at three points.
pub struct Branin;

impl Branin {
    const B: f64 = 5.1 / (4.0 * PI * PI);
    const C: f64 = 5.0 / PI;
    const T: f64 = 1.0 / (8.0 * PI);
}

impl Objective for Branin {
    fn name(&self) -> &str {
        "branin"
    }
    fn domain(&self) -> Domain {
        Domain::new(vec![-5.0, 0.0], vec![10.0, 15.0]).expect("static domain")
    }
    fn value(&self, x: &[f64]) -> f64 {
        let inner = x[1] - Self::B * x[0] * x[0] + Self::C * x[0] - 6.0;
        inner * inner + 10.0 * (1.0 - Self::T) * x[0].cos() + 10.0
    }
    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let inner = x[1] - Self::B * x[0] * x[0] + Self::C * x[0] - 6.0;
        vec![2.0 * inner * (-2.0 * Self::B * x[0] + Self::C) - 10.0 * (1.0 - Self::T) * x[0].sin(), 2.0 * inner]
    }
}

fn bump(x: &[f64], center: &[f64], width: f64) -> f64 {
    let r2: f64 = x.iter().zip(center).map(|(a, c)| (a - c).powi(2)).sum();
    (-0.5 * r2 / (width * width)).exp()
}

fn bump_grad(x: &[f64], center: &[f64], width: f64) -> Vec<f64> {
    let b = bump(x, center, width);
    x.iter().zip(center).map(|(a, c)| -b * (a - c) / (width * width)).collect()
}

/// Negative mineral content on `[0, 1]²`.  The richest deposit sits inside
/// the estate `[0.35, 0.65]²`, where drilling is not allowed.
pub struct Mineral;

impl Mineral {
    pub const ESTATE_LOWER: [f64; 2] = [0.35, 0.35];
    pub const ESTATE_UPPER: [f64; 2] = [0.65, 0.65];
    const DEPOSITS: [([f64; 2], f64, f64); 3] =
        [([0.52, 0.55], 0.12, 1.2), ([0.15, 0.2], 0.15, 0.7), ([0.85, 0.8], 0.1, 0.5)];
}

impl Objective for Mineral {
    fn name(&self) -> &str {
        "mineral"
    }
    fn domain(&self) -> Domain {
        Domain::new(vec![0.0, 0.0], vec![1.0, 1.0]).expect("static domain")
    }
    fn value(&self, x: &[f64]) -> f64 {
        -Self::DEPOSITS.iter().map(|(c, w, a)| a * bump(x, c, *w)).sum::<f64>()
    }
    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; 2];
        for (c, w, a) in Self::DEPOSITS {
            for (gi, bi) in g.iter_mut().zip(bump_grad(x, &c, w)) {
                *gi -= a * bi;
            }
        }
        g
    }
}

/// A smooth 1-d objective `Z` observed only through `Z + ε`, where `ε` is a
/// deterministic, narrowly correlated contamination.
pub struct NoisyMineral;

impl NoisyMineral {
    pub fn objective(x: f64) -> f64 {
        -(1.0 * bump(&[x], &[0.62], 0.12) + 0.6 * bump(&[x], &[0.2], 0.1))
    }
    pub fn contamination(x: f64) -> f64 {
        0.08 * (37.0 * x + 0.3).sin() * (11.0 * x).cos()
    }
}

impl Objective for NoisyMineral {
    fn name(&self) -> &str {
        "noisy_mineral"
    }
    fn domain(&self) -> Domain {
        Domain::new(vec![0.0], vec![1.0]).expect("static domain")
    }
    fn value(&self, x: &[f64]) -> f64 {
        Self::objective(x[0]) + Self::contamination(x[0])
    }
    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let h = 1e-6;
        vec![(self.value(&[x[0] + h]) - self.value(&[x[0] - h])) / (2.0 * h)]
    }
    fn component(&self, id: &str, x: &[f64]) -> Option<f64> {
        match id {
            "Z" => Some(Self::objective(x[0])),
            "eps" => Some(Self::contamination(x[0])),
            _ => None,
        }
    }
}

/// Forrester function as the high-fidelity model `Z`, and
/// `W = Z + 3(x − 0.5) − 1` as a cheap low-fidelity model.
pub struct Forrester;

impl Forrester {
    pub fn high(x: f64) -> f64 {
        (6.0 * x - 2.0).powi(2) * (12.0 * x - 4.0).sin()
    }
    pub fn low(x: f64) -> f64 {
        Self::high(x) + 3.0 * (x - 0.5) - 1.0
    }
}

impl Objective for Forrester {
    fn name(&self) -> &str {
        "forrester"
    }
    fn domain(&self) -> Domain {
        Domain::new(vec![0.0], vec![1.0]).expect("static domain")
    }
    fn value(&self, x: &[f64]) -> f64 {
        Self::high(x[0])
    }
    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let t = 6.0 * x[0] - 2.0;
        let s = 12.0 * x[0] - 4.0;
        vec![12.0 * t * s.sin() + 12.0 * t * t * s.cos()]
    }
    fn component(&self, id: &str, x: &[f64]) -> Option<f64> {
        match id {
            "Z" => Some(Self::high(x[0])),
            "W" => Some(Self::low(x[0])),
            _ => None,
        }
    }
    fn cost(&self, op: &WireOp) -> Option<f64> {
        match op {
            WireOp::Component(id) if id == "W" => Some(0.1),
            _ => Some(1.0),
        }
    }
}

/// 1-d function with a deep narrow well and a shallower wide one; under
/// input perturbations the wide well has the lower average.
pub struct TwoWells;

impl TwoWells {
    pub const WELLS: [(f64, f64, f64); 2] = [(1.0, 0.15, 2.0), (2.8, 0.6, 1.0)];

    /// `E f(x + ε)` for `ε ~ N(0, var)`, in closed form.
    pub fn smoothed(x: f64, var: f64) -> f64 {
        -Self::WELLS
            .iter()
            .map(|(c, w, a)| {
                let s2 = w * w + var;
                a * w / s2.sqrt() * (-0.5 * (x - c).powi(2) / s2).exp()
            })
            .sum::<f64>()
    }
}

impl Objective for TwoWells {
    fn name(&self) -> &str {
        "two_wells"
    }
    fn domain(&self) -> Domain {
        Domain::new(vec![0.0], vec![4.0]).expect("static domain")
    }
    fn value(&self, x: &[f64]) -> f64 {
        -Self::WELLS.iter().map(|(c, w, a)| a * bump(x, &[*c], *w)).sum::<f64>()
    }
    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        vec![-Self::WELLS.iter().map(|(c, w, a)| a * bump_grad(x, &[*c], *w)[0]).sum::<f64>()]
    }
}

pub const BUILTIN_NAMES: [&str; 7] =
    ["quadratic", "sphere", "branin", "mineral", "noisy_mineral", "forrester", "two_wells"];

pub fn builtin(name: &str) -> Option<Box<dyn Objective>> {
    Some(match name {
        "quadratic" => Box::new(Quadratic),
        "sphere" => Box::new(Sphere { dim: 2 }),
        "branin" => Box::new(Branin),
        "mineral" => Box::new(Mineral),
        "noisy_mineral" => Box::new(NoisyMineral),
        "forrester" => Box::new(Forrester),
        "two_wells" => Box::new(TwoWells),
        _ => return None,
    })
}

/// Answers wire requests from an in-process objective.
pub struct BuiltinEvaluator {
    objective: Box<dyn Objective>,
}

impl BuiltinEvaluator {
    pub fn new(objective: Box<dyn Objective>) -> Self {
        Self { objective }
    }

    pub fn by_name(name: &str) -> Result<Self> {
        builtin(name).map(Self::new).ok_or_else(|| Error::InvalidConfig(format!("unknown builtin problem `{name}`")))
    }

    pub fn objective(&self) -> &dyn Objective {
        self.objective.as_ref()
    }

    fn answer(&self, q: &EvaluatorRequest) -> EvaluatorResponse {
        let mut values = Vec::with_capacity(q.operators.len());
        let mut cost = None::<f64>;
        for desc in &q.operators {
            let op = match desc.parse::<WireOp>() {
                Ok(op) => op,
                Err(e) => {
                    return EvaluatorResponse { id: q.id, values: vec![], cost: None, error: Some(e.to_string()) }
                }
            };
            let v = match &op {
                WireOp::Value => Some(self.objective.value(&q.location)),
                WireOp::Grad(a) => self.objective.gradient(&q.location).get(*a).copied(),
                WireOp::Component(id) => self.objective.component(id, &q.location),
                WireOp::Conv | WireOp::Curv => None,
            };
            match v {
                Some(v) => values.push(v),
                None => {
                    return EvaluatorResponse {
                        id: q.id,
                        values: vec![],
                        cost: None,
                        error: Some(format!("operator `{desc}` not supported by `{}`", self.objective.name())),
                    }
                }
            }
            if let Some(c) = self.objective.cost(&op) {
                cost = Some(cost.unwrap_or(0.0).max(c));
            }
        }
        EvaluatorResponse { id: q.id, values, cost, error: None }
    }
}

impl Evaluator for BuiltinEvaluator {
    fn evaluate(&mut self, requests: &[EvaluatorRequest]) -> Result<Vec<EvaluatorResponse>> {
        Ok(requests.iter().map(|q| self.answer(q)).collect())
    }
}
