//! Evaluator wire records and the evaluator abstraction.
//!
//! An evaluator receives requests `{id, location, operators}` and answers
//! `{id, values, cost?, error?}` with one value per operator.  Operator
//! descriptors are `value`, `grad:<axis>`, `component:<id>`, `conv` and
//! `curv`; builtin-style objectives only ever see `value`, `grad:*` and
//! `component:*`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluatorRequest {
    pub id: u64,
    pub location: Vec<f64>,
    pub operators: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluatorResponse {
    pub id: u64,
    #[serde(default)]
    pub values: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cost: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum WireOp {
    Value,
    Grad(usize),
    Component(String),
    Conv,
    Curv,
}

impl FromStr for WireOp {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "value" => Ok(WireOp::Value),
            "conv" => Ok(WireOp::Conv),
            "curv" => Ok(WireOp::Curv),
            _ => {
                if let Some(axis) = s.strip_prefix("grad:") {
                    axis.parse()
                        .map(WireOp::Grad)
                        .map_err(|_| Error::InvalidOperator(format!("bad gradient descriptor `{s}`")))
                } else if let Some(id) = s.strip_prefix("component:").filter(|id| !id.is_empty()) {
                    Ok(WireOp::Component(id.to_string()))
                } else {
                    Err(Error::InvalidOperator(format!("unknown operator descriptor `{s}`")))
                }
            }
        }
    }
}

impl fmt::Display for WireOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WireOp::Value => f.write_str("value"),
            WireOp::Grad(a) => write!(f, "grad:{a}"),
            WireOp::Component(id) => write!(f, "component:{id}"),
            WireOp::Conv => f.write_str("conv"),
            WireOp::Curv => f.write_str("curv"),
        }
    }
}

/// Anything that can evaluate a batch of requests.  Responses may come back
/// in any order; they are matched by id.
pub trait Evaluator {
    fn evaluate(&mut self, requests: &[EvaluatorRequest]) -> Result<Vec<EvaluatorResponse>>;
}

impl<E: Evaluator + ?Sized> Evaluator for Box<E> {
    fn evaluate(&mut self, requests: &[EvaluatorRequest]) -> Result<Vec<EvaluatorResponse>> {
        (**self).evaluate(requests)
    }
}

/// Reorders `responses` to follow `requests`, checking ids, arity, finiteness
/// and error fields.
pub fn match_responses(
    requests: &[EvaluatorRequest],
    responses: Vec<EvaluatorResponse>,
) -> Result<Vec<EvaluatorResponse>> {
    let fail = |message: String| Error::EvaluatorFailure { attempts: 1, message };
    let mut slots: Vec<Option<EvaluatorResponse>> = vec![None; requests.len()];
    for r in responses {
        let pos = requests
            .iter()
            .position(|q| q.id == r.id)
            .ok_or_else(|| fail(format!("response for unknown request id {}", r.id)))?;
        if slots[pos].is_some() {
            return Err(fail(format!("duplicate response for request id {}", r.id)));
        }
        slots[pos] = Some(r);
    }
    requests
        .iter()
        .zip(slots)
        .map(|(q, r)| {
            let r = r.ok_or_else(|| fail(format!("missing response for request id {}", q.id)))?;
            check_response(q, &r).map_err(fail)?;
            Ok(r)
        })
        .collect()
}

pub(crate) fn check_response(q: &EvaluatorRequest, r: &EvaluatorResponse) -> std::result::Result<(), String> {
    if let Some(e) = &r.error {
        return Err(format!("request {} failed: {e}", q.id));
    }
    if r.values.len() != q.operators.len() {
        return Err(format!(
            "request {} asked for {} operator(s) but got {} value(s)",
            q.id,
            q.operators.len(),
            r.values.len()
        ));
    }
    if r.values.iter().any(|v| !v.is_finite()) {
        return Err(format!("request {} returned a non-finite value", q.id));
    }
    Ok(())
}
