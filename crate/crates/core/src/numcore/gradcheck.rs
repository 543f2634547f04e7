use super::{BoundParams, ParamSet, Tape, Var};
use crate::error::{Error, Result};

pub const DEFAULT_STEP: f64 = 1e-5;

/// Outcome of comparing tape gradients with central differences.
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheck {
    pub max_rel_error: f64,
    /// Parameter name and flat index of the worst element.
    pub worst: Option<(String, usize)>,
}

/// Compares the tape gradient of the scalar built by `f` against central
/// differences `(f(θ+h) − f(θ−h)) / 2h`, element by element.
///
/// The relative error of one element is
/// `|analytic − numeric| / (|analytic| + |numeric| + 1e-12)`; the maximum over
/// every parameter element is returned.
pub fn finite_diff_check<F>(f: F, params: &ParamSet, h: f64) -> Result<GradCheck>
where
    F: Fn(&mut Tape, &BoundParams) -> Result<Var>,
{
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::Oracle(format!("step must be positive, got {h}")));
    }
    let eval = |p: &ParamSet| -> Result<f64> {
        let mut tape = Tape::new();
        let bound = tape.bind(p);
        let loss = f(&mut tape, &bound)?;
        let v = tape.value(loss);
        if v.len() != 1 {
            return Err(Error::Oracle(format!(
                "function must return a scalar, got shape {:?}",
                v.shape()
            )));
        }
        let v = v.data()[0];
        if !v.is_finite() {
            return Err(Error::Oracle(format!("non-finite function value {v}")));
        }
        Ok(v)
    };

    let mut tape = Tape::new();
    let bound = tape.bind(params);
    let loss = f(&mut tape, &bound)?;
    if !tape.value(loss).is_finite() {
        return Err(Error::Oracle("non-finite function value".into()));
    }
    let analytic = tape.backward(loss, &bound)?;

    let mut result = GradCheck {
        max_rel_error: 0.0,
        worst: None,
    };
    let mut probe = params.clone();
    for (name, grad) in analytic.iter() {
        for i in 0..grad.len() {
            let original = params.get(name).expect("bound from params").data()[i];
            set(&mut probe, name, i, original + h);
            let up = eval(&probe)?;
            set(&mut probe, name, i, original - h);
            let down = eval(&probe)?;
            set(&mut probe, name, i, original);

            let numeric = (up - down) / (2.0 * h);
            let a = grad.data()[i];
            let rel = (a - numeric).abs() / (a.abs() + numeric.abs() + 1e-12);
            if result.worst.is_none() || rel > result.max_rel_error {
                result.max_rel_error = rel;
                result.worst = Some((name.to_string(), i));
            }
        }
    }
    Ok(result)
}

fn set(params: &mut ParamSet, name: &str, i: usize, value: f64) {
    params.get_mut(name).expect("known parameter").data_mut()[i] = value;
}
