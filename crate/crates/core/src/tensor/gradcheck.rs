use super::{ParamId, ParamStore, Tape, Tensor, TensorError, Var};

/// Outcome of comparing reverse-mode gradients with central differences.
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    /// Parameter and flat index where the largest error occurred.
    pub worst: Option<(ParamId, usize)>,
    pub coordinates: usize,
}

/// `|a - n| / max(1e-8, |a| + |n|)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8)
}

/// Checks every coordinate of every parameter in `params` against the
/// central difference `(f(θ+h) - f(θ-h)) / 2h`.
///
/// `f` must build a scalar loss on the given tape, deterministically.
pub fn gradient_check<F>(f: F, params: &ParamStore, h: f64) -> Result<GradCheckReport, TensorError>
where
    F: Fn(&mut Tape, &ParamStore) -> Result<Var, TensorError>,
{
    let mut tape = Tape::new();
    let loss = f(&mut tape, params)?;
    let grads = tape.backward(loss)?;
    let analytic = tape.param_gradients(&grads, params);

    let eval = |p: &ParamStore| -> Result<f64, TensorError> {
        let mut t = Tape::new();
        let l = f(&mut t, p)?;
        Ok(t.value(l).item())
    };

    let mut work = params.clone();
    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        worst: None,
        coordinates: 0,
    };
    for id in params.ids() {
        for j in 0..params.get(id).len() {
            let orig = params.get(id).data()[j];
            work.get_mut(id).data_mut()[j] = orig + h;
            let up = eval(&work)?;
            work.get_mut(id).data_mut()[j] = orig - h;
            let down = eval(&work)?;
            work.get_mut(id).data_mut()[j] = orig;
            let numeric = (up - down) / (2.0 * h);
            let err = relative_error(analytic[id.index()].data()[j], numeric);
            report.coordinates += 1;
            if err > report.max_rel_err {
                report.max_rel_err = err;
                report.worst = Some((id, j));
            }
        }
    }
    Ok(report)
}

/// Relative error between the reverse-mode directional derivative along
/// `direction` (one tensor per parameter, same shapes) and the central
/// difference `(f(θ+hv) - f(θ-hv)) / 2h`.
///
/// Every coordinate contributes, so blocks whose individual partials sit
/// below the rounding noise of a per-coordinate difference are still
/// covered.
pub fn directional_check<F>(f: F, params: &ParamStore, direction: &[Tensor], h: f64) -> Result<f64, TensorError>
where
    F: Fn(&mut Tape, &ParamStore) -> Result<Var, TensorError>,
{
    if direction.len() != params.len() {
        return Err(TensorError::IndexOutOfRange {
            op: "directional_check",
            index: direction.len(),
            extent: params.len(),
        });
    }
    for (id, d) in params.ids().zip(direction) {
        if d.shape() != params.get(id).shape() {
            return Err(TensorError::ShapeMismatch {
                op: "directional_check",
                left: params.get(id).shape(),
                right: d.shape(),
            });
        }
    }
    let mut tape = Tape::new();
    let loss = f(&mut tape, params)?;
    let grads = tape.backward(loss)?;
    let analytic: f64 = tape
        .param_gradients(&grads, params)
        .iter()
        .zip(direction)
        .map(|(g, d)| g.data().iter().zip(d.data()).map(|(a, b)| a * b).sum::<f64>())
        .sum();

    let shifted = |step: f64| -> Result<f64, TensorError> {
        let mut p = params.clone();
        for (id, d) in params.ids().zip(direction) {
            for (x, v) in p.get_mut(id).data_mut().iter_mut().zip(d.data()) {
                *x += step * v;
            }
        }
        let mut t = Tape::new();
        let l = f(&mut t, &p)?;
        Ok(t.value(l).item())
    };
    let numeric = (shifted(h)? - shifted(-h)?) / (2.0 * h);
    Ok(relative_error(analytic, numeric))
}
