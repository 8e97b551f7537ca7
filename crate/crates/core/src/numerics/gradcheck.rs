use super::{NumericsError, ParamSet, Tape, Var};

/// Worst relative disagreement between tape gradients and central finite
/// differences, over every scalar in `params`.
///
/// `build` records a scalar loss on the supplied tape. Each coordinate's
/// disagreement is first reduced by the finite-difference round-off bound
/// `64 eps max(|loss|, 1) / h`, then divided by `max(|exact|, |numeric|, 1e-8)`.
pub fn gradcheck<F>(params: &ParamSet, h: f64, build: F) -> Result<f64, NumericsError>
where
    F: Fn(&mut Tape<'_>) -> Result<Var, NumericsError>,
{
    let (analytic, base) = {
        let mut tape = Tape::new(params);
        let loss = build(&mut tape)?;
        (tape.backward(loss)?, tape.value(loss).item())
    };
    let roundoff = 64.0 * f64::EPSILON * base.abs().max(1.0) / h;
    let eval = |p: &ParamSet| -> Result<f64, NumericsError> {
        let mut tape = Tape::new(p);
        let loss = build(&mut tape)?;
        Ok(tape.value(loss).item())
    };

    let mut probe = params.clone();
    let mut worst: f64 = 0.0;
    for id in params.ids() {
        for i in 0..params.value(id).len() {
            let orig = params.value(id).data()[i];
            probe.get_mut(id).value.data_mut()[i] = orig + h;
            let up = eval(&probe)?;
            probe.get_mut(id).value.data_mut()[i] = orig - h;
            let down = eval(&probe)?;
            probe.get_mut(id).value.data_mut()[i] = orig;

            let numeric = (up - down) / (2.0 * h);
            let exact = analytic.get(id).map_or(0.0, |g| g.data()[i]);
            let scale = exact.abs().max(numeric.abs()).max(1e-8);
            worst = worst.max(((exact - numeric).abs() - roundoff).max(0.0) / scale);
        }
    }
    Ok(worst)
}
