use super::{NumError, Tape, Tensor, Var};

/// Denominator floor for the relative error, so that gradients which are
/// zero up to rounding do not blow the ratio up.
pub const REL_ERR_FLOOR: f64 = 1e-6;

/// Compares [`Tape::backward`] against central finite differences.
///
/// `f` records a scalar function of the parameters on the given tape. Every
/// element of every parameter is perturbed by `±h`. Returns the largest
/// `|analytic − numeric| / max(|analytic|, |numeric|, REL_ERR_FLOOR)`.
pub fn finite_diff_check<F>(f: F, params: &[Tensor], h: f64) -> Result<f64, NumError>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var, NumError>,
{
    if h <= 0.0 {
        return Err(NumError::InvalidStep { h });
    }
    let mut tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|p| tape.param(p.clone())).collect();
    let out = f(&mut tape, &vars)?;
    let grads = tape.backward(out)?;
    let analytic: Vec<Tensor> = vars.iter().map(|&v| grads.get(v)).collect();

    let eval = |ps: &[Tensor]| -> Result<f64, NumError> {
        let mut t = Tape::new();
        let vs: Vec<Var> = ps.iter().map(|p| t.param(p.clone())).collect();
        let o = f(&mut t, &vs)?;
        let val = t.value(o);
        if val.len() != 1 {
            return Err(NumError::NonScalarLoss { shape: val.shape().to_vec() });
        }
        Ok(val.data()[0])
    };

    let mut work: Vec<Tensor> = params.to_vec();
    let mut worst = 0.0_f64;
    for pi in 0..work.len() {
        for k in 0..work[pi].len() {
            let orig = work[pi].data()[k];
            work[pi].data_mut()[k] = orig + h;
            let plus = eval(&work)?;
            work[pi].data_mut()[k] = orig - h;
            let minus = eval(&work)?;
            work[pi].data_mut()[k] = orig;
            let numeric = (plus - minus) / (2.0 * h);
            let a = analytic[pi].data()[k];
            let denom = a.abs().max(numeric.abs()).max(REL_ERR_FLOOR);
            worst = worst.max((a - numeric).abs() / denom);
        }
    }
    Ok(worst)
}
