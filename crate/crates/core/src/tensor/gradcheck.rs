use super::{ModelParams, Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Worst disagreement between tape gradients and central differences.
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    /// Parameter name and flat index of the worst entry.
    pub worst: Option<(String, usize)>,
    pub analytic: f64,
    pub numeric: f64,
    pub entries_checked: usize,
}

/// `|a − n| / max(|a|, |n|, floor)`.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

fn scalar(tape: &Tape, v: Var) -> Result<f64> {
    match tape.value(v).data() {
        [x] => Ok(*x),
        d => Err(Error::dim("gradcheck", format!("loss has {} entries", d.len()))),
    }
}

/// Compares the tape gradient of `loss` with respect to every entry of
/// `params` against central differences with step `h`.
///
/// `loss` receives a fresh tape and the registered parameter handles and
/// must return a scalar.
pub fn check_gradients<F>(params: &ModelParams, h: f64, floor: f64, loss: F) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars = params.register(&mut tape);
    let out = loss(&mut tape, &vars)?;
    scalar(&tape, out)?;
    tape.backward(out)?;
    let analytic: Vec<Vec<f64>> = params
        .iter()
        .zip(&vars)
        .map(|((_, t), &v)| {
            tape.grad(v)
                .map_or_else(|| vec![0.0; t.len()], <[f64]>::to_vec)
        })
        .collect();

    let eval = |p: &ModelParams| -> Result<f64> {
        let mut tape = Tape::new();
        let vars = p.register(&mut tape);
        let out = loss(&mut tape, &vars)?;
        scalar(&tape, out)
    };

    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        worst: None,
        analytic: 0.0,
        numeric: 0.0,
        entries_checked: 0,
    };
    let mut probe = params.clone();
    for (pi, (name, t)) in params.iter().enumerate() {
        for i in 0..t.len() {
            let orig = t.data()[i];
            set(&mut probe, pi, i, orig + h);
            let up = eval(&probe)?;
            set(&mut probe, pi, i, orig - h);
            let down = eval(&probe)?;
            set(&mut probe, pi, i, orig);
            let numeric = (up - down) / (2.0 * h);
            let a = analytic[pi][i];
            let err = relative_error(a, numeric, floor);
            report.entries_checked += 1;
            if err > report.max_relative_error || report.worst.is_none() {
                report.max_relative_error = err;
                report.worst = Some((name.to_string(), i));
                report.analytic = a;
                report.numeric = numeric;
            }
        }
    }
    Ok(report)
}

fn set(p: &mut ModelParams, which: usize, index: usize, value: f64) {
    let (_, t): (&str, &mut Tensor) = p.iter_mut().nth(which).expect("index from iteration");
    t.data_mut()[index] = value;
}
