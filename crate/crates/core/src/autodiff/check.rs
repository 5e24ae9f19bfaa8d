use super::{Scalar, Tape, Var};
use crate::error::Result;

/// Outcome of comparing reverse-mode gradients against central differences.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    /// `(coordinate, reverse-mode, central difference, relative error)`.
    pub entries: Vec<(usize, f64, f64, f64)>,
    pub max_rel_error: f64,
    pub tol: f64,
    pub passed: bool,
}

impl GradCheckReport {
    pub fn failures(&self) -> impl Iterator<Item = &(usize, f64, f64, f64)> {
        self.entries.iter().filter(move |e| !(e.3 < self.tol))
    }
}

/// Relative error with a floor on the denominator so that coordinates with a
/// vanishing gradient are compared in absolute terms.
pub(crate) fn rel_error(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

/// `(f(x + h e_i) − f(x − h e_i)) / 2h` evaluated on fresh tapes.
pub fn central_difference<F>(f: &F, point: &[f64], coord: usize, h: f64) -> Result<f64>
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Result<Var<'t>>,
{
    let eval = |x: &[f64]| -> Result<f64> {
        let tape = Tape::new();
        let vars = tape.leaves(x);
        Ok(f(&tape, &vars)?.value())
    };
    let mut x = point.to_vec();
    x[coord] = point[coord] + h;
    let plus = eval(&x)?;
    x[coord] = point[coord] - h;
    let minus = eval(&x)?;
    Ok((plus - minus) / (2.0 * h))
}

/// Checks the gradient of `f` at `point` on the given coordinates (all
/// coordinates when `coords` is `None`). Passes iff every relative error is
/// below `tol`. The denominator floor is `1e-6` times the largest gradient
/// magnitude seen, so round-off in near-zero coordinates is not reported as a
/// failure.
pub fn grad_check<F>(
    f: F,
    point: &[f64],
    coords: Option<&[usize]>,
    h: f64,
    tol: f64,
) -> Result<GradCheckReport>
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Result<Var<'t>>,
{
    let tape = Tape::new();
    let vars = tape.leaves(point);
    let out = f(&tape, &vars)?;
    let grads = tape.gradient(out)?;
    let all: Vec<usize>;
    let coords = match coords {
        Some(c) => c,
        None => {
            all = (0..point.len()).collect();
            &all
        }
    };
    let mut pairs = Vec::with_capacity(coords.len());
    for &i in coords {
        let analytic = grads.get(vars[i]);
        let numeric = central_difference(&f, point, i, h)?;
        pairs.push((i, analytic, numeric));
    }
    let scale = pairs
        .iter()
        .map(|p| p.1.abs().max(p.2.abs()))
        .fold(0.0, f64::max);
    let floor = (scale * 1e-6).max(f64::MIN_POSITIVE);
    let entries: Vec<_> = pairs
        .into_iter()
        .map(|(i, a, n)| (i, a, n, rel_error(a, n, floor)))
        .collect();
    let max_rel_error = entries.iter().map(|e| e.3).fold(0.0, f64::max);
    let passed = entries.iter().all(|e| e.3 < tol);
    Ok(GradCheckReport {
        entries,
        max_rel_error,
        tol,
        passed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bowl<'t>(_t: &'t Tape, x: &[Var<'t>]) -> Result<Var<'t>> {
        Ok(x[0] * x[0] + x[1] * x[1] * 3.0)
    }

    fn exp_sin<'t>(_t: &'t Tape, x: &[Var<'t>]) -> Result<Var<'t>> {
        Ok(x[0].sin().exp())
    }

    fn exp_sin_tanh<'t>(_t: &'t Tape, x: &[Var<'t>]) -> Result<Var<'t>> {
        Ok(x[0].sin().exp() * x[1].tanh())
    }

    #[test]
    fn quadratic_bowl_exact() {
        let r = grad_check(bowl, &[0.0, 0.0], None, 1e-5, 1e-9).unwrap();
        assert!(r.passed);
        assert_eq!(r.max_rel_error, 0.0);
    }

    #[test]
    fn exp_sin_matches_central_difference() {
        let r = grad_check(exp_sin, &[0.7], None, 1e-5, 1e-6).unwrap();
        assert!(r.passed, "{r:?}");
    }

    #[test]
    fn tight_tolerance_fails() {
        let r = grad_check(exp_sin_tanh, &[0.7, 0.3], None, 1e-5, 1e-14).unwrap();
        assert!(!r.passed);
        assert!(r.failures().count() > 0);
    }
}
