//! Central finite-difference gradient checking.

use super::{Result, Tape, Tensor, TensorError, Var};

/// `|a - n| / max(1e-12, |a| + |n|)`
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-12)
}

/// Outcome of a coordinate-wise finite-difference check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheck {
    pub max_rel_error: f64,
    /// Coordinates compared against a finite difference.
    pub checked: usize,
    /// Coordinates where one side of the central difference changed a
    /// max-pool routing, so a second-order one-sided difference on the
    /// unchanged side was used.
    pub one_sided: usize,
    /// Coordinates with no routing-preserving stencil; not compared.
    pub skipped: usize,
}

fn evaluate<F>(f: &F, params: &[Tensor<f64>]) -> Result<(f64, Vec<usize>)>
where
    F: for<'t> Fn(&'t Tape<f64>, &[Var<'t, f64>]) -> Result<Var<'t, f64>>,
{
    let tape = Tape::new();
    let vars: Vec<_> = params.iter().map(|p| tape.constant(p.clone())).collect();
    let out = f(&tape, &vars)?.value();
    if !out.is_scalar() {
        return Err(TensorError::NotScalar(out.shape().to_vec()));
    }
    let v = out.data()[0];
    if !v.is_finite() {
        return Err(TensorError::NonFinite("objective"));
    }
    Ok((v, tape.pool_routes()))
}

/// Max relative error between the tape gradient of `f` and central
/// differences, over every coordinate of every parameter.
pub fn grad_check<F>(f: F, params: &[Tensor<f64>], eps: f64) -> Result<f64>
where
    F: for<'t> Fn(&'t Tape<f64>, &[Var<'t, f64>]) -> Result<Var<'t, f64>>,
{
    let coords: Vec<(usize, usize)> = params
        .iter()
        .enumerate()
        .flat_map(|(p, t)| (0..t.len()).map(move |i| (p, i)))
        .collect();
    Ok(grad_check_coords(f, params, eps, &coords)?.max_rel_error)
}

/// Like [`grad_check`], restricted to `(param index, element index)` pairs.
///
/// A perturbation that moves any max-pool argmax crosses a kink of `f`, where
/// the central difference is meaningless; such coordinates fall back to a
/// one-sided stencil that keeps the unperturbed routing.
pub fn grad_check_coords<F>(f: F, params: &[Tensor<f64>], eps: f64, coords: &[(usize, usize)]) -> Result<GradCheck>
where
    F: for<'t> Fn(&'t Tape<f64>, &[Var<'t, f64>]) -> Result<Var<'t, f64>>,
{
    assert!(eps > 0.0, "eps must be positive");
    let (analytic, routes) = {
        let tape = Tape::new();
        let vars: Vec<_> = params.iter().map(|p| tape.param(p.clone())).collect();
        let loss = f(&tape, &vars)?;
        if !loss.value().all_finite() {
            return Err(TensorError::NonFinite("objective"));
        }
        let mut grads = tape.backward(loss)?;
        let analytic: Vec<Tensor<f64>> = vars
            .iter()
            .map(|&v| grads.take(v).expect("parameter gradient"))
            .collect();
        (analytic, tape.pool_routes())
    };
    let (base, _) = evaluate(&f, params)?;

    let mut report = GradCheck {
        max_rel_error: 0.0,
        checked: 0,
        one_sided: 0,
        skipped: 0,
    };
    let mut work = params.to_vec();
    for &(p, i) in coords {
        let orig = work[p].data()[i];
        work[p].data_mut()[i] = orig + eps;
        let (plus, plus_routes) = evaluate(&f, &work)?;
        work[p].data_mut()[i] = orig - eps;
        let (minus, minus_routes) = evaluate(&f, &work)?;
        work[p].data_mut()[i] = orig;
        let numeric = match (plus_routes == routes, minus_routes == routes) {
            (true, true) => (plus - minus) / (2.0 * eps),
            (false, false) => {
                report.skipped += 1;
                continue;
            }
            (same_plus, _) => {
                // second-order one-sided stencil on the side that kept its routing
                let dir = if same_plus { 1.0 } else { -1.0 };
                let far = if same_plus { plus } else { minus };
                work[p].data_mut()[i] = orig + dir * eps / 2.0;
                let (mid, mid_routes) = evaluate(&f, &work)?;
                work[p].data_mut()[i] = orig;
                if mid_routes != routes {
                    report.skipped += 1;
                    continue;
                }
                report.one_sided += 1;
                dir * (4.0 * mid - far - 3.0 * base) / eps
            }
        };
        report.checked += 1;
        report.max_rel_error = report.max_rel_error.max(relative_error(analytic[p].data()[i], numeric));
    }
    Ok(report)
}
