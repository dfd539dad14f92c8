//! Central finite-difference checks against the tape's analytic gradients.
//!
//! Networks with ReLU, clamp or top-k selection are piecewise smooth. When
//! a kink lies within `FD_STEP` of the probe point, the central difference
//! averages two slopes and disagrees with the (one-sided) analytic value.
//! Such an element is recognised by its one-sided slopes disagreeing at
//! least as much as the central estimate disagrees with the analytic one
//! (for a kink they differ by exactly twice that); it is counted in
//! [`GradCheck::kinks`] and left out of [`GradCheck::worst`]. A wrong
//! analytic gradient on a smooth function leaves the one-sided slopes
//! nearly equal and is still reported.
//!
//! Standardised rows make some directions sharply curved, so a disagreeing
//! element is first re-probed at `FD_STEP / 10` and `FD_STEP / 100`. A
//! correct gradient moves toward the analytic value as the step shrinks; a
//! wrong one does not.

use alloc::vec::Vec;

use super::{Graph, ParamId, ParamStore, Tensor, Var};

/// Step used for every central difference.
pub const FD_STEP: f64 = 1e-5;

/// Denominator floor of [`relative_error`]. Below it the comparison is
/// effectively absolute: central differences at `FD_STEP` carry roughly
/// 1e-9 of rounding noise on O(10) losses.
pub const REL_FLOOR: f64 = 1e-4;

/// Elements whose error exceeds this are examined for a kink.
const KINK_SCREEN: f64 = 1e-5;

/// `|a − n| / max(|a|, |n|, REL_FLOOR)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct GradCheck {
    /// Worst relative error over smooth elements.
    pub worst: f64,
    pub checked: usize,
    /// Elements with a kink inside the difference stencil.
    pub kinks: usize,
}

impl GradCheck {
    fn record<E>(
        &mut self,
        analytic: f64,
        f0: f64,
        mut eval: impl FnMut(f64) -> Result<f64, E>,
    ) -> Result<(), E> {
        let (fp, fm) = (eval(FD_STEP)?, eval(-FD_STEP)?);
        let central = (fp - fm) / (2.0 * FD_STEP);
        let mut err = relative_error(analytic, central);
        self.checked += 1;
        for h in [FD_STEP / 10.0, FD_STEP / 100.0] {
            if err <= KINK_SCREEN {
                break;
            }
            let fine = (eval(h)? - eval(-h)?) / (2.0 * h);
            err = err.min(relative_error(analytic, fine));
        }
        if err > KINK_SCREEN {
            let right = (fp - f0) / FD_STEP;
            let left = (f0 - fm) / FD_STEP;
            if (right - left).abs() >= (central - analytic).abs() {
                self.kinks += 1;
                return Ok(());
            }
        }
        self.worst = self.worst.max(err);
        Ok(())
    }

    pub fn merge(self, o: GradCheck) -> GradCheck {
        GradCheck {
            worst: self.worst.max(o.worst),
            checked: self.checked + o.checked,
            kinks: self.kinks + o.kinks,
        }
    }
}

/// Compare analytic and numeric gradients of the scalar built by `f` over
/// the parameters in `ids`. `stride > 1` checks every `stride`-th element
/// of each parameter.
pub fn param_gradient_error<E>(
    store: &ParamStore,
    ids: &[ParamId],
    stride: usize,
    f: impl Fn(&mut Graph, &ParamStore) -> Result<Var, E>,
) -> Result<GradCheck, E> {
    let mut tape = Graph::new();
    let loss = f(&mut tape, store)?;
    let f0 = tape.value(loss).item().unwrap_or(f64::NAN);
    let mut grads = store.clone();
    grads.zero_grads();
    if tape.backward(loss).is_err() {
        return Ok(GradCheck {
            worst: f64::INFINITY,
            ..GradCheck::default()
        });
    }
    tape.accumulate_param_grads(&mut grads);
    let mut probe = store.clone();
    let mut report = GradCheck::default();
    for &id in ids {
        let n = store.value(id).numel();
        for e in (0..n).step_by(stride.max(1)) {
            let orig = store.value(id).data()[e];
            let eval = |h: f64| -> Result<f64, E> {
                probe.get_mut(id).value.data_mut()[e] = orig + h;
                let mut t = Graph::new();
                let l = f(&mut t, &probe)?;
                Ok(t.value(l).item().unwrap_or(f64::NAN))
            };
            report.record(grads.grad(id)[e], f0, eval)?;
            probe.get_mut(id).value.data_mut()[e] = orig;
        }
    }
    Ok(report)
}

/// Like [`param_gradient_error`] for constant inputs instead of parameters.
pub fn input_gradient_error<E>(
    inputs: &[Tensor],
    f: impl Fn(&mut Graph, &[Var]) -> Result<Var, E>,
) -> Result<GradCheck, E> {
    let mut tape = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.constant(t.clone())).collect();
    let loss = f(&mut tape, &vars)?;
    let f0 = tape.value(loss).item().unwrap_or(f64::NAN);
    if tape.backward(loss).is_err() {
        return Ok(GradCheck {
            worst: f64::INFINITY,
            ..GradCheck::default()
        });
    }
    let mut probe = inputs.to_vec();
    let mut report = GradCheck::default();
    for k in 0..inputs.len() {
        for e in 0..inputs[k].numel() {
            let orig = inputs[k].data()[e];
            let eval = |h: f64| -> Result<f64, E> {
                probe[k].data_mut()[e] = orig + h;
                let mut t = Graph::new();
                let vs: Vec<Var> = probe.iter().map(|p| t.constant(p.clone())).collect();
                let l = f(&mut t, &vs)?;
                Ok(t.value(l).item().unwrap_or(f64::NAN))
            };
            report.record(tape.grad(vars[k])[e], f0, eval)?;
            probe[k].data_mut()[e] = orig;
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::AutodiffError;

    #[test]
    fn kink_is_set_aside_but_wrong_gradient_is_not() {
        // relu(x) at x = 3e-8: a kink inside every stencil.
        let r = input_gradient_error(&[Tensor::scalar(3e-8)], |t, v| {
            let y = t.relu(v[0]);
            Ok::<_, AutodiffError>(t.sum(y))
        })
        .unwrap();
        assert_eq!((r.kinks, r.worst), (1, 0.0));
        // A smooth function with a deliberately wrong gradient: grad_reverse
        // at φ = 1 flips the sign of d(x²)/dx.
        let r = input_gradient_error(&[Tensor::scalar(0.7)], |t, v| {
            let y = t.grad_reverse(v[0], 1.0)?;
            let y = t.mul(y, y)?;
            Ok::<_, AutodiffError>(t.sum(y))
        })
        .unwrap();
        assert_eq!(r.kinks, 0);
        assert!(r.worst > 1.0);
    }

    #[test]
    fn sharp_curvature_is_resolved_by_the_finer_step() {
        // exp(3000x): the FD_STEP central difference is off by ~1.5e-4.
        let r = input_gradient_error(&[Tensor::scalar(0.0)], |t, v| {
            let y = t.scale(v[0], 3000.0);
            let y = t.exp(y);
            Ok::<_, AutodiffError>(t.sum(y))
        })
        .unwrap();
        assert_eq!(r.kinks, 0);
        assert!(r.worst < 1e-5, "{r:?}");
    }
}
