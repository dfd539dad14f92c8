use alloc::format;
use rand::Rng;

use super::{DisdatError, MiReport};
use crate::autodiff::{Graph, ParamId, ParamStore, Var};
use crate::encoders::Linear;

/// Fusion weights `(w_g, w_i) = (ΔI^(g), ΔI^(i|g)) / ΔI`. Negative
/// estimates count as zero shift; when nothing is left (or the report is
/// not finite) the weights fall back to `(0.5, 0.5)`.
pub fn fusion_weights(report: &MiReport) -> (f64, f64) {
    if !report.is_finite() {
        return (0.5, 0.5);
    }
    let (g, i) = (report.delta_g.max(0.0), report.delta_ig.max(0.0));
    let total = g + i;
    if total <= 0.0 {
        return (0.5, 0.5);
    }
    (g / total, i / total)
}

/// Projections of the two modalities onto the common fused width.
#[derive(Clone, Debug, PartialEq)]
pub struct Fusion {
    proj_g: Linear,
    proj_i: Linear,
}

impl Fusion {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        d_g: usize,
        d_i: usize,
        d_f: usize,
        rng: &mut R,
    ) -> Self {
        Self {
            proj_g: Linear::new(store, &format!("{name}.g"), d_g, d_f, rng),
            proj_i: Linear::new(store, &format!("{name}.i"), d_i, d_f, rng),
        }
    }

    pub fn ids(&self) -> [ParamId; 4] {
        let [a, b] = self.proj_g.ids();
        let [c, d] = self.proj_i.ids();
        [a, b, c, d]
    }

    /// `Z_M = w_g·proj_g(z_g) + w_i·proj_i(z_i)`. A zero weight drops its
    /// branch entirely.
    pub fn forward(
        &self,
        tape: &mut Graph,
        store: &ParamStore,
        z_g: Var,
        z_i: Var,
        (w_g, w_i): (f64, f64),
    ) -> Result<Var, DisdatError> {
        let g = self.proj_g.forward(tape, store, z_g)?;
        if w_i == 0.0 {
            return Ok(if w_g == 1.0 { g } else { tape.scale(g, w_g) });
        }
        let i = self.proj_i.forward(tape, store, z_i)?;
        if w_g == 0.0 {
            return Ok(if w_i == 1.0 { i } else { tape.scale(i, w_i) });
        }
        let g = tape.scale(g, w_g);
        let i = tape.scale(i, w_i);
        Ok(tape.add(g, i)?)
    }
}
