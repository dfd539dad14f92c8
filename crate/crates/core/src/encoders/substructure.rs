use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use rand::Rng;

use super::{EncoderError, Mlp};
use crate::autodiff::{Graph, ParamId, ParamStore, Tensor, Var};
use crate::math::EULER_GAMMA;
use crate::molgraph::SubstructurePartition;
use crate::rng::{self, ChaCha8Rng};

fn check_gamma(gamma: f64) -> Result<(), EncoderError> {
    if (0.0..=1.0).contains(&gamma) {
        Ok(())
    } else {
        Err(EncoderError::GammaOutOfRange(gamma))
    }
}

/// `X × N` pooling weights: `γ` on a group's own atoms and `(1 − γ)/|S_x|`
/// on every other atom.
pub fn pool_matrix(
    p: &SubstructurePartition,
    atom_count: usize,
    gamma: f64,
) -> Result<Tensor, EncoderError> {
    check_gamma(gamma)?;
    let mut data = vec![0.0; p.len() * atom_count];
    for (x, group) in p.groups.iter().enumerate() {
        if group.is_empty() {
            return Err(EncoderError::EmptyGroup(x));
        }
        let outside = (1.0 - gamma) / group.len() as f64;
        let row = &mut data[x * atom_count..(x + 1) * atom_count];
        row.iter_mut().for_each(|w| *w = outside);
        for &a in group {
            row[a] = gamma;
        }
    }
    Ok(Tensor::new(vec![p.len(), atom_count], data)?)
}

/// Every substructure embedding `Z^g_x` at once, `X × d`.
pub fn pool_all(
    tape: &mut Graph,
    zv: Var,
    p: &SubstructurePartition,
    gamma: f64,
) -> Result<Var, EncoderError> {
    let n = tape.shape(zv)[0];
    let w = tape.constant(pool_matrix(p, n, gamma)?);
    Ok(tape.matmul(w, zv)?)
}

/// `Z^g_x = γ·Σ_{v∈S_x} Z^V(v) + ((1−γ)/|S_x|)·Σ_{v∉S_x} Z^V(v)`, `1 × d`.
pub fn pool_substructure(
    tape: &mut Graph,
    zv: Var,
    p: &SubstructurePartition,
    x: usize,
    gamma: f64,
) -> Result<Var, EncoderError> {
    let n = tape.shape(zv)[0];
    let all = pool_matrix(p, n, gamma)?;
    let row = Tensor::row(all.row_slice(x).to_vec());
    let w = tape.constant(row);
    Ok(tape.matmul(w, zv)?)
}

/// Frontier affiliation `η(v) = softplus(MLP(Z^g_x))·σ(Z^V(v)ᵀ Z^g_x)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Affiliation {
    mlp: Mlp,
}

impl Affiliation {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, name: &str, width: usize, rng: &mut R) -> Self {
        Self {
            mlp: Mlp::new(store, &format!("{name}.mlp"), [width, width, 1], rng),
        }
    }

    pub fn ids(&self) -> Vec<ParamId> {
        self.mlp.ids()
    }

    /// `zg_x` is `1 × d`, `z_front` is `F × d`; returns `η` as `1 × F`.
    pub fn forward(
        &self,
        tape: &mut Graph,
        store: &ParamStore,
        zg_x: Var,
        z_front: Var,
    ) -> Result<Var, EncoderError> {
        let scale = self.mlp.forward(tape, store, zg_x)?;
        let scale = tape.softplus(scale);
        let zt = tape.transpose(zg_x)?;
        let dots = tape.matmul(z_front, zt)?;
        let dots = tape.transpose(dots)?;
        let gate = tape.sigmoid(dots);
        Ok(tape.matmul(scale, gate)?)
    }
}

/// Source of the Gumbel perturbation.
pub enum GumbelNoise<'a> {
    /// Fresh `−ln(−ln u)` draws per call.
    Sample(&'a mut ChaCha8Rng),
    /// The Gumbel mean (Euler–Mascheroni constant) in every slot.
    Mean,
}

impl GumbelNoise<'_> {
    fn draw(&mut self, n: usize) -> Vec<f64> {
        match self {
            GumbelNoise::Sample(r) => (0..n).map(|_| rng::gumbel(*r)).collect(),
            GumbelNoise::Mean => vec![EULER_GAMMA; n],
        }
    }
}

/// `φ = softmax((ln η + G)/τ)` over a `1 × F` row of affiliations.
pub fn gumbel_weights(
    tape: &mut Graph,
    eta: Var,
    tau: f64,
    noise: &mut GumbelNoise<'_>,
) -> Result<Var, EncoderError> {
    if !(tau > 0.0) {
        return Err(EncoderError::NonPositiveTau(tau));
    }
    if let Some((index, &value)) = tape.value(eta).data().iter().enumerate().find(|(_, &v)| !(v > 0.0)) {
        return Err(EncoderError::NonPositiveEta { index, value });
    }
    let shape = tape.shape(eta).to_vec();
    let n = tape.value(eta).numel();
    let g = tape.constant(Tensor::new(shape, noise.draw(n))?);
    let logits = tape.log(eta);
    let logits = tape.add(logits, g)?;
    let logits = tape.scale(logits, 1.0 / tau);
    Ok(tape.softmax(logits))
}

/// Indices of the `q` largest weights, ties to the lower index, ascending.
fn top_q(weights: &[f64], q: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..weights.len()).collect();
    idx.sort_by(|&a, &b| weights[b].total_cmp(&weights[a]).then(a.cmp(&b)));
    idx.truncate(q);
    idx.sort_unstable();
    idx
}

/// `Z^g_xn = [Σ_{top-Q} φ_q·Z^V(q), Z^g_x]`, `1 × 2d`. With no frontier
/// (`phi`/`z_front` absent) the first half is zero.
pub fn inject_adjacent(
    tape: &mut Graph,
    zg_x: Var,
    frontier: Option<(Var, Var)>,
    q: usize,
) -> Result<Var, EncoderError> {
    if q == 0 {
        return Err(EncoderError::ZeroQ);
    }
    let injected = match frontier {
        None => {
            let d = tape.shape(zg_x)[1];
            tape.constant(Tensor::zeros(&[1, d]))
        }
        Some((phi, z_front)) => {
            let sel = top_q(tape.value(phi).data(), q);
            let pt = tape.transpose(phi)?;
            let w = tape.gather_rows(pt, &sel)?;
            let w = tape.transpose(w)?;
            let z = tape.gather_rows(z_front, &sel)?;
            tape.matmul(w, z)?
        }
    };
    Ok(tape.concat(&[injected, zg_x], 1)?)
}
