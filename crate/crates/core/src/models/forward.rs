use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{Arch, BoundParams, GnnSpec, Hop, Input, Operator, Plan};
use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::linalg::CsrMatrix;

/// Evaluation forwards are deterministic; training forwards draw dropout
/// masks from the given generator.
pub enum Mode<'r> {
    Eval,
    Train(&'r mut ChaCha8Rng),
}

impl Mode<'_> {
    fn rng(&mut self, p: f64) -> Option<&mut ChaCha8Rng> {
        match self {
            Mode::Train(rng) if p > 0.0 => Some(&mut **rng),
            _ => None,
        }
    }
}

/// Activations flowing between layers.
enum Act {
    Input(Input),
    Var(Var),
}

fn dropout_csr(x: &CsrMatrix, p: f64, rng: &mut ChaCha8Rng) -> CsrMatrix {
    let keep = (1.0 / (1.0 - p)) as f32;
    let mut out = x.clone();
    for v in out.values_mut() {
        *v = if rng.gen::<f64>() < p { 0.0 } else { *v * keep };
    }
    out
}

fn dropout(tape: &mut Tape, h: Act, p: f64, mode: &mut Mode<'_>) -> Result<Act> {
    let Some(rng) = mode.rng(p) else { return Ok(h) };
    let keep = (1.0 / (1.0 - p)) as f32;
    Ok(match h {
        Act::Input(Input::Sparse(x)) => Act::Input(Input::Sparse(Arc::new(dropout_csr(&x, p, rng)))),
        Act::Input(Input::Dense(v)) | Act::Var(v) => {
            let n = tape.value(v)?.data().len();
            let mask = (0..n)
                .map(|_| if rng.gen::<f64>() < p { 0.0 } else { keep })
                .collect();
            Act::Var(tape.dropout_mask(v, mask)?)
        }
    })
}

fn times(tape: &mut Tape, h: &Act, w: Var) -> Result<Var> {
    match h {
        Act::Input(Input::Sparse(x)) => tape.spmm(x, w),
        Act::Input(Input::Dense(v)) | Act::Var(v) => tape.matmul(*v, w),
    }
}

fn propagate(tape: &mut Tape, op: &Operator, v: Var) -> Result<Var> {
    match op {
        Operator::Sparse(s) => tape.spmm(s, v),
        Operator::Dense(a) => tape.matmul(*a, v),
        Operator::Identity => Ok(v),
    }
}

fn gather(tape: &mut Tape, v: Var, rows: &Option<Arc<[usize]>>) -> Result<Var> {
    match rows {
        Some(idx) => tape.gather_rows(v, idx),
        None => Ok(v),
    }
}

fn check_input(tape: &Tape, plan: &Plan, input: &Input, in_dim: usize) -> Result<()> {
    let (rows, cols) = match input {
        Input::Sparse(x) => (x.rows(), x.cols()),
        Input::Dense(v) => tape.value(*v)?.shape(),
    };
    if cols != in_dim {
        return Err(Error::shape(format!("input has {cols} features, weights expect {in_dim}")));
    }
    if let Some(n) = plan.num_input_rows() {
        if n != rows {
            return Err(Error::shape(format!("input has {rows} rows, plan reads {n}")));
        }
    }
    Ok(())
}

/// Run the network. Returns the final-layer output: logits when the
/// parameters were built with the class count as output width, embeddings
/// when built with the embedding width.
pub fn forward(
    tape: &mut Tape,
    spec: &GnnSpec,
    params: &BoundParams,
    plan: &Plan,
    input: &Input,
    mut mode: Mode<'_>,
) -> Result<Var> {
    if plan.hops.len() != spec.hops() {
        return Err(Error::InvalidConfig(format!(
            "{} needs a plan with {} hops, got {}",
            spec.arch,
            spec.hops(),
            plan.hops.len()
        )));
    }
    let vars = params.vars();
    let in_dim = tape.value(vars[0])?.rows();
    check_input(tape, plan, input, in_dim)?;
    let p = spec.dropout;
    let h = Act::Input(input.clone());
    match spec.arch {
        Arch::Gcn => {
            let mut h = h;
            let n = vars.len() / 2;
            for l in 0..n {
                h = dropout(tape, h, p, &mut mode)?;
                let z = times(tape, &h, vars[2 * l])?;
                let z = propagate(tape, &plan.hops[l].prop, z)?;
                let mut z = tape.add_bias(z, vars[2 * l + 1])?;
                if l + 1 < n {
                    z = tape.relu(z)?;
                }
                h = Act::Var(z);
            }
            final_var(h)
        }
        Arch::Sgc => {
            let h = dropout(tape, h, p, &mut mode)?;
            let mut z = times(tape, &h, vars[0])?;
            for hop in &plan.hops {
                z = propagate(tape, &hop.prop, z)?;
            }
            tape.add_bias(z, vars[1])
        }
        Arch::Mlp => {
            mlp(tape, h, vars, p, &mut mode)
        }
        Arch::Sage => {
            let mut h = h;
            let n = vars.len() / 3;
            for l in 0..n {
                let hop: &Hop = &plan.hops[l];
                let mean = hop
                    .mean
                    .as_ref()
                    .ok_or_else(|| Error::InvalidConfig("SAGE needs a mean-neighbour operator".into()))?;
                h = dropout(tape, h, p, &mut mode)?;
                let s = times(tape, &h, vars[3 * l])?;
                let s = gather(tape, s, &hop.self_rows)?;
                let nb = times(tape, &h, vars[3 * l + 1])?;
                let nb = propagate(tape, mean, nb)?;
                let z = tape.add(s, nb)?;
                let mut z = tape.add_bias(z, vars[3 * l + 2])?;
                if l + 1 < n {
                    z = tape.relu(z)?;
                }
                h = Act::Var(z);
            }
            final_var(h)
        }
        Arch::Appnp => {
            let h0 = mlp(tape, h, vars, p, &mut mode)?;
            let alpha = spec.appnp_alpha as f32;
            let mut z = h0;
            for hop in &plan.hops {
                let prop = propagate(tape, &hop.prop, z)?;
                let tele = gather(tape, h0, &hop.outer_rows)?;
                z = tape.axpby(prop, 1.0 - alpha, tele, alpha)?;
            }
            Ok(z)
        }
    }
}

fn final_var(h: Act) -> Result<Var> {
    match h {
        Act::Var(v) => Ok(v),
        Act::Input(_) => Err(Error::InvalidConfig("network has no layers".into())),
    }
}

fn mlp(tape: &mut Tape, mut h: Act, vars: &[Var], p: f64, mode: &mut Mode<'_>) -> Result<Var> {
    let n = vars.len() / 2;
    for l in 0..n {
        h = dropout(tape, h, p, mode)?;
        let z = times(tape, &h, vars[2 * l])?;
        let mut z = tape.add_bias(z, vars[2 * l + 1])?;
        if l + 1 < n {
            z = tape.relu(z)?;
        }
        h = Act::Var(z);
    }
    final_var(h)
}
