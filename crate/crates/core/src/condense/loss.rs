use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::graph::ClassPartition;

/// Classes entering the matching loss: those with members on either side.
/// A class present on only one side is an error.
pub(crate) fn matched_classes(part_t: &ClassPartition, part_s: &ClassPartition) -> Result<Vec<usize>> {
    if part_t.num_classes() != part_s.num_classes() {
        return Err(Error::shape(format!(
            "partitions over {} and {} classes",
            part_t.num_classes(),
            part_s.num_classes()
        )));
    }
    let mut out = Vec::new();
    for c in 0..part_t.num_classes() {
        match (part_t.members(c).is_empty(), part_s.members(c).is_empty()) {
            (true, true) => {}
            (false, false) => out.push(c),
            _ => return Err(Error::EmptyClassInMmd { class: c }),
        }
    }
    Ok(out)
}

/// One class term `r_c ‖mean_t − mean(emb_s[idx_s])‖²`.
pub(crate) fn class_term(tape: &mut Tape, mean_t: Var, emb_s: Var, idx_s: &[usize], r_c: f64) -> Result<Var> {
    let mean_s = tape.masked_row_mean(emb_s, idx_s)?;
    let d = tape.sq_l2_diff(mean_t, mean_s)?;
    tape.scale(d, r_c as f32)
}

/// `Σ_c r_c ‖mean_c(emb_t) − mean_c(emb_s)‖²` with `r_c` taken from the
/// original-side partition.
pub fn mmd_loss(
    tape: &mut Tape,
    emb_t: Var,
    emb_s: Var,
    part_t: &ClassPartition,
    part_s: &ClassPartition,
) -> Result<Var> {
    let classes = matched_classes(part_t, part_s)?;
    let mut total: Option<Var> = None;
    for c in classes {
        let mean_t = tape.masked_row_mean(emb_t, part_t.members(c))?;
        let term = class_term(tape, mean_t, emb_s, part_s.members(c), part_t.ratio(c))?;
        total = Some(match total {
            Some(t) => tape.add(t, term)?,
            None => term,
        });
    }
    total.ok_or(Error::EmptyMask)
}
