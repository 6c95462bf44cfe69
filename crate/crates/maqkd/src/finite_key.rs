//! Finite-key estimation chain: multiplicative Chernoff bounds, decoy-state
//! linear programs bounding the pooled single-photon counts, random-sampling
//! restriction to the key basis, and the secret key length.
//!
//! Observed decoy counts constrain, through two-sided Chernoff intervals on
//! their expectations, the per-Fock-number counts of a virtual protocol in
//! which intensities are assigned only after detection. A truncated linear
//! program over those Fock counts (plus a bounded tail slack per constraint,
//! which only enlarges the feasible set and therefore keeps the bounds
//! valid) yields a lower bound on the pooled single-photon count `M11` and
//! an upper bound on its error count `E11`. Both are then restricted to the
//! Z basis by binomial-sampling bounds, giving the phase-error estimate and
//! the key length.
//!
//! Each run consumes 20 concentration bounds: 18 one-sided expectation
//! bounds feeding the two programs and 2 sampling bounds for the Z-basis
//! restriction.

use crate::numerics::binary_entropy;
use crate::counts::ObservedCounts;
use crate::simplex::{self, LinearProgram, LpOutcome};
use crate::system::{IntensityId, IntensitySet};
use crate::{Error, Result};

/// Default per-bound failure probability.
pub const DEFAULT_EPSILON: f64 = 0.5e-11;
/// Default photon-number truncation of the decoy programs.
pub const DEFAULT_N_CUT: usize = 10;
/// Concentration bounds consumed per full estimation.
pub const CONCENTRATION_EVENTS: u32 = 20;

fn check_epsilon(epsilon: f64) -> Result<()> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::Domain(format!(
            "failure probability must lie in (0,1), got {epsilon}"
        )));
    }
    Ok(())
}

// NaN-safe bracket guards below intentionally use negated comparisons.
#[allow(clippy::neg_cmp_op_on_partial_ord)]
// Both deviation relations collapse, after substituting E = chi/(1 ± d),
// onto the two roots of the convex divergence
//
//     h(E) = E - chi + chi ln(chi / E) = ln(2/eps),
//
// one on each side of its minimum h(chi) = 0 (equivalently, the roots are
// branch values of the Lambert W function). The lower root is found by
// Newton in ln(E) and the upper in E, both bracketed, so every count
// magnitude from sub-unity to 1e12 resolves to machine precision.
fn chernoff_expectation_roots(chi: f64, epsilon: f64) -> (f64, f64) {
    let target = (2.0 / epsilon).ln();
    // Written in the deviation d = E - chi, h(d) = d - chi ln(1 + d/chi)
    // evaluates without cancellation on both sides of the minimum.
    let h = |d: f64| d - chi * (d / chi).ln_1p();
    let dh = |d: f64| (d / chi) / (1.0 + d / chi);

    // Upper root, d > 0.
    let mut d = (2.0 * chi * target).sqrt() + target;
    for _ in 0..100 {
        let step = (h(d) - target) / dh(d);
        let next = (d - step).max(0.25 * d);
        if (next - d).abs() <= 1e-14 * next.abs() {
            d = next;
            break;
        }
        d = next;
    }
    let e_u = chi + d;

    // Lower root, -chi < d < 0. For targets far beyond the divergence
    // scale the root collapses toward E = 0 double-exponentially; solve in
    // ln E there instead, where Newton stays conditioned.
    let e_l = if target / chi < 25.0 {
        let mut d = -((2.0 * chi * target).sqrt()).min(0.8 * chi);
        for _ in 0..100 {
            let step = (h(d) - target) / dh(d);
            let mut next = d - step;
            if !(next > -chi) {
                next = 0.5 * (d - chi);
            }
            if !(next < 0.0) {
                next = 0.5 * d;
            }
            if (next - d).abs() <= 1e-14 * next.abs() {
                d = next;
                break;
            }
            d = next;
        }
        chi + d
    } else {
        // h(chi e^{-a}) = chi (a - 1 + e^{-a}), so a ~ target/chi + 1.
        let mut u = chi.ln() - (target / chi + 1.0);
        for _ in 0..100 {
            let e = u.exp();
            let hv = e - chi + chi * (chi.ln() - u);
            let step = (hv - target) / (e - chi);
            let next = (u - step).min(chi.ln() - 1.0);
            if (next - u).abs() <= 1e-14 {
                u = next;
                break;
            }
            u = next;
        }
        u.exp().max(0.0)
    };
    (e_l, e_u)
}

fn chernoff_delta(chi: f64, epsilon: f64, upper: bool) -> Result<f64> {
    let (e_l, e_u) = chernoff_expectation_roots(chi, epsilon);
    Ok(if upper {
        (1.0 - chi / e_u).clamp(0.0, 1.0 - 1e-15)
    } else {
        (chi / e_l - 1.0).max(0.0)
    })
}

/// Deviation parameters `(delta_lower, delta_upper)` of the multiplicative
/// Chernoff bounds for an observed count `chi`.
pub fn chernoff_deltas(chi: f64, epsilon: f64) -> Result<(f64, f64)> {
    check_epsilon(epsilon)?;
    if chi < 0.0 {
        return Err(Error::Domain("observed count must be nonnegative".into()));
    }
    if chi == 0.0 {
        return Err(Error::Domain("deviations are singular at chi = 0".into()));
    }
    Ok((
        chernoff_delta(chi, epsilon, false)?,
        chernoff_delta(chi, epsilon, true)?,
    ))
}

/// Two-sided bound on the expectation of a sum of Bernoulli variables given
/// its observed outcome `chi`; each side fails with probability at most
/// `epsilon / 2`. A zero observation keeps the exact limit of the upper
/// relation, `ln(2/epsilon)`.
pub fn chernoff_expectation_bounds(chi: f64, epsilon: f64) -> Result<(f64, f64)> {
    check_epsilon(epsilon)?;
    if chi < 0.0 {
        return Err(Error::Domain("observed count must be nonnegative".into()));
    }
    if chi == 0.0 {
        return Ok((0.0, (2.0 / epsilon).ln()));
    }
    Ok(chernoff_expectation_roots(chi, epsilon))
}

/// Direction of an outcome bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundDirection {
    Lower,
    Upper,
}

/// Bound on the outcome of a sum of Bernoulli variables given its
/// expectation, failing with probability at most `epsilon`. The zero-mean
/// upper bound is pinned at `-4 ln(epsilon)`.
pub fn chernoff_outcome_bound(
    expectation: f64,
    epsilon: f64,
    direction: BoundDirection,
) -> Result<f64> {
    check_epsilon(epsilon)?;
    if expectation < 0.0 {
        return Err(Error::Domain("expectation must be nonnegative".into()));
    }
    if expectation == 0.0 {
        return Ok(match direction {
            BoundDirection::Lower => 0.0,
            BoundDirection::Upper => -4.0 * epsilon.ln(),
        });
    }
    let le = epsilon.ln();
    let delta = (-le + (le * le - 8.0 * le * expectation).sqrt()) / (2.0 * expectation);
    Ok(match direction {
        BoundDirection::Lower => (expectation * (1.0 - delta)).max(0.0),
        BoundDirection::Upper => expectation * (1.0 + delta),
    })
}

/// Photon-number assignment coefficients of the virtual protocol for one
/// intensity set and truncation order.
#[derive(Debug, Clone)]
pub struct DecoyCoefficients {
    pub n_cut: usize,
    /// The nine decoy pairs in fixed order.
    pub pairs: Vec<(IntensityId, IntensityId)>,
    /// `p_{ab|nm,X}` for each pair, indexed by `n * (n_cut+1) + m`.
    pub p_pair_given_fock: Vec<Vec<f64>>,
    /// `p_{ab|11}` with the single-photon pool shared across all
    /// intensities (including the signal).
    pub p_pair_given_single: Vec<f64>,
    /// `p_{zz|11}`: probability a pooled single-photon event belongs to the
    /// sifted key.
    pub p_zz_given_single: f64,
    /// Per-pair cap on the truncated tail contribution, as a fraction of
    /// the block size: `p_a p_b (1 - F_a(n_cut) F_b(n_cut))`.
    pub tail_fraction: Vec<f64>,
    /// Per-Fock-pair emission probabilities `p_{n,X} p_{m,X}` (selection
    /// probabilities included), indexed like `p_pair_given_fock` tables.
    pub emission_prob: Vec<f64>,
    /// Emission probability of the pooled single-photon slot, `p_1^2`.
    pub emission_prob_single: f64,
}

fn poisson_pmf(mean: f64, n_cut: usize) -> Vec<f64> {
    let mut pmf = Vec::with_capacity(n_cut + 1);
    let mut p = (-mean).exp();
    pmf.push(p);
    for n in 1..=n_cut {
        p *= mean / n as f64;
        pmf.push(p);
    }
    pmf
}

pub fn decoy_coefficients(intensities: &IntensitySet, n_cut: usize) -> Result<DecoyCoefficients> {
    intensities.validate()?;
    if n_cut < 3 {
        return Err(Error::InvalidInput("n_cut must be at least 3".into()));
    }
    let p_x_total: f64 = IntensityId::DECOYS
        .iter()
        .map(|&a| intensities.probability(a))
        .sum();
    if p_x_total <= 0.0 {
        return Err(Error::InvalidInput(
            "decoy intensities need nonzero selection probability".into(),
        ));
    }

    let grid = n_cut + 1;
    let pmf: Vec<(IntensityId, Vec<f64>)> = IntensityId::ALL
        .iter()
        .map(|&id| (id, poisson_pmf(intensities.intensity(id), n_cut)))
        .collect();
    let pmf_of = |id: IntensityId| &pmf.iter().find(|(i, _)| *i == id).unwrap().1;

    // p_{n,X} = sum over decoys of p_a p_{n|a}.
    let p_n_x: Vec<f64> = (0..grid)
        .map(|n| {
            IntensityId::DECOYS
                .iter()
                .map(|&a| intensities.probability(a) * pmf_of(a)[n])
                .sum()
        })
        .collect();
    // p_{a|n,X}
    let p_given_n: Vec<(IntensityId, Vec<f64>)> = IntensityId::DECOYS
        .iter()
        .map(|&a| {
            let col = (0..grid)
                .map(|n| {
                    if p_n_x[n] > 0.0 {
                        intensities.probability(a) * pmf_of(a)[n] / p_n_x[n]
                    } else {
                        0.0
                    }
                })
                .collect();
            (a, col)
        })
        .collect();
    let given_of = |id: IntensityId| &p_given_n.iter().find(|(i, _)| *i == id).unwrap().1;

    // Pooled single-photon probability over all four intensities.
    let p_1: f64 = IntensityId::ALL
        .iter()
        .map(|&a| intensities.probability(a) * pmf_of(a)[1])
        .sum();

    let mut pairs = Vec::with_capacity(9);
    let mut p_pair_given_fock = Vec::with_capacity(9);
    let mut p_pair_given_single = Vec::with_capacity(9);
    let mut tail_fraction = Vec::with_capacity(9);
    for &a in &IntensityId::DECOYS {
        for &b in &IntensityId::DECOYS {
            pairs.push((a, b));
            let mut table = vec![0.0; grid * grid];
            for n in 0..grid {
                for m in 0..grid {
                    table[n * grid + m] = given_of(a)[n] * given_of(b)[m];
                }
            }
            p_pair_given_fock.push(table);
            let single = if p_1 > 0.0 {
                (intensities.probability(a) * pmf_of(a)[1] / p_1)
                    * (intensities.probability(b) * pmf_of(b)[1] / p_1)
            } else {
                0.0
            };
            p_pair_given_single.push(single);
            let f_a: f64 = pmf_of(a).iter().sum();
            let f_b: f64 = pmf_of(b).iter().sum();
            tail_fraction.push(
                intensities.probability(a) * intensities.probability(b) * (1.0 - f_a * f_b),
            );
        }
    }
    let p_zz_given_single = if p_1 > 0.0 {
        (intensities.p_z * pmf_of(IntensityId::Z)[1] / p_1).powi(2)
    } else {
        0.0
    };
    let mut emission_prob = vec![0.0; grid * grid];
    for n in 0..grid {
        for m in 0..grid {
            emission_prob[n * grid + m] = p_n_x[n] * p_n_x[m];
        }
    }
    Ok(DecoyCoefficients {
        n_cut,
        pairs,
        p_pair_given_fock,
        p_pair_given_single,
        p_zz_given_single,
        tail_fraction,
        emission_prob,
        emission_prob_single: p_1 * p_1,
    })
}

// Detections cannot outnumber emissions. For expected-value counts the
// expected emissions bound the cells exactly; for sampled counts a
// fluctuation allowance far outside the relevant failure budget is kept
// (the overshoot probability of a Poisson count at +10 sigma + 30 is
// astronomically small).
fn capacity(lambda: f64, sampled: bool) -> f64 {
    if sampled {
        lambda + 10.0 * lambda.sqrt() + 30.0
    } else {
        lambda
    }
}

// Cells whose capacity cannot influence the programs get folded into the
// per-constraint tail slack instead of becoming variables.
const CELL_FLOOR: f64 = 0.05;

/// One-sided bound from a decoy program, with a flag telling whether the
/// program was feasible (an infeasible program yields the trivial bound).
#[derive(Debug, Clone, Copy)]
pub struct LpBound {
    pub value: f64,
    pub feasible: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum LpObjective {
    MinSingle,
    MaxSingle,
}

fn decoy_lp(
    observations: &[f64],
    n_block: f64,
    sampled: bool,
    coeffs: &DecoyCoefficients,
    epsilon: f64,
    objective: LpObjective,
) -> Result<LpBound> {
    let grid = coeffs.n_cut + 1;
    // Active cells carry enough emission capacity to matter; the rest are
    // folded into the per-constraint tail slack.
    let mut active: Vec<usize> = Vec::new();
    let mut folded = vec![0.0; coeffs.pairs.len()];
    for n in 0..grid {
        for m in 0..grid {
            if (n, m) == (1, 1) {
                continue;
            }
            let idx = n * grid + m;
            let cap = capacity(n_block * coeffs.emission_prob[idx], sampled);
            if n_block * coeffs.emission_prob[idx] >= CELL_FLOOR {
                active.push(idx);
            } else {
                for (i, table) in coeffs.p_pair_given_fock.iter().enumerate() {
                    folded[i] += table[idx] * cap;
                }
            }
        }
    }
    let n_vars = 1 + active.len() + coeffs.pairs.len();
    let slack0 = 1 + active.len();

    let mut a = Vec::new();
    let mut b = Vec::new();
    for (i, table) in coeffs.p_pair_given_fock.iter().enumerate() {
        let (e_l, e_u) = chernoff_expectation_bounds(observations[i], epsilon)?;
        let mut row = vec![0.0; n_vars];
        row[0] = coeffs.p_pair_given_single[i];
        for (var, &idx) in active.iter().enumerate() {
            row[1 + var] = table[idx];
        }
        row[slack0 + i] = 1.0;
        // Upper side.
        a.push(row.clone());
        b.push(e_u);
        // Lower side.
        a.push(row.iter().map(|v| -v).collect());
        b.push(-e_l);
        // Tail slack cap: out-of-grid tail plus folded in-grid cells.
        let mut cap = vec![0.0; n_vars];
        cap[slack0 + i] = 1.0;
        a.push(cap);
        b.push(n_block * coeffs.tail_fraction[i] + folded[i]);
    }
    // Emission-capacity caps for the pooled singles and each active cell.
    let mut cap_row = vec![0.0; n_vars];
    cap_row[0] = 1.0;
    a.push(cap_row);
    b.push(capacity(n_block * coeffs.emission_prob_single, sampled));
    for (var, &idx) in active.iter().enumerate() {
        let mut row = vec![0.0; n_vars];
        row[1 + var] = 1.0;
        a.push(row);
        b.push(capacity(n_block * coeffs.emission_prob[idx], sampled));
    }

    let mut c = vec![0.0; n_vars];
    c[0] = match objective {
        LpObjective::MinSingle => 1.0,
        LpObjective::MaxSingle => -1.0,
    };

    let outcome = simplex::solve(&LinearProgram { a, b, c })?;
    Ok(match (objective, outcome) {
        (LpObjective::MinSingle, LpOutcome::Optimal { objective, .. }) => LpBound {
            value: objective.max(0.0),
            feasible: true,
        },
        (LpObjective::MaxSingle, LpOutcome::Optimal { objective, .. }) => LpBound {
            value: (-objective).max(0.0),
            feasible: true,
        },
        (LpObjective::MinSingle, _) => LpBound {
            value: 0.0,
            feasible: false,
        },
        (LpObjective::MaxSingle, _) => LpBound {
            value: f64::INFINITY,
            feasible: false,
        },
    })
}

/// Lower bound on the pooled single-photon count `M11`, valid except with
/// probability `9 epsilon` (one Chernoff pair per decoy constraint).
pub fn decoy_lp_m11(
    counts: &ObservedCounts,
    intensities: &IntensitySet,
    epsilon: f64,
    n_cut: usize,
) -> Result<LpBound> {
    let coeffs = decoy_coefficients(intensities, n_cut)?;
    let obs: Vec<f64> = counts
        .decoy_pairs()?
        .iter()
        .map(|(_, pair)| pair.m)
        .collect();
    decoy_lp(
        &obs,
        counts.n_block,
        counts.sampled,
        &coeffs,
        epsilon,
        LpObjective::MinSingle,
    )
}

/// Upper bound on the pooled single-photon error count `E11`, valid except
/// with probability `9 epsilon`.
pub fn decoy_lp_e11(
    counts: &ObservedCounts,
    intensities: &IntensitySet,
    epsilon: f64,
    n_cut: usize,
) -> Result<LpBound> {
    let coeffs = decoy_coefficients(intensities, n_cut)?;
    let obs: Vec<f64> = counts
        .decoy_pairs()?
        .iter()
        .map(|(_, pair)| pair.e)
        .collect();
    decoy_lp(
        &obs,
        counts.n_block,
        counts.sampled,
        &coeffs,
        epsilon,
        LpObjective::MaxSingle,
    )
}

/// Restriction of a pooled single-photon bound to the events where both
/// users sat in the key basis, via a binomial sampling bound at failure
/// probability `epsilon`.
pub fn restrict_to_z(
    count_bound: f64,
    intensities: &IntensitySet,
    epsilon: f64,
    direction: BoundDirection,
) -> Result<f64> {
    let coeffs = decoy_coefficients(intensities, DEFAULT_N_CUT)?;
    restrict_to_z_with(count_bound, coeffs.p_zz_given_single, epsilon, direction)
}

pub(crate) fn restrict_to_z_with(
    count_bound: f64,
    p_zz_given_single: f64,
    epsilon: f64,
    direction: BoundDirection,
) -> Result<f64> {
    chernoff_outcome_bound(p_zz_given_single * count_bound, epsilon, direction)
}

/// Result of the full finite-key estimation.
#[derive(Debug, Clone)]
pub struct FiniteKeyResult {
    /// Lower bound on pooled single-photon counts.
    pub m11_l: f64,
    /// Upper bound on pooled single-photon errors.
    pub e11_u: f64,
    /// Lower bound on single-photon counts inside the sifted key.
    pub m11z_l: f64,
    /// Upper bound on single-photon phase errors inside the sifted key.
    pub e11z_u: f64,
    /// Phase-error rate upper bound; `None` when `m11z_l` vanished.
    pub e_ph_u: Option<f64>,
    /// Sifted key length.
    pub m_z: f64,
    /// Sifted key bit error rate.
    pub e_z: f64,
    /// Secret key length in bits (clamped at zero).
    pub key_bits: f64,
    /// Unclamped key length; negative when the phase-error penalty and
    /// error correction outweigh the single-photon contribution. Smooth
    /// through zero, which the intensity optimizer relies on.
    pub key_bits_signed: f64,
    /// Total failure probability of the estimation.
    pub total_epsilon: f64,
    /// Whether both decoy programs were feasible.
    pub lp_feasible: bool,
    pub note: Option<String>,
}

/// Full estimation chain from observed counts to a secret key length.
pub fn key_length(
    counts: &ObservedCounts,
    intensities: &IntensitySet,
    epsilon: f64,
    n_cut: usize,
    f_ec: f64,
) -> Result<FiniteKeyResult> {
    check_epsilon(epsilon)?;
    let coeffs = decoy_coefficients(intensities, n_cut)?;
    let decoy = counts.decoy_pairs()?;
    let obs_m: Vec<f64> = decoy.iter().map(|(_, p)| p.m).collect();
    let obs_e: Vec<f64> = decoy.iter().map(|(_, p)| p.e).collect();
    let m11 = decoy_lp(
        &obs_m,
        counts.n_block,
        counts.sampled,
        &coeffs,
        epsilon,
        LpObjective::MinSingle,
    )?;
    let e11 = decoy_lp(
        &obs_e,
        counts.n_block,
        counts.sampled,
        &coeffs,
        epsilon,
        LpObjective::MaxSingle,
    )?;

    let m11z_l = restrict_to_z_with(
        m11.value,
        coeffs.p_zz_given_single,
        epsilon,
        BoundDirection::Lower,
    )?;
    let e11z_u = restrict_to_z_with(
        e11.value.min(counts.n_block),
        coeffs.p_zz_given_single,
        epsilon,
        BoundDirection::Upper,
    )?;

    let zz = counts
        .get(IntensityId::Z, IntensityId::Z)
        .ok_or_else(|| Error::InvalidInput("counts carry no (z,z) pair".into()))?;
    let m_z = zz.m;
    let e_z = if zz.m > 0.0 { zz.e / zz.m } else { 0.0 };

    let mut note = None;
    let e_ph_u = if m11z_l > 0.0 {
        Some((e11z_u / m11z_l).min(1.0))
    } else {
        note = Some("single-photon key-basis count bound vanished".into());
        None
    };

    let key_bits_signed = if e_z < 0.5 {
        let h_ph = binary_entropy(e_ph_u.unwrap_or(0.5).min(0.5)).expect("in range");
        let h_z = binary_entropy(e_z).expect("in range");
        m11z_l * (1.0 - h_ph) - f_ec * m_z * h_z
    } else {
        note = Some("sifted-key error at or above 1/2".into());
        f64::NEG_INFINITY
    };
    let key_bits = if e_ph_u.is_some() {
        key_bits_signed.max(0.0)
    } else {
        0.0
    };

    Ok(FiniteKeyResult {
        m11_l: m11.value,
        e11_u: e11.value,
        m11z_l,
        e11z_u,
        e_ph_u,
        m_z,
        e_z,
        key_bits,
        key_bits_signed: if key_bits_signed.is_finite() { key_bits_signed } else { -m_z.max(1.0) },
        total_epsilon: CONCENTRATION_EVENTS as f64 * epsilon,
        lp_feasible: m11.feasible && e11.feasible,
        note,
    })
}


/// Test/diagnostic hook: solve a raw LP (minimize `c·x`, `a x <= b`,
/// `x >= 0`) and return the solution vector.
#[doc(hidden)]
pub fn debug_solve_lp(a: Vec<Vec<f64>>, b: Vec<f64>, c: Vec<f64>) -> Result<Vec<f64>> {
    match simplex::solve(&LinearProgram { a, b, c })? {
        LpOutcome::Optimal { x, .. } => Ok(x),
        other => Err(Error::Numerical(format!("LP not optimal: {other:?}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::counts::{self, CountPair};
    use crate::rates;
    use crate::rng::{StreamKind, TrialRng};
    use crate::system::SystemParams;

    // ln of the left-hand side of the defining deviation relations,
    // with ln(1 ± delta) evaluated precisely.
    fn ln_lhs_lower(chi: f64, delta: f64) -> f64 {
        chi * (delta / (1.0 + delta) - delta.ln_1p())
    }
    fn ln_lhs_upper(chi: f64, delta: f64) -> f64 {
        chi * (-delta / (1.0 - delta) - (-delta).ln_1p())
    }

    #[test]
    fn deltas_satisfy_defining_relations() {
        for &chi in &[1e2, 1e4, 1e6, 1e9] {
            for &eps in &[1e-3, 0.5e-11] {
                let (dl, du) = chernoff_deltas(chi, eps).unwrap();
                let target = (eps / 2.0).ln();
                let rl = (ln_lhs_lower(chi, dl) - target).abs() / target.abs();
                let ru = (ln_lhs_upper(chi, du) - target).abs() / target.abs();
                assert!(rl < 1e-9, "chi={chi} eps={eps}: lower residual {rl:e}");
                assert!(ru < 1e-9, "chi={chi} eps={eps}: upper residual {ru:e}");
            }
        }
    }

    #[test]
    fn deltas_concentrate_for_large_counts() {
        let (dl, du) = chernoff_deltas(1e9, 1e-10).unwrap();
        assert!(dl < 0.01 && du < 0.01, "dl={dl} du={du}");
        let (e_l, e_u) = chernoff_expectation_bounds(1e9, 1e-10).unwrap();
        assert!(e_l <= 1e9 && 1e9 <= e_u);
        assert!((e_l / 1e9 - 1.0).abs() < 0.01);
        assert!((e_u / 1e9 - 1.0).abs() < 0.01);
    }

    #[test]
    fn zero_observation_bounds() {
        let (e_l, e_u) = chernoff_expectation_bounds(0.0, 1e-3).unwrap();
        assert_eq!(e_l, 0.0);
        assert!((e_u - (2.0 / 1e-3f64).ln()).abs() < 1e-12);
        assert!(chernoff_expectation_bounds(1.0, 0.0).is_err());
        assert!(chernoff_expectation_bounds(1.0, 1.0).is_err());
        assert!(chernoff_expectation_bounds(-1.0, 0.5).is_err());
    }

    #[test]
    fn expectation_bounds_cover_binomial_truth() {
        // Binomial(1e5, 0.01): the true mean must land inside the interval
        // in at least 1 - 1e-3 of trials at eps = 1e-3.
        let (n, p, eps) = (100_000u64, 0.01, 1e-3);
        let truth = n as f64 * p;
        let trials = 10_000u64;
        let misses = crate::exec::indexed_fold(
            trials,
            0u64,
            |t| {
                let mut rng = TrialRng::new(1234, StreamKind::Custom(21), t);
                let chi = rng.binomial(n, p) as f64;
                let (e_l, e_u) = chernoff_expectation_bounds(chi, eps).unwrap();
                u64::from(!(e_l <= truth && truth <= e_u))
            },
            |a, b| a + b,
        );
        let coverage = 1.0 - misses as f64 / trials as f64;
        assert!(coverage >= 1.0 - eps, "coverage {coverage}");
    }

    #[test]
    fn outcome_bound_edge_cases() {
        assert_eq!(
            chernoff_outcome_bound(0.0, 1e-3, BoundDirection::Lower).unwrap(),
            0.0
        );
        let up = chernoff_outcome_bound(0.0, 1e-3, BoundDirection::Upper).unwrap();
        assert!((up - (-4.0 * (1e-3f64).ln())).abs() < 1e-12);
        // Vanishing confidence: delta -> 0 and both bounds -> expectation.
        let lo = chernoff_outcome_bound(50.0, 1.0 - 1e-12, BoundDirection::Lower).unwrap();
        let hi = chernoff_outcome_bound(50.0, 1.0 - 1e-12, BoundDirection::Upper).unwrap();
        assert!((lo - 50.0).abs() < 1e-3 && (hi - 50.0).abs() < 1e-3);
    }

    #[test]
    fn outcome_delta_solves_quadratic() {
        // delta satisfies chi delta^2 + ln(eps) delta + 2 ln(eps) = 0.
        let (chi, eps): (f64, f64) = (1e4, 0.5e-11);
        let le = eps.ln();
        let delta = (-le + (le * le - 8.0 * le * chi).sqrt()) / (2.0 * chi);
        let up = chernoff_outcome_bound(chi, eps, BoundDirection::Upper).unwrap();
        assert!((up - chi * (1.0 + delta)).abs() < 1e-9);
        let residual = chi * delta * delta + le * delta + 2.0 * le;
        let scale = (chi * delta * delta).abs().max(le.abs());
        assert!(residual.abs() <= 1e-12 * scale, "residual {residual:e}");
    }

    fn uniform_counts(n_block: f64, m: f64, e: f64) -> ObservedCounts {
        let mut counts = ObservedCounts::new(n_block).unwrap();
        counts
            .insert(IntensityId::Z, IntensityId::Z, CountPair { m, e })
            .unwrap();
        for &a in &IntensityId::DECOYS {
            for &b in &IntensityId::DECOYS {
                counts.insert(a, b, CountPair { m, e }).unwrap();
            }
        }
        counts
    }

    #[test]
    fn all_zero_counts_give_zero_m11() {
        let counts = uniform_counts(1e9, 0.0, 0.0);
        let set = IntensitySet::default();
        let m11 = decoy_lp_m11(&counts, &set, 1e-6, 6).unwrap();
        assert!(m11.feasible);
        assert_eq!(m11.value, 0.0);
        // With zero observed errors the error bound is still positive,
        // driven by the zero-observation Chernoff uppers.
        let e11 = decoy_lp_e11(&counts, &set, 1e-6, 6).unwrap();
        assert!(e11.feasible);
        assert!(e11.value > 0.0 && e11.value.is_finite());
    }

    #[test]
    fn coefficients_sum_to_one_per_fock_pair() {
        let set = IntensitySet::default();
        let coeffs = decoy_coefficients(&set, 8).unwrap();
        let grid = coeffs.n_cut + 1;
        for n in 0..grid {
            for m in 0..grid {
                let total: f64 = coeffs
                    .p_pair_given_fock
                    .iter()
                    .map(|table| table[n * grid + m])
                    .sum();
                assert!(
                    (total - 1.0).abs() < 1e-12,
                    "({n},{m}): coefficients sum to {total}"
                );
            }
        }
        let single: f64 = coeffs.p_pair_given_single.iter().sum::<f64>()
            + coeffs.p_zz_given_single
            + 2.0 * {
                // cross-basis single assignments (z with a decoy), twice.
                let pmf_z = poisson_pmf(set.z, 1)[1] * set.p_z;
                let p1: f64 = [
                    (set.z, set.p_z),
                    (set.w1, set.p_w1),
                    (set.w2, set.p_w2),
                    (set.v, set.p_v),
                ]
                .iter()
                .map(|&(mu, p)| p * poisson_pmf(mu, 1)[1])
                .sum();
                let px1: f64 = [(set.w1, set.p_w1), (set.w2, set.p_w2), (set.v, set.p_v)]
                    .iter()
                    .map(|&(mu, p)| p * poisson_pmf(mu, 1)[1])
                    .sum();
                (pmf_z / p1) * (px1 / p1)
            };
        assert!((single - 1.0).abs() < 1e-12, "single assignments: {single}");
    }

    #[test]
    fn restriction_degenerates_to_plain_outcome_bound() {
        // p_zz|11 = 1 collapses the restriction onto the raw bound.
        let bound = 1e6;
        let eps = 1e-9;
        let direct = chernoff_outcome_bound(bound, eps, BoundDirection::Lower).unwrap();
        let via = restrict_to_z_with(bound, 1.0, eps, BoundDirection::Lower).unwrap();
        assert_eq!(direct, via);
        assert_eq!(
            restrict_to_z_with(0.0, 0.3, eps, BoundDirection::Lower).unwrap(),
            0.0
        );
    }

    #[test]
    fn mdi_counts_recover_single_photon_fraction() {
        // Nominal no-memory counts at 50 km, N = 1e12: the LP bound must
        // sit between 90% and 100% of N p_1^2 Y11.
        let sys = SystemParams::default().with_distance(50.0);
        let set = IntensitySet::default();
        let n = 1e12;
        let counts = counts::mdi_expected_counts(&sys, &set, n).unwrap();
        let m11 = decoy_lp_m11(&counts, &set, DEFAULT_EPSILON, DEFAULT_N_CUT).unwrap();
        assert!(m11.feasible);
        let eta = sys.channel_transmittance() * sys.eta_d;
        let y11 = rates::y11_mdi(eta, eta, sys.dark_count_prob_clocked());
        let p1: f64 = [
            (set.z, set.p_z),
            (set.w1, set.p_w1),
            (set.w2, set.p_w2),
            (set.v, set.p_v),
        ]
        .iter()
        .map(|&(mu, p)| p * mu * (-mu).exp())
        .sum();
        let truth = n * p1 * p1 * y11;
        let ratio = m11.value / truth;
        assert!(
            (0.9..=1.0 + 1e-9).contains(&ratio),
            "M11_L / truth = {ratio}"
        );
    }

    #[test]
    fn half_error_instance_keeps_half_scale() {
        let sys = SystemParams::default().with_distance(50.0);
        let set = IntensitySet::default();
        let counts = counts::mdi_expected_counts(&sys, &set, 1e10).unwrap();
        // Degenerate instance: every pair errs half the time.
        let mut half = ObservedCounts::new(counts.n_block).unwrap();
        for (&(a, b), p) in counts.iter() {
            half.insert(a, b, CountPair { m: p.m, e: 0.5 * p.m }).unwrap();
        }
        let m11 = decoy_lp_m11(&half, &set, 1e-9, 8).unwrap();
        let e11 = decoy_lp_e11(&half, &set, 1e-9, 8).unwrap();
        assert!(e11.value >= 0.5 * m11.value * 0.9);
    }

    #[test]
    fn m11_bound_monotone_in_block_size() {
        let sys = SystemParams::default().with_distance(80.0);
        let set = IntensitySet::default();
        let mut prev = -1.0;
        for &n in &[1e9, 1e10, 1e11, 1e12] {
            let counts = counts::mdi_expected_counts(&sys, &set, n).unwrap();
            let r = key_length(&counts, &set, DEFAULT_EPSILON, 8, 1.0).unwrap();
            assert!(r.m11_l / n >= prev, "normalised M11_L dropped at N={n}");
            prev = r.m11_l / n;
        }
    }

    #[test]
    fn n_cut_is_converged() {
        let sys = SystemParams::default().with_distance(60.0);
        let set = IntensitySet::default();
        let counts = counts::mdi_expected_counts(&sys, &set, 1e12).unwrap();
        let a = key_length(&counts, &set, DEFAULT_EPSILON, DEFAULT_N_CUT, 1.0).unwrap();
        let b = key_length(&counts, &set, DEFAULT_EPSILON, 2 * DEFAULT_N_CUT, 1.0).unwrap();
        assert!((a.m11_l - b.m11_l).abs() <= 1e-3 * a.m11_l.max(1.0));
        assert!((a.e11_u - b.e11_u).abs() <= 1e-3 * a.e11_u.max(1.0));
        assert_eq!(a.total_epsilon, 20.0 * DEFAULT_EPSILON);
    }

    #[test]
    fn phase_error_bound_is_sound_and_tightens_with_block_size() {
        let sys = SystemParams::default().with_distance(50.0);
        let set = IntensitySet::default();
        let asym = rates::mdi_asymptotic(&sys, set.z);
        let mut prev = f64::INFINITY;
        for &n in &[1e12, 1e13, 1e14] {
            let counts = counts::mdi_expected_counts(&sys, &set, n).unwrap();
            let r = key_length(&counts, &set, DEFAULT_EPSILON, DEFAULT_N_CUT, 1.0).unwrap();
            let e_ph_u = r.e_ph_u.unwrap();
            // Never below the truth, monotonically tightening in N.
            assert!(e_ph_u >= asym.e_ph * 0.999, "{e_ph_u} vs {}", asym.e_ph);
            assert!(e_ph_u <= prev * (1.0 + 1e-9), "not tightening at N={n}");
            prev = e_ph_u;
        }
    }

    #[test]
    fn phase_error_bound_structural_limit_is_tight() {
        // With statistical widths removed (the N -> infinity limit of the
        // estimator), the program pins the single-photon error rate to a
        // few percent. The rate of convergence towards this limit at
        // physical epsilon is characterised in the acceptance suite.
        let sys = SystemParams::default().with_distance(50.0);
        let set = IntensitySet::default();
        let n = 1e14;
        let counts = counts::mdi_expected_counts(&sys, &set, n).unwrap();
        let coeffs = decoy_coefficients(&set, DEFAULT_N_CUT).unwrap();
        let obs: Vec<f64> = counts
            .decoy_pairs()
            .unwrap()
            .iter()
            .map(|(_, p)| p.e)
            .collect();
        // Exact windows: override the bound computation by solving the LP
        // with degenerate intervals around the expectations.
        let grid = DEFAULT_N_CUT + 1;
        let nv = 1 + grid * grid - 1 + 9;
        let slack0 = 1 + grid * grid - 1;
        let mut a = Vec::new();
        let mut b = Vec::new();
        for (i, table) in coeffs.p_pair_given_fock.iter().enumerate() {
            let mut row = vec![0.0; nv];
            row[0] = coeffs.p_pair_given_single[i];
            let mut var = 1;
            for nn in 0..grid {
                for mm in 0..grid {
                    if (nn, mm) == (1, 1) {
                        continue;
                    }
                    row[var] = table[nn * grid + mm];
                    var += 1;
                }
            }
            row[slack0 + i] = 1.0;
            a.push(row.clone());
            b.push(obs[i] * (1.0 + 1e-12) + 1e-9);
            a.push(row.iter().map(|v| -v).collect());
            b.push(-obs[i] * (1.0 - 1e-12) + 1e-9);
            let mut cap = vec![0.0; nv];
            cap[slack0 + i] = 1.0;
            a.push(cap);
            b.push(n * coeffs.tail_fraction[i]);
        }
        let mut c = vec![0.0; nv];
        c[0] = -1.0;
        let e11_structural = debug_solve_lp(a, b, c).unwrap()[0];

        let eta = sys.channel_transmittance() * sys.eta_d;
        let p_d = sys.dark_count_prob_clocked();
        let y11 = rates::y11_mdi(eta, eta, p_d);
        let e11 = rates::e11_mdi(
            crate::loading::Basis::X,
            eta,
            eta,
            rates::mdi_pair_misalignment(sys.e_mis),
            p_d,
        )
        .unwrap();
        let p1: f64 = [
            (set.z, set.p_z),
            (set.w1, set.p_w1),
            (set.w2, set.p_w2),
            (set.v, set.p_v),
        ]
        .iter()
        .map(|&(mu, p)| p * mu * (-mu).exp())
        .sum();
        let truth = n * p1 * p1 * y11 * e11;
        let ratio = e11_structural / truth;
        assert!(
            (1.0 - 1e-6..=1.05).contains(&ratio),
            "structural E11 ratio {ratio}"
        );
    }

    #[test]
    fn trivial_key_length_limits() {
        // Error-free physical counts: every single-photon key bit survives
        // up to the phase-error penalty alone.
        let sys = SystemParams::default().with_distance(40.0);
        let set = IntensitySet::default();
        let base = counts::mdi_expected_counts(&sys, &set, 1e12).unwrap();
        let mut clean = ObservedCounts::new(base.n_block).unwrap();
        for (&(a, b), p) in base.iter() {
            clean.insert(a, b, CountPair { m: p.m, e: 0.0 }).unwrap();
        }
        let r = key_length(&clean, &set, 1e-9, 8, 1.0).unwrap();
        assert!(r.key_bits > 0.0);
        assert_eq!(r.e_z, 0.0);
        let expected =
            r.m11z_l * (1.0 - binary_entropy(r.e_ph_u.unwrap().min(0.5)).unwrap());
        assert!((r.key_bits - expected).abs() <= 1e-9 * expected);
        // Saturated phase error kills the key: half the counts err.
        let mut bad = ObservedCounts::new(base.n_block).unwrap();
        for (&(a, b), p) in base.iter() {
            bad.insert(a, b, CountPair { m: p.m, e: 0.5 * p.m }).unwrap();
        }
        let r = key_length(&bad, &set, 1e-9, 8, 1.0).unwrap();
        assert_eq!(r.key_bits, 0.0);
    }
}
