//! Asymptotic secret-key rates for the memory-assisted system and the
//! no-memory MDI reference, built on shared asymmetric single-photon yield
//! and error primitives.
//!
//! The central measurement of the memory-assisted protocol is modelled as an
//! asymmetric MDI link whose legs are the two memory read-out paths: the
//! memory loaded later is read at its nominal efficiency while the one
//! loaded earlier decayed for the random number of rounds the second side
//! needed. All waiting-time averages are closed forms over the pair of
//! geometric loading races.

use crate::loading::{self, Basis, ButterflyChannel};
use crate::numerics::binary_entropy;
use crate::system::{Decoherence, MemoryParams, SystemParams};
use crate::KeyRateResult;

/// Error rate of a random (dark-count driven) coincidence.
pub const E0: f64 = 0.5;

/// Single-photon yield of an asymmetric MDI link with leg transmissivities
/// `eta_l`, `eta_r` and per-detector dark count probability `p_d`.
pub fn y11_mdi(eta_l: f64, eta_r: f64, p_d: f64) -> f64 {
    (1.0 - p_d).powi(2)
        * (0.5 * eta_l * eta_r
            + (2.0 * eta_l + 2.0 * eta_r - 3.0 * eta_l * eta_r) * p_d
            + 4.0 * (1.0 - eta_l) * (1.0 - eta_r) * p_d * p_d)
}

/// Single-photon error rate of the asymmetric MDI link, conditioned on a
/// successful coincidence; `e_d` is the probability that exactly one of the
/// two photons is flipped. `None` when the yield vanishes.
pub fn e11_mdi(basis: Basis, eta_l: f64, eta_r: f64, e_d: f64, p_d: f64) -> Option<f64> {
    let y = y11_mdi(eta_l, eta_r, p_d);
    if y <= 0.0 {
        return None;
    }
    let kappa = match basis {
        Basis::X => 1.0,
        Basis::Z => 1.0 - 2.0 * p_d,
    };
    Some(E0 - (E0 - e_d) * (1.0 - p_d).powi(2) * kappa * 0.5 * eta_l * eta_r / y)
}

/// Mean number of rounds until both memories are loaded, for per-round
/// loading probability `p_load` on each side.
pub fn rounds_to_load_both(p_load: f64) -> f64 {
    (3.0 - 2.0 * p_load) / (p_load * (2.0 - p_load))
}

// Average of exp(-T D / tau) over the waiting-round difference D of two
// independent geometric races at probability p: p(1+qx)/((2-p)(1-qx)).
fn race_decay_average(p: f64, t_round: f64, tau: f64) -> f64 {
    let r = t_round / tau;
    let x = (-r).exp();
    let one_minus_qx = -(-r).exp_m1() + p * x;
    p * (1.0 + (1.0 - p) * x) / ((2.0 - p) * one_minus_qx)
}

/// Ratio of the earlier-loaded memory's mean reading efficiency to the
/// nominal one: the decay factor `exp(-T D / T1)` averaged over the wait.
pub fn earlier_memory_decay_ratio(p_load: f64, t_round: f64, t1: f64) -> f64 {
    race_decay_average(p_load, t_round, t1)
}

/// Average probability that the earlier-loaded memory suffered a dephasing
/// flip by read-out time: `E[(1 - exp(-T D / T2)) / 2]`.
pub fn avg_dephasing_flip(p_load: f64, t_round: f64, t2: f64) -> f64 {
    0.5 * (1.0 - race_decay_average(p_load, t_round, t2))
}

/// Decoherence error parameter entering the two-photon misalignment
/// combination, one quarter of the earlier memory's average flip
/// probability: the wait is split over the two memories (only one of them
/// ever waits) and over the two combination slots. A depolarising channel
/// flips an eigenstate with 2/3 of the dephasing probability.
pub fn avg_decoherence_error(
    model: Decoherence,
    p_load: f64,
    t_round: f64,
    t2: f64,
) -> f64 {
    let d = 0.25 * avg_dephasing_flip(p_load, t_round, t2);
    match model {
        Decoherence::Dephasing => d,
        Decoherence::Depolarising => 2.0 / 3.0 * d,
    }
}

/// Probability that exactly one of two retrieved photons is flipped, given
/// loading error probabilities `a`, `b` and per-memory decoherence error
/// `d`. Equivalent to multiplying the three flip-channel visibilities:
/// `1 - 2e = (1-2a)(1-2b)(1-4d)`.
pub fn pair_misalignment(a: f64, b: f64, d: f64) -> f64 {
    let (beta_a, beta_b) = (1.0 - 2.0 * a, 1.0 - 2.0 * b);
    a + b + beta_a * d + beta_b * d
        - 2.0 * a * b
        - 2.0 * beta_a * d * b
        - 2.0 * beta_b * d * a
}

/// Intermediate quantities of an asymptotic rate evaluation. Memory-chain
/// diagnostics are `None` for the no-memory reference.
#[derive(Debug, Clone)]
pub struct AsymptoticBreakdown {
    /// Probability of a sifted key bit per round (both users on the signal
    /// intensity).
    pub q_z: f64,
    /// Sifted-key bit error rate.
    pub e_z: f64,
    /// Single-photon contribution to `q_z`.
    pub q11_z: f64,
    /// Phase-error rate of the single-photon contribution.
    pub e_ph: f64,
    /// Probability that both memories are loaded and ready in a round.
    pub p_side: Option<f64>,
    /// Success probability of the central measurement once loaded.
    pub p_mid: Option<f64>,
    /// Mean rounds to load both memories.
    pub n_l: Option<f64>,
    /// Effective reading efficiency of the later-loaded memory.
    pub eta_m: Option<f64>,
    /// Average effective reading efficiency of the earlier-loaded memory.
    pub eta_m_prime: Option<f64>,
    /// Key rate in bits/s, clamped at zero.
    pub rate_bps: f64,
    /// Unclamped signed rate in bits/s (used for crossover search).
    pub rate_signed_bps: f64,
    /// Reason for a degenerate evaluation.
    pub note: Option<String>,
}

impl AsymptoticBreakdown {
    fn degenerate(note: String) -> Self {
        AsymptoticBreakdown {
            q_z: 0.0,
            e_z: 0.0,
            q11_z: 0.0,
            e_ph: E0,
            p_side: None,
            p_mid: None,
            n_l: None,
            eta_m: None,
            eta_m_prime: None,
            rate_bps: 0.0,
            rate_signed_bps: 0.0,
            note: Some(note),
        }
    }

    pub fn to_key_rate(&self) -> KeyRateResult {
        KeyRateResult {
            rate_bps: self.rate_bps,
            rate_signed_bps: self.rate_signed_bps,
            key_bits: None,
            q_z: self.q_z,
            e_z: self.e_z,
            e_ph: Some(self.e_ph),
            m11z_l: None,
            note: self.note.clone(),
        }
    }
}

/// Memory read-out chain shared by the asymptotic rate and the finite-key
/// expected counts: waiting statistics, effective efficiencies and the gain
/// of the central measurement for a given per-round loading probability.
pub struct MemoryChain {
    pub n_l: f64,
    pub p_side: f64,
    pub eta_m: f64,
    pub eta_m_prime: f64,
    pub p_mid: f64,
    pub q_total: f64,
    pub decoherence_error: f64,
    pub p_dc: f64,
}

pub fn memory_chain(p_load: f64, sys: &SystemParams, memory: &MemoryParams) -> Option<MemoryChain> {
    if p_load <= 0.0 {
        return None;
    }
    let p_dc = sys.dark_count_prob(memory);
    let t_round = 1.0 / memory.r_s;
    let n_l = rounds_to_load_both(p_load);
    let p_side = 1.0 / (n_l + memory.n_r as f64);
    let eta_m = memory.eta_w_eta_r0 * sys.eta_d;
    let eta_m_prime = eta_m * earlier_memory_decay_ratio(p_load, t_round, memory.t1);
    let p_mid = y11_mdi(eta_m, eta_m_prime, p_dc);
    let decoherence_error =
        avg_decoherence_error(memory.decoherence, p_load, t_round, memory.t2);
    Some(MemoryChain {
        n_l,
        p_side,
        eta_m,
        eta_m_prime,
        p_mid,
        q_total: p_side * p_mid,
        decoherence_error,
        p_dc,
    })
}

/// Z-basis error probability between the two retrieved memory states.
pub fn memory_z_error(memory: &MemoryParams, e_load_z: f64, decoherence_error: f64) -> f64 {
    match memory.decoherence {
        // Dephasing leaves Z eigenstates alone: only loading errors count.
        Decoherence::Dephasing => 2.0 * e_load_z * (1.0 - e_load_z),
        Decoherence::Depolarising => pair_misalignment(e_load_z, e_load_z, decoherence_error),
    }
}

/// Asymptotic rate of the memory-assisted system at signal intensity `z`.
/// The protocol clock is the memory repetition rate.
pub fn ma_asymptotic(sys: &SystemParams, memory: &MemoryParams, z: f64) -> AsymptoticBreakdown {
    let stats = loading::loading_stats_z(z, sys, memory);
    let (p_load, e_load_z) = match (stats.p_load, stats.e_load) {
        (p, Some(e)) if p > 0.0 => (p, e),
        _ => return AsymptoticBreakdown::degenerate("signal intensity never loads".into()),
    };
    let chain = match memory_chain(p_load, sys, memory) {
        Some(c) => c,
        None => return AsymptoticBreakdown::degenerate("memory chain undefined".into()),
    };
    let q_z = chain.q_total;

    let side = ButterflyChannel::for_side_measurement(sys, memory);
    let p_sp = y11_mdi(side.eta_a, side.eta_b, side.p_dc);
    let q11_z = q_z * (p_sp / p_load).powi(2) * z * z * (-2.0 * z).exp();

    let e_load_x_sp = match e11_mdi(Basis::X, side.eta_a, side.eta_b, sys.e_mis, side.p_dc) {
        Some(e) => e,
        None => return AsymptoticBreakdown::degenerate("side measurement yield vanished".into()),
    };
    let e_qm_sp = pair_misalignment(e_load_x_sp, e_load_x_sp, chain.decoherence_error);
    let e_ph = match e11_mdi(Basis::X, chain.eta_m, chain.eta_m_prime, e_qm_sp, chain.p_dc) {
        Some(e) => e,
        None => return AsymptoticBreakdown::degenerate("central measurement yield vanished".into()),
    };
    let e_qm_z = memory_z_error(memory, e_load_z, chain.decoherence_error);
    let e_z = match e11_mdi(Basis::Z, chain.eta_m, chain.eta_m_prime, e_qm_z, chain.p_dc) {
        Some(e) => e,
        None => return AsymptoticBreakdown::degenerate("central measurement yield vanished".into()),
    };

    let (rate_bps, rate_signed, note) = key_rate_from_gains(memory.r_s, sys.f_ec, q_z, e_z, q11_z, e_ph);
    AsymptoticBreakdown {
        q_z,
        e_z,
        q11_z,
        e_ph,
        p_side: Some(chain.p_side),
        p_mid: Some(chain.p_mid),
        n_l: Some(chain.n_l),
        eta_m: Some(chain.eta_m),
        eta_m_prime: Some(chain.eta_m_prime),
        rate_bps,
        rate_signed_bps: rate_signed,
        note,
    }
}

/// Gain of the no-memory MDI link in the Z basis for intensities `a`, `b`:
/// the correct-coincidence part and the spurious (dark-driven) part.
pub fn mdi_z_gain(eta: f64, a: f64, b: f64, p_d: f64) -> (f64, f64) {
    let zeta = eta * (a + b);
    let x = eta * (a * b).sqrt() / 2.0;
    let q = 1.0 - p_d;
    let q_c = 2.0 * q * q * (-0.5 * zeta).exp()
        * (1.0 - q * (-0.5 * eta * a).exp())
        * (1.0 - q * (-0.5 * eta * b).exp());
    let q_e = 2.0 * p_d * q * q * (-0.5 * zeta).exp()
        * (crate::numerics::bessel_i0(2.0 * x) - q * (-0.5 * zeta).exp());
    (q_c, q_e)
}

/// Z-basis gain and joint error probability of the no-memory MDI link.
pub fn mdi_z_gain_and_error(eta: f64, a: f64, b: f64, p_d: f64, e_d: f64) -> (f64, f64) {
    let (q_c, q_e) = mdi_z_gain(eta, a, b, p_d);
    (q_c + q_e, e_d * q_c + (1.0 - e_d) * q_e)
}

/// X-basis gain and joint error probability of the no-memory MDI link.
pub fn mdi_x_gain_and_error(eta: f64, a: f64, b: f64, p_d: f64, e_d: f64) -> (f64, f64) {
    let zeta = eta * (a + b);
    let x = eta * (a * b).sqrt() / 2.0;
    let y = (1.0 - p_d) * (-0.25 * zeta).exp();
    let i0x = crate::numerics::bessel_i0(x);
    let i02x = crate::numerics::bessel_i0(2.0 * x);
    let gain = 2.0 * y * y * (1.0 + 2.0 * y * y - 4.0 * y * i0x + i02x);
    let err = 0.5 * gain - (1.0 - 2.0 * e_d) * y * y * (i02x - 1.0);
    (gain, err)
}

/// Total misalignment-flip probability of the symmetric MDI link, where
/// each leg flips independently with probability `e_mis`.
pub fn mdi_pair_misalignment(e_mis: f64) -> f64 {
    2.0 * e_mis * (1.0 - e_mis)
}

/// Asymptotic rate of the no-memory MDI reference at signal intensity `z`,
/// clocked at `sys.r_s`.
pub fn mdi_asymptotic(sys: &SystemParams, z: f64) -> AsymptoticBreakdown {
    let p_d = sys.dark_count_prob_clocked();
    let eta = sys.channel_transmittance() * sys.eta_d;
    let e_d = mdi_pair_misalignment(sys.e_mis);

    let (q_z, e_joint) = mdi_z_gain_and_error(eta, z, z, p_d, e_d);
    if q_z <= 0.0 {
        return AsymptoticBreakdown::degenerate("no coincidences".into());
    }
    let e_z = e_joint / q_z;
    let y11 = y11_mdi(eta, eta, p_d);
    let q11_z = z * z * (-2.0 * z).exp() * y11;
    let e_ph = E0
        - (E0 - e_d) * (1.0 - p_d).powi(2) * (1.0 - 2.0 * p_d) * eta * eta / (2.0 * y11);

    let (rate_bps, rate_signed, note) = key_rate_from_gains(sys.r_s, sys.f_ec, q_z, e_z, q11_z, e_ph);
    AsymptoticBreakdown {
        q_z,
        e_z,
        q11_z,
        e_ph,
        p_side: None,
        p_mid: None,
        n_l: None,
        eta_m: None,
        eta_m_prime: None,
        rate_bps,
        rate_signed_bps: rate_signed,
        note,
    }
}

fn key_rate_from_gains(
    r_s: f64,
    f_ec: f64,
    q_z: f64,
    e_z: f64,
    q11_z: f64,
    e_ph: f64,
) -> (f64, f64, Option<String>) {
    if e_z >= E0 {
        return (0.0, f64::NEG_INFINITY, Some("sifted-key error at or above 1/2".into()));
    }
    let h_ph = binary_entropy(e_ph.clamp(0.0, 1.0)).expect("clamped");
    let h_z = binary_entropy(e_z).expect("e_z < 1/2");
    let signed = r_s * (q11_z * (1.0 - h_ph) - f_ec * q_z * h_z);
    (signed.max(0.0), signed, None)
}
