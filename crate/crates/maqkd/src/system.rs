//! Device, channel and source parameters, with the derived quantities the
//! rate models consume.
//!
//! Everything is stored in SI units (seconds, hertz); only the channel
//! length and attenuation length are kept in kilometres, matching how they
//! appear at the interface.

use crate::{Error, Result};

/// Default vacuum decoy intensity (mean photon number).
pub const VACUUM_INTENSITY: f64 = 0.5e-3;

/// Channel, detector and source parameters shared by both protocols.
#[derive(Debug, Clone, Copy)]
pub struct SystemParams {
    /// Total Alice–Bob distance in km.
    pub l_km: f64,
    /// Channel attenuation length in km.
    pub l_att_km: f64,
    /// Detector efficiency.
    pub eta_d: f64,
    /// Detector dark count rate in counts/s.
    pub gamma_dc: f64,
    /// Misalignment error probability.
    pub e_mis: f64,
    /// Frequency-conversion efficiency at the middle node.
    pub eta_c: f64,
    /// Protocol repetition rate in Hz.
    pub r_s: f64,
    /// Error-correction inefficiency multiplying the leaked syndrome.
    pub f_ec: f64,
}

impl Default for SystemParams {
    /// Reference parameter set: 22 km attenuation length, 93% detectors,
    /// 1 dark count per second, 0.5% misalignment, ideal conversion, 1 GHz
    /// clock, error-correction inefficiency 1.16.
    fn default() -> Self {
        SystemParams {
            l_km: 0.0,
            l_att_km: 22.0,
            eta_d: 0.93,
            gamma_dc: 1.0,
            e_mis: 0.005,
            eta_c: 1.0,
            r_s: 1e9,
            f_ec: 1.16,
        }
    }
}

impl SystemParams {
    pub fn validate(&self) -> Result<()> {
        let in_unit = |v: f64| (0.0..=1.0).contains(&v);
        if !in_unit(self.eta_d) || !in_unit(self.eta_c) {
            return Err(Error::InvalidInput("efficiencies must lie in [0,1]".into()));
        }
        if self.l_km < 0.0 || self.l_att_km <= 0.0 || self.gamma_dc < 0.0 || self.r_s <= 0.0 {
            return Err(Error::InvalidInput(
                "distances and rates must be nonnegative (L_att, R_s positive)".into(),
            ));
        }
        if !(0.0..=0.5).contains(&self.e_mis) {
            return Err(Error::InvalidInput("e_mis must lie in [0, 0.5]".into()));
        }
        if self.f_ec < 1.0 {
            return Err(Error::InvalidInput("f_ec must be >= 1".into()));
        }
        Ok(())
    }

    pub fn with_distance(mut self, l_km: f64) -> Self {
        self.l_km = l_km;
        self
    }

    pub fn with_clock(mut self, r_s: f64) -> Self {
        self.r_s = r_s;
        self
    }

    /// Per-leg channel transmittance `exp(-L / 2 L_att)`.
    pub fn channel_transmittance(&self) -> f64 {
        (-self.l_km / (2.0 * self.l_att_km)).exp()
    }

    /// Half-width Θ of the uniform misalignment angle distribution,
    /// `sqrt(3 e_mis)`, chosen so the average of `sin²θ` reproduces the
    /// misalignment error probability.
    pub fn misalignment_half_width(&self) -> f64 {
        (3.0 * self.e_mis).sqrt()
    }

    /// Dark count probability per detector per round when the optical pulse
    /// lasts one memory interaction time.
    pub fn dark_count_prob(&self, memory: &MemoryParams) -> f64 {
        self.gamma_dc * memory.tau_int
    }

    /// Dark count probability per detector per round at this clock rate.
    pub fn dark_count_prob_clocked(&self) -> f64 {
        self.gamma_dc / self.r_s
    }

    /// Round duration, the protocol clock period.
    pub fn round_duration(&self) -> f64 {
        1.0 / self.r_s
    }
}

/// Memory decoherence channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decoherence {
    /// Phase flips only; Z-basis states are unaffected.
    Dephasing,
    /// All three Pauli flips with equal weight.
    Depolarising,
}

/// Quantum-memory parameters.
#[derive(Debug, Clone, Copy)]
pub struct MemoryParams {
    /// Combined writing-reading efficiency `η_w η_r0`.
    pub eta_w_eta_r0: f64,
    /// Amplitude decay time constant T1, seconds.
    pub t1: f64,
    /// Decoherence time constant T2, seconds.
    pub t2: f64,
    /// Photon-memory interaction time, seconds.
    pub tau_int: f64,
    /// Initialisation time, seconds (folded into the reading round count).
    pub tau_init: f64,
    /// Rounds needed to read the memory.
    pub n_r: u32,
    /// Source repetition rate the memory supports, Hz.
    pub r_s: f64,
    /// Decoherence model applied while a loaded memory waits.
    pub decoherence: Decoherence,
}

impl MemoryParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.eta_w_eta_r0) {
            return Err(Error::InvalidInput("eta_w_eta_r0 must lie in [0,1]".into()));
        }
        if self.t1 <= 0.0 || self.t2 <= 0.0 || self.tau_int <= 0.0 || self.r_s <= 0.0 {
            return Err(Error::InvalidInput(
                "memory time constants and rate must be positive".into(),
            ));
        }
        if self.tau_init < 0.0 {
            return Err(Error::InvalidInput("tau_init must be nonnegative".into()));
        }
        if self.n_r < 1 {
            return Err(Error::InvalidInput("N_r must be at least 1".into()));
        }
        Ok(())
    }

    pub fn with_decoherence(mut self, model: Decoherence) -> Self {
        self.decoherence = model;
        self
    }
}

/// Demonstrated memory platforms with built-in parameter sets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MemoryKind {
    /// Warm vapour ensemble: fast but short-lived.
    WarmVapour,
    /// Cold atomic ensemble: slow clock, long coherence.
    ColdAtom,
    /// Silicon vacancy centre.
    SiliconVacancy,
}

impl MemoryKind {
    pub fn from_label(label: &str) -> Result<Self> {
        match label.to_ascii_lowercase().as_str() {
            "wv" | "warm-vapour" | "warm_vapour" => Ok(MemoryKind::WarmVapour),
            "ca" | "cold-atom" | "cold_atom" => Ok(MemoryKind::ColdAtom),
            "sv" | "silicon-vacancy" | "silicon_vacancy" => Ok(MemoryKind::SiliconVacancy),
            other => Err(Error::InvalidInput(format!("unknown memory tag `{other}`"))),
        }
    }

    /// Published parameter row for the platform; `T2 := T1`, one reading
    /// round, zero initialisation time, dephasing decoherence by default.
    pub fn params(self) -> MemoryParams {
        let (eta, t1, tau_int, r_s) = match self {
            MemoryKind::WarmVapour => (0.05, 120e-6, 1.43e-9, 518e6),
            MemoryKind::ColdAtom => (0.76, 220e-3, 240e-9, 4.2e6),
            MemoryKind::SiliconVacancy => (0.423, 200e-6, 142e-9, 7.04e6),
        };
        MemoryParams {
            eta_w_eta_r0: eta,
            t1,
            t2: t1,
            tau_int,
            tau_init: 0.0,
            n_r: 1,
            r_s,
            decoherence: Decoherence::Dephasing,
        }
    }
}

/// Intensity labels; `Z` is the signal intensity (Z basis), the rest are
/// decoys encoded in the X basis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum IntensityId {
    Z,
    W1,
    W2,
    V,
}

impl IntensityId {
    pub const ALL: [IntensityId; 4] = [
        IntensityId::Z,
        IntensityId::W1,
        IntensityId::W2,
        IntensityId::V,
    ];
    pub const DECOYS: [IntensityId; 3] = [IntensityId::W1, IntensityId::W2, IntensityId::V];

    pub fn is_z_basis(self) -> bool {
        self == IntensityId::Z
    }

    pub fn label(self) -> &'static str {
        match self {
            IntensityId::Z => "z",
            IntensityId::W1 => "w1",
            IntensityId::W2 => "w2",
            IntensityId::V => "v",
        }
    }

    pub fn from_label(s: &str) -> Result<Self> {
        match s {
            "z" => Ok(IntensityId::Z),
            "w1" => Ok(IntensityId::W1),
            "w2" => Ok(IntensityId::W2),
            "v" => Ok(IntensityId::V),
            other => Err(Error::Parse(format!("unknown intensity label `{other}`"))),
        }
    }
}

/// The four source intensities and their selection probabilities. Canonical
/// ordering `z > w1 > w2 > v >= 0` is enforced; probabilities must sum to 1
/// (zero entries are allowed).
#[derive(Debug, Clone, Copy)]
pub struct IntensitySet {
    pub z: f64,
    pub w1: f64,
    pub w2: f64,
    pub v: f64,
    pub p_z: f64,
    pub p_w1: f64,
    pub p_w2: f64,
    pub p_v: f64,
}

impl IntensitySet {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        z: f64,
        w1: f64,
        w2: f64,
        v: f64,
        p_z: f64,
        p_w1: f64,
        p_w2: f64,
        p_v: f64,
    ) -> Result<Self> {
        let set = IntensitySet {
            z,
            w1,
            w2,
            v,
            p_z,
            p_w1,
            p_w2,
            p_v,
        };
        set.validate()?;
        Ok(set)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.z > self.w1 && self.w1 > self.w2 && self.w2 > self.v && self.v >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "intensities must satisfy z > w1 > w2 > v >= 0, got {:?}",
                (self.z, self.w1, self.w2, self.v)
            )));
        }
        let probs = [self.p_z, self.p_w1, self.p_w2, self.p_v];
        if probs.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
            return Err(Error::InvalidInput("probabilities must lie in [0,1]".into()));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidInput(format!(
                "selection probabilities sum to {sum}, expected 1"
            )));
        }
        Ok(())
    }

    pub fn intensity(&self, id: IntensityId) -> f64 {
        match id {
            IntensityId::Z => self.z,
            IntensityId::W1 => self.w1,
            IntensityId::W2 => self.w2,
            IntensityId::V => self.v,
        }
    }

    pub fn probability(&self, id: IntensityId) -> f64 {
        match id {
            IntensityId::Z => self.p_z,
            IntensityId::W1 => self.p_w1,
            IntensityId::W2 => self.p_w2,
            IntensityId::V => self.p_v,
        }
    }
}

impl Default for IntensitySet {
    fn default() -> Self {
        IntensitySet {
            z: 0.5,
            w1: 0.1,
            w2: 0.02,
            v: VACUUM_INTENSITY,
            p_z: 0.7,
            p_w1: 0.12,
            p_w2: 0.12,
            p_v: 0.06,
        }
    }
}

#[cfg(test)]
#[allow(clippy::field_reassign_with_default)]
mod tests {
    use super::*;
    use crate::numerics::{default_rule, integrate_theta};

    #[test]
    fn transmittance_reference_values() {
        let base = SystemParams::default();
        assert_eq!(base.with_distance(0.0).channel_transmittance(), 1.0);
        let p = base.with_distance(100.0);
        assert!((p.channel_transmittance() - 0.103_030_8).abs() < 1e-6);
        let q = base.with_distance(44.0);
        assert!((q.channel_transmittance() - (-1.0f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn transmittance_is_decreasing_and_square_root_of_total() {
        let base = SystemParams::default();
        let mut prev = f64::INFINITY;
        for i in 0..20 {
            let l = i as f64 * 25.0;
            let leg = base.with_distance(l).channel_transmittance();
            assert!(leg < prev);
            let total = (-l / base.l_att_km).exp();
            assert!((leg * leg - total).abs() < 1e-12);
            prev = leg;
        }
    }

    #[test]
    fn dark_count_reference_values() {
        let mut sys = SystemParams::default();
        let mut mem = MemoryKind::WarmVapour.params();
        sys.gamma_dc = 0.0;
        assert_eq!(sys.dark_count_prob(&mem), 0.0);
        sys.gamma_dc = 1.0;
        assert!((sys.dark_count_prob(&mem) - 1.43e-9).abs() < 1e-15);
        mem.tau_int = 240e-9;
        assert!((sys.dark_count_prob(&mem) - 2.4e-7).abs() < 1e-13);
    }

    #[test]
    fn misalignment_half_width_values() {
        let mut sys = SystemParams::default();
        sys.e_mis = 0.0;
        assert_eq!(sys.misalignment_half_width(), 0.0);
        sys.e_mis = 0.005;
        assert!((sys.misalignment_half_width() - 0.122_474_5).abs() < 1e-6);
        sys.e_mis = 0.03;
        assert!((sys.misalignment_half_width() - 0.3).abs() < 1e-12);
    }

    #[test]
    fn builtin_memories_match_published_rows() {
        let wv = MemoryKind::WarmVapour.params();
        assert_eq!(wv.eta_w_eta_r0, 0.05);
        assert_eq!(wv.t1, 120e-6);
        assert_eq!(wv.t2, wv.t1);
        assert_eq!(wv.tau_int, 1.43e-9);
        assert_eq!(wv.r_s, 518e6);
        let ca = MemoryKind::ColdAtom.params();
        assert_eq!(ca.eta_w_eta_r0, 0.76);
        assert_eq!(ca.t1, 220e-3);
        assert_eq!(ca.tau_int, 240e-9);
        assert_eq!(ca.r_s, 4.2e6);
        let sv = MemoryKind::SiliconVacancy.params();
        assert_eq!(sv.eta_w_eta_r0, 0.423);
        assert_eq!(sv.t1, 200e-6);
        assert_eq!(sv.tau_int, 142e-9);
        assert_eq!(sv.r_s, 7.04e6);
        assert!(MemoryKind::from_label("nope").is_err());
    }

    #[test]
    fn published_rates_are_rounded_inverse_interaction_times() {
        // The table stores R_s explicitly; it should stay within 30% of
        // 1/tau_int but is never derived from it.
        for kind in [
            MemoryKind::WarmVapour,
            MemoryKind::ColdAtom,
            MemoryKind::SiliconVacancy,
        ] {
            let m = kind.params();
            let ratio = m.r_s * m.tau_int;
            assert!(
                (0.7..=1.3).contains(&ratio),
                "{kind:?}: R_s * tau_int = {ratio}"
            );
        }
    }

    #[test]
    fn misalignment_average_matches_error_probability() {
        let rule = default_rule();
        for &e_mis in &[0.001f64, 0.005, 0.01] {
            let theta = (3.0 * e_mis).sqrt();
            let avg = integrate_theta(|t| t.sin().powi(2), theta, rule);
            assert!(
                (avg - e_mis).abs() / e_mis < 0.01,
                "e_mis={e_mis}: avg={avg}"
            );
        }
    }

    #[test]
    fn intensity_set_invariants() {
        assert!(IntensitySet::default().validate().is_ok());
        // Ordering violation.
        assert!(IntensitySet::new(0.1, 0.2, 0.02, 5e-4, 0.25, 0.25, 0.25, 0.25).is_err());
        // Probability sum violation.
        assert!(IntensitySet::new(0.5, 0.1, 0.02, 5e-4, 0.5, 0.25, 0.25, 0.25).is_err());
        // Degenerate probabilities are allowed.
        assert!(IntensitySet::new(0.5, 0.1, 0.02, 0.0, 1.0, 0.0, 0.0, 0.0).is_ok());
    }
}
