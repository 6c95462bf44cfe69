//! Round-level Monte-Carlo oracle for the closed forms used by the rate
//! models.
//!
//! The loading simulation samples, per trial, a misalignment angle, the
//! entangled-pair branch, photon survival and detector dark counts, and
//! draws the four-detector click pattern from its exact distribution for a
//! coherent field plus (at most) one photon behind a 50:50 beam splitter.
//! Loss acts on amplitudes (exact for coherent states) and as Bernoulli
//! survival for the single photon. Click-pattern probabilities come from
//! vacuum projections of the displaced state, so single-photon interference
//! with the coherent field is reproduced exactly — a classical
//! particle-splitting simulation would miss those terms.
//!
//! All randomness is drawn from counter-based per-trial streams, so results
//! are identical for any thread count.

use crate::counts::{CountPair, ObservedCounts};
use crate::exec;
use crate::finite_key;
use crate::loading::{Basis, ButterflyChannel};
use crate::rng::{StreamKind, TrialRng};
use crate::system::{Decoherence, IntensityId, IntensitySet};
use crate::Result;

/// Monte-Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy)]
pub struct Estimate {
    pub value: f64,
    pub std_err: f64,
}

impl Estimate {
    fn from_fraction(hits: f64, n: f64) -> Estimate {
        let p = hits / n;
        Estimate {
            value: p,
            std_err: (p * (1.0 - p) / n).sqrt(),
        }
    }

    fn from_moments(sum: f64, sum_sq: f64, n: f64) -> Estimate {
        let mean = sum / n;
        let var = (sum_sq / n - mean * mean).max(0.0);
        Estimate {
            value: mean,
            std_err: (var / n).sqrt(),
        }
    }

    /// Deviation from a reference value in units of the standard error.
    pub fn sigmas_from(&self, reference: f64) -> f64 {
        let floor = 1e-15 * reference.abs().max(1e-15);
        (self.value - reference).abs() / self.std_err.max(floor)
    }
}

/// Analytic value paired with its Monte-Carlo estimate.
#[derive(Debug, Clone)]
pub struct Comparison {
    pub label: String,
    pub analytic: f64,
    pub estimate: Estimate,
}

impl Comparison {
    pub fn sigmas(&self) -> f64 {
        self.estimate.sigmas_from(self.analytic)
    }

    pub fn within(&self, n_sigma: f64) -> bool {
        self.sigmas() <= n_sigma
    }
}

// --- exact click-pattern sampling -----------------------------------------

// Detector mode order: [l_H, r_H, l_V, r_V].
const N_MODES: usize = 4;

// P(no real photon on every mode of `subset`) for coherent displacements
// `disp` plus an optional single photon with mode coefficients `photon`.
fn vacuum_probability(subset: u8, disp: &[f64; N_MODES], photon: Option<&[f64; N_MODES]>) -> f64 {
    let mut energy = 0.0;
    for (i, d) in disp.iter().enumerate() {
        if subset & (1 << i) != 0 {
            energy += d * d;
        }
    }
    let base = (-energy).exp();
    match photon {
        None => base,
        Some(q) => {
            // Amplitude of absorbing the photon inside the subset plus the
            // weight of it surviving outside.
            let mut overlap = 0.0;
            let mut inside = 0.0;
            for i in 0..N_MODES {
                if subset & (1 << i) != 0 {
                    overlap += q[i] * disp[i];
                    inside += q[i] * q[i];
                }
            }
            base * (overlap * overlap + 1.0 - inside)
        }
    }
}

// Exact probabilities of all 16 real-click patterns by inclusion-exclusion
// over vacuum subsets.
fn click_pattern_distribution(
    disp: &[f64; N_MODES],
    photon: Option<&[f64; N_MODES]>,
) -> [f64; 16] {
    let mut vac = [0.0f64; 16];
    for (subset, v) in vac.iter_mut().enumerate() {
        *v = vacuum_probability(subset as u8, disp, photon);
    }
    let mut probs = [0.0f64; 16];
    for pattern in 0u8..16 {
        let complement = !pattern & 0xF;
        let mut p = 0.0;
        // Sum over subsets w of the clicking set, with parity sign.
        let mut w = pattern;
        loop {
            let sign = if (w.count_ones() & 1) == 0 { 1.0 } else { -1.0 };
            p += sign * vac[(complement | w) as usize];
            if w == 0 {
                break;
            }
            w = (w - 1) & pattern;
        }
        probs[pattern as usize] = p.max(0.0);
    }
    probs
}

fn sample_pattern(probs: &[f64; 16], rng: &mut TrialRng) -> u8 {
    let total: f64 = probs.iter().sum();
    let mut u = rng.uniform() * total;
    for (pattern, &p) in probs.iter().enumerate() {
        u -= p;
        if u <= 0.0 {
            return pattern as u8;
        }
    }
    15
}

fn exactly_one(pattern: u8, lo_bit: u8) -> bool {
    (pattern >> lo_bit & 0x3).count_ones() == 1
}

// --- memory loading --------------------------------------------------------

/// One loading trial; returns (heralded, stored state is the flipped one).
fn loading_trial(
    basis: Basis,
    mu: f64,
    ch: &ButterflyChannel,
    half_width: f64,
    rng: &mut TrialRng,
) -> (bool, bool) {
    let theta = if half_width > 0.0 {
        rng.range(-half_width, half_width)
    } else {
        0.0
    };
    // User field amplitudes after loss, per polarisation.
    let amp = (ch.eta_a * mu).sqrt();
    let (a_h, a_v) = match basis {
        Basis::Z => (amp * theta.cos(), amp * theta.sin()),
        Basis::X => {
            let s = amp / 2f64.sqrt();
            (
                s * (theta.sin() + theta.cos()),
                s * (theta.sin() - theta.cos()),
            )
        }
    };
    // Entangled-pair branch: the heralding photon and the memory share it.
    // For a Z-encoded (H) pulse the branches are H/V; for an X-encoded (D)
    // pulse they are D/A. `wrong` marks the branch whose memory state is
    // the flipped one for the sent state.
    let wrong_branch = rng.bernoulli(0.5);
    let photon_survives = rng.bernoulli(ch.eta_b);
    let inv = 0.5f64.sqrt();
    let photon_coeffs: Option<[f64; N_MODES]> = photon_survives.then(|| match (basis, wrong_branch)
    {
        // Z: wrong branch stores H, photon is H-polarised.
        (Basis::Z, true) => [inv, -inv, 0.0, 0.0],
        (Basis::Z, false) => [0.0, 0.0, inv, -inv],
        // X: wrong branch stores D, photon is D = (H+V)/sqrt2.
        (Basis::X, true) => [0.5, -0.5, 0.5, -0.5],
        (Basis::X, false) => [0.5, -0.5, -0.5, 0.5],
    });
    let disp = [a_h * inv, a_h * inv, a_v * inv, a_v * inv];

    let probs = click_pattern_distribution(&disp, photon_coeffs.as_ref());
    let mut pattern = sample_pattern(&probs, rng);
    for bit in 0..4 {
        if rng.bernoulli(ch.p_dc) {
            pattern |= 1 << bit;
        }
    }
    let success = exactly_one(pattern, 0) && exactly_one(pattern, 2);
    if !success {
        return (false, false);
    }
    // A successful coincidence teleports the state up to a phase flip that
    // depends on the Bell outcome (same-side vs different-side clicks).
    // The flip swaps D and A, so it toggles the error label in the X basis
    // and leaves the Z basis alone.
    let wrong = match basis {
        Basis::Z => wrong_branch,
        Basis::X => {
            let same_side = pattern == 0b0101 || pattern == 0b1010;
            wrong_branch ^ !same_side
        }
    };
    (true, wrong)
}

/// Empirical loading statistics; returns (p_load, e_load) estimates.
pub fn simulate_loading(
    basis: Basis,
    mu: f64,
    ch: &ButterflyChannel,
    half_width: f64,
    trials: u64,
    seed: u64,
) -> (Estimate, Estimate) {
    let kind = match basis {
        Basis::Z => StreamKind::LoadingZ,
        Basis::X => StreamKind::LoadingX,
    };
    let (successes, wrong) = exec::indexed_fold(
        trials,
        (0u64, 0u64),
        |t| {
            let mut rng = TrialRng::new(seed, kind, t);
            let (ok, wrong) = loading_trial(basis, mu, ch, half_width, &mut rng);
            (u64::from(ok), u64::from(ok && wrong))
        },
        |a, b| (a.0 + b.0, a.1 + b.1),
    );
    let p = Estimate::from_fraction(successes as f64, trials as f64);
    let e = Estimate::from_fraction(wrong as f64, successes.max(1) as f64);
    (p, e)
}

// --- protocol clock ---------------------------------------------------------

/// Empirical waiting-time statistics of the two-sided loading race.
#[derive(Debug, Clone)]
pub struct ClockEstimates {
    /// Mean rounds until both sides have loaded.
    pub rounds_to_load: Estimate,
    /// Mean decay factor exp(-T D / T1) of the earlier memory.
    pub decay_ratio: Estimate,
    /// Average decoherence flip probability of the earlier-loaded memory.
    pub decoherence_flip: Estimate,
}

pub fn simulate_protocol_clock(
    p_load: f64,
    t_round: f64,
    t1: f64,
    t2: f64,
    model: Decoherence,
    trials: u64,
    seed: u64,
) -> ClockEstimates {
    let factor = match model {
        // Dephasing flip probability carries the (1 - exp)/2 form; the
        // depolarising channel flips an eigenstate 2/3 as often.
        Decoherence::Dephasing => 0.5,
        Decoherence::Depolarising => 0.5 * 2.0 / 3.0,
    };
    let acc = exec::indexed_fold(
        trials,
        [0.0f64; 6],
        |t| {
            let mut rng = TrialRng::new(seed, StreamKind::ProtocolClock, t);
            let g1 = rng.geometric(p_load);
            let g2 = rng.geometric(p_load);
            let n_l = g1.max(g2) as f64;
            let wait = g1.abs_diff(g2) as f64;
            let decay = (-wait * t_round / t1).exp();
            // Flip probability of the earlier memory after its wait.
            let flip = factor * (1.0 - (-wait * t_round / t2).exp());
            [n_l, n_l * n_l, decay, decay * decay, flip, flip * flip]
        },
        |a, b| {
            let mut out = [0.0; 6];
            for i in 0..6 {
                out[i] = a[i] + b[i];
            }
            out
        },
    );
    let n = trials as f64;
    ClockEstimates {
        rounds_to_load: Estimate::from_moments(acc[0], acc[1], n),
        decay_ratio: Estimate::from_moments(acc[2], acc[3], n),
        decoherence_flip: Estimate::from_moments(acc[4], acc[5], n),
    }
}

// --- no-memory MDI gains ----------------------------------------------------

#[derive(Clone, Copy)]
struct C64 {
    re: f64,
    im: f64,
}

impl C64 {
    fn new(re: f64, im: f64) -> Self {
        C64 { re, im }
    }
    fn add(self, o: C64) -> Self {
        C64::new(self.re + o.re, self.im + o.im)
    }
    fn sub(self, o: C64) -> Self {
        C64::new(self.re - o.re, self.im - o.im)
    }
    fn scale(self, s: f64) -> Self {
        C64::new(self.re * s, self.im * s)
    }
    fn norm_sq(self) -> f64 {
        self.re * self.re + self.im * self.im
    }
}

/// One no-memory MDI round. Returns (success, error) for the chosen basis.
#[allow(clippy::too_many_arguments)]
fn mdi_trial(
    basis: Basis,
    eta: f64,
    mu_a: f64,
    mu_b: f64,
    p_d: f64,
    e_mis: f64,
    rng: &mut TrialRng,
) -> (bool, bool) {
    // Uniform bits; misalignment flips each leg's state independently.
    let bit_a = rng.bernoulli(0.5);
    let bit_b = rng.bernoulli(0.5);
    let eff_a = bit_a ^ rng.bernoulli(e_mis);
    let eff_b = bit_b ^ rng.bernoulli(e_mis);
    // Phase-randomised coherent states: only the relative phase matters.
    let phi = rng.range(0.0, 2.0 * std::f64::consts::PI);
    let ra = (eta * mu_a).sqrt();
    let rb = (eta * mu_b).sqrt();
    let (bh, bv) = phase_split(basis, eff_b, C64::new(rb * phi.cos(), rb * phi.sin()));
    let (ah, av) = phase_split(basis, eff_a, C64::new(ra, 0.0));

    let inv = 0.5f64.sqrt();
    let modes = [
        ah.add(bh).scale(inv), // l_H
        ah.sub(bh).scale(inv), // r_H
        av.add(bv).scale(inv), // l_V
        av.sub(bv).scale(inv), // r_V
    ];
    let mut pattern = 0u8;
    for (i, m) in modes.iter().enumerate() {
        let clicks = rng.poisson(m.norm_sq()) > 0 || rng.bernoulli(p_d);
        if clicks {
            pattern |= 1 << i;
        }
    }
    let success = exactly_one(pattern, 0) && exactly_one(pattern, 2);
    if !success {
        return (false, false);
    }
    let error = match basis {
        // A successful coincidence heralds anti-correlated Z bits.
        Basis::Z => bit_a == bit_b,
        // Same-side coincidences herald correlated X bits, different-side
        // ones anti-correlated.
        Basis::X => {
            let same_side = pattern == 0b0101 || pattern == 0b1010;
            if same_side {
                bit_a != bit_b
            } else {
                bit_a == bit_b
            }
        }
    };
    (true, error)
}

fn phase_split(basis: Basis, bit: bool, amp: C64) -> (C64, C64) {
    let inv = 0.5f64.sqrt();
    match (basis, bit) {
        (Basis::Z, false) => (amp, C64::new(0.0, 0.0)),
        (Basis::Z, true) => (C64::new(0.0, 0.0), amp),
        (Basis::X, false) => (amp.scale(inv), amp.scale(inv)),
        (Basis::X, true) => (amp.scale(inv), amp.scale(-inv)),
    }
}

/// Empirical gain and joint error probability of the no-memory MDI link.
#[allow(clippy::too_many_arguments)]
pub fn simulate_mdi_gain(
    basis: Basis,
    eta: f64,
    mu_a: f64,
    mu_b: f64,
    p_d: f64,
    e_mis: f64,
    trials: u64,
    seed: u64,
) -> (Estimate, Estimate) {
    let (successes, errors) = exec::indexed_fold(
        trials,
        (0u64, 0u64),
        |t| {
            let mut rng = TrialRng::new(seed, StreamKind::MdiGain, t);
            let (ok, err) = mdi_trial(basis, eta, mu_a, mu_b, p_d, e_mis, &mut rng);
            (u64::from(ok), u64::from(err))
        },
        |a, b| (a.0 + b.0, a.1 + b.1),
    );
    (
        Estimate::from_fraction(successes as f64, trials as f64),
        Estimate::from_fraction(errors as f64, trials as f64),
    )
}

// --- planted-yield instances and estimator coverage -------------------------

/// Synthetic decoy-state instance with per-Fock yields chosen explicitly,
/// so the true pooled single-photon counts are known exactly.
#[derive(Debug, Clone)]
pub struct PlantedInstance {
    pub counts: ObservedCounts,
    pub true_m11: f64,
    pub true_e11: f64,
}

/// Builds a planted instance on a small Fock grid (all support inside the
/// estimator's truncation). With `sampled`, every per-Fock count is a
/// Poisson draw and every assignment a multinomial split, matching the
/// Bernoulli-sum model the concentration bounds assume.
pub fn planted_instance(
    intensities: &IntensitySet,
    n_block: f64,
    fock_max: usize,
    seed: u64,
    sampled: bool,
) -> Result<PlantedInstance> {
    let mut rng = TrialRng::new(seed, StreamKind::PlantedYields, 0);
    let grid = fock_max + 1;

    let pmf = |mu: f64| -> Vec<f64> {
        let mut v = Vec::with_capacity(grid);
        let mut p = (-mu).exp();
        v.push(p);
        for n in 1..grid {
            p *= mu / n as f64;
            v.push(p);
        }
        v
    };
    let all: Vec<(IntensityId, f64, Vec<f64>)> = IntensityId::ALL
        .iter()
        .map(|&id| {
            (
                id,
                intensities.probability(id),
                pmf(intensities.intensity(id)),
            )
        })
        .collect();
    // Per-Fock selection-weighted emission probabilities, X pool and full
    // pool for the single-photon slot.
    let p_n_x: Vec<f64> = (0..grid)
        .map(|n| {
            all.iter()
                .filter(|(id, ..)| !id.is_z_basis())
                .map(|(_, p, pmf)| p * pmf[n])
                .sum()
        })
        .collect();
    let p_1: f64 = all.iter().map(|(_, p, pmf)| p * pmf[1]).sum();

    // Planted yields and error fractions.
    let mut yields = vec![0.0; grid * grid];
    let mut errs = vec![0.0; grid * grid];
    for n in 0..grid {
        for m in 0..grid {
            yields[n * grid + m] = rng.range(0.02, 0.8);
            errs[n * grid + m] = rng.range(0.0, 0.5);
        }
    }
    let y11 = yields[grid + 1];
    let e11_frac = errs[grid + 1];

    let mut pair_m = [0.0f64; 9];
    let mut pair_e = [0.0f64; 9];
    let decoy_index = |a: IntensityId, b: IntensityId| -> Option<usize> {
        let pos = |id: IntensityId| IntensityId::DECOYS.iter().position(|&d| d == id);
        Some(pos(a)? * 3 + pos(b)?)
    };

    let mut true_m11 = n_block * p_1 * p_1 * y11;
    let mut true_e11 = true_m11 * e11_frac;
    if sampled {
        true_m11 = rng.poisson(true_m11) as f64;
        true_e11 = rng.binomial(true_m11 as u64, e11_frac) as f64;
    }
    // Assign pooled single-photon events to intensity pairs.
    {
        let mut weights = Vec::with_capacity(16);
        for (_, pa, pmfa) in &all {
            for (_, pb, pmfb) in &all {
                weights.push((pa * pmfa[1] / p_1) * (pb * pmfb[1] / p_1));
            }
        }
        let split = |total: f64, rng: &mut TrialRng| -> Vec<f64> {
            if sampled {
                rng.multinomial(total as u64, &weights)
                    .into_iter()
                    .map(|v| v as f64)
                    .collect()
            } else {
                weights.iter().map(|w| w * total).collect()
            }
        };
        let err_split = split(true_e11, &mut rng);
        let ok_split = split(true_m11 - true_e11, &mut rng);
        for (i, (ida, _, _)) in all.iter().enumerate() {
            for (j, (idb, _, _)) in all.iter().enumerate() {
                if let Some(k) = decoy_index(*ida, *idb) {
                    pair_m[k] += err_split[i * 4 + j] + ok_split[i * 4 + j];
                    pair_e[k] += err_split[i * 4 + j];
                }
            }
        }
    }
    // Other Fock cells: X-basis emissions only.
    let decoy_stats: Vec<(f64, &Vec<f64>)> = IntensityId::DECOYS
        .iter()
        .map(|&d| {
            let (_, p, pmf) = all.iter().find(|(id, ..)| *id == d).unwrap();
            (*p, pmf)
        })
        .collect();
    for n in 0..grid {
        for m in 0..grid {
            if (n, m) == (1, 1) {
                continue;
            }
            let expect = n_block * p_n_x[n] * p_n_x[m] * yields[n * grid + m];
            let (mut m_nm, mut e_nm) = (expect, expect * errs[n * grid + m]);
            if sampled {
                m_nm = rng.poisson(m_nm) as f64;
                e_nm = rng.binomial(m_nm as u64, errs[n * grid + m]) as f64;
            }
            if m_nm == 0.0 {
                continue;
            }
            let mut weights = Vec::with_capacity(9);
            for (pa, pmfa) in &decoy_stats {
                for (pb, pmfb) in &decoy_stats {
                    weights.push((pa * pmfa[n] / p_n_x[n]) * (pb * pmfb[m] / p_n_x[m]));
                }
            }
            if sampled {
                let errs_split = rng.multinomial(e_nm as u64, &weights);
                let ok_split = rng.multinomial((m_nm - e_nm) as u64, &weights);
                for k in 0..9 {
                    pair_m[k] += (errs_split[k] + ok_split[k]) as f64;
                    pair_e[k] += errs_split[k] as f64;
                }
            } else {
                for k in 0..9 {
                    pair_m[k] += weights[k] * m_nm;
                    pair_e[k] += weights[k] * e_nm;
                }
            }
        }
    }

    let mut counts = ObservedCounts::new(n_block)?;
    counts.insert(IntensityId::Z, IntensityId::Z, CountPair { m: 0.0, e: 0.0 })?;
    for &a in &IntensityId::DECOYS {
        for &b in &IntensityId::DECOYS {
            let k = decoy_index(a, b).unwrap();
            counts.insert(
                a,
                b,
                CountPair {
                    m: pair_m[k],
                    e: pair_e[k],
                },
            )?;
        }
    }
    Ok(PlantedInstance {
        counts,
        true_m11,
        true_e11,
    })
}

/// Fraction of planted instances on which the decoy bounds are sound
/// (`M11_L <= true M11` and `E11_U >= true E11` simultaneously).
pub fn simulate_estimator_coverage(
    intensities: &IntensitySet,
    n_block: f64,
    epsilon: f64,
    n_cut: usize,
    repetitions: u64,
    seed: u64,
    sampled: bool,
) -> Result<f64> {
    let mut sound = 0u64;
    for rep in 0..repetitions {
        let inst = planted_instance(intensities, n_block, 3, seed ^ (rep + 1), sampled)?;
        let m11 = finite_key::decoy_lp_m11(&inst.counts, intensities, epsilon, n_cut)?;
        let e11 = finite_key::decoy_lp_e11(&inst.counts, intensities, epsilon, n_cut)?;
        if m11.value <= inst.true_m11 + 1e-6 && e11.value >= inst.true_e11 - 1e-6 {
            sound += 1;
        }
    }
    Ok(sound as f64 / repetitions as f64)
}


/// Named oracle scenarios exposed by the command line and the acceptance
/// suite.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scenario {
    LoadingZ,
    LoadingX,
    NlAndEta,
    DephasingAvg,
    MdiGain,
    EstimatorCoverage,
}

impl Scenario {
    pub const ALL: [Scenario; 6] = [
        Scenario::LoadingZ,
        Scenario::LoadingX,
        Scenario::NlAndEta,
        Scenario::DephasingAvg,
        Scenario::MdiGain,
        Scenario::EstimatorCoverage,
    ];

    pub fn from_label(label: &str) -> Result<Self> {
        match label {
            "loading_z" => Ok(Scenario::LoadingZ),
            "loading_x" => Ok(Scenario::LoadingX),
            "nl_and_eta" => Ok(Scenario::NlAndEta),
            "dephasing_avg" => Ok(Scenario::DephasingAvg),
            "mdi_gain" => Ok(Scenario::MdiGain),
            "estimator_coverage" => Ok(Scenario::EstimatorCoverage),
            other => Err(crate::Error::InvalidInput(format!(
                "unknown oracle scenario `{other}`"
            ))),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Scenario::LoadingZ => "loading_z",
            Scenario::LoadingX => "loading_x",
            Scenario::NlAndEta => "nl_and_eta",
            Scenario::DephasingAvg => "dephasing_avg",
            Scenario::MdiGain => "mdi_gain",
            Scenario::EstimatorCoverage => "estimator_coverage",
        }
    }
}

// Five-point operating grid for the loading comparisons: distances paired
// with pulse intensities, reference system parameters, warm-vapour memory.
const LOADING_GRID: [(f64, f64); 5] = [
    (0.0, 0.5),
    (50.0, 0.1),
    (100.0, 0.5),
    (150.0, 0.02),
    (250.0, 0.3),
];

/// Loading-statistics comparisons over the operating grid.
pub fn loading_comparisons(basis: Basis, trials: u64, seed: u64) -> Vec<Comparison> {
    use crate::loading::{loading_stats_x_channel, loading_stats_z_channel};
    let mem = crate::system::MemoryKind::WarmVapour.params();
    let mut out = Vec::new();
    for (i, &(l_km, mu)) in LOADING_GRID.iter().enumerate() {
        let sys = crate::system::SystemParams::default().with_distance(l_km);
        let ch = ButterflyChannel::for_side_measurement(&sys, &mem);
        let hw = sys.misalignment_half_width();
        let analytic = match basis {
            Basis::Z => loading_stats_z_channel(mu, &ch, hw),
            Basis::X => loading_stats_x_channel(mu, &ch, hw),
        };
        let (p, e) = simulate_loading(basis, mu, &ch, hw, trials, seed ^ i as u64);
        let tag = match basis {
            Basis::Z => "z",
            Basis::X => "x",
        };
        out.push(Comparison {
            label: format!("p_load_{tag}(L={l_km}, mu={mu})"),
            analytic: analytic.p_load,
            estimate: p,
        });
        out.push(Comparison {
            label: format!("e_load_{tag}(L={l_km}, mu={mu})"),
            analytic: analytic.e_load.unwrap_or(0.0),
            estimate: e,
        });
    }
    out
}

/// Loading-race comparisons: mean rounds to load, decay ratio of the
/// earlier memory, and the average decoherence flip for both models.
pub fn clock_comparisons(trials: u64, seed: u64) -> Vec<Comparison> {
    let grid: [(f64, f64, f64); 5] = [
        (0.9, 0.5, 0.4),
        (0.5, 0.3, 0.5),
        (0.1, 0.05, 0.08),
        (0.01, 0.004, 0.006),
        (0.001, 0.0005, 0.0008),
    ];
    let mut out = Vec::new();
    for (i, &(p, t_over_t1, t_over_t2)) in grid.iter().enumerate() {
        let est = simulate_protocol_clock(
            p,
            1.0,
            1.0 / t_over_t1,
            1.0 / t_over_t2,
            Decoherence::Dephasing,
            trials,
            seed ^ i as u64,
        );
        out.push(Comparison {
            label: format!("rounds_to_load(p={p})"),
            analytic: crate::rates::rounds_to_load_both(p),
            estimate: est.rounds_to_load,
        });
        out.push(Comparison {
            label: format!("decay_ratio(p={p}, T/T1={t_over_t1})"),
            analytic: crate::rates::earlier_memory_decay_ratio(p, 1.0, 1.0 / t_over_t1),
            estimate: est.decay_ratio,
        });
    }
    out
}

/// Decoherence-average comparisons for dephasing and depolarising races.
pub fn decoherence_comparisons(trials: u64, seed: u64) -> Vec<Comparison> {
    let grid: [(f64, f64); 5] = [
        (0.9, 0.4),
        (0.5, 0.5),
        (0.1, 0.08),
        (0.01, 0.006),
        (0.001, 0.0008),
    ];
    let mut out = Vec::new();
    for (i, &(p, t_over_t2)) in grid.iter().enumerate() {
        let flip = crate::rates::avg_dephasing_flip(p, 1.0, 1.0 / t_over_t2);
        let est = simulate_protocol_clock(
            p,
            1.0,
            1e12,
            1.0 / t_over_t2,
            Decoherence::Dephasing,
            trials,
            seed ^ i as u64,
        );
        out.push(Comparison {
            label: format!("dephasing_flip(p={p}, T/T2={t_over_t2})"),
            analytic: flip,
            estimate: est.decoherence_flip,
        });
        let est = simulate_protocol_clock(
            p,
            1.0,
            1e12,
            1.0 / t_over_t2,
            Decoherence::Depolarising,
            trials,
            seed ^ (i as u64 + 100),
        );
        out.push(Comparison {
            label: format!("depolarising_flip(p={p}, T/T2={t_over_t2})"),
            analytic: 2.0 / 3.0 * flip,
            estimate: est.decoherence_flip,
        });
    }
    out
}

/// No-memory MDI gain/error comparisons against the closed forms, X basis
/// per the operating grid plus one Z-basis point.
pub fn mdi_gain_comparisons(trials: u64, seed: u64) -> Vec<Comparison> {
    let sys = crate::system::SystemParams::default();
    let grid: [(f64, f64, f64); 5] = [
        (25.0, 0.5, 0.5),
        (50.0, 0.3, 0.12),
        (100.0, 0.1, 0.02),
        (75.0, 0.2, 0.02),
        (40.0, 0.1, 0.1),
    ];
    let mut out = Vec::new();
    for (i, &(l_km, a, b)) in grid.iter().enumerate() {
        let sys = sys.with_distance(l_km);
        let eta = sys.channel_transmittance() * sys.eta_d;
        let p_d = sys.dark_count_prob_clocked();
        let e_d = crate::rates::mdi_pair_misalignment(sys.e_mis);
        let (gain, err) = crate::rates::mdi_x_gain_and_error(eta, a, b, p_d, e_d);
        let (g, e) = simulate_mdi_gain(Basis::X, eta, a, b, p_d, sys.e_mis, trials, seed ^ i as u64);
        out.push(Comparison {
            label: format!("mdi_x_gain(L={l_km}, a={a}, b={b})"),
            analytic: gain,
            estimate: g,
        });
        out.push(Comparison {
            label: format!("mdi_x_error(L={l_km}, a={a}, b={b})"),
            analytic: err,
            estimate: e,
        });
    }
    // One Z-basis cross-check.
    let sys = sys.with_distance(50.0);
    let eta = sys.channel_transmittance() * sys.eta_d;
    let p_d = sys.dark_count_prob_clocked();
    let e_d = crate::rates::mdi_pair_misalignment(sys.e_mis);
    let (gain, err) = crate::rates::mdi_z_gain_and_error(eta, 0.4, 0.4, p_d, e_d);
    let (g, e) = simulate_mdi_gain(Basis::Z, eta, 0.4, 0.4, p_d, sys.e_mis, trials, seed ^ 71);
    out.push(Comparison {
        label: "mdi_z_gain(L=50, a=b=0.4)".into(),
        analytic: gain,
        estimate: g,
    });
    out.push(Comparison {
        label: "mdi_z_error(L=50, a=b=0.4)".into(),
        analytic: err,
        estimate: e,
    });
    out
}
