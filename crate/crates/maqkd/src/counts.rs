//! Nominal finite-run observables: expected measurement counts `M^{ab}` and
//! error counts `E^{ab}` per same-basis intensity pair, for both systems.
//!
//! Counts are kept real-valued (the estimators consume expected values); an
//! optional Poisson sampling step turns them into integer draws for
//! stress-testing the estimation chain. Cross-basis pairs are sifted out
//! and never emitted.

use crate::loading;
use crate::rates;
use crate::rng::TrialRng;
use crate::system::{IntensityId, IntensitySet, MemoryParams, SystemParams};
use crate::{Error, Result};
use std::collections::BTreeMap;

/// Measurement and error counts for one intensity pair.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CountPair {
    pub m: f64,
    pub e: f64,
}

/// Per-pair expected (or sampled) counts for one protocol run of `n_block`
/// rounds. Only same-basis pairs are present: `(z,z)` and the nine decoy
/// pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservedCounts {
    pub n_block: f64,
    /// Whether the counts are integer samples rather than expected values;
    /// sampled counts make the estimator keep fluctuation allowances on
    /// its emission-capacity constraints.
    pub sampled: bool,
    entries: BTreeMap<(IntensityId, IntensityId), CountPair>,
}

impl ObservedCounts {
    pub fn new(n_block: f64) -> Result<Self> {
        if n_block.is_nan() || n_block <= 0.0 {
            return Err(Error::InvalidInput("block size must be positive".into()));
        }
        Ok(ObservedCounts {
            n_block,
            sampled: false,
            entries: BTreeMap::new(),
        })
    }

    pub fn insert(&mut self, a: IntensityId, b: IntensityId, pair: CountPair) -> Result<()> {
        if a.is_z_basis() != b.is_z_basis() {
            return Err(Error::InvalidInput(
                "cross-basis pairs are sifted out and cannot be stored".into(),
            ));
        }
        let sane =
            pair.m >= 0.0 && pair.e >= 0.0 && pair.e <= pair.m + 1e-9 && pair.m <= self.n_block;
        if !sane {
            return Err(Error::InvalidInput(format!(
                "count pair out of range for ({}, {}): M={}, E={}",
                a.label(),
                b.label(),
                pair.m,
                pair.e
            )));
        }
        self.entries.insert((a, b), pair);
        Ok(())
    }

    pub fn get(&self, a: IntensityId, b: IntensityId) -> Option<CountPair> {
        self.entries.get(&(a, b)).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&(IntensityId, IntensityId), &CountPair)> {
        self.entries.iter()
    }

    /// The nine X-basis decoy pairs in a fixed order; error if any is
    /// missing.
    pub fn decoy_pairs(&self) -> Result<Vec<((IntensityId, IntensityId), CountPair)>> {
        let mut out = Vec::with_capacity(9);
        for &a in &IntensityId::DECOYS {
            for &b in &IntensityId::DECOYS {
                let pair = self.get(a, b).ok_or_else(|| {
                    Error::InvalidInput(format!(
                        "missing decoy pair ({}, {})",
                        a.label(),
                        b.label()
                    ))
                })?;
                out.push(((a, b), pair));
            }
        }
        Ok(out)
    }

    /// Serialise as CSV: a block-size comment, a header, one row per pair.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("# n_block = {}\n", fmt_float(self.n_block)));
        if self.sampled {
            out.push_str("# sampled = true\n");
        }
        out.push_str("a,b,m,e\n");
        for ((a, b), pair) in &self.entries {
            out.push_str(&format!(
                "{},{},{},{}\n",
                a.label(),
                b.label(),
                fmt_float(pair.m),
                fmt_float(pair.e)
            ));
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut n_block = None;
        let mut sampled = false;
        let mut entries = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(comment) = line.strip_prefix('#') {
                if let Some((key, value)) = comment.split_once('=') {
                    match key.trim() {
                        "n_block" => {
                            n_block = Some(value.trim().parse::<f64>().map_err(|e| {
                                Error::Parse(format!("line {}: bad n_block: {e}", lineno + 1))
                            })?);
                        }
                        "sampled" => sampled = value.trim() == "true",
                        _ => {}
                    }
                }
                continue;
            }
            if line == "a,b,m,e" {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 4 {
                return Err(Error::Parse(format!(
                    "line {}: expected 4 fields, got {}",
                    lineno + 1,
                    fields.len()
                )));
            }
            let a = IntensityId::from_label(fields[0])?;
            let b = IntensityId::from_label(fields[1])?;
            let m: f64 = fields[2]
                .parse()
                .map_err(|e| Error::Parse(format!("line {}: bad M: {e}", lineno + 1)))?;
            let e: f64 = fields[3]
                .parse()
                .map_err(|e| Error::Parse(format!("line {}: bad E: {e}", lineno + 1)))?;
            entries.push((a, b, CountPair { m, e }));
        }
        let n_block = n_block.ok_or_else(|| {
            Error::Parse("counts CSV must carry a `# n_block = <rounds>` comment".into())
        })?;
        let mut counts = ObservedCounts::new(n_block)?;
        counts.sampled = sampled;
        for (a, b, pair) in entries {
            counts.insert(a, b, pair)?;
        }
        Ok(counts)
    }

    /// Integer Poisson draws around the expected counts, with errors split
    /// binomially; used to stress-test the estimators.
    pub fn sample_poisson(&self, rng: &mut TrialRng) -> ObservedCounts {
        let mut out = ObservedCounts {
            n_block: self.n_block,
            sampled: true,
            entries: BTreeMap::new(),
        };
        for (&key, pair) in &self.entries {
            let m = rng.poisson(pair.m) as f64;
            let frac = if pair.m > 0.0 { pair.e / pair.m } else { 0.0 };
            let e = rng.binomial(m as u64, frac) as f64;
            out.entries.insert(key, CountPair { m, e });
        }
        out
    }
}

fn fmt_float(v: f64) -> String {
    // Rust's shortest round-trip formatting parses back to the same bits.
    format!("{v}")
}

/// Loading statistics per intensity for the memory-assisted system.
fn ma_loading_table(
    sys: &SystemParams,
    memory: &MemoryParams,
    intensities: &IntensitySet,
) -> Vec<(IntensityId, loading::LoadingStats)> {
    IntensityId::ALL
        .iter()
        .map(|&id| {
            let mu = intensities.intensity(id);
            let stats = if id.is_z_basis() {
                loading::loading_stats_z(mu, sys, memory)
            } else {
                loading::loading_stats_x(mu, sys, memory)
            };
            (id, stats)
        })
        .collect()
}

/// Expected counts for the memory-assisted system: the total gain is driven
/// by the selection-averaged loading probability, and each same-basis pair
/// receives the fraction proportional to how likely its intensities are to
/// have caused the two loadings.
pub fn ma_expected_counts(
    sys: &SystemParams,
    memory: &MemoryParams,
    intensities: &IntensitySet,
    n_block: f64,
) -> Result<ObservedCounts> {
    intensities.validate()?;
    let table = ma_loading_table(sys, memory, intensities);
    let p_avg: f64 = table
        .iter()
        .map(|(id, s)| intensities.probability(*id) * s.p_load)
        .sum();
    if p_avg <= 0.0 {
        return Err(Error::InvalidInput(
            "average loading probability vanished; no counts to simulate".into(),
        ));
    }
    let chain = rates::memory_chain(p_avg, sys, memory)
        .ok_or_else(|| Error::InvalidInput("memory chain undefined".into()))?;
    let q_tot = chain.q_total;

    let mut counts = ObservedCounts::new(n_block)?;
    let stats_of = |id: IntensityId| table.iter().find(|(i, _)| *i == id).unwrap().1;

    for &a in IntensityId::ALL.iter() {
        for &b in IntensityId::ALL.iter() {
            if a.is_z_basis() != b.is_z_basis() {
                continue; // sifted out
            }
            let (sa, sb) = (stats_of(a), stats_of(b));
            let weight = intensities.probability(a)
                * intensities.probability(b)
                * sa.p_load
                * sb.p_load
                / (p_avg * p_avg);
            let m = n_block * q_tot * weight;
            let (ea, eb) = match (m > 0.0, sa.e_load, sb.e_load) {
                (true, Some(ea), Some(eb)) => (ea, eb),
                // Vanishing loading probability on either side: no counts.
                _ => {
                    counts.insert(a, b, CountPair { m: 0.0, e: 0.0 })?;
                    continue;
                }
            };
            let e_rate = if a.is_z_basis() {
                let e_qm = rates::memory_z_error(memory, ea, chain.decoherence_error);
                rates::e11_mdi(loading::Basis::Z, chain.eta_m, chain.eta_m_prime, e_qm, chain.p_dc)
            } else {
                let e_qm = rates::pair_misalignment(ea, eb, chain.decoherence_error);
                rates::e11_mdi(loading::Basis::X, chain.eta_m, chain.eta_m_prime, e_qm, chain.p_dc)
            }
            .ok_or_else(|| Error::Numerical("central measurement yield vanished".into()))?;
            counts.insert(
                a,
                b,
                CountPair {
                    m,
                    e: e_rate * m,
                },
            )?;
        }
    }
    Ok(counts)
}

/// Expected counts for the no-memory MDI reference.
pub fn mdi_expected_counts(
    sys: &SystemParams,
    intensities: &IntensitySet,
    n_block: f64,
) -> Result<ObservedCounts> {
    intensities.validate()?;
    let p_d = sys.dark_count_prob_clocked();
    let eta = sys.channel_transmittance() * sys.eta_d;
    let e_d = rates::mdi_pair_misalignment(sys.e_mis);
    let mut counts = ObservedCounts::new(n_block)?;
    for &a in IntensityId::ALL.iter() {
        for &b in IntensityId::ALL.iter() {
            if a.is_z_basis() != b.is_z_basis() {
                continue;
            }
            let (mu_a, mu_b) = (intensities.intensity(a), intensities.intensity(b));
            let (gain, e_joint) = if a.is_z_basis() {
                rates::mdi_z_gain_and_error(eta, mu_a, mu_b, p_d, e_d)
            } else {
                rates::mdi_x_gain_and_error(eta, mu_a, mu_b, p_d, e_d)
            };
            let scale = n_block * intensities.probability(a) * intensities.probability(b);
            counts.insert(
                a,
                b,
                CountPair {
                    m: scale * gain,
                    e: (scale * e_joint).max(0.0),
                },
            )?;
        }
    }
    Ok(counts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::StreamKind;
    use crate::system::MemoryKind;

    fn wv_setup(l: f64) -> (SystemParams, MemoryParams, IntensitySet) {
        (
            SystemParams::default().with_distance(l),
            MemoryKind::WarmVapour.params(),
            IntensitySet::default(),
        )
    }

    #[test]
    fn ma_fractions_reconstruct_total_gain() {
        let (sys, mem, intens) = wv_setup(120.0);
        let n = 1e10;
        let counts = ma_expected_counts(&sys, &mem, &intens, n).unwrap();
        // Rebuild Q_tot from all pairs including the sifted cross-basis
        // fraction: sum over same-basis pairs of the fraction formula must
        // equal Q_tot times the same-basis selection weight.
        let table = ma_loading_table(&sys, &mem, &intens);
        let p_avg: f64 = table
            .iter()
            .map(|(id, s)| intens.probability(*id) * s.p_load)
            .sum();
        let q_tot = rates::memory_chain(p_avg, &sys, &mem).unwrap().q_total;
        let same_basis_weight: f64 = table
            .iter()
            .flat_map(|(a, sa)| {
                table.iter().filter(move |(b, _)| a.is_z_basis() == b.is_z_basis()).map(
                    move |(b, sb)| {
                        intens.probability(*a) * intens.probability(*b) * sa.p_load * sb.p_load
                            / (p_avg * p_avg)
                    },
                )
            })
            .sum();
        let total: f64 = counts.iter().map(|(_, p)| p.m).sum();
        assert!(((total / n) - q_tot * same_basis_weight).abs() < 1e-12 * q_tot);
        // And the full sum over all 16 fractions is exactly 1.
        let all_weight: f64 = table
            .iter()
            .flat_map(|(a, sa)| {
                table.iter().map(move |(b, sb)| {
                    intens.probability(*a) * intens.probability(*b) * sa.p_load * sb.p_load
                        / (p_avg * p_avg)
                })
            })
            .sum();
        assert!((all_weight - 1.0).abs() < 1e-12);
    }

    #[test]
    fn vacuum_pairs_vanish_without_dark_counts() {
        let (mut sys, mem, mut intens) = wv_setup(80.0);
        sys.gamma_dc = 0.0;
        intens.v = 0.0;
        let counts = ma_expected_counts(&sys, &mem, &intens, 1e9).unwrap();
        for &a in IntensityId::DECOYS.iter() {
            let p = counts.get(a, IntensityId::V).unwrap();
            assert!(p.m.abs() < 1e-12, "M[{},v] = {}", a.label(), p.m);
            assert_eq!(p.e, 0.0);
        }
    }

    #[test]
    fn degenerate_signal_only_set_matches_asymptotic_chain() {
        let (sys, mem, _) = wv_setup(150.0);
        let intens = IntensitySet::new(0.5, 0.1, 0.02, 0.0, 1.0, 0.0, 0.0, 0.0).unwrap();
        let n = 1e8;
        let counts = ma_expected_counts(&sys, &mem, &intens, n).unwrap();
        let zz = counts.get(IntensityId::Z, IntensityId::Z).unwrap();
        let b = rates::ma_asymptotic(&sys, &mem, 0.5);
        assert!(((zz.m / n) - b.q_z).abs() < 1e-12 * b.q_z);
        assert!((zz.e / zz.m - b.e_z).abs() < 1e-12);
    }

    #[test]
    fn ma_counts_are_permutation_symmetric() {
        let (sys, mem, intens) = wv_setup(100.0);
        let counts = ma_expected_counts(&sys, &mem, &intens, 1e9).unwrap();
        for &a in IntensityId::ALL.iter() {
            for &b in IntensityId::ALL.iter() {
                if a.is_z_basis() != b.is_z_basis() {
                    continue;
                }
                let ab = counts.get(a, b).unwrap();
                let ba = counts.get(b, a).unwrap();
                assert!((ab.m - ba.m).abs() <= 1e-12 * ab.m.max(1e-300));
                assert!((ab.e - ba.e).abs() <= 1e-12 * ab.e.max(1e-300));
            }
        }
    }

    #[test]
    fn errors_bounded_by_half_when_error_rate_sane() {
        let (sys, mem, intens) = wv_setup(200.0);
        let counts = ma_expected_counts(&sys, &mem, &intens, 1e11).unwrap();
        for (_, p) in counts.iter() {
            assert!(p.e <= 0.5 * p.m + 1e-12);
        }
        let mdi = mdi_expected_counts(&sys, &intens, 1e11).unwrap();
        for (key, p) in mdi.iter() {
            assert!(p.e <= 0.5 * p.m + 1e-12, "{key:?}: {} vs {}", p.e, p.m);
        }
    }

    #[test]
    fn mdi_edge_cases() {
        let (mut sys, _, _) = wv_setup(50.0);
        sys.gamma_dc = 0.0;
        // Degenerate zero intensities: both-basis gains vanish.
        let eta = sys.channel_transmittance() * sys.eta_d;
        let (qz, _) = rates::mdi_z_gain_and_error(eta, 0.0, 0.0, 0.0, 0.01);
        let (qx, _) = rates::mdi_x_gain_and_error(eta, 0.0, 0.0, 0.0, 0.01);
        assert!(qz.abs() < 1e-15 && qx.abs() < 1e-15);
    }

    #[test]
    fn vacuum_suppression_is_weaker_for_memory_assisted() {
        // Diluting the signal with vacuum halves the memory-assisted gain
        // but quarters the no-memory gain.
        let (mut sys, mem, _) = wv_setup(100.0);
        sys.gamma_dc = 0.0;
        let nearly_one = 1.0 - 3e-9;
        let diluted = IntensitySet::new(0.5, 0.1, 0.02, 0.0, 0.5, 1e-9, 1e-9, 0.5 - 2e-9).unwrap();
        let pure = IntensitySet::new(0.5, 0.1, 0.02, 0.0, nearly_one, 1e-9, 1e-9, 1e-9).unwrap();
        let n = 1e9;
        let q_tot_of = |set: &IntensitySet| {
            let table = ma_loading_table(&sys, &mem, set);
            let p_avg: f64 = table
                .iter()
                .map(|(id, s)| set.probability(*id) * s.p_load)
                .sum();
            rates::memory_chain(p_avg, &sys, &mem).unwrap().q_total
        };
        let ma_ratio = q_tot_of(&diluted) / q_tot_of(&pure);
        let mdi_ratio = {
            let d = mdi_expected_counts(&sys, &diluted, n).unwrap();
            let p = mdi_expected_counts(&sys, &pure, n).unwrap();
            d.get(IntensityId::Z, IntensityId::Z).unwrap().m
                / p.get(IntensityId::Z, IntensityId::Z).unwrap().m
        };
        assert!(
            ma_ratio > mdi_ratio,
            "MA ratio {ma_ratio} should exceed MDI ratio {mdi_ratio}"
        );
        assert!((mdi_ratio - 0.25).abs() < 0.01);
    }

    #[test]
    fn csv_round_trip() {
        let (sys, mem, intens) = wv_setup(90.0);
        let counts = ma_expected_counts(&sys, &mem, &intens, 1e9).unwrap();
        let text = counts.to_csv();
        let back = ObservedCounts::from_csv(&text).unwrap();
        assert_eq!(counts, back);
        assert!(ObservedCounts::from_csv("a,b,m,e\nz,z,10,1\n").is_err()); // no n_block
    }

    #[test]
    fn cross_basis_pairs_rejected() {
        let mut counts = ObservedCounts::new(100.0).unwrap();
        assert!(counts
            .insert(IntensityId::Z, IntensityId::W1, CountPair { m: 1.0, e: 0.0 })
            .is_err());
    }

    #[test]
    fn poisson_sampling_preserves_scale() {
        let (sys, mem, intens) = wv_setup(60.0);
        let counts = ma_expected_counts(&sys, &mem, &intens, 1e8).unwrap();
        let mut rng = TrialRng::new(9, StreamKind::CountSampling, 0);
        let sampled = counts.sample_poisson(&mut rng);
        for (key, p) in counts.iter() {
            let s = sampled.get(key.0, key.1).unwrap();
            assert!(s.e <= s.m);
            if p.m > 1000.0 {
                let dev = (s.m - p.m).abs() / p.m.sqrt();
                assert!(dev < 6.0, "{key:?}: {} vs {}", s.m, p.m);
            }
        }
    }
}
