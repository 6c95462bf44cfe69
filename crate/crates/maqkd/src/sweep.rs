//! Distance sweeps: per-distance intensity optimization for one or both
//! systems, CSV output, and crossover detection.
//!
//! Points are grouped into fixed-size contiguous chunks; each chunk is a
//! sequential warm-start chain (the curves are continuous in distance, so
//! the previous optimum is an excellent start) and chunks run in parallel.
//! The chunking is independent of the worker count, so a sweep is
//! reproducible for a given seed on any machine.

use crate::exec;
use crate::optimizer::{self, OptimizationConfig, RateObjective};
use crate::system::{Decoherence, IntensitySet, MemoryParams, SystemParams};
use crate::{Error, KeyRateResult, Result};

/// Which system(s) a sweep evaluates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SystemChoice {
    MemoryAssisted,
    Mdi,
    Both,
}

impl SystemChoice {
    pub fn runs_ma(self) -> bool {
        matches!(self, SystemChoice::MemoryAssisted | SystemChoice::Both)
    }
    pub fn runs_mdi(self) -> bool {
        matches!(self, SystemChoice::Mdi | SystemChoice::Both)
    }
}

/// Key-rate regime.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RateMode {
    Asymptotic,
    Finite,
}

/// Finite-key block specification. A collection time maps to a per-system
/// block size through that system's repetition rate.
#[derive(Debug, Clone, Copy)]
pub enum BlockSpec {
    Rounds(f64),
    CollectionTime(f64),
}

/// Full description of one sweep run.
#[derive(Debug, Clone)]
pub struct RunSpec {
    pub system: SystemChoice,
    pub mode: RateMode,
    pub block: Option<BlockSpec>,
    pub memory: MemoryParams,
    pub memory_label: String,
    /// Channel/detector parameters; `l_km` is overridden per point and
    /// `r_s` is the no-memory reference clock.
    pub base: SystemParams,
    pub l_start_km: f64,
    pub l_stop_km: f64,
    pub l_step_km: f64,
    pub seed: u64,
    pub opt: OptimizationConfig,
    /// Refine detected crossovers on a 1 km grid.
    pub refine: bool,
}

impl RunSpec {
    pub fn validate(&self) -> Result<()> {
        self.base.validate()?;
        self.memory.validate()?;
        if self.l_step_km <= 0.0 {
            return Err(Error::InvalidInput("distance step must be positive".into()));
        }
        if self.l_start_km < 0.0 {
            return Err(Error::InvalidInput("distances must be nonnegative".into()));
        }
        if self.mode == RateMode::Finite && self.block.is_none() {
            return Err(Error::InvalidInput(
                "finite mode needs a block size or collection time".into(),
            ));
        }
        Ok(())
    }

    fn block_rounds(&self, r_s: f64) -> f64 {
        match self.block {
            Some(BlockSpec::Rounds(n)) => n,
            Some(BlockSpec::CollectionTime(t)) => r_s * t,
            None => f64::INFINITY,
        }
    }

    fn objective(&self, ma: bool) -> RateObjective {
        match (self.mode, ma) {
            (RateMode::Asymptotic, true) => RateObjective::MaAsymptotic,
            (RateMode::Asymptotic, false) => RateObjective::MdiAsymptotic,
            (RateMode::Finite, true) => RateObjective::MaFinite {
                n: self.block_rounds(self.memory.r_s),
            },
            (RateMode::Finite, false) => RateObjective::MdiFinite {
                n: self.block_rounds(self.base.r_s),
            },
        }
    }

    /// Grid of sweep distances (may be empty).
    pub fn distances(&self) -> Vec<f64> {
        let mut out = Vec::new();
        if self.l_stop_km + 1e-9 < self.l_start_km {
            return out;
        }
        let n = ((self.l_stop_km - self.l_start_km) / self.l_step_km + 1e-9).floor() as usize;
        for i in 0..=n {
            out.push(self.l_start_km + i as f64 * self.l_step_km);
        }
        out
    }
}

/// Optimized result for one system at one distance.
#[derive(Debug, Clone)]
pub struct SideResult {
    pub intensities: IntensitySet,
    pub rate: KeyRateResult,
}

/// One sweep row.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub l_km: f64,
    pub ma: Option<SideResult>,
    pub mdi: Option<SideResult>,
    pub note: Option<String>,
}

impl SweepRow {
    pub fn rate_ma(&self) -> f64 {
        self.ma.as_ref().map_or(f64::NAN, |s| s.rate.rate_bps)
    }
    pub fn rate_mdi(&self) -> f64 {
        self.mdi.as_ref().map_or(f64::NAN, |s| s.rate.rate_bps)
    }
}

/// Sweep output: grid rows (strictly increasing in distance), refined rows
/// around any crossover, the crossover estimate and the failure count.
#[derive(Debug, Clone)]
pub struct SweepOutput {
    pub rows: Vec<SweepRow>,
    pub crossover_km: Option<f64>,
    pub failures: usize,
}

const CHUNK: usize = 8;

fn evaluate_point(
    spec: &RunSpec,
    l_km: f64,
    warm_ma: Option<&IntensitySet>,
    warm_mdi: Option<&IntensitySet>,
    head: bool,
) -> SweepRow {
    let mut cfg = spec.opt;
    cfg.seed = spec.seed ^ (l_km * 1000.0).round() as u64;
    if !head {
        // Warm-started points converge from the neighbour's optimum.
        cfg.restarts = cfg.restarts.min(3);
    }
    let mut note = None;
    let mut side = |ma: bool, warm: Option<&IntensitySet>| -> Option<SideResult> {
        let wanted = if ma {
            spec.system.runs_ma()
        } else {
            spec.system.runs_mdi()
        };
        if !wanted {
            return None;
        }
        let sys = spec.base.with_distance(l_km);
        let memory = ma.then_some(&spec.memory);
        match optimizer::optimize_rate(spec.objective(ma), &sys, memory, &cfg, warm) {
            Ok(opt) => Some(SideResult {
                intensities: opt.intensities,
                rate: opt.result,
            }),
            Err(err) => {
                note = Some(format!(
                    "{} optimization failed: {err}",
                    if ma { "ma" } else { "mdi" }
                ));
                None
            }
        }
    };
    let ma = side(true, warm_ma);
    let mdi = side(false, warm_mdi);
    SweepRow {
        l_km,
        ma,
        mdi,
        note,
    }
}

fn sweep_chain(spec: &RunSpec, distances: &[f64]) -> Vec<SweepRow> {
    let mut rows = Vec::with_capacity(distances.len());
    let mut warm_ma: Option<IntensitySet> = None;
    let mut warm_mdi: Option<IntensitySet> = None;
    for (i, &l) in distances.iter().enumerate() {
        let row = evaluate_point(spec, l, warm_ma.as_ref(), warm_mdi.as_ref(), i == 0);
        warm_ma = row.ma.as_ref().map(|s| s.intensities);
        warm_mdi = row.mdi.as_ref().map(|s| s.intensities);
        rows.push(row);
    }
    rows
}

// Cold-started points occasionally miss the viable region the neighbouring
// optima sit in (the finite-key landscape has a wide zero plateau). A
// healing pass re-optimizes any point that fell visibly below a positive
// neighbour, warm-started from that neighbour's intensity set.
fn heal_rows(spec: &RunSpec, rows: &mut [SweepRow]) {
    for _ in 0..2 {
        let mut jobs: Vec<(usize, bool, IntensitySet)> = Vec::new();
        for ma in [true, false] {
            let wanted = if ma {
                spec.system.runs_ma()
            } else {
                spec.system.runs_mdi()
            };
            if !wanted {
                continue;
            }
            let rate = |row: &SweepRow| if ma { row.rate_ma() } else { row.rate_mdi() };
            let set = |row: &SweepRow| {
                let side = if ma { &row.ma } else { &row.mdi };
                side.as_ref().map(|s| s.intensities)
            };
            for i in 0..rows.len() {
                let here = rate(&rows[i]);
                let neighbours = [i.checked_sub(1), i.checked_add(1).filter(|&j| j < rows.len())];
                for n in neighbours.into_iter().flatten() {
                    // Suspicious dip: the neighbour does much better.
                    if rate(&rows[n]) > here.max(0.0) * 2.0 + 1e-12 {
                        if let Some(warm) = set(&rows[n]) {
                            jobs.push((i, ma, warm));
                        }
                    }
                }
            }
        }
        if jobs.is_empty() {
            break;
        }
        let healed: Vec<(usize, bool, Option<SideResult>)> = exec::map_collect(&jobs, |job| {
            let (i, ma, warm) = job;
            let row_l = rows[*i].l_km;
            let mut cfg = spec.opt;
            cfg.seed = spec.seed ^ (row_l * 1000.0).round() as u64 ^ 0x9e37;
            cfg.restarts = 2;
            let sys = spec.base.with_distance(row_l);
            let memory = ma.then_some(&spec.memory);
            match optimizer::optimize_rate(spec.objective(*ma), &sys, memory, &cfg, Some(warm)) {
                Ok(opt) => (
                    *i,
                    *ma,
                    Some(SideResult {
                        intensities: opt.intensities,
                        rate: opt.result,
                    }),
                ),
                Err(_) => (*i, *ma, None),
            }
        });
        let mut changed = false;
        for (i, ma, side) in healed {
            if let Some(side) = side {
                let slot = if ma { &mut rows[i].ma } else { &mut rows[i].mdi };
                let old = slot.as_ref().map_or(f64::NEG_INFINITY, |s| s.rate.rate_bps);
                if side.rate.rate_bps > old {
                    *slot = Some(side);
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
}

/// Runs the sweep described by `spec`.
pub fn run_sweep(spec: &RunSpec) -> Result<SweepOutput> {
    spec.validate()?;
    let distances = spec.distances();
    let chunks: Vec<Vec<f64>> = distances.chunks(CHUNK).map(|c| c.to_vec()).collect();
    let mut rows: Vec<SweepRow> = exec::map_collect(&chunks, |chunk| sweep_chain(spec, chunk))
        .into_iter()
        .flatten()
        .collect();
    heal_rows(spec, &mut rows);

    let mut crossover = if spec.system == SystemChoice::Both {
        find_crossover_in_rows(rows.iter().map(|r| (r.l_km, r.rate_ma(), r.rate_mdi())))
    } else {
        None
    };

    // 1 km refinement between the bracketing grid points.
    if spec.refine && spec.l_step_km > 1.0 {
        if let Some(coarse) = crossover {
            let lo = rows
                .iter()
                .rev()
                .find(|r| r.l_km <= coarse)
                .map_or(spec.l_start_km, |r| r.l_km);
            let fine_spec = RunSpec {
                l_start_km: lo,
                l_stop_km: (lo + spec.l_step_km).min(spec.l_stop_km),
                l_step_km: 1.0,
                refine: false,
                ..spec.clone()
            };
            let fine = run_sweep(&fine_spec)?;
            if let Some(better) = fine.crossover_km {
                crossover = Some(better);
            }
        }
    }

    let failures = rows.iter().filter(|r| r.note.is_some()).count();
    Ok(SweepOutput {
        rows,
        crossover_km: crossover,
        failures,
    })
}

/// Smallest distance where the memory-assisted rate first exceeds a still
/// positive no-memory rate, linearly interpolated between grid points.
///
/// A bracket in which the no-memory rate drops from positive to zero while
/// the memory-assisted rate stays positive also counts: the underlying
/// curve is continuous in distance, so it passed below the memory-assisted
/// rate while still positive inside that bracket.
pub fn find_crossover_in_rows<I>(rows: I) -> Option<f64>
where
    I: IntoIterator<Item = (f64, f64, f64)>,
{
    let mut prev: Option<(f64, f64, f64)> = None;
    for (l, ma, mdi) in rows {
        if ma.is_nan() || mdi.is_nan() {
            continue;
        }
        if ma > mdi && mdi > 0.0 {
            return Some(match prev {
                // Advantage from the very first usable point.
                None => l,
                Some((l0, ma0, mdi0)) => {
                    let d0 = ma0 - mdi0;
                    let d1 = ma - mdi;
                    if d0 >= 0.0 {
                        l0
                    } else {
                        l0 + (l - l0) * (-d0) / (d1 - d0)
                    }
                }
            });
        }
        if let Some((l0, ma0, mdi0)) = prev {
            // Death bracket: the reference died inside the interval with
            // the memory-assisted side alive on both ends.
            if mdi == 0.0 && ma > 0.0 && mdi0 > 0.0 && ma0 > 0.0 && ma0 <= mdi0 {
                let d0 = ma0 - mdi0;
                let d1 = ma;
                return Some(l0 + (l - l0) * (-d0) / (d1 - d0));
            }
        }
        prev = Some((l, ma, mdi));
    }
    None
}

/// Crossover from a sweep CSV produced by [`render_csv`].
pub fn find_crossover_csv(text: &str) -> Result<Option<f64>> {
    let mut header: Option<Vec<String>> = None;
    let mut triples = Vec::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if header.is_none() {
            header = Some(line.split(',').map(|s| s.trim().to_string()).collect());
            continue;
        }
        let cols = header.as_ref().unwrap();
        let idx = |name: &str| -> Result<usize> {
            cols.iter()
                .position(|c| c == name)
                .ok_or_else(|| Error::Parse(format!("missing column `{name}`")))
        };
        let fields: Vec<&str> = line.split(',').collect();
        let get = |i: usize| -> Result<f64> {
            let raw = fields
                .get(i)
                .ok_or_else(|| Error::Parse(format!("row too short: `{line}`")))?;
            if raw.trim().is_empty() {
                return Err(Error::Parse("sweep must contain both systems".into()));
            }
            raw.trim()
                .parse()
                .map_err(|e| Error::Parse(format!("bad number `{raw}`: {e}")))
        };
        triples.push((
            get(idx("l_km")?)?,
            get(idx("rate_ma_bps")?)?,
            get(idx("rate_mdi_bps")?)?,
        ));
    }
    if header.is_none() {
        return Err(Error::Parse("empty CSV".into()));
    }
    Ok(find_crossover_in_rows(triples))
}

pub const CSV_COLUMNS: &str = "l_km,rate_ma_bps,rate_mdi_bps,ma_z,ma_w1,ma_w2,ma_p_z,ma_p_w1,ma_p_w2,ma_p_v,ma_q_z,ma_e_z,ma_e_ph,ma_m11z_l,mdi_z,mdi_w1,mdi_w2,mdi_p_z,mdi_p_w1,mdi_p_w2,mdi_p_v,mdi_q_z,mdi_e_z,mdi_e_ph,mdi_m11z_l,note";

/// Renders the sweep as CSV with a comment block echoing the resolved
/// configuration, the fixed column set, and a trailing crossover comment.
pub fn render_csv(spec: &RunSpec, out: &SweepOutput) -> String {
    let mut s = String::new();
    s.push_str("# maqkd distance sweep\n");
    s.push_str(&format!(
        "# system = {}\n",
        match spec.system {
            SystemChoice::MemoryAssisted => "ma",
            SystemChoice::Mdi => "mdi",
            SystemChoice::Both => "both",
        }
    ));
    s.push_str(&format!("# memory = {}\n", spec.memory_label));
    s.push_str(&format!(
        "# decoherence = {}\n",
        match spec.memory.decoherence {
            Decoherence::Dephasing => "dephasing",
            Decoherence::Depolarising => "depolarising",
        }
    ));
    s.push_str(&format!(
        "# mode = {}\n",
        match spec.mode {
            RateMode::Asymptotic => "asymptotic",
            RateMode::Finite => "finite",
        }
    ));
    match spec.block {
        Some(BlockSpec::Rounds(n)) => s.push_str(&format!("# block_size = {n}\n")),
        Some(BlockSpec::CollectionTime(t)) => s.push_str(&format!("# collection_time_s = {t}\n")),
        None => {}
    }
    s.push_str(&format!(
        "# L_att_km = {}, eta_d = {}, gamma_dc_hz = {}, e_mis = {}, eta_c = {}, f_ec = {}\n",
        spec.base.l_att_km,
        spec.base.eta_d,
        spec.base.gamma_dc,
        spec.base.e_mis,
        spec.base.eta_c,
        spec.base.f_ec,
    ));
    s.push_str(&format!("# mdi_clock_hz = {}\n", spec.base.r_s));
    s.push_str(&format!(
        "# memory: eta_w_eta_r0 = {}, T1_s = {}, T2_s = {}, tau_int_s = {}, N_r = {}, R_s_hz = {}\n",
        spec.memory.eta_w_eta_r0,
        spec.memory.t1,
        spec.memory.t2,
        spec.memory.tau_int,
        spec.memory.n_r,
        spec.memory.r_s,
    ));
    s.push_str(&format!(
        "# epsilon = {}, n_cut = {}, seed = {}\n",
        spec.opt.epsilon, spec.opt.n_cut, spec.seed
    ));
    s.push_str(&format!(
        "# distance_km = {}:{}:{}\n",
        spec.l_start_km, spec.l_stop_km, spec.l_step_km
    ));
    s.push_str(CSV_COLUMNS);
    s.push('\n');
    for row in &out.rows {
        s.push_str(&render_row(row));
        s.push('\n');
    }
    match out.crossover_km {
        Some(km) => s.push_str(&format!("# crossover_ma_over_mdi_km = {km:.3}\n")),
        None => s.push_str("# crossover_ma_over_mdi_km = none\n"),
    }
    s
}

fn render_row(row: &SweepRow) -> String {
    let side = |s: &Option<SideResult>| -> String {
        match s {
            None => ",,,,,,,,,,,".to_string(),
            Some(side) => {
                let set = &side.intensities;
                let r = &side.rate;
                format!(
                    "{},{},{},{},{},{},{},{},{},{},{}",
                    set.z,
                    set.w1,
                    set.w2,
                    set.p_z,
                    set.p_w1,
                    set.p_w2,
                    set.p_v,
                    r.q_z,
                    r.e_z,
                    r.e_ph.map_or(String::new(), |v| v.to_string()),
                    r.m11z_l.map_or(String::new(), |v| v.to_string()),
                )
            }
        }
    };
    let rate = |v: f64| if v.is_nan() { String::new() } else { v.to_string() };
    format!(
        "{},{},{},{},{},{}",
        row.l_km,
        rate(row.rate_ma()),
        rate(row.rate_mdi()),
        side(&row.ma),
        side(&row.mdi),
        row.note.clone().unwrap_or_default()
    )
}
