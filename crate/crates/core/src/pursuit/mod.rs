//! Greedy shift-invariant pursuit.
//!
//! One engine realises four methods through two switches:
//!
//! | variant | selection constraint           | neighborhood                |
//! |---------|--------------------------------|-----------------------------|
//! | MP      | all atoms                      | the new instance only       |
//! | OMP     | all atoms                      | new + overlapping instances |
//! | E-MP    | atoms below their quota `Q`    | the new instance only       |
//! | E-OMP   | atoms below their quota `Q`    | new + overlapping instances |
//!
//! with `Q = floor(p·N/M)` for a window of `N` samples and `M` atoms. The
//! equiprobable variants stop when every atom has been selected exactly `Q`
//! times; MP and OMP run for the same `M·Q` iterations by default so all four
//! codes are equally sparse.

mod codefile;
mod correlation;
mod solve;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dictionary::Dictionary;
use crate::error::{Error, Result};

pub use codefile::{read_code_file, read_residual, write_code_file, write_residual, CodeFile, CODE_FORMAT_VERSION};
pub use correlation::{correlate_all, select, Candidate, CorrelationTable};
pub use solve::{gram, solve_neighborhood, update_residual, Column, Solution, RIDGE};

/// Selections with `|c| <= SELECTION_FLOOR · ‖x‖` are treated as "no atom".
pub const SELECTION_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Mp,
    Omp,
    Emp,
    Eomp,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Mp, Variant::Omp, Variant::Emp, Variant::Eomp];

    pub fn is_equiprobable(self) -> bool {
        matches!(self, Variant::Emp | Variant::Eomp)
    }

    pub fn is_orthogonal(self) -> bool {
        matches!(self, Variant::Omp | Variant::Eomp)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Mp => "mp",
            Variant::Omp => "omp",
            Variant::Emp => "emp",
            Variant::Eomp => "eomp",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "mp" => Ok(Variant::Mp),
            "omp" => Ok(Variant::Omp),
            "emp" => Ok(Variant::Emp),
            "eomp" => Ok(Variant::Eomp),
            other => Err(Error::InvalidArgument(format!("unknown variant {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PursuitConfig {
    pub variant: Variant,
    /// Average selection probability per atom and sample, in `(0, 1)`.
    pub p: f64,
    /// Explicit iteration count `I`. Defaults to `M·Q`.
    pub iteration_budget: Option<usize>,
}

impl PursuitConfig {
    pub fn new(variant: Variant, p: f64) -> Self {
        PursuitConfig {
            variant,
            p,
            iteration_budget: None,
        }
    }

    pub fn with_budget(mut self, iterations: usize) -> Self {
        self.iteration_budget = Some(iterations);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p > 0.0 && self.p < 1.0) {
            return Err(Error::InvalidArgument(format!("p must be in (0, 1), got {}", self.p)));
        }
        Ok(())
    }

    /// Per-atom quota `floor(p·N/M)`.
    pub fn quota(&self, window_len: usize, atoms: usize) -> usize {
        quota(self.p, window_len, atoms)
    }

    /// Total number of selections the pursuit may make on this window.
    pub fn iterations(&self, window_len: usize, atoms: usize) -> usize {
        let parity = atoms * self.quota(window_len, atoms);
        match (self.variant.is_equiprobable(), self.iteration_budget) {
            (true, Some(b)) => b.min(parity),
            (true, None) => parity,
            (false, Some(b)) => b,
            (false, None) => parity,
        }
    }
}

/// `floor(p·N/M)`, guarded against products like `0.05 · 640` landing a
/// hair below an integer.
pub fn quota(p: f64, window_len: usize, atoms: usize) -> usize {
    (p * window_len as f64 / atoms as f64 + 1e-9).floor() as usize
}

/// Per-atom selection counters for the equiprobable constraint.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuotaState {
    counts: Vec<usize>,
    quota: usize,
}

impl QuotaState {
    pub fn new(atoms: usize, quota: usize) -> Self {
        QuotaState {
            counts: vec![0; atoms],
            quota,
        }
    }

    pub fn admits(&self, atom: usize) -> bool {
        self.counts[atom] < self.quota
    }

    pub fn record(&mut self, atom: usize) {
        self.counts[atom] += 1;
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn quota(&self) -> usize {
        self.quota
    }

    pub fn is_full(&self) -> bool {
        self.counts.iter().all(|&c| c >= self.quota)
    }
}

/// One selection: atom `atom` placed at `offset` with amplitude `coefficient`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SparseEvent {
    pub atom: usize,
    pub offset: usize,
    pub coefficient: f64,
}

/// Events in selection order plus the final residual of one window.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseCode {
    pub events: Vec<SparseEvent>,
    pub residual: Vec<f64>,
    pub window_len: usize,
    pub dict_digest: String,
    pub variant: Variant,
    pub p: f64,
    /// Events whose local solve needed the ridge fallback.
    pub ridge_events: Vec<usize>,
}

impl SparseCode {
    pub fn counts(&self, atoms: usize) -> Vec<usize> {
        let mut counts = vec![0; atoms];
        for e in &self.events {
            if e.atom < atoms {
                counts[e.atom] += 1;
            }
        }
        counts
    }

    pub fn residual_energy(&self) -> f64 {
        self.residual.iter().map(|v| v * v).sum()
    }
}

/// Prior events whose support overlaps `new`, in event order.
///
/// For MP and E-MP this is always empty; the neighborhood `Ψ_k` is the new
/// instance plus the returned events.
pub fn neighborhood(events: &[SparseEvent], new: &SparseEvent, dict: &Dictionary, variant: Variant) -> Vec<usize> {
    if !variant.is_orthogonal() {
        return Vec::new();
    }
    let lo = new.offset;
    let hi = new.offset + dict.atom(new.atom).len();
    events
        .iter()
        .enumerate()
        .filter(|(_, e)| e.offset < hi && e.offset + dict.atom(e.atom).len() > lo)
        .map(|(i, _)| i)
        .collect()
}

/// Buckets event indices by offset for overlap queries.
#[derive(Debug, Clone)]
struct EventIndex {
    bucket: usize,
    buckets: Vec<Vec<usize>>,
}

impl EventIndex {
    fn new(window_len: usize, max_atom_len: usize) -> Self {
        let bucket = max_atom_len.max(1);
        EventIndex {
            bucket,
            buckets: vec![Vec::new(); window_len / bucket + 1],
        }
    }

    fn insert(&mut self, offset: usize, event: usize) {
        self.buckets[offset / self.bucket].push(event);
    }

    /// Events overlapping `lo..hi`, ascending.
    fn overlapping(&self, events: &[SparseEvent], dict: &Dictionary, lo: usize, hi: usize) -> Vec<usize> {
        let first = lo.saturating_sub(self.bucket - 1) / self.bucket;
        let last = ((hi - 1) / self.bucket).min(self.buckets.len() - 1);
        let mut out: Vec<usize> = self.buckets[first..=last]
            .iter()
            .flatten()
            .copied()
            .filter(|&i| {
                let e = &events[i];
                e.offset < hi && e.offset + dict.atom(e.atom).len() > lo
            })
            .collect();
        out.sort_unstable();
        out
    }
}

/// What one pursuit iteration did.
#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    /// Index of the new event.
    pub event: usize,
    /// Distinct `(atom, offset)` columns of `Ψ_k`; the new one is last.
    pub columns: Vec<(usize, usize)>,
    /// Event receiving each column's increment.
    pub targets: Vec<usize>,
    pub chi: Vec<f64>,
    pub ridge: bool,
    /// Residual samples changed by this step.
    pub region: (usize, usize),
}

/// Stateful pursuit over one window. [`pursue`] drives it to completion;
/// stepping by hand exposes per-iteration state for diagnostics.
#[derive(Debug, Clone)]
pub struct Pursuit<'d> {
    dict: &'d Dictionary,
    cfg: PursuitConfig,
    residual: Vec<f64>,
    table: CorrelationTable,
    quota: QuotaState,
    events: Vec<SparseEvent>,
    index: EventIndex,
    budget: usize,
    floor: f64,
    ridge_events: Vec<usize>,
}

impl<'d> Pursuit<'d> {
    pub fn new(dict: &'d Dictionary, x: &[f64], cfg: PursuitConfig) -> Result<Self> {
        cfg.validate()?;
        let n = x.len();
        let m = dict.len();
        let longest = dict.max_atom_len();
        if n < longest {
            return Err(Error::WindowTooShort { window: n, atom: longest });
        }
        let q = cfg.quota(n, m);
        if cfg.variant.is_equiprobable() && q == 0 {
            return Err(Error::ZeroQuota {
                p: cfg.p,
                window: n,
                atoms: m,
            });
        }
        let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        Ok(Pursuit {
            dict,
            cfg,
            residual: x.to_vec(),
            table: CorrelationTable::build(x, dict),
            quota: QuotaState::new(m, q),
            events: Vec::new(),
            index: EventIndex::new(n, longest),
            budget: cfg.iterations(n, m),
            floor: SELECTION_FLOOR * norm,
            ridge_events: Vec::new(),
        })
    }

    pub fn residual(&self) -> &[f64] {
        &self.residual
    }

    pub fn events(&self) -> &[SparseEvent] {
        &self.events
    }

    pub fn quota(&self) -> &QuotaState {
        &self.quota
    }

    pub fn table(&self) -> &CorrelationTable {
        &self.table
    }

    /// One select / neighborhood / solve / update cycle, or `None` once the
    /// pursuit has terminated.
    pub fn step(&mut self) -> Option<StepReport> {
        if self.events.len() >= self.budget {
            return None;
        }
        let quota = self.cfg.variant.is_equiprobable().then_some(&self.quota);
        let pick = select(&mut self.table, quota)?;
        if pick.value.abs() <= self.floor {
            return None;
        }

        let dict = self.dict;
        let new_len = dict.atom(pick.atom).len();
        let prior = if self.cfg.variant.is_orthogonal() {
            self.index.overlapping(&self.events, dict, pick.offset, pick.offset + new_len)
        } else {
            Vec::new()
        };
        let event = self.events.len();
        self.events.push(SparseEvent {
            atom: pick.atom,
            offset: pick.offset,
            coefficient: 0.0,
        });

        // One column per distinct (atom, offset); a reselected position
        // shares its column with the new event.
        let mut columns: Vec<(usize, usize)> = Vec::with_capacity(prior.len() + 1);
        let mut targets: Vec<usize> = Vec::with_capacity(prior.len() + 1);
        for &i in &prior {
            let key = (self.events[i].atom, self.events[i].offset);
            if key == (pick.atom, pick.offset) {
                continue;
            }
            match columns.iter().position(|&c| c == key) {
                Some(k) => targets[k] = i,
                None => {
                    columns.push(key);
                    targets.push(i);
                }
            }
        }
        columns.push((pick.atom, pick.offset));
        targets.push(event);

        let cols: Vec<Column> = columns
            .iter()
            .map(|&(atom, offset)| Column {
                offset,
                waveform: dict.atom(atom).waveform(),
            })
            .collect();
        let solution = solve_neighborhood(&cols, &self.residual);
        for (&t, &x) in targets.iter().zip(&solution.chi) {
            self.events[t].coefficient += x;
        }
        let region = update_residual(&mut self.residual, &cols, &solution.chi);
        if solution.ridge {
            log::debug!("ridge fallback at event {event} (atom {}, offset {})", pick.atom, pick.offset);
            self.ridge_events.push(event);
        }

        self.quota.record(pick.atom);
        if self.cfg.variant.is_equiprobable() && !self.quota.admits(pick.atom) {
            self.table.deactivate(pick.atom);
        }
        self.table.refresh(&self.residual, dict, region.0, region.1);
        self.index.insert(pick.offset, event);

        Some(StepReport {
            event,
            columns,
            targets,
            chi: solution.chi,
            ridge: solution.ridge,
            region,
        })
    }

    pub fn finish(self) -> SparseCode {
        SparseCode {
            window_len: self.residual.len(),
            events: self.events,
            residual: self.residual,
            dict_digest: self.dict.digest(),
            variant: self.cfg.variant,
            p: self.cfg.p,
            ridge_events: self.ridge_events,
        }
    }
}

/// Runs the pursuit on window `x` to termination.
pub fn pursue(dict: &Dictionary, x: &[f64], cfg: &PursuitConfig) -> Result<SparseCode> {
    let mut engine = Pursuit::new(dict, x, *cfg)?;
    while engine.step().is_some() {}
    Ok(engine.finish())
}

/// `Σ a φ_i(t − τ)` over the code's events.
pub fn reconstruct(code: &SparseCode, dict: &Dictionary) -> Result<Vec<f64>> {
    if !code.dict_digest.is_empty() && code.dict_digest != dict.digest() {
        return Err(Error::StaleCode(format!(
            "code digest {} vs dictionary {}",
            code.dict_digest,
            dict.digest()
        )));
    }
    let mut out = vec![0.0; code.window_len];
    for (k, e) in code.events.iter().enumerate() {
        if e.atom >= dict.len() {
            return Err(Error::StaleCode(format!("event {k} references atom {}", e.atom)));
        }
        let w = dict.atom(e.atom).waveform();
        if e.offset + w.len() > code.window_len {
            return Err(Error::StaleCode(format!("event {k} overruns the window")));
        }
        for (o, v) in out[e.offset..e.offset + w.len()].iter_mut().zip(w) {
            *o += e.coefficient * v;
        }
    }
    Ok(out)
}

/// Splits `x` into consecutive windows of `window_len` samples (the last
/// window absorbs any remainder) and encodes each one.
pub fn pursue_windows(dict: &Dictionary, x: &[f64], cfg: &PursuitConfig, window_len: usize) -> Result<Vec<(usize, SparseCode)>> {
    window_bounds(x.len(), window_len)?
        .into_iter()
        .map(|(start, end)| pursue(dict, &x[start..end], cfg).map(|c| (start, c)))
        .collect()
}

/// Concatenated reconstruction of windowed codes over `total_len` samples.
pub fn reconstruct_windows(codes: &[(usize, SparseCode)], dict: &Dictionary, total_len: usize) -> Result<Vec<f64>> {
    let mut out = vec![0.0; total_len];
    for (start, code) in codes {
        let part = reconstruct(code, dict)?;
        if start + part.len() > total_len {
            return Err(Error::LengthMismatch(start + part.len(), total_len));
        }
        out[*start..start + part.len()].copy_from_slice(&part);
    }
    Ok(out)
}

pub(crate) fn window_bounds(total: usize, window_len: usize) -> Result<Vec<(usize, usize)>> {
    if window_len == 0 || total == 0 {
        return Err(Error::InvalidArgument("window length and signal must be non-empty".into()));
    }
    let count = (total / window_len).max(1);
    Ok((0..count)
        .map(|k| {
            let start = k * window_len;
            let end = if k + 1 == count { total } else { start + window_len };
            (start, end)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dictionary::{randdict, Atom};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn noise(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    fn rel_bookkeeping_error(x: &[f64], code: &SparseCode, dict: &Dictionary) -> f64 {
        let rec = reconstruct(code, dict).unwrap();
        let err: f64 = x
            .iter()
            .zip(&rec)
            .zip(&code.residual)
            .map(|((a, b), r)| (a - b - r).powi(2))
            .sum::<f64>()
            .sqrt();
        err / x.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    #[test]
    fn variant_parsing() {
        assert_eq!("E-OMP".parse::<Variant>().unwrap(), Variant::Eomp);
        assert_eq!("emp".parse::<Variant>().unwrap(), Variant::Emp);
        assert!("lasso".parse::<Variant>().is_err());
    }

    #[test]
    fn quota_arithmetic() {
        assert_eq!(quota(0.05, 220_500, 32), 344);
        assert_eq!(quota(0.05, 640, 32), 1);
        assert_eq!(quota(0.01, 100, 32), 0);
        // 0.05 × 48000 / 32 selections per second of signal
        assert_eq!(quota(0.05, 48_000, 32), 75);
    }

    #[test]
    fn neighborhood_overlap_rule() {
        let d = Dictionary::new(vec![Atom::normalized(vec![1.0; 10]).unwrap()]).unwrap();
        let ev = |offset| SparseEvent {
            atom: 0,
            offset,
            coefficient: 1.0,
        };
        let new = ev(12);
        let prior = [ev(0), ev(5), ev(9)];
        assert_eq!(neighborhood(&prior, &new, &d, Variant::Omp), vec![1, 2]);
        assert!(neighborhood(&prior, &new, &d, Variant::Mp).is_empty());
        assert!(neighborhood(&[ev(0)], &ev(100), &d, Variant::Eomp).is_empty());
        assert!(neighborhood(&[], &new, &d, Variant::Omp).is_empty());
    }

    #[test]
    fn zero_input_gives_empty_code() {
        let d = randdict(4, 1).unwrap();
        for v in Variant::ALL {
            let code = pursue(&d, &vec![0.0; 2000], &PursuitConfig::new(v, 0.05)).unwrap();
            assert!(code.events.is_empty(), "{v}");
        }
    }

    #[test]
    fn window_shorter_than_atom_errors() {
        let d = randdict(2, 1).unwrap();
        let err = pursue(&d, &[1.0; 50], &PursuitConfig::new(Variant::Mp, 0.05)).unwrap_err();
        assert!(matches!(err, Error::WindowTooShort { window: 50, atom: 70 }));
    }

    #[test]
    fn equiprobable_needs_positive_quota() {
        let d = randdict(32, 1).unwrap();
        let err = pursue(&d, &noise(100, 1), &PursuitConfig::new(Variant::Emp, 0.05)).unwrap_err();
        assert!(matches!(err, Error::ZeroQuota { .. }));
    }

    #[test]
    fn equiprobable_fills_quota_exactly() {
        let d = randdict(8, 2).unwrap();
        let x = noise(4000, 3);
        for v in [Variant::Emp, Variant::Eomp] {
            let code = pursue(&d, &x, &PursuitConfig::new(v, 0.05)).unwrap();
            assert_eq!(code.counts(8), vec![25; 8]);
            assert!(rel_bookkeeping_error(&x, &code, &d) < 1e-10);
        }
    }

    #[test]
    fn sparsity_parity_across_variants() {
        let d = randdict(8, 4).unwrap();
        let x = noise(3000, 5);
        let counts: Vec<usize> = Variant::ALL
            .iter()
            .map(|&v| pursue(&d, &x, &PursuitConfig::new(v, 0.05)).unwrap().events.len())
            .collect();
        assert!(counts.iter().all(|&c| c == 8 * 18), "{counts:?}");
    }

    #[test]
    fn reconstruct_single_event() {
        let d = randdict(2, 9).unwrap();
        let code = SparseCode {
            events: vec![SparseEvent {
                atom: 0,
                offset: 3,
                coefficient: 2.0,
            }],
            residual: vec![],
            window_len: 80,
            dict_digest: d.digest(),
            variant: Variant::Mp,
            p: 0.05,
            ridge_events: vec![],
        };
        let rec = reconstruct(&code, &d).unwrap();
        for (t, &v) in rec.iter().enumerate() {
            let expected = if (3..73).contains(&t) { 2.0 * d.atom(0).waveform()[t - 3] } else { 0.0 };
            assert_eq!(v, expected);
        }
        let empty = SparseCode { events: vec![], ..code.clone() };
        assert!(reconstruct(&empty, &d).unwrap().iter().all(|&v| v == 0.0));
        let other = randdict(2, 10).unwrap();
        assert!(matches!(reconstruct(&code, &other), Err(Error::StaleCode(_))));
    }

    #[test]
    fn mp_step_energy_identity() {
        let d = randdict(4, 6).unwrap();
        let x = noise(1500, 7);
        let mut p = Pursuit::new(&d, &x, PursuitConfig::new(Variant::Mp, 0.05)).unwrap();
        let mut before: f64 = x.iter().map(|v| v * v).sum();
        while let Some(step) = p.step() {
            let after: f64 = p.residual().iter().map(|v| v * v).sum();
            let chi = step.chi[0];
            assert!((before - after - chi * chi).abs() <= 1e-9 * before);
            assert!(after <= before);
            before = after;
        }
    }

    #[test]
    fn windowed_encoding_covers_signal() {
        let d = randdict(4, 8).unwrap();
        let x = noise(2500, 9);
        let codes = pursue_windows(&d, &x, &PursuitConfig::new(Variant::Emp, 0.05), 1000).unwrap();
        assert_eq!(codes.len(), 2);
        assert_eq!(codes[1].0, 1000);
        assert_eq!(codes[1].1.window_len, 1500);
        let rec = reconstruct_windows(&codes, &d, x.len()).unwrap();
        let mut residual = Vec::new();
        for (_, c) in &codes {
            residual.extend_from_slice(&c.residual);
        }
        for ((a, b), r) in x.iter().zip(&rec).zip(&residual) {
            assert!((a - b - r).abs() < 1e-12);
        }
    }
}
