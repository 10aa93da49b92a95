//! Entropy, event-rate, SNR and timing analyses over sparse codes.

use std::time::Instant;

use serde::Serialize;

use crate::dictionary::Dictionary;
use crate::error::{Error, Result};
use crate::pursuit::{pursue, pursue_windows, reconstruct_windows, PursuitConfig, SparseCode, Variant};
use crate::signal_io::{add_noise, cap_snr, snr_db, Signal};

/// Plug-in Shannon entropy in bits of a count vector; `0·log 0 = 0`.
pub fn entropy_from_counts(counts: &[usize]) -> f64 {
    let total: usize = counts.iter().sum();
    if total == 0 {
        return 0.0;
    }
    let total = total as f64;
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / total;
            -p * p.log2()
        })
        .sum()
}

fn all_events<'a>(codes: &'a [SparseCode]) -> impl Iterator<Item = &'a crate::pursuit::SparseEvent> + 'a {
    codes.iter().flat_map(|c| c.events.iter())
}

/// Selections per atom summed over `codes`.
pub fn atom_counts(codes: &[SparseCode], atoms: usize) -> Vec<usize> {
    let mut counts = vec![0; atoms];
    for e in all_events(codes) {
        if e.atom < atoms {
            counts[e.atom] += 1;
        }
    }
    counts
}

/// Entropy in bits of the selected-atom index sequence.
pub fn index_entropy(codes: &[SparseCode], atoms: usize) -> Result<f64> {
    let counts = atom_counts(codes, atoms);
    if counts.iter().all(|&c| c == 0) {
        return Err(Error::InvalidArgument("no events to measure".into()));
    }
    Ok(entropy_from_counts(&counts))
}

/// Equal-width histogram of all coefficients over their observed range.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Histogram {
    pub min: f64,
    pub max: f64,
    pub counts: Vec<usize>,
}

impl Histogram {
    pub fn edges(&self) -> Vec<f64> {
        let bins = self.counts.len();
        (0..=bins)
            .map(|k| self.min + (self.max - self.min) * k as f64 / bins as f64)
            .collect()
    }
}

pub fn coeff_histogram(codes: &[SparseCode], bins: usize) -> Result<Histogram> {
    if bins == 0 {
        return Err(Error::InvalidArgument("bins must be positive".into()));
    }
    let values: Vec<f64> = all_events(codes).map(|e| e.coefficient).collect();
    if values.is_empty() {
        return Err(Error::InvalidArgument("no events to measure".into()));
    }
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut counts = vec![0; bins];
    if max > min {
        let width = (max - min) / bins as f64;
        for v in values {
            let k = (((v - min) / width).floor() as usize).min(bins - 1);
            counts[k] += 1;
        }
    } else {
        counts[0] = values.len();
    }
    Ok(Histogram { min, max, counts })
}

/// Entropy in bits of the binned coefficients. A degenerate range gives 0.
pub fn coeff_entropy(codes: &[SparseCode], bins: usize) -> Result<f64> {
    Ok(entropy_from_counts(&coeff_histogram(codes, bins)?.counts))
}

/// Selections per second for each atom.
pub fn event_rates(codes: &[SparseCode], sample_rate: u32, atoms: usize) -> Result<Vec<f64>> {
    let samples: usize = codes.iter().map(|c| c.window_len).sum();
    if samples == 0 || sample_rate == 0 {
        return Err(Error::InvalidArgument("zero signal duration".into()));
    }
    let seconds = samples as f64 / sample_rate as f64;
    Ok(atom_counts(codes, atoms).into_iter().map(|c| c as f64 / seconds).collect())
}

/// The `k` highest rates as `(atom, rate)`, descending; ties by atom index.
pub fn top_rates(rates: &[f64], k: usize) -> Vec<(usize, f64)> {
    let mut ranked: Vec<(usize, f64)> = rates.iter().copied().enumerate().collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    ranked.truncate(k);
    ranked
}

/// Encodes `signal` in windows and returns the capped reconstruction SNR
/// together with the codes.
pub fn encode_snr(dict: &Dictionary, signal: &[f64], cfg: &PursuitConfig, window_len: usize) -> Result<(f64, Vec<(usize, SparseCode)>)> {
    let codes = pursue_windows(dict, signal, cfg, window_len)?;
    let rec = reconstruct_windows(&codes, dict, signal.len())?;
    Ok((cap_snr(snr_db(signal, &rec)?), codes))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DenoisePoint {
    pub ratio: f64,
    pub snr_db: Vec<f64>,
}

impl DenoisePoint {
    pub fn median(&self) -> f64 {
        median(&self.snr_db)
    }
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// For each noise ratio and seed: add noise, encode the noisy signal,
/// and score the reconstruction against the clean signal.
pub fn denoise_sweep(
    dict: &Dictionary,
    clean: &Signal,
    ratios: &[f64],
    cfg: &PursuitConfig,
    seeds: &[u64],
    window_len: usize,
) -> Result<Vec<DenoisePoint>> {
    ratios
        .iter()
        .map(|&ratio| {
            let snr = seeds
                .iter()
                .map(|&seed| {
                    let noisy = add_noise(clean, ratio, seed)?;
                    let codes = pursue_windows(dict, noisy.samples(), cfg, window_len)?;
                    let rec = reconstruct_windows(&codes, dict, clean.len())?;
                    Ok(cap_snr(snr_db(clean.samples(), &rec)?))
                })
                .collect::<Result<Vec<f64>>>()?;
            Ok(DenoisePoint { ratio, snr_db: snr })
        })
        .collect()
}

/// Reconstruction SNR of a fixed dictionary across selection probabilities.
pub fn p_sweep(dict: &Dictionary, signal: &[f64], variant: Variant, ps: &[f64], window_len: usize) -> Result<Vec<(f64, f64)>> {
    ps.iter()
        .map(|&p| encode_snr(dict, signal, &PursuitConfig::new(variant, p), window_len).map(|(snr, _)| (p, snr)))
        .collect()
}

/// Parses `start:step:stop` (inclusive) or a comma list.
pub fn parse_grid(spec: &str) -> Result<Vec<f64>> {
    let bad = || Error::InvalidArgument(format!("bad grid {spec:?}"));
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() == 3 {
        let nums: Vec<f64> = parts.iter().map(|s| s.trim().parse().map_err(|_| bad())).collect::<Result<_>>()?;
        let (start, step, stop) = (nums[0], nums[1], nums[2]);
        if !(step > 0.0) || stop < start {
            return Err(bad());
        }
        let n = ((stop - start) / step + 1e-9).floor() as usize;
        // index-based to avoid accumulating the step
        return Ok((0..=n).map(|k| start + step * k as f64).collect());
    }
    spec.split(',').map(|s| s.trim().parse().map_err(|_| bad())).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimingCell {
    pub variant: Variant,
    pub window_len: usize,
    pub events: usize,
    pub seconds: f64,
    /// `seconds / (window_len · events)`.
    pub per_sample_per_iteration: f64,
}

/// Times one pursuit per `(variant, window length)`, taking windows from the
/// start of `signal`. One warm-up run is discarded and the fastest of
/// `repeats` timed runs is kept.
pub fn timing_profile(
    dict: &Dictionary,
    signal: &[f64],
    window_lengths: &[usize],
    variants: &[Variant],
    p: f64,
    repeats: usize,
) -> Result<Vec<TimingCell>> {
    let mut cells = Vec::new();
    for &variant in variants {
        for &n in window_lengths {
            if n > signal.len() {
                return Err(Error::LengthMismatch(n, signal.len()));
            }
            let x = &signal[..n];
            let cfg = PursuitConfig::new(variant, p);
            let warm = pursue(dict, x, &cfg)?;
            let events = warm.events.len();
            let mut best = f64::INFINITY;
            for _ in 0..repeats.max(1) {
                let t0 = Instant::now();
                let code = pursue(dict, x, &cfg)?;
                let dt = t0.elapsed().as_secs_f64();
                std::hint::black_box(&code);
                best = best.min(dt);
            }
            cells.push(TimingCell {
                variant,
                window_len: n,
                events,
                seconds: best,
                per_sample_per_iteration: best / (n as f64 * events.max(1) as f64),
            });
        }
    }
    Ok(cells)
}

/// CPU model string from `/proc/cpuinfo`, or `"unknown"`.
pub fn cpu_model() -> String {
    std::fs::read_to_string("/proc/cpuinfo")
        .ok()
        .and_then(|s| {
            s.lines()
                .find(|l| l.starts_with("model name"))
                .and_then(|l| l.split_once(':'))
                .map(|(_, v)| v.trim().to_string())
        })
        .unwrap_or_else(|| "unknown".to_string())
}
