//! Independent reference implementations used as test oracles.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use shiftdict::{Atom, Dictionary, Variant};

/// Event sequence and final residual of the exhaustive reference pursuit.
pub struct ReferenceCode {
    pub events: Vec<(usize, usize, f64)>,
    pub residual: Vec<f64>,
}

/// Greedy pursuit without any caching: every iteration recomputes all
/// correlations with a nested loop, scans atoms then offsets in ascending
/// order keeping the first strict maximum, and solves the local
/// least-squares problem with a dense SVD.
pub fn reference_pursuit(dict: &Dictionary, x: &[f64], variant: Variant, p: f64) -> ReferenceCode {
    let n = x.len();
    let m = dict.len();
    let q = (p * n as f64 / m as f64 + 1e-9).floor() as usize;
    let budget = m * q;
    let floor = 1e-12 * x.iter().map(|v| v * v).sum::<f64>().sqrt();
    let equi = matches!(variant, Variant::Emp | Variant::Eomp);
    let ortho = matches!(variant, Variant::Omp | Variant::Eomp);

    let mut r = x.to_vec();
    let mut counts = vec![0usize; m];
    let mut events: Vec<(usize, usize, f64)> = Vec::new();

    while events.len() < budget {
        let mut best: Option<(usize, usize)> = None;
        let mut best_abs = -1.0f64;
        for (i, &used) in counts.iter().enumerate() {
            if equi && used >= q {
                continue;
            }
            let w = dict.atom(i).waveform();
            for tau in 0..=n - w.len() {
                let mut s = 0.0;
                for t in 0..w.len() {
                    s += r[tau + t] * w[t];
                }
                if s.abs() > best_abs {
                    best_abs = s.abs();
                    best = Some((i, tau));
                }
            }
        }
        let Some((atom, offset)) = best else { break };
        if best_abs <= floor {
            break;
        }
        let len = dict.atom(atom).len();
        events.push((atom, offset, 0.0));
        let new = events.len() - 1;

        let mut columns: Vec<(usize, usize)> = Vec::new();
        let mut targets: Vec<usize> = Vec::new();
        if ortho {
            for (k, &(a, o, _)) in events[..new].iter().enumerate() {
                let overlaps = o < offset + len && o + dict.atom(a).len() > offset;
                if !overlaps || (a, o) == (atom, offset) {
                    continue;
                }
                match columns.iter().position(|&c| c == (a, o)) {
                    Some(j) => targets[j] = k,
                    None => {
                        columns.push((a, o));
                        targets.push(k);
                    }
                }
            }
        }
        columns.push((atom, offset));
        targets.push(new);

        let mut psi = DMatrix::<f64>::zeros(n, columns.len());
        for (j, &(a, o)) in columns.iter().enumerate() {
            for (t, v) in dict.atom(a).waveform().iter().enumerate() {
                psi[(o + t, j)] = *v;
            }
        }
        let rv = DVector::from_column_slice(&r);
        let chi = psi.clone().svd(true, true).solve(&rv, 1e-14).expect("svd solve");
        for (j, &t) in targets.iter().enumerate() {
            events[t].2 += chi[j];
        }
        let delta = &psi * &chi;
        for (v, d) in r.iter_mut().zip(delta.iter()) {
            *v -= d;
        }
        counts[atom] += 1;
    }
    ReferenceCode { events, residual: r }
}

pub fn random_atom(rng: &mut ChaCha8Rng, len: usize) -> Atom {
    loop {
        let w: Vec<f64> = (0..len).map(|_| rng.random_range(-1.0..1.0)).collect();
        if let Ok(a) = Atom::normalized(w) {
            return a;
        }
    }
}

pub fn random_dict(rng: &mut ChaCha8Rng, m: usize, min_len: usize, max_len: usize) -> Dictionary {
    let atoms = (0..m).map(|_| {
        let len = rng.random_range(min_len..=max_len);
        random_atom(rng, len)
    });
    Dictionary::new(atoms.collect()).unwrap()
}

pub fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller, kept local so the oracle does not share sampling code
    let u1: f64 = rng.random_range(f64::EPSILON..1.0);
    let u2: f64 = rng.random_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// A small random test signal: a few planted atoms plus white noise.
pub fn planted_signal(rng: &mut ChaCha8Rng, dict: &Dictionary, n: usize, plants: usize, noise: f64) -> Vec<f64> {
    let mut x: Vec<f64> = (0..n).map(|_| noise * gaussian(rng)).collect();
    for _ in 0..plants {
        let i = rng.random_range(0..dict.len());
        let w = dict.atom(i).waveform();
        let o = rng.random_range(0..=n - w.len());
        let a = rng.random_range(-2.0..2.0);
        for (t, v) in w.iter().enumerate() {
            x[o + t] += a * v;
        }
    }
    x
}

pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Max over all relative shifts of `|Σ a(t) b(t + s)|`.
pub fn max_shifted_correlation(a: &[f64], b: &[f64]) -> f64 {
    let (la, lb) = (a.len() as isize, b.len() as isize);
    let mut best = 0.0f64;
    for s in -(la - 1)..lb {
        let mut acc = 0.0;
        for i in 0..la {
            let j = i + s;
            if (0..lb).contains(&j) {
                acc += a[i as usize] * b[j as usize];
            }
        }
        best = best.max(acc.abs());
    }
    best
}

/// `‖x − Σ a φ_i(t − τ)‖ / ‖x‖` by direct summation.
pub fn bookkeeping_error(x: &[f64], events: &[(usize, usize, f64)], residual: &[f64], dict: &Dictionary) -> f64 {
    let mut rec = vec![0.0; x.len()];
    for &(a, o, c) in events {
        for (t, v) in dict.atom(a).waveform().iter().enumerate() {
            rec[o + t] += c * v;
        }
    }
    let err: f64 = x
        .iter()
        .zip(&rec)
        .zip(residual)
        .map(|((xi, ri), e)| (xi - ri - e).powi(2))
        .sum::<f64>()
        .sqrt();
    err / x.iter().map(|v| v * v).sum::<f64>().sqrt()
}
