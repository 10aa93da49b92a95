mod common;

use common::*;
use rand::Rng;
use shiftdict::learner::{apply_update, atom_gradient};
use shiftdict::signal_io::{synth_signal, HiddenAtoms, Placement, SynthSpec};
use shiftdict::{dictionary, pursue, Dictionary, PursuitConfig, SparseCode, SparseEvent, Variant};

/// `½‖x − Σ a φ_i(t − τ)‖²` with samples past the end dropped.
fn objective(x: &[f64], events: &[SparseEvent], dict: &Dictionary) -> f64 {
    let mut r = x.to_vec();
    for e in events {
        for (t, v) in dict.atom(e.atom).waveform().iter().enumerate() {
            if e.offset + t < r.len() {
                r[e.offset + t] -= e.coefficient * v;
            }
        }
    }
    0.5 * r.iter().map(|v| v * v).sum::<f64>()
}

fn code_for(x: &[f64], events: Vec<SparseEvent>, dict: &Dictionary) -> SparseCode {
    let mut r = x.to_vec();
    for e in &events {
        for (t, v) in dict.atom(e.atom).waveform().iter().enumerate() {
            if e.offset + t < r.len() {
                r[e.offset + t] -= e.coefficient * v;
            }
        }
    }
    SparseCode {
        events,
        residual: r,
        window_len: x.len(),
        dict_digest: String::new(),
        variant: Variant::Mp,
        p: 0.0,
        ridge_events: Vec::new(),
    }
}

fn perturbed(dict: &Dictionary, atom: usize, t: usize, h: f64) -> Dictionary {
    let atoms = dict
        .atoms()
        .iter()
        .enumerate()
        .map(|(i, a)| {
            let mut w = a.waveform().to_vec();
            if i == atom {
                w[t] += h;
            }
            shiftdict::Atom::new(w).unwrap()
        })
        .collect();
    Dictionary::new(atoms).unwrap()
}

#[test]
fn gradient_matches_central_differences() {
    for seed in 0..20 {
        let mut rng = seeded(seed);
        let dict = random_dict(&mut rng, 3, 4, 12);
        let n = rng.random_range(40..=100);
        let x: Vec<f64> = (0..n).map(|_| gaussian(&mut rng)).collect();
        // includes events running past the end of the window
        let events: Vec<SparseEvent> = (0..8)
            .map(|_| {
                let atom = rng.random_range(0..3);
                SparseEvent { atom, offset: rng.random_range(0..n - 2), coefficient: rng.random_range(-2.0..2.0) }
            })
            .collect();
        let code = code_for(&x, events.clone(), &dict);
        for atom in 0..3 {
            let g = atom_gradient(&code, &dict, atom);
            let h = 1e-5;
            let fd: Vec<f64> = (0..dict.atom(atom).len())
                .map(|t| {
                    let up = objective(&x, &events, &perturbed(&dict, atom, t, h));
                    let down = objective(&x, &events, &perturbed(&dict, atom, t, -h));
                    -(up - down) / (2.0 * h)
                })
                .collect();
            let diff: f64 = g.iter().zip(&fd).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            let scale: f64 = fd.iter().map(|v| v * v).sum::<f64>().sqrt();
            if scale > 0.0 {
                assert!(diff / scale <= 1e-5, "seed {seed} atom {atom}: {}", diff / scale);
            } else {
                assert!(diff <= 1e-9);
            }
        }
    }
}

#[test]
fn one_update_usually_reduces_reencoded_error() {
    let mut wins = 0;
    for seed in 0..50u64 {
        let spec = SynthSpec {
            length: 4000,
            sample_rate: 8000,
            seed,
            noise_sigma: 0.0,
            density: 0.05,
            amplitude_min: 0.5,
            amplitude_max: 1.5,
            atoms: HiddenAtoms { count: 4, length: 20, taper: true, explicit: None },
        };
        let x = spec.generate().unwrap().signal.into_samples();
        let mut dict = dictionary::randdict(4, seed).unwrap();
        let cfg = PursuitConfig::new(Variant::Emp, 0.05);
        let before = pursue(&dict, &x, &cfg).unwrap();
        let mut rng = seeded(seed);
        apply_update(&mut dict, &before, 1e-4, None, &mut rng).unwrap();
        let after = pursue(&dict, &x, &cfg).unwrap();
        if after.residual_energy() < before.residual_energy() {
            wins += 1;
        }
    }
    assert!(wins >= 45, "descent in {wins}/50 trials");
}

#[test]
fn synthesis_matches_direct_summation() {
    let mut rng = seeded(3);
    let atoms: Vec<_> = (0..3).map(|_| {
        let len = rng.random_range(5..30);
        random_atom(&mut rng, len)
    }).collect();
    let placements: Vec<Placement> = (0..40)
        .map(|_| {
            let atom = rng.random_range(0..3);
            Placement { atom, offset: rng.random_range(0..=500 - atoms[atom].len()), amplitude: rng.random_range(-2.0..2.0) }
        })
        .collect();
    let s = synth_signal(&atoms, &placements, 500, 8000, 0.0, 1).unwrap();
    for t in 0..500 {
        let mut want = 0.0;
        for pl in &placements {
            let w = atoms[pl.atom].waveform();
            if t >= pl.offset && t < pl.offset + w.len() {
                want += pl.amplitude * w[t - pl.offset];
            }
        }
        assert!((s.samples()[t] - want).abs() <= 1e-12);
    }
}

#[test]
fn placement_past_the_end_is_rejected() {
    let a = shiftdict::Atom::normalized(vec![1.0; 10]).unwrap();
    let bad = [Placement { atom: 0, offset: 95, amplitude: 1.0 }];
    assert!(synth_signal(&[a], &bad, 100, 8000, 0.0, 1).is_err());
}
