//! WebAssembly bindings behind `www/index.html`.
//!
//! A [`Demo`] owns a synthetic four-atom source and a learner. The page
//! drives three operations on it: encode a stretch of the source with any
//! pursuit variant, advance learning by a few blocks, and sweep denoising
//! SNR over noise levels with the current dictionary.

use shiftdict::metrics::denoise_sweep;
use shiftdict::pursuit::{pursue, reconstruct};
use shiftdict::signal_io::{cap_snr, snr_db, HiddenAtoms, SynthSpec};
use shiftdict::{BlockSource, Budget, Dictionary, LearnConfig, Learner, PursuitConfig, Signal, Variant};
use wasm_bindgen::prelude::*;

const SAMPLE_RATE: u32 = 8000;
const SOURCE_LEN: usize = 40_000;
const BLOCK_LEN: usize = 2000;

fn js_err(e: shiftdict::Error) -> JsError {
    JsError::new(&e.to_string())
}

fn parse_variant(name: &str) -> shiftdict::Result<Variant> {
    name.parse()
        .map_err(|_| shiftdict::Error::InvalidArgument(format!("unknown variant {name:?}")))
}

fn best_shift_corr(a: &[f64], b: &[f64]) -> f64 {
    let (la, lb) = (a.len() as isize, b.len() as isize);
    let mut best = 0.0f64;
    for s in -(la - 1)..lb {
        let lo = 0.max(-s);
        let hi = la.min(lb - s);
        let acc: f64 = (lo..hi).map(|i| a[i as usize] * b[(i + s) as usize]).sum();
        best = best.max(acc.abs());
    }
    best
}

/// One pursuit over a slice of the source.
#[wasm_bindgen]
pub struct Encoding {
    signal: Vec<f64>,
    reconstruction: Vec<f64>,
    residual: Vec<f64>,
    atoms: Vec<u32>,
    offsets: Vec<u32>,
    coefficients: Vec<f64>,
    counts: Vec<u32>,
    snr_db: f64,
}

#[wasm_bindgen]
impl Encoding {
    pub fn signal(&self) -> Vec<f64> {
        self.signal.clone()
    }
    pub fn reconstruction(&self) -> Vec<f64> {
        self.reconstruction.clone()
    }
    pub fn residual(&self) -> Vec<f64> {
        self.residual.clone()
    }
    pub fn atoms(&self) -> Vec<u32> {
        self.atoms.clone()
    }
    pub fn offsets(&self) -> Vec<u32> {
        self.offsets.clone()
    }
    pub fn coefficients(&self) -> Vec<f64> {
        self.coefficients.clone()
    }
    /// Events per atom.
    pub fn counts(&self) -> Vec<u32> {
        self.counts.clone()
    }
    #[wasm_bindgen(getter)]
    pub fn snr_db(&self) -> f64 {
        self.snr_db
    }
}

#[wasm_bindgen]
pub struct Demo {
    source: Signal,
    hidden: Vec<Vec<f64>>,
    learner: Learner,
    trace: Vec<f64>,
}

impl Demo {
    pub fn build(seed: u64, atoms: usize, variant: &str, eta: f64) -> shiftdict::Result<Demo> {
        let spec = SynthSpec {
            length: SOURCE_LEN,
            sample_rate: SAMPLE_RATE,
            seed,
            noise_sigma: 0.0,
            density: 0.05,
            amplitude_min: 0.5,
            amplitude_max: 1.5,
            atoms: HiddenAtoms { count: 4, length: 20, taper: true, explicit: None },
        };
        let out = spec.generate()?;
        let cfg = LearnConfig {
            atoms,
            p: 0.05,
            eta,
            variant: parse_variant(variant)?,
            budget: Budget::Blocks(usize::MAX),
            seed,
            max_atom_len: Some(100),
        };
        let blocks = BlockSource::new(out.signal.clone(), BLOCK_LEN, seed)?;
        Ok(Demo {
            source: out.signal,
            hidden: out.atoms.iter().map(|a| a.waveform().to_vec()).collect(),
            learner: Learner::new(blocks, cfg)?,
            trace: Vec::new(),
        })
    }

    pub fn dictionary(&self) -> &Dictionary {
        self.learner.dictionary()
    }

    pub fn encode_slice(&self, variant: &str, p: f64, start: usize, len: usize) -> shiftdict::Result<Encoding> {
        let start = start.min(self.source.len() - 1);
        let end = (start + len).min(self.source.len());
        let x = &self.source.samples()[start..end];
        let dict = self.dictionary();
        let code = pursue(dict, x, &PursuitConfig::new(parse_variant(variant)?, p))?;
        let rec = reconstruct(&code, dict)?;
        let snr = snr_db(x, &rec).map(cap_snr).unwrap_or(f64::NAN);
        Ok(Encoding {
            signal: x.to_vec(),
            reconstruction: rec,
            atoms: code.events.iter().map(|e| e.atom as u32).collect(),
            offsets: code.events.iter().map(|e| e.offset as u32).collect(),
            coefficients: code.events.iter().map(|e| e.coefficient).collect(),
            counts: code.counts(dict.len()).into_iter().map(|c| c as u32).collect(),
            residual: code.residual,
            snr_db: snr,
        })
    }

    pub fn train_blocks(&mut self, blocks: usize) -> shiftdict::Result<f64> {
        for _ in 0..blocks {
            match self.learner.step()? {
                Some(rec) => self.trace.push(rec.snr_db),
                None => break,
            }
        }
        Ok(self.trace.last().copied().unwrap_or(f64::NAN))
    }

    /// Median reconstruction SNR against the clean source, one row per
    /// variant in `mp, omp, emp, eomp` order, flattened.
    pub fn denoise(&self, ratios: &[f64], seeds: u32, len: usize) -> shiftdict::Result<Vec<f64>> {
        let len = len.min(self.source.len());
        let clean = Signal::new(self.source.samples()[..len].to_vec(), SAMPLE_RATE)?;
        let seeds: Vec<u64> = (1..=seeds as u64).collect();
        let mut out = Vec::new();
        for v in Variant::ALL {
            let pts = denoise_sweep(self.dictionary(), &clean, ratios, &PursuitConfig::new(v, 0.05), &seeds, len)?;
            out.extend(pts.iter().map(|p| p.median()));
        }
        Ok(out)
    }
}

#[wasm_bindgen]
impl Demo {
    #[wasm_bindgen(constructor)]
    pub fn new(seed: u32, atoms: u32, variant: &str, eta: f64) -> Result<Demo, JsError> {
        Demo::build(seed as u64, atoms as usize, variant, eta).map_err(js_err)
    }

    /// Encodes `len` samples from `start` with the current dictionary.
    pub fn encode(&self, variant: &str, p: f64, start: u32, len: u32) -> Result<Encoding, JsError> {
        self.encode_slice(variant, p, start as usize, len as usize).map_err(js_err)
    }

    /// Runs `blocks` learning steps and returns the last block SNR.
    pub fn train(&mut self, blocks: u32) -> Result<f64, JsError> {
        self.train_blocks(blocks as usize).map_err(js_err)
    }

    pub fn denoise_curve(&self, ratios: Vec<f64>, seeds: u32, len: u32) -> Result<Vec<f64>, JsError> {
        self.denoise(&ratios, seeds, len as usize).map_err(js_err)
    }

    #[wasm_bindgen(getter)]
    pub fn blocks_done(&self) -> u32 {
        self.learner.blocks_done() as u32
    }

    #[wasm_bindgen(getter)]
    pub fn atom_count(&self) -> u32 {
        self.dictionary().len() as u32
    }

    pub fn atom(&self, i: u32) -> Vec<f64> {
        self.dictionary().atoms().get(i as usize).map(|a| a.waveform().to_vec()).unwrap_or_default()
    }

    pub fn hidden_atom(&self, i: u32) -> Vec<f64> {
        self.hidden.get(i as usize).cloned().unwrap_or_default()
    }

    /// Best shifted correlation of each hidden atom with any learned atom.
    pub fn recovery(&self) -> Vec<f64> {
        self.hidden
            .iter()
            .map(|h| {
                self.dictionary()
                    .atoms()
                    .iter()
                    .map(|a| best_shift_corr(h, a.waveform()))
                    .fold(0.0, f64::max)
            })
            .collect()
    }

    /// Events each atom has received since learning started.
    pub fn lifetime_counts(&self) -> Vec<u32> {
        self.learner.lifetime_counts().iter().map(|&c| c as u32).collect()
    }

    pub fn snr_trace(&self) -> Vec<f64> {
        self.trace.clone()
    }
}
