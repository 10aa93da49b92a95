//! Block-wise dictionary learning.
//!
//! Each block is encoded with the current dictionary, then every atom that
//! took part is moved along the residual it left behind:
//!
//! ```text
//! φ_i ← extnorm(φ_i + η / var(r) · Σ_j a_ij · r[τ_ij .. τ_ij + L_i])
//! ```
//!
//! All of an atom's events in a block are summed into a single increment
//! before the tail-growth and normalization step.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dictionary::{randdict, Atom, Dictionary};
use crate::error::{Error, Result};
use crate::pursuit::{pursue, PursuitConfig, SparseCode, Variant};
use crate::signal_io::{cap_snr, snr_db, BlockSource};

/// Lower bound on the residual variance used as the noise estimate.
pub const VARIANCE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Budget {
    Blocks(usize),
    /// Seconds of training signal consumed, rounded up to whole blocks.
    SignalSeconds(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnConfig {
    pub atoms: usize,
    pub p: f64,
    pub eta: f64,
    pub variant: Variant,
    pub budget: Budget,
    /// Seeds the initial dictionary and atom re-initialisation.
    pub seed: u64,
    /// Cap on atom length; defaults to a quarter of the block length.
    pub max_atom_len: Option<usize>,
}

impl Default for LearnConfig {
    fn default() -> Self {
        LearnConfig {
            atoms: 32,
            p: 0.05,
            eta: 1e-6,
            variant: Variant::Emp,
            budget: Budget::Blocks(100),
            seed: 0,
            max_atom_len: None,
        }
    }
}

impl LearnConfig {
    pub fn validate(&self) -> Result<()> {
        if self.atoms == 0 {
            return Err(Error::InvalidArgument("need at least one atom".into()));
        }
        if !(self.eta > 0.0) || !self.eta.is_finite() {
            return Err(Error::InvalidArgument(format!("eta must be positive, got {}", self.eta)));
        }
        PursuitConfig::new(self.variant, self.p).validate()
    }

    pub fn pursuit(&self) -> PursuitConfig {
        PursuitConfig::new(self.variant, self.p)
    }

    fn block_count(&self, source: &BlockSource) -> usize {
        match self.budget {
            Budget::Blocks(n) => n,
            Budget::SignalSeconds(s) => (s / source.block_secs()).ceil().max(0.0) as usize,
        }
    }
}

/// One row of the learning trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub block: usize,
    /// Cumulative seconds of training signal consumed.
    pub signal_seconds: f64,
    pub snr_db: f64,
    pub residual_var: f64,
    pub min_atom_len: usize,
    pub max_atom_len: usize,
    pub counts: Vec<usize>,
    pub reinitialized: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LearnTrace {
    pub records: Vec<TraceRecord>,
}

/// `Σ_j a_j · r[τ_j .. τ_j + L]` over the events of `atom`, where `L` is
/// the atom's current length. Samples past the residual end count as zero.
pub fn atom_gradient(code: &SparseCode, dict: &Dictionary, atom: usize) -> Vec<f64> {
    let len = dict.atom(atom).len();
    let mut g = vec![0.0; len];
    for e in code.events.iter().filter(|e| e.atom == atom) {
        let end = (e.offset + len).min(code.residual.len());
        if e.offset >= end {
            continue;
        }
        for (gi, r) in g.iter_mut().zip(&code.residual[e.offset..end]) {
            *gi += e.coefficient * r;
        }
    }
    g
}

/// Sample variance (`n − 1` denominator) floored at [`VARIANCE_FLOOR`].
pub fn residual_variance(residual: &[f64]) -> f64 {
    let n = residual.len();
    if n < 2 {
        return VARIANCE_FLOOR;
    }
    let mean = residual.iter().sum::<f64>() / n as f64;
    let var = residual.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    var.max(VARIANCE_FLOOR)
}

/// What [`apply_update`] changed.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct UpdateStats {
    pub updated: Vec<usize>,
    pub reinitialized: Vec<usize>,
}

/// Gradient step on every atom with at least one event in `code`.
///
/// Atoms that collapse to zero are redrawn from the random initial
/// distribution using `rng`.
pub fn apply_update<R: rand::Rng + ?Sized>(
    dict: &mut Dictionary,
    code: &SparseCode,
    eta: f64,
    max_atom_len: Option<usize>,
    rng: &mut R,
) -> Result<UpdateStats> {
    if !(eta >= 0.0) {
        return Err(Error::InvalidArgument(format!("eta must be non-negative, got {eta}")));
    }
    let scale = eta / residual_variance(&code.residual);
    let counts = code.counts(dict.len());
    let mut stats = UpdateStats::default();
    for (i, &count) in counts.iter().enumerate() {
        if count == 0 {
            continue;
        }
        let g = atom_gradient(code, dict, i);
        let mut atom: Atom = dict.atom(i).clone();
        atom.add_scaled(&g, scale)?;
        match atom.extnorm(max_atom_len) {
            Ok(next) => dict.replace(i, next),
            Err(Error::DegenerateAtom) => {
                log::warn!("atom {i} collapsed to zero; re-initialising");
                dict.replace(i, Atom::random(rng));
                stats.reinitialized.push(i);
            }
            Err(e) => return Err(e),
        }
        stats.updated.push(i);
    }
    Ok(stats)
}

/// Stepwise learning loop; [`dlearn`] runs it to the end.
pub struct Learner {
    source: BlockSource,
    cfg: LearnConfig,
    dict: Dictionary,
    rng: ChaCha8Rng,
    blocks: usize,
    step: usize,
    prev_residual: Option<Vec<f64>>,
    trace: LearnTrace,
    lifetime_counts: Vec<usize>,
}

impl Learner {
    pub fn new(source: BlockSource, cfg: LearnConfig) -> Result<Self> {
        cfg.validate()?;
        let dict = randdict(cfg.atoms, cfg.seed)?;
        Self::with_dictionary(source, cfg, dict)
    }

    /// Starts from an existing dictionary instead of a random one.
    pub fn with_dictionary(source: BlockSource, cfg: LearnConfig, mut dict: Dictionary) -> Result<Self> {
        cfg.validate()?;
        if dict.len() != cfg.atoms {
            return Err(Error::InvalidArgument(format!(
                "dictionary has {} atoms, config asks for {}",
                dict.len(),
                cfg.atoms
            )));
        }
        if dict.max_atom_len() > source.block_len() {
            return Err(Error::WindowTooShort {
                window: source.block_len(),
                atom: dict.max_atom_len(),
            });
        }
        dict.sample_rate_hint = Some(source.source().sample_rate());
        dict.provenance = format!(
            "dlearn variant={} atoms={} p={} eta={} seed={} block_len={}",
            cfg.variant,
            cfg.atoms,
            cfg.p,
            cfg.eta,
            cfg.seed,
            source.block_len()
        );
        let blocks = cfg.block_count(&source).min(source.budget());
        Ok(Learner {
            rng: ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(0x9e37_79b9_7f4a_7c15)),
            lifetime_counts: vec![0; cfg.atoms],
            source,
            cfg,
            dict,
            blocks,
            step: 0,
            prev_residual: None,
            trace: LearnTrace::default(),
        })
    }

    pub fn dictionary(&self) -> &Dictionary {
        &self.dict
    }

    pub fn trace(&self) -> &LearnTrace {
        &self.trace
    }

    pub fn blocks_done(&self) -> usize {
        self.step
    }

    /// Selections per atom summed over all processed blocks.
    pub fn lifetime_counts(&self) -> &[usize] {
        &self.lifetime_counts
    }

    fn max_atom_len(&self) -> usize {
        self.cfg.max_atom_len.unwrap_or(self.source.block_len() / 4).min(self.source.block_len())
    }

    /// Processes one block; `None` when the budget is exhausted.
    pub fn step(&mut self) -> Result<Option<&TraceRecord>> {
        if self.step >= self.blocks {
            return Ok(None);
        }
        let Some(block) = self.source.next_block(self.step, self.prev_residual.as_deref()) else {
            return Ok(None);
        };
        let x = block.samples();
        let code = pursue(&self.dict, x, &self.cfg.pursuit())?;
        let residual_var = residual_variance(&code.residual);
        let estimate: Vec<f64> = x.iter().zip(&code.residual).map(|(a, r)| a - r).collect();
        let snr = snr_db(x, &estimate).map(cap_snr).unwrap_or(0.0);
        let counts = code.counts(self.dict.len());
        for (l, c) in self.lifetime_counts.iter_mut().zip(&counts) {
            *l += c;
        }

        let cap = Some(self.max_atom_len());
        let stats = apply_update(&mut self.dict, &code, self.cfg.eta, cap, &mut self.rng)?;

        self.step += 1;
        self.trace.records.push(TraceRecord {
            block: self.step - 1,
            signal_seconds: self.step as f64 * self.source.block_secs(),
            snr_db: snr,
            residual_var,
            min_atom_len: self.dict.min_atom_len(),
            max_atom_len: self.dict.max_atom_len(),
            counts,
            reinitialized: stats.reinitialized.len(),
        });
        self.prev_residual = Some(code.residual);
        Ok(self.trace.records.last())
    }

    pub fn into_parts(self) -> (Dictionary, LearnTrace) {
        (self.dict, self.trace)
    }
}

/// Learns a dictionary of `cfg.atoms` atoms from `source`.
pub fn dlearn(source: BlockSource, cfg: &LearnConfig) -> Result<(Dictionary, LearnTrace)> {
    let mut learner = Learner::new(source, cfg.clone())?;
    while learner.step()?.is_some() {}
    Ok(learner.into_parts())
}
