//! Signals: WAV input/output, synthetic superpositions, training blocks,
//! additive noise and reconstruction SNR.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dictionary::Atom;
use crate::error::{Error, Result};

// Hidden atoms and placements draw from separate streams of the same seed.
const HIDDEN_ATOM_SALT: u64 = 0x5eed_a70e;

/// Display cap for SNR values, in dB.
pub const SNR_CAP_DB: f64 = 120.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Signal {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl Signal {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptySignal);
        }
        if sample_rate == 0 {
            return Err(Error::InvalidArgument("sample rate must be positive".into()));
        }
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(Signal { samples, sample_rate })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// Population standard deviation.
    pub fn std(&self) -> f64 {
        std_dev(&self.samples)
    }
}

pub(crate) fn std_dev(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    (x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WavFormat {
    Pcm16,
    Pcm24,
    Float32,
}

/// Reads PCM16, PCM24 or float32 WAV, averaging channels to mono.
/// Integer samples are scaled by `1 / 2^(bits-1)`.
pub fn load_wav(path: impl AsRef<Path>) -> Result<Signal> {
    let reader = hound::WavReader::open(path.as_ref())?;
    let spec = reader.spec();
    let channels = spec.channels as usize;
    if channels == 0 {
        return Err(Error::UnsupportedEncoding("zero channels".into()));
    }
    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Int, bits @ (16 | 24)) => {
            let scale = 1.0 / (1u32 << (bits - 1)) as f64;
            reader
                .into_samples::<i32>()
                .map(|s| s.map(|v| v as f64 * scale))
                .collect::<std::result::Result<_, _>>()?
        }
        (hound::SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<std::result::Result<_, _>>()?,
        (format, bits) => {
            return Err(Error::UnsupportedEncoding(format!("{format:?} {bits}-bit")));
        }
    };
    let frames = interleaved.len() / channels;
    if frames == 0 {
        return Err(Error::EmptySignal);
    }
    let mono = interleaved
        .chunks_exact(channels)
        .map(|frame| frame.iter().sum::<f64>() / channels as f64)
        .collect();
    Signal::new(mono, spec.sample_rate)
}

/// Writes a mono WAV. Integer formats clamp to the representable range.
pub fn write_wav(signal: &Signal, path: impl AsRef<Path>, format: WavFormat) -> Result<()> {
    let (bits, sample_format) = match format {
        WavFormat::Pcm16 => (16, hound::SampleFormat::Int),
        WavFormat::Pcm24 => (24, hound::SampleFormat::Int),
        WavFormat::Float32 => (32, hound::SampleFormat::Float),
    };
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: signal.sample_rate,
        bits_per_sample: bits,
        sample_format,
    };
    let mut writer = hound::WavWriter::create(path.as_ref(), spec)?;
    match format {
        WavFormat::Float32 => {
            for &v in &signal.samples {
                writer.write_sample(v as f32)?;
            }
        }
        WavFormat::Pcm16 | WavFormat::Pcm24 => {
            let full = (1i64 << (bits - 1)) as f64;
            for &v in &signal.samples {
                let q = (v * full).round().clamp(-full, full - 1.0) as i32;
                writer.write_sample(q)?;
            }
        }
    }
    writer.finalize()?;
    Ok(())
}

/// One placed atom instance of a synthetic signal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Placement {
    pub atom: usize,
    pub offset: usize,
    pub amplitude: f64,
}

/// Direct superposition `Σ a φ(t - τ)` plus seeded Gaussian noise.
pub fn synth_signal(
    atoms: &[Atom],
    placements: &[Placement],
    length: usize,
    sample_rate: u32,
    noise_sigma: f64,
    seed: u64,
) -> Result<Signal> {
    if !(noise_sigma >= 0.0) {
        return Err(Error::InvalidArgument(format!("noise_sigma must be >= 0, got {noise_sigma}")));
    }
    let mut samples = vec![0.0; length];
    for (index, p) in placements.iter().enumerate() {
        let atom = atoms.get(p.atom).ok_or(Error::PlacementOutOfBounds {
            index,
            atom: p.atom,
            offset: p.offset,
            length,
        })?;
        if p.offset + atom.len() > length {
            return Err(Error::PlacementOutOfBounds {
                index,
                atom: p.atom,
                offset: p.offset,
                length,
            });
        }
        for (s, w) in samples[p.offset..p.offset + atom.len()].iter_mut().zip(atom.waveform()) {
            *s += p.amplitude * w;
        }
    }
    if noise_sigma > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for s in &mut samples {
            let z: f64 = StandardNormal.sample(&mut rng);
            *s += noise_sigma * z;
        }
    }
    Signal::new(samples, sample_rate)
}

/// Structured description of a synthetic training signal (TOML).
///
/// ```toml
/// length = 200000
/// sample_rate = 16000
/// seed = 1
/// noise_sigma = 0.0
/// density = 0.02        # expected placements per sample
/// amplitude_min = 0.5
/// amplitude_max = 1.5
///
/// [atoms]
/// count = 4
/// length = 20
/// # explicit = [[...], [...]]   # overrides count/length
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    pub length: usize,
    #[serde(default = "default_sample_rate")]
    pub sample_rate: u32,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub noise_sigma: f64,
    pub density: f64,
    #[serde(default = "default_amp_min")]
    pub amplitude_min: f64,
    #[serde(default = "default_amp_max")]
    pub amplitude_max: f64,
    pub atoms: HiddenAtoms,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HiddenAtoms {
    #[serde(default)]
    pub count: usize,
    #[serde(default)]
    pub length: usize,
    /// Hann taper on Gaussian atoms so they decay to zero at both ends.
    #[serde(default = "default_true")]
    pub taper: bool,
    #[serde(default)]
    pub explicit: Option<Vec<Vec<f64>>>,
}

fn default_sample_rate() -> u32 {
    16_000
}
fn default_amp_min() -> f64 {
    0.5
}
fn default_amp_max() -> f64 {
    1.5
}
fn default_true() -> bool {
    true
}

/// A synthetic signal together with its ground truth.
#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub signal: Signal,
    pub atoms: Vec<Atom>,
    pub placements: Vec<Placement>,
}

impl SynthSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("synth spec serializes")
    }

    pub fn hidden_atoms(&self) -> Result<Vec<Atom>> {
        if let Some(explicit) = &self.atoms.explicit {
            return explicit.iter().map(|w| Atom::normalized(w.clone())).collect();
        }
        if self.atoms.count == 0 || self.atoms.length == 0 {
            return Err(Error::InvalidArgument("synth atoms need count and length".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ HIDDEN_ATOM_SALT);
        let len = self.atoms.length;
        (0..self.atoms.count)
            .map(|_| {
                let w = (0..len)
                    .map(|t| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        if self.atoms.taper {
                            let hann = 0.5 - 0.5 * (2.0 * std::f64::consts::PI * (t as f64 + 1.0) / (len as f64 + 1.0)).cos();
                            z * hann
                        } else {
                            z
                        }
                    })
                    .collect();
                Atom::normalized(w)
            })
            .collect()
    }

    /// Poisson placements (exponential gaps at `density` per sample), atom
    /// drawn uniformly, magnitude uniform in `[amplitude_min, amplitude_max]`
    /// with random sign.
    pub fn generate(&self) -> Result<SynthOutput> {
        if !(self.density > 0.0) {
            return Err(Error::InvalidArgument("density must be positive".into()));
        }
        if !(self.amplitude_min >= 0.0 && self.amplitude_max >= self.amplitude_min) {
            return Err(Error::InvalidArgument("need 0 <= amplitude_min <= amplitude_max".into()));
        }
        let atoms = self.hidden_atoms()?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let gap = Exp::new(self.density).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        let mut placements = Vec::new();
        let mut position = gap.sample(&mut rng);
        loop {
            let atom = rng.random_range(0..atoms.len());
            let offset = position.floor() as usize;
            if offset + atoms[atom].len() > self.length {
                break;
            }
            let magnitude = if self.amplitude_max > self.amplitude_min {
                rng.random_range(self.amplitude_min..self.amplitude_max)
            } else {
                self.amplitude_min
            };
            let amplitude = if rng.random::<bool>() { magnitude } else { -magnitude };
            placements.push(Placement { atom, offset, amplitude });
            position += gap.sample(&mut rng);
        }
        let signal = synth_signal(
            &atoms,
            &placements,
            self.length,
            self.sample_rate,
            self.noise_sigma,
            self.seed.wrapping_add(1),
        )?;
        Ok(SynthOutput {
            signal,
            atoms,
            placements,
        })
    }
}

/// Serves training blocks drawn at seeded uniform random offsets.
#[derive(Debug, Clone)]
pub struct BlockSource {
    source: Signal,
    block_len: usize,
    seed: u64,
    budget: usize,
    carry_residual: bool,
    overlap: f64,
}

impl BlockSource {
    /// Unbounded source with residual carry-over enabled at a 10% overlap.
    pub fn new(source: Signal, block_len: usize, seed: u64) -> Result<Self> {
        if block_len == 0 {
            return Err(Error::InvalidArgument("block_len must be positive".into()));
        }
        if block_len > source.len() {
            return Err(Error::InvalidArgument(format!(
                "block_len {block_len} exceeds source length {}",
                source.len()
            )));
        }
        Ok(BlockSource {
            source,
            block_len,
            seed,
            budget: usize::MAX,
            carry_residual: true,
            overlap: 0.1,
        })
    }

    pub fn with_budget(mut self, blocks: usize) -> Self {
        self.budget = blocks;
        self
    }

    /// `overlap` is the cross-faded fraction of the block, in `[0, 1]`.
    pub fn with_carry(mut self, carry_residual: bool, overlap: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&overlap) {
            return Err(Error::InvalidArgument(format!("overlap must be in [0, 1], got {overlap}")));
        }
        self.carry_residual = carry_residual;
        self.overlap = overlap;
        Ok(self)
    }

    pub fn source(&self) -> &Signal {
        &self.source
    }

    pub fn block_len(&self) -> usize {
        self.block_len
    }

    pub fn budget(&self) -> usize {
        self.budget
    }

    pub fn block_secs(&self) -> f64 {
        self.block_len as f64 / self.source.sample_rate() as f64
    }

    /// Start offset of block `step`; a pure function of `(seed, step)`.
    pub fn block_offset(&self, step: usize) -> usize {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(step as u64);
        rng.random_range(0..=self.source.len() - self.block_len)
    }

    fn overlap_len(&self) -> usize {
        (self.overlap * self.block_len as f64).round() as usize
    }

    /// Block number `step`, or `None` once the budget is used up.
    ///
    /// With residual carry enabled and a previous residual given, the first
    /// `overlap * block_len` samples are raised-cosine cross-faded from the
    /// tail of that residual into the fresh block.
    pub fn next_block(&self, step: usize, prev_residual: Option<&[f64]>) -> Option<Signal> {
        if step >= self.budget {
            return None;
        }
        let start = self.block_offset(step);
        let mut block = self.source.samples[start..start + self.block_len].to_vec();
        if let (true, Some(prev)) = (self.carry_residual, prev_residual) {
            let ov = self.overlap_len().min(prev.len());
            let tail = &prev[prev.len() - ov..];
            for (t, (b, r)) in block.iter_mut().zip(tail).enumerate() {
                let w = 0.5 - 0.5 * (std::f64::consts::PI * (t as f64 + 0.5) / ov as f64).cos();
                *b = w * *b + (1.0 - w) * r;
            }
        }
        Some(Signal {
            samples: block,
            sample_rate: self.source.sample_rate,
        })
    }
}

/// `x + n` with `n ~ N(0, (sigma_ratio * std(x))^2)`, seeded.
pub fn add_noise(x: &Signal, sigma_ratio: f64, seed: u64) -> Result<Signal> {
    if !(sigma_ratio >= 0.0) {
        return Err(Error::InvalidArgument(format!("sigma_ratio must be >= 0, got {sigma_ratio}")));
    }
    if sigma_ratio == 0.0 {
        return Ok(x.clone());
    }
    let sigma_s = x.std();
    if sigma_s == 0.0 {
        return Err(Error::ConstantSignal);
    }
    let sigma_n = sigma_ratio * sigma_s;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples = x
        .samples
        .iter()
        .map(|v| {
            let z: f64 = StandardNormal.sample(&mut rng);
            v + sigma_n * z
        })
        .collect();
    Signal::new(samples, x.sample_rate)
}

/// `10 log10(Σ ref² / Σ (ref - est)²)`; `+inf` for an exact match.
pub fn snr_db(reference: &[f64], estimate: &[f64]) -> Result<f64> {
    if reference.len() != estimate.len() {
        return Err(Error::LengthMismatch(reference.len(), estimate.len()));
    }
    let signal: f64 = reference.iter().map(|v| v * v).sum();
    if signal == 0.0 {
        return Err(Error::ZeroReference);
    }
    let noise: f64 = reference.iter().zip(estimate).map(|(r, e)| (r - e) * (r - e)).sum();
    if noise == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (signal / noise).log10())
}

/// Clamps to `±SNR_CAP_DB` so tables stay finite.
pub fn cap_snr(db: f64) -> f64 {
    db.clamp(-SNR_CAP_DB, SNR_CAP_DB)
}
