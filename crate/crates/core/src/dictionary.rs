//! Atoms and dictionaries.
//!
//! Atoms are raw waveforms with zero tails of `pad_len` samples on each side.
//! Every mutation path ends in [`Atom::extnorm`], which grows a tail when it
//! carries energy and rescales the atom to unit ℓ2 norm.

use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Zero samples on each side of a fresh atom, and the tail growth step.
pub const TAIL_LEN: usize = 10;
/// Gaussian samples in the body of a freshly initialised atom.
pub const INIT_BODY_LEN: usize = 50;
/// A tail grows when its RMS exceeds this fraction of the atom RMS.
pub const TAIL_RMS_RATIO: f64 = 0.1;

pub const FORMAT_VERSION: &str = "shiftdict-dictionary/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    waveform: Vec<f64>,
    pad_len: usize,
}

impl Atom {
    /// Wraps a waveform as-is. Fails on empty or non-finite input.
    pub fn new(waveform: Vec<f64>) -> Result<Self> {
        Self::with_pad(waveform, TAIL_LEN)
    }

    pub fn with_pad(waveform: Vec<f64>, pad_len: usize) -> Result<Self> {
        if waveform.is_empty() {
            return Err(Error::EmptySignal);
        }
        if let Some(i) = waveform.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        if pad_len == 0 {
            return Err(Error::InvalidArgument("pad_len must be positive".into()));
        }
        Ok(Atom { waveform, pad_len })
    }

    /// Wraps and rescales to unit norm.
    pub fn normalized(waveform: Vec<f64>) -> Result<Self> {
        let mut atom = Self::new(waveform)?;
        atom.normalize()?;
        Ok(atom)
    }

    /// Gaussian body of [`INIT_BODY_LEN`] samples between two zero tails,
    /// normalized.
    pub fn random<R: rand::Rng + ?Sized>(rng: &mut R) -> Self {
        let mut waveform = vec![0.0; INIT_BODY_LEN + 2 * TAIL_LEN];
        loop {
            for v in &mut waveform[TAIL_LEN..TAIL_LEN + INIT_BODY_LEN] {
                *v = StandardNormal.sample(rng);
            }
            let mut atom = Atom {
                waveform: waveform.clone(),
                pad_len: TAIL_LEN,
            };
            if atom.normalize().is_ok() {
                return atom;
            }
        }
    }

    pub fn len(&self) -> usize {
        self.waveform.len()
    }

    pub fn is_empty(&self) -> bool {
        self.waveform.is_empty()
    }

    pub fn waveform(&self) -> &[f64] {
        &self.waveform
    }

    pub fn pad_len(&self) -> usize {
        self.pad_len
    }

    pub fn norm(&self) -> f64 {
        self.waveform.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    fn normalize(&mut self) -> Result<()> {
        let norm = self.norm();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::DegenerateAtom);
        }
        for v in &mut self.waveform {
            *v /= norm;
        }
        Ok(())
    }

    fn rms(values: &[f64]) -> f64 {
        (values.iter().map(|v| v * v).sum::<f64>() / values.len() as f64).sqrt()
    }

    /// RMS of the left and right tail regions relative to the RMS of the
    /// whole waveform.
    pub fn tail_ratios(&self) -> (f64, f64) {
        let whole = Self::rms(&self.waveform);
        if whole == 0.0 {
            return (0.0, 0.0);
        }
        let pad = self.pad_len.min(self.waveform.len());
        let left = Self::rms(&self.waveform[..pad]);
        let right = Self::rms(&self.waveform[self.waveform.len() - pad..]);
        (left / whole, right / whole)
    }

    /// Adds `delta` sample-wise. Lengths must agree.
    pub fn add_scaled(&mut self, delta: &[f64], scale: f64) -> Result<()> {
        if delta.len() != self.waveform.len() {
            return Err(Error::LengthMismatch(delta.len(), self.waveform.len()));
        }
        for (v, d) in self.waveform.iter_mut().zip(delta) {
            *v += scale * d;
        }
        if let Some(i) = self.waveform.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(())
    }

    /// Grows each tail by `pad_len` zeros when its RMS exceeds
    /// [`TAIL_RMS_RATIO`] of the atom RMS, then normalizes.
    ///
    /// Growth on a side is skipped when it would push the length past
    /// `max_len`. An identically zero atom yields [`Error::DegenerateAtom`].
    pub fn extnorm(&self, max_len: Option<usize>) -> Result<Atom> {
        if self.waveform.iter().all(|&v| v == 0.0) {
            return Err(Error::DegenerateAtom);
        }
        let cap = max_len.unwrap_or(usize::MAX);
        let pad = self.pad_len;
        let mut atom = self.clone();
        // Padding one side lowers the whole-atom RMS, which can push the
        // other side over the threshold, so re-check until stable. A padded
        // tail is all zeros and never grows again.
        let (mut grew_left, mut grew_right) = (false, false);
        loop {
            let (left, right) = atom.tail_ratios();
            let mut changed = false;
            if !grew_left && left > TAIL_RMS_RATIO && atom.len() + pad <= cap {
                atom.waveform.splice(0..0, std::iter::repeat_n(0.0, pad));
                grew_left = true;
                changed = true;
            }
            if !grew_right && right > TAIL_RMS_RATIO && atom.len() + pad <= cap {
                atom.waveform.resize(atom.len() + pad, 0.0);
                grew_right = true;
                changed = true;
            }
            if !changed {
                break;
            }
        }
        atom.normalize()?;
        Ok(atom)
    }
}

/// Free-function form of [`Atom::extnorm`] without a length cap.
pub fn extnorm(atom: &Atom) -> Result<Atom> {
    atom.extnorm(None)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dictionary {
    atoms: Vec<Atom>,
    pub sample_rate_hint: Option<u32>,
    pub provenance: String,
}

impl Dictionary {
    pub fn new(atoms: Vec<Atom>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::InvalidArgument("dictionary needs at least one atom".into()));
        }
        Ok(Dictionary {
            atoms,
            sample_rate_hint: None,
            provenance: String::new(),
        })
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn atom(&self, index: usize) -> &Atom {
        &self.atoms[index]
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn max_atom_len(&self) -> usize {
        self.atoms.iter().map(Atom::len).max().unwrap_or(0)
    }

    pub fn min_atom_len(&self) -> usize {
        self.atoms.iter().map(Atom::len).min().unwrap_or(0)
    }

    pub(crate) fn replace(&mut self, index: usize, atom: Atom) {
        self.atoms[index] = atom;
    }

    /// Short content hash over atom shapes (not provenance).
    pub fn digest(&self) -> String {
        let mut bytes = Vec::new();
        for atom in &self.atoms {
            bytes.extend_from_slice(&(atom.len() as u64).to_le_bytes());
            for v in &atom.waveform {
                bytes.extend_from_slice(&v.to_bits().to_le_bytes());
            }
        }
        crate::digest_hex(&bytes)
    }

    pub fn to_json(&self) -> Result<String> {
        let file = DictionaryFile {
            format_version: FORMAT_VERSION.to_string(),
            m: self.atoms.len(),
            sample_rate_hint: self.sample_rate_hint,
            provenance: self.provenance.clone(),
            atoms: self.atoms.clone(),
        };
        serde_json::to_string_pretty(&file).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text).map_err(|e| Error::Format(e.to_string()))?;
        let version = value
            .get("format_version")
            .and_then(|v| v.as_str())
            .ok_or_else(|| Error::Format("missing format_version".into()))?;
        if version != FORMAT_VERSION {
            return Err(Error::Version {
                found: version.to_string(),
                expected: FORMAT_VERSION.to_string(),
            });
        }
        let file: DictionaryFile = serde_json::from_value(value).map_err(|e| Error::Format(e.to_string()))?;
        if file.m != file.atoms.len() {
            return Err(Error::Format(format!(
                "header declares {} atoms, found {}",
                file.m,
                file.atoms.len()
            )));
        }
        let atoms = file
            .atoms
            .into_iter()
            .map(|a| Atom::with_pad(a.waveform, a.pad_len))
            .collect::<Result<Vec<_>>>()?;
        let mut dict = Dictionary::new(atoms)?;
        dict.sample_rate_hint = file.sample_rate_hint;
        dict.provenance = file.provenance;
        Ok(dict)
    }
}

#[derive(Serialize, Deserialize)]
struct DictionaryFile {
    format_version: String,
    m: usize,
    sample_rate_hint: Option<u32>,
    provenance: String,
    atoms: Vec<Atom>,
}

/// `M` random atoms of 70 samples each (50 Gaussian, two 10-sample zero
/// tails), unit norm, reproducible from `seed`.
pub fn randdict(m: usize, seed: u64) -> Result<Dictionary> {
    if m == 0 {
        return Err(Error::InvalidArgument("dictionary needs at least one atom".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let atoms = (0..m).map(|_| Atom::random(&mut rng)).collect();
    let mut dict = Dictionary::new(atoms)?;
    dict.provenance = format!("randdict m={m} seed={seed}");
    Ok(dict)
}

pub fn save_dict(dict: &Dictionary, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = dict.to_json()?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_dict(path: impl AsRef<Path>) -> Result<Dictionary> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Dictionary::from_json(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn randdict_shapes_and_norms() {
        let d = randdict(32, 7).unwrap();
        assert_eq!(d.len(), 32);
        for atom in d.atoms() {
            assert_eq!(atom.len(), 70);
            assert!((atom.norm() - 1.0).abs() <= 1e-12);
            assert!(atom.waveform()[..10].iter().all(|&v| v == 0.0));
            assert!(atom.waveform()[60..].iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn randdict_is_deterministic() {
        let a = randdict(8, 99).unwrap();
        let b = randdict(8, 99).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, randdict(8, 100).unwrap());
    }

    #[test]
    fn randdict_rejects_zero_atoms() {
        assert!(matches!(randdict(0, 1), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn extnorm_quiet_tails_keeps_length() {
        let mut w = vec![0.0; 70];
        for (i, v) in w[10..60].iter_mut().enumerate() {
            *v = (i as f64 * 0.3).sin() * 3.0;
        }
        let atom = Atom::new(w).unwrap();
        let out = atom.extnorm(None).unwrap();
        assert_eq!(out.len(), 70);
        assert!((out.norm() - 1.0).abs() <= 1e-12);
        let again = out.extnorm(None).unwrap();
        assert_eq!(again.len(), 70);
        for (a, b) in out.waveform().iter().zip(again.waveform()) {
            assert!((a - b).abs() <= 1e-15);
        }
    }

    #[test]
    fn extnorm_grows_loud_left_tail() {
        // Whole-atom RMS is 1 and the left tail RMS is 0.2, right tail quiet.
        let body = ((70.0 - 10.0 * 0.04) / 50.0f64).sqrt();
        let mut w2 = vec![0.2; 10];
        w2.extend(std::iter::repeat_n(body, 50));
        w2.extend(std::iter::repeat_n(0.0, 10));
        let atom = Atom::new(w2).unwrap();
        let whole = (atom.waveform().iter().map(|v| v * v).sum::<f64>() / 70.0).sqrt();
        assert!((whole - 1.0).abs() < 1e-12);
        let (l, r) = atom.tail_ratios();
        assert!((l - 0.2).abs() < 1e-12);
        assert_eq!(r, 0.0);
        let out = atom.extnorm(None).unwrap();
        assert_eq!(out.len(), 80);
        assert!(out.waveform()[..10].iter().all(|&v| v == 0.0));
        assert!((out.waveform()[10] - 0.2 / 70f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn extnorm_respects_cap() {
        let atom = Atom::new(vec![1.0; 30]).unwrap();
        assert_eq!(atom.extnorm(None).unwrap().len(), 50);
        assert_eq!(atom.extnorm(Some(40)).unwrap().len(), 40);
        assert_eq!(atom.extnorm(Some(30)).unwrap().len(), 30);
    }

    #[test]
    fn extnorm_zero_atom_is_degenerate() {
        let atom = Atom::new(vec![0.0; 70]).unwrap();
        assert!(matches!(atom.extnorm(None), Err(Error::DegenerateAtom)));
    }

    #[test]
    fn json_roundtrip_is_exact() {
        let mut d = randdict(5, 3).unwrap();
        d.sample_rate_hint = Some(44100);
        let text = d.to_json().unwrap();
        let back = Dictionary::from_json(&text).unwrap();
        assert_eq!(back, d);
        assert_eq!(back.digest(), d.digest());
    }

    #[test]
    fn corrupt_file_is_a_format_error() {
        assert!(matches!(Dictionary::from_json("{ not json"), Err(Error::Format(_))));
        let d = randdict(2, 1).unwrap();
        let text = d.to_json().unwrap().replace(FORMAT_VERSION, "shiftdict-dictionary/0");
        assert!(matches!(Dictionary::from_json(&text), Err(Error::Version { .. })));
        let text = d.to_json().unwrap().replace("\"m\": 2", "\"m\": 3");
        assert!(matches!(Dictionary::from_json(&text), Err(Error::Format(_))));
    }
}
