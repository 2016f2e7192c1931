//! Line-delimited JSON utterance manifests.
//!
//! Each line is one record:
//!
//! ```text
//! {"utt_id":"a1","audio":"wav/a1.wav","transcript":"one two"}
//! {"utt_id":"s7","synth":{"words":["three"],"seed":7},"transcript":"three"}
//! ```
//!
//! Relative audio paths resolve against the manifest's directory.

use std::collections::HashSet;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frontend::{featurize, read_wav, FeatureSequence, SynthConfig, SynthTask};
use crate::training::Utterance;
use crate::wordpiece::{normalize_whitespace, WordpieceVocab};

/// Recipe for a synthetic spoken-digit utterance.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    pub words: Vec<String>,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestRecord {
    pub utt_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub audio: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synth: Option<SynthSpec>,
    pub transcript: String,
}

/// Validated manifest: unique ids, non-empty transcripts, one source per
/// record and audio files that exist.
#[derive(Clone, Debug, PartialEq)]
pub struct Manifest {
    records: Vec<ManifestRecord>,
    base_dir: PathBuf,
}

impl Manifest {
    pub fn new(records: Vec<ManifestRecord>, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let base_dir = base_dir.into();
        let mut seen = HashSet::new();
        for r in &records {
            if r.utt_id.is_empty() || r.utt_id.contains(|c: char| c.is_whitespace() || c == '/' || c == '\\') {
                return Err(Error::Input(format!("utt_id {:?} must be non-empty without whitespace or path separators", r.utt_id)));
            }
            if !seen.insert(r.utt_id.as_str()) {
                return Err(Error::Input(format!("duplicate utt_id {:?}", r.utt_id)));
            }
            if r.transcript.trim().is_empty() {
                return Err(Error::Input(format!("{}: empty transcript", r.utt_id)));
            }
            match (&r.audio, &r.synth) {
                (Some(a), None) => {
                    let path = base_dir.join(a);
                    if !path.is_file() {
                        return Err(Error::Input(format!("{}: audio file {} does not exist", r.utt_id, path.display())));
                    }
                }
                (None, Some(s)) if !s.words.is_empty() => {}
                (None, Some(_)) => return Err(Error::Input(format!("{}: synthetic spec has no words", r.utt_id))),
                _ => return Err(Error::Input(format!("{}: exactly one of `audio` or `synth` is required", r.utt_id))),
            }
        }
        Ok(Manifest { records, base_dir })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = fs::File::open(path).map_err(|e| Error::Input(format!("cannot open manifest {}: {e}", path.display())))?;
        let mut records = Vec::new();
        for (n, line) in BufReader::new(file).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: ManifestRecord = serde_json::from_str(&line)
                .map_err(|e| Error::Parse(format!("{} line {}: {e}", path.display(), n + 1)))?;
            records.push(rec);
        }
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Manifest::new(records, base)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = fs::File::create(path)?;
        for r in &self.records {
            writeln!(f, "{}", serde_json::to_string(r)?)?;
        }
        Ok(())
    }

    pub fn records(&self) -> &[ManifestRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Normalized transcripts in manifest order.
    pub fn transcripts(&self) -> Vec<String> {
        self.records.iter().map(|r| normalize_whitespace(&r.transcript)).collect()
    }

    /// Stacked log-mel features for one record. Synthetic records are
    /// rendered with the digit task under `synth`.
    pub fn features(&self, rec: &ManifestRecord, synth: &SynthConfig) -> Result<FeatureSequence> {
        match (&rec.audio, &rec.synth) {
            (Some(a), _) => featurize(&read_wav(&self.base_dir.join(a))?),
            (None, Some(s)) => Ok(SynthTask::digits(synth.clone()).synth_utterance(&s.words, s.seed)?.0),
            (None, None) => Err(Error::Input(format!("{}: no audio source", rec.utt_id))),
        }
    }

    /// Featurize and segment every record.
    pub fn utterances(&self, vocab: &WordpieceVocab, synth: &SynthConfig) -> Result<Vec<Utterance>> {
        self.records
            .par_iter()
            .map(|r| {
                let transcript = normalize_whitespace(&r.transcript);
                let seg = vocab.segment(&transcript);
                if !seg.unknown.is_empty() {
                    log::warn!("{}: characters {:?} are outside the vocabulary", r.utt_id, seg.unknown);
                }
                Ok(Utterance { id: r.utt_id.clone(), features: self.features(r, synth)?.to_tensor(), tokens: seg.ids, transcript })
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::{write_wav, Waveform};

    fn synth(id: &str, words: &[&str]) -> ManifestRecord {
        ManifestRecord {
            utt_id: id.into(),
            audio: None,
            synth: Some(SynthSpec { words: words.iter().map(|w| w.to_string()).collect(), seed: 3 }),
            transcript: words.join(" "),
        }
    }

    #[test]
    fn round_trip_and_features() {
        let dir = tempfile::tempdir().unwrap();
        let wav = Waveform::new((0..1600).map(|i| (i as f64 * 0.05).sin() * 0.1).collect(), 16_000).unwrap();
        write_wav(&dir.path().join("a.wav"), &wav).unwrap();
        let audio = ManifestRecord { utt_id: "a".into(), audio: Some("a.wav".into()), synth: None, transcript: "one".into() };
        let m = Manifest::new(vec![audio, synth("b", &["two", "three"])], dir.path()).unwrap();
        let path = dir.path().join("m.jsonl");
        m.save(&path).unwrap();
        let back = Manifest::load(&path).unwrap();
        assert_eq!(back, m);
        let f = back.features(&back.records()[0], &SynthConfig::default()).unwrap();
        assert_eq!(f.dim(), 320);
        let f = back.features(&back.records()[1], &SynthConfig::default()).unwrap();
        assert_eq!(f.num_frames(), 2 * 3 + 2);
    }

    #[test]
    fn invalid_manifests_are_data_errors() {
        let dir = tempfile::tempdir().unwrap();
        let dup = vec![synth("x", &["one"]), synth("x", &["two"])];
        let empty = vec![ManifestRecord { transcript: "  ".into(), ..synth("x", &["one"]) }];
        let missing = vec![ManifestRecord { audio: Some("nope.wav".into()), synth: None, ..synth("x", &["one"]) }];
        let both = vec![ManifestRecord { audio: Some("nope.wav".into()), ..synth("x", &["one"]) }];
        let bad_id = vec![synth("a b", &["one"])];
        for records in [dup, empty, missing, both, bad_id] {
            let err = Manifest::new(records, dir.path()).unwrap_err();
            assert_eq!(err.exit_code(), 3, "{err}");
        }
        let path = dir.path().join("bad.jsonl");
        fs::write(&path, "{\"utt_id\": 3}\n").unwrap();
        assert!(matches!(Manifest::load(&path), Err(Error::Parse(_))));
        assert!(matches!(Manifest::load(&dir.path().join("absent.jsonl")), Err(Error::Input(_))));
    }
}
