//! Corpus layout `<root>/<speaker_id>/*.wav`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dsp::{read_wav, Waveform};
use crate::error::{Error, Result};

/// Which clip of each speaker is held out for mixing.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitRule {
    /// The lexicographically last file is the test clip.
    #[default]
    LastIsTest,
    /// The file with this name is the test clip in every speaker directory.
    Named(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Speaker {
    pub id: String,
    pub train: Vec<PathBuf>,
    pub test: PathBuf,
}

impl Speaker {
    pub fn load_train(&self) -> Result<Vec<Waveform>> {
        self.train.iter().map(read_wav).collect()
    }

    pub fn load_test(&self) -> Result<Waveform> {
        read_wav(&self.test)
    }
}

/// Speakers sorted by id, each with sorted clip lists.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub root: PathBuf,
    pub speakers: Vec<Speaker>,
}

fn corpus_error(path: &Path, reason: impl Into<String>) -> Error {
    Error::Corpus {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

fn is_wav(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("wav"))
}

/// Scans the corpus. Every subdirectory of `root` is a speaker and must
/// contain at least two WAV files; anything else directly under `root` is
/// ignored with a warning.
pub fn load_corpus(root: impl AsRef<Path>, split: &SplitRule) -> Result<Corpus> {
    let root = root.as_ref();
    if !root.is_dir() {
        return Err(corpus_error(root, "corpus root is not a directory"));
    }
    let mut speaker_dirs = Vec::new();
    for entry in fs::read_dir(root)? {
        let path = entry?.path();
        if path.is_dir() {
            speaker_dirs.push(path);
        } else {
            log::warn!("ignoring non-directory {}", path.display());
        }
    }
    speaker_dirs.sort();

    let mut speakers = Vec::with_capacity(speaker_dirs.len());
    for dir in speaker_dirs {
        let mut clips = Vec::new();
        for entry in fs::read_dir(&dir)? {
            let path = entry?.path();
            if path.is_file() && is_wav(&path) {
                clips.push(path);
            } else {
                log::warn!("ignoring {}", path.display());
            }
        }
        clips.sort();
        if clips.len() < 2 {
            return Err(corpus_error(
                &dir,
                format!("needs at least two WAV files, found {}", clips.len()),
            ));
        }
        let test_index = match split {
            SplitRule::LastIsTest => clips.len() - 1,
            SplitRule::Named(name) => clips
                .iter()
                .position(|p| p.file_name().is_some_and(|f| f == name.as_str()))
                .ok_or_else(|| corpus_error(&dir, format!("test clip {name:?} not found")))?,
        };
        let test = clips.remove(test_index);
        let id = dir
            .file_name()
            .and_then(|n| n.to_str())
            .ok_or_else(|| corpus_error(&dir, "speaker directory name is not valid UTF-8"))?
            .to_string();
        speakers.push(Speaker { id, train: clips, test });
    }
    if speakers.len() < 2 {
        return Err(corpus_error(
            root,
            format!("needs at least two speakers, found {}", speakers.len()),
        ));
    }
    Ok(Corpus {
        root: root.to_path_buf(),
        speakers,
    })
}
