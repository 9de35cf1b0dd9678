//! On-disk layout:
//!
//! ```text
//! <dir>/entries.jsonl        append-only event log (publish, branch, rating, checkpoint)
//! <dir>/genomes/<id>.cppn    canonical genome text
//! <dir>/images/<id>.png      rendered image
//! ```
//!
//! Sidecar files are written (via rename) before the publish event is
//! appended and synced, so a reader never sees an entry whose files are missing.

use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{ArchiveError, EntryId};
use crate::cppn::Genome;

pub const LOG_FILE: &str = "entries.jsonl";
pub const GENOME_DIR: &str = "genomes";
pub const IMAGE_DIR: &str = "images";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntryRecord {
    pub id: EntryId,
    pub title: String,
    pub color_mode: bool,
    pub parent_id: Option<EntryId>,
    pub agent_id: String,
    #[serde(default)]
    pub rationale: String,
    pub genome_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "lowercase")]
pub enum Event {
    Publish { entry: EntryRecord },
    Branch { id: EntryId },
    Rating { id: EntryId, score: u8, rater: String },
    Checkpoint { label: String, value: u64 },
}

#[derive(Debug)]
pub struct Store {
    dir: PathBuf,
    log: File,
}

fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_data()?;
    }
    fs::rename(tmp, path)
}

/// Parses the log. A torn final line (crash mid-append) is dropped; torn
/// lines elsewhere are corruption. Returns events with 1-based line numbers
/// and the byte length of the valid prefix.
fn read_log(path: &Path) -> Result<(Vec<(usize, Event)>, u64), ArchiveError> {
    let mut events = Vec::new();
    let mut valid_len = 0u64;
    let Ok(file) = File::open(path) else {
        return Ok((events, 0));
    };
    let mut reader = BufReader::new(file);
    let mut line = String::new();
    let mut number = 0;
    loop {
        line.clear();
        let read = reader.read_line(&mut line)?;
        if read == 0 {
            break;
        }
        number += 1;
        let complete = line.ends_with('\n');
        let trimmed = line.trim();
        if trimmed.is_empty() {
            valid_len += read as u64;
            continue;
        }
        match (serde_json::from_str::<Event>(trimmed), complete) {
            (Ok(ev), true) => {
                events.push((number, ev));
                valid_len += read as u64;
            }
            (_, false) => break,
            (Err(e), true) => {
                return Err(ArchiveError::Corrupt {
                    line: number,
                    message: e.to_string(),
                })
            }
        }
    }
    Ok((events, valid_len))
}

impl Store {
    pub fn open(dir: &Path) -> Result<(Store, Vec<(usize, Event)>), ArchiveError> {
        fs::create_dir_all(dir.join(GENOME_DIR))?;
        fs::create_dir_all(dir.join(IMAGE_DIR))?;
        let path = dir.join(LOG_FILE);
        let (events, valid_len) = read_log(&path)?;
        let log = OpenOptions::new().create(true).append(true).open(&path)?;
        if log.metadata()?.len() != valid_len {
            log.set_len(valid_len)?;
        }
        Ok((
            Store {
                dir: dir.to_path_buf(),
                log,
            },
            events,
        ))
    }

    /// Truncates the log after the last checkpoint with `label` and removes
    /// sidecar files of entries published after it.
    pub fn rewind_to_checkpoint(dir: &Path, label: &str) -> Result<Option<u64>, ArchiveError> {
        let path = dir.join(LOG_FILE);
        let (events, _) = read_log(&path)?;
        let cut = events.iter().rposition(
            |(_, e)| matches!(e, Event::Checkpoint { label: l, .. } if l == label),
        );
        let (keep, value) = match cut {
            Some(i) => match &events[i].1 {
                Event::Checkpoint { value, .. } => (i + 1, Some(*value)),
                _ => unreachable!(),
            },
            None => (0, None),
        };
        if keep == events.len() {
            return Ok(value);
        }
        let mut text = String::new();
        for (_, e) in &events[..keep] {
            text.push_str(&serde_json::to_string(e).expect("event serializes"));
            text.push('\n');
        }
        for (_, e) in &events[keep..] {
            if let Event::Publish { entry } = e {
                let _ = fs::remove_file(genome_path(dir, entry.id));
                let _ = fs::remove_file(image_path(dir, entry.id));
            }
        }
        write_atomic(&path, text.as_bytes())?;
        Ok(value)
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn append(&mut self, event: &Event) -> Result<(), ArchiveError> {
        let mut line = serde_json::to_string(event).expect("event serializes");
        line.push('\n');
        self.log.write_all(line.as_bytes())?;
        self.log.sync_data()?;
        Ok(())
    }

    pub fn write_genome(&self, id: EntryId, genome: &Genome) -> Result<(), ArchiveError> {
        Ok(write_atomic(
            &genome_path(&self.dir, id),
            genome.to_canonical_text().as_bytes(),
        )?)
    }

    pub fn write_image(&self, id: EntryId, png: &[u8]) -> Result<(), ArchiveError> {
        Ok(write_atomic(&image_path(&self.dir, id), png)?)
    }

    pub fn read_genome(&self, id: EntryId) -> Result<Genome, ArchiveError> {
        let text = fs::read_to_string(genome_path(&self.dir, id))?;
        Ok(Genome::from_canonical_text(&text)?)
    }

    pub fn read_image(&self, id: EntryId) -> Result<Arc<[u8]>, ArchiveError> {
        Ok(fs::read(image_path(&self.dir, id))?.into())
    }
}

pub fn genome_path(dir: &Path, id: EntryId) -> PathBuf {
    dir.join(GENOME_DIR).join(format!("{id}.cppn"))
}

pub fn image_path(dir: &Path, id: EntryId) -> PathBuf {
    dir.join(IMAGE_DIR).join(format!("{id}.png"))
}
