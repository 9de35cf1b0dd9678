use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Deserializer, Serialize};

use super::OrchestratorError;
use crate::archive::{Archive, ArchiveError, ArchiveView, EntryId};
use crate::cppn::{decode_png, Genome};

/// File name of the lineage index inside a lineage directory.
pub const LINEAGE_FILE: &str = "lineage.jsonl";

fn id_string<'de, D: Deserializer<'de>>(d: D) -> Result<String, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        N(u64),
        S(String),
    }
    Ok(match Raw::deserialize(d)? {
        Raw::N(n) => n.to_string(),
        Raw::S(s) => s,
    })
}

fn opt_id_string<'de, D: Deserializer<'de>>(d: D) -> Result<Option<String>, D::Error> {
    #[derive(Deserialize)]
    struct Wrap(#[serde(deserialize_with = "id_string")] String);
    Ok(Option::<Wrap>::deserialize(d)?.map(|w| w.0))
}

/// One line of a lineage file. Paths are relative to the file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineageRecord {
    #[serde(deserialize_with = "id_string")]
    pub id: String,
    #[serde(default, deserialize_with = "opt_id_string", skip_serializing_if = "Option::is_none")]
    pub parent: Option<String>,
    /// Publication order; positions are assigned by sorting on it.
    pub order: i64,
    pub image: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub genome: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub title: Option<String>,
}

/// A historical lineage loaded from disk, readable by every metric.
#[derive(Debug)]
pub struct IngestedArchive {
    dir: PathBuf,
    records: Vec<LineageRecord>,
    parents: Vec<Option<usize>>,
    genomes: Vec<Option<Genome>>,
}

fn lineage_err(line: usize, message: impl Into<String>) -> OrchestratorError {
    OrchestratorError::Lineage {
        line,
        message: message.into(),
    }
}

impl IngestedArchive {
    /// Parses and validates `dir/lineage.jsonl`. Errors carry the 1-based
    /// line number of the offending record.
    pub fn open(dir: &Path) -> Result<IngestedArchive, OrchestratorError> {
        Self::open_file(&dir.join(LINEAGE_FILE))
    }

    pub fn open_file(file: &Path) -> Result<IngestedArchive, OrchestratorError> {
        let dir = file.parent().unwrap_or(Path::new(".")).to_path_buf();
        let text = fs::read_to_string(file)?;
        let mut lines = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            if raw.trim().is_empty() {
                continue;
            }
            let rec: LineageRecord =
                serde_json::from_str(raw).map_err(|e| lineage_err(i + 1, e.to_string()))?;
            lines.push((i + 1, rec));
        }
        let mut seen: HashMap<String, usize> = HashMap::new();
        let mut orders: HashMap<i64, usize> = HashMap::new();
        for (line, rec) in &lines {
            if let Some(first) = seen.insert(rec.id.clone(), *line) {
                return Err(lineage_err(*line, format!("id {:?} already used on line {first}", rec.id)));
            }
            if let Some(first) = orders.insert(rec.order, *line) {
                return Err(lineage_err(*line, format!("order {} already used on line {first}", rec.order)));
            }
        }
        lines.sort_by_key(|(_, r)| r.order);
        let position: HashMap<&str, usize> =
            lines.iter().enumerate().map(|(p, (_, r))| (r.id.as_str(), p)).collect();
        let mut parents = Vec::with_capacity(lines.len());
        let mut genomes = Vec::with_capacity(lines.len());
        for (p, (line, rec)) in lines.iter().enumerate() {
            let parent = match &rec.parent {
                None => None,
                Some(pid) => match position.get(pid.as_str()) {
                    Some(&q) if q < p => Some(q),
                    Some(_) => return Err(lineage_err(*line, format!("parent {pid:?} is not published earlier"))),
                    None => return Err(lineage_err(*line, format!("unknown parent {pid:?}"))),
                },
            };
            parents.push(parent);
            if !dir.join(&rec.image).is_file() {
                return Err(lineage_err(*line, format!("missing image {}", rec.image)));
            }
            genomes.push(match &rec.genome {
                None => None,
                Some(g) => {
                    let text = fs::read_to_string(dir.join(g))
                        .map_err(|e| lineage_err(*line, format!("genome {g}: {e}")))?;
                    Some(Genome::from_canonical_text(&text).map_err(|e| lineage_err(*line, e.to_string()))?)
                }
            });
        }
        Ok(IngestedArchive {
            dir,
            records: lines.into_iter().map(|(_, r)| r).collect(),
            parents,
            genomes,
        })
    }

    pub fn records(&self) -> &[LineageRecord] {
        &self.records
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }
}

impl ArchiveView for IngestedArchive {
    fn len(&self) -> usize {
        self.records.len()
    }

    fn parent_position(&self, position: usize) -> Option<usize> {
        self.parents[position]
    }

    fn image_png(&self, position: usize) -> Result<Arc<[u8]>, ArchiveError> {
        let rec = self
            .records
            .get(position)
            .ok_or(ArchiveError::UnknownEntry(EntryId(position as u64)))?;
        Ok(fs::read(self.dir.join(&rec.image))?.into())
    }

    fn genome_at(&self, position: usize) -> Option<&Genome> {
        self.genomes.get(position)?.as_ref()
    }

    fn cache_key(&self, position: usize) -> String {
        self.records[position].id.clone()
    }
}

fn write_normalized(
    out: &Path,
    view: &dyn ArchiveView,
    records: impl Iterator<Item = (String, Option<String>, Option<String>)>,
) -> Result<(), OrchestratorError> {
    fs::create_dir_all(out.join("images"))?;
    fs::create_dir_all(out.join("genomes"))?;
    let mut index = String::new();
    for (p, (id, parent, title)) in records.enumerate() {
        let png = view.image_png(p)?;
        decode_png(&png)?;
        let image = format!("images/{p:06}.png");
        fs::write(out.join(&image), &png)?;
        let genome = match view.genome_at(p) {
            Some(g) => {
                let name = format!("genomes/{p:06}.txt");
                fs::write(out.join(&name), g.to_canonical_text())?;
                Some(name)
            }
            None => None,
        };
        let rec = LineageRecord {
            id,
            parent,
            order: p as i64,
            image,
            genome,
            title,
        };
        index.push_str(&serde_json::to_string(&rec)?);
        index.push('\n');
    }
    fs::write(out.join(LINEAGE_FILE), index)?;
    Ok(())
}

/// Validates a lineage file and copies it into `out` in normalized form
/// (order = position, images and genomes renamed by position).
pub fn ingest_lineage(file: &Path, out: &Path) -> Result<IngestedArchive, OrchestratorError> {
    let src = IngestedArchive::open_file(file)?;
    let meta: Vec<_> = src
        .records
        .iter()
        .map(|r| (r.id.clone(), r.parent.clone(), r.title.clone()))
        .collect();
    write_normalized(out, &src, meta.into_iter())?;
    IngestedArchive::open(out)
}

/// Writes a live archive in the lineage format the ingester reads.
pub fn export_lineage(archive: &Archive, out: &Path) -> Result<(), OrchestratorError> {
    let meta = archive
        .entries()
        .iter()
        .map(|e| (e.id.to_string(), e.parent_id.map(|p| p.to_string()), Some(e.title.clone())));
    write_normalized(out, archive, meta)
}
