//! Versioned profile store laid out like a commit log:
//!
//! ```text
//! profiles/<character>/store.json          segments in profile order
//! profiles/<character>/v0/<segment>.cpl    initial programs
//! profiles/<character>/v1/<segment>.cpl    full snapshot after revision 1
//! profiles/<character>/revisions.jsonl     one Revision per line
//! ```

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codifier::{CodifiedSegment, Segment};
use crate::dsl::{self, render_diagnostics, Program};
use crate::oracles::NliRelation;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Revision {
    pub version: u64,
    pub scene_id: String,
    pub blamed_segment: String,
    pub issue: NliRelation,
    pub old_source: String,
    pub new_source: String,
    pub rationale: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Provenance {
    Initial,
    Revision(Revision),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProfileVersion {
    pub version: u64,
    /// `(segment id, source)` in profile order.
    pub sources: Vec<(String, String)>,
    pub provenance: Provenance,
}

impl ProfileVersion {
    pub fn source(&self, segment_id: &str) -> Option<&str> {
        self.sources
            .iter()
            .find(|(id, _)| id == segment_id)
            .map(|(_, s)| s.as_str())
    }

    pub fn programs(&self) -> Result<Vec<Program>, StoreError> {
        self.sources
            .iter()
            .map(|(id, src)| {
                dsl::parse(src, id)
                    .map_err(|d| StoreError::Corrupt(format!("v{} {id}:\n{}", self.version, render_diagnostics(&d))))
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoreMeta {
    pub character: String,
    #[serde(default)]
    pub artifact: String,
    pub segments: Vec<Segment>,
}

impl StoreMeta {
    /// Metadata and version-0 sources for a freshly codified profile.
    pub fn from_codified(
        character: &str,
        artifact: &str,
        codified: &[CodifiedSegment],
    ) -> (StoreMeta, Vec<(String, String)>) {
        let meta = StoreMeta {
            character: character.to_string(),
            artifact: artifact.to_string(),
            segments: codified.iter().map(|c| c.segment.clone()).collect(),
        };
        let sources = codified
            .iter()
            .map(|c| (c.segment.id.clone(), c.source.clone()))
            .collect();
        (meta, sources)
    }
}

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("corrupt store: {0}")]
    Corrupt(String),
    #[error("invalid revision: {0}")]
    InvalidRevision(String),
    #[error("no profile store for {0}")]
    Missing(String),
}

/// `profiles_dir/<character, lowercased>`.
pub fn store_dir(profiles_dir: &Path, character: &str) -> PathBuf {
    profiles_dir.join(character.to_lowercase())
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// All versions of one character's codified profile. Kept in memory and,
/// when opened from or created in a directory, mirrored to disk on every
/// commit.
#[derive(Clone, Debug)]
pub struct VersionStore {
    dir: Option<PathBuf>,
    meta: StoreMeta,
    versions: Vec<ProfileVersion>,
}

impl VersionStore {
    /// A store with only version 0, not backed by disk.
    pub fn in_memory(meta: StoreMeta, initial: Vec<(String, String)>) -> Result<Self, StoreError> {
        let store = Self {
            dir: None,
            meta,
            versions: vec![ProfileVersion {
                version: 0,
                sources: initial,
                provenance: Provenance::Initial,
            }],
        };
        store.check_initial()?;
        Ok(store)
    }

    /// Creates `profiles_dir/<character>/` with version 0. Any existing
    /// store for the character is replaced.
    pub fn create(profiles_dir: &Path, meta: StoreMeta, initial: Vec<(String, String)>) -> Result<Self, StoreError> {
        let mut store = Self::in_memory(meta, initial)?;
        let dir = store_dir(profiles_dir, &store.meta.character);
        if dir.exists() {
            std::fs::remove_dir_all(&dir).map_err(io(&dir))?;
        }
        std::fs::create_dir_all(&dir).map_err(io(&dir))?;
        let meta_path = dir.join("store.json");
        std::fs::write(&meta_path, serde_json::to_string_pretty(&store.meta).unwrap()).map_err(io(&meta_path))?;
        let rev_path = dir.join("revisions.jsonl");
        std::fs::write(&rev_path, "").map_err(io(&rev_path))?;
        store.dir = Some(dir);
        store.write_version(&store.versions[0])?;
        Ok(store)
    }

    pub fn open(profiles_dir: &Path, character: &str) -> Result<Self, StoreError> {
        let dir = store_dir(profiles_dir, character);
        let meta_path = dir.join("store.json");
        if !meta_path.exists() {
            return Err(StoreError::Missing(character.to_string()));
        }
        let meta: StoreMeta = serde_json::from_str(&std::fs::read_to_string(&meta_path).map_err(io(&meta_path))?)
            .map_err(|e| StoreError::Corrupt(format!("{}: {e}", meta_path.display())))?;
        let initial = read_version_dir(&dir.join("v0"), &meta)?;
        let mut store = Self::in_memory(meta, initial)?;

        let rev_path = dir.join("revisions.jsonl");
        let text = std::fs::read_to_string(&rev_path).map_err(io(&rev_path))?;
        for (n, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let rev: Revision = serde_json::from_str(line)
                .map_err(|e| StoreError::Corrupt(format!("{} line {}: {e}", rev_path.display(), n + 1)))?;
            let next = store.apply(rev)?;
            let on_disk = read_version_dir(&dir.join(format!("v{}", next.version)), &store.meta)?;
            if on_disk != next.sources {
                return Err(StoreError::Corrupt(format!(
                    "v{} on disk does not match its revision",
                    next.version
                )));
            }
            store.versions.push(next);
        }
        store.dir = Some(dir);
        Ok(store)
    }

    /// Characters with a store under `profiles_dir`, sorted.
    pub fn list(profiles_dir: &Path) -> Vec<String> {
        let mut out: Vec<String> = std::fs::read_dir(profiles_dir)
            .into_iter()
            .flatten()
            .flatten()
            .filter_map(|e| std::fs::read_to_string(e.path().join("store.json")).ok())
            .filter_map(|text| serde_json::from_str::<StoreMeta>(&text).ok())
            .map(|m| m.character)
            .collect();
        out.sort();
        out
    }

    /// The same history, no longer written back to disk.
    pub fn detach(mut self) -> Self {
        self.dir = None;
        self
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    pub fn meta(&self) -> &StoreMeta {
        &self.meta
    }

    pub fn character(&self) -> &str {
        &self.meta.character
    }

    pub fn versions(&self) -> &[ProfileVersion] {
        &self.versions
    }

    pub fn current(&self) -> &ProfileVersion {
        self.versions.last().expect("store always has version 0")
    }

    pub fn version(&self, n: u64) -> Option<&ProfileVersion> {
        self.versions.get(n as usize)
    }

    pub fn segment(&self, id: &str) -> Option<&Segment> {
        self.meta.segments.iter().find(|s| s.id == id)
    }

    pub fn revisions(&self) -> Vec<&Revision> {
        self.versions
            .iter()
            .filter_map(|v| match &v.provenance {
                Provenance::Revision(r) => Some(r),
                Provenance::Initial => None,
            })
            .collect()
    }

    fn check_initial(&self) -> Result<(), StoreError> {
        let v0 = &self.versions[0];
        let ids: Vec<&str> = v0.sources.iter().map(|(id, _)| id.as_str()).collect();
        let seg_ids: Vec<&str> = self.meta.segments.iter().map(|s| s.id.as_str()).collect();
        if ids != seg_ids {
            return Err(StoreError::Corrupt(format!(
                "v0 segments {ids:?} do not match profile segments {seg_ids:?}"
            )));
        }
        v0.programs()?;
        Ok(())
    }

    /// Builds the version a revision would produce, validating it against
    /// the current head.
    fn apply(&self, rev: Revision) -> Result<ProfileVersion, StoreError> {
        let head = self.current();
        if rev.version != head.version + 1 {
            return Err(StoreError::InvalidRevision(format!(
                "expected version {}, got {}",
                head.version + 1,
                rev.version
            )));
        }
        if rev.issue == NliRelation::Entailed {
            return Err(StoreError::InvalidRevision("entailed scenes are not revised".into()));
        }
        let Some(old) = head.source(&rev.blamed_segment) else {
            return Err(StoreError::InvalidRevision(format!(
                "unknown segment {}",
                rev.blamed_segment
            )));
        };
        if old != rev.old_source {
            return Err(StoreError::InvalidRevision(
                "old_source does not match the current version".into(),
            ));
        }
        if rev.new_source == rev.old_source {
            return Err(StoreError::InvalidRevision("revision changes nothing".into()));
        }
        dsl::parse(&rev.new_source, &rev.blamed_segment).map_err(|d| {
            StoreError::InvalidRevision(format!("new source does not parse:\n{}", render_diagnostics(&d)))
        })?;
        let sources = head
            .sources
            .iter()
            .map(|(id, src)| {
                if *id == rev.blamed_segment {
                    (id.clone(), rev.new_source.clone())
                } else {
                    (id.clone(), src.clone())
                }
            })
            .collect();
        Ok(ProfileVersion {
            version: rev.version,
            sources,
            provenance: Provenance::Revision(rev),
        })
    }

    /// Appends a revision as the next version. The store is left untouched
    /// if the revision is invalid or cannot be written.
    pub fn commit(&mut self, rev: Revision) -> Result<&ProfileVersion, StoreError> {
        let next = self.apply(rev.clone())?;
        if let Some(dir) = &self.dir {
            self.write_version(&next)?;
            let path = dir.join("revisions.jsonl");
            let mut f = std::fs::OpenOptions::new()
                .append(true)
                .open(&path)
                .map_err(io(&path))?;
            let mut line = serde_json::to_string(&rev).unwrap();
            line.push('\n');
            f.write_all(line.as_bytes()).map_err(io(&path))?;
        }
        self.versions.push(next);
        Ok(self.current())
    }

    fn write_version(&self, v: &ProfileVersion) -> Result<(), StoreError> {
        let Some(dir) = &self.dir else { return Ok(()) };
        let vdir = dir.join(format!("v{}", v.version));
        std::fs::create_dir_all(&vdir).map_err(io(&vdir))?;
        for (id, src) in &v.sources {
            let path = vdir.join(format!("{id}.cpl"));
            std::fs::write(&path, src).map_err(io(&path))?;
        }
        Ok(())
    }

    /// Rebuilds every version from version 0 and the revision log.
    pub fn replay(&self) -> Result<Vec<ProfileVersion>, StoreError> {
        let mut replayed = Self {
            dir: None,
            meta: self.meta.clone(),
            versions: vec![self.versions[0].clone()],
        };
        for rev in self.revisions() {
            replayed.commit(rev.clone())?;
        }
        Ok(replayed.versions)
    }
}

fn read_version_dir(vdir: &Path, meta: &StoreMeta) -> Result<Vec<(String, String)>, StoreError> {
    meta.segments
        .iter()
        .map(|s| {
            let path = vdir.join(format!("{}.cpl", s.id));
            let src = std::fs::read_to_string(&path).map_err(io(&path))?;
            Ok((s.id.clone(), src))
        })
        .collect()
}

/// Segment ids whose sources differ between two versions.
pub fn changed_segments(a: &ProfileVersion, b: &ProfileVersion) -> Vec<String> {
    a.sources
        .iter()
        .zip(&b.sources)
        .filter(|((_, x), (_, y))| x != y)
        .map(|((id, _), _)| id.clone())
        .collect()
}
