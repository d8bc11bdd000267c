use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::IngestError;
use crate::dataset::taxonomy::Language;
use crate::hashing::sha256_hex;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    /// Hex SHA-256 of the file contents.
    pub doc_id: String,
    pub path: PathBuf,
    pub page_count: u32,
    pub language: Language,
    pub license_tag: Option<String>,
    pub byte_size: u64,
}

/// Reads the PDF catalog for the page count. Language defaults to English
/// and the license to none; manifest loading overrides both.
pub fn load_document(path: &Path) -> Result<Document, IngestError> {
    let bytes = fs::read(path).map_err(|source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    if bytes.is_empty() {
        return Err(IngestError::MalformedDocument {
            path: path.to_path_buf(),
            reason: "file is empty".into(),
        });
    }
    let pdf = lopdf::Document::load_mem(&bytes).map_err(|e| IngestError::MalformedDocument {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    let page_count = pdf.get_pages().len() as u32;
    if page_count == 0 {
        return Err(IngestError::EmptyDocument {
            path: path.to_path_buf(),
        });
    }
    Ok(Document {
        doc_id: sha256_hex(&bytes),
        path: path.to_path_buf(),
        page_count,
        language: Language::English,
        license_tag: None,
        byte_size: bytes.len() as u64,
    })
}

/// One line of the corpus manifest. Relative paths resolve against the
/// manifest's directory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub path: PathBuf,
    pub language: Language,
    #[serde(default)]
    pub license_tag: Option<String>,
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>, IngestError> {
    let text = fs::read_to_string(path).map_err(|source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let mut entries = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut entry: ManifestEntry =
            serde_json::from_str(line).map_err(|e| IngestError::Manifest {
                line: idx + 1,
                message: e.to_string(),
            })?;
        if entry.path.is_relative() {
            entry.path = base.join(&entry.path);
        }
        entries.push(entry);
    }
    Ok(entries)
}

/// Loads every manifest entry, keeping the first of any byte-identical
/// duplicates so that doc_id stays unique.
pub fn load_corpus(manifest: &Path) -> Result<Vec<Document>, IngestError> {
    let mut seen = HashSet::new();
    let mut docs = Vec::new();
    for entry in read_manifest(manifest)? {
        let mut doc = load_document(&entry.path)?;
        doc.language = entry.language;
        doc.license_tag = entry.license_tag;
        if seen.insert(doc.doc_id.clone()) {
            docs.push(doc);
        } else {
            tracing::warn!(path = %entry.path.display(), doc_id = %doc.doc_id, "duplicate document skipped");
        }
    }
    Ok(docs)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    TooShort,
    RestrictedLicense,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FilterOutcome {
    pub accepted: Vec<Document>,
    pub rejected: Vec<(Document, RejectReason)>,
}

/// Splits the corpus by minimum length and license. With an allow-list,
/// documents without a license tag are rejected; `None` disables the
/// license check.
pub fn filter_corpus(
    documents: Vec<Document>,
    min_pages: u32,
    allowed_licenses: Option<&[String]>,
) -> FilterOutcome {
    let mut outcome = FilterOutcome::default();
    for doc in documents {
        let license_ok = match (allowed_licenses, &doc.license_tag) {
            (None, _) => true,
            (Some(allowed), Some(tag)) => {
                allowed.iter().any(|a| a.eq_ignore_ascii_case(tag.trim()))
            }
            (Some(_), None) => false,
        };
        if doc.page_count < min_pages {
            outcome.rejected.push((doc, RejectReason::TooShort));
        } else if !license_ok {
            outcome
                .rejected
                .push((doc, RejectReason::RestrictedLicense));
        } else {
            outcome.accepted.push(doc);
        }
    }
    outcome
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn doc(id: &str, pages: u32, license: Option<&str>) -> Document {
        Document {
            doc_id: id.into(),
            path: PathBuf::from(format!("{id}.pdf")),
            page_count: pages,
            language: Language::English,
            license_tag: license.map(str::to_string),
            byte_size: 0,
        }
    }

    #[test]
    fn filter_examples() {
        let allowed = vec!["cc-by".to_string()];
        let out = filter_corpus(
            vec![
                doc("a", 5, Some("cc-by")),
                doc("b", 77, Some("CC-BY")),
                doc("c", 77, Some("no-derivatives")),
            ],
            20,
            Some(&allowed),
        );
        assert_eq!(out.accepted.len(), 1);
        assert_eq!(out.accepted[0].doc_id, "b");
        assert_eq!(out.rejected[0].1, RejectReason::TooShort);
        assert_eq!(out.rejected[1].1, RejectReason::RestrictedLicense);
    }

    #[test]
    fn untagged_rejected_only_under_allow_list() {
        let allowed = vec!["cc0".to_string()];
        assert_eq!(
            filter_corpus(vec![doc("a", 30, None)], 1, Some(&allowed))
                .rejected
                .len(),
            1
        );
        assert_eq!(
            filter_corpus(vec![doc("a", 30, None)], 1, None)
                .accepted
                .len(),
            1
        );
    }

    #[test]
    fn zero_byte_file_is_malformed() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.pdf");
        fs::write(&path, b"").unwrap();
        assert!(matches!(
            load_document(&path),
            Err(IngestError::MalformedDocument { .. })
        ));
        fs::write(&path, b"not a pdf at all").unwrap();
        assert!(matches!(
            load_document(&path),
            Err(IngestError::MalformedDocument { .. })
        ));
    }

    proptest! {
        #[test]
        fn filter_partitions_input(
            specs in prop::collection::vec((1u32..300, prop::option::of(prop::sample::select(vec!["cc-by", "nd", "cc0"]))), 0..30),
            min_pages in 1u32..100,
        ) {
            let docs: Vec<Document> =
                specs.iter().enumerate().map(|(i, (p, l))| doc(&format!("d{i}"), *p, *l)).collect();
            let allowed = vec!["cc-by".to_string(), "cc0".to_string()];
            let out = filter_corpus(docs.clone(), min_pages, Some(&allowed));
            prop_assert_eq!(out.accepted.len() + out.rejected.len(), docs.len());
            let mut ids: Vec<&str> = out.accepted.iter().map(|d| d.doc_id.as_str())
                .chain(out.rejected.iter().map(|(d, _)| d.doc_id.as_str())).collect();
            ids.sort();
            ids.dedup();
            prop_assert_eq!(ids.len(), docs.len());
        }
    }
}
