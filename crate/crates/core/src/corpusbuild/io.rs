use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::{CorpusError, Document, PairRecord, Result};

pub const CORPUS_SCHEMA: &str = "hlpd-pairs";
pub const DOCUMENT_SCHEMA: &str = "hlpd-documents";
/// `major.minor`; readers accept any minor of their major.
pub const SCHEMA_VERSION: &str = "1.0";

/// First line of every corpus file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchemaHeader {
    pub schema: String,
    pub version: String,
}

fn major(version: &str) -> &str {
    version.split('.').next().unwrap_or(version)
}

fn io_err(path: &Path, e: impl ToString) -> CorpusError {
    CorpusError::Io { path: path.display().to_string(), message: e.to_string() }
}

pub fn write_jsonl<T: Serialize>(path: &Path, schema: &str, records: &[T]) -> Result<()> {
    let header = SchemaHeader { schema: schema.into(), version: SCHEMA_VERSION.into() };
    let mut out = serde_json::to_string(&header).expect("header serializes");
    out.push('\n');
    for r in records {
        out.push_str(&serde_json::to_string(r).map_err(|e| io_err(path, e))?);
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| io_err(path, e))
}

/// Reads a headered line-delimited JSON file. Line numbers in errors are
/// 1-based and count the header.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path, schema: &str) -> Result<Vec<T>> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut lines = text.lines().enumerate();
    let expected = format!("{schema} {SCHEMA_VERSION}");
    let header: SchemaHeader = match lines.next() {
        Some((_, l)) => serde_json::from_str(l)
            .map_err(|_| CorpusError::SchemaMismatch { expected: expected.clone(), found: "no header".into() })?,
        None => return Err(CorpusError::SchemaMismatch { expected, found: "empty file".into() }),
    };
    if header.schema != schema || major(&header.version) != major(SCHEMA_VERSION) {
        return Err(CorpusError::SchemaMismatch { expected, found: format!("{} {}", header.schema, header.version) });
    }
    lines
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| CorpusError::MalformedLine { line: i + 1, message: e.to_string() }))
        .collect()
}

pub fn write_corpus(path: &Path, records: &[PairRecord]) -> Result<()> {
    write_jsonl(path, CORPUS_SCHEMA, records)
}

pub fn read_corpus(path: &Path) -> Result<Vec<PairRecord>> {
    read_jsonl(path, CORPUS_SCHEMA)
}

pub fn write_documents(path: &Path, docs: &[Document]) -> Result<()> {
    write_jsonl(path, DOCUMENT_SCHEMA, docs)
}

pub fn read_documents(path: &Path) -> Result<Vec<Document>> {
    read_jsonl(path, DOCUMENT_SCHEMA)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn docs(n: usize) -> Vec<Document> {
        (0..n).map(|i| Document::new(format!("d{i}"), format!("Text number {i}."))).collect()
    }

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("docs.jsonl");
        write_documents(&p, &docs(5)).unwrap();
        assert_eq!(read_documents(&p).unwrap(), docs(5));
    }

    #[test]
    fn malformed_line_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("docs.jsonl");
        write_documents(&p, &docs(20)).unwrap();
        let mut lines: Vec<String> = fs::read_to_string(&p).unwrap().lines().map(String::from).collect();
        lines[16] = "{not json".into();
        fs::write(&p, lines.join("\n")).unwrap();
        match read_documents(&p) {
            Err(CorpusError::MalformedLine { line, .. }) => assert_eq!(line, 17),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_major_version_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("docs.jsonl");
        fs::write(&p, "{\"schema\":\"hlpd-documents\",\"version\":\"2.0\"}\n").unwrap();
        assert!(matches!(read_documents(&p), Err(CorpusError::SchemaMismatch { .. })));
        fs::write(&p, "{\"schema\":\"hlpd-documents\",\"version\":\"1.7\"}\n").unwrap();
        assert_eq!(read_documents(&p).unwrap(), vec![]);
        assert!(matches!(read_corpus(&p), Err(CorpusError::SchemaMismatch { .. })));
    }
}
