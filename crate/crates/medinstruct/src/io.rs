//! Reading and writing corpora, manifests and mix specs.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use medinstruct_core::ingest::{
    decode_utf8, parse_conll, parse_doc, parse_nli, parse_qa, parse_re_file, IngestError,
    SourceInfo,
};
use medinstruct_core::mix::{from_jsonl, to_jsonl, MixSpec};
use medinstruct_core::schema::{
    validate_example, CanonicalExample, DatasetManifest, InstructionRecord, LabelScheme,
    SourceFormat, Split,
};

use crate::error::{Error, Result};

pub fn read_text(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::data(path, e))?;
    decode_utf8(&bytes)
        .map(str::to_owned)
        .map_err(|e| Error::data(path, e))
}

/// Writes `contents`, creating parent directories as needed.
pub fn write_text(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::data(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| Error::data(path, e))
}

pub fn read_records(path: &Path) -> Result<Vec<InstructionRecord>> {
    from_jsonl(&read_text(path)?).map_err(|e| Error::data(path, e))
}

pub fn write_records(path: &Path, records: &[InstructionRecord]) -> Result<()> {
    write_text(path, &to_jsonl(records))
}

/// A manifest together with its resolved label scheme and base directory.
#[derive(Debug, Clone)]
pub struct LoadedManifest {
    pub manifest: DatasetManifest,
    pub scheme: LabelScheme,
    pub base_dir: PathBuf,
}

impl LoadedManifest {
    pub fn split_path(&self, split: Split) -> Option<PathBuf> {
        self.manifest
            .files
            .get(&split)
            .map(|p| self.base_dir.join(p))
    }
}

pub fn load_manifest(path: &Path) -> Result<LoadedManifest> {
    let manifest: DatasetManifest =
        serde_json::from_str(&read_text(path)?).map_err(|e| Error::data(path, e))?;
    let scheme = manifest.label_scheme().map_err(|e| Error::data(path, e))?;
    let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok(LoadedManifest {
        manifest,
        scheme,
        base_dir,
    })
}

/// Dispatches to the parser for the manifest's source format.
pub fn parse_source(
    m: &DatasetManifest,
    scheme: &LabelScheme,
    text: &str,
    source: &SourceInfo,
) -> std::result::Result<Vec<CanonicalExample>, IngestError> {
    Ok(match m.format {
        SourceFormat::Conll => parse_conll(text, scheme, source)?
            .into_iter()
            .map(CanonicalExample::Ner)
            .collect(),
        SourceFormat::ReTsv => parse_re_file(text, scheme, source)?
            .into_iter()
            .map(CanonicalExample::Re)
            .collect(),
        SourceFormat::NliJsonl => parse_nli(text, &m.nli_fields, source)?
            .into_iter()
            .map(CanonicalExample::Nli)
            .collect(),
        SourceFormat::DocJsonl => parse_doc(text, scheme, source)?
            .into_iter()
            .map(CanonicalExample::Doc)
            .collect(),
        SourceFormat::QaJsonl => parse_qa(text, source)?
            .into_iter()
            .map(CanonicalExample::Qa)
            .collect(),
    })
}

/// Parses and validates one split of a dataset.
pub fn ingest_split(loaded: &LoadedManifest, split: Split) -> Result<Vec<CanonicalExample>> {
    let m = &loaded.manifest;
    let path = loaded
        .split_path(split)
        .ok_or_else(|| Error::Data(format!("manifest `{}` lists no {split} file", m.name)))?;
    let text = read_text(&path)?;
    let source = SourceInfo::new(m.name.clone(), split);
    let examples =
        parse_source(m, &loaded.scheme, &text, &source).map_err(|e| Error::data(&path, e))?;
    let scheme = &loaded.scheme;
    for ex in &examples {
        if let Err(violations) = validate_example(ex, scheme) {
            let list: Vec<String> = violations.iter().map(ToString::to_string).collect();
            return Err(Error::Data(format!(
                "{}: example {}: {}",
                path.display(),
                ex.id(),
                list.join("; ")
            )));
        }
    }
    Ok(examples)
}

pub fn load_mix_spec(path: &Path) -> Result<MixSpec> {
    let spec: MixSpec =
        serde_json::from_str(&read_text(path)?).map_err(|e| Error::data(path, e))?;
    spec.validate().map_err(|e| Error::data(path, e))?;
    Ok(spec)
}

/// Loads `<dir>/<source>.jsonl` for every entry of `spec`.
pub fn load_mix_sources(
    spec: &MixSpec,
    dir: &Path,
) -> Result<BTreeMap<String, Vec<InstructionRecord>>> {
    let mut out = BTreeMap::new();
    for entry in &spec.entries {
        let path = dir.join(format!("{}.jsonl", entry.source));
        if !path.is_file() {
            return Err(Error::Data(format!(
                "mix source `{}` not found at {}",
                entry.source,
                path.display()
            )));
        }
        out.insert(entry.source.clone(), read_records(&path)?);
    }
    Ok(out)
}
