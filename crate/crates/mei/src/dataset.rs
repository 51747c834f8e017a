//! Tab-separated triple files: `head<TAB>relation<TAB>tail`, one per line.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use mei_core::data::{DatasetBuilder, LoadReport, Split, TripleStore, Vocabulary};

/// Environment variable naming the directory that holds dataset folders.
pub const DATA_DIR_ENV: &str = "MEI_DATA_DIR";

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("{}:{line}: expected 3 tab-separated fields (head, relation, tail), found {found}", path.display())]
    Malformed { path: PathBuf, line: usize, found: usize },
    #[error("cannot read {}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("dataset `{name}` not found (tried {})", tried.iter().map(|p| p.display().to_string()).collect::<Vec<_>>().join(", "))]
    NotFound { name: String, tried: Vec<PathBuf> },
    #[error(transparent)]
    Core(#[from] mei_core::Error),
}

/// Split files of one dataset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetPaths {
    pub train: PathBuf,
    pub valid: PathBuf,
    pub test: PathBuf,
}

impl DatasetPaths {
    /// `train.txt`, `valid.txt` and `test.txt` inside `dir`.
    pub fn in_dir(dir: &Path) -> Self {
        Self {
            train: dir.join("train.txt"),
            valid: dir.join("valid.txt"),
            test: dir.join("test.txt"),
        }
    }

    pub fn get(&self, split: Split) -> &Path {
        match split {
            Split::Train => &self.train,
            Split::Valid => &self.valid,
            Split::Test => &self.test,
        }
    }
}

/// Resolves a dataset directory: `name` as a path if it exists, otherwise
/// `$MEI_DATA_DIR/name`.
pub fn resolve_dataset(name: &str) -> Result<PathBuf, DatasetError> {
    let direct = PathBuf::from(name);
    let mut tried = vec![direct.clone()];
    if direct.is_dir() {
        return Ok(direct);
    }
    if let Some(root) = std::env::var_os(DATA_DIR_ENV) {
        let candidate = PathBuf::from(root).join(name);
        if candidate.is_dir() {
            return Ok(candidate);
        }
        tried.push(candidate);
    }
    Err(DatasetError::NotFound {
        name: name.to_string(),
        tried,
    })
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub store: TripleStore,
    pub vocab: Vocabulary,
    pub report: LoadReport,
}

fn read(path: &Path) -> Result<String, DatasetError> {
    fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Adds every line of `text` to `split`. Blank lines are skipped.
pub fn parse_split(builder: &mut DatasetBuilder, split: Split, text: &str, path: &Path) -> Result<usize, DatasetError> {
    let mut count = 0;
    for (i, line) in text.lines().enumerate() {
        let line = line.strip_suffix('\r').unwrap_or(line);
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 || fields.iter().any(|f| f.is_empty()) {
            return Err(DatasetError::Malformed {
                path: path.to_path_buf(),
                line: i + 1,
                found: fields.iter().filter(|f| !f.is_empty()).count(),
            });
        }
        builder.push(split, fields[0], fields[1], fields[2]);
        count += 1;
    }
    Ok(count)
}

/// Loads all three splits. Ids follow first appearance over train, valid,
/// then test.
pub fn load_dataset(paths: &DatasetPaths) -> Result<Dataset, DatasetError> {
    let mut builder = DatasetBuilder::new();
    for split in Split::ALL {
        let path = paths.get(split);
        parse_split(&mut builder, split, &read(path)?, path)?;
    }
    let (store, vocab, report) = builder.build()?;
    Ok(Dataset { store, vocab, report })
}

/// Renders `split` back to the tab-separated format.
pub fn format_split(store: &TripleStore, vocab: &Vocabulary, split: Split) -> String {
    let mut out = String::new();
    for t in store.split(split) {
        let name = |id, f: fn(&Vocabulary, u32) -> Option<&str>| f(vocab, id).unwrap_or("?").to_string();
        let _ = writeln!(
            out,
            "{}\t{}\t{}",
            name(t.head, Vocabulary::entity_name),
            name(t.relation, Vocabulary::relation_name),
            name(t.tail, Vocabulary::entity_name)
        );
    }
    out
}

pub fn write_dataset(dir: &Path, store: &TripleStore, vocab: &Vocabulary) -> io::Result<DatasetPaths> {
    fs::create_dir_all(dir)?;
    let paths = DatasetPaths::in_dir(dir);
    for split in Split::ALL {
        fs::write(paths.get(split), format_split(store, vocab, split))?;
    }
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, train: &str, valid: &str, test: &str) -> DatasetPaths {
        let paths = DatasetPaths::in_dir(dir);
        fs::write(&paths.train, train).unwrap();
        fs::write(&paths.valid, valid).unwrap();
        fs::write(&paths.test, test).unwrap();
        paths
    }

    #[test]
    fn loads_with_first_appearance_ids() {
        let dir = tempfile::tempdir().unwrap();
        let paths = write(dir.path(), "a\tlikes\tb\nb\tlikes\tc\n\na\tlikes\tb\n", "c\tknows\td\r\n", "d\tlikes\ta\n");
        let data = load_dataset(&paths).unwrap();
        assert_eq!(data.vocab.entity_names(), ["a", "b", "c", "d"]);
        assert_eq!(data.vocab.relation_names(), ["likes", "knows"]);
        assert_eq!((data.report.train, data.report.valid, data.report.test), (2, 1, 1));
        assert_eq!(data.report.duplicates_dropped, 1);
        assert_eq!(data.report.unseen_entities, 1);
        assert_eq!(data.report.unseen_relations, 1);
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let paths = write(dir.path(), "a\tr\tb\na\tr\n", "", "");
        match load_dataset(&paths) {
            Err(DatasetError::Malformed { line: 2, found: 2, .. }) => {}
            other => panic!("{other:?}"),
        }
        let paths = write(dir.path(), "a\tr\tb\tc\n", "", "");
        let err = load_dataset(&paths).unwrap_err().to_string();
        assert!(err.contains("train.txt:1:"), "{err}");
    }

    #[test]
    fn empty_train_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let paths = write(dir.path(), "", "a\tr\tb\n", "");
        let err = load_dataset(&paths).unwrap_err();
        assert_eq!(err.to_string(), "no training triples");
    }

    #[test]
    fn missing_file_is_an_io_error() {
        let dir = tempfile::tempdir().unwrap();
        let paths = DatasetPaths::in_dir(dir.path());
        assert!(matches!(load_dataset(&paths), Err(DatasetError::Io { .. })));
    }

    #[test]
    fn round_trip_preserves_ids() {
        let dir = tempfile::tempdir().unwrap();
        let paths = write(dir.path(), "x\tr\ty\ny\ts\tz\nz\tr\tx\n", "x\ts\tz\n", "y\tr\tx\n");
        let first = load_dataset(&paths).unwrap();
        let copy = tempfile::tempdir().unwrap();
        let again = load_dataset(&write_dataset(copy.path(), &first.store, &first.vocab).unwrap()).unwrap();
        assert_eq!(again.vocab, first.vocab);
        for split in Split::ALL {
            assert_eq!(again.store.split(split), first.store.split(split));
        }
    }
}
