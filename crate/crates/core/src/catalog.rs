//! CSV ingestion into an in-memory data lake catalog.
//!
//! Every `.csv` file under the lake directory becomes one [`Table`] keyed by
//! its file stem. The first row is always treated as the header; headers are
//! kept as metadata only. Cells are kept verbatim apart from CSV unescaping,
//! and invalid UTF-8 is replaced with U+FFFD.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use log::warn;
use rayon::prelude::*;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Column {
    pub header: String,
    pub values: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Table {
    pub table_id: String,
    pub columns: Vec<Column>,
    pub n_rows: usize,
}

impl Table {
    /// Builds a table from headers and row-major cells, padding ragged rows
    /// (and the header) with empty strings to the widest row.
    pub fn from_rows(
        table_id: impl Into<String>,
        headers: Vec<String>,
        rows: Vec<Vec<String>>,
    ) -> Result<Self> {
        let table_id = table_id.into();
        let width = rows
            .iter()
            .map(Vec::len)
            .chain(std::iter::once(headers.len()))
            .max()
            .unwrap_or(0);
        if width == 0 {
            return Err(Error::NoColumns(PathBuf::from(&table_id)));
        }
        let n_rows = rows.len();
        let mut columns: Vec<Column> = (0..width)
            .map(|i| Column {
                header: headers.get(i).cloned().unwrap_or_default(),
                values: Vec::with_capacity(n_rows),
            })
            .collect();
        for row in rows {
            let mut cells = row.into_iter();
            for col in columns.iter_mut() {
                col.values.push(cells.next().unwrap_or_default());
            }
        }
        Ok(Table {
            table_id,
            columns,
            n_rows,
        })
    }

    pub fn width(&self) -> usize {
        self.columns.len()
    }

    /// Cells of row `row`, one per column.
    pub fn row(&self, row: usize) -> impl Iterator<Item = &str> + '_ {
        self.columns.iter().map(move |c| c.values[row].as_str())
    }
}

/// Parses one CSV file. The table id is the file stem.
pub fn load_table(path: &Path) -> Result<Table> {
    let table_id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_csv(table_id, &bytes).map_err(|e| match e {
        Error::Csv { source, .. } => Error::Csv {
            path: path.to_path_buf(),
            source,
        },
        Error::NoColumns(_) => Error::NoColumns(path.to_path_buf()),
        other => other,
    })
}

/// Parses CSV bytes into a table with the given id.
pub fn parse_csv(table_id: impl Into<String>, bytes: &[u8]) -> Result<Table> {
    let table_id = table_id.into();
    let csv_err = |source| Error::Csv {
        path: PathBuf::from(&table_id),
        source,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(bytes);
    let mut records = reader.byte_records();
    let headers = match records.next() {
        Some(r) => decode(&r.map_err(csv_err)?),
        None => return Err(Error::NoColumns(PathBuf::from(&table_id))),
    };
    let mut rows = Vec::new();
    for record in records {
        rows.push(decode(&record.map_err(csv_err)?));
    }
    Table::from_rows(table_id, headers, rows)
}

fn decode(record: &csv::ByteRecord) -> Vec<String> {
    record
        .iter()
        .map(|f| String::from_utf8_lossy(f).into_owned())
        .collect()
}

#[derive(Debug, Clone, Default)]
pub struct LakeCatalog {
    pub tables: BTreeMap<String, Table>,
    pub total_columns: usize,
    /// Files that failed to parse, with the reason.
    pub skipped: Vec<(PathBuf, String)>,
}

impl LakeCatalog {
    pub fn from_tables(tables: impl IntoIterator<Item = Table>) -> Self {
        let mut catalog = LakeCatalog::default();
        for t in tables {
            catalog.insert(t);
        }
        catalog
    }

    fn insert(&mut self, table: Table) {
        self.total_columns += table.width();
        if let Some(old) = self.tables.insert(table.table_id.clone(), table) {
            self.total_columns -= old.width();
        }
    }

    pub fn len(&self) -> usize {
        self.tables.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tables.is_empty()
    }

    pub fn get(&self, table_id: &str) -> Option<&Table> {
        self.tables.get(table_id)
    }

    /// Tables in lexicographic table-id order.
    pub fn iter(&self) -> impl Iterator<Item = &Table> {
        self.tables.values()
    }
}

/// Loads every `.csv` file below `dir` (recursively).
///
/// Files are visited in sorted path order. When two files share a stem, the
/// first keeps it and later ones get `stem~2`, `stem~3`, ...; unparseable
/// files are skipped with a warning and recorded in [`LakeCatalog::skipped`].
pub fn load_lake(dir: &Path) -> Result<LakeCatalog> {
    if !dir.is_dir() {
        return Err(Error::MissingDir(dir.to_path_buf()));
    }
    let mut paths = Vec::new();
    for entry in walkdir::WalkDir::new(dir).follow_links(true) {
        let entry = entry.map_err(|e| {
            let path = e.path().unwrap_or(dir).to_path_buf();
            Error::io(path, e.into())
        })?;
        let is_csv = entry
            .path()
            .extension()
            .is_some_and(|ext| ext.eq_ignore_ascii_case("csv"));
        if entry.file_type().is_file() && is_csv {
            paths.push(entry.into_path());
        }
    }
    paths.sort();

    let parsed: Vec<_> = paths.par_iter().map(|p| load_table(p)).collect();

    let mut catalog = LakeCatalog::default();
    let mut stem_counts: BTreeMap<String, usize> = BTreeMap::new();
    for (path, result) in paths.into_iter().zip(parsed) {
        match result {
            Ok(mut table) => {
                let seen = stem_counts.entry(table.table_id.clone()).or_insert(0);
                *seen += 1;
                if *seen > 1 {
                    let mut id = format!("{}~{}", table.table_id, seen);
                    while catalog.tables.contains_key(&id) {
                        *seen += 1;
                        id = format!("{}~{}", table.table_id, seen);
                    }
                    warn!("duplicate table id for {}; renamed to {id}", path.display());
                    table.table_id = id;
                }
                catalog.insert(table);
            }
            Err(e) => {
                warn!("skipping {}: {e}", path.display());
                catalog.skipped.push((path, e.to_string()));
            }
        }
    }
    Ok(catalog)
}
