//! Token scoring and column serialization.
//!
//! Each column is reduced to a bounded, ordered token list before embedding.
//! Token importance is an inverse document frequency over the columns of the
//! whole lake, `ln(M) / df(token)`, where `M` is the number of lake columns
//! and `df` counts the distinct columns containing the token. Cell scores sum
//! or average the scores of their tokens.
//!
//! The [`SamplingMethod`]s pick tokens, cells or rows under a per-column
//! token budget. Samples are unique at the sampling unit and, except for
//! `alphaHead` which emits its alphabetical prefix, are emitted in source
//! order.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::catalog::{Column, LakeCatalog, Table};
use crate::error::{Error, Result};

/// Lowercases `cell` and splits it on whitespace and punctuation.
///
/// Every non-alphanumeric character is a boundary, so `"U.S.-2020"` yields
/// `["u", "s", "2020"]`.
pub fn tokenize(cell: &str) -> Vec<String> {
    cell.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Document frequencies of tokens over the columns of a lake.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TokenStats {
    pub m_columns: usize,
    pub df: HashMap<String, usize>,
}

impl TokenStats {
    /// `ln(M) / df(token)`. Tokens never seen in the lake score as if they
    /// occurred in exactly one column.
    pub fn idf(&self, token: &str) -> f64 {
        if self.m_columns == 0 {
            return 0.0;
        }
        let df = self.df.get(token).copied().unwrap_or(1).max(1);
        (self.m_columns as f64).ln() / df as f64
    }
}

/// Counts, for every token, the number of distinct lake columns containing it.
pub fn compute_idf(catalog: &LakeCatalog) -> TokenStats {
    let tables: Vec<&Table> = catalog.iter().collect();
    let df = tables
        .par_iter()
        .flat_map_iter(|t| t.columns.iter())
        .fold(HashMap::new, |mut df: HashMap<String, usize>, col| {
            let distinct: HashSet<String> = col.values.iter().flat_map(|v| tokenize(v)).collect();
            for token in distinct {
                *df.entry(token).or_insert(0) += 1;
            }
            df
        })
        .reduce(HashMap::new, |a, b| {
            if a.len() >= b.len() {
                merge(a, b)
            } else {
                merge(b, a)
            }
        });
    TokenStats {
        m_columns: catalog.total_columns,
        df,
    }
}

fn merge(mut into: HashMap<String, usize>, from: HashMap<String, usize>) -> HashMap<String, usize> {
    for (k, v) in from {
        *into.entry(k).or_insert(0) += v;
    }
    into
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreMode {
    Sum,
    Avg,
}

/// Sum or mean of the idf of the cell's tokens; 0 for a cell without tokens.
pub fn score_cell(cell: &str, stats: &TokenStats, mode: ScoreMode) -> f64 {
    score_tokens(&tokenize(cell), stats, mode)
}

fn score_tokens(tokens: &[String], stats: &TokenStats, mode: ScoreMode) -> f64 {
    if tokens.is_empty() {
        return 0.0;
    }
    let sum: f64 = tokens.iter().map(|t| stats.idf(t)).sum();
    match mode {
        ScoreMode::Sum => sum,
        ScoreMode::Avg => sum / tokens.len() as f64,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum SamplingMethod {
    Head,
    AlphaHead,
    Random,
    EveryN,
    Uniform,
    TfidfToken,
    TfidfEntity,
    TfidfRow,
    RowOrdered,
}

impl SamplingMethod {
    pub const ALL: [SamplingMethod; 9] = [
        SamplingMethod::Head,
        SamplingMethod::AlphaHead,
        SamplingMethod::Random,
        SamplingMethod::EveryN,
        SamplingMethod::Uniform,
        SamplingMethod::TfidfToken,
        SamplingMethod::TfidfEntity,
        SamplingMethod::TfidfRow,
        SamplingMethod::RowOrdered,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SamplingMethod::Head => "head",
            SamplingMethod::AlphaHead => "alphaHead",
            SamplingMethod::Random => "random",
            SamplingMethod::EveryN => "everyN",
            SamplingMethod::Uniform => "uniform",
            SamplingMethod::TfidfToken => "tfidf_token",
            SamplingMethod::TfidfEntity => "tfidf_entity",
            SamplingMethod::TfidfRow => "tfidf_row",
            SamplingMethod::RowOrdered => "row_ordered",
        }
    }

    fn is_row_level(self) -> bool {
        matches!(self, SamplingMethod::TfidfRow | SamplingMethod::RowOrdered)
    }
}

impl Default for SamplingMethod {
    fn default() -> Self {
        SamplingMethod::TfidfEntity
    }
}

impl fmt::Display for SamplingMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SamplingMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SamplingMethod::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::UnknownMethod(s.to_string()))
    }
}

impl TryFrom<String> for SamplingMethod {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<SamplingMethod> for String {
    fn from(m: SamplingMethod) -> String {
        m.as_str().to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SerializedColumn {
    pub table_id: String,
    pub col_idx: usize,
    pub tokens: Vec<String>,
    pub method: SamplingMethod,
    pub budget: usize,
}

/// Serializes a single column under `budget` tokens.
///
/// Row-level methods treat the column as a one-column table; use
/// [`serialize_table`] to rank rows across all columns of a table.
pub fn serialize_column(
    table_id: &str,
    col_idx: usize,
    column: &Column,
    stats: &TokenStats,
    method: SamplingMethod,
    budget: usize,
    seed: u64,
) -> Result<SerializedColumn> {
    if budget == 0 {
        return Err(Error::InvalidParam("token budget must be at least 1".into()));
    }
    let rows = if method.is_row_level() {
        let cells: Vec<Vec<&str>> = column.values.iter().map(|v| vec![v.as_str()]).collect();
        Some(row_priority(&cells, stats, method))
    } else {
        None
    };
    Ok(SerializedColumn {
        table_id: table_id.to_string(),
        col_idx,
        tokens: sample(column, stats, method, budget, seed, rows.as_deref()),
        method,
        budget,
    })
}

/// Serializes every column of `table`, splitting `max_len` evenly among them.
///
/// The per-column budget is `floor(max_len / width)`, clamped to at least one
/// token for tables wider than `max_len`. Column `i` samples with seed
/// `seed + i`.
pub fn serialize_table(
    table: &Table,
    stats: &TokenStats,
    method: SamplingMethod,
    max_len: usize,
    seed: u64,
) -> Vec<SerializedColumn> {
    let budget = (max_len / table.width().max(1)).max(1);
    let rows = method.is_row_level().then(|| {
        let cells: Vec<Vec<&str>> = (0..table.n_rows).map(|r| table.row(r).collect()).collect();
        row_priority(&cells, stats, method)
    });
    table
        .columns
        .iter()
        .enumerate()
        .map(|(i, col)| SerializedColumn {
            table_id: table.table_id.clone(),
            col_idx: i,
            tokens: sample(
                col,
                stats,
                method,
                budget,
                seed.wrapping_add(i as u64),
                rows.as_deref(),
            ),
            method,
            budget,
        })
        .collect()
}

/// Unique rows in the order they should be consumed.
fn row_priority(rows: &[Vec<&str>], stats: &TokenStats, method: SamplingMethod) -> Vec<usize> {
    let mut seen = HashSet::new();
    let unique: Vec<usize> = (0..rows.len()).filter(|&r| seen.insert(&rows[r])).collect();
    if method == SamplingMethod::RowOrdered {
        return unique;
    }
    let scores: Vec<f64> = unique
        .iter()
        .map(|&r| {
            let cells = &rows[r];
            let total: f64 = cells.iter().map(|c| score_cell(c, stats, ScoreMode::Avg)).sum();
            total / cells.len().max(1) as f64
        })
        .collect();
    let mut order: Vec<usize> = (0..unique.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order.into_iter().map(|i| unique[i]).collect()
}

fn sample(
    column: &Column,
    stats: &TokenStats,
    method: SamplingMethod,
    budget: usize,
    seed: u64,
    rows: Option<&[usize]>,
) -> Vec<String> {
    match method {
        SamplingMethod::TfidfEntity => sample_cells(column, stats, budget),
        SamplingMethod::TfidfRow | SamplingMethod::RowOrdered => {
            let rows = rows.expect("row priority computed for row-level methods");
            let units = rows.iter().map(|&r| (r, tokenize(&column.values[r])));
            fill_by_priority(units, budget)
        }
        _ => sample_tokens(column, stats, method, budget, seed),
    }
}

/// Token-level methods operate on the column's distinct tokens in order of
/// first occurrence.
fn sample_tokens(
    column: &Column,
    stats: &TokenStats,
    method: SamplingMethod,
    budget: usize,
    seed: u64,
) -> Vec<String> {
    let mut counts: HashMap<String, usize> = HashMap::new();
    let mut unique: Vec<String> = Vec::new();
    for token in column.values.iter().flat_map(|v| tokenize(v)) {
        let c = counts.entry(token.clone()).or_insert(0);
        if *c == 0 {
            unique.push(token);
        }
        *c += 1;
    }
    let n = unique.len();
    if method == SamplingMethod::AlphaHead {
        unique.sort();
        unique.truncate(budget);
        return unique;
    }
    if n <= budget {
        return unique;
    }
    let mut picked: Vec<usize> = match method {
        SamplingMethod::Head => (0..budget).collect(),
        SamplingMethod::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rand::seq::index::sample(&mut rng, n, budget).into_vec()
        }
        SamplingMethod::EveryN => {
            let step = n.div_ceil(budget);
            (0..n).step_by(step).take(budget).collect()
        }
        SamplingMethod::Uniform => {
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| counts[&unique[b]].cmp(&counts[&unique[a]]).then(a.cmp(&b)));
            order.truncate(budget);
            order
        }
        SamplingMethod::TfidfToken => {
            let idf: Vec<f64> = unique.iter().map(|t| stats.idf(t)).collect();
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| idf[b].total_cmp(&idf[a]).then(a.cmp(&b)));
            order.truncate(budget);
            order
        }
        _ => unreachable!("not a token-level method: {method}"),
    };
    picked.sort_unstable();
    picked.into_iter().map(|i| std::mem::take(&mut unique[i])).collect()
}

/// Distinct cells ranked by average token idf; the top cells are taken until
/// the budget is spent, then emitted in source order.
fn sample_cells(column: &Column, stats: &TokenStats, budget: usize) -> Vec<String> {
    let mut seen = HashSet::new();
    let cells: Vec<(usize, Vec<String>)> = column
        .values
        .iter()
        .enumerate()
        .filter(|(_, v)| seen.insert(v.as_str()))
        .map(|(i, v)| (i, tokenize(v)))
        .collect();
    let scores: Vec<f64> = cells
        .iter()
        .map(|(_, toks)| score_tokens(toks, stats, ScoreMode::Avg))
        .collect();
    let mut order: Vec<usize> = (0..cells.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut cells: Vec<Option<(usize, Vec<String>)>> = cells.into_iter().map(Some).collect();
    fill_by_priority(order.into_iter().filter_map(|i| cells[i].take()), budget)
}

/// Consumes `(position, tokens)` units in priority order until `budget`
/// tokens are allotted (the last unit may be cut short), then concatenates
/// the chosen units by position.
fn fill_by_priority(units: impl Iterator<Item = (usize, Vec<String>)>, budget: usize) -> Vec<String> {
    let mut chosen = Vec::new();
    let mut remaining = budget;
    for (pos, mut tokens) in units {
        if remaining == 0 {
            break;
        }
        if tokens.is_empty() {
            continue;
        }
        tokens.truncate(remaining);
        remaining -= tokens.len();
        chosen.push((pos, tokens));
    }
    chosen.sort_by_key(|(pos, _)| *pos);
    chosen.into_iter().flat_map(|(_, t)| t).collect()
}
