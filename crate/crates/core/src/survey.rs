//! Aggregated relational data: the respondent × subpopulation count matrix,
//! its known-size metadata, CSV/JSON ingestion and column filtering.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{NsumError, Result};

/// An ARD survey: `n` respondents answering "how many X's do you know?" for
/// `K` subpopulations, `L` of which have a known size.
///
/// Responses are stored column-major since every estimator works one
/// subpopulation at a time. Subpopulations may overlap, so the known sizes are
/// not required to sum to at most the total population.
#[derive(Debug, Clone, PartialEq)]
pub struct ArdSurvey {
    labels: Vec<String>,
    columns: Vec<Vec<u32>>,
    known_sizes: Vec<Option<u64>>,
    total_population: u64,
    ids: Option<Vec<String>>,
    tags: BTreeMap<String, Vec<String>>,
    dropped_rows: usize,
}

impl ArdSurvey {
    /// Builds a survey from response columns (`columns[k][i]` is respondent
    /// `i`'s answer for subpopulation `k`). `known_sizes[k]` is `None` for a
    /// hidden subpopulation.
    pub fn new(
        labels: Vec<String>,
        columns: Vec<Vec<u32>>,
        known_sizes: Vec<Option<u64>>,
        total_population: u64,
    ) -> Result<Self> {
        let k = labels.len();
        if k == 0 {
            return Err(NsumError::InvalidSurvey("no subpopulations".into()));
        }
        if columns.len() != k || known_sizes.len() != k {
            return Err(NsumError::InvalidSurvey(format!(
                "{k} labels but {} columns and {} sizes",
                columns.len(),
                known_sizes.len()
            )));
        }
        let mut seen = BTreeSet::new();
        for label in &labels {
            if !seen.insert(label.as_str()) {
                return Err(NsumError::InvalidSurvey(format!("duplicate label `{label}`")));
            }
        }
        let n = columns[0].len();
        if let Some(bad) = columns.iter().position(|c| c.len() != n) {
            return Err(NsumError::InvalidSurvey(format!(
                "column `{}` has {} rows, expected {n}",
                labels[bad],
                columns[bad].len()
            )));
        }
        if n < 2 {
            return Err(NsumError::InvalidSurvey(format!("need at least 2 respondents, got {n}")));
        }
        if total_population == 0 {
            return Err(NsumError::InvalidSurvey("total population must be positive".into()));
        }
        for (label, size) in labels.iter().zip(&known_sizes) {
            match size {
                Some(0) => return Err(NsumError::InvalidSurvey(format!("known size of `{label}` is zero"))),
                Some(s) if *s > total_population => {
                    return Err(NsumError::InvalidSurvey(format!(
                        "known size of `{label}` ({s}) exceeds the total population ({total_population})"
                    )))
                }
                _ => {}
            }
        }
        if known_sizes.iter().all(Option::is_none) {
            return Err(NsumError::InvalidSurvey("no subpopulation has a known size".into()));
        }
        Ok(ArdSurvey {
            labels,
            columns,
            known_sizes,
            total_population,
            ids: None,
            tags: BTreeMap::new(),
            dropped_rows: 0,
        })
    }

    /// Attaches respondent identifiers. They are carried into reports only.
    pub fn with_ids(mut self, ids: Vec<String>) -> Result<Self> {
        if ids.len() != self.n_respondents() {
            return Err(NsumError::LengthMismatch(ids.len(), self.n_respondents()));
        }
        self.ids = Some(ids);
        Ok(self)
    }

    /// Attaches free-form tags (e.g. `name`) keyed by subpopulation label.
    pub fn with_tags(mut self, tags: BTreeMap<String, Vec<String>>) -> Result<Self> {
        for label in tags.keys() {
            if self.index_of(label).is_none() {
                return Err(NsumError::UnknownLabel(label.clone()));
            }
        }
        self.tags = tags;
        Ok(self)
    }

    pub fn n_respondents(&self) -> usize {
        self.columns[0].len()
    }

    pub fn n_subpopulations(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label(&self, k: usize) -> &str {
        &self.labels[k]
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn column(&self, k: usize) -> &[u32] {
        &self.columns[k]
    }

    pub fn response(&self, respondent: usize, k: usize) -> u32 {
        self.columns[k][respondent]
    }

    pub fn known_size(&self, k: usize) -> Option<u64> {
        self.known_sizes[k]
    }

    pub fn is_known(&self, k: usize) -> bool {
        self.known_sizes[k].is_some()
    }

    pub fn known_indices(&self) -> Vec<usize> {
        (0..self.n_subpopulations()).filter(|&k| self.is_known(k)).collect()
    }

    pub fn hidden_indices(&self) -> Vec<usize> {
        (0..self.n_subpopulations()).filter(|&k| !self.is_known(k)).collect()
    }

    pub fn total_population(&self) -> u64 {
        self.total_population
    }

    pub fn ids(&self) -> Option<&[String]> {
        self.ids.as_deref()
    }

    pub fn tags(&self) -> &BTreeMap<String, Vec<String>> {
        &self.tags
    }

    pub fn has_tag(&self, k: usize, tag: &str) -> bool {
        self.tags.get(&self.labels[k]).is_some_and(|t| t.iter().any(|x| x == tag))
    }

    /// Number of respondent rows removed at load time for missing responses.
    pub fn dropped_rows(&self) -> usize {
        self.dropped_rows
    }

    pub(crate) fn check_index(&self, k: usize) -> Result<()> {
        if k < self.n_subpopulations() {
            Ok(())
        } else {
            Err(NsumError::IndexOutOfRange(k))
        }
    }

    /// The same survey with subpopulation `k`'s size treated as unknown.
    pub fn with_hidden(&self, k: usize) -> Result<ArdSurvey> {
        self.check_index(k)?;
        let mut out = self.clone();
        out.known_sizes[k] = None;
        if out.known_sizes.iter().all(Option::is_none) {
            return Err(NsumError::InvalidSurvey(format!("hiding `{}` leaves no known subpopulation", self.labels[k])));
        }
        Ok(out)
    }

    /// The same survey with subpopulation `k`'s known size replaced.
    pub fn with_known_size(&self, k: usize, size: u64) -> Result<ArdSurvey> {
        self.check_index(k)?;
        let mut sizes = self.known_sizes.clone();
        sizes[k] = Some(size);
        let mut out = ArdSurvey::new(self.labels.clone(), self.columns.clone(), sizes, self.total_population)?;
        out.ids = self.ids.clone();
        out.tags = self.tags.clone();
        out.dropped_rows = self.dropped_rows;
        Ok(out)
    }

    /// Reorders respondents: row `i` of the result is row `order[i]` of `self`.
    pub fn permute_rows(&self, order: &[usize]) -> Result<ArdSurvey> {
        let n = self.n_respondents();
        if order.len() != n {
            return Err(NsumError::LengthMismatch(order.len(), n));
        }
        let mut seen = vec![false; n];
        for &i in order {
            if i >= n || std::mem::replace(&mut seen[i], true) {
                return Err(NsumError::InvalidSurvey("row order is not a permutation".into()));
            }
        }
        let mut out = self.clone();
        out.columns = self.columns.iter().map(|c| order.iter().map(|&i| c[i]).collect()).collect();
        out.ids = self.ids.as_ref().map(|ids| order.iter().map(|&i| ids[i].clone()).collect());
        Ok(out)
    }

    /// Keeps only the listed rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Result<ArdSurvey> {
        if let Some(&bad) = rows.iter().find(|&&i| i >= self.n_respondents()) {
            return Err(NsumError::InvalidSurvey(format!("row {bad} out of range")));
        }
        let columns = self.columns.iter().map(|c| rows.iter().map(|&i| c[i]).collect()).collect();
        let mut out = ArdSurvey::new(self.labels.clone(), columns, self.known_sizes.clone(), self.total_population)?;
        out.ids = self.ids.as_ref().map(|ids| rows.iter().map(|&i| ids[i].clone()).collect());
        out.tags = self.tags.clone();
        Ok(out)
    }

    fn select_columns(&self, keep: &[usize]) -> Result<ArdSurvey> {
        let labels: Vec<String> = keep.iter().map(|&k| self.labels[k].clone()).collect();
        let mut out = ArdSurvey::new(
            labels.clone(),
            keep.iter().map(|&k| self.columns[k].clone()).collect(),
            keep.iter().map(|&k| self.known_sizes[k]).collect(),
            self.total_population,
        )?;
        out.ids = self.ids.clone();
        out.tags =
            self.tags.iter().filter(|(label, _)| labels.contains(label)).map(|(l, t)| (l.clone(), t.clone())).collect();
        out.dropped_rows = self.dropped_rows;
        Ok(out)
    }
}

/// What to do with respondents that left a question unanswered.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MissingPolicy {
    /// Remove every respondent row containing a missing cell.
    #[default]
    DropRespondent,
    /// Fail on the first missing cell.
    Reject,
}

impl FromStr for MissingPolicy {
    type Err = NsumError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "drop-respondent" | "drop" => Ok(MissingPolicy::DropRespondent),
            "reject" => Ok(MissingPolicy::Reject),
            other => Err(NsumError::Config(format!("unknown missing-data policy `{other}`"))),
        }
    }
}

/// Known-size metadata as stored next to a responses CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Metadata {
    pub total_population: u64,
    pub known_sizes: BTreeMap<String, u64>,
    #[serde(default)]
    pub hidden: Vec<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub tags: BTreeMap<String, Vec<String>>,
}

impl Metadata {
    pub fn from_survey(survey: &ArdSurvey) -> Metadata {
        Metadata {
            total_population: survey.total_population,
            known_sizes: survey
                .known_indices()
                .into_iter()
                .map(|k| (survey.labels[k].clone(), survey.known_sizes[k].unwrap()))
                .collect(),
            hidden: survey.hidden_indices().into_iter().map(|k| survey.labels[k].clone()).collect(),
            tags: survey.tags.clone(),
        }
    }

    pub fn read(path: &Path) -> Result<Metadata> {
        let file = File::open(path).map_err(|e| NsumError::io(path, e))?;
        serde_json::from_reader(file).map_err(|e| NsumError::Metadata(e.to_string()))
    }
}

fn is_missing(cell: &str) -> bool {
    cell.is_empty() || cell.eq_ignore_ascii_case("na")
}

fn parse_cell(cell: &str, row: usize, label: &str) -> Result<u32> {
    cell.parse::<u32>().map_err(|_| {
        let reason = match cell.parse::<f64>() {
            Ok(v) if v < 0.0 => format!("negative response `{cell}`"),
            Ok(v) if v.is_finite() && v.fract() != 0.0 => format!("non-integer response `{cell}`"),
            Ok(v) if v.is_finite() => format!("response `{cell}` is not a plain integer"),
            _ => format!("unparseable response `{cell}`"),
        };
        NsumError::BadCell { row, label: label.to_string(), reason }
    })
}

/// Loads a survey from a responses CSV and a metadata JSON file.
pub fn load_survey(responses_path: &Path, metadata_path: &Path, policy: MissingPolicy) -> Result<ArdSurvey> {
    let metadata = Metadata::read(metadata_path)?;
    let file = File::open(responses_path).map_err(|e| NsumError::io(responses_path, e))?;
    read_survey(file, &metadata, policy)
}

/// Parses responses CSV text against already-loaded metadata.
///
/// The header holds the subpopulation labels, optionally preceded by an `id`
/// column. Empty cells and `NA` are missing.
pub fn read_survey<R: Read>(responses: R, metadata: &Metadata, policy: MissingPolicy) -> Result<ArdSurvey> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(responses);
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| NsumError::Metadata(format!("unreadable header: {e}")))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let has_id = header.first().is_some_and(|h| h.eq_ignore_ascii_case("id"));
    let labels: Vec<String> = header[usize::from(has_id)..].to_vec();
    let width = header.len();

    for label in metadata.known_sizes.keys().chain(&metadata.hidden).chain(metadata.tags.keys()) {
        if !labels.contains(label) {
            return Err(NsumError::UnknownLabel(label.clone()));
        }
    }
    let mut known_sizes = Vec::with_capacity(labels.len());
    for label in &labels {
        let known = metadata.known_sizes.get(label).copied();
        let hidden = metadata.hidden.contains(label);
        match (known, hidden) {
            (Some(_), true) => {
                return Err(NsumError::Metadata(format!("`{label}` is listed as both known and hidden")))
            }
            (None, false) => return Err(NsumError::Metadata(format!("column `{label}` is neither known nor hidden"))),
            _ => known_sizes.push(known),
        }
    }

    let mut columns: Vec<Vec<u32>> = vec![Vec::new(); labels.len()];
    let mut ids = Vec::new();
    let mut dropped = 0usize;
    let mut row_buf = Vec::with_capacity(labels.len());
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| NsumError::Metadata(format!("csv: {e}")))?;
        // header is line 1
        let line = row + 2;
        if record.len() != width {
            return Err(NsumError::Ragged { line, expected: width, found: record.len() });
        }
        row_buf.clear();
        let mut missing = false;
        for (j, label) in labels.iter().enumerate() {
            let cell = record[j + usize::from(has_id)].trim();
            if is_missing(cell) {
                if policy == MissingPolicy::Reject {
                    return Err(NsumError::MissingCell { row: row + 1, label: label.clone() });
                }
                missing = true;
                continue;
            }
            row_buf.push(parse_cell(cell, row + 1, label)?);
        }
        if missing {
            dropped += 1;
            continue;
        }
        for (col, v) in columns.iter_mut().zip(&row_buf) {
            col.push(*v);
        }
        if has_id {
            ids.push(record[0].trim().to_string());
        }
    }
    if columns[0].is_empty() {
        if dropped > 0 {
            return Err(NsumError::AllRowsDropped);
        }
        return Err(NsumError::InvalidSurvey("no respondent rows".into()));
    }
    if dropped > 0 {
        log::info!("dropped {dropped} respondents with missing responses");
    }

    let mut survey =
        ArdSurvey::new(labels, columns, known_sizes, metadata.total_population)?.with_tags(metadata.tags.clone())?;
    if has_id {
        survey = survey.with_ids(ids)?;
    }
    survey.dropped_rows = dropped;
    Ok(survey)
}

/// Writes the responses CSV (with an `id` column when the survey has ids).
pub fn write_responses<W: Write>(survey: &ArdSurvey, out: W) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    let werr = |e: csv::Error| NsumError::Io { path: "responses".into(), message: e.to_string() };
    let mut header: Vec<&str> = Vec::new();
    if survey.ids.is_some() {
        header.push("id");
    }
    header.extend(survey.labels.iter().map(String::as_str));
    writer.write_record(&header).map_err(werr)?;
    let mut row: Vec<String> = Vec::with_capacity(header.len());
    for i in 0..survey.n_respondents() {
        row.clear();
        if let Some(ids) = &survey.ids {
            row.push(ids[i].clone());
        }
        row.extend(survey.columns.iter().map(|c| c[i].to_string()));
        writer.write_record(&row).map_err(werr)?;
    }
    writer.flush().map_err(|e| NsumError::Io { path: "responses".into(), message: e.to_string() })
}

/// Writes a survey in the CSV + JSON layout read by [`load_survey`].
pub fn write_survey(survey: &ArdSurvey, responses_path: &Path, metadata_path: &Path) -> Result<()> {
    let file = File::create(responses_path).map_err(|e| NsumError::io(responses_path, e))?;
    write_responses(survey, std::io::BufWriter::new(file))?;
    let json =
        serde_json::to_string_pretty(&Metadata::from_survey(survey)).map_err(|e| NsumError::Metadata(e.to_string()))?;
    std::fs::write(metadata_path, json + "\n").map_err(|e| NsumError::io(metadata_path, e))
}

/// Chooses which known subpopulations take part in an analysis.
///
/// The filter only ever removes known subpopulations; hidden ones are always
/// retained, and naming one in `exclude` is an error. Textual form is a
/// `;`-separated list of clauses: `include:a,b`, `exclude:a,b`, `tag:t`,
/// `not-tag:t`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SubpopulationFilter {
    pub include: Option<BTreeSet<String>>,
    pub exclude: BTreeSet<String>,
    pub include_tags: BTreeSet<String>,
    pub exclude_tags: BTreeSet<String>,
}

impl SubpopulationFilter {
    pub fn exclude<I, S>(labels: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        SubpopulationFilter { exclude: labels.into_iter().map(Into::into).collect(), ..Default::default() }
    }

    pub fn include<I, S>(labels: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        SubpopulationFilter { include: Some(labels.into_iter().map(Into::into).collect()), ..Default::default() }
    }

    pub fn is_identity(&self) -> bool {
        self == &SubpopulationFilter::default()
    }

    fn keeps_known(&self, survey: &ArdSurvey, k: usize) -> bool {
        let label = survey.label(k);
        self.include.as_ref().is_none_or(|inc| inc.contains(label))
            && (self.include_tags.is_empty() || self.include_tags.iter().any(|t| survey.has_tag(k, t)))
            && !self.exclude.contains(label)
            && !self.exclude_tags.iter().any(|t| survey.has_tag(k, t))
    }
}

impl FromStr for SubpopulationFilter {
    type Err = NsumError;

    fn from_str(s: &str) -> Result<Self> {
        let mut filter = SubpopulationFilter::default();
        for clause in s.split(';').map(str::trim).filter(|c| !c.is_empty()) {
            let (kind, values) =
                clause.split_once(':').ok_or_else(|| NsumError::Filter(format!("clause `{clause}` has no `:`")))?;
            let values = values.split(',').map(str::trim).filter(|v| !v.is_empty()).map(String::from);
            match kind.trim() {
                "include" => filter.include.get_or_insert_with(BTreeSet::new).extend(values),
                "exclude" => filter.exclude.extend(values),
                "tag" => filter.include_tags.extend(values),
                "not-tag" => filter.exclude_tags.extend(values),
                other => return Err(NsumError::Filter(format!("unknown clause `{other}`"))),
            }
        }
        Ok(filter)
    }
}

impl fmt::Display for SubpopulationFilter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let join = |s: &BTreeSet<String>| s.iter().cloned().collect::<Vec<_>>().join(",");
        let mut clauses = Vec::new();
        if let Some(inc) = &self.include {
            clauses.push(format!("include:{}", join(inc)));
        }
        if !self.exclude.is_empty() {
            clauses.push(format!("exclude:{}", join(&self.exclude)));
        }
        if !self.include_tags.is_empty() {
            clauses.push(format!("tag:{}", join(&self.include_tags)));
        }
        if !self.exclude_tags.is_empty() {
            clauses.push(format!("not-tag:{}", join(&self.exclude_tags)));
        }
        f.write_str(&clauses.join(";"))
    }
}

/// Applies `filter`, re-indexing columns, labels and sizes consistently.
/// At least two known subpopulations must survive.
pub fn filter_subpopulations(survey: &ArdSurvey, filter: &SubpopulationFilter) -> Result<ArdSurvey> {
    let named = filter.include.iter().flatten().chain(&filter.exclude);
    for label in named {
        match survey.index_of(label) {
            None => return Err(NsumError::UnknownLabel(label.clone())),
            Some(k) if !survey.is_known(k) && filter.exclude.contains(label) => {
                return Err(NsumError::Filter(format!("cannot exclude hidden subpopulation `{label}`")))
            }
            _ => {}
        }
    }
    let keep: Vec<usize> =
        (0..survey.n_subpopulations()).filter(|&k| !survey.is_known(k) || filter.keeps_known(survey, k)).collect();
    let known_left = keep.iter().filter(|&&k| survey.is_known(k)).count();
    if known_left < 2 {
        return Err(NsumError::Filter(format!("{known_left} known subpopulation(s) remain; at least 2 are required")));
    }
    survey.select_columns(&keep)
}
