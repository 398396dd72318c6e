//! File ingestion: transition datasets (CSV/JSON), relevance filters, and
//! offline sampling fixtures.
//!
//! Every input row is accounted for: rows either become records or show up in
//! the returned diagnostics, never both.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, BufReader, Read, Write};

use serde::Serialize;
use thiserror::Error;

use crate::graph::{normalize_domain, DegreeMode, EcosystemGraph, EcosystemGraphBuilder, GraphError};

/// Per-site similar/referral lists are capped at five entries on load,
/// mirroring the shape of the upstream data source.
pub const PROVIDER_LIST_CAP: usize = 5;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("no valid records in input ({rejected} rows rejected)")]
    EmptyDataset { rejected: usize },
    #[error("invalid {format} input: {message}")]
    Parse { format: &'static str, message: String },
    #[error("fixture schema violation at `{path}`: {message}")]
    Schema { path: String, message: String },
    #[error("fixture validation failed at `{path}`: {message}")]
    Validation { path: String, message: String },
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// One raw transition row, prior to domain normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionRecord {
    pub src_raw: String,
    pub dst_raw: String,
    pub weight: f64,
}

/// A rejected input row and why it was rejected.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Diagnostic {
    /// 1-based line (CSV) or record index (JSON).
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransitionFormat {
    Csv,
    Json,
}

#[derive(Debug)]
pub struct ParsedTransitions {
    pub records: Vec<TransitionRecord>,
    pub diagnostics: Vec<Diagnostic>,
}

/// Parse a transition dataset. Well-formed rows become records in input
/// order; malformed rows are collected as diagnostics. Zero valid rows is an
/// error.
pub fn parse_transitions<R: Read>(
    source: R,
    format: TransitionFormat,
) -> Result<ParsedTransitions, IngestError> {
    let parsed = match format {
        TransitionFormat::Csv => parse_csv(source)?,
        TransitionFormat::Json => parse_json(source)?,
    };
    if parsed.records.is_empty() {
        return Err(IngestError::EmptyDataset {
            rejected: parsed.diagnostics.len(),
        });
    }
    Ok(parsed)
}

fn parse_csv<R: Read>(source: R) -> Result<ParsedTransitions, IngestError> {
    let reader = BufReader::new(source);
    let mut records = Vec::new();
    let mut diagnostics = Vec::new();
    let mut saw_data_line = false;
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        if !saw_data_line {
            saw_data_line = true;
            // optional header
            if trimmed.eq_ignore_ascii_case("src,dst,weight") {
                continue;
            }
        }
        match parse_csv_row(trimmed) {
            Ok(rec) => records.push(rec),
            Err(message) => diagnostics.push(Diagnostic {
                line: lineno,
                message,
            }),
        }
    }
    Ok(ParsedTransitions {
        records,
        diagnostics,
    })
}

fn parse_csv_row(row: &str) -> Result<TransitionRecord, String> {
    let fields: Vec<&str> = row.split(',').map(str::trim).collect();
    if fields.len() != 3 {
        return Err(format!("expected 3 fields, got {}", fields.len()));
    }
    if fields[0].is_empty() || fields[1].is_empty() {
        return Err("empty src or dst field".to_string());
    }
    let weight: f64 = fields[2]
        .parse()
        .map_err(|_| format!("weight {:?} is not a number", fields[2]))?;
    if !weight.is_finite() || weight <= 0.0 {
        return Err(format!("weight must be positive, got {weight}"));
    }
    Ok(TransitionRecord {
        src_raw: fields[0].to_string(),
        dst_raw: fields[1].to_string(),
        weight,
    })
}

fn parse_json<R: Read>(mut source: R) -> Result<ParsedTransitions, IngestError> {
    let mut buf = String::new();
    source.read_to_string(&mut buf)?;
    let value: serde_json::Value =
        serde_json::from_str(&buf).map_err(|e| IngestError::Parse {
            format: "json",
            message: e.to_string(),
        })?;
    let array = value.as_array().ok_or_else(|| IngestError::Parse {
        format: "json",
        message: "top-level value must be an array of records".to_string(),
    })?;
    let mut records = Vec::new();
    let mut diagnostics = Vec::new();
    for (idx, item) in array.iter().enumerate() {
        match parse_json_record(item) {
            Ok(rec) => records.push(rec),
            Err(message) => diagnostics.push(Diagnostic {
                line: idx + 1,
                message,
            }),
        }
    }
    Ok(ParsedTransitions {
        records,
        diagnostics,
    })
}

fn parse_json_record(item: &serde_json::Value) -> Result<TransitionRecord, String> {
    let obj = item.as_object().ok_or("record must be an object")?;
    let src = obj
        .get("src")
        .and_then(|v| v.as_str())
        .ok_or("missing string field `src`")?;
    let dst = obj
        .get("dst")
        .and_then(|v| v.as_str())
        .ok_or("missing string field `dst`")?;
    let weight = obj
        .get("weight")
        .and_then(|v| v.as_f64())
        .ok_or("missing numeric field `weight`")?;
    if src.is_empty() || dst.is_empty() {
        return Err("empty src or dst field".to_string());
    }
    if !weight.is_finite() || weight <= 0.0 {
        return Err(format!("weight must be positive, got {weight}"));
    }
    Ok(TransitionRecord {
        src_raw: src.to_string(),
        dst_raw: dst.to_string(),
        weight,
    })
}

/// Serialize a graph back to the transition CSV format, edges in ascending
/// `(src, dst)` id order. Output always carries the header line.
pub fn write_transitions_csv<W: Write>(
    graph: &EcosystemGraph,
    mut sink: W,
) -> Result<u64, IngestError> {
    let mut out = String::from("src,dst,weight\n");
    for (u, v, w) in graph.edges() {
        let src = &graph.node(u).expect("edge endpoint exists").domain;
        let dst = &graph.node(v).expect("edge endpoint exists").domain;
        out.push_str(&format!("{src},{dst},{w}\n"));
    }
    sink.write_all(out.as_bytes())?;
    Ok(out.len() as u64)
}

/// Outcome of building a graph from parsed records.
#[derive(Debug)]
pub struct GraphBuild {
    pub graph: EcosystemGraph,
    /// Transitions dropped because src and dst normalize to the same domain.
    pub dropped_self_loops: usize,
    /// Records whose domains could not be normalized.
    pub rejected: Vec<Diagnostic>,
}

/// Fold records into a finalized graph, collecting per-record rejections.
pub fn build_graph(records: &[TransitionRecord]) -> GraphBuild {
    let mut builder = EcosystemGraphBuilder::new();
    let mut rejected = Vec::new();
    for (idx, rec) in records.iter().enumerate() {
        if let Err(e) = builder.add_transition(&rec.src_raw, &rec.dst_raw, rec.weight) {
            rejected.push(Diagnostic {
                line: idx + 1,
                message: e.to_string(),
            });
        }
    }
    let dropped_self_loops = builder.dropped_self_loops();
    GraphBuild {
        graph: builder.finish(),
        dropped_self_loops,
        rejected,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterMode {
    Allowlist,
    Blocklist,
}

/// List-driven relevance filter. The manual curation judgment lives in the
/// domain list; the code only applies set semantics.
#[derive(Debug, Clone)]
pub struct RelevanceFilter {
    pub mode: FilterMode,
    pub domains: BTreeSet<String>,
    /// Remove nodes left with no surviving transitions. Defaults to true.
    pub drop_isolated: bool,
}

impl RelevanceFilter {
    pub fn new(mode: FilterMode, domains: BTreeSet<String>) -> Self {
        RelevanceFilter {
            mode,
            domains,
            drop_isolated: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RemovalReason {
    NotAllowlisted,
    Blocklisted,
    Isolated,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Removal {
    pub domain: String,
    pub reason: RemovalReason,
}

/// Every removed domain with its reason, in original node order.
#[derive(Debug, Clone, Default, Serialize)]
pub struct RemovalReport {
    pub removed: Vec<Removal>,
}

/// Apply a relevance filter: keep/remove listed domains, then optionally
/// remove nodes isolated by the edge removal.
pub fn apply_filter(
    graph: &EcosystemGraph,
    filter: &RelevanceFilter,
) -> Result<(EcosystemGraph, RemovalReport), IngestError> {
    if filter.mode == FilterMode::Allowlist && filter.domains.is_empty() {
        return Err(IngestError::Config(
            "allowlist filter requires a non-empty domain list".to_string(),
        ));
    }
    let mut report = RemovalReport::default();
    let listed_reason = match filter.mode {
        FilterMode::Allowlist => RemovalReason::NotAllowlisted,
        FilterMode::Blocklist => RemovalReason::Blocklisted,
    };
    for node in graph.nodes() {
        let listed = filter.domains.contains(&node.domain);
        let keep = match filter.mode {
            FilterMode::Allowlist => listed,
            FilterMode::Blocklist => !listed,
        };
        if !keep {
            report.removed.push(Removal {
                domain: node.domain.clone(),
                reason: listed_reason,
            });
        }
    }
    let removed_set: BTreeSet<&str> = report.removed.iter().map(|r| r.domain.as_str()).collect();
    let mut filtered = graph.induced_subgraph(|n| !removed_set.contains(n.domain.as_str()));
    if filter.drop_isolated {
        let isolated: BTreeSet<String> = filtered
            .nodes()
            .filter(|n| {
                filtered
                    .degree(n.id, DegreeMode::Total, false)
                    .expect("node exists")
                    == 0.0
            })
            .map(|n| n.domain.clone())
            .collect();
        if !isolated.is_empty() {
            filtered = filtered.induced_subgraph(|n| !isolated.contains(&n.domain));
            for domain in isolated {
                report.removed.push(Removal {
                    domain,
                    reason: RemovalReason::Isolated,
                });
            }
        }
    }
    Ok((filtered, report))
}

/// Parse a domain-list file: one domain per line, `#` comments, blank lines
/// ignored. Domains are normalized; duplicates collapse to first mention.
pub fn parse_domain_list<R: Read>(source: R) -> Result<Vec<String>, IngestError> {
    let reader = BufReader::new(source);
    let mut seen = BTreeSet::new();
    let mut domains = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let domain = normalize_domain(trimmed).map_err(|_| IngestError::Parse {
            format: "domain list",
            message: format!("line {}: {:?} is not a domain", idx + 1, trimmed),
        })?;
        if seen.insert(domain.clone()) {
            domains.push(domain);
        }
    }
    Ok(domains)
}

/// A site similar to some focal site, with its similarity score in [0, 100].
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarSite {
    pub domain: String,
    pub score: f64,
}

/// A referral neighbor. Weight is optional; absent means the source records
/// only that the referral exists.
#[derive(Debug, Clone, PartialEq)]
pub struct Referral {
    pub domain: String,
    pub weight: Option<f64>,
}

/// Provider data for one site: top similar sites plus top preceding and
/// subsequent referral sites.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SiteEntry {
    pub similar: Vec<SimilarSite>,
    pub referrals_in: Vec<Referral>,
    pub referrals_out: Vec<Referral>,
}

/// Offline stand-in for a live similarity/referral data source.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SamplingFixture {
    sites: BTreeMap<String, SiteEntry>,
}

impl SamplingFixture {
    pub fn from_sites(sites: BTreeMap<String, SiteEntry>) -> Self {
        SamplingFixture { sites }
    }

    pub fn site(&self, domain: &str) -> Option<&SiteEntry> {
        self.sites.get(domain)
    }

    pub fn contains(&self, domain: &str) -> bool {
        self.sites.contains_key(domain)
    }

    pub fn domains(&self) -> impl Iterator<Item = &str> {
        self.sites.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }
}

/// Load a sampling fixture from JSON. Similar lists are sorted by descending
/// score (ties by domain) and capped at five entries, as are referral lists.
pub fn load_fixture<R: Read>(mut source: R) -> Result<SamplingFixture, IngestError> {
    let mut buf = String::new();
    source.read_to_string(&mut buf)?;
    let value: serde_json::Value =
        serde_json::from_str(&buf).map_err(|e| IngestError::Schema {
            path: "$".to_string(),
            message: e.to_string(),
        })?;
    let root = expect_object(&value, "$")?;
    let sites_value = root.get("sites").ok_or_else(|| IngestError::Schema {
        path: "$".to_string(),
        message: "missing required key `sites`".to_string(),
    })?;
    for key in root.keys() {
        if key != "sites" {
            return Err(IngestError::Schema {
                path: format!("$.{key}"),
                message: "unknown key".to_string(),
            });
        }
    }
    let sites_obj = expect_object(sites_value, "$.sites")?;
    let mut sites = BTreeMap::new();
    for (raw_domain, entry_value) in sites_obj {
        let path = format!("$.sites.{raw_domain}");
        let domain = normalize_domain(raw_domain).map_err(|e| IngestError::Validation {
            path: path.clone(),
            message: e.to_string(),
        })?;
        let entry = parse_site_entry(entry_value, &path)?;
        if sites.insert(domain.clone(), entry).is_some() {
            return Err(IngestError::Validation {
                path,
                message: format!("duplicate site `{domain}` after normalization"),
            });
        }
    }
    Ok(SamplingFixture { sites })
}

fn expect_object<'v>(
    value: &'v serde_json::Value,
    path: &str,
) -> Result<&'v serde_json::Map<String, serde_json::Value>, IngestError> {
    value.as_object().ok_or_else(|| IngestError::Schema {
        path: path.to_string(),
        message: "expected an object".to_string(),
    })
}

fn parse_site_entry(value: &serde_json::Value, path: &str) -> Result<SiteEntry, IngestError> {
    let obj = expect_object(value, path)?;
    for key in obj.keys() {
        if !matches!(key.as_str(), "similar" | "referrals_in" | "referrals_out") {
            return Err(IngestError::Schema {
                path: format!("{path}.{key}"),
                message: "unknown key".to_string(),
            });
        }
    }
    let mut similar = match obj.get("similar") {
        None => Vec::new(),
        Some(v) => parse_similar_list(v, &format!("{path}.similar"))?,
    };
    // descending score, ties broken by domain for a stable top-5
    similar.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .expect("scores are finite")
            .then_with(|| a.domain.cmp(&b.domain))
    });
    similar.truncate(PROVIDER_LIST_CAP);
    let mut referrals_in = match obj.get("referrals_in") {
        None => Vec::new(),
        Some(v) => parse_referral_list(v, &format!("{path}.referrals_in"))?,
    };
    referrals_in.truncate(PROVIDER_LIST_CAP);
    let mut referrals_out = match obj.get("referrals_out") {
        None => Vec::new(),
        Some(v) => parse_referral_list(v, &format!("{path}.referrals_out"))?,
    };
    referrals_out.truncate(PROVIDER_LIST_CAP);
    Ok(SiteEntry {
        similar,
        referrals_in,
        referrals_out,
    })
}

fn parse_similar_list(
    value: &serde_json::Value,
    path: &str,
) -> Result<Vec<SimilarSite>, IngestError> {
    let array = value.as_array().ok_or_else(|| IngestError::Schema {
        path: path.to_string(),
        message: "expected an array".to_string(),
    })?;
    let mut out = Vec::with_capacity(array.len());
    for (i, item) in array.iter().enumerate() {
        let item_path = format!("{path}[{i}]");
        let obj = expect_object(item, &item_path)?;
        let raw = obj
            .get("domain")
            .and_then(|v| v.as_str())
            .ok_or_else(|| IngestError::Schema {
                path: format!("{item_path}.domain"),
                message: "expected a string".to_string(),
            })?;
        let score = obj
            .get("score")
            .and_then(|v| v.as_f64())
            .ok_or_else(|| IngestError::Schema {
                path: format!("{item_path}.score"),
                message: "expected a number".to_string(),
            })?;
        if !(0.0..=100.0).contains(&score) {
            return Err(IngestError::Validation {
                path: format!("{item_path}.score"),
                message: format!("similarity score {score} outside [0, 100]"),
            });
        }
        let domain = normalize_domain(raw).map_err(|e| IngestError::Validation {
            path: format!("{item_path}.domain"),
            message: e.to_string(),
        })?;
        out.push(SimilarSite { domain, score });
    }
    Ok(out)
}

fn parse_referral_list(
    value: &serde_json::Value,
    path: &str,
) -> Result<Vec<Referral>, IngestError> {
    let array = value.as_array().ok_or_else(|| IngestError::Schema {
        path: path.to_string(),
        message: "expected an array".to_string(),
    })?;
    let mut out = Vec::with_capacity(array.len());
    for (i, item) in array.iter().enumerate() {
        let item_path = format!("{path}[{i}]");
        let (raw, weight) = match item {
            serde_json::Value::String(s) => (s.as_str(), None),
            serde_json::Value::Object(obj) => {
                for key in obj.keys() {
                    if !matches!(key.as_str(), "domain" | "weight") {
                        return Err(IngestError::Schema {
                            path: format!("{item_path}.{key}"),
                            message: "unknown key".to_string(),
                        });
                    }
                }
                let raw = obj
                    .get("domain")
                    .and_then(|v| v.as_str())
                    .ok_or_else(|| IngestError::Schema {
                        path: format!("{item_path}.domain"),
                        message: "expected a string".to_string(),
                    })?;
                let weight = match obj.get("weight") {
                    None => None,
                    Some(v) => {
                        let w = v.as_f64().ok_or_else(|| IngestError::Schema {
                            path: format!("{item_path}.weight"),
                            message: "expected a number".to_string(),
                        })?;
                        if !w.is_finite() || w <= 0.0 {
                            return Err(IngestError::Validation {
                                path: format!("{item_path}.weight"),
                                message: format!("referral weight must be positive, got {w}"),
                            });
                        }
                        Some(w)
                    }
                };
                (raw, weight)
            }
            _ => {
                return Err(IngestError::Schema {
                    path: item_path,
                    message: "expected a string or an object".to_string(),
                })
            }
        };
        let domain = normalize_domain(raw).map_err(|e| IngestError::Validation {
            path: item_path.clone(),
            message: e.to_string(),
        })?;
        out.push(Referral { domain, weight });
    }
    Ok(out)
}
