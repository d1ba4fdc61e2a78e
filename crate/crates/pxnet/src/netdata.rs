//! Network data model, covariate ingestion, and design-matrix construction.
//!
//! Three CSV surfaces:
//! - edge files `i,j[,y]` — without a `y` column the file is an edge list
//!   (listed pairs are 1, everything else 0); with one, listed pairs carry the
//!   given response and unlisted pairs are missing,
//! - node attribute files `id,<attr>...`,
//! - self-contained design files `i,j,y,<col>...` with a JSON metadata
//!   sidecar, which round-trip a [`NetworkData`] exactly.
//!
//! Actor ids are remapped to contiguous 0-based ids by sorting the original
//! ids, so ingestion is deterministic.

use crate::error::{PxError, Result};
use crate::relindex::RelationIndex;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

/// A fully assembled data set: responses over the vectorized upper triangle,
/// a missingness mask, and the design matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkData {
    pub n: usize,
    /// Length `n(n-1)/2`; entries are 0/1 where observed, 0 where missing.
    pub y: DVector<f64>,
    /// `observed[d]` is false for missing relations.
    pub observed: Vec<bool>,
    /// `n(n-1)/2 x p`; may contain NaN cells before imputation.
    pub x: DMatrix<f64>,
    pub columns: Vec<String>,
}

impl NetworkData {
    pub fn index(&self) -> RelationIndex {
        RelationIndex::new(self.n).expect("validated at construction")
    }

    pub fn relation_count(&self) -> usize {
        self.y.len()
    }

    pub fn observed_count(&self) -> usize {
        self.observed.iter().filter(|&&o| o).count()
    }

    pub fn has_missing(&self) -> bool {
        self.observed.iter().any(|&o| !o)
    }

    pub fn new(
        n: usize,
        y: DVector<f64>,
        observed: Vec<bool>,
        x: DMatrix<f64>,
        columns: Vec<String>,
    ) -> Result<Self> {
        let idx = RelationIndex::new(n)?;
        let m = idx.len();
        if y.len() != m || observed.len() != m || x.nrows() != m {
            return Err(PxError::Domain(format!(
                "inconsistent sizes: n={n} implies {m} relations, got y={}, mask={}, x rows={}",
                y.len(),
                observed.len(),
                x.nrows()
            )));
        }
        if x.ncols() != columns.len() {
            return Err(PxError::Domain(format!(
                "{} design columns but {} column names",
                x.ncols(),
                columns.len()
            )));
        }
        for d in 0..m {
            if observed[d] && y[d] != 0.0 && y[d] != 1.0 {
                return Err(PxError::Parse(format!(
                    "response at relation {d} is {}, need 0 or 1",
                    y[d]
                )));
            }
        }
        Ok(Self { n, y, observed, x, columns })
    }

    /// Copy with additional relations marked missing (fold hold-out).
    pub fn with_held_out(&self, targets: &[usize]) -> Result<Self> {
        let mut observed = self.observed.clone();
        let mut y = self.y.clone();
        for &d in targets {
            if d >= observed.len() {
                return Err(PxError::Domain(format!("relation index {d} out of range")));
            }
            observed[d] = false;
            y[d] = 0.0;
        }
        Ok(Self { observed, y, ..self.clone() })
    }
}

/// Per-actor attribute table with original ids preserved.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeAttributes {
    /// Sorted original ids; position in this vector is the contiguous id.
    pub original_ids: Vec<u64>,
    pub columns: Vec<NodeColumn>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeColumn {
    pub name: String,
    pub data: NodeColumnData,
}

#[derive(Debug, Clone, PartialEq)]
pub enum NodeColumnData {
    Numeric(Vec<f64>),
    Categorical(Vec<String>),
}

impl NodeAttributes {
    pub fn len(&self) -> usize {
        self.original_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.original_ids.is_empty()
    }

    /// The class-label column: `class` if present, else `value` (the usual
    /// attribute name in converted GML files), else the first categorical
    /// column.
    pub fn class_column(&self) -> Option<&[String]> {
        let by_name = |want: &str| {
            self.columns.iter().find_map(|c| match (&c.data, c.name.eq_ignore_ascii_case(want)) {
                (NodeColumnData::Categorical(v), true) => Some(v.as_slice()),
                _ => None,
            })
        };
        by_name("class").or_else(|| by_name("value")).or_else(|| {
            self.columns.iter().find_map(|c| match &c.data {
                NodeColumnData::Categorical(v) => Some(v.as_slice()),
                _ => None,
            })
        })
    }
}

/// Parse result of the edge/node surface before a design matrix exists.
#[derive(Debug, Clone)]
pub struct LoadedNetwork {
    pub n: usize,
    pub y: DVector<f64>,
    pub observed: Vec<bool>,
    pub nodes: Option<NodeAttributes>,
    pub original_ids: Vec<u64>,
}

struct EdgeTable {
    rows: Vec<(u64, u64, Option<f64>)>,
    has_response_column: bool,
}

fn parse_edge_table(bytes: &[u8]) -> Result<EdgeTable> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(bytes);
    let headers = reader.headers()?.clone();
    let cols: Vec<String> = headers.iter().map(|h| h.trim().to_ascii_lowercase()).collect();
    if cols.len() < 2 || cols[0] != "i" || cols[1] != "j" {
        return Err(PxError::Parse(
            "edge file must start with header columns i,j".into(),
        ));
    }
    let has_response_column = match cols.len() {
        2 => false,
        3 if cols[2] == "y" => true,
        _ => {
            return Err(PxError::Parse(format!(
                "unexpected edge file header {headers:?}; want i,j or i,j,y"
            )))
        }
    };
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record?;
        let parse_id = |field: &str, name: &str| {
            field.parse::<u64>().map_err(|_| {
                PxError::Parse(format!("actor id {name}={field:?} is not a nonnegative integer"))
            })
        };
        let i = parse_id(&record[0], "i")?;
        let j = parse_id(&record[1], "j")?;
        if i == j {
            return Err(PxError::Parse(format!("self-loop ({i},{i}) is not a relation")));
        }
        let y = if has_response_column {
            let field = record.get(2).unwrap_or("");
            if field.is_empty() {
                None
            } else {
                let v: f64 = field
                    .parse()
                    .map_err(|_| PxError::Parse(format!("response {field:?} is not numeric")))?;
                if v != 0.0 && v != 1.0 {
                    return Err(PxError::Parse(format!("response {v} is not binary")));
                }
                Some(v)
            }
        } else {
            Some(1.0)
        };
        rows.push((i, j, y));
    }
    Ok(EdgeTable { rows, has_response_column })
}

/// Parse a node attribute CSV. Columns whose every value parses as a number
/// become numeric (empty cells as NaN); anything else stays categorical. Ids
/// are sorted into the contiguous actor order.
pub fn parse_node_csv(bytes: &[u8]) -> Result<NodeAttributes> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(bytes);
    let headers = reader.headers()?.clone();
    if headers.is_empty() || !headers[0].trim().eq_ignore_ascii_case("id") {
        return Err(PxError::Parse("node file must start with an id column".into()));
    }
    let attr_names: Vec<String> = headers.iter().skip(1).map(|h| h.trim().to_string()).collect();
    let mut by_id: BTreeMap<u64, Vec<String>> = BTreeMap::new();
    for record in reader.records() {
        let record = record?;
        if record.len() != attr_names.len() + 1 {
            return Err(PxError::Parse("ragged node attribute row".into()));
        }
        let id: u64 = record[0].parse().map_err(|_| {
            PxError::Parse(format!("node id {:?} is not a nonnegative integer", &record[0]))
        })?;
        let values: Vec<String> = record.iter().skip(1).map(|s| s.to_string()).collect();
        if by_id.insert(id, values).is_some() {
            return Err(PxError::Parse(format!("duplicate node id {id}")));
        }
    }
    let original_ids: Vec<u64> = by_id.keys().copied().collect();
    let mut columns = Vec::with_capacity(attr_names.len());
    for (c, name) in attr_names.iter().enumerate() {
        let raw: Vec<&str> = by_id.values().map(|v| v[c].as_str()).collect();
        let numeric: Option<Vec<f64>> = raw
            .iter()
            .map(|s| if s.is_empty() { Some(f64::NAN) } else { s.parse::<f64>().ok() })
            .collect();
        let data = match numeric {
            Some(values) => NodeColumnData::Numeric(values),
            None => NodeColumnData::Categorical(raw.iter().map(|s| s.to_string()).collect()),
        };
        columns.push(NodeColumn { name: name.clone(), data });
    }
    Ok(NodeAttributes { original_ids, columns })
}

/// Assemble responses and mask from raw edge/node bytes.
pub fn parse_network(edge_bytes: &[u8], node_bytes: Option<&[u8]>) -> Result<LoadedNetwork> {
    let edges = parse_edge_table(edge_bytes)?;
    let nodes = node_bytes.map(parse_node_csv).transpose()?;

    let original_ids: Vec<u64> = match &nodes {
        Some(n) => {
            let known: std::collections::BTreeSet<u64> = n.original_ids.iter().copied().collect();
            for &(i, j, _) in &edges.rows {
                if !known.contains(&i) || !known.contains(&j) {
                    return Err(PxError::Parse(format!(
                        "edge ({i},{j}) references an id absent from the node file"
                    )));
                }
            }
            n.original_ids.clone()
        }
        None => {
            let mut ids: Vec<u64> = edges.rows.iter().flat_map(|&(i, j, _)| [i, j]).collect();
            ids.sort_unstable();
            ids.dedup();
            ids
        }
    };
    let n = original_ids.len();
    let idx = RelationIndex::new(n)?;
    let remap: BTreeMap<u64, usize> =
        original_ids.iter().enumerate().map(|(pos, &id)| (id, pos)).collect();

    let mut y = DVector::zeros(idx.len());
    let mut seen = vec![false; idx.len()];
    let mut observed = vec![!edges.has_response_column; idx.len()];
    for &(i0, j0, resp) in &edges.rows {
        let (a, b) = (remap[&i0], remap[&j0]);
        let d = idx.pair_to_index(a.min(b), a.max(b))?;
        if seen[d] {
            return Err(PxError::Parse(format!("duplicate relation ({i0},{j0})")));
        }
        seen[d] = true;
        if let Some(v) = resp {
            y[d] = v;
            observed[d] = true;
        }
    }

    Ok(LoadedNetwork { n, y, observed, nodes, original_ids })
}

/// Read and assemble a network from file paths.
pub fn load_network(edge_path: &Path, node_path: Option<&Path>) -> Result<LoadedNetwork> {
    let edge_bytes = std::fs::read(edge_path)?;
    let node_bytes = node_path.map(std::fs::read).transpose()?;
    parse_network(&edge_bytes, node_bytes.as_deref())
}

fn is_neutral(label: &str) -> bool {
    let l = label.trim().to_ascii_lowercase();
    l == "n" || l == "neutral"
}

/// Design for the class-alignment regression: intercept, same-class
/// indicator, and an indicator that either actor is labeled neutral.
pub fn polbooks_design(nodes: &NodeAttributes) -> Result<(DMatrix<f64>, Vec<String>)> {
    let classes = nodes
        .class_column()
        .ok_or_else(|| PxError::Parse("no class label column in node attributes".into()))?;
    if classes.iter().any(|c| c.trim().is_empty()) {
        return Err(PxError::Parse("missing class label for some actor".into()));
    }
    let n = nodes.len();
    let idx = RelationIndex::new(n)?;
    let norm: Vec<String> = classes.iter().map(|c| c.trim().to_ascii_lowercase()).collect();
    let mut x = DMatrix::zeros(idx.len(), 3);
    for (d, (i, j)) in idx.pairs().enumerate() {
        x[(d, 0)] = 1.0;
        x[(d, 1)] = f64::from(norm[i] == norm[j]);
        x[(d, 2)] = f64::from(is_neutral(&norm[i]) || is_neutral(&norm[j]));
    }
    Ok((x, vec!["intercept".into(), "same_class".into(), "either_neutral".into()]))
}

/// Design for the simulation-study regression: intercept, joint-class
/// indicator `1[x1_i = 1] * 1[x1_j = 1]`, absolute difference `|x2_i - x2_j|`,
/// and a dyadic covariate.
pub fn sim_design(
    x1: &[f64],
    x2: &[f64],
    x3: &DVector<f64>,
) -> Result<(DMatrix<f64>, Vec<String>)> {
    let n = x1.len();
    if x2.len() != n {
        return Err(PxError::Domain(format!(
            "nodal covariate lengths differ: {} vs {}",
            x1.len(),
            x2.len()
        )));
    }
    let idx = RelationIndex::new(n)?;
    if x3.len() != idx.len() {
        return Err(PxError::Domain(format!(
            "dyadic covariate length {} != relation count {}",
            x3.len(),
            idx.len()
        )));
    }
    let mut x = DMatrix::zeros(idx.len(), 4);
    for (d, (i, j)) in idx.pairs().enumerate() {
        x[(d, 0)] = 1.0;
        x[(d, 1)] = f64::from(x1[i] == 1.0 && x1[j] == 1.0);
        x[(d, 2)] = (x2[i] - x2[j]).abs();
        x[(d, 3)] = x3[d];
    }
    Ok((x, vec!["intercept".into(), "both_in_class".into(), "abs_diff".into(), "dyadic".into()]))
}

/// Replace NaN design cells by their column mean over non-NaN cells.
pub fn impute_missing_design(x: &mut DMatrix<f64>) -> Result<()> {
    for c in 0..x.ncols() {
        let (mut sum, mut count) = (0.0, 0usize);
        for v in x.column(c).iter() {
            if v.is_nan() {
                continue;
            }
            if !v.is_finite() {
                return Err(PxError::Parse(format!("non-finite covariate in column {c}")));
            }
            sum += v;
            count += 1;
        }
        if count == 0 {
            return Err(PxError::Degenerate(format!("design column {c} is entirely missing")));
        }
        if count < x.nrows() {
            let mean = sum / count as f64;
            for r in 0..x.nrows() {
                if x[(r, c)].is_nan() {
                    x[(r, c)] = mean;
                }
            }
        }
    }
    Ok(())
}

/// Rank check via singular values; estimation refuses rank-deficient designs.
pub fn check_full_rank(x: &DMatrix<f64>) -> Result<()> {
    if x.ncols() == 0 || x.nrows() < x.ncols() {
        return Err(PxError::RankDeficient(format!(
            "{} rows x {} columns",
            x.nrows(),
            x.ncols()
        )));
    }
    let svd = x.clone().svd(false, false);
    let max = svd.singular_values.max();
    let min = svd.singular_values.min();
    if !(max > 0.0) || min / max < 1e-10 {
        return Err(PxError::RankDeficient(format!("singular value ratio {:.3e}", min / max)));
    }
    Ok(())
}

/// JSON sidecar describing a design CSV.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct DesignMeta {
    pub n: usize,
    pub columns: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub formula: Option<String>,
}

/// Write a self-contained design CSV (`i,j,y,<columns>`; `y` empty where
/// missing) plus its `.meta.json` sidecar.
pub fn write_design_csv(path: &Path, data: &NetworkData) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    let mut header = vec!["i".to_string(), "j".to_string(), "y".to_string()];
    header.extend(data.columns.iter().cloned());
    writer.write_record(&header)?;
    let idx = data.index();
    for (d, (i, j)) in idx.pairs().enumerate() {
        let mut record = vec![i.to_string(), j.to_string()];
        record.push(if data.observed[d] { format!("{}", data.y[d]) } else { String::new() });
        for c in 0..data.x.ncols() {
            let v = data.x[(d, c)];
            record.push(if v.is_nan() { String::new() } else { format!("{v}") });
        }
        writer.write_record(&record)?;
    }
    writer.flush()?;
    let meta = DesignMeta { n: data.n, columns: data.columns.clone(), formula: None };
    std::fs::write(meta_path(path), serde_json::to_string_pretty(&meta)?)?;
    Ok(())
}

pub fn meta_path(design_path: &Path) -> std::path::PathBuf {
    let mut os = design_path.as_os_str().to_owned();
    os.push(".meta.json");
    std::path::PathBuf::from(os)
}

/// Parse a design CSV from bytes. Rows must cover a full upper triangle.
pub fn parse_design_csv(bytes: &[u8]) -> Result<NetworkData> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(bytes);
    let headers = reader.headers()?.clone();
    let cols: Vec<String> = headers.iter().map(|h| h.trim().to_string()).collect();
    if cols.len() < 4
        || !cols[0].eq_ignore_ascii_case("i")
        || !cols[1].eq_ignore_ascii_case("j")
        || !cols[2].eq_ignore_ascii_case("y")
    {
        return Err(PxError::Parse("design file header must start with i,j,y".into()));
    }
    let column_names: Vec<String> = cols[3..].to_vec();

    struct Row {
        i: u64,
        j: u64,
        y: Option<f64>,
        x: Vec<f64>,
    }
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record?;
        let i: u64 = record[0]
            .parse()
            .map_err(|_| PxError::Parse(format!("bad actor id {:?}", &record[0])))?;
        let j: u64 = record[1]
            .parse()
            .map_err(|_| PxError::Parse(format!("bad actor id {:?}", &record[1])))?;
        if i == j {
            return Err(PxError::Parse(format!("self-loop ({i},{i})")));
        }
        let y = if record[2].is_empty() {
            None
        } else {
            let v: f64 = record[2]
                .parse()
                .map_err(|_| PxError::Parse(format!("bad response {:?}", &record[2])))?;
            if v != 0.0 && v != 1.0 {
                return Err(PxError::Parse(format!("response {v} is not binary")));
            }
            Some(v)
        };
        let mut x = Vec::with_capacity(column_names.len());
        for field in record.iter().skip(3) {
            if field.is_empty() {
                x.push(f64::NAN);
            } else {
                x.push(
                    field
                        .parse()
                        .map_err(|_| PxError::Parse(format!("bad covariate {field:?}")))?,
                );
            }
        }
        if x.len() != column_names.len() {
            return Err(PxError::Parse("ragged design row".into()));
        }
        rows.push(Row { i, j, y, x });
    }

    let mut ids: Vec<u64> = rows.iter().flat_map(|r| [r.i, r.j]).collect();
    ids.sort_unstable();
    ids.dedup();
    let n = ids.len();
    let idx = RelationIndex::new(n)?;
    if rows.len() != idx.len() {
        return Err(PxError::Parse(format!(
            "design file has {} rows but {} actors imply {} relations",
            rows.len(),
            n,
            idx.len()
        )));
    }
    let remap: BTreeMap<u64, usize> = ids.iter().enumerate().map(|(p, &id)| (id, p)).collect();
    let mut y = DVector::zeros(idx.len());
    let mut observed = vec![false; idx.len()];
    let mut x = DMatrix::from_element(idx.len(), column_names.len(), f64::NAN);
    let mut seen = vec![false; idx.len()];
    for row in &rows {
        let (a, b) = (remap[&row.i], remap[&row.j]);
        let d = idx.pair_to_index(a.min(b), a.max(b))?;
        if seen[d] {
            return Err(PxError::Parse(format!("duplicate relation ({},{})", row.i, row.j)));
        }
        seen[d] = true;
        if let Some(v) = row.y {
            y[d] = v;
            observed[d] = true;
        }
        for (c, &v) in row.x.iter().enumerate() {
            x[(d, c)] = v;
        }
    }
    NetworkData::new(n, y, observed, x, column_names)
}

/// Load a design CSV from disk.
pub fn load_design_csv(path: &Path) -> Result<NetworkData> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    parse_design_csv(&bytes)
}
