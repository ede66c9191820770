//! Mixed continuous/ordinal datasets with missing cells, and their CSV form.
//!
//! Column kinds always come from an explicit [`Schema`]; nothing is inferred
//! from the data. Ordinal categories are the contiguous integers `1..=levels`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::Real;

pub const DEFAULT_MISSING_TOKEN: &str = "NA";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum ColumnKind {
    Continuous,
    Ordinal { levels: u32 },
}

impl ColumnKind {
    pub fn ordinal(levels: u32) -> Result<Self> {
        if levels < 2 {
            return Err(Error::Schema(format!(
                "ordinal columns need at least 2 levels, got {levels}"
            )));
        }
        Ok(ColumnKind::Ordinal { levels })
    }

    pub fn is_ordinal(&self) -> bool {
        matches!(self, ColumnKind::Ordinal { .. })
    }

    pub fn levels(&self) -> Option<u32> {
        match *self {
            ColumnKind::Ordinal { levels } => Some(levels),
            ColumnKind::Continuous => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ColumnSpec {
    pub name: String,
    pub kind: ColumnKind,
}

/// Column declarations, one per CSV column.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct Schema {
    pub columns: Vec<ColumnSpec>,
}

impl Schema {
    pub fn new(columns: Vec<ColumnSpec>) -> Self {
        Self { columns }
    }

    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    pub fn kinds(&self) -> Vec<ColumnKind> {
        self.columns.iter().map(|c| c.kind).collect()
    }

    /// Parses the `name,kind[,levels]` line format. Blank lines and lines
    /// starting with `#` are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut columns = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let parts: Vec<&str> = line.split(',').map(str::trim).collect();
            let bad = |msg: &str| Error::Schema(format!("line {}: {msg}: {raw:?}", lineno + 1));
            let kind = match (parts.get(1).copied(), parts.len()) {
                (Some("continuous"), 2) => ColumnKind::Continuous,
                (Some("ordinal"), 3) => {
                    let levels: u32 = parts[2].parse().map_err(|_| bad("bad level count"))?;
                    ColumnKind::ordinal(levels).map_err(|e| bad(&e.to_string()))?
                }
                (Some("ordinal"), _) => return Err(bad("ordinal needs a level count")),
                _ => return Err(bad("expected name,continuous or name,ordinal,levels")),
            };
            columns.push(ColumnSpec {
                name: parts[0].to_string(),
                kind,
            });
        }
        if columns.is_empty() {
            return Err(Error::Schema("schema declares no columns".into()));
        }
        Ok(Self { columns })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for c in &self.columns {
            match c.kind {
                ColumnKind::Continuous => writeln!(out, "{},continuous", c.name),
                ColumnKind::Ordinal { levels } => writeln!(out, "{},ordinal,{levels}", c.name),
            }
            .expect("write to String");
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}

/// An `n x p` table of optional values; `None` marks a missing cell.
///
/// Ordinal cells hold their category number as an integral value of `T`.
#[derive(Clone, Debug, PartialEq)]
pub struct MixedDataset<T> {
    names: Vec<String>,
    kinds: Vec<ColumnKind>,
    n_rows: usize,
    values: Vec<Option<T>>,
}

/// Observed/missing cells split by column kind, as `(row, col)` pairs.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CellIndexSets {
    pub obs_cont: Vec<(usize, usize)>,
    pub obs_ord: Vec<(usize, usize)>,
    pub miss_cont: Vec<(usize, usize)>,
    pub miss_ord: Vec<(usize, usize)>,
}

impl CellIndexSets {
    pub fn total(&self) -> usize {
        self.obs_cont.len() + self.obs_ord.len() + self.miss_cont.len() + self.miss_ord.len()
    }

    pub fn missing(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.miss_cont.iter().chain(&self.miss_ord).copied()
    }
}

impl<T: Real> MixedDataset<T> {
    /// `values` is row-major with length `n * p`.
    pub fn new(names: Vec<String>, kinds: Vec<ColumnKind>, values: Vec<Option<T>>) -> Result<Self> {
        let p = kinds.len();
        if p == 0 {
            return Err(Error::InvalidData(
                "dataset needs at least one column".into(),
            ));
        }
        if names.len() != p {
            return Err(Error::InvalidData(format!(
                "{} names for {p} columns",
                names.len()
            )));
        }
        if values.len() % p != 0 {
            return Err(Error::InvalidData(
                "value count is not a multiple of p".into(),
            ));
        }
        let n_rows = values.len() / p;
        if n_rows < 2 {
            return Err(Error::InvalidData(format!(
                "need at least 2 rows, got {n_rows}"
            )));
        }
        for (idx, v) in values.iter().enumerate() {
            let (i, j) = (idx / p, idx % p);
            if let Some(x) = *v {
                if !x.is_finite() {
                    return Err(Error::InvalidData(format!(
                        "non-finite value at row {i}, column {j}"
                    )));
                }
                if let ColumnKind::Ordinal { levels } = kinds[j] {
                    if x.fract() != T::zero()
                        || x < T::one()
                        || x > T::from_usize_lossy(levels as usize)
                    {
                        return Err(Error::OrdinalRange {
                            row: i + 1,
                            col: j + 1,
                            name: names[j].clone(),
                            value: x.to_string(),
                            levels,
                        });
                    }
                }
            }
        }
        for k in &kinds {
            if let ColumnKind::Ordinal { levels } = *k {
                ColumnKind::ordinal(levels)?;
            }
        }
        Ok(Self {
            names,
            kinds,
            n_rows,
            values,
        })
    }

    /// Columns named `x1..xp`.
    pub fn with_default_names(kinds: Vec<ColumnKind>, values: Vec<Option<T>>) -> Result<Self> {
        let names = (1..=kinds.len()).map(|j| format!("x{j}")).collect();
        Self::new(names, kinds, values)
    }

    /// Fully observed dataset from a dense matrix.
    pub fn from_matrix(names: Vec<String>, kinds: Vec<ColumnKind>, m: &Matrix<T>) -> Result<Self> {
        Self::new(
            names,
            kinds,
            m.as_slice().iter().map(|&x| Some(x)).collect(),
        )
    }

    #[inline]
    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    #[inline]
    pub fn n_cols(&self) -> usize {
        self.kinds.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn kinds(&self) -> &[ColumnKind] {
        &self.kinds
    }

    pub fn schema(&self) -> Schema {
        Schema::new(
            self.names
                .iter()
                .zip(&self.kinds)
                .map(|(name, &kind)| ColumnSpec {
                    name: name.clone(),
                    kind,
                })
                .collect(),
        )
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> Option<T> {
        self.values[i * self.n_cols() + j]
    }

    #[inline]
    pub fn is_observed(&self, i: usize, j: usize) -> bool {
        self.get(i, j).is_some()
    }

    /// Row-major observed mask.
    pub fn mask(&self) -> Vec<bool> {
        self.values.iter().map(Option::is_some).collect()
    }

    pub fn values(&self) -> &[Option<T>] {
        &self.values
    }

    pub fn observed_in_column(&self, j: usize) -> Vec<T> {
        (0..self.n_rows).filter_map(|i| self.get(i, j)).collect()
    }

    pub fn observed_count(&self, j: usize) -> usize {
        (0..self.n_rows).filter(|&i| self.is_observed(i, j)).count()
    }

    pub fn missing_count(&self) -> usize {
        self.values.iter().filter(|v| v.is_none()).count()
    }

    pub fn is_complete(&self) -> bool {
        self.values.iter().all(Option::is_some)
    }

    pub fn index_sets(&self) -> CellIndexSets {
        let mut s = CellIndexSets::default();
        for i in 0..self.n_rows {
            for (j, kind) in self.kinds.iter().enumerate() {
                let cell = (i, j);
                match (self.is_observed(i, j), kind.is_ordinal()) {
                    (true, false) => s.obs_cont.push(cell),
                    (true, true) => s.obs_ord.push(cell),
                    (false, false) => s.miss_cont.push(cell),
                    (false, true) => s.miss_ord.push(cell),
                }
            }
        }
        s
    }

    /// Copy with the listed cells removed.
    pub fn with_masked(&self, cells: &[(usize, usize)]) -> Self {
        let mut out = self.clone();
        let p = self.n_cols();
        for &(i, j) in cells {
            out.values[i * p + j] = None;
        }
        out
    }

    /// Copy with cells replaced. Values are not revalidated against the
    /// schema; callers fill from the same column's support.
    pub fn with_filled(&self, fills: impl IntoIterator<Item = ((usize, usize), T)>) -> Self {
        let mut out = self.clone();
        let p = self.n_cols();
        for ((i, j), v) in fills {
            out.values[i * p + j] = Some(v);
        }
        out
    }

    /// Dense copy with missing cells set to `fill`.
    pub fn to_matrix(&self, fill: T) -> Matrix<T> {
        Matrix::from_row_major(
            self.n_rows,
            self.n_cols(),
            self.values.iter().map(|v| v.unwrap_or(fill)).collect(),
        )
    }

    pub fn map_values<U: Real>(&self, f: impl Fn(T) -> U) -> MixedDataset<U> {
        MixedDataset {
            names: self.names.clone(),
            kinds: self.kinds.clone(),
            n_rows: self.n_rows,
            values: self.values.iter().map(|v| v.map(&f)).collect(),
        }
    }
}

fn format_value<T: Real>(kind: ColumnKind, x: T) -> String {
    match kind {
        ColumnKind::Ordinal { .. } => format!("{}", x.f64() as i64),
        // Display prints the shortest string that parses back to the same bits.
        ColumnKind::Continuous => format!("{x}"),
    }
}

pub fn read_csv<T: Real>(
    path: &Path,
    schema: &Schema,
    missing_token: &str,
) -> Result<MixedDataset<T>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv_from(file, schema, missing_token)
}

pub fn read_csv_from<T: Real, R: std::io::Read>(
    reader: R,
    schema: &Schema,
    missing_token: &str,
) -> Result<MixedDataset<T>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let p = schema.len();
    if header.len() != p {
        return Err(Error::Schema(format!(
            "header has {} columns, schema declares {p}",
            header.len()
        )));
    }
    let kinds = schema.kinds();
    let mut values = Vec::new();
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = r + 1;
        if rec.len() != p {
            return Err(Error::Ragged {
                row,
                found: rec.len(),
                expected: p,
            });
        }
        for (j, field) in rec.iter().enumerate() {
            let f = field.trim();
            if f.is_empty() || f == missing_token {
                values.push(None);
                continue;
            }
            let parse_err = || Error::Parse {
                row,
                col: j + 1,
                name: header[j].clone(),
                value: f.to_string(),
            };
            let x = match kinds[j] {
                ColumnKind::Continuous => {
                    let x: f64 = f.parse().map_err(|_| parse_err())?;
                    if !x.is_finite() {
                        return Err(parse_err());
                    }
                    T::from_f64(x).ok_or_else(parse_err)?
                }
                ColumnKind::Ordinal { levels } => {
                    let v: i64 = match f.parse::<i64>() {
                        Ok(v) => v,
                        Err(_) => {
                            let x: f64 = f.parse().map_err(|_| parse_err())?;
                            if x.fract() != 0.0 || !x.is_finite() {
                                return Err(parse_err());
                            }
                            x as i64
                        }
                    };
                    if v < 1 || v > levels as i64 {
                        return Err(Error::OrdinalRange {
                            row,
                            col: j + 1,
                            name: header[j].clone(),
                            value: f.to_string(),
                            levels,
                        });
                    }
                    T::lit(v as f64)
                }
            };
            values.push(Some(x));
        }
    }
    MixedDataset::new(header, kinds, values)
}

pub fn write_csv<T: Real>(d: &MixedDataset<T>, path: &Path, missing_token: &str) -> Result<()> {
    let text = to_csv_string(d, missing_token)?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn to_csv_string<T: Real>(d: &MixedDataset<T>, missing_token: &str) -> Result<String> {
    let mut wtr = csv::WriterBuilder::new().from_writer(Vec::new());
    wtr.write_record(d.names())?;
    let mut rec = Vec::with_capacity(d.n_cols());
    for i in 0..d.n_rows() {
        rec.clear();
        for (j, &kind) in d.kinds().iter().enumerate() {
            rec.push(match d.get(i, j) {
                Some(x) => format_value(kind, x),
                None => missing_token.to_string(),
            });
        }
        wtr.write_record(&rec)?;
    }
    let bytes = wtr
        .into_inner()
        .map_err(|e| Error::Numerical(format!("csv buffer: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

/// Writes the observed mask as 0/1 (1 = observed) with the dataset header.
pub fn write_mask_csv<T: Real>(d: &MixedDataset<T>, path: &Path) -> Result<()> {
    let mut wtr = csv::Writer::from_path(path)?;
    wtr.write_record(d.names())?;
    for i in 0..d.n_rows() {
        let rec: Vec<&str> = (0..d.n_cols())
            .map(|j| if d.is_observed(i, j) { "1" } else { "0" })
            .collect();
        wtr.write_record(&rec)?;
    }
    wtr.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Writes a dense matrix with the given header (or `c1..cp` when empty).
pub fn write_matrix_csv<T: Real>(m: &Matrix<T>, header: &[String], path: &Path) -> Result<()> {
    let mut wtr = csv::Writer::from_path(path)?;
    if header.is_empty() {
        let h: Vec<String> = (1..=m.cols()).map(|j| format!("c{j}")).collect();
        wtr.write_record(&h)?;
    } else {
        wtr.write_record(header)?;
    }
    for i in 0..m.rows() {
        wtr.write_record(m.row(i).iter().map(|x| x.to_string()))?;
    }
    wtr.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema(kinds: &[ColumnKind]) -> Schema {
        Schema::new(
            kinds
                .iter()
                .enumerate()
                .map(|(j, &kind)| ColumnSpec {
                    name: format!("v{j}"),
                    kind,
                })
                .collect(),
        )
    }

    #[test]
    fn one_na_gives_one_missing_cell() {
        let s = schema(&[ColumnKind::Continuous, ColumnKind::Continuous]);
        let text = "a,b\n1.0,2.0\nNA,3.5\n4,5\n";
        let d: MixedDataset<f64> = read_csv_from(text.as_bytes(), &s, "NA").unwrap();
        assert_eq!((d.n_rows(), d.n_cols()), (3, 2));
        assert_eq!(d.mask().iter().filter(|&&m| !m).count(), 1);
        assert!(!d.is_observed(1, 0));
        assert_eq!(d.names(), &["a", "b"]);
    }

    #[test]
    fn empty_field_is_missing() {
        let s = schema(&[ColumnKind::Continuous, ColumnKind::Continuous]);
        let d: MixedDataset<f64> = read_csv_from("a,b\n1,\n2,3\n".as_bytes(), &s, "NA").unwrap();
        assert!(!d.is_observed(0, 1));
    }

    #[test]
    fn ordinal_out_of_range_names_cell() {
        let s = schema(&[ColumnKind::Continuous, ColumnKind::ordinal(3).unwrap()]);
        let err = read_csv_from::<f64, _>("a,b\n1,2\n2,4\n".as_bytes(), &s, "NA").unwrap_err();
        match err {
            Error::OrdinalRange {
                row, col, value, ..
            } => {
                assert_eq!((row, col, value.as_str()), (2, 2, "4"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn ragged_row_rejected() {
        let s = schema(&[ColumnKind::Continuous, ColumnKind::Continuous]);
        let err = read_csv_from::<f64, _>("a,b\n1,2\n3\n".as_bytes(), &s, "NA").unwrap_err();
        assert!(matches!(
            err,
            Error::Ragged {
                row: 2,
                found: 1,
                expected: 2
            }
        ));
    }

    #[test]
    fn parse_failure_reports_position() {
        let s = schema(&[ColumnKind::Continuous, ColumnKind::Continuous]);
        let err = read_csv_from::<f64, _>("a,b\n1,2\n3,abc\n".as_bytes(), &s, "NA").unwrap_err();
        assert!(
            matches!(err, Error::Parse { row: 2, col: 2, .. }),
            "{err:?}"
        );
    }

    #[test]
    fn header_count_must_match_schema() {
        let s = schema(&[ColumnKind::Continuous]);
        assert!(read_csv_from::<f64, _>("a,b\n1,2\n3,4\n".as_bytes(), &s, "NA").is_err());
    }

    #[test]
    fn index_sets_examples() {
        let d = MixedDataset::<f64>::with_default_names(
            vec![ColumnKind::Continuous; 2],
            vec![Some(1.0), Some(2.0), Some(3.0), Some(4.0)],
        )
        .unwrap();
        let s = d.index_sets();
        assert_eq!(s.obs_cont.len(), 4);
        assert!(s.obs_ord.is_empty() && s.miss_cont.is_empty() && s.miss_ord.is_empty());

        let d = MixedDataset::<f64>::with_default_names(
            vec![ColumnKind::ordinal(2).unwrap()],
            vec![None, None, None],
        )
        .unwrap();
        assert_eq!(d.index_sets().miss_ord, vec![(0, 0), (1, 0), (2, 0)]);

        let d = MixedDataset::<f64>::with_default_names(
            vec![ColumnKind::Continuous, ColumnKind::ordinal(2).unwrap()],
            vec![Some(0.5), Some(1.0), None, Some(2.0)],
        )
        .unwrap();
        let s = d.index_sets();
        assert_eq!(s.obs_cont, vec![(0, 0)]);
        assert_eq!(s.miss_cont, vec![(1, 0)]);
        assert_eq!(s.obs_ord, vec![(0, 1), (1, 1)]);
        assert!(s.miss_ord.is_empty());
    }

    #[test]
    fn all_missing_column_writes_tokens() {
        let d = MixedDataset::<f64>::with_default_names(
            vec![ColumnKind::Continuous, ColumnKind::Continuous],
            vec![Some(1.0), None, Some(2.0), None],
        )
        .unwrap();
        let text = to_csv_string(&d, "NA").unwrap();
        assert_eq!(text, "x1,x2\n1,NA\n2,NA\n");
    }

    #[test]
    fn header_preserved_verbatim() {
        let s = schema(&[ColumnKind::Continuous, ColumnKind::Continuous]);
        let text = "Weird Name,\"with,comma\"\n1,2\n3,4\n";
        let d: MixedDataset<f64> = read_csv_from(text.as_bytes(), &s, "NA").unwrap();
        let out = to_csv_string(&d, "NA").unwrap();
        assert!(out.starts_with("Weird Name,\"with,comma\"\n"));
    }

    #[test]
    fn continuous_values_round_trip_bitwise() {
        let vals = [
            0.1 + 0.2,
            std::f64::consts::PI * 1e-7,
            -123456.789012345678,
            1e300,
        ];
        let d = MixedDataset::<f64>::with_default_names(
            vec![ColumnKind::Continuous],
            vals.iter().map(|&x| Some(x)).collect(),
        )
        .unwrap();
        let text = to_csv_string(&d, "NA").unwrap();
        let back: MixedDataset<f64> = read_csv_from(text.as_bytes(), &d.schema(), "NA").unwrap();
        for (i, &x) in vals.iter().enumerate() {
            assert_eq!(back.get(i, 0).unwrap().to_bits(), x.to_bits());
        }
    }

    #[test]
    fn schema_text_round_trip() {
        let text = "age,continuous\n# comment\n\ngrade,ordinal,5\n";
        let s = Schema::parse(text).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s.columns[1].kind, ColumnKind::Ordinal { levels: 5 });
        assert_eq!(Schema::parse(&s.to_text()).unwrap(), s);
        assert!(Schema::parse("x,ordinal,1\n").is_err());
        assert!(Schema::parse("x,nominal\n").is_err());
    }
}
