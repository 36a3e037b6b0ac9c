//! Columnar result store.
//!
//! A store is a directory of partition files. Each partition holds blocks
//! of up to 65,536 rows stored column by column (scenario, layer, hour,
//! entity id, metric id, value) followed by a footer with the entity and
//! metric dictionaries and per-block row counts and hour ranges, used to
//! skip blocks when querying. Files are written in insertion order, so the
//! same records always produce the same bytes.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::io::{self, BufRead, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::Layer;

const MAGIC: &[u8; 8] = b"CSIMPART";
const VERSION: u32 = 1;
pub const BLOCK_ROWS: usize = 65_536;
pub const EXTENSION: &str = "csim";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub scenario: u32,
    pub layer: Layer,
    pub hour: u32,
    pub entity: String,
    pub metric: String,
    pub value: f64,
}

impl Record {
    pub fn new(scenario: u32, layer: Layer, hour: u32, entity: &str, metric: &str, value: f64) -> Self {
        Record {
            scenario,
            layer,
            hour,
            entity: entity.to_string(),
            metric: metric.to_string(),
            value,
        }
    }

    fn sort_key(&self) -> (u32, Layer, u32, &str, &str) {
        (self.scenario, self.layer, self.hour, &self.entity, &self.metric)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("duplicate record: scenario {scenario}, {layer}, hour {hour}, {entity}/{metric}")]
    DuplicateKey {
        scenario: u32,
        layer: &'static str,
        hour: u32,
        entity: String,
        metric: String,
    },
    #[error("{path}: {message}")]
    Corrupt { path: PathBuf, message: String },
    #[error("CSV line {line}: {message}")]
    Csv { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Default)]
struct Dict {
    index: HashMap<String, u32>,
    names: Vec<String>,
}

impl Dict {
    fn id(&mut self, s: &str) -> u32 {
        if let Some(&i) = self.index.get(s) {
            return i;
        }
        let i = self.names.len() as u32;
        self.index.insert(s.to_string(), i);
        self.names.push(s.to_string());
        i
    }
}

/// Buffers one partition in memory and writes it on `finish`.
pub struct PartitionWriter {
    path: PathBuf,
    entities: Dict,
    metrics: Dict,
    scenario: Vec<u32>,
    layer: Vec<u8>,
    hour: Vec<u32>,
    entity: Vec<u32>,
    metric: Vec<u32>,
    value: Vec<f64>,
    keys: HashSet<(u32, u8, u32, u32, u32)>,
}

impl PartitionWriter {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        PartitionWriter {
            path: path.into(),
            entities: Dict::default(),
            metrics: Dict::default(),
            scenario: Vec::new(),
            layer: Vec::new(),
            hour: Vec::new(),
            entity: Vec::new(),
            metric: Vec::new(),
            value: Vec::new(),
            keys: HashSet::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }

    pub fn push(&mut self, scenario: u32, layer: Layer, hour: u32, entity: &str, metric: &str, value: f64) -> Result<(), StoreError> {
        let e = self.entities.id(entity);
        let m = self.metrics.id(metric);
        if !self.keys.insert((scenario, layer.code(), hour, e, m)) {
            return Err(StoreError::DuplicateKey {
                scenario,
                layer: layer.name(),
                hour,
                entity: entity.to_string(),
                metric: metric.to_string(),
            });
        }
        self.scenario.push(scenario);
        self.layer.push(layer.code());
        self.hour.push(hour);
        self.entity.push(e);
        self.metric.push(m);
        self.value.push(value);
        Ok(())
    }

    pub fn push_record(&mut self, r: &Record) -> Result<(), StoreError> {
        self.push(r.scenario, r.layer, r.hour, &r.entity, &r.metric, r.value)
    }

    /// Writes the partition atomically (temporary file, then rename).
    pub fn finish(self) -> Result<usize, StoreError> {
        let bytes = self.encode();
        if let Some(dir) = self.path.parent() {
            fs::create_dir_all(dir)?;
        }
        let tmp = self.path.with_extension("tmp");
        fs::write(&tmp, &bytes)?;
        fs::rename(&tmp, &self.path)?;
        Ok(self.value.len())
    }

    fn encode(&self) -> Vec<u8> {
        let n = self.value.len();
        let mut out = Vec::with_capacity(16 + n * 25 + 1024);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        let mut blocks = Vec::new();
        let mut start = 0;
        while start < n {
            let end = (start + BLOCK_ROWS).min(n);
            let offset = out.len() as u64;
            for v in &self.scenario[start..end] {
                out.extend_from_slice(&v.to_le_bytes());
            }
            out.extend_from_slice(&self.layer[start..end]);
            for col in [&self.hour, &self.entity, &self.metric] {
                for v in &col[start..end] {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
            for v in &self.value[start..end] {
                out.extend_from_slice(&v.to_le_bytes());
            }
            let hours = &self.hour[start..end];
            let min_h = *hours.iter().min().unwrap();
            let max_h = *hours.iter().max().unwrap();
            let mask = self.layer[start..end].iter().fold(0u8, |m, &l| m | (1 << l));
            blocks.push((offset, (end - start) as u32, min_h, max_h, mask));
            start = end;
        }
        let footer = out.len() as u64;
        for dict in [&self.entities, &self.metrics] {
            out.extend_from_slice(&(dict.names.len() as u32).to_le_bytes());
            for s in &dict.names {
                out.extend_from_slice(&(s.len() as u32).to_le_bytes());
                out.extend_from_slice(s.as_bytes());
            }
        }
        out.extend_from_slice(&(blocks.len() as u32).to_le_bytes());
        for (offset, rows, lo, hi, mask) in blocks {
            out.extend_from_slice(&offset.to_le_bytes());
            out.extend_from_slice(&rows.to_le_bytes());
            out.extend_from_slice(&lo.to_le_bytes());
            out.extend_from_slice(&hi.to_le_bytes());
            out.push(mask);
        }
        out.extend_from_slice(&(n as u64).to_le_bytes());
        out.extend_from_slice(&footer.to_le_bytes());
        out.extend_from_slice(MAGIC);
        out
    }
}

struct BlockInfo {
    offset: usize,
    rows: usize,
    min_hour: u32,
    max_hour: u32,
    layer_mask: u8,
}

/// A decoded partition footer plus the raw file bytes.
pub struct Partition {
    path: PathBuf,
    bytes: Vec<u8>,
    entities: Vec<String>,
    metrics: Vec<String>,
    blocks: Vec<BlockInfo>,
    rows: u64,
}

struct Cursor<'a> {
    b: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn take(&mut self, n: usize) -> Option<&[u8]> {
        let s = self.b.get(self.pos..self.pos + n)?;
        self.pos += n;
        Some(s)
    }
    fn u32(&mut self) -> Option<u32> {
        Some(u32::from_le_bytes(self.take(4)?.try_into().ok()?))
    }
    fn u64(&mut self) -> Option<u64> {
        Some(u64::from_le_bytes(self.take(8)?.try_into().ok()?))
    }
}

impl Partition {
    pub fn open(path: &Path) -> Result<Self, StoreError> {
        let bytes = fs::read(path)?;
        let corrupt = |m: &str| StoreError::Corrupt {
            path: path.to_path_buf(),
            message: m.to_string(),
        };
        let n = bytes.len();
        if n < 36 || &bytes[..8] != MAGIC || &bytes[n - 8..] != MAGIC {
            return Err(corrupt("bad magic"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        if version != VERSION {
            return Err(corrupt(&format!("unsupported version {version}")));
        }
        let footer = u64::from_le_bytes(bytes[n - 16..n - 8].try_into().unwrap()) as usize;
        let rows = u64::from_le_bytes(bytes[n - 24..n - 16].try_into().unwrap());
        let mut c = Cursor { b: &bytes[..n - 24], pos: footer };
        let mut dicts = Vec::new();
        for _ in 0..2 {
            let count = c.u32().ok_or_else(|| corrupt("truncated dictionary"))?;
            let mut names = Vec::with_capacity(count as usize);
            for _ in 0..count {
                let len = c.u32().ok_or_else(|| corrupt("truncated dictionary"))? as usize;
                let s = c.take(len).ok_or_else(|| corrupt("truncated dictionary"))?;
                names.push(String::from_utf8(s.to_vec()).map_err(|_| corrupt("dictionary is not UTF-8"))?);
            }
            dicts.push(names);
        }
        let nblocks = c.u32().ok_or_else(|| corrupt("truncated block index"))?;
        let mut blocks = Vec::with_capacity(nblocks as usize);
        let mut total = 0u64;
        for _ in 0..nblocks {
            let offset = c.u64().ok_or_else(|| corrupt("truncated block index"))? as usize;
            let rows = c.u32().ok_or_else(|| corrupt("truncated block index"))? as usize;
            let min_hour = c.u32().ok_or_else(|| corrupt("truncated block index"))?;
            let max_hour = c.u32().ok_or_else(|| corrupt("truncated block index"))?;
            let layer_mask = c.take(1).ok_or_else(|| corrupt("truncated block index"))?[0];
            if offset + rows * 25 > footer {
                return Err(corrupt("block overruns footer"));
            }
            total += rows as u64;
            blocks.push(BlockInfo {
                offset,
                rows,
                min_hour,
                max_hour,
                layer_mask,
            });
        }
        if total != rows {
            return Err(corrupt("row count mismatch"));
        }
        let metrics = dicts.pop().unwrap();
        let entities = dicts.pop().unwrap();
        Ok(Partition {
            path: path.to_path_buf(),
            bytes,
            entities,
            metrics,
            blocks,
            rows,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn num_rows(&self) -> u64 {
        self.rows
    }

    fn scan(&self, q: &Query, out: &mut Vec<Record>) -> Result<(), StoreError> {
        let entity_ok: Vec<bool> = self
            .entities
            .iter()
            .map(|e| q.entities.as_ref().is_none_or(|v| v.iter().any(|x| x == e)))
            .collect();
        let metric_ok: Vec<bool> = self
            .metrics
            .iter()
            .map(|m| q.metrics.as_ref().is_none_or(|v| v.iter().any(|x| x == m)))
            .collect();
        if !entity_ok.iter().any(|&b| b) || !metric_ok.iter().any(|&b| b) {
            return Ok(());
        }
        let layer_mask = q
            .layers
            .as_ref()
            .map_or(0xff, |ls| ls.iter().fold(0u8, |m, l| m | (1 << l.code())));
        for blk in &self.blocks {
            if blk.layer_mask & layer_mask == 0 {
                continue;
            }
            if let Some((lo, hi)) = q.hours {
                if blk.max_hour < lo || blk.min_hour >= hi {
                    continue;
                }
            }
            let n = blk.rows;
            let base = blk.offset;
            let u32_at = |col: usize, k: usize| {
                let p = base + col + 4 * k;
                u32::from_le_bytes(self.bytes[p..p + 4].try_into().unwrap())
            };
            let scen_col = 0;
            let layer_col = 4 * n;
            let hour_col = 5 * n;
            let ent_col = 9 * n;
            let met_col = 13 * n;
            let val_col = 17 * n;
            for k in 0..n {
                let layer_code = self.bytes[base + layer_col + k];
                if (1 << layer_code) & layer_mask == 0 {
                    continue;
                }
                let hour = u32_at(hour_col, k);
                if let Some((lo, hi)) = q.hours {
                    if hour < lo || hour >= hi {
                        continue;
                    }
                }
                let e = u32_at(ent_col, k) as usize;
                let m = u32_at(met_col, k) as usize;
                if !entity_ok.get(e).copied().unwrap_or(false) || !metric_ok.get(m).copied().unwrap_or(false) {
                    continue;
                }
                let scenario = u32_at(scen_col, k);
                if let Some(s) = &q.scenarios {
                    if !s.contains(&scenario) {
                        continue;
                    }
                }
                let p = base + val_col + 8 * k;
                let value = f64::from_le_bytes(self.bytes[p..p + 8].try_into().unwrap());
                let layer = Layer::from_code(layer_code).ok_or_else(|| StoreError::Corrupt {
                    path: self.path.clone(),
                    message: format!("bad layer code {layer_code}"),
                })?;
                out.push(Record {
                    scenario,
                    layer,
                    hour,
                    entity: self.entities[e].clone(),
                    metric: self.metrics[m].clone(),
                    value,
                });
            }
        }
        Ok(())
    }
}

/// Record filter; `None` fields match everything. `hours` is half-open.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Query {
    pub scenarios: Option<Vec<u32>>,
    pub layers: Option<Vec<Layer>>,
    pub hours: Option<(u32, u32)>,
    pub entities: Option<Vec<String>>,
    pub metrics: Option<Vec<String>>,
}

impl Query {
    pub fn metric(m: &str) -> Self {
        Query {
            metrics: Some(vec![m.to_string()]),
            ..Query::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregate {
    None,
    Sum,
    Mean,
    /// Linear interpolation between order statistics, `q` in [0, 1].
    Quantile(f64),
}

impl Aggregate {
    pub fn parse(s: &str) -> Option<Aggregate> {
        match s {
            "none" => Some(Aggregate::None),
            "sum" => Some(Aggregate::Sum),
            "mean" => Some(Aggregate::Mean),
            _ => {
                let q: f64 = s.strip_prefix("quantile:").or_else(|| s.strip_prefix('p'))?.parse().ok()?;
                let q = if q > 1.0 { q / 100.0 } else { q };
                (0.0..=1.0).contains(&q).then_some(Aggregate::Quantile(q))
            }
        }
    }

    /// Reduces `values`; `None` for an empty input or `Aggregate::None`.
    pub fn apply(self, values: &[f64]) -> Option<f64> {
        if values.is_empty() {
            return None;
        }
        match self {
            Aggregate::None => None,
            Aggregate::Sum => Some(values.iter().sum()),
            Aggregate::Mean => Some(values.iter().sum::<f64>() / values.len() as f64),
            Aggregate::Quantile(q) => {
                let mut v = values.to_vec();
                v.sort_by(f64::total_cmp);
                let pos = q * (v.len() - 1) as f64;
                let lo = pos.floor() as usize;
                let hi = pos.ceil() as usize;
                Some(v[lo] + (v[hi] - v[lo]) * (pos - lo as f64))
            }
        }
    }
}

/// Read access to a store directory.
pub struct Store {
    dir: PathBuf,
    partitions: Vec<PathBuf>,
}

impl Store {
    pub fn open(dir: impl AsRef<Path>) -> Result<Self, StoreError> {
        let dir = dir.as_ref().to_path_buf();
        let mut partitions = Vec::new();
        if dir.is_dir() {
            for entry in fs::read_dir(&dir)? {
                let p = entry?.path();
                if p.extension().is_some_and(|e| e == EXTENSION) {
                    partitions.push(p);
                }
            }
        }
        partitions.sort();
        Ok(Store { dir, partitions })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn num_partitions(&self) -> usize {
        self.partitions.len()
    }

    pub fn partition_paths(&self) -> &[PathBuf] {
        &self.partitions
    }

    /// Total rows, read from the footers only.
    pub fn count(&self) -> Result<u64, StoreError> {
        let mut n = 0;
        for p in &self.partitions {
            n += Partition::open(p)?.num_rows();
        }
        Ok(n)
    }

    /// Matching records in canonical order (scenario, layer, hour, entity, metric).
    pub fn query(&self, q: &Query) -> Result<Vec<Record>, StoreError> {
        let mut out = Vec::new();
        for p in &self.partitions {
            Partition::open(p)?.scan(q, &mut out)?;
        }
        out.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
        Ok(out)
    }
}

/// Path of the partition for one scenario and day.
pub fn partition_path(dir: &Path, scenario: u32, day: u32) -> PathBuf {
    dir.join(format!("part-s{scenario:05}-d{day:05}.{EXTENSION}"))
}

/// Per (layer, hour) series: values are summed over entities within each
/// scenario, then reduced across scenarios with `agg` (mean for `None`).
pub fn layer_series(records: &[Record], agg: Aggregate) -> BTreeMap<Layer, Vec<(u32, f64)>> {
    let mut sums: BTreeMap<(Layer, u32), BTreeMap<u32, f64>> = BTreeMap::new();
    for r in records {
        *sums.entry((r.layer, r.hour)).or_default().entry(r.scenario).or_default() += r.value;
    }
    let agg = if agg == Aggregate::None { Aggregate::Mean } else { agg };
    let mut out: BTreeMap<Layer, Vec<(u32, f64)>> = BTreeMap::new();
    for ((layer, hour), per) in sums {
        let vals: Vec<f64> = per.into_values().collect();
        out.entry(layer).or_default().push((hour, agg.apply(&vals).unwrap_or(0.0)));
    }
    out
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub const CSV_HEADER: &str = "scenario,layer,hour,entity,metric,value";

/// Writes records as CSV. Values use the shortest representation that
/// parses back to the same `f64`.
pub fn write_csv<W: Write>(records: &[Record], mut w: W) -> io::Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    let mut line = String::new();
    for r in records {
        line.clear();
        let _ = writeln!(
            line,
            "{},{},{},{},{},{}",
            r.scenario,
            r.layer.name(),
            r.hour,
            csv_field(&r.entity),
            csv_field(&r.metric),
            r.value
        );
        w.write_all(line.as_bytes())?;
    }
    w.flush()
}

fn split_csv(line: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    let mut quoted = false;
    let mut chars = line.chars().peekable();
    while let Some(c) = chars.next() {
        match (c, quoted) {
            ('"', true) if chars.peek() == Some(&'"') => {
                cur.push('"');
                chars.next();
            }
            ('"', _) => quoted = !quoted,
            (',', false) => out.push(std::mem::take(&mut cur)),
            _ => cur.push(c),
        }
    }
    out.push(cur);
    out
}

pub fn read_csv<R: BufRead>(r: R) -> Result<Vec<Record>, StoreError> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        let bad = |m: String| StoreError::Csv { line: i + 1, message: m };
        if i == 0 {
            if line.trim() != CSV_HEADER {
                return Err(bad(format!("expected header {CSV_HEADER}")));
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let f = split_csv(&line);
        if f.len() != 6 {
            return Err(bad(format!("expected 6 fields, found {}", f.len())));
        }
        out.push(Record {
            scenario: f[0].parse().map_err(|_| bad(format!("bad scenario {}", f[0])))?,
            layer: Layer::parse(&f[1]).ok_or_else(|| bad(format!("unknown layer {}", f[1])))?,
            hour: f[2].parse().map_err(|_| bad(format!("bad hour {}", f[2])))?,
            entity: f[3].clone(),
            metric: f[4].clone(),
            value: f[5].parse().map_err(|_| bad(format!("bad value {}", f[5])))?,
        });
    }
    Ok(out)
}

const COLORS: [&str; 5] = ["#7f7f7f", "#1f77b4", "#2ca02c", "#ff7f0e", "#d62728"];

/// Line chart with one polyline per layer.
pub fn render_svg(series: &BTreeMap<Layer, Vec<(u32, f64)>>, title: &str, y_label: &str) -> String {
    let (w, h, m) = (800.0, 400.0, 60.0);
    let pts = series.values().flatten();
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in pts {
        x0 = x0.min(x as f64);
        x1 = x1.max(x as f64);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 <= x0 {
        x1 = x0 + 1.0;
    }
    if y1 <= y0 {
        y1 = y0 + 1.0;
    }
    let sx = |x: f64| m + (x - x0) / (x1 - x0) * (w - 2.0 * m);
    let sy = |y: f64| h - m - (y - y0) / (y1 - y0) * (h - 2.0 * m);
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#);
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="24" text-anchor="middle" font-size="16">{}</text>"#, w / 2.0, xml_escape(title));
    let _ = writeln!(
        s,
        r#"<line x1="{m}" y1="{}" x2="{}" y2="{}" stroke="black"/><line x1="{m}" y1="{m}" x2="{m}" y2="{}" stroke="black"/>"#,
        h - m,
        w - m,
        h - m,
        h - m
    );
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle" font-size="12">hour</text>"#, w / 2.0, h - 20.0);
    let _ = writeln!(
        s,
        r#"<text x="16" y="{}" font-size="12" transform="rotate(-90 16 {})" text-anchor="middle">{}</text>"#,
        h / 2.0,
        h / 2.0,
        xml_escape(y_label)
    );
    let _ = writeln!(s, r#"<text x="{}" y="{}" font-size="10" text-anchor="end">{y0:.3}</text>"#, m - 4.0, h - m);
    let _ = writeln!(s, r#"<text x="{}" y="{}" font-size="10" text-anchor="end">{y1:.3}</text>"#, m - 4.0, m + 4.0);
    for (k, (layer, data)) in series.iter().enumerate() {
        let color = COLORS[layer.code() as usize % COLORS.len()];
        let mut points = String::new();
        for &(x, y) in data {
            let _ = write!(points, "{:.2},{:.2} ", sx(x as f64), sy(y));
        }
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"><title>{}</title></polyline>"#,
            points.trim_end(),
            layer.name()
        );
        let ly = m + 14.0 * k as f64;
        let _ = writeln!(
            s,
            r#"<rect x="{}" y="{}" width="10" height="10" fill="{color}"/><text x="{}" y="{}" font-size="11">{}</text>"#,
            w - m - 90.0,
            ly - 9.0,
            w - m - 76.0,
            ly,
            layer.name()
        );
    }
    s.push_str("</svg>\n");
    s
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
