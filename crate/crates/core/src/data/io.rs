//! Readers and writers for the on-disk formats.
//!
//! Binary embeddings use the `EMB1` layout: ASCII magic, `u32` LE row count,
//! `u32` LE column count, then `n * d` little-endian `f32` values row-major.
//! All text formats are UTF-8; lines starting with `#` are metadata/comments
//! and are skipped by the readers.

use std::fs;
use std::path::Path;

use ndarray::Array2;

use super::{EmbeddingSet, LabelSet, MeetingIndex, Partition, Trial, TrialList};
use crate::error::{Error, Result};

const EMB_MAGIC: &[u8; 4] = b"EMB1";
const EMB_HEADER: usize = 12;

/// Ordered `key=value` pairs written as `# key=value` header lines.
pub type Metadata = Vec<(String, String)>;

/// Formats `x` with `digits` significant digits, `%g` style.
pub fn format_sig(x: f64, digits: usize) -> String {
    if x == 0.0 || !x.is_finite() {
        return if x == 0.0 { "0".into() } else { x.to_string() };
    }
    let digits = digits.max(1);
    let sci = format!("{:.*e}", digits - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -4 || exp >= digits as i32 {
        let m = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{m}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (digits as i32 - 1 - exp).max(0) as usize;
        trim_zeros(&format!("{:.*}", decimals, x)).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Non-comment lines with their 1-based line numbers.
fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.starts_with('#'))
}

fn header(meta: &Metadata) -> String {
    meta.iter().map(|(k, v)| format!("# {k}={v}\n")).collect()
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

pub(crate) fn encode_embeddings(e: &EmbeddingSet) -> Result<Vec<u8>> {
    let n = u32::try_from(e.n()).map_err(|_| Error::config("row count exceeds u32"))?;
    let d = u32::try_from(e.d()).map_err(|_| Error::config("dimension exceeds u32"))?;
    let mut out = Vec::with_capacity(EMB_HEADER + 4 * e.n() * e.d());
    out.extend_from_slice(EMB_MAGIC);
    out.extend_from_slice(&n.to_le_bytes());
    out.extend_from_slice(&d.to_le_bytes());
    for &v in e.data() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    Ok(out)
}

pub(crate) fn decode_embeddings(bytes: &[u8], path: &Path) -> Result<EmbeddingSet> {
    let fmt = |offset: usize, message: String| Error::Format {
        path: path.to_path_buf(),
        offset: offset as u64,
        message,
    };
    if bytes.len() < 4 {
        return Err(fmt(bytes.len(), "file shorter than magic".into()));
    }
    if &bytes[..4] != EMB_MAGIC {
        return Err(fmt(0, format!("bad magic {:?}", String::from_utf8_lossy(&bytes[..4]))));
    }
    if bytes.len() < EMB_HEADER {
        return Err(fmt(bytes.len(), "truncated header".into()));
    }
    let n = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes")) as usize;
    let d = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
    let payload = n
        .checked_mul(d)
        .and_then(|c| c.checked_mul(4))
        .ok_or_else(|| fmt(4, format!("n*d overflows for n={n}, d={d}")))?;
    let expected = EMB_HEADER + payload;
    if bytes.len() < expected {
        return Err(fmt(
            bytes.len(),
            format!("truncated payload: expected {expected} bytes for {n}x{d}"),
        ));
    }
    if bytes.len() > expected {
        return Err(fmt(expected, format!("{} trailing bytes", bytes.len() - expected)));
    }
    let values: Vec<f64> = bytes[EMB_HEADER..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
        .collect();
    let data = Array2::from_shape_vec((n, d), values).map_err(|e| Error::Shape(e.to_string()))?;
    EmbeddingSet::new(data).map_err(|e| fmt(EMB_HEADER, e.to_string()))
}

/// Writes `e` in `EMB1` format. Values are stored as `f32`.
pub fn save_embeddings(e: &EmbeddingSet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_embeddings(e)?).map_err(|err| Error::io(path, err))
}

pub fn load_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingSet> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_embeddings(&bytes, path)
}

/// One class token per line, line `i` labeling sample `i`.
pub fn save_labels(labels: &LabelSet, path: impl AsRef<Path>) -> Result<()> {
    let mut text = String::new();
    for &l in labels.labels() {
        text.push_str(labels.name(l));
        text.push('\n');
    }
    write_text(path.as_ref(), &text)
}

pub fn load_labels(path: impl AsRef<Path>) -> Result<LabelSet> {
    let path = path.as_ref();
    let text = read_text(path)?;
    let mut tokens = Vec::new();
    for (line, l) in content_lines(&text) {
        let token = l.trim();
        if token.is_empty() || token.contains(char::is_whitespace) {
            return Err(parse_err(path, line, format!("invalid label token {l:?}")));
        }
        tokens.push(token);
    }
    Ok(LabelSet::from_tokens(&tokens))
}

/// One meeting per line, space-separated sample indices. Known speaker
/// counts go in a `# speakers=` header.
pub fn save_meetings(m: &MeetingIndex, path: impl AsRef<Path>) -> Result<()> {
    let mut text = String::new();
    if !m.speakers_per_meeting().is_empty() {
        let counts: Vec<String> = m.speakers_per_meeting().iter().map(usize::to_string).collect();
        text.push_str(&format!("# speakers={}\n", counts.join(" ")));
    }
    for meeting in m.meetings() {
        let ids: Vec<String> = meeting.iter().map(usize::to_string).collect();
        text.push_str(&ids.join(" "));
        text.push('\n');
    }
    write_text(path.as_ref(), &text)
}

pub fn load_meetings(path: impl AsRef<Path>) -> Result<MeetingIndex> {
    let path = path.as_ref();
    let text = read_text(path)?;
    let mut speakers = Vec::new();
    for (line, l) in text.lines().enumerate() {
        if let Some(counts) = l.strip_prefix("# speakers=") {
            speakers = counts
                .split_whitespace()
                .map(|c| c.parse::<usize>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| parse_err(path, line + 1, e.to_string()))?;
        }
    }
    let mut meetings = Vec::new();
    for (line, l) in content_lines(&text) {
        let ids = l
            .split_whitespace()
            .map(|t| t.parse::<usize>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| parse_err(path, line, e.to_string()))?;
        meetings.push(ids);
    }
    MeetingIndex::new(meetings, speakers)
}

/// Lines `i j target` / `i j nontarget`.
pub fn save_trials(t: &TrialList, path: impl AsRef<Path>) -> Result<()> {
    let text: String = t
        .trials()
        .iter()
        .map(|t| {
            let kind = if t.target { "target" } else { "nontarget" };
            format!("{} {} {kind}\n", t.enroll, t.test)
        })
        .collect();
    write_text(path.as_ref(), &text)
}

pub fn load_trials(path: impl AsRef<Path>) -> Result<TrialList> {
    let path = path.as_ref();
    let text = read_text(path)?;
    let mut trials = Vec::new();
    for (line, l) in content_lines(&text) {
        if l.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = l.split_whitespace().collect();
        let [i, j, kind] = fields[..] else {
            return Err(parse_err(path, line, "expected `i j target|nontarget`"));
        };
        let idx = |s: &str| {
            s.parse::<usize>()
                .map_err(|e| parse_err(path, line, e.to_string()))
        };
        let target = match kind {
            "target" => true,
            "nontarget" => false,
            other => return Err(parse_err(path, line, format!("unknown trial kind {other:?}"))),
        };
        trials.push(Trial {
            enroll: idx(i)?,
            test: idx(j)?,
            target,
        });
    }
    TrialList::new(trials)
}

/// Lines `sample_index cluster_id`, preceded by `# key=value` metadata.
pub fn save_partition(p: &Partition, meta: &Metadata, path: impl AsRef<Path>) -> Result<()> {
    let mut text = header(meta);
    for (i, c) in p.assignment().iter().enumerate() {
        text.push_str(&format!("{i} {c}\n"));
    }
    write_text(path.as_ref(), &text)
}

pub fn load_partition(path: impl AsRef<Path>) -> Result<Partition> {
    let path = path.as_ref();
    let text = read_text(path)?;
    let mut assignment = Vec::new();
    for (line, l) in content_lines(&text) {
        if l.trim().is_empty() {
            continue;
        }
        let mut it = l.split_whitespace();
        let (Some(i), Some(c), None) = (it.next(), it.next(), it.next()) else {
            return Err(parse_err(path, line, "expected `sample_index cluster_id`"));
        };
        let i: usize = i.parse().map_err(|_| parse_err(path, line, "bad sample index"))?;
        let c: usize = c.parse().map_err(|_| parse_err(path, line, "bad cluster id"))?;
        if i != assignment.len() {
            return Err(parse_err(
                path,
                line,
                format!("expected sample {} next, found {i}", assignment.len()),
            ));
        }
        assignment.push(c);
    }
    Ok(Partition::from_raw(&assignment))
}
