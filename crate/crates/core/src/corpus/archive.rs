//! Decoding of newline-delimited JSON archive dumps.
//!
//! Records use the common public dump field names: posts carry `id`,
//! `subreddit`, `title`, `selftext`, `created_utc`, `author`; comments carry
//! `id`, `link_id` (a `t3_`-prefixed post id), `body`, `created_utc`, `author`.
//! Lines that fail to decode are counted and skipped.

use std::io::{BufRead, BufReader, Read};
use std::path::Path;
use std::str::FromStr;

use serde_json::{Map, Value};

use super::{CorpusError, RawComment, RawPost};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArchiveFormat {
    Ndjson,
    NdjsonZstd,
}

impl FromStr for ArchiveFormat {
    type Err = CorpusError;

    fn from_str(tag: &str) -> Result<Self, Self::Err> {
        match tag.to_ascii_lowercase().as_str() {
            "ndjson" | "jsonl" | "json" => Ok(Self::Ndjson),
            "zst" | "zstd" | "ndjson.zst" | "jsonl.zst" => Ok(Self::NdjsonZstd),
            other => Err(CorpusError::UnknownFormat(other.to_string())),
        }
    }
}

impl ArchiveFormat {
    /// Picks the format from a file extension (`.zst` means compressed).
    pub fn from_path(path: &Path) -> Result<Self, CorpusError> {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) => ext.parse(),
            None => Err(CorpusError::UnknownFormat(path.display().to_string())),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ParsedArchive {
    pub posts: Vec<RawPost>,
    pub comments: Vec<RawComment>,
    pub skipped_posts: u64,
    pub skipped_comments: u64,
}

impl ParsedArchive {
    pub fn skipped_count(&self) -> u64 {
        self.skipped_posts + self.skipped_comments
    }
}

pub fn parse_archive(
    posts_stream: impl Read,
    comments_stream: impl Read,
    format: ArchiveFormat,
) -> Result<ParsedArchive, CorpusError> {
    let (posts, skipped_posts) = parse_posts(posts_stream, format)?;
    let (comments, skipped_comments) = parse_comments(comments_stream, format)?;
    Ok(ParsedArchive {
        posts,
        comments,
        skipped_posts,
        skipped_comments,
    })
}

/// Returns the decoded posts and the number of skipped lines.
pub fn parse_posts(stream: impl Read, format: ArchiveFormat) -> Result<(Vec<RawPost>, u64), CorpusError> {
    decode_lines(stream, format, post_from_record)
}

pub fn parse_comments(
    stream: impl Read,
    format: ArchiveFormat,
) -> Result<(Vec<RawComment>, u64), CorpusError> {
    decode_lines(stream, format, comment_from_record)
}

fn decode_lines<T>(
    stream: impl Read,
    format: ArchiveFormat,
    decode: fn(&Map<String, Value>) -> Option<T>,
) -> Result<(Vec<T>, u64), CorpusError> {
    let reader: Box<dyn BufRead> = match format {
        ArchiveFormat::Ndjson => Box::new(BufReader::new(stream)),
        ArchiveFormat::NdjsonZstd => {
            let decoder = zstd::stream::read::Decoder::new(stream).map_err(CorpusError::UnreadableStream)?;
            Box::new(BufReader::new(decoder))
        }
    };
    let mut out = Vec::new();
    let mut skipped = 0u64;
    let mut line = Vec::new();
    let mut reader = reader;
    loop {
        line.clear();
        let n = reader
            .read_until(b'\n', &mut line)
            .map_err(CorpusError::UnreadableStream)?;
        if n == 0 {
            break;
        }
        let trimmed = line.trim_ascii();
        if trimmed.is_empty() {
            continue;
        }
        let record = serde_json::from_slice::<Value>(trimmed).ok();
        match record.as_ref().and_then(Value::as_object).and_then(decode) {
            Some(item) => out.push(item),
            None => skipped += 1,
        }
    }
    Ok((out, skipped))
}

fn post_from_record(rec: &Map<String, Value>) -> Option<RawPost> {
    Some(RawPost {
        post_id: id_field(rec, "id")?,
        subreddit: str_field(rec, "subreddit"),
        title: str_field(rec, "title"),
        selftext: str_field(rec, "selftext"),
        created_utc: timestamp_field(rec)?,
        author: str_field(rec, "author"),
    })
}

fn comment_from_record(rec: &Map<String, Value>) -> Option<RawComment> {
    let parent = rec
        .get("link_id")
        .and_then(Value::as_str)
        .or_else(|| rec.get("parent_id").and_then(Value::as_str).filter(|p| p.starts_with("t3_")))?;
    let parent = parent.strip_prefix("t3_").unwrap_or(parent);
    if parent.is_empty() {
        return None;
    }
    Some(RawComment {
        comment_id: id_field(rec, "id")?,
        parent_post_id: parent.to_string(),
        body: str_field(rec, "body"),
        created_utc: timestamp_field(rec)?,
        author: str_field(rec, "author"),
    })
}

fn id_field(rec: &Map<String, Value>, key: &str) -> Option<String> {
    let id = match rec.get(key)? {
        Value::String(s) => s.clone(),
        Value::Number(n) => n.to_string(),
        _ => return None,
    };
    (!id.is_empty()).then_some(id)
}

fn str_field(rec: &Map<String, Value>, key: &str) -> String {
    rec.get(key).and_then(Value::as_str).unwrap_or_default().to_string()
}

// Dumps store created_utc as an integer, a float, or a numeric string.
fn timestamp_field(rec: &Map<String, Value>) -> Option<i64> {
    let ts = match rec.get("created_utc")? {
        Value::Number(n) => n.as_i64().or_else(|| n.as_f64().map(|f| f as i64))?,
        Value::String(s) => s.trim().parse::<f64>().ok().map(|f| f as i64)?,
        _ => return None,
    };
    (ts >= 0).then_some(ts)
}
