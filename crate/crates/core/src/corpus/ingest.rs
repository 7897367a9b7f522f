//! File-level ingestion: archive dumps in, a corpus plus conservation
//! counts out.

use std::fs::File;
use std::path::Path;

use serde::Serialize;

use super::{aggregate_threads, parse_archive, ArchiveFormat, Corpus, CorpusError};

/// Counts that reconcile an ingestion run:
/// `comments_in == attached + orphaned + skipped_comments` and
/// `posts_in == threads`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct IngestStats {
    pub posts_in: u64,
    pub comments_in: u64,
    pub skipped_posts: u64,
    pub skipped_comments: u64,
    pub threads: u64,
    pub attached_comments: u64,
    pub orphaned_comments: u64,
}

#[derive(Debug, Clone)]
pub struct Ingested {
    pub corpus: Corpus,
    pub stats: IngestStats,
}

/// Reads a posts dump and a comments dump, inferring each file's format from
/// its extension unless `format` is given.
pub fn ingest_files(posts: &Path, comments: &Path, format: Option<ArchiveFormat>) -> Result<Ingested, CorpusError> {
    let open = |p: &Path| {
        File::open(p).map_err(|source| CorpusError::Io {
            path: p.display().to_string(),
            source,
        })
    };
    let posts_format = match format {
        Some(f) => f,
        None => ArchiveFormat::from_path(posts)?,
    };
    let comments_format = match format {
        Some(f) => f,
        None => ArchiveFormat::from_path(comments)?,
    };
    let (posts_parsed, skipped_posts) = super::parse_posts(open(posts)?, posts_format)?;
    let (comments_parsed, skipped_comments) = super::parse_comments(open(comments)?, comments_format)?;
    let parsed = super::ParsedArchive {
        posts: posts_parsed,
        comments: comments_parsed,
        skipped_posts,
        skipped_comments,
    };
    from_parsed(parsed)
}

/// Aggregates already-parsed records, carrying the skip counts through.
pub fn from_parsed(parsed: super::ParsedArchive) -> Result<Ingested, CorpusError> {
    let posts_in = parsed.posts.len() as u64 + parsed.skipped_posts;
    let comments_in = parsed.comments.len() as u64 + parsed.skipped_comments;
    let agg = aggregate_threads(parsed.posts, parsed.comments)?;
    Ok(Ingested {
        stats: IngestStats {
            posts_in,
            comments_in,
            skipped_posts: parsed.skipped_posts,
            skipped_comments: parsed.skipped_comments,
            threads: agg.corpus.len() as u64,
            attached_comments: agg.attached_comments,
            orphaned_comments: agg.orphaned_comments,
        },
        corpus: agg.corpus,
    })
}

/// Convenience for in-memory streams of one format.
pub fn ingest_streams(
    posts: impl std::io::Read,
    comments: impl std::io::Read,
    format: ArchiveFormat,
) -> Result<Ingested, CorpusError> {
    from_parsed(parse_archive(posts, comments, format)?)
}
