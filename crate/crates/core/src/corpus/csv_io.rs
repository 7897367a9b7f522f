//! Fixed six-column RFC-4180 CSV persistence for corpora.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use super::{Corpus, CorpusError, DiscussionThread};

pub const CORPUS_COLUMNS: [&str; 6] = [
    "thread_id",
    "subreddit",
    "text",
    "comment_count",
    "earliest_utc",
    "latest_utc",
];

pub fn write_corpus(corpus: &Corpus, out: impl Write) -> Result<(), csv::Error> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::CRLF)
        .quote_style(csv::QuoteStyle::Necessary)
        .from_writer(out);
    w.write_record(CORPUS_COLUMNS)?;
    for t in &corpus.threads {
        w.write_record([
            t.thread_id.as_str(),
            t.subreddit.as_str(),
            t.text.as_str(),
            &t.comment_count.to_string(),
            &t.earliest_utc.to_string(),
            &t.latest_utc.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_corpus_csv(corpus: &Corpus, path: &Path) -> Result<(), CorpusError> {
    let io_err = |source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    };
    let file = File::create(path).map_err(io_err)?;
    let mut buf = BufWriter::new(file);
    write_corpus(corpus, &mut buf).map_err(|e| io_err(e.into()))?;
    buf.flush().map_err(io_err)
}

pub fn read_corpus(input: impl Read) -> Result<Corpus, CorpusError> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(input);
    let header = r.headers().map_err(|e| row_error(0, e))?.clone();
    if header.iter().ne(CORPUS_COLUMNS) {
        return Err(CorpusError::SchemaMismatch {
            expected: CORPUS_COLUMNS.join(","),
            found: header.iter().collect::<Vec<_>>().join(","),
        });
    }
    let mut threads = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let row = i as u64 + 1;
        let rec = rec.map_err(|e| row_error(row, e))?;
        let int = |idx: usize| -> Result<i64, CorpusError> {
            rec[idx].parse::<i64>().map_err(|e| CorpusError::InvalidRow {
                row,
                message: format!("{}: {e}", CORPUS_COLUMNS[idx]),
            })
        };
        let comment_count = rec[3].parse::<u64>().map_err(|e| CorpusError::InvalidRow {
            row,
            message: format!("comment_count: {e}"),
        })?;
        let thread = DiscussionThread {
            thread_id: rec[0].to_string(),
            subreddit: rec[1].to_string(),
            text: rec[2].to_string(),
            comment_count,
            earliest_utc: int(4)?,
            latest_utc: int(5)?,
        };
        if thread.thread_id.is_empty() {
            return Err(CorpusError::InvalidRow {
                row,
                message: "empty thread_id".into(),
            });
        }
        if thread.earliest_utc > thread.latest_utc {
            return Err(CorpusError::InvalidRow {
                row,
                message: "earliest_utc after latest_utc".into(),
            });
        }
        threads.push(thread);
    }
    Corpus::new(threads)
}

pub fn load_corpus(path: &Path) -> Result<Corpus, CorpusError> {
    let file = File::open(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    read_corpus(file)
}

fn row_error(row: u64, e: csv::Error) -> CorpusError {
    // A wrong column count is a schema problem, not a data problem.
    if let csv::ErrorKind::UnequalLengths { expected_len, len, .. } = e.kind() {
        return CorpusError::SchemaMismatch {
            expected: format!("{expected_len} columns"),
            found: format!("{len} columns at row {row}"),
        };
    }
    CorpusError::InvalidRow {
        row,
        message: e.to_string(),
    }
}
