use std::collections::BTreeMap;
use std::io::Cursor;
use std::sync::atomic::{AtomicUsize, Ordering};

use proptest::prelude::*;
use pulse_core::corpus::{
    aggregate_threads, ingest_streams, load_corpus, parse_archive, read_corpus, write_corpus, write_corpus_csv,
    ArchiveFormat, Corpus, DiscussionThread, THREAD_SEPARATOR,
};
use pulse_core::testkit;
use serde_json::Value;

fn small(name: &str) -> Vec<u8> {
    std::fs::read(testkit::fixtures_dir().join("small").join(name)).unwrap()
}

#[test]
fn empty_streams_yield_nothing() {
    let parsed = parse_archive(Cursor::new(""), Cursor::new(""), ArchiveFormat::Ndjson).unwrap();
    assert!(parsed.posts.is_empty() && parsed.comments.is_empty());
    assert_eq!(parsed.skipped_count(), 0);
}

#[test]
fn small_fixture_counts() {
    let parsed = parse_archive(
        Cursor::new(small("posts.ndjson")),
        Cursor::new(small("comments.ndjson")),
        ArchiveFormat::Ndjson,
    )
    .unwrap();
    assert_eq!((parsed.posts.len(), parsed.comments.len(), parsed.skipped_count()), (3, 5, 0));

    let agg = aggregate_threads(parsed.posts, parsed.comments).unwrap();
    let counts: Vec<u64> = agg.corpus.threads.iter().map(|t| t.comment_count).collect();
    assert_eq!(counts, vec![5, 0, 0]);
    assert_eq!(agg.orphaned_comments, 0);
    assert_eq!(
        agg.corpus.threads[0].text,
        ["First post", "Body one.", "at ten", "at twenty", "at thirty", "tie a", "tie b"].join(THREAD_SEPARATOR)
    );
    assert_eq!((agg.corpus.threads[0].earliest_utc, agg.corpus.threads[0].latest_utc), (1000, 1040));
    assert_eq!(agg.corpus.source_label, "Parenting");
}

#[test]
fn truncated_line_is_skipped() {
    let parsed = parse_archive(
        Cursor::new(small("truncated_posts.ndjson")),
        Cursor::new(""),
        ArchiveFormat::Ndjson,
    )
    .unwrap();
    assert_eq!((parsed.posts.len(), parsed.comments.len(), parsed.skipped_count()), (1, 0, 1));
}

#[test]
fn zstd_stream_matches_plain() {
    let posts = small("posts.ndjson");
    let comments = small("comments.ndjson");
    let plain = ingest_streams(Cursor::new(&posts), Cursor::new(&comments), ArchiveFormat::Ndjson).unwrap();
    let zp = zstd::encode_all(Cursor::new(&posts), 3).unwrap();
    let zc = zstd::encode_all(Cursor::new(&comments), 3).unwrap();
    let packed = ingest_streams(Cursor::new(zp), Cursor::new(zc), ArchiveFormat::NdjsonZstd).unwrap();
    assert_eq!(plain.corpus, packed.corpus);
    assert_eq!(plain.stats, packed.stats);
}

#[test]
fn unknown_format_tag_is_rejected() {
    assert!("bz2".parse::<ArchiveFormat>().is_err());
}

#[test]
fn orphaned_comment_is_counted_not_attached() {
    let posts = small("posts.ndjson");
    let comments = b"{\"id\":\"o1\",\"link_id\":\"t3_missing\",\"body\":\"lost\",\"created_utc\":5}\n";
    let out = ingest_streams(Cursor::new(posts), Cursor::new(&comments[..]), ArchiveFormat::Ndjson).unwrap();
    assert_eq!(out.stats.orphaned_comments, 1);
    assert!(out.corpus.threads.iter().all(|t| t.comment_count == 0 && !t.text.contains("lost")));
}

/// Rebuilds every thread of the fixture dump straight from the NDJSON with
/// an independent reader, sorting comments by (created_utc, id), and checks
/// the ingested text matches, so the embedded comment times are
/// non-decreasing.
#[test]
fn fixture_dump_temporal_order() {
    let (posts_path, comments_path) = testkit::parenting_dump();
    let records = |p: &std::path::Path| -> Vec<Value> {
        std::fs::read_to_string(p)
            .unwrap()
            .lines()
            .filter_map(|l| serde_json::from_str::<Value>(l).ok())
            .filter(|v| v.is_object())
            .collect()
    };
    let mut by_post: BTreeMap<String, Vec<(i64, String, String)>> = BTreeMap::new();
    for c in records(&comments_path) {
        let parent = c["link_id"].as_str().unwrap().trim_start_matches("t3_").to_string();
        by_post.entry(parent).or_default().push((
            c["created_utc"].as_i64().unwrap(),
            c["id"].as_str().unwrap().to_string(),
            c["body"].as_str().unwrap().to_string(),
        ));
    }
    let corpus = testkit::parenting_corpus();
    let posts = records(&posts_path);
    assert_eq!(posts.len(), corpus.len());
    for (post, thread) in posts.iter().zip(&corpus.threads) {
        let id = post["id"].as_str().unwrap();
        assert_eq!(thread.thread_id, id);
        let mut comments = by_post.remove(id).unwrap_or_default();
        comments.sort();
        let times: Vec<i64> = comments.iter().map(|c| c.0).collect();
        assert!(times.windows(2).all(|w| w[0] <= w[1]));
        let mut parts = vec![
            post["title"].as_str().unwrap().to_string(),
            post["selftext"].as_str().unwrap().to_string(),
        ];
        parts.extend(comments.iter().map(|c| c.2.clone()));
        assert_eq!(thread.text, parts.join(THREAD_SEPARATOR), "thread {id}");
        let post_t = post["created_utc"].as_i64().unwrap();
        assert_eq!(thread.earliest_utc, times.first().copied().unwrap_or(post_t).min(post_t));
        assert_eq!(thread.latest_utc, times.last().copied().unwrap_or(post_t).max(post_t));
    }
    // Only the orphan's parent is left over.
    assert_eq!(by_post.keys().collect::<Vec<_>>(), vec!["gone"]);
}

#[test]
fn fixture_dump_conservation() {
    let out = testkit::parenting_ingest();
    let s = out.stats;
    let (posts_path, comments_path) = testkit::parenting_dump();
    let lines = |p: &std::path::Path| std::fs::read_to_string(p).unwrap().lines().filter(|l| !l.trim().is_empty()).count() as u64;
    assert_eq!(s.posts_in, lines(&posts_path));
    assert_eq!(s.comments_in, lines(&comments_path));
    assert_eq!(s.posts_in, s.threads + s.skipped_posts);
    assert_eq!(s.comments_in, s.attached_comments + s.orphaned_comments + s.skipped_comments);
    assert_eq!((s.threads, s.orphaned_comments, s.skipped_posts, s.skipped_comments), (50, 1, 1, 1));
    let attached: u64 = out.corpus.threads.iter().map(|t| t.comment_count).sum();
    assert_eq!(attached, s.attached_comments);
    assert!(out.corpus.threads.iter().any(|t| t.text.contains("[deleted]")));
}

#[test]
fn committed_fixture_csv_matches_dump() {
    let loaded = load_corpus(&testkit::parenting_csv()).unwrap();
    assert_eq!(loaded, testkit::parenting_corpus());
}

#[test]
fn empty_corpus_csv_is_header_only() {
    let corpus = Corpus::new(vec![]).unwrap();
    let mut buf = Vec::new();
    write_corpus(&corpus, &mut buf).unwrap();
    assert_eq!(
        String::from_utf8(buf.clone()).unwrap(),
        "thread_id,subreddit,text,comment_count,earliest_utc,latest_utc\r\n"
    );
    assert_eq!(read_corpus(Cursor::new(buf)).unwrap(), corpus);
}

#[test]
fn three_thread_csv_has_four_logical_rows() {
    let parsed = ingest_streams(
        Cursor::new(small("posts.ndjson")),
        Cursor::new(small("comments.ndjson")),
        ArchiveFormat::Ndjson,
    )
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.csv");
    write_corpus_csv(&parsed.corpus, &path).unwrap();
    let rows = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_path(&path)
        .unwrap()
        .records()
        .count();
    assert_eq!(rows, 4);
    assert_eq!(load_corpus(&path).unwrap(), parsed.corpus);
}

#[test]
fn quoting_survives_round_trip() {
    let thread = DiscussionThread {
        thread_id: "q1".into(),
        subreddit: "x".into(),
        text: "a, \"quoted\"\nnew line\r\nand ,,\"\"".into(),
        comment_count: 0,
        earliest_utc: 0,
        latest_utc: 0,
    };
    let corpus = Corpus::new(vec![thread]).unwrap();
    let mut buf = Vec::new();
    write_corpus(&corpus, &mut buf).unwrap();
    assert_eq!(read_corpus(Cursor::new(buf)).unwrap().threads[0].text, corpus.threads[0].text);
}

#[test]
fn five_column_csv_is_schema_mismatch() {
    let csv = "thread_id,subreddit,text,comment_count,earliest_utc\r\na,b,c,0,0\r\n";
    assert!(matches!(
        read_corpus(Cursor::new(csv)),
        Err(pulse_core::corpus::CorpusError::SchemaMismatch { .. })
    ));
}

fn adversarial_text() -> impl Strategy<Value = String> {
    prop_oneof![
        any::<String>(),
        "[a-z ,\"\r\n\t;|—é😀\\\\'-]{0,60}",
        Just(String::new()),
        Just("\"\"\"".to_string()),
        Just("\r\n---\r\n".to_string()),
        Just(",\n,".to_string()),
    ]
}

fn thread_strategy() -> impl Strategy<Value = (String, String, u64, i64, i64)> {
    (
        adversarial_text(),
        adversarial_text(),
        any::<u64>(),
        0i64..=i64::MAX / 2,
        0i64..=i64::MAX / 2,
    )
}

static GENERATED: AtomicUsize = AtomicUsize::new(0);

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn csv_round_trip_is_identity(rows in prop::collection::vec(thread_strategy(), 20..40)) {
        let threads: Vec<DiscussionThread> = rows
            .into_iter()
            .enumerate()
            .map(|(i, (subreddit, text, comment_count, a, b))| DiscussionThread {
                thread_id: format!("t{i}"),
                subreddit,
                text,
                comment_count,
                earliest_utc: a.min(b),
                latest_utc: a.max(b),
            })
            .collect();
        GENERATED.fetch_add(threads.len(), Ordering::SeqCst);
        let corpus = Corpus::new(threads).unwrap();
        let mut buf = Vec::new();
        write_corpus(&corpus, &mut buf).unwrap();
        let back = read_corpus(Cursor::new(buf)).unwrap();
        prop_assert_eq!(back, corpus);
    }
}

#[test]
fn round_trip_property_covers_a_thousand_threads() {
    // Runs the property body with its own counter so the total is known
    // regardless of test scheduling.
    let before = GENERATED.load(Ordering::SeqCst);
    csv_round_trip_is_identity();
    let generated = GENERATED.load(Ordering::SeqCst) - before;
    assert!(generated >= 1_000, "only {generated} threads generated");
}
