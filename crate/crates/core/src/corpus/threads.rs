//! Joining posts with their comments into discussion threads.

use std::collections::HashMap;

use super::{Corpus, CorpusError, DiscussionThread, RawComment, RawPost};

/// Line placed between the title, the body, and each comment of a thread.
pub const THREAD_SEPARATOR: &str = "\n---\n";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Aggregation {
    pub corpus: Corpus,
    pub attached_comments: u64,
    pub orphaned_comments: u64,
}

/// Builds one thread per post, in post input order.
///
/// Comments are flattened into ascending `created_utc` order with ties broken
/// by `comment_id`. Comments whose parent post is absent are counted as
/// orphaned and dropped.
pub fn aggregate_threads(posts: Vec<RawPost>, comments: Vec<RawComment>) -> Result<Aggregation, CorpusError> {
    let mut index: HashMap<&str, usize> = HashMap::with_capacity(posts.len());
    for (i, p) in posts.iter().enumerate() {
        if index.insert(p.post_id.as_str(), i).is_some() {
            return Err(CorpusError::DuplicatePostId(p.post_id.clone()));
        }
    }

    let mut by_post: Vec<Vec<&RawComment>> = vec![Vec::new(); posts.len()];
    let mut orphaned = 0u64;
    for c in &comments {
        match index.get(c.parent_post_id.as_str()) {
            Some(&i) => by_post[i].push(c),
            None => orphaned += 1,
        }
    }

    let mut attached = 0u64;
    let threads = posts
        .iter()
        .zip(by_post)
        .map(|(post, mut cs)| {
            cs.sort_by(|a, b| {
                a.created_utc
                    .cmp(&b.created_utc)
                    .then_with(|| a.comment_id.cmp(&b.comment_id))
            });
            attached += cs.len() as u64;
            build_thread(post, &cs)
        })
        .collect();

    Ok(Aggregation {
        corpus: Corpus::new(threads)?,
        attached_comments: attached,
        orphaned_comments: orphaned,
    })
}

fn build_thread(post: &RawPost, comments: &[&RawComment]) -> DiscussionThread {
    let mut text = String::with_capacity(
        post.title.len() + post.selftext.len() + comments.iter().map(|c| c.body.len() + 5).sum::<usize>() + 5,
    );
    text.push_str(&post.title);
    text.push_str(THREAD_SEPARATOR);
    text.push_str(&post.selftext);
    for c in comments {
        text.push_str(THREAD_SEPARATOR);
        text.push_str(&c.body);
    }
    let earliest = comments.iter().map(|c| c.created_utc).fold(post.created_utc, i64::min);
    let latest = comments.iter().map(|c| c.created_utc).fold(post.created_utc, i64::max);
    DiscussionThread {
        thread_id: post.post_id.clone(),
        subreddit: post.subreddit.clone(),
        text,
        comment_count: comments.len() as u64,
        earliest_utc: earliest,
        latest_utc: latest,
    }
}
