//! JSON schemas for every response body, served under `/v1/schemas`.

pub const SCHEMAS: [(&str, &str); 8] = [
    ("dataset", include_str!("../schemas/dataset.json")),
    ("dataset_list", include_str!("../schemas/dataset_list.json")),
    ("error", include_str!("../schemas/error.json")),
    ("job_state", include_str!("../schemas/job_state.json")),
    ("recommendations", include_str!("../schemas/recommendations.json")),
    ("report", include_str!("../schemas/report.json")),
    ("report_submission", include_str!("../schemas/report_submission.json")),
    ("themes", include_str!("../schemas/themes.json")),
];

pub fn schema(name: &str) -> Option<&'static str> {
    let name = name.strip_suffix(".json").unwrap_or(name);
    SCHEMAS.iter().find(|(n, _)| *n == name).map(|(_, s)| *s)
}
