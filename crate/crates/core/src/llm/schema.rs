//! Minimal structural schemas for stage outputs, and response cleanup.

use serde_json::Value;

/// Expected shape of a JSON value.
#[derive(Debug, Clone, PartialEq)]
pub enum Shape {
    Any,
    String,
    Integer,
    Array(Box<Shape>),
    /// Listed fields; `true` marks a required field. Unlisted keys are allowed.
    Object(Vec<(&'static str, Shape, bool)>),
    /// Accepts a value matching any alternative.
    AnyOf(Vec<Shape>),
}

impl Shape {
    pub fn array(item: Shape) -> Self {
        Shape::Array(Box::new(item))
    }

    fn check(&self, value: &Value, path: &str) -> Result<(), String> {
        match (self, value) {
            (Shape::Any, _) => Ok(()),
            (Shape::String, Value::String(_)) => Ok(()),
            (Shape::Integer, Value::Number(n)) if n.is_i64() || n.is_u64() => Ok(()),
            (Shape::Array(item), Value::Array(items)) => items
                .iter()
                .enumerate()
                .try_for_each(|(i, v)| item.check(v, &format!("{path}[{i}]"))),
            (Shape::Object(fields), Value::Object(map)) => {
                for (name, shape, required) in fields {
                    match map.get(*name) {
                        Some(v) => shape.check(v, &format!("{path}.{name}"))?,
                        None if *required => return Err(format!("{path}: missing required key {name:?}")),
                        None => {}
                    }
                }
                Ok(())
            }
            (Shape::AnyOf(options), v) => {
                let mut errors = Vec::new();
                for o in options {
                    match o.check(v, path) {
                        Ok(()) => return Ok(()),
                        Err(e) => errors.push(e),
                    }
                }
                Err(errors.join("; or "))
            }
            (shape, v) => Err(format!("{path}: expected {}, found {}", shape.kind(), kind_of(v))),
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            Shape::Any => "any",
            Shape::String => "string",
            Shape::Integer => "integer",
            Shape::Array(_) => "array",
            Shape::Object(_) => "object",
            Shape::AnyOf(_) => "one of several shapes",
        }
    }
}

fn kind_of(v: &Value) -> &'static str {
    match v {
        Value::Null => "null",
        Value::Bool(_) => "boolean",
        Value::Number(_) => "number",
        Value::String(_) => "string",
        Value::Array(_) => "array",
        Value::Object(_) => "object",
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct JsonSchema {
    pub name: &'static str,
    pub shape: Shape,
    /// Whether a bare `null` reply is an acceptable empty result.
    pub nullable: bool,
}

impl JsonSchema {
    pub fn validate(&self, value: &Value) -> Result<(), String> {
        if value.is_null() {
            return if self.nullable {
                Ok(())
            } else {
                Err("null is not an accepted result".into())
            };
        }
        self.shape.check(value, "$")
    }

    /// `{"themes": [{title, description}]}` or a bare array of themes.
    pub fn themes() -> Self {
        let theme = Shape::Object(vec![("title", Shape::String, true), ("description", Shape::String, false)]);
        Self {
            name: "themes",
            shape: Shape::AnyOf(vec![
                Shape::Object(vec![("themes", Shape::array(theme.clone()), true)]),
                Shape::array(theme),
            ]),
            nullable: false,
        }
    }

    pub fn quote_entries() -> Self {
        let entry = Shape::Object(vec![("quote", Shape::String, true), ("summary", Shape::String, true)]);
        Self {
            name: "quote_entries",
            shape: Shape::Object(vec![("entries", Shape::array(entry), true)]),
            nullable: true,
        }
    }

    pub fn codes() -> Self {
        let code = Shape::Object(vec![("name", Shape::String, true), ("description", Shape::String, true)]);
        Self {
            name: "codes",
            shape: Shape::Object(vec![("codes", Shape::array(code), true)]),
            nullable: false,
        }
    }

    pub fn categorized_quotes() -> Self {
        let code = Shape::Object(vec![("code", Shape::Integer, true), ("code_name", Shape::String, false)]);
        let item = Shape::Object(vec![
            ("quote", Shape::String, true),
            ("source_id", Shape::String, false),
            ("codes", Shape::array(code), true),
        ]);
        Self {
            name: "categorized_quotes",
            shape: Shape::Object(vec![("categorized_quotes", Shape::array(item), true)]),
            nullable: false,
        }
    }
}

/// Removes a surrounding markdown code fence (```` ```json ... ``` ````) if
/// one is present, returning the trimmed inner text.
pub fn strip_code_fences(text: &str) -> &str {
    let t = text.trim();
    let Some(open) = t.find("```") else {
        return t;
    };
    let after_open = &t[open + 3..];
    // Skip the info string (e.g. `json`) up to the end of that line.
    let inner_start = after_open.find('\n').map(|i| i + 1).unwrap_or(after_open.len());
    let inner = &after_open[inner_start..];
    match inner.rfind("```") {
        Some(close) => inner[..close].trim(),
        None => inner.trim(),
    }
}
