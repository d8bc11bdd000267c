//! Minimal schema language for structured model replies.

use std::fmt::Write as _;

use serde_json::Value;

#[derive(Debug, Clone, PartialEq)]
pub enum Schema {
    Any,
    String,
    Integer,
    Number,
    Boolean,
    /// One of a fixed set of strings.
    Enum(Vec<String>),
    Array(Box<Schema>),
    Object(Vec<Field>),
    Nullable(Box<Schema>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    pub name: String,
    pub schema: Schema,
    pub required: bool,
}

impl Field {
    pub fn required(name: &str, schema: Schema) -> Self {
        Self {
            name: name.to_string(),
            schema,
            required: true,
        }
    }

    pub fn optional(name: &str, schema: Schema) -> Self {
        Self {
            name: name.to_string(),
            schema,
            required: false,
        }
    }
}

impl Schema {
    pub fn array(item: Schema) -> Self {
        Schema::Array(Box::new(item))
    }

    pub fn object(fields: Vec<Field>) -> Self {
        Schema::Object(fields)
    }

    pub fn one_of(values: &[&str]) -> Self {
        Schema::Enum(values.iter().map(|s| s.to_string()).collect())
    }

    /// Checks `value`; the error names the offending path.
    pub fn validate(&self, value: &Value) -> Result<(), String> {
        self.validate_at(value, "$")
    }

    fn validate_at(&self, value: &Value, path: &str) -> Result<(), String> {
        let fail = |want: &str| Err(format!("{path}: expected {want}, found {}", kind(value)));
        match self {
            Schema::Any => Ok(()),
            Schema::String => {
                if value.is_string() {
                    Ok(())
                } else {
                    fail("string")
                }
            }
            Schema::Integer => {
                if value.is_i64()
                    || value.is_u64()
                    || value.as_f64().is_some_and(|f| f.fract() == 0.0)
                {
                    Ok(())
                } else {
                    fail("integer")
                }
            }
            Schema::Number => {
                if value.is_number() {
                    Ok(())
                } else {
                    fail("number")
                }
            }
            Schema::Boolean => {
                if value.is_boolean() {
                    Ok(())
                } else {
                    fail("boolean")
                }
            }
            Schema::Enum(options) => match value.as_str() {
                Some(s) if options.iter().any(|o| o.eq_ignore_ascii_case(s)) => Ok(()),
                _ => Err(format!(
                    "{path}: expected one of {options:?}, found {value}"
                )),
            },
            Schema::Nullable(inner) => {
                if value.is_null() {
                    Ok(())
                } else {
                    inner.validate_at(value, path)
                }
            }
            Schema::Array(item) => match value.as_array() {
                Some(items) => items
                    .iter()
                    .enumerate()
                    .try_for_each(|(i, v)| item.validate_at(v, &format!("{path}[{i}]"))),
                None => fail("array"),
            },
            Schema::Object(fields) => match value.as_object() {
                Some(map) => fields.iter().try_for_each(|f| match map.get(&f.name) {
                    Some(v) => f.schema.validate_at(v, &format!("{path}.{}", f.name)),
                    None if f.required => {
                        Err(format!("{path}: missing required field `{}`", f.name))
                    }
                    None => Ok(()),
                }),
                None => fail("object"),
            },
        }
    }

    /// Compact skeleton shown to the model in repair prompts.
    pub fn describe(&self) -> String {
        let mut out = String::new();
        self.describe_into(&mut out);
        out
    }

    fn describe_into(&self, out: &mut String) {
        match self {
            Schema::Any => out.push_str("any"),
            Schema::String => out.push_str("string"),
            Schema::Integer => out.push_str("integer"),
            Schema::Number => out.push_str("number"),
            Schema::Boolean => out.push_str("boolean"),
            Schema::Enum(options) => {
                let _ = write!(out, "one of {}", options.join("|"));
            }
            Schema::Nullable(inner) => {
                inner.describe_into(out);
                out.push_str(" or null");
            }
            Schema::Array(item) => {
                out.push('[');
                item.describe_into(out);
                out.push_str(", ...]");
            }
            Schema::Object(fields) => {
                out.push('{');
                for (i, f) in fields.iter().enumerate() {
                    if i > 0 {
                        out.push_str(", ");
                    }
                    let _ = write!(out, "\"{}\"{}: ", f.name, if f.required { "" } else { "?" });
                    f.schema.describe_into(out);
                }
                out.push('}');
            }
        }
    }
}

fn kind(v: &Value) -> &'static str {
    match v {
        Value::Null => "null",
        Value::Bool(_) => "boolean",
        Value::Number(_) => "number",
        Value::String(_) => "string",
        Value::Array(_) => "array",
        Value::Object(_) => "object",
    }
}

/// Pulls a JSON value out of a model reply: the whole text, the first
/// fenced block, or the first balanced `{...}` / `[...]` span.
pub fn extract_json(text: &str) -> Result<Value, String> {
    let trimmed = text.trim();
    if let Ok(v) = serde_json::from_str(trimmed) {
        return Ok(v);
    }
    if let Some(start) = trimmed.find("```") {
        let after = &trimmed[start + 3..];
        let body_start = after.find('\n').map_or(0, |i| i + 1);
        if let Some(end) = after[body_start..].find("```") {
            if let Ok(v) = serde_json::from_str(after[body_start..body_start + end].trim()) {
                return Ok(v);
            }
        }
    }
    if let Some(span) = balanced_span(trimmed) {
        if let Ok(v) = serde_json::from_str(span) {
            return Ok(v);
        }
    }
    Err("reply does not contain a JSON value".to_string())
}

fn balanced_span(text: &str) -> Option<&str> {
    let start = text.find(['{', '['])?;
    let mut depth = 0i32;
    let mut in_string = false;
    let mut escaped = false;
    for (i, c) in text[start..].char_indices() {
        if in_string {
            match c {
                _ if escaped => escaped = false,
                '\\' => escaped = true,
                '"' => in_string = false,
                _ => {}
            }
            continue;
        }
        match c {
            '"' => in_string = true,
            '{' | '[' => depth += 1,
            '}' | ']' => {
                depth -= 1;
                if depth == 0 {
                    return Some(&text[start..start + i + 1]);
                }
            }
            _ => {}
        }
    }
    None
}
