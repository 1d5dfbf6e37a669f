//! TOML text formats for models, platforms and ratio schedules.

use serde::de::DeserializeOwned;
use serde::Serialize;

use super::{ModelSpec, PlatformSpec, RatioSchedule};
use crate::{Error, Result};

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// 1-based line of the `idx`-th `[[layer]]` header, falling back to line 1.
fn layer_line(text: &str, idx: usize) -> usize {
    text.lines()
        .enumerate()
        .filter(|(_, l)| l.trim_start().starts_with("[[layer]]"))
        .nth(idx)
        .map(|(i, _)| i + 1)
        .unwrap_or(1)
}

fn decode<T: DeserializeOwned>(text: &str, source_name: &str) -> Result<T> {
    toml::from_str(text).map_err(|e| Error::Parse {
        source_name: source_name.to_string(),
        line: e.span().map(|s| line_of(text, s.start)).unwrap_or(1),
        message: e.message().to_string(),
    })
}

fn encode<T: Serialize>(value: &T) -> String {
    toml::to_string(value).expect("descriptor types always serialize")
}

pub fn parse_model(text: &str, source_name: &str) -> Result<ModelSpec> {
    let model: ModelSpec = decode(text, source_name)?;
    if model.layers.is_empty() {
        return Err(Error::Parse {
            source_name: source_name.into(),
            line: 1,
            message: "model has no [[layer]] entries".into(),
        });
    }
    for (i, layer) in model.layers.iter().enumerate() {
        if let Err(e) = layer.validate() {
            return Err(Error::Parse {
                source_name: source_name.into(),
                line: layer_line(text, i),
                message: e.to_string(),
            });
        }
    }
    Ok(model)
}

pub fn serialize_model(model: &ModelSpec) -> String {
    encode(model)
}

pub fn parse_platform(text: &str, source_name: &str) -> Result<PlatformSpec> {
    let p: PlatformSpec = decode(text, source_name)?;
    p.validate().map_err(|e| Error::Parse {
        source_name: source_name.into(),
        line: 1,
        message: e.to_string(),
    })?;
    Ok(p)
}

pub fn serialize_platform(p: &PlatformSpec) -> String {
    encode(p)
}

pub fn parse_schedule(text: &str, source_name: &str) -> Result<RatioSchedule> {
    let s: RatioSchedule = decode(text, source_name)?;
    s.validate().map_err(|e| Error::Parse {
        source_name: source_name.into(),
        line: 1,
        message: e.to_string(),
    })?;
    Ok(s)
}

pub fn serialize_schedule(s: &RatioSchedule) -> String {
    encode(s)
}

#[cfg(test)]
mod tests {
    use super::super::{builtin_model, builtin_platform, builtin_schedule};
    use super::*;

    #[test]
    fn builtin_round_trips() {
        for name in super::super::MODEL_NAMES {
            let m = builtin_model(name).unwrap();
            assert_eq!(parse_model(&serialize_model(&m), "m").unwrap(), m);
        }
        let p = builtin_platform("zu7ev").unwrap();
        assert_eq!(parse_platform(&serialize_platform(&p), "p").unwrap(), p);
        let s = builtin_schedule("ovsf25").unwrap();
        assert_eq!(parse_schedule(&serialize_schedule(&s), "s").unwrap(), s);
    }

    #[test]
    fn syntax_error_reports_line() {
        let text = "name = \"x\"\n\n[[layer]]\nname = \"a\"\nkind = \"conv\"\nn_in = oops\n";
        match parse_model(text, "bad.toml") {
            Err(Error::Parse { line, source_name, .. }) => {
                assert_eq!(line, 6);
                assert_eq!(source_name, "bad.toml");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn semantic_error_points_at_layer() {
        let text = "name = \"x\"\n[[layer]]\nname = \"a\"\nkind = \"conv\"\nn_in = 4\nn_out = 4\nk = 3\nh = 8\nw = 8\npad = 1\n\n[[layer]]\nname = \"b\"\nkind = \"conv\"\nn_in = 4\nn_out = 4\nk = 3\nh = 8\nw = 8\nratio = 1.5\n";
        match parse_model(text, "m") {
            Err(Error::Parse { line, message, .. }) => {
                assert_eq!(line, 12);
                assert!(message.contains("ratio"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_field_value() {
        let text = "name = \"s\"\nratios = [1.0]\nrepr_3x3 = \"crop5\"\n";
        match parse_schedule(text, "s") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }
}
