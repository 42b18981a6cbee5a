//! JSON ingestion and serialization of carpet specs.
//!
//! Standard class:
//! `{"m": 3, "n": 5, "rects": [[1,1],...], "translations": ["0/1",...] | "standard"}`
//!
//! Generalized class:
//! `{"a": "1/4", "b": "1/6", "wide": false, "columns": [{"t": "0/1", "heights": ["0/1",...]},...]}`
//!
//! Rationals are strings (`"p/q"`, integers, or finite decimals) so no value
//! ever passes through a float.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{CarpetSpec, GeneralCarpetSpec, TranslationVector};
use crate::rational::{format_rational, parse_rational, Rational};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParsedSpec {
    Standard {
        spec: CarpetSpec,
        translations: TranslationVector,
    },
    General {
        spec: GeneralCarpetSpec,
        translations: Vec<Rational>,
    },
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(untagged)]
enum RawTranslations {
    Keyword(String),
    List(Vec<String>),
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct RawStandard {
    m: u32,
    n: u32,
    rects: Vec<[u32; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    translations: Option<RawTranslations>,
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct RawColumn {
    t: String,
    heights: Vec<String>,
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct RawGeneral {
    a: String,
    b: String,
    #[serde(default)]
    wide: bool,
    columns: Vec<RawColumn>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum RawSpec {
    Standard(RawStandard),
    General(RawGeneral),
}

/// Parses and validates a spec document.
pub fn parse_spec(text: &str) -> Result<ParsedSpec> {
    let value: serde_json::Value = serde_json::from_str(text)?;
    let raw: RawSpec = serde_json::from_value(value).map_err(|_| {
        Error::Parse("document matches neither the standard nor the generalized spec schema".into())
    })?;
    match raw {
        RawSpec::Standard(raw) => {
            let spec = CarpetSpec::new(raw.m, raw.n, raw.rects.iter().map(|r| (r[0], r[1])))?;
            let translations = match raw.translations {
                None => TranslationVector::standard(&spec),
                Some(RawTranslations::Keyword(k)) if k == "standard" => {
                    TranslationVector::standard(&spec)
                }
                Some(RawTranslations::Keyword(k)) => {
                    return Err(Error::Parse(format!(
                        "translations must be a list or \"standard\", got {k:?}"
                    )))
                }
                Some(RawTranslations::List(items)) => {
                    let values = items
                        .iter()
                        .map(|s| parse_rational(s))
                        .collect::<Result<Vec<_>>>()?;
                    TranslationVector::from_values(&spec, values)?
                }
            };
            Ok(ParsedSpec::Standard { spec, translations })
        }
        RawSpec::General(raw) => {
            let a = parse_rational(&raw.a)?;
            let b = parse_rational(&raw.b)?;
            let mut columns = Vec::with_capacity(raw.columns.len());
            let mut translations = Vec::with_capacity(raw.columns.len());
            for col in &raw.columns {
                translations.push(parse_rational(&col.t)?);
                columns.push(
                    col.heights
                        .iter()
                        .map(|s| parse_rational(s))
                        .collect::<Result<Vec<_>>>()?,
                );
            }
            let spec = GeneralCarpetSpec::new(a, b, raw.wide, columns)?;
            spec.check_translations(&translations)?;
            Ok(ParsedSpec::General { spec, translations })
        }
    }
}

pub fn read_spec(path: &std::path::Path) -> Result<ParsedSpec> {
    let text = std::fs::read_to_string(path)?;
    parse_spec(&text)
}

/// Serializes with explicit translation lists; `parse_spec` inverts it.
pub fn serialize_spec(parsed: &ParsedSpec) -> String {
    let value = match parsed {
        ParsedSpec::Standard { spec, translations } => serde_json::to_value(RawStandard {
            m: spec.m(),
            n: spec.n(),
            rects: spec.rects().iter().map(|r| [r.i, r.j]).collect(),
            translations: Some(RawTranslations::List(
                translations.values().map(format_rational).collect(),
            )),
        }),
        ParsedSpec::General { spec, translations } => serde_json::to_value(RawGeneral {
            a: format_rational(spec.a()),
            b: format_rational(spec.b()),
            wide: spec.wide(),
            columns: spec
                .columns()
                .iter()
                .zip(translations)
                .map(|(heights, t)| RawColumn {
                    t: format_rational(t),
                    heights: heights.iter().map(format_rational).collect(),
                })
                .collect(),
        }),
    };
    value.expect("spec values serialize").to_string()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{int, ratio};
    use proptest::prelude::*;

    #[test]
    fn parses_standard_example() {
        let text = r#"{"m":3,"n":5,"rects":[[1,1],[2,1],[2,3],[3,1],[3,3],[3,5]]}"#;
        let ParsedSpec::Standard { spec, translations } = parse_spec(text).unwrap() else {
            panic!("expected standard spec")
        };
        assert_eq!(spec.fibre_counts(), vec![1, 2, 3]);
        assert_eq!(spec.num_rects(), 6);
        assert_eq!(spec.columns(), vec![1, 2, 3]);
        assert!(translations.is_standard(&spec));
    }

    #[test]
    fn explicit_and_keyword_translations() {
        let text =
            r#"{"m":4,"n":5,"rects":[[1,1],[2,1],[3,1]],"translations":["0","1/4","0.3125"]}"#;
        let ParsedSpec::Standard { translations, .. } = parse_spec(text).unwrap() else {
            panic!()
        };
        assert_eq!(
            translations.values().cloned().collect::<Vec<_>>(),
            vec![int(0), ratio(1, 4), ratio(5, 16)]
        );
        let text = r#"{"m":4,"n":5,"rects":[[2,1]],"translations":"standard"}"#;
        let ParsedSpec::Standard { translations, .. } = parse_spec(text).unwrap() else {
            panic!()
        };
        assert_eq!(translations.get(2), Some(&ratio(1, 4)));
    }

    #[test]
    fn errors_are_classified() {
        let e = parse_spec(r#"{"m":3,"n":3,"rects":[[1,1]]}"#).unwrap_err();
        assert!(matches!(e, Error::Invariant(ref s) if s.contains("n must exceed m")));
        assert_eq!(e.exit_code(), 2);

        let e = parse_spec("{not json").unwrap_err();
        assert_eq!(e.exit_code(), 1);
        let e = parse_spec(r#"{"m":3}"#).unwrap_err();
        assert_eq!(e.exit_code(), 1);
        let e = parse_spec(r#"{"m":3,"n":4,"rects":[[1,1]],"translations":"random"}"#).unwrap_err();
        assert_eq!(e.exit_code(), 1);
        let e = parse_spec(r#"{"m":3,"n":4,"rects":[[1,1]],"translations":["x"]}"#).unwrap_err();
        assert_eq!(e.exit_code(), 1);
        let e =
            parse_spec(r#"{"m":3,"n":4,"rects":[[1,1]],"translations":["0","0"]}"#).unwrap_err();
        assert_eq!(e.exit_code(), 2);
        let e = parse_spec(r#"{"m":3,"n":4,"rects":[[1,1]],"translations":["3/4"]}"#).unwrap_err();
        assert_eq!(e.exit_code(), 2);
    }

    #[test]
    fn general_height_separation() {
        let text = r#"{"a":"1/4","b":"1/6","columns":[{"t":"0","heights":["0","1/12"]}]}"#;
        let e = parse_spec(text).unwrap_err();
        assert!(e.to_string().contains("column heights overlap"), "{e}");
        assert_eq!(e.exit_code(), 2);

        let text = r#"{"a":"1/4","b":"1/6","wide":false,"columns":[
            {"t":"0","heights":["0"]},{"t":"1/4","heights":["1/3"]},{"t":"1/2","heights":["0","1/2"]}]}"#;
        let ParsedSpec::General { spec, translations } = parse_spec(text).unwrap() else {
            panic!()
        };
        assert_eq!(spec.fibre_counts(), vec![1, 1, 2]);
        assert_eq!(translations[2], ratio(1, 2));

        let text = r#"{"a":"1/4","b":"1/6","columns":[{"t":"4/5","heights":["0"]}]}"#;
        assert_eq!(parse_spec(text).unwrap_err().exit_code(), 2);
    }

    fn arb_standard() -> impl Strategy<Value = ParsedSpec> {
        (
            2u32..5,
            1u32..4,
            proptest::collection::vec(any::<bool>(), 1..40),
            any::<u64>(),
        )
            .prop_filter_map("needs a rectangle", |(m, extra, mask, salt)| {
                let n = m + extra;
                let rects: Vec<(u32, u32)> = (1..=m)
                    .flat_map(|i| (1..=n).map(move |j| (i, j)))
                    .zip(mask.iter().cycle())
                    .filter(|(_, k)| **k)
                    .map(|(r, _)| r)
                    .collect();
                let spec = CarpetSpec::new(m, n, rects).ok()?;
                let values = (0..spec.num_columns() as u64)
                    .map(|k| ratio(((salt >> (k * 5)) % 7) as i64, 7 * i64::from(m)))
                    .collect();
                let translations = TranslationVector::from_values(&spec, values).ok()?;
                Some(ParsedSpec::Standard { spec, translations })
            })
    }

    proptest! {
        #[test]
        fn standard_round_trip(parsed in arb_standard()) {
            let text = serialize_spec(&parsed);
            prop_assert_eq!(parse_spec(&text).unwrap(), parsed);
        }
    }

    #[test]
    fn general_round_trip() {
        let text = r#"{"a":"1/3","b":"1/9","wide":true,"columns":[
            {"t":"0","heights":["0"]},{"t":"1/5","heights":["1/9","2/3"]},
            {"t":"1/2","heights":["0"]},{"t":"2/3","heights":["8/9"]}]}"#;
        let parsed = parse_spec(text).unwrap();
        assert_eq!(parse_spec(&serialize_spec(&parsed)).unwrap(), parsed);
    }
}
