//! Parsers for model completions.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("missing marker `{0}`")]
pub struct MissingMarker(pub &'static str);

/// Locates the marker lines in order. Returns, for each marker, the byte
/// offset just past its line, and the offset of the line start.
fn find_markers(
    text: &str,
    markers: &[&'static str],
) -> Vec<Result<(usize, usize), MissingMarker>> {
    let mut out = Vec::with_capacity(markers.len());
    let mut offset = 0usize;
    let mut lines = text.split_inclusive('\n');
    let mut pos = 0usize;
    for &marker in markers {
        let mut found = None;
        for line in lines.by_ref() {
            let start = pos;
            pos += line.len();
            if line.trim_end() == marker {
                found = Some((start, pos));
                break;
            }
        }
        match found {
            Some(f) => {
                offset = f.1;
                out.push(Ok(f));
            }
            None => {
                out.push(Err(MissingMarker(marker)));
                // Later markers can only be searched after the missing one.
                pos = offset;
                lines = text[text.len()..].split_inclusive('\n');
            }
        }
    }
    out
}

/// Splits `text` into the bodies following each marker line.
fn sections(text: &str, markers: &[&'static str]) -> Result<Vec<String>, MissingMarker> {
    let found = find_markers(text, markers)
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;
    let mut bodies = Vec::with_capacity(found.len());
    for (k, &(_, body_start)) in found.iter().enumerate() {
        let body_end = found.get(k + 1).map_or(text.len(), |next| next.0);
        bodies.push(text[body_start..body_end].trim().to_string());
    }
    Ok(bodies)
}

/// `(input, reason, answer)` from a transfer completion. Prose before the
/// `Input:` line is ignored.
pub fn parse_transfer_output(text: &str) -> Result<(String, String, String), MissingMarker> {
    let mut s = sections(text, &["Input:", "Reason:", "Answer:"])?;
    let answer = s.pop().expect("three sections");
    let reason = s.pop().expect("three sections");
    let input = s.pop().expect("three sections");
    Ok((input, reason, answer))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Judgement {
    Qualified,
    Unqualified,
}

/// The verdict of a verification completion: the last occurrence of either
/// token, case-insensitive. `None` when neither appears.
pub fn parse_verdict(text: &str) -> Option<Judgement> {
    let lower = text.to_lowercase();
    let at = lower.rfind("qualified")?;
    if lower[..at].ends_with("un") {
        Some(Judgement::Unqualified)
    } else {
        Some(Judgement::Qualified)
    }
}

/// `(reason, answer, format_miss)` from an inference completion. Without an
/// `Answer:` line the whole trimmed completion is the answer.
pub fn parse_inference_output(text: &str) -> (String, String, bool) {
    let found = find_markers(text, &["Reason:", "Answer:"]);
    match (&found[0], &found[1]) {
        (Ok(reason), Ok(answer)) => (
            text[reason.1..answer.0].trim().to_string(),
            text[answer.1..].trim().to_string(),
            false,
        ),
        (Err(_), _) => match find_markers(text, &["Answer:"])[0] {
            Ok(answer) => (String::new(), text[answer.1..].trim().to_string(), false),
            Err(_) => (String::new(), text.trim().to_string(), true),
        },
        (Ok(_), Err(_)) => (String::new(), text.trim().to_string(), true),
    }
}
