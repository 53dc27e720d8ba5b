//! Verifier reply protocol.
//!
//! The verifier must open its reply with `VERDICT: PASS` or `VERDICT: FAIL`
//! on the first line; everything after that line is feedback. The token is
//! matched case-insensitively and leading whitespace is ignored. Replies
//! without such a line count as a failing verdict whose feedback is the
//! whole reply.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub pass: bool,
    pub feedback: String,
    pub raw: String,
}

const EMPTY_REPLY_FEEDBACK: &str = "verifier returned an empty reply";

fn verdict_token(line: &str) -> Option<bool> {
    let line = line.trim();
    let (key, value) = line.split_once(':')?;
    if !key.eq_ignore_ascii_case("verdict") {
        return None;
    }
    let value = value.trim();
    if value.eq_ignore_ascii_case("pass") {
        Some(true)
    } else if value.eq_ignore_ascii_case("fail") {
        Some(false)
    } else {
        None
    }
}

pub fn parse_verdict(raw: &str) -> Verdict {
    let body = raw.trim_start();
    let (first, rest) = match body.split_once('\n') {
        Some((first, rest)) => (first, rest),
        None => (body, ""),
    };
    let fallback = || {
        if raw.trim().is_empty() {
            EMPTY_REPLY_FEEDBACK.to_owned()
        } else {
            raw.to_owned()
        }
    };

    match verdict_token(first) {
        Some(pass) => {
            let feedback = rest.trim().to_owned();
            Verdict {
                pass,
                feedback: if feedback.is_empty() && !pass {
                    fallback()
                } else {
                    feedback
                },
                raw: raw.to_owned(),
            }
        }
        None => Verdict {
            pass: false,
            feedback: fallback(),
            raw: raw.to_owned(),
        },
    }
}
