//! UTC timestamps at second resolution.
//!
//! The registry never reads a clock; callers supply every timestamp.

use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};

/// Seconds since the Unix epoch, rendered as RFC 3339 (`2026-10-19T08:00:00Z`).
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Timestamp(i64);

impl Timestamp {
    pub const fn from_unix(secs: i64) -> Self {
        Timestamp(secs)
    }

    pub const fn unix(self) -> i64 {
        self.0
    }

    /// Current wall-clock time, truncated to whole seconds.
    pub fn now() -> Self {
        Timestamp(Utc::now().timestamp())
    }

    pub fn plus_secs(self, secs: i64) -> Self {
        Timestamp(self.0 + secs)
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match DateTime::<Utc>::from_timestamp(self.0, 0) {
            Some(dt) => f.write_str(&dt.to_rfc3339_opts(SecondsFormat::Secs, true)),
            None => write!(f, "@{}", self.0),
        }
    }
}

impl fmt::Debug for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Timestamp({self})")
    }
}

impl FromStr for Timestamp {
    type Err = chrono::ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(Timestamp(DateTime::parse_from_rfc3339(s)?.timestamp()))
    }
}

impl TryFrom<String> for Timestamp {
    type Error = chrono::ParseError;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        value.parse()
    }
}

impl From<Timestamp> for String {
    fn from(ts: Timestamp) -> Self {
        ts.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rfc3339_round_trip() {
        let ts = Timestamp::from_unix(1_790_000_000);
        let text = ts.to_string();
        assert_eq!(text, "2026-09-21T14:13:20Z");
        assert_eq!(text.parse::<Timestamp>().unwrap(), ts);
        let json = serde_json::to_string(&ts).unwrap();
        assert_eq!(json, "\"2026-09-21T14:13:20Z\"");
    }

    #[test]
    fn offsets_normalize_to_utc() {
        let ts: Timestamp = "2026-09-21T16:13:20+02:00".parse().unwrap();
        assert_eq!(ts.unix(), 1_790_000_000);
    }
}
