//! Phone labels: a base symbol, an optional context class and a primed flag.
//!
//! The canonical text form is `base[+cK]['']`, for example `p`, `p+c3` and
//! `p+c3'`. Labels order lexicographically on that form.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// Number of vowel context classes.
pub const CONTEXT_CLASSES: u8 = 6;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Label {
    base: String,
    context: Option<u8>,
    primed: bool,
}

impl Label {
    pub fn new(base: impl Into<String>) -> Self {
        Label {
            base: base.into(),
            context: None,
            primed: false,
        }
    }

    pub fn with_context(mut self, class: u8) -> Self {
        self.context = Some(class);
        self
    }

    pub fn primed(mut self) -> Self {
        self.primed = true;
        self
    }

    pub fn base(&self) -> &str {
        &self.base
    }

    pub fn context(&self) -> Option<u8> {
        self.context
    }

    pub fn is_primed(&self) -> bool {
        self.primed
    }

    /// The same label with context and prime removed.
    pub fn base_label(&self) -> Label {
        Label::new(self.base.clone())
    }

    /// The label with its context class dropped; primed flag kept.
    pub fn without_context(&self) -> Label {
        Label {
            base: self.base.clone(),
            context: None,
            primed: self.primed,
        }
    }

    pub fn render(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.base)?;
        if let Some(class) = self.context {
            write!(f, "+c{class}")?;
        }
        if self.primed {
            f.write_str("'")?;
        }
        Ok(())
    }
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let invalid = || Error::InvalidLabel(s.to_string());
        let (rest, primed) = match s.strip_suffix('\'') {
            Some(rest) => (rest, true),
            None => (s, false),
        };
        let (base, context) = match rest.split_once("+c") {
            Some((base, class)) => {
                // Reject leading zeros and signs so that render(parse(s)) == s.
                if class.is_empty() || class.starts_with('0') || !class.bytes().all(|b| b.is_ascii_digit()) {
                    return Err(invalid());
                }
                let class: u8 = class.parse().map_err(|_| invalid())?;
                if !(1..=CONTEXT_CLASSES).contains(&class) {
                    return Err(invalid());
                }
                (base, Some(class))
            }
            None => (rest, None),
        };
        if base.is_empty() || base.contains(['+', '\'', ',']) || base.chars().any(char::is_whitespace) {
            return Err(invalid());
        }
        Ok(Label {
            base: base.to_string(),
            context,
            primed,
        })
    }
}

impl TryFrom<String> for Label {
    type Error = Error;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<Label> for String {
    fn from(label: Label) -> String {
        label.to_string()
    }
}

impl Ord for Label {
    fn cmp(&self, other: &Self) -> Ordering {
        self.to_string().cmp(&other.to_string())
    }
}

impl PartialOrd for Label {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
