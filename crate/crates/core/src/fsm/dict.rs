//! The `{0: [1, 2], 1: [2], 2: [0]}` text form that is injected into prompts.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use thiserror::Error;

use super::{Fsm, StateId};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("malformed dictionary text at byte {offset}: {message}")]
pub struct DictParseError {
    pub offset: usize,
    pub message: String,
}

pub(super) fn encode(fsm: &Fsm) -> String {
    let mut out = String::from("{");
    for (i, succ) in fsm.lists().iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        let _ = write!(out, "{i}: [");
        for (k, s) in succ.iter().enumerate() {
            if k > 0 {
                out.push_str(", ");
            }
            let _ = write!(out, "{s}");
        }
        out.push(']');
    }
    out.push('}');
    out
}

/// Parses dictionary text back into a machine.
///
/// Whitespace is free-form. The state count is one more than the largest id
/// mentioned as a key or a successor.
pub fn parse_dict_text(text: &str) -> Result<Fsm, DictParseError> {
    let mut p = Cursor { s: text.as_bytes(), pos: 0 };
    let mut map: BTreeMap<StateId, Vec<StateId>> = BTreeMap::new();
    let mut max_id: Option<StateId> = None;

    p.expect(b'{')?;
    if !p.eat(b'}') {
        loop {
            let key = p.number()?;
            p.expect(b':')?;
            p.expect(b'[')?;
            let mut succ = Vec::new();
            if !p.eat(b']') {
                loop {
                    let v = p.number()?;
                    max_id = Some(max_id.map_or(v, |m| m.max(v)));
                    succ.push(v);
                    if p.eat(b']') {
                        break;
                    }
                    p.expect(b',')?;
                }
            }
            max_id = Some(max_id.map_or(key, |m| m.max(key)));
            if map.insert(key, succ).is_some() {
                return Err(p.err(format!("duplicate key {key}")));
            }
            if p.eat(b'}') {
                break;
            }
            p.expect(b',')?;
        }
    }
    p.skip_ws();
    if p.pos != p.s.len() {
        return Err(p.err("trailing characters".into()));
    }
    let n = max_id.map_or(0, |m| m + 1);
    Ok(Fsm::from_map(n, &map))
}

struct Cursor<'a> {
    s: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn skip_ws(&mut self) {
        while self.pos < self.s.len() && self.s[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn err(&self, message: String) -> DictParseError {
        DictParseError {
            offset: self.pos,
            message,
        }
    }

    fn eat(&mut self, c: u8) -> bool {
        self.skip_ws();
        if self.s.get(self.pos) == Some(&c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: u8) -> Result<(), DictParseError> {
        if self.eat(c) {
            Ok(())
        } else {
            Err(self.err(format!("expected '{}'", c as char)))
        }
    }

    fn number(&mut self) -> Result<StateId, DictParseError> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.s.len() && self.s[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(self.err("expected a state id".into()));
        }
        std::str::from_utf8(&self.s[start..self.pos])
            .expect("ascii digits")
            .parse()
            .map_err(|_| self.err("state id out of range".into()))
    }
}
