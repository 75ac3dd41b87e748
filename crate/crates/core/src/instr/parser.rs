//! Tokenizer and recursive-descent parser for instruction sentences.

use std::collections::BTreeSet;
use std::sync::OnceLock;

use thiserror::Error;

use super::{ContainerRef, Destination, ObjectDescriptor, Relation, SimpleDescriptor, SkillInstruction};
use crate::world::{Category, Color, Region, StandSlot};

/// Offsets count characters from the start of the input.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ParseError {
    #[error("empty instruction")]
    Empty,
    #[error("unknown word \"{word}\" at offset {offset}")]
    UnknownWord { word: String, offset: usize },
    #[error("syntax error at offset {offset}: expected {expected}")]
    SyntaxError { offset: usize, expected: String },
}

const KEYWORDS: [&str; 8] = ["put", "the", "in", "on", "at", "into", "onto", "table"];

fn vocabulary() -> &'static BTreeSet<&'static str> {
    static VOCAB: OnceLock<BTreeSet<&'static str>> = OnceLock::new();
    VOCAB.get_or_init(|| {
        let mut v: BTreeSet<&'static str> = KEYWORDS.into_iter().collect();
        v.extend(Color::ALL.iter().map(|c| c.word()));
        v.extend(Category::all().flat_map(|c| c.phrase().split(' ')));
        v.extend(Region::ALL.iter().flat_map(|r| r.phrase().split(' ')));
        v.extend(StandSlot::ALL.iter().flat_map(|s| s.phrase().split(' ')));
        v
    })
}

#[derive(Debug)]
struct Token {
    text: String,
    offset: usize,
}

fn tokenize(text: &str) -> Result<Vec<Token>, ParseError> {
    let mut tokens = Vec::new();
    let mut current: Option<Token> = None;
    for (offset, ch) in text.chars().enumerate() {
        if ch.is_whitespace() {
            tokens.extend(current.take());
        } else {
            current
                .get_or_insert_with(|| Token { text: String::new(), offset })
                .text
                .extend(ch.to_lowercase());
        }
    }
    tokens.extend(current);
    if let Some(last) = tokens.last_mut() {
        if last.text.len() > 1 && last.text.ends_with('.') {
            last.text.pop();
        } else if last.text == "." {
            tokens.pop();
        }
    }
    if tokens.is_empty() {
        return Err(ParseError::Empty);
    }
    let vocab = vocabulary();
    for t in &tokens {
        if !vocab.contains(t.text.as_str()) {
            return Err(ParseError::UnknownWord { word: t.text.clone(), offset: t.offset });
        }
    }
    Ok(tokens)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&str> {
        self.tokens.get(self.pos).map(|t| t.text.as_str())
    }

    fn offset(&self) -> usize {
        self.tokens.get(self.pos).map_or(self.end, |t| t.offset)
    }

    fn fail<T>(&self, expected: &str) -> Result<T, ParseError> {
        Err(ParseError::SyntaxError { offset: self.offset(), expected: expected.to_string() })
    }

    fn expect(&mut self, word: &str) -> Result<(), ParseError> {
        if self.peek() == Some(word) {
            self.pos += 1;
            Ok(())
        } else {
            self.fail(&format!("\"{word}\""))
        }
    }

    fn eat(&mut self, word: &str) -> bool {
        if self.peek() == Some(word) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    /// Longest phrase among `candidates` starting at the cursor.
    fn phrase<T: Copy>(&mut self, candidates: impl Iterator<Item = (&'static str, T)>) -> Option<T> {
        let mut best: Option<(usize, T)> = None;
        for (phrase, value) in candidates {
            let words: Vec<&str> = phrase.split(' ').collect();
            let fits = words
                .iter()
                .enumerate()
                .all(|(i, w)| self.tokens.get(self.pos + i).is_some_and(|t| t.text == *w));
            if fits && best.is_none_or(|(n, _)| words.len() > n) {
                best = Some((words.len(), value));
            }
        }
        best.map(|(n, v)| {
            self.pos += n;
            v
        })
    }

    fn simple(&mut self) -> Result<SimpleDescriptor, ParseError> {
        let color = self.peek().and_then(Color::from_word);
        if color.is_some() {
            self.pos += 1;
        }
        match self.phrase(Category::all().map(|c| (c.phrase(), c))) {
            Some(category) => Ok(SimpleDescriptor { color, category }),
            None => self.fail("an object category"),
        }
    }

    fn region(&mut self) -> Result<Region, ParseError> {
        match self.phrase(Region::ALL.into_iter().map(|r| (r.phrase(), r))) {
            Some(r) => Ok(r),
            None => self.fail("a region"),
        }
    }

    fn at_region(&mut self) -> Result<Option<Region>, ParseError> {
        if self.eat("at") {
            self.expect("the")?;
            Ok(Some(self.region()?))
        } else {
            Ok(None)
        }
    }

    fn instruction(&mut self) -> Result<SkillInstruction, ParseError> {
        self.expect("put")?;
        self.expect("the")?;
        let head = self.simple()?;
        let relation = match self.peek() {
            Some("in") => {
                self.pos += 1;
                self.expect("the")?;
                let at = self.pos;
                let c = self.simple()?;
                if !c.category.is_container() {
                    self.pos = at;
                    return self.fail("a bowl or box");
                }
                Some(Relation::In(c))
            }
            Some("on") => {
                self.pos += 1;
                self.expect("the")?;
                let at = self.pos;
                let c = self.simple()?;
                if c.category != Category::Stand {
                    self.pos = at;
                    return self.fail("the stand");
                }
                Some(Relation::On(c))
            }
            _ => None,
        };
        let region = self.at_region()?;
        let pick = ObjectDescriptor { color: head.color, category: head.category, relation, region };

        let prep = match self.peek() {
            Some(p @ ("into" | "onto")) => p.to_string(),
            _ => return self.fail("\"into\" or \"onto\""),
        };
        self.pos += 1;
        self.expect("the")?;
        let at = self.pos;
        let dest = if self.eat("table") {
            self.expect("at")?;
            self.expect("the")?;
            Destination::Table { region: self.region()? }
        } else {
            let target = self.simple()?;
            match target.category {
                Category::TrashCan if target.color.is_none() => Destination::Trash,
                Category::Stand if target.color.is_none() => {
                    self.expect("at")?;
                    self.expect("the")?;
                    match self.phrase(StandSlot::ALL.into_iter().map(|s| (s.phrase(), s))) {
                        Some(s) => Destination::StandSlot { layer: s.layer, slot: s.slot },
                        None => return self.fail("a stand position"),
                    }
                }
                c if c.is_container() => Destination::Container(ContainerRef {
                    color: target.color,
                    category: c,
                    region: self.at_region()?,
                }),
                _ => {
                    self.pos = at;
                    return self.fail("a container, the stand, the table or the trash can");
                }
            }
        };
        let wanted = match dest {
            Destination::Container(_) | Destination::Trash => "into",
            _ => "onto",
        };
        if prep != wanted {
            self.pos = at - 2;
            return self.fail(&format!("\"{wanted}\""));
        }
        if self.pos != self.tokens.len() {
            return self.fail("end of instruction");
        }
        Ok(SkillInstruction { pick, dest })
    }
}

/// Parses one instruction sentence. Case and a trailing period are ignored.
pub fn parse_instruction(text: &str) -> Result<SkillInstruction, ParseError> {
    let tokens = tokenize(text)?;
    let mut p = Parser { tokens, pos: 0, end: text.chars().count() };
    p.instruction()
}
