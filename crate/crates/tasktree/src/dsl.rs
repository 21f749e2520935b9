//! Text format for behavior trees.
//!
//! ```text
//! # comments run to end of line
//! node  := kind args? label? block?
//! kind  := seq | fallback | parallel | repeat | cond | act
//!        | sot_seq | sot_fallback | sot_parallel | sot_act
//! args  := "(" integer ")"            # parallel success threshold
//! label := "double quoted string"     # required on leaves
//! block := "{" node+ "}"              # required on composites
//! ```
//!
//! Node ids are slugs of the labels (or the kind for unlabeled
//! composites), deduplicated in pre-order, so a tree file maps to
//! stable ids without any explicit id syntax.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::bt::{BtNode, NodeKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone)]
pub struct Diag {
    pub line: usize,
    pub col: usize,
    pub severity: Severity,
    pub message: String,
}

impl fmt::Display for Diag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sev = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        write!(f, "{}:{}: {}: {}", self.line, self.col, sev, self.message)
    }
}

#[derive(Debug, Clone)]
pub struct ParsedTree {
    pub root: BtNode,
    /// Source location of every node, by id.
    pub spans: BTreeMap<String, (usize, usize)>,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Number(usize),
    Str(String),
    LBrace,
    RBrace,
    LParen,
    RParen,
    Eof,
}

#[derive(Debug, Clone)]
struct Spanned {
    tok: Tok,
    line: usize,
    col: usize,
}

fn lex(src: &str) -> Result<Vec<Spanned>, Vec<Diag>> {
    let mut out = Vec::new();
    let mut line = 1usize;
    let mut col = 1usize;
    let mut chars = src.chars().peekable();

    macro_rules! bump {
        () => {{
            let c = chars.next();
            if c == Some('\n') {
                line += 1;
                col = 1;
            } else if c.is_some() {
                col += 1;
            }
            c
        }};
    }

    loop {
        let (tline, tcol) = (line, col);
        let Some(&c) = chars.peek() else {
            out.push(Spanned {
                tok: Tok::Eof,
                line,
                col,
            });
            return Ok(out);
        };
        match c {
            ' ' | '\t' | '\r' | '\n' => {
                bump!();
            }
            '#' => {
                while let Some(&c) = chars.peek() {
                    if c == '\n' {
                        break;
                    }
                    bump!();
                }
            }
            '{' => {
                bump!();
                out.push(Spanned {
                    tok: Tok::LBrace,
                    line: tline,
                    col: tcol,
                });
            }
            '}' => {
                bump!();
                out.push(Spanned {
                    tok: Tok::RBrace,
                    line: tline,
                    col: tcol,
                });
            }
            '(' => {
                bump!();
                out.push(Spanned {
                    tok: Tok::LParen,
                    line: tline,
                    col: tcol,
                });
            }
            ')' => {
                bump!();
                out.push(Spanned {
                    tok: Tok::RParen,
                    line: tline,
                    col: tcol,
                });
            }
            '"' => {
                bump!();
                let mut s = String::new();
                loop {
                    match bump!() {
                        None | Some('\n') => {
                            return Err(vec![Diag {
                                line: tline,
                                col: tcol,
                                severity: Severity::Error,
                                message: "unterminated string".into(),
                            }]);
                        }
                        Some('"') => break,
                        Some('\\') => match bump!() {
                            Some('"') => s.push('"'),
                            Some('\\') => s.push('\\'),
                            other => {
                                return Err(vec![Diag {
                                    line: tline,
                                    col: tcol,
                                    severity: Severity::Error,
                                    message: format!(
                                        "unsupported escape '\\{}'",
                                        other.map(String::from).unwrap_or_default()
                                    ),
                                }]);
                            }
                        },
                        Some(c) => s.push(c),
                    }
                }
                out.push(Spanned {
                    tok: Tok::Str(s),
                    line: tline,
                    col: tcol,
                });
            }
            c if c.is_ascii_digit() => {
                let mut n = 0usize;
                while let Some(&c) = chars.peek() {
                    if let Some(d) = c.to_digit(10) {
                        n = n * 10 + d as usize;
                        bump!();
                    } else {
                        break;
                    }
                }
                out.push(Spanned {
                    tok: Tok::Number(n),
                    line: tline,
                    col: tcol,
                });
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let mut s = String::new();
                while let Some(&c) = chars.peek() {
                    if c.is_ascii_alphanumeric() || c == '_' {
                        s.push(c);
                        bump!();
                    } else {
                        break;
                    }
                }
                out.push(Spanned {
                    tok: Tok::Ident(s),
                    line: tline,
                    col: tcol,
                });
            }
            c => {
                return Err(vec![Diag {
                    line: tline,
                    col: tcol,
                    severity: Severity::Error,
                    message: format!("unexpected character '{}'", c),
                }]);
            }
        }
    }
}

struct Parser {
    toks: Vec<Spanned>,
    pos: usize,
    ids: BTreeMap<String, usize>,
    spans: BTreeMap<String, (usize, usize)>,
}

impl Parser {
    fn peek(&self) -> &Spanned {
        &self.toks[self.pos]
    }

    fn next(&mut self) -> Spanned {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn err(&self, at: &Spanned, msg: impl Into<String>) -> Vec<Diag> {
        vec![Diag {
            line: at.line,
            col: at.col,
            severity: Severity::Error,
            message: msg.into(),
        }]
    }

    fn fresh_id(&mut self, base: &str) -> String {
        let slug = slugify(base);
        let count = self.ids.entry(slug.clone()).or_insert(0);
        *count += 1;
        if *count == 1 {
            slug
        } else {
            format!("{}-{}", slug, count)
        }
    }

    fn node(&mut self) -> Result<BtNode, Vec<Diag>> {
        let head = self.next();
        let Tok::Ident(kind_name) = &head.tok else {
            return Err(self.err(&head, "expected a node kind"));
        };
        let (kind_name, scoped) = match kind_name.strip_prefix("sot_") {
            Some(base @ ("seq" | "fallback" | "parallel")) => (base.to_string(), true),
            _ => (kind_name.clone(), false),
        };

        // Optional (threshold) argument, parallel only.
        let mut threshold = None;
        if self.peek().tok == Tok::LParen {
            let lp = self.next();
            let num = self.next();
            let Tok::Number(n) = num.tok else {
                return Err(self.err(&num, "expected an integer threshold"));
            };
            let rp = self.next();
            if rp.tok != Tok::RParen {
                return Err(self.err(&rp, "expected ')'"));
            }
            if kind_name != "parallel" {
                return Err(self.err(&lp, format!("'{}' takes no arguments", kind_name)));
            }
            threshold = Some(n);
        }

        // Optional label.
        let mut label = String::new();
        if let Tok::Str(s) = &self.peek().tok {
            label = s.clone();
            self.next();
        }

        let is_leaf = matches!(kind_name.as_str(), "cond" | "act" | "sot_act");
        if is_leaf && label.is_empty() {
            return Err(self.err(&head, format!("'{}' needs a label", kind_name)));
        }

        let kind = match kind_name.as_str() {
            "seq" => NodeKind::Sequence,
            "fallback" => NodeKind::Fallback,
            "parallel" => {
                let Some(m) = threshold else {
                    return Err(self.err(&head, "parallel needs a '(threshold)' argument"));
                };
                NodeKind::Parallel {
                    success_threshold: m,
                }
            }
            "repeat" => NodeKind::Repeat,
            "cond" => NodeKind::Condition {
                predicate: label.clone(),
            },
            "act" => NodeKind::Action {
                command: label.clone(),
            },
            "sot_act" => NodeKind::SotAction {
                task: label.clone(),
            },
            other => {
                return Err(self.err(&head, format!("unknown node kind '{}'", other)));
            }
        };

        let id = if label.is_empty() {
            let printed = print_kind(&kind, scoped);
            self.fresh_id(printed)
        } else {
            self.fresh_id(&label)
        };
        self.spans.insert(id.clone(), (head.line, head.col));

        let mut children = Vec::new();
        if !is_leaf {
            let lb = self.next();
            if lb.tok != Tok::LBrace {
                return Err(self.err(&lb, "expected '{' with children"));
            }
            while self.peek().tok != Tok::RBrace {
                if self.peek().tok == Tok::Eof {
                    return Err(self.err(self.peek(), "unexpected end of input, expected '}'"));
                }
                children.push(self.node()?);
            }
            self.next(); // consume '}'
            if children.is_empty() {
                return Err(self.err(&head, "composite needs at least one child"));
            }
            if matches!(kind, NodeKind::Repeat) && children.len() != 1 {
                return Err(self.err(&head, "repeat takes exactly one child"));
            }
            if let NodeKind::Parallel { success_threshold } = kind {
                if success_threshold == 0 || success_threshold > children.len() {
                    return Err(self.err(
                        &head,
                        format!(
                            "parallel threshold {} out of range 1..={}",
                            success_threshold,
                            children.len()
                        ),
                    ));
                }
            }
        } else if self.peek().tok == Tok::LBrace {
            return Err(self.err(self.peek(), format!("'{}' cannot have children", kind_name)));
        }

        Ok(BtNode {
            id,
            label,
            kind,
            scoped,
            children,
        })
    }
}

pub fn parse(src: &str) -> Result<ParsedTree, Vec<Diag>> {
    let toks = lex(src)?;
    let mut p = Parser {
        toks,
        pos: 0,
        ids: BTreeMap::new(),
        spans: BTreeMap::new(),
    };
    let root = p.node()?;
    let tail = p.peek().clone();
    if tail.tok != Tok::Eof {
        return Err(p.err(&tail, "trailing input after the root node"));
    }
    Ok(ParsedTree {
        root,
        spans: p.spans,
    })
}

fn slugify(s: &str) -> String {
    let mut out = String::new();
    let mut dash = false;
    for c in s.chars() {
        if c.is_ascii_alphanumeric() {
            out.push(c.to_ascii_lowercase());
            dash = false;
        } else if !dash && !out.is_empty() {
            out.push('-');
            dash = true;
        }
    }
    while out.ends_with('-') {
        out.pop();
    }
    if out.is_empty() {
        "node".to_string()
    } else {
        out
    }
}

fn print_kind(kind: &NodeKind, scoped: bool) -> &'static str {
    match (kind, scoped) {
        (NodeKind::Sequence, false) => "seq",
        (NodeKind::Sequence, true) => "sot_seq",
        (NodeKind::Fallback, false) => "fallback",
        (NodeKind::Fallback, true) => "sot_fallback",
        (NodeKind::Parallel { .. }, false) => "parallel",
        (NodeKind::Parallel { .. }, true) => "sot_parallel",
        (NodeKind::Repeat, _) => "repeat",
        (NodeKind::Condition { .. }, _) => "cond",
        (NodeKind::Action { .. }, _) => "act",
        (NodeKind::SotAction { .. }, _) => "sot_act",
    }
}

/// Canonical form: two-space indent, labels only where present.
pub fn print(root: &BtNode) -> String {
    let mut out = String::new();
    print_node(root, 0, &mut out);
    out
}

fn print_node(node: &BtNode, depth: usize, out: &mut String) {
    for _ in 0..depth {
        out.push_str("  ");
    }
    out.push_str(print_kind(&node.kind, node.scoped));
    if let NodeKind::Parallel { success_threshold } = node.kind {
        out.push_str(&format!("({})", success_threshold));
    }
    if !node.label.is_empty() {
        out.push_str(" \"");
        for c in node.label.chars() {
            match c {
                '"' => out.push_str("\\\""),
                '\\' => out.push_str("\\\\"),
                c => out.push(c),
            }
        }
        out.push('"');
    }
    if node.is_leaf_kind() {
        out.push('\n');
        return;
    }
    out.push_str(" {\n");
    for c in &node.children {
        print_node(c, depth + 1, out);
    }
    for _ in 0..depth {
        out.push_str("  ");
    }
    out.push_str("}\n");
}

/// Checks every leaf against the scenario's catalogs.
pub fn validate_tree(
    parsed: &ParsedTree,
    predicates: &BTreeSet<String>,
    commands: &BTreeSet<String>,
    tasks: &BTreeSet<String>,
) -> Vec<Diag> {
    let mut diags = Vec::new();
    parsed.root.visit(&mut |n| {
        let (line, col) = parsed.spans.get(&n.id).copied().unwrap_or((0, 0));
        let mut missing = |what: &str, name: &str| {
            diags.push(Diag {
                line,
                col,
                severity: Severity::Error,
                message: format!("unknown {} '{}'", what, name),
            });
        };
        match &n.kind {
            NodeKind::Condition { predicate } => {
                if !predicates.contains(predicate) {
                    missing("predicate", predicate);
                }
            }
            NodeKind::Action { command } => {
                if !commands.contains(command) {
                    missing("command", command);
                }
            }
            NodeKind::SotAction { task } => {
                if !tasks.contains(task) {
                    missing("task", task);
                }
            }
            _ => {}
        }
    });
    diags
}
