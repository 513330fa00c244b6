//! Source/sink/sanitizer rule for the static file server pattern.
//!
//! The rule fires when, within one file: an HTTP server handler exists, a
//! pathname expression is derived from the request URL, that expression
//! reaches a path join or string concatenation with a base directory, the
//! joined value reaches a filesystem read, and no traversal-blocking
//! sanitizer guards the value on the way.
//!
//! Flow tracking is deliberately shallow: direct renames, a small set of
//! decode pass-throughs, joins, and concatenation. Any other transform
//! keeps the taint but severs the guard chain, which biases the verdict
//! toward "vulnerable" — misjudged files are weeded out later by actual
//! exploitation. A guard only covers a sink when no decode happens between
//! the guarded variable and the sink value: checking before decoding is
//! exactly the bypass the url-encoded payload family exists for.

use std::collections::HashMap;

use super::lexer::{tokenize_js, Token, TokenKind};
use super::{LineSpan, SanitizerKind, TaintFinding, Verdict};

const DECODE_FNS: &[&str] = &["decodeURIComponent", "decodeURI", "unescape"];
const READ_FNS: &[&str] = &[
    "readFile",
    "readFileSync",
    "createReadStream",
    "stat",
    "statSync",
    "lstat",
    "lstatSync",
    "open",
    "openSync",
    "exists",
    "existsSync",
    "access",
    "accessSync",
];
const JOIN_FNS: &[&str] = &["join", "resolve", "normalize"];

/// Statically check one file for the pattern.
pub fn detect_traversal(source: &str) -> Option<TaintFinding> {
    Analysis::run(source).finding
}

/// Count `.includes('..')` checks applied to a value derived from the
/// request pathname. Used for before/after differencing when validating
/// generated patches; checks on unrelated variables do not count.
pub fn count_sanitizer_calls(source: &str) -> u32 {
    Analysis::run(source).includes_sites
}

/// First (request, response) parameter pair of an HTTP handler, if any.
pub fn handler_params(source: &str) -> Option<(String, String)> {
    let toks = significant_tokens(source);
    find_handlers(&toks).into_iter().next()
}

fn significant_tokens(source: &str) -> Vec<Token> {
    tokenize_js(source)
        .into_iter()
        .filter(|t| t.kind != TokenKind::Comment)
        .collect()
}

/// How a value was assembled from its tainted input.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum JoinKind {
    /// `path.join` / `path.resolve` / `path.normalize`: dot segments collapse,
    /// so a later `includes('..')` on the result can never fire.
    Normalized,
    /// String concatenation or template literal: dot segments survive.
    Concat,
}

#[derive(Debug, Clone)]
struct Node {
    tainted: bool,
    joined: Option<JoinKind>,
    /// (ancestor node id, number of decode edges between it and this value).
    /// Always contains (self, 0). A guard on an ancestor covers this value
    /// only when its decode distance is zero.
    ancestors: Vec<(usize, u32)>,
    source_span: Option<LineSpan>,
    join_span: Option<LineSpan>,
}

#[derive(Debug, Clone, Copy)]
struct Guard {
    kind: SanitizerKind,
    pos: usize,
}

/// Merged ancestry of every tainted value in an expression slice, plus the
/// span that originally sourced the taint.
type TaintedParts = (Vec<(usize, u32)>, Option<LineSpan>);

#[derive(Debug, Clone)]
struct SinkHit {
    pos: usize,
    node: usize,
    span: LineSpan,
}

struct Analysis {
    toks: Vec<Token>,
    req_vars: Vec<String>,
    fs_objs: Vec<String>,
    path_objs: Vec<String>,
    bare_read_fns: Vec<String>,
    bare_join_fns: Vec<String>,
    nodes: Vec<Node>,
    env: HashMap<String, usize>,
    guards: HashMap<usize, Vec<Guard>>,
    sinks: Vec<SinkHit>,
    includes_sites: u32,
    finding: Option<TaintFinding>,
}

impl Analysis {
    fn run(source: &str) -> Analysis {
        let toks = significant_tokens(source);
        let handlers = find_handlers(&toks);
        let mut an = Analysis {
            toks,
            req_vars: handlers.iter().map(|(r, _)| r.clone()).collect(),
            fs_objs: Vec::new(),
            path_objs: Vec::new(),
            bare_read_fns: Vec::new(),
            bare_join_fns: Vec::new(),
            nodes: Vec::new(),
            env: HashMap::new(),
            guards: HashMap::new(),
            sinks: Vec::new(),
            includes_sites: 0,
            finding: None,
        };
        an.scan_module_aliases();
        if !an.req_vars.is_empty() {
            an.walk();
            an.finding = an.assemble_finding();
        }
        an
    }

    fn lex(&self, i: usize) -> &str {
        self.toks.get(i).map_or("", |t| t.lexeme.as_str())
    }

    fn kind(&self, i: usize) -> Option<TokenKind> {
        self.toks.get(i).map(|t| t.kind)
    }

    fn is_punct(&self, i: usize, p: &str) -> bool {
        self.toks
            .get(i)
            .is_some_and(|t| t.kind == TokenKind::Punct && t.lexeme == p)
    }

    fn is_ident(&self, i: usize) -> bool {
        self.kind(i) == Some(TokenKind::Identifier)
    }

    /// Identifier that is not the property part of a member expression.
    fn is_bare_ident(&self, i: usize) -> bool {
        self.is_ident(i) && !(i > 0 && self.is_punct(i - 1, "."))
    }

    fn scan_module_aliases(&mut self) {
        for i in 0..self.toks.len() {
            if self.lex(i) != "require" || !self.is_punct(i + 1, "(") {
                continue;
            }
            if self.kind(i + 2) != Some(TokenKind::Str) || !self.is_punct(i + 3, ")") {
                continue;
            }
            let module = self.lex(i + 2).trim_start_matches("node:").to_string();
            // single binder: `X = require('m')` possibly followed by `.promises`
            if i >= 2 && self.is_punct(i - 1, "=") && self.is_ident(i - 2) {
                let name = self.lex(i - 2).to_string();
                match module.as_str() {
                    "fs" => self.fs_objs.push(name),
                    "path" => self.path_objs.push(name),
                    _ => {}
                }
            }
            // destructured binder: `{ a, b } = require('m')`
            if i >= 2 && self.is_punct(i - 1, "=") && self.is_punct(i - 2, "}") {
                let mut j = i - 2;
                let mut names = Vec::new();
                while j > 0 && !self.is_punct(j, "{") {
                    if self.is_ident(j) {
                        names.push(self.lex(j).to_string());
                    }
                    j -= 1;
                }
                for name in names {
                    if module == "fs" && READ_FNS.contains(&name.as_str()) {
                        self.bare_read_fns.push(name);
                    } else if module == "path" && JOIN_FNS.contains(&name.as_str()) {
                        self.bare_join_fns.push(name);
                    }
                }
            }
        }
    }

    fn new_node(&mut self, node: Node) -> usize {
        let id = self.nodes.len();
        let mut node = node;
        node.ancestors.push((id, 0));
        self.nodes.push(node);
        id
    }

    fn span_of(&self, range: (usize, usize)) -> LineSpan {
        let start = self.toks[range.0].line;
        let end = self.toks[range.1.saturating_sub(1).max(range.0)].line;
        LineSpan::new(start, end)
    }

    // -- main walk ----------------------------------------------------------

    fn walk(&mut self) {
        let mut i = 0;
        while i < self.toks.len() {
            self.check_sink(i);
            self.check_includes_site(i);
            if self.kind(i) == Some(TokenKind::Keyword) && self.lex(i) == "if" {
                self.process_if(i);
                // condition and body tokens are still walked normally
                i += 1;
                continue;
            }
            if self.is_bare_ident(i) && (self.is_punct(i + 1, "=") || self.is_punct(i + 1, "+=")) {
                let name = self.lex(i).to_string();
                let aug = self.lex(i + 1) == "+=";
                let rhs = self.rhs_extent(i + 2);
                if rhs.1 > rhs.0 {
                    self.process_assignment(&name, aug, rhs);
                }
                i += 2;
                continue;
            }
            i += 1;
        }
    }

    /// RHS extent: from `start` until a top-level `,`, `;`, a closing
    /// bracket that leaves the expression, or a function body `{`.
    fn rhs_extent(&self, start: usize) -> (usize, usize) {
        let mut depth: i32 = 0;
        let mut i = start;
        while i < self.toks.len() {
            let t = &self.toks[i];
            if t.kind == TokenKind::Punct {
                match t.lexeme.as_str() {
                    "(" | "[" => depth += 1,
                    "{" => {
                        if depth == 0
                            && (self.is_punct(i.wrapping_sub(1), "=>")
                                || self.is_punct(i.wrapping_sub(1), ")"))
                        {
                            // function body begins: let the main walk descend
                            return (start, i);
                        }
                        depth += 1;
                    }
                    ")" | "]" | "}" if depth == 0 => return (start, i),
                    ")" | "]" | "}" => depth -= 1,
                    "," | ";" if depth == 0 => return (start, i),
                    _ => {}
                }
            }
            i += 1;
        }
        (start, i)
    }

    fn process_assignment(&mut self, name: &str, aug: bool, rhs: (usize, usize)) {
        if aug {
            // `x += expr`: appending onto an existing value. Appending a
            // constant keeps prior guards; appending taint makes a concat.
            let rhs_node = self.classify(rhs);
            let rhs_tainted = rhs_node.is_some_and(|n| self.nodes[n].tainted);
            if let Some(&cur) = self.env.get(name) {
                if rhs_tainted && !self.nodes[cur].tainted {
                    let span = self.span_of(rhs);
                    let mut ancestors = self.nodes[rhs_node.unwrap()].ancestors.clone();
                    ancestors.retain(|(a, _)| *a != self.nodes.len());
                    let source_span = self.nodes[rhs_node.unwrap()].source_span;
                    let id = self.new_node(Node {
                        tainted: true,
                        joined: Some(JoinKind::Concat),
                        ancestors,
                        source_span,
                        join_span: Some(span),
                    });
                    self.env.insert(name.to_string(), id);
                }
            } else if rhs_tainted {
                self.env.insert(name.to_string(), rhs_node.unwrap());
            }
            return;
        }
        match self.classify(rhs) {
            Some(node) => {
                self.env.insert(name.to_string(), node);
            }
            None => {
                // a pure-literal rewrite of a tainted variable happens on
                // some branch (`if (p === '/') p = '/index.html';`); other
                // paths still carry user input, so the taint stays
                let literal_only = !(rhs.0..rhs.1).any(|i| self.is_ident(i));
                let currently_tainted = self.env.get(name).is_some_and(|&n| self.nodes[n].tainted);
                if !(literal_only && currently_tainted) {
                    self.env.remove(name);
                }
            }
        }
    }

    /// Classify an expression slice into a value node. Returns None for
    /// untainted values.
    fn classify(&mut self, rhs: (usize, usize)) -> Option<usize> {
        let (start, end) = rhs;
        if start >= end {
            return None;
        }
        // single identifier: direct rename keeps everything
        if end - start == 1 && self.is_ident(start) {
            return self.env.get(self.lex(start)).copied();
        }
        // decode pass-through: `decodeURIComponent(expr)`
        if self.is_bare_ident(start)
            && DECODE_FNS.contains(&self.lex(start))
            && self.is_punct(start + 1, "(")
            && self.matching_paren(start + 1) == Some(end - 1)
        {
            let inner = self.classify((start + 2, end - 1))?;
            if !self.nodes[inner].tainted {
                return None;
            }
            let ancestors = self.nodes[inner]
                .ancestors
                .iter()
                .map(|&(a, d)| (a, d + 1))
                .collect();
            let source_span = self.nodes[inner].source_span;
            return Some(self.new_node(Node {
                tainted: true,
                joined: None,
                ancestors,
                source_span,
                join_span: None,
            }));
        }
        // path join / resolve / normalize over a tainted argument
        if let Some(node) = self.classify_join_call(rhs) {
            return Some(node);
        }
        // ternary selection: taint and guards flow through either branch
        if let Some((q, c)) = self.ternary_split(rhs) {
            let left = self.classify((q + 1, c));
            let right = self.classify((c + 1, end));
            let merged = self.merge_branches(left, right);
            if merged.is_some() {
                return merged;
            }
        }
        // string concatenation with a tainted operand
        if self.has_top_level_plus(rhs) || self.has_tainted_template(rhs) {
            if let Some((anc, source_span)) = self.tainted_parts(rhs) {
                let span = self.span_of(rhs);
                return Some(self.new_node(Node {
                    tainted: true,
                    joined: Some(JoinKind::Concat),
                    ancestors: anc,
                    source_span,
                    join_span: Some(span),
                }));
            }
            return None;
        }
        // fresh source: any expression touching the request URL
        if self.contains_request_url(rhs) {
            let span = self.span_of(rhs);
            return Some(self.new_node(Node {
                tainted: true,
                joined: None,
                ancestors: Vec::new(),
                source_span: Some(span),
                join_span: None,
            }));
        }
        // arbitrary transform of a tainted value: taint survives, the guard
        // chain does not
        if let Some((_, source_span)) = self.tainted_parts(rhs) {
            return Some(self.new_node(Node {
                tainted: true,
                joined: None,
                ancestors: Vec::new(),
                source_span,
                join_span: None,
            }));
        }
        None
    }

    /// Find a `path.join(...)`-shaped call in the slice and build a joined
    /// node if any argument carries taint.
    fn classify_join_call(&mut self, rhs: (usize, usize)) -> Option<usize> {
        let (start, end) = rhs;
        let mut i = start;
        while i < end {
            let open = if self.is_ident(i)
                && self.path_objs.contains(&self.lex(i).to_string())
                && self.is_punct(i + 1, ".")
                && JOIN_FNS.contains(&self.lex(i + 2))
                && self.is_punct(i + 3, "(")
            {
                Some(i + 3)
            } else if self.is_bare_ident(i)
                && self.bare_join_fns.contains(&self.lex(i).to_string())
                && self.is_punct(i + 1, "(")
            {
                Some(i + 1)
            } else {
                None
            };
            if let Some(open) = open {
                let close = self.matching_paren(open)?;
                let args = self.split_args(open + 1, close);
                let mut ancestors: Vec<(usize, u32)> = Vec::new();
                let mut source_span = None;
                for arg in &args {
                    if let Some(node) = self.classify(*arg) {
                        if self.nodes[node].tainted {
                            for &pair in &self.nodes[node].ancestors {
                                if !ancestors.contains(&pair) {
                                    ancestors.push(pair);
                                }
                            }
                            if source_span.is_none() {
                                source_span = self.nodes[node].source_span;
                            }
                        }
                    }
                }
                if !ancestors.is_empty() {
                    let span = self.span_of(rhs);
                    return Some(self.new_node(Node {
                        tainted: true,
                        joined: Some(JoinKind::Normalized),
                        ancestors,
                        source_span,
                        join_span: Some(span),
                    }));
                }
                i = close + 1;
                continue;
            }
            i += 1;
        }
        None
    }

    /// Positions of the top-level `?` and its matching `:`.
    fn ternary_split(&self, rhs: (usize, usize)) -> Option<(usize, usize)> {
        let mut depth = 0i32;
        let mut q_pos = None;
        let mut nesting = 0u32;
        for i in rhs.0..rhs.1 {
            if self.toks[i].kind != TokenKind::Punct {
                continue;
            }
            match self.toks[i].lexeme.as_str() {
                "(" | "[" | "{" => depth += 1,
                ")" | "]" | "}" => depth -= 1,
                "?" if depth == 0 => {
                    if q_pos.is_none() {
                        q_pos = Some(i);
                    }
                    nesting += 1;
                }
                ":" if depth == 0 && nesting > 0 => {
                    nesting -= 1;
                    if nesting == 0 {
                        return Some((q_pos.unwrap(), i));
                    }
                }
                _ => {}
            }
        }
        None
    }

    fn merge_branches(&mut self, a: Option<usize>, b: Option<usize>) -> Option<usize> {
        let tainted: Vec<usize> = [a, b]
            .into_iter()
            .flatten()
            .filter(|&n| self.nodes[n].tainted)
            .collect();
        if tainted.is_empty() {
            return None;
        }
        let mut ancestors: Vec<(usize, u32)> = Vec::new();
        let mut joined = None;
        let mut source_span = None;
        let mut join_span = None;
        for &n in &tainted {
            for &pair in &self.nodes[n].ancestors {
                if !ancestors.contains(&pair) {
                    ancestors.push(pair);
                }
            }
            joined = joined.or(self.nodes[n].joined);
            source_span = source_span.or(self.nodes[n].source_span);
            join_span = join_span.or(self.nodes[n].join_span);
        }
        Some(self.new_node(Node {
            tainted: true,
            joined,
            ancestors,
            source_span,
            join_span,
        }))
    }

    fn matching_paren(&self, open: usize) -> Option<usize> {
        let mut depth = 0i32;
        for i in open..self.toks.len() {
            if self.toks[i].kind == TokenKind::Punct {
                match self.toks[i].lexeme.as_str() {
                    "(" => depth += 1,
                    ")" => {
                        depth -= 1;
                        if depth == 0 {
                            return Some(i);
                        }
                    }
                    _ => {}
                }
            }
        }
        None
    }

    fn split_args(&self, start: usize, end: usize) -> Vec<(usize, usize)> {
        let mut args = Vec::new();
        let mut depth = 0i32;
        let mut arg_start = start;
        for i in start..end {
            if self.toks[i].kind == TokenKind::Punct {
                match self.toks[i].lexeme.as_str() {
                    "(" | "[" | "{" => depth += 1,
                    ")" | "]" | "}" => depth -= 1,
                    "," if depth == 0 => {
                        args.push((arg_start, i));
                        arg_start = i + 1;
                    }
                    _ => {}
                }
            }
        }
        if arg_start < end {
            args.push((arg_start, end));
        }
        args
    }

    fn has_top_level_plus(&self, rhs: (usize, usize)) -> bool {
        let mut depth = 0i32;
        for i in rhs.0..rhs.1 {
            if self.toks[i].kind == TokenKind::Punct {
                match self.toks[i].lexeme.as_str() {
                    "(" | "[" | "{" => depth += 1,
                    ")" | "]" | "}" => depth -= 1,
                    "+" if depth == 0 => return true,
                    _ => {}
                }
            }
        }
        false
    }

    fn has_tainted_template(&self, rhs: (usize, usize)) -> bool {
        (rhs.0..rhs.1).any(|i| {
            self.toks[i].in_template
                && self.is_bare_ident(i)
                && self
                    .env
                    .get(self.lex(i))
                    .is_some_and(|&n| self.nodes[n].tainted)
        })
    }

    /// Tainted identifiers and request-URL uses inside a slice: merged
    /// ancestor set plus the originating source span.
    fn tainted_parts(&mut self, rhs: (usize, usize)) -> Option<TaintedParts> {
        let mut ancestors: Vec<(usize, u32)> = Vec::new();
        let mut source_span = None;
        for i in rhs.0..rhs.1 {
            if self.is_bare_ident(i) {
                if let Some(&n) = self.env.get(self.lex(i)) {
                    if self.nodes[n].tainted {
                        for &pair in &self.nodes[n].ancestors {
                            if !ancestors.contains(&pair) {
                                ancestors.push(pair);
                            }
                        }
                        if source_span.is_none() {
                            source_span = self.nodes[n].source_span;
                        }
                    }
                }
            }
        }
        if self.contains_request_url(rhs) && source_span.is_none() {
            source_span = Some(self.span_of(rhs));
        } else if ancestors.is_empty() && !self.contains_request_url(rhs) {
            return None;
        }
        Some((ancestors, source_span)).filter(|(a, s)| !a.is_empty() || s.is_some())
    }

    fn contains_request_url(&self, rhs: (usize, usize)) -> bool {
        (rhs.0..rhs.1).any(|i| {
            self.is_bare_ident(i)
                && self.req_vars.contains(&self.lex(i).to_string())
                && self.is_punct(i + 1, ".")
                && self.lex(i + 2) == "url"
        })
    }

    // -- sinks ---------------------------------------------------------------

    fn check_sink(&mut self, i: usize) {
        let args_start = if self.is_bare_ident(i)
            && self.fs_objs.contains(&self.lex(i).to_string())
            && self.is_punct(i + 1, ".")
        {
            if READ_FNS.contains(&self.lex(i + 2)) && self.is_punct(i + 3, "(") {
                Some(i + 4)
            } else if self.lex(i + 2) == "promises"
                && self.is_punct(i + 3, ".")
                && READ_FNS.contains(&self.lex(i + 4))
                && self.is_punct(i + 5, "(")
            {
                Some(i + 6)
            } else {
                None
            }
        } else if self.is_bare_ident(i)
            && self.bare_read_fns.contains(&self.lex(i).to_string())
            && self.is_punct(i + 1, "(")
        {
            Some(i + 2)
        } else {
            None
        };
        let Some(args_start) = args_start else { return };
        let Some(close) = self.matching_paren(args_start - 1) else {
            return;
        };
        let args = self.split_args(args_start, close);
        let Some(&first) = args.first() else { return };
        if let Some(node) = self.classify(first) {
            if self.nodes[node].tainted && self.nodes[node].joined.is_some() {
                let span = LineSpan::new(self.toks[i].line, self.span_of(first).end);
                self.sinks.push(SinkHit { pos: i, node, span });
            }
        }
    }

    fn check_includes_site(&mut self, i: usize) {
        if self.is_bare_ident(i)
            && self.is_punct(i + 1, ".")
            && self.lex(i + 2) == "includes"
            && self.is_punct(i + 3, "(")
            && self.kind(i + 4) == Some(TokenKind::Str)
            && self.lex(i + 4) == ".."
            && self.is_punct(i + 5, ")")
        {
            if let Some(&n) = self.env.get(self.lex(i)) {
                if self.nodes[n].tainted {
                    self.includes_sites += 1;
                }
            }
        }
    }

    // -- guards ---------------------------------------------------------------

    fn process_if(&mut self, i: usize) {
        if !self.is_punct(i + 1, "(") {
            return;
        }
        let Some(cond_end) = self.matching_paren(i + 1) else {
            return;
        };
        let cond = (i + 2, cond_end);
        let (body_end, denies) = self.body_after(cond_end + 1);
        if !denies {
            return;
        }
        self.match_dotdot_guards(cond, body_end);
        self.match_normalize_compare(cond, body_end);
        self.match_root_prefix(cond, body_end);
        self.match_allowlist(cond, body_end);
    }

    /// Returns (end position of the if body, whether it bails out early).
    fn body_after(&self, start: usize) -> (usize, bool) {
        if self.is_punct(start, "{") {
            let mut depth = 0i32;
            for i in start..self.toks.len() {
                if self.toks[i].kind == TokenKind::Punct {
                    match self.toks[i].lexeme.as_str() {
                        "{" => depth += 1,
                        "}" => {
                            depth -= 1;
                            if depth == 0 {
                                let denies = self.range_denies((start + 1, i));
                                return (i, denies);
                            }
                        }
                        _ => {}
                    }
                }
            }
            (self.toks.len(), false)
        } else {
            // single statement form
            let mut i = start;
            while i < self.toks.len() && !self.is_punct(i, ";") {
                i += 1;
            }
            (i, self.range_denies((start, i)))
        }
    }

    fn range_denies(&self, range: (usize, usize)) -> bool {
        (range.0..range.1).any(|i| {
            self.kind(i) == Some(TokenKind::Keyword) && matches!(self.lex(i), "return" | "throw")
        })
    }

    fn guard_node(
        &mut self,
        name: &str,
        kind: SanitizerKind,
        pos: usize,
        joined_constraint: impl Fn(Option<JoinKind>) -> bool,
    ) {
        if let Some(&n) = self.env.get(name) {
            if self.nodes[n].tainted && joined_constraint(self.nodes[n].joined) {
                self.guards.entry(n).or_default().push(Guard { kind, pos });
            }
        }
    }

    fn match_dotdot_guards(&mut self, cond: (usize, usize), pos: usize) {
        for i in cond.0..cond.1 {
            if !(self.is_bare_ident(i) && self.is_punct(i + 1, ".")) {
                continue;
            }
            let method = self.lex(i + 2);
            let is_dotdot_arg = self.is_punct(i + 3, "(")
                && self.kind(i + 4) == Some(TokenKind::Str)
                && self.lex(i + 4) == ".."
                && self.is_punct(i + 5, ")");
            if !is_dotdot_arg {
                continue;
            }
            let matched = match method {
                // `if (p.includes('..'))` — truthy use, not negated
                "includes" => !(i > cond.0 && self.is_punct(i - 1, "!")),
                // indexOf needs a found-it comparison
                "indexOf" => {
                    let j = i + 6;
                    (matches!(self.lex(j), "!==" | "!=")
                        && self.is_punct(j + 1, "-")
                        && self.lex(j + 2) == "1")
                        || (self.lex(j) == ">=" && self.lex(j + 1) == "0")
                        || (self.lex(j) == ">"
                            && self.is_punct(j + 1, "-")
                            && self.lex(j + 2) == "1")
                }
                _ => false,
            };
            if matched {
                let name = self.lex(i).to_string();
                // useless on a normalized join result: dots are already gone
                self.guard_node(&name, SanitizerKind::DotdotContainmentCheck, pos, |j| {
                    j != Some(JoinKind::Normalized)
                });
            }
        }
    }

    fn match_normalize_compare(&mut self, cond: (usize, usize), pos: usize) {
        for i in cond.0..cond.1 {
            let is_norm_call = self.is_ident(i)
                && self.path_objs.contains(&self.lex(i).to_string())
                && self.is_punct(i + 1, ".")
                && self.lex(i + 2) == "normalize"
                && self.is_punct(i + 3, "(")
                && self.is_ident(i + 4)
                && self.is_punct(i + 5, ")");
            if !is_norm_call {
                continue;
            }
            let var = self.lex(i + 4).to_string();
            // `path.normalize(p) !== p` or `p !== path.normalize(p)`
            let after = matches!(self.lex(i + 6), "!==" | "!=") && self.lex(i + 7) == var;
            let before =
                i >= 2 && matches!(self.lex(i - 1), "!==" | "!=") && self.lex(i - 2) == var;
            if after || before {
                self.guard_node(&var, SanitizerKind::NormalizeAndCompare, pos, |j| {
                    j != Some(JoinKind::Normalized)
                });
            }
        }
    }

    fn match_root_prefix(&mut self, cond: (usize, usize), pos: usize) {
        for i in cond.0..cond.1 {
            if !(self.is_bare_ident(i) && self.is_punct(i + 1, ".")) {
                continue;
            }
            let name = self.lex(i).to_string();
            let matched = match self.lex(i + 2) {
                // `if (!resolved.startsWith(root))`
                "startsWith" => {
                    self.is_punct(i + 3, "(") && i > cond.0 && self.is_punct(i - 1, "!")
                }
                // `if (resolved.indexOf(root) !== 0)`
                "indexOf" => {
                    if !self.is_punct(i + 3, "(") || self.kind(i + 4) == Some(TokenKind::Str) {
                        false
                    } else if let Some(close) = self.matching_paren(i + 3) {
                        matches!(self.lex(close + 1), "!==" | "!=") && self.lex(close + 2) == "0"
                    } else {
                        false
                    }
                }
                _ => false,
            };
            if matched {
                // only meaningful on a resolved (normalized) path
                self.guard_node(&name, SanitizerKind::RootPrefixCheck, pos, |j| {
                    j == Some(JoinKind::Normalized)
                });
            }
        }
    }

    fn match_allowlist(&mut self, cond: (usize, usize), pos: usize) {
        for i in cond.0..cond.1 {
            if !(self.is_bare_ident(i) && self.is_punct(i + 1, ".")) {
                continue;
            }
            let receiver = self.lex(i).to_string();
            let receiver_tainted = self
                .env
                .get(&receiver)
                .is_some_and(|&n| self.nodes[n].tainted);
            if receiver_tainted {
                continue;
            }
            let method = self.lex(i + 2);
            if !self.is_punct(i + 3, "(") || !self.is_ident(i + 4) || !self.is_punct(i + 5, ")") {
                continue;
            }
            let arg = self.lex(i + 4).to_string();
            let matched = match method {
                // `if (!allowed.includes(p))` / `if (!allowed.has(p))`
                "includes" | "has" => i > cond.0 && self.is_punct(i - 1, "!"),
                // `if (allowed.indexOf(p) === -1)` / `< 0`
                "indexOf" => {
                    let j = i + 6;
                    (matches!(self.lex(j), "===" | "==")
                        && self.is_punct(j + 1, "-")
                        && self.lex(j + 2) == "1")
                        || (self.lex(j) == "<" && self.lex(j + 1) == "0")
                }
                _ => false,
            };
            if matched {
                self.guard_node(&arg, SanitizerKind::AllowlistLookup, pos, |_| true);
            }
        }
    }

    // -- verdict ---------------------------------------------------------------

    fn effective_guards(&self, sink: &SinkHit) -> Vec<SanitizerKind> {
        let mut kinds = Vec::new();
        for &(anc, decodes) in &self.nodes[sink.node].ancestors {
            if decodes != 0 {
                continue;
            }
            if let Some(guards) = self.guards.get(&anc) {
                for g in guards {
                    if g.pos < sink.pos && !kinds.contains(&g.kind) {
                        kinds.push(g.kind);
                    }
                }
            }
        }
        kinds.sort();
        kinds
    }

    fn assemble_finding(&self) -> Option<TaintFinding> {
        if self.sinks.is_empty() {
            return None;
        }
        let build = |sink: &SinkHit, kinds: Vec<SanitizerKind>, verdict: Verdict| {
            let node = &self.nodes[sink.node];
            TaintFinding {
                source_span: node.source_span.unwrap_or(sink.span),
                join_span: node.join_span.unwrap_or(sink.span),
                sink_span: sink.span,
                sanitizers_seen: kinds,
                verdict,
            }
        };
        for sink in &self.sinks {
            let kinds = self.effective_guards(sink);
            if kinds.is_empty() {
                return Some(build(sink, kinds, Verdict::Vulnerable));
            }
        }
        let sink = &self.sinks[0];
        let kinds = self.effective_guards(sink);
        Some(build(sink, kinds, Verdict::Safe))
    }
}

/// Locate HTTP server handlers and their (request, response) parameters.
fn find_handlers(toks: &[Token]) -> Vec<(String, String)> {
    let lex = |i: usize| toks.get(i).map_or("", |t| t.lexeme.as_str());
    let kindof = |i: usize| toks.get(i).map(|t| t.kind);
    let is_punct = |i: usize, p: &str| {
        toks.get(i)
            .is_some_and(|t| t.kind == TokenKind::Punct && t.lexeme == p)
    };
    let params_at = |mut j: usize| -> Option<(String, String)> {
        // j points at `(`
        if !is_punct(j, "(") {
            return None;
        }
        j += 1;
        let mut params = Vec::new();
        while j < toks.len() && !is_punct(j, ")") {
            if kindof(j) == Some(TokenKind::Identifier) {
                params.push(lex(j).to_string());
            }
            j += 1;
        }
        if params.len() >= 2 {
            Some((params[0].clone(), params[1].clone()))
        } else {
            None
        }
    };
    let skip_balanced = |mut j: usize| -> usize {
        // skip a balanced {...} starting at j
        let mut depth = 0i32;
        while j < toks.len() {
            if is_punct(j, "{") {
                depth += 1;
            } else if is_punct(j, "}") {
                depth -= 1;
                if depth == 0 {
                    return j + 1;
                }
            }
            j += 1;
        }
        j
    };

    let mut handlers = Vec::new();
    for i in 0..toks.len() {
        if lex(i) != "createServer" || !is_punct(i + 1, "(") {
            continue;
        }
        let mut j = i + 2;
        // optional options-object first argument
        if is_punct(j, "{") {
            j = skip_balanced(j);
            if is_punct(j, ",") {
                j += 1;
            }
        }
        let pair = if lex(j) == "function" {
            let mut k = j + 1;
            if kindof(k) == Some(TokenKind::Identifier) {
                k += 1;
            }
            params_at(k)
        } else if is_punct(j, "(") {
            // arrow: `(req, res) =>`
            params_at(j)
        } else if kindof(j) == Some(TokenKind::Identifier) && is_punct(j + 1, ")") {
            // named handler passed by reference; find its declaration
            let name = lex(j);
            let mut found = None;
            for k in 0..toks.len() {
                if lex(k) == "function" && lex(k + 1) == name && is_punct(k + 2, "(") {
                    found = params_at(k + 2);
                    break;
                }
                if lex(k) == name && is_punct(k + 1, "=") && is_punct(k + 2, "(") {
                    if let Some(p) = params_at(k + 2) {
                        found = Some(p);
                        break;
                    }
                }
            }
            found
        } else {
            None
        };
        if let Some(pair) = pair {
            handlers.push(pair);
        }
    }
    handlers
}

#[cfg(test)]
mod tests {
    use super::*;

    // Trimmed-down version of the classic vulnerable snippet: pathname from
    // the legacy url parser, joined onto the working directory, read back.
    const CLASSIC: &str = r#"
var http = require("http"),
    url = require("url"),
    path = require("path"),
    fs = require("fs");

http.createServer(function(request, response) {
  var uri = url.parse(request.url).pathname
    , filename = path.join(process.cwd(), uri);
  fs.readFile(filename, "binary", function(err, file) {
    if (err) {
      response.writeHead(404, {"Content-Type": "text/plain"});
      response.end("404 Not Found\n");
      return;
    }
    response.writeHead(200);
    response.write(file, "binary");
    response.end();
  });
}).listen(8888);
"#;

    fn with_guard(extra: &str) -> String {
        CLASSIC.replace(
            "  fs.readFile(filename,",
            &format!("  {extra}\n  fs.readFile(filename,"),
        )
    }

    #[test]
    fn classic_snippet_is_vulnerable() {
        let finding = detect_traversal(CLASSIC).expect("finding");
        assert_eq!(finding.verdict, Verdict::Vulnerable);
        assert!(finding.sanitizers_seen.is_empty());
        assert!(finding.source_span.start >= 8);
        assert!(finding.sink_span.start >= finding.join_span.start);
    }

    #[test]
    fn dotdot_guard_makes_it_safe() {
        let src = with_guard(
            "if (uri.includes('..')) { response.writeHead(403); response.end(); return; }",
        );
        let finding = detect_traversal(&src).expect("finding");
        assert_eq!(finding.verdict, Verdict::Safe);
        assert_eq!(
            finding.sanitizers_seen,
            vec![SanitizerKind::DotdotContainmentCheck]
        );
    }

    #[test]
    fn keywords_in_comments_are_not_a_finding() {
        let src = r#"
// http.createServer fs.readFile path.join url.parse pathname
/* fs.readFile(path.join(base, url.parse(req.url).pathname)) */
console.log("nothing here");
"#;
        assert!(detect_traversal(src).is_none());
    }

    #[test]
    fn guard_after_join_still_counts() {
        // the deny return protects the later read even though the joined
        // variable was computed first
        let src = with_guard(
            "if (uri.indexOf('..') !== -1) { response.writeHead(403); return response.end(); }",
        );
        let finding = detect_traversal(&src).expect("finding");
        assert_eq!(finding.verdict, Verdict::Safe);
    }

    #[test]
    fn guard_without_deny_is_ignored() {
        let src = with_guard("if (uri.includes('..')) { console.log('suspicious'); }");
        let finding = detect_traversal(&src).expect("finding");
        assert_eq!(finding.verdict, Verdict::Vulnerable);
    }

    #[test]
    fn decode_after_guard_breaks_the_guard() {
        let src = r#"
var http = require("http"), url = require("url"), path = require("path"), fs = require("fs");
http.createServer(function(req, res) {
  var pathname = url.parse(req.url).pathname;
  if (pathname.includes('..')) { res.writeHead(403); res.end(); return; }
  var decoded = decodeURIComponent(pathname);
  var filePath = path.join(__dirname, decoded);
  fs.readFile(filePath, function(err, data) { res.end(data); });
}).listen(8080);
"#;
        let finding = detect_traversal(src).expect("finding");
        assert_eq!(finding.verdict, Verdict::Vulnerable);
        assert!(finding.sanitizers_seen.is_empty());
    }

    #[test]
    fn guard_on_decoded_value_is_safe() {
        let src = r#"
var http = require("http"), url = require("url"), path = require("path"), fs = require("fs");
http.createServer(function(req, res) {
  var pathname = url.parse(req.url).pathname;
  var decoded = decodeURIComponent(pathname);
  if (decoded.includes('..')) { res.writeHead(403); res.end(); return; }
  var filePath = path.join(__dirname, decoded);
  fs.readFile(filePath, function(err, data) { res.end(data); });
}).listen(8080);
"#;
        let finding = detect_traversal(src).expect("finding");
        assert_eq!(finding.verdict, Verdict::Safe);
    }

    #[test]
    fn raw_prefix_route_check_is_not_a_sanitizer() {
        // startsWith on the raw pathname only restricts the entry prefix;
        // `/images/../../` still escapes
        let src = r#"
var http = require("http"), url = require("url"), path = require("path"), fs = require("fs");
http.createServer(function(req, res) {
  var pathname = url.parse(req.url).pathname;
  if (!pathname.startsWith('/images/')) { res.writeHead(404); res.end(); return; }
  var filePath = path.join(process.cwd(), pathname);
  fs.readFile(filePath, function(err, data) { res.end(data); });
}).listen(8080);
"#;
        let finding = detect_traversal(src).expect("finding");
        assert_eq!(finding.verdict, Verdict::Vulnerable);
    }

    #[test]
    fn resolved_prefix_check_is_safe() {
        let src = r#"
var http = require("http"), url = require("url"), path = require("path"), fs = require("fs");
var root = process.cwd();
http.createServer(function(req, res) {
  var pathname = url.parse(req.url).pathname;
  var full = path.join(root, pathname);
  if (!full.startsWith(root)) { res.writeHead(403); res.end(); return; }
  fs.readFile(full, function(err, data) { res.end(data); });
}).listen(8080);
"#;
        let finding = detect_traversal(src).expect("finding");
        assert_eq!(finding.verdict, Verdict::Safe);
        assert_eq!(
            finding.sanitizers_seen,
            vec![SanitizerKind::RootPrefixCheck]
        );
    }

    #[test]
    fn concat_instead_of_join_is_detected() {
        let src = r#"
var http = require("http"), url = require("url"), fs = require("fs");
http.createServer(function(req, res) {
  var uri = url.parse(req.url).pathname;
  var file = "./static" + uri;
  fs.readFile(file, function(err, data) { res.end(data); });
}).listen(8080);
"#;
        let finding = detect_traversal(src).expect("finding");
        assert_eq!(finding.verdict, Verdict::Vulnerable);
    }

    #[test]
    fn count_sanitizer_calls_differencing() {
        assert_eq!(count_sanitizer_calls(CLASSIC), 0);
        let patched = with_guard(
            "if (uri.includes('..')) { response.writeHead(403); response.end(); return; }",
        );
        assert_eq!(count_sanitizer_calls(&patched), 1);
    }

    #[test]
    fn unrelated_includes_check_not_counted() {
        let src = r#"
var http = require("http"), url = require("url"), path = require("path"), fs = require("fs");
var banner = "welcome";
http.createServer(function(req, res) {
  if (banner.includes('..')) { res.end(); return; }
  var uri = url.parse(req.url).pathname;
  var filename = path.join(process.cwd(), uri);
  fs.readFile(filename, function(err, data) { res.end(data); });
}).listen(8080);
"#;
        assert_eq!(count_sanitizer_calls(src), 0);
        // and a check on an untainted variable does not protect the sink
        assert_eq!(detect_traversal(src).unwrap().verdict, Verdict::Vulnerable);
    }

    #[test]
    fn handler_params_extraction() {
        assert_eq!(
            handler_params(CLASSIC),
            Some(("request".into(), "response".into()))
        );
        let arrow = "const http = require('http');\nhttp.createServer((rq, rs) => { rs.end('x'); }).listen(1);";
        assert_eq!(handler_params(arrow), Some(("rq".into(), "rs".into())));
        let named = r#"
var http = require("http");
http.createServer(serve).listen(1);
function serve(q, s) { s.end("x"); }
"#;
        assert_eq!(handler_params(named), Some(("q".into(), "s".into())));
    }

    #[test]
    fn detection_is_deterministic() {
        assert_eq!(detect_traversal(CLASSIC), detect_traversal(CLASSIC));
    }
}
