//! Recursive-descent parser and canonical printer for the YANG subset.

use super::lexer::{lex, Lexed, Tok};
use super::{LeafType, Node, YangError, YangModule};

/// Statement keywords that are real YANG but outside the supported subset.
/// They fail loudly instead of being skipped so a schema author notices.
const UNSUPPORTED: &[&str] = &[
    "rpc",
    "notification",
    "grouping",
    "augment",
    "when",
    "must",
    "uses",
    "import",
    "include",
    "typedef",
    "list",
    "leaf-list",
    "choice",
    "case",
    "identity",
    "extension",
    "feature",
    "deviation",
    "submodule",
    "anyxml",
    "description",
    "revision",
    "prefix",
];

struct Parser {
    toks: Vec<Lexed>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Lexed> {
        self.toks.get(self.pos)
    }

    fn next(&mut self) -> Option<Lexed> {
        let t = self.toks.get(self.pos).cloned();
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn err_here(&self, expected: &str) -> YangError {
        match self.peek() {
            Some(t) => YangError::SyntaxError {
                line: t.line,
                col: t.col,
                expected: format!("{expected}, found {}", t.tok.describe()),
            },
            None => {
                let (line, col) = self
                    .toks
                    .last()
                    .map(|t| (t.line, t.col))
                    .unwrap_or((1, 1));
                YangError::SyntaxError {
                    line,
                    col,
                    expected: format!("{expected}, found end of input"),
                }
            }
        }
    }

    fn expect_ident(&mut self, expected: &str) -> Result<(String, usize, usize), YangError> {
        match self.peek() {
            Some(Lexed { tok: Tok::Ident(_), .. }) => {
                let t = self.next().unwrap();
                if let Tok::Ident(s) = t.tok {
                    Ok((s, t.line, t.col))
                } else {
                    unreachable!()
                }
            }
            _ => Err(self.err_here(expected)),
        }
    }

    fn expect_keyword(&mut self, kw: &str) -> Result<(), YangError> {
        match self.peek() {
            Some(Lexed { tok: Tok::Ident(s), .. }) if s == kw => {
                self.next();
                Ok(())
            }
            _ => Err(self.err_here(&format!("keyword `{kw}`"))),
        }
    }

    fn expect_tok(&mut self, want: Tok, expected: &str) -> Result<(), YangError> {
        match self.peek() {
            Some(t) if t.tok == want => {
                self.next();
                Ok(())
            }
            _ => Err(self.err_here(expected)),
        }
    }

    fn expect_string(&mut self, expected: &str) -> Result<String, YangError> {
        match self.peek() {
            Some(Lexed { tok: Tok::Str(_), .. }) => {
                let t = self.next().unwrap();
                if let Tok::Str(s) = t.tok {
                    Ok(s)
                } else {
                    unreachable!()
                }
            }
            _ => Err(self.err_here(expected)),
        }
    }

    fn parse_module(&mut self) -> Result<YangModule, YangError> {
        self.expect_keyword("module")?;
        let (name, _, _) = self.expect_ident("module name")?;
        self.expect_tok(Tok::LBrace, "`{`")?;
        self.expect_keyword("namespace")?;
        let namespace = self.expect_string("namespace URI string")?;
        self.expect_tok(Tok::Semi, "`;`")?;
        let body = self.parse_body()?;
        if body.is_empty() {
            return Err(self.err_here("at least one `container` or `leaf` statement"));
        }
        self.expect_tok(Tok::RBrace, "`}`")?;
        if let Some(t) = self.peek() {
            return Err(YangError::SyntaxError {
                line: t.line,
                col: t.col,
                expected: format!("end of input, found {}", t.tok.describe()),
            });
        }
        Ok(YangModule { name, namespace, body })
    }

    /// Parses container/leaf statements until the closing brace (not consumed).
    fn parse_body(&mut self) -> Result<Vec<Node>, YangError> {
        let mut nodes: Vec<Node> = Vec::new();
        loop {
            match self.peek() {
                Some(Lexed { tok: Tok::RBrace, .. }) | None => break,
                Some(Lexed { tok: Tok::Ident(kw), line, .. }) => {
                    let (kw, line) = (kw.clone(), *line);
                    if UNSUPPORTED.contains(&kw.as_str()) {
                        return Err(YangError::UnsupportedKeyword { keyword: kw, line });
                    }
                    let node = match kw.as_str() {
                        "container" => self.parse_container()?,
                        "leaf" => self.parse_leaf()?,
                        _ => return Err(self.err_here("`container` or `leaf`")),
                    };
                    let name = node.name();
                    if nodes.iter().any(|n| n.name() == name) {
                        return Err(YangError::DuplicateNode { name: name.to_string(), line });
                    }
                    nodes.push(node);
                }
                Some(_) => return Err(self.err_here("`container` or `leaf`")),
            }
        }
        Ok(nodes)
    }

    fn parse_container(&mut self) -> Result<Node, YangError> {
        self.expect_keyword("container")?;
        let (name, _, _) = self.expect_ident("container name")?;
        self.expect_tok(Tok::LBrace, "`{`")?;
        let children = self.parse_body()?;
        self.expect_tok(Tok::RBrace, "`}`")?;
        Ok(Node::Container { name, children })
    }

    fn parse_leaf(&mut self) -> Result<Node, YangError> {
        self.expect_keyword("leaf")?;
        let (name, _, _) = self.expect_ident("leaf name")?;
        self.expect_tok(Tok::LBrace, "`{`")?;
        self.expect_keyword("type")?;
        let (ty, line, col) = self.expect_ident("type name")?;
        let leaf_type = LeafType::parse(&ty).ok_or(YangError::SyntaxError {
            line,
            col,
            expected: format!("one of int/decimal/counter/gauge, found `{ty}`"),
        })?;
        self.expect_tok(Tok::Semi, "`;`")?;
        self.expect_tok(Tok::RBrace, "`}`")?;
        Ok(Node::Leaf { name, leaf_type })
    }
}

pub fn parse_module(text: &str) -> Result<YangModule, YangError> {
    let toks = lex(text)?;
    Parser { toks, pos: 0 }.parse_module()
}

/// Canonical text form: two-space indent, one statement per line.
/// `parse(print(m)) == m` for every parseable module.
pub fn print_module(module: &YangModule) -> String {
    let mut out = String::new();
    out.push_str(&format!("module {} {{\n", module.name));
    out.push_str(&format!("  namespace \"{}\";\n", module.namespace));
    for node in &module.body {
        print_node(node, 1, &mut out);
    }
    out.push_str("}\n");
    out
}

fn print_node(node: &Node, depth: usize, out: &mut String) {
    let pad = "  ".repeat(depth);
    match node {
        Node::Container { name, children } => {
            out.push_str(&format!("{pad}container {name} {{\n"));
            for c in children {
                print_node(c, depth + 1, out);
            }
            out.push_str(&format!("{pad}}}\n"));
        }
        Node::Leaf { name, leaf_type } => {
            out.push_str(&format!(
                "{pad}leaf {name} {{\n{pad}  type {};\n{pad}}}\n",
                leaf_type.canonical_name()
            ));
        }
    }
}
