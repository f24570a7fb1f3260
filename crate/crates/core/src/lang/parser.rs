//! Lexer, recursive-descent parser and type checker for `.wl` sources.

use thiserror::Error;

use super::ast::{BinOp, Decl, Expr, ExprKind, Program, Span, Stmt, StmtKind, UnOp, VarId};
use super::types::Ty;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ParseError {
    #[error("syntax error at {line}:{col}: expected {expected}, found {found}")]
    Syntax {
        line: usize,
        col: usize,
        expected: String,
        found: String,
    },
    #[error("type error at {line}:{col}: {msg}")]
    Type { line: usize, col: usize, msg: String },
}

impl ParseError {
    pub fn position(&self) -> (usize, usize) {
        match self {
            ParseError::Syntax { line, col, .. } | ParseError::Type { line, col, .. } => {
                (*line, *col)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
enum Tok {
    Ident(String),
    Int(i128),
    Punct(&'static str),
    Eof,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Int(n) => format!("`{n}`"),
            Tok::Punct(p) => format!("`{p}`"),
            Tok::Eof => "end of input".to_string(),
        }
    }
}

#[derive(Clone, Debug)]
struct Token {
    tok: Tok,
    span: Span,
}

const PUNCTS: [&str; 29] = [
    "<<", ">>", "<=", ">=", "==", "!=", "&&", "||", "+", "-", "*", "/", "%", "&", "|", "^", "~",
    "!", "<", ">", "=", "(", ")", "{", "}", "[", "]", ";", ",",
];

fn lex(src: &str) -> Result<Vec<Token>, ParseError> {
    let bytes = src.as_bytes();
    let mut toks = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);
    let advance = |i: &mut usize, line: &mut usize, col: &mut usize, n: usize| {
        for _ in 0..n {
            if bytes[*i] == b'\n' {
                *line += 1;
                *col = 1;
            } else {
                *col += 1;
            }
            *i += 1;
        }
    };
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_whitespace() {
            advance(&mut i, &mut line, &mut col, 1);
            continue;
        }
        if c == b'/' && bytes.get(i + 1) == Some(&b'/') {
            while i < bytes.len() && bytes[i] != b'\n' {
                advance(&mut i, &mut line, &mut col, 1);
            }
            continue;
        }
        let start = (i, line, col);
        let mk = |end: usize| Span {
            start: start.0,
            end,
            line: start.1,
            col: start.2,
        };
        if c.is_ascii_alphabetic() || c == b'_' {
            let mut j = i;
            while j < bytes.len() && (bytes[j].is_ascii_alphanumeric() || bytes[j] == b'_') {
                j += 1;
            }
            let word = src[i..j].to_string();
            advance(&mut i, &mut line, &mut col, j - start.0);
            toks.push(Token {
                tok: Tok::Ident(word),
                span: mk(j),
            });
            continue;
        }
        if c.is_ascii_digit() {
            let mut j = i;
            let (digits, radix) = if c == b'0' && matches!(bytes.get(i + 1), Some(b'x' | b'X')) {
                j += 2;
                let s = j;
                while j < bytes.len() && bytes[j].is_ascii_hexdigit() {
                    j += 1;
                }
                (&src[s..j], 16)
            } else {
                while j < bytes.len() && bytes[j].is_ascii_digit() {
                    j += 1;
                }
                (&src[i..j], 10)
            };
            let value = u64::from_str_radix(digits, radix).map_err(|_| ParseError::Syntax {
                line,
                col,
                expected: "integer literal fitting in 64 bits".into(),
                found: format!("`{}`", &src[i..j]),
            })?;
            advance(&mut i, &mut line, &mut col, j - start.0);
            toks.push(Token {
                tok: Tok::Int(value as i128),
                span: mk(j),
            });
            continue;
        }
        let Some(p) = PUNCTS.iter().find(|p| src[i..].starts_with(**p)) else {
            return Err(ParseError::Syntax {
                line,
                col,
                expected: "token".into(),
                found: format!("`{}`", src[i..].chars().next().unwrap_or(' ')),
            });
        };
        advance(&mut i, &mut line, &mut col, p.len());
        toks.push(Token {
            tok: Tok::Punct(p),
            span: mk(i),
        });
    }
    toks.push(Token {
        tok: Tok::Eof,
        span: Span {
            start: src.len(),
            end: src.len(),
            line,
            col,
        },
    });
    Ok(toks)
}

/// Untyped expression tree produced by the parser before name resolution.
#[derive(Clone, Debug)]
enum Raw {
    Int(i128),
    Bool(bool),
    Name(String),
    Index(String, Box<RawExpr>),
    Unary(UnOp, Box<RawExpr>),
    Binary(BinOp, Box<RawExpr>, Box<RawExpr>),
}

#[derive(Clone, Debug)]
struct RawExpr {
    raw: Raw,
    span: Span,
}

const KEYWORDS: [&str; 8] = ["if", "else", "while", "break", "skip", "nondet", "true", "false"];

struct Parser {
    toks: Vec<Token>,
    pos: usize,
    decls: Vec<Decl>,
    loop_depth: usize,
}

type PResult<T> = Result<T, ParseError>;

fn type_err(span: Span, msg: impl Into<String>) -> ParseError {
    ParseError::Type {
        line: span.line,
        col: span.col,
        msg: msg.into(),
    }
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn peek_at(&self, n: usize) -> &Tok {
        &self.toks[(self.pos + n).min(self.toks.len() - 1)].tok
    }

    fn span(&self) -> Span {
        self.toks[self.pos].span
    }

    fn prev_end(&self) -> usize {
        if self.pos == 0 {
            0
        } else {
            self.toks[self.pos - 1].span.end
        }
    }

    fn bump(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn error<T>(&self, expected: &str) -> PResult<T> {
        let t = &self.toks[self.pos];
        Err(ParseError::Syntax {
            line: t.span.line,
            col: t.span.col,
            expected: expected.to_string(),
            found: t.tok.describe(),
        })
    }

    fn eat(&mut self, p: &str) -> bool {
        if matches!(self.peek(), Tok::Punct(q) if *q == p) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, p: &'static str) -> PResult<()> {
        if self.eat(p) {
            Ok(())
        } else {
            self.error(&format!("`{p}`"))
        }
    }

    fn is_keyword(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == kw)
    }

    fn ident(&mut self) -> PResult<(String, Span)> {
        match self.peek().clone() {
            Tok::Ident(s) if !KEYWORDS.contains(&s.as_str()) && Ty::from_keyword(&s).is_none() => {
                let sp = self.bump().span;
                Ok((s, sp))
            }
            _ => self.error("identifier"),
        }
    }

    fn program(&mut self) -> PResult<Program> {
        while let Tok::Ident(s) = self.peek() {
            let Some(ty) = Ty::from_keyword(s) else { break };
            self.bump();
            let (name, span) = self.ident()?;
            if self.decls.iter().any(|d| d.name == name) {
                return Err(type_err(span, format!("`{name}` is declared twice")));
            }
            let len = if self.eat("[") {
                let n = match self.peek() {
                    Tok::Int(n) => *n,
                    _ => return self.error("array length"),
                };
                let sp = self.bump().span;
                if n < 1 || n > 1 << 20 {
                    return Err(type_err(sp, "array length must be between 1 and 2^20"));
                }
                self.expect("]")?;
                Some(n as usize)
            } else {
                None
            };
            self.expect(";")?;
            self.decls.push(Decl { name, ty, len });
        }
        let mut body = Vec::new();
        while *self.peek() != Tok::Eof {
            body.push(self.stmt()?);
        }
        Ok(Program {
            decls: std::mem::take(&mut self.decls),
            body,
        })
    }

    fn block(&mut self) -> PResult<Vec<Stmt>> {
        self.expect("{")?;
        let mut out = Vec::new();
        while !self.eat("}") {
            if *self.peek() == Tok::Eof {
                return self.error("`}`");
            }
            out.push(self.stmt()?);
        }
        Ok(out)
    }

    fn finish(&self, start: Span) -> Span {
        Span {
            end: self.prev_end(),
            ..start
        }
    }

    fn stmt(&mut self) -> PResult<Stmt> {
        let start = self.span();
        if self.is_keyword("if") {
            self.bump();
            self.expect("(")?;
            let c = self.expr()?;
            self.expect(")")?;
            let cond = self.condition(&c)?;
            let then = self.block()?;
            let els = if self.is_keyword("else") {
                self.bump();
                Some(self.block()?)
            } else {
                None
            };
            return Ok(Stmt {
                kind: StmtKind::If(cond, then, els),
                span: self.finish(start),
            });
        }
        if self.is_keyword("while") {
            self.bump();
            self.expect("(")?;
            let c = self.expr()?;
            self.expect(")")?;
            let cond = self.condition(&c)?;
            self.loop_depth += 1;
            let body = self.block()?;
            self.loop_depth -= 1;
            return Ok(Stmt {
                kind: StmtKind::While(cond, body),
                span: self.finish(start),
            });
        }
        if self.is_keyword("break") {
            self.bump();
            self.expect(";")?;
            if self.loop_depth == 0 {
                return Err(type_err(start, "`break` outside of a loop"));
            }
            return Ok(Stmt {
                kind: StmtKind::Break,
                span: self.finish(start),
            });
        }
        if self.is_keyword("skip") {
            self.bump();
            self.expect(";")?;
            return Ok(Stmt {
                kind: StmtKind::Skip,
                span: self.finish(start),
            });
        }
        if let Tok::Ident(s) = self.peek() {
            if Ty::from_keyword(s).is_some() {
                return Err(type_err(start, "declarations must precede statements"));
            }
        }
        let (name, name_span) = self.ident()?;
        let index = if self.eat("[") {
            let i = self.expr()?;
            self.expect("]")?;
            Some(i)
        } else {
            None
        };
        self.expect("=")?;
        if index.is_none()
            && self.is_keyword("nondet")
            && matches!(self.peek_at(1), Tok::Punct("("))
        {
            self.bump();
            self.expect("(")?;
            self.expect(")")?;
            self.expect(";")?;
            let v = self.scalar(&name, name_span)?;
            return Ok(Stmt {
                kind: StmtKind::Nondet(v),
                span: self.finish(start),
            });
        }
        let rhs = self.expr()?;
        self.expect(";")?;
        let kind = match index {
            None => {
                let v = self.scalar(&name, name_span)?;
                let e = self.assigned(self.decls[v.0].ty, &rhs)?;
                StmtKind::Assign(v, e)
            }
            Some(idx) => {
                let v = self.array(&name, name_span)?;
                let i = self.index_expr(&idx)?;
                let e = self.assigned(self.decls[v.0].ty, &rhs)?;
                StmtKind::Store(v, i, e)
            }
        };
        Ok(Stmt {
            kind,
            span: self.finish(start),
        })
    }

    // ---- expressions (C precedence) ----

    fn expr(&mut self) -> PResult<RawExpr> {
        self.binary(0)
    }

    fn binary(&mut self, level: usize) -> PResult<RawExpr> {
        const LEVELS: [&[(&str, BinOp)]; 10] = [
            &[("||", BinOp::Or)],
            &[("&&", BinOp::And)],
            &[("|", BinOp::BitOr)],
            &[("^", BinOp::BitXor)],
            &[("&", BinOp::BitAnd)],
            &[("==", BinOp::Eq), ("!=", BinOp::Ne)],
            &[
                ("<", BinOp::Lt),
                ("<=", BinOp::Le),
                (">", BinOp::Gt),
                (">=", BinOp::Ge),
            ],
            &[("<<", BinOp::Shl), (">>", BinOp::Shr)],
            &[("+", BinOp::Add), ("-", BinOp::Sub)],
            &[("*", BinOp::Mul), ("/", BinOp::Div), ("%", BinOp::Rem)],
        ];
        if level == LEVELS.len() {
            return self.unary();
        }
        let mut lhs = self.binary(level + 1)?;
        loop {
            let op = match self.peek() {
                Tok::Punct(p) => LEVELS[level].iter().find(|(s, _)| s == p).map(|(_, o)| *o),
                _ => None,
            };
            let Some(op) = op else { break };
            self.bump();
            let rhs = self.binary(level + 1)?;
            let span = Span {
                end: rhs.span.end,
                ..lhs.span
            };
            lhs = RawExpr {
                raw: Raw::Binary(op, Box::new(lhs), Box::new(rhs)),
                span,
            };
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> PResult<RawExpr> {
        let start = self.span();
        let op = match self.peek() {
            Tok::Punct("-") => Some(UnOp::Neg),
            Tok::Punct("~") => Some(UnOp::BitNot),
            Tok::Punct("!") => Some(UnOp::Not),
            _ => None,
        };
        if let Some(op) = op {
            self.bump();
            let e = self.unary()?;
            return Ok(RawExpr {
                span: Span {
                    end: e.span.end,
                    ..start
                },
                raw: Raw::Unary(op, Box::new(e)),
            });
        }
        self.primary()
    }

    fn primary(&mut self) -> PResult<RawExpr> {
        let start = self.span();
        match self.peek().clone() {
            Tok::Int(n) => {
                self.bump();
                Ok(RawExpr {
                    raw: Raw::Int(n),
                    span: start,
                })
            }
            Tok::Punct("(") => {
                self.bump();
                let e = self.expr()?;
                self.expect(")")?;
                Ok(e)
            }
            Tok::Ident(s) if s == "true" || s == "false" => {
                self.bump();
                Ok(RawExpr {
                    raw: Raw::Bool(s == "true"),
                    span: start,
                })
            }
            Tok::Ident(_) => {
                let (name, _) = self.ident()?;
                if self.eat("[") {
                    let i = self.expr()?;
                    self.expect("]")?;
                    Ok(RawExpr {
                        raw: Raw::Index(name, Box::new(i)),
                        span: self.finish(start),
                    })
                } else {
                    Ok(RawExpr {
                        raw: Raw::Name(name),
                        span: start,
                    })
                }
            }
            _ => self.error("expression"),
        }
    }

    // ---- name resolution and typing ----

    fn lookup(&self, name: &str, span: Span) -> PResult<VarId> {
        self.decls
            .iter()
            .position(|d| d.name == name)
            .map(VarId)
            .ok_or_else(|| type_err(span, format!("use of undeclared variable `{name}`")))
    }

    fn scalar(&self, name: &str, span: Span) -> PResult<VarId> {
        let v = self.lookup(name, span)?;
        if self.decls[v.0].is_array() {
            return Err(type_err(span, format!("array `{name}` used as a scalar")));
        }
        Ok(v)
    }

    fn array(&self, name: &str, span: Span) -> PResult<VarId> {
        let v = self.lookup(name, span)?;
        if !self.decls[v.0].is_array() {
            return Err(type_err(span, format!("index on scalar `{name}`")));
        }
        Ok(v)
    }

    /// Type of an expression, `None` when it is made only of integer literals.
    fn infer(&self, e: &RawExpr) -> PResult<Option<Ty>> {
        let int_operand = |t: Option<Ty>, span: Span| -> PResult<Option<Ty>> {
            match t {
                Some(Ty::Bool) => Err(type_err(span, "type mismatch: bool used as integer")),
                t => Ok(t),
            }
        };
        Ok(match &e.raw {
            Raw::Int(_) => None,
            Raw::Bool(_) => Some(Ty::Bool),
            Raw::Name(n) => Some(self.decls[self.scalar(n, e.span)?.0].ty),
            Raw::Index(n, i) => {
                let v = self.array(n, e.span)?;
                int_operand(self.infer(i)?, i.span)?;
                Some(self.decls[v.0].ty)
            }
            Raw::Unary(UnOp::Not, inner) => {
                self.infer(inner)?;
                Some(Ty::Bool)
            }
            Raw::Unary(_, inner) => int_operand(self.infer(inner)?, inner.span)?,
            Raw::Binary(op, l, r) => {
                let lt = self.infer(l)?;
                let rt = self.infer(r)?;
                if op.is_logical() {
                    Some(Ty::Bool)
                } else if op.is_comparison() {
                    let both_bool = lt == Some(Ty::Bool) && rt == Some(Ty::Bool);
                    if both_bool && !matches!(op, BinOp::Eq | BinOp::Ne) {
                        return Err(type_err(e.span, "ordering comparison on bool"));
                    }
                    if !both_bool {
                        int_operand(lt, l.span)?;
                        int_operand(rt, r.span)?;
                    }
                    Some(Ty::Bool)
                } else if op.is_shift() {
                    int_operand(rt, r.span)?;
                    int_operand(lt, l.span)?
                } else {
                    let lt = int_operand(lt, l.span)?;
                    let rt = int_operand(rt, r.span)?;
                    match (lt, rt) {
                        (None, t) | (t, None) => t,
                        (Some(a), Some(b)) => Some(Ty::join(a, b)),
                    }
                }
            }
        })
    }

    /// Resolve names and assign concrete types; `ctx` types untyped literals.
    fn resolve(&self, e: &RawExpr, ctx: Ty) -> PResult<Expr> {
        let ty = self.infer(e)?.unwrap_or(ctx);
        let kind = match &e.raw {
            Raw::Int(n) => ExprKind::Int(*n),
            Raw::Bool(b) => ExprKind::Bool(*b),
            Raw::Name(n) => ExprKind::Var(self.scalar(n, e.span)?),
            Raw::Index(n, i) => ExprKind::Index(self.array(n, e.span)?, Box::new(self.index_expr(i)?)),
            Raw::Unary(UnOp::Not, inner) => {
                let t = self.infer(inner)?.unwrap_or(Ty::I64);
                ExprKind::Unary(UnOp::Not, Box::new(self.resolve(inner, t)?))
            }
            Raw::Unary(op, inner) => ExprKind::Unary(*op, Box::new(self.resolve(inner, ty)?)),
            Raw::Binary(op, l, r) => {
                let lt = self.infer(l)?;
                let rt = self.infer(r)?;
                let operand_ty = if op.is_logical() {
                    Ty::Bool
                } else if op.is_comparison() {
                    match (lt, rt) {
                        (None, None) => Ty::I64,
                        (None, Some(t)) | (Some(t), None) => t,
                        (Some(a), Some(b)) if a == Ty::Bool && b == Ty::Bool => Ty::Bool,
                        (Some(a), Some(b)) => Ty::join(a, b),
                    }
                } else if op.is_shift() {
                    ty
                } else {
                    ty
                };
                let (lctx, rctx) = if op.is_logical() {
                    (Ty::I64, Ty::I64)
                } else if op.is_shift() {
                    (ty, Ty::I64)
                } else {
                    (operand_ty, operand_ty)
                };
                ExprKind::Binary {
                    op: *op,
                    operand_ty,
                    lhs: Box::new(self.resolve(l, lt.unwrap_or(lctx))?),
                    rhs: Box::new(self.resolve(r, rt.unwrap_or(rctx))?),
                }
            }
        };
        Ok(Expr { kind, ty })
    }

    fn index_expr(&self, e: &RawExpr) -> PResult<Expr> {
        match self.infer(e)? {
            Some(Ty::Bool) => Err(type_err(e.span, "array index must be an integer")),
            t => self.resolve(e, t.unwrap_or(Ty::I64)),
        }
    }

    fn condition(&self, e: &RawExpr) -> PResult<Expr> {
        let t = self.infer(e)?.unwrap_or(Ty::I64);
        self.resolve(e, t)
    }

    fn assigned(&self, dest: Ty, e: &RawExpr) -> PResult<Expr> {
        match (dest, self.infer(e)?) {
            (Ty::Bool, Some(Ty::Bool)) => self.resolve(e, Ty::Bool),
            (Ty::Bool, _) => Err(type_err(e.span, "type mismatch: integer assigned to bool")),
            (_, Some(Ty::Bool)) => Err(type_err(e.span, "type mismatch: bool assigned to integer")),
            (_, t) => self.resolve(e, t.unwrap_or(dest)),
        }
    }
}

/// Parse and type-check a `.wl` program.
pub fn parse(src: &str) -> Result<Program, ParseError> {
    let toks = lex(src)?;
    let mut p = Parser {
        toks,
        pos: 0,
        decls: Vec::new(),
        loop_depth: 0,
    };
    p.program()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn running_example_shape() {
        let p = parse("i32 i; while (i < 100) { if (i < 50) { i = i + 1; } else { i = i - 1; } }")
            .unwrap();
        assert_eq!(p.decls.len(), 1);
        assert_eq!(p.body.len(), 1);
        assert!(matches!(p.body[0].kind, StmtKind::While(..)));
    }

    #[test]
    fn empty_source() {
        let p = parse("").unwrap();
        assert!(p.decls.is_empty() && p.body.is_empty());
    }

    #[test]
    fn undeclared_use() {
        let err = parse("i32 x; x = y + 1;").unwrap_err();
        assert!(matches!(err, ParseError::Type { line: 1, col: 12, .. }), "{err}");
        assert!(err.to_string().contains("undeclared"));
    }

    #[test]
    fn syntax_error_has_position() {
        let err = parse("i32 x;\nx = ;").unwrap_err();
        assert_eq!(err.position(), (2, 5));
        assert!(matches!(err, ParseError::Syntax { .. }));
    }

    #[test]
    fn type_errors() {
        assert!(parse("i32 x; x[1] = 2;").is_err());
        assert!(parse("i32 a[4]; a = 2;").is_err());
        assert!(parse("bool b; i32 x; x = b;").is_err());
        assert!(parse("bool b; b = 3;").is_err());
        assert!(parse("i32 x; i32 x;").is_err());
        assert!(parse("break;").is_err());
        assert!(parse("i32 x; x = 1; i32 y;").is_err());
    }

    #[test]
    fn literal_typing_and_spans() {
        let p = parse("u8 x; x = 300 + x; x = nondet();\nwhile (true) { skip; }").unwrap();
        let StmtKind::Assign(_, e) = &p.body[0].kind else { panic!() };
        assert_eq!(e.ty, Ty::U8);
        assert_eq!(p.body[2].span.line, 2);
        assert!(matches!(p.body[1].kind, StmtKind::Nondet(_)));
    }

    #[test]
    fn hex_and_comments() {
        let p = parse("u32 x; // header\nx = 0xff;").unwrap();
        let StmtKind::Assign(_, e) = &p.body[0].kind else { panic!() };
        assert_eq!(e.kind, ExprKind::Int(255));
    }
}
