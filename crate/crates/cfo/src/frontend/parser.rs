//! Recursive-descent parser plus the semantic checks (scopes, types, `main`
//! signature). All user-facing failures surface here as diagnostics; lowering
//! afterwards is total.

use super::ast::*;
use super::lexer::{lex, Tok, Token};
use crate::diag::{Diagnostic, Span};
use crate::ir::TrapKind;
use std::collections::{BTreeMap, BTreeSet};

struct Parser {
    toks: Vec<Token>,
    pos: usize,
    diags: Vec<Diagnostic>,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn peek2(&self) -> &Tok {
        &self.toks[(self.pos + 1).min(self.toks.len() - 1)].tok
    }

    fn span(&self) -> Span {
        self.toks[self.pos].span
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].tok.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn error<T>(&mut self, expected: &str) -> Result<T, ()> {
        let msg = format!("syntax error: expected {}, found {}", expected, self.peek());
        let span = self.span();
        self.diags.push(Diagnostic::at(span, msg));
        Err(())
    }

    fn eat_punct(&mut self, p: &str) -> Result<(), ()> {
        if matches!(self.peek(), Tok::Punct(q) if *q == p) {
            self.bump();
            Ok(())
        } else {
            self.error(&format!("`{p}`"))
        }
    }

    fn eat_kw(&mut self, k: &str) -> Result<(), ()> {
        if matches!(self.peek(), Tok::Kw(q) if *q == k) {
            self.bump();
            Ok(())
        } else {
            self.error(&format!("`{k}`"))
        }
    }

    fn at_punct(&self, p: &str) -> bool {
        matches!(self.peek(), Tok::Punct(q) if *q == p)
    }

    fn at_kw(&self, k: &str) -> bool {
        matches!(self.peek(), Tok::Kw(q) if *q == k)
    }

    fn ident(&mut self) -> Result<String, ()> {
        match self.peek().clone() {
            Tok::Ident(s) => {
                self.bump();
                Ok(s)
            }
            _ => self.error("identifier"),
        }
    }

    fn parse_type(&mut self) -> Result<Type, ()> {
        if self.at_kw("int") {
            self.bump();
            if self.at_punct("[") {
                self.bump();
                self.eat_punct("]")?;
                Ok(Type::IntArray)
            } else {
                Ok(Type::Int)
            }
        } else if self.at_kw("bool") {
            self.bump();
            Ok(Type::Bool)
        } else {
            self.error("type")
        }
    }

    fn at_type_start(&self) -> bool {
        self.at_kw("int") || self.at_kw("bool")
    }

    fn parse_function(&mut self) -> Result<FunctionDecl, ()> {
        let span = self.span();
        self.eat_kw("fn")?;
        let name = self.ident()?;
        self.eat_punct("(")?;
        let mut params = Vec::new();
        if !self.at_punct(")") {
            loop {
                let pname = self.ident()?;
                self.eat_punct(":")?;
                let ty = self.parse_type()?;
                params.push(Param { name: pname, ty });
                if self.at_punct(",") {
                    self.bump();
                } else {
                    break;
                }
            }
        }
        self.eat_punct(")")?;
        let ret = if self.at_punct("->") {
            self.bump();
            if self.at_kw("void") {
                self.bump();
                None
            } else {
                Some(self.parse_type()?)
            }
        } else {
            None
        };
        let body = self.parse_block()?;
        Ok(FunctionDecl { name, params, ret, body, span })
    }

    fn parse_block(&mut self) -> Result<Block, ()> {
        self.eat_punct("{")?;
        let mut stmts = Vec::new();
        while !self.at_punct("}") {
            if matches!(self.peek(), Tok::Eof) {
                return self.error("`}`");
            }
            let s = self.parse_stmt()?;
            stmts.extend(s);
        }
        self.bump();
        Ok(Block { stmts })
    }

    fn parse_stmt_or_block(&mut self) -> Result<Block, ()> {
        if self.at_punct("{") {
            self.parse_block()
        } else {
            Ok(Block { stmts: self.parse_stmt()? })
        }
    }

    /// Parses one statement. Multi-variable declarations are split here,
    /// hence the Vec.
    fn parse_stmt(&mut self) -> Result<Vec<Stmt>, ()> {
        let span = self.span();
        if self.at_type_start() {
            let ty = self.parse_type()?;
            let mut out = Vec::new();
            loop {
                let name = self.ident()?;
                self.eat_punct("=")?;
                let init = self.parse_expr()?;
                out.push(Stmt::VarDecl { name, ty, init, span });
                if self.at_punct(",") {
                    self.bump();
                } else {
                    break;
                }
            }
            self.eat_punct(";")?;
            return Ok(out);
        }
        if self.at_kw("if") {
            self.bump();
            self.eat_punct("(")?;
            let cond = self.parse_expr()?;
            self.eat_punct(")")?;
            let then_branch = self.parse_stmt_or_block()?;
            let else_branch = if self.at_kw("else") {
                self.bump();
                Some(self.parse_stmt_or_block()?)
            } else {
                None
            };
            return Ok(vec![Stmt::If { cond, then_branch, else_branch, span }]);
        }
        if self.at_kw("while") {
            self.bump();
            self.eat_punct("(")?;
            let cond = self.parse_expr()?;
            self.eat_punct(")")?;
            let body = self.parse_stmt_or_block()?;
            return Ok(vec![Stmt::While { cond, body, span }]);
        }
        if self.at_kw("for") {
            self.bump();
            self.eat_punct("(")?;
            let init = if self.at_punct(";") {
                None
            } else {
                let mut s = self.parse_simple_stmt()?;
                if s.len() != 1 {
                    let sp = self.span();
                    self.diags.push(Diagnostic::at(sp, "for initializer declares several variables"));
                    return Err(());
                }
                Some(Box::new(s.remove(0)))
            };
            self.eat_punct(";")?;
            let cond = if self.at_punct(";") { None } else { Some(self.parse_expr()?) };
            self.eat_punct(";")?;
            let step = if self.at_punct(")") {
                None
            } else {
                let mut s = self.parse_simple_stmt()?;
                if s.len() != 1 {
                    let sp = self.span();
                    self.diags.push(Diagnostic::at(sp, "for step declares several variables"));
                    return Err(());
                }
                Some(Box::new(s.remove(0)))
            };
            self.eat_punct(")")?;
            let body = self.parse_stmt_or_block()?;
            return Ok(vec![Stmt::For { init, cond, step, body, span }]);
        }
        if self.at_kw("switch") {
            self.bump();
            self.eat_punct("(")?;
            let scrutinee = self.parse_expr()?;
            self.eat_punct(")")?;
            self.eat_punct("{")?;
            let mut cases: Vec<(i64, Block)> = Vec::new();
            let mut default = None;
            while !self.at_punct("}") {
                if self.at_kw("case") {
                    self.bump();
                    let label = self.parse_int_literal()?;
                    self.eat_punct(":")?;
                    let body = self.parse_case_body()?;
                    cases.push((label, body));
                } else if self.at_kw("default") {
                    self.bump();
                    self.eat_punct(":")?;
                    let body = self.parse_case_body()?;
                    if default.is_some() {
                        self.diags.push(Diagnostic::at(span, "duplicate default case"));
                    }
                    default = Some(body);
                } else {
                    return self.error("`case`, `default` or `}`");
                }
            }
            self.bump();
            return Ok(vec![Stmt::Switch { scrutinee, cases, default, span }]);
        }
        if self.at_kw("break") {
            self.bump();
            self.eat_punct(";")?;
            return Ok(vec![Stmt::Break { span }]);
        }
        if self.at_kw("continue") {
            self.bump();
            self.eat_punct(";")?;
            return Ok(vec![Stmt::Continue { span }]);
        }
        if self.at_kw("return") {
            self.bump();
            if self.at_punct(";") {
                self.bump();
                return Ok(vec![Stmt::Return { value: None, span }]);
            }
            let value = self.parse_expr()?;
            self.eat_punct(";")?;
            return Ok(vec![Stmt::Return { value: Some(value), span }]);
        }
        if self.at_kw("throw") {
            self.bump();
            let code = self.parse_int_literal()?;
            self.eat_punct(";")?;
            return Ok(vec![Stmt::Throw { code, span }]);
        }
        if self.at_kw("try") {
            self.bump();
            let body = self.parse_block()?;
            self.eat_kw("catch")?;
            self.eat_punct("(")?;
            let mut kind_words: Vec<String> = Vec::new();
            while !self.at_punct(")") {
                if self.at_punct("|") {
                    self.bump();
                    continue;
                }
                kind_words.push(self.ident()?);
            }
            self.eat_punct(")")?;
            let (kinds, binder) = self.resolve_catch(&kind_words, span)?;
            let handler = self.parse_block()?;
            return Ok(vec![Stmt::TryCatch { body, kinds, binder, handler, span }]);
        }
        if self.at_punct("{") {
            let block = self.parse_block()?;
            return Ok(vec![Stmt::Nested { block, span }]);
        }
        let s = self.parse_simple_stmt()?;
        self.eat_punct(";")?;
        Ok(s)
    }

    /// A statement body of a switch case: statements up to the next label.
    fn parse_case_body(&mut self) -> Result<Block, ()> {
        let mut stmts = Vec::new();
        while !(self.at_kw("case") || self.at_kw("default") || self.at_punct("}")) {
            if matches!(self.peek(), Tok::Eof) {
                return self.error("`case`, `default` or `}`");
            }
            stmts.extend(self.parse_stmt()?);
        }
        Ok(Block { stmts })
    }

    fn resolve_catch(
        &mut self,
        words: &[String],
        span: Span,
    ) -> Result<(CatchKinds, Option<String>), ()> {
        let kind_of = |w: &str| match w {
            "null" | "null_access" => Some(TrapKind::NullAccess),
            "oob" | "index_oob" => Some(TrapKind::IndexOutOfBounds),
            "div0" | "div_by_zero" => Some(TrapKind::DivByZero),
            "user" => Some(TrapKind::User),
            _ => None,
        };
        let mut kinds = Vec::new();
        let mut binder = None;
        let mut all = false;
        for (i, w) in words.iter().enumerate() {
            if w == "any" {
                all = true;
            } else if let Some(k) = kind_of(w) {
                kinds.push(k);
            } else if i + 1 == words.len() {
                binder = Some(w.clone());
            } else {
                self.diags.push(Diagnostic::at(span, format!("unknown trap kind `{w}`")));
                return Err(());
            }
        }
        if all || (kinds.is_empty() && words.len() <= 1) {
            return Ok((CatchKinds::All, binder));
        }
        if kinds.is_empty() {
            self.diags.push(Diagnostic::at(span, "catch clause names no trap kinds"));
            return Err(());
        }
        Ok((CatchKinds::Kinds(kinds), binder))
    }

    fn parse_int_literal(&mut self) -> Result<i64, ()> {
        let neg = if self.at_punct("-") {
            self.bump();
            true
        } else {
            false
        };
        match self.peek().clone() {
            Tok::Int(v) => {
                self.bump();
                fold_int(v, neg).ok_or(()).map_err(|_| {
                    let sp = self.span();
                    self.diags.push(Diagnostic::at(sp, "integer literal out of range"));
                })
            }
            _ => self.error("integer literal"),
        }
    }

    /// Assignment or call statement (no trailing `;`), or a declaration when
    /// used in a `for` header.
    fn parse_simple_stmt(&mut self) -> Result<Vec<Stmt>, ()> {
        let span = self.span();
        if self.at_type_start() {
            let ty = self.parse_type()?;
            let name = self.ident()?;
            self.eat_punct("=")?;
            let init = self.parse_expr()?;
            return Ok(vec![Stmt::VarDecl { name, ty, init, span }]);
        }
        let name = match self.peek().clone() {
            Tok::Ident(s) => s,
            _ => return self.error("statement"),
        };
        match self.peek2() {
            Tok::Punct("(") => {
                let expr = self.parse_expr()?;
                Ok(vec![Stmt::ExprStmt { expr, span }])
            }
            Tok::Punct("[") => {
                self.bump(); // ident
                self.bump(); // [
                let idx = self.parse_expr()?;
                self.eat_punct("]")?;
                self.eat_punct("=")?;
                let value = self.parse_expr()?;
                Ok(vec![Stmt::Assign { target: AssignTarget::Index { arr: name, idx }, value, span }])
            }
            Tok::Punct("=") => {
                self.bump(); // ident
                self.bump(); // =
                let value = self.parse_expr()?;
                Ok(vec![Stmt::Assign { target: AssignTarget::Var(name), value, span }])
            }
            _ => self.error("`=`, `[` or `(` after identifier"),
        }
    }

    // Expressions, by descending precedence:
    //   || ; && ; ^ ; == != ; < <= > >= ; + - ; * / % ; unary ! - ; postfix
    fn parse_expr(&mut self) -> Result<Expr, ()> {
        self.parse_or()
    }

    fn parse_bin_level(
        &mut self,
        ops: &[(&str, BinaryOp)],
        next: fn(&mut Self) -> Result<Expr, ()>,
    ) -> Result<Expr, ()> {
        let mut lhs = next(self)?;
        loop {
            let mut matched = None;
            for (p, op) in ops {
                if self.at_punct(p) {
                    matched = Some(*op);
                    break;
                }
            }
            match matched {
                Some(op) => {
                    let span = self.span();
                    self.bump();
                    let rhs = next(self)?;
                    lhs = Expr {
                        kind: ExprKind::Binary { op, lhs: Box::new(lhs), rhs: Box::new(rhs) },
                        span,
                    };
                }
                None => return Ok(lhs),
            }
        }
    }

    fn parse_or(&mut self) -> Result<Expr, ()> {
        self.parse_bin_level(&[("||", BinaryOp::Or)], Self::parse_and)
    }

    fn parse_and(&mut self) -> Result<Expr, ()> {
        self.parse_bin_level(&[("&&", BinaryOp::And)], Self::parse_xor)
    }

    fn parse_xor(&mut self) -> Result<Expr, ()> {
        self.parse_bin_level(&[("^", BinaryOp::Xor)], Self::parse_equality)
    }

    fn parse_equality(&mut self) -> Result<Expr, ()> {
        self.parse_bin_level(&[("==", BinaryOp::Eq), ("!=", BinaryOp::Ne)], Self::parse_relational)
    }

    fn parse_relational(&mut self) -> Result<Expr, ()> {
        self.parse_bin_level(
            &[("<=", BinaryOp::Le), (">=", BinaryOp::Ge), ("<", BinaryOp::Lt), (">", BinaryOp::Gt)],
            Self::parse_additive,
        )
    }

    fn parse_additive(&mut self) -> Result<Expr, ()> {
        self.parse_bin_level(&[("+", BinaryOp::Add), ("-", BinaryOp::Sub)], Self::parse_multiplicative)
    }

    fn parse_multiplicative(&mut self) -> Result<Expr, ()> {
        self.parse_bin_level(
            &[("*", BinaryOp::Mul), ("/", BinaryOp::Div), ("%", BinaryOp::Rem)],
            Self::parse_unary,
        )
    }

    fn parse_unary(&mut self) -> Result<Expr, ()> {
        let span = self.span();
        if self.at_punct("-") {
            self.bump();
            // Fold a directly-negated literal so i64::MIN is expressible.
            if let Tok::Int(v) = self.peek().clone() {
                self.bump();
                return match fold_int(v, true) {
                    Some(value) => Ok(Expr { kind: ExprKind::IntLit(value), span }),
                    None => {
                        self.diags.push(Diagnostic::at(span, "integer literal out of range"));
                        Err(())
                    }
                };
            }
            let expr = self.parse_unary()?;
            return Ok(Expr { kind: ExprKind::Unary { op: UnaryOp::Neg, expr: Box::new(expr) }, span });
        }
        if self.at_punct("!") {
            self.bump();
            let expr = self.parse_unary()?;
            return Ok(Expr { kind: ExprKind::Unary { op: UnaryOp::Not, expr: Box::new(expr) }, span });
        }
        self.parse_postfix()
    }

    fn parse_postfix(&mut self) -> Result<Expr, ()> {
        let mut e = self.parse_primary()?;
        loop {
            if self.at_punct("[") {
                let span = self.span();
                self.bump();
                let idx = self.parse_expr()?;
                self.eat_punct("]")?;
                e = Expr { kind: ExprKind::Index { arr: Box::new(e), idx: Box::new(idx) }, span };
            } else {
                return Ok(e);
            }
        }
    }

    fn parse_primary(&mut self) -> Result<Expr, ()> {
        let span = self.span();
        match self.peek().clone() {
            Tok::Int(v) => {
                self.bump();
                match fold_int(v, false) {
                    Some(value) => Ok(Expr { kind: ExprKind::IntLit(value), span }),
                    None => {
                        self.diags.push(Diagnostic::at(span, "integer literal out of range"));
                        Err(())
                    }
                }
            }
            Tok::Str(s) => {
                self.bump();
                Ok(Expr { kind: ExprKind::StrLit(s), span })
            }
            Tok::Kw("true") => {
                self.bump();
                Ok(Expr { kind: ExprKind::BoolLit(true), span })
            }
            Tok::Kw("false") => {
                self.bump();
                Ok(Expr { kind: ExprKind::BoolLit(false), span })
            }
            Tok::Kw("null") => {
                self.bump();
                Ok(Expr { kind: ExprKind::NullLit, span })
            }
            Tok::Kw("new") => {
                self.bump();
                self.eat_kw("int")?;
                self.eat_punct("[")?;
                let e = self.parse_expr()?;
                self.eat_punct("]")?;
                Ok(Expr { kind: ExprKind::NewArray(Box::new(e)), span })
            }
            Tok::Ident(name) => {
                self.bump();
                if self.at_punct("(") {
                    self.bump();
                    let mut args = Vec::new();
                    if !self.at_punct(")") {
                        loop {
                            args.push(self.parse_expr()?);
                            if self.at_punct(",") {
                                self.bump();
                            } else {
                                break;
                            }
                        }
                    }
                    self.eat_punct(")")?;
                    Ok(Expr { kind: ExprKind::Call { name, args }, span })
                } else {
                    Ok(Expr { kind: ExprKind::Var(name), span })
                }
            }
            Tok::Punct("(") => {
                self.bump();
                let e = self.parse_expr()?;
                self.eat_punct(")")?;
                Ok(e)
            }
            Tok::Punct("[") => {
                self.bump();
                let mut elems = Vec::new();
                if !self.at_punct("]") {
                    loop {
                        elems.push(self.parse_expr()?);
                        if self.at_punct(",") {
                            self.bump();
                        } else {
                            break;
                        }
                    }
                }
                self.eat_punct("]")?;
                Ok(Expr { kind: ExprKind::ArrayLit(elems), span })
            }
            _ => self.error("expression"),
        }
    }
}

fn fold_int(v: u64, neg: bool) -> Option<i64> {
    if neg {
        if v <= i64::MAX as u64 + 1 {
            Some((v as i128).wrapping_neg() as i64)
        } else {
            None
        }
    } else if v <= i64::MAX as u64 {
        Some(v as i64)
    } else {
        None
    }
}

/// Parses and semantically checks a MiniLang unit, or returns diagnostics.
pub fn parse(path: &str, text: &str) -> Result<SourceUnit, Vec<Diagnostic>> {
    let toks = lex(text)?;
    let mut p = Parser { toks, pos: 0, diags: Vec::new() };
    let mut functions = Vec::new();
    while !matches!(p.peek(), Tok::Eof) {
        match p.parse_function() {
            Ok(f) => functions.push(f),
            Err(()) => break,
        }
    }
    if !p.diags.is_empty() {
        return Err(p.diags);
    }
    let unit = SourceUnit { path: path.to_string(), text: text.to_string(), functions };
    let diags = super::sema::check(&unit);
    if diags.is_empty() {
        Ok(unit)
    } else {
        Err(diags)
    }
}
