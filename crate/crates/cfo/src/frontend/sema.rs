//! Name, type, and structure checks over a parsed unit. Everything that can
//! fail does so here; lowering assumes a checked tree.

use super::ast::*;
use crate::diag::{Diagnostic, Span};
use std::collections::{BTreeMap, BTreeSet};

#[derive(Clone, Copy, PartialEq, Eq)]
enum Ctx {
    Loop,
    Switch,
}

struct Checker<'a> {
    unit: &'a SourceUnit,
    sigs: BTreeMap<String, (Vec<Type>, Option<Type>)>,
    diags: Vec<Diagnostic>,
    scopes: Vec<BTreeMap<String, Type>>,
    ctx: Vec<Ctx>,
    ret: Option<Type>,
}

impl<'a> Checker<'a> {
    fn err(&mut self, span: Span, msg: impl Into<String>) {
        self.diags.push(Diagnostic::at(span, msg));
    }

    fn declare(&mut self, span: Span, name: &str, ty: Type) {
        let shadows = self.scopes.iter().any(|s| s.contains_key(name));
        if shadows {
            self.err(span, format!("duplicate declaration of `{name}`"));
            return;
        }
        self.scopes.last_mut().unwrap().insert(name.to_string(), ty);
    }

    fn lookup(&self, name: &str) -> Option<Type> {
        self.scopes.iter().rev().find_map(|s| s.get(name).copied())
    }

    fn check_function(&mut self, f: &FunctionDecl) {
        self.scopes = vec![BTreeMap::new()];
        self.ctx = Vec::new();
        self.ret = f.ret;
        let mut seen = BTreeSet::new();
        for p in &f.params {
            if !seen.insert(p.name.clone()) {
                self.err(f.span, format!("duplicate parameter `{}`", p.name));
            }
            self.scopes.last_mut().unwrap().insert(p.name.clone(), p.ty);
        }
        self.check_block(&f.body);
    }

    fn check_block(&mut self, b: &Block) {
        self.scopes.push(BTreeMap::new());
        for s in &b.stmts {
            self.check_stmt(s);
        }
        self.scopes.pop();
    }

    fn check_stmt(&mut self, s: &Stmt) {
        match s {
            Stmt::VarDecl { name, ty, init, span } => {
                let it = self.check_expr(init);
                if let Some(it) = it {
                    if !assignable(*ty, it) {
                        self.err(*span, format!("cannot initialize `{name}: {ty}` from {it}"));
                    }
                }
                self.declare(*span, name, *ty);
            }
            Stmt::Assign { target, value, span } => {
                let vt = self.check_expr(value);
                match target {
                    AssignTarget::Var(name) => match self.lookup(name) {
                        None => self.err(*span, format!("unknown identifier `{name}`")),
                        Some(ty) => {
                            if let Some(vt) = vt {
                                if !assignable(ty, vt) {
                                    self.err(*span, format!("cannot assign {vt} to `{name}: {ty}`"));
                                }
                            }
                        }
                    },
                    AssignTarget::Index { arr, idx } => {
                        match self.lookup(arr) {
                            None => self.err(*span, format!("unknown identifier `{arr}`")),
                            Some(Type::IntArray) => {}
                            Some(t) => self.err(*span, format!("`{arr}: {t}` is not indexable")),
                        }
                        if let Some(it) = self.check_expr(idx) {
                            if it != Type::Int {
                                self.err(*span, "array index must be int");
                            }
                        }
                        if let Some(vt) = vt {
                            if vt != Type::Int {
                                self.err(*span, "array element must be int");
                            }
                        }
                    }
                }
            }
            Stmt::If { cond, then_branch, else_branch, span } => {
                self.expect_bool(cond, *span);
                self.check_block(then_branch);
                if let Some(e) = else_branch {
                    self.check_block(e);
                }
            }
            Stmt::While { cond, body, span } => {
                self.expect_bool(cond, *span);
                self.ctx.push(Ctx::Loop);
                self.check_block(body);
                self.ctx.pop();
            }
            Stmt::For { init, cond, step, body, span } => {
                self.scopes.push(BTreeMap::new());
                if let Some(i) = init {
                    self.check_stmt(i);
                }
                if let Some(c) = cond {
                    self.expect_bool(c, *span);
                }
                if let Some(st) = step {
                    match st.as_ref() {
                        Stmt::Assign { .. } | Stmt::ExprStmt { .. } => self.check_stmt(st),
                        other => self.err(other.span(), "for step must be an assignment or call"),
                    }
                }
                self.ctx.push(Ctx::Loop);
                self.check_block(body);
                self.ctx.pop();
                self.scopes.pop();
            }
            Stmt::Switch { scrutinee, cases, default, span } => {
                if let Some(t) = self.check_expr(scrutinee) {
                    if t != Type::Int {
                        self.err(*span, "switch scrutinee must be int");
                    }
                }
                let mut labels = BTreeSet::new();
                for (label, body) in cases {
                    if !labels.insert(*label) {
                        self.err(*span, format!("duplicate case label {label}"));
                    }
                    self.ctx.push(Ctx::Switch);
                    self.check_block(body);
                    self.ctx.pop();
                }
                if let Some(d) = default {
                    self.ctx.push(Ctx::Switch);
                    self.check_block(d);
                    self.ctx.pop();
                }
            }
            Stmt::Break { span } => {
                if self.ctx.is_empty() {
                    self.err(*span, "break outside loop or switch");
                }
            }
            Stmt::Continue { span } => {
                if !self.ctx.contains(&Ctx::Loop) {
                    self.err(*span, "continue outside loop");
                }
            }
            Stmt::Return { value, span } => match (value, self.ret) {
                (None, Some(t)) => self.err(*span, format!("missing return value of type {t}")),
                (Some(_), None) => self.err(*span, "void function returns a value"),
                (Some(v), Some(t)) => {
                    if let Some(vt) = self.check_expr(v) {
                        if !assignable(t, vt) {
                            self.err(*span, format!("return type mismatch: expected {t}, found {vt}"));
                        }
                    }
                }
                (None, None) => {}
            },
            Stmt::Throw { .. } => {}
            Stmt::TryCatch { body, binder, handler, .. } => {
                self.check_block(body);
                self.scopes.push(BTreeMap::new());
                if let Some(b) = binder {
                    let span = s.span();
                    self.declare(span, b, Type::Int);
                }
                for st in &handler.stmts {
                    self.check_stmt(st);
                }
                self.scopes.pop();
            }
            Stmt::ExprStmt { expr, span } => match &expr.kind {
                ExprKind::Call { .. } => {
                    self.check_expr_allow_void(expr);
                }
                _ => self.err(*span, "expression statements must be calls"),
            },
            Stmt::Nested { block, .. } => self.check_block(block),
        }
    }

    fn expect_bool(&mut self, e: &Expr, span: Span) {
        if let Some(t) = self.check_expr(e) {
            if t != Type::Bool {
                self.err(span, format!("condition must be bool, found {t}"));
            }
        }
    }

    fn check_expr(&mut self, e: &Expr) -> Option<Type> {
        let t = self.check_expr_allow_void(e)?;
        match t {
            Some(t) => Some(t),
            None => {
                self.err(e.span, "void call used as a value");
                None
            }
        }
    }

    /// Returns Some(None) for void calls, Some(Some(ty)) otherwise, None when
    /// already diagnosed.
    fn check_expr_allow_void(&mut self, e: &Expr) -> Option<Option<Type>> {
        match &e.kind {
            ExprKind::IntLit(_) => Some(Some(Type::Int)),
            ExprKind::BoolLit(_) => Some(Some(Type::Bool)),
            ExprKind::NullLit => Some(Some(Type::IntArray)),
            ExprKind::StrLit(_) => {
                self.err(e.span, "string literals are only valid as the argument of print_str");
                None
            }
            ExprKind::Var(name) => match self.lookup(name) {
                Some(t) => Some(Some(t)),
                None => {
                    self.err(e.span, format!("unknown identifier `{name}`"));
                    None
                }
            },
            ExprKind::ArrayLit(elems) => {
                for el in elems {
                    if let Some(t) = self.check_expr(el) {
                        if t != Type::Int {
                            self.err(el.span, "array elements must be int");
                        }
                    }
                }
                Some(Some(Type::IntArray))
            }
            ExprKind::NewArray(len) => {
                if let Some(t) = self.check_expr(len) {
                    if t != Type::Int {
                        self.err(e.span, "array length must be int");
                    }
                }
                Some(Some(Type::IntArray))
            }
            ExprKind::Index { arr, idx } => {
                if let Some(t) = self.check_expr(arr) {
                    if t != Type::IntArray {
                        self.err(e.span, format!("cannot index {t}"));
                    }
                }
                if let Some(t) = self.check_expr(idx) {
                    if t != Type::Int {
                        self.err(e.span, "array index must be int");
                    }
                }
                Some(Some(Type::Int))
            }
            ExprKind::Call { name, args } => self.check_call(e.span, name, args),
            ExprKind::Unary { op, expr } => {
                let t = self.check_expr(expr)?;
                match op {
                    UnaryOp::Neg if t == Type::Int => Some(Some(Type::Int)),
                    UnaryOp::Not if t == Type::Bool => Some(Some(Type::Bool)),
                    _ => {
                        self.err(e.span, format!("unary operator not defined on {t}"));
                        None
                    }
                }
            }
            ExprKind::Binary { op, lhs, rhs } => {
                let lt = self.check_expr(lhs)?;
                let rt = self.check_expr(rhs)?;
                use BinaryOp::*;
                let out = match op {
                    Add | Sub | Mul | Div | Rem => {
                        (lt == Type::Int && rt == Type::Int).then_some(Type::Int)
                    }
                    And | Or => (lt == Type::Bool && rt == Type::Bool).then_some(Type::Bool),
                    Xor => match (lt, rt) {
                        (Type::Int, Type::Int) => Some(Type::Int),
                        (Type::Bool, Type::Bool) => Some(Type::Bool),
                        _ => None,
                    },
                    Eq | Ne => match (lt, rt) {
                        (Type::Int, Type::Int) | (Type::Bool, Type::Bool) => Some(Type::Bool),
                        (Type::IntArray, Type::IntArray) => {
                            // Only comparisons against the null literal.
                            let null_side = matches!(lhs.kind, ExprKind::NullLit)
                                || matches!(rhs.kind, ExprKind::NullLit);
                            if null_side {
                                Some(Type::Bool)
                            } else {
                                self.err(e.span, "arrays can only be compared to null");
                                return None;
                            }
                        }
                        _ => None,
                    },
                    Lt | Le | Gt | Ge => {
                        (lt == Type::Int && rt == Type::Int).then_some(Type::Bool)
                    }
                };
                match out {
                    Some(t) => Some(Some(t)),
                    None => {
                        self.err(e.span, format!("operator not defined on {lt} and {rt}"));
                        None
                    }
                }
            }
        }
    }

    fn check_call(&mut self, span: Span, name: &str, args: &[Expr]) -> Option<Option<Type>> {
        match name {
            "print" => {
                self.check_args(span, name, args, &[Type::Int]);
                Some(None)
            }
            "print_str" => {
                if args.len() != 1 || !matches!(args[0].kind, ExprKind::StrLit(_)) {
                    self.err(span, "print_str takes exactly one string literal");
                    return None;
                }
                Some(None)
            }
            "len" => {
                self.check_args(span, name, args, &[Type::IntArray]);
                Some(Some(Type::Int))
            }
            "min" => {
                self.check_args(span, name, args, &[Type::Int, Type::Int]);
                Some(Some(Type::Int))
            }
            _ => match self.sigs.get(name).cloned() {
                None => {
                    self.err(span, format!("unknown identifier `{name}`"));
                    None
                }
                Some((params, ret)) => {
                    if args.len() != params.len() {
                        self.err(span, format!("`{name}` expects {} arguments, found {}", params.len(), args.len()));
                    }
                    for (a, p) in args.iter().zip(params.iter()) {
                        if let Some(t) = self.check_expr(a) {
                            if !assignable(*p, t) {
                                self.err(a.span, format!("argument type mismatch: expected {p}, found {t}"));
                            }
                        }
                    }
                    Some(ret)
                }
            },
        }
    }

    fn check_args(&mut self, span: Span, name: &str, args: &[Expr], want: &[Type]) {
        if args.len() != want.len() {
            self.err(span, format!("`{name}` expects {} arguments, found {}", want.len(), args.len()));
            return;
        }
        for (a, w) in args.iter().zip(want.iter()) {
            if let Some(t) = self.check_expr(a) {
                if t != *w {
                    self.err(a.span, format!("argument type mismatch: expected {w}, found {t}"));
                }
            }
        }
    }
}

fn assignable(want: Type, got: Type) -> bool {
    want == got
}

/// Runs all semantic checks; empty result means the unit is accepted.
pub fn check(unit: &SourceUnit) -> Vec<Diagnostic> {
    let mut diags = Vec::new();
    let mut sigs = BTreeMap::new();
    for f in &unit.functions {
        if INTRINSIC_NAMES.contains(&f.name.as_str()) {
            diags.push(Diagnostic::at(f.span, format!("`{}` is a reserved intrinsic name", f.name)));
        }
        let params: Vec<Type> = f.params.iter().map(|p| p.ty).collect();
        if sigs.insert(f.name.clone(), (params, f.ret)).is_some() {
            diags.push(Diagnostic::at(f.span, format!("duplicate declaration of function `{}`", f.name)));
        }
    }
    match unit.functions.iter().find(|f| f.name == "main") {
        None => diags.push(Diagnostic::bare("no `main` function")),
        Some(m) => {
            let sig_ok = m.params.len() == 1
                && m.params[0].ty == Type::IntArray
                && m.ret == Some(Type::Int);
            if !sig_ok {
                diags.push(Diagnostic::at(m.span, "main must have signature (int[]) -> int"));
            }
        }
    }

    let mut c = Checker { unit, sigs, diags, scopes: Vec::new(), ctx: Vec::new(), ret: None };
    for f in &unit.functions {
        c.check_function(f);
    }
    c.diags
}
