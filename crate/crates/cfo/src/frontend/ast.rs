//! MiniLang abstract syntax. `for` loops survive to the AST (two transforms
//! rewrite them there) and are desugared during lowering.

use crate::diag::Span;
use crate::ir::TrapKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Type {
    Int,
    Bool,
    IntArray,
}

impl std::fmt::Display for Type {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Type::Int => write!(f, "int"),
            Type::Bool => write!(f, "bool"),
            Type::IntArray => write!(f, "int[]"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Param {
    pub name: String,
    pub ty: Type,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FunctionDecl {
    pub name: String,
    pub params: Vec<Param>,
    pub ret: Option<Type>,
    pub body: Block,
    pub span: Span,
}

/// A parsed unit together with its source identity.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceUnit {
    pub path: String,
    pub text: String,
    pub functions: Vec<FunctionDecl>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Block {
    pub stmts: Vec<Stmt>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnaryOp {
    Neg,
    Not,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    Rem,
    And,
    Or,
    Xor,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Expr {
    pub kind: ExprKind,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ExprKind {
    IntLit(i64),
    BoolLit(bool),
    NullLit,
    /// Only valid as the argument of `print_str`.
    StrLit(String),
    Var(String),
    ArrayLit(Vec<Expr>),
    NewArray(Box<Expr>),
    Index { arr: Box<Expr>, idx: Box<Expr> },
    Call { name: String, args: Vec<Expr> },
    Unary { op: UnaryOp, expr: Box<Expr> },
    Binary { op: BinaryOp, lhs: Box<Expr>, rhs: Box<Expr> },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AssignTarget {
    Var(String),
    Index { arr: String, idx: Expr },
}

/// The trap kinds a catch clause matches; `All` is the catch-all.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CatchKinds {
    All,
    Kinds(Vec<TrapKind>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Stmt {
    VarDecl { name: String, ty: Type, init: Expr, span: Span },
    Assign { target: AssignTarget, value: Expr, span: Span },
    If { cond: Expr, then_branch: Block, else_branch: Option<Block>, span: Span },
    While { cond: Expr, body: Block, span: Span },
    For {
        init: Option<Box<Stmt>>,
        cond: Option<Expr>,
        step: Option<Box<Stmt>>,
        body: Block,
        span: Span,
    },
    Switch { scrutinee: Expr, cases: Vec<(i64, Block)>, default: Option<Block>, span: Span },
    Break { span: Span },
    Continue { span: Span },
    Return { value: Option<Expr>, span: Span },
    Throw { code: i64, span: Span },
    TryCatch {
        body: Block,
        kinds: CatchKinds,
        binder: Option<String>,
        handler: Block,
        span: Span,
    },
    /// A call used for its effect.
    ExprStmt { expr: Expr, span: Span },
    Nested { block: Block, span: Span },
}

impl Stmt {
    pub fn span(&self) -> Span {
        match self {
            Stmt::VarDecl { span, .. }
            | Stmt::Assign { span, .. }
            | Stmt::If { span, .. }
            | Stmt::While { span, .. }
            | Stmt::For { span, .. }
            | Stmt::Switch { span, .. }
            | Stmt::Break { span }
            | Stmt::Continue { span }
            | Stmt::Return { span, .. }
            | Stmt::Throw { span, .. }
            | Stmt::TryCatch { span, .. }
            | Stmt::ExprStmt { span, .. }
            | Stmt::Nested { span, .. } => *span,
        }
    }
}

/// Names with built-in meaning; user functions may not use them.
pub const INTRINSIC_NAMES: [&str; 4] = ["print", "print_str", "len", "min"];
