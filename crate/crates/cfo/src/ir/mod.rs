//! CFG-based intermediate representation.
//!
//! A program is a list of functions; a function is a pool of typed virtual
//! registers plus basic blocks with explicit terminators (no fallthrough).
//! Exception handling is expressed as a trap table: instruction ranges mapped
//! to handler blocks, the IR analog of a bytecode exception table.

use crate::diag::Span;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

mod def_use;
mod dominators;
mod text;
mod verify;

pub use def_use::{def_use, DepGraph};
pub use dominators::{dominators, DomTree};
pub use text::{emit_text, parse_text};
pub use verify::verify;

/// A virtual register, local to one function.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Reg(pub u32);

impl fmt::Display for Reg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "r{}", self.0)
    }
}

/// A basic block id, local to one function. Ids are stable under layout
/// reordering; they are not required to be dense.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct BlockId(pub u32);

impl fmt::Display for BlockId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "b{}", self.0)
    }
}

/// Register types. Booleans are stored as 0/1; arrays are nullable handles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RegType {
    Int,
    Bool,
    Arr,
}

impl fmt::Display for RegType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RegType::Int => write!(f, "int"),
            RegType::Bool => write!(f, "bool"),
            RegType::Arr => write!(f, "arr"),
        }
    }
}

/// Provenance mark carried by every instruction. `Dead` marks code inserted
/// behind always-false predicates; the coverage checker asserts it never runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Tag {
    #[default]
    Original,
    Opaque,
    Dead,
    Irrelevant,
    Dispatcher,
    Buffer,
}

impl Tag {
    pub fn suffix(self) -> &'static str {
        match self {
            Tag::Original => "",
            Tag::Opaque => " !opaque",
            Tag::Dead => " !dead",
            Tag::Irrelevant => " !irrelevant",
            Tag::Dispatcher => " !dispatcher",
            Tag::Buffer => " !buffer",
        }
    }
}

/// Binary operators. Arithmetic wraps at 64 bits; division and remainder are
/// truncated and trap on a zero divisor. And/Or/Xor are bitwise (logical on
/// 0/1 booleans). Comparisons yield a boolean register.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BinOp {
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

impl BinOp {
    pub fn is_comparison(self) -> bool {
        matches!(
            self,
            BinOp::Eq | BinOp::Ne | BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge
        )
    }

    pub fn can_trap(self) -> bool {
        matches!(self, BinOp::Div | BinOp::Rem)
    }

    pub fn text(self) -> &'static str {
        match self {
            BinOp::Add => "add",
            BinOp::Sub => "sub",
            BinOp::Mul => "mul",
            BinOp::Div => "div",
            BinOp::Rem => "rem",
            BinOp::And => "and",
            BinOp::Or => "or",
            BinOp::Xor => "xor",
            BinOp::Eq => "eq",
            BinOp::Ne => "ne",
            BinOp::Lt => "lt",
            BinOp::Le => "le",
            BinOp::Gt => "gt",
            BinOp::Ge => "ge",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum UnOp {
    /// Wrapping negation.
    Neg,
    /// Logical not: 1 if the operand is 0, else 0.
    Not,
    /// True iff the array operand is null.
    IsNull,
}

impl UnOp {
    pub fn text(self) -> &'static str {
        match self {
            UnOp::Neg => "neg",
            UnOp::Not => "not",
            UnOp::IsNull => "isnull",
        }
    }
}

/// Intrinsics with observable effects or library semantics.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Intrinsic {
    /// Print an integer as one output item.
    Print,
    /// Print a string literal as one output item.
    PrintStr(String),
    /// Minimum of two integers.
    Min,
}

/// Non-terminator operations.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Op {
    Const { dst: Reg, value: i64 },
    /// Null constant for an array register.
    ConstNull { dst: Reg },
    Move { dst: Reg, src: Reg },
    Un { op: UnOp, dst: Reg, src: Reg },
    Bin { op: BinOp, dst: Reg, lhs: Reg, rhs: Reg },
    /// Allocate a zero-filled array; a negative length traps IndexOutOfBounds.
    ArrayNew { dst: Reg, len: Reg },
    ArrayLoad { dst: Reg, arr: Reg, idx: Reg },
    ArrayStore { arr: Reg, idx: Reg, val: Reg },
    /// Array length; traps NullAccess on a null handle.
    Len { dst: Reg, arr: Reg },
    Call { dst: Option<Reg>, func: String, args: Vec<Reg> },
    Intrinsic { kind: Intrinsic, dst: Option<Reg>, args: Vec<Reg> },
}

impl Op {
    /// Registers read by this operation, in operand order.
    pub fn reads(&self) -> Vec<Reg> {
        match self {
            Op::Const { .. } | Op::ConstNull { .. } => vec![],
            Op::Move { src, .. } => vec![*src],
            Op::Un { src, .. } => vec![*src],
            Op::Bin { lhs, rhs, .. } => vec![*lhs, *rhs],
            Op::ArrayNew { len, .. } => vec![*len],
            Op::ArrayLoad { arr, idx, .. } => vec![*arr, *idx],
            Op::ArrayStore { arr, idx, val } => vec![*arr, *idx, *val],
            Op::Len { arr, .. } => vec![*arr],
            Op::Call { args, .. } => args.clone(),
            Op::Intrinsic { args, .. } => args.clone(),
        }
    }

    /// The register written by this operation, if any.
    pub fn def(&self) -> Option<Reg> {
        match self {
            Op::Const { dst, .. }
            | Op::ConstNull { dst }
            | Op::Move { dst, .. }
            | Op::Un { dst, .. }
            | Op::Bin { dst, .. }
            | Op::ArrayNew { dst, .. }
            | Op::ArrayLoad { dst, .. }
            | Op::Len { dst, .. } => Some(*dst),
            Op::ArrayStore { .. } => None,
            Op::Call { dst, .. } | Op::Intrinsic { dst, .. } => *dst,
        }
    }

    pub fn is_memory(&self) -> bool {
        matches!(
            self,
            Op::ArrayNew { .. } | Op::ArrayLoad { .. } | Op::ArrayStore { .. }
        )
    }

    /// True for operations whose execution order is observable: calls,
    /// intrinsics, and anything that can trap.
    pub fn is_effectful(&self) -> bool {
        match self {
            Op::Call { .. } | Op::Intrinsic { .. } => true,
            Op::Len { .. } => true,
            Op::Bin { op, .. } => op.can_trap(),
            _ => self.is_memory(),
        }
    }

    pub fn rewrite_regs(&mut self, f: &mut impl FnMut(Reg) -> Reg) {
        match self {
            Op::Const { dst, .. } | Op::ConstNull { dst } => *dst = f(*dst),
            Op::Move { dst, src } => {
                *dst = f(*dst);
                *src = f(*src);
            }
            Op::Un { dst, src, .. } => {
                *dst = f(*dst);
                *src = f(*src);
            }
            Op::Bin { dst, lhs, rhs, .. } => {
                *dst = f(*dst);
                *lhs = f(*lhs);
                *rhs = f(*rhs);
            }
            Op::ArrayNew { dst, len } => {
                *dst = f(*dst);
                *len = f(*len);
            }
            Op::ArrayLoad { dst, arr, idx } => {
                *dst = f(*dst);
                *arr = f(*arr);
                *idx = f(*idx);
            }
            Op::ArrayStore { arr, idx, val } => {
                *arr = f(*arr);
                *idx = f(*idx);
                *val = f(*val);
            }
            Op::Len { dst, arr } => {
                *dst = f(*dst);
                *arr = f(*arr);
            }
            Op::Call { dst, args, .. } => {
                if let Some(d) = dst {
                    *d = f(*d);
                }
                for a in args {
                    *a = f(*a);
                }
            }
            Op::Intrinsic { dst, args, .. } => {
                if let Some(d) = dst {
                    *d = f(*d);
                }
                for a in args {
                    *a = f(*a);
                }
            }
        }
    }
}

/// Block terminators. Every block ends in exactly one of these.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum TermOp {
    Jump { target: BlockId },
    CondBranch { pred: Reg, then_target: BlockId, else_target: BlockId },
    Switch { scrutinee: Reg, cases: Vec<(i64, BlockId)>, default: BlockId },
    Return { value: Option<Reg> },
    /// Raise a user trap carrying the given code.
    Throw { code: i64 },
}

impl TermOp {
    pub fn targets(&self) -> Vec<BlockId> {
        match self {
            TermOp::Jump { target } => vec![*target],
            TermOp::CondBranch { then_target, else_target, .. } => {
                vec![*then_target, *else_target]
            }
            TermOp::Switch { cases, default, .. } => {
                let mut t: Vec<BlockId> = cases.iter().map(|(_, b)| *b).collect();
                t.push(*default);
                t
            }
            TermOp::Return { .. } | TermOp::Throw { .. } => vec![],
        }
    }

    pub fn reads(&self) -> Vec<Reg> {
        match self {
            TermOp::CondBranch { pred, .. } => vec![*pred],
            TermOp::Switch { scrutinee, .. } => vec![*scrutinee],
            TermOp::Return { value: Some(v) } => vec![*v],
            _ => vec![],
        }
    }

    pub fn rewrite_targets(&mut self, f: &mut impl FnMut(BlockId) -> BlockId) {
        match self {
            TermOp::Jump { target } => *target = f(*target),
            TermOp::CondBranch { then_target, else_target, .. } => {
                *then_target = f(*then_target);
                *else_target = f(*else_target);
            }
            TermOp::Switch { cases, default, .. } => {
                for (_, b) in cases.iter_mut() {
                    *b = f(*b);
                }
                *default = f(*default);
            }
            TermOp::Return { .. } | TermOp::Throw { .. } => {}
        }
    }

    pub fn rewrite_regs(&mut self, f: &mut impl FnMut(Reg) -> Reg) {
        match self {
            TermOp::CondBranch { pred, .. } => *pred = f(*pred),
            TermOp::Switch { scrutinee, .. } => *scrutinee = f(*scrutinee),
            TermOp::Return { value: Some(v) } => *v = f(*v),
            _ => {}
        }
    }
}

/// A non-terminator instruction with its provenance tag and optional span.
/// Spans are metadata: structural equality ignores them.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Instr {
    pub op: Op,
    pub tag: Tag,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub span: Option<Span>,
}

impl Instr {
    pub fn new(op: Op) -> Self {
        Instr { op, tag: Tag::Original, span: None }
    }

    pub fn tagged(op: Op, tag: Tag) -> Self {
        Instr { op, tag, span: None }
    }
}

impl PartialEq for Instr {
    fn eq(&self, other: &Self) -> bool {
        self.op == other.op && self.tag == other.tag
    }
}
impl Eq for Instr {}

/// A terminator instruction with tag and optional span.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Term {
    pub op: TermOp,
    pub tag: Tag,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub span: Option<Span>,
}

impl Term {
    pub fn new(op: TermOp) -> Self {
        Term { op, tag: Tag::Original, span: None }
    }

    pub fn tagged(op: TermOp, tag: Tag) -> Self {
        Term { op, tag, span: None }
    }
}

impl PartialEq for Term {
    fn eq(&self, other: &Self) -> bool {
        self.op == other.op && self.tag == other.tag
    }
}
impl Eq for Term {}

/// A maximal straight-line instruction sequence plus one terminator.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BasicBlock {
    pub id: BlockId,
    pub instrs: Vec<Instr>,
    pub term: Term,
}

impl BasicBlock {
    pub fn new(id: BlockId, term: TermOp) -> Self {
        BasicBlock { id, instrs: Vec::new(), term: Term::new(term) }
    }
}

/// Trap kinds. `User` traps carry the code of the `throw` that raised them;
/// built-in faults carry fixed negative codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TrapKind {
    NullAccess,
    IndexOutOfBounds,
    DivByZero,
    User,
}

impl TrapKind {
    pub fn text(self) -> &'static str {
        match self {
            TrapKind::NullAccess => "null",
            TrapKind::IndexOutOfBounds => "oob",
            TrapKind::DivByZero => "div0",
            TrapKind::User => "user",
        }
    }

    /// Code a built-in fault delivers to a handler.
    pub fn builtin_code(self) -> i64 {
        match self {
            TrapKind::NullAccess => -1,
            TrapKind::IndexOutOfBounds => -2,
            TrapKind::DivByZero => -3,
            TrapKind::User => 0,
        }
    }
}

/// One trap-table row: an instruction range of a block mapped to a handler.
/// `instr_end` may exceed the instruction count by one to cover the
/// terminator. When a covered instruction faults with a matching kind, the
/// trap code is written to `code_reg` (when present) and control transfers
/// to `handler`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrapEntry {
    pub block: BlockId,
    pub instr_start: usize,
    pub instr_end: usize,
    pub handler: BlockId,
    pub kinds: BTreeSet<TrapKind>,
    pub code_reg: Option<Reg>,
}

/// A function: typed register pool, parameter prefix, blocks, trap table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Function {
    pub name: String,
    /// The first `param_count` registers are the parameters.
    pub param_count: usize,
    pub regs: Vec<RegType>,
    pub ret: Option<RegType>,
    pub blocks: Vec<BasicBlock>,
    pub entry_block: BlockId,
    pub trap_table: Vec<TrapEntry>,
}

impl Function {
    pub fn new(name: impl Into<String>) -> Self {
        Function {
            name: name.into(),
            param_count: 0,
            regs: Vec::new(),
            ret: None,
            blocks: Vec::new(),
            entry_block: BlockId(0),
            trap_table: Vec::new(),
        }
    }

    pub fn add_reg(&mut self, ty: RegType) -> Reg {
        self.regs.push(ty);
        Reg((self.regs.len() - 1) as u32)
    }

    pub fn reg_type(&self, r: Reg) -> RegType {
        self.regs[r.0 as usize]
    }

    pub fn params(&self) -> &[RegType] {
        &self.regs[..self.param_count]
    }

    /// A block id not used by any current block.
    pub fn fresh_block_id(&self) -> BlockId {
        BlockId(self.blocks.iter().map(|b| b.id.0 + 1).max().unwrap_or(0))
    }

    pub fn block(&self, id: BlockId) -> &BasicBlock {
        self.blocks
            .iter()
            .find(|b| b.id == id)
            .unwrap_or_else(|| panic!("unknown block {} in {}", id, self.name))
    }

    pub fn block_mut(&mut self, id: BlockId) -> &mut BasicBlock {
        let name = self.name.clone();
        self.blocks
            .iter_mut()
            .find(|b| b.id == id)
            .unwrap_or_else(|| panic!("unknown block {} in {}", id, name))
    }

    pub fn has_block(&self, id: BlockId) -> bool {
        self.blocks.iter().any(|b| b.id == id)
    }

    /// Successors of a block via normal edges, in terminator order with
    /// duplicates removed.
    pub fn successors(&self, id: BlockId) -> Vec<BlockId> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for t in self.block(id).term.op.targets() {
            if seen.insert(t) {
                out.push(t);
            }
        }
        out
    }

    /// Predecessor map over normal edges.
    pub fn predecessors(&self) -> BTreeMap<BlockId, Vec<BlockId>> {
        let mut preds: BTreeMap<BlockId, Vec<BlockId>> = BTreeMap::new();
        for b in &self.blocks {
            preds.entry(b.id).or_default();
        }
        for b in &self.blocks {
            for s in self.successors(b.id) {
                preds.entry(s).or_default().push(b.id);
            }
        }
        preds
    }

    /// Blocks reachable from entry via normal edges.
    pub fn reachable(&self) -> BTreeSet<BlockId> {
        let mut seen = BTreeSet::new();
        let mut stack = vec![self.entry_block];
        while let Some(b) = stack.pop() {
            if !seen.insert(b) || !self.has_block(b) {
                continue;
            }
            for s in self.successors(b) {
                if !seen.contains(&s) {
                    stack.push(s);
                }
            }
        }
        seen
    }
}

/// A whole program. Function order is significant: reordering passes permute
/// it observably, and the text emitter prints functions in list order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Program {
    pub functions: Vec<Function>,
    /// Name of the entry function, normally `main`.
    pub entry: String,
}

impl Program {
    pub fn function(&self, name: &str) -> Option<&Function> {
        self.functions.iter().find(|f| f.name == name)
    }

    pub fn function_mut(&mut self, name: &str) -> Option<&mut Function> {
        self.functions.iter_mut().find(|f| f.name == name)
    }

    pub fn entry_function(&self) -> &Function {
        self.function(&self.entry).expect("entry function missing")
    }
}

/// Structural equality: same functions in the same order, same blocks,
/// instructions, tags, and trap tables. Spans are ignored (PartialEq on
/// `Instr`/`Term` already skips them).
pub fn structurally_equal(a: &Program, b: &Program) -> bool {
    a == b
}
