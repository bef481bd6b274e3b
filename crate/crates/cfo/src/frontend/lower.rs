//! AST-to-IR lowering. Total on checked units: every failure mode is caught
//! by parse/sema beforehand. Structured constructs compile to blocks with
//! explicit terminators; try-catch compiles to full-block trap-table entries;
//! `for` desugars to the while shape with a dedicated step block.

use super::ast::{self, AssignTarget, Block, CatchKinds, Expr, ExprKind, SourceUnit, Stmt};
use crate::diag::Span;
use crate::ir::{
    BasicBlock, BinOp, BlockId, Function, Instr, Intrinsic, Op, Program, Reg, RegType, Term,
    TermOp, TrapEntry, TrapKind, UnOp,
};
use std::collections::BTreeMap;

fn reg_ty(t: ast::Type) -> RegType {
    match t {
        ast::Type::Int => RegType::Int,
        ast::Type::Bool => RegType::Bool,
        ast::Type::IntArray => RegType::Arr,
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Flow {
    Continues,
    Terminated,
}

struct LoopCtx {
    brk: BlockId,
    cont: Option<BlockId>,
}

struct FnLowerer {
    f: Function,
    finished: BTreeMap<BlockId, BasicBlock>,
    order: Vec<BlockId>,
    next_block: u32,
    cur: Option<(BlockId, Vec<Instr>)>,
    cur_span: Option<Span>,
    scopes: Vec<BTreeMap<String, Reg>>,
    loops: Vec<LoopCtx>,
}

impl FnLowerer {
    fn alloc_block(&mut self) -> BlockId {
        let id = BlockId(self.next_block);
        self.next_block += 1;
        self.order.push(id);
        id
    }

    fn ensure_join(&mut self, join: &mut Option<BlockId>) -> BlockId {
        match join {
            Some(j) => *j,
            None => {
                let id = self.alloc_block();
                *join = Some(id);
                id
            }
        }
    }

    fn open(&mut self, id: BlockId) {
        debug_assert!(self.cur.is_none());
        self.cur = Some((id, Vec::new()));
    }

    fn emit(&mut self, op: Op) {
        let span = self.cur_span;
        let (_, instrs) = self.cur.as_mut().expect("open block");
        instrs.push(Instr { op, tag: Default::default(), span });
    }

    fn finish(&mut self, term: TermOp) {
        let (id, instrs) = self.cur.take().expect("open block");
        let span = self.cur_span;
        self.finished.insert(id, BasicBlock { id, instrs, term: Term { op: term, tag: Default::default(), span } });
    }

    fn temp(&mut self, ty: RegType) -> Reg {
        self.f.add_reg(ty)
    }

    fn declare(&mut self, name: &str, reg: Reg) {
        self.scopes.last_mut().unwrap().insert(name.to_string(), reg);
    }

    fn lookup(&self, name: &str) -> Reg {
        self.scopes
            .iter()
            .rev()
            .find_map(|s| s.get(name).copied())
            .expect("checked identifier")
    }

    fn lower_block(&mut self, b: &Block) -> Flow {
        self.scopes.push(BTreeMap::new());
        let mut flow = Flow::Continues;
        for s in &b.stmts {
            flow = self.lower_stmt(s);
            if flow == Flow::Terminated {
                // Anything after a terminating statement is unreachable and
                // dropped, mirroring the reachability rules of the checker.
                break;
            }
        }
        self.scopes.pop();
        flow
    }

    fn lower_stmt(&mut self, s: &Stmt) -> Flow {
        self.cur_span = Some(s.span());
        match s {
            Stmt::VarDecl { name, ty, init, .. } => {
                let r = self.temp(reg_ty(*ty));
                self.lower_expr_into(r, init);
                self.declare(name, r);
                Flow::Continues
            }
            Stmt::Assign { target, value, .. } => {
                match target {
                    AssignTarget::Var(name) => {
                        let r = self.lookup(name);
                        self.lower_expr_into(r, value);
                    }
                    AssignTarget::Index { arr, idx } => {
                        let a = self.lookup(arr);
                        let i = self.lower_expr(idx);
                        let v = self.lower_expr(value);
                        self.emit(Op::ArrayStore { arr: a, idx: i, val: v });
                    }
                }
                Flow::Continues
            }
            Stmt::If { cond, then_branch, else_branch, .. } => {
                let c = self.lower_expr(cond);
                let then_id = self.alloc_block();
                let mut join: Option<BlockId> = None;
                let else_id = match else_branch {
                    Some(_) => self.alloc_block(),
                    None => {
                        let j = self.alloc_block();
                        join = Some(j);
                        j
                    }
                };
                self.finish(TermOp::CondBranch { pred: c, then_target: then_id, else_target: else_id });

                self.open(then_id);
                let then_flow = self.lower_block(then_branch);
                if then_flow == Flow::Continues {
                    let j = self.ensure_join(&mut join);
                    self.finish(TermOp::Jump { target: j });
                }

                let mut else_flow = Flow::Continues;
                if let Some(eb) = else_branch {
                    self.open(else_id);
                    else_flow = self.lower_block(eb);
                    if else_flow == Flow::Continues {
                        let j = self.ensure_join(&mut join);
                        self.finish(TermOp::Jump { target: j });
                    }
                }

                match join {
                    Some(j) => {
                        self.open(j);
                        Flow::Continues
                    }
                    None => {
                        debug_assert!(then_flow == Flow::Terminated && else_flow == Flow::Terminated);
                        Flow::Terminated
                    }
                }
            }
            Stmt::While { cond, body, .. } => {
                let header = self.alloc_block();
                self.finish(TermOp::Jump { target: header });
                self.open(header);
                let c = self.lower_expr(cond);
                let body_id = self.alloc_block();
                let exit = self.alloc_block();
                self.finish(TermOp::CondBranch { pred: c, then_target: body_id, else_target: exit });

                self.open(body_id);
                self.loops.push(LoopCtx { brk: exit, cont: Some(header) });
                let body_flow = self.lower_block(body);
                self.loops.pop();
                if body_flow == Flow::Continues {
                    self.finish(TermOp::Jump { target: header });
                }
                self.open(exit);
                Flow::Continues
            }
            Stmt::For { init, cond, step, body, span } => {
                self.scopes.push(BTreeMap::new());
                if let Some(i) = init {
                    self.lower_stmt(i);
                }
                self.cur_span = Some(*span);
                let header = self.alloc_block();
                self.finish(TermOp::Jump { target: header });
                self.open(header);
                let c = match cond {
                    Some(c) => self.lower_expr(c),
                    None => {
                        let t = self.temp(RegType::Bool);
                        self.emit(Op::Const { dst: t, value: 1 });
                        t
                    }
                };
                let body_id = self.alloc_block();
                let exit = self.alloc_block();
                self.finish(TermOp::CondBranch { pred: c, then_target: body_id, else_target: exit });

                let (step_id, cont_target) = match step {
                    Some(_) => {
                        let s = self.alloc_block();
                        (Some(s), s)
                    }
                    None => (None, header),
                };

                self.open(body_id);
                self.loops.push(LoopCtx { brk: exit, cont: Some(cont_target) });
                let body_flow = self.lower_block(body);
                self.loops.pop();
                if body_flow == Flow::Continues {
                    self.finish(TermOp::Jump { target: cont_target });
                }
                if let Some(sid) = step_id {
                    self.open(sid);
                    self.lower_stmt(step.as_ref().unwrap());
                    self.finish(TermOp::Jump { target: header });
                }
                self.open(exit);
                self.scopes.pop();
                Flow::Continues
            }
            Stmt::Switch { scrutinee, cases, default, .. } => {
                let v = self.lower_expr(scrutinee);
                let case_ids: Vec<BlockId> = cases.iter().map(|_| self.alloc_block()).collect();
                let mut join: Option<BlockId> = None;
                let default_id = match default {
                    Some(_) => self.alloc_block(),
                    None => {
                        let j = self.alloc_block();
                        join = Some(j);
                        j
                    }
                };
                let case_map: Vec<(i64, BlockId)> =
                    cases.iter().map(|(v, _)| *v).zip(case_ids.iter().copied()).collect();
                self.finish(TermOp::Switch { scrutinee: v, cases: case_map, default: default_id });

                let mut any_flows = false;
                for ((_, body), id) in cases.iter().zip(case_ids.iter()) {
                    self.open(*id);
                    let j_pre = join;
                    self.loops.push(LoopCtx {
                        brk: *j_pre.get_or_insert_with(|| {
                            let id = BlockId(self.next_block);
                            self.next_block += 1;
                            self.order.push(id);
                            id
                        }),
                        cont: None,
                    });
                    join = j_pre;
                    let flow = self.lower_block(body);
                    self.loops.pop();
                    if flow == Flow::Continues {
                        let j = join.expect("join allocated for break target");
                        self.finish(TermOp::Jump { target: j });
                        any_flows = true;
                    } else {
                        any_flows = true; // break inside jumps to join too
                    }
                }
                if let Some(d) = default {
                    self.open(default_id);
                    let j_pre = join;
                    self.loops.push(LoopCtx {
                        brk: *j_pre.clone().get_or_insert_with(|| {
                            let id = BlockId(self.next_block);
                            self.next_block += 1;
                            self.order.push(id);
                            id
                        }),
                        cont: None,
                    });
                    join = self.loops.last().map(|l| Some(l.brk)).unwrap_or(j_pre);
                    let flow = self.lower_block(d);
                    self.loops.pop();
                    if flow == Flow::Continues {
                        let j = join.expect("join allocated");
                        self.finish(TermOp::Jump { target: j });
                    }
                }
                match join {
                    Some(j) => {
                        self.open(j);
                        Flow::Continues
                    }
                    None => Flow::Terminated,
                }
            }
            Stmt::Break { .. } => {
                let target = self.loops.last().expect("checked break").brk;
                self.finish(TermOp::Jump { target });
                Flow::Terminated
            }
            Stmt::Continue { .. } => {
                let target = self
                    .loops
                    .iter()
                    .rev()
                    .find_map(|l| l.cont)
                    .expect("checked continue");
                self.finish(TermOp::Jump { target });
                Flow::Terminated
            }
            Stmt::Return { value, .. } => {
                let v = value.as_ref().map(|e| self.lower_expr(e));
                self.finish(TermOp::Return { value: v });
                Flow::Terminated
            }
            Stmt::Throw { code, .. } => {
                self.finish(TermOp::Throw { code: *code });
                Flow::Terminated
            }
            Stmt::TryCatch { body, kinds, binder, handler, .. } => {
                let body_id = self.alloc_block();
                self.finish(TermOp::Jump { target: body_id
                });
                let region_start = self.order.len() - 1;
                self.open(body_id);
                let body_flow = self.lower_block(body);
                let mut join: Option<BlockId> = None;
                if body_flow == Flow::Continues {
                    let j = self.alloc_block();
                    join = Some(j);
                    self.finish(TermOp::Jump { target: j });
                }
                let region_end = match join {
                    Some(_) => self.order.len() - 1,
                    None => self.order.len(),
                };
                let region: Vec<BlockId> = self.order[region_start..region_end].to_vec();

                let handler_id = self.alloc_block();
                let code_reg = self.temp(RegType::Int);
                self.open(handler_id);
                self.scopes.push(BTreeMap::new());
                if let Some(b) = binder {
                    self.declare(b, code_reg);
                }
                let mut handler_flow = Flow::Continues;
                for st in &handler.stmts {
                    handler_flow = self.lower_stmt(st);
                    if handler_flow == Flow::Terminated {
                        break;
                    }
                }
                self.scopes.pop();
                if handler_flow == Flow::Continues {
                    let j = *join.get_or_insert_with(|| {
                        let id = BlockId(self.next_block);
                        self.next_block += 1;
                        self.order.push(id);
                        id
                    });
                    self.finish(TermOp::Jump { target: j });
                }

                let kind_set: std::collections::BTreeSet<TrapKind> = match kinds {
                    CatchKinds::All => [
                        TrapKind::NullAccess,
                        TrapKind::IndexOutOfBounds,
                        TrapKind::DivByZero,
                        TrapKind::User,
                    ]
                    .into_iter()
                    .collect(),
                    CatchKinds::Kinds(v) => v.iter().copied().collect(),
                };
                for id in region {
                    let len = self.finished[&id].instrs.len();
                    self.f.trap_table.push(TrapEntry {
                        block: id,
                        instr_start: 0,
                        instr_end: len + 1,
                        handler: handler_id,
                        kinds: kind_set.clone(),
                        code_reg: Some(code_reg),
                    });
                }

                match join {
                    Some(j) => {
                        self.open(j);
                        Flow::Continues
                    }
                    None => Flow::Terminated,
                }
            }
            Stmt::ExprStmt { expr, .. } => {
                self.lower_call_stmt(expr);
                Flow::Continues
            }
            Stmt::Nested { block, .. } => self.lower_block(block),
        }
    }

    fn lower_call_stmt(&mut self, e: &Expr) {
        if let ExprKind::Call { name, args } = &e.kind {
            match name.as_str() {
                "print" => {
                    let a = self.lower_expr(&args[0]);
                    self.emit(Op::Intrinsic { kind: Intrinsic::Print, dst: None, args: vec![a] });
                }
                "print_str" => {
                    let s = match &args[0].kind {
                        ExprKind::StrLit(s) => s.clone(),
                        _ => unreachable!("checked print_str argument"),
                    };
                    self.emit(Op::Intrinsic { kind: Intrinsic::PrintStr(s), dst: None, args: vec![] });
                }
                "len" | "min" => {
                    let _ = self.lower_expr(e);
                }
                _ => {
                    let argv: Vec<Reg> = args.iter().map(|a| self.lower_expr(a)).collect();
                    self.emit(Op::Call { dst: None, func: name.clone(), args: argv });
                }
            }
        }
    }

    /// Lowers `e` into a register: variables are read in place, everything
    /// else lands in a fresh temporary.
    fn lower_expr(&mut self, e: &Expr) -> Reg {
        if let ExprKind::Var(name) = &e.kind {
            return self.lookup(name);
        }
        let ty = self.expr_reg_type(e);
        let dst = self.temp(ty);
        self.lower_expr_into(dst, e);
        dst
    }

    fn expr_reg_type(&self, e: &Expr) -> RegType {
        match &e.kind {
            ExprKind::IntLit(_) => RegType::Int,
            ExprKind::BoolLit(_) => RegType::Bool,
            ExprKind::NullLit | ExprKind::ArrayLit(_) | ExprKind::NewArray(_) => RegType::Arr,
            ExprKind::StrLit(_) => unreachable!("checked string position"),
            ExprKind::Var(name) => self.f.reg_type(self.lookup(name)),
            ExprKind::Index { .. } => RegType::Int,
            ExprKind::Call { name, .. } => match name.as_str() {
                "len" | "min" => RegType::Int,
                "print" | "print_str" => unreachable!("void call in value position"),
                _ => RegType::Int, // patched by caller via sig table below
            },
            ExprKind::Unary { op, .. } => match op {
                ast::UnaryOp::Neg => RegType::Int,
                ast::UnaryOp::Not => RegType::Bool,
            },
            ExprKind::Binary { op, lhs, .. } => {
                use ast::BinaryOp::*;
                match op {
                    Add | Sub | Mul | Div | Rem => RegType::Int,
                    And | Or => RegType::Bool,
                    Xor => self.expr_reg_type(lhs),
                    Eq | Ne | Lt | Le | Gt | Ge => RegType::Bool,
                }
            }
        }
    }

    fn lower_expr_into(&mut self, dst: Reg, e: &Expr) {
        match &e.kind {
            ExprKind::IntLit(v) => self.emit(Op::Const { dst, value: *v }),
            ExprKind::BoolLit(b) => self.emit(Op::Const { dst, value: *b as i64 }),
            ExprKind::NullLit => self.emit(Op::ConstNull { dst }),
            ExprKind::StrLit(_) => unreachable!("checked string position"),
            ExprKind::Var(name) => {
                let src = self.lookup(name);
                self.emit(Op::Move { dst, src });
            }
            ExprKind::ArrayLit(elems) => {
                let n = self.temp(RegType::Int);
                self.emit(Op::Const { dst: n, value: elems.len() as i64 });
                self.emit(Op::ArrayNew { dst, len: n });
                for (i, el) in elems.iter().enumerate() {
                    let iv = self.temp(RegType::Int);
                    self.emit(Op::Const { dst: iv, value: i as i64 });
                    let v = self.lower_expr(el);
                    self.emit(Op::ArrayStore { arr: dst, idx: iv, val: v });
                }
            }
            ExprKind::NewArray(len) => {
                let l = self.lower_expr(len);
                self.emit(Op::ArrayNew { dst, len: l });
            }
            ExprKind::Index { arr, idx } => {
                let a = self.lower_expr(arr);
                let i = self.lower_expr(idx);
                self.emit(Op::ArrayLoad { dst, arr: a, idx: i });
            }
            ExprKind::Call { name, args } => match name.as_str() {
                "len" => {
                    let a = self.lower_expr(&args[0]);
                    self.emit(Op::Len { dst, arr: a });
                }
                "min" => {
                    let a = self.lower_expr(&args[0]);
                    let b = self.lower_expr(&args[1]);
                    self.emit(Op::Intrinsic { kind: Intrinsic::Min, dst: Some(dst), args: vec![a, b] });
                }
                _ => {
                    let argv: Vec<Reg> = args.iter().map(|a| self.lower_expr(a)).collect();
                    self.emit(Op::Call { dst: Some(dst), func: name.clone(), args: argv });
                }
            },
            ExprKind::Unary { op, expr } => {
                // Null comparisons arrive as Unary via the Binary case below.
                let s = self.lower_expr(expr);
                let un = match op {
                    ast::UnaryOp::Neg => UnOp::Neg,
                    ast::UnaryOp::Not => UnOp::Not,
                };
                self.emit(Op::Un { op: un, dst, src: s });
            }
            ExprKind::Binary { op, lhs, rhs } => {
                use ast::BinaryOp::*;
                // Array null comparisons lower to isnull.
                let null_cmp = matches!(op, Eq | Ne)
                    && (matches!(lhs.kind, ExprKind::NullLit) || matches!(rhs.kind, ExprKind::NullLit));
                if null_cmp {
                    let arr_side = if matches!(lhs.kind, ExprKind::NullLit) { rhs } else { lhs };
                    if matches!(arr_side.kind, ExprKind::NullLit) {
                        // null == null
                        self.emit(Op::Const { dst, value: (*op == Eq) as i64 });
                        return;
                    }
                    let a = self.lower_expr(arr_side);
                    match op {
                        Eq => self.emit(Op::Un { op: UnOp::IsNull, dst, src: a }),
                        Ne => {
                            let t = self.temp(RegType::Bool);
                            self.emit(Op::Un { op: UnOp::IsNull, dst: t, src: a });
                            self.emit(Op::Un { op: UnOp::Not, dst, src: t });
                        }
                        _ => unreachable!(),
                    }
                    return;
                }
                let a = self.lower_expr(lhs);
                let b = self.lower_expr(rhs);
                let bin = match op {
                    Add => BinOp::Add,
                    Sub => BinOp::Sub,
                    Mul => BinOp::Mul,
                    Div => BinOp::Div,
                    Rem => BinOp::Rem,
                    And => BinOp::And,
                    Or => BinOp::Or,
                    Xor => BinOp::Xor,
                    Eq => BinOp::Eq,
                    Ne => BinOp::Ne,
                    Lt => BinOp::Lt,
                    Le => BinOp::Le,
                    Gt => BinOp::Gt,
                    Ge => BinOp::Ge,
                };
                self.emit(Op::Bin { op: bin, dst, lhs: a, rhs: b });
            }
        }
    }
}

/// Lowers a checked unit into IR. Deterministic: identical source yields
/// bit-identical IR text.
pub fn lower(unit: &SourceUnit) -> Program {
    let mut functions = Vec::new();
    for decl in &unit.functions {
        let mut f = Function::new(decl.name.clone());
        for p in &decl.params {
            f.add_reg(reg_ty(p.ty));
        }
        f.param_count = decl.params.len();
        f.ret = decl.ret.map(reg_ty);

        let mut lw = FnLowerer {
            f,
            finished: BTreeMap::new(),
            order: Vec::new(),
            next_block: 0,
            cur: None,
            cur_span: None,
            scopes: vec![BTreeMap::new()],
            loops: Vec::new(),
        };
        for (i, p) in decl.params.iter().enumerate() {
            lw.declare(&p.name, Reg(i as u32));
        }
        let entry = lw.alloc_block();
        lw.open(entry);
        let flow = lw.lower_block(&decl.body);
        if flow == Flow::Continues {
            // Implicit default return.
            let term = match lw.f.ret {
                None => TermOp::Return { value: None },
                Some(RegType::Arr) => {
                    let r = lw.temp(RegType::Arr);
                    lw.emit(Op::ConstNull { dst: r });
                    TermOp::Return { value: Some(r) }
                }
                Some(t) => {
                    let r = lw.temp(t);
                    lw.emit(Op::Const { dst: r, value: 0 });
                    TermOp::Return { value: Some(r) }
                }
            };
            lw.finish(term);
        }

        let mut func = lw.f;
        func.entry_block = entry;
        func.blocks = lw
            .order
            .iter()
            .map(|id| lw.finished.remove(id).expect("all blocks finished"))
            .collect();
        functions.push(func);
    }
    Program { functions, entry: "main".to_string() }
}
