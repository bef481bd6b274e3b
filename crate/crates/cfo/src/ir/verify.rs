//! IR well-formedness checks. Every pass output must verify cleanly; the
//! pass engine enforces this as a fixpoint guard.

use super::*;
use crate::diag::Diagnostic;

fn diag(fun: &str, block: Option<BlockId>, rule: &str, detail: String) -> Diagnostic {
    let loc = match block {
        Some(b) => format!("{}/{}", fun, b),
        None => fun.to_string(),
    };
    Diagnostic::bare(format!("{loc}: {rule}: {detail}"))
}

/// Returns an empty list iff all IR invariants hold. Each diagnostic names
/// the function, block, and violated rule.
pub fn verify(program: &Program) -> Vec<Diagnostic> {
    let mut out = Vec::new();

    let mut names = BTreeSet::new();
    for f in &program.functions {
        if !names.insert(f.name.clone()) {
            out.push(diag(&f.name, None, "unique function names", "duplicate definition".into()));
        }
    }
    if program.function(&program.entry).is_none() {
        out.push(diag(&program.entry, None, "entry exists", "entry function not defined".into()));
    }

    for f in &program.functions {
        verify_function(program, f, &mut out);
    }
    out
}

fn reg_ok(f: &Function, r: Reg) -> bool {
    (r.0 as usize) < f.regs.len()
}

fn verify_function(program: &Program, f: &Function, out: &mut Vec<Diagnostic>) {
    if f.param_count > f.regs.len() {
        out.push(diag(&f.name, None, "param prefix", "param_count exceeds register pool".into()));
    }
    if !f.has_block(f.entry_block) {
        out.push(diag(&f.name, None, "entry block exists", format!("{} missing", f.entry_block)));
        return;
    }

    let mut ids = BTreeSet::new();
    for b in &f.blocks {
        if !ids.insert(b.id) {
            out.push(diag(&f.name, Some(b.id), "unique block ids", "duplicate id".into()));
        }
    }

    // Entry must have no predecessors via normal edges.
    for b in &f.blocks {
        for t in b.term.op.targets() {
            if t == f.entry_block {
                out.push(diag(
                    &f.name,
                    Some(b.id),
                    "entry has no predecessors",
                    format!("branch to entry {}", t),
                ));
            }
        }
    }

    for b in &f.blocks {
        for (i, ins) in b.instrs.iter().enumerate() {
            for r in ins.op.reads() {
                if !reg_ok(f, r) {
                    out.push(diag(&f.name, Some(b.id), "register in range", format!("instr {i} reads {r}")));
                }
            }
            if let Some(d) = ins.op.def() {
                if !reg_ok(f, d) {
                    out.push(diag(&f.name, Some(b.id), "register in range", format!("instr {i} defines {d}")));
                }
            }
            match &ins.op {
                Op::Call { func, args, dst } => match program.function(func) {
                    None => out.push(diag(&f.name, Some(b.id), "call target exists", format!("instr {i} calls {func}"))),
                    Some(callee) => {
                        if callee.param_count != args.len() {
                            out.push(diag(
                                &f.name,
                                Some(b.id),
                                "call arity",
                                format!("instr {i}: {} expects {} args, got {}", func, callee.param_count, args.len()),
                            ));
                        }
                        if dst.is_some() && callee.ret.is_none() {
                            out.push(diag(&f.name, Some(b.id), "call arity", format!("instr {i}: {} returns nothing", func)));
                        }
                    }
                },
                Op::Intrinsic { kind, dst, args } => {
                    let (nargs, has_dst) = match kind {
                        Intrinsic::Print => (1, false),
                        Intrinsic::PrintStr(_) => (0, false),
                        Intrinsic::Min => (2, true),
                    };
                    if args.len() != nargs || (dst.is_some() && !has_dst) {
                        out.push(diag(&f.name, Some(b.id), "intrinsic arity", format!("instr {i}")));
                    }
                }
                Op::Bin { op, dst, .. } => {
                    if reg_ok(f, *dst) {
                        let want = if op.is_comparison() { RegType::Bool } else { f.reg_type(*dst) };
                        if op.is_comparison() && f.reg_type(*dst) != want {
                            out.push(diag(&f.name, Some(b.id), "comparison dst is bool", format!("instr {i}")));
                        }
                    }
                }
                Op::Un { op: UnOp::IsNull, dst, src } => {
                    if reg_ok(f, *dst) && f.reg_type(*dst) != RegType::Bool {
                        out.push(diag(&f.name, Some(b.id), "isnull dst is bool", format!("instr {i}")));
                    }
                    if reg_ok(f, *src) && f.reg_type(*src) != RegType::Arr {
                        out.push(diag(&f.name, Some(b.id), "isnull src is array", format!("instr {i}")));
                    }
                }
                Op::ArrayLoad { arr, .. } | Op::ArrayStore { arr, .. } | Op::Len { arr, .. } => {
                    if reg_ok(f, *arr) && f.reg_type(*arr) != RegType::Arr {
                        out.push(diag(&f.name, Some(b.id), "array operand", format!("instr {i}: {arr} not array-typed")));
                    }
                }
                Op::ConstNull { dst } => {
                    if reg_ok(f, *dst) && f.reg_type(*dst) != RegType::Arr {
                        out.push(diag(&f.name, Some(b.id), "null is array-typed", format!("instr {i}")));
                    }
                }
                _ => {}
            }
        }

        for r in b.term.op.reads() {
            if !reg_ok(f, r) {
                out.push(diag(&f.name, Some(b.id), "register in range", format!("terminator reads {r}")));
            }
        }
        match &b.term.op {
            TermOp::CondBranch { pred, .. } => {
                if reg_ok(f, *pred) && f.reg_type(*pred) != RegType::Bool {
                    out.push(diag(&f.name, Some(b.id), "branch predicate is bool", format!("{pred}")));
                }
            }
            TermOp::Switch { scrutinee, cases, .. } => {
                if reg_ok(f, *scrutinee) && f.reg_type(*scrutinee) != RegType::Int {
                    out.push(diag(&f.name, Some(b.id), "switch scrutinee is int", format!("{scrutinee}")));
                }
                let mut labels = BTreeSet::new();
                for (v, _) in cases {
                    if !labels.insert(*v) {
                        out.push(diag(&f.name, Some(b.id), "switch labels distinct", format!("label {v}")));
                    }
                }
            }
            TermOp::Return { value } => {
                match (value, f.ret) {
                    (Some(_), None) => out.push(diag(&f.name, Some(b.id), "return arity", "value returned from void function".into())),
                    (None, Some(_)) => out.push(diag(&f.name, Some(b.id), "return arity", "missing return value".into())),
                    _ => {}
                }
            }
            _ => {}
        }
        for t in b.term.op.targets() {
            if !f.has_block(t) {
                out.push(diag(&f.name, Some(b.id), "dangling target", format!("{t}")));
            }
        }
    }

    for (i, e) in f.trap_table.iter().enumerate() {
        if !f.has_block(e.block) {
            out.push(diag(&f.name, Some(e.block), "trap block exists", format!("entry {i}")));
            continue;
        }
        if !f.has_block(e.handler) {
            out.push(diag(&f.name, Some(e.block), "trap handler exists", format!("entry {i}: {}", e.handler)));
        }
        let count = f.block(e.block).instrs.len();
        if !(e.instr_start < e.instr_end && e.instr_end <= count + 1) {
            out.push(diag(
                &f.name,
                Some(e.block),
                "trap range",
                format!("entry {i}: [{}, {}) over {} instructions", e.instr_start, e.instr_end, count),
            ));
        }
        if e.kinds.is_empty() {
            out.push(diag(&f.name, Some(e.block), "trap kinds non-empty", format!("entry {i}")));
        }
        if let Some(r) = e.code_reg {
            if !reg_ok(f, r) || f.reg_type(r) != RegType::Int {
                out.push(diag(&f.name, Some(e.block), "trap code register is int", format!("entry {i}")));
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_block_fn() -> Function {
        let mut f = Function::new("f");
        f.ret = Some(RegType::Int);
        let r = f.add_reg(RegType::Int);
        let mut b = BasicBlock::new(BlockId(0), TermOp::Return { value: Some(r) });
        b.instrs.push(Instr::new(Op::Const { dst: r, value: 7 }));
        f.blocks.push(b);
        f
    }

    fn wrap(f: Function) -> Program {
        let name = f.name.clone();
        Program { functions: vec![f], entry: name }
    }

    #[test]
    fn clean_function_passes() {
        assert!(verify(&wrap(one_block_fn())).is_empty());
    }

    #[test]
    fn dangling_target_reported() {
        let mut f = one_block_fn();
        f.blocks[0].term = Term::new(TermOp::Jump { target: BlockId(9) });
        let diags = verify(&wrap(f));
        assert_eq!(diags.len(), 1);
        assert!(diags[0].message.contains("dangling target"));
    }

    #[test]
    fn branch_to_entry_reported() {
        let mut f = one_block_fn();
        let r = Reg(0);
        f.blocks[0].term = Term::new(TermOp::Jump { target: BlockId(1) });
        f.blocks.push(BasicBlock::new(BlockId(1), TermOp::Return { value: Some(r) }));
        f.blocks[1].term = Term::new(TermOp::Jump { target: BlockId(0) });
        let diags = verify(&wrap(f));
        assert!(diags.iter().any(|d| d.message.contains("entry has no predecessors")));
    }

    #[test]
    fn bad_trap_range_reported() {
        let mut f = one_block_fn();
        f.trap_table.push(TrapEntry {
            block: BlockId(0),
            instr_start: 0,
            instr_end: 5,
            handler: BlockId(0),
            kinds: [TrapKind::User].into_iter().collect(),
            code_reg: None,
        });
        let diags = verify(&wrap(f));
        assert!(diags.iter().any(|d| d.message.contains("trap range")));
    }
}
