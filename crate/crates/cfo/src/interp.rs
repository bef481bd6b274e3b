//! Reference interpreter: the semantic oracle for all differential testing.
//!
//! Execution is deterministic and fuel-bounded. Arithmetic wraps at 64 bits,
//! division and remainder are truncated and trap on zero, array faults trap
//! with their kind, and traps unwind to the innermost matching trap-table
//! entry (smallest covering range; table order breaks ties), propagating to
//! the caller's call site when a frame has no matching entry.

use crate::ir::{
    BasicBlock, BinOp, BlockId, Function, Instr, Intrinsic, Op, Program, RegType, TermOp,
    TrapKind, UnOp,
};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Default step budget. Obfuscation inflates step counts by small constant
/// factors; this covers the corpus with margin.
pub const DEFAULT_FUEL: u64 = 10_000_000;

/// Call depth bound; exceeding it is reported as fuel exhaustion.
const MAX_DEPTH: usize = 4096;

/// Largest array allocation, in elements. Bigger requests trap.
const MAX_ALLOC: i64 = 1 << 24;

/// Program input: the argument array of `main`, possibly null.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Input {
    Null,
    Array(Vec<i64>),
}

impl Input {
    pub fn parse_args(args: &[String]) -> Result<Input, String> {
        if args.len() == 1 && args[0] == "null" {
            return Ok(Input::Null);
        }
        let mut vals = Vec::new();
        for a in args {
            vals.push(a.parse::<i64>().map_err(|_| format!("not an integer: {a}"))?);
        }
        Ok(Input::Array(vals))
    }
}

/// One printed item.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum OutputItem {
    Int(i64),
    Str(String),
}

impl std::fmt::Display for OutputItem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            OutputItem::Int(v) => write!(f, "{v}"),
            OutputItem::Str(s) => write!(f, "{s}"),
        }
    }
}

/// How a run ended.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Outcome {
    Returned(i64),
    Trapped(TrapKind, i64),
    FuelExhausted,
}

/// Interpreter result: outcome, full output stream, steps executed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecutionResult {
    pub outcome: Outcome,
    pub output: Vec<OutputItem>,
    pub steps: u64,
}

impl ExecutionResult {
    /// The observable behavior compared by differential tests: outcome plus
    /// output, ignoring step counts.
    pub fn observable(&self) -> (&Outcome, &[OutputItem]) {
        (&self.outcome, &self.output)
    }
}

/// Per-instruction execution counts keyed by (function index, block,
/// instruction index). The terminator counts at index `instrs.len()`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CoverageMap {
    pub counts: BTreeMap<(usize, BlockId, usize), u64>,
}

impl CoverageMap {
    pub fn total(&self) -> u64 {
        self.counts.values().sum()
    }

    pub fn count(&self, fn_idx: usize, block: BlockId, idx: usize) -> u64 {
        self.counts.get(&(fn_idx, block, idx)).copied().unwrap_or(0)
    }

    pub fn merge(&mut self, other: &CoverageMap) {
        for (k, v) in &other.counts {
            *self.counts.entry(*k).or_insert(0) += v;
        }
    }
}

#[derive(Clone, Copy, Debug)]
enum Slot {
    Int(i64),
    Arr(Option<usize>),
}

impl Slot {
    fn int(self) -> i64 {
        match self {
            Slot::Int(v) => v,
            Slot::Arr(None) => 0,
            Slot::Arr(Some(_)) => 1,
        }
    }

    fn arr(self) -> Option<usize> {
        match self {
            Slot::Arr(h) => h,
            Slot::Int(_) => None,
        }
    }
}

struct Frame {
    fn_idx: usize,
    block: BlockId,
    ip: usize,
    regs: Vec<Slot>,
    dst: Option<crate::ir::Reg>,
}

struct Machine<'p> {
    program: &'p Program,
    heap: Vec<Vec<i64>>,
    output: Vec<OutputItem>,
    frames: Vec<Frame>,
    steps: u64,
    fuel: u64,
    coverage: Option<CoverageMap>,
}

enum StepFault {
    Trap(TrapKind, i64),
    DepthExceeded,
}

impl<'p> Machine<'p> {
    fn func(&self, idx: usize) -> &'p Function {
        &self.program.functions[idx]
    }

    fn new_frame(&self, fn_idx: usize, args: Vec<Slot>, dst: Option<crate::ir::Reg>) -> Frame {
        let f = self.func(fn_idx);
        let mut regs: Vec<Slot> = f
            .regs
            .iter()
            .map(|t| match t {
                RegType::Arr => Slot::Arr(None),
                _ => Slot::Int(0),
            })
            .collect();
        for (i, a) in args.into_iter().enumerate() {
            regs[i] = a;
        }
        Frame { fn_idx, block: f.entry_block, ip: 0, regs, dst }
    }

    fn record(&mut self, fn_idx: usize, block: BlockId, ip: usize) {
        self.steps += 1;
        if let Some(cov) = self.coverage.as_mut() {
            *cov.counts.entry((fn_idx, block, ip)).or_insert(0) += 1;
        }
    }

    fn run(&mut self) -> Outcome {
        loop {
            let (fn_idx, block, ip) = {
                let fr = self.frames.last().unwrap();
                (fr.fn_idx, fr.block, fr.ip)
            };
            if self.steps >= self.fuel {
                return Outcome::FuelExhausted;
            }
            self.record(fn_idx, block, ip);

            let f = self.func(fn_idx);
            let bb = f.block(block);
            if ip < bb.instrs.len() {
                match self.exec_instr(f, bb, ip) {
                    Ok(advanced) => {
                        if advanced {
                            self.frames.last_mut().unwrap().ip += 1;
                        }
                    }
                    Err(StepFault::DepthExceeded) => return Outcome::FuelExhausted,
                    Err(StepFault::Trap(kind, code)) => {
                        if let Some(out) = self.unwind(kind, code) {
                            return out;
                        }
                    }
                }
            } else {
                match self.exec_term(bb) {
                    Ok(Some(outcome)) => return outcome,
                    Ok(None) => {}
                    Err(StepFault::DepthExceeded) => return Outcome::FuelExhausted,
                    Err(StepFault::Trap(kind, code)) => {
                        if let Some(out) = self.unwind(kind, code) {
                            return out;
                        }
                    }
                }
            }
        }
    }

    /// Unwinds a trap raised at the top frame's current position. Returns the
    /// final outcome when no frame handles it.
    fn unwind(&mut self, kind: TrapKind, code: i64) -> Option<Outcome> {
        loop {
            let (fn_idx, block, ip) = {
                let fr = self.frames.last().unwrap();
                (fr.fn_idx, fr.block, fr.ip)
            };
            let f = self.func(fn_idx);
            // Innermost matching entry: smallest covering range, table order
            // breaking ties.
            let mut best: Option<(usize, usize)> = None; // (range len, table idx)
            for (i, e) in f.trap_table.iter().enumerate() {
                if e.block == block
                    && e.instr_start <= ip
                    && ip < e.instr_end
                    && e.kinds.contains(&kind)
                {
                    let len = e.instr_end - e.instr_start;
                    if best.map_or(true, |(bl, _)| len < bl) {
                        best = Some((len, i));
                    }
                }
            }
            if let Some((_, i)) = best {
                let e = &f.trap_table[i];
                let handler = e.handler;
                let code_reg = e.code_reg;
                let fr = self.frames.last_mut().unwrap();
                if let Some(r) = code_reg {
                    fr.regs[r.0 as usize] = Slot::Int(code);
                }
                fr.block = handler;
                fr.ip = 0;
                return None;
            }
            self.frames.pop();
            if self.frames.is_empty() {
                return Some(Outcome::Trapped(kind, code));
            }
            // The caller's ip still points at the call instruction; it is the
            // faulting position in that frame.
        }
    }

    fn load_array(&self, h: Option<usize>) -> Result<&Vec<i64>, StepFault> {
        match h {
            None => Err(StepFault::Trap(TrapKind::NullAccess, TrapKind::NullAccess.builtin_code())),
            Some(i) => Ok(&self.heap[i]),
        }
    }

    fn check_index(arr: &[i64], idx: i64) -> Result<usize, StepFault> {
        if idx < 0 || idx as usize >= arr.len() {
            Err(StepFault::Trap(
                TrapKind::IndexOutOfBounds,
                TrapKind::IndexOutOfBounds.builtin_code(),
            ))
        } else {
            Ok(idx as usize)
        }
    }

    /// Executes one instruction. Returns Ok(false) when a call pushed a new
    /// frame (the caller's ip must not advance yet).
    fn exec_instr(&mut self, f: &Function, bb: &BasicBlock, ip: usize) -> Result<bool, StepFault> {
        let ins: &Instr = &bb.instrs[ip];
        let get = |m: &Machine, r: crate::ir::Reg| m.frames.last().unwrap().regs[r.0 as usize];
        macro_rules! set {
            ($r:expr, $v:expr) => {
                self.frames.last_mut().unwrap().regs[$r.0 as usize] = $v
            };
        }
        match &ins.op {
            Op::Const { dst, value } => set!(dst, Slot::Int(*value)),
            Op::ConstNull { dst } => set!(dst, Slot::Arr(None)),
            Op::Move { dst, src } => {
                let v = get(self, *src);
                set!(dst, v);
            }
            Op::Un { op, dst, src } => {
                let v = get(self, *src);
                let out = match op {
                    UnOp::Neg => Slot::Int(v.int().wrapping_neg()),
                    UnOp::Not => Slot::Int((v.int() == 0) as i64),
                    UnOp::IsNull => Slot::Int(v.arr().is_none() as i64),
                };
                set!(dst, out);
            }
            Op::Bin { op, dst, lhs, rhs } => {
                let a = get(self, *lhs).int();
                let b = get(self, *rhs).int();
                let v = match op {
                    BinOp::Add => a.wrapping_add(b),
                    BinOp::Sub => a.wrapping_sub(b),
                    BinOp::Mul => a.wrapping_mul(b),
                    BinOp::Div => {
                        if b == 0 {
                            return Err(StepFault::Trap(
                                TrapKind::DivByZero,
                                TrapKind::DivByZero.builtin_code(),
                            ));
                        }
                        a.wrapping_div(b)
                    }
                    BinOp::Rem => {
                        if b == 0 {
                            return Err(StepFault::Trap(
                                TrapKind::DivByZero,
                                TrapKind::DivByZero.builtin_code(),
                            ));
                        }
                        a.wrapping_rem(b)
                    }
                    BinOp::And => a & b,
                    BinOp::Or => a | b,
                    BinOp::Xor => a ^ b,
                    BinOp::Eq => (a == b) as i64,
                    BinOp::Ne => (a != b) as i64,
                    BinOp::Lt => (a < b) as i64,
                    BinOp::Le => (a <= b) as i64,
                    BinOp::Gt => (a > b) as i64,
                    BinOp::Ge => (a >= b) as i64,
                };
                set!(dst, Slot::Int(v));
            }
            Op::ArrayNew { dst, len } => {
                let n = get(self, *len).int();
                if n < 0 || n > MAX_ALLOC {
                    return Err(StepFault::Trap(
                        TrapKind::IndexOutOfBounds,
                        TrapKind::IndexOutOfBounds.builtin_code(),
                    ));
                }
                self.heap.push(vec![0; n as usize]);
                let h = self.heap.len() - 1;
                set!(dst, Slot::Arr(Some(h)));
            }
            Op::ArrayLoad { dst, arr, idx } => {
                let h = get(self, *arr).arr();
                let i = get(self, *idx).int();
                let a = self.load_array(h)?;
                let i = Self::check_index(a, i)?;
                let v = a[i];
                set!(dst, Slot::Int(v));
            }
            Op::ArrayStore { arr, idx, val } => {
                let h = get(self, *arr).arr();
                let i = get(self, *idx).int();
                let v = get(self, *val).int();
                let a = self.load_array(h)?;
                let i = Self::check_index(a, i)?;
                let hh = h.unwrap();
                self.heap[hh][i] = v;
            }
            Op::Len { dst, arr } => {
                let h = get(self, *arr).arr();
                let a = self.load_array(h)?;
                let n = a.len() as i64;
                set!(dst, Slot::Int(n));
            }
            Op::Call { dst, func, args } => {
                if self.frames.len() >= MAX_DEPTH {
                    // Reported as fuel exhaustion: deterministic, and skipped
                    // by differential tests like any other budget overrun.
                    return Err(StepFault::DepthExceeded);
                }
                let callee_idx = self
                    .program
                    .functions
                    .iter()
                    .position(|g| &g.name == func)
                    .expect("verified call target");
                let argv: Vec<Slot> = args.iter().map(|r| get(self, *r)).collect();
                let frame = self.new_frame(callee_idx, argv, *dst);
                self.frames.push(frame);
                return Ok(false);
            }
            Op::Intrinsic { kind, dst, args } => match kind {
                Intrinsic::Print => {
                    let v = get(self, args[0]).int();
                    self.output.push(OutputItem::Int(v));
                }
                Intrinsic::PrintStr(s) => {
                    self.output.push(OutputItem::Str(s.clone()));
                }
                Intrinsic::Min => {
                    let a = get(self, args[0]).int();
                    let b = get(self, args[1]).int();
                    set!(dst.expect("min has dst"), Slot::Int(a.min(b)));
                }
            },
        }
        Ok(true)
    }

    fn exec_term(&mut self, bb: &BasicBlock) -> Result<Option<Outcome>, StepFault> {
        let get = |m: &Machine, r: crate::ir::Reg| m.frames.last().unwrap().regs[r.0 as usize];
        match &bb.term.op {
            TermOp::Jump { target } => {
                let fr = self.frames.last_mut().unwrap();
                fr.block = *target;
                fr.ip = 0;
            }
            TermOp::CondBranch { pred, then_target, else_target } => {
                let p = get(self, *pred).int();
                let fr = self.frames.last_mut().unwrap();
                fr.block = if p != 0 { *then_target } else { *else_target };
                fr.ip = 0;
            }
            TermOp::Switch { scrutinee, cases, default } => {
                let v = get(self, *scrutinee).int();
                let target = cases
                    .iter()
                    .find(|(c, _)| *c == v)
                    .map(|(_, b)| *b)
                    .unwrap_or(*default);
                let fr = self.frames.last_mut().unwrap();
                fr.block = target;
                fr.ip = 0;
            }
            TermOp::Return { value } => {
                let v = value.map(|r| get(self, r));
                let done = self.frames.pop().unwrap();
                match self.frames.last_mut() {
                    None => {
                        let rv = v.map(|s| s.int()).unwrap_or(0);
                        return Ok(Some(Outcome::Returned(rv)));
                    }
                    Some(caller) => {
                        if let Some(d) = done.dst {
                            caller.regs[d.0 as usize] = v.unwrap_or(Slot::Int(0));
                        }
                        caller.ip += 1;
                    }
                }
            }
            TermOp::Throw { code } => {
                return Err(StepFault::Trap(TrapKind::User, *code));
            }
        }
        Ok(None)
    }
}

fn run_machine(program: &Program, input: &Input, fuel: u64, with_coverage: bool) -> (ExecutionResult, CoverageMap) {
    let entry_idx = program
        .functions
        .iter()
        .position(|f| f.name == program.entry)
        .expect("entry function exists");
    let mut m = Machine {
        program,
        heap: Vec::new(),
        output: Vec::new(),
        frames: Vec::new(),
        steps: 0,
        fuel,
        coverage: if with_coverage { Some(CoverageMap::default()) } else { None },
    };
    let arg = match input {
        Input::Null => Slot::Arr(None),
        Input::Array(vals) => {
            m.heap.push(vals.clone());
            Slot::Arr(Some(0))
        }
    };
    let args = if program.functions[entry_idx].param_count >= 1 { vec![arg] } else { vec![] };
    let frame = m.new_frame(entry_idx, args, None);
    m.frames.push(frame);
    let outcome = m.run();
    let result = ExecutionResult { outcome, output: m.output, steps: m.steps };
    (result, m.coverage.unwrap_or_default())
}

/// Big-step execution of `main(input)` under a step budget.
pub fn run(program: &Program, input: &Input, fuel: u64) -> ExecutionResult {
    run_machine(program, input, fuel, false).0
}

/// As [`run`], additionally counting every executed instruction.
pub fn run_with_coverage(program: &Program, input: &Input, fuel: u64) -> (ExecutionResult, CoverageMap) {
    run_machine(program, input, fuel, true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::{Reg, Term, TrapEntry};

    fn straight_line_main() -> Program {
        // main(arr) -> int: five instructions then return.
        let mut f = Function::new("main");
        f.regs.push(RegType::Arr);
        f.param_count = 1;
        f.ret = Some(RegType::Int);
        let a = f.add_reg(RegType::Int);
        let b = f.add_reg(RegType::Int);
        let c = f.add_reg(RegType::Int);
        let mut bb = BasicBlock::new(BlockId(0), TermOp::Return { value: Some(c) });
        bb.instrs = vec![
            Instr::new(Op::Const { dst: a, value: 20 }),
            Instr::new(Op::Const { dst: b, value: 22 }),
            Instr::new(Op::Bin { op: BinOp::Add, dst: c, lhs: a, rhs: b }),
            Instr::new(Op::Intrinsic { kind: Intrinsic::Print, dst: None, args: vec![c] }),
            Instr::new(Op::Move { dst: c, src: c }),
        ];
        f.blocks.push(bb);
        Program { functions: vec![f], entry: "main".into() }
    }

    #[test]
    fn straight_line_counts_every_instruction_once() {
        let p = straight_line_main();
        let (res, cov) = run_with_coverage(&p, &Input::Array(vec![]), 1000);
        assert_eq!(res.outcome, Outcome::Returned(42));
        assert_eq!(res.output, vec![OutputItem::Int(42)]);
        assert_eq!(res.steps, 6); // 5 instructions + terminator
        assert_eq!(cov.total(), res.steps);
        for i in 0..=5 {
            assert_eq!(cov.count(0, BlockId(0), i), 1);
        }
    }

    #[test]
    fn out_of_range_index_traps() {
        // main(arr) -> int { return arr[len(arr)]; }
        let mut f = Function::new("main");
        f.regs.push(RegType::Arr);
        f.param_count = 1;
        f.ret = Some(RegType::Int);
        let n = f.add_reg(RegType::Int);
        let v = f.add_reg(RegType::Int);
        let mut bb = BasicBlock::new(BlockId(0), TermOp::Return { value: Some(v) });
        bb.instrs = vec![
            Instr::new(Op::Len { dst: n, arr: Reg(0) }),
            Instr::new(Op::ArrayLoad { dst: v, arr: Reg(0), idx: n }),
        ];
        f.blocks.push(bb);
        let p = Program { functions: vec![f], entry: "main".into() };
        let res = run(&p, &Input::Array(vec![1, 2, 3]), 1000);
        assert_eq!(
            res.outcome,
            Outcome::Trapped(TrapKind::IndexOutOfBounds, TrapKind::IndexOutOfBounds.builtin_code())
        );
        let res_null = run(&p, &Input::Null, 1000);
        assert_eq!(res_null.outcome, Outcome::Trapped(TrapKind::NullAccess, -1));
    }

    #[test]
    fn innermost_trap_entry_wins_and_code_is_delivered() {
        // Two overlapping entries for the same fault; the narrower one wins.
        let mut f = Function::new("main");
        f.regs.push(RegType::Arr);
        f.param_count = 1;
        f.ret = Some(RegType::Int);
        let code = f.add_reg(RegType::Int);
        let one = f.add_reg(RegType::Int);
        let mut b0 = BasicBlock::new(BlockId(0), TermOp::Throw { code: 7 });
        b0.instrs.push(Instr::new(Op::Const { dst: one, value: 1 }));
        let b1 = BasicBlock::new(BlockId(1), TermOp::Return { value: Some(code) });
        let b2 = BasicBlock::new(BlockId(2), TermOp::Return { value: Some(one) });
        f.blocks = vec![b0, b1, b2];
        let user: std::collections::BTreeSet<_> = [TrapKind::User].into_iter().collect();
        f.trap_table = vec![
            TrapEntry { block: BlockId(0), instr_start: 0, instr_end: 2, handler: BlockId(2), kinds: user.clone(), code_reg: None },
            TrapEntry { block: BlockId(0), instr_start: 1, instr_end: 2, handler: BlockId(1), kinds: user, code_reg: Some(code) },
        ];
        let p = Program { functions: vec![f], entry: "main".into() };
        let res = run(&p, &Input::Array(vec![]), 1000);
        assert_eq!(res.outcome, Outcome::Returned(7));
    }

    #[test]
    fn fuel_exhaustion_is_reported_and_monotonic() {
        // main(arr) -> int: infinite loop.
        let mut f = Function::new("main");
        f.regs.push(RegType::Arr);
        f.param_count = 1;
        f.ret = Some(RegType::Int);
        f.blocks.push(BasicBlock {
            id: BlockId(0),
            instrs: vec![],
            term: Term::new(TermOp::Jump { target: BlockId(0) }),
        });
        let p = Program { functions: vec![f], entry: "main".into() };
        let res = run(&p, &Input::Array(vec![]), 100);
        assert_eq!(res.outcome, Outcome::FuelExhausted);
        assert_eq!(res.steps, 100);

        let q = straight_line_main();
        let at_min = run(&q, &Input::Array(vec![]), 6);
        let more = run(&q, &Input::Array(vec![]), 60000);
        assert_eq!(at_min, more);
    }

    #[test]
    fn determinism() {
        let p = straight_line_main();
        let a = run_with_coverage(&p, &Input::Array(vec![1]), 1000);
        let b = run_with_coverage(&p, &Input::Array(vec![1]), 1000);
        assert_eq!(a, b);
    }
}
