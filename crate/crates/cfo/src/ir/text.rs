//! Bit-exact textual form of the IR: one function per section, `block <id>:`
//! headers, one instruction per line, trap table as trailing `trap` lines.
//! `parse_text(emit_text(p))` is structurally equal to `p`.

use super::*;
use crate::diag::{Diagnostic, Span};
use std::fmt::Write as _;

fn escape(s: &str) -> String {
    let mut out = String::new();
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            c => out.push(c),
        }
    }
    out
}

fn unescape(s: &str) -> Option<String> {
    let mut out = String::new();
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        if c == '\\' {
            match chars.next()? {
                '"' => out.push('"'),
                '\\' => out.push('\\'),
                'n' => out.push('\n'),
                _ => return None,
            }
        } else {
            out.push(c);
        }
    }
    Some(out)
}

fn regs_list(rs: &[Reg]) -> String {
    rs.iter().map(|r| r.to_string()).collect::<Vec<_>>().join(", ")
}

fn op_text(op: &Op) -> String {
    match op {
        Op::Const { dst, value } => format!("{dst} = const {value}"),
        Op::ConstNull { dst } => format!("{dst} = null"),
        Op::Move { dst, src } => format!("{dst} = move {src}"),
        Op::Un { op, dst, src } => format!("{dst} = {} {src}", op.text()),
        Op::Bin { op, dst, lhs, rhs } => format!("{dst} = {} {lhs}, {rhs}", op.text()),
        Op::ArrayNew { dst, len } => format!("{dst} = newarr {len}"),
        Op::ArrayLoad { dst, arr, idx } => format!("{dst} = aload {arr}, {idx}"),
        Op::ArrayStore { arr, idx, val } => format!("astore {arr}, {idx}, {val}"),
        Op::Len { dst, arr } => format!("{dst} = len {arr}"),
        Op::Call { dst: Some(d), func, args } => format!("{d} = call {func}({})", regs_list(args)),
        Op::Call { dst: None, func, args } => format!("call {func}({})", regs_list(args)),
        Op::Intrinsic { kind: Intrinsic::Print, args, .. } => format!("print {}", args[0]),
        Op::Intrinsic { kind: Intrinsic::PrintStr(s), .. } => format!("printstr \"{}\"", escape(s)),
        Op::Intrinsic { kind: Intrinsic::Min, dst, args } => {
            format!("{} = min {}, {}", dst.expect("min has dst"), args[0], args[1])
        }
    }
}

fn term_text(t: &TermOp) -> String {
    match t {
        TermOp::Jump { target } => format!("jmp {target}"),
        TermOp::CondBranch { pred, then_target, else_target } => {
            format!("br {pred}, {then_target}, {else_target}")
        }
        TermOp::Switch { scrutinee, cases, default } => {
            let cs = cases
                .iter()
                .map(|(v, b)| format!("{v} -> {b}"))
                .collect::<Vec<_>>()
                .join(", ");
            format!("switch {scrutinee} [{cs}] default {default}")
        }
        TermOp::Return { value: Some(v) } => format!("ret {v}"),
        TermOp::Return { value: None } => "ret".to_string(),
        TermOp::Throw { code } => format!("throw {code}"),
    }
}

/// Emits the canonical text of a program. Deterministic: equal programs
/// yield byte-identical text.
pub fn emit_text(program: &Program) -> String {
    let mut out = String::new();
    for f in &program.functions {
        let params = (0..f.param_count)
            .map(|i| format!("r{}: {}", i, f.regs[i]))
            .collect::<Vec<_>>()
            .join(", ");
        match f.ret {
            Some(t) => writeln!(out, "fn {}({}) -> {} {{", f.name, params, t).unwrap(),
            None => writeln!(out, "fn {}({}) {{", f.name, params).unwrap(),
        }
        writeln!(out, "  entry {}", f.entry_block).unwrap();
        if f.regs.len() > f.param_count {
            let locals = (f.param_count..f.regs.len())
                .map(|i| format!("r{}:{}", i, f.regs[i]))
                .collect::<Vec<_>>()
                .join(" ");
            writeln!(out, "  regs {}", locals).unwrap();
        }
        for b in &f.blocks {
            writeln!(out, "  block {}:", b.id).unwrap();
            for ins in &b.instrs {
                writeln!(out, "    {}{}", op_text(&ins.op), ins.tag.suffix()).unwrap();
            }
            writeln!(out, "    {}{}", term_text(&b.term.op), b.term.tag.suffix()).unwrap();
        }
        for e in &f.trap_table {
            let kinds = e.kinds.iter().map(|k| k.text()).collect::<Vec<_>>().join(" ");
            write!(out, "  trap {} {} {} -> {} [{}]", e.block, e.instr_start, e.instr_end, e.handler, kinds).unwrap();
            if let Some(r) = e.code_reg {
                write!(out, " code {}", r).unwrap();
            }
            writeln!(out).unwrap();
        }
        writeln!(out, "}}").unwrap();
    }
    out
}

struct Parser<'a> {
    lines: Vec<(u32, &'a str)>,
    pos: usize,
    diags: Vec<Diagnostic>,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<(u32, &'a str)> {
        self.lines.get(self.pos).copied()
    }

    fn next(&mut self) -> Option<(u32, &'a str)> {
        let l = self.peek();
        if l.is_some() {
            self.pos += 1;
        }
        l
    }

    fn err(&mut self, line: u32, msg: impl Into<String>) {
        self.diags.push(Diagnostic::at(Span::new(line, 1), msg));
    }
}

fn parse_reg(s: &str) -> Option<Reg> {
    s.strip_prefix('r')?.parse::<u32>().ok().map(Reg)
}

fn parse_block_id(s: &str) -> Option<BlockId> {
    s.strip_prefix('b')?.parse::<u32>().ok().map(BlockId)
}

fn parse_type(s: &str) -> Option<RegType> {
    match s {
        "int" => Some(RegType::Int),
        "bool" => Some(RegType::Bool),
        "arr" => Some(RegType::Arr),
        _ => None,
    }
}

fn parse_kind(s: &str) -> Option<TrapKind> {
    match s {
        "null" => Some(TrapKind::NullAccess),
        "oob" => Some(TrapKind::IndexOutOfBounds),
        "div0" => Some(TrapKind::DivByZero),
        "user" => Some(TrapKind::User),
        _ => None,
    }
}

fn split_tag(line: &str) -> (&str, Tag) {
    for (suffix, tag) in [
        (" !opaque", Tag::Opaque),
        (" !dead", Tag::Dead),
        (" !irrelevant", Tag::Irrelevant),
        (" !dispatcher", Tag::Dispatcher),
        (" !buffer", Tag::Buffer),
    ] {
        if let Some(head) = line.strip_suffix(suffix) {
            return (head, tag);
        }
    }
    (line, Tag::Original)
}

fn parse_call_args(s: &str) -> Option<(String, Vec<Reg>)> {
    let open = s.find('(')?;
    let close = s.rfind(')')?;
    let name = s[..open].trim().to_string();
    let inner = s[open + 1..close].trim();
    let mut args = Vec::new();
    if !inner.is_empty() {
        for part in inner.split(',') {
            args.push(parse_reg(part.trim())?);
        }
    }
    Some((name, args))
}

/// Parses one instruction or terminator line. Returns None on malformed text.
fn parse_line(body: &str) -> Option<Result<Op, TermOp>> {
    let words: Vec<&str> = body.split_whitespace().collect();
    if words.is_empty() {
        return None;
    }
    // Terminators and no-dst forms first.
    match words[0] {
        "jmp" if words.len() == 2 => {
            return Some(Err(TermOp::Jump { target: parse_block_id(words[1])? }));
        }
        "br" => {
            let rest: Vec<&str> = body[2..].split(',').map(|s| s.trim()).collect();
            if rest.len() == 3 {
                return Some(Err(TermOp::CondBranch {
                    pred: parse_reg(rest[0])?,
                    then_target: parse_block_id(rest[1])?,
                    else_target: parse_block_id(rest[2])?,
                }));
            }
            return None;
        }
        "switch" => {
            let open = body.find('[')?;
            let close = body.rfind(']')?;
            let scrutinee = parse_reg(body["switch".len()..open].trim())?;
            let mut cases = Vec::new();
            let inner = body[open + 1..close].trim();
            if !inner.is_empty() {
                for part in inner.split(',') {
                    let (v, b) = part.split_once("->")?;
                    cases.push((v.trim().parse::<i64>().ok()?, parse_block_id(b.trim())?));
                }
            }
            let tail = body[close + 1..].trim();
            let default = parse_block_id(tail.strip_prefix("default")?.trim())?;
            return Some(Err(TermOp::Switch { scrutinee, cases, default }));
        }
        "ret" => {
            if words.len() == 1 {
                return Some(Err(TermOp::Return { value: None }));
            }
            return Some(Err(TermOp::Return { value: Some(parse_reg(words[1])?) }));
        }
        "throw" if words.len() == 2 => {
            return Some(Err(TermOp::Throw { code: words[1].parse().ok()? }));
        }
        "astore" => {
            let rest: Vec<&str> = body["astore".len()..].split(',').map(|s| s.trim()).collect();
            if rest.len() == 3 {
                return Some(Ok(Op::ArrayStore {
                    arr: parse_reg(rest[0])?,
                    idx: parse_reg(rest[1])?,
                    val: parse_reg(rest[2])?,
                }));
            }
            return None;
        }
        "print" if words.len() == 2 => {
            return Some(Ok(Op::Intrinsic {
                kind: Intrinsic::Print,
                dst: None,
                args: vec![parse_reg(words[1])?],
            }));
        }
        "printstr" => {
            let rest = body["printstr".len()..].trim();
            let inner = rest.strip_prefix('"')?.strip_suffix('"')?;
            return Some(Ok(Op::Intrinsic {
                kind: Intrinsic::PrintStr(unescape(inner)?),
                dst: None,
                args: vec![],
            }));
        }
        "call" => {
            let (func, args) = parse_call_args(&body["call".len()..])?;
            return Some(Ok(Op::Call { dst: None, func, args }));
        }
        _ => {}
    }

    // dst = <op> forms.
    let (dst_s, rhs) = body.split_once('=')?;
    let dst = parse_reg(dst_s.trim())?;
    let rhs = rhs.trim();
    let (head, rest) = match rhs.split_once(' ') {
        Some((h, r)) => (h, r.trim()),
        None => (rhs, ""),
    };
    let two_regs = |rest: &str| -> Option<(Reg, Reg)> {
        let (a, b) = rest.split_once(',')?;
        Some((parse_reg(a.trim())?, parse_reg(b.trim())?))
    };
    let op = match head {
        "const" => Op::Const { dst, value: rest.parse().ok()? },
        "null" => Op::ConstNull { dst },
        "move" => Op::Move { dst, src: parse_reg(rest)? },
        "neg" => Op::Un { op: UnOp::Neg, dst, src: parse_reg(rest)? },
        "not" => Op::Un { op: UnOp::Not, dst, src: parse_reg(rest)? },
        "isnull" => Op::Un { op: UnOp::IsNull, dst, src: parse_reg(rest)? },
        "newarr" => Op::ArrayNew { dst, len: parse_reg(rest)? },
        "aload" => {
            let (a, i) = two_regs(rest)?;
            Op::ArrayLoad { dst, arr: a, idx: i }
        }
        "len" => Op::Len { dst, arr: parse_reg(rest)? },
        "call" => {
            let (func, args) = parse_call_args(rest)?;
            Op::Call { dst: Some(dst), func, args }
        }
        "min" => {
            let (a, b) = two_regs(rest)?;
            Op::Intrinsic { kind: Intrinsic::Min, dst: Some(dst), args: vec![a, b] }
        }
        other => {
            let bin = match other {
                "add" => BinOp::Add,
                "sub" => BinOp::Sub,
                "mul" => BinOp::Mul,
                "div" => BinOp::Div,
                "rem" => BinOp::Rem,
                "and" => BinOp::And,
                "or" => BinOp::Or,
                "xor" => BinOp::Xor,
                "eq" => BinOp::Eq,
                "ne" => BinOp::Ne,
                "lt" => BinOp::Lt,
                "le" => BinOp::Le,
                "gt" => BinOp::Gt,
                "ge" => BinOp::Ge,
                _ => return None,
            };
            let (a, b) = two_regs(rest)?;
            Op::Bin { op: bin, dst, lhs: a, rhs: b }
        }
    };
    Some(Ok(op))
}

/// Parses the canonical IR text. Malformed lines yield line-anchored
/// diagnostics; on any diagnostic the program is rejected.
pub fn parse_text(text: &str) -> Result<Program, Vec<Diagnostic>> {
    let lines: Vec<(u32, &str)> = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i as u32 + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
        .collect();
    let mut p = Parser { lines, pos: 0, diags: Vec::new() };
    let mut functions = Vec::new();

    while let Some((ln, line)) = p.next() {
        if !line.starts_with("fn ") {
            p.err(ln, format!("expected function header, found: {line}"));
            break;
        }
        match parse_function(&mut p, ln, line) {
            Some(f) => functions.push(f),
            None => break,
        }
    }

    if !p.diags.is_empty() {
        return Err(p.diags);
    }
    let entry = if functions.iter().any(|f: &Function| f.name == "main") {
        "main".to_string()
    } else {
        functions.first().map(|f| f.name.clone()).unwrap_or_default()
    };
    Ok(Program { functions, entry })
}

fn parse_function(p: &mut Parser, header_ln: u32, header: &str) -> Option<Function> {
    // fn name(r0: ty, ...) [-> ty] {
    let rest = header.strip_prefix("fn ")?.trim();
    let open = match rest.find('(') {
        Some(i) => i,
        None => {
            p.err(header_ln, "malformed function header: missing '('");
            return None;
        }
    };
    let close = match rest.find(')') {
        Some(i) => i,
        None => {
            p.err(header_ln, "malformed function header: missing ')'");
            return None;
        }
    };
    let mut f = Function::new(rest[..open].trim());
    let params = rest[open + 1..close].trim();
    if !params.is_empty() {
        for part in params.split(',') {
            let (r, t) = match part.split_once(':') {
                Some(x) => x,
                None => {
                    p.err(header_ln, format!("malformed parameter: {part}"));
                    return None;
                }
            };
            if parse_reg(r.trim()) != Some(Reg(f.regs.len() as u32)) {
                p.err(header_ln, "parameters must be r0..rN in order");
                return None;
            }
            match parse_type(t.trim()) {
                Some(ty) => {
                    f.regs.push(ty);
                }
                None => {
                    p.err(header_ln, format!("unknown type: {t}"));
                    return None;
                }
            }
        }
    }
    f.param_count = f.regs.len();
    let tail = rest[close + 1..].trim();
    if let Some(rt) = tail.strip_prefix("->") {
        let rt = rt.trim().trim_end_matches('{').trim();
        match parse_type(rt) {
            Some(t) => f.ret = Some(t),
            None => {
                p.err(header_ln, format!("unknown return type: {rt}"));
                return None;
            }
        }
    }

    let mut entry_set = false;
    let mut current: Option<BasicBlock> = None;
    let mut closed_current = false;

    loop {
        let (ln, line) = match p.next() {
            Some(x) => x,
            None => {
                p.err(header_ln, "unterminated function: missing '}'");
                return None;
            }
        };
        if line == "}" {
            if let Some(b) = current.take() {
                if !closed_current {
                    p.err(ln, format!("block {} missing terminator", b.id));
                    return None;
                }
                f.blocks.push(b);
            }
            if !entry_set && !f.blocks.is_empty() {
                f.entry_block = f.blocks[0].id;
            }
            return Some(f);
        }
        if let Some(rest) = line.strip_prefix("entry ") {
            match parse_block_id(rest.trim()) {
                Some(b) => {
                    f.entry_block = b;
                    entry_set = true;
                }
                None => p.err(ln, format!("malformed entry: {rest}")),
            }
            continue;
        }
        if let Some(rest) = line.strip_prefix("regs ") {
            for part in rest.split_whitespace() {
                let ok = part
                    .split_once(':')
                    .and_then(|(r, t)| Some((parse_reg(r)?, parse_type(t)?)))
                    .map(|(r, ty)| {
                        if r == Reg(f.regs.len() as u32) {
                            f.regs.push(ty);
                            true
                        } else {
                            false
                        }
                    })
                    .unwrap_or(false);
                if !ok {
                    p.err(ln, format!("malformed register declaration: {part}"));
                }
            }
            continue;
        }
        if let Some(rest) = line.strip_prefix("block ") {
            if let Some(b) = current.take() {
                if !closed_current {
                    p.err(ln, format!("block {} missing terminator", b.id));
                }
                f.blocks.push(b);
            }
            let id = rest.trim().trim_end_matches(':');
            match parse_block_id(id) {
                Some(id) => {
                    current = Some(BasicBlock::new(id, TermOp::Return { value: None }));
                    closed_current = false;
                }
                None => p.err(ln, format!("malformed block header: {rest}")),
            }
            continue;
        }
        if let Some(rest) = line.strip_prefix("trap ") {
            if let Some(b) = current.take() {
                if !closed_current {
                    p.err(ln, format!("block {} missing terminator", b.id));
                }
                f.blocks.push(b);
                closed_current = false;
            }
            match parse_trap_line(rest) {
                Some(e) => f.trap_table.push(e),
                None => p.err(ln, format!("malformed trap entry: {rest}")),
            }
            continue;
        }

        // Instruction or terminator inside the current block.
        let Some(block) = current.as_mut() else {
            p.err(ln, format!("instruction outside block: {line}"));
            continue;
        };
        let (body, tag) = split_tag(line);
        match parse_line(body) {
            Some(Ok(op)) => {
                if closed_current {
                    p.err(ln, "code after terminator");
                } else {
                    block.instrs.push(Instr::tagged(op, tag));
                }
            }
            Some(Err(term)) => {
                if closed_current {
                    p.err(ln, "code after terminator");
                } else {
                    block.term = Term::tagged(term, tag);
                    closed_current = true;
                }
            }
            None => p.err(ln, format!("unknown opcode or malformed line: {body}")),
        }
    }
}

fn parse_trap_line(rest: &str) -> Option<TrapEntry> {
    // <block> <start> <end> -> <handler> [kinds] [code rN]
    let (range, tail) = rest.split_once("->")?;
    let rw: Vec<&str> = range.split_whitespace().collect();
    if rw.len() != 3 {
        return None;
    }
    let block = parse_block_id(rw[0])?;
    let instr_start = rw[1].parse().ok()?;
    let instr_end = rw[2].parse().ok()?;
    let tail = tail.trim();
    let (handler_s, tail) = tail.split_once('[')?;
    let handler = parse_block_id(handler_s.trim())?;
    let (kinds_s, tail) = tail.split_once(']')?;
    let mut kinds = BTreeSet::new();
    for k in kinds_s.split_whitespace() {
        kinds.insert(parse_kind(k)?);
    }
    let tail = tail.trim();
    let code_reg = if tail.is_empty() {
        None
    } else {
        Some(parse_reg(tail.strip_prefix("code")?.trim())?)
    };
    Some(TrapEntry { block, instr_start, instr_end, handler, kinds, code_reg })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Program {
        let mut f = Function::new("main");
        f.regs.push(RegType::Arr);
        f.param_count = 1;
        f.ret = Some(RegType::Int);
        let n = f.add_reg(RegType::Int);
        let c = f.add_reg(RegType::Bool);
        let h = f.add_reg(RegType::Int);
        let mut b0 = BasicBlock::new(BlockId(0), TermOp::Jump { target: BlockId(1) });
        b0.instrs.push(Instr::new(Op::Len { dst: n, arr: Reg(0) }));
        b0.instrs.push(Instr::tagged(Op::Const { dst: h, value: 3 }, Tag::Opaque));
        let mut b1 = BasicBlock::new(
            BlockId(1),
            TermOp::CondBranch { pred: c, then_target: BlockId(2), else_target: BlockId(3) },
        );
        b1.instrs.push(Instr::new(Op::Un { op: UnOp::IsNull, dst: c, src: Reg(0) }));
        let mut b2 = BasicBlock::new(BlockId(2), TermOp::Return { value: Some(n) });
        b2.instrs.push(Instr::new(Op::Intrinsic {
            kind: Intrinsic::PrintStr("hi \"there\"\n".into()),
            dst: None,
            args: vec![],
        }));
        let b3 = BasicBlock::new(BlockId(3), TermOp::Throw { code: 9 });
        f.blocks = vec![b0, b1, b2, b3];
        f.entry_block = BlockId(0);
        f.trap_table.push(TrapEntry {
            block: BlockId(1),
            instr_start: 0,
            instr_end: 2,
            handler: BlockId(2),
            kinds: [TrapKind::NullAccess, TrapKind::User].into_iter().collect(),
            code_reg: Some(h),
        });
        Program { functions: vec![f], entry: "main".into() }
    }

    #[test]
    fn round_trip_is_structural_identity() {
        let p = sample();
        let text = emit_text(&p);
        let q = parse_text(&text).expect("parses");
        assert!(structurally_equal(&p, &q));
        assert_eq!(text, emit_text(&q));
    }

    #[test]
    fn empty_body_function_round_trips() {
        let mut f = Function::new("f");
        f.blocks.push(BasicBlock::new(BlockId(0), TermOp::Return { value: None }));
        let p = Program { functions: vec![f], entry: "f".into() };
        let text = emit_text(&p);
        assert!(text.contains("block b0:"));
        assert!(text.contains("ret"));
        let q = parse_text(&text).expect("parses");
        assert!(structurally_equal(&p, &q));
    }

    #[test]
    fn unknown_opcode_is_diagnosed() {
        let text = "fn f() {\n  block b0:\n    r0 = frobnicate r1\n    ret\n}\n";
        let err = parse_text(text).unwrap_err();
        assert!(err[0].message.contains("unknown opcode"));
    }

    #[test]
    fn code_after_terminator_is_diagnosed() {
        let text = "fn f() {\n  regs r0:int\n  block b0:\n    ret\n    r0 = const 1\n}\n";
        let err = parse_text(text).unwrap_err();
        assert!(err.iter().any(|d| d.message.contains("code after terminator")));
    }
}
