//! Intra-block dependence analysis. The resulting graph is the legality
//! certificate for statement reordering: any topological order of a block's
//! instructions executes identically.

use super::*;

/// Dependence edges over instruction indices of one block. Edge i -> j means
/// j must stay after i.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DepGraph {
    pub n: usize,
    pub edges: BTreeSet<(usize, usize)>,
}

impl DepGraph {
    pub fn preds_of(&self, j: usize) -> impl Iterator<Item = usize> + '_ {
        self.edges.iter().filter(move |(_, t)| *t == j).map(|(s, _)| *s)
    }

    /// True iff `order` is a permutation of 0..n respecting every edge.
    pub fn is_topological(&self, order: &[usize]) -> bool {
        if order.len() != self.n {
            return false;
        }
        let mut pos = vec![usize::MAX; self.n];
        for (p, &i) in order.iter().enumerate() {
            if i >= self.n || pos[i] != usize::MAX {
                return false;
            }
            pos[i] = p;
        }
        self.edges.iter().all(|&(a, b)| pos[a] < pos[b])
    }
}

/// Builds the dependence graph of a straight-line block. Edge i -> j (i < j)
/// is added when j reads a register i defines, j writes a register i reads
/// or writes, both touch memory (array aliasing is treated as total), or
/// both are effectful.
pub fn def_use(block: &BasicBlock) -> DepGraph {
    let n = block.instrs.len();
    let mut edges = BTreeSet::new();
    for j in 1..n {
        let bj = &block.instrs[j].op;
        let j_reads = bj.reads();
        let j_def = bj.def();
        for i in 0..j {
            let bi = &block.instrs[i].op;
            let i_reads = bi.reads();
            let i_def = bi.def();
            let raw = i_def.map_or(false, |d| j_reads.contains(&d));
            let war_waw = j_def.map_or(false, |d| i_reads.contains(&d) || i_def == Some(d));
            let mem = bi.is_memory() && bj.is_memory();
            let eff = bi.is_effectful() && bj.is_effectful();
            if raw || war_waw || mem || eff {
                edges.insert((i, j));
            }
        }
    }
    DepGraph { n, edges }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn block(ops: Vec<Op>) -> BasicBlock {
        let mut b = BasicBlock::new(BlockId(0), TermOp::Return { value: None });
        b.instrs = ops.into_iter().map(Instr::new).collect();
        b
    }

    #[test]
    fn read_after_write_edges_only() {
        let b = block(vec![
            Op::Const { dst: Reg(1), value: 1 },
            Op::Const { dst: Reg(2), value: 2 },
            Op::Bin { op: BinOp::Add, dst: Reg(3), lhs: Reg(1), rhs: Reg(2) },
        ]);
        let g = def_use(&b);
        assert_eq!(g.edges, [(0, 2), (1, 2)].into_iter().collect());
    }

    #[test]
    fn effects_are_totally_ordered() {
        let b = block(vec![
            Op::Intrinsic { kind: Intrinsic::Print, dst: None, args: vec![Reg(1)] },
            Op::Intrinsic { kind: Intrinsic::Print, dst: None, args: vec![Reg(2)] },
        ]);
        let g = def_use(&b);
        assert_eq!(g.edges, [(0, 1)].into_iter().collect());
    }

    #[test]
    fn midpoint_chain_matches_operand_flow() {
        // m = l + (r - l) / 2, as lowered: t0 = r - l; t1 = 2; t2 = t0 / t1; m = l + t2
        let (l, r, t0, t1, t2, m) = (Reg(0), Reg(1), Reg(2), Reg(3), Reg(4), Reg(5));
        let b = block(vec![
            Op::Bin { op: BinOp::Sub, dst: t0, lhs: r, rhs: l },
            Op::Const { dst: t1, value: 2 },
            Op::Bin { op: BinOp::Div, dst: t2, lhs: t0, rhs: t1 },
            Op::Bin { op: BinOp::Add, dst: m, lhs: l, rhs: t2 },
        ]);
        let g = def_use(&b);
        assert_eq!(g.edges, [(0, 2), (1, 2), (2, 3)].into_iter().collect());
        assert!(g.is_topological(&[1, 0, 2, 3]));
        assert!(!g.is_topological(&[2, 0, 1, 3]));
    }
}
