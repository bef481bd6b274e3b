//! Dominator computation by iterative dataflow over a reverse postorder,
//! after Cooper, Harvey and Kennedy's simple dominance algorithm.

use super::*;

/// Immediate-dominator mapping for the blocks reachable from entry.
/// `idom(entry) = entry`; unreachable blocks are excluded and reported.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DomTree {
    pub idom: BTreeMap<BlockId, BlockId>,
    pub unreachable: Vec<BlockId>,
}

impl DomTree {
    /// True iff `a` dominates `b` (reflexively).
    pub fn dominates(&self, a: BlockId, b: BlockId) -> bool {
        let mut cur = b;
        loop {
            if cur == a {
                return true;
            }
            match self.idom.get(&cur) {
                Some(&d) if d != cur => cur = d,
                _ => return cur == a,
            }
        }
    }
}

fn postorder(f: &Function) -> Vec<BlockId> {
    let mut order = Vec::new();
    let mut state: BTreeMap<BlockId, u8> = BTreeMap::new(); // 1 = open, 2 = done
    let mut stack = vec![(f.entry_block, 0usize)];
    state.insert(f.entry_block, 1);
    while let Some((b, i)) = stack.pop() {
        let succs = f.successors(b);
        if i < succs.len() {
            stack.push((b, i + 1));
            let s = succs[i];
            if !state.contains_key(&s) {
                state.insert(s, 1);
                stack.push((s, 0));
            }
        } else {
            state.insert(b, 2);
            order.push(b);
        }
    }
    order
}

/// Computes immediate dominators for `f`. Unreachable blocks are left out of
/// the mapping and listed in `unreachable`.
pub fn dominators(f: &Function) -> DomTree {
    let po = postorder(f);
    let mut rpo_num: BTreeMap<BlockId, usize> = BTreeMap::new();
    for (i, &b) in po.iter().rev().enumerate() {
        rpo_num.insert(b, i);
    }
    let reachable: BTreeSet<BlockId> = po.iter().copied().collect();
    let unreachable: Vec<BlockId> = f
        .blocks
        .iter()
        .map(|b| b.id)
        .filter(|b| !reachable.contains(b))
        .collect();

    let preds = f.predecessors();
    let mut idom: BTreeMap<BlockId, BlockId> = BTreeMap::new();
    idom.insert(f.entry_block, f.entry_block);

    let intersect = |idom: &BTreeMap<BlockId, BlockId>, mut a: BlockId, mut b: BlockId| {
        while a != b {
            while rpo_num[&a] > rpo_num[&b] {
                a = idom[&a];
            }
            while rpo_num[&b] > rpo_num[&a] {
                b = idom[&b];
            }
        }
        a
    };

    let mut changed = true;
    while changed {
        changed = false;
        for &b in po.iter().rev() {
            if b == f.entry_block {
                continue;
            }
            let mut new_idom: Option<BlockId> = None;
            for &p in preds[&b].iter().filter(|p| reachable.contains(p)) {
                if !idom.contains_key(&p) {
                    continue;
                }
                new_idom = Some(match new_idom {
                    None => p,
                    Some(cur) => intersect(&idom, cur, p),
                });
            }
            if let Some(ni) = new_idom {
                if idom.get(&b) != Some(&ni) {
                    idom.insert(b, ni);
                    changed = true;
                }
            }
        }
    }

    DomTree { idom, unreachable }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diamond() -> Function {
        let mut f = Function::new("d");
        let p = f.add_reg(RegType::Bool);
        f.blocks.push(BasicBlock::new(
            BlockId(0),
            TermOp::CondBranch { pred: p, then_target: BlockId(1), else_target: BlockId(2) },
        ));
        f.blocks.push(BasicBlock::new(BlockId(1), TermOp::Jump { target: BlockId(3) }));
        f.blocks.push(BasicBlock::new(BlockId(2), TermOp::Jump { target: BlockId(3) }));
        f.blocks.push(BasicBlock::new(BlockId(3), TermOp::Return { value: None }));
        f
    }

    #[test]
    fn diamond_dominators() {
        let t = dominators(&diamond());
        assert_eq!(t.idom[&BlockId(1)], BlockId(0));
        assert_eq!(t.idom[&BlockId(2)], BlockId(0));
        assert_eq!(t.idom[&BlockId(3)], BlockId(0));
        assert_eq!(t.idom[&BlockId(0)], BlockId(0));
    }

    #[test]
    fn single_block_tree() {
        let mut f = Function::new("s");
        f.blocks.push(BasicBlock::new(BlockId(0), TermOp::Return { value: None }));
        let t = dominators(&f);
        assert_eq!(t.idom.len(), 1);
        assert_eq!(t.idom[&BlockId(0)], BlockId(0));
        assert!(t.unreachable.is_empty());
    }

    #[test]
    fn unreachable_blocks_reported() {
        let mut f = Function::new("u");
        f.blocks.push(BasicBlock::new(BlockId(0), TermOp::Return { value: None }));
        f.blocks.push(BasicBlock::new(BlockId(7), TermOp::Return { value: None }));
        let t = dominators(&f);
        assert_eq!(t.unreachable, vec![BlockId(7)]);
        assert!(!t.idom.contains_key(&BlockId(7)));
    }
}
