use crate::sparse::SparseMat;

/// Rows of a constraint matrix together with the columns they touch.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Block {
    pub rows: Vec<usize>,
    pub cols: Vec<usize>,
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

/// Splits `A` into sub-matrices with pairwise disjoint column supports:
/// connected components of the bipartite row/column nonzero graph.
///
/// Blocks are ordered by their smallest row; rows and columns are sorted.
/// A row without nonzeros forms a block with no columns.
pub fn find_blocks(a: &SparseMat) -> Vec<Block> {
    let (k, n) = a.shape();
    let at = a.transpose();
    let mut parent: Vec<usize> = (0..n).collect();
    for r in 0..k {
        let mut cols = at.col(r).filter(|&(_, v)| v != 0.0).map(|(c, _)| c);
        if let Some(first) = cols.next() {
            let root = find(&mut parent, first);
            for c in cols {
                let rc = find(&mut parent, c);
                if rc != root {
                    parent[rc] = root;
                }
            }
        }
    }
    let mut block_of_root = vec![usize::MAX; n];
    let mut blocks: Vec<Block> = Vec::new();
    for r in 0..k {
        let first = at.col(r).find(|&(_, v)| v != 0.0).map(|(c, _)| c);
        match first {
            Some(c) => {
                let root = find(&mut parent, c);
                if block_of_root[root] == usize::MAX {
                    block_of_root[root] = blocks.len();
                    blocks.push(Block {
                        rows: Vec::new(),
                        cols: Vec::new(),
                    });
                }
                blocks[block_of_root[root]].rows.push(r);
            }
            None => blocks.push(Block {
                rows: vec![r],
                cols: Vec::new(),
            }),
        }
    }
    for c in 0..n {
        if a.col(c).any(|(_, v)| v != 0.0) {
            let root = find(&mut parent, c);
            blocks[block_of_root[root]].cols.push(c);
        }
    }
    blocks
}
