//! Maximum bipartite matching by augmenting paths.
//!
//! Left vertices are processed in increasing order and each one tries its
//! neighbours in the order they are listed, so the result is a deterministic
//! function of the adjacency lists.

/// Adjacency lists of a bipartite graph in compressed form.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Bipartite {
    right: usize,
    offsets: Vec<usize>,
    targets: Vec<usize>,
}

impl Bipartite {
    pub fn new(right: usize) -> Self {
        Bipartite {
            right,
            offsets: vec![0],
            targets: Vec::new(),
        }
    }

    /// Append the next left vertex with the given neighbours.
    pub fn push_left<I: IntoIterator<Item = usize>>(&mut self, neighbours: I) {
        for r in neighbours {
            assert!(r < self.right, "right vertex {r} out of range");
            self.targets.push(r);
        }
        self.offsets.push(self.targets.len());
    }

    pub fn left_len(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn right_len(&self) -> usize {
        self.right
    }

    pub fn neighbours(&self, l: usize) -> &[usize] {
        &self.targets[self.offsets[l]..self.offsets[l + 1]]
    }

    pub fn edge_count(&self) -> usize {
        self.targets.len()
    }
}

/// A matching, stored from both sides.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Matching {
    pub left: Vec<Option<usize>>,
    pub right: Vec<Option<usize>>,
}

impl Matching {
    pub fn size(&self) -> usize {
        self.left.iter().filter(|m| m.is_some()).count()
    }

    pub fn is_perfect(&self) -> bool {
        self.left.len() == self.right.len() && self.left.iter().all(Option::is_some)
    }
}

/// Maximum matching: a greedy pass, then one augmenting-path search per
/// unmatched left vertex.
pub fn maximum_matching(g: &Bipartite) -> Matching {
    let n = g.left_len();
    let mut left = vec![None; n];
    let mut right = vec![None; g.right_len()];

    for l in 0..n {
        if let Some(&r) = g.neighbours(l).iter().find(|&&r| right[r].is_none()) {
            left[l] = Some(r);
            right[r] = Some(l);
        }
    }

    let mut seen = vec![0u32; g.right_len()];
    let mut stamp = 0u32;
    // (left vertex, index of the next neighbour to try)
    let mut stack: Vec<(usize, usize)> = Vec::new();
    for root in 0..n {
        if left[root].is_some() {
            continue;
        }
        stamp += 1;
        stack.clear();
        stack.push((root, 0));
        let mut free = None;
        while let Some(&mut (l, ref mut next)) = stack.last_mut() {
            let nbrs = g.neighbours(l);
            let mut descended = false;
            while *next < nbrs.len() {
                let r = nbrs[*next];
                *next += 1;
                if seen[r] == stamp {
                    continue;
                }
                seen[r] = stamp;
                match right[r] {
                    None => {
                        free = Some(r);
                    }
                    Some(owner) => {
                        stack.push((owner, 0));
                        descended = true;
                    }
                }
                break;
            }
            if free.is_some() {
                break;
            }
            if !descended {
                stack.pop();
            }
        }
        if let Some(mut r) = free {
            // Flip the path: every left vertex on the stack takes the right
            // vertex it last tried.
            while let Some((l, next)) = stack.pop() {
                debug_assert_eq!(g.neighbours(l)[next - 1], r);
                let previous = left[l];
                left[l] = Some(r);
                right[r] = Some(l);
                match previous {
                    Some(p) => r = p,
                    None => break,
                }
            }
        }
    }
    Matching { left, right }
}
