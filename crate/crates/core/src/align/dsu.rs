use crate::error::{Error, Result};
use crate::geom::Interval;

/// Union-find with path compression and union by rank. Every root carries
/// the bounding interval of its members' horizontal extents.
#[derive(Debug, Clone)]
pub struct DisjointSet {
    parent: Vec<usize>,
    rank: Vec<u8>,
    extent: Vec<Interval>,
}

impl DisjointSet {
    pub fn new(extents: Vec<Interval>) -> Self {
        let n = extents.len();
        Self { parent: (0..n).collect(), rank: vec![0; n], extent: extents }
    }

    /// Singletons with empty extents.
    pub fn with_len(n: usize) -> Self {
        Self::new(vec![Interval::new(0, 0); n])
    }

    pub fn len(&self) -> usize {
        self.parent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parent.is_empty()
    }

    fn check(&self, id: usize) -> Result<()> {
        if id < self.parent.len() {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("set id {id} out of range 0..{}", self.parent.len())))
        }
    }

    pub fn find(&mut self, id: usize) -> Result<usize> {
        self.check(id)?;
        let mut root = id;
        while self.parent[root] != root {
            root = self.parent[root];
        }
        let mut cur = id;
        while self.parent[cur] != root {
            let next = self.parent[cur];
            self.parent[cur] = root;
            cur = next;
        }
        Ok(root)
    }

    /// Merges the sets of `a` and `b`, returning the surviving root. Equal
    /// ranks keep the lower root id.
    pub fn union(&mut self, a: usize, b: usize) -> Result<usize> {
        let (ra, rb) = (self.find(a)?, self.find(b)?);
        if ra == rb {
            return Ok(ra);
        }
        let (root, child) = match self.rank[ra].cmp(&self.rank[rb]) {
            std::cmp::Ordering::Greater => (ra, rb),
            std::cmp::Ordering::Less => (rb, ra),
            std::cmp::Ordering::Equal => {
                let (lo, hi) = (ra.min(rb), ra.max(rb));
                self.rank[lo] += 1;
                (lo, hi)
            }
        };
        self.parent[child] = root;
        self.extent[root] = self.extent[root].hull(&self.extent[child]);
        Ok(root)
    }

    /// Extent of the set containing `id`.
    pub fn extent(&mut self, id: usize) -> Result<Interval> {
        let r = self.find(id)?;
        Ok(self.extent[r])
    }

    pub fn rank(&self, id: usize) -> u8 {
        self.rank[id]
    }

    pub fn parent(&self, id: usize) -> usize {
        self.parent[id]
    }

    /// Roots in ascending id order.
    pub fn roots(&self) -> Vec<usize> {
        (0..self.parent.len()).filter(|&i| self.parent[i] == i).collect()
    }
}
