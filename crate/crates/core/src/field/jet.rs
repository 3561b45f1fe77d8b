/// Value and all partial derivatives of a function up to a fixed order, at
/// one point. Derivative tensors are stored in full (row-major), so lookups
/// never need to sort indices.
#[derive(Debug, Clone, PartialEq)]
pub struct Jet {
    n: usize,
    order: usize,
    value: f64,
    tensors: Vec<Vec<f64>>,
}

impl Jet {
    pub fn zeros(n: usize, order: usize) -> Self {
        let tensors = (1..=order).map(|k| vec![0.0; n.pow(k as u32)]).collect();
        Self {
            n,
            order,
            value: 0.0,
            tensors,
        }
    }

    pub fn constant(n: usize, order: usize, value: f64) -> Self {
        let mut j = Self::zeros(n, order);
        j.value = value;
        j
    }

    /// Number of variables.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    pub fn set_value(&mut self, v: f64) {
        self.value = v;
    }

    #[inline]
    fn offset(&self, idx: &[usize]) -> usize {
        idx.iter().fold(0, |acc, &i| acc * self.n + i)
    }

    /// Partial along `idx`; an empty index returns the value. Orders above the
    /// stored order read as zero only if the jet is exact (callers check).
    #[inline]
    pub fn get(&self, idx: &[usize]) -> f64 {
        match idx.len() {
            0 => self.value,
            k if k <= self.order => self.tensors[k - 1][self.offset(idx)],
            _ => panic!("jet of order {} asked for order {}", self.order, idx.len()),
        }
    }

    /// Full tensor of order `k >= 1`.
    pub fn tensor(&self, k: usize) -> &[f64] {
        &self.tensors[k - 1]
    }

    pub fn gradient(&self) -> &[f64] {
        self.tensor(1)
    }

    /// Writes `v` at `idx` and every permutation of it.
    pub fn set_symmetric(&mut self, idx: &[usize], v: f64) {
        if idx.is_empty() {
            self.value = v;
            return;
        }
        let mut perm = idx.to_vec();
        perm.sort_unstable();
        loop {
            let off = self.offset(&perm);
            self.tensors[idx.len() - 1][off] = v;
            if !next_permutation(&mut perm) {
                break;
            }
        }
    }

    /// Same point, truncated to a lower order.
    pub fn truncated(&self, order: usize) -> Jet {
        assert!(order <= self.order);
        Jet {
            n: self.n,
            order,
            value: self.value,
            tensors: self.tensors[..order].to_vec(),
        }
    }

    pub fn scaled(&self, s: f64) -> Jet {
        Jet {
            n: self.n,
            order: self.order,
            value: self.value * s,
            tensors: self
                .tensors
                .iter()
                .map(|t| t.iter().map(|x| x * s).collect())
                .collect(),
        }
    }

    /// Largest violation of index symmetry over all stored tensors.
    pub fn symmetry_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for k in 2..=self.order {
            for idx in all_multi_indices(self.n, k) {
                let mut sorted = idx.clone();
                sorted.sort_unstable();
                worst = worst.max((self.get(&idx) - self.get(&sorted)).abs());
            }
        }
        worst
    }
}

/// Lexicographic next permutation; false once the last one has been passed.
fn next_permutation(v: &mut [usize]) -> bool {
    if v.len() < 2 {
        return false;
    }
    let mut i = v.len() - 1;
    while i > 0 && v[i - 1] >= v[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = v.len() - 1;
    while v[j] <= v[i - 1] {
        j -= 1;
    }
    v.swap(i - 1, j);
    v[i..].reverse();
    true
}

/// Non-decreasing multi-indices of length `k` over `0..n`.
pub fn sorted_multi_indices(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(k);
    fn rec(n: usize, k: usize, start: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(n, k, i, cur, out);
            cur.pop();
        }
    }
    rec(n, k, 0, &mut cur, &mut out);
    out
}

pub(crate) fn all_multi_indices(n: usize, k: usize) -> Vec<Vec<usize>> {
    let total = n.pow(k as u32);
    (0..total)
        .map(|mut flat| {
            let mut idx = vec![0; k];
            for slot in idx.iter_mut().rev() {
                *slot = flat % n;
                flat /= n;
            }
            idx
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symmetric_fill_covers_permutations() {
        let mut j = Jet::zeros(3, 3);
        j.set_symmetric(&[2, 0, 1], 5.0);
        for idx in [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]] {
            assert_eq!(j.get(&idx), 5.0);
        }
        j.set_symmetric(&[1, 1, 0], -2.0);
        assert_eq!(j.get(&[1, 0, 1]), -2.0);
        assert_eq!(j.symmetry_defect(), 0.0);
    }

    #[test]
    fn multi_index_counts() {
        // C(n + k - 1, k)
        assert_eq!(sorted_multi_indices(4, 2).len(), 10);
        assert_eq!(sorted_multi_indices(4, 3).len(), 20);
        assert_eq!(sorted_multi_indices(4, 4).len(), 35);
        assert_eq!(all_multi_indices(4, 3).len(), 64);
    }
}
