//! Reference implementations used as oracles by the integration tests.
//! None of them share code with the library.

#![allow(dead_code)]

use std::path::{Path, PathBuf};

pub fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

const EPS: f64 = 1e-12;

struct Tableau {
    rows: Vec<Vec<f64>>,
    basis: Vec<usize>,
    width: usize,
}

impl Tableau {
    fn rhs(&self, r: usize) -> f64 {
        self.rows[r][self.width]
    }

    fn pivot(&mut self, r: usize, k: usize) {
        let p = self.rows[r][k];
        for v in self.rows[r].iter_mut() {
            *v /= p;
        }
        let pivot_row = self.rows[r].clone();
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i != r {
                let f = row[k];
                if f != 0.0 {
                    for (v, pv) in row.iter_mut().zip(&pivot_row) {
                        *v -= f * pv;
                    }
                }
            }
        }
        self.basis[r] = k;
    }

    /// Primal simplex with Bland's rule; only columns `< allowed` may enter.
    fn minimize(&mut self, cost: &[f64], allowed: usize) {
        loop {
            let reduced = |t: &Tableau, k: usize| {
                cost[k]
                    - t.basis
                        .iter()
                        .enumerate()
                        .map(|(r, &b)| cost[b] * t.rows[r][k])
                        .sum::<f64>()
            };
            let Some(k) =
                (0..allowed).find(|&k| !self.basis.contains(&k) && reduced(self, k) < -EPS)
            else {
                return;
            };
            let mut leave: Option<(f64, usize, usize)> = None;
            for r in 0..self.rows.len() {
                let a = self.rows[r][k];
                if a > EPS {
                    let ratio = self.rhs(r) / a;
                    let better = match leave {
                        None => true,
                        Some((best, _, b)) => {
                            ratio < best - EPS || (ratio <= best + EPS && self.basis[r] < b)
                        }
                    };
                    if better {
                        leave = Some((ratio, r, self.basis[r]));
                    }
                }
            }
            let (_, r, _) = leave.expect("transport LP is bounded");
            self.pivot(r, k);
        }
    }
}

/// Optimal transport cost between uniform clouds by two-phase simplex on
/// the transportation LP.
pub fn transport_lp(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    let (m, n) = (a.len(), b.len());
    let nv = m * n;
    let cost: Vec<f64> = (0..nv).map(|k| euclid(&a[k / n], &b[k % n])).collect();
    // Row sums for every source point; column sums for all but the last
    // target point (that constraint is implied).
    let nrows = m + n - 1;
    let width = nv + nrows;
    let mut rows = vec![vec![0.0; width + 1]; nrows];
    for i in 0..m {
        for j in 0..n {
            rows[i][i * n + j] = 1.0;
        }
        rows[i][width] = 1.0 / m as f64;
    }
    for j in 0..n - 1 {
        for i in 0..m {
            rows[m + j][i * n + j] = 1.0;
        }
        rows[m + j][width] = 1.0 / n as f64;
    }
    for (r, row) in rows.iter_mut().enumerate() {
        row[nv + r] = 1.0;
    }
    let mut t = Tableau {
        rows,
        basis: (nv..width).collect(),
        width,
    };
    let phase1: Vec<f64> = (0..width)
        .map(|k| if k >= nv { 1.0 } else { 0.0 })
        .collect();
    t.minimize(&phase1, width);
    for r in 0..nrows {
        if t.basis[r] >= nv {
            if let Some(k) = (0..nv).find(|&k| t.rows[r][k].abs() > 1e-9 && !t.basis.contains(&k)) {
                t.pivot(r, k);
            }
        }
    }
    let mut phase2 = cost.clone();
    phase2.extend(std::iter::repeat_n(0.0, nrows));
    t.minimize(&phase2, nv);
    (0..nrows)
        .filter(|&r| t.basis[r] < nv)
        .map(|r| cost[t.basis[r]] * t.rhs(r))
        .sum()
}

/// Equal-size transport by enumerating every permutation (Heap's algorithm).
pub fn transport_permutations(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    assert_eq!(a.len(), b.len());
    let n = a.len();
    let mut perm: Vec<usize> = (0..n).collect();
    let cost = |p: &[usize]| {
        p.iter()
            .enumerate()
            .map(|(i, &j)| euclid(&a[i], &b[j]))
            .sum::<f64>()
    };
    let mut best = cost(&perm);
    let mut c = vec![0usize; n];
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            best = best.min(cost(&perm));
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    best / n as f64
}

/// Every `k`-subset of `0..m` in lexicographic order.
pub fn subsets(m: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, m: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..m {
            cur.push(i);
            rec(i + 1, m, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, m, k, &mut Vec::new(), &mut out);
    out
}

/// Okapi BM25 written out term by term.
pub fn bm25_oracle(docs: &[Vec<&str>], query: &[&str], k1: f64, b: f64) -> Vec<f64> {
    let n = docs.len() as f64;
    let avgdl = docs.iter().map(|d| d.len()).sum::<usize>() as f64 / n;
    if avgdl == 0.0 {
        return vec![0.0; docs.len()];
    }
    let mut q: Vec<&str> = query.to_vec();
    q.sort();
    q.dedup();
    docs.iter()
        .map(|d| {
            q.iter()
                .map(|t| {
                    let df = docs.iter().filter(|x| x.contains(t)).count() as f64;
                    let idf = (1.0 + (n - df + 0.5) / (df + 0.5)).ln();
                    let tf = d.iter().filter(|x| *x == t).count() as f64;
                    idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * d.len() as f64 / avgdl))
                })
                .sum()
        })
        .collect()
}

pub fn manifest_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

/// Copies the toy corpus into a fresh directory and returns its config path.
pub fn toy_workspace(dir: &Path) -> PathBuf {
    let src = manifest_dir().join("tests/fixtures/toy");
    copy_dir(&src, dir);
    dir.join("run.toml")
}

pub fn copy_dir(src: &Path, dst: &Path) {
    std::fs::create_dir_all(dst).unwrap();
    for entry in std::fs::read_dir(src).unwrap() {
        let entry = entry.unwrap();
        let to = dst.join(entry.file_name());
        if entry.file_type().unwrap().is_dir() {
            copy_dir(&entry.path(), &to);
        } else {
            std::fs::copy(entry.path(), to).unwrap();
        }
    }
}

/// Relative path → bytes of every file under `dir`, sorted.
pub fn read_tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    fn walk(root: &Path, dir: &Path, out: &mut Vec<(String, Vec<u8>)>) {
        let mut entries: Vec<_> = std::fs::read_dir(dir)
            .unwrap()
            .map(|e| e.unwrap().path())
            .collect();
        entries.sort();
        for p in entries {
            if p.is_dir() {
                walk(root, &p, out);
            } else {
                let rel = p
                    .strip_prefix(root)
                    .unwrap()
                    .to_string_lossy()
                    .replace('\\', "/");
                out.push((rel, std::fs::read(&p).unwrap()));
            }
        }
    }
    let mut out = Vec::new();
    walk(dir, dir, &mut out);
    out
}
