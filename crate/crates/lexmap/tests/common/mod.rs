//! Brute-force reference implementations the integration suites check the
//! library against. Everything here is written for clarity, not speed, and
//! stays independent of the code paths under test.

#![allow(dead_code)]

use lexmap::linalg::MatRef;

pub fn naive_cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// Full q x m cosine matrix.
pub fn naive_cosine_matrix(queries: MatRef<'_>, keys: MatRef<'_>) -> Vec<Vec<f64>> {
    (0..queries.rows)
        .map(|i| {
            (0..keys.rows)
                .map(|j| naive_cosine(queries.row(i), keys.row(j)))
                .collect()
        })
        .collect()
}

/// Indices of the k largest scores, ties broken by lower index.
pub fn naive_topk(scores: &[f64], k: usize) -> Vec<(usize, f64)> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap().then(a.cmp(&b)));
    order.truncate(k);
    order.into_iter().map(|i| (i, scores[i])).collect()
}

pub fn naive_mean_topk(scores: &[f64], n: usize) -> f64 {
    naive_topk(scores, n).iter().map(|&(_, s)| s).sum::<f64>() / n as f64
}

/// Full CSLS score matrix with penalties over the two pools themselves.
pub fn naive_csls_matrix(queries: MatRef<'_>, keys: MatRef<'_>, n: usize) -> Vec<Vec<f64>> {
    let cos = naive_cosine_matrix(queries, keys);
    let rq: Vec<f64> = (0..queries.rows).map(|i| naive_mean_topk(&cos[i], n)).collect();
    let rk: Vec<f64> = (0..keys.rows)
        .map(|j| {
            let col: Vec<f64> = (0..queries.rows).map(|i| cos[i][j]).collect();
            naive_mean_topk(&col, n)
        })
        .collect();
    (0..queries.rows)
        .map(|i| (0..keys.rows).map(|j| 2.0 * cos[i][j] - rq[i] - rk[j]).collect())
        .collect()
}

/// Mutual CSLS nearest neighbors between two pools.
pub fn naive_mutual_lexicon(queries: MatRef<'_>, keys: MatRef<'_>, n: usize) -> Vec<(usize, usize)> {
    let scores = naive_csls_matrix(queries, keys, n);
    let row_best: Vec<usize> = (0..queries.rows)
        .map(|i| naive_topk(&scores[i], 1)[0].0)
        .collect();
    let col_best: Vec<usize> = (0..keys.rows)
        .map(|j| {
            let col: Vec<f64> = (0..queries.rows).map(|i| scores[i][j]).collect();
            naive_topk(&col, 1)[0].0
        })
        .collect();
    let mut pairs = Vec::new();
    for (i, &j) in row_best.iter().enumerate() {
        if col_best[j] == i {
            pairs.push((i, j));
        }
    }
    pairs
}

/// mean_csls the slow way: mean over mapped source words of their best CSLS
/// score against the mapped target pool.
pub fn naive_mean_csls(queries: MatRef<'_>, keys: MatRef<'_>, n: usize) -> f64 {
    let scores = naive_csls_matrix(queries, keys, n);
    let total: f64 = (0..queries.rows)
        .map(|i| naive_topk(&scores[i], 1)[0].1)
        .sum();
    total / queries.rows as f64
}

/// Word-translation precision@k the slow way. `gold[i]` is the set of
/// acceptable key indices for query row i.
pub fn naive_precision_at_k(
    queries: MatRef<'_>,
    keys: MatRef<'_>,
    gold: &[Vec<usize>],
    n: usize,
    k: usize,
) -> f64 {
    let cos = naive_cosine_matrix(queries, keys);
    // Penalties over the full pools, as the evaluation protocol specifies.
    let rq: Vec<f64> = (0..queries.rows).map(|i| naive_mean_topk(&cos[i], n)).collect();
    let rk: Vec<f64> = (0..keys.rows)
        .map(|j| {
            let col: Vec<f64> = (0..queries.rows).map(|i| cos[i][j]).collect();
            naive_mean_topk(&col, n)
        })
        .collect();
    let mut hits = 0;
    for (i, golds) in gold.iter().enumerate() {
        let scores: Vec<f64> = (0..keys.rows)
            .map(|j| 2.0 * cos[i][j] - rq[i] - rk[j])
            .collect();
        let top = naive_topk(&scores, k);
        if top.iter().any(|&(j, _)| golds.contains(&j)) {
            hits += 1;
        }
    }
    hits as f64 / gold.len() as f64
}

/// Spearman rank correlation with average ranks, written independently.
pub fn naive_spearman(x: &[f64], y: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let n = v.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| v[a].partial_cmp(&v[b]).unwrap());
        let mut out = vec![0.0; n];
        let mut i = 0;
        while i < n {
            let mut j = i;
            while j + 1 < n && v[order[j + 1]] == v[order[i]] {
                j += 1;
            }
            let avg = (i + j) as f64 / 2.0 + 1.0;
            for &idx in &order[i..=j] {
                out[idx] = avg;
            }
            i = j + 1;
        }
        out
    }
    let rx = ranks(x);
    let ry = ranks(y);
    let n = x.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut dx = 0.0;
    let mut dy = 0.0;
    for (&a, &b) in rx.iter().zip(&ry) {
        num += (a - mx) * (b - my);
        dx += (a - mx) * (a - mx);
        dy += (b - my) * (b - my);
    }
    num / (dx * dy).sqrt()
}
