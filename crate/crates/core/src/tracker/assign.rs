//! Gated optimal one-to-one assignment (Hungarian method).

/// Minimum-cost assignment of rows to distinct columns for a rectangular
/// cost matrix. Every row is assigned when `rows <= cols`, otherwise every
/// column is. Returns the column chosen for each row.
pub fn hungarian(cost: &[Vec<f64>]) -> Vec<Option<usize>> {
    let n = cost.len();
    if n == 0 {
        return Vec::new();
    }
    let m = cost[0].len();
    if m == 0 {
        return vec![None; n];
    }
    if n > m {
        let transposed: Vec<Vec<f64>> = (0..m).map(|j| (0..n).map(|i| cost[i][j]).collect()).collect();
        let cols = hungarian(&transposed);
        let mut rows = vec![None; n];
        for (j, i) in cols.into_iter().enumerate() {
            if let Some(i) = i {
                rows[i] = Some(j);
            }
        }
        return rows;
    }

    // Shortest augmenting path with potentials; 1-based with a dummy column 0.
    let inf = f64::INFINITY;
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=m {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut rows = vec![None; n];
    for j in 1..=m {
        if p[j] != 0 {
            rows[p[j] - 1] = Some(j - 1);
        }
    }
    rows
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Assignment {
    /// `(track index, blob index)` pairs, ordered by track index.
    pub matches: Vec<(usize, usize)>,
    pub unmatched_tracks: Vec<usize>,
    pub unmatched_blobs: Vec<usize>,
}

/// Pairs predicted track positions with blob centroids. Maximizes the number
/// of pairs within `gate_px`, then minimizes their total Euclidean distance.
pub fn associate(tracks: &[[f64; 2]], blobs: &[[f64; 2]], gate_px: f64) -> Assignment {
    let dist = |a: &[f64; 2], b: &[f64; 2]| ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
    let penalty = (tracks.len().min(blobs.len()) as f64 + 1.0) * gate_px.max(1.0) * 2.0 + 1.0;
    let cost: Vec<Vec<f64>> = tracks
        .iter()
        .map(|t| {
            blobs
                .iter()
                .map(|b| {
                    let d = dist(t, b);
                    if d <= gate_px {
                        d
                    } else {
                        penalty
                    }
                })
                .collect()
        })
        .collect();
    let rows = hungarian(&cost);
    let mut out = Assignment::default();
    let mut blob_used = vec![false; blobs.len()];
    for (i, col) in rows.into_iter().enumerate() {
        match col {
            Some(j) if dist(&tracks[i], &blobs[j]) <= gate_px => {
                out.matches.push((i, j));
                blob_used[j] = true;
            }
            _ => out.unmatched_tracks.push(i),
        }
    }
    out.unmatched_blobs = (0..blobs.len()).filter(|&j| !blob_used[j]).collect();
    out
}
