//! Sparse LU factorization of simplex bases with product-form updates.
//!
//! The factorization eliminates one pivot `(row, column)` per step using a
//! Markowitz rule with threshold partial pivoting on the column. Singletons
//! are taken first, which covers most of a slack-heavy basis without any
//! fill. Later basis changes are appended as eta columns until the next
//! refactorization.

const THRESHOLD: f64 = 0.1;
const ZERO_PIVOT: f64 = 1e-11;
const SEARCH_COLUMNS: usize = 4;

/// Basis columns that could not be pivoted together with the rows left
/// without a pivot. Both lists have the same length.
#[derive(Debug, Clone)]
pub(crate) struct Singular {
    pub positions: Vec<usize>,
    pub rows: Vec<usize>,
}

#[derive(Debug, Clone, Default)]
pub(crate) struct LuFactor {
    m: usize,
    piv_row: Vec<usize>,
    piv_col: Vec<usize>,
    piv_val: Vec<f64>,
    l_start: Vec<usize>,
    l_idx: Vec<usize>,
    l_val: Vec<f64>,
    u_start: Vec<usize>,
    u_idx: Vec<usize>,
    u_val: Vec<f64>,
    eta_pos: Vec<usize>,
    eta_piv: Vec<f64>,
    eta_start: Vec<usize>,
    eta_idx: Vec<usize>,
    eta_val: Vec<f64>,
    work: Vec<f64>,
}

impl LuFactor {
    /// Factorizes the `m x m` matrix whose column `k` is given by
    /// `rows[start[k]..start[k+1]]` / `vals[...]`.
    pub fn factorize(
        m: usize,
        start: &[usize],
        rows: &[usize],
        vals: &[f64],
    ) -> Result<LuFactor, Singular> {
        let mut col_rows: Vec<Vec<usize>> = Vec::with_capacity(m);
        let mut col_vals: Vec<Vec<f64>> = Vec::with_capacity(m);
        let mut row_cols: Vec<Vec<usize>> = vec![Vec::new(); m];
        for k in 0..m {
            let mut cr = Vec::with_capacity(start[k + 1] - start[k]);
            let mut cv = Vec::with_capacity(start[k + 1] - start[k]);
            for p in start[k]..start[k + 1] {
                if vals[p] != 0.0 {
                    cr.push(rows[p]);
                    cv.push(vals[p]);
                    row_cols[rows[p]].push(k);
                }
            }
            col_rows.push(cr);
            col_vals.push(cv);
        }

        let mut col_active = vec![true; m];
        let mut row_active = vec![true; m];
        let mut buckets: Vec<Vec<usize>> = vec![Vec::new(); m + 2];
        for k in 0..m {
            buckets[col_rows[k].len()].push(k);
        }
        let mut row_singletons: Vec<usize> = (0..m).filter(|&r| row_cols[r].len() == 1).collect();

        let mut f = LuFactor {
            m,
            l_start: vec![0],
            u_start: vec![0],
            eta_start: vec![0],
            work: vec![0.0; m],
            ..Default::default()
        };
        let mut dead_cols: Vec<usize> = Vec::new();
        let mut marker: Vec<usize> = vec![usize::MAX; m];
        let mut mults: Vec<(usize, f64)> = Vec::new();
        let mut urow: Vec<(usize, f64)> = Vec::new();
        let mut remaining = m;

        while remaining > 0 {
            // Pivot selection.
            let mut choice: Option<(usize, usize)> = None; // (row, col)

            // Column singletons: no elimination needed.
            while let Some(&c) = buckets[1].last() {
                if col_active[c] && col_rows[c].len() == 1 {
                    if col_vals[c][0].abs() > ZERO_PIVOT {
                        choice = Some((col_rows[c][0], c));
                        break;
                    }
                    buckets[1].pop();
                    kill_column(
                        c,
                        &mut col_active,
                        &mut col_rows,
                        &mut col_vals,
                        &mut row_cols,
                        &mut row_singletons,
                        &row_active,
                    );
                    dead_cols.push(c);
                    remaining -= 1;
                } else {
                    buckets[1].pop();
                }
            }

            if choice.is_none() {
                while let Some(r) = row_singletons.pop() {
                    if !row_active[r] || row_cols[r].len() != 1 {
                        continue;
                    }
                    let c = row_cols[r][0];
                    let vals_c = &col_vals[c];
                    let at = col_rows[c]
                        .iter()
                        .position(|&i| i == r)
                        .expect("pattern mismatch");
                    let colmax = vals_c.iter().fold(0.0f64, |a, v| a.max(v.abs()));
                    if vals_c[at].abs() > ZERO_PIVOT && vals_c[at].abs() >= THRESHOLD * colmax {
                        choice = Some((r, c));
                        break;
                    }
                }
            }

            if choice.is_none() {
                // Markowitz search over the sparsest columns.
                let mut best: Option<(usize, usize, usize, f64)> = None; // (cost, row, col, |a|)
                let mut examined = 0;
                'outer: for count in 1..=m {
                    if count >= buckets.len() {
                        break;
                    }
                    let mut idx = 0;
                    while idx < buckets[count].len() {
                        let c = buckets[count][idx];
                        if !col_active[c] || col_rows[c].len() != count {
                            buckets[count].swap_remove(idx);
                            continue;
                        }
                        idx += 1;
                        let colmax = col_vals[c].iter().fold(0.0f64, |a, v| a.max(v.abs()));
                        if colmax <= ZERO_PIVOT {
                            continue;
                        }
                        for (p, &r) in col_rows[c].iter().enumerate() {
                            let a = col_vals[c][p].abs();
                            if a < THRESHOLD * colmax {
                                continue;
                            }
                            let cost = (row_cols[r].len() - 1) * (count - 1);
                            let better = match best {
                                None => true,
                                Some((bc, _, _, ba)) => cost < bc || (cost == bc && a > ba),
                            };
                            if better {
                                best = Some((cost, r, c, a));
                            }
                        }
                        examined += 1;
                        if examined >= SEARCH_COLUMNS {
                            break 'outer;
                        }
                    }
                    if let Some((bc, _, _, _)) = best {
                        // No column with more entries can beat this cost bound.
                        if bc <= count * count {
                            break;
                        }
                    }
                }
                if let Some((_, r, c, _)) = best {
                    choice = Some((r, c));
                }
            }

            let (r, c) = match choice {
                Some(rc) => rc,
                None => {
                    // Every remaining column is (numerically) empty.
                    for c in 0..m {
                        if col_active[c] {
                            kill_column(
                                c,
                                &mut col_active,
                                &mut col_rows,
                                &mut col_vals,
                                &mut row_cols,
                                &mut row_singletons,
                                &row_active,
                            );
                            dead_cols.push(c);
                        }
                    }
                    break;
                }
            };

            // Elimination.
            let at = col_rows[c]
                .iter()
                .position(|&i| i == r)
                .expect("pivot not in column");
            let pivot = col_vals[c][at];
            mults.clear();
            for (p, &i) in col_rows[c].iter().enumerate() {
                if i != r {
                    mults.push((i, col_vals[c][p] / pivot));
                }
            }
            urow.clear();
            for &j in &row_cols[r] {
                if j == c {
                    continue;
                }
                let q = col_rows[j]
                    .iter()
                    .position(|&i| i == r)
                    .expect("row pattern mismatch");
                urow.push((j, col_vals[j][q]));
                col_rows[j].swap_remove(q);
                col_vals[j].swap_remove(q);
            }
            for &(j, arj) in &urow {
                for (p, &i) in col_rows[j].iter().enumerate() {
                    marker[i] = p;
                }
                for &(i, l) in &mults {
                    let delta = -l * arj;
                    let p = marker[i];
                    if p != usize::MAX {
                        col_vals[j][p] += delta;
                    } else {
                        col_rows[j].push(i);
                        col_vals[j].push(delta);
                        row_cols[i].push(j);
                    }
                }
                for &i in &col_rows[j] {
                    marker[i] = usize::MAX;
                }
                let cnt = col_rows[j].len();
                buckets[cnt].push(j);
            }
            for &(i, _) in &mults {
                let rc = &mut row_cols[i];
                if let Some(q) = rc.iter().position(|&k| k == c) {
                    rc.swap_remove(q);
                }
                if rc.len() == 1 {
                    row_singletons.push(i);
                }
            }
            row_cols[r].clear();
            row_active[r] = false;
            col_active[c] = false;
            col_rows[c].clear();
            col_vals[c].clear();
            remaining -= 1;

            f.piv_row.push(r);
            f.piv_col.push(c);
            f.piv_val.push(pivot);
            for &(i, l) in &mults {
                f.l_idx.push(i);
                f.l_val.push(l);
            }
            f.l_start.push(f.l_idx.len());
            for &(j, v) in &urow {
                f.u_idx.push(j);
                f.u_val.push(v);
            }
            f.u_start.push(f.u_idx.len());
        }

        if !dead_cols.is_empty() {
            let rows: Vec<usize> = (0..m).filter(|&r| row_active[r]).collect();
            dead_cols.sort_unstable();
            debug_assert_eq!(rows.len(), dead_cols.len());
            return Err(Singular {
                positions: dead_cols,
                rows,
            });
        }
        Ok(f)
    }

    pub fn num_etas(&self) -> usize {
        self.eta_pos.len()
    }

    /// Solves `B x = b` in place; on entry `b` is indexed by row, on exit by
    /// basis position.
    pub fn ftran(&mut self, b: &mut Vec<f64>) {
        let m = self.m;
        for t in 0..m {
            let v = b[self.piv_row[t]];
            if v != 0.0 {
                for k in self.l_start[t]..self.l_start[t + 1] {
                    b[self.l_idx[k]] -= self.l_val[k] * v;
                }
            }
        }
        let work = &mut self.work;
        for t in (0..m).rev() {
            let mut v = b[self.piv_row[t]];
            for k in self.u_start[t]..self.u_start[t + 1] {
                v -= self.u_val[k] * work[self.u_idx[k]];
            }
            work[self.piv_col[t]] = v / self.piv_val[t];
        }
        for e in 0..self.eta_pos.len() {
            let r = self.eta_pos[e];
            let xr = work[r] / self.eta_piv[e];
            work[r] = xr;
            if xr != 0.0 {
                for k in self.eta_start[e]..self.eta_start[e + 1] {
                    work[self.eta_idx[k]] -= self.eta_val[k] * xr;
                }
            }
        }
        std::mem::swap(b, work);
    }

    /// Solves `B' y = d` in place; on entry `d` is indexed by basis position,
    /// on exit by row.
    pub fn btran(&mut self, d: &mut Vec<f64>) {
        let m = self.m;
        for e in (0..self.eta_pos.len()).rev() {
            let r = self.eta_pos[e];
            let mut s = d[r];
            for k in self.eta_start[e]..self.eta_start[e + 1] {
                s -= self.eta_val[k] * d[self.eta_idx[k]];
            }
            d[r] = s / self.eta_piv[e];
        }
        let work = &mut self.work;
        for t in 0..m {
            let z = d[self.piv_col[t]] / self.piv_val[t];
            work[self.piv_row[t]] = z;
            if z != 0.0 {
                for k in self.u_start[t]..self.u_start[t + 1] {
                    d[self.u_idx[k]] -= self.u_val[k] * z;
                }
            }
        }
        for t in (0..m).rev() {
            let r = self.piv_row[t];
            let mut s = work[r];
            for k in self.l_start[t]..self.l_start[t + 1] {
                s -= self.l_val[k] * work[self.l_idx[k]];
            }
            work[r] = s;
        }
        std::mem::swap(d, work);
    }

    /// Records the replacement of basis position `r` by a column whose
    /// FTRAN image is `alpha` (indexed by position).
    pub fn push_eta(&mut self, r: usize, alpha: &[f64]) {
        self.eta_pos.push(r);
        self.eta_piv.push(alpha[r]);
        for (k, &a) in alpha.iter().enumerate() {
            if k != r && a != 0.0 {
                self.eta_idx.push(k);
                self.eta_val.push(a);
            }
        }
        self.eta_start.push(self.eta_idx.len());
    }
}

fn kill_column(
    c: usize,
    col_active: &mut [bool],
    col_rows: &mut [Vec<usize>],
    col_vals: &mut [Vec<f64>],
    row_cols: &mut [Vec<usize>],
    row_singletons: &mut Vec<usize>,
    row_active: &[bool],
) {
    col_active[c] = false;
    for &i in &col_rows[c] {
        let rc = &mut row_cols[i];
        if let Some(q) = rc.iter().position(|&k| k == c) {
            rc.swap_remove(q);
        }
        if row_active[i] && rc.len() == 1 {
            row_singletons.push(i);
        }
    }
    col_rows[c].clear();
    col_vals[c].clear();
}
