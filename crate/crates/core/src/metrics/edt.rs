//! Exact Euclidean distance to the nearest foreground pixel.

/// Nearest foreground pixel for every pixel, with squared distance.
///
/// Ties are broken by smallest row, then smallest column, so the result is
/// a pure function of the mask. `None` when the mask has no foreground.
pub fn nearest_foreground(mask: &[u8], h: usize, w: usize) -> Option<(Vec<u64>, Vec<usize>)> {
    if !mask.contains(&1) {
        return None;
    }
    // Per column, the closest foreground row (upper one on ties).
    let mut col_row = vec![usize::MAX; h * w];
    for x in 0..w {
        let mut above: Option<usize> = None;
        for y in 0..h {
            if mask[y * w + x] == 1 {
                above = Some(y);
            }
            col_row[y * w + x] = above.map_or(usize::MAX, |a| a);
        }
        let mut below: Option<usize> = None;
        for y in (0..h).rev() {
            if mask[y * w + x] == 1 {
                below = Some(y);
            }
            let i = y * w + x;
            if let Some(b) = below {
                let a = col_row[i];
                if a == usize::MAX || b - y < y - a {
                    col_row[i] = b;
                }
            }
        }
    }

    let mut dist = vec![0u64; h * w];
    let mut index = vec![0usize; h * w];
    for y in 0..h {
        for x in 0..w {
            let mut best: Option<(u64, usize, usize)> = None;
            for o in 0..w {
                let reach = (o * o) as u64;
                if best.is_some_and(|b| reach > b.0) {
                    break;
                }
                let mut consider = |xx: usize| {
                    let r = col_row[y * w + xx];
                    if r == usize::MAX {
                        return;
                    }
                    let dy = r.abs_diff(y) as u64;
                    let key = (reach + dy * dy, r, xx);
                    if best.is_none_or(|b| key < b) {
                        best = Some(key);
                    }
                };
                if o <= x {
                    consider(x - o);
                }
                if o > 0 && x + o < w {
                    consider(x + o);
                }
            }
            let (d, r, c) = best.expect("mask has foreground");
            dist[y * w + x] = d;
            index[y * w + x] = r * w + c;
        }
    }
    Some((dist, index))
}
