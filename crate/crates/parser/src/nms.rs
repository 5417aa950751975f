//! Spatial and cross-category non-maximum suppression.
//!
//! Candidates are totally ordered by score (descending), then row-major
//! cell index, then category index. A candidate survives if it precedes
//! every competitor within the suppression radius.

use serde::{Deserialize, Serialize};
use std::cmp::Ordering;

use vqa3d_core::Category;

use crate::activation::ActivationMap;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    pub category: Category,
    pub row: usize,
    pub col: usize,
    pub score: f64,
    /// Template index of the argmax pose, `u32::MAX` if unknown.
    pub template: u32,
}

impl Peak {
    fn cell(&self, cols: usize) -> usize {
        self.row * cols + self.col
    }

    fn dist2(&self, other: &Peak) -> f64 {
        let dr = self.row as f64 - other.row as f64;
        let dc = self.col as f64 - other.col as f64;
        dr * dr + dc * dc
    }
}

/// `Less` when `a` should be kept in preference to `b`.
pub fn precedence(a: &Peak, b: &Peak, cols: usize) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then(a.cell(cols).cmp(&b.cell(cols)))
        .then(a.category.index().cmp(&b.category.index()))
}

/// Peaks of one activation map: cells above `threshold` that precede every
/// cell `l'` with `0 < |l' − l| < r`.
pub fn nms2d(map: &ActivationMap, r: usize, threshold: f64) -> Vec<Peak> {
    let (rows, cols) = (map.rows, map.cols);
    let reach = r.saturating_sub(1) as i64;
    let r2 = (r * r) as f64;
    let mut out = Vec::new();
    for row in 0..rows {
        for col in 0..cols {
            let k = row * cols + col;
            let s = map.scores[k];
            if !(s > threshold) {
                continue;
            }
            let me = Peak {
                category: map.category,
                row,
                col,
                score: s,
                template: map.best[k],
            };
            let mut keep = true;
            'scan: for dr in -reach..=reach {
                for dc in -reach..=reach {
                    let d2 = (dr * dr + dc * dc) as f64;
                    if d2 == 0.0 || d2 >= r2 {
                        continue;
                    }
                    let (rr, cc) = (row as i64 + dr, col as i64 + dc);
                    if rr < 0 || cc < 0 || rr >= rows as i64 || cc >= cols as i64 {
                        continue;
                    }
                    let kk = rr as usize * cols + cc as usize;
                    let other = Peak {
                        category: map.category,
                        row: rr as usize,
                        col: cc as usize,
                        score: map.scores[kk],
                        template: map.best[kk],
                    };
                    if precedence(&other, &me, cols) == Ordering::Less {
                        keep = false;
                        break 'scan;
                    }
                }
            }
            if keep {
                out.push(me);
            }
        }
    }
    out
}

/// Cross-category suppression: a peak survives if it precedes every peak of
/// any category within distance `< r`, including other categories at the
/// same cell. Output is sorted by precedence.
pub fn nms3d(peaks: &[Vec<Peak>], r: usize, cols: usize) -> Vec<Peak> {
    let all: Vec<Peak> = peaks.iter().flatten().copied().collect();
    let r2 = (r * r) as f64;
    let mut out: Vec<Peak> = all
        .iter()
        .filter(|p| {
            all.iter()
                .all(|q| std::ptr::eq(*p, q) || p.dist2(q) >= r2 || precedence(p, q, cols) != Ordering::Greater)
        })
        .copied()
        .collect();
    out.sort_by(|a, b| precedence(a, b, cols));
    out
}

/// Map with every non-peak cell set to `-inf`.
pub fn peaks_to_map(template: &ActivationMap, peaks: &[Peak]) -> ActivationMap {
    let mut m = ActivationMap::from_scores(
        template.category,
        template.rows,
        template.cols,
        vec![f64::NEG_INFINITY; template.rows * template.cols],
    );
    for p in peaks.iter().filter(|p| p.category == template.category) {
        let k = p.row * template.cols + p.col;
        m.scores[k] = p.score;
        m.best[k] = p.template;
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;

    fn map(scores: &[(usize, usize, f64)]) -> ActivationMap {
        let mut m = ActivationMap::from_scores(Category::Car, 8, 8, vec![f64::NEG_INFINITY; 64]);
        for &(r, c, s) in scores {
            m.scores[r * 8 + c] = s;
        }
        m
    }

    #[test]
    fn adjacent_peaks_keep_larger() {
        let p = nms2d(&map(&[(3, 3, 5.0), (3, 4, 4.0)]), 2, 0.0);
        assert_eq!(p.len(), 1);
        assert_eq!((p[0].row, p[0].col), (3, 3));
    }

    #[test]
    fn equal_far_peaks_both_survive() {
        assert_eq!(nms2d(&map(&[(0, 0, 5.0), (7, 7, 5.0)]), 2, 0.0).len(), 2);
    }

    #[test]
    fn equal_neighbours_break_ties_row_major() {
        let p = nms2d(&map(&[(2, 2, 5.0), (2, 3, 5.0)]), 2, 0.0);
        assert_eq!(p.len(), 1);
        assert_eq!((p[0].row, p[0].col), (2, 2));
    }

    #[test]
    fn higher_category_wins_same_cell() {
        let car = Peak {
            category: Category::Car,
            row: 4,
            col: 4,
            score: 9.0,
            template: 0,
        };
        let bus = Peak {
            category: Category::Bus,
            score: 7.0,
            ..car
        };
        assert_eq!(nms3d(&[vec![car], vec![bus]], 2, 8), vec![car]);
    }
}
