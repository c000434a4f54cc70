use crate::tensor_io::MaskGrid;

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredMask {
    pub mask: MaskGrid,
    pub score: f64,
}

/// One consolidated group: the pivot, its members (input indices, pivot
/// first) and the voted mask.
#[derive(Debug, Clone, PartialEq)]
pub struct VoteGroup {
    pub pivot: usize,
    pub members: Vec<usize>,
    pub consolidated: ScoredMask,
}

/// Greedy pivot voting across backbones.
///
/// The best unused mask becomes a pivot; every unused mask whose binarized
/// IoU with it reaches `vote_iou` joins the group. The consolidated mask is
/// 1 where the member mean is strictly above `tau`, and its score is the
/// members' mean score. Groups whose vote leaves no foreground are dropped.
pub fn vote_groups(masks: &[ScoredMask], vote_iou: f64, tau: f64) -> Vec<VoteGroup> {
    let mut order: Vec<usize> = (0..masks.len()).collect();
    order.sort_by(|&a, &b| masks[b].score.total_cmp(&masks[a].score));
    let binary: Vec<MaskGrid> = masks.iter().map(|m| m.mask.binarize()).collect();

    let mut used = vec![false; masks.len()];
    let mut groups = Vec::new();
    for (pos, &pivot) in order.iter().enumerate() {
        if used[pivot] {
            continue;
        }
        used[pivot] = true;
        let mut members = vec![pivot];
        for &other in &order[pos + 1..] {
            if !used[other]
                && binary[pivot].same_dims(&binary[other])
                && binary[pivot].iou(&binary[other]) >= vote_iou
            {
                used[other] = true;
                members.push(other);
            }
        }

        let pm = &masks[pivot].mask;
        let inv = 1.0 / members.len() as f64;
        let mut voted = MaskGrid::zeros(pm.width, pm.height);
        for (i, v) in voted.values.iter_mut().enumerate() {
            let mean: f64 = members.iter().map(|&m| masks[m].mask.values[i]).sum::<f64>() * inv;
            if mean > tau {
                *v = 1.0;
            }
        }
        if voted.foreground_count() == 0 {
            continue;
        }
        let score = members.iter().map(|&m| masks[m].score).sum::<f64>() * inv;
        groups.push(VoteGroup {
            pivot,
            members,
            consolidated: ScoredMask {
                mask: voted,
                score,
            },
        });
    }
    groups
}

/// Consolidated masks of [`vote_groups`], best group first.
pub fn vote_masks(masks: &[ScoredMask], vote_iou: f64, tau: f64) -> Vec<ScoredMask> {
    vote_groups(masks, vote_iou, tau)
        .into_iter()
        .map(|g| g.consolidated)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rect(w: usize, h: usize, x0: usize, y0: usize, x1: usize, y1: usize) -> MaskGrid {
        let mut m = MaskGrid::zeros(w, h);
        for y in y0..y1 {
            for x in x0..x1 {
                m.set(x, y, 1.0);
            }
        }
        m
    }

    #[test]
    fn single_mask_is_binarized() {
        let m = MaskGrid::new(2, 2, vec![0.9, 0.2, 0.6, 0.4]).unwrap();
        let out = vote_masks(&[ScoredMask { mask: m.clone(), score: 0.5 }], 0.6, 0.5);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].mask, m.binarize());
    }

    #[test]
    fn identical_masks() {
        let m = rect(10, 10, 2, 2, 7, 8);
        let input: Vec<_> = [0.9, 0.8, 0.7]
            .iter()
            .map(|&s| ScoredMask { mask: m.clone(), score: s })
            .collect();
        let groups = vote_groups(&input, 0.6, 0.5);
        assert_eq!(groups.len(), 1);
        assert_eq!(groups[0].members, vec![0, 1, 2]);
        assert_eq!(groups[0].consolidated.mask, m);
        assert!((groups[0].consolidated.score - 0.8).abs() < 1e-12);
    }

    #[test]
    fn disjoint_flaps_voted_out() {
        // shared region R = [0,8)x[0,10); flaps of width 1 on opposite sides
        let r = rect(12, 10, 2, 0, 10, 10);
        let mut a = r.clone();
        let mut b = r.clone();
        for y in 0..10 {
            a.set(1, y, 1.0);
            b.set(10, y, 1.0);
        }
        let out = vote_masks(
            &[ScoredMask { mask: a, score: 0.9 }, ScoredMask { mask: b, score: 0.8 }],
            0.6,
            0.5,
        );
        assert_eq!(out.len(), 1);
        // pixelwise mean oracle: 1 on R, 0.5 on flaps, 0 elsewhere; keep > 0.5
        assert_eq!(out[0].mask, r);
    }

    #[test]
    fn order_invariant_with_distinct_scores() {
        let a = ScoredMask { mask: rect(16, 16, 0, 0, 8, 8), score: 0.9 };
        let b = ScoredMask { mask: rect(16, 16, 1, 0, 8, 8), score: 0.7 };
        let c = ScoredMask { mask: rect(16, 16, 8, 8, 16, 16), score: 0.8 };
        let one = vote_masks(&[a.clone(), b.clone(), c.clone()], 0.6, 0.5);
        let two = vote_masks(&[c, b, a], 0.6, 0.5);
        assert_eq!(one, two);
        assert_eq!(one.len(), 2);
    }
}
