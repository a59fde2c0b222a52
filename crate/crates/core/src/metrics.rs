//! Cluster-separation metrics over labeled latent points.

/// Mean silhouette with Euclidean distance. Returns `None` (not applicable)
/// unless there are at least two labels with at least two points each.
pub fn silhouette(points: &[Vec<f64>], labels: &[usize]) -> Option<f64> {
    assert_eq!(points.len(), labels.len(), "one label per point");
    let mut uniq: Vec<usize> = labels.to_vec();
    uniq.sort_unstable();
    uniq.dedup();
    let counts: Vec<usize> = uniq.iter().map(|u| labels.iter().filter(|&&l| l == *u).count()).collect();
    if uniq.len() < 2 || counts.iter().any(|&c| c < 2) {
        return None;
    }
    let k = uniq.len();
    let slot = |l: usize| uniq.binary_search(&l).expect("label present");
    let n = points.len();
    let mut total = 0.0;
    let mut sums = vec![0.0; k];
    for i in 0..n {
        sums.iter_mut().for_each(|s| *s = 0.0);
        for j in 0..n {
            if i != j {
                sums[slot(labels[j])] += euclid(&points[i], &points[j]);
            }
        }
        let own = slot(labels[i]);
        let a = sums[own] / (counts[own] - 1) as f64;
        let b = (0..k)
            .filter(|&c| c != own)
            .map(|c| sums[c] / counts[c] as f64)
            .fold(f64::INFINITY, f64::min);
        let d = a.max(b);
        total += if d > 0.0 { (b - a) / d } else { 0.0 };
    }
    Some(total / n as f64)
}

pub fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Per-label centroids, in ascending label order.
pub fn centroids(points: &[Vec<f64>], labels: &[usize]) -> Vec<(usize, Vec<f64>)> {
    let mut uniq: Vec<usize> = labels.to_vec();
    uniq.sort_unstable();
    uniq.dedup();
    uniq.into_iter()
        .map(|u| {
            let members: Vec<&Vec<f64>> = points.iter().zip(labels).filter(|(_, &l)| l == u).map(|(p, _)| p).collect();
            let dim = members[0].len();
            let mut c = vec![0.0; dim];
            for p in &members {
                for (ci, pi) in c.iter_mut().zip(p.iter()) {
                    *ci += pi;
                }
            }
            c.iter_mut().for_each(|v| *v /= members.len() as f64);
            (u, c)
        })
        .collect()
}

/// Root-mean-square distance of each label's points to its centroid.
pub fn cluster_spread(points: &[Vec<f64>], labels: &[usize]) -> Vec<(usize, f64)> {
    centroids(points, labels)
        .into_iter()
        .map(|(u, c)| {
            let d: Vec<f64> = points
                .iter()
                .zip(labels)
                .filter(|(_, &l)| l == u)
                .map(|(p, _)| euclid(p, &c).powi(2))
                .collect();
            (u, (d.iter().sum::<f64>() / d.len() as f64).sqrt())
        })
        .collect()
}

/// Pairwise centroid distances as `(label_a, label_b, distance)` with `a < b`.
pub fn centroid_distances(points: &[Vec<f64>], labels: &[usize]) -> Vec<(usize, usize, f64)> {
    let cs = centroids(points, labels);
    let mut out = Vec::new();
    for i in 0..cs.len() {
        for j in i + 1..cs.len() {
            out.push((cs[i].0, cs[j].0, euclid(&cs[i].1, &cs[j].1)));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separated_clusters_near_one() {
        let pts: Vec<Vec<f64>> = (0..20)
            .map(|i| {
                let off = if i < 10 { 0.0 } else { 100.0 };
                vec![off + (i % 10) as f64 * 0.01, 0.0, 0.0]
            })
            .collect();
        let labels: Vec<usize> = (0..20).map(|i| i / 10).collect();
        assert!(silhouette(&pts, &labels).unwrap() > 0.99);
    }

    #[test]
    fn degenerate_inputs_not_applicable() {
        let pts = vec![vec![0.0], vec![1.0], vec![2.0]];
        assert_eq!(silhouette(&pts, &[0, 0, 0]), None);
        assert_eq!(silhouette(&pts, &[0, 0, 1]), None);
    }

    #[test]
    fn centroid_distance_basic() {
        let pts = vec![vec![0.0, 0.0], vec![0.0, 2.0], vec![3.0, 0.0], vec![3.0, 2.0]];
        let d = centroid_distances(&pts, &[0, 0, 1, 1]);
        assert_eq!(d, vec![(0, 1, 3.0)]);
        assert_eq!(cluster_spread(&pts, &[0, 0, 1, 1]), vec![(0, 1.0), (1, 1.0)]);
    }
}
