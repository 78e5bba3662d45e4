//! Seeded k-means++ partitioning and PAM k-medoid reduction.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub const KMEANS_RESTARTS: usize = 10;
pub const KMEANS_MAX_ITER: usize = 300;

#[derive(Clone, Debug, PartialEq)]
pub struct KMeans {
    pub centroids: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub inertia: f64,
}

pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Index of the nearest centroid (lowest index on ties).
pub fn nearest(centroids: &[Vec<f64>], point: &[f64]) -> usize {
    let mut best = (0, f64::INFINITY);
    for (k, c) in centroids.iter().enumerate() {
        let d = squared_distance(c, point);
        if d < best.1 {
            best = (k, d);
        }
    }
    best.0
}

fn check_points(points: &[Vec<f64>], k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::InvalidConfig(
            "cluster count must be at least 1".into(),
        ));
    }
    if points.len() < k {
        return Err(Error::InsufficientData(format!(
            "{} points for {k} clusters",
            points.len()
        )));
    }
    let dim = points[0].len();
    if let Some(p) = points.iter().find(|p| p.len() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: p.len(),
        });
    }
    Ok(())
}

/// Lloyd's algorithm from k-means++ seeds, best of `restarts` runs.
pub fn kmeans(points: &[Vec<f64>], k: usize, seed: u64, restarts: usize) -> Result<KMeans> {
    check_points(points, k)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<KMeans> = None;
    for _ in 0..restarts.max(1) {
        let run = lloyd(points, plus_plus(points, k, &mut rng));
        if best.as_ref().is_none_or(|b| run.inertia < b.inertia) {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one restart"))
}

fn plus_plus(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut centroids = vec![points[rng.random_range(0..points.len())].clone()];
    let mut d2: Vec<f64> = points
        .iter()
        .map(|p| squared_distance(p, &centroids[0]))
        .collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut idx = points.len() - 1;
            for (i, &d) in d2.iter().enumerate() {
                if target < d {
                    idx = i;
                    break;
                }
                target -= d;
            }
            idx
        } else {
            // All points coincide with a centroid already.
            rng.random_range(0..points.len())
        };
        centroids.push(points[pick].clone());
        for (i, p) in points.iter().enumerate() {
            d2[i] = d2[i].min(squared_distance(p, &centroids[centroids.len() - 1]));
        }
    }
    centroids
}

fn lloyd(points: &[Vec<f64>], mut centroids: Vec<Vec<f64>>) -> KMeans {
    let k = centroids.len();
    let dim = points[0].len();
    let mut labels: Vec<usize> = points.iter().map(|p| nearest(&centroids, p)).collect();
    for _ in 0..KMEANS_MAX_ITER {
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &l) in points.iter().zip(&labels) {
            counts[l] += 1;
            for (s, x) in sums[l].iter_mut().zip(p) {
                *s += x;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                centroids[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            } else {
                // Re-seed an empty cluster at the point farthest from its centroid.
                let far = (0..points.len())
                    .max_by(|&a, &b| {
                        let da = squared_distance(&points[a], &centroids[labels[a]]);
                        let db = squared_distance(&points[b], &centroids[labels[b]]);
                        da.total_cmp(&db).then(b.cmp(&a))
                    })
                    .expect("non-empty");
                centroids[c] = points[far].clone();
            }
        }
        let next: Vec<usize> = points.iter().map(|p| nearest(&centroids, p)).collect();
        if next == labels {
            break;
        }
        labels = next;
    }
    let inertia = points
        .iter()
        .zip(&labels)
        .map(|(p, &l)| squared_distance(p, &centroids[l]))
        .sum();
    KMeans {
        centroids,
        labels,
        inertia,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Medoids {
    /// Indices into the input points.
    pub indices: Vec<usize>,
    /// Share of the input points nearest to each medoid; sums to one.
    pub weights: Vec<f64>,
}

/// Partitioning Around Medoids (greedy BUILD, then best-improvement SWAP)
/// under Euclidean distance. Medoids that end up representing no point
/// (possible only with duplicate points) are dropped.
pub fn pam(points: &[Vec<f64>], m: usize) -> Result<Medoids> {
    check_points(points, m)?;
    let n = points.len();
    let dist: Vec<Vec<f64>> = points
        .iter()
        .map(|a| {
            points
                .iter()
                .map(|b| squared_distance(a, b).sqrt())
                .collect()
        })
        .collect();

    // BUILD: start from the most central point, then add the point that
    // lowers the total distance most.
    let mut medoids: Vec<usize> = Vec::with_capacity(m);
    let mut near = vec![f64::INFINITY; n];
    while medoids.len() < m {
        let mut best = (usize::MAX, f64::INFINITY);
        for c in 0..n {
            if medoids.contains(&c) {
                continue;
            }
            let total: f64 = (0..n).map(|j| near[j].min(dist[c][j])).sum();
            if total < best.1 {
                best = (c, total);
            }
        }
        medoids.push(best.0);
        for j in 0..n {
            near[j] = near[j].min(dist[best.0][j]);
        }
    }

    // SWAP until no exchange improves the objective.
    let cost = |meds: &[usize]| -> f64 {
        (0..n)
            .map(|j| {
                meds.iter()
                    .map(|&c| dist[c][j])
                    .fold(f64::INFINITY, f64::min)
            })
            .sum()
    };
    let mut current = cost(&medoids);
    loop {
        let (nearest_d, second_d) = nearest_two(&medoids, &dist, n);
        let mut best = (0usize, 0usize, 0.0f64);
        for (slot, &out) in medoids.iter().enumerate() {
            for cand in 0..n {
                if medoids.contains(&cand) {
                    continue;
                }
                let mut delta = 0.0;
                for j in 0..n {
                    let d_new = dist[cand][j];
                    let base = if dist[out][j] == nearest_d[j] {
                        second_d[j]
                    } else {
                        nearest_d[j]
                    };
                    delta += d_new.min(base) - nearest_d[j];
                }
                if delta < best.2 {
                    best = (slot, cand, delta);
                }
            }
        }
        if best.2 >= -1e-12 * (1.0 + current) {
            break;
        }
        medoids[best.0] = best.1;
        current = cost(&medoids);
    }

    let mut counts = vec![0usize; m];
    for j in 0..n {
        let mut pick = (0, f64::INFINITY);
        for (s, &c) in medoids.iter().enumerate() {
            if dist[c][j] < pick.1 {
                pick = (s, dist[c][j]);
            }
        }
        counts[pick.0] += 1;
    }
    let (indices, weights) = medoids
        .iter()
        .zip(&counts)
        .filter(|(_, &c)| c > 0)
        .map(|(&i, &c)| (i, c as f64 / n as f64))
        .unzip();
    Ok(Medoids { indices, weights })
}

/// Distance of each point to its nearest and second-nearest medoid.
fn nearest_two(medoids: &[usize], dist: &[Vec<f64>], n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut first = vec![f64::INFINITY; n];
    let mut second = vec![f64::INFINITY; n];
    for &c in medoids {
        for j in 0..n {
            let d = dist[c][j];
            if d < first[j] {
                second[j] = first[j];
                first[j] = d;
            } else if d < second[j] {
                second[j] = d;
            }
        }
    }
    (first, second)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn line(xs: &[f64]) -> Vec<Vec<f64>> {
        xs.iter().map(|&x| vec![x]).collect()
    }

    #[test]
    fn separates_two_groups() {
        let pts = line(&[1.0, 2.0, 3.0, 100.0, 101.0, 102.0]);
        let km = kmeans(&pts, 2, 7, KMEANS_RESTARTS).unwrap();
        assert_eq!(km.labels[0], km.labels[2]);
        assert_eq!(km.labels[3], km.labels[5]);
        assert_ne!(km.labels[0], km.labels[3]);
        let mut cs: Vec<f64> = km.centroids.iter().map(|c| c[0]).collect();
        cs.sort_by(f64::total_cmp);
        assert_eq!(cs, vec![2.0, 101.0]);
        assert!((km.inertia - 4.0).abs() < 1e-12);
        assert_eq!(km, kmeans(&pts, 2, 7, KMEANS_RESTARTS).unwrap());
    }

    #[test]
    fn too_few_points() {
        assert!(matches!(
            kmeans(&line(&[1.0]), 2, 0, 1),
            Err(Error::InsufficientData(_))
        ));
        assert!(kmeans(&line(&[1.0]), 0, 0, 1).is_err());
    }

    #[test]
    fn pam_picks_group_centres_with_masses() {
        let pts = line(&[0.0, 1.0, 2.0, 10.0, 11.0]);
        let med = pam(&pts, 2).unwrap();
        let mut pairs: Vec<(usize, f64)> = med
            .indices
            .iter()
            .copied()
            .zip(med.weights.iter().copied())
            .collect();
        pairs.sort_by_key(|p| p.0);
        assert_eq!(pairs[0], (1, 0.6));
        assert!(pairs[1].0 == 3 || pairs[1].0 == 4);
        assert!((pairs[1].1 - 0.4).abs() < 1e-15);
    }

    #[test]
    fn pam_with_every_point_is_identity() {
        let pts = line(&[3.0, 1.0, 2.0]);
        let med = pam(&pts, 3).unwrap();
        let mut idx = med.indices.clone();
        idx.sort();
        assert_eq!(idx, vec![0, 1, 2]);
        assert!(med.weights.iter().all(|&w| (w - 1.0 / 3.0).abs() < 1e-15));
    }

    /// Total distance of every point to its nearest medoid.
    fn pam_cost(pts: &[Vec<f64>], meds: &[usize]) -> f64 {
        pts.iter()
            .map(|p| {
                meds.iter()
                    .map(|&c| squared_distance(p, &pts[c]).sqrt())
                    .fold(f64::INFINITY, f64::min)
            })
            .sum()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn pam_weights_are_a_distribution(xs in prop::collection::vec(-50.0f64..50.0, 2..40), frac in 0.05f64..1.0) {
            let pts = line(&xs);
            let m = ((frac * pts.len() as f64).ceil() as usize).clamp(1, pts.len());
            let med = pam(&pts, m).unwrap();
            prop_assert!(med.indices.len() <= m);
            prop_assert!(med.weights.iter().all(|&w| w > 0.0));
            prop_assert!((med.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            // No single swap can improve a PAM local optimum.
            let base = pam_cost(&pts, &med.indices);
            if med.indices.len() == m {
                for s in 0..m {
                    for c in 0..pts.len() {
                        if med.indices.contains(&c) { continue; }
                        let mut alt = med.indices.clone();
                        alt[s] = c;
                        prop_assert!(pam_cost(&pts, &alt) >= base - 1e-9 * (1.0 + base));
                    }
                }
            }
        }

        #[test]
        fn kmeans_labels_point_to_nearest_centroid(xs in prop::collection::vec(-50.0f64..50.0, 3..60), k in 1usize..4, seed in any::<u64>()) {
            let pts = line(&xs);
            let km = kmeans(&pts, k, seed, 3).unwrap();
            for (p, &l) in pts.iter().zip(&km.labels) {
                prop_assert_eq!(nearest(&km.centroids, p), l);
            }
        }
    }
}
