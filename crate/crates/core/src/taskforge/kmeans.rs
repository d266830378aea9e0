use rand::Rng as _;

use super::{Descriptor, TaskCluster};
use crate::rng::substream;
use crate::{Error, Result};

pub const DEFAULT_MAX_ITER: usize = 300;

#[derive(Clone, Debug, PartialEq)]
pub struct KMeansFit {
    pub clusters: Vec<TaskCluster>,
    /// Within-cluster sum of squares after every Lloyd iteration.
    pub inertia_trace: Vec<f64>,
    pub converged: bool,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Index of the nearest centroid, lowest index on ties.
pub(crate) fn nearest(point: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, c) in centroids.iter().enumerate() {
        let d = sq_dist(point, c);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

fn seed_centroids(points: &[&[f64]], k: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = substream(seed, "kmeans-init");
    let mut chosen = vec![rng.gen_range(0..points.len())];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, points[chosen[0]])).collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.gen_range(0.0..total);
            let mut pick = None;
            for (i, &d) in d2.iter().enumerate() {
                if d > 0.0 {
                    pick = Some(i);
                    if target < d {
                        break;
                    }
                    target -= d;
                }
            }
            pick.expect("positive total implies a positive weight")
        } else {
            // all remaining points coincide with a centroid
            let free: Vec<usize> = (0..points.len()).filter(|i| !chosen.contains(i)).collect();
            free[rng.gen_range(0..free.len())]
        };
        chosen.push(next);
        for (i, p) in points.iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(p, points[next]));
        }
    }
    chosen.iter().map(|&i| points[i].to_vec()).collect()
}

pub fn kmeans(descriptors: &[Descriptor], k: usize, seed: u64) -> Result<KMeansFit> {
    kmeans_with(descriptors, k, seed, DEFAULT_MAX_ITER)
}

/// k-means++ seeding followed by Lloyd iterations. Degenerate descriptors
/// are left out; an emptied cluster takes the point farthest from its centroid.
pub fn kmeans_with(descriptors: &[Descriptor], k: usize, seed: u64, max_iter: usize) -> Result<KMeansFit> {
    let usable: Vec<&Descriptor> = descriptors.iter().filter(|d| !d.degenerate).collect();
    if k == 0 {
        return Err(Error::Config("k must be positive".into()));
    }
    if usable.len() < k {
        return Err(Error::InsufficientSamples {
            needed: k,
            got: usable.len(),
        });
    }
    let dim = usable[0].vector.len();
    if let Some(d) = usable.iter().find(|d| d.vector.len() != dim) {
        return Err(Error::Length {
            expected: dim,
            actual: d.vector.len(),
        });
    }
    let points: Vec<&[f64]> = usable.iter().map(|d| d.vector.as_slice()).collect();
    let mut centroids = seed_centroids(&points, k, seed);
    let mut assign: Vec<usize> = vec![usize::MAX; points.len()];
    let mut trace = Vec::new();
    let mut converged = false;
    for _ in 0..max_iter {
        let previous = assign.clone();
        for (i, p) in points.iter().enumerate() {
            assign[i] = nearest(p, &centroids).0;
        }
        repair_empty(&points, &mut assign, &centroids, k);
        let changed = assign != previous;
        centroids = update_centroids(&points, &assign, k, dim);
        trace.push(inertia(&points, &assign, &centroids));
        if !changed {
            converged = true;
            break;
        }
    }
    let clusters = (0..k)
        .map(|c| {
            let mut member_ids: Vec<String> = usable
                .iter()
                .zip(&assign)
                .filter(|(_, &a)| a == c)
                .map(|(d, _)| d.image_id.clone())
                .collect();
            member_ids.sort();
            TaskCluster {
                cluster_id: c,
                member_ids,
                centroid: centroids[c].clone(),
            }
        })
        .collect();
    Ok(KMeansFit {
        clusters,
        inertia_trace: trace,
        converged,
    })
}

fn repair_empty(points: &[&[f64]], assign: &mut [usize], centroids: &[Vec<f64>], k: usize) {
    loop {
        let mut counts = vec![0usize; k];
        assign.iter().for_each(|&a| counts[a] += 1);
        let Some(empty) = counts.iter().position(|&c| c == 0) else {
            return;
        };
        let far = (0..points.len())
            .filter(|&i| counts[assign[i]] > 1)
            .max_by(|&a, &b| {
                let da = sq_dist(points[a], &centroids[assign[a]]);
                let db = sq_dist(points[b], &centroids[assign[b]]);
                da.partial_cmp(&db).unwrap_or(std::cmp::Ordering::Equal).then(b.cmp(&a))
            })
            .expect("n >= k leaves a donor cluster");
        assign[far] = empty;
    }
}

fn update_centroids(points: &[&[f64]], assign: &[usize], k: usize, dim: usize) -> Vec<Vec<f64>> {
    let mut sums = vec![vec![0.0; dim]; k];
    let mut counts = vec![0usize; k];
    for (p, &a) in points.iter().zip(assign) {
        counts[a] += 1;
        sums[a].iter_mut().zip(p.iter()).for_each(|(s, v)| *s += v);
    }
    for (s, &n) in sums.iter_mut().zip(&counts) {
        s.iter_mut().for_each(|v| *v /= n as f64);
    }
    sums
}

fn inertia(points: &[&[f64]], assign: &[usize], centroids: &[Vec<f64>]) -> f64 {
    points.iter().zip(assign).map(|(p, &a)| sq_dist(p, &centroids[a])).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;

    fn desc(id: usize, v: Vec<f64>) -> Descriptor {
        Descriptor {
            image_id: format!("img{id}"),
            vector: v,
            degenerate: false,
        }
    }

    fn blobs(seed: u64) -> Vec<Descriptor> {
        let mut rng = substream(seed, "blobs");
        (0..40)
            .map(|i| {
                let cx = if i < 20 { -5.0 } else { 5.0 };
                desc(i, vec![cx + rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5)])
            })
            .collect()
    }

    #[test]
    fn separated_blobs_split_cleanly_for_any_seed() {
        let data = blobs(1);
        for seed in 0..10 {
            let fit = kmeans(&data, 2, seed).unwrap();
            for c in &fit.clusters {
                let left = c.member_ids.iter().filter(|id| id[3..].parse::<usize>().unwrap() < 20).count();
                assert!(left == 0 || left == c.member_ids.len());
                assert_eq!(c.member_ids.len(), 20);
            }
        }
    }

    #[test]
    fn k_equals_n_gives_singletons() {
        let data = blobs(2);
        let fit = kmeans(&data[..7], 7, 3).unwrap();
        for c in &fit.clusters {
            assert_eq!(c.member_ids.len(), 1);
            let member = data.iter().find(|d| d.image_id == c.member_ids[0]).unwrap();
            assert_eq!(c.centroid, member.vector);
        }
    }

    #[test]
    fn too_few_descriptors() {
        let data = blobs(3);
        assert!(matches!(kmeans(&data[..3], 4, 0), Err(Error::InsufficientSamples { .. })));
    }

    #[test]
    fn degenerate_descriptors_are_excluded() {
        let mut data = blobs(4);
        data.push(Descriptor {
            image_id: "zero".into(),
            vector: vec![0.0, 0.0],
            degenerate: true,
        });
        let fit = kmeans(&data, 2, 0).unwrap();
        assert!(fit.clusters.iter().all(|c| !c.member_ids.contains(&"zero".to_string())));
    }

    #[test]
    fn duplicate_points_still_fill_every_cluster() {
        let data: Vec<Descriptor> = (0..6).map(|i| desc(i, vec![1.0, 1.0])).collect();
        let fit = kmeans(&data, 3, 0).unwrap();
        assert!(fit.clusters.iter().all(|c| !c.member_ids.is_empty()));
    }
}
