//! K-means with k-means++ seeding over 2-D node features.

use rand::Rng;

use crate::error::{Error, Result};

const MAX_ITERS: usize = 100;
const TOL: f64 = 1e-6;

fn dist2(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)
}

fn nearest(p: [f64; 2], centroids: &[[f64; 2]]) -> usize {
    let mut best = 0;
    for (j, c) in centroids.iter().enumerate() {
        if dist2(p, *c) < dist2(p, centroids[best]) {
            best = j;
        }
    }
    best
}

fn seed_centroids<R: Rng + ?Sized>(points: &[[f64; 2]], k: usize, rng: &mut R) -> Vec<[f64; 2]> {
    let n = points.len();
    let mut chosen = vec![rng.random_range(0..n)];
    while chosen.len() < k {
        let d: Vec<f64> = points
            .iter()
            .enumerate()
            .map(|(i, p)| {
                if chosen.contains(&i) {
                    0.0
                } else {
                    chosen.iter().map(|&c| dist2(*p, points[c])).fold(f64::INFINITY, f64::min)
                }
            })
            .collect();
        let total: f64 = d.iter().sum();
        let pick = if total > 0.0 {
            let mut x = rng.random::<f64>() * total;
            let mut pick = None;
            for (i, di) in d.iter().enumerate() {
                if *di > 0.0 {
                    pick = Some(i);
                    if x < *di {
                        break;
                    }
                    x -= di;
                }
            }
            pick.expect("positive mass")
        } else {
            // Every remaining point duplicates a centre; take any unused one.
            let free: Vec<usize> = (0..n).filter(|i| !chosen.contains(i)).collect();
            free[rng.random_range(0..free.len())]
        };
        chosen.push(pick);
    }
    chosen.into_iter().map(|i| points[i]).collect()
}

fn centroid(points: &[[f64; 2]], members: &[usize]) -> [f64; 2] {
    let n = members.len() as f64;
    let mut c = [0.0; 2];
    for &i in members {
        c[0] += points[i][0] / n;
        c[1] += points[i][1] / n;
    }
    c
}

/// Partitions `points` into `k` non-empty groups of indices.
///
/// Groups are returned sorted by their smallest member.
pub fn kmeans<R: Rng + ?Sized>(points: &[[f64; 2]], k: usize, rng: &mut R) -> Result<Vec<Vec<usize>>> {
    let n = points.len();
    if k == 0 || k > n {
        return Err(Error::BadK { k, n });
    }
    let mut centroids = seed_centroids(points, k, rng);
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for _ in 0..MAX_ITERS {
        groups = vec![Vec::new(); k];
        for (i, p) in points.iter().enumerate() {
            groups[nearest(*p, &centroids)].push(i);
        }
        repair_empty(points, &mut groups, &centroids);
        let next: Vec<[f64; 2]> = groups.iter().map(|g| centroid(points, g)).collect();
        let shift = centroids
            .iter()
            .zip(&next)
            .map(|(a, b)| dist2(*a, *b).sqrt())
            .fold(0.0, f64::max);
        centroids = next;
        if shift < TOL {
            break;
        }
    }
    for g in &mut groups {
        g.sort_unstable();
    }
    groups.sort_by_key(|g| g[0]);
    Ok(groups)
}

/// Moves, for each empty group, the point farthest from its centroid in the
/// currently largest group.
fn repair_empty(points: &[[f64; 2]], groups: &mut [Vec<usize>], centroids: &[[f64; 2]]) {
    while let Some(empty) = groups.iter().position(Vec::is_empty) {
        let largest = (0..groups.len()).max_by_key(|&j| (groups[j].len(), std::cmp::Reverse(j))).expect("k >= 1");
        let c = centroids[largest];
        let (pos, _) = groups[largest]
            .iter()
            .enumerate()
            .map(|(pos, &i)| (pos, dist2(points[i], c)))
            .fold((0, f64::NEG_INFINITY), |best, cur| if cur.1 > best.1 { cur } else { best });
        let moved = groups[largest].remove(pos);
        groups[empty].push(moved);
    }
}

/// Sum of squared distances of points to their group centroid.
pub fn within_cluster_ss(points: &[[f64; 2]], groups: &[Vec<usize>]) -> f64 {
    groups
        .iter()
        .map(|g| {
            let c = centroid(points, g);
            g.iter().map(|&i| dist2(points[i], c)).sum::<f64>()
        })
        .sum()
}

/// Min-max scaling to [0, 1]; constant inputs map to 0.
pub fn normalize(values: &[f64]) -> Vec<f64> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    values
        .iter()
        .map(|v| if hi > lo { (v - lo) / (hi - lo) } else { 0.0 })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{substream, Stream};
    use rand::seq::SliceRandom;

    fn jittered_groups() -> Vec<[f64; 2]> {
        let mut pts = Vec::new();
        for i in 0..5 {
            let e = i as f64 * 0.01;
            pts.push([0.1 + e, 0.1 - e]);
        }
        for i in 0..5 {
            let e = i as f64 * 0.01;
            pts.push([0.9 - e, 0.9 + e]);
        }
        pts
    }

    fn best_two_partition(points: &[[f64; 2]]) -> Vec<Vec<usize>> {
        let n = points.len();
        let mut best = (f64::INFINITY, Vec::new());
        for mask in 1u32..(1 << (n - 1)) {
            let a: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
            let b: Vec<usize> = (0..n).filter(|i| mask & (1 << i) == 0).collect();
            let mut g = vec![a, b];
            g.sort_by_key(|g| g[0]);
            let ss = within_cluster_ss(points, &g);
            if ss < best.0 {
                best = (ss, g);
            }
        }
        best.1
    }

    #[test]
    fn recovers_separated_groups() {
        let pts = jittered_groups();
        let got = kmeans(&pts, 2, &mut substream(0, Stream::Clustering)).unwrap();
        assert_eq!(got, best_two_partition(&pts));
        assert_eq!(got, vec![vec![0, 1, 2, 3, 4], vec![5, 6, 7, 8, 9]]);

        let exact: Vec<[f64; 2]> = (0..10).map(|i| if i < 5 { [0.1, 0.1] } else { [0.9, 0.9] }).collect();
        let got = kmeans(&exact, 2, &mut substream(1, Stream::Clustering)).unwrap();
        assert_eq!(got, vec![vec![0, 1, 2, 3, 4], vec![5, 6, 7, 8, 9]]);
    }

    #[test]
    fn extreme_k() {
        let pts = jittered_groups();
        let one = kmeans(&pts, 1, &mut substream(2, Stream::Clustering)).unwrap();
        assert_eq!(one, vec![(0..10).collect::<Vec<_>>()]);
        let all = kmeans(&pts, 10, &mut substream(2, Stream::Clustering)).unwrap();
        assert_eq!(all, (0..10).map(|i| vec![i]).collect::<Vec<_>>());
        let dup = vec![[0.5, 0.5]; 4];
        let all = kmeans(&dup, 4, &mut substream(3, Stream::Clustering)).unwrap();
        assert!(all.iter().all(|g| g.len() == 1));
        assert!(matches!(kmeans(&pts, 11, &mut substream(2, Stream::Clustering)), Err(Error::BadK { .. })));
        assert!(matches!(kmeans(&pts, 0, &mut substream(2, Stream::Clustering)), Err(Error::BadK { .. })));
    }

    #[test]
    fn beats_random_partitions() {
        let mut rng = substream(4, Stream::Clustering);
        let pts: Vec<[f64; 2]> = (0..20).map(|_| [rng.random(), rng.random()]).collect();
        let groups = kmeans(&pts, 4, &mut rng).unwrap();
        let ss = within_cluster_ss(&pts, &groups);
        for _ in 0..10 {
            let mut idx: Vec<usize> = (0..20).collect();
            idx.shuffle(&mut rng);
            let random: Vec<Vec<usize>> = idx.chunks(5).map(|c| c.to_vec()).collect();
            assert!(ss <= within_cluster_ss(&pts, &random));
        }
        let mut covered: Vec<usize> = groups.concat();
        covered.sort();
        assert_eq!(covered, (0..20).collect::<Vec<_>>());
    }

    #[test]
    fn normalize_range() {
        assert_eq!(normalize(&[2.0, 4.0, 3.0]), vec![0.0, 1.0, 0.5]);
        assert_eq!(normalize(&[7.0, 7.0]), vec![0.0, 0.0]);
    }
}
