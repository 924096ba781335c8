//! Requests, self-requests and the enumeration of potentially active links.

use rand::Rng;

use crate::caching::CacheAssignment;
use crate::error::{invalid_param, Result};
use crate::network::{NeighborTable, Placement, SpatialIndex};
use crate::popularity::ZipfLaw;

/// One requested file per node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RequestVector {
    files: Vec<usize>,
}

impl RequestVector {
    pub fn new(files: Vec<usize>, m: usize) -> Result<Self> {
        if let Some(&f) = files.iter().find(|&&f| f == 0 || f > m) {
            return Err(invalid_param(format!("requested file {f} outside 1..={m}")));
        }
        Ok(Self { files })
    }

    pub fn file(&self, node: usize) -> usize {
        self.files[node]
    }

    pub fn files(&self) -> &[usize] {
        &self.files
    }

    pub fn len(&self) -> usize {
        self.files.len()
    }

    pub fn is_empty(&self) -> bool {
        self.files.is_empty()
    }
}

pub fn sample_requests<R: Rng + ?Sized>(n: usize, law: &ZipfLaw, rng: &mut R) -> RequestVector {
    RequestVector {
        files: (0..n).map(|_| law.sample(rng)).collect(),
    }
}

/// Nodes whose own cache holds their request.
pub fn self_served(caches: &CacheAssignment, requests: &RequestVector) -> Result<Vec<usize>> {
    if caches.len() != requests.len() {
        return Err(invalid_param(format!(
            "{} caches but {} requests",
            caches.len(),
            requests.len()
        )));
    }
    Ok((0..caches.len())
        .filter(|&i| caches.file(i) == requests.file(i))
        .collect())
}

/// `tx` caches `file`, which `rx` requests and does not cache itself.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PotentialLink {
    pub tx: usize,
    pub rx: usize,
    pub file: usize,
}

/// Every potential link, sorted by `(rx, tx)`.
pub fn potential_links(
    placement: &Placement,
    caches: &CacheAssignment,
    requests: &RequestVector,
    r: f64,
) -> Result<Vec<PotentialLink>> {
    let index = SpatialIndex::new(placement, r)?;
    let table = NeighborTable::build(&index);
    links_from_table(&table, caches, requests)
}

pub fn links_from_table(
    table: &NeighborTable,
    caches: &CacheAssignment,
    requests: &RequestVector,
) -> Result<Vec<PotentialLink>> {
    let n = table.len();
    if caches.len() != n || requests.len() != n {
        return Err(invalid_param(format!(
            "{n} nodes, {} caches, {} requests",
            caches.len(),
            requests.len()
        )));
    }
    let mut links = Vec::new();
    for rx in 0..n {
        let want = requests.file(rx);
        if caches.file(rx) == want {
            continue;
        }
        for &tx in table.neighbors(rx) {
            let tx = tx as usize;
            if caches.file(tx) == want {
                links.push(PotentialLink { tx, rx, file: want });
            }
        }
    }
    Ok(links)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::caching::assign_random_zipf;
    use crate::network::{place_nodes, Point};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn brute_links(
        p: &Placement,
        c: &CacheAssignment,
        q: &RequestVector,
        r: f64,
    ) -> Vec<PotentialLink> {
        let n = p.len();
        let mut out = Vec::new();
        for rx in 0..n {
            for tx in 0..n {
                if tx != rx
                    && p.pos(tx).within(p.pos(rx), r)
                    && c.file(tx) == q.file(rx)
                    && c.file(rx) != q.file(rx)
                {
                    out.push(PotentialLink { tx, rx, file: q.file(rx) });
                }
            }
        }
        out
    }

    #[test]
    fn request_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let one = ZipfLaw::new(1.0, 1).unwrap();
        assert!(sample_requests(100, &one, &mut rng).files().iter().all(|&f| f == 1));
        assert!(RequestVector::new(vec![1, 4], 3).is_err());
    }

    #[test]
    fn request_chi_square() {
        use statrs::distribution::{ChiSquared, ContinuousCDF};
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let law = ZipfLaw::new(1.2, 20).unwrap();
        let n = 1_000_000;
        let q = sample_requests(n, &law, &mut rng);
        let mut counts = [0f64; 20];
        for &f in q.files() {
            counts[f - 1] += 1.0;
        }
        let chi2: f64 = counts
            .iter()
            .zip(law.pmf())
            .map(|(c, p)| (c - p * n as f64).powi(2) / (p * n as f64))
            .sum();
        assert!(chi2 < ChiSquared::new(19.0).unwrap().inverse_cdf(0.999));

        let uniform = sample_requests(n, &ZipfLaw::new(0.0, 4).unwrap(), &mut rng);
        let sigma = (0.25f64 * 0.75 / n as f64).sqrt();
        for file in 1..=4 {
            let freq = uniform.files().iter().filter(|&&f| f == file).count() as f64 / n as f64;
            assert!((freq - 0.25).abs() < 3.0 * sigma);
        }
    }

    #[test]
    fn self_served_examples() {
        let c = CacheAssignment::new(vec![1, 1, 1], 1).unwrap();
        let q = RequestVector::new(vec![1, 1, 1], 1).unwrap();
        assert_eq!(self_served(&c, &q).unwrap(), vec![0, 1, 2]);

        let c = CacheAssignment::new(vec![1, 2], 4).unwrap();
        let q = RequestVector::new(vec![3, 4], 4).unwrap();
        assert!(self_served(&c, &q).unwrap().is_empty());

        let short = RequestVector::new(vec![3], 4).unwrap();
        assert!(self_served(&c, &short).is_err());
    }

    #[test]
    fn self_served_rate_matches_product_sum() {
        let n = 100_000;
        let m = 10;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let c = assign_random_zipf(n, m, 1.5, &mut rng).unwrap();
        let q = sample_requests(n, &ZipfLaw::new(1.5, m).unwrap(), &mut rng);
        let rate = self_served(&c, &q).unwrap().len() as f64 / n as f64;
        let law = ZipfLaw::new(1.5, m).unwrap();
        let expect: f64 = law.pmf().iter().map(|p| p * p).sum();
        let sigma = (expect * (1.0 - expect) / n as f64).sqrt();
        assert!((rate - expect).abs() < 3.0 * sigma, "{rate} vs {expect}");
    }

    #[test]
    fn link_examples() {
        let one = Placement::from_points(vec![Point::new(0.5, 0.5)]).unwrap();
        let c = CacheAssignment::new(vec![1], 2).unwrap();
        let q = RequestVector::new(vec![2], 2).unwrap();
        assert!(potential_links(&one, &c, &q, 0.1).unwrap().is_empty());

        // Node 0 caches A=1 and wants B=2, node 1 the reverse.
        let two = Placement::from_points(vec![Point::new(0.5, 0.5), Point::new(0.55, 0.5)]).unwrap();
        let c = CacheAssignment::new(vec![1, 2], 2).unwrap();
        let q = RequestVector::new(vec![2, 1], 2).unwrap();
        let links = potential_links(&two, &c, &q, 0.1).unwrap();
        assert_eq!(
            links,
            vec![
                PotentialLink { tx: 1, rx: 0, file: 2 },
                PotentialLink { tx: 0, rx: 1, file: 1 },
            ]
        );

        // A self-served receiver gets nothing even if its neighbor caches the file.
        let c = CacheAssignment::new(vec![1, 1], 2).unwrap();
        let q = RequestVector::new(vec![1, 2], 2).unwrap();
        assert!(potential_links(&two, &c, &q, 0.1).unwrap().is_empty());
    }

    proptest! {
        #[test]
        fn links_match_brute_force(seed in 0u64..5000, n in 1usize..50, m in 1usize..6, r in 0.05f64..0.8) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p = place_nodes(n, &mut rng).unwrap();
            let c = assign_random_zipf(n, m, 1.0, &mut rng).unwrap();
            let q = sample_requests(n, &ZipfLaw::new(0.8, m).unwrap(), &mut rng);
            let links = potential_links(&p, &c, &q, r).unwrap();
            prop_assert_eq!(&links, &brute_links(&p, &c, &q, r));
            let served = self_served(&c, &q).unwrap();
            for l in &links {
                prop_assert!(l.tx != l.rx);
                prop_assert!(p.pos(l.tx).within(p.pos(l.rx), r));
                prop_assert_eq!(c.file(l.tx), l.file);
                prop_assert_eq!(q.file(l.rx), l.file);
                prop_assert!(c.file(l.rx) != l.file);
                prop_assert!(!served.contains(&l.rx));
            }

            // Dropping the last node never adds links among the others.
            if n > 1 {
                let keep: Vec<Point> = p.positions()[..n - 1].to_vec();
                let p2 = Placement::from_points(keep).unwrap();
                let c2 = CacheAssignment::new(c.files()[..n - 1].to_vec(), m).unwrap();
                let q2 = RequestVector::new(q.files()[..n - 1].to_vec(), m).unwrap();
                prop_assert!(potential_links(&p2, &c2, &q2, r).unwrap().len() <= links.len());
            }
        }
    }
}
