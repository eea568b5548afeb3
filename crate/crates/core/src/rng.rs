//! Deterministic, splittable random streams.
//!
//! A stream is identified by a [`StreamKey`]: a master seed plus a path of
//! 32-bit labels such as `[phase, tree, draw]`. The key is hashed into a
//! ChaCha12 seed, so every stream is a pure function of its key and of the
//! number of words already consumed. Two tasks that build streams from
//! different paths never share state, which keeps results independent of how
//! work is scheduled across threads.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Well-known first path labels, so that independent phases of a workflow
/// never reuse a stream by accident.
pub mod phase {
    pub const FOREST: u32 = 1;
    pub const ENSEMBLE: u32 = 2;
    pub const PREDICTION: u32 = 3;
    pub const SIMULATION: u32 = 4;
    pub const SPLIT: u32 = 5;
    pub const CONCENTRATION: u32 = 6;
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct StreamKey {
    pub master_seed: u64,
    pub path: Vec<u32>,
}

impl StreamKey {
    pub fn new(master_seed: u64, path: &[u32]) -> Self {
        Self {
            master_seed,
            path: path.to_vec(),
        }
    }

    pub fn root(master_seed: u64) -> Self {
        Self::new(master_seed, &[])
    }

    /// Key of the sub-stream obtained by appending `label` to the path.
    pub fn child(&self, label: u32) -> Self {
        let mut path = self.path.clone();
        path.push(label);
        Self {
            master_seed: self.master_seed,
            path,
        }
    }

    pub fn stream(&self) -> RandomStream {
        RandomStream::new(self.clone())
    }

    fn seed_bytes(&self) -> [u8; 32] {
        // Length-prefixed encoding: [a, b] and [a] followed by [b] are distinct.
        let mut hasher = Sha256::new();
        hasher.update(b"fiducial-forest/stream/v1");
        hasher.update(self.master_seed.to_le_bytes());
        hasher.update((self.path.len() as u64).to_le_bytes());
        for label in &self.path {
            hasher.update(label.to_le_bytes());
        }
        let digest = hasher.finalize();
        let mut out = [0u8; 32];
        out.copy_from_slice(&digest);
        out
    }
}

/// A single-owner stream of random variates.
#[derive(Clone, Debug)]
pub struct RandomStream {
    key: StreamKey,
    core: ChaCha12Rng,
}

pub fn make_stream(master_seed: u64, path: &[u32]) -> RandomStream {
    StreamKey::new(master_seed, path).stream()
}

impl RandomStream {
    pub fn new(key: StreamKey) -> Self {
        let core = ChaCha12Rng::from_seed(key.seed_bytes());
        Self { key, core }
    }

    pub fn key(&self) -> &StreamKey {
        &self.key
    }

    /// Number of 32-bit words consumed so far.
    pub fn counter(&self) -> u128 {
        self.core.get_word_pos()
    }

    /// Uniform variate in `[0, 1)` with 53 bits of precision.
    pub fn next_unit(&mut self) -> f64 {
        (self.core.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn sample_uniform(&mut self, lo: f64, hi: f64) -> Result<f64> {
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::InvalidRange { lo, hi });
        }
        let v = lo + (hi - lo) * self.next_unit();
        // Rounding can land exactly on `hi` for very narrow ranges.
        Ok(if v < hi { v } else { lo })
    }

    pub fn sample_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.core)
    }

    pub fn sample_chi_square(&mut self, dof: u64) -> Result<f64> {
        if dof == 0 {
            return Err(Error::InvalidDof("chi-square needs dof >= 1".into()));
        }
        let dist = ChiSquared::new(dof as f64)
            .map_err(|e| Error::InvalidDof(format!("chi-square with {dof} dof: {e}")))?;
        Ok(dist.sample(&mut self.core))
    }

    /// Uniform integer in `[0, bound)`.
    pub fn sample_index(&mut self, bound: usize) -> usize {
        self.core.random_range(0..bound)
    }

    /// `k` distinct indices from `[0, population)`, every k-subset equally
    /// likely. Uses a partial Fisher-Yates shuffle; the order of the returned
    /// indices is the order in which they were drawn.
    pub fn sample_without_replacement(
        &mut self,
        population: usize,
        k: usize,
    ) -> Result<Vec<usize>> {
        if k > population {
            return Err(Error::InvalidSize { population, k });
        }
        let mut pool: Vec<usize> = (0..population).collect();
        for i in 0..k {
            let j = i + self.sample_index(population - i);
            pool.swap(i, j);
        }
        pool.truncate(k);
        debug_assert!(no_duplicates(&pool));
        Ok(pool)
    }

    /// Inverse-CDF sampling with a single uniform. A draw landing exactly on a
    /// cumulative boundary resolves to the lower index.
    pub fn sample_categorical(&mut self, weights: &[f64]) -> Result<usize> {
        validate_probabilities(weights)?;
        let u = self.next_unit();
        Ok(categorical_index(weights, u))
    }
}

impl RngCore for RandomStream {
    fn next_u32(&mut self) -> u32 {
        self.core.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.core.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.core.fill_bytes(dst)
    }
}

pub(crate) fn validate_probabilities(weights: &[f64]) -> Result<()> {
    if weights.is_empty() {
        return Err(Error::InvalidWeights("empty weight vector".into()));
    }
    if let Some(w) = weights.iter().find(|w| !w.is_finite() || **w < 0.0) {
        return Err(Error::InvalidWeights(format!(
            "weight {w} is negative or non-finite"
        )));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidWeights(format!(
            "weights sum to {total}, not 1"
        )));
    }
    Ok(())
}

fn categorical_index(weights: &[f64], u: f64) -> usize {
    let mut cumulative = 0.0;
    let mut last_positive = 0;
    for (i, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            last_positive = i;
        }
        cumulative += w;
        if w > 0.0 && u <= cumulative {
            return i;
        }
    }
    // Sum slightly below 1 from rounding: fall back to the last reachable index.
    last_positive
}

fn no_duplicates(indices: &[usize]) -> bool {
    let mut seen = std::collections::HashSet::with_capacity(indices.len());
    indices.iter().all(|i| seen.insert(*i))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uniforms(stream: &mut RandomStream, n: usize) -> Vec<f64> {
        (0..n).map(|_| stream.next_unit()).collect()
    }

    #[test]
    fn same_key_same_stream() {
        let a = uniforms(&mut make_stream(42, &[0]), 100);
        let b = uniforms(&mut make_stream(42, &[0]), 100);
        assert_eq!(a, b);
    }

    #[test]
    fn sibling_paths_differ() {
        let a = uniforms(&mut make_stream(42, &[0]), 10_000);
        let b = uniforms(&mut make_stream(42, &[1]), 10_000);
        assert_ne!(a, b);
    }

    #[test]
    fn path_encoding_is_unambiguous() {
        let a = make_stream(1, &[0, 7]).next_u64();
        let b = make_stream(1, &[0]).next_u64();
        let c = make_stream(1, &[7]).next_u64();
        let d = make_stream(1, &[0, 7, 0]).next_u64();
        assert!(a != b && a != c && a != d && b != c);
    }

    #[test]
    fn child_key_matches_explicit_path() {
        let key = StreamKey::new(9, &[3]).child(5).child(8);
        assert_eq!(key, StreamKey::new(9, &[3, 5, 8]));
    }

    #[test]
    fn stream_is_pure_in_thread_context() {
        let expected = uniforms(&mut make_stream(42, &[0, 7]), 50);
        let handles: Vec<_> = (0..4)
            .map(|_| std::thread::spawn(|| uniforms(&mut make_stream(42, &[0, 7]), 50)))
            .collect();
        for h in handles {
            assert_eq!(h.join().unwrap(), expected);
        }
    }

    #[test]
    fn counter_advances_and_replays() {
        let mut s = make_stream(5, &[1]);
        assert_eq!(s.counter(), 0);
        s.next_u64();
        s.next_u64();
        assert_eq!(s.counter(), 4);
        let snapshot = s.clone();
        let mut replay = make_stream(5, &[1]);
        replay.next_u64();
        replay.next_u64();
        assert_eq!(replay.next_u64(), snapshot.clone().next_u64());
    }

    #[test]
    fn sibling_streams_share_no_outputs() {
        let mut all = Vec::with_capacity(1000 * 10_000);
        for label in 0..1000u32 {
            let mut s = make_stream(42, &[label]);
            all.extend((0..10_000).map(|_| s.next_u64()));
        }
        all.sort_unstable();
        let dups = all.windows(2).filter(|w| w[0] == w[1]).count();
        assert_eq!(dups, 0);
    }

    #[test]
    fn uniform_rejects_empty_range() {
        let mut s = make_stream(0, &[]);
        assert!(matches!(
            s.sample_uniform(0.0, 0.0),
            Err(Error::InvalidRange { .. })
        ));
        assert!(s.sample_uniform(1.0, 0.0).is_err());
    }

    #[test]
    fn uniform_mean_and_ks() {
        let mut s = make_stream(11, &[2]);
        let n = 100_000;
        let mut xs: Vec<f64> = (0..n)
            .map(|_| s.sample_uniform(0.0, 1.0).unwrap())
            .collect();
        assert!(xs.iter().all(|x| (0.0..1.0).contains(x)));
        let mean = xs.iter().sum::<f64>() / n as f64;
        assert!((mean - 0.5).abs() < 0.01, "mean {mean}");
        xs.sort_by(f64::total_cmp);
        let ks = xs
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let hi = (i + 1) as f64 / n as f64 - x;
                let lo = x - i as f64 / n as f64;
                hi.max(lo)
            })
            .fold(0.0, f64::max);
        assert!(ks < 0.01, "ks {ks}");
    }

    #[test]
    fn uniform_scaled_range() {
        let mut s = make_stream(3, &[]);
        for _ in 0..1000 {
            let v = s.sample_uniform(-2.0, 3.0).unwrap();
            assert!((-2.0..3.0).contains(&v));
        }
    }

    fn moments(xs: &[f64]) -> (f64, f64, f64) {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let skew = xs
            .iter()
            .map(|x| ((x - mean) / var.sqrt()).powi(3))
            .sum::<f64>()
            / n;
        (mean, var, skew)
    }

    #[test]
    fn normal_moments() {
        let mut s = make_stream(7, &[3]);
        let xs: Vec<f64> = (0..100_000).map(|_| s.sample_normal()).collect();
        let (mean, var, skew) = moments(&xs);
        assert!(mean.abs() < 0.02, "mean {mean}");
        assert!((var - 1.0).abs() < 0.03, "var {var}");
        assert!(skew.abs() < 0.05, "skew {skew}");
    }

    #[test]
    fn normal_replays() {
        let a: Vec<f64> = {
            let mut s = make_stream(8, &[1, 2]);
            (0..64).map(|_| s.sample_normal()).collect()
        };
        let mut s = make_stream(8, &[1, 2]);
        let b: Vec<f64> = (0..64).map(|_| s.sample_normal()).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn chi_square_moments() {
        let mut s = make_stream(13, &[4]);
        let xs: Vec<f64> = (0..100_000)
            .map(|_| s.sample_chi_square(10).unwrap())
            .collect();
        assert!(xs.iter().all(|x| *x > 0.0));
        let (mean, var, _) = moments(&xs);
        assert!((mean - 10.0).abs() < 0.2, "mean {mean}");
        assert!((var - 20.0).abs() < 1.0, "var {var}");
    }

    #[test]
    fn chi_square_zero_dof() {
        let mut s = make_stream(0, &[]);
        assert!(matches!(s.sample_chi_square(0), Err(Error::InvalidDof(_))));
    }

    #[test]
    fn chi_square_two_dof_is_exponential() {
        // QQ check read on the probability scale: the exponential(mean 2) CDF
        // evaluated at each empirical quantile should sit within 0.03 of q.
        let mut s = make_stream(17, &[5]);
        let xs: Vec<f64> = (0..10_000)
            .map(|_| s.sample_chi_square(2).unwrap())
            .collect();
        for i in 1..=19 {
            let q = i as f64 * 0.05;
            let empirical = crate::fiducial::percentile(&xs, q).unwrap();
            let cdf = 1.0 - (-empirical / 2.0).exp();
            assert!(
                (cdf - q).abs() < 0.03,
                "q={q}: cdf at empirical quantile {cdf}"
            );
        }
    }

    #[test]
    fn without_replacement_full_and_empty() {
        let mut s = make_stream(1, &[]);
        let mut all = s.sample_without_replacement(5, 5).unwrap();
        all.sort();
        assert_eq!(all, vec![0, 1, 2, 3, 4]);
        assert!(s.sample_without_replacement(5, 0).unwrap().is_empty());
        assert!(matches!(
            s.sample_without_replacement(3, 4),
            Err(Error::InvalidSize {
                population: 3,
                k: 4
            })
        ));
    }

    #[test]
    fn without_replacement_subsets_uniform() {
        // All C(4,2) = 6 subsets enumerated explicitly.
        let subsets = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)];
        let mut counts = [0usize; 6];
        let mut s = make_stream(19, &[6]);
        let draws = 60_000;
        for _ in 0..draws {
            let mut d = s.sample_without_replacement(4, 2).unwrap();
            d.sort();
            let idx = subsets.iter().position(|&(a, b)| d == [a, b]).unwrap();
            counts[idx] += 1;
        }
        for c in counts {
            let f = c as f64 / draws as f64;
            assert!((f - 1.0 / 6.0).abs() < 0.01, "freq {f}");
        }
    }

    #[test]
    fn categorical_degenerate_and_frequency() {
        let mut s = make_stream(23, &[7]);
        for _ in 0..1000 {
            assert_eq!(s.sample_categorical(&[1.0, 0.0, 0.0]).unwrap(), 0);
        }
        let n = 100_000;
        let ones = (0..n)
            .filter(|_| s.sample_categorical(&[0.25, 0.75]).unwrap() == 1)
            .count();
        let f = ones as f64 / n as f64;
        assert!((f - 0.75).abs() < 0.01, "freq {f}");
    }

    #[test]
    fn categorical_rejects_bad_weights() {
        let mut s = make_stream(0, &[]);
        assert!(matches!(
            s.sample_categorical(&[0.5, 0.6]),
            Err(Error::InvalidWeights(_))
        ));
        assert!(s.sample_categorical(&[-0.5, 1.5]).is_err());
        assert!(s.sample_categorical(&[]).is_err());
    }

    #[test]
    fn categorical_boundary_goes_low() {
        assert_eq!(categorical_index(&[0.5, 0.5], 0.0), 0);
        assert_eq!(categorical_index(&[0.5, 0.5], 0.5), 0);
        assert_eq!(categorical_index(&[0.5, 0.5], 0.500_000_1), 1);
        assert_eq!(categorical_index(&[0.0, 1.0], 0.0), 1);
        assert_eq!(categorical_index(&[0.3, 0.7, 0.0], 0.999_999_999_999), 1);
    }
}
