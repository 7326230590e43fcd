//! Brute-force entropies over small discrete distributions, and numerical
//! checks of conditional-entropy submodularity and its K-way extension.

use std::collections::BTreeSet;

use rand::Rng;
use serde::{Serialize, Serializer};
use thiserror::Error;

/// Numerical slack allowed on entropy inequalities.
pub const MARGIN_TOLERANCE: f64 = 1e-9;
/// Allowed deviation of total mass from one, and of the source joint from
/// the product of its marginals.
pub const MASS_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InfoError {
    #[error("table has {got} entries but the alphabets need {expected}")]
    TableSize { expected: usize, got: usize },
    #[error("alphabet sizes must be positive")]
    EmptyAlphabet,
    #[error("probability {value} at entry {index} is negative or not finite")]
    BadProbability { index: usize, value: f64 },
    #[error("total mass {0} is not 1")]
    Mass(f64),
    #[error("coordinate {coordinate} outside 0..{count}")]
    Coordinate { coordinate: usize, count: usize },
    #[error("index {index} outside 1..={n}")]
    Index { index: usize, n: usize },
    #[error("level {k} outside 1..={count}")]
    Level { k: usize, count: usize },
    #[error("source variables are not independent (deviation {0})")]
    DependentSources(f64),
}

/// Dense joint probability table, last coordinate varying fastest.
#[derive(Clone, Debug, PartialEq)]
pub struct JointDistribution {
    alphabets: Vec<usize>,
    probs: Vec<f64>,
}

impl JointDistribution {
    pub fn new(alphabets: Vec<usize>, probs: Vec<f64>) -> Result<Self, InfoError> {
        if alphabets.contains(&0) {
            return Err(InfoError::EmptyAlphabet);
        }
        let expected: usize = alphabets.iter().product();
        if probs.len() != expected {
            return Err(InfoError::TableSize {
                expected,
                got: probs.len(),
            });
        }
        if let Some((index, &value)) = probs.iter().enumerate().find(|(_, p)| !p.is_finite() || **p < 0.0) {
            return Err(InfoError::BadProbability { index, value });
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > MASS_TOLERANCE {
            return Err(InfoError::Mass(total));
        }
        Ok(JointDistribution { alphabets, probs })
    }

    pub fn alphabets(&self) -> &[usize] {
        &self.alphabets
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probs
    }

    pub fn coordinates(&self) -> usize {
        self.alphabets.len()
    }

    fn check(&self, coords: &[usize]) -> Result<(), InfoError> {
        match coords.iter().find(|&&c| c >= self.alphabets.len()) {
            Some(&coordinate) => Err(InfoError::Coordinate {
                coordinate,
                count: self.alphabets.len(),
            }),
            None => Ok(()),
        }
    }

    /// Decodes a flat index into one symbol per coordinate.
    fn symbols(&self, mut flat: usize) -> Vec<usize> {
        let mut out = vec![0; self.alphabets.len()];
        for (c, size) in self.alphabets.iter().enumerate().rev() {
            out[c] = flat % size;
            flat /= size;
        }
        out
    }

    /// Marginal over `coords`, taken in ascending coordinate order.
    pub fn marginal(&self, coords: &[usize]) -> Result<Vec<f64>, InfoError> {
        self.check(coords)?;
        let coords: Vec<usize> = coords.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
        let size: usize = coords.iter().map(|&c| self.alphabets[c]).product();
        let mut out = vec![0.0; size];
        for (flat, p) in self.probs.iter().enumerate() {
            let sym = self.symbols(flat);
            let index = coords.iter().fold(0, |acc, &c| acc * self.alphabets[c] + sym[c]);
            out[index] += p;
        }
        Ok(out)
    }
}

fn shannon(probs: &[f64]) -> f64 {
    let h: f64 = probs.iter().filter(|&&p| p > 0.0).map(|&p| -p * p.log2()).sum();
    h.max(0.0)
}

/// Entropy in bits of the marginal on `coords`.
pub fn entropy(dist: &JointDistribution, coords: &[usize]) -> Result<f64, InfoError> {
    Ok(shannon(&dist.marginal(coords)?))
}

/// Joint law of `(V_1..V_N, U_1..U_N)`; `V_i` sits at coordinate `i - 1`
/// and `U_i` at coordinate `N + i - 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct PairedDistribution {
    pairs: usize,
    joint: JointDistribution,
}

impl PairedDistribution {
    pub fn new(joint: JointDistribution) -> Result<Self, InfoError> {
        let c = joint.coordinates();
        if !c.is_multiple_of(2) {
            return Err(InfoError::Coordinate {
                coordinate: c,
                count: c,
            });
        }
        Ok(PairedDistribution { pairs: c / 2, joint })
    }

    pub fn pairs(&self) -> usize {
        self.pairs
    }

    pub fn joint(&self) -> &JointDistribution {
        &self.joint
    }

    fn v(&self, g: &BTreeSet<usize>) -> Vec<usize> {
        g.iter().map(|i| i - 1).collect()
    }

    fn u(&self, g: &BTreeSet<usize>) -> Vec<usize> {
        g.iter().map(|i| self.pairs + i - 1).collect()
    }

    fn check(&self, g: &BTreeSet<usize>) -> Result<(), InfoError> {
        match g.iter().find(|&&i| i == 0 || i > self.pairs) {
            Some(&index) => Err(InfoError::Index { index, n: self.pairs }),
            None => Ok(()),
        }
    }

    /// Largest gap between the sources' joint law and the product of their
    /// marginals.
    pub fn source_dependence(&self) -> f64 {
        let all: BTreeSet<usize> = (1..=self.pairs).collect();
        let joint = self.joint.marginal(&self.u(&all)).expect("valid coordinates");
        let marginals: Vec<Vec<f64>> = (1..=self.pairs)
            .map(|i| self.joint.marginal(&[self.pairs + i - 1]).expect("valid coordinate"))
            .collect();
        let sizes: Vec<usize> = marginals.iter().map(Vec::len).collect();
        joint
            .iter()
            .enumerate()
            .map(|(flat, p)| {
                let mut rest = flat;
                let mut product = 1.0;
                for (m, size) in marginals.iter().zip(&sizes).rev() {
                    product *= m[rest % size];
                    rest /= size;
                }
                (p - product).abs()
            })
            .fold(0.0, f64::max)
    }
}

/// `H(V_G | U_G)`, with `G` a set of 1-based pair indices.
pub fn cond_entropy_vu(dist: &PairedDistribution, g: &BTreeSet<usize>) -> Result<f64, InfoError> {
    dist.check(g)?;
    let mut both = dist.v(g);
    both.extend(dist.u(g));
    let h = entropy(&dist.joint, &both)? - entropy(&dist.joint, &dist.u(g))?;
    Ok(h.max(0.0))
}

/// Subsets `G_1..G_K` of `1..=N`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SetFamily {
    n: usize,
    sets: Vec<BTreeSet<usize>>,
}

impl SetFamily {
    pub fn new(n: usize, sets: Vec<BTreeSet<usize>>) -> Result<Self, InfoError> {
        for s in &sets {
            if let Some(&index) = s.iter().find(|&&i| i == 0 || i > n) {
                return Err(InfoError::Index { index, n });
            }
        }
        Ok(SetFamily { n, sets })
    }

    pub fn universe(&self) -> usize {
        self.n
    }

    pub fn sets(&self) -> &[BTreeSet<usize>] {
        &self.sets
    }
}

/// Union over all `k`-element choices of family members of their
/// intersection: the elements lying in at least `k` of the sets.
pub fn ghat(family: &SetFamily, k: usize) -> Result<BTreeSet<usize>, InfoError> {
    let count = family.sets.len();
    if k == 0 || k > count {
        return Err(InfoError::Level { k, count });
    }
    let mut out = BTreeSet::new();
    for choice in 0u32..(1u32 << count) {
        if choice.count_ones() as usize != k {
            continue;
        }
        let mut chosen = (0..count).filter(|t| choice >> t & 1 == 1).map(|t| &family.sets[t]);
        let first = chosen.next().expect("k >= 1").clone();
        let meet = chosen.fold(first, |acc, s| acc.intersection(s).copied().collect());
        out.extend(meet);
    }
    Ok(out)
}

fn require_independent(dist: &PairedDistribution) -> Result<(), InfoError> {
    let dev = dist.source_dependence();
    if dev > MASS_TOLERANCE {
        return Err(InfoError::DependentSources(dev));
    }
    Ok(())
}

/// `H(G_1) + H(G_2) - H(G_1 ∪ G_2) - H(G_1 ∩ G_2)` for `H = H_{V|U}`.
pub fn pairwise_margin(
    dist: &PairedDistribution,
    g1: &BTreeSet<usize>,
    g2: &BTreeSet<usize>,
) -> Result<f64, InfoError> {
    require_independent(dist)?;
    let union: BTreeSet<usize> = g1.union(g2).copied().collect();
    let meet: BTreeSet<usize> = g1.intersection(g2).copied().collect();
    Ok(cond_entropy_vu(dist, g1)? + cond_entropy_vu(dist, g2)?
        - cond_entropy_vu(dist, &union)?
        - cond_entropy_vu(dist, &meet)?)
}

/// `sum_k H(G_k) - sum_k H(ghat_k)` for `H = H_{V|U}`.
pub fn check_kway(dist: &PairedDistribution, family: &SetFamily) -> Result<f64, InfoError> {
    require_independent(dist)?;
    let mut margin = 0.0;
    for (k, g) in family.sets.iter().enumerate() {
        margin += cond_entropy_vu(dist, g)?;
        margin -= cond_entropy_vu(dist, &ghat(family, k + 1)?)?;
    }
    Ok(margin)
}

/// Probability vector with small integer weights; never all zero.
fn bounded_weights(rng: &mut impl Rng, len: usize) -> Vec<f64> {
    loop {
        let w: Vec<u32> = (0..len).map(|_| rng.gen_range(0..=6)).collect();
        let total: u32 = w.iter().sum();
        if total > 0 {
            return w.iter().map(|&x| x as f64 / total as f64).collect();
        }
    }
}

/// Random `(V, U)` law with independent sources: `N` pairs, alphabets up to
/// `max_alphabet`, `p(u) = prod p(u_i)` and an arbitrary `p(v | u)`.
pub fn sample_paired(rng: &mut impl Rng, n: usize, max_alphabet: usize) -> PairedDistribution {
    let v_sizes: Vec<usize> = (0..n).map(|_| rng.gen_range(1..=max_alphabet)).collect();
    let u_sizes: Vec<usize> = (0..n).map(|_| rng.gen_range(1..=max_alphabet)).collect();
    let u_laws: Vec<Vec<f64>> = u_sizes.iter().map(|&s| bounded_weights(rng, s)).collect();
    let v_count: usize = v_sizes.iter().product();
    let u_count: usize = u_sizes.iter().product();
    let mut probs = vec![0.0; v_count * u_count];
    for u_flat in 0..u_count {
        let mut rest = u_flat;
        let mut pu = 1.0;
        for (law, size) in u_laws.iter().zip(&u_sizes).rev() {
            pu *= law[rest % size];
            rest /= size;
        }
        let conditional = bounded_weights(rng, v_count);
        for (v_flat, pv) in conditional.iter().enumerate() {
            probs[v_flat * u_count + u_flat] = pu * pv;
        }
    }
    let total: f64 = probs.iter().sum();
    probs.iter_mut().for_each(|p| *p /= total);
    let mut alphabets = v_sizes;
    alphabets.extend(u_sizes);
    PairedDistribution::new(JointDistribution::new(alphabets, probs).expect("valid by construction"))
        .expect("even coordinate count")
}

/// `k` random subsets of `1..=n`.
pub fn sample_family(rng: &mut impl Rng, n: usize, k: usize) -> SetFamily {
    let sets = (0..k)
        .map(|_| (1..=n).filter(|_| rng.gen_bool(0.5)).collect())
        .collect();
    SetFamily::new(n, sets).expect("indices in range")
}

/// Rounds to 12 significant digits.
pub fn round_sig12(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{x:.11e}").parse().expect("formatted float parses")
}

pub fn serialize_sig12<S: Serializer>(x: &f64, serializer: S) -> Result<S::Ok, S::Error> {
    serializer.serialize_f64(round_sig12(*x))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MarginSummary {
    pub trials: usize,
    #[serde(serialize_with = "serialize_sig12")]
    pub min_margin: f64,
    pub violations: usize,
}

impl MarginSummary {
    fn new() -> Self {
        MarginSummary {
            trials: 0,
            min_margin: f64::INFINITY,
            violations: 0,
        }
    }

    fn record(&mut self, margin: f64) {
        self.trials += 1;
        self.min_margin = self.min_margin.min(margin);
        if margin < -MARGIN_TOLERANCE {
            self.violations += 1;
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SubmodularityReport {
    pub seed: u64,
    pub pairwise: MarginSummary,
    pub kway: MarginSummary,
}

impl SubmodularityReport {
    pub fn passed(&self) -> bool {
        self.pairwise.violations == 0 && self.kway.violations == 0
    }
}

/// Random trials with `N <= 3` pairs, alphabets up to 3 and families of up to
/// 3 sets; each trial checks both inequalities on a fresh distribution.
pub fn run_submodularity_trials(trials: usize, seed: u64) -> Result<SubmodularityReport, InfoError> {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut pairwise = MarginSummary::new();
    let mut kway = MarginSummary::new();
    for _ in 0..trials {
        let n = rng.gen_range(1..=3);
        let dist = sample_paired(&mut rng, n, 3);
        let pair = sample_family(&mut rng, n, 2);
        pairwise.record(pairwise_margin(&dist, &pair.sets()[0], &pair.sets()[1])?);
        let k = rng.gen_range(1..=3);
        kway.record(check_kway(&dist, &sample_family(&mut rng, n, k))?);
    }
    Ok(SubmodularityReport { seed, pairwise, kway })
}
