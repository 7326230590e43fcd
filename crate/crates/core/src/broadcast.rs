//! The deterministic broadcast channel and MDS-based rate transfers.
//!
//! One channel use carries a byte vector `X_A` for every nonempty subset
//! `A` of the users; receiver `u` sees exactly the `X_A` with `u` in `A`.
//! Rates are integer symbol counts per block, and a block multiplier makes
//! every fractional exchange rate land on whole symbols.

use std::collections::BTreeMap;
use std::fmt;

use num_integer::Integer;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Serialize, Serializer};
use thiserror::Error;

use crate::erasure::{decode_vectors, encode_vectors, ErasureError, MdsCodeSpec};
use crate::exactmath::Rational;
use crate::exchange::{binom_usize, phi_unchecked};

/// Largest user count the simulator accepts.
pub const MAX_USERS: usize = 6;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BroadcastError {
    #[error("the simulator supports 1..={MAX_USERS} users, got {0}")]
    Users(usize),
    #[error("{0:#b} is not a nonempty subset of {1} users")]
    Subset(u32, usize),
    #[error("level {level} is outside 1..={k}")]
    Level { level: usize, k: usize },
    #[error("source level {source_level} cannot be converted to level {target_level} by this construction")]
    Direction { source_level: usize, target_level: usize },
    #[error("a coded transfer needs a positive budget")]
    EmptyBudget,
    #[error("budget {budget} is not divisible by {divisor}")]
    Divisibility { budget: usize, divisor: usize },
    #[error("code length {0} exceeds the field size")]
    FieldSize(usize),
    #[error("{what} has length {got}, expected {expected}")]
    Shape { what: &'static str, expected: usize, got: usize },
    #[error("level {level} spends {used} symbols but has capacity {capacity}")]
    BudgetExceeded { level: usize, used: usize, capacity: usize },
    #[error("message for {subset} has {got} symbols, expected {expected}")]
    PayloadSize { subset: SubsetId, expected: usize, got: usize },
    #[error("receiver {user} did not observe {subset}")]
    MissingObservation { user: usize, subset: SubsetId },
    #[error(transparent)]
    Erasure(#[from] ErasureError),
}

fn check_users(k: usize) -> Result<(), BroadcastError> {
    if k == 0 || k > MAX_USERS {
        return Err(BroadcastError::Users(k));
    }
    Ok(())
}

fn check_level(k: usize, level: usize) -> Result<(), BroadcastError> {
    if level == 0 || level > k {
        return Err(BroadcastError::Level { level, k });
    }
    Ok(())
}

/// Nonempty set of users, bit `u - 1` standing for user `u`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SubsetId(u32);

impl SubsetId {
    pub fn new(mask: u32, k: usize) -> Result<Self, BroadcastError> {
        if mask == 0 || k >= 32 || mask >> k != 0 {
            return Err(BroadcastError::Subset(mask, k));
        }
        Ok(SubsetId(mask))
    }

    /// From 1-based user indices.
    pub fn from_members(members: &[usize], k: usize) -> Result<Self, BroadcastError> {
        let mut mask = 0u32;
        for &u in members {
            if u == 0 || u > k || u > 32 {
                return Err(BroadcastError::Subset(mask, k));
            }
            mask |= 1 << (u - 1);
        }
        SubsetId::new(mask, k)
    }

    pub fn mask(self) -> u32 {
        self.0
    }

    /// Number of users in the set.
    pub fn size(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn contains(self, user: usize) -> bool {
        (1..=32).contains(&user) && self.0 >> (user - 1) & 1 == 1
    }

    pub fn is_subset_of(self, other: SubsetId) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn members(self) -> Vec<usize> {
        (1..=32).filter(|&u| self.contains(u)).collect()
    }
}

impl fmt::Display for SubsetId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<String> = self.members().iter().map(usize::to_string).collect();
        write!(f, "{{{}}}", names.join(","))
    }
}

impl Serialize for SubsetId {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

/// All `size`-subsets of `1..=k` in lexicographic order of their members.
pub fn subsets_of_size(k: usize, size: usize) -> Vec<SubsetId> {
    fn extend(k: usize, size: usize, next: usize, mask: u32, out: &mut Vec<SubsetId>) {
        if size == 0 {
            out.push(SubsetId(mask));
            return;
        }
        for u in next..=k {
            if k - u + 1 < size {
                break;
            }
            extend(k, size - 1, u + 1, mask | 1 << (u - 1), out);
        }
    }
    let mut out = Vec::new();
    if size >= 1 && size <= k {
        extend(k, size, 1, 0, &mut out);
    }
    out
}

fn supersets_of_size(k: usize, set: SubsetId, size: usize) -> Vec<SubsetId> {
    subsets_of_size(k, size).into_iter().filter(|b| set.is_subset_of(*b)).collect()
}

fn subsets_within(k: usize, set: SubsetId, size: usize) -> Vec<SubsetId> {
    subsets_of_size(k, size).into_iter().filter(|a| a.is_subset_of(set)).collect()
}

fn position(list: &[SubsetId], set: SubsetId) -> usize {
    list.iter().position(|s| *s == set).expect("set listed")
}

/// How a pairwise scheme moves symbols between levels.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Conversion {
    Identity,
    /// Each source set holds one coded share of size `share` per target
    /// superset; every target message is MDS-coded across its source subsets.
    Up { share: usize, n: usize, k: usize },
    /// Each source set is cut into chunks of size `chunk`, one per target
    /// subset.
    Down { chunk: usize },
}

/// Transfer of `budget` symbols of every level-`source` set into level
/// `target` messages.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct TransferScheme {
    users: usize,
    source: usize,
    target: usize,
    budget: usize,
    conversion: Conversion,
}

impl TransferScheme {
    pub fn identity(k: usize, level: usize, budget: usize) -> Result<Self, BroadcastError> {
        check_users(k)?;
        check_level(k, level)?;
        Ok(TransferScheme {
            users: k,
            source: level,
            target: level,
            budget,
            conversion: Conversion::Identity,
        })
    }

    pub fn users(&self) -> usize {
        self.users
    }

    pub fn source(&self) -> usize {
        self.source
    }

    pub fn target(&self) -> usize {
        self.target
    }

    pub fn budget(&self) -> usize {
        self.budget
    }

    pub fn conversion(&self) -> Conversion {
        self.conversion
    }

    /// Symbols delivered to each target set.
    pub fn payload(&self) -> usize {
        let (k, i, j) = (self.users, self.source, self.target);
        match self.conversion {
            Conversion::Identity => self.budget,
            Conversion::Up { share, .. } => binom_usize(j - 1, i - 1) * share,
            Conversion::Down { chunk } => binom_usize(k - j, i - j) * chunk,
        }
    }

    /// Writes this scheme's symbols into `block[A][offset..offset + budget]`
    /// for every source set `A`, taking `messages[B][from..from + payload]`.
    fn place(
        &self,
        offset: usize,
        from: usize,
        messages: &BTreeMap<SubsetId, Vec<u8>>,
        block: &mut BTreeMap<SubsetId, Vec<u8>>,
    ) -> Result<(), BroadcastError> {
        let (k, i, j) = (self.users, self.source, self.target);
        let payload = self.payload();
        let piece = |b: SubsetId| &messages[&b][from..from + payload];
        match self.conversion {
            Conversion::Identity => {
                for a in subsets_of_size(k, i) {
                    block.get_mut(&a).expect("entry")[offset..offset + payload].copy_from_slice(piece(a));
                }
            }
            Conversion::Up { share, n, k: data } => {
                let spec = MdsCodeSpec::new(n, data)?;
                for b in subsets_of_size(k, j) {
                    let parts: Vec<Vec<u8>> = piece(b).chunks(share).map(<[u8]>::to_vec).collect();
                    let shares = encode_vectors(&spec, &parts)?;
                    for (t, a) in subsets_within(k, b, i).into_iter().enumerate() {
                        let slot = position(&supersets_of_size(k, a, j), b);
                        let start = offset + slot * share;
                        block.get_mut(&a).expect("entry")[start..start + share].copy_from_slice(&shares[t]);
                    }
                }
            }
            Conversion::Down { chunk } => {
                for a in subsets_of_size(k, j) {
                    let sources = supersets_of_size(k, a, i);
                    for (p, b) in sources.iter().enumerate() {
                        let slot = position(&subsets_within(k, *b, j), a);
                        let start = offset + slot * chunk;
                        block.get_mut(b).expect("entry")[start..start + chunk]
                            .copy_from_slice(&piece(a)[p * chunk..(p + 1) * chunk]);
                    }
                }
            }
        }
        Ok(())
    }

    /// Recovers this scheme's piece of every target message meant for `user`.
    fn extract(
        &self,
        offset: usize,
        observation: &Observation,
    ) -> Result<BTreeMap<SubsetId, Vec<u8>>, BroadcastError> {
        let (k, i, j) = (self.users, self.source, self.target);
        let user = observation.user;
        let seen = |a: SubsetId, start: usize, len: usize| -> Result<Vec<u8>, BroadcastError> {
            let x = observation
                .entries
                .get(&a)
                .ok_or(BroadcastError::MissingObservation { user, subset: a })?;
            Ok(x[start..start + len].to_vec())
        };
        let mut out = BTreeMap::new();
        for b in subsets_of_size(k, j).into_iter().filter(|b| b.contains(user)) {
            let recovered = match self.conversion {
                Conversion::Identity => seen(b, offset, self.budget)?,
                Conversion::Up { share, n, k: data } => {
                    let spec = MdsCodeSpec::new(n, data)?;
                    let mut shares = Vec::new();
                    for (t, a) in subsets_within(k, b, i).into_iter().enumerate() {
                        if a.contains(user) {
                            let slot = position(&supersets_of_size(k, a, j), b);
                            shares.push((t, seen(a, offset + slot * share, share)?));
                        }
                    }
                    decode_vectors(&spec, &shares)?.concat()
                }
                Conversion::Down { chunk } => {
                    let mut bytes = Vec::new();
                    for source in supersets_of_size(k, b, i) {
                        let slot = position(&subsets_within(k, source, j), b);
                        bytes.extend(seen(source, offset + slot * chunk, chunk)?);
                    }
                    bytes
                }
            };
            out.insert(b, recovered);
        }
        Ok(out)
    }
}

/// Up-conversion from level `i` to level `j >= i`; `i == j` gives the
/// identity scheme.
pub fn build_up_scheme(k: usize, i: usize, j: usize, s: usize) -> Result<TransferScheme, BroadcastError> {
    check_users(k)?;
    check_level(k, i)?;
    check_level(k, j)?;
    if i == j {
        return TransferScheme::identity(k, i, s);
    }
    if i > j {
        return Err(BroadcastError::Direction {
            source_level: i,
            target_level: j,
        });
    }
    let slots = binom_usize(k - i, j - i);
    if s == 0 {
        return Err(BroadcastError::EmptyBudget);
    }
    if !s.is_multiple_of(slots) {
        return Err(BroadcastError::Divisibility { budget: s, divisor: slots });
    }
    let n = binom_usize(j, i);
    if n > 255 {
        return Err(BroadcastError::FieldSize(n));
    }
    Ok(TransferScheme {
        users: k,
        source: i,
        target: j,
        budget: s,
        conversion: Conversion::Up {
            share: s / slots,
            n,
            k: binom_usize(j - 1, i - 1),
        },
    })
}

/// Down-conversion from level `i` to level `j <= i`; `i == j` gives the
/// identity scheme.
pub fn build_down_scheme(k: usize, i: usize, j: usize, s: usize) -> Result<TransferScheme, BroadcastError> {
    check_users(k)?;
    check_level(k, i)?;
    check_level(k, j)?;
    if i == j {
        return TransferScheme::identity(k, i, s);
    }
    if i < j {
        return Err(BroadcastError::Direction {
            source_level: i,
            target_level: j,
        });
    }
    let chunks = binom_usize(i, j);
    if s == 0 {
        return Err(BroadcastError::EmptyBudget);
    }
    if !s.is_multiple_of(chunks) {
        return Err(BroadcastError::Divisibility { budget: s, divisor: chunks });
    }
    Ok(TransferScheme {
        users: k,
        source: i,
        target: j,
        budget: s,
        conversion: Conversion::Down { chunk: s / chunks },
    })
}

/// Up, down or identity, whichever the levels call for.
pub fn build_scheme(k: usize, i: usize, j: usize, s: usize) -> Result<TransferScheme, BroadcastError> {
    if i <= j {
        build_up_scheme(k, i, j, s)
    } else {
        build_down_scheme(k, i, j, s)
    }
}

/// Smallest budget granularity a pairwise scheme needs.
fn divisor(k: usize, i: usize, j: usize) -> usize {
    match i.cmp(&j) {
        std::cmp::Ordering::Equal => 1,
        std::cmp::Ordering::Less => binom_usize(k - i, j - i),
        std::cmp::Ordering::Greater => binom_usize(i, j),
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
struct Part {
    scheme: TransferScheme,
    /// Start of the scheme's symbols inside each source `X_A`.
    source_offset: usize,
    /// Start of the scheme's piece inside each target message.
    target_offset: usize,
}

/// Pairwise schemes sharing the channel, scaled by a common block
/// multiplier.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct CompositeScheme {
    users: usize,
    multiplier: usize,
    capacities: Vec<usize>,
    parts: Vec<Part>,
    payloads: Vec<usize>,
}

impl CompositeScheme {
    /// A lone pairwise scheme on a channel whose only capacity is its budget.
    pub fn single(scheme: TransferScheme) -> Self {
        let mut capacities = vec![0; scheme.users];
        capacities[scheme.source - 1] = scheme.budget;
        let mut payloads = vec![0; scheme.users];
        payloads[scheme.target - 1] = scheme.payload();
        CompositeScheme {
            users: scheme.users,
            multiplier: 1,
            capacities,
            parts: vec![Part {
                scheme,
                source_offset: 0,
                target_offset: 0,
            }],
            payloads,
        }
    }

    pub fn users(&self) -> usize {
        self.users
    }

    pub fn multiplier(&self) -> usize {
        self.multiplier
    }

    /// Symbols per set at each level in one (scaled) block.
    pub fn capacities(&self) -> &[usize] {
        &self.capacities
    }

    /// Symbols delivered to each set at each level in one (scaled) block.
    pub fn payloads(&self) -> &[usize] {
        &self.payloads
    }

    pub fn schemes(&self) -> impl Iterator<Item = &TransferScheme> {
        self.parts.iter().map(|p| &p.scheme)
    }

    /// Every target set with a nonzero payload, with its size.
    pub fn message_sets(&self) -> Vec<(SubsetId, usize)> {
        (1..=self.users)
            .filter(|&j| self.payloads[j - 1] > 0)
            .flat_map(|j| subsets_of_size(self.users, j).into_iter().map(move |b| (b, j)))
            .map(|(b, j)| (b, self.payloads[j - 1]))
            .collect()
    }

    /// Random messages of the right sizes.
    pub fn random_messages(&self, rng: &mut impl RngCore) -> BTreeMap<SubsetId, Vec<u8>> {
        self.message_sets()
            .into_iter()
            .map(|(b, len)| {
                let mut bytes = vec![0u8; len];
                rng.fill_bytes(&mut bytes);
                (b, bytes)
            })
            .collect()
    }
}

/// Shares each level's capacity among pairwise schemes, `allocation[i-1][j-1]`
/// symbols of level `i` going to level `j`.
pub fn compose(k: usize, capacities: &[usize], allocation: &[Vec<usize>]) -> Result<CompositeScheme, BroadcastError> {
    check_users(k)?;
    if capacities.len() != k {
        return Err(BroadcastError::Shape {
            what: "capacity profile",
            expected: k,
            got: capacities.len(),
        });
    }
    if allocation.len() != k {
        return Err(BroadcastError::Shape {
            what: "allocation",
            expected: k,
            got: allocation.len(),
        });
    }
    let mut multiplier = 1usize;
    for (row, level) in allocation.iter().zip(1..) {
        if row.len() != k {
            return Err(BroadcastError::Shape {
                what: "allocation row",
                expected: k,
                got: row.len(),
            });
        }
        let used: usize = row.iter().sum();
        if used > capacities[level - 1] {
            return Err(BroadcastError::BudgetExceeded {
                level,
                used,
                capacity: capacities[level - 1],
            });
        }
        for (&r, j) in row.iter().zip(1..) {
            if r > 0 {
                let d = divisor(k, level, j);
                multiplier = multiplier.lcm(&(d / d.gcd(&r)));
            }
        }
    }
    let mut parts = Vec::new();
    let mut payloads = vec![0; k];
    for (row, i) in allocation.iter().zip(1..) {
        let mut source_offset = 0;
        for (&r, j) in row.iter().zip(1..) {
            if r == 0 {
                continue;
            }
            let scheme = build_scheme(k, i, j, r * multiplier)?;
            parts.push(Part {
                scheme,
                source_offset,
                target_offset: payloads[j - 1],
            });
            source_offset += scheme.budget;
            payloads[j - 1] += scheme.payload();
        }
    }
    Ok(CompositeScheme {
        users: k,
        multiplier,
        capacities: capacities.iter().map(|c| c * multiplier).collect(),
        parts,
        payloads,
    })
}

/// One use of the channel: an input vector for every nonempty subset.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ChannelBlock {
    users: usize,
    capacities: Vec<usize>,
    entries: BTreeMap<SubsetId, Vec<u8>>,
}

impl ChannelBlock {
    pub fn entries(&self) -> &BTreeMap<SubsetId, Vec<u8>> {
        &self.entries
    }

    pub fn capacities(&self) -> &[usize] {
        &self.capacities
    }

    pub fn byte_count(&self) -> usize {
        self.entries.values().map(Vec::len).sum()
    }

    /// Hex dump per subset.
    pub fn trace(&self) -> Vec<TraceEntry> {
        self.entries
            .iter()
            .map(|(a, x)| TraceEntry {
                subset: *a,
                hex: hex::encode(x),
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct TraceEntry {
    pub subset: SubsetId,
    pub hex: String,
}

/// Encodes `messages` onto a block. Capacity left unused by the schemes is
/// filled with bytes drawn from `seed`.
pub fn transmit(
    scheme: &CompositeScheme,
    messages: &BTreeMap<SubsetId, Vec<u8>>,
    seed: u64,
) -> Result<ChannelBlock, BroadcastError> {
    let k = scheme.users;
    for (subset, msg) in messages {
        let expected = scheme.payloads.get(subset.size().wrapping_sub(1)).copied().unwrap_or(0);
        if msg.len() != expected || subset.0 >> k != 0 {
            return Err(BroadcastError::PayloadSize {
                subset: *subset,
                expected,
                got: msg.len(),
            });
        }
    }
    for (subset, expected) in scheme.message_sets() {
        if !messages.contains_key(&subset) {
            return Err(BroadcastError::PayloadSize {
                subset,
                expected,
                got: 0,
            });
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut entries = BTreeMap::new();
    for level in 1..=k {
        for a in subsets_of_size(k, level) {
            let mut filler = vec![0u8; scheme.capacities[level - 1]];
            rng.fill_bytes(&mut filler);
            entries.insert(a, filler);
        }
    }
    for part in &scheme.parts {
        part.scheme
            .place(part.source_offset, part.target_offset, messages, &mut entries)?;
    }
    Ok(ChannelBlock {
        users: k,
        capacities: scheme.capacities.clone(),
        entries,
    })
}

/// What receiver `user` sees of one block.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Observation {
    user: usize,
    entries: BTreeMap<SubsetId, Vec<u8>>,
}

impl Observation {
    pub fn user(&self) -> usize {
        self.user
    }

    pub fn entries(&self) -> &BTreeMap<SubsetId, Vec<u8>> {
        &self.entries
    }
}

/// Receiver `user` observes exactly the `X_A` with `user` in `A`.
pub fn receive(user: usize, block: &ChannelBlock) -> Result<Observation, BroadcastError> {
    check_level(block.users, user)?;
    Ok(Observation {
        user,
        entries: block
            .entries
            .iter()
            .filter(|(a, _)| a.contains(user))
            .map(|(a, x)| (*a, x.clone()))
            .collect(),
    })
}

/// Every receiver's reconstruction of the messages addressed to it.
pub fn decode_all(
    scheme: &CompositeScheme,
    observations: &[Observation],
) -> Result<BTreeMap<usize, BTreeMap<SubsetId, Vec<u8>>>, BroadcastError> {
    let mut out = BTreeMap::new();
    for obs in observations {
        let mut decoded: BTreeMap<SubsetId, Vec<u8>> = BTreeMap::new();
        for part in &scheme.parts {
            for (b, piece) in part.scheme.extract(part.source_offset, obs)? {
                let msg = decoded
                    .entry(b)
                    .or_insert_with(|| vec![0u8; scheme.payloads[b.size() - 1]]);
                msg[part.target_offset..part.target_offset + piece.len()].copy_from_slice(&piece);
            }
        }
        out.insert(obs.user, decoded);
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ReceiverReport {
    pub user: usize,
    pub messages_expected: usize,
    pub messages_decoded: usize,
    pub success: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SimulationReport {
    pub users: usize,
    pub seed: u64,
    pub block_multiplier: usize,
    /// Symbols per set at each level in one scaled block.
    pub capacities_per_block: Vec<usize>,
    /// Symbols delivered to each set at each level in one scaled block.
    pub delivered_symbols: Vec<usize>,
    /// Delivered symbols per unscaled block.
    pub delivered_rates: Vec<Rational>,
    /// `sum_i phi(i, j) * r[i][j]` for each level `j`.
    pub predicted_rates: Vec<Rational>,
    pub rates_exact: bool,
    pub receivers: Vec<ReceiverReport>,
    pub bytes_on_channel: usize,
    pub success: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trace: Option<Vec<TraceEntry>>,
}

/// `sum_i phi(i, j) * allocation[i-1][j-1]` for each level `j`.
pub fn predicted_rates(k: usize, allocation: &[Vec<usize>]) -> Vec<Rational> {
    (1..=k)
        .map(|j| {
            (1..=k)
                .map(|i| &phi_unchecked(k, i, j) * &Rational::from(allocation[i - 1][j - 1]))
                .sum()
        })
        .collect()
}

pub fn run_end_to_end(
    k: usize,
    capacities: &[usize],
    allocation: &[Vec<usize>],
    seed: u64,
) -> Result<SimulationReport, BroadcastError> {
    simulate(k, capacities, allocation, seed, false)
}

/// [`run_end_to_end`], optionally keeping a hex dump of the block.
pub fn simulate(
    k: usize,
    capacities: &[usize],
    allocation: &[Vec<usize>],
    seed: u64,
    keep_trace: bool,
) -> Result<SimulationReport, BroadcastError> {
    let scheme = compose(k, capacities, allocation)?;
    let mut message_rng = ChaCha8Rng::seed_from_u64(seed);
    message_rng.set_stream(1);
    let messages = scheme.random_messages(&mut message_rng);
    let block = transmit(&scheme, &messages, seed)?;
    let observations = (1..=k)
        .map(|u| receive(u, &block))
        .collect::<Result<Vec<_>, _>>()?;
    let decoded = decode_all(&scheme, &observations)?;
    let receivers: Vec<ReceiverReport> = (1..=k)
        .map(|u| {
            let wanted: Vec<&SubsetId> = messages.keys().filter(|b| b.contains(u)).collect();
            let got = &decoded[&u];
            let correct = wanted.iter().filter(|b| got.get(b) == messages.get(b)).count();
            ReceiverReport {
                user: u,
                messages_expected: wanted.len(),
                messages_decoded: correct,
                success: correct == wanted.len() && got.len() == wanted.len(),
            }
        })
        .collect();
    let m = Rational::from(scheme.multiplier);
    let delivered_rates: Vec<Rational> = scheme.payloads.iter().map(|&p| &Rational::from(p) / &m).collect();
    let predicted = predicted_rates(k, allocation);
    Ok(SimulationReport {
        users: k,
        seed,
        block_multiplier: scheme.multiplier,
        capacities_per_block: scheme.capacities.clone(),
        delivered_symbols: scheme.payloads.clone(),
        rates_exact: delivered_rates == predicted,
        delivered_rates,
        predicted_rates: predicted,
        success: receivers.iter().all(|r| r.success),
        receivers,
        bytes_on_channel: block.byte_count(),
        trace: keep_trace.then(|| block.trace()),
    })
}

/// Random capacities in `0..=max_capacity` and a random whole-symbol
/// allocation within them.
pub fn sample_instance(k: usize, max_capacity: usize, rng: &mut impl Rng) -> (Vec<usize>, Vec<Vec<usize>>) {
    let capacities: Vec<usize> = (0..k).map(|_| rng.gen_range(0..=max_capacity)).collect();
    let allocation = capacities
        .iter()
        .map(|&c| {
            let mut left = rng.gen_range(0..=c);
            let mut row = vec![0; k];
            while left > 0 {
                let amount = rng.gen_range(1..=left);
                row[rng.gen_range(0..k)] += amount;
                left -= amount;
            }
            row
        })
        .collect();
    (capacities, allocation)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_single(scheme: TransferScheme, seed: u64) -> (CompositeScheme, BTreeMap<SubsetId, Vec<u8>>, ChannelBlock) {
        let composite = CompositeScheme::single(scheme);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let messages = composite.random_messages(&mut rng);
        let block = transmit(&composite, &messages, seed).unwrap();
        let observations: Vec<Observation> = (1..=scheme.users()).map(|u| receive(u, &block).unwrap()).collect();
        let decoded = decode_all(&composite, &observations).unwrap();
        for u in 1..=scheme.users() {
            for (b, msg) in &messages {
                if b.contains(u) {
                    assert_eq!(decoded[&u].get(b), Some(msg), "user {u} set {b}");
                }
            }
        }
        (composite, messages, block)
    }

    #[test]
    fn subset_ids() {
        assert_eq!(subsets_of_size(3, 2).iter().map(|s| s.to_string()).collect::<Vec<_>>(), ["{1,2}", "{1,3}", "{2,3}"]);
        assert_eq!(subsets_of_size(4, 0), vec![]);
        assert_eq!(subsets_of_size(6, 3).len(), 20);
        let s = SubsetId::from_members(&[1, 3], 3).unwrap();
        assert!(s.contains(3) && !s.contains(2));
        assert_eq!(s.size(), 2);
        assert!(SubsetId::new(0, 3).is_err());
        assert!(SubsetId::new(0b1000, 3).is_err());
        assert!(SubsetId::from_members(&[4], 3).is_err());
    }

    #[test]
    fn up_two_to_three() {
        let s = build_up_scheme(3, 2, 3, 1).unwrap();
        assert_eq!(s.conversion(), Conversion::Up { share: 1, n: 3, k: 2 });
        assert_eq!(s.payload(), 2);
        let (_, _, block) = run_single(s, 5);
        for u in 1..=3 {
            let obs = receive(u, &block).unwrap();
            let pairs = obs.entries().keys().filter(|a| a.size() == 2).count();
            assert_eq!(pairs, 2);
        }
    }

    #[test]
    fn up_one_to_two() {
        let s = build_up_scheme(3, 1, 2, 2).unwrap();
        assert_eq!(s.conversion(), Conversion::Up { share: 1, n: 2, k: 1 });
        assert_eq!(s.payload(), 1);
        run_single(s, 6);
    }

    #[test]
    fn down_schemes() {
        for (k, i, j, s, delivered) in [(3, 3, 1, 3, 1), (2, 2, 1, 2, 1), (3, 3, 2, 3, 1)] {
            let scheme = build_down_scheme(k, i, j, s).unwrap();
            assert_eq!(scheme.payload(), delivered);
            assert_eq!(Rational::from(delivered), &phi_unchecked(k, i, j) * &Rational::from(s));
            run_single(scheme, 7);
        }
    }

    #[test]
    fn identity_and_errors() {
        let s = build_up_scheme(3, 2, 2, 4).unwrap();
        assert_eq!(s.conversion(), Conversion::Identity);
        assert_eq!(s.payload(), 4);
        run_single(s, 1);
        assert_eq!(
            build_up_scheme(3, 1, 2, 1),
            Err(BroadcastError::Divisibility { budget: 1, divisor: 2 })
        );
        assert_eq!(
            build_down_scheme(3, 3, 1, 2),
            Err(BroadcastError::Divisibility { budget: 2, divisor: 3 })
        );
        assert!(matches!(build_up_scheme(3, 3, 1, 3), Err(BroadcastError::Direction { .. })));
        assert!(matches!(build_up_scheme(7, 1, 2, 6), Err(BroadcastError::Users(7))));
    }

    #[test]
    fn single_user_passthrough() {
        let report = run_end_to_end(1, &[3], &[vec![3]], 9).unwrap();
        assert!(report.success);
        assert_eq!(report.delivered_symbols, vec![3]);
    }

    #[test]
    fn every_pair_is_exact_and_decodable() {
        for k in 1..=MAX_USERS {
            for i in 1..=k {
                for j in 1..=k {
                    let mut alloc = vec![vec![0; k]; k];
                    alloc[i - 1][j - 1] = 1;
                    let mut caps = vec![0; k];
                    caps[i - 1] = 1;
                    let report = run_end_to_end(k, &caps, &alloc, (k * 100 + i * 10 + j) as u64).unwrap();
                    assert!(report.success, "k={k} {i}->{j}");
                    assert!(report.rates_exact, "k={k} {i}->{j}");
                }
            }
        }
    }

    #[test]
    fn composite_examples() {
        let diag = run_end_to_end(3, &[1, 2, 3], &[vec![1, 0, 0], vec![0, 2, 0], vec![0, 0, 3]], 0).unwrap();
        assert_eq!(diag.delivered_symbols, vec![1, 2, 3]);
        let up = run_end_to_end(3, &[0, 2, 0], &[vec![0; 3], vec![0, 0, 2], vec![0; 3]], 0).unwrap();
        assert_eq!(up.delivered_symbols, vec![0, 0, 4]);
        assert_eq!(up.block_multiplier, 1);
        let down = run_end_to_end(3, &[0, 0, 3], &[vec![0; 3], vec![0; 3], vec![3, 0, 0]], 0).unwrap();
        assert_eq!(down.delivered_symbols, vec![1, 0, 0]);
        for r in [diag, up, down] {
            assert!(r.success && r.rates_exact);
        }
    }

    #[test]
    fn multiplier_absorbs_fractions() {
        // phi(1,2) = 1/2 with K = 3, one symbol per block needs two blocks.
        let r = run_end_to_end(3, &[1, 0, 0], &[vec![0, 1, 0], vec![0; 3], vec![0; 3]], 2).unwrap();
        assert_eq!(r.block_multiplier, 2);
        assert_eq!(r.delivered_symbols, vec![0, 1, 0]);
        assert_eq!(r.delivered_rates[1], Rational::frac(1, 2));
        assert!(r.success);
    }

    #[test]
    fn budget_and_payload_checks() {
        assert_eq!(
            compose(2, &[1, 1], &[vec![1, 1], vec![0, 0]]),
            Err(BroadcastError::BudgetExceeded { level: 1, used: 2, capacity: 1 })
        );
        let scheme = compose(2, &[1, 0], &[vec![1, 0], vec![0, 0]]).unwrap();
        let mut messages = BTreeMap::new();
        messages.insert(SubsetId::from_members(&[1], 2).unwrap(), vec![1u8, 2]);
        messages.insert(SubsetId::from_members(&[2], 2).unwrap(), vec![1u8]);
        assert!(matches!(transmit(&scheme, &messages, 0), Err(BroadcastError::PayloadSize { .. })));
    }

    #[test]
    fn receivers_see_only_their_sets() {
        let scheme = compose(4, &[1, 1, 1, 1], &[vec![1, 0, 0, 0], vec![0, 1, 0, 0], vec![0, 0, 1, 0], vec![0, 0, 0, 1]]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let block = transmit(&scheme, &scheme.random_messages(&mut rng), 0).unwrap();
        for u in 1..=4 {
            let obs = receive(u, &block).unwrap();
            assert_eq!(obs.entries().len(), 8);
            for (a, x) in obs.entries() {
                assert!(a.contains(u));
                assert_eq!(x, &block.entries()[a]);
            }
        }
        assert!(receive(5, &block).is_err());
    }

    #[test]
    fn random_composites_decode() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for trial in 0..60u64 {
            let k = rng.gen_range(1..=4);
            let (caps, alloc) = sample_instance(k, 4, &mut rng);
            let r = run_end_to_end(k, &caps, &alloc, trial).unwrap();
            assert!(r.success, "trial {trial}");
            assert!(r.rates_exact, "trial {trial}");
            for (level, c) in r.capacities_per_block.iter().enumerate() {
                assert_eq!(*c, caps[level] * r.block_multiplier);
            }
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let a = simulate(3, &[2, 2, 2], &[vec![0, 2, 0], vec![0, 0, 2], vec![1, 1, 0]], 17, true).unwrap();
        let b = simulate(3, &[2, 2, 2], &[vec![0, 2, 0], vec![0, 0, 2], vec![1, 1, 0]], 17, true).unwrap();
        assert_eq!(a, b);
        assert!(a.trace.is_some());
    }
}
