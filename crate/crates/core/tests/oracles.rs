//! Oracle equivalence: the majority-prefix operator and the witness producer
//! against independent brute-force implementations.
//!
//! The brute-force sides deliberately share no code with the library: the
//! prefix oracle enumerates every prefix of every input and counts
//! supporters element-wise; the producer oracle searches all distinct-signer
//! vote subsets. Exhaustive families sweep small alphabets chosen to cover
//! deep chains (2 symbols, length 5), wide branching (5 symbols), and the
//! mix (3 symbols).

use std::collections::BTreeSet;

use thaw_core::crypto::KeyStore;
use thaw_core::internal::{witness_consume, FinalityVote, InstanceId, VotePool, Witness};
use thaw_core::ledger::{majority_prefix, Ledger, TxId};

use proptest::prelude::*;

fn ids(l: &Ledger) -> &[TxId] {
    l.ids()
}

/// Brute force: every prefix of every input is a candidate; count supporters
/// by element-wise comparison; take the longest above the strict-majority
/// threshold. Also asserts that all passing candidates form a prefix chain.
fn oracle_majority_prefix(inputs: &[Ledger], set_size: usize) -> Ledger {
    let mut candidates: BTreeSet<&[TxId]> = BTreeSet::new();
    candidates.insert(&[]);
    for l in inputs {
        for k in 0..=l.len() {
            candidates.insert(&ids(l)[..k]);
        }
    }
    let supports = |cand: &[TxId]| {
        inputs
            .iter()
            .filter(|l| l.len() >= cand.len() && &ids(l)[..cand.len()] == cand)
            .count()
    };
    let mut passing: Vec<&[TxId]> =
        candidates.into_iter().filter(|c| 2 * supports(c) > set_size).collect();
    passing.sort_by_key(|c| c.len());
    for w in passing.windows(2) {
        assert_eq!(
            &w[1][..w[0].len()],
            w[0],
            "threshold-passing candidates must form a prefix chain"
        );
    }
    Ledger::from_ids(passing.pop().unwrap_or(&[]).iter().cloned())
}

/// All ledgers over `alphabet` symbols with length at most `max_len`. Ids
/// are position-tagged so they stay unique within a ledger while prefixes
/// still collide across ledgers: the prefix tree over these ids is
/// isomorphic to the raw symbol tree.
fn all_ledgers(alphabet: usize, max_len: usize) -> Vec<Ledger> {
    let mut out = vec![Vec::new()];
    let mut frontier: Vec<Vec<TxId>> = vec![Vec::new()];
    for pos in 0..max_len {
        let mut next = Vec::new();
        for stem in &frontier {
            for s in 0..alphabet {
                let mut l = stem.clone();
                l.push(format!("p{pos}x{s}"));
                out.push(l.clone());
                next.push(l);
            }
        }
        frontier = next;
    }
    out.into_iter().map(Ledger::from_ids).collect()
}

/// Checks every multiset of up to `max_count` ledgers drawn from `pool`,
/// against every set size in `set_sizes`.
fn sweep(pool: &[Ledger], max_count: usize, set_sizes: &[usize]) -> u64 {
    let mut checked = 0;
    let mut inputs: Vec<Ledger> = Vec::new();
    fn rec(
        pool: &[Ledger],
        inputs: &mut Vec<Ledger>,
        from: usize,
        left: usize,
        set_sizes: &[usize],
        checked: &mut u64,
    ) {
        for &n in set_sizes {
            if inputs.len() <= n {
                assert_eq!(
                    majority_prefix(inputs, n),
                    oracle_majority_prefix(inputs, n),
                    "inputs {inputs:?}, set size {n}"
                );
                *checked += 1;
            }
        }
        if left == 0 {
            return;
        }
        for i in from..pool.len() {
            inputs.push(pool[i].clone());
            rec(pool, inputs, i, left - 1, set_sizes, checked);
            inputs.pop();
        }
    }
    rec(pool, &mut inputs, 0, max_count, set_sizes, &mut checked);
    checked
}

#[test]
fn majority_prefix_matches_oracle_deep_chains() {
    // 2 symbols, length up to 5, up to 5 ledgers.
    let pool = all_ledgers(2, 5);
    let checked = sweep(&pool, 5, &[5]);
    assert!(checked > 9_000_000, "swept {checked}");
}

#[test]
fn majority_prefix_matches_oracle_wide_branching() {
    // 5 symbols, length up to 2: every branching shape of 5 inputs.
    let pool = all_ledgers(5, 2);
    let checked = sweep(&pool, 5, &[5]);
    assert!(checked > 300_000, "swept {checked}");
}

#[test]
fn majority_prefix_matches_oracle_mixed() {
    // 3 symbols, length up to 3, against several set sizes including ones
    // larger than the input count.
    let pool = all_ledgers(3, 3);
    let checked = sweep(&pool, 4, &[3, 4, 6]);
    assert!(checked > 250_000, "swept {checked}");
}

fn arb_ledger(alphabet: usize, max_len: usize) -> impl Strategy<Value = Ledger> {
    prop::collection::vec(0..alphabet, 0..=max_len).prop_map(|v| {
        // Positions make ids unique within the ledger while prefixes still
        // collide across ledgers.
        Ledger::from_ids(v.into_iter().enumerate().map(|(i, s)| format!("p{i}x{s}")))
    })
}

proptest! {
    #[test]
    fn majority_prefix_matches_oracle_random(
        inputs in prop::collection::vec(arb_ledger(4, 6), 0..=7),
        extra in 0usize..3,
    ) {
        let n = inputs.len() + extra;
        if n == 0 {
            return Ok(());
        }
        prop_assert_eq!(majority_prefix(&inputs, n), oracle_majority_prefix(&inputs, n));
    }

    #[test]
    fn majority_prefix_is_order_invariant(
        inputs in prop::collection::vec(arb_ledger(3, 5), 1..=6),
        seed in 0u64..1000,
    ) {
        let n = inputs.len();
        let mut shuffled = inputs.clone();
        // Cheap deterministic shuffle.
        let len = shuffled.len();
        for i in 0..len {
            let j = ((seed as usize).wrapping_mul(31).wrapping_add(i * 17)) % len;
            shuffled.swap(i, j);
        }
        prop_assert_eq!(majority_prefix(&inputs, n), majority_prefix(&shuffled, n));
    }

    #[test]
    fn majority_prefix_monotone_under_extension(
        inputs in prop::collection::vec(arb_ledger(3, 4), 1..=5),
        pick in any::<prop::sample::Index>(),
        suffix in prop::collection::vec(0usize..3, 1..=2),
    ) {
        let n = inputs.len();
        let before = majority_prefix(&inputs, n);
        let mut extended = inputs.clone();
        let i = pick.index(extended.len());
        let base_len = extended[i].len();
        let ext: Vec<String> =
            suffix.iter().enumerate().map(|(j, s)| format!("p{}x{s}", base_len + j)).collect();
        extended[i] = extended[i].extended_with(ext.iter());
        let after = majority_prefix(&extended, n);
        prop_assert!(after.len() >= before.len(),
            "extension shortened the majority prefix: {before} -> {after}");
        // And the result still sits below a majority of inputs.
        let support = extended.iter().filter(|l| after.is_prefix_of(l)).count();
        prop_assert!(after.is_empty() || 2 * support > n);
    }
}

// --- witness producer vs exhaustive subset search ---

struct PoolCase {
    instance: InstanceId,
    votes: Vec<FinalityVote>,
}

fn build_case(n: usize, genesis: &[&str], raw: &[(usize, Vec<String>)]) -> PoolCase {
    let ks = KeyStore::new(n);
    let instance = InstanceId {
        era: 0,
        genesis: Ledger::from_ids(genesis.iter().copied()),
        valset: thaw_core::ValidatorSet::full(n),
        start_round: 0,
    };
    let digest = {
        use thaw_core::crypto::Encode;
        instance.digest()
    };
    let votes = raw
        .iter()
        .map(|(signer, ledger)| {
            FinalityVote::sign(&ks.handle(*signer), digest, Ledger::from_ids(ledger.clone()))
        })
        .collect();
    PoolCase { instance, votes }
}

/// Exhaustive search over all distinct-signer subsets of the pool; returns
/// the consumed ledgers of maximum length.
fn oracle_best_ledgers(case: &PoolCase) -> Vec<Ledger> {
    let m = case.votes.len();
    assert!(m <= 12);
    let mut best: Vec<Ledger> = Vec::new();
    for mask in 1u32..(1 << m) {
        let subset: Vec<FinalityVote> = (0..m)
            .filter(|i| mask & (1 << i) != 0)
            .map(|i| case.votes[i].clone())
            .collect();
        let signers: BTreeSet<_> = subset.iter().map(|v| v.signer()).collect();
        if signers.len() != subset.len() {
            continue;
        }
        let w = Witness { instance: case.instance.clone(), votes: subset };
        let Ok(l) = witness_consume(&w) else { continue };
        match best.first().map(|b| b.len()) {
            Some(len) if l.len() < len => {}
            Some(len) if l.len() == len => {
                if !best.contains(&l) {
                    best.push(l);
                }
            }
            _ => best = vec![l],
        }
    }
    best.sort();
    best
}

fn check_producer(case: &PoolCase) {
    let mut pool = VotePool::new(case.instance.clone());
    for v in &case.votes {
        pool.add(v);
    }
    let best = oracle_best_ledgers(case);
    match pool.produce() {
        None => assert!(best.is_empty(), "producer returned none but {best:?} achievable"),
        Some(w) => {
            let got = witness_consume(&w).expect("produced witness must consume");
            assert!(!best.is_empty(), "producer built a witness the oracle could not");
            assert_eq!(got.len(), best[0].len(), "producer missed the longest consumable ledger");
            assert_eq!(got, best[0], "tie must resolve to the lexicographically least ledger");
        }
    }
}

#[test]
fn witness_producer_handcrafted_edges() {
    // A shorter equivocated vote completes the majority the longest one
    // cannot.
    check_producer(&build_case(
        3,
        &[],
        &[
            (0, vec!["t9".into(), "t10".into(), "t11".into()]),
            (0, vec!["t1".into(), "t2".into()]),
            (1, vec!["t1".into(), "t2".into(), "t3".into()]),
        ],
    ));
    // Below quorum.
    check_producer(&build_case(5, &[], &[(0, vec!["t1".into()]), (1, vec!["t1".into()])]));
    // Two incomparable majority branches of equal length.
    check_producer(&build_case(
        3,
        &[],
        &[
            (0, vec!["a".into()]),
            (0, vec!["b".into()]),
            (1, vec!["a".into()]),
            (2, vec!["b".into()]),
        ],
    ));
    // Genesis-anchored pool.
    check_producer(&build_case(
        3,
        &["g1", "g2"],
        &[
            (0, vec!["g1".into(), "g2".into(), "t1".into()]),
            (1, vec!["g1".into(), "g2".into()]),
            (2, vec!["g1".into(), "g2".into(), "t1".into(), "t2".into()]),
        ],
    ));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1500))]
    #[test]
    fn witness_producer_matches_subset_search(
        n in 3usize..=5,
        raw in prop::collection::vec((0usize..5, prop::collection::vec(0usize..3, 0..=4)), 0..=8),
    ) {
        // Ledger symbols collide across votes so majorities form; the signer
        // index is truncated into the valset.
        let raw: Vec<(usize, Vec<String>)> = raw
            .into_iter()
            .map(|(s, l)| {
                let ledger: Vec<String> =
                    l.into_iter().enumerate().map(|(i, x)| format!("p{i}x{x}")).collect();
                (s % n, ledger)
            })
            .collect();
        let case = build_case(n, &[], &raw);
        check_producer(&case);
    }
}
