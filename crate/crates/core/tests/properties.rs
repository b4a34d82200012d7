//! Randomized end-to-end properties of the ledger: conservation under
//! arbitrary traffic, no outpoint ever included twice, and replay
//! equivalence of the resulting block list.

use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;

use chainsim_core::address::Address;
use chainsim_core::amount::Amount;
use chainsim_core::block::PayloadItem;
use chainsim_core::chain::{Chain, ChainConfig};
use chainsim_core::codec::Digest;
use chainsim_core::keys::Identity;
use chainsim_core::tx::{Outpoint, Transfer, TxOutput};

const ACTORS: usize = 4;

fn actors() -> Vec<(Identity, Address)> {
    (0..ACTORS)
        .map(|i| {
            let id = Identity::from_seed(&format!("trader-{i}"));
            let addr = Address::for_key(id.public());
            (id, addr)
        })
        .collect()
}

fn traffic_chain() -> Chain {
    let genesis = actors()
        .iter()
        .map(|(_, addr)| (addr.clone(), Amount::from_coins(25)))
        .collect();
    Chain::new(ChainConfig {
        chain_id: "traffic".into(),
        block_interval_ticks: 1,
        block_capacity: 8,
        mining_reward: Amount::from_base_units(50),
        miner_seeds: vec!["m0".into(), "m1".into()],
        rng_seed: 5,
        genesis_allocations: genesis,
    })
    .unwrap()
}

/// One scripted step: who pays, who receives, whether to split the note in
/// two, and whether to also fire a replay of an already-spent outpoint.
type Step = (u8, u8, bool, bool);

fn run_traffic(steps: &[Step]) -> (Chain, Vec<Outpoint>) {
    let people = actors();
    let mut chain = traffic_chain();
    let mut spent_before: Vec<(Outpoint, usize)> = Vec::new();
    let mut replayed: Vec<Outpoint> = Vec::new();

    for (tick, (payer, payee, split, replay)) in steps.iter().enumerate() {
        let payer = *payer as usize % ACTORS;
        let payee = *payee as usize % ACTORS;
        let (payer_id, payer_addr) = &people[payer];
        let payee_addr = people[payee].1.clone();

        if let Some((outpoint, output)) = chain.utxos_owned_by(payer_addr).into_iter().next() {
            let value = output.value;
            let half = Amount::from_base_units(value.base_units() / 2);
            let rest = value.checked_sub(half).unwrap();
            let outputs = if *split && !half.is_zero() && !rest.is_zero() {
                vec![
                    TxOutput { value: half, recipient: payee_addr.clone() },
                    TxOutput { value: rest, recipient: payer_addr.clone() },
                ]
            } else {
                vec![TxOutput { value, recipient: payee_addr.clone() }]
            };
            let tx = Transfer::signed(vec![(outpoint, payer_id)], outputs);
            chain.submit(PayloadItem::Transfer(tx)).unwrap();
            spent_before.push((outpoint, payer));
        }

        if *replay {
            if let Some((outpoint, owner)) = spent_before.first().cloned() {
                // Same outpoint, different outputs: a fresh id that gets
                // past the duplicate filter and must be evicted instead.
                let thief = &people[owner].0;
                let marker = TxOutput {
                    value: Amount::from_base_units(1),
                    recipient: people[(owner + 1) % ACTORS].1.clone(),
                };
                let tx = Transfer::signed(vec![(outpoint, thief)], vec![marker]);
                if chain.submit(PayloadItem::Transfer(tx)).is_ok() {
                    replayed.push(outpoint);
                }
            }
        }

        let _ = chain.tick(tick as u64 + 1);
    }

    // Let the mempool drain so every accepted submission gets a verdict.
    let mut tick = steps.len() as u64 + 1;
    while chain.mempool_len() > 0 {
        let _ = chain.tick(tick);
        tick += 1;
    }
    (chain, replayed)
}

fn included_spends(chain: &Chain) -> Vec<Outpoint> {
    let mut all = Vec::new();
    for block in chain.blocks() {
        for item in &block.payload {
            if let PayloadItem::Transfer(tx) = item {
                all.extend(tx.inputs.iter().map(|i| i.outpoint));
            }
        }
    }
    all
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn traffic_conserves_value_and_never_spends_twice(
        steps in prop::collection::vec((any::<u8>(), any::<u8>(), any::<bool>(), any::<bool>()), 1..40)
    ) {
        let (chain, replayed) = run_traffic(&steps);

        chain.check_conservation().expect("supply drifted");

        let spends = included_spends(&chain);
        let distinct: BTreeSet<Outpoint> = spends.iter().copied().collect();
        prop_assert_eq!(spends.len(), distinct.len(), "an outpoint was included twice");

        // Every replay attempt that got past submission was evicted, not
        // included a second time.
        let mut spend_counts: BTreeMap<Outpoint, usize> = BTreeMap::new();
        for outpoint in &spends {
            *spend_counts.entry(*outpoint).or_insert(0) += 1;
        }
        for outpoint in &replayed {
            prop_assert!(spend_counts.get(outpoint).copied().unwrap_or(0) <= 1);
        }
    }

    #[test]
    fn replaying_the_block_list_reproduces_the_state(
        steps in prop::collection::vec((any::<u8>(), any::<u8>(), any::<bool>(), any::<bool>()), 1..30)
    ) {
        let (chain, _) = run_traffic(&steps);
        let replayed = Chain::replay(chain.config().clone(), chain.blocks())
            .expect("honest blocks failed replay");
        prop_assert_eq!(replayed.state().digest(), chain.state().digest());
        prop_assert_eq!(replayed.height(), chain.height());
    }

    #[test]
    fn amounts_survive_their_decimal_form(units in any::<u64>()) {
        let amount = Amount::from_base_units(units);
        let text = amount.to_string();
        prop_assert_eq!(Amount::parse_decimal(&text).unwrap(), amount);
    }

    #[test]
    fn digests_survive_their_hex_form(bytes in any::<[u8; 32]>()) {
        let digest = Digest::from_bytes(bytes);
        prop_assert_eq!(Digest::parse_hex(&digest.to_hex()).unwrap(), digest);
    }
}
