//! Protocol payloads carried by the network.

use serde::Serialize;

use crate::broadcast::SignatureChain;
use crate::crypto::{put_str, Encode};
use crate::internal::{FinalityVote, InternalMsg, Witness};
use crate::ledger::Transaction;
use crate::party::ValidatorSet;
use crate::recovery::GenesisVote;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Payload {
    /// A transaction relayed between parties.
    Tx(Transaction),
    /// A validator's signature on its internally finalized ledger.
    Vote(FinalityVote),
    /// A certificate: quorum of finality votes.
    Witness(Witness),
    /// Environment announcement that the population healed. Only the
    /// environment may originate this.
    Recover { valset: ValidatorSet },
    /// Internal-protocol message.
    Internal(InternalMsg),
    /// A bookmark broadcast signature chain.
    Bookmark(SignatureChain),
    /// A vote on the post-recovery instance.
    Genesis(GenesisVote),
}

impl Payload {
    pub fn kind_str(&self) -> &'static str {
        match self {
            Payload::Tx(_) => "tx",
            Payload::Vote(_) => "vote",
            Payload::Witness(_) => "witness",
            Payload::Recover { .. } => "recover",
            Payload::Internal(InternalMsg::Proposal(_)) => "proposal",
            Payload::Internal(InternalMsg::BlockVote(_)) => "block_vote",
            Payload::Bookmark(_) => "bookmark",
            Payload::Genesis(_) => "genesis_vote",
        }
    }

    /// Every embedded signature verifies against the content it claims to
    /// sign. This is the injection gate: signature values only exist through
    /// signing, so the only forgery to catch is an observed signature
    /// replayed onto different content.
    pub fn sigs_verify(&self) -> bool {
        match self {
            Payload::Tx(_) | Payload::Recover { .. } => true,
            Payload::Vote(v) => v.verify(),
            Payload::Witness(w) => w.votes.iter().all(|v| v.verify()),
            Payload::Internal(InternalMsg::Proposal(p)) => p.verify(),
            Payload::Internal(InternalMsg::BlockVote(v)) => v.verify(),
            Payload::Bookmark(c) => c.sigs_verify(),
            Payload::Genesis(g) => g.verify(),
        }
    }
}

impl Encode for Payload {
    fn encode(&self, out: &mut Vec<u8>) {
        put_str(out, self.kind_str());
        match self {
            Payload::Tx(tx) => {
                put_str(out, &tx.id);
                crate::crypto::put_bytes(out, &tx.payload);
                crate::crypto::put_u64(out, tx.submit_round);
            }
            Payload::Vote(v) => v.encode(out),
            Payload::Witness(w) => w.encode(out),
            Payload::Recover { valset } => valset.encode(out),
            Payload::Internal(m) => m.encode(out),
            Payload::Bookmark(c) => c.encode(out),
            Payload::Genesis(g) => g.encode(out),
        }
    }
}
