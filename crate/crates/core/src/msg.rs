//! Wire messages exchanged by nodes.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::block::{Block, Epoch, Round};
use crate::crypto::{Digest, Encoder, Signature};
use crate::rbcast::ab::{AbProposal, SignedAbInput};
use crate::toy::MisbehaviorProof;
use crate::NodeId;

/// One WRB/OBBC attempt: the `attempt`-th try at filling `round` in `epoch`,
/// led by `proposer`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Inst {
    pub epoch: Epoch,
    pub round: Round,
    pub attempt: u32,
    pub proposer: NodeId,
}

impl Inst {
    pub fn key(&self) -> String {
        format!(
            "{}/{}/{}/{}",
            self.epoch, self.round, self.attempt, self.proposer
        )
    }

    pub fn encode_into(&self, e: &mut Encoder) {
        e.u64(self.epoch)
            .u64(self.round)
            .u64(self.attempt as u64)
            .u64(self.proposer as u64);
    }
}

impl fmt::Display for Inst {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.key())
    }
}

/// Identifies a full binary consensus instance.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum BbcKey {
    /// Fallback of an OBBC attempt.
    Obbc(Inst),
    /// Accept/skip decision for an atomic-broadcast slot attempt.
    Ab { slot: u64, attempt: u32 },
}

impl BbcKey {
    pub fn key(&self) -> String {
        match self {
            BbcKey::Obbc(i) => format!("obbc/{}", i.key()),
            BbcKey::Ab { slot, attempt } => format!("ab/{slot}/{attempt}"),
        }
    }

    pub fn encode_into(&self, e: &mut Encoder) {
        match self {
            BbcKey::Obbc(i) => {
                e.str("obbc");
                i.encode_into(e);
            }
            BbcKey::Ab { slot, attempt } => {
                e.str("ab").u64(*slot).u64(*attempt as u64);
            }
        }
    }

    /// Rotation offset for the coordinator schedule.
    pub fn coordinator_offset(&self) -> u64 {
        let mut e = Encoder::new();
        self.encode_into(&mut e);
        e.hash().prefix_u64()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RbTag {
    Proof(Epoch),
    AbInput(u64),
    AbProp { slot: u64, attempt: u32 },
}

impl fmt::Display for RbTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RbTag::Proof(e) => write!(f, "proof:{e}"),
            RbTag::AbInput(s) => write!(f, "abin:{s}"),
            RbTag::AbProp { slot, attempt } => write!(f, "abprop:{slot}:{attempt}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum WrbMsg {
    /// Push phase: the proposer's explicit broadcast (header-only in header mode).
    Push(Block),
    Req(Inst),
    Resp(Inst, Block),
    /// Eager body dissemination in header-separation mode.
    Body(Block),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ObbcMsg {
    Vote {
        inst: Inst,
        bit: bool,
        pgd: Option<Block>,
    },
    EvReq(Inst),
    EvResp {
        inst: Inst,
        evidence: Option<Block>,
    },
}

/// Signed lock certificate: quorum of first-phase votes for `bit` in `round`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LockCert {
    pub bit: bool,
    pub round: u32,
    pub sigs: Vec<(NodeId, Signature)>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SignedStatus {
    pub from: NodeId,
    pub round: u32,
    pub est: bool,
    pub lock: Option<LockCert>,
    pub sig: Signature,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum BbcBody {
    Status(SignedStatus),
    Coord {
        round: u32,
        bit: bool,
        statuses: Vec<SignedStatus>,
    },
    Vote1 {
        round: u32,
        bit: bool,
        sig: Signature,
    },
    Vote2 {
        round: u32,
        bit: bool,
        sig: Signature,
    },
    Decide {
        bit: bool,
        round: u32,
        sigs: Vec<(NodeId, Signature)>,
    },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BbcMsg {
    pub key: BbcKey,
    pub body: BbcBody,
}

#[derive(Clone, Debug, PartialEq, Eq)]
#[allow(clippy::large_enum_variant)] // proofs are rare; inputs are the hot path
pub enum RbPayload {
    Proof(MisbehaviorProof),
    AbInput(SignedAbInput),
    AbProp(AbProposal),
}

impl RbPayload {
    pub fn digest(&self) -> Digest {
        let mut e = Encoder::new();
        match self {
            RbPayload::Proof(p) => {
                e.str("proof").bytes(&p.encode());
            }
            RbPayload::AbInput(i) => {
                e.str("abin").bytes(&i.encode());
            }
            RbPayload::AbProp(p) => {
                e.str("abprop").bytes(&p.encode());
            }
        }
        e.hash()
    }

    fn wire_size(&self) -> usize {
        match self {
            RbPayload::Proof(p) => p.wire_size(),
            RbPayload::AbInput(i) => i.wire_size(),
            RbPayload::AbProp(p) => p.input.wire_size() + 16,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum RbPhase {
    Init,
    Echo,
    Ready,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RbMsg {
    pub origin: NodeId,
    pub tag: RbTag,
    pub phase: RbPhase,
    pub payload: RbPayload,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SyncMsg {
    /// Ask for chain blocks in `[from, to]`.
    Req {
        from: Round,
        to: Round,
    },
    Resp {
        blocks: Vec<Block>,
    },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Message {
    Wrb(WrbMsg),
    Obbc(ObbcMsg),
    Bbc(BbcMsg),
    Rb(RbMsg),
    Sync(SyncMsg),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[allow(non_camel_case_types, clippy::upper_case_acronyms)]
pub enum MsgKind {
    WRB_MSG,
    WRB_REQ,
    WRB_RESP,
    BLOCK_BODY,
    OBBC_VOTE,
    OBBC_EV_REQ,
    OBBC_EV_RESP,
    BBC_STATUS,
    BBC_COORD,
    BBC_VOTE1,
    BBC_VOTE2,
    BBC_DECIDE,
    RB_INIT,
    RB_ECHO,
    RB_READY,
    AB_PROP,
    SYNC_REQ,
    SYNC_RESP,
}

impl MsgKind {
    pub const ALL: [MsgKind; 18] = [
        MsgKind::WRB_MSG,
        MsgKind::WRB_REQ,
        MsgKind::WRB_RESP,
        MsgKind::BLOCK_BODY,
        MsgKind::OBBC_VOTE,
        MsgKind::OBBC_EV_REQ,
        MsgKind::OBBC_EV_RESP,
        MsgKind::BBC_STATUS,
        MsgKind::BBC_COORD,
        MsgKind::BBC_VOTE1,
        MsgKind::BBC_VOTE2,
        MsgKind::BBC_DECIDE,
        MsgKind::RB_INIT,
        MsgKind::RB_ECHO,
        MsgKind::RB_READY,
        MsgKind::AB_PROP,
        MsgKind::SYNC_REQ,
        MsgKind::SYNC_RESP,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            MsgKind::WRB_MSG => "WRB_MSG",
            MsgKind::WRB_REQ => "WRB_REQ",
            MsgKind::WRB_RESP => "WRB_RESP",
            MsgKind::BLOCK_BODY => "BLOCK_BODY",
            MsgKind::OBBC_VOTE => "OBBC_VOTE",
            MsgKind::OBBC_EV_REQ => "OBBC_EV_REQ",
            MsgKind::OBBC_EV_RESP => "OBBC_EV_RESP",
            MsgKind::BBC_STATUS => "BBC_STATUS",
            MsgKind::BBC_COORD => "BBC_COORD",
            MsgKind::BBC_VOTE1 => "BBC_VOTE1",
            MsgKind::BBC_VOTE2 => "BBC_VOTE2",
            MsgKind::BBC_DECIDE => "BBC_DECIDE",
            MsgKind::RB_INIT => "RB_INIT",
            MsgKind::RB_ECHO => "RB_ECHO",
            MsgKind::RB_READY => "RB_READY",
            MsgKind::AB_PROP => "AB_PROP",
            MsgKind::SYNC_REQ => "SYNC_REQ",
            MsgKind::SYNC_RESP => "SYNC_RESP",
        }
    }

    pub fn parse(s: &str) -> Option<MsgKind> {
        MsgKind::ALL.iter().copied().find(|k| k.name() == s)
    }

    pub fn is_bbc(&self) -> bool {
        matches!(
            self,
            MsgKind::BBC_STATUS
                | MsgKind::BBC_COORD
                | MsgKind::BBC_VOTE1
                | MsgKind::BBC_VOTE2
                | MsgKind::BBC_DECIDE
        )
    }

    pub fn is_recovery(&self) -> bool {
        matches!(
            self,
            MsgKind::RB_INIT | MsgKind::RB_ECHO | MsgKind::RB_READY | MsgKind::AB_PROP
        ) || matches!(self, MsgKind::SYNC_REQ | MsgKind::SYNC_RESP)
    }

    /// Anything beyond push, body and vote: pulls, evidence, BBC, recovery.
    pub fn is_slow_path(&self) -> bool {
        !matches!(
            self,
            MsgKind::WRB_MSG | MsgKind::BLOCK_BODY | MsgKind::OBBC_VOTE
        )
    }
}

impl Message {
    pub fn kind(&self) -> MsgKind {
        match self {
            Message::Wrb(WrbMsg::Push(_)) => MsgKind::WRB_MSG,
            Message::Wrb(WrbMsg::Req(_)) => MsgKind::WRB_REQ,
            Message::Wrb(WrbMsg::Resp(..)) => MsgKind::WRB_RESP,
            Message::Wrb(WrbMsg::Body(_)) => MsgKind::BLOCK_BODY,
            Message::Obbc(ObbcMsg::Vote { .. }) => MsgKind::OBBC_VOTE,
            Message::Obbc(ObbcMsg::EvReq(_)) => MsgKind::OBBC_EV_REQ,
            Message::Obbc(ObbcMsg::EvResp { .. }) => MsgKind::OBBC_EV_RESP,
            Message::Bbc(m) => match m.body {
                BbcBody::Status(_) => MsgKind::BBC_STATUS,
                BbcBody::Coord { .. } => MsgKind::BBC_COORD,
                BbcBody::Vote1 { .. } => MsgKind::BBC_VOTE1,
                BbcBody::Vote2 { .. } => MsgKind::BBC_VOTE2,
                BbcBody::Decide { .. } => MsgKind::BBC_DECIDE,
            },
            Message::Rb(m) => match (m.phase, &m.payload) {
                (RbPhase::Init, RbPayload::AbProp(_)) => MsgKind::AB_PROP,
                (RbPhase::Init, _) => MsgKind::RB_INIT,
                (RbPhase::Echo, _) => MsgKind::RB_ECHO,
                (RbPhase::Ready, _) => MsgKind::RB_READY,
            },
            Message::Sync(SyncMsg::Req { .. }) => MsgKind::SYNC_REQ,
            Message::Sync(SyncMsg::Resp { .. }) => MsgKind::SYNC_RESP,
        }
    }

    /// The block body this message carries, if any.
    pub fn carried_block(&self) -> Option<&Block> {
        match self {
            Message::Wrb(WrbMsg::Push(b))
            | Message::Wrb(WrbMsg::Resp(_, b))
            | Message::Wrb(WrbMsg::Body(b)) => Some(b),
            Message::Obbc(ObbcMsg::Vote { pgd: Some(b), .. }) => Some(b),
            _ => None,
        }
    }

    /// True when the message carries transaction data (not just a header).
    pub fn is_payload_bearing(&self) -> bool {
        self.carried_block().is_some_and(|b| b.is_full())
    }

    /// Round/epoch the message concerns, for trace annotation.
    pub fn round_epoch(&self) -> (Option<Round>, Option<Epoch>) {
        let of_inst = |i: &Inst| (Some(i.round), Some(i.epoch));
        match self {
            Message::Wrb(WrbMsg::Push(b)) | Message::Wrb(WrbMsg::Body(b)) => {
                (Some(b.round()), Some(b.epoch()))
            }
            Message::Wrb(WrbMsg::Req(i)) | Message::Wrb(WrbMsg::Resp(i, _)) => of_inst(i),
            Message::Obbc(ObbcMsg::Vote { inst, .. })
            | Message::Obbc(ObbcMsg::EvReq(inst))
            | Message::Obbc(ObbcMsg::EvResp { inst, .. }) => of_inst(inst),
            Message::Bbc(BbcMsg {
                key: BbcKey::Obbc(i),
                ..
            }) => of_inst(i),
            _ => (None, None),
        }
    }

    /// Instance key string for trace annotation.
    pub fn instance_key(&self) -> String {
        match self {
            Message::Wrb(WrbMsg::Req(i)) | Message::Wrb(WrbMsg::Resp(i, _)) => i.key(),
            Message::Obbc(ObbcMsg::Vote { inst, .. })
            | Message::Obbc(ObbcMsg::EvReq(inst))
            | Message::Obbc(ObbcMsg::EvResp { inst, .. }) => inst.key(),
            Message::Bbc(m) => m.key.key(),
            Message::Rb(m) => format!("rb/{}/{}", m.origin, m.tag),
            _ => String::new(),
        }
    }

    pub fn wire_size(&self) -> usize {
        const INST: usize = 32;
        const SIG: usize = 32;
        match self {
            Message::Wrb(WrbMsg::Push(b)) | Message::Wrb(WrbMsg::Body(b)) => b.wire_size(),
            Message::Wrb(WrbMsg::Req(_)) => INST,
            Message::Wrb(WrbMsg::Resp(_, b)) => INST + b.wire_size(),
            Message::Obbc(ObbcMsg::Vote { pgd, .. }) => {
                INST + 1 + pgd.as_ref().map_or(0, |b| b.wire_size())
            }
            Message::Obbc(ObbcMsg::EvReq(_)) => INST,
            Message::Obbc(ObbcMsg::EvResp { evidence, .. }) => {
                INST + 1 + evidence.as_ref().map_or(0, |b| b.wire_size())
            }
            Message::Bbc(m) => {
                INST + match &m.body {
                    BbcBody::Status(s) => status_size(s),
                    BbcBody::Coord { statuses, .. } => {
                        8 + statuses.iter().map(status_size).sum::<usize>()
                    }
                    BbcBody::Vote1 { .. } | BbcBody::Vote2 { .. } => 8 + SIG,
                    BbcBody::Decide { sigs, .. } => 8 + sigs.len() * (8 + SIG),
                }
            }
            Message::Rb(m) => 24 + m.payload.wire_size(),
            Message::Sync(SyncMsg::Req { .. }) => 16,
            Message::Sync(SyncMsg::Resp { blocks }) => blocks.iter().map(|b| b.wire_size()).sum(),
        }
    }
}

fn status_size(s: &SignedStatus) -> usize {
    16 + 32 + s.lock.as_ref().map_or(0, |l| 8 + l.sigs.len() * 40)
}
