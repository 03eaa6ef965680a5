//! Append-only run log. One record per line, tab-separated, first three
//! columns fixed (`round`, `tick`, `record`), the rest record-specific.
//! The log is self-contained: replaying it through the chain module
//! reproduces the final ledger state bit for bit.

use std::fmt::Write as _;

use crate::chain::{BundleSpan, DropReason, ReceiptStatus, Transaction, TransferIntent, TxKind};
use crate::types::{
    format_signed_micros, AgentId, Asset, PoolId, SwapDirection, SwapIntent, TokenAmount, TxId,
};

pub const LOG_VERSION: &str = "mevsim-events v1";

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LogError {
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
}

/// How a transaction entered the system.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Channel {
    /// Broadcast to the public mempool from a node.
    Public(crate::types::NodeId),
    /// Sent through a builder's private channel.
    Private(AgentId),
    /// Crafted by a block producer inside its own block.
    Internal,
}

#[derive(Clone, Debug, PartialEq)]
pub enum EventRecord {
    Meta { key: String, value: String },
    AgentInfo { agent: AgentId, name: String },
    PoolInit { pool: PoolId, reserve_x: TokenAmount, reserve_y: TokenAmount, fee_bps: u16 },
    BalanceInit { agent: AgentId, asset: Asset, amount: TokenAmount },
    TxSubmit { round: u32, tick: u64, tx: Transaction, channel: Channel },
    BundleSubmit { round: u32, tick: u64, builder: AgentId, submitter: AgentId, txs: Vec<TxId> },
    EscalatorAward {
        round: u32,
        order: TxId,
        winner: Option<AgentId>,
        rebate: TokenAmount,
        bids: u32,
    },
    CollusionDecision { round: u32, coalition: u32, collude: bool, threshold: Option<TokenAmount> },
    BidSubmitted { round: u32, builder: AgentId, amount: TokenAmount },
    RelayOffer { round: u32, relay: AgentId, builder: AgentId, amount: TokenAmount },
    BlockProposed {
        round: u32,
        height: u64,
        builder: AgentId,
        proposer: AgentId,
        bid: TokenAmount,
        gas_limit: u64,
        /// (tx id, effective gas used) in payload order.
        payload: Vec<(TxId, u32)>,
        spans: Vec<BundleSpan>,
    },
    TxReceipt {
        round: u32,
        tx: TxId,
        status: ReceiptStatus,
        amount_out: TokenAmount,
        gas_paid: TokenAmount,
    },
    Extraction {
        round: u32,
        class: crate::metrics::MevClass,
        kind: String,
        actor: AgentId,
        victim: Option<TxId>,
        amount: i128,
        estimate: TokenAmount,
    },
    GasWaste { round: u32, kind: String, actor: AgentId, tx: TxId, amount: TokenAmount },
    Penalty { round: u32, builder: AgentId, amount: TokenAmount },
    Rebate { round: u32, user: AgentId, extractor: AgentId, amount: TokenAmount },
    Report { round: u32, user: AgentId, builder: AgentId, tx: TxId },
    StateHash { hash: u64 },
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct EventLog {
    pub records: Vec<EventRecord>,
}

impl EventLog {
    pub fn push(&mut self, record: EventRecord) {
        self.records.push(record);
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        writeln!(out, "# {LOG_VERSION}").unwrap();
        writeln!(out, "# columns: round\ttick\trecord\tfields...").unwrap();
        for record in &self.records {
            out.push_str(&record.to_line());
            out.push('\n');
        }
        out
    }

    pub fn from_tsv(text: &str) -> Result<EventLog, LogError> {
        let mut records = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim_end();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            records.push(EventRecord::parse_line(line, i + 1)?);
        }
        Ok(EventLog { records })
    }

    pub fn final_state_hash(&self) -> Option<u64> {
        self.records.iter().rev().find_map(|r| match r {
            EventRecord::StateHash { hash } => Some(*hash),
            _ => None,
        })
    }
}

fn opt<T: std::fmt::Display>(v: &Option<T>) -> String {
    match v {
        Some(x) => x.to_string(),
        None => "-".to_string(),
    }
}

fn kind_fields(tx: &Transaction) -> String {
    match &tx.kind {
        TxKind::Swap(s) => format!(
            "swap\t{}\t{}\t{}\t{}",
            s.pool, s.direction, s.amount_in, s.min_out
        ),
        TxKind::Transfer(t) => format!("transfer\t{}\t{}\t{}\t-", t.to, t.asset, t.amount),
        TxKind::Noop => "noop\t-\t-\t-\t-".to_string(),
    }
}

fn status_str(status: &ReceiptStatus) -> &'static str {
    match status {
        ReceiptStatus::Success => "success",
        ReceiptStatus::Reverted => "reverted",
        ReceiptStatus::Dropped(DropReason::UnknownPool) => "dropped_unknown_pool",
        ReceiptStatus::Dropped(DropReason::InsufficientBalance) => "dropped_insufficient_balance",
    }
}

fn parse_status(s: &str) -> Option<ReceiptStatus> {
    Some(match s {
        "success" => ReceiptStatus::Success,
        "reverted" => ReceiptStatus::Reverted,
        "dropped_unknown_pool" => ReceiptStatus::Dropped(DropReason::UnknownPool),
        "dropped_insufficient_balance" => ReceiptStatus::Dropped(DropReason::InsufficientBalance),
        _ => return None,
    })
}

impl EventRecord {
    pub fn to_line(&self) -> String {
        match self {
            EventRecord::Meta { key, value } => format!("0\t0\tmeta\t{key}\t{value}"),
            EventRecord::AgentInfo { agent, name } => format!("0\t0\tagent\t{agent}\t{name}"),
            EventRecord::PoolInit { pool, reserve_x, reserve_y, fee_bps } => {
                format!("0\t0\tpool_init\t{pool}\t{reserve_x}\t{reserve_y}\t{fee_bps}")
            }
            EventRecord::BalanceInit { agent, asset, amount } => {
                format!("0\t0\tbalance_init\t{agent}\t{asset}\t{amount}")
            }
            EventRecord::TxSubmit { round, tick, tx, channel } => {
                let chan = match channel {
                    Channel::Public(node) => format!("public:{node}"),
                    Channel::Private(builder) => format!("private:{builder}"),
                    Channel::Internal => "internal".to_string(),
                };
                format!(
                    "{round}\t{tick}\ttx_submit\t{}\t{}\t{}\t{}\t{}\t{}\t{chan}",
                    tx.id,
                    tx.sender,
                    kind_fields(tx),
                    tx.gas_price,
                    tx.gas_used,
                    tx.origin_round,
                )
            }
            EventRecord::BundleSubmit { round, tick, builder, submitter, txs } => {
                let ids: Vec<String> = txs.iter().map(|t| t.to_string()).collect();
                format!(
                    "{round}\t{tick}\tbundle_submit\t{builder}\t{submitter}\t{}",
                    ids.join(",")
                )
            }
            EventRecord::EscalatorAward { round, order, winner, rebate, bids } => {
                format!("{round}\t0\tescalator\t{order}\t{}\t{rebate}\t{bids}", opt(winner))
            }
            EventRecord::CollusionDecision { round, coalition, collude, threshold } => {
                format!(
                    "{round}\t0\tcollusion\t{coalition}\t{}\t{}",
                    if *collude { "collude" } else { "honest" },
                    threshold.map(|t| t.to_string()).unwrap_or_else(|| "inf".to_string()),
                )
            }
            EventRecord::BidSubmitted { round, builder, amount } => {
                format!("{round}\t0\tbid\t{builder}\t{amount}")
            }
            EventRecord::RelayOffer { round, relay, builder, amount } => {
                format!("{round}\t0\trelay_offer\t{relay}\t{builder}\t{amount}")
            }
            EventRecord::BlockProposed {
                round,
                height,
                builder,
                proposer,
                bid,
                gas_limit,
                payload,
                spans,
            } => {
                let txs: Vec<String> =
                    payload.iter().map(|(id, gas)| format!("{id}:{gas}")).collect();
                let spans: Vec<String> =
                    spans.iter().map(|s| format!("{}:{}", s.start, s.len)).collect();
                format!(
                    "{round}\t0\tblock\t{height}\t{builder}\t{proposer}\t{bid}\t{gas_limit}\t{}\t{}",
                    if txs.is_empty() { "-".to_string() } else { txs.join(",") },
                    if spans.is_empty() { "-".to_string() } else { spans.join(",") },
                )
            }
            EventRecord::TxReceipt { round, tx, status, amount_out, gas_paid } => {
                format!(
                    "{round}\t0\treceipt\t{tx}\t{}\t{amount_out}\t{gas_paid}",
                    status_str(status)
                )
            }
            EventRecord::Extraction { round, class, kind, actor, victim, amount, estimate } => {
                format!(
                    "{round}\t0\textraction\t{}\t{kind}\t{actor}\t{}\t{}\t{estimate}",
                    class.label(),
                    opt(victim),
                    format_signed_micros(*amount),
                )
            }
            EventRecord::GasWaste { round, kind, actor, tx, amount } => {
                format!("{round}\t0\tgas_waste\t{kind}\t{actor}\t{tx}\t{amount}")
            }
            EventRecord::Penalty { round, builder, amount } => {
                format!("{round}\t0\tpenalty\t{builder}\t{amount}")
            }
            EventRecord::Rebate { round, user, extractor, amount } => {
                format!("{round}\t0\trebate\t{user}\t{extractor}\t{amount}")
            }
            EventRecord::Report { round, user, builder, tx } => {
                format!("{round}\t0\treport\t{user}\t{builder}\t{tx}")
            }
            EventRecord::StateHash { hash } => format!("0\t0\tstate_hash\t{hash:016x}"),
        }
    }

    pub fn parse_line(line: &str, line_no: usize) -> Result<EventRecord, LogError> {
        let err = |message: String| LogError::Malformed { line: line_no, message };
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() < 3 {
            return Err(err("expected at least 3 tab-separated fields".into()));
        }
        let round: u32 =
            fields[0].parse().map_err(|_| err(format!("bad round {:?}", fields[0])))?;
        let tick: u64 = fields[1].parse().map_err(|_| err(format!("bad tick {:?}", fields[1])))?;
        let rest = &fields[3..];
        let need = |n: usize| -> Result<(), LogError> {
            if rest.len() < n {
                Err(LogError::Malformed {
                    line: line_no,
                    message: format!("expected {} fields after record kind, got {}", n, rest.len()),
                })
            } else {
                Ok(())
            }
        };
        macro_rules! parse {
            ($idx:expr, $what:literal) => {
                rest[$idx]
                    .parse()
                    .map_err(|_| err(format!("bad {} {:?}", $what, rest[$idx])))?
            };
        }

        let record = match fields[2] {
            "meta" => {
                need(2)?;
                EventRecord::Meta { key: rest[0].to_string(), value: rest[1..].join("\t") }
            }
            "agent" => {
                need(2)?;
                EventRecord::AgentInfo { agent: parse!(0, "agent"), name: rest[1].to_string() }
            }
            "pool_init" => {
                need(4)?;
                EventRecord::PoolInit {
                    pool: parse!(0, "pool"),
                    reserve_x: parse!(1, "reserve_x"),
                    reserve_y: parse!(2, "reserve_y"),
                    fee_bps: parse!(3, "fee_bps"),
                }
            }
            "balance_init" => {
                need(3)?;
                EventRecord::BalanceInit {
                    agent: parse!(0, "agent"),
                    asset: parse!(1, "asset"),
                    amount: parse!(2, "amount"),
                }
            }
            "tx_submit" => {
                need(11)?;
                let id: TxId = parse!(0, "tx id");
                let sender: AgentId = parse!(1, "sender");
                let kind = match rest[2] {
                    "swap" => TxKind::Swap(SwapIntent {
                        pool: parse!(3, "pool"),
                        direction: rest[4]
                            .parse::<SwapDirection>()
                            .map_err(|e| err(e.to_string()))?,
                        amount_in: parse!(5, "amount_in"),
                        min_out: parse!(6, "min_out"),
                    }),
                    "transfer" => TxKind::Transfer(TransferIntent {
                        to: parse!(3, "to"),
                        asset: rest[4].parse::<Asset>().map_err(|e| err(e.to_string()))?,
                        amount: parse!(5, "amount"),
                    }),
                    "noop" => TxKind::Noop,
                    other => return Err(err(format!("unknown tx kind {other:?}"))),
                };
                let gas_price: TokenAmount = parse!(7, "gas_price");
                let gas_used: u32 = parse!(8, "gas_used");
                let origin_round: u32 = parse!(9, "origin_round");
                let channel = match rest[10].split_once(':') {
                    Some(("public", node)) => Channel::Public(
                        node.parse().map_err(|_| err(format!("bad node {node:?}")))?,
                    ),
                    Some(("private", builder)) => Channel::Private(
                        builder.parse().map_err(|_| err(format!("bad builder {builder:?}")))?,
                    ),
                    None if rest[10] == "internal" => Channel::Internal,
                    _ => return Err(err(format!("unknown channel {:?}", rest[10]))),
                };
                let mut tx = Transaction::new(id, sender, kind, gas_price, origin_round);
                tx.gas_used = gas_used;
                EventRecord::TxSubmit { round, tick, tx, channel }
            }
            "bundle_submit" => {
                need(3)?;
                let txs = rest[2]
                    .split(',')
                    .map(|s| s.parse::<TxId>())
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(|_| err(format!("bad tx list {:?}", rest[2])))?;
                EventRecord::BundleSubmit {
                    round,
                    tick,
                    builder: parse!(0, "builder"),
                    submitter: parse!(1, "submitter"),
                    txs,
                }
            }
            "escalator" => {
                need(4)?;
                let winner = if rest[1] == "-" { None } else { Some(parse!(1, "winner")) };
                EventRecord::EscalatorAward {
                    round,
                    order: parse!(0, "order"),
                    winner,
                    rebate: parse!(2, "rebate"),
                    bids: parse!(3, "bids"),
                }
            }
            "collusion" => {
                need(3)?;
                let threshold =
                    if rest[2] == "inf" { None } else { Some(parse!(2, "threshold")) };
                EventRecord::CollusionDecision {
                    round,
                    coalition: parse!(0, "coalition"),
                    collude: rest[1] == "collude",
                    threshold,
                }
            }
            "bid" => {
                need(2)?;
                EventRecord::BidSubmitted { round, builder: parse!(0, "builder"), amount: parse!(1, "amount") }
            }
            "relay_offer" => {
                need(3)?;
                EventRecord::RelayOffer {
                    round,
                    relay: parse!(0, "relay"),
                    builder: parse!(1, "builder"),
                    amount: parse!(2, "amount"),
                }
            }
            "block" => {
                need(7)?;
                let payload = if rest[5] == "-" {
                    Vec::new()
                } else {
                    rest[5]
                        .split(',')
                        .map(|entry| {
                            let (id, gas) = entry
                                .split_once(':')
                                .ok_or_else(|| err(format!("bad payload entry {entry:?}")))?;
                            Ok((
                                id.parse::<TxId>()
                                    .map_err(|_| err(format!("bad tx id {id:?}")))?,
                                gas.parse::<u32>()
                                    .map_err(|_| err(format!("bad gas {gas:?}")))?,
                            ))
                        })
                        .collect::<Result<Vec<_>, LogError>>()?
                };
                let spans = if rest[6] == "-" {
                    Vec::new()
                } else {
                    rest[6]
                        .split(',')
                        .map(|entry| {
                            let (start, len) = entry
                                .split_once(':')
                                .ok_or_else(|| err(format!("bad span {entry:?}")))?;
                            Ok(BundleSpan {
                                start: start
                                    .parse()
                                    .map_err(|_| err(format!("bad span start {start:?}")))?,
                                len: len
                                    .parse()
                                    .map_err(|_| err(format!("bad span len {len:?}")))?,
                            })
                        })
                        .collect::<Result<Vec<_>, LogError>>()?
                };
                EventRecord::BlockProposed {
                    round,
                    height: parse!(0, "height"),
                    builder: parse!(1, "builder"),
                    proposer: parse!(2, "proposer"),
                    bid: parse!(3, "bid"),
                    gas_limit: parse!(4, "gas_limit"),
                    payload,
                    spans,
                }
            }
            "receipt" => {
                need(4)?;
                EventRecord::TxReceipt {
                    round,
                    tx: parse!(0, "tx"),
                    status: parse_status(rest[1])
                        .ok_or_else(|| err(format!("unknown status {:?}", rest[1])))?,
                    amount_out: parse!(2, "amount_out"),
                    gas_paid: parse!(3, "gas_paid"),
                }
            }
            "extraction" => {
                need(6)?;
                let class = match rest[0] {
                    "monarch" => crate::metrics::MevClass::Monarch,
                    "mafia" => crate::metrics::MevClass::Mafia,
                    "moloch" => crate::metrics::MevClass::Moloch,
                    other => return Err(err(format!("unknown class {other:?}"))),
                };
                let victim = if rest[3] == "-" { None } else { Some(parse!(3, "victim")) };
                let amount_str = rest[4];
                let negative = amount_str.starts_with('-');
                let magnitude: TokenAmount = amount_str
                    .trim_start_matches('-')
                    .parse()
                    .map_err(|_| err(format!("bad amount {amount_str:?}")))?;
                let amount =
                    if negative { -(magnitude.micros() as i128) } else { magnitude.micros() as i128 };
                EventRecord::Extraction {
                    round,
                    class,
                    kind: rest[1].to_string(),
                    actor: parse!(2, "actor"),
                    victim,
                    amount,
                    estimate: parse!(5, "estimate"),
                }
            }
            "gas_waste" => {
                need(4)?;
                EventRecord::GasWaste {
                    round,
                    kind: rest[0].to_string(),
                    actor: parse!(1, "actor"),
                    tx: parse!(2, "tx"),
                    amount: parse!(3, "amount"),
                }
            }
            "penalty" => {
                need(2)?;
                EventRecord::Penalty { round, builder: parse!(0, "builder"), amount: parse!(1, "amount") }
            }
            "rebate" => {
                need(3)?;
                EventRecord::Rebate {
                    round,
                    user: parse!(0, "user"),
                    extractor: parse!(1, "extractor"),
                    amount: parse!(2, "amount"),
                }
            }
            "report" => {
                need(3)?;
                EventRecord::Report {
                    round,
                    user: parse!(0, "user"),
                    builder: parse!(1, "builder"),
                    tx: parse!(2, "tx"),
                }
            }
            "state_hash" => {
                need(1)?;
                EventRecord::StateHash {
                    hash: u64::from_str_radix(rest[0], 16)
                        .map_err(|_| err(format!("bad hash {:?}", rest[0])))?,
                }
            }
            other => return Err(err(format!("unknown record kind {other:?}"))),
        };
        Ok(record)
    }
}
