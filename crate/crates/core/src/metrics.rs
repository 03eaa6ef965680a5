//! Run metrics: extracted value classified by the Monarch / Mafia / Moloch
//! taxonomy, per-user welfare loss against the adversary-free counterfactual,
//! builder market concentration (HHI), censorship statistics, and the
//! accounting identities every run must close.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::types::{format_signed_micros, AgentId, TxId};

/// Extracted-value taxonomy: ordering power, information asymmetry, or
/// value destroyed by coordination failure.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Debug, Serialize, Deserialize)]
pub enum MevClass {
    Monarch,
    Mafia,
    Moloch,
}

impl MevClass {
    pub fn label(self) -> &'static str {
        match self {
            MevClass::Monarch => "monarch",
            MevClass::Mafia => "mafia",
            MevClass::Moloch => "moloch",
        }
    }
}

/// Provenance of one extraction or waste event, as recorded in the log.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Debug)]
pub enum MevEventKind {
    /// A block producer sandwiching its own private order flow.
    BuilderSelfSandwich,
    /// A coalition splitting a sandwich across consecutive blocks.
    CoalitionInterblock,
    SearcherSandwich,
    SearcherFrontrunCopy,
    SearcherBackrun,
    SearcherCrossPoolArb,
    /// Gas paid by a transaction that reverted on chain.
    RevertedTxGas,
    /// Gas paid by ordering-lottery spam copies.
    SpamCopyGas,
    /// Gas paid by a losing gas-auction bot's stale bids.
    EscalationLossGas,
}

impl MevEventKind {
    pub fn label(self) -> &'static str {
        match self {
            MevEventKind::BuilderSelfSandwich => "builder_self_sandwich",
            MevEventKind::CoalitionInterblock => "coalition_interblock",
            MevEventKind::SearcherSandwich => "searcher_sandwich",
            MevEventKind::SearcherFrontrunCopy => "searcher_frontrun_copy",
            MevEventKind::SearcherBackrun => "searcher_backrun",
            MevEventKind::SearcherCrossPoolArb => "searcher_cross_pool_arb",
            MevEventKind::RevertedTxGas => "reverted_tx_gas",
            MevEventKind::SpamCopyGas => "spam_copy_gas",
            MevEventKind::EscalationLossGas => "escalation_loss_gas",
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricsError {
    #[error("unclassifiable extraction event {0:?}")]
    UnclassifiableEvent(String),
    #[error("shares must be non-negative and sum to 1 (got sum {0})")]
    BadShares(f64),
}

/// Maps an event's provenance label to its class. Block-producer rents are
/// Monarch, searcher exploitation of observed victims is Mafia, and burned
/// gas is Moloch. Unknown labels are an error the caller must count.
pub fn classify_mev_event(kind_label: &str) -> Result<MevClass, MetricsError> {
    use MevEventKind::*;
    for kind in [
        BuilderSelfSandwich,
        CoalitionInterblock,
        SearcherSandwich,
        SearcherFrontrunCopy,
        SearcherBackrun,
        SearcherCrossPoolArb,
        RevertedTxGas,
        SpamCopyGas,
        EscalationLossGas,
    ] {
        if kind.label() == kind_label {
            return Ok(kind.class());
        }
    }
    Err(MetricsError::UnclassifiableEvent(kind_label.to_string()))
}

impl MevEventKind {
    pub fn class(self) -> MevClass {
        match self {
            MevEventKind::BuilderSelfSandwich | MevEventKind::CoalitionInterblock => MevClass::Monarch,
            MevEventKind::SearcherSandwich
            | MevEventKind::SearcherFrontrunCopy
            | MevEventKind::SearcherBackrun
            | MevEventKind::SearcherCrossPoolArb => MevClass::Mafia,
            MevEventKind::RevertedTxGas
            | MevEventKind::SpamCopyGas
            | MevEventKind::EscalationLossGas => MevClass::Moloch,
        }
    }
}

/// Herfindahl–Hirschman index Σ share². Shares must be non-negative and sum
/// to one within 1e-9.
pub fn compute_hhi(shares: &[f64]) -> Result<f64, MetricsError> {
    let sum: f64 = shares.iter().sum();
    if shares.iter().any(|s| *s < 0.0) || (sum - 1.0).abs() > 1e-9 {
        return Err(MetricsError::BadShares(sum));
    }
    Ok(shares.iter().map(|s| s * s).sum())
}

/// One sanctioned transaction's lifecycle, for censorship statistics.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SanctionedSubmission {
    pub tx: TxId,
    pub submitted_round: u32,
    pub included_round: Option<u32>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CensorshipStats {
    /// Fraction of blocks containing zero sanctioned transactions.
    pub compliant_fraction: f64,
    /// Sanctioned transactions submitted but never on chain.
    pub never_included: u64,
    /// Mean rounds from submission to inclusion over included sanctioned
    /// transactions; absent when none were ever included.
    pub mean_inclusion_delay: Option<f64>,
}

pub fn censorship_stats(
    block_has_sanctioned: &[bool],
    submissions: &[SanctionedSubmission],
) -> CensorshipStats {
    let total = block_has_sanctioned.len();
    let compliant = block_has_sanctioned.iter().filter(|b| !**b).count();
    let compliant_fraction =
        if total == 0 { 1.0 } else { compliant as f64 / total as f64 };
    let never_included = submissions.iter().filter(|s| s.included_round.is_none()).count() as u64;
    let delays: Vec<f64> = submissions
        .iter()
        .filter_map(|s| s.included_round.map(|r| (r - s.submitted_round) as f64))
        .collect();
    let mean_inclusion_delay = if delays.is_empty() {
        None
    } else {
        Some(delays.iter().sum::<f64>() / delays.len() as f64)
    };
    CensorshipStats { compliant_fraction, never_included, mean_inclusion_delay }
}

/// Per-round metrics row, the unit of the CSV output. Extraction columns are
/// this round's flows in signed micros; `welfare_loss_cum` and
/// `compliant_fraction` are running values.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundRow {
    pub round: u32,
    pub hhi: f64,
    pub mev_monarch: i128,
    pub mev_mafia: i128,
    pub mev_moloch: i128,
    pub welfare_loss_cum: i128,
    pub compliant_fraction: f64,
    pub gas_waste: u64,
}

/// Net position change of each agent group and the pools, both assets summed
/// at par, in micros. Gains flow between these five buckets and nowhere
/// else, so the five sum to zero exactly.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValueFlows {
    pub users_net: i128,
    pub searchers_net: i128,
    pub builders_net: i128,
    pub proposer_net: i128,
    pub regulator_net: i128,
    pub pools_net: i128,
}

impl ValueFlows {
    pub fn imbalance(&self) -> i128 {
        self.users_net
            + self.searchers_net
            + self.builders_net
            + self.proposer_net
            + self.regulator_net
            + self.pools_net
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub rows: Vec<RoundRow>,
    pub mev_monarch_total: i128,
    pub mev_mafia_total: i128,
    pub mev_moloch_total: i128,
    /// Signed loss per user in micros (counterfactual-out minus actual-out,
    /// gas-only for reverted victims).
    pub per_user_welfare_loss: BTreeMap<AgentId, i128>,
    pub welfare_loss_total: i128,
    pub blocks_won: BTreeMap<AgentId, u64>,
    /// Raw final share of blocks won per builder.
    pub final_shares: BTreeMap<AgentId, f64>,
    pub hhi_series: Vec<f64>,
    pub censorship: Option<CensorshipStats>,
    pub colluding_rounds: u64,
    pub rounds: u32,
    pub gas_waste_total: u64,
    pub rebates_total: u64,
    pub penalties_total: u64,
    pub unclassified_events: u64,
    pub value_flows: ValueFlows,
    /// Final-minus-initial total supply per asset; zero when nothing leaks.
    pub supply_delta_x: i128,
    pub supply_delta_y: i128,
}

impl MetricsReport {
    pub fn colluding_fraction(&self) -> f64 {
        if self.rounds == 0 {
            0.0
        } else {
            self.colluding_rounds as f64 / self.rounds as f64
        }
    }

    /// Class totals must equal extraction plus waste by construction.
    pub fn classes_sum_to_extraction_plus_waste(&self) -> bool {
        let extracted = self.mev_monarch_total + self.mev_mafia_total;
        let waste = self.mev_moloch_total;
        self.mev_monarch_total + self.mev_mafia_total + self.mev_moloch_total == extracted + waste
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "round,hhi,mev_monarch,mev_mafia,mev_moloch,welfare_loss_cum,compliant_fraction,gas_waste\n",
        );
        for row in &self.rows {
            out.push_str(&format!(
                "{},{:.6},{},{},{},{},{:.6},{}\n",
                row.round,
                row.hhi,
                format_signed_micros(row.mev_monarch),
                format_signed_micros(row.mev_mafia),
                format_signed_micros(row.mev_moloch),
                format_signed_micros(row.welfare_loss_cum),
                row.compliant_fraction,
                crate::types::TokenAmount::from_micros(row.gas_waste),
            ));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hhi_examples() {
        assert_eq!(compute_hhi(&[1.0]).unwrap(), 1.0);
        assert_eq!(compute_hhi(&[0.5, 0.5]).unwrap(), 0.5);
        let hhi = compute_hhi(&[0.6, 0.3, 0.1]).unwrap();
        assert!((hhi - 0.46).abs() < 1e-12, "hhi {}", hhi);
    }

    #[test]
    fn hhi_rejects_bad_shares() {
        assert!(matches!(compute_hhi(&[0.5, 0.6]), Err(MetricsError::BadShares(_))));
        assert!(matches!(compute_hhi(&[-0.1, 1.1]), Err(MetricsError::BadShares(_))));
    }

    #[test]
    fn classification_map() {
        assert_eq!(classify_mev_event("builder_self_sandwich").unwrap(), MevClass::Monarch);
        assert_eq!(classify_mev_event("coalition_interblock").unwrap(), MevClass::Monarch);
        assert_eq!(classify_mev_event("searcher_sandwich").unwrap(), MevClass::Mafia);
        assert_eq!(classify_mev_event("searcher_frontrun_copy").unwrap(), MevClass::Mafia);
        assert_eq!(classify_mev_event("reverted_tx_gas").unwrap(), MevClass::Moloch);
        assert_eq!(classify_mev_event("spam_copy_gas").unwrap(), MevClass::Moloch);
        assert_eq!(classify_mev_event("escalation_loss_gas").unwrap(), MevClass::Moloch);
        assert!(matches!(
            classify_mev_event("liquidation"),
            Err(MetricsError::UnclassifiableEvent(_))
        ));
    }

    #[test]
    fn censorship_stats_arithmetic() {
        // 10 blocks, 4 carrying sanctioned txs.
        let flags: Vec<bool> =
            (0..10).map(|i| i % 3 == 0 && i > 0).chain(std::iter::once(true)).take(10).collect();
        let carrying = flags.iter().filter(|f| **f).count();
        let stats = censorship_stats(&flags, &[]);
        assert!((stats.compliant_fraction - (10 - carrying) as f64 / 10.0).abs() < 1e-12);

        let empty = censorship_stats(&[false; 5], &[]);
        assert_eq!(empty.compliant_fraction, 1.0);
        assert_eq!(empty.never_included, 0);
        assert_eq!(empty.mean_inclusion_delay, None);
    }

    #[test]
    fn censorship_delay_and_never_included() {
        let subs = [
            SanctionedSubmission { tx: TxId(1), submitted_round: 0, included_round: Some(2) },
            SanctionedSubmission { tx: TxId(2), submitted_round: 1, included_round: Some(5) },
            SanctionedSubmission { tx: TxId(3), submitted_round: 2, included_round: None },
        ];
        let stats = censorship_stats(&[true, false], &subs);
        assert_eq!(stats.never_included, 1);
        assert_eq!(stats.mean_inclusion_delay, Some(3.0), "(2 + 4) / 2");
        assert_eq!(stats.compliant_fraction, 0.5);
    }

    #[test]
    fn value_flow_imbalance_sums_all_buckets() {
        let flows = ValueFlows {
            users_net: -100,
            searchers_net: 40,
            builders_net: 30,
            proposer_net: 20,
            regulator_net: 5,
            pools_net: 5,
        };
        assert_eq!(flows.imbalance(), 0);
    }

    #[test]
    fn csv_shape() {
        let report = MetricsReport {
            rows: vec![RoundRow {
                round: 0,
                hhi: 1.0 / 3.0,
                mev_monarch: 0,
                mev_mafia: 18_032_785,
                mev_moloch: 0,
                welfare_loss_cum: 15_151_515,
                compliant_fraction: 1.0,
                gas_waste: 0,
            }],
            rounds: 1,
            ..Default::default()
        };
        let csv = report.to_csv();
        let mut lines = csv.lines();
        assert_eq!(
            lines.next().unwrap(),
            "round,hhi,mev_monarch,mev_mafia,mev_moloch,welfare_loss_cum,compliant_fraction,gas_waste"
        );
        assert_eq!(
            lines.next().unwrap(),
            "0,0.333333,0.000000,18.032785,0.000000,15.151515,1.000000,0.000000"
        );
    }
}
