//! Trace records and their CSV form.

use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use thiserror::Error;

use crate::engine::SimTime;
use crate::name::NodeId;

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("bad trace row: {0}")]
    BadRow(String),
}

macro_rules! codes {
    ($($variant:ident => $text:literal),* $(,)?) => {
        /// Event codes appearing in the `event` column.
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
        pub enum Code { $($variant),* }

        impl Code {
            pub const ALL: &'static [Code] = &[$(Code::$variant),*];

            pub fn as_str(self) -> &'static str {
                match self { $(Code::$variant => $text),* }
            }
        }

        impl FromStr for Code {
            type Err = TraceError;
            fn from_str(s: &str) -> Result<Self, Self::Err> {
                match s {
                    $($text => Ok(Code::$variant),)*
                    other => Err(TraceError::BadRow(format!("unknown event code {other}"))),
                }
            }
        }
    };
}

codes! {
    // node role declaration, emitted once per node at t=0
    Node => "NODE",
    // wire
    InterestTx => "INTEREST_TX",
    DataTx => "DATA_TX",
    RxLost => "RX_LOST",
    // forwarding plane
    DupDrop => "DUP_DROP",
    StoreHit => "STORE_HIT",
    PitNew => "PIT_NEW",
    PitReject => "PIT_REJECT",
    PitSatisfy => "PIT_SATISFY",
    PitExpire => "PIT_EXPIRE",
    DataUnsolicited => "DATA_UNSOLICITED",
    HopLimit => "HOP_LIMIT",
    FwdCancel => "FWD_CANCEL",
    // strategies
    ProbDrop => "PROB_DROP",
    ProbFwd => "PROB_FWD",
    ForeignLearn => "FOREIGN_LEARN",
    ForeignFwd => "FOREIGN_FWD",
    OwnApp => "OWN_APP",
    UnknownDrop => "UNKNOWN_DROP",
    // application
    BeaconTx => "BEACON_TX",
    BitmapTx => "BITMAP_TX",
    PieceReq => "PIECE_REQ",
    PieceRx => "PIECE_RX",
    Completed => "COMPLETED",
    // mobility
    Epoch => "EPOCH",
}

impl Code {
    /// Records only an nTorrent application may emit.
    pub fn is_application(self) -> bool {
        matches!(
            self,
            Code::BeaconTx | Code::BitmapTx | Code::PieceReq | Code::PieceRx | Code::Completed
        )
    }

    /// Decisions that discard a received packet.
    pub fn is_drop(self) -> bool {
        matches!(
            self,
            Code::DupDrop
                | Code::ProbDrop
                | Code::ForeignLearn
                | Code::UnknownDrop
                | Code::DataUnsolicited
                | Code::HopLimit
                | Code::RxLost
        )
    }
}

impl fmt::Display for Code {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceRecord {
    pub time_us: SimTime,
    pub node: NodeId,
    pub event: Code,
    /// Canonical name text, or empty.
    pub name: String,
    /// `key=value` pairs separated by `;`.
    pub detail: String,
}

impl TraceRecord {
    /// Value of `key` in the detail column.
    pub fn detail_value(&self, key: &str) -> Option<&str> {
        self.detail
            .split(';')
            .filter_map(|kv| kv.split_once('='))
            .find(|(k, _)| *k == key)
            .map(|(_, v)| v)
    }
}

/// Append-only trace in emission order.
#[derive(Debug, Clone, Default)]
pub struct Trace {
    records: Vec<TraceRecord>,
}

impl Trace {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&mut self, time_us: SimTime, node: NodeId, event: Code, name: impl ToString, detail: impl Into<String>) {
        debug_assert!(self.records.last().is_none_or(|r| r.time_us <= time_us));
        self.records.push(TraceRecord {
            time_us,
            node,
            event,
            name: name.to_string(),
            detail: detail.into(),
        });
    }

    pub fn records(&self) -> &[TraceRecord] {
        &self.records
    }

    pub fn into_records(self) -> Vec<TraceRecord> {
        self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &TraceRecord> {
        self.records.iter()
    }
}

impl From<Vec<TraceRecord>> for Trace {
    fn from(records: Vec<TraceRecord>) -> Self {
        Trace { records }
    }
}

pub fn write_trace<W: Write>(records: &[TraceRecord], out: W) -> Result<(), TraceError> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    w.write_record(["time_us", "node", "event", "name", "detail"])?;
    for r in records {
        w.write_record([
            r.time_us.to_string().as_str(),
            &r.node.to_string(),
            r.event.as_str(),
            &r.name,
            &r.detail,
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_trace_csv(records: &[TraceRecord], path: &Path) -> Result<(), TraceError> {
    let f = std::fs::File::create(path)?;
    write_trace(records, std::io::BufWriter::new(f))
}

pub fn read_trace<R: Read>(input: R) -> Result<Vec<TraceRecord>, TraceError> {
    let mut rdr = csv::Reader::from_reader(input);
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row?;
        if row.len() != 5 {
            return Err(TraceError::BadRow(format!("{row:?}")));
        }
        let bad = || TraceError::BadRow(format!("{row:?}"));
        out.push(TraceRecord {
            time_us: row[0].parse().map_err(|_| bad())?,
            node: row[1].parse().map_err(|_| bad())?,
            event: row[2].parse()?,
            name: row[3].to_string(),
            detail: row[4].to_string(),
        });
    }
    Ok(out)
}

pub fn read_trace_csv(path: &Path) -> Result<Vec<TraceRecord>, TraceError> {
    read_trace(std::fs::File::open(path)?)
}
