//! Hierarchical names, the nTorrent naming layout and the packet model.
//!
//! Layout under the `/ntorrent` prefix:
//!
//! ```text
//! /ntorrent/beacon/<node>
//! /ntorrent/<torrent>/bitmap/<node>/<hex-bits>/<n-pieces>
//! /ntorrent/<torrent>/data/<piece>
//! /ntorrent/<torrent>/...            (any other message about a torrent)
//! ```
//!
//! The torrent id always sits at component index 1 so a relay can key its
//! forwarding decision on it without understanding the rest of the name.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bitmap::{Bitmap, PieceIndex};

pub const PREFIX: &str = "ntorrent";
const BEACON: &str = "beacon";
const BITMAP: &str = "bitmap";
const DATA: &str = "data";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NameError {
    #[error("malformed name {0:?}")]
    MalformedName(String),
    #[error("malformed bitmap {0}")]
    MalformedBitmap(String),
    #[error("bitmap length mismatch: {left} vs {right} pieces")]
    LengthMismatch { left: u32, right: u32 },
    #[error("data packet name {0} is not a piece name")]
    NotAPieceName(String),
}

/// Node identifier. Rendered as `n<id>` inside names.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}", self.0)
    }
}

impl FromStr for NodeId {
    type Err = NameError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.strip_prefix('n')
            .filter(|d| !d.is_empty() && d.bytes().all(|c| c.is_ascii_digit()))
            .and_then(|d| d.parse().ok())
            .map(NodeId)
            .ok_or_else(|| NameError::MalformedName(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TorrentId(pub String);

impl TorrentId {
    pub fn new(id: impl Into<String>) -> Self {
        TorrentId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for TorrentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// An NDN-style name: one or more non-empty components.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Name {
    components: Vec<String>,
}

impl Name {
    pub fn from_components<S: Into<String>>(parts: impl IntoIterator<Item = S>) -> Result<Name, NameError> {
        let components: Vec<String> = parts.into_iter().map(Into::into).collect();
        if components.is_empty() || components.iter().any(|c| c.is_empty() || c.contains('/')) {
            return Err(NameError::MalformedName(format!("{components:?}")));
        }
        Ok(Name { components })
    }

    pub fn parse(text: &str) -> Result<Name, NameError> {
        let malformed = || NameError::MalformedName(text.to_string());
        let rest = text.strip_prefix('/').ok_or_else(malformed)?;
        let components: Vec<String> = rest.split('/').map(str::to_string).collect();
        if components.iter().any(String::is_empty) {
            return Err(malformed());
        }
        Ok(Name { components })
    }

    pub fn components(&self) -> &[String] {
        &self.components
    }

    pub fn beacon(node: NodeId) -> Name {
        Name {
            components: vec![PREFIX.into(), BEACON.into(), node.to_string()],
        }
    }

    pub fn bitmap(torrent: &TorrentId, node: NodeId, bits: &Bitmap) -> Name {
        let (hex, n) = bits.encode();
        Name {
            components: vec![
                PREFIX.into(),
                torrent.0.clone(),
                BITMAP.into(),
                node.to_string(),
                hex,
                n,
            ],
        }
    }

    pub fn piece(torrent: &TorrentId, piece: PieceIndex) -> Name {
        Name {
            components: vec![PREFIX.into(), torrent.0.clone(), DATA.into(), piece.to_string()],
        }
    }

    /// Total classification of a name into the nTorrent message classes.
    pub fn classify(&self) -> NameClass {
        let c: Vec<&str> = self.components.iter().map(String::as_str).collect();
        match c.as_slice() {
            [PREFIX, BEACON, node] => node.parse().map_or(NameClass::Unknown, |node| NameClass::Beacon { node }),
            [PREFIX, BEACON, ..] => NameClass::Unknown,
            [PREFIX, t, BITMAP, node, hex, n] => match (node.parse(), Bitmap::decode(hex, n)) {
                (Ok(node), Ok(bits)) => NameClass::BitmapAnnounce {
                    torrent: TorrentId::new(*t),
                    node,
                    bits,
                },
                _ => NameClass::Unknown,
            },
            [PREFIX, t, DATA, idx] => match parse_index(idx) {
                Some(piece) => NameClass::PieceInterest {
                    torrent: TorrentId::new(*t),
                    piece,
                },
                None => NameClass::Unknown,
            },
            [PREFIX, _, BITMAP, ..] | [PREFIX, _, DATA, ..] => NameClass::Unknown,
            [PREFIX, t, ..] => NameClass::Foreign {
                torrent: TorrentId::new(*t),
            },
            _ => NameClass::Unknown,
        }
    }

    /// Torrent this name is about, if any.
    pub fn torrent(&self) -> Option<TorrentId> {
        self.classify().torrent().cloned()
    }
}

fn parse_index(s: &str) -> Option<PieceIndex> {
    if s.is_empty() || !s.bytes().all(|c| c.is_ascii_digit()) || (s.len() > 1 && s.starts_with('0')) {
        return None;
    }
    s.parse().ok()
}

impl fmt::Display for Name {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.components {
            write!(f, "/{c}")?;
        }
        Ok(())
    }
}

impl FromStr for Name {
    type Err = NameError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Name::parse(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NameClass {
    Beacon { node: NodeId },
    BitmapAnnounce { torrent: TorrentId, node: NodeId, bits: Bitmap },
    PieceInterest { torrent: TorrentId, piece: PieceIndex },
    Foreign { torrent: TorrentId },
    Unknown,
}

impl NameClass {
    pub fn torrent(&self) -> Option<&TorrentId> {
        match self {
            NameClass::BitmapAnnounce { torrent, .. }
            | NameClass::PieceInterest { torrent, .. }
            | NameClass::Foreign { torrent } => Some(torrent),
            NameClass::Beacon { .. } | NameClass::Unknown => None,
        }
    }
}

/// Convenience wrapper matching the free-function form used by callers.
pub fn parse_name(text: &str) -> Result<Name, NameError> {
    Name::parse(text)
}

pub fn classify(name: &Name) -> NameClass {
    name.classify()
}

pub fn torrent_of(name: &Name) -> Option<TorrentId> {
    name.torrent()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PacketKind {
    Interest { name: Name, nonce: u64 },
    Data { name: Name, payload_bytes: u64 },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Packet {
    pub kind: PacketKind,
    pub origin: NodeId,
    pub hop_count: u32,
}

impl Packet {
    pub fn interest(name: Name, nonce: u64, origin: NodeId) -> Packet {
        Packet {
            kind: PacketKind::Interest { name, nonce },
            origin,
            hop_count: 0,
        }
    }

    /// Data exists only for piece names.
    pub fn data(name: Name, payload_bytes: u64, origin: NodeId) -> Result<Packet, NameError> {
        if !matches!(name.classify(), NameClass::PieceInterest { .. }) {
            return Err(NameError::NotAPieceName(name.to_string()));
        }
        Ok(Packet {
            kind: PacketKind::Data { name, payload_bytes },
            origin,
            hop_count: 0,
        })
    }

    pub fn name(&self) -> &Name {
        match &self.kind {
            PacketKind::Interest { name, .. } | PacketKind::Data { name, .. } => name,
        }
    }

    pub fn nonce(&self) -> Option<u64> {
        match self.kind {
            PacketKind::Interest { nonce, .. } => Some(nonce),
            PacketKind::Data { .. } => None,
        }
    }

    pub fn is_interest(&self) -> bool {
        matches!(self.kind, PacketKind::Interest { .. })
    }

    /// Copy of this packet as retransmitted one hop further.
    pub fn next_hop(&self) -> Packet {
        Packet {
            hop_count: self.hop_count + 1,
            ..self.clone()
        }
    }
}
