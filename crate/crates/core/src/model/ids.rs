use serde::{Deserialize, Serialize};

/// Node index in `0..n`. Node 0 is the Sender and node n-1 the Receiver.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u16);

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl std::fmt::Display for NodeId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "N{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Role {
    Sender,
    Receiver,
    Internal,
}

/// How a transmission ended.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Outcome {
    /// Receiver decoded the codeword.
    S1,
    /// Receiver saw the potential sum exceed kCD.
    F2,
    /// Every parcel was inserted without a decode.
    F3,
    /// A corrupt node was identified and eliminated.
    F4,
}

impl Outcome {
    pub fn is_failure(self) -> bool {
        self != Outcome::S1
    }
}

impl std::fmt::Display for Outcome {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        std::fmt::Debug::fmt(self, f)
    }
}

pub type TransmissionId = u64;
