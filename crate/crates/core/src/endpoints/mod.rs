//! Sender and Receiver logic.

mod detect;
mod receiver;
mod reconcile;
mod sender;

pub use detect::{
    assemble_testimony, decrypt_records, detect_f2, detect_f3, identity_residual, phi_imbalance, signed, DetectError,
    F2Finding, F3Finding, PlainDir, PlainEdge, PlainTestimony,
};
pub use receiver::{inconsistent, ReceiverCore, ReceiverEvent, Sink};
pub use reconcile::{hamming, reconcile_status, Claim, Reconciled};
pub use sender::{Detection, DetectionRecord, SenderCore, TransmissionReport};
