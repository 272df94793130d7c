//! A small Bitcoin-script realization of the escrow functionalities.
//!
//! The interpreter covers the opcodes the escrow scripts need. Signatures are
//! a deterministic hash construction checked against a key registry, which
//! keeps the demonstrations dependency-free while preserving what matters
//! here: a signature commits to the simplified (witness-free) transaction
//! form, and transaction ids are computed either over the full form (legacy)
//! or the simplified form (segregated witness).

use std::collections::HashMap;

use sha2::{Digest, Sha256};
use thiserror::Error;

pub mod chain;
pub mod flows;
pub mod script;
pub mod tx;

pub use chain::Chain;
pub use flows::{
    build_compensate_tx, build_ml_lock_tx, build_redeem_tx, cr_script, cr_script_as_listed, escrow_ml_balances,
    malleability_demo, ml_output_index, ml_output_script, mutate_witness, p2pk, run_ml_flow, sign_lock_tx,
    weight_of, MalleabilityCase, MalleabilityReport, MlFlowReport, MlParticipant, MlScenario, MAX_TX_WEIGHT,
};
pub use script::{decode_num, encode_num, interpret, ExecContext, Op, Script};
pub use tx::{IdMode, Locking, Tx, TxIn, TxOut};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BtcError {
    #[error("stack underflow")]
    StackUnderflow,
    #[error("unbalanced IF/ELSE/ENDIF")]
    UnbalancedIf,
    #[error("{0} failed")]
    VerifyFailed(&'static str),
    #[error("script finished with a false or empty stack")]
    EvalFalse,
    #[error("script number longer than 5 bytes")]
    NumberOverflow,
    #[error("unknown opcode 0x{0:02x}")]
    UnknownOpcode(u8),
    #[error("malformed encoding: {0}")]
    Parse(&'static str),
    #[error("input {index} spends an unknown output")]
    MissingInput { index: usize },
    #[error("input {index} declares value {declared} but the output holds {actual}")]
    ValueMismatch { index: usize, declared: u64, actual: u64 },
    #[error("outputs ({outputs}) exceed inputs ({inputs})")]
    Overspend { inputs: u64, outputs: u64 },
    #[error("input {index}: {source}")]
    Script { index: usize, source: Box<BtcError> },
    #[error("script hash does not match the revealed script")]
    ScriptHashMismatch,
    #[error("transaction weight {weight} exceeds the limit {limit}")]
    SizeLimitExceeded { weight: usize, limit: usize },
    #[error("invalid branch: {0}")]
    InvalidBranch(String),
    #[error("invalid parameters: {0}")]
    InvalidParameters(String),
}

pub fn sha256(data: &[u8]) -> [u8; 32] {
    Sha256::digest(data).into()
}

/// Double SHA-256.
pub fn hash256(data: &[u8]) -> [u8; 32] {
    sha256(&sha256(data))
}

/// Deterministic mock key pair. The public key is `0x02 ‖ SHA256("pk" ‖ sk)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeyPair {
    pub secret: [u8; 32],
    pub public: Vec<u8>,
}

impl KeyPair {
    pub fn from_secret(secret: [u8; 32]) -> Self {
        let mut public = vec![0x02];
        public.extend_from_slice(&sha256(&[b"pk".as_slice(), &secret].concat()));
        KeyPair { secret, public }
    }

    pub fn derive(label: &str) -> Self {
        Self::from_secret(sha256(label.as_bytes()))
    }

    /// `SHA256("sig" ‖ sk ‖ sighash)`.
    pub fn sign(&self, sighash: &[u8; 32]) -> Vec<u8> {
        signature_for(&self.secret, sighash).to_vec()
    }
}

fn signature_for(secret: &[u8; 32], sighash: &[u8; 32]) -> [u8; 32] {
    sha256(&[b"sig".as_slice(), secret, sighash].concat())
}

/// Public key to secret lookup standing in for signature verification.
#[derive(Debug, Clone, Default)]
pub struct KeyRegistry {
    keys: HashMap<Vec<u8>, [u8; 32]>,
}

impl KeyRegistry {
    pub fn register(&mut self, key: &KeyPair) {
        self.keys.insert(key.public.clone(), key.secret);
    }
}

pub fn verify_signature(keys: &KeyRegistry, public: &[u8], sighash: &[u8; 32], sig: &[u8]) -> bool {
    keys.keys.get(public).is_some_and(|sk| signature_for(sk, sighash).as_slice() == sig)
}
