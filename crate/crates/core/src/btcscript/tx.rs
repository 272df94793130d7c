//! Transactions and their length-prefixed binary layout.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! version u32
//! input count u32, then per input:   prev txid [32] | prev idx u32 | value u64
//! output count u32, then per output: idx u32 | value u64 | tag u8 | len u32 | locking bytes
//! lock_time u64
//! [witness section, present iff some input has a non-empty witness:
//!  per input: len u32 | witness script bytes]
//! ```
//!
//! The simplified form is the layout without the witness section. Locking
//! tag 0 carries an inline script, tag 1 a 32-byte script hash.

use serde::{Deserialize, Serialize};

use super::script::Script;
use super::{hash256, BtcError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum IdMode {
    /// Id over the full serialization, witnesses included.
    Legacy,
    /// Id over the simplified form only.
    Segwit,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Locking {
    Inline(Script),
    /// Hash commitment to a script revealed at spend time as the last
    /// witness push.
    ScriptHash([u8; 32]),
}

impl Locking {
    pub fn script_hash(script: &Script) -> Locking {
        Locking::ScriptHash(hash256(&script.to_bytes()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TxIn {
    pub prev_txid: [u8; 32],
    pub prev_idx: u32,
    pub value: u64,
    pub witness: Script,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TxOut {
    pub idx: u32,
    pub value: u64,
    pub locking: Locking,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Tx {
    pub version: u32,
    pub inputs: Vec<TxIn>,
    pub outputs: Vec<TxOut>,
    pub lock_time: u64,
}

impl Tx {
    pub fn new(inputs: Vec<TxIn>, outputs: Vec<TxOut>, lock_time: u64) -> Self {
        Tx { version: 2, inputs, outputs, lock_time }
    }

    pub fn input_total(&self) -> u64 {
        self.inputs.iter().map(|i| i.value).sum()
    }

    pub fn output_total(&self) -> u64 {
        self.outputs.iter().map(|o| o.value).sum()
    }

    pub fn has_witness(&self) -> bool {
        self.inputs.iter().any(|i| !i.witness.is_empty())
    }

    pub fn simplified_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&self.version.to_le_bytes());
        out.extend_from_slice(&(self.inputs.len() as u32).to_le_bytes());
        for i in &self.inputs {
            out.extend_from_slice(&i.prev_txid);
            out.extend_from_slice(&i.prev_idx.to_le_bytes());
            out.extend_from_slice(&i.value.to_le_bytes());
        }
        out.extend_from_slice(&(self.outputs.len() as u32).to_le_bytes());
        for o in &self.outputs {
            out.extend_from_slice(&o.idx.to_le_bytes());
            out.extend_from_slice(&o.value.to_le_bytes());
            let (tag, body) = match &o.locking {
                Locking::Inline(s) => (0u8, s.to_bytes()),
                Locking::ScriptHash(h) => (1u8, h.to_vec()),
            };
            out.push(tag);
            out.extend_from_slice(&(body.len() as u32).to_le_bytes());
            out.extend_from_slice(&body);
        }
        out.extend_from_slice(&self.lock_time.to_le_bytes());
        out
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = self.simplified_bytes();
        if self.has_witness() {
            for i in &self.inputs {
                let w = i.witness.to_bytes();
                out.extend_from_slice(&(w.len() as u32).to_le_bytes());
                out.extend_from_slice(&w);
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Tx, BtcError> {
        let mut r = Reader { bytes, pos: 0 };
        let version = r.u32()?;
        let n_in = r.u32()? as usize;
        let mut inputs = Vec::with_capacity(n_in.min(4096));
        for _ in 0..n_in {
            let prev_txid: [u8; 32] = r.take(32)?.try_into().expect("32 bytes");
            inputs.push(TxIn { prev_txid, prev_idx: r.u32()?, value: r.u64()?, witness: Script::default() });
        }
        let n_out = r.u32()? as usize;
        let mut outputs = Vec::with_capacity(n_out.min(4096));
        for _ in 0..n_out {
            let idx = r.u32()?;
            let value = r.u64()?;
            let tag = r.take(1)?[0];
            let len = r.u32()? as usize;
            let body = r.take(len)?;
            let locking = match tag {
                0 => Locking::Inline(Script::from_bytes(body)?),
                1 => Locking::ScriptHash(body.try_into().map_err(|_| BtcError::Parse("script hash must be 32 bytes"))?),
                _ => return Err(BtcError::Parse("unknown locking tag")),
            };
            outputs.push(TxOut { idx, value, locking });
        }
        let lock_time = r.u64()?;
        if r.pos < bytes.len() {
            for input in &mut inputs {
                let len = r.u32()? as usize;
                input.witness = Script::from_bytes(r.take(len)?)?;
            }
        }
        if r.pos != bytes.len() {
            return Err(BtcError::Parse("trailing bytes"));
        }
        Ok(Tx { version, inputs, outputs, lock_time })
    }

    pub fn txid(&self, mode: IdMode) -> [u8; 32] {
        match mode {
            IdMode::Legacy => hash256(&self.to_bytes()),
            IdMode::Segwit => hash256(&self.simplified_bytes()),
        }
    }

    /// The digest every signature on this transaction commits to.
    pub fn sighash(&self) -> [u8; 32] {
        hash256(&self.simplified_bytes())
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.to_bytes())
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, len: usize) -> Result<&'a [u8], BtcError> {
        let end = self.pos.checked_add(len).filter(|&e| e <= self.bytes.len()).ok_or(BtcError::Parse("truncated"))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, BtcError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64, BtcError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::btcscript::script::Op;

    fn sample(witness: Script) -> Tx {
        Tx::new(
            vec![TxIn { prev_txid: [7; 32], prev_idx: 1, value: 50, witness }],
            vec![
                TxOut { idx: 0, value: 20, locking: Locking::Inline(Script::new(vec![Op::Push(vec![1])])) },
                TxOut { idx: 1, value: 30, locking: Locking::ScriptHash([9; 32]) },
            ],
            12,
        )
    }

    #[test]
    fn roundtrip_with_and_without_witness() {
        for w in [Script::default(), Script::new(vec![Op::Push(vec![5; 40]), Op::Push(vec![])])] {
            let tx = sample(w);
            assert_eq!(Tx::from_bytes(&tx.to_bytes()).unwrap(), tx);
        }
        assert!(Tx::from_bytes(&sample(Script::default()).to_bytes()[..20]).is_err());
    }

    #[test]
    fn id_modes() {
        let bare = sample(Script::default());
        assert_eq!(bare.txid(IdMode::Legacy), bare.txid(IdMode::Segwit));
        let a = sample(Script::new(vec![Op::Push(vec![1; 32])]));
        let b = sample(Script::new(vec![Op::Push(vec![0xee]), Op::Drop, Op::Push(vec![1; 32])]));
        assert_ne!(a.txid(IdMode::Legacy), b.txid(IdMode::Legacy));
        assert_eq!(a.txid(IdMode::Segwit), b.txid(IdMode::Segwit));
        assert_eq!(a.sighash(), b.sighash());
    }
}
