//! A UTXO set with block height, enough to replay the escrow flows.

use std::collections::BTreeMap;

use super::script::{interpret, ExecContext, Op, Script};
use super::tx::{IdMode, Locking, Tx, TxOut};
use super::{hash256, BtcError, KeyRegistry};

#[derive(Debug, Clone)]
pub struct Chain {
    mode: IdMode,
    height: u64,
    utxos: BTreeMap<([u8; 32], u32), TxOut>,
    keys: KeyRegistry,
    confirmed: Vec<Tx>,
    mints: u64,
}

impl Chain {
    pub fn new(mode: IdMode, keys: KeyRegistry) -> Self {
        Chain { mode, height: 0, utxos: BTreeMap::new(), keys, confirmed: Vec::new(), mints: 0 }
    }

    pub fn mode(&self) -> IdMode {
        self.mode
    }

    pub fn height(&self) -> u64 {
        self.height
    }

    pub fn keys(&self) -> &KeyRegistry {
        &self.keys
    }

    pub fn advance(&mut self, blocks: u64) {
        self.height += blocks;
    }

    pub fn advance_to(&mut self, height: u64) {
        self.height = self.height.max(height);
    }

    pub fn confirmed(&self) -> &[Tx] {
        &self.confirmed
    }

    /// Creates coins from nothing and returns the minting transaction id.
    pub fn genesis(&mut self, outputs: Vec<TxOut>) -> [u8; 32] {
        self.mints += 1;
        let tx = Tx { version: 1, inputs: Vec::new(), outputs, lock_time: self.mints };
        self.insert(tx)
    }

    pub fn utxo(&self, txid: &[u8; 32], idx: u32) -> Option<&TxOut> {
        self.utxos.get(&(*txid, idx))
    }

    /// Total value of unspent outputs with exactly this locking condition.
    pub fn balance(&self, locking: &Locking) -> u64 {
        self.utxos.values().filter(|o| &o.locking == locking).map(|o| o.value).sum()
    }

    pub fn total_unspent(&self) -> u64 {
        self.utxos.values().map(|o| o.value).sum()
    }

    pub fn validate(&self, tx: &Tx) -> Result<(), BtcError> {
        let ctx = ExecContext { height: self.height, lock_time: tx.lock_time, sighash: tx.sighash(), keys: &self.keys };
        for (index, input) in tx.inputs.iter().enumerate() {
            let spent = self.utxo(&input.prev_txid, input.prev_idx).ok_or(BtcError::MissingInput { index })?;
            if spent.value != input.value {
                return Err(BtcError::ValueMismatch { index, declared: input.value, actual: spent.value });
            }
            spend_check(&spent.locking, &input.witness, &ctx)
                .map_err(|e| BtcError::Script { index, source: Box::new(e) })?;
        }
        let (inputs, outputs) = (tx.input_total(), tx.output_total());
        if outputs > inputs {
            return Err(BtcError::Overspend { inputs, outputs });
        }
        Ok(())
    }

    /// Validates and confirms `tx` at the current height.
    pub fn submit(&mut self, tx: Tx) -> Result<[u8; 32], BtcError> {
        self.validate(&tx)?;
        for input in &tx.inputs {
            self.utxos.remove(&(input.prev_txid, input.prev_idx));
        }
        Ok(self.insert(tx))
    }

    fn insert(&mut self, tx: Tx) -> [u8; 32] {
        let id = tx.txid(self.mode);
        for out in &tx.outputs {
            self.utxos.insert((id, out.idx), out.clone());
        }
        self.confirmed.push(tx);
        id
    }
}

fn spend_check(locking: &Locking, witness: &Script, ctx: &ExecContext<'_>) -> Result<(), BtcError> {
    match locking {
        Locking::Inline(script) => interpret(script, witness, ctx),
        Locking::ScriptHash(h) => {
            let (last, rest) = witness.ops.split_last().ok_or(BtcError::StackUnderflow)?;
            let Op::Push(revealed) = last else { return Err(BtcError::ScriptHashMismatch) };
            if &hash256(revealed) != h {
                return Err(BtcError::ScriptHashMismatch);
            }
            interpret(&Script::from_bytes(revealed)?, &Script::new(rest.to_vec()), ctx)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::btcscript::tx::TxIn;
    use crate::btcscript::KeyPair;

    fn p2pk(k: &KeyPair) -> Script {
        Script::new(vec![Op::Push(k.public.clone()), Op::CheckSig])
    }

    #[test]
    fn spend_inline_and_hashed() {
        let alice = KeyPair::derive("alice");
        let mut keys = KeyRegistry::default();
        keys.register(&alice);
        let mut chain = Chain::new(IdMode::Segwit, keys);
        let lock = p2pk(&alice);
        let g = chain.genesis(vec![
            TxOut { idx: 0, value: 10, locking: Locking::Inline(lock.clone()) },
            TxOut { idx: 1, value: 5, locking: Locking::script_hash(&lock) },
        ]);
        let mut tx = Tx::new(
            vec![
                TxIn { prev_txid: g, prev_idx: 0, value: 10, witness: Script::default() },
                TxIn { prev_txid: g, prev_idx: 1, value: 5, witness: Script::default() },
            ],
            vec![TxOut { idx: 0, value: 15, locking: Locking::Inline(lock.clone()) }],
            0,
        );
        let sig = alice.sign(&tx.sighash());
        tx.inputs[0].witness = Script::new(vec![Op::Push(sig.clone())]);
        tx.inputs[1].witness = Script::new(vec![Op::Push(sig), Op::Push(lock.to_bytes())]);
        chain.submit(tx.clone()).unwrap();
        assert_eq!(chain.balance(&Locking::Inline(lock)), 15);
        assert_eq!(chain.submit(tx), Err(BtcError::MissingInput { index: 0 }));
    }

    #[test]
    fn overspend_and_bad_signature_rejected() {
        let alice = KeyPair::derive("alice");
        let mut keys = KeyRegistry::default();
        keys.register(&alice);
        let mut chain = Chain::new(IdMode::Legacy, keys);
        let lock = Locking::Inline(p2pk(&alice));
        let g = chain.genesis(vec![TxOut { idx: 0, value: 10, locking: lock.clone() }]);
        let mut tx = Tx::new(
            vec![TxIn { prev_txid: g, prev_idx: 0, value: 10, witness: Script::default() }],
            vec![TxOut { idx: 0, value: 11, locking: lock }],
            0,
        );
        tx.inputs[0].witness = Script::new(vec![Op::Push(alice.sign(&tx.sighash()))]);
        assert_eq!(chain.validate(&tx), Err(BtcError::Overspend { inputs: 10, outputs: 11 }));
        tx.outputs[0].value = 9;
        let err = chain.validate(&tx).unwrap_err();
        assert_eq!(err, BtcError::Script { index: 0, source: Box::new(BtcError::EvalFalse) });
    }
}
