//! Opcode subset, byte encoding, disassembly, and the stack interpreter.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::{hash256, verify_signature, BtcError, KeyRegistry};

pub const OP_0: u8 = 0x00;
pub const OP_PUSHDATA1: u8 = 0x4c;
pub const OP_PUSHDATA2: u8 = 0x4d;
pub const OP_IF: u8 = 0x63;
pub const OP_ELSE: u8 = 0x67;
pub const OP_ENDIF: u8 = 0x68;
pub const OP_DROP: u8 = 0x75;
pub const OP_EQUALVERIFY: u8 = 0x88;
pub const OP_HASH256: u8 = 0xaa;
pub const OP_CHECKSIG: u8 = 0xac;
pub const OP_CHECKSIGVERIFY: u8 = 0xad;
pub const OP_CHECKLOCKTIMEVERIFY: u8 = 0xb1;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Op {
    Push(Vec<u8>),
    If,
    Else,
    EndIf,
    Hash256,
    EqualVerify,
    CheckSig,
    CheckSigVerify,
    CheckLockTimeVerify,
    Drop,
}

impl Op {
    pub fn name(&self) -> &'static str {
        match self {
            Op::Push(_) => "PUSH",
            Op::If => "OP_IF",
            Op::Else => "OP_ELSE",
            Op::EndIf => "OP_ENDIF",
            Op::Hash256 => "OP_HASH256",
            Op::EqualVerify => "OP_EQUALVERIFY",
            Op::CheckSig => "OP_CHECKSIG",
            Op::CheckSigVerify => "OP_CHECKSIGVERIFY",
            Op::CheckLockTimeVerify => "OP_CHECKLOCKTIMEVERIFY",
            Op::Drop => "OP_DROP",
        }
    }

    fn opcode(&self) -> Option<u8> {
        Some(match self {
            Op::Push(_) => return None,
            Op::If => OP_IF,
            Op::Else => OP_ELSE,
            Op::EndIf => OP_ENDIF,
            Op::Hash256 => OP_HASH256,
            Op::EqualVerify => OP_EQUALVERIFY,
            Op::CheckSig => OP_CHECKSIG,
            Op::CheckSigVerify => OP_CHECKSIGVERIFY,
            Op::CheckLockTimeVerify => OP_CHECKLOCKTIMEVERIFY,
            Op::Drop => OP_DROP,
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Script {
    pub ops: Vec<Op>,
}

impl Script {
    pub fn new(ops: Vec<Op>) -> Self {
        Script { ops }
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        for op in &self.ops {
            match op {
                Op::Push(data) => push_bytes(&mut out, data),
                other => out.push(other.opcode().expect("non-push opcode")),
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Script, BtcError> {
        let mut ops = Vec::new();
        let mut i = 0;
        let take = |i: &mut usize, len: usize| -> Result<Vec<u8>, BtcError> {
            let end = i.checked_add(len).filter(|&e| e <= bytes.len()).ok_or(BtcError::Parse("push runs past the end"))?;
            let v = bytes[*i..end].to_vec();
            *i = end;
            Ok(v)
        };
        while i < bytes.len() {
            let b = bytes[i];
            i += 1;
            let op = match b {
                OP_0 => Op::Push(Vec::new()),
                1..=75 => Op::Push(take(&mut i, b as usize)?),
                OP_PUSHDATA1 => {
                    let len = take(&mut i, 1)?[0] as usize;
                    Op::Push(take(&mut i, len)?)
                }
                OP_PUSHDATA2 => {
                    let l = take(&mut i, 2)?;
                    Op::Push(take(&mut i, u16::from_le_bytes([l[0], l[1]]) as usize)?)
                }
                OP_IF => Op::If,
                OP_ELSE => Op::Else,
                OP_ENDIF => Op::EndIf,
                OP_HASH256 => Op::Hash256,
                OP_EQUALVERIFY => Op::EqualVerify,
                OP_CHECKSIG => Op::CheckSig,
                OP_CHECKSIGVERIFY => Op::CheckSigVerify,
                OP_CHECKLOCKTIMEVERIFY => Op::CheckLockTimeVerify,
                OP_DROP => Op::Drop,
                other => return Err(BtcError::UnknownOpcode(other)),
            };
            ops.push(op);
        }
        Ok(Script { ops })
    }

    /// Whether every `IF` has a matching `ENDIF` and `ELSE` only appears
    /// inside an `IF`.
    pub fn is_balanced(&self) -> bool {
        let mut depth = 0usize;
        for op in &self.ops {
            match op {
                Op::If => depth += 1,
                Op::Else if depth == 0 => return false,
                Op::EndIf => match depth.checked_sub(1) {
                    Some(d) => depth = d,
                    None => return false,
                },
                _ => {}
            }
        }
        depth == 0
    }

    /// One token per line in the style `32 0x<hex> OP_EQUALVERIFY`.
    pub fn disassemble(&self) -> String {
        let mut lines: Vec<String> = Vec::new();
        let mut pending: Vec<String> = Vec::new();
        for op in &self.ops {
            match op {
                Op::Push(d) if d.is_empty() => pending.push("0".into()),
                Op::Push(d) => pending.push(format!("{} 0x{}", d.len(), hex::encode(d))),
                Op::If | Op::Else | Op::EndIf | Op::Hash256 => {
                    if !pending.is_empty() {
                        lines.push(pending.join(" "));
                        pending.clear();
                    }
                    lines.push(op.name().to_string());
                }
                other => {
                    pending.push(other.name().to_string());
                    if matches!(other, Op::EqualVerify | Op::CheckSig | Op::CheckSigVerify | Op::Drop) {
                        lines.push(pending.join(" "));
                        pending.clear();
                    }
                }
            }
        }
        if !pending.is_empty() {
            lines.push(pending.join(" "));
        }
        lines.join("\n")
    }
}

impl fmt::Display for Script {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.disassemble().replace('\n', " "))
    }
}

fn push_bytes(out: &mut Vec<u8>, data: &[u8]) {
    match data.len() {
        0 => out.push(OP_0),
        len @ 1..=75 => {
            out.push(len as u8);
            out.extend_from_slice(data);
        }
        len @ 76..=255 => {
            out.push(OP_PUSHDATA1);
            out.push(len as u8);
            out.extend_from_slice(data);
        }
        len => {
            out.push(OP_PUSHDATA2);
            out.extend_from_slice(&(u16::try_from(len).expect("push under 64 KiB")).to_le_bytes());
            out.extend_from_slice(data);
        }
    }
}

/// Minimal little-endian sign-magnitude encoding.
pub fn encode_num(v: i64) -> Vec<u8> {
    if v == 0 {
        return Vec::new();
    }
    let negative = v < 0;
    let mut abs = v.unsigned_abs();
    let mut out = Vec::new();
    while abs > 0 {
        out.push((abs & 0xff) as u8);
        abs >>= 8;
    }
    if out.last().is_some_and(|b| b & 0x80 != 0) {
        out.push(if negative { 0x80 } else { 0x00 });
    } else if negative {
        *out.last_mut().expect("non-empty") |= 0x80;
    }
    out
}

pub fn decode_num(bytes: &[u8]) -> Result<i64, BtcError> {
    if bytes.len() > 5 {
        return Err(BtcError::NumberOverflow);
    }
    let Some((&last, _)) = bytes.split_last() else { return Ok(0) };
    let mut v: i64 = 0;
    for (k, &b) in bytes.iter().enumerate() {
        let b = if k == bytes.len() - 1 { b & 0x7f } else { b };
        v |= (b as i64) << (8 * k);
    }
    Ok(if last & 0x80 != 0 { -v } else { v })
}

fn cast_to_bool(v: &[u8]) -> bool {
    match v.split_last() {
        None => false,
        Some((&last, rest)) => rest.iter().any(|&b| b != 0) || (last != 0 && last != 0x80),
    }
}

/// Chain state visible to a script.
#[derive(Debug, Clone, Copy)]
pub struct ExecContext<'a> {
    pub height: u64,
    pub lock_time: u64,
    /// Digest of the spending transaction's simplified form.
    pub sighash: [u8; 32],
    pub keys: &'a KeyRegistry,
}

/// Runs `witness` and then `locking` on one stack. Succeeds iff the final
/// stack is non-empty with a true top element.
pub fn interpret(locking: &Script, witness: &Script, ctx: &ExecContext<'_>) -> Result<(), BtcError> {
    let mut stack: Vec<Vec<u8>> = Vec::new();
    run(witness, &mut stack, ctx)?;
    run(locking, &mut stack, ctx)?;
    match stack.last() {
        Some(top) if cast_to_bool(top) => Ok(()),
        _ => Err(BtcError::EvalFalse),
    }
}

pub(crate) fn run(script: &Script, stack: &mut Vec<Vec<u8>>, ctx: &ExecContext<'_>) -> Result<(), BtcError> {
    let mut branches: Vec<bool> = Vec::new();
    for op in &script.ops {
        let executing = branches.iter().all(|&b| b);
        match op {
            Op::If => {
                let take = if executing { cast_to_bool(&pop(stack)?) } else { false };
                branches.push(take);
                continue;
            }
            Op::Else => {
                let top = branches.last_mut().ok_or(BtcError::UnbalancedIf)?;
                *top = !*top;
                continue;
            }
            Op::EndIf => {
                branches.pop().ok_or(BtcError::UnbalancedIf)?;
                continue;
            }
            _ if !executing => continue,
            Op::Push(d) => stack.push(d.clone()),
            Op::Hash256 => {
                let v = pop(stack)?;
                stack.push(hash256(&v).to_vec());
            }
            Op::EqualVerify => {
                let a = pop(stack)?;
                let b = pop(stack)?;
                if a != b {
                    return Err(BtcError::VerifyFailed(op.name()));
                }
            }
            Op::CheckSig | Op::CheckSigVerify => {
                let pk = pop(stack)?;
                let sig = pop(stack)?;
                let ok = verify_signature(ctx.keys, &pk, &ctx.sighash, &sig);
                if *op == Op::CheckSigVerify {
                    if !ok {
                        return Err(BtcError::VerifyFailed(op.name()));
                    }
                } else {
                    stack.push(if ok { vec![1] } else { Vec::new() });
                }
            }
            Op::CheckLockTimeVerify => {
                let top = stack.last().ok_or(BtcError::StackUnderflow)?;
                let tau = decode_num(top)?;
                if tau < 0 || tau as u64 > ctx.lock_time || ctx.height < tau as u64 {
                    return Err(BtcError::VerifyFailed(op.name()));
                }
            }
            Op::Drop => {
                pop(stack)?;
            }
        }
    }
    if branches.is_empty() {
        Ok(())
    } else {
        Err(BtcError::UnbalancedIf)
    }
}

fn pop(stack: &mut Vec<Vec<u8>>) -> Result<Vec<u8>, BtcError> {
    stack.pop().ok_or(BtcError::StackUnderflow)
}
