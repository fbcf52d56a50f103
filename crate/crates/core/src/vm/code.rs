//! Contract bytecode and its one-opcode-per-line assembly form.
//!
//! ```text
//! BURN 5000        ; stand-in for an expensive computation, pushes a digest
//! DERIVE_ACCOUNT   ; pops a seed word, pushes a user account
//! PUSH 1
//! TRANSFER         ; pops amount, then recipient
//! HALT
//! ```
//!
//! `PUSH` accepts a decimal word, `@name` for a named user or `%name` for a
//! named contract; names are resolved by the caller. `;` and `#` start comments.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::{AccountId, Slot, StateKey};

/// A VM stack value.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Value {
    Word(u64),
    Account(AccountId),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Opcode {
    Push(Value),
    Add,
    Sub,
    Mul,
    Load(Slot),
    Store(Slot),
    /// Pops a word and jumps to the instruction index when it is non-zero.
    JumpIf(u32),
    /// Pops amount then recipient; pays from the running contract.
    Transfer,
    /// Consumes exactly `n` gas and pushes a digest of the work.
    Burn(u64),
    DeriveAccount,
    Halt,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ContractCode {
    pub ops: Vec<Opcode>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CodeError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("instruction {index} jumps to {target}, past the end of a {len}-instruction program")]
    JumpOutOfRange {
        index: usize,
        target: u32,
        len: usize,
    },
    #[error("instruction {index}: BURN needs a positive amount")]
    ZeroBurn { index: usize },
}

impl ContractCode {
    pub fn new(ops: Vec<Opcode>) -> Result<Self, CodeError> {
        let code = Self { ops };
        code.validate()?;
        Ok(code)
    }

    /// Keys any run of this code at `contract` may write: its storage slots
    /// and the balances of accounts it pushes as constants. Payout targets
    /// computed at run time are not included.
    pub fn static_keys(&self, contract: AccountId) -> BTreeSet<StateKey> {
        self.ops
            .iter()
            .filter_map(|op| match op {
                Opcode::Load(slot) | Opcode::Store(slot) => {
                    Some(StateKey::Storage(contract, slot.clone()))
                }
                Opcode::Push(Value::Account(a)) => Some(StateKey::Balance(*a)),
                _ => None,
            })
            .collect()
    }

    /// Jump targets may equal the program length, which halts.
    pub fn validate(&self) -> Result<(), CodeError> {
        let len = self.ops.len();
        for (index, op) in self.ops.iter().enumerate() {
            match op {
                Opcode::JumpIf(target) if *target as usize > len => {
                    return Err(CodeError::JumpOutOfRange {
                        index,
                        target: *target,
                        len,
                    })
                }
                Opcode::Burn(0) => return Err(CodeError::ZeroBurn { index }),
                _ => {}
            }
        }
        Ok(())
    }

    pub fn assemble<F>(text: &str, mut resolve: F) -> Result<Self, CodeError>
    where
        F: FnMut(&str) -> Option<AccountId>,
    {
        let mut ops = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let stripped = raw.split([';', '#']).next().unwrap_or("").trim();
            if stripped.is_empty() {
                continue;
            }
            let err = |msg: String| CodeError::Syntax { line, msg };
            let mut parts = stripped.split_whitespace();
            let mnemonic = parts.next().unwrap_or_default().to_ascii_uppercase();
            let operand = parts.next();
            if parts.next().is_some() {
                return Err(err(format!("trailing tokens after `{stripped}`")));
            }
            let need = |what: &str| operand.ok_or_else(|| err(format!("{mnemonic} needs {what}")));
            let op = match mnemonic.as_str() {
                "PUSH" => {
                    let arg = need("a value")?;
                    if let Some(name) = arg.strip_prefix(['@', '%']) {
                        let account =
                            resolve(arg).ok_or_else(|| err(format!("unknown account `{name}`")))?;
                        Opcode::Push(Value::Account(account))
                    } else {
                        let word = arg
                            .parse()
                            .map_err(|_| err(format!("bad word literal `{arg}`")))?;
                        Opcode::Push(Value::Word(word))
                    }
                }
                "ADD" => Opcode::Add,
                "SUB" => Opcode::Sub,
                "MUL" => Opcode::Mul,
                "LOAD" => Opcode::Load(Slot::new(need("a slot")?)),
                "STORE" => Opcode::Store(Slot::new(need("a slot")?)),
                "JUMPIF" => {
                    let arg = need("a target")?;
                    Opcode::JumpIf(
                        arg.parse()
                            .map_err(|_| err(format!("bad jump target `{arg}`")))?,
                    )
                }
                "TRANSFER" => Opcode::Transfer,
                "BURN" => {
                    let arg = need("an amount")?;
                    Opcode::Burn(
                        arg.parse()
                            .map_err(|_| err(format!("bad burn amount `{arg}`")))?,
                    )
                }
                "DERIVE_ACCOUNT" => Opcode::DeriveAccount,
                "HALT" => Opcode::Halt,
                other => return Err(err(format!("unknown opcode `{other}`"))),
            };
            let takes_operand = matches!(
                op,
                Opcode::Push(_)
                    | Opcode::Load(_)
                    | Opcode::Store(_)
                    | Opcode::JumpIf(_)
                    | Opcode::Burn(_)
            );
            if !takes_operand && operand.is_some() {
                return Err(err(format!("{mnemonic} takes no operand")));
            }
            ops.push(op);
        }
        Self::new(ops)
    }
}

impl fmt::Display for Opcode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Opcode::Push(Value::Word(w)) => write!(f, "PUSH {w}"),
            Opcode::Push(Value::Account(a)) => write!(f, "PUSH {a}"),
            Opcode::Add => f.write_str("ADD"),
            Opcode::Sub => f.write_str("SUB"),
            Opcode::Mul => f.write_str("MUL"),
            Opcode::Load(s) => write!(f, "LOAD {s}"),
            Opcode::Store(s) => write!(f, "STORE {s}"),
            Opcode::JumpIf(t) => write!(f, "JUMPIF {t}"),
            Opcode::Transfer => f.write_str("TRANSFER"),
            Opcode::Burn(n) => write!(f, "BURN {n}"),
            Opcode::DeriveAccount => f.write_str("DERIVE_ACCOUNT"),
            Opcode::Halt => f.write_str("HALT"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::AccountKind;

    fn no_names(_: &str) -> Option<AccountId> {
        None
    }

    #[test]
    fn assembles_exec_dos_program() {
        let code = ContractCode::assemble(
            "BURN 5000 ; work\nDERIVE_ACCOUNT\n\nPUSH 1\nTRANSFER\nhalt",
            no_names,
        )
        .unwrap();
        assert_eq!(
            code.ops,
            vec![
                Opcode::Burn(5000),
                Opcode::DeriveAccount,
                Opcode::Push(Value::Word(1)),
                Opcode::Transfer,
                Opcode::Halt
            ]
        );
    }

    #[test]
    fn resolves_named_accounts() {
        let alice = AccountId::new(AccountKind::User, [7; 32]);
        let code =
            ContractCode::assemble("PUSH @Alice", |n| (n == "@Alice").then_some(alice)).unwrap();
        assert_eq!(code.ops, vec![Opcode::Push(Value::Account(alice))]);
        let err = ContractCode::assemble("PUSH @Bob", no_names).unwrap_err();
        assert!(matches!(err, CodeError::Syntax { line: 1, .. }));
    }

    #[test]
    fn rejects_bad_programs() {
        assert!(matches!(
            ContractCode::assemble("JUMPIF 3\nHALT", no_names),
            Err(CodeError::JumpOutOfRange { target: 3, .. })
        ));
        assert!(ContractCode::assemble("JUMPIF 2\nHALT", no_names).is_ok());
        assert!(matches!(
            ContractCode::assemble("BURN 0", no_names),
            Err(CodeError::ZeroBurn { index: 0 })
        ));
        assert!(matches!(
            ContractCode::assemble("\n\nFROB", no_names),
            Err(CodeError::Syntax { line: 3, .. })
        ));
        assert!(ContractCode::assemble("ADD 1", no_names).is_err());
        assert!(ContractCode::assemble("PUSH", no_names).is_err());
    }
}
