use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::code::Opcode;
use crate::tx::TxKind;
use crate::types::{sha256, Gas, Hash};

/// Gas prices per transaction kind and per opcode.
///
/// Every field must be at least 1 so that no transaction and no loop is free.
/// `BURN n` always costs exactly `n`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GasTable {
    pub intrinsic_transfer: Gas,
    pub intrinsic_create: Gas,
    pub intrinsic_call: Gas,
    pub intrinsic_oath: Gas,
    pub push: Gas,
    pub arithmetic: Gas,
    pub load: Gas,
    pub store: Gas,
    pub jump_if: Gas,
    pub transfer: Gas,
    pub derive_account: Gas,
    pub halt: Gas,
}

impl Default for GasTable {
    fn default() -> Self {
        Self {
            intrinsic_transfer: 1000,
            intrinsic_create: 2000,
            intrinsic_call: 2000,
            intrinsic_oath: 2000,
            push: 1,
            arithmetic: 1,
            load: 20,
            store: 20,
            jump_if: 1,
            transfer: 100,
            derive_account: 30,
            halt: 1,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("gas table entry `{0}` must be at least 1")]
pub struct ZeroGasEntry(pub &'static str);

impl GasTable {
    pub fn validate(&self) -> Result<(), ZeroGasEntry> {
        let entries = [
            ("intrinsic_transfer", self.intrinsic_transfer),
            ("intrinsic_create", self.intrinsic_create),
            ("intrinsic_call", self.intrinsic_call),
            ("intrinsic_oath", self.intrinsic_oath),
            ("push", self.push),
            ("arithmetic", self.arithmetic),
            ("load", self.load),
            ("store", self.store),
            ("jump_if", self.jump_if),
            ("transfer", self.transfer),
            ("derive_account", self.derive_account),
            ("halt", self.halt),
        ];
        match entries.iter().find(|(_, cost)| *cost == 0) {
            Some((name, _)) => Err(ZeroGasEntry(name)),
            None => Ok(()),
        }
    }

    pub fn intrinsic(&self, kind: TxKind) -> Gas {
        match kind {
            TxKind::Transfer => self.intrinsic_transfer,
            TxKind::ContractCreate => self.intrinsic_create,
            TxKind::ContractCall => self.intrinsic_call,
            TxKind::OathCall => self.intrinsic_oath,
        }
    }

    pub fn op_cost(&self, op: &Opcode) -> Gas {
        match op {
            Opcode::Push(_) => self.push,
            Opcode::Add | Opcode::Sub | Opcode::Mul => self.arithmetic,
            Opcode::Load(_) => self.load,
            Opcode::Store(_) => self.store,
            Opcode::JumpIf(_) => self.jump_if,
            Opcode::Transfer => self.transfer,
            Opcode::Burn(n) => *n,
            Opcode::DeriveAccount => self.derive_account,
            Opcode::Halt => self.halt,
        }
    }

    /// Hash of the canonical JSON form, recorded in run reports.
    pub fn digest(&self) -> Hash {
        let json = serde_json::to_vec(self).expect("gas table serializes");
        sha256(&[&json])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        GasTable::default().validate().unwrap();
        assert_eq!(GasTable::default().op_cost(&Opcode::Burn(5000)), 5000);
    }

    #[test]
    fn zero_entries_are_rejected() {
        let table = GasTable {
            load: 0,
            ..GasTable::default()
        };
        assert_eq!(table.validate(), Err(ZeroGasEntry("load")));
    }

    #[test]
    fn partial_overrides_fill_defaults() {
        let table: GasTable = serde_json::from_str(r#"{"transfer": 250}"#).unwrap();
        assert_eq!(table.transfer, 250);
        assert_eq!(table.intrinsic_transfer, 1000);
        assert_ne!(table.digest(), GasTable::default().digest());
        assert!(serde_json::from_str::<GasTable>(r#"{"bogus": 1}"#).is_err());
    }
}
