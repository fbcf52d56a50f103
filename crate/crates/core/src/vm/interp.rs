use std::collections::BTreeSet;

use super::code::{ContractCode, Opcode, Value};
use super::gas::GasTable;
use super::{count_opcode, RollbackReason};
use crate::state::{StateFault, StateStore};
use crate::types::{sha256, AccountId, Gas, StateKey};

const STACK_LIMIT: usize = 1024;

/// Why contract execution stopped early.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Abort {
    Rollback(RollbackReason),
    Fault(StateFault),
}

impl From<StateFault> for Abort {
    fn from(f: StateFault) -> Self {
        Abort::Fault(f)
    }
}

impl From<RollbackReason> for Abort {
    fn from(r: RollbackReason) -> Self {
        Abort::Rollback(r)
    }
}

pub struct CallContext<'a> {
    pub contract: AccountId,
    pub sender: AccountId,
    pub nonce: u64,
    pub declared: &'a BTreeSet<StateKey>,
}

/// Word pushed by `BURN n`.
pub fn burn_digest(n: u64) -> u64 {
    let h = sha256(&[b"burn", &n.to_le_bytes()]);
    u64::from_le_bytes(h[..8].try_into().expect("8 bytes"))
}

/// Runs `code` with `args` preloaded on the stack, writing effects into
/// `store`. Returns the outcome and the gas consumed, which equals `budget`
/// when execution ran out of gas.
pub fn run_contract<S: StateStore + ?Sized>(
    store: &mut S,
    ctx: &CallContext<'_>,
    code: &ContractCode,
    args: &[Value],
    budget: Gas,
    gas: &GasTable,
) -> (Result<(), Abort>, Gas) {
    let mut machine = Machine {
        stack: args.to_vec(),
        used: 0,
    };
    let outcome = machine.run(store, ctx, code, budget, gas);
    (outcome, machine.used)
}

struct Machine {
    stack: Vec<Value>,
    used: Gas,
}

impl Machine {
    fn pop(&mut self) -> Result<Value, Abort> {
        self.stack
            .pop()
            .ok_or(Abort::Rollback(RollbackReason::StackUnderflow))
    }

    fn pop_word(&mut self) -> Result<u64, Abort> {
        match self.pop()? {
            Value::Word(w) => Ok(w),
            Value::Account(_) => Err(RollbackReason::TypeMismatch.into()),
        }
    }

    fn push(&mut self, v: Value) -> Result<(), Abort> {
        if self.stack.len() >= STACK_LIMIT {
            return Err(RollbackReason::StackOverflow.into());
        }
        self.stack.push(v);
        Ok(())
    }

    fn arith(&mut self, f: fn(u64, u64) -> Option<u64>) -> Result<(), Abort> {
        let b = self.pop_word()?;
        let a = self.pop_word()?;
        let r = f(a, b).ok_or(RollbackReason::ArithmeticOverflow)?;
        self.push(Value::Word(r))
    }

    fn run<S: StateStore + ?Sized>(
        &mut self,
        store: &mut S,
        ctx: &CallContext<'_>,
        code: &ContractCode,
        budget: Gas,
        gas: &GasTable,
    ) -> Result<(), Abort> {
        let mut pc = 0usize;
        while let Some(op) = code.ops.get(pc) {
            let cost = gas.op_cost(op);
            match self.used.checked_add(cost) {
                Some(total) if total <= budget => self.used = total,
                _ => {
                    self.used = budget;
                    return Err(RollbackReason::OutOfGas.into());
                }
            }
            count_opcode();
            pc += 1;
            match op {
                Opcode::Push(v) => self.push(*v)?,
                Opcode::Add => self.arith(u64::checked_add)?,
                Opcode::Sub => self.arith(u64::checked_sub)?,
                Opcode::Mul => self.arith(u64::checked_mul)?,
                Opcode::Load(slot) => {
                    let key = StateKey::Storage(ctx.contract, slot.clone());
                    if !ctx.declared.contains(&key) {
                        return Err(RollbackReason::UndeclaredRead(key).into());
                    }
                    let v = store.read(&key)?;
                    self.push(Value::Word(v))?;
                }
                Opcode::Store(slot) => {
                    let v = self.pop_word()?;
                    let key = StateKey::Storage(ctx.contract, slot.clone());
                    if !ctx.declared.contains(&key) {
                        return Err(RollbackReason::UndeclaredWrite(key).into());
                    }
                    store.write(&key, v);
                }
                Opcode::JumpIf(target) => {
                    if self.pop_word()? != 0 {
                        pc = *target as usize;
                    }
                }
                Opcode::Transfer => {
                    let amount = self.pop_word()?;
                    let recipient = match self.pop()? {
                        Value::Account(a) => a,
                        Value::Word(_) => return Err(RollbackReason::TypeMismatch.into()),
                    };
                    let to = StateKey::Balance(recipient);
                    if !ctx.declared.contains(&to) {
                        return Err(RollbackReason::UndeclaredWrite(to).into());
                    }
                    super::move_tokens(store, &ctx.contract, &recipient, amount, false)?;
                }
                Opcode::Burn(n) => self.push(Value::Word(burn_digest(*n)))?,
                Opcode::DeriveAccount => {
                    let seed = self.pop_word()?;
                    self.push(Value::Account(AccountId::derived(
                        seed,
                        &ctx.sender,
                        ctx.nonce,
                    )))?;
                }
                Opcode::Halt => break,
            }
        }
        Ok(())
    }
}
