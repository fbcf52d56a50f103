//! Simulated signatures.
//!
//! A signature is a keyed hash of the transaction id under a per-account
//! secret. Verification looks the secret up in a [`Keyring`] owned by whoever
//! drives the simulation, which stands in for public-key verification.

use std::collections::BTreeMap;
use std::sync::RwLock;

use rand::RngCore;

use crate::types::{sha256, AccountId, AccountKind, Hash, Signature, TxId};

#[derive(Clone)]
pub struct Keypair {
    secret: Hash,
    account: AccountId,
}

impl Keypair {
    pub fn from_secret(secret: Hash) -> Self {
        let account = AccountId::new(AccountKind::User, sha256(&[b"public", &secret]));
        Self { secret, account }
    }

    /// Deterministic keypair for a named scenario participant.
    pub fn named(name: &str, seed: u64) -> Self {
        Self::from_secret(sha256(&[b"named", name.as_bytes(), &seed.to_le_bytes()]))
    }

    pub fn generate<R: RngCore>(rng: &mut R) -> Self {
        let mut secret = [0u8; 32];
        rng.fill_bytes(&mut secret);
        Self::from_secret(secret)
    }

    pub fn account(&self) -> AccountId {
        self.account
    }

    pub fn sign(&self, tx_id: &TxId) -> Signature {
        Signature(sha256(&[b"sig", &self.secret, &tx_id.0]))
    }
}

impl std::fmt::Debug for Keypair {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Keypair")
            .field("account", &self.account)
            .finish_non_exhaustive()
    }
}

/// Registry of known signing secrets, keyed by account.
#[derive(Default)]
pub struct Keyring {
    secrets: RwLock<BTreeMap<AccountId, Hash>>,
}

impl Keyring {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&self, keypair: &Keypair) {
        self.secrets
            .write()
            .expect("keyring lock poisoned")
            .insert(keypair.account, keypair.secret);
    }

    pub fn len(&self) -> usize {
        self.secrets.read().expect("keyring lock poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn verify(&self, account: &AccountId, tx_id: &TxId, signature: &Signature) -> bool {
        let secrets = self.secrets.read().expect("keyring lock poisoned");
        match secrets.get(account) {
            Some(secret) => sha256(&[b"sig", secret, &tx_id.0]) == signature.0,
            None => false,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn signatures_verify_only_for_the_signer() {
        let ring = Keyring::new();
        let alice = Keypair::named("Alice", 0);
        let bob = Keypair::named("Bob", 0);
        ring.register(&alice);
        ring.register(&bob);
        let id = TxId([9; 32]);
        let sig = alice.sign(&id);
        assert!(ring.verify(&alice.account(), &id, &sig));
        assert!(!ring.verify(&bob.account(), &id, &sig));
        assert!(!ring.verify(&alice.account(), &TxId([8; 32]), &sig));
    }

    #[test]
    fn unknown_signers_fail() {
        let ring = Keyring::new();
        let carol = Keypair::named("Carol", 1);
        assert!(!ring.verify(
            &carol.account(),
            &TxId([0; 32]),
            &carol.sign(&TxId([0; 32]))
        ));
    }

    #[test]
    fn named_keys_depend_on_seed() {
        assert_ne!(
            Keypair::named("Alice", 0).account(),
            Keypair::named("Alice", 1).account()
        );
    }
}
