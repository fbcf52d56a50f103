//! Identifiers, amounts and chain positions shared across the simulator.

use std::fmt;
use std::str::FromStr;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};

pub type Hash = [u8; 32];

/// Gas units.
pub type Gas = u64;

/// SHA-256 over the concatenation of `parts`.
pub fn sha256(parts: &[&[u8]]) -> Hash {
    let mut hasher = Sha256::new();
    for part in parts {
        hasher.update(part);
    }
    hasher.finalize().into()
}

fn serialize_hash<S: Serializer>(bytes: &Hash, serializer: S) -> Result<S::Ok, S::Error> {
    if serializer.is_human_readable() {
        serializer.serialize_str(&hex::encode(bytes))
    } else {
        bytes.serialize(serializer)
    }
}

fn deserialize_hash<'de, D: Deserializer<'de>>(deserializer: D) -> Result<Hash, D::Error> {
    if deserializer.is_human_readable() {
        let text = String::deserialize(deserializer)?;
        parse_hex32(&text).map_err(D::Error::custom)
    } else {
        Hash::deserialize(deserializer)
    }
}

fn parse_hex32(text: &str) -> Result<Hash, String> {
    let raw = hex::decode(text).map_err(|e| format!("bad hex `{text}`: {e}"))?;
    raw.try_into()
        .map_err(|_| format!("expected 32 hex-encoded bytes, got `{text}`"))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum AccountKind {
    User,
    Contract,
    Blackhole,
}

impl AccountKind {
    fn tag(self) -> &'static str {
        match self {
            AccountKind::User => "user",
            AccountKind::Contract => "contract",
            AccountKind::Blackhole => "blackhole",
        }
    }
}

/// Opaque 32-byte account identifier tagged with its kind.
///
/// Textual form is `<kind>:<64 hex digits>`.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AccountId {
    kind: AccountKind,
    bytes: Hash,
}

impl AccountId {
    /// Destination of slashed penalties. Nobody holds a key for it.
    pub const BLACKHOLE: AccountId = AccountId {
        kind: AccountKind::Blackhole,
        bytes: [0u8; 32],
    };

    pub const fn new(kind: AccountKind, bytes: Hash) -> Self {
        Self { kind, bytes }
    }

    /// Address of the contract created by `creator`'s transaction with `nonce`.
    pub fn contract(creator: &AccountId, nonce: u64) -> Self {
        let bytes = sha256(&[b"contract", &creator.bytes, &nonce.to_le_bytes()]);
        Self::new(AccountKind::Contract, bytes)
    }

    /// Account picked by `DERIVE_ACCOUNT`: a user address fixed by the seed word
    /// and by the (sender, nonce) pair that identifies the running transaction.
    pub fn derived(seed: u64, sender: &AccountId, nonce: u64) -> Self {
        let bytes = sha256(&[
            b"derive",
            &seed.to_le_bytes(),
            &sender.bytes,
            &nonce.to_le_bytes(),
        ]);
        Self::new(AccountKind::User, bytes)
    }

    pub fn kind(&self) -> AccountKind {
        self.kind
    }

    pub fn bytes(&self) -> &Hash {
        &self.bytes
    }

    pub fn is_user(&self) -> bool {
        self.kind == AccountKind::User
    }

    pub fn is_contract(&self) -> bool {
        self.kind == AccountKind::Contract
    }

    pub fn short(&self) -> String {
        format!("{}:{}", self.kind.tag(), &hex::encode(self.bytes)[..8])
    }
}

impl fmt::Display for AccountId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.kind.tag(), hex::encode(self.bytes))
    }
}

impl fmt::Debug for AccountId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.short())
    }
}

impl FromStr for AccountId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (tag, digits) = s
            .split_once(':')
            .ok_or_else(|| format!("account id `{s}` lacks a kind prefix"))?;
        let kind = match tag {
            "user" => AccountKind::User,
            "contract" => AccountKind::Contract,
            "blackhole" => AccountKind::Blackhole,
            other => return Err(format!("unknown account kind `{other}`")),
        };
        Ok(Self::new(kind, parse_hex32(digits)?))
    }
}

impl Serialize for AccountId {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        if serializer.is_human_readable() {
            serializer.collect_str(self)
        } else {
            (self.kind, self.bytes).serialize(serializer)
        }
    }
}

impl<'de> Deserialize<'de> for AccountId {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        if deserializer.is_human_readable() {
            let text = String::deserialize(deserializer)?;
            text.parse().map_err(D::Error::custom)
        } else {
            let (kind, bytes) = <(AccountKind, Hash)>::deserialize(deserializer)?;
            Ok(Self::new(kind, bytes))
        }
    }
}

macro_rules! hash_newtype {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        pub struct $name(
            #[serde(serialize_with = "serialize_hash", deserialize_with = "deserialize_hash")]
            pub Hash,
        );

        impl $name {
            pub fn to_hex(&self) -> String {
                hex::encode(self.0)
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.to_hex())
            }
        }

        impl fmt::Debug for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}({})", stringify!($name), &self.to_hex()[..12])
            }
        }

        impl FromStr for $name {
            type Err = String;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                parse_hex32(s).map(Self)
            }
        }
    };
}

hash_newtype!(
    /// Content hash of a transaction body.
    TxId
);
hash_newtype!(
    /// Hash of a block header preimage.
    BlockHash
);
hash_newtype!(
    /// Simulated signature: keyed hash of the transaction id.
    Signature
);

/// Amount of tokens in the smallest unit. Arithmetic is always checked.
#[derive(
    Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct TokenAmount(pub u64);

impl TokenAmount {
    pub const ZERO: TokenAmount = TokenAmount(0);

    pub fn checked_add(self, other: TokenAmount) -> Option<TokenAmount> {
        self.0.checked_add(other.0).map(TokenAmount)
    }

    pub fn checked_sub(self, other: TokenAmount) -> Option<TokenAmount> {
        self.0.checked_sub(other.0).map(TokenAmount)
    }

    pub fn saturating_sub(self, other: TokenAmount) -> TokenAmount {
        TokenAmount(self.0.saturating_sub(other.0))
    }

    /// Price of `gas` units at `self` per unit.
    pub fn checked_mul_gas(self, gas: Gas) -> Option<TokenAmount> {
        self.0.checked_mul(gas).map(TokenAmount)
    }

    pub fn is_zero(self) -> bool {
        self.0 == 0
    }
}

impl fmt::Display for TokenAmount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl From<u64> for TokenAmount {
    fn from(v: u64) -> Self {
        TokenAmount(v)
    }
}

/// Contract storage slot name.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Slot(pub String);

impl Slot {
    pub fn new(name: impl Into<String>) -> Self {
        Slot(name.into())
    }
}

impl fmt::Display for Slot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// One addressable piece of world state.
///
/// `Code` is written only by contract creation and read by calls into the
/// contract; it never appears in a declared write set.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum StateKey {
    Balance(AccountId),
    Nonce(AccountId),
    Storage(AccountId, Slot),
    Code(AccountId),
}

impl StateKey {
    pub fn account(&self) -> &AccountId {
        match self {
            StateKey::Balance(a) | StateKey::Nonce(a) | StateKey::Code(a) => a,
            StateKey::Storage(a, _) => a,
        }
    }
}

impl fmt::Display for StateKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StateKey::Balance(a) => write!(f, "balance({})", a.short()),
            StateKey::Nonce(a) => write!(f, "nonce({})", a.short()),
            StateKey::Storage(a, s) => write!(f, "storage({}, {s})", a.short()),
            StateKey::Code(a) => write!(f, "code({})", a.short()),
        }
    }
}

/// A point in the chain's total order: immediately before the transaction at
/// `(height, offset)`. `(h, len(block h))` and `(h + 1, 0)` denote the same
/// boundary.
#[derive(
    Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub struct Position {
    pub height: u64,
    pub offset: u32,
}

impl Position {
    pub const GENESIS: Position = Position {
        height: 0,
        offset: 0,
    };

    pub const fn new(height: u64, offset: u32) -> Self {
        Self { height, offset }
    }

    /// Boundary right after block `height`.
    pub const fn after_block(height: u64) -> Self {
        Self {
            height: height + 1,
            offset: 0,
        }
    }
}

impl fmt::Display for Position {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.height, self.offset)
    }
}

/// Where a committed transaction sits in the chain.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TxLocator {
    pub height: u64,
    pub offset: u32,
    pub tx_id: TxId,
}

impl TxLocator {
    pub fn position(&self) -> Position {
        Position::new(self.height, self.offset)
    }

    /// The boundary right after this transaction.
    pub fn next_position(&self) -> Position {
        Position::new(self.height, self.offset + 1)
    }
}

impl PartialOrd for TxLocator {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for TxLocator {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.height, self.offset, self.tx_id).cmp(&(other.height, other.offset, other.tx_id))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn account_id_text_round_trip() {
        let id = AccountId::contract(&AccountId::BLACKHOLE, 7);
        let text = id.to_string();
        assert!(text.starts_with("contract:"));
        assert_eq!(text.parse::<AccountId>().unwrap(), id);
        let json = serde_json::to_string(&id).unwrap();
        assert_eq!(serde_json::from_str::<AccountId>(&json).unwrap(), id);
        let bin = bincode::serialize(&id).unwrap();
        assert_eq!(bincode::deserialize::<AccountId>(&bin).unwrap(), id);
    }

    #[test]
    fn contract_addresses_depend_on_nonce() {
        let creator = AccountId::new(AccountKind::User, [1; 32]);
        assert_ne!(
            AccountId::contract(&creator, 0),
            AccountId::contract(&creator, 1)
        );
        assert!(AccountId::contract(&creator, 0).is_contract());
    }

    #[test]
    fn token_arithmetic_is_checked() {
        assert_eq!(TokenAmount(u64::MAX).checked_add(TokenAmount(1)), None);
        assert_eq!(TokenAmount(1).checked_sub(TokenAmount(2)), None);
        assert_eq!(
            TokenAmount(3).saturating_sub(TokenAmount(5)),
            TokenAmount::ZERO
        );
        assert_eq!(TokenAmount(2).checked_mul_gas(u64::MAX), None);
    }

    #[test]
    fn positions_order_like_the_chain() {
        assert!(Position::new(1, 5) < Position::new(2, 0));
        assert!(Position::after_block(1) > Position::new(1, 999));
    }
}
