//! On-disk layout: one file `block-NNNNNNNN.bin` per height, each holding
//! the bincode encoding of a [`Block`]. Loading re-validates every block.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use thiserror::Error;

use super::{Block, Ledger, LedgerError};
use crate::keys::Keyring;
use crate::vm::gas::GasTable;

#[derive(Debug, Error)]
pub enum PersistError {
    #[error("i/o on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot decode {path}: {source}")]
    Decode {
        path: PathBuf,
        source: bincode::Error,
    },
    #[error("no genesis block in {0}")]
    MissingGenesis(PathBuf),
    #[error("genesis block in {0} does not hash to its recorded hash")]
    BadGenesis(PathBuf),
}

pub fn block_file(dir: &Path, height: u64) -> PathBuf {
    dir.join(format!("block-{height:08}.bin"))
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> PersistError + '_ {
    move |source| PersistError::Io {
        path: path.to_path_buf(),
        source,
    }
}

impl Ledger {
    /// Writes every block, overwriting files of the same height.
    pub fn save(&self, dir: &Path) -> Result<(), PersistError> {
        fs::create_dir_all(dir).map_err(io(dir))?;
        for block in &self.blocks {
            let path = block_file(dir, block.height);
            let bytes = bincode::serialize(block).expect("blocks serialize");
            fs::write(&path, bytes).map_err(io(&path))?;
        }
        Ok(())
    }

    pub fn load(dir: &Path, keyring: Arc<Keyring>, gas: GasTable) -> Result<Self, LedgerError> {
        let genesis = read_block(&block_file(dir, 0))?
            .ok_or_else(|| PersistError::MissingGenesis(dir.to_path_buf()))?;
        let mut ledger = Ledger::genesis(genesis.allocations.clone(), keyring, gas)?;
        if ledger.blocks[0] != genesis {
            return Err(PersistError::BadGenesis(dir.to_path_buf()).into());
        }
        let mut height = 1;
        while let Some(block) = read_block(&block_file(dir, height))? {
            ledger.append(block)?;
            height += 1;
        }
        Ok(ledger)
    }
}

fn read_block(path: &Path) -> Result<Option<Block>, PersistError> {
    let bytes = match fs::read(path) {
        Ok(b) => b,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
        Err(e) => return Err(io(path)(e)),
    };
    bincode::deserialize(&bytes)
        .map(Some)
        .map_err(|source| PersistError::Decode {
            path: path.to_path_buf(),
            source,
        })
}
