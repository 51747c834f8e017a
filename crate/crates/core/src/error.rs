use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch in {what}: expected {expected}, found {found}")]
    Shape {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{kind} id {id} out of range (size {len})")]
    IdOutOfRange {
        kind: &'static str,
        id: usize,
        len: usize,
    },
    #[error("no training triples")]
    NoTrainingTriples,
    #[error("inverse relations already added to this store")]
    AlreadyAugmented,
    #[error("true entity set is empty")]
    EmptyTrueSet,
    #[error("cannot evaluate an empty split")]
    EmptySplit,
    #[error("non-finite loss at epoch {epoch}, batch {batch} (max |score| = {max_abs_score})")]
    NonFinite {
        epoch: usize,
        batch: usize,
        max_abs_score: f64,
    },
}

pub(crate) fn check_len(what: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::Shape {
            what,
            expected,
            found,
        })
    }
}
