//! Process exit codes, following the BSD `sysexits` numbering.

use threshseg::Error;

pub const OK: u8 = 0;
/// The solver hit `--max-iter` before meeting the tolerance.
pub const MAX_ITER: u8 = 2;
pub const USAGE: u8 = 64;
pub const DATA: u8 = 65;
/// The energy increased between iterations and `--assert-decay` was on.
pub const SOFTWARE: u8 = 70;
pub const IO: u8 = 74;

pub fn code_for(e: &Error) -> u8 {
    match e {
        Error::Unreadable { .. }
        | Error::Io { .. }
        | Error::UnsupportedFormat(_)
        | Error::CorruptHeader(_)
        | Error::Encode(_) => IO,
        Error::InvalidArgument(_) | Error::UnknownKind { .. } | Error::InvalidGrid(_) => USAGE,
        Error::ShapeMismatch(_) | Error::LabelOutOfRange { .. } | Error::NonFinite(_) => DATA,
        Error::DecayViolation(_) | Error::GridTooLarge { .. } => SOFTWARE,
    }
}
