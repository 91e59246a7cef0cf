//! Interactive coding over binary channels where either party may fall
//! silent and silence itself can be spoofed.

pub mod adversary;
pub mod bitcodec;
pub mod bits;

pub use bits::BitString;
pub mod bounded;
pub mod channel;
pub mod events;
pub mod harness;
pub mod iteration;
pub mod protocol;
pub mod scheme;
