//! Secret Unknown Ciphers built from maximum-period NLFSRs.
//!
//! The crate covers the whole life cycle of such a cipher: the verified
//! feedback catalog, exact analysis of the combining function and the
//! family's bounds, random one-shot instantiation, cryptanalytic
//! measurements on toy instances, and the enrollment, identification and
//! update protocols between a trusted authority and devices.

pub mod analysis;
pub mod anf;
pub mod bits;
pub mod boolean;
pub mod bounds;
pub mod catalog;
pub mod genie;
pub mod gf2;
pub mod ksg;
pub mod nlfsr;
pub mod protocol;

pub use anf::{AnfError, AnfFunction, Monomial};
pub use bits::BitSeq;
pub use boolean::{BfProfile, TruthTable, WalshSpectrum};
pub use catalog::{Catalog, CatalogEntry, DESIGN_LENGTHS};
pub use genie::{genie_create, EntropySource, SucInstance};
pub use ksg::{Ksg, KsgConfig, KsgState};
pub use nlfsr::{FeedbackForm, FeedbackSpec, Nlfsr, NlfsrError, PeriodReport};
