//! Research-software link engine: harvest scholarly records, extract and
//! disambiguate software mentions, drive the validation lifecycle, mint
//! SWHIDs and expose paper-to-software links.

pub mod codemeta;
pub mod docmodel;
pub mod expose;
pub mod extract;
pub mod harvest;
pub mod lifecycle;
pub mod resolve;
pub mod swhid;
mod xml;

pub use xml::XmlError;
