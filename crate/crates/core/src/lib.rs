pub mod assembler;
pub mod document;
pub mod error;
pub mod fixtures;
pub mod flow_model;
pub mod geometry;
pub mod labeller;
pub mod qp;
pub mod refiner;
pub mod render;
pub mod selection;

pub use error::{Error, Result};

// The guide's code blocks run as doctests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/data.md")]
    mod data {}
    #[doc = include_str!("../../../book/src/layout.md")]
    mod layout {}
    #[doc = include_str!("../../../book/src/qp.md")]
    mod qp {}
    #[doc = include_str!("../../../book/src/output.md")]
    mod output {}
    #[doc = include_str!("../../../book/src/service.md")]
    mod service {}
}
