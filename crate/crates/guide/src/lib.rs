//! The book's chapters, included as module documentation so every fenced
//! Rust snippet runs under `cargo test --doc`. mdBook itself does not
//! execute snippets against external crates; this crate closes that gap,
//! and a failing snippet here means the book has drifted from the library.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/model.md")]
pub mod model {}

#[doc = include_str!("../../../book/src/separatrix.md")]
pub mod separatrix {}

#[doc = include_str!("../../../book/src/melnikov.md")]
pub mod melnikov {}

#[doc = include_str!("../../../book/src/barrier.md")]
pub mod barrier {}

#[doc = include_str!("../../../book/src/shadowing.md")]
pub mod shadowing {}

#[doc = include_str!("../../../book/src/gradientflow.md")]
pub mod gradientflow {}

#[doc = include_str!("../../../book/src/diagnostics.md")]
pub mod diagnostics {}

#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
