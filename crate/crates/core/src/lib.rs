pub mod acq;
pub mod bench;
pub mod bo;
pub mod domain;
pub mod gp;
pub mod kernel;
pub mod optim;
pub mod oracle;
pub mod pref;
pub mod stats;
pub mod survey;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/overview.md")]
    mod overview {}
    #[doc = include_str!("../../../book/src/workflow.md")]
    mod workflow {}
    #[doc = include_str!("../../../book/src/library.md")]
    mod library {}
    #[doc = include_str!("../../../book/src/oracles.md")]
    mod oracles {}
    #[doc = include_str!("../../../book/src/benchmarks.md")]
    mod benchmarks {}
    #[doc = include_str!("../../../book/src/formats.md")]
    mod formats {}
}
