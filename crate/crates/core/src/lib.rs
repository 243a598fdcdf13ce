//! Decentralized task allocation for heterogeneous robot teams using
//! graph attention over a multi-resolution V-cycle.

pub mod agent;
pub mod comms;
pub mod featurize;
pub mod grid;
pub mod numerics;
pub mod seed;
pub mod world;
pub mod model;
pub mod oracle;
pub mod pipeline;
pub mod rollout;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/worlds.md")]
    mod worlds {}
    #[doc = include_str!("../../../book/src/features.md")]
    mod features {}
    #[doc = include_str!("../../../book/src/communication.md")]
    mod communication {}
    #[doc = include_str!("../../../book/src/model.md")]
    mod model {}
    #[doc = include_str!("../../../book/src/oracle.md")]
    mod oracle {}
    #[doc = include_str!("../../../book/src/pipeline.md")]
    mod pipeline {}
    #[doc = include_str!("../../../book/src/rollout.md")]
    mod rollout {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
