//! Input decks, sweeps and file output for `spinrelax-core`.

pub mod cli;
pub mod deck;
pub mod output;
pub mod run;
