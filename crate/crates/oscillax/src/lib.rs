pub mod evolve;
pub mod fixtures;
pub mod ladder;
pub mod model;
pub mod numeric;
pub mod regimes;
pub mod switching;
pub mod verify;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/intro.md")]
    struct Intro;
    #[doc = include_str!("../../../book/src/models.md")]
    struct Models;
    #[doc = include_str!("../../../book/src/evolve.md")]
    struct Evolve;
    #[doc = include_str!("../../../book/src/ladder.md")]
    struct Ladder;
    #[doc = include_str!("../../../book/src/switching.md")]
    struct Switching;
    #[doc = include_str!("../../../book/src/regimes.md")]
    struct Regimes;
    #[doc = include_str!("../../../book/src/verify.md")]
    struct Verify;
}
