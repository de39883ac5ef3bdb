//! Holds the `acceptance` test target only; run it with
//! `cargo test -p hdkde-verify --test acceptance`.
