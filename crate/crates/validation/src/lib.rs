//! Holds the `acceptance` test target; run it with
//! `cargo test -p sdiq-validation --test acceptance`.
