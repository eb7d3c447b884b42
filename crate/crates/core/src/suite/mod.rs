//! Cross-module tests exercising the public API end to end.

mod examples;
mod properties;
