//! The block-structured game DSL: data model, parser, validator and
//! canonical serializer.

pub mod ast;
pub mod parse;
pub mod serialize;
pub mod validate;

pub use ast::*;
pub use parse::{parse_game, parse_game_unchecked, ParseError};
pub use serialize::{serialize_expr, serialize_game};
pub use validate::{validate_spec, ValidationIssue};
