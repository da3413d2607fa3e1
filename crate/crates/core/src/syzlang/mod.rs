//! The supported syzlang subset: AST, parser, canonical printer, constant
//! resolution and validation.

pub mod ast;
mod parser;
mod render;
mod resolve;
mod validate;

pub use ast::*;
pub use parser::{parse_spec, parse_type_expr, ParseError};
pub use render::{
    decl_at_line, fmt_int, parse_const_file, render_const_file, render_decl, render_flag_set, render_resource,
    render_spec, render_syscall, render_type, render_typedef, render_with_lines, DeclLine,
};
pub use resolve::{builtin_constant, resolve_constants, resolve_with, ConstantTable, BUILTIN_RESOURCES};
pub use validate::{
    validate_spec, validate_text, validate_with, ErrorCode, Location, ValidateOptions, ValidationError,
};
