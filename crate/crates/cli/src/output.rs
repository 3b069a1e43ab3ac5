//! Deterministic artifact writing. Every float in JSON and CSV output is
//! printed with 17 significant digits so values survive a parse round trip
//! bit for bit; non-finite values become JSON null.

use crate::{CliError, CliResult};
use serde::Serialize;
use serde_json::ser::{Formatter, PrettyFormatter};
use std::io;

/// Pretty JSON with full-precision floats.
struct Pretty17<'a>(PrettyFormatter<'a>);

impl Formatter for Pretty17<'_> {
    fn write_f64<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        write!(writer, "{:.16e}", value)
    }

    fn begin_array<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.0.begin_array(writer)
    }

    fn end_array<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.0.end_array(writer)
    }

    fn begin_array_value<W: ?Sized + io::Write>(
        &mut self,
        writer: &mut W,
        first: bool,
    ) -> io::Result<()> {
        self.0.begin_array_value(writer, first)
    }

    fn end_array_value<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.0.end_array_value(writer)
    }

    fn begin_object<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.0.begin_object(writer)
    }

    fn end_object<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.0.end_object(writer)
    }

    fn begin_object_key<W: ?Sized + io::Write>(
        &mut self,
        writer: &mut W,
        first: bool,
    ) -> io::Result<()> {
        self.0.begin_object_key(writer, first)
    }

    fn begin_object_value<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.0.begin_object_value(writer)
    }

    fn end_object_value<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.0.end_object_value(writer)
    }
}

pub fn to_json<T: Serialize>(value: &T) -> CliResult<String> {
    let mut buf = Vec::new();
    let mut ser =
        serde_json::Serializer::with_formatter(&mut buf, Pretty17(PrettyFormatter::new()));
    value
        .serialize(&mut ser)
        .map_err(|e| CliError::Parse(format!("serialize: {e}")))?;
    buf.push(b'\n');
    Ok(String::from_utf8(buf).expect("serializer emits UTF-8"))
}

/// 17 significant digits, the same form the JSON side uses.
pub fn fmt_float(value: f64) -> String {
    format!("{value:.16e}")
}

/// To the named file, or stdout when no path is given.
pub fn write_artifact(out: &Option<String>, content: &str) -> CliResult<()> {
    match out {
        Some(path) => std::fs::write(path, content)
            .map_err(|e| CliError::Parse(format!("{path}: {e}"))),
        None => {
            print!("{content}");
            Ok(())
        }
    }
}

/// Drops non-finite values to None so they serialize as null instead of
/// panicking a strict JSON consumer.
pub fn finite_or_null(value: f64) -> Option<f64> {
    value.is_finite().then_some(value)
}
