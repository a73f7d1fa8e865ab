use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use lofi_core::Error;
use serde::de::DeserializeOwned;
use serde::Serialize;

pub fn open(path: &Path) -> Result<BufReader<File>, Error> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::io(format!("reading {}", path.display()), e))
}

/// Creates `path` and hands a buffered writer to `body`; flushed before returning.
pub fn write_with<F>(path: &Path, body: F) -> Result<(), Error>
where
    F: FnOnce(&mut BufWriter<File>) -> Result<(), Error>,
{
    let context = || format!("writing {}", path.display());
    let mut out = File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(context(), e))?;
    body(&mut out)?;
    out.flush().map_err(|e| Error::io(context(), e))
}

pub fn io_at(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |e| Error::io(format!("writing {}", path.display()), e)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, Error> {
    serde_json::from_reader(open(path)?).map_err(|e| Error::json(format!("parsing {}", path.display()), e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), Error> {
    write_with(path, |out| {
        serde_json::to_writer_pretty(&mut *out, value).map_err(|e| Error::json(format!("writing {}", path.display()), e))?;
        out.write_all(b"\n").map_err(io_at(path))
    })
}

pub fn print_json<T: Serialize>(value: &T) {
    println!("{}", serde_json::to_string(value).expect("report types serialize"));
}
