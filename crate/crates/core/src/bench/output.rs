//! CSV emission and re-ingestion of run records.

use std::io::{Read, Write};
use std::path::Path;

use super::RunRecord;
use crate::error::{Error, Result};

pub const CSV_HEADER: &str = "rep,method,learner,model,pattern,p,rho,n_train,n_test,r2,fit_ms,predict_ms";

pub fn write_csv<W: Write>(writer: W, records: &[RunRecord]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
    w.write_record(CSV_HEADER.split(','))?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn emit_csv(records: &[RunRecord], path: impl AsRef<Path>) -> Result<()> {
    if records.is_empty() {
        return Err(Error::Empty("no records to write".into()));
    }
    write_csv(std::fs::File::create(path)?, records)
}

pub fn read_csv<R: Read>(reader: R) -> Result<Vec<RunRecord>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    if header.join(",") != CSV_HEADER {
        return Err(Error::Parse(format!("unexpected header {:?}", header.join(","))));
    }
    rdr.deserialize().map(|r| r.map_err(Error::from)).collect()
}
