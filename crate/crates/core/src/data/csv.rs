use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use crate::dataset::{EnvBlock, MultiEnvDataset};
use crate::error::{Error, Result};

fn parse_cell(cell: &str, line: usize, column: &str) -> Result<f64> {
    let cell = cell.trim();
    if cell.is_empty() {
        return Err(Error::Parse { row: line, message: format!("missing value in column `{column}`") });
    }
    cell.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| Error::Parse { row: line, message: format!("column `{column}`: `{cell}` is not a finite number") })
}

/// Reads `env,t,y[,x1,…,xp]`. Environments keep their order of first
/// appearance and rows keep file order within each environment. Row numbers
/// in errors are file line numbers (the header is line 1).
pub fn read_multi_env_csv<R: Read>(reader: R) -> Result<MultiEnvDataset> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).trim(csv::Trim::All).from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header.len() < 3 || header[0] != "env" || header[1] != "t" || header[2] != "y" {
        return Err(Error::Parse { row: 1, message: format!("header must start with env,t,y; got {}", header.join(",")) });
    }
    let p = header.len() - 3;
    let mut blocks: Vec<EnvBlock> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    for (k, record) in rdr.records().enumerate() {
        let record = record?;
        let line = k + 2;
        if record.len() != header.len() {
            return Err(Error::Parse {
                row: line,
                message: format!("expected {} columns, found {}", header.len(), record.len()),
            });
        }
        let env = record[0].to_string();
        if env.is_empty() {
            return Err(Error::Parse { row: line, message: "missing value in column `env`".into() });
        }
        let t = parse_cell(&record[1], line, "t")?;
        let y = parse_cell(&record[2], line, "y")?;
        let next = blocks.len();
        let b = *index.entry(env.clone()).or_insert(next);
        if b == next {
            blocks.push(EnvBlock::new(env, vec![], vec![], vec![Vec::new(); p]));
        }
        let block = &mut blocks[b];
        block.t.push(t);
        block.y.push(y);
        for c in 0..p {
            block.x[c].push(parse_cell(&record[3 + c], line, &header[3 + c])?);
        }
    }
    if blocks.len() < 2 {
        return Err(Error::Usage(format!("dataset needs at least 2 environments, found {}", blocks.len())));
    }
    MultiEnvDataset::new(blocks)
}

pub fn load_multi_env_csv(path: impl AsRef<Path>) -> Result<MultiEnvDataset> {
    read_multi_env_csv(std::fs::File::open(path)?)
}

/// Writes blocks in order with header `env,t,y,x1,…,xp`. Numbers use the
/// shortest representation that parses back to the same value.
pub fn write_multi_env_csv<W: Write>(data: &MultiEnvDataset, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["env".to_string(), "t".into(), "y".into()];
    header.extend((1..=data.n_covariates()).map(|c| format!("x{c}")));
    w.write_record(&header)?;
    let mut row = Vec::with_capacity(header.len());
    for b in data.blocks() {
        for r in 0..b.len() {
            row.clear();
            row.push(b.env_id.clone());
            row.push(b.t[r].to_string());
            row.push(b.y[r].to_string());
            row.extend(b.x.iter().map(|c| c[r].to_string()));
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn save_multi_env_csv(data: &MultiEnvDataset, path: impl AsRef<Path>) -> Result<()> {
    write_multi_env_csv(data, std::io::BufWriter::new(std::fs::File::create(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_small_file() {
        let d = read_multi_env_csv("env,t,y\na,0,1\nb,1,0\na,1,1\nb,0,0\n".as_bytes()).unwrap();
        assert_eq!(d.n_envs(), 2);
        assert_eq!(d.n_covariates(), 0);
        assert!(d.blocks().iter().all(|b| b.len() == 2));
        assert_eq!(d.blocks()[0].t, vec![0.0, 1.0]);
    }

    #[test]
    fn errors_name_row_and_column() {
        match read_multi_env_csv("env,t,y,x1\na,0,1,2\nb,1,zz,3\n".as_bytes()) {
            Err(Error::Parse { row, message }) => {
                assert_eq!(row, 3);
                assert!(message.contains("`y`"));
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(read_multi_env_csv("env,t,y\na,0,\nb,1,1\n".as_bytes()), Err(Error::Parse { row: 2, .. })));
        assert!(matches!(read_multi_env_csv("env,t,y\na,0,1,5\nb,1,1\n".as_bytes()), Err(Error::Parse { row: 2, .. })));
        assert!(matches!(read_multi_env_csv("env,t,y\na,0,1\na,1,1\n".as_bytes()), Err(Error::Usage(_))));
        assert!(matches!(read_multi_env_csv("site,t,y\na,0,1\n".as_bytes()), Err(Error::Parse { row: 1, .. })));
    }

    #[test]
    fn write_then_read() {
        let text = "env,t,y,x1\nk1,0.1,-2.5,3\nk0,1e-7,4,5\nk1,2,3,1\n";
        let d = read_multi_env_csv(text.as_bytes()).unwrap();
        let mut buf = Vec::new();
        write_multi_env_csv(&d, &mut buf).unwrap();
        assert_eq!(read_multi_env_csv(buf.as_slice()).unwrap(), d);
    }
}
