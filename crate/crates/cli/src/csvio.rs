//! Channel-per-row CSV files.
//!
//! Each data row is `channel_id, x_1, …, x_T`. An optional first row holds
//! sample indices; it is recognised by a first cell of `channel`, `id` or
//! nothing. With `transpose` the grid is flipped before that rule applies,
//! so sample-per-row exports can be read directly.

use fisherwatch::StateMatrix;

use crate::failure::Failure;

fn is_header(first_cell: &str) -> bool {
    matches!(first_cell.trim().to_ascii_lowercase().as_str(), "" | "channel" | "id")
}

fn read_grid(text: &str) -> Result<Vec<Vec<String>>, Failure> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut grid = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Failure::input("parse", format!("CSV row {}: {e}", i + 1)))?;
        if rec.len() == 1 && rec[0].is_empty() {
            continue;
        }
        grid.push(rec.iter().map(str::to_string).collect());
    }
    Ok(grid)
}

fn transpose(grid: Vec<Vec<String>>) -> Result<Vec<Vec<String>>, Failure> {
    let width = grid.first().map_or(0, Vec::len);
    if let Some((i, _)) = grid.iter().enumerate().find(|(_, r)| r.len() != width) {
        return Err(Failure::shape("shape", format!("row {} has a different length; cannot transpose", i + 1)));
    }
    Ok((0..width).map(|j| grid.iter().map(|r| r[j].clone()).collect()).collect())
}

/// Parses CSV text into a state matrix.
pub fn parse(text: &str, transposed: bool) -> Result<StateMatrix, Failure> {
    let mut grid = read_grid(text)?;
    if grid.is_empty() {
        return Err(Failure::input("empty-input", "input contains no rows"));
    }
    if transposed {
        grid = transpose(grid)?;
    }
    let skip = usize::from(is_header(&grid[0][0]));
    let body = &grid[skip..];
    let mut ids = Vec::with_capacity(body.len());
    let mut rows = Vec::with_capacity(body.len());
    for (i, rec) in body.iter().enumerate() {
        let line = i + skip + 1;
        ids.push(rec[0].clone());
        let values = rec[1..]
            .iter()
            .enumerate()
            .map(|(j, cell)| {
                cell.parse::<f64>().map_err(|_| {
                    Failure::input("parse", format!("row {line}, column {}: '{cell}' is not a number", j + 2))
                })
            })
            .collect::<Result<Vec<f64>, _>>()?;
        rows.push(values);
    }
    Ok(StateMatrix::from_rows(&rows)?.with_channel_ids(ids)?)
}

/// Writes the canonical layout: a header of sample indices, then one row per
/// channel. Values use the shortest representation that parses back exactly.
pub fn render(x: &StateMatrix) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let header = std::iter::once("channel".to_string()).chain((1..=x.t()).map(|t| t.to_string()));
    w.write_record(header).expect("writing to memory");
    for (i, id) in x.channel_ids().iter().enumerate() {
        let values = x.values().row(i);
        let row = std::iter::once(id.clone()).chain(values.iter().map(|v| v.to_string()));
        w.write_record(row).expect("writing to memory");
    }
    w.into_inner().expect("flushing to memory")
}
