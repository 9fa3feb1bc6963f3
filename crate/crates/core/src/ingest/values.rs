//! Small tables consumed by the statistics commands: labelled value lists,
//! two-column pairs and undirected neighbour edge lists.

use std::io::Read;

use super::{field, parse_f64, parse_rows, IngestError, Strictness};

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledValue {
    pub id: Option<String>,
    pub value: f64,
}

/// Reads one numeric column plus an optional id column (`geoid`, `GEOID` or
/// `id`). Rows whose value field is empty are skipped, so absent measures in
/// an output table drop out.
pub fn read_values<R: Read>(input: R, column: &str) -> Result<Vec<LabeledValue>, IngestError> {
    let parsed = parse_rows(input, Strictness::Strict, |cols| {
        let value = cols.require(column)?;
        let id = ["geoid", "GEOID", "id"].iter().find_map(|c| cols.optional(c));
        let name = column.to_string();
        Ok(move |row: usize, rec: &csv::StringRecord| {
            let text = field(rec, value);
            if text.is_empty() {
                return Ok(None);
            }
            Ok(Some(LabeledValue {
                id: id.map(|i| field(rec, i).to_string()),
                value: parse_f64(row, &name, text)?,
            }))
        })
    })?;
    Ok(parsed.records.into_iter().flatten().collect())
}

/// Reads two numeric columns, returning them as parallel vectors.
pub fn read_pairs<R: Read>(
    input: R,
    x_column: &str,
    y_column: &str,
) -> Result<(Vec<f64>, Vec<f64>), IngestError> {
    let parsed = parse_rows(input, Strictness::Strict, |cols| {
        let x = cols.require(x_column)?;
        let y = cols.require(y_column)?;
        let (xn, yn) = (x_column.to_string(), y_column.to_string());
        Ok(move |row: usize, rec: &csv::StringRecord| {
            Ok((
                parse_f64(row, &xn, field(rec, x))?,
                parse_f64(row, &yn, field(rec, y))?,
            ))
        })
    })?;
    Ok(parsed.records.into_iter().unzip())
}

/// Reads `geoid_a,geoid_b` undirected neighbour pairs.
pub fn read_edges<R: Read>(input: R) -> Result<Vec<(String, String)>, IngestError> {
    let parsed = parse_rows(input, Strictness::Strict, |cols| {
        let a = cols.require("geoid_a")?;
        let b = cols.require("geoid_b")?;
        Ok(move |_row: usize, rec: &csv::StringRecord| {
            Ok((field(rec, a).to_string(), field(rec, b).to_string()))
        })
    })?;
    Ok(parsed.records)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn values_with_and_without_ids() {
        let v = read_values("geoid,value\n01,1.5\n02,2\n03,\n".as_bytes(), "value").unwrap();
        assert_eq!(v.len(), 2);
        assert_eq!(v[1].id.as_deref(), Some("02"));
        assert_eq!(v[1].value, 2.0);
        let v = read_values("value\n3\n".as_bytes(), "value").unwrap();
        assert_eq!(v[0].id, None);
    }

    #[test]
    fn pairs_by_column_name() {
        let (x, y) = read_pairs("y,x\n1,2\n3,4\n".as_bytes(), "x", "y").unwrap();
        assert_eq!(x, vec![2.0, 4.0]);
        assert_eq!(y, vec![1.0, 3.0]);
    }
}
