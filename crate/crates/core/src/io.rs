//! Text formats: edge lists, node attribute and trait-state CSVs, partition
//! CSVs and trajectory CSVs.
//!
//! CSV readers skip lines starting with `#`, which is where experiment
//! outputs put their metadata.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::community::Partition;
use crate::dynamics::{CulturalState, TrajectoryRecord};
use crate::error::{Error, Result};
use crate::graph::{Graph, SocialTypes};

/// Opens `path` and hands a buffered reader to `parse`, attaching the path to
/// any error.
pub fn read_path<T>(path: &Path, parse: impl FnOnce(BufReader<File>) -> Result<T>) -> Result<T> {
    let file = File::open(path).map_err(|source| Error::Io {
        path: path.to_owned(),
        source,
    })?;
    parse(BufReader::new(file)).map_err(|e| match e {
        Error::Stream(source) => Error::Io {
            path: path.to_owned(),
            source,
        },
        other => Error::File {
            path: path.to_owned(),
            source: Box::new(other),
        },
    })
}

/// Creates `path` and hands a buffered writer to `emit`, flushing at the end.
pub fn write_path(
    path: &Path,
    emit: impl FnOnce(&mut BufWriter<File>) -> Result<()>,
) -> Result<()> {
    let io_err = |source| Error::Io {
        path: path.to_owned(),
        source,
    };
    let mut w = BufWriter::new(File::create(path).map_err(io_err)?);
    emit(&mut w).map_err(|e| match e {
        Error::Stream(source) => io_err(source),
        other => other,
    })?;
    w.flush().map_err(io_err)
}

/// One `u v` line per edge, `u < v`, ascending.
pub fn write_edge_list<W: Write + ?Sized>(g: &Graph, w: &mut W) -> Result<()> {
    for &(u, v) in g.edges() {
        writeln!(w, "{u} {v}")?;
    }
    Ok(())
}

/// Parses an edge list. The node count is `min_nodes` or one more than the
/// largest id seen, whichever is larger. Blank lines and `#` lines are
/// skipped; pairs may appear in either orientation.
pub fn read_edge_list<R: BufRead>(r: R, min_nodes: Option<usize>) -> Result<Graph> {
    let mut pairs = Vec::new();
    let mut n = min_nodes.unwrap_or(0);
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut fields = line.split_whitespace();
        let mut id = || -> Result<usize> {
            let tok = fields
                .next()
                .ok_or_else(|| Error::parse(i + 1, "expected two node ids"))?;
            tok.parse()
                .map_err(|_| Error::parse(i + 1, format!("invalid node id {tok:?}")))
        };
        let (u, v) = (id()?, id()?);
        if fields.next().is_some() {
            return Err(Error::parse(i + 1, "trailing fields after edge"));
        }
        n = n.max(u + 1).max(v + 1);
        pairs.push((u, v));
    }
    Graph::from_edges(n, pairs)
}

fn csv_reader<R: Read>(r: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(r)
}

/// Collects node-indexed rows, requiring every id in `0..n` exactly once.
fn dense_by_node<T: Copy>(rows: Vec<(usize, T)>) -> Result<Vec<T>> {
    let n = rows.len();
    let mut out: Vec<Option<T>> = vec![None; n];
    for (line, (node, value)) in rows.into_iter().enumerate() {
        let slot = out
            .get_mut(node)
            .ok_or_else(|| Error::parse(line + 2, format!("node {node} outside 0..{n}")))?;
        if slot.replace(value).is_some() {
            return Err(Error::parse(line + 2, format!("node {node} listed twice")));
        }
    }
    Ok(out
        .into_iter()
        .map(|v| v.expect("n rows, n distinct ids"))
        .collect())
}

#[derive(Serialize, Deserialize)]
struct AttributeRow {
    node: usize,
    social_type: u8,
}

/// `node,social_type` CSV.
pub fn write_attributes<W: Write + ?Sized>(types: &SocialTypes, w: &mut W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for (node, &social_type) in types.as_slice().iter().enumerate() {
        out.serialize(AttributeRow { node, social_type })?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_attributes<R: Read>(r: R) -> Result<SocialTypes> {
    let rows = csv_reader(r)
        .deserialize::<AttributeRow>()
        .map(|row| row.map(|a| (a.node, a.social_type)))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    SocialTypes::new(dense_by_node(rows)?)
}

#[derive(Serialize, Deserialize)]
struct TraitRow {
    node: usize,
    social_type: u8,
    #[serde(rename = "trait")]
    trait_value: u8,
}

/// `node,social_type,trait` CSV.
pub fn write_trait_state<W: Write + ?Sized>(
    types: &SocialTypes,
    state: &CulturalState,
    w: &mut W,
) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for (node, (&social_type, &trait_value)) in
        types.as_slice().iter().zip(state.as_slice()).enumerate()
    {
        out.serialize(TraitRow {
            node,
            social_type,
            trait_value,
        })?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_trait_state<R: Read>(r: R) -> Result<(SocialTypes, CulturalState)> {
    let rows = csv_reader(r)
        .deserialize::<TraitRow>()
        .map(|row| row.map(|t| (t.node, (t.social_type, t.trait_value))))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let (types, traits): (Vec<u8>, Vec<u8>) = dense_by_node(rows)?.into_iter().unzip();
    Ok((SocialTypes::new(types)?, CulturalState::new(traits)?))
}

#[derive(Serialize, Deserialize)]
struct PartitionRow {
    node: usize,
    community: usize,
}

/// `node,community` CSV with dense community ids.
pub fn write_partition<W: Write + ?Sized>(p: &Partition, w: &mut W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for (node, &community) in p.membership().iter().enumerate() {
        out.serialize(PartitionRow { node, community })?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_partition<R: Read>(r: R) -> Result<Partition> {
    let rows = csv_reader(r)
        .deserialize::<PartitionRow>()
        .map(|row| row.map(|p| (p.node, p.community)))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    Ok(Partition::from_membership(&dense_by_node(rows)?))
}

pub const TRAJECTORY_HEADER: &str = "replicate,step,sweep,chi2,n00,n01,n10,n11,absorbed";

/// Writes the header line of a trajectory CSV.
pub fn write_trajectory_header<W: Write + ?Sized>(w: &mut W) -> Result<()> {
    writeln!(w, "{TRAJECTORY_HEADER}")?;
    Ok(())
}

/// Appends one row per sample of `record`.
pub fn write_trajectory_rows<W: Write + ?Sized>(
    replicate: usize,
    record: &TrajectoryRecord,
    w: &mut W,
) -> Result<()> {
    for s in &record.samples {
        let [[n00, n01], [n10, n11]] = s.table.counts;
        writeln!(
            w,
            "{replicate},{},{},{},{n00},{n01},{n10},{n11},{}",
            s.step,
            s.step as f64 / record.n as f64,
            s.chi2,
            s.absorbed
        )?;
    }
    Ok(())
}

/// Writes `metadata` as a single `# ` comment line of compact JSON.
pub fn write_metadata_comment<W: Write + ?Sized, M: Serialize>(
    metadata: &M,
    w: &mut W,
) -> Result<()> {
    writeln!(w, "# {}", serde_json::to_string(metadata)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{run, RunConfig, Stepper};
    use crate::rng::seeded;

    #[test]
    fn edge_list_format() {
        let g = Graph::from_edges(5, [(3, 1), (0, 4), (0, 1)]).unwrap();
        let mut buf = Vec::new();
        write_edge_list(&g, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf.clone()).unwrap(), "0 1\n0 4\n1 3\n");
        assert_eq!(read_edge_list(&buf[..], Some(5)).unwrap(), g);
        // Isolated trailing nodes need the hint.
        assert_eq!(read_edge_list(&buf[..], None).unwrap().node_count(), 5);
        assert_eq!(
            read_edge_list(&b"0 1\n"[..], Some(4)).unwrap().node_count(),
            4
        );
    }

    #[test]
    fn edge_list_errors_carry_line_numbers() {
        let err = read_edge_list(&b"0 1\n1 x\n"[..], None).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
        assert!(read_edge_list(&b"0 0\n"[..], None).is_err());
        assert!(read_edge_list(&b"0 1 2\n"[..], None).is_err());
    }

    #[test]
    fn attribute_and_trait_files() {
        let types = SocialTypes::new(vec![0, 1, 1]).unwrap();
        let state = CulturalState::new(vec![1, 0, 1]).unwrap();
        let mut buf = Vec::new();
        write_attributes(&types, &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf.clone()).unwrap(),
            "node,social_type\n0,0\n1,1\n2,1\n"
        );
        assert_eq!(read_attributes(&buf[..]).unwrap(), types);

        let mut buf = Vec::new();
        write_trait_state(&types, &state, &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf.clone()).unwrap(),
            "node,social_type,trait\n0,0,1\n1,1,0\n2,1,1\n"
        );
        assert_eq!(read_trait_state(&buf[..]).unwrap(), (types, state));
    }

    #[test]
    fn rows_may_be_unordered_but_not_sparse() {
        let types = read_attributes(&b"node,social_type\n1,1\n0,0\n"[..]).unwrap();
        assert_eq!(types.as_slice(), &[0, 1]);
        assert!(read_attributes(&b"node,social_type\n0,0\n2,1\n"[..]).is_err());
        assert!(read_attributes(&b"node,social_type\n0,0\n0,1\n"[..]).is_err());
        assert!(read_attributes(&b"node,social_type\n0,3\n"[..]).is_err());
    }

    #[test]
    fn partition_file() {
        let p = Partition::from_membership(&[5, 5, 2, 9]);
        let mut buf = Vec::new();
        write_partition(&p, &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf.clone()).unwrap(),
            "node,community\n0,0\n1,0\n2,1\n3,2\n"
        );
        assert_eq!(read_partition(&buf[..]).unwrap(), p);
    }

    #[test]
    fn trajectory_rows_conserve_population() {
        let g = Graph::complete(6);
        let types = SocialTypes::new(vec![0, 0, 0, 1, 1, 1]).unwrap();
        let s0 = CulturalState::new(vec![0, 1, 0, 1, 0, 1]).unwrap();
        let rec = run(
            &g,
            &types,
            s0,
            Stepper::Neutral,
            RunConfig::new(60, 6),
            &mut seeded(2),
        )
        .unwrap();
        let mut buf = Vec::new();
        write_trajectory_header(&mut buf).unwrap();
        write_trajectory_rows(3, &rec, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some(TRAJECTORY_HEADER));
        for line in lines {
            let f: Vec<&str> = line.split(',').collect();
            assert_eq!(f[0], "3");
            let total: u64 = f[4..8].iter().map(|x| x.parse::<u64>().unwrap()).sum();
            assert_eq!(total, 6);
        }
    }

    #[test]
    fn comments_are_skipped() {
        let text = b"# {\"version\":\"x\"}\nnode,community\n0,0\n1,1\n";
        assert_eq!(read_partition(&text[..]).unwrap().len(), 2);
    }
}
