//! CSV trajectories: `round,t,state,action,reward,next_state`.

use std::io::{Read, Write};

use super::{MdpError, Transition};
use crate::format_float;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryRecord {
    pub round: usize,
    pub transition: Transition,
}

impl TrajectoryRecord {
    /// Numbers rounds from 0; a new round starts after every transition into `start`.
    pub fn number_rounds(transitions: &[Transition], start: usize) -> Vec<TrajectoryRecord> {
        let mut round = 0;
        transitions
            .iter()
            .map(|&transition| {
                let rec = TrajectoryRecord { round, transition };
                if transition.next_state == start {
                    round += 1;
                }
                rec
            })
            .collect()
    }
}

const HEADER: [&str; 6] = ["round", "t", "state", "action", "reward", "next_state"];

fn io(e: impl std::fmt::Display) -> MdpError {
    MdpError::Io(e.to_string())
}

pub fn write_trajectory<W: Write>(out: W, records: &[TrajectoryRecord]) -> Result<(), MdpError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(HEADER).map_err(io)?;
    for r in records {
        let t = &r.transition;
        w.write_record([
            r.round.to_string(),
            t.t.to_string(),
            t.state.to_string(),
            t.action.to_string(),
            format_float(t.reward),
            t.next_state.to_string(),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn read_trajectory<R: Read>(input: R) -> Result<Vec<TrajectoryRecord>, MdpError> {
    let mut rd = csv::Reader::from_reader(input);
    let headers = rd.headers().map_err(io)?.clone();
    if headers.iter().collect::<Vec<_>>() != HEADER {
        return Err(MdpError::Io(format!("expected header {}", HEADER.join(","))));
    }
    let mut out = Vec::new();
    for (line, rec) in rd.records().enumerate() {
        let rec = rec.map_err(io)?;
        let field = |i: usize| rec.get(i).unwrap_or("").trim();
        let int = |i: usize| {
            field(i).parse::<usize>().map_err(|e| MdpError::Io(format!("row {}: {}: {e}", line + 1, HEADER[i])))
        };
        let reward = field(4)
            .parse::<f64>()
            .map_err(|e| MdpError::Io(format!("row {}: reward: {e}", line + 1)))?;
        out.push(TrajectoryRecord {
            round: int(0)?,
            transition: Transition { t: int(1)?, state: int(2)?, action: int(3)?, reward, next_state: int(5)? },
        });
    }
    Ok(out)
}
