//! Optional socket transport for the federation protocol: length-prefixed
//! messages over a local TCP stream, with ParameterSet payloads in the
//! checkpoint entry encoding. A round is a barrier — the server aggregates
//! only after every client has submitted.

use std::io::{Read, Write};
use std::net::{TcpListener, TcpStream};

use crate::error::{CoreError, Result};
use crate::params::ParameterSet;

use super::{derive_weights, fedgan_aggregate, ClientState, WeightingMode};

const TAG_ROUND_BEGIN: u8 = 1;
const TAG_SUBMIT: u8 = 2;
const TAG_ROUND_RESULT: u8 = 3;

#[derive(Debug, Clone)]
pub enum Message {
    /// Server -> client: a round starts; carries the current global generator.
    RoundBegin {
        round_index: u64,
        global_gen: ParameterSet,
    },
    /// Client -> server: post-epoch parameters plus the aggregation weight
    /// basis.
    Submit {
        client_id: String,
        dataset_size: u64,
        gen: ParameterSet,
        disc: ParameterSet,
    },
    /// Server -> client: aggregated generator and discriminator.
    RoundResult {
        gen: ParameterSet,
        disc: ParameterSet,
    },
}

fn proto_err(reason: &str) -> CoreError {
    CoreError::Transport(reason.to_string())
}

pub fn write_message<W: Write>(w: &mut W, msg: &Message) -> Result<()> {
    let mut payload = Vec::new();
    match msg {
        Message::RoundBegin {
            round_index,
            global_gen,
        } => {
            payload.push(TAG_ROUND_BEGIN);
            payload.extend(round_index.to_le_bytes());
            global_gen.encode_into(&mut payload)?;
        }
        Message::Submit {
            client_id,
            dataset_size,
            gen,
            disc,
        } => {
            payload.push(TAG_SUBMIT);
            let id = client_id.as_bytes();
            payload.extend((id.len() as u16).to_le_bytes());
            payload.extend(id);
            payload.extend(dataset_size.to_le_bytes());
            gen.encode_into(&mut payload)?;
            disc.encode_into(&mut payload)?;
        }
        Message::RoundResult { gen, disc } => {
            payload.push(TAG_ROUND_RESULT);
            gen.encode_into(&mut payload)?;
            disc.encode_into(&mut payload)?;
        }
    }
    w.write_all(&(payload.len() as u32).to_le_bytes())?;
    w.write_all(&payload)?;
    w.flush()?;
    Ok(())
}

pub fn read_message<R: Read>(r: &mut R) -> Result<Message> {
    let mut len_buf = [0u8; 4];
    r.read_exact(&mut len_buf)?;
    let len = u32::from_le_bytes(len_buf) as usize;
    let mut payload = vec![0u8; len];
    r.read_exact(&mut payload)?;
    let mut cur = payload.as_slice();
    let tag = {
        let mut b = [0u8; 1];
        cur.read_exact(&mut b)?;
        b[0]
    };
    match tag {
        TAG_ROUND_BEGIN => {
            let mut b = [0u8; 8];
            cur.read_exact(&mut b)?;
            Ok(Message::RoundBegin {
                round_index: u64::from_le_bytes(b),
                global_gen: ParameterSet::decode_from(&mut cur)?,
            })
        }
        TAG_SUBMIT => {
            let mut b2 = [0u8; 2];
            cur.read_exact(&mut b2)?;
            let id_len = u16::from_le_bytes(b2) as usize;
            let mut id = vec![0u8; id_len];
            cur.read_exact(&mut id)?;
            let client_id =
                String::from_utf8(id).map_err(|_| proto_err("client id is not UTF-8"))?;
            let mut b8 = [0u8; 8];
            cur.read_exact(&mut b8)?;
            Ok(Message::Submit {
                client_id,
                dataset_size: u64::from_le_bytes(b8),
                gen: ParameterSet::decode_from(&mut cur)?,
                disc: ParameterSet::decode_from(&mut cur)?,
            })
        }
        TAG_ROUND_RESULT => Ok(Message::RoundResult {
            gen: ParameterSet::decode_from(&mut cur)?,
            disc: ParameterSet::decode_from(&mut cur)?,
        }),
        other => Err(proto_err(&format!("unknown message tag {other}"))),
    }
}

/// Server side: drives `num_rounds` rounds over connected clients and returns
/// the final aggregated (generator, discriminator). Submissions are processed
/// in client_id order so aggregation matches the in-process path bit-exactly.
pub fn serve_federation(
    listener: &TcpListener,
    num_clients: usize,
    num_rounds: usize,
    mode: WeightingMode,
    initial_gen: &ParameterSet,
) -> Result<(ParameterSet, ParameterSet)> {
    if num_clients == 0 || num_rounds == 0 {
        return Err(CoreError::InvalidConfig("need >= 1 client and >= 1 round".into()));
    }
    let mut streams = Vec::with_capacity(num_clients);
    for _ in 0..num_clients {
        let (stream, _) = listener.accept()?;
        streams.push(stream);
    }
    let mut global_gen = initial_gen.clone();
    let mut last: Option<(ParameterSet, ParameterSet)> = None;
    for round_index in 0..num_rounds {
        for stream in &mut streams {
            write_message(
                stream,
                &Message::RoundBegin {
                    round_index: round_index as u64,
                    global_gen: global_gen.clone(),
                },
            )?;
        }
        let mut submissions = Vec::with_capacity(num_clients);
        for stream in &mut streams {
            match read_message(stream)? {
                Message::Submit {
                    client_id,
                    dataset_size,
                    gen,
                    disc,
                } => submissions.push((client_id, dataset_size, gen, disc)),
                _ => return Err(proto_err("expected SUBMIT")),
            }
        }
        submissions.sort_by(|a, b| a.0.cmp(&b.0));
        let sizes: Vec<usize> = submissions.iter().map(|s| s.1 as usize).collect();
        let weights = derive_weights(&sizes, mode);
        let g_sets: Vec<ParameterSet> = submissions.iter().map(|s| s.2.clone()).collect();
        let d_sets: Vec<ParameterSet> = submissions.iter().map(|s| s.3.clone()).collect();
        let agg_g = fedgan_aggregate(&g_sets, &weights)?;
        let agg_d = fedgan_aggregate(&d_sets, &weights)?;
        for stream in &mut streams {
            write_message(
                stream,
                &Message::RoundResult {
                    gen: agg_g.clone(),
                    disc: agg_d.clone(),
                },
            )?;
        }
        global_gen = agg_g.clone();
        last = Some((agg_g, agg_d));
    }
    Ok(last.expect("at least one round"))
}

/// Client side: participates in `num_rounds` rounds over the stream.
pub fn run_remote_client(
    stream: &mut TcpStream,
    client: &mut ClientState,
    num_rounds: usize,
) -> Result<()> {
    for expected_round in 0..num_rounds {
        match read_message(stream)? {
            Message::RoundBegin {
                round_index,
                global_gen,
            } => {
                if round_index != expected_round as u64 {
                    return Err(proto_err(&format!(
                        "round index {round_index}, expected {expected_round}"
                    )));
                }
                client.generator.import_parameters(&global_gen)?;
            }
            _ => return Err(proto_err("expected ROUND_BEGIN")),
        }
        client.train_round(expected_round)?;
        write_message(
            stream,
            &Message::Submit {
                client_id: client.client_id.clone(),
                dataset_size: client.dataset_size() as u64,
                gen: client.generator.export_parameters(),
                disc: client.discriminator.export_parameters(),
            },
        )?;
        match read_message(stream)? {
            Message::RoundResult { gen, disc } => {
                client.generator.import_parameters(&gen)?;
                client.discriminator.import_parameters(&disc)?;
            }
            _ => return Err(proto_err("expected ROUND_RESULT")),
        }
    }
    Ok(())
}
