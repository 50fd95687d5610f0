//! One AirComp aggregation round, end to end: messages, masking, channel
//! inversion precoding over real fading, superposition with AWGN, and the
//! server-side estimate.

mod channel;
mod config;
mod round;
mod schemes;

pub use channel::{
    draw_awgn, draw_channel, rician_gain, transmit_and_superpose, ChannelRealization, Transmission,
};
pub use config::{db_to_linear, linear_to_db, MessageModel, ProtocolConfig};
pub use round::{
    decode_baseline, decode_p2, encode_p2, run_round, sample_messages, write_round_traces,
    RoundResult,
};
pub use schemes::{encode_baseline, BaselineMasks, NoiseScheme};
