//! Wire format, reliable delivery, command envelopes and the simulated
//! transport engine.

pub mod arq;
pub mod command;
pub mod frame;
pub mod net;
pub mod session;

pub use arq::{ArqConfig, ArqReceiver, ArqSender, RtoPolicy};
pub use command::{CommandCaps, CommandMessage, CommandReply, Gait};
pub use frame::{decode_frame, encode_frame, Decoded, Flags, Frame, FrameError, MsgType};
pub use net::{AppEvent, ArqError, MsgId, NetError, NetOptions, Network};
pub use session::{AuthMessage, ClientSession, SessionId, SignedCommand};
