//! Simulator of a ransomware-resilient SSD: an FTL that retains every
//! overwritten or trimmed page, hash-chain-logs every operation, offloads
//! retained history to a remote vault before anything is erased, and can
//! restore any logical range to any earlier moment.

pub mod config;
pub mod device;
pub mod ftl;
pub mod harness;
pub mod nand;
pub mod offload;
pub mod oplog;
pub mod recovery;
pub mod report;
pub mod transport;
pub mod vault;
pub mod wire;

pub use config::RunConfig;
pub use device::{DeviceConfig, DeviceError, SsdDevice};
pub use ftl::{Ftl, FtlConfig, FtlError, Lpa, PageLifecycle};
pub use harness::{AttackKind, AttackParams, Harness, ShadowOracle, TraceOp};
pub use nand::{Geometry, NandArray, PhysPageAddr};
pub use offload::{Compression, DeviceKey};
pub use oplog::{ChainVerdict, Digest, LogEntry, OpKind, OpLog, Seq, SimNs};
pub use recovery::{EvidenceChain, VersionChain};
pub use transport::{FaultPlan, InProcLink, TcpLink, VaultLink, VaultServer};
pub use vault::{IngestOutcome, NackReason, Vault};
