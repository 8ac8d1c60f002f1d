//! Benchmarks for the hot paths: the host write path (with and without
//! version retention), frame encode/decode, and evidence-chain verification.

use criterion::{criterion_group, criterion_main, BatchSize, Criterion, Throughput};
use rssd_core::ftl::FtlConfig;
use rssd_core::harness::page_payload;
use rssd_core::offload::{decode_frame, encode_frame, OffloadSegment, PageRecord};
use rssd_core::oplog::{verify_entries, LogEntry, OpKind, OpLog, SealPolicy, GENESIS_HASH};
use rssd_core::{ChainVerdict, Compression, DeviceConfig, DeviceKey, Geometry, SsdDevice};

const SIM_MS: u64 = 1_000_000;

fn key() -> DeviceKey {
    DeviceKey([7u8; 32])
}

fn bench_geometry() -> Geometry {
    Geometry {
        channels: 1,
        chips_per_channel: 1,
        blocks_per_chip: 64,
        pages_per_block: 64,
        page_size: 4096,
    }
}

fn fresh_device(retention: bool) -> SsdDevice {
    let geometry = bench_geometry();
    let ftl = if retention {
        FtlConfig::new(geometry)
    } else {
        FtlConfig::baseline(geometry)
    };
    SsdDevice::new(DeviceConfig::new(ftl, key()), None).unwrap()
}

/// Sequential overwrite churn across a small working set, enough to exercise
/// allocation, logging, invalidation, and GC.
fn churn(device: &mut SsdDevice, ops: u64) {
    let page_size = bench_geometry().page_size as usize;
    let span = 256;
    for i in 0..ops {
        let lpa = i % span;
        let data = page_payload(i, lpa, page_size);
        device.write(lpa, &data, (i + 1) * SIM_MS).unwrap();
    }
}

fn write_path(c: &mut Criterion) {
    let ops = 2000u64;
    let mut g = c.benchmark_group("write_path");
    g.throughput(Throughput::Elements(ops));
    g.bench_function("retention_on", |b| {
        b.iter_batched(
            || fresh_device(true),
            |mut d| churn(&mut d, ops),
            BatchSize::LargeInput,
        )
    });
    g.bench_function("retention_off", |b| {
        b.iter_batched(
            || fresh_device(false),
            |mut d| churn(&mut d, ops),
            BatchSize::LargeInput,
        )
    });
    g.finish();
}

fn sample_entries(n: u64) -> Vec<LogEntry> {
    let mut log = OpLog::new(SealPolicy {
        max_entries: usize::MAX,
        max_span_ns: u64::MAX,
    });
    for i in 0..n {
        log.append(
            OpKind::Write,
            Some((i % 64, 1)),
            None,
            Some([i as u8; 32]),
            (i + 1) * SIM_MS,
        );
    }
    log.seal_segment().unwrap().entries.clone()
}

fn sample_segment(pages: usize) -> OffloadSegment {
    let entries = sample_entries(pages as u64);
    let page_records = entries
        .iter()
        .map(|e| PageRecord {
            write_seq: e.seq,
            lpa: e.lpa_range.unwrap().0,
            timestamp: e.timestamp,
            data: page_payload(e.seq, e.lpa_range.unwrap().0, 4096),
        })
        .collect();
    OffloadSegment {
        segment_id: 1,
        prev_tail_hash: GENESIS_HASH,
        page_records,
        log_segments: Vec::new(),
    }
}

fn frame_codec(c: &mut Criterion) {
    let segment = sample_segment(64);
    let wire_len = segment.to_wire().len() as u64;
    let mut g = c.benchmark_group("frame_codec");
    g.throughput(Throughput::Bytes(wire_len));
    for compression in [Compression::None, Compression::Lz4] {
        let label = match compression {
            Compression::None => "none",
            Compression::Lz4 => "lz4",
        };
        g.bench_function(format!("encode_{label}"), |b| {
            b.iter(|| encode_frame(&segment, &key(), compression))
        });
        let frame = encode_frame(&segment, &key(), compression);
        g.bench_function(format!("decode_{label}"), |b| {
            b.iter(|| decode_frame(&frame, &key()).unwrap())
        });
    }
    g.finish();
}

fn chain_verify(c: &mut Criterion) {
    let entries = sample_entries(4096);
    let mut g = c.benchmark_group("chain_verify");
    g.throughput(Throughput::Elements(entries.len() as u64));
    g.bench_function("verify_4096_entries", |b| {
        b.iter(|| {
            assert!(matches!(
                verify_entries(&entries, &GENESIS_HASH),
                ChainVerdict::Ok
            ))
        })
    });
    g.finish();
}

criterion_group!(benches, write_path, frame_codec, chain_verify);
criterion_main!(benches);
