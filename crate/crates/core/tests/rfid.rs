use std::net::TcpListener;
use std::sync::Arc;
use std::time::Duration;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use xvision::rfid::protocol::*;
use xvision::rfid::*;

fn epc(n: u128) -> Epc {
    Epc::from_u128(n)
}

fn random_message(rng: &mut ChaCha8Rng, ty: u8) -> Message {
    let e = |rng: &mut ChaCha8Rng| Epc(rng.random());
    let status = |rng: &mut ChaCha8Rng| [Status::Ok, Status::TagNotFound, Status::MemoryOverrun][rng.random_range(0..3)];
    match ty {
        msg_type::INVENTORY_REQ => Message::InventoryReq { antenna: if rng.random() { Some(rng.random()) } else { None } },
        msg_type::TAG_REPORT => {
            let n = rng.random_range(0..20);
            Message::TagReport {
                tags: (0..n)
                    .map(|_| TagReportEntry { epc: e(rng), rssi_centi_dbm: rng.random(), antenna: rng.random(), timestamp_us: rng.random() })
                    .collect(),
            }
        }
        msg_type::WRITE_REQ => Message::WriteReq { epc: e(rng), bank: rng.random(), wordptr: rng.random(), word: rng.random() },
        msg_type::WRITE_RESP => Message::WriteResp { status: status(rng) },
        msg_type::READ_REQ => Message::ReadReq { epc: e(rng), bank: rng.random(), wordptr: rng.random() },
        _ => Message::ReadResp { status: status(rng), word: rng.random() },
    }
}

#[test]
fn seeded_round_trips_for_every_type() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for ty in 1..=6u8 {
        for _ in 0..1000 {
            let m = random_message(&mut rng, ty);
            let bytes = encode_message(&m).unwrap();
            assert_eq!(bytes[3], ty);
            let back = decode_message(&bytes).unwrap();
            assert_eq!(back, m);
            assert_eq!(encode_message(&back).unwrap(), bytes);
        }
    }
}

#[test]
fn malformed_frames_are_rejected() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for ty in 1..=6u8 {
        let good = encode_message(&random_message(&mut rng, ty)).unwrap();
        let mut bad = good.clone();
        bad[0] = 0;
        bad[1] = 0;
        assert_eq!(decode_message(&bad), Err(ProtocolError::BadMagic(0)));
        let mut bad = good.clone();
        bad[2] = 7;
        assert_eq!(decode_message(&bad), Err(ProtocolError::UnsupportedVersion(7)));
        for cut in 0..good.len() {
            assert!(matches!(decode_message(&good[..cut]), Err(ProtocolError::Truncated { .. })), "type {ty} cut {cut}");
        }
        for unknown in [0u8, 7, 0x42, 0xFF] {
            let mut bad = good.clone();
            bad[3] = unknown;
            assert_eq!(decode_message(&bad), Err(ProtocolError::UnknownMessageType(unknown)));
        }
    }
}

proptest! {
    #[test]
    fn arbitrary_bytes_never_panic(bytes in proptest::collection::vec(any::<u8>(), 0..64)) {
        let _ = decode_message(&bytes);
        let mut cursor = std::io::Cursor::new(bytes);
        let _ = read_frame(&mut cursor);
    }

    #[test]
    fn valid_frames_reencode_identically(seed in any::<u64>(), ty in 1u8..=6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bytes = encode_message(&random_message(&mut rng, ty)).unwrap();
        prop_assert_eq!(encode_message(&decode_message(&bytes).unwrap()).unwrap(), bytes);
    }

    #[test]
    fn detuned_tags_never_reported(d in 0.001f64..200.0, bap in any::<bool>()) {
        let mut t = TagRecord::new(epc(9), Default::default());
        t.water_detuned = true;
        t.battery_assisted = bap;
        prop_assert!(tag_respond(&t, d, &ChannelParams::default(), 0, 0).unwrap().is_none());
    }

    #[test]
    fn score_monotone_in_distance(a in 0.01f64..50.0, b in 0.01f64..50.0) {
        let p = ChannelParams::default();
        let (near, far) = if a < b { (a, b) } else { (b, a) };
        let sn = normalized_rssi(backscatter_rssi(near, &p).unwrap());
        let sf = normalized_rssi(backscatter_rssi(far, &p).unwrap());
        prop_assert!(sf <= sn);
        if near < far {
            prop_assert!(backscatter_rssi(far, &p).unwrap() < backscatter_rssi(near, &p).unwrap());
        }
    }

    #[test]
    fn temperature_grid_round_trip(q in -256i32..=256) {
        let c = q as f64 / 4.0;
        prop_assert_eq!(decode_temp_word(encode_temp_word(c)), c);
    }
}

#[test]
fn water_level_truth_table() {
    let mut known = 0;
    for bits in 0..8u8 {
        let (a, b, c) = (bits & 4 != 0, bits & 2 != 0, bits & 1 != 0);
        let expected = match (a, b, c) {
            (false, true, true) => WaterLevel::Empty,
            (false, false, true) => WaterLevel::Middle,
            (false, false, false) => WaterLevel::Full,
            _ => WaterLevel::Unknown,
        };
        assert_eq!(decode_water_level(a, b, c), expected);
        known += (expected != WaterLevel::Unknown) as usize;
    }
    assert_eq!(known, 3);
}

fn population() -> PopulationConfig {
    let tag = |n: u128, x: f64| TagConfig {
        epc: epc(n),
        position: [x, 0.0, 0.0],
        has_temperature_ic: false,
        battery_assisted: false,
        water_detuned: false,
        ambient_celsius: 20.0,
    };
    PopulationConfig {
        antennas: vec![AntennaConfig { id: 1, position: [0.0, 0.0, 0.0] }, AntennaConfig { id: 2, position: [1.0, 0.0, 0.0] }],
        tags: vec![
            TagConfig { has_temperature_ic: true, ambient_celsius: 22.5, ..tag(1, 0.5) },
            tag(2, 0.6),
            TagConfig { water_detuned: true, ..tag(3, 0.5) },
            tag(4, 5.0),
        ],
    }
}

fn reader() -> Arc<SimReader> {
    let pop = population().into_population().unwrap();
    Arc::new(SimReader::new(pop, ChannelParams::default(), Clock::Stepped { start_us: 1_000, step_us: 10 }).unwrap())
}

#[test]
fn population_config_round_trip_and_validation() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("pop.json");
    population().save(&path).unwrap();
    assert_eq!(PopulationConfig::load(&path).unwrap(), population());
    let mut dup = population();
    dup.tags.push(dup.tags[0].clone());
    assert!(matches!(dup.into_population(), Err(RfidError::Config(_))));
}

#[test]
fn inventory_gates_and_ordering() {
    let r = reader();
    let events = r.inventory(None);
    let seen: Vec<(u8, Epc)> = events.iter().map(|e| (e.antenna_id, e.epc)).collect();
    assert_eq!(seen, vec![(1, epc(1)), (1, epc(2)), (2, epc(1)), (2, epc(2))]);
    assert!(events.iter().all(|e| e.rssi <= 0.0));
    let only2 = r.inventory(Some(2));
    assert!(only2.iter().all(|e| e.antenna_id == 2));
    // timestamps strictly increase per antenna across rounds
    let again = r.inventory(Some(2));
    assert!(again[0].timestamp_us > only2[0].timestamp_us);
}

#[test]
fn temperature_over_tcp() {
    let r = reader();
    let server = ReaderServer::spawn(r.clone(), "127.0.0.1:0").unwrap();
    let mut client = ReaderClient::connect(server.local_addr(), Duration::from_secs(5)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let reading = client.trigger_temperature(&epc(1), &mut rng).unwrap();
    assert_eq!(reading.celsius, 22.5);

    r.update_tag(&epc(1), |t| t.ambient_celsius = 80.0);
    assert_eq!(client.trigger_temperature(&epc(1), &mut rng).unwrap().celsius, 64.0);

    assert!(matches!(client.trigger_temperature(&epc(99), &mut rng), Err(RfidError::TagNotFound(_))));
    assert!(matches!(client.trigger_temperature(&epc(2), &mut rng), Err(RfidError::NotATemperatureTag(_))));
    // detuned and out-of-range tags cannot be addressed
    assert!(matches!(client.trigger_temperature(&epc(3), &mut rng), Err(RfidError::TagNotFound(_))));
    assert!(matches!(client.read_word(&epc(2), 3, 600), Err(RfidError::MemoryOverrun)));

    let events = client.inventory(Some(1)).unwrap();
    assert_eq!(events.len(), 2);
    assert!((events[0].rssi - (-33.98)).abs() < 0.006);
    drop(client);
    server.shutdown();
}

#[test]
fn temperature_across_ambients() {
    let r = reader();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let server = ReaderServer::spawn(r.clone(), "127.0.0.1:0").unwrap();
    let mut client = ReaderClient::connect(server.local_addr(), Duration::from_secs(5)).unwrap();
    for _ in 0..100 {
        let ambient: f64 = rng.random_range(-64.0..=64.0);
        r.update_tag(&epc(1), |t| t.ambient_celsius = ambient);
        let got = client.trigger_temperature(&epc(1), &mut rng).unwrap().celsius;
        assert!((got - ambient).abs() <= 0.125 + 1e-12, "{ambient} -> {got}");
    }
    drop(client);
    server.shutdown();
}

#[test]
fn silent_reader_times_out() {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let hold = std::thread::spawn(move || {
        let (s, _) = listener.accept().unwrap();
        std::thread::sleep(Duration::from_millis(500));
        drop(s);
    });
    let mut client = ReaderClient::connect(addr, Duration::from_millis(100)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    assert!(matches!(client.trigger_temperature(&epc(1), &mut rng), Err(RfidError::ProtocolTimeout)));
    hold.join().unwrap();
}

#[test]
fn concurrent_sessions_see_consistent_memory() {
    let r = reader();
    let server = ReaderServer::spawn(r.clone(), "127.0.0.1:0").unwrap();
    let addr = server.local_addr();
    let workers: Vec<_> = (0..4u16)
        .map(|k| {
            std::thread::spawn(move || {
                let mut c = ReaderClient::connect(addr, Duration::from_secs(5)).unwrap();
                for i in 0..50u16 {
                    let ptr = k * 50 + i;
                    c.write_word(&epc(2), 3, ptr, ptr ^ 0x5A5A).unwrap();
                    assert_eq!(c.read_word(&epc(2), 3, ptr).unwrap(), ptr ^ 0x5A5A);
                }
            })
        })
        .collect();
    for w in workers {
        w.join().unwrap();
    }
    let pop = r.population();
    let user = &pop.tags[&epc(2)].memory_banks[3];
    assert!((0..200u16).all(|p| user[p as usize] == p ^ 0x5A5A));
    server.shutdown();
}
