use std::io::{Read, Write};
use std::process::{Command, Stdio};
use std::time::Duration;

use pnp_core::denoise::protocol::{encode_handshake, encode_request, MSG_DENOISE};
use pnp_core::denoise::{
    quadratic_prior_denoise, Denoiser, ExternalDenoiser, ExternalError, PriorMean, QuadraticPrior,
};
use pnp_core::{ImageTensor, NoiseLevelMap, Shape};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const ADAPTER: &str = env!("CARGO_BIN_EXE_pnp-adapter");

fn adapter(args: &str) -> ExternalDenoiser {
    ExternalDenoiser::spawn(&format!("{ADAPTER} {args}"), Duration::from_secs(20)).unwrap()
}

/// Random f32 bit patterns, restricted to finite values.
fn random_f32s(rng: &mut ChaCha8Rng, n: usize) -> Vec<f32> {
    (0..n)
        .map(|_| loop {
            let v = f32::from_bits(rng.random());
            if v.is_finite() {
                break v;
            }
        })
        .collect()
}

#[test]
fn passthrough_is_bitwise_over_random_frames() {
    let mut child = Command::new(ADAPTER)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let mut stdin = child.stdin.take().unwrap();
    let mut stdout = child.stdout.take().unwrap();
    stdin.write_all(&encode_handshake()).unwrap();
    let mut echo = [0u8; 8];
    stdout.read_exact(&mut echo).unwrap();
    assert_eq!(echo, encode_handshake());

    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let frames = 120;
    for n in 0..frames {
        let c = if n % 2 == 0 { 1 } else { 3 };
        let (h, w) = (rng.random_range(1..9u32), rng.random_range(1..9u32));
        let len = (h * w * c) as usize;
        let image = random_f32s(&mut rng, len);
        // Mostly positive levels, with a few exact zeros.
        let map: Vec<f32> = (0..len)
            .map(|_| {
                if rng.random_bool(0.1) {
                    0.0
                } else {
                    rng.random_range(1e-3..5.0)
                }
            })
            .collect();
        let mut frame = vec![MSG_DENOISE];
        for d in [h, w, c] {
            frame.extend_from_slice(&d.to_le_bytes());
        }
        for v in image.iter().chain(&map) {
            frame.extend_from_slice(&v.to_le_bytes());
        }
        stdin.write_all(&frame).unwrap();

        let mut status = [0u8; 1];
        stdout.read_exact(&mut status).unwrap();
        assert_eq!(status[0], 0, "frame {n}");
        let mut payload = vec![0u8; len * 4];
        stdout.read_exact(&mut payload).unwrap();
        for (i, chunk) in payload.chunks_exact(4).enumerate() {
            let got = u32::from_le_bytes(chunk.try_into().unwrap());
            assert_eq!(got, image[i].to_bits(), "frame {n} entry {i}");
        }
    }
    drop(stdin);
    let mut rest = Vec::new();
    stdout.read_to_end(&mut rest).unwrap();
    assert!(rest.is_empty());
    assert!(child.wait().unwrap().success());
}

#[test]
fn quadratic_adapter_matches_builtin() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut ext = adapter("--backend quadratic --kappa 2.5 --mean 0.3");
    let prior = QuadraticPrior::new(2.5, PriorMean::Constant(0.3)).unwrap();
    for c in [1, 3] {
        for _ in 0..10 {
            let s = Shape::new(rng.random_range(1..12), rng.random_range(1..12), c);
            let u = ImageTensor::new(
                s,
                (0..s.len()).map(|_| rng.random_range(-0.5..1.5)).collect(),
            )
            .unwrap();
            let m = NoiseLevelMap::new(
                ImageTensor::new(
                    s,
                    (0..s.len()).map(|_| rng.random_range(0.0..2.0)).collect(),
                )
                .unwrap(),
            )
            .unwrap();
            let got = ext.denoise(&u, &m).unwrap();
            let want = quadratic_prior_denoise(&u, &m, &prior).unwrap();
            for (a, b) in got.data().iter().zip(want.data()) {
                assert!((a - b).abs() <= 1e-6, "{a} vs {b}");
            }
        }
    }
}

#[test]
fn zero_map_is_identity_even_for_failing_backend() {
    let s = Shape::new(3, 2, 3);
    let u = ImageTensor::new(s, (0..s.len()).map(|i| i as f64 * 0.125).collect()).unwrap();
    let mut child = Command::new(ADAPTER)
        .args(["--backend", "fail"])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let mut stdin = child.stdin.take().unwrap();
    let mut stdout = child.stdout.take().unwrap();
    stdin.write_all(&encode_handshake()).unwrap();
    stdin
        .write_all(&encode_request(
            &u,
            &NoiseLevelMap::constant(s, 0.0).unwrap(),
        ))
        .unwrap();
    stdin
        .write_all(&encode_request(
            &u,
            &NoiseLevelMap::constant(s, 0.1).unwrap(),
        ))
        .unwrap();
    drop(stdin);
    let mut out = Vec::new();
    stdout.read_to_end(&mut out).unwrap();
    assert!(child.wait().unwrap().success());
    let mut expected = encode_handshake().to_vec();
    expected.push(0);
    for v in u.data() {
        expected.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    expected.push(1);
    assert_eq!(out, expected);
}

#[test]
fn malformed_frames_do_not_desync_the_session() {
    let mut child = Command::new(ADAPTER)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let mut stdin = child.stdin.take().unwrap();
    let mut stdout = child.stdout.take().unwrap();
    let s = Shape::new(2, 2, 1);
    let good = encode_request(
        &ImageTensor::filled(s, 0.5),
        &NoiseLevelMap::constant(s, 0.2).unwrap(),
    );
    // Two channels: the full payload is consumed, then rejected.
    let mut two_channels = vec![MSG_DENOISE];
    for d in [1u32, 2, 2] {
        two_channels.extend_from_slice(&d.to_le_bytes());
    }
    two_channels.extend(std::iter::repeat_n(0u8, 4 * 4 * 2));
    stdin.write_all(&encode_handshake()).unwrap();
    stdin.write_all(&good).unwrap();
    stdin.write_all(&two_channels).unwrap();
    stdin.write_all(&good).unwrap();
    drop(stdin);
    let mut out = Vec::new();
    stdout.read_to_end(&mut out).unwrap();
    assert!(child.wait().unwrap().success());
    let ok_len = 1 + 4 * 4;
    assert_eq!(out.len(), 8 + ok_len + 1 + ok_len);
    assert_eq!(out[8], 0);
    assert_eq!(out[8 + ok_len], 2);
    assert_eq!(out[8 + ok_len + 1], 0);
}

#[test]
fn bad_handshake_exits_nonzero() {
    let mut child = Command::new(ADAPTER)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let mut stdin = child.stdin.take().unwrap();
    stdin.write_all(b"PNPD\x02\x00\x00\x00").unwrap();
    drop(stdin);
    let status = child.wait().unwrap();
    assert!(!status.success());
}

#[test]
fn backend_errors_surface_as_status_and_session_survives() {
    let s = Shape::new(2, 2, 1);
    let u = ImageTensor::filled(s, 0.5);
    let mut ext = adapter("--backend fail");
    for _ in 0..3 {
        let err = ext
            .denoise(&u, &NoiseLevelMap::constant(s, 0.1).unwrap())
            .unwrap_err();
        assert!(
            matches!(
                &err,
                pnp_core::Error::External(ExternalError::AdapterStatus(1))
            ),
            "{err}"
        );
    }
    assert_eq!(
        ext.denoise(&u, &NoiseLevelMap::constant(s, 0.0).unwrap())
            .unwrap(),
        u
    );
}
