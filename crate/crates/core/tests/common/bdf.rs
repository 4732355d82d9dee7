//! Independent BDF reader.

pub struct ParsedBdf {
    pub id: Vec<u8>,
    pub reserved: String,
    pub records: u64,
    pub duration: String,
    pub channels: usize,
    pub phys: Vec<(f64, f64)>,
    pub dig: Vec<(i64, i64)>,
    pub spr: Vec<usize>,
    /// Per channel, all decoded physical samples.
    pub data: Vec<Vec<f64>>,
}

pub fn text(b: &[u8]) -> String {
    String::from_utf8_lossy(b).trim().to_string()
}

pub fn parse_bdf(bytes: &[u8]) -> ParsedBdf {
    let n: usize = text(&bytes[252..256]).parse().unwrap();
    let header_len: usize = text(&bytes[184..192]).parse().unwrap();
    assert_eq!(header_len, 256 * (n + 1));
    let sig = |offset_in_block: usize, width: usize, i: usize| {
        let start = 256 + n * offset_in_block + i * width;
        text(&bytes[start..start + width])
    };
    // Signal header field offsets, in units of n: label 16, transducer 80, dim 8,
    // pmin 8, pmax 8, dmin 8, dmax 8, prefilter 80, spr 8, reserved 32.
    let phys: Vec<(f64, f64)> = (0..n)
        .map(|i| (sig(104, 8, i).parse().unwrap(), sig(112, 8, i).parse().unwrap()))
        .collect();
    let dig: Vec<(i64, i64)> = (0..n)
        .map(|i| (sig(120, 8, i).parse().unwrap(), sig(128, 8, i).parse().unwrap()))
        .collect();
    let spr: Vec<usize> = (0..n).map(|i| sig(216, 8, i).parse().unwrap()).collect();
    let records: u64 = text(&bytes[236..244]).parse().unwrap();
    let mut data = vec![Vec::new(); n];
    let mut pos = header_len;
    for _ in 0..records {
        for c in 0..n {
            for _ in 0..spr[c] {
                let raw = bytes[pos] as i32 | (bytes[pos + 1] as i32) << 8 | (bytes[pos + 2] as i8 as i32) << 16;
                pos += 3;
                let (pmin, pmax) = phys[c];
                let (dmin, dmax) = dig[c];
                data[c].push(pmin + (raw as i64 - dmin) as f64 * (pmax - pmin) / (dmax - dmin) as f64);
            }
        }
    }
    assert_eq!(pos, bytes.len());
    ParsedBdf {
        id: bytes[..8].to_vec(),
        reserved: text(&bytes[192..236]),
        records,
        duration: text(&bytes[244..252]),
        channels: n,
        phys,
        dig,
        spr,
        data,
    }
}
