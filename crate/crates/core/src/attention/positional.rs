use crate::seqcore::FeatureSequence;

/// Add the sinusoidal encoding of position `pos` to one token.
pub fn add_position_row(row: &mut [f32], pos: usize) {
    let d = row.len() as f64;
    for (i, v) in row.iter_mut().enumerate() {
        let freq = 10000f64.powf(-((i / 2 * 2) as f64) / d);
        let angle = pos as f64 * freq;
        *v += if i % 2 == 0 { angle.sin() } else { angle.cos() } as f32;
    }
}

/// Add sinusoidal absolute positions, numbering tokens from `offset`.
pub fn add_positions(x: &mut FeatureSequence, offset: usize) {
    for (t, row) in x.rows_mut().enumerate() {
        add_position_row(row, offset + t);
    }
}
