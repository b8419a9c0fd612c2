use super::Recording;

/// One second of audio borrowed from a recording.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameSlice<'a> {
    pub recording_id: &'a str,
    pub index: usize,
    pub sample_rate: u32,
    pub samples: &'a [f64],
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameSet<'a> {
    pub frames: Vec<FrameSlice<'a>>,
    /// Set when the recording is shorter than one frame.
    pub short_recording: bool,
}

/// Cut a recording into contiguous, non-overlapping 1 s frames. The trailing
/// partial second is dropped.
pub fn frame_1s(rec: &Recording) -> FrameSet<'_> {
    let len = rec.sample_rate as usize;
    let frames: Vec<_> = rec
        .samples
        .chunks_exact(len.max(1))
        .enumerate()
        .map(|(index, samples)| FrameSlice {
            recording_id: &rec.id,
            index,
            sample_rate: rec.sample_rate,
            samples,
        })
        .collect();
    if frames.is_empty() {
        log::warn!(
            "recording {} is {:.3} s long; no 1 s frame fits",
            rec.id,
            rec.duration_secs()
        );
    }
    FrameSet {
        short_recording: frames.is_empty(),
        frames,
    }
}
