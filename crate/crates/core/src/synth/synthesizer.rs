use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};

use super::montage::channel_index;
use super::templates::{make_template, ErpTemplate, TemplateKind, TEMPLATE_SPAN};
use super::{SynthConfig, SynthError, SynthEvent, SynthEventKind};
use crate::minigames::Side;
use crate::timeline::{Samples, StreamHeader};

/// Kellet's economy pinking filter: three one-pole sections plus a direct
/// path, all driven by the same white sample.
const PINK_POLES: [f64; 3] = [0.99765, 0.96300, 0.57000];
const PINK_GAINS: [f64; 3] = [0.0990460, 0.2965164, 1.0526913];
const PINK_DIRECT: f64 = 0.1848;
const WARMUP: usize = 4096;
/// Per-sample standard deviation of the mu phase random walk, radians.
const MU_PHASE_WALK: f64 = 0.05;
const BLINK_STREAM: u64 = 1000;
const OCCIPITAL: [&str; 3] = ["O1", "O2", "POz"];

fn pink_variance() -> f64 {
    let mut v = PINK_DIRECT * PINK_DIRECT;
    for i in 0..3 {
        v += 2.0 * PINK_DIRECT * PINK_GAINS[i];
        for j in 0..3 {
            v += PINK_GAINS[i] * PINK_GAINS[j] / (1.0 - PINK_POLES[i] * PINK_POLES[j]);
        }
    }
    v
}

#[derive(Debug, Clone)]
struct Alpha {
    a1: f64,
    a2: f64,
    y1: f64,
    y2: f64,
    scale: f64,
}

impl Alpha {
    fn new(cfg: &SynthConfig) -> Self {
        let r = (-2.0 * PI * cfg.alpha_hwhm / cfg.sample_rate).exp();
        let c = (2.0 * PI * cfg.alpha_freq / cfg.sample_rate).cos();
        let var = (1.0 + r * r) / ((1.0 - r * r) * ((1.0 + r * r).powi(2) - 4.0 * r * r * c * c));
        Self {
            a1: 2.0 * r * c,
            a2: -r * r,
            y1: 0.0,
            y2: 0.0,
            scale: cfg.alpha_amp / 2f64.sqrt() / var.sqrt(),
        }
    }
}

#[derive(Debug, Clone)]
struct Mu {
    phase: f64,
    /// Movement of this hand suppresses the channel.
    contralateral: Side,
}

#[derive(Debug, Clone)]
struct Channel {
    rng: ChaCha8Rng,
    pink: [f64; 3],
    alpha: Option<Alpha>,
    mu: Option<Mu>,
}

impl Channel {
    fn background(&mut self, pink_scale: f64, mu_step: f64, mu_amp: f64) -> f64 {
        let w: f64 = self.rng.sample(StandardNormal);
        let mut pink = PINK_DIRECT * w;
        for i in 0..3 {
            self.pink[i] = PINK_POLES[i] * self.pink[i] + PINK_GAINS[i] * w;
            pink += self.pink[i];
        }
        let mut v = pink_scale * pink;
        if let Some(a) = &mut self.alpha {
            let e: f64 = self.rng.sample(StandardNormal);
            let y = a.a1 * a.y1 + a.a2 * a.y2 + e;
            a.y2 = a.y1;
            a.y1 = y;
            v += a.scale * y;
        }
        if let Some(m) = &mut self.mu {
            let e: f64 = self.rng.sample(StandardNormal);
            m.phase = (m.phase + mu_step + MU_PHASE_WALK * e).rem_euclid(2.0 * PI);
            v += mu_amp * m.phase.sin();
        }
        v
    }
}

#[derive(Debug, Clone)]
struct Prepared {
    t: f64,
    start: u64,
    end: u64,
    kind: SynthEventKind,
}

/// Per-channel template gains for the configured channel order.
#[derive(Debug, Clone)]
struct Planted {
    template: ErpTemplate,
    gains: Vec<f64>,
}

impl Planted {
    fn new(kind: TemplateKind, labels: &[String]) -> Self {
        let template = make_template(kind);
        let gains = labels
            .iter()
            .map(|l| channel_index(l).map_or(0.0, |i| template.spatial_weights[i]))
            .collect();
        Self { template, gains }
    }
}

/// Streaming renderer. Rendering a recording in chunks of any size gives
/// exactly the same samples as rendering it in one call.
#[derive(Debug, Clone)]
pub struct Synthesizer {
    cfg: SynthConfig,
    channels: Vec<Channel>,
    pink_scale: f64,
    mu_step: f64,
    events: Vec<Prepared>,
    next_event: usize,
    active: Vec<usize>,
    p300: Planted,
    errp: Planted,
    visual: Planted,
    blink: Planted,
    ssvep_gains: Vec<f64>,
    blink_rng: ChaCha8Rng,
    next_blink: f64,
    active_blinks: Vec<f64>,
    blink_onsets: Vec<f64>,
    frame: u64,
    skipped: usize,
}

impl Synthesizer {
    /// Events at negative times are skipped and counted.
    pub fn new(cfg: SynthConfig, events: &[SynthEvent]) -> Result<Self, SynthError> {
        cfg.validate()?;
        let fs = cfg.sample_rate;
        let mut channels = Vec::with_capacity(cfg.channels.len());
        for label in &cfg.channels {
            let idx = channel_index(label).expect("validated") as u64;
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(1 + idx);
            let occipital = OCCIPITAL.iter().any(|o| o.eq_ignore_ascii_case(label));
            let mu = match label.to_ascii_uppercase().as_str() {
                "C3" => Some(Side::Right),
                "C4" => Some(Side::Left),
                _ => None,
            }
            .map(|contralateral| Mu {
                phase: rng.random_range(0.0..2.0 * PI),
                contralateral,
            });
            let mut ch = Channel {
                rng,
                pink: [0.0; 3],
                alpha: occipital.then(|| Alpha::new(&cfg)),
                mu: None,
            };
            for _ in 0..WARMUP {
                ch.background(0.0, 0.0, 0.0);
            }
            ch.mu = mu;
            channels.push(ch);
        }

        let mut skipped = 0;
        let mut prepared: Vec<Prepared> = events
            .iter()
            .filter(|e| {
                let ok = e.t >= 0.0 && e.t.is_finite();
                skipped += !ok as usize;
                ok
            })
            .map(|e| Prepared {
                t: e.t,
                start: (e.t * fs).ceil() as u64,
                end: ((e.t + e.span()) * fs).ceil() as u64,
                kind: e.kind.clone(),
            })
            .collect();
        prepared.sort_by(|a, b| a.t.total_cmp(&b.t));

        let mut blink_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        blink_rng.set_stream(BLINK_STREAM);
        let ssvep_gains = cfg
            .channels
            .iter()
            .map(|l| OCCIPITAL.iter().any(|o| o.eq_ignore_ascii_case(l)) as u8 as f64)
            .collect();
        let mut s = Self {
            pink_scale: cfg.noise_sigma / pink_variance().sqrt(),
            mu_step: 2.0 * PI * cfg.mu_freq / fs,
            p300: Planted::new(TemplateKind::P300, &cfg.channels),
            errp: Planted::new(TemplateKind::Errp, &cfg.channels),
            visual: Planted::new(TemplateKind::Visual5hz, &cfg.channels),
            blink: Planted::new(TemplateKind::Blink, &cfg.channels),
            ssvep_gains,
            channels,
            events: prepared,
            next_event: 0,
            active: Vec::new(),
            blink_rng,
            next_blink: f64::INFINITY,
            active_blinks: Vec::new(),
            blink_onsets: Vec::new(),
            frame: 0,
            skipped,
            cfg,
        };
        s.next_blink = s.draw_blink_gap();
        Ok(s)
    }

    fn draw_blink_gap(&mut self) -> f64 {
        let rate = self.cfg.blink_rate_per_min / 60.0;
        if rate <= 0.0 {
            return f64::INFINITY;
        }
        let e: f64 = self.blink_rng.sample(Exp1);
        e / rate
    }

    /// Queues an event for streaming use. Events whose first sample has
    /// already been rendered are skipped and counted, so pushing events in
    /// time order ahead of rendering gives the same output as passing them
    /// all to [`Synthesizer::new`].
    pub fn push_event(&mut self, e: SynthEvent) -> bool {
        let fs = self.cfg.sample_rate;
        let start = (e.t * fs).ceil() as u64;
        if !(e.t >= 0.0 && e.t.is_finite()) || start < self.frame {
            self.skipped += 1;
            return false;
        }
        let prepared = Prepared {
            t: e.t,
            start,
            end: ((e.t + e.span()) * fs).ceil() as u64,
            kind: e.kind,
        };
        let at =
            self.next_event + self.events[self.next_event..].partition_point(|p| p.t <= prepared.t);
        self.events.insert(at, prepared);
        true
    }

    pub fn config(&self) -> &SynthConfig {
        &self.cfg
    }

    pub fn frames_rendered(&self) -> u64 {
        self.frame
    }

    pub fn skipped_events(&self) -> usize {
        self.skipped
    }

    /// Blink start times generated so far, seconds.
    pub fn blink_onsets(&self) -> &[f64] {
        &self.blink_onsets
    }

    /// Renders the next `n` frames, frame-major, in µV.
    pub fn render(&mut self, n: usize) -> Vec<f32> {
        let fs = self.cfg.sample_rate;
        let nch = self.channels.len();
        let (a, b) = (self.frame, self.frame + n as u64);

        while self.next_event < self.events.len() && self.events[self.next_event].start < b {
            self.active.push(self.next_event);
            self.next_event += 1;
        }
        let events = &self.events;
        self.active.retain(|&i| events[i].end > a);

        // mu gain per frame for each hemisphere
        let mut erd_left = vec![1.0; n];
        let mut erd_right = vec![1.0; n];
        for &i in &self.active {
            let e = &self.events[i];
            if let SynthEventKind::MotorWindow { side, .. } = e.kind {
                let g = match side {
                    Side::Left => &mut erd_left,
                    Side::Right => &mut erd_right,
                };
                for f in e.start.max(a)..e.end.min(b) {
                    g[(f - a) as usize] = self.cfg.erd_factor;
                }
            }
        }

        let mut out = vec![0.0f64; n * nch];
        for (c, ch) in self.channels.iter_mut().enumerate() {
            let gains = match ch.mu.as_ref().map(|m| m.contralateral) {
                Some(Side::Left) => Some(&erd_left),
                Some(Side::Right) => Some(&erd_right),
                None => None,
            };
            for i in 0..n {
                let g = gains.map_or(1.0, |g| g[i]);
                out[i * nch + c] =
                    ch.background(self.pink_scale, self.mu_step, self.cfg.mu_amp * g);
            }
        }

        for &ei in &self.active {
            let e = &self.events[ei];
            let (lo, hi) = (e.start.max(a), e.end.min(b));
            match &e.kind {
                SynthEventKind::VisualOnset { target } => {
                    add_template(&mut out, nch, a, lo, hi, fs, e.t, &self.visual, 1.0);
                    if *target {
                        add_template(&mut out, nch, a, lo, hi, fs, e.t, &self.p300, 1.0);
                    }
                }
                SynthEventKind::ErrorNoticed => {
                    add_template(&mut out, nch, a, lo, hi, fs, e.t, &self.errp, 1.0);
                }
                SynthEventKind::SsvepFlash { toggles, duration } => {
                    for f in lo..hi {
                        let s = f as f64 / fs - e.t;
                        if s < 0.0 || s >= *duration {
                            continue;
                        }
                        let ph = flicker_phase(toggles, s);
                        let v = self.cfg.ssvep_amp * ph.sin()
                            + self.cfg.ssvep_harmonic_amp * (2.0 * ph).sin();
                        let row = (f - a) as usize * nch;
                        for (c, g) in self.ssvep_gains.iter().enumerate() {
                            out[row + c] += g * v;
                        }
                    }
                }
                SynthEventKind::MotorWindow { .. } => {}
            }
        }

        let t_end = b as f64 / fs;
        while self.next_blink < t_end {
            self.active_blinks.push(self.next_blink);
            self.blink_onsets.push(self.next_blink);
            self.next_blink += self.draw_blink_gap();
        }
        let t_start = a as f64 / fs;
        self.active_blinks.retain(|&t| t + TEMPLATE_SPAN > t_start);
        for &t in &self.active_blinks {
            let lo = ((t * fs).ceil() as u64).max(a);
            let hi = (((t + TEMPLATE_SPAN) * fs).ceil() as u64).min(b);
            add_template(
                &mut out,
                nch,
                a,
                lo,
                hi,
                fs,
                t,
                &self.blink,
                self.cfg.blink_amp,
            );
        }

        self.frame = b;
        out.into_iter().map(|x| x as f32).collect()
    }
}

#[allow(clippy::too_many_arguments)]
fn add_template(
    out: &mut [f64],
    nch: usize,
    chunk_start: u64,
    lo: u64,
    hi: u64,
    fs: f64,
    t: f64,
    planted: &Planted,
    scale: f64,
) {
    for f in lo..hi {
        let v = scale * planted.template.value(f as f64 / fs - t);
        if v == 0.0 {
            continue;
        }
        let row = (f - chunk_start) as usize * nch;
        for (c, g) in planted.gains.iter().enumerate() {
            out[row + c] += g * v;
        }
    }
}

/// Fundamental phase of a square-wave flicker: advances by pi per
/// visibility change, linearly in between.
fn flicker_phase(toggles: &[f64], s: f64) -> f64 {
    let k = toggles.partition_point(|&t| t <= s);
    let (t0, t1) = match k {
        0 => (0.0, toggles.first().copied().unwrap_or(f64::INFINITY)),
        k if k < toggles.len() => (toggles[k - 1], toggles[k]),
        k => {
            let last = toggles[k - 1];
            let prev = if k >= 2 { toggles[k - 2] } else { 0.0 };
            (last, last + (last - prev))
        }
    };
    PI * (k as f64 + (s - t0) / (t1 - t0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultichannelRecording {
    pub labels: Vec<String>,
    pub sample_rate: f64,
    pub start_ns: i64,
    /// Frame-major µV.
    pub data: Vec<f32>,
    pub skipped_events: usize,
    pub blink_onsets: Vec<f64>,
}

impl MultichannelRecording {
    pub fn channels(&self) -> usize {
        self.labels.len()
    }

    pub fn frames(&self) -> usize {
        self.data.len() / self.channels()
    }

    pub fn channel(&self, label: &str) -> Option<Vec<f64>> {
        let c = self
            .labels
            .iter()
            .position(|l| l.eq_ignore_ascii_case(label))?;
        Some(
            self.data
                .iter()
                .skip(c)
                .step_by(self.channels())
                .map(|&x| x as f64)
                .collect(),
        )
    }

    pub fn header(&self, name: &str) -> StreamHeader {
        let labels: Vec<&str> = self.labels.iter().map(String::as_str).collect();
        let mut h = StreamHeader::samples(name, &labels, self.sample_rate, self.start_ns);
        h.frame_count = Some(self.frames() as u64);
        h
    }

    pub fn to_samples(&self) -> Samples {
        Samples {
            channels: self.channels(),
            data: self.data.clone(),
        }
    }
}

/// Renders `duration` seconds in one pass. Events starting outside
/// `[0, duration)` are skipped, counted and logged.
pub fn synthesize_recording(
    events: &[SynthEvent],
    config: &SynthConfig,
    duration: f64,
    start_ns: i64,
) -> Result<MultichannelRecording, SynthError> {
    let inside: Vec<SynthEvent> = events
        .iter()
        .filter(|e| e.t >= 0.0 && e.t < duration)
        .cloned()
        .collect();
    let outside = events.len() - inside.len();
    if outside > 0 {
        log::warn!("{outside} events fall outside the {duration} s recording and were skipped");
    }
    let mut synth = Synthesizer::new(config.clone(), &inside)?;
    let frames = (duration * config.sample_rate).round() as usize;
    let data = synth.render(frames);
    Ok(MultichannelRecording {
        labels: config.channels.clone(),
        sample_rate: config.sample_rate,
        start_ns,
        data,
        skipped_events: outside + synth.skipped_events(),
        blink_onsets: synth.blink_onsets().to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::minigames::toggle_schedule;
    use proptest::prelude::*;

    fn quiet() -> SynthConfig {
        SynthConfig {
            seed: 11,
            ..SynthConfig::default()
        }
    }

    fn idx(label: &str) -> usize {
        channel_index(label).unwrap()
    }

    /// Independent Welch-free check: power of a single DFT bin.
    fn bin_power(x: &[f64], fs: f64, f: f64) -> f64 {
        let (mut re, mut im) = (0.0, 0.0);
        for (n, v) in x.iter().enumerate() {
            let ph = 2.0 * PI * f * n as f64 / fs;
            re += v * ph.cos();
            im -= v * ph.sin();
        }
        (re * re + im * im) / x.len() as f64
    }

    #[test]
    fn chunked_rendering_matches_batch() {
        let events = vec![
            SynthEvent::new(0.5, SynthEventKind::VisualOnset { target: true }),
            SynthEvent::new(1.9, SynthEventKind::ErrorNoticed),
            SynthEvent::new(
                2.2,
                SynthEventKind::SsvepFlash {
                    toggles: toggle_schedule(7, 60, 2.0),
                    duration: 2.0,
                },
            ),
            SynthEvent::new(
                3.0,
                SynthEventKind::MotorWindow {
                    side: Side::Left,
                    duration: 1.5,
                },
            ),
        ];
        let mut batch = Synthesizer::new(quiet(), &events).unwrap();
        let all = batch.render(6 * 256);
        let mut chunked = Synthesizer::new(quiet(), &events).unwrap();
        let mut parts = Vec::new();
        for n in [1, 17, 255, 256, 300, 707] {
            parts.extend(chunked.render(n));
        }
        assert_eq!(parts.len(), all.len());
        assert!(parts
            .iter()
            .zip(&all)
            .all(|(a, b)| a.to_bits() == b.to_bits()));
        assert_eq!(batch.blink_onsets(), chunked.blink_onsets());
    }

    #[test]
    fn pushed_events_match_batch() {
        let events = vec![
            SynthEvent::new(0.5, SynthEventKind::VisualOnset { target: true }),
            SynthEvent::new(0.5, SynthEventKind::ErrorNoticed),
            SynthEvent::new(
                2.0,
                SynthEventKind::MotorWindow {
                    side: Side::Right,
                    duration: 1.0,
                },
            ),
            SynthEvent::new(2.6, SynthEventKind::VisualOnset { target: false }),
        ];
        let all = Synthesizer::new(quiet(), &events).unwrap().render(1024);
        let mut s = Synthesizer::new(quiet(), &[]).unwrap();
        assert!(s.push_event(events[0].clone()));
        assert!(s.push_event(events[1].clone()));
        let mut out = s.render(300);
        assert!(s.push_event(events[2].clone()));
        out.extend(s.render(300));
        assert!(s.push_event(events[3].clone()));
        out.extend(s.render(424));
        assert!(out
            .iter()
            .zip(&all)
            .all(|(a, b)| a.to_bits() == b.to_bits()));
        // too late: already rendered
        assert!(!s.push_event(SynthEvent::new(1.0, SynthEventKind::ErrorNoticed)));
        assert_eq!(s.skipped_events(), 1);
    }

    #[test]
    fn same_seed_is_bit_identical_and_seeds_differ() {
        let a = synthesize_recording(&[], &quiet(), 4.0, 0).unwrap();
        let b = synthesize_recording(&[], &quiet(), 4.0, 0).unwrap();
        assert_eq!(a, b);
        let c = synthesize_recording(
            &[],
            &SynthConfig {
                seed: 12,
                ..quiet()
            },
            4.0,
            0,
        )
        .unwrap();
        assert_ne!(a.data, c.data);
    }

    #[test]
    fn background_level_and_spectrum() {
        let cfg = SynthConfig {
            blink_rate_per_min: 0.0,
            ..quiet()
        };
        let rec = synthesize_recording(&[], &cfg, 120.0, 0).unwrap();
        let fz = rec.channel("Fz").unwrap();
        let sd = (fz.iter().map(|x| x * x).sum::<f64>() / fz.len() as f64).sqrt();
        assert!((sd - 10.0).abs() < 1.5, "{sd}");
        // 1/f: low frequencies carry more power than high ones
        let lo: f64 = (2..6)
            .map(|f| bin_power(&fz[..16384], 256.0, f as f64))
            .sum();
        let hi: f64 = (30..34)
            .map(|f| bin_power(&fz[..16384], 256.0, f as f64))
            .sum();
        assert!(lo > 3.0 * hi, "{lo} {hi}");
        // alpha stands out at O2 but not at Fz
        let o2 = rec.channel("O2").unwrap();
        let ratio = |x: &[f64]| {
            let on: f64 = (0..5)
                .map(|k| bin_power(x, 256.0, 9.6 + 0.2 * k as f64))
                .sum();
            let off: f64 = (0..5)
                .map(|k| bin_power(x, 256.0, 15.6 + 0.2 * k as f64))
                .sum();
            on / off
        };
        assert!(ratio(&o2) > 2.0 * ratio(&fz));
        assert!(rec.data.iter().all(|x| x.is_finite()));
    }

    #[test]
    fn single_target_recovers_p300_at_pz() {
        let cfg = quiet();
        let with = synthesize_recording(
            &[SynthEvent::new(
                2.0,
                SynthEventKind::VisualOnset { target: true },
            )],
            &cfg,
            4.0,
            0,
        )
        .unwrap();
        let without = synthesize_recording(&[], &cfg, 4.0, 0).unwrap();
        let (w, wo) = (with.channel("Pz").unwrap(), without.channel("Pz").unwrap());
        let diff: Vec<f64> = (512..768).map(|i| w[i] - wo[i]).collect();
        let planted: Vec<f64> = (0..256)
            .map(|i| {
                let t = i as f64 / 256.0;
                5.0 * (-(t - 0.38f64).powi(2) / (2.0 * 0.06 * 0.06)).exp()
            })
            .collect();
        let r = correlation(&diff, &planted);
        assert!(r > 0.99, "{r}");
    }

    fn correlation(a: &[f64], b: &[f64]) -> f64 {
        let ma = a.iter().sum::<f64>() / a.len() as f64;
        let mb = b.iter().sum::<f64>() / b.len() as f64;
        let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
        for (x, y) in a.iter().zip(b) {
            sab += (x - ma) * (y - mb);
            saa += (x - ma).powi(2);
            sbb += (y - mb).powi(2);
        }
        sab / (saa * sbb).sqrt()
    }

    #[test]
    fn ssvep_13hz_peaks_at_o2() {
        let cfg = SynthConfig {
            blink_rate_per_min: 0.0,
            ..quiet()
        };
        let events: Vec<SynthEvent> = (0..10)
            .map(|k| {
                SynthEvent::new(
                    1.0 + 5.0 * k as f64,
                    SynthEventKind::SsvepFlash {
                        toggles: toggle_schedule(13, 60, 4.0),
                        duration: 4.0,
                    },
                )
            })
            .collect();
        let with = synthesize_recording(&events, &cfg, 52.0, 0).unwrap();
        let without = synthesize_recording(&[], &cfg, 52.0, 0).unwrap();
        let d: Vec<f64> = with
            .channel("O2")
            .unwrap()
            .iter()
            .zip(without.channel("O2").unwrap())
            .map(|(a, b)| a - b)
            .collect();
        let seg = &d[256..256 + 1024];
        let best = (10..=80)
            .map(|k| k as f64 * 0.25)
            .max_by(|a, b| bin_power(seg, 256.0, *a).total_cmp(&bin_power(seg, 256.0, *b)))
            .unwrap();
        assert!((best - 13.0).abs() <= 0.5, "{best}");
        // and the planted signal is absent away from the occipital channels
        let fz_diff: f64 = with
            .channel("Fz")
            .unwrap()
            .iter()
            .zip(without.channel("Fz").unwrap())
            .map(|(a, b)| (a - b).abs())
            .sum();
        assert_eq!(fz_diff, 0.0);
    }

    #[test]
    fn motor_window_halves_contralateral_mu_only() {
        let cfg = SynthConfig {
            blink_rate_per_min: 0.0,
            ..quiet()
        };
        let ev = [SynthEvent::new(
            1.0,
            SynthEventKind::MotorWindow {
                side: Side::Right,
                duration: 2.0,
            },
        )];
        let with = synthesize_recording(&ev, &cfg, 4.0, 0).unwrap();
        let without = synthesize_recording(&[], &cfg, 4.0, 0).unwrap();
        let c3: Vec<f64> = with
            .channel("C3")
            .unwrap()
            .iter()
            .zip(without.channel("C3").unwrap())
            .map(|(a, b)| a - b)
            .collect();
        let c4_same = with.channel("C4").unwrap() == without.channel("C4").unwrap();
        assert!(c4_same);
        assert!(c3[..256].iter().all(|&x| x == 0.0));
        assert!(c3[768..].iter().all(|&x| x == 0.0));
        // removed component: half of a 4 µV sinusoid
        let peak = c3[256..768].iter().fold(0.0f64, |m, x| m.max(x.abs()));
        assert!((peak - 2.0).abs() < 0.05, "{peak}");
    }

    #[test]
    fn blinks_are_frontal_and_large() {
        let rec = synthesize_recording(&[], &quiet(), 300.0, 0).unwrap();
        let n = rec.blink_onsets.len();
        assert!((35..=85).contains(&n), "{n} blinks in 5 min");
        let fp1 = rec.channel("Fp1").unwrap();
        let pz = rec.channel("Pz").unwrap();
        let t = rec.blink_onsets[0];
        let at = ((t + 0.12) * 256.0).round() as usize;
        assert!(fp1[at] > 50.0, "{}", fp1[at]);
        assert!(pz[at].abs() < 50.0);
    }

    #[test]
    fn events_outside_duration_counted() {
        let ev = [
            SynthEvent::new(-1.0, SynthEventKind::ErrorNoticed),
            SynthEvent::new(5.0, SynthEventKind::ErrorNoticed),
            SynthEvent::new(1.0, SynthEventKind::ErrorNoticed),
        ];
        let rec = synthesize_recording(&ev, &quiet(), 2.0, 0).unwrap();
        assert_eq!(rec.skipped_events, 2);
        assert_eq!(rec.frames(), 512);
    }

    #[test]
    fn flicker_phase_tracks_toggles() {
        let tg = toggle_schedule(15, 60, 1.0);
        assert_eq!(flicker_phase(&tg, 0.0), 0.0);
        assert!((flicker_phase(&tg, tg[0]) - PI).abs() < 1e-12);
        assert!((flicker_phase(&tg, tg[3]) - 4.0 * PI).abs() < 1e-12);
        assert!((flicker_phase(&tg, 1.0 / 60.0) - PI / 2.0).abs() < 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        /// Adding events only adds their templates on top of an unchanged
        /// background.
        #[test]
        fn superposition(times in proptest::collection::vec(0.0f64..3.0, 1..6), seed in 0u64..100) {
            let cfg = SynthConfig { seed, ..SynthConfig::default() };
            let base = [SynthEvent::new(0.25, SynthEventKind::VisualOnset { target: false })];
            let extra: Vec<SynthEvent> = times.iter().map(|&t| SynthEvent::new(t, SynthEventKind::ErrorNoticed)).collect();
            let mut both = base.to_vec();
            both.extend(extra.iter().cloned());
            let a = synthesize_recording(&base, &cfg, 4.0, 0).unwrap();
            let ab = synthesize_recording(&both, &cfg, 4.0, 0).unwrap();
            let errp = make_template(TemplateKind::Errp);
            for label in ["Fz", "Cz", "Pz", "O1"] {
                let w = errp.spatial_weights[idx(label)];
                let (x, y) = (a.channel(label).unwrap(), ab.channel(label).unwrap());
                for n in 0..x.len() {
                    let expected: f64 = times.iter().map(|&t| w * errp.value(n as f64 / 256.0 - t)).sum();
                    prop_assert!((y[n] - x[n] - expected).abs() < 1e-3, "{} {} {}", label, n, y[n] - x[n] - expected);
                }
            }
            prop_assert!(ab.data.iter().all(|v| v.is_finite() && v.abs() < 1000.0));
        }
    }
}
