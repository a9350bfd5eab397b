// SPDX-License-Identifier: Apache-2.0

//! Platform and calibration configuration.
//!
//! The configuration document is a flat `key = value` file with two sections,
//! `[platform]` for the accelerator architecture options and `[calibration]`
//! for the timing constants of the model. Omitted keys take the defaults of the
//! reference implementation; values outside the architecture's option menu but
//! otherwise sane produce warnings instead of errors.

use std::fmt::{self, Write as _};
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("line {line}: unknown key `{key}` in section [{section}]")]
    UnknownKey {
        line: usize,
        section: String,
        key: String,
    },
    #[error("line {line}: invalid value `{value}` for `{key}`")]
    BadValue {
        line: usize,
        key: String,
        value: String,
    },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Interconnect {
    Bus,
    Noc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FpuMode {
    Private,
    Shared,
    Off,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum IntDspMode {
    Private,
    Shared,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum IcacheDesign {
    SinglePorted,
    MultiPorted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VictimPolicyKind {
    Fifo,
    RoundRobin,
    Random,
}

macro_rules! keyword_enum {
    ($ty:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        impl $ty {
            pub fn as_str(self) -> &'static str {
                match self {
                    $($ty::$variant => $text),+
                }
            }
        }

        impl FromStr for $ty {
            type Err = ();

            fn from_str(s: &str) -> Result<Self, ()> {
                match s {
                    $($text => Ok($ty::$variant),)+
                    _ => Err(()),
                }
            }
        }

        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }
    };
}

keyword_enum!(Interconnect { Bus => "bus", Noc => "noc" });
keyword_enum!(FpuMode { Private => "private", Shared => "shared", Off => "off" });
keyword_enum!(IntDspMode { Private => "private", Shared => "shared" });
keyword_enum!(IcacheDesign { SinglePorted => "single_ported", MultiPorted => "multi_ported" });
keyword_enum!(VictimPolicyKind { Fifo => "fifo", RoundRobin => "round_robin", Random => "random" });

/// Architecture options of the accelerator.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PlatformConfig {
    pub n_clusters: u32,
    pub interconnect: Interconnect,
    pub pes_per_cluster: u32,
    pub fpu_mode: FpuMode,
    pub intdsp_mode: IntDspMode,
    pub l1_spm_banks: u32,
    pub l1_spm_kib: u32,
    pub l2_spm_kib: u32,
    pub icache_design: IcacheDesign,
    pub icache_kib: u32,
    pub icache_banks: u32,
    pub rab_l1_slots: u32,
    /// Zero disables the L2 TLB.
    pub rab_l2_entries: u32,
    pub rab_l2_assoc: u32,
    pub rab_l2_banks: u32,
}

impl Default for PlatformConfig {
    fn default() -> Self {
        Self {
            n_clusters: 8,
            interconnect: Interconnect::Bus,
            pes_per_cluster: 8,
            fpu_mode: FpuMode::Off,
            intdsp_mode: IntDspMode::Private,
            l1_spm_banks: 16,
            l1_spm_kib: 256,
            l2_spm_kib: 256,
            icache_design: IcacheDesign::SinglePorted,
            icache_kib: 8,
            icache_banks: 8,
            rab_l1_slots: 32,
            rab_l2_entries: 1024,
            rab_l2_assoc: 32,
            rab_l2_banks: 4,
        }
    }
}

impl PlatformConfig {
    /// Single-cluster configuration resembling the smaller reference board.
    pub fn single_cluster() -> Self {
        Self {
            n_clusters: 1,
            ..Self::default()
        }
    }

    pub fn l1_spm_bytes(&self) -> u32 {
        self.l1_spm_kib * 1024
    }

    pub fn l2_sets_per_bank(&self) -> u32 {
        if self.rab_l2_entries == 0 {
            0
        } else {
            self.rab_l2_entries / (self.rab_l2_assoc * self.rab_l2_banks)
        }
    }

    pub fn total_pes(&self) -> u32 {
        self.n_clusters * self.pes_per_cluster
    }
}

/// Timing constants of the model and simulator options.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationConfig {
    pub dram_base_latency: u64,
    pub dram_beat_bytes: u64,
    pub dram_beat_cycles: u64,
    /// Aggregate bus bandwidth in bytes per cycle.
    pub bus_bandwidth: u64,
    /// Per-cluster NoC link bandwidth in bytes per cycle.
    pub noc_link_bandwidth: u64,
    /// Host throughput when copying into the uncached contiguous section.
    pub host_copy_bytes_per_cycle: f64,
    pub lds_rewrite_cycles_per_node: u64,
    /// Ways searched per L2 TLB bank per cycle.
    pub l2_ways_per_cycle: u64,
    pub miss_queue_depth: u32,
    pub ptw_levels: u32,
    pub wake_latency: u64,
    pub rab_config_write_latency: u64,
    /// Target-silicon to emulation clock frequency ratio.
    pub clock_ratio: f64,
    /// Fixed host cost of building and dispatching an offload descriptor.
    pub descriptor_cycles: u64,
    pub dma_channels: u32,
    pub vmm_handler_pe: u32,
    pub victim_policy: VictimPolicyKind,
    /// Also install handled misses into the L2 TLB.
    pub vmm_install_l2: bool,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self {
            dram_base_latency: 8,
            dram_beat_bytes: 8,
            dram_beat_cycles: 1,
            bus_bandwidth: 16,
            noc_link_bandwidth: 16,
            host_copy_bytes_per_cycle: 0.25,
            lds_rewrite_cycles_per_node: 20,
            l2_ways_per_cycle: 8,
            miss_queue_depth: 16,
            ptw_levels: 2,
            wake_latency: 2,
            rab_config_write_latency: 2,
            clock_ratio: 1.0,
            descriptor_cycles: 500,
            dma_channels: 4,
            vmm_handler_pe: 7,
            victim_policy: VictimPolicyKind::Fifo,
            vmm_install_l2: false,
        }
    }
}

impl CalibrationConfig {
    /// Cycles one L2 TLB search occupies the lookup unit.
    pub fn l2_search_cycles(&self, assoc: u32) -> u64 {
        (assoc as u64).div_ceil(self.l2_ways_per_cycle)
    }

    /// Uncontended DRAM access latency for `bytes` bytes.
    pub fn dram_latency(&self, bytes: u64) -> u64 {
        self.dram_base_latency + bytes.div_ceil(self.dram_beat_bytes) * self.dram_beat_cycles
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Severity {
    Warning,
    Error,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub severity: Severity,
    pub field: &'static str,
    pub message: String,
}

impl Diagnostic {
    fn warn(field: &'static str, message: impl Into<String>) -> Self {
        Self {
            severity: Severity::Warning,
            field,
            message: message.into(),
        }
    }

    fn error(field: &'static str, message: impl Into<String>) -> Self {
        Self {
            severity: Severity::Error,
            field,
            message: message.into(),
        }
    }

    pub fn is_error(&self) -> bool {
        self.severity == Severity::Error
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = match self.severity {
            Severity::Warning => "warning",
            Severity::Error => "error",
        };
        write!(f, "{tag}: {}: {}", self.field, self.message)
    }
}

/// Option menus of the accelerator template.
pub mod menu {
    pub const N_CLUSTERS: &[u32] = &[1, 2, 4, 8];
    pub const PES_PER_CLUSTER: &[u32] = &[2, 4, 8];
    pub const L1_SPM_BANKS: &[u32] = &[4, 8, 16];
    pub const L1_SPM_KIB: &[u32] = &[32, 64, 128, 256];
    pub const L2_SPM_KIB: &[u32] = &[32, 64, 128, 256];
    pub const ICACHE_KIB: &[u32] = &[2, 4, 8];
    pub const ICACHE_BANKS: &[u32] = &[2, 4, 8];
    pub const RAB_L1_SLOTS: &[u32] = &[4, 8, 16, 32, 64];
    pub const RAB_L2_ENTRIES: &[u32] = &[0, 256, 512, 1024, 2048];
    pub const RAB_L2_ASSOC: &[u32] = &[16, 32, 64];
    pub const RAB_L2_BANKS: &[u32] = &[1, 2, 4, 8];
}

/// Check a platform configuration. Errors make the configuration unusable;
/// warnings flag values outside the option menu.
pub fn validate(cfg: &PlatformConfig) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let on_menu = |field: &'static str, value: u32, allowed: &[u32], out: &mut Vec<Diagnostic>| {
        if !allowed.contains(&value) {
            out.push(Diagnostic::warn(
                field,
                format!("{value} is not one of the implemented options {allowed:?}"),
            ));
        }
    };

    if cfg.n_clusters == 0 {
        out.push(Diagnostic::error("n_clusters", "at least one cluster is required"));
    } else {
        on_menu("n_clusters", cfg.n_clusters, menu::N_CLUSTERS, &mut out);
    }
    if cfg.n_clusters > 0xFFFF {
        out.push(Diagnostic::error("n_clusters", "cluster id must fit in 16 bits"));
    }
    if cfg.pes_per_cluster < 2 {
        out.push(Diagnostic::error("pes_per_cluster", "at least two PEs per cluster are required"));
    } else {
        on_menu("pes_per_cluster", cfg.pes_per_cluster, menu::PES_PER_CLUSTER, &mut out);
    }
    if cfg.pes_per_cluster > 0xFF {
        out.push(Diagnostic::error("pes_per_cluster", "PE id must fit in 8 bits"));
    }
    for (field, value, allowed) in [
        ("l1_spm_banks", cfg.l1_spm_banks, menu::L1_SPM_BANKS),
        ("l1_spm_kib", cfg.l1_spm_kib, menu::L1_SPM_KIB),
        ("l2_spm_kib", cfg.l2_spm_kib, menu::L2_SPM_KIB),
        ("icache_kib", cfg.icache_kib, menu::ICACHE_KIB),
        ("icache_banks", cfg.icache_banks, menu::ICACHE_BANKS),
        ("rab_l1_slots", cfg.rab_l1_slots, menu::RAB_L1_SLOTS),
    ] {
        if value == 0 {
            out.push(Diagnostic::error(field, "must be nonzero"));
        } else {
            on_menu(field, value, allowed, &mut out);
        }
    }
    if cfg.rab_l1_slots > 4096 {
        out.push(Diagnostic::error("rab_l1_slots", "at most 4096 L1 slots are addressable"));
    }
    on_menu("rab_l2_entries", cfg.rab_l2_entries, menu::RAB_L2_ENTRIES, &mut out);
    if cfg.rab_l2_assoc == 0 || cfg.rab_l2_banks == 0 {
        out.push(Diagnostic::error(
            "rab_l2_assoc",
            "L2 associativity and bank count must be nonzero",
        ));
    } else {
        on_menu("rab_l2_assoc", cfg.rab_l2_assoc, menu::RAB_L2_ASSOC, &mut out);
        on_menu("rab_l2_banks", cfg.rab_l2_banks, menu::RAB_L2_BANKS, &mut out);
        let group = cfg.rab_l2_assoc * cfg.rab_l2_banks;
        if !cfg.rab_l2_entries.is_multiple_of(group) {
            out.push(Diagnostic::error(
                "rab_l2_entries",
                format!(
                    "{} entries not divisible by associativity x banks = {group}",
                    cfg.rab_l2_entries
                ),
            ));
        }
    }
    out
}

/// Check calibration constants; every returned diagnostic is an error.
pub fn validate_calibration(cal: &CalibrationConfig) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    for (field, value) in [
        ("dram_beat_bytes", cal.dram_beat_bytes),
        ("dram_beat_cycles", cal.dram_beat_cycles),
        ("bus_bandwidth", cal.bus_bandwidth),
        ("noc_link_bandwidth", cal.noc_link_bandwidth),
        ("l2_ways_per_cycle", cal.l2_ways_per_cycle),
        ("miss_queue_depth", cal.miss_queue_depth as u64),
        ("ptw_levels", cal.ptw_levels as u64),
        ("dma_channels", cal.dma_channels as u64),
    ] {
        if value == 0 {
            out.push(Diagnostic::error(field, "must be strictly positive"));
        }
    }
    if !(cal.host_copy_bytes_per_cycle > 0.0 && cal.host_copy_bytes_per_cycle.is_finite()) {
        out.push(Diagnostic::error("host_copy_bytes_per_cycle", "must be strictly positive"));
    }
    if !(cal.clock_ratio > 0.0 && cal.clock_ratio.is_finite()) {
        out.push(Diagnostic::error("clock_ratio", "must be strictly positive"));
    }
    out
}

/// A parsed configuration document.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SimConfig {
    pub platform: PlatformConfig,
    pub calibration: CalibrationConfig,
    /// Warnings collected while validating.
    pub warnings: Vec<Diagnostic>,
}

impl SimConfig {
    pub fn new(platform: PlatformConfig, calibration: CalibrationConfig) -> Result<Self, ConfigError> {
        let mut diags = validate(&platform);
        diags.extend(validate_calibration(&calibration));
        if let Some(err) = diags.iter().find(|d| d.is_error()) {
            return Err(ConfigError::Invalid(err.to_string()));
        }
        if platform.vmm_handler_out_of_range(&calibration) {
            return Err(ConfigError::Invalid(format!(
                "vmm_handler_pe {} is not a PE of a {}-PE cluster",
                calibration.vmm_handler_pe, platform.pes_per_cluster
            )));
        }
        Ok(Self {
            platform,
            calibration,
            warnings: diags,
        })
    }

    /// Stable 64-bit digest of the serialized configuration.
    pub fn hash(&self) -> u64 {
        fnv1a(serialize(&self.platform, &self.calibration).as_bytes())
    }
}

impl PlatformConfig {
    fn vmm_handler_out_of_range(&self, cal: &CalibrationConfig) -> bool {
        cal.vmm_handler_pe >= self.pes_per_cluster
    }
}

pub(crate) fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Section {
    None,
    Platform,
    Calibration,
}

fn parse_num<T: FromStr>(line: usize, key: &str, value: &str) -> Result<T, ConfigError> {
    value.parse().map_err(|_| ConfigError::BadValue {
        line,
        key: key.to_string(),
        value: value.to_string(),
    })
}

fn parse_kw<T: FromStr>(line: usize, key: &str, value: &str) -> Result<T, ConfigError> {
    value.parse().map_err(|_| ConfigError::BadValue {
        line,
        key: key.to_string(),
        value: value.to_string(),
    })
}

/// Parse a configuration document; omitted keys keep their defaults.
pub fn parse_config(text: &str) -> Result<SimConfig, ConfigError> {
    let mut p = PlatformConfig::default();
    let mut c = CalibrationConfig::default();
    let mut section = Section::None;

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if let Some(rest) = content.strip_prefix('[') {
            let name = rest.strip_suffix(']').ok_or_else(|| ConfigError::Syntax {
                line,
                msg: "unterminated section header".into(),
            })?;
            section = match name.trim() {
                "platform" => Section::Platform,
                "calibration" => Section::Calibration,
                other => {
                    return Err(ConfigError::Syntax {
                        line,
                        msg: format!("unknown section [{other}]"),
                    })
                }
            };
            continue;
        }
        let (key, value) = content.split_once('=').ok_or_else(|| ConfigError::Syntax {
            line,
            msg: "expected `key = value`".into(),
        })?;
        let (key, value) = (key.trim(), value.trim());
        if key.is_empty() || value.is_empty() {
            return Err(ConfigError::Syntax {
                line,
                msg: "empty key or value".into(),
            });
        }
        let unknown = |section: &str| ConfigError::UnknownKey {
            line,
            section: section.to_string(),
            key: key.to_string(),
        };
        match section {
            Section::None => {
                return Err(ConfigError::Syntax {
                    line,
                    msg: "key outside of a [platform] or [calibration] section".into(),
                })
            }
            Section::Platform => match key {
                "n_clusters" => p.n_clusters = parse_num(line, key, value)?,
                "interconnect" => p.interconnect = parse_kw(line, key, value)?,
                "pes_per_cluster" => p.pes_per_cluster = parse_num(line, key, value)?,
                "fpu_mode" => p.fpu_mode = parse_kw(line, key, value)?,
                "intdsp_mode" => p.intdsp_mode = parse_kw(line, key, value)?,
                "l1_spm_banks" => p.l1_spm_banks = parse_num(line, key, value)?,
                "l1_spm_kib" => p.l1_spm_kib = parse_num(line, key, value)?,
                "l2_spm_kib" => p.l2_spm_kib = parse_num(line, key, value)?,
                "icache_design" => p.icache_design = parse_kw(line, key, value)?,
                "icache_kib" => p.icache_kib = parse_num(line, key, value)?,
                "icache_banks" => p.icache_banks = parse_num(line, key, value)?,
                "rab_l1_slots" => p.rab_l1_slots = parse_num(line, key, value)?,
                "rab_l2_entries" => p.rab_l2_entries = parse_num(line, key, value)?,
                "rab_l2_assoc" => p.rab_l2_assoc = parse_num(line, key, value)?,
                "rab_l2_banks" => p.rab_l2_banks = parse_num(line, key, value)?,
                _ => return Err(unknown("platform")),
            },
            Section::Calibration => match key {
                "dram_base_latency" => c.dram_base_latency = parse_num(line, key, value)?,
                "dram_beat_bytes" => c.dram_beat_bytes = parse_num(line, key, value)?,
                "dram_beat_cycles" => c.dram_beat_cycles = parse_num(line, key, value)?,
                "bus_bandwidth" => c.bus_bandwidth = parse_num(line, key, value)?,
                "noc_link_bandwidth" => c.noc_link_bandwidth = parse_num(line, key, value)?,
                "host_copy_bytes_per_cycle" => {
                    c.host_copy_bytes_per_cycle = parse_num(line, key, value)?
                }
                "lds_rewrite_cycles_per_node" => {
                    c.lds_rewrite_cycles_per_node = parse_num(line, key, value)?
                }
                "l2_ways_per_cycle" => c.l2_ways_per_cycle = parse_num(line, key, value)?,
                "miss_queue_depth" => c.miss_queue_depth = parse_num(line, key, value)?,
                "ptw_levels" => c.ptw_levels = parse_num(line, key, value)?,
                "wake_latency" => c.wake_latency = parse_num(line, key, value)?,
                "rab_config_write_latency" => {
                    c.rab_config_write_latency = parse_num(line, key, value)?
                }
                "clock_ratio" => c.clock_ratio = parse_num(line, key, value)?,
                "descriptor_cycles" => c.descriptor_cycles = parse_num(line, key, value)?,
                "dma_channels" => c.dma_channels = parse_num(line, key, value)?,
                "vmm_handler_pe" => c.vmm_handler_pe = parse_num(line, key, value)?,
                "victim_policy" => c.victim_policy = parse_kw(line, key, value)?,
                "vmm_install_l2" => c.vmm_install_l2 = parse_num(line, key, value)?,
                _ => return Err(unknown("calibration")),
            },
        }
    }
    // The default handler is the last PE; follow smaller clusters unless set explicitly.
    if !text_sets_key(text, "vmm_handler_pe") {
        c.vmm_handler_pe = p.pes_per_cluster.saturating_sub(1);
    }
    SimConfig::new(p, c)
}

fn text_sets_key(text: &str, key: &str) -> bool {
    text.lines().any(|l| {
        l.split('#')
            .next()
            .and_then(|l| l.split_once('='))
            .is_some_and(|(k, _)| k.trim() == key)
    })
}

/// Write a configuration document that `parse_config` reads back unchanged.
pub fn serialize(p: &PlatformConfig, c: &CalibrationConfig) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "[platform]");
    let _ = writeln!(s, "n_clusters = {}", p.n_clusters);
    let _ = writeln!(s, "interconnect = {}", p.interconnect);
    let _ = writeln!(s, "pes_per_cluster = {}", p.pes_per_cluster);
    let _ = writeln!(s, "fpu_mode = {}", p.fpu_mode);
    let _ = writeln!(s, "intdsp_mode = {}", p.intdsp_mode);
    let _ = writeln!(s, "l1_spm_banks = {}", p.l1_spm_banks);
    let _ = writeln!(s, "l1_spm_kib = {}", p.l1_spm_kib);
    let _ = writeln!(s, "l2_spm_kib = {}", p.l2_spm_kib);
    let _ = writeln!(s, "icache_design = {}", p.icache_design);
    let _ = writeln!(s, "icache_kib = {}", p.icache_kib);
    let _ = writeln!(s, "icache_banks = {}", p.icache_banks);
    let _ = writeln!(s, "rab_l1_slots = {}", p.rab_l1_slots);
    let _ = writeln!(s, "rab_l2_entries = {}", p.rab_l2_entries);
    let _ = writeln!(s, "rab_l2_assoc = {}", p.rab_l2_assoc);
    let _ = writeln!(s, "rab_l2_banks = {}", p.rab_l2_banks);
    let _ = writeln!(s);
    let _ = writeln!(s, "[calibration]");
    let _ = writeln!(s, "dram_base_latency = {}", c.dram_base_latency);
    let _ = writeln!(s, "dram_beat_bytes = {}", c.dram_beat_bytes);
    let _ = writeln!(s, "dram_beat_cycles = {}", c.dram_beat_cycles);
    let _ = writeln!(s, "bus_bandwidth = {}", c.bus_bandwidth);
    let _ = writeln!(s, "noc_link_bandwidth = {}", c.noc_link_bandwidth);
    let _ = writeln!(s, "host_copy_bytes_per_cycle = {:?}", c.host_copy_bytes_per_cycle);
    let _ = writeln!(s, "lds_rewrite_cycles_per_node = {}", c.lds_rewrite_cycles_per_node);
    let _ = writeln!(s, "l2_ways_per_cycle = {}", c.l2_ways_per_cycle);
    let _ = writeln!(s, "miss_queue_depth = {}", c.miss_queue_depth);
    let _ = writeln!(s, "ptw_levels = {}", c.ptw_levels);
    let _ = writeln!(s, "wake_latency = {}", c.wake_latency);
    let _ = writeln!(s, "rab_config_write_latency = {}", c.rab_config_write_latency);
    let _ = writeln!(s, "clock_ratio = {:?}", c.clock_ratio);
    let _ = writeln!(s, "descriptor_cycles = {}", c.descriptor_cycles);
    let _ = writeln!(s, "dma_channels = {}", c.dma_channels);
    let _ = writeln!(s, "vmm_handler_pe = {}", c.vmm_handler_pe);
    let _ = writeln!(s, "victim_policy = {}", c.victim_policy);
    let _ = writeln!(s, "vmm_install_l2 = {}", c.vmm_install_l2);
    s
}
