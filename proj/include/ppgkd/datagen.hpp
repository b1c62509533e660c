#pragma once

// Synthetic PPG signal generation and the binary dataset format.
//
// Each cardiac cycle is rendered as two Gaussian lobes: a systolic peak at
// 30% of the beat interval (width 6% of the interval, amplitude 1.0) and a
// dicrotic bump at 65% (width 8%, amplitude 0.35). Beat-to-beat intervals are
// 60/hr seconds perturbed multiplicatively by uniform noise of half-width
// rr_jitter. White noise and a 0.25 Hz sinusoidal baseline wander are added
// on top, and the finished signal is z-scored per record.

#include "ppgkd/rng.hpp"

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace ppgkd {

enum class TaskType : std::uint32_t { regression = 0, classification = 1 };

struct PpgRecord {
  std::vector<double> samples;
  double label = 0.0;  // bpm for regression, 0/1 class id for classification
  int sample_rate = 0;
  std::uint64_t seed = 0;  // generation metadata, not serialized
};

struct Dataset {
  TaskType task = TaskType::regression;
  std::uint32_t sample_rate = 0;
  std::vector<PpgRecord> records;

  std::size_t size() const { return records.size(); }
  std::size_t signal_len() const {
    return records.empty() ? 0 : records.front().samples.size();
  }
};

struct IoError : std::runtime_error {
  enum class Kind {
    open_failed,
    bad_magic,
    bad_version,
    bad_header,
    truncated,
    trailing_data,
    label_mismatch,
  };
  Kind kind;
  IoError(Kind k, const std::string& msg) : std::runtime_error(msg), kind(k) {}
};

namespace detail {

inline double gauss_lobe(double x, double sigma) {
  return std::exp(-(x * x) / (2.0 * sigma * sigma));
}

}  // namespace detail

inline PpgRecord generate_ppg(double hr_bpm, double duration_s, int sample_rate,
                              double rr_jitter, double noise_std,
                              double wander_amp, std::uint64_t seed) {
  if (!(hr_bpm >= 30.0 && hr_bpm <= 220.0))
    throw std::invalid_argument("generate_ppg: hr_bpm must be in [30, 220]");
  if (!(duration_s > 0.0) || sample_rate < 1)
    throw std::invalid_argument("generate_ppg: duration and rate must be positive");
  if (rr_jitter < 0.0 || noise_std < 0.0 || wander_amp < 0.0)
    throw std::invalid_argument("generate_ppg: noise parameters must be >= 0");
  const double len_real = duration_s * sample_rate;
  const auto len = static_cast<long long>(std::llround(len_real));
  if (len < 1 || std::fabs(len_real - static_cast<double>(len)) > 1e-9)
    throw std::invalid_argument(
        "generate_ppg: duration_s * sample_rate must be a positive integer");

  Rng rng(seed);

  // Beat onsets covering [0, duration).
  std::vector<double> onsets, intervals;
  const double base = 60.0 / hr_bpm;
  double t = 0.0;
  while (t < duration_s - 1e-12) {
    double factor = 1.0 + rr_jitter * (2.0 * rng.uniform() - 1.0);
    onsets.push_back(t);
    intervals.push_back(base * factor);
    t += intervals.back();
  }
  double mean_interval = 0.0;
  for (double iv : intervals) mean_interval += iv;
  mean_interval /= static_cast<double>(intervals.size());

  // The rendered beat train continues two beats past each window edge so
  // that edge samples see the same lobe neighborhood as interior ones; with
  // zero jitter this is exactly the periodic extension.
  struct Beat {
    double onset, interval;
  };
  std::vector<Beat> beats;
  beats.reserve(onsets.size() + 4);
  for (int k = 2; k >= 1; --k)
    beats.push_back({onsets.front() - k * intervals.front(), intervals.front()});
  for (std::size_t b = 0; b < onsets.size(); ++b)
    beats.push_back({onsets[b], intervals[b]});
  const double tail_start = onsets.back() + intervals.back();
  for (int k = 0; k <= 1; ++k)
    beats.push_back({tail_start + k * intervals.back(), intervals.back()});

  const double wander_phase = 2.0 * 3.14159265358979323846 * rng.uniform();
  const double wander_freq = 0.25;  // Hz

  PpgRecord rec;
  rec.sample_rate = sample_rate;
  rec.seed = seed;
  rec.label = 60.0 / mean_interval;
  rec.samples.resize(static_cast<std::size_t>(len));
  for (long long i = 0; i < len; ++i) {
    const double ti = static_cast<double>(i) / sample_rate;
    double v = wander_amp * std::sin(2.0 * 3.14159265358979323846 *
                                         wander_freq * ti +
                                     wander_phase);
    for (const Beat& b : beats) {
      v += detail::gauss_lobe(ti - (b.onset + 0.30 * b.interval), 0.06 * b.interval);
      v += 0.35 * detail::gauss_lobe(ti - (b.onset + 0.65 * b.interval),
                                     0.08 * b.interval);
    }
    if (noise_std > 0.0) v += noise_std * rng.normal();
    rec.samples[static_cast<std::size_t>(i)] = v;
  }

  // z-score per record
  double mu = 0.0;
  for (double v : rec.samples) mu += v;
  mu /= static_cast<double>(len);
  double var = 0.0;
  for (double v : rec.samples) var += (v - mu) * (v - mu);
  var /= static_cast<double>(len);
  const double sd = std::sqrt(var);
  if (!(sd > 1e-12))
    throw std::runtime_error("generate_ppg: degenerate flat signal");
  for (double& v : rec.samples) v = (v - mu) / sd;
  return rec;
}

inline Dataset generate_hr_dataset(std::size_t n, double hr_lo, double hr_hi,
                                   double duration_s, int sample_rate,
                                   double rr_jitter, double noise_std,
                                   double wander_amp, std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("generate_hr_dataset: n must be >= 1");
  if (!(hr_lo <= hr_hi) || hr_lo < 30.0 || hr_hi > 220.0)
    throw std::invalid_argument("generate_hr_dataset: invalid hr range");
  Dataset ds;
  ds.task = TaskType::regression;
  ds.sample_rate = static_cast<std::uint32_t>(sample_rate);
  ds.records.reserve(n);
  Rng draw(derive_seed(seed, "hr-draw"));
  for (std::size_t i = 0; i < n; ++i) {
    const double hr = hr_lo == hr_hi ? hr_lo : draw.uniform(hr_lo, hr_hi);
    const std::uint64_t rec_seed = derive_seed(seed, "hr-record", i + 1);
    ds.records.push_back(generate_ppg(hr, duration_s, sample_rate, rr_jitter,
                                      noise_std, wander_amp, rec_seed));
  }
  return ds;
}

// AF-style binary task: the classes differ only in beat-timing regularity.
// Class 1 ("AF-like") uses rr_jitter = 0.30, class 0 uses 0.03; per-record
// heart rate is uniform in [60, 100] bpm.
inline Dataset generate_af_dataset(std::size_t n, double af_fraction,
                                   double duration_s, int sample_rate,
                                   std::uint64_t seed, double noise_std = 0.05,
                                   double wander_amp = 0.1) {
  if (n < 2) throw std::invalid_argument("generate_af_dataset: n must be >= 2");
  if (!(af_fraction > 0.0 && af_fraction < 1.0))
    throw std::invalid_argument("generate_af_dataset: af_fraction must be in (0,1)");
  const auto n_pos = static_cast<std::size_t>(
      std::llround(af_fraction * static_cast<double>(n)));

  std::vector<int> labels(n, 0);
  for (std::size_t i = 0; i < n_pos && i < n; ++i) labels[i] = 1;
  Rng shuffle_rng(derive_seed(seed, "af-shuffle"));
  shuffle_rng.shuffle(labels);

  Dataset ds;
  ds.task = TaskType::classification;
  ds.sample_rate = static_cast<std::uint32_t>(sample_rate);
  ds.records.reserve(n);
  Rng draw(derive_seed(seed, "af-draw"));
  for (std::size_t i = 0; i < n; ++i) {
    const double hr = draw.uniform(60.0, 100.0);
    const double jitter = labels[i] == 1 ? 0.30 : 0.03;
    const std::uint64_t rec_seed = derive_seed(seed, "af-record", i + 1);
    PpgRecord rec = generate_ppg(hr, duration_s, sample_rate, jitter, noise_std,
                                 wander_amp, rec_seed);
    rec.label = static_cast<double>(labels[i]);
    ds.records.push_back(std::move(rec));
  }
  return ds;
}

// ---- binary format ---------------------------------------------------------
//
// Header (all little-endian): magic "PPGD", u32 version=1, u32 task,
// u32 record_count, u32 signal_length, u32 sample_rate. Then per record:
// signal_length float32 samples, followed by the label as float32
// (regression) or u32 (classification).

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
  out.push_back(static_cast<char>(v & 0xFF));
  out.push_back(static_cast<char>((v >> 8) & 0xFF));
  out.push_back(static_cast<char>((v >> 16) & 0xFF));
  out.push_back(static_cast<char>((v >> 24) & 0xFF));
}

inline void put_f32(std::string& out, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32(out, bits);
}

inline std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) |
         (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) |
         (static_cast<std::uint32_t>(p[3]) << 24);
}

inline float get_f32(const unsigned char* p) {
  std::uint32_t bits = get_u32(p);
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

}  // namespace detail

inline void write_dataset(const Dataset& ds, const std::string& path) {
  if (ds.records.empty())
    throw IoError(IoError::Kind::bad_header, "write_dataset: empty dataset");
  const std::size_t len = ds.signal_len();
  if (len == 0)
    throw IoError(IoError::Kind::bad_header, "write_dataset: zero-length signals");
  for (const auto& r : ds.records) {
    if (r.samples.size() != len)
      throw IoError(IoError::Kind::bad_header,
                    "write_dataset: inconsistent signal lengths");
    if (ds.task == TaskType::classification) {
      if (r.label != 0.0 && r.label != 1.0)
        throw IoError(IoError::Kind::label_mismatch,
                      "write_dataset: classification label not in {0,1}");
    } else if (!(r.label > 0.0)) {
      throw IoError(IoError::Kind::label_mismatch,
                    "write_dataset: regression label must be > 0");
    }
  }

  std::string buf;
  buf.reserve(24 + ds.records.size() * (len + 1) * 4);
  buf += "PPGD";
  detail::put_u32(buf, 1u);
  detail::put_u32(buf, static_cast<std::uint32_t>(ds.task));
  detail::put_u32(buf, static_cast<std::uint32_t>(ds.records.size()));
  detail::put_u32(buf, static_cast<std::uint32_t>(len));
  detail::put_u32(buf, ds.sample_rate);
  for (const auto& r : ds.records) {
    for (double s : r.samples) detail::put_f32(buf, static_cast<float>(s));
    if (ds.task == TaskType::classification)
      detail::put_u32(buf, static_cast<std::uint32_t>(r.label));
    else
      detail::put_f32(buf, static_cast<float>(r.label));
  }

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out)
    throw IoError(IoError::Kind::open_failed, "write_dataset: cannot open " + path);
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out)
    throw IoError(IoError::Kind::open_failed, "write_dataset: write failed to " + path);
}

inline Dataset read_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw IoError(IoError::Kind::open_failed, "read_dataset: cannot open " + path);
  std::string raw((std::istreambuf_iterator<char>(in)),
                  std::istreambuf_iterator<char>());
  const auto* p = reinterpret_cast<const unsigned char*>(raw.data());
  const std::size_t size = raw.size();

  if (size < 24) throw IoError(IoError::Kind::truncated, "read_dataset: short header");
  if (std::memcmp(p, "PPGD", 4) != 0)
    throw IoError(IoError::Kind::bad_magic, "read_dataset: bad magic");
  const std::uint32_t version = detail::get_u32(p + 4);
  if (version != 1)
    throw IoError(IoError::Kind::bad_version,
                  "read_dataset: unsupported version " + std::to_string(version));
  const std::uint32_t task_raw = detail::get_u32(p + 8);
  const std::uint32_t count = detail::get_u32(p + 12);
  const std::uint32_t len = detail::get_u32(p + 16);
  const std::uint32_t rate = detail::get_u32(p + 20);
  if (task_raw > 1 || count < 1 || len < 1)
    throw IoError(IoError::Kind::bad_header, "read_dataset: invalid header fields");

  const std::size_t rec_bytes = (static_cast<std::size_t>(len) + 1) * 4;
  const std::size_t need = 24 + static_cast<std::size_t>(count) * rec_bytes;
  if (size < need)
    throw IoError(IoError::Kind::truncated,
                  "read_dataset: payload shorter than header declares");
  if (size > need)
    throw IoError(IoError::Kind::trailing_data,
                  "read_dataset: trailing bytes after payload");

  Dataset ds;
  ds.task = static_cast<TaskType>(task_raw);
  ds.sample_rate = rate;
  ds.records.resize(count);
  const unsigned char* cur = p + 24;
  for (std::uint32_t i = 0; i < count; ++i) {
    auto& rec = ds.records[i];
    rec.sample_rate = static_cast<int>(rate);
    rec.samples.resize(len);
    for (std::uint32_t j = 0; j < len; ++j, cur += 4)
      rec.samples[j] = static_cast<double>(detail::get_f32(cur));
    if (ds.task == TaskType::classification) {
      const std::uint32_t lab = detail::get_u32(cur);
      cur += 4;
      if (lab > 1)
        throw IoError(IoError::Kind::label_mismatch,
                      "read_dataset: classification label out of {0,1}");
      rec.label = static_cast<double>(lab);
    } else {
      const float lab = detail::get_f32(cur);
      cur += 4;
      if (!(lab > 0.0f) || !std::isfinite(lab))
        throw IoError(IoError::Kind::label_mismatch,
                      "read_dataset: regression label must be positive");
      rec.label = static_cast<double>(lab);
    }
  }
  return ds;
}

}  // namespace ppgkd
