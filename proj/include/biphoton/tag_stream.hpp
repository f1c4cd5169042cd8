#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <istream>
#include <limits>
#include <ostream>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "biphoton/errors.hpp"
#include "biphoton/rng.hpp"

namespace biphoton {

// ---------------------------------------------------------------------------
// Streams
// ---------------------------------------------------------------------------

/// Generation metadata carried alongside a stream. Zeroed for streams read
/// back from files.
struct TagStreamMeta {
  double pair_rate = 0.0;     // pairs/s fed to the generator
  double singles_rate = 0.0;  // expected tags/s in this arm
  double duration = 0.0;      // s
  std::uint64_t seed = 0;
};

/// Time-ordered detection events of one detector arm, integer picoseconds.
struct TagStream {
  std::uint16_t detector_id = 0;
  std::vector<std::int64_t> timestamps;  // ps, non-decreasing
  TagStreamMeta meta;

  /// Duration in seconds: generation metadata when present, otherwise the
  /// last timestamp.
  double duration_seconds() const {
    if (meta.duration > 0.0) return meta.duration;
    return timestamps.empty() ? 0.0 : double(timestamps.back()) * 1e-12;
  }

  void validate() const {
    const auto it = std::adjacent_find(timestamps.begin(), timestamps.end(),
                                       [](std::int64_t a, std::int64_t b) { return b < a; });
    if (it != timestamps.end())
      throw data_error("tag stream unsorted at offset " +
                       std::to_string(it - timestamps.begin() + 1));
  }
};

// ---------------------------------------------------------------------------
// Generation
// ---------------------------------------------------------------------------

/// Specification of a synthetic run: homogeneous Poisson pair emission,
/// independent per-arm thinning, optional Gaussian timing jitter, and
/// uncorrelated Poisson background singles per arm.
struct GenSpec {
  double pair_rate = 0.0;           // pairs/s
  double efficiency_a = 1.0;        // keep probability, arm A
  double efficiency_b = 1.0;
  double background_rate_a = 0.0;   // uncorrelated singles/s, arm A
  double background_rate_b = 0.0;
  double jitter_sigma = 0.0;        // s
  double duration = 0.0;            // s
  std::uint64_t seed = 0;

  void validate() const {
    for (double r : {pair_rate, background_rate_a, background_rate_b})
      if (!std::isfinite(r) || r < 0.0) throw config_error("rates must be non-negative");
    for (double eta : {efficiency_a, efficiency_b})
      if (!std::isfinite(eta) || eta < 0.0 || eta > 1.0)
        throw config_error("efficiencies must lie in [0, 1]");
    if (!std::isfinite(jitter_sigma) || jitter_sigma < 0.0)
      throw config_error("jitter sigma must be non-negative");
    if (!std::isfinite(duration) || duration < 0.0)
      throw config_error("duration must be non-negative");
  }
};

namespace detail {

inline std::vector<double> poisson_process(double rate, double duration, std::mt19937_64& eng) {
  std::vector<double> times;
  if (rate <= 0.0 || duration <= 0.0) return times;
  times.reserve(std::size_t(rate * duration * 1.1) + 16);
  std::exponential_distribution<double> gap(rate);
  for (double t = gap(eng); t < duration; t += gap(eng)) times.push_back(t);
  return times;
}

}  // namespace detail

/// Synthesizes the two arm streams. Substreams of the seed drive pair
/// emission, the two thinning sequences, the two jitter sequences, and the
/// two backgrounds, so the arms are reproducible independently of each
/// other. Jittered tags falling outside [0, duration] are dropped.
inline std::pair<TagStream, TagStream> generate_tags(const GenSpec& spec) {
  spec.validate();
  const double T = spec.duration;
  const std::int64_t t_max = std::llround(T * 1e12);

  auto eng_pairs = substream_engine(spec.seed, 0);
  auto eng_keep_a = substream_engine(spec.seed, 1);
  auto eng_keep_b = substream_engine(spec.seed, 2);
  auto eng_jit_a = substream_engine(spec.seed, 3);
  auto eng_jit_b = substream_engine(spec.seed, 4);
  auto eng_bg_a = substream_engine(spec.seed, 5);
  auto eng_bg_b = substream_engine(spec.seed, 6);

  const std::vector<double> pairs = detail::poisson_process(spec.pair_rate, T, eng_pairs);

  std::bernoulli_distribution keep_a(spec.efficiency_a);
  std::bernoulli_distribution keep_b(spec.efficiency_b);
  std::normal_distribution<double> jitter(0.0, spec.jitter_sigma > 0.0 ? spec.jitter_sigma : 1.0);

  TagStream a, b;
  a.detector_id = 0;
  b.detector_id = 1;
  a.timestamps.reserve(pairs.size() + 16);
  b.timestamps.reserve(pairs.size() + 16);

  auto emit = [&](std::vector<std::int64_t>& out, double t, std::mt19937_64& jit_eng) {
    if (spec.jitter_sigma > 0.0) t += jitter(jit_eng);
    const std::int64_t ps = std::llround(t * 1e12);
    if (ps >= 0 && ps <= t_max) out.push_back(ps);
  };

  for (double t : pairs) {
    const bool in_a = spec.efficiency_a >= 1.0 || keep_a(eng_keep_a);
    const bool in_b = spec.efficiency_b >= 1.0 || keep_b(eng_keep_b);
    if (in_a) emit(a.timestamps, t, eng_jit_a);
    if (in_b) emit(b.timestamps, t, eng_jit_b);
  }
  for (double t : detail::poisson_process(spec.background_rate_a, T, eng_bg_a))
    a.timestamps.push_back(std::llround(t * 1e12));
  for (double t : detail::poisson_process(spec.background_rate_b, T, eng_bg_b))
    b.timestamps.push_back(std::llround(t * 1e12));

  if (!std::is_sorted(a.timestamps.begin(), a.timestamps.end()))
    std::sort(a.timestamps.begin(), a.timestamps.end());
  if (!std::is_sorted(b.timestamps.begin(), b.timestamps.end()))
    std::sort(b.timestamps.begin(), b.timestamps.end());

  a.meta = {spec.pair_rate, spec.pair_rate * spec.efficiency_a + spec.background_rate_a, T,
            spec.seed};
  b.meta = {spec.pair_rate, spec.pair_rate * spec.efficiency_b + spec.background_rate_b, T,
            spec.seed};
  return {std::move(a), std::move(b)};
}

// ---------------------------------------------------------------------------
// Correlation
// ---------------------------------------------------------------------------

struct CoincidenceResult {
  std::uint64_t coincidences = 0;
  std::uint64_t singles_a = 0;
  std::uint64_t singles_b = 0;
  double window = 0.0;              // s
  double accidental_estimate = 0.0; // expected accidental count over the run
  double duration = 0.0;            // s
};

/// Expected accidental coincidence rate of two independent streams with a
/// symmetric |dt| <= window acceptance: r_a * r_b * 2 * window.
inline double accidental_estimate(double rate_a, double rate_b, double window) {
  if (rate_a < 0.0 || rate_b < 0.0 || window < 0.0)
    throw config_error("accidental estimate needs non-negative inputs");
  return rate_a * rate_b * 2.0 * window;
}

/// Counts coincidences |t_a - t_b| <= window in a single forward pass over
/// both sorted streams. Greedy earliest-match pairing: each tag participates
/// in at most one coincidence, so the count never exceeds min(singles).
inline CoincidenceResult correlate(const TagStream& a, const TagStream& b, double window) {
  if (!(window > 0.0) || !std::isfinite(window))
    throw config_error("coincidence window must be positive");
  a.validate();
  b.validate();
  const std::int64_t w = std::llround(window * 1e12);

  std::uint64_t count = 0;
  std::size_t i = 0, j = 0;
  const auto& ta = a.timestamps;
  const auto& tb = b.timestamps;
  while (i < ta.size() && j < tb.size()) {
    const std::int64_t dt = ta[i] - tb[j];
    if (dt > w) {
      ++j;
    } else if (dt < -w) {
      ++i;
    } else {
      ++count;
      ++i;
      ++j;
    }
  }

  CoincidenceResult res;
  res.coincidences = count;
  res.singles_a = ta.size();
  res.singles_b = tb.size();
  res.window = window;
  res.duration = std::max(a.duration_seconds(), b.duration_seconds());
  if (res.duration > 0.0) {
    const double ra = double(res.singles_a) / res.duration;
    const double rb = double(res.singles_b) / res.duration;
    res.accidental_estimate = accidental_estimate(ra, rb, window) * res.duration;
  }
  return res;
}

// ---------------------------------------------------------------------------
// Statistical closure check
// ---------------------------------------------------------------------------

/// Comparison of one synthetic run against the analytic expectations; z is
/// (observed - expected)/sqrt(expected). |z| <= 4 is the healthy range.
struct RateCheckReport {
  CoincidenceResult result;
  double expected_coincidences = 0.0;
  double expected_singles_a = 0.0;
  double expected_singles_b = 0.0;
  double z_coincidences = 0.0;
  double z_singles_a = 0.0;
  double z_singles_b = 0.0;
  double max_abs_z = 0.0;
};

inline RateCheckReport empirical_rate_check(const GenSpec& spec, double window) {
  const auto [a, b] = generate_tags(spec);
  RateCheckReport rep;
  rep.result = correlate(a, b, window);

  const double T = spec.duration;
  const double rate_a = spec.pair_rate * spec.efficiency_a + spec.background_rate_a;
  const double rate_b = spec.pair_rate * spec.efficiency_b + spec.background_rate_b;
  rep.expected_singles_a = rate_a * T;
  rep.expected_singles_b = rate_b * T;
  rep.expected_coincidences = spec.pair_rate * spec.efficiency_a * spec.efficiency_b * T +
                              accidental_estimate(rate_a, rate_b, window) * T;

  auto z = [](double observed, double expected) {
    if (expected <= 0.0) return observed > 0.0 ? std::numeric_limits<double>::infinity() : 0.0;
    return (observed - expected) / std::sqrt(expected);
  };
  rep.z_coincidences = z(double(rep.result.coincidences), rep.expected_coincidences);
  rep.z_singles_a = z(double(rep.result.singles_a), rep.expected_singles_a);
  rep.z_singles_b = z(double(rep.result.singles_b), rep.expected_singles_b);
  rep.max_abs_z = std::max({std::abs(rep.z_coincidences), std::abs(rep.z_singles_a),
                            std::abs(rep.z_singles_b)});
  return rep;
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------
//
// Binary layout, little-endian:
//   0  4 bytes  magic "BTAG"
//   4  u16      format version (1)
//   6  u16      detector id
//   8  u64      tag count
//   16 i64[n]   timestamps in picoseconds

namespace detail {

inline void put_le(std::ostream& out, std::uint64_t v, int bytes) {
  char buf[8];
  for (int i = 0; i < bytes; ++i) buf[i] = char((v >> (8 * i)) & 0xFF);
  out.write(buf, bytes);
}

inline std::uint64_t get_le(std::istream& in, int bytes, const char* what) {
  unsigned char buf[8] = {};
  in.read(reinterpret_cast<char*>(buf), bytes);
  if (!in) throw data_error(std::string("truncated tag stream while reading ") + what);
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) v |= std::uint64_t(buf[i]) << (8 * i);
  return v;
}

}  // namespace detail

inline void write_tag_stream(const TagStream& stream, std::ostream& out) {
  stream.validate();
  out.write("BTAG", 4);
  detail::put_le(out, 1, 2);
  detail::put_le(out, stream.detector_id, 2);
  detail::put_le(out, stream.timestamps.size(), 8);
  for (std::int64_t t : stream.timestamps)
    detail::put_le(out, static_cast<std::uint64_t>(t), 8);
  if (!out) throw data_error("failed writing tag stream");
}

inline TagStream read_tag_stream(std::istream& in) {
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "BTAG", 4) != 0)
    throw data_error("not a tag stream: bad magic");
  const auto version = detail::get_le(in, 2, "version");
  if (version != 1) throw data_error("unsupported tag stream version " + std::to_string(version));
  TagStream stream;
  stream.detector_id = std::uint16_t(detail::get_le(in, 2, "detector id"));
  const std::uint64_t count = detail::get_le(in, 8, "count");
  stream.timestamps.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i)
    stream.timestamps.push_back(
        static_cast<std::int64_t>(detail::get_le(in, 8, "timestamps")));
  stream.validate();
  return stream;
}

inline void write_tag_stream_csv(const TagStream& stream, std::ostream& out) {
  stream.validate();
  out << "# detector_id = " << stream.detector_id << "\n";
  out << "timestamp_ps\n";
  for (std::int64_t t : stream.timestamps) out << t << "\n";
}

inline TagStream read_tag_stream_csv(std::istream& in) {
  TagStream stream;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line == "timestamp_ps") continue;
    if (line[0] == '#') {
      const auto eq = line.find('=');
      if (eq != std::string::npos && line.find("detector_id") != std::string::npos)
        stream.detector_id = std::uint16_t(std::stoul(line.substr(eq + 1)));
      continue;
    }
    try {
      stream.timestamps.push_back(std::stoll(line));
    } catch (const std::exception&) {
      throw data_error("tag CSV line " + std::to_string(lineno) + ": not an integer");
    }
  }
  stream.validate();
  return stream;
}

}  // namespace biphoton
